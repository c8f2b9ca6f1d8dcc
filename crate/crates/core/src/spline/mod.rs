//! Hierarchical B-spline spaces on the unit square.

mod boundary;
mod function;
mod knots;
mod space;

pub use boundary::{BoundaryIndexSet, Side, SideCell};
pub use function::SplineFunction;
pub use knots::{KnotVector, LocalDers, MAX_DEGREE, MAX_DERIV};
pub use space::{deriv_slots, BasisValues, Cell, FunctionKey, HierarchicalSpace, DEFAULT_MAX_LEVELS};
