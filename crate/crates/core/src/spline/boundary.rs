use alloc::vec;
use alloc::vec::Vec;

use super::space::HierarchicalSpace;

/// Sides of the unit square, counter-clockwise from the bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    South,
    East,
    North,
    West,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::South, Side::East, Side::North, Side::West];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Parametric point of the side at arc parameter `s` in `[0, 1]`.
    /// South and north run in `xi`, east and west in `eta`.
    pub fn point(self, s: f64) -> [f64; 2] {
        match self {
            Side::South => [s, 0.0],
            Side::East => [1.0, s],
            Side::North => [s, 1.0],
            Side::West => [0.0, s],
        }
    }

    /// Parametric direction (0 for `xi`, 1 for `eta`) running along the side.
    pub fn tangent_dir(self) -> usize {
        match self {
            Side::South | Side::North => 0,
            Side::East | Side::West => 1,
        }
    }
}

/// One active boundary element restricted to a side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideCell {
    pub cell: usize,
    pub s0: f64,
    pub s1: f64,
}

/// Partition of the active functions into those with a nonzero trace on the
/// boundary and the rest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryIndexSet {
    boundary: Vec<usize>,
    inner: Vec<usize>,
    /// For each global function: `(is_boundary, position within its set)`.
    slot: Vec<(bool, usize)>,
}

impl BoundaryIndexSet {
    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn inner(&self) -> &[usize] {
        &self.inner
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary.len()
    }

    pub fn n_inner(&self) -> usize {
        self.inner.len()
    }

    /// `(is_boundary, position)` of global function `f`.
    pub fn position(&self, f: usize) -> (bool, usize) {
        self.slot[f]
    }
}

impl HierarchicalSpace {
    /// Active elements touching `side`, ordered by the side parameter.
    pub fn side_cells(&self, side: Side) -> Vec<SideCell> {
        let mut out = Vec::new();
        for (id, c) in self.cells().iter().enumerate() {
            let nc = self.level_cells(c.level);
            let on = match side {
                Side::South => c.j == 0,
                Side::North => c.j + 1 == nc[1],
                Side::West => c.i == 0,
                Side::East => c.i + 1 == nc[0],
            };
            if on {
                let b = c.bounds[side.tangent_dir()];
                out.push(SideCell { cell: id, s0: b[0], s1: b[1] });
            }
        }
        out.sort_by(|a, b| a.s0.partial_cmp(&b.s0).unwrap());
        out
    }

    pub fn boundary_decompose(&self) -> BoundaryIndexSet {
        let q = self.degree() + 1;
        let mut on_boundary = vec![false; self.dim()];
        for c in self.cells() {
            let nc = self.level_cells(c.level);
            let sides = [
                (c.j == 0, None, Some(0)),
                (c.i + 1 == nc[0], Some(q - 1), None),
                (c.j + 1 == nc[1], None, Some(q - 1)),
                (c.i == 0, Some(0), None),
            ];
            for (r, &f) in c.functions().iter().enumerate() {
                if on_boundary[f] {
                    continue;
                }
                let row = c.row(r);
                'sides: for &(touch, fx, fy) in &sides {
                    if !touch {
                        continue;
                    }
                    for ly in 0..q {
                        for lx in 0..q {
                            if fx.is_some_and(|v| v != lx) || fy.is_some_and(|v| v != ly) {
                                continue;
                            }
                            if row[ly * q + lx] != 0.0 {
                                on_boundary[f] = true;
                                break 'sides;
                            }
                        }
                    }
                }
            }
        }
        let mut boundary = Vec::new();
        let mut inner = Vec::new();
        let mut slot = Vec::with_capacity(self.dim());
        for (f, &b) in on_boundary.iter().enumerate() {
            if b {
                slot.push((true, boundary.len()));
                boundary.push(f);
            } else {
                slot.push((false, inner.len()));
                inner.push(f);
            }
        }
        BoundaryIndexSet { boundary, inner, slot }
    }
}
