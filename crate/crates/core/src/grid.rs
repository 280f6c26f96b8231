//! Cell-centered rectangular grids with homogeneous Neumann boundaries.
//!
//! Cells are stored row-major with `x` fastest: cell `(i, j)` lives at
//! index `j * nx + i`. A 1D grid has a single row (`ny = 1`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct Grid {
    dim: usize,
    extents: [f64; 2],
    cells: [usize; 2],
    spacing: [f64; 2],
}

/// Serialized form of a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub extents: Vec<f64>,
    pub cells: Vec<usize>,
}

impl TryFrom<GridSpec> for Grid {
    type Error = Error;

    fn try_from(s: GridSpec) -> Result<Self> {
        if s.extents.len() != s.dim || s.cells.len() != s.dim {
            return Err(Error::Domain(format!(
                "grid of dim {} needs {} extents and cell counts",
                s.dim, s.dim
            )));
        }
        match s.dim {
            1 => Grid::new_1d(s.extents[0], s.cells[0]),
            2 => Grid::new_2d([s.extents[0], s.extents[1]], [s.cells[0], s.cells[1]]),
            d => Err(Error::Domain(format!("grid dim must be 1 or 2, got {d}"))),
        }
    }
}

impl From<Grid> for GridSpec {
    fn from(g: Grid) -> Self {
        GridSpec {
            dim: g.dim,
            extents: g.extents[..g.dim].to_vec(),
            cells: g.cells[..g.dim].to_vec(),
        }
    }
}

impl Grid {
    pub fn new_1d(length: f64, n: usize) -> Result<Self> {
        check_axis(length, n)?;
        Ok(Self {
            dim: 1,
            extents: [length, 1.0],
            cells: [n, 1],
            spacing: [length / n as f64, 1.0],
        })
    }

    pub fn new_2d(extents: [f64; 2], cells: [usize; 2]) -> Result<Self> {
        check_axis(extents[0], cells[0])?;
        check_axis(extents[1], cells[1])?;
        Ok(Self {
            dim: 2,
            extents,
            cells,
            spacing: [extents[0] / cells[0] as f64, extents[1] / cells[1] as f64],
        })
    }

    /// Unit interval or unit square with `n` cells per direction.
    pub fn unit(dim: usize, n: usize) -> Result<Self> {
        match dim {
            1 => Self::new_1d(1.0, n),
            2 => Self::new_2d([1.0, 1.0], [n, n]),
            d => Err(Error::Domain(format!("grid dim must be 1 or 2, got {d}"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nx(&self) -> usize {
        self.cells[0]
    }

    pub fn ny(&self) -> usize {
        self.cells[1]
    }

    pub fn hx(&self) -> f64 {
        self.spacing[0]
    }

    pub fn hy(&self) -> f64 {
        self.spacing[1]
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents[..self.dim]
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.dim]
    }

    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h_min(&self) -> f64 {
        self.spacing().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().iter().product()
    }

    /// `|Omega|`.
    pub fn measure(&self) -> f64 {
        self.extents().iter().product()
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.cells[0] + i
    }

    /// Cell center; the `y` coordinate is 0 on 1D grids.
    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        let x = (i as f64 + 0.5) * self.spacing[0];
        let y = if self.dim == 2 {
            (j as f64 + 0.5) * self.spacing[1]
        } else {
            0.0
        };
        (x, y)
    }

    /// Grid with the cell count doubled in every direction.
    pub fn refined(&self) -> Self {
        match self.dim {
            1 => Self::new_1d(self.extents[0], 2 * self.cells[0]).expect("valid refinement"),
            _ => Self::new_2d(self.extents, [2 * self.cells[0], 2 * self.cells[1]])
                .expect("valid refinement"),
        }
    }
}

fn check_axis(length: f64, n: usize) -> Result<()> {
    if !(length > 0.0) || !length.is_finite() {
        return Err(Error::Domain(format!("grid extent must be > 0, got {length}")));
    }
    if n == 0 {
        return Err(Error::Domain("grid needs at least one cell per direction".into()));
    }
    Ok(())
}

/// One scalar unknown on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    shape: [usize; 2],
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(g: &Grid) -> Self {
        Self::constant(g, 0.0)
    }

    pub fn constant(g: &Grid, c: f64) -> Self {
        Self {
            shape: g.cells,
            values: vec![c; g.len()],
        }
    }

    pub fn from_fn(g: &Grid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(g.len());
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                let (x, y) = g.center(i, j);
                values.push(f(x, y));
            }
        }
        Self {
            shape: g.cells,
            values,
        }
    }

    pub fn from_vec(g: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != g.len() {
            return Err(Error::Contract(format!(
                "field has {} values, grid has {} cells",
                values.len(),
                g.len()
            )));
        }
        Ok(Self {
            shape: g.cells,
            values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_on(&self, g: &Grid) -> bool {
        self.shape == g.cells && self.values.len() == g.len()
    }

    pub fn check_on(&self, g: &Grid) -> Result<()> {
        if self.is_on(g) {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "field of shape {:?} used on grid with cells {:?}",
                self.shape,
                g.cells()
            )))
        }
    }

    /// First non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|x| !x.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            values: self.values.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl std::ops::Index<usize> for Field {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.values[k]
    }
}

impl std::ops::IndexMut<usize> for Field {
    fn index_mut(&mut self, k: usize) -> &mut f64 {
        &mut self.values[k]
    }
}

/// Deterministic pairwise summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise sum of `f(x)` without an intermediate buffer for small inputs.
fn pairwise_sum_map(xs: &[f64], f: &impl Fn(f64) -> f64) -> f64 {
    const BLOCK: usize = 64;
    if xs.len() <= BLOCK {
        return xs.iter().map(|&x| f(x)).sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum_map(&xs[..mid], f) + pairwise_sum_map(&xs[mid..], f)
}

/// Midpoint-rule integral over the domain.
pub fn integrate(f: &Field, g: &Grid) -> f64 {
    assert!(f.is_on(g), "integrate: field not on grid");
    g.cell_volume() * pairwise_sum(f.values())
}

/// Midpoint-rule integral of `h(f)`.
pub fn integrate_map(f: &Field, g: &Grid, h: impl Fn(f64) -> f64) -> f64 {
    assert!(f.is_on(g), "integrate: field not on grid");
    g.cell_volume() * pairwise_sum_map(f.values(), &h)
}

pub fn lp_norm(f: &Field, p: f64, g: &Grid) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("L^p norm needs p >= 1, got {p}")));
    }
    f.check_on(g)?;
    if p == 1.0 {
        return Ok(integrate_map(f, g, f64::abs));
    }
    // scale by the sup norm so large p does not overflow
    let scale = linf_norm(f);
    if scale == 0.0 {
        return Ok(0.0);
    }
    let s = integrate_map(f, g, |x| (x.abs() / scale).powf(p));
    Ok(scale * s.powf(1.0 / p))
}

pub fn linf_norm(f: &Field) -> f64 {
    f.values().iter().fold(0.0, |acc, x| acc.max(x.abs()))
}
