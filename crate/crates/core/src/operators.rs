//! Flux-form spatial operators on cell-centered grids.
//!
//! Every divergence is assembled from normal fluxes on interior faces only.
//! Boundary faces carry no flux, so homogeneous Neumann conditions and
//! discrete conservation hold by construction.

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::model::DiffusionSpec;

/// Normal fluxes on the interior faces of a grid.
///
/// `x` holds the faces between `(i, j)` and `(i + 1, j)`, indexed
/// `j * (nx - 1) + i`; `y` holds the faces between `(i, j)` and `(i, j + 1)`,
/// indexed `j * nx + i`. Boundary faces are not stored; their flux is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceFluxSet {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl FaceFluxSet {
    fn zeros(g: &Grid) -> Self {
        let nx = g.nx();
        let ny = g.ny();
        let ny_faces = if g.dim() == 2 { nx * (ny - 1) } else { 0 };
        Self {
            x: vec![0.0; ny * (nx - 1)],
            y: vec![0.0; ny_faces],
        }
    }

    /// Fills each face with `flux(a, b, h)` for the face between cells
    /// `a` (low side) and `b` (high side) with normal spacing `h`.
    pub(crate) fn build(g: &Grid, mut flux: impl FnMut(usize, usize, f64) -> f64) -> Self {
        let mut set = Self::zeros(g);
        let (mut kx, mut ky) = (0, 0);
        for_each_face(g, |a, b, h, along_x| {
            if along_x {
                set.x[kx] = flux(a, b, h);
                kx += 1;
            } else {
                set.y[ky] = flux(a, b, h);
                ky += 1;
            }
        });
        set
    }

    /// Discrete divergence: `(F_out - F_in) / h` summed over directions.
    pub fn divergence(&self, g: &Grid) -> Field {
        let mut out = Field::zeros(g);
        self.add_divergence(g, 1.0, out.values_mut());
        out
    }

    /// `out += scale * div F`.
    pub fn add_divergence(&self, g: &Grid, scale: f64, out: &mut [f64]) {
        let nx = g.nx();
        let sx = scale / g.hx();
        for j in 0..g.ny() {
            let row = j * nx;
            let frow = j * (nx - 1);
            for i in 0..nx - 1 {
                let f = sx * self.x[frow + i];
                out[row + i] += f;
                out[row + i + 1] -= f;
            }
        }
        if g.dim() == 2 {
            let sy = scale / g.hy();
            for (k, &f) in self.y.iter().enumerate() {
                let f = sy * f;
                out[k] += f;
                out[k + nx] -= f;
            }
        }
    }

    /// `sum_faces F * (phi_b - phi_a) / h * |cell|`, the discrete
    /// counterpart of `int F . grad(phi)`. Equals `-integrate(div F * phi)`
    /// exactly in exact arithmetic.
    pub fn pair_with_gradient(&self, phi: &Field, g: &Grid) -> f64 {
        let nx = g.nx();
        let p = phi.values();
        let mut sx = 0.0;
        for j in 0..g.ny() {
            let row = j * nx;
            let frow = j * (nx - 1);
            for i in 0..nx - 1 {
                sx += self.x[frow + i] * (p[row + i + 1] - p[row + i]);
            }
        }
        let mut total = sx / g.hx();
        if g.dim() == 2 {
            let mut sy = 0.0;
            for (k, &f) in self.y.iter().enumerate() {
                sy += f * (p[k + nx] - p[k]);
            }
            total += sy / g.hy();
        }
        total * g.cell_volume()
    }

    pub fn max_abs(&self) -> f64 {
        self.x
            .iter()
            .chain(&self.y)
            .fold(0.0, |acc, f| acc.max(f.abs()))
    }
}

/// Visits every interior face as `(a, b, h, along_x)` in [`FaceFluxSet`]
/// storage order: all `x` faces first, then all `y` faces.
pub(crate) fn for_each_face(g: &Grid, mut visit: impl FnMut(usize, usize, f64, bool)) {
    let nx = g.nx();
    let hx = g.hx();
    for j in 0..g.ny() {
        let row = j * nx;
        for i in 0..nx - 1 {
            visit(row + i, row + i + 1, hx, true);
        }
    }
    if g.dim() == 2 {
        let hy = g.hy();
        for k in 0..nx * (g.ny() - 1) {
            visit(k, k + nx, hy, false);
        }
    }
}

/// Face gradients `(f_b - f_a) / h`.
pub fn gradient_fluxes(f: &Field, g: &Grid) -> FaceFluxSet {
    let v = f.values();
    FaceFluxSet::build(g, |a, b, h| (v[b] - v[a]) / h)
}

/// `D_face (u_b - u_a) / h` with `D_face` the arithmetic mean of `D` at the
/// two adjacent cells.
pub fn diffusion_fluxes(u: &Field, spec: &DiffusionSpec, g: &Grid) -> Result<FaceFluxSet> {
    u.check_on(g)?;
    let d = cell_diffusivity(u, spec)?;
    let v = u.values();
    Ok(FaceFluxSet::build(g, |a, b, h| {
        0.5 * (d[a] + d[b]) * (v[b] - v[a]) / h
    }))
}

/// Upwind fluxes `u_donor * (psi_b - psi_a) / h` where the donor is the cell
/// the face velocity points away from.
pub fn taxis_fluxes(u: &Field, psi: &Field, g: &Grid) -> FaceFluxSet {
    let uv = u.values();
    let pv = psi.values();
    FaceFluxSet::build(g, |a, b, h| {
        let vel = (pv[b] - pv[a]) / h;
        let donor = if vel > 0.0 { uv[a] } else { uv[b] };
        donor * vel
    })
}

/// `D(u)` per cell; rejects negative densities.
pub fn cell_diffusivity(u: &Field, spec: &DiffusionSpec) -> Result<Vec<f64>> {
    u.values()
        .iter()
        .enumerate()
        .map(|(cell, &s)| {
            if s >= 0.0 {
                Ok(spec.eval_unchecked(s))
            } else {
                Err(Error::NegativeDensity { cell, value: s })
            }
        })
        .collect()
}

/// Arithmetic-mean face diffusivities, laid out like [`FaceFluxSet`].
pub fn face_diffusivity(u: &Field, spec: &DiffusionSpec, g: &Grid) -> Result<FaceFluxSet> {
    let d = cell_diffusivity(u, spec)?;
    Ok(FaceFluxSet::build(g, |a, b, _| 0.5 * (d[a] + d[b])))
}

/// Neumann Laplacian (3-point / 5-point stencil with reflected ghosts).
pub fn laplacian(f: &Field, g: &Grid) -> Field {
    assert!(f.is_on(g), "laplacian: field not on grid");
    gradient_fluxes(f, g).divergence(g)
}

/// `div(D(u) grad u)` in flux form.
pub fn diffusion_divergence(u: &Field, spec: &DiffusionSpec, g: &Grid) -> Result<Field> {
    Ok(diffusion_fluxes(u, spec, g)?.divergence(g))
}

/// Unsigned `div(u grad psi)` with first-order upwinding; callers apply the
/// `-chi` / `-xi` prefactor.
pub fn taxis_divergence(u: &Field, psi: &Field, g: &Grid) -> Field {
    assert!(u.is_on(g) && psi.is_on(g), "taxis_divergence: field not on grid");
    taxis_fluxes(u, psi, g).divergence(g)
}

/// Cell-centered `|grad f|^2` from central differences; the reflected ghost
/// makes the boundary-normal difference `(f_1 - f_0) / (2h)`.
pub fn grad_mag_sq(f: &Field, g: &Grid) -> Field {
    assert!(f.is_on(g), "grad_mag_sq: field not on grid");
    let nx = g.nx();
    let ny = g.ny();
    let v = f.values();
    let mut out = Field::zeros(g);
    let o = out.values_mut();
    let inv2hx = 0.5 / g.hx();
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx {
            let left = v[row + i.saturating_sub(1)];
            let right = v[row + (i + 1).min(nx - 1)];
            let d = (right - left) * inv2hx;
            o[row + i] = d * d;
        }
    }
    if g.dim() == 2 {
        let inv2hy = 0.5 / g.hy();
        for j in 0..ny {
            let down = j.saturating_sub(1) * nx;
            let up = (j + 1).min(ny - 1) * nx;
            for i in 0..nx {
                let d = (v[up + i] - v[down + i]) * inv2hy;
                o[j * nx + i] += d * d;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{integrate, linf_norm};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn max_err(a: &Field, b: &Field) -> f64 {
        a.values()
            .iter()
            .zip(b.values())
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let g = Grid::new_2d([1.0, 2.0], [7, 5]).unwrap();
        let out = laplacian(&Field::constant(&g, 3.5), &g);
        assert_eq!(linf_norm(&out), 0.0);
    }

    #[test]
    fn laplacian_eigenfunction() {
        let g = Grid::unit(1, 256).unwrap();
        let f = Field::from_fn(&g, |x, _| (PI * x).cos());
        let exact = f.map(|c| -PI * PI * c);
        assert!(max_err(&laplacian(&f, &g), &exact) <= 1e-3);
    }

    #[test]
    fn laplacian_of_linear_profile() {
        let n = 8;
        let g = Grid::unit(1, n).unwrap();
        let h = g.hx();
        let f = Field::from_fn(&g, |x, _| x);
        let out = laplacian(&f, &g);
        // ghost equals the boundary cell: first cell sees (f1 - f0)/h^2 = 1/h
        assert!((out[0] - 1.0 / h).abs() < 1e-10);
        assert!((out[n - 1] + 1.0 / h).abs() < 1e-10);
        for k in 1..n - 1 {
            assert!(out[k].abs() < 1e-10);
        }
    }

    #[test]
    fn linear_diffusion_matches_laplacian() {
        let g = Grid::unit(2, 9).unwrap();
        let spec = DiffusionSpec::power_law(1.0, 1.0).unwrap();
        let u = Field::from_fn(&g, |x, y| 1.0 + x * x + (3.0 * y).sin().abs());
        assert_eq!(
            diffusion_divergence(&u, &spec, &g).unwrap(),
            laplacian(&u, &g)
        );
        let c = Field::constant(&g, 2.0);
        let spec2 = DiffusionSpec::power_law(1.0, 2.0).unwrap();
        assert_eq!(linf_norm(&diffusion_divergence(&c, &spec2, &g).unwrap()), 0.0);
    }

    #[test]
    fn diffusion_rejects_negative_density() {
        let g = Grid::unit(1, 4).unwrap();
        let u = Field::from_vec(&g, vec![1.0, 0.0, -0.5, 1.0]).unwrap();
        let spec = DiffusionSpec::power_law(1.0, 2.0).unwrap();
        match diffusion_divergence(&u, &spec, &g) {
            Err(Error::NegativeDensity { cell, .. }) => assert_eq!(cell, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn taxis_constant_potential_and_unit_density() {
        let g = Grid::unit(2, 6).unwrap();
        let u = Field::from_fn(&g, |x, y| x + y);
        assert_eq!(linf_norm(&taxis_divergence(&u, &Field::constant(&g, 4.0), &g)), 0.0);
        let psi = Field::from_fn(&g, |x, y| (2.0 * x).sin() * y);
        assert_eq!(
            taxis_divergence(&Field::constant(&g, 1.0), &psi, &g),
            laplacian(&psi, &g)
        );
    }

    #[test]
    fn taxis_three_cell_hand_stencil() {
        let g = Grid::new_1d(3.0, 3).unwrap();
        // attractant peak in the center: donors on both faces are the empty
        // outer cells, so nothing moves
        let u = Field::from_vec(&g, vec![0.0, 1.0, 0.0]).unwrap();
        let psi = Field::from_vec(&g, vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(taxis_divergence(&u, &psi, &g).values(), &[0.0, 0.0, 0.0]);
        // attractant on the sides: the center donates through both faces,
        // fluxes -1 and +1, divergence (-1, 2, -1)
        let psi = Field::from_vec(&g, vec![1.0, 0.0, 1.0]).unwrap();
        assert_eq!(taxis_divergence(&u, &psi, &g).values(), &[-1.0, 2.0, -1.0]);
    }

    #[test]
    fn grad_mag_sq_examples() {
        let g = Grid::unit(1, 32).unwrap();
        assert_eq!(linf_norm(&grad_mag_sq(&Field::constant(&g, 2.0), &g)), 0.0);
        let lin = grad_mag_sq(&Field::from_fn(&g, |x, _| x), &g);
        for k in 1..31 {
            assert!((lin[k] - 1.0).abs() < 1e-12);
        }
        let g = Grid::unit(1, 256).unwrap();
        let f = Field::from_fn(&g, |x, _| (PI * x).cos());
        let got = grad_mag_sq(&f, &g);
        let exact = Field::from_fn(&g, |x, _| (PI * (PI * x).sin()).powi(2));
        let err = (1..255).fold(0.0f64, |m, k| m.max((got[k] - exact[k]).abs()));
        assert!(err <= 1e-3, "err {err}");
    }

    #[test]
    fn laplacian_commutes_with_reflection() {
        let g = Grid::new_2d([1.0, 1.0], [5, 4]).unwrap();
        let f = Field::from_fn(&g, |x, y| (3.0 * x).exp() + y * y * x);
        let mirrored = {
            let mut m = Field::zeros(&g);
            for j in 0..4 {
                for i in 0..5 {
                    m[g.idx(4 - i, j)] = f[g.idx(i, j)];
                }
            }
            m
        };
        let lf = laplacian(&f, &g);
        let lm = laplacian(&mirrored, &g);
        for j in 0..4 {
            for i in 0..5 {
                assert!((lm[g.idx(4 - i, j)] - lf[g.idx(i, j)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pairing_is_summation_by_parts() {
        let g = Grid::new_2d([1.0, 1.5], [6, 7]).unwrap();
        let u = Field::from_fn(&g, |x, y| 1.0 + x * y);
        let psi = Field::from_fn(&g, |x, y| (x - y).sin());
        let phi = Field::from_fn(&g, |x, y| (PI * x).cos() * (PI * y / 1.5).cos());
        let flux = taxis_fluxes(&u, &psi, &g);
        let div = flux.divergence(&g);
        let lhs = flux.pair_with_gradient(&phi, &g);
        let prod = Field::from_vec(
            &g,
            div.values().iter().zip(phi.values()).map(|(a, b)| a * b).collect(),
        )
        .unwrap();
        assert!((lhs + integrate(&prod, &g)).abs() < 1e-12);
    }

    fn cells(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..5.0, n)
    }

    fn rel_zero(x: f64, f: &Field) -> bool {
        let scale: f64 = f.values().iter().map(|v| v.abs()).sum::<f64>() + 1.0;
        x.abs() <= 1e-12 * scale
    }

    proptest! {
        #[test]
        fn operators_conserve(u in cells(30), psi in cells(30), m in 1.0f64..3.0) {
            let g = Grid::new_2d([1.0, 0.5], [6, 5]).unwrap();
            let u = Field::from_vec(&g, u).unwrap();
            let psi = Field::from_vec(&g, psi).unwrap();
            let spec = DiffusionSpec::power_law(1.0, m).unwrap();
            let ops = [
                laplacian(&u, &g),
                diffusion_divergence(&u, &spec, &g).unwrap(),
                taxis_divergence(&u, &psi, &g),
            ];
            for out in &ops {
                prop_assert!(rel_zero(crate::grid::integrate(out, &g) / g.cell_volume(), out));
            }
        }

        #[test]
        fn upwind_step_keeps_positivity(u in cells(20), psi in cells(20), chi in 0.0f64..5.0) {
            let g = Grid::new_1d(1.0, 20).unwrap();
            let u = Field::from_vec(&g, u).unwrap();
            let psi = Field::from_vec(&g, psi).unwrap();
            let spec = DiffusionSpec::power_law(1.0, 2.0).unwrap();
            let h = g.hx();
            let dmax = u.values().iter().map(|&s| spec.eval_unchecked(s)).fold(0.0, f64::max);
            let vmax = gradient_fluxes(&psi, &g).max_abs() * chi;
            let mut dt = f64::INFINITY;
            if dmax > 0.0 { dt = dt.min(0.4 * h * h / (2.0 * dmax)); }
            if vmax > 0.0 { dt = dt.min(0.25 * h / vmax); }
            if !dt.is_finite() { dt = 1.0; }
            let diff = diffusion_divergence(&u, &spec, &g).unwrap();
            let tax = taxis_divergence(&u, &psi, &g);
            for k in 0..20 {
                let next = u[k] + dt * diff[k] - dt * chi * tax[k];
                prop_assert!(next >= -1e-12 * (1.0 + u[k]));
            }
        }
    }
}
