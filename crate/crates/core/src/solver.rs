//! Preconditioned conjugate gradients for the symmetric positive-definite
//! Neumann systems that appear in a time step. Operators that expose their
//! 5-point stencil get a geometric multigrid V-cycle as preconditioner;
//! everything else falls back to Jacobi.

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::operators::FaceFluxSet;

/// Default relative-residual target.
pub const CG_TOLERANCE: f64 = 1e-10;

pub trait SpdOperator {
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
    /// Cell-centered stencil form, if the operator has one.
    fn stencil(&self) -> Option<Stencil> {
        None
    }
}

/// `y_i = a_i x_i + sum_faces k_f (x_i - x_j)` on an `nx * ny` cell grid,
/// stored per cell: `ke[c]` couples `c` to its east neighbour and `kn[c]`
/// to its north neighbour, both zero on the last column or row.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    nx: usize,
    ny: usize,
    a: Vec<f64>,
    ke: Vec<f64>,
    kn: Vec<f64>,
    diag: Vec<f64>,
}

impl Stencil {
    /// `kx` is indexed `j * (nx - 1) + i`, `ky` is indexed `j * nx + i`.
    pub fn from_faces(nx: usize, ny: usize, a: Vec<f64>, kx: &[f64], ky: &[f64]) -> Self {
        let n = nx * ny;
        assert_eq!(a.len(), n);
        assert_eq!(kx.len(), (nx - 1) * ny);
        assert_eq!(ky.len(), nx * (ny - 1));
        let mut ke = vec![0.0; n];
        for j in 0..ny {
            ke[j * nx..j * nx + nx - 1].copy_from_slice(&kx[j * (nx - 1)..(j + 1) * (nx - 1)]);
        }
        let mut kn = vec![0.0; n];
        kn[..n - nx].copy_from_slice(ky);
        Self::from_cells(nx, ny, a, ke, kn)
    }

    fn from_cells(nx: usize, ny: usize, a: Vec<f64>, ke: Vec<f64>, kn: Vec<f64>) -> Self {
        let n = nx * ny;
        let mut diag: Vec<f64> = a.iter().zip(&ke).zip(&kn).map(|((a, e), k)| a + e + k).collect();
        for c in 1..n {
            diag[c] += ke[c - 1];
        }
        for c in nx..n {
            diag[c] += kn[c - nx];
        }
        Self {
            nx,
            ny,
            a,
            ke,
            kn,
            diag,
        }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (n, nx) = (self.len(), self.nx);
        for ((yk, xk), dk) in y.iter_mut().zip(x).zip(&self.diag) {
            *yk = dk * xk;
        }
        for ((yk, k), xk) in y[..n - 1].iter_mut().zip(&self.ke[..n - 1]).zip(&x[1..]) {
            *yk -= k * xk;
        }
        for ((yk, k), xk) in y[1..].iter_mut().zip(&self.ke[..n - 1]).zip(&x[..n - 1]) {
            *yk -= k * xk;
        }
        if self.ny > 1 {
            for ((yk, k), xk) in y[..n - nx].iter_mut().zip(&self.kn[..n - nx]).zip(&x[nx..]) {
                *yk -= k * xk;
            }
            for ((yk, k), xk) in y[nx..].iter_mut().zip(&self.kn[..n - nx]).zip(&x[..n - nx]) {
                *yk -= k * xk;
            }
        }
    }

    fn can_coarsen(&self) -> bool {
        let ok = |n: usize| n.is_multiple_of(2) && n >= 4;
        ok(self.nx) && (self.ny == 1 || ok(self.ny))
    }

    /// Rediscretization on `2h` cells: reaction terms are averaged over the
    /// block, face couplings are averaged over the fine faces a coarse face
    /// covers and divided by 4.
    fn coarsen(&self) -> Stencil {
        let (nx, ny) = (self.nx, self.ny);
        let cx = nx / 2;
        let by = if ny > 1 { 2 } else { 1 };
        let cy = ny / by;
        let avg = 1.0 / (2 * by) as f64;
        let mut a = vec![0.0; cx * cy];
        let mut ke = vec![0.0; cx * cy];
        let mut kn = vec![0.0; cx * cy];
        for j in 0..ny {
            let jc = j / by;
            for ic in 0..cx {
                let f = j * nx + 2 * ic;
                let c = jc * cx + ic;
                a[c] += avg * (self.a[f] + self.a[f + 1]);
                // east face of the coarse cell is the east face of fine cell 2ic+1
                ke[c] += self.ke[f + 1] / (4 * by) as f64;
                if by == 2 && j % 2 == 1 {
                    kn[c] += (self.kn[f] + self.kn[f + 1]) / 8.0;
                }
            }
        }
        Stencil::from_cells(cx, cy, a, ke, kn)
    }
}

struct Level {
    st: Stencil,
    inv_diag: Vec<f64>,
}

/// Geometric V-cycle with damped-Jacobi smoothing and piecewise-constant
/// transfers. Symmetric, so it is a valid CG preconditioner.
struct Multigrid {
    levels: Vec<Level>,
}

const MG_SWEEPS: usize = 2;
const MG_COARSE_SWEEPS: usize = 40;
const MG_OMEGA: f64 = 0.8;

impl Multigrid {
    /// `None` when the grid cannot be coarsened even once.
    fn build(fine: Stencil) -> Option<Self> {
        if !fine.can_coarsen() {
            return None;
        }
        let mut levels = Vec::new();
        let mut st = fine;
        loop {
            let next = (st.can_coarsen() && st.len() > 16).then(|| st.coarsen());
            let inv_diag = st.diag.iter().map(|d| 1.0 / d).collect();
            levels.push(Level { st, inv_diag });
            match next {
                Some(n) => st = n,
                None => break,
            }
        }
        Some(Self { levels })
    }

    fn smooth(l: &Level, b: &[f64], x: &mut [f64], tmp: &mut [f64], sweeps: usize) {
        for _ in 0..sweeps {
            l.st.apply(x, tmp);
            for (((xk, bk), tk), dk) in x.iter_mut().zip(b).zip(tmp.iter()).zip(&l.inv_diag) {
                *xk += MG_OMEGA * dk * (bk - tk);
            }
        }
    }

    fn vcycle(&self, depth: usize, b: &[f64], x: &mut [f64]) {
        let l = &self.levels[depth];
        let n = b.len();
        // first sweep from a zero guess needs no matvec
        for ((xk, bk), dk) in x.iter_mut().zip(b).zip(&l.inv_diag) {
            *xk = MG_OMEGA * dk * bk;
        }
        let mut tmp = vec![0.0; n];
        if depth + 1 == self.levels.len() {
            Self::smooth(l, b, x, &mut tmp, MG_COARSE_SWEEPS - 1);
            return;
        }
        Self::smooth(l, b, x, &mut tmp, MG_SWEEPS - 1);
        l.st.apply(x, &mut tmp);
        let c = &self.levels[depth + 1].st;
        let nx = l.st.nx;
        let by = if l.st.ny > 1 { 2 } else { 1 };
        let w = 1.0 / (2 * by) as f64;
        let mut rc = vec![0.0; c.len()];
        for j in 0..l.st.ny {
            let crow = &mut rc[(j / by) * c.nx..(j / by + 1) * c.nx];
            let fb = &b[j * nx..(j + 1) * nx];
            let ft = &tmp[j * nx..(j + 1) * nx];
            for (ic, rck) in crow.iter_mut().enumerate() {
                *rck += w * (fb[2 * ic] - ft[2 * ic] + fb[2 * ic + 1] - ft[2 * ic + 1]);
            }
        }
        let mut ec = vec![0.0; rc.len()];
        self.vcycle(depth + 1, &rc, &mut ec);
        for j in 0..l.st.ny {
            let crow = &ec[(j / by) * c.nx..(j / by + 1) * c.nx];
            let frow = &mut x[j * nx..(j + 1) * nx];
            for (ic, e) in crow.iter().enumerate() {
                frow[2 * ic] += e;
                frow[2 * ic + 1] += e;
            }
        }
        Self::smooth(l, b, x, &mut tmp, MG_SWEEPS);
    }
}

/// `beta * x - alpha * lap(x)`.
pub struct Helmholtz<'a> {
    pub grid: &'a Grid,
    pub alpha: f64,
    pub beta: f64,
}

impl SpdOperator for Helmholtz<'_> {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let g = self.grid;
        for (yk, xk) in y.iter_mut().zip(x) {
            *yk = self.beta * xk;
        }
        let cx = self.alpha / (g.hx() * g.hx());
        let nx = g.nx();
        for j in 0..g.ny() {
            let row = j * nx;
            for i in 0..nx - 1 {
                let a = row + i;
                let f = cx * (x[a + 1] - x[a]);
                y[a] -= f;
                y[a + 1] += f;
            }
        }
        if g.dim() == 2 {
            let cy = self.alpha / (g.hy() * g.hy());
            for a in 0..nx * (g.ny() - 1) {
                let f = cy * (x[a + nx] - x[a]);
                y[a] -= f;
                y[a + nx] += f;
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let g = self.grid;
        let nx = g.nx();
        let ny = g.ny();
        let cx = self.alpha / (g.hx() * g.hx());
        let cy = if g.dim() == 2 {
            self.alpha / (g.hy() * g.hy())
        } else {
            0.0
        };
        let mut d = Vec::with_capacity(g.len());
        for j in 0..ny {
            for i in 0..nx {
                let nbx = (i > 0) as usize + (i + 1 < nx) as usize;
                let nby = (j > 0) as usize + (j + 1 < ny) as usize;
                d.push(self.beta + cx * nbx as f64 + cy * nby as f64);
            }
        }
        d
    }

    fn stencil(&self) -> Option<Stencil> {
        let g = self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let cy = if g.dim() == 2 {
            self.alpha / (g.hy() * g.hy())
        } else {
            0.0
        };
        Some(Stencil::from_faces(
            nx,
            ny,
            vec![self.beta; nx * ny],
            &vec![self.alpha / (g.hx() * g.hx()); (nx - 1) * ny],
            &vec![cy; nx * (ny - 1)],
        ))
    }
}

/// `diag * x - scale * div(D_face grad x)` with frozen face diffusivities.
pub struct VariableDiffusion<'a> {
    pub grid: &'a Grid,
    pub diag: &'a [f64],
    pub face_d: &'a FaceFluxSet,
    pub scale: f64,
}

impl SpdOperator for VariableDiffusion<'_> {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let g = self.grid;
        for ((yk, xk), dk) in y.iter_mut().zip(x).zip(self.diag) {
            *yk = dk * xk;
        }
        let nx = g.nx();
        let cx = self.scale / (g.hx() * g.hx());
        for j in 0..g.ny() {
            let row = j * nx;
            let frow = j * (nx - 1);
            for i in 0..nx - 1 {
                let a = row + i;
                let f = cx * self.face_d.x[frow + i] * (x[a + 1] - x[a]);
                y[a] -= f;
                y[a + 1] += f;
            }
        }
        if g.dim() == 2 {
            let cy = self.scale / (g.hy() * g.hy());
            for (a, &d) in self.face_d.y.iter().enumerate() {
                let f = cy * d * (x[a + nx] - x[a]);
                y[a] -= f;
                y[a + nx] += f;
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let g = self.grid;
        let nx = g.nx();
        let mut d = self.diag.to_vec();
        let cx = self.scale / (g.hx() * g.hx());
        for j in 0..g.ny() {
            let row = j * nx;
            let frow = j * (nx - 1);
            for i in 0..nx - 1 {
                let c = cx * self.face_d.x[frow + i];
                d[row + i] += c;
                d[row + i + 1] += c;
            }
        }
        if g.dim() == 2 {
            let cy = self.scale / (g.hy() * g.hy());
            for (a, &fd) in self.face_d.y.iter().enumerate() {
                d[a] += cy * fd;
                d[a + nx] += cy * fd;
            }
        }
        d
    }

    fn stencil(&self) -> Option<Stencil> {
        let g = self.grid;
        let cx = self.scale / (g.hx() * g.hx());
        let cy = if g.dim() == 2 {
            self.scale / (g.hy() * g.hy())
        } else {
            0.0
        };
        let kx: Vec<f64> = self.face_d.x.iter().map(|d| cx * d).collect();
        let ky: Vec<f64> = self.face_d.y.iter().map(|d| cy * d).collect();
        Some(Stencil::from_faces(g.nx(), g.ny(), self.diag.to_vec(), &kx, &ky))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CgStats {
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

enum Preconditioner {
    Jacobi(Vec<f64>),
    Multigrid(Multigrid),
}

impl Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Preconditioner::Jacobi(inv) => {
                for ((zk, rk), dk) in z.iter_mut().zip(r).zip(inv) {
                    *zk = rk * dk;
                }
            }
            Preconditioner::Multigrid(mg) => mg.vcycle(0, r, z),
        }
    }
}

/// Solves `A x = b` starting from `x`, to `||r|| <= tol * ||b||`.
/// Fails after `10 * n` iterations.
pub fn conjugate_gradient(
    op: &impl SpdOperator,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
) -> Result<CgStats> {
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats {
            iterations: 0,
            residual: 0.0,
        });
    }
    let stencil = op.stencil();
    let matvec = |x: &[f64], y: &mut [f64]| match &stencil {
        Some(st) => st.apply(x, y),
        None => op.apply(x, y),
    };
    let mut r = vec![0.0; n];
    matvec(x, &mut r);
    for (rk, bk) in r.iter_mut().zip(b) {
        *rk = bk - *rk;
    }
    let mut res = dot(&r, &r).sqrt() / b_norm;
    if res <= tol {
        return Ok(CgStats {
            iterations: 0,
            residual: res,
        });
    }
    let pre = match stencil.clone().and_then(Multigrid::build) {
        Some(mg) => Preconditioner::Multigrid(mg),
        None => Preconditioner::Jacobi(op.diagonal().iter().map(|d| 1.0 / d).collect()),
    };
    let mut z = vec![0.0; n];
    pre.apply(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let cap = 10 * n.max(1);
    for it in 1..=cap {
        matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::SolverFailure {
                iterations: it,
                residual: res,
            });
        }
        let step = rz / pap;
        for k in 0..n {
            x[k] += step * p[k];
            r[k] -= step * ap[k];
        }
        res = dot(&r, &r).sqrt() / b_norm;
        if res <= tol {
            return Ok(CgStats {
                iterations: it,
                residual: res,
            });
        }
        pre.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::SolverFailure {
        iterations: cap,
        residual: res,
    })
}

/// Solves `beta x - alpha lap(x) = rhs` with homogeneous Neumann conditions.
pub fn solve_helmholtz(rhs: &Field, alpha: f64, beta: f64, g: &Grid) -> Result<Field> {
    // rhs / beta is exact on the constant mode
    let mut x = rhs.map(|r| r / beta);
    solve_helmholtz_from(rhs, alpha, beta, g, &mut x)?;
    Ok(x)
}

/// [`solve_helmholtz`] warm-started from `x`.
pub fn solve_helmholtz_from(
    rhs: &Field,
    alpha: f64,
    beta: f64,
    g: &Grid,
    x: &mut Field,
) -> Result<CgStats> {
    if !(alpha > 0.0) || !(beta >= 1.0) {
        return Err(Error::Domain(format!(
            "Helmholtz solve needs alpha > 0 and beta >= 1, got alpha={alpha}, beta={beta}"
        )));
    }
    rhs.check_on(g)?;
    x.check_on(g)?;
    let op = Helmholtz {
        grid: g,
        alpha,
        beta,
    };
    conjugate_gradient(&op, rhs.values(), x.values_mut(), CG_TOLERANCE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::linf_norm;
    use crate::operators::laplacian;
    use std::f64::consts::PI;

    #[test]
    fn constant_rhs() {
        let g = Grid::unit(2, 16).unwrap();
        let dt = 0.01;
        let x = solve_helmholtz(&Field::constant(&g, 3.0), dt, 1.0 + dt, &g).unwrap();
        for &v in x.values() {
            assert!((v - 3.0 / (1.0 + dt)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_rhs() {
        let g = Grid::unit(1, 10).unwrap();
        let x = solve_helmholtz(&Field::zeros(&g), 0.5, 2.0, &g).unwrap();
        assert_eq!(linf_norm(&x), 0.0);
    }

    #[test]
    fn discrete_eigenpair() {
        let g = Grid::unit(1, 50).unwrap();
        let h = g.hx();
        let (alpha, beta) = (0.3, 1.3);
        let rhs = Field::from_fn(&g, |x, _| (PI * x).cos());
        let lam = (2.0 - 2.0 * (PI * h).cos()) / (h * h);
        let x = solve_helmholtz(&rhs, alpha, beta, &g).unwrap();
        for k in 0..g.len() {
            assert!((x[k] - rhs[k] / (beta + alpha * lam)).abs() < 1e-10);
        }
    }

    #[test]
    fn residual_meets_tolerance() {
        let g = Grid::new_2d([1.0, 2.0], [12, 9]).unwrap();
        let rhs = Field::from_fn(&g, |x, y| (x * 7.0).sin() + y * y);
        let (alpha, beta) = (0.05, 1.05);
        let x = solve_helmholtz(&rhs, alpha, beta, &g).unwrap();
        let lap = laplacian(&x, &g);
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..g.len() {
            let r = rhs[k] - (beta * x[k] - alpha * lap[k]);
            num += r * r;
            den += rhs[k] * rhs[k];
        }
        assert!((num / den).sqrt() <= 1e-10);
    }

    #[test]
    fn rejects_bad_coefficients() {
        let g = Grid::unit(1, 4).unwrap();
        let rhs = Field::zeros(&g);
        assert!(solve_helmholtz(&rhs, 0.0, 1.0, &g).is_err());
        assert!(solve_helmholtz(&rhs, 1.0, 0.5, &g).is_err());
    }

    #[test]
    fn diagonal_matches_apply() {
        let g = Grid::new_2d([1.0, 1.0], [4, 3]).unwrap();
        let op = Helmholtz {
            grid: &g,
            alpha: 0.7,
            beta: 1.2,
        };
        let d = op.diagonal();
        let mut e = vec![0.0; g.len()];
        let mut y = vec![0.0; g.len()];
        for k in 0..g.len() {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[k] = 1.0;
            op.apply(&e, &mut y);
            assert!((y[k] - d[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn stencil_matches_operators() {
        let g = Grid::new_2d([1.0, 2.0], [6, 5]).unwrap();
        let x: Vec<f64> = (0..g.len()).map(|k| ((k * 7) % 11) as f64 - 3.0).collect();
        let h = Helmholtz {
            grid: &g,
            alpha: 0.3,
            beta: 1.1,
        };
        let fd = FaceFluxSet::build(&g, |a, b, _| 1.0 + 0.1 * (a + 2 * b) as f64);
        let diag: Vec<f64> = (0..g.len()).map(|k| 1.0 + 0.01 * k as f64).collect();
        let vd = VariableDiffusion {
            grid: &g,
            diag: &diag,
            face_d: &fd,
            scale: 0.05,
        };
        let mut y1 = vec![0.0; g.len()];
        let mut y2 = vec![0.0; g.len()];
        h.apply(&x, &mut y1);
        h.stencil().unwrap().apply(&x, &mut y2);
        for (a, b) in y1.iter().zip(&y2) {
            assert!((a - b).abs() < 1e-12);
        }
        vd.apply(&x, &mut y1);
        let st = vd.stencil().unwrap();
        st.apply(&x, &mut y2);
        for (a, b) in y1.iter().zip(&y2) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in vd.diagonal().iter().zip(st.diagonal()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn coarse_stencil_keeps_constants_and_symmetry() {
        let fine = Stencil::from_faces(
            8,
            4,
            (0..32).map(|k| 1.0 + k as f64 * 0.1).collect(),
            &(0..28).map(|k| 2.0 + (k % 3) as f64).collect::<Vec<_>>(),
            &(0..24).map(|k| 0.5 + (k % 5) as f64).collect::<Vec<_>>(),
        );
        let c = fine.coarsen();
        assert_eq!((c.nx, c.ny), (4, 2));
        // the coupling part annihilates constants, leaving the block means of a
        let mut y = vec![0.0; 8];
        c.apply(&[1.0; 8], &mut y);
        assert!((y[0] - (1.0 + 0.1 * (0.0 + 1.0 + 8.0 + 9.0) / 4.0)).abs() < 1e-12);
        // <e_i, A e_j> = <e_j, A e_i>
        let mut m = vec![vec![0.0; 8]; 8];
        for j in 0..8 {
            let mut e = vec![0.0; 8];
            e[j] = 1.0;
            c.apply(&e, &mut m[j]);
        }
        for (i, row) in m.iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                assert!((x - m[j][i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn multigrid_and_jacobi_agree() {
        // 48 coarsens, 45 does not and falls back to Jacobi
        for n in [48, 45] {
            let g = Grid::unit(2, n).unwrap();
            let rhs = Field::from_fn(&g, |x, y| (5.0 * x).sin() * (3.0 * y).cos() + 1.0);
            let (alpha, beta) = (0.02, 1.02);
            let x = solve_helmholtz(&rhs, alpha, beta, &g).unwrap();
            let lap = laplacian(&x, &g);
            for k in 0..g.len() {
                let r = rhs[k] - (beta * x[k] - alpha * lap[k]);
                assert!(r.abs() < 1e-8, "n = {n}: residual {r}");
            }
        }
    }

    #[test]
    fn multigrid_iterations_do_not_grow() {
        let mut its = Vec::new();
        for n in [32, 64, 128] {
            let g = Grid::unit(2, n).unwrap();
            let rhs = Field::from_fn(&g, |x, y| (-((x - 0.3).powi(2) + y * y) / 0.01).exp());
            let op = Helmholtz {
                grid: &g,
                alpha: 0.01,
                beta: 1.01,
            };
            let mut x = vec![0.0; g.len()];
            its.push(conjugate_gradient(&op, rhs.values(), &mut x, 1e-12).unwrap().iterations);
        }
        assert!(its.iter().all(|&k| k <= 20), "{its:?}");
    }

    #[test]
    fn one_dimensional_multigrid() {
        let g = Grid::unit(1, 256).unwrap();
        let rhs = Field::from_fn(&g, |x, _| (PI * x).cos());
        let h = g.hx();
        let lam = (2.0 - 2.0 * (PI * h).cos()) / (h * h);
        let x = solve_helmholtz(&rhs, 0.5, 1.5, &g).unwrap();
        for k in 0..g.len() {
            assert!((x[k] - rhs[k] / (1.5 + 0.5 * lam)).abs() < 1e-10);
        }
    }
}
