//! Time integration of the coupled system
//!
//! ```text
//! u_t = div(D(u) grad u) - chi div(u grad v) - xi div(u grad w) + mu u (1 - u - w)
//! v_t = lap v - v + u
//! w_t = -v w
//! ```
//!
//! One step is Lie-split in the order v, w, u: a backward-Euler Helmholtz
//! solve for `v`, an exponential update for `w` with the trapezoidal exponent,
//! then an upwind flux update for `u` with a Patankar-type logistic sink.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{integrate, linf_norm, Field, Grid};
use crate::model::{DiffusionSpec, ModelParams};
use crate::operators::{
    cell_diffusivity, face_diffusivity, for_each_face, gradient_fluxes,
};
use crate::solver::{conjugate_gradient, solve_helmholtz_from, VariableDiffusion};

/// Relative CG target for the implicit density solve. Tighter than the
/// Helmholtz default since the conservative reconstruction feeds the
/// residual straight into `u`.
const U_SOLVE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub u: Field,
    pub v: Field,
    pub w: Field,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionScheme {
    /// Forward-Euler flux update; the step is bounded by the diffusive CFL.
    #[default]
    Explicit,
    /// Backward Euler with the face diffusivities frozen at the old density.
    /// Only the advective CFL bounds the step.
    LinearlyImplicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepControls {
    #[serde(default = "default_cfl_diff")]
    pub cfl_diff: f64,
    #[serde(default = "default_cfl_adv")]
    pub cfl_adv: f64,
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    pub t_end: f64,
    #[serde(default = "default_sample_every")]
    pub sample_every: f64,
    /// Sup-norm cap on `u`; `None` means `1e6 * max(1, ||u0||_inf)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blowup_threshold: Option<f64>,
    #[serde(default)]
    pub scheme: DiffusionScheme,
    /// Keep `(u, v, w)` at every sample time in the trajectory.
    #[serde(default)]
    pub store_snapshots: bool,
}

fn default_cfl_diff() -> f64 {
    0.4
}
fn default_cfl_adv() -> f64 {
    0.125
}
fn default_dt_max() -> f64 {
    f64::INFINITY
}
fn default_sample_every() -> f64 {
    0.1
}

impl StepControls {
    pub fn new(t_end: f64) -> Self {
        Self {
            cfl_diff: default_cfl_diff(),
            cfl_adv: default_cfl_adv(),
            dt_max: default_dt_max(),
            t_end,
            sample_every: default_sample_every(),
            blowup_threshold: None,
            scheme: DiffusionScheme::Explicit,
            store_snapshots: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, c) in [("cfl_diff", self.cfl_diff), ("cfl_adv", self.cfl_adv)] {
            if !(c > 0.0 && c <= 1.0) {
                return Err(Error::Domain(format!("{name} must lie in (0, 1], got {c}")));
            }
        }
        if !(self.dt_max > 0.0) {
            return Err(Error::Domain(format!("dt_max must be > 0, got {}", self.dt_max)));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::Domain(format!("t_end must be > 0, got {}", self.t_end)));
        }
        if !(self.sample_every > 0.0) || !self.sample_every.is_finite() {
            return Err(Error::Domain(format!(
                "sample_every must be > 0, got {}",
                self.sample_every
            )));
        }
        if let Some(b) = self.blowup_threshold {
            if !(b > 0.0) {
                return Err(Error::Domain(format!("blowup_threshold must be > 0, got {b}")));
            }
        }
        Ok(())
    }

    pub fn blowup_threshold_for(&self, u0: &Field) -> f64 {
        self.blowup_threshold
            .unwrap_or_else(|| 1e6 * linf_norm(u0).max(1.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub u0: Field,
    pub v0: Field,
    pub w0: Field,
}

impl InitialData {
    /// Checks `u0 >= 0` with positive mass, `v0 >= 0` and `w0 >= 0`.
    ///
    /// `w0 = 0` somewhere is accepted so that the equilibrium `(1, 1, 0)` can
    /// be started from; [`InitialData::w0_strictly_positive`] reports whether
    /// the positivity assumption on `w0` holds.
    pub fn new(u0: Field, v0: Field, w0: Field, g: &Grid) -> Result<Self> {
        for (name, f) in [("u0", &u0), ("v0", &v0), ("w0", &w0)] {
            f.check_on(g)?;
            if let Some(cell) = f.first_non_finite() {
                return Err(Error::NonFinite { field: name, cell });
            }
            if let Some(cell) = f.values().iter().position(|&x| x < 0.0) {
                return Err(Error::Domain(format!(
                    "{name} is negative at cell {cell} ({})",
                    f[cell]
                )));
            }
        }
        if !(integrate(&u0, g) > 0.0) {
            return Err(Error::Domain("u0 must not vanish identically".into()));
        }
        Ok(Self { u0, v0, w0 })
    }

    pub fn w0_strictly_positive(&self) -> bool {
        self.w0.values().iter().all(|&x| x > 0.0)
    }

    pub fn state(&self) -> State {
        State {
            t: 0.0,
            u: self.u0.clone(),
            v: self.v0.clone(),
            w: self.w0.clone(),
        }
    }
}

fn check_finite(name: &'static str, f: &Field) -> Result<()> {
    match f.first_non_finite() {
        Some(cell) => Err(Error::NonFinite { field: name, cell }),
        None => Ok(()),
    }
}

/// Largest face speed of the taxis drift, `max (chi |dv| + xi |dw|) / h`.
pub fn max_taxis_speed(s: &State, p: &ModelParams, g: &Grid) -> f64 {
    if p.chi == 0.0 && p.xi == 0.0 {
        return 0.0;
    }
    let v = s.v.values();
    let w = s.w.values();
    let mut jump = [0.0f64; 2];
    for_each_face(g, |a, b, _, along_x| {
        let d = p.chi * (v[b] - v[a]).abs() + p.xi * (w[b] - w[a]).abs();
        let slot = &mut jump[usize::from(!along_x)];
        *slot = slot.max(d);
    });
    let hy = if g.dim() == 2 { g.hy() } else { g.hx() };
    f64::max(jump[0] / g.hx(), jump[1] / hy)
}

/// Stable explicit step:
/// `min(dt_max, cfl_diff h^2 / (2 dim D_max), cfl_adv h / V_max)`.
/// The diffusive bound is dropped for [`DiffusionScheme::LinearlyImplicit`]
/// and whenever `D_max = 0`.
pub fn stable_dt(
    s: &State,
    p: &ModelParams,
    d: &DiffusionSpec,
    c: &StepControls,
    g: &Grid,
) -> Result<f64> {
    check_finite("u", &s.u)?;
    check_finite("v", &s.v)?;
    check_finite("w", &s.w)?;
    let h = g.h_min();
    let mut dt = c.dt_max;
    if c.scheme == DiffusionScheme::Explicit {
        // D is nondecreasing, so its maximum sits at the largest density
        let d_max = d.eval_unchecked(s.u.max().max(0.0));
        if d_max > 0.0 {
            dt = dt.min(c.cfl_diff * h * h / (2.0 * g.dim() as f64 * d_max));
        }
    }
    let v_max = max_taxis_speed(s, p, g);
    if v_max > 0.0 {
        dt = dt.min(c.cfl_adv * h / v_max);
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Domain(format!(
            "no finite stable step (dt_max = {}, no active constraint)",
            c.dt_max
        )));
    }
    Ok(dt)
}

/// Backward-Euler step of `v_t = lap v - v + u`:
/// `(1 + dt) v_new - dt lap v_new = v + dt u`.
pub fn step_v(s: &State, dt: f64, g: &Grid) -> Result<Field> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be > 0, got {dt}")));
    }
    let rhs = Field::from_vec(
        g,
        s.v.values()
            .iter()
            .zip(s.u.values())
            .map(|(v, u)| v + dt * u)
            .collect(),
    )?;
    let mut x = s.v.clone();
    solve_helmholtz_from(&rhs, dt, 1.0 + dt, g, &mut x)?;
    Ok(x)
}

/// `w_new = w exp(-v_mid dt)`; exact for constant `v_mid`.
pub fn step_w(s: &State, v_mid: &Field, dt: f64) -> Result<Field> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be > 0, got {dt}")));
    }
    if v_mid.len() != s.w.len() {
        return Err(Error::Contract("v_mid and w differ in length".into()));
    }
    let mut w = s.w.clone();
    for (wk, vk) in w.values_mut().iter_mut().zip(v_mid.values()) {
        let decay = (-vk.max(0.0) * dt).exp();
        *wk *= decay;
    }
    Ok(w)
}

/// `rhs += dt div(D_face grad u - chi u grad v - xi u grad w)` in one pass
/// over the faces, taxis upwinded per term. `d_cell` is `None` to leave out
/// diffusion.
fn add_transport(
    s: &State,
    p: &ModelParams,
    d_cell: Option<&[f64]>,
    dt: f64,
    g: &Grid,
    rhs: &mut [f64],
) {
    let u = s.u.values();
    let v = s.v.values();
    let w = s.w.values();
    // each face term is (jump of something) / h, scaled by dt / h
    let upwind = |a: usize, b: usize, psi: &[f64]| {
        let jump = psi[b] - psi[a];
        let donor = if jump > 0.0 { u[a] } else { u[b] };
        donor * jump
    };
    let kx = dt / (g.hx() * g.hx());
    let ky = if g.dim() == 2 { dt / (g.hy() * g.hy()) } else { 0.0 };
    for_each_face(g, |a, b, _, along_x| {
        let mut flux = 0.0;
        if let Some(dc) = d_cell {
            flux += 0.5 * (dc[a] + dc[b]) * (u[b] - u[a]);
        }
        if p.chi != 0.0 {
            flux -= p.chi * upwind(a, b, v);
        }
        if p.xi != 0.0 {
            flux -= p.xi * upwind(a, b, w);
        }
        let q = if along_x { kx } else { ky } * flux;
        rhs[a] += q;
        rhs[b] -= q;
    });
}

/// Advances `u` by `dt` using the current `v` and `w` of `s`.
///
/// The logistic term is split as a source `mu u (1 - w)^+` and a sink
/// `mu u (u + (w - 1)^+)` whose density factor goes into the denominator,
/// so the sink never drives `u` negative. For `w <= 1` this is
/// `(u + dt (transport + mu u (1 - w))) / (1 + mu dt u)`.
pub fn step_u(
    s: &State,
    dt: f64,
    p: &ModelParams,
    d: &DiffusionSpec,
    g: &Grid,
    scheme: DiffusionScheme,
) -> Result<Field> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be > 0, got {dt}")));
    }
    let n = g.len();
    let u = s.u.values();
    let w = s.w.values();

    let mut rhs = u.to_vec();
    let d_cell = match scheme {
        DiffusionScheme::Explicit => Some(cell_diffusivity(&s.u, d)?),
        DiffusionScheme::LinearlyImplicit => None,
    };
    add_transport(s, p, d_cell.as_deref(), dt, g, &mut rhs);
    let mut denom = vec![1.0; n];
    if p.mu > 0.0 {
        for k in 0..n {
            rhs[k] += dt * p.mu * u[k] * (1.0 - w[k]).max(0.0);
            denom[k] += dt * p.mu * (u[k] + (w[k] - 1.0).max(0.0));
        }
    }

    let out = match scheme {
        DiffusionScheme::Explicit => rhs.iter().zip(&denom).map(|(r, q)| r / q).collect(),
        DiffusionScheme::LinearlyImplicit => {
            let face_d = face_diffusivity(&s.u, d, g)?;
            let op = VariableDiffusion {
                grid: g,
                diag: &denom,
                face_d: &face_d,
                scale: dt,
            };
            let mut x = u.to_vec();
            conjugate_gradient(&op, &rhs, &mut x, U_SOLVE_TOLERANCE)?;
            // Rebuild the update from the fluxes of the solution so the
            // divergence telescopes exactly whatever the solver residual.
            let xf = Field::from_vec(g, x)?;
            let mut flux = gradient_fluxes(&xf, g);
            for (f, dface) in flux
                .x
                .iter_mut()
                .zip(&face_d.x)
                .chain(flux.y.iter_mut().zip(&face_d.y))
            {
                *f *= dface;
            }
            flux.add_divergence(g, dt, &mut rhs);
            rhs.iter().zip(&denom).map(|(r, q)| r / q).collect()
        }
    };
    let out = Field::from_vec(g, out)?;
    if let Some(cell) = out.first_non_finite() {
        return Err(Error::NonFinite { field: "u", cell });
    }
    if let Some(cell) = out.values().iter().position(|&x| x < 0.0) {
        return Err(Error::Positivity {
            field: "u",
            cell,
            value: out[cell],
            dt,
        });
    }
    Ok(out)
}

/// One full split step `v -> w -> u`.
pub fn step(
    s: &State,
    dt: f64,
    p: &ModelParams,
    d: &DiffusionSpec,
    g: &Grid,
    scheme: DiffusionScheme,
) -> Result<State> {
    let v_new = step_v(s, dt, g)?;
    let v_mid = Field::from_vec(
        g,
        s.v.values()
            .iter()
            .zip(v_new.values())
            .map(|(a, b)| 0.5 * (a + b))
            .collect(),
    )?;
    let w_new = step_w(s, &v_mid, dt)?;
    let mid = State {
        t: s.t,
        u: s.u.clone(),
        v: v_new,
        w: w_new,
    };
    let u_new = step_u(&mid, dt, p, d, g, scheme)?;
    Ok(State {
        t: s.t + dt,
        u: u_new,
        v: mid.v,
        w: mid.w,
    })
}

/// Callbacks invoked by [`advance`].
pub trait Observer {
    /// Called at `t = 0`, at every multiple of `sample_every`, and at the
    /// final time. `dt` is the step that led to this state (0 initially).
    fn on_sample(&mut self, state: &State, dt: f64, g: &Grid);

    /// Called after every accepted step.
    fn on_step(&mut self, _prev: &State, _next: &State, _g: &Grid) {}
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    BlowUpSuspected { t: f64, linf_u: f64 },
    SolverFailure { t: f64, message: String },
    PositivityLost { t: f64, message: String },
}

impl RunStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, RunStatus::Completed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    pub linf_u: f64,
    pub linf_v: f64,
    pub linf_w: f64,
    pub l2_gradv: f64,
}

impl Sample {
    pub fn measure(s: &State, dt: f64, g: &Grid) -> Self {
        let gv = crate::operators::grad_mag_sq(&s.v, g);
        Self {
            t: s.t,
            dt,
            mass: integrate(&s.u, g),
            linf_u: linf_norm(&s.u),
            linf_v: linf_norm(&s.v),
            linf_w: linf_norm(&s.w),
            l2_gradv: integrate(&gv, g).sqrt(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// States at the sample times when snapshots are requested.
    pub snapshots: Vec<State>,
    pub final_state: State,
    pub status: RunStatus,
    pub steps: usize,
}

impl Trajectory {
    pub fn series(&self, f: impl Fn(&Sample) -> f64) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.t, f(s))).collect()
    }
}

/// Runs the split scheme from `init` to `c.t_end`, stopping early on a
/// suspected blow-up, a solver failure or a positivity loss.
pub fn advance(
    init: &InitialData,
    p: &ModelParams,
    d: &DiffusionSpec,
    c: &StepControls,
    g: &Grid,
    hooks: &mut [&mut dyn Observer],
) -> Result<Trajectory> {
    p.validate()?;
    d.validate()?;
    c.validate()?;
    let threshold = c.blowup_threshold_for(&init.u0);

    let mut state = init.state();
    let mut traj = Trajectory {
        samples: Vec::new(),
        snapshots: Vec::new(),
        final_state: state.clone(),
        status: RunStatus::Completed,
        steps: 0,
    };
    let record = |state: &State, dt: f64, traj: &mut Trajectory, hooks: &mut [&mut dyn Observer]| {
        traj.samples.push(Sample::measure(state, dt, g));
        if c.store_snapshots {
            traj.snapshots.push(state.clone());
        }
        for h in hooks.iter_mut() {
            h.on_sample(state, dt, g);
        }
    };
    record(&state, 0.0, &mut traj, hooks);

    let mut sample_index: u64 = 1;
    // sample times are k * sample_every, clipped to t_end
    let next_sample = |k: u64| (k as f64 * c.sample_every).min(c.t_end);
    let mut target = next_sample(sample_index);

    loop {
        let linf_u = linf_norm(&state.u);
        if !(linf_u <= threshold) {
            traj.status = RunStatus::BlowUpSuspected { t: state.t, linf_u };
            break;
        }
        if state.t >= c.t_end {
            break;
        }
        let dt_stable = match stable_dt(&state, p, d, c, g) {
            Ok(dt) => dt,
            Err(Error::NonFinite { .. }) => {
                traj.status = RunStatus::BlowUpSuspected {
                    t: state.t,
                    linf_u: f64::INFINITY,
                };
                break;
            }
            Err(e) => return Err(e),
        };
        let remaining = target - state.t;
        // avoid a sliver step just before a sample time
        let dt = if dt_stable >= remaining || remaining - dt_stable < 1e-9 * c.sample_every {
            remaining
        } else {
            dt_stable
        };
        let next = match step(&state, dt, p, d, g, c.scheme) {
            Ok(mut next) => {
                if dt == remaining {
                    next.t = target;
                }
                next
            }
            Err(e @ Error::SolverFailure { .. }) => {
                traj.status = RunStatus::SolverFailure {
                    t: state.t,
                    message: e.to_string(),
                };
                break;
            }
            Err(e @ (Error::Positivity { .. } | Error::NegativeDensity { .. })) => {
                traj.status = RunStatus::PositivityLost {
                    t: state.t,
                    message: e.to_string(),
                };
                break;
            }
            Err(Error::NonFinite { .. }) => {
                traj.status = RunStatus::BlowUpSuspected {
                    t: state.t,
                    linf_u: f64::INFINITY,
                };
                break;
            }
            Err(e) => return Err(e),
        };
        for h in hooks.iter_mut() {
            h.on_step(&state, &next, g);
        }
        state = next;
        traj.steps += 1;
        if state.t == target {
            record(&state, dt, &mut traj, hooks);
            sample_index += 1;
            target = next_sample(sample_index);
        }
    }
    traj.final_state = state;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::laplacian;
    use std::f64::consts::PI;

    fn steady(g: &Grid) -> State {
        State {
            t: 0.0,
            u: Field::constant(g, 1.0),
            v: Field::constant(g, 1.0),
            w: Field::zeros(g),
        }
    }

    #[test]
    fn stable_dt_linear_diffusion() {
        let g = Grid::new_1d(1.0, 10).unwrap();
        let s = State {
            t: 0.0,
            u: Field::constant(&g, 0.3),
            v: Field::zeros(&g),
            w: Field::constant(&g, 1.0),
        };
        let p = ModelParams::new(0.0, 0.0, 1.0).unwrap();
        let d = DiffusionSpec::power_law(1.0, 1.0).unwrap();
        let mut c = StepControls::new(1.0);
        c.cfl_diff = 0.5;
        let dt = stable_dt(&s, &p, &d, &c, &g).unwrap();
        assert!((dt - 0.0025).abs() < 1e-15);
    }

    #[test]
    fn stable_dt_degenerate_empty_state() {
        let g = Grid::unit(2, 8).unwrap();
        let s = State {
            t: 0.0,
            u: Field::zeros(&g),
            v: Field::from_fn(&g, |x, _| x),
            w: Field::constant(&g, 1.0),
        };
        let p = ModelParams::new(2.0, 0.0, 0.0).unwrap();
        let d = DiffusionSpec::power_law(1.0, 2.0).unwrap();
        let mut c = StepControls::new(1.0);
        c.dt_max = 10.0;
        let dt = stable_dt(&s, &p, &d, &c, &g).unwrap();
        // dv per face = h, so the drift speed is chi = 2
        assert!((dt - c.cfl_adv * g.h_min() / 2.0).abs() < 1e-14);
        c.dt_max = 1e-6;
        assert_eq!(stable_dt(&s, &p, &d, &c, &g).unwrap(), 1e-6);
    }

    #[test]
    fn stable_dt_rejects_non_finite() {
        let g = Grid::unit(1, 4).unwrap();
        let mut s = steady(&g);
        s.v[2] = f64::NAN;
        let p = ModelParams::new(1.0, 1.0, 1.0).unwrap();
        let d = DiffusionSpec::power_law(1.0, 2.0).unwrap();
        assert!(matches!(
            stable_dt(&s, &p, &d, &StepControls::new(1.0), &g),
            Err(Error::NonFinite { field: "v", .. })
        ));
    }

    #[test]
    fn step_v_examples() {
        let g = Grid::unit(2, 8).unwrap();
        let dt = 0.05;
        let v = step_v(&steady(&g), dt, &g).unwrap();
        assert!(v.values().iter().all(|&x| (x - 1.0).abs() < 1e-14));

        let s = State {
            t: 0.0,
            u: Field::zeros(&g),
            v: Field::constant(&g, 2.0),
            w: Field::zeros(&g),
        };
        let v = step_v(&s, dt, &g).unwrap();
        assert!(v.values().iter().all(|&x| (x - 2.0 / (1.0 + dt)).abs() < 1e-10));

        let g = Grid::unit(1, 64).unwrap();
        let h = g.hx();
        let s = State {
            t: 0.0,
            u: Field::zeros(&g),
            v: Field::from_fn(&g, |x, _| (PI * x).cos()),
            w: Field::zeros(&g),
        };
        let lam = (2.0 - 2.0 * (PI * h).cos()) / (h * h);
        let v = step_v(&s, dt, &g).unwrap();
        for k in 0..g.len() {
            assert!((v[k] - s.v[k] / (1.0 + dt + dt * lam)).abs() < 1e-10);
        }
    }

    #[test]
    fn step_w_examples() {
        let g = Grid::unit(1, 5).unwrap();
        let s = State {
            t: 0.0,
            u: Field::constant(&g, 1.0),
            v: Field::zeros(&g),
            w: Field::from_fn(&g, |x, _| 1.0 + x),
        };
        assert_eq!(step_w(&s, &Field::zeros(&g), 0.3).unwrap(), s.w);
        let w = step_w(&s, &Field::constant(&g, 2.0), 0.3).unwrap();
        for k in 0..5 {
            assert!((w[k] - s.w[k] * (-0.6f64).exp()).abs() < 1e-15);
            assert!(w[k] <= s.w[k] && w[k] > 0.0);
        }
    }

    #[test]
    fn step_w_is_second_order_for_linear_v() {
        // w' = -(a + b t) w, w(0) = 1 has w(T) = exp(-(a T + b T^2 / 2))
        let (a, b, t_end) = (0.5, 2.0, 1.0);
        let exact: f64 = f64::exp(-(a * t_end + b * t_end * t_end / 2.0));
        let g = Grid::unit(1, 1).unwrap();
        let run = |n: usize| {
            let dt = t_end / n as f64;
            let mut s = State {
                t: 0.0,
                u: Field::zeros(&g),
                v: Field::zeros(&g),
                w: Field::constant(&g, 1.0),
            };
            for k in 0..n {
                let t0 = k as f64 * dt;
                let vmid = 0.5 * ((a + b * t0) + (a + b * (t0 + dt)));
                s.w = step_w(&s, &Field::constant(&g, vmid), dt).unwrap();
            }
            (s.w[0] - exact).abs()
        };
        // the trapezoidal exponent is exact for linear v
        assert!(run(7) < 1e-14);
        assert!(run(100) < 1e-14);
    }

    #[test]
    fn step_u_steady_state() {
        let g = Grid::unit(2, 6).unwrap();
        let p = ModelParams::new(5.0, 1.0, 1.0).unwrap();
        let d = DiffusionSpec::power_law(1.0, 1.5).unwrap();
        for scheme in [DiffusionScheme::Explicit, DiffusionScheme::LinearlyImplicit] {
            let u = step_u(&steady(&g), 0.01, &p, &d, &g, scheme).unwrap();
            assert!(u.values().iter().all(|&x| (x - 1.0).abs() < 1e-15));
        }
    }

    #[test]
    fn step_u_pure_diffusion_conserves_mass() {
        let g = Grid::unit(2, 16).unwrap();
        let p = ModelParams::new(0.0, 0.0, 0.0).unwrap();
        let d = DiffusionSpec::power_law(1.0, 2.0).unwrap();
        let s = State {
            t: 0.0,
            u: Field::from_fn(&g, |x, y| (-40.0 * ((x - 0.3).powi(2) + (y - 0.6).powi(2))).exp()),
            v: Field::zeros(&g),
            w: Field::constant(&g, 1.0),
        };
        let m0 = integrate(&s.u, &g);
        let c = StepControls::new(1.0);
        let dt = stable_dt(&s, &p, &d, &c, &g).unwrap();
        for (scheme, dt) in [
            (DiffusionScheme::Explicit, dt),
            (DiffusionScheme::LinearlyImplicit, 50.0 * dt),
        ] {
            let u = step_u(&s, dt, &p, &d, &g, scheme).unwrap();
            assert!((integrate(&u, &g) - m0).abs() <= 1e-12 * m0);
            assert!(linf_norm(&u) <= linf_norm(&s.u));
        }
    }

    #[test]
    fn step_u_logistic_decay() {
        let g = Grid::unit(1, 4).unwrap();
        let mu = 1.0;
        let dt = 0.01;
        let p = ModelParams::new(0.0, 0.0, mu).unwrap();
        let d = DiffusionSpec::new(1.0, 2.0, 0.5, 0.0).unwrap();
        let s = State {
            t: 0.0,
            u: Field::constant(&g, 2.0),
            v: Field::zeros(&g),
            w: Field::zeros(&g),
        };
        let u = step_u(&s, dt, &p, &d, &g, DiffusionScheme::Explicit).unwrap();
        let expect = (2.0 + 2.0 * mu * dt) / (1.0 + 2.0 * mu * dt);
        // scalar logistic ODE u' = mu u (1 - u), u(0) = 2
        let ode = 1.0 / (1.0 - 0.5 * (-mu * dt).exp());
        for &x in u.values() {
            assert!((x - expect).abs() < 1e-14);
            assert!(x < 2.0);
            assert!((x - ode).abs() < 2.0 * dt * dt);
        }
    }

    #[test]
    fn step_u_reports_positivity_loss() {
        let g = Grid::unit(1, 8).unwrap();
        let p = ModelParams::new(50.0, 0.0, 0.0).unwrap();
        let d = DiffusionSpec::power_law(1.0, 2.0).unwrap();
        let s = State {
            t: 0.0,
            u: Field::from_fn(&g, |x, _| if x < 0.5 { 1.0 } else { 0.0 }),
            v: Field::from_fn(&g, |x, _| 10.0 * x),
            w: Field::constant(&g, 1.0),
        };
        let err = step_u(&s, 1.0, &p, &d, &g, DiffusionScheme::Explicit).unwrap_err();
        assert!(matches!(err, Error::Positivity { field: "u", .. }));
    }

    #[test]
    fn full_step_keeps_steady_state() {
        let g = Grid::unit(2, 8).unwrap();
        let p = ModelParams::new(5.0, 1.0, 1.0).unwrap();
        let d = DiffusionSpec::power_law(1.0, 1.5).unwrap();
        let next = step(&steady(&g), 0.01, &p, &d, &g, DiffusionScheme::Explicit).unwrap();
        for f in [&next.u, &next.v] {
            assert!(f.values().iter().all(|&x| (x - 1.0).abs() < 1e-12));
        }
        assert_eq!(linf_norm(&next.w), 0.0);
    }

    #[test]
    fn implicit_step_matches_direct_residual() {
        let g = Grid::unit(1, 20).unwrap();
        let p = ModelParams::new(0.0, 0.0, 0.0).unwrap();
        let d = DiffusionSpec::new(0.5, 2.0, 0.1, 0.0).unwrap();
        let s = State {
            t: 0.0,
            u: Field::from_fn(&g, |x, _| 1.0 + (3.0 * x).sin()),
            v: Field::zeros(&g),
            w: Field::constant(&g, 1.0),
        };
        let dt = 0.01;
        let u = step_u(&s, dt, &p, &d, &g, DiffusionScheme::LinearlyImplicit).unwrap();
        // u_new - dt div(D(u_old)_face grad u_new) = u_old
        let face_d = face_diffusivity(&s.u, &d, &g).unwrap();
        let mut flux = gradient_fluxes(&u, &g);
        for (f, df) in flux.x.iter_mut().zip(&face_d.x) {
            *f *= df;
        }
        let div = flux.divergence(&g);
        for k in 0..g.len() {
            assert!((u[k] - dt * div[k] - s.u[k]).abs() < 1e-10);
        }
        let _ = laplacian(&u, &g);
    }

    struct Counter {
        samples: Vec<f64>,
        steps: usize,
    }

    impl Observer for Counter {
        fn on_sample(&mut self, s: &State, _dt: f64, _g: &Grid) {
            self.samples.push(s.t);
        }
        fn on_step(&mut self, _p: &State, _n: &State, _g: &Grid) {
            self.steps += 1;
        }
    }

    #[test]
    fn advance_samples_on_schedule() {
        let g = Grid::unit(1, 16).unwrap();
        let init = InitialData::new(
            Field::from_fn(&g, |x, _| 1.0 + 0.5 * (PI * x).cos()),
            Field::zeros(&g),
            Field::constant(&g, 1.0),
            &g,
        )
        .unwrap();
        let p = ModelParams::new(1.0, 1.0, 1.0).unwrap();
        let d = DiffusionSpec::power_law(1.0, 2.0).unwrap();
        let mut c = StepControls::new(0.35);
        c.sample_every = 0.1;
        c.store_snapshots = true;
        let mut counter = Counter {
            samples: vec![],
            steps: 0,
        };
        let traj = advance(&init, &p, &d, &c, &g, &mut [&mut counter]).unwrap();
        assert!(traj.status.is_completed());
        assert_eq!(counter.samples, vec![0.0, 0.1, 0.2, 0.30000000000000004, 0.35]);
        assert_eq!(counter.steps, traj.steps);
        assert_eq!(traj.snapshots.len(), 5);
        assert_eq!(traj.final_state.t, 0.35);
    }

    #[test]
    fn advance_flags_blowup_immediately() {
        let g = Grid::unit(1, 16).unwrap();
        let init = InitialData::new(
            Field::constant(&g, 2.0),
            Field::zeros(&g),
            Field::constant(&g, 1.0),
            &g,
        )
        .unwrap();
        let p = ModelParams::new(1.0, 1.0, 1.0).unwrap();
        let d = DiffusionSpec::power_law(1.0, 2.0).unwrap();
        let mut c = StepControls::new(1.0);
        c.blowup_threshold = Some(1.0);
        let traj = advance(&init, &p, &d, &c, &g, &mut []).unwrap();
        assert!(matches!(traj.status, RunStatus::BlowUpSuspected { t, .. } if t == 0.0));
        assert_eq!(traj.steps, 0);
    }

    #[test]
    fn initial_data_validation() {
        let g = Grid::unit(1, 4).unwrap();
        let one = Field::constant(&g, 1.0);
        assert!(InitialData::new(Field::zeros(&g), one.clone(), one.clone(), &g).is_err());
        let mut neg = one.clone();
        neg[1] = -0.1;
        assert!(InitialData::new(one.clone(), neg.clone(), one.clone(), &g).is_err());
        assert!(InitialData::new(one.clone(), one.clone(), neg, &g).is_err());
        let d = InitialData::new(one.clone(), one.clone(), Field::zeros(&g), &g).unwrap();
        assert!(!d.w0_strictly_positive());
        let d = InitialData::new(one.clone(), one.clone(), one, &g).unwrap();
        assert!(d.w0_strictly_positive());
    }
}
