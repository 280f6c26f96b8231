//! Regularization sweeps for degenerate diffusion, Cauchy-in-epsilon
//! distances, and weak-form residuals of computed trajectories.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{integrate, integrate_map, pairwise_sum, Field, Grid};
use crate::model::{DiffusionSpec, ModelParams};
use crate::monitor::{InvariantMonitor, MonitorConfig, MonitorSummary};
use crate::operators::{diffusion_fluxes, gradient_fluxes, taxis_fluxes};
use crate::stepper::{advance, InitialData, RunStatus, State, StepControls, Trajectory};

/// Allowed growth between consecutive distances.
pub const CAUCHY_SLACK: f64 = 0.1;

/// `phi(x, t) = eta(t) * sum_k c_k cos(kx pi x / Lx) cos(ky pi y / Ly)` with
/// `eta(t) = (1 - t / cutoff)^degree` on `[0, cutoff)` and zero afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionSpec {
    pub modes: Vec<CosineMode>,
    pub cutoff: f64,
    #[serde(default = "default_degree")]
    pub degree: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineMode {
    pub kx: u32,
    #[serde(default)]
    pub ky: u32,
    pub coef: f64,
}

fn default_degree() -> u32 {
    3
}

impl TestFunctionSpec {
    /// A single mode with the cubic cutoff.
    pub fn single(kx: u32, ky: u32, cutoff: f64) -> Self {
        Self {
            modes: vec![CosineMode { kx, ky, coef: 1.0 }],
            cutoff,
            degree: 3,
        }
    }

    pub fn zero(cutoff: f64) -> Self {
        Self {
            modes: Vec::new(),
            cutoff,
            degree: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff > 0.0) || !self.cutoff.is_finite() {
            return Err(Error::Domain(format!("cutoff must be > 0, got {}", self.cutoff)));
        }
        if self.degree < 2 {
            return Err(Error::Domain(format!(
                "cutoff degree must be >= 2, got {}",
                self.degree
            )));
        }
        Ok(())
    }

    /// Spatial factor at cell centers.
    pub fn spatial(&self, g: &Grid) -> Field {
        let ext = g.extents().to_vec();
        let ly = if g.dim() == 2 { ext[1] } else { 1.0 };
        Field::from_fn(g, |x, y| {
            self.modes
                .iter()
                .map(|m| {
                    let cy = if g.dim() == 2 {
                        (m.ky as f64 * PI * y / ly).cos()
                    } else {
                        1.0
                    };
                    m.coef * (m.kx as f64 * PI * x / ext[0]).cos() * cy
                })
                .sum()
        })
    }

    pub fn eta(&self, t: f64) -> f64 {
        if t >= self.cutoff {
            0.0
        } else {
            (1.0 - t / self.cutoff).powi(self.degree as i32)
        }
    }

    pub fn eta_dot(&self, t: f64) -> f64 {
        if t >= self.cutoff {
            0.0
        } else {
            -(self.degree as f64) / self.cutoff * (1.0 - t / self.cutoff).powi(self.degree as i32 - 1)
        }
    }
}

const GAUSS3_NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GAUSS3_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

/// `int_0^T a(t) k(t) dt` where `a` is the piecewise-linear interpolant of
/// `values` at `times` and `k` is smooth on each interval. The cutoff is
/// inserted as a breakpoint so `eta` is polynomial on every piece.
fn time_integral(times: &[f64], values: &[f64], k: impl Fn(f64) -> f64, breaks: &[f64]) -> f64 {
    let mut parts = Vec::with_capacity(times.len());
    for w in 0..times.len() - 1 {
        let (t0, t1) = (times[w], times[w + 1]);
        let (a0, a1) = (values[w], values[w + 1]);
        let mut cuts = vec![t0];
        cuts.extend(breaks.iter().copied().filter(|&b| b > t0 && b < t1));
        cuts.push(t1);
        let mut s = 0.0;
        for c in cuts.windows(2) {
            let (l, r) = (c[0], c[1]);
            let half = 0.5 * (r - l);
            let mid = 0.5 * (r + l);
            for (x, wt) in GAUSS3_NODES.iter().zip(GAUSS3_WEIGHTS) {
                let t = mid + half * x;
                let a = a0 + (a1 - a0) * (t - t0) / (t1 - t0);
                s += wt * half * a * k(t);
            }
        }
        parts.push(s);
    }
    pairwise_sum(&parts)
}

/// Absolute residuals of the three weak identities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakResiduals {
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

impl WeakResiduals {
    pub fn max(&self) -> f64 {
        self.u.max(self.v).max(self.w)
    }
}

/// Per-sample spatial pairings with the spatial test factor `psi`.
struct Pairings {
    u: f64,
    v: f64,
    w: f64,
    /// Kinetic plus flux terms of the `u` identity, signed as its right side.
    rhs_u: f64,
    rhs_v: f64,
    rhs_w: f64,
}

fn pair(f: &Field, psi: &Field, g: &Grid) -> Result<f64> {
    let prod: Vec<f64> = f
        .values()
        .iter()
        .zip(psi.values())
        .map(|(a, b)| a * b)
        .collect();
    Ok(integrate(&Field::from_vec(g, prod)?, g))
}

fn pairings(s: &State, psi: &Field, p: &ModelParams, d: &DiffusionSpec, g: &Grid) -> Result<Pairings> {
    let diff = diffusion_fluxes(&s.u, d, g)?;
    let tv = taxis_fluxes(&s.u, &s.v, g);
    let tw = taxis_fluxes(&s.u, &s.w, g);
    let kinetic: Vec<f64> = s
        .u
        .values()
        .iter()
        .zip(s.w.values())
        .map(|(&u, &w)| p.mu * u * (1.0 - u - w))
        .collect();
    let kinetic = Field::from_vec(g, kinetic)?;
    let rhs_u = -diff.pair_with_gradient(psi, g)
        + p.chi * tv.pair_with_gradient(psi, g)
        + p.xi * tw.pair_with_gradient(psi, g)
        + pair(&kinetic, psi, g)?;
    let rhs_v = -gradient_fluxes(&s.v, g).pair_with_gradient(psi, g) - pair(&s.v, psi, g)?
        + pair(&s.u, psi, g)?;
    let vw: Vec<f64> = s.v.values().iter().zip(s.w.values()).map(|(a, b)| a * b).collect();
    let rhs_w = -pair(&Field::from_vec(g, vw)?, psi, g)?;
    Ok(Pairings {
        u: pair(&s.u, psi, g)?,
        v: pair(&s.v, psi, g)?,
        w: pair(&s.w, psi, g)?,
        rhs_u,
        rhs_v,
        rhs_w,
    })
}

/// Residuals `lhs - rhs` of the weak identities for `u`, `v` and `w`,
/// tested against `phi`. Space integrals use the solver's own face fluxes
/// (upwind taxis, arithmetic-mean diffusivity) paired with discrete
/// gradients of `phi`; time integrals treat each field as piecewise linear
/// between stored snapshots. The first snapshot is the initial data.
pub fn weak_residual(
    snapshots: &[State],
    phi: &TestFunctionSpec,
    p: &ModelParams,
    d: &DiffusionSpec,
    g: &Grid,
) -> Result<WeakResiduals> {
    phi.validate()?;
    if snapshots.len() < 2 {
        return Err(Error::Contract(
            "weak_residual needs stored snapshots (enable store_snapshots)".into(),
        ));
    }
    if snapshots[0].t != 0.0 {
        return Err(Error::Contract("first snapshot must be the initial state".into()));
    }
    let t_last = snapshots.last().map(|s| s.t).unwrap_or(0.0);
    if t_last < phi.cutoff {
        return Err(Error::Contract(format!(
            "snapshots end at t = {t_last}, before the test-function cutoff {}",
            phi.cutoff
        )));
    }
    for w in snapshots.windows(2) {
        if !(w[1].t > w[0].t) {
            return Err(Error::Contract("snapshot times must increase".into()));
        }
    }
    if phi.modes.is_empty() {
        return Ok(WeakResiduals { u: 0.0, v: 0.0, w: 0.0 });
    }
    let psi = phi.spatial(g);
    // only the part of the trajectory where phi is nonzero matters
    let used: Vec<&State> = {
        let n = snapshots.iter().position(|s| s.t >= phi.cutoff).unwrap();
        snapshots[..=n].iter().collect()
    };
    let rows: Vec<Pairings> = used
        .iter()
        .map(|s| pairings(s, &psi, p, d, g))
        .collect::<Result<_>>()?;
    let times: Vec<f64> = used.iter().map(|s| s.t).collect();
    let breaks = [phi.cutoff];
    let col = |f: fn(&Pairings) -> f64| -> Vec<f64> { rows.iter().map(f).collect() };
    let eta = |t: f64| phi.eta(t);
    let eta_dot = |t: f64| phi.eta_dot(t);

    let one = |a: fn(&Pairings) -> f64, rhs: fn(&Pairings) -> f64| {
        let lhs = -time_integral(&times, &col(a), eta_dot, &breaks) - a(&rows[0]) * phi.eta(0.0);
        let r = time_integral(&times, &col(rhs), eta, &breaks);
        (lhs - r).abs()
    };
    Ok(WeakResiduals {
        u: one(|r| r.u, |r| r.rhs_u),
        v: one(|r| r.v, |r| r.rhs_v),
        w: one(|r| r.w, |r| r.rhs_w),
    })
}

/// `integrate(u^theta)` at every snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaSeries {
    pub theta: f64,
    pub series: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Returns the series even for `theta <= max(1, m/2)`, with a warning.
pub fn theta_power_series(snapshots: &[State], theta: f64, m: f64, g: &Grid) -> ThetaSeries {
    let floor = 1f64.max(0.5 * m);
    let warning = (!(theta > floor)).then(|| {
        format!("theta = {theta} must exceed max(1, m/2) = {floor}; series computed anyway")
    });
    let series = snapshots
        .iter()
        .map(|s| (s.t, integrate_map(&s.u, g, |x| x.powf(theta))))
        .collect();
    ThetaSeries {
        theta,
        series,
        warning,
    }
}

/// Everything shared by the members of a sweep.
#[derive(Debug, Clone)]
pub struct SweepBase {
    pub grid: Grid,
    pub params: ModelParams,
    pub diffusion: DiffusionSpec,
    pub controls: StepControls,
    pub initial: InitialData,
    pub monitor: MonitorConfig,
    pub analysis_n: u32,
}

/// One simulation with monitors attached.
#[derive(Debug, Clone)]
pub struct MonitoredRun {
    pub trajectory: Trajectory,
    pub summary: MonitorSummary,
    pub series: crate::monitor::MonitorSeries,
}

/// Runs `advance` with an [`InvariantMonitor`] attached.
pub fn run_monitored(
    init: &InitialData,
    p: &ModelParams,
    d: &DiffusionSpec,
    c: &StepControls,
    monitor: &MonitorConfig,
    analysis_n: u32,
    g: &Grid,
) -> Result<MonitoredRun> {
    let mut mon = InvariantMonitor::new(monitor.clone(), analysis_n, p.mu, &init.u0, &init.w0, g)?;
    let trajectory = advance(init, p, d, c, g, &mut [&mut mon])?;
    Ok(MonitoredRun {
        trajectory,
        summary: mon.finish(),
        series: mon.series,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMember {
    pub epsilon: f64,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<MonitorSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<ThetaSeries>,
}

impl SweepMember {
    pub fn ok(&self) -> bool {
        self.status == "completed"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub epsilons: Vec<f64>,
    /// `d_k` between members `k` and `k + 1`; `None` when either failed.
    pub distances: Vec<Option<f64>>,
    pub members: Vec<SweepMember>,
    pub cauchy_pass: bool,
    pub cauchy_slack: f64,
    pub notes: Vec<String>,
}

/// `(int_0^T ||a - b||_2^2 dt)^(1/2)` by the trapezoidal rule over shared
/// sample times.
pub fn space_time_l2_distance(a: &[State], b: &[State], g: &Grid) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Contract(format!(
            "distance needs equal, nonempty sample sets ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let mut sq = Vec::with_capacity(a.len());
    for (x, y) in a.iter().zip(b) {
        if (x.t - y.t).abs() > 1e-12 * x.t.abs().max(1.0) {
            return Err(Error::Contract(format!(
                "sample times differ: {} vs {}",
                x.t, y.t
            )));
        }
        let diff: Vec<f64> = x
            .u
            .values()
            .iter()
            .zip(y.u.values())
            .map(|(p, q)| (p - q) * (p - q))
            .collect();
        sq.push(integrate(&Field::from_vec(g, diff)?, g));
    }
    let parts: Vec<f64> = a
        .windows(2)
        .zip(sq.windows(2))
        .map(|(t, s)| 0.5 * (t[1].t - t[0].t) * (s[0] + s[1]))
        .collect();
    Ok(pairwise_sum(&parts).sqrt())
}

/// `d_{k+1} <= (1 + slack) d_k` for consecutive available distances.
pub fn cauchy_verdict(distances: &[Option<f64>], slack: f64) -> bool {
    distances.iter().all(Option::is_some)
        && distances
            .windows(2)
            .all(|w| w[1].unwrap() <= (1.0 + slack) * w[0].unwrap())
}

/// Runs the base configuration once per `eps` with `D(s + eps)`, in
/// parallel on the current rayon pool, and compares consecutive members.
/// `theta` selects the exponent of the `integrate(u^theta)` monitor.
pub fn epsilon_sweep(base: &SweepBase, eps_list: &[f64], theta: f64) -> Result<SweepReport> {
    epsilon_sweep_with(base, eps_list, theta, |_, _| Ok(()))
}

/// [`epsilon_sweep`] that hands every finished member to `sink` on its
/// worker thread. A failing sink marks that member `output_error`.
pub fn epsilon_sweep_with(
    base: &SweepBase,
    eps_list: &[f64],
    theta: f64,
    sink: impl Fn(f64, &MonitoredRun) -> Result<()> + Sync,
) -> Result<SweepReport> {
    if eps_list.len() < 3 {
        return Err(Error::Contract(format!(
            "epsilon sweep needs at least 3 values, got {}",
            eps_list.len()
        )));
    }
    if eps_list.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return Err(Error::Domain("epsilon values must be positive".into()));
    }
    if eps_list.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Domain("epsilon values must be nonincreasing".into()));
    }
    let mut controls = base.controls.clone();
    controls.store_snapshots = true;

    let runs: Vec<(SweepMember, Option<Vec<State>>)> = eps_list
        .par_iter()
        .map(|&eps| {
            let failed = |status: &str, message: String| {
                (
                    SweepMember {
                        epsilon: eps,
                        status: status.into(),
                        message: Some(message),
                        summary: None,
                        theta: None,
                    },
                    None,
                )
            };
            let d = match base.diffusion.regularize(eps) {
                Ok(d) => d,
                Err(e) => return failed("error", e.to_string()),
            };
            match run_monitored(
                &base.initial,
                &base.params,
                &d,
                &controls,
                &base.monitor,
                base.analysis_n,
                &base.grid,
            ) {
                Ok(run) => {
                    let status = run.trajectory.status.clone();
                    let (mut name, mut message) = status_parts(&status);
                    if let Err(e) = sink(eps, &run) {
                        name = "output_error".into();
                        message = Some(e.to_string());
                    }
                    let theta = theta_power_series(
                        &run.trajectory.snapshots,
                        theta,
                        base.diffusion.m,
                        &base.grid,
                    );
                    let snaps = status.is_completed().then_some(run.trajectory.snapshots);
                    (
                        SweepMember {
                            epsilon: eps,
                            status: name,
                            message,
                            summary: Some(run.summary),
                            theta: Some(theta),
                        },
                        snaps,
                    )
                }
                Err(e) => failed("error", e.to_string()),
            }
        })
        .collect();

    let mut distances = Vec::with_capacity(eps_list.len() - 1);
    for k in 0..runs.len() - 1 {
        distances.push(match (&runs[k].1, &runs[k + 1].1) {
            (Some(a), Some(b)) => Some(space_time_l2_distance(a, b, &base.grid)?),
            _ => None,
        });
    }
    let cauchy_pass = cauchy_verdict(&distances, CAUCHY_SLACK);
    let mut notes = vec![format!(
        "Cauchy verdict allows {:.0}% growth between consecutive distances; this slack is a calibration choice, not an analytic bound",
        100.0 * CAUCHY_SLACK
    )];
    notes.extend(
        runs.iter()
            .filter_map(|(m, _)| m.theta.as_ref().and_then(|t| t.warning.clone()))
            .take(1),
    );
    Ok(SweepReport {
        epsilons: eps_list.to_vec(),
        distances,
        members: runs.into_iter().map(|(m, _)| m).collect(),
        cauchy_pass,
        cauchy_slack: CAUCHY_SLACK,
        notes,
    })
}

/// Snake-case status name and optional message.
pub fn status_parts(s: &RunStatus) -> (String, Option<String>) {
    match s {
        RunStatus::Completed => ("completed".into(), None),
        RunStatus::BlowUpSuspected { t, linf_u } => (
            "blow_up_suspected".into(),
            Some(format!("||u||_inf = {linf_u:e} at t = {t}")),
        ),
        RunStatus::SolverFailure { t, message } => {
            ("solver_failure".into(), Some(format!("t = {t}: {message}")))
        }
        RunStatus::PositivityLost { t, message } => {
            ("positivity_lost".into(), Some(format!("t = {t}: {message}")))
        }
    }
}
