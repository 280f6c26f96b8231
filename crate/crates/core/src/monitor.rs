//! Invariant checks and boundedness verdicts evaluated along a trajectory.
//!
//! Checks compare a measured quantity against an a-priori bound and keep the
//! worst slack `measured - bound`. A check fails when that slack exceeds
//! `tolerance * |bound scale|`. Verdicts are windowed-growth heuristics on
//! time series, not analytic statements.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{integrate, integrate_map, linf_norm, lp_norm, Field, Grid};
use crate::model::DiffusionSpec;
use crate::operators::{grad_mag_sq, laplacian};
use crate::stepper::{Observer, State};

/// Relative tolerance for per-step mass conservation when `mu = 0`.
pub const STEP_MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorConfig {
    /// Exponents `p` of the monitored functionals, paired with `q_list`.
    pub p_list: Vec<f64>,
    pub q_list: Vec<f64>,
    /// Exponents `s` of the monitored `||grad v||_{L^s}` series.
    #[serde(default = "default_s_list")]
    pub s_list: Vec<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_window")]
    pub window_fraction: f64,
    #[serde(default = "default_growth")]
    pub growth_tolerance: f64,
    #[serde(default = "default_growing_factor")]
    pub growing_factor: f64,
}

fn default_s_list() -> Vec<f64> {
    vec![1.5]
}
fn default_tolerance() -> f64 {
    1e-8
}
fn default_window() -> f64 {
    0.25
}
fn default_growth() -> f64 {
    0.01
}
fn default_growing_factor() -> f64 {
    2.0
}

impl MonitorConfig {
    /// `(2, 2)` plus the first three ladder exponents from
    /// `p0 = max(2, 1.6 (m - 1))`, each paired with `q = 2`.
    pub fn default_for(m: f64) -> Self {
        let p0 = f64::max(2.0, 1.6 * (m - 1.0));
        let mut p_list = vec![2.0];
        p_list.extend(moser_ladder(p0, m, 3).into_iter().skip(1));
        let q_list = vec![2.0; p_list.len()];
        Self {
            p_list,
            q_list,
            s_list: default_s_list(),
            tolerance: default_tolerance(),
            window_fraction: default_window(),
            growth_tolerance: default_growth(),
            growing_factor: default_growing_factor(),
        }
    }

    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.p_list.iter().copied().zip(self.q_list.iter().copied()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_list.len() != self.q_list.len() {
            return Err(Error::Domain("p_list and q_list must have equal length".into()));
        }
        for &x in self.p_list.iter().chain(&self.q_list) {
            if !(x > 1.0) {
                return Err(Error::Domain(format!("monitored exponents must be > 1, got {x}")));
            }
        }
        for &s in &self.s_list {
            if !(s >= 1.0) {
                return Err(Error::Domain(format!("gradient exponent s must be >= 1, got {s}")));
            }
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Domain("tolerance must be >= 0".into()));
        }
        if !(self.window_fraction > 0.0 && self.window_fraction < 1.0) {
            return Err(Error::Domain("window_fraction must lie in (0, 1)".into()));
        }
        if !(self.growth_tolerance >= 0.0) || !(self.growing_factor > 1.0) {
            return Err(Error::Domain(
                "growth_tolerance must be >= 0 and growing_factor > 1".into(),
            ));
        }
        Ok(())
    }
}

/// `p_0, p_1, ..., p_k` with `p_j = 2 p_{j-1} + 1 - m`.
pub fn moser_ladder(p0: f64, m: f64, k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(k + 1);
    let mut p = p0;
    out.push(p);
    for _ in 0..k {
        p = 2.0 * p + 1.0 - m;
        out.push(p);
    }
    out
}

/// One row of an invariant report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub check: String,
    pub pass: bool,
    pub worst_slack: f64,
    pub t_worst: f64,
    pub details: String,
}

/// Running worst-slack accumulator for one check.
#[derive(Debug, Clone)]
struct SlackTracker {
    name: String,
    tolerance: f64,
    worst_slack: f64,
    t_worst: f64,
    failed: bool,
    detail: String,
    observed: bool,
}

impl SlackTracker {
    fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            tolerance,
            worst_slack: f64::NEG_INFINITY,
            t_worst: 0.0,
            failed: false,
            detail: String::new(),
            observed: false,
        }
    }

    /// Records `slack = measured - bound`; fails when
    /// `slack > tolerance * scale`.
    fn record(&mut self, t: f64, slack: f64, scale: f64, detail: impl FnOnce() -> String) {
        self.observed = true;
        let bad = !(slack <= self.tolerance * scale.abs());
        let first_failure = bad && !self.failed;
        if first_failure || !(slack <= self.worst_slack) {
            self.worst_slack = slack;
            self.t_worst = t;
            if bad {
                self.failed = true;
                self.detail = detail();
            }
        }
    }

    fn entry(&self, extra: &str) -> CheckEntry {
        let mut details = self.detail.clone();
        if !extra.is_empty() {
            if !details.is_empty() {
                details.push_str("; ");
            }
            details.push_str(extra);
        }
        CheckEntry {
            check: self.name.clone(),
            pass: !self.failed,
            worst_slack: if self.observed { self.worst_slack } else { 0.0 },
            t_worst: self.t_worst,
            details,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub entries: Vec<CheckEntry>,
}

impl InvariantReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn get(&self, check: &str) -> Option<&CheckEntry> {
        self.entries.iter().find(|e| e.check == check)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckEntry> {
        self.entries.iter().filter(|e| !e.pass)
    }
}

/// `m* = max(|Omega|, int u0)`.
pub fn mass_star(u0: &Field, g: &Grid) -> f64 {
    f64::max(g.measure(), integrate(u0, g))
}

/// Mass ceiling `mass(t) <= m* (1 + tol)`; with `mu = 0` also
/// `|mass(t) - mass(0)| <= tol mass(0)`.
pub fn check_mass_bound(series: &[(f64, f64)], m_star: f64, mu: f64, tol: f64) -> CheckEntry {
    let mut bound = SlackTracker::new("mass_bound", tol);
    let m0 = series.first().map(|s| s.1).unwrap_or(0.0);
    let mut conservation = SlackTracker::new("mass_conservation", tol);
    for &(t, mass) in series {
        bound.record(t, mass - m_star, m_star, || {
            format!("mass {mass:.12e} exceeds m* = {m_star:.12e} at t = {t}")
        });
        if mu == 0.0 {
            conservation.record(t, (mass - m0).abs(), m0, || {
                format!("mass drifted from {m0:.12e} to {mass:.12e} at t = {t}")
            });
        }
    }
    let mut entry = bound.entry(&format!("m* = {m_star:.12e}"));
    if mu == 0.0 {
        let c = conservation.entry("");
        entry.pass &= c.pass;
        if !c.pass {
            entry.details = format!("{}; {}", entry.details, c.details);
        }
        entry
            .details
            .push_str(&format!("; max |mass - mass0| = {:.3e}", c.worst_slack.max(0.0)));
    }
    entry
}

/// `K = ||lap w0||_inf + 4 ||grad sqrt(w0)||_inf^2 + ||w0||_inf / e` with the
/// discrete operators.
#[allow(non_snake_case)]
pub fn compute_K(w0: &Field, g: &Grid) -> Result<f64> {
    w0.check_on(g)?;
    if let Some(cell) = w0.values().iter().position(|&x| !(x > 0.0)) {
        return Err(Error::Domain(format!(
            "K needs w0 > 0; w0 = {} at cell {cell}",
            w0[cell]
        )));
    }
    let lap = linf_norm(&laplacian(w0, g));
    let root = w0.map(f64::sqrt);
    let grad = linf_norm(&grad_mag_sq(&root, g));
    Ok(lap + 4.0 * grad + linf_norm(w0) / std::f64::consts::E)
}

/// Worst value of `-lap w - ||w0||_inf v - K` over the cells, with its cell.
pub fn neg_laplacian_w_slack(state: &State, w0_sup: f64, k: f64, g: &Grid) -> (f64, usize) {
    let lap = laplacian(&state.w, g);
    let mut worst = f64::NEG_INFINITY;
    let mut at = 0;
    for (c, (l, v)) in lap.values().iter().zip(state.v.values()).enumerate() {
        let s = -l - w0_sup * v - k;
        if s > worst {
            worst = s;
            at = c;
        }
    }
    (worst, at)
}

/// Single-time check of `-lap w <= ||w0||_inf v + K`; passes when the worst
/// cell slack is `<= tol (K + 1)`.
pub fn check_neg_laplacian_w(
    state: &State,
    w0: &Field,
    k: f64,
    tol: f64,
    g: &Grid,
) -> CheckEntry {
    let mut tr = SlackTracker::new("neg_laplacian_w", tol);
    let (slack, cell) = neg_laplacian_w_slack(state, linf_norm(w0), k, g);
    tr.record(state.t, slack, k + 1.0, || {
        format!("slack {slack:.3e} at cell {cell}")
    });
    tr.entry(&format!("K = {k:.6e}; worst cell {cell}"))
}

/// `int u^p + int |grad v|^(2q)`.
pub fn functional_y(u: &Field, v: &Field, p: f64, q: f64, g: &Grid) -> f64 {
    let up = integrate_map(u, g, |x| x.abs().powf(p));
    let gv = grad_mag_sq(v, g);
    up + integrate_map(&gv, g, |x| x.powf(q))
}

/// `||grad v||_{L^s}` with the cell-centered gradient.
pub fn grad_lp_norm(v: &Field, s: f64, g: &Grid) -> Result<f64> {
    let mag = grad_mag_sq(v, g).map(f64::sqrt);
    lp_norm(&mag, s, g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Bounded,
    Growing,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerdictThresholds {
    pub growth_tolerance: f64,
    pub growing_factor: f64,
}

impl Default for VerdictThresholds {
    fn default() -> Self {
        Self {
            growth_tolerance: default_growth(),
            growing_factor: default_growing_factor(),
        }
    }
}

/// Minimum series length for a verdict.
pub const MIN_VERDICT_SAMPLES: usize = 10;

/// Compares the maximum over the final `window_fraction` of the series with
/// the maximum over the preceding part.
pub fn boundedness_verdict(
    series: &[(f64, f64)],
    window_fraction: f64,
    th: VerdictThresholds,
) -> Verdict {
    growth_ratio(series, window_fraction)
        .map(|(early, late)| classify(early, late, th))
        .unwrap_or(Verdict::Inconclusive)
}

/// `(max over earlier part, max over final window)`.
pub fn growth_ratio(series: &[(f64, f64)], window_fraction: f64) -> Option<(f64, f64)> {
    if series.len() < MIN_VERDICT_SAMPLES || !(window_fraction > 0.0 && window_fraction < 1.0) {
        return None;
    }
    if series.iter().any(|s| !s.1.is_finite()) {
        return None;
    }
    let n = series.len();
    let tail = ((window_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let split = n - tail;
    let max = |xs: &[(f64, f64)]| xs.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    Some((max(&series[..split]), max(&series[split..])))
}

fn classify(early: f64, late: f64, th: VerdictThresholds) -> Verdict {
    if late <= (1.0 + th.growth_tolerance) * early || (late <= 0.0 && early <= 0.0) {
        Verdict::Bounded
    } else if late > th.growing_factor * early {
        Verdict::Growing
    } else {
        Verdict::Inconclusive
    }
}

/// `[1, n / (n - 1))`, the admissible range of the gradient exponent.
pub fn admissible_gradient_exponent(s: f64, n: u32) -> bool {
    let upper = if n <= 1 {
        f64::INFINITY
    } else {
        f64::from(n) / f64::from(n - 1)
    };
    s >= 1.0 && s < upper
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSeries {
    pub s: f64,
    pub series: Vec<(f64, f64)>,
    pub warning: Option<String>,
}

/// `||grad v(t)||_{L^s}` over stored states for every `s`.
pub fn semigroup_norm_series(
    states: &[State],
    s_list: &[f64],
    n: u32,
    g: &Grid,
) -> Result<Vec<GradientSeries>> {
    s_list
        .iter()
        .map(|&s| {
            let series = states
                .iter()
                .map(|st| Ok((st.t, grad_lp_norm(&st.v, s, g)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(GradientSeries {
                s,
                series,
                warning: gradient_exponent_warning(s, n),
            })
        })
        .collect()
}

fn gradient_exponent_warning(s: f64, n: u32) -> Option<String> {
    (!admissible_gradient_exponent(s, n)).then(|| {
        format!("s = {s} lies outside [1, n/(n-1)) for n = {n}; series computed anyway")
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictEntry {
    pub quantity: String,
    pub verdict: Verdict,
    pub early_max: f64,
    pub final_max: f64,
}

/// Everything the monitor produced for one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MonitorSummary {
    pub report: InvariantReport,
    pub verdicts: Vec<VerdictEntry>,
    pub warnings: Vec<String>,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    pub mass_star: f64,
}

impl MonitorSummary {
    pub fn verdict(&self, quantity: &str) -> Option<&VerdictEntry> {
        self.verdicts.iter().find(|v| v.quantity == quantity)
    }
}

/// Per-sample monitored series.
#[derive(Debug, Clone, Default)]
pub struct MonitorSeries {
    pub t: Vec<f64>,
    pub mass: Vec<f64>,
    pub linf_u: Vec<f64>,
    /// One column per monitored `(p, q)` pair.
    pub y: Vec<Vec<f64>>,
    /// One column per gradient exponent `s`.
    pub grad_v: Vec<Vec<f64>>,
    /// Worst slack `-lap w - ||w0|| v - K` at each sample.
    pub neg_lap_w_slack: Vec<f64>,
    /// Whether all per-step checks held up to this sample.
    pub flags_ok: Vec<bool>,
}

/// Observer that evaluates every monitored estimate along a run.
pub struct InvariantMonitor {
    config: MonitorConfig,
    analysis_n: u32,
    mu: f64,
    m_star: f64,
    w0_sup: f64,
    k: Option<f64>,
    w0_positive: bool,
    pub series: MonitorSeries,
    positivity: SlackTracker,
    w_bound: SlackTracker,
    w_monotone: SlackTracker,
    step_mass: SlackTracker,
    neg_lap_w: SlackTracker,
    warnings: Vec<String>,
}

impl InvariantMonitor {
    pub fn new(
        config: MonitorConfig,
        analysis_n: u32,
        mu: f64,
        u0: &Field,
        w0: &Field,
        g: &Grid,
    ) -> Result<Self> {
        config.validate()?;
        let w0_positive = w0.values().iter().all(|&x| x > 0.0);
        let k = if w0_positive {
            Some(compute_K(w0, g)?)
        } else {
            None
        };
        let mut warnings: Vec<String> = config
            .s_list
            .iter()
            .filter_map(|&s| gradient_exponent_warning(s, analysis_n))
            .collect();
        if !w0_positive {
            warnings.push("w0 is not strictly positive; K and the -lap w check are skipped".into());
        }
        let tol = config.tolerance;
        let npairs = config.p_list.len();
        let ns = config.s_list.len();
        Ok(Self {
            analysis_n,
            mu,
            m_star: mass_star(u0, g),
            w0_sup: linf_norm(w0),
            k,
            w0_positive,
            series: MonitorSeries {
                y: vec![Vec::new(); npairs],
                grad_v: vec![Vec::new(); ns],
                ..Default::default()
            },
            positivity: SlackTracker::new("positivity", 0.0),
            w_bound: SlackTracker::new("w_upper_bound", 0.0),
            w_monotone: SlackTracker::new("w_monotone", 0.0),
            step_mass: SlackTracker::new("mass_conservation_per_step", STEP_MASS_TOLERANCE),
            neg_lap_w: SlackTracker::new("neg_laplacian_w", tol),
            warnings,
            config,
        })
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.config
    }

    #[allow(non_snake_case)]
    pub fn K(&self) -> Option<f64> {
        self.k
    }

    fn flags_ok(&self) -> bool {
        !(self.positivity.failed || self.w_bound.failed || self.w_monotone.failed || self.step_mass.failed)
    }

    fn check_positivity(&mut self, s: &State) {
        let umin = s.u.min();
        let vmin = s.v.min();
        let wmin = s.w.min();
        // w must stay strictly positive when it starts so
        let w_slack = if self.w0_positive {
            if wmin > 0.0 {
                -wmin
            } else {
                f64::MIN_POSITIVE
            }
        } else {
            -wmin
        };
        let slack = (-umin).max(-vmin).max(w_slack);
        self.positivity.record(s.t, slack, 0.0, || {
            format!("min u = {umin:.3e}, min v = {vmin:.3e}, min w = {wmin:.3e} at t = {}", s.t)
        });
        let wmax = s.w.max();
        let sup = self.w0_sup;
        self.w_bound.record(s.t, wmax - sup, 0.0, || {
            format!("max w = {wmax:.17e} exceeds ||w0|| = {sup:.17e}")
        });
    }

    /// Builds the report and verdicts once the run has finished.
    pub fn finish(&self) -> MonitorSummary {
        let tol = self.config.tolerance;
        let mass_series: Vec<(f64, f64)> = self
            .series
            .t
            .iter()
            .copied()
            .zip(self.series.mass.iter().copied())
            .collect();
        let mut entries = vec![check_mass_bound(&mass_series, self.m_star, self.mu, tol)];
        if self.mu == 0.0 {
            entries.push(self.step_mass.entry(""));
        }
        entries.push(self.positivity.entry(""));
        entries.push(self.w_bound.entry(&format!("||w0|| = {:.6e}", self.w0_sup)));
        entries.push(self.w_monotone.entry(""));
        if let Some(k) = self.k {
            entries.push(self.neg_lap_w.entry(&format!("K = {k:.6e}")));
        }

        let th = VerdictThresholds {
            growth_tolerance: self.config.growth_tolerance,
            growing_factor: self.config.growing_factor,
        };
        let frac = self.config.window_fraction;
        let t = &self.series.t;
        let mut verdicts = Vec::new();
        let mut push = |name: String, col: &[f64]| {
            let series: Vec<(f64, f64)> = t.iter().copied().zip(col.iter().copied()).collect();
            let (early_max, final_max) = growth_ratio(&series, frac).unwrap_or((f64::NAN, f64::NAN));
            verdicts.push(VerdictEntry {
                quantity: name,
                verdict: boundedness_verdict(&series, frac, th),
                early_max,
                final_max,
            });
        };
        push("linf_u".into(), &self.series.linf_u);
        for (k, &s) in self.config.s_list.iter().enumerate() {
            push(format!("grad_v_L{s}"), &self.series.grad_v[k]);
        }
        for (k, (p, q)) in self.config.pairs().into_iter().enumerate() {
            push(format!("y_{p}_{q}"), &self.series.y[k]);
        }
        let mut warnings = self.warnings.clone();
        let _ = self.analysis_n;
        if self.series.t.len() < MIN_VERDICT_SAMPLES {
            warnings.push(format!(
                "only {} samples; verdicts need at least {MIN_VERDICT_SAMPLES}",
                self.series.t.len()
            ));
        }
        MonitorSummary {
            report: InvariantReport { entries },
            verdicts,
            warnings,
            k: self.k,
            mass_star: self.m_star,
        }
    }
}

impl Observer for InvariantMonitor {
    fn on_sample(&mut self, s: &State, _dt: f64, g: &Grid) {
        let t = s.t;
        self.series.t.push(t);
        self.series.mass.push(integrate(&s.u, g));
        self.series.linf_u.push(linf_norm(&s.u));
        for (k, (p, q)) in self.config.pairs().into_iter().enumerate() {
            self.series.y[k].push(functional_y(&s.u, &s.v, p, q, g));
        }
        let gm = grad_mag_sq(&s.v, g).map(f64::sqrt);
        for (k, &ex) in self.config.s_list.iter().enumerate() {
            let val = lp_norm(&gm, ex, g).unwrap_or(f64::NAN);
            self.series.grad_v[k].push(val);
        }
        self.check_positivity(s);
        if let Some(k) = self.k {
            let (slack, cell) = neg_laplacian_w_slack(s, self.w0_sup, k, g);
            self.series.neg_lap_w_slack.push(slack);
            self.neg_lap_w.record(t, slack, k + 1.0, || {
                format!("slack {slack:.3e} at cell {cell}, t = {t}")
            });
        } else {
            self.series.neg_lap_w_slack.push(f64::NAN);
        }
        let ok = self.flags_ok();
        self.series.flags_ok.push(ok);
    }

    fn on_step(&mut self, prev: &State, next: &State, g: &Grid) {
        let mut rise = f64::NEG_INFINITY;
        let mut at = 0;
        for (c, (a, b)) in prev.w.values().iter().zip(next.w.values()).enumerate() {
            if b - a > rise {
                rise = b - a;
                at = c;
            }
        }
        self.w_monotone.record(next.t, rise, 0.0, || {
            format!("w increased by {rise:e} at cell {at}, t = {}", next.t)
        });
        if self.mu == 0.0 {
            let m0 = integrate(&prev.u, g);
            let m1 = integrate(&next.u, g);
            self.step_mass.record(next.t, (m1 - m0).abs(), m0, || {
                format!("step mass change {:.3e} (relative) at t = {}", (m1 - m0).abs() / m0, next.t)
            });
        }
        self.check_positivity(next);
    }
}

/// Regularized or not, the diffusion spec the verdict was taken under; used
/// only to label reports.
pub fn describe_diffusion(d: &DiffusionSpec) -> String {
    format!(
        "D(s) = {} + {} (s + {})^{}",
        d.offset,
        d.delta,
        d.epsilon,
        d.m - 1.0
    )
}
