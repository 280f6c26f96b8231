//! Run orchestration behind the `hapto` binary: single runs, parameter
//! sweeps and self-verification, with every result written to disk.

use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

use hapto_core::config::RunConfig;
use hapto_core::degenerate::{epsilon_sweep_with, run_monitored, status_parts, MonitoredRun, SweepBase};
use hapto_core::grid::{integrate, linf_norm, Field, Grid};
use hapto_core::monitor::{MonitorConfig, MonitorSummary};
use hapto_core::operators::{diffusion_divergence, laplacian, taxis_divergence};
use hapto_core::output::{write_json, write_snapshot_bin, write_snapshot_csv, write_trajectory_csv};
use hapto_core::presets::Preset;
use hapto_core::solver::solve_helmholtz;
use hapto_core::stepper::{RunStatus, State};
use hapto_core::Error;

/// Worker count for sweeps; unset means one worker per core.
pub const WORKERS_ENV: &str = "HAPTO_WORKERS";

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const INVARIANT: i32 = 2;
    pub const BLOW_UP: i32 = 3;
    pub const SOLVER: i32 = 4;
    pub const IO: i32 = 5;
}

/// Maps a library error to an exit code.
pub fn error_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) | Error::Json(_) => exit::IO,
        Error::SolverFailure { .. } => exit::SOLVER,
        Error::Positivity { .. } | Error::NegativeDensity { .. } => exit::INVARIANT,
        _ => exit::USAGE,
    }
}

/// Exit code for a finished run.
pub fn run_code(status: &RunStatus, summary: &MonitorSummary) -> i32 {
    match status {
        RunStatus::BlowUpSuspected { .. } => exit::BLOW_UP,
        RunStatus::SolverFailure { .. } => exit::SOLVER,
        RunStatus::PositivityLost { .. } => exit::INVARIANT,
        RunStatus::Completed if !summary.report.all_pass() => exit::INVARIANT,
        RunStatus::Completed => exit::OK,
    }
}

#[derive(Debug, Clone, Serialize)]
struct RunSummary<'a> {
    status: &'a RunStatus,
    exit_code: i32,
    steps: usize,
    preset: &'a Preset,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    config_warnings: &'a [String],
    monitor: &'a MonitorSummary,
}

/// Options that only affect what gets written.
#[derive(Debug, Clone, Copy, Default)]
pub struct OutputOptions {
    /// Also write binary copies of the final snapshots.
    pub binary: bool,
}

fn run_member(cfg: &RunConfig) -> hapto_core::Result<MonitoredRun> {
    let init = cfg.initial.build(&cfg.grid)?;
    run_monitored(
        &init,
        &cfg.params,
        &cfg.diffusion,
        &cfg.controls,
        &cfg.monitor,
        cfg.analysis_n,
        &cfg.grid,
    )
}

fn write_state(dir: &Path, stem: &str, s: &State, g: &Grid, opts: OutputOptions) -> hapto_core::Result<()> {
    for (name, f) in [("u", &s.u), ("v", &s.v), ("w", &s.w)] {
        write_snapshot_csv(&dir.join(format!("{stem}_{name}.csv")), name, f, s.t, g)?;
        if opts.binary {
            write_snapshot_bin(&dir.join(format!("{stem}_{name}.bin")), f, s.t, g)?;
        }
    }
    Ok(())
}

/// Writes everything a run produced into `dir` and returns its exit code.
fn write_run(dir: &Path, cfg: &RunConfig, run: &MonitoredRun, opts: OutputOptions) -> hapto_core::Result<i32> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    let traj = &run.trajectory;
    write_trajectory_csv(
        &dir.join("trajectory.csv"),
        &traj.samples,
        &run.series,
        &cfg.monitor.pairs(),
    )?;
    write_json(&dir.join("report.json"), &run.summary.report.entries)?;
    let code = run_code(&traj.status, &run.summary);
    write_json(
        &dir.join("summary.json"),
        &RunSummary {
            status: &traj.status,
            exit_code: code,
            steps: traj.steps,
            preset: &cfg.initial,
            config_warnings: &cfg.warnings,
            monitor: &run.summary,
        },
    )?;
    let snaps = dir.join("snapshots");
    write_state(&snaps, "final", &traj.final_state, &cfg.grid, opts)?;
    for (k, s) in traj.snapshots.iter().enumerate() {
        write_state(&snaps, &format!("sample{k:05}"), s, &cfg.grid, opts)?;
    }
    Ok(code)
}

fn report_line(out: &mut impl Write, label: &str, code: i32, run: &MonitoredRun) {
    let (status, message) = status_parts(&run.trajectory.status);
    let _ = writeln!(
        out,
        "{label}: {status}{} after {} steps, exit {code}",
        message.map(|m| format!(" ({m})")).unwrap_or_default(),
        run.trajectory.steps
    );
    for e in run.summary.report.failures() {
        let _ = writeln!(out, "  check {} failed: worst slack {:e} at t = {}", e.check, e.worst_slack, e.t_worst);
    }
}

/// Single run into `cfg.output`.
pub fn run(cfg: &RunConfig, opts: OutputOptions, log: &mut impl Write) -> i32 {
    for w in &cfg.warnings {
        let _ = writeln!(log, "warning: {w}");
    }
    let run = match run_member(cfg) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(log, "error: {e}");
            return error_code(&e);
        }
    };
    for w in &run.summary.warnings {
        let _ = writeln!(log, "warning: {w}");
    }
    match write_run(&cfg.output, cfg, &run, opts) {
        Ok(code) => {
            report_line(log, "run", code, &run);
            code
        }
        Err(e) => {
            let _ = writeln!(log, "error: writing {}: {e}", cfg.output.display());
            exit::IO
        }
    }
}

fn worker_pool() -> Result<rayon::ThreadPool, String> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| e.to_string())
}

fn member_dir(cfg: &RunConfig, value: f64) -> PathBuf {
    cfg.output.join("sweep").join(format!("{value}"))
}

#[derive(Debug, Clone)]
struct MemberRow {
    value: f64,
    code: i32,
    status: String,
    checks_pass: bool,
    max_linf_u: f64,
    final_linf_u: f64,
    final_linf_v: f64,
    final_linf_w: f64,
    verdicts: Vec<(String, String)>,
}

impl MemberRow {
    fn from_run(value: f64, code: i32, run: &MonitoredRun) -> Self {
        let last = run.trajectory.samples.last();
        let pick = |f: fn(&hapto_core::stepper::Sample) -> f64| last.map(f).unwrap_or(f64::NAN);
        Self {
            value,
            code,
            status: status_parts(&run.trajectory.status).0,
            checks_pass: run.summary.report.all_pass(),
            max_linf_u: run.series.linf_u.iter().copied().fold(f64::NAN, f64::max),
            final_linf_u: pick(|s| s.linf_u),
            final_linf_v: pick(|s| s.linf_v),
            final_linf_w: pick(|s| s.linf_w),
            verdicts: run
                .summary
                .verdicts
                .iter()
                .map(|v| (v.quantity.clone(), format!("{:?}", v.verdict).to_lowercase()))
                .collect(),
        }
    }

    fn failed(value: f64, code: i32, status: &str) -> Self {
        Self {
            value,
            code,
            status: status.into(),
            checks_pass: false,
            max_linf_u: f64::NAN,
            final_linf_u: f64::NAN,
            final_linf_v: f64::NAN,
            final_linf_w: f64::NAN,
            verdicts: Vec::new(),
        }
    }
}

fn write_summary_csv(path: &Path, param: &str, rows: &[MemberRow]) -> std::io::Result<()> {
    let mut quantities: Vec<String> = Vec::new();
    for r in rows {
        for (q, _) in &r.verdicts {
            if !quantities.contains(q) {
                quantities.push(q.clone());
            }
        }
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(
        f,
        "{param},exit_code,status,checks_pass,max_linf_u,final_linf_u,final_linf_v,final_linf_w"
    )?;
    for q in &quantities {
        write!(f, ",verdict_{q}")?;
    }
    writeln!(f)?;
    for r in rows {
        write!(
            f,
            "{},{},{},{},{},{},{},{}",
            r.value,
            r.code,
            r.status,
            r.checks_pass,
            r.max_linf_u,
            r.final_linf_u,
            r.final_linf_v,
            r.final_linf_w
        )?;
        for q in &quantities {
            let v = r
                .verdicts
                .iter()
                .find(|(n, _)| n == q)
                .map(|(_, v)| v.as_str())
                .unwrap_or("");
            write!(f, ",{v}")?;
        }
        writeln!(f)?;
    }
    f.flush()
}

/// Config for one member of an `m` sweep. Monitor pairs follow the new `m`
/// unless the base config overrode them.
pub fn with_m(base: &RunConfig, m: f64) -> hapto_core::Result<RunConfig> {
    let mut cfg = base.clone();
    cfg.diffusion.m = m;
    cfg.diffusion.validate()?;
    let default_base = MonitorConfig::default_for(base.diffusion.m);
    if base.monitor.p_list == default_base.p_list && base.monitor.q_list == default_base.q_list {
        let d = MonitorConfig::default_for(m);
        cfg.monitor.p_list = d.p_list;
        cfg.monitor.q_list = d.q_list;
    }
    cfg.warnings.clear();
    let regime = hapto_core::model::validate_regime(&cfg.diffusion, cfg.analysis_n);
    if !regime.within_theorem {
        cfg.warnings.push(format!(
            "m = {m} is outside the boundedness regime m > {:.6} for n = {}",
            regime.threshold, cfg.analysis_n
        ));
    }
    cfg.output = member_dir(base, m);
    Ok(cfg)
}

/// Independent runs over `values` of `m`, in parallel.
pub fn sweep_m(base: &RunConfig, values: &[f64], opts: OutputOptions, log: &mut impl Write) -> i32 {
    if values.len() < 2 {
        let _ = writeln!(log, "error: sweep-m needs at least 2 values, got {}", values.len());
        return exit::USAGE;
    }
    let pool = match worker_pool() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(log, "error: {e}");
            return exit::USAGE;
        }
    };
    let results: Vec<(MemberRow, Vec<String>)> = pool.install(|| {
        values
            .par_iter()
            .map(|&m| {
                let mut lines = Vec::new();
                let cfg = match with_m(base, m) {
                    Ok(c) => c,
                    Err(e) => {
                        lines.push(format!("m = {m}: error: {e}"));
                        return (MemberRow::failed(m, exit::USAGE, "config_error"), lines);
                    }
                };
                lines.extend(cfg.warnings.iter().map(|w| format!("m = {m}: warning: {w}")));
                match run_member(&cfg) {
                    Ok(run) => match write_run(&cfg.output, &cfg, &run, opts) {
                        Ok(code) => {
                            let mut buf = Vec::new();
                            report_line(&mut buf, &format!("m = {m}"), code, &run);
                            lines.push(String::from_utf8_lossy(&buf).trim_end().to_string());
                            (MemberRow::from_run(m, code, &run), lines)
                        }
                        Err(e) => {
                            lines.push(format!("m = {m}: error writing output: {e}"));
                            (MemberRow::from_run(m, exit::IO, &run), lines)
                        }
                    },
                    Err(e) => {
                        lines.push(format!("m = {m}: error: {e}"));
                        (MemberRow::failed(m, error_code(&e), "error"), lines)
                    }
                }
            })
            .collect()
    });
    for (_, lines) in &results {
        for l in lines {
            let _ = writeln!(log, "{l}");
        }
    }
    let rows: Vec<MemberRow> = results.into_iter().map(|(r, _)| r).collect();
    if let Err(e) = std::fs::create_dir_all(&base.output)
        .and_then(|_| write_summary_csv(&base.output.join("summary.csv"), "m", &rows))
    {
        let _ = writeln!(log, "error: writing summary: {e}");
        return exit::IO;
    }
    rows.iter().map(|r| r.code).max().unwrap_or(exit::OK)
}

/// Default exponent for the `integrate(u^theta)` monitor: just above
/// `max(1, m/2)`.
pub fn default_theta(m: f64) -> f64 {
    1f64.max(0.5 * m) + 0.5
}

/// Regularization sweep over `values` of epsilon, in parallel.
pub fn sweep_eps(
    base: &RunConfig,
    values: &[f64],
    theta: Option<f64>,
    opts: OutputOptions,
    log: &mut impl Write,
) -> i32 {
    if values.len() < 3 {
        let _ = writeln!(log, "error: sweep-eps needs at least 3 values, got {}", values.len());
        return exit::USAGE;
    }
    for w in &base.warnings {
        let _ = writeln!(log, "warning: {w}");
    }
    let pool = match worker_pool() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(log, "error: {e}");
            return exit::USAGE;
        }
    };
    let initial = match base.initial.build(&base.grid) {
        Ok(i) => i,
        Err(e) => {
            let _ = writeln!(log, "error: {e}");
            return error_code(&e);
        }
    };
    let sb = SweepBase {
        grid: base.grid.clone(),
        params: base.params,
        diffusion: base.diffusion,
        controls: base.controls.clone(),
        initial,
        monitor: base.monitor.clone(),
        analysis_n: base.analysis_n,
    };
    let theta = theta.unwrap_or_else(|| default_theta(base.diffusion.m));
    let codes = std::sync::Mutex::new(Vec::new());
    let sink = |eps: f64, run: &MonitoredRun| -> hapto_core::Result<()> {
        let mut cfg = base.clone();
        cfg.diffusion.epsilon = eps;
        cfg.output = member_dir(base, eps);
        let code = write_run(&cfg.output, &cfg, run, opts)?;
        codes.lock().unwrap().push((eps, MemberRow::from_run(eps, code, run)));
        Ok(())
    };
    let report = match pool.install(|| epsilon_sweep_with(&sb, values, theta, sink)) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(log, "error: {e}");
            return error_code(&e);
        }
    };
    let mut done = codes.into_inner().unwrap();
    let mut rows = Vec::with_capacity(report.members.len());
    for m in &report.members {
        let pos = done.iter().position(|(e, _)| *e == m.epsilon);
        let row = match (m.status.as_str(), pos) {
            ("output_error", _) => MemberRow::failed(m.epsilon, exit::IO, "output_error"),
            (_, Some(i)) => done.remove(i).1,
            (s, None) => MemberRow::failed(m.epsilon, exit::USAGE, s),
        };
        let _ = writeln!(
            log,
            "eps = {}: {}{}, exit {}",
            m.epsilon,
            m.status,
            m.message.as_ref().map(|s| format!(" ({s})")).unwrap_or_default(),
            row.code
        );
        rows.push(row);
    }
    for (k, d) in report.distances.iter().enumerate() {
        let _ = writeln!(
            log,
            "d({}, {}) = {}",
            report.epsilons[k],
            report.epsilons[k + 1],
            d.map(|x| format!("{x:e}")).unwrap_or_else(|| "n/a".into())
        );
    }
    let _ = writeln!(
        log,
        "Cauchy verdict: {}",
        if report.cauchy_pass { "pass" } else { "fail" }
    );
    let written = std::fs::create_dir_all(&base.output)
        .map_err(Error::from)
        .and_then(|_| write_json(&base.output.join("sweep_report.json"), &report))
        .and_then(|_| write_summary_csv(&base.output.join("summary.csv"), "epsilon", &rows).map_err(Error::from));
    if let Err(e) = written {
        let _ = writeln!(log, "error: writing sweep report: {e}");
        return exit::IO;
    }
    let worst = rows.iter().map(|r| r.code).max().unwrap_or(exit::OK);
    if worst == exit::OK && !report.cauchy_pass {
        exit::INVARIANT
    } else {
        worst
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfTest {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub tolerance: f64,
}

/// Steady-state run plus operator identities on the configured grid.
pub fn self_tests(cfg: &RunConfig) -> hapto_core::Result<Vec<SelfTest>> {
    let g = &cfg.grid;
    let mut out = Vec::new();
    let mut push = |name: &str, value: f64, tolerance: f64| {
        out.push(SelfTest {
            name: name.into(),
            pass: value <= tolerance,
            value,
            tolerance,
        })
    };

    let mut steady = cfg.clone();
    steady.initial = Preset::ConstantSteady { w0: 0.0 };
    let run = run_member(&steady)?;
    let s = &run.trajectory.final_state;
    let dev = s
        .u
        .values()
        .iter()
        .map(|u| (u - 1.0).abs())
        .chain(s.v.values().iter().map(|v| (v - 1.0).abs()))
        .chain(s.w.values().iter().map(|w| w.abs()))
        .fold(0.0, f64::max);
    let dev = if run.trajectory.status.is_completed() { dev } else { f64::INFINITY };
    push("steady_state_deviation", dev, 1e-10);

    // fixed, smooth, nonnegative fields
    let ext = g.extents().to_vec();
    let ly = if g.dim() == 2 { ext[1] } else { 1.0 };
    let a = Field::from_fn(g, |x, y| 1.0 + 0.5 * (3.0 * x / ext[0]).sin() * (2.0 * y / ly).cos());
    let b = Field::from_fn(g, |x, y| (x / ext[0] - 0.3).powi(2) + 0.5 * y / ly);
    let rel = |f: &Field| integrate(&f.map(f64::abs), g).max(f64::MIN_POSITIVE);
    let lap = laplacian(&a, g);
    push("laplacian_integral", integrate(&lap, g).abs() / rel(&lap), 1e-12);
    let dd = diffusion_divergence(&a, &cfg.diffusion, g)?;
    push("diffusion_integral", integrate(&dd, g).abs() / rel(&dd), 1e-12);
    let td = taxis_divergence(&a, &b, g);
    push("taxis_integral", integrate(&td, g).abs() / rel(&td), 1e-12);

    // discrete eigenpair of the Neumann Laplacian
    let hx = g.hx();
    let k = std::f64::consts::PI / ext[0];
    let lam = (2.0 - 2.0 * (k * hx).cos()) / (hx * hx);
    let mode = Field::from_fn(g, |x, _| (k * x).cos());
    let dt = 0.01;
    let sol = solve_helmholtz(&mode, dt, 1.0 + dt, g)?;
    let want = mode.map(|c| c / (1.0 + dt + dt * lam));
    let err = sol
        .values()
        .iter()
        .zip(want.values())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
        / linf_norm(&want);
    push("helmholtz_eigenpair", err, 1e-10);
    Ok(out)
}

/// `verify`: prints one line per self-test and writes `verify.json`.
pub fn verify(cfg: &RunConfig, log: &mut impl Write) -> i32 {
    let tests = match self_tests(cfg) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(log, "error: {e}");
            return error_code(&e);
        }
    };
    for t in &tests {
        let _ = writeln!(
            log,
            "{} {}: {:e} (tolerance {:e})",
            if t.pass { "PASS" } else { "FAIL" },
            t.name,
            t.value,
            t.tolerance
        );
    }
    if let Err(e) = write_json(&cfg.output.join("verify.json"), &tests) {
        let _ = writeln!(log, "error: {e}");
        return exit::IO;
    }
    if tests.iter().all(|t| t.pass) {
        exit::OK
    } else {
        exit::INVARIANT
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hapto_core::monitor::{CheckEntry, InvariantReport};

    fn summary(pass: bool) -> MonitorSummary {
        MonitorSummary {
            report: InvariantReport {
                entries: vec![CheckEntry {
                    check: "w_monotone".into(),
                    pass,
                    worst_slack: if pass { 0.0 } else { 1e-3 },
                    t_worst: 0.0,
                    details: String::new(),
                }],
            },
            ..Default::default()
        }
    }

    #[test]
    fn exit_code_contract() {
        assert_eq!(run_code(&RunStatus::Completed, &summary(true)), exit::OK);
        assert_eq!(run_code(&RunStatus::Completed, &summary(false)), exit::INVARIANT);
        let blow = RunStatus::BlowUpSuspected { t: 0.0, linf_u: 2.0 };
        assert_eq!(run_code(&blow, &summary(true)), exit::BLOW_UP);
        let solver = RunStatus::SolverFailure { t: 1.0, message: "x".into() };
        assert_eq!(run_code(&solver, &summary(true)), exit::SOLVER);
        let pos = RunStatus::PositivityLost { t: 1.0, message: "x".into() };
        assert_eq!(run_code(&pos, &summary(true)), exit::INVARIANT);
        let io = Error::Io(std::io::Error::other("x"));
        assert_eq!(error_code(&io), exit::IO);
        assert_eq!(error_code(&Error::Config("x".into())), exit::USAGE);
    }

    #[test]
    fn theta_default_is_admissible() {
        for m in [1.0, 1.5, 2.0, 3.0, 4.0] {
            assert!(default_theta(m) > 1f64.max(m / 2.0));
        }
    }
}
