use hapto_core::degenerate::{epsilon_sweep, SweepBase};
use hapto_core::grid::integrate_map;
use hapto_core::monitor::MonitorConfig;
use hapto_core::presets::Preset;
use hapto_core::stepper::{advance, DiffusionScheme, StepControls};
use hapto_core::{DiffusionSpec, Field, Grid, ModelParams};

fn bump() -> Preset {
    Preset::GaussianBump {
        amplitude: 1.0,
        width: 0.15,
        mass: Some(1.0),
        w_modulation: 0.25,
    }
}

fn final_u(g: &Grid, dt: f64) -> Field {
    let init = bump().build(g).unwrap();
    let p = ModelParams::new(2.0, 1.0, 1.0).unwrap();
    let d = DiffusionSpec::power_law(1.0, 1.5).unwrap();
    let mut c = StepControls::new(0.2);
    c.scheme = DiffusionScheme::LinearlyImplicit;
    c.cfl_adv = 1.0;
    c.dt_max = dt;
    let traj = advance(&init, &p, &d, &c, g, &mut []).unwrap();
    assert!(traj.status.is_completed());
    // the step cap must be what sets dt for the order to mean anything
    assert_eq!(traj.steps, (0.2 / dt).round() as usize);
    traj.final_state.u
}

fn l1_diff(a: &Field, b: &Field, g: &Grid) -> f64 {
    let d = Field::from_vec(
        g,
        a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect(),
    )
    .unwrap();
    integrate_map(&d, g, f64::abs)
}

#[test]
fn halving_dt_gives_first_order_self_convergence() {
    let g = Grid::unit(2, 24).unwrap();
    let us: Vec<Field> = [2e-3, 1e-3, 5e-4].iter().map(|&dt| final_u(&g, dt)).collect();
    let e1 = l1_diff(&us[0], &us[1], &g);
    let e2 = l1_diff(&us[1], &us[2], &g);
    let order = (e1 / e2).log2();
    assert!(order >= 0.9, "observed order {order} ({e1:.3e}, {e2:.3e})");
}

#[test]
fn repeated_runs_are_bit_identical() {
    let g = Grid::unit(2, 16).unwrap();
    let init = Preset::PerturbedEquilibrium {
        rho: 0.1,
        seed: 7,
        w_level: 0.5,
    }
    .build(&g)
    .unwrap();
    let p = ModelParams::new(5.0, 1.0, 1.0).unwrap();
    let d = DiffusionSpec::power_law(1.0, 2.0).unwrap();
    let c = StepControls::new(0.3);
    let a = advance(&init, &p, &d, &c, &g, &mut []).unwrap();
    let b = advance(&init, &p, &d, &c, &g, &mut []).unwrap();
    assert_eq!(a.samples, b.samples);
    assert_eq!(a.final_state, b.final_state);
}

#[test]
fn sweep_does_not_depend_on_worker_count() {
    let g = Grid::unit(2, 16).unwrap();
    let mut controls = StepControls::new(0.5);
    controls.scheme = DiffusionScheme::LinearlyImplicit;
    let base = SweepBase {
        grid: g.clone(),
        params: ModelParams::new(5.0, 1.0, 1.0).unwrap(),
        diffusion: DiffusionSpec::power_law(1.0, 2.0).unwrap(),
        controls,
        initial: bump().build(&g).unwrap(),
        monitor: MonitorConfig::default_for(2.0),
        analysis_n: 2,
    };
    let eps = [1e-1, 1e-2, 1e-3];
    let run = |workers: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .unwrap();
        let rep = pool.install(|| epsilon_sweep(&base, &eps, 1.5).unwrap());
        serde_json::to_string(&rep).unwrap()
    };
    assert_eq!(run(1), run(3));
}
