mod common;

use std::sync::Arc;

use common::{grid, rk4};
use fbm_averaging::averaging::{log_log_slope, log_spaced, PhiProbes, StudyNorms, DEFAULT_AVERAGING_WINDOW};
use fbm_averaging::registry;
use fbm_averaging::solver::{sample_noise, ProbeSpec};
use fbm_averaging::{
    convergence_study, khasminskii_block_diagnostic, l2_path_norm, numeric_average_drift, phi_estimate, solve_averaged,
    solve_oscillatory, validate_assumptions, DiffusionModel, FbmBatch, HolderExponent, HurstParam,
    SolverConfig,
};

fn hurst() -> HurstParam {
    HurstParam::young(0.7).unwrap()
}

#[test]
fn benchmark_rate_curve_decays_like_inverse_window() {
    let b = registry::lookup::<f64>("benchmark").unwrap().drift;
    let t = log_spaced(10.0, 1000.0, 13);
    let curve = phi_estimate(&b, &t, &PhiProbes::default()).unwrap();
    let slope = log_log_slope(&t, &curve.envelope).unwrap();
    assert!((slope + 1.0).abs() <= 0.1, "envelope slope {slope}");
    assert_eq!(curve.ordering_violations, 0);
    assert!(curve.phi.iter().zip(&curve.phi_abs).all(|(p, a)| p <= a));
    assert!(curve.phi.iter().zip(&curve.envelope).all(|(p, e)| p <= e));
    // nodes 0, 6, 12 are T = 10, 100, 1000
    for k in [0, 6] {
        assert!(curve.phi[k + 6] < curve.phi[k], "{:?}", curve.phi);
    }
}

#[test]
fn numeric_average_is_bounded_and_lipschitz() {
    let entry = registry::lookup::<f64>("benchmark").unwrap();
    let numeric = numeric_average_drift(&entry.drift, DEFAULT_AVERAGING_WINDOW, 16_000).unwrap();
    let report = validate_assumptions(&numeric, &entry.diffusion, &ProbeSpec::default());
    let lip = report.checks.iter().find(|c| c.name.contains("bar")).expect("averaged Lipschitz check");
    assert!(lip.passed, "{lip:?}");

    let t = log_spaced(10.0, 1000.0, 5);
    let phi_max = phi_estimate(&entry.drift, &t, &PhiProbes::default()).unwrap().phi.into_iter().fold(0.0, f64::max);
    let m_b = entry.drift.constants().m_b;
    let avg = numeric.averaged().unwrap();
    let probes = ProbeSpec::default();
    for mu in probes.measures::<f64>() {
        for x in probes.states::<f64>() {
            let bound = m_b + phi_max * (1.0 + x.abs() + mu.second_moment());
            assert!(avg.eval(x, &mu).abs() <= bound);
        }
    }
}

#[test]
fn deterministic_two_scale_limit() {
    // σ ≡ 0 fails the non-degeneracy check, so the study runs forced
    let b = registry::lookup::<f64>("benchmark").unwrap().drift;
    let s = DiffusionModel::constant(0.0);
    let mut cfg = SolverConfig::new(1.0, 1.0, 8, grid(1.0, 256), hurst(), 3);
    cfg.force = true;
    let norms = StudyNorms { gamma: HolderExponent::new(0.55).unwrap(), lambda: 1.0 };
    let report = convergence_study(&cfg, &b, &s, &[1.0, 0.1, 0.01, 0.001], 2, norms).unwrap();
    let last = report.rows.last().unwrap();
    assert!(last.err_sup_sq.mean < 1e-4, "{:?}", last.err_sup_sq);
    assert!(last.err_holder_sq.mean < 1e-4, "{:?}", last.err_holder_sq);
    assert_eq!(last.err_sup_sq.se, 0.0);

    // the averaged particles follow x' = b̄(x, δ_x) = -tanh x / 2
    let avg = solve_averaged(&cfg, &b, &s, Arc::new(sample_noise(&cfg).unwrap())).unwrap();
    let reference = rk4(|x| -0.5 * x.tanh(), 1.0, 1.0, 256 * 8);
    for k in 0..=256 {
        assert!((avg.particle(0)[k] - reference[8 * k]).abs() < 2e-3);
    }
    assert!(validate_assumptions(&b, &s, &ProbeSpec::default()).violations().any(|c| c.name.contains("K")));
}

#[test]
fn block_diagnostic_is_stable_when_halving_blocks() {
    let entry = registry::lookup::<f64>("benchmark").unwrap();
    let cfg = SolverConfig::new(0.0, 0.05, 256, grid(1.0, 512), hurst(), 9);
    let traj = solve_oscillatory(&cfg, &entry.drift, &entry.diffusion, Arc::new(sample_noise(&cfg).unwrap())).unwrap();
    let dt = cfg.grid.dt();
    let mut prev: Option<f64> = None;
    for q in [64.0, 32.0, 16.0, 8.0] {
        let d = khasminskii_block_diagnostic(&traj, q * dt, 0.65).unwrap();
        if let Some(p) = prev {
            let r = d.normalized / p;
            assert!((0.25..=4.0).contains(&r), "δ = {q}Δ: ratio {r}");
        }
        prev = Some(d.normalized);
    }
}

#[test]
fn block_diagnostic_of_pure_noise_stays_bounded() {
    let entry = registry::lookup::<f64>("zero").unwrap();
    let cfg = SolverConfig::new(0.0, 1.0, 400, grid(1.0, 256), hurst(), 10);
    let traj = solve_oscillatory(&cfg, &entry.drift, &entry.diffusion, Arc::new(sample_noise(&cfg).unwrap())).unwrap();
    for q in [1.0, 4.0, 16.0, 64.0] {
        let d = khasminskii_block_diagnostic(&traj, q * cfg.grid.dt(), 0.65).unwrap();
        // E|B_δ|² = δ^{2H}; the max over nodes adds sampling noise only
        assert!(d.normalized < 1.5, "δ = {q}Δ: {}", d.normalized);
        assert!(d.normalized > 0.5 * d.delta.powf(1.4 - 1.3));
    }
}

#[test]
fn l2_path_norm_grows_with_the_horizon() {
    let long = sample_noise(&SolverConfig::new(0.0, 1.0, 100, grid(2.0, 256), hurst(), 12)).unwrap();
    let rows: Vec<Vec<f64>> = long.paths().map(|p| p[..=128].to_vec()).collect();
    let short = FbmBatch::from_rows(grid(1.0, 128), hurst(), long.method(), long.seed(), rows).unwrap();
    let entry = registry::lookup::<f64>("tanh").unwrap();
    let run = |noise: FbmBatch| {
        let cfg = SolverConfig::new(0.0, 1.0, 100, noise.grid(), hurst(), noise.seed());
        solve_oscillatory(&cfg, &entry.drift, &entry.diffusion, Arc::new(noise)).unwrap()
    };
    let (a, b) = (run(short), run(long));
    for i in 0..100 {
        assert_eq!(a.particle(i), &b.particle(i)[..=128]);
    }
    assert!(l2_path_norm(&a) <= l2_path_norm(&b));
}

#[test]
fn l2_path_norm_of_free_particles_matches_direct_sum() {
    let entry = registry::lookup::<f64>("zero").unwrap();
    let cfg = SolverConfig::new(0.0, 1.0, 300, grid(1.0, 64), hurst(), 13);
    let noise = Arc::new(sample_noise(&cfg).unwrap());
    let traj = solve_oscillatory(&cfg, &entry.drift, &entry.diffusion, Arc::clone(&noise)).unwrap();
    let direct: f64 = noise.paths().map(|p| p.iter().fold(0.0f64, |m, v| m.max(v.abs())).powi(2)).sum::<f64>() / 300.0;
    assert!((l2_path_norm(&traj) - direct.sqrt()).abs() < 1e-12);
}
