mod common;

use common::{grid, ks_critical_5pct, ks_statistic, mean, variance};
use fbm_averaging::fbm::{increment_autocovariance, sample, FbmMethod};
use fbm_averaging::metrics::{holder_seminorm_full, HolderExponent};
use fbm_averaging::{sample_cholesky, sample_circulant, self_similar_rescale, FbmBatch, HurstParam};

fn h(v: f64) -> HurstParam {
    HurstParam::new(v).unwrap()
}

fn column(batch: &FbmBatch, k: usize) -> Vec<f64> {
    batch.paths().map(|p| p[k]).collect()
}

fn var_band(n_paths: usize) -> f64 {
    3.0 * (2.0 / n_paths as f64).sqrt()
}

#[test]
fn cholesky_terminal_variance_on_one_step() {
    let b = sample_cholesky(grid(1.0, 1), h(0.7), 10_000, 11).unwrap();
    let v = variance(&column(&b, 1));
    assert!((v - 1.0).abs() < var_band(10_000), "Var B_1 = {v}");
}

#[test]
fn same_seed_gives_identical_batches() {
    for method in [FbmMethod::Cholesky, FbmMethod::Circulant] {
        let a = sample(method, grid(1.0, 64), h(0.7), 20, 5).unwrap();
        let b = sample(method, grid(1.0, 64), h(0.7), 20, 5).unwrap();
        let c = sample(method, grid(1.0, 64), h(0.7), 20, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.path(0), c.path(0));
    }
}

#[test]
fn output_does_not_depend_on_thread_count() {
    let run = |threads: usize, method: FbmMethod| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sample(method, grid(2.0, 128), h(0.8), 300, 99).unwrap())
    };
    for method in [FbmMethod::Cholesky, FbmMethod::Circulant] {
        let one = run(1, method);
        assert_eq!(one, run(3, method));
        assert_eq!(one, run(8, method));
    }
}

#[test]
fn brownian_increments_are_uncorrelated() {
    let n = 10_000;
    let b = sample_cholesky(grid(1.0, 2), h(0.5), n, 3).unwrap();
    let first: Vec<f64> = b.paths().map(|p| p[1] - p[0]).collect();
    let second: Vec<f64> = b.paths().map(|p| p[2] - p[1]).collect();
    let cov = first.iter().zip(&second).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let corr = cov / (variance(&first) * variance(&second)).sqrt();
    assert!(corr.abs() < 3.0 / (n as f64).sqrt(), "corr = {corr}");

    let c = sample_circulant(grid(1.0, 64), h(0.5), 2000, 4).unwrap();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..c.n_paths() {
        let inc = c.increments(i);
        num += inc.windows(2).map(|w| w[0] * w[1]).sum::<f64>();
        den += inc.iter().map(|x| x * x).sum::<f64>();
    }
    let lag1 = num / den;
    let count = (c.n_paths() * 63) as f64;
    assert!(lag1.abs() < 3.0 / count.sqrt(), "lag-1 correlation = {lag1}");
}

/// Per-path mean of `ΔB_j ΔB_{j+k}`, then mean and standard error across paths.
fn autocov_estimate(batch: &FbmBatch, k: usize) -> (f64, f64) {
    let per_path: Vec<f64> = (0..batch.n_paths())
        .map(|i| {
            let inc = batch.increments(i);
            let m = inc.len() - k;
            (0..m).map(|j| inc[j] * inc[j + k]).sum::<f64>() / m as f64
        })
        .collect();
    (mean(&per_path), (variance(&per_path) / per_path.len() as f64).sqrt())
}

#[test]
fn increment_autocovariance_matches_closed_form() {
    let hp = h(0.7);
    for method in [FbmMethod::Circulant, FbmMethod::Cholesky] {
        let batch = sample(method, grid(1.0, 128), hp, 3000, 21).unwrap();
        let dt = batch.grid().dt();
        for k in 1..=10 {
            let (est, se) = autocov_estimate(&batch, k);
            let want = increment_autocovariance(k, hp, dt);
            assert!((est - want).abs() < 3.0 * se, "{method:?} lag {k}: {est} vs {want} (se {se})");
        }
    }
}

#[test]
fn circulant_and_cholesky_marginals_agree_at_every_node() {
    // Bonferroni over the 64 nodes keeps the family-wise level at 5%.
    let n = 64;
    let circ = sample_circulant(grid(1.0, n), h(0.7), 4000, 1).unwrap();
    let chol = sample_cholesky(grid(1.0, n), h(0.7), 4000, 2).unwrap();
    let crit = ks_critical_5pct(4000, 4000) * (1.628 / 1.358);
    let mut worst = 0.0f64;
    for k in 1..=n {
        worst = worst.max(ks_statistic(&column(&circ, k), &column(&chol, k)));
    }
    assert!(worst < crit, "max KS statistic {worst} vs {crit}");
}

#[test]
fn rescaled_batch_keeps_unit_variance() {
    // ε^H B_{t/ε} at t = 1 with ε = 0.25 needs the path up to time 4
    let b = sample_circulant(grid(4.0, 64), h(0.7), 10_000, 8).unwrap();
    let r = self_similar_rescale(&b, 0.25).unwrap();
    assert!((r.grid().t_end() - 1.0).abs() < 1e-15);
    let v = variance(&column(&r, 64));
    assert!((v - 1.0).abs() < var_band(10_000), "Var = {v}");
}

#[test]
fn rescaling_composes() {
    let b = sample_circulant(grid(3.0, 48), h(0.75), 5, 2).unwrap();
    let (e1, e2) = (0.3, 0.07);
    let twice = self_similar_rescale(&self_similar_rescale(&b, e1).unwrap(), e2).unwrap();
    let once = self_similar_rescale(&b, e1 * e2).unwrap();
    assert!((twice.grid().t_end() - once.grid().t_end()).abs() < 1e-15);
    for (p, q) in twice.paths().zip(once.paths()) {
        for (x, y) in p.iter().zip(q) {
            assert!((x - y).abs() <= 1e-14 * x.abs().max(1.0), "{x} vs {y}");
        }
    }
    assert_eq!(self_similar_rescale(&b, 1.0).unwrap(), b);
}

#[test]
fn holder_seminorm_below_hurst_is_stable_under_refinement() {
    let fine = sample_circulant(grid(1.0, 1024), h(0.7), 200, 17).unwrap();
    let coarse = fine.subsample(2).unwrap();
    let beta = HolderExponent::new(0.5).unwrap();
    let avg = |b: &FbmBatch| {
        let v: Vec<f64> = (0..b.n_paths()).map(|i| holder_seminorm_full(&b.sample_path(i), beta).value).collect();
        assert!(v.iter().all(|x| x.is_finite()));
        mean(&v)
    };
    let (c, f) = (avg(&coarse), avg(&fine));
    assert!(((f - c) / c).abs() < 0.1, "coarse {c}, fine {f}");
}
