//! Averaged drifts, the averaging-rate audit, the ε-convergence study and
//! pathwise diagnostics on particle trajectories.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::metrics::{
    holder_norm, holder_seminorm_full, lambda_norm, sup_norm, wasserstein2, EmpiricalMeasure, HolderExponent,
};
use crate::rng::derive_seed;
use crate::scalar::Real;
use crate::solver::{
    sample_noise, solve_averaged, solve_oscillatory, validate_assumptions, AveragedDrift, DiffusionModel, DriftModel,
    ParticleTrajectories, ProbeSpec, SolverConfig,
};

/// Default averaging window.
pub const DEFAULT_AVERAGING_WINDOW: f64 = 1000.0;

/// Relative slack in the coupling check; both sides are equal when the
/// particle pairing is already sorted, up to summation order.
pub const COUPLING_RTOL: f64 = 1e-12;

/// `n` window lengths log-spaced on `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let ratio = hi / lo;
    let mut out: Vec<f64> = (0..n).map(|k| lo * ratio.powf(k as f64 / (n - 1) as f64)).collect();
    out[n - 1] = hi;
    out
}

/// Attaches `b̄(x, μ) = (1/T) ∫_0^T b(s, x, μ) ds`, computed by the midpoint
/// rule on `m_nodes` nodes. Time-independent drifts get `b̄ = b(0, ·, ·)`
/// exactly. The declared Lipschitz constant of `b̄` is `L_b`.
pub fn numeric_average_drift<T: Real>(b: &DriftModel<T>, t_avg: T, m_nodes: usize) -> Result<DriftModel<T>> {
    if !(t_avg > T::zero()) || !t_avg.is_finite() {
        return domain(format!("averaging window must be positive, got {t_avg}"));
    }
    if m_nodes < 16 {
        return domain(format!("need at least 16 averaging nodes, got {m_nodes}"));
    }
    let l_b = b.constants().l_b;
    let inner = b.clone();
    let averaged = if b.is_time_independent() {
        AveragedDrift::new(move |x, mu| inner.eval(T::zero(), x, mu), l_b)
    } else {
        let h = t_avg / T::from_index(m_nodes);
        let m = T::from_index(m_nodes);
        AveragedDrift::new(
            move |x, mu| {
                let mut acc = T::zero();
                for j in 0..m_nodes {
                    acc += inner.eval((T::from_index(j) + T::lit(0.5)) * h, x, mu);
                }
                acc / m
            },
            l_b,
        )
    };
    Ok(b.clone().with_averaged(averaged))
}

/// Probe set for [`phi_estimate`]. Window averages are computed with the
/// midpoint rule at `nodes_per_unit` nodes per unit of time.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiProbes<T> {
    pub start_times: Vec<T>,
    pub states: Vec<T>,
    pub measures: Vec<EmpiricalMeasure<T>>,
    pub nodes_per_unit: usize,
}

impl<T: Real> Default for PhiProbes<T> {
    /// 64 start times on `[0, 2π)`, 7 states on `[-3, 3]`, the first three
    /// validation measures, 8 nodes per unit time.
    fn default() -> Self {
        let two_pi = T::PI() + T::PI();
        Self {
            start_times: (0..64).map(|k| two_pi * T::from_index(k) / T::lit(64.0)).collect(),
            states: (0..7).map(|k| T::from_index(k) - T::lit(3.0)).collect(),
            measures: ProbeSpec::default().measures().into_iter().take(3).collect(),
            nodes_per_unit: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub n_start_times: usize,
    pub start_time_min: f64,
    pub start_time_max: f64,
    pub n_states: usize,
    pub state_min: f64,
    pub state_max: f64,
    pub n_measures: usize,
    pub nodes_per_unit: usize,
    pub normalizer: String,
}

/// Empirical averaging-rate curve. Every value is a lower bound for the
/// true rate function, since probes are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragingRateCurve {
    pub t_values: Vec<f64>,
    /// `max_probe |window mean of (b - b̄)| / (1 + |x| + μ(|·|²))`.
    pub phi: Vec<f64>,
    /// Smallest non-increasing majorant of `phi` on the probed windows.
    pub envelope: Vec<f64>,
    /// Same maximum with the absolute value inside the window mean.
    pub phi_abs: Vec<f64>,
    /// Probes where `|mean(b - b̄)| > mean|b - b̄|` in floating point.
    pub ordering_violations: usize,
    pub probes: ProbeSummary,
}

struct WindowStats<T> {
    abs_of_mean: T,
    mean_of_abs: T,
}

fn window<T: Real>(b: &DriftModel<T>, bbar: T, t0: T, len: T, nodes: usize, x: T, mu: &EmpiricalMeasure<T>) -> WindowStats<T> {
    let h = len / T::from_index(nodes);
    let mut signed = T::zero();
    let mut unsigned = T::zero();
    for j in 0..nodes {
        let d = b.eval(t0 + (T::from_index(j) + T::lit(0.5)) * h, x, mu) - bbar;
        signed += d;
        unsigned += d.abs();
    }
    let n = T::from_index(nodes);
    WindowStats { abs_of_mean: (signed / n).abs(), mean_of_abs: unsigned / n }
}

/// Averaging-rate audit of `b` against its attached averaged drift.
pub fn phi_estimate<T: Real>(b: &DriftModel<T>, t_values: &[T], probes: &PhiProbes<T>) -> Result<AveragingRateCurve> {
    let bbar = b.averaged().ok_or_else(|| Error::MissingAveragedDrift(b.name().to_string()))?;
    if t_values.iter().any(|&t| !(t > T::zero())) {
        return domain("averaging windows must be positive");
    }
    if probes.start_times.is_empty() || probes.states.is_empty() || probes.measures.is_empty() {
        return domain("probe set is empty");
    }
    if probes.nodes_per_unit == 0 {
        return domain("nodes_per_unit must be at least 1");
    }
    let pairs: Vec<(usize, usize)> = (0..probes.states.len())
        .flat_map(|i| (0..probes.measures.len()).map(move |m| (i, m)))
        .collect();

    let mut phi = Vec::with_capacity(t_values.len());
    let mut phi_abs = Vec::with_capacity(t_values.len());
    let mut ordering_violations = 0;
    for &len in t_values {
        let nodes = (len * T::from_index(probes.nodes_per_unit)).ceil().as_f64().max(1.0) as usize;
        let per_pair: Vec<(T, T, usize)> = pairs
            .par_iter()
            .map(|&(i, m)| {
                let x = probes.states[i];
                let mu = &probes.measures[m];
                let norm = T::one() + x.abs() + mu.second_moment();
                let target = bbar.eval(x, mu);
                let mut best = (T::zero(), T::zero(), 0);
                for &t0 in &probes.start_times {
                    let w = window(b, target, t0, len, nodes, x, mu);
                    if w.abs_of_mean > w.mean_of_abs {
                        best.2 += 1;
                    }
                    best.0 = best.0.max(w.abs_of_mean / norm);
                    best.1 = best.1.max(w.mean_of_abs / norm);
                }
                best
            })
            .collect();
        let (mut p, mut pa) = (T::zero(), T::zero());
        for (a, c, v) in per_pair {
            p = p.max(a);
            pa = pa.max(c);
            ordering_violations += v;
        }
        phi.push(p.as_f64());
        phi_abs.push(pa.as_f64());
    }
    let envelope = non_increasing_envelope(t_values, &phi);

    let fmin = |v: &[T]| v.iter().fold(f64::INFINITY, |a, x| a.min(x.as_f64()));
    let fmax = |v: &[T]| v.iter().fold(f64::NEG_INFINITY, |a, x| a.max(x.as_f64()));
    Ok(AveragingRateCurve {
        t_values: t_values.iter().map(|t| t.as_f64()).collect(),
        phi,
        envelope,
        phi_abs,
        ordering_violations,
        probes: ProbeSummary {
            n_start_times: probes.start_times.len(),
            start_time_min: fmin(&probes.start_times),
            start_time_max: fmax(&probes.start_times),
            n_states: probes.states.len(),
            state_min: fmin(&probes.states),
            state_max: fmax(&probes.states),
            n_measures: probes.measures.len(),
            nodes_per_unit: probes.nodes_per_unit,
            normalizer: "1 + |x| + second moment".into(),
        },
    })
}

/// For each window length, the largest value at that or any longer length.
fn non_increasing_envelope<T: Real>(t_values: &[T], phi: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..t_values.len()).collect();
    order.sort_by(|&a, &b| t_values[a].partial_cmp(&t_values[b]).expect("finite windows"));
    let mut env = vec![0.0; phi.len()];
    let mut running = 0.0_f64;
    for &i in order.iter().rev() {
        running = running.max(phi[i]);
        env[i] = running;
    }
    env
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Mean and standard error over replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    /// Sample mean and `s / √n`; the error is 0 for a single value.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let se = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Self { mean, se }
    }
}

/// Particle-averaged squared errors of one replicate at one ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateErrors {
    pub seed: u64,
    pub sup_sq: f64,
    pub holder_sq: f64,
    pub lambda_sq: f64,
    /// Mean of `|X^ε_T - X̄_T|²` over particles.
    pub endpoint_ms: f64,
    /// `W₂²` between the two endpoint empirical measures.
    pub endpoint_w2_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonErrors {
    pub epsilon: f64,
    pub err_sup_sq: MeanSe,
    pub err_holder_sq: MeanSe,
    pub err_lambda_sq: MeanSe,
    pub replicates: Vec<ReplicateErrors>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub epsilon_grid: Vec<f64>,
    pub rows: Vec<EpsilonErrors>,
    pub n_particles: usize,
    pub n_replicates: usize,
    pub t_end: f64,
    pub n_steps: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub seeds: Vec<u64>,
    /// `W₂² ≤ endpoint mean-square error` held in every replicate.
    pub coupling_consistent: bool,
}

impl ConvergenceReport {
    /// Paired comparison of consecutive ε values: mean decrease of the
    /// per-replicate error and its standard error.
    pub fn paired_decrease(&self, pick: impl Fn(&ReplicateErrors) -> f64) -> Vec<MeanSe> {
        self.rows
            .windows(2)
            .map(|w| {
                let d: Vec<f64> = w[0].replicates.iter().zip(&w[1].replicates).map(|(a, b)| pick(a) - pick(b)).collect();
                MeanSe::of(&d)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyNorms<T> {
    pub gamma: HolderExponent<T>,
    pub lambda: T,
}

/// Monte Carlo estimate of `E‖X^ε − X̄‖²` in the sup, `γ`-Hölder and
/// `λ`-weighted norms for each ε. Replicate `r` uses seed
/// `derive_seed(template.seed, r)`, shared across all ε; the averaged
/// solution is computed once per replicate.
pub fn convergence_study<T: Real>(
    template: &SolverConfig<T>,
    b: &DriftModel<T>,
    s: &DiffusionModel<T>,
    epsilon_grid: &[T],
    n_replicates: usize,
    norms: StudyNorms<T>,
) -> Result<ConvergenceReport> {
    if epsilon_grid.is_empty() {
        return domain("epsilon grid is empty");
    }
    if epsilon_grid.iter().any(|&e| !(e > T::zero())) || epsilon_grid.windows(2).any(|w| !(w[1] < w[0])) {
        return domain("epsilon grid must be positive and strictly decreasing");
    }
    if n_replicates == 0 {
        return domain("need at least one replicate");
    }
    if norms.lambda < T::one() {
        return domain(format!("lambda must be at least 1, got {}", norms.lambda));
    }
    template.validate()?;
    if b.averaged().is_none() {
        return Err(Error::MissingAveragedDrift(b.name().to_string()));
    }
    if !template.force {
        validate_assumptions(b, s, &ProbeSpec::default()).into_result()?;
    }

    let seeds: Vec<u64> = (0..n_replicates as u64).map(|r| derive_seed(template.seed, r)).collect();
    let per_replicate: Vec<Vec<ReplicateErrors>> = seeds
        .par_iter()
        .map(|&seed| replicate(template, b, s, epsilon_grid, seed, norms))
        .collect::<Result<_>>()?;

    let mut coupling_consistent = true;
    let rows = epsilon_grid
        .iter()
        .enumerate()
        .map(|(e, &eps)| {
            let reps: Vec<ReplicateErrors> = per_replicate.iter().map(|r| r[e]).collect();
            coupling_consistent &= reps.iter().all(|r| r.endpoint_w2_sq <= r.endpoint_ms * (1.0 + COUPLING_RTOL));
            let col = |f: fn(&ReplicateErrors) -> f64| MeanSe::of(&reps.iter().map(f).collect::<Vec<_>>());
            EpsilonErrors {
                epsilon: eps.as_f64(),
                err_sup_sq: col(|r| r.sup_sq),
                err_holder_sq: col(|r| r.holder_sq),
                err_lambda_sq: col(|r| r.lambda_sq),
                replicates: reps,
            }
        })
        .collect();

    Ok(ConvergenceReport {
        epsilon_grid: epsilon_grid.iter().map(|e| e.as_f64()).collect(),
        rows,
        n_particles: template.n_particles,
        n_replicates,
        t_end: template.grid.t_end().as_f64(),
        n_steps: template.grid.n_steps(),
        gamma: norms.gamma.value().as_f64(),
        lambda: norms.lambda.as_f64(),
        seeds,
        coupling_consistent,
    })
}

fn replicate<T: Real>(
    template: &SolverConfig<T>,
    b: &DriftModel<T>,
    s: &DiffusionModel<T>,
    epsilon_grid: &[T],
    seed: u64,
    norms: StudyNorms<T>,
) -> Result<Vec<ReplicateErrors>> {
    let cfg = SolverConfig { seed, ..*template };
    let noise = Arc::new(sample_noise(&cfg)?);
    let avg = solve_averaged(&cfg, b, s, Arc::clone(&noise))?;
    epsilon_grid
        .iter()
        .map(|&epsilon| {
            let osc = solve_oscillatory(&SolverConfig { epsilon, ..cfg }, b, s, Arc::clone(&noise))?;
            pathwise_errors(&osc, &avg, seed, norms)
        })
        .collect()
}

fn pathwise_errors<T: Real>(
    osc: &ParticleTrajectories<T>,
    avg: &ParticleTrajectories<T>,
    seed: u64,
    norms: StudyNorms<T>,
) -> Result<ReplicateErrors> {
    let n = osc.n_particles();
    let last = osc.grid().n_steps();
    let (mut sup_sq, mut holder_sq, mut lambda_sq, mut endpoint_ms) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let d = osc.particle_path(i).sub(&avg.particle_path(i))?;
        let sup = sup_norm(&d).as_f64();
        let hol = holder_norm(&d, norms.gamma).as_f64();
        let lam = lambda_norm(&d, norms.gamma, norms.lambda)?.as_f64();
        let end = d.values()[last].as_f64();
        sup_sq += sup * sup;
        holder_sq += hol * hol;
        lambda_sq += lam * lam;
        endpoint_ms += end * end;
    }
    let nf = n as f64;
    let w2 = wasserstein2(osc.measure(last), avg.measure(last))?.as_f64();
    Ok(ReplicateErrors {
        seed,
        sup_sq: sup_sq / nf,
        holder_sq: holder_sq / nf,
        lambda_sq: lambda_sq / nf,
        endpoint_ms: endpoint_ms / nf,
        endpoint_w2_sq: w2 * w2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockDiagnostic {
    pub delta: f64,
    pub beta: f64,
    /// `max_s E|X_s − X_{s(δ)}|²` over grid nodes.
    pub max_moment: f64,
    /// `max_moment / δ^{2β}`.
    pub normalized: f64,
    pub argmax_time: f64,
}

/// Blocking diagnostic with block size `delta` (a multiple of the grid
/// step). Node `s` is compared with the start of its block; nodes on a block
/// boundary `kδ` belong to the block `((k−1)δ, kδ]`, so `delta = Δ` compares
/// consecutive nodes.
pub fn khasminskii_block_diagnostic<T: Real>(traj: &ParticleTrajectories<T>, delta: T, beta: T) -> Result<BlockDiagnostic> {
    let grid = traj.grid();
    let ratio = (delta / grid.dt()).as_f64();
    let q = ratio.round();
    if !(q >= 1.0) || (ratio - q).abs() > 1e-9 * q {
        return domain(format!("block size {delta} is not a positive multiple of the grid step {}", grid.dt()));
    }
    let q = q as usize;
    let n = grid.n_steps();
    let inv = 1.0 / traj.n_particles() as f64;
    let mut best = (0.0_f64, 0usize);
    for j in 1..=n {
        let s = ((j - 1) / q) * q;
        let m: f64 = traj.particles().map(|p| (p[j] - p[s]).as_f64().powi(2)).sum::<f64>() * inv;
        if m > best.0 {
            best = (m, j);
        }
    }
    let d = delta.as_f64();
    let beta = beta.as_f64();
    Ok(BlockDiagnostic {
        delta: d,
        beta,
        max_moment: best.0,
        normalized: best.0 / d.powf(2.0 * beta),
        argmax_time: grid.node(best.1).as_f64(),
    })
}

/// `(E sup_t |X_t|²)^{1/2}` over particles.
pub fn l2_path_norm<T: Real>(traj: &ParticleTrajectories<T>) -> T {
    let n = T::from_index(traj.n_particles());
    let sq: T = traj
        .particles()
        .map(|p| {
            let s = p.iter().fold(T::zero(), |a, v| a.max(v.abs()));
            s * s
        })
        .sum();
    (sq / n).sqrt()
}

/// Per-particle ratio `‖X‖_γ / ((1+|||B|||_β) ∨ (1+|||B|||_β)^{1/γ})`, with
/// `B` the particle's driving path.
pub fn a_priori_ratios<T: Real>(traj: &ParticleTrajectories<T>, gamma: HolderExponent<T>, beta: HolderExponent<T>) -> Vec<f64> {
    (0..traj.n_particles())
        .into_par_iter()
        .map(|i| {
            let x = holder_norm(&traj.particle_path(i), gamma).as_f64();
            let b = holder_seminorm_full(&traj.noise().sample_path(i), beta).value.as_f64();
            let base = 1.0 + b;
            x / base.max(base.powf(1.0 / gamma.value().as_f64()))
        })
        .collect()
}

/// Slope of `ln E|X_{t+h} − X_t|` against `ln h` for `h = Δ, 2Δ, …,
/// max_lag·Δ`, the expectation taken over particles and start nodes.
pub fn increment_moment_slope<T: Real>(traj: &ParticleTrajectories<T>, max_lag: usize) -> Result<f64> {
    let n = traj.grid().n_steps();
    if max_lag < 2 || max_lag >= n {
        return domain(format!("max_lag must lie in [2, {}), got {max_lag}", n));
    }
    let dt = traj.grid().dt().as_f64();
    let (lags, moments): (Vec<f64>, Vec<f64>) = (1..=max_lag)
        .map(|h| {
            let count = (traj.n_particles() * (n + 1 - h)) as f64;
            let total: f64 = traj
                .particles()
                .map(|p| p.windows(h + 1).map(|w| (w[h] - w[0]).abs().as_f64()).sum::<f64>())
                .sum();
            (h as f64 * dt, total / count)
        })
        .unzip();
    log_log_slope(&lags, &moments).ok_or_else(|| Error::Invariant("degenerate increment moments".into()))
}
