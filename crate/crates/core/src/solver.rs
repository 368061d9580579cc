//! Interacting particle schemes for the oscillatory McKean-Vlasov equation
//! `dX = b(t/ε, X, 𝓛_X) dt + σ(X) dB^H` and for its averaged counterpart.
//!
//! The law is replaced by the empirical measure of `N` particles, frozen at
//! the left end of every step. The drift is integrated over each step with a
//! midpoint rule fine enough to resolve the period `2πε`; the noise enters
//! through the exact increments of a pre-sampled [`FbmBatch`].

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fbm::{self, FbmBatch, FbmMethod, HurstParam};
use crate::grid::TimeGrid;
use crate::metrics::{wasserstein2, EmpiricalMeasure, SamplePath};
use crate::rng::keyed_rng;
use crate::scalar::Real;

/// Abort threshold on `|x|`.
pub const BLOW_UP_LIMIT: f64 = 1e12;
/// Relative slack allowed on declared constants by the validator.
pub const VALIDATION_TOLERANCE: f64 = 0.01;
const PARALLEL_MIN_PARTICLES: usize = 1024;

pub type DriftFn<T> = Arc<dyn Fn(T, T, &EmpiricalMeasure<T>) -> T + Send + Sync>;
pub type AveragedDriftFn<T> = Arc<dyn Fn(T, &EmpiricalMeasure<T>) -> T + Send + Sync>;
pub type ScalarFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// Declared bounds for `b`: sup bound, Lipschitz constant in `(x, W₂)`, and
/// Lipschitz constant in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftConstants<T> {
    pub m_b: T,
    pub l_b: T,
    pub l_b_prime: T,
}

#[derive(Clone)]
pub struct AveragedDrift<T> {
    eval: AveragedDriftFn<T>,
    l_bbar: T,
}

impl<T: Real> AveragedDrift<T> {
    pub fn new(eval: impl Fn(T, &EmpiricalMeasure<T>) -> T + Send + Sync + 'static, l_bbar: T) -> Self {
        Self { eval: Arc::new(eval), l_bbar }
    }

    pub fn eval(&self, x: T, mu: &EmpiricalMeasure<T>) -> T {
        (self.eval)(x, mu)
    }

    pub fn l_bbar(&self) -> T {
        self.l_bbar
    }
}

/// Drift coefficient `b(t, x, μ)` with its declared constants.
///
/// The measure argument is only seen through [`EmpiricalMeasure`]'s read
/// accessors. Models whose drift ignores `t` should be marked with
/// [`DriftModel::time_independent`]; the solver then uses a single midpoint
/// node per step, which makes the oscillatory and averaged recursions
/// identical.
#[derive(Clone)]
pub struct DriftModel<T> {
    name: String,
    eval: DriftFn<T>,
    constants: DriftConstants<T>,
    averaged: Option<AveragedDrift<T>>,
    time_independent: bool,
}

impl<T: Real> DriftModel<T> {
    pub fn new(
        name: impl Into<String>,
        eval: impl Fn(T, T, &EmpiricalMeasure<T>) -> T + Send + Sync + 'static,
        constants: DriftConstants<T>,
    ) -> Self {
        Self {
            name: name.into(),
            eval: Arc::new(eval),
            constants,
            averaged: None,
            time_independent: false,
        }
    }

    /// Declares that `b` does not depend on `t`.
    pub fn time_independent(mut self) -> Self {
        self.time_independent = true;
        self
    }

    pub fn with_averaged(mut self, averaged: AveragedDrift<T>) -> Self {
        self.averaged = Some(averaged);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn constants(&self) -> DriftConstants<T> {
        self.constants
    }

    pub fn is_time_independent(&self) -> bool {
        self.time_independent
    }

    pub fn averaged(&self) -> Option<&AveragedDrift<T>> {
        self.averaged.as_ref()
    }

    pub fn eval(&self, t: T, x: T, mu: &EmpiricalMeasure<T>) -> T {
        (self.eval)(t, x, mu)
    }
}

impl<T: fmt::Debug> fmt::Debug for DriftModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftModel")
            .field("name", &self.name)
            .field("constants", &self.constants)
            .field("averaged", &self.averaged.as_ref().map(|a| &a.l_bbar))
            .field("time_independent", &self.time_independent)
            .finish()
    }
}

/// Declared bounds for `σ`: `K ≤ |σ| ≤ M`, Lipschitz constant `L`, and
/// `|σ'| ≤ M'`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionConstants<T> {
    pub k_sigma: T,
    pub m_sigma: T,
    pub l_sigma: T,
    pub m_sigma_prime: T,
}

#[derive(Clone)]
pub struct DiffusionModel<T> {
    name: String,
    sigma: ScalarFn<T>,
    dsigma: ScalarFn<T>,
    constants: DiffusionConstants<T>,
}

impl<T: Real> DiffusionModel<T> {
    pub fn new(
        name: impl Into<String>,
        sigma: impl Fn(T) -> T + Send + Sync + 'static,
        dsigma: impl Fn(T) -> T + Send + Sync + 'static,
        constants: DiffusionConstants<T>,
    ) -> Self {
        Self { name: name.into(), sigma: Arc::new(sigma), dsigma: Arc::new(dsigma), constants }
    }

    /// `σ ≡ c`.
    pub fn constant(c: T) -> Self {
        let a = c.abs();
        Self::new(
            format!("constant({c})"),
            move |_| c,
            |_| T::zero(),
            DiffusionConstants { k_sigma: a, m_sigma: a, l_sigma: T::zero(), m_sigma_prime: T::zero() },
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn constants(&self) -> DiffusionConstants<T> {
        self.constants
    }

    pub fn sigma(&self, x: T) -> T {
        (self.sigma)(x)
    }

    pub fn dsigma(&self, x: T) -> T {
        (self.dsigma)(x)
    }
}

impl<T: fmt::Debug> fmt::Debug for DiffusionModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("name", &self.name)
            .field("constants", &self.constants)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Euler,
    Milstein,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Euler => "euler",
            Scheme::Milstein => "milstein",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig<T> {
    pub x0: T,
    pub epsilon: T,
    pub n_particles: usize,
    pub grid: TimeGrid<T>,
    pub hurst: HurstParam<T>,
    pub scheme: Scheme,
    /// Multiplier on the number of drift nodes per eighth of a period.
    pub sub_steps_per_osc: usize,
    pub seed: u64,
    pub method: FbmMethod,
    /// Run even when assumption validation reports violations.
    pub force: bool,
}

impl<T: Real> SolverConfig<T> {
    /// Euler, circulant noise, two drift nodes per eighth period.
    pub fn new(x0: T, epsilon: T, n_particles: usize, grid: TimeGrid<T>, hurst: HurstParam<T>, seed: u64) -> Self {
        Self {
            x0,
            epsilon,
            n_particles,
            grid,
            hurst,
            scheme: Scheme::Euler,
            sub_steps_per_osc: 2,
            seed,
            method: FbmMethod::Circulant,
            force: false,
        }
    }

    pub fn t_end(&self) -> T {
        self.grid.t_end()
    }

    pub fn validate(&self) -> Result<()> {
        // fields may come from deserialization, which bypasses the constructors
        HurstParam::young(self.hurst.value())?;
        TimeGrid::new(self.grid.t_end(), self.grid.n_steps())?;
        if !(self.epsilon > T::zero()) || !self.epsilon.is_finite() {
            return domain(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.n_particles < 2 {
            return domain(format!("need at least 2 particles, got {}", self.n_particles));
        }
        if self.sub_steps_per_osc == 0 {
            return domain("sub_steps_per_osc must be at least 1");
        }
        if !self.x0.is_finite() {
            return domain("x0 must be finite");
        }
        Ok(())
    }

    /// Drift nodes per step for drift `b`.
    pub fn drift_nodes(&self, b: &DriftModel<T>) -> usize {
        if b.is_time_independent() {
            return 1;
        }
        let eighth = self.epsilon * T::FRAC_PI_4();
        let per_step = (self.grid.dt() / eighth).ceil().as_f64().max(1.0);
        (per_step as usize).saturating_mul(self.sub_steps_per_osc)
    }
}

/// Particle states on the grid together with the noise that drove them.
#[derive(Debug, Clone)]
pub struct ParticleTrajectories<T> {
    grid: TimeGrid<T>,
    n_particles: usize,
    data: Vec<T>,
    measures: Vec<EmpiricalMeasure<T>>,
    noise: Arc<FbmBatch<T>>,
}

impl<T: Real> ParticleTrajectories<T> {
    pub fn grid(&self) -> TimeGrid<T> {
        self.grid
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn particle(&self, i: usize) -> &[T] {
        let n = self.grid.n_nodes();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn particles(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.grid.n_nodes())
    }

    pub fn particle_path(&self, i: usize) -> SamplePath<T> {
        SamplePath::new(self.grid, self.particle(i).to_vec()).expect("finite states on the grid")
    }

    /// Empirical measure of the states at step `k`.
    pub fn measure(&self, k: usize) -> &EmpiricalMeasure<T> {
        &self.measures[k]
    }

    pub fn measures(&self) -> &[EmpiricalMeasure<T>] {
        &self.measures
    }

    pub fn noise(&self) -> &FbmBatch<T> {
        &self.noise
    }

    pub fn noise_handle(&self) -> Arc<FbmBatch<T>> {
        Arc::clone(&self.noise)
    }
}

/// `∫_{t_k}^{t_k+dt} b(s/ε, x, μ) ds` by the midpoint rule on `m_sub` nodes.
pub fn drift_increment<T: Real>(
    b: &DriftModel<T>,
    t_k: T,
    dt: T,
    x: T,
    mu: &EmpiricalMeasure<T>,
    eps: T,
    m_sub: usize,
) -> T {
    let m = m_sub.max(1);
    let h = dt / T::from_index(m);
    let mut acc = T::zero();
    for j in 0..m {
        let s = t_k + (T::from_index(j) + T::lit(0.5)) * h;
        acc += b.eval(s / eps, x, mu);
    }
    acc * h
}

fn check_noise<T: Real>(cfg: &SolverConfig<T>, noise: &FbmBatch<T>) -> Result<()> {
    let g = noise.grid();
    if g.n_steps() != cfg.grid.n_steps() || g.t_end() != cfg.grid.t_end() {
        return Err(Error::NoiseMismatch(format!(
            "noise grid ({} steps on [0, {}]) differs from solver grid ({} steps on [0, {}])",
            g.n_steps(),
            g.t_end(),
            cfg.grid.n_steps(),
            cfg.grid.t_end()
        )));
    }
    if noise.n_paths() < cfg.n_particles {
        return Err(Error::NoiseMismatch(format!(
            "noise has {} paths for {} particles",
            noise.n_paths(),
            cfg.n_particles
        )));
    }
    if noise.hurst() != cfg.hurst {
        return Err(Error::NoiseMismatch(format!(
            "noise Hurst parameter {} differs from configured {}",
            noise.hurst().value(),
            cfg.hurst.value()
        )));
    }
    Ok(())
}

fn integrate<T: Real>(
    cfg: &SolverConfig<T>,
    s: &DiffusionModel<T>,
    noise: Arc<FbmBatch<T>>,
    drift: impl Fn(usize, T, &EmpiricalMeasure<T>) -> T + Sync,
) -> Result<ParticleTrajectories<T>> {
    cfg.validate()?;
    check_noise(cfg, &noise)?;
    let n = cfg.n_particles;
    let n_nodes = cfg.grid.n_nodes();
    let milstein = cfg.scheme == Scheme::Milstein;
    let half = T::lit(0.5);
    let limit = T::lit(BLOW_UP_LIMIT);

    let mut data = vec![T::zero(); n * n_nodes];
    let mut state = vec![cfg.x0; n];
    let mut measures = Vec::with_capacity(n_nodes);
    for (i, &x) in state.iter().enumerate() {
        data[i * n_nodes] = x;
    }
    measures.push(EmpiricalMeasure::new(state.clone())?);

    for k in 0..cfg.grid.n_steps() {
        let mu = &measures[k];
        let step = |i: usize, x: T| {
            let path = noise.path(i);
            let db = path[k + 1] - path[k];
            let sig = s.sigma(x);
            let mut next = x + drift(k, x, mu) + sig * db;
            if milstein {
                next += half * sig * s.dsigma(x) * db * db;
            }
            next
        };
        let next: Vec<T> = if n >= PARALLEL_MIN_PARTICLES {
            state.par_iter().enumerate().map(|(i, &x)| step(i, x)).collect()
        } else {
            state.iter().enumerate().map(|(i, &x)| step(i, x)).collect()
        };
        for (i, &x) in next.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::NonFiniteState { step: k + 1, particle: i });
            }
            if x.abs() > limit {
                return Err(Error::BlowUp { step: k + 1, particle: i, value: x.as_f64() });
            }
            data[i * n_nodes + k + 1] = x;
        }
        state = next;
        measures.push(EmpiricalMeasure::new(state.clone())?);
    }
    Ok(ParticleTrajectories { grid: cfg.grid, n_particles: n, data, measures, noise })
}

/// Particle scheme for the oscillatory equation. Particle `i` is driven by
/// row `i` of `noise`. Assumptions are not re-validated here.
pub fn solve_oscillatory<T: Real>(
    cfg: &SolverConfig<T>,
    b: &DriftModel<T>,
    s: &DiffusionModel<T>,
    noise: Arc<FbmBatch<T>>,
) -> Result<ParticleTrajectories<T>> {
    let m_sub = cfg.drift_nodes(b);
    let dt = cfg.grid.dt();
    let grid = cfg.grid;
    integrate(cfg, s, noise, |k, x, mu| drift_increment(b, grid.node(k), dt, x, mu, cfg.epsilon, m_sub))
}

/// Same scheme with the averaged drift `b̄(x, μ)`.
pub fn solve_averaged<T: Real>(
    cfg: &SolverConfig<T>,
    b: &DriftModel<T>,
    s: &DiffusionModel<T>,
    noise: Arc<FbmBatch<T>>,
) -> Result<ParticleTrajectories<T>> {
    let bbar = b.averaged().ok_or_else(|| Error::MissingAveragedDrift(b.name().to_string()))?;
    let dt = cfg.grid.dt();
    integrate(cfg, s, noise, |_, x, mu| bbar.eval(x, mu) * dt)
}

/// Noise batch used by [`coupled_solve`] for `cfg`.
pub fn sample_noise<T: Real>(cfg: &SolverConfig<T>) -> Result<FbmBatch<T>> {
    cfg.validate()?;
    fbm::sample(cfg.method, cfg.grid, cfg.hurst, cfg.n_particles, cfg.seed)
}

/// Runs both schemes on one noise batch sampled from `cfg.seed`, after
/// validating assumptions on default probes (skipped when `cfg.force`).
pub fn coupled_solve<T: Real>(
    cfg: &SolverConfig<T>,
    b: &DriftModel<T>,
    s: &DiffusionModel<T>,
) -> Result<(ParticleTrajectories<T>, ParticleTrajectories<T>)> {
    if !cfg.force {
        validate_assumptions(b, s, &ProbeSpec::default()).into_result()?;
    }
    if b.averaged().is_none() {
        return Err(Error::MissingAveragedDrift(b.name().to_string()));
    }
    let noise = Arc::new(sample_noise(cfg)?);
    coupled_solve_with_noise(cfg, b, s, noise)
}

pub(crate) fn coupled_solve_with_noise<T: Real>(
    cfg: &SolverConfig<T>,
    b: &DriftModel<T>,
    s: &DiffusionModel<T>,
    noise: Arc<FbmBatch<T>>,
) -> Result<(ParticleTrajectories<T>, ParticleTrajectories<T>)> {
    let osc = solve_oscillatory(cfg, b, s, Arc::clone(&noise))?;
    let avg = solve_averaged(cfg, b, s, noise)?;
    Ok((osc, avg))
}

/// Probe set for [`validate_assumptions`]: a uniform grid of times in
/// `[0, t_max]`, of states in `[-x_max, x_max]` (always including 0), and
/// random discrete measures with a fixed atom count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub t_max: f64,
    pub n_t: usize,
    pub x_max: f64,
    pub n_x: usize,
    pub n_measures: usize,
    pub atoms_per_measure: usize,
    pub seed: u64,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self { t_max: 20.0, n_t: 41, x_max: 5.0, n_x: 21, n_measures: 6, atoms_per_measure: 16, seed: 0x5eed }
    }
}

impl ProbeSpec {
    pub fn times<T: Real>(&self) -> Vec<T> {
        linspace(0.0, self.t_max, self.n_t.max(1)).into_iter().map(T::lit).collect()
    }

    pub fn states<T: Real>(&self) -> Vec<T> {
        let mut xs = linspace(-self.x_max, self.x_max, self.n_x.max(1));
        if !xs.contains(&0.0) {
            xs.push(0.0);
            xs.sort_by(f64::total_cmp);
        }
        xs.into_iter().map(T::lit).collect()
    }

    /// A Dirac mass at 0 followed by `n_measures - 1` Gaussian clouds with
    /// random centre and spread.
    pub fn measures<T: Real>(&self) -> Vec<EmpiricalMeasure<T>> {
        let n = self.atoms_per_measure.max(1);
        let mut out = vec![EmpiricalMeasure::dirac(T::zero(), n).expect("finite")];
        for j in 1..self.n_measures.max(1) {
            let mut rng = keyed_rng(self.seed, j as u64);
            let centre = rng.random_range(-0.5..=0.5) * self.x_max;
            let spread = rng.random_range(0.1..=2.0);
            let atoms = (0..n).map(|_| T::lit(centre) + T::lit(spread) * T::standard_normal(&mut rng)).collect();
            out.push(EmpiricalMeasure::new(atoms).expect("finite"));
        }
        out
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub declared: f64,
    pub observed: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub drift: String,
    pub diffusion: String,
    pub probes: ProbeSpec,
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn violations(&self) -> impl Iterator<Item = &AssumptionCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            return Ok(self);
        }
        let list: Vec<String> = self
            .violations()
            .map(|c| format!("{}: declared {:e}, observed {:e}", c.name, c.declared, c.observed))
            .collect();
        Err(Error::AssumptionsViolated(list.join("; ")))
    }
}

fn upper(name: &str, declared: f64, observed: f64) -> AssumptionCheck {
    let passed = declared >= 0.0 && observed <= declared * (1.0 + VALIDATION_TOLERANCE) + 1e-12;
    AssumptionCheck { name: name.into(), declared, observed, passed }
}

fn lower(name: &str, declared: f64, observed: f64) -> AssumptionCheck {
    let passed = declared > 0.0 && observed >= declared * (1.0 - VALIDATION_TOLERANCE);
    AssumptionCheck { name: name.into(), declared, observed, passed }
}

/// Compares empirical bounds and Lipschitz quotients on the probe set with
/// the declared constants. Lipschitz quotients are taken over all probe
/// pairs, so the observed values are lower bounds of the true constants.
pub fn validate_assumptions<T: Real>(b: &DriftModel<T>, s: &DiffusionModel<T>, probes: &ProbeSpec) -> ValidationReport {
    let ts: Vec<T> = probes.times();
    let xs: Vec<T> = probes.states();
    let mus = probes.measures::<T>();
    let n_mu = mus.len();
    let w2: Vec<T> = (0..n_mu * n_mu)
        .map(|k| wasserstein2(&mus[k / n_mu], &mus[k % n_mu]).expect("equal atom counts"))
        .collect();
    let states: Vec<(usize, usize)> = (0..xs.len()).flat_map(|i| (0..n_mu).map(move |m| (i, m))).collect();

    let dc = b.constants();
    // values[t][state]
    let values: Vec<Vec<T>> = ts
        .par_iter()
        .map(|&t| states.iter().map(|&(i, m)| b.eval(t, xs[i], &mus[m])).collect())
        .collect();
    let sup = values.iter().flatten().fold(T::zero(), |a, v| a.max(v.abs()));

    let space_quotient = |vals: &[T]| {
        let mut worst = T::zero();
        for (p, &(i, m)) in states.iter().enumerate() {
            for (q, &(j, n)) in states.iter().enumerate().skip(p + 1) {
                let d = (xs[i] - xs[j]).abs() + w2[m * n_mu + n];
                if d > T::zero() {
                    worst = worst.max((vals[p] - vals[q]).abs() / d);
                }
            }
        }
        worst
    };
    let l_space = values.par_iter().map(|v| space_quotient(v)).reduce(T::zero, T::max);
    let mut l_time = T::zero();
    for a in 0..ts.len() {
        for c in a + 1..ts.len() {
            let dt = ts[c] - ts[a];
            for (va, vc) in values[a].iter().zip(&values[c]) {
                l_time = l_time.max((*va - *vc).abs() / dt);
            }
        }
    }

    let mut checks = vec![
        upper("drift bound M_b", dc.m_b.as_f64(), sup.as_f64()),
        upper("drift Lipschitz L_b (x, W2)", dc.l_b.as_f64(), l_space.as_f64()),
        upper("drift time Lipschitz L_b'", dc.l_b_prime.as_f64(), l_time.as_f64()),
    ];
    if let Some(avg) = b.averaged() {
        let vals: Vec<T> = states.iter().map(|&(i, m)| avg.eval(xs[i], &mus[m])).collect();
        checks.push(upper("averaged drift Lipschitz L_bbar", avg.l_bbar().as_f64(), space_quotient(&vals).as_f64()));
    }

    let sc = s.constants();
    let sig: Vec<T> = xs.iter().map(|&x| s.sigma(x)).collect();
    let min_abs = sig.iter().fold(T::infinity(), |a, v| a.min(v.abs()));
    let max_abs = sig.iter().fold(T::zero(), |a, v| a.max(v.abs()));
    let mut l_sig = T::zero();
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            l_sig = l_sig.max((sig[i] - sig[j]).abs() / (xs[j] - xs[i]));
        }
    }
    let max_dsig = xs.iter().fold(T::zero(), |a, &x| a.max(s.dsigma(x).abs()));
    // Central differences; step and tolerance follow the working precision.
    let eps = T::epsilon().as_f64();
    let fd_tol = 1e-6_f64.max(10.0 * eps.powf(2.0 / 3.0));
    let fd_err = xs
        .iter()
        .map(|&x| {
            let h = T::lit(eps.cbrt()) * x.abs().max(T::one());
            let fd = (s.sigma(x + h) - s.sigma(x - h)) / (h + h);
            let d = s.dsigma(x);
            ((fd - d).abs() / d.abs().max(T::one())).as_f64()
        })
        .fold(0.0, f64::max);
    checks.extend([
        lower("diffusion lower bound K_sigma", sc.k_sigma.as_f64(), min_abs.as_f64()),
        upper("diffusion upper bound M_sigma", sc.m_sigma.as_f64(), max_abs.as_f64()),
        upper("diffusion Lipschitz L_sigma", sc.l_sigma.as_f64(), l_sig.as_f64()),
        upper("diffusion derivative bound M_sigma'", sc.m_sigma_prime.as_f64(), max_dsig.as_f64()),
        AssumptionCheck {
            name: "diffusion derivative vs finite differences (relative)".into(),
            declared: fd_tol,
            observed: fd_err,
            passed: fd_err <= fd_tol,
        },
    ]);
    ValidationReport { drift: b.name().to_string(), diffusion: s.name().to_string(), probes: *probes, checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::FbmMethod;

    fn tanh_drift() -> DriftModel<f64> {
        DriftModel::new(
            "tanh",
            |_, x: f64, _: &EmpiricalMeasure<f64>| -x.tanh(),
            DriftConstants { m_b: 1.0, l_b: 1.0, l_b_prime: 0.0 },
        )
        .time_independent()
        .with_averaged(AveragedDrift::new(|x: f64, _: &EmpiricalMeasure<f64>| -x.tanh(), 1.0))
    }

    fn sin_sigma() -> DiffusionModel<f64> {
        DiffusionModel::new(
            "1+0.1sin",
            |x: f64| 1.0 + 0.1 * x.sin(),
            |x: f64| 0.1 * x.cos(),
            DiffusionConstants { k_sigma: 0.9, m_sigma: 1.1, l_sigma: 0.1, m_sigma_prime: 0.1 },
        )
    }

    fn config(n_steps: usize, n: usize) -> SolverConfig<f64> {
        let grid = TimeGrid::new(1.0, n_steps).unwrap();
        SolverConfig::new(0.5, 0.1, n, grid, HurstParam::young(0.7).unwrap(), 17)
    }

    #[test]
    fn tanh_and_sin_sigma_pass_validation() {
        let r = validate_assumptions(&tanh_drift(), &sin_sigma(), &ProbeSpec::default());
        assert!(r.passed(), "{:?}", r.violations().collect::<Vec<_>>());
    }

    #[test]
    fn identity_sigma_fails_lower_bound() {
        let s = DiffusionModel::new(
            "x",
            |x: f64| x,
            |_| 1.0,
            DiffusionConstants { k_sigma: 0.1, m_sigma: 10.0, l_sigma: 1.0, m_sigma_prime: 1.0 },
        );
        let r = validate_assumptions(&tanh_drift(), &s, &ProbeSpec::default());
        let failed: Vec<_> = r.violations().map(|c| c.name.clone()).collect();
        assert_eq!(failed, vec!["diffusion lower bound K_sigma".to_string()]);
        assert!(r.into_result().is_err());
    }

    #[test]
    fn understated_constants_are_flagged() {
        let b = DriftModel::new(
            "2tanh",
            |_, x: f64, mu: &EmpiricalMeasure<f64>| 2.0 * x.tanh() + mu.mean().tanh(),
            DriftConstants { m_b: 1.0, l_b: 1.0, l_b_prime: 0.0 },
        );
        let r = validate_assumptions(&b, &sin_sigma(), &ProbeSpec::default());
        let failed: Vec<_> = r.violations().map(|c| c.name.as_str()).collect();
        assert!(failed.contains(&"drift bound M_b"));
        assert!(failed.contains(&"drift Lipschitz L_b (x, W2)"));
    }

    #[test]
    fn wrong_derivative_is_flagged() {
        let s = DiffusionModel::new(
            "bad",
            |x: f64| 1.0 + 0.1 * x.sin(),
            |x: f64| 0.1 * x.sin(),
            DiffusionConstants { k_sigma: 0.9, m_sigma: 1.1, l_sigma: 0.1, m_sigma_prime: 0.1 },
        );
        let r = validate_assumptions(&tanh_drift(), &s, &ProbeSpec::default());
        assert!(!r.passed());
    }

    #[test]
    fn sine_drift_increment_matches_antiderivative() {
        let b = DriftModel::new(
            "sin",
            |t: f64, _, _: &EmpiricalMeasure<f64>| t.sin(),
            DriftConstants { m_b: 1.0, l_b: 0.0, l_b_prime: 1.0 },
        );
        let mu = EmpiricalMeasure::dirac(0.0, 1).unwrap();
        let (tk, dt, eps): (f64, f64, f64) = (0.3, 0.01, 0.002);
        let exact = eps * ((tk / eps).cos() - ((tk + dt) / eps).cos());
        let mut prev = f64::INFINITY;
        for m in [8, 16, 32, 64] {
            let err = (drift_increment(&b, tk, dt, 0.0, &mu, eps, m) - exact).abs();
            // midpoint bound: dt * h^2 / (24 eps^2)
            let h = dt / m as f64;
            assert!(err <= dt * h * h / (24.0 * eps * eps) + 1e-15);
            if prev.is_finite() {
                let ratio = prev / err;
                assert!((3.5..4.5).contains(&ratio), "{ratio}");
            }
            prev = err;
        }
    }

    #[test]
    fn constant_drift_increment_is_exact() {
        let b = DriftModel::new(
            "c",
            |_, _, _: &EmpiricalMeasure<f64>| 0.75,
            DriftConstants { m_b: 0.75, l_b: 0.0, l_b_prime: 0.0 },
        );
        let mu = EmpiricalMeasure::dirac(0.0, 1).unwrap();
        assert_eq!(drift_increment(&b, 0.0, 0.25, 1.0, &mu, 1e-3, 1), 0.1875);
    }

    #[test]
    fn drift_nodes_follow_period() {
        let cfg = config(100, 2);
        let b = DriftModel::new("s", |t: f64, _, _: &EmpiricalMeasure<f64>| t.sin(), DriftConstants {
            m_b: 1.0,
            l_b: 0.0,
            l_b_prime: 1.0,
        });
        // dt = 0.01, eighth period = 0.0785 -> 1 node, times 2
        assert_eq!(cfg.drift_nodes(&b), 2);
        let fine = SolverConfig { epsilon: 1e-3, ..cfg };
        // 0.01 / 7.85e-4 = 12.7 -> 13, times 2
        assert_eq!(fine.drift_nodes(&b), 26);
        assert_eq!(fine.drift_nodes(&tanh_drift()), 1);
    }

    #[test]
    fn zero_drift_constant_sigma_telescopes() {
        let cfg = config(128, 8);
        let b = DriftModel::new("0", |_, _, _: &EmpiricalMeasure<f64>| 0.0, DriftConstants {
            m_b: 0.0,
            l_b: 0.0,
            l_b_prime: 0.0,
        })
        .time_independent();
        let noise = Arc::new(sample_noise(&cfg).unwrap());
        let tr = solve_oscillatory(&cfg, &b, &DiffusionModel::constant(2.0), Arc::clone(&noise)).unwrap();
        for i in 0..8 {
            for (x, bh) in tr.particle(i).iter().zip(noise.path(i)) {
                assert!((x - (0.5 + 2.0 * bh)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn measure_snapshots_match_states() {
        let cfg = config(32, 16);
        let tr = solve_oscillatory(&cfg, &tanh_drift(), &sin_sigma(), Arc::new(sample_noise(&cfg).unwrap())).unwrap();
        for k in [0, 7, 32] {
            let mut col: Vec<f64> = tr.particles().map(|p| p[k]).collect();
            col.sort_by(f64::total_cmp);
            assert_eq!(tr.measure(k).atoms(), col.as_slice());
        }
    }

    #[test]
    fn time_free_drift_gives_identical_coupled_paths() {
        let cfg = config(64, 16);
        let (osc, avg) = coupled_solve(&cfg, &tanh_drift(), &sin_sigma()).unwrap();
        for (a, b) in osc.particles().zip(avg.particles()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn missing_average_is_reported() {
        let cfg = config(8, 4);
        let b = DriftModel::new("s", |t: f64, _, _: &EmpiricalMeasure<f64>| t.sin(), DriftConstants {
            m_b: 1.0,
            l_b: 0.0,
            l_b_prime: 1.0,
        });
        let noise = Arc::new(sample_noise(&cfg).unwrap());
        let err = solve_averaged(&cfg, &b, &sin_sigma(), noise).unwrap_err();
        assert!(matches!(err, Error::MissingAveragedDrift(_)));
    }

    #[test]
    fn noise_mismatch_is_rejected() {
        let cfg = config(16, 4);
        let other = fbm::sample(FbmMethod::Circulant, TimeGrid::new(1.0, 32).unwrap(), cfg.hurst, 4, 1).unwrap();
        let err = solve_oscillatory(&cfg, &tanh_drift(), &sin_sigma(), Arc::new(other)).unwrap_err();
        assert!(matches!(err, Error::NoiseMismatch(_)));
        let few = fbm::sample(FbmMethod::Circulant, cfg.grid, cfg.hurst, 2, 1).unwrap();
        assert!(solve_oscillatory(&cfg, &tanh_drift(), &sin_sigma(), Arc::new(few)).is_err());
    }

    #[test]
    fn blow_up_is_caught() {
        let cfg = config(16, 2);
        let b = DriftModel::new("explode", |_, x: f64, _: &EmpiricalMeasure<f64>| 1e15 * (1.0 + x.abs()), DriftConstants {
            m_b: 1.0,
            l_b: 1.0,
            l_b_prime: 0.0,
        })
        .time_independent();
        let err = solve_oscillatory(&cfg, &b, &sin_sigma(), Arc::new(sample_noise(&cfg).unwrap())).unwrap_err();
        assert!(matches!(err, Error::BlowUp { step: 1, particle: 0, .. }), "{err}");
        assert!(err.is_numerical());
    }

    #[test]
    fn config_rejects_rough_noise() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let cfg = SolverConfig::new(0.0, 0.1, 4, grid, HurstParam::new(0.4).unwrap(), 1);
        assert!(cfg.validate().unwrap_err().to_string().contains("H > 1/2"));
    }
}
