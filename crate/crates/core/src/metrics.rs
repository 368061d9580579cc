//! Path norms and the one-dimensional quadratic Wasserstein distance.
//!
//! Hölder quotients are scanned over all node pairs when the scanned window
//! has at most [`EXACT_PAIR_LIMIT`] steps. Longer windows use the lags
//! `1..=64` plus every power of two; the result is then a lower bound and
//! [`HolderSeminorm::exact`] is `false`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::grid::TimeGrid;
use crate::scalar::Real;

pub const EXACT_PAIR_LIMIT: usize = 4096;
const SHORT_LAGS: usize = 64;
const PARALLEL_MIN_NODES: usize = 512;

/// Real-valued path sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath<T> {
    grid: TimeGrid<T>,
    values: Vec<T>,
}

impl<T: Real> SamplePath<T> {
    pub fn new(grid: TimeGrid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return domain(format!(
                "path has {} values but the grid has {} nodes",
                values.len(),
                grid.n_nodes()
            ));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return domain(format!("path value at node {k} is not finite"));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: TimeGrid<T>, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(grid, grid.nodes().into_iter().map(f).collect())
    }

    pub fn constant(grid: TimeGrid<T>, c: T) -> Result<Self> {
        Self::new(grid, vec![c; grid.n_nodes()])
    }

    pub fn grid(&self) -> TimeGrid<T> {
        self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Piecewise-linear interpolant at `t`, clamped to the grid span.
    pub fn value_at(&self, t: T) -> T {
        let dt = self.grid.dt();
        let n = self.grid.n_steps();
        let pos = (t / dt).max(T::zero());
        let k = pos.floor().to_usize().unwrap_or(0).min(n - 1);
        let theta = (pos - T::from_index(k)).min(T::one());
        self.values[k] + theta * (self.values[k + 1] - self.values[k])
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise `self - other`; grids must agree.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return domain("paths live on different grids");
        }
        Self::new(
            self.grid,
            self.values.iter().zip(&other.values).map(|(&a, &b)| a - b).collect(),
        )
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return domain("paths live on different grids");
        }
        Self::new(
            self.grid,
            self.values.iter().zip(&other.values).map(|(&a, &b)| a + b).collect(),
        )
    }

    /// Node range `[i0, i1]` covered by `[s, t]`.
    pub(crate) fn node_range(&self, s: T, t: T) -> Result<(usize, usize)> {
        if !(s < t) {
            return domain(format!("interval needs s < t, got [{s}, {t}]"));
        }
        if !self.grid.contains(s) || !self.grid.contains(t) {
            return domain(format!(
                "interval [{s}, {t}] leaves the grid span [0, {}]",
                self.grid.t_end()
            ));
        }
        let dt = self.grid.dt();
        let tol = T::lit(1e-9);
        let n = self.grid.n_steps();
        let i0 = (s / dt - tol).ceil().max(T::zero()).to_usize().unwrap_or(0).min(n);
        let i1 = (t / dt + tol).floor().to_usize().unwrap_or(n).min(n);
        Ok((i0, i1))
    }
}

/// Hölder exponent, `0 < gamma < 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct HolderExponent<T>(T);

impl<T: Real> HolderExponent<T> {
    pub fn new(gamma: T) -> Result<Self> {
        if gamma > T::zero() && gamma < T::one() {
            Ok(Self(gamma))
        } else {
            domain(format!("Hölder exponent must lie in (0, 1), got {gamma}"))
        }
    }

    pub fn value(self) -> T {
        self.0
    }
}

/// Value of a Hölder seminorm scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderSeminorm<T> {
    pub value: T,
    /// `false` when the restricted lag set was used (value is a lower bound).
    pub exact: bool,
}

pub fn sup_norm<T: Real>(f: &SamplePath<T>) -> T {
    f.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

fn sup_norm_range<T: Real>(values: &[T]) -> T {
    values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

/// Lags to scan for a window with `steps` steps.
fn scan_lags(steps: usize) -> (Vec<usize>, bool) {
    if steps <= EXACT_PAIR_LIMIT {
        return ((1..=steps).collect(), true);
    }
    let mut lags: Vec<usize> = (1..=SHORT_LAGS).collect();
    let mut l = SHORT_LAGS * 2;
    while l <= steps {
        lags.push(l);
        l *= 2;
    }
    (lags, false)
}

/// `max_{i<j} w_j |v_j - v_i| / ((j - i) dt)^gamma` over the scanned lags,
/// where `w_j = weight(j)` is applied on the later node.
fn weighted_pair_scan<T: Real>(
    values: &[T],
    dt: T,
    gamma: T,
    weight: Option<&(dyn Fn(usize) -> T + Sync)>,
) -> (T, bool) {
    let m = values.len();
    if m < 2 {
        return (T::zero(), true);
    }
    let (lags, exact) = scan_lags(m - 1);
    let mut inv_pow = vec![T::zero(); m];
    for &l in &lags {
        inv_pow[l] = T::one() / (T::from_index(l) * dt).powf(gamma);
    }
    let row = |j: usize| -> T {
        let vj = values[j];
        let best = if exact {
            (0..j).fold(T::zero(), |acc, i| acc.max((vj - values[i]).abs() * inv_pow[j - i]))
        } else {
            lags.iter()
                .take_while(|&&l| l <= j)
                .fold(T::zero(), |acc, &l| acc.max((vj - values[j - l]).abs() * inv_pow[l]))
        };
        match weight {
            Some(w) => w(j) * best,
            None => best,
        }
    };
    let value = if m >= PARALLEL_MIN_NODES {
        (1..m).into_par_iter().map(row).reduce(T::zero, T::max)
    } else {
        (1..m).map(row).fold(T::zero(), T::max)
    };
    (value, exact)
}

/// `sup_{s ≤ u < v ≤ t} |f(v) - f(u)| / (v - u)^γ` over grid nodes in `[s, t]`.
pub fn holder_seminorm<T: Real>(
    f: &SamplePath<T>,
    gamma: HolderExponent<T>,
    s: T,
    t: T,
) -> Result<HolderSeminorm<T>> {
    let (i0, i1) = f.node_range(s, t)?;
    if i1 <= i0 {
        return Ok(HolderSeminorm { value: T::zero(), exact: true });
    }
    let (value, exact) = weighted_pair_scan(&f.values[i0..=i1], f.grid.dt(), gamma.value(), None);
    Ok(HolderSeminorm { value, exact })
}

/// Seminorm over the whole grid.
pub fn holder_seminorm_full<T: Real>(f: &SamplePath<T>, gamma: HolderExponent<T>) -> HolderSeminorm<T> {
    let (value, exact) = weighted_pair_scan(&f.values, f.grid.dt(), gamma.value(), None);
    HolderSeminorm { value, exact }
}

/// `‖f‖_γ = ‖f‖_∞ + |||f|||_γ` on the whole grid.
pub fn holder_norm<T: Real>(f: &SamplePath<T>, gamma: HolderExponent<T>) -> T {
    sup_norm(f) + holder_seminorm_full(f, gamma).value
}

/// `‖f‖_{γ,s,t}`, both parts restricted to `[s, t]`.
pub fn holder_norm_on<T: Real>(f: &SamplePath<T>, gamma: HolderExponent<T>, s: T, t: T) -> Result<T> {
    let (i0, i1) = f.node_range(s, t)?;
    let semi = holder_seminorm(f, gamma, s, t)?.value;
    Ok(sup_norm_range(&f.values[i0..=i1]) + semi)
}

/// `sup_t e^{-λt/2}|f(t)| + sup_{s<t} e^{-λt/2}|f(t) - f(s)|/(t - s)^γ`.
pub fn lambda_norm<T: Real>(f: &SamplePath<T>, gamma: HolderExponent<T>, lambda: T) -> Result<T> {
    if !(lambda >= T::one()) {
        return domain(format!("λ must be at least 1, got {lambda}"));
    }
    let grid = f.grid;
    let half = lambda * T::lit(0.5);
    let weights: Vec<T> = (0..grid.n_nodes()).map(|k| (-half * grid.node(k)).exp()).collect();
    let sup = f
        .values
        .iter()
        .zip(&weights)
        .fold(T::zero(), |m, (&v, &w)| m.max(w * v.abs()));
    let w = |j: usize| weights[j];
    let (semi, _) = weighted_pair_scan(&f.values, grid.dt(), gamma.value(), Some(&w));
    Ok(sup + semi)
}

/// Equally weighted atoms, sorted ascending, with cached first two moments.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure<T> {
    atoms: Vec<T>,
    mean: T,
    second_moment: T,
}

impl<T: Real> EmpiricalMeasure<T> {
    pub fn new(mut atoms: Vec<T>) -> Result<Self> {
        if atoms.is_empty() {
            return domain("empirical measure needs at least one atom");
        }
        if atoms.iter().any(|a| !a.is_finite()) {
            return domain("empirical measure atoms must be finite");
        }
        atoms.sort_by(|a, b| a.partial_cmp(b).expect("finite atoms"));
        let n = T::from_index(atoms.len());
        let mean = atoms.iter().copied().sum::<T>() / n;
        let second_moment = atoms.iter().map(|&a| a * a).sum::<T>() / n;
        Ok(Self { atoms, mean, second_moment })
    }

    pub fn dirac(x: T, n: usize) -> Result<Self> {
        Self::new(vec![x; n.max(1)])
    }

    pub fn atoms(&self) -> &[T] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mean(&self) -> T {
        self.mean
    }

    /// `μ(|·|²)`.
    pub fn second_moment(&self) -> T {
        self.second_moment
    }

    /// `∫ φ dμ`.
    pub fn expect(&self, phi: impl Fn(T) -> T) -> T {
        self.atoms.iter().map(|&a| phi(a)).sum::<T>() / T::from_index(self.atoms.len())
    }
}

pub fn second_moment<T: Real>(mu: &EmpiricalMeasure<T>) -> T {
    mu.second_moment()
}

/// `W₂` between two equal-size empirical measures (sorted coupling).
pub fn wasserstein2<T: Real>(mu: &EmpiricalMeasure<T>, nu: &EmpiricalMeasure<T>) -> Result<T> {
    if mu.len() != nu.len() {
        return Err(Error::AtomCountMismatch { left: mu.len(), right: nu.len() });
    }
    let sq: T = mu
        .atoms
        .iter()
        .zip(&nu.atoms)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    Ok((sq / T::from_index(mu.len())).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(n: usize) -> TimeGrid<f64> {
        TimeGrid::new(1.0, n).unwrap()
    }

    fn g(v: f64) -> HolderExponent<f64> {
        HolderExponent::new(v).unwrap()
    }

    #[test]
    fn sup_norm_examples() {
        let grid = unit_grid(1024);
        assert_eq!(sup_norm(&SamplePath::constant(grid, 0.0).unwrap()), 0.0);
        assert_eq!(sup_norm(&SamplePath::from_fn(grid, |t| t).unwrap()), 1.0);
        let s = SamplePath::from_fn(grid, |t| (2.0 * std::f64::consts::PI * t).sin()).unwrap();
        // 1024 is divisible by 4, so t = 1/4 is a node.
        assert!((sup_norm(&s) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn seminorm_of_identity_is_one() {
        let f = SamplePath::from_fn(unit_grid(64), |t| t).unwrap();
        let s = holder_seminorm(&f, g(0.6), 0.0, 1.0).unwrap();
        assert!((s.value - 1.0).abs() < 1e-14);
        assert!(s.exact);
        assert!((holder_norm(&f, g(0.6)) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn constants_have_zero_seminorm() {
        let f = SamplePath::constant(unit_grid(50), 5.0).unwrap();
        assert_eq!(holder_seminorm(&f, g(0.3), 0.0, 1.0).unwrap().value, 0.0);
        assert_eq!(holder_norm(&f, g(0.3)), 5.0);
        assert_eq!(lambda_norm(&SamplePath::constant(unit_grid(50), 1.0).unwrap(), g(0.3), 7.0).unwrap(), 1.0);
    }

    #[test]
    fn seminorm_rejects_bad_intervals() {
        let f = SamplePath::from_fn(unit_grid(8), |t| t).unwrap();
        assert!(holder_seminorm(&f, g(0.5), 0.5, 0.5).is_err());
        assert!(holder_seminorm(&f, g(0.5), 0.6, 0.2).is_err());
        assert!(holder_seminorm(&f, g(0.5), 0.0, 2.0).is_err());
    }

    #[test]
    fn lambda_below_one_is_rejected() {
        let f = SamplePath::from_fn(unit_grid(8), |t| t).unwrap();
        assert!(lambda_norm(&f, g(0.5), 0.5).is_err());
    }

    #[test]
    fn lambda_norm_matches_brute_force_for_identity() {
        let grid = unit_grid(40);
        let f = SamplePath::from_fn(grid, |t| t).unwrap();
        let nodes = grid.nodes();
        let mut sup = 0.0_f64;
        let mut semi = 0.0_f64;
        for (j, &t) in nodes.iter().enumerate() {
            sup = sup.max((-2.0 * t).exp() * t);
            for &s in &nodes[..j] {
                semi = semi.max((-2.0 * t).exp() * (t - s).powf(0.4));
            }
        }
        let got = lambda_norm(&f, g(0.6), 4.0).unwrap();
        assert!((got - (sup + semi)).abs() < 1e-14, "{got} vs {}", sup + semi);
    }

    #[test]
    fn long_paths_use_restricted_lags() {
        let grid = unit_grid(EXACT_PAIR_LIMIT * 2);
        let f = SamplePath::from_fn(grid, |t| t).unwrap();
        let s = holder_seminorm_full(&f, g(0.5));
        assert!(!s.exact);
        // the full-span lag n = 2^13 is in the restricted set
        assert!((s.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rough_path_seminorm_grows_under_refinement_above_its_regularity() {
        use crate::fbm::{sample_circulant, HurstParam};
        let fine = sample_circulant(unit_grid(2048), HurstParam::new(0.5).unwrap(), 8, 11).unwrap();
        let mut last = 0.0;
        for factor in [8, 4, 2, 1] {
            let b = fine.subsample(factor).unwrap();
            let mean: f64 = (0..b.n_paths())
                .map(|i| holder_seminorm_full(&b.sample_path(i), g(0.9)).value)
                .sum::<f64>()
                / b.n_paths() as f64;
            assert!(mean > last, "factor {factor}: {mean} <= {last}");
            last = mean;
        }
    }

    #[test]
    fn second_moment_examples() {
        assert_eq!(second_moment(&EmpiricalMeasure::new(vec![0.0]).unwrap()), 0.0);
        assert_eq!(second_moment(&EmpiricalMeasure::new(vec![-1.0, 1.0]).unwrap()), 1.0);
        let m = EmpiricalMeasure::<f64>::new(vec![3.0, 1.0, 2.0]).unwrap();
        assert!((second_moment(&m) - 14.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.atoms(), &[1.0, 2.0, 3.0]);
        assert_eq!(m.mean(), 2.0);
    }

    #[test]
    fn wasserstein_examples() {
        let mu = EmpiricalMeasure::new(vec![0.3, -1.0, 2.5]).unwrap();
        assert_eq!(wasserstein2(&mu, &mu).unwrap(), 0.0);
        let x = EmpiricalMeasure::<f64>::dirac(1.5, 4).unwrap();
        let y = EmpiricalMeasure::dirac(-0.5, 4).unwrap();
        assert!((wasserstein2(&x, &y).unwrap() - 2.0).abs() < 1e-15);
        let z = EmpiricalMeasure::dirac(0.0, 5).unwrap();
        assert!(matches!(wasserstein2(&x, &z), Err(Error::AtomCountMismatch { .. })));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(EmpiricalMeasure::new(vec![f64::NAN]).is_err());
        assert!(SamplePath::new(unit_grid(1), vec![0.0, f64::INFINITY]).is_err());
        assert!(SamplePath::new(unit_grid(2), vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn interpolation() {
        let f = SamplePath::from_fn(unit_grid(4), |t| 2.0 * t).unwrap();
        assert!((f.value_at(0.3) - 0.6).abs() < 1e-15);
        assert_eq!(f.value_at(1.0), 2.0);
    }
}
