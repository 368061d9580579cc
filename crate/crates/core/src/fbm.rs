//! Exact fractional Brownian motion samplers.
//!
//! Two samplers share one contract: rows are i.i.d. centered Gaussian
//! vectors with covariance `R_H(t_i, t_j)` on a uniform grid, deterministic
//! given the seed. The Cholesky sampler factors the path covariance directly
//! and is capped at [`CHOLESKY_MAX_STEPS`]; the circulant sampler embeds the
//! stationary increment covariance in a circulant matrix and diagonalizes it
//! with an FFT.
//!
//! Paths are cumulative sums of increments in working precision, without
//! compensated summation.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::grid::TimeGrid;
use crate::metrics::SamplePath;
use crate::rng::keyed_rng;
use crate::scalar::Real;

pub const CHOLESKY_MAX_STEPS: usize = 4096;

/// Eigenvalues of the unit-spacing embedding below this are rejected.
pub const EMBEDDING_EIGEN_TOLERANCE: f64 = -1e-12;

/// Hurst parameter, `0 < h < 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HurstParam<T>(T);

impl<T: Real> HurstParam<T> {
    pub fn new(h: T) -> Result<Self> {
        if h > T::zero() && h < T::one() {
            Ok(Self(h))
        } else {
            domain(format!("Hurst parameter must lie in (0, 1), got {h}"))
        }
    }

    /// Hurst parameter for the Young-integral regime, `1/2 < h < 1`.
    pub fn young(h: T) -> Result<Self> {
        let p = Self::new(h)?;
        p.require_young()?;
        Ok(p)
    }

    pub fn value(self) -> T {
        self.0
    }

    pub fn require_young(self) -> Result<()> {
        if self.0 > T::lit(0.5) {
            Ok(())
        } else {
            domain(format!(
                "Hurst parameter must satisfy H > 1/2 for pathwise Young integration, got {}",
                self.0
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FbmMethod {
    Cholesky,
    Circulant,
}

impl std::fmt::Display for FbmMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FbmMethod::Cholesky => "cholesky",
            FbmMethod::Circulant => "circulant",
        })
    }
}

/// `R_H(t, s) = (t^{2H} + s^{2H} - |t - s|^{2H}) / 2`.
pub fn covariance<T: Real>(s: T, t: T, h: HurstParam<T>) -> Result<T> {
    if s < T::zero() || t < T::zero() {
        return domain(format!("covariance needs nonnegative times, got ({s}, {t})"));
    }
    Ok(covariance_unchecked(s, t, h.value()))
}

fn covariance_unchecked<T: Real>(s: T, t: T, h: T) -> T {
    let two_h = h + h;
    T::lit(0.5) * (t.powf(two_h) + s.powf(two_h) - (t - s).abs().powf(two_h))
}

/// Autocovariance of unit-spacing fractional Gaussian noise at lag `k`,
/// scaled by `dt^{2H}`.
pub fn increment_autocovariance<T: Real>(k: usize, h: HurstParam<T>, dt: T) -> T {
    let two_h = h.value() + h.value();
    let kf = T::from_index(k);
    let km1 = (kf - T::one()).abs();
    T::lit(0.5) * ((kf + T::one()).powf(two_h) + km1.powf(two_h) - T::lit(2.0) * kf.powf(two_h))
        * dt.powf(two_h)
}

/// Batch of fBm paths on a shared grid, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FbmBatch<T> {
    grid: TimeGrid<T>,
    hurst: HurstParam<T>,
    method: FbmMethod,
    seed: u64,
    n_paths: usize,
    data: Vec<T>,
}

impl<T: Real> FbmBatch<T> {
    /// Assembles a batch from explicit rows; every row must start at 0.
    pub fn from_rows(
        grid: TimeGrid<T>,
        hurst: HurstParam<T>,
        method: FbmMethod,
        seed: u64,
        rows: Vec<Vec<T>>,
    ) -> Result<Self> {
        let n_nodes = grid.n_nodes();
        let n_paths = rows.len();
        let mut data = Vec::with_capacity(n_paths * n_nodes);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n_nodes {
                return domain(format!("row {i} has {} values, grid has {n_nodes} nodes", row.len()));
            }
            if row[0] != T::zero() {
                return domain(format!("row {i} does not start at 0"));
            }
            data.extend(row);
        }
        Ok(Self { grid, hurst, method, seed, n_paths, data })
    }

    pub fn grid(&self) -> TimeGrid<T> {
        self.grid
    }

    pub fn hurst(&self) -> HurstParam<T> {
        self.hurst
    }

    pub fn method(&self) -> FbmMethod {
        self.method
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn path(&self, i: usize) -> &[T] {
        let n = self.grid.n_nodes();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn paths(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.grid.n_nodes())
    }

    pub fn increments(&self, i: usize) -> Vec<T> {
        self.path(i).windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn sample_path(&self, i: usize) -> SamplePath<T> {
        SamplePath::new(self.grid, self.path(i).to_vec())
            .expect("batch rows match the batch grid")
    }

    /// Every `factor`-th node of every path, on the coarser grid.
    pub fn subsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.grid.n_steps().is_multiple_of(factor) {
            return domain(format!(
                "cannot subsample {} steps by a factor of {factor}",
                self.grid.n_steps()
            ));
        }
        let grid = TimeGrid::new(self.grid.t_end(), self.grid.n_steps() / factor)?;
        let rows = self
            .paths()
            .map(|p| p.iter().step_by(factor).copied().collect())
            .collect();
        Self::from_rows(grid, self.hurst, self.method, self.seed, rows)
    }

    /// First `n` rows.
    pub fn take_paths(&self, n: usize) -> Result<Self> {
        if n > self.n_paths {
            return domain(format!("batch has {} paths, {n} requested", self.n_paths));
        }
        let rows = self.paths().take(n).map(<[T]>::to_vec).collect();
        Self::from_rows(self.grid, self.hurst, self.method, self.seed, rows)
    }
}

/// Dispatches to the sampler named by `method`.
pub fn sample<T: Real>(
    method: FbmMethod,
    grid: TimeGrid<T>,
    h: HurstParam<T>,
    n_paths: usize,
    seed: u64,
) -> Result<FbmBatch<T>> {
    match method {
        FbmMethod::Cholesky => sample_cholesky(grid, h, n_paths, seed),
        FbmMethod::Circulant => sample_circulant(grid, h, n_paths, seed),
    }
}

/// Exact sampler through the Cholesky factor of `[R_H(t_i, t_j)]`.
pub fn sample_cholesky<T: Real>(
    grid: TimeGrid<T>,
    h: HurstParam<T>,
    n_paths: usize,
    seed: u64,
) -> Result<FbmBatch<T>> {
    let n = grid.n_steps();
    if n > CHOLESKY_MAX_STEPS {
        return Err(Error::GridTooLarge { n_steps: n, limit: CHOLESKY_MAX_STEPS });
    }
    if n_paths == 0 {
        return domain("need at least one path");
    }
    let times: Vec<T> = (1..=n).map(|k| grid.node(k)).collect();
    let mut lower = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            lower[i * n + j] = covariance_unchecked(times[i], times[j], h.value());
        }
    }
    cholesky_in_place(&mut lower, n)?;

    let rows: Vec<Vec<T>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = keyed_rng(seed, p as u64);
            let z: Vec<T> = (0..n).map(|_| T::standard_normal(&mut rng)).collect();
            let mut row = Vec::with_capacity(n + 1);
            row.push(T::zero());
            for i in 0..n {
                let li = &lower[i * n..i * n + i + 1];
                row.push(li.iter().zip(&z).map(|(&l, &zj)| l * zj).sum());
            }
            row
        })
        .collect();
    FbmBatch::from_rows(grid, h, FbmMethod::Cholesky, seed, rows)
}

/// Lower Cholesky factor of a symmetric matrix whose lower triangle is
/// stored row-major in `a`.
fn cholesky_in_place<T: Real>(a: &mut [T], n: usize) -> Result<()> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > T::zero()) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d.as_f64() });
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Ok(())
}

/// Eigenvalues of the circulant embedding of unit-spacing fGn with `n` lags.
///
/// First row is `γ(0), …, γ(n), γ(n-1), …, γ(1)` (length `2n`).
pub fn embedding_eigenvalues<T: Real>(n: usize, h: HurstParam<T>) -> Vec<T> {
    let m = 2 * n;
    let mut row: Vec<Complex<T>> = (0..m)
        .map(|j| {
            let lag = if j <= n { j } else { m - j };
            Complex::new(increment_autocovariance(lag, h, T::one()), T::zero())
        })
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut row);
    row.into_iter().map(|c| c.re).collect()
}

/// Exact sampler by circulant embedding of the increment covariance.
pub fn sample_circulant<T: Real>(
    grid: TimeGrid<T>,
    h: HurstParam<T>,
    n_paths: usize,
    seed: u64,
) -> Result<FbmBatch<T>> {
    if n_paths == 0 {
        return domain("need at least one path");
    }
    let n = grid.n_steps();
    let m = 2 * n;
    let eigen = embedding_eigenvalues(n, h);
    let tol = T::lit(EMBEDDING_EIGEN_TOLERANCE);
    if let Some((index, &value)) = eigen.iter().enumerate().find(|(_, &l)| l < tol) {
        return Err(Error::NegativeEigenvalue { index, value: value.as_f64() });
    }
    let mf = T::from_index(m);
    let weights: Vec<T> = eigen.iter().map(|&l| (l.max(T::zero()) / mf).sqrt()).collect();
    let scale = grid.dt().powf(h.value());
    let fft: Arc<dyn Fft<T>> = FftPlanner::new().plan_fft_forward(m);

    let rows: Vec<Vec<T>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = keyed_rng(seed, p as u64);
            let mut buf: Vec<Complex<T>> = weights
                .iter()
                .map(|&w| {
                    let re = T::standard_normal(&mut rng);
                    let im = T::standard_normal(&mut rng);
                    Complex::new(w * re, w * im)
                })
                .collect();
            fft.process(&mut buf);
            let mut row = Vec::with_capacity(n + 1);
            let mut acc = T::zero();
            row.push(acc);
            for c in &buf[..n] {
                acc += c.re * scale;
                row.push(acc);
            }
            row
        })
        .collect();
    FbmBatch::from_rows(grid, h, FbmMethod::Circulant, seed, rows)
}

/// `t ↦ ε^H B_{t/ε}`: values scaled by `ε^H`, horizon scaled by `ε`.
pub fn self_similar_rescale<T: Real>(batch: &FbmBatch<T>, eps: T) -> Result<FbmBatch<T>> {
    if !(eps > T::zero()) || !eps.is_finite() {
        return domain(format!("rescaling factor must be positive, got {eps}"));
    }
    let factor = eps.powf(batch.hurst.value());
    Ok(FbmBatch {
        grid: batch.grid.scaled(eps)?,
        hurst: batch.hurst,
        method: batch.method,
        seed: batch.seed,
        n_paths: batch.n_paths,
        data: batch.data.iter().map(|&v| v * factor).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(v: f64) -> HurstParam<f64> {
        HurstParam::new(v).unwrap()
    }

    #[test]
    fn covariance_examples() {
        assert_eq!(covariance(1.0, 1.0, h(0.7)).unwrap(), 1.0);
        assert!((covariance(1.0, 2.0, h(0.5)).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(covariance(0.0, 3.3, h(0.8)).unwrap(), 0.0);
        assert!(covariance(-1.0, 1.0, h(0.7)).is_err());
    }

    #[test]
    fn hurst_validation() {
        assert!(HurstParam::new(0.0_f64).is_err());
        assert!(HurstParam::new(1.0_f64).is_err());
        assert!(HurstParam::new(0.3_f64).is_ok());
        let err = HurstParam::young(0.4_f64).unwrap_err().to_string();
        assert!(err.contains("H > 1/2"), "{err}");
    }

    #[test]
    fn autocovariance_lag_zero_is_variance() {
        let dt = 0.125;
        assert!((increment_autocovariance(0, h(0.7), dt) - dt.powf(1.4)).abs() < 1e-15);
        // Brownian increments are uncorrelated.
        assert!(increment_autocovariance(3, h(0.5), dt).abs() < 1e-15);
    }

    #[test]
    fn embedding_is_nonnegative_for_long_memory() {
        for &hv in &[0.55, 0.7, 0.9, 0.99] {
            let ev = embedding_eigenvalues(512, h(hv));
            let min = ev.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min >= EMBEDDING_EIGEN_TOLERANCE, "H = {hv}: {min}");
        }
    }

    #[test]
    fn cholesky_reports_pivot() {
        let mut a = vec![1.0, 0.0, 1.0, 1.0];
        let err = cholesky_in_place(&mut a, 2).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { pivot: 1, .. }));
    }

    #[test]
    fn cholesky_cap() {
        let grid = TimeGrid::new(1.0, CHOLESKY_MAX_STEPS + 1).unwrap();
        assert!(matches!(
            sample_cholesky(grid, h(0.7), 1, 0),
            Err(Error::GridTooLarge { .. })
        ));
    }

    #[test]
    fn paths_start_at_zero() {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        for method in [FbmMethod::Cholesky, FbmMethod::Circulant] {
            let b = sample(method, grid, h(0.7), 5, 3).unwrap();
            assert!(b.paths().all(|p| p[0] == 0.0));
            assert_eq!(b.method(), method);
        }
    }

    #[test]
    fn rescale_identity_and_errors() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let b = sample_circulant(grid, h(0.7), 3, 1).unwrap();
        assert_eq!(self_similar_rescale(&b, 1.0).unwrap(), b);
        assert!(self_similar_rescale(&b, 0.0).is_err());
        assert!(self_similar_rescale(&b, -2.0).is_err());
    }

    #[test]
    fn subsample_keeps_shared_nodes() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let b = sample_circulant(grid, h(0.7), 2, 1).unwrap();
        let c = b.subsample(2).unwrap();
        assert_eq!(c.grid().n_steps(), 4);
        assert_eq!(c.path(1)[2], b.path(1)[4]);
        assert!(b.subsample(3).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let grid = TimeGrid::new(1.0_f32, 32).unwrap();
        let b = sample_circulant(grid, HurstParam::new(0.7_f32).unwrap(), 4, 9).unwrap();
        assert!(b.paths().all(|p| p.iter().all(|v| v.is_finite())));
    }
}
