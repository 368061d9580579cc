//! Weyl fractional derivatives and the fractional-derivative representation
//! of the Young (generalized Riemann–Stieltjes) integral.
//!
//! Paths are treated as their piecewise-linear interpolants. The singular
//! integrals `∫ (f(t) - f(s)) / |t - s|^{ν+1} ds` are then integrated exactly
//! cell by cell: on a cell, `f(t) - f(s)` is affine in `u = |t - s|`, so the
//! cell contributes closed-form antiderivatives of `u^{-ν-1}` and `u^{-ν}`.
//! The cell containing `t` carries no `u^{-ν-1}` term, which removes the
//! endpoint singularity.
//!
//! The representation `∫ f dg = (-1)^α ∫ D^α_{a+} f · D^{1-α}_{b-} g_{b-} dt`
//! is evaluated as a real pairing: the two formal phases multiply to `-1`,
//! so [`weyl_right_adjusted`] returns the derivative without its phase and
//! [`zahle_integral`] negates the pairing.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::metrics::{holder_norm_on, holder_seminorm_full, HolderExponent, SamplePath};
use crate::quadrature::UnitRule;
use crate::scalar::{beta_fn, Real};

/// Gauss points per cell for the outer integral.
const OUTER_POINTS: usize = 16;
/// Grading exponent on interior cells.
const INTERIOR_GRADING: f64 = 2.0;
/// Geometric levels and points per level on the two end cells.
const END_LEVELS: usize = 40;
const END_POINTS: usize = 10;

/// Fractional order, `0 < alpha < 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct FracOrder<T>(T);

impl<T: Real> FracOrder<T> {
    pub fn new(alpha: T) -> Result<Self> {
        if alpha > T::zero() && alpha < T::one() {
            Ok(Self(alpha))
        } else {
            domain(format!("fractional order must lie in (0, 1), got {alpha}"))
        }
    }

    pub fn value(self) -> T {
        self.0
    }

    pub fn complement(self) -> Self {
        Self(T::one() - self.0)
    }
}

/// Exponents `(α, β, γ)` with `0 < α < γ < 1`, `1 - α < β < 1`, `β + γ > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct ExponentTriple<T> {
    pub alpha: T,
    pub beta: T,
    pub gamma: T,
}

impl<T: Real> ExponentTriple<T> {
    pub fn new(alpha: T, beta: T, gamma: T) -> Result<Self> {
        let mut failed = Vec::new();
        if !(alpha > T::zero()) {
            failed.push(format!("0 < α fails (α = {alpha})"));
        }
        if !(alpha < gamma) {
            failed.push(format!("α < γ fails ({alpha} ≥ {gamma})"));
        }
        if !(gamma < T::one()) {
            failed.push(format!("γ < 1 fails (γ = {gamma})"));
        }
        if !(T::one() - alpha < beta) {
            failed.push(format!("1 - α < β fails ({} ≥ {beta})", T::one() - alpha));
        }
        if !(beta < T::one()) {
            failed.push(format!("β < 1 fails (β = {beta})"));
        }
        if !(beta + gamma > T::one()) {
            failed.push(format!("β + γ > 1 fails ({beta} + {gamma})"));
        }
        if failed.is_empty() {
            Ok(Self { alpha, beta, gamma })
        } else {
            Err(Error::Inadmissible(failed))
        }
    }

    /// `(α, β, γ) = (0.4, 0.65, 0.55)`, admissible for `H = 0.7`.
    pub fn default_for_h07() -> Self {
        Self { alpha: T::lit(0.4), beta: T::lit(0.65), gamma: T::lit(0.55) }
    }

    pub fn order(&self) -> FracOrder<T> {
        FracOrder(self.alpha)
    }
}

/// Value of a Weyl derivative at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeylDerivative<T> {
    pub value: T,
    /// Set when the singular integrand does not decay towards the
    /// evaluation point (local regularity at or below the order).
    pub divergence_warning: bool,
}

/// Position `t = t_k + θ Δ` with `θ ∈ (0, 1]`, so that the cell `[t_k, t]`
/// (of length `θΔ`) is the one touching `t` from the left.
fn locate_from_left<T: Real>(t: T, dt: T, n: usize) -> (usize, T) {
    let pos = t / dt;
    let mut k = pos.floor().to_usize().unwrap_or(0);
    let mut theta = pos - T::from_index(k);
    if theta <= T::epsilon() * T::lit(16.0) * (T::one() + pos) && k > 0 {
        k -= 1;
        theta = T::one();
    }
    if k >= n {
        k = n - 1;
        theta = T::one();
    }
    (k, theta)
}

/// Position `t = t_k + θ Δ` with `φ = 1 - θ ∈ (0, 1]`: the cell `[t, t_{k+1}]`
/// has length `φΔ`.
fn locate_from_right<T: Real>(t: T, dt: T, n: usize) -> (usize, T) {
    let pos = t / dt;
    let mut k = pos.floor().to_usize().unwrap_or(0).min(n - 1);
    let mut phi = T::from_index(k + 1) - pos;
    if phi <= T::epsilon() * T::lit(16.0) * (T::one() + pos) && k + 1 < n {
        k += 1;
        phi = T::one();
    }
    (k, phi.min(T::one()))
}

/// `((l + offset) Δ)^{-ν}` and `((l + offset) Δ)^{1-ν} / Δ` for `l = 0..len`.
struct PowerTable<T> {
    neg: Vec<T>,
    pos: Vec<T>,
}

impl<T: Real> PowerTable<T> {
    fn new(offset: T, dt: T, nu: T, len: usize) -> Self {
        let mut neg = Vec::with_capacity(len);
        let mut pos = Vec::with_capacity(len);
        for l in 0..len {
            let u = (T::from_index(l) + offset) * dt;
            let p = u.powf(-nu);
            neg.push(p);
            pos.push(p * (T::from_index(l) + offset));
        }
        Self { neg, pos }
    }
}

/// `Γ(1-ν) D^ν_{a+} f(t)` for `t = t_k + θΔ`, `a = t_{ia}`, `k ≥ ia`.
fn left_scaled<T: Real>(v: &[T], ia: usize, k: usize, theta: T, nu: T, tab: &PowerTable<T>) -> T {
    let ft = v[k] + theta * (v[k + 1] - v[k]);
    let ratio = nu / (T::one() - nu);
    let mut acc = ft * tab.neg[k - ia] + ratio * (v[k + 1] - v[k]) * tab.pos[0];
    for j in ia..k {
        let l = k - j;
        let d = v[j + 1] - v[j];
        let c = ft - v[j] - d * (T::from_index(l) + theta);
        acc += c * (tab.neg[l - 1] - tab.neg[l]) + ratio * d * (tab.pos[l] - tab.pos[l - 1]);
    }
    acc
}

/// `Γ(1-ν) D^ν_{b-} g_{b-}(t)` without the `(-1)^ν` phase, for
/// `t = t_{k+1} - φΔ`, `b = t_{ib}`, `k < ib`.
fn right_scaled<T: Real>(v: &[T], ib: usize, k: usize, phi: T, nu: T, tab: &PowerTable<T>) -> T {
    let gt = v[k + 1] - phi * (v[k + 1] - v[k]);
    let ratio = nu / (T::one() - nu);
    let mut acc = (gt - v[ib]) * tab.neg[ib - k - 1] - ratio * (v[k + 1] - v[k]) * tab.pos[0];
    for j in k + 1..ib {
        let l = j - k;
        let d = v[j + 1] - v[j];
        // distance t - t_j = -(l - 1 + φ)Δ
        let c = gt - v[j] + d * (T::from_index(l - 1) + phi);
        acc += c * (tab.neg[l - 1] - tab.neg[l]) - ratio * d * (tab.pos[l] - tab.pos[l - 1]);
    }
    acc
}

/// Flags non-decay of the singular integrand near the evaluation point by
/// comparing contributions of dyadic blocks of cells at growing distance.
fn divergence_flag<T: Real>(block_sums: &[T]) -> bool {
    let pts: Vec<(f64, f64)> = block_sums
        .iter()
        .take(6)
        .enumerate()
        .filter(|(_, b)| b.abs() > T::zero())
        .map(|(j, b)| (j as f64, b.abs().as_f64().ln()))
        .collect();
    if pts.len() < 3 {
        return false;
    }
    slope(&pts) <= 0.0
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Left Weyl derivative `D^α_{a+} f(t)`; `a` must be a grid node.
pub fn weyl_left<T: Real>(f: &SamplePath<T>, a: T, alpha: FracOrder<T>, t: T) -> Result<WeylDerivative<T>> {
    let grid = f.grid();
    let ia = grid.require_node(a, "lower limit a")?;
    if !(t > a) || !grid.contains(t) {
        return domain(format!("left derivative needs a < t within the grid, got a = {a}, t = {t}"));
    }
    let dt = grid.dt();
    let (k, theta) = locate_from_left(t, dt, grid.n_steps());
    let k = k.max(ia);
    let nu = alpha.value();
    let tab = PowerTable::new(theta, dt, nu, k - ia + 1);
    let v = f.values();
    let value = left_scaled(v, ia, k, theta, nu, &tab) / (T::one() - nu).tgamma();

    // contributions of cells at lag l, grouped into blocks [2^b, 2^{b+1})
    let ft = v[k] + theta * (v[k + 1] - v[k]);
    let ratio = nu / (T::one() - nu);
    let mut blocks: Vec<T> = Vec::new();
    for j in (ia..k).rev() {
        let l = k - j;
        let b = usize::BITS as usize - 1 - l.leading_zeros() as usize;
        if blocks.len() <= b {
            blocks.resize(b + 1, T::zero());
        }
        let d = v[j + 1] - v[j];
        let c = ft - v[j] - d * (T::from_index(l) + theta);
        blocks[b] += c * (tab.neg[l - 1] - tab.neg[l]) + ratio * d * (tab.pos[l] - tab.pos[l - 1]);
    }
    Ok(WeylDerivative { value, divergence_warning: divergence_flag(&blocks) })
}

/// `D^{1-α}_{b-} g_{b-}(t)` with `g_{b-} = g - g(b)`, real convention
/// (phase dropped); `b` must be a grid node.
pub fn weyl_right_adjusted<T: Real>(g: &SamplePath<T>, b: T, alpha: FracOrder<T>, t: T) -> Result<T> {
    let grid = g.grid();
    let ib = grid.require_node(b, "upper limit b")?;
    if !(t < b) || !grid.contains(t) {
        return domain(format!("right derivative needs t < b within the grid, got t = {t}, b = {b}"));
    }
    let dt = grid.dt();
    let (k, phi) = locate_from_right(t, dt, grid.n_steps());
    let nu = T::one() - alpha.value();
    let tab = PowerTable::new(phi, dt, nu, ib - k + 1);
    Ok(right_scaled(g.values(), ib, k, phi, nu, &tab) / (T::one() - nu).tgamma())
}

/// Empirical Hölder exponent from the scaling of mean absolute increments
/// over dyadic lags, clamped to `[0, 1]`. `None` when the window is too
/// short to fit.
pub fn estimate_holder_exponent<T: Real>(values: &[T]) -> Option<f64> {
    let m = values.len();
    let mut pts = Vec::new();
    let mut lag = 1;
    let mut all_zero = true;
    while lag <= 64 && lag * 4 <= m {
        let mean = values
            .windows(lag + 1)
            .map(|w| (w[lag] - w[0]).abs().as_f64())
            .sum::<f64>()
            / (m - lag) as f64;
        if mean > 0.0 {
            all_zero = false;
            pts.push(((lag as f64).ln(), mean.ln()));
        }
        lag *= 2;
    }
    if all_zero && lag > 1 {
        return Some(1.0);
    }
    if pts.len() < 2 {
        return None;
    }
    Some(slope(&pts).clamp(0.0, 1.0))
}

/// `∫_a^b f dg` via fractional derivatives, with the Hölder exponents of
/// `f` and `g` estimated from the data and checked for admissibility.
pub fn zahle_integral<T: Real>(
    f: &SamplePath<T>,
    g: &SamplePath<T>,
    alpha: FracOrder<T>,
    a: T,
    b: T,
) -> Result<T> {
    let (ia, ib) = integration_nodes(f, g, a, b)?;
    let gamma_f = estimate_holder_exponent(&f.values()[ia..=ib]);
    let beta_g = estimate_holder_exponent(&g.values()[ia..=ib]);
    let al = alpha.value().as_f64();
    let mut failed = Vec::new();
    if let Some(gf) = gamma_f {
        if !(gf > al) {
            failed.push(format!("γ_f > α fails (estimated γ_f = {gf:.3}, α = {al})"));
        }
    }
    if let Some(bg) = beta_g {
        if !(bg > 1.0 - al) {
            failed.push(format!("β_g > 1 - α fails (estimated β_g = {bg:.3}, 1 - α = {:.3})", 1.0 - al));
        }
    }
    if let (Some(gf), Some(bg)) = (gamma_f, beta_g) {
        if !(gf + bg > 1.0) {
            failed.push(format!("γ_f + β_g > 1 fails ({gf:.3} + {bg:.3})"));
        }
    }
    if !failed.is_empty() {
        return Err(Error::Inadmissible(failed));
    }
    Ok(zahle_pairing(f.values(), g.values(), f.grid().dt(), alpha.value(), ia, ib))
}

/// Same as [`zahle_integral`] with declared exponents instead of estimates.
pub fn zahle_integral_with_exponents<T: Real>(
    f: &SamplePath<T>,
    g: &SamplePath<T>,
    trip: &ExponentTriple<T>,
    a: T,
    b: T,
) -> Result<T> {
    let (ia, ib) = integration_nodes(f, g, a, b)?;
    Ok(zahle_pairing(f.values(), g.values(), f.grid().dt(), trip.alpha, ia, ib))
}

fn integration_nodes<T: Real>(f: &SamplePath<T>, g: &SamplePath<T>, a: T, b: T) -> Result<(usize, usize)> {
    if f.grid() != g.grid() {
        return domain("integrand and integrator live on different grids");
    }
    if !(a < b) {
        return domain(format!("integration needs a < b, got [{a}, {b}]"));
    }
    let grid = f.grid();
    Ok((grid.require_node(a, "lower limit a")?, grid.require_node(b, "upper limit b")?))
}

/// Quadrature rule and power tables for one family of evaluation points.
struct OuterRule<T> {
    rule: UnitRule<T>,
    left: Vec<PowerTable<T>>,
    right: Vec<PowerTable<T>>,
}

impl<T: Real> OuterRule<T> {
    fn new(rule: UnitRule<T>, dt: T, alpha: T, len: usize) -> Self {
        let left = rule.nodes.iter().map(|&th| PowerTable::new(th, dt, alpha, len)).collect();
        let right = rule
            .complement
            .iter()
            .map(|&ph| PowerTable::new(ph, dt, T::one() - alpha, len))
            .collect();
        Self { rule, left, right }
    }

    fn cell(&self, f: &[T], g: &[T], alpha: T, ia: usize, ib: usize, k: usize) -> T {
        let mut s = T::zero();
        for q in 0..self.rule.len() {
            let th = self.rule.nodes[q];
            let ph = self.rule.complement[q];
            let dl = left_scaled(f, ia, k, th, alpha, &self.left[q]);
            let dr = right_scaled(g, ib, k, ph, T::one() - alpha, &self.right[q]);
            s += self.rule.weights[q] * dl * dr;
        }
        s
    }
}

fn zahle_pairing<T: Real>(f: &[T], g: &[T], dt: T, alpha: T, ia: usize, ib: usize) -> T {
    let cells = ib - ia;
    let len = cells + 1;
    let interior = OuterRule::new(UnitRule::graded(OUTER_POINTS, INTERIOR_GRADING), dt, alpha, len);
    let end = OuterRule::new(UnitRule::geometric(END_LEVELS, END_POINTS), dt, alpha, len);

    let per_cell: Vec<T> = (ia..ib)
        .into_par_iter()
        .map(|k| {
            let rule = if k == ia || k + 1 == ib { &end } else { &interior };
            rule.cell(f, g, alpha, ia, ib, k)
        })
        .collect();
    let norm = (T::one() - alpha).tgamma() * alpha.tgamma();
    -per_cell.into_iter().sum::<T>() * dt / norm
}

/// Left-point Riemann–Stieltjes sum `Σ f(t_i)(g(t_{i+1}) - g(t_i))` over
/// the nodes in `[a, b]`.
pub fn rs_sum<T: Real>(f: &SamplePath<T>, g: &SamplePath<T>, a: T, b: T) -> Result<T> {
    let (ia, ib) = integration_nodes(f, g, a, b)?;
    let (fv, gv) = (f.values(), g.values());
    Ok((ia..ib).map(|i| fv[i] * (gv[i + 1] - gv[i])).sum())
}

fn check_kernel_exponents<T: Real>(s: T, t: T, a: T, d: T) -> Result<()> {
    if !(a > T::zero() && a < T::one() && d > T::zero() && d < T::one()) {
        return domain(format!("kernel exponents must lie in (0, 1), got a = {a}, d = {d}"));
    }
    if !(s < t) {
        return domain(format!("kernel integral needs s < t, got [{s}, {t}]"));
    }
    Ok(())
}

/// `∫_s^t (r-s)^{-a} (t-r)^{-d} dr = (t-s)^{1-a-d} B(1-a, 1-d)`.
pub fn beta_kernel_integral<T: Real>(s: T, t: T, a: T, d: T) -> Result<T> {
    check_kernel_exponents(s, t, a, d)?;
    Ok((t - s).powf(T::one() - a - d) * beta_fn(T::one() - a, T::one() - d))
}

/// Direct quadrature of `∫_s^t (r-s)^{-a} (t-r)^{-d} dr`.
///
/// The range is split at the midpoint; on each half the substitution
/// `r - s = v^{1/(1-a)}` (resp. `t - r = w^{1/(1-d)}`) absorbs the singular
/// factor, and the remaining smooth integrand is integrated by Gauss rules
/// on geometrically shrinking subintervals towards the former singularity.
pub fn beta_kernel_quadrature<T: Real>(s: T, t: T, a: T, d: T) -> Result<T> {
    check_kernel_exponents(s, t, a, d)?;
    let len = t - s;
    let half = len * T::lit(0.5);
    let rule = UnitRule::<T>::gauss(20);
    let half_integral = |p: T, q: T| -> T {
        // (1/(1-p)) ∫_0^{V} (len - v^{1/(1-p)})^{-q} dv,  V = half^{1-p}
        let e = T::one() / (T::one() - p);
        let upper = half.powf(T::one() - p);
        let integrand = |v: T| (len - v.powf(e)).powf(-q);
        let mut total = T::zero();
        let mut hi = upper;
        for _ in 0..60 {
            let lo = hi * T::lit(0.5);
            total += rule.integrate(lo, hi, integrand);
            hi = lo;
        }
        total += rule.integrate(T::zero(), hi, integrand);
        total * e
    };
    Ok(half_integral(a, d) + half_integral(d, a))
}

/// Empirical constant of the Young bound
/// `|∫_s^t f dg| ≤ C ‖f‖_{γ,s,t} |||g|||_β (t-s)^β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct YoungBoundCheck<T> {
    pub lhs: T,
    pub rhs_factor: T,
    pub ratio: T,
}

pub fn young_bound_check<T: Real>(
    f: &SamplePath<T>,
    g: &SamplePath<T>,
    trip: &ExponentTriple<T>,
    s: T,
    t: T,
) -> Result<YoungBoundCheck<T>> {
    let lhs = zahle_integral_with_exponents(f, g, trip, s, t)?.abs();
    let f_norm = holder_norm_on(f, HolderExponent::new(trip.gamma)?, s, t)?;
    let g_semi = holder_seminorm_full(g, HolderExponent::new(trip.beta)?).value;
    let rhs_factor = f_norm * g_semi * (t - s).powf(trip.beta);
    let scale = f_norm.max(T::one()) * g_semi.max(T::one());
    let ratio = if rhs_factor > T::zero() {
        lhs / rhs_factor
    } else if lhs <= T::lit(1e-12) * scale {
        T::zero()
    } else {
        return Err(Error::Invariant(format!(
            "Young bound right-hand side vanishes while |∫ f dg| = {lhs}"
        )));
    };
    Ok(YoungBoundCheck { lhs, rhs_factor, ratio })
}
