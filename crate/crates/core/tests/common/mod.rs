#![allow(dead_code)]

use fbm_averaging::{EmpiricalMeasure, TimeGrid};

pub fn grid(t_end: f64, n: usize) -> TimeGrid {
    TimeGrid::new(t_end, n).unwrap()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic two-sample KS critical value at the 5% level.
pub fn ks_critical_5pct(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    1.358 * ((n + m) / (n * m)).sqrt()
}

fn permute(k: usize, idx: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
    if k == idx.len() {
        visit(idx);
        return;
    }
    for i in k..idx.len() {
        idx.swap(k, i);
        permute(k + 1, idx, visit);
        idx.swap(k, i);
    }
}

/// `min_π sqrt(mean |x_i - y_π(i)|²)` over all permutations.
pub fn brute_force_w2(x: &[f64], y: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    let mut idx: Vec<usize> = (0..y.len()).collect();
    permute(0, &mut idx, &mut |p| {
        let c: f64 = x.iter().zip(p).map(|(a, &j)| (a - y[j]).powi(2)).sum::<f64>() / x.len() as f64;
        best = best.min(c);
    });
    best.sqrt()
}

pub fn measure(atoms: &[f64]) -> EmpiricalMeasure {
    EmpiricalMeasure::new(atoms.to_vec()).unwrap()
}

/// Classical fourth-order Runge–Kutta for a scalar autonomous ODE.
pub fn rk4(f: impl Fn(f64) -> f64, x0: f64, t_end: f64, steps: usize) -> Vec<f64> {
    let h = t_end / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    let mut x = x0;
    out.push(x);
    for _ in 0..steps {
        let k1 = f(x);
        let k2 = f(x + 0.5 * h * k1);
        let k3 = f(x + 0.5 * h * k2);
        let k4 = f(x + h * k3);
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.push(x);
    }
    out
}
