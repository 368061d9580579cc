//! Gauss–Legendre rules and endpoint-graded variants.

use crate::scalar::Real;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi's initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Quadrature rule on `[0, 1]`. `complement[i] == 1 - nodes[i]`, computed
/// without cancellation.
#[derive(Debug, Clone)]
pub struct UnitRule<T> {
    pub nodes: Vec<T>,
    pub complement: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> UnitRule<T> {
    pub fn gauss(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        Self {
            nodes: x.iter().map(|&x| T::lit(0.5 * (1.0 + x))).collect(),
            complement: x.iter().map(|&x| T::lit(0.5 * (1.0 - x))).collect(),
            weights: w.iter().map(|&w| T::lit(0.5 * w)).collect(),
        }
    }

    /// Gauss rule pushed through `φ(u) = u^q / (u^q + (1-u)^q)`, which
    /// clusters nodes at both ends and flattens algebraic endpoint
    /// singularities.
    pub fn graded(n: usize, q: f64) -> Self {
        let (x, w) = gauss_legendre(n);
        let mut nodes = Vec::with_capacity(n);
        let mut complement = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for (&x, &w) in x.iter().zip(&w) {
            let u = 0.5 * (1.0 + x);
            let v = 0.5 * (1.0 - x);
            let (a, b) = (u.powf(q), v.powf(q));
            let den = a + b;
            nodes.push(T::lit(a / den));
            complement.push(T::lit(b / den));
            let jac = q * u.powf(q - 1.0) * v.powf(q - 1.0) / (den * den);
            weights.push(T::lit(0.5 * w * jac));
        }
        Self { nodes, complement, weights }
    }

    /// Composite Gauss rule on pieces `[2^{-j-1}, 2^{-j}]/2` shrinking
    /// geometrically towards both ends of `[0, 1]` (`levels` pieces per
    /// side, the last one touching the end). Suited to integrands with
    /// algebraic singularities of either sign at the endpoints.
    pub fn geometric(levels: usize, points: usize) -> Self {
        let (x, w) = gauss_legendre(points);
        let mut nodes = Vec::new();
        let mut complement = Vec::new();
        let mut weights = Vec::new();
        let mut push = |d: f64, wt: f64| {
            // near 0, then its mirror near 1
            nodes.push(T::lit(d));
            complement.push(T::lit(1.0 - d));
            weights.push(T::lit(wt));
            nodes.push(T::lit(1.0 - d));
            complement.push(T::lit(d));
            weights.push(T::lit(wt));
        };
        let mut hi = 0.5_f64;
        for _ in 0..levels.saturating_sub(1) {
            let h = 0.5 * hi;
            for (&xi, &wi) in x.iter().zip(&w) {
                push(h + 0.5 * h * (1.0 + xi), 0.5 * h * wi);
            }
            hi = h;
        }
        // innermost piece [0, hi]: graded map u^q absorbs x^{-a} for a < 1 - 1/q
        const Q: f64 = 8.0;
        for (&xi, &wi) in x.iter().zip(&w) {
            let u = 0.5 * (1.0 + xi);
            push(hi * u.powf(Q), 0.5 * wi * hi * Q * u.powf(Q - 1.0));
        }
        Self { nodes, complement, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, lo: T, hi: T, f: impl Fn(T) -> T) -> T {
        let h = hi - lo;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(lo + h * x))
            .sum::<T>()
            * h
    }
}
