use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::scalar::Real;

/// Uniform grid `t_k = k * t_end / n_steps`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid<T> {
    t_end: T,
    n_steps: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(t_end: T, n_steps: usize) -> Result<Self> {
        if !(t_end > T::zero()) || !t_end.is_finite() {
            return domain(format!("grid horizon must be positive and finite, got {t_end}"));
        }
        if n_steps == 0 {
            return domain("grid needs at least one step");
        }
        Ok(Self { t_end, n_steps })
    }

    pub fn t_end(&self) -> T {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> T {
        self.t_end / T::from_index(self.n_steps)
    }

    pub fn node(&self, k: usize) -> T {
        T::from_index(k) * self.t_end / T::from_index(self.n_steps)
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..=self.n_steps).map(|k| self.node(k)).collect()
    }

    /// Same node count on `[0, factor * t_end]`.
    pub fn scaled(&self, factor: T) -> Result<Self> {
        Self::new(self.t_end * factor, self.n_steps)
    }

    /// Index of the node at `t`, if `t` lies on the grid up to rounding.
    pub fn node_index(&self, t: T) -> Option<usize> {
        let pos = t / self.dt();
        let k = pos.round();
        if k < T::zero() || k > T::from_index(self.n_steps) {
            return None;
        }
        let tol = T::lit(1e-9).max(T::epsilon() * T::lit(64.0)) * (T::one() + k);
        if (pos - k).abs() <= tol {
            k.to_usize()
        } else {
            None
        }
    }

    pub(crate) fn require_node(&self, t: T, what: &str) -> Result<usize> {
        self.node_index(t)
            .ok_or_else(|| crate::Error::Domain(format!("{what} = {t} is not a grid node")))
    }

    pub(crate) fn contains(&self, t: T) -> bool {
        let slack = self.dt() * T::lit(1e-9);
        t >= -slack && t <= self.t_end + slack
    }
}
