//! Built-in coefficient pairs addressable by name from configuration files.

use crate::error::{domain, Result};
use crate::metrics::EmpiricalMeasure;
use crate::scalar::Real;
use crate::solver::{AveragedDrift, DiffusionConstants, DiffusionModel, DriftConstants, DriftModel};

#[derive(Debug, Clone)]
pub struct ModelEntry<T> {
    pub name: &'static str,
    pub doc: &'static str,
    pub drift: DriftModel<T>,
    pub diffusion: DiffusionModel<T>,
    /// The averaged drift is known in closed form rather than built numerically.
    pub closed_form_average: bool,
}

pub const MODEL_NAMES: [&str; 5] = ["zero", "constant", "tanh", "sine", "benchmark"];

fn unit_sigma<T: Real>() -> DiffusionModel<T> {
    DiffusionModel::constant(T::one())
}

fn sin_sigma<T: Real>() -> DiffusionModel<T> {
    let c = T::lit(0.1);
    DiffusionModel::new(
        "1 + 0.1 sin(x)",
        move |x: T| T::one() + c * x.sin(),
        move |x: T| c * x.cos(),
        DiffusionConstants {
            k_sigma: T::lit(0.9),
            m_sigma: T::lit(1.1),
            l_sigma: T::lit(0.1),
            m_sigma_prime: T::lit(0.1),
        },
    )
}

fn zero<T: Real>() -> ModelEntry<T> {
    let consts = DriftConstants { m_b: T::zero(), l_b: T::zero(), l_b_prime: T::zero() };
    ModelEntry {
        name: "zero",
        doc: "b = 0, sigma = 1: the particles are x0 plus their driving fBm. Bounded, Lipschitz, \
              time-independent; sigma constant and non-degenerate.",
        drift: DriftModel::new("zero", |_, _, _: &EmpiricalMeasure<T>| T::zero(), consts)
            .time_independent()
            .with_averaged(AveragedDrift::new(|_, _: &EmpiricalMeasure<T>| T::zero(), T::zero())),
        diffusion: unit_sigma(),
        closed_form_average: true,
    }
}

fn constant<T: Real>() -> ModelEntry<T> {
    let consts = DriftConstants { m_b: T::one(), l_b: T::zero(), l_b_prime: T::zero() };
    ModelEntry {
        name: "constant",
        doc: "b = 1, sigma = 1: x0 + t + B^H. Bounded, Lipschitz, time-independent.",
        drift: DriftModel::new("constant", |_, _, _: &EmpiricalMeasure<T>| T::one(), consts)
            .time_independent()
            .with_averaged(AveragedDrift::new(|_, _: &EmpiricalMeasure<T>| T::one(), T::zero())),
        diffusion: unit_sigma(),
        closed_form_average: true,
    }
}

fn tanh<T: Real>() -> ModelEntry<T> {
    let consts = DriftConstants { m_b: T::one(), l_b: T::one(), l_b_prime: T::zero() };
    ModelEntry {
        name: "tanh",
        doc: "b = -tanh(x), sigma = 1 + 0.1 sin(x). Time-independent, so the averaged equation \
              coincides with the oscillatory one.",
        drift: DriftModel::new("tanh", |_, x: T, _: &EmpiricalMeasure<T>| -x.tanh(), consts)
            .time_independent()
            .with_averaged(AveragedDrift::new(|x: T, _: &EmpiricalMeasure<T>| -x.tanh(), T::one())),
        diffusion: sin_sigma(),
        closed_form_average: true,
    }
}

fn sine<T: Real>() -> ModelEntry<T> {
    let consts = DriftConstants { m_b: T::one(), l_b: T::one(), l_b_prime: T::one() };
    ModelEntry {
        name: "sine",
        doc: "b = sin(t) cos(x), sigma = 1 + 0.1 sin(x). Zero time average; the averaging rate \
              is bounded by 2/T.",
        drift: DriftModel::new("sine", |t: T, x: T, _: &EmpiricalMeasure<T>| t.sin() * x.cos(), consts)
            .with_averaged(AveragedDrift::new(|_, _: &EmpiricalMeasure<T>| T::zero(), T::zero())),
        diffusion: sin_sigma(),
        closed_form_average: true,
    }
}

fn benchmark<T: Real>() -> ModelEntry<T> {
    let half = T::lit(0.5);
    let consts = DriftConstants { m_b: T::lit(2.25), l_b: T::lit(1.5), l_b_prime: T::lit(0.75) };
    ModelEntry {
        name: "benchmark",
        doc: "b = (1 + sin(t)/2)(-tanh(x) + tanh(mean)/2), sigma = 1 + 0.1 sin(x). Bounded by 2.25, \
              1.5-Lipschitz in (x, W2), 0.75-Lipschitz in t; averaged drift \
              -tanh(x) + tanh(mean)/2 with averaging rate of order 1/T.",
        drift: DriftModel::new(
            "benchmark",
            move |t: T, x: T, mu: &EmpiricalMeasure<T>| {
                (T::one() + half * t.sin()) * (half * mu.mean().tanh() - x.tanh())
            },
            consts,
        )
        .with_averaged(AveragedDrift::new(
            move |x: T, mu: &EmpiricalMeasure<T>| half * mu.mean().tanh() - x.tanh(),
            T::one(),
        )),
        diffusion: sin_sigma(),
        closed_form_average: true,
    }
}

pub fn lookup<T: Real>(name: &str) -> Result<ModelEntry<T>> {
    match name {
        "zero" => Ok(zero()),
        "constant" => Ok(constant()),
        "tanh" => Ok(tanh()),
        "sine" => Ok(sine()),
        "benchmark" => Ok(benchmark()),
        _ => domain(format!("unknown model `{name}`; available: {}", MODEL_NAMES.join(", "))),
    }
}

pub fn all<T: Real>() -> Vec<ModelEntry<T>> {
    MODEL_NAMES.iter().map(|n| lookup(n).expect("registered name")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{validate_assumptions, ProbeSpec};

    #[test]
    fn every_entry_passes_validation() {
        for entry in all::<f64>() {
            let r = validate_assumptions(&entry.drift, &entry.diffusion, &ProbeSpec::default());
            assert!(r.passed(), "{}: {:?}", entry.name, r.violations().collect::<Vec<_>>());
            assert!(entry.drift.averaged().is_some());
        }
    }

    #[test]
    fn benchmark_constants_are_tight() {
        let r = validate_assumptions(&benchmark::<f64>().drift, &sin_sigma(), &ProbeSpec::default());
        let bound = r.checks.iter().find(|c| c.name == "drift bound M_b").unwrap();
        assert!(bound.observed > 0.9 * bound.declared);
    }

    #[test]
    fn unknown_name_lists_choices() {
        let err = lookup::<f64>("bench").unwrap_err().to_string();
        assert!(err.contains("benchmark"));
    }
}
