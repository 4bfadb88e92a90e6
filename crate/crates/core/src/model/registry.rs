//! The three built-in one-dimensional example systems.
//!
//! All share the confining drift `f(x) = λ1 x (λ2 - |x|)`, the attraction
//! kernel `k(x, y) = x - y` and the diffusion `λ3 |x|^{3/2}`; they differ in
//! whether the diffusion also carries the interaction and whether the
//! interaction enters the drift through `sin`. Particles start at `x = 1`.

use std::sync::Arc;

use super::{DiffusionMode, Dims, DriftWrapper, InitialLaw, Kernel, McKeanModel, ScalarFn, TruncationSpec};
use crate::error::{Error, Result};

pub const LINEAR_DIFFUSION_INTERACTION: &str = "linear-diffusion-interaction";
pub const LINEAR_DRIFT_ONLY: &str = "linear-drift-only";
pub const NONLINEAR_SIN: &str = "nonlinear-sin";

pub const MODEL_NAMES: [&str; 3] = [LINEAR_DIFFUSION_INTERACTION, LINEAR_DRIFT_ONLY, NONLINEAR_SIN];

/// Safety factor applied to the growth constant of the default `phi`.
pub const PHI_SAFETY_FACTOR: f64 = 4.0;

/// `u0` in the default `h(Δ) = phi(u0) Δ^(-1/8)`.
pub const DEFAULT_SCALE_RADIUS: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub x0: f64,
}

impl Default for ExampleParams {
    fn default() -> Self {
        Self {
            lambda1: 2.5,
            lambda2: 1.0,
            lambda3: 1.0,
            x0: 1.0,
        }
    }
}

fn confining_drift(p: ExampleParams) -> super::PointField {
    Arc::new(move |x: &[f64], out: &mut [f64]| {
        out[0] = p.lambda1 * x[0] * (p.lambda2 - x[0].abs());
    })
}

fn power_diffusion(p: ExampleParams) -> super::PointField {
    Arc::new(move |x: &[f64], out: &mut [f64]| {
        out[0] = p.lambda3 * x[0].abs().powf(1.5);
    })
}

fn power_diffusion_derivative(p: ExampleParams) -> ScalarFn {
    Arc::new(move |x: f64| 1.5 * p.lambda3 * x.signum() * x.abs().sqrt())
}

fn finish(model: McKeanModel, p: ExampleParams) -> McKeanModel {
    model
        .with_initial(InitialLaw::Point(vec![p.x0]))
        .expect("scalar initial law")
}

/// Drift `f(x) + mean(x - y)`, diffusion `λ3|x|^{3/2} + mean(x - y)`.
pub fn linear_diffusion_interaction(p: ExampleParams) -> McKeanModel {
    let sigma_pair = move |x: &[f64], y: &[f64], out: &mut [f64]| {
        out[0] = p.lambda3 * x[0].abs().powf(1.5) + (x[0] - y[0]);
    };
    let sigma_combine = move |x: &[f64], v: &[f64], out: &mut [f64]| {
        out[0] = p.lambda3 * x[0].abs().powf(1.5) + (x[0] - v[0]);
    };
    let sigma = Kernel::from_fn(1, sigma_pair).with_separable(
        1,
        Arc::new(|y: &[f64], out: &mut [f64]| out[0] = y[0]),
        Arc::new(sigma_combine),
    );
    let model = McKeanModel::new(
        LINEAR_DIFFUSION_INTERACTION,
        Dims::scalar(),
        confining_drift(p),
        Kernel::difference(1),
        DriftWrapper::Identity,
        DiffusionMode::Interacting(sigma),
        1.0,
    )
    .expect("well-formed example");
    finish(model, p)
}

/// Drift `f(x) + mean(x - y)`, diffusion `λ3|x|^{3/2}`.
pub fn linear_drift_only(p: ExampleParams) -> McKeanModel {
    let model = McKeanModel::new(
        LINEAR_DRIFT_ONLY,
        Dims::scalar(),
        confining_drift(p),
        Kernel::difference(1),
        DriftWrapper::Identity,
        DiffusionMode::StateOnly(power_diffusion(p)),
        1.0,
    )
    .and_then(|m| m.with_diffusion_derivative(power_diffusion_derivative(p)))
    .expect("well-formed example");
    finish(model, p)
}

/// Drift `f(x) + sin(mean(x - y))`, diffusion `λ3|x|^{3/2}`.
pub fn nonlinear_sin(p: ExampleParams) -> McKeanModel {
    let model = McKeanModel::new(
        NONLINEAR_SIN,
        Dims::scalar(),
        confining_drift(p),
        Kernel::difference(1),
        DriftWrapper::Field(Arc::new(|m: &[f64], out: &mut [f64]| out[0] = m[0].sin())),
        DiffusionMode::StateOnly(power_diffusion(p)),
        1.0,
    )
    .and_then(|m| m.with_diffusion_derivative(power_diffusion_derivative(p)))
    .expect("well-formed example");
    finish(model, p)
}

pub fn by_name(name: &str, p: ExampleParams) -> Result<McKeanModel> {
    match name {
        LINEAR_DIFFUSION_INTERACTION => Ok(linear_diffusion_interaction(p)),
        LINEAR_DRIFT_ONLY => Ok(linear_drift_only(p)),
        NONLINEAR_SIN => Ok(nonlinear_sin(p)),
        "zero" => Ok(McKeanModel::zero(1, 1).with_initial(InitialLaw::Point(vec![p.x0]))?),
        other => Err(Error::Config(format!(
            "unknown model '{other}' (known: {}, zero)",
            MODEL_NAMES.join(", ")
        ))),
    }
}

/// Growth constant `K = safety · max(λ1 (λ2 + 1), λ3)` of the default `phi`.
pub fn default_growth_constant(p: ExampleParams) -> f64 {
    PHI_SAFETY_FACTOR * (p.lambda1 * (p.lambda2 + 1.0)).max(p.lambda3)
}

/// `phi(u) = K (1 + u)^2`, `h(Δ) = phi(u0) Δ^(-1/8)` with `u0 = 16`, `Δ* = 1`.
///
/// The radius is `(1 + u0) Δ^(-1/16) - 1` whatever `K` is: about 23 at
/// `Δ = 2^-7`. A radius near 1, which `h = phi(1) Δ^(-1/8)` would give,
/// truncates these examples on most paths and biases the scheme.
pub fn default_truncation(p: ExampleParams) -> TruncationSpec {
    truncation_with(default_growth_constant(p), DEFAULT_SCALE_RADIUS).expect("valid default truncation")
}

/// `phi(u) = k (1 + u)^2` and `h(Δ) = phi(scale_radius) Δ^(-1/8)`.
pub fn truncation_with(k: f64, scale_radius: f64) -> Result<TruncationSpec> {
    if !(scale_radius >= 1.0) {
        return Err(Error::Config(format!("scale radius {scale_radius} must be ≥ 1")));
    }
    let exponent = 2.0;
    let scale = k * (1.0 + scale_radius).powf(exponent);
    TruncationSpec::polynomial(k, exponent, scale, 0.25, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::growth_domination_check;
    use crate::solver::EnsembleState;

    #[test]
    fn registry_resolves_all_names() {
        for name in MODEL_NAMES {
            let m = by_name(name, ExampleParams::default()).unwrap();
            assert_eq!(m.name(), name);
            assert_eq!(m.initial(), &InitialLaw::Point(vec![1.0]));
        }
        assert!(by_name("nope", ExampleParams::default()).is_err());
    }

    #[test]
    fn default_truncation_is_admissible() {
        let spec = default_truncation(ExampleParams::default());
        assert!(spec.check_invariants().is_empty(), "{:?}", spec.check_invariants());
        assert_eq!(default_growth_constant(ExampleParams::default()), 20.0);
        for k in [7, 10] {
            let delta = 2f64.powi(-k);
            let r = spec.radius(delta).unwrap();
            assert!((r - (17.0 * delta.powf(-1.0 / 16.0) - 1.0)).abs() < 1e-9, "radius {r}");
        }
        let other = truncation_with(80.0, DEFAULT_SCALE_RADIUS).unwrap();
        assert!((other.radius(0.01).unwrap() - spec.radius(0.01).unwrap()).abs() < 1e-9);
        let tight = truncation_with(20.0, 1.0).unwrap();
        assert!(tight.check_invariants().is_empty());
        assert!((tight.radius(2f64.powi(-10)).unwrap() - (2.0 * 2f64.powf(10.0 / 16.0) - 1.0)).abs() < 1e-9);
        assert!(truncation_with(20.0, 0.5).is_err());
    }

    #[test]
    fn default_truncation_dominates_example_growth() {
        let p = ExampleParams::default();
        let spec = default_truncation(p);
        for model in [linear_diffusion_interaction(p), linear_drift_only(p), nonlinear_sin(p)] {
            let probes: Vec<EnsembleState> = [1.0, 2.0, 4.0, 8.0]
                .iter()
                .map(|&u| EnsembleState::from_scalars(&[-u, 0.0, u]))
                .collect();
            let audit = growth_domination_check(&model, &spec, &[1.0, 2.0, 4.0, 8.0], &probes).unwrap();
            assert!(!audit.any_violation(), "{}: {:?}", model.name(), audit);
        }
    }

    #[test]
    fn milstein_derivative_matches_finite_differences() {
        let p = ExampleParams::default();
        let model = linear_drift_only(p);
        let deriv = model.diffusion_derivative().unwrap();
        let ens = EnsembleState::from_scalars(&[0.0]);
        let sigma = |x: f64| model.diffusion(&[x], &ens, 0, false).unwrap()[0];
        for x in [-2.0, -0.5, 0.5, 2.0] {
            let h = 1e-5;
            let fd = (sigma(x + h) - sigma(x - h)) / (2.0 * h);
            let exact = deriv(x);
            assert!(((fd - exact) / exact).abs() < 1e-6, "x = {x}: fd {fd} vs {exact}");
        }
    }
}
