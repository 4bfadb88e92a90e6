//! Coefficient fields of a McKean-Vlasov SDE, the state truncation that
//! tames their growth, and the registry of built-in example models.
//!
//! A model describes
//!
//! ```text
//! a(x, mu) = f(x) + A( ∫ k(x, y) mu(dy) )
//! b(x, mu) = σ(x)              (state-only diffusion)
//!          | ∫ σ(x, y) mu(dy)  (interacting diffusion)
//! ```
//!
//! evaluated against the empirical measure of a particle ensemble. All
//! matrices are stored row-major, so a diffusion value is a `d × m'` slice.

mod audit;
pub mod registry;
mod truncation;

use std::fmt;
use std::sync::Arc;

pub use audit::{growth_domination_check, GrowthAudit, GrowthRow};
pub use truncation::{
    h_default, tame_in_place, tamed_drift, truncate_in_place, truncate_state, truncation_radius,
    ScalarFn, TruncationSpec,
};

use crate::error::{Error, Result};
use crate::solver::EnsembleState;

/// `x ↦ out`.
pub type PointField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// `(x, y) ↦ out`.
pub type PairField = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

/// Declares that a kernel factors as `k(x, y) = g(x) + G(x) ψ(y)`.
///
/// `feature` computes `ψ(y) ∈ R^s`; `combine(x, v)` computes `g(x) + G(x) v`.
/// Because `combine` is affine in `v`, the empirical mean of `k(x, ·)` equals
/// `combine(x, mean ψ)`, so interaction sums cost one pass over the ensemble.
#[derive(Clone)]
pub struct SeparableForm {
    feature_dim: usize,
    feature: PointField,
    combine: PairField,
}

impl SeparableForm {
    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn feature(&self, y: &[f64], out: &mut [f64]) {
        (self.feature)(y, out)
    }

    pub fn combine(&self, x: &[f64], feature_mean: &[f64], out: &mut [f64]) {
        (self.combine)(x, feature_mean, out)
    }
}

/// An interaction kernel `k: R^d × R^d → R^out_dim`.
#[derive(Clone)]
pub struct Kernel {
    out_dim: usize,
    eval: PairField,
    separable: Option<SeparableForm>,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("out_dim", &self.out_dim)
            .field("separable", &self.separable.is_some())
            .finish()
    }
}

impl Kernel {
    pub fn new(out_dim: usize, eval: PairField) -> Self {
        Self {
            out_dim,
            eval,
            separable: None,
        }
    }

    pub fn from_fn<F>(out_dim: usize, f: F) -> Self
    where
        F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self::new(out_dim, Arc::new(f))
    }

    /// Attaches a separable factorisation. The caller guarantees it agrees
    /// with `eval`.
    pub fn with_separable(mut self, feature_dim: usize, feature: PointField, combine: PairField) -> Self {
        self.separable = Some(SeparableForm {
            feature_dim,
            feature,
            combine,
        });
        self
    }

    /// `k ≡ 0`.
    pub fn zero(out_dim: usize) -> Self {
        let zero: PairField = Arc::new(|_, _, out: &mut [f64]| out.fill(0.0));
        Self::new(out_dim, zero.clone()).with_separable(1, Arc::new(|_, out: &mut [f64]| out.fill(0.0)), zero)
    }

    /// `k(x, y) = c`.
    pub fn constant(value: Vec<f64>) -> Self {
        let out_dim = value.len();
        let v = Arc::new(value);
        let v2 = v.clone();
        Self::new(out_dim, Arc::new(move |_, _, out: &mut [f64]| out.copy_from_slice(&v)))
            .with_separable(
                1,
                Arc::new(|_, out: &mut [f64]| out.fill(0.0)),
                Arc::new(move |_, _, out: &mut [f64]| out.copy_from_slice(&v2)),
            )
    }

    /// `k(x, y) = y`, separable.
    pub fn identity_of_partner(dim: usize) -> Self {
        Self::from_fn(dim, |_, y, out| out.copy_from_slice(y)).with_separable(
            dim,
            Arc::new(|y, out: &mut [f64]| out.copy_from_slice(y)),
            Arc::new(|_, v, out: &mut [f64]| out.copy_from_slice(v)),
        )
    }

    /// `k(x, y) = x - y`, separable.
    pub fn difference(dim: usize) -> Self {
        Self::from_fn(dim, |x, y, out| {
            for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
                *o = a - b;
            }
        })
        .with_separable(
            dim,
            Arc::new(|y, out: &mut [f64]| out.copy_from_slice(y)),
            Arc::new(|x, v, out: &mut [f64]| {
                for ((o, a), b) in out.iter_mut().zip(x).zip(v) {
                    *o = a - b;
                }
            }),
        )
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn separable(&self) -> Option<&SeparableForm> {
        self.separable.as_ref()
    }

    /// Drops the separable declaration, forcing pairwise summation.
    pub fn without_separable(mut self) -> Self {
        self.separable = None;
        self
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.out_dim);
        (self.eval)(x, y, out)
    }

    /// Mean of `k(x, positions[j])` over `members`, skipping `skip`, divided
    /// by `count`. Summation runs in the order `members` yields.
    pub(crate) fn pairwise_mean(
        &self,
        x: &[f64],
        positions: &[f64],
        dim: usize,
        members: impl Iterator<Item = usize>,
        skip: Option<usize>,
        count: f64,
        acc: &mut [f64],
        tmp: &mut [f64],
    ) {
        acc.fill(0.0);
        for j in members {
            if Some(j) == skip {
                continue;
            }
            self.eval(x, &positions[j * dim..(j + 1) * dim], tmp);
            for (a, t) in acc.iter_mut().zip(tmp.iter()) {
                *a += t;
            }
        }
        for a in acc.iter_mut() {
            *a /= count;
        }
    }
}

/// The outer field `A: R^r → R^d` applied to the interaction mean.
#[derive(Clone)]
pub enum DriftWrapper {
    Identity,
    Field(PointField),
}

impl DriftWrapper {
    #[inline]
    pub fn apply(&self, mean: &[f64], out: &mut [f64]) {
        match self {
            DriftWrapper::Identity => out.copy_from_slice(mean),
            DriftWrapper::Field(a) => a(mean, out),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, DriftWrapper::Identity)
    }
}

/// How the diffusion matrix depends on the ensemble.
#[derive(Clone)]
pub enum DiffusionMode {
    /// `σ(x)`, a `d × m'` matrix.
    StateOnly(PointField),
    /// `∫ σ(x, y) mu(dy)` with a kernel of output size `d · m'`.
    Interacting(Kernel),
}

/// Law of the initial particle positions.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    /// Every particle starts at the same point.
    Point(Vec<f64>),
    /// Independent `N(mean, std² I)` draws.
    Gaussian { mean: Vec<f64>, std: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    /// `d`
    pub state: usize,
    /// `m'`
    pub noise: usize,
    /// `r`
    pub kernel: usize,
}

impl Dims {
    pub fn scalar() -> Self {
        Self {
            state: 1,
            noise: 1,
            kernel: 1,
        }
    }
}

/// One McKean-Vlasov SDE family.
///
/// The fields are expected to return finite values on finite inputs inside
/// the truncation radius, and `f`/`A` to satisfy the one-sided Lipschitz and
/// Khasminskii-type monotonicity conditions with growth exponent
/// `growth_exponent`. Those conditions are documented requirements only; see
/// [`growth_domination_check`] for a sampled audit of the growth bound.
#[derive(Clone)]
pub struct McKeanModel {
    name: String,
    dims: Dims,
    drift_base: PointField,
    drift_kernel: Kernel,
    drift_wrapper: DriftWrapper,
    diffusion: DiffusionMode,
    diffusion_derivative: Option<ScalarFn>,
    growth_exponent: f64,
    initial: InitialLaw,
}

impl fmt::Debug for McKeanModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("McKeanModel")
            .field("name", &self.name)
            .field("dims", &self.dims)
            .field("drift_kernel", &self.drift_kernel)
            .field("wrapper_identity", &self.drift_wrapper.is_identity())
            .field(
                "interacting_diffusion",
                &matches!(self.diffusion, DiffusionMode::Interacting(_)),
            )
            .field("has_derivative", &self.diffusion_derivative.is_some())
            .field("growth_exponent", &self.growth_exponent)
            .field("initial", &self.initial)
            .finish()
    }
}

impl McKeanModel {
    pub fn new(
        name: impl Into<String>,
        dims: Dims,
        drift_base: PointField,
        drift_kernel: Kernel,
        drift_wrapper: DriftWrapper,
        diffusion: DiffusionMode,
        growth_exponent: f64,
    ) -> Result<Self> {
        if dims.state == 0 || dims.noise == 0 || dims.kernel == 0 {
            return Err(Error::Model("dimensions must be positive".into()));
        }
        if drift_kernel.out_dim() != dims.kernel {
            return Err(Error::Model(format!(
                "drift kernel has output dimension {} but r = {}",
                drift_kernel.out_dim(),
                dims.kernel
            )));
        }
        if drift_wrapper.is_identity() && dims.kernel != dims.state {
            return Err(Error::Model(format!(
                "identity drift wrapper needs r = d, got r = {} and d = {}",
                dims.kernel, dims.state
            )));
        }
        if let DiffusionMode::Interacting(k) = &diffusion {
            if k.out_dim() != dims.state * dims.noise {
                return Err(Error::Model(format!(
                    "diffusion kernel has output dimension {} but d·m' = {}",
                    k.out_dim(),
                    dims.state * dims.noise
                )));
            }
        }
        if !(growth_exponent >= 0.0) {
            return Err(Error::Model(format!("growth exponent {growth_exponent} must be ≥ 0")));
        }
        let d = dims.state;
        Ok(Self {
            name: name.into(),
            dims,
            drift_base,
            drift_kernel,
            drift_wrapper,
            diffusion,
            diffusion_derivative: None,
            growth_exponent,
            initial: InitialLaw::Point(vec![0.0; d]),
        })
    }

    /// `f = k = σ = 0` in dimension `d` with `m'`-dimensional noise.
    pub fn zero(state_dim: usize, noise_dim: usize) -> Self {
        let dims = Dims {
            state: state_dim,
            noise: noise_dim,
            kernel: state_dim,
        };
        Self::new(
            "zero",
            dims,
            Arc::new(|_, out: &mut [f64]| out.fill(0.0)),
            Kernel::zero(state_dim),
            DriftWrapper::Identity,
            DiffusionMode::StateOnly(Arc::new(|_, out: &mut [f64]| out.fill(0.0))),
            0.0,
        )
        .expect("zero model is well formed")
    }

    /// Adds `σ'` for scalar Milstein stepping.
    pub fn with_diffusion_derivative(mut self, derivative: ScalarFn) -> Result<Self> {
        if self.dims.state != 1 || self.dims.noise != 1 {
            return Err(Error::Config(
                "a diffusion derivative is only supported for d = m' = 1".into(),
            ));
        }
        if !matches!(self.diffusion, DiffusionMode::StateOnly(_)) {
            return Err(Error::Config(
                "a diffusion derivative requires state-only diffusion".into(),
            ));
        }
        self.diffusion_derivative = Some(derivative);
        Ok(self)
    }

    pub fn with_initial(mut self, initial: InitialLaw) -> Result<Self> {
        let len = match &initial {
            InitialLaw::Point(p) => p.len(),
            InitialLaw::Gaussian { mean, std } => {
                if !(*std >= 0.0) {
                    return Err(Error::Model(format!("initial std {std} must be ≥ 0")));
                }
                mean.len()
            }
        };
        if len != self.dims.state {
            return Err(Error::Model(format!(
                "initial law has dimension {len}, expected {}",
                self.dims.state
            )));
        }
        self.initial = initial;
        Ok(self)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Replaces the drift kernel, keeping everything else.
    pub fn with_drift_kernel(mut self, kernel: Kernel) -> Result<Self> {
        if kernel.out_dim() != self.dims.kernel {
            return Err(Error::Model("replacement kernel has the wrong output dimension".into()));
        }
        self.drift_kernel = kernel;
        Ok(self)
    }

    /// Drops every separable declaration so all interaction sums run pairwise.
    pub fn pairwise_only(mut self) -> Self {
        self.drift_kernel = self.drift_kernel.without_separable();
        if let DiffusionMode::Interacting(k) = self.diffusion {
            self.diffusion = DiffusionMode::Interacting(k.without_separable());
        }
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn drift_kernel(&self) -> &Kernel {
        &self.drift_kernel
    }

    pub fn drift_wrapper(&self) -> &DriftWrapper {
        &self.drift_wrapper
    }

    pub fn diffusion_mode(&self) -> &DiffusionMode {
        &self.diffusion
    }

    pub fn diffusion_derivative(&self) -> Option<&ScalarFn> {
        self.diffusion_derivative.as_ref()
    }

    pub fn growth_exponent(&self) -> f64 {
        self.growth_exponent
    }

    pub fn initial(&self) -> &InitialLaw {
        &self.initial
    }

    #[inline]
    pub fn drift_base(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dims.state);
        debug_assert_eq!(out.len(), self.dims.state);
        (self.drift_base)(x, out)
    }

    /// Untruncated drift `a(x, mu_N)` at the ensemble's empirical measure:
    /// `1/(N-1)` over `j ≠ self_index` when `exclude_self`, else `1/N` over all.
    pub fn drift(
        &self,
        x: &[f64],
        ensemble: &EnsembleState,
        self_index: usize,
        exclude_self: bool,
    ) -> Result<Vec<f64>> {
        self.check_eval_args(x, ensemble, self_index, exclude_self)?;
        let d = self.dims.state;
        let r = self.dims.kernel;
        let mut out = vec![0.0; d];
        self.drift_base(x, &mut out);
        let (mut acc, mut tmp) = (vec![0.0; r], vec![0.0; r]);
        self.empirical_mean(&self.drift_kernel, x, ensemble, self_index, exclude_self, &mut acc, &mut tmp);
        let mut wrapped = vec![0.0; d];
        self.drift_wrapper.apply(&acc, &mut wrapped);
        for (o, w) in out.iter_mut().zip(&wrapped) {
            *o += w;
        }
        Ok(out)
    }

    /// Untruncated diffusion matrix `b(x, mu_N)`, `d × m'` row-major.
    pub fn diffusion(
        &self,
        x: &[f64],
        ensemble: &EnsembleState,
        self_index: usize,
        exclude_self: bool,
    ) -> Result<Vec<f64>> {
        self.check_eval_args(x, ensemble, self_index, exclude_self)?;
        let size = self.dims.state * self.dims.noise;
        let mut out = vec![0.0; size];
        match &self.diffusion {
            DiffusionMode::StateOnly(sigma) => sigma(x, &mut out),
            DiffusionMode::Interacting(kernel) => {
                let mut tmp = vec![0.0; size];
                self.empirical_mean(kernel, x, ensemble, self_index, exclude_self, &mut out, &mut tmp);
            }
        }
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn empirical_mean(
        &self,
        kernel: &Kernel,
        x: &[f64],
        ensemble: &EnsembleState,
        self_index: usize,
        exclude_self: bool,
        acc: &mut [f64],
        tmp: &mut [f64],
    ) {
        let n = ensemble.n_particles();
        let (skip, count) = if exclude_self {
            (Some(self_index), (n - 1) as f64)
        } else {
            (None, n as f64)
        };
        kernel.pairwise_mean(x, ensemble.positions(), ensemble.dim(), 0..n, skip, count, acc, tmp);
    }

    fn check_eval_args(
        &self,
        x: &[f64],
        ensemble: &EnsembleState,
        self_index: usize,
        exclude_self: bool,
    ) -> Result<()> {
        let d = self.dims.state;
        if x.len() != d || ensemble.dim() != d {
            return Err(Error::Model(format!(
                "state of dimension {} / ensemble of dimension {} given to a model with d = {d}",
                x.len(),
                ensemble.dim()
            )));
        }
        if exclude_self {
            if ensemble.n_particles() < 2 {
                return Err(Error::Usage("excluding self needs at least two particles".into()));
            }
            if self_index >= ensemble.n_particles() {
                return Err(Error::Usage(format!("particle index {self_index} out of range")));
            }
        }
        Ok(())
    }
}

/// `a^Δ(x, mu) = a(x̄, mu)` with `x̄` the projection of `x` onto the
/// truncation ball. The measure argument is never truncated.
#[allow(clippy::too_many_arguments)]
pub fn truncated_drift(
    model: &McKeanModel,
    spec: &TruncationSpec,
    delta: f64,
    x: &[f64],
    ensemble: &EnsembleState,
    self_index: usize,
    exclude_self: bool,
) -> Result<Vec<f64>> {
    let radius = truncation_radius(spec, delta)?;
    model.drift(&truncate_state(x, radius), ensemble, self_index, exclude_self)
}

/// `b^Δ(x, mu) = b(x̄, mu)`.
#[allow(clippy::too_many_arguments)]
pub fn truncated_diffusion(
    model: &McKeanModel,
    spec: &TruncationSpec,
    delta: f64,
    x: &[f64],
    ensemble: &EnsembleState,
    self_index: usize,
    exclude_self: bool,
) -> Result<Vec<f64>> {
    let radius = truncation_radius(spec, delta)?;
    model.diffusion(&truncate_state(x, radius), ensemble, self_index, exclude_self)
}

#[cfg(test)]
mod tests {
    use super::registry::{self, ExampleParams};
    use super::*;

    fn wide_spec() -> TruncationSpec {
        TruncationSpec::polynomial(1.0, 2.0, 1e6, 0.25, 1.0).unwrap()
    }

    #[test]
    fn example_one_drift_at_single_coincident_particle() {
        let model = registry::linear_diffusion_interaction(ExampleParams::default());
        let ens = EnsembleState::from_scalars(&[0.5]);
        let a = truncated_drift(&model, &wide_spec(), 0.01, &[0.5], &ens, 0, false).unwrap();
        assert!((a[0] - 0.625).abs() < 1e-15);
    }

    #[test]
    fn mean_of_ensemble_kernel() {
        let model = McKeanModel::new(
            "mean",
            Dims::scalar(),
            Arc::new(|_, out: &mut [f64]| out.fill(0.0)),
            Kernel::identity_of_partner(1),
            DriftWrapper::Identity,
            DiffusionMode::StateOnly(Arc::new(|_, out: &mut [f64]| out.fill(0.0))),
            0.0,
        )
        .unwrap();
        let ens = EnsembleState::from_scalars(&[1.0, 2.0, 3.0]);
        let a = truncated_drift(&model, &wide_spec(), 0.01, &[0.7], &ens, 0, false).unwrap();
        assert_eq!(a, vec![2.0]);
    }

    #[test]
    fn beyond_radius_uses_projected_point() {
        let model = registry::linear_diffusion_interaction(ExampleParams::default());
        let spec = TruncationSpec::polynomial(20.0, 2.0, 80.0, 0.25, 1.0).unwrap();
        let delta = 2f64.powi(-8);
        let r = spec.radius(delta).unwrap();
        let ens = EnsembleState::from_scalars(&[0.3, 1.0, -0.2]);
        let far = truncated_drift(&model, &spec, delta, &[5.0 * r], &ens, 1, true).unwrap();
        let at_r = truncated_drift(&model, &spec, delta, &[r], &ens, 1, true).unwrap();
        assert_eq!(far, at_r);
        let far_b = truncated_diffusion(&model, &spec, delta, &[-5.0 * r], &ens, 1, true).unwrap();
        let at_rb = truncated_diffusion(&model, &spec, delta, &[-r], &ens, 1, true).unwrap();
        assert_eq!(far_b, at_rb);
    }

    #[test]
    fn inside_radius_matches_raw_bitwise() {
        let model = registry::nonlinear_sin(ExampleParams::default());
        let spec = TruncationSpec::polynomial(20.0, 2.0, 80.0, 0.25, 1.0).unwrap();
        let ens = EnsembleState::from_scalars(&[0.3, 1.1, -0.2, 0.9]);
        for x in [0.123, -0.77, 1.3] {
            let t = truncated_drift(&model, &spec, 0.01, &[x], &ens, 2, true).unwrap();
            let raw = model.drift(&[x], &ens, 2, true).unwrap();
            assert_eq!(t[0].to_bits(), raw[0].to_bits());
            let tb = truncated_diffusion(&model, &spec, 0.01, &[x], &ens, 2, true).unwrap();
            let rawb = model.diffusion(&[x], &ens, 2, true).unwrap();
            assert_eq!(tb[0].to_bits(), rawb[0].to_bits());
        }
    }

    #[test]
    fn diffusion_examples() {
        let params = ExampleParams::default();
        let state_only = registry::linear_drift_only(params);
        let ens = EnsembleState::from_scalars(&[0.0]);
        let b = truncated_diffusion(&state_only, &wide_spec(), 0.01, &[4.0], &ens, 0, false).unwrap();
        assert!((b[0] - 8.0).abs() < 1e-14);

        let sigma = Kernel::difference(1);
        let interacting = McKeanModel::new(
            "interacting",
            Dims::scalar(),
            Arc::new(|_, out: &mut [f64]| out.fill(0.0)),
            Kernel::zero(1),
            DriftWrapper::Identity,
            DiffusionMode::Interacting(sigma),
            0.0,
        )
        .unwrap();
        let ens = EnsembleState::from_scalars(&[1.0, 2.0, 3.0]);
        let b = truncated_diffusion(&interacting, &wide_spec(), 0.01, &[1.0], &ens, 0, true).unwrap();
        assert_eq!(b, vec![-1.5]);
    }

    #[test]
    fn dimension_mismatch_is_a_model_error() {
        let model = McKeanModel::zero(2, 1);
        let ens = EnsembleState::from_scalars(&[1.0, 2.0]);
        let err = truncated_drift(&model, &wide_spec(), 0.1, &[1.0, 2.0], &ens, 0, false).unwrap_err();
        assert!(matches!(err, Error::Model(_)));
        let ens2 = EnsembleState::new(vec![0.0; 4], 2).unwrap();
        let err = truncated_drift(&model, &wide_spec(), 0.1, &[1.0], &ens2, 0, false).unwrap_err();
        assert!(matches!(err, Error::Model(_)));
    }

    #[test]
    fn structural_checks() {
        let bad_wrapper = McKeanModel::new(
            "bad",
            Dims { state: 1, noise: 1, kernel: 2 },
            Arc::new(|_, out: &mut [f64]| out.fill(0.0)),
            Kernel::zero(2),
            DriftWrapper::Identity,
            DiffusionMode::StateOnly(Arc::new(|_, out: &mut [f64]| out.fill(0.0))),
            0.0,
        );
        assert!(bad_wrapper.is_err());
        assert!(McKeanModel::zero(2, 1)
            .with_diffusion_derivative(Arc::new(|_| 0.0))
            .is_err());
        assert!(registry::linear_diffusion_interaction(ExampleParams::default())
            .with_diffusion_derivative(Arc::new(|_| 0.0))
            .is_err());
    }
}
