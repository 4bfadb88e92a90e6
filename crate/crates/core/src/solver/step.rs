use super::{EnsembleState, Scheme, Summation};
use crate::batching::BatchPartition;
use crate::error::{config, usage, Error, Result};
use crate::model::{tame_in_place, truncate_in_place, truncation_radius, DiffusionMode, Kernel, McKeanModel, TruncationSpec};

/// Particles taking part in one interaction mean.
#[derive(Clone, Copy)]
enum Group<'p> {
    All(usize),
    Batch(usize, &'p [u32]),
}

impl Group<'_> {
    fn index(&self) -> usize {
        match self {
            Group::All(_) => 0,
            Group::Batch(q, _) => *q,
        }
    }
}

/// Feature sums of a separable kernel, one row per group.
#[derive(Default)]
struct FeatureCache {
    dim: usize,
    per_particle: Vec<f64>,
    sums: Vec<f64>,
    mean: Vec<f64>,
}

impl FeatureCache {
    fn new(dim: usize) -> Self {
        Self {
            dim,
            mean: vec![0.0; dim],
            ..Self::default()
        }
    }

    fn fill(&mut self, kernel: &Kernel, positions: &[f64], d: usize, partition: Option<&BatchPartition>) {
        let form = kernel.separable().expect("separable kernel");
        let s = self.dim;
        let n = positions.len() / d;
        self.per_particle.resize(n * s, 0.0);
        for (j, out) in self.per_particle.chunks_exact_mut(s).enumerate() {
            form.feature(&positions[j * d..(j + 1) * d], out);
        }
        let groups = partition.map_or(1, |p| p.n_batches());
        self.sums.clear();
        self.sums.resize(groups * s, 0.0);
        match partition {
            None => {
                for j in 0..n {
                    for c in 0..s {
                        self.sums[c] += self.per_particle[j * s + c];
                    }
                }
            }
            Some(p) => {
                for (q, members) in p.batches().enumerate() {
                    for &j in members {
                        let j = j as usize;
                        for c in 0..s {
                            self.sums[q * s + c] += self.per_particle[j * s + c];
                        }
                    }
                }
            }
        }
    }
}

/// Reusable single-step integrator with preallocated scratch space.
///
/// The update reads only the pre-step positions, so every particle sees the
/// same measure.
pub struct Stepper<'a> {
    model: &'a McKeanModel,
    scheme: Scheme,
    delta: f64,
    radius: f64,
    exclude_self: bool,
    n: usize,
    drift_features: Option<FeatureCache>,
    diffusion_features: Option<FeatureCache>,
    x_bar: Vec<f64>,
    drift: Vec<f64>,
    mean: Vec<f64>,
    wrapped: Vec<f64>,
    diff: Vec<f64>,
    tmp: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(
        model: &'a McKeanModel,
        truncation: &TruncationSpec,
        scheme: Scheme,
        delta: f64,
        n_particles: usize,
        exclude_self: bool,
        summation: Summation,
    ) -> Result<Self> {
        let dims = model.dims();
        if !(delta > 0.0) {
            return config(format!("step size {delta} must be positive"));
        }
        if scheme.is_milstein() {
            if dims.state != 1 || dims.noise != 1 {
                return config("Milstein stepping needs d = m' = 1");
            }
            if !matches!(model.diffusion_mode(), DiffusionMode::StateOnly(_)) {
                return config("Milstein stepping needs state-only diffusion");
            }
            if model.diffusion_derivative().is_none() {
                return config(format!("model '{}' has no diffusion derivative", model.name()));
            }
        }
        let exclude_self = exclude_self || scheme.is_rbm();
        if n_particles == 0 || (exclude_self && n_particles < 2) {
            return config(format!("{n_particles} particles are too few for this scheme"));
        }
        let radius = if scheme.is_tamed() {
            f64::INFINITY
        } else {
            truncation_radius(truncation, delta)?
        };
        let cache_for = |k: &Kernel| match (summation, k.separable()) {
            (Summation::Auto, Some(form)) => Some(FeatureCache::new(form.feature_dim())),
            _ => None,
        };
        let drift_features = cache_for(model.drift_kernel());
        let diffusion_features = match model.diffusion_mode() {
            DiffusionMode::Interacting(k) => cache_for(k),
            DiffusionMode::StateOnly(_) => None,
        };
        let d = dims.state;
        let dm = dims.state * dims.noise;
        Ok(Self {
            model,
            scheme,
            delta,
            radius,
            exclude_self,
            n: n_particles,
            drift_features,
            diffusion_features,
            x_bar: vec![0.0; d],
            drift: vec![0.0; d],
            mean: vec![0.0; dims.kernel],
            wrapped: vec![0.0; d],
            diff: vec![0.0; dm],
            tmp: vec![0.0; dims.kernel.max(dm)],
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Truncation radius in use; infinite for the tamed scheme.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Writes the next positions into `next` and reports whether they are all
    /// finite. `noise` holds `ΔW` for every particle, `N × m'` row-major.
    /// Batch schemes need `partition`; full schemes ignore it.
    pub fn advance(
        &mut self,
        current: &[f64],
        noise: &[f64],
        partition: Option<&BatchPartition>,
        next: &mut [f64],
    ) -> Result<bool> {
        let dims = self.model.dims();
        let (n, d, mp) = (self.n, dims.state, dims.noise);
        if current.len() != n * d || next.len() != n * d || noise.len() != n * mp {
            return usage("state, noise or output buffer has the wrong length");
        }
        let partition = if self.scheme.is_rbm() {
            let p = partition.ok_or_else(|| Error::Usage("batch scheme stepped without a partition".into()))?;
            if p.n_particles() != n {
                return usage("partition size does not match the ensemble");
            }
            Some(p)
        } else {
            None
        };

        let model = self.model;
        if let Some(cache) = self.drift_features.as_mut() {
            cache.fill(model.drift_kernel(), current, d, partition);
        }
        if let (Some(cache), DiffusionMode::Interacting(k)) = (self.diffusion_features.as_mut(), model.diffusion_mode()) {
            cache.fill(k, current, d, partition);
        }

        let (count, skip_self) = match partition {
            Some(p) => ((p.batch_size() - 1) as f64, true),
            None if self.exclude_self => ((n - 1) as f64, true),
            None => (n as f64, false),
        };
        let derivative = model.diffusion_derivative();
        let delta = self.delta;
        let mut finite = true;

        for i in 0..n {
            let x = &current[i * d..(i + 1) * d];
            let group = match partition {
                Some(p) => {
                    let q = p.batch_of(i);
                    Group::Batch(q, p.batch(q))
                }
                None => Group::All(n),
            };
            self.x_bar.copy_from_slice(x);
            truncate_in_place(&mut self.x_bar, self.radius);

            model.drift_base(&self.x_bar, &mut self.drift);
            interaction_mean(
                model.drift_kernel(),
                self.drift_features.as_mut(),
                &self.x_bar,
                current,
                d,
                group,
                i,
                count,
                skip_self,
                &mut self.mean,
                &mut self.tmp,
            );
            model.drift_wrapper().apply(&self.mean, &mut self.wrapped);
            for (a, w) in self.drift.iter_mut().zip(&self.wrapped) {
                *a += w;
            }
            if self.scheme.is_tamed() {
                tame_in_place(&mut self.drift, delta);
            }

            match model.diffusion_mode() {
                DiffusionMode::StateOnly(sigma) => sigma(&self.x_bar, &mut self.diff),
                DiffusionMode::Interacting(k) => interaction_mean(
                    k,
                    self.diffusion_features.as_mut(),
                    &self.x_bar,
                    current,
                    d,
                    group,
                    i,
                    count,
                    skip_self,
                    &mut self.diff,
                    &mut self.tmp,
                ),
            }

            let dw = &noise[i * mp..(i + 1) * mp];
            for k in 0..d {
                let mut v = x[k] + self.drift[k] * delta;
                for l in 0..mp {
                    v += self.diff[k * mp + l] * dw[l];
                }
                next[i * d + k] = v;
            }
            if self.scheme.is_milstein() {
                let ds = derivative.expect("checked at construction")(self.x_bar[0]);
                next[i] += 0.5 * self.diff[0] * ds * (dw[0] * dw[0] - delta);
            }
            finite &= next[i * d..(i + 1) * d].iter().all(|v| v.is_finite());
        }
        Ok(finite)
    }

    /// One step from `state`, failing with [`Error::Diverged`] on a
    /// non-finite result.
    pub fn step(&mut self, state: &EnsembleState, noise: &[f64], partition: Option<&BatchPartition>) -> Result<EnsembleState> {
        if state.dim() != self.model.dims().state || state.n_particles() != self.n {
            return usage("state does not match the stepper");
        }
        let mut next = vec![0.0; state.positions().len()];
        let time_index = state.time_index() + 1;
        if !self.advance(state.positions(), noise, partition, &mut next)? {
            return Err(Error::Diverged { time_index });
        }
        Ok(EnsembleState::new(next, state.dim())?.with_time_index(time_index))
    }
}

#[allow(clippy::too_many_arguments)]
fn interaction_mean(
    kernel: &Kernel,
    features: Option<&mut FeatureCache>,
    x_bar: &[f64],
    positions: &[f64],
    d: usize,
    group: Group<'_>,
    i: usize,
    count: f64,
    skip_self: bool,
    out: &mut [f64],
    tmp: &mut [f64],
) {
    match features {
        Some(cache) => {
            let s = cache.dim;
            let q = group.index();
            for c in 0..s {
                let sum = cache.sums[q * s + c];
                cache.mean[c] = if skip_self {
                    (sum - cache.per_particle[i * s + c]) / count
                } else {
                    sum / count
                };
            }
            kernel
                .separable()
                .expect("cache implies separable")
                .combine(x_bar, &cache.mean, out);
        }
        None => {
            let skip = skip_self.then_some(i);
            match group {
                Group::All(n) => kernel.pairwise_mean(x_bar, positions, d, 0..n, skip, count, out, tmp),
                Group::Batch(_, members) => kernel.pairwise_mean(
                    x_bar,
                    positions,
                    d,
                    members.iter().map(|&j| j as usize),
                    skip,
                    count,
                    out,
                    tmp,
                ),
            }
        }
    }
}

fn one_step(
    scheme: Scheme,
    state: &EnsembleState,
    model: &McKeanModel,
    spec: &TruncationSpec,
    delta: f64,
    noise: &[f64],
    partition: Option<&BatchPartition>,
    exclude_self: bool,
) -> Result<EnsembleState> {
    Stepper::new(model, spec, scheme, delta, state.n_particles(), exclude_self, Summation::Auto)?
        .step(state, noise, partition)
}

/// Truncated Euler–Maruyama step with full interaction sums.
pub fn step_full_em(
    state: &EnsembleState,
    model: &McKeanModel,
    spec: &TruncationSpec,
    delta: f64,
    noise: &[f64],
    exclude_self: bool,
) -> Result<EnsembleState> {
    one_step(Scheme::TruncatedEmFull, state, model, spec, delta, noise, None, exclude_self)
}

/// Truncated Euler–Maruyama step with batch interaction sums.
pub fn step_rbm_em(
    state: &EnsembleState,
    model: &McKeanModel,
    spec: &TruncationSpec,
    delta: f64,
    noise: &[f64],
    partition: &BatchPartition,
) -> Result<EnsembleState> {
    one_step(Scheme::TruncatedEmRbm, state, model, spec, delta, noise, Some(partition), true)
}

/// Scalar truncated Milstein step with full interaction sums.
pub fn step_milstein(
    state: &EnsembleState,
    model: &McKeanModel,
    spec: &TruncationSpec,
    delta: f64,
    noise: &[f64],
    exclude_self: bool,
) -> Result<EnsembleState> {
    one_step(Scheme::TruncatedMilsteinFull, state, model, spec, delta, noise, None, exclude_self)
}

/// Scalar truncated Milstein step with batch interaction sums.
pub fn step_rbm_milstein(
    state: &EnsembleState,
    model: &McKeanModel,
    spec: &TruncationSpec,
    delta: f64,
    noise: &[f64],
    partition: &BatchPartition,
) -> Result<EnsembleState> {
    one_step(Scheme::TruncatedMilsteinRbm, state, model, spec, delta, noise, Some(partition), true)
}

/// Tamed Euler–Maruyama step: drift `a / (1 + Δ|a|)`, untamed diffusion.
pub fn step_tamed_em(
    state: &EnsembleState,
    model: &McKeanModel,
    delta: f64,
    noise: &[f64],
    exclude_self: bool,
) -> Result<EnsembleState> {
    one_step(
        Scheme::TamedEmFull,
        state,
        model,
        &TruncationSpec::disabled(),
        delta,
        noise,
        None,
        exclude_self,
    )
}
