use super::{EnsembleState, SolverConfig, Stepper};
use crate::batching::sample_partition;
use crate::error::{config, Result};
use crate::model::{InitialLaw, McKeanModel, TruncationSpec};
use crate::rng::{rng_stream, NoiseSpec, Purpose};

/// Outcome of one path of one solver.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// State at `T`, or the last finite state if the path diverged.
    pub terminal: EnsembleState,
    /// Time index of the first non-finite state.
    pub diverged_at: Option<usize>,
    /// States at multiples of the checkpoint stride, including `t = 0`.
    pub checkpoints: Vec<EnsembleState>,
    /// Adjusted batch size for batch schemes.
    pub batch_size: Option<usize>,
}

impl Trajectory {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

/// A reference trajectory and several test trajectories driven by the same
/// Brownian path.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledFamily {
    pub reference: Trajectory,
    pub tests: Vec<Trajectory>,
}

/// Initial ensemble of a path. Gaussian draws come from the `Initial` stream
/// of the path, particle by particle.
pub fn initial_state(model: &McKeanModel, noise: &NoiseSpec, path_id: u32, n: usize) -> EnsembleState {
    match model.initial() {
        InitialLaw::Point(x0) => EnsembleState::uniform(n, x0),
        InitialLaw::Gaussian { mean, std } => {
            let mut stream = rng_stream(noise, Purpose::Initial, path_id, 0);
            let d = mean.len();
            let mut positions = Vec::with_capacity(n * d);
            for _ in 0..n {
                for m in mean {
                    positions.push(m + std * stream.standard_normal());
                }
            }
            EnsembleState::new(positions, d).expect("shape matches")
        }
    }
}

struct Runner<'a> {
    config: &'a SolverConfig,
    stepper: Stepper<'a>,
    multiple: usize,
    steps: usize,
    batch_size: Option<usize>,
    dim: usize,
    state: Vec<f64>,
    next: Vec<f64>,
    increment: Vec<f64>,
    m: usize,
    diverged_at: Option<usize>,
    checkpoints: Vec<EnsembleState>,
}

impl<'a> Runner<'a> {
    fn new(
        cfg: &'a SolverConfig,
        model: &'a McKeanModel,
        spec: &TruncationSpec,
        noise: &NoiseSpec,
        initial: &EnsembleState,
    ) -> Result<Self> {
        cfg.validate()?;
        if cfg.n_particles != noise.n_particles() {
            return config(format!(
                "solver uses N = {} but the noise covers N = {}",
                cfg.n_particles,
                noise.n_particles()
            ));
        }
        if model.dims().noise != noise.dim_noise() {
            return config("model and noise disagree on the noise dimension");
        }
        if cfg.horizon > noise.horizon() * (1.0 + 1e-12) {
            return config("solver horizon exceeds the noise horizon");
        }
        let multiple = noise.multiple_of(cfg.delta)?;
        let steps = cfg.steps()?;
        let stepper = Stepper::new(
            model,
            spec,
            cfg.scheme,
            cfg.delta,
            cfg.n_particles,
            cfg.exclude_self,
            cfg.summation,
        )?;
        let len = initial.positions().len();
        let mut checkpoints = Vec::new();
        if cfg.checkpoint_stride.is_some() {
            checkpoints.push(initial.clone());
        }
        Ok(Self {
            config: cfg,
            stepper,
            multiple,
            steps,
            batch_size: cfg.batch_size()?,
            dim: initial.dim(),
            state: initial.positions().to_vec(),
            next: vec![0.0; len],
            increment: vec![0.0; noise.n_particles() * noise.dim_noise()],
            m: 0,
            diverged_at: None,
            checkpoints,
        })
    }

    fn fine_steps(&self) -> usize {
        self.steps * self.multiple
    }

    /// Adds fine increment `k` and steps once a coarse increment is complete.
    fn absorb(&mut self, k: usize, fine: &[f64], noise: &NoiseSpec, path_id: u32) -> Result<()> {
        if self.m >= self.steps {
            return Ok(());
        }
        let pos = k % self.multiple;
        if pos == 0 {
            self.increment.copy_from_slice(fine);
        } else {
            for (a, f) in self.increment.iter_mut().zip(fine) {
                *a += f;
            }
        }
        if pos + 1 < self.multiple {
            return Ok(());
        }
        if self.diverged_at.is_none() {
            let partition = match self.batch_size {
                Some(p) => {
                    let mut stream = rng_stream(noise, Purpose::Partition, path_id, self.m as u32);
                    Some(sample_partition(self.config.n_particles, p, &mut stream)?)
                }
                None => None,
            };
            let finite = self
                .stepper
                .advance(&self.state, &self.increment, partition.as_ref(), &mut self.next)?;
            if finite {
                std::mem::swap(&mut self.state, &mut self.next);
            } else {
                self.diverged_at = Some(self.m + 1);
            }
        }
        self.m += 1;
        if let Some(stride) = self.config.checkpoint_stride {
            if self.m % stride == 0 && self.diverged_at.is_none() {
                self.checkpoints.push(self.snapshot(self.m));
            }
        }
        Ok(())
    }

    fn snapshot(&self, m: usize) -> EnsembleState {
        EnsembleState::new(self.state.clone(), self.dim)
            .expect("shape preserved")
            .with_time_index(m)
    }

    fn finish(self) -> Trajectory {
        let m = self.diverged_at.map_or(self.m, |t| t - 1);
        Trajectory {
            terminal: self.snapshot(m),
            diverged_at: self.diverged_at,
            checkpoints: self.checkpoints,
            batch_size: self.batch_size,
        }
    }
}

fn drive(runners: &mut [Runner<'_>], noise: &NoiseSpec, path_id: u32) -> Result<()> {
    let fine_steps = runners.iter().map(Runner::fine_steps).max().unwrap_or(0);
    let mut fine = vec![0.0; noise.n_particles() * noise.dim_noise()];
    for k in 0..fine_steps {
        noise.fill_step(path_id, k as u32, &mut fine);
        for r in runners.iter_mut() {
            r.absorb(k, &fine, noise, path_id)?;
        }
    }
    Ok(())
}

/// Runs one path from `t = 0` to the configured horizon. Coarse increments
/// are sums of the fine increments of `noise`; batch schemes draw a fresh
/// partition from the `Partition` stream at every step. Divergence is
/// reported in the trajectory, not as an error.
pub fn simulate(
    config: &SolverConfig,
    model: &McKeanModel,
    spec: &TruncationSpec,
    noise: &NoiseSpec,
    path_id: u32,
) -> Result<Trajectory> {
    let initial = initial_state(model, noise, path_id, config.n_particles);
    let mut runners = vec![Runner::new(config, model, spec, noise, &initial)?];
    drive(&mut runners, noise, path_id)?;
    Ok(runners.pop().expect("one runner").finish())
}

/// Runs a reference and a test solver on the same Brownian path and initial
/// ensemble.
pub fn simulate_coupled(
    config_ref: &SolverConfig,
    config_test: &SolverConfig,
    model: &McKeanModel,
    spec: &TruncationSpec,
    noise: &NoiseSpec,
    path_id: u32,
) -> Result<(Trajectory, Trajectory)> {
    let mut family =
        simulate_coupled_family(config_ref, std::slice::from_ref(config_test), model, spec, noise, path_id)?;
    Ok((family.reference, family.tests.pop().expect("one test")))
}

/// Like [`simulate_coupled`] with several test solvers advanced in lockstep,
/// so the fine Brownian increments are generated once.
pub fn simulate_coupled_family(
    config_ref: &SolverConfig,
    config_tests: &[SolverConfig],
    model: &McKeanModel,
    spec: &TruncationSpec,
    noise: &NoiseSpec,
    path_id: u32,
) -> Result<CoupledFamily> {
    for c in config_tests {
        if c.n_particles != config_ref.n_particles {
            return config("coupled solvers must share N");
        }
        if (c.horizon - config_ref.horizon).abs() > 1e-12 * config_ref.horizon {
            return config("coupled solvers must share the horizon");
        }
    }
    let initial = initial_state(model, noise, path_id, config_ref.n_particles);
    let mut runners = Vec::with_capacity(config_tests.len() + 1);
    runners.push(Runner::new(config_ref, model, spec, noise, &initial)?);
    for c in config_tests {
        runners.push(Runner::new(c, model, spec, noise, &initial)?);
    }
    drive(&mut runners, noise, path_id)?;
    let mut done = runners.into_iter().map(Runner::finish);
    let reference = done.next().expect("reference runner");
    Ok(CoupledFamily {
        reference,
        tests: done.collect(),
    })
}
