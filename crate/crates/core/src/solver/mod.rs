//! Time stepping for the interacting particle system.
//!
//! Every scheme advances all particles synchronously from the pre-step
//! state:
//!
//! ```text
//! X_{m+1} = X_m + a^Δ(X_m, mu_m) Δ + b^Δ(X_m, mu_m) ΔW_m        (truncated EM)
//!         + ½ σ(x̄) σ'(x̄) (ΔW_m² - Δ)                           (Milstein, d = m' = 1)
//! ```
//!
//! The random batch variants replace the `1/(N-1)` interaction mean by the
//! `1/(P-1)` mean over the particle's batch, with a fresh partition at
//! every step used for both drift and diffusion. Sums always run in
//! ascending particle index, which makes the `P = N` batch system reproduce
//! the full system bit for bit.

mod simulate;
mod state;
mod step;

pub use simulate::{initial_state, simulate, simulate_coupled, simulate_coupled_family, CoupledFamily, Trajectory};
pub use state::EnsembleState;
pub use step::{step_full_em, step_milstein, step_rbm_em, step_rbm_milstein, step_tamed_em, Stepper};

use std::fmt;
use std::str::FromStr;

use crate::error::{config, Error, Result};
use crate::rng::integral_ratio;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    TruncatedEmFull,
    TamedEmFull,
    TruncatedMilsteinFull,
    TruncatedEmRbm,
    TruncatedMilsteinRbm,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::TruncatedEmFull,
        Scheme::TamedEmFull,
        Scheme::TruncatedMilsteinFull,
        Scheme::TruncatedEmRbm,
        Scheme::TruncatedMilsteinRbm,
    ];

    pub fn is_rbm(self) -> bool {
        matches!(self, Scheme::TruncatedEmRbm | Scheme::TruncatedMilsteinRbm)
    }

    pub fn is_milstein(self) -> bool {
        matches!(self, Scheme::TruncatedMilsteinFull | Scheme::TruncatedMilsteinRbm)
    }

    pub fn is_tamed(self) -> bool {
        matches!(self, Scheme::TamedEmFull)
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::TruncatedEmFull => "truncated-em",
            Scheme::TamedEmFull => "tamed-em",
            Scheme::TruncatedMilsteinFull => "truncated-milstein",
            Scheme::TruncatedEmRbm => "truncated-em-rbm",
            Scheme::TruncatedMilsteinRbm => "truncated-milstein-rbm",
        }
    }

    /// The full-interaction counterpart of a batch scheme.
    pub fn full_counterpart(self) -> Scheme {
        match self {
            Scheme::TruncatedEmRbm => Scheme::TruncatedEmFull,
            Scheme::TruncatedMilsteinRbm => Scheme::TruncatedMilsteinFull,
            s => s,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sch| sch.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme '{s}'")))
    }
}

/// How the batch size of a random batch scheme is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BatchRule {
    FixedP(usize),
    /// `P ≈ min(Δ^-β, N)`, moved to a divisor of `N`.
    PowerLaw(f64),
}

/// How interaction means are summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Summation {
    /// One pass over feature sums when the kernel declares a separable form,
    /// pairwise otherwise.
    #[default]
    Auto,
    /// Always evaluate `k(x_i, x_j)` for every pair.
    Pairwise,
}

/// The divisor `P ∈ [2, N]` of `N` nearest to `min(Δ^-β, N)`; ties go to the
/// larger divisor.
pub fn adjusted_batch_size(rule: BatchRule, delta: f64, n: usize) -> Result<usize> {
    let divisors: Vec<usize> = (2..=n).filter(|p| n % p == 0).collect();
    if divisors.is_empty() {
        return config(format!("N = {n} has no batch size ≥ 2"));
    }
    match rule {
        BatchRule::FixedP(p) => {
            if p < 2 || n % p != 0 {
                return config(format!("batch size {p} must be ≥ 2 and divide N = {n}"));
            }
            Ok(p)
        }
        BatchRule::PowerLaw(beta) => {
            if !(beta > 0.0 && beta <= 1.0) {
                return config(format!("batch exponent β = {beta} outside (0, 1]"));
            }
            let target = delta.powf(-beta).min(n as f64);
            let mut best = divisors[0];
            let mut best_gap = f64::INFINITY;
            for &p in &divisors {
                let gap = (p as f64 - target).abs();
                if gap <= best_gap {
                    best = p;
                    best_gap = gap;
                }
            }
            Ok(best)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub scheme: Scheme,
    pub delta: f64,
    pub horizon: f64,
    pub n_particles: usize,
    /// Required for batch schemes, ignored otherwise.
    pub batch_rule: Option<BatchRule>,
    /// `1/(N-1)` over `j ≠ i` when set, `1/N` over all particles otherwise.
    /// Batch schemes always exclude self.
    pub exclude_self: bool,
    pub summation: Summation,
    /// Record the state every this many steps (and at `t = 0`).
    pub checkpoint_stride: Option<usize>,
}

impl SolverConfig {
    pub fn new(scheme: Scheme, delta: f64, horizon: f64, n_particles: usize) -> Self {
        Self {
            scheme,
            delta,
            horizon,
            n_particles,
            batch_rule: None,
            exclude_self: true,
            summation: Summation::Auto,
            checkpoint_stride: None,
        }
    }

    pub fn with_batch_rule(mut self, rule: BatchRule) -> Self {
        self.batch_rule = Some(rule);
        self
    }

    pub fn with_summation(mut self, summation: Summation) -> Self {
        self.summation = summation;
        self
    }

    pub fn with_exclude_self(mut self, exclude_self: bool) -> Self {
        self.exclude_self = exclude_self;
        self
    }

    pub fn with_checkpoints(mut self, stride: usize) -> Self {
        self.checkpoint_stride = Some(stride);
        self
    }

    /// Number of steps `T / Δ`.
    pub fn steps(&self) -> Result<usize> {
        if !(self.delta > 0.0 && self.horizon > 0.0) {
            return config("step size and horizon must be positive");
        }
        integral_ratio(self.horizon / self.delta).ok_or_else(|| {
            Error::Config(format!(
                "horizon {} is not an integer multiple of the step {}",
                self.horizon, self.delta
            ))
        })
    }

    /// Batch size after adjustment, for batch schemes.
    pub fn batch_size(&self) -> Result<Option<usize>> {
        if !self.scheme.is_rbm() {
            return Ok(None);
        }
        let rule = self
            .batch_rule
            .ok_or_else(|| Error::Config(format!("scheme {} needs a batch rule", self.scheme)))?;
        adjusted_batch_size(rule, self.delta, self.n_particles).map(Some)
    }

    pub fn validate(&self) -> Result<()> {
        self.steps()?;
        if self.n_particles == 0 {
            return config("at least one particle is required");
        }
        if (self.exclude_self || self.scheme.is_rbm()) && self.n_particles < 2 {
            return config("excluding self needs at least two particles");
        }
        if let Some(0) = self.checkpoint_stride {
            return config("checkpoint stride must be positive");
        }
        self.batch_size()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_law_batch_sizes() {
        let n = 1024;
        let d = |p: i32| 2f64.powi(-p);
        assert_eq!(adjusted_batch_size(BatchRule::PowerLaw(1.0), d(7), n).unwrap(), 128);
        assert_eq!(adjusted_batch_size(BatchRule::PowerLaw(1.0), d(10), n).unwrap(), 1024);
        assert_eq!(adjusted_batch_size(BatchRule::PowerLaw(1.0), d(12), n).unwrap(), 1024);
        assert_eq!(adjusted_batch_size(BatchRule::PowerLaw(0.5), d(8), n).unwrap(), 16);
        // 2^3.5 ≈ 11.3 is closer to 8 than to 16
        assert_eq!(adjusted_batch_size(BatchRule::PowerLaw(0.5), d(7), n).unwrap(), 8);
        assert_eq!(adjusted_batch_size(BatchRule::PowerLaw(0.5), d(9), n).unwrap(), 16);
        assert_eq!(adjusted_batch_size(BatchRule::PowerLaw(1.0 / 3.0), d(9), n).unwrap(), 8);
        assert_eq!(adjusted_batch_size(BatchRule::PowerLaw(1.0 / 3.0), d(7), n).unwrap(), 4);
        assert_eq!(adjusted_batch_size(BatchRule::FixedP(6), 0.1, 12).unwrap(), 6);
        assert_eq!(adjusted_batch_size(BatchRule::PowerLaw(1.0), d(7), 1000).unwrap(), 125);
        assert_eq!(adjusted_batch_size(BatchRule::PowerLaw(0.5), d(8), 1000).unwrap(), 20);
        assert!(adjusted_batch_size(BatchRule::FixedP(3), 0.1, 1024).is_err());
        assert!(adjusted_batch_size(BatchRule::PowerLaw(1.5), 0.1, 1024).is_err());
    }

    #[test]
    fn config_validation() {
        let c = SolverConfig::new(Scheme::TruncatedEmRbm, 0.1, 1.0, 10);
        assert!(c.validate().is_err());
        assert!(c.clone().with_batch_rule(BatchRule::FixedP(5)).validate().is_ok());
        assert!(SolverConfig::new(Scheme::TruncatedEmFull, 0.3, 1.0, 4).validate().is_err());
        assert_eq!(SolverConfig::new(Scheme::TamedEmFull, 0.125, 1.0, 4).steps().unwrap(), 8);
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
    }
}
