//! Experiment configuration files.
//!
//! A config is TOML with an optional top-level `experiment`, `seed` and
//! `output`, and the sections `[model]`, `[truncation]`, `[simulation]`,
//! `[reference]`, `[batch]`, `[criteria]`, `[timing]`, `[validate]` and
//! `[chaos]`. Every key has a default and unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mckean_core::model::registry::{self, ExampleParams};
use mckean_core::model::{McKeanModel, TruncationSpec};
use mckean_core::solver::{Scheme, Summation};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Converge,
    RbmSweep,
    Timing,
    Validate,
    Chaos,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Converge => "converge",
            Experiment::RbmSweep => "rbm-sweep",
            Experiment::Timing => "timing",
            Experiment::Validate => "validate",
            Experiment::Chaos => "chaos",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Option<Experiment>,
    seed: Option<u64>,
    output: Option<PathBuf>,
    #[serde(default)]
    model: ModelSection,
    #[serde(default)]
    truncation: TruncationSection,
    #[serde(default)]
    simulation: SimulationSection,
    #[serde(default)]
    reference: ReferenceSection,
    #[serde(default)]
    batch: BatchSection,
    #[serde(default)]
    criteria: CriteriaSection,
    #[serde(default)]
    timing: TimingSection,
    #[serde(default)]
    validate: ValidateSection,
    #[serde(default)]
    chaos: ChaosSection,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ModelSection {
    name: String,
    lambda1: f64,
    lambda2: f64,
    lambda3: f64,
    x0: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let p = ExampleParams::default();
        Self {
            name: registry::LINEAR_DIFFUSION_INTERACTION.into(),
            lambda1: p.lambda1,
            lambda2: p.lambda2,
            lambda3: p.lambda3,
            x0: p.x0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TruncationSection {
    enabled: bool,
    growth_constant: Option<f64>,
    exponent: f64,
    scale_radius: f64,
    epsilon: f64,
    delta_star: f64,
}

impl Default for TruncationSection {
    fn default() -> Self {
        Self {
            enabled: true,
            growth_constant: None,
            exponent: 2.0,
            scale_radius: registry::DEFAULT_SCALE_RADIUS,
            epsilon: 0.25,
            delta_star: 1.0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulationSection {
    particles: usize,
    horizon: f64,
    paths: u32,
    deltas: Option<Vec<f64>>,
    delta_log2: Option<Vec<i32>>,
    scheme: String,
    exclude_self: bool,
    summation: String,
    moment_order: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            particles: 1024,
            horizon: 1.0,
            paths: 200,
            deltas: None,
            delta_log2: None,
            scheme: Scheme::TruncatedEmFull.name().into(),
            exclude_self: true,
            summation: "auto".into(),
            moment_order: 4.0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ReferenceSection {
    scheme: String,
    delta_log2: i32,
    check_scheme: Option<String>,
}

impl Default for ReferenceSection {
    fn default() -> Self {
        Self {
            scheme: "auto".into(),
            delta_log2: -12,
            check_scheme: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BatchSection {
    scheme: String,
    betas: Vec<f64>,
    sizes: Vec<usize>,
}

impl Default for BatchSection {
    fn default() -> Self {
        Self {
            scheme: Scheme::TruncatedEmRbm.name().into(),
            betas: vec![1.0, 0.5, 1.0 / 3.0],
            sizes: Vec::new(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CriteriaSection {
    slope_min: Option<f64>,
    slope_max: Option<f64>,
    slope_floor_offset: Option<f64>,
    require_increasing: bool,
    slope_targets: Option<Vec<f64>>,
    slope_tolerance: f64,
    max_divergence_rate: f64,
    moment_ratio_max: Option<f64>,
    reference_agreement: Option<f64>,
}

impl Default for CriteriaSection {
    fn default() -> Self {
        Self {
            slope_min: None,
            slope_max: None,
            slope_floor_offset: None,
            require_increasing: false,
            slope_targets: None,
            slope_tolerance: 0.15,
            max_divergence_rate: 0.01,
            moment_ratio_max: None,
            reference_agreement: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TimingSection {
    particles: Vec<usize>,
    delta_log2: i32,
    steps: usize,
    repetitions: usize,
    betas: Vec<f64>,
    pairwise: bool,
    min_sample_ms: u64,
    full_ratio: Option<[f64; 2]>,
    batch_ratio: Option<[f64; 2]>,
    min_speedup: Option<f64>,
}

impl Default for TimingSection {
    fn default() -> Self {
        Self {
            particles: vec![1 << 10, 1 << 12, 1 << 14],
            delta_log2: -7,
            steps: 2,
            repetitions: 3,
            betas: vec![1.0, 0.5, 1.0 / 3.0],
            pairwise: true,
            min_sample_ms: 50,
            full_ratio: None,
            batch_ratio: None,
            min_speedup: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ValidateSection {
    particles: Vec<usize>,
    batch_sizes: Vec<usize>,
    orders: Vec<usize>,
    kernels: Vec<String>,
    configurations: u32,
    tolerance: f64,
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self {
            particles: vec![4, 6],
            batch_sizes: vec![2, 3],
            orders: vec![1, 2],
            kernels: ValidationKernel::ALL.iter().map(|k| k.name().to_string()).collect(),
            configurations: 3,
            tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ChaosSection {
    particles: Vec<usize>,
    delta_log2: i32,
    paths: u32,
    blocks: usize,
    scheme: String,
}

impl Default for ChaosSection {
    fn default() -> Self {
        Self {
            particles: vec![64, 128, 256, 512, 1024],
            delta_log2: -6,
            paths: 40,
            blocks: 4,
            scheme: Scheme::TruncatedEmFull.name().into(),
        }
    }
}

/// Kernels exercised by the batch-deviation identities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationKernel {
    /// `k(x, y) = y`
    Partner,
    /// `k(x, y) = x - y`
    Difference,
    /// `k(x, y) = sin(x - y)`
    SinDifference,
}

impl ValidationKernel {
    pub const ALL: [ValidationKernel; 3] = [
        ValidationKernel::Partner,
        ValidationKernel::Difference,
        ValidationKernel::SinDifference,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ValidationKernel::Partner => "partner",
            ValidationKernel::Difference => "difference",
            ValidationKernel::SinDifference => "sin-difference",
        }
    }

    pub fn kernel(self) -> mckean_core::model::Kernel {
        use mckean_core::model::Kernel;
        match self {
            ValidationKernel::Partner => Kernel::identity_of_partner(1),
            ValidationKernel::Difference => Kernel::difference(1),
            ValidationKernel::SinDifference => Kernel::from_fn(1, |x, y, out| out[0] = (x[0] - y[0]).sin()),
        }
    }
}

impl FromStr for ValidationKernel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown kernel '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceConfig {
    pub scheme: Scheme,
    pub delta: f64,
    pub check_scheme: Option<Scheme>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchConfig {
    pub scheme: Scheme,
    pub betas: Vec<f64>,
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Criteria {
    pub slope_min: Option<f64>,
    pub slope_max: Option<f64>,
    pub slope_floor_offset: Option<f64>,
    pub require_increasing: bool,
    pub slope_targets: Option<Vec<f64>>,
    pub slope_tolerance: f64,
    pub max_divergence_rate: f64,
    pub moment_ratio_max: Option<f64>,
    pub reference_agreement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingConfig {
    pub particles: Vec<usize>,
    pub delta: f64,
    pub steps: usize,
    pub repetitions: usize,
    pub betas: Vec<f64>,
    pub pairwise: bool,
    pub min_sample_ms: u64,
    pub full_ratio: Option<[f64; 2]>,
    pub batch_ratio: Option<[f64; 2]>,
    pub min_speedup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateConfig {
    pub particles: Vec<usize>,
    pub batch_sizes: Vec<usize>,
    pub orders: Vec<usize>,
    pub kernels: Vec<ValidationKernel>,
    pub configurations: u32,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChaosConfig {
    pub particles: Vec<usize>,
    pub delta: f64,
    pub paths: u32,
    pub blocks: usize,
    pub scheme: Scheme,
}

/// A fully checked experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub output: PathBuf,
    pub model_name: String,
    pub params: ExampleParams,
    pub truncation_enabled: bool,
    pub growth_constant: f64,
    pub truncation_exponent: f64,
    pub scale_radius: f64,
    pub epsilon: f64,
    pub delta_star: f64,
    pub n_particles: usize,
    pub horizon: f64,
    pub paths: u32,
    /// Ascending.
    pub deltas: Vec<f64>,
    pub scheme: Scheme,
    pub exclude_self: bool,
    pub summation: Summation,
    pub moment_order: f64,
    pub reference: ReferenceConfig,
    pub batch: BatchConfig,
    pub criteria: Criteria,
    pub timing: TimingConfig,
    pub validate: ValidateConfig,
    pub chaos: ChaosConfig,
    /// SHA-256 of the config text, hex.
    pub config_hash: String,
}

fn field_err(field: &str, msg: impl fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

fn parse_scheme(field: &str, s: &str) -> Result<Scheme, CliError> {
    s.parse::<Scheme>().map_err(|e| field_err(field, e))
}

fn power_of_two(field: &str, k: i32) -> Result<f64, CliError> {
    if !(-40..=0).contains(&k) {
        return Err(field_err(field, format!("exponent {k} outside [-40, 0]")));
    }
    Ok(2f64.powi(k))
}

fn is_multiple(a: f64, b: f64) -> bool {
    let r = a / b;
    r.round() >= 1.0 && (r - r.round()).abs() <= 1e-9 * r.round()
}

impl ExperimentConfig {
    /// Parses and checks a config. `experiment` is the subcommand; a config
    /// naming a different experiment is rejected.
    pub fn from_toml(text: &str, experiment: Experiment) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let hash = hex(&Sha256::digest(text.as_bytes()));
        Self::resolve(raw, experiment, hash)
    }

    pub fn from_file(path: &Path, experiment: Experiment) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, experiment).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Built-in defaults for `experiment`.
    pub fn defaults(experiment: Experiment) -> Result<Self, CliError> {
        Self::from_toml("", experiment)
    }

    fn resolve(raw: RawConfig, experiment: Experiment, config_hash: String) -> Result<Self, CliError> {
        if let Some(e) = raw.experiment {
            if e != experiment {
                return Err(field_err("experiment", format!("config is for '{e}' but '{experiment}' was requested")));
            }
        }
        let m = &raw.model;
        let params = ExampleParams {
            lambda1: m.lambda1,
            lambda2: m.lambda2,
            lambda3: m.lambda3,
            x0: m.x0,
        };
        registry::by_name(&m.name, params).map_err(|e| field_err("model.name", e))?;
        for (name, v) in [("model.lambda1", m.lambda1), ("model.lambda2", m.lambda2), ("model.lambda3", m.lambda3)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(field_err(name, format!("{v} must be positive")));
            }
        }
        if !m.x0.is_finite() {
            return Err(field_err("model.x0", "must be finite"));
        }

        let t = &raw.truncation;
        let growth_constant = t.growth_constant.unwrap_or_else(|| registry::default_growth_constant(params));
        if !(growth_constant > 0.0) {
            return Err(field_err("truncation.growth_constant", "must be positive"));
        }
        if !(t.exponent > 0.0) {
            return Err(field_err("truncation.exponent", "must be positive"));
        }
        if !(t.scale_radius >= 1.0) {
            return Err(field_err("truncation.scale_radius", "must be ≥ 1"));
        }

        let s = &raw.simulation;
        let deltas = match (&s.deltas, &s.delta_log2) {
            (Some(_), Some(_)) => {
                return Err(field_err("simulation", "give either deltas or delta_log2, not both"));
            }
            (Some(d), None) => d.clone(),
            (None, Some(k)) => k
                .iter()
                .map(|&k| power_of_two("simulation.delta_log2", k))
                .collect::<Result<_, _>>()?,
            (None, None) => (7..=10).map(|k| 2f64.powi(-k)).collect(),
        };
        let mut deltas = deltas;
        deltas.sort_by(f64::total_cmp);
        deltas.dedup();
        if deltas.is_empty() {
            return Err(field_err("simulation.deltas", "at least one step size is required"));
        }
        if !(s.horizon > 0.0 && s.horizon.is_finite()) {
            return Err(field_err("simulation.horizon", "must be positive"));
        }
        if s.paths == 0 {
            return Err(field_err("simulation.paths", "must be positive"));
        }
        if s.particles < 2 {
            return Err(field_err("simulation.particles", "at least two particles are required"));
        }
        if !(s.moment_order >= 1.0) {
            return Err(field_err("simulation.moment_order", "must be ≥ 1"));
        }
        let summation = match s.summation.as_str() {
            "auto" => Summation::Auto,
            "pairwise" => Summation::Pairwise,
            other => return Err(field_err("simulation.summation", format!("'{other}' is not auto or pairwise"))),
        };
        let scheme = parse_scheme("simulation.scheme", &s.scheme)?;

        let b = &raw.batch;
        let batch = BatchConfig {
            scheme: parse_scheme("batch.scheme", &b.scheme)?,
            betas: b.betas.clone(),
            sizes: b.sizes.clone(),
        };
        if !batch.scheme.is_rbm() {
            return Err(field_err("batch.scheme", format!("{} is not a batch scheme", batch.scheme)));
        }
        if let Some(beta) = batch.betas.iter().find(|b| !(**b > 0.0 && **b <= 1.0)) {
            return Err(field_err("batch.betas", format!("β = {beta} outside (0, 1]")));
        }
        if let Some(p) = batch.sizes.iter().find(|p| **p < 2 || s.particles % **p != 0) {
            return Err(field_err("batch.sizes", format!("P = {p} must be ≥ 2 and divide N = {}", s.particles)));
        }

        let r = &raw.reference;
        let reference_delta = power_of_two("reference.delta_log2", r.delta_log2)?;
        let reference_scheme = match r.scheme.as_str() {
            "auto" => match experiment {
                Experiment::RbmSweep => batch.scheme.full_counterpart(),
                _ => Scheme::TamedEmFull,
            },
            other => parse_scheme("reference.scheme", other)?,
        };
        if reference_scheme.is_rbm() {
            return Err(field_err("reference.scheme", "the reference must use full interaction"));
        }
        let check_scheme = r
            .check_scheme
            .as_deref()
            .map(|c| parse_scheme("reference.check_scheme", c))
            .transpose()?;

        if matches!(experiment, Experiment::Converge | Experiment::RbmSweep) {
            for &d in &deltas {
                if !is_multiple(s.horizon, d) {
                    return Err(field_err("simulation.deltas", format!("{d} does not divide T = {}", s.horizon)));
                }
                if !is_multiple(d, reference_delta) {
                    return Err(field_err(
                        "simulation.deltas",
                        format!("{d} is not a multiple of the reference step {reference_delta}"),
                    ));
                }
                if d > t.delta_star && t.enabled {
                    return Err(field_err("simulation.deltas", format!("{d} exceeds truncation.delta_star")));
                }
            }
            if !is_multiple(s.horizon, reference_delta) {
                return Err(field_err("reference.delta_log2", "the reference step must divide T"));
            }
            if experiment == Experiment::RbmSweep && batch.betas.is_empty() && batch.sizes.is_empty() {
                return Err(field_err("batch", "give at least one of betas or sizes"));
            }
            if experiment == Experiment::Converge && scheme.is_rbm() {
                return Err(field_err("simulation.scheme", "converge runs full-interaction schemes"));
            }
        }

        let c = &raw.criteria;
        if let Some(targets) = &c.slope_targets {
            if targets.len() != batch.betas.len() && experiment == Experiment::RbmSweep {
                return Err(field_err("criteria.slope_targets", "needs one target per β"));
            }
        }
        if !(0.0..=1.0).contains(&c.max_divergence_rate) {
            return Err(field_err("criteria.max_divergence_rate", "must be in [0, 1]"));
        }
        let criteria = Criteria {
            slope_min: c.slope_min,
            slope_max: c.slope_max,
            slope_floor_offset: c.slope_floor_offset,
            require_increasing: c.require_increasing,
            slope_targets: c.slope_targets.clone(),
            slope_tolerance: c.slope_tolerance,
            max_divergence_rate: c.max_divergence_rate,
            moment_ratio_max: c.moment_ratio_max,
            reference_agreement: c.reference_agreement,
        };

        let tm = &raw.timing;
        if tm.repetitions < 3 {
            return Err(field_err("timing.repetitions", "at least 3 repetitions are required"));
        }
        if tm.steps == 0 || tm.particles.is_empty() || tm.particles.iter().any(|&n| n < 2) {
            return Err(field_err("timing", "steps and particle counts must be positive"));
        }
        if tm.particles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(field_err("timing.particles", "must be increasing"));
        }
        let timing = TimingConfig {
            particles: tm.particles.clone(),
            delta: power_of_two("timing.delta_log2", tm.delta_log2)?,
            steps: tm.steps,
            repetitions: tm.repetitions,
            betas: tm.betas.clone(),
            pairwise: tm.pairwise,
            min_sample_ms: tm.min_sample_ms,
            full_ratio: tm.full_ratio,
            batch_ratio: tm.batch_ratio,
            min_speedup: tm.min_speedup,
        };

        let v = &raw.validate;
        let validate = ValidateConfig {
            particles: v.particles.clone(),
            batch_sizes: v.batch_sizes.clone(),
            orders: v.orders.clone(),
            kernels: v
                .kernels
                .iter()
                .map(|k| k.parse().map_err(|e| field_err("validate.kernels", e)))
                .collect::<Result<_, _>>()?,
            configurations: v.configurations,
            tolerance: v.tolerance,
        };
        if validate.particles.iter().any(|&n| !(3..=12).contains(&n)) {
            return Err(field_err("validate.particles", "enumeration supports 3 ≤ N ≤ 12"));
        }

        let ch = &raw.chaos;
        let chaos = ChaosConfig {
            particles: ch.particles.clone(),
            delta: power_of_two("chaos.delta_log2", ch.delta_log2)?,
            paths: ch.paths,
            blocks: ch.blocks,
            scheme: parse_scheme("chaos.scheme", &ch.scheme)?,
        };
        if chaos.particles.len() < 2 || chaos.particles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(field_err("chaos.particles", "needs at least two increasing values"));
        }
        if chaos.blocks < 2 || chaos.paths as usize % chaos.blocks != 0 {
            return Err(field_err("chaos.blocks", "paths must split into at least two equal blocks"));
        }
        if chaos.scheme.is_rbm() {
            return Err(field_err("chaos.scheme", "use a full-interaction scheme"));
        }

        let config = Self {
            experiment,
            seed: raw.seed.unwrap_or(1),
            output: raw.output.unwrap_or_else(|| PathBuf::from("out")),
            model_name: m.name.clone(),
            params,
            truncation_enabled: t.enabled,
            growth_constant,
            truncation_exponent: t.exponent,
            scale_radius: t.scale_radius,
            epsilon: t.epsilon,
            delta_star: t.delta_star,
            n_particles: s.particles,
            horizon: s.horizon,
            paths: s.paths,
            deltas,
            scheme,
            exclude_self: s.exclude_self,
            summation,
            moment_order: s.moment_order,
            reference: ReferenceConfig {
                scheme: reference_scheme,
                delta: reference_delta,
                check_scheme,
            },
            batch,
            criteria,
            timing,
            validate,
            chaos,
            config_hash,
        };
        config.truncation().map_err(|e| field_err("truncation", e))?;
        Ok(config)
    }

    pub fn model(&self) -> McKeanModel {
        registry::by_name(&self.model_name, self.params).expect("checked when the config was resolved")
    }

    /// `phi(u) = K (1 + u)^e`, `h(Δ) = phi(scale_radius) Δ^(-ε/2)`, or no
    /// truncation when disabled.
    pub fn truncation(&self) -> Result<TruncationSpec, mckean_core::Error> {
        if !self.truncation_enabled {
            return Ok(TruncationSpec::disabled());
        }
        let k = self.growth_constant;
        let e = self.truncation_exponent;
        TruncationSpec::polynomial(k, e, k * (1.0 + self.scale_radius).powf(e), self.epsilon, self.delta_star)
    }

    /// Creates the output directory and checks that it is writable.
    pub fn prepare_output(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.output)
            .map_err(|e| field_err("output", format!("cannot create {}: {e}", self.output.display())))?;
        let probe = self.output.join(".write-probe");
        std::fs::write(&probe, b"")
            .and_then(|_| std::fs::remove_file(&probe))
            .map_err(|e| field_err("output", format!("{} is not writable: {e}", self.output.display())))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_for_every_experiment() {
        for e in [
            Experiment::Converge,
            Experiment::RbmSweep,
            Experiment::Timing,
            Experiment::Validate,
            Experiment::Chaos,
        ] {
            let c = ExperimentConfig::defaults(e).unwrap();
            assert_eq!(c.deltas.len(), 4);
            assert_eq!(c.n_particles, 1024);
        }
        let sweep = ExperimentConfig::defaults(Experiment::RbmSweep).unwrap();
        assert_eq!(sweep.reference.scheme, Scheme::TruncatedEmFull);
        let conv = ExperimentConfig::defaults(Experiment::Converge).unwrap();
        assert_eq!(conv.reference.scheme, Scheme::TamedEmFull);
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let err = ExperimentConfig::from_toml("[simulation]\nparticels = 4\n", Experiment::Converge).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("particels") && msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let cases = [
            ("[simulation]\ndeltas = [0.3]\n", "simulation.deltas"),
            ("[model]\nname = \"nope\"\n", "model.name"),
            ("[batch]\nbetas = [1.5]\n", "batch.betas"),
            ("[simulation]\nscheme = \"euler\"\n", "simulation.scheme"),
            ("experiment = \"timing\"\n", "experiment"),
            ("[timing]\nrepetitions = 2\n", "timing.repetitions"),
        ];
        for (text, field) in cases {
            let msg = ExperimentConfig::from_toml(text, Experiment::Converge).unwrap_err().to_string();
            assert!(msg.contains(field), "{text}: {msg}");
        }
    }

    #[test]
    fn hash_tracks_text() {
        let a = ExperimentConfig::from_toml("seed = 3\n", Experiment::Converge).unwrap();
        let b = ExperimentConfig::from_toml("seed = 3\n", Experiment::Converge).unwrap();
        let c = ExperimentConfig::from_toml("seed = 4\n", Experiment::Converge).unwrap();
        assert_eq!(a.config_hash, b.config_hash);
        assert_ne!(a.config_hash, c.config_hash);
        assert_eq!(a.config_hash.len(), 64);
    }

    #[test]
    fn delta_spellings_agree() {
        let a = ExperimentConfig::from_toml("[simulation]\ndelta_log2 = [-3, -2]\n", Experiment::Converge).unwrap();
        let b = ExperimentConfig::from_toml("[simulation]\ndeltas = [0.25, 0.125]\n", Experiment::Converge).unwrap();
        assert_eq!(a.deltas, b.deltas);
        assert_eq!(a.deltas, vec![0.125, 0.25]);
    }

    #[test]
    fn default_truncation_matches_registry() {
        let c = ExperimentConfig::defaults(Experiment::Converge).unwrap();
        let ours = c.truncation().unwrap();
        let theirs = registry::default_truncation(ExampleParams::default());
        for k in [7, 10, 12] {
            let d = 2f64.powi(-k);
            assert_eq!(ours.radius(d).unwrap(), theirs.radius(d).unwrap());
        }
    }
}
