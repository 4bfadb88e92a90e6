//! The five experiments behind the subcommands.

use std::path::PathBuf;
use std::time::Duration;

use mckean_core::analysis::{
    chaos_trend, coupled_study, timing_benchmark, ChaosReport, ChaosSettings, ConvergenceReport, ConvergenceRow,
    ReportMetadata, TimingCase, TimingRow, TimingSettings,
};
use mckean_core::batching::{enumerate_partitions, indicator_product_expectation, partition_count, verify_chi_moments_with};
use mckean_core::rng::{stream_from_seed, NoiseSpec, Purpose};
use mckean_core::solver::{BatchRule, EnsembleState, Scheme, SolverConfig};

use crate::config::{Experiment, ExperimentConfig};
use crate::output::{header_lines, num, opt, write_csv};
use crate::{CliError, EXIT_CRITERION, EXIT_DIVERGENCE, EXIT_OK};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Files written and criteria evaluated by one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub checks: Vec<Check>,
    /// Largest fraction of diverged paths over the solvers of the run.
    pub divergence_rate: f64,
    pub divergence_failed: bool,
    pub warnings: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.divergence_failed {
            EXIT_DIVERGENCE
        } else if self.checks.iter().any(|c| !c.passed) {
            EXIT_CRITERION
        } else {
            EXIT_OK
        }
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    fn divergence(&mut self, rate: f64, limit: f64) {
        self.divergence_rate = self.divergence_rate.max(rate);
        self.divergence_failed = self.divergence_rate > limit;
    }

    fn summary_rows(&self) -> Vec<Vec<String>> {
        self.checks
            .iter()
            .map(|c| vec![c.name.clone(), c.passed.to_string(), c.detail.clone()])
            .collect()
    }

    fn write_summary(&mut self, config: &ExperimentConfig) -> Result<(), CliError> {
        let mut rows = self.summary_rows();
        rows.push(vec![
            "divergence-rate".into(),
            (!self.divergence_failed).to_string(),
            format!("{} (limit {})", num(self.divergence_rate), num(config.criteria.max_divergence_rate)),
        ]);
        let path = write_csv(
            &config.output,
            "summary.csv",
            &header_lines(config),
            &["check", "passed", "detail"],
            &rows,
        )?;
        self.files.push(path);
        Ok(())
    }
}

/// Runs the experiment named in `config`.
pub fn run(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    Ok(match config.experiment {
        Experiment::Converge => run_converge(config)?.outcome,
        Experiment::RbmSweep => run_rbm_sweep(config)?.outcome,
        Experiment::Timing => run_timing(config)?.outcome,
        Experiment::Validate => run_validate(config)?.outcome,
        Experiment::Chaos => run_chaos(config)?.outcome,
    })
}

fn solver(config: &ExperimentConfig, scheme: Scheme, delta: f64) -> SolverConfig {
    SolverConfig::new(scheme, delta, config.horizon, config.n_particles)
        .with_exclude_self(config.exclude_self)
        .with_summation(config.summation)
}

fn reference_label(config: &ExperimentConfig) -> String {
    format!("{} at {}", config.reference.scheme, num(config.reference.delta))
}

fn metadata(config: &ExperimentConfig, scheme: Scheme) -> ReportMetadata {
    ReportMetadata {
        seed: config.seed,
        model: config.model_name.clone(),
        scheme,
        n_particles: config.n_particles,
        horizon: config.horizon,
        reference: reference_label(config),
    }
}

fn row_divergence(rows: &[ConvergenceRow]) -> f64 {
    rows.iter()
        .map(|r| r.n_diverged as f64 / r.n_paths.max(1) as f64)
        .fold(0.0, f64::max)
}

fn slope_range_check(outcome: &mut Outcome, config: &ExperimentConfig, name: &str, slope: f64) {
    let c = &config.criteria;
    if c.slope_min.is_none() && c.slope_max.is_none() {
        if !slope.is_finite() {
            outcome.warnings.push(format!("{name}: slope undefined"));
        }
        return;
    }
    let lo = c.slope_min.unwrap_or(f64::NEG_INFINITY);
    let hi = c.slope_max.unwrap_or(f64::INFINITY);
    outcome.check(
        format!("{name}-slope"),
        slope >= lo && slope <= hi,
        format!("slope {} in [{}, {}]", num(slope), num(lo), num(hi)),
    );
}

fn convergence_rows(prefix: &[String], rows: &[ConvergenceRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            let mut v = prefix.to_vec();
            v.extend([
                num(r.delta),
                num(r.rms_error),
                r.n_paths.to_string(),
                r.n_diverged.to_string(),
                opt(r.batch_size),
            ]);
            v
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeRun {
    pub report: ConvergenceReport,
    /// `(Δ, E|X|^q)` per test step size.
    pub moments: Vec<(f64, f64)>,
    /// Strong difference between the reference and the cross-check solver.
    pub reference_gap: Option<f64>,
    pub outcome: Outcome,
}

/// Strong error of a full-interaction scheme against a fine reference at
/// every configured step size, all driven by the same Brownian paths.
pub fn run_converge(config: &ExperimentConfig) -> Result<ConvergeRun, CliError> {
    config.prepare_output()?;
    let model = config.model();
    let spec = config.truncation()?;
    let noise = NoiseSpec::new(
        config.seed,
        config.n_particles,
        model.dims().noise,
        config.reference.delta,
        config.horizon,
    )?;
    let reference = solver(config, config.reference.scheme, config.reference.delta);
    let mut tests: Vec<SolverConfig> = config.deltas.iter().map(|&d| solver(config, config.scheme, d)).collect();
    if let Some(check) = config.reference.check_scheme {
        tests.push(solver(config, check, config.reference.delta));
    }
    let study = coupled_study(&model, &spec, &noise, &reference, &tests, config.paths, config.moment_order)?;
    let k = config.deltas.len();
    let rows: Vec<ConvergenceRow> = study.tests[..k].iter().map(|c| c.row.clone()).collect();
    let moments: Vec<(f64, f64)> = study.tests[..k].iter().map(|c| (c.row.delta, c.moment)).collect();
    let report = ConvergenceReport::new(rows, metadata(config, config.scheme));

    let mut outcome = Outcome::default();
    slope_range_check(&mut outcome, config, "convergence", report.slope);
    if let Some(max) = config.criteria.moment_ratio_max {
        let (lo, hi) = moments
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), (_, m)| (lo.min(*m), hi.max(*m)));
        let ratio = hi / lo;
        outcome.check(
            "moment-ratio",
            ratio < max,
            format!("max/min E|X|^{} = {} < {}", num(config.moment_order), num(ratio), num(max)),
        );
    }
    let mut reference_gap = None;
    if let Some(check) = config.reference.check_scheme {
        let gap_row = &study.tests[k].row;
        reference_gap = Some(gap_row.rms_error);
        let coarsest = report.rows.last().map_or(f64::NAN, |r| r.rms_error);
        let agreement = config.criteria.reference_agreement.unwrap_or(0.1);
        outcome.check(
            "reference-agreement",
            gap_row.rms_error <= agreement * coarsest,
            format!(
                "{} vs {}: {} ≤ {} × {}",
                config.reference.scheme,
                check,
                num(gap_row.rms_error),
                num(agreement),
                num(coarsest)
            ),
        );
    }
    let reference_rate = study.reference_diverged as f64 / study.n_paths as f64;
    outcome.divergence(
        row_divergence(&report.rows).max(reference_rate),
        config.criteria.max_divergence_rate,
    );

    let header = {
        let mut h = header_lines(config);
        h.push(format!("model: {}", config.model_name));
        h.push(format!("scheme: {}", config.scheme));
        h.push(format!("reference: {}", reference_label(config)));
        h.push(format!("N: {}", config.n_particles));
        h.push(format!("T: {}", num(config.horizon)));
        h.push(format!("slope: {}", num(report.slope)));
        h.push(format!("intercept: {}", num(report.intercept)));
        h
    };
    outcome.files.push(write_csv(
        &config.output,
        "convergence.csv",
        &header,
        &["delta", "error", "paths", "diverged", "P"],
        &convergence_rows(&[], &report.rows),
    )?);
    let moment_rows: Vec<Vec<String>> = study.tests[..k]
        .iter()
        .map(|c| {
            vec![
                num(c.row.delta),
                num(config.moment_order),
                num(c.moment),
                c.n_self_diverged.to_string(),
            ]
        })
        .collect();
    outcome.files.push(write_csv(
        &config.output,
        "moments.csv",
        &header_lines(config),
        &["delta", "order", "moment", "diverged"],
        &moment_rows,
    )?);
    outcome.write_summary(config)?;
    Ok(ConvergeRun {
        report,
        moments,
        reference_gap,
        outcome,
    })
}

/// One batch-size rule of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSeries {
    pub label: String,
    pub beta: Option<f64>,
    pub fixed_batch: Option<usize>,
    pub report: ConvergenceReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub series: Vec<SweepSeries>,
    pub outcome: Outcome,
}

/// Strong error of the batch scheme against the full-interaction reference,
/// one series per `β` (with `P ≈ Δ^-β`) and per fixed `P`.
pub fn run_rbm_sweep(config: &ExperimentConfig) -> Result<SweepRun, CliError> {
    config.prepare_output()?;
    let model = config.model();
    let spec = config.truncation()?;
    let noise = NoiseSpec::new(
        config.seed,
        config.n_particles,
        model.dims().noise,
        config.reference.delta,
        config.horizon,
    )?;
    let reference = solver(config, config.reference.scheme, config.reference.delta);
    let mut rules: Vec<(String, Option<f64>, Option<usize>, BatchRule)> = Vec::new();
    for &b in &config.batch.betas {
        rules.push((format!("beta={}", num(b)), Some(b), None, BatchRule::PowerLaw(b)));
    }
    for &p in &config.batch.sizes {
        rules.push((format!("P={p}"), None, Some(p), BatchRule::FixedP(p)));
    }
    let tests: Vec<SolverConfig> = rules
        .iter()
        .flat_map(|(_, _, _, rule)| {
            config
                .deltas
                .iter()
                .map(move |&d| solver(config, config.batch.scheme, d).with_batch_rule(*rule))
        })
        .collect();
    let study = coupled_study(&model, &spec, &noise, &reference, &tests, config.paths, config.moment_order)?;
    let k = config.deltas.len();
    let series: Vec<SweepSeries> = rules
        .iter()
        .zip(study.tests.chunks(k))
        .map(|((label, beta, fixed, _), cols)| SweepSeries {
            label: label.clone(),
            beta: *beta,
            fixed_batch: *fixed,
            report: ConvergenceReport::new(cols.iter().map(|c| c.row.clone()).collect(), metadata(config, config.batch.scheme)),
        })
        .collect();

    let mut outcome = Outcome::default();
    let c = &config.criteria;
    let beta_series: Vec<&SweepSeries> = series.iter().filter(|s| s.beta.is_some()).collect();
    for (idx, s) in beta_series.iter().enumerate() {
        let beta = s.beta.expect("beta series");
        slope_range_check(&mut outcome, config, &s.label, s.report.slope);
        if let Some(offset) = c.slope_floor_offset {
            let floor = beta / 2.0 - offset;
            outcome.check(
                format!("{}-floor", s.label),
                s.report.slope >= floor,
                format!("slope {} ≥ {}", num(s.report.slope), num(floor)),
            );
        }
        if let Some(targets) = &c.slope_targets {
            let t = targets[idx];
            outcome.check(
                format!("{}-target", s.label),
                (s.report.slope - t).abs() <= c.slope_tolerance,
                format!("|{} - {}| ≤ {}", num(s.report.slope), num(t), num(c.slope_tolerance)),
            );
        }
    }
    if c.require_increasing {
        let mut by_beta: Vec<(f64, f64)> = beta_series
            .iter()
            .map(|s| (s.beta.expect("beta series"), s.report.slope))
            .collect();
        by_beta.sort_by(|a, b| a.0.total_cmp(&b.0));
        let increasing = by_beta.windows(2).all(|w| w[1].1 > w[0].1);
        let detail = by_beta
            .iter()
            .map(|(b, s)| format!("β={}: {}", num(*b), num(*s)))
            .collect::<Vec<_>>()
            .join("; ");
        outcome.check("slopes-increase-with-beta", increasing, detail);
    }
    let rate = series
        .iter()
        .map(|s| row_divergence(&s.report.rows))
        .fold(study.reference_diverged as f64 / study.n_paths as f64, f64::max);
    outcome.divergence(rate, c.max_divergence_rate);

    let mut header = header_lines(config);
    header.push(format!("model: {}", config.model_name));
    header.push(format!("scheme: {}", config.batch.scheme));
    header.push(format!("reference: {}", reference_label(config)));
    header.push(format!("N: {}", config.n_particles));
    for s in &series {
        header.push(format!("slope {}: {}", s.label, num(s.report.slope)));
    }
    let mut rows = Vec::new();
    for s in &series {
        rows.extend(convergence_rows(&[s.label.clone(), opt(s.beta.map(num))], &s.report.rows));
    }
    outcome.files.push(write_csv(
        &config.output,
        "rbm_sweep.csv",
        &header,
        &["series", "beta", "delta", "error", "paths", "diverged", "P"],
        &rows,
    )?);
    outcome.write_summary(config)?;
    Ok(SweepRun { series, outcome })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRun {
    pub rows: Vec<TimingRow>,
    pub outcome: Outcome,
}

pub const FULL_LABEL: &str = "TEM";

fn batch_label(beta: f64) -> String {
    format!("TEMwRBM beta={}", num(beta))
}

/// Wall time of the full and batch truncated EM for each `N`, on the calling
/// thread.
pub fn run_timing(config: &ExperimentConfig) -> Result<TimingRun, CliError> {
    config.prepare_output()?;
    let t = &config.timing;
    let mut model = config.model();
    if t.pairwise {
        model = model.pairwise_only();
    }
    let spec = config.truncation()?;
    let mut cases = vec![TimingCase {
        label: FULL_LABEL.into(),
        scheme: Scheme::TruncatedEmFull,
        batch_rule: None,
    }];
    for &b in &t.betas {
        cases.push(TimingCase {
            label: batch_label(b),
            scheme: Scheme::TruncatedEmRbm,
            batch_rule: Some(BatchRule::PowerLaw(b)),
        });
    }
    let settings = TimingSettings {
        n_values: t.particles.clone(),
        delta: t.delta,
        steps: t.steps,
        repetitions: t.repetitions,
        seed: config.seed,
        min_sample: Duration::from_millis(t.min_sample_ms),
    };
    let rows = timing_benchmark(&model, &spec, &cases, &settings)?;

    let mut outcome = Outcome::default();
    let ratios = |label: &str| -> Vec<f64> {
        rows.iter()
            .filter(|r| r.label == label)
            .filter_map(|r| r.ratio)
            .collect()
    };
    let in_range = |v: &[f64], r: [f64; 2]| v.iter().all(|x| *x >= r[0] && *x <= r[1]);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(", ");
    if let Some(r) = t.full_ratio {
        let v = ratios(FULL_LABEL);
        outcome.check("full-ratio", in_range(&v, r), format!("[{}] in [{}, {}]", fmt(&v), r[0], r[1]));
    }
    let unit_beta = t.betas.iter().any(|b| *b == 1.0).then(|| batch_label(1.0));
    if let (Some(r), Some(label)) = (t.batch_ratio, &unit_beta) {
        let v = ratios(label);
        outcome.check("batch-ratio", in_range(&v, r), format!("[{}] in [{}, {}]", fmt(&v), r[0], r[1]));
    }
    if let (Some(min), Some(label)) = (t.min_speedup, &unit_beta) {
        let n = *t.particles.last().expect("checked non-empty");
        let time = |l: &str| rows.iter().find(|r| r.label == l && r.n_particles == n).map(|r| r.median_seconds);
        let speedup = time(FULL_LABEL).zip(time(label)).map_or(f64::NAN, |(a, b)| a / b);
        outcome.check("speedup", speedup >= min, format!("N = {n}: {speedup:.2} ≥ {min}"));
    }

    let header = header_lines(config);
    let long: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.label.clone(),
                r.n_particles.to_string(),
                opt(r.batch_size),
                num(r.median_seconds),
                opt(r.ratio.map(num)),
            ]
        })
        .collect();
    outcome.files.push(write_csv(
        &config.output,
        "timing.csv",
        &header,
        &["scheme", "N", "P", "median_seconds", "ratio"],
        &long,
    )?);
    let labels: Vec<&str> = cases.iter().map(|c| c.label.as_str()).collect();
    let mut columns = vec!["N"];
    columns.extend(labels.iter().copied());
    let wide: Vec<Vec<String>> = t
        .particles
        .iter()
        .map(|&n| {
            let mut row = vec![n.to_string()];
            for l in &labels {
                row.push(opt(rows
                    .iter()
                    .find(|r| r.label == *l && r.n_particles == n)
                    .map(|r| num(r.median_seconds))));
            }
            row
        })
        .collect();
    outcome.files.push(write_csv(&config.output, "timing_table.csv", &header, &columns, &wide)?);
    outcome.write_summary(config)?;
    Ok(TimingRun { rows, outcome })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub check: &'static str,
    pub n: usize,
    pub p: usize,
    /// Kernel name or co-batch order.
    pub case: String,
    pub configuration: Option<u32>,
    pub lhs: f64,
    pub rhs: f64,
    pub passed: bool,
}

impl ValidationRow {
    pub fn error(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }

    pub fn name(&self) -> String {
        let cfg = self.configuration.map_or(String::new(), |c| format!(" config {c}"));
        format!("{} N={} P={} {}{cfg}", self.check, self.n, self.p, self.case)
    }
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

/// `(nP)! / ((P!)^n n!)`, the number of partitions of `nP` labelled
/// particles into `n` unlabelled batches of size `P`.
pub fn partition_count_formula(n_batches: usize, p: usize) -> u128 {
    factorial(n_batches * p) / (factorial(p).pow(n_batches as u32) * factorial(n_batches))
}

/// Random 1-D configuration `c` for `N` particles, uniform on `[-2, 2]`.
pub fn validation_configuration(seed: u64, n: usize, c: u32) -> EnsembleState {
    let mut s = stream_from_seed(seed, Purpose::Initial, c, n as u32);
    let v: Vec<f64> = (0..n).map(|_| 4.0 * s.uniform() - 2.0).collect();
    EnsembleState::from_scalars(&v)
}

/// Enumeration checks of the batch-deviation moments, co-batch indicator
/// products and partition counts. `variance_formula(N, P, Λ)` is the
/// variance claimed for `χ_i`.
pub fn validation_rows(
    config: &ExperimentConfig,
    variance_formula: impl Fn(usize, usize, f64) -> f64 + Copy,
) -> Result<Vec<ValidationRow>, CliError> {
    let v = &config.validate;
    let tol = v.tolerance;
    let mut rows = Vec::new();
    for &n in &v.particles {
        let mut sizes: Vec<usize> = v.batch_sizes.iter().copied().filter(|&p| p >= 2 && p < n && n % p == 0).collect();
        sizes.push(n);
        for p in sizes {
            for kernel in &v.kernels {
                for c in 0..v.configurations {
                    let state = validation_configuration(config.seed, n, c);
                    let i = c as usize % n;
                    let report = verify_chi_moments_with(&state, &kernel.kernel(), i, p, variance_formula)?;
                    let mut push = |check, lhs: f64, rhs: f64| {
                        rows.push(ValidationRow {
                            check,
                            n,
                            p,
                            case: kernel.name().into(),
                            configuration: Some(c),
                            lhs,
                            rhs,
                            passed: (lhs - rhs).abs() <= tol,
                        })
                    };
                    push("chi-mean", report.mean_error, 0.0);
                    push("chi-variance", report.variance_lhs, report.variance_rhs);
                }
            }
            for &q in v.orders.iter().filter(|&&q| q >= 1 && q < n) {
                let partitions = enumerate_partitions(n, p)?;
                let favourable = partitions
                    .iter()
                    .filter(|part| (1..=q).all(|j| part.batch_of(j) == part.batch_of(0)))
                    .count();
                let lhs = favourable as f64 / partitions.len() as f64;
                let rhs = indicator_product_expectation(n, p, q)?;
                rows.push(ValidationRow {
                    check: "indicator",
                    n,
                    p,
                    case: format!("q={q}"),
                    configuration: None,
                    lhs,
                    rhs,
                    passed: (lhs - rhs).abs() <= tol,
                });
            }
            let enumerated = enumerate_partitions(n, p)?.len() as u128;
            let formula = partition_count_formula(n / p, p);
            let counted = partition_count(n, p)?;
            rows.push(ValidationRow {
                check: "partition-count",
                n,
                p,
                case: format!("M({})", n / p),
                configuration: None,
                lhs: enumerated as f64,
                rhs: formula as f64,
                passed: enumerated == formula && counted == formula,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateRun {
    pub rows: Vec<ValidationRow>,
    pub outcome: Outcome,
}

pub fn run_validate(config: &ExperimentConfig) -> Result<ValidateRun, CliError> {
    run_validate_with(config, |n, p, lambda| {
        (1.0 / (p - 1) as f64 - 1.0 / (n - 1) as f64) * lambda
    })
}

/// [`run_validate`] against a caller-supplied variance formula.
pub fn run_validate_with(
    config: &ExperimentConfig,
    variance_formula: impl Fn(usize, usize, f64) -> f64 + Copy,
) -> Result<ValidateRun, CliError> {
    config.prepare_output()?;
    let rows = validation_rows(config, variance_formula)?;
    let mut outcome = Outcome::default();
    for r in rows.iter().filter(|r| !r.passed) {
        outcome.check(r.name(), false, format!("{} vs {}", num(r.lhs), num(r.rhs)));
    }
    outcome.check(
        "all-identities",
        rows.iter().all(|r| r.passed),
        format!("{} of {} rows pass", rows.iter().filter(|r| r.passed).count(), rows.len()),
    );
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.check.to_string(),
                r.n.to_string(),
                r.p.to_string(),
                r.case.clone(),
                opt(r.configuration),
                num(r.lhs),
                num(r.rhs),
                num(r.error()),
                r.passed.to_string(),
            ]
        })
        .collect();
    outcome.files.push(write_csv(
        &config.output,
        "validation.csv",
        &header_lines(config),
        &["check", "N", "P", "case", "configuration", "lhs", "rhs", "abs_error", "passed"],
        &table,
    )?);
    outcome.write_summary(config)?;
    Ok(ValidateRun { rows, outcome })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChaosRun {
    pub report: ChaosReport,
    pub outcome: Outcome,
}

/// `W2` between terminal empirical laws at consecutive particle counts.
pub fn run_chaos(config: &ExperimentConfig) -> Result<ChaosRun, CliError> {
    config.prepare_output()?;
    let ch = &config.chaos;
    let settings = ChaosSettings {
        scheme: ch.scheme,
        n_values: ch.particles.clone(),
        delta: ch.delta,
        horizon: config.horizon,
        paths: ch.paths,
        seed: config.seed,
        blocks: ch.blocks,
    };
    let report = chaos_trend(&config.model(), &config.truncation()?, &settings)?;
    let mut outcome = Outcome::default();
    let detail = report
        .rows
        .iter()
        .map(|r| format!("{}→{}: {:.4}±{:.4}", r.n_small, r.n_large, r.distance, r.standard_error))
        .collect::<Vec<_>>()
        .join("; ");
    outcome.check("distance-decreases", report.trend_holds(), detail);
    let total = (ch.paths as usize * ch.particles.len()) as f64;
    outcome.divergence(report.n_diverged as f64 / total, config.criteria.max_divergence_rate);
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.n_small.to_string(),
                r.n_large.to_string(),
                num(r.distance),
                num(r.standard_error),
            ]
        })
        .collect();
    outcome.files.push(write_csv(
        &config.output,
        "chaos.csv",
        &header_lines(config),
        &["n_small", "n_large", "distance", "standard_error"],
        &rows,
    )?);
    outcome.write_summary(config)?;
    Ok(ChaosRun { report, outcome })
}
