//! Measurement layer: strong errors, moments, 1-D Wasserstein distances,
//! slope regression, the coupled convergence study, the propagation-of-chaos
//! probe and the timing harness.
//!
//! Reductions over paths always run in path-id order, so results do not
//! depend on how paths were scheduled across threads.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{usage, Error, Result};
use crate::model::{McKeanModel, TruncationSpec};
use crate::rng::NoiseSpec;
use crate::solver::{simulate, simulate_coupled_family, BatchRule, EnsembleState, Scheme, SolverConfig, Summation, Trajectory};

/// Root-mean-square difference over particles and paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrongError {
    pub rms_error: f64,
    pub n_paths: usize,
    pub n_diverged: usize,
}

/// Streaming form of [`strong_error`]; add paths in path-id order.
#[derive(Debug, Clone, Default)]
pub struct ErrorAccumulator {
    sum: f64,
    count: usize,
    paths: usize,
    diverged: usize,
}

impl ErrorAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, reference: &EnsembleState, test: &EnsembleState) -> Result<()> {
        self.add_squared(squared_difference(reference, test)?, reference.n_particles());
        Ok(())
    }

    /// Adds a path whose summed squared difference over `n` particles is known.
    pub fn add_squared(&mut self, squared_sum: f64, n: usize) {
        self.sum += squared_sum;
        self.count += n;
        self.paths += 1;
    }

    pub fn add_diverged(&mut self) {
        self.paths += 1;
        self.diverged += 1;
    }

    /// Counts the path as diverged if either trajectory diverged.
    pub fn add_trajectories(&mut self, reference: &Trajectory, test: &Trajectory) -> Result<()> {
        if reference.diverged() || test.diverged() {
            self.add_diverged();
            Ok(())
        } else {
            self.add(&reference.terminal, &test.terminal)
        }
    }

    pub fn finish(&self) -> Result<StrongError> {
        if self.paths == 0 {
            return usage("no paths were added");
        }
        if self.count == 0 {
            return Err(Error::Usage(format!("all {} paths diverged", self.paths)));
        }
        Ok(StrongError {
            rms_error: (self.sum / self.count as f64).sqrt(),
            n_paths: self.paths,
            n_diverged: self.diverged,
        })
    }
}

/// `Σ_i |X_ref^i - X_test^i|²` in particle order.
pub fn squared_difference(reference: &EnsembleState, test: &EnsembleState) -> Result<f64> {
    if reference.dim() != test.dim() || reference.n_particles() != test.n_particles() {
        return usage("paired ensembles differ in shape");
    }
    Ok(reference
        .positions()
        .iter()
        .zip(test.positions())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// `sqrt(1/(M N) Σ_paths Σ_i |X_ref^i - X_test^i|²)`. A pair with a
/// non-finite entry counts as a diverged path.
pub fn strong_error(pairs: &[(EnsembleState, EnsembleState)]) -> Result<StrongError> {
    let mut acc = ErrorAccumulator::new();
    for (r, t) in pairs {
        if r.is_finite() && t.is_finite() {
            acc.add(r, t)?;
        } else {
            acc.add_diverged();
        }
    }
    acc.finish()
}

fn moment_sum(state: &EnsembleState, q: f64) -> f64 {
    let d = state.dim();
    state
        .positions()
        .chunks_exact(d)
        .map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt().powf(q))
        .sum()
}

/// `1/(M N) Σ |X^i|^q` over the ensembles with finite entries.
pub fn moment_estimate<'a>(ensembles: impl IntoIterator<Item = &'a EnsembleState>, q: f64) -> Result<f64> {
    if !(q >= 1.0) {
        return usage(format!("moment order {q} must be ≥ 1"));
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for e in ensembles.into_iter().filter(|e| e.is_finite()) {
        sum += moment_sum(e, q);
        count += e.n_particles();
    }
    Ok(if count == 0 { f64::NAN } else { sum / count as f64 })
}

/// `((1/n) Σ |a_(i) - b_(i)|^p)^{1/p}` over order statistics.
pub fn wasserstein_p_1d(a: &[f64], b: &[f64], p: f64) -> Result<f64> {
    if a.len() != b.len() {
        return usage(format!("sample counts differ: {} vs {}", a.len(), b.len()));
    }
    if a.is_empty() {
        return usage("empty samples");
    }
    if !(p >= 1.0) {
        return usage(format!("order p = {p} must be ≥ 1"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let mean = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - y).abs().powf(p))
        .sum::<f64>()
        / a.len() as f64;
    Ok(mean.powf(1.0 / p))
}

/// Ordinary least squares of `log2 error` on `log2 Δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub used: usize,
    /// Rows dropped for a non-positive or non-finite error.
    pub excluded: usize,
}

pub fn slope_fit(rows: &[(f64, f64)]) -> Result<SlopeFit> {
    let usable: Vec<(f64, f64)> = rows
        .iter()
        .filter(|(d, e)| *d > 0.0 && *e > 0.0 && e.is_finite())
        .map(|(d, e)| (d.log2(), e.log2()))
        .collect();
    if usable.len() < 2 {
        return usage(format!("{} usable rows, at least 2 needed", usable.len()));
    }
    let n = usable.len() as f64;
    let mx = usable.iter().map(|r| r.0).sum::<f64>() / n;
    let my = usable.iter().map(|r| r.1).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|r| (r.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return usage("all rows share the same step size");
    }
    let sxy: f64 = usable.iter().map(|r| (r.0 - mx) * (r.1 - my)).sum();
    let slope = sxy / sxx;
    Ok(SlopeFit {
        slope,
        intercept: my - slope * mx,
        used: usable.len(),
        excluded: rows.len() - usable.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub delta: f64,
    /// NaN when every path diverged.
    pub rms_error: f64,
    pub n_paths: usize,
    pub n_diverged: usize,
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportMetadata {
    pub seed: u64,
    pub model: String,
    pub scheme: Scheme,
    pub n_particles: usize,
    pub horizon: f64,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    /// Sorted by step size, ascending.
    pub rows: Vec<ConvergenceRow>,
    /// NaN with fewer than two usable rows.
    pub slope: f64,
    pub intercept: f64,
    pub metadata: ReportMetadata,
}

impl ConvergenceReport {
    pub fn new(mut rows: Vec<ConvergenceRow>, metadata: ReportMetadata) -> Self {
        rows.sort_by(|a, b| a.delta.total_cmp(&b.delta));
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.delta, r.rms_error)).collect();
        let (slope, intercept) = slope_fit(&pts).map_or((f64::NAN, f64::NAN), |f| (f.slope, f.intercept));
        Self {
            rows,
            slope,
            intercept,
            metadata,
        }
    }

    pub fn divergence_rate(&self) -> f64 {
        let paths: usize = self.rows.iter().map(|r| r.n_paths).sum();
        let diverged: usize = self.rows.iter().map(|r| r.n_diverged).sum();
        if paths == 0 {
            0.0
        } else {
            diverged as f64 / paths as f64
        }
    }
}

/// Per-solver results of a coupled study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyColumn {
    pub row: ConvergenceRow,
    /// `E|X|^q` over the solver's non-diverged paths.
    pub moment: f64,
    pub n_self_diverged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledStudy {
    pub tests: Vec<StudyColumn>,
    pub reference_moment: f64,
    pub reference_diverged: usize,
    pub n_paths: usize,
    pub moment_order: f64,
}

struct PathSummary {
    reference_diverged: bool,
    reference_moment: f64,
    tests: Vec<(Option<f64>, Option<f64>)>,
}

/// Runs `paths` coupled paths of a reference solver and several test
/// solvers, in parallel over paths on the current rayon pool, and reduces in
/// path order. Each test row's error compares the test's terminal ensemble
/// with the reference's; a path counts as diverged for a row if either side
/// diverged.
pub fn coupled_study(
    model: &McKeanModel,
    spec: &TruncationSpec,
    noise: &NoiseSpec,
    reference: &SolverConfig,
    tests: &[SolverConfig],
    paths: u32,
    moment_order: f64,
) -> Result<CoupledStudy> {
    if paths == 0 {
        return usage("at least one path is required");
    }
    if !(moment_order >= 1.0) {
        return usage(format!("moment order {moment_order} must be ≥ 1"));
    }
    let summaries: Vec<PathSummary> = (0..paths)
        .into_par_iter()
        .map(|path| {
            let fam = simulate_coupled_family(reference, tests, model, spec, noise, path)?;
            let r = &fam.reference;
            let tests = fam
                .tests
                .iter()
                .map(|t| {
                    let sq = if r.diverged() || t.diverged() {
                        None
                    } else {
                        Some(squared_difference(&r.terminal, &t.terminal)?)
                    };
                    let mom = (!t.diverged()).then(|| moment_sum(&t.terminal, moment_order));
                    Ok((sq, mom))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PathSummary {
                reference_diverged: r.diverged(),
                reference_moment: moment_sum(&r.terminal, moment_order),
                tests,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n = reference.n_particles as f64;
    let mut columns = Vec::with_capacity(tests.len());
    for (k, cfg) in tests.iter().enumerate() {
        let mut acc = ErrorAccumulator::new();
        let (mut msum, mut mcount, mut self_div) = (0.0, 0usize, 0usize);
        for s in &summaries {
            match s.tests[k].0 {
                Some(sq) => acc.add_squared(sq, reference.n_particles),
                None => acc.add_diverged(),
            }
            match s.tests[k].1 {
                Some(m) => {
                    msum += m;
                    mcount += 1;
                }
                None => self_div += 1,
            }
        }
        let rms_error = acc.finish().map_or(f64::NAN, |e| e.rms_error);
        columns.push(StudyColumn {
            row: ConvergenceRow {
                delta: cfg.delta,
                rms_error,
                n_paths: acc.paths,
                n_diverged: acc.diverged,
                batch_size: cfg.batch_size()?,
            },
            moment: msum / (mcount as f64 * n),
            n_self_diverged: self_div,
        });
    }
    let finite_ref: Vec<&PathSummary> = summaries.iter().filter(|s| !s.reference_diverged).collect();
    let reference_moment = finite_ref.iter().map(|s| s.reference_moment).sum::<f64>() / (finite_ref.len() as f64 * n);
    Ok(CoupledStudy {
        tests: columns,
        reference_moment,
        reference_diverged: summaries.len() - finite_ref.len(),
        n_paths: paths as usize,
        moment_order,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChaosRow {
    pub n_small: usize,
    pub n_large: usize,
    /// `W2` between the pooled terminal laws.
    pub distance: f64,
    /// Spread of the per-block distances.
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChaosReport {
    pub rows: Vec<ChaosRow>,
    pub n_diverged: usize,
}

impl ChaosReport {
    /// Distances are non-increasing in `N`, with at most one increase, and
    /// that one within two combined standard errors.
    pub fn trend_holds(&self) -> bool {
        let mut inversions = 0;
        for w in self.rows.windows(2) {
            if w[1].distance > w[0].distance {
                inversions += 1;
                let se = (w[0].standard_error.powi(2) + w[1].standard_error.powi(2)).sqrt();
                if w[1].distance - w[0].distance > 2.0 * se {
                    return false;
                }
            }
        }
        inversions <= 1
    }
}

/// Settings of the propagation-of-chaos probe.
#[derive(Debug, Clone, PartialEq)]
pub struct ChaosSettings {
    pub scheme: Scheme,
    pub n_values: Vec<usize>,
    pub delta: f64,
    pub horizon: f64,
    pub paths: u32,
    pub seed: u64,
    /// Paths are grouped into this many blocks for the standard error.
    pub blocks: usize,
}

/// Terminal empirical laws at consecutive `N` compared in `W2`. Every system
/// uses the same seed, so particle `i` sees the same Brownian path in all of
/// them; the larger system is subsampled to its first `N_small` particles.
pub fn chaos_trend(model: &McKeanModel, spec: &TruncationSpec, settings: &ChaosSettings) -> Result<ChaosReport> {
    let ns = &settings.n_values;
    if ns.len() < 2 || ns.windows(2).any(|w| w[1] <= w[0]) {
        return usage("N values must be increasing with at least two entries");
    }
    if model.dims().state != 1 {
        return usage("the chaos probe is one-dimensional");
    }
    if settings.blocks < 2 || settings.paths as usize % settings.blocks != 0 {
        return usage("paths must split into at least two equal blocks");
    }
    let mut n_diverged = 0;
    let mut terminal: Vec<Vec<Option<Vec<f64>>>> = Vec::with_capacity(ns.len());
    for &n in ns {
        let noise = NoiseSpec::new(settings.seed, n, model.dims().noise, settings.delta, settings.horizon)?;
        let cfg = SolverConfig::new(settings.scheme, settings.delta, settings.horizon, n);
        let runs: Vec<Option<Vec<f64>>> = (0..settings.paths)
            .into_par_iter()
            .map(|path| {
                let t = simulate(&cfg, model, spec, &noise, path)?;
                Ok((!t.diverged()).then(|| t.terminal.into_positions()))
            })
            .collect::<Result<_>>()?;
        n_diverged += runs.iter().filter(|r| r.is_none()).count();
        terminal.push(runs);
    }

    let pool = |runs: &[Option<Vec<f64>>], other: &[Option<Vec<f64>>], take: usize| -> (Vec<f64>, Vec<f64>) {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (x, y) in runs.iter().zip(other) {
            if let (Some(x), Some(y)) = (x, y) {
                a.extend_from_slice(&x[..take]);
                b.extend_from_slice(&y[..take]);
            }
        }
        (a, b)
    };
    let mut rows = Vec::new();
    let per_block = settings.paths as usize / settings.blocks;
    for k in 0..ns.len() - 1 {
        let take = ns[k];
        let (a, b) = pool(&terminal[k], &terminal[k + 1], take);
        if a.is_empty() {
            return usage("every path diverged");
        }
        let distance = wasserstein_p_1d(&a, &b, 2.0)?;
        let mut block_d = Vec::new();
        for blk in 0..settings.blocks {
            let range = blk * per_block..(blk + 1) * per_block;
            let (a, b) = pool(&terminal[k][range.clone()], &terminal[k + 1][range], take);
            if !a.is_empty() {
                block_d.push(wasserstein_p_1d(&a, &b, 2.0)?);
            }
        }
        let m = block_d.len() as f64;
        let mean = block_d.iter().sum::<f64>() / m;
        let var = block_d.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
        rows.push(ChaosRow {
            n_small: ns[k],
            n_large: ns[k + 1],
            distance,
            standard_error: (var / m).sqrt(),
        });
    }
    Ok(ChaosReport { rows, n_diverged })
}

/// One column of a timing table.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingCase {
    pub label: String,
    pub scheme: Scheme,
    pub batch_rule: Option<BatchRule>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub label: String,
    pub n_particles: usize,
    pub batch_size: Option<usize>,
    /// Median wall time of `steps` steps.
    pub median_seconds: f64,
    /// Ratio to the previous `N` of the same case.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingSettings {
    pub n_values: Vec<usize>,
    pub delta: f64,
    pub steps: usize,
    pub repetitions: usize,
    pub seed: u64,
    /// Runs shorter than this are repeated and averaged inside one sample.
    pub min_sample: Duration,
}

/// Median wall time per case and `N`, after one warm-up run. Runs on the
/// calling thread. Pass a model without separable kernels to time the
/// pairwise sums.
pub fn timing_benchmark(
    model: &McKeanModel,
    spec: &TruncationSpec,
    cases: &[TimingCase],
    settings: &TimingSettings,
) -> Result<Vec<TimingRow>> {
    if settings.repetitions < 3 {
        return usage("timing needs at least 3 repetitions");
    }
    if settings.steps == 0 {
        return usage("timing needs at least one step");
    }
    let horizon = settings.delta * settings.steps as f64;
    let mut rows = Vec::new();
    for case in cases {
        let mut prev: Option<f64> = None;
        for &n in &settings.n_values {
            let noise = NoiseSpec::new(settings.seed, n, model.dims().noise, settings.delta, horizon)?;
            let mut cfg = SolverConfig::new(case.scheme, settings.delta, horizon, n).with_summation(Summation::Auto);
            cfg.batch_rule = case.batch_rule;
            let run = |path: u32| -> Result<Duration> {
                let start = Instant::now();
                let t = simulate(&cfg, model, spec, &noise, path)?;
                let elapsed = start.elapsed();
                std::hint::black_box(t);
                Ok(elapsed)
            };
            let warm = run(0)?;
            let inner = if warm >= settings.min_sample {
                1
            } else {
                (settings.min_sample.as_secs_f64() / warm.as_secs_f64().max(1e-9)).ceil() as u32
            };
            let mut samples = Vec::with_capacity(settings.repetitions);
            for rep in 0..settings.repetitions {
                let mut total = Duration::ZERO;
                for k in 0..inner {
                    total += run(1 + rep as u32 * inner + k)?;
                }
                samples.push(total.as_secs_f64() / inner as f64);
            }
            samples.sort_by(f64::total_cmp);
            let median = samples[samples.len() / 2];
            rows.push(TimingRow {
                label: case.label.clone(),
                n_particles: n,
                batch_size: cfg.batch_size()?,
                median_seconds: median,
                ratio: prev.map(|p| median / p),
            });
            prev = Some(median);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::model::registry::{self, ExampleParams};

    fn s(v: &[f64]) -> EnsembleState {
        EnsembleState::from_scalars(v)
    }

    #[test]
    fn strong_error_examples() {
        let a = s(&[0.3, -0.4]);
        let z = s(&[0.0, 0.0]);
        let e = strong_error(&[(a.clone(), z.clone())]).unwrap();
        assert!((e.rms_error - 0.125f64.sqrt()).abs() < 1e-15);
        assert_eq!(strong_error(&[(a.clone(), a.clone())]).unwrap().rms_error, 0.0);
        let a2 = s(&[0.6, -0.8]);
        assert!((strong_error(&[(a2, z.clone())]).unwrap().rms_error - 2.0 * e.rms_error).abs() < 1e-15);
    }

    #[test]
    fn strong_error_skips_diverged_paths() {
        let bad = s(&[f64::NAN, 0.0]);
        let e = strong_error(&[(s(&[1.0, 1.0]), s(&[0.0, 0.0])), (bad.clone(), s(&[0.0, 0.0]))]).unwrap();
        assert_eq!(e.rms_error, 1.0);
        assert_eq!((e.n_paths, e.n_diverged), (2, 1));
        assert!(strong_error(&[(bad, s(&[0.0, 0.0]))]).is_err());
    }

    #[test]
    fn moment_examples() {
        assert_eq!(moment_estimate([&s(&[1.0, -1.0, 1.0])], 3.0).unwrap(), 1.0);
        assert_eq!(moment_estimate([&s(&[0.0, 2.0])], 2.0).unwrap(), 2.0);
        assert!(moment_estimate([&s(&[0.0])], 0.5).is_err());
    }

    #[test]
    fn wasserstein_examples() {
        assert_eq!(wasserstein_p_1d(&[1.0], &[4.0], 1.0).unwrap(), 3.0);
        assert_eq!(wasserstein_p_1d(&[1.0], &[4.0], 3.0).unwrap(), 3.0);
        assert_eq!(wasserstein_p_1d(&[0.0, 1.0], &[1.0, 0.0], 2.0).unwrap(), 0.0);
        let a = [0.5, -2.0, 1.5];
        let moment = a.iter().map(|x: &f64| x.abs().powi(3)).sum::<f64>() / 3.0;
        assert!((wasserstein_p_1d(&a, &[0.0; 3], 3.0).unwrap() - moment.cbrt()).abs() < 1e-14);
        assert!(wasserstein_p_1d(&[1.0], &[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn slope_examples() {
        let rows: Vec<(f64, f64)> = (4..8).map(|k| 2f64.powi(-k)).map(|d| (d, 3.0 * d.sqrt())).collect();
        assert!((slope_fit(&rows).unwrap().slope - 0.5).abs() < 1e-12);
        let rows: Vec<(f64, f64)> = (4..8).map(|k| 2f64.powi(-k)).map(|d| (d, 0.7 * d)).collect();
        assert!((slope_fit(&rows).unwrap().slope - 1.0).abs() < 1e-12);
        let f = slope_fit(&[(0.25, 0.2), (1.0 / 16.0, 0.1), (0.5, 0.0)]).unwrap();
        assert!((f.slope - 0.5).abs() < 1e-12);
        assert_eq!(f.excluded, 1);
        assert!(slope_fit(&[(0.25, 0.2), (0.5, -1.0)]).is_err());
    }

    #[test]
    fn report_sorts_rows() {
        let row = |delta: f64| ConvergenceRow {
            delta,
            rms_error: delta.sqrt(),
            n_paths: 10,
            n_diverged: 0,
            batch_size: None,
        };
        let meta = ReportMetadata {
            seed: 1,
            model: "m".into(),
            scheme: Scheme::TruncatedEmFull,
            n_particles: 4,
            horizon: 1.0,
            reference: "r".into(),
        };
        let r = ConvergenceReport::new(vec![row(0.5), row(0.125), row(0.25)], meta);
        assert_eq!(r.rows.iter().map(|r| r.delta).collect::<Vec<_>>(), vec![0.125, 0.25, 0.5]);
        assert!((r.slope - 0.5).abs() < 1e-12);
        assert_eq!(r.divergence_rate(), 0.0);
    }

    #[test]
    fn chaos_trend_zero_model_is_flat() {
        let model = McKeanModel::zero(1, 1);
        let settings = ChaosSettings {
            scheme: Scheme::TruncatedEmFull,
            n_values: vec![4, 8, 16],
            delta: 0.25,
            horizon: 1.0,
            paths: 4,
            seed: 3,
            blocks: 2,
        };
        let r = chaos_trend(&model, &TruncationSpec::disabled(), &settings).unwrap();
        assert!(r.rows.iter().all(|row| row.distance == 0.0));
        assert!(r.trend_holds());
    }

    #[test]
    fn trend_rule() {
        let row = |d: f64, se: f64| ChaosRow {
            n_small: 1,
            n_large: 2,
            distance: d,
            standard_error: se,
        };
        let rep = |rows| ChaosReport { rows, n_diverged: 0 };
        assert!(rep(vec![row(1.0, 0.1), row(0.5, 0.1), row(0.3, 0.1)]).trend_holds());
        assert!(rep(vec![row(1.0, 0.1), row(1.1, 0.1), row(0.3, 0.1)]).trend_holds());
        assert!(!rep(vec![row(1.0, 0.01), row(1.5, 0.01)]).trend_holds());
        assert!(!rep(vec![row(1.0, 0.1), row(1.1, 0.1), row(1.2, 0.1)]).trend_holds());
    }

    #[test]
    fn study_matches_direct_accumulation() {
        let p = ExampleParams::default();
        let model = registry::linear_diffusion_interaction(p);
        let spec = registry::default_truncation(p);
        let noise = NoiseSpec::new(11, 16, 1, 2f64.powi(-8), 1.0).unwrap();
        let reference = SolverConfig::new(Scheme::TamedEmFull, 2f64.powi(-8), 1.0, 16);
        let tests = vec![SolverConfig::new(Scheme::TruncatedEmFull, 2f64.powi(-5), 1.0, 16)];
        let study = coupled_study(&model, &spec, &noise, &reference, &tests, 6, 4.0).unwrap();
        let mut acc = ErrorAccumulator::new();
        for path in 0..6 {
            let fam = simulate_coupled_family(&reference, &tests, &model, &spec, &noise, path).unwrap();
            acc.add_trajectories(&fam.reference, &fam.tests[0]).unwrap();
        }
        assert_eq!(study.tests[0].row.rms_error, acc.finish().unwrap().rms_error);
        assert!(study.tests[0].moment > 0.0);
    }

    #[test]
    fn timing_needs_three_repetitions() {
        let settings = TimingSettings {
            n_values: vec![4],
            delta: 0.5,
            steps: 1,
            repetitions: 2,
            seed: 0,
            min_sample: Duration::ZERO,
        };
        let cases = [TimingCase {
            label: "TEM".into(),
            scheme: Scheme::TruncatedEmFull,
            batch_rule: None,
        }];
        let model = McKeanModel::zero(1, 1);
        assert!(timing_benchmark(&model, &TruncationSpec::disabled(), &cases, &settings).is_err());
        let settings = TimingSettings { repetitions: 3, n_values: vec![4, 8], ..settings };
        let rows = timing_benchmark(&model, &TruncationSpec::disabled(), &cases, &settings).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[1].ratio.is_some());
    }

    fn samples(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, n)
    }

    proptest! {
        #[test]
        fn wasserstein_metric_properties(a in samples(12), b in samples(12), c in samples(12)) {
            let d = |x: &[f64], y: &[f64], p: f64| wasserstein_p_1d(x, y, p).unwrap();
            prop_assert_eq!(d(&a, &a, 2.0), 0.0);
            prop_assert!((d(&a, &b, 2.0) - d(&b, &a, 2.0)).abs() < 1e-12);
            prop_assert!(d(&a, &c, 2.0) <= d(&a, &b, 2.0) + d(&b, &c, 2.0) + 1e-10);
            prop_assert!(d(&a, &b, 1.0) <= d(&a, &b, 2.0) + 1e-10);
            prop_assert!(d(&a, &b, 2.0) <= d(&a, &b, 4.0) + 1e-10);
        }

        #[test]
        fn strong_error_relabel_invariant(a in samples(8), b in samples(8), shift in 0usize..8) {
            let rot = |v: &[f64]| { let mut w = v.to_vec(); w.rotate_left(shift); w };
            let e1 = strong_error(&[(s(&a), s(&b))]).unwrap().rms_error;
            let e2 = strong_error(&[(s(&rot(&a)), s(&rot(&b)))]).unwrap().rms_error;
            prop_assert!((e1 - e2).abs() <= 1e-12 * e1.max(1.0));
        }
    }
}
