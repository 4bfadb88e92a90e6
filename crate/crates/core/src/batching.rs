//! Random batch partitions and the statistics of the batch deviation
//!
//! ```text
//! χ_i(x; k) = 1/(P-1) Σ_{j ∈ C(i), j ≠ i} k(x_i, x_j) - 1/(N-1) Σ_{j ≠ i} k(x_i, x_j)
//! ```
//!
//! together with exhaustive-enumeration checks of its mean, variance and of
//! the co-batch indicator products.

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::RngCore;

use crate::error::{config, usage, Result};
use crate::model::Kernel;
use crate::solver::EnsembleState;

/// Largest partition count [`enumerate_partitions`] will materialise.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// A division of `{0, …, N-1}` into `n = N / P` batches of size `P`.
///
/// Batches are stored canonically: members ascending inside a batch and
/// batches ordered by their lowest member.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BatchPartition {
    n_particles: usize,
    batch_size: usize,
    assignment: Vec<u32>,
    members: Vec<u32>,
}

fn check_sizes(n: usize, p: usize) -> Result<()> {
    if p < 2 {
        return config(format!("batch size {p} must be at least 2"));
    }
    if n == 0 || n % p != 0 {
        return config(format!("batch size {p} does not divide N = {n}"));
    }
    Ok(())
}

impl BatchPartition {
    /// Builds the canonical partition from a particle → batch map whose
    /// labels may be arbitrary.
    pub fn from_assignment(n_particles: usize, batch_size: usize, labels: &[usize]) -> Result<Self> {
        check_sizes(n_particles, batch_size)?;
        if labels.len() != n_particles {
            return config("assignment length differs from N");
        }
        let n_batches = n_particles / batch_size;
        let mut relabel = vec![u32::MAX; labels.iter().copied().max().unwrap_or(0) + 1];
        let mut next = 0u32;
        let mut assignment = Vec::with_capacity(n_particles);
        for &l in labels {
            if relabel[l] == u32::MAX {
                relabel[l] = next;
                next += 1;
            }
            assignment.push(relabel[l]);
        }
        if next as usize != n_batches {
            return config(format!("assignment uses {next} batches, expected {n_batches}"));
        }
        Self::from_canonical_assignment(n_particles, batch_size, assignment)
    }

    fn from_canonical_assignment(n_particles: usize, batch_size: usize, assignment: Vec<u32>) -> Result<Self> {
        let n_batches = n_particles / batch_size;
        let mut fill = vec![0usize; n_batches];
        let mut members = vec![0u32; n_particles];
        for (i, &b) in assignment.iter().enumerate() {
            let b = b as usize;
            if fill[b] == batch_size {
                return config(format!("batch {b} has more than {batch_size} members"));
            }
            members[b * batch_size + fill[b]] = i as u32;
            fill[b] += 1;
        }
        Ok(Self {
            n_particles,
            batch_size,
            assignment,
            members,
        })
    }

    /// The single batch holding everyone.
    pub fn full(n_particles: usize) -> Result<Self> {
        check_sizes(n_particles, n_particles)?;
        Self::from_canonical_assignment(n_particles, n_particles, vec![0; n_particles])
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn n_batches(&self) -> usize {
        self.n_particles / self.batch_size
    }

    /// `q(i)`.
    #[inline]
    pub fn batch_of(&self, i: usize) -> usize {
        self.assignment[i] as usize
    }

    /// Members of batch `q`, ascending.
    #[inline]
    pub fn batch(&self, q: usize) -> &[u32] {
        &self.members[q * self.batch_size..(q + 1) * self.batch_size]
    }

    pub fn batches(&self) -> impl Iterator<Item = &[u32]> {
        self.members.chunks_exact(self.batch_size)
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }
}

/// Uniformly random partition: shuffle, chunk into batches, canonicalise.
pub fn sample_partition<R: RngCore + ?Sized>(n: usize, p: usize, stream: &mut R) -> Result<BatchPartition> {
    check_sizes(n, p)?;
    let mut perm: Vec<u32> = (0..n as u32).collect();
    perm.shuffle(stream);
    let mut chunk_of = vec![0u32; n];
    for (pos, &i) in perm.iter().enumerate() {
        chunk_of[i as usize] = (pos / p) as u32;
    }
    // relabel chunks by first appearance in ascending particle order
    let mut relabel = vec![u32::MAX; n / p];
    let mut next = 0u32;
    for c in chunk_of.iter_mut() {
        let slot = &mut relabel[*c as usize];
        if *slot == u32::MAX {
            *slot = next;
            next += 1;
        }
        *c = *slot;
    }
    BatchPartition::from_canonical_assignment(n, p, chunk_of)
}

/// `M(n) = (nP)! / ((P!)^n n!)`, saturating at `u128::MAX`.
pub fn partition_count(n: usize, p: usize) -> Result<u128> {
    check_sizes(n, p)?;
    // product over batches of C(remaining - 1, P - 1)
    let mut total: u128 = 1;
    let mut remaining = n;
    while remaining > 0 {
        total = total.saturating_mul(binomial(remaining - 1, p - 1));
        remaining -= p;
    }
    Ok(total)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for t in 0..k {
        acc = match acc.checked_mul((n - t) as u128) {
            Some(v) => v / (t as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Every partition of `N` labelled particles into batches of size `P`,
/// each exactly once, in canonical form.
pub fn enumerate_partitions(n: usize, p: usize) -> Result<Vec<BatchPartition>> {
    let count = partition_count(n, p)?;
    if count > ENUMERATION_LIMIT {
        return usage(format!(
            "{count} partitions of {n} particles into batches of {p} exceed the enumeration limit"
        ));
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut assignment = vec![u32::MAX; n];
    enumerate_rec(n, p, 0, &mut assignment, &mut out);
    debug_assert_eq!(out.len() as u128, count);
    Ok(out)
}

fn enumerate_rec(n: usize, p: usize, batch: u32, assignment: &mut Vec<u32>, out: &mut Vec<BatchPartition>) {
    let Some(lead) = assignment.iter().position(|&a| a == u32::MAX) else {
        out.push(
            BatchPartition::from_canonical_assignment(n, p, assignment.clone())
                .expect("enumerated assignment is balanced"),
        );
        return;
    };
    assignment[lead] = batch;
    let free: Vec<usize> = (lead + 1..n).filter(|&j| assignment[j] == u32::MAX).collect();
    let mut choice: Vec<usize> = (0..p - 1).collect();
    loop {
        for &c in &choice {
            assignment[free[c]] = batch;
        }
        enumerate_rec(n, p, batch + 1, assignment, out);
        for &c in &choice {
            assignment[free[c]] = u32::MAX;
        }
        if !next_combination(&mut choice, free.len()) {
            break;
        }
    }
    assignment[lead] = u32::MAX;
}

/// Advances `c` (strictly increasing indices into `0..len`) to the next
/// combination in lexicographic order.
fn next_combination(c: &mut [usize], len: usize) -> bool {
    let k = c.len();
    if k == 0 {
        return false;
    }
    let mut t = k;
    while t > 0 {
        t -= 1;
        if c[t] < len - k + t {
            c[t] += 1;
            for u in t + 1..k {
                c[u] = c[u - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn kernel_values(config: &EnsembleState, kernel: &Kernel, i: usize) -> Vec<Vec<f64>> {
    let xi = config.particle(i);
    (0..config.n_particles())
        .map(|j| {
            let mut out = vec![0.0; kernel.out_dim()];
            if j != i {
                kernel.eval(xi, config.particle(j), &mut out);
            }
            out
        })
        .collect()
}

fn chi_from_values(values: &[Vec<f64>], partition: &BatchPartition, i: usize) -> Vec<f64> {
    let n = partition.n_particles();
    let p = partition.batch_size();
    let r = values[0].len();
    let mut batch = vec![0.0; r];
    for &j in partition.batch(partition.batch_of(i)) {
        if j as usize != i {
            for (b, v) in batch.iter_mut().zip(&values[j as usize]) {
                *b += v;
            }
        }
    }
    let mut full = vec![0.0; r];
    for (j, v) in values.iter().enumerate() {
        if j != i {
            for (f, x) in full.iter_mut().zip(v) {
                *f += x;
            }
        }
    }
    batch
        .iter()
        .zip(&full)
        .map(|(b, f)| b / (p - 1) as f64 - f / (n - 1) as f64)
        .collect()
}

/// `χ_i` for the given partition.
pub fn chi_deviation(
    config: &EnsembleState,
    kernel: &Kernel,
    partition: &BatchPartition,
    i: usize,
) -> Result<Vec<f64>> {
    if config.n_particles() != partition.n_particles() {
        return usage("partition and configuration disagree on N");
    }
    if config.n_particles() < 2 || i >= config.n_particles() {
        return usage("chi needs N ≥ 2 and a valid particle index");
    }
    Ok(chi_from_values(&kernel_values(config, kernel, i), partition, i))
}

/// `Λ_i = 1/(N-2) Σ_{j≠i} |k(x_i, x_j) - mean_{j'≠i} k(x_i, x_j')|²`.
pub fn lambda_statistic(config: &EnsembleState, kernel: &Kernel, i: usize) -> Result<f64> {
    let n = config.n_particles();
    if n < 3 {
        return usage(format!("Λ needs N ≥ 3, got {n}"));
    }
    if i >= n {
        return usage(format!("particle index {i} out of range"));
    }
    let values = kernel_values(config, kernel, i);
    let r = kernel.out_dim();
    let mut mean = vec![0.0; r];
    for (j, v) in values.iter().enumerate() {
        if j != i {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
    }
    for m in mean.iter_mut() {
        *m /= (n - 1) as f64;
    }
    let total: f64 = values
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, v)| v.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum();
    Ok(total / (n - 2) as f64)
}

/// Exact moments of `χ_i` over all partitions against the closed forms
/// `E χ_i = 0` and `Var χ_i = (1/(P-1) - 1/(N-1)) Λ_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiMomentReport {
    pub n_partitions: usize,
    /// Norm of the enumerated mean.
    pub mean_error: f64,
    /// Enumerated `E|χ_i - E χ_i|²`.
    pub variance_lhs: f64,
    /// `(1/(P-1) - 1/(N-1)) Λ_i`.
    pub variance_rhs: f64,
}

impl ChiMomentReport {
    pub fn variance_error(&self) -> f64 {
        (self.variance_lhs - self.variance_rhs).abs()
    }
}

pub fn verify_chi_moments(config: &EnsembleState, kernel: &Kernel, i: usize, p: usize) -> Result<ChiMomentReport> {
    verify_chi_moments_with(config, kernel, i, p, |n, p, lambda| {
        (1.0 / (p - 1) as f64 - 1.0 / (n - 1) as f64) * lambda
    })
}

/// As [`verify_chi_moments`] with a caller-supplied variance formula
/// `(N, P, Λ_i) ↦ Var χ_i`.
pub fn verify_chi_moments_with(
    config: &EnsembleState,
    kernel: &Kernel,
    i: usize,
    p: usize,
    variance_formula: impl Fn(usize, usize, f64) -> f64,
) -> Result<ChiMomentReport> {
    let n = config.n_particles();
    if i >= n {
        return usage(format!("particle index {i} out of range"));
    }
    let partitions = enumerate_partitions(n, p)?;
    let values = kernel_values(config, kernel, i);
    let chis: Vec<Vec<f64>> = partitions.iter().map(|part| chi_from_values(&values, part, i)).collect();
    let count = chis.len() as f64;
    let r = kernel.out_dim();
    let mut mean = vec![0.0; r];
    for c in &chis {
        for (m, v) in mean.iter_mut().zip(c) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= count;
    }
    let variance_lhs = chis
        .iter()
        .map(|c| c.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum::<f64>()
        / count;
    let lambda = if n >= 3 { lambda_statistic(config, kernel, i)? } else { 0.0 };
    let variance_rhs = if p == n { 0.0 } else { variance_formula(n, p, lambda) };
    Ok(ChiMomentReport {
        n_partitions: partitions.len(),
        mean_error: mean.iter().map(|m| m * m).sum::<f64>().sqrt(),
        variance_lhs,
        variance_rhs,
    })
}

/// `E Π_{j'=1..q} I_{i j_j'} = Π_{j'=1..q} (P - j') / (N - j')`.
pub fn indicator_product_expectation(n: usize, p: usize, q: usize) -> Result<f64> {
    if q >= n {
        return usage(format!("q = {q} must be below N = {n}"));
    }
    if p <= q {
        return Ok(0.0);
    }
    Ok((1..=q).map(|j| (p - j) as f64 / (n - j) as f64).product())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorCheck {
    pub formula: f64,
    /// Fraction of all partitions in which particles `1..=q` share particle
    /// `0`'s batch.
    pub enumerated: f64,
    pub favourable: usize,
    pub total: usize,
}

pub fn verify_indicator_product(n: usize, p: usize, q: usize) -> Result<IndicatorCheck> {
    let formula = indicator_product_expectation(n, p, q)?;
    let partitions = enumerate_partitions(n, p)?;
    let favourable = partitions
        .iter()
        .filter(|part| (1..=q).all(|j| part.batch_of(j) == part.batch_of(0)))
        .count();
    Ok(IndicatorCheck {
        formula,
        enumerated: favourable as f64 / partitions.len() as f64,
        favourable,
        total: partitions.len(),
    })
}

/// `Q(x; k) = M1⁴ + M2 M1² + M2² + M3 M1 + M4` with
/// `M_q = 1/N Σ_j |k(x_i, x_j)|^q`.
pub fn fourth_moment_scale(config: &EnsembleState, kernel: &Kernel, i: usize) -> f64 {
    let values = kernel_values(config, kernel, i);
    let n = values.len() as f64;
    let norms: Vec<f64> = values.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let m = |q: i32| norms.iter().map(|v| v.powi(q)).sum::<f64>() / n;
    let (m1, m2, m3, m4) = (m(1), m(2), m(3), m(4));
    m1.powi(4) + m2 * m1 * m1 + m2 * m2 + m3 * m1 + m4
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourthMomentRow {
    pub batch_size: usize,
    pub fourth_moment: f64,
    /// `E|χ_i|⁴ · P² / Q`.
    pub normalized: f64,
    /// Previous row's fourth moment over this one's.
    pub decrease_factor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourthMomentReport {
    pub q_scale: f64,
    pub rows: Vec<FourthMomentRow>,
}

/// Monte Carlo estimate of `E|χ_i|⁴` for each batch size.
///
/// Under a uniform partition, particle `i`'s batchmates are a uniform
/// `(P-1)`-subset of the other particles, so each sample draws that subset
/// directly instead of a full partition.
pub fn chi_fourth_moment_scaling<R: RngCore + ?Sized>(
    config: &EnsembleState,
    kernel: &Kernel,
    i: usize,
    batch_sizes: &[usize],
    samples: usize,
    stream: &mut R,
) -> Result<FourthMomentReport> {
    let n = config.n_particles();
    if i >= n || samples == 0 {
        return usage("need a valid particle index and at least one sample");
    }
    let values = kernel_values(config, kernel, i);
    let r = kernel.out_dim();
    let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let mut full = vec![0.0; r];
    for &j in &others {
        for (f, v) in full.iter_mut().zip(&values[j]) {
            *f += v;
        }
    }
    for f in full.iter_mut() {
        *f /= (n - 1) as f64;
    }
    let q_scale = fourth_moment_scale(config, kernel, i);
    let mut rows: Vec<FourthMomentRow> = Vec::with_capacity(batch_sizes.len());
    let mut batch = vec![0.0; r];
    for &p in batch_sizes {
        check_sizes(n, p)?;
        let mut acc = 0.0;
        if p < n {
            for _ in 0..samples {
                batch.fill(0.0);
                for k in index::sample(stream, n - 1, p - 1).iter() {
                    for (b, v) in batch.iter_mut().zip(&values[others[k]]) {
                        *b += v;
                    }
                }
                let sq: f64 = batch
                    .iter()
                    .zip(&full)
                    .map(|(b, f)| (b / (p - 1) as f64 - f).powi(2))
                    .sum();
                acc += sq * sq;
            }
        }
        let fourth_moment = acc / samples as f64;
        let decrease_factor = rows.last().map(|prev| prev.fourth_moment / fourth_moment);
        rows.push(FourthMomentRow {
            batch_size: p,
            fourth_moment,
            normalized: if q_scale > 0.0 {
                fourth_moment * (p * p) as f64 / q_scale
            } else {
                0.0
            },
            decrease_factor,
        });
    }
    Ok(FourthMomentReport { q_scale, rows })
}
