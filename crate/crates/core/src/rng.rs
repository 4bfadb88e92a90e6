//! Counter-based randomness.
//!
//! Every random quantity is a pure function of a key: Brownian increments of
//! `(seed, path, particle, fine step)` and auxiliary streams of `(seed,
//! purpose, path, step)`. Keys map to 128-bit counters of the Philox4x32-10
//! bijection; each output block yields two standard normals through the
//! Box-Muller transform
//!
//! ```text
//! u1 = (bits(w0, w1) >> 11 + 1) · 2^-53   ∈ (0, 1]
//! u2 = (bits(w2, w3) >> 11) · 2^-53       ∈ [0, 1)
//! z0 = sqrt(-2 ln u1) cos(2π u2),  z1 = sqrt(-2 ln u1) sin(2π u2)
//! ```
//!
//! Noise component `j` of an increment uses block `j / 2` and takes `z0` or
//! `z1` by parity. Changing the transform changes every regression baseline.

use rand::RngCore;

use crate::error::{config, usage, Result};

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

/// Word 3 of the counter: Brownian blocks use values below this bit, streams
/// set it.
const STREAM_DOMAIN: u32 = 0x8000_0000;

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

#[inline(always)]
fn philox_round(ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let (hi0, lo0) = mulhilo(PHILOX_M0, ctr[0]);
    let (hi1, lo1) = mulhilo(PHILOX_M1, ctr[2]);
    [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0]
}

/// Philox4x32 with 10 rounds.
#[inline]
pub fn philox4x32(mut ctr: [u32; 4], mut key: [u32; 2]) -> [u32; 4] {
    ctr = philox_round(ctr, key);
    for _ in 1..10 {
        key[0] = key[0].wrapping_add(PHILOX_W0);
        key[1] = key[1].wrapping_add(PHILOX_W1);
        ctr = philox_round(ctr, key);
    }
    ctr
}

#[inline]
fn seed_key(seed: u64) -> [u32; 2] {
    [seed as u32, (seed >> 32) as u32]
}

/// Two independent standard normals from one Philox block.
#[inline]
pub fn box_muller(block: [u32; 4]) -> (f64, f64) {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    let a = (u64::from(block[0]) << 32) | u64::from(block[1]);
    let b = (u64::from(block[2]) << 32) | u64::from(block[3]);
    let u1 = ((a >> 11) + 1) as f64 * SCALE;
    let u2 = (b >> 11) as f64 * SCALE;
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    (r * c, r * s)
}

/// What an auxiliary stream is used for. Streams with different purposes
/// never share counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Partition,
    Initial,
}

impl Purpose {
    fn tag(self) -> u32 {
        match self {
            Purpose::Partition => 1,
            Purpose::Initial => 2,
        }
    }
}

/// Keys and grid of the Brownian noise shared by every solver in an
/// experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    master_seed: u64,
    n_particles: usize,
    dim_noise: usize,
    finest_delta: f64,
    horizon: f64,
    fine_steps: usize,
    sqrt_fine: f64,
}

/// `ratio` as an integer when it is one up to rounding.
pub(crate) fn integral_ratio(ratio: f64) -> Option<usize> {
    let rounded = ratio.round();
    if rounded >= 1.0 && (ratio - rounded).abs() <= 1e-9 * rounded {
        Some(rounded as usize)
    } else {
        None
    }
}

impl NoiseSpec {
    pub fn new(
        master_seed: u64,
        n_particles: usize,
        dim_noise: usize,
        finest_delta: f64,
        horizon: f64,
    ) -> Result<Self> {
        if n_particles == 0 || n_particles > u32::MAX as usize {
            return config(format!("particle count {n_particles} out of range"));
        }
        if dim_noise == 0 || dim_noise >= 2 * STREAM_DOMAIN as usize {
            return config(format!("noise dimension {dim_noise} out of range"));
        }
        if !(finest_delta > 0.0 && horizon > 0.0) {
            return config("finest step and horizon must be positive");
        }
        let fine_steps = match integral_ratio(horizon / finest_delta) {
            Some(s) if s <= u32::MAX as usize => s,
            _ => {
                return config(format!(
                    "horizon {horizon} is not an integer multiple of the finest step {finest_delta}"
                ))
            }
        };
        Ok(Self {
            master_seed,
            n_particles,
            dim_noise,
            finest_delta,
            horizon,
            fine_steps,
            sqrt_fine: finest_delta.sqrt(),
        })
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn dim_noise(&self) -> usize {
        self.dim_noise
    }

    pub fn finest_delta(&self) -> f64 {
        self.finest_delta
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn fine_steps(&self) -> usize {
        self.fine_steps
    }

    /// Number of fine steps in one step of size `delta`; errors unless
    /// `delta` is an integer multiple of the fine step dividing the horizon.
    pub fn multiple_of(&self, delta: f64) -> Result<usize> {
        let l = integral_ratio(delta / self.finest_delta).ok_or_else(|| {
            crate::Error::Config(format!(
                "step {delta} is not an integer multiple of the finest step {}",
                self.finest_delta
            ))
        })?;
        if self.fine_steps % l != 0 {
            return config(format!("step {delta} does not divide the horizon {}", self.horizon));
        }
        Ok(l)
    }

    /// Fine increment of one particle, written into `out` (`m'` values).
    /// Indices are not range-checked.
    #[inline]
    pub fn fill_increment(&self, path_id: u32, particle_id: u32, fine_step_index: u32, out: &mut [f64]) {
        let key = seed_key(self.master_seed);
        let mut j = 0;
        let mut block = 0u32;
        while j < out.len() {
            let (z0, z1) = box_muller(philox4x32([fine_step_index, particle_id, path_id, block], key));
            out[j] = z0 * self.sqrt_fine;
            if j + 1 < out.len() {
                out[j + 1] = z1 * self.sqrt_fine;
            }
            j += 2;
            block += 1;
        }
    }

    /// Fine increments of all particles at one step, `N × m'` row-major.
    pub fn fill_step(&self, path_id: u32, fine_step_index: u32, out: &mut [f64]) {
        let m = self.dim_noise;
        for (i, chunk) in out.chunks_exact_mut(m).enumerate() {
            self.fill_increment(path_id, i as u32, fine_step_index, chunk);
        }
    }

    fn check_indices(&self, particle_id: usize, fine_step_index: usize) -> Result<()> {
        if particle_id >= self.n_particles {
            return usage(format!("particle {particle_id} ≥ N = {}", self.n_particles));
        }
        if fine_step_index >= self.fine_steps {
            return usage(format!(
                "fine step {fine_step_index} ≥ {} steps on the grid",
                self.fine_steps
            ));
        }
        Ok(())
    }
}

/// `ΔW` of one particle over fine step `fine_step_index`: Gaussian with mean
/// zero and covariance `Δ_fine · I`, determined entirely by the key.
pub fn brownian_increment(
    spec: &NoiseSpec,
    path_id: u32,
    particle_id: usize,
    fine_step_index: usize,
) -> Result<Vec<f64>> {
    spec.check_indices(particle_id, fine_step_index)?;
    let mut out = vec![0.0; spec.dim_noise];
    spec.fill_increment(path_id, particle_id as u32, fine_step_index as u32, &mut out);
    Ok(out)
}

/// Increment over `[c·Δc, (c+1)·Δc)`: the `L = Δc / Δ_fine` fine increments
/// summed in ascending index order, starting from the first.
pub fn coarse_increment(
    spec: &NoiseSpec,
    path_id: u32,
    particle_id: usize,
    coarse_step_index: usize,
    coarse_delta: f64,
) -> Result<Vec<f64>> {
    let l = spec.multiple_of(coarse_delta)?;
    let first = coarse_step_index * l;
    spec.check_indices(particle_id, first + l - 1)?;
    let mut acc = vec![0.0; spec.dim_noise];
    let mut tmp = vec![0.0; spec.dim_noise];
    spec.fill_increment(path_id, particle_id as u32, first as u32, &mut acc);
    for k in first + 1..first + l {
        spec.fill_increment(path_id, particle_id as u32, k as u32, &mut tmp);
        for (a, t) in acc.iter_mut().zip(&tmp) {
            *a += t;
        }
    }
    Ok(acc)
}

/// A deterministic random stream keyed by `(seed, purpose, path, step)`.
#[derive(Debug, Clone)]
pub struct KeyedStream {
    key: [u32; 2],
    path: u32,
    step: u32,
    domain: u32,
    block: u32,
    buffer: [u32; 4],
    used: usize,
}

impl KeyedStream {
    fn refill(&mut self) {
        self.buffer = philox4x32([self.block, self.step, self.path, self.domain], self.key);
        self.block = self.block.wrapping_add(1);
        self.used = 0;
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        let block = [self.next_u32(), self.next_u32(), self.next_u32(), self.next_u32()];
        box_muller(block).0
    }
}

impl RngCore for KeyedStream {
    fn next_u32(&mut self) -> u32 {
        if self.used == 4 {
            self.refill();
        }
        let v = self.buffer[self.used];
        self.used += 1;
        v
    }

    fn next_u64(&mut self) -> u64 {
        let hi = u64::from(self.next_u32());
        let lo = u64::from(self.next_u32());
        (hi << 32) | lo
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(4) {
            let bytes = self.next_u32().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}

/// Independent stream for `purpose` at `(path_id, step_index)`. Its counters
/// never coincide with Brownian counters.
pub fn rng_stream(spec: &NoiseSpec, purpose: Purpose, path_id: u32, step_index: u32) -> KeyedStream {
    stream_from_seed(spec.master_seed, purpose, path_id, step_index)
}

pub fn stream_from_seed(seed: u64, purpose: Purpose, path_id: u32, step_index: u32) -> KeyedStream {
    KeyedStream {
        key: seed_key(seed),
        path: path_id,
        step: step_index,
        domain: STREAM_DOMAIN | purpose.tag(),
        block: 0,
        buffer: [0; 4],
        used: 4,
    }
}
