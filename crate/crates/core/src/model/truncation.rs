use std::fmt;
use std::sync::Arc;

use crate::error::{config, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The truncation machinery: a growth bound `phi` with its inverse, the
/// radius driver `h` and the largest admissible step `delta_star`.
///
/// The truncation radius at step size `delta` is `phi_inverse(h(delta))`,
/// clamped at zero.
#[derive(Clone)]
pub struct TruncationSpec {
    phi: ScalarFn,
    phi_inverse: ScalarFn,
    h: ScalarFn,
    delta_star: f64,
    epsilon: f64,
    disabled: bool,
}

impl fmt::Debug for TruncationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TruncationSpec")
            .field("delta_star", &self.delta_star)
            .field("epsilon", &self.epsilon)
            .field("disabled", &self.disabled)
            .finish_non_exhaustive()
    }
}

impl TruncationSpec {
    pub fn new(
        phi: ScalarFn,
        phi_inverse: ScalarFn,
        h: ScalarFn,
        delta_star: f64,
        epsilon: f64,
    ) -> Result<Self> {
        if !(delta_star > 0.0 && delta_star <= 1.0) {
            return config(format!("delta_star must lie in (0, 1], got {delta_star}"));
        }
        if !(epsilon > 0.0 && epsilon <= 0.25) {
            return config(format!("epsilon must lie in (0, 1/4], got {epsilon}"));
        }
        Ok(Self {
            phi,
            phi_inverse,
            h,
            delta_star,
            epsilon,
            disabled: false,
        })
    }

    /// `phi(u) = k (1 + u)^exponent` with its analytic inverse and
    /// `h(delta) = h_scale * delta^(-epsilon/2)`.
    ///
    /// Choosing `h_scale = phi(1)` together with `delta_star = 1` gives the
    /// smallest scale satisfying `h(delta_star) >= phi(1)`.
    pub fn polynomial(
        k: f64,
        exponent: f64,
        h_scale: f64,
        epsilon: f64,
        delta_star: f64,
    ) -> Result<Self> {
        if !(k > 0.0 && exponent > 0.0 && h_scale > 0.0) {
            return config(format!(
                "polynomial truncation needs k, exponent, h_scale > 0 (got {k}, {exponent}, {h_scale})"
            ));
        }
        let phi: ScalarFn = Arc::new(move |u: f64| k * (1.0 + u).powf(exponent));
        let phi_inverse: ScalarFn = Arc::new(move |v: f64| (v / k).powf(1.0 / exponent) - 1.0);
        let h: ScalarFn = Arc::new(move |delta: f64| h_scale * delta.powf(-epsilon / 2.0));
        Self::new(phi, phi_inverse, h, delta_star, epsilon)
    }

    /// A spec whose radius is infinite at every step size, so the truncated
    /// schemes reduce to their plain counterparts.
    pub fn disabled() -> Self {
        Self {
            phi: Arc::new(|u| u),
            phi_inverse: Arc::new(|v| v),
            h: Arc::new(|_| f64::INFINITY),
            delta_star: 1.0,
            epsilon: 0.25,
            disabled: true,
        }
    }

    pub fn phi(&self, u: f64) -> f64 {
        (self.phi)(u)
    }

    pub fn phi_inverse(&self, v: f64) -> f64 {
        (self.phi_inverse)(v)
    }

    pub fn h(&self, delta: f64) -> f64 {
        (self.h)(delta)
    }

    pub fn delta_star(&self) -> f64 {
        self.delta_star
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn is_disabled(&self) -> bool {
        self.disabled
    }

    pub fn radius(&self, delta: f64) -> Result<f64> {
        truncation_radius(self, delta)
    }

    /// Sampled audit of the structural requirements on `(phi, phi_inverse,
    /// h, delta_star)`. Returns a description of every violated property.
    pub fn check_invariants(&self) -> Vec<String> {
        let mut violations = Vec::new();
        if self.disabled {
            return violations;
        }
        let phi0 = self.phi(0.0);
        for k in 0..40 {
            let v = phi0 + 0.37 * f64::from(k) * (1.0 + f64::from(k));
            let back = self.phi(self.phi_inverse(v));
            if (back - v).abs() > 1e-10 * v.abs().max(1.0) {
                violations.push(format!("phi(phi_inverse({v})) = {back}"));
            }
        }
        if self.h(self.delta_star) < self.phi(1.0) {
            violations.push(format!(
                "h(delta_star) = {} is below phi(1) = {}",
                self.h(self.delta_star),
                self.phi(1.0)
            ));
        }
        let grid: Vec<f64> = (0..=40)
            .map(|k| self.delta_star * 2f64.powi(-k))
            .collect();
        for pair in grid.windows(2) {
            // pair[1] < pair[0]
            if !(self.h(pair[1]) > self.h(pair[0])) {
                violations.push(format!("h is not strictly decreasing between {} and {}", pair[1], pair[0]));
            }
        }
        let scaled: Vec<f64> = grid.iter().map(|&d| d.powf(0.25) * self.h(d)).collect();
        let head = scaled[..20].iter().cloned().fold(0.0, f64::max);
        let tail = scaled[20..].iter().cloned().fold(0.0, f64::max);
        if !tail.is_finite() || tail > head * (1.0 + 1e-9) {
            violations.push(format!(
                "delta^(1/4) h(delta) grows toward zero (max {tail} on fine grid vs {head} on coarse grid)"
            ));
        }
        violations
    }
}

/// Radius `phi_inverse(h(delta))` for step size `delta`, clamped to zero when
/// the inverse is negative.
pub fn truncation_radius(spec: &TruncationSpec, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= spec.delta_star) {
        return config(format!(
            "step size {delta} outside (0, {}]",
            spec.delta_star
        ));
    }
    if spec.disabled {
        return Ok(f64::INFINITY);
    }
    let r = spec.phi_inverse(spec.h(delta));
    if r.is_nan() {
        return config(format!("phi_inverse(h({delta})) is NaN"));
    }
    Ok(r.max(0.0))
}

/// `delta^(-epsilon/2)`.
pub fn h_default(delta: f64, epsilon: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return config(format!("step size {delta} outside (0, 1]"));
    }
    if !(epsilon > 0.0 && epsilon <= 0.25) {
        return config(format!("epsilon {epsilon} outside (0, 1/4]"));
    }
    Ok(delta.powf(-epsilon / 2.0))
}

/// Projects `x` onto the closed ball of the given radius.
pub fn truncate_state(x: &[f64], radius: f64) -> Vec<f64> {
    let mut out = x.to_vec();
    truncate_in_place(&mut out, radius);
    out
}

/// In-place projection; leaves `x` untouched (bit-for-bit) when it lies
/// inside the ball. Returns `true` when `x` was moved.
pub fn truncate_in_place(x: &mut [f64], radius: f64) -> bool {
    if let [v] = x {
        if v.abs() <= radius {
            return false;
        }
        *v = radius.copysign(*v);
        return true;
    }
    let norm = euclidean_norm(x);
    if norm <= radius {
        return false;
    }
    let mut scale = radius / norm;
    let original = x.to_vec();
    loop {
        for (o, &v) in x.iter_mut().zip(&original) {
            *o = v * scale;
        }
        if euclidean_norm(x) <= radius || scale == 0.0 {
            break;
        }
        scale = scale.next_down();
    }
    true
}

/// `v / (1 + delta |v|)`.
pub fn tamed_drift(raw_drift_value: &[f64], delta: f64) -> Vec<f64> {
    let mut out = raw_drift_value.to_vec();
    tame_in_place(&mut out, delta);
    out
}

pub fn tame_in_place(v: &mut [f64], delta: f64) {
    let factor = 1.0 / (1.0 + delta * euclidean_norm(v));
    for c in v.iter_mut() {
        *c *= factor;
    }
}

pub(crate) fn euclidean_norm(x: &[f64]) -> f64 {
    match x {
        [v] => v.abs(),
        _ => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
    }
}
