use super::truncation::euclidean_norm;
use super::{McKeanModel, TruncationSpec};
use crate::error::{usage, Result};
use crate::solver::EnsembleState;

/// One radius of a growth audit.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthRow {
    pub radius: f64,
    pub phi: f64,
    /// Largest `|f(x)| + |A(mean k(x, ·))|` seen with `|x| ≤ radius`.
    pub max_drift: f64,
    /// Largest Frobenius norm of the diffusion seen with `|x| ≤ radius`.
    pub max_diffusion: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthAudit {
    pub rows: Vec<GrowthRow>,
}

impl GrowthAudit {
    pub fn any_violation(&self) -> bool {
        self.rows.iter().any(|r| r.violated)
    }
}

fn sample_points(dim: usize, radius: f64) -> Vec<Vec<f64>> {
    const STEPS: usize = 200;
    if dim == 1 {
        return (0..=STEPS)
            .map(|k| vec![radius * (2.0 * k as f64 / STEPS as f64 - 1.0)])
            .collect();
    }
    let mut directions: Vec<Vec<f64>> = Vec::new();
    for axis in 0..dim {
        for sign in [-1.0, 1.0] {
            let mut v = vec![0.0; dim];
            v[axis] = sign;
            directions.push(v);
        }
    }
    let diag = 1.0 / (dim as f64).sqrt();
    directions.push(vec![diag; dim]);
    directions.push(vec![-diag; dim]);
    let mut out = Vec::new();
    for dir in &directions {
        for k in 0..=STEPS / 4 {
            let s = radius * k as f64 / (STEPS / 4) as f64;
            out.push(dir.iter().map(|c| c * s).collect());
        }
    }
    out
}

/// Sampled check that `phi(u)` dominates the coefficient magnitudes on the
/// ball `|x| ≤ u`, with interaction terms evaluated against each probe
/// ensemble (all of its particles, weight `1/N`). Violations are reported,
/// not raised.
pub fn growth_domination_check(
    model: &McKeanModel,
    spec: &TruncationSpec,
    sample_radii: &[f64],
    probe_ensembles: &[EnsembleState],
) -> Result<GrowthAudit> {
    if sample_radii.iter().any(|&u| !(u > 0.0)) || sample_radii.windows(2).any(|w| w[1] <= w[0]) {
        return usage("sample radii must be positive and increasing");
    }
    let d = model.dims().state;
    let origin = [EnsembleState::new(vec![0.0; d], d)?];
    let probes = if probe_ensembles.is_empty() {
        &origin[..]
    } else {
        probe_ensembles
    };
    let r = model.dims().kernel;
    let mut rows = Vec::with_capacity(sample_radii.len());
    for &u in sample_radii {
        let mut max_drift: f64 = 0.0;
        let mut max_diffusion: f64 = 0.0;
        let mut base = vec![0.0; d];
        let mut acc = vec![0.0; r];
        let mut tmp = vec![0.0; r];
        let mut wrapped = vec![0.0; d];
        for x in sample_points(d, u) {
            model.drift_base(&x, &mut base);
            let base_norm = euclidean_norm(&base);
            for probe in probes {
                let n = probe.n_particles();
                model
                    .drift_kernel()
                    .pairwise_mean(&x, probe.positions(), d, 0..n, None, n as f64, &mut acc, &mut tmp);
                model.drift_wrapper().apply(&acc, &mut wrapped);
                max_drift = max_drift.max(base_norm + euclidean_norm(&wrapped));
                let b = model.diffusion(&x, probe, 0, false)?;
                max_diffusion = max_diffusion.max(euclidean_norm(&b));
            }
        }
        let phi = spec.phi(u);
        rows.push(GrowthRow {
            radius: u,
            phi,
            max_drift,
            max_diffusion,
            violated: max_drift > phi || max_diffusion > phi,
        });
    }
    Ok(GrowthAudit { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::registry::{linear_diffusion_interaction, ExampleParams};
    use std::sync::Arc;

    fn poly_phi(k: f64) -> TruncationSpec {
        TruncationSpec::polynomial(k, 2.0, 4.0 * k, 0.25, 1.0).unwrap()
    }

    #[test]
    fn example_one_is_dominated_by_ten_one_plus_u_squared() {
        let model = linear_diffusion_interaction(ExampleParams::default());
        let radii = [1.0, 2.0, 4.0];
        let probes: Vec<EnsembleState> = radii
            .iter()
            .map(|&u| EnsembleState::from_scalars(&[-u, -0.5 * u, 0.0, 0.3 * u, u]))
            .collect();
        let audit = growth_domination_check(&model, &poly_phi(10.0), &radii, &probes).unwrap();
        assert!(!audit.any_violation(), "{audit:?}");
        // f(4) alone is 2.5 * 4 * 3 = 30
        assert!(audit.rows[2].max_drift >= 30.0);
    }

    #[test]
    fn identity_phi_is_violated_at_four() {
        let model = linear_diffusion_interaction(ExampleParams::default());
        let phi = TruncationSpec::new(
            Arc::new(|u| u),
            Arc::new(|v| v),
            Arc::new(|d: f64| d.powf(-0.125)),
            1.0,
            0.25,
        )
        .unwrap();
        let probes = [EnsembleState::from_scalars(&[0.0, 4.0])];
        let audit = growth_domination_check(&model, &phi, &[4.0], &probes).unwrap();
        assert!(audit.any_violation());
        assert!(audit.rows[0].max_drift > 4.0);
    }

    #[test]
    fn zero_model_never_violates() {
        let model = McKeanModel::zero(2, 2);
        let audit = growth_domination_check(&model, &poly_phi(1e-3), &[0.5, 1.0, 3.0], &[]).unwrap();
        assert!(!audit.any_violation());
        assert!(audit.rows.iter().all(|r| r.max_drift == 0.0 && r.max_diffusion == 0.0));
    }

    #[test]
    fn radii_must_increase() {
        let model = McKeanModel::zero(1, 1);
        assert!(growth_domination_check(&model, &poly_phi(1.0), &[2.0, 1.0], &[]).is_err());
        assert!(growth_domination_check(&model, &poly_phi(1.0), &[0.0], &[]).is_err());
    }
}
