use crate::error::{Error, Result};

/// Positions of `N` particles in `R^d` at time index `m`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    positions: Vec<f64>,
    dim: usize,
    time_index: usize,
}

impl EnsembleState {
    pub fn new(positions: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || positions.is_empty() || positions.len() % dim != 0 {
            return Err(Error::Model(format!(
                "{} coordinates cannot be split into particles of dimension {dim}",
                positions.len()
            )));
        }
        Ok(Self {
            positions,
            dim,
            time_index: 0,
        })
    }

    /// `n` copies of the point `x0`.
    pub fn uniform(n: usize, x0: &[f64]) -> Self {
        assert!(n > 0 && !x0.is_empty());
        let positions = x0.iter().copied().cycle().take(n * x0.len()).collect();
        Self {
            positions,
            dim: x0.len(),
            time_index: 0,
        }
    }

    pub fn from_scalars(values: &[f64]) -> Self {
        Self::new(values.to_vec(), 1).expect("non-empty scalar ensemble")
    }

    pub fn with_time_index(mut self, m: usize) -> Self {
        self.time_index = m;
        self
    }

    pub fn n_particles(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn time_index(&self) -> usize {
        self.time_index
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn positions_mut(&mut self) -> &mut [f64] {
        &mut self.positions
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.positions.iter().all(|v| v.is_finite())
    }


    pub fn into_positions(self) -> Vec<f64> {
        self.positions
    }
}
