use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CdfError {
    #[error("empirical CDF of an empty sample")]
    EmptyInput,
    #[error("sample contains NaN")]
    NotANumber,
}

/// Right-continuous step function over a finite sample.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(values: &[f64]) -> Result<Self, CdfError> {
        if values.is_empty() {
            return Err(CdfError::EmptyInput);
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(CdfError::NotANumber);
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(EmpiricalCdf { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// F(x) = #{v <= x} / n.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    /// Smallest sample value v with F(v) >= zeta. `zeta <= 0` yields
    /// negative infinity, below every sample.
    pub fn quantile(&self, zeta: f64) -> f64 {
        if zeta <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let n = self.sorted.len() as f64;
        // first j with (j + 1) / n >= zeta, evaluated by division so that
        // e.g. 7/10 compares equal to 0.7
        let j = (0..self.sorted.len())
            .position(|j| (j + 1) as f64 / n >= zeta)
            .unwrap_or(self.sorted.len() - 1);
        self.sorted[j]
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }
}
