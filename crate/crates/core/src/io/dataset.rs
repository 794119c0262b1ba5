use thiserror::Error;

/// Relative tolerance on grid-step variation.
pub const GRID_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("t and u lengths differ ({t} vs {u})")]
    LengthMismatch { t: usize, u: usize },
    #[error("need at least {need} samples, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("time grid is not uniform at row {row} (step {step}, expected {expected})")]
    NonUniformGrid { row: usize, step: f64, expected: f64 },
    #[error("time grid must be strictly increasing")]
    NotIncreasing,
    #[error("non-finite sample at row {0}")]
    NonFinite(usize),
}

/// A uniformly sampled scalar series `u(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub dt: f64,
    /// Samples `0..train_end` form the training part.
    pub train_end: usize,
}

impl Dataset {
    /// Validates the grid and applies the default 75/25 time-ordered split.
    pub fn new(t: Vec<f64>, u: Vec<f64>) -> Result<Self, DataError> {
        if t.len() != u.len() {
            return Err(DataError::LengthMismatch { t: t.len(), u: u.len() });
        }
        if t.len() < 2 {
            return Err(DataError::TooShort { need: 2, got: t.len() });
        }
        if let Some(i) = t.iter().zip(&u).position(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(DataError::NonFinite(i));
        }
        let n = t.len();
        let dt = (t[n - 1] - t[0]) / (n - 1) as f64;
        if dt <= 0.0 {
            return Err(DataError::NotIncreasing);
        }
        for i in 1..n {
            let step = t[i] - t[i - 1];
            if (step - dt).abs() > GRID_TOLERANCE * dt {
                return Err(DataError::NonUniformGrid { row: i, step, expected: dt });
            }
        }
        let train_end = (n * 3) / 4;
        Ok(Dataset { t, u, dt, train_end })
    }

    /// Grid `t_i = i * dt`.
    pub fn from_series(u: Vec<f64>, dt: f64) -> Result<Self, DataError> {
        let t = (0..u.len()).map(|i| i as f64 * dt).collect();
        Dataset::new(t, u)
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Same grid, different signal.
    pub fn with_signal(&self, u: Vec<f64>) -> Dataset {
        assert_eq!(u.len(), self.u.len());
        Dataset { u, ..self.clone() }
    }

    /// Samples `start..end`; the split point is clamped into the slice.
    pub fn slice(&self, start: usize, end: usize) -> Dataset {
        Dataset {
            t: self.t[start..end].to_vec(),
            u: self.u[start..end].to_vec(),
            dt: self.dt,
            train_end: self.train_end.clamp(start, end) - start,
        }
    }

    pub fn train(&self) -> Dataset {
        self.slice(0, self.train_end)
    }

    pub fn require_len(&self, need: usize) -> Result<(), DataError> {
        if self.len() < need {
            Err(DataError::TooShort { need, got: self.len() })
        } else {
            Ok(())
        }
    }

    /// Population standard deviation of `u`.
    pub fn std(&self) -> f64 {
        std_dev(&self.u)
    }
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len().max(1) as f64
}

pub fn std_dev(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infers_step_and_split() {
        let ds = Dataset::from_series((0..40).map(|i| i as f64).collect(), 0.5).unwrap();
        assert_eq!(ds.dt, 0.5);
        assert_eq!(ds.train_end, 30);
        assert_eq!(ds.train().len(), 30);
    }

    #[test]
    fn rejects_irregular_grid() {
        let err = Dataset::new(vec![0.0, 1.0, 2.0, 4.0], vec![0.0; 4]).unwrap_err();
        assert!(matches!(err, DataError::NonUniformGrid { .. }));
    }
}
