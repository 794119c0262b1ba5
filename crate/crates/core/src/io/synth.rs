use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{DataError, Dataset, IoError};

/// `amplitude * sin(2π frequency t + phase)`, frequency in cycles per time unit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Component {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl Component {
    pub fn new(amplitude: f64, frequency: f64, phase: f64) -> Self {
        Component { amplitude, frequency, phase }
    }
}

/// Daily, tidal-like and synoptic-like periods on an hourly grid.
pub fn default_components() -> Vec<Component> {
    vec![
        Component::new(1.0, 1.0 / 24.0, 0.0),
        Component::new(0.4, 1.0 / 12.42, 1.0),
        Component::new(0.25, 1.0 / 240.0, 0.5),
    ]
}

pub fn synth_multiscale(
    seed: u64,
    components: &[Component],
    noise_std: f64,
    n: usize,
    dt: f64,
) -> Result<Dataset, IoError> {
    if n < 64 {
        return Err(DataError::TooShort { need: 64, got: n }.into());
    }
    let limit = 1.0 / (2.0 * dt);
    if let Some(c) = components.iter().find(|c| c.frequency.abs() >= limit) {
        return Err(IoError::Nyquist { frequency: c.frequency, limit });
    }
    let t: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
    let mut u: Vec<f64> = t
        .iter()
        .map(|&t| {
            components
                .iter()
                .map(|c| c.amplitude * (2.0 * PI * c.frequency * t + c.phase).sin())
                .sum()
        })
        .collect();
    if noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_std).map_err(|e| IoError::Io(std::io::Error::other(e)))?;
        for v in u.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(Dataset::new(t, u)?)
}
