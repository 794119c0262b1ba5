//! Numerical time derivatives for equation discovery.

use super::AtomError;

/// Gaussian smoothing width in grid steps applied before differencing.
pub const DEFAULT_SMOOTHING: f64 = 3.0;

/// Second-order accurate differences: central in the interior, one-sided
/// three/four-point stencils at the ends. Output has the input length.
pub fn finite_diff(u: &[f64], dt: f64, order: u8) -> Result<Vec<f64>, AtomError> {
    if !(dt > 0.0) {
        return Err(AtomError::Step(dt));
    }
    let n = u.len();
    match order {
        0 => Ok(u.to_vec()),
        1 => {
            if n < 3 {
                return Err(AtomError::TooShort { need: 3, got: n });
            }
            let mut d = vec![0.0; n];
            for i in 1..n - 1 {
                d[i] = (u[i + 1] - u[i - 1]) / (2.0 * dt);
            }
            d[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * dt);
            d[n - 1] = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * dt);
            Ok(d)
        }
        2 => {
            if n < 4 {
                return Err(AtomError::TooShort { need: 4, got: n });
            }
            let h2 = dt * dt;
            let mut d = vec![0.0; n];
            for i in 1..n - 1 {
                d[i] = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / h2;
            }
            d[0] = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / h2;
            d[n - 1] = (2.0 * u[n - 1] - 5.0 * u[n - 2] + 4.0 * u[n - 3] - u[n - 4]) / h2;
            Ok(d)
        }
        o => Err(AtomError::Other(format!("derivative order {o} not supported"))),
    }
}

/// Gaussian kernel smoothing, `sigma` in grid steps, truncated at 4 sigma
/// and renormalised near the ends. `sigma <= 0` returns the input.
pub fn gaussian_smooth(u: &[f64], sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 || u.is_empty() {
        return u.to_vec();
    }
    let half = (4.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-half..=half)
        .map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp())
        .collect();
    let n = u.len() as isize;
    (0..n)
        .map(|i| {
            let (mut acc, mut wsum) = (0.0, 0.0);
            for (j, w) in (-half..=half).zip(&kernel) {
                let p = i + j;
                if (0..n).contains(&p) {
                    acc += w * u[p as usize];
                    wsum += w;
                }
            }
            acc / wsum
        })
        .collect()
}

/// Samples dropped at each end before fitting, where the smoothing window
/// is truncated.
pub fn edge_margin(sigma: f64) -> usize {
    if sigma <= 0.0 {
        1
    } else {
        (4.0 * sigma).ceil() as usize + 1
    }
}

/// `d^order u / dt^order` after smoothing; order 0 is the raw series.
pub fn derivative(u: &[f64], dt: f64, order: u8, sigma: f64) -> Result<Vec<f64>, AtomError> {
    if order == 0 {
        return Ok(u.to_vec());
    }
    finite_diff(&gaussian_smooth(u, sigma), dt, order)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_quadratics() {
        let dt = 0.1;
        let t: Vec<f64> = (0..30).map(|i| i as f64 * dt).collect();
        let u: Vec<f64> = t.iter().map(|t| t * t).collect();
        let d1 = finite_diff(&u, dt, 1).unwrap();
        let d2 = finite_diff(&u, dt, 2).unwrap();
        for i in 0..t.len() {
            assert!((d1[i] - 2.0 * t[i]).abs() < 1e-9, "{i}");
            assert!((d2[i] - 2.0).abs() < 1e-7, "{i}");
        }
    }

    #[test]
    fn sine_truncation_error() {
        let dt = 0.01;
        let t: Vec<f64> = (0..700).map(|i| i as f64 * dt).collect();
        let u: Vec<f64> = t.iter().map(|t| t.sin()).collect();
        let d = finite_diff(&u, dt, 1).unwrap();
        let worst = (1..t.len() - 1).map(|i| (d[i] - t[i].cos()).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-4, "{worst}");
    }

    #[test]
    fn constant_has_zero_slope() {
        assert!(finite_diff(&[3.0; 10], 0.5, 1).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_bad_step() {
        assert_eq!(finite_diff(&[1.0; 5], 0.0, 1).unwrap_err(), AtomError::Step(0.0));
    }

    #[test]
    fn smoothing_keeps_constants_and_lines() {
        let s = gaussian_smooth(&[2.0; 40], 3.0);
        assert!(s.iter().all(|v| (v - 2.0).abs() < 1e-12));
        let line: Vec<f64> = (0..60).map(|i| i as f64).collect();
        let s = gaussian_smooth(&line, 2.0);
        for i in 10..50 {
            assert!((s[i] - line[i]).abs() < 1e-9);
        }
    }
}
