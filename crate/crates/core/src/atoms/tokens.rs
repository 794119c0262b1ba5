//! Parametric tokens and their fitting.
//!
//! A token is `amplitude * shape(t; nonlinear params)`. Fitting searches the
//! nonlinear parameters derivative-free (spectral start for `sin`, coarse
//! scans otherwise, then coordinate-wise golden-section passes) and solves
//! the amplitude (and, for `sin`, the phase) by linear least squares.
//!
//! An optional modulation series multiplies the token during fitting. It is
//! how a factor inside a product is fitted with its siblings held fixed.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{AtomError, AtomInstance, AtomKind};

const GOLDEN_TOL: f64 = 1e-8;
const SWEEPS: usize = 3;
const MIN_FIT_LEN: usize = 8;

pub fn token_value(atom: &AtomInstance, t: f64) -> f64 {
    let p = &atom.params;
    match atom.kind {
        AtomKind::Sin => p[2] * (p[0] * t + p[1]).sin(),
        AtomKind::Poly => p[1] * t.powf(p[0]),
        AtomKind::Pulse => {
            let z = (t - p[0]) / p[1];
            p[2] * (-z * z).exp()
        }
        _ => f64::NAN,
    }
}

pub fn check_params(atom: &AtomInstance) -> Result<(), AtomError> {
    let (need, detail) = match atom.kind {
        AtomKind::Sin => (3, "sin needs (frequency, phase, amplitude)"),
        AtomKind::Poly => (2, "poly needs (exponent, coefficient)"),
        AtomKind::Pulse => (3, "pulse needs (center, width, amplitude)"),
        _ => return Ok(()),
    };
    if atom.params.is_empty() {
        return Err(AtomError::NotFitted(atom.kind));
    }
    let bad = |d: &str| AtomError::InvalidParams { kind: atom.kind, detail: d.to_string() };
    if atom.params.len() != need {
        return Err(bad(detail));
    }
    match atom.kind {
        AtomKind::Sin if atom.params[0] < 0.0 => Err(bad("frequency must be non-negative")),
        AtomKind::Pulse if atom.params[1] <= 0.0 => Err(bad("width must be positive")),
        _ => Ok(()),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TokenFit {
    pub atom: AtomInstance,
    pub rmse: f64,
    /// The target had zero variance; the amplitude was set to zero.
    pub degenerate: bool,
}

/// Golden-section minimisation on `[lo, hi]`.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a) > tol * (1.0 + c.abs().max(d.abs())) {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Weighted sums needed for the sin/cos least-squares problem.
struct Trig {
    ss: f64,
    sc: f64,
    cc: f64,
    sy: f64,
    cy: f64,
}

struct Problem<'a> {
    t: &'a [f64],
    y: &'a [f64],
    g: Option<&'a [f64]>,
    yy: f64,
    uniform_dt: Option<f64>,
}

impl<'a> Problem<'a> {
    fn weight(&self, i: usize) -> f64 {
        self.g.map(|g| g[i]).unwrap_or(1.0)
    }

    fn trig_sums(&self, omega: f64) -> Trig {
        let mut acc = Trig { ss: 0.0, sc: 0.0, cc: 0.0, sy: 0.0, cy: 0.0 };
        let mut push = |i: usize, s: f64, c: f64| {
            let w = self.weight(i);
            let (s, c) = (w * s, w * c);
            acc.ss += s * s;
            acc.sc += s * c;
            acc.cc += c * c;
            acc.sy += s * self.y[i];
            acc.cy += c * self.y[i];
        };
        match self.uniform_dt {
            Some(dt) => {
                // rotate (sin, cos) by omega*dt, re-anchoring to bound drift
                let (rs, rc) = (omega * dt).sin_cos();
                let (mut s, mut c) = (0.0, 0.0);
                for i in 0..self.t.len() {
                    if i % 128 == 0 {
                        (s, c) = (omega * self.t[i]).sin_cos();
                    }
                    push(i, s, c);
                    (s, c) = (s * rc + c * rs, c * rc - s * rs);
                }
            }
            None => {
                for (i, &t) in self.t.iter().enumerate() {
                    let (s, c) = (omega * t).sin_cos();
                    push(i, s, c);
                }
            }
        }
        acc
    }

    /// Least-squares (sin coef, cos coef) and the residual sum of squares.
    fn sin_solve(&self, omega: f64) -> (f64, f64, f64) {
        let m = self.trig_sums(omega);
        let det = m.ss * m.cc - m.sc * m.sc;
        let scale = (m.ss * m.cc).max(f64::MIN_POSITIVE);
        let (a, b) = if det > 1e-12 * scale {
            ((m.cc * m.sy - m.sc * m.cy) / det, (m.ss * m.cy - m.sc * m.sy) / det)
        } else if m.ss >= m.cc && m.ss > 0.0 {
            (m.sy / m.ss, 0.0)
        } else if m.cc > 0.0 {
            (0.0, m.cy / m.cc)
        } else {
            (0.0, 0.0)
        };
        let sse = self.yy - 2.0 * (a * m.sy + b * m.cy)
            + a * a * m.ss
            + 2.0 * a * b * m.sc
            + b * b * m.cc;
        (a, b, sse.max(0.0))
    }

    /// Least-squares amplitude for a single basis and the residual sum of squares.
    fn amp_solve<F: Fn(f64) -> f64>(&self, shape: F) -> (f64, f64) {
        let (mut bb, mut by) = (0.0, 0.0);
        for (i, &t) in self.t.iter().enumerate() {
            let b = self.weight(i) * shape(t);
            bb += b * b;
            by += b * self.y[i];
        }
        if !bb.is_finite() || !by.is_finite() || bb <= 0.0 {
            return (0.0, if bb.is_finite() { self.yy } else { f64::INFINITY });
        }
        let amp = by / bb;
        let sse = (self.yy - amp * by).max(0.0);
        (amp, sse)
    }
}

fn uniform_step(t: &[f64]) -> Option<f64> {
    let n = t.len();
    let dt = (t[n - 1] - t[0]) / (n - 1) as f64;
    let ok = t.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.abs().max(1e-300));
    ok.then_some(dt)
}

/// Peak of the zero-padded DFT magnitude of `z`, as angular frequency.
fn spectral_peak(z: &[f64], dt: f64) -> f64 {
    let n = z.len();
    let pad = (4 * n).next_power_of_two().max(64);
    let m = z.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = z.iter().map(|v| Complex::new(v - m, 0.0)).collect();
    buf.resize(pad, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(pad).process(&mut buf);
    let mut best = (1, 0.0);
    for (k, c) in buf.iter().enumerate().take(pad / 2 + 1).skip(1) {
        let mag = c.norm_sqr();
        if mag > best.1 {
            best = (k, mag);
        }
    }
    2.0 * PI * best.0 as f64 / (pad as f64 * dt)
}

pub fn fit_token(atom: &AtomInstance, t: &[f64], target: &[f64]) -> Result<TokenFit, AtomError> {
    fit_token_modulated(atom, t, target, None)
}

/// Fits `atom` so that `modulation * atom(t)` approximates `target`.
pub fn fit_token_modulated(
    atom: &AtomInstance,
    t: &[f64],
    target: &[f64],
    modulation: Option<&[f64]>,
) -> Result<TokenFit, AtomError> {
    if !atom.kind.is_token() {
        return Err(AtomError::Other(format!("{} is not a token", atom.kind)));
    }
    if t.len() != target.len() || modulation.is_some_and(|g| g.len() != t.len()) {
        return Err(AtomError::Signature {
            kind: atom.kind,
            detail: "time, target and modulation lengths differ".into(),
        });
    }
    if t.len() < MIN_FIT_LEN {
        return Err(AtomError::TooShort { need: MIN_FIT_LEN, got: t.len() });
    }
    if target.iter().chain(t).chain(modulation.unwrap_or(&[])).any(|v| !v.is_finite()) {
        return Err(AtomError::NonFinite("token fit input"));
    }
    let n = t.len() as f64;
    let yy: f64 = target.iter().map(|v| v * v).sum();
    let mean = target.iter().sum::<f64>() / n;
    let var = target.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let mut out = atom.clone();
    if out.params.len() != atom_param_len(atom.kind) || check_params(&out).is_err() {
        out.params = default_params(atom.kind, t);
    }
    if var == 0.0 {
        let amp_idx = amplitude_index(atom.kind);
        out.params[amp_idx] = 0.0;
        return Ok(TokenFit { atom: out, rmse: (yy / n).sqrt(), degenerate: true });
    }
    let prob = Problem { t, y: target, g: modulation, yy, uniform_dt: uniform_step(t) };
    let span = t[t.len() - 1] - t[0];
    let dt = span / (t.len() - 1) as f64;
    let sse = match atom.kind {
        AtomKind::Sin => fit_sin(&prob, &mut out, dt),
        AtomKind::Poly => fit_poly(&prob, &mut out),
        AtomKind::Pulse => fit_pulse(&prob, &mut out, dt, span),
        _ => unreachable!(),
    };
    Ok(TokenFit { atom: out, rmse: (sse / n).sqrt(), degenerate: false })
}

fn atom_param_len(kind: AtomKind) -> usize {
    match kind {
        AtomKind::Poly => 2,
        _ => 3,
    }
}

fn amplitude_index(kind: AtomKind) -> usize {
    match kind {
        AtomKind::Poly => 1,
        _ => 2,
    }
}

fn default_params(kind: AtomKind, t: &[f64]) -> Vec<f64> {
    let span = (t[t.len() - 1] - t[0]).abs().max(f64::MIN_POSITIVE);
    match kind {
        AtomKind::Sin => vec![2.0 * PI / span, 0.0, 0.0],
        AtomKind::Poly => vec![1.0, 0.0],
        _ => vec![t[0] + span / 2.0, span / 4.0, 0.0],
    }
}

fn fit_sin(prob: &Problem, out: &mut AtomInstance, dt: f64) -> f64 {
    let z: Vec<f64> = (0..prob.t.len()).map(|i| prob.y[i] * prob.weight(i)).collect();
    let bin = 2.0 * PI / (prob.t.len() as f64 * dt);
    let mut starts = vec![spectral_peak(&z, dt)];
    let warm = out.params[0];
    if warm.is_finite() && warm > 0.0 {
        starts.push(warm);
    }
    let sse_at = |w: f64| prob.sin_solve(w).2;
    let mut best = (f64::NAN, f64::INFINITY);
    for s in starts {
        let (w, f) = golden_section(sse_at, (s - bin).max(0.0), s + bin, GOLDEN_TOL);
        if f < best.1 {
            best = (w, f);
        }
        let f0 = sse_at(s);
        if f0 < best.1 {
            best = (s, f0);
        }
    }
    let omega = best.0;
    let (a, b, sse) = prob.sin_solve(omega);
    out.params = vec![omega, b.atan2(a), a.hypot(b)];
    sse
}

fn fit_poly(prob: &Problem, out: &mut AtomInstance) -> f64 {
    let sse_at = |e: f64| {
        let (_, s) = prob.amp_solve(|t| t.powf(e));
        if s.is_finite() {
            s
        } else {
            f64::INFINITY
        }
    };
    let mut start = (0.0, f64::INFINITY);
    let warm = out.params[0];
    let grid = (0..=12).map(|k| k as f64 * 0.5);
    for e in grid.chain((warm.is_finite() && warm >= 0.0).then_some(warm)) {
        let f = sse_at(e);
        if f < start.1 {
            start = (e, f);
        }
    }
    let (mut e, mut f) = start;
    let (ge, gf) = golden_section(sse_at, (e - 0.5).max(0.0), e + 0.5, GOLDEN_TOL);
    if gf <= f {
        (e, f) = (ge, gf);
    }
    let (amp, sse) = prob.amp_solve(|t| t.powf(e));
    out.params = vec![e, amp];
    sse.min(f)
}

fn pulse_shape(c: f64, w: f64) -> impl Fn(f64) -> f64 {
    move |t| {
        let z = (t - c) / w;
        (-z * z).exp()
    }
}

fn fit_pulse(prob: &Problem, out: &mut AtomInstance, dt: f64, span: f64) -> f64 {
    let sse_at = |c: f64, w: f64| prob.amp_solve(pulse_shape(c, w)).1;
    let peak = (0..prob.t.len())
        .max_by(|&i, &j| {
            (prob.y[i] * prob.weight(i))
                .abs()
                .total_cmp(&(prob.y[j] * prob.weight(j)).abs())
                .then(j.cmp(&i))
        })
        .unwrap_or(0);
    let c0 = prob.t[peak];
    let (w_lo, w_hi) = (dt.max(1e-12), (span / 2.0).max(dt));
    let mut cands: Vec<(f64, f64)> = (0..12)
        .map(|k| (c0, w_lo * (w_hi / w_lo).powf(k as f64 / 11.0)))
        .collect();
    if out.params[1] > 0.0 && out.params.iter().all(|v| v.is_finite()) {
        cands.push((out.params[0], out.params[1]));
    }
    let (mut c, mut w, mut f) = (c0, w_lo, f64::INFINITY);
    for (cc, ww) in cands {
        let ff = sse_at(cc, ww);
        if ff < f {
            (c, w, f) = (cc, ww, ff);
        }
    }
    for _ in 0..SWEEPS {
        let (nc, fc) = golden_section(|x| sse_at(x, w), c - w, c + w, GOLDEN_TOL);
        if fc <= f {
            (c, f) = (nc, fc);
        }
        let (nw, fw) = golden_section(|x| sse_at(c, x), (w / 2.0).max(w_lo / 10.0), 2.0 * w, GOLDEN_TOL);
        if fw <= f {
            (w, f) = (nw, fw);
        }
    }
    let (amp, sse) = prob.amp_solve(pulse_shape(c, w));
    out.params = vec![c, w, amp];
    sse
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|i| i as f64 * dt).collect()
    }

    fn rmse(a: &[f64], b: &[f64]) -> f64 {
        (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
    }

    #[test]
    fn recovers_sine() {
        let t = grid(512, 10.0 / 512.0);
        let y: Vec<f64> = t.iter().map(|t| 2.0 * (3.0 * t).sin()).collect();
        let fit = fit_token(&AtomInstance::sin(0.5, 0.0, 1.0), &t, &y).unwrap();
        let p = &fit.atom.params;
        assert!((p[0] - 3.0).abs() / 3.0 < 0.02, "{p:?}");
        assert!((p[2] - 2.0).abs() / 2.0 < 0.02, "{p:?}");
        assert!(fit.rmse < 1e-6);
    }

    #[test]
    fn zero_target_gives_zero_amplitude() {
        let t = grid(64, 0.1);
        let fit = fit_token(&AtomInstance::sin(1.0, 0.0, 1.0), &t, &[0.0; 64]).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.atom.params[2], 0.0);
        assert_eq!(fit.rmse, 0.0);
    }

    #[test]
    fn recovers_square_law() {
        let t = grid(50, 0.1);
        let y: Vec<f64> = t.iter().map(|t| t * t).collect();
        let fit = fit_token(&AtomInstance::poly(0.3, 5.0), &t, &y).unwrap();
        assert!((fit.atom.params[0] - 2.0).abs() < 1e-6, "{:?}", fit.atom.params);
        assert!((fit.atom.params[1] - 1.0).abs() < 1e-6, "{:?}", fit.atom.params);
    }

    #[test]
    fn recovers_pulse() {
        let t = grid(200, 0.05);
        let y: Vec<f64> = t.iter().map(|t| 1.5 * (-((t - 4.0) / 0.7f64).powi(2)).exp()).collect();
        let fit = fit_token(&AtomInstance::pulse(1.0, 1.0, 1.0), &t, &y).unwrap();
        let p = &fit.atom.params;
        assert!((p[0] - 4.0).abs() < 1e-4 && (p[1] - 0.7).abs() < 1e-4 && (p[2] - 1.5).abs() < 1e-4, "{p:?}");
    }

    #[test]
    fn never_worse_than_zero_token() {
        let t = grid(100, 0.37);
        for family in [AtomInstance::sin(1.0, 0.0, 1.0), AtomInstance::poly(1.0, 1.0), AtomInstance::pulse(3.0, 2.0, 1.0)] {
            let y: Vec<f64> = t.iter().map(|t| (t * 0.7).cos() + 0.01 * t * t - 2.0).collect();
            let fit = fit_token(&family, &t, &y).unwrap();
            let zero = rmse(&y, &vec![0.0; y.len()]);
            assert!(fit.rmse <= zero + 1e-12, "{} {} {}", family.kind, fit.rmse, zero);
            let pred: Vec<f64> = t.iter().map(|t| token_value(&fit.atom, *t)).collect();
            assert!((rmse(&y, &pred) - fit.rmse).abs() < 1e-9);
        }
    }

    #[test]
    fn modulated_fit_matches_product() {
        let t = grid(300, 0.05);
        let g: Vec<f64> = t.iter().map(|t| 1.0 + 0.5 * t).collect();
        let y: Vec<f64> = t.iter().zip(&g).map(|(t, g)| g * 0.8 * (2.0 * t + 0.3).sin()).collect();
        let fit = fit_token_modulated(&AtomInstance::sin(1.0, 0.0, 1.0), &t, &y, Some(&g)).unwrap();
        assert!(fit.rmse < 1e-6, "{:?}", fit);
    }

    #[test]
    fn golden_finds_parabola_minimum() {
        let (x, fx) = golden_section(|x| (x - 1.25).powi(2), -3.0, 4.0, 1e-10);
        assert!((x - 1.25).abs() < 1e-6 && fx < 1e-10);
    }
}
