use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("need at least 2 objectives and 1 division, got m={m}, H={h}")]
    Shape { m: usize, h: usize },
    #[error("weight vector has zero norm")]
    ZeroWeight,
}

/// All vectors with components in `{0, 1/H, ..., 1}` summing to 1, in
/// lexicographic order.
pub fn generate_weights(m: usize, h: usize) -> Result<Vec<Vec<f64>>, LatticeError> {
    if m < 2 || h < 1 {
        return Err(LatticeError::Shape { m, h });
    }
    fn rec(prefix: &mut Vec<usize>, left: usize, m: usize, h: usize, out: &mut Vec<Vec<f64>>) {
        if prefix.len() == m - 1 {
            let mut w: Vec<f64> = prefix.iter().map(|k| *k as f64 / h as f64).collect();
            w.push(left as f64 / h as f64);
            out.push(w);
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            rec(prefix, left - k, m, h, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), h, m, h, &mut out);
    Ok(out)
}

/// Weights, their neighbourhoods and the running ideal point.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightLattice {
    pub weights: Vec<Vec<f64>>,
    pub k: usize,
    /// `neighborhoods[i]` holds the `k` weights nearest to weight `i`, itself first.
    pub neighborhoods: Vec<Vec<usize>>,
    pub ideal: Vec<f64>,
}

impl WeightLattice {
    pub fn new(m: usize, h: usize, k: usize) -> Result<Self, LatticeError> {
        let weights = generate_weights(m, h)?;
        let k = k.clamp(1, weights.len());
        let neighborhoods = weights
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let mut d: Vec<(f64, usize)> = weights
                    .iter()
                    .enumerate()
                    .map(|(j, v)| (if i == j { -1.0 } else { dist2(w, v) }, j))
                    .collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                d.into_iter().take(k).map(|(_, j)| j).collect()
            })
            .collect();
        Ok(WeightLattice { weights, k, neighborhoods, ideal: vec![f64::INFINITY; m] })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Lowers the ideal point towards `f`; true if any component moved.
    pub fn update_ideal(&mut self, f: &[f64]) -> bool {
        let mut moved = false;
        for (z, v) in self.ideal.iter_mut().zip(f) {
            if *v < *z {
                *z = *v;
                moved = true;
            }
        }
        moved
    }

    pub fn associate(&self, f: &[f64]) -> usize {
        associate(f, &self.weights, &self.ideal)
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Index of the weight making the smallest angle with `f − ideal`; ties go
/// to the lower index and a zero vector maps to 0.
pub fn associate(f: &[f64], weights: &[Vec<f64>], ideal: &[f64]) -> usize {
    let d: Vec<f64> = f.iter().zip(ideal).map(|(a, z)| a - z).collect();
    let dn = norm(&d);
    if dn == 0.0 || !dn.is_finite() {
        return 0;
    }
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, w) in weights.iter().enumerate() {
        let wn = norm(w);
        if wn == 0.0 {
            continue;
        }
        let cos = d.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / (dn * wn);
        if cos > best.0 {
            best = (cos, i);
        }
    }
    best.1
}

/// Penalty-boundary intersection `d1 + θ·d2`.
pub fn pbi(f: &[f64], w: &[f64], ideal: &[f64], theta: f64) -> Result<f64, LatticeError> {
    let wn = norm(w);
    if wn == 0.0 {
        return Err(LatticeError::ZeroWeight);
    }
    let d: Vec<f64> = f.iter().zip(ideal).map(|(a, z)| a - z).collect();
    let d1 = d.iter().zip(w).map(|(a, b)| a * b).sum::<f64>().abs() / wn;
    let d2 = d
        .iter()
        .zip(w)
        .map(|(a, b)| (a - d1 * b / wn).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(d1 + theta * d2)
}
