//! Small regressors and the lagged embedding used by forecasting pipelines.
//!
//! Fitted state lives in `AtomInstance::params`:
//! - linear / ridge: `[intercept, beta...]`
//! - knn: `[rows, cols, X (row-major)..., y...]`
//! - dtree: flattened nodes, 5 reals each: `[feature, threshold, left, right, value]`,
//!   `feature < 0` marking a leaf.
//!
//! An empty parameter vector means "not fitted".

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};

use super::{AtomError, AtomInstance, AtomKind};
use crate::graph::FeatureMatrix;

pub const DEFAULT_RIDGE_LAMBDA: f64 = 1.0;
pub const DEFAULT_KNN_K: usize = 5;
pub const DEFAULT_TREE_DEPTH: usize = 5;
pub const DEFAULT_MIN_LEAF: usize = 5;
const KNN_BLOCK: usize = 256;

/// Row `i` is `series[i..i+w]`, target `i` is `series[i+w]`. The matrix
/// offset is `w`, the grid index of the first target.
pub fn lagged_embed(series: &[f64], w: usize) -> Result<(FeatureMatrix, Vec<f64>), AtomError> {
    if w == 0 || w >= series.len() {
        return Err(AtomError::Window { window: w, len: series.len() });
    }
    let rows = series.len() - w;
    let mut data = Vec::with_capacity(rows * w);
    for i in 0..rows {
        data.extend_from_slice(&series[i..i + w]);
    }
    let x = FeatureMatrix { offset: w, rows, cols: w, data };
    Ok((x, series[w..].to_vec()))
}

/// Horizontally stacks matrices over the grid range they all cover.
pub fn align_and_stack(mats: &[&FeatureMatrix]) -> FeatureMatrix {
    let start = mats.iter().map(|m| m.offset).max().unwrap_or(0);
    let end = mats.iter().map(|m| m.offset + m.rows).min().unwrap_or(0).max(start);
    let rows = end - start;
    let cols: usize = mats.iter().map(|m| m.cols).sum();
    let mut data = Vec::with_capacity(rows * cols);
    for g in start..end {
        for m in mats {
            data.extend_from_slice(m.row(g - m.offset));
        }
    }
    FeatureMatrix { offset: start, rows, cols, data }
}

/// Targets `u[offset + i]` for the rows of `x`.
pub fn targets_for(x: &FeatureMatrix, u: &[f64]) -> Vec<f64> {
    u[x.offset..x.offset + x.rows].to_vec()
}

/// Solves `(XᵀX + λI) β = Xᵀy`.
pub fn ridge_fit(x: &FeatureMatrix, y: &[f64], lambda: f64) -> Result<Vec<f64>, AtomError> {
    if x.rows == 0 {
        return Err(AtomError::EmptyTrain);
    }
    if y.len() != x.rows {
        return Err(AtomError::Other(format!("{} rows but {} targets", x.rows, y.len())));
    }
    if !(lambda >= 0.0) {
        return Err(AtomError::Other(format!("lambda must be non-negative, got {lambda}")));
    }
    let xm = DMatrix::from_row_slice(x.rows, x.cols, &x.data);
    let mut a = xm.tr_mul(&xm);
    for i in 0..x.cols {
        a[(i, i)] += lambda;
    }
    let b = xm.tr_mul(&DVector::from_column_slice(y));
    let scale = (0..x.cols).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let chol = nalgebra::linalg::Cholesky::new(a).ok_or(AtomError::Singular)?;
    let l = chol.l();
    let min_pivot = (0..x.cols).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if x.cols > 0 && !(min_pivot > 1e-12 * scale) {
        return Err(AtomError::Singular);
    }
    let beta = chol.solve(&b);
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(AtomError::NonFinite("ridge coefficients"));
    }
    Ok(beta.iter().copied().collect())
}

fn cmp_dist(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Mean target of the `k` nearest training rows (Euclidean; ties to the
/// lower row index).
pub fn knn_predict(
    train_x: &FeatureMatrix,
    train_y: &[f64],
    query: &FeatureMatrix,
    k: usize,
) -> Result<Vec<f64>, AtomError> {
    if train_x.rows == 0 {
        return Err(AtomError::EmptyTrain);
    }
    if k == 0 || k > train_x.rows {
        return Err(AtomError::TooFewNeighbours { k, rows: train_x.rows });
    }
    if query.cols != train_x.cols {
        return Err(AtomError::Other(format!(
            "query has {} columns, training data {}",
            query.cols, train_x.cols
        )));
    }
    // squared distances as |q|² + |x|² − 2 q·x, one block of queries per product
    let train = DMatrix::from_row_slice(train_x.rows, train_x.cols, &train_x.data);
    let train_norms: Vec<f64> = (0..train_x.rows).map(|r| train_x.row(r).iter().map(|v| v * v).sum()).collect();
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    let mut out = Vec::with_capacity(query.rows);
    for start in (0..query.rows).step_by(KNN_BLOCK) {
        let end = (start + KNN_BLOCK).min(query.rows);
        let block = DMatrix::from_row_slice(end - start, query.cols, &query.data[start * query.cols..end * query.cols]);
        // column j holds the products of query start + j with every training row
        let dots = &train * block.transpose();
        for q in start..end {
            let qn: f64 = query.row(q).iter().map(|v| v * v).sum();
            // the k nearest so far, kept sorted; rows arrive in index order so
            // a strict comparison keeps the lower index on ties
            let col = &dots.as_slice()[(q - start) * train_x.rows..(q - start + 1) * train_x.rows];
            dist.clear();
            for r in 0..train_x.rows {
                let d = (qn + train_norms[r] - 2.0 * col[r]).max(0.0);
                if dist.len() == k && d >= dist[k - 1].0 {
                    continue;
                }
                let at = dist.partition_point(|e| cmp_dist(e, &(d, r)) != Ordering::Greater);
                if dist.len() == k {
                    dist.pop();
                }
                dist.insert(at, (d, r));
            }
            out.push(dist.iter().map(|(_, r)| train_y[*r]).sum::<f64>() / k as f64);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub enum TreeNode {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// A fitted regression tree; node 0 is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf(v) => return *v,
                TreeNode::Split { feature, threshold, left, right } => {
                    i = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.nodes.len() * 5);
        for n in &self.nodes {
            match n {
                TreeNode::Leaf(v) => out.extend([-1.0, 0.0, 0.0, 0.0, *v]),
                TreeNode::Split { feature, threshold, left, right } => {
                    out.extend([*feature as f64, *threshold, *left as f64, *right as f64, 0.0])
                }
            }
        }
        out
    }

    pub fn unflatten(params: &[f64]) -> Option<Self> {
        if params.is_empty() || !params.len().is_multiple_of(5) {
            return None;
        }
        let count = params.len() / 5;
        let mut nodes = Vec::with_capacity(count);
        for c in params.chunks(5) {
            if c[0] < 0.0 {
                nodes.push(TreeNode::Leaf(c[4]));
            } else {
                let (left, right) = (c[2] as usize, c[3] as usize);
                if left >= count || right >= count {
                    return None;
                }
                nodes.push(TreeNode::Split { feature: c[0] as usize, threshold: c[1], left, right });
            }
        }
        Some(RegressionTree { nodes })
    }
}

pub fn dtree_fit(x: &FeatureMatrix, y: &[f64], max_depth: usize, min_leaf: usize) -> Result<RegressionTree, AtomError> {
    if x.rows == 0 {
        return Err(AtomError::EmptyTrain);
    }
    if y.len() != x.rows {
        return Err(AtomError::Other(format!("{} rows but {} targets", x.rows, y.len())));
    }
    let min_leaf = min_leaf.max(1);
    let mut tree = RegressionTree { nodes: Vec::new() };
    let idx: Vec<usize> = (0..x.rows).collect();
    grow_tree(&mut tree, x, y, idx, max_depth, min_leaf);
    Ok(tree)
}

fn grow_tree(tree: &mut RegressionTree, x: &FeatureMatrix, y: &[f64], idx: Vec<usize>, depth: usize, min_leaf: usize) -> usize {
    let n = idx.len() as f64;
    let sum: f64 = idx.iter().map(|&i| y[i]).sum();
    let mean = sum / n;
    let me = tree.nodes.len();
    tree.nodes.push(TreeNode::Leaf(mean));
    let sse: f64 = idx.iter().map(|&i| (y[i] - mean).powi(2)).sum();
    if depth == 0 || idx.len() < 2 * min_leaf || sse <= 0.0 {
        return me;
    }
    let Some((feature, threshold)) = best_split(x, y, &idx, min_leaf, sse) else {
        return me;
    };
    let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| x.get(i, feature) <= threshold);
    let left = grow_tree(tree, x, y, l, depth - 1, min_leaf);
    let right = grow_tree(tree, x, y, r, depth - 1, min_leaf);
    tree.nodes[me] = TreeNode::Split { feature, threshold, left, right };
    me
}

/// Lowest weighted child variance; ties go to the lower feature, then the
/// lower threshold.
fn best_split(x: &FeatureMatrix, y: &[f64], idx: &[usize], min_leaf: usize, parent_sse: f64) -> Option<(usize, f64)> {
    let n = idx.len();
    let total: f64 = idx.iter().map(|&i| y[i]).sum();
    let total_sq: f64 = idx.iter().map(|&i| y[i] * y[i]).sum();
    let tol = 1e-12 * parent_sse.max(f64::MIN_POSITIVE);
    let mut best: Option<(usize, f64, f64)> = None;
    let mut order = idx.to_vec();
    for f in 0..x.cols {
        order.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)).then(a.cmp(&b)));
        let (mut ls, mut lsq) = (0.0, 0.0);
        for k in 0..n - 1 {
            let yi = y[order[k]];
            ls += yi;
            lsq += yi * yi;
            let nl = k + 1;
            let nr = n - nl;
            let (a, b) = (x.get(order[k], f), x.get(order[k + 1], f));
            if nl < min_leaf || nr < min_leaf || a == b {
                continue;
            }
            let rs = total - ls;
            let rsq = total_sq - lsq;
            let sse = (lsq - ls * ls / nl as f64) + (rsq - rs * rs / nr as f64);
            let better = match best {
                None => sse < parent_sse - tol,
                Some((_, _, s)) => sse < s - tol,
            };
            if better {
                best = Some((f, 0.5 * (a + b), sse));
            }
        }
    }
    best.map(|(f, t, _)| (f, t))
}

pub fn dtree_predict(tree: &RegressionTree, x: &FeatureMatrix) -> Vec<f64> {
    (0..x.rows).map(|i| tree.predict_row(x.row(i))).collect()
}

fn hyper_usize(atom: &AtomInstance, key: &str, default: usize) -> usize {
    atom.hyper_or(key, default as f64).max(0.0) as usize
}

/// Fits a regressor atom on rows `x` with targets `y`.
pub fn fit_regressor(atom: &AtomInstance, x: &FeatureMatrix, y: &[f64]) -> Result<AtomInstance, AtomError> {
    if x.rows == 0 {
        return Err(AtomError::EmptyTrain);
    }
    let mut out = atom.clone();
    out.params = match atom.kind {
        AtomKind::Linear | AtomKind::Ridge => {
            let lambda = if atom.kind == AtomKind::Linear {
                0.0
            } else {
                atom.hyper_or("lambda", DEFAULT_RIDGE_LAMBDA)
            };
            let n = x.rows as f64;
            let means: Vec<f64> = (0..x.cols).map(|j| (0..x.rows).map(|i| x.get(i, j)).sum::<f64>() / n).collect();
            let ym = y.iter().sum::<f64>() / n;
            let mut xc = x.clone();
            for i in 0..x.rows {
                for j in 0..x.cols {
                    xc.data[i * x.cols + j] -= means[j];
                }
            }
            let yc: Vec<f64> = y.iter().map(|v| v - ym).collect();
            let beta = ridge_fit(&xc, &yc, lambda)?;
            let intercept = ym - beta.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
            std::iter::once(intercept).chain(beta).collect()
        }
        AtomKind::Knn => {
            let k = hyper_usize(atom, "k", DEFAULT_KNN_K);
            if k == 0 || k > x.rows {
                return Err(AtomError::TooFewNeighbours { k, rows: x.rows });
            }
            let mut p = vec![x.rows as f64, x.cols as f64];
            p.extend_from_slice(&x.data);
            p.extend_from_slice(y);
            p
        }
        AtomKind::DecisionTree => {
            let depth = hyper_usize(atom, "max_depth", DEFAULT_TREE_DEPTH);
            let leaf = hyper_usize(atom, "min_leaf", DEFAULT_MIN_LEAF);
            dtree_fit(x, y, depth, leaf)?.flatten()
        }
        other => return Err(AtomError::Other(format!("{other} is not a regressor"))),
    };
    Ok(out)
}

pub fn predict_regressor(atom: &AtomInstance, x: &FeatureMatrix) -> Result<Vec<f64>, AtomError> {
    let p = &atom.params;
    if p.is_empty() {
        return Err(AtomError::NotFitted(atom.kind));
    }
    let bad = |detail: String| AtomError::InvalidParams { kind: atom.kind, detail };
    match atom.kind {
        AtomKind::Linear | AtomKind::Ridge => {
            if p.len() != x.cols + 1 {
                return Err(bad(format!("fitted for {} features, got {}", p.len() - 1, x.cols)));
            }
            Ok((0..x.rows)
                .map(|i| p[0] + x.row(i).iter().zip(&p[1..]).map(|(a, b)| a * b).sum::<f64>())
                .collect())
        }
        AtomKind::Knn => {
            let (rows, cols) = (p[0] as usize, *p.get(1).unwrap_or(&0.0) as usize);
            if p.len() != 2 + rows * cols + rows || cols != x.cols {
                return Err(bad(format!("fitted for {cols} features, got {}", x.cols)));
            }
            let train = FeatureMatrix { offset: 0, rows, cols, data: p[2..2 + rows * cols].to_vec() };
            let k = hyper_usize(atom, "k", DEFAULT_KNN_K);
            knn_predict(&train, &p[2 + rows * cols..], x, k)
        }
        AtomKind::DecisionTree => {
            let tree = RegressionTree::unflatten(p).ok_or_else(|| bad("malformed tree".into()))?;
            let max_feature = tree
                .nodes
                .iter()
                .filter_map(|n| match n {
                    TreeNode::Split { feature, .. } => Some(*feature),
                    _ => None,
                })
                .max();
            if max_feature.is_some_and(|f| f >= x.cols) {
                return Err(bad(format!("tree splits on a feature beyond {} columns", x.cols)));
            }
            Ok(dtree_predict(&tree, x))
        }
        other => Err(AtomError::Other(format!("{other} is not a regressor"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix::from_rows(0, rows)
    }

    #[test]
    fn ridge_identity_design() {
        let b = ridge_fit(&mat(&[vec![1.0, 0.0], vec![0.0, 1.0]]), &[1.0, 3.0], 0.0).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-12 && (b[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn ridge_one_column_by_hand() {
        let x = mat(&[vec![1.0], vec![1.0]]);
        assert!((ridge_fit(&x, &[1.0, 3.0], 0.0).unwrap()[0] - 2.0).abs() < 1e-12);
        assert!((ridge_fit(&x, &[1.0, 3.0], 2.0).unwrap()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ridge_singular_without_penalty() {
        let x = mat(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]);
        assert_eq!(ridge_fit(&x, &[1.0, 2.0, 3.0], 0.0).unwrap_err(), AtomError::Singular);
        assert!(ridge_fit(&x, &[1.0, 2.0, 3.0], 0.5).is_ok());
    }

    #[test]
    fn knn_cases() {
        let x = mat(&[vec![0.0], vec![1.0], vec![2.0]]);
        let y = [0.0, 1.0, 2.0];
        // distances from 0.9 are 0.9, 0.1, 1.1: rows 1 and 0 are nearest
        assert_eq!(knn_predict(&x, &y, &mat(&[vec![0.9]]), 2).unwrap(), vec![0.5]);
        assert_eq!(knn_predict(&x, &y, &mat(&[vec![1.6]]), 2).unwrap(), vec![1.5]);
        assert_eq!(knn_predict(&x, &y, &mat(&[vec![2.0]]), 1).unwrap(), vec![2.0]);
        assert_eq!(knn_predict(&x, &y, &mat(&[vec![-7.0]]), 3).unwrap(), vec![1.0]);
        // equidistant neighbours resolve to the lower index
        assert_eq!(knn_predict(&x, &y, &mat(&[vec![0.5]]), 1).unwrap(), vec![0.0]);
        assert!(matches!(knn_predict(&x, &y, &x, 4), Err(AtomError::TooFewNeighbours { .. })));
    }

    #[test]
    fn tree_cases() {
        let x = mat(&[vec![0.0], vec![1.0]]);
        let t = dtree_fit(&x, &[0.0, 10.0], 1, 1).unwrap();
        assert_eq!(dtree_predict(&t, &x), vec![0.0, 10.0]);
        assert_eq!(t.nodes[0], TreeNode::Split { feature: 0, threshold: 0.5, left: 1, right: 2 });

        let t = dtree_fit(&x, &[0.0, 10.0], 0, 1).unwrap();
        assert_eq!(dtree_predict(&t, &x), vec![5.0, 5.0]);

        let t = dtree_fit(&mat(&[vec![0.0], vec![3.0], vec![1.0]]), &[4.0; 3], 4, 1).unwrap();
        assert_eq!(t.nodes, vec![TreeNode::Leaf(4.0)]);
        assert_eq!(RegressionTree::unflatten(&t.flatten()).unwrap(), t);
    }

    #[test]
    fn tree_ties_prefer_lower_feature() {
        let x = mat(&[vec![0.0, 0.0], vec![1.0, 1.0]]);
        let t = dtree_fit(&x, &[1.0, 2.0], 1, 1).unwrap();
        assert!(matches!(t.nodes[0], TreeNode::Split { feature: 0, .. }));
    }

    #[test]
    fn lag_definition() {
        let (x, y) = lagged_embed(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(x, FeatureMatrix { offset: 2, rows: 2, cols: 2, data: vec![1.0, 2.0, 2.0, 3.0] });
        assert_eq!(y, vec![3.0, 4.0]);
        let (x, y) = lagged_embed(&[5.0, 6.0], 1).unwrap();
        assert_eq!((x.data, y), (vec![5.0], vec![6.0]));
        assert_eq!(lagged_embed(&vec![0.0; 100], 10).unwrap().0.rows, 90);
        assert!(matches!(lagged_embed(&[1.0, 2.0], 2), Err(AtomError::Window { .. })));
    }

    #[test]
    fn stacking_aligns_on_grid() {
        let a = FeatureMatrix { offset: 2, rows: 3, cols: 1, data: vec![2.0, 3.0, 4.0] };
        let b = FeatureMatrix { offset: 3, rows: 2, cols: 1, data: vec![30.0, 40.0] };
        let s = align_and_stack(&[&a, &b]);
        assert_eq!(s, FeatureMatrix { offset: 3, rows: 2, cols: 2, data: vec![3.0, 30.0, 4.0, 40.0] });
    }

    #[test]
    fn linear_fit_recovers_affine_map() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, ((i * 7) % 5) as f64]).collect();
        let x = mat(&rows);
        let y: Vec<f64> = rows.iter().map(|r| 3.0 + 2.0 * r[0] - 0.5 * r[1]).collect();
        let atom = fit_regressor(&AtomInstance::new(AtomKind::Linear, vec![]), &x, &y).unwrap();
        for (p, w) in atom.params.iter().zip([3.0, 2.0, -0.5]) {
            assert!((p - w).abs() < 1e-9, "{:?}", atom.params);
        }
        let pred = predict_regressor(&atom, &x).unwrap();
        assert!(pred.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-9));
    }
}
