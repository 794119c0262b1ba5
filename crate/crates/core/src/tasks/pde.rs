use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::IndexedRandom;
use rand::{Rng, RngCore};

use super::{render_equation, Task, TaskError};
use crate::atoms::deriv::{derivative, edge_margin};
use crate::atoms::{AtomInstance, AtomKind, AtomRegistry};
use crate::evo::{lambda_max, lasso_fit_with, LassoOptions};
use crate::graph::{CompositeModel, FeatureMatrix, NodeId};
use crate::io::{Config, Dataset, OperatorConfig};
use crate::objectives::{equation_residual, rmse};

/// Every `HOLDOUT`-th sample is held out when choosing the LASSO penalty.
const HOLDOUT: usize = 5;
/// Smallest grid penalty relative to the largest.
const LAMBDA_RATIO: f64 = 1e-4;
/// A sparser fit is preferred while its holdout error stays within this
/// relative margin of the best.
const SPARSITY_SLACK: f64 = 0.05;

/// Candidate equation terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PdeTerm {
    U,
    U2,
    UtU,
    Ut,
    Utt,
    Const,
}

impl PdeTerm {
    pub const ALL: [PdeTerm; 6] = [PdeTerm::U, PdeTerm::U2, PdeTerm::UtU, PdeTerm::Ut, PdeTerm::Utt, PdeTerm::Const];

    pub fn key(&self) -> &'static str {
        match self {
            PdeTerm::U => "u",
            PdeTerm::U2 => "u^2",
            PdeTerm::UtU => "u_t*u",
            PdeTerm::Ut => "u_t",
            PdeTerm::Utt => "u_tt",
            PdeTerm::Const => "const",
        }
    }

    /// Text used in rendered equations; the constant renders as its coefficient alone.
    pub fn label(&self) -> &'static str {
        match self {
            PdeTerm::U => "u",
            PdeTerm::U2 => "u^2",
            PdeTerm::UtU => "u*du/dt",
            PdeTerm::Ut => "du/dt",
            PdeTerm::Utt => "d2u/dt2",
            PdeTerm::Const => "",
        }
    }

    /// `(order, power)` factors whose product is the term.
    fn factors(&self) -> Vec<(u8, u8)> {
        match self {
            PdeTerm::U => vec![(0, 1)],
            PdeTerm::U2 => vec![(0, 2)],
            PdeTerm::UtU => vec![(1, 1), (0, 1)],
            PdeTerm::Ut => vec![(1, 1)],
            PdeTerm::Utt => vec![(2, 1)],
            PdeTerm::Const => vec![(0, 0)],
        }
    }

    fn from_factors(mut f: Vec<(u8, u8)>) -> Option<PdeTerm> {
        f.sort_unstable();
        PdeTerm::ALL.into_iter().find(|t| {
            let mut g = t.factors();
            g.sort_unstable();
            g == f
        })
    }
}

impl fmt::Display for PdeTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for PdeTerm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        PdeTerm::ALL
            .into_iter()
            .find(|t| t.key() == s || (*t == PdeTerm::UtU && s == "u*u_t"))
            .ok_or_else(|| format!("unknown equation term `{s}`"))
    }
}

/// Everything needed to recompute an equation's residual.
#[derive(Clone, Debug, PartialEq)]
pub struct EquationParts {
    /// Non-constant terms in model order.
    pub terms: Vec<PdeTerm>,
    /// Unit-coefficient term series on the trimmed grid.
    pub series: Vec<Vec<f64>>,
    pub coefficients: Vec<f64>,
    /// Coefficient of the constant term, 0 when absent.
    pub intercept: f64,
    pub target: Vec<f64>,
}

impl EquationParts {
    pub fn residual(&self) -> Result<f64, TaskError> {
        Ok(equation_residual(&self.series, &self.coefficients, self.intercept, &self.target)?)
    }
}

/// Sparse equation discovery: a subset of pool terms on one side, a fixed
/// target term on the other, coefficients by LASSO with a held-out penalty
/// choice.
pub struct PdeTask {
    registry: AtomRegistry,
    pool: Vec<PdeTerm>,
    pub target: PdeTerm,
    /// Trimmed unit series per pool term, aligned with `pool`.
    columns: Vec<Vec<f64>>,
    target_series: Vec<f64>,
    sigma: f64,
    ops: OperatorConfig,
    objectives: Vec<String>,
}

pub fn build_pde_task(config: &Config, data: &Dataset) -> Result<PdeTask, TaskError> {
    let cfg = &config.pde;
    if cfg.objectives.len() < 2 {
        return Err(TaskError::Config("equation discovery needs at least 2 objectives".into()));
    }
    for o in &cfg.objectives {
        if o != "residual" && o != "complexity" {
            return Err(TaskError::Config(format!("unknown equation objective `{o}`")));
        }
    }
    if !(data.dt > 0.0) {
        return Err(TaskError::Config("the time step dt must be positive".into()));
    }
    let target: PdeTerm = cfg.target.parse().map_err(TaskError::Config)?;
    if target == PdeTerm::Const {
        return Err(TaskError::Config("the target cannot be the constant term".into()));
    }
    let mut pool = Vec::new();
    for name in &cfg.terms {
        let t: PdeTerm = name.parse().map_err(TaskError::Config)?;
        if t != target && !pool.contains(&t) {
            pool.push(t);
        }
    }
    if pool.is_empty() {
        return Err(TaskError::Config("no candidate terms besides the target".into()));
    }
    let sigma = cfg.smoothing;
    let margin = edge_margin(sigma);
    data.require_len(2 * margin + 3 * HOLDOUT)?;
    let unit = |t: PdeTerm| -> Result<Vec<f64>, TaskError> {
        let mut out = vec![1.0; data.len()];
        for (order, power) in t.factors() {
            let base = derivative(&data.u, data.dt, order, sigma)?;
            for (o, b) in out.iter_mut().zip(&base) {
                *o *= b.powi(power as i32);
            }
        }
        Ok(out[margin..data.len() - margin].to_vec())
    };
    let columns = pool.iter().map(|t| unit(*t)).collect::<Result<Vec<_>, _>>()?;
    let target_series = unit(target)?;
    let mut registry = AtomRegistry::new();
    let mut kinds = BTreeSet::new();
    for t in &pool {
        kinds.extend(t.factors());
    }
    for (order, power) in kinds {
        registry.register(AtomKind::Deriv { order, power }, true, move |_| {
            AtomInstance::deriv(order, power, 1.0).with_hyper("sigma", sigma)
        })?;
    }
    registry.register(AtomKind::Sum, false, |_| AtomInstance::sum())?;
    registry.register(AtomKind::Product, false, |_| AtomInstance::product())?;
    Ok(PdeTask {
        registry,
        pool,
        target,
        columns,
        target_series,
        sigma,
        ops: config.operators.clone(),
        objectives: cfg.objectives.clone(),
    })
}

/// Least squares on the given columns, no intercept.
fn least_squares(cols: &[&[f64]], y: &[f64]) -> Vec<f64> {
    if cols.is_empty() {
        return Vec::new();
    }
    let n = y.len();
    let a = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    let b = DVector::from_column_slice(y);
    match a.svd(true, true).solve(&b, 1e-12) {
        Ok(x) => x.iter().copied().collect(),
        Err(_) => vec![0.0; cols.len()],
    }
}

fn term_of(model: &CompositeModel, id: NodeId) -> Option<(PdeTerm, f64)> {
    let node = model.node(id)?;
    let leaves: Vec<NodeId> = match node.atom.kind {
        AtomKind::Product if !node.atom.mutable => node.inputs.clone(),
        AtomKind::Deriv { .. } => vec![id],
        _ => return None,
    };
    let mut factors = Vec::new();
    let mut coefficient = 1.0;
    for leaf in leaves {
        let n = model.node(leaf)?;
        match n.atom.kind {
            AtomKind::Deriv { order, power } if n.inputs.is_empty() => {
                factors.push((order, power));
                coefficient *= n.atom.params.first().copied().unwrap_or(1.0);
            }
            _ => return None,
        }
    }
    PdeTerm::from_factors(factors).map(|t| (t, coefficient))
}

/// Terms and coefficients of a sum-of-terms equation model.
pub fn equation_terms(model: &CompositeModel) -> Option<Vec<(PdeTerm, f64)>> {
    let root = model.node(model.output())?;
    if root.atom.kind != AtomKind::Sum {
        return None;
    }
    root.inputs.iter().map(|id| term_of(model, *id)).collect()
}

/// `target = Σ cᵢ·termᵢ` for an equation model.
pub fn render_pde(model: &CompositeModel, target: PdeTerm) -> String {
    let terms = equation_terms(model).unwrap_or_default();
    let names: Vec<String> = terms.iter().map(|(t, _)| t.label().to_string()).collect();
    let coefs: Vec<f64> = terms.iter().map(|(_, c)| *c).collect();
    render_equation(&names, &coefs, target.label())
}

impl PdeTask {
    pub fn pool(&self) -> &[PdeTerm] {
        &self.pool
    }

    /// Margin dropped at each end of the grid.
    pub fn margin(&self) -> usize {
        edge_margin(self.sigma)
    }

    fn term_node(&self, m: &mut CompositeModel, term: PdeTerm, coefficient: f64) -> NodeId {
        let leaves: Vec<NodeId> = term
            .factors()
            .into_iter()
            .enumerate()
            .map(|(i, (o, p))| {
                let c = if i == 0 { coefficient } else { 1.0 };
                m.add_node(AtomInstance::deriv(o, p, c).with_hyper("sigma", self.sigma), vec![])
            })
            .collect();
        if leaves.len() == 1 {
            leaves[0]
        } else {
            m.add_node(AtomInstance::product(), leaves)
        }
    }

    /// Model for `Σ cᵢ·termᵢ`.
    pub fn equation(&self, terms: &[(PdeTerm, f64)]) -> CompositeModel {
        let mut m = CompositeModel::new(self.ops.depth_budget, self.ops.max_nodes);
        let ids: Vec<NodeId> = terms.iter().map(|(t, c)| self.term_node(&mut m, *t, *c)).collect();
        let root = m.add_node(AtomInstance::sum(), ids);
        m.set_output(root);
        m
    }

    /// Terms and coefficients of a conforming model.
    pub fn terms(&self, model: &CompositeModel) -> Option<Vec<(PdeTerm, f64)>> {
        equation_terms(model)
    }

    pub fn equation_parts(&self, model: &CompositeModel) -> Result<EquationParts, TaskError> {
        let terms = self.terms(model).ok_or_else(|| TaskError::Template("not a sum of pool terms".into()))?;
        let mut parts = EquationParts {
            terms: Vec::new(),
            series: Vec::new(),
            coefficients: Vec::new(),
            intercept: 0.0,
            target: self.target_series.clone(),
        };
        for (t, c) in terms {
            let j = self
                .pool
                .iter()
                .position(|p| *p == t)
                .ok_or_else(|| TaskError::Template(format!("term {t} is not in the pool")))?;
            if t == PdeTerm::Const {
                parts.intercept += c;
            } else {
                parts.terms.push(t);
                parts.series.push(self.columns[j].clone());
                parts.coefficients.push(c);
            }
        }
        Ok(parts)
    }

    fn genome(&self, model: &CompositeModel) -> BTreeSet<PdeTerm> {
        self.terms(model).unwrap_or_default().into_iter().map(|(t, _)| t).collect()
    }

    fn from_genome(&self, genome: &BTreeSet<PdeTerm>) -> CompositeModel {
        let terms: Vec<(PdeTerm, f64)> = genome.iter().map(|t| (*t, 1.0)).collect();
        self.equation(&terms)
    }

    /// LASSO over the genome's terms with the penalty picked on held-out
    /// samples, then a least-squares refit of the surviving terms. Returns
    /// the surviving terms with their coefficients.
    pub fn fit_terms(&self, genome: &BTreeSet<PdeTerm>) -> Result<Vec<(PdeTerm, f64)>, TaskError> {
        // the constant is a column of ones, penalised like any other term
        let vars: Vec<(PdeTerm, &Vec<f64>)> = genome
            .iter()
            .map(|t| {
                let j = self.pool.iter().position(|p| p == t).expect("genome term in pool");
                (*t, &self.columns[j])
            })
            .collect();
        let y = &self.target_series;
        let n = y.len();
        let (fit_rows, hold_rows): (Vec<usize>, Vec<usize>) = (0..n).partition(|i| i % HOLDOUT != HOLDOUT - 1);
        let pick = |rows: &[usize], col: &[f64]| rows.iter().map(|i| col[*i]).collect::<Vec<f64>>();
        let y_fit = pick(&fit_rows, y);
        let y_hold = pick(&hold_rows, y);
        let x_fit = FeatureMatrix {
            offset: 0,
            rows: fit_rows.len(),
            cols: vars.len(),
            data: fit_rows.iter().flat_map(|i| vars.iter().map(move |(_, c)| c[*i])).collect(),
        };
        let opts = LassoOptions { intercept: false };
        let mut support: Vec<usize> = Vec::new();
        if !vars.is_empty() {
            let lmax = lambda_max(&x_fit, &y_fit, opts)?;
            let steps = self.ops.lasso_lambda_grid.max(1);
            let grid: Vec<f64> = (0..steps)
                .map(|k| {
                    let frac = if steps == 1 { 1.0 } else { k as f64 / (steps - 1) as f64 };
                    lmax * LAMBDA_RATIO.powf(frac)
                })
                .collect();
            let mut scored: Vec<(Vec<usize>, f64)> = Vec::new();
            for lambda in grid {
                let lasso = lasso_fit_with(&x_fit, &y_fit, lambda, opts)?;
                let s: Vec<usize> = (0..vars.len()).filter(|j| lasso.coef[*j] != 0.0).collect();
                let cols: Vec<Vec<f64>> = s.iter().map(|j| pick(&fit_rows, vars[*j].1)).collect();
                let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
                let beta = least_squares(&refs, &y_fit);
                let pred: Vec<f64> = hold_rows
                    .iter()
                    .map(|i| s.iter().zip(&beta).map(|(j, b)| b * vars[*j].1[*i]).sum::<f64>())
                    .collect();
                scored.push((s, rmse(&pred, &y_hold)?));
            }
            // λ_max always empties the support; an equation needs a term
            scored.retain(|(s, _)| !s.is_empty());
            let best = scored.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
            let scale = crate::io::std_dev(y).max(f64::MIN_POSITIVE);
            support = scored
                .into_iter()
                .find(|(_, e)| *e <= best * (1.0 + SPARSITY_SLACK) + 1e-12 * scale)
                .map(|(s, _)| s)
                .unwrap_or_default();
        }
        let cols: Vec<&[f64]> = support.iter().map(|j| vars[*j].1.as_slice()).collect();
        let beta = least_squares(&cols, y);
        let out: Vec<(PdeTerm, f64)> = support
            .iter()
            .zip(&beta)
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, b)| (vars[*j].0, *b))
            .collect();
        if out.is_empty() {
            return Err(TaskError::Template("every term was eliminated".into()));
        }
        Ok(out)
    }

    pub fn score(&self, model: &CompositeModel) -> Result<Vec<f64>, TaskError> {
        let parts = self.equation_parts(model)?;
        let residual = parts.residual()?;
        let terms = model.node(model.output()).map(|n| n.inputs.len()).unwrap_or(0) as f64;
        Ok(self
            .objectives
            .iter()
            .map(|o| if o == "residual" { residual } else { terms })
            .collect())
    }

    fn vary_genome(&self, g: &mut BTreeSet<PdeTerm>, rng: &mut dyn RngCore) {
        let current: Vec<PdeTerm> = g.iter().copied().collect();
        for t in current {
            if rng.random_bool(self.ops.p_node.clamp(0.0, 1.0)) {
                let absent: Vec<PdeTerm> = self.pool.iter().copied().filter(|p| !g.contains(p)).collect();
                if let Some(&r) = absent.choose(rng) {
                    g.remove(&t);
                    g.insert(r);
                }
            }
        }
        if rng.random_bool(self.ops.p_tree.clamp(0.0, 1.0)) {
            let absent: Vec<PdeTerm> = self.pool.iter().copied().filter(|p| !g.contains(p)).collect();
            let grow = g.len() <= 1 || (rng.random_bool(0.5) && !absent.is_empty());
            if grow {
                if let Some(&r) = absent.choose(rng) {
                    g.insert(r);
                }
            } else {
                let present: Vec<PdeTerm> = g.iter().copied().collect();
                let r = *present.choose(rng).expect("non-empty genome");
                g.remove(&r);
            }
        }
        if g.is_empty() {
            g.insert(*self.pool.choose(rng).expect("non-empty pool"));
        }
    }
}

impl Task for PdeTask {
    fn name(&self) -> &str {
        "pde"
    }

    fn objective_names(&self) -> Vec<String> {
        self.objectives.clone()
    }

    fn registry(&self) -> &AtomRegistry {
        &self.registry
    }

    fn random_model(&self, rng: &mut dyn RngCore) -> Result<CompositeModel, TaskError> {
        let size = rng.random_range(1..=self.pool.len());
        let genome: BTreeSet<PdeTerm> = self.pool.choose_multiple(rng, size).copied().collect();
        Ok(self.from_genome(&genome))
    }

    fn conforms(&self, model: &CompositeModel) -> bool {
        let Some(root) = model.node(model.output()) else {
            return false;
        };
        if root.atom.mutable || root.inputs.is_empty() || model.len() != model.reachable().len() {
            return false;
        }
        match self.terms(model) {
            Some(terms) => {
                let distinct: BTreeSet<PdeTerm> = terms.iter().map(|t| t.0).collect();
                distinct.len() == terms.len() && distinct.iter().all(|t| self.pool.contains(t))
            }
            None => false,
        }
    }

    /// Uniform crossover on term membership, then term swaps (probability
    /// `p_node` per term) and one insertion or deletion (probability `p_tree`).
    fn vary(&self, a: &CompositeModel, b: &CompositeModel, rng: &mut dyn RngCore) -> (CompositeModel, CompositeModel) {
        let (ga, gb) = (self.genome(a), self.genome(b));
        let (mut ca, mut cb) = (BTreeSet::new(), BTreeSet::new());
        for t in &self.pool {
            let (ia, ib) = (ga.contains(t), gb.contains(t));
            let (x, y) = if ia != ib && rng.random_bool(0.5) { (ib, ia) } else { (ia, ib) };
            if x {
                ca.insert(*t);
            }
            if y {
                cb.insert(*t);
            }
        }
        self.vary_genome(&mut ca, rng);
        self.vary_genome(&mut cb, rng);
        (self.from_genome(&ca), self.from_genome(&cb))
    }

    fn evaluate(&self, model: &CompositeModel, _rng: &mut dyn RngCore) -> Result<(CompositeModel, Vec<f64>), TaskError> {
        if !self.conforms(model) {
            return Err(TaskError::Template("not a sum of distinct pool terms".into()));
        }
        let terms = self.fit_terms(&self.genome(model))?;
        let fitted = self.equation(&terms);
        let f = self.score(&fitted)?;
        Ok((fitted, f))
    }

    fn render(&self, model: &CompositeModel) -> String {
        render_pde(model, self.target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exp_data() -> Dataset {
        let dt = 0.01;
        Dataset::from_series((0..300).map(|i| (-2.0 * i as f64 * dt).exp()).collect(), dt).unwrap()
    }

    #[test]
    fn term_names_round_trip() {
        for t in PdeTerm::ALL {
            assert_eq!(t.key().parse::<PdeTerm>().unwrap(), t);
        }
    }

    #[test]
    fn decay_rate_recovered_from_single_term() {
        let task = build_pde_task(&Config::default(), &exp_data()).unwrap();
        let genome = BTreeSet::from([PdeTerm::U]);
        let terms = task.fit_terms(&genome).unwrap();
        assert_eq!(terms.len(), 1);
        assert!((terms[0].1 + 2.0).abs() < 0.2, "{terms:?}");
    }

    #[test]
    fn residual_matches_stored_objective() {
        let task = build_pde_task(&Config::default(), &exp_data()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let m = task.random_model(&mut rng).unwrap();
            if let Ok((fitted, f)) = task.evaluate(&m, &mut rng) {
                let parts = task.equation_parts(&fitted).unwrap();
                assert_eq!(parts.residual().unwrap(), f[0]);
                assert!(f[1] >= 1.0);
            }
        }
    }

    #[test]
    fn render_single_term() {
        let task = build_pde_task(&Config::default(), &exp_data()).unwrap();
        let m = task.equation(&[(PdeTerm::U, -2.0)]);
        assert_eq!(task.render(&m), "du/dt = -2.000*u");
    }

    #[test]
    fn variation_conforms() {
        let task = build_pde_task(&Config::default(), &exp_data()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut a = task.random_model(&mut rng).unwrap();
        let mut b = task.random_model(&mut rng).unwrap();
        for _ in 0..200 {
            let (x, y) = task.vary(&a, &b, &mut rng);
            assert!(task.conforms(&x) && task.conforms(&y));
            a = x;
            b = y;
        }
    }
}
