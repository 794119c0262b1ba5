//! Atomic models usable as graph nodes.
//!
//! Three families share one registry: parametric tokens for closed-form
//! expressions, regressors and the lag transform for forecasting pipelines,
//! and derivative terms for equation discovery. Every kind has a fixed
//! [`AtomSignature`]; which kinds a task may use, and whether they are
//! mutable, is decided by the [`AtomRegistry`] the task builds.

pub mod deriv;
pub mod regress;
pub mod tokens;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::RngCore;
use thiserror::Error;

use crate::graph::{FeatureMatrix, PortKind, PortValue};
use crate::io::Dataset;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AtomError {
    #[error("{0} is not fitted")]
    NotFitted(AtomKind),
    #[error("signature mismatch for {kind}: {detail}")]
    Signature { kind: AtomKind, detail: String },
    #[error("invalid parameters for {kind}: {detail}")]
    InvalidParams { kind: AtomKind, detail: String },
    #[error("window {window} must be smaller than series length {len}")]
    Window { window: usize, len: usize },
    #[error("normal equations are singular")]
    Singular,
    #[error("training set is empty")]
    EmptyTrain,
    #[error("k = {k} exceeds the {rows} training rows")]
    TooFewNeighbours { k: usize, rows: usize },
    #[error("step must be positive, got {0}")]
    Step(f64),
    #[error("series too short: need at least {need}, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{0}")]
    Other(String),
}

/// Registry key of an atomic model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AtomKind {
    Sin,
    Poly,
    Pulse,
    Sum,
    Product,
    /// Scalar constant; the genome of single-parameter toy problems.
    Const,
    Linear,
    Ridge,
    Knn,
    DecisionTree,
    Lag,
    /// `(d^order u / dt^order)^power`; power 0 is the constant term.
    Deriv { order: u8, power: u8 },
}

impl AtomKind {
    pub fn name(&self) -> String {
        match self {
            AtomKind::Sin => "sin".into(),
            AtomKind::Poly => "poly".into(),
            AtomKind::Pulse => "pulse".into(),
            AtomKind::Sum => "sum".into(),
            AtomKind::Product => "product".into(),
            AtomKind::Const => "const".into(),
            AtomKind::Linear => "linear".into(),
            AtomKind::Ridge => "ridge".into(),
            AtomKind::Knn => "knn".into(),
            AtomKind::DecisionTree => "dtree".into(),
            AtomKind::Lag => "lag".into(),
            AtomKind::Deriv { order, power } => format!("deriv:{order}:{power}"),
        }
    }

    pub fn signature(&self) -> AtomSignature {
        use PortKind::*;
        match self {
            AtomKind::Sin | AtomKind::Poly | AtomKind::Pulse => {
                AtomSignature::leaf(Series, true)
            }
            AtomKind::Deriv { .. } => AtomSignature::leaf(Series, true),
            AtomKind::Sum => AtomSignature::variadic(1, 8, Series, Series, false),
            AtomKind::Product => AtomSignature::variadic(1, 4, Series, Series, false),
            AtomKind::Const => AtomSignature::leaf(Scalar, false),
            AtomKind::Lag => AtomSignature::leaf(FeatureMatrix, false),
            AtomKind::Linear | AtomKind::Ridge | AtomKind::Knn | AtomKind::DecisionTree => {
                AtomSignature::variadic(1, 3, FeatureMatrix, FeatureMatrix, true)
            }
        }
    }

    pub fn is_token(&self) -> bool {
        matches!(self, AtomKind::Sin | AtomKind::Poly | AtomKind::Pulse)
    }

    pub fn is_regressor(&self) -> bool {
        matches!(
            self,
            AtomKind::Linear | AtomKind::Ridge | AtomKind::Knn | AtomKind::DecisionTree
        )
    }

    pub fn is_connective(&self) -> bool {
        matches!(self, AtomKind::Sum | AtomKind::Product)
    }
}

impl fmt::Display for AtomKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for AtomKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "sin" => AtomKind::Sin,
            "poly" => AtomKind::Poly,
            "pulse" => AtomKind::Pulse,
            "sum" => AtomKind::Sum,
            "product" => AtomKind::Product,
            "const" => AtomKind::Const,
            "linear" => AtomKind::Linear,
            "ridge" => AtomKind::Ridge,
            "knn" => AtomKind::Knn,
            "dtree" => AtomKind::DecisionTree,
            "lag" => AtomKind::Lag,
            other => {
                let rest = other
                    .strip_prefix("deriv:")
                    .ok_or_else(|| format!("unknown atom kind `{other}`"))?;
                let (o, p) = rest
                    .split_once(':')
                    .ok_or_else(|| format!("malformed derivative kind `{other}`"))?;
                let order: u8 = o.parse().map_err(|_| format!("bad order in `{other}`"))?;
                let power: u8 = p.parse().map_err(|_| format!("bad power in `{other}`"))?;
                if order > 2 || power > 2 {
                    return Err(format!("derivative kind `{other}` outside order/power 0..=2"));
                }
                AtomKind::Deriv { order, power }
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arity {
    Fixed(usize),
    Variable { min: usize, max: usize },
}

impl Arity {
    pub fn admits(&self, n: usize) -> bool {
        match *self {
            Arity::Fixed(k) => n == k,
            Arity::Variable { min, max } => (min..=max).contains(&n),
        }
    }

    pub fn min(&self) -> usize {
        match *self {
            Arity::Fixed(k) => k,
            Arity::Variable { min, .. } => min,
        }
    }

    pub fn max(&self) -> usize {
        match *self {
            Arity::Fixed(k) => k,
            Arity::Variable { max, .. } => max,
        }
    }
}

/// Input/output contract of an atom. Multi-input atoms are homogeneous:
/// every input port has `input_kind`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AtomSignature {
    pub arity: Arity,
    pub input_kind: Option<PortKind>,
    pub output_kind: PortKind,
    pub trainable: bool,
}

impl AtomSignature {
    fn leaf(output_kind: PortKind, trainable: bool) -> Self {
        AtomSignature {
            arity: Arity::Fixed(0),
            input_kind: None,
            output_kind,
            trainable,
        }
    }

    fn variadic(min: usize, max: usize, input: PortKind, output: PortKind, trainable: bool) -> Self {
        AtomSignature {
            arity: Arity::Variable { min, max },
            input_kind: Some(input),
            output_kind: output,
            trainable,
        }
    }

    /// Port kinds for an instance with `n` inputs.
    pub fn input_kinds(&self, n: usize) -> Vec<PortKind> {
        match self.input_kind {
            Some(k) => vec![k; n],
            None => Vec::new(),
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.arity == Arity::Fixed(0)
    }
}

/// One atomic model as stored in a graph node.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomInstance {
    pub kind: AtomKind,
    pub params: Vec<f64>,
    pub hyper: BTreeMap<String, f64>,
    pub mutable: bool,
}

impl AtomInstance {
    pub fn new(kind: AtomKind, params: Vec<f64>) -> Self {
        AtomInstance {
            kind,
            params,
            hyper: BTreeMap::new(),
            mutable: !kind.is_connective(),
        }
    }

    pub fn with_hyper(mut self, key: &str, value: f64) -> Self {
        self.hyper.insert(key.to_string(), value);
        self
    }

    pub fn immutable(mut self) -> Self {
        self.mutable = false;
        self
    }

    pub fn sin(freq: f64, phase: f64, amp: f64) -> Self {
        AtomInstance::new(AtomKind::Sin, vec![freq, phase, amp])
    }

    pub fn poly(exponent: f64, coef: f64) -> Self {
        AtomInstance::new(AtomKind::Poly, vec![exponent, coef])
    }

    pub fn pulse(center: f64, width: f64, amp: f64) -> Self {
        AtomInstance::new(AtomKind::Pulse, vec![center, width, amp])
    }

    pub fn sum() -> Self {
        AtomInstance::new(AtomKind::Sum, Vec::new()).immutable()
    }

    pub fn product() -> Self {
        AtomInstance::new(AtomKind::Product, Vec::new()).immutable()
    }

    pub fn constant(x: f64) -> Self {
        AtomInstance::new(AtomKind::Const, vec![x])
    }

    pub fn lag(window: usize) -> Self {
        AtomInstance::new(AtomKind::Lag, Vec::new()).with_hyper("window", window as f64)
    }

    pub fn deriv(order: u8, power: u8, coefficient: f64) -> Self {
        AtomInstance::new(AtomKind::Deriv { order, power }, vec![coefficient])
    }

    pub fn signature(&self) -> AtomSignature {
        self.kind.signature()
    }

    pub fn hyper_or(&self, key: &str, default: f64) -> f64 {
        self.hyper.get(key).copied().unwrap_or(default)
    }
}

pub type AtomConstructor = Arc<dyn Fn(&mut dyn RngCore) -> AtomInstance + Send + Sync>;

#[derive(Clone)]
pub struct RegistryEntry {
    pub signature: AtomSignature,
    pub mutable: bool,
    constructor: AtomConstructor,
}

impl fmt::Debug for RegistryEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegistryEntry")
            .field("signature", &self.signature)
            .field("mutable", &self.mutable)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RegistryError {
    #[error("atom kind {0} registered twice")]
    Duplicate(AtomKind),
    #[error("no registered atom produces {0:?}")]
    NoProducer(PortKind),
    #[error("atom kind {0} is not registered")]
    Unknown(AtomKind),
}

/// The class of atomic models a task searches over.
#[derive(Clone, Debug, Default)]
pub struct AtomRegistry {
    entries: BTreeMap<AtomKind, RegistryEntry>,
}

impl AtomRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register<F>(&mut self, kind: AtomKind, mutable: bool, ctor: F) -> Result<(), RegistryError>
    where
        F: Fn(&mut dyn RngCore) -> AtomInstance + Send + Sync + 'static,
    {
        if self.entries.contains_key(&kind) {
            return Err(RegistryError::Duplicate(kind));
        }
        self.entries.insert(
            kind,
            RegistryEntry {
                signature: kind.signature(),
                mutable,
                constructor: Arc::new(ctor),
            },
        );
        Ok(())
    }

    pub fn get(&self, kind: AtomKind) -> Option<&RegistryEntry> {
        self.entries.get(&kind)
    }

    pub fn contains(&self, kind: AtomKind) -> bool {
        self.entries.contains_key(&kind)
    }

    pub fn kinds(&self) -> impl Iterator<Item = AtomKind> + '_ {
        self.entries.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_mutable(&self, kind: AtomKind) -> bool {
        self.entries.get(&kind).map(|e| e.mutable).unwrap_or(false)
    }

    pub fn immutable_kinds(&self) -> Vec<AtomKind> {
        self.entries
            .iter()
            .filter(|(_, e)| !e.mutable)
            .map(|(k, _)| *k)
            .collect()
    }

    /// A freshly initialised instance; the mutable flag follows the registry.
    pub fn fresh(&self, kind: AtomKind, rng: &mut dyn RngCore) -> Result<AtomInstance, RegistryError> {
        let entry = self.entries.get(&kind).ok_or(RegistryError::Unknown(kind))?;
        let mut atom = (entry.constructor)(rng);
        atom.kind = kind;
        atom.mutable = entry.mutable;
        Ok(atom)
    }

    /// Kinds producing `output`, optionally restricted to mutable ones.
    pub fn producers(&self, output: PortKind, mutable_only: bool) -> Vec<AtomKind> {
        self.entries
            .iter()
            .filter(|(_, e)| e.signature.output_kind == output && (!mutable_only || e.mutable))
            .map(|(k, _)| *k)
            .collect()
    }

    /// Mutable kinds other than `kind` sharing its exact signature.
    pub fn replacements(&self, kind: AtomKind) -> Vec<AtomKind> {
        let sig = kind.signature();
        self.entries
            .iter()
            .filter(|(k, e)| **k != kind && e.mutable && e.signature == sig)
            .map(|(k, _)| *k)
            .collect()
    }
}

/// Output of one atom given its evaluated inputs.
pub fn apply_atom(atom: &AtomInstance, inputs: &[PortValue], data: &Dataset) -> Result<PortValue, AtomError> {
    let sig = atom.signature();
    if !sig.arity.admits(inputs.len()) {
        return Err(AtomError::Signature {
            kind: atom.kind,
            detail: format!("{} inputs not admitted by {:?}", inputs.len(), sig.arity),
        });
    }
    if let Some(expected) = sig.input_kind {
        if let Some((i, v)) = inputs.iter().enumerate().find(|(_, v)| v.kind() != expected) {
            return Err(AtomError::Signature {
                kind: atom.kind,
                detail: format!("input {i} is {:?}, expected {expected:?}", v.kind()),
            });
        }
    }
    match atom.kind {
        AtomKind::Sin | AtomKind::Poly | AtomKind::Pulse => {
            tokens::check_params(atom)?;
            Ok(PortValue::Series(
                data.t.iter().map(|&t| tokens::token_value(atom, t)).collect(),
            ))
        }
        AtomKind::Const => match atom.params.first() {
            Some(&x) => Ok(PortValue::Scalar(x)),
            None => Err(AtomError::NotFitted(atom.kind)),
        },
        AtomKind::Sum | AtomKind::Product => {
            let series: Vec<&[f64]> = inputs.iter().filter_map(|v| v.as_series()).collect();
            let n = series[0].len();
            if series.iter().any(|s| s.len() != n) {
                return Err(AtomError::Signature {
                    kind: atom.kind,
                    detail: "input series differ in length".into(),
                });
            }
            let mut out = series[0].to_vec();
            for s in &series[1..] {
                for (o, v) in out.iter_mut().zip(s.iter()) {
                    if atom.kind == AtomKind::Sum {
                        *o += v;
                    } else {
                        *o *= v;
                    }
                }
            }
            Ok(PortValue::Series(out))
        }
        AtomKind::Lag => {
            let w = atom.hyper_or("window", 0.0);
            if w < 1.0 {
                return Err(AtomError::InvalidParams {
                    kind: atom.kind,
                    detail: format!("window {w} < 1"),
                });
            }
            let (x, _) = regress::lagged_embed(&data.u, w as usize)?;
            Ok(PortValue::Matrix(x))
        }
        AtomKind::Linear | AtomKind::Ridge | AtomKind::Knn | AtomKind::DecisionTree => {
            let mats: Vec<&FeatureMatrix> = inputs.iter().filter_map(|v| v.as_matrix()).collect();
            let x = regress::align_and_stack(&mats);
            let pred = regress::predict_regressor(atom, &x)?;
            Ok(PortValue::Matrix(FeatureMatrix::column(x.offset, pred)))
        }
        AtomKind::Deriv { order, power } => {
            let c = *atom.params.first().ok_or(AtomError::NotFitted(atom.kind))?;
            let sigma = atom.hyper_or("sigma", deriv::DEFAULT_SMOOTHING);
            let base = deriv::derivative(&data.u, data.dt, order, sigma)?;
            Ok(PortValue::Series(
                base.iter().map(|v| c * v.powi(power as i32)).collect(),
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(t: Vec<f64>) -> Dataset {
        let u = vec![0.0; t.len()];
        Dataset::new(t, u).unwrap()
    }

    #[test]
    fn poly_squares() {
        let ds = grid(vec![1.0, 2.0, 3.0]);
        let out = apply_atom(&AtomInstance::poly(2.0, 1.0), &[], &ds).unwrap();
        assert_eq!(out, PortValue::Series(vec![1.0, 4.0, 9.0]));
    }

    #[test]
    fn sum_adds_elementwise() {
        let ds = grid(vec![0.0, 1.0]);
        let out = apply_atom(
            &AtomInstance::sum(),
            &[PortValue::Series(vec![1.0, 2.0]), PortValue::Series(vec![3.0, 4.0])],
            &ds,
        )
        .unwrap();
        assert_eq!(out, PortValue::Series(vec![4.0, 6.0]));
    }

    #[test]
    fn pulse_peak_is_amplitude() {
        let ds = grid(vec![-1.0, 0.0, 1.0]);
        let out = apply_atom(&AtomInstance::pulse(0.0, 1.0, 1.0), &[], &ds).unwrap();
        assert_eq!(out.as_series().unwrap()[1], 1.0);
    }

    #[test]
    fn wrong_input_kind_is_signature_error() {
        let ds = grid(vec![0.0, 1.0]);
        let m = FeatureMatrix::column(0, vec![1.0, 2.0]);
        let err = apply_atom(&AtomInstance::sum(), &[PortValue::Matrix(m)], &ds).unwrap_err();
        assert!(matches!(err, AtomError::Signature { .. }));
    }

    #[test]
    fn unfitted_regressor_errors() {
        let ds = grid((0..10).map(|i| i as f64).collect());
        let lag = apply_atom(&AtomInstance::lag(2), &[], &ds).unwrap();
        let ridge = AtomInstance::new(AtomKind::Ridge, vec![]).with_hyper("lambda", 1.0);
        let err = apply_atom(&ridge, &[lag], &ds).unwrap_err();
        assert_eq!(err, AtomError::NotFitted(AtomKind::Ridge));
    }

    #[test]
    fn kind_names_round_trip() {
        for k in [
            AtomKind::Sin,
            AtomKind::Poly,
            AtomKind::Pulse,
            AtomKind::Sum,
            AtomKind::Product,
            AtomKind::Const,
            AtomKind::Linear,
            AtomKind::Ridge,
            AtomKind::Knn,
            AtomKind::DecisionTree,
            AtomKind::Lag,
            AtomKind::Deriv { order: 2, power: 1 },
        ] {
            assert_eq!(k.name().parse::<AtomKind>().unwrap(), k);
        }
    }

    #[test]
    fn registry_rejects_duplicates() {
        let mut reg = AtomRegistry::new();
        reg.register(AtomKind::Sin, true, |_| AtomInstance::sin(1.0, 0.0, 1.0)).unwrap();
        let err = reg
            .register(AtomKind::Sin, true, |_| AtomInstance::sin(1.0, 0.0, 1.0))
            .unwrap_err();
        assert_eq!(err, RegistryError::Duplicate(AtomKind::Sin));
    }

    #[test]
    fn output_kind_matches_declaration() {
        let ds = grid((0..12).map(|i| i as f64 * 0.5).collect());
        let cases = vec![
            (AtomInstance::sin(1.0, 0.2, 1.0), vec![]),
            (AtomInstance::poly(1.0, 2.0), vec![]),
            (AtomInstance::pulse(1.0, 1.0, 1.0), vec![]),
            (AtomInstance::constant(1.5), vec![]),
            (AtomInstance::lag(3), vec![]),
            (AtomInstance::deriv(1, 1, 1.0), vec![]),
            (AtomInstance::product(), vec![PortValue::Series(vec![1.0; 12])]),
        ];
        for (atom, inputs) in cases {
            let v = apply_atom(&atom, &inputs, &ds).unwrap();
            assert_eq!(v.kind(), atom.signature().output_kind, "{}", atom.kind);
        }
    }
}
