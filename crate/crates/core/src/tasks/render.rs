use std::cmp::Ordering;

use crate::atoms::{AtomInstance, AtomKind};
use crate::graph::{CompositeModel, NodeId};

/// Four significant digits, fixed notation.
pub fn fmt_sig4(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0.000".into();
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (3 - mag).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // rounding can carry into a new digit, e.g. 9.9996 -> 10.000
    let rounded: f64 = s.parse().unwrap_or(v);
    if rounded != 0.0 && (rounded.abs().log10().floor() as i32) > mag {
        let decimals = (2 - mag).max(0) as usize;
        return format!("{v:.decimals$}");
    }
    s
}

fn signed_offset(v: f64) -> String {
    if v < 0.0 {
        format!(" - {}", fmt_sig4(-v))
    } else {
        format!(" + {}", fmt_sig4(v))
    }
}

/// Amplitude-free shape of a token and its amplitude.
fn token_parts(atom: &AtomInstance) -> (String, f64) {
    let p = &atom.params;
    match (atom.kind, p.len()) {
        (AtomKind::Sin, 3) => (format!("sin({}*t{})", fmt_sig4(p[0]), signed_offset(p[1])), p[2]),
        (AtomKind::Poly, 2) => (format!("t^{}", fmt_sig4(p[0])), p[1]),
        (AtomKind::Pulse, 3) => (
            format!("exp(-((t{})/{})^2)", signed_offset(-p[0]), fmt_sig4(p[1])),
            p[2],
        ),
        _ => (format!("{}?", atom.kind), 1.0),
    }
}

/// Amplitude-free text of a node and the product of amplitudes inside it.
fn render_node(model: &CompositeModel, id: NodeId) -> (String, f64) {
    let node = model.node(id).expect("rendered node exists");
    match node.atom.kind {
        AtomKind::Product => {
            let parts: Vec<(String, f64)> = node.inputs.iter().map(|c| render_node(model, *c)).collect();
            let weight = parts.iter().map(|p| p.1).product();
            let text = parts.into_iter().map(|(s, _)| s).collect::<Vec<_>>().join("*");
            (text, weight)
        }
        AtomKind::Sum => {
            let text = node.inputs.iter().map(|c| weighted(render_node(model, *c))).collect::<Vec<_>>().join(" + ");
            (format!("({text})"), 1.0)
        }
        k if k.is_token() => token_parts(&node.atom),
        _ => (node.atom.kind.name(), 1.0),
    }
}

fn weighted((text, w): (String, f64)) -> String {
    format!("{}*{text}", fmt_sig4(w))
}

/// Infix text of a sum-of-products token model. Additive terms are ordered
/// by descending absolute weight (the product of their amplitudes).
pub fn render_expression(model: &CompositeModel) -> String {
    let Some(root) = model.node(model.output()) else {
        return String::new();
    };
    if root.atom.kind != AtomKind::Sum {
        return weighted(render_node(model, model.output()));
    }
    let mut terms: Vec<(String, f64)> = root.inputs.iter().map(|c| render_node(model, *c)).collect();
    terms.sort_by(|a, b| {
        b.1.abs()
            .partial_cmp(&a.1.abs())
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    let mut out = String::new();
    for (i, (text, w)) in terms.into_iter().enumerate() {
        match (i, w < 0.0) {
            (0, _) => out.push_str(&weighted((text, w))),
            (_, true) => out.push_str(&format!(" - {}", weighted((text, -w)))),
            (_, false) => out.push_str(&format!(" + {}", weighted((text, w)))),
        }
    }
    out
}

/// `target = Σ cᵢ·termᵢ`, terms ordered by descending `|cᵢ|`, zeros omitted.
/// An empty term name denotes the constant.
pub fn render_equation(terms: &[String], coefficients: &[f64], target: &str) -> String {
    let mut pairs: Vec<(&String, f64)> = terms.iter().zip(coefficients.iter().copied()).filter(|(_, c)| *c != 0.0).collect();
    pairs.sort_by(|a, b| {
        b.1.abs()
            .partial_cmp(&a.1.abs())
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.0.cmp(b.0))
    });
    let mut rhs = String::new();
    for (i, (name, c)) in pairs.iter().enumerate() {
        let mag = fmt_sig4(c.abs());
        let body = if name.is_empty() { mag } else { format!("{mag}*{name}") };
        match (i, *c < 0.0) {
            (0, true) => rhs.push_str(&format!("-{body}")),
            (0, false) => rhs.push_str(&body),
            (_, true) => rhs.push_str(&format!(" - {body}")),
            (_, false) => rhs.push_str(&format!(" + {body}")),
        }
    }
    if rhs.is_empty() {
        rhs.push('0');
    }
    format!("{target} = {rhs}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_significant_digits() {
        assert_eq!(fmt_sig4(2.0), "2.000");
        assert_eq!(fmt_sig4(12.5), "12.50");
        assert_eq!(fmt_sig4(-0.012344), "-0.01234");
        assert_eq!(fmt_sig4(1234.5), "1234");
        assert_eq!(fmt_sig4(9.9996), "10.00");
        assert_eq!(fmt_sig4(0.0), "0.000");
    }

    #[test]
    fn single_sin_token() {
        let m = CompositeModel::single(AtomInstance::sin(3.0, 0.0, 2.0));
        assert_eq!(render_expression(&m), "2.000*sin(3.000*t + 0.000)");
    }

    #[test]
    fn equation_text() {
        assert_eq!(render_equation(&["u".into()], &[-2.0], "du/dt"), "du/dt = -2.000*u");
        let terms = ["u".to_string(), "u^2".to_string(), String::new()];
        assert_eq!(
            render_equation(&terms, &[0.5, 0.0, -1.25], "du/dt"),
            "du/dt = -1.250 + 0.5000*u"
        );
    }

    #[test]
    fn sum_orders_by_weight() {
        let mut m = CompositeModel::new(4, 16);
        let a = m.add_node(AtomInstance::sin(1.0, 0.0, 0.5), vec![]);
        let b = m.add_node(AtomInstance::sin(2.0, 0.0, 3.0), vec![]);
        let pa = m.add_node(AtomInstance::product(), vec![a]);
        let pb = m.add_node(AtomInstance::product(), vec![b]);
        let s = m.add_node(AtomInstance::sum(), vec![pa, pb]);
        m.set_output(s);
        assert_eq!(render_expression(&m), "3.000*sin(2.000*t + 0.000) + 0.5000*sin(1.000*t + 0.000)");
    }
}
