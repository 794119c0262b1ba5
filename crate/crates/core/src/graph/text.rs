//! Line-oriented model text: a header line, then one node per line as
//! `id kind mutable|immutable [parents] {key=value ...} (params)`.
//!
//! Reals are written in shortest round-trip form, so parsing restores them
//! bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::{CompositeModel, Node, NodeId};
use crate::atoms::{AtomInstance, AtomKind};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

pub fn serialize(model: &CompositeModel) -> String {
    let mut out = format!(
        "composite output={} depth_budget={} max_nodes={} next_id={}\n",
        model.output(),
        model.depth_budget,
        model.max_nodes,
        model.next_id()
    );
    for (id, node) in model.nodes() {
        let parents: Vec<String> = node.inputs.iter().map(|p| p.to_string()).collect();
        let hyper: Vec<String> = node.atom.hyper.iter().map(|(k, v)| format!("{k}={v:?}")).collect();
        let params: Vec<String> = node.atom.params.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(
            out,
            "{} {} {} [{}] {{{}}} ({})",
            id,
            node.atom.kind,
            if node.atom.mutable { "mutable" } else { "immutable" },
            parents.join(" "),
            hyper.join(" "),
            params.join(" ")
        );
    }
    out
}

struct Cursor<'a> {
    line_no: usize,
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line_no,
            column: self.text[..self.pos].chars().count() + 1,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.text[self.pos..].starts_with([' ', '\t']) {
            self.pos += 1;
        }
    }

    fn word(&mut self) -> Result<&'a str, ParseError> {
        self.skip_ws();
        let rest = &self.text[self.pos..];
        let len = rest.find([' ', '\t']).unwrap_or(rest.len());
        if len == 0 {
            return Err(self.err("unexpected end of line"));
        }
        self.pos += len;
        Ok(&rest[..len])
    }

    /// Contents between `open` and `close`, advancing past `close`.
    fn group(&mut self, open: char, close: char) -> Result<(&'a str, usize), ParseError> {
        self.skip_ws();
        if !self.text[self.pos..].starts_with(open) {
            return Err(self.err(format!("expected `{open}`")));
        }
        let start = self.pos + 1;
        let end = self.text[start..]
            .find(close)
            .map(|i| start + i)
            .ok_or_else(|| self.err(format!("unclosed `{open}`")))?;
        self.pos = end + 1;
        Ok((&self.text[start..end], start))
    }

    fn at(&self, pos: usize) -> Cursor<'a> {
        Cursor { line_no: self.line_no, text: self.text, pos }
    }

    fn finish(&mut self) -> Result<(), ParseError> {
        self.skip_ws();
        if self.pos < self.text.len() {
            return Err(self.err("trailing characters"));
        }
        Ok(())
    }
}

fn parse_f64(c: &Cursor, s: &str) -> Result<f64, ParseError> {
    s.parse::<f64>().map_err(|_| c.err(format!("`{s}` is not a real number")))
}

fn split_items(body: &str, base: usize) -> Vec<(usize, &str)> {
    let mut items = Vec::new();
    let mut i = 0;
    for piece in body.split([' ', '\t']) {
        if !piece.is_empty() {
            items.push((base + i, piece));
        }
        i += piece.len() + 1;
    }
    items
}

pub fn parse(text: &str) -> Result<CompositeModel, ParseError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end()))
        .filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines.next().ok_or(ParseError {
        line: 1,
        column: 1,
        message: "empty model text".into(),
    })?;
    let mut c = Cursor { line_no: hline, text: header, pos: 0 };
    if c.word()? != "composite" {
        return Err(c.at(0).err("expected `composite` header"));
    }
    let mut fields: BTreeMap<&str, (usize, u64)> = BTreeMap::new();
    while {
        c.skip_ws();
        c.pos < header.len()
    } {
        let start = c.pos;
        let w = c.word()?;
        let (k, v) = w.split_once('=').ok_or_else(|| c.at(start).err("expected key=value"))?;
        let v: u64 = v
            .parse()
            .map_err(|_| c.at(start).err(format!("`{v}` is not a non-negative integer")))?;
        fields.insert(k, (start, v));
    }
    let need = |k: &str| -> Result<u64, ParseError> {
        fields
            .get(k)
            .map(|(_, v)| *v)
            .ok_or_else(|| c.at(header.len()).err(format!("missing header field `{k}`")))
    };
    let output = need("output")?;
    let depth_budget = need("depth_budget")? as usize;
    let max_nodes = need("max_nodes")? as usize;
    let next_id = need("next_id")?;

    let mut model = CompositeModel::new(depth_budget, max_nodes);
    for (line_no, line) in lines {
        let mut c = Cursor { line_no, text: line, pos: 0 };
        let start = c.pos;
        let id: u32 = c
            .word()?
            .parse()
            .map_err(|_| c.at(start).err("node id must be a non-negative integer"))?;
        c.skip_ws();
        let kpos = c.pos;
        let kind: AtomKind = c.word()?.parse().map_err(|e: String| c.at(kpos).err(e))?;
        c.skip_ws();
        let mpos = c.pos;
        let mutable = match c.word()? {
            "mutable" => true,
            "immutable" => false,
            other => return Err(c.at(mpos).err(format!("expected mutable/immutable, got `{other}`"))),
        };
        let (body, base) = c.group('[', ']')?;
        let mut inputs = Vec::new();
        for (p, item) in split_items(body, base) {
            let v: u32 = item.parse().map_err(|_| c.at(p).err(format!("bad parent id `{item}`")))?;
            inputs.push(NodeId(v));
        }
        let (body, base) = c.group('{', '}')?;
        let mut hyper = BTreeMap::new();
        for (p, item) in split_items(body, base) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| c.at(p).err("expected key=value"))?;
            hyper.insert(k.to_string(), parse_f64(&c.at(p), v)?);
        }
        let (body, base) = c.group('(', ')')?;
        let mut params = Vec::new();
        for (p, item) in split_items(body, base) {
            params.push(parse_f64(&c.at(p), item)?);
        }
        c.finish()?;
        if model.node(NodeId(id)).is_some() {
            return Err(c.at(start).err(format!("duplicate node id {id}")));
        }
        model.insert_raw(
            NodeId(id),
            Node {
                atom: AtomInstance { kind, params, hyper, mutable },
                inputs,
            },
        );
    }
    if model.is_empty() {
        return Err(ParseError { line: hline, column: 1, message: "model has no nodes".into() });
    }
    model.set_output(NodeId(output as u32));
    model.set_next_id(next_id.max(model.next_id() as u64) as u32);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::AtomInstance;

    #[test]
    fn empty_text_is_error() {
        let e = parse("").unwrap_err();
        assert_eq!((e.line, e.column), (1, 1));
    }

    #[test]
    fn round_trip_small_model() {
        let mut m = CompositeModel::new(4, 16);
        let a = m.add_node(AtomInstance::sin(0.1, -2.5e-7, 1.0 / 3.0), vec![]);
        let b = m.add_node(AtomInstance::lag(4).with_hyper("x", 0.1), vec![]);
        let _ = b;
        let s = m.add_node(AtomInstance::sum(), vec![a, a]);
        m.set_output(s);
        m.remove_orphans();
        let text = serialize(&m);
        let back = parse(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(serialize(&back), text);
    }

    #[test]
    fn errors_carry_positions() {
        let text = "composite output=0 depth_budget=4 max_nodes=16 next_id=1\n0 sin mutable [] {} (1 x 2)\n";
        let e = parse(text).unwrap_err();
        assert_eq!(e.line, 2);
        assert_eq!(e.column, 24);

        let text = "composite output=0 depth_budget=4 max_nodes=16 next_id=1\n0 cosine mutable [] {} ()\n";
        let e = parse(text).unwrap_err();
        assert_eq!((e.line, e.column), (2, 3));

        let e = parse("composite output=0\n").unwrap_err();
        assert!(e.message.contains("depth_budget"));
    }
}
