//! Text forms of inequalities and of whole causal models.
//!
//! Inequalities: `2.5*x1 - x3 < 9.9`, `x2 > 0.1`, chained `5.5 < x1 < 12.7`;
//! regions join inequalities with `&`.
//!
//! Definition files hold one record per line (`#` starts a comment):
//!
//! ```text
//! component m1, t0, v0
//! product raw, blank
//! event t0_high := t0_level > 1.9
//! concept t0_nominal := 0.8 < t0_level < 1.2
//! system t0_fill := t0_low -> t0_nominal on t0_high ok t0, v0 with p=0.9
//! step cut := 2*raw -> blank ok m1
//! bind t0_level_ok = t0_nominal
//! ```

use std::collections::{BTreeMap, BTreeSet};

use super::{CausalModel, CausalityError, LinearInequality, ProductCausality, Result, SystemCausality};
use crate::data_model::is_identifier;
use crate::planning::ProductMultiset;

/// Predicate id → concept name.
pub type Bindings = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Star,
    Plus,
    Minus,
    Lt,
    Gt,
}

fn err(message: impl Into<String>) -> CausalityError {
    CausalityError::Parse { line: 1, message: message.into() }
}

fn tokenize(text: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '*' | '+' | '-' | '<' | '>' => {
                out.push(match c {
                    '*' => Tok::Star,
                    '+' => Tok::Plus,
                    '-' => Tok::Minus,
                    '<' => Tok::Lt,
                    _ => Tok::Gt,
                });
                i += 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() {
                    let d = chars[i];
                    let exp_sign = (d == '+' || d == '-') && matches!(chars[i - 1], 'e' | 'E');
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let s: String = chars[start..i].iter().collect();
                let v = s.parse::<f64>().map_err(|_| err(format!("bad number `{s}`")))?;
                out.push(Tok::Num(v));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Tok::Ident(chars[start..i].iter().collect()));
            }
            other => return Err(err(format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

enum Side {
    Number(f64),
    Expr(Vec<f64>),
}

fn parse_side(toks: &[Tok], names: &[String]) -> Result<Side> {
    match toks {
        [] => return Err(err("missing operand")),
        [Tok::Num(v)] | [Tok::Plus, Tok::Num(v)] => return Ok(Side::Number(*v)),
        [Tok::Minus, Tok::Num(v)] => return Ok(Side::Number(-*v)),
        _ => {}
    }
    let mut coeffs = vec![0.0; names.len()];
    let mut i = 0;
    let mut first = true;
    while i < toks.len() {
        let mut sign = 1.0;
        match toks[i] {
            Tok::Plus => i += 1,
            Tok::Minus => {
                sign = -1.0;
                i += 1;
            }
            _ if first => {}
            _ => return Err(err("expected `+` or `-` between terms")),
        }
        first = false;
        let (coeff, name) = match (toks.get(i), toks.get(i + 1), toks.get(i + 2)) {
            (Some(Tok::Num(c)), Some(Tok::Star), Some(Tok::Ident(n))) => {
                i += 3;
                (*c, n)
            }
            (Some(Tok::Ident(n)), _, _) => {
                i += 1;
                (1.0, n)
            }
            _ => return Err(err("expected a term `coeff*signal` or `signal`")),
        };
        let idx = names.iter().position(|s| s == name).ok_or_else(|| err(format!("unknown signal `{name}`")))?;
        coeffs[idx] += sign * coeff;
    }
    Ok(Side::Expr(coeffs))
}

fn parse_chain(text: &str, names: &[String]) -> Result<Vec<LinearInequality>> {
    let toks = tokenize(text)?;
    let mut sides = Vec::new();
    let mut ops = Vec::new();
    let mut start = 0;
    for (i, t) in toks.iter().enumerate() {
        if matches!(t, Tok::Lt | Tok::Gt) {
            sides.push(parse_side(&toks[start..i], names)?);
            ops.push(t.clone());
            start = i + 1;
        }
    }
    sides.push(parse_side(&toks[start..], names)?);
    if ops.is_empty() {
        return Err(err("expected `<` or `>`"));
    }
    let mut out = Vec::new();
    for (k, op) in ops.iter().enumerate() {
        let less = *op == Tok::Lt;
        // normalize to f·x < c
        let (f, c, negate) = match (&sides[k], &sides[k + 1]) {
            (Side::Expr(f), Side::Number(c)) => (f, *c, !less),
            (Side::Number(c), Side::Expr(f)) => (f, *c, less),
            _ => return Err(err("each comparison needs a linear expression on one side and a number on the other")),
        };
        let ineq = if negate {
            LinearInequality::new(f.iter().map(|v| -v).collect(), -c)?
        } else {
            LinearInequality::new(f.clone(), c)?
        };
        out.push(ineq);
    }
    Ok(out)
}

/// Parses one inequality over the signals `names`.
pub fn parse_halfspace(text: &str, names: &[String]) -> Result<LinearInequality> {
    let mut v = parse_chain(text, names)?;
    if v.len() != 1 {
        return Err(err("an event needs exactly one inequality"));
    }
    Ok(v.remove(0))
}

/// Parses a `&`-joined conjunction of (possibly chained) inequalities.
pub fn parse_region(text: &str, names: &[String]) -> Result<Vec<LinearInequality>> {
    let mut out = Vec::new();
    for part in text.split('&') {
        out.extend(parse_chain(part, names)?);
    }
    Ok(out)
}

fn write_coeff(out: &mut String, c: f64, name: &str, first: bool) {
    let mag = c.abs();
    let term = if mag == 1.0 { name.to_string() } else { format!("{mag}*{name}") };
    match (first, c < 0.0) {
        (true, false) => out.push_str(&term),
        (true, true) => out.push_str(&format!("-{term}")),
        (false, false) => out.push_str(&format!(" + {term}")),
        (false, true) => out.push_str(&format!(" - {term}")),
    }
}

/// Renders `h` in the grammar accepted by [`parse_halfspace`]; round-trips exactly.
pub fn format_inequality(h: &LinearInequality, names: &[String]) -> String {
    let mut out = String::new();
    let mut first = true;
    for (c, name) in h.coeffs().iter().zip(names) {
        if *c != 0.0 {
            write_coeff(&mut out, *c, name, first);
            first = false;
        }
    }
    out.push_str(&format!(" < {}", h.bound()));
    out
}

/// Parses `raw + 2*glue`; `{}` or blank is the empty multiset.
pub fn parse_multiset(text: &str) -> Result<ProductMultiset> {
    let text = text.trim();
    let mut m = ProductMultiset::new();
    if text.is_empty() || text == "{}" {
        return Ok(m);
    }
    for item in text.split('+') {
        let item = item.trim();
        let (n, name) = match item.split_once('*') {
            Some((n, name)) => {
                let n: u32 = n.trim().parse().map_err(|_| err(format!("bad count in `{item}`")))?;
                (n, name.trim())
            }
            None => (1, item),
        };
        if !is_identifier(name) {
            return Err(err(format!("bad product name `{name}`")));
        }
        if n == 0 {
            return Err(err(format!("zero count in `{item}`")));
        }
        m.add(&crate::causality::ProductId::new(name), n);
    }
    Ok(m)
}

struct Tail {
    transition: String,
    on: Option<String>,
    ok: BTreeSet<String>,
    info: BTreeMap<String, String>,
}

fn parse_tail(body: &str) -> Result<Tail> {
    let mut sections: [Vec<&str>; 4] = Default::default();
    let mut cur = 0;
    for w in body.split_whitespace() {
        match w {
            "on" => cur = 1,
            "ok" => cur = 2,
            "with" => cur = 3,
            _ => sections[cur].push(w),
        }
    }
    let on = match sections[1].as_slice() {
        [] => None,
        [e] => Some(e.to_string()),
        _ => return Err(err("`on` takes one event name")),
    };
    let ok = sections[2].join(" ").split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
    let mut info = BTreeMap::new();
    for pair in sections[3].join(" ").split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = pair.split_once('=').ok_or_else(|| err(format!("metadata `{pair}` is not key=value")))?;
        info.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(Tail { transition: sections[0].join(" "), on, ok, info })
}

fn split_def(rest: &str) -> Result<(&str, &str)> {
    let (name, body) = rest.split_once(":=").ok_or_else(|| err("expected `name := ...`"))?;
    let name = name.trim();
    if !is_identifier(name) {
        return Err(err(format!("bad name `{name}`")));
    }
    Ok((name, body.trim()))
}

impl CausalModel {
    fn event_ref(&self, name: Option<String>) -> Result<Option<super::EventId>> {
        name.map(|n| {
            self.event_by_name(&n).map(|e| e.id).ok_or(CausalityError::DanglingReference(format!("event `{n}`")))
        })
        .transpose()
    }

    fn load_record(&mut self, line: &str, bindings: &mut Bindings) -> Result<()> {
        let (kind, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        match kind {
            "product" => {
                for p in rest.split(',').map(str::trim) {
                    if !is_identifier(p) {
                        return Err(err(format!("bad product name `{p}`")));
                    }
                    self.define_product(p);
                }
            }
            "component" => {
                for c in rest.split(',').map(str::trim) {
                    if !is_identifier(c) {
                        return Err(err(format!("bad component id `{c}`")));
                    }
                    self.declare_component(c);
                }
            }
            "event" => {
                let (name, body) = split_def(rest)?;
                self.define_event_str(body, name)?;
            }
            "concept" => {
                let (name, body) = split_def(rest)?;
                self.define_concept_str(body, name)?;
            }
            "system" => {
                let (name, body) = split_def(rest)?;
                let tail = parse_tail(body)?;
                let (from, to) = tail.transition.split_once("->").ok_or_else(|| err("expected `from -> to`"))?;
                let concept = |n: &str| {
                    self.concept_by_name(n.trim())
                        .map(|c| c.id)
                        .ok_or_else(|| CausalityError::DanglingReference(format!("concept `{}`", n.trim())))
                };
                let (from, to) = (concept(from)?, concept(to)?);
                let event = self.event_ref(tail.on)?;
                self.add_system_causality(SystemCausality {
                    name: name.into(),
                    from,
                    event,
                    to,
                    info: tail.info,
                    ok: tail.ok,
                })?;
            }
            "step" => {
                let (name, body) = split_def(rest)?;
                let tail = parse_tail(body)?;
                let (inputs, outputs) = tail.transition.split_once("->").ok_or_else(|| err("expected `in -> out`"))?;
                let event = self.event_ref(tail.on)?;
                self.add_product_causality(ProductCausality {
                    name: name.into(),
                    inputs: parse_multiset(inputs)?,
                    event,
                    outputs: parse_multiset(outputs)?,
                    info: tail.info,
                    ok: tail.ok,
                })?;
            }
            "bind" => {
                let (pred, concept) = rest.split_once('=').ok_or_else(|| err("expected `bind predicate = concept`"))?;
                let (pred, concept) = (pred.trim(), concept.trim());
                if !is_identifier(pred) {
                    return Err(err(format!("bad predicate name `{pred}`")));
                }
                if self.concept_by_name(concept).is_none() {
                    return Err(CausalityError::DanglingReference(format!("concept `{concept}`")));
                }
                if bindings.insert(pred.into(), concept.into()).is_some() {
                    return Err(CausalityError::DuplicateName(pred.into()));
                }
            }
            other => return Err(err(format!("unknown record kind `{other}`"))),
        }
        Ok(())
    }

    /// Applies every record of a definitions file, returning its bindings.
    /// Errors carry the 1-based line number.
    pub fn load_definitions(&mut self, text: &str) -> Result<Bindings> {
        let mut bindings = Bindings::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.load_record(line, &mut bindings).map_err(|e| {
                let line = i + 1;
                match e {
                    CausalityError::Parse { message, .. } => CausalityError::Parse { line, message },
                    CausalityError::DanglingReference(m) => {
                        CausalityError::DanglingReference(format!("line {line}: {m}"))
                    }
                    other => CausalityError::Parse { line, message: other.to_string() },
                }
            })?;
        }
        Ok(bindings)
    }

    /// Renders the model (and `bindings`) in the format read by [`CausalModel::load_definitions`].
    pub fn to_definitions(&self, bindings: &Bindings) -> String {
        let names = self.signal_names();
        let mut out = String::new();
        let comps: Vec<&str> = self.components().map(String::as_str).collect();
        if !comps.is_empty() {
            out.push_str(&format!("component {}\n", comps.join(", ")));
        }
        let products: Vec<&str> = self.products().map(|p| p.as_str()).collect();
        if !products.is_empty() {
            out.push_str(&format!("product {}\n", products.join(", ")));
        }
        for e in self.events() {
            out.push_str(&format!("event {} := {}\n", e.name, format_inequality(&e.halfspace, names)));
        }
        for c in self.concepts() {
            let parts: Vec<String> = c.region.iter().map(|h| format_inequality(h, names)).collect();
            out.push_str(&format!("concept {} := {}\n", c.name, parts.join(" & ")));
        }
        let tail = |event: Option<super::EventId>, ok: &BTreeSet<String>, info: &BTreeMap<String, String>| {
            let mut s = String::new();
            if let Some(e) = event.and_then(|e| self.event(e)) {
                s.push_str(&format!(" on {}", e.name));
            }
            if !ok.is_empty() {
                s.push_str(&format!(" ok {}", ok.iter().cloned().collect::<Vec<_>>().join(", ")));
            }
            if !info.is_empty() {
                let kv: Vec<String> = info.iter().map(|(k, v)| format!("{k}={v}")).collect();
                s.push_str(&format!(" with {}", kv.join(", ")));
            }
            s
        };
        for sc in self.system_causalities() {
            let from = &self.concept(sc.from).expect("validated on insert").name;
            let to = &self.concept(sc.to).expect("validated on insert").name;
            out.push_str(&format!("system {} := {from} -> {to}{}\n", sc.name, tail(sc.event, &sc.ok, &sc.info)));
        }
        for pc in self.product_causalities() {
            out.push_str(&format!(
                "step {} := {} -> {}{}\n",
                pc.name,
                pc.inputs,
                pc.outputs,
                tail(pc.event, &pc.ok, &pc.info)
            ));
        }
        for (p, c) in bindings {
            out.push_str(&format!("bind {p} = {c}\n"));
        }
        out
    }
}
