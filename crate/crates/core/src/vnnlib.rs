//! VNN-LIB local-robustness properties and counterexample witnesses.
//!
//! Generated files declare `X_0 .. X_{P-1}` and `Y_0 .. Y_{L-1}` as reals,
//! bound every input to `[v - eps, v + eps]`, and assert the negated
//! robustness property as a disjunction `(or (>= Y_j Y_t) ...)` over every
//! class `j` other than the target `t`. Input indices follow the channel-last
//! layout: `X_((row * W + col) * 3 + channel)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::bnn::{runner_up_margin, BnnError, Label, Network};
use crate::tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VnnlibError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unsupported construct {construct}")]
    Unsupported { line: usize, construct: String },
    #[error("input X_{0} has no {1} bound")]
    MissingBound(usize, &'static str),
    #[error("input X_{index} has empty bounds [{lo}, {hi}]")]
    EmptyBounds { index: usize, lo: f64, hi: f64 },
    #[error("output constraint is not a single-target robustness disjunction: {0}")]
    Disjunction(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("epsilon must be a non-negative number, got {0}")]
    BadEpsilon(f64),
    #[error("{what}: expected {expected} values, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error(transparent)]
    Model(#[from] BnnError),
}

/// Provenance recorded in generated files.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropertySource {
    pub image_index: usize,
    pub epsilon: f64,
}

/// An L-infinity robustness query: every input within its bounds must keep
/// `target_label` strictly ahead of all other classes.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessProperty {
    pub num_inputs: usize,
    pub num_outputs: usize,
    pub input_bounds: Vec<(f64, f64)>,
    pub target_label: Label,
    pub source: Option<PropertySource>,
}

impl RobustnessProperty {
    /// The ball of radius `epsilon` around `image`, optionally clipped to
    /// the pixel range `[0, 255]`.
    pub fn around(
        image: &Tensor,
        epsilon: f64,
        label: Label,
        num_outputs: usize,
        clip: bool,
    ) -> Result<Self, VnnlibError> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(VnnlibError::BadEpsilon(epsilon));
        }
        if label >= num_outputs {
            return Err(VnnlibError::LabelOutOfRange {
                label,
                classes: num_outputs,
            });
        }
        let input_bounds = image
            .data()
            .iter()
            .map(|&v| {
                let (lo, hi) = (v - epsilon, v + epsilon);
                if clip {
                    (lo.clamp(0.0, 255.0), hi.clamp(0.0, 255.0))
                } else {
                    (lo, hi)
                }
            })
            .collect::<Vec<_>>();
        Ok(Self {
            num_inputs: input_bounds.len(),
            num_outputs,
            input_bounds,
            target_label: label,
            source: None,
        })
    }

    pub fn with_source(mut self, image_index: usize, epsilon: f64) -> Self {
        self.source = Some(PropertySource {
            image_index,
            epsilon,
        });
        self
    }

    pub fn center(&self) -> Vec<f64> {
        self.input_bounds
            .iter()
            .map(|&(lo, hi)| lo + (hi - lo) / 2.0)
            .collect()
    }

    pub fn contains(&self, input: &[f64]) -> bool {
        input.len() == self.num_inputs
            && input
                .iter()
                .zip(&self.input_bounds)
                .all(|(&v, &(lo, hi))| lo <= v && v <= hi)
    }

    /// Bounds snapped inward to integers, or `None` when some interval
    /// contains no integer.
    pub fn integer_bounds(&self) -> Option<Vec<(f64, f64)>> {
        self.input_bounds
            .iter()
            .map(|&(lo, hi)| {
                let (lo, hi) = (lo.ceil(), hi.floor());
                (lo <= hi).then_some((lo, hi))
            })
            .collect()
    }

    /// Shape agreement with a network.
    pub fn check_network(&self, net: &Network) -> Result<(), VnnlibError> {
        if net.input_len() != self.num_inputs {
            return Err(VnnlibError::LengthMismatch {
                what: "network inputs",
                expected: self.num_inputs,
                actual: net.input_len(),
            });
        }
        if net.num_classes() != self.num_outputs {
            return Err(VnnlibError::LengthMismatch {
                what: "network outputs",
                expected: self.num_outputs,
                actual: net.num_classes(),
            });
        }
        Ok(())
    }

    /// Renders the property as VNN-LIB text.
    pub fn render(&self) -> String {
        let mut s = String::with_capacity(self.num_inputs * 80 + self.num_outputs * 40);
        let t = self.target_label;
        let _ = writeln!(s, "; Local robustness property for label {t}");
        if let Some(src) = self.source {
            let _ = writeln!(
                s,
                "; source image_index={} epsilon={}",
                src.image_index, src.epsilon
            );
        }
        s.push('\n');
        for i in 0..self.num_inputs {
            let _ = writeln!(s, "(declare-const X_{i} Real)");
        }
        s.push('\n');
        for j in 0..self.num_outputs {
            let _ = writeln!(s, "(declare-const Y_{j} Real)");
        }
        s.push_str("\n; Input constraints:\n");
        for (i, &(lo, hi)) in self.input_bounds.iter().enumerate() {
            let _ = writeln!(s, "(assert (<= X_{i} {}))", real(hi));
            let _ = writeln!(s, "(assert (>= X_{i} {}))", real(lo));
        }
        s.push_str("\n; Output constraints:\n");
        let mut first = true;
        for j in (0..self.num_outputs).filter(|&j| j != t) {
            if first {
                let _ = write!(s, "(assert (or (>= Y_{j} Y_{t})");
                first = false;
            } else {
                let _ = write!(s, "\n            (>= Y_{j} Y_{t})");
            }
        }
        s.push_str("))\n");
        s
    }
}

/// Fixed-point rendering with eight decimals.
fn real(v: f64) -> String {
    let s = format!("{v:.8}");
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Renders the robustness property around `image` as VNN-LIB text.
pub fn generate_property(
    image: &Tensor,
    epsilon: f64,
    label: Label,
    num_outputs: usize,
    clip: bool,
) -> Result<String, VnnlibError> {
    Ok(RobustnessProperty::around(image, epsilon, label, num_outputs, clip)?.render())
}

/// Benchmark file name, e.g. `model_30_idx_1678_eps_1.00000.vnnlib`.
pub fn property_file_name(model_size: usize, image_index: usize, epsilon: f64) -> String {
    format!("model_{model_size}_idx_{image_index}_eps_{epsilon:.5}.vnnlib")
}

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String, usize),
    List(Vec<Sexp>, usize),
}

impl Sexp {
    fn line(&self) -> usize {
        match self {
            Sexp::Atom(_, l) | Sexp::List(_, l) => *l,
        }
    }

    fn atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(a, _) => Some(a),
            Sexp::List(..) => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Sexp::Atom(a, _) => a.clone(),
            Sexp::List(items, _) => {
                let inner: Vec<String> = items.iter().map(Sexp::render).collect();
                format!("({})", inner.join(" "))
            }
        }
    }
}

/// Parses s-expressions, skipping `;` comments. Comment text is returned
/// separately so metadata lines can be recovered.
fn read_sexps(text: &str) -> Result<(Vec<Sexp>, Vec<String>), VnnlibError> {
    let mut stack: Vec<(Vec<Sexp>, usize)> = vec![(Vec::new(), 0)];
    let mut comments = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let code = match raw.find(';') {
            Some(at) => {
                comments.push(raw[at + 1..].trim().to_string());
                &raw[..at]
            }
            None => raw,
        };
        let mut atom = String::new();
        let flush = |atom: &mut String, stack: &mut Vec<(Vec<Sexp>, usize)>| {
            if !atom.is_empty() {
                stack.last_mut().unwrap().0.push(Sexp::Atom(std::mem::take(atom), line));
            }
        };
        for ch in code.chars() {
            match ch {
                '(' => {
                    flush(&mut atom, &mut stack);
                    stack.push((Vec::new(), line));
                }
                ')' => {
                    flush(&mut atom, &mut stack);
                    if stack.len() == 1 {
                        return Err(VnnlibError::Syntax {
                            line,
                            message: "unbalanced ')'".into(),
                        });
                    }
                    let (items, start) = stack.pop().unwrap();
                    stack.last_mut().unwrap().0.push(Sexp::List(items, start));
                }
                '|' | '"' => {
                    return Err(VnnlibError::Unsupported {
                        line,
                        construct: "quoted symbol or string".into(),
                    })
                }
                c if c.is_whitespace() => flush(&mut atom, &mut stack),
                c => atom.push(c),
            }
        }
        flush(&mut atom, &mut stack);
    }
    if stack.len() != 1 {
        let (_, start) = stack.last().unwrap();
        return Err(VnnlibError::Syntax {
            line: *start,
            message: "unclosed '('".into(),
        });
    }
    Ok((stack.pop().unwrap().0, comments))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Var {
    X(usize),
    Y(usize),
}

fn parse_var(s: &str) -> Option<Var> {
    let digits_ok = |d: &str| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit());
    if let Some(d) = s.strip_prefix("X_").filter(|d| digits_ok(d)) {
        return d.parse().ok().map(Var::X);
    }
    if let Some(d) = s.strip_prefix("Y_").filter(|d| digits_ok(d)) {
        return d.parse().ok().map(Var::Y);
    }
    None
}

fn parse_number(e: &Sexp) -> Option<f64> {
    match e {
        Sexp::Atom(a, _) => {
            let ok = a.bytes().all(|b| b.is_ascii_digit() || b == b'.' || b == b'-' || b == b'e' || b == b'E' || b == b'+');
            if ok {
                a.parse().ok()
            } else {
                None
            }
        }
        Sexp::List(items, _) => match items.as_slice() {
            [op, inner] if op.atom() == Some("-") => parse_number(inner).map(|v| -v),
            _ => None,
        },
    }
}

enum Term {
    Var(Var),
    Num(f64),
}

fn term(e: &Sexp) -> Option<Term> {
    if let Some(v) = e.atom().and_then(parse_var) {
        return Some(Term::Var(v));
    }
    parse_number(e).map(Term::Num)
}

/// A comparison `left op right` normalized to `big >= small`.
fn comparison(e: &Sexp) -> Option<(Term, Term)> {
    let Sexp::List(items, _) = e else { return None };
    let [op, a, b] = items.as_slice() else {
        return None;
    };
    let (a, b) = (term(a)?, term(b)?);
    match op.atom()? {
        ">=" => Some((a, b)),
        "<=" => Some((b, a)),
        _ => None,
    }
}

/// One disjunct `Y_j >= Y_t` as `(j, t)`.
fn disjunct(e: &Sexp) -> Result<(usize, usize), VnnlibError> {
    // VNN-COMP files sometimes wrap each disjunct in a one-element `and`.
    if let Sexp::List(items, _) = e {
        if let [head, inner] = items.as_slice() {
            if head.atom() == Some("and") {
                return disjunct(inner);
            }
        }
    }
    match comparison(e) {
        Some((Term::Var(Var::Y(j)), Term::Var(Var::Y(t)))) => Ok((j, t)),
        _ => Err(VnnlibError::Disjunction(format!(
            "line {}: {} is not of the form (>= Y_j Y_t)",
            e.line(),
            e.render()
        ))),
    }
}

fn parse_source(comments: &[String]) -> Option<PropertySource> {
    comments.iter().find_map(|c| {
        let rest = c.strip_prefix("source ")?;
        let mut index = None;
        let mut eps = None;
        for kv in rest.split_whitespace() {
            match kv.split_once('=') {
                Some(("image_index", v)) => index = v.parse().ok(),
                Some(("epsilon", v)) => eps = v.parse().ok(),
                _ => {}
            }
        }
        Some(PropertySource {
            image_index: index?,
            epsilon: eps?,
        })
    })
}

/// Parses a single-target robustness property.
pub fn parse_property(text: &str) -> Result<RobustnessProperty, VnnlibError> {
    let (forms, comments) = read_sexps(text)?;
    let mut xs: BTreeMap<usize, (Option<f64>, Option<f64>)> = BTreeMap::new();
    let mut ys: Vec<usize> = Vec::new();
    let mut disjuncts: Option<Vec<(usize, usize)>> = None;

    for form in &forms {
        let line = form.line();
        let unsupported = || VnnlibError::Unsupported {
            line,
            construct: form.render().chars().take(60).collect(),
        };
        let Sexp::List(items, _) = form else {
            return Err(unsupported());
        };
        match items.first().and_then(Sexp::atom) {
            Some("declare-const") => {
                let [_, name, sort] = items.as_slice() else {
                    return Err(unsupported());
                };
                if sort.atom() != Some("Real") {
                    return Err(unsupported());
                }
                match name.atom().and_then(parse_var) {
                    Some(Var::X(i)) => {
                        xs.entry(i).or_insert((None, None));
                    }
                    Some(Var::Y(j)) => ys.push(j),
                    None => return Err(unsupported()),
                }
            }
            Some("assert") => {
                let [_, body] = items.as_slice() else {
                    return Err(unsupported());
                };
                if let Sexp::List(inner, _) = body {
                    if inner.first().and_then(Sexp::atom) == Some("or") {
                        if disjuncts.is_some() {
                            return Err(VnnlibError::Disjunction(format!(
                                "line {line}: more than one output constraint"
                            )));
                        }
                        disjuncts = Some(inner[1..].iter().map(disjunct).collect::<Result<_, _>>()?);
                        continue;
                    }
                }
                match comparison(body) {
                    Some((Term::Var(Var::X(i)), Term::Num(c))) => {
                        let b = xs.get_mut(&i).ok_or_else(|| VnnlibError::Syntax {
                            line,
                            message: format!("X_{i} used before declaration"),
                        })?;
                        b.0 = Some(b.0.map_or(c, |lo: f64| lo.max(c)));
                    }
                    Some((Term::Num(c), Term::Var(Var::X(i)))) => {
                        let b = xs.get_mut(&i).ok_or_else(|| VnnlibError::Syntax {
                            line,
                            message: format!("X_{i} used before declaration"),
                        })?;
                        b.1 = Some(b.1.map_or(c, |hi: f64| hi.min(c)));
                    }
                    Some((Term::Var(Var::Y(_)), Term::Var(Var::Y(_)))) => {
                        if disjuncts.is_some() {
                            return Err(VnnlibError::Disjunction(format!(
                                "line {line}: more than one output constraint"
                            )));
                        }
                        disjuncts = Some(vec![disjunct(body)?]);
                    }
                    _ => return Err(unsupported()),
                }
            }
            _ => return Err(unsupported()),
        }
    }

    let num_inputs = xs.len();
    if let Some((pos, (&i, _))) = xs.iter().enumerate().find(|(pos, (&i, _))| *pos != i) {
        return Err(VnnlibError::Syntax {
            line: 0,
            message: format!("input indices are not contiguous: X_{pos} missing (found X_{i})"),
        });
    }
    ys.sort_unstable();
    ys.dedup();
    let num_outputs = ys.len();
    if ys.iter().enumerate().any(|(pos, &j)| pos != j) {
        return Err(VnnlibError::Syntax {
            line: 0,
            message: "output indices are not contiguous".into(),
        });
    }
    let mut input_bounds = Vec::with_capacity(num_inputs);
    for (&i, &(lo, hi)) in &xs {
        let lo = lo.ok_or(VnnlibError::MissingBound(i, "lower"))?;
        let hi = hi.ok_or(VnnlibError::MissingBound(i, "upper"))?;
        if lo > hi {
            return Err(VnnlibError::EmptyBounds { index: i, lo, hi });
        }
        input_bounds.push((lo, hi));
    }

    let disjuncts = disjuncts.ok_or_else(|| VnnlibError::Disjunction("no output constraint".into()))?;
    let target = disjuncts
        .first()
        .map(|&(_, t)| t)
        .ok_or_else(|| VnnlibError::Disjunction("empty disjunction".into()))?;
    if let Some(&(j, t)) = disjuncts.iter().find(|&&(_, t)| t != target) {
        return Err(VnnlibError::Disjunction(format!(
            "mixed targets: (>= Y_{} Y_{target}) and (>= Y_{j} Y_{t})",
            disjuncts[0].0
        )));
    }
    if target >= num_outputs {
        return Err(VnnlibError::LabelOutOfRange {
            label: target,
            classes: num_outputs,
        });
    }
    let mut others: Vec<usize> = disjuncts.iter().map(|&(j, _)| j).collect();
    others.sort_unstable();
    let expected: Vec<usize> = (0..num_outputs).filter(|&j| j != target).collect();
    if others != expected {
        return Err(VnnlibError::Disjunction(format!(
            "expected one disjunct for every class except {target}"
        )));
    }

    Ok(RobustnessProperty {
        num_inputs,
        num_outputs,
        input_bounds,
        target_label: target,
        source: parse_source(&comments),
    })
}

/// A concrete input claimed to violate a property.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub input_values: Vec<f64>,
    pub output_values: Option<Vec<f64>>,
}

impl Witness {
    pub fn new(input_values: Vec<f64>) -> Self {
        Self {
            input_values,
            output_values: None,
        }
    }

    pub fn with_outputs(mut self, outputs: Vec<f64>) -> Self {
        self.output_values = Some(outputs);
        self
    }

    /// One `(X_i value)` line per input, then `(Y_j value)` lines when
    /// outputs are present. Values use the shortest exact decimal form.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for (i, v) in self.input_values.iter().enumerate() {
            let _ = writeln!(s, "(X_{i} {v})");
        }
        for (j, v) in self.output_values.iter().flatten().enumerate() {
            let _ = writeln!(s, "(Y_{j} {v})");
        }
        s
    }

    /// Accepts the line format above, optionally preceded by `sat` and
    /// wrapped in an outer list as in competition result files.
    pub fn parse(text: &str) -> Result<Self, VnnlibError> {
        let (forms, _) = read_sexps(text)?;
        let mut xs = BTreeMap::new();
        let mut ys = BTreeMap::new();
        fn walk(
            e: &Sexp,
            xs: &mut BTreeMap<usize, f64>,
            ys: &mut BTreeMap<usize, f64>,
        ) -> Result<(), VnnlibError> {
            match e {
                Sexp::Atom(a, _) if a == "sat" => Ok(()),
                Sexp::Atom(a, line) => Err(VnnlibError::Syntax {
                    line: *line,
                    message: format!("unexpected atom '{a}'"),
                }),
                Sexp::List(items, line) => {
                    if let [name, value] = items.as_slice() {
                        if let (Some(var), Some(v)) = (name.atom().and_then(parse_var), parse_number(value)) {
                            match var {
                                Var::X(i) => xs.insert(i, v),
                                Var::Y(j) => ys.insert(j, v),
                            };
                            return Ok(());
                        }
                    }
                    if items.iter().all(|i| matches!(i, Sexp::List(..))) {
                        return items.iter().try_for_each(|i| walk(i, xs, ys));
                    }
                    Err(VnnlibError::Syntax {
                        line: *line,
                        message: format!("unexpected entry {}", e.render()),
                    })
                }
            }
        }
        for f in &forms {
            walk(f, &mut xs, &mut ys)?;
        }
        let dense = |m: BTreeMap<usize, f64>, what: &'static str| -> Result<Vec<f64>, VnnlibError> {
            if m.keys().enumerate().any(|(pos, &k)| pos != k) {
                return Err(VnnlibError::Syntax {
                    line: 0,
                    message: format!("{what} indices are not contiguous"),
                });
            }
            Ok(m.into_values().collect())
        };
        let input_values = dense(xs, "witness input")?;
        let outputs = dense(ys, "witness output")?;
        Ok(Self {
            input_values,
            output_values: (!outputs.is_empty()).then_some(outputs),
        })
    }
}

/// Why a witness was accepted or rejected.
#[derive(Debug, Clone, PartialEq)]
pub enum WitnessStatus {
    /// Inside the bounds and some `Y_j >= Y_target`.
    Valid { margin: f64 },
    OutOfBounds { index: usize, value: f64 },
    /// Every other class stays strictly below the target.
    NoViolation { margin: f64 },
}

impl WitnessStatus {
    pub fn is_valid(&self) -> bool {
        matches!(self, WitnessStatus::Valid { .. })
    }
}

pub fn witness_status(
    net: &Network,
    prop: &RobustnessProperty,
    w: &Witness,
) -> Result<WitnessStatus, VnnlibError> {
    prop.check_network(net)?;
    if w.input_values.len() != prop.num_inputs {
        return Err(VnnlibError::LengthMismatch {
            what: "witness inputs",
            expected: prop.num_inputs,
            actual: w.input_values.len(),
        });
    }
    if let Some(out) = &w.output_values {
        if out.len() != prop.num_outputs {
            return Err(VnnlibError::LengthMismatch {
                what: "witness outputs",
                expected: prop.num_outputs,
                actual: out.len(),
            });
        }
    }
    for (index, (&value, &(lo, hi))) in w.input_values.iter().zip(&prop.input_bounds).enumerate() {
        if !(lo <= value && value <= hi) {
            return Ok(WitnessStatus::OutOfBounds { index, value });
        }
    }
    let logits = net.forward_flat(&w.input_values)?;
    let margin = runner_up_margin(&logits, prop.target_label);
    Ok(if margin >= 0.0 {
        WitnessStatus::Valid { margin }
    } else {
        WitnessStatus::NoViolation { margin }
    })
}

/// True iff `w` lies within the bounds and the network output satisfies the
/// disjunction (ties count).
pub fn check_witness(
    net: &Network,
    prop: &RobustnessProperty,
    w: &Witness,
) -> Result<bool, VnnlibError> {
    Ok(witness_status(net, prop, w)?.is_valid())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bnn::{Layer, QDense};
    use proptest::prelude::*;

    fn image_30() -> Tensor {
        let mut data = vec![100.0; 30 * 30 * 3];
        data[2699] = 24.0;
        Tensor::new(vec![30, 30, 3], data).unwrap()
    }

    #[test]
    fn pixel_bounds_lines() {
        let text = generate_property(&image_30(), 10.0, 38, 43, false).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines.contains(&"(assert (<= X_2699 34.00000000))"));
        assert!(lines.contains(&"(assert (>= X_2699 14.00000000))"));
        assert!(lines.contains(&"(declare-const X_2699 Real)"));
        assert!(!text.contains("X_2700"));
    }

    #[test]
    fn disjunction_skips_target() {
        let text = generate_property(&image_30(), 10.0, 38, 43, false).unwrap();
        let count = text.matches("(>= Y_").count();
        assert_eq!(count, 42);
        assert!(text.contains("(>= Y_0 Y_38)"));
        assert!(text.contains("(>= Y_37 Y_38)"));
        assert!(text.contains("(>= Y_39 Y_38)"));
        assert!(text.contains("(>= Y_42 Y_38)))"));
        assert!(!text.contains("(>= Y_38 Y_38)"));
        assert_eq!(text.matches("(assert (<= X_").count(), 2700);
        assert_eq!(text.matches("(assert (>= X_").count(), 2700);
    }

    #[test]
    fn zero_epsilon_is_point_query() {
        let img = Tensor::new(vec![1, 2, 1], vec![7.0, 0.0]).unwrap();
        let p = parse_property(&generate_property(&img, 0.0, 1, 3, false).unwrap()).unwrap();
        assert_eq!(p.input_bounds, vec![(7.0, 7.0), (0.0, 0.0)]);
    }

    #[test]
    fn clipping_is_opt_in() {
        let img = Tensor::new(vec![1, 1, 2], vec![3.0, 250.0]).unwrap();
        let open = RobustnessProperty::around(&img, 10.0, 0, 2, false).unwrap();
        assert_eq!(open.input_bounds, vec![(-7.0, 13.0), (240.0, 260.0)]);
        let clipped = RobustnessProperty::around(&img, 10.0, 0, 2, true).unwrap();
        assert_eq!(clipped.input_bounds, vec![(0.0, 13.0), (240.0, 255.0)]);
        let text = open.render();
        assert!(text.contains("(assert (>= X_0 -7.00000000))"));
        assert_eq!(parse_property(&text).unwrap().input_bounds, open.input_bounds);
    }

    #[test]
    fn label_out_of_range() {
        assert!(matches!(
            generate_property(&image_30(), 1.0, 43, 43, false),
            Err(VnnlibError::LabelOutOfRange { label: 43, .. })
        ));
    }

    #[test]
    fn file_names() {
        assert_eq!(property_file_name(30, 1678, 1.0), "model_30_idx_1678_eps_1.00000.vnnlib");
        assert_eq!(property_file_name(64, 7, 15.0), "model_64_idx_7_eps_15.00000.vnnlib");
    }

    const SMALL: &str = "(declare-const X_0 Real)\n(declare-const X_1 Real)\n\
        (declare-const Y_0 Real)\n(declare-const Y_1 Real)\n(declare-const Y_2 Real)\n\
        (assert (<= X_0 2.0))\n(assert (>= X_0 1.0))\n(assert (<= X_1 (- 1.0)))\n(assert (>= X_1 -3))\n";

    #[test]
    fn mixed_targets_rejected() {
        let text = format!("{SMALL}(assert (or (>= Y_0 Y_2) (>= Y_1 Y_0)))\n");
        assert!(matches!(parse_property(&text), Err(VnnlibError::Disjunction(m)) if m.contains("mixed")));
    }

    #[test]
    fn missing_bound_rejected() {
        let text = SMALL.replace("(assert (>= X_1 -3))\n", "") + "(assert (or (>= Y_0 Y_2) (>= Y_1 Y_2)))";
        assert_eq!(parse_property(&text), Err(VnnlibError::MissingBound(1, "lower")));
    }

    #[test]
    fn partial_disjunction_rejected() {
        let text = format!("{SMALL}(assert (or (>= Y_0 Y_2)))\n");
        assert!(matches!(parse_property(&text), Err(VnnlibError::Disjunction(_))));
    }

    #[test]
    fn unknown_construct_rejected() {
        let text = format!("(set-logic QF_LRA)\n{SMALL}(assert (or (>= Y_0 Y_2) (>= Y_1 Y_2)))\n");
        assert!(matches!(parse_property(&text), Err(VnnlibError::Unsupported { line: 1, .. })));
    }

    #[test]
    fn accepts_alternate_forms() {
        let text = format!("{SMALL}; comment\n(assert (or (and (<= Y_2 Y_0)) (>= Y_1 Y_2)))\n");
        let p = parse_property(&text).unwrap();
        assert_eq!(p.target_label, 2);
        assert_eq!(p.input_bounds, vec![(1.0, 2.0), (-3.0, -1.0)]);
    }

    #[test]
    fn reformatted_text_parses_identically() {
        let img = Tensor::new(vec![2, 2, 3], (0..12).map(|v| v as f64 * 20.0).collect()).unwrap();
        let text = generate_property(&img, 3.0, 4, 6, false).unwrap();
        let squashed = text
            .lines()
            .filter(|l| !l.starts_with(';'))
            .collect::<Vec<_>>()
            .join(" ")
            .replace(' ', "\n  \t");
        assert_eq!(parse_property(&squashed).unwrap(), parse_property(&text).unwrap());
    }

    #[test]
    fn witness_text_round_trip() {
        let w = Witness::new(vec![14.0, 0.1, -3.5]).with_outputs(vec![1.0, -2.0]);
        assert_eq!(Witness::parse(&w.render()).unwrap(), w);
        let wrapped = "sat\n((X_0 1.5)\n (X_1 2))";
        assert_eq!(Witness::parse(wrapped).unwrap(), Witness::new(vec![1.5, 2.0]));
    }

    fn identity_net() -> Network {
        // logits = (x0 + x1, x0 - x1)
        Network::new(
            vec![2],
            vec![Layer::QDense(QDense::new(2, 2, vec![1, 1, 1, -1], false).unwrap())],
            2,
        )
        .unwrap()
    }

    #[test]
    fn witness_checks() {
        let net = identity_net();
        let prop = RobustnessProperty {
            num_inputs: 2,
            num_outputs: 2,
            input_bounds: vec![(0.0, 2.0), (0.0, 2.0)],
            target_label: 0,
            source: None,
        };
        // center: logits (2, 0), target strictly ahead
        assert!(!check_witness(&net, &prop, &Witness::new(vec![1.0, 1.0])).unwrap());
        // x1 = 0 ties: (x0, x0)
        assert!(check_witness(&net, &prop, &Witness::new(vec![1.0, 0.0])).unwrap());
        // out of bounds even though outputs would violate
        assert_eq!(
            witness_status(&net, &prop, &Witness::new(vec![1.0, -1.0])).unwrap(),
            WitnessStatus::OutOfBounds { index: 1, value: -1.0 }
        );
        assert!(matches!(
            check_witness(&net, &prop, &Witness::new(vec![1.0])),
            Err(VnnlibError::LengthMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn generate_parse_round_trip(
            pixels in proptest::collection::vec(0u8..=255, 12),
            eps_idx in 0usize..5,
            label in 0usize..43,
            index in 0usize..20000,
        ) {
            let eps = [1.0, 3.0, 5.0, 10.0, 15.0][eps_idx];
            let img = Tensor::new(vec![2, 2, 3], pixels.iter().map(|&p| p as f64).collect()).unwrap();
            let prop = RobustnessProperty::around(&img, eps, label, 43, false).unwrap().with_source(index, eps);
            let parsed = parse_property(&prop.render()).unwrap();
            prop_assert_eq!(parsed.target_label, label);
            prop_assert_eq!(parsed.source, prop.source);
            for (a, b) in parsed.input_bounds.iter().zip(&prop.input_bounds) {
                prop_assert!((a.0 - b.0).abs() <= 1e-8 && (a.1 - b.1).abs() <= 1e-8);
            }
        }
    }
}
