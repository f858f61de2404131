//! CNF encoding of robustness queries over binarized blocks.
//!
//! Each hidden neuron becomes a boolean (`true` is `+1`). A neuron's value is
//! a threshold test on an integer pre-activation sum (batch norm folded into
//! the threshold), so it is encoded as a reified cardinality constraint with
//! a sequential counter. Max pooling over thresholds becomes OR (or AND when
//! the folded direction is `<=`). Integer inputs use an order encoding:
//! `x_i = lo_i + #{k : b_ik}` with `b_i(k+1) -> b_ik`.
//!
//! The output side encodes the negated property `OR_j (Y_j >= Y_t)`, so the
//! formula is satisfiable exactly when a counterexample exists.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::bnn::ops::layer_forward;
use crate::bnn::{BatchNorm, Layer, Network};
use crate::tensor::Tensor;
use crate::vnnlib::{RobustnessProperty, Witness};

use super::fold::{fold_bn_sign, ThresholdRule};
use super::VerifyError;

/// DIMACS literal: `v` or `-v` for variable `v >= 1`.
pub type Lit = i32;

/// Refuse encodings with more variables than this.
pub const MAX_VARS: u64 = 20_000_000;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CnfFormula {
    pub num_vars: u32,
    pub clauses: Vec<Vec<Lit>>,
}

/// A literal or a known constant, so trivial constraints produce no clauses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bit {
    Const(bool),
    Lit(Lit),
}

impl Bit {
    pub fn negate(self) -> Self {
        match self {
            Bit::Const(b) => Bit::Const(!b),
            Bit::Lit(l) => Bit::Lit(-l),
        }
    }

    /// Value under a model indexed by `var - 1`.
    pub fn value(self, model: &[bool]) -> bool {
        match self {
            Bit::Const(b) => b,
            Bit::Lit(l) => model[l.unsigned_abs() as usize - 1] == (l > 0),
        }
    }
}

impl CnfFormula {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn new_var(&mut self) -> Lit {
        self.num_vars += 1;
        self.num_vars as Lit
    }

    pub fn add_clause(&mut self, clause: Vec<Lit>) {
        debug_assert!(clause
            .iter()
            .all(|&l| l != 0 && l.unsigned_abs() <= self.num_vars));
        self.clauses.push(clause);
    }

    /// True iff every clause has a true literal under `model` (`var - 1`).
    pub fn evaluate(&self, model: &[bool]) -> bool {
        self.clauses
            .iter()
            .all(|c| c.iter().any(|&l| Bit::Lit(l).value(model)))
    }

    pub fn to_dimacs(&self) -> String {
        let mut s = format!("p cnf {} {}\n", self.num_vars, self.clauses.len());
        for c in &self.clauses {
            for l in c {
                let _ = write!(s, "{l} ");
            }
            s.push_str("0\n");
        }
        s
    }

    /// Hard constraint: at least `k` of `lits` are true. `k = 1` is a single
    /// clause; larger `k` becomes "at most `n - k` of the negations".
    pub fn at_least(&mut self, lits: &[Lit], k: usize) {
        match k {
            0 => {}
            1 => self.add_clause(lits.to_vec()),
            _ if k > lits.len() => self.add_clause(Vec::new()),
            _ => {
                let neg: Vec<Lit> = lits.iter().map(|&l| -l).collect();
                self.at_most(&neg, lits.len() - k);
            }
        }
    }

    /// Hard constraint: at most `k` of `lits` are true, using the sequential
    /// counter with `n * k` register variables `r_ij` ("at least `j` of the
    /// first `i` are true").
    pub fn at_most(&mut self, lits: &[Lit], k: usize) {
        let n = lits.len();
        if k >= n {
            return;
        }
        if k == 0 {
            for &l in lits {
                self.add_clause(vec![-l]);
            }
            return;
        }
        let r: Vec<Vec<Lit>> = (0..n)
            .map(|_| (0..k).map(|_| self.new_var()).collect())
            .collect();
        for i in 0..n {
            let x = lits[i];
            self.add_clause(vec![-x, r[i][0]]);
            if i > 0 {
                for j in 0..k {
                    self.add_clause(vec![-r[i - 1][j], r[i][j]]);
                    if j > 0 {
                        self.add_clause(vec![-x, -r[i - 1][j - 1], r[i][j]]);
                    }
                }
                self.add_clause(vec![-x, -r[i - 1][k - 1]]);
            }
        }
    }

    /// A bit equivalent to "at least `k` of `bits` are true". Uses `n * k`
    /// register variables, each fully defined by the inputs, so models of the
    /// encoding correspond one-to-one with assignments of `bits`.
    pub fn reify_at_least(&mut self, bits: &[Bit], k: i64) -> Bit {
        let mut lits = Vec::with_capacity(bits.len());
        let mut k = k;
        for &b in bits {
            match b {
                Bit::Const(true) => k -= 1,
                Bit::Const(false) => {}
                Bit::Lit(l) => lits.push(l),
            }
        }
        if k <= 0 {
            return Bit::Const(true);
        }
        let n = lits.len();
        let k = k as usize;
        if k > n {
            return Bit::Const(false);
        }
        // s[i][j]: at least j + 1 of the first i + 1 literals.
        let s: Vec<Vec<Lit>> = (0..n)
            .map(|_| (0..k).map(|_| self.new_var()).collect())
            .collect();
        for i in 0..n {
            let x = lits[i];
            for j in 0..k {
                let cur = s[i][j];
                let prev_same = (i > 0).then(|| s[i - 1][j]);
                // Carry-in "at least j of the first i": true for j = 0.
                let prev_less = match (i, j) {
                    (_, 0) => Bit::Const(true),
                    (0, _) => Bit::Const(false),
                    _ => Bit::Lit(s[i - 1][j - 1]),
                };
                if let Some(p) = prev_same {
                    self.add_clause(vec![-p, cur]);
                }
                match prev_less {
                    Bit::Const(true) => self.add_clause(vec![-x, cur]),
                    Bit::Lit(p) => self.add_clause(vec![-x, -p, cur]),
                    Bit::Const(false) => {}
                }
                let mut back = vec![-cur, x];
                back.extend(prev_same);
                self.add_clause(back);
                match prev_less {
                    Bit::Const(true) => {}
                    Bit::Lit(p) => {
                        let mut c = vec![-cur, p];
                        c.extend(prev_same);
                        self.add_clause(c);
                    }
                    Bit::Const(false) => {
                        let mut c = vec![-cur];
                        c.extend(prev_same);
                        self.add_clause(c);
                    }
                }
            }
        }
        Bit::Lit(s[n - 1][k - 1])
    }

    pub fn or(&mut self, bits: &[Bit]) -> Bit {
        let mut lits = Vec::new();
        for &b in bits {
            match b {
                Bit::Const(true) => return Bit::Const(true),
                Bit::Const(false) => {}
                Bit::Lit(l) => lits.push(l),
            }
        }
        match lits.as_slice() {
            [] => Bit::Const(false),
            [l] => Bit::Lit(*l),
            _ => {
                let y = self.new_var();
                for &l in &lits {
                    self.add_clause(vec![-l, y]);
                }
                let mut c = vec![-y];
                c.extend(&lits);
                self.add_clause(c);
                Bit::Lit(y)
            }
        }
    }

    pub fn and(&mut self, bits: &[Bit]) -> Bit {
        let neg: Vec<Bit> = bits.iter().map(|b| b.negate()).collect();
        self.or(&neg).negate()
    }

    pub fn assert_bit(&mut self, b: Bit, value: bool) {
        match b {
            Bit::Const(c) if c == value => {}
            Bit::Const(_) => self.add_clause(Vec::new()),
            Bit::Lit(l) => self.add_clause(vec![if value { l } else { -l }]),
        }
    }
}

/// Integer affine form `constant + sum coef * var` over positive variables.
#[derive(Debug, Clone, Default, PartialEq)]
struct Linear {
    constant: i64,
    terms: BTreeMap<Lit, i64>,
}

impl Linear {
    fn add_bit(&mut self, coef: i64, b: Bit) {
        match b {
            Bit::Const(true) => self.constant += coef,
            Bit::Const(false) => {}
            Bit::Lit(l) if l > 0 => *self.terms.entry(l).or_default() += coef,
            // coef * !v = coef - coef * v
            Bit::Lit(l) => {
                self.constant += coef;
                *self.terms.entry(-l).or_default() -= coef;
            }
        }
    }

    fn add_scaled(&mut self, scale: i64, other: &Linear) {
        self.constant += scale * other.constant;
        for (&v, &c) in &other.terms {
            *self.terms.entry(v).or_default() += scale * c;
        }
    }

    fn terms(&self) -> impl Iterator<Item = (Lit, i64)> + '_ {
        self.terms.iter().map(|(&v, &c)| (v, c)).filter(|&(_, c)| c != 0)
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn div_ceil(a: i64, b: i64) -> i64 {
    debug_assert!(b > 0);
    a.div_euclid(b) + i64::from(a.rem_euclid(b) != 0)
}

/// Builds the network encoding with a variable budget.
struct Encoder {
    f: CnfFormula,
    names: Vec<(Lit, String)>,
    limit: u64,
}

impl Encoder {
    fn check(&self, extra: u64) -> Result<(), VerifyError> {
        let vars = u64::from(self.f.num_vars) + extra;
        if vars > self.limit {
            return Err(VerifyError::TooLarge { vars });
        }
        Ok(())
    }

    /// Bit for `e >= t`.
    fn ge(&mut self, e: &Linear, t: i64) -> Result<Bit, VerifyError> {
        let mut constant = e.constant;
        let mut g = 0;
        for (_, c) in e.terms() {
            g = gcd(g, c);
        }
        if g == 0 {
            return Ok(Bit::Const(constant >= t));
        }
        let mut lits = Vec::new();
        for (v, c) in e.terms() {
            let (lit, mag) = if c > 0 {
                (v, c)
            } else {
                constant += c;
                (-v, -c)
            };
            lits.extend(std::iter::repeat_n(Bit::Lit(lit), (mag / g) as usize));
        }
        let k = div_ceil(t - constant, g);
        if k > 0 && (k as usize) <= lits.len() {
            self.check(lits.len() as u64 * k as u64)?;
        }
        Ok(self.f.reify_at_least(&lits, k))
    }

    fn rule(&mut self, e: &Linear, rule: ThresholdRule) -> Result<Bit, VerifyError> {
        // Sums are bounded far below this, so clamping keeps the test exact.
        const CAP: f64 = 1e15;
        match rule {
            ThresholdRule::Constant(b) => Ok(Bit::Const(b)),
            ThresholdRule::AtLeast(t) => self.ge(e, t.ceil().clamp(-CAP, CAP) as i64),
            ThresholdRule::AtMost(t) => {
                let t = t.floor().clamp(-CAP, CAP) as i64;
                Ok(self.ge(e, t + 1)?.negate())
            }
        }
    }
}

/// One pending binarization point: sums of the last linear layer plus the
/// pooling windows and folded rule applied before the next sign.
struct Block {
    sums: Vec<Linear>,
    /// Per current neuron: OR over entries of (rule applied to the max of a
    /// window of sums). `None` rule means plain sign, i.e. `>= 0`.
    neurons: Vec<Vec<(Option<ThresholdRule>, Vec<usize>)>>,
    folded: bool,
}

impl Block {
    fn new(sums: Vec<Linear>) -> Self {
        let neurons = (0..sums.len()).map(|i| vec![(None, vec![i])]).collect();
        Self {
            sums,
            neurons,
            folded: false,
        }
    }

    fn pool(&mut self, h: usize, w: usize, c: usize) {
        let mut next = Vec::with_capacity((h / 2) * (w / 2) * c);
        for r in 0..h / 2 {
            for col in 0..w / 2 {
                for k in 0..c {
                    let mut parts = Vec::new();
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        parts.push(&self.neurons[((2 * r + dy) * w + 2 * col + dx) * c + k]);
                    }
                    let merged = if self.folded {
                        parts.into_iter().flatten().cloned().collect()
                    } else {
                        let window = parts
                            .into_iter()
                            .flat_map(|p| p[0].1.iter().copied())
                            .collect();
                        vec![(None, window)]
                    };
                    next.push(merged);
                }
            }
        }
        self.neurons = next;
    }

    fn batch_norm(&mut self, index: usize, bn: &BatchNorm) -> Result<(), VerifyError> {
        if self.folded {
            return Err(VerifyError::NonFoldable(format!(
                "layer {index}: second batch norm before the next binarization"
            )));
        }
        let rules = fold_bn_sign(bn);
        let ch = bn.channels();
        for (n, entries) in self.neurons.iter_mut().enumerate() {
            entries[0].0 = Some(rules[n % ch]);
        }
        self.folded = true;
        Ok(())
    }

    fn binarize(&self, enc: &mut Encoder) -> Result<Vec<Bit>, VerifyError> {
        let mut out = Vec::with_capacity(self.neurons.len());
        for entries in &self.neurons {
            let mut alts = Vec::with_capacity(entries.len());
            for (rule, window) in entries {
                let rule = rule.unwrap_or(ThresholdRule::AtLeast(0.0));
                let tests = window
                    .iter()
                    .map(|&s| enc.rule(&self.sums[s], rule))
                    .collect::<Result<Vec<_>, _>>()?;
                alts.push(match rule {
                    ThresholdRule::AtMost(_) => enc.f.and(&tests),
                    _ => enc.f.or(&tests),
                });
            }
            out.push(enc.f.or(&alts));
        }
        Ok(out)
    }
}

/// For each output of a linear layer, its `(weight, input index)` terms.
fn linear_terms(layer: &Layer, input_shape: &[usize]) -> Vec<Vec<(i8, usize)>> {
    match layer {
        Layer::QConv(c) => {
            let (h, w, ci) = (input_shape[0], input_shape[1], input_shape[2]);
            let (kh, kw, oc) = (c.kernel_h(), c.kernel_w(), c.out_channels());
            let (oh, ow) = (h - kh + 1, w - kw + 1);
            let mut out = Vec::with_capacity(oh * ow * oc);
            for r in 0..oh {
                for col in 0..ow {
                    for o in 0..oc {
                        let mut t = Vec::with_capacity(kh * kw * ci);
                        for ky in 0..kh {
                            for kx in 0..kw {
                                for ch in 0..ci {
                                    t.push((
                                        c.weight(o, ky, kx, ch),
                                        ((r + ky) * w + col + kx) * ci + ch,
                                    ));
                                }
                            }
                        }
                        out.push(t);
                    }
                }
            }
            out
        }
        Layer::QDense(d) => (0..d.out_features())
            .map(|o| d.row(o).iter().copied().zip(0..).collect())
            .collect(),
        _ => unreachable!("not a linear layer"),
    }
}

/// An exported query with the bookkeeping needed to read models back.
#[derive(Debug, Clone)]
pub struct CnfExport {
    pub formula: CnfFormula,
    /// Named variables for the sidecar map.
    pub names: Vec<(Lit, String)>,
    /// Outputs of the first binarized block, in channel-last order.
    pub phase_bits: Vec<Bit>,
    /// Order-encoding bits per input; empty when inputs are not encoded.
    input_bits: Vec<Vec<Lit>>,
    input_lo: Vec<f64>,
}

impl CnfExport {
    /// Text sidecar: one `<var> <description>` line per named variable.
    pub fn render_var_map(&self) -> String {
        let mut s = String::new();
        for (v, name) in &self.names {
            let _ = writeln!(s, "{v} {name}");
        }
        s
    }

    /// Input point described by a model, when inputs were encoded.
    pub fn decode_witness(&self, net: &Network, model: &[bool]) -> Option<Witness> {
        if self.input_bits.is_empty() {
            return None;
        }
        let x: Vec<f64> = self
            .input_bits
            .iter()
            .zip(&self.input_lo)
            .map(|(bits, &lo)| lo + bits.iter().filter(|&&b| Bit::Lit(b).value(model)).count() as f64)
            .collect();
        let y = net.forward_flat(&x).ok()?;
        Some(Witness::new(x).with_outputs(y))
    }
}

/// Index of the first linear layer, checking nothing else precedes it but
/// flattening.
fn first_linear(net: &Network) -> Result<usize, VerifyError> {
    for (i, l) in net.layers().iter().enumerate() {
        match l {
            Layer::Flatten => {}
            l if l.is_linear() => return Ok(i),
            l => {
                return Err(VerifyError::NonFoldable(format!(
                    "layer {i}: {} before the first linear layer",
                    l.name()
                )))
            }
        }
    }
    unreachable!("networks end in a dense layer")
}

fn second_linear(net: &Network) -> Option<usize> {
    net.layers()
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_linear())
        .nth(1)
        .map(|(i, _)| i)
}

/// Signs (`true` for `+1`) of the first binarized block for a concrete input.
pub fn first_layer_phases(net: &Network, input: &[f64]) -> Result<Vec<bool>, VerifyError> {
    let Some(stop) = second_linear(net) else {
        return Ok(Vec::new());
    };
    let mut x = Tensor::new(net.input_shape().to_vec(), input.to_vec()).map_err(|_| {
        crate::bnn::BnnError::InputShape {
            expected: net.input_shape().to_vec(),
            actual: vec![input.len()],
        }
    })?;
    for (i, layer) in net.layers()[..stop].iter().enumerate() {
        x = layer_forward(i, layer, &x)?;
    }
    Ok(x.data().iter().map(|&v| v >= 0.0).collect())
}

/// Logits obtained by feeding fixed first-block signs into the rest of the
/// network.
pub fn forward_from_phases(net: &Network, phases: &[bool]) -> Result<Vec<f64>, VerifyError> {
    let stop = second_linear(net).ok_or(VerifyError::PhaseCount {
        expected: 0,
        actual: phases.len(),
    })?;
    let shape = net.shape_chain()[stop].clone();
    let data = phases.iter().map(|&p| if p { 1.0 } else { -1.0 }).collect();
    let mut x = Tensor::new(shape.clone(), data).map_err(|_| VerifyError::PhaseCount {
        expected: shape.iter().product(),
        actual: phases.len(),
    })?;
    for (i, layer) in net.layers().iter().enumerate().skip(stop) {
        x = layer_forward(i, layer, &x)?;
    }
    Ok(x.into_data())
}

/// Encodes the negated property. Satisfiable iff some input in the box (on
/// the integer grid) violates it and, when `phases` is given, produces those
/// first-block signs.
///
/// Boxes without integer bounds cannot encode the real-valued first layer;
/// there the first-block signs must be fixed and the formula decides only
/// the binarized remainder of the network.
pub fn export_cnf(
    net: &Network,
    prop: &RobustnessProperty,
    phases: Option<&[bool]>,
) -> Result<CnfExport, VerifyError> {
    export_cnf_with_limit(net, prop, phases, MAX_VARS)
}

pub fn export_cnf_with_limit(
    net: &Network,
    prop: &RobustnessProperty,
    phases: Option<&[bool]>,
    max_vars: u64,
) -> Result<CnfExport, VerifyError> {
    prop.check_network(net)?;
    let first = first_linear(net)?;
    let integral = prop
        .input_bounds
        .iter()
        .all(|&(lo, hi)| lo.fract() == 0.0 && hi.fract() == 0.0 && lo.abs() < 1e9 && hi.abs() < 1e9);
    if !integral && phases.is_none() {
        return Err(VerifyError::UnfixedFirstLayer);
    }
    if let Some(p) = phases {
        let expected = match second_linear(net) {
            Some(i) => net.shape_chain()[i].iter().product(),
            None => 0,
        };
        if p.len() != expected || expected == 0 {
            return Err(VerifyError::PhaseCount {
                expected,
                actual: p.len(),
            });
        }
    }
    let mut enc = Encoder {
        f: CnfFormula::new(),
        names: Vec::new(),
        limit: max_vars,
    };
    let mut input_bits = Vec::new();
    let mut input_lo = Vec::new();
    if integral {
        let total: f64 = prop.input_bounds.iter().map(|(lo, hi)| hi - lo).sum();
        enc.check(total as u64)?;
        for (i, &(lo, hi)) in prop.input_bounds.iter().enumerate() {
            let bits: Vec<Lit> = (1..=(hi - lo) as i64)
                .map(|k| {
                    let v = enc.f.new_var();
                    enc.names.push((v, format!("input X_{i} >= {}", lo + k as f64)));
                    v
                })
                .collect();
            for pair in bits.windows(2) {
                enc.f.add_clause(vec![-pair[1], pair[0]]);
            }
            input_bits.push(bits);
            input_lo.push(lo);
        }
    }
    let chain = net.shape_chain();
    let mut block: Option<Block> = None;
    let mut phase_bits = Vec::new();
    let mut hidden = 0;
    for (i, layer) in net.layers().iter().enumerate() {
        let shape = &chain[i];
        match layer {
            Layer::QConv(_) | Layer::QDense(_) => {
                let terms = linear_terms(layer, shape);
                let sums = if i == first {
                    if !integral {
                        // Opaque first block: its signs are fresh variables.
                        block = None;
                        continue;
                    }
                    terms
                        .iter()
                        .map(|t| {
                            let mut e = Linear::default();
                            for &(w, idx) in t {
                                let w = i64::from(w);
                                e.constant += w * input_lo[idx] as i64;
                                for &b in &input_bits[idx] {
                                    e.add_bit(w, Bit::Lit(b));
                                }
                            }
                            e
                        })
                        .collect()
                } else {
                    let acts = match block.take() {
                        Some(b) => b.binarize(&mut enc)?,
                        None => (0..shape.iter().product::<usize>())
                            .map(|_| Bit::Lit(enc.f.new_var()))
                            .collect(),
                    };
                    hidden += 1;
                    for (n, &a) in acts.iter().enumerate() {
                        if let Bit::Lit(l) = a {
                            if l > 0 {
                                enc.names.push((l, format!("act block {hidden} neuron {n}")));
                            }
                        }
                    }
                    if hidden == 1 {
                        if let Some(p) = phases {
                            for (&a, &v) in acts.iter().zip(p) {
                                enc.f.assert_bit(a, v);
                            }
                        }
                        phase_bits = acts.clone();
                    }
                    // a = 2v - 1 for a boolean v.
                    terms
                        .iter()
                        .map(|t| {
                            let mut e = Linear::default();
                            for &(w, idx) in t {
                                let w = i64::from(w);
                                e.constant -= w;
                                e.add_bit(2 * w, acts[idx]);
                            }
                            e
                        })
                        .collect()
                };
                block = Some(Block::new(sums));
            }
            Layer::MaxPool => {
                if let Some(b) = block.as_mut() {
                    b.pool(shape[0], shape[1], shape[2]);
                }
            }
            Layer::BatchNorm(bn) => {
                if let Some(b) = block.as_mut() {
                    b.batch_norm(i, bn)?;
                }
            }
            Layer::Flatten => {}
        }
        enc.check(0)?;
    }
    let logits = match block {
        Some(b) => b.sums,
        // Single opaque layer: nothing left to encode.
        None => return Err(VerifyError::UnfixedFirstLayer),
    };
    let t = prop.target_label;
    let mut disjuncts = Vec::new();
    for (j, y) in logits.iter().enumerate() {
        if j == t {
            continue;
        }
        let mut diff = y.clone();
        diff.add_scaled(-1, &logits[t]);
        let d = enc.ge(&diff, 0)?;
        if let Bit::Lit(l) = d {
            enc.names.push((l, format!("out Y_{j} >= Y_{t}")));
        }
        disjuncts.push(d);
    }
    let any = enc.f.or(&disjuncts);
    enc.f.assert_bit(any, true);
    Ok(CnfExport {
        formula: enc.f,
        names: enc.names,
        phase_bits,
        input_bits,
        input_lo,
    })
}
