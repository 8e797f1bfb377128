//! Digital fault tolerance: Boolean formulas, faulty ReLU medians and NAND
//! multiplexing.
//!
//! Formulas use a parenthesised prefix syntax, `(NAND (NAND a b) c)`.
//! Variables are identifiers; every gate takes exactly two arguments.

use std::fmt;

use thiserror::Error;

use crate::neural::Gate;
use crate::noise::{RngStream, StreamId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaError {
    #[error("empty formula")]
    Empty,
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("unexpected {token:?} at byte {pos}")]
    Unexpected { token: String, pos: usize },
    #[error("unknown gate {0:?}")]
    UnknownGate(String),
    #[error("{gate} takes 2 arguments, got {got}")]
    Arity { gate: Gate, got: usize },
    #[error("trailing input at byte {0}")]
    Trailing(usize),
    #[error("formula contains {0}, only NAND is allowed here")]
    NotNand(Gate),
    #[error("undefined input {0:?}")]
    UndefinedInput(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Var(String),
    Gate(Gate, Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn var(name: &str) -> Self {
        Formula::Var(name.to_string())
    }

    pub fn gate(gate: Gate, a: Formula, b: Formula) -> Self {
        Formula::Gate(gate, Box::new(a), Box::new(b))
    }

    pub fn nand(a: Formula, b: Formula) -> Self {
        Self::gate(Gate::Nand, a, b)
    }

    pub fn parse(text: &str) -> Result<Self, FormulaError> {
        let tokens = tokenize(text)?;
        if tokens.is_empty() {
            return Err(FormulaError::Empty);
        }
        let mut pos = 0;
        let formula = parse_expr(&tokens, &mut pos)?;
        match tokens.get(pos) {
            Some(t) => Err(FormulaError::Trailing(t.pos)),
            None => Ok(formula),
        }
    }

    /// Variables in order of first appearance.
    pub fn variables(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit_vars(&mut |v| {
            if !out.iter().any(|o| o == v) {
                out.push(v.to_string());
            }
        });
        out
    }

    fn visit_vars(&self, f: &mut impl FnMut(&str)) {
        match self {
            Formula::Var(v) => f(v),
            Formula::Gate(_, a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
        }
    }

    pub fn eval(&self, value: &impl Fn(&str) -> bool) -> bool {
        match self {
            Formula::Var(v) => value(v),
            Formula::Gate(g, a, b) => g.eval(a.eval(value), b.eval(value)),
        }
    }

    /// Evaluate with `bits[i]` bound to `self.variables()[i]`.
    pub fn eval_bits(&self, bits: &[bool]) -> bool {
        let vars = self.variables();
        self.eval(&|v| bits[vars.iter().position(|n| n == v).expect("variable")])
    }

    pub fn gate_count(&self) -> usize {
        match self {
            Formula::Var(_) => 0,
            Formula::Gate(_, a, b) => 1 + a.gate_count() + b.gate_count(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::Var(_) => 0,
            Formula::Gate(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    pub fn check_nand_only(&self) -> Result<(), FormulaError> {
        match self {
            Formula::Var(_) => Ok(()),
            Formula::Gate(Gate::Nand, a, b) => {
                a.check_nand_only()?;
                b.check_nand_only()
            }
            Formula::Gate(g, _, _) => Err(FormulaError::NotNand(*g)),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Var(v) => f.write_str(v),
            Formula::Gate(g, a, b) => write!(f, "({g} {a} {b})"),
        }
    }
}

impl std::str::FromStr for Formula {
    type Err = FormulaError;

    fn from_str(s: &str) -> Result<Self, FormulaError> {
        Formula::parse(s)
    }
}

#[derive(Debug)]
struct Token<'a> {
    text: &'a str,
    pos: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token<'_>>, FormulaError> {
    let mut tokens = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '(' || c == ')' {
            tokens.push(Token { text: &text[i..i + 1], pos: i });
            chars.next();
        } else if c.is_ascii_alphanumeric() || c == '_' {
            let mut end = i;
            while let Some(&(j, d)) = chars.peek() {
                if d.is_ascii_alphanumeric() || d == '_' {
                    end = j + d.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            tokens.push(Token { text: &text[i..end], pos: i });
        } else {
            return Err(FormulaError::Unexpected { token: c.to_string(), pos: i });
        }
    }
    Ok(tokens)
}

fn parse_expr(tokens: &[Token<'_>], pos: &mut usize) -> Result<Formula, FormulaError> {
    let tok = tokens.get(*pos).ok_or(FormulaError::UnexpectedEnd)?;
    *pos += 1;
    match tok.text {
        "(" => {
            let name = tokens.get(*pos).ok_or(FormulaError::UnexpectedEnd)?;
            if name.text == "(" || name.text == ")" {
                return Err(FormulaError::Unexpected { token: name.text.to_string(), pos: name.pos });
            }
            let gate: Gate = name.text.parse().map_err(|_| FormulaError::UnknownGate(name.text.to_string()))?;
            *pos += 1;
            let mut args = Vec::new();
            loop {
                match tokens.get(*pos) {
                    None => return Err(FormulaError::UnexpectedEnd),
                    Some(t) if t.text == ")" => {
                        *pos += 1;
                        break;
                    }
                    Some(_) => args.push(parse_expr(tokens, pos)?),
                }
            }
            if args.len() != 2 {
                return Err(FormulaError::Arity { gate, got: args.len() });
            }
            let b = args.pop().unwrap();
            let a = args.pop().unwrap();
            Ok(Formula::gate(gate, a, b))
        }
        ")" => Err(FormulaError::Unexpected { token: ")".into(), pos: tok.pos }),
        name => Ok(Formula::Var(name.to_string())),
    }
}

/// Faulty ReLU: `max(0, x)`, or 0 with probability `p`.
pub fn relu_p(x: f64, p: f64, rng: &mut RngStream) -> f64 {
    if rng.bernoulli(p) {
        0.0
    } else {
        x.max(0.0)
    }
}

/// Number of ReLU units in the median gadget.
pub const MEDIAN_UNITS: usize = 4;

/// `median(a,b,c) = max(min(a,b), min(max(a,b), c))` with
/// `min(u,v) = u − ReLU(u−v)` and `max(u,v) = u + ReLU(v−u)`; `unit` is
/// called once per ReLU, in a fixed order.
fn median_with(a: f64, b: f64, c: f64, unit: &mut impl FnMut(f64) -> f64) -> f64 {
    let lo = a - unit(a - b);
    let hi = a + unit(b - a);
    let mid = hi - unit(hi - c);
    lo + unit(mid - lo)
}

/// Median gadget with an explicit failure pattern, one flag per unit.
pub fn median3_with_faults(a: f64, b: f64, c: f64, faults: [bool; MEDIAN_UNITS]) -> f64 {
    let mut i = 0;
    median_with(a, b, c, &mut |u| {
        let failed = faults[i];
        i += 1;
        if failed {
            0.0
        } else {
            u.max(0.0)
        }
    })
}

pub fn median3_gadget(a: f64, b: f64, c: f64, p: f64, rng: &mut RngStream) -> f64 {
    median_with(a, b, c, &mut |u| relu_p(u, p, rng))
}

/// Logical ReLU at a concatenation level: level 0 is one faulty unit; level
/// `ℓ` feeds three level-`ℓ−1` ReLUs into a median gadget whose units are
/// themselves level-`ℓ−1` ReLUs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogicalRelu {
    level: u32,
}

pub fn vn_concatenate_relu(level: u32) -> LogicalRelu {
    LogicalRelu { level }
}

impl LogicalRelu {
    pub fn level(&self) -> u32 {
        self.level
    }

    /// Physical ReLU units: `7^ℓ`.
    pub fn physical_units(&self) -> u64 {
        7u64.pow(self.level)
    }

    pub fn eval(&self, x: f64, p: f64, rng: &mut RngStream) -> f64 {
        eval_relu(self.level, x, p, rng)
    }
}

fn eval_relu(level: u32, x: f64, p: f64, rng: &mut RngStream) -> f64 {
    if level == 0 {
        return relu_p(x, p, rng);
    }
    let a = eval_relu(level - 1, x, p, rng);
    let b = eval_relu(level - 1, x, p, rng);
    let c = eval_relu(level - 1, x, p, rng);
    median_with(a, b, c, &mut |u| eval_relu(level - 1, u, p, rng))
}

/// Per-gate error threshold for 2-input NAND formulas, `(3 − √7)/4`.
pub fn ep_threshold() -> f64 {
    (3.0 - 7f64.sqrt()) / 4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NandNode {
    Input(usize),
    Nand(usize, usize),
}

/// NAND-only network produced by multiplexing; the output bit is the
/// majority of the output bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct NandNetwork {
    inputs: Vec<String>,
    nodes: Vec<NandNode>,
    outputs: Vec<usize>,
    level: u32,
}

impl NandNetwork {
    pub fn inputs(&self) -> &[String] {
        &self.inputs
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn bundle_size(&self) -> usize {
        self.outputs.len()
    }

    pub fn nand_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, NandNode::Nand(..))).count()
    }

    pub fn nodes(&self) -> &[NandNode] {
        &self.nodes
    }

    /// Output bundle with every NAND flipped independently with probability
    /// `eps`; inputs are exact.
    pub fn eval_bundle(&self, bits: &[bool], eps: f64, rng: &mut RngStream) -> Vec<bool> {
        let mut values = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match *node {
                NandNode::Input(i) => bits[i],
                NandNode::Nand(a, b) => !(values[a] && values[b]) ^ rng.bernoulli(eps),
            };
            values.push(v);
        }
        self.outputs.iter().map(|&o| values[o]).collect()
    }

    pub fn eval(&self, bits: &[bool], eps: f64, rng: &mut RngStream) -> bool {
        let ones = self.eval_bundle(bits, eps, rng).iter().filter(|&&b| b).count();
        2 * ones > self.outputs.len()
    }

    /// Error count at the worst input assignment over `trials` trials each.
    /// Trial `t` of assignment `i` uses stream `(seed, (i, t))`.
    pub fn worst_case_errors(&self, truth: impl Fn(&[bool]) -> bool, eps: f64, trials: u64, seed: u64) -> u64 {
        let n = self.inputs.len();
        (0..1u64 << n)
            .map(|assignment| {
                let bits: Vec<bool> = (0..n).map(|i| assignment >> i & 1 == 1).collect();
                let expected = truth(&bits);
                (0..trials)
                    .filter(|&t| {
                        let mut rng = RngStream::new(seed, StreamId::new(t, assignment));
                        self.eval(&bits, eps, &mut rng) != expected
                    })
                    .count() as u64
            })
            .max()
            .unwrap_or(0)
    }
}

fn shuffled(n: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        perm.swap(i, j);
    }
    perm
}

/// Multiplex a NAND formula at `level`: every wire becomes a bundle of
/// `3^level` wires, each NAND an executive stage followed by `level`
/// restoring rounds of two NAND layers. Wiring permutations are drawn from
/// `seed`. Level 0 reproduces the formula gate for gate.
pub fn ep_nand_concatenate(formula: &Formula, level: u32, seed: u64) -> Result<NandNetwork, FormulaError> {
    formula.check_nand_only()?;
    let inputs = formula.variables();
    let n = 3usize.pow(level);
    let mut nodes: Vec<NandNode> = (0..inputs.len()).map(NandNode::Input).collect();
    let mut gate_index = 0u64;
    let outputs = multiplex(formula, &inputs, n, level, seed, &mut gate_index, &mut nodes);
    Ok(NandNetwork { inputs, nodes, outputs, level })
}

fn multiplex(
    f: &Formula,
    inputs: &[String],
    n: usize,
    rounds: u32,
    seed: u64,
    gate_index: &mut u64,
    nodes: &mut Vec<NandNode>,
) -> Vec<usize> {
    match f {
        Formula::Var(v) => vec![inputs.iter().position(|i| i == v).expect("variable"); n],
        Formula::Gate(_, a, b) => {
            let xa = multiplex(a, inputs, n, rounds, seed, gate_index, nodes);
            let xb = multiplex(b, inputs, n, rounds, seed, gate_index, nodes);
            let mut rng = RngStream::new(seed, StreamId::new(*gate_index, u64::MAX));
            *gate_index += 1;
            let mut layer = |left: &[usize], right: &[usize], nodes: &mut Vec<NandNode>| -> Vec<usize> {
                let perm = shuffled(n, &mut rng);
                (0..n)
                    .map(|i| {
                        nodes.push(NandNode::Nand(left[i], right[perm[i]]));
                        nodes.len() - 1
                    })
                    .collect::<Vec<_>>()
            };
            let mut bundle = layer(&xa, &xb, nodes);
            for _ in 0..rounds {
                let inverted = layer(&bundle, &bundle, nodes);
                bundle = layer(&inverted, &inverted, nodes);
            }
            bundle
        }
    }
}

/// Combination rule for the analog repetition experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepetitionScheme {
    Mean,
    Median,
}

/// Residual noise std after combining `n` replicas each carrying
/// independent `N(0, σ²)` noise, over `trials` trials.
pub fn analog_repetition_residual(n: usize, sigma: f64, scheme: RepetitionScheme, trials: u64, seed: u64) -> f64 {
    let mut buf = vec![0.0; n];
    let sum2: f64 = (0..trials)
        .map(|t| {
            let mut rng = RngStream::new(seed, StreamId::new(t, n as u64));
            buf.iter_mut().for_each(|v| *v = sigma * rng.standard_normal());
            let combined = match scheme {
                RepetitionScheme::Mean => buf.iter().sum::<f64>() / n as f64,
                RepetitionScheme::Median => {
                    buf.sort_by(f64::total_cmp);
                    if n % 2 == 1 {
                        buf[n / 2]
                    } else {
                        (buf[n / 2 - 1] + buf[n / 2]) / 2.0
                    }
                }
            };
            combined * combined
        })
        .sum();
    (sum2 / trials as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::stats::{linear_fit, wilson_interval};
    use proptest::prelude::*;

    fn rng(seed: u64) -> RngStream {
        RngStream::new(seed, StreamId::new(0, 0))
    }

    #[test]
    fn parse_and_print() {
        let f = Formula::parse("(NAND (NAND a b) c)").unwrap();
        assert_eq!(f, Formula::nand(Formula::nand(Formula::var("a"), Formula::var("b")), Formula::var("c")));
        assert_eq!(f.to_string(), "(NAND (NAND a b) c)");
        assert_eq!(f.variables(), vec!["a", "b", "c"]);
        assert_eq!((f.gate_count(), f.depth()), (2, 2));
        assert_eq!(Formula::parse("  x1 ").unwrap(), Formula::var("x1"));
        assert_eq!(Formula::parse("(and a b)").unwrap().to_string(), "(AND a b)");
    }

    #[test]
    fn parse_errors() {
        assert_eq!(Formula::parse(""), Err(FormulaError::Empty));
        assert_eq!(Formula::parse("(NAND a"), Err(FormulaError::UnexpectedEnd));
        assert_eq!(Formula::parse("(NOR a b)"), Err(FormulaError::UnknownGate("NOR".into())));
        assert_eq!(Formula::parse("(NAND a b c)"), Err(FormulaError::Arity { gate: Gate::Nand, got: 3 }));
        assert_eq!(Formula::parse("a b"), Err(FormulaError::Trailing(2)));
        assert!(matches!(Formula::parse("(NAND a $)"), Err(FormulaError::Unexpected { .. })));
        assert!(matches!(Formula::parse(")"), Err(FormulaError::Unexpected { .. })));
    }

    #[test]
    fn relu_basics() {
        let mut r = rng(1);
        assert_eq!(relu_p(-2.0, 0.0, &mut r), 0.0);
        assert_eq!(relu_p(3.0, 0.0, &mut r), 3.0);
        let n = 100_000;
        let mean = (0..n).map(|_| relu_p(1.0, 0.3, &mut r)).sum::<f64>() / n as f64;
        assert!((mean - 0.7).abs() < 0.005, "{mean}");
    }

    #[test]
    fn median_exact() {
        let mut r = rng(2);
        assert!((median3_gadget(0.2, 0.9, 0.4, 0.0, &mut r) - 0.4).abs() < 1e-12);
        for x in [-1.5, 0.0, 0.7, 12.0] {
            assert!((median3_gadget(x, x, x, 0.0, &mut r) - x).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn median_matches_sort(a in -10.0..10.0f64, b in -10.0..10.0f64, c in -10.0..10.0f64) {
            let mut v = [a, b, c];
            v.sort_by(f64::total_cmp);
            prop_assert!((median3_with_faults(a, b, c, [false; 4]) - v[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn median_failure_rate_matches_enumeration() {
        let p: f64 = 0.1;
        let exact: f64 = (0..1u32 << MEDIAN_UNITS)
            .map(|mask| {
                let faults = std::array::from_fn(|i| mask >> i & 1 == 1);
                let k = mask.count_ones() as i32;
                let weight = p.powi(k) * (1.0 - p).powi(MEDIAN_UNITS as i32 - k);
                if median3_with_faults(0.0, 1.0, 1.0, faults) != 1.0 {
                    weight
                } else {
                    0.0
                }
            })
            .sum();
        let n = 100_000u64;
        let mut r = rng(3);
        let errors = (0..n).filter(|_| median3_gadget(0.0, 1.0, 1.0, p, &mut r) != 1.0).count() as u64;
        let (lo, hi) = wilson_interval(errors, n, 0.999);
        assert!(lo <= exact && exact <= hi, "mc {errors}/{n} vs exact {exact}");
        assert!(exact > 0.0);
    }

    #[test]
    fn concatenated_relu_improves() {
        assert_eq!(vn_concatenate_relu(0).physical_units(), 1);
        assert_eq!(vn_concatenate_relu(2).physical_units(), 49);
        let mut r = rng(4);
        for x in [-3.0, 0.0, 0.25, 5.0] {
            assert_eq!(vn_concatenate_relu(1).eval(x, 0.0, &mut r), x.max(0.0));
        }
        let p = 0.01;
        let n = 100_000u64;
        let rates: Vec<(f64, f64)> = (0..3)
            .map(|level| {
                let relu = vn_concatenate_relu(level);
                let mut s = RngStream::new(5, StreamId::new(level as u64, 0));
                let errors = (0..n).filter(|_| relu.eval(1.0, p, &mut s) != 1.0).count() as u64;
                wilson_interval(errors, n, 0.99)
            })
            .collect();
        assert!(rates[1].1 < rates[0].0, "{rates:?}");
        assert!(rates[2].1 < rates[1].0, "{rates:?}");
    }

    #[test]
    fn threshold_value() {
        let t = ep_threshold();
        assert!((4.0 * t + 7f64.sqrt() - 3.0).abs() < 1e-12);
        assert!(t > 0.088 && t < 0.09);
    }

    #[test]
    fn threshold_is_bistability_point() {
        // Restoring map g(x) = ε + (1−2ε)(1−x²) on the fraction of true
        // wires; g∘g has fixed points other than g's own iff ε < threshold.
        let fixed_points = |eps: f64| {
            let g = |x: f64| eps + (1.0 - 2.0 * eps) * (1.0 - x * x);
            let h = |x: f64| g(g(x)) - x;
            let steps = 100_000;
            (0..steps).filter(|&i| {
                let (a, b) = (i as f64 / steps as f64, (i + 1) as f64 / steps as f64);
                h(a).signum() != h(b).signum()
            }).count()
        };
        assert_eq!(fixed_points(ep_threshold() - 0.005), 3);
        assert_eq!(fixed_points(ep_threshold() + 0.005), 1);
    }

    #[test]
    fn level_zero_is_the_formula() {
        let f = Formula::parse("(NAND (NAND a b) (NAND a c))").unwrap();
        let net = ep_nand_concatenate(&f, 0, 1).unwrap();
        assert_eq!(net.nand_count(), f.gate_count());
        assert_eq!(net.bundle_size(), 1);
        assert!(matches!(ep_nand_concatenate(&Formula::parse("(AND a b)").unwrap(), 1, 1), Err(FormulaError::NotNand(Gate::And))));
    }

    #[test]
    fn multiplexed_formulas_are_exact_without_faults() {
        let formulas = ["(NAND a b)", "(NAND (NAND a b) c)", "(NAND (NAND a (NAND b c)) (NAND (NAND d e) a))"];
        for text in formulas {
            let f = Formula::parse(text).unwrap();
            let vars = f.variables().len();
            for level in 0..3 {
                let net = ep_nand_concatenate(&f, level, 9).unwrap();
                assert_eq!(net.bundle_size(), 3usize.pow(level));
                for assignment in 0..1u32 << vars {
                    let bits: Vec<bool> = (0..vars).map(|i| assignment >> i & 1 == 1).collect();
                    let bundle = net.eval_bundle(&bits, 0.0, &mut rng(0));
                    assert!(bundle.iter().all(|&b| b == f.eval_bits(&bits)), "{text} level {level}");
                }
            }
        }
    }

    #[test]
    fn analog_residual_is_polynomial() {
        for scheme in [RepetitionScheme::Mean, RepetitionScheme::Median] {
            let ns = [11usize, 101, 1001];
            let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
            let ys: Vec<f64> = ns.iter().map(|&n| analog_repetition_residual(n, 1.0, scheme, 4000, 6).ln()).collect();
            let fit = linear_fit(&xs, &ys);
            assert!((fit.slope + 0.5).abs() < 0.05, "{scheme:?}: {}", fit.slope);
        }
    }
}
