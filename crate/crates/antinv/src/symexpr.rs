//! Symbolic scalar expressions over chart coordinates.
//!
//! Expressions are immutable trees shared through [`Arc`]; every operation is
//! a pure function, so values can be moved freely across threads. The only
//! rewriting performed at construction time is constant folding together with
//! the 0/1 unit laws, which keeps derivatives in a predictable shape.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

mod parse;

pub use parse::{parse, ParseError, ParseErrorKind};

/// Default number of sample points used by [`is_zero`].
pub const DEFAULT_SAMPLES: usize = 100;
/// Default zero-test tolerance.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
/// Default RNG seed for sampling; fixed so that every run is reproducible.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("square root of negative value {0}")]
    SqrtOfNegative(f64),
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Pi,
    Var(String),
    Add(ScalarExpr, ScalarExpr),
    Mul(ScalarExpr, ScalarExpr),
    Div(ScalarExpr, ScalarExpr),
    Pow(ScalarExpr, i32),
    Neg(ScalarExpr),
    Sin(ScalarExpr),
    Cos(ScalarExpr),
    Exp(ScalarExpr),
    Sqrt(ScalarExpr),
}

/// A real-valued symbolic function of named chart coordinates.
#[derive(Clone, PartialEq)]
pub struct ScalarExpr(Arc<Node>);

impl fmt::Debug for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarExpr({self})")
    }
}

fn finite(c: f64) -> bool {
    c.is_finite()
}

impl ScalarExpr {
    fn node(node: Node) -> Self {
        ScalarExpr(Arc::new(node))
    }

    pub fn constant(c: f64) -> Self {
        Self::node(Node::Const(c))
    }

    pub fn pi() -> Self {
        Self::node(Node::Pi)
    }

    pub fn var(name: &str) -> Self {
        Self::node(Node::Var(name.to_owned()))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    fn as_const(&self) -> Option<f64> {
        match *self.0 {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_const_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn is_const_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    pub fn add(a: ScalarExpr, b: ScalarExpr) -> Self {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if finite(x + y) {
                return Self::constant(x + y);
            }
        }
        if a.is_const_zero() {
            return b;
        }
        if b.is_const_zero() {
            return a;
        }
        Self::node(Node::Add(a, b))
    }

    pub fn sub(a: ScalarExpr, b: ScalarExpr) -> Self {
        Self::add(a, Self::neg(b))
    }

    pub fn mul(a: ScalarExpr, b: ScalarExpr) -> Self {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if finite(x * y) {
                return Self::constant(x * y);
            }
        }
        if a.is_const_zero() || b.is_const_zero() {
            return Self::zero();
        }
        if a.is_const_one() {
            return b;
        }
        if b.is_const_one() {
            return a;
        }
        Self::node(Node::Mul(a, b))
    }

    pub fn div(a: ScalarExpr, b: ScalarExpr) -> Self {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if y != 0.0 && finite(x / y) {
                return Self::constant(x / y);
            }
        }
        if a.is_const_zero() {
            return Self::zero();
        }
        if b.is_const_one() {
            return a;
        }
        Self::node(Node::Div(a, b))
    }

    pub fn neg(a: ScalarExpr) -> Self {
        match *a.0 {
            Node::Const(c) => Self::constant(-c),
            Node::Neg(ref inner) => inner.clone(),
            _ => Self::node(Node::Neg(a)),
        }
    }

    pub fn powi(a: ScalarExpr, k: i32) -> Self {
        if k == 0 {
            return Self::one();
        }
        if k == 1 {
            return a;
        }
        if let Some(x) = a.as_const() {
            let v = x.powi(k);
            if finite(v) {
                return Self::constant(v);
            }
        }
        Self::node(Node::Pow(a, k))
    }

    pub fn sin(&self) -> Self {
        if let Some(x) = self.as_const() {
            return Self::constant(x.sin());
        }
        Self::node(Node::Sin(self.clone()))
    }

    pub fn cos(&self) -> Self {
        if let Some(x) = self.as_const() {
            return Self::constant(x.cos());
        }
        Self::node(Node::Cos(self.clone()))
    }

    pub fn exp(&self) -> Self {
        if let Some(x) = self.as_const() {
            if finite(x.exp()) {
                return Self::constant(x.exp());
            }
        }
        Self::node(Node::Exp(self.clone()))
    }

    pub fn sqrt(&self) -> Self {
        if let Some(x) = self.as_const() {
            if x >= 0.0 {
                return Self::constant(x.sqrt());
            }
        }
        Self::node(Node::Sqrt(self.clone()))
    }

    pub fn pow(&self, k: i32) -> Self {
        Self::powi(self.clone(), k)
    }

    /// Names of all variables appearing in the expression.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match &*self.0 {
            Node::Const(_) | Node::Pi => {}
            Node::Var(v) => {
                out.insert(v.clone());
            }
            Node::Add(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Node::Pow(a, _)
            | Node::Neg(a)
            | Node::Sin(a)
            | Node::Cos(a)
            | Node::Exp(a)
            | Node::Sqrt(a) => a.collect_vars(out),
        }
    }

    /// Exact symbolic derivative with respect to `v`; all other variables are
    /// treated as independent.
    pub fn differentiate(&self, v: &str) -> ScalarExpr {
        match &*self.0 {
            Node::Const(_) | Node::Pi => Self::zero(),
            Node::Var(name) => {
                if name == v {
                    Self::one()
                } else {
                    Self::zero()
                }
            }
            Node::Add(a, b) => Self::add(a.differentiate(v), b.differentiate(v)),
            Node::Mul(a, b) => Self::add(
                Self::mul(a.differentiate(v), b.clone()),
                Self::mul(a.clone(), b.differentiate(v)),
            ),
            Node::Div(a, b) => Self::div(
                Self::sub(
                    Self::mul(a.differentiate(v), b.clone()),
                    Self::mul(a.clone(), b.differentiate(v)),
                ),
                Self::powi(b.clone(), 2),
            ),
            Node::Pow(a, k) => Self::mul(
                Self::mul(Self::constant(f64::from(*k)), Self::powi(a.clone(), k - 1)),
                a.differentiate(v),
            ),
            Node::Neg(a) => Self::neg(a.differentiate(v)),
            Node::Sin(a) => Self::mul(a.cos(), a.differentiate(v)),
            Node::Cos(a) => Self::neg(Self::mul(a.sin(), a.differentiate(v))),
            Node::Exp(a) => Self::mul(a.exp(), a.differentiate(v)),
            Node::Sqrt(a) => {
                Self::div(a.differentiate(v), Self::mul(Self::constant(2.0), a.sqrt()))
            }
        }
    }

    /// IEEE-double evaluation; every variable of the expression must be bound.
    pub fn evaluate(&self, point: &HashMap<String, f64>) -> Result<f64, EvalError> {
        self.eval_scaled(point).map(|(v, _)| v)
    }

    /// Evaluates the value together with a cancellation-aware magnitude scale:
    /// the same tree evaluated with absolute values, so that `|value| <= scale`
    /// and the scale reflects how large the intermediates were.
    pub fn eval_scaled(&self, point: &HashMap<String, f64>) -> Result<(f64, f64), EvalError> {
        const MAG_CAP: f64 = 1e100;
        let r = match &*self.0 {
            Node::Const(c) => (*c, c.abs()),
            Node::Pi => (std::f64::consts::PI, std::f64::consts::PI),
            Node::Var(name) => {
                let v = *point
                    .get(name)
                    .ok_or_else(|| EvalError::UnboundVariable(name.clone()))?;
                (v, v.abs())
            }
            Node::Add(a, b) => {
                let (va, ma) = a.eval_scaled(point)?;
                let (vb, mb) = b.eval_scaled(point)?;
                (va + vb, ma + mb)
            }
            Node::Mul(a, b) => {
                let (va, ma) = a.eval_scaled(point)?;
                let (vb, mb) = b.eval_scaled(point)?;
                (va * vb, ma * mb)
            }
            Node::Div(a, b) => {
                let (va, ma) = a.eval_scaled(point)?;
                let (vb, _) = b.eval_scaled(point)?;
                if vb == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                (va / vb, ma / vb.abs())
            }
            Node::Pow(a, k) => {
                let (va, ma) = a.eval_scaled(point)?;
                if *k < 0 && va == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                let m = if *k >= 0 {
                    ma.powi(*k)
                } else {
                    va.abs().powi(*k)
                };
                (va.powi(*k), m)
            }
            Node::Neg(a) => {
                let (v, m) = a.eval_scaled(point)?;
                (-v, m)
            }
            Node::Sin(a) => {
                let (v, m) = a.eval_scaled(point)?;
                (v.sin(), m.min(1.0))
            }
            Node::Cos(a) => {
                let (v, _) = a.eval_scaled(point)?;
                (v.cos(), 1.0)
            }
            Node::Exp(a) => {
                let (v, m) = a.eval_scaled(point)?;
                (v.exp(), m.exp().min(MAG_CAP))
            }
            Node::Sqrt(a) => {
                let (v, m) = a.eval_scaled(point)?;
                if v < 0.0 {
                    return Err(EvalError::SqrtOfNegative(v));
                }
                (v.sqrt(), m.sqrt())
            }
        };
        Ok((r.0, r.1.min(MAG_CAP)))
    }

    /// Replaces variables by expressions. Unlisted variables stay untouched.
    pub fn substitute(&self, map: &HashMap<String, ScalarExpr>) -> ScalarExpr {
        match &*self.0 {
            Node::Const(_) | Node::Pi => self.clone(),
            Node::Var(name) => map.get(name).cloned().unwrap_or_else(|| self.clone()),
            Node::Add(a, b) => Self::add(a.substitute(map), b.substitute(map)),
            Node::Mul(a, b) => Self::mul(a.substitute(map), b.substitute(map)),
            Node::Div(a, b) => Self::div(a.substitute(map), b.substitute(map)),
            Node::Pow(a, k) => Self::powi(a.substitute(map), *k),
            Node::Neg(a) => Self::neg(a.substitute(map)),
            Node::Sin(a) => a.substitute(map).sin(),
            Node::Cos(a) => a.substitute(map).cos(),
            Node::Exp(a) => a.substitute(map).exp(),
            Node::Sqrt(a) => a.substitute(map).sqrt(),
        }
    }
}

// Operator overloading for ergonomic expression building.
macro_rules! impl_binop {
    ($trait:ident, $method:ident, $ctor:ident) => {
        impl std::ops::$trait for ScalarExpr {
            type Output = ScalarExpr;
            fn $method(self, rhs: ScalarExpr) -> ScalarExpr {
                ScalarExpr::$ctor(self, rhs)
            }
        }
        impl std::ops::$trait for &ScalarExpr {
            type Output = ScalarExpr;
            fn $method(self, rhs: &ScalarExpr) -> ScalarExpr {
                ScalarExpr::$ctor(self.clone(), rhs.clone())
            }
        }
    };
}

impl_binop!(Add, add, add);
impl_binop!(Sub, sub, sub);
impl_binop!(Mul, mul, mul);
impl_binop!(Div, div, div);

impl std::ops::Neg for ScalarExpr {
    type Output = ScalarExpr;
    fn neg(self) -> ScalarExpr {
        ScalarExpr::neg(self)
    }
}

impl std::ops::Neg for &ScalarExpr {
    type Output = ScalarExpr;
    fn neg(self) -> ScalarExpr {
        ScalarExpr::neg(self.clone())
    }
}

// Canonical printer. Printing then reparsing reproduces the same tree, which
// the parser round-trip property relies on.
//
// Precedence levels: sums 1, products/quotients 2, powers 3, atoms 4. A node
// is parenthesized when its level is below what the slot requires.
fn prec(node: &Node) -> u8 {
    match node {
        Node::Add(..) => 1,
        Node::Mul(..) | Node::Div(..) => 2,
        Node::Pow(..) => 3,
        _ => 4,
    }
}

fn fmt_prec(e: &ScalarExpr, min: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let wrap = prec(&e.0) < min;
    if wrap {
        write!(f, "(")?;
    }
    match &*e.0 {
        Node::Const(c) => write!(f, "{c}")?,
        Node::Pi => write!(f, "pi")?,
        Node::Var(v) => write!(f, "{v}")?,
        Node::Add(a, b) => {
            fmt_prec(a, 1, f)?;
            // Fold a negated right operand into a subtraction.
            match &*b.0 {
                Node::Neg(inner) => {
                    write!(f, " - ")?;
                    fmt_prec(inner, 2, f)?;
                }
                Node::Const(c) if *c < 0.0 => {
                    write!(f, " - {}", -c)?;
                }
                _ => {
                    write!(f, " + ")?;
                    fmt_prec(b, 2, f)?;
                }
            }
        }
        Node::Mul(a, b) => {
            fmt_prec(a, 2, f)?;
            write!(f, "*")?;
            fmt_prec(b, 3, f)?;
        }
        Node::Div(a, b) => {
            fmt_prec(a, 2, f)?;
            write!(f, "/")?;
            fmt_prec(b, 3, f)?;
        }
        Node::Pow(a, k) => {
            fmt_prec(a, 4, f)?;
            write!(f, "^{k}")?;
        }
        Node::Neg(a) => {
            write!(f, "-")?;
            fmt_prec(a, 4, f)?;
        }
        Node::Sin(a) => {
            write!(f, "sin(")?;
            fmt_prec(a, 0, f)?;
            write!(f, ")")?;
        }
        Node::Cos(a) => {
            write!(f, "cos(")?;
            fmt_prec(a, 0, f)?;
            write!(f, ")")?;
        }
        Node::Exp(a) => {
            write!(f, "exp(")?;
            fmt_prec(a, 0, f)?;
            write!(f, ")")?;
        }
        Node::Sqrt(a) => {
            write!(f, "sqrt(")?;
            fmt_prec(a, 0, f)?;
            write!(f, ")")?;
        }
    }
    if wrap {
        write!(f, ")")?;
    }
    Ok(())
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_prec(self, 0, f)
    }
}

/// Per-variable sampling box with zero-test parameters.
#[derive(Debug, Clone)]
pub struct SampleDomain {
    vars: Vec<(String, f64, f64)>,
    pub samples: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl SampleDomain {
    /// `[-1, 1]` box over the given variables with default parameters.
    pub fn unit(vars: &[&str]) -> Self {
        let vars = vars.iter().map(|v| ((*v).to_owned(), -1.0, 1.0)).collect();
        SampleDomain {
            vars,
            samples: DEFAULT_SAMPLES,
            tolerance: DEFAULT_TOLERANCE,
            seed: DEFAULT_SEED,
        }
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        assert!(samples >= 1, "sample count must be at least 1");
        self.samples = samples;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        assert!(tolerance > 0.0, "tolerance must be positive");
        self.tolerance = tolerance;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_range(mut self, var: &str, lo: f64, hi: f64) -> Self {
        assert!(lo.is_finite() && hi.is_finite() && lo < hi, "bad interval");
        match self.vars.iter_mut().find(|(v, _, _)| v == var) {
            Some(entry) => {
                entry.1 = lo;
                entry.2 = hi;
            }
            None => self.vars.push((var.to_owned(), lo, hi)),
        }
        self
    }

    pub fn var_names(&self) -> Vec<&str> {
        self.vars.iter().map(|(v, _, _)| v.as_str()).collect()
    }

    /// Deterministic sample points; the same domain always yields the same
    /// sequence.
    pub fn points(&self) -> Vec<HashMap<String, f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.samples)
            .map(|_| {
                self.vars
                    .iter()
                    .map(|(v, lo, hi)| (v.clone(), rng.gen_range(*lo..=*hi)))
                    .collect()
            })
            .collect()
    }
}

/// Probabilistic zero test: true iff the expression evaluates within the
/// scaled tolerance at every sample point. `false` certifies a nonzero
/// expression; `true` is correct up to sampling failure.
pub fn is_zero(e: &ScalarExpr, dom: &SampleDomain) -> Result<bool, EvalError> {
    for point in dom.points() {
        let (value, scale) = e.eval_scaled(&point)?;
        // Negated so that a NaN value counts as nonzero.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(value.abs() <= dom.tolerance * (1.0 + scale)) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn x(name: &str) -> ScalarExpr {
        ScalarExpr::var(name)
    }

    fn pt(pairs: &[(&str, f64)]) -> HashMap<String, f64> {
        pairs.iter().map(|(k, v)| ((*k).to_owned(), *v)).collect()
    }

    #[test]
    fn evaluates_basic_nodes() {
        assert_eq!(x("x2").evaluate(&pt(&[("x2", 3.0)])).unwrap(), 3.0);
        let e = (ScalarExpr::constant(2.0) * ScalarExpr::pi() * x("x4")).sin();
        let v = e.evaluate(&pt(&[("x4", 0.25)])).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn evaluation_errors() {
        let e = ScalarExpr::one() / x("x1");
        assert_eq!(
            e.evaluate(&pt(&[("x1", 0.0)])),
            Err(EvalError::DivisionByZero)
        );
        let e = x("x1").sqrt();
        assert!(matches!(
            e.evaluate(&pt(&[("x1", -2.0)])),
            Err(EvalError::SqrtOfNegative(_))
        ));
        assert_eq!(
            x("y1").evaluate(&pt(&[("x1", 0.0)])),
            Err(EvalError::UnboundVariable("y1".into()))
        );
    }

    #[test]
    fn derivative_of_variable_is_one() {
        assert_eq!(x("x2").differentiate("x2"), ScalarExpr::one());
        assert_eq!(x("x2").differentiate("x1"), ScalarExpr::zero());
    }

    #[test]
    fn chain_rule_on_exponential() {
        // d/dx1 exp(s*x1 + t*y1) = s*exp(s*x1 + t*y1) for symbolic s, t
        let arg = x("s") * x("x1") + x("t") * x("y1");
        let d = arg.exp().differentiate("x1");
        let expect = x("s") * arg.exp();
        let dom = SampleDomain::unit(&["s", "t", "x1", "y1"]);
        assert!(is_zero(&(d - expect), &dom).unwrap());
    }

    #[test]
    fn derivative_of_sin_2pi_x4() {
        let two_pi = ScalarExpr::constant(2.0) * ScalarExpr::pi();
        let e = (two_pi.clone() * x("x4")).sin();
        let d = e.differentiate("x4");
        let expect = two_pi.clone() * (two_pi * x("x4")).cos();
        let dom = SampleDomain::unit(&["x4"]);
        assert!(is_zero(&(d - expect), &dom).unwrap());
    }

    #[test]
    fn pythagorean_identity_is_zero() {
        let e = x("x1").sin().pow(2) + x("x1").cos().pow(2) - ScalarExpr::one();
        assert!(is_zero(&e, &SampleDomain::unit(&["x1"])).unwrap());
    }

    #[test]
    fn plain_variable_is_not_zero() {
        assert!(!is_zero(&x("x2"), &SampleDomain::unit(&["x1", "x2", "y1", "y2"])).unwrap());
    }

    #[test]
    fn theorem_constraint_circle_point() {
        // s = sqrt(n-1)/n, t = -1/n solves s^2 + t^2 + t = 0; check n = 5.
        let n = 5.0_f64;
        let s = ScalarExpr::constant((n - 1.0).sqrt() / n);
        let t = ScalarExpr::constant(-1.0 / n);
        let e = s.pow(2) + t.pow(2) + t;
        assert!(is_zero(&e, &SampleDomain::unit(&["x1"])).unwrap());
    }

    #[test]
    fn is_zero_aborts_on_eval_error() {
        let e = ScalarExpr::one() / (x("x1") - x("x1"));
        assert!(is_zero(&e, &SampleDomain::unit(&["x1"])).is_err());
    }

    #[test]
    fn substitution_replaces_variables() {
        let e = x("x1") * x("x2");
        let mut map = HashMap::new();
        map.insert("x1".to_owned(), x("y1") + ScalarExpr::one());
        let s = e.substitute(&map);
        let v = s.evaluate(&pt(&[("y1", 2.0), ("x2", 10.0)])).unwrap();
        assert_eq!(v, 30.0);
    }

    // Deterministic random expression generator used by the finite-difference
    // oracle. Quotients and square roots are built with denominators and
    // arguments bounded away from the singular set.
    fn random_expr(rng: &mut ChaCha8Rng, vars: &[&str], depth: usize) -> ScalarExpr {
        let leaf = depth == 0;
        let choice = if leaf {
            rng.gen_range(0..2)
        } else {
            rng.gen_range(0..9)
        };
        match choice {
            0 => ScalarExpr::constant(rng.gen_range(-2.0..2.0)),
            1 => x(vars[rng.gen_range(0..vars.len())]),
            2 => random_expr(rng, vars, depth - 1) + random_expr(rng, vars, depth - 1),
            3 => random_expr(rng, vars, depth - 1) * random_expr(rng, vars, depth - 1),
            4 => random_expr(rng, vars, depth - 1).sin(),
            5 => random_expr(rng, vars, depth - 1).cos(),
            6 => {
                let den = ScalarExpr::constant(rng.gen_range(2.0..3.0))
                    + random_expr(rng, vars, depth - 1).sin();
                random_expr(rng, vars, depth - 1) / den
            }
            7 => (ScalarExpr::constant(rng.gen_range(2.0..3.0))
                + random_expr(rng, vars, depth - 1).cos())
            .sqrt(),
            _ => random_expr(rng, vars, depth - 1).pow(rng.gen_range(2..4)),
        }
    }

    #[test]
    fn finite_difference_oracle() {
        const VARS: [&str; 4] = ["x1", "x2", "y1", "y2"];
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut checked = 0;
        while checked < 200 {
            let e = random_expr(&mut rng, &VARS, 3);
            let v = VARS[rng.gen_range(0..VARS.len())];
            let point: HashMap<String, f64> = VARS
                .iter()
                .map(|n| ((*n).to_owned(), rng.gen_range(-1.0..1.0)))
                .collect();
            let sym = match e.differentiate(v).evaluate(&point) {
                Ok(val) => val,
                Err(_) => continue,
            };
            let h = 1e-5;
            let mut hi = point.clone();
            let mut lo = point.clone();
            *hi.get_mut(v).unwrap() += h;
            *lo.get_mut(v).unwrap() -= h;
            let (fh, fl) = match (e.evaluate(&hi), e.evaluate(&lo)) {
                (Ok(a), Ok(b)) => (a, b),
                _ => continue,
            };
            let fd = (fh - fl) / (2.0 * h);
            assert!(
                (sym - fd).abs() <= 1e-6 * (1.0 + sym.abs().max(fd.abs())),
                "derivative mismatch for {e} wrt {v}: sym={sym} fd={fd}"
            );
            checked += 1;
        }
    }

    #[test]
    fn exp_overflow_keeps_is_zero_honest() {
        // exp of a huge argument evaluates to a non-finite value; the scaled
        // comparison must still classify the expression as nonzero.
        let e = ScalarExpr::constant(800.0).exp() * x("x1");
        let dom = SampleDomain::unit(&["x1"]);
        assert!(!is_zero(&e, &dom).unwrap());
    }

    proptest! {
        #[test]
        fn e_minus_e_is_zero(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e = random_expr(&mut rng, &["x1", "y1"], 3);
            let dom = SampleDomain::unit(&["x1", "y1"]);
            prop_assert!(is_zero(&(e.clone() - e), &dom).unwrap());
        }
    }
}
