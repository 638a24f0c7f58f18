//! Scalar expression language used for regions, branch maps, inverses,
//! Jacobian determinants and densities.
//!
//! Expressions are real-valued. Comparisons and boolean connectives return
//! `1.0` for true and `0.0` for false, so region predicates and formulas share
//! one evaluator. Any nonzero value counts as true.
//!
//! Variables are `x1..xN`, `y1..yN` and the family index `k`; the named
//! constants are `pi`, `e` and `gamma` (Euler-Mascheroni).

mod compile;
mod eval;
mod parse;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

pub use compile::{CompiledExpr, VarLayout};
pub use eval::{eval, DomainKind, EvalError};
pub use parse::{parse, ParseError};

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Constant {
    Pi,
    E,
    Gamma,
}

impl Constant {
    pub fn value(self) -> f64 {
        match self {
            Constant::Pi => std::f64::consts::PI,
            Constant::E => std::f64::consts::E,
            Constant::Gamma => EULER_GAMMA,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Constant::Pi => "pi",
            Constant::E => "e",
            Constant::Gamma => "gamma",
        }
    }

    pub(crate) fn from_name(name: &str) -> Option<Self> {
        match name {
            "pi" => Some(Constant::Pi),
            "e" => Some(Constant::E),
            "gamma" => Some(Constant::Gamma),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Not,
    Abs,
    Sqrt,
    Exp,
    Ln,
    Log2,
    Floor,
    Sign,
    Arctan,
    Sin,
    Cos,
}

impl UnaryOp {
    /// Function-call name, `None` for the prefix operators.
    pub fn function_name(self) -> Option<&'static str> {
        Some(match self {
            UnaryOp::Neg | UnaryOp::Not => return None,
            UnaryOp::Abs => "abs",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Exp => "exp",
            UnaryOp::Ln => "ln",
            UnaryOp::Log2 => "log2",
            UnaryOp::Floor => "floor",
            UnaryOp::Sign => "sign",
            UnaryOp::Arctan => "arctan",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
        })
    }

    pub(crate) const FUNCTIONS: [UnaryOp; 10] = [
        UnaryOp::Abs,
        UnaryOp::Sqrt,
        UnaryOp::Exp,
        UnaryOp::Ln,
        UnaryOp::Log2,
        UnaryOp::Floor,
        UnaryOp::Sign,
        UnaryOp::Arctan,
        UnaryOp::Sin,
        UnaryOp::Cos,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Min,
    Max,
    Atan2,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
            BinaryOp::Min => "min",
            BinaryOp::Max => "max",
            BinaryOp::Atan2 => "atan2",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::And => "and",
            BinaryOp::Or => "or",
        }
    }

    /// True for the two-argument call forms `min(a, b)` etc.
    pub fn is_function(self) -> bool {
        matches!(self, BinaryOp::Min | BinaryOp::Max | BinaryOp::Atan2)
    }

    pub(crate) fn from_function_name(name: &str) -> Option<Self> {
        match name {
            "min" => Some(BinaryOp::Min),
            "max" => Some(BinaryOp::Max),
            "atan2" => Some(BinaryOp::Atan2),
            _ => None,
        }
    }
}

/// Expression tree. Literals produced by the parser are never negative;
/// a leading minus is a [`UnaryOp::Neg`] node.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Const(Constant),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Self {
        Expr::Var(name.into())
    }

    pub fn unary(op: UnaryOp, a: Expr) -> Self {
        Expr::Unary(op, Box::new(a))
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Self {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    /// Names of all variables appearing in the expression.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) | Expr::Const(_) => {}
            Expr::Var(name) => {
                out.insert(name.clone());
            }
            Expr::Unary(_, a) => a.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Replace every occurrence of the named variables by the given trees.
    pub fn substitute(&self, replacements: &HashMap<String, Expr>) -> Expr {
        match self {
            Expr::Var(name) => replacements
                .get(name)
                .cloned()
                .unwrap_or_else(|| self.clone()),
            Expr::Num(_) | Expr::Const(_) => self.clone(),
            Expr::Unary(op, a) => Expr::unary(*op, a.substitute(replacements)),
            Expr::Binary(op, a, b) => Expr::binary(
                *op,
                a.substitute(replacements),
                b.substitute(replacements),
            ),
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Var(_) | Expr::Const(_) => 1,
            Expr::Unary(_, a) => 1 + a.size(),
            Expr::Binary(_, a, b) => 1 + a.size() + b.size(),
        }
    }
}

/// Fully parenthesized rendering; re-parsing it yields an identical tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(name) => f.write_str(name),
            Expr::Const(c) => f.write_str(c.name()),
            Expr::Unary(UnaryOp::Neg, a) => write!(f, "(-{a})"),
            Expr::Unary(UnaryOp::Not, a) => write!(f, "(not {a})"),
            Expr::Unary(op, a) => {
                let name = op.function_name().expect("function op");
                write!(f, "{name}({a})")
            }
            Expr::Binary(op, a, b) if op.is_function() => {
                write!(f, "{}({a}, {b})", op.symbol())
            }
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}

/// Variable assignment for the interpreted evaluator.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Binding {
    values: HashMap<String, f64>,
}

impl Binding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, value: f64) -> Self {
        self.values.insert(name.into(), value);
        self
    }

    pub fn set(&mut self, name: impl Into<String>, value: f64) {
        self.values.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    /// Binds `x1..xN` to the coordinates of `x`.
    pub fn from_point(prefix: char, x: &[f64]) -> Self {
        let mut b = Self::new();
        for (i, v) in x.iter().enumerate() {
            b.set(format!("{prefix}{}", i + 1), *v);
        }
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_vars_of_constant_is_empty() {
        assert!(parse("3.0").unwrap().free_vars().is_empty());
    }

    #[test]
    fn free_vars_of_abs_difference() {
        let vars = parse("abs(x1-x2)").unwrap().free_vars();
        assert_eq!(vars.into_iter().collect::<Vec<_>>(), vec!["x1", "x2"]);
    }

    #[test]
    fn free_vars_of_family_inverse() {
        let vars = parse("y1 + (k-1)/1.5").unwrap().free_vars();
        assert_eq!(vars.into_iter().collect::<Vec<_>>(), vec!["k", "y1"]);
    }

    #[test]
    fn family_inverse_composes_with_sawtooth() {
        // inverse on the k-th interval followed by the forward sawtooth gives y back
        let fwd = parse("x1 - floor(1.5*x1)/1.5").unwrap();
        let inv = parse("y1 + (k-1)/1.5").unwrap();
        for k in 1..=10 {
            for &y in &[0.01, 0.3, 0.5, 0.66] {
                let b = Binding::new().with("y1", y).with("k", k as f64);
                let x = eval(&inv, &b).unwrap();
                let back = eval(&fwd, &Binding::new().with("x1", x)).unwrap();
                assert!((back - y).abs() < 1e-12, "k={k} y={y} back={back}");
            }
        }
    }

    #[test]
    fn substitute_replaces_variables() {
        let e = parse("3*y1 + 1").unwrap();
        let mut rep = HashMap::new();
        rep.insert("y1".to_string(), parse("x1^2").unwrap());
        let s = e.substitute(&rep);
        assert_eq!(eval(&s, &Binding::new().with("x1", 2.0)).unwrap(), 13.0);
    }

    #[test]
    fn display_is_reparseable() {
        for src in ["-2^2", "2^3^2", "not x1 > 0 and x2 <= 1 or k", "atan2(y1, -y2)"] {
            let e = parse(src).unwrap();
            assert_eq!(parse(&e.to_string()).unwrap(), e, "{src}");
        }
    }
}
