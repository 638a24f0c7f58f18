use thiserror::Error;

use super::{Binding, BinaryOp, Expr, UnaryOp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DomainKind {
    DivZero,
    LogNonpos,
    SqrtNeg,
    /// Negative base raised to a non-integer power.
    PowDomain,
}

impl DomainKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainKind::DivZero => "div_zero",
            DomainKind::LogNonpos => "log_nonpos",
            DomainKind::SqrtNeg => "sqrt_neg",
            DomainKind::PowDomain => "pow_domain",
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{} in `{location}`", kind.as_str())]
    Domain { kind: DomainKind, location: String },
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
}

#[inline]
fn truth(v: f64) -> bool {
    v != 0.0
}

#[inline]
fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn apply_unary(op: UnaryOp, a: f64) -> Result<f64, DomainKind> {
    Ok(match op {
        UnaryOp::Neg => -a,
        UnaryOp::Not => flag(!truth(a)),
        UnaryOp::Abs => a.abs(),
        UnaryOp::Sqrt => {
            if a < 0.0 {
                return Err(DomainKind::SqrtNeg);
            }
            a.sqrt()
        }
        UnaryOp::Exp => a.exp(),
        UnaryOp::Ln | UnaryOp::Log2 => {
            if a <= 0.0 {
                return Err(DomainKind::LogNonpos);
            }
            if op == UnaryOp::Ln {
                a.ln()
            } else {
                a.log2()
            }
        }
        UnaryOp::Floor => a.floor(),
        UnaryOp::Sign => {
            if a > 0.0 {
                1.0
            } else if a < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
        UnaryOp::Arctan => a.atan(),
        UnaryOp::Sin => a.sin(),
        UnaryOp::Cos => a.cos(),
    })
}

/// Arithmetic binary operators; `and`/`or` are short-circuited by callers.
#[inline]
pub(crate) fn apply_binary(op: BinaryOp, a: f64, b: f64) -> Result<f64, DomainKind> {
    Ok(match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        BinaryOp::Div => {
            if b == 0.0 {
                return Err(DomainKind::DivZero);
            }
            a / b
        }
        BinaryOp::Pow => {
            if a < 0.0 && b.fract() != 0.0 {
                return Err(DomainKind::PowDomain);
            }
            if a == 0.0 && b < 0.0 {
                return Err(DomainKind::DivZero);
            }
            a.powf(b)
        }
        BinaryOp::Min => a.min(b),
        BinaryOp::Max => a.max(b),
        BinaryOp::Atan2 => a.atan2(b),
        BinaryOp::Lt => flag(a < b),
        BinaryOp::Le => flag(a <= b),
        BinaryOp::Gt => flag(a > b),
        BinaryOp::Ge => flag(a >= b),
        BinaryOp::And => flag(truth(a) && truth(b)),
        BinaryOp::Or => flag(truth(a) || truth(b)),
    })
}

/// Interprets `expr` under `binding`.
pub fn eval(expr: &Expr, binding: &Binding) -> Result<f64, EvalError> {
    let domain = |kind| EvalError::Domain {
        kind,
        location: expr.to_string(),
    };
    match expr {
        Expr::Num(v) => Ok(*v),
        Expr::Const(c) => Ok(c.value()),
        Expr::Var(name) => binding
            .get(name)
            .ok_or_else(|| EvalError::UnboundVariable(name.clone())),
        Expr::Unary(op, a) => apply_unary(*op, eval(a, binding)?).map_err(domain),
        Expr::Binary(BinaryOp::And, a, b) => {
            if !truth(eval(a, binding)?) {
                return Ok(0.0);
            }
            Ok(flag(truth(eval(b, binding)?)))
        }
        Expr::Binary(BinaryOp::Or, a, b) => {
            if truth(eval(a, binding)?) {
                return Ok(1.0);
            }
            Ok(flag(truth(eval(b, binding)?)))
        }
        Expr::Binary(op, a, b) => {
            let av = eval(a, binding)?;
            let bv = eval(b, binding)?;
            apply_binary(*op, av, bv).map_err(domain)
        }
    }
}
