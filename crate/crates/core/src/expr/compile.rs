use super::eval::{apply_binary, apply_unary};
use super::{BinaryOp, EvalError, Expr, UnaryOp};

/// Assignment of variable names to positions in a flat value slice.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarLayout {
    names: Vec<String>,
}

impl VarLayout {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        Self {
            names: names.into_iter().map(Into::into).collect(),
        }
    }

    /// Layout `x1..xN, y1..yN, k` used by the map model.
    pub fn model(dim: usize) -> Self {
        let xs = (1..=dim).map(|i| format!("x{i}"));
        let ys = (1..=dim).map(|i| format!("y{i}"));
        Self::new(xs.chain(ys).chain(std::iter::once("k".to_string())))
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Clone, Debug)]
enum Node {
    Num(f64),
    Slot(usize),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
}

/// An expression with variables resolved to slots, for hot loops.
#[derive(Clone, Debug)]
pub struct CompiledExpr {
    root: Node,
    source: Expr,
}

impl CompiledExpr {
    pub fn new(expr: &Expr, layout: &VarLayout) -> Result<Self, EvalError> {
        Ok(Self {
            root: lower(expr, layout)?,
            source: expr.clone(),
        })
    }

    pub fn source(&self) -> &Expr {
        &self.source
    }

    /// Constant-folded value if the expression has no variables.
    pub fn as_constant(&self) -> Option<f64> {
        match self.root {
            Node::Num(v) => Some(v),
            _ => None,
        }
    }

    #[inline]
    pub fn eval(&self, slots: &[f64]) -> Result<f64, EvalError> {
        run(&self.root, slots).map_err(|kind| EvalError::Domain {
            kind,
            location: self.source.to_string(),
        })
    }

    /// Predicate view: nonzero is true.
    #[inline]
    pub fn holds(&self, slots: &[f64]) -> Result<bool, EvalError> {
        Ok(self.eval(slots)? != 0.0)
    }
}

fn lower(expr: &Expr, layout: &VarLayout) -> Result<Node, EvalError> {
    Ok(match expr {
        Expr::Num(v) => Node::Num(*v),
        Expr::Const(c) => Node::Num(c.value()),
        Expr::Var(name) => Node::Slot(
            layout
                .slot(name)
                .ok_or_else(|| EvalError::UnboundVariable(name.clone()))?,
        ),
        Expr::Unary(op, a) => {
            let a = lower(a, layout)?;
            if let Node::Num(v) = a {
                if let Ok(folded) = apply_unary(*op, v) {
                    return Ok(Node::Num(folded));
                }
            }
            Node::Unary(*op, Box::new(a))
        }
        Expr::Binary(op, a, b) => {
            let a = lower(a, layout)?;
            let b = lower(b, layout)?;
            if let (Node::Num(x), Node::Num(y)) = (&a, &b) {
                if let Ok(folded) = apply_binary(*op, *x, *y) {
                    return Ok(Node::Num(folded));
                }
            }
            Node::Binary(*op, Box::new(a), Box::new(b))
        }
    })
}

fn run(node: &Node, slots: &[f64]) -> Result<f64, super::DomainKind> {
    match node {
        Node::Num(v) => Ok(*v),
        Node::Slot(i) => Ok(slots[*i]),
        Node::Unary(op, a) => apply_unary(*op, run(a, slots)?),
        Node::Binary(BinaryOp::And, a, b) => {
            if run(a, slots)? == 0.0 {
                return Ok(0.0);
            }
            Ok(if run(b, slots)? != 0.0 { 1.0 } else { 0.0 })
        }
        Node::Binary(BinaryOp::Or, a, b) => {
            if run(a, slots)? != 0.0 {
                return Ok(1.0);
            }
            Ok(if run(b, slots)? != 0.0 { 1.0 } else { 0.0 })
        }
        Node::Binary(op, a, b) => apply_binary(*op, run(a, slots)?, run(b, slots)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{eval, parse, Binding};

    #[test]
    fn matches_interpreter() {
        let layout = VarLayout::model(2);
        let src = "x1^2 + 3*y2 - k/2 + (x2 > 0 and y1 <= 1)";
        let e = parse(src).unwrap();
        let c = CompiledExpr::new(&e, &layout).unwrap();
        let slots = [1.5, -0.25, 0.5, 2.0, 4.0];
        let b = Binding::new()
            .with("x1", 1.5)
            .with("x2", -0.25)
            .with("y1", 0.5)
            .with("y2", 2.0)
            .with("k", 4.0);
        assert_eq!(c.eval(&slots).unwrap(), eval(&e, &b).unwrap());
    }

    #[test]
    fn unknown_slot_is_unbound() {
        let e = parse("x3 + 1").unwrap();
        assert_eq!(
            CompiledExpr::new(&e, &VarLayout::model(2)).unwrap_err(),
            EvalError::UnboundVariable("x3".into())
        );
    }

    #[test]
    fn constants_fold() {
        let e = parse("1/(2*2^2)").unwrap();
        let c = CompiledExpr::new(&e, &VarLayout::model(1)).unwrap();
        assert_eq!(c.as_constant(), Some(0.125));
    }

    #[test]
    fn domain_errors_are_not_folded_away() {
        let e = parse("ln(0) + x1").unwrap();
        let c = CompiledExpr::new(&e, &VarLayout::model(1)).unwrap();
        assert!(matches!(c.eval(&[1.0, 0.0, 0.0]), Err(EvalError::Domain { .. })));
    }
}
