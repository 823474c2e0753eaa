//! Scalar field expressions in the chart variables `x` and `y`.
//!
//! Metric coefficients, conformal factors and custom bond laws are given as
//! small arithmetic expressions. They are parsed once into an immutable tree,
//! evaluated in IEEE double precision, and differentiated symbolically (first
//! and second derivatives are needed for curvature and for the analytic
//! gradients of polyline lengths).
//!
//! ```
//! use incompat_core::field_expr::parse_field;
//!
//! let f = parse_field("x^2 + y").unwrap();
//! assert_eq!(f.eval(3.0, 0.0).unwrap(), 9.0);
//! assert_eq!(f.gradient(3.0, 0.0).unwrap(), (6.0, 1.0));
//! ```

mod diff;
mod parser;

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use diff::derivative;

/// Chart variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Var {
    X,
    Y,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Constant {
    Pi,
    E,
}

impl Constant {
    pub fn value(self) -> f64 {
        match self {
            Constant::Pi => std::f64::consts::PI,
            Constant::E => std::f64::consts::E,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    pub(crate) fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

/// Expression tree.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Const(Constant),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Errors produced while parsing an expression.
#[derive(Clone, Debug, PartialEq, Error)]
pub enum ExprError {
    #[error("empty expression")]
    Empty,
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("`{name}` takes {expected} argument(s) but {found} were given (offset {offset})")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
        offset: usize,
    },
}

impl ExprError {
    /// Byte offset of the error in the source, when known.
    pub fn offset(&self) -> Option<usize> {
        match self {
            ExprError::Empty => None,
            ExprError::Syntax { offset, .. }
            | ExprError::UnknownIdentifier { offset, .. }
            | ExprError::Arity { offset, .. } => Some(*offset),
        }
    }
}

/// Evaluation outside the natural domain of some subexpression.
#[derive(Clone, Debug, PartialEq, Error)]
#[error("domain error in `{subexpr}`: {reason}")]
pub struct DomainError {
    pub subexpr: String,
    pub reason: &'static str,
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn x() -> Expr {
        Expr::Var(Var::X)
    }

    pub fn y() -> Expr {
        Expr::Var(Var::Y)
    }

    /// True when the tree does not reference `x` or `y`.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Const(_) => true,
            Expr::Var(_) => false,
            Expr::Neg(e) | Expr::Call(_, e) => e.is_constant(),
            Expr::Bin(_, l, r) => l.is_constant() && r.is_constant(),
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Var(_) | Expr::Const(_) => 1,
            Expr::Neg(e) | Expr::Call(_, e) => 1 + e.size(),
            Expr::Bin(_, l, r) => 1 + l.size() + r.size(),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64, DomainError> {
        let v = match self {
            Expr::Num(v) => return Ok(*v),
            Expr::Var(Var::X) => return Ok(x),
            Expr::Var(Var::Y) => return Ok(y),
            Expr::Const(c) => return Ok(c.value()),
            Expr::Neg(e) => -e.eval(x, y)?,
            Expr::Bin(op, l, r) => {
                let a = l.eval(x, y)?;
                let b = r.eval(x, y)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(self.domain("division by zero"));
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        if a < 0.0 && b.fract() != 0.0 {
                            return Err(self.domain("negative base with non-integer exponent"));
                        }
                        if a == 0.0 && b < 0.0 {
                            return Err(self.domain("zero base with negative exponent"));
                        }
                        pow(a, b)
                    }
                }
            }
            Expr::Call(f, e) => {
                let a = e.eval(x, y)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a <= 0.0 {
                            return Err(self.domain("logarithm of a nonpositive value"));
                        }
                        a.ln()
                    }
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(self.domain("square root of a negative value"));
                        }
                        a.sqrt()
                    }
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.domain("non-finite result"))
        }
    }

    fn domain(&self, reason: &'static str) -> DomainError {
        DomainError {
            subexpr: self.to_string(),
            reason,
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => 3,
            Expr::Num(_) | Expr::Var(_) | Expr::Const(_) | Expr::Call(..) => 5,
            Expr::Neg(_) => 3,
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Bin(BinOp::Pow, ..) => 4,
        }
    }
}

// Integer exponents go through powi so that e.g. (-2)^3 stays exact.
fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

/// Prints with the minimal parentheses needed to re-parse into the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(Var::X) => f.write_str("x"),
            Expr::Var(Var::Y) => f.write_str("y"),
            Expr::Const(Constant::Pi) => f.write_str("pi"),
            Expr::Const(Constant::E) => f.write_str("e"),
            Expr::Neg(e) => {
                f.write_str("-")?;
                write_child(f, e, e.precedence() < 3)
            }
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
            Expr::Bin(BinOp::Pow, l, r) => {
                write_child(f, l, l.precedence() <= 4)?;
                f.write_str("^")?;
                write_child(f, r, r.precedence() < 3)
            }
            Expr::Bin(op, l, r) => {
                let p = self.precedence();
                write_child(f, l, l.precedence() < p)?;
                f.write_str(match op {
                    BinOp::Add => " + ",
                    BinOp::Sub => " - ",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => unreachable!(),
                })?;
                write_child(f, r, r.precedence() <= p)
            }
        }
    }
}

/// A parsed scalar field in the chart variables.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarFieldExpr {
    source: String,
    ast: Expr,
}

impl ScalarFieldExpr {
    pub fn parse(source: &str) -> Result<Self, ExprError> {
        let ast = parser::parse(source)?;
        Ok(ScalarFieldExpr {
            source: source.to_string(),
            ast,
        })
    }

    /// Wraps a tree built programmatically; the source is its printed form.
    pub fn from_ast(ast: Expr) -> Self {
        ScalarFieldExpr {
            source: ast.to_string(),
            ast,
        }
    }

    pub fn constant(v: f64) -> Self {
        Self::from_ast(Expr::Num(v))
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn ast(&self) -> &Expr {
        &self.ast
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64, DomainError> {
        self.ast.eval(x, y)
    }

    pub fn derivative(&self, var: Var) -> ScalarFieldExpr {
        Self::from_ast(derivative(&self.ast, var))
    }

    pub fn gradient(&self, x: f64, y: f64) -> Result<(f64, f64), DomainError> {
        Ok((
            derivative(&self.ast, Var::X).eval(x, y)?,
            derivative(&self.ast, Var::Y).eval(x, y)?,
        ))
    }

    pub fn hessian(&self, x: f64, y: f64) -> Result<[[f64; 2]; 2], DomainError> {
        let jet = self.jet();
        jet.hessian(x, y)
    }

    /// Precomputes the first and second symbolic derivatives.
    pub fn jet(&self) -> FieldJet {
        FieldJet::new(&self.ast)
    }
}

impl fmt::Display for ScalarFieldExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Serialize for ScalarFieldExpr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for ScalarFieldExpr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        ScalarFieldExpr::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// A field together with its symbolic first and second derivatives.
#[derive(Clone, Debug)]
pub struct FieldJet {
    pub value: Expr,
    pub dx: Expr,
    pub dy: Expr,
    pub dxx: Expr,
    pub dxy: Expr,
    pub dyy: Expr,
}

impl FieldJet {
    pub fn new(e: &Expr) -> Self {
        let dx = derivative(e, Var::X);
        let dy = derivative(e, Var::Y);
        let dxx = derivative(&dx, Var::X);
        let dxy = derivative(&dx, Var::Y);
        let dyy = derivative(&dy, Var::Y);
        FieldJet {
            value: e.clone(),
            dx,
            dy,
            dxx,
            dxy,
            dyy,
        }
    }

    pub fn value(&self, x: f64, y: f64) -> Result<f64, DomainError> {
        self.value.eval(x, y)
    }

    pub fn gradient(&self, x: f64, y: f64) -> Result<(f64, f64), DomainError> {
        Ok((self.dx.eval(x, y)?, self.dy.eval(x, y)?))
    }

    pub fn hessian(&self, x: f64, y: f64) -> Result<[[f64; 2]; 2], DomainError> {
        let xy = self.dxy.eval(x, y)?;
        Ok([[self.dxx.eval(x, y)?, xy], [xy, self.dyy.eval(x, y)?]])
    }
}

/// Parses `source` into a field expression.
pub fn parse_field(source: &str) -> Result<ScalarFieldExpr, ExprError> {
    ScalarFieldExpr::parse(source)
}

pub fn eval_field(expr: &ScalarFieldExpr, x: f64, y: f64) -> Result<f64, DomainError> {
    expr.eval(x, y)
}

pub fn eval_gradient(expr: &ScalarFieldExpr, x: f64, y: f64) -> Result<(f64, f64), DomainError> {
    expr.gradient(x, y)
}

pub fn eval_hessian(expr: &ScalarFieldExpr, x: f64, y: f64) -> Result<[[f64; 2]; 2], DomainError> {
    expr.hessian(x, y)
}
