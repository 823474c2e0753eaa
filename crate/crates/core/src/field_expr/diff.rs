//! Symbolic differentiation with light algebraic simplification.

use super::{BinOp, Expr, Func, Var};

fn as_num(e: &Expr) -> Option<f64> {
    match e {
        Expr::Num(v) => Some(*v),
        _ => None,
    }
}

fn fold(e: Expr) -> Expr {
    if matches!(e, Expr::Const(_)) || !e.is_constant() {
        return e;
    }
    match e.eval(0.0, 0.0) {
        Ok(v) => Expr::Num(v),
        Err(_) => e,
    }
}

pub(crate) fn add(a: Expr, b: Expr) -> Expr {
    match (as_num(&a), as_num(&b)) {
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        (Some(x), Some(y)) => Expr::Num(x + y),
        _ => Expr::Bin(BinOp::Add, Box::new(a), Box::new(b)),
    }
}

pub(crate) fn sub(a: Expr, b: Expr) -> Expr {
    match (as_num(&a), as_num(&b)) {
        (_, Some(y)) if y == 0.0 => a,
        (Some(x), _) if x == 0.0 => neg(b),
        (Some(x), Some(y)) => Expr::Num(x - y),
        _ => Expr::Bin(BinOp::Sub, Box::new(a), Box::new(b)),
    }
}

pub(crate) fn mul(a: Expr, b: Expr) -> Expr {
    match (as_num(&a), as_num(&b)) {
        (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::Num(0.0),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        (Some(x), _) if x == -1.0 => neg(b),
        (_, Some(y)) if y == -1.0 => neg(a),
        (Some(x), Some(y)) => Expr::Num(x * y),
        _ => Expr::Bin(BinOp::Mul, Box::new(a), Box::new(b)),
    }
}

pub(crate) fn div(a: Expr, b: Expr) -> Expr {
    match (as_num(&a), as_num(&b)) {
        (Some(x), _) if x == 0.0 => Expr::Num(0.0),
        (_, Some(y)) if y == 1.0 => a,
        (Some(x), Some(y)) if y != 0.0 => Expr::Num(x / y),
        _ => Expr::Bin(BinOp::Div, Box::new(a), Box::new(b)),
    }
}

pub(crate) fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

pub(crate) fn pow(a: Expr, b: Expr) -> Expr {
    match as_num(&b) {
        Some(y) if y == 0.0 => Expr::Num(1.0),
        Some(y) if y == 1.0 => a,
        _ => fold(Expr::Bin(BinOp::Pow, Box::new(a), Box::new(b))),
    }
}

pub(crate) fn call(f: Func, a: Expr) -> Expr {
    fold(Expr::Call(f, Box::new(a)))
}

/// d e / d var.
pub fn derivative(e: &Expr, var: Var) -> Expr {
    match e {
        Expr::Num(_) | Expr::Const(_) => Expr::Num(0.0),
        Expr::Var(v) => Expr::Num(if *v == var { 1.0 } else { 0.0 }),
        Expr::Neg(a) => neg(derivative(a, var)),
        Expr::Bin(op, l, r) => {
            let dl = derivative(l, var);
            let dr = derivative(r, var);
            let (l, r) = (l.as_ref().clone(), r.as_ref().clone());
            match op {
                BinOp::Add => add(dl, dr),
                BinOp::Sub => sub(dl, dr),
                BinOp::Mul => add(mul(dl, r.clone()), mul(l, dr)),
                BinOp::Div => {
                    // (l' r - l r') / r^2
                    let num = sub(mul(dl, r.clone()), mul(l, dr));
                    div(num, pow(r, Expr::Num(2.0)))
                }
                BinOp::Pow => {
                    if r.is_constant() {
                        // n l^(n-1) l'
                        let n_minus_1 = fold(sub(r.clone(), Expr::Num(1.0)));
                        mul(mul(r, pow(l, n_minus_1)), dl)
                    } else if l.is_constant() {
                        // l^r log(l) r'
                        mul(mul(e.clone(), call(Func::Log, l)), dr)
                    } else {
                        // l^r (r' log l + r l'/l)
                        let t1 = mul(dr, call(Func::Log, l.clone()));
                        let t2 = div(mul(r, dl), l);
                        mul(e.clone(), add(t1, t2))
                    }
                }
            }
        }
        Expr::Call(f, a) => {
            let da = derivative(a, var);
            if as_num(&da) == Some(0.0) {
                return Expr::Num(0.0);
            }
            let a = a.as_ref().clone();
            let outer = match f {
                Func::Sin => call(Func::Cos, a),
                Func::Cos => neg(call(Func::Sin, a)),
                Func::Exp => e.clone(),
                Func::Log => div(Expr::Num(1.0), a),
                Func::Sqrt => div(Expr::Num(1.0), mul(Expr::Num(2.0), e.clone())),
            };
            mul(outer, da)
        }
    }
}
