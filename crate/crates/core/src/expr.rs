//! Closed-form coefficient expressions.
//!
//! Models, Lyapunov packages and measure functions are assembled from a small
//! closed set of primitives: constants, time, state coordinates `x`, the free
//! measure-derivative variable `y`, declared functional values `F`, sums,
//! products, integer powers, `max`/`min` against constants and reciprocals.
//! Every built-in scenario fits in this set and evaluation stays auditable.

use std::fmt;
use std::ops;

/// Arguments an expression is evaluated against.
#[derive(Clone, Copy, Debug)]
pub struct Args<'a> {
    pub t: f64,
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub fv: &'a [f64],
}

impl<'a> Args<'a> {
    pub fn new(t: f64, x: &'a [f64], fv: &'a [f64]) -> Self {
        Args { t, x, y: &[], fv }
    }

    pub fn with_y(mut self, y: &'a [f64]) -> Self {
        self.y = y;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Time,
    /// State coordinate `x_a`.
    X(usize),
    /// Free variable of a measure derivative, `y_a`.
    Y(usize),
    /// Value of the `j`-th declared measure functional.
    F(usize),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Pow(Box<Expr>, i32),
    MaxConst(Box<Expr>, f64),
    MinConst(Box<Expr>, f64),
    /// `1/e`; only meaningful where `e` stays away from zero.
    Recip(Box<Expr>),
}

pub fn c(value: f64) -> Expr {
    Expr::Const(value)
}

pub fn x(axis: usize) -> Expr {
    Expr::X(axis)
}

pub fn y(axis: usize) -> Expr {
    Expr::Y(axis)
}

pub fn f(index: usize) -> Expr {
    Expr::F(index)
}

impl Expr {
    pub fn zero() -> Expr {
        Expr::Const(0.0)
    }

    pub fn powi(self, n: i32) -> Expr {
        match n {
            0 => Expr::Const(1.0),
            1 => self,
            _ => Expr::Pow(Box::new(self), n),
        }
    }

    pub fn max_const(self, floor: f64) -> Expr {
        Expr::MaxConst(Box::new(self), floor)
    }

    pub fn min_const(self, cap: f64) -> Expr {
        Expr::MinConst(Box::new(self), cap)
    }

    pub fn recip(self) -> Expr {
        Expr::Recip(Box::new(self))
    }

    /// True when the expression is the literal constant zero.
    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(v) if *v == 0.0)
    }

    pub fn eval(&self, a: &Args<'_>) -> f64 {
        match self {
            Expr::Const(v) => *v,
            Expr::Time => a.t,
            Expr::X(i) => a.x[*i],
            Expr::Y(i) => a.y[*i],
            Expr::F(j) => a.fv[*j],
            Expr::Sum(terms) => terms.iter().map(|e| e.eval(a)).sum(),
            Expr::Product(terms) => terms.iter().map(|e| e.eval(a)).product(),
            Expr::Pow(base, n) => base.eval(a).powi(*n),
            Expr::MaxConst(e, floor) => e.eval(a).max(*floor),
            Expr::MinConst(e, cap) => e.eval(a).min(*cap),
            Expr::Recip(e) => 1.0 / e.eval(a),
        }
    }

    /// Largest functional index referenced, if any.
    pub fn max_functional(&self) -> Option<usize> {
        self.fold_vars(&|e| if let Expr::F(j) = e { Some(*j) } else { None })
    }

    /// Largest state axis referenced, if any.
    pub fn max_state_axis(&self) -> Option<usize> {
        self.fold_vars(&|e| if let Expr::X(i) = e { Some(*i) } else { None })
    }

    pub fn max_y_axis(&self) -> Option<usize> {
        self.fold_vars(&|e| if let Expr::Y(i) = e { Some(*i) } else { None })
    }

    fn fold_vars(&self, pick: &dyn Fn(&Expr) -> Option<usize>) -> Option<usize> {
        match self {
            Expr::Sum(ts) | Expr::Product(ts) => {
                ts.iter().filter_map(|e| e.fold_vars(pick)).max()
            }
            Expr::Pow(e, _) | Expr::MaxConst(e, _) | Expr::MinConst(e, _) | Expr::Recip(e) => {
                e.fold_vars(pick)
            }
            leaf => pick(leaf),
        }
    }

    /// Interval enclosure of the expression over a box of states.
    pub fn enclose(&self, a: &IntervalArgs<'_>) -> Interval {
        match self {
            Expr::Const(v) => Interval::point(*v),
            Expr::Time => Interval::point(a.t),
            Expr::X(i) => a.x[*i],
            Expr::Y(i) => a.y[*i],
            Expr::F(j) => Interval::point(a.fv[*j]),
            Expr::Sum(ts) => ts.iter().fold(Interval::point(0.0), |acc, e| acc + e.enclose(a)),
            Expr::Product(ts) => ts.iter().fold(Interval::point(1.0), |acc, e| acc * e.enclose(a)),
            Expr::Pow(e, n) => e.enclose(a).powi(*n),
            Expr::MaxConst(e, floor) => {
                let i = e.enclose(a);
                Interval::new(i.lo.max(*floor), i.hi.max(*floor))
            }
            Expr::MinConst(e, cap) => {
                let i = e.enclose(a);
                Interval::new(i.lo.min(*cap), i.hi.min(*cap))
            }
            Expr::Recip(e) => e.enclose(a).recip(),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn join(out: &mut fmt::Formatter<'_>, ts: &[Expr], sep: &str) -> fmt::Result {
            write!(out, "(")?;
            for (i, t) in ts.iter().enumerate() {
                if i > 0 {
                    write!(out, "{sep}")?;
                }
                write!(out, "{t}")?;
            }
            write!(out, ")")
        }
        match self {
            Expr::Const(v) => write!(out, "{v}"),
            Expr::Time => write!(out, "t"),
            Expr::X(i) => write!(out, "x{i}"),
            Expr::Y(i) => write!(out, "y{i}"),
            Expr::F(j) => write!(out, "F{j}"),
            Expr::Sum(ts) => join(out, ts, " + "),
            Expr::Product(ts) => join(out, ts, "*"),
            Expr::Pow(e, n) => write!(out, "{e}^{n}"),
            Expr::MaxConst(e, v) => write!(out, "max({e}, {v})"),
            Expr::MinConst(e, v) => write!(out, "min({e}, {v})"),
            Expr::Recip(e) => write!(out, "1/{e}"),
        }
    }
}

impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        match (self, rhs) {
            (Expr::Sum(mut a), Expr::Sum(b)) => {
                a.extend(b);
                Expr::Sum(a)
            }
            (Expr::Sum(mut a), b) => {
                a.push(b);
                Expr::Sum(a)
            }
            (a, b) => Expr::Sum(vec![a, b]),
        }
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        match (self, rhs) {
            (Expr::Product(mut a), Expr::Product(b)) => {
                a.extend(b);
                Expr::Product(a)
            }
            (Expr::Product(mut a), b) => {
                a.push(b);
                Expr::Product(a)
            }
            (a, b) => Expr::Product(vec![a, b]),
        }
    }
}

impl ops::Mul<Expr> for f64 {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Const(self) * rhs
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Const(-1.0) * self
    }
}

impl ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        self + (-rhs)
    }
}

/// Closed interval `[lo, hi]`, possibly unbounded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi || lo.is_nan() || hi.is_nan());
        Interval { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn entire() -> Self {
        Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn magnitude(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn recip(self) -> Interval {
        if self.contains(0.0) {
            Interval::entire()
        } else {
            Interval::new(1.0 / self.hi, 1.0 / self.lo)
        }
    }

    pub fn powi(self, n: i32) -> Interval {
        if n == 0 {
            return Interval::point(1.0);
        }
        if n < 0 {
            return self.powi(-n).recip();
        }
        let (a, b) = (self.lo.powi(n), self.hi.powi(n));
        if n % 2 == 1 {
            Interval::new(a, b)
        } else if self.contains(0.0) {
            Interval::new(0.0, a.max(b))
        } else {
            Interval::new(a.min(b), a.max(b))
        }
    }
}

impl ops::Add for Interval {
    type Output = Interval;
    fn add(self, rhs: Interval) -> Interval {
        Interval::new(self.lo + rhs.lo, self.hi + rhs.hi)
    }
}

impl ops::Mul for Interval {
    type Output = Interval;
    fn mul(self, rhs: Interval) -> Interval {
        let prod = |p: f64, q: f64| if p == 0.0 || q == 0.0 { 0.0 } else { p * q };
        let cands = [
            prod(self.lo, rhs.lo),
            prod(self.lo, rhs.hi),
            prod(self.hi, rhs.lo),
            prod(self.hi, rhs.hi),
        ];
        let lo = cands.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = cands.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval::new(lo, hi)
    }
}

/// Arguments for interval evaluation: states range over boxes, functionals
/// are held at point values.
#[derive(Clone, Copy, Debug)]
pub struct IntervalArgs<'a> {
    pub t: f64,
    pub x: &'a [Interval],
    pub y: &'a [Interval],
    pub fv: &'a [f64],
}
