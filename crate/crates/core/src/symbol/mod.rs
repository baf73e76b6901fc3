//! Symbols in the classes `S^{m,mu}`, the generator pieces built from a
//! metric, and numerical certification of symbol estimates and ellipticity.

mod estimates;
mod families;
mod metric;

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use estimates::{
    check_symbol_estimates, multi_indices, EstimateEntry, EstimateReport, ProbeGrid, STABILITY_FACTOR,
};
pub use families::{harmonic_window, shear, MagneticFamily, PotentialFamily};
pub use metric::{
    build_hamiltonian, build_lower_metric_term, check_ellipticity, MetricCoefficients, MetricFamily,
};

pub type SpatialFn = Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync>;
pub type FullFn = Arc<dyn Fn(&[f64], &[f64]) -> Complex64 + Send + Sync>;
/// `(alpha, beta, x, xi) -> ∂_xi^alpha ∂_x^beta a(x, xi)`.
pub type DerivativeFn = Arc<dyn Fn(&[usize], &[usize], &[f64], &[f64]) -> Complex64 + Send + Sync>;

/// Order `(m, mu)`: spatial weight exponent and frequency weight exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolOrder {
    pub m: f64,
    pub mu: f64,
}

impl SymbolOrder {
    pub const fn new(m: f64, mu: f64) -> Self {
        SymbolOrder { m, mu }
    }
}

impl std::ops::Add for SymbolOrder {
    type Output = SymbolOrder;
    fn add(self, rhs: SymbolOrder) -> SymbolOrder {
        SymbolOrder { m: self.m + rhs.m, mu: self.mu + rhs.mu }
    }
}

/// One factor of a separable term; `Unit` is the constant 1.
#[derive(Clone)]
pub enum Factor {
    Unit,
    Func(SpatialFn),
}

impl Factor {
    pub fn func(f: impl Fn(&[f64]) -> Complex64 + Send + Sync + 'static) -> Self {
        Factor::Func(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, v: &[f64]) -> Complex64 {
        match self {
            Factor::Unit => Complex64::new(1.0, 0.0),
            Factor::Func(f) => f(v),
        }
    }

    pub fn is_unit(&self) -> bool {
        matches!(self, Factor::Unit)
    }

    fn times(&self, other: &Factor) -> Factor {
        match (self, other) {
            (Factor::Unit, f) | (f, Factor::Unit) => f.clone(),
            (Factor::Func(a), Factor::Func(b)) => {
                let (a, b) = (Arc::clone(a), Arc::clone(b));
                Factor::func(move |v| a(v) * b(v))
            }
        }
    }
}

/// `c(x) m(xi)`.
#[derive(Clone)]
pub struct SeparableTerm {
    pub spatial: Factor,
    pub frequency: Factor,
}

impl SeparableTerm {
    pub fn new(spatial: Factor, frequency: Factor) -> Self {
        SeparableTerm { spatial, frequency }
    }
}

#[derive(Clone)]
pub(crate) enum Repr {
    Separable(Vec<SeparableTerm>),
    General(FullFn),
}

/// An order-tagged function `a(x, xi)`.
///
/// Separable symbols `Σ_p c_p(x) m_p(xi)` are applied at FFT cost; general
/// symbols fall back to direct Kohn–Nirenberg summation.
#[derive(Clone)]
pub struct Symbol {
    dim: usize,
    order: SymbolOrder,
    repr: Repr,
    derivative: Option<DerivativeFn>,
    label: String,
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.repr {
            Repr::Separable(t) => format!("separable({} terms)", t.len()),
            Repr::General(_) => "general".to_string(),
        };
        f.debug_struct("Symbol")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("order", &self.order)
            .field("kind", &kind)
            .field("oracle", &self.derivative.is_some())
            .finish()
    }
}

impl Symbol {
    pub fn separable(dim: usize, order: SymbolOrder, terms: Vec<SeparableTerm>) -> Self {
        Symbol { dim, order, repr: Repr::Separable(terms), derivative: None, label: String::new() }
    }

    pub fn general(
        dim: usize,
        order: SymbolOrder,
        f: impl Fn(&[f64], &[f64]) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        Symbol { dim, order, repr: Repr::General(Arc::new(f)), derivative: None, label: String::new() }
    }

    pub fn zero(dim: usize, order: SymbolOrder) -> Self {
        Self::separable(dim, order, Vec::new()).with_label("zero")
    }

    /// Constant symbol of order `(0, 0)`.
    pub fn constant(dim: usize, c: Complex64) -> Self {
        let term = SeparableTerm::new(Factor::Unit, Factor::func(move |_| c));
        let oracle = move |alpha: &[usize], beta: &[usize], _: &[f64], _: &[f64]| {
            if alpha.iter().chain(beta).all(|&k| k == 0) {
                c
            } else {
                Complex64::new(0.0, 0.0)
            }
        };
        Self::separable(dim, SymbolOrder::new(0.0, 0.0), vec![term])
            .with_derivative_oracle(oracle)
            .with_label("constant")
    }

    /// `x`-independent symbol `m(xi)`: a Fourier multiplier.
    pub fn multiplier(
        dim: usize,
        order: SymbolOrder,
        m: impl Fn(&[f64]) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        Self::separable(dim, order, vec![SeparableTerm::new(Factor::Unit, Factor::func(m))])
    }

    /// `xi`-independent symbol `c(x)`: a multiplication operator.
    pub fn multiplication(
        dim: usize,
        order: SymbolOrder,
        c: impl Fn(&[f64]) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        Self::separable(dim, order, vec![SeparableTerm::new(Factor::func(c), Factor::Unit)])
    }

    /// `lambda_{r,rho}(x, xi) = <x>^r <xi>^rho`.
    pub fn weight(dim: usize, r: f64, rho: f64) -> Self {
        use crate::conventions::bracket;
        let spatial = if r == 0.0 { Factor::Unit } else { Factor::func(move |x| bracket(x).powf(r).into()) };
        let frequency =
            if rho == 0.0 { Factor::Unit } else { Factor::func(move |xi| bracket(xi).powf(rho).into()) };
        Self::separable(dim, SymbolOrder::new(r, rho), vec![SeparableTerm::new(spatial, frequency)])
            .with_label(format!("lambda_{{{r},{rho}}}"))
    }

    pub fn with_derivative_oracle(
        mut self,
        f: impl Fn(&[usize], &[usize], &[f64], &[f64]) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        self.derivative = Some(Arc::new(f));
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Same function, different declared order.
    pub fn with_order(mut self, order: SymbolOrder) -> Self {
        self.order = order;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> SymbolOrder {
        self.order
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn terms(&self) -> Option<&[SeparableTerm]> {
        match &self.repr {
            Repr::Separable(t) => Some(t),
            Repr::General(_) => None,
        }
    }

    pub(crate) fn repr(&self) -> &Repr {
        &self.repr
    }

    pub fn derivative_oracle(&self) -> Option<&DerivativeFn> {
        self.derivative.as_ref()
    }

    pub fn is_zero(&self) -> bool {
        matches!(&self.repr, Repr::Separable(t) if t.is_empty())
    }

    /// True when every term has a constant spatial factor.
    pub fn is_x_independent(&self) -> bool {
        matches!(&self.repr, Repr::Separable(t) if t.iter().all(|t| t.spatial.is_unit()))
    }

    /// True when every term has a constant frequency factor.
    pub fn is_xi_independent(&self) -> bool {
        matches!(&self.repr, Repr::Separable(t) if t.iter().all(|t| t.frequency.is_unit()))
    }

    pub fn eval(&self, x: &[f64], xi: &[f64]) -> Complex64 {
        match &self.repr {
            Repr::Separable(terms) => terms.iter().map(|t| t.spatial.eval(x) * t.frequency.eval(xi)).sum(),
            Repr::General(f) => f(x, xi),
        }
    }

    /// Pointwise product; orders add.
    pub fn product(&self, other: &Symbol) -> Symbol {
        assert_eq!(self.dim, other.dim, "symbol dimensions differ");
        let order = self.order + other.order;
        let label = format!("({})*({})", self.label, other.label);
        match (&self.repr, &other.repr) {
            (Repr::Separable(a), Repr::Separable(b)) => {
                let mut terms = Vec::with_capacity(a.len() * b.len());
                for p in a {
                    for q in b {
                        terms.push(SeparableTerm::new(p.spatial.times(&q.spatial), p.frequency.times(&q.frequency)));
                    }
                }
                Symbol::separable(self.dim, order, terms).with_label(label)
            }
            _ => {
                let (a, b) = (self.clone(), other.clone());
                Symbol::general(self.dim, order, move |x, xi| a.eval(x, xi) * b.eval(x, xi)).with_label(label)
            }
        }
    }

    /// Pointwise sum; the declared order is the componentwise maximum.
    pub fn sum(&self, other: &Symbol) -> Symbol {
        assert_eq!(self.dim, other.dim, "symbol dimensions differ");
        let order = SymbolOrder::new(self.order.m.max(other.order.m), self.order.mu.max(other.order.mu));
        let label = format!("{}+{}", self.label, other.label);
        match (&self.repr, &other.repr) {
            (Repr::Separable(a), Repr::Separable(b)) => {
                Symbol::separable(self.dim, order, a.iter().chain(b).cloned().collect()).with_label(label)
            }
            _ => {
                let (a, b) = (self.clone(), other.clone());
                Symbol::general(self.dim, order, move |x, xi| a.eval(x, xi) + b.eval(x, xi)).with_label(label)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_and_general_evaluate_alike() {
        let sep = Symbol::weight(1, 1.0, 2.0);
        let gen = Symbol::general(1, SymbolOrder::new(1.0, 2.0), |x, xi| {
            ((1.0 + x[0] * x[0]).sqrt() * (1.0 + xi[0] * xi[0])).into()
        });
        for (x, xi) in [(0.0, 0.0), (1.5, -2.0), (-7.0, 3.0)] {
            assert!((sep.eval(&[x], &[xi]) - gen.eval(&[x], &[xi])).norm() < 1e-12);
        }
    }

    #[test]
    fn product_adds_orders_and_multiplies_values() {
        let p = Symbol::weight(1, 1.0, 0.0);
        let q = Symbol::weight(1, 0.0, 2.0);
        let pq = p.product(&q);
        assert_eq!(pq.order(), SymbolOrder::new(1.0, 2.0));
        let (x, xi) = ([2.0], [3.0]);
        assert!((pq.eval(&x, &xi) - p.eval(&x, &xi) * q.eval(&x, &xi)).norm() < 1e-12);
        assert_eq!(pq.terms().unwrap().len(), 1);
    }

    #[test]
    fn classification_flags() {
        assert!(Symbol::zero(1, SymbolOrder::new(0.0, 0.0)).is_zero());
        assert!(Symbol::weight(1, 0.0, 2.0).is_x_independent());
        assert!(Symbol::weight(1, 1.0, 0.0).is_xi_independent());
        assert!(!Symbol::weight(1, 1.0, 1.0).is_x_independent());
    }
}
