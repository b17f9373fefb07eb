use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;


use super::coeff::{rational_pow, Coeff, Rational};
use super::polynomial::{Monomial, Polynomial};
use super::PolyError;

/// Named coordinates on `ℝ^N`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CoordinateChart {
    names: Vec<String>,
}

impl CoordinateChart {
    pub fn new<S: Into<String>>(names: Vec<S>) -> Result<Arc<Self>, PolyError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(PolyError::InvalidChart("chart needs at least one coordinate".into()));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(PolyError::InvalidChart(format!("duplicate coordinate `{n}`")));
            }
        }
        Ok(Arc::new(CoordinateChart { names }))
    }

    /// Chart with coordinates `prefix1..prefixN`.
    pub fn numbered(prefix: &str, dim: usize) -> Arc<Self> {
        Self::new((1..=dim).map(|i| format!("{prefix}{i}")).collect()).expect("valid chart")
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Polynomial vector field `Σ a_j(x) ∂_j`, viewed as a first-order differential operator.
#[derive(Clone, Debug)]
pub struct PolyVectorField<C: Coeff = Rational> {
    chart: Arc<CoordinateChart>,
    comps: Vec<Polynomial<C>>,
}

impl<C: Coeff> PartialEq for PolyVectorField<C> {
    fn eq(&self, other: &Self) -> bool {
        *self.chart == *other.chart && self.comps == other.comps
    }
}

impl<C: Coeff> PolyVectorField<C> {
    pub fn new(chart: Arc<CoordinateChart>, comps: Vec<Polynomial<C>>) -> Result<Self, PolyError> {
        let n = chart.dim();
        if comps.len() != n {
            return Err(PolyError::LengthMismatch {
                expected: n,
                found: comps.len(),
            });
        }
        if let Some(p) = comps.iter().find(|p| p.nvars() != n) {
            return Err(PolyError::DimensionMismatch {
                expected: n,
                found: p.nvars(),
            });
        }
        Ok(PolyVectorField { chart, comps })
    }

    pub fn zero(chart: Arc<CoordinateChart>) -> Self {
        let n = chart.dim();
        PolyVectorField {
            comps: vec![Polynomial::zero(n); n],
            chart,
        }
    }

    /// The coordinate field `∂_j`.
    pub fn coordinate(chart: Arc<CoordinateChart>, j: usize) -> Self {
        let mut f = Self::zero(chart);
        f.comps[j] = Polynomial::one(f.dim());
        f
    }

    pub fn chart(&self) -> &Arc<CoordinateChart> {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn components(&self) -> &[Polynomial<C>] {
        &self.comps
    }

    pub fn component(&self, j: usize) -> &Polynomial<C> {
        &self.comps[j]
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(Polynomial::is_zero)
    }

    fn same_chart(&self, other: &Self) -> Result<(), PolyError> {
        if Arc::ptr_eq(&self.chart, &other.chart) || *self.chart == *other.chart {
            Ok(())
        } else {
            Err(PolyError::ChartMismatch)
        }
    }

    /// Applies the field as a derivation to `f`.
    ///
    /// `f` may live in a larger ring than the chart; the extra variables are
    /// treated as constants.
    pub fn apply(&self, f: &Polynomial<C>) -> Polynomial<C> {
        apply_derivation(&self.comps, f)
    }

    pub fn add(&self, other: &Self) -> Result<Self, PolyError> {
        self.same_chart(other)?;
        Ok(PolyVectorField {
            chart: self.chart.clone(),
            comps: self.comps.iter().zip(&other.comps).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, PolyError> {
        self.same_chart(other)?;
        Ok(PolyVectorField {
            chart: self.chart.clone(),
            comps: self.comps.iter().zip(&other.comps).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn scale(&self, c: &C) -> Self {
        PolyVectorField {
            chart: self.chart.clone(),
            comps: self.comps.iter().map(|p| p.scale(c)).collect(),
        }
    }

    /// `[X, Y] = XY − YX`, componentwise `X(Y^j) − Y(X^j)`.
    pub fn bracket(&self, other: &Self) -> Result<Self, PolyError> {
        self.same_chart(other)?;
        Ok(PolyVectorField {
            chart: self.chart.clone(),
            comps: bracket_components(&self.comps, &other.comps),
        })
    }

    pub fn evaluate(&self, p: &[C]) -> Result<Vec<C>, PolyError> {
        if p.len() != self.dim() {
            return Err(PolyError::DimensionMismatch {
                expected: self.dim(),
                found: p.len(),
            });
        }
        Ok(self.comps.iter().map(|c| c.eval(p)).collect())
    }

    /// Splits the field into parts of definite order w.r.t. the dilations with
    /// the given coordinate weights: a monomial `x^α` in component `j` has
    /// order `|α|_h − w_j`.
    pub fn graded_parts(&self, weights: &[u32]) -> Result<BTreeMap<i64, Self>, PolyError> {
        if weights.len() != self.dim() {
            return Err(PolyError::LengthMismatch {
                expected: self.dim(),
                found: weights.len(),
            });
        }
        let mut parts: BTreeMap<i64, Self> = BTreeMap::new();
        for (j, comp) in self.comps.iter().enumerate() {
            for (m, c) in comp.terms() {
                let order = m.weighted_degree(weights) - weights[j] as i64;
                let part = parts
                    .entry(order)
                    .or_insert_with(|| Self::zero(self.chart.clone()));
                part.comps[j].add_term(m.clone(), c.clone());
            }
        }
        Ok(parts)
    }

    /// The homogeneous part of order `order` (zero field when absent).
    pub fn homogeneous_part(&self, weights: &[u32], order: i64) -> Self {
        let comps = self
            .comps
            .iter()
            .enumerate()
            .map(|(j, comp)| {
                comp.filter(|m| m.weighted_degree(weights) - weights[j] as i64 == order)
            })
            .collect();
        PolyVectorField {
            chart: self.chart.clone(),
            comps,
        }
    }

    /// The order when the field is homogeneous; `None` for the zero field or mixed orders.
    pub fn homogeneous_order(&self, weights: &[u32]) -> Option<i64> {
        let parts = self.graded_parts(weights).ok()?;
        if parts.len() == 1 {
            parts.keys().next().copied()
        } else {
            None
        }
    }

    /// `Some(c)` when `self = c · other` with `c ≠ 0`.
    pub fn scalar_multiple_of(&self, other: &Self) -> Option<C>
    where
        C: std::ops::Div<Output = C>,
    {
        if other.is_zero() || self.is_zero() {
            return None;
        }
        let (j, lead) = other
            .comps
            .iter()
            .enumerate()
            .find_map(|(j, p)| p.terms().next().map(|(m, c)| (j, (m.clone(), c.clone()))))?;
        let c = self.comps[j].coeff(&lead.0) / lead.1;
        if c.is_zero() {
            return None;
        }
        if other.scale(&c) == *self {
            Some(c)
        } else {
            None
        }
    }

    pub fn to_f64(&self) -> PolyVectorField<f64> {
        PolyVectorField {
            chart: self.chart.clone(),
            comps: self.comps.iter().map(Polynomial::to_f64).collect(),
        }
    }

    /// Moves the field to another chart of the same dimension (coordinates are renamed).
    pub fn rechart(&self, chart: Arc<CoordinateChart>) -> Result<Self, PolyError> {
        Self::new(chart, self.comps.clone())
    }
}

impl PolyVectorField<Rational> {
    pub fn evaluate_f64(&self, p: &[f64]) -> Result<Vec<f64>, PolyError> {
        if p.len() != self.dim() {
            return Err(PolyError::DimensionMismatch {
                expected: self.dim(),
                found: p.len(),
            });
        }
        Ok(self.comps.iter().map(|c| c.eval_f64(p)).collect())
    }

    /// `δ_ε^* X`: component `j` becomes `ε^{−w_j} a_j(δ_ε x)`.
    pub fn dilation_pullback(&self, weights: &[u32], eps: &Rational) -> Self {
        let comps = self
            .comps
            .iter()
            .enumerate()
            .map(|(j, comp)| {
                let mut out = Polynomial::zero(self.dim());
                for (m, c) in comp.terms() {
                    let k = m.weighted_degree(weights) - weights[j] as i64;
                    out.add_term(m.clone(), c * &rational_pow(eps, k));
                }
                out
            })
            .collect();
        PolyVectorField {
            chart: self.chart.clone(),
            comps,
        }
    }

    /// Canonical text rendering as a component tuple, e.g. `(1, 0, -1/2*y)`.
    pub fn render(&self) -> String {
        let names = self.chart.names();
        let parts: Vec<String> = self.comps.iter().map(|p| p.render(names)).collect();
        format!("({})", parts.join(", "))
    }
}

/// Derivation `Σ a_j ∂_j` applied to `f`; `f` may have extra trailing variables.
pub fn apply_derivation<C: Coeff>(comps: &[Polynomial<C>], f: &Polynomial<C>) -> Polynomial<C> {
    let n = f.nvars();
    let mut out = Polynomial::zero(n);
    for (j, a) in comps.iter().enumerate() {
        if a.is_zero() {
            continue;
        }
        let df = f.derivative(j);
        if df.is_zero() {
            continue;
        }
        let a = if a.nvars() == n { a.clone() } else { a.extend(n - a.nvars()) };
        out = out.add_ref(&a.mul_ref(&df));
    }
    out
}

/// Components of the bracket of two derivations given by their components.
pub fn bracket_components<C: Coeff>(x: &[Polynomial<C>], y: &[Polynomial<C>]) -> Vec<Polynomial<C>> {
    x.iter()
        .zip(y)
        .map(|(xj, yj)| apply_derivation(x, yj).sub_ref(&apply_derivation(y, xj)))
        .collect()
}

/// `Σ c_k X_k` over fields sharing one chart.
pub fn linear_combination<C: Coeff>(
    coeffs: &[C],
    fields: &[PolyVectorField<C>],
) -> Result<PolyVectorField<C>, PolyError> {
    if coeffs.len() != fields.len() {
        return Err(PolyError::LengthMismatch {
            expected: fields.len(),
            found: coeffs.len(),
        });
    }
    let first = fields.first().ok_or(PolyError::LengthMismatch {
        expected: 1,
        found: 0,
    })?;
    let mut acc = PolyVectorField::zero(first.chart.clone());
    for (c, f) in coeffs.iter().zip(fields) {
        acc = acc.add(&f.scale(c))?;
    }
    Ok(acc)
}

/// The zero-order monomial helper used by tests and fixtures: `c · x^α`.
pub fn monomial_poly<C: Coeff>(nvars: usize, exps: Vec<u32>, c: C) -> Polynomial<C> {
    Polynomial::from_terms(nvars, [(Monomial::from_exponents(exps), c)])
}

/// True when `X` equals `Σ` of its graded parts (used by invariant checks).
pub fn reassemble(parts: &BTreeMap<i64, PolyVectorField<Rational>>, chart: Arc<CoordinateChart>) -> PolyVectorField<Rational> {
    parts
        .values()
        .fold(PolyVectorField::zero(chart), |acc, p| acc.add(p).expect("same chart"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::coeff::{rat, rint};
    use num_traits::One;

    fn heis() -> (Arc<CoordinateChart>, Vec<PolyVectorField>) {
        let ch = CoordinateChart::new(vec!["x", "y", "t"]).unwrap();
        let x = Polynomial::<Rational>::var(3, 0);
        let y = Polynomial::<Rational>::var(3, 1);
        let o = Polynomial::<Rational>::one(3);
        let z = Polynomial::<Rational>::zero(3);
        let x1 = PolyVectorField::new(ch.clone(), vec![o.clone(), z.clone(), y.scale(&rat(-1, 2))]).unwrap();
        let y1 = PolyVectorField::new(ch.clone(), vec![z.clone(), o.clone(), x.scale(&rat(1, 2))]).unwrap();
        let t = PolyVectorField::coordinate(ch.clone(), 2);
        (ch, vec![x1, y1, t])
    }

    fn example3() -> (Arc<CoordinateChart>, Vec<PolyVectorField>) {
        let ch = CoordinateChart::new(vec!["x", "y", "t"]).unwrap();
        let y = Polynomial::<Rational>::var(3, 1);
        let o = Polynomial::<Rational>::one(3);
        let z = Polynomial::<Rational>::zero(3);
        let x1 = PolyVectorField::coordinate(ch.clone(), 1);
        let x2 = PolyVectorField::new(ch.clone(), vec![o, z.clone(), y]).unwrap();
        let x3 = PolyVectorField::coordinate(ch.clone(), 0);
        (ch, vec![x1, x2, x3])
    }

    #[test]
    fn heisenberg_bracket_is_t() {
        let (_, f) = heis();
        assert_eq!(f[0].bracket(&f[1]).unwrap(), f[2]);
        assert!(f[0].bracket(&f[0]).unwrap().is_zero());
    }

    #[test]
    fn example3_bracket_is_dt() {
        let (ch, f) = example3();
        assert_eq!(f[0].bracket(&f[1]).unwrap(), PolyVectorField::coordinate(ch, 2));
    }

    #[test]
    fn linear_combination_cases() {
        let (_, f) = heis();
        let zero = linear_combination(&[rint(1), rint(-1)], &[f[0].clone(), f[0].clone()]).unwrap();
        assert!(zero.is_zero());
        let sel = linear_combination(&[rint(1), rint(0), rint(0)], &f).unwrap();
        assert_eq!(sel, f[0]);
        let (ch, e3) = example3();
        // ∂_x + (∂_x + y ∂_t) = 2∂_x + y∂_t
        let s = linear_combination(&[rint(1), rint(1)], &[e3[2].clone(), e3[1].clone()]).unwrap();
        let y = Polynomial::<Rational>::var(3, 1);
        let expect = PolyVectorField::new(
            ch,
            vec![Polynomial::constant(3, rint(2)), Polynomial::zero(3), y],
        )
        .unwrap();
        assert_eq!(s, expect);
    }

    #[test]
    fn linear_combination_errors() {
        let (_, f) = heis();
        assert!(matches!(
            linear_combination(&[rint(1)], &f),
            Err(PolyError::LengthMismatch { .. })
        ));
        let other = CoordinateChart::new(vec!["a", "b", "c"]).unwrap();
        let g = PolyVectorField::<Rational>::coordinate(other, 0);
        assert_eq!(f[0].bracket(&g), Err(PolyError::ChartMismatch));
    }

    #[test]
    fn evaluate_examples() {
        let (_, e3) = example3();
        assert_eq!(e3[1].evaluate_f64(&[0.0, 2.0, 0.0]).unwrap(), vec![1.0, 0.0, 2.0]);
        let (_, h) = heis();
        assert_eq!(h[0].evaluate_f64(&[0.0, 1.0, 0.0]).unwrap(), vec![1.0, 0.0, -0.5]);
        let dx = PolyVectorField::<Rational>::coordinate(CoordinateChart::numbered("x", 4), 0);
        assert_eq!(dx.evaluate_f64(&[3.0, 1.0, -2.0, 5.0]).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            h[0].evaluate_f64(&[0.0, 1.0]),
            Err(PolyError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn graded_parts_examples() {
        let (ch, h) = heis();
        let parts = h[0].graded_parts(&[1, 1, 2]).unwrap();
        assert_eq!(parts.keys().copied().collect::<Vec<_>>(), vec![-1]);
        let dt = PolyVectorField::<Rational>::coordinate(ch, 2);
        let parts = dt.graded_parts(&[1, 1, 2]).unwrap();
        assert_eq!(parts.keys().copied().collect::<Vec<_>>(), vec![-2]);
        let c1 = CoordinateChart::new(vec!["x"]).unwrap();
        let x2 = PolyVectorField::new(c1, vec![Polynomial::<Rational>::var(1, 0).pow(2)]).unwrap();
        let parts = x2.graded_parts(&[1]).unwrap();
        assert_eq!(parts.keys().copied().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn dilation_pullback_of_homogeneous_part() {
        let (_, h) = heis();
        let w = [1, 1, 2];
        let eps = rat(1, 3);
        let pulled = h[0].dilation_pullback(&w, &eps);
        assert_eq!(pulled, h[0].scale(&rint(3)));
    }

    #[test]
    fn render_fields() {
        let (_, h) = heis();
        assert_eq!(h[0].render(), "(1, 0, -1/2*y)");
        assert_eq!(h[2].scalar_multiple_of(&h[2]), Some(Rational::one()));
        assert_eq!(h[0].scalar_multiple_of(&h[1]), None);
    }
}
