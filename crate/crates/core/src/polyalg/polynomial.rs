use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::ops::{Add, Mul, Neg, Sub};

use num_traits::{One, Signed};

use super::coeff::{Coeff, Rational};

/// Exponent multi-index `α`, ordered graded-lexicographically.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn one(nvars: usize) -> Self {
        Monomial(vec![0; nvars])
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        Monomial(e)
    }

    pub fn from_exponents(exps: Vec<u32>) -> Self {
        Monomial(exps)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Weighted degree `|α|_h = Σ α_i w_i`.
    pub fn weighted_degree(&self, weights: &[u32]) -> i64 {
        self.0
            .iter()
            .zip(weights)
            .map(|(&a, &w)| a as i64 * w as i64)
            .sum()
    }

    pub fn is_one(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Sparse multivariate polynomial. No stored coefficient is zero.
#[derive(Clone, PartialEq, Debug)]
pub struct Polynomial<C: Coeff = Rational> {
    nvars: usize,
    terms: BTreeMap<Monomial, C>,
}

impl<C: Coeff> Polynomial<C> {
    pub fn zero(nvars: usize) -> Self {
        Polynomial {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: C) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(Monomial::one(nvars), c);
        p
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, C::one())
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        assert!(i < nvars, "variable index {i} out of range for {nvars} variables");
        let mut p = Self::zero(nvars);
        p.add_term(Monomial::var(nvars, i), C::one());
        p
    }

    pub fn from_terms<I: IntoIterator<Item = (Monomial, C)>>(nvars: usize, terms: I) -> Self {
        let mut p = Self::zero(nvars);
        for (m, c) in terms {
            assert_eq!(m.0.len(), nvars, "exponent length must match variable count");
            p.add_term(m, c);
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in ascending graded-lex order.
    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, &C)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &Monomial) -> C {
        self.terms.get(m).cloned().unwrap_or_else(C::zero)
    }

    pub fn constant_term(&self) -> C {
        self.coeff(&Monomial::one(self.nvars))
    }

    pub fn total_degree(&self) -> Option<u32> {
        self.terms.keys().next_back().map(|m| m.degree())
    }

    pub fn add_term(&mut self, m: Monomial, c: C) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let s = e.get().clone() + c;
                if s.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = s;
                }
            }
        }
    }

    pub fn scale(&self, c: &C) -> Self {
        if c.is_zero() {
            return Self::zero(self.nvars);
        }
        let terms = self
            .terms
            .iter()
            .map(|(m, a)| (m.clone(), a.clone() * c.clone()))
            .filter(|(_, a)| !a.is_zero())
            .collect();
        Polynomial {
            nvars: self.nvars,
            terms,
        }
    }

    pub fn add_ref(&self, other: &Self) -> Self {
        assert_eq!(self.nvars, other.nvars, "polynomial variable counts differ");
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn sub_ref(&self, other: &Self) -> Self {
        assert_eq!(self.nvars, other.nvars, "polynomial variable counts differ");
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }

    pub fn mul_ref(&self, other: &Self) -> Self {
        assert_eq!(self.nvars, other.nvars, "polynomial variable counts differ");
        let mut out = Self::zero(self.nvars);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ma.mul(mb), ca.clone() * cb.clone());
            }
        }
        out
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::one(self.nvars);
        for _ in 0..k {
            acc = acc.mul_ref(self);
        }
        acc
    }

    pub fn derivative(&self, i: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (m, c) in &self.terms {
            let e = m.0[i];
            if e == 0 {
                continue;
            }
            let mut exps = m.0.clone();
            exps[i] -= 1;
            out.add_term(Monomial(exps), c.clone() * C::from_i64(e as i64));
        }
        out
    }

    pub fn eval(&self, x: &[C]) -> C {
        assert!(x.len() >= self.nvars, "point has too few coordinates");
        let mut acc = C::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (i, &e) in m.0.iter().enumerate() {
                for _ in 0..e {
                    t = t * x[i].clone();
                }
            }
            acc = acc + t;
        }
        acc
    }

    /// Substitutes polynomial `subs[i]` for variable `i`.
    pub fn compose(&self, subs: &[Polynomial<C>]) -> Polynomial<C> {
        assert_eq!(subs.len(), self.nvars, "one substitute per variable required");
        let target = subs.first().map(|s| s.nvars).unwrap_or(0);
        let mut powers: Vec<Vec<Polynomial<C>>> = subs
            .iter()
            .map(|s| vec![Polynomial::one(s.nvars), s.clone()])
            .collect();
        let mut out = Polynomial::zero(target);
        for (m, c) in &self.terms {
            let mut t = Polynomial::constant(target, c.clone());
            for (i, &e) in m.0.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                while powers[i].len() <= e as usize {
                    let next = powers[i].last().unwrap().mul_ref(&subs[i]);
                    powers[i].push(next);
                }
                t = t.mul_ref(&powers[i][e as usize]);
            }
            out = out.add_ref(&t);
        }
        out
    }

    /// Re-embeds into a ring with `nvars` variables, sending variable `i` to `map[i]`.
    pub fn embed(&self, nvars: usize, map: &[usize]) -> Polynomial<C> {
        assert_eq!(map.len(), self.nvars);
        let mut out = Polynomial::zero(nvars);
        for (m, c) in &self.terms {
            let mut e = vec![0; nvars];
            for (i, &k) in m.0.iter().enumerate() {
                e[map[i]] += k;
            }
            out.add_term(Monomial(e), c.clone());
        }
        out
    }

    /// Appends `extra` unused variables after the existing ones.
    pub fn extend(&self, extra: usize) -> Polynomial<C> {
        let map: Vec<usize> = (0..self.nvars).collect();
        self.embed(self.nvars + extra, &map)
    }

    /// Keeps only the terms for which `keep` returns true.
    pub fn filter<F: Fn(&Monomial) -> bool>(&self, keep: F) -> Polynomial<C> {
        Polynomial {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| keep(m))
                .map(|(m, c)| (m.clone(), c.clone()))
                .collect(),
        }
    }

    pub fn truncate_degree(&self, max_degree: u32) -> Polynomial<C> {
        self.filter(|m| m.degree() <= max_degree)
    }

    /// Drops every monomial containing a variable with index `>= first`, after
    /// setting those variables to zero, and shrinks the ring to `first` variables.
    pub fn restrict_to_prefix(&self, first: usize) -> Polynomial<C> {
        let mut out = Polynomial::zero(first);
        for (m, c) in &self.terms {
            if m.0[first..].iter().all(|&e| e == 0) {
                out.add_term(Monomial(m.0[..first].to_vec()), c.clone());
            }
        }
        out
    }

    pub fn map_coeffs<D: Coeff, F: Fn(&C) -> D>(&self, f: F) -> Polynomial<D> {
        let mut out = Polynomial::zero(self.nvars);
        for (m, c) in &self.terms {
            out.add_term(m.clone(), f(c));
        }
        out
    }

    pub fn to_f64(&self) -> Polynomial<f64> {
        self.map_coeffs(|c| c.to_f64())
    }

    /// Largest absolute coefficient (as `f64`).
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms
            .values()
            .map(|c| c.to_f64().abs())
            .fold(0.0, f64::max)
    }
}

impl Polynomial<Rational> {
    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (m, c) in &self.terms {
            let mut t = c.to_f64();
            for (i, &e) in m.0.iter().enumerate() {
                if e > 0 {
                    t *= x[i].powi(e as i32);
                }
            }
            acc += t;
        }
        acc
    }

    /// Canonical text form: descending graded-lex monomials, explicit rationals.
    pub fn render(&self, names: &[String]) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut s = String::new();
        for (k, (m, c)) in self.terms.iter().rev().enumerate() {
            let neg = c.is_negative();
            let abs = c.abs();
            if k == 0 {
                if neg {
                    s.push('-');
                }
            } else if neg {
                s.push_str(" - ");
            } else {
                s.push_str(" + ");
            }
            let mut factors: Vec<String> = Vec::new();
            if !abs.is_one() || m.is_one() {
                factors.push(abs.to_string());
            }
            for (i, &e) in m.0.iter().enumerate() {
                match e {
                    0 => {}
                    1 => factors.push(names[i].clone()),
                    _ => factors.push(format!("{}^{}", names[i], e)),
                }
            }
            let _ = write!(s, "{}", factors.join("*"));
        }
        s
    }
}

impl<C: Coeff> Add for Polynomial<C> {
    type Output = Polynomial<C>;
    fn add(self, rhs: Self) -> Self {
        self.add_ref(&rhs)
    }
}

impl<C: Coeff> Sub for Polynomial<C> {
    type Output = Polynomial<C>;
    fn sub(self, rhs: Self) -> Self {
        self.sub_ref(&rhs)
    }
}

impl<C: Coeff> Mul for Polynomial<C> {
    type Output = Polynomial<C>;
    fn mul(self, rhs: Self) -> Self {
        self.mul_ref(&rhs)
    }
}

impl<C: Coeff> Neg for Polynomial<C> {
    type Output = Polynomial<C>;
    fn neg(self) -> Self {
        self.scale(&-C::one())
    }
}

impl<C: Coeff> Add for &Polynomial<C> {
    type Output = Polynomial<C>;
    fn add(self, rhs: Self) -> Polynomial<C> {
        self.add_ref(rhs)
    }
}

impl<C: Coeff> Sub for &Polynomial<C> {
    type Output = Polynomial<C>;
    fn sub(self, rhs: Self) -> Polynomial<C> {
        self.sub_ref(rhs)
    }
}

impl<C: Coeff> Mul for &Polynomial<C> {
    type Output = Polynomial<C>;
    fn mul(self, rhs: Self) -> Polynomial<C> {
        self.mul_ref(rhs)
    }
}

impl fmt::Display for Polynomial<Rational> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = (1..=self.nvars).map(|i| format!("x{i}")).collect();
        f.write_str(&self.render(&names))
    }
}

/// Polynomial flattened for fast repeated `f64` evaluation.
#[derive(Clone, Debug)]
pub struct CompiledPoly {
    terms: Vec<(f64, Vec<(usize, i32)>)>,
}

impl CompiledPoly {
    pub fn new<C: Coeff>(p: &Polynomial<C>) -> Self {
        let terms = p
            .terms()
            .map(|(m, c)| {
                let factors = m
                    .exponents()
                    .iter()
                    .enumerate()
                    .filter(|(_, &e)| e > 0)
                    .map(|(i, &e)| (i, e as i32))
                    .collect();
                (c.to_f64(), factors)
            })
            .collect();
        CompiledPoly { terms }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (c, factors) in &self.terms {
            let mut t = *c;
            for &(i, e) in factors {
                t *= if e == 1 { x[i] } else { x[i].powi(e) };
            }
            acc += t;
        }
        acc
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::coeff::{rat, rint};

    fn names() -> Vec<String> {
        vec!["x".into(), "y".into(), "t".into()]
    }

    #[test]
    fn graded_lex_order() {
        let a = Monomial::from_exponents(vec![2, 0, 0]);
        let b = Monomial::from_exponents(vec![0, 1, 1]);
        let c = Monomial::from_exponents(vec![0, 0, 3]);
        assert!(b < a);
        assert!(a < c);
    }

    #[test]
    fn zero_coefficients_are_not_stored() {
        let x = Polynomial::<Rational>::var(3, 0);
        let d = &x - &x;
        assert!(d.is_zero());
        assert_eq!(d.len(), 0);
    }

    #[test]
    fn render_is_canonical() {
        let x = Polynomial::<Rational>::var(3, 0);
        let y = Polynomial::<Rational>::var(3, 1);
        let p = (&x * &x).scale(&rint(3)) - y.scale(&rat(1, 2)) + Polynomial::one(3);
        assert_eq!(p.render(&names()), "3*x^2 - 1/2*y + 1");
        assert_eq!((-y).render(&names()), "-y");
        assert_eq!(Polynomial::<Rational>::zero(3).render(&names()), "0");
    }

    #[test]
    fn compose_and_derivative() {
        let x = Polynomial::<Rational>::var(2, 0);
        let y = Polynomial::<Rational>::var(2, 1);
        let p = &x * &y;
        let q = p.compose(&[&x + &y, y.clone()]);
        assert_eq!(q, &(&x * &y) + &(&y * &y));
        assert_eq!(q.derivative(1), &x + &y.scale(&rint(2)));
    }

    #[test]
    fn compiled_matches_exact() {
        let x = Polynomial::<Rational>::var(2, 0);
        let y = Polynomial::<Rational>::var(2, 1);
        let p = (&x * &x).scale(&rat(-3, 4)) + &y * &x + Polynomial::constant(2, rat(5, 2));
        let cp = CompiledPoly::new(&p);
        let pt = [0.3, -1.7];
        assert!((cp.eval(&pt) - p.eval_f64(&pt)).abs() < 1e-15);
    }
}
