//! Truncated Campbell–Hausdorff series in Dynkin's form.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_traits::{One, Zero};

use crate::polyalg::{Coeff, Rational};

/// A Lie algebra acting on concrete element values.
pub trait LieAlgebra {
    type Elem: Clone;
    fn add(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn scale(&self, a: &Self::Elem, c: &Rational) -> Self::Elem;
    fn bracket(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
}

/// `log(e^X e^Y)` through bracket length `order`, as rational combinations of
/// right-nested words in `X` (letter 0) and `Y` (letter 1).
#[derive(Clone, Debug)]
pub struct BchSeries {
    order: usize,
    terms: Vec<(Vec<u8>, Rational)>,
}

fn factorial(n: usize) -> Rational {
    (1..=n).fold(Rational::one(), |a, k| a * Rational::from_integer(k.into()))
}

impl BchSeries {
    pub fn new(order: usize) -> Self {
        let mut acc: HashMap<Vec<u8>, Rational> = HashMap::new();
        // Sequences of (r_i, s_i) pairs with r_i + s_i >= 1 and total <= order.
        fn rec(
            pairs: &mut Vec<(usize, usize)>,
            used: usize,
            order: usize,
            acc: &mut HashMap<Vec<u8>, Rational>,
        ) {
            if !pairs.is_empty() {
                let n = pairs.len();
                let mut word = Vec::with_capacity(used);
                let mut denom = Rational::from_integer(used.into());
                for &(r, s) in pairs.iter() {
                    word.extend(std::iter::repeat_n(0u8, r));
                    word.extend(std::iter::repeat_n(1u8, s));
                    denom *= factorial(r) * factorial(s);
                }
                let vanishes = word.len() >= 2 && word[word.len() - 1] == word[word.len() - 2];
                if !vanishes {
                    let sign = if n % 2 == 1 { Rational::one() } else { -Rational::one() };
                    let c = sign / (Rational::from_integer(n.into()) * denom);
                    let e = acc.entry(word).or_insert_with(Rational::zero);
                    *e += c;
                }
            }
            for r in 0..=(order - used) {
                for s in 0..=(order - used - r) {
                    if r + s == 0 {
                        continue;
                    }
                    pairs.push((r, s));
                    rec(pairs, used + r + s, order, acc);
                    pairs.pop();
                }
            }
        }
        rec(&mut Vec::new(), 0, order, &mut acc);
        let mut terms: Vec<(Vec<u8>, Rational)> = acc.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        terms.sort_by(|a, b| (a.0.len(), &a.0).cmp(&(b.0.len(), &b.0)));
        BchSeries { order, terms }
    }

    /// Shared instance per order.
    pub fn cached(order: usize) -> Arc<BchSeries> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<BchSeries>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("bch cache");
        guard
            .entry(order)
            .or_insert_with(|| Arc::new(BchSeries::new(order)))
            .clone()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn terms(&self) -> &[(Vec<u8>, Rational)] {
        &self.terms
    }

    /// Evaluates the series at `x`, `y` in the given algebra.
    pub fn evaluate<L: LieAlgebra>(&self, alg: &L, x: &L::Elem, y: &L::Elem) -> L::Elem {
        let mut memo: HashMap<Vec<u8>, L::Elem> = HashMap::new();
        let letter = |l: u8| if l == 0 { x.clone() } else { y.clone() };
        let mut acc: Option<L::Elem> = None;
        for (word, c) in &self.terms {
            let value = nested(alg, word, &letter, &mut memo);
            let t = alg.scale(&value, c);
            acc = Some(match acc {
                None => t,
                Some(a) => alg.add(&a, &t),
            });
        }
        acc.unwrap_or_else(|| alg.add(&alg.scale(x, &Rational::zero()), &alg.scale(y, &Rational::zero())))
    }
}

fn nested<L: LieAlgebra>(
    alg: &L,
    word: &[u8],
    letter: &dyn Fn(u8) -> L::Elem,
    memo: &mut HashMap<Vec<u8>, L::Elem>,
) -> L::Elem {
    if word.len() == 1 {
        return letter(word[0]);
    }
    if let Some(v) = memo.get(word) {
        return v.clone();
    }
    let inner = nested(alg, &word[1..], letter, memo);
    let v = alg.bracket(&letter(word[0]), &inner);
    memo.insert(word.to_vec(), v.clone());
    v
}

/// Finite-dimensional algebra given by structure constants
/// `[e_i, e_j] = Σ_k c^k_ij e_k`, acting on coefficient vectors.
#[derive(Clone, Debug)]
pub struct ConstantsAlgebra<C: Coeff> {
    dim: usize,
    /// Nonzero `(i, j, k, c^k_ij)`.
    table: Vec<(usize, usize, usize, C)>,
}

impl<C: Coeff> ConstantsAlgebra<C> {
    pub fn new(dim: usize, table: Vec<(usize, usize, usize, C)>) -> Self {
        ConstantsAlgebra { dim, table }
    }
}

impl<C: Coeff> LieAlgebra for ConstantsAlgebra<C> {
    type Elem = Vec<C>;

    fn add(&self, a: &Vec<C>, b: &Vec<C>) -> Vec<C> {
        a.iter().zip(b).map(|(x, y)| x.clone() + y.clone()).collect()
    }

    fn scale(&self, a: &Vec<C>, c: &Rational) -> Vec<C> {
        let c = C::from_rational(c);
        a.iter().map(|x| x.clone() * c.clone()).collect()
    }

    fn bracket(&self, a: &Vec<C>, b: &Vec<C>) -> Vec<C> {
        let mut out = vec![C::zero(); self.dim];
        for (i, j, k, c) in &self.table {
            if a[*i].is_zero() || b[*j].is_zero() {
                continue;
            }
            out[*k] = out[*k].clone() + a[*i].clone() * b[*j].clone() * c.clone();
        }
        out
    }
}
