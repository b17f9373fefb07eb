//! Exact linear algebra over the rationals for small dense systems.

use num_traits::{One, Zero};

use super::coeff::Rational;

/// Incrementally maintained echelon basis; answers "does this vector add rank?".
#[derive(Clone, Debug, Default)]
pub struct IndependentSet {
    rows: Vec<(usize, Vec<Rational>)>,
}

impl IndependentSet {
    pub fn new() -> Self {
        IndependentSet { rows: Vec::new() }
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    fn reduce(&self, v: &[Rational]) -> Vec<Rational> {
        let mut v = v.to_vec();
        for (pivot, row) in &self.rows {
            if v[*pivot].is_zero() {
                continue;
            }
            let f = v[*pivot].clone();
            for (a, b) in v.iter_mut().zip(row) {
                if !b.is_zero() {
                    *a -= &f * b;
                }
            }
        }
        v
    }

    pub fn contains(&self, v: &[Rational]) -> bool {
        self.reduce(v).iter().all(Zero::is_zero)
    }

    /// Inserts `v` when independent of the current span; returns whether it was.
    pub fn insert(&mut self, v: &[Rational]) -> bool {
        let mut r = self.reduce(v);
        let Some(pivot) = r.iter().position(|x| !x.is_zero()) else {
            return false;
        };
        let inv = r[pivot].recip();
        for x in r.iter_mut() {
            *x *= &inv;
        }
        for (_, row) in self.rows.iter_mut() {
            if row[pivot].is_zero() {
                continue;
            }
            let f = row[pivot].clone();
            for (a, b) in row.iter_mut().zip(&r) {
                if !b.is_zero() {
                    *a -= &f * b;
                }
            }
        }
        self.rows.push((pivot, r));
        true
    }
}

pub fn rank(vectors: &[Vec<Rational>]) -> usize {
    let mut s = IndependentSet::new();
    for v in vectors {
        s.insert(v);
    }
    s.rank()
}

/// Solves `A x = b` for square nonsingular `A` (row-major).
pub fn solve(a: &[Vec<Rational>], b: &[Rational]) -> Option<Vec<Rational>> {
    let n = a.len();
    let mut m: Vec<Vec<Rational>> = a
        .iter()
        .zip(b)
        .map(|(row, bi)| {
            let mut r = row.clone();
            r.push(bi.clone());
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, piv);
        let inv = m[col][col].recip();
        for x in m[col].iter_mut() {
            *x *= &inv;
        }
        for r in 0..n {
            if r == col || m[r][col].is_zero() {
                continue;
            }
            let f = m[r][col].clone();
            let pivot_row = m[col].clone();
            for (a, p) in m[r].iter_mut().zip(&pivot_row) {
                if !p.is_zero() {
                    *a -= &f * p;
                }
            }
        }
    }
    Some(m.into_iter().map(|mut r| r.pop().unwrap()).collect())
}

pub fn inverse(a: &[Vec<Rational>]) -> Option<Vec<Vec<Rational>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let e: Vec<Rational> = (0..n)
            .map(|i| if i == j { Rational::one() } else { Rational::zero() })
            .collect();
        cols.push(solve(a, &e)?);
    }
    Some((0..n).map(|i| (0..n).map(|j| cols[j][i].clone()).collect()).collect())
}

/// Coefficients `c` with `Σ c_i basis[i] = v`, if `v` lies in the span (the
/// basis vectors must be independent).
pub fn express(basis: &[Vec<Rational>], v: &[Rational]) -> Option<Vec<Rational>> {
    let k = basis.len();
    let n = v.len();
    // Augmented system: rows are coordinates, columns the basis vectors.
    let mut m: Vec<Vec<Rational>> = (0..n)
        .map(|i| {
            let mut r: Vec<Rational> = basis.iter().map(|b| b[i].clone()).collect();
            r.push(v[i].clone());
            r
        })
        .collect();
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..k {
        let p = (row..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(row, p);
        let inv = m[row][col].recip();
        for x in m[row].iter_mut() {
            *x *= &inv;
        }
        for r in 0..n {
            if r == row || m[r][col].is_zero() {
                continue;
            }
            let f = m[r][col].clone();
            let pr = m[row].clone();
            for (a, b) in m[r].iter_mut().zip(&pr) {
                if !b.is_zero() {
                    *a -= &f * b;
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    if m[row..].iter().any(|r| !r[k].is_zero()) {
        return None;
    }
    Some((0..k).map(|i| m[i][k].clone()).collect())
}

pub fn mat_vec(a: &[Vec<Rational>], x: &[Rational]) -> Vec<Rational> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}
