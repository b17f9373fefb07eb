//! Polynomial maps: composed Lie series, series inversion and pushforwards.

use num_traits::Zero;
use thiserror::Error;

use super::coeff::Rational;
use super::field::apply_derivation;
use super::linalg;
use super::polynomial::Polynomial;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MapError {
    #[error("Lie series of generator {index} did not terminate within {cap} terms")]
    NonTerminating { index: usize, cap: usize },
    #[error("linear part of the map is singular")]
    SingularLinearPart,
    #[error("polynomial inverse not found up to degree {0}")]
    NoPolynomialInverse(u32),
}

/// Coordinates of `exp(s_1 A_1) ∘ exp(s_2 A_2) ∘ … ∘ exp(s_P A_P)(base)` as
/// polynomials in `s`.
///
/// `fields[k]` holds the components of `A_k` on `ℝ^N`. The composition acts on
/// coordinate functions as `e^{s_P A_P} ⋯ e^{s_1 A_1} x_i` evaluated at `base`.
/// With `truncate = Some(D)` every series is cut at total degree `D` in `s`;
/// with `None` each series must terminate within `cap` terms.
pub fn composed_lie_series(
    fields: &[Vec<Polynomial>],
    base: &[Rational],
    truncate: Option<u32>,
    cap: usize,
) -> Result<Vec<Polynomial>, MapError> {
    let n = base.len();
    let p = fields.len();
    let total = n + p;
    let lifted: Vec<Vec<Polynomial>> = fields
        .iter()
        .map(|comps| comps.iter().map(|c| c.extend(p)).collect())
        .collect();
    let s_degree = |m: &super::polynomial::Monomial| -> u32 { m.exponents()[n..].iter().sum() };
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut f = Polynomial::var(total, i);
        for (k, comps) in lifted.iter().enumerate() {
            let s = Polynomial::var(total, n + k);
            let mut term = f.clone();
            let mut acc = f.clone();
            let mut order = 0usize;
            loop {
                term = apply_derivation(comps, &term);
                order += 1;
                if let Some(d) = truncate {
                    term = term.filter(|m| s_degree(m) + order as u32 <= d);
                }
                if term.is_zero() {
                    break;
                }
                if truncate.is_none() && order > cap {
                    return Err(MapError::NonTerminating { index: k, cap });
                }
                let scaled = term
                    .mul_ref(&s.pow(order as u32))
                    .scale(&(Rational::from_integer(factorial(order))).recip());
                acc = acc.add_ref(&scaled);
            }
            f = acc;
        }
        let subs: Vec<Polynomial> = (0..total)
            .map(|j| {
                if j < n {
                    Polynomial::constant(p, base[j].clone())
                } else {
                    Polynomial::var(p, j - n)
                }
            })
            .collect();
        out.push(f.compose(&subs));
    }
    Ok(out)
}

fn factorial(n: usize) -> num_bigint::BigInt {
    (1..=n).fold(num_bigint::BigInt::from(1), |a, k| a * k)
}

/// Matrix of first-order coefficients `∂F_i/∂v_j(0)`.
pub fn linear_part(map: &[Polynomial]) -> Vec<Vec<Rational>> {
    let n = map.first().map(|p| p.nvars()).unwrap_or(0);
    map.iter()
        .map(|f| {
            (0..n)
                .map(|j| f.coeff(&super::polynomial::Monomial::var(n, j)))
                .collect()
        })
        .collect()
}

pub fn jacobian(map: &[Polynomial]) -> Vec<Vec<Polynomial>> {
    let n = map.first().map(|p| p.nvars()).unwrap_or(0);
    map.iter()
        .map(|f| (0..n).map(|j| f.derivative(j)).collect())
        .collect()
}

/// Power-series inverse of a square polynomial map with `F(0) = 0`,
/// truncated at total degree `degree`.
pub fn series_inverse(map: &[Polynomial], degree: u32) -> Result<Vec<Polynomial>, MapError> {
    let n = map.len();
    let lin = linear_part(map);
    let lin_inv = linalg::inverse(&lin).ok_or(MapError::SingularLinearPart)?;
    let nonlinear: Vec<Polynomial> = map.iter().map(|f| f.filter(|m| m.degree() >= 2)).collect();
    let vars: Vec<Polynomial> = (0..n).map(|i| Polynomial::var(n, i)).collect();
    let apply_lin_inv = |rhs: &[Polynomial]| -> Vec<Polynomial> {
        (0..n)
            .map(|i| {
                let mut acc = Polynomial::zero(n);
                for (j, r) in rhs.iter().enumerate() {
                    if !lin_inv[i][j].is_zero() {
                        acc = acc.add_ref(&r.scale(&lin_inv[i][j]));
                    }
                }
                acc
            })
            .collect()
    };
    let mut g = apply_lin_inv(&vars);
    for _ in 1..degree.max(1) {
        let nl: Vec<Polynomial> = nonlinear
            .iter()
            .map(|f| f.compose(&g).truncate_degree(degree))
            .collect();
        let rhs: Vec<Polynomial> = vars.iter().zip(&nl).map(|(v, q)| v - q).collect();
        g = apply_lin_inv(&rhs);
    }
    Ok(g)
}

/// True when `F ∘ G` is the identity map exactly.
pub fn is_right_inverse(map: &[Polynomial], inv: &[Polynomial]) -> bool {
    let n = map.len();
    map.iter()
        .enumerate()
        .all(|(i, f)| f.compose(inv) == Polynomial::var(n, i))
}

/// Exact polynomial inverse, searching series degrees up to `max_degree`.
pub fn polynomial_inverse(map: &[Polynomial], max_degree: u32) -> Result<Vec<Polynomial>, MapError> {
    let mut degree = map
        .iter()
        .filter_map(|p| p.total_degree())
        .max()
        .unwrap_or(1)
        .max(1);
    while degree <= max_degree {
        let g = series_inverse(map, degree)?;
        if is_right_inverse(map, &g) {
            return Ok(g);
        }
        degree += 1;
    }
    Err(MapError::NoPolynomialInverse(max_degree))
}

/// Pushforward `(DΘ · F) ∘ Θ^{-1}` of the field with components `field`
/// through the polynomial diffeomorphism `theta` with inverse `theta_inv`.
pub fn pushforward(theta: &[Polynomial], theta_inv: &[Polynomial], field: &[Polynomial]) -> Vec<Polynomial> {
    let jac = jacobian(theta);
    let n = theta_inv.first().map(|p| p.nvars()).unwrap_or(0);
    let field_at: Vec<Polynomial> = field.iter().map(|f| f.compose(theta_inv)).collect();
    jac.iter()
        .map(|row| {
            let mut acc = Polynomial::zero(n);
            for (d, f) in row.iter().zip(&field_at) {
                if d.is_zero() || f.is_zero() {
                    continue;
                }
                acc = acc.add_ref(&d.compose(theta_inv).mul_ref(f));
            }
            acc
        })
        .collect()
}
