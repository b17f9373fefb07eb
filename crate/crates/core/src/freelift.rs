//! Weighted free nilpotent Lie algebras, their canonical realization, and the
//! lifting of a weighted system to a free one on an extended space.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::grading::{nilpotentize, BchSeries, GradingError, LieAlgebra, NilpotentApproximation};
use crate::polyalg::linalg::{self, IndependentSet};
use crate::polyalg::maps::{self, MapError};
use crate::polyalg::{rint, CoordinateChart, PolyError, Polynomial, Rational, VectorField};
use crate::structure::{
    classify_point, filtration_dims, ClassifyConfig, Regularity, StructureError, WeightedSystem,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LiftError {
    #[error(transparent)]
    Grading(#[from] GradingError),
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("invalid free algebra parameters: {0}")]
    BadParameters(String),
    #[error("construction check failed: {0}")]
    Verification(String),
}

/// Binary bracket tree over generator indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tree {
    Leaf(usize),
    Node(Box<Tree>, Box<Tree>),
}

impl Tree {
    pub fn label(&self) -> String {
        match self {
            Tree::Leaf(i) => format!("x{}", i + 1),
            Tree::Node(a, b) => format!("[{},{}]", a.label(), b.label()),
        }
    }

    /// Evaluates the tree in a Lie algebra given images of the generators.
    pub fn evaluate<T: Clone>(&self, gens: &[T], bracket: &dyn Fn(&T, &T) -> T) -> T {
        match self {
            Tree::Leaf(i) => gens[*i].clone(),
            Tree::Node(a, b) => bracket(&a.evaluate(gens, bracket), &b.evaluate(gens, bracket)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HallElement {
    /// Underlying Lyndon word.
    pub word: Vec<usize>,
    pub hdeg: u32,
    pub tree: Tree,
}

/// Noncommutative polynomial: words to coefficients.
pub type AssocPoly = BTreeMap<Vec<usize>, Rational>;

fn assoc_add(a: &mut AssocPoly, b: &AssocPoly, c: &Rational) {
    for (w, v) in b {
        let e = a.entry(w.clone()).or_insert_with(Rational::zero);
        *e += v * c;
        if e.is_zero() {
            a.remove(w);
        }
    }
}

fn assoc_commutator(a: &AssocPoly, b: &AssocPoly) -> AssocPoly {
    let mut out = AssocPoly::new();
    for (wa, ca) in a {
        for (wb, cb) in b {
            let c = ca * cb;
            let mut ab = wa.clone();
            ab.extend(wb);
            let mut ba = wb.clone();
            ba.extend(wa);
            assoc_add(&mut out, &AssocPoly::from([(ab, Rational::one())]), &c);
            assoc_add(&mut out, &AssocPoly::from([(ba, Rational::one())]), &-c.clone());
        }
    }
    out
}

/// Expansion of a bracket tree in the free associative algebra.
pub fn expand(tree: &Tree) -> AssocPoly {
    match tree {
        Tree::Leaf(i) => AssocPoly::from([(vec![*i], Rational::one())]),
        Tree::Node(a, b) => assoc_commutator(&expand(a), &expand(b)),
    }
}

/// Hall family (Lyndon basis) of the free nilpotent algebra `𝒩^M_{d_1..d_q}`.
#[derive(Clone, Debug, PartialEq)]
pub struct HallBasis {
    pub q: usize,
    pub gen_weights: Vec<u32>,
    pub depth: u32,
    pub elements: Vec<HallElement>,
    /// Nonzero `(i, j, k, c)` with `[e_i, e_j] = Σ_k c e_k` in the quotient.
    pub constants: Vec<(usize, usize, usize, Rational)>,
}

impl HallBasis {
    pub fn dim(&self) -> usize {
        self.elements.len()
    }

    pub fn weights(&self) -> Vec<u32> {
        self.elements.iter().map(|e| e.hdeg).collect()
    }

    /// Index of the element for generator `i`.
    pub fn generator_index(&self, i: usize) -> usize {
        self.elements
            .iter()
            .position(|e| e.word == [i])
            .expect("generators are Hall elements")
    }
}

fn is_lyndon(w: &[usize]) -> bool {
    (1..w.len()).all(|i| w[i..] > *w)
}

fn standard_tree(w: &[usize]) -> Tree {
    if w.len() == 1 {
        return Tree::Leaf(w[0]);
    }
    let split = (1..w.len()).find(|&i| is_lyndon(&w[i..])).expect("suffix of length 1 is Lyndon");
    Tree::Node(Box::new(standard_tree(&w[..split])), Box::new(standard_tree(&w[split..])))
}

fn lyndon_words(weights: &[u32], max_hdeg: u32) -> Vec<Vec<usize>> {
    let q = weights.len();
    let mut out = Vec::new();
    let mut stack: Vec<(Vec<usize>, u32)> = (0..q).map(|i| (vec![i], weights[i])).collect();
    while let Some((w, h)) = stack.pop() {
        if h > max_hdeg {
            continue;
        }
        if is_lyndon(&w) {
            out.push(w.clone());
        }
        for i in 0..q {
            if h + weights[i] <= max_hdeg {
                let mut v = w.clone();
                v.push(i);
                stack.push((v, h + weights[i]));
            }
        }
    }
    out
}

/// `dim` of the span of commutators of degree `≤ k` in the free nilpotent
/// algebra, for `k = 1..=max_hdeg`.
pub fn free_dimensions(weights: &[u32], max_hdeg: u32) -> Vec<usize> {
    let words = lyndon_words(weights, max_hdeg);
    let hdegs: Vec<u32> = words
        .iter()
        .map(|w| w.iter().map(|&i| weights[i]).sum())
        .collect();
    (1..=max_hdeg)
        .map(|k| hdegs.iter().filter(|&&h| h <= k).count())
        .collect()
}

pub fn hall_basis(q: usize, gen_weights: &[u32], m: u32) -> Result<HallBasis, LiftError> {
    if q == 0 || gen_weights.len() != q {
        return Err(LiftError::BadParameters(format!(
            "{} weights for {} generators",
            gen_weights.len(),
            q
        )));
    }
    if gen_weights.contains(&0) {
        return Err(LiftError::BadParameters("weights must be positive".into()));
    }
    let max_w = *gen_weights.iter().max().unwrap();
    if m < max_w {
        return Err(LiftError::BadParameters(format!("depth {m} below the largest weight {max_w}")));
    }
    let mut elements: Vec<HallElement> = lyndon_words(gen_weights, m)
        .into_iter()
        .map(|w| HallElement {
            hdeg: w.iter().map(|&i| gen_weights[i]).sum(),
            tree: standard_tree(&w),
            word: w,
        })
        .collect();
    elements.sort_by(|a, b| (a.hdeg, a.word.len(), &a.word).cmp(&(b.hdeg, b.word.len(), &b.word)));
    let expansions: Vec<AssocPoly> = elements.iter().map(|e| expand(&e.tree)).collect();
    let mut constants = Vec::new();
    for i in 0..elements.len() {
        for j in 0..elements.len() {
            let h = elements[i].hdeg + elements[j].hdeg;
            if h > m || i == j {
                continue;
            }
            let br = assoc_commutator(&expansions[i], &expansions[j]);
            if br.is_empty() {
                continue;
            }
            let candidates: Vec<usize> = (0..elements.len()).filter(|&k| elements[k].hdeg == h).collect();
            let coeffs = express_assoc(&br, &candidates.iter().map(|&k| &expansions[k]).collect::<Vec<_>>())
                .ok_or_else(|| LiftError::Verification(format!("bracket of {} and {} not in span", i, j)))?;
            for (k, c) in candidates.into_iter().zip(coeffs) {
                if !c.is_zero() {
                    constants.push((i, j, k, c));
                }
            }
        }
    }
    Ok(HallBasis {
        q,
        gen_weights: gen_weights.to_vec(),
        depth: m,
        elements,
        constants,
    })
}

fn express_assoc(target: &AssocPoly, basis: &[&AssocPoly]) -> Option<Vec<Rational>> {
    let mut keys: Vec<&Vec<usize>> = target.keys().collect();
    for b in basis {
        keys.extend(b.keys());
    }
    keys.sort();
    keys.dedup();
    let vec_of = |p: &AssocPoly| -> Vec<Rational> {
        keys.iter().map(|k| p.get(*k).cloned().unwrap_or_else(Rational::zero)).collect()
    };
    let cols: Vec<Vec<Rational>> = basis.iter().map(|b| vec_of(b)).collect();
    linalg::express(&cols, &vec_of(target))
}

/// Algebra of coefficient vectors with polynomial entries.
struct PolyVecAlgebra<'a> {
    dim: usize,
    nvars: usize,
    table: &'a [(usize, usize, usize, Rational)],
}

impl LieAlgebra for PolyVecAlgebra<'_> {
    type Elem = Vec<Polynomial>;

    fn add(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem {
        a.iter().zip(b).map(|(x, y)| x + y).collect()
    }

    fn scale(&self, a: &Self::Elem, c: &Rational) -> Self::Elem {
        a.iter().map(|x| x.scale(c)).collect()
    }

    fn bracket(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem {
        let mut out = vec![Polynomial::zero(self.nvars); self.dim];
        for (i, j, k, c) in self.table {
            if a[*i].is_zero() || b[*j].is_zero() {
                continue;
            }
            out[*k] = &out[*k] + &(&a[*i] * &b[*j]).scale(c);
        }
        out
    }
}

/// Left-invariant fields of the free nilpotent group in second-kind
/// coordinates `g(η) = exp(η_1 A_1) · … · exp(η_Ñ A_Ñ)`.
#[derive(Clone, Debug)]
pub struct FreeRealization {
    pub basis: HallBasis,
    pub chart: Arc<CoordinateChart>,
    pub fields: Vec<VectorField>,
}

pub fn free_realization(basis: &HallBasis) -> Result<FreeRealization, LiftError> {
    let n = basis.dim();
    let nv = n + 1; // η and t
    let order = basis.depth as usize;
    let series = BchSeries::cached(order);
    let alg = PolyVecAlgebra {
        dim: n,
        nvars: nv,
        table: &basis.constants,
    };
    let unit = |k: usize, coeff: Polynomial| -> Vec<Polynomial> {
        (0..n)
            .map(|i| if i == k { coeff.clone() } else { Polynomial::zero(nv) })
            .collect()
    };
    let mut z = unit(0, Polynomial::var(nv, 0));
    for k in 1..n {
        z = series.evaluate(&alg, &z, &unit(k, Polynomial::var(nv, k)));
    }
    let z_eta: Vec<Polynomial> = z.iter().map(|p| p.restrict_to_prefix(n)).collect();
    // D Z = I + N with N nilpotent (strictly lower in weight).
    let dz = maps::jacobian(&z_eta);
    let nil: Vec<Vec<Polynomial>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        &dz[i][j] - &Polynomial::one(n)
                    } else {
                        dz[i][j].clone()
                    }
                })
                .collect()
        })
        .collect();
    let chart = CoordinateChart::numbered("e", n);
    let mut fields = Vec::with_capacity(n);
    for k in 0..n {
        let moved = series.evaluate(&alg, &z, &unit(k, Polynomial::var(nv, n)));
        let v: Vec<Polynomial> = moved.iter().map(|p| p.derivative(n).restrict_to_prefix(n)).collect();
        // F = Σ_j (−N)^j V
        let mut term = v.clone();
        let mut acc = v;
        for _ in 0..n {
            term = (0..n)
                .map(|i| {
                    let mut s = Polynomial::zero(n);
                    for j in 0..n {
                        if !nil[i][j].is_zero() && !term[j].is_zero() {
                            s = &s - &(&nil[i][j] * &term[j]);
                        }
                    }
                    s
                })
                .collect();
            if term.iter().all(Polynomial::is_zero) {
                break;
            }
            acc = acc.iter().zip(&term).map(|(a, b)| a + b).collect();
        }
        fields.push(VectorField::new(chart.clone(), acc)?);
    }
    let real = FreeRealization {
        basis: basis.clone(),
        chart,
        fields,
    };
    verify_realization(&real)?;
    Ok(real)
}

/// Checks `F_j(0) = e_j` and the bracket table against the free constants.
pub fn verify_realization(real: &FreeRealization) -> Result<(), LiftError> {
    let n = real.basis.dim();
    let origin = vec![rint(0); n];
    for (j, f) in real.fields.iter().enumerate() {
        let v = f.evaluate(&origin)?;
        for (i, x) in v.iter().enumerate() {
            if *x != if i == j { rint(1) } else { rint(0) } {
                return Err(LiftError::Verification(format!("F_{}(0) is not e_{}", j + 1, j + 1)));
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            let lhs = real.fields[i].bracket(&real.fields[j])?;
            let mut rhs = VectorField::zero(real.chart.clone());
            for (a, b, k, c) in &real.basis.constants {
                if (*a, *b) == (i, j) {
                    rhs = rhs.add(&real.fields[*k].scale(c))?;
                }
            }
            if lhs != rhs {
                return Err(LiftError::Verification(format!("[F_{}, F_{}] mismatch", i + 1, j + 1)));
            }
        }
    }
    Ok(())
}

/// Weighted system lifted to a space where it is free up to its depth.
#[derive(Clone, Debug)]
pub struct LiftedSystem {
    /// Base: the system in privileged coordinates at the anchor.
    pub base: WeightedSystem,
    pub basis: HallBasis,
    /// Hall elements whose images span the base tangent space at the anchor.
    pub pivots: Vec<usize>,
    /// Remaining Hall elements, one per `z` coordinate.
    pub complement: Vec<usize>,
    /// `X̃_k = X'_k + Σ b_kj ∂_{z_j}`.
    pub lifted: WeightedSystem,
    /// Lift of the nilpotent approximation.
    pub lifted_hat: WeightedSystem,
    /// Dilation weights of the extended coordinates `(x, z)`.
    pub coordinate_weights: Vec<u32>,
}

impl LiftedSystem {
    pub fn base_dim(&self) -> usize {
        self.base.dim()
    }

    pub fn dim(&self) -> usize {
        self.lifted.dim()
    }

    /// Tail fields `Σ_j b_kj ∂_{z_j}` as fields on the extended chart.
    pub fn tails(&self) -> Vec<VectorField> {
        let n = self.base_dim();
        self.lifted
            .generators()
            .iter()
            .map(|g| {
                let comps = g
                    .components()
                    .iter()
                    .enumerate()
                    .map(|(i, c)| if i < n { Polynomial::zero(c.nvars()) } else { c.clone() })
                    .collect();
                VectorField::new(g.chart().clone(), comps).expect("same chart")
            })
            .collect()
    }
}

/// Canonical projection `(x, z) ↦ x`.
pub fn project(ls: &LiftedSystem, p: &[f64]) -> Vec<f64> {
    p[..ls.base_dim()].to_vec()
}

pub fn lift_system(sys: &WeightedSystem, u: &[Rational]) -> Result<LiftedSystem, LiftError> {
    let na = nilpotentize(sys, u)?;
    lift_approximation(&na)
}

pub fn lift_approximation(na: &NilpotentApproximation) -> Result<LiftedSystem, LiftError> {
    let base = na.base_system().clone();
    let hat = na.hat_system.generators().to_vec();
    let n = base.dim();
    let m = base.depth();
    let q = hat.len();
    let basis = hall_basis(q, base.weights(), m)?;
    let real = free_realization(&basis)?;
    let nt = basis.dim();

    // Ψ: Hall elements to hat fields.
    let bracket = |a: &VectorField, b: &VectorField| a.bracket(b).expect("same chart");
    let psi: Vec<VectorField> = basis.elements.iter().map(|e| e.tree.evaluate(&hat, &bracket)).collect();
    for i in 0..nt {
        for j in 0..nt {
            let lhs = psi[i].bracket(&psi[j])?;
            let mut rhs = VectorField::zero(base.chart().clone());
            for (a, b, k, c) in &basis.constants {
                if (*a, *b) == (i, j) {
                    rhs = rhs.add(&psi[*k].scale(c))?;
                }
            }
            if lhs != rhs {
                return Err(LiftError::Verification("Ψ is not a homomorphism".into()));
            }
        }
    }

    // Orbit map φ(η) = exp(η_Ñ Ψ_Ñ) ∘ … ∘ exp(η_1 Ψ_1)(0).
    let reversed: Vec<Vec<Polynomial>> = psi.iter().rev().map(|f| f.components().to_vec()).collect();
    let origin = vec![rint(0); n];
    let cap = 2 * m as usize + 2;
    let phi_rev = maps::composed_lie_series(&reversed, &origin, None, cap)?;
    let rev_map: Vec<usize> = (0..nt).map(|k| nt - 1 - k).collect();
    let phi: Vec<Polynomial> = phi_rev.iter().map(|p| p.embed(nt, &rev_map)).collect();
    let dphi = maps::jacobian(&phi);
    for (c, f) in real.fields.iter().enumerate() {
        for i in 0..n {
            let mut lhs = Polynomial::zero(nt);
            for (j, fj) in f.components().iter().enumerate() {
                lhs = &lhs + &(&dphi[i][j] * fj);
            }
            let rhs = psi[c].components()[i].compose(&phi);
            if lhs != rhs {
                return Err(LiftError::Verification(format!("orbit map does not intertwine F_{}", c + 1)));
            }
        }
    }

    // Pivots: Hall elements whose values Ψ_c(0) add rank.
    let mut set = IndependentSet::new();
    let mut pivots = Vec::new();
    let mut complement = Vec::new();
    for (c, f) in psi.iter().enumerate() {
        if set.rank() < n && set.insert(&f.evaluate(&origin)?) {
            pivots.push(c);
        } else {
            complement.push(c);
        }
    }
    if pivots.len() != n {
        return Err(LiftError::Verification("hat fields do not span at the anchor".into()));
    }
    // Θ(η) = (φ(η), η_C) and its inverse.
    let mut theta = phi.clone();
    theta.extend(complement.iter().map(|&c| Polynomial::var(nt, c)));
    let theta_inv = maps::polynomial_inverse(&theta, 4 * m + 4)?;

    let names: Vec<String> = base
        .chart()
        .names()
        .iter()
        .cloned()
        .chain((1..=complement.len()).map(|j| format!("z{j}")))
        .collect();
    let ext_chart = CoordinateChart::new(names)?;
    let mut coordinate_weights: Vec<u32> = na.weights().to_vec();
    coordinate_weights.extend(complement.iter().map(|&c| basis.elements[c].hdeg));

    let extra = nt - n;
    let mut lifted_gens = Vec::with_capacity(q);
    let mut lifted_hat = Vec::with_capacity(q);
    for k in 0..q {
        let c = basis.generator_index(k);
        let l = maps::pushforward(&theta, &theta_inv, real.fields[c].components());
        for i in 0..n {
            if l[i] != hat[k].components()[i].extend(extra) {
                return Err(LiftError::Verification(format!("lifted X{} does not project", k + 1)));
            }
        }
        let mut comps: Vec<Polynomial> = base.generators()[k].components().iter().map(|p| p.extend(extra)).collect();
        comps.extend(l[n..].iter().cloned());
        lifted_gens.push(VectorField::new(ext_chart.clone(), comps)?);
        lifted_hat.push(VectorField::new(ext_chart.clone(), l)?);
    }
    let anchor = vec![rint(0); nt];
    let lifted = WeightedSystem::new(
        format!("{} (lifted)", base.name),
        ext_chart.clone(),
        lifted_gens,
        base.weights().to_vec(),
        anchor.clone(),
        Some(m),
    )?;
    let lifted_hat = WeightedSystem::new(
        format!("{} (lifted nilpotent approximation)", base.name),
        ext_chart,
        lifted_hat,
        base.weights().to_vec(),
        anchor.clone(),
        Some(m),
    )?;
    let ls = LiftedSystem {
        base,
        basis,
        pivots,
        complement,
        lifted,
        lifted_hat,
        coordinate_weights,
    };
    verify_lift(&ls)?;
    Ok(ls)
}

/// Projection, tail homogeneity, freeness and regularity at the lifted anchor.
pub fn verify_lift(ls: &LiftedSystem) -> Result<(), LiftError> {
    let n = ls.base_dim();
    for (k, (g, b)) in ls.lifted.generators().iter().zip(ls.base.generators()).enumerate() {
        for i in 0..n {
            if g.components()[i].restrict_to_prefix(n) != b.components()[i]
                || g.components()[i] != b.components()[i].extend(ls.dim() - n)
            {
                return Err(LiftError::Verification(format!("X~{} does not project", k + 1)));
            }
        }
    }
    for (k, t) in ls.tails().iter().enumerate() {
        if !t.is_zero() && t.homogeneous_order(&ls.coordinate_weights) != Some(-(ls.base.weights()[k] as i64)) {
            return Err(LiftError::Verification(format!("tail of X~{} is not homogeneous", k + 1)));
        }
    }
    let anchor = ls.lifted.anchor().to_vec();
    let dims = filtration_dims(&ls.lifted, &anchor)?;
    if *dims.dims.last().unwrap() != ls.basis.dim() {
        return Err(LiftError::Verification("lifted system is not free up to its depth".into()));
    }
    if classify_point(&ls.lifted, &anchor, &ClassifyConfig::default())? != Regularity::Regular {
        return Err(LiftError::Verification("lifted anchor is not regular".into()));
    }
    Ok(())
}
