//! Privileged coordinates, dilations, nilpotent approximation and the
//! Campbell–Hausdorff group law.

mod bch;

pub use bch::{BchSeries, ConstantsAlgebra, LieAlgebra};

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_traits::Zero;
use thiserror::Error;

use crate::polyalg::linalg::IndependentSet;
use crate::polyalg::maps::{self, MapError};
use crate::polyalg::{
    rat, rint, Coeff, CompiledPoly, CoordinateChart, PolyError, Polynomial, Rational, VectorField,
};
use crate::structure::{
    adapted_frame, enumerate_commutators, AdaptedFrame, CommutatorWord, StructureError, WeightedSystem,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GradingError {
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("inverse chart did not converge at {0:?}")]
    InverseDiverged(Vec<f64>),
    #[error("point {0:?} is outside the working box")]
    OutOfBox(Vec<f64>),
    #[error("dilation factor must be positive, got {0}")]
    BadDilation(f64),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChartConfig {
    /// Half width of the working box in privileged coordinates.
    pub working_half_width: f64,
    /// Largest degree tried for an exact polynomial inverse.
    pub max_inverse_degree: u32,
}

impl Default for ChartConfig {
    fn default() -> Self {
        ChartConfig {
            working_half_width: 1.0,
            max_inverse_degree: 12,
        }
    }
}

/// Second-kind chart `Φ(x) = exp(x_1 Y_1) ∘ … ∘ exp(x_N Y_N)(u)`.
#[derive(Clone, Debug)]
pub struct PrivilegedChart {
    base: Vec<Rational>,
    frame: AdaptedFrame,
    weights: Vec<u32>,
    chart: Arc<CoordinateChart>,
    forward: Vec<Polynomial>,
    inverse: Vec<Polynomial>,
    exact: bool,
    forward_c: Vec<CompiledPoly>,
    forward_jac_c: Vec<Vec<CompiledPoly>>,
    inverse_c: Vec<CompiledPoly>,
    cfg: ChartConfig,
}

impl PrivilegedChart {
    pub fn base(&self) -> &[Rational] {
        &self.base
    }

    pub fn frame(&self) -> &AdaptedFrame {
        &self.frame
    }

    pub fn coordinate_weights(&self) -> &[u32] {
        &self.weights
    }

    /// Coordinate chart `x1..xN` of the privileged coordinates.
    pub fn chart(&self) -> &Arc<CoordinateChart> {
        &self.chart
    }

    /// `Φ` as polynomials in the privileged coordinates.
    pub fn forward_map(&self) -> &[Polynomial] {
        &self.forward
    }

    /// `Φ^{-1}` as polynomials in the original coordinates (a truncated
    /// series when `is_exact()` is false).
    pub fn inverse_map(&self) -> &[Polynomial] {
        &self.inverse
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn config(&self) -> &ChartConfig {
        &self.cfg
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_c.iter().map(|f| f.eval(x)).collect()
    }

    fn forward_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        DMatrix::from_fn(n, n, |i, j| self.forward_jac_c[i][j].eval(x))
    }

    /// `Φ^{-1}(p)`, polished by Newton iterations on `Φ(x) = p`.
    pub fn inverse(&self, p: &[f64]) -> Result<Vec<f64>, GradingError> {
        let mut x: Vec<f64> = self.inverse_c.iter().map(|g| g.eval(p)).collect();
        let target = DVector::from_column_slice(p);
        for _ in 0..30 {
            let r = DVector::from_vec(self.forward(&x)) - &target;
            let scale = 1.0 + target.amax();
            if r.amax() <= 1e-15 * scale {
                return Ok(x);
            }
            let Some(step) = self.forward_jacobian(&x).lu().solve(&r) else {
                break;
            };
            for (xi, s) in x.iter_mut().zip(step.iter()) {
                *xi -= s;
            }
            if step.amax() <= 1e-16 * (1.0 + x.iter().fold(0.0f64, |a, v| a.max(v.abs()))) {
                let r = DVector::from_vec(self.forward(&x)) - &target;
                if r.amax() <= 1e-10 * scale {
                    return Ok(x);
                }
            }
        }
        let r = DVector::from_vec(self.forward(&x)) - &target;
        if r.amax() <= 1e-10 * (1.0 + target.amax()) {
            Ok(x)
        } else {
            Err(GradingError::InverseDiverged(p.to_vec()))
        }
    }

    /// Anisotropic scaling `δ_ε` in privileged coordinates.
    pub fn scale_coordinates(&self, x: &[f64], eps: f64) -> Vec<f64> {
        x.iter().zip(&self.weights).map(|(v, &w)| v * eps.powi(w as i32)).collect()
    }

    pub fn in_working_box(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.abs() <= self.cfg.working_half_width)
    }
}

pub fn privileged_chart(sys: &WeightedSystem, u: &[Rational]) -> Result<PrivilegedChart, GradingError> {
    privileged_chart_with(sys, u, &ChartConfig::default())
}

pub fn privileged_chart_with(
    sys: &WeightedSystem,
    u: &[Rational],
    cfg: &ChartConfig,
) -> Result<PrivilegedChart, GradingError> {
    let frame = adapted_frame(sys, u)?;
    let n = sys.dim();
    let m = sys.depth();
    let comps: Vec<Vec<Polynomial>> = frame.words.iter().map(|w| w.field.components().to_vec()).collect();
    let cap = 2 * m as usize + 2;
    let (forward, mut exact) = match maps::composed_lie_series(&comps, u, None, cap) {
        Ok(f) => (f, true),
        Err(MapError::NonTerminating { .. }) => (maps::composed_lie_series(&comps, u, Some(m + 1), cap)?, false),
        Err(e) => return Err(e.into()),
    };
    let shifted: Vec<Polynomial> = forward
        .iter()
        .zip(u)
        .map(|(f, ui)| f - &Polynomial::constant(n, ui.clone()))
        .collect();
    let g = if exact {
        match maps::polynomial_inverse(&shifted, cfg.max_inverse_degree) {
            Ok(g) => g,
            Err(MapError::NoPolynomialInverse(_)) => {
                exact = false;
                maps::series_inverse(&shifted, m + 1)?
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        maps::series_inverse(&shifted, m + 1)?
    };
    // Φ^{-1}(y) = G(y − u)
    let recenter: Vec<Polynomial> = (0..n)
        .map(|i| &Polynomial::var(n, i) - &Polynomial::constant(n, u[i].clone()))
        .collect();
    let inverse: Vec<Polynomial> = g.iter().map(|gi| gi.compose(&recenter)).collect();
    let jac = maps::jacobian(&forward);
    Ok(PrivilegedChart {
        base: u.to_vec(),
        weights: frame.frame_weights.clone(),
        frame,
        chart: CoordinateChart::numbered("x", n),
        forward_c: forward.iter().map(CompiledPoly::new).collect(),
        forward_jac_c: jac.iter().map(|r| r.iter().map(CompiledPoly::new).collect()).collect(),
        inverse_c: inverse.iter().map(CompiledPoly::new).collect(),
        forward,
        inverse,
        exact,
        cfg: cfg.clone(),
    })
}

/// Generators pushed into privileged coordinates.
#[derive(Clone, Debug)]
pub struct Pushforward {
    pub system: WeightedSystem,
    /// False when the fields were Taylor-truncated at total degree `M`.
    pub exact: bool,
    /// Largest residual `|DΦ·X' − X∘Φ|` seen on probe points (zero when exact).
    pub residual: f64,
}

/// `X'_k = (Φ^{-1})_* X_k` in privileged coordinates; brackets of the result
/// give `X'_I` for longer words.
pub fn pushforward_system(sys: &WeightedSystem, chart: &PrivilegedChart) -> Result<Pushforward, GradingError> {
    let n = sys.dim();
    let m = sys.depth();
    let mut gens = Vec::with_capacity(sys.generators().len());
    for g in sys.generators() {
        let mut comps = maps::pushforward(&chart.inverse, &chart.forward, g.components());
        if !chart.exact {
            comps = comps.into_iter().map(|c| c.truncate_degree(m)).collect();
        }
        gens.push(VectorField::new(chart.chart.clone(), comps)?);
    }
    let residual = if chart.exact {
        0.0
    } else {
        let mut worst = 0.0f64;
        let probes = [0.05, -0.05, 0.1];
        for &r in &probes {
            let x: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { r } else { -r }).collect();
            let y = chart.forward(&x);
            let j = chart.forward_jacobian(&x);
            for (g, gp) in sys.generators().iter().zip(&gens) {
                let lhs = &j * DVector::from_vec(gp.evaluate_f64(&x)?);
                let rhs = DVector::from_vec(g.evaluate_f64(&y)?);
                worst = worst.max((lhs - rhs).amax());
            }
        }
        worst
    };
    let system = WeightedSystem::from_parts_unchecked(
        format!("{} (privileged)", sys.name),
        chart.chart.clone(),
        gens,
        sys.weights().to_vec(),
        vec![rint(0); n],
        m,
    );
    Ok(Pushforward {
        system,
        exact: chart.exact,
        residual,
    })
}

/// Structure constants of the hat frame: `c^k_ij` is component `k` of
/// `[Ŷ_i, Ŷ_j](0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureConstants {
    pub dim: usize,
    pub frame_weights: Vec<u32>,
    /// Nonzero `(i, j, k, c^k_ij)` sorted by `(i, j, k)`.
    pub table: Vec<(usize, usize, usize, Rational)>,
    /// `[Ŷ_i, Ŷ_j] = Σ_k c^k_ij Ŷ_k` holds identically, not only at the anchor.
    pub exact_closure: bool,
}

impl StructureConstants {
    pub fn get(&self, i: usize, j: usize, k: usize) -> Rational {
        self.table
            .iter()
            .find(|(a, b, c, _)| (*a, *b, *c) == (i, j, k))
            .map(|t| t.3.clone())
            .unwrap_or_else(Rational::zero)
    }

    pub fn algebra<C: Coeff>(&self) -> ConstantsAlgebra<C> {
        ConstantsAlgebra::new(
            self.dim,
            self.table
                .iter()
                .map(|(i, j, k, c)| (*i, *j, *k, C::from_rational(c)))
                .collect(),
        )
    }

    /// Exact Jacobi residual: true when all cyclic sums vanish.
    pub fn jacobi_holds(&self) -> bool {
        let n = self.dim;
        let mut c = vec![vec![vec![Rational::zero(); n]; n]; n];
        for (i, j, k, v) in &self.table {
            c[*i][*j][*k] = v.clone();
        }
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    for k in 0..n {
                        let mut s = Rational::zero();
                        for m in 0..n {
                            s += &c[i][j][m] * &c[m][l][k];
                            s += &c[j][l][m] * &c[m][i][k];
                            s += &c[l][i][m] * &c[m][j][k];
                        }
                        if !s.is_zero() {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    pub fn is_antisymmetric(&self) -> bool {
        self.table.iter().all(|(i, j, k, v)| self.get(*j, *i, *k) == -v.clone())
    }

    /// Rows `(i, j, k, value)` with 1-based indices.
    pub fn rows(&self) -> Vec<(usize, usize, usize, String)> {
        self.table
            .iter()
            .map(|(i, j, k, v)| (i + 1, j + 1, k + 1, v.to_string()))
            .collect()
    }
}

/// Exponential coordinates with respect to the hat frame.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement {
    pub coeffs: Vec<f64>,
}

/// `z` with `exp(b) ∘ exp(a) = exp(z)`, i.e. `z = log(e^a e^b)`, truncated at
/// the nilpotency step.
pub fn bch_compose(sc: &StructureConstants, a: &GroupElement, b: &GroupElement) -> GroupElement {
    let order = sc.frame_weights.iter().copied().max().unwrap_or(1) as usize;
    GroupElement {
        coeffs: bch_compose_coeffs(sc, &a.coeffs, &b.coeffs, order),
    }
}

pub fn bch_compose_coeffs<C: Coeff>(sc: &StructureConstants, a: &[C], b: &[C], order: usize) -> Vec<C> {
    BchSeries::cached(order.max(1)).evaluate(&sc.algebra::<C>(), &a.to_vec(), &b.to_vec())
}

/// Summary of the exact checks made on a nilpotent approximation.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct InvariantReport {
    pub homogeneity: bool,
    pub bracket_closure: bool,
    pub vanishing_above_depth: bool,
    pub anchor_agreement: bool,
    pub jacobi: bool,
    pub hat_words_are_brackets: bool,
}

impl InvariantReport {
    pub fn all(&self) -> bool {
        self.homogeneity
            && self.bracket_closure
            && self.vanishing_above_depth
            && self.anchor_agreement
            && self.jacobi
            && self.hat_words_are_brackets
    }
}

#[derive(Clone, Debug)]
pub struct NilpotentApproximation {
    pub chart: PrivilegedChart,
    pub pushforward: Pushforward,
    /// Words `X'_I` of the pushed-forward system.
    pub words: Vec<CommutatorWord>,
    /// Same words with `X̂_I = (X'_I)^{(−|I|_h)}`; `is_zero` refers to the hat field.
    pub hat_words: Vec<CommutatorWord>,
    /// System generated by `X̂_1..X̂_q` on the privileged chart.
    pub hat_system: WeightedSystem,
    /// Positions in `words` of the frame entries.
    pub frame_indices: Vec<usize>,
    pub constants: StructureConstants,
    pub invariants: InvariantReport,
}

impl NilpotentApproximation {
    pub fn depth(&self) -> u32 {
        self.hat_system.depth()
    }

    pub fn weights(&self) -> &[u32] {
        self.chart.coordinate_weights()
    }

    pub fn hat_frame(&self) -> Vec<VectorField> {
        self.frame_indices.iter().map(|&i| self.hat_words[i].field.clone()).collect()
    }

    pub fn base_system(&self) -> &WeightedSystem {
        &self.pushforward.system
    }
}

pub fn nilpotentize(sys: &WeightedSystem, u: &[Rational]) -> Result<NilpotentApproximation, GradingError> {
    nilpotentize_with(sys, u, &ChartConfig::default())
}

pub fn nilpotentize_with(
    sys: &WeightedSystem,
    u: &[Rational],
    cfg: &ChartConfig,
) -> Result<NilpotentApproximation, GradingError> {
    let chart = privileged_chart_with(sys, u, cfg)?;
    let push = pushforward_system(sys, &chart)?;
    let weights = chart.weights.clone();
    let m = sys.depth();
    let words = enumerate_commutators(&push.system);
    let mut hat_words = Vec::with_capacity(words.len());
    let mut homogeneity = true;
    for w in &words {
        let order = -(w.hdeg as i64);
        if !w.field.is_zero() {
            let parts = w.field.graded_parts(&weights)?;
            if parts.keys().next().is_some_and(|&low| low < order) {
                return Err(GradingError::Invariant(format!(
                    "{} has a part of order below -{}",
                    w.label(),
                    w.hdeg
                )));
            }
        }
        let hat = w.field.homogeneous_part(&weights, order);
        for eps in [rat(1, 2), rat(1, 3)] {
            let expect = hat.scale(&crate::polyalg::rational_pow(&eps, order));
            if hat.dilation_pullback(&weights, &eps) != expect {
                homogeneity = false;
            }
        }
        let is_zero = hat.is_zero();
        hat_words.push(CommutatorWord {
            word: w.word.clone(),
            hdeg: w.hdeg,
            field: hat,
            is_zero,
        });
    }
    let mut hat_gens = vec![VectorField::zero(chart.chart.clone()); sys.generators().len()];
    for w in hat_words.iter().filter(|w| w.word.len() == 1) {
        hat_gens[w.word[0]] = w.field.clone();
    }
    let hat_system = WeightedSystem::from_parts_unchecked(
        format!("{} (nilpotent approximation)", sys.name),
        chart.chart.clone(),
        hat_gens,
        sys.weights().to_vec(),
        vec![rint(0); sys.dim()],
        m,
    );
    // Hat words must be the brackets of hat generators.
    let generated = enumerate_commutators(&hat_system);
    let hat_words_are_brackets = generated.len() == hat_words.len()
        && generated
            .iter()
            .zip(&hat_words)
            .all(|(g, h)| g.word == h.word && g.field == h.field);

    // Graded closure and vanishing beyond the depth.
    let mut bracket_closure = true;
    let mut vanishing_above_depth = true;
    for a in hat_words.iter().filter(|w| !w.is_zero) {
        for b in hat_words.iter().filter(|w| !w.is_zero) {
            let br = a.field.bracket(&b.field)?;
            let total = a.hdeg + b.hdeg;
            if total > m {
                if !br.is_zero() {
                    vanishing_above_depth = false;
                }
            } else if !br.is_zero() && br.homogeneous_order(&weights) != Some(-(total as i64)) {
                bracket_closure = false;
            }
        }
    }

    // Anchor agreement: Ĥ_l(0) = H_l(0) for every l, and Ŷ_i(0) = Y'_i(0).
    let origin = vec![rint(0); sys.dim()];
    let mut anchor_agreement = true;
    for l in 1..=m {
        let mut orig = IndependentSet::new();
        let mut hat = IndependentSet::new();
        let mut orig_vals = Vec::new();
        let mut hat_vals = Vec::new();
        for (w, h) in words.iter().zip(&hat_words).filter(|(w, _)| w.hdeg <= l) {
            let v = w.field.evaluate(&origin)?;
            let hv = h.field.evaluate(&origin)?;
            orig.insert(&v);
            hat.insert(&hv);
            orig_vals.push(v);
            hat_vals.push(hv);
        }
        let same = orig.rank() == hat.rank()
            && hat_vals.iter().all(|v| orig.contains(v))
            && orig_vals.iter().all(|v| hat.contains(v));
        if !same {
            anchor_agreement = false;
        }
    }
    let frame_indices: Vec<usize> = chart
        .frame
        .words
        .iter()
        .map(|fw| words.iter().position(|w| w.word == fw.word).expect("frame word enumerated"))
        .collect();
    for &i in &frame_indices {
        if words[i].field.evaluate(&origin)? != hat_words[i].field.evaluate(&origin)? {
            anchor_agreement = false;
        }
    }

    let constants = structure_constants_of(&frame_indices, &hat_words, &weights, &origin)?;
    let invariants = InvariantReport {
        homogeneity,
        bracket_closure,
        vanishing_above_depth,
        anchor_agreement,
        jacobi: constants.jacobi_holds() && constants.is_antisymmetric(),
        hat_words_are_brackets,
    };
    if !invariants.all() {
        return Err(GradingError::Invariant(format!("{invariants:?}")));
    }
    Ok(NilpotentApproximation {
        chart,
        pushforward: push,
        words,
        hat_words,
        hat_system,
        frame_indices,
        constants,
        invariants,
    })
}

fn structure_constants_of(
    frame_indices: &[usize],
    hat_words: &[CommutatorWord],
    weights: &[u32],
    origin: &[Rational],
) -> Result<StructureConstants, GradingError> {
    let n = frame_indices.len();
    let frame: Vec<&VectorField> = frame_indices.iter().map(|&i| &hat_words[i].field).collect();
    let mut table = Vec::new();
    let mut exact_closure = true;
    for i in 0..n {
        for j in 0..n {
            let br = frame[i].bracket(frame[j])?;
            let at0 = br.evaluate(origin)?;
            let mut recon = VectorField::zero(br.chart().clone());
            for (k, c) in at0.iter().enumerate() {
                if c.is_zero() {
                    continue;
                }
                if weights[k] != weights[i] + weights[j] {
                    return Err(GradingError::Invariant(format!(
                        "constant c^{}_{}{} on a non-additive triple",
                        k + 1,
                        i + 1,
                        j + 1
                    )));
                }
                table.push((i, j, k, c.clone()));
                recon = recon.add(&frame[k].scale(c))?;
            }
            if recon != br {
                exact_closure = false;
            }
        }
    }
    Ok(StructureConstants {
        dim: n,
        frame_weights: weights.to_vec(),
        table,
        exact_closure,
    })
}

pub fn structure_constants(na: &NilpotentApproximation) -> StructureConstants {
    na.constants.clone()
}

/// `Δ^u_ε(p) = Φ(δ_ε Φ^{-1}(p))`.
pub fn dilate(chart: &PrivilegedChart, eps: f64, p: &[f64]) -> Result<Vec<f64>, GradingError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(GradingError::BadDilation(eps));
    }
    let x = chart.inverse(p)?;
    if !chart.in_working_box(&x) {
        return Err(GradingError::OutOfBox(p.to_vec()));
    }
    Ok(chart.forward(&chart.scale_coordinates(&x, eps)))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::flows::FlowConfig;
    use crate::polyalg::PolyVectorField;
    use crate::structure::tests::{euclidean, example3};

    pub(crate) fn heisenberg() -> WeightedSystem {
        let ch = CoordinateChart::new(vec!["x", "y", "t"]).unwrap();
        let x = Polynomial::var(3, 0);
        let y = Polynomial::var(3, 1);
        let o = Polynomial::one(3);
        let z = Polynomial::zero(3);
        let f = |c: Vec<Polynomial>| PolyVectorField::new(ch.clone(), c).unwrap();
        let gens = vec![
            f(vec![o.clone(), z.clone(), y.scale(&rat(-1, 2))]),
            f(vec![z.clone(), o.clone(), x.scale(&rat(1, 2))]),
            f(vec![z.clone(), z, o]),
        ];
        WeightedSystem::new("heisenberg-1", ch, gens, vec![1, 1, 2], vec![rint(0); 3], None).unwrap()
    }

    #[test]
    fn euclidean_chart_is_a_translation() {
        let s = euclidean(vec![1, 2, 3]);
        let u = vec![rint(1), rat(1, 2), rint(-2)];
        let c = privileged_chart(&s, &u).unwrap();
        assert!(c.is_exact());
        let x = [0.3, -0.2, 0.1];
        let y = c.forward(&x);
        assert_eq!(y, vec![1.3, 0.3, -1.9]);
        let na = nilpotentize(&s, &u).unwrap();
        for (w, h) in na.words.iter().zip(&na.hat_words) {
            assert_eq!(w.field, h.field);
        }
        assert!(na.constants.table.is_empty());
    }

    #[test]
    fn heisenberg_chart_and_hat_fields() {
        let s = heisenberg();
        let c = privileged_chart(&s, &[rint(0), rint(0), rint(0)]).unwrap();
        assert_eq!(c.forward(&[0.0; 3]), vec![0.0; 3]);
        let j = c.forward_jacobian(&[0.0; 3]);
        assert_eq!(j, DMatrix::identity(3, 3));
        let na = nilpotentize(&s, &[rint(0), rint(0), rint(0)]).unwrap();
        for (w, h) in na.words.iter().zip(&na.hat_words) {
            assert_eq!(w.field, h.field, "{}", w.label());
        }
        // Second-kind coordinates (x, y, t + xy/2) straighten X1.
        assert_eq!(na.base_system().generators()[0].render(), "(1, 0, 0)");
        assert_eq!(na.base_system().generators()[1].render(), "(0, 1, x1)");
        assert_eq!(na.constants.get(0, 1, 2), rint(1));
        assert_eq!(na.constants.table.len(), 2);
        assert!(na.constants.exact_closure);
        for (eps, p) in [(0.5, [0.2, -0.4, 0.3]), (0.25, [1.0, 0.5, -0.5])] {
            let d = dilate(&c, eps, &p).unwrap();
            let expect = [eps * p[0], eps * p[1], eps * eps * p[2]];
            for (a, b) in d.iter().zip(expect) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn example3_nilpotent_approximation_at_origin() {
        let s = example3(vec![1, 1, 1]);
        let na = nilpotentize(&s, &[rint(0), rint(0), rint(0)]).unwrap();
        // Frame (∂y, ∂x + y∂t, ∂t): privileged coordinates (y, x, t).
        let labels: Vec<String> = na.hat_words.iter().filter(|w| !w.is_zero).map(|w| w.label()).collect();
        assert!(labels.contains(&"(X1 X2)".to_string()));
        let h = &na.hat_system.generators();
        assert_eq!(h[1].render(), "(0, 1, x1)");
        assert_eq!(h[2].render(), "(0, 1, 0)");
        let br = h[0].bracket(&h[1]).unwrap();
        assert_eq!(br.render(), "(0, 0, 1)");
        assert_eq!(na.constants.get(0, 1, 2), rint(1));
    }

    #[test]
    fn graded_example3_drops_the_heavy_generator() {
        let s = example3(vec![1, 2, 3]);
        let na = nilpotentize(&s, &[rint(0), rint(0), rint(0)]).unwrap();
        assert!(na.hat_system.generators()[2].is_zero());
        assert!(!na.base_system().generators()[2].is_zero());
    }

    #[test]
    fn inverse_round_trip() {
        let s = example3(vec![1, 2, 3]);
        let c = privileged_chart(&s, &[rint(1), rat(1, 3), rint(0)]).unwrap();
        for k in 0..100 {
            let t = k as f64 / 100.0;
            let x = [t - 0.5, (3.0 * t).sin() * 0.8, (5.0 * t).cos() * 0.9];
            let p = c.forward(&x);
            let back = c.inverse(&p).unwrap();
            for (a, b) in back.iter().zip(&x) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn bch_matches_flow_composition() {
        let s = heisenberg();
        let na = nilpotentize(&s, &[rint(0), rint(0), rint(0)]).unwrap();
        let frame = na.hat_frame();
        let cfg = FlowConfig::default();
        let a = GroupElement { coeffs: vec![0.3, -0.2, 0.15] };
        let b = GroupElement { coeffs: vec![-0.4, 0.25, 0.05] };
        let z = bch_compose(&na.constants, &a, &b);
        let lhs = {
            let ea = crate::flows::exp_combination(&a.coeffs, &frame, &[0.0; 3], &cfg).unwrap().endpoint;
            crate::flows::exp_combination(&b.coeffs, &frame, &ea, &cfg).unwrap().endpoint
        };
        let rhs = crate::flows::exp_combination(&z.coeffs, &frame, &[0.0; 3], &cfg).unwrap().endpoint;
        for (x, y) in lhs.iter().zip(&rhs) {
            assert!((x - y).abs() < 1e-12);
        }
        let t = 0.7;
        let u = -0.4;
        let z = bch_compose(
            &na.constants,
            &GroupElement { coeffs: vec![t, 0.0, 0.0] },
            &GroupElement { coeffs: vec![0.0, u, 0.0] },
        );
        assert_eq!(z.coeffs, vec![t, u, t * u / 2.0]);
    }
}
