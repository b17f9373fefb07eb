//! Quasimetrics `ρ` and `ρ^u` as min–max control problems over constant
//! coefficients `w_I` of the commutator fields, with geometric diagnostics.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::flows::{CombinationFlow, FlowConfig, FlowError};
use crate::grading::{GradingError, NilpotentApproximation};
use crate::polyalg::VectorField;
use crate::structure::{distinct_words, enumerate_commutators, WeightedSystem};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuasimetricError {
    #[error("target unreachable with controls of size up to {0}")]
    Infeasible(f64),
    #[error("inner solver stalled")]
    Stalled,
    #[error("point dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unknown word {0:?}")]
    UnknownWord(Vec<usize>),
    #[error("no control directions")]
    NoWords,
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Grading(#[from] GradingError),
}

/// Control class for the coefficients `w_I`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ControlClass {
    /// Constant coefficients over unit time.
    #[default]
    Constant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuasimetricConfig {
    /// Absolute endpoint tolerance when no coordinate weights are known.
    pub atol: f64,
    /// Endpoint tolerance relative to the local coordinate scale.
    pub rtol: f64,
    /// With coordinate weights `w_i`, coordinate `i` may also miss by
    /// `(eta·δ)^{w_i}`, a quasidistance `eta·δ`.
    pub eta: f64,
    /// Relative bisection gap on `δ`.
    pub rel_gap: f64,
    pub starts: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub controls: ControlClass,
    pub flow: FlowConfig,
}

impl Default for QuasimetricConfig {
    fn default() -> Self {
        QuasimetricConfig {
            atol: 1e-15,
            rtol: 1e-13,
            eta: 1e-7,
            rel_gap: 1e-4,
            starts: 8,
            max_iters: 60,
            seed: 0,
            controls: ControlClass::Constant,
            flow: FlowConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateStatus {
    Converged,
    Stalled,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuasimetricEstimate {
    /// `max_I |w_I|^{1/|I|_h}` of the witness.
    pub value: f64,
    /// Witness coefficients, one per control word.
    pub controls: Vec<f64>,
    pub endpoint_residual: f64,
    pub status: EstimateStatus,
    /// Largest `δ` shown infeasible by the bisection (a heuristic lower end).
    pub lower: f64,
}

/// Control words and their flow, ready for repeated estimates.
#[derive(Debug, Clone)]
pub struct QuasimetricSpace {
    words: Vec<Vec<usize>>,
    hdegs: Vec<u32>,
    /// Dilation weights of the coordinates, when they are privileged.
    coord_weights: Option<Vec<u32>>,
    flow: CombinationFlow,
    cfg: QuasimetricConfig,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// `max_I |w_I|^{1/h_I}`.
pub fn control_size(w: &[f64], hdegs: &[u32]) -> f64 {
    w.iter()
        .zip(hdegs)
        .fold(0.0f64, |a, (x, &h)| a.max(x.abs().powf(1.0 / h as f64)))
}

impl QuasimetricSpace {
    fn build(words: Vec<Vec<usize>>, hdegs: Vec<u32>, fields: Vec<VectorField>, cfg: &QuasimetricConfig) -> Result<Self, QuasimetricError> {
        if fields.is_empty() {
            return Err(QuasimetricError::NoWords);
        }
        Ok(QuasimetricSpace {
            flow: CombinationFlow::new(&fields, &cfg.flow),
            words,
            hdegs,
            coord_weights: None,
            cfg: cfg.clone(),
        })
    }

    /// Declares the coordinates privileged with the given weights, which
    /// makes the endpoint tolerance scale with each coordinate.
    pub fn with_coordinate_weights(mut self, weights: Vec<u32>) -> Self {
        assert_eq!(weights.len(), self.dim());
        self.coord_weights = Some(weights);
        self
    }

    pub fn coordinate_weights(&self) -> Option<&[u32]> {
        self.coord_weights.as_deref()
    }

    /// `ρ` of a system: distinct nonzero commutators of degree `≤ M`.
    pub fn new(sys: &WeightedSystem, cfg: &QuasimetricConfig) -> Result<Self, QuasimetricError> {
        let ws = distinct_words(sys);
        Self::build(
            ws.iter().map(|w| w.word.clone()).collect(),
            ws.iter().map(|w| w.hdeg).collect(),
            ws.into_iter().map(|w| w.field).collect(),
            cfg,
        )
    }

    /// `ρ` with an explicit list of words (zero fields are kept).
    pub fn with_words(sys: &WeightedSystem, words: &[Vec<usize>], cfg: &QuasimetricConfig) -> Result<Self, QuasimetricError> {
        let all = enumerate_commutators(sys);
        let mut fields = Vec::with_capacity(words.len());
        let mut hdegs = Vec::with_capacity(words.len());
        for w in words {
            let cw = all
                .iter()
                .find(|c| &c.word == w)
                .ok_or_else(|| QuasimetricError::UnknownWord(w.clone()))?;
            fields.push(cw.field.clone());
            hdegs.push(cw.hdeg);
        }
        Self::build(words.to_vec(), hdegs, fields, cfg)
    }

    /// `ρ^u` in privileged coordinates: the words of `ρ` for the
    /// pushed-forward system, with their nilpotent approximations. Words whose
    /// approximation vanishes are dropped.
    pub fn nilpotent(na: &NilpotentApproximation, cfg: &QuasimetricConfig) -> Result<Self, QuasimetricError> {
        let mut words = Vec::new();
        let mut hdegs = Vec::new();
        let mut fields = Vec::new();
        for w in distinct_words(na.base_system()) {
            let h = na
                .hat_words
                .iter()
                .find(|h| h.word == w.word)
                .ok_or_else(|| QuasimetricError::UnknownWord(w.word.clone()))?;
            if !h.is_zero {
                words.push(w.word);
                hdegs.push(w.hdeg);
                fields.push(h.field.clone());
            }
        }
        Ok(Self::build(words, hdegs, fields, cfg)?.with_coordinate_weights(na.weights().to_vec()))
    }

    /// `ρ` of the pushed-forward system in privileged coordinates.
    pub fn privileged(na: &NilpotentApproximation, cfg: &QuasimetricConfig) -> Result<Self, QuasimetricError> {
        Ok(Self::new(na.base_system(), cfg)?.with_coordinate_weights(na.weights().to_vec()))
    }

    pub fn words(&self) -> &[Vec<usize>] {
        &self.words
    }

    pub fn hdegs(&self) -> &[u32] {
        &self.hdegs
    }

    pub fn dim(&self) -> usize {
        self.flow.dim()
    }

    pub fn config(&self) -> &QuasimetricConfig {
        &self.cfg
    }

    pub fn flow(&self) -> &CombinationFlow {
        &self.flow
    }

    /// Coefficients of `other` rearranged to the words of `self`; words
    /// missing from `other` get zero.
    pub fn transfer_controls(&self, other: &QuasimetricSpace, c: &[f64]) -> Vec<f64> {
        self.words
            .iter()
            .map(|w| other.words.iter().position(|o| o == w).map_or(0.0, |i| c[i]))
            .collect()
    }

    /// `exp(Σ w_I X_I)(p)`.
    pub fn endpoint(&self, w: &[f64], p: &[f64]) -> Result<Vec<f64>, QuasimetricError> {
        Ok(self.flow.endpoint(w, p)?.endpoint)
    }

    /// Per-coordinate endpoint tolerance for controls of size `δ`.
    fn tolerance(&self, v: &[f64], w: &[f64], delta: f64) -> Vec<f64> {
        match &self.coord_weights {
            Some(cw) => {
                let quasi = |p: &[f64]| {
                    p.iter()
                        .zip(cw)
                        .fold(0.0f64, |a, (x, &h)| a.max(x.abs().powf(1.0 / h as f64)))
                };
                let reach = quasi(v).max(quasi(w)) + delta;
                cw.iter()
                    .enumerate()
                    .map(|(i, &h)| {
                        let scale = v[i].abs().max(w[i].abs()).max(reach.powi(h as i32));
                        self.cfg.rtol * scale + (self.cfg.eta * delta).powi(h as i32)
                    })
                    .collect()
            }
            None => {
                let scale = sup(v).max(sup(w)) + delta;
                vec![self.cfg.atol + self.cfg.rtol * scale; v.len()]
            }
        }
    }

    fn check_dims(&self, v: &[f64], w: &[f64]) -> Result<(), QuasimetricError> {
        for p in [v, w] {
            if p.len() != self.dim() {
                return Err(QuasimetricError::DimensionMismatch {
                    expected: self.dim(),
                    found: p.len(),
                });
            }
        }
        Ok(())
    }

    /// Typical displacement of each coordinate under controls of size `δ`:
    /// `δ·max(δ, R)^{w_i−1}` with `R` the quasi-norm of the endpoints.
    fn row_scale(&self, v: &[f64], w: &[f64], delta: f64, tol: &[f64]) -> Vec<f64> {
        match &self.coord_weights {
            Some(cw) => {
                let reach = cw.iter().enumerate().fold(delta, |a, (i, &h)| {
                    a.max(v[i].abs().max(w[i].abs()).powf(1.0 / h as f64))
                });
                cw.iter()
                    .zip(tol)
                    .map(|(&h, t)| (delta * reach.powi(h as i32 - 1)).max(*t))
                    .collect()
            }
            None => tol.to_vec(),
        }
    }

    /// Projected Levenberg–Marquardt on `s ∈ [−1,1]^K` for
    /// `exp(Σ δ^{h_I} s_I X_I)(v) = w`, with residual rows scaled by the
    /// tolerance. Returns the coefficients `w_I` and the absolute residual
    /// when the tolerance is met.
    fn feasible_at(&self, v: &[f64], target: &[f64], delta: f64, start: &[f64]) -> Option<(Vec<f64>, f64)> {
        let k = self.words.len();
        let n = self.dim();
        let tol = self.tolerance(v, target, delta);
        // Rows are measured in the size a coordinate moves under controls
        // of size δ, which keeps the problem mildly nonlinear; the tolerance
        // itself can be many orders smaller.
        let row = self.row_scale(v, target, delta, &tol);
        let excess = |r: &DVector<f64>| (0..n).fold(0.0f64, |a, i| a.max((r[i] * row[i] / tol[i]).abs()));
        let scale: Vec<f64> = self.hdegs.iter().map(|&h| delta.powi(h as i32)).collect();
        let to_w = |s: &[f64]| -> Vec<f64> { s.iter().zip(&scale).map(|(a, b)| a * b).collect() };
        let eval = |s: &[f64]| -> Option<(DVector<f64>, DMatrix<f64>)> {
            let (x, j) = self.flow.endpoint_and_jacobian(&to_w(s), v).ok()?;
            let r = DVector::from_iterator(n, (0..n).map(|i| (x[i] - target[i]) / row[i]));
            let jm = DMatrix::from_fn(n, k, |i, c| j[i][c] * scale[c] / row[i]);
            Some((r, jm))
        };
        let mut s: Vec<f64> = start.iter().map(|x| x.clamp(-1.0, 1.0)).collect();
        let (mut r, mut jm) = eval(&s)?;
        let mut lambda: f64 = 1e-6;
        let mut polish = 0;
        for _ in 0..self.cfg.max_iters {
            let res = excess(&r);
            if res <= 1.0 {
                // A few extra steps drive the residual to rounding level.
                polish += 1;
                if polish > 3 || res == 0.0 {
                    break;
                }
            }
            // Damped step from the stacked system [J; √λ D] by SVD, which
            // keeps the conditioning of J rather than squaring it. Variables
            // on the boundary that the step pushes outward are frozen and the
            // step is recomputed over the rest.
            let diag: Vec<f64> = (0..k).map(|c| jm.column(c).norm().max(1e-12)).collect();
            let damped = |lambda: f64, free: &[bool]| -> Option<Vec<f64>> {
                let mut a = DMatrix::zeros(n + k, k);
                for c in (0..k).filter(|&c| free[c]) {
                    a.view_mut((0, c), (n, 1)).copy_from(&jm.column(c));
                }
                for d in 0..k {
                    a[(n + d, d)] = lambda.sqrt() * diag[d];
                }
                let mut rhs = DVector::zeros(n + k);
                rhs.rows_mut(0, n).copy_from(&r);
                let step = a.svd(true, true).solve(&rhs, 1e-14).ok()?;
                Some(step.iter().zip(free).map(|(x, &f)| if f { *x } else { 0.0 }).collect())
            };
            let mut improved = false;
            for _ in 0..12 {
                let mut free = vec![true; k];
                let mut step = damped(lambda, &free);
                for _ in 0..k {
                    let Some(st) = &step else { break };
                    let blocked: Vec<usize> = (0..k)
                        .filter(|&c| free[c] && s[c].abs() >= 1.0 && (s[c] - st[c]).abs() > 1.0)
                        .collect();
                    if blocked.is_empty() {
                        break;
                    }
                    blocked.iter().for_each(|&c| free[c] = false);
                    step = damped(lambda, &free);
                }
                let Some(step) = step else {
                    lambda *= 10.0;
                    continue;
                };
                let cand: Vec<f64> = s.iter().zip(step.iter()).map(|(a, b)| (a - b).clamp(-1.0, 1.0)).collect();
                if let Some((rc, jc)) = eval(&cand) {
                    if rc.norm() < r.norm() {
                        s = cand;
                        r = rc;
                        jm = jc;
                        lambda = (lambda / 5.0).max(1e-15);
                        improved = true;
                        break;
                    }
                }
                lambda *= 8.0;
                if lambda > 1e12 {
                    break;
                }
            }
            if !improved {
                break;
            }
        }
        if excess(&r) > 1.0 {
            return None;
        }
        let abs = r.iter().zip(&row).fold(0.0f64, |a, (x, t)| a.max((x * t).abs()));
        Some((to_w(&s), abs))
    }

    /// Coefficients from a Newton solve on a numerically independent subset
    /// of the words, taken in degree order.
    fn frame_solve(&self, v: &[f64], target: &[f64]) -> Option<Vec<f64>> {
        let k = self.words.len();
        let n = self.dim();
        let zero = vec![0.0; k];
        let (_, j0) = self.flow.endpoint_and_jacobian(&zero, v).ok()?;
        let mut chosen: Vec<usize> = Vec::new();
        for c in 0..k {
            let mut trial = chosen.clone();
            trial.push(c);
            let m = DMatrix::from_fn(n, trial.len(), |i, t| j0[i][trial[t]]);
            let sv = m.singular_values();
            let (mx, mn) = sv.iter().fold((0.0f64, f64::INFINITY), |(a, b), &x| (a.max(x), b.min(x)));
            if mn > 1e-9 * mx.max(1.0) {
                chosen = trial;
            }
            if chosen.len() == n {
                break;
            }
        }
        if chosen.len() < n {
            return None;
        }
        let mut w = zero;
        let mut last = f64::INFINITY;
        for _ in 0..40 {
            let (x, j) = self.flow.endpoint_and_jacobian(&w, v).ok()?;
            let r = DVector::from_iterator(n, x.iter().zip(target).map(|(a, b)| a - b));
            let res = r.amax();
            if res == 0.0 || res >= last {
                break;
            }
            last = res;
            let m = DMatrix::from_fn(n, n, |i, t| j[i][chosen[t]]);
            let step = m.lu().solve(&r)?;
            for (t, &c) in chosen.iter().enumerate() {
                w[c] -= step[t];
            }
        }
        self.within(v, target, &w).then_some(w)
    }

    /// Whether `exp(Σ c_I X_I)(v)` meets `target` within the tolerance for
    /// controls of the size of `c`.
    fn within(&self, v: &[f64], target: &[f64], c: &[f64]) -> bool {
        self.residual(v, target, c).is_some()
    }

    /// Absolute endpoint residual of `c` when within tolerance.
    fn residual(&self, v: &[f64], target: &[f64], c: &[f64]) -> Option<f64> {
        let x = self.endpoint(c, v).ok()?;
        let tol = self.tolerance(v, target, control_size(c, &self.hdegs));
        let ok = x.iter().zip(target).zip(&tol).all(|((a, b), t)| (a - b).abs() <= *t);
        ok.then(|| x.iter().zip(target).fold(0.0f64, |a, (p, q)| a.max((p - q).abs())))
    }

    /// Upper estimate of `ρ(v, w)` with a certified witness.
    pub fn estimate(&self, v: &[f64], w: &[f64]) -> Result<QuasimetricEstimate, QuasimetricError> {
        self.estimate_with_hint(v, w, None)
    }

    /// As [`estimate`](Self::estimate), also trying the given coefficients as
    /// an initial witness and as a start at every bisection step.
    pub fn estimate_with_hint(&self, v: &[f64], w: &[f64], hint: Option<&[f64]>) -> Result<QuasimetricEstimate, QuasimetricError> {
        self.check_dims(v, w)?;
        let k = self.words.len();
        let zero = vec![0.0; k];
        if let Some(res0) = self.residual(v, w, &zero) {
            return Ok(QuasimetricEstimate {
                value: 0.0,
                controls: zero,
                endpoint_residual: res0,
                status: EstimateStatus::Converged,
                lower: 0.0,
            });
        }
        // Initial witness.
        let mut best: Option<Vec<f64>> = None;
        let consider = |c: Vec<f64>, best: &mut Option<Vec<f64>>| {
            if self.within(v, w, &c)
                && best
                    .as_ref()
                    .is_none_or(|b| control_size(&c, &self.hdegs) < control_size(b, &self.hdegs))
            {
                *best = Some(c);
            }
        };
        if let Some(h) = hint {
            if h.len() == k {
                consider(h.to_vec(), &mut best);
            }
        }
        let frame = self.frame_solve(v, w);
        if let Some(c) = &frame {
            consider(c.clone(), &mut best);
        }
        if best.is_none() {
            let mut delta = 0.5;
            while delta <= 64.0 {
                if let Some((c, _)) = self.feasible_at(v, w, delta, &zero) {
                    best = Some(c);
                    break;
                }
                delta *= 2.0;
            }
        }
        let Some(mut witness) = best else {
            return Ok(QuasimetricEstimate {
                value: f64::INFINITY,
                controls: zero,
                endpoint_residual: f64::INFINITY,
                status: EstimateStatus::Infeasible,
                lower: 0.0,
            });
        };
        let mut hi = control_size(&witness, &self.hdegs);
        let mut lo = 0.0f64;
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let mut stalled = false;
        let mut rounds = 0;
        let scaled = |c: &[f64], d: f64| -> Vec<f64> {
            c.iter().zip(&self.hdegs).map(|(c, &h)| c / d.powi(h as i32)).collect()
        };
        while hi - lo > self.cfg.rel_gap * hi {
            rounds += 1;
            if rounds > 200 {
                stalled = true;
                break;
            }
            let mid = 0.5 * (lo + hi);
            let mut found: Option<Vec<f64>> = None;
            for start in 0..self.cfg.starts.max(1) {
                let s0: Vec<f64> = match start {
                    0 => scaled(&witness, mid),
                    1 => match &frame {
                        Some(c) => scaled(c, mid),
                        None => continue,
                    },
                    2 => match hint {
                        Some(h) if h.len() == k => scaled(h, mid),
                        _ => continue,
                    },
                    _ => (0..k).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
                };
                if let Some((c, _)) = self.feasible_at(v, w, mid, &s0) {
                    found = Some(c);
                    break;
                }
            }
            match found {
                Some(c) => {
                    hi = control_size(&c, &self.hdegs).min(mid);
                    witness = c;
                }
                None => lo = mid,
            }
        }
        // Certificate re-check with one flow evaluation.
        let residual = self.residual(v, w, &witness).ok_or(QuasimetricError::Stalled)?;
        Ok(QuasimetricEstimate {
            value: control_size(&witness, &self.hdegs),
            controls: witness,
            endpoint_residual: residual,
            status: if stalled { EstimateStatus::Stalled } else { EstimateStatus::Converged },
            lower: lo,
        })
    }

    /// Points `exp(Σ w_I X_I)(center)` with `w_I = r^{|I|_h} s_I`, `s`
    /// uniform in the unit cube.
    pub fn ball_sample(&self, center: &[f64], r: f64, n: usize, seed: u64) -> Result<Vec<Vec<f64>>, QuasimetricError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| self.endpoint(&self.random_controls(&mut rng, r), center))
            .collect()
    }

    /// Coefficients `w_I = r^{|I|_h} s_I` with `s` uniform in the unit cube.
    pub fn random_controls<R: Rng>(&self, rng: &mut R, r: f64) -> Vec<f64> {
        self.hdegs
            .iter()
            .map(|&h| r.powi(h as i32) * rng.gen_range(-1.0..=1.0))
            .collect()
    }
}

/// `ρ(v, w)` for a system in its own coordinates.
pub fn rho_estimate(sys: &WeightedSystem, v: &[f64], w: &[f64]) -> Result<QuasimetricEstimate, QuasimetricError> {
    QuasimetricSpace::new(sys, &QuasimetricConfig::default())?.estimate(v, w)
}

/// `ρ^u(v, w)` for points in the original coordinates.
pub fn rho_u_estimate(na: &NilpotentApproximation, v: &[f64], w: &[f64]) -> Result<QuasimetricEstimate, QuasimetricError> {
    let space = QuasimetricSpace::nilpotent(na, &QuasimetricConfig::default())?;
    let pv = na.chart.inverse(v)?;
    let pw = na.chart.inverse(w)?;
    space.estimate(&pv, &pw)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuasimetricDiagnostics {
    pub symmetry_defect: f64,
    pub triangle_q: f64,
    pub cone_defect: f64,
    /// Triples or pairs counted in the statistics.
    pub n_samples: usize,
    pub n_failures: usize,
}

fn converged(e: Result<QuasimetricEstimate, QuasimetricError>) -> Option<f64> {
    match e {
        Ok(q) if q.status == EstimateStatus::Converged => Some(q.value),
        _ => None,
    }
}

/// Empirical `Q` in `ρ(v,w) ≤ Q(ρ(u,v) + ρ(u,w))` over triples sampled at
/// the given scale around `center`, together with the symmetry defect.
pub fn triangle_constant(
    space: &QuasimetricSpace,
    center: &[f64],
    samples: usize,
    scale: f64,
    seed: u64,
) -> Result<QuasimetricDiagnostics, QuasimetricError> {
    let us = space.ball_sample(center, scale, samples, seed)?;
    let vs = space.ball_sample(center, scale, samples, seed.wrapping_add(1))?;
    let ws = space.ball_sample(center, scale, samples, seed.wrapping_add(2))?;
    let mut q = 0.0f64;
    let mut sym = 0.0f64;
    let mut n_samples = 0;
    let mut n_failures = 0;
    for ((u, v), w) in us.iter().zip(&vs).zip(&ws) {
        let vals = (
            converged(space.estimate(v, w)),
            converged(space.estimate(w, v)),
            converged(space.estimate(u, v)),
            converged(space.estimate(u, w)),
        );
        let (Some(vw), Some(wv), Some(uv), Some(uw)) = vals else {
            n_failures += 1;
            continue;
        };
        sym = sym.max((vw - wv).abs());
        let denom = uv + uw;
        if denom > 0.0 {
            q = q.max(vw / denom);
            n_samples += 1;
        }
    }
    Ok(QuasimetricDiagnostics {
        symmetry_defect: sym,
        triangle_q: q,
        cone_defect: 0.0,
        n_samples,
        n_failures,
    })
}

/// Largest relative violation of `ρ^u(δ_ε v, δ_ε w) = ε ρ^u(v, w)` over
/// pairs sampled in the unit `ρ^u`-box about the origin of privileged
/// coordinates.
pub fn cone_check(
    na: &NilpotentApproximation,
    pairs: usize,
    eps_list: &[f64],
    seed: u64,
    cfg: &QuasimetricConfig,
) -> Result<QuasimetricDiagnostics, QuasimetricError> {
    let space = QuasimetricSpace::nilpotent(na, cfg)?;
    let origin = vec![0.0; space.dim()];
    let vs = space.ball_sample(&origin, 0.5, pairs, seed)?;
    let ws = space.ball_sample(&origin, 0.5, pairs, seed.wrapping_add(1))?;
    let mut defect = 0.0f64;
    let mut n_samples = 0;
    let mut n_failures = 0;
    for (v, w) in vs.iter().zip(&ws) {
        let Some(base) = converged(space.estimate(v, w)) else {
            n_failures += 1;
            continue;
        };
        if base == 0.0 {
            continue;
        }
        for &eps in eps_list {
            let dv = na.chart.scale_coordinates(v, eps);
            let dw = na.chart.scale_coordinates(w, eps);
            match converged(space.estimate(&dv, &dw)) {
                Some(r) => {
                    defect = defect.max((r - eps * base).abs() / (eps * base));
                    n_samples += 1;
                }
                None => n_failures += 1,
            }
        }
    }
    Ok(QuasimetricDiagnostics {
        symmetry_defect: 0.0,
        triangle_q: 0.0,
        cone_defect: defect,
        n_samples,
        n_failures,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxInclusionReport {
    pub r: f64,
    pub xi: f64,
    /// Smallest `R` with every sampled `y` in `B(v, R)`.
    pub inflation: f64,
    /// `(R − r)/ξ`, or zero when `ξ = 0`.
    pub constant: f64,
    pub n_samples: usize,
    pub n_failures: usize,
}

/// Samples `x ∈ B(v, r)` and `y ∈ B(x, ξ)` and measures how far the `y`
/// reach from `v`.
pub fn box_inclusion_check(
    space: &QuasimetricSpace,
    v: &[f64],
    r: f64,
    xi: f64,
    n: usize,
    seed: u64,
) -> Result<BoxInclusionReport, QuasimetricError> {
    let xs = space.ball_sample(v, r, n, seed)?;
    let mut inflation = 0.0f64;
    let mut n_samples = 0;
    let mut n_failures = 0;
    for (i, x) in xs.iter().enumerate() {
        let ys = if xi > 0.0 {
            space.ball_sample(x, xi, 4, seed.wrapping_add(1 + i as u64))?
        } else {
            vec![x.clone()]
        };
        for y in ys {
            match converged(space.estimate(v, &y)) {
                Some(d) => {
                    inflation = inflation.max(d);
                    n_samples += 1;
                }
                None => n_failures += 1,
            }
        }
    }
    Ok(BoxInclusionReport {
        r,
        xi,
        inflation,
        constant: if xi > 0.0 { (inflation - r) / xi } else { 0.0 },
        n_samples,
        n_failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grading::nilpotentize;
    use crate::polyalg::rint;
    use crate::structure::tests::{euclidean, example3};

    #[test]
    fn identity_is_zero() {
        let s = example3(vec![1, 1, 1]);
        let q = QuasimetricSpace::new(&s, &QuasimetricConfig::default()).unwrap();
        let e = q.estimate(&[0.1, 0.2, 0.3], &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.status, EstimateStatus::Converged);
    }

    #[test]
    fn euclidean_closed_form() {
        let s = euclidean(vec![1, 2, 3]);
        let v = [0.1, -0.2, 0.3];
        let w = [0.4, 0.05, -0.2];
        let e = rho_estimate(&s, &v, &w).unwrap();
        let expect = (0..3)
            .map(|i| (w[i] - v[i]).abs().powf(1.0 / (i + 1) as f64))
            .fold(0.0, f64::max);
        assert!((e.value - expect).abs() < 1e-12, "{} {}", e.value, expect);
    }

    #[test]
    fn heisenberg_closed_form() {
        let s = crate::grading::tests::heisenberg();
        let q = QuasimetricSpace::new(&s, &QuasimetricConfig::default()).unwrap();
        assert_eq!(q.words().len(), 3);
        for (x, y, t) in [(0.3, -0.1, 0.04), (0.01, 0.02, -0.5), (-0.7, 0.2, 0.1)] {
            let target = q.endpoint(&[x, y, t], &[0.0; 3]).unwrap();
            let e = q.estimate(&[0.0; 3], &target).unwrap();
            let expect = f64::max(f64::max(x.abs(), y.abs()), t.abs().sqrt());
            assert!((e.value - expect).abs() < 1e-9, "{} {}", e.value, expect);
        }
    }

    #[test]
    fn example3_estimates_are_certified_upper_bounds() {
        let s = example3(vec![1, 1, 1]);
        let q = QuasimetricSpace::new(&s, &QuasimetricConfig::default()).unwrap();
        assert_eq!(q.words().len(), 4);
        let pts = q.ball_sample(&[0.0; 3], 0.3, 5, 7).unwrap();
        for p in &pts {
            let e = q.estimate(&[0.0; 3], p).unwrap();
            assert_eq!(e.status, EstimateStatus::Converged);
            assert!(e.value <= 0.3 * (1.0 + 1e-3) + 1e-12, "{}", e.value);
            let end = q.endpoint(&e.controls, &[0.0; 3]).unwrap();
            let err = end.iter().zip(p).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            assert!(err <= 1e-11);
        }
    }

    #[test]
    fn ball_samples_are_reproducible_and_boxed() {
        let s = euclidean(vec![1, 2]);
        let q = QuasimetricSpace::new(&s, &QuasimetricConfig::default()).unwrap();
        let a = q.ball_sample(&[0.0, 0.0], 0.5, 20, 3).unwrap();
        assert_eq!(a, q.ball_sample(&[0.0, 0.0], 0.5, 20, 3).unwrap());
        assert!(a.iter().all(|p| p[0].abs() <= 0.5 && p[1].abs() <= 0.25));
    }

    #[test]
    fn cone_property_is_exact_on_euclidean() {
        let s = euclidean(vec![1, 2, 3]);
        let na = nilpotentize(&s, &[rint(0), rint(0), rint(0)]).unwrap();
        let d = cone_check(&na, 5, &[1.0, 0.5, 0.125], 1, &QuasimetricConfig::default()).unwrap();
        assert!(d.cone_defect <= 1e-12, "{}", d.cone_defect);
    }

    #[test]
    fn unit_weight_euclidean_box_rolls_additively() {
        let s = euclidean(vec![1, 1]);
        let q = QuasimetricSpace::new(&s, &QuasimetricConfig::default()).unwrap();
        let rep = box_inclusion_check(&q, &[0.0, 0.0], 0.2, 0.05, 10, 2).unwrap();
        assert!(rep.inflation <= 0.25 + 1e-9);
        let rep = box_inclusion_check(&q, &[0.0, 0.0], 0.2, 0.0, 10, 2).unwrap();
        assert!(rep.inflation <= 0.2 + 1e-9);
    }

    #[test]
    fn triangle_and_symmetry_on_euclidean() {
        let s = euclidean(vec![1, 1]);
        let q = QuasimetricSpace::new(&s, &QuasimetricConfig::default()).unwrap();
        let d = triangle_constant(&q, &[0.0, 0.0], 10, 0.1, 4).unwrap();
        assert!(d.triangle_q <= 1.0 + 1e-9);
        assert!(d.symmetry_defect <= 1e-12);
    }
}

