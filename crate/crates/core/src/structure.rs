//! Weighted commutators, filtration dimensions, regularity and adapted frames.

use std::sync::Arc;

use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::polyalg::linalg::IndependentSet;
use crate::polyalg::{f64_to_rational, rational_to_f64, CoordinateChart, PolyError, Polynomial, Rational, VectorField};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StructureError {
    #[error("weighted system needs at least one generator")]
    NoGenerators,
    #[error("{fields} fields but {weights} weights")]
    WeightCountMismatch { fields: usize, weights: usize },
    #[error("weights must be positive and nondecreasing, got {0:?}")]
    UnsortedWeights(Vec<u32>),
    #[error("anchor has {found} coordinates, chart has {expected}")]
    AnchorDimension { expected: usize, found: usize },
    #[error("commutators of degree <= {depth} span only {rank} of {dim} directions at {point}")]
    SpanDeficient {
        depth: u32,
        rank: usize,
        dim: usize,
        point: String,
    },
    #[error("declared depth {declared} is below the minimal depth {minimal}")]
    DepthTooSmall { declared: u32, minimal: u32 },
    #[error("point coordinate {0} is not finite")]
    NonFinitePoint(f64),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Largest depth tried when the depth is computed from the anchor.
pub const MAX_DEPTH: u32 = 12;

/// Generators `X_1..X_q` with weights `d_1 ≤ … ≤ d_q` and depth `M`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSystem {
    pub name: String,
    chart: Arc<CoordinateChart>,
    generators: Vec<VectorField>,
    weights: Vec<u32>,
    depth: u32,
    anchor: Vec<Rational>,
}

/// Right-nested word `[X_{i1}, [X_{i2}, … X_{ik}]]` with its expanded field.
#[derive(Clone, Debug, PartialEq)]
pub struct CommutatorWord {
    pub word: Vec<usize>,
    pub hdeg: u32,
    pub field: VectorField,
    pub is_zero: bool,
}

impl CommutatorWord {
    pub fn len(&self) -> usize {
        self.word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word.is_empty()
    }

    /// `X1`, `(X1 X2)`, `(X1 (X2 X3))`, … with 1-based generator labels.
    pub fn label(&self) -> String {
        word_label(&self.word)
    }
}

pub fn word_label(word: &[usize]) -> String {
    match word {
        [] => String::new(),
        [i] => format!("X{}", i + 1),
        [i, rest @ ..] => format!("(X{} {})", i + 1, word_label(rest)),
    }
}

fn sort_key(w: &CommutatorWord) -> (u32, usize, Vec<usize>) {
    (w.hdeg, w.word.len(), w.word.clone())
}

impl WeightedSystem {
    /// Validates the data and fixes the depth: the minimal one at the anchor
    /// when `depth` is `None`, otherwise the declared value (which must not be
    /// below the minimal one).
    pub fn new(
        name: impl Into<String>,
        chart: Arc<CoordinateChart>,
        generators: Vec<VectorField>,
        weights: Vec<u32>,
        anchor: Vec<Rational>,
        depth: Option<u32>,
    ) -> Result<Self, StructureError> {
        if generators.is_empty() {
            return Err(StructureError::NoGenerators);
        }
        if generators.len() != weights.len() {
            return Err(StructureError::WeightCountMismatch {
                fields: generators.len(),
                weights: weights.len(),
            });
        }
        if weights.contains(&0) || weights.windows(2).any(|p| p[0] > p[1]) {
            return Err(StructureError::UnsortedWeights(weights));
        }
        if anchor.len() != chart.dim() {
            return Err(StructureError::AnchorDimension {
                expected: chart.dim(),
                found: anchor.len(),
            });
        }
        for g in &generators {
            if *g.chart() != chart {
                return Err(PolyError::ChartMismatch.into());
            }
        }
        let mut sys = WeightedSystem {
            name: name.into(),
            chart,
            generators,
            weights,
            depth: MAX_DEPTH,
            anchor,
        };
        let minimal = sys.minimal_depth()?;
        sys.depth = match depth {
            None => minimal,
            Some(d) if d < minimal => {
                return Err(StructureError::DepthTooSmall {
                    declared: d,
                    minimal,
                })
            }
            Some(d) => d,
        };
        Ok(sys)
    }

    fn minimal_depth(&self) -> Result<u32, StructureError> {
        let n = self.dim();
        let mut by_deg: Vec<Vec<CommutatorWord>> = vec![Vec::new()];
        let mut set = IndependentSet::new();
        for k in 1..=MAX_DEPTH {
            let level = word_level(&self.generators, &self.weights, &by_deg, k, false);
            for w in level.iter().filter(|w| !w.is_zero) {
                set.insert(&w.field.evaluate(&self.anchor)?);
            }
            by_deg.push(level);
            if set.rank() == n {
                return Ok(k);
            }
        }
        Err(StructureError::SpanDeficient {
            depth: MAX_DEPTH,
            rank: set.rank(),
            dim: n,
            point: format_point(&self.anchor),
        })
    }

    pub fn chart(&self) -> &Arc<CoordinateChart> {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn generators(&self) -> &[VectorField] {
        &self.generators
    }

    pub fn weights(&self) -> &[u32] {
        &self.weights
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn anchor(&self) -> &[Rational] {
        &self.anchor
    }

    pub fn anchor_f64(&self) -> Vec<f64> {
        self.anchor.iter().map(rational_to_f64).collect()
    }

    /// Same generators and weights with another anchor; the depth is recomputed.
    pub fn with_anchor(&self, anchor: Vec<Rational>) -> Result<Self, StructureError> {
        WeightedSystem::new(
            self.name.clone(),
            self.chart.clone(),
            self.generators.clone(),
            self.weights.clone(),
            anchor,
            None,
        )
    }

    /// Same data, keeping the given depth (no minimality check).
    pub(crate) fn from_parts_unchecked(
        name: String,
        chart: Arc<CoordinateChart>,
        generators: Vec<VectorField>,
        weights: Vec<u32>,
        anchor: Vec<Rational>,
        depth: u32,
    ) -> Self {
        WeightedSystem {
            name,
            chart,
            generators,
            weights,
            depth,
            anchor,
        }
    }
}

pub fn format_point(p: &[Rational]) -> String {
    let parts: Vec<String> = p.iter().map(|x| x.to_string()).collect();
    format!("({})", parts.join(", "))
}

/// Exact rational point from floats (each `f64` is a dyadic rational).
pub fn rational_point(p: &[f64]) -> Result<Vec<Rational>, StructureError> {
    p.iter()
        .map(|&x| f64_to_rational(x).ok_or(StructureError::NonFinitePoint(x)))
        .collect()
}

/// Words of homogeneous degree `h`, given the lower levels. Zero inner words
/// are skipped unless `keep_zero`.
fn word_level(generators: &[VectorField], weights: &[u32], by_deg: &[Vec<CommutatorWord>], h: u32, keep_zero: bool) -> Vec<CommutatorWord> {
    let mut level = Vec::new();
    for (i, g) in generators.iter().enumerate() {
        let d = weights[i];
        if d > h {
            continue;
        }
        if d == h {
            level.push(CommutatorWord {
                word: vec![i],
                hdeg: h,
                field: g.clone(),
                is_zero: g.is_zero(),
            });
            continue;
        }
        for inner in &by_deg[(h - d) as usize] {
            if inner.is_zero && !keep_zero {
                continue;
            }
            let field = if inner.is_zero || g.is_zero() {
                VectorField::zero(g.chart().clone())
            } else {
                g.bracket(&inner.field).expect("same chart")
            };
            let mut word = vec![i];
            word.extend(&inner.word);
            let is_zero = field.is_zero();
            level.push(CommutatorWord {
                word,
                hdeg: h,
                field,
                is_zero,
            });
        }
    }
    level
}

fn enumerate_words(generators: &[VectorField], weights: &[u32], max_hdeg: u32) -> Vec<CommutatorWord> {
    // by_deg[h] holds the words of homogeneous degree h.
    let mut by_deg: Vec<Vec<CommutatorWord>> = vec![Vec::new(); max_hdeg as usize + 1];
    for h in 1..=max_hdeg {
        by_deg[h as usize] = word_level(generators, weights, &by_deg, h, true);
    }
    let mut all: Vec<CommutatorWord> = by_deg.into_iter().flatten().collect();
    all.sort_by_key(sort_key);
    all
}

/// All right-nested words with `|I|_h ≤ M`, sorted by (degree, length, lex).
/// Identically zero words are kept and flagged.
pub fn enumerate_commutators(sys: &WeightedSystem) -> Vec<CommutatorWord> {
    enumerate_words(&sys.generators, &sys.weights, sys.depth)
}

/// Nonzero words, dropping any word whose field is a scalar multiple of an
/// earlier kept word of no larger degree. These are the control directions
/// of the quasimetrics.
pub fn distinct_words(sys: &WeightedSystem) -> Vec<CommutatorWord> {
    let mut kept: Vec<CommutatorWord> = Vec::new();
    for w in enumerate_commutators(sys) {
        if w.is_zero {
            continue;
        }
        let dup = kept
            .iter()
            .any(|k| k.hdeg <= w.hdeg && w.field.scalar_multiple_of(&k.field).is_some());
        if !dup {
            kept.push(w);
        }
    }
    kept
}

#[derive(Clone, Debug, PartialEq)]
pub struct FiltrationSnapshot {
    pub point: Vec<Rational>,
    /// `dims[k-1] = dim H_k(point)` for `k = 1..=M`.
    pub dims: Vec<usize>,
    /// Words whose values span `H_k(point)`, nested: the first `dims[k-1]` entries.
    pub witnesses: Vec<Vec<usize>>,
}

fn dims_at(words: &[CommutatorWord], depth: u32, p: &[Rational]) -> Result<(Vec<usize>, Vec<Vec<usize>>), StructureError> {
    let mut set = IndependentSet::new();
    let mut witnesses = Vec::new();
    let mut dims = Vec::with_capacity(depth as usize);
    let mut idx = 0;
    for k in 1..=depth {
        while idx < words.len() && words[idx].hdeg <= k {
            if !words[idx].is_zero && set.insert(&words[idx].field.evaluate(p)?) {
                witnesses.push(words[idx].word.clone());
            }
            idx += 1;
        }
        dims.push(set.rank());
    }
    Ok((dims, witnesses))
}

/// `n_k = dim H_k(p)` for `k = 1..M`, with spanning witnesses. A point where
/// the commutators do not span is a structural defect.
pub fn filtration_dims(sys: &WeightedSystem, p: &[Rational]) -> Result<FiltrationSnapshot, StructureError> {
    if p.len() != sys.dim() {
        return Err(StructureError::AnchorDimension {
            expected: sys.dim(),
            found: p.len(),
        });
    }
    let words = enumerate_commutators(sys);
    let (dims, witnesses) = dims_at(&words, sys.depth, p)?;
    let top = *dims.last().unwrap_or(&0);
    if top < sys.dim() {
        return Err(StructureError::SpanDeficient {
            depth: sys.depth,
            rank: top,
            dim: sys.dim(),
            point: format_point(p),
        });
    }
    Ok(FiltrationSnapshot {
        point: p.to_vec(),
        dims,
        witnesses,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regularity {
    Regular,
    Nonregular,
    Undetermined,
}

impl std::fmt::Display for Regularity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regularity::Regular => "Regular",
            Regularity::Nonregular => "Nonregular",
            Regularity::Undetermined => "Undetermined",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifyConfig {
    pub probe_radius: f64,
    pub probe_count: usize,
    pub seed: u64,
    /// Maximum number of polynomial minors examined per degree.
    pub minor_budget: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            probe_radius: 1e-2,
            probe_count: 64,
            seed: 0,
            minor_budget: 20_000,
        }
    }
}

/// Rational points drawn uniformly from the Euclidean ball of radius `r` about `p`.
pub fn ball_probes(p: &[Rational], r: f64, count: usize, seed: u64) -> Vec<Vec<Rational>> {
    let n = p.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let dir: Vec<f64> = (0..n)
                .map(|_| {
                    // Box–Muller normal deviates give a uniform direction.
                    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                    let u2: f64 = rng.gen::<f64>();
                    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
                })
                .collect();
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            let rad = r * rng.gen::<f64>().powf(1.0 / n as f64);
            p.iter()
                .zip(&dir)
                .map(|(c, d)| c + f64_to_rational(rad * d / norm).expect("finite"))
                .collect()
        })
        .collect()
}

/// Whether all `size`-minors of the polynomial matrix with the given columns
/// vanish identically; `None` when the budget is exceeded.
fn minors_vanish(columns: &[Vec<Polynomial>], size: usize, budget: usize) -> Option<bool> {
    let nrows = columns.first().map(|c| c.len()).unwrap_or(0);
    if size > nrows || size > columns.len() {
        return Some(true);
    }
    let rows_sets = combinations(nrows, size);
    let col_sets = combinations(columns.len(), size);
    if rows_sets.len().saturating_mul(col_sets.len()) > budget {
        return None;
    }
    for rs in &rows_sets {
        for cs in &col_sets {
            let m: Vec<Vec<Polynomial>> = rs
                .iter()
                .map(|&r| cs.iter().map(|&c| columns[c][r].clone()).collect())
                .collect();
            if !determinant(&m).is_zero() {
                return Some(false);
            }
        }
    }
    Some(true)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Laplace expansion along the first row.
pub(crate) fn determinant(m: &[Vec<Polynomial>]) -> Polynomial {
    let n = m.len();
    let nv = m[0][0].nvars();
    match n {
        1 => m[0][0].clone(),
        2 => &(&m[0][0] * &m[1][1]) - &(&m[0][1] * &m[1][0]),
        _ => {
            let mut acc = Polynomial::zero(nv);
            for j in 0..n {
                if m[0][j].is_zero() {
                    continue;
                }
                let minor: Vec<Vec<Polynomial>> = m[1..]
                    .iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter(|(c, _)| *c != j)
                            .map(|(_, p)| p.clone())
                            .collect()
                    })
                    .collect();
                let term = &m[0][j] * &determinant(&minor);
                acc = if j % 2 == 0 { &acc + &term } else { &acc - &term };
            }
            acc
        }
    }
}

/// Semi-decision of regularity at `p`.
///
/// Probes in the ball detect a change of the dimension vector directly. A
/// point is certified regular when, for every `k` with `n_k < N`, either
/// `n_k` is the free-algebra maximum or every `(n_k+1)`-minor of the
/// commutator matrix vanishes identically. A minor that is not identically
/// zero but vanishes at `p` proves nonregularity.
pub fn classify_point(sys: &WeightedSystem, p: &[Rational], cfg: &ClassifyConfig) -> Result<Regularity, StructureError> {
    if p.len() != sys.dim() {
        return Err(StructureError::AnchorDimension {
            expected: sys.dim(),
            found: p.len(),
        });
    }
    let words = enumerate_commutators(sys);
    let (dims, _) = dims_at(&words, sys.depth, p)?;
    for probe in ball_probes(p, cfg.probe_radius, cfg.probe_count, cfg.seed) {
        let (d, _) = dims_at(&words, sys.depth, &probe)?;
        if d != dims {
            return Ok(Regularity::Nonregular);
        }
    }
    let n = sys.dim();
    let free = crate::freelift::free_dimensions(sys.weights(), sys.depth());
    let mut undetermined = false;
    for k in 1..=sys.depth {
        let nk = dims[k as usize - 1];
        if nk == n || nk == free[k as usize - 1] {
            continue;
        }
        // Columns: distinct nonzero word fields of degree <= k.
        let mut columns: Vec<Vec<Polynomial>> = Vec::new();
        for w in words.iter().filter(|w| w.hdeg <= k && !w.is_zero) {
            let dup = columns.iter().any(|c| {
                VectorField::new(sys.chart.clone(), c.clone())
                    .ok()
                    .and_then(|f| w.field.scalar_multiple_of(&f))
                    .is_some()
            });
            if !dup {
                columns.push(w.field.components().to_vec());
            }
        }
        match minors_vanish(&columns, nk + 1, cfg.minor_budget) {
            Some(true) => {}
            Some(false) => return Ok(Regularity::Nonregular),
            None => undetermined = true,
        }
    }
    Ok(if undetermined {
        Regularity::Undetermined
    } else {
        Regularity::Regular
    })
}

/// Basis `Y_1..Y_N` of commutators at a point with minimal total weight, then
/// minimal total word length.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptedFrame {
    pub point: Vec<Rational>,
    pub words: Vec<CommutatorWord>,
    pub frame_weights: Vec<u32>,
    /// True when another candidate of the same degree and length could have
    /// replaced a selected entry; the choice then follows the lexicographic
    /// tie-break on words.
    pub tie_broken: bool,
}

impl AdaptedFrame {
    pub fn weight_sum(&self) -> u32 {
        self.frame_weights.iter().sum()
    }

    pub fn length_sum(&self) -> usize {
        self.words.iter().map(|w| w.word.len()).sum()
    }

    pub fn fields(&self) -> Vec<VectorField> {
        self.words.iter().map(|w| w.field.clone()).collect()
    }
}

/// Greedy selection over nonzero words in (degree, length, lex) order. On the
/// linear matroid of word values this yields a basis whose sorted key vector
/// is componentwise minimal, hence minimal weight sum and then length sum.
pub fn adapted_frame(sys: &WeightedSystem, u: &[Rational]) -> Result<AdaptedFrame, StructureError> {
    filtration_dims(sys, u)?;
    let words = enumerate_commutators(sys);
    let mut set = IndependentSet::new();
    let mut chosen: Vec<CommutatorWord> = Vec::new();
    let mut rejected_values: Vec<(u32, usize, Vec<Rational>)> = Vec::new();
    for w in words.into_iter().filter(|w| !w.is_zero) {
        let v = w.field.evaluate(u)?;
        if v.iter().all(Zero::is_zero) {
            continue;
        }
        if set.insert(&v) {
            chosen.push(w);
            if set.rank() == sys.dim() {
                break;
            }
        } else {
            rejected_values.push((w.hdeg, w.word.len(), v));
        }
    }
    // A rejected word ties with a chosen one when, with the same (degree,
    // length), it is independent of everything strictly before that class.
    let mut tie_broken = false;
    for (h, l, v) in &rejected_values {
        let mut before = IndependentSet::new();
        for c in chosen.iter().filter(|c| (c.hdeg, c.word.len()) < (*h, *l)) {
            before.insert(&c.field.evaluate(u)?);
        }
        let same_class = chosen.iter().any(|c| (c.hdeg, c.word.len()) == (*h, *l));
        if same_class && !before.contains(v) {
            tie_broken = true;
            break;
        }
    }
    let frame_weights = chosen.iter().map(|w| w.hdeg).collect();
    Ok(AdaptedFrame {
        point: u.to_vec(),
        words: chosen,
        frame_weights,
        tie_broken,
    })
}
