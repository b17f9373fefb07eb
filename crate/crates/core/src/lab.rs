//! Convergence-rate experiments for the local geometry near an anchor, with
//! CSV and SVG output.
//!
//! All experiments run in privileged coordinates at the anchor, where the
//! anchor is the origin and `Δ^u_ε` is the coordinate scaling `δ_ε`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grading::{nilpotentize, GradingError, NilpotentApproximation};
use crate::polyalg::{f64_to_rational, Rational};
use crate::quasimetric::{EstimateStatus, QuasimetricConfig, QuasimetricError, QuasimetricEstimate, QuasimetricSpace};
use crate::structure::WeightedSystem;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Grading(#[from] GradingError),
    #[error(transparent)]
    Quasimetric(#[from] QuasimetricError),
    #[error("report has no rows")]
    EmptyReport,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Strictly decreasing positive scales.
    pub eps_grid: Vec<f64>,
    /// Base points per scale.
    pub anchors: usize,
    /// Control tuples per base point.
    pub tuples: usize,
    pub seed: u64,
    pub quasimetric: QuasimetricConfig,
}

impl ExperimentConfig {
    /// `2^{-3}, …, 2^{-9}`.
    pub fn default_grid() -> Vec<f64> {
        (3..=9).map(|k| 2f64.powi(-k)).collect()
    }

    pub fn validate(&self) -> Result<(), LabError> {
        if self.eps_grid.is_empty() {
            return Err(LabError::Config("empty epsilon grid".into()));
        }
        if self.eps_grid.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(LabError::Config("epsilon values must be positive".into()));
        }
        if self.eps_grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err(LabError::Config("epsilon grid must be strictly decreasing".into()));
        }
        if self.anchors == 0 || self.tuples == 0 {
            return Err(LabError::Config("sample counts must be positive".into()));
        }
        Ok(())
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            eps_grid: Self::default_grid(),
            anchors: 16,
            tuples: 64,
            seed: 0,
            quasimetric: QuasimetricConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Divergence,
    LocalApprox,
    ConeRescale,
    Gromov,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Divergence => "divergence",
            ExperimentKind::LocalApprox => "local-approx",
            ExperimentKind::ConeRescale => "cone",
            ExperimentKind::Gromov => "gromov",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub epsilon: f64,
    pub value: f64,
    pub n_samples: usize,
    pub n_failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "Pass",
            Verdict::Fail => "Fail",
            Verdict::Inconclusive => "Inconclusive",
        })
    }
}

/// Measured values per scale with a log–log fit of `value ~ C ε^slope`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub kind: ExperimentKind,
    pub system: String,
    pub seed: u64,
    pub rows: Vec<ReportRow>,
    pub fit: Option<SlopeFit>,
    pub expected_exponent: f64,
    /// Expected exponent minus 0.1.
    pub threshold: f64,
    /// Values at or below this are treated as zero.
    pub floor: f64,
    /// Every value is at or below the floor: the bound holds trivially and
    /// no rate is measured.
    pub zero_signal: bool,
    pub verdict: Verdict,
}

pub const MIN_FIT_POINTS: usize = 4;
pub const MIN_R_SQUARED: f64 = 0.9;

/// Least-squares fit of `ln value` against `ln ε` over the positive values.
pub fn fit_slope(rows: &[(f64, f64)]) -> Option<SlopeFit> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|(e, v)| *e > 0.0 && *v > 0.0 && v.is_finite())
        .map(|(e, v)| (e.ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Some(SlopeFit {
        slope,
        intercept,
        r_squared,
        points: pts.len(),
    })
}

/// `d_1 / max(d_q, M)`, the gain over linear order in the approximation
/// estimates.
pub fn rate_gain(sys: &WeightedSystem) -> f64 {
    let w = sys.weights();
    let d1 = *w.first().unwrap() as f64;
    let dq = *w.last().unwrap() as f64;
    d1 / dq.max(sys.depth() as f64)
}

impl ConvergenceReport {
    fn finish(kind: ExperimentKind, system: &str, seed: u64, rows: Vec<ReportRow>, expected: f64, floor: f64) -> Self {
        let zero_signal = rows.iter().all(|r| r.value <= floor);
        let signal: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.value > floor)
            .map(|r| (r.epsilon, r.value))
            .collect();
        let fit = fit_slope(&signal);
        let threshold = expected - 0.1;
        let verdict = if zero_signal {
            Verdict::Pass
        } else {
            match &fit {
                Some(f) if f.points >= MIN_FIT_POINTS && f.r_squared >= MIN_R_SQUARED => {
                    if f.slope >= threshold {
                        Verdict::Pass
                    } else {
                        Verdict::Fail
                    }
                }
                _ => Verdict::Inconclusive,
            }
        };
        ConvergenceReport {
            kind,
            system: system.to_string(),
            seed,
            rows,
            fit,
            expected_exponent: expected,
            threshold,
            floor,
            zero_signal,
            verdict,
        }
    }

    /// Values do not increase as `ε` decreases.
    pub fn monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].value <= w[0].value)
    }

    pub fn total_failures(&self) -> usize {
        self.rows.iter().map(|r| r.n_failures).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,value,n_samples,n_failures,seed\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{},{},{}",
                r.epsilon, r.value, r.n_samples, r.n_failures, self.seed
            );
        }
        out
    }

    /// Standalone log–log plot with the fitted line.
    pub fn to_svg(&self) -> String {
        const W: f64 = 640.0;
        const H: f64 = 480.0;
        const L: f64 = 80.0;
        const R: f64 = 30.0;
        const T: f64 = 40.0;
        const B: f64 = 60.0;
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.value > 0.0)
            .map(|r| (r.epsilon.log10(), r.value.log10()))
            .collect();
        let xs: Vec<f64> = self.rows.iter().map(|r| r.epsilon.log10()).collect();
        let (mut x0, mut x1) = (xs.iter().cloned().fold(f64::INFINITY, f64::min), xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        let (mut y0, mut y1) = pts
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
        if !y0.is_finite() {
            y0 = -1.0;
            y1 = 0.0;
        }
        x0 = x0.floor();
        x1 = x1.ceil();
        y0 = y0.floor();
        y1 = y1.ceil();
        if x1 <= x0 {
            x1 = x0 + 1.0;
        }
        if y1 <= y0 {
            y1 = y0 + 1.0;
        }
        let px = |x: f64| L + (x - x0) / (x1 - x0) * (W - L - R);
        let py = |y: f64| H - B - (y - y0) / (y1 - y0) * (H - T - B);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
        );
        let _ = writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{} ({})</text>",
            W / 2.0,
            xml_escape(&self.system),
            self.kind.name()
        );
        let _ = writeln!(
            s,
            "<rect x=\"{L}\" y=\"{T}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>",
            W - L - R,
            H - T - B
        );
        for d in (x0 as i64)..=(x1 as i64) {
            let x = px(d as f64);
            let _ = writeln!(
                s,
                "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#ddd\"/><text x=\"{x:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">1e{d}</text>",
                T,
                H - B,
                H - B + 16.0
            );
        }
        for d in (y0 as i64)..=(y1 as i64) {
            let y = py(d as f64);
            let _ = writeln!(
                s,
                "<line x1=\"{L}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/><text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">1e{d}</text>",
                W - R,
                L - 6.0,
                y + 4.0
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">epsilon</text>",
            (L + W - R) / 2.0,
            H - 20.0
        );
        let _ = writeln!(
            s,
            "<text x=\"18\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.1})\">value</text>",
            (T + H - B) / 2.0,
            (T + H - B) / 2.0
        );
        for (x, y) in &pts {
            let _ = writeln!(s, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3.5\" fill=\"#1f4e9c\"/>", px(*x), py(*y));
        }
        let label = match &self.fit {
            Some(f) => {
                let l10 = std::f64::consts::LN_10;
                let at = |x: f64| (f.intercept + f.slope * x * l10) / l10;
                let (xa, xb) = (xs.iter().cloned().fold(f64::INFINITY, f64::min), xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
                let _ = writeln!(
                    s,
                    "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#c0392b\" stroke-width=\"1.5\"/>",
                    px(xa),
                    py(at(xa)),
                    px(xb),
                    py(at(xb))
                );
                format!("slope {:.4}, R^2 {:.4}, expected {:.4}", f.slope, f.r_squared, self.expected_exponent)
            }
            None if self.zero_signal => "no signal above floor".to_string(),
            None => "no fit".to_string(),
        };
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{} [{}]</text>",
            L + 10.0,
            T + 18.0,
            label,
            self.verdict
        );
        s.push_str("</svg>\n");
        s
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `<stem>.csv` and `<stem>.svg`.
pub fn emit_report(report: &ConvergenceReport, stem: &Path) -> Result<(PathBuf, PathBuf), LabError> {
    if report.rows.is_empty() {
        return Err(LabError::EmptyReport);
    }
    let csv = stem.with_extension("csv");
    let svg = stem.with_extension("svg");
    let csv_text = report.to_csv();
    let svg_text = report.to_svg();
    std::fs::write(&csv, csv_text).map_err(|source| LabError::Io {
        path: csv.clone(),
        source,
    })?;
    std::fs::write(&svg, svg_text).map_err(|source| LabError::Io {
        path: svg.clone(),
        source,
    })?;
    Ok((csv, svg))
}

/// Quasimetric machinery in privileged coordinates at the anchor.
pub struct Setup {
    pub na: NilpotentApproximation,
    /// `ρ` of the pushed-forward system.
    pub rho: QuasimetricSpace,
    /// `ρ^u`.
    pub rho_u: QuasimetricSpace,
    /// Flows `exp(Σ b_I X'_I)` and `exp(Σ b_I X̂_I)` over the words of `rho`.
    pub orig_words: QuasimetricSpace,
    pub hat_words: QuasimetricSpace,
}

impl Setup {
    pub fn new(sys: &WeightedSystem, u: &[Rational], cfg: &QuasimetricConfig) -> Result<Self, LabError> {
        let na = nilpotentize(sys, u)?;
        Self::from_approximation(na, cfg)
    }

    pub fn from_approximation(na: NilpotentApproximation, cfg: &QuasimetricConfig) -> Result<Self, LabError> {
        let rho = QuasimetricSpace::privileged(&na, cfg)?;
        let rho_u = QuasimetricSpace::nilpotent(&na, cfg)?;
        let orig_words = rho.clone();
        let hat_words = QuasimetricSpace::with_words(&na.hat_system, rho.words(), cfg)?;
        Ok(Setup {
            na,
            rho,
            rho_u,
            orig_words,
            hat_words,
        })
    }

    /// Resolution of a difference of two estimates of size about `scale`:
    /// twice the bisection gap plus the endpoint tolerance as a quasidistance.
    pub fn floor(&self, scale: f64) -> f64 {
        let c = self.rho.config();
        2.0 * (c.rel_gap * scale + c.eta)
    }

    fn origin(&self) -> Vec<f64> {
        vec![0.0; self.rho.dim()]
    }

    /// A point with `ρ^u(0, v) ≈ ε`: random scaled controls with one of
    /// them at full size.
    fn anchor_point(&self, rng: &mut ChaCha8Rng, eps: f64) -> Result<Vec<f64>, LabError> {
        let k = self.rho_u.words().len();
        let mut s: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let big = s.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(f64::MIN_POSITIVE);
        s.iter_mut().for_each(|x| *x /= big);
        let w: Vec<f64> = s
            .iter()
            .zip(self.rho_u.hdegs())
            .map(|(x, &h)| x * eps.powi(h as i32))
            .collect();
        Ok(self.rho_u.endpoint(&w, &self.origin())?)
    }
}

fn min_eps(cfg: &ExperimentConfig) -> f64 {
    cfg.eps_grid.iter().copied().fold(f64::INFINITY, f64::min)
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `ρ(v, w)` and `ρ^u(v, w)`, each estimate seeded with the other's witness.
fn paired_values(setup: &Setup, v: &[f64], w: &[f64]) -> Option<(f64, f64)> {
    let converged = |e: Result<QuasimetricEstimate, QuasimetricError>| match e {
        Ok(e) if e.status == EstimateStatus::Converged => Some(e),
        _ => None,
    };
    let a = converged(setup.rho.estimate(v, w))?;
    let hint = setup.rho_u.transfer_controls(&setup.rho, &a.controls);
    let b = converged(setup.rho_u.estimate_with_hint(v, w, Some(&hint)))?;
    let hint = setup.rho.transfer_controls(&setup.rho_u, &b.controls);
    let a2 = converged(setup.rho.estimate_with_hint(v, w, Some(&hint)))?;
    Some((a.value.min(a2.value), b.value))
}

fn value_of(space: &QuasimetricSpace, v: &[f64], w: &[f64]) -> Option<f64> {
    match space.estimate(v, w) {
        Ok(e) if e.status == EstimateStatus::Converged => Some(e.value),
        _ => None,
    }
}

/// Sampled `R(u, v, ε)`: for base points `v` at quasidistance about `ε` and
/// coefficients `|b_I| ≤ ε^{|I|_h}`, the largest of `ρ^u(y, ŷ)` and
/// `ρ(y, ŷ)` where `y = exp(Σ b_I X_I)(v)` and `ŷ = exp(Σ b_I X̂_I)(v)`.
pub fn divergence_experiment(sys: &WeightedSystem, u: &[Rational], cfg: &ExperimentConfig) -> Result<ConvergenceReport, LabError> {
    cfg.validate()?;
    let setup = Setup::new(sys, u, &cfg.quasimetric)?;
    divergence_with(&setup, cfg)
}

pub fn divergence_with(setup: &Setup, cfg: &ExperimentConfig) -> Result<ConvergenceReport, LabError> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.eps_grid.len());
    for (gi, &eps) in cfg.eps_grid.iter().enumerate() {
        let mut rng = rng_for(cfg.seed, gi as u64);
        let (mut value, mut n, mut fails) = (0.0f64, 0usize, 0usize);
        for _ in 0..cfg.anchors {
            let v = setup.anchor_point(&mut rng, eps)?;
            for _ in 0..cfg.tuples {
                let b = setup.orig_words.random_controls(&mut rng, eps);
                let pair = (setup.orig_words.endpoint(&b, &v), setup.hat_words.endpoint(&b, &v));
                let (Ok(y), Ok(yh)) = pair else {
                    fails += 1;
                    continue;
                };
                match (value_of(&setup.rho_u, &y, &yh), value_of(&setup.rho, &y, &yh)) {
                    (Some(a), Some(c)) => {
                        value = value.max(a.max(c));
                        n += 1;
                    }
                    _ => fails += 1,
                }
            }
        }
        rows.push(ReportRow {
            epsilon: eps,
            value,
            n_samples: n,
            n_failures: fails,
        });
    }
    let sys = setup.na.base_system();
    Ok(ConvergenceReport::finish(
        ExperimentKind::Divergence,
        &sys.name,
        cfg.seed,
        rows,
        1.0 + rate_gain(sys),
        setup.floor(min_eps(cfg)),
    ))
}

/// Largest `|ρ(v, w) − ρ^u(v, w)|` over pairs at quasidistance about `ε`
/// from the anchor.
pub fn local_approx_experiment(sys: &WeightedSystem, u: &[Rational], cfg: &ExperimentConfig) -> Result<ConvergenceReport, LabError> {
    cfg.validate()?;
    let setup = Setup::new(sys, u, &cfg.quasimetric)?;
    local_approx_with(&setup, cfg)
}

pub fn local_approx_with(setup: &Setup, cfg: &ExperimentConfig) -> Result<ConvergenceReport, LabError> {
    cfg.validate()?;
    let pairs = cfg.anchors * 4;
    let mut rows = Vec::with_capacity(cfg.eps_grid.len());
    for (gi, &eps) in cfg.eps_grid.iter().enumerate() {
        let mut rng = rng_for(cfg.seed, gi as u64);
        let (mut value, mut n, mut fails) = (0.0f64, 0usize, 0usize);
        for _ in 0..pairs {
            let v = setup.anchor_point(&mut rng, eps)?;
            let w = setup.anchor_point(&mut rng, eps)?;
            match paired_values(setup, &v, &w) {
                Some((a, b)) => {
                    value = value.max((a - b).abs());
                    n += 1;
                }
                None => fails += 1,
            }
        }
        rows.push(ReportRow {
            epsilon: eps,
            value,
            n_samples: n,
            n_failures: fails,
        });
    }
    let sys = setup.na.base_system();
    Ok(ConvergenceReport::finish(
        ExperimentKind::LocalApprox,
        &sys.name,
        cfg.seed,
        rows,
        1.0 + rate_gain(sys),
        setup.floor(min_eps(cfg)),
    ))
}

/// `dis(λ) = max |λ ρ(Δ_{1/λ} v, Δ_{1/λ} w) − ρ^u(v, w)|` over pairs in the
/// `ρ^u`-box of radius `1/2`, tabulated against `ε = 1/λ`.
pub fn cone_rescale_experiment(sys: &WeightedSystem, u: &[Rational], cfg: &ExperimentConfig) -> Result<ConvergenceReport, LabError> {
    cfg.validate()?;
    let setup = Setup::new(sys, u, &cfg.quasimetric)?;
    cone_rescale_with(&setup, cfg)
}

pub fn cone_rescale_with(setup: &Setup, cfg: &ExperimentConfig) -> Result<ConvergenceReport, LabError> {
    cfg.validate()?;
    let pairs = cfg.anchors * 4;
    let mut rng = rng_for(cfg.seed, u64::MAX);
    let mut base = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let v = setup.anchor_point(&mut rng, 0.5)?;
        let w = setup.anchor_point(&mut rng, 0.5)?;
        base.push((value_of(&setup.rho_u, &v, &w), v, w));
    }
    let mut rows = Vec::with_capacity(cfg.eps_grid.len());
    for &eps in &cfg.eps_grid {
        let (mut value, mut n, mut fails) = (0.0f64, 0usize, 0usize);
        for (r, v, w) in &base {
            let Some(r) = r else {
                fails += 1;
                continue;
            };
            let dv = setup.na.chart.scale_coordinates(v, eps);
            let dw = setup.na.chart.scale_coordinates(w, eps);
            match value_of(&setup.rho, &dv, &dw) {
                Some(d) => {
                    value = value.max((d / eps - r).abs());
                    n += 1;
                }
                None => fails += 1,
            }
        }
        rows.push(ReportRow {
            epsilon: eps,
            value,
            n_samples: n,
            n_failures: fails,
        });
    }
    let sys = setup.na.base_system();
    let floor = setup.floor(1.0);
    Ok(ConvergenceReport::finish(
        ExperimentKind::ConeRescale,
        &sys.name,
        cfg.seed,
        rows,
        rate_gain(sys),
        floor,
    ))
}

/// Sup-norm deviation of `ε^{d_k} δ_ε^* X'_k` from `X̂_k` on the unit box.
pub fn gromov_convergence_experiment(sys: &WeightedSystem, u: &[Rational], cfg: &ExperimentConfig) -> Result<ConvergenceReport, LabError> {
    cfg.validate()?;
    let na = nilpotentize(sys, u)?;
    gromov_with(&na, cfg)
}

pub fn gromov_with(na: &NilpotentApproximation, cfg: &ExperimentConfig) -> Result<ConvergenceReport, LabError> {
    cfg.validate()?;
    let base = na.base_system();
    let weights = na.weights();
    let n = base.dim();
    let mut rng = rng_for(cfg.seed, u64::MAX - 1);
    let mut pts: Vec<Vec<f64>> = (0..cfg.anchors * cfg.tuples)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect())
        .collect();
    // Corners of the box.
    for mask in 0..(1u32 << n.min(10)) {
        pts.push((0..n).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).collect());
    }
    let hats = na.hat_system.generators();
    let mut rows = Vec::with_capacity(cfg.eps_grid.len());
    for &eps in &cfg.eps_grid {
        let e = f64_to_rational(eps).ok_or_else(|| LabError::Config(format!("bad epsilon {eps}")))?;
        let mut value = 0.0f64;
        for (k, g) in base.generators().iter().enumerate() {
            let scale = crate::polyalg::rational_pow(&e, base.weights()[k] as i64);
            let diff = g
                .dilation_pullback(weights, &e)
                .scale(&scale)
                .sub(&hats[k])
                .map_err(GradingError::from)?;
            if diff.is_zero() {
                continue;
            }
            for p in &pts {
                let d = diff.evaluate_f64(p).map_err(GradingError::from)?;
                value = d.iter().fold(value, |a, x| a.max(x.abs()));
            }
        }
        rows.push(ReportRow {
            epsilon: eps,
            value,
            n_samples: pts.len(),
            n_failures: 0,
        });
    }
    Ok(ConvergenceReport::finish(
        ExperimentKind::Gromov,
        &base.name,
        cfg.seed,
        rows,
        1.0,
        1e-12,
    ))
}

pub fn run_experiment(kind: ExperimentKind, sys: &WeightedSystem, u: &[Rational], cfg: &ExperimentConfig) -> Result<ConvergenceReport, LabError> {
    match kind {
        ExperimentKind::Divergence => divergence_experiment(sys, u, cfg),
        ExperimentKind::LocalApprox => local_approx_experiment(sys, u, cfg),
        ExperimentKind::ConeRescale => cone_rescale_experiment(sys, u, cfg),
        ExperimentKind::Gromov => gromov_convergence_experiment(sys, u, cfg),
    }
}
