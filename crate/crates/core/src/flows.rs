//! Exponential maps of polynomial vector fields.
//!
//! Flows are summed exactly when the Lie series terminates (nilpotent fields)
//! and otherwise integrated with an adaptive Dormand–Prince 5(4) scheme.

use thiserror::Error;

use crate::polyalg::{apply_derivation, CompiledPoly, Polynomial, Rational, VectorField};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("integration step underflow at t = {0}")]
    StepUnderflow(f64),
    #[error("trajectory left the trust box (|x|_inf > {0})")]
    LeftTrustBox(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite state")]
    NonFinite,
    #[error("empty product")]
    EmptyProduct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowMethod {
    ExactSeries,
    Numeric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub endpoint: Vec<f64>,
    pub method: FlowMethod,
    pub estimated_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Half width of the coordinate box the trajectory must stay in.
    pub trust_half_width: f64,
    /// Highest power of the field tried when looking for a terminating series.
    pub series_cap: usize,
    /// Give up on the symbolic endpoint map beyond this many terms.
    pub max_terms: usize,
    pub max_steps: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            rtol: 1e-12,
            atol: 1e-14,
            trust_half_width: 10.0,
            series_cap: 8,
            max_terms: 20_000,
            max_steps: 200_000,
        }
    }
}

impl FlowConfig {
    /// Series cap `2M + 2` used for systems of depth `m`.
    pub fn for_depth(m: u32) -> Self {
        FlowConfig {
            series_cap: 2 * m as usize + 2,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
enum Mode {
    Exact {
        endpoint: Vec<CompiledPoly>,
        /// `jac[i][k] = ∂E_i/∂w_k`
        jac: Vec<Vec<CompiledPoly>>,
    },
    Numeric {
        fields: Vec<Vec<CompiledPoly>>,
    },
}

/// Unit-time flow of `Σ w_k X_k` as a function of the controls `w` and the
/// initial point, prepared once for repeated evaluation.
#[derive(Debug, Clone)]
pub struct CombinationFlow {
    dim: usize,
    ncontrols: usize,
    mode: Mode,
    cfg: FlowConfig,
}

/// Symbolic endpoint map `Σ_n A^n x_i / n!` with `A = Σ w_k X_k`, as
/// polynomials in `(x_1..x_N, w_1..w_K)`, if the series terminates.
pub fn symbolic_endpoint(fields: &[VectorField], cap: usize, max_terms: usize) -> Option<Vec<Polynomial>> {
    let n = fields.first()?.dim();
    let k = fields.len();
    let total = n + k;
    let mut a: Vec<Polynomial> = vec![Polynomial::zero(total); n];
    for (idx, f) in fields.iter().enumerate() {
        let w = Polynomial::var(total, n + idx);
        for (j, c) in f.components().iter().enumerate() {
            if !c.is_zero() {
                a[j] = a[j].add_ref(&c.extend(k).mul_ref(&w));
            }
        }
    }
    let mut out = Vec::with_capacity(n);
    let mut budget = 0usize;
    for i in 0..n {
        let mut term = Polynomial::var(total, i);
        let mut acc = term.clone();
        let mut order = 0u64;
        loop {
            term = apply_derivation(&a, &term);
            order += 1;
            if term.is_zero() {
                break;
            }
            if order as usize > cap {
                return None;
            }
            term = term.scale(&Rational::new(1.into(), order.into()));
            acc = acc.add_ref(&term);
            budget += term.len();
            if budget > max_terms {
                return None;
            }
        }
        out.push(acc);
    }
    Some(out)
}

impl CombinationFlow {
    pub fn new(fields: &[VectorField], cfg: &FlowConfig) -> Self {
        let dim = fields.first().map(|f| f.dim()).unwrap_or(0);
        let k = fields.len();
        let mode = match symbolic_endpoint(fields, cfg.series_cap, cfg.max_terms) {
            Some(map) => {
                let jac = map
                    .iter()
                    .map(|e| (0..k).map(|c| CompiledPoly::new(&e.derivative(dim + c))).collect())
                    .collect();
                Mode::Exact {
                    endpoint: map.iter().map(CompiledPoly::new).collect(),
                    jac,
                }
            }
            None => Mode::Numeric {
                fields: fields
                    .iter()
                    .map(|f| f.components().iter().map(CompiledPoly::new).collect())
                    .collect(),
            },
        };
        CombinationFlow {
            dim,
            ncontrols: k,
            mode,
            cfg: cfg.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ncontrols(&self) -> usize {
        self.ncontrols
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.mode, Mode::Exact { .. })
    }

    fn check(&self, w: &[f64], p: &[f64]) -> Result<(), FlowError> {
        if p.len() != self.dim {
            return Err(FlowError::DimensionMismatch {
                expected: self.dim,
                found: p.len(),
            });
        }
        if w.len() != self.ncontrols {
            return Err(FlowError::DimensionMismatch {
                expected: self.ncontrols,
                found: w.len(),
            });
        }
        Ok(())
    }

    fn in_box(&self, x: &[f64]) -> Result<(), FlowError> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::NonFinite);
        }
        if x.iter().any(|v| v.abs() > self.cfg.trust_half_width) {
            return Err(FlowError::LeftTrustBox(self.cfg.trust_half_width));
        }
        Ok(())
    }

    pub fn endpoint(&self, w: &[f64], p: &[f64]) -> Result<FlowResult, FlowError> {
        self.check(w, p)?;
        match &self.mode {
            Mode::Exact { endpoint, .. } => {
                let arg: Vec<f64> = p.iter().chain(w).copied().collect();
                let x: Vec<f64> = endpoint.iter().map(|e| e.eval(&arg)).collect();
                self.in_box(&x)?;
                Ok(FlowResult {
                    endpoint: x,
                    method: FlowMethod::ExactSeries,
                    estimated_error: 0.0,
                })
            }
            Mode::Numeric { fields } => {
                let rhs = |x: &[f64], out: &mut [f64]| {
                    out.iter_mut().for_each(|o| *o = 0.0);
                    for (wk, comps) in w.iter().zip(fields) {
                        if *wk == 0.0 {
                            continue;
                        }
                        for (o, c) in out.iter_mut().zip(comps) {
                            if !c.is_zero() {
                                *o += wk * c.eval(x);
                            }
                        }
                    }
                };
                let (x, err) = dopri5(rhs, p, 1.0, &self.cfg)?;
                Ok(FlowResult {
                    endpoint: x,
                    method: FlowMethod::Numeric,
                    estimated_error: err,
                })
            }
        }
    }

    /// Endpoint together with `∂E/∂w` (row per coordinate).
    pub fn endpoint_and_jacobian(&self, w: &[f64], p: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>), FlowError> {
        self.check(w, p)?;
        match &self.mode {
            Mode::Exact { endpoint, jac } => {
                let arg: Vec<f64> = p.iter().chain(w).copied().collect();
                let x: Vec<f64> = endpoint.iter().map(|e| e.eval(&arg)).collect();
                self.in_box(&x)?;
                let j = jac
                    .iter()
                    .map(|row| row.iter().map(|d| d.eval(&arg)).collect())
                    .collect();
                Ok((x, j))
            }
            Mode::Numeric { .. } => {
                let x = self.endpoint(w, p)?.endpoint;
                let mut j = vec![vec![0.0; self.ncontrols]; self.dim];
                for k in 0..self.ncontrols {
                    let h = 1e-6 * (1.0 + w[k].abs());
                    let mut wp = w.to_vec();
                    let mut wm = w.to_vec();
                    wp[k] += h;
                    wm[k] -= h;
                    let xp = self.endpoint(&wp, p)?.endpoint;
                    let xm = self.endpoint(&wm, p)?.endpoint;
                    for i in 0..self.dim {
                        j[i][k] = (xp[i] - xm[i]) / (2.0 * h);
                    }
                }
                Ok((x, j))
            }
        }
    }
}

/// Time-`time` flow of a single field.
pub fn flow(x: &VectorField, p: &[f64], time: f64, cfg: &FlowConfig) -> Result<FlowResult, FlowError> {
    CombinationFlow::new(std::slice::from_ref(x), cfg).endpoint(&[time], p)
}

/// Unit-time flow of `Σ coeffs[k] fields[k]` from `p`.
pub fn exp_combination(
    coeffs: &[f64],
    fields: &[VectorField],
    p: &[f64],
    cfg: &FlowConfig,
) -> Result<FlowResult, FlowError> {
    if coeffs.len() != fields.len() {
        return Err(FlowError::DimensionMismatch {
            expected: fields.len(),
            found: coeffs.len(),
        });
    }
    if fields.is_empty() {
        return Ok(FlowResult {
            endpoint: p.to_vec(),
            method: FlowMethod::ExactSeries,
            estimated_error: 0.0,
        });
    }
    CombinationFlow::new(fields, cfg).endpoint(coeffs, p)
}

/// `exp(c_1 X_1) ∘ exp(c_2 X_2) ∘ … ∘ exp(c_n X_n)(p)`: the last step acts first.
pub fn exp_product(steps: &[(f64, VectorField)], p: &[f64], cfg: &FlowConfig) -> Result<FlowResult, FlowError> {
    if steps.is_empty() {
        return Err(FlowError::EmptyProduct);
    }
    let mut x = p.to_vec();
    let mut err = 0.0;
    let mut method = FlowMethod::ExactSeries;
    for (c, f) in steps.iter().rev() {
        let r = flow(f, &x, *c, cfg)?;
        if r.method == FlowMethod::Numeric {
            method = FlowMethod::Numeric;
        }
        err += r.estimated_error;
        x = r.endpoint;
    }
    Ok(FlowResult {
        endpoint: x,
        method,
        estimated_error: err,
    })
}

// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates the autonomous system `x' = f(x)` from `x0` over `[0, t_end]`.
/// Returns the endpoint and the accumulated local error estimate.
pub fn dopri5<F>(f: F, x0: &[f64], t_end: f64, cfg: &FlowConfig) -> Result<(Vec<f64>, f64), FlowError>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    if t_end == 0.0 {
        return Ok((x, 0.0));
    }
    let dir = t_end.signum();
    let span = t_end.abs();
    let mut t = 0.0;
    let mut h = (span * 0.01).min(0.1).max(1e-6 * span);
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut total_err = 0.0;
    f(&x, &mut k[0]);
    let mut steps = 0usize;
    while t < span {
        steps += 1;
        if steps > cfg.max_steps {
            return Err(FlowError::StepUnderflow(t * dir));
        }
        if t + h > span {
            h = span - t;
        }
        for s in 1..7 {
            for i in 0..n {
                let mut acc = x[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += dir * h * A[s][j] * kj[i];
                }
                tmp[i] = acc;
            }
            let (head, tail) = k.split_at_mut(s);
            let _ = head;
            f(&tmp, &mut tail[0]);
        }
        let mut err = 0.0f64;
        let mut x_new = vec![0.0; n];
        for i in 0..n {
            let mut hi = x[i];
            let mut lo = x[i];
            for s in 0..7 {
                hi += dir * h * B5[s] * k[s][i];
                lo += dir * h * B4[s] * k[s][i];
            }
            x_new[i] = hi;
            let sc = cfg.atol + cfg.rtol * x[i].abs().max(hi.abs());
            err = err.max(((hi - lo) / sc).abs());
        }
        if !err.is_finite() {
            h *= 0.25;
            if h < 1e-14 * span {
                return Err(FlowError::NonFinite);
            }
            continue;
        }
        if err <= 1.0 {
            let local: f64 = (0..n)
                .map(|i| {
                    let lo: f64 = x[i] + (0..7).map(|s| dir * h * B4[s] * k[s][i]).sum::<f64>();
                    (x_new[i] - lo).abs()
                })
                .fold(0.0, f64::max);
            total_err += local;
            t += h;
            x = x_new;
            if x.iter().any(|v| v.abs() > cfg.trust_half_width) {
                return Err(FlowError::LeftTrustBox(cfg.trust_half_width));
            }
            // FSAL: last stage is the derivative at the new point.
            let last = k[6].clone();
            k[0] = last;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < 1e-14 * span && t < span {
            return Err(FlowError::StepUnderflow(t * dir));
        }
    }
    Ok((x, total_err))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::{rat, CoordinateChart, PolyVectorField};
    use std::sync::Arc;

    fn heis() -> (Arc<CoordinateChart>, Vec<VectorField>) {
        let ch = CoordinateChart::new(vec!["x", "y", "t"]).unwrap();
        let x = Polynomial::var(3, 0);
        let y = Polynomial::var(3, 1);
        let o = Polynomial::one(3);
        let z = Polynomial::zero(3);
        let f = |c: Vec<Polynomial>| PolyVectorField::new(ch.clone(), c).unwrap();
        let fields = vec![
            f(vec![o.clone(), z.clone(), y.scale(&rat(-1, 2))]),
            f(vec![z.clone(), o.clone(), x.scale(&rat(1, 2))]),
            f(vec![z.clone(), z, o]),
        ];
        (ch, fields)
    }

    #[test]
    fn constant_field_translates() {
        let ch = CoordinateChart::new(vec!["x", "y"]).unwrap();
        let dx = VectorField::coordinate(ch, 0);
        let r = flow(&dx, &[0.0, 0.0], 1.0, &FlowConfig::default()).unwrap();
        assert_eq!(r.endpoint, vec![1.0, 0.0]);
        assert_eq!(r.method, FlowMethod::ExactSeries);
        assert_eq!(r.estimated_error, 0.0);
    }

    #[test]
    fn linear_field_matches_exponential() {
        let ch = CoordinateChart::new(vec!["x"]).unwrap();
        let f = VectorField::new(ch, vec![Polynomial::var(1, 0)]).unwrap();
        for t in [0.5, 1.0, -0.7, 2.0] {
            let r = flow(&f, &[1.0], t, &FlowConfig::default()).unwrap();
            assert_eq!(r.method, FlowMethod::Numeric);
            let exact = f64::exp(t);
            assert!((r.endpoint[0] - exact).abs() <= 1e-11 * exact, "{t}: {:?}", r.endpoint);
        }
    }

    #[test]
    fn heisenberg_combination_reaches_its_coefficients() {
        let (_, fields) = heis();
        let cfg = FlowConfig::default();
        let r = exp_combination(&[0.3, -0.7, 0.2], &fields, &[0.0; 3], &cfg).unwrap();
        for (a, b) in r.endpoint.iter().zip([0.3, -0.7, 0.2]) {
            assert!((a - b).abs() < 1e-15);
        }
        let zero = exp_combination(&[0.0; 3], &fields, &[0.1, 0.2, 0.3], &cfg).unwrap();
        assert_eq!(zero.endpoint, vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn flow_order_differs_by_commutator() {
        let (_, f) = heis();
        let cfg = FlowConfig::default();
        let (s, t) = (0.6, -0.45);
        let a = exp_product(&[(s, f[1].clone()), (t, f[0].clone())], &[0.0; 3], &cfg).unwrap();
        let b = exp_product(&[(t, f[0].clone()), (s, f[1].clone())], &[0.0; 3], &cfg).unwrap();
        assert!((a.endpoint[2] - b.endpoint[2] - s * t).abs() < 1e-15);
        assert!((a.endpoint[0] - b.endpoint[0]).abs() < 1e-15);
    }

    #[test]
    fn trust_box_aborts_runaway_flows() {
        let ch = CoordinateChart::new(vec!["x"]).unwrap();
        let f = VectorField::new(ch, vec![Polynomial::var(1, 0)]).unwrap();
        let err = flow(&f, &[1.0], 5.0, &FlowConfig::default()).unwrap_err();
        assert!(matches!(err, FlowError::LeftTrustBox(_)));
    }

    #[test]
    fn numeric_and_exact_paths_agree_on_nilpotent_fields() {
        let (_, fields) = heis();
        let w = [0.4, 0.3, -0.2];
        let exact = CombinationFlow::new(&fields, &FlowConfig::default());
        let numeric = CombinationFlow::new(
            &fields,
            &FlowConfig {
                series_cap: 0,
                ..Default::default()
            },
        );
        assert!(exact.is_exact() && !numeric.is_exact());
        let p = [0.1, -0.2, 0.05];
        let a = exact.endpoint(&w, &p).unwrap().endpoint;
        let b = numeric.endpoint(&w, &p).unwrap().endpoint;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-11);
        }
        let (_, ja) = exact.endpoint_and_jacobian(&w, &p).unwrap();
        let (_, jb) = numeric.endpoint_and_jacobian(&w, &p).unwrap();
        for (ra, rb) in ja.iter().zip(&jb) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }
}
