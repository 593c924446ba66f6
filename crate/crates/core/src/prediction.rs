//! Analytic performance predictions.
//!
//! Detection probability, false-alarm density (general and homogeneous
//! forms), integrated false-alarm probability, the Cramér-Rao covariance and
//! the global operating characteristic relating net false-alarm probability
//! to net detection probability.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decision::{PriorCostSpec, Threshold};
use crate::error::{Error, Result};
use crate::model::{geometry, ParamPoint, SignalModel};
use crate::numeric::{gaussian_tail, integrate, QuadOptions};

/// Local quantities entering the predictions at one parameter point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalStats {
    pub r: f64,
    pub d: usize,
    pub lambda_r: f64,
    pub volume: f64,
    pub gamma: f64,
    pub zeta: f64,
}

impl LocalStats {
    pub fn at<M: SignalModel + ?Sized>(model: &M, rule: &Threshold, x: &ParamPoint) -> Result<Self> {
        let g = geometry(model, x)?;
        let lambda_r = rule.from_geometry(&g, x)?;
        Ok(Self {
            r: g.r,
            d: g.dim(),
            lambda_r,
            volume: g.volume,
            gamma: g.gamma,
            zeta: g.zeta,
        })
    }

    /// Stats of a homogeneous domain, `γ = ζ = 0`.
    pub fn homogeneous(r: f64, d: usize, lambda_r: f64, volume: f64) -> Self {
        Self {
            r,
            d,
            lambda_r,
            volume,
            gamma: 0.0,
            zeta: 0.0,
        }
    }

    /// `r̃ = (r² + d/2)^{1/2}`.
    pub fn r_tilde(&self) -> f64 {
        (self.r * self.r + 0.5 * self.d as f64).sqrt()
    }

    pub fn z_d(&self) -> f64 {
        let rt = self.r_tilde();
        (self.lambda_r - 0.25 * self.d as f64) / rt - 0.5 * rt
    }

    pub fn z_f(&self) -> f64 {
        self.z_d() + self.r_tilde()
    }

    pub fn detection_probability(&self) -> f64 {
        gaussian_tail(self.z_d())
    }

    pub fn fa_density_homogeneous(&self) -> Result<f64> {
        self.check_volume()?;
        let d = self.d as f64;
        Ok(self.r.powi(self.d as i32) * (-0.25 * d).exp() / self.volume * gaussian_tail(self.z_f()))
    }

    pub fn fa_density_general(&self) -> Result<f64> {
        self.check_volume()?;
        if !(self.r > 0.0) {
            return Ok(0.0);
        }
        let d = self.d as f64;
        let (r, gamma) = (self.r, self.gamma);
        let scale = (1.0 + gamma).sqrt() / r;
        let shift = 0.5 * (gamma - 1.0) / (gamma + 1.0) * r * r;
        let lambda_r = self.lambda_r;
        let integrand = |u: f64| {
            let z = scale * (lambda_r - (shift + 0.5 * u * u));
            let radial = if self.d == 1 { 1.0 } else { u.powi(self.d as i32 - 1) };
            gaussian_tail(z) * (-u * u).exp() * radial
        };
        let upper = radial_cutoff(self.d);
        let q = integrate(integrand, 0.0, upper, QuadOptions::relative(1e-8));
        let coeff = 2.0 * 2f64.powf(-0.5 * d) / libm::tgamma(0.5 * d);
        Ok(coeff * r.powi(self.d as i32) / self.volume * (-0.5 * self.zeta * r * r).exp() * q.value)
    }

    fn check_volume(&self) -> Result<()> {
        if !(self.volume > 0.0 && self.volume.is_finite()) {
            return Err(Error::Domain(format!("volume scale {} must be positive", self.volume)));
        }
        Ok(())
    }
}

// Point beyond the peak of e^{-u²}·u^{d-1} where it has dropped by 1e-16.
fn radial_cutoff(d: usize) -> f64 {
    let k = (d as f64 - 1.0).max(0.0);
    let log_h = |u: f64| -u * u + if k > 0.0 { k * u.ln() } else { 0.0 };
    let peak = (0.5 * k).sqrt();
    let target = log_h(peak.max(f64::MIN_POSITIVE)) - 1e16f64.ln();
    let (mut lo, mut hi) = (peak, peak + 1.0);
    while log_h(hi) > target {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if log_h(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// `p_D = G(z_D)` at `x`.
pub fn detection_probability<M: SignalModel + ?Sized>(model: &M, priors: &PriorCostSpec, x: &ParamPoint) -> Result<f64> {
    let rule = Threshold::new(model, priors)?;
    Ok(LocalStats::at(model, &rule, x)?.detection_probability())
}

/// False-alarm density with the inhomogeneity corrections `γ`, `ζ`.
pub fn fa_density_general<M: SignalModel + ?Sized>(model: &M, priors: &PriorCostSpec, x: &ParamPoint) -> Result<f64> {
    let rule = Threshold::new(model, priors)?;
    LocalStats::at(model, &rule, x)?.fa_density_general()
}

/// False-alarm density for a homogeneous domain.
pub fn fa_density_homogeneous<M: SignalModel + ?Sized>(
    model: &M,
    priors: &PriorCostSpec,
    x: &ParamPoint,
) -> Result<f64> {
    let rule = Threshold::new(model, priors)?;
    LocalStats::at(model, &rule, x)?.fa_density_homogeneous()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FaFormula {
    #[default]
    General,
    Homogeneous,
}

impl FaFormula {
    pub fn density(self, stats: &LocalStats) -> Result<f64> {
        match self {
            Self::General => stats.fa_density_general(),
            Self::Homogeneous => stats.fa_density_homogeneous(),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Self::General => "general",
            Self::Homogeneous => "homogeneous",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratedFa {
    pub value: f64,
    pub abs_error: f64,
    pub converged: bool,
}

/// `∫ v_F dx` over a one-parameter domain, to `rel_tol` relative accuracy.
pub fn integrated_fa_tol<M: SignalModel + ?Sized>(
    model: &M,
    priors: &PriorCostSpec,
    domain: (f64, f64),
    formula: FaFormula,
    rel_tol: f64,
) -> Result<IntegratedFa> {
    if model.dim() != 1 {
        return Err(Error::Config("integrated false-alarm probability needs a one-parameter model".into()));
    }
    let (lo, hi) = domain;
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::Config(format!("invalid integration domain [{lo}, {hi}]")));
    }
    let rule = Threshold::new(model, priors)?;
    let mut failure = None;
    let q = integrate(
        |x| {
            let v = ParamPoint::scalar(x)
                .and_then(|p| LocalStats::at(model, &rule, &p))
                .and_then(|s| formula.density(&s));
            match v {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        lo,
        hi,
        QuadOptions::relative(rel_tol),
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(IntegratedFa {
        value: q.value,
        abs_error: q.abs_error,
        converged: q.converged,
    })
}

pub fn integrated_fa<M: SignalModel + ?Sized>(
    model: &M,
    priors: &PriorCostSpec,
    domain: (f64, f64),
    formula: FaFormula,
) -> Result<IntegratedFa> {
    integrated_fa_tol(model, priors, domain, formula, 1e-6)
}

/// Cramér-Rao covariance `r⁻²·Q⁻¹` at `x_s`.
pub fn cramer_rao_cov<M: SignalModel + ?Sized>(model: &M, x_s: &ParamPoint) -> Result<DMatrix<f64>> {
    let g = geometry(model, x_s)?;
    let q_inv = g
        .q
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Geometry("Q is not positive definite".into()))?
        .inverse();
    Ok(q_inv / (g.r * g.r))
}

/// Expected LLR peak height `r²/2 + d/2` for a signal at `x_s`.
pub fn expected_peak_llr<M: SignalModel + ?Sized>(model: &M, x_s: &ParamPoint) -> Result<f64> {
    let r2 = model.signal(x_s)?.norm_sq();
    Ok(0.5 * r2 + 0.5 * model.dim() as f64)
}

/// Net false-alarm probability over a threshold grid, exact and first-order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatingCharacteristic {
    pub lambda_t: Vec<f64>,
    pub p_d: Vec<f64>,
    pub p_f: Vec<f64>,
    pub p_f_first_order: Vec<f64>,
    /// The tabulated range was too narrow for this threshold.
    pub truncated: Vec<bool>,
}

impl OperatingCharacteristic {
    pub fn any_truncated(&self) -> bool {
        self.truncated.iter().any(|&t| t)
    }

    pub fn to_csv(&self) -> String {
        csv_table(
            &["lambda_t", "p_d", "p_f", "p_f_first_order"],
            &[&self.lambda_t, &self.p_d, &self.p_f, &self.p_f_first_order],
        )
    }
}

/// Largest spacing of the tabulated `P_D(λ)` grid.
pub const MAX_LAMBDA_STEP: f64 = 0.1;

// Relative slope at the grid ends above which the table counts as truncated.
const FLAT_TOL: f64 = 1e-6;

/// Net false-alarm probability from a tabulated net detection probability.
///
/// The derivative of `P_D` is taken by central differences; the exact form
/// integrates the piecewise-linear derivative against `e^{−λ'}` analytically,
/// and the first-order form evaluates `−e^{−λ_T}·P_D′(λ_T + 1)`.
pub fn global_oc(lambda: &[f64], p_d: &[f64], lambda_t: &[f64]) -> Result<OperatingCharacteristic> {
    let n = lambda.len();
    if n < 3 || p_d.len() != n {
        return Err(Error::Config("P_D table needs at least 3 matching points".into()));
    }
    for w in lambda.windows(2) {
        let h = w[1] - w[0];
        if !(h > 0.0) {
            return Err(Error::Config("λ grid must increase".into()));
        }
        if h > MAX_LAMBDA_STEP * (1.0 + 1e-9) {
            return Err(Error::Config(format!("λ grid spacing {h} exceeds {MAX_LAMBDA_STEP}")));
        }
    }
    let deriv = central_differences(lambda, p_d);
    let scale = deriv.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let flat_end = deriv[n - 1].abs() <= FLAT_TOL * scale.max(f64::MIN_POSITIVE);
    let flat_start = deriv[0].abs() <= FLAT_TOL * scale.max(f64::MIN_POSITIVE);
    let (lo, hi) = (lambda[0], lambda[n - 1]);

    let mut oc = OperatingCharacteristic {
        lambda_t: lambda_t.to_vec(),
        p_d: Vec::with_capacity(lambda_t.len()),
        p_f: Vec::with_capacity(lambda_t.len()),
        p_f_first_order: Vec::with_capacity(lambda_t.len()),
        truncated: Vec::with_capacity(lambda_t.len()),
    };
    for &lt in lambda_t {
        let inside = lt >= lo && lt <= hi;
        let first_inside = lt + 1.0 <= hi;
        oc.p_d.push(if inside { interp(lambda, p_d, lt) } else { f64::NAN });
        oc.p_f.push(if inside {
            -(-lt).exp() * exp_weighted_integral(lambda, &deriv, lt)
        } else {
            f64::NAN
        });
        oc.p_f_first_order.push(if inside && first_inside {
            -(-lt).exp() * interp(lambda, &deriv, lt + 1.0)
        } else {
            f64::NAN
        });
        oc.truncated.push(!inside || !first_inside || !flat_end || (lt <= lo && !flat_start));
    }
    Ok(oc)
}

fn central_differences(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n];
    d[0] = (y[1] - y[0]) / (x[1] - x[0]);
    d[n - 1] = (y[n - 1] - y[n - 2]) / (x[n - 1] - x[n - 2]);
    for i in 1..n - 1 {
        let (h0, h1) = (x[i] - x[i - 1], x[i + 1] - x[i]);
        // Second-order accurate on non-uniform grids.
        d[i] = (h0 * h0 * (y[i + 1] - y[i]) + h1 * h1 * (y[i] - y[i - 1])) / (h0 * h1 * (h0 + h1));
    }
    d
}

fn interp(x: &[f64], y: &[f64], t: f64) -> f64 {
    let k = x.partition_point(|&v| v <= t).clamp(1, x.len() - 1);
    let w = (t - x[k - 1]) / (x[k] - x[k - 1]);
    y[k - 1] + w * (y[k] - y[k - 1])
}

// ∫_{t}^{x_end} D(λ)·e^{−(λ−t)} dλ for piecewise-linear D.
fn exp_weighted_integral(x: &[f64], dy: &[f64], t: f64) -> f64 {
    let mut total = 0.0;
    let mut a = t;
    let mut da = interp(x, dy, t);
    let start = x.partition_point(|&v| v <= t);
    for k in start..x.len() {
        let (b, db) = (x[k], dy[k]);
        let h = b - a;
        if h > 0.0 {
            let s = a - t;
            let e = (-s).exp();
            let i0 = -e * (-h).exp_m1();
            let i1 = e * (-(-h).exp_m1() - h * (-h).exp());
            total += da * i0 + (db - da) / h * i1;
        }
        a = b;
        da = db;
    }
    total
}

/// Net detection probability `P_D(t) = ∫ w(x)·p_D(x; λ_r(x) + t) dx` over a
/// one-parameter domain, with `w = r^d·e^{−λ_r}/V` the prior weight implied
/// by the threshold rule.
pub fn weighted_detection_table<M: SignalModel + ?Sized>(
    model: &M,
    priors: &PriorCostSpec,
    domain: (f64, f64),
    offsets: &[f64],
    panels: usize,
) -> Result<Vec<f64>> {
    if model.dim() != 1 {
        return Err(Error::Config("net detection table needs a one-parameter model".into()));
    }
    let (lo, hi) = domain;
    if !(hi > lo) || panels == 0 {
        return Err(Error::Config("invalid net detection table domain".into()));
    }
    let rule = Threshold::new(model, priors)?;
    let nodes = panel_nodes(lo, hi, panels);
    let stats: Vec<(f64, LocalStats)> = nodes
        .par_iter()
        .map(|&(x, w)| LocalStats::at(model, &rule, &ParamPoint::scalar(x)?).map(|s| (w, s)))
        .collect::<Result<_>>()?;
    Ok(offsets
        .iter()
        .map(|&t| {
            stats
                .iter()
                .map(|(w, s)| {
                    let weight = s.r.powi(s.d as i32) * (-s.lambda_r).exp() / s.volume;
                    let shifted = LocalStats {
                        lambda_r: s.lambda_r + t,
                        ..*s
                    };
                    w * weight * shifted.detection_probability()
                })
                .sum()
        })
        .collect())
}

// Composite 15-point Kronrod nodes and weights.
fn panel_nodes(lo: f64, hi: f64, panels: usize) -> Vec<(f64, f64)> {
    const X: [f64; 8] = [
        0.991_455_371_120_812_6,
        0.949_107_912_342_758_5,
        0.864_864_423_359_769_1,
        0.741_531_185_599_394_4,
        0.586_087_235_467_691_1,
        0.405_845_151_377_397_2,
        0.207_784_955_007_898_5,
        0.0,
    ];
    const W: [f64; 8] = [
        0.022_935_322_010_529_22,
        0.063_092_092_629_978_55,
        0.104_790_010_322_250_2,
        0.140_653_259_715_525_9,
        0.169_004_726_639_267_9,
        0.190_350_578_064_785_4,
        0.204_432_940_075_298_9,
        0.209_482_141_084_727_8,
    ];
    let h = (hi - lo) / panels as f64;
    let mut out = Vec::with_capacity(panels * 15);
    for p in 0..panels {
        let c = lo + (p as f64 + 0.5) * h;
        let half = 0.5 * h;
        for j in 0..7 {
            out.push((c - half * X[j], half * W[j]));
            out.push((c + half * X[j], half * W[j]));
        }
        out.push((c, half * W[7]));
    }
    out
}

/// Detection probability tabulated over points of a one-parameter domain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionCurve {
    pub x: Vec<f64>,
    pub p_d: Vec<f64>,
    pub lambda_r: Vec<f64>,
    pub r: Vec<f64>,
}

impl DetectionCurve {
    pub fn to_csv(&self) -> String {
        csv_table(&["x", "r", "lambda_r", "p_d"], &[&self.x, &self.r, &self.lambda_r, &self.p_d])
    }
}

/// False-alarm density tabulated over points of a one-parameter domain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FalseAlarmCurve {
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    pub v_f: Vec<f64>,
    pub formula: FaFormula,
}

impl FalseAlarmCurve {
    pub fn to_csv(&self) -> String {
        csv_table(&["x", "r", "v_f"], &[&self.x, &self.r, &self.v_f])
    }

    /// Trapezoid integral over the tabulated points.
    pub fn riemann_integral(&self) -> f64 {
        self.x
            .windows(2)
            .zip(self.v_f.windows(2))
            .map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0] + v[1]))
            .sum()
    }
}

fn stats_along<M: SignalModel + ?Sized>(model: &M, rule: &Threshold, xs: &[f64]) -> Result<Vec<LocalStats>> {
    xs.par_iter()
        .map(|&x| LocalStats::at(model, rule, &ParamPoint::scalar(x)?))
        .collect()
}

pub fn detection_curve<M: SignalModel + ?Sized>(model: &M, priors: &PriorCostSpec, xs: &[f64]) -> Result<DetectionCurve> {
    let rule = Threshold::new(model, priors)?;
    let stats = stats_along(model, &rule, xs)?;
    Ok(DetectionCurve {
        x: xs.to_vec(),
        p_d: stats.iter().map(LocalStats::detection_probability).collect(),
        lambda_r: stats.iter().map(|s| s.lambda_r).collect(),
        r: stats.iter().map(|s| s.r).collect(),
    })
}

pub fn false_alarm_curve<M: SignalModel + ?Sized>(
    model: &M,
    priors: &PriorCostSpec,
    xs: &[f64],
    formula: FaFormula,
) -> Result<FalseAlarmCurve> {
    let rule = Threshold::new(model, priors)?;
    let stats = stats_along(model, &rule, xs)?;
    let v_f = stats.par_iter().map(|s| formula.density(s)).collect::<Result<Vec<_>>>()?;
    Ok(FalseAlarmCurve {
        x: xs.to_vec(),
        r: stats.iter().map(|s| s.r).collect(),
        v_f,
        formula,
    })
}

/// Spread of the homogeneous false-alarm density across models whose volume
/// scale differs, at fixed `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfarSpread {
    /// max/min density with the threshold tracking `V`.
    pub adaptive: f64,
    /// max/min density with `V` frozen at the reference inside the threshold.
    pub frozen: f64,
}

pub fn cfar_spread(r: f64, d: usize, lambda0: f64, v_ref: f64, volumes: &[f64]) -> Result<CfarSpread> {
    let spread = |f: &dyn Fn(f64) -> f64| -> Result<f64> {
        let vals: Vec<f64> = volumes
            .iter()
            .map(|&v| LocalStats::homogeneous(r, d, f(v), v).fa_density_homogeneous())
            .collect::<Result<_>>()?;
        let max = vals.iter().copied().fold(f64::MIN, f64::max);
        let min = vals.iter().copied().fold(f64::MAX, f64::min);
        Ok(max / min)
    };
    Ok(CfarSpread {
        adaptive: spread(&|v| lambda0 - (v / v_ref).ln())?,
        frozen: spread(&|_| lambda0)?,
    })
}

/// Comma-separated table with a header row and 9 significant digits.
pub fn csv_table(header: &[&str], columns: &[&[f64]]) -> String {
    let rows = columns.first().map_or(0, |c| c.len());
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..rows {
        for (j, col) in columns.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&fmt_sig9(col[i]));
        }
        out.push('\n');
    }
    out
}

/// Decimal text with 9 significant digits.
pub fn fmt_sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:.8e}")
    }
}
