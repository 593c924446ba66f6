//! Variable Bayes threshold and joint detect/estimate decisions.
//!
//! A peak `(x_m, λ_m)` of the LLR field is accepted when `λ_m > λ_r(x_m)`,
//! where `λ_r = ln[a0·C·r^d / (a(x)·V)]`. The lumped form replaces the
//! priors and cost with a single offset `λ0` fixed at a reference point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{llr, FieldPeak, Measurement};
use crate::model::{geometry, ModelGeometry, ParamPoint, SignalModel};
use crate::numeric::containment_constant;

/// Prior signal density `a(x)` over the parameter domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum PriorDensity {
    Constant { value: f64 },
    /// Piecewise-linear in one coordinate, constant in the others.
    Tabulated { axis: usize, knots: Vec<f64>, values: Vec<f64> },
}

impl PriorDensity {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Constant { value } => {
                if !(value.is_finite() && *value > 0.0) {
                    return Err(Error::Config(format!("prior density {value} must be positive")));
                }
            }
            Self::Tabulated { knots, values, .. } => {
                if knots.len() < 2 || knots.len() != values.len() {
                    return Err(Error::Config("tabulated prior needs matching knots and values (≥ 2)".into()));
                }
                if knots.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Config("tabulated prior knots must increase".into()));
                }
                if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::Config("tabulated prior values must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn at(&self, x: &ParamPoint) -> Result<f64> {
        match self {
            Self::Constant { value } => Ok(*value),
            Self::Tabulated { axis, knots, values } => {
                let t = *x
                    .coords()
                    .get(*axis)
                    .ok_or_else(|| Error::Domain(format!("prior axis {axis} beyond point dimension {}", x.dim())))?;
                if t < knots[0] || t > knots[knots.len() - 1] {
                    return Err(Error::Domain(format!("prior table does not cover {t}")));
                }
                let k = knots.partition_point(|&k| k <= t).clamp(1, knots.len() - 1);
                let w = (t - knots[k - 1]) / (knots[k] - knots[k - 1]);
                Ok(values[k - 1] + w * (values[k] - values[k - 1]))
            }
        }
    }

    /// `∫ a(x) dx` over a box domain.
    pub fn integral(&self, domain: &[(f64, f64)]) -> Result<f64> {
        let volume: f64 = domain.iter().map(|(lo, hi)| hi - lo).product();
        match self {
            Self::Constant { value } => Ok(value * volume),
            Self::Tabulated { axis, knots, values } => {
                let (lo, hi) = *domain
                    .get(*axis)
                    .ok_or_else(|| Error::Config(format!("domain lacks prior axis {axis}")))?;
                if lo < knots[0] || hi > knots[knots.len() - 1] {
                    return Err(Error::Domain("prior table does not cover the domain".into()));
                }
                let interp = |t: f64| {
                    let k = knots.partition_point(|&k| k <= t).clamp(1, knots.len() - 1);
                    let w = (t - knots[k - 1]) / (knots[k] - knots[k - 1]);
                    values[k - 1] + w * (values[k] - values[k - 1])
                };
                // Exact trapezoid over the breakpoints inside [lo, hi].
                let mut pts = vec![lo];
                pts.extend(knots.iter().copied().filter(|&k| k > lo && k < hi));
                pts.push(hi);
                let along: f64 = pts.windows(2).map(|w| 0.5 * (w[1] - w[0]) * (interp(w[0]) + interp(w[1]))).sum();
                Ok(along * volume / (hi - lo))
            }
        }
    }
}

/// Priors and false-alarm cost, given explicitly or folded into `λ0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "form", deny_unknown_fields)]
pub enum PriorCostSpec {
    Explicit {
        a0: f64,
        density: PriorDensity,
        false_alarm_cost: f64,
    },
    /// `λ_r(x) = λ0 + d·ln(r/r0) − ln(V/V0)` with `r0`, `V0` at `reference`.
    Lumped { lambda0: f64, reference: Vec<f64> },
}

impl PriorCostSpec {
    pub fn lumped(lambda0: f64, reference: Vec<f64>) -> Self {
        Self::Lumped { lambda0, reference }
    }

    /// Explicit priors with a constant density normalized over `domain`.
    pub fn explicit_uniform(a0: f64, false_alarm_cost: f64, domain: &[(f64, f64)]) -> Result<Self> {
        let volume: f64 = domain.iter().map(|(lo, hi)| hi - lo).product();
        if !(volume > 0.0) {
            return Err(Error::Config("prior domain has no volume".into()));
        }
        let spec = Self::Explicit {
            a0,
            density: PriorDensity::Constant {
                value: (1.0 - a0) / volume,
            },
            false_alarm_cost,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Explicit {
                a0,
                density,
                false_alarm_cost,
            } => {
                if !(*a0 > 0.0 && *a0 < 1.0) {
                    return Err(Error::Config(format!("a0 = {a0} must lie in (0, 1)")));
                }
                if !(false_alarm_cost.is_finite() && *false_alarm_cost > 0.0) {
                    return Err(Error::Config(format!("false-alarm cost {false_alarm_cost} must be positive")));
                }
                density.validate()
            }
            Self::Lumped { lambda0, reference } => {
                if !lambda0.is_finite() {
                    return Err(Error::Config("lambda0 must be finite".into()));
                }
                ParamPoint::new(reference.clone()).map(|_| ())
            }
        }
    }

    /// `a0 + ∫a(x)dx − 1` over a box domain; zero for the lumped form.
    pub fn normalization_defect(&self, domain: &[(f64, f64)]) -> Result<f64> {
        match self {
            Self::Explicit { a0, density, .. } => Ok(a0 + density.integral(domain)? - 1.0),
            Self::Lumped { .. } => Ok(0.0),
        }
    }
}

/// Threshold rule `λ_r(x) = offset + d·ln r − ln V − ln a(x)`, with `a ≡ 1`
/// in the lumped form.
#[derive(Debug, Clone, PartialEq)]
pub struct Threshold {
    spec: PriorCostSpec,
    offset: f64,
}

impl Threshold {
    pub fn new<M: SignalModel + ?Sized>(model: &M, spec: &PriorCostSpec) -> Result<Self> {
        spec.validate()?;
        let offset = match spec {
            PriorCostSpec::Explicit {
                a0, false_alarm_cost, ..
            } => (a0 * false_alarm_cost).ln(),
            PriorCostSpec::Lumped { lambda0, reference } => {
                let x0 = ParamPoint::new(reference.clone())?;
                let g = checked_geometry(model, &x0)?;
                lambda0 - g.dim() as f64 * g.r.ln() + g.volume.ln()
            }
        };
        Ok(Self {
            spec: spec.clone(),
            offset,
        })
    }

    pub fn spec(&self) -> &PriorCostSpec {
        &self.spec
    }

    /// `ln(a0·C)` in explicit form, `λ0 − d·ln r0 + ln V0` in lumped form.
    pub fn log_cost(&self) -> f64 {
        self.offset
    }

    /// `ln a(x)`, zero in the lumped form.
    pub fn log_prior(&self, x: &ParamPoint) -> Result<f64> {
        match &self.spec {
            PriorCostSpec::Explicit { density, .. } => Ok(density.at(x)?.ln()),
            PriorCostSpec::Lumped { .. } => Ok(0.0),
        }
    }

    pub fn at<M: SignalModel + ?Sized>(&self, model: &M, x: &ParamPoint) -> Result<f64> {
        let g = checked_geometry(model, x)?;
        self.from_geometry(&g, x)
    }

    pub fn from_geometry(&self, g: &ModelGeometry, x: &ParamPoint) -> Result<f64> {
        if !(g.r > 0.0) || !(g.volume > 0.0 && g.volume.is_finite()) {
            return Err(Error::Domain(format!("threshold undefined at r = {}, V = {}", g.r, g.volume)));
        }
        Ok(self.offset + g.dim() as f64 * g.r.ln() - g.volume.ln() - self.log_prior(x)?)
    }

    /// The `λ0` whose lumped form reproduces this rule with reference `x0`.
    pub fn lumped_equivalent<M: SignalModel + ?Sized>(&self, model: &M, x0: &ParamPoint) -> Result<f64> {
        self.at(model, x0)
    }
}

fn checked_geometry<M: SignalModel + ?Sized>(model: &M, x: &ParamPoint) -> Result<ModelGeometry> {
    geometry(model, x).map_err(|e| match e {
        Error::Geometry(msg) => Error::Domain(msg),
        other => other,
    })
}

/// `λ_r(x)` for one point.
pub fn threshold<M: SignalModel + ?Sized>(model: &M, priors: &PriorCostSpec, x: &ParamPoint) -> Result<f64> {
    Threshold::new(model, priors)?.at(model, x)
}

/// A peak compared against its local threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    pub x_m: ParamPoint,
    pub lambda_m: f64,
    pub lambda_r: f64,
    pub accepted: bool,
}

impl Detection {
    pub fn margin(&self) -> f64 {
        self.lambda_m - self.lambda_r
    }
}

/// Threshold test for every peak, in input order.
pub fn evaluate<M: SignalModel + ?Sized>(model: &M, rule: &Threshold, peaks: &[FieldPeak]) -> Result<Vec<Detection>> {
    peaks
        .iter()
        .map(|p| {
            let lambda_r = rule.at(model, &p.location)?;
            Ok(Detection {
                x_m: p.location.clone(),
                lambda_m: p.llr,
                lambda_r,
                accepted: p.llr > lambda_r,
            })
        })
        .collect()
}

/// Accepted detections, strongest margin first.
pub fn decide<M: SignalModel + ?Sized>(model: &M, priors: &PriorCostSpec, peaks: &[FieldPeak]) -> Result<Vec<Detection>> {
    let rule = Threshold::new(model, priors)?;
    let mut out: Vec<Detection> = evaluate(model, &rule, peaks)?.into_iter().filter(|d| d.accepted).collect();
    out.sort_by(|a, b| b.margin().total_cmp(&a.margin()));
    Ok(out)
}

/// Grid controls for [`bayes_statistic_numeric`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadSpec {
    /// Nodes per peak standard deviation along each axis; at least 20.
    pub points_per_scale: f64,
    /// Optional box the reward region is clipped to.
    pub domain: Option<Vec<(f64, f64)>>,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self {
            points_per_scale: 20.0,
            domain: None,
        }
    }
}

/// Bracketed Bayes statistic `∫_{X(x′)} L(m|x)·a(x) dx − C·a0`, kept in log form.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesStatistic {
    /// `ln ∫_{X(x′)} e^{λ(x)} a(x) dx`.
    pub log_reward: f64,
    /// `ln(C·a0)`.
    pub log_cost: f64,
    /// Containment constant used for the reward region.
    pub containment: f64,
    pub nodes: usize,
    /// The reward region was clipped by the domain.
    pub truncated: bool,
}

impl BayesStatistic {
    pub fn accepts(&self) -> bool {
        self.log_reward > self.log_cost
    }

    /// `e^{log_cost}·(e^{log_reward − log_cost} − 1)`; may overflow for very strong peaks.
    pub fn value(&self) -> f64 {
        self.log_cost.exp() * (self.log_reward - self.log_cost).exp_m1()
    }
}

/// Direct quadrature of the Bayes statistic over the containment ellipsoid
/// `½·r²·δᵀQδ ≤ c` around `x′`, using the trapezoid rule on a grid with
/// spacing at most 1/20 of the peak width.
///
/// Supports one- and two-parameter models.
pub fn bayes_statistic_numeric<M: SignalModel + ?Sized>(
    model: &M,
    priors: &PriorCostSpec,
    x_prime: &ParamPoint,
    m: &Measurement,
    quad: &QuadSpec,
) -> Result<BayesStatistic> {
    let rule = Threshold::new(model, priors)?;
    let d = model.dim();
    if !(1..=2).contains(&d) {
        return Err(Error::Config(format!("numeric Bayes statistic supports 1 or 2 parameters, got {d}")));
    }
    if quad.points_per_scale < 20.0 {
        return Err(Error::Config("quadrature needs at least 20 points per peak width".into()));
    }
    if let Some(dom) = &quad.domain {
        if dom.len() != d {
            return Err(Error::Config("quadrature domain dimension mismatch".into()));
        }
    }
    let g = checked_geometry(model, x_prime)?;
    let c = containment_constant(d);
    // Ellipsoid δᵀAδ ≤ 1.
    let a = &g.q * (g.r * g.r / (2.0 * c));
    let a_inv = a
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Domain("singular curvature at candidate".into()))?;
    let q_inv = g
        .q
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Domain("singular curvature at candidate".into()))?;
    let center = x_prime.coords();
    let spacing: Vec<f64> = (0..d).map(|i| q_inv[(i, i)].sqrt() / g.r / quad.points_per_scale).collect();

    let mut terms: Vec<f64> = Vec::new();
    let mut truncated = false;
    let eval = |coords: Vec<f64>, log_w: f64, terms: &mut Vec<f64>| -> Result<()> {
        let x = ParamPoint::new(coords)?;
        let v = llr(model, &x, m)?;
        terms.push(log_w + v.llr + rule.log_prior(&x)?);
        Ok(())
    };

    let clip = |axis: usize, lo: f64, hi: f64, truncated: &mut bool| -> (f64, f64) {
        match &quad.domain {
            Some(dom) => {
                let (dlo, dhi) = dom[axis];
                if lo < dlo || hi > dhi {
                    *truncated = true;
                }
                (lo.max(dlo), hi.min(dhi))
            }
            None => (lo, hi),
        }
    };

    let e0 = a_inv[(0, 0)].sqrt();
    let (lo0, hi0) = clip(0, center[0] - e0, center[0] + e0, &mut truncated);
    let outer = trapezoid_nodes(lo0, hi0, spacing[0]);
    for (t0, w0) in outer {
        if d == 1 {
            eval(vec![t0], w0.ln(), &mut terms)?;
            continue;
        }
        // Chord of the ellipse at fixed δ0.
        let d0 = t0 - center[0];
        let disc = a[(0, 1)] * a[(0, 1)] * d0 * d0 - a[(1, 1)] * (a[(0, 0)] * d0 * d0 - 1.0);
        if disc <= 0.0 {
            continue;
        }
        let mid = -a[(0, 1)] * d0 / a[(1, 1)];
        let half = disc.sqrt() / a[(1, 1)];
        let (lo1, hi1) = clip(1, center[1] + mid - half, center[1] + mid + half, &mut truncated);
        for (t1, w1) in trapezoid_nodes(lo1, hi1, spacing[1]) {
            eval(vec![t0, t1], (w0 * w1).ln(), &mut terms)?;
        }
    }
    if terms.is_empty() {
        return Err(Error::Domain("reward region lies outside the domain".into()));
    }
    Ok(BayesStatistic {
        log_reward: log_sum_exp(&terms),
        log_cost: rule.log_cost(),
        containment: c,
        nodes: terms.len(),
        truncated,
    })
}

// Trapezoid nodes and weights on [lo, hi] with spacing at most `h`.
fn trapezoid_nodes(lo: f64, hi: f64, h: f64) -> Vec<(f64, f64)> {
    if !(hi > lo) {
        return Vec::new();
    }
    let n = ((hi - lo) / h).ceil().max(1.0) as usize;
    let step = (hi - lo) / n as f64;
    (0..=n)
        .map(|k| {
            let w = if k == 0 || k == n { 0.5 * step } else { step };
            (lo + k as f64 * step, w)
        })
        .collect()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
