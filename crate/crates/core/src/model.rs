//! Parametric signal families and the local geometry of their likelihood
//! field: amplitude SNR, curvature matrices, volume scale and the
//! inhomogeneity parameters.
//!
//! Noise covariance is the identity, so every quantity reduces to inner
//! products of sampled signal vectors and their analytic derivatives.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::dot;

/// A point in the continuous signal-parameter domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint(Vec<f64>);

impl ParamPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Domain("parameter point needs at least one coordinate".into()));
        }
        if let Some(c) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::Domain(format!("non-finite coordinate {c}")));
        }
        Ok(Self(coords))
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Self::new(vec![value])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// A real signal sampled on the integer lattice `start, start+1, …`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    pub start: i64,
    pub values: Vec<f64>,
}

impl SampledSignal {
    pub fn end(&self) -> i64 {
        self.start + self.values.len() as i64
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.values, &self.values)
    }

    /// Inner product over the overlap of the two supports.
    pub fn dot(&self, other: &SampledSignal) -> f64 {
        let lo = self.start.max(other.start);
        let hi = self.end().min(other.end());
        if hi <= lo {
            return 0.0;
        }
        let a = &self.values[(lo - self.start) as usize..(hi - self.start) as usize];
        let b = &other.values[(lo - other.start) as usize..(hi - other.start) as usize];
        dot(a, b)
    }

    /// Drops leading and trailing samples whose magnitude is below
    /// `rel_floor` times the peak magnitude.
    pub fn trimmed(mut self, rel_floor: f64) -> Self {
        let peak = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = peak * rel_floor;
        let first = self.values.iter().position(|v| v.abs() >= floor);
        let last = self.values.iter().rposition(|v| v.abs() >= floor);
        match (first, last) {
            (Some(f), Some(l)) => {
                self.values.truncate(l + 1);
                self.values.drain(..f);
                self.start += f as i64;
                self
            }
            _ => self,
        }
    }
}

/// A deterministic signal family parameterized by a point in a continuous domain.
///
/// Implementations supply the sampled signal and its analytic partial
/// derivatives; everything geometric is derived from those.
pub trait SignalModel: Send + Sync {
    /// Number of free state parameters `d`.
    fn dim(&self) -> usize;

    /// Validates a parameter point against the model's domain.
    fn check(&self, x: &ParamPoint) -> Result<()>;

    fn signal(&self, x: &ParamPoint) -> Result<SampledSignal>;

    /// Signal plus `∂s/∂x_i` for every free parameter, all on the signal's support.
    fn signal_with_gradient(&self, x: &ParamPoint) -> Result<(SampledSignal, Vec<SampledSignal>)>;
}

/// Which pulse parameters are free state variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseParams {
    /// Position `ξ_s` free, width fixed. Homogeneous: `r` does not depend on `ξ_s`.
    Shift { width: f64 },
    /// Width `σ` free, center fixed.
    Width { center: f64 },
    /// Both free, coordinates ordered `(ξ_s, σ)`.
    ShiftAndWidth,
}

/// Gaussian pulse `s_ξ = A·exp(-(ξ-ξ_s)²/2σ²)` on integer `ξ`, truncated to
/// `support_radius` samples either side of the nearest integer to `ξ_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPulseModel {
    amplitude: f64,
    params: PulseParams,
    support_radius: usize,
}

/// Widths per support radius: `ceil(8σ)` keeps the discarded tail below 1e-12·A.
pub const SUPPORT_WIDTHS: f64 = 8.0;

impl GaussianPulseModel {
    pub fn new(amplitude: f64, params: PulseParams, support_radius: usize) -> Result<Self> {
        if !(amplitude.is_finite() && amplitude > 0.0) {
            return Err(Error::Domain(format!("amplitude must be positive, got {amplitude}")));
        }
        match params {
            PulseParams::Shift { width } if !(width.is_finite() && width > 0.0) => {
                return Err(Error::Domain(format!("pulse width must be positive, got {width}")));
            }
            PulseParams::Width { center } if !center.is_finite() => {
                return Err(Error::Domain("pulse center must be finite".into()));
            }
            _ => {}
        }
        if support_radius == 0 {
            return Err(Error::Domain("support radius must be at least one sample".into()));
        }
        Ok(Self {
            amplitude,
            params,
            support_radius,
        })
    }

    /// Model whose support radius covers widths up to `max_width`.
    pub fn covering(amplitude: f64, params: PulseParams, max_width: f64) -> Result<Self> {
        Self::new(amplitude, params, Self::radius_for(max_width))
    }

    pub fn radius_for(width: f64) -> usize {
        (SUPPORT_WIDTHS * width).ceil().max(1.0) as usize
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn params(&self) -> PulseParams {
        self.params
    }

    pub fn support_radius(&self) -> usize {
        self.support_radius
    }

    /// Same pulse family with a different amplitude.
    pub fn with_amplitude(&self, amplitude: f64) -> Result<Self> {
        Self::new(amplitude, self.params, self.support_radius)
    }

    /// `(ξ_s, σ)` for a parameter point.
    pub fn center_width(&self, x: &ParamPoint) -> Result<(f64, f64)> {
        self.check(x)?;
        let c = x.coords();
        Ok(match self.params {
            PulseParams::Shift { width } => (c[0], width),
            PulseParams::Width { center } => (center, c[0]),
            PulseParams::ShiftAndWidth => (c[0], c[1]),
        })
    }

    /// Sum of `|s_ξ|` over the samples discarded by truncation.
    pub fn truncation_tail(&self, x: &ParamPoint) -> Result<f64> {
        let (center, width) = self.center_width(x)?;
        let k0 = center.round() as i64;
        let r = self.support_radius as i64;
        let mut tail = 0.0;
        for dir in [-1i64, 1] {
            let mut k = k0 + dir * (r + 1);
            loop {
                let t = (k as f64 - center) / width;
                let v = self.amplitude * (-0.5 * t * t).exp();
                tail += v;
                if v < 1e-300 || (k - k0).abs() > r + 1_000_000 {
                    break;
                }
                k += dir;
            }
        }
        Ok(tail)
    }

    fn pulse(&self, center: f64, width: f64) -> SampledSignal {
        let k0 = center.round() as i64;
        let r = self.support_radius as i64;
        let mut values = vec![0.0; (2 * r + 1) as usize];
        gaussian_samples(self.amplitude, center, width, k0 - r, &mut values);
        SampledSignal {
            start: k0 - r,
            values,
        }
    }
}

/// Fills `out[i] = A·exp(-(start+i-c)²/2σ²)`.
///
/// Uses the two-term multiplicative recurrence of the Gaussian, re-anchored
/// with an exact `exp` every block so rounding drift stays near 1e-14.
pub(crate) fn gaussian_samples(amplitude: f64, center: f64, width: f64, start: i64, out: &mut [f64]) {
    const BLOCK: usize = 32;
    let inv2 = 0.5 / (width * width);
    let step = (-2.0 * inv2).exp();
    for (b, chunk) in out.chunks_mut(BLOCK).enumerate() {
        let k = (start + (b * BLOCK) as i64) as f64 - center;
        let mut g = amplitude * (-k * k * inv2).exp();
        let mut q = (-(2.0 * k + 1.0) * inv2).exp();
        for v in chunk.iter_mut() {
            *v = g;
            g *= q;
            q *= step;
        }
    }
}

impl SignalModel for GaussianPulseModel {
    fn dim(&self) -> usize {
        match self.params {
            PulseParams::ShiftAndWidth => 2,
            _ => 1,
        }
    }

    fn check(&self, x: &ParamPoint) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(Error::Domain(format!(
                "expected {}-dimensional point, got {}",
                self.dim(),
                x.dim()
            )));
        }
        let width = match self.params {
            PulseParams::Shift { width } => width,
            PulseParams::Width { .. } => x.coords()[0],
            PulseParams::ShiftAndWidth => x.coords()[1],
        };
        if width <= 0.0 {
            return Err(Error::Domain(format!("pulse width must be positive, got {width}")));
        }
        if Self::radius_for(width) > self.support_radius {
            return Err(Error::Domain(format!(
                "support radius {} too small for width {width}",
                self.support_radius
            )));
        }
        Ok(())
    }

    fn signal(&self, x: &ParamPoint) -> Result<SampledSignal> {
        let (center, width) = self.center_width(x)?;
        Ok(self.pulse(center, width))
    }

    fn signal_with_gradient(&self, x: &ParamPoint) -> Result<(SampledSignal, Vec<SampledSignal>)> {
        let (center, width) = self.center_width(x)?;
        let s = self.pulse(center, width);
        let offsets = || (0..s.values.len()).map(|i| (s.start + i as i64) as f64 - center);
        let d_shift = || SampledSignal {
            start: s.start,
            values: s
                .values
                .iter()
                .zip(offsets())
                .map(|(v, u)| v * u / (width * width))
                .collect(),
        };
        let d_width = || SampledSignal {
            start: s.start,
            values: s
                .values
                .iter()
                .zip(offsets())
                .map(|(v, u)| v * u * u / (width * width * width))
                .collect(),
        };
        let grads = match self.params {
            PulseParams::Shift { .. } => vec![d_shift()],
            PulseParams::Width { .. } => vec![d_width()],
            PulseParams::ShiftAndWidth => vec![d_shift(), d_width()],
        };
        Ok((s, grads))
    }
}

/// Amplitude SNR `r = (s·s)^{1/2}`.
pub fn snr<M: SignalModel + ?Sized>(model: &M, x: &ParamPoint) -> Result<f64> {
    Ok(model.signal(x)?.norm_sq().sqrt())
}

/// Scaled inner product `σ(x1,x2) = s(x1)·s(x2) / r(x1)r(x2)`.
pub fn correlation<M: SignalModel + ?Sized>(model: &M, x1: &ParamPoint, x2: &ParamPoint) -> Result<f64> {
    let s1 = model.signal(x1)?;
    let s2 = model.signal(x2)?;
    let denom = s1.norm_sq().sqrt() * s2.norm_sq().sqrt();
    if denom == 0.0 {
        return Err(Error::Domain("zero-energy signal has no correlation".into()));
    }
    Ok(s1.dot(&s2) / denom)
}

/// Local geometry of the likelihood field at one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGeometry {
    /// Amplitude SNR.
    pub r: f64,
    /// `∂r/∂x_i`.
    pub grad_r: DVector<f64>,
    /// Curvature matrix: covariance of the normalized filter gradient under noise.
    pub m: DMatrix<f64>,
    /// `M + (∇r/r)(∇r/r)ᵀ`, the LLR peak curvature per unit `r²`.
    pub q: DMatrix<f64>,
    /// Volume scale `det(Q/2π)^{-1/2}`.
    pub volume: f64,
    pub gamma: f64,
    pub zeta: f64,
}

impl ModelGeometry {
    pub fn dim(&self) -> usize {
        self.grad_r.len()
    }

    /// `∇r / r`.
    pub fn log_snr_gradient(&self) -> DVector<f64> {
        &self.grad_r / self.r
    }
}

/// Computes [`ModelGeometry`] from exact inner products of the signal and
/// its analytic derivatives.
///
/// `Q` comes from `∂s·∂s / r²`. `M` is built separately from the gradient of
/// the normalized filter `s/r`, so the relation `Q = M + ggᵀ` is a check
/// rather than an identity.
pub fn geometry<M: SignalModel + ?Sized>(model: &M, x: &ParamPoint) -> Result<ModelGeometry> {
    let (s, grads) = model.signal_with_gradient(x)?;
    let d = grads.len();
    let r2 = s.norm_sq();
    if r2 <= 0.0 {
        return Err(Error::Domain("signal has zero energy".into()));
    }
    let r = r2.sqrt();

    let grad_r = DVector::from_iterator(d, grads.iter().map(|g| g.dot(&s) / r));
    let q = DMatrix::from_fn(d, d, |i, j| grads[i].dot(&grads[j]) / r2);

    // Gradient of the normalized filter u_i = ∂s/∂x_i / r − s·(∂r/∂x_i)/r².
    let normalized: Vec<Vec<f64>> = grads
        .iter()
        .zip(grad_r.iter())
        .map(|(g, dr)| {
            g.values
                .iter()
                .zip(&s.values)
                .map(|(gv, sv)| gv / r - sv * dr / r2)
                .collect()
        })
        .collect();
    let m = DMatrix::from_fn(d, d, |i, j| dot(&normalized[i], &normalized[j]));

    let q_chol = q
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Geometry("Q is not positive definite".into()))?;
    let m_chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Geometry("M is not positive definite".into()))?;

    let g = &grad_r / r;
    let gamma = g.dot(&m_chol.solve(&g));
    let zeta = gamma / (1.0 + gamma);

    let det_scaled = q_chol.determinant() / (2.0 * std::f64::consts::PI).powi(d as i32);
    if !(det_scaled.is_finite() && det_scaled > 0.0) {
        return Err(Error::Geometry(format!("degenerate volume scale (det = {det_scaled})")));
    }
    let volume = det_scaled.powf(-0.5);

    Ok(ModelGeometry {
        r,
        grad_r,
        m,
        q,
        volume,
        gamma,
        zeta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn width_model(a: f64) -> GaussianPulseModel {
        GaussianPulseModel::covering(a, PulseParams::Width { center: 0.0 }, 16.0).unwrap()
    }

    fn sample_at(s: &SampledSignal, xi: i64) -> f64 {
        s.values[(xi - s.start) as usize]
    }

    #[test]
    fn signal_vector_values() {
        let model = width_model(2.0);
        let s = model.signal(&ParamPoint::scalar(4.0).unwrap()).unwrap();
        assert_eq!(sample_at(&s, 0), 2.0);
        assert_relative_eq!(sample_at(&s, 4), 2.0 * (-0.5f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(sample_at(&s, 4), 1.2131, epsilon = 1e-4);

        let both = GaussianPulseModel::covering(3.0, PulseParams::ShiftAndWidth, 8.0).unwrap();
        let s = both.signal(&ParamPoint::new(vec![0.3, 4.0]).unwrap()).unwrap();
        assert_relative_eq!(sample_at(&s, 0), 3.0 * (-0.09f64 / 32.0).exp(), max_relative = 1e-14);
    }

    #[test]
    fn recurrence_matches_direct_exp() {
        let mut out = vec![0.0; 301];
        gaussian_samples(1.7, 0.37, 13.3, -150, &mut out);
        for (i, v) in out.iter().enumerate() {
            let t = (-150 + i as i64) as f64 - 0.37;
            let exact = 1.7 * (-t * t / (2.0 * 13.3 * 13.3)).exp();
            assert!((v - exact).abs() <= 1e-13 * exact.max(1e-300), "i={i} {v} vs {exact}");
        }
    }

    #[test]
    fn non_positive_width_is_a_domain_error() {
        let model = width_model(2.0);
        assert!(matches!(model.signal(&ParamPoint::scalar(0.0).unwrap()), Err(Error::Domain(_))));
        assert!(matches!(model.signal(&ParamPoint::scalar(-1.0).unwrap()), Err(Error::Domain(_))));
        assert!(GaussianPulseModel::new(2.0, PulseParams::Shift { width: 0.0 }, 10).is_err());
        assert!(GaussianPulseModel::new(0.0, PulseParams::ShiftAndWidth, 10).is_err());
    }

    #[test]
    fn truncated_tail_is_negligible() {
        let model = width_model(2.0);
        for w in [0.5, 1.0, 4.0, 11.3, 16.0] {
            let tail = model.truncation_tail(&ParamPoint::scalar(w).unwrap()).unwrap();
            assert!(tail < 1e-12 * 2.0, "width {w}: tail {tail}");
        }
        // Too wide for the support.
        assert!(model.signal(&ParamPoint::scalar(16.5).unwrap()).is_err());
    }

    #[test]
    fn snr_matches_continuous_approximation() {
        let pi_sqrt = std::f64::consts::PI.sqrt();
        let r2 = snr(&width_model(2.0), &ParamPoint::scalar(4.0).unwrap()).unwrap().powi(2);
        assert_relative_eq!(r2, 16.0 * pi_sqrt, max_relative = 1e-3);
        assert_relative_eq!(r2, 28.359, max_relative = 1e-4);
        let r2_wide = snr(&width_model(2.0), &ParamPoint::scalar(8.0).unwrap()).unwrap().powi(2);
        assert_relative_eq!(r2_wide, 2.0 * r2, max_relative = 1e-6);
        for w in [1.1, 2.0, 3.3, 7.0, 15.0] {
            let r2 = snr(&width_model(2.0), &ParamPoint::scalar(w).unwrap()).unwrap().powi(2);
            assert_relative_eq!(r2, 4.0 * pi_sqrt * w, max_relative = 1e-3);
        }
    }

    #[test]
    fn correlation_properties() {
        let model = GaussianPulseModel::covering(2.0, PulseParams::ShiftAndWidth, 8.0).unwrap();
        let p = |a: f64, b: f64| ParamPoint::new(vec![a, b]).unwrap();
        assert_eq!(correlation(&model, &p(0.3, 4.0), &p(0.3, 4.0)).unwrap(), 1.0);
        let c = correlation(&model, &p(0.0, 4.0), &p(8.0, 4.0)).unwrap();
        // Continuous limit: exp(-Δ²/4σ²) = e^{-1}.
        assert!(c > 0.0 && c < 1.0);
        assert_relative_eq!(c, (-1.0f64).exp(), max_relative = 1e-6);
        let a = correlation(&model, &p(0.1, 3.0), &p(1.7, 5.5)).unwrap();
        let b = correlation(&model, &p(1.7, 5.5), &p(0.1, 3.0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn geometry_reference_values() {
        let both = GaussianPulseModel::covering(2.0, PulseParams::ShiftAndWidth, 8.0).unwrap();
        let g = geometry(&both, &ParamPoint::new(vec![0.0, 4.0]).unwrap()).unwrap();
        assert_relative_eq!(g.q[(0, 0)], 0.03125, max_relative = 0.01);
        assert_relative_eq!(g.q[(1, 1)], 0.046875, max_relative = 0.01);
        assert!(g.q[(0, 1)].abs() < 1e-12);

        let width = width_model(2.0);
        let g = geometry(&width, &ParamPoint::scalar(4.0).unwrap()).unwrap();
        assert_relative_eq!(g.gamma, 0.5, max_relative = 0.01);
        assert_relative_eq!(g.zeta, 1.0 / 3.0, max_relative = 0.01);
        let v_approx = 2.0 * (2.0 * std::f64::consts::PI / 3.0).sqrt() * 4.0;
        assert_relative_eq!(g.volume, v_approx, max_relative = 0.01);
        assert_relative_eq!(g.volume, 11.58, max_relative = 1e-3);

        let shift = GaussianPulseModel::covering(2.0, PulseParams::Shift { width: 4.0 }, 4.0).unwrap();
        let g = geometry(&shift, &ParamPoint::scalar(12.25).unwrap()).unwrap();
        assert!(g.grad_r[0].abs() < 1e-12);
        assert!(g.gamma.abs() < 1e-20 && g.zeta.abs() < 1e-20);
        assert_relative_eq!(g.q[(0, 0)], g.m[(0, 0)], max_relative = 1e-12);
    }

    #[test]
    fn geometry_rejects_degenerate_curvature() {
        struct Flat;
        impl SignalModel for Flat {
            fn dim(&self) -> usize {
                1
            }
            fn check(&self, _: &ParamPoint) -> Result<()> {
                Ok(())
            }
            fn signal(&self, _: &ParamPoint) -> Result<SampledSignal> {
                Ok(SampledSignal { start: 0, values: vec![1.0, 2.0] })
            }
            fn signal_with_gradient(&self, x: &ParamPoint) -> Result<(SampledSignal, Vec<SampledSignal>)> {
                let s = self.signal(x)?;
                let g = SampledSignal { start: 0, values: vec![0.0, 0.0] };
                Ok((s, vec![g]))
            }
        }
        assert!(matches!(geometry(&Flat, &ParamPoint::scalar(1.0).unwrap()), Err(Error::Geometry(_))));
    }

    #[test]
    fn trimming_keeps_significant_samples() {
        let s = SampledSignal { start: -3, values: vec![1e-30, 1e-5, 1.0, 0.5, 1e-25] };
        let t = s.trimmed(1e-10);
        assert_eq!(t.start, -2);
        assert_eq!(t.values, vec![1e-5, 1.0, 0.5]);
    }
}
