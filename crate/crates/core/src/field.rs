//! Matched filtering and the log-likelihood-ratio field.
//!
//! For identity noise covariance the LLR at a hypothesized point is
//! `λ(x) = s(x)·m − r²(x)/2` and the normalized filter output is
//! `y(x) = s(x)·m / r(x)`. Peaks are located on a coarse lattice and then
//! refined by exact re-evaluation on a finer lattice.

use std::ops::Range;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GaussianPulseModel, ParamPoint, PulseParams, SampledSignal, SignalModel};
use crate::numeric::dot;

/// Observation vector indexed by integer `ξ = start, start+1, …`.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    start: i64,
    samples: Vec<f64>,
}

impl Measurement {
    pub fn new(start: i64, samples: Vec<f64>) -> Result<Self> {
        if let Some(v) = samples.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite measurement sample {v}")));
        }
        Ok(Self { start, samples })
    }

    pub fn zeros(start: i64, len: usize) -> Self {
        Self {
            start,
            samples: vec![0.0; len],
        }
    }

    /// Measurement equal to a noiseless signal, padded with `pad` zeros each side.
    pub fn from_signal(s: &SampledSignal, pad: usize) -> Self {
        let mut m = Self::zeros(s.start - pad as i64, s.values.len() + 2 * pad);
        m.add_signal(s).expect("padded measurement covers the signal");
        m
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn end(&self) -> i64 {
        self.start + self.samples.len() as i64
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Mutable access for in-place noise generation. Callers keep samples finite.
    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    /// Samples aligned with the support of `s`.
    pub fn window(&self, s: &SampledSignal) -> Result<&[f64]> {
        if s.start < self.start || s.end() > self.end() {
            return Err(Error::Range(format!(
                "signal support [{}, {}) exceeds measurement [{}, {})",
                s.start,
                s.end(),
                self.start,
                self.end()
            )));
        }
        let lo = (s.start - self.start) as usize;
        Ok(&self.samples[lo..lo + s.values.len()])
    }

    /// Adds a signal in place, `m ← m + s`.
    pub fn add_signal(&mut self, s: &SampledSignal) -> Result<()> {
        self.window(s)?;
        let lo = (s.start - self.start) as usize;
        for (m, v) in self.samples[lo..lo + s.values.len()].iter_mut().zip(&s.values) {
            *m += v;
        }
        Ok(())
    }
}

/// Matched filter output `Σ_ξ s_ξ(x)·m_ξ`.
pub fn matched_filter<M: SignalModel + ?Sized>(model: &M, x: &ParamPoint, m: &Measurement) -> Result<f64> {
    let s = model.signal(x)?;
    Ok(dot(&s.values, m.window(&s)?))
}

/// LLR value at one hypothesized point together with its normalized filter output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LlrValue {
    pub llr: f64,
    pub y: f64,
    pub r: f64,
}

pub fn llr<M: SignalModel + ?Sized>(model: &M, x: &ParamPoint, m: &Measurement) -> Result<LlrValue> {
    let s = model.signal(x)?;
    llr_of_signal(&s, m)
}

fn llr_of_signal(s: &SampledSignal, m: &Measurement) -> Result<LlrValue> {
    let r2 = s.norm_sq();
    if r2 <= 0.0 {
        return Err(Error::Domain("zero-SNR hypothesis has no normalized output".into()));
    }
    let mf = dot(&s.values, m.window(s)?);
    let r = r2.sqrt();
    Ok(LlrValue {
        llr: mf - 0.5 * r2,
        y: mf / r,
        r,
    })
}

/// Matched filter output for every integer shift of a fixed-width pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftFilterOutput {
    /// Shift `ξ_s` of `values[0]`.
    pub start: i64,
    pub values: Vec<f64>,
    /// Indices whose pulse support fits inside the measurement without wrap-around.
    pub interior: Range<usize>,
}

impl ShiftFilterOutput {
    pub fn shift_at(&self, i: usize) -> i64 {
        self.start + i as i64
    }

    /// Strict local maxima inside the interior (ties resolve to the lower index).
    pub fn local_maxima(&self) -> Vec<usize> {
        local_maxima_1d(&self.values, self.interior.clone())
    }
}

/// Indices `i` with `v[i-1] < v[i] >= v[i+1]`, both neighbors inside `range`.
pub fn local_maxima_1d(v: &[f64], range: Range<usize>) -> Vec<usize> {
    let mut out = Vec::new();
    if range.len() < 3 {
        return out;
    }
    for i in range.start + 1..range.end - 1 {
        if v[i] > v[i - 1] && v[i] >= v[i + 1] {
            out.push(i);
        }
    }
    out
}

/// Circular FFT correlator of a measurement against every integer shift of a
/// fixed-width pulse.
pub struct ShiftCorrelator {
    len: usize,
    radius: usize,
    kernel: Vec<Complex<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ShiftCorrelator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ShiftCorrelator")
            .field("len", &self.len)
            .field("radius", &self.radius)
            .finish()
    }
}

impl ShiftCorrelator {
    pub fn new(model: &GaussianPulseModel, len: usize) -> Result<Self> {
        if !matches!(model.params(), PulseParams::Shift { .. }) {
            return Err(Error::Domain("FFT shift search needs a shift-only pulse model".into()));
        }
        let radius = model.support_radius();
        if len < 2 * radius + 3 {
            return Err(Error::Range(format!(
                "measurement length {len} too short for support radius {radius}"
            )));
        }
        let pulse = model.signal(&ParamPoint::scalar(0.0)?)?;
        let mut kernel = vec![Complex::new(0.0, 0.0); len];
        for (i, v) in pulse.values.iter().enumerate() {
            let j = pulse.start + i as i64;
            kernel[j.rem_euclid(len as i64) as usize] = Complex::new(*v, 0.0);
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        forward.process(&mut kernel);
        let scale = 1.0 / len as f64;
        for k in kernel.iter_mut() {
            *k = k.conj() * scale;
        }
        Ok(Self {
            len,
            radius,
            kernel,
            forward,
            inverse,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Shifts whose support lies inside the measurement.
    pub fn interior(&self) -> Range<usize> {
        self.radius..self.len - self.radius
    }

    pub fn correlate(&self, m: &Measurement) -> Result<ShiftFilterOutput> {
        if m.len() != self.len {
            return Err(Error::Range(format!(
                "correlator planned for {} samples, measurement has {}",
                self.len,
                m.len()
            )));
        }
        let mut buf: Vec<Complex<f64>> = m.samples().iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.apply(&mut buf);
        Ok(ShiftFilterOutput {
            start: m.start(),
            values: buf.iter().map(|c| c.re).collect(),
            interior: self.interior(),
        })
    }

    /// Correlates two real sequences with one complex transform pair.
    ///
    /// `buf` is scratch space; outputs are written to `out_a` and `out_b`.
    pub fn correlate_pair(
        &self,
        a: &[f64],
        b: &[f64],
        buf: &mut Vec<Complex<f64>>,
        out_a: &mut Vec<f64>,
        out_b: &mut Vec<f64>,
    ) {
        assert!(a.len() == self.len && b.len() == self.len, "sequence length must match the plan");
        buf.clear();
        buf.extend(a.iter().zip(b).map(|(&x, &y)| Complex::new(x, y)));
        self.apply(buf);
        out_a.clear();
        out_b.clear();
        out_a.extend(buf.iter().map(|c| c.re));
        out_b.extend(buf.iter().map(|c| c.im));
    }

    fn apply(&self, buf: &mut [Complex<f64>]) {
        self.forward.process(buf);
        for (z, k) in buf.iter_mut().zip(&self.kernel) {
            *z *= k;
        }
        self.inverse.process(buf);
    }
}

/// Matched filter output for all integer shifts, computed by FFT.
pub fn matched_filter_fft(model: &GaussianPulseModel, m: &Measurement) -> Result<ShiftFilterOutput> {
    ShiftCorrelator::new(model, m.len())?.correlate(m)
}

/// One axis of a search lattice. Coarse nodes sit on every `ratio`-th fine node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisGrid {
    pub lo: f64,
    pub hi: f64,
    pub coarse: f64,
    pub fine: f64,
}

impl AxisGrid {
    pub fn new(lo: f64, hi: f64, coarse: f64, fine: f64) -> Result<Self> {
        let g = Self { lo, hi, coarse, fine };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.lo, self.hi, self.coarse, self.fine].iter().all(|v| v.is_finite());
        if !finite || self.coarse <= 0.0 || self.fine <= 0.0 {
            return Err(Error::Config(format!("invalid grid axis {self:?}")));
        }
        if self.hi <= self.lo {
            return Err(Error::Config(format!("empty grid: [{}, {}]", self.lo, self.hi)));
        }
        let ratio = self.coarse / self.fine;
        if ratio < 1.0 - 1e-9 || (ratio - ratio.round()).abs() > 1e-6 * ratio {
            return Err(Error::Config(format!(
                "fine spacing {} does not divide coarse spacing {}",
                self.fine, self.coarse
            )));
        }
        if self.coarse_len() < 3 {
            return Err(Error::Config(format!(
                "grid [{}, {}] with spacing {} has no interior node",
                self.lo, self.hi, self.coarse
            )));
        }
        Ok(())
    }

    pub fn ratio(&self) -> usize {
        (self.coarse / self.fine).round() as usize
    }

    pub fn coarse_len(&self) -> usize {
        ((self.hi - self.lo) / self.coarse + 1e-9).floor() as usize + 1
    }

    pub fn fine_len(&self) -> usize {
        (self.coarse_len() - 1) * self.ratio() + 1
    }

    pub fn fine_at(&self, j: usize) -> f64 {
        self.lo + j as f64 * self.fine
    }

    pub fn coarse_at(&self, i: usize) -> f64 {
        self.fine_at(i * self.ratio())
    }

    /// Upper end of the lattice actually searched.
    pub fn last(&self) -> f64 {
        self.fine_at(self.fine_len() - 1)
    }
}

/// How a coarse local maximum is refined on the fine lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Refinement {
    /// Every fine node within ±1 coarse cell.
    #[default]
    Dense,
    /// Successive ±1-cell boxes, each `factor` times finer than the last,
    /// down to the fine spacing.
    Zoom { factor: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub axes: Vec<AxisGrid>,
    #[serde(default)]
    pub refinement: Refinement,
}

impl SearchGrid {
    pub fn new(axes: Vec<AxisGrid>) -> Result<Self> {
        let g = Self {
            axes,
            refinement: Refinement::Dense,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_refinement(mut self, refinement: Refinement) -> Result<Self> {
        self.refinement = refinement;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::Config("search grid has no axes".into()));
        }
        for a in &self.axes {
            a.validate()?;
        }
        if let Refinement::Zoom { factor } = self.refinement {
            if factor < 2 {
                return Err(Error::Config("zoom factor must be at least 2".into()));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn point_at_fine(&self, idx: &[usize]) -> ParamPoint {
        ParamPoint::new(self.axes.iter().zip(idx).map(|(a, &j)| a.fine_at(j)).collect())
            .expect("grid coordinates are finite")
    }
}

/// A coarse-lattice local maximum before refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarsePeak {
    /// Row-major index into the coarse field (last axis fastest).
    pub flat: usize,
    pub index: Vec<usize>,
    pub llr: f64,
}

/// A refined LLR peak.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPeak {
    pub location: ParamPoint,
    /// Fine-lattice index of `location` on each axis.
    pub fine_index: Vec<usize>,
    pub llr: f64,
    pub y: f64,
    /// LLR at the coarse node the refinement started from.
    pub coarse_llr: f64,
}

struct BankEntry {
    signal: SampledSignal,
    half_r2: f64,
}

// Bank signals drop samples below this fraction of their peak; the dropped
// terms sit far below double-precision rounding of the filter sum.
const BANK_TRIM: f64 = 1e-17;

/// Precomputed coarse-lattice filter bank for repeated peak searches with one
/// model and grid.
pub struct PeakSearch<'a, M: SignalModel + ?Sized> {
    model: &'a M,
    grid: SearchGrid,
    shape: Vec<usize>,
    bank: Vec<BankEntry>,
}

impl<'a, M: SignalModel + ?Sized> PeakSearch<'a, M> {
    pub fn new(model: &'a M, grid: SearchGrid) -> Result<Self> {
        grid.validate()?;
        if grid.dim() != model.dim() {
            return Err(Error::Config(format!(
                "grid has {} axes, model has {} parameters",
                grid.dim(),
                model.dim()
            )));
        }
        let shape: Vec<usize> = grid.axes.iter().map(AxisGrid::coarse_len).collect();
        let total: usize = shape.iter().product();
        let mut bank = Vec::with_capacity(total);
        for flat in 0..total {
            let idx = unflatten(flat, &shape);
            let x = ParamPoint::new(grid.axes.iter().zip(&idx).map(|(a, &i)| a.coarse_at(i)).collect())?;
            let signal = model.signal(&x)?;
            let half_r2 = 0.5 * signal.norm_sq();
            bank.push(BankEntry {
                signal: signal.trimmed(BANK_TRIM),
                half_r2,
            });
        }
        Ok(Self {
            model,
            grid,
            shape,
            bank,
        })
    }

    pub fn grid(&self) -> &SearchGrid {
        &self.grid
    }

    pub fn model(&self) -> &M {
        self.model
    }

    pub fn coarse_shape(&self) -> &[usize] {
        &self.shape
    }

    /// Smallest and largest sample index touched by any coarse filter.
    pub fn coarse_support(&self) -> (i64, i64) {
        let lo = self.bank.iter().map(|b| b.signal.start).min().unwrap_or(0);
        let hi = self.bank.iter().map(|b| b.signal.end()).max().unwrap_or(0);
        (lo, hi)
    }

    pub fn coarse_point(&self, flat: usize) -> ParamPoint {
        let idx = unflatten(flat, &self.shape);
        ParamPoint::new(self.grid.axes.iter().zip(&idx).map(|(a, &i)| a.coarse_at(i)).collect())
            .expect("grid coordinates are finite")
    }

    /// Whether a coarse node lies on the boundary of any axis.
    pub fn is_boundary(&self, flat: usize) -> bool {
        unflatten(flat, &self.shape)
            .iter()
            .zip(&self.shape)
            .any(|(&i, &n)| i == 0 || i + 1 == n)
    }

    /// LLR at every coarse node, row-major.
    pub fn coarse_field(&self, m: &Measurement) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.bank.len());
        self.coarse_field_into(m, &mut out)?;
        Ok(out)
    }

    pub fn coarse_field_into(&self, m: &Measurement, out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        for b in &self.bank {
            out.push(dot(&b.signal.values, m.window(&b.signal)?) - b.half_r2);
        }
        Ok(())
    }

    /// Interior coarse nodes that beat their lower neighbor and are not
    /// beaten by their upper neighbor along every axis.
    pub fn local_maxima(&self, field: &[f64]) -> Vec<CoarsePeak> {
        self.local_maxima_above(field, f64::NEG_INFINITY)
    }

    /// Local maxima with LLR at least `floor`.
    pub fn local_maxima_above(&self, field: &[f64], floor: f64) -> Vec<CoarsePeak> {
        let d = self.shape.len();
        let mut strides = vec![1usize; d];
        for a in (0..d.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * self.shape[a + 1];
        }
        let mut out = Vec::new();
        let mut idx = vec![0usize; d];
        for (flat, &v) in field.iter().enumerate() {
            if flat > 0 {
                let mut a = d - 1;
                idx[a] += 1;
                while idx[a] == self.shape[a] {
                    idx[a] = 0;
                    a -= 1;
                    idx[a] += 1;
                }
            }
            if v < floor {
                continue;
            }
            let is_max = (0..d).all(|a| {
                idx[a] > 0
                    && idx[a] + 1 < self.shape[a]
                    && v > field[flat - strides[a]]
                    && v >= field[flat + strides[a]]
            });
            if is_max {
                out.push(CoarsePeak {
                    flat,
                    index: idx.clone(),
                    llr: v,
                });
            }
        }
        out
    }

    /// LLR and normalized output at a fine-lattice node.
    pub fn evaluate_fine(&self, m: &Measurement, fine_index: &[usize]) -> Result<LlrValue> {
        let x = self.grid.point_at_fine(fine_index);
        llr_of_signal(&self.model.signal(&x)?, m)
    }

    /// Refines one coarse local maximum on the fine lattice.
    pub fn refine(&self, m: &Measurement, peak: &CoarsePeak) -> Result<FieldPeak> {
        let axes = &self.grid.axes;
        let centers: Vec<usize> = peak.index.iter().zip(axes).map(|(&i, a)| i * a.ratio()).collect();
        let (best_idx, best) = match self.grid.refinement {
            Refinement::Dense => {
                let ranges: Vec<(usize, usize)> = centers
                    .iter()
                    .zip(axes)
                    .map(|(&c, a)| (c.saturating_sub(a.ratio()), (c + a.ratio()).min(a.fine_len() - 1)))
                    .collect();
                self.best_in_box(m, &ranges, &vec![1; axes.len()])?
            }
            Refinement::Zoom { factor } => {
                let mut center = centers;
                let mut span: Vec<usize> = axes.iter().map(AxisGrid::ratio).collect();
                loop {
                    let step: Vec<usize> = span.iter().map(|&s| (s / factor).max(1)).collect();
                    let ranges: Vec<(usize, usize)> = center
                        .iter()
                        .zip(&span)
                        .zip(axes)
                        .map(|((&c, &s), a)| (c.saturating_sub(s), (c + s).min(a.fine_len() - 1)))
                        .collect();
                    let (idx, val) = self.best_in_box_stepped(m, &ranges, &center, &step)?;
                    center = idx;
                    if step.iter().all(|&s| s == 1) {
                        break (center, val);
                    }
                    span = step;
                }
            }
        };
        Ok(FieldPeak {
            location: self.grid.point_at_fine(&best_idx),
            fine_index: best_idx,
            llr: best.llr,
            y: best.y,
            coarse_llr: peak.llr,
        })
    }

    fn best_in_box(
        &self,
        m: &Measurement,
        ranges: &[(usize, usize)],
        step: &[usize],
    ) -> Result<(Vec<usize>, LlrValue)> {
        let origin: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        self.scan(m, ranges, &origin, step)
    }

    // Box nodes are `center + k·step` clipped to `ranges`, so every level
    // keeps its center on the lattice.
    fn best_in_box_stepped(
        &self,
        m: &Measurement,
        ranges: &[(usize, usize)],
        center: &[usize],
        step: &[usize],
    ) -> Result<(Vec<usize>, LlrValue)> {
        let origin: Vec<usize> = ranges
            .iter()
            .zip(center)
            .zip(step)
            .map(|((r, &c), &s)| c - ((c - r.0) / s) * s)
            .collect();
        self.scan(m, ranges, &origin, step)
    }

    fn scan(
        &self,
        m: &Measurement,
        ranges: &[(usize, usize)],
        origin: &[usize],
        step: &[usize],
    ) -> Result<(Vec<usize>, LlrValue)> {
        let d = ranges.len();
        let mut idx = origin.to_vec();
        let mut best: Option<(Vec<usize>, LlrValue)> = None;
        loop {
            let v = self.evaluate_fine(m, &idx)?;
            if best.as_ref().is_none_or(|(_, b)| v.llr > b.llr) {
                best = Some((idx.clone(), v));
            }
            // Odometer increment, last axis fastest.
            let mut a = d;
            loop {
                if a == 0 {
                    return Ok(best.expect("box has at least one node"));
                }
                a -= 1;
                if idx[a] + step[a] <= ranges[a].1 {
                    idx[a] += step[a];
                    break;
                }
                idx[a] = origin[a];
            }
        }
    }

    /// All refined peaks whose coarse maximum passes `keep`, sorted by location.
    pub fn find_peaks_where<F: Fn(&CoarsePeak) -> bool>(&self, m: &Measurement, keep: F) -> Result<Vec<FieldPeak>> {
        let field = self.coarse_field(m)?;
        let mut peaks = Vec::new();
        for cp in self.local_maxima(&field).iter().filter(|p| keep(p)) {
            peaks.push(self.refine(m, cp)?);
        }
        peaks.sort_by(|a, b| a.fine_index.cmp(&b.fine_index));
        peaks.dedup_by(|a, b| a.fine_index == b.fine_index);
        Ok(peaks)
    }

    pub fn find_peaks(&self, m: &Measurement) -> Result<Vec<FieldPeak>> {
        self.find_peaks_where(m, |_| true)
    }
}

fn unflatten(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for a in (0..shape.len()).rev() {
        idx[a] = flat % shape[a];
        flat /= shape[a];
    }
    idx
}

/// Locates and refines every local maximum of the LLR field on `grid`.
pub fn find_peaks<M: SignalModel + ?Sized>(model: &M, m: &Measurement, grid: &SearchGrid) -> Result<Vec<FieldPeak>> {
    PeakSearch::new(model, grid.clone())?.find_peaks(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{snr, correlation};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn width_model() -> GaussianPulseModel {
        GaussianPulseModel::covering(2.0, PulseParams::Width { center: 0.0 }, 16.0).unwrap()
    }

    fn noise(start: i64, len: usize, seed: u64) -> Measurement {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Measurement::new(start, (0..len).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
    }

    #[test]
    fn matched_filter_identities() {
        let model = width_model();
        let x = ParamPoint::scalar(4.0).unwrap();
        let s = model.signal(&x).unwrap();
        let m = Measurement::from_signal(&s, 3);
        assert_relative_eq!(matched_filter(&model, &x, &m).unwrap(), s.norm_sq(), max_relative = 1e-15);
        let zero = Measurement::zeros(-200, 401);
        assert_eq!(matched_filter(&model, &x, &zero).unwrap(), 0.0);

        let x2 = ParamPoint::scalar(6.5).unwrap();
        let m2 = Measurement::from_signal(&model.signal(&x2).unwrap(), 3);
        let want = snr(&model, &x).unwrap() * snr(&model, &x2).unwrap() * correlation(&model, &x, &x2).unwrap();
        assert_relative_eq!(matched_filter(&model, &x, &m2).unwrap(), want, max_relative = 1e-12);
    }

    #[test]
    fn matched_filter_range_error() {
        let model = width_model();
        let short = Measurement::zeros(-10, 21);
        assert!(matches!(
            matched_filter(&model, &ParamPoint::scalar(4.0).unwrap(), &short),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn llr_identities() {
        let model = width_model();
        let x = ParamPoint::scalar(3.0).unwrap();
        let s = model.signal(&x).unwrap();
        let r2 = s.norm_sq();
        let on = llr(&model, &x, &Measurement::from_signal(&s, 0)).unwrap();
        assert_relative_eq!(on.llr, 0.5 * r2, max_relative = 1e-14);
        assert_relative_eq!(on.y, r2.sqrt(), max_relative = 1e-14);
        let off = llr(&model, &x, &Measurement::zeros(s.start, s.values.len())).unwrap();
        assert_relative_eq!(off.llr, -0.5 * r2, max_relative = 1e-14);
    }

    #[test]
    fn fft_matches_direct_filter() {
        let model = GaussianPulseModel::covering(1.3, PulseParams::Shift { width: 4.0 }, 4.0).unwrap();
        let m = noise(-500, 1000, 7);
        let out = matched_filter_fft(&model, &m).unwrap();
        assert_eq!(out.interior, 32..968);
        let mut worst = 0.0f64;
        for i in out.interior.clone() {
            let x = ParamPoint::scalar(out.shift_at(i) as f64).unwrap();
            let direct = matched_filter(&model, &x, &m).unwrap();
            worst = worst.max((out.values[i] - direct).abs() / direct.abs().max(1e-3));
        }
        assert!(worst < 1e-8, "worst relative deviation {worst}");
    }

    #[test]
    fn fft_of_injected_pulse_peaks_at_injection() {
        let model = GaussianPulseModel::covering(1.0, PulseParams::Shift { width: 4.0 }, 4.0).unwrap();
        let mut m = Measurement::zeros(0, 256);
        m.add_signal(&model.signal(&ParamPoint::scalar(100.0).unwrap()).unwrap()).unwrap();
        let out = matched_filter_fft(&model, &m).unwrap();
        let argmax = out
            .interior
            .clone()
            .max_by(|&a, &b| out.values[a].total_cmp(&out.values[b]))
            .unwrap();
        assert_eq!(out.shift_at(argmax), 100);

        let zero = matched_filter_fft(&model, &Measurement::zeros(0, 256)).unwrap();
        assert!(zero.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn fft_pair_matches_single() {
        let model = GaussianPulseModel::covering(1.0, PulseParams::Shift { width: 3.0 }, 3.0).unwrap();
        let a = noise(0, 512, 1);
        let b = noise(0, 512, 2);
        let corr = ShiftCorrelator::new(&model, 512).unwrap();
        let (mut buf, mut oa, mut ob) = (Vec::new(), Vec::new(), Vec::new());
        corr.correlate_pair(a.samples(), b.samples(), &mut buf, &mut oa, &mut ob);
        let sa = corr.correlate(&a).unwrap();
        let sb = corr.correlate(&b).unwrap();
        for i in 0..512 {
            assert!((oa[i] - sa.values[i]).abs() < 1e-10);
            assert!((ob[i] - sb.values[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn fft_requires_shift_model() {
        assert!(matches!(
            matched_filter_fft(&width_model(), &Measurement::zeros(0, 1024)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn grid_validation() {
        assert!(AxisGrid::new(1.0, 1.0, 0.2, 0.002).is_err());
        assert!(AxisGrid::new(1.0, 1.3, 0.2, 0.002).is_err());
        assert!(AxisGrid::new(1.0, 16.0, 0.2, 0.003).is_err());
        let g = AxisGrid::new(1.1, 16.0, 0.2, 0.002).unwrap();
        assert_eq!(g.coarse_len(), 75);
        assert_eq!(g.ratio(), 100);
        assert_eq!(g.fine_len(), 7401);
        assert!((g.last() - 15.9).abs() < 1e-9);
        assert!(matches!(SearchGrid::new(vec![]), Err(Error::Config(_))));
    }

    #[test]
    fn noiseless_peak_is_found_at_injection() {
        let model = width_model();
        let grid = SearchGrid::new(vec![AxisGrid::new(1.1, 16.0, 0.2, 0.002).unwrap()]).unwrap();
        let xs = ParamPoint::scalar(4.242).unwrap();
        let s = model.signal(&xs).unwrap();
        let m = Measurement::from_signal(&s, 200);
        let peaks = find_peaks(&model, &m, &grid).unwrap();
        assert_eq!(peaks.len(), 1);
        assert!((peaks[0].location.coords()[0] - 4.242).abs() < 1e-9);
        assert_relative_eq!(peaks[0].llr, 0.5 * s.norm_sq(), max_relative = 1e-12);
    }

    #[test]
    fn zoom_refinement_matches_dense_near_a_strong_peak() {
        let model = GaussianPulseModel::covering(6.0, PulseParams::ShiftAndWidth, 8.0).unwrap();
        let axes = vec![
            AxisGrid::new(-4.0, 4.0, 1.0, 0.01).unwrap(),
            AxisGrid::new(2.0, 6.0, 0.2, 0.002).unwrap(),
        ];
        let xs = ParamPoint::new(vec![0.37, 4.126]).unwrap();
        let mut m = noise(-80, 161, 3);
        m.add_signal(&model.signal(&xs).unwrap()).unwrap();
        let dense = find_peaks(&model, &m, &SearchGrid::new(axes.clone()).unwrap()).unwrap();
        let zoom = SearchGrid::new(axes).unwrap().with_refinement(Refinement::Zoom { factor: 10 }).unwrap();
        let zoomed = find_peaks(&model, &m, &zoom).unwrap();
        let top = |p: &[FieldPeak]| p.iter().cloned().max_by(|a, b| a.llr.total_cmp(&b.llr)).unwrap();
        assert_eq!(top(&dense).fine_index, top(&zoomed).fine_index);
    }

    #[test]
    fn peaks_respect_quadratic_bound_and_are_deterministic() {
        let model = width_model();
        let grid = SearchGrid::new(vec![AxisGrid::new(1.1, 16.0, 0.2, 0.002).unwrap()]).unwrap();
        let search = PeakSearch::new(&model, grid).unwrap();
        for seed in 0..20 {
            let m = noise(-128, 257, seed);
            let a = search.find_peaks(&m).unwrap();
            let b = search.find_peaks(&m).unwrap();
            assert_eq!(a, b);
            for p in &a {
                assert!(p.llr <= 0.5 * p.y * p.y + 1e-12);
                assert!(p.llr >= p.coarse_llr);
            }
        }
    }

    #[test]
    fn plateau_ties_resolve_to_lower_index() {
        let v = [0.0, 1.0, 1.0, 0.0, 2.0, 0.5];
        assert_eq!(local_maxima_1d(&v, 0..6), vec![1, 4]);
    }
}
