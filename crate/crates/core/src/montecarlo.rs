//! Seeded Monte Carlo experiments.
//!
//! Every trial draws its noise from its own counter-based stream keyed by
//! `(seed, trial index)`. Trials are grouped into fixed-size chunks whose
//! accumulators are merged in chunk order, so results do not depend on the
//! number of workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decision::{bayes_statistic_numeric, PriorCostSpec, QuadSpec, Threshold};
use crate::error::{Error, Result};
use crate::field::{AxisGrid, FieldPeak, Measurement, PeakSearch, Refinement, SearchGrid, ShiftCorrelator};
use crate::model::{geometry, snr, GaussianPulseModel, ParamPoint, PulseParams, SignalModel};
use crate::numeric::dot;
use crate::prediction::{cramer_rao_cov, fmt_sig9, LocalStats};

/// Default width search domain for the width-only experiments.
pub const WIDTH_DOMAIN: (f64, f64) = (1.1, 16.0);

/// Noise stream for one trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Fills `buf` with independent standard normal variates.
pub fn fill_noise<R: Rng>(rng: &mut R, buf: &mut [f64]) {
    for v in buf.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialConfig {
    pub n_trials: u64,
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub workers: usize,
}

impl TrialConfig {
    pub fn new(n_trials: u64, seed: u64) -> Self {
        Self {
            n_trials,
            seed,
            workers: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::Config("n_trials must be at least 1".into()));
        }
        Ok(())
    }
}

// Runs `unit` over 0..n_units in fixed chunks and merges chunk accumulators in order.
fn run_units<A, I, T, M>(workers: usize, n_units: u64, chunk: u64, init: I, unit: T, mut merge: M) -> Result<()>
where
    A: Send,
    I: Fn() -> A + Sync,
    T: Fn(&mut A, u64) -> Result<()> + Sync,
    M: FnMut(A),
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let n_chunks = n_units.div_ceil(chunk);
    let batch = 4 * pool.current_num_threads() as u64;
    let mut c0 = 0;
    while c0 < n_chunks {
        let c1 = (c0 + batch).min(n_chunks);
        let results: Vec<Result<A>> = pool.install(|| {
            (c0..c1)
                .into_par_iter()
                .map(|c| {
                    let mut acc = init();
                    for u in c * chunk..((c + 1) * chunk).min(n_units) {
                        unit(&mut acc, u)?;
                    }
                    Ok(acc)
                })
                .collect()
        });
        for r in results {
            merge(r?);
        }
        c0 = c1;
    }
    Ok(())
}

/// Fine-grid event counts with the sliding-window density estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityHistogram {
    pub centers: Vec<f64>,
    pub counts: Vec<u64>,
    /// Events per unit parameter per trial, averaged over `2·half_window + 1`
    /// bins (fewer at the edges, where the window is truncated).
    pub density: Vec<f64>,
    pub bin_width: f64,
    pub half_window: usize,
    pub n_trials: u64,
}

impl DensityHistogram {
    pub fn new(centers: Vec<f64>, counts: Vec<u64>, bin_width: f64, half_window: usize, n_trials: u64) -> Self {
        let n = counts.len();
        let mut prefix = vec![0u64; n + 1];
        for i in 0..n {
            prefix[i + 1] = prefix[i] + counts[i];
        }
        let density = (0..n)
            .map(|j| {
                let lo = j.saturating_sub(half_window);
                let hi = (j + half_window + 1).min(n);
                (prefix[hi] - prefix[lo]) as f64 / ((hi - lo) as f64 * bin_width * n_trials as f64)
            })
            .collect();
        Self {
            centers,
            counts,
            density,
            bin_width,
            half_window,
            n_trials,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Full smoothing window width in parameter units.
    pub fn window_width(&self) -> f64 {
        (2 * self.half_window + 1) as f64 * self.bin_width
    }

    pub fn riemann_integral(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bin_width
    }

    /// Center and value of the largest smoothed density, if any events were seen.
    pub fn peak(&self) -> Option<(f64, f64)> {
        let (i, v) = self
            .density
            .iter()
            .enumerate()
            .fold((0, 0.0), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
        (v > 0.0).then(|| (self.centers[i], v))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,count,density\n");
        for i in 0..self.counts.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                fmt_sig9(self.centers[i]),
                self.counts[i],
                fmt_sig9(self.density[i])
            ));
        }
        out
    }
}

/// Location of the global LLR maximum over a search grid.
#[derive(Debug, Clone, PartialEq)]
pub enum Maximizer {
    /// Refined interior maximum.
    Interior(FieldPeak),
    /// The largest value sits on the grid boundary.
    Boundary { flat: usize, llr: f64 },
    /// Every interior maximum fell below the refinement floor.
    BelowFloor,
}

/// Global maximizer of the LLR field. Interior coarse maxima at or above
/// `floor` are refined; the largest refined value competes with the largest
/// coarse value, which wins only if it lies on the boundary.
pub fn global_maximizer<M: SignalModel + ?Sized>(
    search: &PeakSearch<'_, M>,
    m: &Measurement,
    field: &[f64],
    floor: f64,
) -> Result<Maximizer> {
    let refined = refined_maxima(search, m, field, floor)?;
    Ok(pick_maximizer(search, field, refined))
}

/// Refined interior maxima whose coarse LLR is at least `floor`.
pub fn refined_maxima<M: SignalModel + ?Sized>(
    search: &PeakSearch<'_, M>,
    m: &Measurement,
    field: &[f64],
    floor: f64,
) -> Result<Vec<FieldPeak>> {
    search
        .local_maxima_above(field, floor)
        .iter()
        .map(|cp| search.refine(m, cp))
        .collect()
}

fn pick_maximizer<M: SignalModel + ?Sized>(search: &PeakSearch<'_, M>, field: &[f64], refined: Vec<FieldPeak>) -> Maximizer {
    let (gi, gv) = field
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
    let best = refined.into_iter().fold(None::<FieldPeak>, |b, p| match b {
        Some(b) if b.llr >= p.llr => Some(b),
        _ => Some(p),
    });
    if search.is_boundary(gi) && best.as_ref().is_none_or(|b| gv > b.llr) {
        return Maximizer::Boundary { flat: gi, llr: gv };
    }
    best.map_or(Maximizer::BelowFloor, Maximizer::Interior)
}

fn width_search(
    amplitude: f64,
    domain: (f64, f64),
    coarse: f64,
    fine: f64,
) -> Result<(GaussianPulseModel, SearchGrid)> {
    let model = GaussianPulseModel::covering(amplitude, PulseParams::Width { center: 0.0 }, domain.1)?;
    let grid = SearchGrid::new(vec![AxisGrid::new(domain.0, domain.1, coarse, fine)?])?;
    Ok((model, grid))
}

// Coarse width filters folded about the pulse center: with the pulse
// symmetric, s·m = s₀m₀ + Σ_k s_k·(m_k + m₋ₖ).
struct FoldedBank {
    radius: usize,
    half: Vec<Vec<f64>>,
    half_r2: Vec<f64>,
}

impl FoldedBank {
    fn new(model: &GaussianPulseModel, grid: &AxisGrid) -> Result<Self> {
        let radius = model.support_radius();
        let mut half = Vec::new();
        let mut half_r2 = Vec::new();
        for i in 0..grid.coarse_len() {
            let s = model.signal(&ParamPoint::scalar(grid.coarse_at(i))?)?;
            debug_assert_eq!(s.start, -(radius as i64));
            let mut h = s.values[radius..].to_vec();
            let floor = 1e-17 * h[0];
            while h.len() > 1 && h[h.len() - 1] < floor {
                h.pop();
            }
            half_r2.push(0.5 * s.norm_sq());
            half.push(h);
        }
        Ok(Self { radius, half, half_r2 })
    }

    fn field_into(&self, m: &[f64], folded: &mut Vec<f64>, out: &mut Vec<f64>) {
        let r = self.radius;
        folded.clear();
        folded.push(m[r]);
        folded.extend((1..=r).map(|k| m[r + k] + m[r - k]));
        out.clear();
        for (h, hr2) in self.half.iter().zip(&self.half_r2) {
            out.push(dot(h, &folded[..h.len()]) - hr2);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaSigmaConfig {
    pub amplitude: f64,
    /// Reference width `σ0` of the lumped threshold.
    pub reference_width: f64,
    pub lambda0: f64,
    pub domain: (f64, f64),
    pub coarse: f64,
    pub fine: f64,
    /// Fine bins on each side of the smoothing window.
    pub half_window: usize,
    /// Interior coarse maxima more than this far below the lowest threshold are not refined.
    pub refine_margin: f64,
    pub trials: TrialConfig,
}

impl FaSigmaConfig {
    pub fn new(amplitude: f64, lambda0: f64, trials: TrialConfig) -> Self {
        Self {
            amplitude,
            reference_width: 4.0,
            lambda0,
            domain: WIDTH_DOMAIN,
            coarse: 0.2,
            fine: 0.002,
            half_window: 50,
            refine_margin: 1.0,
            trials,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaSigmaSummary {
    pub n_trials: u64,
    pub over_threshold: u64,
    /// Trials whose global maximizer sat on a domain boundary.
    pub boundary_maxima: u64,
    /// Boundary maximizers that exceeded the local threshold (not counted as events).
    pub boundary_over_threshold: u64,
    /// Every refined interior local maximum over threshold, not just the global one.
    pub interior_maxima_over_threshold: u64,
    /// Trials with at least one interior local maximum over threshold.
    pub trials_with_maxima_over_threshold: u64,
    pub rate: f64,
    pub rate_std_error: f64,
    /// Width and SNR at the smoothed density peak.
    pub peak_width: Option<f64>,
    pub peak_snr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaSigmaRun {
    pub summary: FaSigmaSummary,
    pub histogram: DensityHistogram,
}

struct FaSigmaAcc {
    counts: Vec<u64>,
    over: u64,
    maxima_over: u64,
    trials_with_maxima_over: u64,
    boundary: u64,
    boundary_over: u64,
    m: Measurement,
    folded: Vec<f64>,
    field: Vec<f64>,
}

/// Noise-only trials over the width domain: global LLR maximizer compared
/// with the lumped threshold, over-threshold events binned on the fine grid.
pub fn run_fa_sigma(cfg: &FaSigmaConfig) -> Result<FaSigmaRun> {
    cfg.trials.validate()?;
    let (model, grid) = width_search(cfg.amplitude, cfg.domain, cfg.coarse, cfg.fine)?;
    let axis = grid.axes[0].clone();
    let rule = Threshold::new(&model, &PriorCostSpec::lumped(cfg.lambda0, vec![cfg.reference_width]))?;
    let lambda_r: Vec<f64> = (0..axis.fine_len())
        .into_par_iter()
        .map(|j| rule.at(&model, &ParamPoint::scalar(axis.fine_at(j))?))
        .collect::<Result<_>>()?;
    let floor = lambda_r.iter().copied().fold(f64::INFINITY, f64::min) - cfg.refine_margin;
    let search = PeakSearch::new(&model, grid)?;
    let bank = FoldedBank::new(&model, &axis)?;
    let radius = model.support_radius();
    let ratio = axis.ratio();
    let n_fine = axis.fine_len();
    let n_coarse = axis.coarse_len();

    let mut total = FaSigmaAcc {
        counts: vec![0; n_fine],
        over: 0,
        maxima_over: 0,
        trials_with_maxima_over: 0,
        boundary: 0,
        boundary_over: 0,
        m: Measurement::zeros(0, 0),
        folded: Vec::new(),
        field: Vec::new(),
    };
    run_units(
        cfg.trials.workers,
        cfg.trials.n_trials,
        4096,
        || FaSigmaAcc {
            counts: vec![0; n_fine],
            over: 0,
            maxima_over: 0,
            trials_with_maxima_over: 0,
            boundary: 0,
            boundary_over: 0,
            m: Measurement::zeros(-(radius as i64), 2 * radius + 1),
            folded: Vec::with_capacity(radius + 1),
            field: Vec::with_capacity(n_coarse),
        },
        |acc, t| {
            let mut rng = trial_rng(cfg.trials.seed, t);
            fill_noise(&mut rng, acc.m.samples_mut());
            bank.field_into(acc.m.samples(), &mut acc.folded, &mut acc.field);
            let refined = refined_maxima(&search, &acc.m, &acc.field, floor)?;
            let over = refined.iter().filter(|p| p.llr > lambda_r[p.fine_index[0]]).count() as u64;
            acc.maxima_over += over;
            acc.trials_with_maxima_over += (over > 0) as u64;
            match pick_maximizer(&search, &acc.field, refined) {
                Maximizer::Interior(p) => {
                    let j = p.fine_index[0];
                    if p.llr > lambda_r[j] {
                        acc.over += 1;
                        acc.counts[j] += 1;
                    }
                }
                Maximizer::Boundary { flat, llr } => {
                    acc.boundary += 1;
                    if llr > lambda_r[flat * ratio] {
                        acc.boundary_over += 1;
                    }
                }
                Maximizer::BelowFloor => {}
            }
            Ok(())
        },
        |acc| {
            for (a, b) in total.counts.iter_mut().zip(&acc.counts) {
                *a += b;
            }
            total.over += acc.over;
            total.maxima_over += acc.maxima_over;
            total.trials_with_maxima_over += acc.trials_with_maxima_over;
            total.boundary += acc.boundary;
            total.boundary_over += acc.boundary_over;
        },
    )?;

    let n = cfg.trials.n_trials;
    let centers = (0..n_fine).map(|j| axis.fine_at(j)).collect();
    let histogram = DensityHistogram::new(centers, total.counts, axis.fine, cfg.half_window, n);
    let peak_width = histogram.peak().map(|(x, _)| x);
    let peak_snr = match peak_width {
        Some(w) => Some(snr(&model, &ParamPoint::scalar(w)?)?),
        None => None,
    };
    Ok(FaSigmaRun {
        summary: FaSigmaSummary {
            n_trials: n,
            over_threshold: total.over,
            boundary_maxima: total.boundary,
            boundary_over_threshold: total.boundary_over,
            interior_maxima_over_threshold: total.maxima_over,
            trials_with_maxima_over_threshold: total.trials_with_maxima_over,
            rate: total.over as f64 / n as f64,
            rate_std_error: (total.over as f64).sqrt() / n as f64,
            peak_width,
            peak_snr,
        },
        histogram,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaShiftConfig {
    pub width: f64,
    pub amplitudes: Vec<f64>,
    pub lambda0: f64,
    /// Samples per realization; powers of two transform fastest.
    pub realization_len: usize,
    /// `n_trials` counts realizations.
    pub trials: TrialConfig,
}

impl FaShiftConfig {
    pub fn new(amplitudes: Vec<f64>, lambda0: f64, trials: TrialConfig) -> Self {
        Self {
            width: 4.0,
            amplitudes,
            lambda0,
            realization_len: 1 << 20,
            trials,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaShiftSummary {
    pub amplitudes: Vec<f64>,
    pub snr: Vec<f64>,
    pub counts: Vec<u64>,
    pub left_counts: Vec<u64>,
    pub right_counts: Vec<u64>,
    /// Candidate shifts per realization times realizations.
    pub usable_samples: u64,
    pub density: Vec<f64>,
    pub density_std_error: Vec<f64>,
    pub predicted_homogeneous: Vec<f64>,
    pub predicted_general: Vec<f64>,
}

impl FaShiftSummary {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("amplitude,r,count,density,std_error,predicted\n");
        for i in 0..self.amplitudes.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt_sig9(self.amplitudes[i]),
                fmt_sig9(self.snr[i]),
                self.counts[i],
                fmt_sig9(self.density[i]),
                fmt_sig9(self.density_std_error[i]),
                fmt_sig9(self.predicted_homogeneous[i])
            ));
        }
        out
    }
}

struct FaShiftAcc {
    counts: Vec<u64>,
    left: Vec<u64>,
    right: Vec<u64>,
}

/// Homogeneous false-alarm density over integer shifts, all amplitudes
/// from the same realizations. Realizations are transformed in pairs.
pub fn run_fa_shift(cfg: &FaShiftConfig) -> Result<FaShiftSummary> {
    cfg.trials.validate()?;
    if cfg.amplitudes.is_empty() || cfg.amplitudes.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
        return Err(Error::Config("amplitude sweep must be non-empty and positive".into()));
    }
    let unit = GaussianPulseModel::covering(1.0, PulseParams::Shift { width: cfg.width }, cfg.width)?;
    let corr = ShiftCorrelator::new(&unit, cfg.realization_len)?;
    let g = geometry(&unit, &ParamPoint::scalar(0.0)?)?;
    let r1 = g.r;
    let thresholds: Vec<f64> = cfg
        .amplitudes
        .iter()
        .map(|a| (cfg.lambda0 + 0.5 * a * a * r1 * r1) / a)
        .collect();
    let lowest = thresholds.iter().copied().fold(f64::INFINITY, f64::min);
    let interior = corr.interior();
    let mid = (interior.start + interior.end) / 2;
    let n_amp = cfg.amplitudes.len();
    let n = cfg.trials.n_trials;
    let len = cfg.realization_len;

    let count = |acc: &mut FaShiftAcc, v: &[f64]| {
        for i in interior.start + 1..interior.end - 1 {
            let x = v[i];
            if x > lowest && x > v[i - 1] && x >= v[i + 1] {
                for (k, t) in thresholds.iter().enumerate() {
                    if x > *t {
                        acc.counts[k] += 1;
                        if i < mid {
                            acc.left[k] += 1;
                        } else {
                            acc.right[k] += 1;
                        }
                    }
                }
            }
        }
    };

    let mut total = FaShiftAcc {
        counts: vec![0; n_amp],
        left: vec![0; n_amp],
        right: vec![0; n_amp],
    };
    run_units(
        cfg.trials.workers,
        n.div_ceil(2),
        1,
        || FaShiftAcc {
            counts: vec![0; n_amp],
            left: vec![0; n_amp],
            right: vec![0; n_amp],
        },
        |acc, u| {
            let mut a = vec![0.0; len];
            let mut b = vec![0.0; len];
            fill_noise(&mut trial_rng(cfg.trials.seed, 2 * u), &mut a);
            let second = 2 * u + 1 < n;
            if second {
                fill_noise(&mut trial_rng(cfg.trials.seed, 2 * u + 1), &mut b);
            }
            let (mut buf, mut oa, mut ob) = (Vec::new(), Vec::new(), Vec::new());
            corr.correlate_pair(&a, &b, &mut buf, &mut oa, &mut ob);
            count(acc, &oa);
            if second {
                count(acc, &ob);
            }
            Ok(())
        },
        |acc| {
            for k in 0..n_amp {
                total.counts[k] += acc.counts[k];
                total.left[k] += acc.left[k];
                total.right[k] += acc.right[k];
            }
        },
    )?;

    let usable = n * (interior.len() as u64 - 2);
    let snrs: Vec<f64> = cfg.amplitudes.iter().map(|a| a * r1).collect();
    let stats: Vec<LocalStats> = snrs
        .iter()
        .map(|&r| LocalStats::homogeneous(r, 1, cfg.lambda0, g.volume))
        .collect();
    Ok(FaShiftSummary {
        amplitudes: cfg.amplitudes.clone(),
        snr: snrs,
        density: total.counts.iter().map(|&c| c as f64 / usable as f64).collect(),
        density_std_error: total.counts.iter().map(|&c| (c as f64).sqrt() / usable as f64).collect(),
        predicted_homogeneous: stats.iter().map(|s| s.fa_density_homogeneous()).collect::<Result<_>>()?,
        predicted_general: stats.iter().map(|s| s.fa_density_general()).collect::<Result<_>>()?,
        counts: total.counts,
        left_counts: total.left,
        right_counts: total.right,
        usable_samples: usable,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccuracyConfig {
    pub amplitude: f64,
    pub width: f64,
    /// Half-width of the search box in Cramér-Rao standard deviations.
    pub span_std: f64,
    /// Coarse spacing as a fraction of the standard deviation.
    pub coarse_std: f64,
    /// Coarse-to-fine spacing ratio.
    pub fine_ratio: usize,
    pub zoom_factor: usize,
    /// Smallest width searched.
    pub min_width: f64,
    /// Coarse maxima this far below the best are also refined.
    pub refine_margin: f64,
    pub trials: TrialConfig,
}

impl AccuracyConfig {
    pub fn new(amplitude: f64, trials: TrialConfig) -> Self {
        Self {
            amplitude,
            width: 4.0,
            span_std: 6.0,
            coarse_std: 0.5,
            fine_ratio: 100,
            zoom_factor: 10,
            min_width: 0.5,
            refine_margin: 1.0,
            trials,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracySummary {
    pub amplitude: f64,
    pub snr: f64,
    pub n_used: u64,
    pub boundary_maxima: u64,
    /// Sample mean of `(ξ̂_s − ξ_s, σ̂ − σ)`.
    pub mean: Vec<f64>,
    pub mean_std_error: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub correlation: f64,
    pub cramer_rao: Vec<Vec<f64>>,
    pub mean_peak_llr: f64,
    pub expected_peak_llr: f64,
}

struct AccuracyAcc {
    n: u64,
    boundary: u64,
    sum: [f64; 2],
    outer: [f64; 3],
    llr: f64,
}

/// Injected-signal trials with a two-parameter search; estimation errors
/// summarized as a sample covariance.
///
/// The search box is centered on the nominal location `(0, σ)` while the
/// injected shift is drawn from U(−0.5, 0.5), so injections fall off-lattice.
pub fn run_accuracy(cfg: &AccuracyConfig) -> Result<AccuracySummary> {
    cfg.trials.validate()?;
    if cfg.zoom_factor < 2 || cfg.fine_ratio < 1 || !(cfg.coarse_std > 0.0) {
        return Err(Error::Config("invalid accuracy search resolution".into()));
    }
    let nominal = ParamPoint::new(vec![0.0, cfg.width])?;
    let probe = GaussianPulseModel::covering(cfg.amplitude, PulseParams::ShiftAndWidth, cfg.width)?;
    let cr = cramer_rao_cov(&probe, &nominal)?;
    let std = [cr[(0, 0)].sqrt(), cr[(1, 1)].sqrt()];
    let hi_width = cfg.width + cfg.span_std * std[1];
    let model = GaussianPulseModel::covering(cfg.amplitude, PulseParams::ShiftAndWidth, hi_width)?;
    let axis = |center: f64, s: f64, lo_floor: f64| {
        let coarse = cfg.coarse_std * s;
        AxisGrid::new(
            (center - cfg.span_std * s).max(lo_floor),
            center + cfg.span_std * s,
            coarse,
            coarse / cfg.fine_ratio as f64,
        )
    };
    let grid = SearchGrid::new(vec![axis(0.0, std[0], f64::NEG_INFINITY)?, axis(cfg.width, std[1], cfg.min_width)?])?
        .with_refinement(Refinement::Zoom {
            factor: cfg.zoom_factor,
        })?;
    let search = PeakSearch::new(&model, grid)?;
    let (lo, hi) = search.coarse_support();
    let (lo, hi) = (lo - 2, hi + 2);

    let mut total = AccuracyAcc {
        n: 0,
        boundary: 0,
        sum: [0.0; 2],
        outer: [0.0; 3],
        llr: 0.0,
    };
    run_units(
        cfg.trials.workers,
        cfg.trials.n_trials,
        256,
        || AccuracyAcc {
            n: 0,
            boundary: 0,
            sum: [0.0; 2],
            outer: [0.0; 3],
            llr: 0.0,
        },
        |acc, t| {
            let mut rng = trial_rng(cfg.trials.seed, t);
            let xi: f64 = rng.random_range(-0.5..0.5);
            let mut m = Measurement::zeros(lo, (hi - lo) as usize);
            fill_noise(&mut rng, m.samples_mut());
            m.add_signal(&model.signal(&ParamPoint::new(vec![xi, cfg.width])?)?)?;
            let field = search.coarse_field(&m)?;
            let best = field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            match global_maximizer(&search, &m, &field, best - cfg.refine_margin)? {
                Maximizer::Interior(p) => {
                    let e = [p.location.coords()[0] - xi, p.location.coords()[1] - cfg.width];
                    acc.n += 1;
                    acc.sum[0] += e[0];
                    acc.sum[1] += e[1];
                    acc.outer[0] += e[0] * e[0];
                    acc.outer[1] += e[0] * e[1];
                    acc.outer[2] += e[1] * e[1];
                    acc.llr += p.llr;
                }
                Maximizer::Boundary { .. } | Maximizer::BelowFloor => acc.boundary += 1,
            }
            Ok(())
        },
        |acc| {
            total.n += acc.n;
            total.boundary += acc.boundary;
            for k in 0..2 {
                total.sum[k] += acc.sum[k];
            }
            for k in 0..3 {
                total.outer[k] += acc.outer[k];
            }
            total.llr += acc.llr;
        },
    )?;

    let n = total.n as f64;
    if total.n < 2 {
        return Err(Error::Config("fewer than two usable accuracy trials".into()));
    }
    let mean = [total.sum[0] / n, total.sum[1] / n];
    let c = |k: usize, a: usize, b: usize| (total.outer[k] - n * mean[a] * mean[b]) / (n - 1.0);
    let cov = [[c(0, 0, 0), c(1, 0, 1)], [c(1, 0, 1), c(2, 1, 1)]];
    let r = snr(&model, &nominal)?;
    Ok(AccuracySummary {
        amplitude: cfg.amplitude,
        snr: r,
        n_used: total.n,
        boundary_maxima: total.boundary,
        mean: mean.to_vec(),
        mean_std_error: vec![(cov[0][0] / n).sqrt(), (cov[1][1] / n).sqrt()],
        correlation: cov[0][1] / (cov[0][0] * cov[1][1]).sqrt(),
        covariance: cov.iter().map(|r| r.to_vec()).collect(),
        cramer_rao: (0..2).map(|i| (0..2).map(|j| cr[(i, j)]).collect()).collect(),
        mean_peak_llr: total.llr / n,
        expected_peak_llr: 0.5 * r * r + 1.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub amplitude: f64,
    pub reference_width: f64,
    pub lambda0: f64,
    pub domain: (f64, f64),
    pub coarse: f64,
    pub fine: f64,
    /// Probability that a trial carries an injected signal.
    pub signal_fraction: f64,
    /// Injected widths are drawn uniformly from this range.
    pub injection_widths: (f64, f64),
    pub refine_margin: f64,
    pub trials: TrialConfig,
}

impl OracleConfig {
    pub fn new(lambda0: f64, trials: TrialConfig) -> Self {
        Self {
            amplitude: 2.0,
            reference_width: 4.0,
            lambda0,
            domain: WIDTH_DOMAIN,
            coarse: 0.2,
            fine: 0.002,
            signal_fraction: 0.5,
            injection_widths: (4.0, 12.0),
            refine_margin: 1.0,
            trials,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSummary {
    pub compared: u64,
    pub agreed: u64,
    pub agreement: f64,
    /// 95% Wilson score interval for the agreement fraction.
    pub interval: (f64, f64),
    pub signal_trials: u64,
    pub signal_agreed: u64,
    pub threshold_accepts: u64,
    pub oracle_accepts: u64,
    pub truncated: u64,
    /// Trials whose maximizer sat on the boundary; not compared.
    pub boundary_maxima: u64,
}

#[derive(Default)]
struct OracleAcc {
    compared: u64,
    agreed: u64,
    signal: u64,
    signal_agreed: u64,
    thr: u64,
    oracle: u64,
    truncated: u64,
    boundary: u64,
}

/// Compares the threshold decision at the global peak with the sign of the
/// numerically integrated Bayes statistic.
pub fn run_oracle_agreement(cfg: &OracleConfig) -> Result<OracleSummary> {
    cfg.trials.validate()?;
    if !(0.0..=1.0).contains(&cfg.signal_fraction) {
        return Err(Error::Config("signal_fraction must lie in [0, 1]".into()));
    }
    let (model, grid) = width_search(cfg.amplitude, cfg.domain, cfg.coarse, cfg.fine)?;
    let axis = grid.axes[0].clone();
    let priors = PriorCostSpec::lumped(cfg.lambda0, vec![cfg.reference_width]);
    let rule = Threshold::new(&model, &priors)?;
    let search = PeakSearch::new(&model, grid)?;
    let radius = model.support_radius();
    let quad = QuadSpec {
        points_per_scale: 20.0,
        domain: Some(vec![(axis.lo, axis.last())]),
    };
    let (w_lo, w_hi) = cfg.injection_widths;
    if !(w_lo >= axis.lo && w_hi <= axis.last() && w_hi >= w_lo) {
        return Err(Error::Config("injection widths must lie inside the search domain".into()));
    }

    let mut total = OracleAcc::default();
    run_units(
        cfg.trials.workers,
        cfg.trials.n_trials,
        256,
        OracleAcc::default,
        |acc, t| {
            let mut rng = trial_rng(cfg.trials.seed, t);
            let signal = rng.random::<f64>() < cfg.signal_fraction;
            let width = w_lo + (w_hi - w_lo) * rng.random::<f64>();
            let mut m = Measurement::zeros(-(radius as i64), 2 * radius + 1);
            fill_noise(&mut rng, m.samples_mut());
            if signal {
                m.add_signal(&model.signal(&ParamPoint::scalar(width)?)?)?;
            }
            let field = search.coarse_field(&m)?;
            let best = field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let peak = match global_maximizer(&search, &m, &field, best - cfg.refine_margin)? {
                Maximizer::Interior(p) => p,
                _ => {
                    acc.boundary += 1;
                    return Ok(());
                }
            };
            let accept = peak.llr > rule.at(&model, &peak.location)?;
            let oracle = bayes_statistic_numeric(&model, &priors, &peak.location, &m, &quad)?;
            let agree = accept == oracle.accepts();
            acc.compared += 1;
            acc.agreed += agree as u64;
            acc.signal += signal as u64;
            acc.signal_agreed += (signal && agree) as u64;
            acc.thr += accept as u64;
            acc.oracle += oracle.accepts() as u64;
            acc.truncated += oracle.truncated as u64;
            Ok(())
        },
        |acc| {
            total.compared += acc.compared;
            total.agreed += acc.agreed;
            total.signal += acc.signal;
            total.signal_agreed += acc.signal_agreed;
            total.thr += acc.thr;
            total.oracle += acc.oracle;
            total.truncated += acc.truncated;
            total.boundary += acc.boundary;
        },
    )?;
    let agreement = if total.compared > 0 {
        total.agreed as f64 / total.compared as f64
    } else {
        f64::NAN
    };
    Ok(OracleSummary {
        compared: total.compared,
        agreed: total.agreed,
        agreement,
        interval: wilson_interval(total.agreed, total.compared, 1.959_963_984_540_054),
        signal_trials: total.signal,
        signal_agreed: total.signal_agreed,
        threshold_accepts: total.thr,
        oracle_accepts: total.oracle,
        truncated: total.truncated,
        boundary_maxima: total.boundary,
    })
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}
