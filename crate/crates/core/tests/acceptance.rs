//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test -p jdet-core --test acceptance -- 1 6 8`.
//! Failures are reported in the output; set `JDET_ACCEPTANCE_STRICT=1` to
//! also turn them into a non-zero exit status.

use std::process::ExitCode;
use std::time::Instant;

use jdet_core::montecarlo::WIDTH_DOMAIN;
use jdet_core::prediction::{false_alarm_curve, weighted_detection_table, LocalStats};
use jdet_core::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Check = std::result::Result<(bool, String), String>;

const TABLE: [(f64, f64); 10] = [
    (5.0, 7.05e-4),
    (6.0, 2.81e-4),
    (7.0, 1.08e-4),
    (8.0, 4.08e-5),
    (9.0, 1.52e-5),
    (10.0, 5.63e-6),
    (11.0, 2.08e-6),
    (12.0, 7.67e-7),
    (13.0, 2.83e-7),
    (14.0, 1.04e-7),
];

fn err(e: Error) -> String {
    e.to_string()
}

fn width_model(a: f64) -> GaussianPulseModel {
    GaussianPulseModel::covering(a, PulseParams::Width { center: 0.0 }, WIDTH_DOMAIN.1).unwrap()
}

fn fine_axis() -> AxisGrid {
    AxisGrid::new(WIDTH_DOMAIN.0, WIDTH_DOMAIN.1, 0.2, 0.002).unwrap()
}

fn table1_analytic() -> Check {
    let model = width_model(2.0);
    let mut worst: (f64, f64) = (0.0, 0.0);
    for (l, expected) in TABLE {
        let v = integrated_fa(&model, &PriorCostSpec::lumped(l, vec![4.0]), WIDTH_DOMAIN, FaFormula::General)
            .map_err(err)?
            .value;
        let dev = v / expected - 1.0;
        if dev.abs() > worst.1.abs() {
            worst = (l, dev);
        }
    }
    Ok((
        worst.1.abs() <= 0.01,
        format!("worst row λ0 = {}: {:+.2}% (tol 1%)", worst.0, 100.0 * worst.1),
    ))
}

fn table1_monte_carlo() -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for (l, n, seed, expected) in [(5.0, 20_000_000, 501, 7.05e-4), (7.0, 50_000_000, 701, 1.08e-4)] {
        let s = run_fa_sigma(&FaSigmaConfig::new(2.0, l, TrialConfig::new(n, seed)))
            .map_err(err)?
            .summary;
        let z = (s.rate - expected) / s.rate_std_error;
        ok &= z.abs() <= 3.0;
        parts.push(format!("λ0 = {l}: {:.4e} ± {:.1e} vs {expected:.2e} ({z:+.2} SE)", s.rate, s.rate_std_error));
    }
    Ok((ok, format!("{} (tol 3 SE)", parts.join("; "))))
}

// Gaussian kernel smoothing in r, applied alike to simulated counts and to the
// analytic density so both peaks carry the same smoothing bias.
fn smoothed_peak(r: &[f64], values: &[f64], h: f64) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (j, rj) in r.iter().enumerate() {
        let s: f64 = r
            .iter()
            .zip(values)
            .filter(|(ri, _)| (*ri - rj).abs() < 5.0 * h)
            .map(|(ri, v)| v * (-0.5 * ((ri - rj) / h).powi(2)).exp())
            .sum();
        if s > best.1 {
            best = (j, s);
        }
    }
    best.0
}

fn density_concentration() -> Check {
    const H: f64 = 0.5;
    let axis = fine_axis();
    let xs: Vec<f64> = (0..axis.fine_len()).map(|j| axis.fine_at(j)).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    let mut raw_peaks = Vec::new();
    let mut sigma_peaks = Vec::new();
    for (a, seed) in [(2.0, 1002), (3.0, 1003)] {
        let model = width_model(a);
        let priors = PriorCostSpec::lumped(10.0, vec![4.0]);
        let th = false_alarm_curve(&model, &priors, &xs, FaFormula::General).map_err(err)?;
        let raw = (0..xs.len()).fold(0, |b, i| if th.v_f[i] > th.v_f[b] { i } else { b });
        let t = smoothed_peak(&th.r, &th.v_f, H);
        let run = run_fa_sigma(&FaSigmaConfig::new(a, 10.0, TrialConfig::new(50_000_000, seed))).map_err(err)?;
        let counts: Vec<f64> = run.histogram.counts.iter().map(|&c| c as f64).collect();
        let s = smoothed_peak(&th.r, &counts, H);
        let dev = th.r[s] / th.r[t] - 1.0;
        ok &= dev.abs() <= 0.05;
        raw_peaks.push(th.r[raw]);
        sigma_peaks.push(xs[s]);
        parts.push(format!(
            "A = {a}: {} events, peak r {:.3} vs {:.3} ({:+.1}%), σ {:.2}, unsmoothed analytic r {:.3}",
            run.summary.over_threshold,
            th.r[s],
            th.r[t],
            100.0 * dev,
            xs[s],
            th.r[raw]
        ));
    }
    let shift = raw_peaks[1] / raw_peaks[0] - 1.0;
    ok &= shift.abs() <= 0.05 && (sigma_peaks[0] - sigma_peaks[1]).abs() > 4.0 * H * H;
    Ok((
        ok,
        format!(
            "λ0 = 10, kernel {H} in r; {}; analytic peak r moves {:+.1}% from A = 2 to 3 (tol 5%)",
            parts.join("; "),
            100.0 * shift
        ),
    ))
}

fn homogeneous_density() -> Check {
    let amps = vec![1.6, 1.8, 2.0, 2.2, 2.4, 2.6, 2.8, 3.0];
    let s = run_fa_shift(&FaShiftConfig::new(amps, 10.0, TrialConfig::new(2000, 88))).map_err(err)?;
    let mut worst: (f64, f64) = (0.0, 0.0);
    let mut judged = 0;
    let mut ratios = Vec::new();
    for i in 0..s.amplitudes.len() {
        let dev = s.density[i] / s.predicted_homogeneous[i] - 1.0;
        ratios.push(format!("{:.2}:{:.3}", s.snr[i], 1.0 + dev));
        if s.counts[i] < 100 {
            continue;
        }
        judged += 1;
        if dev.abs() > worst.1.abs() {
            worst = (s.amplitudes[i], dev);
        }
    }
    Ok((
        judged > 0 && worst.1.abs() <= 0.10 && s.usable_samples >= 2_000_000_000,
        format!(
            "{:.2e} samples, {judged} of {} amplitudes with ≥ 100 counts, worst A = {}: {:+.1}% (tol 10%); r:sim/theory {}",
            s.usable_samples as f64,
            s.amplitudes.len(),
            worst.0,
            100.0 * worst.1,
            ratios.join(" ")
        ),
    ))
}

fn cramer_rao() -> Check {
    let snrs = [2.0, 4.0, 6.0, 8.0, 12.0, 16.0];
    // r² = A²·√π·σ at σ = 4.
    let per_unit = (4.0 * std::f64::consts::PI.sqrt()).sqrt();
    let n = 20_000u64;
    let slack = 3.0 * (2.0 / n as f64).sqrt();
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, r) in snrs.iter().enumerate() {
        let s = run_accuracy(&AccuracyConfig::new(r / per_unit, TrialConfig::new(n, 900 + k as u64))).map_err(err)?;
        let ratio = [s.covariance[0][0] / s.cramer_rao[0][0], s.covariance[1][1] / s.cramer_rao[1][1]];
        let top = k + 2 >= snrs.len();
        if top {
            ok &= ratio.iter().all(|q| (q - 1.0).abs() <= 0.10) && s.correlation.abs() < 0.03;
        } else {
            ok &= ratio.iter().all(|q| *q >= 1.0 - slack);
        }
        parts.push(format!("r {r}: {:.3}/{:.3} ρ {:+.3}", ratio[0], ratio[1], s.correlation));
    }
    Ok((
        ok,
        format!(
            "variance/bound (shift/width): {}; r ≥ 12 within 10% and |ρ| < 3%, lower r ≥ {:.3}",
            parts.join(", "),
            1.0 - slack
        ),
    ))
}

fn formula_cross_check() -> Check {
    let mut worst: (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut within = 0;
    let mut total = 0;
    // Smallest r̃²/λ_r beyond which every point agrees within 1%.
    let mut onset: f64 = 0.0;
    for i in 0..=18 {
        let lambda = 5.0 + 0.5 * i as f64;
        let mut last_bad = None;
        for j in 0..=60 {
            let rt2 = 2.0 + (4.0 * lambda - 2.0) * j as f64 / 60.0;
            let s = LocalStats::homogeneous((rt2 - 0.5).sqrt(), 1, lambda, 1.0);
            let dev = s.fa_density_general().map_err(err)? / s.fa_density_homogeneous().map_err(err)? - 1.0;
            total += 1;
            if dev.abs() <= 0.01 {
                within += 1;
            } else {
                last_bad = Some(rt2);
            }
            if dev.abs() > worst.2.abs() {
                worst = (lambda, rt2, dev);
            }
        }
        if let Some(b) = last_bad {
            onset = onset.max(b / lambda);
        }
    }
    Ok((
        worst.2.abs() <= 0.01,
        format!(
            "{within} of {total} grid points within 1%, all beyond r̃² = {onset:.2}·λ_r; worst λ_r = {}, r̃² = {:.2}: ratio {:.3e}",
            worst.0,
            worst.1,
            1.0 + worst.2
        ),
    ))
}

fn oracle() -> Check {
    let (mut compared, mut agreed, mut boundary, mut signal, mut signal_agreed) = (0, 0, 0, 0, 0);
    for (k, l) in [5.0, 6.0, 7.0, 8.0].into_iter().enumerate() {
        let s = run_oracle_agreement(&OracleConfig::new(l, TrialConfig::new(2500, 70 + k as u64))).map_err(err)?;
        compared += s.compared;
        agreed += s.agreed;
        boundary += s.boundary_maxima;
        signal += s.signal_trials;
        signal_agreed += s.signal_agreed;
    }
    let frac = agreed as f64 / compared as f64;
    Ok((
        frac >= 0.99,
        format!(
            "10000 trials at λ0 = 5..8, {boundary} with boundary maxima skipped; {agreed} of {compared} agree ({frac:.4}, need ≥ 0.99), signal {signal_agreed} of {signal}"
        ),
    ))
}

fn logistic_oc(scale: f64, lambda: &[f64]) -> Result<f64> {
    let center = 40.0;
    let p_d: Vec<f64> = lambda.iter().map(|l| 1.0 / (1.0 + ((l - center) / scale).exp())).collect();
    let lt: Vec<f64> = (-20..=20).map(|k| center + 0.1 * scale * k as f64).collect();
    let oc = global_oc(lambda, &p_d, &lt)?;
    Ok((0..lt.len()).map(|i| (oc.p_f_first_order[i] / oc.p_f[i] - 1.0).abs()).fold(0.0, f64::max))
}

fn global_oc_check() -> Check {
    let model = width_model(2.0);
    let lambda: Vec<f64> = (0..=2000).map(|i| -60.0 + 0.1 * i as f64).collect();
    let p_d = weighted_detection_table(&model, &PriorCostSpec::lumped(0.0, vec![4.0]), WIDTH_DOMAIN, &lambda, 64)
        .map_err(err)?;
    let lt: Vec<f64> = (5..=10).map(f64::from).collect();
    let oc = global_oc(&lambda, &p_d, &lt).map_err(err)?;
    let mut worst: f64 = 0.0;
    for (i, &l) in lt.iter().enumerate() {
        let direct = integrated_fa(&model, &PriorCostSpec::lumped(l, vec![4.0]), WIDTH_DOMAIN, FaFormula::General)
            .map_err(err)?
            .value;
        worst = worst.max((oc.p_f[i] / direct - 1.0).abs());
    }
    let logistic = [5.0, 10.0].map(|s| logistic_oc(s, &lambda));
    let logistic = [logistic[0].clone().map_err(err)?, logistic[1].clone().map_err(err)?];
    Ok((
        worst <= 0.10 && !oc.any_truncated() && logistic.iter().all(|d| *d <= 0.05),
        format!(
            "tabulated P_D vs ∫v_F over λ0 = 5..10: worst {:.2}% (tol 10%); logistic first-order vs exact: scale 5 {:.2}%, scale 10 {:.2}% (tol 5%)",
            100.0 * worst,
            100.0 * logistic[0],
            100.0 * logistic[1]
        ),
    ))
}

fn point(v: &[f64]) -> ParamPoint {
    ParamPoint::new(v.to_vec()).unwrap()
}

fn properties() -> Check {
    let mut failures = Vec::new();
    let joint = GaussianPulseModel::covering(2.0, PulseParams::ShiftAndWidth, 16.0).map_err(err)?;

    let grid: Vec<[f64; 2]> = (0..12)
        .flat_map(|i| (0..12).map(move |j| [-1.0 + 0.2 * i as f64, 1.1 + 1.3 * j as f64]))
        .collect();
    let mut schwarz = true;
    for a in grid.iter().step_by(5) {
        for b in &grid {
            let c = correlation(&joint, &point(a), &point(b)).map_err(err)?;
            schwarz &= c.abs() <= 1.0 + 1e-12 && (a != b || (c - 1.0).abs() < 1e-12) && (a == b || c < 1.0 - 1e-9);
        }
    }
    if !schwarz {
        failures.push("Schwarz bound");
    }

    let mut geom = true;
    for p in &grid {
        let g = geometry(&joint, &point(p)).map_err(err)?;
        let u = g.log_snr_gradient();
        geom &= (&g.q - &g.m - &u * u.transpose()).amax() < 1e-10 * g.q.amax();
        geom &= (g.zeta - g.gamma / (1.0 + g.gamma)).abs() <= 4.0 * f64::EPSILON * g.zeta.abs().max(1.0);
    }
    if !geom {
        failures.push("curvature identities");
    }

    let mut grad = true;
    for x in [[0.1, 2.0], [-0.3, 5.5], [0.2, 11.0]] {
        let (s, g) = joint.signal_with_gradient(&point(&x)).map_err(err)?;
        let h = 1e-4;
        for i in 0..2 {
            let (mut up, mut dn) = (x, x);
            up[i] += h;
            dn[i] -= h;
            let (su, sd) = (joint.signal(&point(&up)).map_err(err)?, joint.signal(&point(&dn)).map_err(err)?);
            let at = |sig: &SampledSignal, k: i64| {
                let o = k - sig.start;
                if o >= 0 && (o as usize) < sig.values.len() {
                    sig.values[o as usize]
                } else {
                    0.0
                }
            };
            let (mut num, mut den) = (0.0f64, 0.0f64);
            for k in s.start - 2..s.end() + 2 {
                let fd = (at(&su, k) - at(&sd, k)) / (2.0 * h);
                num += (fd - at(&g[i], k)).powi(2);
                den += at(&g[i], k).powi(2);
            }
            grad &= (num / den).sqrt() <= 1e-5;
        }
    }
    if !grad {
        failures.push("finite-difference gradients");
    }

    let shift = GaussianPulseModel::covering(1.5, PulseParams::Shift { width: 3.0 }, 3.0).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let samples: Vec<f64> = (0..1024).map(|_| StandardNormal.sample(&mut rng)).collect();
    let m = Measurement::new(-50, samples).map_err(err)?;
    let out = matched_filter_fft(&shift, &m).map_err(err)?;
    let mut fft = true;
    for i in out.interior.clone() {
        let direct = matched_filter(&shift, &ParamPoint::scalar(out.shift_at(i) as f64).unwrap(), &m).map_err(err)?;
        fft &= (out.values[i] - direct).abs() <= 1e-8 * direct.abs().max(1.0);
    }
    if !fft {
        failures.push("FFT filter");
    }

    if !(0..=800).all(|k| {
        let z = -40.0 + 0.1 * k as f64;
        (gaussian_tail(z) + gaussian_tail(-z) - 1.0).abs() <= 1e-12
    }) {
        failures.push("tail symmetry");
    }

    let volumes: Vec<f64> = (0..=20).map(|i| 10f64.powf(i as f64 / 20.0)).collect();
    let cfar = prediction::cfar_spread(4.5, 1, 10.0, 3.0, &volumes).map_err(err)?;
    if !(cfar.adaptive < cfar.frozen) {
        failures.push("CFAR spread");
    }

    let cfg = FaSigmaConfig::new(2.0, 4.0, TrialConfig::new(4000, 5));
    let serial = FaSigmaConfig {
        trials: TrialConfig { workers: 1, ..cfg.trials.clone() },
        ..cfg.clone()
    };
    if run_fa_sigma(&cfg).map_err(err)? != run_fa_sigma(&serial).map_err(err)? {
        failures.push("seeded determinism");
    }

    Ok((
        failures.is_empty(),
        if failures.is_empty() {
            "Schwarz, curvature, gradients, FFT, tail symmetry, CFAR spread, determinism".into()
        } else {
            format!("failed: {}", failures.join(", "))
        },
    ))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Check); 9] = [
        (1, "integrated false alarms, analytic", table1_analytic),
        (2, "integrated false alarms, Monte Carlo", table1_monte_carlo),
        (3, "false-alarm concentration in r", density_concentration),
        (4, "homogeneous shift density", homogeneous_density),
        (5, "Cramér-Rao convergence", cramer_rao),
        (6, "general vs homogeneous density", formula_cross_check),
        (7, "Bayes oracle agreement", oracle),
        (8, "global operating characteristic", global_oc_check),
        (9, "property suites", properties),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let (pass, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += usize::from(!pass);
        println!(
            "criterion {id} {} {name}: {detail} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    println!("{failed} criteria failed");
    if failed > 0 && std::env::var("JDET_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
