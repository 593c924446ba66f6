use std::path::PathBuf;
use std::time::Instant;

use jdet_core::montecarlo::{run_accuracy, run_fa_shift, run_fa_sigma, run_oracle_agreement};
use jdet_core::{integrated_fa, FaFormula, GaussianPulseModel, PriorCostSpec, PulseParams};
use serde::Serialize;

use crate::config::{ExperimentKind, RunConfig};
use crate::{name_number, to_json, write_artifact, CliError};

/// JSON summary of one simulation run.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord<'a, C: Serialize, S: Serialize> {
    pub kind: &'static str,
    pub seed: u64,
    pub lambda0: Option<f64>,
    pub runtime_seconds: f64,
    pub config: &'a RunConfig,
    pub experiment: &'a C,
    pub summary: &'a S,
    /// Analytic counterpart where one exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Simulation {
    pub files: Vec<PathBuf>,
    /// One line per run for the terminal.
    pub lines: Vec<String>,
}

fn stem(kind: ExperimentKind, amplitude: Option<f64>, lambda0: Option<f64>, seed: u64) -> String {
    let mut s = kind.tag().to_string();
    if let Some(a) = amplitude {
        s.push_str(&format!("_A-{}", name_number(a)));
    }
    if let Some(l) = lambda0 {
        s.push_str(&format!("_lambda0-{}", name_number(l)));
    }
    s.push_str(&format!("_seed-{seed}"));
    s
}

/// Runs every sweep point of the config and writes a JSON summary per run,
/// plus the histogram or density table where the experiment produces one.
pub fn run(cfg: &RunConfig) -> Result<Simulation, CliError> {
    let out = cfg.out_dir();
    let mut sim = Simulation::default();
    match cfg.kind {
        ExperimentKind::FaSigma => {
            for c in cfg.fa_sigma_configs()? {
                let t = Instant::now();
                let res = run_fa_sigma(&c)?;
                let secs = t.elapsed().as_secs_f64();
                let model = GaussianPulseModel::covering(c.amplitude, PulseParams::Width { center: 0.0 }, c.domain.1)?;
                let predicted = integrated_fa(
                    &model,
                    &PriorCostSpec::lumped(c.lambda0, vec![c.reference_width]),
                    c.domain,
                    FaFormula::General,
                )?
                .value;
                let name = stem(cfg.kind, Some(c.amplitude), Some(c.lambda0), c.trials.seed);
                let rec = RunRecord {
                    kind: cfg.kind.tag(),
                    seed: c.trials.seed,
                    lambda0: Some(c.lambda0),
                    runtime_seconds: secs,
                    config: cfg,
                    experiment: &c,
                    summary: &res.summary,
                    predicted_rate: Some(predicted),
                };
                sim.files.push(write_artifact(&out, &format!("{name}.json"), &to_json(&rec)?)?);
                sim.files.push(write_artifact(&out, &format!("{name}_hist.csv"), &res.histogram.to_csv())?);
                sim.lines.push(format!(
                    "{name}: {} over threshold in {} trials, rate {:.4e} ± {:.2e} (predicted {:.4e}), {} boundary maximizers, {secs:.1}s",
                    res.summary.over_threshold,
                    res.summary.n_trials,
                    res.summary.rate,
                    res.summary.rate_std_error,
                    predicted,
                    res.summary.boundary_maxima
                ));
            }
        }
        ExperimentKind::FaShift => {
            for c in cfg.fa_shift_configs()? {
                let t = Instant::now();
                let res = run_fa_shift(&c)?;
                let secs = t.elapsed().as_secs_f64();
                let name = stem(cfg.kind, None, Some(c.lambda0), c.trials.seed);
                let rec = RunRecord {
                    kind: cfg.kind.tag(),
                    seed: c.trials.seed,
                    lambda0: Some(c.lambda0),
                    runtime_seconds: secs,
                    config: cfg,
                    experiment: &c,
                    summary: &res,
                    predicted_rate: None,
                };
                sim.files.push(write_artifact(&out, &format!("{name}.json"), &to_json(&rec)?)?);
                sim.files.push(write_artifact(&out, &format!("{name}.csv"), &res.to_csv())?);
                sim.lines.push(format!(
                    "{name}: {} samples, counts {:?}, {secs:.1}s",
                    res.usable_samples, res.counts
                ));
            }
        }
        ExperimentKind::Accuracy => {
            for c in cfg.accuracy_configs()? {
                let t = Instant::now();
                let res = run_accuracy(&c)?;
                let secs = t.elapsed().as_secs_f64();
                let name = stem(cfg.kind, Some(c.amplitude), None, c.trials.seed);
                let rec = RunRecord {
                    kind: cfg.kind.tag(),
                    seed: c.trials.seed,
                    lambda0: None,
                    runtime_seconds: secs,
                    config: cfg,
                    experiment: &c,
                    summary: &res,
                    predicted_rate: None,
                };
                sim.files.push(write_artifact(&out, &format!("{name}.json"), &to_json(&rec)?)?);
                sim.lines.push(format!(
                    "{name}: r = {:.3}, variances ({:.4e}, {:.4e}) vs bound ({:.4e}, {:.4e}), {secs:.1}s",
                    res.snr, res.covariance[0][0], res.covariance[1][1], res.cramer_rao[0][0], res.cramer_rao[1][1]
                ));
            }
        }
        ExperimentKind::Oracle => {
            for c in cfg.oracle_configs()? {
                let t = Instant::now();
                let res = run_oracle_agreement(&c)?;
                let secs = t.elapsed().as_secs_f64();
                let name = stem(cfg.kind, Some(c.amplitude), Some(c.lambda0), c.trials.seed);
                let rec = RunRecord {
                    kind: cfg.kind.tag(),
                    seed: c.trials.seed,
                    lambda0: Some(c.lambda0),
                    runtime_seconds: secs,
                    config: cfg,
                    experiment: &c,
                    summary: &res,
                    predicted_rate: None,
                };
                sim.files.push(write_artifact(&out, &format!("{name}.json"), &to_json(&rec)?)?);
                sim.lines.push(format!(
                    "{name}: agreement {}/{} = {:.4}, {secs:.1}s",
                    res.agreed, res.compared, res.agreement
                ));
            }
        }
    }
    Ok(sim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stems_embed_kind_threshold_and_seed() {
        assert_eq!(stem(ExperimentKind::FaSigma, Some(2.0), Some(5.0), 7), "fa_sigma_A-2_lambda0-5_seed-7");
        assert_eq!(stem(ExperimentKind::FaShift, None, Some(7.5), 1), "fa_shift_lambda0-7.5_seed-1");
    }
}
