use jdet_core::montecarlo::{run_fa_sigma, FaSigmaConfig, TrialConfig, WIDTH_DOMAIN};
use jdet_core::prediction::fmt_sig9;
use jdet_core::{integrated_fa, FaFormula, GaussianPulseModel, PriorCostSpec, PulseParams};
use serde::Serialize;

use crate::CliError;

/// Reference integrated false-alarm rates for the width model with `A = 2`,
/// `σ_0 = 4`: `(λ_0, expected, simulated)`.
pub const REFERENCE_RATES: [(f64, f64, f64); 10] = [
    (5.0, 7.05e-4, 7.06e-4),
    (6.0, 2.81e-4, 2.83e-4),
    (7.0, 1.08e-4, 1.09e-4),
    (8.0, 4.08e-5, 4.10e-5),
    (9.0, 1.52e-5, 1.52e-5),
    (10.0, 5.63e-6, 5.62e-6),
    (11.0, 2.08e-6, 2.09e-6),
    (12.0, 7.67e-7, 7.77e-7),
    (13.0, 2.83e-7, 2.81e-7),
    (14.0, 1.04e-7, 1.03e-7),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Row {
    pub lambda0: f64,
    pub integrated: f64,
    pub reference_expected: f64,
    pub reference_simulated: f64,
    pub ratio: f64,
    /// Monte Carlo rate and its standard error when trials were requested.
    pub simulated: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Options {
    pub amplitude: f64,
    pub reference_width: f64,
    pub domain: (f64, f64),
    pub trials: Option<TrialConfig>,
}

impl Default for Table1Options {
    fn default() -> Self {
        Self {
            amplitude: 2.0,
            reference_width: 4.0,
            domain: WIDTH_DOMAIN,
            trials: None,
        }
    }
}

/// Integrated false-alarm rate at each reference threshold, optionally
/// with a Monte Carlo estimate beside it.
pub fn run(opts: &Table1Options) -> Result<Vec<Table1Row>, CliError> {
    let model = GaussianPulseModel::covering(opts.amplitude, PulseParams::Width { center: 0.0 }, opts.domain.1)?;
    let mut rows = Vec::new();
    for (lambda0, expected, simulated) in REFERENCE_RATES {
        let priors = PriorCostSpec::lumped(lambda0, vec![opts.reference_width]);
        let v = integrated_fa(&model, &priors, opts.domain, FaFormula::General)?.value;
        let mc = match &opts.trials {
            Some(t) => {
                let mut c = FaSigmaConfig::new(opts.amplitude, lambda0, t.clone());
                c.reference_width = opts.reference_width;
                c.domain = opts.domain;
                let s = run_fa_sigma(&c)?.summary;
                Some((s.rate, s.rate_std_error))
            }
            None => None,
        };
        rows.push(Table1Row {
            lambda0,
            integrated: v,
            reference_expected: expected,
            reference_simulated: simulated,
            ratio: v / expected,
            simulated: mc,
        });
    }
    Ok(rows)
}

pub fn to_csv(rows: &[Table1Row]) -> String {
    let mut out = String::from("lambda0,integrated_fa,reference_expected,reference_simulated,ratio,simulated,simulated_std_error\n");
    for r in rows {
        let (s, e) = r.simulated.unwrap_or((f64::NAN, f64::NAN));
        let cells = [r.lambda0, r.integrated, r.reference_expected, r.reference_simulated, r.ratio, s, e];
        out.push_str(&cells.iter().map(|v| fmt_sig9(*v)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}
