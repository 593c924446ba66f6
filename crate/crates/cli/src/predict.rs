use std::path::PathBuf;

use jdet_core::prediction::{
    cramer_rao_cov, detection_curve, expected_peak_llr, false_alarm_curve, fmt_sig9, global_oc,
    weighted_detection_table,
};
use jdet_core::{geometry, integrated_fa, AxisGrid, FaFormula, ParamPoint, PriorCostSpec};
use serde::Serialize;

use crate::config::{ExperimentKind, OcBlock, RunConfig};
use crate::{to_json, write_artifact, CliError};

/// Cramér-Rao bound and expected peak LLR at one state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CramerRaoEntry {
    pub amplitude: f64,
    pub x: Vec<f64>,
    pub r: f64,
    pub covariance: Vec<Vec<f64>>,
    pub std: Vec<f64>,
    pub correlation: Option<f64>,
    pub expected_peak_llr: f64,
}

/// Integrated false-alarm probability for one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegratedEntry {
    pub amplitude: f64,
    pub lambda0: f64,
    pub value: f64,
    pub abs_error: f64,
    /// Trapezoid sum of the tabulated density, for cross-checking the file.
    pub tabulated: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Prediction {
    pub files: Vec<PathBuf>,
    pub integrated: Vec<IntegratedEntry>,
    pub cramer_rao: Vec<CramerRaoEntry>,
}

/// Evaluation points of a one-parameter domain at the fine spacing.
pub fn fine_points(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(hi > lo && step > 0.0) {
        return Err(CliError::Config(format!("invalid grid [{lo}, {hi}] step {step}")));
    }
    let n = ((hi - lo) / step).round() as usize;
    Ok((0..=n).map(|i| (lo + i as f64 * step).min(hi)).collect())
}

/// Fine lattice of a search grid, identical to the one the simulations bin on.
pub fn search_points(lo: f64, hi: f64, coarse: f64, fine: f64) -> Result<Vec<f64>, CliError> {
    let axis = AxisGrid::new(lo, hi, coarse, fine)?;
    Ok((0..axis.fine_len()).map(|j| axis.fine_at(j)).collect())
}

fn domain_and_points(cfg: &RunConfig) -> Result<(f64, f64, Vec<f64>), CliError> {
    if let (Some(g), ExperimentKind::FaSigma | ExperimentKind::Oracle) = (&cfg.grid, cfg.kind) {
        return Ok((g.lo, g.hi, search_points(g.lo, g.hi, g.coarse, g.fine)?));
    }
    let (lo, hi, step) = domain_and_step(cfg)?;
    Ok((lo, hi, fine_points(lo, hi, step)?))
}

fn domain_and_step(cfg: &RunConfig) -> Result<(f64, f64, f64), CliError> {
    match (&cfg.grid, cfg.kind) {
        (Some(g), _) => Ok((g.lo, g.hi, g.fine)),
        (None, ExperimentKind::FaShift) => {
            let m = cfg.model()?;
            Ok((m.center - 5.0 * m.width, m.center + 5.0 * m.width, 0.01 * m.width))
        }
        (None, _) => {
            let (lo, hi) = cfg.width_domain();
            Ok((lo, hi, 0.002))
        }
    }
}

fn cramer_rao_entry(cfg: &RunConfig, a: f64, x: Vec<f64>) -> Result<CramerRaoEntry, CliError> {
    let model = cfg.pulse_model(a)?;
    let p = ParamPoint::new(x.clone())?;
    let cov = cramer_rao_cov(&model, &p)?;
    let d = cov.nrows();
    let rows: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| cov[(i, j)]).collect()).collect();
    let std: Vec<f64> = (0..d).map(|i| cov[(i, i)].sqrt()).collect();
    Ok(CramerRaoEntry {
        amplitude: a,
        x,
        r: geometry(&model, &p)?.r,
        correlation: (d == 2).then(|| cov[(0, 1)] / (std[0] * std[1])),
        covariance: rows,
        std,
        expected_peak_llr: expected_peak_llr(&model, &p)?,
    })
}

// Long-format table: sweep columns repeated on every row.
fn push_rows(out: &mut String, prefix: &[f64], columns: &[&[f64]]) {
    let rows = columns.first().map_or(0, |c| c.len());
    for i in 0..rows {
        let cells: Vec<String> = prefix
            .iter()
            .copied()
            .chain(columns.iter().map(|c| c[i]))
            .map(fmt_sig9)
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
}

/// Writes `pd_curve.csv`, `fa_density.csv`, `oc.csv`, `integrated_fa.csv`
/// and `cramer_rao.json` for every amplitude and threshold of the sweep.
pub fn run(cfg: &RunConfig) -> Result<Prediction, CliError> {
    let out = cfg.out_dir();
    let amps = cfg.model()?.amplitude.to_vec();
    let mut pred = Prediction::default();

    if cfg.kind == ExperimentKind::Accuracy {
        let m = cfg.model()?;
        for &a in &amps {
            pred.cramer_rao.push(cramer_rao_entry(cfg, a, vec![m.center, m.width])?);
        }
        pred.files.push(write_artifact(&out, "cramer_rao.json", &to_json(&pred.cramer_rao)?)?);
        eprintln!("note: kind accuracy has two free parameters; only cramer_rao.json is written");
        return Ok(pred);
    }

    let cases = cfg.decisions()?;
    let (lo, hi, xs) = domain_and_points(cfg)?;
    let oc_cfg = cfg.oc.clone().unwrap_or_default();

    let mut pd = String::from("amplitude,lambda0,x,r,lambda_r,p_d\n");
    let mut fa = String::from("amplitude,lambda0,x,r,v_f,v_f_homogeneous\n");
    let mut oc = String::from("amplitude,lambda_t,p_d_net,p_f,p_f_first_order,integrated_fa,truncated\n");
    let mut integ = String::from("amplitude,lambda0,integrated_fa,abs_error,tabulated\n");
    for &a in &amps {
        let model = cfg.pulse_model(a)?;
        for case in &cases {
            let head = [a, case.lambda0];
            let d = detection_curve(&model, &case.priors, &xs)?;
            push_rows(&mut pd, &head, &[&d.x, &d.r, &d.lambda_r, &d.p_d]);
            let g = false_alarm_curve(&model, &case.priors, &xs, FaFormula::General)?;
            let h = false_alarm_curve(&model, &case.priors, &xs, FaFormula::Homogeneous)?;
            push_rows(&mut fa, &head, &[&g.x, &g.r, &g.v_f, &h.v_f]);
            let total = integrated_fa(&model, &case.priors, (lo, hi), FaFormula::General)?;
            if !total.converged {
                eprintln!("warning: integrated false-alarm quadrature did not converge at λ0 = {}", case.lambda0);
            }
            let entry = IntegratedEntry {
                amplitude: a,
                lambda0: case.lambda0,
                value: total.value,
                abs_error: total.abs_error,
                tabulated: g.riemann_integral(),
            };
            push_rows(&mut integ, &[], &[&[a], &[case.lambda0], &[entry.value], &[entry.abs_error], &[entry.tabulated]]);
            pred.integrated.push(entry);
        }
        oc_rows(cfg, &oc_cfg, a, &cases, (lo, hi), &mut oc)?;
        for case in cases.iter().take(1) {
            pred.cramer_rao.push(cramer_rao_entry(cfg, a, case.reference.clone())?);
        }
    }
    pred.files.push(write_artifact(&out, "pd_curve.csv", &pd)?);
    pred.files.push(write_artifact(&out, "fa_density.csv", &fa)?);
    pred.files.push(write_artifact(&out, "oc.csv", &oc)?);
    pred.files.push(write_artifact(&out, "integrated_fa.csv", &integ)?);
    pred.files.push(write_artifact(&out, "cramer_rao.json", &to_json(&pred.cramer_rao)?)?);
    Ok(pred)
}

// Net detection probability tabulated against a global threshold with the
// sweep's own spatial threshold profile, then converted to false-alarm probability.
fn oc_rows(
    cfg: &RunConfig,
    oc_cfg: &OcBlock,
    a: f64,
    cases: &[crate::config::DecisionCase],
    domain: (f64, f64),
    out: &mut String,
) -> Result<(), CliError> {
    let Some(first) = cases.first() else {
        return Ok(());
    };
    if cases.iter().any(|c| !c.lumped_form) {
        eprintln!("warning: tabulated prior density has no global threshold form; oc.csv left empty");
        return Ok(());
    }
    let model = cfg.pulse_model(a)?;
    // Net detection vanishes a few r above r²/2 at the strongest point.
    let r_max = geometry(&model, &ParamPoint::scalar(domain.1)?)?.r;
    let hi = oc_cfg.lambda_hi.unwrap_or((0.5 * r_max * r_max + 8.0 * r_max + 20.0).max(140.0));
    let lambda = fine_points(oc_cfg.lambda_lo, hi, oc_cfg.step)?;
    let base = PriorCostSpec::lumped(0.0, first.reference.clone());
    let p_d = weighted_detection_table(&model, &base, domain, &lambda, oc_cfg.panels)?;
    let lambda_t = oc_cfg
        .lambda_t
        .clone()
        .unwrap_or_else(|| cases.iter().map(|c| c.lambda0).collect());
    let res = global_oc(&lambda, &p_d, &lambda_t)?;
    if res.any_truncated() {
        eprintln!("warning: net detection table too narrow for some thresholds; widen oc.lambda_lo/lambda_hi");
    }
    for (i, &lt) in lambda_t.iter().enumerate() {
        let direct = integrated_fa(&model, &PriorCostSpec::lumped(lt, first.reference.clone()), domain, FaFormula::General)?;
        let cells = [a, lt, res.p_d[i], res.p_f[i], res.p_f_first_order[i], direct.value];
        let mut line: Vec<String> = cells.iter().map(|v| fmt_sig9(*v)).collect();
        line.push(res.truncated[i].to_string());
        out.push_str(&line.join(","));
        out.push('\n');
    }
    Ok(())
}
