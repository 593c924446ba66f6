use std::path::{Path, PathBuf};

use jdet_core::montecarlo::{AccuracyConfig, FaShiftConfig, FaSigmaConfig, OracleConfig, TrialConfig, WIDTH_DOMAIN};
use jdet_core::{GaussianPulseModel, ParamPoint, PriorCostSpec, PriorDensity, PulseParams, Threshold};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Which experiment a run config describes; fixes the free parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Width `σ` free, noise-only false alarms.
    FaSigma,
    /// Shift `ξ_s` free, homogeneous false alarms.
    FaShift,
    /// Shift and width free, injected-signal estimation accuracy.
    Accuracy,
    /// Width free, threshold rule vs integrated Bayes statistic.
    Oracle,
}

impl ExperimentKind {
    pub fn tag(self) -> &'static str {
        match self {
            Self::FaSigma => "fa_sigma",
            Self::FaShift => "fa_shift",
            Self::Accuracy => "accuracy",
            Self::Oracle => "oracle",
        }
    }

    fn active(self) -> &'static [&'static str] {
        match self {
            Self::FaSigma | Self::Oracle => &["width"],
            Self::FaShift => &["shift"],
            Self::Accuracy => &["shift", "width"],
        }
    }

    fn needs_decision(self) -> bool {
        self != Self::Accuracy
    }
}

/// A scalar or a list of scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalars {
    One(f64),
    Many(Vec<f64>),
}

impl Scalars {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Self::One(v) => vec![*v],
            Self::Many(v) => v.clone(),
        }
    }
}

fn default_width() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    /// Signal amplitude `A`; a list sweeps it.
    pub amplitude: Scalars,
    /// Width `σ_0` at which the lumped threshold equals `λ_0`.
    #[serde(default = "default_width")]
    pub reference_width: f64,
    /// Pulse width when the width is not a free parameter.
    #[serde(default = "default_width")]
    pub width: f64,
    /// Pulse center when the center is not a free parameter.
    #[serde(default)]
    pub center: f64,
    /// Free parameters; must agree with the experiment kind when given.
    #[serde(default)]
    pub active: Option<Vec<String>>,
    /// Samples either side of the pulse center used by predictions.
    #[serde(default)]
    pub support_radius: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionBlock {
    /// Lumped threshold constant; a list sweeps it.
    #[serde(default)]
    pub lambda0: Option<Scalars>,
    /// Point where the lumped threshold equals `λ_0`.
    #[serde(default)]
    pub reference: Option<Vec<f64>>,
    /// Explicit priors and costs instead of `lambda0`.
    #[serde(default)]
    pub priors: Option<PriorCostSpec>,
}

fn default_coarse() -> f64 {
    0.2
}

fn default_fine() -> f64 {
    0.002
}

fn default_half_window() -> usize {
    50
}

fn default_margin() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub lo: f64,
    pub hi: f64,
    #[serde(default = "default_coarse")]
    pub coarse: f64,
    #[serde(default = "default_fine")]
    pub fine: f64,
    /// Fine bins either side of each point in the density smoothing window.
    #[serde(default = "default_half_window")]
    pub half_window: usize,
    /// Coarse maxima this far below the lowest threshold are still refined.
    #[serde(default = "default_margin")]
    pub refine_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloBlock {
    pub n_trials: u64,
    pub seed: u64,
    #[serde(default)]
    pub workers: usize,
    /// Samples per realization for the shift experiment.
    #[serde(default)]
    pub realization_len: Option<usize>,
}

fn default_t_lo() -> f64 {
    -60.0
}

fn default_t_step() -> f64 {
    0.1
}

fn default_panels() -> usize {
    64
}

/// Net detection table used for the global operating characteristic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcBlock {
    #[serde(default = "default_t_lo")]
    pub lambda_lo: f64,
    /// Upper end; by default set from the largest SNR of the domain.
    #[serde(default)]
    pub lambda_hi: Option<f64>,
    #[serde(default = "default_t_step")]
    pub step: f64,
    #[serde(default = "default_panels")]
    pub panels: usize,
    /// Global thresholds reported; defaults to the `λ_0` sweep.
    #[serde(default)]
    pub lambda_t: Option<Vec<f64>>,
}

impl Default for OcBlock {
    fn default() -> Self {
        Self {
            lambda_lo: default_t_lo(),
            lambda_hi: None,
            step: default_t_step(),
            panels: default_panels(),
            lambda_t: None,
        }
    }
}

fn default_rel_tol() -> f64 {
    0.1
}

fn default_n_sigma() -> f64 {
    3.0
}

fn default_min_count() -> f64 {
    100.0
}

/// Pass/fail thresholds for theory vs simulation comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareBlock {
    /// Allowed relative deviation on top of the statistical band.
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    /// Width of the statistical band in Poisson standard deviations.
    #[serde(default = "default_n_sigma")]
    pub n_sigma: f64,
    /// Points backed by fewer counts are reported but not judged.
    #[serde(default = "default_min_count")]
    pub min_count: f64,
    #[serde(default = "default_half_window")]
    pub half_window: usize,
}

impl Default for CompareBlock {
    fn default() -> Self {
        Self {
            rel_tol: default_rel_tol(),
            n_sigma: default_n_sigma(),
            min_count: default_min_count(),
            half_window: default_half_window(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub model: Option<ModelBlock>,
    #[serde(default)]
    pub decision: Option<DecisionBlock>,
    #[serde(default)]
    pub grid: Option<GridBlock>,
    #[serde(default)]
    pub montecarlo: Option<MonteCarloBlock>,
    #[serde(default)]
    pub oc: Option<OcBlock>,
    #[serde(default)]
    pub compare: Option<CompareBlock>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

/// One threshold setting of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionCase {
    /// Lumped constant, or the threshold at the reference point for explicit priors.
    pub lambda0: f64,
    pub priors: PriorCostSpec,
    pub reference: Vec<f64>,
    /// The threshold is a lumped constant plus a fixed function of `x`.
    pub lumped_form: bool,
}

fn missing(block: &str, kind: ExperimentKind) -> CliError {
    CliError::Config(format!("missing `{block}` block, required for kind {}", kind.tag()))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn model(&self) -> Result<&ModelBlock, CliError> {
        let m = self.model.as_ref().ok_or_else(|| missing("model", self.kind))?;
        if let Some(active) = &m.active {
            let want = self.kind.active();
            if active.len() != want.len() || active.iter().zip(want).any(|(a, w)| a != w) {
                return Err(CliError::Config(format!(
                    "model.active {active:?} does not match kind {} (expected {want:?})",
                    self.kind.tag()
                )));
            }
        }
        let amps = m.amplitude.to_vec();
        if amps.is_empty() || amps.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(CliError::Config("model.amplitude must be positive".into()));
        }
        Ok(m)
    }

    pub fn grid(&self) -> Result<&GridBlock, CliError> {
        self.grid.as_ref().ok_or_else(|| missing("grid", self.kind))
    }

    pub fn montecarlo(&self) -> Result<&MonteCarloBlock, CliError> {
        self.montecarlo.as_ref().ok_or_else(|| missing("montecarlo", self.kind))
    }

    /// Width domain for the width experiments, defaulting when no grid is given.
    pub fn width_domain(&self) -> (f64, f64) {
        self.grid.as_ref().map_or(WIDTH_DOMAIN, |g| (g.lo, g.hi))
    }

    /// Reference point of the lumped threshold in this kind's coordinates.
    pub fn default_reference(&self, m: &ModelBlock) -> Vec<f64> {
        match self.kind {
            ExperimentKind::FaSigma | ExperimentKind::Oracle => vec![m.reference_width],
            ExperimentKind::FaShift => vec![m.center],
            ExperimentKind::Accuracy => vec![m.center, m.width],
        }
    }

    /// Model for amplitude `a`, with the support covering the whole search range.
    pub fn pulse_model(&self, a: f64) -> Result<GaussianPulseModel, CliError> {
        let m = self.model()?;
        let (params, max_width) = match self.kind {
            ExperimentKind::FaSigma | ExperimentKind::Oracle => {
                (PulseParams::Width { center: m.center }, self.width_domain().1.max(m.reference_width))
            }
            ExperimentKind::FaShift => (PulseParams::Shift { width: m.width }, m.width),
            ExperimentKind::Accuracy => (PulseParams::ShiftAndWidth, m.width),
        };
        let needed = GaussianPulseModel::radius_for(max_width);
        let radius = match m.support_radius {
            Some(r) if r < needed => {
                return Err(CliError::Config(format!(
                    "model.support_radius {r} is below the {needed} samples needed for width {max_width}"
                )))
            }
            Some(r) => r,
            None => needed,
        };
        Ok(GaussianPulseModel::new(a, params, radius)?)
    }

    /// Threshold settings of the sweep. Explicit constant-density priors are
    /// carried with their equivalent lumped constant at the reference point.
    pub fn decisions(&self) -> Result<Vec<DecisionCase>, CliError> {
        let d = self.decision.as_ref().ok_or_else(|| missing("decision", self.kind))?;
        let m = self.model()?;
        let reference = d.reference.clone().unwrap_or_else(|| self.default_reference(m));
        match (&d.lambda0, &d.priors) {
            (Some(l), None) => {
                let values = l.to_vec();
                if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                    return Err(CliError::Config("decision.lambda0 must be finite and non-empty".into()));
                }
                Ok(values
                    .into_iter()
                    .map(|lambda0| DecisionCase {
                        lambda0,
                        priors: PriorCostSpec::lumped(lambda0, reference.clone()),
                        reference: reference.clone(),
                        lumped_form: true,
                    })
                    .collect())
            }
            (None, Some(p)) => {
                let model = self.pulse_model(m.amplitude.to_vec()[0])?;
                let rule = Threshold::new(&model, p)?;
                let lambda0 = rule.lumped_equivalent(&model, &ParamPoint::new(reference.clone())?)?;
                let lumped_form = !matches!(
                    p,
                    PriorCostSpec::Explicit {
                        density: PriorDensity::Tabulated { .. },
                        ..
                    }
                );
                Ok(vec![DecisionCase {
                    lambda0,
                    priors: p.clone(),
                    reference,
                    lumped_form,
                }])
            }
            _ => Err(CliError::Config("decision block needs exactly one of `lambda0` or `priors`".into())),
        }
    }

    /// Lumped constant usable by the simulations, which take `λ_0` directly.
    fn simulation_lambda0(&self, case: &DecisionCase) -> Result<f64, CliError> {
        if case.lumped_form {
            Ok(case.lambda0)
        } else {
            Err(CliError::Config("simulations support lumped or constant-density priors only".into()))
        }
    }

    fn trials(&self) -> Result<TrialConfig, CliError> {
        let mc = self.montecarlo()?;
        let t = TrialConfig {
            n_trials: mc.n_trials,
            seed: mc.seed,
            workers: mc.workers,
        };
        t.validate()?;
        Ok(t)
    }

    fn check_decision_needed(&self) -> Result<(), CliError> {
        if self.kind.needs_decision() && self.decision.is_none() {
            return Err(missing("decision", self.kind));
        }
        Ok(())
    }

    pub fn fa_sigma_configs(&self) -> Result<Vec<FaSigmaConfig>, CliError> {
        self.check_decision_needed()?;
        let m = self.model()?;
        let trials = self.trials()?;
        let mut out = Vec::new();
        for a in m.amplitude.to_vec() {
            for case in self.decisions()? {
                let mut c = FaSigmaConfig::new(a, self.simulation_lambda0(&case)?, trials.clone());
                c.reference_width = m.reference_width;
                if let Some(g) = &self.grid {
                    c.domain = (g.lo, g.hi);
                    c.coarse = g.coarse;
                    c.fine = g.fine;
                    c.half_window = g.half_window;
                    c.refine_margin = g.refine_margin;
                }
                out.push(c);
            }
        }
        Ok(out)
    }

    pub fn fa_shift_configs(&self) -> Result<Vec<FaShiftConfig>, CliError> {
        self.check_decision_needed()?;
        let m = self.model()?;
        let trials = self.trials()?;
        let mc = self.montecarlo()?;
        let mut out = Vec::new();
        for case in self.decisions()? {
            let mut c = FaShiftConfig::new(m.amplitude.to_vec(), self.simulation_lambda0(&case)?, trials.clone());
            c.width = m.width;
            if let Some(n) = mc.realization_len {
                c.realization_len = n;
            }
            out.push(c);
        }
        Ok(out)
    }

    pub fn accuracy_configs(&self) -> Result<Vec<AccuracyConfig>, CliError> {
        let m = self.model()?;
        let trials = self.trials()?;
        Ok(m.amplitude
            .to_vec()
            .into_iter()
            .map(|a| {
                let mut c = AccuracyConfig::new(a, trials.clone());
                c.width = m.width;
                c
            })
            .collect())
    }

    pub fn oracle_configs(&self) -> Result<Vec<OracleConfig>, CliError> {
        self.check_decision_needed()?;
        let m = self.model()?;
        let trials = self.trials()?;
        let mut out = Vec::new();
        for a in m.amplitude.to_vec() {
            for case in self.decisions()? {
                let mut c = OracleConfig::new(self.simulation_lambda0(&case)?, trials.clone());
                c.amplitude = a;
                c.reference_width = m.reference_width;
                if let Some(g) = &self.grid {
                    c.domain = (g.lo, g.hi);
                    c.coarse = g.coarse;
                    c.fine = g.fine;
                    c.refine_margin = g.refine_margin;
                }
                out.push(c);
            }
        }
        Ok(out)
    }

    /// Applies command-line overrides.
    pub fn with_overrides(mut self, out: Option<PathBuf>, seed: Option<u64>, workers: Option<usize>) -> Self {
        if out.is_some() {
            self.out = out;
        }
        if let Some(mc) = self.montecarlo.as_mut() {
            if let Some(s) = seed {
                mc.seed = s;
            }
            if let Some(w) = workers {
                mc.workers = w;
            }
        }
        self
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}
