//! Bayes-optimal joint detection and estimation for a continuous family of
//! known signals in additive white Gaussian noise.
//!
//! The crate evaluates log-likelihood-ratio fields over a parameter domain,
//! applies the position-dependent Bayes threshold, predicts detection
//! probability, false-alarm density and estimation covariance analytically,
//! and checks those predictions with seeded Monte Carlo experiments.

pub mod decision;
pub mod error;
pub mod field;
pub mod model;
pub mod montecarlo;
pub mod numeric;
pub mod prediction;

pub use error::{Error, Result};
pub use model::{
    correlation, geometry, snr, GaussianPulseModel, ModelGeometry, ParamPoint, PulseParams, SampledSignal,
    SignalModel,
};
pub use numeric::gaussian_tail;
pub use field::{
    find_peaks, llr, matched_filter, matched_filter_fft, AxisGrid, FieldPeak, Measurement, PeakSearch, Refinement,
    SearchGrid, ShiftCorrelator, ShiftFilterOutput,
};
pub use decision::{
    bayes_statistic_numeric, decide, evaluate, threshold, BayesStatistic, Detection, PriorCostSpec, PriorDensity,
    QuadSpec, Threshold,
};
pub use prediction::{
    cramer_rao_cov, detection_probability, expected_peak_llr, fa_density_general, fa_density_homogeneous, global_oc,
    integrated_fa, FaFormula, LocalStats, OperatingCharacteristic,
};
pub use montecarlo::{
    run_accuracy, run_fa_shift, run_fa_sigma, run_oracle_agreement, trial_rng, AccuracyConfig, DensityHistogram,
    FaShiftConfig, FaSigmaConfig, OracleConfig, TrialConfig,
};
