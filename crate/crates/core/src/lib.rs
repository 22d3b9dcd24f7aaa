//! Anytime-valid logrank testing.
//!
//! The exact safe logrank test multiplies per-event-time likelihood ratios of
//! Fisher noncentral hypergeometric laws into a test martingale, which may be
//! monitored after every event and stopped or extended at will without losing
//! type-I error control. Alongside it the crate provides a Gaussian
//! approximation on the logrank `Z`, learned alternatives (prequential
//! plug-in, Bayes predictive), confidence sequences for the hazard ratio, and
//! a Monte Carlo engine for trial design.
//!
//! ```
//! use safelogrank::{EProcess, EventBatch, ExactProcess, HazardRatio, RiskSet};
//!
//! let mut p = ExactProcess::<f64>::new(HazardRatio::new(0.5)?, HazardRatio::new(1.0)?);
//! p.observe(&EventBatch::single(RiskSet::new(100, 100), false)?)?;
//! assert!((p.log_e() - (4.0f64 / 3.0).ln()).abs() < 1e-12);
//! # Ok::<(), safelogrank::Error>(())
//! ```
//!
//! Kernels are generic over [`Scalar`] (`f32` or `f64`); the simulation and
//! dataset layers work in `f64`.

pub mod adaptive;
pub mod dataset;
pub mod error;
pub mod gaussian;
pub mod normal;
pub mod process;
pub mod riskset;
pub mod scalar;
pub mod sim;

pub use adaptive::{
    bayes_predictive_increment, confidence_sequence, plugin_increment, BayesPosterior,
    BayesProcess, ConfidenceSequence, CsInterval, NumeratorStrategy, PlugInProcess, PlugInState,
    PriorSpec, ThetaGrid,
};
pub use dataset::{
    parse_dataset, read_dataset, write_dataset, ParseOptions, SurvivalRecord, TrialDataset,
};
pub use error::{Error, Result};
pub use gaussian::{
    logrank_z, null_expectation_audit, schoenfeld_mu, BoundaryKind, BoundarySpec, GaussianProcess,
    LogrankSummary, Side,
};
pub use normal::normal_quantile;
pub use process::{EProcess, ExactProcess, TwoSidedProcess};
pub use riskset::{
    evalue_increment, hypergeom_event_prob, meta_combine, score_components, EventBatch,
    EvidenceThreshold, HazardRatio, MartingaleState, RiskSet, ScoreComponents,
};
pub use scalar::Scalar;
pub use sim::{DesignSpec, SimScenario, StoppingReport, TestKind, TieModel, TimedBatch};

pub type HazardRatioF64 = HazardRatio<f64>;
pub type HazardRatioF32 = HazardRatio<f32>;
pub type MartingaleStateF64 = MartingaleState<f64>;
pub type MartingaleStateF32 = MartingaleState<f32>;
pub type ExactProcessF64 = ExactProcess<f64>;
pub type ExactProcessF32 = ExactProcess<f32>;
pub type GaussianProcessF64 = GaussianProcess<f64>;
pub type LogrankSummaryF64 = LogrankSummary<f64>;
pub type BoundarySpecF64 = BoundarySpec<f64>;
pub type PriorSpecF64 = PriorSpec<f64>;
pub type ThetaGridF64 = ThetaGrid<f64>;
pub type ConfidenceSequenceF64 = ConfidenceSequence<f64>;
