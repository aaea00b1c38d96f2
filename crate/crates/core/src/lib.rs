//! Distinct-value estimation from samples spread over many machines.
//!
//! Machines hold disjoint parts of a uniform sample. Instead of shipping
//! their frequency dictionaries, they send fixed-size mergeable sketches: a
//! HyperLogLog of their distinct ids, a HyperLogLog of their locally unique
//! ids, optionally a Count Sketch and resample sketches. The coordinator
//! recovers the global sample statistics `d`, `f1`, `||X||_2^2` from those
//! and feeds them to the sampling-based NDV estimators.
//!
//! Numeric estimator code is generic over [`Scalar`] (`f32` or `f64`);
//! the `*64` aliases below fix it to `f64`, which is what the harness uses.

pub mod coordinator;
pub mod datagen;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod frequency;
pub mod hash;
pub mod scalar;
pub mod sketch;

pub use coordinator::{
    comm_report, coordinate, esti_d, esti_f1, esti_l2sq, esti_resample, run_coordinator,
    summarize_dict, summarize_machine, CommLedger, MachinePayload, MachineSummary, PmTree, Role,
    RoleSet, SummaryParams,
};
pub use datagen::{
    check_assumption, expected_sample_stats, gen_fof_poisson, gen_fof_zipf, sample_population,
    Distribution, PopulationSpec, SamplePlan, SamplingModel,
};
pub use error::{Error, EstimatorError, Result};
pub use estimators::{Estimate, EstimatorInputs, EstimatorKind};
pub use experiment::{calibrate, run_experiment, ExperimentConfig, ReportRow, SketchChoice};
pub use frequency::{Fof, FofStats, FreqDict};
pub use scalar::Scalar;
pub use sketch::{CountSketch, DistinctSketch, ExactL0, HyperLogLog, SketchBytes};

pub type EstimatorInputs64 = EstimatorInputs<f64>;
pub type EstimatorInputs32 = EstimatorInputs<f32>;
pub type Estimate64 = Estimate<f64>;
pub type Estimate32 = Estimate<f32>;
pub type SampleExpectation64 = datagen::SampleExpectation<f64>;
pub type AssumptionCheck64 = datagen::AssumptionCheck<f64>;
