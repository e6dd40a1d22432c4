//! Environmental calibration, offspring sampling and the generation loop.

mod env;
mod evolve;
mod sample;

pub use env::{
    calibrate, cluster_survival_prob, expected_layer_count, expected_synapse_count, layer_count_variance, EncodingMode,
    EnvFactors, CALIBRATION_MAX_ITERATIONS, CALIBRATION_REL_TOLERANCE,
};
pub use evolve::{
    derive_seed, evolve, stream, DatasetEvaluator, Evaluator, Evolution, EvolutionConfig, EvolveOptions,
    GenerationRecord, StopReason, SynthesisStats,
};
pub use sample::sample_offspring;
