//! The herding engine: state spaces, feature maps, target moments, weight
//! vectors, maximizers, the update step, run traces and the
//! finite-temperature gradient map.

mod features;
mod maximizer;
mod moments;
mod space;
mod step;
mod temperature;

pub use features::{dot, FeatureMap, TableFeatures};
pub use maximizer::{
    coordinate_ascent, exact_argmax, Maximizer, MaximizerKind, Maximum, DEFAULT_MAX_SWEEPS,
};
pub use moments::{hull_check, HullCheck, MomentVector, Provenance, WeightVector};
pub use space::{State, StateSpace, ENUMERATION_LIMIT};
pub use step::{
    herd_run, herd_run_with, herd_step, pct_tolerance, HerdingTrace, PctCheck, StepOptions,
    StepOutcome, TraceConfig, DEFAULT_SNAPSHOT_STRIDE, PCT_RELATIVE_TOLERANCE,
};
pub use temperature::{
    detect_period, expected_features_at_temperature, temperature_map_orbit,
    temperature_map_step, tipi_value, Period, PeriodConfig, PERIOD_CONFIRMATIONS,
    PERIOD_MAX, PERIOD_TOLERANCE,
};
