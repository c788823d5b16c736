//! Cox random times, the Azéma supermartingale and the default martingale.

mod cantor;
mod hazard;
mod scenario;

pub use cantor::{cantor_distance, cantor_function, CantorComplement, DEFAULT_CANTOR_DEPTH, MAX_CANTOR_DEPTH};
pub use hazard::{hazard_value, HazardClass, HazardCurve, HazardKind, HazardSpec, Intensity, PreparedHazard};
pub use scenario::{
    check_identities, draw_random_time, enlarge, enlarge_with_threshold, passage_tolerance,
    stochastic_exponential_of_minus_m, EnlargedBatch, EnlargedScenario, IdentityCheck, Provenance, ScenarioSource,
};
