//! Simulation and verification of progressively enlarged Lévy filtrations.
//!
//! Paths of a finite-activity Lévy process are joined to Cox random times;
//! the resulting default martingale and the orthogonal family
//! `{W^σ, X^{f_1}, …, X^{f_k}, M}` are checked pathwise and statistically,
//! and square-integrable payoffs are represented as stochastic integrals
//! against that family.
//!
//! All path-level types are generic over [`Real`]; the aliases below fix the
//! scalar to `f64`.

pub mod diagnostics;
pub mod error;
pub mod levy_sim;
pub mod random_time;
pub mod representation;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod stoch_calc;

pub use error::{Error, Result};
pub use scalar::Real;

pub type LevyModel = levy_sim::LevyModel<f64>;
pub type JumpAtom = levy_sim::JumpAtom<f64>;
pub type PathBundle = levy_sim::PathBundle<f64>;
pub type LevyBatch = levy_sim::LevyBatch<f64>;
pub type Grid = stoch_calc::Grid<f64>;
pub type GridProcess = stoch_calc::GridProcess<f64>;
pub type HazardSpec = random_time::HazardSpec<f64>;
pub type HazardKind = random_time::HazardKind<f64>;
pub type Intensity = random_time::Intensity<f64>;
pub type EnlargedScenario = random_time::EnlargedScenario<f64>;
pub type MartingaleFamily = representation::MartingaleFamily<f64>;
pub type OrthonormalBasis = representation::OrthonormalBasis<f64>;
pub type IntegrandSet = representation::IntegrandSet<f64>;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
