//! The orthogonal family `{W^σ, X^{f_n}, M}` and predictable representations against it.

mod basis;
mod design;
mod family;
mod features;
mod payoff;
mod regression;

pub use basis::{OrthonormalBasis, ORTHONORMAL_TOL};
pub use design::{
    assemble_design, fit_all, predictions, residual_from_moments, residual_stats, scenario_row, Design, DesignSpec,
    FamilyContext, Integrator, LinearFit, ResidualStats, MIN_SCENARIOS, RESIDUAL_FLOOR,
};
pub use family::{build_family, Carrier, MartingaleFamily, Member};
pub use features::{FeatureSpec, Gate, Monomial};
pub use payoff::{Payoff, PayoffClass, TerminalFunction};
pub use regression::{
    block_integrand, explicit_representation, regression_representation, ExplicitRepresentation, IntegrandSet,
    RegressionRepresentation, SurvivalClaim,
};
