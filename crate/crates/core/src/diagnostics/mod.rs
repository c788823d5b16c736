//! Statistical martingale tests, Azéma cross-checks, bracket and
//! orthogonality audits, and the multiplicity experiments.
//!
//! Every statistical gate is `|z| <= 4` per cell; with many cells this is a
//! Bonferroni-style allowance, and fixed seeds make every rerun identical.

mod azema;
mod brackets;
mod martingale;
mod multiplicity;

pub use azema::{azema_crosscheck, AzemaCell, AzemaCheckConfig, AzemaReport, PlateauCheck};
pub use brackets::{
    bracket_identities, family_orthogonality, identity_sweep, levy_after_default, representation_agreement, Agreement,
    BracketReport, IdentitySweep, OrthogonalityReport, PairCell, ZCell,
};
pub use martingale::{
    martingale_increment_test, martingale_increment_tests, IncrementCell, MartingaleTestReport, TestFunction,
    TestedProcess, MIN_BATCH, Z_GATE,
};
pub use multiplicity::{
    multiplicity_experiment, time_change_example, MultiplicityConfig, SingularityReport, SingularityRow,
    TimeChangeReport, TimeChangedBatch, Verdict,
};
