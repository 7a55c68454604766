//! Maximum-entropy synthesis of categorical populations from aggregate
//! marginal constraints.
//!
//! Given a product space of K categorical attributes and a set of atomic
//! indicator constraints with target frequencies, the crate fits the
//! exponential-family distribution matching those targets two ways:
//!
//! * [`exact`] — enumeration-based dual minimization (small K), the
//!   reference implementation with exact expectations, KL, and conditionals;
//! * [`pcd`] — a persistent-pool Gibbs solver that estimates expectations
//!   stochastically and scales to tuple spaces far beyond enumeration.
//!
//! [`raking`] provides the classical reweighting baseline, [`generators`]
//! three benchmark instance sources, [`metrics`] the accuracy and diversity
//! diagnostics, and [`io`] the text formats shared with the CLI.
//!
//! All numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the `*64` aliases at the crate root fix the default `f64` choice.

pub mod error;
pub mod exact;
pub mod generators;
pub mod io;
pub mod lbfgs;
pub mod metrics;
pub mod model;
pub mod pcd;
pub mod raking;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use model::{
    build_attr_lookup, evaluate_features, expand_marginal_table, tuple_energy, AtomicConstraint,
    AttrLookup, AttributeSchema, ConstraintGroup, ConstraintSet, LambdaVector, TableKind,
};

pub use exact::{
    dual_objective_and_gradient, exact_conditional, exact_expectations, exact_kl, solve_exact,
    DualState, EnumeratedModel, ExactOptions, ExactReport, DEFAULT_ENUM_BUDGET,
};

pub use pcd::{
    estimate_expectations, fit_pcd, gibbs_conditional, gibbs_sweep, should_stop, PcdConfig,
    PcdFit, PcdSolver, PcdTrace, Pool, StopReason,
};

pub use raking::{draw_initial_sample, rake, RakeConfig, RakeReport, WeightedSample};

pub use metrics::{
    diversity, heldout_mre, kl_to_truth, mre, DiversityReport, MreValue, PopulationView,
};

/// Concrete `f64` aliases for the main types.
pub type ConstraintSet64 = ConstraintSet<f64>;
pub type LambdaVector64 = LambdaVector<f64>;
pub type EnumeratedModel64 = EnumeratedModel<f64>;
pub type WeightedSample64 = WeightedSample<f64>;
pub type PcdConfig64 = PcdConfig<f64>;
pub type PcdFit64 = PcdFit<f64>;
pub type DiversityReport64 = DiversityReport<f64>;
