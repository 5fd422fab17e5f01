//! Nash equilibria and price dynamics for capacity-constrained Bertrand
//! spectrum markets.
//!
//! Primary users lease spare spectrum to a pool of secondary users whose
//! aggregate demand follows a linear system derived from a quadratic
//! utility. The crate solves the strict-capacity game (duopoly closed
//! forms and an iterative search for any player count), leader-follower
//! variants, the QoS-penalty game through an aggregate-demand fixed point,
//! and the distributed price-adjustment schemes built on them, including
//! the bounded-rationality map whose bifurcations and Lyapunov exponents
//! the analysis tools characterize.
//!
//! Everything is generic over the scalar type through [`Real`]; `f64`
//! aliases for the main types live at the crate root.

pub mod chaos;
pub mod dynamics;
pub mod linalg;
pub mod market;
pub mod scalar;
pub mod stackelberg;
pub mod type1;
pub mod type2;

pub use scalar::Real;

pub use linalg::SquareMatrix;
pub use market::{
    build_substitutability_matrix, check_positive_definite, demand, derive_demand_model,
    inverse_demand, secondary_utility, CapacitySpec, DemandModel, DemandVector, MarketError,
    MarketParameters, PriceVector,
};
pub use stackelberg::{leadership_gap, stackelberg_ne, GapReport, StackelbergResult};
pub use type1::{
    duopoly_ne, duopoly_unconstrained_ne, ne_verify, oligopoly_ne_search, trace_to_jsonl,
    CaseLabel, DeviationGrid, EquilibriumResult, SearchState, Type1Error, VerifyReport,
};

pub use dynamics::{
    br_fixed_points, br_jacobian, stability_analysis, strict_best_run, strict_best_step,
    strict_br_run, strict_br_step, Branch, BrOptions, DynamicsError, LearningRates, OrbitRecord,
    StabilityReport,
};

pub use type2::{
    h_of_z, qosbest_run, qosbest_step, type2_duopoly_ne, type2_oligopoly_ne, type2_utility,
    AggregateDemandSolve, FeasibilityFlags, Type2Config, Type2Error,
};

pub use chaos::{
    attractor_capture, bifurcation_sweep, lyapunov_max, sweep_with_lyapunov, ChaosError,
    DynamicsReport, SweepParameter, SweepPoint, SweepSpec,
};

// Concrete double-precision aliases for the common entry points.
pub type MarketParameters64 = MarketParameters<f64>;
pub type DemandModel64 = DemandModel<f64>;
pub type CapacitySpec64 = CapacitySpec<f64>;
pub type PriceVector64 = PriceVector<f64>;
pub type DemandVector64 = DemandVector<f64>;
pub type EquilibriumResult64 = EquilibriumResult<f64>;
pub type StackelbergResult64 = StackelbergResult<f64>;
pub type OrbitRecord64 = OrbitRecord<f64>;
pub type Type2Config64 = Type2Config<f64>;
pub type SweepSpec64 = SweepSpec<f64>;
