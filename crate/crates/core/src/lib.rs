//! Data placement: potential-game dynamics, Glauber sampling and an
//! auction built on the dual of the placement linear program.
//!
//! Agents and resources are 0-indexed in this API and 1-indexed in every
//! user facing string.

pub mod auction;
pub mod duality;
pub mod error;
pub mod exact;
pub mod experiment;
pub mod glauber;
pub mod instance;
pub mod matrix;
pub mod objective;

pub use auction::{build_primal, certify_bound, cs_audit, run_auction, AuctionOutcome};
pub use duality::{
    eval_dual, ne_dual_certificate, ne_quality_bound, solve_dual, DualSolution, SolveConfig,
};
pub use error::{Error, Result};
pub use exact::{brute_force_optimum, gibbs_distribution, transition_matrix, Optimum, StateSpace};
pub use experiment::{run_suite, CriterionResult};
pub use glauber::{
    best_response_dynamics, estimate_mixing, maximal_coupling_sample, GlauberConfig,
};
pub use instance::{
    embed_uflp, gen_random, reduce_to_unit_cache, CacheContents, GenParams, Instance, UnitInstance,
    Violation,
};
pub use matrix::Matrix;
pub use objective::{
    check_exact_potential, cost_profile, distance, move_delta, player_cost, potential, Allocation,
    MoveDelta,
};
