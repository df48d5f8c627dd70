//! Finite-instance laboratory: generators, pinning, exact enumeration,
//! instance-level BP, overlaps and the exact Nishimori check.

mod bp;
mod exact;
mod instance;
mod nishimori;
mod overlap;

pub use bp::{bp_run, BpOptions, BpResult};
pub use exact::{
    exact_partition, first_moment_by_assignments, first_moment_by_graphs, first_moment_formula, graph_count,
    mean_constraint_weight, ExactResult, ENUMERATION_BUDGET,
};
pub use instance::{gen_null, gen_teacher, pin, pin_with_theta, Assignment, Constraint, EdgeCount, FactorGraphInstance, Pin};
pub use nishimori::{nishimori_exact_check, NishimoriReport, NISHIMORI_BUDGET, NISHIMORI_TOL};
pub use overlap::{overlap, OverlapStats, MAX_OVERLAP_Q};
