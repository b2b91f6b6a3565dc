//! Numeric audits of the inequalities that drive convergence.

pub mod gronwall;
pub mod limits;
pub mod trajectory;

pub use gronwall::{
    bound_with_exponent, gronwall_bound, gronwall_check, GronwallError, GronwallInstance,
    GronwallReport, Verdict,
};
pub use limits::{audit_aux33, audit_limits, Aux33Report, CheckpointRow, LimitsReport, PsiProfile};
pub use trajectory::{
    audit_trajectory, growth_constant, AuditInputs, BoundCheck, StopSplit, TrajectoryAudit,
    AUDIT_SOLVE_TOL,
};
