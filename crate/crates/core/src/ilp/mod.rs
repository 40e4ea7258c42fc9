//! Exact 0-1 ILP formulation and solvers for primitive selection.

mod bnb;
mod labels;
mod problem;

use std::time::Duration;

use thiserror::Error;

use crate::cost::{self, CostError};
use crate::model::{Network, Selection};

pub use bnb::{solve_bnb, IlpSolution};
pub use labels::solve_chain_labels;
pub use problem::{
    build_problem, linearized_transition_value, Constraint, IlpProblem, Relation, VarKind, Variable,
};

#[derive(Debug, Error)]
pub enum IlpError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("profile is not a chain")]
    NotAChain,
    #[error("coefficient does not fit in 64-bit signed arithmetic")]
    Overflow,
    #[error(transparent)]
    Cost(#[from] CostError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveMode {
    /// Minimize total time, optionally under a memory budget.
    MinTime,
    /// Minimize the summed footprint, optionally under a time budget.
    MinMemorySum,
    /// Minimize the largest per-layer footprint, optionally under a time budget.
    MinWorkspace,
}

impl SolveMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "min-time" => Some(SolveMode::MinTime),
            "min-memory" => Some(SolveMode::MinMemorySum),
            "min-workspace" => Some(SolveMode::MinWorkspace),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolveMode::MinTime => "min-time",
            SolveMode::MinMemorySum => "min-memory",
            SolveMode::MinWorkspace => "min-workspace",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveRequest {
    pub mode: SolveMode,
    /// Bound on the summed footprint (MinTime only).
    pub memory_budget: Option<u64>,
    /// Bound on every layer's footprint (MinTime only).
    pub workspace_budget: Option<u64>,
    /// Bound on total time (MinMemorySum and MinWorkspace only).
    pub time_budget: Option<u64>,
    pub time_limit: Option<Duration>,
}

impl SolveRequest {
    pub fn new(mode: SolveMode) -> Self {
        SolveRequest {
            mode,
            memory_budget: None,
            workspace_budget: None,
            time_budget: None,
            time_limit: None,
        }
    }

    pub fn min_time() -> Self {
        Self::new(SolveMode::MinTime)
    }

    pub fn min_memory() -> Self {
        Self::new(SolveMode::MinMemorySum)
    }

    pub fn min_workspace() -> Self {
        Self::new(SolveMode::MinWorkspace)
    }

    pub fn with_memory_budget(mut self, bytes: u64) -> Self {
        self.memory_budget = Some(bytes);
        self
    }

    pub fn with_workspace_budget(mut self, bytes: u64) -> Self {
        self.workspace_budget = Some(bytes);
        self
    }

    pub fn with_time_budget(mut self, us: u64) -> Self {
        self.time_budget = Some(us);
        self
    }

    pub fn with_time_limit(mut self, limit: Duration) -> Self {
        self.time_limit = Some(limit);
        self
    }

    pub fn validate(&self) -> Result<(), IlpError> {
        match self.mode {
            SolveMode::MinTime if self.time_budget.is_some() => Err(IlpError::InvalidRequest(
                "min-time takes a memory or workspace budget, not a time budget".into(),
            )),
            SolveMode::MinMemorySum | SolveMode::MinWorkspace
                if self.memory_budget.is_some() || self.workspace_budget.is_some() =>
            {
                Err(IlpError::InvalidRequest(format!(
                    "{} takes a time budget, not a memory budget",
                    self.mode.as_str()
                )))
            }
            _ => Ok(()),
        }
    }

    /// Objective of `mode` for an evaluated selection.
    pub fn objective_of(&self, b: &crate::model::ObjectiveBreakdown) -> u64 {
        match self.mode {
            SolveMode::MinTime => b.total_time_us,
            SolveMode::MinMemorySum => b.memory_sum_bytes,
            SolveMode::MinWorkspace => b.workspace_max_bytes,
        }
    }

    /// Whether an evaluated selection satisfies every budget of the request.
    pub fn admits(&self, b: &crate::model::ObjectiveBreakdown) -> bool {
        self.memory_budget.is_none_or(|m| b.memory_sum_bytes <= m)
            && self
                .workspace_budget
                .is_none_or(|w| b.workspace_max_bytes <= w)
            && self.time_budget.is_none_or(|t| b.total_time_us <= t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// The time limit expired; the outcome carries the best incumbent, if any.
    TimedOut,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::TimedOut => "timed-out",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SolveStats {
    pub nodes: u64,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub selection: Option<Selection>,
    /// Objective of `selection` under the request's mode.
    pub objective: Option<u64>,
    /// Proven lower bound on the optimum; equals `objective` when optimal.
    pub bound: Option<u64>,
    pub stats: SolveStats,
}

impl SolveOutcome {
    pub fn infeasible(stats: SolveStats) -> Self {
        SolveOutcome {
            status: SolveStatus::Infeasible,
            selection: None,
            objective: None,
            bound: None,
            stats,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn total_time(&self) -> Option<u64> {
        self.selection.as_ref().map(|s| s.breakdown.total_time_us)
    }
}

/// Builds the ILP for `request` and solves it with branch and bound.
pub fn solve(net: &Network, request: &SolveRequest) -> Result<SolveOutcome, IlpError> {
    let problem = build_problem(net, request)?;
    let raw = solve_bnb(&problem, request.time_limit)?;
    let selection = match &raw.assignment {
        Some(a) => Some(Selection {
            assignment: a.clone(),
            breakdown: cost::evaluate(net, a)?,
        }),
        None => None,
    };
    if let Some(sel) = &selection {
        debug_assert_eq!(Some(request.objective_of(&sel.breakdown)), raw.objective);
    }
    Ok(SolveOutcome {
        status: raw.status,
        selection,
        objective: raw.objective,
        bound: raw.bound,
        stats: raw.stats,
    })
}
