//! Budget sweeps and the time/memory Pareto frontier.

use std::io::Write;
use std::time::Duration;

use rayon::prelude::*;

use crate::ilp::{self, IlpError, SolveRequest, SolveStatus};
use crate::io::{SelectionDocument, SelectionSet};
use crate::model::{Network, Selection, SCHEMA_VERSION};

/// Which footprint the memory budget bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Every layer resident at once: the summed footprint.
    WholeNetwork,
    /// Layer-by-layer execution: the largest single footprint.
    Workspace,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrontierPoint {
    pub budget: u64,
    pub regime: Regime,
    pub status: SolveStatus,
    pub selection: Option<Selection>,
}

impl FrontierPoint {
    pub fn achieved_memory(&self) -> Option<u64> {
        self.selection.as_ref().map(|s| match self.regime {
            Regime::WholeNetwork => s.breakdown.memory_sum_bytes,
            Regime::Workspace => s.breakdown.workspace_max_bytes,
        })
    }

    pub fn achieved_time(&self) -> Option<u64> {
        self.selection.as_ref().map(|s| s.breakdown.total_time_us)
    }
}

/// One min-time solve per budget, returned in ascending budget order.
/// Infeasible budgets are kept with their status.
pub fn sweep_memory_budget(
    net: &Network,
    budgets: &[u64],
    regime: Regime,
    time_limit: Option<Duration>,
) -> Result<Vec<FrontierPoint>, IlpError> {
    if budgets.is_empty() {
        return Err(IlpError::InvalidRequest(
            "a sweep needs at least one budget".into(),
        ));
    }
    let mut sorted = budgets.to_vec();
    sorted.sort_unstable();
    sorted
        .par_iter()
        .map(|&budget| {
            let mut req = SolveRequest::min_time();
            match regime {
                Regime::WholeNetwork => req.memory_budget = Some(budget),
                Regime::Workspace => req.workspace_budget = Some(budget),
            }
            req.time_limit = time_limit;
            let out = ilp::solve(net, &req)?;
            Ok(FrontierPoint {
                budget,
                regime,
                status: out.status,
                selection: out.selection,
            })
        })
        .collect()
}

/// Points not dominated in (achieved memory, total time), sorted by memory
/// ascending; time is then strictly decreasing.
pub fn extract_frontier(points: &[FrontierPoint]) -> Vec<FrontierPoint> {
    let mut with: Vec<&FrontierPoint> = points.iter().filter(|p| p.selection.is_some()).collect();
    with.sort_by_key(|p| (p.achieved_memory(), p.achieved_time(), p.budget));
    let mut out: Vec<FrontierPoint> = Vec::new();
    for p in with {
        let t = p.achieved_time();
        if out.last().is_none_or(|last| t < last.achieved_time()) {
            out.push(p.clone());
        }
    }
    out
}

/// `k` evenly spaced budgets spanning the useful range, endpoints included.
pub fn auto_grid(net: &Network, k: usize, regime: Regime) -> Vec<u64> {
    let (lo, hi) = match regime {
        Regime::WholeNetwork => (net.min_memory_sum(), net.max_memory_sum()),
        Regime::Workspace => (net.min_workspace(), net.max_workspace()),
    };
    match k {
        0 => Vec::new(),
        1 => vec![hi],
        _ => (0..k)
            .map(|i| {
                let span = u128::from(hi - lo) * i as u128 / (k as u128 - 1);
                lo + span as u64
            })
            .collect(),
    }
}

pub fn selection_id(index: usize) -> String {
    format!("sel-{index:04}")
}

pub const FRONTIER_HEADER: [&str; 5] = [
    "budget",
    "achieved_memory_bytes",
    "achieved_time_us",
    "status",
    "selection_id",
];

/// Writes the frontier CSV and returns the sidecar holding every referenced
/// selection.
pub fn write_frontier<W: Write>(
    net: &Network,
    points: &[FrontierPoint],
    out: W,
) -> Result<SelectionSet, csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FRONTIER_HEADER)?;
    let mut set = SelectionSet {
        schema: SCHEMA_VERSION,
        profile: net.name.clone(),
        selections: Default::default(),
    };
    for (i, p) in points.iter().enumerate() {
        let id = match &p.selection {
            Some(sel) => {
                let id = selection_id(i);
                let mut doc = SelectionDocument::from_selection(net, sel);
                doc.status = Some(p.status.as_str().into());
                set.selections.insert(id.clone(), doc);
                id
            }
            None => String::new(),
        };
        let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([
            p.budget.to_string(),
            opt(p.achieved_memory()),
            opt(p.achieved_time()),
            p.status.as_str().to_string(),
            id,
        ])?;
    }
    w.flush()?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LayerProfile, NetworkProfile, PrimitiveCandidate};
    use crate::strategies::{solve_min_memory, solve_min_time};

    fn net() -> Network {
        let c = |id: &str, t, m| PrimitiveCandidate::new(id, t, m, "CHW", "CHW");
        Network::from_profile(&NetworkProfile {
            schema: 1,
            name: "p".into(),
            layers: vec![
                LayerProfile::new(
                    "a",
                    vec![c("fast", 10, 100), c("mid", 14, 40), c("lean", 40, 10)],
                ),
                LayerProfile::new("b", vec![c("fast", 5, 80), c("lean", 20, 20)]),
            ],
            edges: vec![],
            layout_transforms: vec![],
        })
        .unwrap()
    }

    #[test]
    fn grid_endpoints() {
        let n = net();
        assert_eq!(auto_grid(&n, 3, Regime::WholeNetwork), vec![30, 105, 180]);
        assert_eq!(auto_grid(&n, 2, Regime::Workspace), vec![20, 100]);
        assert_eq!(auto_grid(&n, 1, Regime::WholeNetwork), vec![180]);
        assert!(auto_grid(&n, 0, Regime::WholeNetwork).is_empty());
    }

    #[test]
    fn sweep_and_frontier() {
        let n = net();
        let budgets = auto_grid(&n, 12, Regime::WholeNetwork);
        let mut pts = sweep_memory_budget(&n, &budgets, Regime::WholeNetwork, None).unwrap();
        pts.extend(sweep_memory_budget(&n, &[29], Regime::WholeNetwork, None).unwrap());
        assert_eq!(pts.last().unwrap().status, SolveStatus::Infeasible);
        let times: Vec<u64> = pts.iter().filter_map(|p| p.achieved_time()).collect();
        assert!(times.windows(2).all(|w| w[0] >= w[1]));

        let f = extract_frontier(&pts);
        for w in f.windows(2) {
            assert!(w[0].achieved_memory() < w[1].achieved_memory());
            assert!(w[0].achieved_time() > w[1].achieved_time());
        }
        let fastest = solve_min_time(&n, None).unwrap();
        let leanest = solve_min_memory(&n, None).unwrap();
        assert_eq!(f.last().unwrap().achieved_time(), fastest.objective);
        assert_eq!(f.first().unwrap().achieved_memory(), leanest.objective);
    }

    #[test]
    fn empty_budget_list_rejected() {
        assert!(sweep_memory_budget(&net(), &[], Regime::WholeNetwork, None).is_err());
    }

    #[test]
    fn csv_layout() {
        let n = net();
        let pts = sweep_memory_budget(&n, &[10, 180], Regime::WholeNetwork, None).unwrap();
        let mut buf = Vec::new();
        let set = write_frontier(&n, &pts, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "budget,achieved_memory_bytes,achieved_time_us,status,selection_id"
        );
        assert_eq!(lines[1], "10,,,infeasible,");
        assert_eq!(lines[2], "180,180,15,optimal,sel-0001");
        assert_eq!(set.selections.len(), 1);
        assert!(set.selections.contains_key("sel-0001"));
    }
}
