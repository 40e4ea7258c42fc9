//! Label-correcting sweep for chain networks: an exact method that shares no
//! code with the branch-and-bound solver, used to cross-check it.

use std::time::Instant;

use super::{IlpError, SolveMode, SolveOutcome, SolveRequest, SolveStats, SolveStatus};
use crate::cost;
use crate::model::{Network, Selection};

#[derive(Debug, Clone, Copy)]
struct Label {
    objective: u64,
    resource: u64,
    /// Label index at the previous layer, grouped by candidate.
    pred: Option<(usize, usize)>,
}

/// Solves a chain profile layer by layer, keeping per (layer, candidate) only
/// labels that are not dominated in (objective, resource).
pub fn solve_chain_labels(net: &Network, request: &SolveRequest) -> Result<SolveOutcome, IlpError> {
    request.validate()?;
    if !net.is_chain() {
        return Err(IlpError::NotAChain);
    }
    let start = Instant::now();
    let m = net.num_layers();
    // Matrices indexed by the consuming layer.
    let mut into = vec![None; m];
    for e in &net.edges {
        into[e.to] = Some(&e.matrix);
    }

    let budget = match request.mode {
        SolveMode::MinTime => request.memory_budget,
        SolveMode::MinMemorySum | SolveMode::MinWorkspace => request.time_budget,
    };
    let usable = |i: usize, j: usize| {
        request
            .workspace_budget
            .is_none_or(|w| net.layers[i].candidates[j].memory_bytes <= w)
    };
    // Cheapest resource use of layers i.. (transitions are nonnegative).
    let mut rest_min = vec![0u64; m + 1];
    if budget.is_some() {
        for i in (0..m).rev() {
            let layer = &net.layers[i];
            let least = (0..layer.len())
                .filter(|&j| usable(i, j))
                .map(|j| match request.mode {
                    SolveMode::MinTime => layer.candidates[j].memory_bytes,
                    _ => layer.candidates[j].time_us,
                })
                .min()
                .unwrap_or(u64::MAX);
            rest_min[i] = rest_min[i + 1].saturating_add(least);
        }
    }

    let extend = |prev: Option<(&Label, usize)>, i: usize, k: usize| -> Option<Label> {
        let c = &net.layers[i].candidates[k];
        let trans = match (prev, into[i]) {
            (Some((_, j)), Some(mx)) => mx.get(j, k),
            _ => 0,
        };
        let (po, pr) = prev.map_or((0, 0), |(l, _)| (l.objective, l.resource));
        let (objective, resource) = match request.mode {
            SolveMode::MinTime => (
                po.checked_add(c.time_us)?.checked_add(trans)?,
                pr.checked_add(c.memory_bytes)?,
            ),
            SolveMode::MinMemorySum => (
                po.checked_add(c.memory_bytes)?,
                pr.checked_add(c.time_us)?.checked_add(trans)?,
            ),
            SolveMode::MinWorkspace => (
                po.max(c.memory_bytes),
                pr.checked_add(c.time_us)?.checked_add(trans)?,
            ),
        };
        let resource = if budget.is_some() { resource } else { 0 };
        if let Some(b) = budget {
            if resource.saturating_add(rest_min[i + 1]) > b {
                return None;
            }
        }
        Some(Label {
            objective,
            resource,
            pred: None,
        })
    };

    let mut layers: Vec<Vec<Vec<Label>>> = Vec::with_capacity(m);
    let mut created = 0u64;
    for i in 0..m {
        let n = net.layers[i].len();
        let mut buckets: Vec<Vec<Label>> = vec![Vec::new(); n];
        for (k, bucket) in buckets.iter_mut().enumerate() {
            if !usable(i, k) {
                continue;
            }
            if i == 0 {
                bucket.extend(extend(None, 0, k));
            } else {
                for (j, prev) in layers[i - 1].iter().enumerate() {
                    for (idx, label) in prev.iter().enumerate() {
                        if let Some(mut l) = extend(Some((label, j)), i, k) {
                            l.pred = Some((j, idx));
                            bucket.push(l);
                        }
                    }
                }
            }
            created += bucket.len() as u64;
            bucket.sort_by_key(|l| (l.objective, l.resource));
            let mut frontier_res = u64::MAX;
            bucket.retain(|l| {
                let keep = l.resource < frontier_res;
                if keep {
                    frontier_res = l.resource;
                }
                keep
            });
        }
        layers.push(buckets);
    }

    let stats = SolveStats {
        nodes: created,
        wall_time: start.elapsed(),
    };
    let best = layers[m - 1]
        .iter()
        .enumerate()
        .flat_map(|(k, b)| {
            b.iter()
                .enumerate()
                .map(move |(idx, l)| (l.objective, k, idx))
        })
        .min();
    let Some((objective, k, idx)) = best else {
        return Ok(SolveOutcome::infeasible(stats));
    };
    let mut assignment = vec![0; m];
    let mut at = Some((k, idx));
    for i in (0..m).rev() {
        let (k, idx) = at.expect("label chain reaches the first layer");
        assignment[i] = k;
        at = layers[i][k][idx].pred;
    }
    let breakdown = cost::evaluate(net, &assignment)?;
    debug_assert_eq!(request.objective_of(&breakdown), objective);
    Ok(SolveOutcome {
        status: SolveStatus::Optimal,
        selection: Some(Selection {
            assignment,
            breakdown,
        }),
        objective: Some(objective),
        bound: Some(objective),
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EdgeSpec, LayerProfile, NetworkProfile, PrimitiveCandidate};

    fn two_layer() -> Network {
        let two = || {
            vec![
                PrimitiveCandidate::new("p", 10, 1, "CHW", "CHW"),
                PrimitiveCandidate::new("q", 1, 1, "HWC", "HWC"),
            ]
        };
        Network::from_profile(&NetworkProfile {
            schema: 1,
            name: "t".into(),
            layers: vec![LayerProfile::new("a", two()), LayerProfile::new("b", two())],
            edges: vec![EdgeSpec {
                from: "a".into(),
                to: "b".into(),
                matrix: Some(vec![vec![0, 100], vec![100, 0]]),
            }],
            layout_transforms: vec![],
        })
        .unwrap()
    }

    #[test]
    fn two_layer_chain() {
        let out = solve_chain_labels(&two_layer(), &SolveRequest::min_time()).unwrap();
        assert_eq!(out.objective, Some(2));
        assert_eq!(out.selection.unwrap().assignment, vec![1, 1]);
    }

    #[test]
    fn unsatisfiable_budget() {
        let out = solve_chain_labels(
            &two_layer(),
            &SolveRequest::min_time().with_memory_budget(1),
        )
        .unwrap();
        assert_eq!(out.status, SolveStatus::Infeasible);
    }

    #[test]
    fn rejects_forks() {
        let one = |id: &str| {
            LayerProfile::new(id, vec![PrimitiveCandidate::new("x", 1, 1, "CHW", "CHW")])
        };
        let net = Network::from_profile(&NetworkProfile {
            schema: 1,
            name: "f".into(),
            layers: vec![one("a"), one("b"), one("c")],
            edges: vec![
                EdgeSpec {
                    from: "a".into(),
                    to: "b".into(),
                    matrix: None,
                },
                EdgeSpec {
                    from: "a".into(),
                    to: "c".into(),
                    matrix: None,
                },
            ],
            layout_transforms: vec![],
        })
        .unwrap();
        assert!(matches!(
            solve_chain_labels(&net, &SolveRequest::min_time()),
            Err(IlpError::NotAChain)
        ));
    }
}
