//! Objective evaluation for a concrete selection, independent of any solver.
//!
//! All sums use checked 64-bit arithmetic; an overflow is reported as an
//! error rather than wrapped.

use thiserror::Error;

use crate::model::{Network, ObjectiveBreakdown};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CostError {
    #[error("invalid selection: {0}")]
    InvalidSelection(String),
    #[error("arithmetic overflow while evaluating {0}")]
    Overflow(&'static str),
}

fn check(net: &Network, assignment: &[usize]) -> Result<(), CostError> {
    if assignment.len() != net.num_layers() {
        return Err(CostError::InvalidSelection(format!(
            "{} indices for {} layers",
            assignment.len(),
            net.num_layers()
        )));
    }
    for (layer, &idx) in net.layers.iter().zip(assignment) {
        if idx >= layer.len() {
            return Err(CostError::InvalidSelection(format!(
                "layer '{}' has {} candidates, index {idx} out of range",
                layer.layer_id,
                layer.len()
            )));
        }
    }
    Ok(())
}

fn checked_sum(
    what: &'static str,
    values: impl IntoIterator<Item = u64>,
) -> Result<u64, CostError> {
    values
        .into_iter()
        .try_fold(0u64, |acc, v| acc.checked_add(v))
        .ok_or(CostError::Overflow(what))
}

/// Sum of the chosen candidates' execution times.
pub fn exec_time(net: &Network, assignment: &[usize]) -> Result<u64, CostError> {
    check(net, assignment)?;
    checked_sum(
        "exec_time",
        net.layers
            .iter()
            .zip(assignment)
            .map(|(l, &j)| l.candidates[j].time_us),
    )
}

/// Sum over all edges of the transition cost between the chosen candidates.
pub fn transform_time(net: &Network, assignment: &[usize]) -> Result<u64, CostError> {
    check(net, assignment)?;
    checked_sum(
        "transform_time",
        net.edges
            .iter()
            .map(|e| e.matrix.get(assignment[e.from], assignment[e.to])),
    )
}

pub fn total_time(net: &Network, assignment: &[usize]) -> Result<u64, CostError> {
    exec_time(net, assignment)?
        .checked_add(transform_time(net, assignment)?)
        .ok_or(CostError::Overflow("total_time"))
}

/// Whole-network footprint: every layer resident at once.
pub fn memory_sum(net: &Network, assignment: &[usize]) -> Result<u64, CostError> {
    check(net, assignment)?;
    checked_sum(
        "memory_sum",
        net.layers
            .iter()
            .zip(assignment)
            .map(|(l, &j)| l.candidates[j].memory_bytes),
    )
}

/// Layer-by-layer footprint: the largest single chosen candidate.
pub fn workspace_max(net: &Network, assignment: &[usize]) -> Result<u64, CostError> {
    check(net, assignment)?;
    Ok(net
        .layers
        .iter()
        .zip(assignment)
        .map(|(l, &j)| l.candidates[j].memory_bytes)
        .max()
        .unwrap_or(0))
}

pub fn evaluate(net: &Network, assignment: &[usize]) -> Result<ObjectiveBreakdown, CostError> {
    let exec = exec_time(net, assignment)?;
    let transform = transform_time(net, assignment)?;
    Ok(ObjectiveBreakdown {
        exec_time_us: exec,
        transform_time_us: transform,
        total_time_us: exec
            .checked_add(transform)
            .ok_or(CostError::Overflow("total_time"))?,
        memory_sum_bytes: memory_sum(net, assignment)?,
        workspace_max_bytes: workspace_max(net, assignment)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EdgeSpec, LayerProfile, NetworkProfile, PrimitiveCandidate};
    use crate::synth::{random_instance, Topology};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chw(id: &str, t: u64, m: u64) -> PrimitiveCandidate {
        PrimitiveCandidate::new(id, t, m, "CHW", "CHW")
    }

    fn net(layers: Vec<LayerProfile>, edges: Vec<EdgeSpec>) -> Network {
        Network::from_profile(&NetworkProfile {
            schema: 1,
            name: "t".into(),
            layers,
            edges,
            layout_transforms: vec![],
        })
        .unwrap()
    }

    fn edge(a: &str, b: &str, m: Vec<Vec<u64>>) -> EdgeSpec {
        EdgeSpec {
            from: a.into(),
            to: b.into(),
            matrix: Some(m),
        }
    }

    fn three_layers() -> Network {
        net(
            vec![
                LayerProfile::new("a", vec![chw("x", 5, 100)]),
                LayerProfile::new("b", vec![chw("x", 10, 50)]),
                LayerProfile::new("c", vec![chw("x", 2, 25)]),
            ],
            vec![],
        )
    }

    #[test]
    fn single_layer() {
        let n = net(vec![LayerProfile::new("a", vec![chw("x", 5, 100)])], vec![]);
        assert_eq!(exec_time(&n, &[0]), Ok(5));
        assert_eq!(total_time(&n, &[0]), Ok(5));
        assert_eq!(memory_sum(&n, &[0]), Ok(100));
    }

    #[test]
    fn sums_and_max() {
        let n = three_layers();
        assert_eq!(exec_time(&n, &[0, 0, 0]), Ok(17));
        assert_eq!(memory_sum(&n, &[0, 0, 0]), Ok(175));
        assert_eq!(workspace_max(&n, &[0, 0, 0]), Ok(100));
    }

    #[test]
    fn all_equal_workspace() {
        let n = net(
            vec![
                LayerProfile::new("a", vec![chw("x", 1, 64)]),
                LayerProfile::new("b", vec![chw("x", 1, 64)]),
            ],
            vec![],
        );
        assert_eq!(workspace_max(&n, &[0, 0]), Ok(64));
    }

    #[test]
    fn chain_transition_lookup() {
        let two = || {
            vec![
                chw("p", 1, 1),
                PrimitiveCandidate::new("q", 1, 1, "HWC", "HWC"),
            ]
        };
        let n = net(
            vec![LayerProfile::new("a", two()), LayerProfile::new("b", two())],
            vec![edge("a", "b", vec![vec![0, 7], vec![5, 0]])],
        );
        assert_eq!(transform_time(&n, &[0, 1]), Ok(7));
        assert_eq!(transform_time(&n, &[1, 0]), Ok(5));
        assert_eq!(transform_time(&n, &[1, 1]), Ok(0));
    }

    #[test]
    fn fork_sums_both_edges() {
        let one = |id: &str, o: &str| {
            LayerProfile::new(id, vec![PrimitiveCandidate::new("x", 0, 0, "CHW", o)])
        };
        let n = net(
            vec![one("A", "HWC"), one("B", "CHW"), one("C", "CHW")],
            vec![edge("A", "B", vec![vec![3]]), edge("A", "C", vec![vec![3]])],
        );
        assert_eq!(transform_time(&n, &[0, 0, 0]), Ok(6));
    }

    #[test]
    fn totals_combine() {
        let two = || {
            vec![
                chw("p", 0, 1),
                PrimitiveCandidate::new("q", 0, 1, "HWC", "HWC"),
            ]
        };
        let mut layers = vec![LayerProfile::new("a", two()), LayerProfile::new("b", two())];
        layers[0].candidates[0].time_us = 5;
        layers[1].candidates[1].time_us = 12;
        let n = net(layers, vec![edge("a", "b", vec![vec![0, 7], vec![5, 0]])]);
        let b = evaluate(&n, &[0, 1]).unwrap();
        assert_eq!(b.exec_time_us, 17);
        assert_eq!(b.transform_time_us, 7);
        assert_eq!(b.total_time_us, 24);
    }

    #[test]
    fn invalid_selection() {
        let n = three_layers();
        assert!(matches!(
            exec_time(&n, &[0, 1, 0]),
            Err(CostError::InvalidSelection(_))
        ));
        assert!(matches!(
            memory_sum(&n, &[0, 0]),
            Err(CostError::InvalidSelection(_))
        ));
        assert!(matches!(
            evaluate(&n, &[0, 0, 0, 0]),
            Err(CostError::InvalidSelection(_))
        ));
    }

    #[test]
    fn overflow_is_an_error() {
        let n = net(
            vec![
                LayerProfile::new("a", vec![chw("x", u64::MAX, u64::MAX)]),
                LayerProfile::new("b", vec![chw("x", 1, 1)]),
            ],
            vec![],
        );
        assert_eq!(
            exec_time(&n, &[0, 0]),
            Err(CostError::Overflow("exec_time"))
        );
        assert_eq!(
            memory_sum(&n, &[0, 0]),
            Err(CostError::Overflow("memory_sum"))
        );
        assert_eq!(workspace_max(&n, &[0, 0]), Ok(u64::MAX));
    }

    // Naive re-summation oracle over random 8-layer instances.
    #[test]
    fn random_profiles_match_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for topo in [Topology::Chain, Topology::ForkJoin] {
            for _ in 0..50 {
                let n = Network::from_profile(&random_instance(&mut rng, 8, 4, topo)).unwrap();
                let sel: Vec<usize> = n.layers.iter().map(|l| rng.gen_range(0..l.len())).collect();
                let mut t = 0;
                let mut m = 0;
                let mut w = 0;
                for i in 0..n.layers.len() {
                    let c = &n.layers[i].candidates[sel[i]];
                    t += c.time_us;
                    m += c.memory_bytes;
                    if c.memory_bytes > w {
                        w = c.memory_bytes;
                    }
                }
                let mut tr = 0;
                for e in &n.edges {
                    tr += e.matrix.cost[sel[e.from]][sel[e.to]];
                }
                let b = evaluate(&n, &sel).unwrap();
                assert_eq!(b.exec_time_us, t);
                assert_eq!(b.memory_sum_bytes, m);
                assert_eq!(b.workspace_max_bytes, w);
                assert_eq!(b.transform_time_us, tr);
                assert_eq!(b.total_time_us, t + tr);
                assert!(b.workspace_max_bytes <= b.memory_sum_bytes);
            }
        }
    }
}
