//! Solve modes, baselines and the exhaustive oracle.

use rayon::prelude::*;
use thiserror::Error;

use crate::cost::{self, CostError};
use crate::ilp::{self, IlpError, SolveOutcome, SolveRequest, SolveStats, SolveStatus};
use crate::model::{Network, ObjectiveBreakdown, Selection};

/// Default cap on the number of assignments [`brute_force`] will enumerate.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error(transparent)]
    Ilp(#[from] IlpError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("{count} assignments exceed the enumeration cap of {cap}")]
    CapExceeded { count: u128, cap: u128 },
    #[error("layer '{layer}' has no candidate '{family}'")]
    MissingFamily { layer: String, family: String },
    #[error("no selection satisfies the budget")]
    Infeasible,
}

/// Fastest selection whose summed footprint fits `memory_budget`.
pub fn solve_min_time(net: &Network, memory_budget: Option<u64>) -> Result<SolveOutcome, IlpError> {
    let mut req = SolveRequest::min_time();
    req.memory_budget = memory_budget;
    ilp::solve(net, &req)
}

/// Smallest summed footprint whose total time fits `time_budget`.
pub fn solve_min_memory(net: &Network, time_budget: Option<u64>) -> Result<SolveOutcome, IlpError> {
    let mut req = SolveRequest::min_memory();
    req.time_budget = time_budget;
    ilp::solve(net, &req)
}

/// Smallest per-layer workspace whose total time fits `time_budget`.
pub fn solve_min_workspace(
    net: &Network,
    time_budget: Option<u64>,
) -> Result<SolveOutcome, IlpError> {
    let mut req = SolveRequest::min_workspace();
    req.time_budget = time_budget;
    ilp::solve(net, &req)
}

/// Greedy baseline: start from the fastest selection, then repeatedly
/// replace the largest chosen footprint with the fastest strictly smaller
/// alternative in that layer until the summed footprint fits.
///
/// Only layers that still have a smaller alternative are considered for
/// replacement. Ties go to the lowest layer index, then the lowest candidate
/// index. "Fastest" is judged on total time, transitions included.
pub fn solve_greedy(net: &Network, memory_budget: u64) -> Result<Selection, StrategyError> {
    if memory_budget < net.min_memory_sum() {
        return Err(StrategyError::Infeasible);
    }
    let start = solve_min_time(net, None)?;
    let mut assignment = start.selection.ok_or(StrategyError::Infeasible)?.assignment;
    let mut memory = cost::memory_sum(net, &assignment)?;
    while memory > memory_budget {
        let mem_of = |i: usize, j: usize| net.layers[i].candidates[j].memory_bytes;
        let layer = (0..net.num_layers())
            .filter(|&i| net.layers[i].min_memory() < mem_of(i, assignment[i]))
            .max_by_key(|&i| (mem_of(i, assignment[i]), std::cmp::Reverse(i)))
            .ok_or(StrategyError::Infeasible)?;
        let current = mem_of(layer, assignment[layer]);
        let mut best: Option<(u64, usize)> = None;
        for k in 0..net.layers[layer].len() {
            if mem_of(layer, k) >= current {
                continue;
            }
            let mut trial = assignment.clone();
            trial[layer] = k;
            let t = cost::total_time(net, &trial)?;
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, k));
            }
        }
        let (_, k) = best.expect("layer has a smaller candidate");
        assignment[layer] = k;
        let next = cost::memory_sum(net, &assignment)?;
        debug_assert!(next < memory);
        memory = next;
    }
    let breakdown = cost::evaluate(net, &assignment)?;
    Ok(Selection {
        assignment,
        breakdown,
    })
}

/// Uses the candidate named `family` in every layer.
pub fn solve_uniform(net: &Network, family: &str) -> Result<Selection, StrategyError> {
    let assignment = net
        .layers
        .iter()
        .map(|l| {
            l.candidates
                .iter()
                .position(|c| c.id == family)
                .ok_or_else(|| StrategyError::MissingFamily {
                    layer: l.layer_id.clone(),
                    family: family.to_owned(),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let breakdown = cost::evaluate(net, &assignment)?;
    Ok(Selection {
        assignment,
        breakdown,
    })
}

/// Candidate ids present in every layer, in first-layer order.
pub fn uniform_families(net: &Network) -> Vec<String> {
    let Some(first) = net.layers.first() else {
        return Vec::new();
    };
    first
        .candidates
        .iter()
        .map(|c| c.id.clone())
        .filter(|id| {
            net.layers
                .iter()
                .all(|l| l.candidates.iter().any(|c| &c.id == id))
        })
        .collect()
}

/// Exhaustive enumeration in lexicographic order; the first assignment with
/// the strictly best objective wins.
pub fn brute_force(
    net: &Network,
    request: &SolveRequest,
    cap: u128,
) -> Result<SolveOutcome, StrategyError> {
    request.validate()?;
    let count = net.assignment_count();
    if count > cap {
        return Err(StrategyError::CapExceeded { count, cap });
    }
    let start = std::time::Instant::now();
    let sizes = net.sizes();
    let mut current = vec![0usize; sizes.len()];
    let mut best: Option<(u64, Vec<usize>, ObjectiveBreakdown)> = None;
    let mut visited = 0u64;
    loop {
        visited += 1;
        let b = cost::evaluate(net, &current)?;
        if request.admits(&b) {
            let obj = request.objective_of(&b);
            if best.as_ref().is_none_or(|(v, _, _)| obj < *v) {
                best = Some((obj, current.clone(), b));
            }
        }
        // Odometer increment, last layer fastest.
        let mut i = sizes.len();
        loop {
            if i == 0 {
                let stats = SolveStats {
                    nodes: visited,
                    wall_time: start.elapsed(),
                };
                return Ok(match best {
                    Some((obj, assignment, breakdown)) => SolveOutcome {
                        status: SolveStatus::Optimal,
                        selection: Some(Selection {
                            assignment,
                            breakdown,
                        }),
                        objective: Some(obj),
                        bound: Some(obj),
                        stats,
                    },
                    None => SolveOutcome::infeasible(stats),
                });
            }
            i -= 1;
            current[i] += 1;
            if current[i] < sizes[i] {
                break;
            }
            current[i] = 0;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub name: String,
    pub feasible: bool,
    pub breakdown: Option<ObjectiveBreakdown>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonEntry {
    pub budget: u64,
    pub methods: Vec<MethodResult>,
}

impl ComparisonEntry {
    fn time_of(&self, name: &str) -> Option<u64> {
        self.methods
            .iter()
            .find(|m| m.name == name)
            .and_then(|m| m.breakdown)
            .map(|b| b.total_time_us)
    }

    /// `time(method) / time(reference)`; above 1.0 when the reference is faster.
    pub fn speedup(&self, reference: &str, method: &str) -> Option<f64> {
        let r = self.time_of(reference)?;
        let m = self.time_of(method)?;
        if reference == method {
            return Some(1.0);
        }
        Some(if r == 0 {
            if m == 0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            m as f64 / r as f64
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub reference: String,
    pub entries: Vec<ComparisonEntry>,
}

pub const ILP: &str = "ilp";
pub const GREEDY: &str = "greedy";

/// ILP versus greedy at every memory budget, ILP as the reference.
pub fn compare(net: &Network, budgets: &[u64]) -> Result<ComparisonReport, StrategyError> {
    let entries = budgets
        .par_iter()
        .map(|&budget| {
            let ilp = solve_min_time(net, Some(budget))?;
            let ilp_result = MethodResult {
                name: ILP.into(),
                feasible: ilp.status == SolveStatus::Optimal,
                breakdown: ilp.selection.map(|s| s.breakdown),
            };
            let greedy_result = match solve_greedy(net, budget) {
                Ok(sel) => MethodResult {
                    name: GREEDY.into(),
                    feasible: true,
                    breakdown: Some(sel.breakdown),
                },
                Err(StrategyError::Infeasible) => MethodResult {
                    name: GREEDY.into(),
                    feasible: false,
                    breakdown: None,
                },
                Err(e) => return Err(e),
            };
            Ok(ComparisonEntry {
                budget,
                methods: vec![ilp_result, greedy_result],
            })
        })
        .collect::<Result<Vec<_>, StrategyError>>()?;
    Ok(ComparisonReport {
        reference: ILP.into(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LayerProfile, NetworkProfile, PrimitiveCandidate};
    use crate::synth::{random_instance, Topology};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chw(id: &str, t: u64, m: u64) -> PrimitiveCandidate {
        PrimitiveCandidate::new(id, t, m, "CHW", "CHW")
    }

    fn network(layers: Vec<LayerProfile>) -> Network {
        Network::from_profile(&NetworkProfile {
            schema: 1,
            name: "t".into(),
            layers,
            edges: vec![],
            layout_transforms: vec![],
        })
        .unwrap()
    }

    /// Largest-footprint-first replacement walks into a slow candidate.
    fn greedy_trap() -> Network {
        network(vec![
            LayerProfile::new("a", vec![chw("fast", 10, 100), chw("lean", 50, 60)]),
            LayerProfile::new("b", vec![chw("fast", 10, 90), chw("lean", 12, 40)]),
            LayerProfile::new("c", vec![chw("only", 1, 1)]),
        ])
    }

    #[test]
    fn greedy_is_beaten_on_the_trap() {
        let net = greedy_trap();
        let g = solve_greedy(&net, 151).unwrap();
        assert_eq!(g.assignment, vec![1, 0, 0]);
        assert_eq!(g.breakdown.total_time_us, 61);
        let opt = brute_force(
            &net,
            &SolveRequest::min_time().with_memory_budget(151),
            DEFAULT_ENUMERATION_CAP,
        )
        .unwrap();
        assert_eq!(opt.selection.unwrap().assignment, vec![0, 1, 0]);
        assert_eq!(opt.objective, Some(23));
        let ilp = solve_min_time(&net, Some(151)).unwrap();
        assert_eq!(ilp.objective, Some(23));
    }

    #[test]
    fn greedy_untouched_when_budget_is_loose() {
        let net = greedy_trap();
        let g = solve_greedy(&net, 1000).unwrap();
        let t = solve_min_time(&net, None).unwrap();
        assert_eq!(g, t.selection.unwrap());
    }

    #[test]
    fn greedy_infeasible_below_minimum() {
        assert!(matches!(
            solve_greedy(&greedy_trap(), 100),
            Err(StrategyError::Infeasible)
        ));
    }

    #[test]
    fn greedy_skips_layers_already_at_their_minimum() {
        let net = network(vec![
            LayerProfile::new("a", vec![chw("only", 1, 100)]),
            LayerProfile::new("b", vec![chw("fast", 1, 50), chw("lean", 5, 10)]),
        ]);
        let g = solve_greedy(&net, 110).unwrap();
        assert_eq!(g.assignment, vec![0, 1]);
    }

    #[test]
    fn uniform_selection() {
        let net = greedy_trap();
        assert!(
            matches!(solve_uniform(&net, "fast"), Err(StrategyError::MissingFamily { layer, .. }) if layer == "c")
        );
        let net = network(vec![
            LayerProfile::new("a", vec![chw("x", 1, 1), chw("y", 2, 2)]),
            LayerProfile::new("b", vec![chw("y", 3, 3), chw("x", 4, 4)]),
        ]);
        assert_eq!(solve_uniform(&net, "x").unwrap().assignment, vec![0, 1]);
        assert_eq!(
            uniform_families(&net),
            vec!["x".to_string(), "y".to_string()]
        );
    }

    #[test]
    fn brute_force_trivial_and_cap() {
        let net = network(vec![LayerProfile::new("a", vec![chw("x", 3, 3)])]);
        let out = brute_force(&net, &SolveRequest::min_time(), 1).unwrap();
        assert_eq!(out.selection.unwrap().assignment, vec![0]);
        let net = greedy_trap();
        assert!(matches!(
            brute_force(&net, &SolveRequest::min_time(), 3),
            Err(StrategyError::CapExceeded { count: 4, cap: 3 })
        ));
    }

    #[test]
    fn min_memory_modes() {
        let net = greedy_trap();
        let m = solve_min_memory(&net, None).unwrap();
        assert_eq!(m.objective, Some(net.min_memory_sum()));
        let fastest = solve_min_time(&net, None).unwrap().objective.unwrap();
        assert_eq!(
            solve_min_memory(&net, Some(fastest - 1)).unwrap().status,
            SolveStatus::Infeasible
        );
        // Among time-optimal selections, the leanest one.
        let tied = solve_min_memory(&net, Some(fastest)).unwrap();
        assert_eq!(tied.selection.unwrap().breakdown.total_time_us, fastest);
    }

    #[test]
    fn min_workspace_constant_memory() {
        let net = network(vec![
            LayerProfile::new("a", vec![chw("x", 1, 64), chw("y", 9, 64)]),
            LayerProfile::new("b", vec![chw("x", 1, 64)]),
        ]);
        for budget in [None, Some(2), Some(100)] {
            assert_eq!(
                solve_min_workspace(&net, budget).unwrap().objective,
                Some(64)
            );
        }
    }

    #[test]
    fn ilp_matches_enumeration_four_by_three() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..30 {
            let p = random_instance(&mut rng, 4, 3, Topology::Chain);
            let net = Network::from_profile(&p).unwrap();
            let mid = (net.min_memory_sum() + net.max_memory_sum()) / 2;
            for req in [
                SolveRequest::min_time().with_memory_budget(mid),
                SolveRequest::min_workspace(),
                SolveRequest::min_memory().with_time_budget(60),
            ] {
                let a = ilp::solve(&net, &req).unwrap();
                let b = brute_force(&net, &req, DEFAULT_ENUMERATION_CAP).unwrap();
                assert_eq!(a.status, b.status);
                assert_eq!(a.objective, b.objective);
                assert_eq!(a.selection, b.selection);
            }
        }
    }

    #[test]
    fn comparison_report() {
        let net = greedy_trap();
        let r = compare(&net, &[100, 151, 1000]).unwrap();
        assert_eq!(r.entries.len(), 3);
        assert!(r.entries[0].methods.iter().all(|m| !m.feasible));
        assert_eq!(r.entries[0].speedup(ILP, GREEDY), None);
        assert_eq!(r.entries[1].speedup(ILP, ILP), Some(1.0));
        assert!(r.entries[1].speedup(ILP, GREEDY).unwrap() > 2.6);
        assert_eq!(r.entries[2].speedup(ILP, GREEDY), Some(1.0));
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use crate::synth::{random_instance, Topology};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn instance() -> impl Strategy<Value = Network> {
        (any::<u64>(), 1..=5usize, 1..=4usize, any::<bool>()).prop_map(|(seed, m, n, fork)| {
            let topo = if fork {
                Topology::ForkJoin
            } else {
                Topology::Chain
            };
            Network::from_profile(&random_instance(
                &mut ChaCha8Rng::seed_from_u64(seed),
                m,
                n,
                topo,
            ))
            .unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn solver_agrees_with_enumeration(net in instance(), frac in 0.0..=1.0f64, mode in 0..3usize) {
            let lo = net.min_memory_sum();
            let budget = lo + ((net.max_memory_sum() - lo) as f64 * frac) as u64;
            let req = match mode {
                0 => SolveRequest::min_time().with_memory_budget(budget),
                1 => SolveRequest::min_memory().with_time_budget(50 * net.num_layers() as u64 / 2),
                _ => SolveRequest::min_workspace().with_time_budget(50 * net.num_layers() as u64 / 2),
            };
            let a = ilp::solve(&net, &req).unwrap();
            let b = brute_force(&net, &req, DEFAULT_ENUMERATION_CAP).unwrap();
            prop_assert_eq!(a.status, b.status);
            prop_assert_eq!(a.objective, b.objective);
        }

        #[test]
        fn looser_budget_never_slower(net in instance(), f1 in 0.0..=1.0f64, f2 in 0.0..=1.0f64) {
            let lo = net.min_memory_sum();
            let span = (net.max_memory_sum() - lo) as f64;
            let (tight, loose) = (lo + (span * f1.min(f2)) as u64, lo + (span * f1.max(f2)) as u64);
            let t = solve_min_time(&net, Some(tight)).unwrap().objective.unwrap();
            let l = solve_min_time(&net, Some(loose)).unwrap().objective.unwrap();
            prop_assert!(l <= t);
        }

        #[test]
        fn unbinding_budget_is_unconstrained(net in instance(), extra in 0..100u64) {
            let free = solve_min_time(&net, None).unwrap();
            let capped = solve_min_time(&net, Some(net.max_memory_sum() + extra)).unwrap();
            prop_assert_eq!(free.objective, capped.objective);
            prop_assert_eq!(free.selection, capped.selection);
            let leanest = solve_min_memory(&net, None).unwrap();
            prop_assert_eq!(leanest.objective, Some(net.min_memory_sum()));
        }
    }
}
