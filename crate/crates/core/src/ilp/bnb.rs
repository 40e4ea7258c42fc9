//! Depth-first branch and bound over the layered structure of an
//! [`IlpProblem`].
//!
//! The problem is first read back into layers (one-hot groups), pairwise
//! terms (linked product variables), budget rows and, for min-max
//! objectives, the workspace epigraph rows. The search then assigns layers in
//! topological order, children in candidate-index order.
//!
//! Lower bounds are combinatorial. Each edge entering a layer is charged to
//! that layer, and a dynamic program over the topological order computes the
//! cost-to-go as a function of the assigned layers that still have edges
//! into the unassigned part. Where that table would grow too large, edges are
//! relaxed to their cheapest source; chains and fork-join graphs stay exact.
//! Budget rows are folded into the objective with a small set of fixed
//! Lagrange multipliers, chosen at the root by maximizing the dual.
//!
//! Among optimal assignments the lexicographically smallest one is returned,
//! so the answer does not depend on which incumbent was found first.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use super::problem::{IlpProblem, Relation, VarKind};
use super::{IlpError, SolveStats, SolveStatus};

const INF: u128 = u128::MAX >> 2;
/// Fixed-point denominator of the Lagrange multipliers.
const LAMBDA_DEN: u128 = 1 << 32;
const LAMBDA_MAX: u128 = 1 << 60;
const SEED_SCAN_LIMIT: usize = 64;
/// Largest frontier table the bound keeps exact.
const PLAN_CAP: usize = 1 << 17;

fn add(a: u128, b: u128) -> u128 {
    a.saturating_add(b).min(INF)
}

fn mul(a: u128, b: u128) -> u128 {
    a.saturating_mul(b).min(INF)
}

/// Raw result of [`solve_bnb`]: candidate index per layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IlpSolution {
    pub status: SolveStatus,
    pub assignment: Option<Vec<usize>>,
    pub objective: Option<u64>,
    pub bound: Option<u64>,
    pub stats: SolveStats,
}

#[derive(Debug, Clone)]
struct Term {
    unary: Vec<Vec<u64>>,
    /// Per edge, row-major `from_candidate * to_size + to_candidate`.
    pair: Vec<Vec<u64>>,
}

impl Term {
    fn zeros(sizes: &[usize], edges: &[EdgeInfo]) -> Self {
        Term {
            unary: sizes.iter().map(|&n| vec![0; n]).collect(),
            pair: edges
                .iter()
                .map(|e| vec![0; sizes[e.from] * sizes[e.to]])
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct EdgeInfo {
    from: usize,
    to: usize,
}

#[derive(Debug)]
enum Objective {
    Sum(Term),
    /// `scale * max_layer wmem[layer][chosen]`.
    Max {
        wmem: Vec<Vec<u64>>,
        scale: u64,
    },
}

#[derive(Debug)]
struct Row {
    term: Term,
    bound: u64,
}

#[derive(Debug)]
struct Compiled {
    sizes: Vec<usize>,
    edges: Vec<EdgeInfo>,
    in_edges: Vec<Vec<usize>>,
    objective: Objective,
    rows: Vec<Row>,
    allowed: Vec<Vec<bool>>,
    infeasible: bool,
}

fn malformed(msg: impl Into<String>) -> IlpError {
    IlpError::Malformed(msg.into())
}

fn compile(problem: &IlpProblem) -> Result<Compiled, IlpError> {
    let nv = problem.vars.len();
    if problem.objective.len() != nv {
        return Err(malformed("objective length differs from variable count"));
    }

    // Layers from primary variables.
    let mut sizes: Vec<usize> = Vec::new();
    let mut primary: HashMap<usize, (usize, usize)> = HashMap::new();
    for (v, var) in problem.vars.iter().enumerate() {
        if let VarKind::Primary { layer, candidate } = var.kind {
            if sizes.len() <= layer {
                sizes.resize(layer + 1, 0);
            }
            sizes[layer] = sizes[layer].max(candidate + 1);
            primary.insert(v, (layer, candidate));
        }
    }
    let expected: usize = sizes.iter().sum();
    if sizes.is_empty() || sizes.contains(&0) || primary.len() != expected {
        return Err(malformed(
            "primary variables do not cover every (layer, candidate)",
        ));
    }
    let mut seen_primary = vec![Vec::new(); sizes.len()];
    for (l, n) in sizes.iter().enumerate() {
        seen_primary[l] = vec![false; *n];
    }
    for &(l, j) in primary.values() {
        if std::mem::replace(&mut seen_primary[l][j], true) {
            return Err(malformed(format!("duplicate primary variable ({l}, {j})")));
        }
    }

    // Edges from product variables, in first-appearance order.
    let mut edges: Vec<EdgeInfo> = Vec::new();
    let mut edge_index: HashMap<usize, usize> = HashMap::new();
    for var in &problem.vars {
        if let VarKind::Product {
            edge,
            from_layer,
            to_layer,
            from_candidate,
            to_candidate,
            ..
        } = var.kind
        {
            if from_layer >= to_layer || to_layer >= sizes.len() {
                return Err(malformed(format!(
                    "edge {edge} is not forward between known layers"
                )));
            }
            if from_candidate >= sizes[from_layer] || to_candidate >= sizes[to_layer] {
                return Err(malformed(format!(
                    "product variable {} out of range",
                    var.name
                )));
            }
            let idx = *edge_index.entry(edge).or_insert_with(|| {
                edges.push(EdgeInfo {
                    from: from_layer,
                    to: to_layer,
                });
                edges.len() - 1
            });
            if edges[idx].from != from_layer || edges[idx].to != to_layer {
                return Err(malformed(format!("edge {edge} has inconsistent endpoints")));
            }
        }
    }
    let mut in_edges = vec![Vec::new(); sizes.len()];
    for (e, info) in edges.iter().enumerate() {
        in_edges[info.to].push(e);
    }
    let pair_slot = |v: usize| -> Option<(usize, usize)> {
        match problem.vars[v].kind {
            VarKind::Product {
                edge,
                from_candidate,
                to_candidate,
                to_layer,
                ..
            } => Some((
                edge_index[&edge],
                from_candidate * sizes[to_layer] + to_candidate,
            )),
            _ => None,
        }
    };

    let mut onehot = vec![false; sizes.len()];
    let mut linked = vec![false; nv];
    let mut wmem: Vec<Vec<u64>> = sizes.iter().map(|&n| vec![0; n]).collect();
    let mut allowed: Vec<Vec<bool>> = sizes.iter().map(|&n| vec![true; n]).collect();
    let mut rows = Vec::new();
    let mut infeasible = false;

    let single_layer = |terms: &[(usize, i64)]| -> Option<usize> {
        let mut layer = None;
        for &(v, _) in terms {
            let &(l, _) = primary.get(&v)?;
            if layer.is_some_and(|x| x != l) {
                return None;
            }
            layer = Some(l);
        }
        layer
    };

    for c in &problem.constraints {
        if c.terms.iter().any(|&(v, _)| v >= nv) {
            return Err(malformed(format!(
                "constraint {} references unknown variable",
                c.name
            )));
        }
        match c.relation {
            Relation::Eq => {
                let layer = single_layer(&c.terms)
                    .filter(|&l| c.rhs == 1 && c.terms.len() == sizes[l])
                    .filter(|_| c.terms.iter().all(|&(_, a)| a == 1))
                    .ok_or_else(|| {
                        malformed(format!("equality {} is not a one-hot row", c.name))
                    })?;
                let mut hit = vec![false; sizes[layer]];
                for &(v, _) in &c.terms {
                    hit[primary[&v].1] = true;
                }
                if hit.contains(&false) || std::mem::replace(&mut onehot[layer], true) {
                    return Err(malformed(format!(
                        "one-hot row {} is incomplete or repeated",
                        c.name
                    )));
                }
            }
            Relation::Le => {
                let negatives: Vec<_> = c.terms.iter().filter(|t| t.1 < 0).collect();
                match negatives.as_slice() {
                    [] => {
                        let mut term = Term::zeros(&sizes, &edges);
                        let mut nonzero = false;
                        for &(v, a) in &c.terms {
                            let a = a as u64;
                            nonzero |= a > 0;
                            if let Some(&(l, j)) = primary.get(&v) {
                                term.unary[l][j] += a;
                            } else if let Some((e, slot)) = pair_slot(v) {
                                term.pair[e][slot] += a;
                            } else if a > 0 {
                                return Err(malformed(format!(
                                    "row {} constrains the workspace variable",
                                    c.name
                                )));
                            }
                        }
                        if c.rhs < 0 {
                            infeasible = true;
                        } else if !nonzero {
                            continue;
                        } else if let Some(l) = single_layer(&c.terms) {
                            for j in 0..sizes[l] {
                                if term.unary[l][j] > c.rhs as u64 {
                                    allowed[l][j] = false;
                                }
                            }
                        } else {
                            rows.push(Row {
                                term,
                                bound: c.rhs as u64,
                            });
                        }
                    }
                    [&(neg, -1)] => match problem.vars[neg].kind {
                        VarKind::Product {
                            from_layer,
                            to_layer,
                            from_candidate,
                            to_candidate,
                            ..
                        } => {
                            let mut ends: Vec<(usize, usize)> = c
                                .terms
                                .iter()
                                .filter(|t| t.0 != neg)
                                .map(|&(v, a)| primary.get(&v).filter(|_| a == 1).copied())
                                .collect::<Option<_>>()
                                .ok_or_else(|| {
                                    malformed(format!("linking row {} is malformed", c.name))
                                })?;
                            ends.sort_unstable();
                            if c.rhs != 1
                                || ends != [(from_layer, from_candidate), (to_layer, to_candidate)]
                            {
                                return Err(malformed(format!(
                                    "linking row {} does not match its product variable",
                                    c.name
                                )));
                            }
                            linked[neg] = true;
                        }
                        VarKind::Workspace => {
                            let rest: Vec<_> =
                                c.terms.iter().filter(|t| t.0 != neg).copied().collect();
                            let layer =
                                single_layer(&rest).filter(|_| c.rhs == 0).ok_or_else(|| {
                                    malformed(format!("workspace row {} is malformed", c.name))
                                })?;
                            for (v, a) in rest {
                                wmem[layer][primary[&v].1] = a as u64;
                            }
                        }
                        VarKind::Primary { .. } => {
                            return Err(malformed(format!(
                                "row {} has a negative primary term",
                                c.name
                            )))
                        }
                    },
                    _ => return Err(malformed(format!("unsupported row {}", c.name))),
                }
            }
        }
    }
    if let Some(l) = onehot.iter().position(|&x| !x) {
        return Err(malformed(format!("layer {l} has no one-hot row")));
    }

    let mut sum = Term::zeros(&sizes, &edges);
    let mut wscale = 0u64;
    let mut wupper = u64::MAX;
    let mut any_sum = false;
    for (v, &a) in problem.objective.iter().enumerate() {
        if a < 0 {
            return Err(malformed("negative objective coefficient"));
        }
        let a = a as u64;
        match problem.vars[v].kind {
            VarKind::Primary { layer, candidate } => {
                sum.unary[layer][candidate] += a;
                any_sum |= a > 0;
            }
            VarKind::Product { .. } => {
                // An unlinked product variable can sit at zero.
                if linked[v] {
                    let (e, slot) = pair_slot(v).expect("product");
                    sum.pair[e][slot] += a;
                    any_sum |= a > 0;
                }
            }
            VarKind::Workspace => {
                wscale = a;
                wupper = problem.vars[v].upper;
            }
        }
    }
    // Rows see product variables only through their links.
    for row in &mut rows {
        for (v, var) in problem.vars.iter().enumerate() {
            if matches!(var.kind, VarKind::Product { .. }) && !linked[v] {
                let (e, slot) = pair_slot(v).expect("product");
                row.term.pair[e][slot] = 0;
            }
        }
    }
    let objective = if wscale > 0 {
        if any_sum {
            return Err(malformed(
                "objective mixes the workspace variable with other terms",
            ));
        }
        for (l, row) in wmem.iter().enumerate() {
            for (j, &m) in row.iter().enumerate() {
                if m > wupper {
                    allowed[l][j] = false;
                }
            }
        }
        Objective::Max {
            wmem,
            scale: wscale,
        }
    } else {
        Objective::Sum(sum)
    };
    if allowed.iter().any(|a| !a.contains(&true)) {
        infeasible = true;
    }
    Ok(Compiled {
        sizes,
        edges,
        in_edges,
        objective,
        rows,
        allowed,
        infeasible,
    })
}

/// Which pairwise terms the bound keeps exact.
///
/// At depth `d` (layers `..d` assigned) the cost-to-go of the kept terms
/// depends only on the assigned layers that still have a kept edge into
/// `d..`: the frontier of `d`. Edges are kept, in order of their target and
/// latest source first, while every frontier table stays within `cap`
/// entries. The other edges are relaxed to their cheapest source.
#[derive(Debug)]
struct Plan {
    frontier: Vec<Vec<usize>>,
    strides: Vec<Vec<usize>>,
    table_len: Vec<usize>,
    /// Kept incoming edges per layer, with the source's frontier position.
    kept_in: Vec<Vec<(usize, usize)>>,
    relaxed_in: Vec<Vec<usize>>,
    /// For each position of `frontier[d + 1]`: its position in `frontier[d]`,
    /// or `None` for layer `d` itself.
    carry: Vec<Vec<Option<usize>>>,
}

impl Plan {
    fn new(c: &Compiled, cap: usize) -> Self {
        let m = c.sizes.len();
        let mut order: Vec<usize> = (0..c.edges.len()).collect();
        order.sort_by_key(|&e| (c.edges[e].to, std::cmp::Reverse(c.edges[e].from), e));
        // reach[u]: last depth at which u is on the frontier (u itself when never).
        let mut reach: Vec<usize> = (0..m).collect();
        let mut len = vec![1u128; m + 1];
        let mut kept = vec![false; c.edges.len()];
        for e in order {
            let EdgeInfo { from, to } = c.edges[e];
            let n = c.sizes[from] as u128;
            let grow = reach[from] + 1..=to;
            if grow
                .clone()
                .all(|d| len[d].saturating_mul(n) <= cap as u128)
            {
                for d in grow {
                    len[d] *= n;
                }
                reach[from] = reach[from].max(to);
                kept[e] = true;
            }
        }
        let frontier: Vec<Vec<usize>> = (0..=m)
            .map(|d| (0..d.min(m)).filter(|&u| reach[u] >= d).collect())
            .collect();
        let mut strides = Vec::with_capacity(m + 1);
        let mut table_len = Vec::with_capacity(m + 1);
        for f in &frontier {
            let mut st = vec![0; f.len()];
            let mut acc = 1usize;
            for (i, &u) in f.iter().enumerate().rev() {
                st[i] = acc;
                acc *= c.sizes[u];
            }
            strides.push(st);
            table_len.push(acc);
        }
        let mut kept_in = vec![Vec::new(); m];
        let mut relaxed_in = vec![Vec::new(); m];
        for t in 0..m {
            for &e in &c.in_edges[t] {
                if kept[e] {
                    let pos = frontier[t]
                        .iter()
                        .position(|&u| u == c.edges[e].from)
                        .expect("kept source on frontier");
                    kept_in[t].push((e, pos));
                } else {
                    relaxed_in[t].push(e);
                }
            }
        }
        let carry = (0..m)
            .map(|d| {
                frontier[d + 1]
                    .iter()
                    .map(|u| frontier[d].iter().position(|x| x == u))
                    .collect()
            })
            .collect();
        Plan {
            frontier,
            strides,
            table_len,
            kept_in,
            relaxed_in,
            carry,
        }
    }

    fn index(&self, d: usize, assign: &[usize]) -> usize {
        self.frontier[d]
            .iter()
            .zip(&self.strides[d])
            .map(|(&u, &s)| s * assign[u])
            .sum()
    }
}

/// Weights of a combined cost: `obj * objective_sum_term + sum rows[r] * row_r`.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Weights {
    obj: u128,
    rows: Vec<u128>,
}

impl Weights {
    fn unary(&self, c: &Compiled, l: usize, j: usize) -> u128 {
        let mut v = 0;
        if let (Objective::Sum(t), true) = (&c.objective, self.obj > 0) {
            v = mul(self.obj, t.unary[l][j] as u128);
        }
        for (row, &w) in c.rows.iter().zip(&self.rows) {
            if w > 0 {
                v = add(v, mul(w, row.term.unary[l][j] as u128));
            }
        }
        v
    }

    fn pair(&self, c: &Compiled, e: usize, slot: usize) -> u128 {
        let mut v = 0;
        if let (Objective::Sum(t), true) = (&c.objective, self.obj > 0) {
            v = mul(self.obj, t.pair[e][slot] as u128);
        }
        for (row, &w) in c.rows.iter().zip(&self.rows) {
            if w > 0 {
                v = add(v, mul(w, row.term.pair[e][slot] as u128));
            }
        }
        v
    }
}

/// Frontier dynamic program for one weighted cost.
#[derive(Debug)]
struct BoundTable {
    /// Weighted unary cost plus relaxed incoming edges; `INF` when disallowed.
    unary: Vec<Vec<u128>>,
    /// Weighted pair costs of kept edges, row-major as in [`Term`].
    pair: Vec<Vec<u128>>,
    /// Cost-to-go of layers `d..` indexed by the frontier assignment of `d`.
    to_go: Vec<Vec<u128>>,
}

impl BoundTable {
    fn build(c: &Compiled, plan: &Plan, allowed: &[Vec<bool>], weights: Weights) -> Self {
        let m = c.sizes.len();
        let mut pair: Vec<Vec<u128>> = vec![Vec::new(); c.edges.len()];
        for t in 0..m {
            for &(e, _) in &plan.kept_in[t] {
                let len = c.sizes[c.edges[e].from] * c.sizes[t];
                pair[e] = (0..len).map(|slot| weights.pair(c, e, slot)).collect();
            }
        }
        let unary: Vec<Vec<u128>> = (0..m)
            .map(|t| {
                let cols = c.sizes[t];
                (0..cols)
                    .map(|k| {
                        if !allowed[t][k] {
                            return INF;
                        }
                        let mut v = weights.unary(c, t, k);
                        for &e in &plan.relaxed_in[t] {
                            let from = c.edges[e].from;
                            let cheapest = (0..c.sizes[from])
                                .filter(|&i| allowed[from][i])
                                .map(|i| weights.pair(c, e, i * cols + k))
                                .min()
                                .unwrap_or(INF);
                            v = add(v, cheapest);
                        }
                        v
                    })
                    .collect()
            })
            .collect();
        let mut to_go: Vec<Vec<u128>> = vec![Vec::new(); m + 1];
        to_go[m] = vec![0];
        let mut digits = Vec::new();
        for d in (0..m).rev() {
            let f = &plan.frontier[d];
            let next = &to_go[d + 1];
            let own_stride = plan.carry[d]
                .iter()
                .position(Option::is_none)
                .map_or(0, |i| plan.strides[d + 1][i]);
            let mut table = vec![INF; plan.table_len[d]];
            for (idx, slot) in table.iter_mut().enumerate() {
                digits.clear();
                digits.extend(
                    f.iter()
                        .zip(&plan.strides[d])
                        .map(|(&u, &s)| (idx / s) % c.sizes[u]),
                );
                if f.iter().zip(&digits).any(|(&u, &k)| !allowed[u][k]) {
                    continue;
                }
                let base: usize = plan.carry[d]
                    .iter()
                    .zip(&plan.strides[d + 1])
                    .filter_map(|(p, &s)| p.map(|p| s * digits[p]))
                    .sum();
                let cols = c.sizes[d];
                let mut best = INF;
                for k in 0..cols {
                    let mut v = unary[d][k];
                    if v >= INF {
                        continue;
                    }
                    for &(e, p) in &plan.kept_in[d] {
                        v = add(v, pair[e][digits[p] * cols + k]);
                    }
                    v = add(v, next[base + k * own_stride]);
                    best = best.min(v);
                }
                *slot = best;
            }
            to_go[d] = table;
        }
        BoundTable { unary, pair, to_go }
    }

    fn root(&self) -> u128 {
        self.to_go[0][0]
    }

    /// Lower bound on the weighted cost of layers `d..` and of every edge
    /// entering them, given the assignment of layers `..d`.
    fn remaining(&self, plan: &Plan, d: usize, assign: &[usize]) -> u128 {
        self.to_go[d][plan.index(d, assign)]
    }

    /// Assignment minimizing the relaxation.
    fn argmin(&self, c: &Compiled, plan: &Plan) -> Option<Vec<usize>> {
        let m = c.sizes.len();
        let mut a = vec![0usize; m];
        for t in 0..m {
            let cols = c.sizes[t];
            let mut pick: Option<(u128, usize)> = None;
            for k in 0..cols {
                a[t] = k;
                let mut v = self.unary[t][k];
                for &(e, _) in &plan.kept_in[t] {
                    v = add(v, self.pair[e][a[c.edges[e].from] * cols + k]);
                }
                v = add(v, self.remaining(plan, t + 1, &a));
                if pick.is_none_or(|(b, _)| v < b) {
                    pick = Some((v, k));
                }
            }
            let (v, k) = pick?;
            if v >= INF {
                return None;
            }
            a[t] = k;
        }
        Some(a)
    }
}

fn term_delta(c: &Compiled, t: &Term, d: usize, j: usize, assign: &[usize]) -> u128 {
    let mut v = t.unary[d][j] as u128;
    for &e in &c.in_edges[d] {
        let from = c.edges[e].from;
        v += t.pair[e][assign[from] * c.sizes[d] + j] as u128;
    }
    v
}

struct Search<'a> {
    c: &'a Compiled,
    plan: &'a Plan,
    /// Cheaper plan used while searching for multipliers.
    coarse: &'a Plan,
    allowed: Vec<Vec<bool>>,
    /// Lagrangian objective tables, paired with their multiplier numerator.
    lagrange: Vec<(u128, BoundTable)>,
    row_tables: Vec<BoundTable>,
    /// Max objective: suffix maxima of the per-layer smallest allowed footprint.
    wmin_suffix: Vec<u64>,
    w_floor: u64,
    assign: Vec<usize>,
    row_prefix: Vec<u128>,
    best: Option<(u128, Vec<usize>)>,
    nodes: u64,
    deadline: Option<Instant>,
    timed_out: bool,
}

impl<'a> Search<'a> {
    fn new(c: &'a Compiled, plan: &'a Plan, coarse: &'a Plan, deadline: Option<Instant>) -> Self {
        let m = c.sizes.len();
        Search {
            c,
            plan,
            coarse,
            allowed: c.allowed.clone(),
            lagrange: Vec::new(),
            row_tables: Vec::new(),
            wmin_suffix: vec![0; m + 1],
            w_floor: 0,
            assign: vec![0; m],
            row_prefix: vec![0; (m + 1) * c.rows.len()],
            best: None,
            nodes: 0,
            deadline,
            timed_out: false,
        }
    }

    fn row_weights(&self, r: usize) -> Weights {
        let mut rows = vec![0; self.c.rows.len()];
        rows[r] = 1;
        Weights { obj: 0, rows }
    }

    fn build_row_tables(&mut self) {
        self.row_tables = (0..self.c.rows.len())
            .map(|r| BoundTable::build(self.c, self.plan, &self.allowed, self.row_weights(r)))
            .collect();
    }

    fn rows_fit_at_root(&self) -> bool {
        self.row_tables
            .iter()
            .zip(&self.c.rows)
            .all(|(t, row)| t.root() <= row.bound as u128)
    }

    fn lagrange_weights(&self, num: u128) -> Weights {
        let mut rows = vec![0; self.c.rows.len()];
        if let Some(r) = rows.first_mut() {
            *r = num;
        }
        Weights {
            obj: LAMBDA_DEN,
            rows,
        }
    }

    /// Dual value (scaled by `LAMBDA_DEN`) of the forest relaxation at `num`.
    fn dual(&self, num: u128) -> (i128, BoundTable) {
        let table = BoundTable::build(
            self.c,
            self.coarse,
            &self.allowed,
            self.lagrange_weights(num),
        );
        let bound = self.c.rows.first().map_or(0, |r| r.bound as u128);
        let v = table.root() as i128 - mul(num, bound) as i128;
        (v, table)
    }

    fn prepare_sum(&mut self) {
        let mut nums = vec![0u128];
        if !self.c.rows.is_empty() {
            let value = |s: &Self, n: u128| s.dual(n).0;
            let mut x = 1u128;
            while x < LAMBDA_MAX && value(self, 2 * x) > value(self, x) {
                x *= 2;
            }
            let (mut lo, mut hi) = (0u128, (2 * x).min(LAMBDA_MAX));
            while hi - lo > 2 {
                let m1 = lo + (hi - lo) / 3;
                let m2 = hi - (hi - lo) / 3;
                if value(self, m1) < value(self, m2) {
                    lo = m1 + 1;
                } else {
                    hi = m2;
                }
            }
            let star = (lo..=hi)
                .max_by_key(|&n| (value(self, n), std::cmp::Reverse(n)))
                .unwrap_or(0);
            if star > 0 {
                for n in [star, star / 2, star * 2, star + star / 4] {
                    if n > 0 && !nums.contains(&n) {
                        nums.push(n);
                    }
                }
            }
        }
        self.lagrange = nums
            .into_iter()
            .map(|n| {
                (
                    n,
                    BoundTable::build(self.c, self.plan, &self.allowed, self.lagrange_weights(n)),
                )
            })
            .collect();
    }

    /// Exact objective and row values of a complete assignment.
    fn evaluate(&self, a: &[usize]) -> (u128, Vec<u128>) {
        let c = self.c;
        let term_value = |t: &Term| -> u128 {
            let mut v: u128 = (0..c.sizes.len()).map(|l| t.unary[l][a[l]] as u128).sum();
            for (e, info) in c.edges.iter().enumerate() {
                v += t.pair[e][a[info.from] * c.sizes[info.to] + a[info.to]] as u128;
            }
            v
        };
        let obj = match &c.objective {
            Objective::Sum(t) => term_value(t),
            Objective::Max { wmem, scale } => {
                let w = (0..c.sizes.len()).map(|l| wmem[l][a[l]]).max().unwrap_or(0);
                (w as u128) * (*scale as u128)
            }
        };
        (obj, c.rows.iter().map(|r| term_value(&r.term)).collect())
    }

    fn feasible(&self, a: &[usize], rows: &[u128]) -> bool {
        a.iter().enumerate().all(|(l, &j)| self.c.allowed[l][j])
            && rows
                .iter()
                .zip(&self.c.rows)
                .all(|(&v, r)| v <= r.bound as u128)
    }

    fn offer(&mut self, value: u128, a: &[usize]) {
        let better = match &self.best {
            None => true,
            Some((b, inc)) => value < *b || (value == *b && a < inc.as_slice()),
        };
        if better {
            self.best = Some((value, a.to_vec()));
            if let Objective::Max { scale, .. } = &self.c.objective {
                self.set_threshold((value / *scale as u128) as u64);
            }
        }
    }

    fn offer_if_feasible(&mut self, a: &[usize]) {
        let (obj, rows) = self.evaluate(a);
        if self.feasible(a, &rows) {
            self.offer(obj, a);
        }
    }

    /// Restricts candidates to footprints at most `w` (min-max objective).
    fn set_threshold(&mut self, w: u64) {
        let Objective::Max { wmem, .. } = &self.c.objective else {
            return;
        };
        let m = self.c.sizes.len();
        for l in 0..m {
            for j in 0..self.c.sizes[l] {
                self.allowed[l][j] = self.c.allowed[l][j] && wmem[l][j] <= w;
            }
        }
        self.build_row_tables();
        self.wmin_suffix = vec![0; m + 1];
        for l in (0..m).rev() {
            let least = (0..self.c.sizes[l])
                .filter(|&j| self.allowed[l][j])
                .map(|j| wmem[l][j])
                .min()
                .unwrap_or(u64::MAX);
            self.wmin_suffix[l] = self.wmin_suffix[l + 1].max(least);
        }
    }

    fn prepare_max(&mut self) {
        let Objective::Max { wmem, .. } = &self.c.objective else {
            return;
        };
        let mut values: Vec<u64> = wmem
            .iter()
            .enumerate()
            .flat_map(|(l, row)| {
                let allowed = &self.c.allowed[l];
                row.iter()
                    .enumerate()
                    .filter(move |&(j, _)| allowed[j])
                    .map(|(_, &w)| w)
            })
            .collect();
        values.sort_unstable();
        values.dedup();
        let relaxed_ok = |s: &mut Self, w: u64| {
            s.set_threshold(w);
            s.allowed.iter().all(|a| a.contains(&true)) && s.rows_fit_at_root()
        };
        // Smallest threshold passing the relaxed feasibility test.
        let (mut lo, mut hi) = (0usize, values.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            if relaxed_ok(self, values[mid]) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        if lo == values.len() {
            self.w_floor = u64::MAX;
            return;
        }
        self.w_floor = values[lo];
        for &w in values[lo..].iter().take(SEED_SCAN_LIMIT) {
            relaxed_ok(self, w);
            let weights = if self.c.rows.is_empty() {
                Weights {
                    obj: 0,
                    rows: vec![],
                }
            } else {
                self.row_weights(0)
            };
            let table = BoundTable::build(self.c, self.plan, &self.allowed, weights);
            if let Some(a) = table.argmin(self.c, self.plan) {
                self.offer_if_feasible(&a);
                if self.best.is_some() {
                    return;
                }
            }
        }
        let top = *values.last().expect("nonempty");
        self.set_threshold(top);
    }

    /// Lower bound on the objective once layers `..d` are fixed.
    fn objective_bound(&self, d: usize, obj_prefix: u128) -> u128 {
        match &self.c.objective {
            Objective::Sum(_) => {
                let row0 = if self.c.rows.is_empty() {
                    0
                } else {
                    self.row_prefix[d * self.c.rows.len()]
                };
                let budget = self.c.rows.first().map_or(0, |r| r.bound as u128);
                let mut best = 0u128;
                for (num, table) in &self.lagrange {
                    let rem = table.remaining(self.plan, d, &self.assign);
                    if rem >= INF {
                        return INF;
                    }
                    let total = add(add(mul(LAMBDA_DEN, obj_prefix), mul(*num, row0)), rem);
                    let slack = mul(*num, budget);
                    if total > slack {
                        best = best.max((total - slack).div_ceil(LAMBDA_DEN));
                    }
                }
                best
            }
            Objective::Max { scale, .. } => {
                let w = (obj_prefix as u64)
                    .max(self.wmin_suffix[d])
                    .max(self.w_floor);
                if w == u64::MAX {
                    INF
                } else {
                    w as u128 * *scale as u128
                }
            }
        }
    }

    fn pruned(&self, lb: u128, d: usize) -> bool {
        if lb >= INF {
            return true;
        }
        match &self.best {
            None => false,
            Some((b, inc)) => lb > *b || (lb == *b && self.assign[..=d] > inc[..=d]),
        }
    }

    fn dfs(&mut self, d: usize, obj_prefix: u128) {
        self.nodes += 1;
        if self.nodes & 0x3FF == 1 {
            if let Some(dl) = self.deadline {
                if Instant::now() >= dl {
                    self.timed_out = true;
                }
            }
        }
        if self.timed_out {
            return;
        }
        let c = self.c;
        let m = c.sizes.len();
        let nr = c.rows.len();
        for j in 0..c.sizes[d] {
            if !self.allowed[d][j] {
                continue;
            }
            self.assign[d] = j;
            let obj = match &c.objective {
                Objective::Sum(t) => obj_prefix + term_delta(c, t, d, j, &self.assign),
                Objective::Max { wmem, .. } => obj_prefix.max(wmem[d][j] as u128),
            };
            let mut ok = true;
            for r in 0..nr {
                let v = self.row_prefix[d * nr + r]
                    + term_delta(c, &c.rows[r].term, d, j, &self.assign);
                self.row_prefix[(d + 1) * nr + r] = v;
                let lb = add(
                    v,
                    self.row_tables[r].remaining(self.plan, d + 1, &self.assign),
                );
                if lb > c.rows[r].bound as u128 {
                    ok = false;
                    break;
                }
            }
            if !ok {
                continue;
            }
            let lb = self.objective_bound(d + 1, obj);
            if self.pruned(lb, d) {
                continue;
            }
            if d + 1 == m {
                let value = match &c.objective {
                    Objective::Sum(_) => obj,
                    Objective::Max { scale, .. } => obj * *scale as u128,
                };
                let a = self.assign.clone();
                self.offer(value, &a);
            } else {
                self.dfs(d + 1, obj);
            }
            if self.timed_out {
                return;
            }
        }
    }
}

fn to_u64(v: u128) -> Result<u64, IlpError> {
    u64::try_from(v).map_err(|_| IlpError::Overflow)
}

/// Solves a problem produced by [`super::build_problem`] to proven optimality,
/// or until `time_limit` expires.
pub fn solve_bnb(
    problem: &IlpProblem,
    time_limit: Option<Duration>,
) -> Result<IlpSolution, IlpError> {
    let start = Instant::now();
    let c = compile(problem)?;
    let stats = |nodes| SolveStats {
        nodes,
        wall_time: start.elapsed(),
    };
    let infeasible = |nodes| IlpSolution {
        status: SolveStatus::Infeasible,
        assignment: None,
        objective: None,
        bound: None,
        stats: stats(nodes),
    };
    if c.infeasible {
        return Ok(infeasible(0));
    }
    let plan = Plan::new(&c, PLAN_CAP);
    let coarse = Plan::new(&c, c.sizes.iter().copied().max().unwrap_or(1));
    let mut s = Search::new(&c, &plan, &coarse, time_limit.map(|t| start + t));
    s.build_row_tables();
    if !s.rows_fit_at_root() {
        return Ok(infeasible(0));
    }
    match &c.objective {
        Objective::Sum(_) => {
            s.prepare_sum();
            let seeds: Vec<Vec<usize>> = s
                .lagrange
                .iter()
                .map(|(_, t)| t)
                .chain(&s.row_tables)
                .filter_map(|t| t.argmin(&c, &plan))
                .collect();
            for a in seeds {
                s.offer_if_feasible(&a);
            }
        }
        Objective::Max { .. } => {
            s.prepare_max();
            if s.w_floor == u64::MAX {
                return Ok(infeasible(0));
            }
        }
    }
    let root_bound = s.objective_bound(0, 0);
    s.dfs(0, 0);

    let (status, bound) = match (&s.best, s.timed_out) {
        (_, true) => (
            SolveStatus::TimedOut,
            Some(root_bound.min(s.best.as_ref().map_or(INF, |b| b.0))),
        ),
        (Some((v, _)), false) => (SolveStatus::Optimal, Some(*v)),
        (None, false) => (SolveStatus::Infeasible, None),
    };
    Ok(IlpSolution {
        status,
        objective: s.best.as_ref().map(|b| to_u64(b.0)).transpose()?,
        assignment: s.best.map(|b| b.1),
        bound: bound.filter(|&b| b < INF).map(to_u64).transpose()?,
        stats: stats(s.nodes),
    })
}
