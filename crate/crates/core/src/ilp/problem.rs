//! 0-1 ILP construction from a resolved network.
//!
//! Layout: one binary per (layer, candidate) with a one-hot equality per
//! layer; one binary `y` per (edge, j, k) with a nonzero transition cost,
//! linked by `x_j + x_k - y <= 1`; and, for the workspace objective, one
//! integer epigraph variable `W` with `sum_j m_ij x_ij - W <= 0` per layer.

use std::fmt::Write as _;

use super::{IlpError, SolveMode, SolveRequest};
use crate::model::Network;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Primary {
        layer: usize,
        candidate: usize,
    },
    /// Stands in for `x[from_layer][from_candidate] * x[to_layer][to_candidate]`.
    Product {
        edge: usize,
        from_layer: usize,
        to_layer: usize,
        from_candidate: usize,
        to_candidate: usize,
        /// Transition cost carried by this pair.
        cost: u64,
    },
    Workspace,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    /// Inclusive upper bound; binaries use 1.
    pub upper: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(usize, i64)>,
    pub relation: Relation,
    pub rhs: i64,
}

/// `minimize c·x  s.t.  A x (<=|=) b,  x integer, 0 <= x <= upper`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IlpProblem {
    pub vars: Vec<Variable>,
    pub objective: Vec<i64>,
    pub constraints: Vec<Constraint>,
}

impl IlpProblem {
    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_primary_vars(&self) -> usize {
        self.count(|k| matches!(k, VarKind::Primary { .. }))
    }

    pub fn num_product_vars(&self) -> usize {
        self.count(|k| matches!(k, VarKind::Product { .. }))
    }

    fn count(&self, pred: impl Fn(&VarKind) -> bool) -> usize {
        self.vars.iter().filter(|v| pred(&v.kind)).count()
    }

    /// Renders the problem in CPLEX LP text format.
    pub fn to_lp_string(&self) -> String {
        let mut s = String::new();
        let line = |s: &mut String, terms: &mut dyn Iterator<Item = (usize, i64)>| {
            let mut first = true;
            let mut width = 0;
            for (v, c) in terms {
                if c == 0 {
                    continue;
                }
                let name = &self.vars[v].name;
                let tok = match (first, c < 0) {
                    (true, false) => format!(" {c} {name}"),
                    (true, true) => format!(" -{} {name}", c.unsigned_abs()),
                    (false, neg) => {
                        format!(
                            " {} {} {name}",
                            if neg { '-' } else { '+' },
                            c.unsigned_abs()
                        )
                    }
                };
                width += tok.len();
                if width > 200 {
                    s.push_str("\n   ");
                    width = tok.len();
                }
                s.push_str(&tok);
                first = false;
            }
            if first {
                s.push_str(" 0");
            }
        };
        s.push_str("Minimize\n obj:");
        line(&mut s, &mut self.objective.iter().copied().enumerate());
        s.push_str("\nSubject To\n");
        for c in &self.constraints {
            let _ = write!(s, " {}:", c.name);
            line(&mut s, &mut c.terms.iter().copied());
            let rel = match c.relation {
                Relation::Le => "<=",
                Relation::Eq => "=",
            };
            let _ = writeln!(s, " {rel} {}", c.rhs);
        }
        s.push_str("Bounds\n");
        for v in &self.vars {
            if v.upper != 1 {
                let _ = writeln!(s, " 0 <= {} <= {}", v.name, v.upper);
            }
        }
        s.push_str("Binary\n");
        for v in self.vars.iter().filter(|v| v.upper == 1) {
            let _ = writeln!(s, " {}", v.name);
        }
        let general: Vec<_> = self.vars.iter().filter(|v| v.upper != 1).collect();
        if !general.is_empty() {
            s.push_str("General\n");
            for v in general {
                let _ = writeln!(s, " {}", v.name);
            }
        }
        s.push_str("End\n");
        s
    }
}

fn coef(v: u64) -> Result<i64, IlpError> {
    i64::try_from(v).map_err(|_| IlpError::Overflow)
}

fn budget(v: u64) -> i64 {
    i64::try_from(v).unwrap_or(i64::MAX)
}

/// Builds the 0-1 ILP for `request` over a validated network.
pub fn build_problem(net: &Network, request: &SolveRequest) -> Result<IlpProblem, IlpError> {
    request.validate()?;
    let mut vars = Vec::new();
    let mut primary = Vec::with_capacity(net.num_layers());
    for (i, layer) in net.layers.iter().enumerate() {
        let mut ids = Vec::with_capacity(layer.len());
        for j in 0..layer.len() {
            ids.push(vars.len());
            vars.push(Variable {
                name: format!("x_{i}_{j}"),
                kind: VarKind::Primary {
                    layer: i,
                    candidate: j,
                },
                upper: 1,
            });
        }
        primary.push(ids);
    }
    let mut products = Vec::new();
    for (e, edge) in net.edges.iter().enumerate() {
        for (j, row) in edge.matrix.cost.iter().enumerate() {
            for (k, &cost) in row.iter().enumerate() {
                if cost == 0 {
                    continue;
                }
                products.push(vars.len());
                vars.push(Variable {
                    name: format!("y_{e}_{j}_{k}"),
                    kind: VarKind::Product {
                        edge: e,
                        from_layer: edge.from,
                        to_layer: edge.to,
                        from_candidate: j,
                        to_candidate: k,
                        cost,
                    },
                    upper: 1,
                });
            }
        }
    }
    let workspace_var = (request.mode == SolveMode::MinWorkspace).then(|| {
        vars.push(Variable {
            name: "W".into(),
            kind: VarKind::Workspace,
            upper: net.max_workspace(),
        });
        vars.len() - 1
    });

    let mut constraints = Vec::new();
    for (i, ids) in primary.iter().enumerate() {
        constraints.push(Constraint {
            name: format!("onehot_{i}"),
            terms: ids.iter().map(|&v| (v, 1)).collect(),
            relation: Relation::Eq,
            rhs: 1,
        });
    }
    for &y in &products {
        let VarKind::Product {
            from_layer,
            to_layer,
            from_candidate,
            to_candidate,
            ..
        } = vars[y].kind
        else {
            unreachable!()
        };
        constraints.push(Constraint {
            name: format!("link_{}", &vars[y].name[2..]),
            terms: vec![
                (primary[from_layer][from_candidate], 1),
                (primary[to_layer][to_candidate], 1),
                (y, -1),
            ],
            relation: Relation::Le,
            rhs: 1,
        });
    }

    // Time expression: sum t x + sum trans y.
    let mut time_terms = Vec::new();
    for (i, ids) in primary.iter().enumerate() {
        for (j, &v) in ids.iter().enumerate() {
            time_terms.push((v, coef(net.layers[i].candidates[j].time_us)?));
        }
    }
    for &y in &products {
        if let VarKind::Product { cost, .. } = vars[y].kind {
            time_terms.push((y, coef(cost)?));
        }
    }
    let mut memory_terms = Vec::new();
    for (i, ids) in primary.iter().enumerate() {
        for (j, &v) in ids.iter().enumerate() {
            memory_terms.push((v, coef(net.layers[i].candidates[j].memory_bytes)?));
        }
    }

    let mut objective = vec![0i64; vars.len()];
    match request.mode {
        SolveMode::MinTime => {
            for &(v, c) in &time_terms {
                objective[v] = c;
            }
            if let Some(m) = request.memory_budget {
                constraints.push(Constraint {
                    name: "memory_budget".into(),
                    terms: memory_terms.clone(),
                    relation: Relation::Le,
                    rhs: budget(m),
                });
            }
            if let Some(w) = request.workspace_budget {
                for (i, ids) in primary.iter().enumerate() {
                    constraints.push(Constraint {
                        name: format!("workspace_budget_{i}"),
                        terms: ids
                            .iter()
                            .enumerate()
                            .map(|(j, &v)| Ok((v, coef(net.layers[i].candidates[j].memory_bytes)?)))
                            .collect::<Result<_, IlpError>>()?,
                        relation: Relation::Le,
                        rhs: budget(w),
                    });
                }
            }
        }
        SolveMode::MinMemorySum | SolveMode::MinWorkspace => {
            if let Some(w) = workspace_var {
                objective[w] = 1;
                for (i, ids) in primary.iter().enumerate() {
                    let mut terms: Vec<(usize, i64)> = ids
                        .iter()
                        .enumerate()
                        .map(|(j, &v)| Ok((v, coef(net.layers[i].candidates[j].memory_bytes)?)))
                        .collect::<Result<_, IlpError>>()?;
                    terms.push((w, -1));
                    constraints.push(Constraint {
                        name: format!("workspace_{i}"),
                        terms,
                        relation: Relation::Le,
                        rhs: 0,
                    });
                }
            } else {
                for &(v, c) in &memory_terms {
                    objective[v] = c;
                }
            }
            if let Some(t) = request.time_budget {
                constraints.push(Constraint {
                    name: "time_budget".into(),
                    terms: time_terms,
                    relation: Relation::Le,
                    rhs: budget(t),
                });
            }
        }
    }

    Ok(IlpProblem {
        vars,
        objective,
        constraints,
    })
}

/// Value of the linearized transition terms for a one-hot assignment of the
/// primary variables: each product variable takes the smallest value its
/// linking rows allow, and contributes its transition cost when it is 1.
pub fn linearized_transition_value(
    problem: &IlpProblem,
    assignment: &[usize],
) -> Result<u64, IlpError> {
    let mut value = vec![0i64; problem.vars.len()];
    for (v, var) in problem.vars.iter().enumerate() {
        if let VarKind::Primary { layer, candidate } = var.kind {
            let chosen = *assignment
                .get(layer)
                .ok_or_else(|| IlpError::Malformed(format!("no assignment for layer {layer}")))?;
            value[v] = i64::from(chosen == candidate);
        }
    }
    // y >= max(0, max over linking rows of (sum of other terms - rhs)).
    let mut lower = vec![0i64; problem.vars.len()];
    for c in &problem.constraints {
        if c.relation != Relation::Le {
            continue;
        }
        let Some(&(y, _)) = c
            .terms
            .iter()
            .find(|&&(v, a)| a == -1 && matches!(problem.vars[v].kind, VarKind::Product { .. }))
        else {
            continue;
        };
        let rest: i64 = c
            .terms
            .iter()
            .filter(|&&(v, _)| v != y)
            .map(|&(v, a)| a * value[v])
            .sum();
        lower[y] = lower[y].max(rest - c.rhs);
    }
    let mut total = 0u64;
    for (v, var) in problem.vars.iter().enumerate() {
        if let VarKind::Product { cost, .. } = var.kind {
            if lower[v] > 0 {
                total = total.checked_add(cost).ok_or(IlpError::Overflow)?;
            }
        }
    }
    Ok(total)
}
