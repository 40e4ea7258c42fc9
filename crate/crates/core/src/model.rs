//! Network profiles: layers, candidate primitives, data layouts and the
//! layout-transition costs between neighbouring layers.
//!
//! [`NetworkProfile`] is the on-disk form (JSON). [`Network`] is the resolved
//! form consumed by the cost engine and the solvers: every edge carries a
//! concrete [`TransitionMatrix`], either taken from the file or derived from
//! the layout transform table.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Current version of every JSON document this crate reads or writes.
pub const SCHEMA_VERSION: u32 = 1;

fn schema_v1() -> u32 {
    SCHEMA_VERSION
}

/// Memory ordering of a tensor, e.g. `CHW` or `HWC`. Layouts compare by name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DataLayout(String);

impl DataLayout {
    pub fn new(name: impl Into<String>) -> Self {
        DataLayout(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DataLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DataLayout {
    fn from(s: &str) -> Self {
        DataLayout(s.to_owned())
    }
}

/// Decomposition of a candidate's footprint into the buffers used by the
/// layer-by-layer planner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BufferBreakdown {
    pub input: u64,
    pub output: u64,
    pub weights: u64,
    pub scratch: u64,
}

impl BufferBreakdown {
    /// Scratch-only breakdown used when a profile carries no decomposition.
    pub fn scratch_only(memory_bytes: u64) -> Self {
        BufferBreakdown {
            scratch: memory_bytes,
            ..Default::default()
        }
    }

    pub fn total(&self) -> Option<u64> {
        self.input
            .checked_add(self.output)?
            .checked_add(self.weights)?
            .checked_add(self.scratch)
    }
}

/// One implementation choice for a layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimitiveCandidate {
    pub id: String,
    pub time_us: u64,
    pub memory_bytes: u64,
    pub input_layout: DataLayout,
    pub output_layout: DataLayout,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buffer_breakdown: Option<BufferBreakdown>,
}

impl PrimitiveCandidate {
    pub fn new(
        id: impl Into<String>,
        time_us: u64,
        memory_bytes: u64,
        input_layout: impl Into<DataLayout>,
        output_layout: impl Into<DataLayout>,
    ) -> Self {
        PrimitiveCandidate {
            id: id.into(),
            time_us,
            memory_bytes,
            input_layout: input_layout.into(),
            output_layout: output_layout.into(),
            buffer_breakdown: None,
        }
    }

    pub fn buffers(&self) -> BufferBreakdown {
        self.buffer_breakdown
            .unwrap_or_else(|| BufferBreakdown::scratch_only(self.memory_bytes))
    }
}

impl From<String> for DataLayout {
    fn from(s: String) -> Self {
        DataLayout(s)
    }
}

/// A layer and its ordered candidate list. The order defines the index space
/// of the layer's one-hot decision vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerProfile {
    pub layer_id: String,
    pub candidates: Vec<PrimitiveCandidate>,
}

impl LayerProfile {
    pub fn new(layer_id: impl Into<String>, candidates: Vec<PrimitiveCandidate>) -> Self {
        LayerProfile {
            layer_id: layer_id.into(),
            candidates,
        }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn min_memory(&self) -> u64 {
        self.candidates
            .iter()
            .map(|c| c.memory_bytes)
            .min()
            .unwrap_or(0)
    }

    pub fn max_memory(&self) -> u64 {
        self.candidates
            .iter()
            .map(|c| c.memory_bytes)
            .max()
            .unwrap_or(0)
    }

    pub fn min_time(&self) -> u64 {
        self.candidates.iter().map(|c| c.time_us).min().unwrap_or(0)
    }
}

/// An edge of the layer graph as written in a profile file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<u64>>>,
}

/// Cost of converting the tensor entering `layer` from one layout to another.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutTransform {
    pub from_layout: DataLayout,
    pub to_layout: DataLayout,
    pub layer: String,
    pub cost_us: u64,
}

/// Profiled network as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkProfile {
    #[serde(default = "schema_v1")]
    pub schema: u32,
    pub name: String,
    pub layers: Vec<LayerProfile>,
    #[serde(default)]
    pub edges: Vec<EdgeSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub layout_transforms: Vec<LayoutTransform>,
}

impl NetworkProfile {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(ModelError::Parse)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("profile serializes");
        s.push('\n');
        s
    }

    pub fn transform_table(&self) -> LayoutTransformTable {
        LayoutTransformTable::from_entries(&self.layout_transforms)
    }
}

/// Lookup of layout transform costs keyed by (from layout, to layout, layer).
#[derive(Debug, Clone, Default)]
pub struct LayoutTransformTable {
    costs: HashMap<(DataLayout, DataLayout, String), u64>,
}

impl LayoutTransformTable {
    pub fn from_entries(entries: &[LayoutTransform]) -> Self {
        let costs = entries
            .iter()
            .map(|e| {
                (
                    (e.from_layout.clone(), e.to_layout.clone(), e.layer.clone()),
                    e.cost_us,
                )
            })
            .collect();
        LayoutTransformTable { costs }
    }

    pub fn insert(&mut self, from: DataLayout, to: DataLayout, layer: &str, cost_us: u64) {
        self.costs.insert((from, to, layer.to_owned()), cost_us);
    }

    pub fn get(&self, from: &DataLayout, to: &DataLayout, layer: &str) -> Option<u64> {
        // Borrowed lookup on a tuple key needs an owned probe.
        self.costs
            .get(&(from.clone(), to.clone(), layer.to_owned()))
            .copied()
    }
}

/// Layout-transformation times between the candidates of two adjacent layers.
/// Rows index the producing layer's candidates, columns the consumer's.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionMatrix {
    pub from_layer: String,
    pub to_layer: String,
    pub cost: Vec<Vec<u64>>,
}

impl TransitionMatrix {
    pub fn get(&self, from_candidate: usize, to_candidate: usize) -> u64 {
        self.cost[from_candidate][to_candidate]
    }

    pub fn rows(&self) -> usize {
        self.cost.len()
    }

    pub fn cols(&self) -> usize {
        self.cost.first().map_or(0, Vec::len)
    }

    pub fn min_entry(&self) -> u64 {
        self.cost.iter().flatten().copied().min().unwrap_or(0)
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed profile: {0}")]
    Parse(#[source] serde_json::Error),
    #[error("no transform cost for {from_layout} -> {to_layout} into layer '{layer}'")]
    MissingTransformCost {
        from_layout: DataLayout,
        to_layout: DataLayout,
        layer: String,
    },
    #[error("invalid profile:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| format!("  {x}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// A broken profile invariant: where it was found and which rule failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl Violation {
    fn new(location: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            location: location.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

/// Builds the transition matrix between two layers from the layout table.
///
/// Entry `[j][k]` is zero when candidate `j`'s output layout equals candidate
/// `k`'s input layout; otherwise it is the table cost of converting the
/// tensor entering `to`.
pub fn derive_transition_matrix(
    from: &LayerProfile,
    to: &LayerProfile,
    table: &LayoutTransformTable,
) -> Result<TransitionMatrix, ModelError> {
    let mut cost = Vec::with_capacity(from.len());
    for producer in &from.candidates {
        let mut row = Vec::with_capacity(to.len());
        for consumer in &to.candidates {
            if producer.output_layout == consumer.input_layout {
                row.push(0);
                continue;
            }
            let c = table
                .get(
                    &producer.output_layout,
                    &consumer.input_layout,
                    &to.layer_id,
                )
                .ok_or_else(|| ModelError::MissingTransformCost {
                    from_layout: producer.output_layout.clone(),
                    to_layout: consumer.input_layout.clone(),
                    layer: to.layer_id.clone(),
                })?;
            row.push(c);
        }
        cost.push(row);
    }
    Ok(TransitionMatrix {
        from_layer: from.layer_id.clone(),
        to_layer: to.layer_id.clone(),
        cost,
    })
}

/// Checks every profile invariant. An empty result means the profile is usable.
pub fn validate_profile(profile: &NetworkProfile) -> Vec<Violation> {
    let mut out = Vec::new();

    if profile.schema != SCHEMA_VERSION {
        out.push(Violation::new(
            "profile",
            format!(
                "unsupported schema {} (expected {SCHEMA_VERSION})",
                profile.schema
            ),
        ));
    }
    if profile.layers.is_empty() {
        out.push(Violation::new("profile", "network has no layers"));
    }

    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, layer) in profile.layers.iter().enumerate() {
        let loc = format!("layer '{}'", layer.layer_id);
        if layer.layer_id.is_empty() {
            out.push(Violation::new(format!("layer #{i}"), "empty layer id"));
        }
        if index.insert(layer.layer_id.as_str(), i).is_some() {
            out.push(Violation::new(&loc, "duplicate layer id"));
        }
        if layer.candidates.is_empty() {
            out.push(Violation::new(&loc, "layer has no candidates"));
        }
        let mut seen = HashSet::new();
        for (j, c) in layer.candidates.iter().enumerate() {
            let cloc = format!("{loc} candidate #{j} '{}'", c.id);
            if c.id.is_empty() {
                out.push(Violation::new(&cloc, "empty candidate id"));
            }
            if !seen.insert(c.id.as_str()) {
                out.push(Violation::new(
                    &cloc,
                    "candidate id not unique within layer",
                ));
            }
            if c.input_layout.as_str().is_empty() || c.output_layout.as_str().is_empty() {
                out.push(Violation::new(&cloc, "empty layout name"));
            }
            if let Some(b) = c.buffer_breakdown {
                match b.total() {
                    Some(t) if t == c.memory_bytes => {}
                    Some(t) => out.push(Violation::new(
                        &cloc,
                        format!(
                            "buffer breakdown sums to {t} but memory_bytes is {}",
                            c.memory_bytes
                        ),
                    )),
                    None => out.push(Violation::new(&cloc, "buffer breakdown overflows")),
                }
            }
        }
    }

    let mut transform_keys = HashSet::new();
    for t in &profile.layout_transforms {
        let loc = format!(
            "layout transform {} -> {} into '{}'",
            t.from_layout, t.to_layout, t.layer
        );
        if !index.contains_key(t.layer.as_str()) {
            out.push(Violation::new(&loc, "unknown layer"));
        }
        if !transform_keys.insert((&t.from_layout, &t.to_layout, t.layer.as_str())) {
            out.push(Violation::new(&loc, "duplicate transform entry"));
        }
    }
    let table = profile.transform_table();

    let mut edge_keys = HashSet::new();
    for e in &profile.edges {
        let loc = format!("edge '{}' -> '{}'", e.from, e.to);
        let (Some(&fi), Some(&ti)) = (index.get(e.from.as_str()), index.get(e.to.as_str())) else {
            out.push(Violation::new(&loc, "edge references an unknown layer"));
            continue;
        };
        if fi >= ti {
            out.push(Violation::new(
                &loc,
                "source must precede target in topological order",
            ));
            continue;
        }
        if !edge_keys.insert((fi, ti)) {
            out.push(Violation::new(&loc, "duplicate edge"));
        }
        let from = &profile.layers[fi];
        let to = &profile.layers[ti];
        match &e.matrix {
            Some(m) => {
                let dims_ok = m.len() == from.len() && m.iter().all(|row| row.len() == to.len());
                if !dims_ok {
                    let cols = m.first().map_or(0, Vec::len);
                    out.push(Violation::new(
                        &loc,
                        format!(
                            "dimension mismatch: matrix is {}x{cols}, layers have {} and {} candidates",
                            m.len(),
                            from.len(),
                            to.len()
                        ),
                    ));
                    continue;
                }
                for (j, p) in from.candidates.iter().enumerate() {
                    for (k, c) in to.candidates.iter().enumerate() {
                        if p.output_layout == c.input_layout && m[j][k] != 0 {
                            out.push(Violation::new(
                                &loc,
                                format!(
                                    "identity transform must cost 0: entry [{j}][{k}] ({} -> {}) is {}",
                                    p.output_layout, c.input_layout, m[j][k]
                                ),
                            ));
                        }
                    }
                }
            }
            None => {
                if let Err(err) = derive_transition_matrix(from, to, &table) {
                    out.push(Violation::new(&loc, err.to_string()));
                }
            }
        }
    }
    out
}

/// A resolved edge between two layer indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub matrix: TransitionMatrix,
}

/// A validated profile with every transition matrix materialized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    pub name: String,
    pub layers: Vec<LayerProfile>,
    pub edges: Vec<Edge>,
}

impl Network {
    pub fn from_profile(profile: &NetworkProfile) -> Result<Self, ModelError> {
        let violations = validate_profile(profile);
        if !violations.is_empty() {
            return Err(ModelError::Invalid(violations));
        }
        let index: HashMap<&str, usize> = profile
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| (l.layer_id.as_str(), i))
            .collect();
        let table = profile.transform_table();
        let mut edges = Vec::with_capacity(profile.edges.len());
        for e in &profile.edges {
            let from = index[e.from.as_str()];
            let to = index[e.to.as_str()];
            let matrix = match &e.matrix {
                Some(cost) => TransitionMatrix {
                    from_layer: e.from.clone(),
                    to_layer: e.to.clone(),
                    cost: cost.clone(),
                },
                None => {
                    derive_transition_matrix(&profile.layers[from], &profile.layers[to], &table)?
                }
            };
            edges.push(Edge { from, to, matrix });
        }
        Ok(Network {
            name: profile.name.clone(),
            layers: profile.layers.clone(),
            edges,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Candidate counts per layer.
    pub fn sizes(&self) -> Vec<usize> {
        self.layers.iter().map(LayerProfile::len).collect()
    }

    pub fn layer_index(&self, layer_id: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.layer_id == layer_id)
    }

    /// True when the edges are exactly `(i, i+1)` for consecutive layers.
    pub fn is_chain(&self) -> bool {
        let m = self.layers.len();
        if self.edges.len() != m.saturating_sub(1) {
            return false;
        }
        let mut seen = vec![false; m];
        for e in &self.edges {
            if e.to != e.from + 1 || seen[e.from] {
                return false;
            }
            seen[e.from] = true;
        }
        true
    }

    /// Number of complete assignments, saturating at `u128::MAX`.
    pub fn assignment_count(&self) -> u128 {
        self.layers
            .iter()
            .fold(1u128, |acc, l| acc.saturating_mul(l.len() as u128))
    }

    pub fn min_memory_sum(&self) -> u64 {
        self.layers.iter().map(LayerProfile::min_memory).sum()
    }

    pub fn max_memory_sum(&self) -> u64 {
        self.layers.iter().map(LayerProfile::max_memory).sum()
    }

    /// Smallest workspace any selection can have: the largest per-layer minimum.
    pub fn min_workspace(&self) -> u64 {
        self.layers
            .iter()
            .map(LayerProfile::min_memory)
            .max()
            .unwrap_or(0)
    }

    pub fn max_workspace(&self) -> u64 {
        self.layers
            .iter()
            .map(LayerProfile::max_memory)
            .max()
            .unwrap_or(0)
    }
}

/// One-hot assignment of a candidate to every layer plus its evaluated costs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    /// Candidate index per layer, in layer order.
    pub assignment: Vec<usize>,
    pub breakdown: ObjectiveBreakdown,
}

/// Objective values of a selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveBreakdown {
    pub exec_time_us: u64,
    pub transform_time_us: u64,
    pub total_time_us: u64,
    pub memory_sum_bytes: u64,
    pub workspace_max_bytes: u64,
}
