//! Layer-by-layer execution in a fixed workspace.
//!
//! Two activation buffers `A` and `B` swap roles after every layer: the
//! output of one layer becomes the input of the next. Weights and scratch
//! space are staged per step. The plan is logical; no addresses are assigned.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{self, CostError};
use crate::model::{Network, SCHEMA_VERSION};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("execution planning needs a chain network")]
    NotAChain,
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("step footprint overflows")]
    Overflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Buffer {
    A,
    B,
}

impl Buffer {
    fn other(self) -> Self {
        match self {
            Buffer::A => Buffer::B,
            Buffer::B => Buffer::A,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanStep {
    pub layer_id: String,
    pub candidate_index: usize,
    pub candidate_id: String,
    pub input_buffer: Buffer,
    pub output_buffer: Buffer,
    pub input_bytes: u64,
    pub output_bytes: u64,
    pub weights_bytes: u64,
    pub scratch_bytes: u64,
    pub step_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionPlan {
    pub schema: u32,
    pub profile: String,
    pub steps: Vec<PlanStep>,
    pub peak_workspace: u64,
}

impl ExecutionPlan {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan serializes");
        s.push('\n');
        s
    }
}

pub fn plan_execution(net: &Network, assignment: &[usize]) -> Result<ExecutionPlan, PlanError> {
    if !net.is_chain() {
        return Err(PlanError::NotAChain);
    }
    // Range-checks the selection.
    cost::workspace_max(net, assignment)?;
    let mut steps = Vec::with_capacity(net.num_layers());
    let mut input = Buffer::A;
    for (layer, &j) in net.layers.iter().zip(assignment) {
        let cand = &layer.candidates[j];
        let b = cand.buffers();
        let step_bytes = b.total().ok_or(PlanError::Overflow)?;
        steps.push(PlanStep {
            layer_id: layer.layer_id.clone(),
            candidate_index: j,
            candidate_id: cand.id.clone(),
            input_buffer: input,
            output_buffer: input.other(),
            input_bytes: b.input,
            output_bytes: b.output,
            weights_bytes: b.weights,
            scratch_bytes: b.scratch,
            step_bytes,
        });
        input = input.other();
    }
    let peak_workspace = steps.iter().map(|s| s.step_bytes).max().unwrap_or(0);
    Ok(ExecutionPlan {
        schema: SCHEMA_VERSION,
        profile: net.name.clone(),
        steps,
        peak_workspace,
    })
}

/// Whether the selection runs layer by layer within `workspace_bytes`.
pub fn fits(net: &Network, assignment: &[usize], workspace_bytes: u64) -> Result<bool, PlanError> {
    Ok(plan_execution(net, assignment)?.peak_workspace <= workspace_bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        BufferBreakdown, EdgeSpec, LayerProfile, NetworkProfile, PrimitiveCandidate,
    };

    fn with_buffers(id: &str, b: BufferBreakdown) -> PrimitiveCandidate {
        let mut c = PrimitiveCandidate::new(id, 1, b.total().unwrap(), "CHW", "CHW");
        c.buffer_breakdown = Some(b);
        c
    }

    fn chain(layers: Vec<LayerProfile>) -> Network {
        let edges = layers
            .windows(2)
            .map(|w| EdgeSpec {
                from: w[0].layer_id.clone(),
                to: w[1].layer_id.clone(),
                matrix: None,
            })
            .collect();
        Network::from_profile(&NetworkProfile {
            schema: 1,
            name: "p".into(),
            layers,
            edges,
            layout_transforms: vec![],
        })
        .unwrap()
    }

    #[test]
    fn two_layer_peak() {
        let net = chain(vec![
            LayerProfile::new(
                "a",
                vec![with_buffers(
                    "x",
                    BufferBreakdown {
                        input: 10,
                        output: 20,
                        weights: 5,
                        scratch: 0,
                    },
                )],
            ),
            LayerProfile::new(
                "b",
                vec![with_buffers(
                    "x",
                    BufferBreakdown {
                        input: 20,
                        output: 5,
                        weights: 3,
                        scratch: 0,
                    },
                )],
            ),
        ]);
        let plan = plan_execution(&net, &[0, 0]).unwrap();
        assert_eq!(plan.steps[0].step_bytes, 35);
        assert_eq!(plan.steps[1].step_bytes, 28);
        assert_eq!(plan.peak_workspace, 35);
        assert_eq!(
            (plan.steps[0].input_buffer, plan.steps[0].output_buffer),
            (Buffer::A, Buffer::B)
        );
        assert_eq!(plan.steps[1].input_buffer, plan.steps[0].output_buffer);
        assert_eq!(plan.steps[1].output_buffer, Buffer::A);
        assert!(fits(&net, &[0, 0], 35).unwrap());
        assert!(!fits(&net, &[0, 0], 34).unwrap());
    }

    #[test]
    fn single_layer_defaults_to_scratch() {
        let net = chain(vec![LayerProfile::new(
            "a",
            vec![PrimitiveCandidate::new("x", 1, 77, "CHW", "CHW")],
        )]);
        let plan = plan_execution(&net, &[0]).unwrap();
        assert_eq!(plan.peak_workspace, 77);
        assert_eq!(plan.steps[0].scratch_bytes, 77);
    }

    #[test]
    fn rejects_non_chain() {
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
        assert_eq!(plan_execution(&net, &[0, 0, 0]), Err(PlanError::NotAChain));
    }

    #[test]
    fn plan_json_round_trips() {
        let net = chain(vec![LayerProfile::new(
            "a",
            vec![PrimitiveCandidate::new("x", 1, 7, "CHW", "CHW")],
        )]);
        let plan = plan_execution(&net, &[0]).unwrap();
        let back: ExecutionPlan = serde_json::from_str(&plan.to_json()).unwrap();
        assert_eq!(back, plan);
        assert!(plan.to_json().contains("\"schema\": 1"));
    }
}
