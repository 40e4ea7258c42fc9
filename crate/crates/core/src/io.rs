//! JSON documents for selections.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Network, ObjectiveBreakdown, Selection, SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("malformed document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema {0}")]
    Schema(u32),
    #[error("selection does not cover layer '{0}'")]
    MissingLayer(String),
    #[error("selection names unknown layer '{0}'")]
    UnknownLayer(String),
}

/// A selection as written by `solve` and read by `score`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionDocument {
    pub schema: u32,
    pub profile: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
    /// Candidate index per layer id, in layer order.
    pub assignment: IndexMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_ids: Option<IndexMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakdown: Option<ObjectiveBreakdown>,
}

impl SelectionDocument {
    pub fn from_selection(net: &Network, selection: &Selection) -> Self {
        let assignment = net
            .layers
            .iter()
            .zip(&selection.assignment)
            .map(|(l, &j)| (l.layer_id.clone(), j))
            .collect();
        let candidate_ids = net
            .layers
            .iter()
            .zip(&selection.assignment)
            .map(|(l, &j)| (l.layer_id.clone(), l.candidates[j].id.clone()))
            .collect();
        SelectionDocument {
            schema: SCHEMA_VERSION,
            profile: net.name.clone(),
            mode: None,
            status: None,
            assignment,
            candidate_ids: Some(candidate_ids),
            breakdown: Some(selection.breakdown),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, DocumentError> {
        let doc: SelectionDocument = serde_json::from_str(text)?;
        if doc.schema != SCHEMA_VERSION {
            return Err(DocumentError::Schema(doc.schema));
        }
        Ok(doc)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("selection serializes");
        s.push('\n');
        s
    }

    /// Candidate indices in the network's layer order. Range checks are left
    /// to the cost engine.
    pub fn assignment_for(&self, net: &Network) -> Result<Vec<usize>, DocumentError> {
        if let Some(unknown) = self
            .assignment
            .keys()
            .find(|k| net.layer_index(k).is_none())
        {
            return Err(DocumentError::UnknownLayer(unknown.clone()));
        }
        net.layers
            .iter()
            .map(|l| {
                self.assignment
                    .get(&l.layer_id)
                    .copied()
                    .ok_or_else(|| DocumentError::MissingLayer(l.layer_id.clone()))
            })
            .collect()
    }
}

/// Selections keyed by id, written next to a frontier CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSet {
    pub schema: u32,
    pub profile: String,
    pub selections: IndexMap<String, SelectionDocument>,
}

impl SelectionSet {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("selection set serializes");
        s.push('\n');
        s
    }
}
