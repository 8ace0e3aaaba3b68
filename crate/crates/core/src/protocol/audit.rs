//! Completeness audit of a procedure description.
//!
//! The ten components of a complete training-procedure description each map
//! to a disjoint group of protocol keys. A component is present when all of
//! its required keys are present and non-null.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::unknown_keys;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    DatasetDescription,
    ModelParameters,
    Preprocessing,
    BatchSizeAndMaxEpoch,
    Optimizer,
    LearningRateStrategy,
    EarlyStopping,
    FinalModelSelection,
    ValidationTestSetting,
    AdditionalDetails,
}

impl Component {
    pub const ALL: [Component; 10] = [
        Component::DatasetDescription,
        Component::ModelParameters,
        Component::Preprocessing,
        Component::BatchSizeAndMaxEpoch,
        Component::Optimizer,
        Component::LearningRateStrategy,
        Component::EarlyStopping,
        Component::FinalModelSelection,
        Component::ValidationTestSetting,
        Component::AdditionalDetails,
    ];

    /// Every key owned by this component. Groups are disjoint.
    pub fn fields(self) -> &'static [&'static str] {
        match self {
            Component::DatasetDescription => &["dataset_description"],
            Component::ModelParameters => &["model_parameters"],
            Component::Preprocessing => &["preprocessing"],
            Component::BatchSizeAndMaxEpoch => &["batch_size", "max_epoch"],
            Component::Optimizer => &["optimizer", "learning_rate", "weight_decay"],
            Component::LearningRateStrategy => &[
                "scheduler",
                "scheduler_base",
                "scheduler_patience",
                "scheduler_step_size",
                "scheduler_gamma",
            ],
            Component::EarlyStopping => &[
                "early_stopping",
                "early_stopping_base",
                "early_stopping_patience",
            ],
            Component::FinalModelSelection => &["model_selection_base"],
            Component::ValidationTestSetting => &["validation_test"],
            Component::AdditionalDetails => &["loss", "seed"],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Component::DatasetDescription => "dataset description",
            Component::ModelParameters => "model parameters",
            Component::Preprocessing => "data preprocessing",
            Component::BatchSizeAndMaxEpoch => "batch size & maximum epoch",
            Component::Optimizer => "optimizer",
            Component::LearningRateStrategy => "learning-rate strategy",
            Component::EarlyStopping => "early stopping",
            Component::FinalModelSelection => "final model selection",
            Component::ValidationTestSetting => "validation & test setting",
            Component::AdditionalDetails => "additional details",
        }
    }

    fn is_present(self, doc: &Map<String, Value>) -> bool {
        let has = |k: &str| doc.get(k).is_some_and(|v| !v.is_null());
        match self {
            Component::LearningRateStrategy => {
                if !has("scheduler") {
                    return false;
                }
                // The kind-specific knobs must be stated too.
                match doc["scheduler"].as_str() {
                    Some("STEP") => has("scheduler_step_size") && has("scheduler_gamma"),
                    Some("LR_PLATEAU") => {
                        has("scheduler_base") && has("scheduler_patience") && has("scheduler_gamma")
                    }
                    _ => true,
                }
            }
            Component::EarlyStopping => match doc.get("early_stopping").and_then(Value::as_bool) {
                Some(true) => has("early_stopping_base") && has("early_stopping_patience"),
                Some(false) => true,
                None => false,
            },
            other => other.fields().iter().all(|k| has(k)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ComponentStatus {
    Present,
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub component_status: BTreeMap<Component, ComponentStatus>,
    pub completeness_score: u8,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl AuditReport {
    pub fn missing(&self) -> impl Iterator<Item = Component> + '_ {
        self.component_status
            .iter()
            .filter(|(_, s)| **s == ComponentStatus::Missing)
            .map(|(c, _)| *c)
    }
}

/// Audits a protocol document given as JSON text. Partial documents are fine.
pub fn audit(document: &str) -> Result<AuditReport> {
    let value: Value = if document.trim().is_empty() {
        Value::Object(Map::new())
    } else {
        serde_json::from_str(document).map_err(|e| Error::Parse(e.to_string()))?
    };
    audit_value(&value)
}

pub fn audit_value(document: &Value) -> Result<AuditReport> {
    let Value::Object(doc) = document else {
        return Err(Error::Parse("protocol document must be a JSON object".into()));
    };
    let component_status: BTreeMap<_, _> = Component::ALL
        .iter()
        .map(|&c| {
            let status = if c.is_present(doc) {
                ComponentStatus::Present
            } else {
                ComponentStatus::Missing
            };
            (c, status)
        })
        .collect();
    let completeness_score = component_status
        .values()
        .filter(|s| **s == ComponentStatus::Present)
        .count() as u8;
    let warnings = unknown_keys(doc)
        .into_iter()
        .map(|k| format!("unknown key `{k}`"))
        .collect();
    Ok(AuditReport {
        component_status,
        completeness_score,
        warnings,
    })
}
