//! Declarative training procedures.
//!
//! A [`TrainingProtocol`] records every tunable factor of a training run:
//! optimizer and step size, weight decay, learning-rate scheduler, batch size,
//! epoch budget, early stopping and final model selection. Protocol files are
//! flat JSON objects using the field names of the struct; the enum values are
//! upper-case (`"ADAM"`, `"LR_PLATEAU"`, `"VAL_METRIC"`, ...).
//!
//! Besides the numeric factors a protocol may carry free-form documentation
//! blocks (`dataset_description`, `model_parameters`, `preprocessing`,
//! `validation_test`). They are not interpreted by the trainer, but [`audit`]
//! counts them towards the completeness of a procedure description.

mod audit;
mod presets;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub use audit::{audit, audit_value, AuditReport, Component, ComponentStatus};
pub use presets::{load_preset, preset_source, PRESET_NAMES};

/// Absolute margin a monitored value has to beat the best value by before it
/// counts as an improvement (scheduler plateaus and early stopping).
pub const IMPROVEMENT_EPSILON: f64 = 1e-4;

pub const DEFAULT_STEP_SIZE: u32 = 10;
pub const DEFAULT_GAMMA: f64 = 0.1;
pub const DEFAULT_SCHEDULER_PATIENCE: u32 = 10;
pub const DEFAULT_SCHEDULER_BASE: Base = Base::ValLoss;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Optimizer {
    Sgd,
    Adam,
    Adadelta,
    Rmsprop,
    Adagrad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scheduler {
    None,
    Step,
    LrPlateau,
    Cos,
    CosRestart,
}

/// A monitored series: loss or macro F1, on the training or validation set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Base {
    TrainLoss,
    ValLoss,
    TrainMetric,
    ValMetric,
}

impl Base {
    /// Losses improve downwards, metrics upwards.
    pub fn lower_is_better(self) -> bool {
        matches!(self, Base::TrainLoss | Base::ValLoss)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SelectionBase {
    Last,
    TrainLoss,
    ValLoss,
    TrainMetric,
    ValMetric,
}

impl SelectionBase {
    /// The monitored series, `None` for [`SelectionBase::Last`].
    pub fn monitored(self) -> Option<Base> {
        match self {
            SelectionBase::Last => None,
            SelectionBase::TrainLoss => Some(Base::TrainLoss),
            SelectionBase::ValLoss => Some(Base::ValLoss),
            SelectionBase::TrainMetric => Some(Base::TrainMetric),
            SelectionBase::ValMetric => Some(Base::ValMetric),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Loss {
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingProtocol {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub scheduler: Scheduler,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheduler_base: Option<Base>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheduler_patience: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheduler_step_size: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheduler_gamma: Option<f64>,
    pub batch_size: u32,
    pub max_epoch: u32,
    pub early_stopping: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stopping_base: Option<Base>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stopping_patience: Option<u32>,
    pub model_selection_base: SelectionBase,
    pub loss: Loss,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_description: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_parameters: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preprocessing: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_test: Option<Value>,
}

/// Every key a protocol document may contain.
pub const KNOWN_FIELDS: &[&str] = &[
    "optimizer",
    "learning_rate",
    "weight_decay",
    "scheduler",
    "scheduler_base",
    "scheduler_patience",
    "scheduler_step_size",
    "scheduler_gamma",
    "batch_size",
    "max_epoch",
    "early_stopping",
    "early_stopping_base",
    "early_stopping_patience",
    "model_selection_base",
    "loss",
    "seed",
    "dataset_description",
    "model_parameters",
    "preprocessing",
    "validation_test",
];

/// Keys of `object` that are not protocol fields.
pub fn unknown_keys(object: &serde_json::Map<String, Value>) -> Vec<String> {
    let known: BTreeSet<&str> = KNOWN_FIELDS.iter().copied().collect();
    object
        .keys()
        .filter(|k| !known.contains(k.as_str()))
        .cloned()
        .collect()
}

fn check_range(
    field: &'static str,
    value: f64,
    ok: bool,
    range: &'static str,
) -> Result<()> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Range {
            field,
            value: value.to_string(),
            range,
        })
    }
}

fn check_patience(field: &'static str, value: u32) -> Result<()> {
    check_range(field, value as f64, (1..=100).contains(&value), "[1, 100]")
}

impl TrainingProtocol {
    /// Parses a protocol document. Unknown keys are returned as warnings.
    pub fn from_json_str(text: &str) -> Result<(Self, Vec<String>)> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let Value::Object(object) = &value else {
            return Err(Error::Parse("protocol document must be a JSON object".into()));
        };
        let warnings = unknown_keys(object)
            .into_iter()
            .map(|k| format!("unknown protocol key `{k}` ignored"))
            .collect();
        let protocol = serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))?;
        Ok((protocol, warnings))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("protocol serializes")
    }

    /// Checks every factor against its allowed range and fills the scheduler
    /// defaults. Idempotent.
    pub fn validate(mut self) -> Result<Self> {
        let lr = self.learning_rate;
        check_range("learning_rate", lr, (1e-5..=1e-1).contains(&lr), "[1e-5, 1e-1]")?;
        let wd = self.weight_decay;
        check_range(
            "weight_decay",
            wd,
            wd == 0.0 || (1e-8..=1e-1).contains(&wd),
            "{0} ∪ [1e-8, 1e-1]",
        )?;
        check_range(
            "batch_size",
            self.batch_size as f64,
            (16..=512).contains(&self.batch_size),
            "[16, 512]",
        )?;
        check_range(
            "max_epoch",
            self.max_epoch as f64,
            (10..=1500).contains(&self.max_epoch),
            "[10, 1500]",
        )?;

        let patience = *self.scheduler_patience.get_or_insert(DEFAULT_SCHEDULER_PATIENCE);
        check_patience("scheduler_patience", patience)?;
        let step = *self.scheduler_step_size.get_or_insert(DEFAULT_STEP_SIZE);
        check_range(
            "scheduler_step_size",
            step as f64,
            (1..=1500).contains(&step),
            "[1, 1500]",
        )?;
        let gamma = *self.scheduler_gamma.get_or_insert(DEFAULT_GAMMA);
        check_range("scheduler_gamma", gamma, gamma > 0.0 && gamma < 1.0, "(0, 1)")?;
        self.scheduler_base.get_or_insert(DEFAULT_SCHEDULER_BASE);

        if self.early_stopping {
            if self.early_stopping_base.is_none() {
                return Err(Error::Inconsistency(
                    "early_stopping is true but early_stopping_base is absent".into(),
                ));
            }
            match self.early_stopping_patience {
                None => {
                    return Err(Error::Inconsistency(
                        "early_stopping is true but early_stopping_patience is absent".into(),
                    ))
                }
                Some(p) => check_patience("early_stopping_patience", p)?,
            }
        }
        Ok(self)
    }

    /// The scheduler base after defaults.
    pub fn scheduler_base_or_default(&self) -> Base {
        self.scheduler_base.unwrap_or(DEFAULT_SCHEDULER_BASE)
    }

    /// `(base, patience)` when early stopping is enabled.
    pub fn early_stopping_rule(&self) -> Option<(Base, u32)> {
        if !self.early_stopping {
            return None;
        }
        Some((self.early_stopping_base?, self.early_stopping_patience?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn adam() -> TrainingProtocol {
        load_preset("cv-baseline").unwrap()
    }

    #[test]
    fn accepts_adam_at_1e3() {
        let p = TrainingProtocol {
            learning_rate: 1e-3,
            ..adam()
        };
        assert!(p.validate().is_ok());
    }

    #[test]
    fn rejects_learning_rate_one() {
        let err = TrainingProtocol {
            learning_rate: 1.0,
            ..adam()
        }
        .validate()
        .unwrap_err();
        match err {
            Error::Range { field, range, .. } => {
                assert_eq!(field, "learning_rate");
                assert_eq!(range, "[1e-5, 1e-1]");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_batch_size_eight() {
        let err = TrainingProtocol {
            batch_size: 8,
            ..adam()
        }
        .validate()
        .unwrap_err();
        assert!(matches!(err, Error::Range { field: "batch_size", range: "[16, 512]", .. }));
    }

    #[test]
    fn weight_decay_domain() {
        for ok in [0.0, 1e-8, 1e-4, 1e-1] {
            assert!(TrainingProtocol { weight_decay: ok, ..adam() }.validate().is_ok());
        }
        for bad in [1e-9, 0.2, -1e-4, f64::NAN] {
            assert!(TrainingProtocol { weight_decay: bad, ..adam() }.validate().is_err());
        }
    }

    #[test]
    fn range_edges() {
        assert!(TrainingProtocol { max_epoch: 9, ..adam() }.validate().is_err());
        assert!(TrainingProtocol { max_epoch: 1500, ..adam() }.validate().is_ok());
        assert!(TrainingProtocol { max_epoch: 1501, ..adam() }.validate().is_err());
        assert!(TrainingProtocol { batch_size: 512, ..adam() }.validate().is_ok());
        assert!(TrainingProtocol { learning_rate: 1e-5, ..adam() }.validate().is_ok());
        assert!(TrainingProtocol { learning_rate: 9e-6, ..adam() }.validate().is_err());
        assert!(TrainingProtocol { scheduler_patience: Some(0), ..adam() }.validate().is_err());
        assert!(TrainingProtocol { scheduler_gamma: Some(1.0), ..adam() }.validate().is_err());
        assert!(TrainingProtocol { early_stopping_patience: Some(101), ..adam() }
            .validate()
            .is_err());
    }

    #[test]
    fn early_stopping_without_patience_is_inconsistent() {
        let p = TrainingProtocol {
            early_stopping_patience: None,
            ..adam()
        };
        assert!(matches!(p.validate(), Err(Error::Inconsistency(_))));
        let p = TrainingProtocol {
            early_stopping: false,
            early_stopping_patience: None,
            early_stopping_base: None,
            ..adam()
        };
        assert!(p.validate().unwrap().early_stopping_rule().is_none());
    }

    #[test]
    fn defaults_are_filled() {
        let p = TrainingProtocol {
            scheduler: Scheduler::Step,
            scheduler_step_size: None,
            scheduler_gamma: None,
            scheduler_base: None,
            scheduler_patience: None,
            ..adam()
        }
        .validate()
        .unwrap();
        assert_eq!(p.scheduler_step_size, Some(10));
        assert_eq!(p.scheduler_gamma, Some(0.1));
        assert_eq!(p.scheduler_patience, Some(10));
        assert_eq!(p.scheduler_base, Some(Base::ValLoss));
    }

    #[test]
    fn unknown_keys_are_warnings() {
        let mut v = serde_json::to_value(adam()).unwrap();
        v["gradient_clip"] = serde_json::json!(1.0);
        let (p, warnings) = TrainingProtocol::from_json_str(&v.to_string()).unwrap();
        assert_eq!(p, adam());
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("gradient_clip"));
    }

    #[test]
    fn malformed_document_is_parse_error() {
        assert!(matches!(TrainingProtocol::from_json_str("{"), Err(Error::Parse(_))));
        assert!(matches!(TrainingProtocol::from_json_str("[1]"), Err(Error::Parse(_))));
        assert!(matches!(
            TrainingProtocol::from_json_str(r#"{"optimizer":"NADAM"}"#),
            Err(Error::Parse(_))
        ));
    }
}
