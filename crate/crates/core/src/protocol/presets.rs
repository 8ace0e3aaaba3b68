use super::TrainingProtocol;
use crate::error::{Error, Result};

pub const PRESET_NAMES: [&str; 3] = ["cv-baseline", "comm", "new"];

const CV_BASELINE: &str = include_str!("../../presets/cv-baseline.json");
const COMM: &str = include_str!("../../presets/comm.json");
const NEW: &str = include_str!("../../presets/new.json");

/// Returns the shipped preset procedure, already validated.
pub fn load_preset(name: &str) -> Result<TrainingProtocol> {
    let text = match name {
        "cv-baseline" => CV_BASELINE,
        "comm" => COMM,
        "new" => NEW,
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    let (protocol, _) = TrainingProtocol::from_json_str(text)?;
    protocol.validate()
}

/// Raw JSON text of a shipped preset.
pub fn preset_source(name: &str) -> Option<&'static str> {
    match name {
        "cv-baseline" => Some(CV_BASELINE),
        "comm" => Some(COMM),
        "new" => Some(NEW),
        _ => None,
    }
}
