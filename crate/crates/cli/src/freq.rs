//! Frequency-response export and base-frequency suggestion.

use std::io::Write;
use std::path::Path;

use hmpc::freqdesign::{frequency_response, gain_at, log_grid, suggest_w, Outcome};
use hmpc::model::Plant;
use serde::Serialize;

use crate::error::CliError;

pub fn load_plant(model: Option<&Path>) -> Result<Plant, CliError> {
    match model {
        None => Ok(Plant::ball_plate()),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
            Ok(Plant::from_json(&text)?)
        }
    }
}

/// Writes the gain of every channel on `points` log-spaced frequencies.
pub fn write_bode<W: Write>(plant: &Plant, w_min: f64, w_max: f64, points: usize, out: W) -> Result<(), CliError> {
    if !(w_min > 0.0 && w_min < w_max && w_max <= std::f64::consts::PI) || points < 2 {
        return Err(CliError::Usage(format!(
            "need 0 < w-min < w-max ≤ π and at least 2 points, got [{w_min}, {w_max}] with {points}"
        )));
    }
    let resp = frequency_response(&plant.model, &log_grid(w_min, w_max, points))?;
    Ok(resp.write_csv(out)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuggestionReport {
    pub output: usize,
    pub input: usize,
    pub w: f64,
    pub ratio: f64,
    pub gain: f64,
    pub crossing: bool,
}

pub fn suggest(plant: &Plant, output: usize, input: usize) -> Result<SuggestionReport, CliError> {
    let s = suggest_w(&plant.model, &plant.constraints, output, input)?;
    Ok(SuggestionReport {
        output,
        input,
        w: s.w,
        ratio: s.ratio,
        gain: gain_at(&plant.model, s.w, output, input)?,
        crossing: s.outcome == Outcome::Crossing,
    })
}
