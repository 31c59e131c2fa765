//! Reference external detector: answers JSON-lines requests with simulated
//! detections for images of a known dataset.

use std::io::{BufRead, Write};
use std::path::Path;

use hcascade_core::detector::external::{DetectRequest, DetectResponse};
use hcascade_core::detector::{Detector, DetectorProfile, SimulatedDetector};
use hcascade_core::seeding::derive_seed;

use crate::config::read_json;
use crate::error::{CliError, CliResult, Context};

pub fn cmd_serve(
    dataset: &Path,
    profile: &Path,
    seed: u64,
    tag: Option<&str>,
    input: impl BufRead,
    mut output: impl Write,
) -> CliResult<()> {
    let dataset = hcascade_core::load_dataset(dataset).context("loading dataset")?;
    let profile: DetectorProfile = read_json(profile)?;
    let seed = tag.map_or(seed, |t| derive_seed(seed, t));
    let detector = SimulatedDetector::new(profile, seed)
        .context("detector profile")?
        .with_taxonomy(dataset.taxonomy.clone());

    for line in input.lines() {
        let line = line.map_err(|e| CliError::io("<stdin>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let request: DetectRequest = serde_json::from_str(&line)
            .map_err(|e| CliError::Config(format!("bad request line: {e}")))?;
        let index = dataset
            .image_index(&request.id)
            .ok_or_else(|| CliError::Config(format!("unknown image `{}`", request.id)))?;
        let detections = detector.detect(&dataset.images[index]).context("detecting")?;
        let response = DetectResponse {
            id: request.id,
            detections,
        };
        let text = serde_json::to_string(&response).expect("responses serialize");
        writeln!(output, "{text}")
            .and_then(|_| output.flush())
            .map_err(|e| CliError::io("<stdout>", e))?;
    }
    Ok(())
}
