//! Browser bindings for the demo page in `www/`.
//!
//! Each export wraps a plain function returning `Result<String, String>` so
//! the logic can be tested natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use morphalign::aligner::{align_corpus, AlignedCorpus};
use morphalign::analysis::{render_report, AlignmentReport, CountSide, ReportFormat};
use morphalign::corpus::{parse_parallel, Bitext, LoadOptions};
use morphalign::ibm::{train, IterationRecord, ModelConfig, Stage, TrainSchedule};

/// Largest corpus the page accepts, in sentence pairs.
pub const MAX_PAIRS: usize = 2000;

#[derive(Serialize)]
struct PairView {
    line_no: usize,
    source: Vec<String>,
    target: Vec<String>,
    /// `links[j]` is the source position of target word `j + 1`, 0 for NULL.
    links: Vec<usize>,
}

#[derive(Serialize)]
struct AlignView {
    stage: Stage,
    pairs: Vec<PairView>,
    likelihood: Vec<IterationRecord>,
}

struct Trained {
    bitext: Bitext,
    aligned: AlignedCorpus,
    likelihood: Vec<IterationRecord>,
}

fn train_and_align(src: &str, tgt: &str, schedule: &str) -> Result<Trained, String> {
    let raw = parse_parallel(src, tgt).map_err(|e| e.to_string())?;
    if raw.len() > MAX_PAIRS {
        return Err(format!("{} sentence pairs; the demo takes at most {MAX_PAIRS}", raw.len()));
    }
    let schedule: TrainSchedule = schedule.parse().map_err(|e: morphalign::ibm::IbmError| e.to_string())?;
    let bitext = Bitext::build(&raw, "demo", LoadOptions::default());
    if bitext.is_empty() {
        return Err("no sentence pairs to train on".into());
    }
    // Small corpora leave most table cells at zero.
    let config = ModelConfig { prob_floor: Some(1e-12), ..ModelConfig::default() };
    let outcome = train(&bitext, &schedule, &config, None, |_| {}).map_err(|e| e.to_string())?;
    let aligned = align_corpus(&bitext, &outcome.params, schedule.final_stage()).map_err(|e| e.to_string())?;
    Ok(Trained { bitext, aligned, likelihood: outcome.telemetry })
}

/// Trains on the pasted corpus and returns the final-stage alignments and the
/// per-iteration log-likelihood as JSON.
pub fn align_json(src: &str, tgt: &str, schedule: &str) -> Result<String, String> {
    let t = train_and_align(src, tgt, schedule)?;
    let pairs = t
        .aligned
        .pairs
        .iter()
        .zip(t.bitext.to_raw())
        .map(|(a, r)| PairView {
            line_no: a.line_no,
            source: r.source,
            target: r.target,
            links: a.alignment.links.clone(),
        })
        .collect();
    let view = AlignView { stage: t.aligned.stage, pairs, likelihood: t.likelihood };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

/// Trains on the pasted corpus and returns the non-alignment report as
/// markdown, listing the `top` most non-aligned tokens.
pub fn report_markdown(src: &str, tgt: &str, schedule: &str, top: usize, null_target: bool) -> Result<String, String> {
    let t = train_and_align(src, tgt, schedule)?;
    let side = if null_target { CountSide::Target } else { CountSide::Source };
    let report = AlignmentReport::build(&t.aligned, &t.bitext, side).map_err(|e| e.to_string())?;
    Ok(render_report(&report, ReportFormat::Markdown, Some(top)))
}

#[wasm_bindgen]
pub fn align(src: &str, tgt: &str, schedule: &str) -> Result<String, JsValue> {
    align_json(src, tgt, schedule).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn report(src: &str, tgt: &str, schedule: &str, top: usize, null_target: bool) -> Result<String, JsValue> {
    report_markdown(src, tgt, schedule, top, null_target).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRC: &str = "ne- p+- ti\nne- ka\np+- ka\n";
    const TGT: &str = "yo lo veo\nyo como\nel come\n";

    #[test]
    fn align_returns_links_and_curve() {
        let json: serde_json::Value = serde_json::from_str(&align_json(SRC, TGT, "1:3,2:2").unwrap()).unwrap();
        assert_eq!(json["stage"], "M2");
        assert_eq!(json["pairs"].as_array().unwrap().len(), 3);
        assert_eq!(json["pairs"][0]["links"].as_array().unwrap().len(), 3);
        assert_eq!(json["likelihood"].as_array().unwrap().len(), 5);
    }

    #[test]
    fn report_is_markdown() {
        let md = report_markdown(SRC, TGT, "1:3,2:2,3:1,4:1", 3, false).unwrap();
        assert!(md.starts_with("## demo (M4)"), "{md}");
        assert!(md.contains("| Token | Alig | Non | Diff |"));
    }

    #[test]
    fn bad_input_is_an_error_string() {
        assert!(align_json("a\nb\n", "x\n", "1:1").unwrap_err().contains("line"));
        assert!(align_json(SRC, TGT, "7:1").is_err());
        assert!(report_markdown("", "", "1:1", 5, false).is_err());
    }
}
