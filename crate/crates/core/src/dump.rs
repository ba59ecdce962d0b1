//! Alignment dumps.
//!
//! Text: `line_no ||| source tokens ||| target tokens ||| a_1 ... a_m`, with 0
//! for NULL. JSON lines carry the same fields plus coverage sets and the score.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aligner::{AlignedCorpus, AlignedPair, Alignment};
use crate::corpus::{Bitext, RawPair};
use crate::ibm::Stage;

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("dump line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dump does not match the corpus: {0}")]
    Mismatch(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DumpRecord {
    pub line_no: usize,
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub alignment: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JsonRecord {
    pub line_no: usize,
    pub stage: Stage,
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub alignment: Vec<usize>,
    /// `coverage[i]` lists the 1-based target positions linked to cept `i`.
    pub coverage: Vec<Vec<usize>>,
    pub score: Option<f64>,
}

/// Raw pairs matching each aligned pair by line number. `raw` may contain
/// extra lines (pairs dropped at load time); they are skipped.
fn matched<'a>(aligned: &AlignedCorpus, raw: &'a [RawPair]) -> Vec<&'a RawPair> {
    let mut it = raw.iter();
    aligned
        .pairs
        .iter()
        .map(|a| {
            it.by_ref()
                .find(|r| r.line_no == a.line_no)
                .unwrap_or_else(|| panic!("no raw pair for aligned line {}", a.line_no))
        })
        .collect()
}

/// Dump records; surfaces come from `raw` so unknown tokens keep their spelling.
pub fn records(aligned: &AlignedCorpus, raw: &[RawPair]) -> Vec<DumpRecord> {
    aligned
        .pairs
        .iter()
        .zip(matched(aligned, raw))
        .map(|(a, r)| DumpRecord {
            line_no: a.line_no,
            source: r.source.clone(),
            target: r.target.clone(),
            alignment: a.alignment.links.clone(),
        })
        .collect()
}

pub fn write_text(aligned: &AlignedCorpus, raw: &[RawPair]) -> String {
    let mut out = String::new();
    for r in records(aligned, raw) {
        let links: Vec<String> = r.alignment.iter().map(usize::to_string).collect();
        let _ = writeln!(
            out,
            "{} ||| {} ||| {} ||| {}",
            r.line_no,
            r.source.join(" "),
            r.target.join(" "),
            links.join(" ")
        );
    }
    out
}

pub fn write_jsonl(aligned: &AlignedCorpus, raw: &[RawPair]) -> String {
    let mut out = String::new();
    for (a, r) in aligned.pairs.iter().zip(matched(aligned, raw)) {
        let record = JsonRecord {
            line_no: a.line_no,
            stage: aligned.stage,
            source: r.source.clone(),
            target: r.target.clone(),
            alignment: a.alignment.links.clone(),
            coverage: a.coverage(),
            score: a.alignment.score.is_finite().then_some(a.alignment.score),
        };
        out.push_str(&serde_json::to_string(&record).expect("record serialization cannot fail"));
        out.push('\n');
    }
    out
}

pub fn parse_text(text: &str) -> Result<Vec<DumpRecord>, DumpError> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line_idx = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| DumpError::Parse { line: line_idx, message };
        let fields: Vec<&str> = line.split("|||").map(str::trim).collect();
        let [line_no, src, tgt, links] = fields[..] else {
            return Err(err(format!("expected 4 fields separated by |||, found {}", fields.len())));
        };
        let line_no = line_no.parse().map_err(|_| err(format!("bad line number {line_no:?}")))?;
        let alignment = links
            .split_whitespace()
            .map(|a| a.parse::<usize>().map_err(|_| err(format!("bad link {a:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let source: Vec<String> = src.split_whitespace().map(String::from).collect();
        let target: Vec<String> = tgt.split_whitespace().map(String::from).collect();
        if alignment.len() != target.len() {
            return Err(err(format!("{} links for {} target tokens", alignment.len(), target.len())));
        }
        if alignment.iter().any(|&i| i > source.len()) {
            return Err(err("link beyond source length".into()));
        }
        out.push(DumpRecord { line_no, source, target, alignment });
    }
    Ok(out)
}

pub fn parse_jsonl(text: &str) -> Result<Vec<DumpRecord>, DumpError> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: JsonRecord =
            serde_json::from_str(line).map_err(|e| DumpError::Parse { line: k + 1, message: e.to_string() })?;
        out.push(DumpRecord { line_no: r.line_no, source: r.source, target: r.target, alignment: r.alignment });
    }
    Ok(out)
}

/// Picks the parser from the content: JSON lines start with `{`.
pub fn parse_any(text: &str) -> Result<Vec<DumpRecord>, DumpError> {
    if text.trim_start().starts_with('{') {
        parse_jsonl(text)
    } else {
        parse_text(text)
    }
}

/// Rebuilds an aligned corpus after checking every record against `bitext`.
pub fn to_aligned(records: &[DumpRecord], bitext: &Bitext, stage: Stage) -> Result<AlignedCorpus, DumpError> {
    if records.len() != bitext.pairs.len() {
        return Err(DumpError::Mismatch(format!(
            "{} dump records for {} sentence pairs",
            records.len(),
            bitext.pairs.len()
        )));
    }
    let mut pairs = Vec::with_capacity(records.len());
    for (k, (r, raw)) in records.iter().zip(bitext.to_raw()).enumerate() {
        let (src, line_no) = (raw.source, raw.line_no);
        if r.line_no != line_no || r.source != src || r.target != raw.target {
            return Err(DumpError::Mismatch(format!(
                "record {} (line {}) differs from corpus line {line_no}",
                k + 1,
                r.line_no
            )));
        }
        pairs.push(AlignedPair {
            line_no,
            source_len: src.len(),
            alignment: Alignment { links: r.alignment.clone(), score: f64::NAN },
        });
    }
    Ok(AlignedCorpus { direction_label: bitext.direction_label.clone(), stage, pairs })
}
