//! Non-alignment diagnostics: per-token aligned/non-aligned counts and
//! direction-level totals.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aligner::AlignedCorpus;
use crate::corpus::{Bitext, TokenClass, TokenId, Vocabulary};
use crate::ibm::Stage;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("corpus mismatch: {0}")]
    CorpusMismatch(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenAlignmentCounter {
    pub surface: String,
    pub class: TokenClass,
    pub aligned: u64,
    pub non_aligned: u64,
    pub diff: i64,
}

impl TokenAlignmentCounter {
    pub fn new(surface: &str, class: TokenClass, aligned: u64, non_aligned: u64) -> Self {
        TokenAlignmentCounter {
            surface: surface.to_string(),
            class,
            aligned,
            non_aligned,
            diff: aligned as i64 - non_aligned as i64,
        }
    }

    pub fn total(&self) -> u64 {
        self.aligned + self.non_aligned
    }
}

/// Which side of the direction is counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountSide {
    /// Source occurrence is non-aligned iff its fertility is 0.
    #[default]
    Source,
    /// Target occurrence is non-aligned iff it links to NULL.
    Target,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionStats {
    pub tokens: u64,
    pub na_tokens: u64,
    pub na_words: u64,
    pub na_morphemes: u64,
    /// `na_tokens / tokens`, unrounded; 0 for an empty side.
    pub na_rate: f64,
}

impl DirectionStats {
    pub fn from_counts(tokens: u64, na_words: u64, na_morphemes: u64) -> DirectionStats {
        let na_tokens = na_words + na_morphemes;
        assert!(na_tokens <= tokens, "more non-aligned tokens than tokens");
        let na_rate = if tokens == 0 { 0.0 } else { na_tokens as f64 / tokens as f64 };
        DirectionStats { tokens, na_tokens, na_words, na_morphemes, na_rate }
    }

    /// Rate at three decimals, cut toward zero: 2905/4702 prints as `0.617`.
    /// Integer arithmetic, so no binary rounding artifacts.
    pub fn rate_3dp(&self) -> String {
        let thousandths = (self.na_tokens * 1000).checked_div(self.tokens).unwrap_or(0);
        format!("{}.{:03}", thousandths / 1000, thousandths % 1000)
    }
}

pub fn direction_stats(counters: &[TokenAlignmentCounter]) -> DirectionStats {
    let mut tokens = 0;
    let (mut words, mut morphemes) = (0, 0);
    for c in counters {
        tokens += c.total();
        match c.class {
            TokenClass::Word => words += c.non_aligned,
            TokenClass::BoundMorpheme => morphemes += c.non_aligned,
        }
    }
    DirectionStats::from_counts(tokens, words, morphemes)
}

fn check_match(aligned: &AlignedCorpus, bitext: &Bitext) -> Result<(), AnalysisError> {
    if aligned.pairs.len() != bitext.pairs.len() {
        return Err(AnalysisError::CorpusMismatch(format!(
            "{} alignments for {} sentence pairs",
            aligned.pairs.len(),
            bitext.pairs.len()
        )));
    }
    for (a, p) in aligned.pairs.iter().zip(&bitext.pairs) {
        if a.line_no != p.line_no || a.source_len != p.l() || a.alignment.links.len() != p.m() {
            return Err(AnalysisError::CorpusMismatch(format!(
                "alignment for line {} does not fit line {} (l={}, m={})",
                a.line_no,
                p.line_no,
                p.l(),
                p.m()
            )));
        }
        if a.alignment.links.iter().any(|&i| i > p.l()) {
            return Err(AnalysisError::CorpusMismatch(format!("line {}: link beyond source length", p.line_no)));
        }
    }
    Ok(())
}

fn finish(tallies: BTreeMap<TokenId, (u64, u64)>, vocab: &Vocabulary) -> Vec<TokenAlignmentCounter> {
    let mut counters: Vec<_> = tallies
        .into_iter()
        .map(|(id, (aligned, non))| {
            let surface = vocab.decode(id).expect("token id from this vocabulary");
            let class = vocab.class(id).expect("token id from this vocabulary");
            TokenAlignmentCounter::new(surface, class, aligned, non)
        })
        .collect();
    sort_counters(&mut counters);
    counters
}

/// Orders by diff ascending, then surface.
pub fn sort_counters(counters: &mut [TokenAlignmentCounter]) {
    counters.sort_by(|a, b| a.diff.cmp(&b.diff).then_with(|| a.surface.cmp(&b.surface)));
}

/// Per-surface counts over source occurrences. NULL never appears.
pub fn count_source_alignment(
    aligned: &AlignedCorpus,
    bitext: &Bitext,
) -> Result<Vec<TokenAlignmentCounter>, AnalysisError> {
    check_match(aligned, bitext)?;
    let mut tallies: BTreeMap<TokenId, (u64, u64)> = BTreeMap::new();
    for (a, p) in aligned.pairs.iter().zip(&bitext.pairs) {
        let phi = a.alignment.fertilities(p.l());
        for (k, &e) in p.source.iter().enumerate() {
            let entry = tallies.entry(e).or_default();
            if phi[k + 1] > 0 {
                entry.0 += 1;
            } else {
                entry.1 += 1;
            }
        }
    }
    Ok(finish(tallies, &bitext.src_vocab))
}

/// Per-surface counts over target occurrences; NULL-linked ones are non-aligned.
pub fn count_target_alignment(
    aligned: &AlignedCorpus,
    bitext: &Bitext,
) -> Result<Vec<TokenAlignmentCounter>, AnalysisError> {
    check_match(aligned, bitext)?;
    let mut tallies: BTreeMap<TokenId, (u64, u64)> = BTreeMap::new();
    for (a, p) in aligned.pairs.iter().zip(&bitext.pairs) {
        for (&f, &i) in p.target.iter().zip(&a.alignment.links) {
            let entry = tallies.entry(f).or_default();
            if i != 0 {
                entry.0 += 1;
            } else {
                entry.1 += 1;
            }
        }
    }
    Ok(finish(tallies, &bitext.tgt_vocab))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub direction_label: String,
    pub stage: Stage,
    pub side: CountSide,
    pub counters: Vec<TokenAlignmentCounter>,
    pub stats: DirectionStats,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl AlignmentReport {
    pub fn build(aligned: &AlignedCorpus, bitext: &Bitext, side: CountSide) -> Result<AlignmentReport, AnalysisError> {
        let counters = match side {
            CountSide::Source => count_source_alignment(aligned, bitext)?,
            CountSide::Target => count_target_alignment(aligned, bitext)?,
        };
        Ok(AlignmentReport::from_counters(&aligned.direction_label, aligned.stage, side, counters))
    }

    pub fn from_counters(
        direction_label: &str,
        stage: Stage,
        side: CountSide,
        mut counters: Vec<TokenAlignmentCounter>,
    ) -> AlignmentReport {
        sort_counters(&mut counters);
        let stats = direction_stats(&counters);
        let mut notes = Vec::new();
        if stats.na_morphemes > 0 {
            let mut forms: Vec<&str> = counters
                .iter()
                .filter(|c| c.class == TokenClass::BoundMorpheme && c.non_aligned > 0)
                .map(|c| c.surface.as_str())
                .collect();
            let shown = forms.len().min(5);
            let more = forms.len() - shown;
            forms.truncate(shown);
            notes.push(format!(
                "N.a. morph. counts every '-'-marked token on this side, e.g. {}{}",
                forms.join(" "),
                if more > 0 { format!(" (+{more} more)") } else { String::new() }
            ));
        }
        AlignmentReport { direction_label: direction_label.to_string(), stage, side, counters, stats, notes }
    }

    /// The `k` rows with the most negative diff.
    pub fn top_nonaligned(&self, k: usize) -> &[TokenAlignmentCounter] {
        &self.counters[..k.min(self.counters.len())]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Tsv,
    Json,
    Markdown,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Tsv => "tsv",
            ReportFormat::Json => "json",
            ReportFormat::Markdown => "md",
        }
    }

    /// Parses a comma-separated list such as `tsv,json,md`.
    pub fn parse_list(s: &str) -> Result<Vec<ReportFormat>, String> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let f: ReportFormat = part.parse()?;
            if !out.contains(&f) {
                out.push(f);
            }
        }
        if out.is_empty() {
            return Err("no report format given".into());
        }
        Ok(out)
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" => Ok(ReportFormat::Tsv),
            "json" => Ok(ReportFormat::Json),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format {other:?} (expected tsv, json or md)")),
        }
    }
}

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|")
}

pub fn markdown_row(c: &TokenAlignmentCounter) -> String {
    format!("| {} | {} | {} | {} |", md_cell(&c.surface), c.aligned, c.non_aligned, c.diff)
}

pub const STATS_HEADER: [&str; 5] = ["Tokens", "N.a. Tokens", "N.a. words", "N.a. morph.", "N.a./tokens"];

/// Renders the report. `top` limits the token table of the TSV and markdown
/// layouts; JSON always carries every counter.
pub fn render_report(report: &AlignmentReport, format: ReportFormat, top: Option<usize>) -> String {
    let rows = match top {
        Some(k) => report.top_nonaligned(k),
        None => &report.counters[..],
    };
    let s = &report.stats;
    let mut out = String::new();
    match format {
        ReportFormat::Json => {
            out = serde_json::to_string_pretty(report).expect("report serialization cannot fail");
            out.push('\n');
        }
        ReportFormat::Tsv => {
            out.push_str("Token\tAlig\tNon\tDiff\n");
            for c in rows {
                let _ = writeln!(out, "{}\t{}\t{}\t{}", c.surface, c.aligned, c.non_aligned, c.diff);
            }
            out.push('\n');
            let _ = writeln!(out, "# {} {} {:?}", report.direction_label, report.stage, report.side);
            out.push_str(&STATS_HEADER.join("\t"));
            out.push('\n');
            let _ =
                writeln!(out, "{}\t{}\t{}\t{}\t{}", s.tokens, s.na_tokens, s.na_words, s.na_morphemes, s.rate_3dp());
            for note in &report.notes {
                let _ = writeln!(out, "# note: {note}");
            }
        }
        ReportFormat::Markdown => {
            let _ = writeln!(out, "## {} ({})\n", report.direction_label, report.stage);
            out.push_str("| Token | Alig | Non | Diff |\n|---|---:|---:|---:|\n");
            for c in rows {
                out.push_str(&markdown_row(c));
                out.push('\n');
            }
            out.push('\n');
            let _ = writeln!(out, "| {} |", STATS_HEADER.join(" | "));
            out.push_str("|---:|---:|---:|---:|---:|\n");
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} |",
                s.tokens,
                s.na_tokens,
                s.na_words,
                s.na_morphemes,
                s.rate_3dp()
            );
            if !report.notes.is_empty() {
                out.push('\n');
                for note in &report.notes {
                    let _ = writeln!(out, "- {note}");
                }
            }
        }
    }
    out
}

/// One row of a multi-direction summary. `error` is set when the direction failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub direction_label: String,
    pub stats: Option<DirectionStats>,
    pub error: Option<String>,
}

pub fn render_summary(rows: &[SummaryRow], format: ReportFormat) -> String {
    let mut out = String::new();
    let cells = |r: &SummaryRow| -> Vec<String> {
        match (&r.stats, &r.error) {
            (Some(s), _) => vec![
                s.tokens.to_string(),
                s.na_tokens.to_string(),
                s.na_words.to_string(),
                s.na_morphemes.to_string(),
                s.rate_3dp(),
            ],
            (None, e) => {
                let mut v = vec!["-".to_string(); 4];
                v.push(format!("error: {}", e.as_deref().unwrap_or("unknown")));
                v
            }
        }
    };
    match format {
        ReportFormat::Json => {
            out = serde_json::to_string_pretty(rows).expect("summary serialization cannot fail");
            out.push('\n');
        }
        ReportFormat::Tsv => {
            let _ = writeln!(out, "Direction\t{}", STATS_HEADER.join("\t"));
            for r in rows {
                let _ = writeln!(out, "{}\t{}", r.direction_label, cells(r).join("\t"));
            }
        }
        ReportFormat::Markdown => {
            let _ = writeln!(out, "| Direction | {} |", STATS_HEADER.join(" | "));
            out.push_str("|---|---:|---:|---:|---:|---:|\n");
            for r in rows {
                let c: Vec<String> = cells(r).iter().map(|s| md_cell(s)).collect();
                let _ = writeln!(out, "| {} | {} |", md_cell(&r.direction_label), c.join(" | "));
            }
        }
    }
    out
}
