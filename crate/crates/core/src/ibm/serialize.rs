//! Versioned JSON model files.
//!
//! Every table is written as `(condition, outcome, probability)` triples sorted
//! lexicographically by condition then outcome. Floats use the shortest
//! round-tripping representation, so save -> load -> save is byte-identical.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tables::{ATable, AbsoluteDistortion, FertilityTable, RelativeDistortion, TRow, TTable, WordClasses};
use super::{ModelConfig, ModelParams, Stage, TrainSchedule};
use crate::corpus::{TokenClass, TokenId, Vocabulary};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelFormatError {
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported model format_version {found} (expected {FORMAT_VERSION})")]
    UnsupportedVersion { found: u64 },
    #[error("model file is missing `format_version`")]
    MissingVersion,
    #[error("inconsistent model file: {0}")]
    Inconsistent(String),
}

/// `(condition, outcome, probability)`.
pub type Triple = (Vec<i64>, i64, f64);

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct VocabEntry {
    pub id: TokenId,
    pub surface: String,
    pub class: TokenClass,
    pub frequency: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct VocabularySnapshot {
    pub source: Vec<VocabEntry>,
    pub target: Vec<VocabEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FertilitySnapshot {
    pub n: Vec<Triple>,
    pub p0: f64,
    pub p1: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RelativeSnapshot {
    pub span: usize,
    pub head: Vec<Triple>,
    pub non_head: Vec<Triple>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ClassSnapshot {
    pub source: Vec<u32>,
    pub target: Vec<u32>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TableSnapshot {
    pub ttable: Vec<Triple>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub atable: Option<Vec<Triple>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fertility: Option<FertilitySnapshot>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub distortion3: Option<Vec<Triple>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub distortion4: Option<RelativeSnapshot>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub classes: Option<ClassSnapshot>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ModelFile {
    pub format_version: u32,
    pub direction_label: String,
    pub stage: Stage,
    pub schedule: String,
    pub seed: u64,
    pub config: ModelConfig,
    pub vocabulary: VocabularySnapshot,
    pub tables: TableSnapshot,
}

/// A trained model together with the vocabularies its ids refer to.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub direction_label: String,
    pub schedule: TrainSchedule,
    pub seed: u64,
    pub src_vocab: Vocabulary,
    pub tgt_vocab: Vocabulary,
    pub params: ModelParams,
}

fn vocab_entries(vocab: &Vocabulary) -> Vec<VocabEntry> {
    vocab
        .iter()
        .map(|(id, surface, info)| VocabEntry {
            id,
            surface: surface.to_string(),
            class: info.class,
            frequency: info.frequency,
        })
        .collect()
}

fn vocab_from_entries(has_null: bool, entries: &[VocabEntry]) -> Result<Vocabulary, ModelFormatError> {
    for (k, entry) in entries.iter().enumerate() {
        if entry.id as usize != k + 1 {
            return Err(ModelFormatError::Inconsistent(format!("vocabulary ids not dense at {:?}", entry.surface)));
        }
    }
    let vocab = Vocabulary::from_entries(has_null, entries.iter().map(|e| (e.surface.clone(), e.frequency)))
        .map_err(|e| ModelFormatError::Inconsistent(e.to_string()))?;
    for entry in entries {
        if vocab.class(entry.id) != Some(entry.class) {
            return Err(ModelFormatError::Inconsistent(format!("class mismatch for {:?}", entry.surface)));
        }
    }
    Ok(vocab)
}

fn sorted(mut triples: Vec<Triple>) -> Vec<Triple> {
    triples.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
    triples
}

impl TrainedModel {
    pub fn to_file(&self) -> ModelFile {
        let p = &self.params;
        let ttable = p
            .ttable
            .rows()
            .iter()
            .enumerate()
            .flat_map(|(e, row)| {
                row.targets.iter().zip(&row.probs).map(move |(&f, &prob)| (vec![e as i64], f as i64, prob))
            })
            .collect();
        let atable = p.atable.as_ref().map(|a| {
            let mut out = Vec::new();
            for ((l, m), block) in a.blocks() {
                for j in 1..=m {
                    for i in 0..=l {
                        out.push((vec![j as i64, l as i64, m as i64], i as i64, block[(j - 1) * (l + 1) + i]));
                    }
                }
            }
            sorted(out)
        });
        let fertility = p.fertility.as_ref().map(|n| FertilitySnapshot {
            n: n.rows()
                .flat_map(|(e, row)| row.iter().enumerate().map(move |(phi, &prob)| (vec![e as i64], phi as i64, prob)))
                .collect(),
            p0: n.p0,
            p1: n.p1,
        });
        let distortion3 = p.distortion3.as_ref().map(|d| {
            let mut out = Vec::new();
            for ((l, m), block) in d.blocks() {
                for i in 1..=l {
                    for j in 1..=m {
                        out.push((vec![i as i64, l as i64, m as i64], j as i64, block[(i - 1) * m + (j - 1)]));
                    }
                }
            }
            sorted(out)
        });
        let distortion4 = p.distortion4.as_ref().map(|d| {
            let span = d.span() as i64;
            RelativeSnapshot {
                span: d.span(),
                head: d
                    .head_rows()
                    .flat_map(|((a, b), row)| {
                        row.iter().enumerate().map(move |(k, &prob)| (vec![a as i64, b as i64], k as i64 - span, prob))
                    })
                    .collect(),
                non_head: d
                    .non_head_rows()
                    .flat_map(|(b, row)| {
                        row.iter().enumerate().map(move |(k, &prob)| (vec![b as i64], k as i64 + 1, prob))
                    })
                    .collect(),
            }
        });
        let classes = (!p.classes.is_universal()).then(|| ClassSnapshot {
            source: p.classes.source_map().to_vec(),
            target: p.classes.target_map().to_vec(),
        });
        ModelFile {
            format_version: FORMAT_VERSION,
            direction_label: self.direction_label.clone(),
            stage: p.stage,
            schedule: self.schedule.to_string(),
            seed: self.seed,
            config: p.config,
            vocabulary: VocabularySnapshot {
                source: vocab_entries(&self.src_vocab),
                target: vocab_entries(&self.tgt_vocab),
            },
            tables: TableSnapshot { ttable, atable, fertility, distortion3, distortion4, classes },
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_file()).expect("model serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<TrainedModel, ModelFormatError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("format_version").and_then(serde_json::Value::as_u64) {
            None => return Err(ModelFormatError::MissingVersion),
            Some(v) if v != FORMAT_VERSION as u64 => return Err(ModelFormatError::UnsupportedVersion { found: v }),
            Some(_) => {}
        }
        let file: ModelFile = serde_json::from_str(text)?;
        TrainedModel::from_file(&file)
    }

    pub fn from_file(file: &ModelFile) -> Result<TrainedModel, ModelFormatError> {
        let bad = |msg: String| ModelFormatError::Inconsistent(msg);
        let src_vocab = vocab_from_entries(true, &file.vocabulary.source)?;
        let tgt_vocab = vocab_from_entries(false, &file.vocabulary.target)?;
        let schedule: TrainSchedule = file.schedule.parse().map_err(|e| bad(format!("{e}")))?;
        let tables = &file.tables;

        let mut rows = vec![TRow::default(); src_vocab.slots()];
        for (cond, f, p) in &tables.ttable {
            let e = *cond.first().ok_or_else(|| bad("empty ttable condition".into()))? as usize;
            let row = rows.get_mut(e).ok_or_else(|| bad(format!("ttable source id {e} out of range")))?;
            if *f < 1 || *f as usize > tgt_vocab.len() {
                return Err(bad(format!("ttable target id {f} out of range")));
            }
            if row.targets.last().is_some_and(|&last| last >= *f as TokenId) {
                return Err(bad("ttable triples are not sorted".into()));
            }
            row.targets.push(*f as TokenId);
            row.probs.push(*p);
        }
        let use_null = file.config.use_null;

        let atable = match &tables.atable {
            None => None,
            Some(triples) => {
                let mut cells: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
                for (cond, i, p) in triples {
                    let [j, l, m] = three(cond).ok_or_else(|| bad("atable condition must be [j,l,m]".into()))?;
                    let block = cells.entry((l, m)).or_insert_with(|| vec![f64::NAN; m * (l + 1)]);
                    let idx = (j.wrapping_sub(1)) * (l + 1) + *i as usize;
                    *block.get_mut(idx).ok_or_else(|| bad("atable index out of range".into()))? = *p;
                }
                check_complete(cells.values(), "atable")?;
                Some(ATable::from_cells(cells, use_null))
            }
        };

        let fertility = match &tables.fertility {
            None => None,
            Some(snap) => {
                let width = file.config.max_fertility + 1;
                let mut probs = vec![Vec::new(); src_vocab.slots()];
                for (cond, phi, p) in &snap.n {
                    let e = *cond.first().ok_or_else(|| bad("empty fertility condition".into()))? as usize;
                    let row = probs.get_mut(e).ok_or_else(|| bad("fertility id out of range".into()))?;
                    if row.is_empty() {
                        *row = vec![f64::NAN; width];
                    }
                    *row.get_mut(*phi as usize).ok_or_else(|| bad("fertility out of range".into()))? = *p;
                }
                check_complete(probs.iter(), "fertility")?;
                Some(FertilityTable::from_parts(probs, snap.p0, snap.p1, file.config.max_fertility))
            }
        };

        let distortion3 = match &tables.distortion3 {
            None => None,
            Some(triples) => {
                let mut cells: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
                for (cond, j, p) in triples {
                    let [i, l, m] = three(cond).ok_or_else(|| bad("distortion condition must be [i,l,m]".into()))?;
                    let block = cells.entry((l, m)).or_insert_with(|| vec![f64::NAN; l * m]);
                    let idx = i.wrapping_sub(1).wrapping_mul(m).wrapping_add((*j as usize).wrapping_sub(1));
                    *block.get_mut(idx).ok_or_else(|| bad("distortion index out of range".into()))? = *p;
                }
                check_complete(cells.values(), "distortion3")?;
                Some(AbsoluteDistortion::from_cells(cells))
            }
        };

        let distortion4 = match &tables.distortion4 {
            None => None,
            Some(snap) => {
                let span = snap.span as i64;
                let mut head: BTreeMap<(u32, u32), Vec<f64>> = BTreeMap::new();
                for (cond, dj, p) in &snap.head {
                    let key = match cond.as_slice() {
                        [a, b] => (*a as u32, *b as u32),
                        _ => return Err(bad("head distortion condition must be [A,B]".into())),
                    };
                    let row = head.entry(key).or_insert_with(|| vec![f64::NAN; 2 * snap.span + 1]);
                    *row.get_mut((dj + span) as usize).ok_or_else(|| bad("head displacement out of range".into()))? =
                        *p;
                }
                let mut non_head: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
                for (cond, dj, p) in &snap.non_head {
                    let key = *cond.first().ok_or_else(|| bad("empty non-head condition".into()))? as u32;
                    let row = non_head.entry(key).or_insert_with(|| vec![f64::NAN; snap.span]);
                    let idx = (*dj as usize).wrapping_sub(1);
                    *row.get_mut(idx).ok_or_else(|| bad("non-head displacement out of range".into()))? = *p;
                }
                check_complete(head.values(), "distortion4 head")?;
                check_complete(non_head.values(), "distortion4 non-head")?;
                Some(RelativeDistortion::from_parts(snap.span, head, non_head))
            }
        };

        let classes = match &tables.classes {
            None => WordClasses::universal(),
            Some(c) => WordClasses::from_parts(c.source.clone(), c.target.clone()),
        };

        let params = ModelParams {
            stage: file.stage,
            config: file.config,
            ttable: TTable::from_rows(rows),
            atable,
            fertility,
            distortion3,
            distortion4,
            classes,
        };
        params.require(file.stage).map_err(|_| bad(format!("tables required by {} are missing", file.stage)))?;
        Ok(TrainedModel {
            direction_label: file.direction_label.clone(),
            schedule,
            seed: file.seed,
            src_vocab,
            tgt_vocab,
            params,
        })
    }
}

fn three(cond: &[i64]) -> Option<[usize; 3]> {
    match cond {
        [a, b, c] if *a >= 0 && *b >= 0 && *c >= 0 => Some([*a as usize, *b as usize, *c as usize]),
        _ => None,
    }
}

fn check_complete<'a>(blocks: impl Iterator<Item = &'a Vec<f64>>, name: &str) -> Result<(), ModelFormatError> {
    for block in blocks {
        if block.iter().any(|p| p.is_nan()) {
            return Err(ModelFormatError::Inconsistent(format!("{name} has missing cells")));
        }
    }
    Ok(())
}
