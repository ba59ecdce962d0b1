//! IBM Models 1-4: parameter tables, staged EM training and alignment scoring.
//!
//! Notation follows the usual convention: `e` is the conditioning (source)
//! sentence of length `l` with the NULL cept at position 0, `f` is the generated
//! (target) sentence of length `m`, and `a_j` is the cept that generates `f_j`.
//! The sentence-length factor `P(m|e)` is taken as 1; it is constant for a pair
//! and cancels in every posterior and argmax.

mod em;
pub(crate) mod score;
pub mod serialize;
pub mod tables;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aligner::HillClimbConfig;
use crate::corpus::{Bitext, TokenId, NULL_ID};

pub use em::{
    init_uniform, m1_em_iteration, m2_em_iteration, m3_em_iteration, m4_em_iteration, transfer_to_m2, transfer_to_m3,
    transfer_to_m4,
};
pub use score::{score_alignment, sentence_log_prob};
pub use tables::{ATable, AbsoluteDistortion, FertilityTable, RelativeDistortion, TRow, TTable, WordClasses};
pub use train::{train, IterationRecord, TrainOutcome};

#[derive(Debug, Error)]
pub enum IbmError {
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("line {line_no}: target position {position} has zero probability under every cept")]
    NumericUnderflow { line_no: usize, position: usize },
    #[error("stage mismatch: requested {requested}, model provides up to {available}")]
    StageMismatch { requested: Stage, available: Stage },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    M1,
    M2,
    M3,
    M4,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::M1, Stage::M2, Stage::M3, Stage::M4];

    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_number(n: u8) -> Option<Stage> {
        Stage::ALL.get(n.checked_sub(1)? as usize).copied()
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "M{}", self.number())
    }
}

impl FromStr for Stage {
    type Err = IbmError;

    /// Accepts `1`, `m1` or `M1`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s.trim().trim_start_matches(['m', 'M']);
        digits
            .parse::<u8>()
            .ok()
            .and_then(Stage::from_number)
            .ok_or_else(|| IbmError::InvalidSchedule(format!("unknown stage {s:?}")))
    }
}

/// Ordered `(stage, iterations)` list, e.g. `1:5,2:5,3:3,4:3`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainSchedule {
    steps: Vec<(Stage, usize)>,
}

impl TrainSchedule {
    pub fn new(steps: Vec<(Stage, usize)>) -> Result<Self, IbmError> {
        if steps.is_empty() {
            return Err(IbmError::InvalidSchedule("no stages".into()));
        }
        for w in steps.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(IbmError::InvalidSchedule(format!(
                    "stages must be strictly ascending ({} after {})",
                    w[1].0, w[0].0
                )));
            }
        }
        if let Some((stage, _)) = steps.iter().find(|(_, n)| *n == 0) {
            return Err(IbmError::InvalidSchedule(format!("{stage} has zero iterations")));
        }
        Ok(TrainSchedule { steps })
    }

    pub fn steps(&self) -> &[(Stage, usize)] {
        &self.steps
    }

    pub fn final_stage(&self) -> Stage {
        self.steps.last().map(|s| s.0).unwrap_or(Stage::M1)
    }
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule { steps: vec![(Stage::M1, 5), (Stage::M2, 5), (Stage::M3, 3), (Stage::M4, 3)] }
    }
}

impl FromStr for TrainSchedule {
    type Err = IbmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let steps = s
            .split(',')
            .filter(|part| !part.trim().is_empty())
            .map(|part| {
                let (stage, iters) = part
                    .split_once(':')
                    .ok_or_else(|| IbmError::InvalidSchedule(format!("expected stage:iterations, got {part:?}")))?;
                let iters = iters
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| IbmError::InvalidSchedule(format!("bad iteration count in {part:?}")))?;
                Ok((stage.parse::<Stage>()?, iters))
            })
            .collect::<Result<Vec<_>, IbmError>>()?;
        TrainSchedule::new(steps)
    }
}

impl fmt::Display for TrainSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.steps.iter().map(|(s, n)| format!("{}:{}", s.number(), n)).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Whether target tokens may align to the NULL cept.
    pub use_null: bool,
    pub max_fertility: usize,
    /// Lower bound applied to every table lookup; `None` disables it.
    pub prob_floor: Option<f64>,
    pub max_len: usize,
    pub p1_init: f64,
    pub hillclimb: HillClimbConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            use_null: true,
            max_fertility: 9,
            prob_floor: None,
            max_len: crate::corpus::DEFAULT_MAX_LEN,
            p1_init: 0.05,
            hillclimb: HillClimbConfig::default(),
        }
    }
}

impl ModelConfig {
    /// Floor value used by `--prob-floor`.
    pub const DEFAULT_FLOOR: f64 = 1e-12;
}

/// Parameters for one training stage. Lower-stage tables are retained so a
/// model can be scored or aligned at any stage up to `stage`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub stage: Stage,
    pub config: ModelConfig,
    pub ttable: TTable,
    pub atable: Option<ATable>,
    pub fertility: Option<FertilityTable>,
    pub distortion3: Option<AbsoluteDistortion>,
    pub distortion4: Option<RelativeDistortion>,
    pub classes: WordClasses,
}

impl ModelParams {
    fn floor(&self, p: f64) -> f64 {
        match self.config.prob_floor {
            Some(floor) => p.max(floor),
            None => p,
        }
    }

    pub fn t(&self, e: TokenId, f: TokenId) -> f64 {
        self.floor(self.ttable.get(e, f))
    }

    /// `a(i|j,l,m)`; uniform when no alignment table is present.
    pub fn a(&self, i: usize, j: usize, l: usize, m: usize) -> f64 {
        if i == 0 && !self.config.use_null {
            return 0.0;
        }
        let p = match &self.atable {
            Some(table) => table.get(i, j, l, m),
            None if self.config.use_null => 1.0 / (l + 1) as f64,
            None => 1.0 / l as f64,
        };
        self.floor(p)
    }

    pub fn n(&self, phi: usize, e: TokenId) -> f64 {
        if phi > self.config.max_fertility {
            return 0.0;
        }
        self.floor(self.fertility.as_ref().map_or(0.0, |n| n.get(phi, e)))
    }

    pub fn d3(&self, j: usize, i: usize, l: usize, m: usize) -> f64 {
        self.floor(self.distortion3.as_ref().map_or(0.0, |d| d.get(j, i, l, m)))
    }

    pub fn d_head(&self, dj: i64, a: u32, b: u32) -> f64 {
        self.floor(self.distortion4.as_ref().map_or(0.0, |d| d.head(dj, a, b)))
    }

    pub fn d_non_head(&self, dj: i64, b: u32) -> f64 {
        self.floor(self.distortion4.as_ref().map_or(0.0, |d| d.non_head(dj, b)))
    }

    pub fn p0_p1(&self) -> (f64, f64) {
        self.fertility.as_ref().map_or((1.0, 0.0), |n| (n.p0, n.p1))
    }

    /// Checks that `stage` can be served by these parameters.
    pub fn require(&self, stage: Stage) -> Result<(), IbmError> {
        let present = match stage {
            Stage::M1 => true,
            Stage::M2 => self.atable.is_some(),
            Stage::M3 => self.atable.is_some() && self.fertility.is_some() && self.distortion3.is_some(),
            Stage::M4 => self.atable.is_some() && self.fertility.is_some() && self.distortion4.is_some(),
        };
        if stage > self.stage || !present {
            return Err(IbmError::StageMismatch { requested: stage, available: self.stage });
        }
        Ok(())
    }

    /// First cept index allowed by the NULL setting.
    pub fn first_cept(&self) -> usize {
        usize::from(!self.config.use_null)
    }

    /// Source id at cept `i` (0 is NULL).
    pub fn cept_word(source: &[TokenId], i: usize) -> TokenId {
        if i == 0 {
            NULL_ID
        } else {
            source[i - 1]
        }
    }
}

pub(crate) fn check_nonempty(bitext: &Bitext) -> Result<(), IbmError> {
    if bitext.is_empty() {
        Err(IbmError::EmptyCorpus)
    } else {
        Ok(())
    }
}
