//! Viterbi alignment extraction.
//!
//! Models 1 and 2 factor over target positions, so the best alignment is found
//! position by position. Models 3 and 4 are searched by hill-climbing over the
//! move/swap neighborhood, starting from the exact Model 2 alignment.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Bitext, SentencePair, TokenId, UNKNOWN_ID};
use crate::ibm::{score_alignment, IbmError, ModelParams, Stage};
use crate::parallel::map_in_order;

#[derive(Debug, Error)]
pub enum AlignError {
    #[error(transparent)]
    Model(#[from] IbmError),
    #[error("line {line_no}: source token id {id} is not in the model vocabulary")]
    UnknownToken { line_no: usize, id: TokenId },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HillClimbConfig {
    /// Upper bound on accepted moves per search.
    pub max_steps: usize,
}

impl Default for HillClimbConfig {
    fn default() -> Self {
        HillClimbConfig { max_steps: 10_000 }
    }
}

/// `links[j-1] = a_j` in `0..=l`; 0 is the NULL cept.
#[derive(Clone, Debug, PartialEq)]
pub struct Alignment {
    pub links: Vec<usize>,
    /// Log-probability under the stage that produced the alignment.
    pub score: f64,
}

impl Alignment {
    pub fn fertilities(&self, l: usize) -> Vec<usize> {
        crate::ibm::score::fertilities(&self.links, l)
    }

    /// For each cept `i` in `0..=l`, the 1-based target positions aligned to it.
    pub fn coverage(&self, l: usize) -> Vec<Vec<usize>> {
        let mut sets = vec![Vec::new(); l + 1];
        for (j, &i) in self.links.iter().enumerate() {
            sets[i].push(j + 1);
        }
        sets
    }
}

/// Exact best alignment for Models 1 and 2. Ties go to the smallest cept index,
/// so NULL wins ties.
pub fn viterbi_exact(
    source: &[TokenId],
    target: &[TokenId],
    params: &ModelParams,
    stage: Stage,
) -> Result<Alignment, IbmError> {
    if stage > Stage::M2 {
        return Err(IbmError::StageMismatch { requested: stage, available: Stage::M2 });
    }
    params.require(stage)?;
    let (l, m) = (source.len(), target.len());
    let first = params.first_cept();
    let links: Vec<usize> = target
        .iter()
        .enumerate()
        .map(|(j, &f)| {
            let weight = |i: usize| {
                let t = params.t(ModelParams::cept_word(source, i), f);
                match stage {
                    Stage::M1 => t,
                    _ => t * params.a(i, j + 1, l, m),
                }
            };
            let mut best = first.min(l);
            let mut best_w = weight(best);
            for i in best + 1..=l {
                let w = weight(i);
                if w > best_w {
                    best = i;
                    best_w = w;
                }
            }
            best
        })
        .collect();
    let score = score_alignment(source, target, &links, params, stage)?;
    Ok(Alignment { links, score })
}

/// Visits every neighbor of `links`: each single-position move to another cept
/// in `0..=l`, then each swap of two positions with different cepts. The slice
/// passed to `visit` is `links` modified in place and restored afterwards.
pub(crate) fn for_each_neighbor(links: &mut [usize], l: usize, mut visit: impl FnMut(&[usize])) {
    let m = links.len();
    for j in 0..m {
        let original = links[j];
        for i in 0..=l {
            if i != original {
                links[j] = i;
                visit(links);
            }
        }
        links[j] = original;
    }
    for j in 0..m {
        for k in j + 1..m {
            if links[j] != links[k] {
                links.swap(j, k);
                visit(links);
                links.swap(j, k);
            }
        }
    }
}

/// The move/swap neighborhood of `links`, excluding `links` itself.
pub fn neighbors(links: &[usize], l: usize) -> Vec<Vec<usize>> {
    let mut scratch = links.to_vec();
    let mut out = Vec::new();
    for_each_neighbor(&mut scratch, l, |n| out.push(n.to_vec()));
    out
}

/// Greedy ascent from `start`: repeatedly takes the best strictly improving
/// neighbor (first in enumeration order on ties) until none exists.
pub fn hillclimb(
    source: &[TokenId],
    target: &[TokenId],
    params: &ModelParams,
    stage: Stage,
    start: &[usize],
    config: &HillClimbConfig,
) -> Result<Alignment, IbmError> {
    params.require(stage)?;
    let l = source.len();
    let mut current = start.to_vec();
    let mut current_score = score_alignment(source, target, &current, params, stage)?;
    for _ in 0..config.max_steps {
        let mut best: Option<(Vec<usize>, f64)> = None;
        let mut scratch = current.clone();
        let mut failure = None;
        for_each_neighbor(&mut scratch, l, |n| match score_alignment(source, target, n, params, stage) {
            Ok(s) => {
                let beats_best = best.as_ref().is_none_or(|(_, b)| s > *b);
                if s > current_score && beats_best {
                    best = Some((n.to_vec(), s));
                }
            }
            Err(e) => failure = Some(e),
        });
        if let Some(e) = failure {
            return Err(e);
        }
        match best {
            Some((links, score)) => {
                current = links;
                current_score = score;
            }
            None => return Ok(Alignment { links: current, score: current_score }),
        }
    }
    log::warn!("hill-climbing stopped after {} steps without converging", config.max_steps);
    Ok(Alignment { links: current, score: current_score })
}

/// Best alignment for one pair at `stage`.
pub fn align_pair(
    source: &[TokenId],
    target: &[TokenId],
    params: &ModelParams,
    stage: Stage,
) -> Result<Alignment, IbmError> {
    match stage {
        Stage::M1 | Stage::M2 => viterbi_exact(source, target, params, stage),
        Stage::M3 | Stage::M4 => {
            let start = viterbi_exact(source, target, params, Stage::M2)?;
            hillclimb(source, target, params, stage, &start.links, &params.config.hillclimb)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignedPair {
    pub line_no: usize,
    /// Source length `l`.
    pub source_len: usize,
    pub alignment: Alignment,
}

impl AlignedPair {
    pub fn coverage(&self) -> Vec<Vec<usize>> {
        self.alignment.coverage(self.source_len)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignedCorpus {
    pub direction_label: String,
    pub stage: Stage,
    pub pairs: Vec<AlignedPair>,
}

/// Aligns `pair`, NULL-aligning target positions whose token is unknown and
/// leaving unknown source tokens uncovered.
fn align_with_unknowns(pair: &SentencePair, params: &ModelParams, stage: Stage) -> Result<Alignment, AlignError> {
    let src_slots = params.ttable.rows().len() as TokenId;
    if let Some(&id) = pair.source.iter().find(|&&id| id != UNKNOWN_ID && id >= src_slots) {
        return Err(AlignError::UnknownToken { line_no: pair.line_no, id });
    }
    let has_unknown = pair.source.contains(&UNKNOWN_ID) || pair.target.contains(&UNKNOWN_ID);
    if !has_unknown {
        return Ok(align_pair(&pair.source, &pair.target, params, stage)?);
    }
    let kept_src: Vec<usize> = (0..pair.l()).filter(|&i| pair.source[i] != UNKNOWN_ID).collect();
    let kept_tgt: Vec<usize> = (0..pair.m()).filter(|&j| pair.target[j] != UNKNOWN_ID).collect();
    let mut links = vec![0; pair.m()];
    let mut score = f64::NEG_INFINITY;
    if !kept_src.is_empty() && !kept_tgt.is_empty() {
        let src: Vec<TokenId> = kept_src.iter().map(|&i| pair.source[i]).collect();
        let tgt: Vec<TokenId> = kept_tgt.iter().map(|&j| pair.target[j]).collect();
        let sub = align_pair(&src, &tgt, params, stage)?;
        for (k, &j) in kept_tgt.iter().enumerate() {
            links[j] = match sub.links[k] {
                0 => 0,
                i => kept_src[i - 1] + 1,
            };
        }
        score = sub.score;
    }
    Ok(Alignment { links, score })
}

/// Aligns every pair at `stage`. Output order matches input order.
pub fn align_corpus(bitext: &Bitext, params: &ModelParams, stage: Stage) -> Result<AlignedCorpus, AlignError> {
    params.require(stage)?;
    let mut pairs = Vec::with_capacity(bitext.len());
    map_in_order(
        &bitext.pairs,
        |pair| {
            align_with_unknowns(pair, params, stage).map(|alignment| AlignedPair {
                line_no: pair.line_no,
                source_len: pair.l(),
                alignment,
            })
        },
        |aligned| pairs.push(aligned),
    )?;
    Ok(AlignedCorpus { direction_label: bitext.direction_label.clone(), stage, pairs })
}
