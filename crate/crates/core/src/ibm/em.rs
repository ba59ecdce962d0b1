//! EM iterations and stage transfers.
//!
//! Every E-step maps sentence pairs to per-pair expected counts (in parallel,
//! see [`crate::parallel`]) and folds them into the count tables strictly in
//! corpus order, so results do not depend on the number of workers.

use std::collections::BTreeMap;

use super::score::{fertilities, for_each_displacement, Displacement};
use super::tables::{ln_factor, ATable, AbsoluteDistortion, FertilityTable, RelativeDistortion, TTable};
use super::{check_nonempty, score_alignment, IbmError, ModelConfig, ModelParams, Stage, WordClasses};
use crate::aligner::{for_each_neighbor, hillclimb, viterbi_exact, HillClimbConfig};
use crate::corpus::{Bitext, SentencePair, TokenId};
use crate::parallel::map_in_order;

fn expect_stage(params: &ModelParams, stage: Stage) -> Result<(), IbmError> {
    if params.stage != stage {
        return Err(IbmError::StageMismatch { requested: stage, available: params.stage });
    }
    params.require(stage)
}

/// Model 1 parameters with `t(f|e) = 1/|F_e|` over co-occurring target types.
pub fn init_uniform(bitext: &Bitext, config: &ModelConfig) -> Result<ModelParams, IbmError> {
    check_nonempty(bitext)?;
    Ok(ModelParams {
        stage: Stage::M1,
        config: *config,
        ttable: TTable::uniform_cooccurrence(bitext, config.use_null),
        atable: None,
        fertility: None,
        distortion3: None,
        distortion4: None,
        classes: WordClasses::universal(),
    })
}

struct LexicalCounts {
    lex: Vec<(TokenId, TokenId, f64)>,
    /// Posteriors `P(a_j = i)` laid out like the alignment table block for `(l, m)`.
    align: Option<Vec<f64>>,
    loglik: f64,
}

/// Exact E-step for one pair under Model 1 or 2.
fn lexical_estep(pair: &SentencePair, params: &ModelParams, stage: Stage) -> Result<LexicalCounts, IbmError> {
    let (l, m) = (pair.l(), pair.m());
    let first = params.first_cept();
    let mut lex = Vec::with_capacity(m * (l + 1));
    let mut align = (stage == Stage::M2).then(|| vec![0.0; m * (l + 1)]);
    let mut weights = vec![0.0; l + 1];
    let mut loglik = 0.0;
    for (j, &f) in pair.target.iter().enumerate() {
        let mut total = 0.0;
        for (i, w) in weights.iter_mut().enumerate().skip(first) {
            let t = params.t(ModelParams::cept_word(&pair.source, i), f);
            *w = match stage {
                Stage::M1 => t,
                _ => t * params.a(i, j + 1, l, m),
            };
            total += *w;
        }
        if !(total > 0.0 && total.is_finite()) {
            return Err(IbmError::NumericUnderflow { line_no: pair.line_no, position: j + 1 });
        }
        loglik += ln_factor(total);
        for i in first..=l {
            let posterior = weights[i] / total;
            lex.push((ModelParams::cept_word(&pair.source, i), f, posterior));
            if let Some(block) = align.as_mut() {
                block[j * (l + 1) + i] = posterior;
            }
        }
    }
    if stage == Stage::M1 {
        loglik -= m as f64 * ((l + 1 - first) as f64).ln();
    }
    Ok(LexicalCounts { lex, align, loglik })
}

fn lexical_iteration(bitext: &Bitext, params: &ModelParams, stage: Stage) -> Result<(ModelParams, f64), IbmError> {
    expect_stage(params, stage)?;
    check_nonempty(bitext)?;
    let mut t_counts = params.ttable.zero_counts();
    let mut a_counts = params.atable.as_ref().map(ATable::zero_counts).unwrap_or_default();
    let mut loglik = 0.0;
    map_in_order(
        &bitext.pairs,
        |pair| lexical_estep(pair, params, stage).map(|c| (pair.l(), pair.m(), c)),
        |(l, m, counts)| {
            loglik += counts.loglik;
            for (e, f, w) in counts.lex {
                params.ttable.add_count(&mut t_counts, e, f, w);
            }
            if let (Some(block), Some(acc)) = (counts.align, a_counts.get_mut(&(l, m))) {
                acc.iter_mut().zip(block).for_each(|(a, b)| *a += b);
            }
        },
    )?;
    let mut next = params.clone();
    next.ttable.normalize_from(&t_counts);
    if let Some(atable) = next.atable.as_mut() {
        atable.normalize_from(&a_counts);
    }
    Ok((next, loglik))
}

/// One exact EM step of Model 1. Returns the updated parameters and the corpus
/// log-likelihood under the input parameters.
pub fn m1_em_iteration(bitext: &Bitext, params: &ModelParams) -> Result<(ModelParams, f64), IbmError> {
    lexical_iteration(bitext, params, Stage::M1)
}

/// One exact EM step of Model 2.
pub fn m2_em_iteration(bitext: &Bitext, params: &ModelParams) -> Result<(ModelParams, f64), IbmError> {
    lexical_iteration(bitext, params, Stage::M2)
}

/// Promotes Model 1 parameters to Model 2 with a uniform alignment table.
pub fn transfer_to_m2(bitext: &Bitext, params: &ModelParams) -> Result<ModelParams, IbmError> {
    expect_stage(params, Stage::M1)?;
    let mut next = params.clone();
    next.stage = Stage::M2;
    next.atable = Some(ATable::uniform(bitext, params.config.use_null));
    Ok(next)
}

/// Promotes Model 2 parameters to Model 3: fertilities are counted from the
/// Model 2 Viterbi alignments, absolute distortion is the column-normalized
/// alignment table, and `p1` starts at the configured value.
pub fn transfer_to_m3(bitext: &Bitext, params: &ModelParams) -> Result<ModelParams, IbmError> {
    expect_stage(params, Stage::M2)?;
    let max_fertility = params.config.max_fertility;
    let mut counts = vec![vec![0.0; max_fertility + 1]; params.ttable.rows().len()];
    map_in_order(
        &bitext.pairs,
        |pair| {
            let a = viterbi_exact(&pair.source, &pair.target, params, Stage::M2)?;
            let phi = a.fertilities(pair.l());
            Ok::<_, IbmError>(pair.source.iter().copied().zip(phi.into_iter().skip(1)).collect::<Vec<_>>())
        },
        |observed| {
            for (e, phi) in observed {
                if phi <= max_fertility {
                    counts[e as usize][phi] += 1.0;
                }
            }
        },
    )?;
    let p1 = if params.config.use_null { params.config.p1_init } else { 0.0 };
    let atable = params.atable.as_ref().expect("checked by expect_stage");
    let mut next = params.clone();
    next.stage = Stage::M3;
    next.fertility = Some(FertilityTable::from_counts(&counts, max_fertility, p1));
    next.distortion3 = Some(AbsoluteDistortion::from_alignment_table(atable));
    Ok(next)
}

/// Promotes Model 3 parameters to Model 4 with uniform relative distortion
/// tables over displacements `-max_len..=max_len`.
pub fn transfer_to_m4(_bitext: &Bitext, params: &ModelParams) -> Result<ModelParams, IbmError> {
    expect_stage(params, Stage::M3)?;
    let mut next = params.clone();
    next.stage = Stage::M4;
    next.distortion4 = Some(RelativeDistortion::uniform(params.config.max_len, &params.classes));
    Ok(next)
}

#[derive(Default)]
struct FertilityCounts {
    lex: BTreeMap<(TokenId, TokenId), f64>,
    fert: BTreeMap<(TokenId, usize), f64>,
    null: (f64, f64),
    absolute: Vec<f64>,
    head: BTreeMap<(u32, u32, i64), f64>,
    non_head: BTreeMap<(u32, i64), f64>,
    loglik: f64,
    empty: bool,
}

/// Approximate E-step for one pair under Model 3 or 4: hill-climb from the
/// Model 2 Viterbi alignment, then collect counts over the best alignment and
/// its move/swap neighbors, weighted by their normalized probabilities.
fn fertility_estep(
    pair: &SentencePair,
    params: &ModelParams,
    stage: Stage,
    config: &HillClimbConfig,
) -> Result<FertilityCounts, IbmError> {
    let (source, target) = (&pair.source, &pair.target);
    let (l, m) = (pair.l(), pair.m());
    let start = viterbi_exact(source, target, params, Stage::M2)?;
    let best = hillclimb(source, target, params, stage, &start.links, config)?;

    let mut scores = vec![best.score];
    let mut scratch = best.links.clone();
    let mut failure = None;
    for_each_neighbor(&mut scratch, l, |n| match score_alignment(source, target, n, params, stage) {
        Ok(s) => scores.push(s),
        Err(e) => failure = Some(e),
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut counts = FertilityCounts { absolute: vec![0.0; l * m], ..Default::default() };
    if max == f64::NEG_INFINITY {
        counts.empty = true;
        return Ok(counts);
    }
    let norm: f64 = scores.iter().map(|s| (s - max).exp()).sum();
    let lse = max + norm.ln();
    counts.loglik = lse;

    let mut accumulate = |links: &[usize], w: f64| {
        if w == 0.0 {
            return;
        }
        for (&i, &f) in links.iter().zip(target) {
            *counts.lex.entry((ModelParams::cept_word(source, i), f)).or_insert(0.0) += w;
        }
        let phi = fertilities(links, l);
        for i in 1..=l {
            *counts.fert.entry((source[i - 1], phi[i])).or_insert(0.0) += w;
        }
        if params.config.use_null {
            counts.null.0 += w * (m - 2 * phi[0]) as f64;
            counts.null.1 += w * phi[0] as f64;
        }
        match stage {
            Stage::M3 => {
                for (j, &i) in links.iter().enumerate() {
                    if i != 0 {
                        counts.absolute[(i - 1) * m + j] += w;
                    }
                }
            }
            _ => for_each_displacement(source, target, links, &params.classes, |event| match event {
                Displacement::Head { dj, prev_class, class } => {
                    *counts.head.entry((prev_class, class, dj)).or_insert(0.0) += w;
                }
                Displacement::NonHead { dj, class } => {
                    *counts.non_head.entry((class, dj)).or_insert(0.0) += w;
                }
            }),
        }
    };

    let weight = |s: f64| {
        if s == f64::NEG_INFINITY {
            0.0
        } else {
            (s - lse).exp()
        }
    };
    accumulate(&best.links, weight(scores[0]));
    let mut k = 1;
    let mut scratch = best.links.clone();
    for_each_neighbor(&mut scratch, l, |n| {
        accumulate(n, weight(scores[k]));
        k += 1;
    });
    Ok(counts)
}

fn fertility_iteration(
    bitext: &Bitext,
    params: &ModelParams,
    stage: Stage,
    config: &HillClimbConfig,
) -> Result<(ModelParams, f64), IbmError> {
    expect_stage(params, stage)?;
    check_nonempty(bitext)?;
    let fertility = params.fertility.as_ref().expect("checked by expect_stage");
    let mut t_counts = params.ttable.zero_counts();
    let mut n_counts = fertility.zero_counts();
    let mut null_counts = (0.0, 0.0);
    let mut d3_counts = params.distortion3.as_ref().map(AbsoluteDistortion::zero_counts).unwrap_or_default();
    let mut d4_counts = params.distortion4.as_ref().map(RelativeDistortion::zero_counts).unwrap_or_default();
    let mut loglik = 0.0;
    let mut skipped = 0usize;
    map_in_order(
        &bitext.pairs,
        |pair| fertility_estep(pair, params, stage, config).map(|c| (pair.l(), pair.m(), c)),
        |(l, m, counts)| {
            if counts.empty {
                skipped += 1;
                return;
            }
            loglik += counts.loglik;
            for ((e, f), w) in counts.lex {
                params.ttable.add_count(&mut t_counts, e, f, w);
            }
            for ((e, phi), w) in counts.fert {
                if let Some(cell) = n_counts.get_mut(e as usize).and_then(|row| row.get_mut(phi)) {
                    *cell += w;
                }
            }
            null_counts.0 += counts.null.0;
            null_counts.1 += counts.null.1;
            if stage == Stage::M3 {
                if let Some(acc) = d3_counts.get_mut(&(l, m)) {
                    acc.iter_mut().zip(&counts.absolute).for_each(|(a, b)| *a += b);
                }
            } else if let Some(d4) = params.distortion4.as_ref() {
                for ((a, b, dj), w) in counts.head {
                    d4.add_head(&mut d4_counts.0, dj, a, b, w);
                }
                for ((b, dj), w) in counts.non_head {
                    d4.add_non_head(&mut d4_counts.1, dj, b, w);
                }
            }
        },
    )?;
    if skipped > 0 {
        log::warn!("{stage}: {skipped} pair(s) had no alignment with non-zero probability");
    }
    let mut next = params.clone();
    next.ttable.normalize_from(&t_counts);
    if let Some(n) = next.fertility.as_mut() {
        n.normalize_from(&n_counts, null_counts);
    }
    match stage {
        Stage::M3 => {
            if let Some(d) = next.distortion3.as_mut() {
                d.normalize_from(&d3_counts);
            }
        }
        _ => {
            if let Some(d) = next.distortion4.as_mut() {
                d.normalize_from(&d4_counts);
            }
        }
    }
    Ok((next, loglik))
}

/// One Viterbi-neighborhood EM step of Model 3. The returned value is the
/// pseudo log-likelihood: the log of the summed probability of each pair's
/// neighborhood under the input parameters.
pub fn m3_em_iteration(
    bitext: &Bitext,
    params: &ModelParams,
    config: &HillClimbConfig,
) -> Result<(ModelParams, f64), IbmError> {
    fertility_iteration(bitext, params, Stage::M3, config)
}

/// One Viterbi-neighborhood EM step of Model 4.
pub fn m4_em_iteration(
    bitext: &Bitext,
    params: &ModelParams,
    config: &HillClimbConfig,
) -> Result<(ModelParams, f64), IbmError> {
    fertility_iteration(bitext, params, Stage::M4, config)
}
