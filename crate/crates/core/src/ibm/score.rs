use super::tables::{ln_binomial, ln_factor, ln_factorial};
use super::{IbmError, ModelParams, Stage, WordClasses};
use crate::corpus::TokenId;

/// Fertility of every cept `0..=l` under `links`.
pub(crate) fn fertilities(links: &[usize], l: usize) -> Vec<usize> {
    let mut phi = vec![0; l + 1];
    for &i in links {
        phi[i] += 1;
    }
    phi
}

/// `ln P(f, a | e)` at `stage`, with the length factor fixed to 1.
///
/// Returns `-inf` when any factor is zero, including fertilities above the
/// configured maximum and NULL links when NULL is disabled.
pub fn score_alignment(
    source: &[TokenId],
    target: &[TokenId],
    links: &[usize],
    params: &ModelParams,
    stage: Stage,
) -> Result<f64, IbmError> {
    params.require(stage)?;
    let (l, m) = (source.len(), target.len());
    assert_eq!(links.len(), m, "alignment length must equal target length");
    assert!(links.iter().all(|&i| i <= l), "alignment links must lie in 0..=l");
    if !params.config.use_null && links.contains(&0) {
        return Ok(f64::NEG_INFINITY);
    }

    let lexical: f64 =
        links.iter().zip(target).map(|(&i, &f)| ln_factor(params.t(ModelParams::cept_word(source, i), f))).sum();

    let score = match stage {
        Stage::M1 => {
            let cepts = if params.config.use_null { l + 1 } else { l };
            lexical - m as f64 * (cepts as f64).ln()
        }
        Stage::M2 => {
            let align: f64 = links.iter().enumerate().map(|(j, &i)| ln_factor(params.a(i, j + 1, l, m))).sum();
            lexical + align
        }
        Stage::M3 | Stage::M4 => {
            let phi = fertilities(links, l);
            let mut total = lexical + null_term(params, phi[0], m);
            for i in 1..=l {
                total += ln_factor(params.n(phi[i], source[i - 1]));
                if stage == Stage::M3 {
                    total += ln_factorial(phi[i]);
                }
            }
            total += if stage == Stage::M3 {
                absolute_distortion(links, l, m, params)
            } else {
                relative_distortion(source, target, links, params)
            };
            total
        }
    };
    Ok(if score.is_nan() { f64::NEG_INFINITY } else { score })
}

/// `ln [ C(m - phi0, phi0) p0^(m - 2 phi0) p1^phi0 ]`.
fn null_term(params: &ModelParams, phi0: usize, m: usize) -> f64 {
    if !params.config.use_null {
        return if phi0 == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if 2 * phi0 > m {
        return f64::NEG_INFINITY;
    }
    let (p0, p1) = params.p0_p1();
    let power = |p: f64, k: usize| if k == 0 { 0.0 } else { k as f64 * ln_factor(p) };
    ln_binomial(m - phi0, phi0) + power(p0, m - 2 * phi0) + power(p1, phi0)
}

fn absolute_distortion(links: &[usize], l: usize, m: usize, params: &ModelParams) -> f64 {
    links.iter().enumerate().filter(|(_, &i)| i != 0).map(|(j, &i)| ln_factor(params.d3(j + 1, i, l, m))).sum()
}

/// One Model 4 distortion event.
pub(crate) enum Displacement {
    /// First word of a cept, placed relative to the rounded-up center of the
    /// previous non-empty cept (0 when there is none).
    Head { dj: i64, prev_class: u32, class: u32 },
    /// Later word of a cept, placed relative to the previous word of the same cept.
    NonHead { dj: i64, class: u32 },
}

pub(crate) fn for_each_displacement(
    source: &[TokenId],
    target: &[TokenId],
    links: &[usize],
    classes: &WordClasses,
    mut visit: impl FnMut(Displacement),
) {
    let l = source.len();
    let mut cepts: Vec<Vec<usize>> = vec![Vec::new(); l + 1];
    for (j, &i) in links.iter().enumerate() {
        cepts[i].push(j + 1);
    }
    let mut prev_center = 0i64;
    let mut prev_class = classes.source_class(ModelParams::cept_word(source, 0));
    for i in 1..=l {
        let positions = &cepts[i];
        let Some(&head) = positions.first() else {
            continue;
        };
        visit(Displacement::Head {
            dj: head as i64 - prev_center,
            prev_class,
            class: classes.target_class(target[head - 1]),
        });
        for w in positions.windows(2) {
            visit(Displacement::NonHead { dj: (w[1] - w[0]) as i64, class: classes.target_class(target[w[1] - 1]) });
        }
        let sum: usize = positions.iter().sum();
        prev_center = sum.div_ceil(positions.len()) as i64;
        prev_class = classes.source_class(source[i - 1]);
    }
}

fn relative_distortion(source: &[TokenId], target: &[TokenId], links: &[usize], params: &ModelParams) -> f64 {
    let mut total = 0.0;
    for_each_displacement(source, target, links, &params.classes, |event| {
        total += match event {
            Displacement::Head { dj, prev_class, class } => ln_factor(params.d_head(dj, prev_class, class)),
            Displacement::NonHead { dj, class } => ln_factor(params.d_non_head(dj, class)),
        };
    });
    total
}

/// Closed-form `ln P(f|e)` for Models 1 and 2: `sum_j ln sum_i t(f_j|e_i) a(i|j,l,m)`.
pub fn sentence_log_prob(
    source: &[TokenId],
    target: &[TokenId],
    params: &ModelParams,
    stage: Stage,
) -> Result<f64, IbmError> {
    if stage > Stage::M2 {
        return Err(IbmError::StageMismatch { requested: stage, available: Stage::M2 });
    }
    params.require(stage)?;
    let (l, m) = (source.len(), target.len());
    let first = params.first_cept();
    let mut total = 0.0;
    for (j, &f) in target.iter().enumerate() {
        let s: f64 = (first..=l)
            .map(|i| {
                let t = params.t(ModelParams::cept_word(source, i), f);
                match stage {
                    Stage::M1 => t,
                    _ => t * params.a(i, j + 1, l, m),
                }
            })
            .sum();
        total += ln_factor(s);
    }
    if stage == Stage::M1 {
        total -= m as f64 * ((l + 1 - first) as f64).ln();
    }
    Ok(total)
}
