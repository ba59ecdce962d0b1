//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Run with
//! `cargo test -p morphalign-cli --test acceptance`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use morphalign::aligner::{align_corpus, hillclimb, neighbors, viterbi_exact};
use morphalign::analysis::{AlignmentReport, CountSide, DirectionStats, TokenAlignmentCounter};
use morphalign::corpus::{read_parallel, Bitext, LoadOptions, RawPair, TokenClass};
use morphalign::ibm::{
    init_uniform, m1_em_iteration, m2_em_iteration, m3_em_iteration, m4_em_iteration, score_alignment,
    sentence_log_prob, train, transfer_to_m2, transfer_to_m3, transfer_to_m4, ModelConfig, ModelParams, Stage,
    TrainSchedule,
};
use morphalign::synthetic::{morpheme_rich, planted_lexicon, PlantedConfig};

const MONOTONE_SLACK: f64 = 1e-10;
const MONOTONE_BUDGET: Duration = Duration::from_secs(1);
const SUM_REL_TOL: f64 = 1e-9;
const SUM_CASES: usize = 100;
const NORM_TOL: f64 = 1e-9;
const VITERBI_CASES: usize = 500;
const MAX_ALIGNMENTS: usize = 4096;
const PLANTED_MIN_ACCURACY: f64 = 0.95;
const PLANTED_BUDGET: Duration = Duration::from_secs(5);

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn fixture_bitext() -> Bitext {
    let dir = fixtures().join("synth");
    let raw = read_parallel(&dir.join("nah.txt"), &dir.join("nah.spa.txt")).unwrap();
    assert!(raw.len() <= 50);
    Bitext::build(&raw, "nahuatl-spanish", LoadOptions::default())
}

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// 1. Exact EM never lowers the corpus log-likelihood.
fn monotone_likelihood() -> Outcome {
    let b = fixture_bitext();
    let start = Instant::now();
    let schedule: TrainSchedule = "1:5,2:5".parse().unwrap();
    let mut lls = Vec::new();
    train(&b, &schedule, &ModelConfig::default(), None, |r| lls.push(r.log_likelihood)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let worst = lls.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max);
    check(
        lls.len() == 10 && worst <= MONOTONE_SLACK && elapsed < MONOTONE_BUDGET,
        format!("{} iterations, largest drop {worst:.3e}, {:.0} ms", lls.len(), elapsed.as_secs_f64() * 1e3),
    )
}

fn all_alignments(l: usize, m: usize, first: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..m {
        out = out
            .into_iter()
            .flat_map(|a: Vec<usize>| {
                (first..=l).map(move |i| {
                    let mut b = a.clone();
                    b.push(i);
                    b
                })
            })
            .collect();
    }
    out
}

/// Random single-pair M2 model with `(l+1)^m <= MAX_ALIGNMENTS`.
fn random_instance(rng: &mut ChaCha8Rng, coarse: bool) -> (Bitext, ModelParams) {
    let (l, m) = loop {
        let l = rng.gen_range(1..=6);
        let m = rng.gen_range(1..=6);
        if (l + 1usize).pow(m as u32) <= MAX_ALIGNMENTS {
            break (l, m);
        }
    };
    let raw = vec![RawPair {
        line_no: 1,
        source: (0..l).map(|k| format!("e{k}")).collect(),
        target: (0..m).map(|k| format!("f{k}")).collect(),
    }];
    let b = Bitext::build(&raw, "rand", LoadOptions::default());
    let config = ModelConfig { use_null: rng.gen_bool(0.8), ..ModelConfig::default() };
    let mut p = transfer_to_m2(&b, &init_uniform(&b, &config).unwrap()).unwrap();
    let draw = |rng: &mut ChaCha8Rng| {
        if coarse {
            [0.1, 0.2, 0.4][rng.gen_range(0..3)]
        } else {
            rng.gen_range(0.001..1.0)
        }
    };
    for e in 0..=l as u32 {
        for f in 1..=m as u32 {
            p.ttable.set(e, f, draw(rng));
        }
    }
    for j in 1..=m {
        for i in 0..=l {
            p.atable.as_mut().unwrap().set(i, j, l, m, draw(rng));
        }
    }
    (b, p)
}

/// 2. Summing the joint over every alignment gives the closed form.
fn brute_force_sum() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..SUM_CASES {
        let (b, p) = random_instance(&mut rng, false);
        let pair = &b.pairs[0];
        for stage in [Stage::M1, Stage::M2] {
            let total: f64 = all_alignments(pair.l(), pair.m(), p.first_cept())
                .iter()
                .map(|a| score_alignment(&pair.source, &pair.target, a, &p, stage).unwrap().exp())
                .sum();
            let closed = sentence_log_prob(&pair.source, &pair.target, &p, stage).unwrap().exp();
            worst = worst.max((total - closed).abs() / closed);
        }
    }
    check(worst <= SUM_REL_TOL, format!("{SUM_CASES} instances x 2 models, worst relative error {worst:.2e}"))
}

fn row_sum_error(rows: impl IntoIterator<Item = f64>) -> f64 {
    rows.into_iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
}

/// Largest deviation from 1 over every conditional distribution in `p`.
fn normalization_error(p: &ModelParams) -> f64 {
    let mut worst = row_sum_error(p.ttable.rows().iter().filter(|r| !r.probs.is_empty()).map(|r| r.probs.iter().sum()));
    if let Some(a) = &p.atable {
        for ((l, m), block) in a.blocks() {
            worst = worst.max(row_sum_error((0..m).map(|j| block[j * (l + 1)..(j + 1) * (l + 1)].iter().sum())));
        }
    }
    if let Some(n) = &p.fertility {
        worst = worst.max(row_sum_error(n.rows().map(|(_, r)| r.iter().sum())));
        worst = worst.max((n.p0 + n.p1 - 1.0).abs());
    }
    if let Some(d) = &p.distortion3 {
        for ((l, m), block) in d.blocks() {
            worst = worst.max(row_sum_error((0..l).map(|i| block[i * m..(i + 1) * m].iter().sum())));
        }
    }
    if let Some(d) = &p.distortion4 {
        worst = worst.max(row_sum_error(d.head_rows().map(|(_, r)| r.iter().sum())));
        worst = worst.max(row_sum_error(d.non_head_rows().map(|(_, r)| r.iter().sum())));
    }
    worst
}

/// 3. Every M-step of every stage leaves normalized tables.
fn normalization_sweep() -> Outcome {
    let b = fixture_bitext();
    let hc = ModelConfig::default().hillclimb;
    let mut p = init_uniform(&b, &ModelConfig::default()).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let mut steps = 0;
    for stage in Stage::ALL {
        p = match stage {
            Stage::M1 => p,
            Stage::M2 => transfer_to_m2(&b, &p).unwrap(),
            Stage::M3 => transfer_to_m3(&b, &p).unwrap(),
            Stage::M4 => transfer_to_m4(&b, &p).unwrap(),
        };
        worst = worst.max(normalization_error(&p));
        for _ in 0..3 {
            p = match stage {
                Stage::M1 => m1_em_iteration(&b, &p),
                Stage::M2 => m2_em_iteration(&b, &p),
                Stage::M3 => m3_em_iteration(&b, &p, &hc),
                Stage::M4 => m4_em_iteration(&b, &p, &hc),
            }
            .map_err(|e| e.to_string())?
            .0;
            worst = worst.max(normalization_error(&p));
            steps += 1;
        }
    }
    check(worst <= NORM_TOL, format!("{steps} M-steps over 4 stages, worst |sum - 1| = {worst:.2e}"))
}

/// 4. Positionwise Viterbi equals exhaustive argmax, ties to the smallest cept.
fn viterbi_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut agree = 0;
    let mut total = 0;
    for k in 0..VITERBI_CASES {
        // Every other instance draws from three values so ties are frequent.
        let (b, p) = random_instance(&mut rng, k % 2 == 0);
        let pair = &b.pairs[0];
        for stage in [Stage::M1, Stage::M2] {
            let got = viterbi_exact(&pair.source, &pair.target, &p, stage).unwrap();
            let mut best: Option<(Vec<usize>, f64)> = None;
            for a in all_alignments(pair.l(), pair.m(), p.first_cept()) {
                let s = score_alignment(&pair.source, &pair.target, &a, &p, stage).unwrap();
                // Lexicographic enumeration: the first of a tie has the
                // smallest cept at each tied position.
                if best.as_ref().is_none_or(|(_, b)| s > *b + 1e-12 * b.abs().max(1.0)) {
                    best = Some((a, s));
                }
            }
            total += 1;
            if best.unwrap().0 == got.links {
                agree += 1;
            }
        }
    }
    check(agree == total, format!("{agree}/{total} agree"))
}

/// 5. Hill-climbing ends at a local optimum no worse than its start.
fn hillclimb_optimality() -> Outcome {
    let b = fixture_bitext();
    let p =
        train(&b, &TrainSchedule::default(), &ModelConfig::default(), None, |_| {}).map_err(|e| e.to_string())?.params;
    let mut ok = 0;
    let mut total = 0;
    for pair in &b.pairs {
        let start = viterbi_exact(&pair.source, &pair.target, &p, Stage::M2).unwrap();
        for stage in [Stage::M3, Stage::M4] {
            total += 1;
            let start_score = score_alignment(&pair.source, &pair.target, &start.links, &p, stage).unwrap();
            let got = hillclimb(&pair.source, &pair.target, &p, stage, &start.links, &p.config.hillclimb).unwrap();
            let local = neighbors(&got.links, pair.l())
                .iter()
                .all(|n| score_alignment(&pair.source, &pair.target, n, &p, stage).unwrap() <= got.score);
            if local && got.score >= start_score {
                ok += 1;
            }
        }
    }
    check(ok == total, format!("{ok}/{total} pair-model runs locally optimal"))
}

fn stats_consistent(s: &DirectionStats) -> bool {
    s.na_words + s.na_morphemes == s.na_tokens
        && s.na_rate == if s.tokens == 0 { 0.0 } else { s.na_tokens as f64 / s.tokens as f64 }
        && (0.0..=1.0).contains(&s.na_rate)
}

/// Reference direction totals: tokens, na tokens, na words, na morphemes, rate.
const REFERENCE_ROWS: [(u64, u64, u64, u64, &str); 6] = [
    (4702, 2905, 790, 2115, "0.617"),
    (3594, 1259, 1259, 0, "0.350"),
    (4391, 1969, 1111, 858, "0.448"),
    (3380, 939, 939, 0, "0.277"),
    (4805, 2960, 2238, 722, "0.616"),
    (3163, 836, 836, 0, "0.264"),
];

/// 6. Direction totals add up on every produced report and on the reference rows.
fn analysis_consistency(replicate_dir: &Path) -> Outcome {
    let mut checked = 0;
    let mut bad = Vec::new();
    for entry in fs::read_dir(replicate_dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.to_string_lossy().ends_with(".report.json") {
            let report: AlignmentReport =
                serde_json::from_str(&fs::read_to_string(&path).unwrap()).map_err(|e| e.to_string())?;
            let sum: u64 = report.counters.iter().map(TokenAlignmentCounter::total).sum();
            let diffs_ok = report.counters.iter().all(|c| c.diff == c.aligned as i64 - c.non_aligned as i64);
            if !(stats_consistent(&report.stats) && sum == report.stats.tokens && diffs_ok) {
                bad.push(path.display().to_string());
            }
            checked += 1;
        }
    }
    for (tokens, na, words, morph, rate) in REFERENCE_ROWS {
        let s = DirectionStats::from_counts(tokens, words, morph);
        if !(stats_consistent(&s) && s.na_tokens == na && s.rate_3dp() == rate) {
            bad.push(format!("reference row {tokens}/{na}"));
        }
    }
    let row = TokenAlignmentCounter::new("p+-", TokenClass::BoundMorpheme, 4, 294);
    if morphalign::analysis::markdown_row(&row) != "| p+- | 4 | 294 | -290 |" {
        bad.push("row rendering".into());
    }
    check(
        bad.is_empty() && checked > 0,
        format!("{checked} reports + {} reference rows; failures: {bad:?}", REFERENCE_ROWS.len()),
    )
}

/// 7. Model 1 recovers a planted one-to-one lexicon.
fn planted_recovery() -> Outcome {
    let start = Instant::now();
    let planted = planted_lexicon(&PlantedConfig::default(), 7);
    let b = Bitext::build(&planted.pairs, "planted", LoadOptions::default());
    let p =
        train(&b, &"1:5".parse().unwrap(), &ModelConfig::default(), None, |_| {}).map_err(|e| e.to_string())?.params;
    let mut hits = 0;
    for (src, tgt) in &planted.lexicon {
        let e = b.src_vocab.encode(src).unwrap();
        let row = p.ttable.row(e).unwrap();
        let mut best = (0, f64::NEG_INFINITY);
        for (&f, &prob) in row.targets.iter().zip(&row.probs) {
            if prob > best.1 {
                best = (f, prob);
            }
        }
        if b.tgt_vocab.decode(best.0) == Some(tgt.as_str()) {
            hits += 1;
        }
    }
    let accuracy = hits as f64 / planted.lexicon.len() as f64;
    let elapsed = start.elapsed();
    check(
        accuracy >= PLANTED_MIN_ACCURACY && elapsed < PLANTED_BUDGET,
        format!(
            "{hits}/{} source types ranked correctly, {:.0} ms",
            planted.lexicon.len(),
            elapsed.as_secs_f64() * 1e3
        ),
    )
}

/// 8. The morpheme-rich side leaves more of its tokens unaligned.
fn directional_asymmetry() -> Outcome {
    let raw = morpheme_rich(300, 20, 5, 8);
    let forward = Bitext::build(&raw, "rich-poor", LoadOptions::default());
    let backward = forward.reversed("poor-rich");
    let rate = |b: &Bitext| -> Result<f64, String> {
        let p = train(b, &TrainSchedule::default(), &ModelConfig::default(), None, |_| {})
            .map_err(|e| e.to_string())?
            .params;
        let aligned = align_corpus(b, &p, Stage::M4).map_err(|e| e.to_string())?;
        Ok(AlignmentReport::build(&aligned, b, CountSide::Source).map_err(|e| e.to_string())?.stats.na_rate)
    };
    let (f, r) = (rate(&forward)?, rate(&backward)?);
    check(f > r, format!("rich->poor {f:.3} vs poor->rich {r:.3}"))
}

fn run_replicate(out: &Path, threads: Option<&str>) -> Result<(), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_morphalign"));
    cmd.args(["replicate", "--seed", "17", "--manifest"])
        .arg(fixtures().join("replicate.tsv"))
        .arg("--out-dir")
        .arg(out);
    if let Some(t) = threads {
        cmd.env("MORPHALIGN_THREADS", t);
    }
    let status = cmd.output().map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    Ok(())
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect()
}

/// 9. Two replicate runs with one seed are byte-identical, whatever the worker count.
fn end_to_end_determinism(first: &Path) -> Outcome {
    let second = tempfile::tempdir().map_err(|e| e.to_string())?;
    let serial = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_replicate(second.path(), None)?;
    run_replicate(serial.path(), Some("1"))?;
    let (a, b, c) = (snapshot(first), snapshot(second.path()), snapshot(serial.path()));
    let models = a.keys().filter(|k| k.ends_with(".model.json")).count();
    let dumps = a.keys().filter(|k| k.contains(".align.")).count();
    let reports = a.keys().filter(|k| k.contains(".report.")).count();
    check(
        a == b && a == c && models == 6 && dumps == 12 && reports == 18,
        format!("{} files compared across 3 runs ({models} models, {dumps} dumps, {reports} reports)", a.len()),
    )
}

fn main() {
    let replicate_dir = tempfile::tempdir().expect("temp dir");
    let replicated = run_replicate(replicate_dir.path(), None);

    let criteria: Vec<Criterion> = vec![
        ("1 M1/M2 EM monotone likelihood", Box::new(monotone_likelihood)),
        ("2 closed form equals brute-force sum", Box::new(brute_force_sum)),
        ("3 normalization after every M-step", Box::new(normalization_sweep)),
        ("4 Viterbi exactness", Box::new(viterbi_exactness)),
        ("5 hill-climbing local optimality", Box::new(hillclimb_optimality)),
        (
            "6 analysis consistency",
            Box::new(|| match &replicated {
                Ok(()) => analysis_consistency(replicate_dir.path()),
                Err(e) => Err(format!("replicate failed: {e}")),
            }),
        ),
        ("7 planted lexicon recovery", Box::new(planted_recovery)),
        ("8 directional asymmetry", Box::new(directional_asymmetry)),
        (
            "9 end-to-end determinism",
            Box::new(|| match &replicated {
                Ok(()) => end_to_end_determinism(replicate_dir.path()),
                Err(e) => Err(format!("replicate failed: {e}")),
            }),
        ),
    ];

    let mut failed = 0;
    for (name, run) in &criteria {
        match run() {
            Ok(detail) => println!("PASS  criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  criterion {name}: {detail}");
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
