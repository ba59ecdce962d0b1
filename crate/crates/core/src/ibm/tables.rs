//! Probability tables shared by the four model stages.

use std::collections::{BTreeMap, HashMap};

use crate::corpus::{Bitext, TokenId, Vocabulary, NULL_ID};

/// Smallest natural log used for a strictly positive factor.
pub const LOG_FLOOR: f64 = -745.0;

/// Log of a probability factor: `-inf` for zero, clamped at [`LOG_FLOOR`] otherwise.
pub fn ln_factor(x: f64) -> f64 {
    if x > 0.0 {
        x.ln().max(LOG_FLOOR)
    } else {
        f64::NEG_INFINITY
    }
}

pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

pub fn ln_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Normalizes `counts` into `probs`. Rows with no mass keep their previous values.
fn normalize_into(probs: &mut [f64], counts: &[f64]) {
    let total: f64 = counts.iter().sum();
    if total > 0.0 && total.is_finite() {
        for (p, c) in probs.iter_mut().zip(counts) {
            *p = c / total;
        }
    }
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// One conditional distribution `t(. | e)` over the target types that co-occur with `e`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TRow {
    pub targets: Vec<TokenId>,
    pub probs: Vec<f64>,
}

impl TRow {
    pub fn slot(&self, f: TokenId) -> Option<usize> {
        self.targets.binary_search(&f).ok()
    }
}

/// Sparse lexical translation table `t(f|e)`, one row per source id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TTable {
    rows: Vec<TRow>,
}

impl TTable {
    /// Uniform rows over each source type's co-occurring target types. With
    /// `use_null`, row 0 covers every target type in the corpus.
    pub fn uniform_cooccurrence(bitext: &Bitext, use_null: bool) -> TTable {
        let mut sets: Vec<Vec<TokenId>> = vec![Vec::new(); bitext.src_vocab.slots()];
        for pair in &bitext.pairs {
            for &e in &pair.source {
                sets[e as usize].extend_from_slice(&pair.target);
            }
            if use_null {
                sets[NULL_ID as usize].extend_from_slice(&pair.target);
            }
        }
        let rows = sets
            .into_iter()
            .map(|mut targets| {
                targets.sort_unstable();
                targets.dedup();
                let probs = if targets.is_empty() { Vec::new() } else { uniform(targets.len()) };
                TRow { targets, probs }
            })
            .collect();
        TTable { rows }
    }

    pub fn from_rows(rows: Vec<TRow>) -> TTable {
        TTable { rows }
    }

    pub fn rows(&self) -> &[TRow] {
        &self.rows
    }

    pub fn row(&self, e: TokenId) -> Option<&TRow> {
        self.rows.get(e as usize)
    }

    pub fn get(&self, e: TokenId, f: TokenId) -> f64 {
        self.rows.get(e as usize).and_then(|row| row.slot(f).map(|s| row.probs[s])).unwrap_or(0.0)
    }

    pub fn set(&mut self, e: TokenId, f: TokenId, p: f64) -> bool {
        match self.rows.get_mut(e as usize) {
            Some(row) => match row.slot(f) {
                Some(s) => {
                    row.probs[s] = p;
                    true
                }
                None => false,
            },
            None => false,
        }
    }

    pub fn zero_counts(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| vec![0.0; r.targets.len()]).collect()
    }

    pub fn add_count(&self, counts: &mut [Vec<f64>], e: TokenId, f: TokenId, w: f64) {
        let row = &self.rows[e as usize];
        let slot = row.slot(f).expect("count for a pair outside the co-occurrence support");
        counts[e as usize][slot] += w;
    }

    pub fn normalize_from(&mut self, counts: &[Vec<f64>]) {
        for (row, c) in self.rows.iter_mut().zip(counts) {
            normalize_into(&mut row.probs, c);
        }
    }

    pub fn len(&self) -> usize {
        self.rows.iter().map(|r| r.targets.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Alignment table `a(i|j,l,m)`, dense per observed `(l, m)`, laid out `[j-1][i]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ATable {
    pub(crate) cells: BTreeMap<(usize, usize), Vec<f64>>,
    use_null: bool,
}

impl ATable {
    pub fn uniform(bitext: &Bitext, use_null: bool) -> ATable {
        let mut cells = BTreeMap::new();
        for pair in &bitext.pairs {
            let (l, m) = (pair.l(), pair.m());
            cells.entry((l, m)).or_insert_with(|| Self::uniform_block(l, m, use_null));
        }
        ATable { cells, use_null }
    }

    pub(crate) fn from_cells(cells: BTreeMap<(usize, usize), Vec<f64>>, use_null: bool) -> ATable {
        ATable { cells, use_null }
    }

    fn uniform_block(l: usize, m: usize, use_null: bool) -> Vec<f64> {
        let mut block = vec![0.0; m * (l + 1)];
        for j in 0..m {
            for i in 0..=l {
                block[j * (l + 1) + i] = Self::uniform_value(i, l, use_null);
            }
        }
        block
    }

    fn uniform_value(i: usize, l: usize, use_null: bool) -> f64 {
        match (use_null, i) {
            (true, _) => 1.0 / (l + 1) as f64,
            (false, 0) => 0.0,
            (false, _) => 1.0 / l as f64,
        }
    }

    /// `a(i|j,l,m)` with `j` 1-based. Unobserved `(l, m)` fall back to uniform.
    pub fn get(&self, i: usize, j: usize, l: usize, m: usize) -> f64 {
        match self.cells.get(&(l, m)) {
            Some(block) => block[(j - 1) * (l + 1) + i],
            None => Self::uniform_value(i, l, self.use_null),
        }
    }

    /// Overwrites one cell of an observed `(l, m)` block; false if the block is absent.
    pub fn set(&mut self, i: usize, j: usize, l: usize, m: usize, p: f64) -> bool {
        match self.cells.get_mut(&(l, m)) {
            Some(block) if (1..=m).contains(&j) && i <= l => {
                block[(j - 1) * (l + 1) + i] = p;
                true
            }
            _ => false,
        }
    }

    pub fn block(&self, l: usize, m: usize) -> Option<&[f64]> {
        self.cells.get(&(l, m)).map(Vec::as_slice)
    }

    pub fn blocks(&self) -> impl Iterator<Item = ((usize, usize), &[f64])> {
        self.cells.iter().map(|(&k, v)| (k, v.as_slice()))
    }

    pub fn zero_counts(&self) -> BTreeMap<(usize, usize), Vec<f64>> {
        self.cells.iter().map(|(&k, v)| (k, vec![0.0; v.len()])).collect()
    }

    pub fn normalize_from(&mut self, counts: &BTreeMap<(usize, usize), Vec<f64>>) {
        for (&(l, m), block) in self.cells.iter_mut() {
            if let Some(c) = counts.get(&(l, m)) {
                for (p_row, c_row) in block.chunks_mut(l + 1).zip(c.chunks(l + 1)) {
                    normalize_into(p_row, c_row);
                }
            }
        }
    }
}

/// Fertility `n(phi|e)` for `phi` in `0..=max_fertility`, plus NULL insertion `p0`/`p1`.
#[derive(Clone, Debug, PartialEq)]
pub struct FertilityTable {
    /// Indexed by source id; row 0 (NULL) is empty.
    pub(crate) probs: Vec<Vec<f64>>,
    pub p0: f64,
    pub p1: f64,
    max_fertility: usize,
}

impl FertilityTable {
    /// Builds the table from hard fertility counts. Rows without counts get `n(0|e) = 1`.
    pub fn from_counts(counts: &[Vec<f64>], max_fertility: usize, p1: f64) -> FertilityTable {
        let probs = counts
            .iter()
            .enumerate()
            .map(|(e, c)| {
                if e == NULL_ID as usize {
                    return Vec::new();
                }
                let mut row = vec![0.0; max_fertility + 1];
                row[0] = 1.0;
                normalize_into(&mut row, c);
                row
            })
            .collect();
        FertilityTable { probs, p0: 1.0 - p1, p1, max_fertility }
    }

    pub(crate) fn from_parts(probs: Vec<Vec<f64>>, p0: f64, p1: f64, max_fertility: usize) -> FertilityTable {
        FertilityTable { probs, p0, p1, max_fertility }
    }

    pub fn max_fertility(&self) -> usize {
        self.max_fertility
    }

    pub fn get(&self, phi: usize, e: TokenId) -> f64 {
        if phi > self.max_fertility {
            return 0.0;
        }
        self.probs.get(e as usize).and_then(|row| row.get(phi)).copied().unwrap_or(0.0)
    }

    pub fn rows(&self) -> impl Iterator<Item = (TokenId, &[f64])> {
        self.probs.iter().enumerate().filter(|(_, r)| !r.is_empty()).map(|(e, r)| (e as TokenId, r.as_slice()))
    }

    pub fn zero_counts(&self) -> Vec<Vec<f64>> {
        self.probs.iter().map(|r| vec![0.0; r.len()]).collect()
    }

    pub fn normalize_from(&mut self, counts: &[Vec<f64>], null_counts: (f64, f64)) {
        for (row, c) in self.probs.iter_mut().zip(counts) {
            normalize_into(row, c);
        }
        let (c0, c1) = null_counts;
        if c0 + c1 > 0.0 {
            self.p1 = c1 / (c0 + c1);
            self.p0 = 1.0 - self.p1;
        }
    }
}

/// Model 3 absolute distortion `d(j|i,l,m)`, dense per `(l, m)`, laid out `[i-1][j-1]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AbsoluteDistortion {
    pub(crate) cells: BTreeMap<(usize, usize), Vec<f64>>,
}

impl AbsoluteDistortion {
    /// Inverts each `a(i|j,l,m)` column into `d(j|i,l,m)` assuming a uniform prior over `j`.
    pub fn from_alignment_table(atable: &ATable) -> AbsoluteDistortion {
        let mut cells = BTreeMap::new();
        for ((l, m), block) in atable.blocks() {
            let mut d = vec![0.0; l * m];
            for i in 1..=l {
                let row = &mut d[(i - 1) * m..i * m];
                for (j, slot) in row.iter_mut().enumerate() {
                    *slot = block[j * (l + 1) + i];
                }
                let total: f64 = row.iter().sum();
                if total > 0.0 {
                    row.iter_mut().for_each(|x| *x /= total);
                } else {
                    row.iter_mut().for_each(|x| *x = 1.0 / m as f64);
                }
            }
            cells.insert((l, m), d);
        }
        AbsoluteDistortion { cells }
    }

    pub(crate) fn from_cells(cells: BTreeMap<(usize, usize), Vec<f64>>) -> AbsoluteDistortion {
        AbsoluteDistortion { cells }
    }

    /// `d(j|i,l,m)`, both positions 1-based.
    pub fn get(&self, j: usize, i: usize, l: usize, m: usize) -> f64 {
        match self.cells.get(&(l, m)) {
            Some(block) => block[(i - 1) * m + (j - 1)],
            None => 1.0 / m as f64,
        }
    }

    pub fn blocks(&self) -> impl Iterator<Item = ((usize, usize), &[f64])> {
        self.cells.iter().map(|(&k, v)| (k, v.as_slice()))
    }

    pub fn zero_counts(&self) -> BTreeMap<(usize, usize), Vec<f64>> {
        self.cells.iter().map(|(&k, v)| (k, vec![0.0; v.len()])).collect()
    }

    pub fn normalize_from(&mut self, counts: &BTreeMap<(usize, usize), Vec<f64>>) {
        for (&(l, m), block) in self.cells.iter_mut() {
            if let Some(c) = counts.get(&(l, m)) {
                for (p_row, c_row) in block.chunks_mut(m).zip(c.chunks(m)) {
                    normalize_into(p_row, c_row);
                }
            }
        }
    }
}

/// Head and non-head count accumulators shaped like a [`RelativeDistortion`].
pub(crate) type RelativeCounts = (BTreeMap<(u32, u32), Vec<f64>>, BTreeMap<u32, Vec<f64>>);

/// Model 4 relative distortion. Head words use `d1(dj | A(e_prev), B(f))` over
/// `dj` in `-span..=span`; later words in a cept use `d>1(dj | B(f))` over `1..=span`.
#[derive(Clone, Debug, PartialEq)]
pub struct RelativeDistortion {
    pub(crate) span: usize,
    pub(crate) head: BTreeMap<(u32, u32), Vec<f64>>,
    pub(crate) non_head: BTreeMap<u32, Vec<f64>>,
}

impl RelativeDistortion {
    pub fn uniform(span: usize, classes: &WordClasses) -> RelativeDistortion {
        let mut head = BTreeMap::new();
        let mut non_head = BTreeMap::new();
        for b in classes.target_classes() {
            for a in classes.source_classes() {
                head.insert((a, b), uniform(2 * span + 1));
            }
            non_head.insert(b, uniform(span));
        }
        RelativeDistortion { span, head, non_head }
    }

    pub(crate) fn from_parts(
        span: usize,
        head: BTreeMap<(u32, u32), Vec<f64>>,
        non_head: BTreeMap<u32, Vec<f64>>,
    ) -> RelativeDistortion {
        RelativeDistortion { span, head, non_head }
    }

    pub fn span(&self) -> usize {
        self.span
    }

    fn head_index(&self, dj: i64) -> Option<usize> {
        let idx = dj + self.span as i64;
        (0..=2 * self.span as i64).contains(&idx).then_some(idx as usize)
    }

    pub fn head(&self, dj: i64, a: u32, b: u32) -> f64 {
        let Some(idx) = self.head_index(dj) else {
            return 0.0;
        };
        match self.head.get(&(a, b)) {
            Some(row) => row[idx],
            None => 1.0 / (2 * self.span + 1) as f64,
        }
    }

    pub fn non_head(&self, dj: i64, b: u32) -> f64 {
        if dj < 1 || dj > self.span as i64 {
            return 0.0;
        }
        match self.non_head.get(&b) {
            Some(row) => row[dj as usize - 1],
            None => 1.0 / self.span as f64,
        }
    }

    pub fn head_rows(&self) -> impl Iterator<Item = ((u32, u32), &[f64])> {
        self.head.iter().map(|(&k, v)| (k, v.as_slice()))
    }

    pub fn non_head_rows(&self) -> impl Iterator<Item = (u32, &[f64])> {
        self.non_head.iter().map(|(&k, v)| (k, v.as_slice()))
    }

    pub(crate) fn zero_counts(&self) -> RelativeCounts {
        (
            self.head.iter().map(|(&k, v)| (k, vec![0.0; v.len()])).collect(),
            self.non_head.iter().map(|(&k, v)| (k, vec![0.0; v.len()])).collect(),
        )
    }

    pub(crate) fn add_head(&self, counts: &mut BTreeMap<(u32, u32), Vec<f64>>, dj: i64, a: u32, b: u32, w: f64) {
        if let (Some(idx), Some(row)) = (self.head_index(dj), counts.get_mut(&(a, b))) {
            row[idx] += w;
        }
    }

    pub(crate) fn add_non_head(&self, counts: &mut BTreeMap<u32, Vec<f64>>, dj: i64, b: u32, w: f64) {
        if dj >= 1 && dj <= self.span as i64 {
            if let Some(row) = counts.get_mut(&b) {
                row[dj as usize - 1] += w;
            }
        }
    }

    pub(crate) fn normalize_from(&mut self, counts: &RelativeCounts) {
        for (k, row) in self.head.iter_mut() {
            if let Some(c) = counts.0.get(k) {
                normalize_into(row, c);
            }
        }
        for (k, row) in self.non_head.iter_mut() {
            if let Some(c) = counts.1.get(k) {
                normalize_into(row, c);
            }
        }
    }
}

/// Displacement classes for Model 4. Empty maps mean one universal class (0).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WordClasses {
    pub(crate) source: Vec<u32>,
    pub(crate) target: Vec<u32>,
}

impl WordClasses {
    pub fn universal() -> WordClasses {
        WordClasses::default()
    }

    /// Builds id-indexed class maps from surface maps; unmapped surfaces get class 0.
    pub fn from_maps(
        src_vocab: &Vocabulary,
        tgt_vocab: &Vocabulary,
        src_map: &HashMap<String, u32>,
        tgt_map: &HashMap<String, u32>,
    ) -> WordClasses {
        let build = |vocab: &Vocabulary, map: &HashMap<String, u32>| {
            let mut classes = vec![0; vocab.slots()];
            for (id, surface, _) in vocab.iter() {
                classes[id as usize] = map.get(surface).copied().unwrap_or(0);
            }
            classes
        };
        WordClasses { source: build(src_vocab, src_map), target: build(tgt_vocab, tgt_map) }
    }

    pub(crate) fn from_parts(source: Vec<u32>, target: Vec<u32>) -> WordClasses {
        WordClasses { source, target }
    }

    pub fn is_universal(&self) -> bool {
        self.source.iter().chain(&self.target).all(|&c| c == 0)
    }

    pub fn source_class(&self, e: TokenId) -> u32 {
        self.source.get(e as usize).copied().unwrap_or(0)
    }

    pub fn target_class(&self, f: TokenId) -> u32 {
        self.target.get(f as usize).copied().unwrap_or(0)
    }

    pub fn source_map(&self) -> &[u32] {
        &self.source
    }

    pub fn target_map(&self) -> &[u32] {
        &self.target
    }

    fn distinct(v: &[u32]) -> Vec<u32> {
        let mut out: Vec<u32> = v.to_vec();
        out.push(0);
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn source_classes(&self) -> Vec<u32> {
        Self::distinct(&self.source)
    }

    pub fn target_classes(&self) -> Vec<u32> {
        Self::distinct(&self.target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_parallel, LoadOptions};

    fn bitext(src: &str, tgt: &str) -> Bitext {
        Bitext::build(&parse_parallel(src, tgt).unwrap(), "t", LoadOptions::default())
    }

    #[test]
    fn cooccurrence_support() {
        let b = bitext("x\nx z", "y w\ny");
        let t = TTable::uniform_cooccurrence(&b, true);
        // x co-occurs with y, w; z only with y; NULL with both.
        assert_eq!(t.row(1).unwrap().targets.len(), 2);
        assert_eq!(t.get(1, 1), 0.5);
        assert_eq!(t.get(2, 1), 1.0);
        assert_eq!(t.get(2, 2), 0.0);
        assert_eq!(t.row(0).unwrap().targets.len(), 2);
        let no_null = TTable::uniform_cooccurrence(&b, false);
        assert!(no_null.row(0).unwrap().targets.is_empty());
    }

    #[test]
    fn atable_uniform_and_fallback() {
        let b = bitext("a b", "c");
        let a = ATable::uniform(&b, true);
        assert!((a.get(0, 1, 2, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert!((a.get(2, 3, 4, 5) - 0.2).abs() < 1e-15);
        let a = ATable::uniform(&b, false);
        assert_eq!(a.get(0, 1, 2, 1), 0.0);
        assert_eq!(a.get(1, 1, 2, 1), 0.5);
    }

    #[test]
    fn fertility_rows_without_counts() {
        let counts = vec![vec![], vec![0.0, 2.0, 2.0], vec![0.0; 3]];
        let n = FertilityTable::from_counts(&counts, 2, 0.05);
        assert_eq!(n.get(1, 1), 0.5);
        assert_eq!(n.get(0, 2), 1.0);
        assert_eq!(n.get(3, 1), 0.0);
        assert!((n.p0 + n.p1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn relative_distortion_support() {
        let d = RelativeDistortion::uniform(3, &WordClasses::universal());
        assert_eq!(d.head(-3, 0, 0), 1.0 / 7.0);
        assert_eq!(d.head(4, 0, 0), 0.0);
        assert_eq!(d.non_head(0, 0), 0.0);
        assert_eq!(d.non_head(3, 0), 1.0 / 3.0);
    }

    #[test]
    fn binomials() {
        assert!((ln_binomial(5, 2) - 10f64.ln()).abs() < 1e-12);
        assert_eq!(ln_binomial(2, 3), f64::NEG_INFINITY);
        assert_eq!(ln_factorial(0), 0.0);
        assert_eq!(ln_factor(0.0), f64::NEG_INFINITY);
        assert!(ln_factor(f64::MIN_POSITIVE / 1e15) >= LOG_FLOOR);
    }
}
