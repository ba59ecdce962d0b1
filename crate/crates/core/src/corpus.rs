//! Parallel corpus ingestion.
//!
//! Input arrives pre-segmented: one morpheme (or word) per whitespace-separated
//! token, with bound morphemes marked by a `-` at the token edge (`ne-`, `-tl`).
//! Every source vocabulary carries the NULL cept at id 0.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type TokenId = u32;

/// Id of the NULL cept in every source vocabulary.
pub const NULL_ID: TokenId = 0;
pub const NULL_SURFACE: &str = "<NULL>";
/// Sentinel for tokens missing from a closed vocabulary (open-vocabulary encoding only).
pub const UNKNOWN_ID: TokenId = TokenId::MAX;
pub const DEFAULT_MAX_LEN: usize = 100;

const MORPHEME_MARKER: char = '-';

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line count mismatch: source has {0} lines, target has {1}")]
    LineCountMismatch(usize, usize),
    #[error("{path}: line {line} is empty")]
    EmptyLine { path: String, line: usize },
    #[error("{path}: line {line} is not valid UTF-8")]
    EncodingError { path: String, line: usize },
    #[error("{path}: line {line}: expected `source<TAB>target`")]
    MalformedTsv { path: String, line: usize },
    #[error("unknown token {0:?}")]
    UnknownToken(String),
    #[error("invalid vocabulary snapshot: {0}")]
    InvalidVocabulary(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TokenClass {
    Word,
    BoundMorpheme,
}

/// A token is a bound morpheme iff it starts or ends with `-` and is not the
/// bare marker itself. Interior hyphens (`ka-te`) do not count.
pub fn classify_token(surface: &str) -> TokenClass {
    let marked = surface.starts_with(MORPHEME_MARKER) || surface.ends_with(MORPHEME_MARKER);
    if marked && surface != "-" {
        TokenClass::BoundMorpheme
    } else {
        TokenClass::Word
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub id: TokenId,
    pub class: TokenClass,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenInfo {
    pub id: TokenId,
    pub class: TokenClass,
    pub frequency: u64,
}

/// Outcome of an open-vocabulary lookup.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lookup {
    Known(TokenId),
    Unknown,
}

/// Integer-indexed token inventory. Ids are dense `1..=N` in first-occurrence
/// order; slot 0 is the NULL token on the source side and unused on the target side.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    surfaces: Vec<String>,
    classes: Vec<TokenClass>,
    frequencies: Vec<u64>,
    index: HashMap<String, TokenId>,
    has_null: bool,
}

impl Vocabulary {
    pub fn new_source() -> Self {
        let mut index = HashMap::new();
        index.insert(NULL_SURFACE.to_string(), NULL_ID);
        Vocabulary {
            surfaces: vec![NULL_SURFACE.to_string()],
            classes: vec![TokenClass::Word],
            frequencies: vec![0],
            index,
            has_null: true,
        }
    }

    pub fn new_target() -> Self {
        Vocabulary {
            surfaces: vec![String::new()],
            classes: vec![TokenClass::Word],
            frequencies: vec![0],
            index: HashMap::new(),
            has_null: false,
        }
    }

    /// Rebuilds a vocabulary from `(surface, frequency)` entries listed in id order
    /// starting at id 1.
    pub fn from_entries<I, S>(has_null: bool, entries: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let mut vocab = if has_null { Self::new_source() } else { Self::new_target() };
        for (surface, frequency) in entries {
            let surface = surface.into();
            if surface.is_empty() || surface.chars().any(char::is_whitespace) {
                return Err(CorpusError::InvalidVocabulary(format!("bad surface {surface:?}")));
            }
            if vocab.index.contains_key(&surface) {
                return Err(CorpusError::InvalidVocabulary(format!("duplicate surface {surface:?}")));
            }
            let id = vocab.surfaces.len() as TokenId;
            vocab.classes.push(classify_token(&surface));
            vocab.frequencies.push(frequency);
            vocab.index.insert(surface.clone(), id);
            vocab.surfaces.push(surface);
        }
        Ok(vocab)
    }

    fn intern(&mut self, surface: &str) -> TokenId {
        if let Some(&id) = self.index.get(surface) {
            self.frequencies[id as usize] += 1;
            return id;
        }
        let id = self.surfaces.len() as TokenId;
        self.surfaces.push(surface.to_string());
        self.classes.push(classify_token(surface));
        self.frequencies.push(1);
        self.index.insert(surface.to_string(), id);
        id
    }

    pub fn has_null(&self) -> bool {
        self.has_null
    }

    /// Closed-vocabulary encoding.
    pub fn encode(&self, surface: &str) -> Result<TokenId, CorpusError> {
        match self.lookup(surface) {
            Lookup::Known(id) => Ok(id),
            Lookup::Unknown => Err(CorpusError::UnknownToken(surface.to_string())),
        }
    }

    pub fn lookup(&self, surface: &str) -> Lookup {
        match self.index.get(surface) {
            Some(&id) => Lookup::Known(id),
            None => Lookup::Unknown,
        }
    }

    pub fn decode(&self, id: TokenId) -> Option<&str> {
        if id == NULL_ID && !self.has_null {
            return None;
        }
        self.surfaces.get(id as usize).map(String::as_str)
    }

    pub fn class(&self, id: TokenId) -> Option<TokenClass> {
        self.classes.get(id as usize).copied()
    }

    pub fn frequency(&self, id: TokenId) -> u64 {
        self.frequencies.get(id as usize).copied().unwrap_or(0)
    }

    pub fn info(&self, surface: &str) -> Option<TokenInfo> {
        self.index.get(surface).map(|&id| TokenInfo {
            id,
            class: self.classes[id as usize],
            frequency: self.frequencies[id as usize],
        })
    }

    pub fn token(&self, id: TokenId) -> Option<Token> {
        self.decode(id).map(|surface| Token { surface: surface.to_string(), id, class: self.classes[id as usize] })
    }

    /// Number of id slots, including slot 0. Tables indexed by token id use this width.
    pub fn slots(&self) -> usize {
        self.surfaces.len()
    }

    /// Number of real tokens (ids `1..=N`).
    pub fn len(&self) -> usize {
        self.surfaces.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_frequency(&self) -> u64 {
        self.frequencies.iter().sum()
    }

    /// Real tokens in id order, skipping slot 0.
    pub fn iter(&self) -> impl Iterator<Item = (TokenId, &str, TokenInfo)> + '_ {
        (1..self.surfaces.len()).map(move |i| {
            (
                i as TokenId,
                self.surfaces[i].as_str(),
                TokenInfo { id: i as TokenId, class: self.classes[i], frequency: self.frequencies[i] },
            )
        })
    }
}

/// One tokenized line pair before encoding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawPair {
    pub line_no: usize,
    pub source: Vec<String>,
    pub target: Vec<String>,
}

/// `source` is the conditioning side that carries the cepts (e, length l);
/// `target` is the generated side (f, length m).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentencePair {
    pub source: Vec<TokenId>,
    pub target: Vec<TokenId>,
    pub line_no: usize,
}

impl SentencePair {
    pub fn l(&self) -> usize {
        self.source.len()
    }

    pub fn m(&self) -> usize {
        self.target.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LoadOptions {
    pub max_len: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { max_len: DEFAULT_MAX_LEN }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bitext {
    pub pairs: Vec<SentencePair>,
    pub src_vocab: Vocabulary,
    pub tgt_vocab: Vocabulary,
    pub direction_label: String,
}

impl Bitext {
    /// Encodes raw pairs, building both vocabularies in first-occurrence order.
    /// Pairs longer than `opts.max_len` on either side are dropped with a warning.
    pub fn build(raw: &[RawPair], direction_label: &str, opts: LoadOptions) -> Bitext {
        let mut src_vocab = Vocabulary::new_source();
        let mut tgt_vocab = Vocabulary::new_target();
        let mut pairs = Vec::with_capacity(raw.len());
        for pair in raw {
            if !within_limit(pair, opts) {
                continue;
            }
            let source = pair.source.iter().map(|s| src_vocab.intern(s)).collect();
            let target = pair.target.iter().map(|s| tgt_vocab.intern(s)).collect();
            pairs.push(SentencePair { source, target, line_no: pair.line_no });
        }
        Bitext { pairs, src_vocab, tgt_vocab, direction_label: direction_label.to_string() }
    }

    /// Encodes raw pairs against existing vocabularies. Unseen surfaces are an
    /// error unless `allow_unknown`, in which case they encode as [`UNKNOWN_ID`].
    pub fn encode_with(
        raw: &[RawPair],
        direction_label: &str,
        src_vocab: &Vocabulary,
        tgt_vocab: &Vocabulary,
        opts: LoadOptions,
        allow_unknown: bool,
    ) -> Result<Bitext, CorpusError> {
        let encode = |vocab: &Vocabulary, tokens: &[String]| -> Result<Vec<TokenId>, CorpusError> {
            tokens
                .iter()
                .map(|s| match vocab.lookup(s) {
                    Lookup::Known(id) => Ok(id),
                    Lookup::Unknown if allow_unknown => Ok(UNKNOWN_ID),
                    Lookup::Unknown => Err(CorpusError::UnknownToken(s.clone())),
                })
                .collect()
        };
        let mut pairs = Vec::with_capacity(raw.len());
        for pair in raw {
            if !within_limit(pair, opts) {
                continue;
            }
            pairs.push(SentencePair {
                source: encode(src_vocab, &pair.source)?,
                target: encode(tgt_vocab, &pair.target)?,
                line_no: pair.line_no,
            });
        }
        Ok(Bitext {
            pairs,
            src_vocab: src_vocab.clone(),
            tgt_vocab: tgt_vocab.clone(),
            direction_label: direction_label.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Swaps the roles of the two sides; used to train the opposite direction.
    pub fn reversed(&self, direction_label: &str) -> Bitext {
        let raw = self.to_raw();
        let flipped: Vec<RawPair> =
            raw.into_iter().map(|p| RawPair { line_no: p.line_no, source: p.target, target: p.source }).collect();
        Bitext::build(&flipped, direction_label, LoadOptions { max_len: usize::MAX })
    }

    /// Decodes the pairs back into surfaces. Unknown ids decode as `<UNK>`.
    pub fn to_raw(&self) -> Vec<RawPair> {
        let decode = |vocab: &Vocabulary, ids: &[TokenId]| -> Vec<String> {
            ids.iter().map(|&id| vocab.decode(id).unwrap_or("<UNK>").to_string()).collect()
        };
        self.pairs
            .iter()
            .map(|p| RawPair {
                line_no: p.line_no,
                source: decode(&self.src_vocab, &p.source),
                target: decode(&self.tgt_vocab, &p.target),
            })
            .collect()
    }
}

fn within_limit(pair: &RawPair, opts: LoadOptions) -> bool {
    if pair.source.len() > opts.max_len || pair.target.len() > opts.max_len {
        log::warn!(
            "line {}: skipping pair longer than {} tokens ({} / {})",
            pair.line_no,
            opts.max_len,
            pair.source.len(),
            pair.target.len()
        );
        return false;
    }
    true
}

fn read_file(path: &Path) -> Result<Vec<u8>, CorpusError> {
    fs::read(path).map_err(|source| CorpusError::Io { path: path.display().to_string(), source })
}

/// Splits raw bytes into UTF-8 lines, dropping a single trailing newline and `\r`.
fn split_lines(bytes: &[u8], name: &str) -> Result<Vec<String>, CorpusError> {
    let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    if body.is_empty() {
        return Ok(Vec::new());
    }
    body.split(|&b| b == b'\n')
        .enumerate()
        .map(|(i, line)| {
            let line = line.strip_suffix(b"\r").unwrap_or(line);
            String::from_utf8(line.to_vec())
                .map_err(|_| CorpusError::EncodingError { path: name.to_string(), line: i + 1 })
        })
        .collect()
}

fn tokenize(line: &str, name: &str, line_no: usize) -> Result<Vec<String>, CorpusError> {
    let tokens: Vec<String> = line.split_ascii_whitespace().map(str::to_string).collect();
    if tokens.is_empty() {
        return Err(CorpusError::EmptyLine { path: name.to_string(), line: line_no });
    }
    Ok(tokens)
}

fn zip_sides(
    src_lines: &[String],
    tgt_lines: &[String],
    src_name: &str,
    tgt_name: &str,
) -> Result<Vec<RawPair>, CorpusError> {
    if src_lines.len() != tgt_lines.len() {
        return Err(CorpusError::LineCountMismatch(src_lines.len(), tgt_lines.len()));
    }
    src_lines
        .iter()
        .zip(tgt_lines)
        .enumerate()
        .map(|(i, (s, t))| {
            Ok(RawPair { line_no: i + 1, source: tokenize(s, src_name, i + 1)?, target: tokenize(t, tgt_name, i + 1)? })
        })
        .collect()
}

/// Parses two in-memory documents, one sentence per line.
pub fn parse_parallel(src_text: &str, tgt_text: &str) -> Result<Vec<RawPair>, CorpusError> {
    let src = split_lines(src_text.as_bytes(), "<source>")?;
    let tgt = split_lines(tgt_text.as_bytes(), "<target>")?;
    zip_sides(&src, &tgt, "<source>", "<target>")
}

pub fn read_parallel(src_path: &Path, tgt_path: &Path) -> Result<Vec<RawPair>, CorpusError> {
    let src_name = src_path.display().to_string();
    let tgt_name = tgt_path.display().to_string();
    let src = split_lines(&read_file(src_path)?, &src_name)?;
    let tgt = split_lines(&read_file(tgt_path)?, &tgt_name)?;
    zip_sides(&src, &tgt, &src_name, &tgt_name)
}

/// Reads `source<TAB>target` lines.
pub fn read_tsv(path: &Path) -> Result<Vec<RawPair>, CorpusError> {
    let name = path.display().to_string();
    let lines = split_lines(&read_file(path)?, &name)?;
    lines
        .iter()
        .enumerate()
        .map(|(i, line)| {
            let (s, t) = line.split_once('\t').ok_or(CorpusError::MalformedTsv { path: name.clone(), line: i + 1 })?;
            Ok(RawPair { line_no: i + 1, source: tokenize(s, &name, i + 1)?, target: tokenize(t, &name, i + 1)? })
        })
        .collect()
}

pub fn load_bitext(src_path: &Path, tgt_path: &Path, direction_label: &str) -> Result<Bitext, CorpusError> {
    load_bitext_with(src_path, tgt_path, direction_label, LoadOptions::default())
}

pub fn load_bitext_with(
    src_path: &Path,
    tgt_path: &Path,
    direction_label: &str,
    opts: LoadOptions,
) -> Result<Bitext, CorpusError> {
    let raw = read_parallel(src_path, tgt_path)?;
    Ok(Bitext::build(&raw, direction_label, opts))
}
