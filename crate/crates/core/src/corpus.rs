//! Vocabularies, parallel corpora, and synthetic task generation.
//!
//! Tokenization is whitespace-only; corpora are expected pre-tokenized.
//! A vocabulary reserves three ids — pad 0, unk 1, end-of-sentence 2 — and
//! the sequence-start mark is the zero embedding rather than a token, so it
//! never appears here. Vocabulary files store one real token per line in
//! rank order; the specials are implicit. Parallel corpora are two
//! line-aligned UTF-8 text files, one sentence per line.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{io_error, Error, Result};
use crate::numerics::SeededRng;

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const END_ID: usize = 2;
/// Number of reserved ids preceding ranked tokens.
pub const SPECIALS: usize = 3;

pub const PAD_TOKEN: &str = "⟨pad⟩";
pub const UNK_TOKEN: &str = "⟨unk⟩";
pub const END_TOKEN: &str = "⟨eos⟩";

/// Ranked token table with dense ids.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Build from ranked tokens (specials are added here, not by the caller).
    pub fn from_ranked(ranked: Vec<String>) -> Result<Vocabulary> {
        let mut tokens =
            vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string(), END_TOKEN.to_string()];
        tokens.extend(ranked);
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if id >= SPECIALS {
                if tok.chars().any(char::is_whitespace) || tok.is_empty() {
                    return Err(Error::Parse(format!(
                        "vocabulary token {id} is empty or contains whitespace"
                    )));
                }
                if tok == PAD_TOKEN || tok == UNK_TOKEN || tok == END_TOKEN {
                    return Err(Error::Parse(format!("reserved token {tok} listed explicitly")));
                }
            }
            if index.insert(tok.clone(), id).is_some() {
                return Err(Error::Parse(format!("duplicate vocabulary token {tok}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    /// Total size including the three reserved ids.
    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Result<&str> {
        self.tokens
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| Error::Domain(format!("token id {id} >= vocabulary size {}", self.size())))
    }

    /// Whitespace-split a line and map tokens to ids, unk for out-of-vocabulary.
    pub fn encode_line(&self, line: &str) -> Vec<usize> {
        line.split_whitespace()
            .map(|tok| self.index.get(tok).copied().unwrap_or(UNK_ID))
            .collect()
    }

    /// Map pre-split tokens to ids, unk for out-of-vocabulary.
    pub fn encode_tokens(&self, tokens: &[String]) -> Vec<usize> {
        tokens
            .iter()
            .map(|tok| self.index.get(tok.as_str()).copied().unwrap_or(UNK_ID))
            .collect()
    }

    /// Map ids back to a space-joined line. Unknown positions render as the
    /// unk literal.
    pub fn decode_line(&self, ids: &[usize]) -> Result<String> {
        let mut words = Vec::with_capacity(ids.len());
        for &id in ids {
            words.push(self.token(id)?);
        }
        Ok(words.join(" "))
    }

    /// Write one ranked token per line (specials omitted).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        for tok in &self.tokens[SPECIALS..] {
            text.push_str(tok);
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| io_error(path, &e))
    }

    /// Load a ranked-token file written by [`Vocabulary::save`].
    pub fn load(path: &Path) -> Result<Vocabulary> {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, &e))?;
        Vocabulary::parse(&text)
    }

    /// Parse vocabulary file contents: one token per line, rank order.
    pub fn parse(text: &str) -> Result<Vocabulary> {
        let ranked: Vec<String> = text.lines().map(str::to_string).collect();
        Vocabulary::from_ranked(ranked)
    }
}

/// Count tokens and keep the `k` most frequent, ties broken lexicographically.
pub fn build_vocab<'a>(lines: impl IntoIterator<Item = &'a str>, k: usize) -> Result<Vocabulary> {
    if k < 1 {
        return Err(Error::Config("vocabulary budget must be >= 1".to_string()));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for line in lines {
        for tok in line.split_whitespace() {
            *counts.entry(tok).or_insert(0) += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::Input("empty corpus: no tokens to rank".to_string()));
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(k);
    Vocabulary::from_ranked(ranked.into_iter().map(|(t, _)| t.to_string()).collect())
}

/// Line-aligned sentence pairs, both sides nonempty.
#[derive(Debug, Clone, Default)]
pub struct ParallelCorpus {
    pub pairs: Vec<SentencePair>,
}

#[derive(Debug, Clone)]
pub struct SentencePair {
    pub source: Vec<String>,
    pub target: Vec<String>,
}

impl ParallelCorpus {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// All source lines re-joined with single spaces.
    pub fn source_lines(&self) -> Vec<String> {
        self.pairs.iter().map(|p| p.source.join(" ")).collect()
    }

    pub fn target_lines(&self) -> Vec<String> {
        self.pairs.iter().map(|p| p.target.join(" ")).collect()
    }

    pub fn save(&self, src_path: &Path, tgt_path: &Path) -> Result<()> {
        let mut src = String::new();
        let mut tgt = String::new();
        for pair in &self.pairs {
            src.push_str(&pair.source.join(" "));
            src.push('\n');
            tgt.push_str(&pair.target.join(" "));
            tgt.push('\n');
        }
        fs::write(src_path, src).map_err(|e| io_error(src_path, &e))?;
        fs::write(tgt_path, tgt).map_err(|e| io_error(tgt_path, &e))
    }
}

/// Load two line-aligned files. Pairs where either side tokenizes to nothing
/// are dropped; the second return value counts them.
pub fn load_parallel(src_path: &Path, tgt_path: &Path) -> Result<(ParallelCorpus, usize)> {
    let src = fs::read_to_string(src_path).map_err(|e| io_error(src_path, &e))?;
    let tgt = fs::read_to_string(tgt_path).map_err(|e| io_error(tgt_path, &e))?;
    parse_parallel(&src, &tgt)
}

/// Parse parallel corpus text (see [`load_parallel`]).
pub fn parse_parallel(src: &str, tgt: &str) -> Result<(ParallelCorpus, usize)> {
    let src_lines: Vec<&str> = src.lines().collect();
    let tgt_lines: Vec<&str> = tgt.lines().collect();
    if src_lines.len() != tgt_lines.len() {
        return Err(Error::Input(format!(
            "parallel files disagree: {} source lines vs {} target lines",
            src_lines.len(),
            tgt_lines.len()
        )));
    }
    let mut pairs = Vec::new();
    let mut skipped = 0;
    for (s, t) in src_lines.iter().zip(&tgt_lines) {
        let source: Vec<String> = s.split_whitespace().map(str::to_string).collect();
        let target: Vec<String> = t.split_whitespace().map(str::to_string).collect();
        if source.is_empty() || target.is_empty() {
            skipped += 1;
            continue;
        }
        pairs.push(SentencePair { source, target });
    }
    Ok((ParallelCorpus { pairs }, skipped))
}

/// Synthetic task family for desk-scale experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    /// Target repeats the source.
    Copy,
    /// Target is the source reversed.
    Reverse,
    /// Target maps every token through a fixed seeded bijection, then swaps
    /// the adjacent pair starting at every third position (0-1, 3-4, ...).
    LexiconSwap,
}

impl TaskKind {
    pub fn parse(name: &str) -> Result<TaskKind> {
        match name {
            "copy" => Ok(TaskKind::Copy),
            "reverse" => Ok(TaskKind::Reverse),
            "lexicon_swap" => Ok(TaskKind::LexiconSwap),
            other => Err(Error::Config(format!(
                "unknown task kind {other:?} (copy, reverse, lexicon_swap)"
            ))),
        }
    }
}

/// Generate a reproducible corpus for `kind`. Tokens are the decimal strings
/// `"0" .. vocab_size-1`; lengths are uniform in `min_len..=max_len`.
pub fn synth_task(
    kind: TaskKind,
    vocab_size: usize,
    min_len: usize,
    max_len: usize,
    count: usize,
    seed: u64,
) -> Result<ParallelCorpus> {
    if vocab_size < 2 {
        return Err(Error::Config(format!("task vocabulary {vocab_size} must be >= 2")));
    }
    if min_len < 1 || min_len > max_len {
        return Err(Error::Config(format!("invalid length range {min_len}..={max_len}")));
    }
    if count < 1 {
        return Err(Error::Config("pair count must be >= 1".to_string()));
    }
    let rng = SeededRng::from_seed(seed);
    let mapping = rng.fork(1).permutation(vocab_size);
    let mut draw = rng.fork(2);

    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let len = min_len + draw.next_below(max_len - min_len + 1);
        let source: Vec<usize> = (0..len).map(|_| draw.next_below(vocab_size)).collect();
        let target: Vec<usize> = match kind {
            TaskKind::Copy => source.clone(),
            TaskKind::Reverse => source.iter().rev().copied().collect(),
            TaskKind::LexiconSwap => {
                let mut mapped: Vec<usize> = source.iter().map(|&t| mapping[t]).collect();
                swap_adjacent_pairs(&mut mapped);
                mapped
            }
        };
        pairs.push(SentencePair {
            source: source.iter().map(usize::to_string).collect(),
            target: target.iter().map(usize::to_string).collect(),
        });
    }
    Ok(ParallelCorpus { pairs })
}

/// The fixed local reordering of the lexicon-swap task: swap (i, i+1) for
/// every i divisible by 3.
pub fn swap_adjacent_pairs<T>(items: &mut [T]) {
    let mut i = 0;
    while i + 1 < items.len() {
        items.swap(i, i + 1);
        i += 3;
    }
}
