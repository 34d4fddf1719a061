//! Labeled datasets tagged as in-distribution (IID) or out-of-distribution (OOD).
//!
//! Files are JSON-lines, one `{"text": .., "label": .., "id": ..}` object per line.
//! Token sequences are produced by the audited model's tokenizer (see
//! [`tokenize_corpus`]) so that triggers live in the model's own vocabulary.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adapter::ModelAdapter;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SplitTag {
    #[serde(rename = "IID")]
    Iid,
    #[serde(rename = "OOD")]
    Ood,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitTag::Iid => f.write_str("IID"),
            SplitTag::Ood => f.write_str("OOD"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledExample {
    pub id: String,
    pub text: String,
    /// Empty until the corpus has been tokenized.
    pub tokens: Vec<String>,
    pub gold_label: usize,
}

#[derive(Clone, Debug)]
pub struct Corpus {
    examples: Vec<LabeledExample>,
    label_names: Vec<String>,
    split_tag: SplitTag,
    source: String,
    tokenizer: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawLabel {
    Index(i64),
    Name(String),
}

#[derive(Deserialize)]
struct RawLine {
    text: String,
    label: RawLabel,
    #[serde(default)]
    id: Option<String>,
}

#[derive(Serialize)]
struct OutLine<'a> {
    id: &'a str,
    text: &'a str,
    label: &'a str,
}

impl Corpus {
    /// Builds a corpus from already-resolved examples, checking id uniqueness and label range.
    pub fn new(
        examples: Vec<LabeledExample>,
        label_names: Vec<String>,
        split_tag: SplitTag,
        source: impl Into<String>,
    ) -> Result<Self> {
        if label_names.is_empty() {
            return Err(Error::Config("label set is empty".into()));
        }
        let mut seen = HashSet::with_capacity(examples.len());
        for ex in &examples {
            if ex.gold_label >= label_names.len() {
                return Err(Error::Load(format!(
                    "example '{}' has label id {} outside the label set of size {}",
                    ex.id,
                    ex.gold_label,
                    label_names.len()
                )));
            }
            if !seen.insert(ex.id.as_str()) {
                return Err(Error::Load(format!("duplicate example id '{}'", ex.id)));
            }
        }
        Ok(Corpus {
            examples,
            label_names,
            split_tag,
            source: source.into(),
            tokenizer: None,
        })
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn label_count(&self) -> usize {
        self.label_names.len()
    }

    pub fn split_tag(&self) -> SplitTag {
        self.split_tag
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Identity of the adapter whose tokenizer filled `tokens`, if any.
    pub fn tokenizer(&self) -> Option<&str> {
        self.tokenizer.as_deref()
    }

    pub fn is_tokenized(&self) -> bool {
        self.tokenizer.is_some()
    }

    pub fn golds(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.gold_label).collect()
    }

    /// Serializes as JSON-lines with label names, readable by [`load_corpus`].
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for ex in &self.examples {
            let line = OutLine {
                id: &ex.id,
                text: &ex.text,
                label: &self.label_names[ex.gold_label],
            };
            out.push_str(&serde_json::to_string(&line).expect("plain struct serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    /// SHA-256 over ids, texts and labels; stable across tokenization.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for name in &self.label_names {
            h.update(name.as_bytes());
            h.update([0u8]);
        }
        for ex in &self.examples {
            h.update(ex.id.as_bytes());
            h.update([0u8]);
            h.update(ex.text.as_bytes());
            h.update([0u8]);
            h.update((ex.gold_label as u64).to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

fn resolve_label(raw: RawLabel, label_names: &[String], line_no: usize) -> Result<usize> {
    match raw {
        RawLabel::Name(name) => label_names
            .iter()
            .position(|l| *l == name)
            .ok_or_else(|| Error::Load(format!("unknown label '{name}' at line {line_no}"))),
        RawLabel::Index(i) => {
            if i >= 0 && (i as usize) < label_names.len() {
                Ok(i as usize)
            } else {
                Err(Error::Load(format!(
                    "unknown label '{i}' at line {line_no}"
                )))
            }
        }
    }
}

/// Parses JSON-lines text. Line numbers in errors are 1-based. Blank lines are skipped.
pub fn parse_corpus(
    contents: &str,
    label_names: &[String],
    split_tag: SplitTag,
    source: &str,
) -> Result<Corpus> {
    let mut examples = Vec::new();
    for (i, line) in contents.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawLine = serde_json::from_str(line)
            .map_err(|e| Error::Load(format!("malformed JSON at line {line_no}: {e}")))?;
        let gold_label = resolve_label(raw.label, label_names, line_no)?;
        let id = raw.id.unwrap_or_else(|| examples.len().to_string());
        examples.push(LabeledExample {
            id,
            text: raw.text,
            tokens: Vec::new(),
            gold_label,
        });
    }
    Corpus::new(examples, label_names.to_vec(), split_tag, source)
}

pub fn load_corpus(
    path: impl AsRef<Path>,
    label_names: &[String],
    split_tag: SplitTag,
) -> Result<Corpus> {
    let path = path.as_ref();
    let contents = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(
        &contents,
        label_names,
        split_tag,
        &path.display().to_string(),
    )
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TokenizeStats {
    pub adapter_calls: usize,
    pub dropped: usize,
}

/// Tokenizes every example with the adapter's tokenizer in batches of `adapter.batch_size()`.
///
/// Examples that tokenize to nothing are dropped. On adapter failure the input
/// corpus is left as it was and the error is returned.
pub fn tokenize_corpus(
    corpus: &Corpus,
    adapter: &dyn ModelAdapter,
) -> Result<(Corpus, TokenizeStats)> {
    let identity = adapter.identity();
    if corpus.tokenizer.as_deref() == Some(identity.as_str()) {
        return Ok((corpus.clone(), TokenizeStats::default()));
    }
    let batch = adapter.batch_size().max(1);
    let mut stats = TokenizeStats::default();
    let mut examples = Vec::with_capacity(corpus.len());
    for chunk in corpus.examples.chunks(batch) {
        let texts: Vec<String> = chunk.iter().map(|e| e.text.clone()).collect();
        let tokenized = adapter.tokenize_batch(&texts)?;
        stats.adapter_calls += 1;
        if tokenized.len() != chunk.len() {
            return Err(Error::Protocol(format!(
                "tokenizer returned {} sequences for {} texts",
                tokenized.len(),
                chunk.len()
            )));
        }
        for (ex, tokens) in chunk.iter().zip(tokenized) {
            if tokens.is_empty() {
                stats.dropped += 1;
                continue;
            }
            examples.push(LabeledExample {
                tokens,
                ..ex.clone()
            });
        }
    }
    if stats.dropped > 0 {
        log::warn!(
            "dropped {} example(s) with no tokens from {}",
            stats.dropped,
            corpus.source
        );
    }
    let out = Corpus {
        examples,
        label_names: corpus.label_names.clone(),
        split_tag: corpus.split_tag,
        source: corpus.source.clone(),
        tokenizer: Some(identity),
    };
    Ok((out, stats))
}

/// Draws `min(n, |corpus|)` distinct examples uniformly without replacement.
/// The result order is a deterministic function of `seed`.
pub fn sample_examples(corpus: &Corpus, n: usize, seed: u64) -> Result<Vec<&LabeledExample>> {
    if n == 0 {
        return Err(Error::Config("sample size must be positive".into()));
    }
    if corpus.is_empty() {
        return Err(Error::Contract("cannot sample from an empty corpus".into()));
    }
    let len = corpus.len();
    let take = n.min(len);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, len, take)
        .into_iter()
        .map(|i| &corpus.examples[i])
        .collect())
}
