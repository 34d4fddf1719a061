//! `E(w)`: the examples of a corpus that contain trigger `w`.
//!
//! Containment is an ordered subsequence with gaps allowed, matched greedily
//! left to right; each trigger token consumes its own position, so a trigger
//! with `k` copies of a token needs `k` occurrences. [`MatchMode::Contiguous`]
//! requires the trigger to appear as a contiguous run instead.
//!
//! [`TriggerIndex`] answers these queries from positional postings: candidate
//! documents come from intersecting postings rarest-first, and each candidate
//! is then verified against the positions.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, SplitTag};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    #[default]
    Subsequence,
    Contiguous,
}

/// True iff `trigger` occurs in `tokens` as an order-preserving subsequence.
pub fn contains_trigger(tokens: &[String], trigger: &[String]) -> bool {
    let mut rest = tokens.iter();
    trigger.iter().all(|t| rest.any(|x| x == t))
}

/// True iff `trigger` occurs in `tokens` as a contiguous run. The empty trigger
/// is contained everywhere, as for subsequences.
pub fn contains_contiguous(tokens: &[String], trigger: &[String]) -> bool {
    trigger.is_empty() || tokens.windows(trigger.len()).any(|w| w == trigger)
}

pub fn contains(tokens: &[String], trigger: &[String], mode: MatchMode) -> bool {
    match mode {
        MatchMode::Subsequence => contains_trigger(tokens, trigger),
        MatchMode::Contiguous => contains_contiguous(tokens, trigger),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Posting {
    /// Position of the example in its corpus.
    pub doc: u32,
    /// Sorted token positions within the example.
    pub positions: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchSet {
    pub trigger: Vec<String>,
    /// Corpus positions of matching examples, ascending.
    pub indices: Vec<usize>,
    pub example_ids: Vec<String>,
    pub corpus_tag: SplitTag,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TriggerIndex {
    postings: HashMap<String, Vec<Posting>>,
    doc_ids: Vec<String>,
    tag: SplitTag,
    key: String,
}

fn index_key(corpus: &Corpus) -> String {
    let mut h = Sha256::new();
    h.update(corpus.content_hash().as_bytes());
    h.update([0u8]);
    h.update(corpus.tokenizer().unwrap_or("").as_bytes());
    hex::encode(h.finalize())
}

pub fn build_index(corpus: &Corpus) -> Result<TriggerIndex> {
    if !corpus.is_empty() && !corpus.is_tokenized() {
        return Err(Error::Contract(
            "corpus must be tokenized before indexing".into(),
        ));
    }
    if corpus.len() > u32::MAX as usize {
        return Err(Error::Contract("corpus too large to index".into()));
    }
    let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
    for (doc, ex) in corpus.examples().iter().enumerate() {
        let mut local: HashMap<&str, Vec<u32>> = HashMap::new();
        for (pos, tok) in ex.tokens.iter().enumerate() {
            local.entry(tok.as_str()).or_default().push(pos as u32);
        }
        for (tok, positions) in local {
            postings.entry(tok.to_owned()).or_default().push(Posting {
                doc: doc as u32,
                positions,
            });
        }
    }
    Ok(TriggerIndex {
        postings,
        doc_ids: corpus.examples().iter().map(|e| e.id.clone()).collect(),
        tag: corpus.split_tag(),
        key: index_key(corpus),
    })
}

fn posting_for(list: &[Posting], doc: u32) -> Option<&Posting> {
    list.binary_search_by_key(&doc, |p| p.doc)
        .ok()
        .map(|i| &list[i])
}

impl TriggerIndex {
    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn corpus_tag(&self) -> SplitTag {
        self.tag
    }

    pub fn postings(&self, token: &str) -> Option<&[Posting]> {
        self.postings.get(token).map(Vec::as_slice)
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn document_frequency(&self, token: &str) -> usize {
        self.postings.get(token).map_or(0, Vec::len)
    }

    pub fn find_matches(&self, trigger: &[String], mode: MatchMode) -> Result<MatchSet> {
        if trigger.is_empty() {
            return Err(Error::Contract("trigger must be non-empty".into()));
        }
        let mut need: BTreeMap<&str, usize> = BTreeMap::new();
        for t in trigger {
            *need.entry(t.as_str()).or_default() += 1;
        }
        let mut lists = Vec::with_capacity(need.len());
        for (tok, &count) in &need {
            match self.postings.get(*tok) {
                Some(list) => lists.push((list.as_slice(), count)),
                None => return Ok(self.match_set(trigger, Vec::new())),
            }
        }
        lists.sort_by_key(|(list, _)| list.len());

        let (rarest, rarest_count) = lists[0];
        let mut candidates: Vec<u32> = rarest
            .iter()
            .filter(|p| p.positions.len() >= rarest_count)
            .map(|p| p.doc)
            .collect();
        for &(list, count) in &lists[1..] {
            candidates
                .retain(|&doc| posting_for(list, doc).is_some_and(|p| p.positions.len() >= count));
            if candidates.is_empty() {
                break;
            }
        }

        let indices = candidates
            .into_iter()
            .filter(|&doc| self.verify(doc, trigger, mode))
            .map(|doc| doc as usize)
            .collect();
        Ok(self.match_set(trigger, indices))
    }

    fn positions(&self, tok: &str, doc: u32) -> &[u32] {
        self.postings
            .get(tok)
            .and_then(|l| posting_for(l, doc))
            .map_or(&[], |p| p.positions.as_slice())
    }

    fn verify(&self, doc: u32, trigger: &[String], mode: MatchMode) -> bool {
        match mode {
            MatchMode::Subsequence => {
                let mut next = 0u32;
                for tok in trigger {
                    let pos = self.positions(tok, doc);
                    let i = pos.partition_point(|&p| p < next);
                    match pos.get(i) {
                        Some(&p) => next = p + 1,
                        None => return false,
                    }
                }
                true
            }
            MatchMode::Contiguous => {
                let first = self.positions(&trigger[0], doc);
                first.iter().any(|&start| {
                    trigger[1..].iter().enumerate().all(|(i, tok)| {
                        self.positions(tok, doc)
                            .binary_search(&(start + 1 + i as u32))
                            .is_ok()
                    })
                })
            }
        }
    }

    fn match_set(&self, trigger: &[String], indices: Vec<usize>) -> MatchSet {
        MatchSet {
            trigger: trigger.to_vec(),
            example_ids: indices.iter().map(|&i| self.doc_ids[i].clone()).collect(),
            indices,
            corpus_tag: self.tag,
        }
    }

    /// Writes the index to a binary cache file.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.encode(&mut buf).map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Loads a cache file written by [`TriggerIndex::save`]. Returns `Ok(None)`
    /// when the file was built from different corpus contents or tokenization.
    pub fn load_cached(path: impl AsRef<Path>, corpus: &Corpus) -> Result<Option<Self>> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let index = Self::decode(&mut bytes.as_slice())
            .map_err(|e| Error::Load(format!("{}: corrupt index cache: {e}", path.display())))?;
        Ok((index.key == index_key(corpus)).then_some(index))
    }

    /// Loads from `path` when the cache is valid, otherwise builds and rewrites it.
    pub fn cached(path: impl AsRef<Path>, corpus: &Corpus) -> Result<Self> {
        let path = path.as_ref();
        if path.exists() {
            match Self::load_cached(path, corpus) {
                Ok(Some(index)) => return Ok(index),
                Ok(None) => log::info!("index cache {} is stale; rebuilding", path.display()),
                Err(e) => log::warn!("{e}; rebuilding"),
            }
        }
        let index = build_index(corpus)?;
        index.save(path)?;
        Ok(index)
    }

    fn encode(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(CACHE_MAGIC)?;
        write_str(w, &self.key)?;
        w.write_all(&[matches!(self.tag, SplitTag::Ood) as u8])?;
        write_u32(w, self.doc_ids.len() as u32)?;
        for id in &self.doc_ids {
            write_str(w, id)?;
        }
        let mut tokens: Vec<&String> = self.postings.keys().collect();
        tokens.sort();
        write_u32(w, tokens.len() as u32)?;
        for tok in tokens {
            write_str(w, tok)?;
            let list = &self.postings[tok];
            write_u32(w, list.len() as u32)?;
            for p in list {
                write_u32(w, p.doc)?;
                write_u32(w, p.positions.len() as u32)?;
                for &pos in &p.positions {
                    write_u32(w, pos)?;
                }
            }
        }
        Ok(())
    }

    fn decode(r: &mut impl Read) -> io::Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "bad magic"));
        }
        let key = read_str(r)?;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let tag = if tag[0] == 1 {
            SplitTag::Ood
        } else {
            SplitTag::Iid
        };
        let n_docs = read_u32(r)? as usize;
        let doc_ids = (0..n_docs)
            .map(|_| read_str(r))
            .collect::<io::Result<Vec<_>>>()?;
        let n_tokens = read_u32(r)? as usize;
        let mut postings = HashMap::with_capacity(n_tokens);
        for _ in 0..n_tokens {
            let tok = read_str(r)?;
            let n = read_u32(r)? as usize;
            let mut list = Vec::with_capacity(n);
            for _ in 0..n {
                let doc = read_u32(r)?;
                let np = read_u32(r)? as usize;
                let positions = (0..np)
                    .map(|_| read_u32(r))
                    .collect::<io::Result<Vec<_>>>()?;
                list.push(Posting { doc, positions });
            }
            postings.insert(tok, list);
        }
        Ok(TriggerIndex {
            postings,
            doc_ids,
            tag,
            key,
        })
    }
}

const CACHE_MAGIC: &[u8; 8] = b"SCIDX\x00\x00\x01";

fn write_u32(w: &mut impl Write, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_str(w: &mut impl Write, s: &str) -> io::Result<()> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_str(r: &mut impl Read) -> io::Result<String> {
    let n = read_u32(r)? as usize;
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}
