//! Semantic representations of token collections: TF-IDF ranked lists and
//! averaged word embeddings, plus their linear combination.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::ContextWindow;
use crate::error::{CrmError, Result};

/// Default cap on ranked-list length.
pub const DEFAULT_RANKED_LIST_CAP: usize = 1000;

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReprKind {
    RankedList,
    Embedding,
}

impl std::str::FromStr for ReprKind {
    type Err = CrmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "ranked_list" | "ranked" | "rl" => Ok(ReprKind::RankedList),
            "embedding" | "word_embedding" | "we" => Ok(ReprKind::Embedding),
            other => Err(CrmError::InvalidArgument(format!(
                "unknown representation {other:?}"
            ))),
        }
    }
}

/// Tokens sorted by descending weight, ties broken by token. Holds at most
/// `max_len` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    entries: Vec<(String, f64)>,
    max_len: usize,
}

fn rank_order(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.cmp(&b.0))
}

impl RankedList {
    /// Sorts and truncates arbitrary (token, weight) pairs. Tokens must be unique.
    pub fn from_weights<I>(weights: I, max_len: usize) -> Self
    where
        I: IntoIterator<Item = (String, f64)>,
    {
        let mut entries: Vec<(String, f64)> = weights.into_iter().collect();
        entries.sort_by(rank_order);
        entries.truncate(max_len);
        RankedList { entries, max_len }
    }

    pub fn empty(max_len: usize) -> Self {
        RankedList {
            entries: Vec::new(),
            max_len,
        }
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn weight(&self, token: &str) -> Option<f64> {
        self.entries.iter().find(|(t, _)| t == token).map(|(_, w)| *w)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(t, _)| t.as_str())
    }

    /// Keeps the first `max_len` entries. Surviving entries keep their order.
    pub fn truncated(&self, max_len: usize) -> RankedList {
        RankedList {
            entries: self.entries.iter().take(max_len).cloned().collect(),
            max_len: max_len.min(self.max_len),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CrmError::InvalidArgument("non-finite embedding component".into()));
        }
        Ok(EmbeddingVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Pretrained word vectors keyed by token.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingLexicon {
    dim: usize,
    vectors: HashMap<String, EmbeddingVector>,
}

impl EmbeddingLexicon {
    pub fn new(dim: usize) -> Self {
        EmbeddingLexicon {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, token: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.dim {
            return Err(CrmError::DimensionMismatch(self.dim, values.len()));
        }
        self.vectors.insert(token.into(), EmbeddingVector::new(values)?);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&EmbeddingVector> {
        self.vectors.get(token)
    }

    /// Reads `token v1 v2 ... vd` lines. A leading `count dim` header line
    /// (word2vec text format) is skipped. Every vector must share the
    /// dimension of the first one; the first occurrence of a token wins.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| CrmError::io(path, e))?;
        Self::read_from(BufReader::new(file), path)
    }

    pub fn read_from<R: BufRead>(reader: R, path: &Path) -> Result<Self> {
        let mut lexicon: Option<EmbeddingLexicon> = None;
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let perr = |message: String| CrmError::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message,
            };
            let line = line.map_err(|e| perr(e.to_string()))?;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else { continue };
            let values: Vec<f64> = fields
                .map(|f| f.parse::<f64>().map_err(|_| perr(format!("bad number {f:?}"))))
                .collect::<Result<_>>()?;
            if i == 0 && values.len() == 1 && token.parse::<usize>().is_ok() {
                continue;
            }
            if values.is_empty() {
                return Err(perr("token without vector".into()));
            }
            let lex = lexicon.get_or_insert_with(|| EmbeddingLexicon::new(values.len()));
            if values.len() != lex.dim {
                return Err(perr(format!(
                    "dimension {} differs from {}",
                    values.len(),
                    lex.dim
                )));
            }
            if !lex.vectors.contains_key(token) {
                lex.insert(token, values).map_err(|e| perr(e.to_string()))?;
            }
        }
        lexicon.ok_or_else(|| CrmError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "no vectors".into(),
        })
    }

    /// Writes the text format read by [`EmbeddingLexicon::read_from`], tokens
    /// sorted.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut keys: Vec<&String> = self.vectors.keys().collect();
        keys.sort();
        writeln!(out, "{} {}", keys.len(), self.dim)?;
        for k in keys {
            write!(out, "{k}")?;
            for v in self.vectors[k].values() {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Order-independent SHA-256 of the lexicon contents.
    pub fn content_hash(&self) -> String {
        let mut keys: Vec<&String> = self.vectors.keys().collect();
        keys.sort();
        let mut hasher = Sha256::new();
        hasher.update((self.dim as u64).to_le_bytes());
        for k in keys {
            hasher.update(k.as_bytes());
            hasher.update([0u8]);
            for v in self.vectors[k].values() {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

/// R(·): a representation in one of the two supported forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticRepr {
    Ranked(RankedList),
    Embedding(EmbeddingVector),
}

impl SemanticRepr {
    pub fn kind(&self) -> ReprKind {
        match self {
            SemanticRepr::Ranked(_) => ReprKind::RankedList,
            SemanticRepr::Embedding(_) => ReprKind::Embedding,
        }
    }

    /// Caps ranked lists at `max_len`; embeddings pass through.
    pub fn capped(&self, max_len: usize) -> SemanticRepr {
        match self {
            SemanticRepr::Ranked(r) if r.len() > max_len => SemanticRepr::Ranked(r.truncated(max_len)),
            other => other.clone(),
        }
    }
}

/// Raw term frequency times natural-log inverse window frequency, pooled over
/// all `collections`. Tokens missing from `doc_freq` count as df = 1.
pub fn tfidf_ranked_list<'a, C, I>(
    collections: C,
    doc_freq: &HashMap<String, usize>,
    total_windows: usize,
    max_len: usize,
) -> Result<RankedList>
where
    C: IntoIterator<Item = I>,
    I: IntoIterator<Item = &'a String>,
{
    let mut tf: BTreeMap<&str, usize> = BTreeMap::new();
    for coll in collections {
        for t in coll {
            *tf.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    if tf.is_empty() {
        return Ok(RankedList::empty(max_len));
    }
    if total_windows == 0 {
        return Err(CrmError::InvalidArgument("total window count is zero".into()));
    }
    let n = total_windows as f64;
    let mut weights = Vec::with_capacity(tf.len());
    for (token, count) in tf {
        let df = doc_freq.get(token).copied().unwrap_or(0).max(1);
        if df > total_windows {
            return Err(CrmError::InvalidArgument(format!(
                "document frequency {df} of {token:?} exceeds window count {total_windows}"
            )));
        }
        weights.push((token.to_string(), count as f64 * (n / df as f64).ln()));
    }
    Ok(RankedList::from_weights(weights, max_len))
}

/// Component-wise mean over in-lexicon tokens.
pub fn embed_average<'a, I>(tokens: I, lexicon: &EmbeddingLexicon) -> Result<EmbeddingVector>
where
    I: IntoIterator<Item = &'a String>,
{
    let mut sum = vec![0.0; lexicon.dim()];
    let mut count = 0usize;
    for t in tokens {
        if let Some(v) = lexicon.get(t) {
            for (s, x) in sum.iter_mut().zip(v.values()) {
                *s += x;
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(CrmError::NoEmbeddableTokens);
    }
    let n = count as f64;
    Ok(EmbeddingVector(sum.into_iter().map(|s| s / n).collect()))
}

/// Mean of several vectors of equal dimension.
pub fn mean_vector<'a, I>(vectors: I) -> Result<EmbeddingVector>
where
    I: IntoIterator<Item = &'a EmbeddingVector>,
{
    let mut iter = vectors.into_iter();
    let first = iter.next().ok_or(CrmError::NoEmbeddableTokens)?;
    let mut sum = first.values().to_vec();
    let mut count = 1usize;
    for v in iter {
        if v.dim() != sum.len() {
            return Err(CrmError::DimensionMismatch(sum.len(), v.dim()));
        }
        for (s, x) in sum.iter_mut().zip(v.values()) {
            *s += x;
        }
        count += 1;
    }
    let n = count as f64;
    Ok(EmbeddingVector(sum.into_iter().map(|s| s / n).collect()))
}

/// Weighted linear combination of same-kind representations.
///
/// Ranked lists are summed over the union of their tokens and re-ranked; the
/// result is capped at the largest `max_len` among the inputs.
pub fn combine(reprs: &[&SemanticRepr], weights: &[f64]) -> Result<SemanticRepr> {
    if reprs.is_empty() {
        return Err(CrmError::InvalidArgument("nothing to combine".into()));
    }
    if reprs.len() != weights.len() {
        return Err(CrmError::InvalidArgument(format!(
            "{} representations but {} weights",
            reprs.len(),
            weights.len()
        )));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE * weights.len() as f64 {
        return Err(CrmError::InvalidArgument(format!("weights sum to {total}, not 1")));
    }

    match reprs[0] {
        SemanticRepr::Embedding(first) => {
            let mut out = vec![0.0; first.dim()];
            for (repr, w) in reprs.iter().zip(weights) {
                let SemanticRepr::Embedding(v) = repr else {
                    return Err(CrmError::KindMismatch);
                };
                if v.dim() != out.len() {
                    return Err(CrmError::DimensionMismatch(out.len(), v.dim()));
                }
                for (o, x) in out.iter_mut().zip(v.values()) {
                    *o += w * x;
                }
            }
            Ok(SemanticRepr::Embedding(EmbeddingVector(out)))
        }
        SemanticRepr::Ranked(_) => {
            let mut sum: BTreeMap<&str, f64> = BTreeMap::new();
            let mut max_len = 0;
            for (repr, w) in reprs.iter().zip(weights) {
                let SemanticRepr::Ranked(list) = repr else {
                    return Err(CrmError::KindMismatch);
                };
                max_len = max_len.max(list.max_len());
                for (t, x) in list.entries() {
                    *sum.entry(t.as_str()).or_insert(0.0) += w * x;
                }
            }
            Ok(SemanticRepr::Ranked(RankedList::from_weights(
                sum.into_iter().map(|(t, x)| (t.to_string(), x)),
                max_len,
            )))
        }
    }
}

/// Builds R(·) for token collections in the configured mode. Ranked lists
/// come out uncapped so that combinations see full weight maps; callers cap
/// them before comparing.
#[derive(Debug, Clone, Copy)]
pub enum Representer<'a> {
    Ranked {
        doc_freq: &'a HashMap<String, usize>,
        total_windows: usize,
    },
    Embedding {
        lexicon: &'a EmbeddingLexicon,
    },
}

impl<'a> Representer<'a> {
    pub fn kind(&self) -> ReprKind {
        match self {
            Representer::Ranked { .. } => ReprKind::RankedList,
            Representer::Embedding { .. } => ReprKind::Embedding,
        }
    }

    /// Representation of a single token collection.
    pub fn tokens<'t, I>(&self, tokens: I) -> Result<SemanticRepr>
    where
        I: IntoIterator<Item = &'t String>,
    {
        match *self {
            Representer::Ranked {
                doc_freq,
                total_windows,
            } => Ok(SemanticRepr::Ranked(tfidf_ranked_list(
                [tokens],
                doc_freq,
                total_windows,
                usize::MAX,
            )?)),
            Representer::Embedding { lexicon } => {
                Ok(SemanticRepr::Embedding(embed_average(tokens, lexicon)?))
            }
        }
    }

    /// Mean representation of a set of windows: a TF-IDF list pooled over
    /// every window, or the mean of per-window average embeddings. Windows
    /// without any in-lexicon token do not count towards the embedding mean.
    pub fn windows(&self, windows: &[&ContextWindow]) -> Result<SemanticRepr> {
        match *self {
            Representer::Ranked {
                doc_freq,
                total_windows,
            } => Ok(SemanticRepr::Ranked(tfidf_ranked_list(
                windows.iter().map(|w| w.tokens()),
                doc_freq,
                total_windows,
                usize::MAX,
            )?)),
            Representer::Embedding { lexicon } => {
                let per_window: Vec<EmbeddingVector> = windows
                    .iter()
                    .filter_map(|w| embed_average(w.tokens(), lexicon).ok())
                    .collect();
                Ok(SemanticRepr::Embedding(mean_vector(&per_window)?))
            }
        }
    }
}
