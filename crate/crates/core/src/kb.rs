//! Local knowledge-base snapshot: candidate gathering, matching against the
//! localized context, and the KB-adjusted context.
//!
//! Snapshot files are UTF-8 JSON lines. An optional first line `#crm-kb v1`
//! marks the format version; other lines starting with `#` are comments.
//! Each record:
//!
//! ```text
//! {"id": "dbr:Hot_dog", "label": "Hot dog", "abstract": "...",
//!  "types": ["dbo:Food"], "redirects": ["hotdog"],
//!  "disambiguations": ["hot dog (disambiguation)"], "source": "encyclopedia"}
//! ```
//!
//! `redirects` lists labels that redirect to this entry and `disambiguations`
//! lists labels of disambiguation pages that link to it. `source` is
//! `encyclopedia` or `dictionary`. Only `id` and `label` are required.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{find_occurrences, tokenize, Phrase};
use crate::error::{CrmError, Result};
use crate::representation::{combine, Representer, SemanticRepr};
use crate::similarity::{score_similarity, SimilarityMeasure};

pub const DEFAULT_KB_THRESHOLD: f64 = 0.5;
const KB_HEADER: &str = "#crm-kb v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KbSource {
    #[default]
    Encyclopedia,
    Dictionary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbEntry {
    pub id: String,
    pub label: String,
    #[serde(default, rename = "abstract")]
    pub abstract_text: String,
    #[serde(default)]
    pub types: Vec<String>,
    #[serde(default, rename = "redirects")]
    pub redirect_labels: Vec<String>,
    #[serde(default, rename = "disambiguations")]
    pub disambiguation_labels: Vec<String>,
    #[serde(default)]
    pub source: KbSource,
}

fn key(label: &str) -> String {
    Phrase::parse(label).to_string()
}

/// Splits a type IRI or CURIE down to its local name, then breaks camel case:
/// `http://dbpedia.org/ontology/MusicGenre` becomes `music genre`.
fn type_words(ty: &str) -> String {
    let local = ty.rsplit(['/', '#', ':']).next().unwrap_or(ty);
    let mut out = String::with_capacity(local.len() + 4);
    let mut prev_lower = false;
    for c in local.chars() {
        if c.is_uppercase() && prev_lower {
            out.push(' ');
        }
        prev_lower = c.is_lowercase() || c.is_ascii_digit();
        out.push(if c == '_' { ' ' } else { c });
    }
    out
}

/// Label, abstract and type tokens of a candidate. Occurrences of the title
/// are removed from the abstract.
pub fn candidate_context(entry: &KbEntry) -> Vec<String> {
    let mut tokens = tokenize(&entry.label);
    let title = tokenize(&entry.label);
    let body = tokenize(&entry.abstract_text);
    let hits = find_occurrences(&body, &title);
    let mut hits = hits.into_iter().peekable();
    let mut skip_until = 0;
    for (i, tok) in body.into_iter().enumerate() {
        while let Some(&h) = hits.peek() {
            if h > i {
                break;
            }
            skip_until = skip_until.max(h + title.len());
            hits.next();
        }
        if i >= skip_until {
            tokens.push(tok);
        }
    }
    for ty in &entry.types {
        tokens.extend(tokenize(&type_words(ty)));
    }
    tokens
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    entries: Vec<KbEntry>,
    by_label: HashMap<String, Vec<usize>>,
    by_redirect: HashMap<String, Vec<usize>>,
    by_disambiguation: HashMap<String, Vec<usize>>,
}

/// Result of loading a snapshot: the knowledge base plus one message per
/// skipped record.
#[derive(Debug, Default)]
pub struct KbLoad {
    pub kb: KnowledgeBase,
    pub warnings: Vec<String>,
}

impl KnowledgeBase {
    pub fn new(entries: Vec<KbEntry>) -> Result<Self> {
        let mut entries = entries;
        entries.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(pair) = entries.windows(2).find(|p| p[0].id == p[1].id) {
            return Err(CrmError::InvalidArgument(format!("duplicate KB id {}", pair[0].id)));
        }
        if let Some(e) = entries.iter().find(|e| key(&e.label).is_empty()) {
            return Err(CrmError::InvalidArgument(format!("KB entry {} has an empty label", e.id)));
        }
        let mut kb = KnowledgeBase {
            entries,
            ..Default::default()
        };
        for (i, e) in kb.entries.iter().enumerate() {
            kb.by_label.entry(key(&e.label)).or_default().push(i);
            for r in &e.redirect_labels {
                kb.by_redirect.entry(key(r)).or_default().push(i);
            }
            for d in &e.disambiguation_labels {
                kb.by_disambiguation.entry(key(d)).or_default().push(i);
                // "x (disambiguation)" pages are looked up under "x" as well
                if let Some(stem) = d.trim().strip_suffix("(disambiguation)") {
                    kb.by_disambiguation.entry(key(stem)).or_default().push(i);
                }
            }
        }
        Ok(kb)
    }

    pub fn empty() -> Self {
        KnowledgeBase::default()
    }

    pub fn entries(&self) -> &[KbEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Loads a snapshot. Malformed records and duplicate ids are skipped with
    /// a warning; an unreadable file is an error.
    pub fn load(path: impl AsRef<Path>) -> Result<KbLoad> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| CrmError::io(path, e))?;
        Self::read_from(BufReader::new(file), path)
    }

    pub fn read_from<R: BufRead>(reader: R, path: &Path) -> Result<KbLoad> {
        let mut entries: Vec<KbEntry> = Vec::new();
        let mut ids = BTreeSet::new();
        let mut warnings = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| CrmError::io(path, e))?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if trimmed.starts_with('#') {
                if i == 0 && trimmed.starts_with("#crm-kb") && trimmed != KB_HEADER {
                    return Err(CrmError::Parse {
                        path: path.to_path_buf(),
                        line: 1,
                        message: format!("unsupported KB version {trimmed:?}"),
                    });
                }
                continue;
            }
            let warn = |msg: String| format!("{}:{}: {msg}", path.display(), i + 1);
            match serde_json::from_str::<KbEntry>(trimmed) {
                Ok(entry) if key(&entry.label).is_empty() => {
                    warnings.push(warn(format!("entry {} has an empty label", entry.id)))
                }
                Ok(entry) if !ids.insert(entry.id.clone()) => {
                    warnings.push(warn(format!("duplicate id {}", entry.id)))
                }
                Ok(entry) => entries.push(entry),
                Err(e) => warnings.push(warn(e.to_string())),
            }
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(KbLoad {
            kb: KnowledgeBase::new(entries)?,
            warnings,
        })
    }

    fn lookup<'m>(map: &'m HashMap<String, Vec<usize>>, label: &str) -> impl Iterator<Item = usize> + 'm {
        map.get(label).into_iter().flatten().copied()
    }

    /// Entries for `phrase` by exact label (including dictionary headwords),
    /// by redirect and by disambiguation page. Deduplicated, ordered by id.
    pub fn gather_candidates(&self, phrase: &Phrase) -> Vec<&KbEntry> {
        let label = phrase.to_string();
        let mut found: BTreeSet<usize> = BTreeSet::new();
        found.extend(Self::lookup(&self.by_label, &label));
        found.extend(Self::lookup(&self.by_redirect, &label));
        found.extend(Self::lookup(&self.by_disambiguation, &label));
        found.into_iter().map(|i| &self.entries[i]).collect()
    }

    /// Order-independent SHA-256 of the snapshot contents.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for e in &self.entries {
            hasher.update(serde_json::to_vec(e).expect("KB entries serialize"));
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KbConfig {
    pub threshold: f64,
    pub lambda: f64,
}

impl Default for KbConfig {
    fn default() -> Self {
        KbConfig {
            threshold: DEFAULT_KB_THRESHOLD,
            lambda: 0.1,
        }
    }
}

impl KbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(CrmError::InvalidArgument(format!("threshold {} outside [0,1]", self.threshold)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(CrmError::InvalidArgument(format!("lambda {} outside [0,1]", self.lambda)));
        }
        Ok(())
    }
}

/// A candidate with its representation, before thresholding.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub entry: KbEntry,
    pub context: Vec<String>,
    pub repr: SemanticRepr,
}

/// Builds representations for candidates. Candidates with an empty or
/// unrepresentable context are dropped.
pub fn represent_candidates(entries: &[&KbEntry], representer: &Representer<'_>) -> Result<Vec<Candidate>> {
    let mut out = Vec::with_capacity(entries.len());
    for entry in entries {
        let context = candidate_context(entry);
        if context.is_empty() {
            continue;
        }
        match representer.tokens(&context) {
            Ok(repr) => out.push(Candidate {
                entry: (*entry).clone(),
                context,
                repr,
            }),
            Err(CrmError::NoEmbeddableTokens) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedCandidate {
    pub entry: KbEntry,
    pub similarity: f64,
    pub weight: f64,
    pub context_text: String,
    #[serde(skip)]
    pub repr: SemanticRepr,
}

/// Keeps candidates whose clamped similarity to `localized` exceeds the
/// threshold, with weights normalized to sum to one. Sorted by similarity,
/// highest first.
pub fn match_candidates(
    candidates: &[Candidate],
    localized: &SemanticRepr,
    threshold: f64,
    measure: SimilarityMeasure,
    cap: usize,
) -> Result<Vec<MatchedCandidate>> {
    let target = localized.capped(cap);
    let mut kept = Vec::new();
    for c in candidates {
        let sim = score_similarity(&c.repr.capped(cap), &target, measure)?;
        if sim > threshold {
            kept.push((c, sim));
        }
    }
    let total: f64 = kept.iter().map(|(_, s)| s).sum();
    let mut matches: Vec<MatchedCandidate> = kept
        .into_iter()
        .map(|(c, sim)| MatchedCandidate {
            entry: c.entry.clone(),
            similarity: sim,
            weight: sim / total,
            context_text: c.context.join(" "),
            repr: c.repr.clone(),
        })
        .collect();
    matches.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then_with(|| a.entry.id.cmp(&b.entry.id))
    });
    Ok(matches)
}

/// `lambda * localized + (1 - lambda) * sum_i w_i R(D_i)`. Identity when
/// `lambda == 1` or nothing matched.
pub fn kb_adjusted_context(
    localized: &SemanticRepr,
    matches: &[MatchedCandidate],
    lambda: f64,
) -> Result<SemanticRepr> {
    if matches.is_empty() || lambda == 1.0 {
        return Ok(localized.clone());
    }
    let mut reprs: Vec<&SemanticRepr> = Vec::with_capacity(matches.len() + 1);
    let mut weights = Vec::with_capacity(matches.len() + 1);
    if lambda != 0.0 {
        reprs.push(localized);
        weights.push(lambda);
    }
    for m in matches {
        reprs.push(&m.repr);
        weights.push((1.0 - lambda) * m.weight);
    }
    combine(&reprs, &weights)
}
