//! Single-word synonym substitutions of a phrase and their frequency pruning.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{tokenize, Phrase};
use crate::error::{CrmError, Result};

pub const DEFAULT_TOP_K_PERTURBATIONS: usize = 7;

/// term -> synonyms, in first-seen order. Terms and synonyms are single
/// lowercase tokens and a term never lists itself.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymLexicon {
    entries: BTreeMap<String, Vec<String>>,
}

/// Normalizes a lexicon term to a single token, or `None` for multi-word or
/// empty terms.
fn single_token(raw: &str) -> Option<String> {
    let mut toks = tokenize(raw);
    if toks.len() == 1 {
        toks.pop()
    } else {
        None
    }
}

impl SynonymLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds synonyms for `term`. Multi-word synonyms, the term itself and
    /// repeats are ignored. Returns how many synonyms were rejected.
    pub fn add<I, S>(&mut self, term: &str, synonyms: I) -> usize
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let Some(term) = single_token(term) else {
            return synonyms.into_iter().count();
        };
        let list = self.entries.entry(term.clone()).or_default();
        let mut rejected = 0;
        for syn in synonyms {
            match single_token(syn.as_ref()) {
                Some(s) if s == term => {}
                Some(s) => {
                    if !list.contains(&s) {
                        list.push(s);
                    }
                }
                None => rejected += 1,
            }
        }
        rejected
    }

    /// Reads `term<TAB>syn1,syn2,...` lines. Repeated terms merge.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| CrmError::io(path, e))?;
        Self::read_from(BufReader::new(file), path)
    }

    pub fn read_from<R: BufRead>(reader: R, path: &Path) -> Result<Self> {
        let mut lex = SynonymLexicon::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| CrmError::io(path, e))?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((term, syns)) = line.split_once('\t') else {
                return Err(CrmError::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: "expected term<TAB>synonyms".into(),
                });
            };
            let rejected = lex.add(term, syns.split(',').filter(|s| !s.trim().is_empty()));
            if rejected > 0 {
                log::debug!("{}:{}: dropped {rejected} multi-word synonyms", path.display(), i + 1);
            }
        }
        Ok(lex)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (term, syns) in &self.entries {
            if !syns.is_empty() {
                writeln!(out, "{term}\t{}", syns.join(","))?;
            }
        }
        Ok(())
    }

    pub fn synonyms(&self, term: &str) -> &[String] {
        self.entries.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (term, syns) in &self.entries {
            hasher.update(term.as_bytes());
            hasher.update(b"\t");
            hasher.update(syns.join(",").as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PerturbedPhrase {
    pub words: Phrase,
    pub substituted_index: usize,
    pub source_synonym: String,
}

/// Every phrase obtained by replacing exactly one word with one of its
/// synonyms, in position-then-lexicon order.
pub fn generate_perturbations(phrase: &Phrase, lexicon: &SynonymLexicon) -> Result<Vec<PerturbedPhrase>> {
    if phrase.len() < 2 {
        return Err(CrmError::InvalidArgument(format!(
            "phrase {phrase:?} needs at least two words"
        )));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, word) in phrase.words().iter().enumerate() {
        for syn in lexicon.synonyms(word) {
            let mut words = phrase.words().to_vec();
            words[i] = syn.clone();
            let words = Phrase::from_words(words);
            if words != *phrase && seen.insert(words.clone()) {
                out.push(PerturbedPhrase {
                    words,
                    substituted_index: i,
                    source_synonym: syn.clone(),
                });
            }
        }
    }
    if out.is_empty() {
        return Err(CrmError::NoPerturbations(phrase.to_string()));
    }
    Ok(out)
}

/// The `top_k` most frequent perturbations by `frequency`, ties broken by
/// phrase order.
pub fn prune_by_frequency<F>(perturbations: &[PerturbedPhrase], frequency: F, top_k: usize) -> Vec<PerturbedPhrase>
where
    F: Fn(&Phrase) -> usize,
{
    let mut scored: Vec<(usize, &PerturbedPhrase)> =
        perturbations.iter().map(|p| (frequency(&p.words), p)).collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.words.cmp(&b.1.words)));
    scored.into_iter().take(top_k).map(|(_, p)| p.clone()).collect()
}
