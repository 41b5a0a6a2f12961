//! Corpus ingestion, tokenization, phrase occurrences and context windows.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CrmError, Result};
use crate::exec::{self, Execution};

/// Default number of tokens kept on each side of an occurrence.
pub const DEFAULT_RADIUS: usize = 20;

const INDEX_MAGIC: &str = "#crm-window-index";
const INDEX_VERSION: u32 = 1;

/// Lowercases, splits on Unicode whitespace and trims non-alphanumeric
/// characters from both ends of every token. Tokens that end up empty are
/// dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let trimmed = raw.trim_matches(|c: char| !c.is_alphanumeric());
            if trimmed.is_empty() {
                None
            } else {
                Some(trimmed.to_lowercase())
            }
        })
        .collect()
}

/// An ordered word sequence, always in tokenized form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Phrase(Vec<String>);

impl Phrase {
    /// Tokenizes `text` into a phrase.
    pub fn parse(text: &str) -> Self {
        Phrase(tokenize(text))
    }

    /// Builds a phrase from already-tokenized words. Each word is passed
    /// through the tokenizer so the result is normalized.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Phrase(
            words
                .into_iter()
                .flat_map(|w| tokenize(w.as_ref()))
                .collect(),
        )
    }

    pub fn words(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Phrase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    id: String,
    text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let id = id.into();
        let text = text.into();
        if text.trim().is_empty() {
            return Err(CrmError::InvalidArgument(format!(
                "document {id} has no text"
            )));
        }
        Ok(Document { id, text })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn token_stream(&self) -> TokenStream {
        TokenStream {
            doc_id: self.id.clone(),
            tokens: tokenize(&self.text),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenStream {
    pub doc_id: String,
    pub tokens: Vec<String>,
}

impl TokenStream {
    pub fn new(doc_id: impl Into<String>, text: &str) -> Self {
        TokenStream {
            doc_id: doc_id.into(),
            tokens: tokenize(text),
        }
    }
}

/// Start offsets of every (possibly overlapping) match of `phrase`.
pub fn find_occurrences(tokens: &[String], phrase: &[String]) -> Vec<usize> {
    if phrase.is_empty() || phrase.len() > tokens.len() {
        return Vec::new();
    }
    tokens
        .windows(phrase.len())
        .enumerate()
        .filter(|(_, slice)| *slice == phrase)
        .map(|(i, _)| i)
        .collect()
}

/// The neighborhood of one phrase occurrence. The phrase tokens themselves
/// are not part of `left` or `right`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextWindow {
    pub phrase: Phrase,
    pub left: Vec<String>,
    pub right: Vec<String>,
    pub doc_id: String,
    pub position: usize,
}

impl ContextWindow {
    /// Left then right context tokens.
    pub fn tokens(&self) -> impl Iterator<Item = &String> + Clone {
        self.left.iter().chain(self.right.iter())
    }

    pub fn context_len(&self) -> usize {
        self.left.len() + self.right.len()
    }
}

fn window_at(stream: &TokenStream, phrase: &Phrase, start: usize, radius: usize) -> ContextWindow {
    let end = start + phrase.len();
    let left_start = start.saturating_sub(radius);
    let right_end = (end + radius).min(stream.tokens.len());
    ContextWindow {
        phrase: phrase.clone(),
        left: stream.tokens[left_start..start].to_vec(),
        right: stream.tokens[end..right_end].to_vec(),
        doc_id: stream.doc_id.clone(),
        position: start,
    }
}

/// One window per occurrence, truncated at the document edges.
pub fn extract_windows(stream: &TokenStream, phrase: &Phrase, radius: usize) -> Vec<ContextWindow> {
    find_occurrences(&stream.tokens, phrase.words())
        .into_iter()
        .map(|start| window_at(stream, phrase, start, radius))
        .collect()
}

/// A collection of documents with unique ids.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    documents: Vec<Document>,
}

/// Outcome of loading a corpus from disk: the documents that loaded and one
/// error per document that did not.
#[derive(Debug, Default)]
pub struct CorpusLoad {
    pub corpus: Corpus,
    pub skipped: Vec<CrmError>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for doc in &documents {
            if !seen.insert(doc.id.as_str()) {
                return Err(CrmError::InvalidArgument(format!(
                    "duplicate document id {}",
                    doc.id
                )));
            }
        }
        Ok(Corpus { documents })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// One document per regular file in `dir`, in file-name order. Unreadable
    /// or empty files are reported and skipped.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<CorpusLoad> {
        let dir = dir.as_ref();
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(|e| CrmError::io(dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        paths.sort();

        let mut load = CorpusLoad::default();
        for path in paths {
            let id = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            match fs::read_to_string(&path) {
                Ok(text) => match Document::new(id, text) {
                    Ok(doc) => load.corpus.documents.push(doc),
                    Err(e) => load.skipped.push(e),
                },
                Err(e) => {
                    log::warn!("skipping {}: {e}", path.display());
                    load.skipped.push(CrmError::io(&path, e));
                }
            }
        }
        Ok(load)
    }

    /// One document per non-blank line; ids are 1-based line numbers.
    pub fn load_lines(path: impl AsRef<Path>) -> Result<CorpusLoad> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| CrmError::io(path, e))?;
        let mut load = CorpusLoad::default();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            match line {
                Ok(text) if text.trim().is_empty() => {}
                Ok(text) => load
                    .corpus
                    .documents
                    .push(Document::new((i + 1).to_string(), text)?),
                Err(e) => {
                    log::warn!("skipping {}:{}: {e}", path.display(), i + 1);
                    load.skipped.push(CrmError::Parse {
                        path: path.to_path_buf(),
                        line: i + 1,
                        message: e.to_string(),
                    });
                }
            }
        }
        Ok(load)
    }

    /// Linear scan over every document.
    pub fn phrase_frequency(&self, phrase: &Phrase) -> usize {
        self.documents
            .iter()
            .map(|d| find_occurrences(&tokenize(&d.text), phrase.words()).len())
            .sum()
    }

    /// SHA-256 over document ids and texts, in order.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for doc in &self.documents {
            hasher.update(doc.id.as_bytes());
            hasher.update([0u8]);
            hasher.update(doc.text.as_bytes());
            hasher.update([0u8]);
        }
        hex::encode(hasher.finalize())
    }
}

/// Context windows of a fixed set of phrases plus the window-level document
/// frequency table used for TF-IDF weighting.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowIndex {
    radius: usize,
    corpus_hash: String,
    windows: BTreeMap<Phrase, Vec<ContextWindow>>,
    doc_freq: HashMap<String, usize>,
    total_windows: usize,
}

impl WindowIndex {
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn corpus_hash(&self) -> &str {
        &self.corpus_hash
    }

    /// Windows of `phrase`, empty when the phrase is unseen or was not
    /// requested at build time.
    pub fn windows(&self, phrase: &Phrase) -> &[ContextWindow] {
        self.windows.get(phrase).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contains_phrase(&self, phrase: &Phrase) -> bool {
        self.windows.contains_key(phrase)
    }

    pub fn phrases(&self) -> impl Iterator<Item = &Phrase> {
        self.windows.keys()
    }

    /// Occurrence count of an indexed phrase (N). Zero for anything not indexed.
    pub fn frequency(&self, phrase: &Phrase) -> usize {
        self.windows(phrase).len()
    }

    /// Number of stored windows containing `token`.
    pub fn doc_freq(&self, token: &str) -> usize {
        self.doc_freq.get(token).copied().unwrap_or(0)
    }

    pub fn doc_freq_table(&self) -> &HashMap<String, usize> {
        &self.doc_freq
    }

    /// Number of windows across every indexed phrase.
    pub fn total_windows(&self) -> usize {
        self.total_windows
    }

    /// Builds the index for `phrases` over `corpus`. Documents are scanned
    /// independently and merged in corpus order.
    pub fn build(
        corpus: &Corpus,
        phrases: &BTreeSet<Phrase>,
        radius: usize,
        exec: Execution,
    ) -> Result<Self> {
        if phrases.is_empty() {
            return Err(CrmError::InvalidArgument("no phrases to index".into()));
        }
        if radius == 0 {
            return Err(CrmError::InvalidArgument("radius must be positive".into()));
        }
        if let Some(p) = phrases.iter().find(|p| p.is_empty()) {
            return Err(CrmError::InvalidArgument(format!("empty phrase {p:?}")));
        }

        let mut by_first: HashMap<&str, Vec<&Phrase>> = HashMap::new();
        for p in phrases {
            by_first.entry(p.words()[0].as_str()).or_default().push(p);
        }

        let partials = exec::map(exec, corpus.documents(), |doc| {
            let stream = doc.token_stream();
            let mut found: Vec<ContextWindow> = Vec::new();
            for (start, tok) in stream.tokens.iter().enumerate() {
                let Some(candidates) = by_first.get(tok.as_str()) else {
                    continue;
                };
                for p in candidates {
                    let end = start + p.len();
                    if end <= stream.tokens.len() && stream.tokens[start..end] == *p.words() {
                        found.push(window_at(&stream, p, start, radius));
                    }
                }
            }
            found
        });

        let mut windows: BTreeMap<Phrase, Vec<ContextWindow>> =
            phrases.iter().map(|p| (p.clone(), Vec::new())).collect();
        for found in partials {
            for w in found {
                windows
                    .get_mut(&w.phrase)
                    .expect("window for an unrequested phrase")
                    .push(w);
            }
        }
        Ok(Self::from_parts(radius, corpus.content_hash(), windows))
    }

    fn from_parts(
        radius: usize,
        corpus_hash: String,
        windows: BTreeMap<Phrase, Vec<ContextWindow>>,
    ) -> Self {
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        let mut total_windows = 0;
        for w in windows.values().flatten() {
            total_windows += 1;
            let distinct: BTreeSet<&String> = w.tokens().collect();
            for t in distinct {
                *doc_freq.entry(t.clone()).or_insert(0) += 1;
            }
        }
        WindowIndex {
            radius,
            corpus_hash,
            windows,
            doc_freq,
            total_windows,
        }
    }

    /// Writes the line-based on-disk format:
    ///
    /// ```text
    /// #crm-window-index v1
    /// radius<TAB>20
    /// corpus<TAB><sha256 hex>
    /// phrase<TAB><space-joined words><TAB><window count>
    /// w<TAB><doc id><TAB><position><TAB><left tokens><TAB><right tokens>
    /// ```
    ///
    /// Each `phrase` line is followed by exactly its windows. Document ids
    /// escape backslash, tab and newline as `\\`, `\t`, `\n`. The document
    /// frequency table is derived, so it is rebuilt on load.
    pub fn write_to<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut out = BufWriter::new(out);
        writeln!(out, "{INDEX_MAGIC} v{INDEX_VERSION}")?;
        writeln!(out, "radius\t{}", self.radius)?;
        writeln!(out, "corpus\t{}", self.corpus_hash)?;
        for (phrase, windows) in &self.windows {
            writeln!(out, "phrase\t{}\t{}", phrase, windows.len())?;
            for w in windows {
                writeln!(
                    out,
                    "w\t{}\t{}\t{}\t{}",
                    escape(&w.doc_id),
                    w.position,
                    w.left.join(" "),
                    w.right.join(" ")
                )?;
            }
        }
        out.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| CrmError::io(path, e))?;
        self.write_to(file).map_err(|e| CrmError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| CrmError::io(path, e))?;
        Self::read_from(BufReader::new(file), path)
    }

    pub fn read_from<R: BufRead>(reader: R, path: &Path) -> Result<Self> {
        let perr = |line: usize, message: String| CrmError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = reader.lines().enumerate();
        let mut next = |expect: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, Ok(l))) => Ok((i + 1, l)),
                Some((i, Err(e))) => Err(perr(i + 1, e.to_string())),
                None => Err(perr(0, format!("unexpected end of file, expected {expect}"))),
            }
        };

        let (n, header) = next("header")?;
        if header != format!("{INDEX_MAGIC} v{INDEX_VERSION}") {
            return Err(perr(n, format!("unsupported header {header:?}")));
        }
        let (n, radius_line) = next("radius")?;
        let radius = radius_line
            .strip_prefix("radius\t")
            .and_then(|v| v.parse::<usize>().ok())
            .ok_or_else(|| perr(n, "bad radius line".into()))?;
        let (n, corpus_line) = next("corpus")?;
        let corpus_hash = corpus_line
            .strip_prefix("corpus\t")
            .ok_or_else(|| perr(n, "bad corpus line".into()))?
            .to_string();

        let mut windows = BTreeMap::new();
        loop {
            let (n, line) = match next("phrase") {
                Ok(v) => v,
                Err(CrmError::Parse { line: 0, .. }) => break,
                Err(e) => return Err(e),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 || fields[0] != "phrase" {
                return Err(perr(n, format!("expected phrase record, got {line:?}")));
            }
            let phrase = Phrase(fields[1].split(' ').map(str::to_string).collect());
            let count: usize = fields[2]
                .parse()
                .map_err(|_| perr(n, "bad window count".into()))?;
            let mut list = Vec::with_capacity(count);
            for _ in 0..count {
                let (n, line) = next("window")?;
                let fields: Vec<&str> = line.split('\t').collect();
                if fields.len() != 5 || fields[0] != "w" {
                    return Err(perr(n, format!("expected window record, got {line:?}")));
                }
                let split = |s: &str| -> Vec<String> {
                    s.split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect()
                };
                list.push(ContextWindow {
                    phrase: phrase.clone(),
                    doc_id: unescape(fields[1]),
                    position: fields[2]
                        .parse()
                        .map_err(|_| perr(n, "bad position".into()))?,
                    left: split(fields[3]),
                    right: split(fields[4]),
                });
            }
            if windows.insert(phrase, list).is_some() {
                return Err(perr(n, "duplicate phrase record".into()));
            }
        }
        Ok(Self::from_parts(radius, corpus_hash, windows))
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('t') => out.push('\t'),
                Some('n') => out.push('\n'),
                Some(other) => out.push(other),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}
