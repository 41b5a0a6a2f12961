//! Seeded synthetic worlds: topic-structured corpora with matching
//! embeddings, synonym lexicon, KB snapshot and graded dataset.
//!
//! Every topic owns a small vocabulary whose embeddings scatter around a
//! random topic centroid. A planted document is one phrase occurrence with
//! `radius` topic words on each side, so the phrase's windows carry exactly
//! the topics it was planted with.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::corpus::{Corpus, Document, Phrase, DEFAULT_RADIUS};
use crate::error::{CrmError, Result};
use crate::evaluation::{Dataset, Grade, LabeledInstance};
use crate::kb::{KbEntry, KbSource, KnowledgeBase};
use crate::perturbation::SynonymLexicon;
use crate::representation::EmbeddingLexicon;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TopicId(usize);

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub corpus: Corpus,
    pub embeddings: EmbeddingLexicon,
    pub synonyms: SynonymLexicon,
    pub kb: KnowledgeBase,
    pub dataset: Vec<LabeledInstance>,
    /// Every planted phrase, including perturbations.
    pub phrases: BTreeSet<Phrase>,
}

impl SyntheticWorld {
    pub fn dataset(&self) -> Dataset {
        Dataset {
            instances: self.dataset.clone(),
            rejected: Vec::new(),
        }
    }

    /// Writes the world in the on-disk formats the loaders read:
    /// `corpus/<id>.txt`, `embeddings.txt`, `synonyms.tsv`, `kb.jsonl`,
    /// `dataset.tsv` and `phrases.txt`.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let corpus = dir.join("corpus");
        fs::create_dir_all(&corpus).map_err(|e| CrmError::io(&corpus, e))?;
        for d in self.corpus.documents() {
            let path = corpus.join(format!("{}.txt", d.id()));
            fs::write(&path, d.text()).map_err(|e| CrmError::io(&path, e))?;
        }
        let write = |name: &str, f: &dyn Fn(&mut Vec<u8>) -> std::io::Result<()>| -> Result<()> {
            let path = dir.join(name);
            let mut buf = Vec::new();
            f(&mut buf).map_err(|e| CrmError::io(&path, e))?;
            fs::write(&path, buf).map_err(|e| CrmError::io(&path, e))
        };
        write("embeddings.txt", &|b| self.embeddings.write_to(b))?;
        write("synonyms.tsv", &|b| self.synonyms.write_to(b))?;
        write("kb.jsonl", &|b| {
            for e in self.kb.entries() {
                serde_json::to_writer(&mut *b, e)?;
                b.push(b'\n');
            }
            Ok(())
        })?;
        write("dataset.tsv", &|b| {
            writeln!(b, "phrase\tscenario\tlabel")?;
            for i in &self.dataset {
                writeln!(b, "{}\t{}\t{}", i.phrase, i.scenario, i.grade.value())?;
            }
            Ok(())
        })?;
        write("phrases.txt", &|b| {
            for p in &self.phrases {
                writeln!(b, "{p}")?;
            }
            Ok(())
        })
    }
}

pub struct SyntheticBuilder {
    rng: ChaCha8Rng,
    dim: usize,
    words_per_topic: usize,
    noise: f64,
    radius: usize,
    topics: Vec<Vec<String>>,
    embeddings: EmbeddingLexicon,
    docs: Vec<Document>,
    synonyms: SynonymLexicon,
    kb: Vec<KbEntry>,
    dataset: Vec<LabeledInstance>,
    phrases: BTreeSet<Phrase>,
}

impl SyntheticBuilder {
    pub fn new(seed: u64) -> Self {
        let dim = 32;
        SyntheticBuilder {
            rng: ChaCha8Rng::seed_from_u64(seed),
            dim,
            words_per_topic: 30,
            noise: 0.6,
            radius: DEFAULT_RADIUS,
            topics: Vec::new(),
            embeddings: EmbeddingLexicon::new(dim),
            docs: Vec::new(),
            synonyms: SynonymLexicon::new(),
            kb: Vec::new(),
            dataset: Vec::new(),
            phrases: BTreeSet::new(),
        }
    }

    pub fn radius(mut self, radius: usize) -> Self {
        self.radius = radius;
        self
    }

    fn gaussian(&mut self) -> Vec<f64> {
        let scale = 1.0 / (self.dim as f64).sqrt();
        (0..self.dim)
            .map(|_| self.rng.sample::<f64, _>(StandardNormal) * scale)
            .collect()
    }

    /// Adds a topic whose words are `<name>0`, `<name>1`, ...
    pub fn topic(&mut self, name: &str) -> TopicId {
        let centroid = self.gaussian();
        let mut words = Vec::with_capacity(self.words_per_topic);
        for j in 0..self.words_per_topic {
            let word = format!("{name}{j}");
            let noise = self.gaussian();
            let v: Vec<f64> = centroid
                .iter()
                .zip(noise)
                .map(|(c, n)| c + self.noise * n)
                .collect();
            self.embeddings
                .insert(word.clone(), v)
                .expect("dimension is fixed");
            words.push(word);
        }
        self.topics.push(words);
        TopicId(self.topics.len() - 1)
    }

    /// `n` words sampled uniformly from `topic`, space-joined.
    pub fn words(&mut self, topic: TopicId, n: usize) -> String {
        let vocab = &self.topics[topic.0];
        (0..n)
            .map(|_| vocab[self.rng.random_range(0..vocab.len())].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Adds `count` documents, each holding one occurrence of `phrase`
    /// surrounded by words of `topic`.
    pub fn plant(&mut self, phrase: &str, topic: TopicId, count: usize) {
        self.phrases.insert(Phrase::parse(phrase));
        for _ in 0..count {
            let left = self.words(topic, self.radius);
            let right = self.words(topic, self.radius);
            let id = format!("doc{:05}", self.docs.len());
            let text = format!("{left} {phrase} {right}");
            self.docs.push(Document::new(id, text).expect("non-empty"));
        }
    }

    pub fn synonym(&mut self, term: &str, synonyms: &[&str]) {
        self.synonyms.add(term, synonyms.iter());
    }

    /// A KB entry for `label` whose abstract is drawn from `topic`.
    pub fn kb_entry(&mut self, id: &str, label: &str, topic: TopicId, abstract_len: usize) {
        let abstract_text = self.words(topic, abstract_len);
        self.kb.push(KbEntry {
            id: id.to_string(),
            label: label.to_string(),
            abstract_text,
            types: Vec::new(),
            redirect_labels: Vec::new(),
            disambiguation_labels: Vec::new(),
            source: KbSource::Encyclopedia,
        });
    }

    pub fn instance(&mut self, phrase: &str, scenario: String, grade: Grade) {
        self.dataset.push(LabeledInstance {
            phrase: Phrase::parse(phrase),
            scenario,
            grade,
        });
    }

    pub fn build(self) -> SyntheticWorld {
        SyntheticWorld {
            corpus: Corpus::new(self.docs).expect("generated ids are unique"),
            embeddings: self.embeddings,
            synonyms: self.synonyms,
            kb: KnowledgeBase::new(self.kb).expect("generated KB ids are unique"),
            dataset: self.dataset,
            phrases: self.phrases,
        }
    }
}

/// 200 documents with one non-compositional and one compositional phrase.
///
/// `hot dog` lives in a food topic while its perturbations `warm dog` and
/// `hot canine` live in an animal topic. `brown dog` and its perturbations
/// `hazel dog` and `brown canine` all live in the animal topic. The KB has a
/// food entry for `hot dog`. Dataset: one scenario each, graded 1 and 5.
pub fn planted_pair(seed: u64) -> SyntheticWorld {
    let mut b = SyntheticBuilder::new(seed);
    let food = b.topic("food");
    let animal = b.topic("animal");
    b.plant("hot dog", food, 40);
    b.plant("warm dog", animal, 30);
    b.plant("hot canine", animal, 30);
    b.plant("brown dog", animal, 40);
    b.plant("hazel dog", animal, 30);
    b.plant("brown canine", animal, 30);
    b.synonym("hot", &["warm"]);
    b.synonym("dog", &["canine"]);
    b.synonym("brown", &["hazel"]);
    b.kb_entry("dbr:Hot_dog", "Hot dog", food, 25);
    let s = format!("at the stand {}", b.words(food, 6));
    b.instance("hot dog", s, Grade::NonCompositional);
    let s = format!("in the park {}", b.words(animal, 6));
    b.instance("brown dog", s, Grade::Compositional);
    b.build()
}

/// Phrases with a literal and an idiomatic sense in the corpus, each graded
/// under one scenario per sense.
///
/// For phrase `i` (`mod{i} head{i}`), part of its windows come from a
/// literal topic shared with both perturbations and the rest from an
/// idiomatic topic of its own. The literal share grows with `i % 4`, and so
/// does the grade of the literal scenario (2 to 5); the idiomatic scenario is
/// always graded 1. Only scenario-localized contexts can separate the two
/// instances of a phrase. Every other phrase has a KB entry
/// describing its idiomatic sense.
pub fn two_sense_world(seed: u64, phrases: usize) -> SyntheticWorld {
    let mut b = SyntheticBuilder::new(seed);
    let literal: Vec<TopicId> = (0..4).map(|i| b.topic(&format!("lit{i}x"))).collect();
    for i in 0..phrases {
        let lit = literal[i % literal.len()];
        let idiom = b.topic(&format!("idi{i}x"));
        let (m, h) = (format!("mod{i}"), format!("head{i}"));
        let (ms, hs) = (format!("modsyn{i}"), format!("headsyn{i}"));
        let phrase = format!("{m} {h}");
        let n_lit = 12 + (i % 4) * 4;
        let n_idi = 36 - n_lit;
        b.plant(&phrase, lit, n_lit);
        b.plant(&phrase, idiom, n_idi);
        b.plant(&format!("{ms} {h}"), lit, 15);
        b.plant(&format!("{m} {hs}"), lit, 15);
        b.synonym(&m, &[&ms]);
        b.synonym(&h, &[&hs]);
        if i % 2 == 0 {
            b.kb_entry(&format!("kb:{i}"), &phrase, idiom, 25);
        }
        let lit_words = b.words(lit, 5);
        let idi_words = b.words(idiom, 5);
        let lit_grade = Grade::from_value(2 + (i % 4) as u8).expect("grade in 2..=5");
        b.instance(&phrase, format!("{lit_words} {phrase}"), lit_grade);
        b.instance(&phrase, format!("{phrase} {idi_words}"), Grade::NonCompositional);
    }
    b.build()
}
