use std::collections::{BTreeSet, HashMap};

use crm::corpus::{tokenize, Corpus, Document, Phrase, WindowIndex};
use crm::exec::Execution;
use proptest::prelude::*;

fn corpus_from(texts: &[String]) -> Corpus {
    Corpus::new(
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document::new(format!("doc {i}"), t.clone()).unwrap())
            .collect(),
    )
    .unwrap()
}

fn phrases() -> BTreeSet<Phrase> {
    ["a b", "b a", "a a", "c"].iter().map(|p| Phrase::parse(p)).collect()
}

fn texts() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "x", "A,", "(b)"]), 1..25)
            .prop_map(|w| w.join(" ")),
        1..8,
    )
}

proptest! {
    #[test]
    fn window_count_is_frequency(texts in texts(), radius in 1usize..6) {
        let corpus = corpus_from(&texts);
        let index = WindowIndex::build(&corpus, &phrases(), radius, Execution::default()).unwrap();
        let mut total = 0;
        for p in phrases() {
            let n = index.windows(&p).len();
            prop_assert_eq!(n, index.frequency(&p));
            prop_assert_eq!(n, corpus.phrase_frequency(&p));
            total += n;
        }
        prop_assert_eq!(total, index.total_windows());
    }

    #[test]
    fn windows_reconstruct_source(texts in texts(), radius in 1usize..6) {
        let corpus = corpus_from(&texts);
        let index = WindowIndex::build(&corpus, &phrases(), radius, Execution::default()).unwrap();
        let streams: HashMap<String, Vec<String>> = corpus
            .documents()
            .iter()
            .map(|d| (d.id().to_string(), tokenize(d.text())))
            .collect();
        for p in phrases() {
            for w in index.windows(&p) {
                prop_assert!(w.left.len() <= radius && w.right.len() <= radius);
                let toks = &streams[&w.doc_id];
                let start = w.position - w.left.len();
                let mut rebuilt = w.left.clone();
                rebuilt.extend_from_slice(p.words());
                rebuilt.extend_from_slice(&w.right);
                prop_assert_eq!(&toks[start..start + rebuilt.len()], rebuilt.as_slice());
            }
        }
    }

    #[test]
    fn doc_freq_matches_windows(texts in texts(), radius in 1usize..6) {
        let corpus = corpus_from(&texts);
        let index = WindowIndex::build(&corpus, &phrases(), radius, Execution::default()).unwrap();
        let mut df: HashMap<String, usize> = HashMap::new();
        for p in phrases() {
            for w in index.windows(&p) {
                for t in w.tokens().collect::<BTreeSet<_>>() {
                    *df.entry(t.clone()).or_default() += 1;
                }
            }
        }
        prop_assert_eq!(&df, index.doc_freq_table());
    }

    #[test]
    fn reindexing_is_deterministic(texts in texts(), radius in 1usize..6) {
        let corpus = corpus_from(&texts);
        let seq = WindowIndex::build(&corpus, &phrases(), radius, Execution::Sequential).unwrap();
        let par = WindowIndex::build(&corpus, &phrases(), radius, Execution::Parallel).unwrap();
        let again = WindowIndex::build(&corpus, &phrases(), radius, Execution::Parallel).unwrap();
        prop_assert_eq!(&seq, &par);
        prop_assert_eq!(&par, &again);

        let mut bytes = Vec::new();
        seq.write_to(&mut bytes).unwrap();
        let loaded = WindowIndex::read_from(bytes.as_slice(), std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(&loaded, &seq);
    }
}

#[test]
fn directory_corpus_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("one.txt"), "The hot dog stand.\n").unwrap();
    std::fs::write(dir.path().join("two.txt"), "A hot dog, and another hot dog").unwrap();
    std::fs::write(dir.path().join("empty.txt"), "   \n").unwrap();
    let load = Corpus::load_dir(dir.path()).unwrap();
    assert_eq!(load.corpus.len(), 2);
    assert_eq!(load.skipped.len(), 1);

    let phrases: BTreeSet<Phrase> = [Phrase::parse("hot dog")].into();
    let index = WindowIndex::build(&load.corpus, &phrases, 20, Execution::default()).unwrap();
    assert_eq!(index.frequency(&Phrase::parse("hot dog")), 3);
    let path = dir.path().join("index.crm");
    index.save(&path).unwrap();
    assert_eq!(WindowIndex::load(&path).unwrap(), index);
}
