use crm::corpus::{WindowIndex, DEFAULT_RADIUS};
use crm::evaluation::{baseline_correlation, evaluate, grid_search, CorrelationMethod, Dataset, Grade, LabeledInstance};
use crm::exec::Execution;
use crm::scoring::{Scorer, ScoringConfig};
use crm::synthetic::two_sense_world;

#[test]
fn evaluation_is_deterministic() {
    let w = two_sense_world(21, 8);
    let index = WindowIndex::build(&w.corpus, &w.phrases, DEFAULT_RADIUS, Execution::default()).unwrap();
    let ds = w.dataset();
    let cfg = ScoringConfig::default();
    let seq = Scorer::new(&index, &w.kb, &w.synonyms, Some(&w.embeddings)).with_execution(Execution::Sequential);
    let par = Scorer::new(&index, &w.kb, &w.synonyms, Some(&w.embeddings)).with_execution(Execution::Parallel);
    let (a, _) = evaluate(&ds, &seq, &cfg);
    let (b, _) = evaluate(&ds, &par, &cfg);
    let (c, _) = evaluate(&ds, &par, &cfg);
    assert_eq!(a, b);
    assert_eq!(b, c);
    assert_eq!(a.scored, ds.len());
    assert!(a.spearman.unwrap() > 0.0, "{a:?}");
}

#[test]
fn grid_cells_are_correlations_over_the_unit_square() {
    let w = two_sense_world(22, 8);
    let index = WindowIndex::build(&w.corpus, &w.phrases, DEFAULT_RADIUS, Execution::default()).unwrap();
    let scorer = Scorer::new(&index, &w.kb, &w.synonyms, Some(&w.embeddings));
    let cfg = ScoringConfig::default();
    let grid = grid_search(&w.dataset(), &scorer, &cfg, 0.25, 0.5, CorrelationMethod::Pearson).unwrap();
    assert_eq!(grid.alphas, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    assert_eq!(grid.lambdas, vec![0.0, 0.5, 1.0]);
    for cell in grid.cells.iter().flatten() {
        let v = cell.expect("fixture cells are defined");
        assert!((-1.0..=1.0).contains(&v));
    }
    let best = grid.best.clone().unwrap();
    assert_eq!(grid.cell(best.alpha, best.lambda), Some(best.rho));
}

#[test]
fn corner_cell_with_empty_scenarios_is_the_baseline() {
    let w = two_sense_world(23, 8);
    let index = WindowIndex::build(&w.corpus, &w.phrases, DEFAULT_RADIUS, Execution::default()).unwrap();
    let scorer = Scorer::new(&index, &w.kb, &w.synonyms, Some(&w.embeddings));
    let cfg = ScoringConfig::default();
    let mut ds = w.dataset();
    for inst in &mut ds.instances {
        inst.scenario.clear();
    }
    // with no scenario each phrase scores the same under both grades
    let grid = grid_search(&ds, &scorer, &cfg, 0.1, 0.1, CorrelationMethod::Spearman).unwrap();
    let base = baseline_correlation(&ds, &scorer, &cfg, CorrelationMethod::Spearman).unwrap();
    assert_eq!(grid.cell(1.0, 1.0).unwrap().to_bits(), base.to_bits());
}

#[test]
fn unseen_phrases_are_counted_not_fatal() {
    let w = two_sense_world(24, 4);
    let index = WindowIndex::build(&w.corpus, &w.phrases, DEFAULT_RADIUS, Execution::default()).unwrap();
    let scorer = Scorer::new(&index, &w.kb, &w.synonyms, Some(&w.embeddings));
    let mut ds = w.dataset();
    ds.instances.push(LabeledInstance {
        phrase: crm::Phrase::parse("nowhere phrase"),
        scenario: "anything".into(),
        grade: Grade::Compositional,
    });
    let (report, results) = evaluate(&ds, &scorer, &ScoringConfig::default());
    assert_eq!(report.unseen, 1);
    assert_eq!(report.failed, 0);
    assert_eq!(report.scored, ds.len() - 1);
    assert!(results.last().unwrap().is_err());
}

#[test]
fn dataset_files_load_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let tsv = dir.path().join("data.tsv");
    std::fs::write(
        &tsv,
        "phrase\tscenario\tlabel\nhot dog\tat the stand\t1\nbrown dog\tin the park\t5\nbad row\tonly two\nred tape\tforms\t9\n",
    )
    .unwrap();
    let ds = Dataset::load(&tsv).unwrap();
    assert_eq!(ds.len(), 2);
    let lines: Vec<usize> = ds.rejected.iter().map(|r| r.line).collect();
    assert_eq!(lines, vec![4, 5]);

    let csv = dir.path().join("data.csv");
    std::fs::write(&csv, "hot dog,\"at the stand, eating\",1\nhot dog,\"at the stand, eating\",1\n").unwrap();
    let ds = Dataset::load(&csv).unwrap();
    assert_eq!(ds.len(), 2, "duplicate rows are both kept");
    assert_eq!(ds.stats().unique_phrases, 1);

    std::fs::write(&tsv, "only\theader\n").unwrap();
    assert!(Dataset::load(&tsv).is_err());
}
