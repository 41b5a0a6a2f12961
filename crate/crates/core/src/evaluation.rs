//! Graded dataset loading, correlation against gold labels and the
//! (alpha, lambda) grid search.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Phrase;
use crate::error::{CrmError, Result};
use crate::exec::{self, Execution};
use crate::representation::ReprKind;
use crate::scoring::{CompositionalityResult, PreparedInstance, Scorer, ScoringConfig};
use crate::similarity::pearson;

/// Five-level compositionality grade; 5 is fully compositional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Grade {
    NonCompositional = 1,
    MostlyNonCompositional = 2,
    Ambiguous = 3,
    MostlyCompositional = 4,
    Compositional = 5,
}

impl Grade {
    pub const ALL: [Grade; 5] = [
        Grade::NonCompositional,
        Grade::MostlyNonCompositional,
        Grade::Ambiguous,
        Grade::MostlyCompositional,
        Grade::Compositional,
    ];

    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn from_value(v: u8) -> Option<Grade> {
        Grade::ALL.get(usize::from(v).checked_sub(1)?).copied()
    }

    /// Accepts `1`..`5` or the label names (case, spaces, hyphens and
    /// underscores are ignored).
    pub fn parse(s: &str) -> Option<Grade> {
        let s = s.trim();
        if let Ok(v) = s.parse::<u8>() {
            return Grade::from_value(v);
        }
        if let Ok(v) = s.parse::<f64>() {
            if v.fract() == 0.0 && (1.0..=5.0).contains(&v) {
                return Grade::from_value(v as u8);
            }
            return None;
        }
        let norm: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        match norm.as_str() {
            "noncompositional" => Some(Grade::NonCompositional),
            "mostlynoncompositional" => Some(Grade::MostlyNonCompositional),
            "ambiguous" | "ambiguoustojudge" => Some(Grade::Ambiguous),
            "mostlycompositional" => Some(Grade::MostlyCompositional),
            "compositional" => Some(Grade::Compositional),
            _ => None,
        }
    }
}

impl From<Grade> for u8 {
    fn from(g: Grade) -> u8 {
        g.value()
    }
}

impl TryFrom<u8> for Grade {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, Self::Error> {
        Grade::from_value(v).ok_or_else(|| format!("grade {v} outside 1..5"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledInstance {
    pub phrase: Phrase,
    pub scenario: String,
    pub grade: Grade,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RejectedRow {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub instances: Vec<LabeledInstance>,
    pub rejected: Vec<RejectedRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub contexts: usize,
    pub unique_phrases: usize,
    /// Counts for grades 1..=5.
    pub histogram: [usize; 5],
    pub contexts_per_phrase: f64,
}

impl Dataset {
    /// Reads `phrase<D>scenario<D>label` rows. The delimiter is `,` for
    /// `.csv` files and tab otherwise. A first row whose label does not parse
    /// as a grade is treated as a header. Malformed rows are rejected with
    /// their line numbers; a dataset with no valid row is an error.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let delimiter = match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => b',',
            _ => b'\t',
        };
        Self::load_with_delimiter(path, delimiter)
    }

    pub fn load_with_delimiter(path: impl AsRef<Path>, delimiter: u8) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| CrmError::io(path, e))?;
        Self::parse(&bytes, delimiter)
    }

    pub fn parse(bytes: &[u8], delimiter: u8) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .has_headers(false)
            .flexible(true)
            .from_reader(bytes);
        let mut ds = Dataset::default();
        for (i, record) in reader.records().enumerate() {
            let line = record
                .as_ref()
                .ok()
                .and_then(|r| r.position())
                .map_or(i + 1, |p| p.line() as usize);
            let record = match record {
                Ok(r) => r,
                Err(e) => {
                    ds.rejected.push(RejectedRow { line, reason: e.to_string() });
                    continue;
                }
            };
            if record.iter().all(|f| f.trim().is_empty()) {
                continue;
            }
            if record.len() != 3 {
                ds.rejected.push(RejectedRow {
                    line,
                    reason: format!("expected 3 fields, found {}", record.len()),
                });
                continue;
            }
            let Some(grade) = Grade::parse(&record[2]) else {
                if i == 0 {
                    continue;
                }
                ds.rejected.push(RejectedRow {
                    line,
                    reason: format!("invalid grade {:?}", &record[2]),
                });
                continue;
            };
            let phrase = Phrase::parse(&record[0]);
            if phrase.is_empty() {
                ds.rejected.push(RejectedRow { line, reason: "empty phrase".into() });
                continue;
            }
            ds.instances.push(LabeledInstance {
                phrase,
                scenario: record[1].to_string(),
                grade,
            });
        }
        for r in &ds.rejected {
            log::warn!("dataset line {}: {}", r.line, r.reason);
        }
        if ds.instances.is_empty() {
            return Err(CrmError::EmptyDataset);
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn stats(&self) -> DatasetStats {
        let unique: BTreeSet<&Phrase> = self.instances.iter().map(|i| &i.phrase).collect();
        let mut histogram = [0; 5];
        for inst in &self.instances {
            histogram[usize::from(inst.grade.value()) - 1] += 1;
        }
        DatasetStats {
            contexts: self.instances.len(),
            unique_phrases: unique.len(),
            histogram,
            contexts_per_phrase: if unique.is_empty() {
                0.0
            } else {
                self.instances.len() as f64 / unique.len() as f64
            },
        }
    }

    pub fn pairs(&self) -> Vec<(Phrase, String)> {
        self.instances
            .iter()
            .map(|i| (i.phrase.clone(), i.scenario.clone()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMethod {
    Pearson,
    #[default]
    Spearman,
}

impl std::str::FromStr for CorrelationMethod {
    type Err = CrmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pearson" => Ok(CorrelationMethod::Pearson),
            "spearman" => Ok(CorrelationMethod::Spearman),
            other => Err(CrmError::InvalidArgument(format!("unknown correlation {other:?}"))),
        }
    }
}

impl fmt::Display for CorrelationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorrelationMethod::Pearson => "pearson",
            CorrelationMethod::Spearman => "spearman",
        })
    }
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn correlate(predicted: &[f64], gold: &[f64], method: CorrelationMethod) -> Result<f64> {
    if predicted.len() != gold.len() {
        return Err(CrmError::DimensionMismatch(predicted.len(), gold.len()));
    }
    if predicted.is_empty() {
        return Err(CrmError::InvalidArgument("nothing to correlate".into()));
    }
    match method {
        CorrelationMethod::Pearson => pearson(predicted, gold),
        CorrelationMethod::Spearman => pearson(&average_ranks(predicted), &average_ranks(gold)),
    }
}

fn grades_as_f64<'a>(grades: impl IntoIterator<Item = &'a Grade>) -> Vec<f64> {
    grades.into_iter().map(|g| f64::from(g.value())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub instances: usize,
    pub scored: usize,
    pub unseen: usize,
    pub failed: usize,
    /// Fraction of instances that produced a score.
    pub coverage: f64,
    pub spearman: Option<f64>,
    pub pearson: Option<f64>,
}

/// Scores the dataset and correlates with the gold grades. Instances that
/// fail to score are excluded from the correlation and counted.
pub fn evaluate(
    dataset: &Dataset,
    scorer: &Scorer<'_>,
    config: &ScoringConfig,
) -> (EvaluationReport, Vec<Result<CompositionalityResult>>) {
    let results = scorer.score_batch(&dataset.pairs(), config);
    let mut predicted = Vec::new();
    let mut gold = Vec::new();
    let (mut unseen, mut failed) = (0, 0);
    for (inst, r) in dataset.instances.iter().zip(&results) {
        match r {
            Ok(r) => {
                predicted.push(r.score);
                gold.push(f64::from(inst.grade.value()));
            }
            Err(CrmError::PhraseUnseen(_)) => unseen += 1,
            Err(_) => failed += 1,
        }
    }
    let report = EvaluationReport {
        instances: dataset.len(),
        scored: predicted.len(),
        unseen,
        failed,
        coverage: predicted.len() as f64 / dataset.len().max(1) as f64,
        spearman: correlate(&predicted, &gold, CorrelationMethod::Spearman).ok(),
        pearson: correlate(&predicted, &gold, CorrelationMethod::Pearson).ok(),
    };
    (report, results)
}

/// Baseline correlation: global context only, no scenario, no KB.
pub fn baseline_correlation(
    dataset: &Dataset,
    scorer: &Scorer<'_>,
    config: &ScoringConfig,
    method: CorrelationMethod,
) -> Result<f64> {
    let scores = exec::map(scorer.execution(), &dataset.instances, |inst| {
        scorer.baseline_score(&inst.phrase, config)
    });
    let (predicted, gold): (Vec<f64>, Vec<f64>) = scores
        .iter()
        .zip(&dataset.instances)
        .filter_map(|(s, inst)| s.as_ref().ok().map(|s| (*s, f64::from(inst.grade.value()))))
        .unzip();
    correlate(&predicted, &gold, method)
}

/// `0, step, 2*step, ..., 1`. `step` must divide 1 evenly.
pub fn grid_axis(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(CrmError::InvalidArgument(format!("grid step {step} outside (0,1]")));
    }
    let n = (1.0 / step).round();
    if ((1.0 / step) - n).abs() > 1e-9 {
        return Err(CrmError::InvalidArgument(format!("grid step {step} does not divide 1")));
    }
    let n = n as usize;
    Ok((0..=n).map(|i| i as f64 / n as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestCell {
    pub alpha: f64,
    pub lambda: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResult {
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// `cells[lambda_index][alpha_index]`; `None` marks a failed cell.
    pub cells: Vec<Vec<Option<f64>>>,
    pub repr_kind: ReprKind,
    pub method: CorrelationMethod,
    pub best: Option<BestCell>,
    pub instances: usize,
    pub prepared: usize,
}

impl GridResult {
    pub fn cell(&self, alpha: f64, lambda: f64) -> Option<f64> {
        let a = self.alphas.iter().position(|&x| x == alpha)?;
        let l = self.lambdas.iter().position(|&x| x == lambda)?;
        self.cells[l][a]
    }

    /// CSV matrix: header `lambda\alpha,<alphas...>`, one row per lambda,
    /// `NA` for failed cells, then a `# best` summary line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda\\alpha");
        for a in &self.alphas {
            let _ = write!(out, ",{a}");
        }
        out.push('\n');
        for (l, row) in self.lambdas.iter().zip(&self.cells) {
            let _ = write!(out, "{l}");
            for cell in row {
                match cell {
                    Some(v) => {
                        let _ = write!(out, ",{v}");
                    }
                    None => out.push_str(",NA"),
                }
            }
            out.push('\n');
        }
        match &self.best {
            Some(b) => {
                let _ = writeln!(
                    out,
                    "# best {} alpha={} lambda={} rho={}",
                    self.method, b.alpha, b.lambda, b.rho
                );
            }
            None => out.push_str("# best none\n"),
        }
        out
    }
}

/// Correlation for every (alpha, lambda) pair over pre-scored instances.
/// Instances that failed preparation are left out of every cell.
pub fn grid_from_prepared(
    prepared: &[(&PreparedInstance, f64)],
    config: &ScoringConfig,
    alphas: &[f64],
    lambdas: &[f64],
    method: CorrelationMethod,
    exec: Execution,
) -> Vec<Vec<Option<f64>>> {
    let cells = exec::map_range(exec, alphas.len() * lambdas.len(), |c| {
        let (l, a) = (c / alphas.len(), c % alphas.len());
        let (alpha, lambda) = (alphas[a], lambdas[l]);
        let mut predicted = Vec::with_capacity(prepared.len());
        let mut gold = Vec::with_capacity(prepared.len());
        for (inst, g) in prepared {
            if let Ok(e) = inst.evaluate(alpha, lambda, config.kb_threshold) {
                predicted.push(e.score);
                gold.push(*g);
            }
        }
        correlate(&predicted, &gold, method).ok()
    });
    cells.chunks(alphas.len()).map(<[_]>::to_vec).collect()
}

pub fn grid_search(
    dataset: &Dataset,
    scorer: &Scorer<'_>,
    base: &ScoringConfig,
    alpha_step: f64,
    lambda_step: f64,
    method: CorrelationMethod,
) -> Result<GridResult> {
    grid_search_over(dataset, scorer, base, &grid_axis(alpha_step)?, &grid_axis(lambda_step)?, method)
}

pub fn grid_search_over(
    dataset: &Dataset,
    scorer: &Scorer<'_>,
    base: &ScoringConfig,
    alphas: &[f64],
    lambdas: &[f64],
    method: CorrelationMethod,
) -> Result<GridResult> {
    base.validate()?;
    if alphas.is_empty() || lambdas.is_empty() {
        return Err(CrmError::InvalidArgument("empty grid axis".into()));
    }
    if let Some(v) = alphas.iter().chain(lambdas).find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(CrmError::InvalidArgument(format!("grid value {v} outside [0,1]")));
    }
    let prepared = scorer.prepare_batch(&dataset.pairs(), base);
    let gold = grades_as_f64(dataset.instances.iter().map(|i| &i.grade));
    let ok: Vec<(&PreparedInstance, f64)> = prepared
        .iter()
        .zip(gold)
        .filter_map(|(p, g)| p.as_ref().ok().map(|p| (p, g)))
        .collect();
    let cells = grid_from_prepared(&ok, base, alphas, lambdas, method, scorer.execution());

    let mut best: Option<BestCell> = None;
    for (l, row) in cells.iter().enumerate() {
        for (a, cell) in row.iter().enumerate() {
            if let Some(rho) = *cell {
                if best.as_ref().is_none_or(|b| rho > b.rho) {
                    best = Some(BestCell {
                        alpha: alphas[a],
                        lambda: lambdas[l],
                        rho,
                    });
                }
            }
        }
    }
    Ok(GridResult {
        alphas: alphas.to_vec(),
        lambdas: lambdas.to_vec(),
        cells,
        repr_kind: base.repr_kind,
        method,
        best,
        instances: dataset.len(),
        prepared: ok.len(),
    })
}
