//! Cosine and Pearson similarity over vectors and representations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CrmError, Result};
use crate::representation::{RankedList, SemanticRepr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMeasure {
    #[default]
    Cosine,
    Pearson,
}

impl std::str::FromStr for SimilarityMeasure {
    type Err = CrmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" | "cos" => Ok(SimilarityMeasure::Cosine),
            "pearson" => Ok(SimilarityMeasure::Pearson),
            other => Err(CrmError::InvalidArgument(format!("unknown measure {other:?}"))),
        }
    }
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(CrmError::DimensionMismatch(a.len(), b.len()));
    }
    Ok(())
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(CrmError::UndefinedCosine);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_dims(x, y)?;
    if x.len() < 2 {
        return Err(CrmError::InvalidArgument(
            "pearson needs at least two observations".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(CrmError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn vector_similarity(a: &[f64], b: &[f64], measure: SimilarityMeasure) -> Result<f64> {
    match measure {
        SimilarityMeasure::Cosine => cosine(a, b),
        SimilarityMeasure::Pearson => pearson(a, b),
    }
}

/// Dense weight vectors of two ranked lists over their union vocabulary.
pub fn materialize(a: &RankedList, b: &RankedList) -> (Vec<f64>, Vec<f64>) {
    let mut union: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for (t, w) in a.entries() {
        union.entry(t).or_default().0 = *w;
    }
    for (t, w) in b.entries() {
        union.entry(t).or_default().1 = *w;
    }
    union.into_values().unzip()
}

pub fn repr_similarity(a: &SemanticRepr, b: &SemanticRepr, measure: SimilarityMeasure) -> Result<f64> {
    match (a, b) {
        (SemanticRepr::Embedding(x), SemanticRepr::Embedding(y)) => {
            vector_similarity(x.values(), y.values(), measure)
        }
        (SemanticRepr::Ranked(x), SemanticRepr::Ranked(y)) => {
            let (u, v) = materialize(x, y);
            vector_similarity(&u, &v, measure)
        }
        _ => Err(CrmError::KindMismatch),
    }
}

/// Similarity used as a ranking or weighting score: negatives and undefined
/// comparisons (zero vectors, zero variance, empty lists) map to 0.
pub fn score_similarity(a: &SemanticRepr, b: &SemanticRepr, measure: SimilarityMeasure) -> Result<f64> {
    match repr_similarity(a, b, measure) {
        Ok(s) => Ok(s.max(0.0)),
        Err(CrmError::UndefinedCosine | CrmError::ZeroVariance) => Ok(0.0),
        Err(CrmError::InvalidArgument(_)) if measure == SimilarityMeasure::Pearson => Ok(0.0),
        Err(e) => Err(e),
    }
}
