//! Localized phrase context: the global window representation blended with
//! the windows that best match the usage scenario.

use serde::{Deserialize, Serialize};

use crate::corpus::{find_occurrences, tokenize, ContextWindow, Phrase, DEFAULT_RADIUS};
use crate::error::{CrmError, Result};
use crate::exec::{self, Execution};
use crate::representation::{combine, Representer, SemanticRepr};
use crate::similarity::{score_similarity, SimilarityMeasure};

pub const DEFAULT_M_FLOOR: usize = 10;
pub const DEFAULT_SHRINK_BASE: usize = 2;

/// The narrative a phrase occurs in. `tokens` has every occurrence of the
/// phrase itself removed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageScenario {
    pub raw_text: String,
    pub tokens: Vec<String>,
}

impl UsageScenario {
    pub fn new(raw_text: impl Into<String>, phrase: &Phrase) -> Self {
        let raw_text = raw_text.into();
        let all = tokenize(&raw_text);
        let mut tokens = Vec::with_capacity(all.len());
        let hits = find_occurrences(&all, phrase.words());
        let mut skip_until = 0;
        let mut hits = hits.into_iter().peekable();
        for (i, tok) in all.into_iter().enumerate() {
            while hits.peek().is_some_and(|&h| h <= i) {
                let h = hits.next().unwrap();
                skip_until = skip_until.max(h + phrase.len());
            }
            if i >= skip_until {
                tokens.push(tok);
            }
        }
        UsageScenario { raw_text, tokens }
    }

    pub fn empty() -> Self {
        UsageScenario {
            raw_text: String::new(),
            tokens: Vec::new(),
        }
    }

    /// Word count excluding the phrase.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationConfig {
    pub alpha: f64,
    pub m_floor: usize,
    pub shrink_base: usize,
    pub radius: usize,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        LocalizationConfig {
            alpha: 0.9,
            m_floor: DEFAULT_M_FLOOR,
            shrink_base: DEFAULT_SHRINK_BASE,
            radius: DEFAULT_RADIUS,
        }
    }
}

impl LocalizationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(CrmError::InvalidArgument(format!("alpha {} outside [0,1]", self.alpha)));
        }
        if self.m_floor == 0 {
            return Err(CrmError::InvalidArgument("m_floor must be at least 1".into()));
        }
        if self.shrink_base < 2 {
            return Err(CrmError::InvalidArgument("shrink_base must be at least 2".into()));
        }
        if self.radius == 0 {
            return Err(CrmError::InvalidArgument("radius must be positive".into()));
        }
        Ok(())
    }
}

/// Number of top-ranked windows forming the local context:
/// `max(ceil(n / base^len), m_floor)`, never more than `n`.
pub fn compute_k(n_windows: usize, scenario_len: usize, config: &LocalizationConfig) -> Result<usize> {
    if n_windows == 0 {
        return Err(CrmError::PhraseUnseen("no context windows".into()));
    }
    let shrunk = u32::try_from(scenario_len)
        .ok()
        .and_then(|len| config.shrink_base.checked_pow(len))
        .map_or(1, |divisor| n_windows.div_ceil(divisor));
    Ok(shrunk.max(config.m_floor).min(n_windows))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedWindow {
    /// Position in the input window slice.
    pub index: usize,
    pub similarity: f64,
}

/// Orders windows by clamped similarity to the scenario, highest first.
/// Ties keep input order. Ranked-list representations are capped at `cap`
/// before comparison.
pub fn rank_windows(
    windows: &[ContextWindow],
    scenario: &UsageScenario,
    representer: &Representer<'_>,
    measure: SimilarityMeasure,
    cap: usize,
    exec: Execution,
) -> Result<Vec<RankedWindow>> {
    if windows.is_empty() {
        return Err(CrmError::InvalidArgument("no windows to rank".into()));
    }
    let target = match representer.tokens(&scenario.tokens) {
        Ok(SemanticRepr::Ranked(r)) if r.is_empty() => return Err(CrmError::EmptyScenario),
        Ok(r) => r.capped(cap),
        Err(CrmError::NoEmbeddableTokens) => return Err(CrmError::EmptyScenario),
        Err(e) => return Err(e),
    };
    let sims = exec::map(exec, windows, |w| -> Result<f64> {
        match representer.tokens(w.tokens()) {
            Ok(r) => score_similarity(&r.capped(cap), &target, measure),
            Err(CrmError::NoEmbeddableTokens) => Ok(0.0),
            Err(e) => Err(e),
        }
    });
    Ok(order_by_similarity(sims.into_iter().collect::<Result<Vec<_>>>()?))
}

/// Highest similarity first; ties keep input order.
fn order_by_similarity(sims: Vec<f64>) -> Vec<RankedWindow> {
    let mut ranked: Vec<RankedWindow> = sims
        .into_iter()
        .enumerate()
        .map(|(index, similarity)| RankedWindow { index, similarity })
        .collect();
    ranked.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then(a.index.cmp(&b.index))
    });
    ranked
}

/// Global and local representations of one phrase under one scenario,
/// before blending with `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalParts {
    pub global: SemanticRepr,
    /// `None` when K = N, in which case the local term is the global term.
    pub local: Option<SemanticRepr>,
    pub k: usize,
    pub n: usize,
}

impl LocalParts {
    /// `alpha * global + (1 - alpha) * local`.
    pub fn blend(&self, alpha: f64) -> Result<SemanticRepr> {
        match &self.local {
            _ if alpha == 1.0 => Ok(self.global.clone()),
            None => Ok(self.global.clone()),
            Some(local) if alpha == 0.0 => Ok(local.clone()),
            Some(local) => combine(&[&self.global, local], &[alpha, 1.0 - alpha]),
        }
    }
}

/// Computes the global representation over all windows and, when the
/// scenario shrinks K below N, the representation of the top-K windows.
pub fn local_parts(
    windows: &[ContextWindow],
    scenario: &UsageScenario,
    config: &LocalizationConfig,
    representer: &Representer<'_>,
    measure: SimilarityMeasure,
    cap: usize,
    exec: Execution,
) -> Result<LocalParts> {
    let n = windows.len();
    let k = compute_k(n, scenario.len(), config)?;
    let all: Vec<&ContextWindow> = windows.iter().collect();
    let global = representer.windows(&all)?;
    if k == n {
        return Ok(LocalParts { global, local: None, k, n });
    }
    let ranked = rank_windows(windows, scenario, representer, measure, cap, exec)?;
    let top: Vec<&ContextWindow> = ranked[..k].iter().map(|r| &windows[r.index]).collect();
    let local = match representer.windows(&top) {
        Ok(r) => r,
        // every top window lacked embeddable tokens: the local term carries no signal
        Err(CrmError::NoEmbeddableTokens) => global.clone(),
        Err(e) => return Err(e),
    };
    Ok(LocalParts {
        global,
        local: Some(local),
        k,
        n,
    })
}

/// C(p, s) for the windows of one phrase.
pub fn localized_context(
    windows: &[ContextWindow],
    scenario: &UsageScenario,
    config: &LocalizationConfig,
    representer: &Representer<'_>,
    measure: SimilarityMeasure,
    cap: usize,
    exec: Execution,
) -> Result<SemanticRepr> {
    config.validate()?;
    local_parts(windows, scenario, config, representer, measure, cap, exec)?.blend(config.alpha)
}
