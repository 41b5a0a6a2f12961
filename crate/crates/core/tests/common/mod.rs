//! Straight-line reference implementations used to cross-check the library.
//! Nothing here goes through `WindowIndex`, `Representer` or `Scorer`: the
//! corpus is scanned directly and every quantity is recomputed from raw
//! token lists.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Vector = Vec<f64>;
pub type Weights = BTreeMap<String, f64>;

pub fn tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        let chars: Vec<char> = raw.chars().collect();
        let mut lo = 0;
        let mut hi = chars.len();
        while lo < hi && !chars[lo].is_alphanumeric() {
            lo += 1;
        }
        while hi > lo && !chars[hi - 1].is_alphanumeric() {
            hi -= 1;
        }
        if lo < hi {
            out.push(chars[lo..hi].iter().collect::<String>().to_lowercase());
        }
    }
    out
}

pub fn k(n: usize, len: usize, m: usize, base: usize) -> usize {
    // smallest q with q * base^len >= n, by repeated multiplication
    let mut denom: u128 = 1;
    for _ in 0..len {
        denom = denom.saturating_mul(base as u128);
        if denom > n as u128 {
            break;
        }
    }
    let n = n as u128;
    #[allow(clippy::manual_div_ceil)] // spelled out on purpose
    let q = if denom >= n { 1 } else { (n + denom - 1) / denom };
    (q as usize).max(m).min(n as usize)
}

pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some(dot / (na * nb))
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    // textbook single-pass form
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let syy: f64 = y.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    if x.iter().all(|v| *v == x[0]) || y.iter().all(|v| *v == y[0]) {
        return None;
    }
    let num = n * sxy - sx * sy;
    let den = ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt();
    Some(num / den)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Measure {
    Cosine,
    Pearson,
}

/// Clamped score similarity; undefined comparisons count as 0.
pub fn score(a: &[f64], b: &[f64], m: Measure) -> f64 {
    let s = match m {
        Measure::Cosine => cosine(a, b),
        Measure::Pearson => pearson(a, b),
    };
    s.map_or(0.0, |s| s.clamp(0.0, 1.0))
}

/// Brute-force Spearman: ranks by counting smaller and equal values.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|x| {
            let less = xs.iter().filter(|y| *y < x).count() as f64;
            let equal = xs.iter().filter(|y| *y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    centered_pearson(&ranks(x), &ranks(y))
}

pub fn centered_pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let c: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if vx == 0.0 || vy == 0.0 {
        None
    } else {
        Some(c / (vx * vy).sqrt())
    }
}

/// Positions covered by any occurrence of `phrase` in `toks`.
fn covered(toks: &[String], phrase: &[String]) -> Vec<bool> {
    let mut mask = vec![false; toks.len()];
    if phrase.is_empty() || phrase.len() > toks.len() {
        return mask;
    }
    for i in 0..=toks.len() - phrase.len() {
        if toks[i..i + phrase.len()] == *phrase {
            for m in &mut mask[i..i + phrase.len()] {
                *m = true;
            }
        }
    }
    mask
}

pub fn without(toks: &[String], phrase: &[String]) -> Vec<String> {
    let mask = covered(toks, phrase);
    toks.iter()
        .zip(mask)
        .filter(|(_, m)| !m)
        .map(|(t, _)| t.clone())
        .collect()
}

/// Context tokens (left then right) of every occurrence of `phrase`, in
/// document order.
pub fn windows(docs: &[String], phrase: &[String], radius: usize) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for d in docs {
        let t = tokens(d);
        if phrase.len() > t.len() {
            continue;
        }
        for i in 0..=t.len() - phrase.len() {
            if t[i..i + phrase.len()] == *phrase {
                let lo = i.saturating_sub(radius);
                let hi = (i + phrase.len() + radius).min(t.len());
                let mut ctx: Vec<String> = t[lo..i].to_vec();
                ctx.extend_from_slice(&t[i + phrase.len()..hi]);
                out.push(ctx);
            }
        }
    }
    out
}

pub fn avg(toks: &[String], lex: &HashMap<String, Vector>, dim: usize) -> Option<Vector> {
    let hits: Vec<&Vector> = toks.iter().filter_map(|t| lex.get(t)).collect();
    if hits.is_empty() {
        return None;
    }
    let mut out = vec![0.0; dim];
    for v in &hits {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += x;
        }
    }
    Some(out.into_iter().map(|x| x / hits.len() as f64).collect())
}

/// Mean of per-window averages, skipping windows with no known token.
pub fn window_mean(ws: &[&Vec<String>], lex: &HashMap<String, Vector>, dim: usize) -> Option<Vector> {
    let per: Vec<Vector> = ws.iter().filter_map(|w| avg(w, lex, dim)).collect();
    if per.is_empty() {
        return None;
    }
    let mut out = vec![0.0; dim];
    for v in &per {
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    Some(out.into_iter().map(|x| x / per.len() as f64).collect())
}

pub fn lerp(a: &[f64], b: &[f64], t: f64) -> Vector {
    a.iter().zip(b).map(|(x, y)| t * x + (1.0 - t) * y).collect()
}

/// Document frequency over windows and the window count.
pub fn df_table(all_windows: &[Vec<String>]) -> (HashMap<String, usize>, usize) {
    let mut df = HashMap::new();
    for w in all_windows {
        let distinct: BTreeSet<&String> = w.iter().collect();
        for t in distinct {
            *df.entry(t.clone()).or_insert(0) += 1;
        }
    }
    (df, all_windows.len())
}

pub fn tfidf(colls: &[&Vec<String>], df: &HashMap<String, usize>, total: usize) -> Weights {
    let mut tf: HashMap<&String, usize> = HashMap::new();
    for c in colls {
        for t in c.iter() {
            *tf.entry(t).or_default() += 1;
        }
    }
    tf.into_iter()
        .map(|(t, c)| {
            let d = df.get(t).copied().unwrap_or(1).max(1);
            (t.clone(), c as f64 * (total as f64 / d as f64).ln())
        })
        .collect()
}

/// Ranked view of a weight map: descending weight, ties by token, at most `cap`.
pub fn ranked(w: &Weights, cap: usize) -> Vec<(String, f64)> {
    let mut v: Vec<(String, f64)> = w.iter().map(|(t, x)| (t.clone(), *x)).collect();
    v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    v.truncate(cap);
    v
}

pub fn ranked_score(a: &Weights, b: &Weights, cap: usize, m: Measure) -> f64 {
    let a: BTreeMap<String, f64> = ranked(a, cap).into_iter().collect();
    let b: BTreeMap<String, f64> = ranked(b, cap).into_iter().collect();
    let keys: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    let x: Vec<f64> = keys.iter().map(|k| a.get(*k).copied().unwrap_or(0.0)).collect();
    let y: Vec<f64> = keys.iter().map(|k| b.get(*k).copied().unwrap_or(0.0)).collect();
    score(&x, &y, m)
}

/// `sum_i c_i * w_i` accumulated left to right from zero.
pub fn weighted_sum(parts: &[(&Weights, f64)]) -> Weights {
    let mut out = Weights::new();
    for (w, c) in parts {
        for (t, x) in w.iter() {
            *out.entry(t.clone()).or_insert(0.0) += c * x;
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct OracleKb {
    pub id: String,
    pub label: String,
    pub abstract_text: String,
    pub redirects: Vec<String>,
}

#[derive(Clone, Copy, Debug)]
pub struct Params {
    pub alpha: f64,
    pub lambda: f64,
    pub m_floor: usize,
    pub base: usize,
    pub radius: usize,
    pub threshold: f64,
    pub top_k: usize,
    pub cap: usize,
    pub measure: Measure,
}

pub struct World<'a> {
    pub docs: &'a [String],
    pub lexicon: &'a HashMap<String, Vector>,
    pub dim: usize,
    pub synonyms: &'a [(String, Vec<String>)],
    pub kb: &'a [OracleKb],
    /// Phrases whose windows define document frequency in ranked mode.
    pub indexed: &'a [Vec<String>],
}

#[derive(Debug, Clone)]
pub enum Ctx {
    Emb(Vector),
    Ranked(Weights),
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub n: usize,
    pub k: usize,
    pub global: Ctx,
    pub localized: Ctx,
    pub weights: Vec<(String, f64)>,
    pub adjusted: Ctx,
    pub perturbations: Vec<(Vec<String>, usize, f64)>,
    pub score: f64,
}

fn count(docs: &[String], phrase: &[String]) -> usize {
    windows(docs, phrase, 0).len()
}

fn perturbations(world: &World, phrase: &[String], top_k: usize) -> Vec<(Vec<String>, usize)> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for i in 0..phrase.len() {
        if let Some((_, syns)) = world.synonyms.iter().find(|(t, _)| *t == phrase[i]) {
            for s in syns {
                let mut p = phrase.to_vec();
                p[i] = s.clone();
                if p != phrase && seen.insert(p.clone()) {
                    out.push(p);
                }
            }
        }
    }
    let mut scored: Vec<(Vec<String>, usize)> = out.into_iter().map(|p| {
        let c = count(world.docs, &p);
        (p, c)
    }).collect();
    scored.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(top_k);
    scored
}

fn candidate_tokens(e: &OracleKb) -> Vec<String> {
    let title = tokens(&e.label);
    let mut out = title.clone();
    out.extend(without(&tokens(&e.abstract_text), &title));
    out
}

fn candidates<'k>(world: &'k World, phrase: &[String]) -> Vec<&'k OracleKb> {
    let mut c: Vec<&OracleKb> = world
        .kb
        .iter()
        .filter(|e| tokens(&e.label) == phrase || e.redirects.iter().any(|r| tokens(r) == phrase))
        .collect();
    c.sort_by(|a, b| a.id.cmp(&b.id));
    c
}

/// The whole scoring pipeline for one instance, or `None` where the library
/// is expected to report an error.
pub fn pipeline(world: &World, phrase: &str, scenario: &str, p: Params, ranked_mode: bool) -> Option<Trace> {
    let phrase = tokens(phrase);
    let ws = windows(world.docs, &phrase, p.radius);
    if ws.is_empty() {
        return None;
    }
    let perts = perturbations(world, &phrase, p.top_k);
    if perts.is_empty() {
        return None;
    }
    let scen = without(&tokens(scenario), &phrase);
    let n = ws.len();
    let k = k(n, scen.len(), p.m_floor, p.base);
    let all: Vec<&Vec<String>> = ws.iter().collect();

    if ranked_mode {
        let every: Vec<Vec<String>> = world
            .indexed
            .iter()
            .flat_map(|ph| windows(world.docs, ph, p.radius))
            .collect();
        let (df, total) = df_table(&every);
        let rep = |colls: &[&Vec<String>]| tfidf(colls, &df, total);
        let global = rep(&all);
        let localized = if k == n {
            global.clone()
        } else {
            let target = rep(&[&scen]);
            if target.is_empty() {
                return None;
            }
            let mut sims: Vec<(usize, f64)> = ws
                .iter()
                .enumerate()
                .map(|(i, w)| (i, ranked_score(&rep(&[w]), &target, p.cap, p.measure)))
                .collect();
            sims.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let top: Vec<&Vec<String>> = sims[..k].iter().map(|(i, _)| &ws[*i]).collect();
            let local = rep(&top);
            if p.alpha == 1.0 {
                global.clone()
            } else if p.alpha == 0.0 {
                local
            } else {
                weighted_sum(&[(&global, p.alpha), (&local, 1.0 - p.alpha)])
            }
        };
        let mut kept: Vec<(&OracleKb, Weights, f64)> = Vec::new();
        for e in candidates(world, &phrase) {
            let ct = candidate_tokens(e);
            if ct.is_empty() {
                continue;
            }
            let r = rep(&[&ct]);
            let s = ranked_score(&r, &localized, p.cap, p.measure);
            if s > p.threshold {
                kept.push((e, r, s));
            }
        }
        let total_sim: f64 = kept.iter().map(|k| k.2).sum();
        kept.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.id.cmp(&b.0.id)));
        let weights: Vec<(String, f64)> = kept.iter().map(|(e, _, s)| (e.id.clone(), s / total_sim)).collect();
        let adjusted = if kept.is_empty() || p.lambda == 1.0 {
            localized.clone()
        } else {
            let mut parts: Vec<(&Weights, f64)> = Vec::new();
            if p.lambda != 0.0 {
                parts.push((&localized, p.lambda));
            }
            for ((_, r, _), (_, w)) in kept.iter().zip(&weights) {
                parts.push((r, (1.0 - p.lambda) * w));
            }
            weighted_sum(&parts)
        };
        let mut pert_scores = Vec::new();
        for (pp, freq) in &perts {
            let pw = windows(world.docs, pp, p.radius);
            let s = if pw.is_empty() {
                0.0
            } else {
                let refs: Vec<&Vec<String>> = pw.iter().collect();
                ranked_score(&adjusted, &rep(&refs), p.cap, p.measure)
            };
            pert_scores.push((pp.clone(), *freq, s));
        }
        let score = pert_scores.iter().map(|x| x.2).sum::<f64>() / pert_scores.len() as f64;
        return Some(Trace {
            n,
            k,
            global: Ctx::Ranked(global),
            localized: Ctx::Ranked(localized),
            weights,
            adjusted: Ctx::Ranked(adjusted),
            perturbations: pert_scores,
            score,
        });
    }

    let (lex, dim) = (world.lexicon, world.dim);
    let global = window_mean(&all, lex, dim)?;
    let localized = if k == n {
        global.clone()
    } else {
        let target = avg(&scen, lex, dim)?;
        let mut sims: Vec<(usize, f64)> = ws
            .iter()
            .enumerate()
            .map(|(i, w)| (i, avg(w, lex, dim).map_or(0.0, |v| score(&v, &target, p.measure))))
            .collect();
        sims.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let top: Vec<&Vec<String>> = sims[..k].iter().map(|(i, _)| &ws[*i]).collect();
        let local = window_mean(&top, lex, dim).unwrap_or_else(|| global.clone());
        lerp(&global, &local, p.alpha)
    };
    let mut kept: Vec<(&OracleKb, Vector, f64)> = Vec::new();
    for e in candidates(world, &phrase) {
        if let Some(v) = avg(&candidate_tokens(e), lex, dim) {
            let s = score(&v, &localized, p.measure);
            if s > p.threshold {
                kept.push((e, v, s));
            }
        }
    }
    let total_sim: f64 = kept.iter().map(|k| k.2).sum();
    let weights: Vec<(String, f64)> = kept.iter().map(|(e, _, s)| (e.id.clone(), s / total_sim)).collect();
    let adjusted = if kept.is_empty() {
        localized.clone()
    } else {
        let mut kb_part = vec![0.0; dim];
        for ((_, v, _), (_, w)) in kept.iter().zip(&weights) {
            for (o, x) in kb_part.iter_mut().zip(v) {
                *o += w * x;
            }
        }
        lerp(&localized, &kb_part, p.lambda)
    };
    let mut pert_scores = Vec::new();
    for (pp, freq) in &perts {
        let pw = windows(world.docs, pp, p.radius);
        let refs: Vec<&Vec<String>> = pw.iter().collect();
        let s = window_mean(&refs, lex, dim).map_or(0.0, |v| score(&adjusted, &v, p.measure));
        pert_scores.push((pp.clone(), *freq, s));
    }
    let score = pert_scores.iter().map(|x| x.2).sum::<f64>() / pert_scores.len() as f64;
    let mut weights = weights;
    weights.sort_by(|a, b| a.0.cmp(&b.0));
    Some(Trace {
        n,
        k,
        global: Ctx::Emb(global),
        localized: Ctx::Emb(localized),
        weights,
        adjusted: Ctx::Emb(adjusted),
        perturbations: pert_scores,
        score,
    })
}

/// A small random world: phrase `a b`, synonyms for both words, a few KB
/// entries and a partially covered embedding lexicon.
pub struct RandomWorld {
    pub docs: Vec<String>,
    pub lexicon: HashMap<String, Vector>,
    pub dim: usize,
    pub synonyms: Vec<(String, Vec<String>)>,
    pub kb: Vec<OracleKb>,
    pub indexed: Vec<Vec<String>>,
    pub scenario: String,
}

impl RandomWorld {
    pub fn view(&self) -> World<'_> {
        World {
            docs: &self.docs,
            lexicon: &self.lexicon,
            dim: self.dim,
            synonyms: &self.synonyms,
            kb: &self.kb,
            indexed: &self.indexed,
        }
    }
}

pub fn random_world(seed: u64) -> RandomWorld {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab: Vec<String> = (0..14).map(|i| format!("w{i}")).collect();
    let phrases = ["a b", "c b", "a d", "a e"];
    let dim = 3 + rng.random_range(0..3);
    let mut lexicon = HashMap::new();
    for w in &vocab {
        // a couple of words stay out of the lexicon
        if rng.random_bool(0.85) {
            lexicon.insert(w.clone(), (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect());
        }
    }
    let n_docs = rng.random_range(4..12);
    let mut docs = Vec::new();
    for _ in 0..n_docs {
        let len = rng.random_range(3..14);
        let mut words: Vec<String> = (0..len).map(|_| vocab[rng.random_range(0..vocab.len())].clone()).collect();
        for _ in 0..rng.random_range(1..4) {
            let ph = phrases[rng.random_range(0..phrases.len())];
            let at = rng.random_range(0..=words.len());
            words.insert(at, ph.to_string());
        }
        docs.push(words.join(" "));
    }
    let synonyms = vec![
        ("a".to_string(), vec!["c".to_string()]),
        ("b".to_string(), vec!["d".to_string(), "e".to_string()]),
    ];
    let mut kb = Vec::new();
    for i in 0..rng.random_range(0..4) {
        let len = rng.random_range(0..8);
        let abs: Vec<&str> = (0..len).map(|_| vocab[rng.random_range(0..vocab.len())].as_str()).collect();
        let mut abstract_text = abs.join(" ");
        if rng.random_bool(0.3) {
            abstract_text.push_str(" a b");
        }
        let redirect = rng.random_bool(0.4);
        kb.push(OracleKb {
            id: format!("kb:{i}"),
            label: if redirect { format!("other {i}") } else { "A b".into() },
            abstract_text,
            redirects: if redirect { vec!["a B".into()] } else { vec![] },
        });
    }
    let scen_len = rng.random_range(1..6);
    let scen: Vec<&str> = (0..scen_len).map(|_| vocab[rng.random_range(0..vocab.len())].as_str()).collect();
    let scenario = format!("{} a b", scen.join(" "));
    RandomWorld {
        docs,
        lexicon,
        dim,
        synonyms,
        kb,
        indexed: phrases.iter().map(|p| tokens(p)).collect(),
        scenario,
    }
}
