//! Flat `key = value` config files layered under environment and flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use crm::scoring::ScoringConfig;

pub const KEYS: [&str; 10] = [
    "alpha",
    "lambda",
    "m_floor",
    "shrink_base",
    "radius",
    "kb_threshold",
    "top_k_perturbations",
    "repr_kind",
    "measure",
    "ranked_list_cap",
];

pub fn set(cfg: &mut ScoringConfig, key: &str, value: &str) -> Result<()> {
    let v = value.trim();
    let float = || v.parse::<f64>().with_context(|| format!("{key}: expected a number, got {v:?}"));
    let int = || v.parse::<usize>().with_context(|| format!("{key}: expected an integer, got {v:?}"));
    match key {
        "alpha" => cfg.alpha = float()?,
        "lambda" => cfg.lambda = float()?,
        "m_floor" => cfg.m_floor = int()?,
        "shrink_base" => cfg.shrink_base = int()?,
        "radius" => cfg.radius = int()?,
        "kb_threshold" => cfg.kb_threshold = float()?,
        "top_k_perturbations" => cfg.top_k_perturbations = int()?,
        "repr_kind" => cfg.repr_kind = v.parse()?,
        "measure" => cfg.measure = v.parse()?,
        "ranked_list_cap" => cfg.ranked_list_cap = int()?,
        other => bail!("unknown config key {other:?} (known: {})", KEYS.join(", ")),
    }
    Ok(())
}

/// Applies a config file. Blank lines and `#` comments are ignored.
pub fn apply_text(cfg: &mut ScoringConfig, text: &str, origin: &str) -> Result<()> {
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("{origin}:{}: expected key = value", i + 1);
        };
        set(cfg, &k.trim().replace('-', "_"), v).with_context(|| format!("{origin}:{}", i + 1))?;
    }
    Ok(())
}

pub fn apply_file(cfg: &mut ScoringConfig, path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    apply_text(cfg, &text, &path.display().to_string())
}

pub fn render(cfg: &ScoringConfig) -> String {
    let value = serde_json::to_value(cfg).expect("config serializes");
    KEYS.iter()
        .map(|k| {
            let v = &value[k];
            format!("{k} = {}\n", v.as_str().map_or_else(|| v.to_string(), str::to_string))
        })
        .collect()
}
