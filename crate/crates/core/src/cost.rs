//! Prefill FLOPs estimate for a decoder that prunes visual tokens once,
//! after layer `K`.
//!
//! A layer processing `n` tokens is charged
//! `4 n d^2 + 2 n^2 d + 2 n d m` operations (`d = d_model`, `m = d_ffn`):
//! the attention projections, the attention map and the feed-forward block.
//! Layers `0..K` see all `n_visual + n_text` tokens, layers `K..layers` see
//! `retained_count(n_visual, ratio) + n_text`. This is an estimate under those
//! conventions, not a measurement.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::csv_io;
use crate::prune::retained_count;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub layers: usize,
    pub d_model: usize,
    pub d_ffn: usize,
    pub n_visual: usize,
    pub n_text: usize,
    /// Layer index `K` from which the pruned sequence is used.
    pub prune_layer: usize,
    #[serde(default)]
    pub ratio: f64,
}

impl CostConfig {
    /// LLaVA-1.5-7B shapes: 32 layers, hidden 4096, FFN 11008, 576 visual
    /// tokens, pruning after layer 2. The text length is a typical prompt.
    pub fn llava_like() -> Self {
        Self {
            layers: 32,
            d_model: 4096,
            d_ffn: 11008,
            n_visual: 576,
            n_text: 64,
            prune_layer: 2,
            ratio: 0.0,
        }
    }

    pub fn with_ratio(&self, ratio: f64) -> Self {
        Self {
            ratio,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("layers", self.layers),
            ("d_model", self.d_model),
            ("d_ffn", self.d_ffn),
            ("n_visual", self.n_visual),
            ("n_text", self.n_text),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidParameter(format!("{name} must be >= 1")));
        }
        if self.prune_layer > self.layers {
            return Err(Error::InvalidParameter(format!(
                "prune_layer {} exceeds layer count {}",
                self.prune_layer, self.layers
            )));
        }
        if !(0.0..1.0).contains(&self.ratio) {
            return Err(Error::InvalidParameter(format!(
                "pruning ratio must lie in [0, 1), got {}",
                self.ratio
            )));
        }
        Ok(())
    }

    /// Reads a `key = value` config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let cfg: CostConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|span| text[..span.start].matches('\n').count() + 1)
                .unwrap_or(1);
            Error::schema(origin, line, e.message().to_string())
        })?;
        cfg.validate()
            .map_err(|e| Error::schema(origin, 1, e.to_string()))?;
        Ok(cfg)
    }
}

fn layer_flops(tokens: usize, d_model: usize, d_ffn: usize) -> f64 {
    let (n, d, m) = (tokens as f64, d_model as f64, d_ffn as f64);
    4.0 * n * d * d + 2.0 * n * n * d + 2.0 * n * d * m
}

pub fn flops_estimate(cfg: &CostConfig) -> Result<f64> {
    cfg.validate()?;
    let full = cfg.n_visual + cfg.n_text;
    let pruned = retained_count(cfg.n_visual, cfg.ratio)? + cfg.n_text;
    let early = cfg.prune_layer as f64 * layer_flops(full, cfg.d_model, cfg.d_ffn);
    let late = (cfg.layers - cfg.prune_layer) as f64 * layer_flops(pruned, cfg.d_model, cfg.d_ffn);
    Ok(early + late)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlopsRow {
    pub ratio: f64,
    pub retained: usize,
    pub flops: f64,
    /// In units of 1e9.
    pub flops_b: f64,
    /// Relative to the unpruned model.
    pub fraction: f64,
}

pub fn ratio_table(base: &CostConfig, ratios: &[f64]) -> Result<Vec<FlopsRow>> {
    let baseline = flops_estimate(&base.with_ratio(0.0))?;
    ratios
        .iter()
        .map(|&ratio| {
            let cfg = base.with_ratio(ratio);
            let flops = flops_estimate(&cfg)?;
            Ok(FlopsRow {
                ratio,
                retained: retained_count(cfg.n_visual, ratio)?,
                flops,
                flops_b: flops / 1e9,
                fraction: flops / baseline,
            })
        })
        .collect()
}

pub fn write_table_csv(rows: &[FlopsRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    for row in rows {
        out.serialize(row)?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
