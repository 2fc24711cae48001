//! Synthetic molecular features with planted associations.
//!
//! Planted binary labels are drawn per cell line during study generation and
//! shift the latent curve logits; this module embeds those labels as feature
//! columns among block-typed noise columns, optionally with correlated proxy
//! columns, and returns the planted map.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::stream;
use crate::types::{FeatureKind, FeatureMatrix};

use super::{GroundTruth, SimConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub block: FeatureKind,
    /// Logit shift applied to curves of carrier lines (positive = more
    /// sensitive).
    pub effect_logit: f64,
    pub prevalence: f64,
    /// When set, add a second column correlated with the causal one at
    /// roughly this level; only the causal column is ground-truth positive.
    #[serde(default)]
    pub proxy_corr: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedFeature {
    pub column: String,
    pub block: FeatureKind,
    pub effect_logit: f64,
    /// Index into the per-line latent label vector.
    pub latent: usize,
    /// True for proxy columns, which are correlated with a causal column but
    /// carry no effect of their own.
    pub is_proxy: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PlantedMap {
    pub features: Vec<PlantedFeature>,
}

impl PlantedMap {
    pub fn causal_columns(&self) -> Vec<&str> {
        self.features
            .iter()
            .filter(|f| !f.is_proxy)
            .map(|f| f.column.as_str())
            .collect()
    }
}

fn block_prefix(kind: FeatureKind) -> &'static str {
    match kind {
        FeatureKind::Mutation => "mut",
        FeatureKind::CopyNumber => "cnv",
        FeatureKind::Expression => "expr",
        FeatureKind::Tissue => "tissue",
    }
}

/// Build the feature matrix for a simulated study. The planted labels come
/// from `truth.line_labels` (drawn during `simulate_study`).
pub fn make_feature_signal(cfg: &SimConfig, truth: &GroundTruth) -> (FeatureMatrix, PlantedMap) {
    let n = cfg.n_cell_lines;
    let fs = &cfg.feature_signal;
    let mut names: Vec<String> = Vec::new();
    let mut kinds: Vec<FeatureKind> = Vec::new();
    let mut columns: Vec<Vec<Option<f64>>> = Vec::new();
    let mut planted = PlantedMap::default();

    // planted columns first, then proxies, then noise
    for (p, spec) in fs.planted.iter().enumerate() {
        let name = format!("{}_planted{}", block_prefix(spec.block), p);
        let col: Vec<Option<f64>> = (0..n)
            .map(|i| Some(truth.line_labels[i * fs.planted.len() + p]))
            .collect();
        planted.features.push(PlantedFeature {
            column: name.clone(),
            block: spec.block,
            effect_logit: spec.effect_logit,
            latent: p,
            is_proxy: false,
        });
        names.push(name);
        kinds.push(spec.block);
        columns.push(col);

        if let Some(corr) = spec.proxy_corr {
            let flip = ((1.0 - corr) / 2.0).clamp(0.0, 0.5);
            let mut rng = stream(cfg.seed, "sim.features.proxy", &[p as u64]);
            let name = format!("{}_proxy{}", block_prefix(spec.block), p);
            let col: Vec<Option<f64>> = (0..n)
                .map(|i| {
                    let z = truth.line_labels[i * fs.planted.len() + p];
                    let v = if rng.gen::<f64>() < flip { 1.0 - z } else { z };
                    Some(v)
                })
                .collect();
            planted.features.push(PlantedFeature {
                column: name.clone(),
                block: spec.block,
                effect_logit: 0.0,
                latent: p,
                is_proxy: true,
            });
            names.push(name);
            kinds.push(spec.block);
            columns.push(col);
        }
    }

    let blocks = [
        (FeatureKind::Mutation, fs.n_mutation),
        (FeatureKind::CopyNumber, fs.n_copy_number),
        (FeatureKind::Expression, fs.n_expression),
        (FeatureKind::Tissue, fs.n_tissue),
    ];
    for (kind, count) in blocks {
        for g in 0..count {
            let mut rng = stream(cfg.seed, "sim.features.noise", &[kind as u64, g as u64]);
            let name = format!("{}_g{:03}", block_prefix(kind), g);
            let col: Vec<Option<f64>> = match kind {
                FeatureKind::Mutation => {
                    let pi = rng.gen_range(0.05..0.4);
                    (0..n).map(|_| Some((rng.gen::<f64>() < pi) as u8 as f64)).collect()
                }
                FeatureKind::CopyNumber => (0..n)
                    .map(|_| {
                        let base = 3.0f64;
                        let bump: f64 = match rng.gen_range(0..10u8) {
                            0 => -2.0,
                            1 | 2 => -1.0,
                            7 | 8 => 1.0,
                            9 => 3.0,
                            _ => 0.0,
                        };
                        Some((base + bump).max(0.0))
                    })
                    .collect(),
                FeatureKind::Expression => {
                    let mu = rng.gen_range(-1.0..1.0);
                    let sd = rng.gen_range(0.5..1.5);
                    (0..n)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            Some(mu + sd * z)
                        })
                        .collect()
                }
                FeatureKind::Tissue => {
                    // one-hot over a handful of tissue groups
                    let groups = fs.n_tissue.max(1);
                    (0..n)
                        .map(|i| {
                            let grp = crate::rng::derive_seed(cfg.seed, "sim.tissue", &[i as u64])
                                as usize
                                % groups;
                            Some((grp == g) as u8 as f64)
                        })
                        .collect()
                }
            };
            names.push(name);
            kinds.push(kind);
            columns.push(col);
        }
    }

    let p = names.len();
    let mut values = vec![None; n * p];
    for (g, col) in columns.iter().enumerate() {
        for i in 0..n {
            values[i * p + g] = col[i];
        }
    }
    // whole-row missingness for a configured fraction of lines
    if fs.missing_line_fraction > 0.0 {
        let mut rng = stream(cfg.seed, "sim.features.missing", &[]);
        for i in 0..n {
            if rng.gen::<f64>() < fs.missing_line_fraction {
                for g in 0..p {
                    values[i * p + g] = None;
                }
            }
        }
    }

    (
        FeatureMatrix {
            names,
            kinds,
            values,
            n_cell_lines: n,
        },
        planted,
    )
}
