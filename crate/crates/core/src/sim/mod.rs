//! Synthetic study generation from the generative count model, with
//! configurable temporal batch effects and control cross-contamination.
//! Ground truth is retained for verification.

mod curves;
mod features;

pub use curves::{draw_curve, draw_drug_profile, CurveFamily, DrugProfile};
pub use features::{make_feature_signal, PlantedFeature, PlantedMap, PlantedSpec};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma as GammaDist, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::exec;
use crate::rng::stream;
use crate::types::{
    Experiment, GammaParams, Plate, StudyDataset, StudyMeta, Stratum, Well, WellKind, ALL_STRATA,
};

/// Temporal batch process for the baseline fluorescence rate: piecewise-linear
/// day means with exponentially spaced changepoints, day-level Gamma jitter,
/// and plate-level Gamma spread around the day rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchConfig {
    /// Baseline fluorescence level the path starts at.
    pub base: f64,
    /// Number of screening days; 0 derives max(2, n_cell_lines / 3).
    #[serde(default)]
    pub n_days: usize,
    /// Mean days between slope changepoints.
    pub changepoint_every: f64,
    /// Relative drift magnitude over a typical segment.
    pub slope_scale: f64,
    /// Day-level multiplicative jitter (coefficient of variation).
    pub day_jitter_cv: f64,
    /// Plate-level spread around the day rate (coefficient of variation).
    pub plate_jitter_cv: f64,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            base: 3e4,
            n_days: 0,
            changepoint_every: 40.0,
            slope_scale: 0.35,
            day_jitter_cv: 0.02,
            plate_jitter_cv: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContaminationConfig {
    /// Fraction of negative-control well positions affected per stratum.
    pub fraction: f64,
    /// Leak coefficient in [0, 1): contaminated wells read Po(c + kappa*lambda).
    pub kappa: f64,
}

impl Default for ContaminationConfig {
    fn default() -> Self {
        ContaminationConfig {
            fraction: 0.0,
            kappa: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSignalConfig {
    pub n_mutation: usize,
    pub n_copy_number: usize,
    pub n_expression: usize,
    #[serde(default)]
    pub n_tissue: usize,
    #[serde(default)]
    pub planted: Vec<PlantedSpec>,
    #[serde(default)]
    pub missing_line_fraction: f64,
}

impl Default for FeatureSignalConfig {
    fn default() -> Self {
        FeatureSignalConfig {
            n_mutation: 8,
            n_copy_number: 6,
            n_expression: 8,
            n_tissue: 0,
            planted: Vec::new(),
            missing_line_fraction: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_cell_lines: usize,
    pub n_drugs: usize,
    pub n_doses: usize,
    /// Negative-control wells per plate.
    pub neg_wells: usize,
    /// Positive-control wells per plate.
    pub pos_wells: usize,
    /// Expected positive-control mean fluorescence.
    pub count_scale: f64,
    /// Shape of the per-plate growth-rate Gamma law.
    pub pos_shape: f64,
    /// Log-scale spread of plate potency around `count_scale`.
    pub plate_scale_sd: f64,
    pub batch: BatchConfig,
    pub contamination: ContaminationConfig,
    pub curve_family: CurveFamily,
    pub feature_signal: FeatureSignalConfig,
    /// Number of (site, assay) strata plates cycle through (1..=4).
    pub n_strata: usize,
    /// When set, site S2 plates use the sparse 5-dose schedule (odd dose
    /// indices missing).
    pub five_dose_site2: bool,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_cell_lines: 50,
            n_drugs: 8,
            n_doses: 9,
            neg_wells: 30,
            pos_wells: 40,
            count_scale: 5e5,
            pos_shape: 100.0,
            plate_scale_sd: 0.15,
            batch: BatchConfig::default(),
            contamination: ContaminationConfig::default(),
            curve_family: CurveFamily::Mixed,
            feature_signal: FeatureSignalConfig::default(),
            n_strata: 1,
            five_dose_site2: false,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_doses == 0 {
            return Err(Error::Config("n_doses must be >= 1".into()));
        }
        if self.n_cell_lines > 0 || self.n_drugs > 0 {
            if self.neg_wells == 0 || self.pos_wells == 0 {
                return Err(Error::Config("control well counts must be >= 1".into()));
            }
        }
        if !(self.count_scale > 0.0) || !(self.pos_shape > 0.0) {
            return Err(Error::Config("count_scale and pos_shape must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.contamination.kappa) {
            return Err(Error::Config("contamination kappa must be in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.contamination.fraction) {
            return Err(Error::Config("contamination fraction must be in [0, 1]".into()));
        }
        if !(1..=4).contains(&self.n_strata) {
            return Err(Error::Config("n_strata must be in 1..=4".into()));
        }
        Ok(())
    }

    fn n_days(&self) -> usize {
        if self.batch.n_days > 0 {
            self.batch.n_days
        } else {
            (self.n_cell_lines / 3).max(2)
        }
    }
}

/// Everything the generator knew: the survival tensor, per-plate rates, the
/// contaminated well positions, and the planted feature map.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Flat N x M x D survival fractions.
    pub tau: Vec<f64>,
    pub n_cell_lines: usize,
    pub n_drugs: usize,
    pub n_doses: usize,
    /// Realized baseline rate per plate (indexed by plate id).
    pub c: Vec<f64>,
    /// Per-plate growth-rate law.
    pub lambda_prior: Vec<GammaParams>,
    /// Realized shared growth rate per plate.
    pub lambda: Vec<f64>,
    /// Piecewise-linear day means before jitter.
    pub day_mean: Vec<f64>,
    /// Realized day rates (mean x day jitter).
    pub day_rate: Vec<f64>,
    /// (stratum display, well id) pairs that leak positive signal.
    pub contaminated_well_ids: BTreeSet<(String, String)>,
    /// Flat N x n_planted binary labels behind the planted features.
    pub line_labels: Vec<f64>,
    pub planted: PlantedMap,
}

impl GroundTruth {
    pub fn tau(&self, i: usize, j: usize, t: usize) -> f64 {
        self.tau[(i * self.n_drugs + j) * self.n_doses + t]
    }
}

fn gamma_with_cv(rng: &mut ChaCha8Rng, mean: f64, cv: f64) -> f64 {
    if cv <= 0.0 {
        return mean;
    }
    let shape = 1.0 / (cv * cv);
    let dist = GammaDist::new(shape, mean / shape).expect("valid gamma");
    dist.sample(rng)
}

fn poisson_u64(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("valid poisson").sample(rng) as u64
}

/// Piecewise-linear day means (slope changes at exponentially spaced
/// changepoints) and jittered day rates.
fn batch_path(cfg: &SimConfig) -> (Vec<f64>, Vec<f64>) {
    let n_days = cfg.n_days();
    let b = &cfg.batch;
    let mut rng = stream(cfg.seed, "sim.batch", &[]);
    let mut mean = Vec::with_capacity(n_days);
    let mut level = b.base;
    let mut next_change = 0.0f64;
    let mut slope = 0.0f64;
    for d in 0..n_days {
        if d as f64 >= next_change {
            let z: f64 = StandardNormal.sample(&mut rng);
            slope = b.base * b.slope_scale * z / b.changepoint_every.max(1.0);
            let gap: f64 = rng.gen::<f64>();
            next_change = d as f64 + (-gap.max(1e-12).ln()) * b.changepoint_every;
        }
        mean.push(level.max(0.2 * b.base));
        level += slope;
    }
    let rate = mean
        .iter()
        .map(|&m| gamma_with_cv(&mut rng, m, b.day_jitter_cv))
        .collect();
    (mean, rate)
}

fn stratum_for_plate(cfg: &SimConfig, plate_idx: usize) -> Stratum {
    ALL_STRATA[plate_idx % cfg.n_strata]
}

/// Contaminated negative well positions per stratum index.
fn contaminated_positions(cfg: &SimConfig) -> Vec<BTreeSet<usize>> {
    let n_bad = (cfg.contamination.fraction * cfg.neg_wells as f64).round() as usize;
    (0..cfg.n_strata)
        .map(|s| {
            let mut rng = stream(cfg.seed, "sim.contam", &[s as u64]);
            let mut picks = BTreeSet::new();
            if cfg.contamination.kappa > 0.0 {
                while picks.len() < n_bad.min(cfg.neg_wells) {
                    picks.insert(rng.gen_range(0..cfg.neg_wells));
                }
            }
            picks
        })
        .collect()
}

/// Forward-sample a study. Identical config (including seed) produces
/// bitwise-identical output at any worker count.
pub fn simulate_study(cfg: &SimConfig) -> Result<(StudyDataset, GroundTruth)> {
    cfg.validate()?;
    let n = cfg.n_cell_lines;
    let m = cfg.n_drugs;
    let d = cfg.n_doses;
    let n_days = cfg.n_days();
    let n_plates = n; // one plate per cell line, all drugs on it

    let (day_mean, day_rate) = batch_path(cfg);
    let contam = contaminated_positions(cfg);

    // per-line planted labels and the induced logit shifts
    let n_planted = cfg.feature_signal.planted.len();
    let mut line_labels = vec![0.0; n * n_planted];
    let mut line_shift = vec![0.0; n];
    for i in 0..n {
        let mut rng = stream(cfg.seed, "sim.latent", &[i as u64]);
        for (p, spec) in cfg.feature_signal.planted.iter().enumerate() {
            let z = (rng.gen::<f64>() < spec.prevalence) as u8 as f64;
            line_labels[i * n_planted + p] = z;
            line_shift[i] += spec.effect_logit * z;
        }
    }

    // per-drug curve tendencies
    let profiles: Vec<DrugProfile> = (0..m)
        .map(|j| {
            let mut rng = stream(cfg.seed, "sim.drug", &[j as u64]);
            draw_drug_profile(&mut rng, cfg.curve_family, d)
        })
        .collect();

    // plates with realized rates and control wells
    struct PlateDraw {
        plate: Plate,
        c: f64,
        lambda: f64,
        prior: GammaParams,
    }
    let plate_draws: Vec<PlateDraw> = exec::map_range(n_plates, |l| {
        let mut rng = stream(cfg.seed, "sim.plate", &[l as u64]);
        let day = if n_plates <= 1 {
            0
        } else {
            (l * n_days / n_plates).min(n_days - 1)
        };
        let stratum = stratum_for_plate(cfg, l);
        let c = gamma_with_cv(&mut rng, day_rate[day], cfg.batch.plate_jitter_cv);
        let z: f64 = StandardNormal.sample(&mut rng);
        let plate_mean = cfg.count_scale * (cfg.plate_scale_sd * z).exp();
        let prior = GammaParams::shape_scale(cfg.pos_shape, plate_mean / cfg.pos_shape)
            .expect("positive parameters");
        let lambda = GammaDist::new(prior.shape, prior.scale())
            .expect("valid gamma")
            .sample(&mut rng);

        let bad = &contam[l % cfg.n_strata];
        let neg_wells: Vec<Well> = (0..cfg.neg_wells)
            .map(|k| {
                let rate = if bad.contains(&k) {
                    c + cfg.contamination.kappa * lambda
                } else {
                    c
                };
                Well {
                    well_id: format!("N{k:02}"),
                    kind: WellKind::NegativeControl,
                    count: poisson_u64(&mut rng, rate),
                }
            })
            .collect();
        let pos_wells: Vec<Well> = (0..cfg.pos_wells)
            .map(|k| Well {
                well_id: format!("P{k:02}"),
                kind: WellKind::PositiveControl,
                count: poisson_u64(&mut rng, lambda + c),
            })
            .collect();
        PlateDraw {
            plate: Plate {
                plate_id: l as u32,
                site: stratum.site,
                assay: stratum.assay,
                day: day as u32,
                neg_wells,
                pos_wells,
            },
            c,
            lambda,
            prior,
        }
    });

    // survival curves and treatment counts
    let mut tau = vec![0.0; n * m * d];
    let curves: Vec<Vec<f64>> = exec::map_range(n * m, |k| {
        let (i, j) = (k / m, k % m);
        let mut rng = stream(cfg.seed, "sim.curve", &[i as u64, j as u64]);
        draw_curve(&mut rng, &profiles[j], line_shift[i], d)
    });
    for (k, curve) in curves.iter().enumerate() {
        tau[k * d..(k + 1) * d].copy_from_slice(curve);
    }

    let experiments: Vec<Experiment> = exec::map_range(n * m, |k| {
        let (i, j) = (k / m, k % m);
        let mut rng = stream(cfg.seed, "sim.counts", &[i as u64, j as u64]);
        let draw = &plate_draws[i];
        let sparse = cfg.five_dose_site2 && draw.plate.site == crate::types::Site::S2;
        let counts: Vec<Option<u64>> = (0..d)
            .map(|t| {
                if sparse && t % 2 == 1 {
                    None
                } else {
                    let rate = curves[k][t] * draw.lambda + draw.c;
                    Some(poisson_u64(&mut rng, rate))
                }
            })
            .collect();
        Experiment {
            cell_line: i as u32,
            drug: j as u32,
            plate_id: i as u32,
            counts,
        }
    });

    let mut contaminated_well_ids = BTreeSet::new();
    for (s, bad) in contam.iter().enumerate() {
        let stratum = ALL_STRATA[s];
        for k in bad {
            contaminated_well_ids.insert((stratum.to_string(), format!("N{k:02}")));
        }
    }

    let mut truth = GroundTruth {
        tau,
        n_cell_lines: n,
        n_drugs: m,
        n_doses: d,
        c: plate_draws.iter().map(|p| p.c).collect(),
        lambda_prior: plate_draws.iter().map(|p| p.prior).collect(),
        lambda: plate_draws.iter().map(|p| p.lambda).collect(),
        day_mean,
        day_rate,
        contaminated_well_ids,
        line_labels,
        planted: PlantedMap::default(),
    };

    let (features, planted) = make_feature_signal(cfg, &truth);
    truth.planted = planted;

    let study = StudyDataset {
        plates: plate_draws.into_iter().map(|p| p.plate).collect(),
        experiments,
        features,
        meta: StudyMeta {
            schema_version: 1,
            n_cell_lines: n as u32,
            n_drugs: m as u32,
            n_doses: d as u32,
            dilution_nine: 2.0,
            dilution_five: 4.0,
        },
    };
    study.validate()?;
    Ok((study, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::with_workers;
    use crate::stats::{mean, variance_mle};

    #[test]
    fn empty_config_gives_empty_study() {
        let cfg = SimConfig {
            n_cell_lines: 0,
            n_drugs: 0,
            ..Default::default()
        };
        let (study, truth) = simulate_study(&cfg).unwrap();
        assert!(study.plates.is_empty());
        assert!(study.experiments.is_empty());
        assert!(truth.tau.is_empty());
    }

    #[test]
    fn degenerate_dose_count_is_a_config_error() {
        let cfg = SimConfig {
            n_doses: 0,
            ..Default::default()
        };
        assert!(simulate_study(&cfg).is_err());
    }

    #[test]
    fn no_contamination_limit() {
        let cfg = SimConfig {
            n_cell_lines: 20,
            n_drugs: 2,
            seed: 9,
            ..Default::default()
        };
        let (study, truth) = simulate_study(&cfg).unwrap();
        assert!(truth.contaminated_well_ids.is_empty());
        for p in &study.plates {
            let c = truth.c[p.plate_id as usize];
            let counts: Vec<f64> = p.neg_wells.iter().map(|w| w.count as f64).collect();
            let sd = (c / counts.len() as f64).sqrt();
            let z = (mean(&counts) - c) / sd;
            assert!(z.abs() < 3.0, "plate {} z = {z}", p.plate_id);
        }
    }

    #[test]
    fn positive_controls_match_mixture_moments() {
        // pooled standardized residuals of q against the plate prior
        let cfg = SimConfig {
            n_cell_lines: 200,
            n_drugs: 1,
            count_scale: 5e5,
            seed: 33,
            ..Default::default()
        };
        let (study, truth) = simulate_study(&cfg).unwrap();
        let mut z = Vec::new();
        for p in &study.plates {
            let prior = truth.lambda_prior[p.plate_id as usize];
            let c = truth.c[p.plate_id as usize];
            let expected = c + prior.mean();
            let var = prior.variance() + prior.mean() + c;
            for w in &p.pos_wells {
                z.push((w.count as f64 - expected) / var.sqrt());
            }
        }
        let zm = mean(&z);
        let zv = variance_mle(&z);
        assert!(zm.abs() < 0.05, "mean {zm}");
        assert!((0.9..=1.1).contains(&zv), "variance {zv}");
    }

    #[test]
    fn curves_monotone_everywhere() {
        let cfg = SimConfig {
            n_cell_lines: 30,
            n_drugs: 6,
            seed: 5,
            feature_signal: FeatureSignalConfig {
                planted: vec![PlantedSpec {
                    block: crate::types::FeatureKind::Expression,
                    effect_logit: 2.0,
                    prevalence: 0.3,
                    proxy_corr: None,
                }],
                ..Default::default()
            },
            ..Default::default()
        };
        let (_, truth) = simulate_study(&cfg).unwrap();
        for i in 0..30 {
            for j in 0..6 {
                for t in 0..8 {
                    assert!(truth.tau(i, j, t) >= truth.tau(i, j, t + 1));
                }
            }
        }
    }

    #[test]
    fn identical_seed_identical_output_any_workers() {
        let cfg = SimConfig {
            n_cell_lines: 12,
            n_drugs: 3,
            seed: 77,
            contamination: ContaminationConfig {
                fraction: 0.2,
                kappa: 0.5,
            },
            ..Default::default()
        };
        let (s1, t1) = with_workers(1, || simulate_study(&cfg).unwrap());
        let (s2, t2) = with_workers(4, || simulate_study(&cfg).unwrap());
        assert_eq!(
            serde_json::to_string(&s1).unwrap(),
            serde_json::to_string(&s2).unwrap()
        );
        assert_eq!(
            serde_json::to_string(&t1).unwrap(),
            serde_json::to_string(&t2).unwrap()
        );
    }

    #[test]
    fn day_averages_track_batch_process() {
        let cfg = SimConfig {
            n_cell_lines: 60,
            n_drugs: 1,
            seed: 101,
            ..Default::default()
        };
        let (study, truth) = simulate_study(&cfg).unwrap();
        let mut by_day: std::collections::BTreeMap<u32, Vec<f64>> = Default::default();
        let mut plates_by_day: std::collections::BTreeMap<u32, usize> = Default::default();
        for p in &study.plates {
            *plates_by_day.entry(p.day).or_default() += 1;
            by_day
                .entry(p.day)
                .or_default()
                .extend(p.neg_wells.iter().map(|w| w.count as f64));
        }
        for (day, counts) in by_day {
            let rate = truth.day_rate[day as usize];
            let n_plates = plates_by_day[&day] as f64;
            let w = counts.len() as f64 / n_plates;
            let cv = cfg.batch.plate_jitter_cv;
            let var = (cv * cv * rate * rate + rate / w) / n_plates;
            let z = (mean(&counts) - rate) / var.sqrt();
            assert!(z.abs() < 4.0, "day {day}: z = {z}");
        }
    }

    #[test]
    fn planted_binary_feature_shifts_group_logits() {
        let delta = 1.5;
        let cfg = SimConfig {
            n_cell_lines: 1000,
            n_drugs: 1,
            seed: 3,
            curve_family: CurveFamily::Sigmoid,
            feature_signal: FeatureSignalConfig {
                planted: vec![PlantedSpec {
                    block: crate::types::FeatureKind::Mutation,
                    effect_logit: delta,
                    prevalence: 0.4,
                    proxy_corr: None,
                }],
                ..Default::default()
            },
            ..Default::default()
        };
        let (_, truth) = simulate_study(&cfg).unwrap();
        let logit = |p: f64| (p.clamp(1e-9, 1.0 - 1e-9) / (1.0 - p.clamp(1e-9, 1.0 - 1e-9))).ln();
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for i in 0..1000 {
            let group = truth.line_labels[i] > 0.5;
            for t in 0..9 {
                let b = logit(truth.tau(i, 0, t));
                if group {
                    pos.push(b);
                } else {
                    neg.push(b);
                }
            }
        }
        let diff = mean(&neg) - mean(&pos);
        assert!(
            (diff - delta).abs() < 0.15,
            "group logit difference {diff}, wanted ~{delta}"
        );
    }

    #[test]
    fn proxy_correlates_but_only_causal_is_marked() {
        let cfg = SimConfig {
            n_cell_lines: 1000,
            n_drugs: 1,
            seed: 8,
            feature_signal: FeatureSignalConfig {
                planted: vec![PlantedSpec {
                    block: crate::types::FeatureKind::Mutation,
                    effect_logit: 1.0,
                    prevalence: 0.5,
                    proxy_corr: Some(0.9),
                }],
                ..Default::default()
            },
            ..Default::default()
        };
        let (study, truth) = simulate_study(&cfg).unwrap();
        assert_eq!(truth.planted.causal_columns(), vec!["mut_planted0"]);
        let gi = study
            .features
            .names
            .iter()
            .position(|n| n == "mut_planted0")
            .unwrap();
        let gp = study
            .features
            .names
            .iter()
            .position(|n| n == "mut_proxy0")
            .unwrap();
        let a: Vec<f64> = (0..1000).map(|i| study.features.get(i, gi).unwrap()).collect();
        let b: Vec<f64> = (0..1000).map(|i| study.features.get(i, gp).unwrap()).collect();
        let r = crate::stats::pearson(&a, &b);
        assert!((r - 0.9).abs() < 0.06, "proxy correlation {r}");
    }

    #[test]
    fn five_dose_site2_drops_odd_indices() {
        let cfg = SimConfig {
            n_cell_lines: 8,
            n_drugs: 2,
            n_strata: 4,
            five_dose_site2: true,
            seed: 4,
            ..Default::default()
        };
        let (study, _) = simulate_study(&cfg).unwrap();
        let mut saw_sparse = false;
        for e in &study.experiments {
            let plate = study.plate(e.plate_id).unwrap();
            if plate.site == crate::types::Site::S2 {
                saw_sparse = true;
                assert_eq!(e.observed_doses(), vec![0, 2, 4, 6, 8]);
            } else {
                assert_eq!(e.observed_doses().len(), 9);
            }
        }
        assert!(saw_sparse);
    }
}
