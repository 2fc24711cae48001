//! Domain types shared by the whole pipeline.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// Testing site of a plate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Site {
    S1,
    S2,
}

/// Assay type (adherent or suspended).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Assay {
    A,
    S,
}

/// A (site, assay) stratum. Control well IDs map to the same physical
/// microwell position across all plates of a stratum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Stratum {
    pub site: Site,
    pub assay: Assay,
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.site {
            Site::S1 => "S1",
            Site::S2 => "S2",
        };
        let a = match self.assay {
            Assay::A => "A",
            Assay::S => "S",
        };
        write!(f, "{s}{a}")
    }
}

pub const ALL_STRATA: [Stratum; 4] = [
    Stratum {
        site: Site::S1,
        assay: Assay::A,
    },
    Stratum {
        site: Site::S1,
        assay: Assay::S,
    },
    Stratum {
        site: Site::S2,
        assay: Assay::A,
    },
    Stratum {
        site: Site::S2,
        assay: Assay::S,
    },
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WellKind {
    NegativeControl,
    PositiveControl,
    Treatment,
}

/// A single control well measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Well {
    pub well_id: String,
    pub kind: WellKind,
    pub count: u64,
}

/// One microwell plate: control wells plus day and stratum metadata.
/// Treatment rows live on [`StudyDataset::experiments`] keyed by plate id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Plate {
    pub plate_id: u32,
    pub site: Site,
    pub assay: Assay,
    /// Days since study start.
    pub day: u32,
    pub neg_wells: Vec<Well>,
    pub pos_wells: Vec<Well>,
}

impl Plate {
    pub fn stratum(&self) -> Stratum {
        Stratum {
            site: self.site,
            assay: self.assay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = format!("plate {}", self.plate_id);
        if self.neg_wells.is_empty() {
            return Err(Error::validation(&ctx, "no negative-control wells"));
        }
        if self.pos_wells.is_empty() {
            return Err(Error::validation(&ctx, "no positive-control wells"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for w in self.neg_wells.iter().chain(self.pos_wells.iter()) {
            if !seen.insert(&w.well_id) {
                return Err(Error::validation(
                    &ctx,
                    format!("duplicate well id {}", w.well_id),
                ));
            }
        }
        Ok(())
    }
}

/// Gamma parametrization tag. Negative-control day priors are shape/rate;
/// positive-control fits are shape/scale. Every value carries its tag so the
/// two conventions cannot be mixed silently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parametrization {
    ShapeRate,
    ShapeScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub shape: f64,
    /// Rate or scale, depending on `parametrization`.
    pub rate_or_scale: f64,
    pub parametrization: Parametrization,
}

impl GammaParams {
    pub fn shape_rate(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0) || !(rate > 0.0) {
            return Err(Error::Domain(format!(
                "gamma parameters must be positive, got shape={shape}, rate={rate}"
            )));
        }
        Ok(GammaParams {
            shape,
            rate_or_scale: rate,
            parametrization: Parametrization::ShapeRate,
        })
    }

    pub fn shape_scale(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0) || !(scale > 0.0) {
            return Err(Error::Domain(format!(
                "gamma parameters must be positive, got shape={shape}, scale={scale}"
            )));
        }
        Ok(GammaParams {
            shape,
            rate_or_scale: scale,
            parametrization: Parametrization::ShapeScale,
        })
    }

    pub fn scale(&self) -> f64 {
        match self.parametrization {
            Parametrization::ShapeScale => self.rate_or_scale,
            Parametrization::ShapeRate => 1.0 / self.rate_or_scale,
        }
    }

    pub fn rate(&self) -> f64 {
        match self.parametrization {
            Parametrization::ShapeRate => self.rate_or_scale,
            Parametrization::ShapeScale => 1.0 / self.rate_or_scale,
        }
    }

    pub fn mean(&self) -> f64 {
        self.shape * self.scale()
    }

    pub fn variance(&self) -> f64 {
        self.shape * self.scale() * self.scale()
    }

    /// Log density at x > 0.
    pub fn log_density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let a = self.shape;
        let s = self.scale();
        (a - 1.0) * x.ln() - x / s - a * s.ln() - statrs::function::gamma::ln_gamma(a)
    }
}

/// Treatment counts for one (cell line, drug) pair; `None` marks a missing
/// dose level (5-dose plates skip odd indices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub cell_line: u32,
    pub drug: u32,
    pub plate_id: u32,
    pub counts: Vec<Option<u64>>,
}

impl Experiment {
    pub fn observed_doses(&self) -> Vec<usize> {
        self.counts
            .iter()
            .enumerate()
            .filter_map(|(t, c)| c.map(|_| t))
            .collect()
    }
}

/// Molecular feature block a column belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Mutation,
    CopyNumber,
    Expression,
    Tissue,
}

impl FeatureKind {
    /// Infer the block from the column name prefix used by the study format.
    pub fn from_name(name: &str) -> Option<FeatureKind> {
        if name.starts_with("mut_") {
            Some(FeatureKind::Mutation)
        } else if name.starts_with("cnv_") {
            Some(FeatureKind::CopyNumber)
        } else if name.starts_with("expr_") {
            Some(FeatureKind::Expression)
        } else if name.starts_with("tissue_") {
            Some(FeatureKind::Tissue)
        } else {
            None
        }
    }
}

/// Cell line by molecular feature matrix with explicit missingness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub kinds: Vec<FeatureKind>,
    /// Row-major `n_cell_lines x names.len()`; `None` marks a missing entry.
    pub values: Vec<Option<f64>>,
    pub n_cell_lines: usize,
}

impl FeatureMatrix {
    pub fn empty(n_cell_lines: usize) -> Self {
        FeatureMatrix {
            names: Vec::new(),
            kinds: Vec::new(),
            values: Vec::new(),
            n_cell_lines,
        }
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    #[inline]
    pub fn get(&self, line: usize, feature: usize) -> Option<f64> {
        self.values[line * self.names.len() + feature]
    }

    /// True when every entry of a line's row is missing.
    pub fn line_missing(&self, line: usize) -> bool {
        let p = self.names.len();
        if p == 0 {
            return false;
        }
        (0..p).all(|g| self.get(line, g).is_none())
    }

    pub fn column(&self, feature: usize) -> Vec<Option<f64>> {
        (0..self.n_cell_lines)
            .map(|i| self.get(i, feature))
            .collect()
    }
}

/// Study-level metadata persisted in `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyMeta {
    pub schema_version: u32,
    pub n_cell_lines: u32,
    pub n_drugs: u32,
    pub n_doses: u32,
    /// Fold dilution between adjacent doses on the dense schedule.
    pub dilution_nine: f64,
    /// Fold dilution on the sparse schedule (odd dose indices missing).
    pub dilution_five: f64,
}

impl Default for StudyMeta {
    fn default() -> Self {
        StudyMeta {
            schema_version: 1,
            n_cell_lines: 0,
            n_drugs: 0,
            n_doses: 9,
            dilution_nine: 2.0,
            dilution_five: 4.0,
        }
    }
}

/// A full study: plates, treatment counts, and molecular features.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyDataset {
    pub plates: Vec<Plate>,
    pub experiments: Vec<Experiment>,
    pub features: FeatureMatrix,
    pub meta: StudyMeta,
}

impl StudyDataset {
    pub fn n_cell_lines(&self) -> usize {
        self.meta.n_cell_lines as usize
    }

    pub fn n_drugs(&self) -> usize {
        self.meta.n_drugs as usize
    }

    pub fn n_doses(&self) -> usize {
        self.meta.n_doses as usize
    }

    pub fn plate(&self, plate_id: u32) -> Option<&Plate> {
        self.plates.iter().find(|p| p.plate_id == plate_id)
    }

    /// Experiment index keyed by (cell line, drug).
    pub fn experiment_index(&self) -> BTreeMap<(u32, u32), usize> {
        self.experiments
            .iter()
            .enumerate()
            .map(|(k, e)| ((e.cell_line, e.drug), k))
            .collect()
    }

    pub fn plates_in(&self, stratum: Stratum) -> Vec<&Plate> {
        self.plates
            .iter()
            .filter(|p| p.stratum() == stratum)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.n_doses();
        let mut plate_ids = std::collections::BTreeSet::new();
        for p in &self.plates {
            p.validate()?;
            if !plate_ids.insert(p.plate_id) {
                return Err(Error::validation(
                    format!("plate {}", p.plate_id),
                    "duplicate plate id",
                ));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.experiments {
            let ctx = format!("experiment ({}, {})", e.cell_line, e.drug);
            if !seen.insert((e.cell_line, e.drug)) {
                return Err(Error::validation(
                    &ctx,
                    "pair appears on more than one plate row",
                ));
            }
            if !plate_ids.contains(&e.plate_id) {
                return Err(Error::validation(
                    &ctx,
                    format!("references unknown plate {}", e.plate_id),
                ));
            }
            if e.counts.len() != d {
                return Err(Error::validation(
                    &ctx,
                    format!("expected {d} dose entries, found {}", e.counts.len()),
                ));
            }
            if e.cell_line >= self.meta.n_cell_lines || e.drug >= self.meta.n_drugs {
                return Err(Error::validation(&ctx, "cell line or drug out of range"));
            }
        }
        if self.features.n_features() > 0 && self.features.n_cell_lines != self.n_cell_lines() {
            return Err(Error::validation(
                "features",
                format!(
                    "feature matrix has {} rows, study has {} cell lines",
                    self.features.n_cell_lines,
                    self.n_cell_lines()
                ),
            ));
        }
        Ok(())
    }
}

/// Per-plate control estimates plus per-(stratum, day) negative-control priors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlFit {
    pub schema_version: u32,
    pub plates: Vec<PlateControls>,
    pub day_priors: Vec<DayPrior>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlateControls {
    pub plate_id: u32,
    /// MAP baseline fluorescence rate.
    pub c_hat: f64,
    /// Positive-control Gamma fit (shape/scale).
    pub pos: GammaParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DayPrior {
    pub site: Site,
    pub assay: Assay,
    pub day: u32,
    /// Negative-control prior (shape/rate).
    pub prior: GammaParams,
}

impl ControlFit {
    pub fn new() -> Self {
        ControlFit {
            schema_version: 1,
            plates: Vec::new(),
            day_priors: Vec::new(),
        }
    }

    pub fn for_plate(&self, plate_id: u32) -> Option<&PlateControls> {
        self.plates.iter().find(|p| p.plate_id == plate_id)
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.plates {
            let ctx = format!("controls for plate {}", p.plate_id);
            if !(p.c_hat > 0.0) {
                return Err(Error::validation(&ctx, "c_hat must be positive"));
            }
            if p.pos.parametrization != Parametrization::ShapeScale {
                return Err(Error::validation(&ctx, "positive fit must be shape_scale"));
            }
            if !(p.pos.mean() > 0.0) {
                return Err(Error::validation(&ctx, "positive-control mean must be > 0"));
            }
        }
        for d in &self.day_priors {
            if d.prior.parametrization != Parametrization::ShapeRate {
                return Err(Error::validation(
                    format!("day prior {} day {}", Stratum { site: d.site, assay: d.assay }, d.day),
                    "negative prior must be shape_rate",
                ));
            }
        }
        Ok(())
    }
}

impl Default for ControlFit {
    fn default() -> Self {
        Self::new()
    }
}
