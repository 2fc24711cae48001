//! Study directory format.
//!
//! A study lives in a directory with four UTF-8 files:
//! - `plates.csv`: `plate_id,site,assay,day,well_id,kind,count` — one row per
//!   control well.
//! - `experiments.csv`: `cell_line,drug,plate_id,dose_index,count` — one row
//!   per (pair, dose); `NA` marks a missing dose level.
//! - `features.csv`: `cell_line,feature_name,value` — long form; `NA` marks a
//!   missing entry. Feature names carry their block prefix (`mut_`, `cnv_`,
//!   `expr_`, `tissue_`).
//! - `meta.json`: cardinalities and the dose dilution schedule.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{
    Assay, Experiment, FeatureKind, FeatureMatrix, Plate, Site, StudyDataset, StudyMeta, Well,
    WellKind,
};

fn parse_err(file: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: file.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn parse_site(s: &str) -> Option<Site> {
    match s {
        "S1" => Some(Site::S1),
        "S2" => Some(Site::S2),
        _ => None,
    }
}

fn site_str(s: Site) -> &'static str {
    match s {
        Site::S1 => "S1",
        Site::S2 => "S2",
    }
}

fn parse_assay(s: &str) -> Option<Assay> {
    match s {
        "A" => Some(Assay::A),
        "S" => Some(Assay::S),
        _ => None,
    }
}

fn assay_str(a: Assay) -> &'static str {
    match a {
        Assay::A => "A",
        Assay::S => "S",
    }
}

fn parse_kind(s: &str) -> Option<WellKind> {
    match s {
        "negative_control" => Some(WellKind::NegativeControl),
        "positive_control" => Some(WellKind::PositiveControl),
        "treatment" => Some(WellKind::Treatment),
        _ => None,
    }
}

fn kind_str(k: WellKind) -> &'static str {
    match k {
        WellKind::NegativeControl => "negative_control",
        WellKind::PositiveControl => "positive_control",
        WellKind::Treatment => "treatment",
    }
}

/// Load and fully validate a study directory.
pub fn load_study(dir: &Path) -> Result<StudyDataset> {
    let meta_path = dir.join("meta.json");
    let meta_text = fs::read_to_string(&meta_path)
        .map_err(|e| Error::io(meta_path.display().to_string(), e))?;
    let meta: StudyMeta = serde_json::from_str(&meta_text).map_err(|e| Error::Json {
        path: meta_path.display().to_string(),
        source: e,
    })?;

    let plates = load_plates(&dir.join("plates.csv"))?;
    let experiments = load_experiments(&dir.join("experiments.csv"), meta.n_doses as usize)?;
    let features = load_features(&dir.join("features.csv"), meta.n_cell_lines as usize)?;

    let study = StudyDataset {
        plates,
        experiments,
        features,
        meta,
    };
    study.validate()?;
    Ok(study)
}

fn load_plates(path: &Path) -> Result<Vec<Plate>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Csv {
        path: path.display().to_string(),
        source: e,
    })?;
    // plate_id -> (site, assay, day, wells)
    let mut acc: BTreeMap<u32, Plate> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = (i + 2) as u64;
        let rec = rec.map_err(|e| Error::Csv {
            path: path.display().to_string(),
            source: e,
        })?;
        if rec.len() != 7 {
            return Err(parse_err(path, line, format!("expected 7 fields, got {}", rec.len())));
        }
        let plate_id: u32 = rec[0]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad plate_id '{}'", &rec[0])))?;
        let site = parse_site(&rec[1])
            .ok_or_else(|| parse_err(path, line, format!("bad site '{}'", &rec[1])))?;
        let assay = parse_assay(&rec[2])
            .ok_or_else(|| parse_err(path, line, format!("bad assay '{}'", &rec[2])))?;
        let day: u32 = rec[3]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad day '{}'", &rec[3])))?;
        let well_id = rec[4].to_string();
        let kind = parse_kind(&rec[5])
            .ok_or_else(|| parse_err(path, line, format!("bad well kind '{}'", &rec[5])))?;
        let count: u64 = rec[6]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad count '{}'", &rec[6])))?;

        let plate = acc.entry(plate_id).or_insert_with(|| Plate {
            plate_id,
            site,
            assay,
            day,
            neg_wells: Vec::new(),
            pos_wells: Vec::new(),
        });
        if plate.site != site || plate.assay != assay || plate.day != day {
            return Err(parse_err(
                path,
                line,
                format!("plate {plate_id} metadata changes between rows"),
            ));
        }
        let well = Well {
            well_id,
            kind,
            count,
        };
        match kind {
            WellKind::NegativeControl => plate.neg_wells.push(well),
            WellKind::PositiveControl => plate.pos_wells.push(well),
            WellKind::Treatment => {
                return Err(parse_err(
                    path,
                    line,
                    "treatment wells belong in experiments.csv",
                ))
            }
        }
    }
    Ok(acc.into_values().collect())
}

fn load_experiments(path: &Path, n_doses: usize) -> Result<Vec<Experiment>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Csv {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut acc: BTreeMap<(u32, u32), Experiment> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = (i + 2) as u64;
        let rec = rec.map_err(|e| Error::Csv {
            path: path.display().to_string(),
            source: e,
        })?;
        if rec.len() != 5 {
            return Err(parse_err(path, line, format!("expected 5 fields, got {}", rec.len())));
        }
        let cell_line: u32 = rec[0]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad cell_line '{}'", &rec[0])))?;
        let drug: u32 = rec[1]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad drug '{}'", &rec[1])))?;
        let plate_id: u32 = rec[2]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad plate_id '{}'", &rec[2])))?;
        let dose: usize = rec[3]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad dose_index '{}'", &rec[3])))?;
        if dose >= n_doses {
            return Err(parse_err(
                path,
                line,
                format!("dose_index {dose} out of range (n_doses = {n_doses})"),
            ));
        }
        let count: Option<u64> = if &rec[4] == "NA" {
            None
        } else {
            Some(
                rec[4]
                    .parse()
                    .map_err(|_| parse_err(path, line, format!("bad count '{}'", &rec[4])))?,
            )
        };
        let e = acc.entry((cell_line, drug)).or_insert_with(|| Experiment {
            cell_line,
            drug,
            plate_id,
            counts: vec![None; n_doses],
        });
        if e.plate_id != plate_id {
            return Err(parse_err(
                path,
                line,
                format!("pair ({cell_line}, {drug}) appears on two plates"),
            ));
        }
        e.counts[dose] = count;
    }
    Ok(acc.into_values().collect())
}

fn load_features(path: &Path, n_cell_lines: usize) -> Result<FeatureMatrix> {
    if !path.exists() {
        return Ok(FeatureMatrix::empty(n_cell_lines));
    }
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Csv {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut names: Vec<String> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut cells: BTreeMap<(u32, usize), Option<f64>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = (i + 2) as u64;
        let rec = rec.map_err(|e| Error::Csv {
            path: path.display().to_string(),
            source: e,
        })?;
        if rec.len() != 3 {
            return Err(parse_err(path, line, format!("expected 3 fields, got {}", rec.len())));
        }
        let cell_line: u32 = rec[0]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad cell_line '{}'", &rec[0])))?;
        if cell_line as usize >= n_cell_lines {
            return Err(parse_err(
                path,
                line,
                format!("cell_line {cell_line} out of range"),
            ));
        }
        let name = rec[1].to_string();
        if FeatureKind::from_name(&name).is_none() {
            return Err(parse_err(
                path,
                line,
                format!("feature '{name}' lacks a block prefix (mut_/cnv_/expr_/tissue_)"),
            ));
        }
        let g = *index.entry(name.clone()).or_insert_with(|| {
            names.push(name);
            names.len() - 1
        });
        let value: Option<f64> = if &rec[2] == "NA" {
            None
        } else {
            Some(
                rec[2]
                    .parse()
                    .map_err(|_| parse_err(path, line, format!("bad value '{}'", &rec[2])))?,
            )
        };
        cells.insert((cell_line, g), value);
    }
    let p = names.len();
    let mut values = vec![None; n_cell_lines * p];
    for ((i, g), v) in cells {
        values[i as usize * p + g] = v;
    }
    let kinds = names
        .iter()
        .map(|n| FeatureKind::from_name(n).expect("prefix checked above"))
        .collect();
    Ok(FeatureMatrix {
        names,
        kinds,
        values,
        n_cell_lines,
    })
}

/// Write a study directory in canonical order (plates by id, experiments by
/// (cell line, drug, dose), features by (cell line, name)). Re-serializing a
/// loaded study is byte-identical.
pub fn save_study(study: &StudyDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;

    let meta_path = dir.join("meta.json");
    let meta = serde_json::to_string_pretty(&study.meta).expect("meta serializes");
    write_file(&meta_path, meta.as_bytes())?;

    let mut plates = String::from("plate_id,site,assay,day,well_id,kind,count\n");
    let mut sorted_plates: Vec<&Plate> = study.plates.iter().collect();
    sorted_plates.sort_by_key(|p| p.plate_id);
    for p in sorted_plates {
        for w in p.neg_wells.iter().chain(p.pos_wells.iter()) {
            plates.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                p.plate_id,
                site_str(p.site),
                assay_str(p.assay),
                p.day,
                w.well_id,
                kind_str(w.kind),
                w.count
            ));
        }
    }
    write_file(&dir.join("plates.csv"), plates.as_bytes())?;

    let mut exps = String::from("cell_line,drug,plate_id,dose_index,count\n");
    let mut sorted_exps: Vec<&Experiment> = study.experiments.iter().collect();
    sorted_exps.sort_by_key(|e| (e.cell_line, e.drug));
    for e in sorted_exps {
        for (t, c) in e.counts.iter().enumerate() {
            let cs = match c {
                Some(v) => v.to_string(),
                None => "NA".to_string(),
            };
            exps.push_str(&format!(
                "{},{},{},{},{}\n",
                e.cell_line, e.drug, e.plate_id, t, cs
            ));
        }
    }
    write_file(&dir.join("experiments.csv"), exps.as_bytes())?;

    let mut feats = String::from("cell_line,feature_name,value\n");
    for i in 0..study.features.n_cell_lines {
        for (g, name) in study.features.names.iter().enumerate() {
            let v = study.features.get(i, g);
            let vs = match v {
                Some(x) => format_float(x),
                None => "NA".to_string(),
            };
            feats.push_str(&format!("{i},{name},{vs}\n"));
        }
    }
    write_file(&dir.join("features.csv"), feats.as_bytes())?;
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f =
        fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(bytes)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Shortest round-trippable decimal representation.
fn format_float(x: f64) -> String {
    let mut s = format!("{x}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}
