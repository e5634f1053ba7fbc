//! CSV and JSON interchange: dataset ingestion with row/column-level
//! error reporting, experiment tables, fit reports, and run manifests
//! with content checksums.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read as _, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::emissions::Covariates;
use crate::error::{Error, Result};
use crate::inference::{FitResult, ObservationSequence, PanelDataset};
use crate::simulation::{ConsistencyResult, SweepResult};
use crate::splines::{curve_eval, SplineBasis, SplineCoefficients};

const AGE_MIN: f64 = 7.0;
const AGE_MAX: f64 = 35.0;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn ingestion(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Ingestion {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

/// Read a dataset CSV with columns `id,time,y` and optionally both of
/// `age,gender`. Rows are grouped by id in file order; errors name the
/// offending data row (1-based) and column.
pub fn read_dataset_csv(path: &Path) -> Result<PanelDataset> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| ingestion(0, "", format!("unreadable header: {e}")))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (id_col, time_col, y_col) = match (col("id"), col("time"), col("y")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => {
            return Err(ingestion(0, "", "header must contain id, time and y columns"));
        }
    };
    let age_col = col("age");
    let gender_col = col("gender");
    if age_col.is_some() != gender_col.is_some() {
        return Err(ingestion(0, "", "age and gender must be provided together"));
    }

    struct Partial {
        times: Vec<f64>,
        counts: Vec<u64>,
        covs: Vec<Covariates>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Partial> = BTreeMap::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| ingestion(row, "", format!("unreadable row: {e}")))?;
        let field = |c: usize, name: &str| -> Result<&str> {
            record
                .get(c)
                .ok_or_else(|| ingestion(row, name, "missing field"))
        };
        let id = field(id_col, "id")?.to_string();
        let time_s = field(time_col, "time")?;
        let time: f64 = time_s
            .parse()
            .map_err(|_| ingestion(row, "time", format!("not a number: {time_s:?}")))?;
        if !time.is_finite() || time < 0.0 {
            return Err(ingestion(row, "time", "time must be finite and >= 0"));
        }
        let y_s = field(y_col, "y")?;
        let y: u64 = y_s.parse().map_err(|_| {
            ingestion(
                row,
                "y",
                format!("counts must be non-negative integers, got {y_s:?}"),
            )
        })?;
        let cov = match (age_col, gender_col) {
            (Some(ac), Some(gc)) => {
                let age_s = field(ac, "age")?;
                let age: f64 = age_s
                    .parse()
                    .map_err(|_| ingestion(row, "age", format!("not a number: {age_s:?}")))?;
                if !(AGE_MIN..=AGE_MAX).contains(&age) {
                    return Err(ingestion(
                        row,
                        "age",
                        format!("age {age} outside [{AGE_MIN}, {AGE_MAX}]"),
                    ));
                }
                let gender_s = field(gc, "gender")?;
                let gender: u8 = gender_s
                    .parse()
                    .map_err(|_| ingestion(row, "gender", format!("not 0/1: {gender_s:?}")))?;
                Some(
                    Covariates::new(age, gender)
                        .map_err(|e| ingestion(row, "gender", e.to_string()))?,
                )
            }
            _ => None,
        };
        let entry = groups.entry(id.clone()).or_insert_with(|| {
            order.push(id);
            Partial {
                times: Vec::new(),
                counts: Vec::new(),
                covs: Vec::new(),
            }
        });
        entry.times.push(time);
        entry.counts.push(y);
        if let Some(c) = cov {
            entry.covs.push(c);
        }
    }
    if groups.is_empty() {
        return Err(ingestion(0, "", "dataset contains no rows"));
    }
    let mut sequences = Vec::with_capacity(groups.len());
    for id in order {
        let p = groups.remove(&id).expect("present by construction");
        let seq = if age_col.is_some() {
            ObservationSequence::with_covariates(p.times, p.counts, p.covs)
        } else {
            ObservationSequence::new(p.times, p.counts)
        }
        .map_err(|e| ingestion(0, "time", format!("individual {id:?}: {e}")))?;
        sequences.push((id, seq));
    }
    PanelDataset::new(sequences)
}

/// Write a dataset CSV; covariate columns appear only when every sequence
/// carries covariates.
pub fn write_dataset_csv(path: &Path, panel: &PanelDataset) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    let with_covs = panel.has_covariates();
    let header: &[&str] = if with_covs {
        &["id", "time", "y", "age", "gender"]
    } else {
        &["id", "time", "y"]
    };
    w.write_record(header).map_err(csv_write_err(path))?;
    for (id, seq) in panel.sequences() {
        for k in 0..seq.len() {
            let time = format_num(seq.times()[k]);
            let y = seq.counts()[k].to_string();
            if with_covs {
                let cov = seq.covariate(k).expect("checked via has_covariates");
                w.write_record([
                    id.as_str(),
                    &time,
                    &y,
                    &format_num(cov.age()),
                    &cov.gender().to_string(),
                ])
            } else {
                w.write_record([id.as_str(), &time, &y])
            }
            .map_err(csv_write_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

fn csv_write_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    }
}

fn format_num(v: f64) -> String {
    // round-trippable without scientific notation for typical magnitudes
    let s = format!("{v}");
    debug_assert_eq!(s.parse::<f64>().ok(), Some(v));
    s
}

/// True hidden states, one block per individual: columns `id,time,x`.
pub fn write_true_states_csv(
    path: &Path,
    blocks: &[(String, Vec<f64>, Vec<f64>)],
) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["id", "time", "x"]).map_err(csv_write_err(path))?;
    for (id, times, states) in blocks {
        if times.len() != states.len() {
            return Err(Error::invalid("true-state block lengths differ"));
        }
        for (t, x) in times.iter().zip(states) {
            w.write_record([id.as_str(), &format_num(*t), &format_num(*x)])
                .map_err(csv_write_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

pub fn read_true_states_csv(path: &Path) -> Result<Vec<(String, Vec<f64>, Vec<f64>)>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::Reader::from_reader(file);
    let mut order = Vec::new();
    let mut groups: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| ingestion(row, "", format!("unreadable row: {e}")))?;
        let id = record
            .get(0)
            .ok_or_else(|| ingestion(row, "id", "missing"))?
            .to_string();
        let t: f64 = record
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ingestion(row, "time", "not a number"))?;
        let x: f64 = record
            .get(2)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ingestion(row, "x", "not a number"))?;
        let entry = groups.entry(id.clone()).or_insert_with(|| {
            order.push(id);
            (Vec::new(), Vec::new())
        });
        entry.0.push(t);
        entry.1.push(x);
    }
    Ok(order
        .into_iter()
        .map(|id| {
            let (t, x) = groups.remove(&id).expect("present");
            (id, t, x)
        })
        .collect())
}

/// One output row of a decoding run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecodedRow {
    pub id: String,
    pub time: f64,
    pub state_index: usize,
    pub state_value: f64,
    pub expected_count: f64,
    pub equilibrium_count: f64,
}

pub fn write_decoded_csv(path: &Path, rows: &[DecodedRow]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record([
        "id",
        "time",
        "state_index",
        "state_value",
        "expected_count",
        "equilibrium_count",
    ])
    .map_err(csv_write_err(path))?;
    for r in rows {
        w.write_record([
            r.id.as_str(),
            &format_num(r.time),
            &r.state_index.to_string(),
            &format_num(r.state_value),
            &format_num(r.expected_count),
            &format_num(r.equilibrium_count),
        ])
        .map_err(csv_write_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Sweep table with the fixed column layout `m,theta,sigma,alpha,seconds,
/// neg_llk`; failed rows leave the estimate cells empty.
pub fn write_sweep_csv(path: &Path, sweep: &SweepResult) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["m", "theta", "sigma", "alpha", "seconds", "neg_llk"])
        .map_err(csv_write_err(path))?;
    for row in &sweep.rows {
        let cell = |k: &str| {
            row.estimates
                .get(k)
                .map(|v| format_num(*v))
                .unwrap_or_default()
        };
        let neg_llk = if row.neg_loglik.is_finite() {
            format_num(row.neg_loglik)
        } else {
            String::new()
        };
        w.write_record([
            row.m.to_string(),
            cell("theta"),
            cell("sigma"),
            cell("alpha"),
            format_num(row.seconds),
            neg_llk,
        ])
        .map_err(csv_write_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Boxplot-ready long format: one row per (T, replicate, parameter);
/// failed replicates are excluded (their count lives in the manifest).
pub fn write_consistency_csv(path: &Path, study: &ConsistencyResult) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["T", "replicate", "parameter", "estimate", "relative_bias"])
        .map_err(csv_write_err(path))?;
    for row in &study.rows {
        if row.error.is_some() {
            continue;
        }
        for (param, est) in &row.estimates {
            w.write_record([
                row.t_len.to_string(),
                row.replicate.to_string(),
                param.clone(),
                format_num(*est),
                format_num(row.relative_bias[param]),
            ])
            .map_err(csv_write_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Age-effect curves on a fixed age grid: `age,f1,f2,exp_f1,exp_f1_female`.
pub fn write_curve_csv(
    path: &Path,
    basis: &SplineBasis,
    omega1: &SplineCoefficients,
    omega2: &SplineCoefficients,
    ages: &[f64],
) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["age", "f1", "f2", "exp_f1", "exp_f1_female"])
        .map_err(csv_write_err(path))?;
    for &age in ages {
        let f1 = curve_eval(basis, omega1, age)?;
        let f2 = curve_eval(basis, omega2, age)?;
        w.write_record([
            format_num(age),
            format_num(f1),
            format_num(f2),
            format_num(f1.exp()),
            format_num((f1 + f2).exp()),
        ])
        .map_err(csv_write_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_fit_report(path: &Path, fit: &FitResult) -> Result<()> {
    let json = serde_json::to_string_pretty(fit)
        .map_err(|e| Error::invalid(format!("fit report serialization: {e}")))?;
    std::fs::write(path, json + "\n").map_err(io_err(path))
}

pub fn read_fit_report(path: &Path) -> Result<FitResult> {
    let mut text = String::new();
    File::open(path)
        .map_err(io_err(path))?
        .read_to_string(&mut text)
        .map_err(io_err(path))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::invalid(format!("fit report {}: {e}", path.display())))
}

/// Run manifest: the resolved configuration, its hash, and checksums of
/// every file the run produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub time_unit: String,
    pub files: BTreeMap<String, String>,
    #[serde(default)]
    pub notes: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(
        command: &str,
        config: BTreeMap<String, String>,
        seed: Option<u64>,
        time_unit: &str,
    ) -> Self {
        let mut hasher = Sha256::new();
        for (k, v) in &config {
            hasher.update(k.as_bytes());
            hasher.update(b"=");
            hasher.update(v.as_bytes());
            hasher.update(b"\n");
        }
        Self {
            command: command.to_string(),
            config,
            config_hash: hex(&hasher.finalize()),
            seed,
            time_unit: time_unit.to_string(),
            files: BTreeMap::new(),
            notes: BTreeMap::new(),
        }
    }

    /// Checksum a produced file and record it under its file name.
    pub fn add_file(&mut self, path: &Path) -> Result<()> {
        let name = path
            .file_name()
            .ok_or_else(|| Error::invalid("output path has no file name"))?
            .to_string_lossy()
            .to_string();
        self.files.insert(name, sha256_file(path)?);
        Ok(())
    }

    pub fn note(&mut self, key: &str, value: impl Into<String>) {
        self.notes.insert(key.to_string(), value.into());
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::invalid(format!("manifest serialization: {e}")))?;
        let mut f = File::create(path).map_err(io_err(path))?;
        f.write_all(json.as_bytes()).map_err(io_err(path))?;
        f.write_all(b"\n").map_err(io_err(path))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(io_err(path))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 8192];
    loop {
        let n = file.read(&mut buf).map_err(io_err(path))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex(&hasher.finalize()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::{generate_panel, PanelConfig};
    use tempfile::tempdir;

    #[test]
    fn dataset_roundtrip_without_covariates() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let seq =
            ObservationSequence::new(vec![0.0, 1.25, 2.5, 4.75], vec![180, 0, 251, 9]).unwrap();
        let panel = PanelDataset::single(seq);
        write_dataset_csv(&path, &panel).unwrap();
        let back = read_dataset_csv(&path).unwrap();
        assert_eq!(back, panel);
    }

    #[test]
    fn dataset_roundtrip_with_covariates() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("panel.csv");
        let config = PanelConfig {
            n_individuals: 12,
            dropout: 0.2,
            ..PanelConfig::case_study_default(3)
        };
        let generated = generate_panel(&config).unwrap();
        write_dataset_csv(&path, &generated.panel).unwrap();
        let back = read_dataset_csv(&path).unwrap();
        assert_eq!(back, generated.panel);
    }

    #[test]
    fn ingestion_errors_name_row_and_column() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "id,time,y\n0,0.0,5\n0,1.0,NA\n").unwrap();
        match read_dataset_csv(&path) {
            Err(Error::Ingestion { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "y");
            }
            other => panic!("expected ingestion error, got {other:?}"),
        }
        std::fs::write(&path, "id,time,y\n0,-1.0,5\n").unwrap();
        assert!(matches!(
            read_dataset_csv(&path),
            Err(Error::Ingestion { row: 1, .. })
        ));
        std::fs::write(&path, "id,time,y,age,gender\n0,0.0,5,40.0,0\n").unwrap();
        match read_dataset_csv(&path) {
            Err(Error::Ingestion { column, .. }) => assert_eq!(column, "age"),
            other => panic!("expected age error, got {other:?}"),
        }
        std::fs::write(&path, "id,time,y,age\n0,0.0,5,20.0\n").unwrap();
        assert!(read_dataset_csv(&path).is_err()); // age without gender
        std::fs::write(&path, "id,time\n0,0.0\n").unwrap();
        assert!(read_dataset_csv(&path).is_err());
    }

    #[test]
    fn fractional_counts_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("frac.csv");
        std::fs::write(&path, "id,time,y\n0,0.0,2.5\n").unwrap();
        assert!(matches!(
            read_dataset_csv(&path),
            Err(Error::Ingestion { row: 1, .. })
        ));
    }

    #[test]
    fn true_states_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("states.csv");
        let blocks = vec![
            ("a".to_string(), vec![0.0, 1.0], vec![0.3, -0.2]),
            ("b".to_string(), vec![0.0, 2.0, 3.0], vec![0.0, 0.5, 0.25]),
        ];
        write_true_states_csv(&path, &blocks).unwrap();
        assert_eq!(read_true_states_csv(&path).unwrap(), blocks);
    }

    #[test]
    fn manifest_hashes_are_stable() {
        let dir = tempdir().unwrap();
        let out = dir.path().join("f.csv");
        std::fs::write(&out, "id,time,y\n0,0,1\n").unwrap();
        let config: BTreeMap<String, String> =
            [("setting".to_string(), "2".to_string())].into();
        let mut m1 = Manifest::new("simulate", config.clone(), Some(7), "days");
        m1.add_file(&out).unwrap();
        let mut m2 = Manifest::new("simulate", config, Some(7), "days");
        m2.add_file(&out).unwrap();
        assert_eq!(m1.config_hash, m2.config_hash);
        assert_eq!(m1.files, m2.files);
        let path = dir.path().join("manifest.json");
        m1.write(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let parsed: Manifest = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed.config_hash, m1.config_hash);
    }

    #[test]
    fn missing_file_error_names_path() {
        match read_dataset_csv(Path::new("/nonexistent/x.csv")) {
            Err(Error::Io { path, .. }) => assert!(path.contains("x.csv")),
            other => panic!("expected io error, got {other:?}"),
        }
    }
}
