//! CSV + JSON dataset files.
//!
//! - `covariates.csv`: header `x1..xP`, one row per sample.
//! - `assignments.csv`: columns `t,e,y` (1-based `t`, `e`).
//! - `meta.json`: [`DatasetMeta`].
//! - `counterfactuals.csv`: columns `n,k,e,y` (1-based), generated data only.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use super::dataset::{Dataset, DatasetMeta, Source};
use crate::error::{Error, Result};
use crate::outcomes::OutcomeTensor;
use crate::tensor::Tensor2;

pub const COVARIATES_FILE: &str = "covariates.csv";
pub const ASSIGNMENTS_FILE: &str = "assignments.csv";
pub const META_FILE: &str = "meta.json";
pub const COUNTERFACTUALS_FILE: &str = "counterfactuals.csv";

/// Writes all dataset files into `dir` (created if missing).
pub fn save_dataset(d: &Dataset, dir: &Path) -> Result<()> {
    d.validate()?;
    fs::create_dir_all(dir)?;

    let mut w = BufWriter::new(File::create(dir.join(COVARIATES_FILE))?);
    let header: Vec<String> = (1..=d.meta.p).map(|j| format!("x{j}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for i in 0..d.n() {
        let row: Vec<String> = d.x.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;

    let mut w = BufWriter::new(File::create(dir.join(ASSIGNMENTS_FILE))?);
    writeln!(w, "t,e,y")?;
    for i in 0..d.n() {
        writeln!(w, "{},{},{}", d.t[i] + 1, d.e[i] + 1, d.y[i])?;
    }
    w.flush()?;

    let mut meta_json = serde_json::to_string_pretty(&d.meta)?;
    meta_json.push('\n');
    fs::write(dir.join(META_FILE), meta_json)?;

    if let Some(yf) = &d.y_full {
        let mut w = BufWriter::new(File::create(dir.join(COUNTERFACTUALS_FILE))?);
        writeln!(w, "n,k,e,y")?;
        for n in 0..yf.n() {
            for k in 0..yf.k() {
                for e in 0..yf.e() {
                    writeln!(w, "{},{},{},{}", n + 1, k + 1, e + 1, yf.get(n, k, e))?;
                }
            }
        }
        w.flush()?;
    }
    Ok(())
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| parse_err(path, 0, e.to_string()))
}

fn read_rows(path: &Path, expected_header: Option<&[&str]>) -> Result<(Vec<String>, Vec<(u64, Vec<String>)>)> {
    let mut rdr = reader(path)?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if let Some(exp) = expected_header {
        if header != exp {
            return Err(parse_err(
                path,
                1,
                format!("expected header {}, found {}", exp.join(","), header.join(",")),
            ));
        }
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec.iter().map(|s| s.trim().to_string()).collect()));
    }
    Ok((header, rows))
}

fn parse_f64(path: &Path, line: u64, s: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| parse_err(path, line, format!("not a number: {s:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("non-finite value {s:?}")));
    }
    Ok(v)
}

fn parse_index(path: &Path, line: u64, s: &str, what: &str) -> Result<usize> {
    let v: usize = s
        .parse()
        .map_err(|_| parse_err(path, line, format!("{what} is not a positive integer: {s:?}")))?;
    if v == 0 {
        return Err(parse_err(path, line, format!("{what} is 1-based, got 0")));
    }
    Ok(v - 1)
}

fn read_covariates(path: &Path) -> Result<Tensor2<f64>> {
    let (header, rows) = read_rows(path, None)?;
    let p = header.len();
    for (j, h) in header.iter().enumerate() {
        if *h != format!("x{}", j + 1) {
            return Err(parse_err(path, 1, format!("column {} should be named x{}, found {h:?}", j + 1, j + 1)));
        }
    }
    let mut data = Vec::with_capacity(rows.len() * p);
    for (line, row) in &rows {
        if row.len() != p {
            return Err(parse_err(path, *line, format!("expected {p} columns, found {}", row.len())));
        }
        for s in row {
            data.push(parse_f64(path, *line, s)?);
        }
    }
    Tensor2::from_vec(rows.len(), p, data)
}

type Assignments = (Vec<usize>, Vec<usize>, Vec<f64>);

fn read_assignments(path: &Path) -> Result<Assignments> {
    let (_, rows) = read_rows(path, Some(&["t", "e", "y"]))?;
    let mut t = Vec::with_capacity(rows.len());
    let mut e = Vec::with_capacity(rows.len());
    let mut y = Vec::with_capacity(rows.len());
    for (line, row) in &rows {
        if row.len() != 3 {
            return Err(parse_err(path, *line, format!("expected 3 columns, found {}", row.len())));
        }
        t.push(parse_index(path, *line, &row[0], "t")?);
        e.push(parse_index(path, *line, &row[1], "e")?);
        y.push(parse_f64(path, *line, &row[2])?);
    }
    Ok((t, e, y))
}

fn read_meta(path: &Path) -> Result<DatasetMeta> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line() as u64, e.to_string()))
}

fn read_counterfactuals(path: &Path, n: usize, k: usize, e: usize) -> Result<OutcomeTensor<f64>> {
    let (_, rows) = read_rows(path, Some(&["n", "k", "e", "y"]))?;
    let mut out = OutcomeTensor::zeros(n, k, e);
    let mut seen = vec![false; n * k * e];
    for (line, row) in &rows {
        if row.len() != 4 {
            return Err(parse_err(path, *line, format!("expected 4 columns, found {}", row.len())));
        }
        let i = parse_index(path, *line, &row[0], "n")?;
        let kk = parse_index(path, *line, &row[1], "k")?;
        let ee = parse_index(path, *line, &row[2], "e")?;
        if i >= n || kk >= k || ee >= e {
            return Err(Error::Consistency(format!(
                "{}: line {line} cell ({}, {}, {}) outside {n}x{k}x{e}",
                path.display(),
                i + 1,
                kk + 1,
                ee + 1
            )));
        }
        let y = parse_f64(path, *line, &row[3])?;
        out.set(i, kk, ee, y);
        seen[(i * k + kk) * e + ee] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Consistency(format!(
            "{}: counterfactual table is incomplete",
            path.display()
        )));
    }
    Ok(out)
}

/// Loads covariates and assignments (no counterfactuals).
///
/// With `meta_path`, dimensions are checked against the metadata; without
/// it, `K` and `E` are inferred as the largest indices present.
pub fn load_external(
    covariates_path: &Path,
    assignments_path: &Path,
    meta_path: Option<&Path>,
) -> Result<Dataset> {
    let x = read_covariates(covariates_path)?;
    let (t, e, y) = read_assignments(assignments_path)?;
    if x.rows() != t.len() {
        return Err(Error::Consistency(format!(
            "{} has {} samples but {} has {}",
            covariates_path.display(),
            x.rows(),
            assignments_path.display(),
            t.len()
        )));
    }
    let meta = match meta_path {
        Some(p) => {
            let m = read_meta(p)?;
            m.validate()?;
            if m.p != x.cols() {
                return Err(Error::Consistency(format!(
                    "metadata p = {} but covariates have {} columns",
                    m.p,
                    x.cols()
                )));
            }
            m
        }
        None => {
            let k = t.iter().max().map_or(1, |&m| m + 1);
            let levels = e.iter().max().map_or(1, |&m| m + 1);
            let mut m = DatasetMeta::syn(x.rows(), x.cols(), k, 0).with_dosage_levels(levels);
            m.source = Source::External;
            m.n_confounders = 0;
            m.kappa = 0.0;
            m.sigma = 0.0;
            m
        }
    };
    let d = Dataset {
        x,
        t,
        e,
        y,
        y_full: None,
        meta,
    };
    d.validate()?;
    Ok(d)
}

/// Loads a directory written by [`save_dataset`], including counterfactuals when present.
pub fn load_dataset_dir(dir: &Path) -> Result<Dataset> {
    let meta_path = dir.join(META_FILE);
    let mut d = load_external(
        &dir.join(COVARIATES_FILE),
        &dir.join(ASSIGNMENTS_FILE),
        meta_path.exists().then_some(meta_path.as_path()),
    )?;
    let cf = dir.join(COUNTERFACTUALS_FILE);
    if cf.exists() {
        d.y_full = Some(read_counterfactuals(&cf, d.n(), d.k(), d.e_levels())?);
        d.validate()?;
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::gen_syn;

    fn sample() -> Dataset {
        gen_syn(&DatasetMeta::syn(30, 4, 3, 5).with_dosage_levels(2)).unwrap()
    }

    #[test]
    fn save_then_load_round_trips_exactly() {
        let d = sample();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&d, dir.path()).unwrap();
        let back = load_external(
            &dir.path().join(COVARIATES_FILE),
            &dir.path().join(ASSIGNMENTS_FILE),
            Some(&dir.path().join(META_FILE)),
        )
        .unwrap();
        assert_eq!(back.x, d.x);
        assert_eq!(back.t, d.t);
        assert_eq!(back.e, d.e);
        assert_eq!(back.y, d.y);
        assert!(back.y_full.is_none());
        assert_eq!(load_dataset_dir(dir.path()).unwrap(), d);
    }

    #[test]
    fn treatment_beyond_k_rejected() {
        let d = sample();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&d, dir.path()).unwrap();
        let path = dir.path().join(ASSIGNMENTS_FILE);
        let text = fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let parts: Vec<&str> = lines[1].split(',').collect();
        lines[1] = format!("4,{},{}", parts[1], parts[2]);
        fs::write(&path, lines.join("\n")).unwrap();
        let err = load_external(&dir.path().join(COVARIATES_FILE), &path, Some(&dir.path().join(META_FILE)))
            .unwrap_err();
        assert!(matches!(err, Error::Consistency(_)), "{err}");
    }

    #[test]
    fn metadata_p_mismatch_rejected() {
        let d = sample();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&d, dir.path()).unwrap();
        let mut meta = d.meta.clone();
        meta.p = 5;
        fs::write(dir.path().join(META_FILE), serde_json::to_string(&meta).unwrap()).unwrap();
        assert!(matches!(load_dataset_dir(dir.path()), Err(Error::Consistency(_))));
    }

    #[test]
    fn malformed_value_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let cov = dir.path().join("c.csv");
        let asg = dir.path().join("a.csv");
        fs::write(&cov, "x1,x2\n1,2\n3,oops\n").unwrap();
        fs::write(&asg, "t,e,y\n1,1,0.5\n2,1,0.1\n").unwrap();
        match load_external(&cov, &asg, None).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn inconsistent_sample_counts_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cov = dir.path().join("c.csv");
        let asg = dir.path().join("a.csv");
        fs::write(&cov, "x1\n1\n2\n3\n").unwrap();
        fs::write(&asg, "t,e,y\n1,1,0.5\n2,1,0.1\n").unwrap();
        assert!(matches!(load_external(&cov, &asg, None), Err(Error::Consistency(_))));
    }

    #[test]
    fn inferred_dimensions_without_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let cov = dir.path().join("c.csv");
        let asg = dir.path().join("a.csv");
        fs::write(&cov, "x1,x2\n1,2\n3,4\n5,6\n").unwrap();
        fs::write(&asg, "t,e,y\n1,1,0.5\n3,2,0.1\n2,1,1\n").unwrap();
        let d = load_external(&cov, &asg, None).unwrap();
        assert_eq!((d.k(), d.e_levels()), (3, 2));
        assert_eq!(d.meta.source, Source::External);
        assert_eq!(d.t, vec![0, 2, 1]);
    }

    #[test]
    fn metadata_json_has_exact_keys() {
        let d = sample();
        let v = serde_json::to_value(&d.meta).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(
            keys,
            ["dosage_grid", "e_levels", "k", "kappa", "n", "n_confounders", "p", "seed", "sigma", "source"]
        );
    }
}
