//! Multi-seed aggregation into table and plot-data CSVs.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use hici_core::model::Variant;

use crate::error::{CliError, CliResult};
use crate::ledger::RunRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportKind {
    /// K grows with N/K held fixed.
    FixedRatio,
    /// K grows with N held fixed.
    VaryK,
    /// Covariate count grows with N held fixed.
    VaryP,
    /// Loss-assembly comparison.
    Ablation,
    /// Number of dosage levels.
    VaryE,
    /// Validation counterfactual RMSE per epoch.
    FigCfRmse,
}

impl ReportKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReportKind::FixedRatio => "fixed-ratio",
            ReportKind::VaryK => "vary-k",
            ReportKind::VaryP => "vary-p",
            ReportKind::Ablation => "ablation",
            ReportKind::VaryE => "vary-e",
            ReportKind::FigCfRmse => "fig-cf-rmse",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.csv", self.as_str())
    }
}

impl fmt::Display for ReportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReportKind {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        <Self as clap::ValueEnum>::from_str(s, false).map_err(|_| CliError::Usage(format!("unknown report kind {s:?}")))
    }
}

/// Which cells a report requires.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportSpec {
    pub kind: ReportKind,
    pub datasets: Vec<String>,
    pub variants: Vec<Variant>,
    /// `P` values for `vary-p`, `E` values for `vary-e`; unused otherwise.
    pub values: Vec<usize>,
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

impl ReportSpec {
    /// The dataset and setting lists of the published tables.
    pub fn defaults(kind: ReportKind) -> Self {
        let hici = vec![Variant::Hici];
        let (datasets, variants, values) = match kind {
            ReportKind::FixedRatio => (names(&["Syn35", "Syn48", "Syn103", "Syn216"]), hici, vec![]),
            ReportKind::VaryK => (names(&["Syn10", "Syn35", "Syn55", "Syn100"]), hici, vec![]),
            ReportKind::VaryP => (names(&["Syn35"]), hici, vec![10, 50, 100, 500, 1000]),
            ReportKind::Ablation => (
                names(&["Syn10", "Syn35", "Syn55", "Syn100"]),
                vec![Variant::DeeptreatPlus, Variant::L21Ae, Variant::Hici],
                vec![],
            ),
            ReportKind::VaryE => (names(&["Syn25"]), hici, vec![3, 6, 8, 10]),
            ReportKind::FigCfRmse => (names(&["Syn10"]), vec![Variant::Hici, Variant::Onn, Variant::DeeptreatPlus], vec![]),
        };
        Self {
            kind,
            datasets,
            variants,
            values,
        }
    }
}

/// A rectangular CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some((mean, std))
}

/// `"m, s"` with four decimals.
pub fn format_cell(ms: Option<(f64, f64)>) -> String {
    match ms {
        Some((m, s)) => format!("{m:.4}, {s:.4}"),
        None => "NA".into(),
    }
}

fn split_cols(ms: Option<(f64, f64)>) -> [String; 2] {
    match ms {
        Some((m, s)) => [format!("{m:.4}"), format!("{s:.4}")],
        None => ["NA".into(), "NA".into()],
    }
}

fn ratio(a: usize, b: usize) -> String {
    let r = a as f64 / b as f64;
    if r.fract() == 0.0 {
        format!("{r}")
    } else {
        format!("{:.4}", r).trim_end_matches('0').to_string()
    }
}

#[derive(Clone, Copy)]
struct Cell<'a> {
    dataset: &'a str,
    variant: Variant,
    p: Option<usize>,
    e: Option<usize>,
}

impl fmt::Display for Cell<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.dataset)?;
        if let Some(p) = self.p {
            write!(f, " p={p}")?;
        }
        if let Some(e) = self.e {
            write!(f, " e={e}")?;
        }
        write!(f, " variant={}", self.variant)
    }
}

fn matching<'r>(records: &'r [RunRecord], cell: Cell<'_>, need_curve: bool) -> Vec<&'r RunRecord> {
    let mut seen = std::collections::HashSet::new();
    records
        .iter()
        .filter(|r| r.is_ok() && r.dataset == cell.dataset && r.config.variant == cell.variant)
        .filter(|r| cell.p.is_none_or(|p| r.meta.p == p) && cell.e.is_none_or(|e| r.meta.e_levels == e))
        .filter(|r| if need_curve { !r.cf_rmse_curve.is_empty() } else { r.metrics.is_some() })
        .filter(|r| seen.insert(r.run_id.clone()))
        .collect()
}

fn metric(rs: &[&RunRecord], name: &str) -> Option<(f64, f64)> {
    let xs: Vec<f64> = rs.iter().filter_map(|r| r.metrics.as_ref()?.get(name)).collect();
    mean_std(&xs)
}

fn cells(spec: &ReportSpec) -> Vec<Cell<'_>> {
    let mut out = Vec::new();
    for d in &spec.datasets {
        for &variant in &spec.variants {
            let base = Cell {
                dataset: d,
                variant,
                p: None,
                e: None,
            };
            match spec.kind {
                ReportKind::VaryP => out.extend(spec.values.iter().map(|&p| Cell { p: Some(p), ..base })),
                ReportKind::VaryE => out.extend(spec.values.iter().map(|&e| Cell { e: Some(e), ..base })),
                _ => out.push(base),
            }
        }
    }
    out
}

/// Aggregates `records` into the table (or plot data) of `spec.kind`.
/// Fails with the full list of cells that have no usable record.
pub fn build_report(records: &[RunRecord], spec: &ReportSpec) -> CliResult<Table> {
    let need_curve = spec.kind == ReportKind::FigCfRmse;
    let cells = cells(spec);
    if cells.is_empty() {
        return Err(CliError::Usage(format!("report {} selects no cells", spec.kind)));
    }
    let groups: Vec<Vec<&RunRecord>> = cells.iter().map(|&c| matching(records, c, need_curve)).collect();
    let missing: Vec<String> =
        cells.iter().zip(&groups).filter(|(_, g)| g.is_empty()).map(|(c, _)| c.to_string()).collect();
    if !missing.is_empty() {
        return Err(CliError::Incomplete(missing));
    }
    let head = |g: &[&RunRecord]| g[0].meta.clone();
    let ms = ["pehe_sqrt_mean", "pehe_sqrt_std", "mape_ate_mean", "mape_ate_std"];
    let table = match spec.kind {
        ReportKind::FixedRatio | ReportKind::VaryK => {
            let mut header = vec!["dataset".to_string()];
            if spec.kind == ReportKind::VaryK {
                header.push("n_over_k".into());
            }
            header.extend(ms.iter().map(|s| s.to_string()));
            let rows = cells
                .iter()
                .zip(&groups)
                .map(|(c, g)| {
                    let m = head(g);
                    let mut row = vec![label(c, spec)];
                    if spec.kind == ReportKind::VaryK {
                        row.push(ratio(m.n, m.k));
                    }
                    row.extend(split_cols(metric(g, "pehe_sqrt")));
                    row.extend(split_cols(metric(g, "mape_ate")));
                    row
                })
                .collect();
            Table { header, rows }
        }
        ReportKind::VaryP => {
            let mut header = vec!["dataset".to_string(), "p".into(), "p_over_n".into()];
            header.extend(ms.iter().map(|s| s.to_string()));
            let rows = cells
                .iter()
                .zip(&groups)
                .map(|(c, g)| {
                    let m = head(g);
                    let mut row = vec![label(c, spec), m.p.to_string(), ratio(m.p, m.n)];
                    row.extend(split_cols(metric(g, "pehe_sqrt")));
                    row.extend(split_cols(metric(g, "mape_ate")));
                    row
                })
                .collect();
            Table { header, rows }
        }
        ReportKind::VaryE => {
            let header = ["dataset", "e", "mise_sqrt_mean", "mise_sqrt_std", "mape_ate_dos_mean", "mape_ate_dos_std"]
                .map(String::from)
                .to_vec();
            let rows = cells
                .iter()
                .zip(&groups)
                .map(|(c, g)| {
                    let mut row = vec![label(c, spec), head(g).e_levels.to_string()];
                    row.extend(split_cols(metric(g, "mise_sqrt")));
                    row.extend(split_cols(metric(g, "mape_ate_dos")));
                    row
                })
                .collect();
            Table { header, rows }
        }
        ReportKind::Ablation => ablation_table(&spec.datasets, &spec.variants, |d, v| {
            groups[cells.iter().position(|c| c.dataset == d && c.variant == v).expect("cell exists")].clone()
        }),
        ReportKind::FigCfRmse => {
            let rows = cells
                .iter()
                .zip(&groups)
                .flat_map(|(c, g)| {
                    let series = if spec.datasets.len() > 1 {
                        format!("{}/{}", c.dataset, c.variant)
                    } else {
                        c.variant.to_string()
                    };
                    curve_rows(g, series)
                })
                .collect();
            Table {
                header: ["x", "y", "series"].map(String::from).to_vec(),
                rows,
            }
        }
    };
    Ok(table)
}

fn label(c: &Cell<'_>, spec: &ReportSpec) -> String {
    if spec.variants.len() > 1 {
        format!("{}/{}", c.dataset, c.variant)
    } else {
        c.dataset.to_string()
    }
}

/// Mean validation counterfactual RMSE per epoch over the runs reaching it.
fn curve_rows(g: &[&RunRecord], series: String) -> Vec<Vec<String>> {
    let len = g.iter().map(|r| r.cf_rmse_curve.len()).max().unwrap_or(0);
    (0..len)
        .filter_map(|i| {
            let ys: Vec<f64> = g.iter().filter_map(|r| r.cf_rmse_curve.get(i).copied().flatten()).collect();
            let (m, _) = mean_std(&ys)?;
            Some(vec![(i + 1).to_string(), format!("{m}"), series.clone()])
        })
        .collect()
}

/// Rows are datasets; one `"m, s"` column per (metric, variant).
pub fn ablation_table<'r>(
    datasets: &[String],
    variants: &[Variant],
    runs: impl Fn(&str, Variant) -> Vec<&'r RunRecord>,
) -> Table {
    let mut header = vec!["dataset".to_string(), "n_over_k".into(), "p".into()];
    for m in ["pehe_sqrt", "mape_ate"] {
        header.extend(variants.iter().map(|v| format!("{m}:{v}")));
    }
    let rows = datasets
        .iter()
        .filter_map(|d| {
            let any = variants.iter().flat_map(|&v| runs(d, v)).next()?;
            let mut row = vec![d.clone(), ratio(any.meta.n, any.meta.k), any.meta.p.to_string()];
            for m in ["pehe_sqrt", "mape_ate"] {
                row.extend(variants.iter().map(|&v| format_cell(metric(&runs(d, v), m))));
            }
            Some(row)
        })
        .collect();
    Table { header, rows }
}

/// Groups records by `(dataset, variant)` for [`ablation_table`].
pub fn by_dataset_variant(records: &[RunRecord]) -> BTreeMap<(String, Variant), Vec<&RunRecord>> {
    let mut m: BTreeMap<(String, Variant), Vec<&RunRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_ok() && r.metrics.is_some()) {
        m.entry((r.dataset.clone(), r.config.variant)).or_default().push(r);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{run_id, RunStatus};
    use hici_core::datagen::DatasetMeta;
    use hici_core::metrics::MetricsReport;
    use hici_core::model::HyperConfig;

    fn rec(k: usize, variant: Variant, seed: u64, pehe: f64, mape: f64) -> RunRecord {
        let config = HyperConfig {
            seed,
            variant,
            ..Default::default()
        };
        let meta = DatasetMeta::syn(10000, 10, k, 1);
        RunRecord {
            run_id: run_id(&config, &meta),
            dataset: meta.name(),
            config,
            meta,
            seed,
            split_seed: 0,
            status: RunStatus::Ok,
            error: None,
            metrics: Some(MetricsReport {
                pehe_sqrt: Some(pehe),
                mape_ate: Some(mape),
                mape_ate_per_k: vec![],
                mise_sqrt: None,
                mape_ate_dos: None,
                cf_rmse: Some(1.0),
                unavailable: vec![],
            }),
            best_val_loss: Some(1.0),
            best_epoch: Some(2),
            epochs_run: Some(3),
            wall_time_s: 0.0,
            checkpoint: None,
            cf_rmse_curve: vec![Some(3.0), Some(2.0), Some(1.0 + seed as f64)],
        }
    }

    #[test]
    fn sample_std_and_cell_format() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m, 2.5);
        // Σ(x−m)² = 5, divided by n−1 = 3
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]), Some((7.0, 0.0)));
        assert_eq!(format_cell(Some((3.67641, 0.40372))), "3.6764, 0.4037");
        assert_eq!(format_cell(None), "NA");
    }

    #[test]
    fn vary_k_layout() {
        let mut records = Vec::new();
        for k in [10, 35, 55, 100] {
            for s in 1..=3 {
                records.push(rec(k, Variant::Hici, s, k as f64 / 10.0 + s as f64, 0.1));
            }
        }
        let t = build_report(&records, &ReportSpec::defaults(ReportKind::VaryK)).unwrap();
        assert_eq!(t.header, ["dataset", "n_over_k", "pehe_sqrt_mean", "pehe_sqrt_std", "mape_ate_mean", "mape_ate_std"]);
        assert_eq!(t.rows.len(), 4);
        assert_eq!(t.rows[0][..4], ["Syn10", "1000", "3.0000", "1.0000"]);
        assert_eq!(t.rows[1][1], "285.7143");
    }

    #[test]
    fn empty_ledger_lists_every_cell() {
        match build_report(&[], &ReportSpec::defaults(ReportKind::Ablation)) {
            Err(CliError::Incomplete(cells)) => {
                assert_eq!(cells.len(), 12);
                assert!(cells.contains(&"Syn55 variant=l21_ae".to_string()));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ablation_cells_are_mean_comma_std() {
        let records = vec![rec(10, Variant::Hici, 1, 1.0, 0.2), rec(10, Variant::Hici, 2, 3.0, 0.4)];
        let spec = ReportSpec {
            kind: ReportKind::Ablation,
            datasets: vec!["Syn10".into()],
            variants: vec![Variant::Hici],
            values: vec![],
        };
        let t = build_report(&records, &spec).unwrap();
        assert_eq!(t.header, ["dataset", "n_over_k", "p", "pehe_sqrt:hici", "mape_ate:hici"]);
        assert_eq!(t.rows, vec![vec!["Syn10", "1000", "10", "2.0000, 1.4142", "0.3000, 0.1414"]]);
        assert!(t.to_csv().contains("\"2.0000, 1.4142\""));
    }

    #[test]
    fn figure_rows_are_one_per_epoch_and_variant() {
        let records = vec![
            rec(10, Variant::Hici, 1, 1.0, 0.1),
            rec(10, Variant::Hici, 2, 1.0, 0.1),
            rec(10, Variant::Onn, 1, 1.0, 0.1),
            rec(10, Variant::DeeptreatPlus, 1, 1.0, 0.1),
        ];
        let t = build_report(&records, &ReportSpec::defaults(ReportKind::FigCfRmse)).unwrap();
        assert_eq!(t.header, ["x", "y", "series"]);
        assert_eq!(t.rows.len(), 9);
        // third epoch of hici averages 2.0 and 3.0
        assert_eq!(t.rows[2], ["3", "2.5", "hici"]);
    }

    #[test]
    fn duplicate_records_count_once() {
        let r = rec(10, Variant::Hici, 1, 1.0, 0.1);
        let mut other = rec(10, Variant::Hici, 2, 3.0, 0.1);
        let spec = ReportSpec {
            datasets: vec!["Syn10".into()],
            ..ReportSpec::defaults(ReportKind::FixedRatio)
        };
        let one = build_report(&[r.clone(), r.clone()], &spec).unwrap();
        assert_eq!(one.rows[0][1..3], ["1.0000", "0.0000"]);
        other.status = RunStatus::Failed;
        let two = build_report(&[r, other], &spec).unwrap();
        assert_eq!(two.rows[0][1], "1.0000");
    }
}
