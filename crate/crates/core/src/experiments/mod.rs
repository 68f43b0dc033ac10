//! Batch experiments: rate studies, the two-layer model and the property
//! suite, with CSV/JSON output.

mod checks;
mod oracle;
mod props;
mod runners;
pub mod spec;
pub mod stats;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

pub use checks::{
    barycenter_recovery, duality_gap_study, standard_instance, GapRecord, RecoveryReport,
};
pub use oracle::{solve_oracle, OracleProblem, OracleReport};
pub use props::{
    run_property_suite, run_property_suite_with, PropertyItem, PropertyReport, PropertySettings,
    DEFAULT_CLASS,
};
pub use runners::{run_density_rate, run_one_layer, run_two_layer};
pub use spec::{ExperimentSpec, MarginalSpec, Mode, PopulationSpec};
pub use stats::{derive_seed, fit_rate, RateResult};

pub const CSV_HEADER: &str = "mode,d,m,n,m_outer,rep,seed,metric,value";

/// One metric of one replication.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub mode: String,
    pub d: usize,
    pub m: usize,
    pub n: usize,
    /// Number of latent measures (two-layer runs only).
    pub m_outer: Option<usize>,
    pub rep: usize,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

/// A dropped replication and the reason.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Exclusion {
    pub n: usize,
    pub m: usize,
    pub rep: usize,
    pub seed: u64,
    pub cause: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentOutput {
    pub mode: Mode,
    pub rows: Vec<Row>,
    /// Primary metric first.
    pub results: Vec<RateResult>,
    pub exclusions: Vec<Exclusion>,
    pub diagnostics: BTreeMap<String, f64>,
    pub properties: Option<PropertyReport>,
}

impl ExperimentOutput {
    pub fn primary(&self) -> Option<&RateResult> {
        self.results.first()
    }

    pub fn result(&self, metric: &str) -> Option<&RateResult> {
        self.results.iter().find(|r| r.metric == metric)
    }

    pub fn passed(&self) -> bool {
        self.properties.as_ref().is_none_or(|p| p.pass)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER.split(','))?;
        for r in &self.rows {
            w.write_record([
                r.mode.clone(),
                r.d.to_string(),
                r.m.to_string(),
                r.n.to_string(),
                r.m_outer.map(|v| v.to_string()).unwrap_or_default(),
                r.rep.to_string(),
                r.seed.to_string(),
                r.metric.clone(),
                r.value.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// Summary with the primary result's fields at the top level.
    pub fn summary(&self) -> serde_json::Value {
        let mut top = serde_json::Map::new();
        top.insert("mode".into(), serde_json::json!(self.mode));
        if let Some(p) = self.primary() {
            if let serde_json::Value::Object(fields) = serde_json::json!(p) {
                top.extend(fields);
            }
        }
        top.insert("excluded".into(), serde_json::json!(self.exclusions.len()));
        top.insert("results".into(), serde_json::json!(self.results));
        top.insert("exclusions".into(), serde_json::json!(self.exclusions));
        top.insert("diagnostics".into(), serde_json::json!(self.diagnostics));
        if let Some(p) = &self.properties {
            top.insert("properties".into(), serde_json::json!(p));
            top.insert("pass".into(), serde_json::json!(p.pass));
        }
        serde_json::Value::Object(top)
    }

    /// Writes `<stem>.csv` and `<stem>.summary.json`.
    pub fn write_files(&self, path: &Path) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
        let csv_path = path.with_extension("csv");
        let json_path = path.with_extension("summary.json");
        if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        self.write_csv(std::fs::File::create(&csv_path)?)?;
        std::fs::write(&json_path, serde_json::to_string_pretty(&self.summary())?)?;
        Ok((csv_path, json_path))
    }
}

/// Python/matplotlib script plotting replication means against the ladder on
/// log-log axes, one panel per metric.
pub fn plot_script(csv_file: &str) -> String {
    format!(
        r#"import csv
import collections
import math
import matplotlib.pyplot as plt

rows = list(csv.DictReader(open({csv_file:?})))
by_metric = collections.defaultdict(lambda: collections.defaultdict(list))
for r in rows:
    x = int(r["m_outer"]) if r["metric"].endswith("_vs_m") else int(r["n"])
    by_metric[r["metric"]][x].append(float(r["value"]))

fig, axes = plt.subplots(1, len(by_metric), figsize=(4 * len(by_metric), 3.5), squeeze=False)
for ax, (metric, pts) in zip(axes[0], sorted(by_metric.items())):
    xs = sorted(pts)
    means = [sum(pts[x]) / len(pts[x]) for x in xs]
    errs = [
        math.sqrt(sum((v - mu) ** 2 for v in pts[x]) / max(len(pts[x]) - 1, 1) / len(pts[x]))
        for x, mu in zip(xs, means)
    ]
    ax.errorbar(xs, means, yerr=errs, marker="o", capsize=3)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_title(metric)
    ax.set_xlabel("ladder")
fig.tight_layout()
fig.savefig({png:?})
"#,
        png = Path::new(csv_file).with_extension("png").to_string_lossy()
    )
}

/// Runs the experiment described by `spec`.
pub fn run(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    match spec.mode {
        Mode::FunctionalRate | Mode::BarycenterRate => run_one_layer(spec),
        Mode::DensityRate => run_density_rate(spec),
        Mode::TwoLayer => run_two_layer(spec),
        Mode::PropertySuite => {
            let report = run_property_suite(spec)?;
            Ok(ExperimentOutput {
                mode: spec.mode,
                rows: Vec::new(),
                results: Vec::new(),
                exclusions: Vec::new(),
                diagnostics: BTreeMap::new(),
                properties: Some(report),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_and_empty_outer() {
        let out = ExperimentOutput {
            mode: Mode::FunctionalRate,
            rows: vec![Row {
                mode: "functional_rate".into(),
                d: 1,
                m: 2,
                n: 500,
                m_outer: None,
                rep: 0,
                seed: 7,
                metric: "sq_error".into(),
                value: 0.25,
            }],
            results: Vec::new(),
            exclusions: Vec::new(),
            diagnostics: BTreeMap::new(),
            properties: None,
        };
        let s = out.csv_string().unwrap();
        assert_eq!(s, format!("{CSV_HEADER}\nfunctional_rate,1,2,500,,0,7,sq_error,0.25\n"));
        assert_eq!(out.summary()["excluded"], 0);
    }
}
