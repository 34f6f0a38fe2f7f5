//! JSON result files and the aggregated method table.
//!
//! `eval-arg` writes an [`ArgJson`], `eval-policy` a [`PolicyEvalJson`].
//! Both carry a `label` naming the method. [`aggregate`] joins any mix of
//! them by label into one row per method, in first-seen order. The first
//! method with ARG values is the reference; every other method is compared
//! to it with a paired two-tailed t-test over resamplings, and a dagger
//! marks p < 0.05.

use std::fmt::Write as _;
use std::path::Path;

use drail_core::arg::{ArgReport, Optimizer, RndConfig};
use drail_core::bench::PolicyEval;
use drail_core::stats::{paired_t_test, PairedTTest, SIGNIFICANCE_LEVEL};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DAGGER: &str = "\u{2020}";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RndJson {
    pub hidden: [usize; 2],
    pub out_dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: String,
    pub standardize: bool,
}

impl From<&RndConfig> for RndJson {
    fn from(c: &RndConfig) -> Self {
        Self {
            hidden: c.hidden,
            out_dim: c.out_dim,
            lr: c.lr,
            epochs: c.epochs,
            batch_size: c.batch_size,
            optimizer: c.optimizer.name().into(),
            standardize: c.standardize,
        }
    }
}

impl RndJson {
    pub fn config(&self) -> Result<RndConfig> {
        Ok(RndConfig {
            hidden: self.hidden,
            out_dim: self.out_dim,
            lr: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: parse_optimizer(&self.optimizer)?,
            standardize: self.standardize,
        })
    }
}

pub fn parse_optimizer(s: &str) -> Result<Optimizer> {
    match s {
        "sgd" => Ok(Optimizer::Sgd),
        "adam" => Ok(Optimizer::Adam),
        _ => Err(Error::Config(format!("unknown optimizer {s:?} (sgd|adam)"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestJson {
    pub against: String,
    pub n: usize,
    pub mean_diff: f64,
    pub std_diff: f64,
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub tails: String,
    pub significant: bool,
    pub degenerate: bool,
}

impl TTestJson {
    pub fn new(against: &str, t: &PairedTTest) -> Self {
        Self {
            against: against.into(),
            n: t.n,
            mean_diff: t.mean_diff,
            std_diff: t.std_diff,
            t: t.t,
            df: t.df,
            p: t.p,
            tails: "two".into(),
            significant: t.significant,
            degenerate: t.degenerate,
        }
    }
}

/// ARG protocol result.
///
/// `values[i]` is the ARG of resampling `i`; resamplings with the same
/// `base_seed` share their fixed network across methods. `std` is the
/// sample standard deviation. `comparison` is present when the run was
/// compared against a reference report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgJson {
    pub kind: String,
    pub label: String,
    pub extractor: String,
    pub base_seed: u64,
    pub resamples: usize,
    pub rnd: RndJson,
    pub demo_count: usize,
    pub test_count: usize,
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub comparison: Option<TTestJson>,
}

impl ArgJson {
    pub const KIND: &'static str = "arg";

    pub fn new(label: &str, r: &ArgReport) -> Self {
        Self {
            kind: Self::KIND.into(),
            label: label.into(),
            extractor: r.extractor.clone(),
            base_seed: r.base_seed,
            resamples: r.values.len(),
            rnd: (&r.config).into(),
            demo_count: r.demo_count,
            test_count: r.test_count,
            values: r.values.clone(),
            mean: r.mean,
            std: r.std,
            comparison: r.comparison.as_ref().map(|c| TTestJson::new(&c.against, &c.test)),
        }
    }
}

/// Behavior-cloning evaluation. Endpoint errors are closed-loop terminal
/// distances in pixels; `success_rate` counts episodes ending within
/// `success_threshold_px`, a proxy for task success.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvalJson {
    pub kind: String,
    pub label: String,
    pub dataset: String,
    pub frames: usize,
    pub mse: f64,
    pub endpoint_errors: Vec<f64>,
    pub mean_endpoint_error: f64,
    pub success_threshold_px: f64,
    pub success_rate: f64,
}

impl PolicyEvalJson {
    pub const KIND: &'static str = "policy_eval";

    pub fn new(label: &str, dataset: &str, frames: usize, eval: &PolicyEval, threshold_px: f64) -> Self {
        let n = eval.endpoint_errors.len();
        let ok = eval.endpoint_errors.iter().filter(|&&e| e <= threshold_px).count();
        Self {
            kind: Self::KIND.into(),
            label: label.into(),
            dataset: dataset.into(),
            frames,
            mse: eval.mse,
            endpoint_errors: eval.endpoint_errors.clone(),
            mean_endpoint_error: eval.mean_endpoint_error(),
            success_threshold_px: threshold_px,
            success_rate: if n == 0 { 0.0 } else { ok as f64 / n as f64 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResultFile {
    Arg(ArgJson),
    PolicyEval(PolicyEvalJson),
}

impl ResultFile {
    pub fn label(&self) -> &str {
        match self {
            ResultFile::Arg(a) => &a.label,
            ResultFile::PolicyEval(p) => &p.label,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let v: serde_json::Value = crate::dataio::read_json(path)?;
        let kind = v.get("kind").and_then(|k| k.as_str()).unwrap_or_default().to_string();
        let parsed = match kind.as_str() {
            ArgJson::KIND => serde_json::from_value(v).map(ResultFile::Arg),
            PolicyEvalJson::KIND => serde_json::from_value(v).map(ResultFile::PolicyEval),
            _ => return Err(Error::format(path, format!("unknown result kind {kind:?}"))),
        };
        parsed.map_err(|e| Error::format(path, e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub test_mse: Option<f64>,
    pub mean_endpoint_error: Option<f64>,
    pub success_rate: Option<f64>,
    pub arg_mean: Option<f64>,
    pub arg_std: Option<f64>,
    pub arg_vs_reference: Option<TTestJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub reference: Option<String>,
    pub significance_level: f64,
    pub methods: Vec<MethodRow>,
}

/// Joins result files by label. Policy evaluations are the ones on the
/// dataset named `eval_dataset` when given, otherwise the last seen per
/// label.
pub fn aggregate(files: &[ResultFile], eval_dataset: Option<&str>) -> Result<Report> {
    let mut rows: Vec<MethodRow> = Vec::new();
    let mut args: Vec<Option<&ArgJson>> = Vec::new();
    for f in files {
        let i = match rows.iter().position(|r| r.method == f.label()) {
            Some(i) => i,
            None => {
                rows.push(MethodRow {
                    method: f.label().into(),
                    test_mse: None,
                    mean_endpoint_error: None,
                    success_rate: None,
                    arg_mean: None,
                    arg_std: None,
                    arg_vs_reference: None,
                });
                args.push(None);
                rows.len() - 1
            }
        };
        match f {
            ResultFile::Arg(a) => {
                if args[i].is_some() {
                    return Err(Error::Config(format!("two ARG results labelled {:?}", a.label)));
                }
                args[i] = Some(a);
                rows[i].arg_mean = Some(a.mean);
                rows[i].arg_std = Some(a.std);
            }
            ResultFile::PolicyEval(p) => {
                if eval_dataset.is_none_or(|d| d == p.dataset) {
                    rows[i].test_mse = Some(p.mse);
                    rows[i].mean_endpoint_error = Some(p.mean_endpoint_error);
                    rows[i].success_rate = Some(p.success_rate);
                }
            }
        }
    }
    let reference = args.iter().position(|a| a.is_some());
    if let Some(r) = reference {
        let base = args[r].unwrap();
        for (i, a) in args.iter().enumerate() {
            let Some(a) = a else { continue };
            if i == r {
                continue;
            }
            if a.base_seed != base.base_seed || a.values.len() != base.values.len() {
                return Err(Error::Config(format!(
                    "ARG results {:?} and {:?} are not paired (base seed or resample count differ)",
                    a.label, base.label
                )));
            }
            let t = paired_t_test(&a.values, &base.values)?;
            rows[i].arg_vs_reference = Some(TTestJson::new(&base.label, &t));
        }
    }
    Ok(Report {
        reference: reference.map(|r| rows[r].method.clone()),
        significance_level: SIGNIFICANCE_LEVEL,
        methods: rows,
    })
}

fn opt(v: Option<f64>, f: impl Fn(f64) -> String) -> String {
    v.map(f).unwrap_or_else(|| "-".into())
}

/// Aligned plain-text table. A dagger after the ARG column marks a
/// significant difference from the reference method.
pub fn table(report: &Report) -> String {
    let header = ["method", "test MSE", "endpoint px", "success", "ARG mean \u{00b1} std", "p vs ref"];
    let mut cells: Vec<[String; 6]> = Vec::new();
    for r in &report.methods {
        let arg = match (r.arg_mean, r.arg_std) {
            (Some(m), Some(s)) => {
                let dag = if r.arg_vs_reference.as_ref().is_some_and(|t| t.significant) { DAGGER } else { "" };
                format!("{m:.4e} \u{00b1} {s:.2e}{dag}")
            }
            _ => "-".into(),
        };
        cells.push([
            r.method.clone(),
            opt(r.test_mse, |v| format!("{v:.5}")),
            opt(r.mean_endpoint_error, |v| format!("{v:.2}")),
            opt(r.success_rate, |v| format!("{:.0}%", 100.0 * v)),
            arg,
            opt(r.arg_vs_reference.as_ref().map(|t| t.p), |p| format!("{p:.4}")),
        ]);
    }
    let width = |c: usize| {
        cells.iter().map(|row| row[c].chars().count()).chain([header[c].chars().count()]).max().unwrap_or(0)
    };
    let widths: Vec<usize> = (0..header.len()).map(width).collect();
    let mut out = String::new();
    let line = |out: &mut String, row: &[&str]| {
        let mut s = String::new();
        for (c, v) in row.iter().enumerate() {
            let pad = widths[c] - v.chars().count();
            if c == 0 {
                s.push_str(v);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str("  ");
                s.push_str(&" ".repeat(pad));
                s.push_str(v);
            }
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(&mut out, &header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&mut out, &rule.iter().map(String::as_str).collect::<Vec<_>>());
    for row in &cells {
        line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    if let Some(r) = &report.reference {
        let _ = writeln!(out, "{DAGGER} p < {} (paired two-tailed t-test vs {r})", report.significance_level);
    }
    out
}
