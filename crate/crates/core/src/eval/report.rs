use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const REPORT_HEADER: &str = "#domain-sieve-eval v1";

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub metric: String,
    pub seed: u64,
    pub size: usize,
    pub value: f64,
}

/// Wall-clock cost of one method on one seed. Kept out of the report
/// tables so those stay reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub method: String,
    pub seed: u64,
    pub selection_secs: f64,
    pub total_secs: f64,
}

/// Per-seed curves of every method and metric.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub config_digest: String,
    pub seeds: Vec<u64>,
    pub planted: usize,
    rows: Vec<ReportRow>,
    pub timings: Vec<Timing>,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl EvalReport {
    pub fn new(config_digest: String, seeds: Vec<u64>, planted: usize, mut rows: Vec<ReportRow>, timings: Vec<Timing>) -> Self {
        rows.sort_by(|a, b| {
            (&a.method, &a.metric, a.seed, a.size).cmp(&(&b.method, &b.metric, b.seed, b.size))
        });
        EvalReport {
            config_digest,
            seeds,
            planted,
            rows,
            timings,
        }
    }

    pub fn rows(&self) -> &[ReportRow] {
        &self.rows
    }

    pub fn methods(&self) -> Vec<&str> {
        let mut m: Vec<&str> = self.rows.iter().map(|r| r.method.as_str()).collect();
        m.dedup();
        m
    }

    /// `(size, value)` points of one curve.
    pub fn curve(&self, method: &str, metric: &str, seed: u64) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.metric == metric && r.seed == seed)
            .map(|r| (r.size, r.value))
            .collect()
    }

    /// Values across seeds at one size, in seed order of the report.
    pub fn values(&self, method: &str, metric: &str, size: usize) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.metric == metric && r.size == size)
            .map(|r| r.value)
            .collect()
    }

    pub fn sizes(&self, method: &str, metric: &str) -> Vec<usize> {
        let mut s: Vec<usize> = self
            .rows
            .iter()
            .filter(|r| r.method == method && r.metric == metric)
            .map(|r| r.size)
            .collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Seed mean at one size.
    pub fn mean(&self, method: &str, metric: &str, size: usize) -> Option<f64> {
        let v = self.values(method, metric, size);
        (!v.is_empty()).then(|| mean_sd(&v).0)
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{REPORT_HEADER}").unwrap();
        writeln!(s, "# config_digest = {}", self.config_digest).unwrap();
        let seeds: Vec<String> = self.seeds.iter().map(|x| x.to_string()).collect();
        writeln!(s, "# seeds = {}", seeds.join(",")).unwrap();
        writeln!(s, "# planted = {}", self.planted).unwrap();
        writeln!(s, "method\tmetric\tseed\tsize\tvalue").unwrap();
        for r in &self.rows {
            writeln!(s, "{}\t{}\t{}\t{}\t{}", r.method, r.metric, r.seed, r.size, r.value).unwrap();
        }
        s
    }

    pub fn timings_tsv(&self) -> String {
        let mut s = String::from("method\tseed\tselection_secs\ttotal_secs\n");
        for t in &self.timings {
            writeln!(s, "{}\t{}\t{:.3}\t{:.3}", t.method, t.seed, t.selection_secs, t.total_secs).unwrap();
        }
        s
    }

    /// Seed means with 95% normal intervals at every size.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        writeln!(s, "config digest {}", self.config_digest).unwrap();
        writeln!(s, "{} seed(s), {} planted pool sentences", self.seeds.len(), self.planted).unwrap();
        let mut groups: BTreeMap<(&str, &str), ()> = BTreeMap::new();
        for r in &self.rows {
            groups.insert((r.metric.as_str(), r.method.as_str()), ());
        }
        let mut current = "";
        for (metric, method) in groups.keys() {
            if *metric != current {
                writeln!(s, "\n{metric}").unwrap();
                current = metric;
            }
            let points: Vec<String> = self
                .sizes(method, metric)
                .into_iter()
                .map(|size| {
                    let v = self.values(method, metric, size);
                    let (m, sd) = mean_sd(&v);
                    let ci = 1.96 * sd / (v.len() as f64).sqrt();
                    format!("{size}:{m:.4}±{ci:.4}")
                })
                .collect();
            writeln!(s, "  {method:<13} {}", points.join(" ")).unwrap();
        }
        s
    }

    /// Writes `report.tsv`, `summary.txt`, `timings.tsv` and per-curve
    /// mean/sd files under `curves/`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir.join("curves"))?;
        fs::write(dir.join("report.tsv"), self.to_tsv())?;
        fs::write(dir.join("summary.txt"), self.summary())?;
        fs::write(dir.join("timings.tsv"), self.timings_tsv())?;
        let mut keys: Vec<(&str, &str)> = self.rows.iter().map(|r| (r.method.as_str(), r.metric.as_str())).collect();
        keys.dedup();
        for (method, metric) in keys {
            let mut body = String::from("size\tmean\tsd\tn\n");
            for size in self.sizes(method, metric) {
                let v = self.values(method, metric, size);
                let (m, sd) = mean_sd(&v);
                writeln!(body, "{size}\t{m}\t{sd}\t{}", v.len()).unwrap();
            }
            fs::write(dir.join("curves").join(format!("{method}.{metric}.tsv")), body)?;
        }
        Ok(())
    }
}

/// Parses the `report.tsv` written by [`EvalReport::write_dir`].
pub fn read_report_tsv(path: impl AsRef<Path>) -> Result<EvalReport> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    if lines.next().map(|l| l.1) != Some(REPORT_HEADER) {
        return Err(Error::parse(&display, 1, "missing report header"));
    }
    let mut digest = String::new();
    let mut seeds = Vec::new();
    let mut planted = 0;
    let mut rows = Vec::new();
    for (n, line) in lines {
        let err = |m: String| Error::parse(&display, n + 1, m);
        if let Some(meta) = line.strip_prefix("# ") {
            let (k, v) = meta.split_once(" = ").ok_or_else(|| err("bad metadata line".into()))?;
            match k {
                "config_digest" => digest = v.to_string(),
                "seeds" => {
                    seeds = v
                        .split(',')
                        .filter(|x| !x.is_empty())
                        .map(|x| x.parse().map_err(|_| err(format!("bad seed {x:?}"))))
                        .collect::<Result<_>>()?
                }
                "planted" => planted = v.parse().map_err(|_| err("bad planted count".into()))?,
                _ => {}
            }
            continue;
        }
        if line.starts_with("method\t") || line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(err("expected 5 tab-separated fields".into()));
        }
        rows.push(ReportRow {
            method: f[0].to_string(),
            metric: f[1].to_string(),
            seed: f[2].parse().map_err(|_| err("bad seed".into()))?,
            size: f[3].parse().map_err(|_| err("bad size".into()))?,
            value: f[4].parse().map_err(|_| err("bad value".into()))?,
        });
    }
    Ok(EvalReport::new(digest, seeds, planted, rows, Vec::new()))
}
