use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::campaign::{Campaign, Summary};
use super::offline::OfflineArtifacts;
use super::scenario::Scenario;
use crate::controller::StepDiagnostics;
use crate::error::Result;

/// One bin of a state histogram.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramBin {
    pub step: usize,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub density: f64,
}

/// Normalised histograms of one state coordinate at the listed steps, with
/// uniform bins over the state box (or the sample range when unconstrained).
pub fn histograms(campaign: &Campaign, scenario: &Scenario) -> Vec<HistogramBin> {
    let spec = &scenario.histogram;
    let c = spec.coordinate;
    let mut out = Vec::new();
    for &step in &spec.steps {
        let values: Vec<f64> = campaign
            .runs
            .iter()
            .filter_map(|r| r.states().nth(step).map(|x| x[c]))
            .collect();
        if values.is_empty() {
            continue;
        }
        let (lo, hi) = if scenario.x_box.enabled[c] {
            (scenario.x_box.lower[c], scenario.x_box.upper[c])
        } else {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) }
        };
        let width = (hi - lo) / spec.bins as f64;
        let mut counts = vec![0usize; spec.bins];
        for v in &values {
            if *v >= lo && *v <= hi {
                let b = (((v - lo) / width) as usize).min(spec.bins - 1);
                counts[b] += 1;
            }
        }
        let n = values.len() as f64;
        for (b, &count) in counts.iter().enumerate() {
            out.push(HistogramBin {
                step,
                bin_lo: lo + b as f64 * width,
                bin_hi: lo + (b + 1) as f64 * width,
                density: count as f64 / (n * width),
            });
        }
    }
    out
}

/// `metrics.csv`: one row per run and step; `violations` counts state- and
/// input-box coordinates outside their bounds.
pub fn write_metrics<W: Write>(campaign: &Campaign, scenario: &Scenario, out: W) -> Result<()> {
    let (x_box, u_box) = (&scenario.x_box, &scenario.u_box);
    let mut wr = csv::Writer::from_writer(out);
    let Some(first) = campaign.runs.iter().find_map(|r| r.steps.first()) else {
        wr.write_record(["run_id", "k", "path", "V_N", "J_tilde", "stage_cost", "cum_avg_cost", "violations"])?;
        wr.flush()?;
        return Ok(());
    };
    let (nx, nu) = (first.x.len(), first.u.len());
    let mut header = vec!["run_id".to_string(), "k".to_string()];
    header.extend((1..=nx).map(|i| format!("x{i}")));
    header.extend((1..=nu).map(|i| format!("u{i}")));
    header.extend(
        ["path", "V_N", "J_tilde", "stage_cost", "cum_avg_cost", "violations"].map(String::from),
    );
    wr.write_record(&header)?;
    let num = |v: f64| v.to_string();
    for r in &campaign.runs {
        let mut total = 0.0;
        for (k, s) in r.steps.iter().enumerate() {
            total += s.stage_cost;
            let d = &s.diagnostics;
            let mut row = vec![r.run_id.to_string(), k.to_string()];
            row.extend(s.x.iter().copied().map(num));
            row.extend(s.u.iter().copied().map(num));
            row.push(d.path.as_str().to_string());
            row.push(num(d.v_n));
            row.push(d.j_tilde.map_or_else(String::new, num));
            row.push(num(s.stage_cost));
            row.push(num(total / (k + 1) as f64));
            let xs: Vec<f64> = s.x.iter().copied().collect();
            let us: Vec<f64> = s.u.iter().copied().collect();
            let violations = x_box.violations(&xs).into_iter().filter(|&b| b).count()
                + u_box.violations(&us).into_iter().filter(|&b| b).count();
            row.push(violations.to_string());
            wr.write_record(&row)?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Per-step diagnostics with the run they belong to.
#[derive(Serialize)]
struct DiagnosticsLine<'a> {
    run_id: usize,
    #[serde(flatten)]
    step: &'a StepDiagnostics,
}

/// `diagnostics.jsonl`: one JSON object per run and step.
pub fn write_diagnostics<W: Write>(campaign: &Campaign, mut out: W) -> Result<()> {
    for r in &campaign.runs {
        for s in &r.steps {
            serde_json::to_writer(&mut out, &DiagnosticsLine { run_id: r.run_id, step: &s.diagnostics })?;
            out.write_all(b"\n")?;
        }
    }
    Ok(out.flush()?)
}

pub fn write_histograms<W: Write>(bins: &[HistogramBin], out: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    for b in bins {
        wr.serialize(b)?;
    }
    wr.flush()?;
    Ok(())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut f = create(dir, name)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(dir.join(name))
}

/// `ingredients.json` for the variant's terminal ingredients.
pub fn write_ingredients(dir: &Path, scenario: &Scenario, artifacts: &OfflineArtifacts) -> Result<PathBuf> {
    write_json(dir, "ingredients.json", &artifacts.report(scenario)?)
}

/// Writes every campaign artifact into `dir` and returns the summary.
pub fn write_campaign(dir: &Path, scenario: &Scenario, artifacts: &OfflineArtifacts, campaign: &Campaign) -> Result<Summary> {
    fs::create_dir_all(dir)?;
    write_metrics(campaign, scenario, create(dir, "metrics.csv")?)?;
    write_histograms(&histograms(campaign, scenario), create(dir, "histograms.csv")?)?;
    write_diagnostics(campaign, create(dir, "diagnostics.jsonl")?)?;
    write_ingredients(dir, scenario, artifacts)?;
    write_json(dir, "scenario.json", scenario)?;
    let summary = campaign.summary(scenario);
    write_json(dir, "summary.json", &summary)?;
    Ok(summary)
}

/// Statistics recomputed from a `metrics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub runs: usize,
    pub rows: usize,
    /// Per-run sums of `stage_cost`, ordered by run id.
    pub closed_loop_costs: Vec<f64>,
    pub closed_loop_cost: super::campaign::MeanSd,
    pub backup_fraction: f64,
    /// Fraction of rows with at least one box violation.
    pub violation_fraction: f64,
}

pub fn read_metrics<R: std::io::Read>(input: R) -> Result<MetricsReport> {
    use std::collections::BTreeMap;
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| crate::Error::InvalidArgument(format!("metrics.csv lacks column {name}")))
    };
    let (run_c, cost_c, path_c, viol_c) = (col("run_id")?, col("stage_cost")?, col("path")?, col("violations")?);
    let parse = |s: &str| {
        s.parse::<f64>()
            .map_err(|e| crate::Error::InvalidArgument(format!("bad number {s:?}: {e}")))
    };
    let mut costs: BTreeMap<u64, f64> = BTreeMap::new();
    let (mut rows, mut backups, mut violated) = (0usize, 0usize, 0usize);
    for rec in rd.records() {
        let rec = rec?;
        let run = parse(&rec[run_c])? as u64;
        *costs.entry(run).or_default() += parse(&rec[cost_c])?;
        rows += 1;
        backups += usize::from(&rec[path_c] == "backup");
        violated += usize::from(parse(&rec[viol_c])? > 0.0);
    }
    let closed_loop_costs: Vec<f64> = costs.into_values().collect();
    let frac = |n: usize| if rows == 0 { 0.0 } else { n as f64 / rows as f64 };
    Ok(MetricsReport {
        runs: closed_loop_costs.len(),
        rows,
        closed_loop_cost: super::campaign::MeanSd::of(closed_loop_costs.iter().copied()),
        closed_loop_costs,
        backup_fraction: frac(backups),
        violation_fraction: frac(violated),
    })
}
