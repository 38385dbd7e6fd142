use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sddpc::experiments::{self, run_campaign, run_offline, RepresentationKind, Scenario, Variant};
use sddpc::Error;

#[derive(Parser)]
#[command(name = "sddpc", version, about = "Data-driven stochastic predictive control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect offline data and write data.json and data.csv.
    Collect(Common),
    /// Synthesise terminal ingredients and write ingredients.json.
    Synth(Common),
    /// One closed-loop run.
    Run(Common),
    /// Independent closed-loop runs with metrics, histograms and diagnostics.
    Campaign(Common),
    /// Summarise metrics.csv of one or more output directories.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
    /// Print a preset scenario as JSON.
    Scenario {
        #[arg(long, default_value = "scalar_case1")]
        preset: String,
    },
}

#[derive(Args)]
struct Common {
    /// Named scenario: scalar_case1, scalar_case2 or batch_reactor.
    #[arg(long, conflicts_with = "scenario")]
    preset: Option<String>,
    /// Scenario JSON file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// I | II | III (or measured | estimated | identified_model).
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long, value_parser = parse_representation)]
    representation: Option<RepresentationKind>,
    /// Closed-loop runs.
    #[arg(long)]
    samples: Option<usize>,
    /// Steps per run.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn parse_representation(s: &str) -> Result<RepresentationKind, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| {
        format!("unknown representation {s:?}; expected hankel, predictor or model")
    })
}

impl Common {
    fn scenario(&self) -> sddpc::Result<Scenario> {
        let mut s = match (&self.preset, &self.scenario) {
            (_, Some(path)) => Scenario::from_json(&fs::read_to_string(path)?)?,
            (Some(name), None) => Scenario::preset(name)?,
            (None, None) => {
                return Err(Error::InvalidArgument("give --preset or --scenario".into()));
            }
        };
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(v) = self.variant {
            s.variant = v;
        }
        if let Some(r) = self.representation {
            s.representation = r;
        }
        if let Some(n) = self.samples {
            s.samples = n;
        }
        if let Some(n) = self.steps {
            s.steps = n;
        }
        s.validate()?;
        Ok(s)
    }
}

fn collect(args: &Common) -> sddpc::Result<()> {
    let s = args.scenario()?;
    let art = run_offline(&s, s.variant)?;
    fs::create_dir_all(&args.out)?;
    experiments::write_json(&args.out, "data.json", &art.record)?;
    art.record.write_csv(BufWriter::new(File::create(args.out.join("data.csv"))?))?;
    println!(
        "collected {} samples ({} attempt(s)), window {} -> {}",
        art.record.len(),
        art.pe_attempts,
        art.window.len(),
        args.out.display()
    );
    Ok(())
}

fn synth(args: &Common) -> sddpc::Result<()> {
    let s = args.scenario()?;
    let art = run_offline(&s, s.variant)?;
    let path = experiments::write_ingredients(&args.out, &s, &art)?;
    let t = &art.terminal;
    println!("K = {}", fmt_rows(&t.k));
    println!("P = {}", fmt_rows(&t.p));
    println!("Gamma = {}", fmt_rows(&t.gamma));
    println!("level = {:e}, alpha = {:.6}", t.gamma_level, art.alpha(&s)?);
    println!("wrote {}", path.display());
    if !art.assumption.pass {
        return Err(Error::Synthesis("terminal assumption does not hold".into()));
    }
    Ok(())
}

fn campaign(args: &Common, single: bool) -> sddpc::Result<()> {
    let mut s = args.scenario()?;
    if single {
        s.samples = 1;
    }
    let art = run_offline(&s, s.variant)?;
    let c = run_campaign(&s, &art)?;
    let summary = experiments::write_campaign(&args.out, &s, &art, &c)?;
    let long_run = match summary.long_run_stage_cost.count {
        0 => "n/a".to_string(),
        _ => format!("{:.6}", summary.long_run_stage_cost.mean),
    };
    println!(
        "{} run(s) x {} steps, variant {}: J_cl = {:.6} (sd {:.6}), long-run stage cost {long_run} vs alpha {:.6}",
        summary.runs,
        s.steps,
        s.variant.label(),
        summary.closed_loop_cost.mean,
        summary.closed_loop_cost.sd,
        summary.alpha
    );
    println!(
        "backup steps {}, max slack {:.2e}, wrote {}",
        summary.backup_steps,
        summary.max_slack,
        args.out.display()
    );
    if let Some((id, e)) = summary.failed_runs.first() {
        return Err(Error::Infeasible {
            step: 0,
            reason: format!("{} run(s) failed; run {id}: {e}", summary.failed_runs.len()),
        });
    }
    Ok(())
}

fn report(dirs: &[PathBuf]) -> sddpc::Result<()> {
    let mut reports = Vec::new();
    for d in dirs {
        let r = experiments::read_metrics(File::open(d.join("metrics.csv"))?)?;
        println!(
            "{}: {} runs, J_cl mean {:.6} sd {:.6}, backup {:.3}, violating rows {:.4}",
            d.display(),
            r.runs,
            r.closed_loop_cost.mean,
            r.closed_loop_cost.sd,
            r.backup_fraction,
            r.violation_fraction
        );
        reports.push((d, r));
    }
    for (i, (da, a)) in reports.iter().enumerate() {
        for (db, b) in &reports[i + 1..] {
            let worst = a
                .closed_loop_costs
                .iter()
                .zip(&b.closed_loop_costs)
                .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max);
            println!("{} vs {}: max relative J_cl difference {worst:.3e}", da.display(), db.display());
        }
    }
    Ok(())
}

fn fmt_rows(m: &nalgebra::DMatrix<f64>) -> String {
    let rows: Vec<String> = m
        .row_iter()
        .map(|r| r.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" "))
        .collect();
    format!("[{}]", rows.join("; "))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::DimensionMismatch(_) | Error::Json(_) => 2,
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Collect(a) => collect(a),
        Command::Synth(a) => synth(a),
        Command::Run(a) => campaign(a, true),
        Command::Campaign(a) => campaign(a, false),
        Command::Report { dirs } => report(dirs),
        Command::Scenario { preset } => Scenario::preset(preset).and_then(|s| {
            println!("{}", serde_json::to_string_pretty(&s)?);
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
