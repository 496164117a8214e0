use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use fearsource_cli::config::{Overrides, PipelineConfig};
use fearsource_cli::output::{ArtifactWriter, Manifest, Meta};
use fearsource_cli::pipeline::{self, Stage};
use fearsource_core::ingest::{self, SynthConfig, SyntheticData};
use fearsource_core::scores::DisentangleMode;
use fearsource_core::Grouping;
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "fearsource", version, about = "Attribute pandemic fear to media sources from survey panels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic panel with planted ground truth.
    Synth(SynthArgs),
    /// Check inputs and write validation reports.
    Validate(RunArgs),
    /// Reconstruct active infections from surveillance counts.
    Epi(RunArgs),
    /// Usage and fear scores with disentanglement.
    Score(RunArgs),
    /// Normality, distribution and correlation tests.
    Stats(RunArgs),
    /// Variance attribution to age, education and source.
    Causal(RunArgs),
    /// State clustering and comparison with election outcomes.
    Cluster(RunArgs),
    /// Every stage in order.
    RunAll(RunArgs),
    /// Summarize a finished output directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Generator settings (TOML); defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for the generated inputs.
    #[arg(long, default_value = "synthetic")]
    out: PathBuf,
    #[arg(long)]
    days: Option<u32>,
    /// Number of states, taken in alphabetical order.
    #[arg(long)]
    states: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_grouping)]
    grouping: Option<Grouping>,
    #[arg(long, value_parser = parse_mode)]
    disentangle_mode: Option<DisentangleMode>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    /// Smoothing window in days (odd).
    #[arg(long)]
    window: Option<u32>,
    #[arg(long)]
    survey: Option<PathBuf>,
    #[arg(long)]
    surveillance: Option<PathBuf>,
    #[arg(long)]
    elections: Option<PathBuf>,
    #[arg(long)]
    bonferroni: bool,
    /// Z-score cluster features before k-means.
    #[arg(long)]
    standardize: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Output directory of an earlier run.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn parse_grouping(s: &str) -> Result<Grouping, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_mode(s: &str) -> Result<DisentangleMode, String> {
    s.parse().map_err(|e| format!("{e}"))
}

impl RunArgs {
    fn resolve(self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        cfg.apply(Overrides {
            survey: self.survey,
            surveillance: self.surveillance,
            elections: self.elections,
            grouping: self.grouping,
            window: self.window,
            disentangle_mode: self.disentangle_mode,
            k_min: self.k_min,
            k_max: self.k_max,
            seed: self.seed,
            out: self.out,
            bonferroni: self.bonferroni,
            standardize: self.standardize,
        });
        Ok(cfg)
    }
}

fn run_stages(args: RunArgs, stages: &[Stage]) -> Result<()> {
    let cfg = args.resolve()?;
    let summary = pipeline::run(&cfg, stages)?;
    for s in &summary.stages {
        match &s.note {
            Some(note) => println!("{:<9} {:?}: {note}", s.name, s.status),
            None => println!("{:<9} {:?}", s.name, s.status),
        }
    }
    println!("outputs in {}", summary.out_dir.display());
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            SynthConfig::from_toml(&text)?
        }
        None => SynthConfig::default(),
    };
    if let Some(days) = args.days {
        cfg.days = days;
    }
    if let Some(n) = args.states {
        cfg.states.truncate(n);
    }
    cfg.validate()?;
    let data = SyntheticData::generate(&cfg, args.seed)?;
    let digest = hex::encode(Sha256::digest(cfg.to_toml().as_bytes()));
    let mut out = ArtifactWriter::new(&args.out, Meta::new(args.seed, &digest))?;
    out.set_stage("synth");
    out.text("panel.csv", |b| Ok(ingest::write_panel(&data.panel, b)?))?;
    out.text("surveillance.csv", |b| Ok(ingest::write_surveillance(&data.surveillance, b)?))?;
    out.text("elections.csv", |b| Ok(ingest::write_elections(data.elections.values(), b)?))?;
    out.json("truth.json", &data.truth)?;
    out.text("synth.toml", |b| {
        b.extend_from_slice(cfg.to_toml().as_bytes());
        Ok(())
    })?;
    let pipeline = PipelineConfig {
        survey: Some("panel.csv".into()),
        surveillance: Some("surveillance.csv".into()),
        elections: Some("elections.csv".into()),
        seed: args.seed,
        ..PipelineConfig::default()
    };
    out.text("pipeline.toml", |b| {
        b.extend_from_slice(toml::to_string(&pipeline)?.as_bytes());
        Ok(())
    })?;
    out.write_manifest(&[])?;
    println!(
        "wrote {} rows for {} states to {}",
        data.panel.len(),
        cfg.states.len(),
        args.out.display()
    );
    Ok(())
}

fn report(out: &Path) -> Result<()> {
    let manifest = Manifest::load(out)?;
    println!("{} {} seed={} config={}", manifest.tool, manifest.version, manifest.seed, manifest.config);
    for s in &manifest.stages {
        match &s.note {
            Some(note) => println!("  {:<9} {:?}: {note}", s.name, s.status),
            None => println!("  {:<9} {:?}", s.name, s.status),
        }
    }
    println!("  {} artifacts", manifest.artifacts.len());
    let attribution = out.join("causal/attribution.json");
    if attribution.is_file() {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&attribution)?)?;
        println!("attribution:");
        if let Some(shares) = v["attribution"]["shares"].as_object() {
            for (driver, share) in shares {
                println!("  {driver:<10} {:.4}", share.as_f64().unwrap_or(f64::NAN));
            }
        }
        if let Some(r) = v["attribution"]["residual"].as_f64() {
            println!("  {:<10} {r:.4}", "residual");
        }
    }
    let mut clusters: Vec<_> = fs::read_dir(out.join("cluster"))
        .map(|d| d.filter_map(|e| e.ok()).map(|e| e.path()).collect())
        .unwrap_or_default();
    clusters.retain(|p| p.extension().is_some_and(|e| e == "json"));
    clusters.sort();
    if !clusters.is_empty() {
        println!("clustering (k, accuracy per year):");
    }
    for path in clusters {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path)?)?;
        let acc: Vec<String> = v["comparisons"]
            .as_array()
            .into_iter()
            .flatten()
            .map(|c| format!("{}={:.3}", c["year"], c["accuracy"].as_f64().unwrap_or(f64::NAN)))
            .collect();
        println!(
            "  {:<24} k={} {}",
            path.file_stem().unwrap_or_default().to_string_lossy(),
            v["selected_k"],
            acc.join(" ")
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FEARSOURCE_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Validate(a) => run_stages(a, &[Stage::Validate]),
        Command::Epi(a) => run_stages(a, &[Stage::Epi]),
        Command::Score(a) => run_stages(a, &[Stage::Score]),
        Command::Stats(a) => run_stages(a, &[Stage::Stats]),
        Command::Causal(a) => run_stages(a, &[Stage::Causal]),
        Command::Cluster(a) => run_stages(a, &[Stage::Cluster]),
        Command::RunAll(a) => run_stages(a, &Stage::ALL),
        Command::Report(a) => report(&a.out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
