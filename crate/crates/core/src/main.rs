use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use onn_trojan_sim::accelerator::Accelerator;
use onn_trojan_sim::campaign::{
    compare_variants, load_dataset, prepare_variants, run_campaign_with, write_outputs, CampaignConfig,
    CampaignError, CampaignReport, REPORT_FILE,
};

/// Hardware-trojan fault injection for microring-based optical CNN accelerators.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a campaign config and everything it references.
    Validate(RunArgs),
    /// Run a campaign and write report.json, results.csv and summary.json.
    Run(RunArgs),
    /// Recovery of a robust variant relative to the original model.
    Compare(CompareArgs),
    /// Rewrite results.csv and summary.json from a saved report.
    Emit(EmitArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override trials per scenario.
    #[arg(long)]
    trials: Option<usize>,
    /// Evaluate on the first N test images.
    #[arg(long)]
    subsample: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Report containing the original variant (default: the config's output).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Report containing the robust variant (default: same as --report).
    #[arg(long)]
    robust_report: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "original")]
    original: String,
    #[arg(long)]
    robust: String,
    /// Write the recovery table as JSON here instead of printing it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EmitArgs {
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: the report's directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(args: &RunArgs) -> Result<CampaignConfig, CampaignError> {
    let mut cfg = CampaignConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(n) = args.subsample {
        cfg.subsample = Some(n);
    }
    if let Some(o) = &args.out {
        cfg.output_dir = std::path::absolute(o).map_err(|e| CampaignError::Config(e.to_string()))?;
    }
    Ok(cfg)
}

fn report_path(report: &Option<PathBuf>, config: &Option<PathBuf>) -> Result<PathBuf, CampaignError> {
    match (report, config) {
        (Some(r), _) => Ok(r.clone()),
        (None, Some(c)) => Ok(CampaignConfig::load(c)?.output_path().join(REPORT_FILE)),
        (None, None) => Err(CampaignError::Config("give --report or --config".into())),
    }
}

fn validate(args: &RunArgs) -> Result<(), CampaignError> {
    let cfg = load_config(args)?;
    cfg.validate()?;
    let acc = Accelerator::build(cfg.accelerator.clone()).map_err(|e| CampaignError::Config(e.to_string()))?;
    let dataset = load_dataset(&cfg)?;
    let variants = prepare_variants(&cfg, &acc)?;
    let scenarios = cfg.scenarios.scenarios().len();
    println!("config hash   {}", cfg.hash());
    println!("accelerator   {} MRs in {} banks", acc.mr_count(), acc.bank_count());
    println!("dataset       {} images", dataset.len());
    for v in &variants {
        let s = v.model.parameter_summary();
        println!(
            "variant       {}: {} parameters ({} conv, {} fc), {} mapped slots",
            v.name,
            s.total_parameters,
            s.conv_parameters,
            s.fc_parameters,
            v.plan.mapped_slots()
        );
    }
    println!(
        "scenarios     {scenarios} x {} trials x {} variants = {} rows",
        cfg.trials,
        variants.len(),
        scenarios * cfg.trials * variants.len()
    );
    Ok(())
}

fn run(args: &RunArgs) -> Result<(), CampaignError> {
    let cfg = load_config(args)?;
    let report = run_campaign_with(&cfg, &|line| eprintln!("{line}"))?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let out = cfg.output_path();
    write_outputs(&report, &out)?;
    println!("wrote {} rows to {}", report.rows.len(), out.display());
    Ok(())
}

fn compare(args: &CompareArgs) -> Result<(), CampaignError> {
    let original_path = report_path(&args.report, &args.config)?;
    let original = CampaignReport::load(&original_path)?;
    let robust = match &args.robust_report {
        Some(p) => CampaignReport::load(p)?,
        None => original.clone(),
    };
    let rows = compare_variants(&original, &args.original, &robust, &args.robust)?;
    if let Some(out) = &args.out {
        let text = serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n";
        std::fs::write(out, text).map_err(|e| CampaignError::Runtime(format!("{}: {e}", out.display())))?;
        return Ok(());
    }
    println!("kind       scope  fraction  drop_original  drop_robust  recovery");
    for r in rows {
        println!(
            "{:<10} {:<6} {:<9} {:>13.2} {:>12.2} {:>9.2}",
            r.kind.as_str(),
            r.scope.as_str(),
            r.fraction,
            r.drop_original,
            r.drop_robust,
            r.recovery
        );
    }
    Ok(())
}

fn emit(args: &EmitArgs) -> Result<(), CampaignError> {
    let path = report_path(&args.report, &args.config)?;
    let report = CampaignReport::load(&path)?;
    let dir = match &args.out {
        Some(d) => d.clone(),
        None => path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    write_outputs(&report, &dir)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Validate(a) => validate(a),
        Command::Run(a) => run(a),
        Command::Compare(a) => compare(a),
        Command::Emit(a) => emit(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
