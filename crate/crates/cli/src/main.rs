//! `tbcough` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use tbcough_core::dataset::manifest::{export_dataset, load_manifest};
use tbcough_core::dataset::{FeatureMode, FeatureTable, SyntheticConfig};
use tbcough_core::experiment::{
    plots, run_experiment, write_outputs, AtomicWriter, ExperimentConfig, FamilySelection,
    ModeSelection, RunReport,
};
use tbcough_core::splits::audit_plan_csv;
use tbcough_core::{Error, ErrorClass, Result};

const DEFAULT_OUT: &str = "tbcough-out";

#[derive(Parser)]
#[command(name = "tbcough", version, about = "Cough-based TB screening pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract per-recording features from a manifest into a CSV file.
    Features {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory that audio paths are relative to; defaults to the manifest's.
        #[arg(long)]
        audio_root: Option<PathBuf>,
        #[arg(long, default_value = "fused")]
        feature_mode: FeatureMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full nested experiment and write reports and plots.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "TBCOUGH_OUT")]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        feature_mode: Option<ModeSelection>,
        #[arg(long)]
        model: Option<FamilySelection>,
        /// Miscoverage level; repeat for several.
        #[arg(long = "alpha")]
        alphas: Vec<f64>,
    },
    /// Generate a synthetic dataset as WAV files plus a manifest.
    Synth {
        /// JSON file with generator settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_coughers: Option<usize>,
        #[arg(long, env = "TBCOUGH_OUT")]
        out: PathBuf,
    },
    /// Verify that an exported fold plan is cougher-disjoint.
    Audit { plan: PathBuf },
    /// Re-render plots from a report.
    Plot {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, env = "TBCOUGH_OUT")]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Leakage => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Features {
            manifest,
            audio_root,
            feature_mode,
            out,
        } => features(&manifest, audio_root, feature_mode, &out),
        Command::Run {
            config,
            seed,
            out,
            jobs,
            feature_mode,
            model,
            alphas,
        } => {
            let mut cfg = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::default(),
            };
            if let Some(s) = seed {
                cfg.set_seed(s);
            }
            if let Some(j) = jobs {
                cfg.jobs = Some(j);
            }
            if let Some(m) = feature_mode {
                cfg.feature_mode = m;
            }
            if let Some(m) = model {
                cfg.model = m;
            }
            if !alphas.is_empty() {
                cfg.alphas = alphas;
            }
            let dir = out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
            run(&cfg, &dir)
        }
        Command::Synth {
            config,
            seed,
            n_coughers,
            out,
        } => {
            let mut cfg: SyntheticConfig = match config {
                Some(p) => {
                    let text = fs::read_to_string(&p)
                        .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                    serde_json::from_str(&text)
                        .map_err(|e| Error::Config(format!("config: {e}")))?
                }
                None => SyntheticConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = n_coughers {
                cfg.n_coughers = n;
            }
            cfg.validate()?;
            let ds = tbcough_core::dataset::generate_synthetic(&cfg)?;
            let manifest = export_dataset(&ds, &out)?;
            let s = ds.summary();
            println!(
                "wrote {} coughers ({} positive), {} recordings to {}",
                s.coughers,
                s.positive_coughers,
                s.recordings,
                manifest.display()
            );
            Ok(())
        }
        Command::Audit { plan } => {
            let file = fs::File::open(&plan).map_err(|_| Error::MissingFile(plan.clone()))?;
            let a = audit_plan_csv(file)?;
            println!(
                "ok: {} coughers, {} outer folds, {} rows, no cougher shared between roles",
                a.coughers, a.outer_folds, a.rows
            );
            Ok(())
        }
        Command::Plot { report, out } => {
            let text =
                fs::read_to_string(&report).map_err(|_| Error::MissingFile(report.clone()))?;
            let r: RunReport = serde_json::from_str(&text)?;
            let mut w = AtomicWriter::new(&out)?;
            for (name, svg) in plots::render_all(&r)? {
                if let Err(e) = w.write(&name, svg.as_bytes()) {
                    w.rollback();
                    return Err(e);
                }
            }
            println!("wrote {} plots to {}", w.written().len(), out.display());
            Ok(())
        }
    }
}

fn features(
    manifest: &Path,
    audio_root: Option<PathBuf>,
    mode: FeatureMode,
    out: &Path,
) -> Result<()> {
    let root =
        audio_root.unwrap_or_else(|| manifest.parent().map(Path::to_path_buf).unwrap_or_default());
    let loaded = load_manifest(manifest, &root)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    let table = FeatureTable::build(&loaded.dataset)?;
    let mut bytes = Vec::new();
    table.write_csv(&mut bytes, &loaded.dataset, mode)?;
    let dir = out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = out
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Config(format!("bad output path {}", out.display())))?;
    AtomicWriter::new(dir)?.write(name, &bytes)?;
    println!(
        "wrote {} rows x {} features to {}",
        table.len(),
        mode.dim(),
        out.display()
    );
    Ok(())
}

fn run(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    cfg.validate()?;
    let start = Instant::now();
    let report = run_experiment(cfg)?;
    let elapsed = start.elapsed().as_secs_f64();
    let written = write_outputs(&report, dir)?;
    let timing = serde_json::json!({
        "wall_clock_seconds": elapsed,
        "jobs": cfg.jobs,
    });
    AtomicWriter::new(dir)?.write(
        "timing.json",
        serde_json::to_string_pretty(&timing)?.as_bytes(),
    )?;
    for block in &report.blocks {
        let aucs: Vec<f64> = block
            .folds
            .iter()
            .filter_map(|f| f.cougher.metrics.roc_auc)
            .collect();
        let mean = aucs.iter().sum::<f64>() / aucs.len().max(1) as f64;
        println!(
            "{} {}: mean cougher ROC AUC {:.3} over {} folds",
            block.mode.as_str(),
            block.family.as_str(),
            mean,
            block.folds.len()
        );
    }
    println!(
        "wrote {} files to {} in {:.1} s",
        written.len() + 1,
        dir.display(),
        elapsed
    );
    Ok(())
}
