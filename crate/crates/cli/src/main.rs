use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gfs_core::pipeline::{
    self, adjacency_csv, eigenvalues_csv, generate_synthetic, prepare_subject, run_table, scan_prepared, sibling,
    write_text, SynthSpec,
};
use gfs_core::{BandRequest, Error, ErrorKind, ExperimentConfig, FilterMode, FilterScope};

/// Graph-spectral classification of two-class multichannel trials.
#[derive(Parser)]
#[command(name = "gfs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit on the training split and score the test split.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        subject: String,
        /// all, lf, mf, hf, ss or fixed:<k>
        #[arg(long)]
        band: BandRequest,
        /// Per-test-trial CSV; a `.summary`, `.model` and (for ss) `.cv` file are written beside it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validated accuracy for every cut-off on the training split.
    Scan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        subject: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Test accuracy (%) per band and subject.
    Table {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subject names.
        #[arg(long, value_delimiter = ',', required = true)]
        subjects: Vec<String>,
        /// Comma-separated band requests.
        #[arg(long, value_delimiter = ',', required = true)]
        bands: Vec<BandRequest>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic two-class recording.
    Synth {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        channels: usize,
        /// Trials per class.
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        separation: f64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "synth")]
        subject: String,
        #[arg(long, default_value_t = 0.5)]
        train_fraction: f64,
    },
    /// Adjacency of the training-split graph; eigenvalues go to a `.eigenvalues` sibling.
    ExportGraph {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        subject: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Directory holding `<subject>.meta`, `.f32` and `.markers.csv`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    rows_per_end: usize,
    /// Margin cost of the linear classifier.
    #[arg(long = "c", default_value_t = 1.0)]
    c: f64,
    #[arg(long)]
    log_features: bool,
    #[arg(long)]
    standardize: bool,
    #[arg(long)]
    allow_rank_reduction: bool,
    #[arg(long, value_enum, default_value_t = Scope::Recording)]
    filter_scope: Scope,
    /// Forward-backward filtering instead of a single causal pass.
    #[arg(long)]
    zero_phase: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scope {
    Recording,
    Epoch,
}

impl Common {
    fn config(&self, subject: &str) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(&self.data, subject);
        cfg.folds = self.folds;
        cfg.seed = self.seed;
        cfg.rows_per_end = self.rows_per_end;
        cfg.margin_cost = self.c;
        cfg.log_features = self.log_features;
        cfg.standardize = self.standardize;
        cfg.allow_rank_reduction = self.allow_rank_reduction;
        cfg.filter_scope = match self.filter_scope {
            Scope::Recording => FilterScope::Recording,
            Scope::Epoch => FilterScope::Epoch,
        };
        cfg.filter_mode = if self.zero_phase { FilterMode::ZeroPhase } else { FilterMode::Causal };
        cfg
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { common, subject, band, out } => {
            let mut cfg = common.config(&subject);
            cfg.band = band;
            let result = pipeline::run_experiment(&cfg)?;
            let summary = result.summary_csv();
            match out {
                Some(path) => {
                    write_text(&path, &result.trials_csv())?;
                    write_text(&sibling(&path, "summary"), &summary)?;
                    write_text(&sibling(&path, "model"), &result.model.export())?;
                    if let Some(report) = &result.cv_report {
                        write_text(&sibling(&path, "cv"), &report.to_csv())?;
                    }
                }
                None => print!("{summary}"),
            }
        }
        Command::Scan { common, subject, out } => {
            let cfg = common.config(&subject);
            cfg.validate()?;
            let report = scan_prepared(&prepare_subject(&cfg)?, &cfg)?;
            write_text(&out, &report.to_csv())?;
            println!("best cut-off {}", report.best_cutoff);
        }
        Command::Table { common, subjects, bands, out } => {
            let template = common.config(&subjects[0]);
            let table = run_table(&template, &subjects, &bands)?;
            write_text(&out, &table.to_csv())?;
            for (subject, band, msg) in table.failures() {
                eprintln!("cell {subject}/{band} failed: {msg}");
            }
        }
        Command::Synth { seed, channels, trials, separation, out, subject, train_fraction } => {
            let spec = SynthSpec {
                n_channels: channels,
                n_trials_per_class: trials,
                separation,
                train_fraction,
                ..Default::default()
            };
            std::fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            generate_synthetic(&spec, seed, &out, &subject)?;
        }
        Command::ExportGraph { common, subject, out } => {
            let cfg = common.config(&subject);
            let prepared = prepare_subject(&cfg)?;
            write_text(&out, &adjacency_csv(&prepared.graph))?;
            write_text(&sibling(&out, "eigenvalues"), &eigenvalues_csv(&prepared.spectrum))?;
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err.kind() {
        ErrorKind::Validation => 1,
        ErrorKind::Numeric => 2,
        ErrorKind::Io => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
