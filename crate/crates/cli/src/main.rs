//! `mialab` command line: generate data, train a target, attack it, sweep
//! interrogation settings and turn score tables into reports and plots.
//!
//! Failures print a single `error[<kind>]: <message>` line on stderr. Usage
//! and config errors exit with status 2, everything else with 1.

use std::fmt::Write as _;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mialab::binio::write_atomic;
use mialab::data::{load_dataset, write_dataset, Dataset, SplitRole};
use mialab::detectors::ScoreTable;
use mialab::evaluation::{report, write_report, GridPoint, Metrics};
use mialab::experiment::{load_data, roc_svg, run_attack, run_sweep, split, train_target, DataSource, RunConfig};
use mialab::model::{load_checkpoint, write_checkpoint};
use mialab::{Error, Model};

#[derive(Parser)]
#[command(name = "mialab", version, about = "Membership-inference laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the config's synthetic dataset to a MIAD file.
    SynthData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the target model; the history CSV lands next to the checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Dataset file to use instead of the config's data source.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the configured detectors and score the attack-test split.
    Attack {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score attack-validation over the interrogation grid and pick a setting.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Trained target; trained from the config when omitted.
        #[arg(long, requires = "data")]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics report and ROC plot for one or more score tables.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        scores: Vec<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Plot the false-positive rate on a log axis.
        #[arg(long)]
        log_fpr: bool,
        /// Seed recorded in the report rows.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// An error plus the exit status it maps to.
struct Failure {
    error: Error,
    status: u8,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let status = if matches!(error, Error::Config { .. }) { 2 } else { 1 };
        Failure { error, status }
    }
}

type CliResult<T> = Result<T, Failure>;

fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure {
        error: Error::Config {
            line: 0,
            msg: format!("cannot read {}: {e}", path.display()),
        },
        status: 2,
    })?;
    RunConfig::parse(&text).map_err(|error| Failure { error, status: 2 })
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    Ok(write_atomic(path, bytes)?)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::from(Error::from(e)))
}

fn synth_data(config: Option<&Path>, out: &Path) -> CliResult<()> {
    let cfg = match config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if matches!(cfg.data, DataSource::File(_)) {
        return Err(Failure {
            error: Error::Config {
                line: 0,
                msg: "synth-data needs data.source = synth".into(),
            },
            status: 2,
        });
    }
    let ds = load_data(&cfg)?;
    let mut buf = Vec::new();
    write_dataset(&ds, &mut buf)?;
    write_file(out, &buf)
}

fn dataset(cfg: &RunConfig, data: Option<&Path>) -> CliResult<Dataset<f64>> {
    Ok(match data {
        Some(p) => load_dataset(p)?,
        None => load_data(cfg)?,
    })
}

/// `model.bin` → `model.history.csv` in the same directory.
fn history_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    out.with_file_name(format!("{stem}.history.csv"))
}

fn train(config: &Path, data: Option<&Path>, out: &Path) -> CliResult<()> {
    let cfg = load_config(config)?;
    let ds = dataset(&cfg, data)?;
    let plan = split(&cfg, &ds)?;
    let (model, history) = train_target(&cfg, &ds, &plan)?;
    let mut buf = Vec::new();
    write_checkpoint(&model, &mut buf)?;
    write_file(out, &buf)?;
    let mut csv = Vec::new();
    history.write_csv(&mut csv)?;
    write_file(&history_path(out), &csv)
}

fn attack(model: &Path, data: &Path, config: &Path, out: &Path) -> CliResult<()> {
    let cfg = load_config(config)?;
    let ds = load_dataset(data)?;
    let model: Model<f64> = load_checkpoint(model)?;
    let output = run_attack(&cfg, &model, &ds)?;
    let mut buf = Vec::new();
    output.table.write_csv(&mut buf)?;
    write_file(out, &buf)
}

const VALIDATION_HEADER: &str = "steps,lr,clip,group,auc,tpr_at_1pct,tpr_at_0p1pct,pauc_at_1pct,n_members,n_nonmembers";

fn validation_csv(rows: &[(GridPoint, Metrics)]) -> String {
    let mut s = format!("{VALIDATION_HEADER}\n");
    for (p, m) in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            p.steps,
            p.lr,
            p.clip,
            p.group,
            m.auc,
            m.tpr_at_1pct,
            m.tpr_at_0p1pct,
            m.pauc_at_1pct,
            m.n_members,
            m.n_nonmembers
        );
    }
    s
}

fn sweep(config: &Path, model: Option<&Path>, data: Option<&Path>, out: &Path) -> CliResult<()> {
    let cfg = load_config(config)?;
    let ds = dataset(&cfg, data)?;
    let model = match model {
        Some(p) => load_checkpoint(p)?,
        None => train_target(&cfg, &ds, &split(&cfg, &ds)?)?.0,
    };
    let output = run_sweep(&cfg, &model, &ds)?;
    create_dir(out)?;
    write_file(&out.join("validation.csv"), validation_csv(&output.rows).as_bytes())?;
    let c = output.chosen;
    let chosen = format!(
        "# selected on attack-validation by {} boosted pAUC@1%: steps={} lr={} clip={} group={}\n{}",
        cfg.sweep.detector,
        c.steps,
        c.lr,
        c.clip,
        c.group,
        output.chosen_config.to_text()
    );
    write_file(&out.join("chosen.cfg"), chosen.as_bytes())
}

fn emit_report(scores: &[PathBuf], out: &Path, log_fpr: bool, seed: u64) -> CliResult<()> {
    let mut tables = Vec::with_capacity(scores.len());
    let mut rows = Vec::new();
    for path in scores {
        let file = std::fs::File::open(path).map_err(|e| Failure::from(Error::from(e)))?;
        let table = ScoreTable::read_csv(BufReader::new(file), SplitRole::AttackTest).map_err(|e| {
            Failure::from(Error::Format {
                what: "score table",
                detail: format!("{}: {e}", path.display()),
            })
        })?;
        rows.extend(report(&table, seed)?);
        tables.push(table);
    }
    create_dir(out)?;
    let mut buf = Vec::new();
    write_report(&rows, &mut buf)?;
    write_file(&out.join("report.csv"), &buf)?;
    write_file(&out.join("roc.svg"), roc_svg(&tables, log_fpr)?.as_bytes())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::SynthData { config, out } => synth_data(config.as_deref(), &out),
        Command::Train { config, data, out } => train(&config, data.as_deref(), &out),
        Command::Attack {
            model,
            data,
            config,
            out,
        } => attack(&model, &data, &config, &out),
        Command::Sweep {
            config,
            model,
            data,
            out,
        } => sweep(&config, model.as_deref(), data.as_deref(), &out),
        Command::Report {
            scores,
            out,
            log_fpr,
            seed,
        } => emit_report(&scores, &out, log_fpr, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { error, status }) => {
            let message = error.to_string().replace('\n', " ");
            eprintln!("error[{}]: {message}", error.kind());
            ExitCode::from(status)
        }
    }
}
