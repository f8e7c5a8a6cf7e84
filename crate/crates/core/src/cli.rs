//! `mrpred` command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error.
//! Diagnostics go to standard error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::cfg::{Diagnostic, LabelMap};
use crate::corpus::{self, Mr};
use crate::error::{Error, Result};
use crate::eval::{self, EvalConfig, EvaluationReport, ModelKind};
use crate::featurize;
use crate::svm::SvmParams;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mrpred", version, about = "Predict applicable metamorphic relations from control-flow graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract the feature matrix of every .dot file in a directory.
    Features {
        #[arg(long, value_name = "DIR")]
        corpus: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Label normalization overrides (`raw_prefix=token` per line).
        #[arg(long, value_name = "FILE")]
        label_map: Option<PathBuf>,
    },
    /// Generate a synthetic labeled corpus.
    Synth {
        #[arg(long, default_value_t = 62)]
        methods: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Probability that a label follows its structural motif.
        #[arg(long, default_value_t = 0.8)]
        signal: f64,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Evaluate one model on one metamorphic relation.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long, value_parser = parse_mr)]
        mr: Mr,
    },
    /// Compare SVM and label propagation on all six relations.
    Compare {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Apply a metamorphic relation's input transformation.
    Transform {
        #[arg(long, value_parser = parse_mr)]
        mr: Mr,
        /// Comma-separated numbers, e.g. "1,2,3".
        #[arg(long, allow_hyphen_values = true)]
        input: String,
        /// Constant for addition, multiplication and inclusion.
        #[arg(long, allow_hyphen_values = true)]
        c: Option<f64>,
        /// Use a seeded arbitrary permutation instead of rotate-right.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, value_name = "DIR")]
    corpus: PathBuf,
    /// Labels CSV; defaults to `<corpus>/labels.csv`.
    #[arg(long, value_name = "CSV")]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = eval::DEFAULT_REPEATS)]
    repeats: usize,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// SVM penalty parameter.
    #[arg(long, default_value_t = 1.0)]
    svm_c: f64,
    #[arg(long, default_value_t = eval::DEFAULT_TEST_FRACTION)]
    test_fraction: f64,
    #[arg(long, default_value_t = eval::DEFAULT_UNLABELED_FRACTION)]
    unlabeled_fraction: f64,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_name = "FILE")]
    label_map: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Svm,
    Labelprop,
}

fn parse_mr(s: &str) -> std::result::Result<Mr, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(cli.command, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_DATA
        }
    }
}

fn report_diagnostics(diags: &[Diagnostic], stderr: &mut dyn Write) {
    for d in diags {
        let _ = writeln!(stderr, "{d}");
    }
}

fn load_label_map(path: Option<&Path>) -> Result<LabelMap> {
    path.map_or_else(|| Ok(LabelMap::default()), LabelMap::load)
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> std::result::Result<T, Failure> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Failure::Usage("--threads must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure::Usage(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn write_report(path: &Path, report: &EvaluationReport) -> Result<()> {
    std::fs::write(path, report.to_json()?).map_err(|e| Error::io(path, e))
}

fn run_evaluation(
    run: &RunArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
    single: Option<(Mr, ModelKind)>,
) -> std::result::Result<(), Failure> {
    if run.repeats == 0 {
        return Err(Failure::Usage("--repeats must be positive".into()));
    }
    let labels_path = run.labels.clone().unwrap_or_else(|| run.corpus.join("labels.csv"));
    let label_map = load_label_map(run.label_map.as_deref())?;
    let cfg = EvalConfig {
        svm: SvmParams {
            c: run.svm_c,
            ..SvmParams::default()
        },
        test_fraction: run.test_fraction,
        unlabeled_fraction: run.unlabeled_fraction,
        repeats: run.repeats,
        seed: run.seed,
        ..EvalConfig::default()
    };
    let (diags, report) = with_threads(run.threads, || -> Result<(Vec<Diagnostic>, EvaluationReport)> {
        let (dataset, diags) = corpus::load_corpus(&run.corpus, &labels_path, &label_map)?;
        let report = match single {
            Some((mr, model)) => eval::evaluate_one(&dataset, mr, model, &cfg)?,
            None => eval::compare_all(&dataset, &cfg)?,
        };
        Ok((diags, report))
    })??;
    report_diagnostics(&diags, stderr);
    write_report(&run.out, &report)?;

    let _ = writeln!(stdout, "{:<16}{:>8}{:>12}{:>10}", "mr", "svm", "labelprop", "p");
    for (mr, s) in &report.sections {
        let fmt = |m: &Option<eval::ModelScores>| m.as_ref().map_or("-".to_string(), |m| format!("{:.3}", m.mean));
        let p = s.t_test.map_or("-".to_string(), |t| format!("{:.5}", t.p_value));
        let _ = writeln!(stdout, "{:<16}{:>8}{:>12}{:>10}", mr.name(), fmt(&s.svm), fmt(&s.labelprop), p);
    }
    Ok(())
}

fn execute(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> std::result::Result<(), Failure> {
    match command {
        Command::Features { corpus, out, label_map } => {
            let label_map = load_label_map(label_map.as_deref())?;
            let (vocab, matrix, diags) = corpus::featurize_dir(&corpus, &label_map)?;
            report_diagnostics(&diags, stderr);
            featurize::save_matrix(&out, &vocab, &matrix)?;
            let _ = writeln!(stdout, "{} methods, {} features -> {}", matrix.rows(), matrix.cols(), out.display());
        }
        Command::Synth {
            methods,
            seed,
            signal,
            out,
        } => {
            let generated = corpus::generate_synthetic(methods, seed, signal)?;
            generated.write_to(&out)?;
            let _ = writeln!(stdout, "{methods} methods -> {}", out.display());
        }
        Command::Evaluate { run, model, mr } => {
            let kind = match model {
                ModelArg::Svm => ModelKind::Svm,
                ModelArg::Labelprop => ModelKind::LabelProp,
            };
            run_evaluation(&run, stdout, stderr, Some((mr, kind)))?;
        }
        Command::Compare { run } => run_evaluation(&run, stdout, stderr, None)?,
        Command::Transform { mr, input, c, seed } => {
            let values = corpus::parse_sequence(&input).map_err(|e| Failure::Usage(e.to_string()))?;
            let out = match (mr, seed) {
                (Mr::Permutation, Some(seed)) => corpus::permute_seeded(&values, seed),
                _ => {
                    let needs_c = matches!(mr, Mr::Addition | Mr::Multiplication | Mr::Inclusion);
                    let c = match (c, needs_c) {
                        (Some(c), _) => c,
                        (None, false) => 0.0,
                        (None, true) => return Err(Failure::Usage(format!("--c is required for {mr}"))),
                    };
                    corpus::apply_mr_transform(mr, &values, c)?
                }
            };
            let _ = writeln!(stdout, "{}", corpus::format_sequence(&out));
        }
    }
    Ok(())
}
