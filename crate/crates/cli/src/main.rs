use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::{Parser, Subcommand, ValueEnum};

use dsm_cli::analyze::{analyze, render_text};
use dsm_cli::config::{cells, parse_config};
use dsm_cli::error::{CliError, Result};
use dsm_cli::input::read_studies;
use dsm_cli::results::{read_results, write_results};
use dsm_cli::summarize::{parse_facet, summarize, write_summary, Appendix};
use dsm_core::simulation::run_grid_with_progress;

#[derive(Parser)]
#[command(
    name = "dsm",
    version,
    about = "Random-effects meta-analysis of differences of standardized means"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate heterogeneity and the overall effect from a study file.
    Analyze {
        /// CSV of studies (`-` for stdin).
        input: PathBuf,
        /// Confidence level of every interval.
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a simulation grid and write long-format results.
    Simulate {
        /// `key = value` config file.
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reps: Option<usize>,
        /// Worker threads.
        #[arg(long, env = "DSM_WORKERS")]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the cell labels and exit.
        #[arg(long)]
        list: bool,
        /// No progress on stderr.
        #[arg(long, short)]
        quiet: bool,
    },
    /// Reshape simulation results into plot-ready tables.
    Summarize {
        results: PathBuf,
        /// Appendix A-F; repeat for several (all when omitted).
        #[arg(long)]
        appendix: Vec<String>,
        /// Comma-separated keys defining each figure.
        #[arg(long)]
        facet: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    if path == Path::new("-") {
        io::stdin()
            .read_to_end(&mut buf)
            .map_err(|e| CliError::io("<stdin>", e))?;
    } else {
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| CliError::io(path, e))?;
    }
    Ok(buf)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::io(p, e))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze {
            input,
            level,
            format,
            out,
        } => {
            let (_, records) = read_studies(read_input(&input)?.as_slice())?;
            let report = analyze(&records, level)?;
            let mut w = output(out.as_deref())?;
            let text = match format {
                Format::Json => serde_json::to_string_pretty(&report)? + "\n",
                Format::Text => render_text(&report),
            };
            w.write_all(text.as_bytes())
                .and_then(|_| w.flush())
                .map_err(|e| CliError::io("<output>", e))?;
            if report.all_failed() {
                return Err(CliError::AllFailed);
            }
        }
        Command::Simulate {
            config,
            seed,
            reps,
            workers,
            out,
            list,
            quiet,
        } => {
            let text = String::from_utf8(read_input(&config)?)
                .map_err(|_| CliError::Input(format!("{}: not UTF-8", config.display())))?;
            let mut spec = parse_config(&text)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(r) = reps {
                spec.reps = r;
            }
            let design = cells(&spec)?;
            if list {
                let mut w = output(out.as_deref())?;
                for c in &design {
                    writeln!(w, "{}", c.label()).map_err(|e| CliError::io("<output>", e))?;
                }
                return w.flush().map_err(|e| CliError::io("<output>", e));
            }
            let workers = workers.unwrap_or_else(default_workers);
            if workers == 0 {
                return Err(CliError::Input("workers must be at least 1".into()));
            }
            let done = AtomicUsize::new(0);
            let total = design.len();
            let metrics = run_grid_with_progress(&design, workers, |i| {
                let n = done.fetch_add(1, Ordering::Relaxed) + 1;
                if !quiet {
                    eprintln!("[{n}/{total}] {}", design[i].label());
                }
            })?;
            let mut w = output(out.as_deref())?;
            write_results(&mut w, &metrics)?;
        }
        Command::Summarize {
            results,
            appendix,
            facet,
            out,
        } => {
            let appendices = if appendix.is_empty() {
                Appendix::ALL.to_vec()
            } else {
                appendix
                    .iter()
                    .map(|a| Appendix::parse(a))
                    .collect::<Result<_>>()?
            };
            let facet = facet.as_deref().map(parse_facet).transpose()?;
            let rows = read_results(read_input(&results)?.as_slice())?;
            let summary = summarize(&rows, &appendices, facet.as_deref())?;
            write_summary(output(out.as_deref())?, &summary)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
