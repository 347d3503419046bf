//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data or IO errors.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use crate::bench::{self, BenchRow};
use crate::corpusgen::{self, ArchiveFormat, Corpus, CorpusSpec};
use crate::enrich::Enrichment;
use crate::jsonout::{self, JsonOptions};
use crate::pipeline::{ExecOptions, ExecutionStats, Literal, Mode, Op, Plan};
use crate::warcio::{read_record_at, RecordLocator};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cdxcorpus", version, about = "Build derived corpora from CDX-indexed web archives")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic archive corpus with ledger and CDX index.
    GenCorpus(GenCorpusArgs),
    /// Build a sorted CDX index from archive files.
    CdxGen {
        #[arg(required = true)]
        archives: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run a plan and write enriched records as JSON.
    Extract {
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long)]
        pretty: bool,
        #[arg(long)]
        base64_bytes: bool,
        /// Output path; `.gz` compresses, `-` writes to stdout.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run a plan and print the record count with IO statistics.
    Count {
        #[command(flatten)]
        plan: PlanArgs,
    },
    /// Print the archive record stored at a locator.
    Inspect {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        offset: u64,
        #[arg(long)]
        length: u64,
        #[arg(long)]
        base64_bytes: bool,
    },
    /// Run a benchmark scenario in one or both modes.
    Bench {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        scenario: Vec<u8>,
        #[arg(long, value_enum, default_value_t = BenchMode::Both)]
        mode: BenchMode,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = bench::DEFAULT_REPS)]
        reps: usize,
        #[arg(long)]
        workers: Option<usize>,
        /// Also write per-repetition rows as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct GenCorpusArgs {
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    domains: usize,
    #[arg(long, default_value_t = 20)]
    urls_per_domain: usize,
    #[arg(long, default_value_t = 5)]
    captures_per_url: usize,
    #[arg(long, default_value_t = 250)]
    records_per_file: usize,
    #[arg(long, value_enum, default_value_t = FormatArg::Warc)]
    format: FormatArg,
    #[arg(long, default_value = "internet")]
    needle: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Warc,
    Arc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BenchMode {
    Selective,
    Scan,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Selective,
    Scan,
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[arg(long = "cdx", required = true)]
    cdx: Vec<PathBuf>,
    #[arg(long)]
    archive_dir: PathBuf,
    /// Filter expression, e.g. `status == 200 && mime == "text/html"`.
    #[arg(long)]
    filter: Vec<String>,
    /// Comma-separated enrichments applied in order: response, string,
    /// html-title, map:length(<path>).
    #[arg(long)]
    enrich: Vec<String>,
    /// `<path> <op> <value>` evaluated on enriched records.
    #[arg(long, num_args = 3, value_names = ["PATH", "OP", "VALUE"])]
    derived_filter: Vec<String>,
    #[arg(long)]
    latest_per_url: bool,
    #[arg(long, value_enum, default_value_t = ModeArg::Selective)]
    mode: ModeArg,
    #[arg(long)]
    drop_errors: bool,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn data(e: impl std::fmt::Display) -> CliError {
        CliError::Data(e.to_string())
    }
}

enum PlanStep {
    Filter(String),
    Enrich(String),
    Derived(String, String, String),
    Latest,
}

/// Orders the plan flags by their position on the command line.
fn ordered_steps(args: &PlanArgs, matches: &ArgMatches) -> Vec<PlanStep> {
    let indices = |id: &str| -> Vec<usize> { matches.indices_of(id).map(|i| i.collect()).unwrap_or_default() };
    let mut steps: Vec<(usize, PlanStep)> = Vec::new();
    steps.extend(indices("filter").into_iter().zip(&args.filter).map(|(i, f)| (i, PlanStep::Filter(f.clone()))));
    for (i, spec) in indices("enrich").into_iter().zip(&args.enrich) {
        for name in spec.split(',').filter(|s| !s.trim().is_empty()) {
            steps.push((i, PlanStep::Enrich(name.trim().to_string())));
        }
    }
    let derived_idx = indices("derived_filter");
    for (chunk, idx) in args.derived_filter.chunks(3).zip(derived_idx.chunks(3)) {
        steps.push((idx[0], PlanStep::Derived(chunk[0].clone(), chunk[1].clone(), chunk[2].clone())));
    }
    if args.latest_per_url {
        steps.push((matches.index_of("latest_per_url").unwrap_or(usize::MAX), PlanStep::Latest));
    }
    steps.sort_by_key(|(i, _)| *i);
    steps.into_iter().map(|(_, s)| s).collect()
}

/// Literal for a derived-filter value: integers stay numeric, quoted text is
/// unescaped, anything else is taken verbatim as a string.
fn cli_literal(raw: &str) -> Result<Literal, CliError> {
    if raw.starts_with('"') {
        return Literal::parse(raw).map_err(|e| CliError::Usage(e.to_string()));
    }
    Ok(raw.parse().map(Literal::Int).unwrap_or_else(|_| Literal::Str(raw.to_string())))
}

fn build_plan(args: &PlanArgs, matches: &ArgMatches) -> Result<Plan, CliError> {
    let usage = |e: &dyn std::fmt::Display| CliError::Usage(e.to_string());
    let mut plan = Plan::new(args.cdx.clone(), args.archive_dir.clone());
    for step in ordered_steps(args, matches) {
        plan = match step {
            PlanStep::Filter(expr) => plan.filter(&expr).map_err(|e| usage(&e))?,
            PlanStep::Enrich(spec) => {
                let enrichment = Enrichment::parse(&spec).map_err(|e| usage(&e))?;
                plan.enrich(enrichment).map_err(|e| usage(&e))?
            }
            PlanStep::Derived(path, op, value) => {
                let op = Op::parse(&op).map_err(|e| usage(&e))?;
                plan.filter_derived_op(&path, op, cli_literal(&value)?).map_err(|e| usage(&e))?
            }
            PlanStep::Latest => plan.latest_per_url(),
        };
    }
    Ok(plan)
}

fn exec_options(args: &PlanArgs) -> ExecOptions {
    let defaults = ExecOptions::default();
    ExecOptions {
        mode: match args.mode {
            ModeArg::Selective => Mode::Selective,
            ModeArg::Scan => Mode::Scan,
        },
        workers: args.workers.unwrap_or(defaults.workers).max(1),
        drop_errors: args.drop_errors,
    }
}

fn write_stats(out: &mut dyn Write, count: usize, stats: &ExecutionStats) -> io::Result<()> {
    writeln!(out, "count\t{count}")?;
    writeln!(out, "cdx_lines_read\t{}", stats.cdx_lines_read)?;
    writeln!(out, "records_fetched\t{}", stats.records_fetched)?;
    writeln!(out, "archive_bytes_read\t{}", stats.archive_bytes_read)?;
    writeln!(out, "wall_ms\t{:.3}", stats.wall_time.as_secs_f64() * 1000.0)
}

fn run(cli: Cli, matches: &ArgMatches, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let sub = matches.subcommand().map(|(_, m)| m).expect("a subcommand is required");
    match cli.command {
        Command::GenCorpus(a) => {
            let spec = CorpusSpec {
                domains: a.domains,
                urls_per_domain: a.urls_per_domain,
                captures_per_url: a.captures_per_url,
                seed: a.seed,
                records_per_file: a.records_per_file,
                needle: a.needle,
                format: match a.format {
                    FormatArg::Warc => ArchiveFormat::Warc,
                    FormatArg::Arc => ArchiveFormat::Arc,
                },
                ..CorpusSpec::default()
            };
            spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let corpus = corpusgen::generate_corpus(&spec, &a.out).map_err(CliError::data)?;
            writeln!(
                out,
                "wrote {} records in {} archive files to {}",
                corpus.ledger.len(),
                corpus.archives.len(),
                corpus.dir.display()
            )
            .map_err(CliError::data)?;
        }
        Command::CdxGen { archives, output } => {
            let n = corpusgen::cdx_from_warc(&archives, &output).map_err(CliError::data)?;
            writeln!(out, "wrote {n} CDX lines to {}", output.display()).map_err(CliError::data)?;
        }
        Command::Extract { plan, pretty, base64_bytes, output } => {
            let built = build_plan(&plan, sub)?;
            let run = built.execute(&exec_options(&plan)).map_err(CliError::data)?;
            let opts = JsonOptions { base64_bytes, pretty };
            if output.as_os_str() == "-" {
                jsonout::write_corpus(&mut *out, &run.records, &opts).map_err(CliError::data)?;
            } else {
                jsonout::save_corpus(&run.records, &output, &opts).map_err(CliError::data)?;
            }
            write_stats(err, run.records.len(), &run.stats).map_err(CliError::data)?;
        }
        Command::Count { plan } => {
            let built = build_plan(&plan, sub)?;
            let run = built.execute(&exec_options(&plan)).map_err(CliError::data)?;
            write_stats(out, run.records.len(), &run.stats).map_err(CliError::data)?;
        }
        Command::Inspect { archive, offset, length, base64_bytes } => {
            let mut file = File::open(&archive).map_err(|e| CliError::Data(format!("{}: {e}", archive.display())))?;
            let filename = archive.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let locator = RecordLocator { filename, offset, compressed_length: length };
            let record = read_record_at(&mut file, &locator).map_err(CliError::data)?;
            let json = jsonout::warc_record_json(&record, &JsonOptions { base64_bytes, pretty: true });
            let text = serde_json::to_string_pretty(&json).expect("JSON values always serialize");
            writeln!(out, "{text}").map_err(CliError::data)?;
        }
        Command::Bench { scenario, mode, corpus, reps, workers, csv } => {
            let corpus = Corpus::open(&corpus).map_err(CliError::data)?;
            let scenarios = if scenario.is_empty() { vec![1, 2, 3] } else { scenario };
            let modes = match mode {
                BenchMode::Selective => vec![Mode::Selective],
                BenchMode::Scan => vec![Mode::Scan],
                BenchMode::Both => vec![Mode::Selective, Mode::Scan],
            };
            let workers = workers.unwrap_or(ExecOptions::default().workers);
            let mut rows: Vec<BenchRow> = Vec::new();
            for &id in &scenarios {
                for &m in &modes {
                    rows.extend(bench::run_scenario(id, m, &corpus, reps, workers).map_err(CliError::data)?);
                }
            }
            write!(out, "{}", bench::format_table(&rows)).map_err(CliError::data)?;
            if modes.len() == 2 {
                for &id in &scenarios {
                    let median = |m: Mode| {
                        let group: Vec<BenchRow> =
                            rows.iter().filter(|r| r.scenario == id && r.mode == m).cloned().collect();
                        bench::summarize(&group).map(|s| s.median.as_secs_f64())
                    };
                    if let (Some(sel), Some(scan)) = (median(Mode::Selective), median(Mode::Scan)) {
                        writeln!(out, "scenario {id}: scan/selective median ratio {:.2}", scan / sel.max(1e-9))
                            .map_err(CliError::data)?;
                    }
                }
            }
            if let Some(path) = csv {
                let file = File::create(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                bench::write_csv(BufWriter::new(file), &rows).map_err(CliError::data)?;
            }
        }
    }
    Ok(())
}

/// Runs the CLI with explicit output streams and returns the exit code.
pub fn run_cli_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return EXIT_USAGE;
        }
    };
    match run(cli, &matches, out, err) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Data(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_DATA
        }
    }
}

/// Runs the CLI against the process's stdout and stderr.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = io::stdout();
    let stderr = io::stderr();
    let mut out = stdout.lock();
    let mut err = stderr.lock();
    let code = run_cli_with(argv, &mut out, &mut err);
    let _ = out.flush();
    code
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_cli_with(std::iter::once("cdxcorpus").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(run(&["count", "--archive-dir", "."]).0, EXIT_USAGE);
        assert_eq!(run(&["count", "--cdx", "x.cdx", "--archive-dir", ".", "--filter", "status =="]).0, EXIT_USAGE);
        assert_eq!(run(&["count", "--cdx", "x.cdx", "--archive-dir", ".", "--enrich", "entities"]).0, EXIT_USAGE);
        let (code, out, _) = run(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("extract"));
    }

    #[test]
    fn missing_input_exits_two() {
        let (code, _, err) = run(&["count", "--cdx", "/nonexistent/x.cdx", "--archive-dir", "/nonexistent"]);
        assert_eq!(code, EXIT_DATA);
        assert!(err.contains("/nonexistent/x.cdx"));
    }

    #[test]
    fn flag_order_is_step_order() {
        let matches = Cli::command()
            .try_get_matches_from([
                "cdxcorpus",
                "count",
                "--cdx",
                "i.cdx",
                "--archive-dir",
                ".",
                "--latest-per-url",
                "--enrich",
                "string,map:length(payload.string)",
                "--filter",
                "status == 200",
                "--derived-filter",
                "payload.string.length",
                ">",
                "10",
            ])
            .unwrap();
        let (_, sub) = matches.subcommand().unwrap();
        let cli = Cli::from_arg_matches(&matches).unwrap();
        let Command::Count { plan } = cli.command else { panic!("count expected") };
        let built = build_plan(&plan, sub).unwrap();
        let names: Vec<String> = built.steps().iter().map(|s| format!("{s:?}")).collect();
        assert_eq!(
            names,
            vec![
                "LatestPerUrl",
                "Enrich(string)",
                "Enrich(map:length(payload.string))",
                "MetaFilter(status == 200)",
                "DerivedFilter(path(payload.string.length) > 10)",
            ]
        );
    }

    #[test]
    fn literal_forms() {
        assert_eq!(cli_literal("200").unwrap(), Literal::Int(200));
        assert_eq!(cli_literal("internet").unwrap(), Literal::Str("internet".into()));
        assert_eq!(cli_literal("\"20\"").unwrap(), Literal::Str("20".into()));
    }
}
