use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use layerscope::config::{parse_layer_range, RunConfig};
use layerscope::metrics::Analysis;
use layerscope::pipeline::{self, Failure};
use layerscope::report;
use layerscope::synth::{write_desk_corpus, DeskSpec};
use layerscope::{Error, ErrorKind};

#[derive(Parser)]
#[command(name = "layerscope", version, about = "Layerwise analyses of speech-model embeddings")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pool frame embeddings over aligned segments and cache the tables.
    Pool(RunArgs),
    /// Sample phone tokens per speaker and split speakers.
    Sample(RunArgs),
    /// Build ABX triplets for the configured contrasts.
    Triplets(RunArgs),
    /// Run the selected analyses and write results.
    Run(RunArgs),
    /// Draw one SVG per analysis from results files.
    Plot(OutputArgs),
    /// Write a markdown summary of results files.
    Report(OutputArgs),
    /// Write a small synthetic corpus with a matching config.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Analyses to run (repeatable or comma separated).
    #[arg(long = "analysis", value_delimiter = ',')]
    analyses: Vec<Analysis>,
    /// Layer selection, e.g. 0-12 or 1,4,7-9.
    #[arg(long)]
    layers: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Stop at the first failing analysis.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OutputArgs {
    /// Results JSONL files (default: OUT/results.jsonl).
    #[arg(long = "results")]
    results: Vec<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    speakers: Option<usize>,
}

struct Fatal(Error);

impl From<Error> for Fatal {
    fn from(e: Error) -> Self {
        Fatal(e)
    }
}

type CliResult<T = ()> = Result<T, Fatal>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

fn load_config(args: &RunArgs) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(&args.config)?;
    if !args.analyses.is_empty() {
        cfg.analyses = args.analyses.clone();
    }
    if let Some(l) = &args.layers {
        cfg.layers = Some(parse_layer_range(l)?);
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_pool(args: &RunArgs) -> CliResult {
    let cfg = load_config(args)?;
    let cache = cfg.output_dir.join("cache");
    for ds in &cfg.datasets {
        let pooled = pipeline::pool_dataset(&cfg, ds, Some(&cache))?;
        for w in &pooled.warnings {
            log::warn!("{}: {w}", ds.name);
        }
        let n_word = pooled.word.first().map_or(0, |t| t.len());
        println!(
            "{}: layers {:?}, {} phone segments, {} word segments",
            ds.name,
            pooled.layers,
            pooled.phone.first().map_or(0, |t| t.len()),
            n_word
        );
    }
    Ok(())
}

fn cmd_sample(args: &RunArgs, with_triplets: bool) -> CliResult {
    let cfg = load_config(args)?;
    let cache = cfg.output_dir.join("cache");
    let (inventory, contrasts) = pipeline::load_inventory(&cfg)?;
    for ds in &cfg.datasets {
        let pooled = pipeline::pool_dataset(&cfg, ds, Some(&cache))?;
        let sampled = pipeline::sample_phones(&cfg, ds, &pooled, &inventory)?;
        for w in &sampled.warnings {
            log::warn!("{}: {w}", ds.name);
        }
        let dir = cfg.output_dir.join(&ds.name);
        write_file(&dir.join("phone_sample.jsonl"), &sampled.sample.to_jsonl()?)?;
        let split = serde_json::to_string_pretty(&sampled.split).expect("split serializes");
        write_file(&dir.join("split.json"), &(split + "\n"))?;
        println!(
            "{}: {} phone tokens sampled, test speakers {:?}",
            ds.name,
            sampled.sample.rows.len(),
            sampled.split.test_speakers
        );
        if with_triplets {
            let triplets = pipeline::build_triplets(&cfg, ds, &sampled, &contrasts)?;
            for w in triplets.warnings() {
                log::warn!("{}: {w}", ds.name);
            }
            write_file(&dir.join("triplets.jsonl"), &triplets.to_jsonl()?)?;
            println!("{}: {} triplets", ds.name, triplets.triplets.len());
        }
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> CliResult {
    let cfg = load_config(args)?;
    let out = cfg.output_dir.clone();
    let outcome = pipeline::run(&cfg, Some(&out.join("cache")), args.strict)?;
    for w in &outcome.warnings {
        log::warn!("{w}");
    }
    write_file(&out.join("results.jsonl"), &report::results_to_jsonl(&outcome.results)?)?;
    write_file(&out.join("results.csv"), &report::results_to_csv(&outcome.results)?)?;
    write_errors(&out.join("errors.json"), &outcome.failures)?;
    let resolved = serde_json::to_string_pretty(&cfg).expect("config serializes");
    write_file(&out.join("config.resolved.json"), &(resolved + "\n"))?;
    println!(
        "{} result rows, {} failed analyses, written to {}",
        outcome.results.len(),
        outcome.failures.len(),
        out.display()
    );
    match outcome.failures.first() {
        None => Ok(()),
        Some(f) => Err(Fatal(match f.kind {
            ErrorKind::Config => Error::Config(f.message.clone()),
            ErrorKind::Data => Error::Data(f.message.clone()),
            ErrorKind::Numerical => Error::Numerical(f.message.clone()),
        })),
    }
}

fn write_errors(path: &Path, failures: &[Failure]) -> Result<(), Error> {
    let json = serde_json::to_string_pretty(failures).expect("failures serialize");
    write_file(path, &(json + "\n"))
}

fn output_inputs(args: &OutputArgs) -> Result<(PathBuf, Vec<layerscope::metrics::LayerwiseResult>), Error> {
    let out = match (&args.out, &args.config) {
        (Some(o), _) => o.clone(),
        (None, Some(c)) => RunConfig::load(c)?.output_dir,
        (None, None) => return Err(Error::Config("plot and report need --out or --config".into())),
    };
    let files = if args.results.is_empty() {
        vec![out.join("results.jsonl")]
    } else {
        args.results.clone()
    };
    let mut results = Vec::new();
    for f in &files {
        let text = fs::read_to_string(f).map_err(io_err(f))?;
        results.extend(report::results_from_jsonl(&text)?);
    }
    if results.is_empty() {
        return Err(Error::Data("no result rows to plot or report".into()));
    }
    Ok((out, results))
}

fn cmd_plot(args: &OutputArgs) -> CliResult {
    let (out, results) = output_inputs(args)?;
    for (key, svg) in report::render_plots(&results) {
        let path = out.join("plots").join(format!("{key}.svg"));
        write_file(&path, &svg)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_report(args: &OutputArgs) -> CliResult {
    let (out, results) = output_inputs(args)?;
    let md = report::render_report(&results);
    write_file(&out.join("report.md"), &md)?;
    print!("{md}");
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> CliResult {
    let mut spec = DeskSpec::default();
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(n) = args.speakers {
        spec.speakers = n;
    }
    let manifest = write_desk_corpus(&args.out, &spec)?;
    let config = serde_json::json!({
        "model": "synthetic",
        "seed": 1,
        "output_dir": "out",
        "datasets": [{
            "name": spec.dataset_name,
            "manifest": manifest.file_name().expect("manifest file name").to_string_lossy(),
            "phone_quota": 15,
            "n_test_speakers": 1,
            "triplet_cap": 200,
            "vocab": "vocab.txt",
            "reference_vectors": "reference.emb",
            "reference_index": "reference.json",
            "word_test_speakers": 1,
        }],
        "bootstrap": {"n_resamples": 200},
    });
    let text = serde_json::to_string_pretty(&config).expect("config serializes");
    write_file(&args.out.join("config.json"), &(text + "\n"))?;
    println!("{}", args.out.join("config.json").display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let res = match &cli.command {
        Command::Pool(a) => cmd_pool(a),
        Command::Sample(a) => cmd_sample(a, false),
        Command::Triplets(a) => cmd_sample(a, true),
        Command::Run(a) => cmd_run(a),
        Command::Plot(a) => cmd_plot(a),
        Command::Report(a) => cmd_report(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fatal(e)) => {
            let kind = e.kind();
            let report = serde_json::json!({"error": {"kind": kind, "message": e.to_string()}});
            eprintln!("{report}");
            ExitCode::from(kind.exit_code() as u8)
        }
    }
}
