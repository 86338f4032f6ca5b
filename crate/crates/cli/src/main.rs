//! `glyphforge` command line: dataset tools, feature extraction, training,
//! fusion, evaluation reports and the annotation server.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use glyphforge_core::dataset::{class_histogram, generate_synthetic, load_manifest, stratified_split, Split};
use glyphforge_core::eval::{run_experiment, ExperimentConfig, ExperimentResult, Method, ReportStyle};
use glyphforge_core::features::{DescriptorConfig, GaborBankSpec, LbpParams};
use glyphforge_core::fusion::{FusionConfig, FusionMethod};
use glyphforge_core::nn::{Arch, TrainConfig, TrainedModel};
use glyphforge_core::{eval, Error};
use glyphforge_service::{router, AppState};

const CRASH_ENV: &str = "GLYPHFORGE_CRASH_BEFORE_RENAME";

#[derive(Parser)]
#[command(name = "glyphforge", version, about = "Handwritten glyph recognition toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect, split or synthesize datasets.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Compute texture descriptors for every sample, one JSON line each.
    Extract(ExtractArgs),
    /// Train and evaluate one network.
    Train(TrainArgs),
    /// Evaluate a decision-level fusion of trained networks.
    Fuse(FuseArgs),
    /// Run one or more methods and render a comparison table.
    Eval(EvalArgs),
    /// Serve the annotation API (and optionally the UI bundle).
    Serve(ServeArgs),
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Class-size distribution of a manifest, as JSON.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Assign a seeded stratified train/test split.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where to write the split manifest; defaults to rewriting the input.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a synthetic glyph dataset.
    Synth {
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Descriptor {
    Lbp,
    Lgbp,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(value_enum)]
    descriptor: Descriptor,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long = "P", default_value_t = 8)]
    neighbors: usize,
    #[arg(long = "R", default_value_t = 1.0)]
    radius: f64,
    /// Cells as `COLSxROWS` or a single number for a square grid.
    #[arg(long, default_value = "4x4", value_parser = parse_grid)]
    grid: (usize, usize),
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "runs")]
    runs_dir: PathBuf,
}

#[derive(Args)]
struct NetArgs {
    /// Defaults to the architecture's own budget.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long)]
    width: Option<f64>,
    #[arg(long)]
    input_size: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    arch: Arch,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    net: NetArgs,
    /// Also copy the checkpoint here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Combiner {
    Soft,
    Hard,
    Nb,
}

#[derive(Args)]
struct FuseArgs {
    /// DCF-LA, DCF-LR, DCF-AR or DCF-LAR.
    #[arg(long)]
    preset: String,
    /// Member checkpoints as `id=path`, or bare paths named by their architecture.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    members: Vec<String>,
    #[arg(long, value_enum, default_value = "soft")]
    combiner: Combiner,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Repeat for several methods. Fusion presets use checkpoints trained
    /// earlier in the same invocation unless given with --members.
    #[arg(long = "method", required = true)]
    methods: Vec<Method>,
    #[arg(long, default_value = "table3")]
    report: ReportStyle,
    #[arg(long, value_delimiter = ',')]
    members: Vec<String>,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    net: NetArgs,
    /// Write `<out>.md` and `<out>.csv` besides printing the markdown.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// 0 picks a free port.
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Directory holding `<arch>.glyf` checkpoints for prediction.
    #[arg(long)]
    models: Option<PathBuf>,
    /// Built UI bundle served at `/`.
    #[arg(long)]
    ui: Option<PathBuf>,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad grid {s:?}"));
    match s.split_once(['x', 'X']) {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => parse(s).map(|n| (n, n)),
    }
}

enum Failure {
    Config(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config_error() {
            Failure::Config(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::from(Error::io(path, e))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Dataset(cmd) => dataset(cmd),
        Command::Extract(a) => extract(a),
        Command::Train(a) => train(a),
        Command::Fuse(a) => fuse(a),
        Command::Eval(a) => evaluate(a),
        Command::Serve(a) => serve(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn dataset(cmd: DatasetCmd) -> CliResult {
    match cmd {
        DatasetCmd::Stats { manifest } => {
            let m = load_manifest(&manifest)?;
            let report = serde_json::json!({
                "samples": m.samples.len(),
                "unlabeled": m.samples.iter().filter(|s| !s.is_labeled()).count(),
                "histogram": class_histogram(&m),
            });
            println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?);
        }
        DatasetCmd::Split { manifest, test_fraction, seed, out } => {
            let m = load_manifest(&manifest)?;
            let split = stratified_split(&m, test_fraction, seed)?;
            let out = out.unwrap_or(manifest);
            split.save(&out)?;
            let test = split.samples_in(Split::Test).count();
            println!("{} train, {test} test -> {}", split.samples.len() - test, out.display());
        }
        DatasetCmd::Synth { classes, per_class, seed, size, out } => {
            let m = generate_synthetic(classes, per_class, size, seed, &out)?;
            println!("{} samples in {} classes -> {}", m.samples.len(), m.num_classes(), out.display());
        }
    }
    Ok(())
}

fn extract(a: ExtractArgs) -> CliResult {
    let lbp = LbpParams::new(a.neighbors, a.radius).with_grid(a.grid.0, a.grid.1);
    let cfg = match a.descriptor {
        Descriptor::Lbp => DescriptorConfig::Lbp { lbp },
        Descriptor::Lgbp => DescriptorConfig::Lgbp { lbp, bank: GaborBankSpec::default() },
    };
    let extractor = cfg.extractor()?;
    let m = load_manifest(&a.manifest)?;
    let sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(fs::File::create(p).map_err(|e| io_failure(p, e))?),
        None => Box::new(io::stdout().lock()),
    };
    let mut sink = BufWriter::new(sink);
    for s in &m.samples {
        let f = extractor.extract(&m.load_image(s)?)?;
        let line = serde_json::json!({
            "id": s.id,
            "character": s.character,
            "split": s.split,
            "descriptor_id": f.descriptor_id,
            "features": f.values,
        });
        writeln!(sink, "{line}").map_err(|e| io_failure(a.out.as_deref().unwrap_or(Path::new("-")), e))?;
    }
    sink.flush().map_err(|e| io_failure(a.out.as_deref().unwrap_or(Path::new("-")), e))?;
    eprintln!("{} samples, dimension {}", m.samples.len(), cfg.dimension());
    Ok(())
}

fn experiment(run: &RunArgs, method: Method) -> ExperimentConfig {
    ExperimentConfig { runs_dir: run.runs_dir.clone(), ..ExperimentConfig::new(&run.manifest, method, run.seed) }
}

fn apply_net(cfg: &mut ExperimentConfig, arch: Arch, net: &NetArgs) {
    cfg.params.width_scale = net.width;
    cfg.params.input_size = net.input_size;
    cfg.params.train = Some(TrainConfig {
        epochs: net.epochs.unwrap_or_else(|| eval::default_epochs(arch)),
        batch_size: net.batch_size,
        learning_rate: net.lr,
        ..TrainConfig::default()
    });
}

fn summarize(r: &ExperimentResult) {
    let reused = if r.reused_checkpoint { " (reused checkpoint)" } else { "" };
    println!("{}: accuracy {}% on {} test samples{reused}", r.method, r.metrics.percent(), r.metrics.n_evaluated);
    println!("run {}", r.run_dir.display());
}

fn train(a: TrainArgs) -> CliResult {
    let mut cfg = experiment(&a.run, Method::Net(a.arch));
    apply_net(&mut cfg, a.arch, &a.net);
    let r = run_experiment(&cfg)?;
    summarize(&r);
    if let Some(out) = &a.out {
        let src = r.run_dir.join(eval::experiment::MODEL_FILE);
        fs::copy(&src, out).map_err(|e| io_failure(out, e))?;
        println!("checkpoint {}", out.display());
    }
    Ok(())
}

/// `id=path` pairs; a bare path is named after its checkpoint's architecture.
fn parse_members(specs: &[String]) -> CliResult<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for spec in specs.iter().filter(|s| !s.is_empty()) {
        let (id, path) = match spec.split_once('=') {
            Some((id, path)) => (id.to_string(), PathBuf::from(path)),
            None => {
                let path = PathBuf::from(spec);
                let arch = TrainedModel::load(&path)?.config.arch;
                (arch.to_string(), path)
            }
        };
        out.insert(id, path);
    }
    Ok(out)
}

fn fuse(a: FuseArgs) -> CliResult {
    let preset = FusionConfig::preset(&a.preset)
        .ok_or_else(|| Failure::Config(format!("unknown preset {:?}; expected one of DCF-LA, DCF-LR, DCF-AR, DCF-LAR", a.preset)))?;
    let method = match a.combiner {
        Combiner::Soft => FusionMethod::SoftVote,
        Combiner::Hard => FusionMethod::HardVote,
        Combiner::Nb => FusionMethod::NaiveBayes,
    };
    let mut cfg = experiment(&a.run, Method::Fusion(preset_name(&a.preset, method)));
    if method != FusionMethod::SoftVote {
        cfg.params.fusion = Some(FusionConfig { method, ..preset });
    }
    cfg.params.members = parse_members(&a.members)?;
    let r = run_experiment(&cfg)?;
    summarize(&r);
    Ok(())
}

/// Presets are soft votes; other combiners go through an explicit config.
fn preset_name(preset: &str, method: FusionMethod) -> String {
    if method == FusionMethod::SoftVote {
        preset.to_ascii_uppercase()
    } else {
        "fusion".into()
    }
}

fn evaluate(a: EvalArgs) -> CliResult {
    let mut members = parse_members(&a.members)?;
    let mut rows = Vec::new();
    for method in &a.methods {
        let mut cfg = experiment(&a.run, method.clone());
        match method {
            Method::Net(arch) => apply_net(&mut cfg, *arch, &a.net),
            Method::Fusion(_) => cfg.params.members = members.clone(),
            _ => {}
        }
        let r = run_experiment(&cfg)?;
        summarize(&r);
        if let Method::Net(arch) = method {
            members.entry(arch.to_string()).or_insert_with(|| r.run_dir.join(eval::experiment::MODEL_FILE));
        }
        rows.push((r.method, r.metrics));
    }
    let report = eval::render_report(&rows, a.report)?;
    println!("\n{}", report.markdown);
    if let Some(prefix) = &a.out {
        let md = prefix.with_extension("md");
        let csv = prefix.with_extension("csv");
        fs::write(&md, &report.markdown).map_err(|e| io_failure(&md, e))?;
        fs::write(&csv, &report.csv).map_err(|e| io_failure(&csv, e))?;
    }
    Ok(())
}

fn serve(a: ServeArgs) -> CliResult {
    let state = AppState::open(&a.manifest, a.models.clone())?;
    if std::env::var_os(CRASH_ENV).is_some_and(|v| !v.is_empty() && v != "0") {
        state.store.set_crash_hook(Some(Box::new(|_| std::process::abort())));
    }
    let app = router(state, a.ui.as_deref());
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Data(e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port))
            .await
            .map_err(|e| Failure::Data(format!("cannot bind {}:{}: {e}", a.host, a.port)))?;
        let addr = listener.local_addr().map_err(|e| Failure::Data(e.to_string()))?;
        println!("listening on http://{addr}");
        io::stdout().flush().ok();
        glyphforge_service::serve(listener, app).await.map_err(|e| Failure::Data(e.to_string()))
    })
}
