use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use sagin_core::audit::audit_run;
use sagin_core::metrics::{write_series_csv, MetricSample};
use sagin_core::policy::{load_params, save_params, PolicyParameters, DEFAULT_ALPHA};
use sagin_core::runtime::{
    evaluate, train, write_epochs_csv, Algorithm, EdgeDomainId, Partition, RewardMode, TrainConfig,
};
use sagin_core::substrate::SubstrateNetwork;
use sagin_core::workload::{
    generate_substrate, generate_workload, parse_workload, save_workload, FunctionRequest, Range, SegmentConfig,
    SubstrateConfig, WorkloadConfig,
};

#[derive(Parser)]
#[command(name = "sagin", version, about = "Resource allocation experiments on space-air-ground substrate networks")]
struct Cli {
    /// Directory that relative output paths are written under.
    #[arg(long, global = true, env = "SAGIN_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a substrate network file.
    GenSubstrate(GenSubstrate),
    /// Generate a workload file of function requests.
    GenWorkload(GenWorkload),
    /// Train the per-domain policies and write the model and per-epoch CSV.
    Train(TrainArgs),
    /// Evaluate one algorithm and write its metric series.
    Eval(EvalArgs),
    /// Evaluate every algorithm on the same inputs and write a summary.
    Compare(CompareArgs),
    /// Replay an evaluation and re-check every embedding.
    Audit(EvalArgs),
}

#[derive(Args)]
struct GenSubstrate {
    #[arg(long, default_value_t = 10)]
    space: usize,
    #[arg(long, default_value_t = 30)]
    air: usize,
    #[arg(long, default_value_t = 60)]
    ground: usize,
    /// Probability of a link between two nodes of the same segment.
    #[arg(long, default_value_t = 0.5)]
    intra_p: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(short, long, default_value = "substrate.txt")]
    output: PathBuf,
}

#[derive(Args)]
struct GenWorkload {
    #[arg(long, default_value_t = 1000)]
    count: usize,
    /// Upper bound of the storage demand range.
    #[arg(long, default_value_t = 50)]
    sto_max: u64,
    /// Probability of a link between two request nodes.
    #[arg(long, default_value_t = 0.5)]
    link_p: f64,
    /// Poisson arrival rate per time unit.
    #[arg(long, default_value_t = 0.04)]
    arrival_rate: f64,
    /// Mean request lifetime.
    #[arg(long, default_value_t = 500.0)]
    lifetime: f64,
    /// Requests never depart.
    #[arg(long, conflicts_with = "lifetime")]
    infinite_lifetime: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(short, long, default_value = "workload.txt")]
    output: PathBuf,
}

#[derive(Args)]
struct Inputs {
    #[arg(long)]
    substrate: PathBuf,
    #[arg(long)]
    workload: PathBuf,
    /// Edge-domain assignment file; one domain per segment when omitted.
    #[arg(long)]
    partition: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Reward {
    Advantage,
    Objective,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    lr: f64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 100)]
    batch: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Reward::Advantage)]
    reward: Reward,
    /// Use the raw revenue term in the training reward.
    #[arg(long)]
    raw_reward: bool,
    /// Average the weights of all agents after each upload.
    #[arg(long)]
    fuse: bool,
    /// Model output.
    #[arg(short, long, default_value = "model.txt")]
    output: PathBuf,
    /// Per-epoch CSV output.
    #[arg(long, default_value = "training.csv")]
    csv: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgoName {
    Ddrl,
    Nrmvne,
    Random,
}

impl AlgoName {
    fn label(self) -> &'static str {
        match self {
            AlgoName::Ddrl => "ddrl",
            AlgoName::Nrmvne => "nrmvne",
            AlgoName::Random => "random",
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, value_enum)]
    algo: AlgoName,
    /// Trained model, required for ddrl.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Seed of the random baseline.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Metric series output.
    #[arg(short, long, default_value = "series.csv")]
    output: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    model: PathBuf,
    /// Seed of the random baseline.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(short, long, default_value = "compare.csv")]
    output: PathBuf,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

struct Loaded {
    substrate: SubstrateNetwork,
    workload: Vec<FunctionRequest>,
    partition: Partition,
}

impl Inputs {
    fn load(&self) -> Result<Loaded> {
        let substrate = SubstrateNetwork::load(open(&self.substrate)?)
            .with_context(|| format!("parsing {}", self.substrate.display()))?;
        let workload = parse_workload(open(&self.workload)?)
            .with_context(|| format!("parsing {}", self.workload.display()))?;
        let partition = match &self.partition {
            Some(p) => Partition::load(open(p)?, &substrate).with_context(|| format!("parsing {}", p.display()))?,
            None => Partition::per_segment(&substrate)?,
        };
        Ok(Loaded {
            substrate,
            workload,
            partition,
        })
    }

    fn describe(&self) -> String {
        let mut s = format!("substrate={} workload={}", self.substrate.display(), self.workload.display());
        if let Some(p) = &self.partition {
            s.push_str(&format!(" partition={}", p.display()));
        }
        s
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn load_model(path: &Path) -> Result<Vec<(EdgeDomainId, PolicyParameters)>> {
    load_params(open(path)?).with_context(|| format!("parsing {}", path.display()))
}

/// Creates `name` under `dir` and writes the provenance comment.
fn create(dir: &Path, name: &Path, header: &str) -> Result<(PathBuf, BufWriter<File>)> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    writeln!(w, "# sagin {header}")?;
    Ok((path, w))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().with_context(|| format!("writing {}", path.display()))
}

fn gen_substrate(out: &Path, a: &GenSubstrate) -> Result<(), Failure> {
    let defaults = SubstrateConfig::default();
    let seg = |count, base: &SegmentConfig| SegmentConfig { count, ..*base };
    let config = SubstrateConfig {
        space: seg(a.space, &defaults.space),
        air: seg(a.air, &defaults.air),
        ground: seg(a.ground, &defaults.ground),
        intra_p: a.intra_p,
        seed: a.seed,
        ..defaults
    };
    let net = generate_substrate(&config).map_err(usage)?;
    let header = format!(
        "gen-substrate seed={} space={} air={} ground={} intra_p={}",
        a.seed, a.space, a.air, a.ground, a.intra_p
    );
    let (path, mut w) = create(out, &a.output, &header)?;
    net.save(&mut w).context("writing substrate")?;
    finish(&path, w)?;
    println!(
        "wrote {} ({} nodes, {} links)",
        path.display(),
        net.node_count(),
        net.link_count()
    );
    Ok(())
}

fn gen_workload(out: &Path, a: &GenWorkload) -> Result<(), Failure> {
    let lifetime = if a.infinite_lifetime { f64::INFINITY } else { a.lifetime };
    let config = WorkloadConfig {
        count: a.count,
        sto: Range::new(1, a.sto_max),
        link_p: a.link_p,
        arrival_rate: a.arrival_rate,
        mean_lifetime: lifetime,
        seed: a.seed,
        ..WorkloadConfig::default()
    };
    let requests = generate_workload(&config).map_err(usage)?;
    let header = format!(
        "gen-workload seed={} count={} sto_max={} link_p={} arrival_rate={} lifetime={}",
        a.seed, a.count, a.sto_max, a.link_p, a.arrival_rate, lifetime
    );
    let (path, mut w) = create(out, &a.output, &header)?;
    save_workload(&requests, &mut w).context("writing workload")?;
    finish(&path, w)?;
    println!("wrote {} ({} requests)", path.display(), requests.len());
    Ok(())
}

fn cmd_train(out: &Path, a: &TrainArgs) -> Result<(), Failure> {
    let config = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        alpha: a.lr,
        seed: a.seed,
        reward: match a.reward {
            Reward::Advantage => RewardMode::Advantage,
            Reward::Objective => RewardMode::Objective,
        },
        normalize_reward: !a.raw_reward,
        fuse: a.fuse,
        ..TrainConfig::default()
    };
    config.validate().map_err(usage)?;
    let inputs = a.inputs.load()?;
    let outcome = train(&inputs.substrate, &inputs.workload, &inputs.partition, &config).map_err(anyhow::Error::from)?;

    let header = format!(
        "train {} seed={} lr={} epochs={} batch={} reward={} raw_reward={} fuse={}",
        a.inputs.describe(),
        a.seed,
        a.lr,
        a.epochs,
        a.batch,
        a.reward.to_possible_value().expect("named variant").get_name(),
        a.raw_reward,
        a.fuse
    );
    let (model_path, mut w) = create(out, &a.output, &header)?;
    save_params(&outcome.params, &mut w).context("writing model")?;
    finish(&model_path, w)?;
    let (csv_path, mut w) = create(out, &a.csv, &header)?;
    write_epochs_csv(&outcome.epochs, &mut w).context("writing training CSV")?;
    finish(&csv_path, w)?;

    if let Some(last) = outcome.epochs.last() {
        println!(
            "epoch {}: mean O {:.4}, final AR {:.4} R/C {:.4} ACR {:.4}",
            last.epoch, last.mean_objective, last.last.ar, last.last.rc, last.last.acr
        );
    }
    println!("wrote {} and {}", model_path.display(), csv_path.display());
    Ok(())
}

fn algorithm<'p>(
    name: AlgoName,
    params: &'p Option<Vec<(EdgeDomainId, PolicyParameters)>>,
    seed: u64,
) -> Result<Algorithm<'p>, Failure> {
    Ok(match name {
        AlgoName::Ddrl => Algorithm::Ddrl(
            params
                .as_deref()
                .ok_or_else(|| usage("--model is required for --algo ddrl"))?,
        ),
        AlgoName::Nrmvne => Algorithm::Nrmvne,
        AlgoName::Random => Algorithm::Random { seed },
    })
}

fn summary_line(name: &str, s: &MetricSample) -> String {
    format!(
        "{name},{:.6},{:.6},{:.6},{:.6},{},{}",
        s.ar, s.rc, s.acr, s.objective, s.accepted, s.arrived
    )
}

fn cmd_eval(out: &Path, a: &EvalArgs) -> Result<(), Failure> {
    if a.algo == AlgoName::Ddrl && a.model.is_none() {
        return Err(usage("--model is required for --algo ddrl"));
    }
    let params = a.model.as_deref().map(load_model).transpose()?;
    let inputs = a.inputs.load()?;
    let algo = algorithm(a.algo, &params, a.seed)?;
    let result = evaluate(&inputs.substrate, &inputs.workload, &inputs.partition, algo).map_err(anyhow::Error::from)?;
    let header = format!("eval {} algo={} seed={}", a.inputs.describe(), a.algo.label(), a.seed);
    let (path, mut w) = create(out, &a.output, &header)?;
    write_series_csv(&result.series, &mut w).context("writing series")?;
    finish(&path, w)?;
    let s = result.summary;
    println!(
        "{}: AR {:.4} R/C {:.4} ACR {:.4} O {:.4} ({}/{} accepted)",
        a.algo.label(),
        s.ar,
        s.rc,
        s.acr,
        s.objective,
        s.accepted,
        s.arrived
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_compare(out: &Path, a: &CompareArgs) -> Result<(), Failure> {
    let params = Some(load_model(&a.model)?);
    let inputs = a.inputs.load()?;
    let names = [AlgoName::Ddrl, AlgoName::Nrmvne, AlgoName::Random];
    let algos = names
        .iter()
        .map(|&n| algorithm(n, &params, a.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let results: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = algos
            .iter()
            .map(|&algo| {
                let inputs = &inputs;
                scope.spawn(move || evaluate(&inputs.substrate, &inputs.workload, &inputs.partition, algo))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation thread")).collect()
    });

    let header = format!("compare {} seed={}", a.inputs.describe(), a.seed);
    let (path, mut w) = create(out, &a.output, &header)?;
    writeln!(w, "algorithm,ar,rc,acr,objective,accepted,arrived").context("writing summary")?;
    println!("{:<8} {:>10} {:>8} {:>8} {:>10}", "algo", "AR", "R/C", "ACR", "O");
    for (name, result) in names.iter().zip(results) {
        let s = result.map_err(anyhow::Error::from)?.summary;
        writeln!(w, "{}", summary_line(name.label(), &s)).context("writing summary")?;
        println!(
            "{:<8} {:>10.4} {:>8.4} {:>8.4} {:>10.4}",
            name.label(),
            s.ar,
            s.rc,
            s.acr,
            s.objective
        );
    }
    finish(&path, w)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_audit(a: &EvalArgs) -> Result<bool, Failure> {
    if a.algo == AlgoName::Ddrl && a.model.is_none() {
        return Err(usage("--model is required for --algo ddrl"));
    }
    let params = a.model.as_deref().map(load_model).transpose()?;
    let inputs = a.inputs.load()?;
    let algo = algorithm(a.algo, &params, a.seed)?;
    let report = audit_run(&inputs.substrate, &inputs.workload, &inputs.partition, algo).map_err(anyhow::Error::from)?;
    for (request, v) in &report.violations {
        println!("request {request}: {v}");
    }
    if !report.conserved {
        println!("resources not restored after all departures");
    }
    println!(
        "{}: {} arrivals, {} accepted, {} departures, {} violations",
        a.algo.label(),
        report.arrivals,
        report.accepted,
        report.departures,
        report.violations.len()
    );
    Ok(report.is_clean())
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    let out = cli.out_dir.as_path();
    match &cli.command {
        Command::GenSubstrate(a) => gen_substrate(out, a).map(|_| true),
        Command::GenWorkload(a) => gen_workload(out, a).map(|_| true),
        Command::Train(a) => cmd_train(out, a).map(|_| true),
        Command::Eval(a) => cmd_eval(out, a).map(|_| true),
        Command::Compare(a) => cmd_compare(out, a).map(|_| true),
        Command::Audit(a) => cmd_audit(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
