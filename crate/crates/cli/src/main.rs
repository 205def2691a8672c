use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use prefsum::active::Strategy;
use prefsum::config::{RunConfig, Variant};
use prefsum::corpus::{featurize_concepts, load_cluster, ConceptUnit, EmbeddingTable};
use prefsum::eval::harness::{bundled_suite, run_ablation, run_analysis, Analysis, Grid};
use prefsum::reward::RewardMode;
use prefsum::simulate::simulate;
use prefsum::simuser::{make_synthetic_cluster, planted_utilities, GroundTruthUser, SyntheticSpec, DEFAULT_PLANTED_WEIGHTS};
use prefsum::DocumentCluster;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "prefsum", version, about = "Interactive preference-driven multi-document summarization")]
struct Cli {
    /// Seed every random choice flows from.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run configuration (JSON); flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory output artifacts are written to.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct RunFlags {
    #[arg(long)]
    unit: Option<ConceptUnit>,
    /// Concept-pair query budget.
    #[arg(long)]
    budget: Option<usize>,
    /// Summary length limit in tokens (summaries stay strictly below it).
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    reward_mode: Option<RewardMode>,
    #[arg(long)]
    reward_budget: Option<usize>,
    #[arg(long)]
    pool_size: Option<usize>,
    #[arg(long)]
    redundancy_cap: Option<f64>,
    #[arg(long)]
    user_noise: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Segment and featurize a cluster directory or cluster file.
    Ingest {
        path: PathBuf,
        #[arg(long)]
        unit: Option<ConceptUnit>,
        /// Word vectors, one `word v1 v2 ...` per line.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Run one seeded session against a simulated user.
    Simulate {
        /// Cluster directory, cluster file or ingested cluster JSON.
        #[arg(long, conflicts_with = "spec")]
        cluster: Option<PathBuf>,
        /// Synthetic cluster spec (JSON); defaults to the first bundled one.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        variant: Option<Variant>,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Run an analysis over the synthetic suite and write CSV.
    Evaluate {
        /// budget, unit, strategy, feature, ablation or all.
        #[arg(long)]
        analysis: String,
        #[command(flatten)]
        grid: GridFlags,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Compare the full pipeline with its ablated variants.
    Ablate {
        /// full, ac, pr, ge or all.
        #[arg(long, default_value = "all")]
        variant: String,
        #[command(flatten)]
        grid: GridFlags,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Serve the HTTP API until interrupted.
    Serve {
        #[arg(long, env = "PREFSUM_ADDR", default_value = prefsum_service::DEFAULT_ADDR)]
        addr: SocketAddr,
        #[arg(long, env = "PREFSUM_DATA_DIR", default_value = prefsum_service::DEFAULT_DATA_DIR)]
        data_dir: PathBuf,
    },
}

#[derive(Args)]
struct GridFlags {
    /// Number of seeds per cluster, counted up from `--seed`.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// Synthetic suite (JSON list of specs); defaults to the bundled suite.
    #[arg(long)]
    suite: Option<PathBuf>,
}

fn effective_config(cli: &Cli, flags: &RunFlags) -> Result<RunConfig> {
    let mut c = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = cli.seed {
        c.seed = v;
    }
    if let Some(v) = flags.unit {
        c.unit = v;
    }
    if let Some(v) = flags.budget {
        c.budget = v;
    }
    if let Some(v) = flags.length {
        c.length_budget = v;
    }
    if let Some(v) = flags.strategy {
        c.strategy = v;
    }
    if let Some(v) = flags.reward_mode {
        c.reward_mode = v;
    }
    if let Some(v) = flags.reward_budget {
        c.reward_budget = v;
    }
    if let Some(v) = flags.pool_size {
        c.pool_size = v;
    }
    if let Some(v) = flags.redundancy_cap {
        c.redundancy_cap = v;
    }
    if let Some(v) = flags.user_noise {
        c.user_noise = v;
    }
    c.validate()?;
    Ok(c)
}

fn write(out: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    println!("{}", path.display());
    Ok(())
}

fn echo(config: &impl serde::Serialize) {
    eprintln!("effective config:\n{}", serde_json::to_string_pretty(config).expect("config serializes"));
}

/// A prepared cluster JSON, or anything [`load_cluster`] reads.
fn read_cluster(path: &Path, unit: ConceptUnit) -> Result<DocumentCluster> {
    if path.is_file() {
        let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        if let Ok(cluster) = serde_json::from_str::<DocumentCluster>(&raw) {
            if cluster.unit != unit {
                bail!("{} holds {} concepts but the run asks for {}", path.display(), cluster.unit, unit);
            }
            let cluster = if cluster.is_featurized() { cluster } else { featurize_concepts(cluster, None)? };
            return Ok(cluster);
        }
    }
    Ok(load_cluster(path, unit, None)?)
}

fn grid(cli: &Cli, flags: &GridFlags, run: &RunFlags) -> Result<Grid> {
    let base = effective_config(cli, run)?;
    let suite = match &flags.suite {
        Some(p) => {
            let raw = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&raw).with_context(|| format!("parsing {}", p.display()))?
        }
        None => bundled_suite(),
    };
    if flags.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let grid = Grid { seeds: (base.seed..base.seed + flags.seeds).collect(), base, suite, ..Grid::default() };
    grid.validate()?;
    Ok(grid)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest { path, unit, embeddings } => {
            let flags = RunFlags { unit: *unit, ..RunFlags::default() };
            let config = effective_config(cli, &flags)?;
            echo(&config);
            let table = embeddings.as_deref().map(EmbeddingTable::load).transpose()?;
            let cluster = load_cluster(path, config.unit, table.as_ref())?;
            eprintln!(
                "{}: {} documents, {} sentences, {} {} concepts",
                cluster.id,
                cluster.documents.len(),
                cluster.sentences.len(),
                cluster.concepts.len(),
                cluster.unit
            );
            write(&cli.out, &format!("{}.cluster.json", cluster.id), &serde_json::to_string_pretty(&cluster)?)
        }
        Command::Simulate { cluster, spec, variant, run } => {
            let mut config = effective_config(cli, run)?;
            if let Some(v) = variant {
                config.variant = *v;
            }
            echo(&config);
            let (cluster, user) = match cluster {
                Some(path) => {
                    let cluster = read_cluster(path, config.unit)?;
                    if cluster.references.is_empty() {
                        bail!("{} has no reference summaries to score against", path.display());
                    }
                    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                    let u = planted_utilities(&cluster, &DEFAULT_PLANTED_WEIGHTS, 1e-3, &mut rng);
                    (cluster, GroundTruthUser::new(u, 0.0)?)
                }
                None => {
                    let spec = match spec {
                        Some(p) => {
                            let raw = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                            serde_json::from_str::<SyntheticSpec>(&raw).with_context(|| format!("parsing {}", p.display()))?
                        }
                        None => bundled_suite().remove(0),
                    };
                    let inst = make_synthetic_cluster(&SyntheticSpec { unit: config.unit, ..spec }, config.seed)?;
                    (inst.cluster, inst.user)
                }
            };
            let outcome = simulate(cluster, &user, &config)?;
            eprintln!(
                "ROUGE-1 {:.4}  ROUGE-2 {:.4}  V {:.4}  tau {:.3}",
                outcome.rouge.rouge1, outcome.rouge.rouge2, outcome.ground_truth_value, outcome.kendall_tau
            );
            write(&cli.out, "simulation.json", &serde_json::to_string_pretty(&outcome)?)
        }
        Command::Evaluate { analysis, grid: g, run } => {
            let grid = grid(cli, g, run)?;
            let analyses = if analysis.eq_ignore_ascii_case("all") {
                Analysis::ALL.to_vec()
            } else {
                vec![analysis.parse::<Analysis>()?]
            };
            echo(&grid);
            write(&cli.out, "grid.json", &serde_json::to_string_pretty(&grid)?)?;
            for a in analyses {
                let table = run_analysis(a, &grid)?;
                write(&cli.out, &format!("{a}.csv"), &table.to_csv()?)?;
            }
            Ok(())
        }
        Command::Ablate { variant, grid: g, run } => {
            let mut grid = grid(cli, g, run)?;
            if !variant.eq_ignore_ascii_case("all") {
                let v: Variant = variant.parse()?;
                grid.variants = if v == Variant::Full { vec![v] } else { vec![Variant::Full, v] };
            }
            echo(&grid);
            write(&cli.out, "grid.json", &serde_json::to_string_pretty(&grid)?)?;
            write(&cli.out, "ablation.csv", &run_ablation(&grid)?.to_csv()?)
        }
        Command::Serve { addr, data_dir } => {
            tracing_subscriber::fmt().with_writer(std::io::stderr).init();
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(prefsum_service::serve(*addr, data_dir.clone()))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
