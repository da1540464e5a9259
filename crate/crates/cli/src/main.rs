use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use log::info;

use ramp_core::config::{BackendKind, EngineConfig};
use ramp_core::eval::{
    self, file_digest, results_jsonl, run_ablation, run_suite, success_rate, summary_table, sweep_lambda,
    timings_jsonl, DetectionFixture, EpisodeRecord, EvalContext, Planner, Suite,
};
use ramp_core::gateway::{Cassette, CompletionBackend, GeneratorGateway, HttpBackend, ImitationBackend, LlmMode};
use ramp_core::retrieval::{rewrite_instruction, EmbeddingScore, LexicalIndex, Metric};
use ramp_core::{assemble, generate_task, run_pipeline, Codebase, HashingEmbedder, PromptTemplate, Query, TaskFamily};

const EMBEDDING_DIM: usize = 256;

#[derive(Parser)]
#[command(
    name = "ramp",
    version,
    about = "Retrieval-augmented multimodal planner for a tabletop simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load the codebase and print index statistics.
    Index {
        #[command(flatten)]
        common: Common,
    },
    /// Print the ranked demonstrations for a query.
    Retrieve {
        query: String,
        #[command(flatten)]
        common: Common,
    },
    /// Rewrite an instruction through the gateway.
    Rewrite {
        query: String,
        #[command(flatten)]
        common: Common,
    },
    /// Build the prompt for one task and print the generated plan.
    Plan {
        family: String,
        /// Task seed.
        #[arg(value_name = "SEED")]
        task_seed: u64,
        /// Print the assembled prompt instead of calling the generator.
        #[arg(long)]
        prompt_only: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Run episodes and write a results file.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Summarize a results file, and optionally score detection fixtures.
    Eval {
        results: PathBuf,
        /// JSON array of detection fixtures.
        #[arg(long)]
        detections: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the five-row component ablation.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
    /// Sweep λ over the similarity metrics.
    Sweep {
        /// Comma-separated λ values.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        /// Comma-separated metrics.
        #[arg(long, value_delimiter = ',')]
        metrics: Option<Vec<String>>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Clone, Default)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long)]
    metric: Option<String>,
    #[arg(long = "K")]
    recall_k: Option<usize>,
    #[arg(long = "k")]
    k: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    no_rewrite: bool,
    #[arg(long)]
    no_rerank: bool,
    #[arg(long)]
    no_reorder: bool,
    #[arg(long)]
    no_ramp: bool,
    #[arg(long)]
    no_coarse: bool,
    /// Seed of the random selection used with --no-ramp.
    #[arg(long)]
    seed: Option<u64>,
    /// Cosine temperature before the rerank sigmoid.
    #[arg(long)]
    tau: Option<f64>,
    /// Rerank on instruction plus code.
    #[arg(long)]
    rerank_with_code: bool,
    /// `cosine` or `dot`.
    #[arg(long)]
    embedding_score: Option<String>,
    #[arg(long)]
    bm25_k1: Option<f64>,
    #[arg(long)]
    bm25_b: Option<f64>,
    #[arg(long)]
    llm_mode: Option<String>,
    /// `http` or `imitation`.
    #[arg(long)]
    llm_backend: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    cassette: Option<PathBuf>,
    /// `gateway`, `scripted` or `random`.
    #[arg(long)]
    planner: Option<String>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Comma-separated family names.
    #[arg(long, value_delimiter = ',')]
    families: Option<Vec<String>>,
    /// Seed range `a..b` or a single seed.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Exit 2 for configuration problems, 3 for pipeline failures.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

type Res<T> = Result<T, Failure>;

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn runtime_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn parse_seeds(s: &str) -> anyhow::Result<(u64, u64)> {
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if a >= b {
            return Err(anyhow!("empty seed range {s}"));
        }
        Ok((a, b))
    } else {
        let a: u64 = s.trim().parse()?;
        Ok((a, a + 1))
    }
}

/// Config file (if any) with command-line overrides applied.
fn engine_config(c: &Common) -> Res<EngineConfig> {
    let mut cfg = match &c.config {
        Some(p) => EngineConfig::load(p).map_err(config_err)?,
        None => EngineConfig::default(),
    };
    let r = &mut cfg.retrieval;
    if let Some(m) = &c.metric {
        r.metric = Metric::parse(m).ok_or_else(|| config_err(anyhow!("unknown metric `{m}`")))?;
    }
    if let Some(v) = c.recall_k {
        r.recall_k = v;
    }
    if let Some(v) = c.k {
        r.k = v;
    }
    if let Some(v) = c.lambda {
        r.lambda = v;
    }
    if let Some(v) = c.seed {
        r.seed = v;
    }
    r.rewrite_enabled &= !c.no_rewrite;
    r.rerank_enabled &= !c.no_rerank;
    r.reorder_enabled &= !c.no_reorder;
    r.ramp_enabled &= !c.no_ramp;
    r.coarse_enabled &= !c.no_coarse;
    r.rerank_with_code |= c.rerank_with_code;
    if let Some(v) = c.tau {
        r.tau = v;
    }
    if let Some(s) = &c.embedding_score {
        r.embedding_score = match s.as_str() {
            "cosine" => EmbeddingScore::Cosine,
            "dot" => EmbeddingScore::Dot,
            other => return Err(config_err(anyhow!("unknown embedding score `{other}`"))),
        };
    }
    if let Some(v) = c.bm25_k1 {
        r.bm25.k1 = v;
    }
    if let Some(v) = c.bm25_b {
        r.bm25.b = v;
    }
    let g = &mut cfg.gateway;
    if let Some(m) = &c.llm_mode {
        g.mode = m.parse().map_err(|e: String| config_err(anyhow!(e)))?;
    }
    if let Some(b) = &c.llm_backend {
        g.backend = match b.as_str() {
            "http" => BackendKind::Http,
            "imitation" => BackendKind::Imitation,
            other => return Err(config_err(anyhow!("unknown llm backend `{other}`"))),
        };
    }
    if let Some(m) = &c.model {
        g.model = m.clone();
    }
    if let Some(e) = &c.endpoint {
        g.endpoint = e.clone();
    }
    if let Some(p) = &c.cassette {
        g.cassette = Some(p.clone());
    }
    if let Some(p) = &c.planner {
        cfg.sim.planner = Planner::parse(p).ok_or_else(|| config_err(anyhow!("unknown planner `{p}`")))?;
    }
    if let Some(fs) = &c.families {
        cfg.sim.families = fs
            .iter()
            .map(|f| TaskFamily::parse(f))
            .collect::<Result<_, _>>()
            .map_err(config_err)?;
    }
    if let Some(s) = &c.seeds {
        cfg.sim.seeds = parse_seeds(s).map_err(config_err)?;
    }
    if let Some(p) = &c.corpus {
        cfg.corpus = Some(p.clone());
    }
    if let Some(p) = &c.template {
        cfg.template = Some(p.clone());
    }
    if let Some(p) = &c.out {
        cfg.output_dir = p.clone();
    }
    cfg.validate().map_err(config_err)?;
    if let Some(j) = c.jobs {
        // a second call in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global();
    }
    Ok(cfg)
}

fn codebase(cfg: &EngineConfig) -> Res<Codebase> {
    match &cfg.corpus {
        Some(p) => Codebase::load(p).map_err(config_err),
        None => Ok(Codebase::seed()),
    }
}

fn template(cfg: &EngineConfig) -> Res<PromptTemplate> {
    match &cfg.template {
        Some(p) => ramp_core::load_template(p).map_err(config_err),
        None => Ok(PromptTemplate::builtin()),
    }
}

/// Gateway for the configured mode. `required` turns a missing cassette
/// into an error instead of running without a gateway.
fn gateway(cfg: &EngineConfig, required: bool) -> Res<Option<GeneratorGateway>> {
    let g = &cfg.gateway;
    let backend = || -> Box<dyn CompletionBackend> {
        match g.backend {
            BackendKind::Http => Box::new(HttpBackend::new(&g.endpoint, Duration::from_secs(g.timeout_secs))),
            BackendKind::Imitation => Box::new(ImitationBackend),
        }
    };
    let gw = match (g.mode, &g.cassette) {
        (LlmMode::Live, c) => {
            let cassette = c.as_ref().map(Cassette::open).transpose().map_err(config_err)?;
            GeneratorGateway::new(LlmMode::Live, &g.model, cassette, Some(backend()))
        }
        (LlmMode::Replay, Some(p)) => GeneratorGateway::new(
            LlmMode::Replay,
            &g.model,
            Some(Cassette::load(p).map_err(config_err)?),
            None,
        ),
        (LlmMode::Record, Some(p)) => GeneratorGateway::new(
            LlmMode::Record,
            &g.model,
            Some(Cassette::open(p).map_err(config_err)?),
            Some(backend()),
        ),
        (mode, None) if required => {
            return Err(config_err(anyhow!("llm mode {mode} needs --cassette")));
        }
        (_, None) => return Ok(None),
    };
    Ok(Some(gw.with_temperature(g.temperature)))
}

fn suite(cfg: &EngineConfig) -> Suite {
    Suite::new(cfg.sim.families.clone(), (cfg.sim.seeds.0..cfg.sim.seeds.1).collect())
}

fn write_out(dir: &Path, name: &str, text: &str) -> Res<()> {
    fs::create_dir_all(dir)
        .and_then(|()| fs::write(dir.join(name), text))
        .with_context(|| format!("writing {}", dir.join(name).display()))
        .map_err(runtime_err)
}

fn write_records(dir: &Path, records: &[EpisodeRecord]) -> Res<()> {
    write_out(dir, "results.jsonl", &results_jsonl(records))?;
    write_out(dir, "timings.jsonl", &timings_jsonl(records))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

fn execute(cmd: Command) -> Res<()> {
    let provider = HashingEmbedder::new(EMBEDDING_DIM);
    match cmd {
        Command::Index { common } => {
            let cfg = engine_config(&common)?;
            let cb = codebase(&cfg)?;
            let idx = LexicalIndex::build(&cb);
            let stats = idx.stats();
            println!("entries      {}", cb.len());
            println!("sources      {}", cb.sources().len());
            println!("vocabulary   {}", stats.vocabulary_len());
            println!("avg length   {:.2}", stats.avg_len());
        }
        Command::Retrieve { query, common } => {
            let cfg = engine_config(&common)?;
            let cb = codebase(&cfg)?;
            let gw = gateway(&cfg, false)?;
            let q = Query::new(query).map_err(config_err)?;
            let out = run_pipeline(&q, &cb, &cfg.retrieval, gw.as_ref(), &provider).map_err(|e| match e {
                ramp_core::retrieval::RetrievalError::Config(_) => config_err(e),
                e => runtime_err(e),
            })?;
            println!(
                "{:>4}  {:<32} {:>9} {:>9} {:>9}",
                "rank", "id", "score_cr", "score_fr", "fused"
            );
            for c in &out.ranked {
                println!(
                    "{:>4}  {:<32} {:>9.4} {:>9} {:>9}",
                    c.rank,
                    c.entry.id,
                    c.score_cr,
                    fmt_opt(c.score_fr),
                    fmt_opt(c.fused)
                );
            }
        }
        Command::Rewrite { query, common } => {
            let cfg = engine_config(&common)?;
            let gw = gateway(&cfg, true)?.expect("required gateway");
            let q = Query::new(query).map_err(config_err)?;
            let out = rewrite_instruction(&q, &gw).map_err(runtime_err)?;
            println!("{}", out.text());
        }
        Command::Plan {
            family,
            task_seed,
            prompt_only,
            common,
        } => {
            let cfg = engine_config(&common)?;
            let family = TaskFamily::parse(&family).map_err(config_err)?;
            let cb = codebase(&cfg)?;
            let tmpl = template(&cfg)?;
            let gw = gateway(&cfg, !prompt_only)?;
            let (scene, task) = generate_task(family, task_seed).map_err(runtime_err)?;
            let q = Query::new(task.instruction.clone())
                .map_err(runtime_err)?
                .with_image(ramp_core::sim::render_png(&scene));
            let out = run_pipeline(&q, &cb, &cfg.retrieval, gw.as_ref(), &provider).map_err(runtime_err)?;
            let bundle = assemble(&tmpl, &out.query, &out.ranked).map_err(runtime_err)?;
            if prompt_only {
                print!("{}", bundle.text);
                return Ok(());
            }
            eprintln!("task: {}", task.instruction);
            eprintln!(
                "demos: {} ({} tokens)",
                bundle.demo_order.join(", "),
                bundle.token_estimate
            );
            let text = gw
                .expect("required gateway")
                .complete_multimodal(&bundle)
                .map_err(runtime_err)?;
            println!("{}", text.trim_end());
        }
        Command::Run { common } => {
            let cfg = engine_config(&common)?;
            let cb = codebase(&cfg)?;
            let tmpl = template(&cfg)?;
            let needs_gw = cfg.sim.planner == Planner::Gateway;
            let gw = gateway(&cfg, needs_gw)?;
            let ctx = EvalContext {
                codebase: &cb,
                template: &tmpl,
                gateway: gw.as_ref(),
                provider: &provider,
                planner: cfg.sim.planner,
                cassette_hash: file_digest(cfg.gateway.cassette.as_deref()),
            };
            let suite = suite(&cfg);
            info!("running {} episodes", suite.families.len() * suite.seeds.len());
            let records = run_suite(&ctx, &cfg.retrieval, &suite);
            let summary = summary_table(&records);
            write_records(&cfg.output_dir, &records)?;
            write_out(&cfg.output_dir, "summary.txt", &summary)?;
            print!("{summary}");
        }
        Command::Eval {
            results,
            detections,
            common,
        } => {
            engine_config(&common)?;
            let text = fs::read_to_string(&results)
                .with_context(|| format!("reading {}", results.display()))
                .map_err(config_err)?;
            let records: Vec<EpisodeRecord> = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(serde_json::from_str)
                .collect::<Result<_, _>>()
                .map_err(config_err)?;
            success_rate(&records).map_err(runtime_err)?;
            print!("{}", summary_table(&records));
            if let Some(p) = detections {
                let text = fs::read_to_string(&p)
                    .with_context(|| format!("reading {}", p.display()))
                    .map_err(config_err)?;
                let fixtures: Vec<DetectionFixture> = serde_json::from_str(&text).map_err(config_err)?;
                if let Some(bad) = fixtures.iter().find(|f| !f.is_valid()) {
                    return Err(config_err(anyhow!("fixture `{}` has a degenerate box", bad.ref_exp)));
                }
                for t in [0.3, 0.5, 0.75] {
                    println!("mAP@{t:<4} {:.4}", eval::mean_ap(&fixtures, t));
                }
            }
        }
        Command::Ablate { common } => {
            let cfg = engine_config(&common)?;
            let cb = codebase(&cfg)?;
            let tmpl = template(&cfg)?;
            let gw = gateway(&cfg, true)?;
            let ctx = EvalContext {
                codebase: &cb,
                template: &tmpl,
                gateway: gw.as_ref(),
                provider: &provider,
                planner: Planner::Gateway,
                cassette_hash: file_digest(cfg.gateway.cassette.as_deref()),
            };
            let table = run_ablation(&suite(&cfg), &cfg.retrieval, &ctx);
            let text = table.render();
            write_records(&cfg.output_dir, &table.records())?;
            write_out(&cfg.output_dir, "ablation.txt", &text)?;
            print!("{text}");
        }
        Command::Sweep {
            lambdas,
            metrics,
            common,
        } => {
            let cfg = engine_config(&common)?;
            let lambdas = lambdas.unwrap_or_else(|| eval::DEFAULT_LAMBDAS.to_vec());
            let metrics = match metrics {
                None => eval::DEFAULT_METRICS.to_vec(),
                Some(ms) => ms
                    .iter()
                    .map(|m| Metric::parse(m).ok_or_else(|| config_err(anyhow!("unknown metric `{m}`"))))
                    .collect::<Res<_>>()?,
            };
            let cb = codebase(&cfg)?;
            let tmpl = template(&cfg)?;
            let gw = gateway(&cfg, true)?;
            let ctx = EvalContext {
                codebase: &cb,
                template: &tmpl,
                gateway: gw.as_ref(),
                provider: &provider,
                planner: Planner::Gateway,
                cassette_hash: file_digest(cfg.gateway.cassette.as_deref()),
            };
            let grid = sweep_lambda(&suite(&cfg), &lambdas, &metrics, &cfg.retrieval, &ctx).map_err(config_err)?;
            let text = grid.render();
            write_records(&cfg.output_dir, &grid.records)?;
            write_out(&cfg.output_dir, "sweep.txt", &text)?;
            print!("{text}");
        }
    }
    Ok(())
}

/// Error chain on one line, skipping causes already quoted by their parent.
fn report(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.ends_with(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {}", report(&e));
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {}", report(&e));
            ExitCode::from(3)
        }
    }
}
