use std::path::PathBuf;
use std::process::ExitCode;

use capcert::error::{Error, Result};
use capcert::formats::{self, write_json, write_text};
use capcert::harness::{
    emit_report, first_witness_size, hit_rate_bound_report, observed_classes, prepare, run_omission_experiment,
    run_simulation, CasScope, ExperimentConfig, ExtractionSummary, Inputs, Method, Report, DEFAULT_OMISSION_RATES,
};
use capcert::multiwoz::{load_multiwoz, OutcomeMapping};
use capcert::synth::{synth_corpus, SynthParams, World, WorldParams};
use capcert_core::baselines::{unsound_demo, DEFAULT_TAU};
use capcert_core::dialogue::Corpus;
use capcert_core::extraction::{
    collect_stats, extract_hypergraph, soundness_report, ExtractParams, DEFAULT_SOUNDNESS_FLOOR,
};
use capcert_core::session::CostModel;
use capcert_core::store::SnapshotPolicy;
use capcert_core::{ForbiddenSet, Hypergraph};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "capcert",
    version,
    about = "Certified answer reuse for capability-based dialogue pipelines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world: corpus, reference hypergraph, templates, ontology.
    Synth(SynthArgs),
    /// Mine a θ-sound hypergraph from a corpus.
    Extract(ExtractArgs),
    /// Replay a corpus through every method and coverage level.
    Simulate(SimulateArgs),
    /// Slot-omission robustness experiment.
    Omission(OmissionArgs),
    /// Two-tenant leak against a semantic cache and the CAS.
    UnsoundDemo(DemoArgs),
    /// Minimal unsafe antichain and compositionality defect of a small graph.
    Antichain(AntichainArgs),
    /// Re-render report tables from a saved report.json.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum CorpusFormat {
    Native,
    Multiwoz,
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum, default_value = "native")]
    corpus_format: CorpusFormat,
    /// MultiWOZ split directory under the dataset root.
    #[arg(long, default_value = "test")]
    split: String,
}

impl CorpusArgs {
    fn load(&self) -> Result<Corpus> {
        match self.corpus_format {
            CorpusFormat::Native => formats::load_corpus(&self.corpus),
            CorpusFormat::Multiwoz => load_multiwoz(&self.corpus, &self.split, &OutcomeMapping::default()),
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    sessions: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated domain list.
    #[arg(long, value_delimiter = ',')]
    domains: Option<Vec<String>>,
    /// Query slots only; every answer needs exactly its query values.
    #[arg(long)]
    independent: bool,
    /// Comma-separated P(K=1), P(K=2), ...
    #[arg(long, value_delimiter = ',')]
    k_distribution: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.0)]
    confirm_skip_rate: f64,
    #[arg(long, default_value_t = 0.02)]
    duplicate_rate: f64,
    #[arg(long, default_value_t = 4)]
    tenants: usize,
    /// Values per query slot.
    #[arg(long)]
    query_pool: Option<usize>,
    /// Values of each domain's entity-naming slot.
    #[arg(long)]
    pick_pool: Option<usize>,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    ontology: PathBuf,
    #[arg(long, default_value_t = 0.75)]
    theta: f64,
    #[arg(long, default_value_t = 3)]
    horizon: usize,
    #[arg(long, default_value_t = 4)]
    max_subset: usize,
    #[arg(long, default_value_t = 30)]
    n_floor: u64,
    #[arg(long, default_value_t = 0.15)]
    epsilon: f64,
    /// Comma-separated forbidden labels written into the hypergraph file.
    #[arg(long, value_delimiter = ',')]
    forbidden: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long)]
    hypergraph: PathBuf,
    /// Overrides the hypergraph file's forbidden list.
    #[arg(long, value_delimiter = ',')]
    forbidden: Option<Vec<String>>,
}

impl GraphArgs {
    fn load(&self) -> Result<(Hypergraph, ForbiddenSet)> {
        let (g, f) = formats::load_hypergraph(&self.hypergraph)?;
        let f = match &self.forbidden {
            Some(labels) => g.forbidden(labels.iter().map(String::as_str))?,
            None => f,
        };
        Ok((g, f))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    PerRun,
    PerSession,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Strict,
    Refined,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    templates: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1.0,0.75,0.5,0.25")]
    coverage: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "no_cache,cosine,cas_only,cas_pab")]
    method: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    #[arg(long)]
    seed: u64,
    /// `rag=U,tier2=U,tier1=U`.
    #[arg(long, default_value = "rag=1000,tier2=10,tier1=1")]
    cost_model: String,
    #[arg(long, value_enum, default_value = "per-run")]
    cas_scope: ScopeArg,
    #[arg(long, value_enum, default_value = "strict")]
    policy: PolicyArg,
    /// Similarity pre-filter size; all entries when absent.
    #[arg(long)]
    top: Option<usize>,
    /// Witness size used by the hit-rate bound; first stored answer's when absent.
    #[arg(long)]
    delta_star: Option<usize>,
    /// Also write per-turn JSON-lines traces.
    #[arg(long)]
    trace: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OmissionArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    templates: PathBuf,
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<f64>>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.85,0.99")]
    tau: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AntichainArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long, default_value_t = 20)]
    max_n: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_cost(spec: &str) -> Result<CostModel> {
    let mut cost = CostModel::default();
    for part in spec.split(',').filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("cost entry `{part}` is not key=value")))?;
        let v: u64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("cost `{part}` is not an integer")))?;
        match k.trim() {
            "rag" => cost.rag_units = v,
            "tier2" => cost.tier2_units = v,
            "tier1" => cost.tier1_units = v,
            other => return Err(Error::Config(format!("unknown cost key `{other}`"))),
        }
    }
    Ok(cost)
}

fn synth(a: &SynthArgs) -> Result<()> {
    let mut world = WorldParams {
        independent: a.independent,
        ..WorldParams::default()
    };
    if let Some(d) = &a.domains {
        world.domains = d.clone();
    }
    world.query_pool = a.query_pool.unwrap_or(world.query_pool);
    world.pick_pool = a.pick_pool.unwrap_or(world.pick_pool);
    let w = World::new(world.clone())?;
    let mut p = SynthParams {
        n_sessions: a.sessions,
        world,
        confirm_skip_rate: a.confirm_skip_rate,
        duplicate_answer_rate: a.duplicate_rate,
        tenants: a.tenants,
        ..SynthParams::default()
    };
    if let Some(k) = &a.k_distribution {
        p.k_distribution = k.clone();
    }
    let corpus = synth_corpus(&w, &p, a.seed)?;
    formats::save_corpus(&a.out.join("corpus.json"), &corpus)?;
    formats::save_hypergraph(&a.out.join("hypergraph.json"), &w.graph, &w.forbidden)?;
    formats::save_templates(&a.out.join("templates.json"), &w.templates)?;
    formats::save_ontology(&a.out.join("ontology.json"), &w.ontology)?;
    println!(
        "{} sessions, {} turns, {} nodes",
        corpus.sessions.len(),
        corpus.turn_count(),
        w.graph.node_count()
    );
    Ok(())
}

fn extract(a: &ExtractArgs) -> Result<()> {
    let corpus = a.corpus.load()?;
    let ontology = formats::load_ontology(&a.ontology)?;
    let stats = collect_stats(&corpus, &ontology, a.horizon, a.max_subset)?;
    let params = ExtractParams {
        theta: a.theta,
        n_floor: a.n_floor,
    };
    let graph = extract_hypergraph(&stats, &ontology, &params)?;
    let forbidden = graph.forbidden(a.forbidden.iter().map(String::as_str))?;
    formats::save_hypergraph(&a.out.join("hypergraph.json"), &graph, &forbidden)?;
    formats::save_stats(&a.out.join("stats.json"), &stats)?;
    let soundness = soundness_report(&graph, &stats, a.epsilon, DEFAULT_SOUNDNESS_FLOOR);
    write_json(&a.out.join("soundness.json"), &soundness)?;
    let report = Report {
        extraction: Some(ExtractionSummary::of(&graph, &forbidden)),
        ..Report::default()
    };
    emit_report(&report, &a.out)?;
    let flagged = soundness.iter().filter(|s| s.flagged).count();
    println!(
        "{} nodes, {} arcs, {} flagged by the soundness floor",
        graph.node_count(),
        graph.arc_count(),
        flagged
    );
    Ok(())
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let corpus = a.corpus.load()?;
    let (graph, forbidden) = a.graph.load()?;
    let templates = formats::load_templates(&a.templates)?;
    let cfg = ExperimentConfig {
        seed: a.seed,
        methods: a.method.iter().map(|m| m.parse()).collect::<Result<_>>()?,
        coverage: a.coverage.clone(),
        tau: a.tau,
        cost: parse_cost(&a.cost_model)?,
        cas_scope: match a.cas_scope {
            ScopeArg::PerRun => CasScope::PerRun,
            ScopeArg::PerSession => CasScope::PerSession,
        },
        policy: match a.policy {
            PolicyArg::Strict => SnapshotPolicy::Strict,
            PolicyArg::Refined => SnapshotPolicy::Refined,
        },
        top: a.top,
        trace: a.trace,
    };
    let inputs = Inputs {
        graph: &graph,
        forbidden: &forbidden,
        corpus: &corpus,
        templates: &templates,
    };
    let metrics = run_simulation(&inputs, &cfg)?;
    let prepared = prepare(&graph, &corpus)?;
    let classes = observed_classes(&graph, &prepared)?;
    let delta_star = match a.delta_star {
        Some(d) => d,
        None => first_witness_size(&graph, &prepared)?.unwrap_or(0),
    };
    let mut bounds = Vec::new();
    for run in metrics.runs.iter().filter(|r| r.method == Method::CasPab) {
        bounds.push(hit_rate_bound_report(
            &graph,
            &forbidden,
            &classes,
            run.coverage,
            delta_star,
            run.summary.tier1_rate,
        )?);
    }
    if a.trace {
        for run in &metrics.runs {
            let name = format!("traces/{}-{:.2}.jsonl", run.method.as_str(), run.coverage);
            formats::write_lines(&a.out.join(name), &run.trace)?;
        }
    }
    for run in &metrics.runs {
        let s = &run.summary;
        println!(
            "{:<9} p={:.2} mean_rag={:.3} mean_k={:.3} hit={:.3} tier2={:.3} unsafe={}",
            run.method.as_str(),
            run.coverage,
            s.mean_rag,
            s.mean_k,
            s.hit_rate,
            s.tier2_rate,
            s.unsafe_hits
        );
    }
    let report = Report {
        config: Some(cfg),
        extraction: Some(ExtractionSummary::of(&graph, &forbidden)),
        metrics,
        bounds,
        omission: Vec::new(),
    };
    emit_report(&report, &a.out)?;
    Ok(())
}

fn omission(a: &OmissionArgs) -> Result<()> {
    let corpus = a.corpus.load()?;
    let (graph, forbidden) = a.graph.load()?;
    let templates = formats::load_templates(&a.templates)?;
    let rates = a.rates.clone().unwrap_or_else(|| DEFAULT_OMISSION_RATES.to_vec());
    let inputs = Inputs {
        graph: &graph,
        forbidden: &forbidden,
        corpus: &corpus,
        templates: &templates,
    };
    let rows = run_omission_experiment(&inputs, &rates, a.seed)?;
    for r in &rows {
        println!(
            "r={:.2} safety_violation={:.4} false_rejection={:.4} pab_recall={:.4} (predicted {:.4}) and_violation={:.4}",
            r.r, r.safety_violation_rate, r.false_rejection_rate, r.pab_recall, r.predicted_recall, r.and_violation_rate
        );
    }
    let report = Report {
        omission: rows,
        ..Report::default()
    };
    emit_report(&report, &a.out)?;
    Ok(())
}

/// Returns whether every tau satisfied the demo's expectations.
fn demo(a: &DemoArgs) -> Result<bool> {
    let reports: Vec<_> = a.tau.iter().map(|&t| unsound_demo(t)).collect();
    let mut text = String::new();
    for r in &reports {
        text.push_str(&format!("tau = {}\n", r.tau));
        for line in &r.transcript {
            text.push_str(&format!("  {line}\n"));
        }
        text.push_str(&format!(
            "  semantic_unsafe_hits = {}, cas_unsafe_hits = {}, cas_safe_hits = {}\n",
            r.semantic_unsafe_hits, r.cas_unsafe_hits, r.cas_safe_hits
        ));
    }
    print!("{text}");
    if let Some(out) = &a.out {
        write_text(&out.join("demo.txt"), &text)?;
        write_json(&out.join("demo.json"), &reports)?;
    }
    Ok(reports.iter().all(|r| r.holds()))
}

fn antichain(a: &AntichainArgs) -> Result<()> {
    let (graph, forbidden) = a.graph.load()?;
    let sets = graph.minimal_unsafe_antichain_bruteforce(&forbidden, a.max_n)?;
    let labelled: Vec<Vec<&str>> = sets.iter().map(|s| graph.labels_of(s)).collect();
    let defect = graph.compositionality_defect(&forbidden);
    for s in &labelled {
        println!("{{{}}}", s.join(", "));
    }
    println!("defect total = {}", defect.total);
    if let Some(out) = &a.out {
        write_json(
            &out.join("antichain.json"),
            &serde_json::json!({ "antichain": labelled, "defect": defect }),
        )?;
    }
    Ok(())
}

fn report(a: &ReportArgs) -> Result<()> {
    let r: Report = formats::read_json(&a.report)?;
    for p in emit_report(&r, &a.out)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Extract(a) => extract(a),
        Command::Simulate(a) => simulate(a),
        Command::Omission(a) => omission(a),
        Command::Antichain(a) => antichain(a),
        Command::Report(a) => report(a),
        Command::UnsoundDemo(a) => match demo(a) {
            Ok(true) => Ok(()),
            Ok(false) => {
                eprintln!("unsound-demo: expectations not met");
                return ExitCode::from(2);
            }
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
