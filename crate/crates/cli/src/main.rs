//! `edm`: explainable decision mining from the command line.
//!
//! Exit codes: 0 on success, 2 for unusable input, 3 for internal failures.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{Map, Value};

use edm_core::event_log::{
    events_from_json, generate_synthetic_p2p, parse_csv, parse_xes, write_xes, CsvMapping, EventLog, ParsedLog,
};
use edm_core::explain::{
    bar_chart_svg, explain_instance, global_bundle, global_explanation, local_bundle, Background, Grouping, Method,
    SamplingConfig, DEFAULT_PERMUTATIONS, MAX_EXACT_UNITS,
};
use edm_core::learners::{ModelKind, TrainedDecisionModel};
use edm_core::par::{set_execution, Execution};
use edm_core::pipeline::{mine_table, MineOptions};
use edm_core::process_model::{decision_point, decision_points, discover_inductive, export_dot, export_pnml, import_pnml, PlaceId, TransitionId};
use edm_core::situation::{
    extract_situation_table, features_for_prefix, mapping_from_json, FeatureMapping, FeatureSpec, SituationTable,
};

/// Rows of the situation table used for the global explanation.
const GLOBAL_ROWS: usize = 50;

#[derive(Parser)]
#[command(name = "edm", version, about = "Explainable decision mining on event logs")]
struct Cli {
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LogFormat {
    Xes,
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum MethodArg {
    Exact,
    Sampled,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupingArg {
    Columns,
    BySource,
}

impl From<GroupingArg> for Grouping {
    fn from(g: GroupingArg) -> Grouping {
        match g {
            GroupingArg::Columns => Grouping::Columns,
            GroupingArg::BySource => Grouping::BySource,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic purchase-to-pay log as XES.
    GenP2p {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        cases: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Discover a Petri net and list its decision points.
    Discover {
        #[arg(long)]
        log: PathBuf,
        /// Defaults to the file extension.
        #[arg(long, value_enum)]
        format: Option<LogFormat>,
        /// CSV column mapping (JSON).
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Build the situation table of one decision point and train its model.
    Mine {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, value_enum)]
        format: Option<LogFormat>,
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        net: PathBuf,
        /// Place id of the decision point.
        #[arg(long)]
        dp: String,
        /// Feature spec (JSON); defaults to every log attribute.
        #[arg(long)]
        features: Option<PathBuf>,
        /// Comma-separated model kinds; defaults to all.
        #[arg(long, value_delimiter = ',')]
        kinds: Vec<ModelKind>,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Background sample size for explanations.
        #[arg(long, default_value_t = 100)]
        background: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Explain one prediction of a mined model, plus a global summary.
    Explain {
        /// Output directory of `mine`.
        #[arg(long)]
        model: PathBuf,
        /// A feature mapping, `{"features": {...}}` or `{"events": [...]}`.
        #[arg(long)]
        instance: PathBuf,
        /// Transition to explain; defaults to the predicted one.
        #[arg(long)]
        target: Option<String>,
        #[arg(long, value_enum, default_value = "exact")]
        method: MethodArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
        permutations: usize,
        #[arg(long, value_enum, default_value = "by-source")]
        grouping: GroupingArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

/// Input the user can fix; maps to exit code 2.
#[derive(Debug)]
struct InputError(String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn bad(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

/// Core errors are input errors unless they come from I/O.
fn core(e: edm_core::Error) -> anyhow::Error {
    match e {
        edm_core::Error::Io(_) => anyhow::Error::new(e),
        e => bad(e.to_string()),
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_slice(&read(path)?).map_err(|e| bad(format!("{}: {e}", path.display())))
}

fn write(path: impl AsRef<Path>, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, text)
}

fn load_log(path: &Path, format: Option<LogFormat>, map: Option<&Path>) -> Result<EventLog> {
    let format = format.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => LogFormat::Csv,
        Some("json") => LogFormat::Json,
        _ => LogFormat::Xes,
    });
    let bytes = read(path)?;
    let parsed = match format {
        LogFormat::Xes => parse_xes(bytes.as_slice()).map_err(core)?,
        LogFormat::Csv => {
            let map = map.ok_or_else(|| bad("a CSV log needs --map"))?;
            let mapping: CsvMapping = read_json(map)?;
            parse_csv(bytes.as_slice(), &mapping).map_err(core)?
        }
        LogFormat::Json => {
            let text = String::from_utf8(bytes).map_err(|e| bad(e.to_string()))?;
            ParsedLog {
                log: EventLog::from_json(&text).map_err(core)?,
                warnings: Vec::new(),
            }
        }
    };
    for w in &parsed.warnings {
        log::warn!("{w}");
    }
    if parsed.log.traces().is_empty() {
        return Err(bad(format!("{} contains no traces", path.display())));
    }
    Ok(parsed.log)
}

fn gen_p2p(seed: u64, cases: usize, out: &Path) -> Result<()> {
    if cases == 0 {
        return Err(bad("--cases must be positive"));
    }
    let log = generate_synthetic_p2p(seed, cases);
    write(out, write_xes(&log))?;
    println!("wrote {} cases ({} events) to {}", cases, log.num_events(), out.display());
    Ok(())
}

fn discover(log: &Path, format: Option<LogFormat>, map: Option<&Path>, out: &Path, dot: Option<&Path>) -> Result<()> {
    let log = load_log(log, format, map)?;
    let net = discover_inductive(&log).map_err(core)?;
    write(out, export_pnml(&net))?;
    if let Some(dot) = dot {
        write(dot, export_dot(&net))?;
    }
    let dps = decision_points(&net);
    println!("{} decision points", dps.len());
    for dp in &dps {
        let labels: Vec<&str> = dp.alternatives.iter().map(|t| net.label(t).unwrap_or("(silent)")).collect();
        println!("{}\t{}", dp.place.as_str(), labels.join(" | "));
    }
    Ok(())
}

struct MineArgs {
    log: PathBuf,
    format: Option<LogFormat>,
    map: Option<PathBuf>,
    net: PathBuf,
    dp: String,
    features: Option<PathBuf>,
    kinds: Vec<ModelKind>,
    folds: usize,
    seed: u64,
    background: usize,
    out: PathBuf,
}

fn mine(a: MineArgs) -> Result<()> {
    let log = load_log(&a.log, a.format, a.map.as_deref())?;
    let net = import_pnml(&read(&a.net)?).map_err(core)?;
    let place = PlaceId::new(&a.dp);
    decision_point(&net, &place).map_err(core)?;
    let spec = match &a.features {
        Some(path) => read_json::<FeatureSpec>(path)?,
        None => FeatureSpec::all_from_log(&log),
    };
    if a.folds < 2 || a.background == 0 {
        return Err(bad("--folds must be >= 2 and --background >= 1"));
    }
    let opts = MineOptions {
        kinds: if a.kinds.is_empty() { ModelKind::ALL.to_vec() } else { a.kinds },
        folds: a.folds,
        seed: a.seed,
        background_size: a.background,
        ..MineOptions::default()
    };
    let table = extract_situation_table(&log, &net, &place, &spec).map_err(core)?;
    log::info!("{} situations at {}", table.len(), a.dp);
    let outcome = mine_table(&table, &opts).map_err(core)?;

    let out = &a.out;
    write(out.join("situation_table.csv"), table.to_csv())?;
    write(out.join("situation_table.json"), table.to_json())?;
    write(out.join("encoder.json"), outcome.model.encoder.to_json())?;
    for r in &outcome.reports {
        write_json(&out.join("reports").join(format!("{}.json", r.kind)), r)?;
    }
    write(out.join("model.json"), outcome.model.to_json())?;
    write_json(&out.join("background.json"), &outcome.background)?;
    let scores: Map<String, Value> = outcome
        .reports
        .iter()
        .map(|r| (r.kind.to_string(), serde_json::json!({"mean_f1": r.mean_f1, "degenerate": r.degenerate})))
        .collect();
    write_json(
        &out.join("summary.json"),
        &serde_json::json!({
            "decision_point": a.dp,
            "situations": table.len(),
            "suggested": outcome.suggested,
            "degenerate": outcome.degenerate(),
            "model": outcome.model.kind,
            "scores": scores,
        }),
    )?;

    for r in &outcome.reports {
        println!("{:<24} mean weighted F1 {:.4}", r.kind.to_string(), r.mean_f1);
    }
    match outcome.suggested {
        Some(kind) => println!("suggested: {kind}"),
        None => log::warn!("decision point {} always takes the same branch; the model is constant", a.dp),
    }
    Ok(())
}

/// Accepts a bare mapping or an object with exactly one of `features`/`events`.
fn instance(value: Value, spec: &FeatureSpec) -> Result<FeatureMapping> {
    let Value::Object(obj) = value else {
        return Err(bad("the instance must be a JSON object"));
    };
    if obj.len() == 1 {
        if let Some(events) = obj.get("events") {
            return Ok(features_for_prefix(&events_from_json(events, "running").map_err(core)?, spec));
        }
        if let Some(Value::Object(features)) = obj.get("features") {
            return mapping_from_json(features, spec).map_err(core);
        }
    }
    mapping_from_json(&obj, spec).map_err(core)
}

struct ExplainArgs {
    model: PathBuf,
    instance: PathBuf,
    target: Option<String>,
    method: MethodArg,
    seed: u64,
    permutations: usize,
    grouping: Grouping,
    out: PathBuf,
}

fn explain(a: ExplainArgs) -> Result<()> {
    let model_text = String::from_utf8(read(&a.model.join("model.json"))?).map_err(|e| bad(e.to_string()))?;
    let model = TrainedDecisionModel::from_json(&model_text).map_err(core)?;
    let background: Background = read_json(&a.model.join("background.json"))?;
    let fmap = instance(read_json(&a.instance)?, &model.feature_spec)?;
    let target = a.target.map(TransitionId::new);
    if let Some(t) = target.as_ref().filter(|t| model.class_index(t).is_none()) {
        return Err(bad(format!("{} is not an alternative of {}", t.as_str(), model.decision_point.as_str())));
    }
    if a.method == MethodArg::Sampled && a.permutations == 0 {
        return Err(bad("--permutations must be >= 1"));
    }
    let sampled = Method::Sampled(SamplingConfig {
        n_permutations: a.permutations,
        seed: a.seed,
        redistribute: true,
    });
    let method = match a.method {
        MethodArg::Exact => Method::Exact,
        MethodArg::Sampled => sampled,
    };

    let prediction = model.predict(&fmap);
    let e = explain_instance(&model, &fmap, target.as_ref(), &background, a.grouping, method).map_err(core)?;
    let plots = local_bundle(&e);
    write_json(&a.out.join("prediction.json"), &prediction)?;
    write_json(&a.out.join("explanation.json"), &e)?;
    write_json(&a.out.join("plots.json"), &plots)?;
    write(a.out.join("bar.svg"), bar_chart_svg(&plots.bar, 20))?;

    // Global view over evenly spaced training situations.
    let table_path = a.model.join("situation_table.json");
    if table_path.exists() {
        let text = String::from_utf8(read(&table_path)?).map_err(|e| bad(e.to_string()))?;
        let table = SituationTable::from_json(&text).map_err(core)?;
        let n = table.len().min(GLOBAL_ROWS);
        let rows: Vec<FeatureMapping> = (0..n).map(|i| table.rows[i * table.len() / n].features.clone()).collect();
        let units = edm_core::explain::units(&model.encoder, a.grouping).len();
        let global_method = if units > MAX_EXACT_UNITS { sampled } else { method };
        let g = global_explanation(&model, &rows, &background, a.grouping, global_method).map_err(core)?;
        write_json(&a.out.join("global.json"), &g)?;
        write_json(&a.out.join("global_plots.json"), &global_bundle(&g))?;
    }

    let label = |t: &TransitionId| t.as_str().to_string();
    println!("prediction: {} ({:.4})", label(prediction.argmax()), prediction.get(prediction.argmax()));
    println!("target {}: base {:.4}, predicted {:.4}", label(&e.target), e.base_value, e.predicted_value);
    for at in e.attributions.iter().take(10) {
        println!("  {:+.4}  {}", at.value, at.name);
    }
    Ok(())
}

fn serve(config: Option<&Path>, port: Option<u16>, data_dir: Option<PathBuf>) -> Result<()> {
    let mut config = edm_service::Config::load(config).map_err(|e| bad(e.to_string()))?;
    if let Some(p) = port {
        config.port = p;
    }
    if let Some(d) = data_dir {
        config.data_dir = d;
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((config.bind.as_str(), config.port))
            .await
            .map_err(|e| bad(format!("cannot bind {}:{}: {e}", config.bind, config.port)))?;
        let state = edm_service::AppState::new(config)?;
        println!("listening on http://{}", listener.local_addr()?);
        edm_service::serve_on(listener, state).await?;
        Ok(())
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.threads {
        Some(0) => return Err(bad("--threads must be >= 1")),
        Some(1) => set_execution(Execution::Sequential),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?,
        None => {}
    }
    match cli.command {
        Command::GenP2p { seed, cases, out } => gen_p2p(seed, cases, &out),
        Command::Discover { log, format, map, out, dot } => discover(&log, format, map.as_deref(), &out, dot.as_deref()),
        Command::Mine { log, format, map, net, dp, features, kinds, folds, seed, background, out } => mine(MineArgs {
            log,
            format,
            map,
            net,
            dp,
            features,
            kinds,
            folds,
            seed,
            background,
            out,
        }),
        Command::Explain { model, instance, target, method, seed, permutations, grouping, out } => explain(ExplainArgs {
            model,
            instance,
            target,
            method,
            seed,
            permutations,
            grouping: grouping.into(),
            out,
        }),
        Command::Serve { config, port, data_dir } => serve(config.as_deref(), port, data_dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<InputError>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(3)
        }
    }
}
