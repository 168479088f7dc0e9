use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use compatkg::checker::{self, evaluate_metrics, load_pairs, parse_environment, Metrics};
use compatkg::corpus::{write_posts, FilterConfig};
use compatkg::graph::{load_graph, save_graph};
use compatkg::inference::DEFAULT_TEMPLATE;
use compatkg::pipeline::{self, OracleConfig, OracleHandle, OracleKind, PipelineConfig};
use compatkg::query::{parse_query, render_table, resolve, RemoteQueryParser};
use compatkg::service::{self, ServiceConfig, DEFAULT_PORT, DEFAULT_URL_TEMPLATE};
use compatkg::{Dictionary, Error, Recognizer, Result, SCHEMA_VERSION};

/// Writes to stdout. A closed pipe (`| head`) ends the process quietly.
fn emit(args: std::fmt::Arguments<'_>) {
    use std::io::Write as _;
    if let Err(e) = std::io::stdout().lock().write_fmt(args) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: writing output: {e}");
        std::process::exit(3);
    }
}

macro_rules! out {
    ($($t:tt)*) => { emit(format_args!($($t)*)) };
}

macro_rules! outln {
    () => { emit(format_args!("\n")) };
    ($($t:tt)*) => { emit(format_args!("{}\n", format_args!($($t)*))) };
}

/// Version-compatibility knowledge graph for deep-learning stacks.
///
/// Every option with an env name can be set through the environment
/// (prefix COMPATKG_).
#[derive(Parser, Debug)]
#[command(name = "compatkg", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load a corpus and keep the posts that pass the filter funnel.
    Ingest(IngestArgs),
    /// Ask the oracle about every candidate paragraph of filtered posts.
    Infer(InferArgs),
    /// Aggregate verdicts into a graph file.
    Build(BuildArgs),
    /// Run ingest, infer and build in one go.
    Pipeline(PipelineArgs),
    /// Answer a search query against a graph.
    Query(QueryArgs),
    /// Check an environment file for known incompatibilities.
    Check(CheckArgs),
    /// Score reported pairs against ground truth.
    Eval(EvalArgs),
    /// Serve the graph over HTTP.
    Serve(ServeArgs),
    /// Show recognized mentions and bindings for a piece of text.
    Recognize(RecognizeArgs),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
enum Format {
    #[default]
    Table,
    Machine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OracleChoice {
    Heuristic,
    Remote,
}

#[derive(Args, Debug)]
struct DictArg {
    /// Component dictionary (JSON); the bundled one when absent.
    #[arg(long = "dict", env = "COMPATKG_DICT")]
    dict: Option<PathBuf>,
}

impl DictArg {
    fn load(&self) -> Result<Dictionary> {
        Dictionary::load_or_builtin(self.dict.as_deref())
    }
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long, value_enum, default_value = "heuristic", env = "COMPATKG_ORACLE")]
    oracle: OracleChoice,
    /// URL of the QA service for the remote oracle.
    #[arg(long, env = "COMPATKG_ORACLE_ENDPOINT")]
    oracle_endpoint: Option<String>,
    #[arg(long, default_value_t = 10_000, env = "COMPATKG_ORACLE_TIMEOUT_MS")]
    oracle_timeout_ms: u64,
    /// Upper bound on concurrent remote requests.
    #[arg(long, default_value_t = 8, env = "COMPATKG_ORACLE_MAX_IN_FLIGHT")]
    oracle_max_in_flight: usize,
    /// Cue lexicon for the heuristic oracle (JSON with `compatible` and `incompatible` lists).
    #[arg(long, env = "COMPATKG_ORACLE_LEXICON")]
    oracle_lexicon: Option<PathBuf>,
    #[arg(long, default_value = DEFAULT_TEMPLATE, env = "COMPATKG_QUESTION_TEMPLATE")]
    question_template: String,
}

impl OracleArgs {
    fn config(&self) -> OracleConfig {
        OracleConfig {
            kind: match self.oracle {
                OracleChoice::Heuristic => OracleKind::Heuristic,
                OracleChoice::Remote => OracleKind::Remote,
            },
            endpoint: self.oracle_endpoint.clone(),
            timeout: Duration::from_millis(self.oracle_timeout_ms),
            max_in_flight: self.oracle_max_in_flight,
            lexicon: self.oracle_lexicon.clone(),
            template: self.question_template.clone(),
        }
    }
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long, env = "COMPATKG_CORPUS")]
    corpus: PathBuf,
    #[arg(long, env = "COMPATKG_FILTERS")]
    filters: Option<PathBuf>,
    /// Where the filtered posts go (JSON lines).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct InferArgs {
    /// Filtered posts from `ingest`.
    #[arg(long)]
    posts: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    dict: DictArg,
    #[command(flatten)]
    oracle: OracleArgs,
    #[arg(long, default_value_t = 1, env = "COMPATKG_PARALLELISM")]
    parallelism: usize,
}

#[derive(Args, Debug)]
struct BuildArgs {
    #[arg(long)]
    verdicts: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[arg(long, env = "COMPATKG_CORPUS")]
    corpus: PathBuf,
    #[arg(long, env = "COMPATKG_FILTERS")]
    filters: Option<PathBuf>,
    #[command(flatten)]
    dict: DictArg,
    #[command(flatten)]
    oracle: OracleArgs,
    /// Directory for filtered.jsonl, verdicts.jsonl, graph.json and report.json.
    #[arg(long, env = "COMPATKG_OUT_DIR")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 1, env = "COMPATKG_PARALLELISM")]
    parallelism: usize,
}

#[derive(Args, Debug)]
struct QueryArgs {
    #[arg(long, env = "COMPATKG_GRAPH")]
    graph: PathBuf,
    #[command(flatten)]
    dict: DictArg,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Also write the resulting subgraph here.
    #[arg(long)]
    subgraph_out: Option<PathBuf>,
    /// Optional remote query parser; falls back to local parsing on failure.
    #[arg(long, env = "COMPATKG_QUERY_PARSER_ENDPOINT")]
    parser_endpoint: Option<String>,
    #[arg(long, default_value_t = 5_000)]
    parser_timeout_ms: u64,
    text: String,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[arg(long, env = "COMPATKG_GRAPH")]
    graph: PathBuf,
    #[arg(long)]
    env: PathBuf,
    #[command(flatten)]
    dict: DictArg,
    /// Also list environment pairs the graph knows nothing about.
    #[arg(long)]
    report_unknown: bool,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, env = "COMPATKG_GRAPH")]
    graph: PathBuf,
    #[arg(long, env = "COMPATKG_STATS")]
    stats: Option<PathBuf>,
    #[command(flatten)]
    dict: DictArg,
    /// Corpus file providing post titles for relation details.
    #[arg(long, env = "COMPATKG_POSTS")]
    posts: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1", env = "COMPATKG_HOST")]
    host: String,
    #[arg(long, default_value_t = DEFAULT_PORT, env = "COMPATKG_PORT")]
    port: u16,
    /// Allowed browser origin; any origin when absent.
    #[arg(long, env = "COMPATKG_CORS_ORIGIN")]
    cors_origin: Option<String>,
    #[arg(long, default_value = DEFAULT_URL_TEMPLATE, env = "COMPATKG_URL_TEMPLATE")]
    url_template: String,
}

#[derive(Args, Debug)]
struct RecognizeArgs {
    #[command(flatten)]
    dict: DictArg,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    text: String,
}

fn print_json<T: Serialize>(value: &T) {
    outln!(
        "{}",
        serde_json::to_string_pretty(value).expect("output serializes")
    );
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => {
            let filters = FilterConfig::load_or_builtin(a.filters.as_deref())?;
            let out = pipeline::ingest(&a.corpus, &filters)?;
            write_posts(&a.out, &out.posts)?;
            let f = out.funnel;
            outln!(
                "read {}, malformed {}, DL-tagged {}, with cues {}, kept {}",
                f.input,
                out.malformed.len(),
                f.after_tags,
                f.after_cues,
                f.after_accepted
            );
        }
        Command::Infer(a) => {
            let posts = pipeline::read_posts(&a.posts)?;
            let recognizer = Recognizer::new(a.dict.load()?);
            let cfg = a.oracle.config();
            let oracle = OracleHandle::from_config(&cfg)?;
            if a.parallelism == 0 {
                return Err(Error::Config("parallelism must be at least 1".into()));
            }
            let pool = pipeline::thread_pool(a.parallelism)?;
            let (verdicts, stats) =
                pipeline::infer_posts(&posts, &recognizer, &oracle, &cfg.template, &pool);
            for d in oracle.diagnostics() {
                log::warn!("oracle: {d}");
            }
            pipeline::write_verdicts(&a.out, &verdicts)?;
            outln!(
                "{} candidate paragraph(s), {} verdict(s): {} compatible, {} incompatible, {} unknown",
                stats.candidate_paragraphs,
                verdicts.len(),
                stats.compatible,
                stats.incompatible,
                stats.unknown
            );
        }
        Command::Build(a) => {
            let verdicts = pipeline::read_verdicts(&a.verdicts)?;
            let (graph, stats) = pipeline::build(&verdicts)?;
            save_graph(&graph, &a.out)?;
            outln!(
                "{} relation(s) over {} node(s); {} neutral pair(s) discarded",
                stats.relations,
                graph.nodes().len(),
                stats.neutral_discarded
            );
        }
        Command::Pipeline(a) => {
            let cfg = PipelineConfig {
                corpus: a.corpus,
                filters: a.filters,
                dictionary: a.dict.dict,
                oracle: a.oracle.config(),
                out_dir: a.out_dir,
                parallelism: a.parallelism,
            };
            let out = pipeline::run_pipeline(&cfg)?;
            out!("{}", out.report.render());
        }
        Command::Query(a) => {
            let graph = load_graph(&a.graph)?;
            let recognizer = Recognizer::new(a.dict.load()?);
            let query = match &a.parser_endpoint {
                Some(url) => {
                    RemoteQueryParser::new(url, Duration::from_millis(a.parser_timeout_ms))
                        .parse(&a.text, &recognizer)?
                }
                None => parse_query(&a.text, &recognizer)?,
            };
            let resp = resolve(&graph, &query);
            if let Some(path) = &a.subgraph_out {
                let mut json =
                    serde_json::to_string_pretty(&resp.subgraph).expect("subgraph serializes");
                json.push('\n');
                std::fs::write(path, json).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
            }
            match a.format {
                Format::Machine => print_json(&resp),
                Format::Table => out!("{}", render_table(&resp)),
            }
        }
        Command::Check(a) => {
            let graph = load_graph(&a.graph)?;
            let dict = a.dict.load()?;
            let env = parse_environment(&a.env, &dict)?;
            for d in &env.diagnostics {
                eprintln!("warning: {d}");
            }
            let (issues, unknown) = checker::check_with_unknown(&graph, &env);
            match a.format {
                Format::Machine => {
                    print_json(&issues);
                    if a.report_unknown {
                        for u in &unknown {
                            eprintln!("unknown: {} / {}", u.a, u.b);
                        }
                    }
                }
                Format::Table => out!(
                    "{}",
                    checker::render_issues(&issues, a.report_unknown.then_some(unknown.as_slice()))
                ),
            }
        }
        Command::Eval(a) => {
            let pred = load_pairs(&a.pred)?;
            let truth = load_pairs(&a.truth)?;
            let m = evaluate_metrics(&pred, &truth);
            match a.format {
                Format::Machine => {
                    #[derive(Serialize)]
                    struct Out<'a> {
                        schema_version: u32,
                        #[serde(flatten)]
                        metrics: &'a Metrics,
                    }
                    print_json(&Out {
                        schema_version: SCHEMA_VERSION,
                        metrics: &m,
                    });
                }
                Format::Table => out!("{}", render_metrics(&m)),
            }
        }
        Command::Serve(a) => {
            let cfg = ServiceConfig {
                host: a.host,
                port: a.port,
                graph: a.graph,
                stats: a.stats,
                dictionary: a.dict.dict,
                posts: a.posts,
                cors_origin: a.cors_origin,
                url_template: a.url_template,
            };
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::Io {
                path: PathBuf::from("<runtime>"),
                source: e,
            })?;
            runtime.block_on(service::serve(&cfg, async {
                let _ = tokio::signal::ctrl_c().await;
                log::info!("shutting down");
            }))?;
        }
        Command::Recognize(a) => {
            let recognizer = Recognizer::new(a.dict.load()?);
            let mentions = recognizer.recognize(&a.text);
            let bindings = recognizer.bind(&a.text);
            match a.format {
                Format::Machine => {
                    #[derive(Serialize)]
                    struct Out<'a> {
                        schema_version: u32,
                        mentions: &'a [compatkg::recognizer::Mention],
                        bindings: &'a [compatkg::recognizer::Binding],
                    }
                    print_json(&Out {
                        schema_version: SCHEMA_VERSION,
                        mentions: &mentions,
                        bindings: &bindings,
                    });
                }
                Format::Table => {
                    for m in &mentions {
                        let what = match (&m.component_id, &m.version) {
                            (Some(c), Some(v)) => format!("{c} {v}"),
                            (Some(c), None) => c.clone(),
                            (None, Some(v)) => v.to_string(),
                            (None, None) => String::new(),
                        };
                        outln!(
                            "{:>4}..{:<4} {:<10} {:<22} {}",
                            m.start,
                            m.end,
                            format!("{:?}", m.kind).to_lowercase(),
                            m.text,
                            what
                        );
                    }
                    outln!();
                    for b in &bindings {
                        outln!("bound: {}", b.component);
                    }
                }
            }
        }
    }
    Ok(())
}

fn render_metrics(m: &Metrics) -> String {
    let show = |x: Option<f64>| x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"));
    let mut s = String::new();
    let _ = writeln!(s, "true positives  {}", m.true_positives);
    let _ = writeln!(s, "false positives {}", m.false_positives);
    let _ = writeln!(s, "false negatives {}", m.false_negatives);
    let _ = writeln!(s, "precision       {}", show(m.precision));
    let _ = writeln!(s, "recall          {}", show(m.recall));
    let _ = writeln!(s, "f1              {}", show(m.f1));
    s
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("COMPATKG_LOG", "warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
