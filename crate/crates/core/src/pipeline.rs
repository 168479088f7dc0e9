//! The construction pipeline: ingest, infer, build.
//!
//! Each stage can run on its own from line-oriented intermediate files.
//! Work inside a stage is spread over a rayon pool; results are collected in
//! input order, so output does not depend on the thread count.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{
    candidate_paragraphs, filter_posts_with_stats, load_corpus, write_posts, FilterConfig,
    FilterStats, Post, RecordError,
};
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::graph::{aggregate, save_graph, AggregateStats, KnowledgeGraph};
use crate::inference::{
    infer_paragraph, CompatibilityQuestion, CueLexicon, HeuristicOracle, Label, Oracle,
    RemoteOracle, Verdict, VerdictSource, DEFAULT_MAX_IN_FLIGHT, DEFAULT_TEMPLATE,
};
use crate::recognizer::Recognizer;
use crate::SCHEMA_VERSION;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OracleKind {
    #[default]
    Heuristic,
    Remote,
}

#[derive(Clone, Debug)]
pub struct OracleConfig {
    pub kind: OracleKind,
    pub endpoint: Option<String>,
    pub timeout: Duration,
    pub max_in_flight: usize,
    /// Cue lexicon for the heuristic oracle; built-in when absent.
    pub lexicon: Option<PathBuf>,
    pub template: String,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            kind: OracleKind::Heuristic,
            endpoint: None,
            timeout: Duration::from_secs(10),
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            lexicon: None,
            template: DEFAULT_TEMPLATE.to_string(),
        }
    }
}

/// A ready oracle plus access to its failure log.
pub enum OracleHandle {
    Heuristic(HeuristicOracle),
    Remote(RemoteOracle),
}

impl OracleHandle {
    pub fn from_config(cfg: &OracleConfig) -> Result<OracleHandle> {
        match cfg.kind {
            OracleKind::Heuristic => Ok(OracleHandle::Heuristic(match &cfg.lexicon {
                Some(p) => HeuristicOracle::load(p)?,
                None => HeuristicOracle::new(CueLexicon::default()),
            })),
            OracleKind::Remote => {
                let endpoint = cfg
                    .endpoint
                    .clone()
                    .ok_or_else(|| Error::Config("the remote oracle needs an endpoint".into()))?;
                Ok(OracleHandle::Remote(RemoteOracle::new(
                    endpoint,
                    cfg.timeout,
                    cfg.max_in_flight,
                )))
            }
        }
    }

    pub fn diagnostics(&self) -> Vec<String> {
        match self {
            OracleHandle::Heuristic(_) => Vec::new(),
            OracleHandle::Remote(r) => r.diagnostics().snapshot(),
        }
    }
}

impl Oracle for OracleHandle {
    fn answer(&self, q: &CompatibilityQuestion) -> Label {
        match self {
            OracleHandle::Heuristic(h) => h.answer(q),
            OracleHandle::Remote(r) => r.answer(q),
        }
    }

    fn source(&self) -> VerdictSource {
        match self {
            OracleHandle::Heuristic(h) => h.source(),
            OracleHandle::Remote(r) => r.source(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    pub filters: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub oracle: OracleConfig,
    /// Receives `filtered.jsonl`, `verdicts.jsonl`, `graph.json` and `report.json`.
    pub out_dir: PathBuf,
    pub parallelism: usize,
}

impl PipelineConfig {
    pub fn new(corpus: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            corpus: corpus.into(),
            filters: None,
            dictionary: None,
            oracle: OracleConfig::default(),
            out_dir: out_dir.into(),
            parallelism: 1,
        }
    }

    pub fn filtered_path(&self) -> PathBuf {
        self.out_dir.join("filtered.jsonl")
    }

    pub fn verdicts_path(&self) -> PathBuf {
        self.out_dir.join("verdicts.jsonl")
    }

    pub fn graph_path(&self) -> PathBuf {
        self.out_dir.join("graph.json")
    }

    pub fn report_path(&self) -> PathBuf {
        self.out_dir.join("report.json")
    }

    fn validate(&self) -> Result<()> {
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        for p in [
            Some(&self.corpus),
            self.filters.as_ref(),
            self.dictionary.as_ref(),
        ]
        .into_iter()
        .flatten()
        {
            if !p.exists() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
                ));
            }
        }
        Ok(())
    }
}

pub fn thread_pool(parallelism: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

#[derive(Debug)]
pub struct IngestOutcome {
    pub posts: Vec<Post>,
    pub funnel: FilterStats,
    pub malformed: Vec<RecordError>,
}

pub fn ingest(corpus: &Path, filters: &FilterConfig) -> Result<IngestOutcome> {
    let loaded = load_corpus(corpus)?;
    for e in &loaded.errors {
        log::warn!(
            "{}:{}: skipped record: {}",
            corpus.display(),
            e.line,
            e.message
        );
    }
    let (posts, funnel) = filter_posts_with_stats(&loaded.posts, filters);
    Ok(IngestOutcome {
        posts,
        funnel,
        malformed: loaded.errors,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct InferStats {
    pub posts: usize,
    pub paragraphs: usize,
    pub candidate_paragraphs: usize,
    pub posts_with_candidates: usize,
    pub compatible: usize,
    pub incompatible: usize,
    pub unknown: usize,
}

/// Recognizes, binds and asks the oracle about every candidate paragraph.
/// Verdicts come back in post order, then paragraph order.
pub fn infer_posts(
    posts: &[Post],
    recognizer: &Recognizer,
    oracle: &dyn Oracle,
    template: &str,
    pool: &rayon::ThreadPool,
) -> (Vec<Verdict>, InferStats) {
    let per_post: Vec<(usize, usize, Vec<Verdict>)> = pool.install(|| {
        posts
            .par_iter()
            .map(|post| {
                let bound: Vec<_> = post.body.iter().map(|p| recognizer.bind(p)).collect();
                let candidates = candidate_paragraphs(post, &bound);
                let verdicts = candidates
                    .iter()
                    .flat_map(|&i| infer_paragraph(post, i, &bound[i], oracle, template))
                    .collect();
                (post.body.len(), candidates.len(), verdicts)
            })
            .collect()
    });
    let mut stats = InferStats {
        posts: posts.len(),
        ..InferStats::default()
    };
    let mut verdicts = Vec::new();
    for (paragraphs, candidates, vs) in per_post {
        stats.paragraphs += paragraphs;
        stats.candidate_paragraphs += candidates;
        stats.posts_with_candidates += usize::from(candidates > 0);
        for v in &vs {
            match v.label {
                Label::Compatible => stats.compatible += 1,
                Label::Incompatible => stats.incompatible += 1,
                Label::Unknown => stats.unknown += 1,
            }
        }
        verdicts.extend(vs);
    }
    (verdicts, stats)
}

pub fn write_verdicts(path: &Path, verdicts: &[Verdict]) -> Result<()> {
    let mut out = Vec::new();
    for v in verdicts {
        serde_json::to_writer(&mut out, v).expect("verdicts serialize");
        out.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Reads verdicts written by [`write_verdicts`]. Any bad line is fatal: the
/// file is machine-written, so damage means the stage has to be rerun.
pub fn read_verdicts(path: &Path) -> Result<Vec<Verdict>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Verdict = serde_json::from_str(&line)
            .map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        out.push(v);
    }
    Ok(out)
}

/// Reads posts in the corpus format without filtering. Bad lines are fatal.
pub fn read_posts(path: &Path) -> Result<Vec<Post>> {
    let loaded = load_corpus(path)?;
    if let Some(e) = loaded.errors.first() {
        return Err(Error::format(
            path,
            format!("line {}: {}", e.line, e.message),
        ));
    }
    Ok(loaded.posts)
}

pub fn build(verdicts: &[Verdict]) -> Result<(KnowledgeGraph, AggregateStats)> {
    let (relations, stats) = aggregate(verdicts);
    Ok((KnowledgeGraph::build(relations)?, stats))
}

pub const REFERENCE_FUNNEL: &str =
    "reference funnel at full Stack Overflow scale (not reproduced here): \
53M posts -> 4.9M DL-tagged -> 549K with cue phrases -> 355K questions and accepted answers";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub funnel: FilterStats,
    pub malformed_records: usize,
    pub inference: InferStats,
    pub aggregation: AggregateStats,
    pub nodes: usize,
    pub relations_kept: usize,
    pub neutral_discarded: usize,
    pub oracle_failures: usize,
    pub reference: String,
}

impl RunReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let f = &self.funnel;
        let _ = writeln!(s, "posts read             {:>8}", f.input);
        let _ = writeln!(s, "  malformed (skipped)  {:>8}", self.malformed_records);
        let _ = writeln!(s, "  with DL tags         {:>8}", f.after_tags);
        let _ = writeln!(s, "  with cue phrases     {:>8}", f.after_cues);
        let _ = writeln!(s, "  questions + accepted {:>8}", f.after_accepted);
        let i = &self.inference;
        let _ = writeln!(s, "paragraphs             {:>8}", i.paragraphs);
        let _ = writeln!(s, "  candidates           {:>8}", i.candidate_paragraphs);
        let _ = writeln!(s, "posts with candidates  {:>8}", i.posts_with_candidates);
        let _ = writeln!(
            s,
            "verdicts               {:>8}  (compatible {}, incompatible {}, unknown {})",
            i.compatible + i.incompatible + i.unknown,
            i.compatible,
            i.incompatible,
            i.unknown
        );
        let _ = writeln!(
            s,
            "  split posts dropped  {:>8}",
            self.aggregation.split_posts
        );
        let _ = writeln!(s, "pairs                  {:>8}", self.aggregation.pairs);
        let _ = writeln!(s, "  relations kept       {:>8}", self.relations_kept);
        let _ = writeln!(s, "  neutral discarded    {:>8}", self.neutral_discarded);
        let _ = writeln!(s, "nodes                  {:>8}", self.nodes);
        if self.oracle_failures > 0 {
            let _ = writeln!(s, "oracle failures        {:>8}", self.oracle_failures);
        }
        let _ = writeln!(s, "\n{}", self.reference);
        s
    }
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub graph: KnowledgeGraph,
    pub report: RunReport,
}

/// Runs ingest, infer and build, writing every intermediate to `out_dir`.
/// Errors carry the name of the failing stage.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;

    let filters =
        FilterConfig::load_or_builtin(cfg.filters.as_deref()).map_err(|e| e.in_stage("ingest"))?;
    let dict =
        Dictionary::load_or_builtin(cfg.dictionary.as_deref()).map_err(|e| e.in_stage("infer"))?;
    let oracle = OracleHandle::from_config(&cfg.oracle).map_err(|e| e.in_stage("infer"))?;
    let pool = thread_pool(cfg.parallelism)?;

    let ingested = ingest(&cfg.corpus, &filters).map_err(|e| e.in_stage("ingest"))?;
    write_posts(&cfg.filtered_path(), &ingested.posts).map_err(|e| e.in_stage("ingest"))?;

    let recognizer = Recognizer::new(dict);
    let (verdicts, infer_stats) = infer_posts(
        &ingested.posts,
        &recognizer,
        &oracle,
        &cfg.oracle.template,
        &pool,
    );
    write_verdicts(&cfg.verdicts_path(), &verdicts).map_err(|e| e.in_stage("infer"))?;
    let failures = oracle.diagnostics();
    for d in &failures {
        log::warn!("oracle: {d}");
    }

    let (graph, agg) = build(&verdicts).map_err(|e| e.in_stage("build"))?;
    save_graph(&graph, &cfg.graph_path()).map_err(|e| e.in_stage("build"))?;

    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        funnel: ingested.funnel,
        malformed_records: ingested.malformed.len(),
        inference: infer_stats,
        nodes: graph.nodes().len(),
        relations_kept: agg.relations,
        neutral_discarded: agg.neutral_discarded,
        aggregation: agg,
        oracle_failures: failures.len(),
        reference: REFERENCE_FUNNEL.to_string(),
    };
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    std::fs::write(cfg.report_path(), json)
        .map_err(|e| Error::io(cfg.report_path(), e).in_stage("build"))?;
    Ok(PipelineOutput { graph, report })
}
