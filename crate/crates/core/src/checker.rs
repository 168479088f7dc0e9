//! Environment checking and detection metrics.
//!
//! An environment file lists pinned components, one per line:
//!
//! ```text
//! # comment
//! tensorflow==1.13
//! cuda 10.1 @driver
//! ```
//!
//! Every pair of entries is looked up in the graph. Pairs with a
//! negative-confidence match become issues; compatible and unknown pairs stay
//! silent.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dictionary::{Dictionary, Layer};
use crate::error::{Error, Result};
use crate::graph::{confidence_score, Evidence, KnowledgeGraph, PairKey};
use crate::query::{lookup_pair, Operand};
use crate::recognizer::VersionedComponent;
use crate::version::Version;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EnvironmentSpec {
    pub entries: Vec<VersionedComponent>,
    pub source: String,
    /// Lines that were skipped, with the reason.
    pub diagnostics: Vec<String>,
}

/// One entry as supplied over the API.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryInput {
    pub component: String,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<String>,
}

static LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?P<name>[A-Za-z0-9][A-Za-z0-9_.\-]*)\s*(?:==\s*|\s+)(?P<version>\S+)(?:\s+@(?P<layer>\S+))?$")
        .expect("valid regex")
});

fn resolve_entry(
    dict: &Dictionary,
    name: &str,
    version: &str,
    layer: Option<&str>,
) -> std::result::Result<VersionedComponent, String> {
    let entry = dict
        .resolve(name)
        .ok_or_else(|| format!("unknown component {name:?}"))?;
    if version
        .chars()
        .any(|c| matches!(c, '<' | '>' | '~' | '!' | ',' | '*' | '='))
    {
        return Err(format!("version ranges are not supported: {version:?}"));
    }
    let version = Version::parse(version).map_err(|_| format!("not a version: {version:?}"))?;
    if let Some(layer) = layer {
        let declared: Layer = layer
            .parse()
            .map_err(|_| format!("unknown layer @{layer}"))?;
        if declared != entry.layer {
            return Err(format!(
                "{} is a {} component, not {declared}",
                entry.id, entry.layer
            ));
        }
    }
    Ok(VersionedComponent::new(&entry.id, entry.layer, version))
}

impl EnvironmentSpec {
    /// Builds a spec from already-split entries. Bad entries become
    /// diagnostics; a repeated component keeps its first version.
    pub fn from_entries(
        inputs: &[EntryInput],
        source: impl Into<String>,
        dict: &Dictionary,
    ) -> Result<EnvironmentSpec> {
        let source = source.into();
        let mut spec = EnvironmentSpec {
            entries: Vec::new(),
            source: source.clone(),
            diagnostics: Vec::new(),
        };
        for (i, input) in inputs.iter().enumerate() {
            spec.push(
                i + 1,
                resolve_entry(
                    dict,
                    &input.component,
                    &input.version,
                    input.layer.as_deref(),
                ),
            );
        }
        spec.finish()
    }

    pub fn parse_str(
        text: &str,
        source: impl Into<String>,
        dict: &Dictionary,
    ) -> Result<EnvironmentSpec> {
        let mut spec = EnvironmentSpec {
            entries: Vec::new(),
            source: source.into(),
            diagnostics: Vec::new(),
        };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parsed = match LINE.captures(line) {
                Some(c) => resolve_entry(
                    dict,
                    &c["name"],
                    &c["version"],
                    c.name("layer").map(|m| m.as_str()),
                ),
                None => Err(format!("cannot parse {line:?}")),
            };
            spec.push(i + 1, parsed);
        }
        spec.finish()
    }

    fn push(&mut self, line: usize, parsed: std::result::Result<VersionedComponent, String>) {
        match parsed {
            Ok(vc) => {
                if self
                    .entries
                    .iter()
                    .any(|e| e.component_id == vc.component_id)
                {
                    self.diagnostics.push(format!(
                        "{}:{line}: {} listed again; keeping the first version",
                        self.source, vc.component_id
                    ));
                } else {
                    self.entries.push(vc);
                }
            }
            Err(msg) => self
                .diagnostics
                .push(format!("{}:{line}: {msg}", self.source)),
        }
    }

    fn finish(self) -> Result<EnvironmentSpec> {
        if self.entries.is_empty() {
            return Err(Error::format(
                &self.source,
                "no resolvable environment entries",
            ));
        }
        Ok(self)
    }
}

pub fn parse_environment(path: &Path, dict: &Dictionary) -> Result<EnvironmentSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EnvironmentSpec::parse_str(&text, path.display().to_string(), dict)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Issue {
    pub a: VersionedComponent,
    pub b: VersionedComponent,
    pub confidence: f64,
    pub n_compatible: u64,
    pub n_incompatible: u64,
    pub evidence: Vec<Evidence>,
    pub matched_nodes: Vec<VersionedComponent>,
}

impl Issue {
    pub fn pair_key(&self) -> PairKey {
        PairKey::new(&self.a, &self.b)
    }
}

/// Environment pairs the graph has nothing to say about.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct UnknownPair {
    pub a: VersionedComponent,
    pub b: VersionedComponent,
}

fn canonical(
    x: &VersionedComponent,
    y: &VersionedComponent,
) -> (VersionedComponent, VersionedComponent) {
    if x.key() <= y.key() {
        (x.clone(), y.clone())
    } else {
        (y.clone(), x.clone())
    }
}

fn operand(vc: &VersionedComponent) -> Operand {
    Operand::new(&vc.component_id, Some(vc.version.clone()))
}

/// Issues for every negatively matched pair, most incompatible first.
pub fn check_environment(graph: &KnowledgeGraph, env: &EnvironmentSpec) -> Vec<Issue> {
    check_with_unknown(graph, env).0
}

/// Like [`check_environment`], also returning the pairs without any
/// matching relation.
pub fn check_with_unknown(
    graph: &KnowledgeGraph,
    env: &EnvironmentSpec,
) -> (Vec<Issue>, Vec<UnknownPair>) {
    let mut issues = Vec::new();
    let mut unknown = Vec::new();
    for (i, x) in env.entries.iter().enumerate() {
        for y in &env.entries[i + 1..] {
            if x.component_id == y.component_id {
                continue;
            }
            let (a, b) = canonical(x, y);
            let Some(m) = lookup_pair(graph, &operand(&a), &operand(&b)) else {
                unknown.push(UnknownPair { a, b });
                continue;
            };
            if m.n_incompatible <= m.n_compatible {
                continue;
            }
            let mut nodes = BTreeSet::new();
            for &li in &m.links {
                let l = graph.link(li);
                nodes.insert(l.a.clone());
                nodes.insert(l.b.clone());
            }
            issues.push(Issue {
                a,
                b,
                confidence: m.confidence(),
                n_compatible: m.n_compatible,
                n_incompatible: m.n_incompatible,
                evidence: m.evidence,
                matched_nodes: nodes.into_iter().collect(),
            });
        }
    }
    issues.sort_by(|p, q| {
        let cp = confidence_score(p.n_compatible, p.n_incompatible).expect("issue has evidence");
        let cq = confidence_score(q.n_compatible, q.n_incompatible).expect("issue has evidence");
        cp.cmp(&cq).then_with(|| p.pair_key().cmp(&q.pair_key()))
    });
    unknown.sort_by_key(|u| PairKey::new(&u.a, &u.b));
    (issues, unknown)
}

pub fn render_issues(issues: &[Issue], unknown: Option<&[UnknownPair]>) -> String {
    let mut out = String::new();
    if issues.is_empty() {
        out.push_str("no incompatibilities found\n");
    } else {
        let _ = writeln!(out, "{:<28} {:<28} {:>7} {:>6}", "A", "B", "conf", "posts");
        for i in issues {
            let _ = writeln!(
                out,
                "{:<28} {:<28} {:>7.3} {:>6}",
                i.a.to_string(),
                i.b.to_string(),
                i.confidence,
                i.evidence.len()
            );
        }
    }
    if let Some(unknown) = unknown {
        let _ = writeln!(out, "\n{} pair(s) without knowledge:", unknown.len());
        for u in unknown {
            let _ = writeln!(out, "  {} / {}", u.a, u.b);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// Absent when nothing was reported.
    pub precision: Option<f64>,
    /// Absent when the truth is empty.
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Metrics {
        let ratio = |n: usize, d: usize| (d > 0).then(|| n as f64 / d as f64);
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        Metrics {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            precision,
            recall,
            f1: precision.zip(recall).and_then(|(p, r)| f1_score(p, r)),
        }
    }
}

/// Harmonic mean; absent when both inputs are zero.
pub fn f1_score(precision: f64, recall: f64) -> Option<f64> {
    let sum = precision + recall;
    (sum > 0.0).then(|| 2.0 * precision * recall / sum)
}

pub fn evaluate_metrics<T: Ord>(reported: &BTreeSet<T>, truth: &BTreeSet<T>) -> Metrics {
    let tp = reported.intersection(truth).count();
    Metrics::from_counts(tp, reported.len() - tp, truth.len() - tp)
}

#[derive(Deserialize)]
struct PairSide {
    component: String,
    version: String,
}

#[derive(Deserialize)]
struct PairRecord {
    a: PairSide,
    b: PairSide,
}

/// Reads a JSON array of `{a: {component, version}, b: {...}}` objects.
/// Extra fields are ignored, so `check --format machine` output loads as-is.
pub fn load_pairs(path: &Path) -> Result<BTreeSet<PairKey>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pairs(&text).map_err(|msg| Error::format(path, msg))
}

pub fn parse_pairs(text: &str) -> std::result::Result<BTreeSet<PairKey>, String> {
    let records: Vec<PairRecord> = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let key = |s: &PairSide| -> std::result::Result<(String, String), String> {
        let v = Version::parse(&s.version).map_err(|e| e.to_string())?;
        Ok((s.component.to_lowercase(), v.normalized()))
    };
    records
        .iter()
        .map(|r| {
            let (x, y) = (key(&r.a)?, key(&r.b)?);
            Ok(if x <= y { PairKey(x, y) } else { PairKey(y, x) })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Relation, Stance};

    fn dict() -> Dictionary {
        Dictionary::builtin()
    }

    fn vc(id: &str, v: &str) -> VersionedComponent {
        VersionedComponent::new(
            id,
            dict().get(id).unwrap().layer,
            Version::parse(v).unwrap(),
        )
    }

    fn rel(a: (&str, &str), b: (&str, &str), c: u64, i: u64) -> Relation {
        let mut ev = Vec::new();
        for n in 0..c {
            ev.push(Evidence {
                post_id: n + 1,
                votes: 0,
                label: Stance::Compatible,
            });
        }
        for n in 0..i {
            ev.push(Evidence {
                post_id: 100 + n,
                votes: 0,
                label: Stance::Incompatible,
            });
        }
        Relation::from_evidence(vc(a.0, a.1), vc(b.0, b.1), ev)
    }

    fn env(text: &str) -> EnvironmentSpec {
        EnvironmentSpec::parse_str(text, "env", &dict()).unwrap()
    }

    #[test]
    fn parses_line_forms() {
        let e = env("tensorflow==1.13\ncuda 10.1 @driver\n# note\n\nleftpad==1.0\n");
        assert_eq!(
            e.entries,
            vec![vc("tensorflow", "1.13"), vc("cuda", "10.1")]
        );
        assert_eq!(e.diagnostics.len(), 1);
        assert!(e.diagnostics[0].contains("leftpad"));
    }

    #[test]
    fn aliases_and_wildcards() {
        let e = env("tf==2.x\ncudatoolkit 10.0\nnumpy == 1.16.2  # pinned\n");
        assert_eq!(
            e.entries,
            vec![
                vc("tensorflow", "2.x"),
                vc("cuda", "10.0"),
                vc("numpy", "1.16.2")
            ]
        );
    }

    #[test]
    fn bad_lines_are_skipped() {
        let e = env("numpy>=1.16\ncuda 10.1 @library\npython 3.7 @nowhere\nthis is not a line\nnumpy==1.17\nnumpy==1.18\n");
        assert_eq!(e.entries, vec![vc("numpy", "1.17")]);
        assert_eq!(e.diagnostics.len(), 5);
    }

    #[test]
    fn empty_environment_is_fatal() {
        assert!(EnvironmentSpec::parse_str("leftpad==1.0\n", "env", &dict()).is_err());
        assert!(EnvironmentSpec::parse_str("", "env", &dict()).is_err());
    }

    #[test]
    fn flags_negative_relation() {
        let g = KnowledgeGraph::build(vec![rel(("tensorflow", "1.13"), ("cuda", "10.1"), 0, 1)])
            .unwrap();
        let issues = check_environment(&g, &env("tensorflow==1.13\ncuda==10.1\n"));
        assert_eq!(issues.len(), 1);
        assert!(issues[0].confidence < 0.0);
        assert!(!issues[0].evidence.is_empty());
    }

    #[test]
    fn unknown_and_compatible_pairs_are_silent() {
        let g = KnowledgeGraph::build(vec![rel(("tensorflow", "1.13"), ("cuda", "10.0"), 2, 0)])
            .unwrap();
        let e = env("tensorflow==1.13\ncuda==10.0\npython==3.7\n");
        let (issues, unknown) = check_with_unknown(&g, &e);
        assert!(issues.is_empty());
        assert_eq!(unknown.len(), 2);
    }

    #[test]
    fn prefix_subsumption() {
        let g = KnowledgeGraph::build(vec![rel(("numpy", "1.2"), ("scipy", "2.0"), 0, 2)]).unwrap();
        let issues = check_environment(&g, &env("numpy==1.2.3\nscipy==2.0\n"));
        assert_eq!(issues.len(), 1);
        assert_eq!(
            issues[0].matched_nodes,
            vec![vc("numpy", "1.2"), vc("scipy", "2.0")]
        );
        assert_eq!(issues[0].a, vc("numpy", "1.2.3"));
    }

    #[test]
    fn concrete_beats_wildcard() {
        let g = KnowledgeGraph::build(vec![
            rel(("python", "3.x"), ("tensorflow", "1.13"), 0, 1),
            rel(("python", "3.7"), ("tensorflow", "1.13"), 1, 0),
        ])
        .unwrap();
        assert!(check_environment(&g, &env("python 3.7\ntensorflow 1.13\n")).is_empty());
        assert_eq!(
            check_environment(&g, &env("python 3.5\ntensorflow 1.13\n")).len(),
            1
        );
    }

    #[test]
    fn issues_sorted_most_incompatible_first() {
        let g = KnowledgeGraph::build(vec![
            rel(("keras", "2.3"), ("tensorflow", "1.13"), 1, 2),
            rel(("cuda", "10.1"), ("tensorflow", "1.13"), 0, 3),
        ])
        .unwrap();
        let issues = check_environment(&g, &env("keras 2.3\ntensorflow 1.13\ncuda 10.1\n"));
        assert_eq!(issues.len(), 2);
        assert_eq!(issues[0].a.component_id, "cuda");
        assert!(issues[0].confidence < issues[1].confidence);
    }

    #[test]
    fn removing_entries_never_adds_issues() {
        let g = KnowledgeGraph::build(vec![
            rel(("keras", "2.3"), ("tensorflow", "1.13"), 1, 2),
            rel(("cuda", "10.1"), ("tensorflow", "1.13"), 0, 3),
            rel(("cuda", "10.1"), ("ubuntu", "18.04"), 0, 1),
        ])
        .unwrap();
        let full = env("keras 2.3\ntensorflow 1.13\ncuda 10.1\nubuntu 18.04\n");
        let all: BTreeSet<_> = check_environment(&g, &full)
            .iter()
            .map(Issue::pair_key)
            .collect();
        for skip in 0..full.entries.len() {
            let mut smaller = full.clone();
            smaller.entries.remove(skip);
            let some: BTreeSet<_> = check_environment(&g, &smaller)
                .iter()
                .map(Issue::pair_key)
                .collect();
            assert!(some.is_subset(&all));
        }
    }

    #[test]
    fn metrics_examples() {
        let truth: BTreeSet<u32> = (0..17).collect();
        let reported: BTreeSet<u32> = (0..11).chain([100]).collect();
        let m = evaluate_metrics(&reported, &truth);
        assert!((m.precision.unwrap() - 0.917).abs() < 0.001);
        assert!((m.recall.unwrap() - 0.647).abs() < 0.001);
        assert!((m.f1.unwrap() - 0.759).abs() < 0.001);

        let perfect = evaluate_metrics(&truth, &truth);
        assert_eq!(
            (perfect.precision, perfect.recall, perfect.f1),
            (Some(1.0), Some(1.0), Some(1.0))
        );

        let none = evaluate_metrics(&BTreeSet::new(), &truth);
        assert_eq!(
            (none.precision, none.recall, none.f1),
            (None, Some(0.0), None)
        );
    }

    #[test]
    fn metrics_swap_symmetry() {
        let x: BTreeSet<u32> = [1, 2, 3, 4].into();
        let y: BTreeSet<u32> = [3, 4, 5].into();
        let m = evaluate_metrics(&x, &y);
        let w = evaluate_metrics(&y, &x);
        assert_eq!(m.precision, w.recall);
        assert_eq!(m.recall, w.precision);
    }

    #[test]
    fn pairs_file_accepts_issue_output() {
        let g = KnowledgeGraph::build(vec![rel(("tensorflow", "1.13"), ("cuda", "10.1"), 0, 1)])
            .unwrap();
        let issues = check_environment(&g, &env("tensorflow==1.13\ncuda==10.1\n"));
        let json = serde_json::to_string(&issues).unwrap();
        let pairs = parse_pairs(&json).unwrap();
        assert_eq!(pairs.len(), 1);
        assert!(pairs.contains(&issues[0].pair_key()));
        let reversed = r#"[{"a": {"component": "tensorflow", "version": "v1.13"}, "b": {"component": "cuda", "version": "10.1"}}]"#;
        assert_eq!(parse_pairs(reversed).unwrap(), pairs);
    }
}
