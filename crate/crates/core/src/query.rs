//! Search queries over the graph.
//!
//! Three forms are understood:
//!
//! * pair: two versioned components ("Does Python 3.6.8 work with Ubuntu 16.04.6?")
//! * versioned component ("Python 3.5")
//! * component without a version ("tensorflow")
//!
//! Query versions match node versions by segment prefix in either direction,
//! so "python 3.5" finds a `python 3.5.2` node. An exact node wins when one
//! exists.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::dictionary::Layer;
use crate::error::{Error, Result};
use crate::graph::{Evidence, KnowledgeGraph, LinkRecord, Relation};
use crate::inference::Label;
use crate::recognizer::{Recognizer, VersionedComponent};
use crate::version::Version;
use crate::SCHEMA_VERSION;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Pair,
    VersionedComponent,
    Component,
}

/// A component id with an optional version.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Operand {
    pub component: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<Version>,
}

impl Operand {
    pub fn new(component: impl Into<String>, version: Option<Version>) -> Self {
        Operand {
            component: component.into(),
            version,
        }
    }
}

impl std::fmt::Display for Operand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.version {
            Some(v) => write!(f, "{} {v}", self.component),
            None => f.write_str(&self.component),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub kind: QueryKind,
    pub first: Operand,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second: Option<Operand>,
    pub raw: String,
}

/// Recognizes components and versions in the query text.
/// Precedence: pair, then versioned component, then bare component.
pub fn parse_query(text: &str, recognizer: &Recognizer) -> Result<Query> {
    let mut bound: Vec<VersionedComponent> = Vec::new();
    for b in recognizer.bind(text) {
        if !bound
            .iter()
            .any(|x| x.component_id == b.component.component_id)
        {
            bound.push(b.component);
        }
    }
    let operand =
        |vc: &VersionedComponent| Operand::new(&vc.component_id, Some(vc.version.clone()));
    let raw = text.to_string();
    if bound.len() >= 2 {
        return Ok(Query {
            kind: QueryKind::Pair,
            first: operand(&bound[0]),
            second: Some(operand(&bound[1])),
            raw,
        });
    }
    if let Some(vc) = bound.first() {
        return Ok(Query {
            kind: QueryKind::VersionedComponent,
            first: operand(vc),
            second: None,
            raw,
        });
    }
    let mention = recognizer
        .recognize(text)
        .into_iter()
        .find_map(|m| m.component_id);
    match mention {
        Some(id) => Ok(Query {
            kind: QueryKind::Component,
            first: Operand::new(id, None),
            second: None,
            raw,
        }),
        None => Err(Error::UnrecognizedQuery {
            query: raw,
            known: recognizer.dictionary().ids().collect::<Vec<_>>().join(", "),
        }),
    }
}

#[derive(Serialize)]
struct ParserRequest<'a> {
    context: &'a str,
    question: &'a str,
}

#[derive(Deserialize)]
struct ParserResponse {
    operands: Vec<RemoteOperand>,
}

#[derive(Deserialize)]
struct RemoteOperand {
    component: String,
    #[serde(default)]
    version: Option<String>,
}

/// Optional remote query parser. Posts `{context, question}` and expects
/// `{operands: [{component, version?}, ...]}`; names go through the
/// dictionary. Any failure falls back to [`parse_query`].
#[derive(Debug)]
pub struct RemoteQueryParser {
    endpoint: String,
    agent: ureq::Agent,
}

impl RemoteQueryParser {
    pub const QUESTION: &'static str =
        "Which versioned software components does this query mention?";

    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        RemoteQueryParser {
            endpoint: endpoint.into(),
            agent: ureq::Agent::config_builder()
                .timeout_global(Some(timeout))
                .build()
                .into(),
        }
    }

    pub fn parse(&self, text: &str, recognizer: &Recognizer) -> Result<Query> {
        match self.try_remote(text, recognizer) {
            Some(q) => Ok(q),
            None => parse_query(text, recognizer),
        }
    }

    fn try_remote(&self, text: &str, recognizer: &Recognizer) -> Option<Query> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(ParserRequest {
                context: text,
                question: Self::QUESTION,
            })
            .ok()?;
        let parsed: ParserResponse = resp.body_mut().read_json().ok()?;
        let mut operands = Vec::new();
        for op in parsed.operands {
            let entry = recognizer.dictionary().resolve(&op.component)?;
            let version = match op.version {
                Some(v) => Some(Version::parse(&v).ok()?),
                None => None,
            };
            if !operands.iter().any(|o: &Operand| o.component == entry.id) {
                operands.push(Operand::new(&entry.id, version));
            }
        }
        let raw = text.to_string();
        match operands.as_slice() {
            [a, b, ..] if a.version.is_some() && b.version.is_some() => Some(Query {
                kind: QueryKind::Pair,
                first: a.clone(),
                second: Some(b.clone()),
                raw,
            }),
            [a, ..] => Some(Query {
                kind: if a.version.is_some() {
                    QueryKind::VersionedComponent
                } else {
                    QueryKind::Component
                },
                first: a.clone(),
                second: None,
                raw,
            }),
            [] => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Subgraph {
    pub nodes: Vec<VersionedComponent>,
    pub links: Vec<LinkRecord>,
    pub focus: Vec<VersionedComponent>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    /// Set for pair queries only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Label>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    pub n_compatible: u64,
    pub n_incompatible: u64,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QueryResponse {
    pub schema_version: u32,
    pub kind: QueryKind,
    pub query: Query,
    pub summary: Summary,
    pub subgraph: Subgraph,
}

/// Graph nodes of `op.component` whose versions prefix-match `op.version`.
/// When some node matches exactly, only exact nodes are returned.
pub fn match_nodes(graph: &KnowledgeGraph, op: &Operand) -> Vec<usize> {
    let all = graph.nodes_of(&op.component);
    let Some(v) = &op.version else {
        return all.to_vec();
    };
    let exact: Vec<usize> = all
        .iter()
        .copied()
        .filter(|&n| graph.node(n).version.is_exact(v))
        .collect();
    if !exact.is_empty() {
        return exact;
    }
    all.iter()
        .copied()
        .filter(|&n| graph.node(n).version.prefix_matches(v))
        .collect()
}

/// The relations that answer a pair lookup, at their shared specificity.
#[derive(Clone, Debug, PartialEq)]
pub struct PairMatch {
    pub links: Vec<usize>,
    pub n_compatible: u64,
    pub n_incompatible: u64,
    pub evidence: Vec<Evidence>,
}

impl PairMatch {
    pub fn label(&self) -> Label {
        match self.n_compatible.cmp(&self.n_incompatible) {
            std::cmp::Ordering::Greater => Label::Compatible,
            std::cmp::Ordering::Less => Label::Incompatible,
            std::cmp::Ordering::Equal => Label::Unknown,
        }
    }

    pub fn confidence(&self) -> f64 {
        let total = self.n_compatible + self.n_incompatible;
        (self.n_compatible as f64 - self.n_incompatible as f64) / total as f64
    }
}

/// Finds relations between versions matching `x` and versions matching `y`.
///
/// Versions match by prefix. Among several matching relations the most
/// specific wins: longest shared prefix with the requested versions, then
/// fewer wildcard endpoints, then more exact endpoints. Ties merge evidence,
/// one entry per post.
pub fn lookup_pair(graph: &KnowledgeGraph, x: &Operand, y: &Operand) -> Option<PairMatch> {
    if x.component == y.component {
        return None;
    }
    let matches = |op: &Operand, node: &VersionedComponent| match &op.version {
        Some(v) => node.version.prefix_matches(v),
        None => true,
    };
    let score = |op: &Operand, node: &VersionedComponent| match &op.version {
        Some(v) => (
            node.version.common_prefix_len(v),
            usize::from(!node.version.is_wildcard()),
            usize::from(node.version.is_exact(v)),
        ),
        None => (0, 0, 0),
    };

    let mut best: Option<((usize, usize, usize), Vec<usize>)> = None;
    for &nx in graph.nodes_of(&x.component) {
        let node_x = graph.node(nx);
        if !matches(x, node_x) {
            continue;
        }
        for &li in graph.incident(nx) {
            let link = graph.link(li);
            let other = if link.a == *node_x { &link.b } else { &link.a };
            if other.component_id != y.component || !matches(y, other) {
                continue;
            }
            let (sx, sy) = (score(x, node_x), score(y, other));
            let s = (sx.0 + sy.0, sx.1 + sy.1, sx.2 + sy.2);
            match &mut best {
                Some((top, links)) if *top == s => links.push(li),
                Some((top, _)) if *top > s => {}
                _ => best = Some((s, vec![li])),
            }
        }
    }
    let (_, mut links) = best?;
    links.sort_unstable();
    links.dedup();

    let mut seen = BTreeSet::new();
    let mut evidence: Vec<Evidence> = Vec::new();
    for &li in &links {
        for e in &graph.link(li).evidence {
            if seen.insert(e.post_id) {
                evidence.push(e.clone());
            }
        }
    }
    evidence.sort_by(|p, q| q.votes.cmp(&p.votes).then(p.post_id.cmp(&q.post_id)));
    let merged = Relation::from_evidence(
        graph.link(links[0]).a.clone(),
        graph.link(links[0]).b.clone(),
        evidence,
    );
    Some(PairMatch {
        links,
        n_compatible: merged.n_compatible,
        n_incompatible: merged.n_incompatible,
        evidence: merged.evidence,
    })
}

fn subgraph_from(graph: &KnowledgeGraph, focus: &[usize], links: &[usize]) -> Subgraph {
    let mut node_set: BTreeSet<usize> = focus.iter().copied().collect();
    for &li in links {
        let l = graph.link(li);
        for n in [&l.a, &l.b] {
            if let Some(idx) = graph.find_node(&n.component_id, &n.version) {
                node_set.insert(idx);
            }
        }
    }
    let link_set: BTreeSet<usize> = links.iter().copied().collect();
    let focus_set: BTreeSet<usize> = focus.iter().copied().collect();
    Subgraph {
        nodes: node_set
            .into_iter()
            .map(|i| graph.node(i).clone())
            .collect(),
        links: link_set
            .into_iter()
            .map(|i| LinkRecord::from(graph.link(i)))
            .collect(),
        focus: focus_set
            .into_iter()
            .map(|i| graph.node(i).clone())
            .collect(),
    }
}

/// Resolves a query to a subgraph and summary.
pub fn resolve(graph: &KnowledgeGraph, query: &Query) -> QueryResponse {
    let (summary, subgraph) = match query.kind {
        QueryKind::Pair => resolve_pair(graph, query),
        QueryKind::VersionedComponent | QueryKind::Component => {
            let focus = match_nodes(graph, &query.first);
            let mut links: Vec<usize> = focus
                .iter()
                .flat_map(|&n| graph.incident(n).iter().copied())
                .collect();
            links.sort_unstable();
            links.dedup();
            let sub = subgraph_from(graph, &focus, &links);
            let message = if sub.nodes.is_empty() {
                format!("no knowledge about {}", query.first)
            } else {
                format!(
                    "{} matching node(s), {} relation(s)",
                    sub.focus.len(),
                    sub.links.len()
                )
            };
            let (c, i) = sub.links.iter().fold((0, 0), |(c, i), l| {
                if l.n_compatible > l.n_incompatible {
                    (c + 1, i)
                } else {
                    (c, i + 1)
                }
            });
            (
                Summary {
                    verdict: None,
                    confidence: None,
                    n_compatible: c,
                    n_incompatible: i,
                    message,
                },
                sub,
            )
        }
    };
    QueryResponse {
        schema_version: SCHEMA_VERSION,
        kind: query.kind,
        query: query.clone(),
        summary,
        subgraph,
    }
}

fn resolve_pair(graph: &KnowledgeGraph, query: &Query) -> (Summary, Subgraph) {
    let x = &query.first;
    let Some(y) = query.second.as_ref() else {
        return (
            Summary {
                verdict: Some(Label::Unknown),
                confidence: None,
                n_compatible: 0,
                n_incompatible: 0,
                message: "pair query needs two operands".into(),
            },
            subgraph_from(graph, &[], &[]),
        );
    };
    match lookup_pair(graph, x, y) {
        Some(m) => {
            let sub = subgraph_from(graph, &[], &m.links);
            let mut sub = sub;
            sub.focus = sub.nodes.clone();
            let label = m.label();
            let confidence = (label != Label::Unknown).then(|| m.confidence());
            (
                Summary {
                    verdict: Some(label),
                    confidence,
                    n_compatible: m.n_compatible,
                    n_incompatible: m.n_incompatible,
                    message: format!(
                        "{x} / {y}: {label} ({} post(s) compatible, {} incompatible)",
                        m.n_compatible, m.n_incompatible
                    ),
                },
                sub,
            )
        }
        None => {
            let exact = |op: &Operand| {
                op.version
                    .as_ref()
                    .and_then(|v| graph.find_node(&op.component, v))
            };
            let focus: Vec<usize> = [exact(x), exact(y)].into_iter().flatten().collect();
            (
                Summary {
                    verdict: Some(Label::Unknown),
                    confidence: None,
                    n_compatible: 0,
                    n_incompatible: 0,
                    message: format!("no knowledge about {x} / {y}"),
                },
                subgraph_from(graph, &focus, &[]),
            )
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ComponentCount {
    pub component: String,
    pub relations: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LayerStats {
    pub layer: Layer,
    pub top: Vec<ComponentCount>,
}

/// Per layer, the `k` components with the most incident relations across
/// all their versions. Ties by component id.
pub fn top_components(graph: &KnowledgeGraph, k: usize) -> Vec<LayerStats> {
    Layer::ALL
        .into_iter()
        .map(|layer| {
            let mut per_component: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
            for &n in graph.nodes_in_layer(layer) {
                per_component
                    .entry(graph.node(n).component_id.as_str())
                    .or_default()
                    .extend(graph.incident(n).iter().copied());
            }
            let mut top: Vec<ComponentCount> = per_component
                .into_iter()
                .map(|(id, links)| ComponentCount {
                    component: id.to_string(),
                    relations: links.len(),
                })
                .collect();
            top.sort_by(|a, b| {
                b.relations
                    .cmp(&a.relations)
                    .then(a.component.cmp(&b.component))
            });
            top.truncate(k);
            LayerStats { layer, top }
        })
        .collect()
}

/// Human-readable rendering for the command line.
fn kind_name(kind: QueryKind) -> &'static str {
    match kind {
        QueryKind::Pair => "pair",
        QueryKind::VersionedComponent => "versioned component",
        QueryKind::Component => "component",
    }
}

pub fn render_table(resp: &QueryResponse) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "query:   {} ({})",
        resp.query.raw,
        kind_name(resp.kind)
    );
    if let Some(v) = resp.summary.verdict {
        match resp.summary.confidence {
            Some(c) => {
                let _ = writeln!(out, "verdict: {v} (confidence {c:.3})");
            }
            None => {
                let _ = writeln!(out, "verdict: {v}");
            }
        }
    }
    let _ = writeln!(out, "summary: {}", resp.summary.message);
    if !resp.subgraph.links.is_empty() {
        let _ = writeln!(
            out,
            "\n{:<28} {:<28} {:>6} {:>6} {:>7}",
            "A", "B", "comp", "incomp", "conf"
        );
        for l in &resp.subgraph.links {
            let _ = writeln!(
                out,
                "{:<28} {:<28} {:>6} {:>6} {:>7.3}",
                l.a.to_string(),
                l.b.to_string(),
                l.n_compatible,
                l.n_incompatible,
                l.confidence
            );
        }
    }
    out
}
