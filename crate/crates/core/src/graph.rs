//! The knowledge graph: versioned components as nodes, confidence-scored
//! (in)compatibility relations as links.
//!
//! A relation between two versioned components counts the posts that judged
//! the pair compatible and incompatible. Its confidence is
//! `(compatible - incompatible) / (compatible + incompatible)`; a positive
//! score reads as compatible, a negative one as incompatible, and balanced
//! pairs are dropped.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dictionary::Layer;
use crate::error::{Error, Result};
use crate::inference::{Label, Verdict};
use crate::recognizer::VersionedComponent;
use crate::version::Version;

pub const GRAPH_FORMAT_VERSION: u32 = 1;

/// Exact confidence ratio, kept as counts so the sign test never rounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Confidence {
    compatible: u64,
    incompatible: u64,
}

impl Confidence {
    pub fn numerator(&self) -> i64 {
        self.compatible as i64 - self.incompatible as i64
    }

    pub fn denominator(&self) -> u64 {
        self.compatible + self.incompatible
    }

    pub fn value(&self) -> f64 {
        self.numerator() as f64 / self.denominator() as f64
    }

    pub fn is_neutral(&self) -> bool {
        self.compatible == self.incompatible
    }

    pub fn is_positive(&self) -> bool {
        self.compatible > self.incompatible
    }

    pub fn is_negative(&self) -> bool {
        self.compatible < self.incompatible
    }

    /// Compatible when positive, incompatible when negative, unknown at zero.
    pub fn label(&self) -> Label {
        match self.compatible.cmp(&self.incompatible) {
            Ordering::Greater => Label::Compatible,
            Ordering::Less => Label::Incompatible,
            Ordering::Equal => Label::Unknown,
        }
    }
}

impl PartialOrd for Confidence {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Orders by value via cross-multiplication.
impl Ord for Confidence {
    fn cmp(&self, other: &Self) -> Ordering {
        let lhs = self.numerator() as i128 * other.denominator() as i128;
        let rhs = other.numerator() as i128 * self.denominator() as i128;
        lhs.cmp(&rhs)
    }
}

impl fmt::Display for Confidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}", self.value())
    }
}

pub fn confidence_score(n_compatible: u64, n_incompatible: u64) -> Result<Confidence> {
    if n_compatible + n_incompatible == 0 {
        return Err(Error::EmptyEvidence);
    }
    Ok(Confidence {
        compatible: n_compatible,
        incompatible: n_incompatible,
    })
}

/// A post's stance on a pair. Unlike [`Label`] it has no unknown case.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stance {
    Compatible,
    Incompatible,
}

impl Stance {
    pub fn from_label(label: Label) -> Option<Stance> {
        match label {
            Label::Compatible => Some(Stance::Compatible),
            Label::Incompatible => Some(Stance::Incompatible),
            Label::Unknown => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Evidence {
    pub post_id: u64,
    pub votes: i64,
    pub label: Stance,
}

/// An aggregated link. `a` sorts before `b` by `(component_id, version)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relation {
    pub a: VersionedComponent,
    pub b: VersionedComponent,
    pub n_compatible: u64,
    pub n_incompatible: u64,
    pub evidence: Vec<Evidence>,
}

impl Relation {
    pub fn confidence(&self) -> Confidence {
        Confidence {
            compatible: self.n_compatible,
            incompatible: self.n_incompatible,
        }
    }

    pub fn label(&self) -> Label {
        self.confidence().label()
    }

    pub fn pair_key(&self) -> PairKey {
        PairKey::new(&self.a, &self.b)
    }

    /// Builds a relation from per-post evidence, sorting the evidence by
    /// votes descending then post id.
    pub fn from_evidence(
        a: VersionedComponent,
        b: VersionedComponent,
        mut evidence: Vec<Evidence>,
    ) -> Relation {
        evidence.sort_by(|x, y| y.votes.cmp(&x.votes).then(x.post_id.cmp(&y.post_id)));
        let n_compatible = evidence
            .iter()
            .filter(|e| e.label == Stance::Compatible)
            .count() as u64;
        Relation {
            a,
            b,
            n_compatible,
            n_incompatible: evidence.len() as u64 - n_compatible,
            evidence,
        }
    }
}

/// Unordered pair identity: both `(component_id, normalized version)` keys,
/// smaller first.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairKey(pub (String, String), pub (String, String));

impl PairKey {
    pub fn new(x: &VersionedComponent, y: &VersionedComponent) -> PairKey {
        let (kx, ky) = (x.key(), y.key());
        if kx <= ky {
            PairKey(kx, ky)
        } else {
            PairKey(ky, kx)
        }
    }
}

impl fmt::Display for PairKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} / {} {}",
            self.0 .0, self.0 .1, self.1 .0, self.1 .1
        )
    }
}

/// What aggregation kept and threw away.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AggregateStats {
    pub verdicts: usize,
    pub unknown_verdicts: usize,
    /// Posts whose own paragraphs disagreed evenly on a pair.
    pub split_posts: usize,
    pub pairs: usize,
    pub relations: usize,
    pub neutral_discarded: usize,
}

/// Folds verdicts into relations.
///
/// Unknown verdicts are skipped. A post counts at most once per pair: when
/// its paragraphs disagree, the post's majority stance wins, and an even
/// split drops the post from that pair. Pairs with zero confidence are
/// dropped. Output is sorted by pair, so any permutation of the input gives
/// the same result.
pub fn aggregate<'a, I>(verdicts: I) -> (Vec<Relation>, AggregateStats)
where
    I: IntoIterator<Item = &'a Verdict>,
{
    type PostTally = BTreeMap<u64, (i64, u64, u64)>;
    let mut stats = AggregateStats::default();
    let mut pairs: BTreeMap<PairKey, (VersionedComponent, VersionedComponent, PostTally)> =
        BTreeMap::new();
    for v in verdicts {
        stats.verdicts += 1;
        let Some(stance) = Stance::from_label(v.label) else {
            stats.unknown_verdicts += 1;
            continue;
        };
        let key = PairKey::new(&v.a, &v.b);
        let (a, b) = if v.a.key() <= v.b.key() {
            (&v.a, &v.b)
        } else {
            (&v.b, &v.a)
        };
        let entry = pairs
            .entry(key)
            .or_insert_with(|| (a.clone(), b.clone(), BTreeMap::new()));
        let tally = entry.2.entry(v.post_id).or_insert((v.votes, 0, 0));
        tally.0 = tally.0.max(v.votes);
        match stance {
            Stance::Compatible => tally.1 += 1,
            Stance::Incompatible => tally.2 += 1,
        }
    }
    stats.pairs = pairs.len();

    let mut relations = Vec::new();
    for (_, (a, b, posts)) in pairs {
        let mut evidence = Vec::with_capacity(posts.len());
        for (post_id, (votes, compat, incompat)) in posts {
            let label = match compat.cmp(&incompat) {
                Ordering::Greater => Stance::Compatible,
                Ordering::Less => Stance::Incompatible,
                Ordering::Equal => {
                    stats.split_posts += 1;
                    continue;
                }
            };
            evidence.push(Evidence {
                post_id,
                votes,
                label,
            });
        }
        if evidence.is_empty() {
            stats.neutral_discarded += 1;
            continue;
        }
        let relation = Relation::from_evidence(a, b, evidence);
        if relation.confidence().is_neutral() {
            stats.neutral_discarded += 1;
            continue;
        }
        relations.push(relation);
    }
    stats.relations = relations.len();
    (relations, stats)
}

/// Immutable node/link store with lookup indexes.
#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeGraph {
    nodes: Vec<VersionedComponent>,
    links: Vec<Relation>,
    node_index: HashMap<(String, Version), usize>,
    by_component: BTreeMap<String, Vec<usize>>,
    by_layer: BTreeMap<Layer, Vec<usize>>,
    incident: Vec<Vec<usize>>,
    by_pair: HashMap<PairKey, usize>,
}

impl KnowledgeGraph {
    pub fn empty() -> KnowledgeGraph {
        KnowledgeGraph::build(Vec::new()).expect("empty graph is valid")
    }

    /// Nodes are the union of relation endpoints. Fails on a repeated pair,
    /// a self-loop, or one component appearing under two layers.
    pub fn build(relations: Vec<Relation>) -> Result<KnowledgeGraph> {
        let mut links = relations;
        for r in &mut links {
            if r.a.key() > r.b.key() {
                std::mem::swap(&mut r.a, &mut r.b);
            }
            if r.a.component_id == r.b.component_id {
                return Err(Error::Data(format!(
                    "self-loop on component {}",
                    r.a.component_id
                )));
            }
            if r.n_compatible + r.n_incompatible == 0 {
                return Err(Error::Data(format!(
                    "relation {} has no evidence",
                    r.pair_key()
                )));
            }
        }
        links.sort_by_key(|r| r.pair_key());

        let mut by_pair = HashMap::new();
        for (i, r) in links.iter().enumerate() {
            if by_pair.insert(r.pair_key(), i).is_some() {
                return Err(Error::DuplicateRelation(r.pair_key().to_string()));
            }
        }

        let mut layers: BTreeMap<&str, Layer> = BTreeMap::new();
        let mut unique: BTreeMap<(String, String), &VersionedComponent> = BTreeMap::new();
        for r in &links {
            for n in [&r.a, &r.b] {
                if let Some(&l) = layers.get(n.component_id.as_str()) {
                    if l != n.layer {
                        return Err(Error::Data(format!(
                            "component {} appears under layers {l} and {}",
                            n.component_id, n.layer
                        )));
                    }
                }
                layers.insert(&n.component_id, n.layer);
                unique.entry(n.key()).or_insert(n);
            }
        }
        let nodes: Vec<VersionedComponent> = unique.into_values().cloned().collect();

        let mut node_index = HashMap::new();
        let mut by_component: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut by_layer: BTreeMap<Layer, Vec<usize>> = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            node_index.insert((n.component_id.clone(), n.version.clone()), i);
            by_component
                .entry(n.component_id.clone())
                .or_default()
                .push(i);
            by_layer.entry(n.layer).or_default().push(i);
        }
        let mut incident = vec![Vec::new(); nodes.len()];
        for (li, r) in links.iter().enumerate() {
            for n in [&r.a, &r.b] {
                incident[node_index[&(n.component_id.clone(), n.version.clone())]].push(li);
            }
        }

        Ok(KnowledgeGraph {
            nodes,
            links,
            node_index,
            by_component,
            by_layer,
            incident,
            by_pair,
        })
    }

    pub fn nodes(&self) -> &[VersionedComponent] {
        &self.nodes
    }

    pub fn links(&self) -> &[Relation] {
        &self.links
    }

    pub fn node(&self, idx: usize) -> &VersionedComponent {
        &self.nodes[idx]
    }

    pub fn link(&self, idx: usize) -> &Relation {
        &self.links[idx]
    }

    pub fn find_node(&self, component_id: &str, version: &Version) -> Option<usize> {
        self.node_index
            .get(&(component_id.to_string(), version.clone()))
            .copied()
    }

    /// Node indexes of every version of a component.
    pub fn nodes_of(&self, component_id: &str) -> &[usize] {
        self.by_component
            .get(component_id)
            .map_or(&[], Vec::as_slice)
    }

    pub fn nodes_in_layer(&self, layer: Layer) -> &[usize] {
        self.by_layer.get(&layer).map_or(&[], Vec::as_slice)
    }

    /// Link indexes touching a node.
    pub fn incident(&self, node: usize) -> &[usize] {
        &self.incident[node]
    }

    pub fn component_ids(&self) -> impl Iterator<Item = &str> {
        self.by_component.keys().map(String::as_str)
    }

    pub fn relation_between(
        &self,
        x: &VersionedComponent,
        y: &VersionedComponent,
    ) -> Option<&Relation> {
        self.by_pair
            .get(&PairKey::new(x, y))
            .map(|&i| &self.links[i])
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            format_version: GRAPH_FORMAT_VERSION,
            nodes: self.nodes.clone(),
            links: self.links.iter().map(LinkRecord::from).collect(),
        }
    }

    pub fn from_file(file: GraphFile) -> Result<KnowledgeGraph> {
        if file.format_version != GRAPH_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: file.format_version,
                expected: GRAPH_FORMAT_VERSION,
            });
        }
        let relations = file
            .links
            .into_iter()
            .map(Relation::try_from)
            .collect::<Result<Vec<_>>>()?;
        let graph = KnowledgeGraph::build(relations)?;
        let mut listed = file.nodes;
        listed.sort_by_key(VersionedComponent::key);
        listed.dedup_by_key(|n| n.key());
        if listed != graph.nodes {
            return Err(Error::Data(
                "node list does not match the link endpoints".into(),
            ));
        }
        Ok(graph)
    }

    /// Pretty JSON with a trailing newline. Byte-identical for equal graphs.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_file()).expect("graph serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<KnowledgeGraph> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Data(format!("graph file: {e}")))?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Data("graph file has no format_version".into()))?;
        if version != GRAPH_FORMAT_VERSION as u64 {
            return Err(Error::FormatVersion {
                found: version as u32,
                expected: GRAPH_FORMAT_VERSION,
            });
        }
        let file: GraphFile =
            serde_json::from_value(value).map_err(|e| Error::Data(format!("graph file: {e}")))?;
        KnowledgeGraph::from_file(file)
    }
}

/// On-disk graph layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub format_version: u32,
    pub nodes: Vec<VersionedComponent>,
    pub links: Vec<LinkRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub a: VersionedComponent,
    pub b: VersionedComponent,
    pub n_compatible: u64,
    pub n_incompatible: u64,
    pub confidence: f64,
    pub evidence: Vec<Evidence>,
}

impl From<&Relation> for LinkRecord {
    fn from(r: &Relation) -> Self {
        LinkRecord {
            a: r.a.clone(),
            b: r.b.clone(),
            n_compatible: r.n_compatible,
            n_incompatible: r.n_incompatible,
            confidence: r.confidence().value(),
            evidence: r.evidence.clone(),
        }
    }
}

impl TryFrom<LinkRecord> for Relation {
    type Error = Error;

    fn try_from(rec: LinkRecord) -> Result<Relation> {
        let compat = rec
            .evidence
            .iter()
            .filter(|e| e.label == Stance::Compatible)
            .count() as u64;
        let incompat = rec.evidence.len() as u64 - compat;
        if compat != rec.n_compatible || incompat != rec.n_incompatible {
            return Err(Error::Data(format!(
                "link {} {}: counts do not match evidence",
                rec.a, rec.b
            )));
        }
        let confidence = confidence_score(rec.n_compatible, rec.n_incompatible)?;
        if confidence.is_neutral() {
            return Err(Error::Data(format!("link {} {} is neutral", rec.a, rec.b)));
        }
        if (confidence.value() - rec.confidence).abs() > 1e-9 {
            return Err(Error::Data(format!(
                "link {} {}: confidence {} does not match counts",
                rec.a, rec.b, rec.confidence
            )));
        }
        let mut ids: Vec<u64> = rec.evidence.iter().map(|e| e.post_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Data(format!(
                "link {} {}: repeated post in evidence",
                rec.a, rec.b
            )));
        }
        Ok(Relation {
            a: rec.a,
            b: rec.b,
            n_compatible: rec.n_compatible,
            n_incompatible: rec.n_incompatible,
            evidence: rec.evidence,
        })
    }
}

pub fn save_graph(graph: &KnowledgeGraph, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(graph.to_json().as_bytes())?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn load_graph(path: &Path) -> Result<KnowledgeGraph> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    KnowledgeGraph::from_json(&text).map_err(|e| match e {
        Error::Data(msg) => Error::format(path, msg),
        other => other,
    })
}
