//! Component and version recognition in a single paragraph, and one-to-one
//! binding of components to versions.
//!
//! Three version grammars are recognized, tried in this order:
//!
//! 1. dotted: `v?\d+(\.\d+){1,2}` (`3.7`, `2.4.3`, `v1.13.5`)
//! 2. wildcard: `v?\d+(\.\d+)?\.x` (`3.x`, `v2.2.x`)
//! 3. component-adjacent: `ALIAS(-| |_)v?\d+` (`cuda-8`, `python v3`)
//!
//! Overlaps resolve longest match first. A bare integer is only a version
//! when it directly follows a component alias (grammar 3); such pairs are
//! bound up front. Everything else goes through stable matching with a
//! token-distance cost.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dictionary::{Dictionary, Layer};
use crate::matching::stable_matching;
use crate::version::Version;

static DOTTED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)v?\d+(?:\.\d+){1,2}").expect("static regex"));
static WILDCARD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)v?\d+(?:\.\d+)?\.x").expect("static regex"));

/// Cost added when a component and a version sit in different sentences.
pub const CROSS_SENTENCE_PENALTY: u64 = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MentionKind {
    Component,
    Version,
}

/// Which version grammar produced a mention.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VersionPattern {
    Dotted,
    Wildcard,
    ComponentAdjacent,
}

/// A recognized token. Offsets are byte offsets into the paragraph.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Mention {
    pub kind: MentionKind,
    pub text: String,
    pub start: usize,
    pub end: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub component_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layer: Option<Layer>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub version: Option<Version>,
    /// Set on version mentions, and on component mentions emitted by the
    /// component-adjacent grammar.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pattern: Option<VersionPattern>,
    pub sentence_index: usize,
    pub token_index: usize,
}

impl Mention {
    fn is_joint(&self) -> bool {
        self.pattern == Some(VersionPattern::ComponentAdjacent)
    }
}

/// A dictionary component bound to a version. Identity is the component id
/// plus the normalized version.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VersionedComponent {
    #[serde(rename = "component")]
    pub component_id: String,
    pub layer: Layer,
    pub version: Version,
}

impl VersionedComponent {
    pub fn new(component_id: impl Into<String>, layer: Layer, version: Version) -> Self {
        VersionedComponent {
            component_id: component_id.into(),
            layer,
            version,
        }
    }

    /// Canonical ordering key: `(component_id, normalized version)`.
    pub fn key(&self) -> (String, String) {
        (self.component_id.clone(), self.version.normalized())
    }
}

impl fmt::Display for VersionedComponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.component_id, self.version)
    }
}

/// A binding plus the mentions it came from.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Binding {
    pub component: VersionedComponent,
    pub component_mention: Mention,
    pub version_mention: Mention,
}

impl Binding {
    /// Byte span covering both mentions.
    pub fn span(&self) -> (usize, usize) {
        (
            self.component_mention.start.min(self.version_mention.start),
            self.component_mention.end.max(self.version_mention.end),
        )
    }
}

/// Cost of pairing a component mention with a version mention. Lower is
/// closer. Swap in a parser-backed distance by implementing this trait.
pub trait BindingCost {
    fn cost(&self, component: &Mention, version: &Mention) -> u64;
}

/// Token distance, plus a fixed penalty across sentence boundaries.
#[derive(Clone, Copy, Debug)]
pub struct TokenDistance {
    pub cross_sentence_penalty: u64,
}

impl Default for TokenDistance {
    fn default() -> Self {
        TokenDistance {
            cross_sentence_penalty: CROSS_SENTENCE_PENALTY,
        }
    }
}

impl BindingCost for TokenDistance {
    fn cost(&self, component: &Mention, version: &Mention) -> u64 {
        let distance = component.token_index.abs_diff(version.token_index) as u64;
        if component.sentence_index == version.sentence_index {
            distance
        } else {
            distance + self.cross_sentence_penalty
        }
    }
}

/// Sentence and token positions of a paragraph.
#[derive(Debug)]
struct Layout {
    sentence_ends: Vec<usize>,
    token_starts: Vec<usize>,
}

impl Layout {
    fn new(text: &str) -> Layout {
        let bytes = text.as_bytes();
        let mut sentence_ends = Vec::new();
        let mut token_starts = Vec::new();
        let mut in_token = false;
        for (i, &b) in bytes.iter().enumerate() {
            let ws = b.is_ascii_whitespace();
            if !ws && !in_token {
                token_starts.push(i);
            }
            in_token = !ws;
            // A terminal mark only ends a sentence when whitespace follows,
            // so the dot inside `1.13` never splits.
            if matches!(b, b'.' | b'!' | b'?')
                && bytes.get(i + 1).is_some_and(|n| n.is_ascii_whitespace())
            {
                sentence_ends.push(i + 1);
            }
        }
        Layout {
            sentence_ends,
            token_starts,
        }
    }

    fn sentence_of(&self, offset: usize) -> usize {
        self.sentence_ends.partition_point(|&end| end <= offset)
    }

    fn token_of(&self, offset: usize) -> usize {
        self.token_starts
            .partition_point(|&s| s <= offset)
            .saturating_sub(1)
    }
}

/// Splits a paragraph into sentence byte ranges.
pub fn sentence_spans(text: &str) -> Vec<(usize, usize)> {
    let layout = Layout::new(text);
    let mut spans = Vec::with_capacity(layout.sentence_ends.len() + 1);
    let mut start = 0;
    for &end in &layout.sentence_ends {
        spans.push((start, end));
        start = end;
    }
    if start < text.len() {
        spans.push((start, text.len()));
    }
    spans
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Left edge: not glued to a word or to a preceding dotted token.
fn version_left_ok(bytes: &[u8], start: usize) -> bool {
    start == 0 || !(is_word_byte(bytes[start - 1]) || bytes[start - 1] == b'.')
}

/// Right edge: not glued to a word, and not the head of a longer dotted run
/// (`1.2` inside `1.2.3.4`, `3` inside `3.7`).
fn version_right_ok(bytes: &[u8], end: usize) -> bool {
    match bytes.get(end) {
        None => true,
        Some(&b) if is_word_byte(b) => false,
        Some(b'.') => !bytes
            .get(end + 1)
            .is_some_and(|&n| n.is_ascii_digit() || n == b'x' || n == b'X'),
        Some(_) => true,
    }
}

#[derive(Debug)]
struct Candidate {
    pattern: VersionPattern,
    start: usize,
    end: usize,
    /// For grammar 3: alias span and the entry it resolves to.
    alias: Option<(usize, usize, usize)>,
    version_start: usize,
}

/// Dictionary-backed recognizer. Holds the compiled component-adjacent
/// grammar so repeated calls stay cheap.
#[derive(Clone, Debug)]
pub struct Recognizer {
    dict: Dictionary,
    adjacent: Regex,
}

impl Recognizer {
    pub fn new(dict: Dictionary) -> Recognizer {
        let alternation = dict
            .aliases()
            .map(|(alias, _)| regex::escape(alias))
            .collect::<Vec<_>>()
            .join("|");
        let adjacent = Regex::new(&format!(r"(?i)({alternation})(?:-| |_)(v?\d+)"))
            .expect("escaped aliases form a valid pattern");
        Recognizer { dict, adjacent }
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dict
    }

    /// Every alias occurrence on word boundaries, overlaps resolved
    /// longest-first then leftmost, sorted by start.
    pub fn recognize_components(&self, text: &str) -> Vec<Mention> {
        let layout = Layout::new(text);
        self.components_with(text, &layout)
    }

    fn components_with(&self, text: &str, layout: &Layout) -> Vec<Mention> {
        let lower = text.to_ascii_lowercase();
        let bytes = lower.as_bytes();
        let mut found: Vec<(usize, usize, &str)> = Vec::new();
        for (alias, entry) in self.dict.aliases() {
            for (start, _) in lower.match_indices(alias) {
                let end = start + alias.len();
                let left = start == 0 || !bytes[start - 1].is_ascii_alphanumeric();
                let right = end == bytes.len() || !bytes[end].is_ascii_alphanumeric();
                if left && right {
                    found.push((start, end, entry.id.as_str()));
                }
            }
        }
        found.sort_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)));
        let mut taken: Vec<(usize, usize, &str)> = Vec::new();
        for cand in found {
            if taken.iter().all(|t| cand.1 <= t.0 || cand.0 >= t.1) {
                taken.push(cand);
            }
        }
        taken.sort_by_key(|t| t.0);
        taken
            .into_iter()
            .map(|(start, end, id)| Mention {
                kind: MentionKind::Component,
                text: text[start..end].to_string(),
                start,
                end,
                component_id: Some(id.to_string()),
                layer: self.dict.get(id).map(|e| e.layer),
                version: None,
                pattern: None,
                sentence_index: layout.sentence_of(start),
                token_index: layout.token_of(start),
            })
            .collect()
    }

    /// Version mentions from the three grammars, non-overlapping and sorted
    /// by start. Grammar 3 matches also yield the component mention they are
    /// anchored on, tagged with [`VersionPattern::ComponentAdjacent`].
    pub fn recognize_versions(&self, text: &str) -> Vec<Mention> {
        let layout = Layout::new(text);
        self.versions_with(text, &layout)
    }

    fn versions_with(&self, text: &str, layout: &Layout) -> Vec<Mention> {
        let bytes = text.as_bytes();
        let mut cands = Vec::new();
        for (pattern, re) in [
            (VersionPattern::Dotted, &*DOTTED),
            (VersionPattern::Wildcard, &*WILDCARD),
        ] {
            let mut pos = 0;
            while let Some(m) = re.find_at(text, pos) {
                if version_left_ok(bytes, m.start()) && version_right_ok(bytes, m.end()) {
                    cands.push(Candidate {
                        pattern,
                        start: m.start(),
                        end: m.end(),
                        alias: None,
                        version_start: m.start(),
                    });
                }
                pos = next_char(text, m.start());
            }
        }
        let mut pos = 0;
        while let Some(caps) = self.adjacent.captures_at(text, pos) {
            let whole = caps.get(0).expect("group 0");
            let alias = caps.get(1).expect("alias group");
            let digits = caps.get(2).expect("version group");
            let left = whole.start() == 0 || !is_word_byte(bytes[whole.start() - 1]);
            if left && version_right_ok(bytes, whole.end()) {
                if let Some(entry) = self.dict.resolve(alias.as_str()) {
                    let idx = self
                        .dict
                        .entries()
                        .iter()
                        .position(|e| e.id == entry.id)
                        .expect("resolved entry is in the dictionary");
                    cands.push(Candidate {
                        pattern: VersionPattern::ComponentAdjacent,
                        start: whole.start(),
                        end: whole.end(),
                        alias: Some((alias.start(), alias.end(), idx)),
                        version_start: digits.start(),
                    });
                }
            }
            pos = next_char(text, whole.start());
        }

        cands.sort_by(|a, b| {
            (b.end - b.start)
                .cmp(&(a.end - a.start))
                .then(a.pattern.cmp(&b.pattern))
                .then(a.start.cmp(&b.start))
        });
        let mut taken: Vec<Candidate> = Vec::new();
        for cand in cands {
            if taken
                .iter()
                .all(|t| cand.end <= t.start || cand.start >= t.end)
            {
                taken.push(cand);
            }
        }
        taken.sort_by_key(|c| c.start);

        let mut out = Vec::new();
        for cand in taken {
            let vtext = &text[cand.version_start..cand.end];
            let Ok(version) = Version::parse(vtext) else {
                continue;
            };
            if let Some((astart, aend, idx)) = cand.alias {
                let entry = &self.dict.entries()[idx];
                out.push(Mention {
                    kind: MentionKind::Component,
                    text: text[astart..aend].to_string(),
                    start: astart,
                    end: aend,
                    component_id: Some(entry.id.clone()),
                    layer: Some(entry.layer),
                    version: None,
                    pattern: Some(cand.pattern),
                    sentence_index: layout.sentence_of(astart),
                    token_index: layout.token_of(astart),
                });
            }
            out.push(Mention {
                kind: MentionKind::Version,
                text: vtext.to_string(),
                start: cand.version_start,
                end: cand.end,
                component_id: None,
                layer: None,
                version: Some(version),
                pattern: Some(cand.pattern),
                sentence_index: layout.sentence_of(cand.version_start),
                token_index: layout.token_of(cand.version_start),
            });
        }
        out
    }

    /// Component and version mentions merged, sorted by start. Plain alias
    /// hits that overlap a component-adjacent match are dropped in favour of
    /// the adjacent one.
    pub fn recognize(&self, text: &str) -> Vec<Mention> {
        let layout = Layout::new(text);
        let versions = self.versions_with(text, &layout);
        let components = self.components_with(text, &layout);
        let overlaps = |a: &Mention, b: &Mention| a.start < b.end && b.start < a.end;
        let mut all: Vec<Mention> = components
            .into_iter()
            .filter(|c| !versions.iter().any(|v| overlaps(c, v)))
            .collect();
        all.extend(versions);
        all.sort_by_key(|m| (m.start, m.kind));
        all
    }

    /// Recognize and bind in one step with the default cost.
    pub fn bind(&self, text: &str) -> Vec<Binding> {
        bind_versions(&self.recognize(text), &TokenDistance::default())
    }
}

fn next_char(text: &str, at: usize) -> usize {
    text[at..]
        .chars()
        .next()
        .map_or(text.len(), |c| at + c.len_utf8())
}

/// One-to-one binding of component mentions to version mentions.
///
/// Component-adjacent pairs are bound directly. The remaining mentions are
/// matched by Gale-Shapley with components proposing; both sides rank by
/// `cost`, ties going to the mention that starts first. Unmatched mentions
/// are dropped. Output is sorted by component mention start.
pub fn bind_versions(mentions: &[Mention], cost: &dyn BindingCost) -> Vec<Binding> {
    let mut bindings = Vec::new();

    let joint_components: Vec<&Mention> = mentions
        .iter()
        .filter(|m| m.kind == MentionKind::Component && m.is_joint())
        .collect();
    let joint_versions: Vec<&Mention> = mentions
        .iter()
        .filter(|m| m.kind == MentionKind::Version && m.is_joint())
        .collect();
    for (c, v) in joint_components.iter().zip(&joint_versions) {
        if let Some(b) = make_binding(c, v) {
            bindings.push(b);
        }
    }

    let components: Vec<&Mention> = mentions
        .iter()
        .filter(|m| m.kind == MentionKind::Component && !m.is_joint())
        .collect();
    let versions: Vec<&Mention> = mentions
        .iter()
        .filter(|m| m.kind == MentionKind::Version && !m.is_joint())
        .collect();
    let comp_keys: Vec<usize> = components.iter().map(|m| m.start).collect();
    let ver_keys: Vec<usize> = versions.iter().map(|m| m.start).collect();
    let pairs = stable_matching(&comp_keys, &ver_keys, |c, v| {
        cost.cost(components[c], versions[v])
    });
    for (c, v) in pairs {
        if let Some(b) = make_binding(components[c], versions[v]) {
            bindings.push(b);
        }
    }

    bindings.sort_by_key(|b| b.component_mention.start);
    bindings
}

fn make_binding(component: &Mention, version: &Mention) -> Option<Binding> {
    Some(Binding {
        component: VersionedComponent {
            component_id: component.component_id.clone()?,
            layer: component.layer?,
            version: version.version.clone()?,
        },
        component_mention: component.clone(),
        version_mention: version.clone(),
    })
}

/// Free-function form over a dictionary.
pub fn recognize_components(paragraph: &str, dict: &Dictionary) -> Vec<Mention> {
    Recognizer::new(dict.clone()).recognize_components(paragraph)
}

/// Free-function form over a dictionary.
pub fn recognize_versions(paragraph: &str, dict: &Dictionary) -> Vec<Mention> {
    Recognizer::new(dict.clone()).recognize_versions(paragraph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::ComponentEntry;

    fn rec() -> Recognizer {
        Recognizer::new(Dictionary::builtin())
    }

    fn versions(text: &str) -> Vec<(String, VersionPattern)> {
        rec()
            .recognize_versions(text)
            .into_iter()
            .filter(|m| m.kind == MentionKind::Version)
            .map(|m| (m.version.unwrap().normalized(), m.pattern.unwrap()))
            .collect()
    }

    fn bound(text: &str) -> Vec<String> {
        rec()
            .bind(text)
            .into_iter()
            .map(|b| b.component.to_string())
            .collect()
    }

    #[test]
    fn component_in_figure_context() {
        let dict = Dictionary::new(vec![ComponentEntry {
            id: "tensorflow".into(),
            layer: Layer::Library,
            aliases: vec![],
        }])
        .unwrap();
        let m = recognize_components("tensorflow is looking for libcublas", &dict);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].component_id.as_deref(), Some("tensorflow"));
    }

    #[test]
    fn case_insensitive_and_aliases() {
        let r = rec();
        let m = r.recognize_components("PyTorch and pytorch");
        assert_eq!(m.len(), 2);
        assert!(m
            .iter()
            .all(|m| m.component_id.as_deref() == Some("pytorch")));

        let m = r.recognize_components("TF is short for TensorFlow");
        assert_eq!(m.len(), 2);
        assert!(m
            .iter()
            .all(|m| m.component_id.as_deref() == Some("tensorflow")));
    }

    #[test]
    fn longest_alias_wins() {
        let m = rec().recognize_components("pip install tensorflow-gpu now");
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].text, "tensorflow-gpu");
    }

    #[test]
    fn alias_needs_word_boundaries() {
        assert!(rec().recognize_components("gpustat and cpuinfo").is_empty());
    }

    #[test]
    fn dotted_versions() {
        assert_eq!(
            versions("2.4.3"),
            vec![("2.4.3".into(), VersionPattern::Dotted)]
        );
        assert_eq!(
            versions("v1.13.5"),
            vec![("1.13.5".into(), VersionPattern::Dotted)]
        );
    }

    #[test]
    fn wildcard_versions() {
        let m = rec().recognize_versions("v2.2.x");
        assert_eq!(m.len(), 1);
        let v = m[0].version.as_ref().unwrap();
        assert_eq!(v.segments(), &[2, 2]);
        assert!(v.is_wildcard());
        assert!(v.had_v_prefix());
    }

    #[test]
    fn component_adjacent_versions() {
        let m = rec().recognize_versions("use cuda-8 here");
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].kind, MentionKind::Component);
        assert_eq!(m[0].component_id.as_deref(), Some("cuda"));
        assert_eq!(m[1].version.as_ref().unwrap().segments(), &[8]);
    }

    #[test]
    fn bare_integers_and_long_runs_ignored() {
        assert!(versions("3").is_empty());
        assert!(versions("I have 3 gpus").is_empty());
        assert!(versions("10.0.0.1").is_empty());
        assert!(versions("libcublas.so.10.0").is_empty());
    }

    #[test]
    fn adjacent_grammar_yields_to_dotted() {
        // `python 3` would be a grammar-3 match, but 3 heads the dotted `3.7`.
        assert_eq!(bound("python 3.7"), vec!["python 3.7"]);
    }

    #[test]
    fn figure_context_binds_two_components() {
        let text = "tensorflow 1.13 doesn't work with cuda 10.1 because of the following: \
                    \"ImportError: libcublas.so.10.0: cannot open shared object file: No such file or directory\". \
                    tensorflow is looking for libcublas.so.10.0 whereas cuda provides libcublas.so.10.1.0.105.";
        assert_eq!(bound(text), vec!["tensorflow 1.13", "cuda 10.1"]);
    }

    #[test]
    fn no_versions_no_bindings() {
        assert!(bound("tensorflow is great").is_empty());
    }

    #[test]
    fn mentions_carry_sentence_and_token_positions() {
        let m = rec().recognize("Use numpy 1.16. Then python 3.6 works.");
        let positions: Vec<_> = m
            .iter()
            .map(|m| (m.token_index, m.sentence_index))
            .collect();
        assert_eq!(positions, vec![(1, 0), (2, 0), (4, 1), (5, 1)]);
    }

    #[test]
    fn cross_sentence_penalty_keeps_bindings_local() {
        assert_eq!(
            bound("Install numpy first. 1.16 fails but pandas 0.25 is fine."),
            vec!["numpy 1.16", "pandas 0.25"]
        );
        let r = rec();
        let b = r.bind("Install numpy first. Version 1.16 fails with pandas 0.25 here.");
        let numpy = b
            .iter()
            .find(|b| b.component.component_id == "numpy")
            .unwrap();
        assert_ne!(
            numpy.component_mention.sentence_index,
            numpy.version_mention.sentence_index
        );
    }

    #[test]
    fn sentences_do_not_split_inside_versions() {
        let spans = sentence_spans("Use 1.13. Next one!");
        assert_eq!(spans, vec![(0, 9), (9, 19)]);
    }
}
