//! Yes/no compatibility questions over candidate paragraphs.
//!
//! Every pair of distinct bound components in a paragraph becomes a question
//! such as "Does tensorflow 1.13 work with cuda 10.1?", asked against the
//! paragraph as context. The answer comes from an [`Oracle`]: a cue-lexicon
//! heuristic by default, or a remote QA service.

use std::fmt;
use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::Post;
use crate::error::{Error, Result};
use crate::recognizer::{sentence_spans, Binding, VersionedComponent};

pub const DEFAULT_TEMPLATE: &str = "Does {a} {va} work with {b} {vb}?";
pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;

pub const INCOMPATIBLE_CUES: &[&str] = &[
    "doesn't work",
    "not compatible",
    "incompatible",
    "fails",
    "cannot",
    "error",
    "conflict",
    "downgrade",
];

pub const COMPATIBLE_CUES: &[&str] = &[
    "works with",
    "compatible with",
    "supports",
    "solved",
    "fixed by",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Compatible,
    Incompatible,
    Unknown,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Compatible => "compatible",
            Label::Incompatible => "incompatible",
            Label::Unknown => "unknown",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictSource {
    Heuristic,
    Remote,
}

/// One oracle judgment for a component pair in one paragraph of one post.
/// `a` and `b` are in canonical order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub a: VersionedComponent,
    pub b: VersionedComponent,
    pub label: Label,
    pub source: VerdictSource,
    pub post_id: u64,
    pub votes: i64,
    pub paragraph: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompatibilityQuestion {
    pub context: String,
    pub question: String,
    pub pair: (VersionedComponent, VersionedComponent),
    /// Byte span covering both mentions in `context`, when known.
    pub mention_span: Option<(usize, usize)>,
}

/// Fills `{a} {va} {b} {vb}` in a question template.
pub fn render_question(template: &str, a: &VersionedComponent, b: &VersionedComponent) -> String {
    template
        .replace("{a}", &a.component_id)
        .replace("{va}", &a.version.display_text())
        .replace("{b}", &b.component_id)
        .replace("{vb}", &b.version.display_text())
}

pub fn build_question(a: &VersionedComponent, b: &VersionedComponent) -> String {
    render_question(DEFAULT_TEMPLATE, a, b)
}

/// Answers compatibility questions.
pub trait Oracle: Send + Sync {
    fn answer(&self, question: &CompatibilityQuestion) -> Label;
    fn source(&self) -> VerdictSource;
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CueLexicon {
    pub compatible: Vec<String>,
    pub incompatible: Vec<String>,
}

impl Default for CueLexicon {
    fn default() -> Self {
        CueLexicon {
            compatible: COMPATIBLE_CUES.iter().map(|s| s.to_string()).collect(),
            incompatible: INCOMPATIBLE_CUES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Rule-based oracle: counts compatibility and incompatibility cues in the
/// context. Cues inside the sentences spanning both mentions count double.
/// A compatibility cue nested in an incompatibility cue (`compatible with`
/// inside `not compatible with`) is ignored.
#[derive(Clone, Debug)]
pub struct HeuristicOracle {
    lexicon: CueLexicon,
}

impl Default for HeuristicOracle {
    fn default() -> Self {
        HeuristicOracle::new(CueLexicon::default())
    }
}

impl HeuristicOracle {
    pub fn new(lexicon: CueLexicon) -> Self {
        // Cues with an ASCII apostrophe also match the typographic one.
        let lower = |v: Vec<String>| {
            v.into_iter()
                .flat_map(|s| {
                    let s = s.to_ascii_lowercase();
                    let curly = s.contains('\'').then(|| s.replace('\'', "\u{2019}"));
                    std::iter::once(s).chain(curly)
                })
                .collect()
        };
        HeuristicOracle {
            lexicon: CueLexicon {
                compatible: lower(lexicon.compatible),
                incompatible: lower(lexicon.incompatible),
            },
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let lexicon: CueLexicon =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        Ok(HeuristicOracle::new(lexicon))
    }

    /// Weighted `(compatible, incompatible)` cue scores.
    pub fn scores(&self, q: &CompatibilityQuestion) -> (u32, u32) {
        let text = q.context.to_ascii_lowercase();
        let window = q.mention_span.map(|(start, end)| {
            let spans = sentence_spans(&q.context);
            let lo = spans
                .iter()
                .find(|s| s.0 <= start && start < s.1.max(s.0 + 1))
                .map_or(start, |s| s.0);
            let hi = spans
                .iter()
                .find(|s| s.0 < end && end <= s.1)
                .map_or(end, |s| s.1);
            (lo, hi)
        });
        let weight = |start: usize, end: usize| match window {
            Some((lo, hi)) if start >= lo && end <= hi => 2,
            _ => 1,
        };

        let mut incompatible_spans = Vec::new();
        let mut incompatible = 0;
        for cue in &self.lexicon.incompatible {
            for (start, m) in text.match_indices(cue.as_str()) {
                incompatible += weight(start, start + m.len());
                incompatible_spans.push((start, start + m.len()));
            }
        }
        let mut compatible = 0;
        for cue in &self.lexicon.compatible {
            for (start, m) in text.match_indices(cue.as_str()) {
                let end = start + m.len();
                let nested = incompatible_spans
                    .iter()
                    .any(|&(s, e)| start < e && s < end);
                if !nested {
                    compatible += weight(start, end);
                }
            }
        }
        (compatible, incompatible)
    }
}

impl Oracle for HeuristicOracle {
    fn answer(&self, q: &CompatibilityQuestion) -> Label {
        let (compatible, incompatible) = self.scores(q);
        match compatible.cmp(&incompatible) {
            std::cmp::Ordering::Greater => Label::Compatible,
            std::cmp::Ordering::Less => Label::Incompatible,
            std::cmp::Ordering::Equal => Label::Unknown,
        }
    }

    fn source(&self) -> VerdictSource {
        VerdictSource::Heuristic
    }
}

/// Labels a question with the default lexicon.
pub fn heuristic_infer(q: &CompatibilityQuestion) -> Label {
    HeuristicOracle::default().answer(q)
}

/// Collects non-fatal oracle failures.
#[derive(Debug, Default)]
pub struct Diagnostics {
    entries: Mutex<Vec<String>>,
}

impl Diagnostics {
    pub fn push(&self, entry: impl Into<String>) {
        self.entries
            .lock()
            .expect("diagnostics lock")
            .push(entry.into());
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("diagnostics lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot(&self) -> Vec<String> {
        self.entries.lock().expect("diagnostics lock").clone()
    }
}

#[derive(Debug)]
struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Semaphore {
            permits: Mutex::new(permits.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.permits.lock().expect("semaphore lock");
        while *n == 0 {
            n = self.freed.wait(n).expect("semaphore lock");
        }
        *n -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("semaphore lock") += 1;
        self.0.freed.notify_one();
    }
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    context: &'a str,
    question: &'a str,
}

#[derive(Deserialize)]
struct RemoteResponse {
    answer: String,
}

/// Client for an external QA service speaking
/// `{"context", "question"} -> {"answer"}` over HTTP POST.
///
/// Never fails: every transport or decoding problem yields
/// [`Label::Unknown`] and one entry in [`RemoteOracle::diagnostics`].
#[derive(Debug)]
pub struct RemoteOracle {
    endpoint: String,
    agent: ureq::Agent,
    in_flight: Semaphore,
    diagnostics: Diagnostics,
}

impl RemoteOracle {
    pub fn new(endpoint: impl Into<String>, timeout: Duration, max_in_flight: usize) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        RemoteOracle {
            endpoint: endpoint.into(),
            agent,
            in_flight: Semaphore::new(max_in_flight),
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    fn request(&self, q: &CompatibilityQuestion) -> std::result::Result<String, String> {
        let _permit = self.in_flight.acquire();
        let body = RemoteRequest {
            context: &q.context,
            question: &q.question,
        };
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(&body)
            .map_err(|e| e.to_string())?;
        let parsed: RemoteResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| format!("unparsable response: {e}"))?;
        Ok(parsed.answer)
    }
}

/// Maps a free-text answer to a label: leading "yes" or "no", case-insensitive.
pub fn label_from_answer(answer: &str) -> Label {
    let a = answer.trim_start().to_ascii_lowercase();
    if a.starts_with("yes") {
        Label::Compatible
    } else if a.starts_with("no") {
        Label::Incompatible
    } else {
        Label::Unknown
    }
}

impl Oracle for RemoteOracle {
    fn answer(&self, q: &CompatibilityQuestion) -> Label {
        match self.request(q) {
            Ok(answer) => label_from_answer(&answer),
            Err(e) => {
                self.diagnostics
                    .push(format!("{}: {:?}: {e}", self.endpoint, q.question));
                Label::Unknown
            }
        }
    }

    fn source(&self) -> VerdictSource {
        VerdictSource::Remote
    }
}

/// Single-call form of [`RemoteOracle`].
pub fn remote_infer(
    q: &CompatibilityQuestion,
    endpoint: &str,
    timeout: Duration,
    diagnostics: &Diagnostics,
) -> Label {
    let oracle = RemoteOracle::new(endpoint, timeout, 1);
    let label = oracle.answer(q);
    for d in oracle.diagnostics.snapshot() {
        diagnostics.push(d);
    }
    label
}

/// One verdict per unordered pair of distinct bound components with
/// different component ids. Repeated bindings of the same versioned component
/// count once; the first occurrence supplies the mention span.
pub fn infer_paragraph(
    post: &Post,
    paragraph_index: usize,
    bound: &[Binding],
    oracle: &dyn Oracle,
    template: &str,
) -> Vec<Verdict> {
    let Some(context) = post.body.get(paragraph_index) else {
        return Vec::new();
    };
    let mut distinct: Vec<&Binding> = Vec::new();
    for b in bound {
        if !distinct.iter().any(|d| d.component == b.component) {
            distinct.push(b);
        }
    }
    let mut verdicts = Vec::new();
    for (i, x) in distinct.iter().enumerate() {
        for y in &distinct[i + 1..] {
            if x.component.component_id == y.component.component_id {
                continue;
            }
            let (xs, xe) = x.span();
            let (ys, ye) = y.span();
            let q = CompatibilityQuestion {
                context: context.clone(),
                question: render_question(template, &x.component, &y.component),
                pair: (x.component.clone(), y.component.clone()),
                mention_span: Some((xs.min(ys), xe.max(ye))),
            };
            let label = oracle.answer(&q);
            let (a, b) = canonical_pair(x.component.clone(), y.component.clone());
            verdicts.push(Verdict {
                a,
                b,
                label,
                source: oracle.source(),
                post_id: post.id,
                votes: post.votes,
                paragraph: paragraph_index,
            });
        }
    }
    verdicts
}

/// Orders a pair by `(component_id, normalized version)`.
pub fn canonical_pair(
    x: VersionedComponent,
    y: VersionedComponent,
) -> (VersionedComponent, VersionedComponent) {
    if x.key() <= y.key() {
        (x, y)
    } else {
        (y, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PostKind;
    use crate::dictionary::{Dictionary, Layer};
    use crate::recognizer::Recognizer;
    use crate::version::Version;
    use std::collections::BTreeSet;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    pub(crate) const FIGURE_CONTEXT: &str = "tensorflow 1.13 doesn't work with cuda 10.1 because of the following: \"ImportError: libcublas.so.10.0: cannot open shared object file: No such file or directory\". tensorflow is looking for libcublas.so.10.0 whereas cuda provides libcublas.so.10.1.0.105.";

    fn vc(id: &str, layer: Layer, v: &str) -> VersionedComponent {
        VersionedComponent::new(id, layer, Version::parse(v).unwrap())
    }

    fn question_for(context: &str) -> CompatibilityQuestion {
        CompatibilityQuestion {
            context: context.into(),
            question: String::new(),
            pair: (
                vc("tensorflow", Layer::Library, "1.13"),
                vc("cuda", Layer::Driver, "10.1"),
            ),
            mention_span: None,
        }
    }

    fn post(body: &[&str]) -> Post {
        Post {
            id: 55028552,
            title: String::new(),
            body: body.iter().map(|s| s.to_string()).collect(),
            tags: BTreeSet::new(),
            votes: 7,
            kind: PostKind::Question,
            accepted: false,
            parent_id: None,
        }
    }

    #[test]
    fn question_template() {
        let tf = vc("tensorflow", Layer::Library, "1.13");
        let cuda = vc("cuda", Layer::Driver, "10.1");
        assert_eq!(
            build_question(&tf, &cuda),
            "Does tensorflow 1.13 work with cuda 10.1?"
        );
        assert_eq!(
            build_question(&cuda, &tf),
            "Does cuda 10.1 work with tensorflow 1.13?"
        );
        let py = vc("python", Layer::Runtime, "3.6.8");
        let ubuntu = vc("ubuntu", Layer::OsContainer, "16.04.6");
        assert_eq!(
            build_question(&py, &ubuntu),
            "Does python 3.6.8 work with ubuntu 16.04.6?"
        );
    }

    #[test]
    fn heuristic_labels() {
        assert_eq!(
            heuristic_infer(&question_for(FIGURE_CONTEXT)),
            Label::Incompatible
        );
        assert_eq!(
            heuristic_infer(&question_for(
                "python 3.7 works with tensorflow 1.13 out of the box"
            )),
            Label::Compatible
        );
        assert_eq!(
            heuristic_infer(&question_for("python 3.7 and tensorflow 1.13")),
            Label::Unknown
        );
    }

    #[test]
    fn negated_compatibility_is_not_a_compatibility_cue() {
        let oracle = HeuristicOracle::default();
        let q = question_for("keras 2.3 is not compatible with tensorflow 1.4");
        assert_eq!(oracle.scores(&q), (0, 1));
        let q = question_for("keras 2.3 is incompatible with tensorflow 1.4");
        assert_eq!(oracle.scores(&q), (0, 1));
    }

    #[test]
    fn cues_near_the_mentions_weigh_double() {
        let oracle = HeuristicOracle::default();
        let context = "numpy 1.16 works with python 3.7. Other setups fail with an error.";
        let mut q = question_for(context);
        assert_eq!(oracle.scores(&q), (1, 1));
        assert_eq!(oracle.answer(&q), Label::Unknown);
        q.mention_span = Some((0, 32));
        assert_eq!(oracle.scores(&q), (2, 1));
        assert_eq!(oracle.answer(&q), Label::Compatible);
    }

    #[test]
    fn answer_mapping() {
        assert_eq!(label_from_answer("No."), Label::Incompatible);
        assert_eq!(label_from_answer("yes"), Label::Compatible);
        assert_eq!(label_from_answer("YES, it does"), Label::Compatible);
        assert_eq!(label_from_answer("maybe"), Label::Unknown);
        assert_eq!(label_from_answer(""), Label::Unknown);
    }

    #[test]
    fn paragraph_pairs() {
        let rec = Recognizer::new(Dictionary::builtin());
        let oracle = HeuristicOracle::default();
        let p = post(&[FIGURE_CONTEXT]);
        let bound = rec.bind(FIGURE_CONTEXT);
        let verdicts = infer_paragraph(&p, 0, &bound, &oracle, DEFAULT_TEMPLATE);
        assert_eq!(verdicts.len(), 1);
        let v = &verdicts[0];
        assert_eq!(
            (v.a.to_string(), v.b.to_string()),
            ("cuda 10.1".into(), "tensorflow 1.13".into())
        );
        assert_eq!(v.label, Label::Incompatible);
        assert_eq!((v.post_id, v.votes), (55028552, 7));

        let text = "numpy 1.16 and pandas 0.25 and scipy 1.2 together";
        let bound = rec.bind(text);
        assert_eq!(
            infer_paragraph(&post(&[text]), 0, &bound, &oracle, DEFAULT_TEMPLATE).len(),
            3
        );

        let text = "python 3.6 and python 3.7";
        let bound = rec.bind(text);
        assert_eq!(bound.len(), 2);
        assert!(infer_paragraph(&post(&[text]), 0, &bound, &oracle, DEFAULT_TEMPLATE).is_empty());
    }

    /// Serves `responses` in order, one connection each.
    fn fake_service(responses: Vec<(u16, &'static str)>) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = [0u8; 4096];
                let _ = stream.read(&mut buf);
                let resp = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(resp.as_bytes());
            }
        });
        format!("http://{addr}/answer")
    }

    #[test]
    fn remote_answers() {
        let url = fake_service(vec![
            (200, r#"{"answer":"No."}"#),
            (200, r#"{"answer":"yes"}"#),
            (500, r#"{"answer":"yes"}"#),
            (200, "not json"),
        ]);
        let diags = Diagnostics::default();
        let q = question_for(FIGURE_CONTEXT);
        let t = Duration::from_secs(5);
        assert_eq!(remote_infer(&q, &url, t, &diags), Label::Incompatible);
        assert_eq!(remote_infer(&q, &url, t, &diags), Label::Compatible);
        assert!(diags.is_empty());
        assert_eq!(remote_infer(&q, &url, t, &diags), Label::Unknown);
        assert_eq!(remote_infer(&q, &url, t, &diags), Label::Unknown);
        assert_eq!(diags.len(), 2);
    }

    #[test]
    fn remote_timeout_is_unknown() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/answer", listener.local_addr().unwrap());
        let hold = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            std::thread::sleep(Duration::from_millis(800));
            drop(stream);
        });
        let diags = Diagnostics::default();
        let label = remote_infer(&question_for("x"), &url, Duration::from_millis(200), &diags);
        assert_eq!(label, Label::Unknown);
        assert_eq!(diags.len(), 1);
        hold.join().unwrap();
    }

    #[test]
    fn remote_connection_refused_is_unknown() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/answer", listener.local_addr().unwrap());
        drop(listener);
        let diags = Diagnostics::default();
        let label = remote_infer(&question_for("x"), &url, Duration::from_secs(1), &diags);
        assert_eq!(label, Label::Unknown);
        assert_eq!(diags.len(), 1);
    }
}
