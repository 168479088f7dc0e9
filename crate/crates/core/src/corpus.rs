//! Post corpus loading and the tag / cue / accepted-answer filter funnel.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recognizer::Binding;

const DEFAULT_FILTERS: &str = include_str!("../data/filters.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostKind {
    Question,
    Answer,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Post {
    pub id: u64,
    pub title: String,
    pub body: Vec<String>,
    pub tags: BTreeSet<String>,
    pub votes: i64,
    pub kind: PostKind,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<u64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawBody {
    Text(String),
    Paragraphs(Vec<String>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPost {
    id: u64,
    #[serde(default)]
    title: String,
    body: RawBody,
    #[serde(default)]
    tags: Vec<String>,
    #[serde(default)]
    votes: i64,
    kind: PostKind,
    #[serde(default)]
    accepted: Option<bool>,
    #[serde(default)]
    parent_id: Option<u64>,
}

/// Splits raw body text into paragraphs on blank lines.
pub fn split_paragraphs(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                out.push(current.join("\n").trim().to_string());
                current.clear();
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        out.push(current.join("\n").trim().to_string());
    }
    out
}

impl Post {
    /// Parses one corpus record and checks the per-record invariants.
    pub fn from_json(line: &str) -> std::result::Result<Post, String> {
        let raw: RawPost = serde_json::from_str(line).map_err(|e| e.to_string())?;
        if raw.id == 0 {
            return Err("post id must be positive".into());
        }
        let accepted = raw.accepted.unwrap_or(false);
        if raw.kind == PostKind::Question && (accepted || raw.parent_id.is_some()) {
            return Err(format!(
                "question {} cannot carry accepted or parent_id",
                raw.id
            ));
        }
        let body = match raw.body {
            RawBody::Text(t) => split_paragraphs(&t),
            RawBody::Paragraphs(ps) => ps
                .into_iter()
                .map(|p| p.trim().to_string())
                .filter(|p| !p.is_empty())
                .collect(),
        };
        Ok(Post {
            id: raw.id,
            title: raw.title,
            body,
            tags: raw
                .tags
                .into_iter()
                .map(|t| t.trim().to_lowercase())
                .collect(),
            votes: raw.votes,
            kind: raw.kind,
            accepted,
            parent_id: raw.parent_id,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct LoadedCorpus {
    pub posts: Vec<Post>,
    pub errors: Vec<RecordError>,
}

/// Reads a line-oriented corpus. Malformed records are skipped and reported
/// with their 1-based line number; blank lines are ignored.
pub fn load_corpus(path: &Path) -> Result<LoadedCorpus> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut loaded = LoadedCorpus::default();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match Post::from_json(&line) {
            Ok(post) if !seen.insert(post.id) => loaded.errors.push(RecordError {
                line: idx + 1,
                message: format!("duplicate post id {}", post.id),
            }),
            Ok(post) => loaded.posts.push(post),
            Err(message) => loaded.errors.push(RecordError {
                line: idx + 1,
                message,
            }),
        }
    }
    Ok(loaded)
}

/// Writes posts one JSON record per line, body as a paragraph list.
pub fn write_posts(path: &Path, posts: &[Post]) -> Result<()> {
    let mut out = Vec::new();
    for post in posts {
        serde_json::to_writer(&mut out, post).expect("posts serialize");
        out.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FilterConfigFile {
    pub dl_tags: Vec<String>,
    pub cue_patterns: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct FilterConfig {
    dl_tags: BTreeSet<String>,
    cue_patterns: Vec<Regex>,
}

impl FilterConfig {
    pub fn new(dl_tags: &[String], cue_patterns: &[String]) -> Result<FilterConfig> {
        if dl_tags.is_empty() {
            return Err(Error::Config("dl_tags must not be empty".into()));
        }
        if cue_patterns.is_empty() {
            return Err(Error::Config("cue_patterns must not be empty".into()));
        }
        let cue_patterns = cue_patterns
            .iter()
            .map(|p| {
                RegexBuilder::new(p)
                    .case_insensitive(true)
                    .build()
                    .map_err(|e| Error::Config(format!("cue pattern {p:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FilterConfig {
            dl_tags: dl_tags.iter().map(|t| t.trim().to_lowercase()).collect(),
            cue_patterns,
        })
    }

    pub fn builtin() -> FilterConfig {
        let file: FilterConfigFile =
            serde_json::from_str(DEFAULT_FILTERS).expect("bundled filters parse");
        FilterConfig::new(&file.dl_tags, &file.cue_patterns).expect("bundled filters are valid")
    }

    pub fn load(path: &Path) -> Result<FilterConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: FilterConfigFile =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        FilterConfig::new(&file.dl_tags, &file.cue_patterns)
    }

    pub fn load_or_builtin(path: Option<&Path>) -> Result<FilterConfig> {
        match path {
            Some(p) => FilterConfig::load(p),
            None => Ok(FilterConfig::builtin()),
        }
    }

    fn has_dl_tag(&self, tags: &BTreeSet<String>) -> bool {
        tags.iter().any(|t| self.dl_tags.contains(t))
    }

    fn has_cue(&self, post: &Post) -> bool {
        post.body
            .iter()
            .any(|p| self.cue_patterns.iter().any(|re| re.is_match(p)))
    }
}

/// Post counts after each filter stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FilterStats {
    pub input: usize,
    pub after_tags: usize,
    pub after_cues: usize,
    pub after_accepted: usize,
}

/// See [`filter_posts_with_stats`].
pub fn filter_posts(posts: &[Post], cfg: &FilterConfig) -> Vec<Post> {
    filter_posts_with_stats(posts, cfg).0
}

/// Keeps DL-tagged questions with a cue paragraph, and accepted answers whose
/// question is DL-tagged and where either side has a cue paragraph.
///
/// Answers are judged by their parent's tags when the parent is present, and
/// kept answers take those tags with them. That keeps the filter idempotent
/// when the parent itself is dropped for lack of a cue. Input order is
/// preserved.
pub fn filter_posts_with_stats(posts: &[Post], cfg: &FilterConfig) -> (Vec<Post>, FilterStats) {
    let by_id: HashMap<u64, &Post> = posts
        .iter()
        .filter(|p| p.kind == PostKind::Question)
        .map(|p| (p.id, p))
        .collect();
    let mut stats = FilterStats {
        input: posts.len(),
        ..FilterStats::default()
    };
    let mut kept = Vec::new();
    for post in posts {
        let parent = post.parent_id.and_then(|id| by_id.get(&id).copied());
        let tags = match (post.kind, parent) {
            (PostKind::Answer, Some(q)) => &q.tags,
            _ => &post.tags,
        };
        if !cfg.has_dl_tag(tags) {
            continue;
        }
        stats.after_tags += 1;
        let cue = cfg.has_cue(post)
            || (post.kind == PostKind::Answer && parent.is_some_and(|q| cfg.has_cue(q)));
        if !cue {
            continue;
        }
        stats.after_cues += 1;
        if post.kind == PostKind::Answer && !post.accepted {
            continue;
        }
        stats.after_accepted += 1;
        let mut post = post.clone();
        post.tags = tags.clone();
        kept.push(post);
    }
    (kept, stats)
}

/// Indexes of paragraphs whose bindings cover at least two distinct
/// components. `bindings[i]` are the bindings of paragraph `i`.
pub fn candidate_paragraphs(post: &Post, bindings: &[Vec<Binding>]) -> Vec<usize> {
    bindings
        .iter()
        .take(post.body.len())
        .enumerate()
        .filter(|(_, bound)| {
            bound
                .iter()
                .map(|b| b.component.component_id.as_str())
                .collect::<HashSet<_>>()
                .len()
                >= 2
        })
        .map(|(i, _)| i)
        .collect()
}
