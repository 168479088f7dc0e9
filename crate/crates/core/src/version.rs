//! Version tokens as they appear in prose: `3.7`, `v1.13.5`, `2.2.x`, `8`.
//!
//! A [`Version`] keeps the surface text it was parsed from, but identity,
//! hashing and ordering use only the normalized form (segments plus the
//! wildcard flag), so `v1.13` and `1.13` are the same graph node.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

static VERSION_TOKEN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^[vV]?(\d+)(?:\.(\d+))?(?:\.(\d+))?(\.[xX])?$").expect("static regex")
});

#[derive(Clone, Debug)]
pub struct Version {
    raw: String,
    segments: Vec<u64>,
    wildcard: bool,
    had_v_prefix: bool,
}

impl Version {
    /// Parses a token accepted by one of the version grammars: one to three
    /// numeric segments, or one or two segments followed by `.x`.
    pub fn parse(raw: &str) -> Result<Version> {
        let invalid = || Error::InvalidVersion(raw.to_string());
        let caps = VERSION_TOKEN.captures(raw).ok_or_else(invalid)?;
        let wildcard = caps.get(4).is_some();
        let mut segments = Vec::with_capacity(3);
        for idx in 1..=3 {
            if let Some(m) = caps.get(idx) {
                segments.push(m.as_str().parse::<u64>().map_err(|_| invalid())?);
            }
        }
        if wildcard && segments.len() > 2 {
            return Err(invalid());
        }
        Ok(Version {
            raw: raw.to_string(),
            segments,
            wildcard,
            had_v_prefix: raw.starts_with(['v', 'V']),
        })
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn segments(&self) -> &[u64] {
        &self.segments
    }

    pub fn is_wildcard(&self) -> bool {
        self.wildcard
    }

    pub fn had_v_prefix(&self) -> bool {
        self.had_v_prefix
    }

    /// Canonical rendering: segments joined by `.`, plus `.x` for wildcards.
    pub fn normalized(&self) -> String {
        let mut out = self
            .segments
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(".");
        if self.wildcard {
            out.push_str(".x");
        }
        out
    }

    /// Surface text without the `v` prefix, lowercased. Keeps zero padding
    /// such as `16.04`, which reads better in generated questions.
    pub fn display_text(&self) -> String {
        let text = self.raw.strip_prefix(['v', 'V']).unwrap_or(&self.raw);
        text.to_ascii_lowercase()
    }

    /// True when one version's segments are a prefix of the other's.
    /// `1.13` matches `1.13.1`, `3.x` matches `3.7.2`.
    pub fn prefix_matches(&self, other: &Version) -> bool {
        let n = self.segments.len().min(other.segments.len());
        self.segments[..n] == other.segments[..n]
    }

    /// Number of leading segments shared with `other`.
    pub fn common_prefix_len(&self, other: &Version) -> usize {
        self.segments
            .iter()
            .zip(&other.segments)
            .take_while(|(a, b)| a == b)
            .count()
    }

    /// Same normalized identity.
    pub fn is_exact(&self, other: &Version) -> bool {
        self == other
    }
}

impl PartialEq for Version {
    fn eq(&self, other: &Self) -> bool {
        self.segments == other.segments && self.wildcard == other.wildcard
    }
}

impl Eq for Version {}

impl Hash for Version {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.segments.hash(state);
        self.wildcard.hash(state);
    }
}

impl PartialOrd for Version {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lexicographic on the normalized string, which is the canonical order used
/// for relation endpoints.
impl Ord for Version {
    fn cmp(&self, other: &Self) -> Ordering {
        self.normalized().cmp(&other.normalized())
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.normalized())
    }
}

impl FromStr for Version {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Version::parse(s)
    }
}

impl Serialize for Version {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.normalized())
    }
}

impl<'de> Deserialize<'de> for Version {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Version::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Convenience wrapper over [`Version::parse`].
pub fn normalize_version(raw: &str) -> Result<Version> {
    Version::parse(raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn strips_v_prefix() {
        let v = normalize_version("v1.13.5").unwrap();
        assert_eq!(v.segments(), &[1, 13, 5]);
        assert_eq!(v.normalized(), "1.13.5");
        assert!(v.had_v_prefix());
        assert!(!v.is_wildcard());
    }

    #[test]
    fn wildcard() {
        let v = normalize_version("3.x").unwrap();
        assert_eq!(v.segments(), &[3]);
        assert!(v.is_wildcard());
        assert_eq!(v.normalized(), "3.x");

        let v = normalize_version("v2.2.X").unwrap();
        assert_eq!(v.segments(), &[2, 2]);
        assert_eq!(v.normalized(), "2.2.x");
    }

    #[test]
    fn leading_zeros_dropped_raw_kept() {
        let v = normalize_version("007.1").unwrap();
        assert_eq!(v.segments(), &[7, 1]);
        assert_eq!(v.normalized(), "7.1");
        assert_eq!(v.raw(), "007.1");
        assert_eq!(
            normalize_version("16.04.6").unwrap().display_text(),
            "16.04.6"
        );
    }

    #[test]
    fn rejects_non_versions() {
        for bad in [
            "", "v", "1.2.3.4", "1.2.3.x", "abc", "1..2", ">=1.0", "1.2-rc1",
        ] {
            assert!(normalize_version(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn prefix_matching() {
        let v = |s| Version::parse(s).unwrap();
        assert!(v("1.13").prefix_matches(&v("1.13.1")));
        assert!(v("1.13.1").prefix_matches(&v("1.13")));
        assert!(v("3.x").prefix_matches(&v("3.7.2")));
        assert!(!v("1.13").prefix_matches(&v("1.14")));
        assert_eq!(v("1.13.1").common_prefix_len(&v("1.13.2")), 2);
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(
            segs in prop::collection::vec(0u64..10_000, 1..=3),
            v in any::<bool>(),
            wild in any::<bool>(),
        ) {
            let segs = if wild { segs[..segs.len().min(2)].to_vec() } else { segs };
            let mut raw = segs.iter().map(|s| format!("{s:03}")).collect::<Vec<_>>().join(".");
            if wild { raw.push_str(".x"); }
            if v { raw.insert(0, 'v'); }
            let once = Version::parse(&raw).unwrap();
            let twice = Version::parse(&once.normalized()).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(once.normalized(), twice.normalized());
        }
    }
}
