//! Component dictionary: canonical ids, stack layers and surface aliases.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_COMPONENTS: &str = include_str!("../data/components.json");

/// The five layers of a deep-learning stack, top to bottom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Library,
    Runtime,
    Driver,
    OsContainer,
    Hardware,
}

impl Layer {
    pub const ALL: [Layer; 5] = [
        Layer::Library,
        Layer::Runtime,
        Layer::Driver,
        Layer::OsContainer,
        Layer::Hardware,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Library => "library",
            Layer::Runtime => "runtime",
            Layer::Driver => "driver",
            Layer::OsContainer => "os_container",
            Layer::Hardware => "hardware",
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Layer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Layer::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Data(format!("unknown stack layer {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentEntry {
    pub id: String,
    pub layer: Layer,
    #[serde(default)]
    pub aliases: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Dictionary {
    entries: Vec<ComponentEntry>,
    by_id: BTreeMap<String, usize>,
    /// Lowercased alias -> entry index, longest alias first.
    aliases: Vec<(String, usize)>,
}

impl Dictionary {
    pub fn new(entries: Vec<ComponentEntry>) -> Result<Dictionary> {
        if entries.is_empty() {
            return Err(Error::Data("component dictionary is empty".into()));
        }
        let mut by_id = BTreeMap::new();
        let mut alias_owner: BTreeMap<String, usize> = BTreeMap::new();
        let mut entries = entries;
        for (idx, entry) in entries.iter_mut().enumerate() {
            entry.id = entry.id.trim().to_ascii_lowercase();
            if entry.id.is_empty() {
                return Err(Error::Data(format!(
                    "dictionary entry {idx} has an empty id"
                )));
            }
            if by_id.insert(entry.id.clone(), idx).is_some() {
                return Err(Error::Data(format!(
                    "duplicate component id {:?}",
                    entry.id
                )));
            }
            let mut seen = HashSet::new();
            let mut aliases = Vec::new();
            for alias in std::iter::once(entry.id.clone()).chain(entry.aliases.drain(..)) {
                let alias = alias.trim().to_ascii_lowercase();
                if !alias.is_empty() && seen.insert(alias.clone()) {
                    aliases.push(alias);
                }
            }
            for alias in &aliases {
                if let Some(&other) = alias_owner.get(alias) {
                    if other != idx {
                        return Err(Error::Data(format!(
                            "alias {alias:?} maps to more than one component"
                        )));
                    }
                }
                alias_owner.insert(alias.clone(), idx);
            }
            entry.aliases = aliases;
        }
        let mut aliases: Vec<(String, usize)> = alias_owner.into_iter().collect();
        aliases.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        Ok(Dictionary {
            entries,
            by_id,
            aliases,
        })
    }

    /// The dictionary bundled with the crate.
    pub fn builtin() -> Dictionary {
        let entries: Vec<ComponentEntry> =
            serde_json::from_str(DEFAULT_COMPONENTS).expect("bundled dictionary parses");
        Dictionary::new(entries).expect("bundled dictionary is valid")
    }

    pub fn load(path: &Path) -> Result<Dictionary> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries: Vec<ComponentEntry> =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        Dictionary::new(entries)
    }

    /// Loads `path` when given, otherwise the bundled dictionary.
    pub fn load_or_builtin(path: Option<&Path>) -> Result<Dictionary> {
        match path {
            Some(p) => Dictionary::load(p),
            None => Ok(Dictionary::builtin()),
        }
    }

    pub fn entries(&self) -> &[ComponentEntry] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&ComponentEntry> {
        self.by_id.get(id).map(|&i| &self.entries[i])
    }

    /// Case-insensitive alias lookup.
    pub fn resolve(&self, name: &str) -> Option<&ComponentEntry> {
        let name = name.trim().to_ascii_lowercase();
        self.aliases
            .iter()
            .find(|(alias, _)| *alias == name)
            .map(|&(_, i)| &self.entries[i])
    }

    /// Lowercased aliases with owning entry, longest first.
    pub fn aliases(&self) -> impl Iterator<Item = (&str, &ComponentEntry)> {
        self.aliases
            .iter()
            .map(|(a, i)| (a.as_str(), &self.entries[*i]))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.by_id.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_covers_every_layer() {
        let dict = Dictionary::builtin();
        assert!(dict.entries().len() >= 20);
        for layer in Layer::ALL {
            assert!(dict.entries().iter().any(|e| e.layer == layer), "{layer}");
        }
    }

    #[test]
    fn id_is_an_alias() {
        let dict = Dictionary::new(vec![ComponentEntry {
            id: "TensorFlow".into(),
            layer: Layer::Library,
            aliases: vec!["TF".into()],
        }])
        .unwrap();
        assert_eq!(
            dict.get("tensorflow").unwrap().aliases,
            vec!["tensorflow", "tf"]
        );
        assert_eq!(dict.resolve("Tf").unwrap().id, "tensorflow");
    }

    #[test]
    fn rejects_duplicates_and_shared_aliases() {
        let e = |id: &str, aliases: &[&str]| ComponentEntry {
            id: id.into(),
            layer: Layer::Library,
            aliases: aliases.iter().map(|s| s.to_string()).collect(),
        };
        assert!(Dictionary::new(vec![e("a", &[]), e("a", &[])]).is_err());
        assert!(Dictionary::new(vec![e("a", &["x"]), e("b", &["x"])]).is_err());
        assert!(Dictionary::new(vec![]).is_err());
    }

    #[test]
    fn layer_names_round_trip() {
        for layer in Layer::ALL {
            assert_eq!(layer.as_str().parse::<Layer>().unwrap(), layer);
            let json = serde_json::to_string(&layer).unwrap();
            assert_eq!(json, format!("\"{}\"", layer.as_str()));
        }
    }
}
