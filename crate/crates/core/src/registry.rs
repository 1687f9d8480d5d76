//! Name-keyed registry of strategy factories.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Maps names to factories of one strategy family.
///
/// Names are kept sorted so that listings are stable.
pub struct Registry<F: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<String, Box<F>>,
}

impl<F: ?Sized> Registry<F> {
    pub fn empty(kind: &'static str) -> Self {
        Registry { kind, entries: BTreeMap::new() }
    }

    /// Adds or replaces the factory registered under `name`.
    pub fn register(&mut self, name: &str, factory: Box<F>) {
        self.entries.insert(name.to_string(), factory);
    }

    pub fn get(&self, name: &str) -> Result<&F> {
        self.entries
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::Unknown { kind: self.kind, name: name.to_string() })
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }
}
