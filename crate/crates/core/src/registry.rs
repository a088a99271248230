//! Name-keyed registries of interchangeable strategies behind a common trait.

use std::fmt;

/// Something that can be looked up by name.
pub trait Named {
    fn name(&self) -> &'static str;
}

/// An ordered collection of boxed strategies, selected by name at runtime.
pub struct Registry<T: ?Sized + Named> {
    kind: &'static str,
    entries: Vec<Box<T>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownName {
    pub kind: &'static str,
    pub name: String,
    pub known: Vec<&'static str>,
}

impl fmt::Display for UnknownName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unknown {} '{}' (known: {})",
            self.kind,
            self.name,
            self.known.join(", ")
        )
    }
}

impl std::error::Error for UnknownName {}

impl<T: ?Sized + Named> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: Vec::new(),
        }
    }

    /// Add an entry; a later entry with the same name replaces the earlier one.
    pub fn register(&mut self, item: Box<T>) -> &mut Self {
        let name = item.name();
        self.entries.retain(|e| e.name() != name);
        self.entries.push(item);
        self
    }

    pub fn with(mut self, item: Box<T>) -> Self {
        self.register(item);
        self
    }

    pub fn get(&self, name: &str) -> Result<&T, UnknownName> {
        self.entries
            .iter()
            .find(|e| e.name() == name)
            .map(|b| b.as_ref())
            .ok_or_else(|| UnknownName {
                kind: self.kind,
                name: name.to_string(),
                known: self.names(),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.entries.iter().map(|b| b.as_ref())
    }
}
