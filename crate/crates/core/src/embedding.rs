//! Id-indexed embedding matrices and their on-disk format.
//!
//! All entity types share one text format: a header line `<count> <dim>`
//! followed by one line per entity, `<id> <v1> ... <vdim>`, space separated.
//! Values are written with Rust's shortest-round-trip float formatting, so a
//! write/read cycle is bit-exact.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Which entity level a table holds vectors for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntityKind {
    Service,
    Doctor,
    Patient,
    Hybrid,
}

impl EntityKind {
    pub fn name(self) -> &'static str {
        match self {
            EntityKind::Service => "service",
            EntityKind::Doctor => "doctor",
            EntityKind::Patient => "patient",
            EntityKind::Hybrid => "hybrid",
        }
    }
}

/// A dense `|ids| x dim` matrix of embedding vectors, row-indexed by entity id.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    entity: EntityKind,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingTable {
    /// Build a table from parallel ids and row-major data.
    ///
    /// Ids must be unique and every value finite.
    pub fn new(entity: EntityKind, ids: Vec<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if ids.len() * dim != data.len() {
            return Err(Error::DimensionMismatch {
                context: "embedding table",
                expected: ids.len() * dim,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding table"));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate embedding id `{id}`")));
            }
        }
        Ok(Self { entity, ids, index, dim, data })
    }

    pub fn entity(&self) -> EntityKind {
        self.entity
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Vector for `id`, or `Error::UnknownId`.
    pub fn get(&self, id: &str) -> Result<&[f64]> {
        match self.row_index(id) {
            Some(i) => Ok(self.row(i)),
            None => Err(Error::UnknownId { kind: self.entity.name(), id: id.to_string() }),
        }
    }

    /// Keep only the rows whose id satisfies the predicate, preserving order.
    pub fn filter<F: Fn(&str) -> bool>(&self, keep: F) -> EmbeddingTable {
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for (i, id) in self.ids.iter().enumerate() {
            if keep(id) {
                ids.push(id.clone());
                data.extend_from_slice(self.row(i));
            }
        }
        EmbeddingTable::new(self.entity, ids, self.dim, data).expect("filtered rows stay valid")
    }

    /// Serialize in the shared embedding format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.ids.len(), self.dim);
        for (i, id) in self.ids.iter().enumerate() {
            out.push_str(id);
            for v in self.row(i) {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Parse the shared embedding format.
    pub fn from_text(entity: EntityKind, text: &str, origin: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(origin, 1, "missing header line"))?;
        let mut parts = header.split_whitespace();
        let count: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::parse(origin, 1, "bad entity count in header"))?;
        let dim: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::parse(origin, 1, "bad dimension in header"))?;

        let mut ids = Vec::with_capacity(count);
        let mut data = Vec::with_capacity(count * dim);
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let row = lineno + 1;
            let mut fields = line.split_whitespace();
            let id = fields
                .next()
                .ok_or_else(|| Error::parse(origin, row, "missing id"))?;
            let mut values = 0usize;
            for field in fields {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::parse(origin, row, format!("bad float `{field}`")))?;
                data.push(v);
                values += 1;
            }
            if values != dim {
                return Err(Error::parse(
                    origin,
                    row,
                    format!("expected {dim} values, found {values}"),
                ));
            }
            ids.push(id.to_string());
        }
        if ids.len() != count {
            return Err(Error::parse(
                origin,
                1,
                format!("header declares {count} rows, file has {}", ids.len()),
            ));
        }
        EmbeddingTable::new(entity, ids, dim, data)
    }

    pub fn load(entity: EntityKind, path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        EmbeddingTable::from_text(entity, &text, path)
    }
}

/// Cosine similarity of two vectors; 0 when either has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}
