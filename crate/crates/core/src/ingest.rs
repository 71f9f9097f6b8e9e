//! Relational-row ingestion: column schemas, the entity dictionary, and
//! hyperedge readers for TSV and JSON-lines input.
//!
//! A schema is a whitespace-separated list of `modifier::...::name` tokens.
//! Supported modifiers:
//!
//! * `transient` — the column takes part in the embedding but no output file
//!   is written for it
//! * `complex` — the field holds several entities (space-separated in TSV, an
//!   array in JSON)
//! * `reflexive` — the column interacts with itself and gets a self relation
//!   pair; requires `complex`
//! * `ignore` — the column is dropped entirely
//!
//! Rows are read strictly in file order; downstream floating-point
//! accumulation depends on the edge order, so readers never reorder rows.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CleoraError, Result};
use crate::hashing::EntityId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Tsv,
    Json,
}

impl std::fmt::Display for InputFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InputFormat::Tsv => write!(f, "tsv"),
            InputFormat::Json => write!(f, "json"),
        }
    }
}

impl std::str::FromStr for InputFormat {
    type Err = CleoraError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(InputFormat::Tsv),
            "json" => Ok(InputFormat::Json),
            other => Err(CleoraError::Config(format!(
                "unknown input format {other:?} (expected tsv or json)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSpec {
    pub name: String,
    pub transient: bool,
    pub complex: bool,
    pub reflexive: bool,
    pub ignore: bool,
}

/// Parsed column schema. Keeps the full column list (ingestion is positional)
/// plus the subset of non-ignored columns that actually form the graph.
#[derive(Debug, Clone)]
pub struct ColumnSchema {
    source: String,
    columns: Vec<ColumnSpec>,
    active: Vec<usize>,
}

impl ColumnSchema {
    pub fn parse(spec: &str) -> Result<ColumnSchema> {
        let mut columns: Vec<ColumnSpec> = Vec::new();
        for token in spec.split_whitespace() {
            let mut parts: Vec<&str> = token.split("::").collect();
            let name = parts.pop().unwrap_or_default();
            if name.is_empty() {
                return Err(CleoraError::Schema(format!(
                    "missing column name in token {token:?}"
                )));
            }
            let mut col = ColumnSpec {
                name: name.to_string(),
                transient: false,
                complex: false,
                reflexive: false,
                ignore: false,
            };
            for modifier in parts {
                match modifier {
                    "transient" => col.transient = true,
                    "complex" => col.complex = true,
                    "reflexive" => col.reflexive = true,
                    "ignore" => col.ignore = true,
                    other => {
                        return Err(CleoraError::Schema(format!(
                            "unknown column modifier {other:?} in token {token:?}"
                        )))
                    }
                }
            }
            if col.reflexive && !col.complex {
                return Err(CleoraError::Schema(format!(
                    "column '{}' is reflexive but not complex; a column can only interact with itself when it holds multiple entities",
                    col.name
                )));
            }
            columns.push(col);
        }
        if columns.is_empty() {
            return Err(CleoraError::Schema("schema is empty".into()));
        }

        let active: Vec<usize> = columns
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.ignore)
            .map(|(i, _)| i)
            .collect();

        let mut seen = std::collections::HashSet::new();
        for &i in &active {
            if !seen.insert(columns[i].name.as_str()) {
                return Err(CleoraError::Schema(format!(
                    "duplicate column name '{}'; columns sharing an id space must be expressed as one complex column",
                    columns[i].name
                )));
            }
        }

        let interacting = active.len() >= 2 || active.iter().any(|&i| columns[i].reflexive);
        if !interacting {
            return Err(CleoraError::Schema(
                "schema needs at least two non-ignored columns or one reflexive column".into(),
            ));
        }

        Ok(ColumnSchema {
            source: spec.split_whitespace().collect::<Vec<_>>().join(" "),
            columns,
            active,
        })
    }

    /// The normalized schema string this schema was parsed from.
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    /// Number of non-ignored columns; hyperedge groups use this arity.
    pub fn active_count(&self) -> usize {
        self.active.len()
    }

    /// Spec of the `i`-th non-ignored column.
    pub fn active_spec(&self, i: usize) -> &ColumnSpec {
        &self.columns[self.active[i]]
    }

    pub fn active_specs(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.active.iter().map(|&i| &self.columns[i])
    }
}

/// One input row resolved to per-column entity-id groups. Groups follow the
/// schema order of non-ignored columns and are never empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperedge {
    pub groups: Vec<Vec<EntityId>>,
    pub weight: f32,
}

impl Hyperedge {
    /// Total number of member entities, duplicates included.
    pub fn width(&self) -> usize {
        self.groups.iter().map(|g| g.len()).sum()
    }
}

/// Injective id -> label mapping per namespace. Labels are stored verbatim;
/// a second label hashing onto an occupied id is a hard error.
#[derive(Debug, Clone, Default)]
pub struct Dictionary {
    namespaces: BTreeMap<String, HashMap<EntityId, String>>,
}

impl Dictionary {
    pub fn new() -> Dictionary {
        Dictionary::default()
    }

    pub fn intern(&mut self, namespace: &str, label: &str) -> Result<EntityId> {
        let id = EntityId::from_label(namespace, label);
        let map = self.namespaces.entry(namespace.to_string()).or_default();
        match map.get(&id) {
            Some(existing) if existing != label => Err(CleoraError::HashCollision {
                namespace: namespace.to_string(),
                first: existing.clone(),
                second: label.to_string(),
            }),
            Some(_) => Ok(id),
            None => {
                map.insert(id, label.to_string());
                Ok(id)
            }
        }
    }

    pub fn label(&self, namespace: &str, id: EntityId) -> Option<&str> {
        self.namespaces
            .get(namespace)?
            .get(&id)
            .map(|s| s.as_str())
    }

    pub fn namespace(&self, namespace: &str) -> Option<&HashMap<EntityId, String>> {
        self.namespaces.get(namespace)
    }

    pub fn namespace_len(&self, namespace: &str) -> usize {
        self.namespaces.get(namespace).map_or(0, |m| m.len())
    }

    #[cfg(test)]
    pub(crate) fn insert_raw(&mut self, namespace: &str, id: EntityId, label: &str) {
        self.namespaces
            .entry(namespace.to_string())
            .or_default()
            .insert(id, label.to_string());
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    pub format: InputFormat,
    /// Expect a trailing numeric weight column (TSV) or a `weight` field (JSON).
    pub weighted: bool,
    /// Abort on the first malformed row instead of skipping it.
    pub strict: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            format: InputFormat::Tsv,
            weighted: false,
            strict: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub rows_read: u64,
    pub rows_skipped: u64,
}

/// Streaming hyperedge reader. Yields hyperedges in file order; malformed
/// rows are skipped and counted unless `strict` is set. Hash collisions are
/// always fatal.
pub struct HyperedgeReader<'a, R: BufRead> {
    reader: R,
    schema: &'a ColumnSchema,
    opts: IngestOptions,
    dict: &'a mut Dictionary,
    path: PathBuf,
    line_no: u64,
    buf: String,
    stats: IngestStats,
}

impl<'a> HyperedgeReader<'a, BufReader<File>> {
    pub fn from_path(
        path: &Path,
        schema: &'a ColumnSchema,
        opts: IngestOptions,
        dict: &'a mut Dictionary,
    ) -> Result<Self> {
        let file = File::open(path).map_err(|e| CleoraError::io(path, e))?;
        Ok(HyperedgeReader::new(
            BufReader::new(file),
            path.to_path_buf(),
            schema,
            opts,
            dict,
        ))
    }
}

impl<'a, R: BufRead> HyperedgeReader<'a, R> {
    pub fn new(
        reader: R,
        path: PathBuf,
        schema: &'a ColumnSchema,
        opts: IngestOptions,
        dict: &'a mut Dictionary,
    ) -> Self {
        HyperedgeReader {
            reader,
            schema,
            opts,
            dict,
            path,
            line_no: 0,
            buf: String::new(),
            stats: IngestStats::default(),
        }
    }

    pub fn stats(&self) -> IngestStats {
        self.stats
    }

    fn row_error(&self, msg: impl Into<String>) -> CleoraError {
        CleoraError::Row {
            path: self.path.clone(),
            line: self.line_no,
            msg: msg.into(),
        }
    }

    fn parse_weight(&self, raw: &str) -> Result<f32> {
        let w: f32 = raw
            .trim()
            .parse()
            .map_err(|_| self.row_error(format!("malformed weight {raw:?}")))?;
        if !w.is_finite() || w <= 0.0 {
            return Err(self.row_error(format!("weight must be a positive finite number, got {raw:?}")));
        }
        Ok(w)
    }

    fn parse_tsv(&mut self, line: &str) -> Result<Hyperedge> {
        let fields: Vec<&str> = line.split('\t').collect();
        let expected = self.schema.columns().len() + usize::from(self.opts.weighted);
        if fields.len() != expected {
            return Err(self.row_error(format!(
                "expected {expected} tab-separated fields, found {}",
                fields.len()
            )));
        }

        let weight = if self.opts.weighted {
            self.parse_weight(fields[fields.len() - 1])?
        } else {
            1.0
        };

        let mut groups = Vec::with_capacity(self.schema.active_count());
        for (col, field) in self.schema.columns().iter().zip(&fields) {
            if col.ignore {
                continue;
            }
            if col.complex {
                let ids = field
                    .split(' ')
                    .filter(|t| !t.is_empty())
                    .map(|t| self.dict.intern(&col.name, t))
                    .collect::<Result<Vec<_>>>()?;
                if ids.is_empty() {
                    return Err(self.row_error(format!("empty complex field '{}'", col.name)));
                }
                groups.push(ids);
            } else {
                if field.is_empty() {
                    return Err(self.row_error(format!("empty field '{}'", col.name)));
                }
                groups.push(vec![self.dict.intern(&col.name, field)?]);
            }
        }
        Ok(Hyperedge { groups, weight })
    }

    fn json_label(&self, value: &serde_json::Value, col: &str) -> Result<String> {
        match value {
            serde_json::Value::String(s) if !s.is_empty() => Ok(s.clone()),
            serde_json::Value::String(_) => {
                Err(self.row_error(format!("empty entity label in field '{col}'")))
            }
            serde_json::Value::Number(n) => Ok(n.to_string()),
            other => Err(self.row_error(format!(
                "field '{col}' must hold a string or number, got {other}"
            ))),
        }
    }

    fn parse_json(&mut self, line: &str) -> Result<Hyperedge> {
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| self.row_error(format!("invalid JSON: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| self.row_error("row is not a JSON object"))?;

        let weight = if self.opts.weighted {
            match obj.get("weight") {
                Some(serde_json::Value::Number(n)) => {
                    let w = n.as_f64().unwrap_or(f64::NAN);
                    if !w.is_finite() || w <= 0.0 {
                        return Err(self.row_error(format!("weight must be positive, got {n}")));
                    }
                    w as f32
                }
                Some(other) => {
                    return Err(self.row_error(format!("weight must be a number, got {other}")))
                }
                None => return Err(self.row_error("missing 'weight' field")),
            }
        } else {
            1.0
        };

        let mut groups = Vec::with_capacity(self.schema.active_count());
        for col in self.schema.columns() {
            if col.ignore {
                continue;
            }
            let value = obj
                .get(&col.name)
                .ok_or_else(|| self.row_error(format!("missing field '{}'", col.name)))?;
            if col.complex {
                let arr = value.as_array().ok_or_else(|| {
                    self.row_error(format!("complex field '{}' must be an array", col.name))
                })?;
                let mut ids = Vec::with_capacity(arr.len());
                for item in arr {
                    let label = self.json_label(item, &col.name)?;
                    ids.push(self.dict.intern(&col.name, &label)?);
                }
                if ids.is_empty() {
                    return Err(self.row_error(format!("empty complex field '{}'", col.name)));
                }
                groups.push(ids);
            } else {
                let label = self.json_label(value, &col.name)?;
                groups.push(vec![self.dict.intern(&col.name, &label)?]);
            }
        }
        Ok(Hyperedge { groups, weight })
    }

    fn parse_row(&mut self, line: &str) -> Result<Hyperedge> {
        match self.opts.format {
            InputFormat::Tsv => self.parse_tsv(line),
            InputFormat::Json => self.parse_json(line),
        }
    }
}

impl<'a, R: BufRead> Iterator for HyperedgeReader<'a, R> {
    type Item = Result<Hyperedge>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(CleoraError::io(&self.path, e))),
            }
            self.line_no += 1;
            let line = self.buf.trim_end_matches(['\n', '\r']).to_string();
            if line.is_empty() {
                continue;
            }
            self.stats.rows_read += 1;
            match self.parse_row(&line) {
                Ok(edge) => return Some(Ok(edge)),
                // Collisions poison the whole dictionary; never skip them.
                Err(e @ CleoraError::HashCollision { .. }) => return Some(Err(e)),
                Err(e) if self.opts.strict => return Some(Err(e)),
                Err(e) => {
                    log::warn!("skipping row: {e}");
                    self.stats.rows_skipped += 1;
                }
            }
        }
    }
}

/// Read a whole file into memory. Convenience wrapper around [`HyperedgeReader`].
pub fn read_hyperedges(
    path: &Path,
    schema: &ColumnSchema,
    opts: IngestOptions,
    dict: &mut Dictionary,
) -> Result<(Vec<Hyperedge>, IngestStats)> {
    let mut reader = HyperedgeReader::from_path(path, schema, opts, dict)?;
    let mut edges = Vec::new();
    for edge in &mut reader {
        edges.push(edge?);
    }
    let mut stats = reader.stats();
    stats.rows_skipped = stats.rows_read - edges.len() as u64;
    Ok((edges, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read_str(
        input: &str,
        schema: &ColumnSchema,
        opts: IngestOptions,
        dict: &mut Dictionary,
    ) -> Result<Vec<Hyperedge>> {
        HyperedgeReader::new(
            std::io::Cursor::new(input.to_string()),
            PathBuf::from("<test>"),
            schema,
            opts,
            dict,
        )
        .collect()
    }

    #[test]
    fn parse_plain_schema() {
        let s = ColumnSchema::parse("users products").unwrap();
        assert_eq!(s.columns().len(), 2);
        assert!(s.columns().iter().all(|c| !c.transient
            && !c.complex
            && !c.reflexive
            && !c.ignore));
        assert_eq!(s.active_count(), 2);
    }

    #[test]
    fn parse_modifier_schema() {
        let s = ColumnSchema::parse("transient::clusters complex::reflexive::products").unwrap();
        assert!(s.columns()[0].transient && !s.columns()[0].complex);
        assert!(s.columns()[1].complex && s.columns()[1].reflexive);
    }

    #[test]
    fn unknown_modifier_is_rejected() {
        let err = ColumnSchema::parse("users frobnicate::items").unwrap_err();
        assert!(matches!(err, CleoraError::Schema(_)), "{err}");
        assert!(err.to_string().contains("frobnicate"));
    }

    #[test]
    fn reflexive_requires_complex() {
        assert!(ColumnSchema::parse("a reflexive::b").is_err());
        assert!(ColumnSchema::parse("a complex::reflexive::b").is_ok());
    }

    #[test]
    fn schema_needs_interacting_columns() {
        assert!(ColumnSchema::parse("only").is_err());
        assert!(ColumnSchema::parse("only ignore::other").is_err());
        assert!(ColumnSchema::parse("complex::reflexive::only").is_ok());
        assert!(ColumnSchema::parse("ignore::a ignore::b").is_err());
    }

    #[test]
    fn duplicate_names_are_rejected() {
        assert!(ColumnSchema::parse("a a").is_err());
        // an ignored duplicate does not participate in the graph
        assert!(ColumnSchema::parse("a ignore::a").is_ok());
    }

    #[test]
    fn collision_detection_reports_both_labels() {
        let mut dict = Dictionary::new();
        let id = EntityId::from_label("users", "alice");
        dict.insert_raw("users", id, "mallory");
        let err = dict.intern("users", "alice").unwrap_err();
        match err {
            CleoraError::HashCollision { first, second, .. } => {
                assert_eq!(first, "mallory");
                assert_eq!(second, "alice");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn tsv_complex_row() {
        let schema = ColumnSchema::parse("users complex::products").unwrap();
        let mut dict = Dictionary::new();
        let edges = read_str(
            "u1\tp1 p2\n",
            &schema,
            IngestOptions::default(),
            &mut dict,
        )
        .unwrap();
        assert_eq!(edges.len(), 1);
        assert_eq!(
            edges[0].groups,
            vec![
                vec![EntityId::from_label("users", "u1")],
                vec![
                    EntityId::from_label("products", "p1"),
                    EntityId::from_label("products", "p2"),
                ],
            ]
        );
        assert_eq!(edges[0].weight, 1.0);
        assert_eq!(edges[0].width(), 3);
        assert_eq!(dict.label("users", EntityId::from_label("users", "u1")), Some("u1"));
    }

    #[test]
    fn arity_mismatch_is_a_row_error() {
        let schema = ColumnSchema::parse("a b").unwrap();
        let mut dict = Dictionary::new();
        let strict = IngestOptions {
            strict: true,
            ..IngestOptions::default()
        };
        let err = read_str("u1\tp1\tp2\n", &schema, strict, &mut dict).unwrap_err();
        assert!(matches!(err, CleoraError::Row { .. }), "{err}");

        // default mode skips and counts
        let mut dict = Dictionary::new();
        let mut reader = HyperedgeReader::new(
            std::io::Cursor::new("u1\tp1\tp2\nu2\tp2\n".to_string()),
            PathBuf::from("<test>"),
            &schema,
            IngestOptions::default(),
            &mut dict,
        );
        let good: Vec<_> = reader.by_ref().map(|r| r.unwrap()).collect();
        assert_eq!(good.len(), 1);
        assert_eq!(reader.stats().rows_read, 2);
        assert_eq!(reader.stats().rows_skipped, 1);
    }

    #[test]
    fn empty_complex_field_is_a_row_error() {
        let schema = ColumnSchema::parse("a complex::b").unwrap();
        let mut dict = Dictionary::new();
        let strict = IngestOptions {
            strict: true,
            ..IngestOptions::default()
        };
        assert!(read_str("u1\t \n", &schema, strict, &mut dict).is_err());
    }

    #[test]
    fn ignored_columns_are_dropped() {
        let with = ColumnSchema::parse("a ignore::junk b").unwrap();
        let without = ColumnSchema::parse("a b").unwrap();
        let mut d1 = Dictionary::new();
        let mut d2 = Dictionary::new();
        let e1 = read_str("x\tnoise\ty\n", &with, IngestOptions::default(), &mut d1).unwrap();
        let e2 = read_str("x\ty\n", &without, IngestOptions::default(), &mut d2).unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn weighted_trailing_column() {
        let schema = ColumnSchema::parse("a b").unwrap();
        let opts = IngestOptions {
            weighted: true,
            strict: true,
            ..IngestOptions::default()
        };
        let mut dict = Dictionary::new();
        let edges = read_str("x\ty\t2.5\n", &schema, opts, &mut dict).unwrap();
        assert_eq!(edges[0].weight, 2.5);

        let mut dict = Dictionary::new();
        assert!(read_str("x\ty\t-1\n", &schema, opts, &mut dict).is_err());
        let mut dict = Dictionary::new();
        assert!(read_str("x\ty\tnan\n", &schema, opts, &mut dict).is_err());
    }

    #[test]
    fn json_rows() {
        let schema = ColumnSchema::parse("users complex::products").unwrap();
        let opts = IngestOptions {
            format: InputFormat::Json,
            strict: true,
            ..IngestOptions::default()
        };
        let mut dict = Dictionary::new();
        let edges = read_str(
            "{\"users\": \"u1\", \"products\": [\"p1\", 7]}\n",
            &schema,
            opts,
            &mut dict,
        )
        .unwrap();
        assert_eq!(
            edges[0].groups[1],
            vec![
                EntityId::from_label("products", "p1"),
                EntityId::from_label("products", "7"),
            ]
        );

        // scalar where an array is required
        let mut dict = Dictionary::new();
        assert!(read_str(
            "{\"users\": \"u1\", \"products\": \"p1\"}\n",
            &schema,
            opts,
            &mut dict
        )
        .is_err());

        // missing field
        let mut dict = Dictionary::new();
        assert!(read_str("{\"users\": \"u1\"}\n", &schema, opts, &mut dict).is_err());
    }

    #[test]
    fn json_weighted() {
        let schema = ColumnSchema::parse("a b").unwrap();
        let opts = IngestOptions {
            format: InputFormat::Json,
            weighted: true,
            strict: true,
        };
        let mut dict = Dictionary::new();
        let edges = read_str(
            "{\"a\": \"x\", \"b\": \"y\", \"weight\": 3}\n",
            &schema,
            opts,
            &mut dict,
        )
        .unwrap();
        assert_eq!(edges[0].weight, 3.0);
    }

    #[test]
    fn rereading_yields_identical_stream() {
        let schema = ColumnSchema::parse("a complex::b").unwrap();
        let input = "x\tp q\ny\tr\nz\tp\n";
        let mut d1 = Dictionary::new();
        let mut d2 = Dictionary::new();
        let e1 = read_str(input, &schema, IngestOptions::default(), &mut d1).unwrap();
        let e2 = read_str(input, &schema, IngestOptions::default(), &mut d2).unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn width_two_rows_count() {
        let schema = ColumnSchema::parse("a b").unwrap();
        let mut dict = Dictionary::new();
        let rows: String = (0..50).map(|i| format!("u{i}\tv{}\n", i % 7)).collect();
        let edges = read_str(&rows, &schema, IngestOptions::default(), &mut dict).unwrap();
        assert_eq!(edges.len(), 50);
        assert!(edges.iter().all(|e| e.width() == 2));
    }
}
