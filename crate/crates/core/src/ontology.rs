//! Minimal Human Phenotype Ontology support.
//!
//! Only the `is_a` graph is kept. Two input formats are accepted: a reduced
//! OBO file (`[Term]` stanzas with `id:`, `name:` and `is_a:` lines) and a
//! tab-separated edge list (`child<TAB>parent<TAB>child_name`).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// `HP:0000118` Phenotypic abnormality. Generalization stops below it.
pub const PHENOTYPIC_ABNORMALITY: &str = "HP:0000118";

/// An HPO identifier of the form `HP:NNNNNNN`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HpoId(String);

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid HPO id {0:?} (expected HP: followed by 7 digits)")]
pub struct InvalidHpoId(pub String);

impl HpoId {
    pub fn new(raw: &str) -> Result<Self, InvalidHpoId> {
        let raw = raw.trim();
        let valid = raw.len() == 10
            && raw.starts_with("HP:")
            && raw[3..].bytes().all(|b| b.is_ascii_digit());
        if valid {
            Ok(HpoId(raw.to_string()))
        } else {
            Err(InvalidHpoId(raw.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn root() -> Self {
        HpoId(PHENOTYPIC_ABNORMALITY.to_string())
    }
}

impl FromStr for HpoId {
    type Err = InvalidHpoId;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HpoId::new(s)
    }
}

impl fmt::Display for HpoId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for HpoId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for HpoId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        HpoId::new(&raw).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HpoTerm {
    pub id: HpoId,
    pub name: String,
    pub parents: Vec<HpoId>,
}

#[derive(Debug, Error)]
pub enum OntologyError {
    #[error("cannot read ontology: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("term {child} references unknown parent {parent}")]
    DanglingParent { child: HpoId, parent: HpoId },
    #[error("is_a cycle: {}", join_ids(.0))]
    Cycle(Vec<HpoId>),
    #[error("ontology does not define the root {PHENOTYPIC_ABNORMALITY}")]
    MissingRoot,
    #[error("unknown HPO id {0}")]
    UnknownTerm(String),
}

fn join_ids(ids: &[HpoId]) -> String {
    ids.iter().map(HpoId::as_str).collect::<Vec<_>>().join(" -> ")
}

struct Node {
    term: HpoTerm,
    parents: Vec<usize>,
    // All transitive ancestors, ignoring the root cut-off. Filled on demand.
    closure: OnceLock<BTreeSet<usize>>,
}

/// Parsed ontology with memoized ancestor closure.
///
/// Immutable once built; closures are filled lazily and idempotently, so a
/// shared `&Ontology` can be queried from many threads.
pub struct Ontology {
    nodes: Vec<Node>,
    index: HashMap<HpoId, usize>,
    root: usize,
}

impl fmt::Debug for Ontology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Ontology").field("terms", &self.nodes.len()).finish()
    }
}

impl Ontology {
    /// Builds an ontology from terms, resolving parents and rejecting cycles.
    pub fn from_terms(terms: Vec<HpoTerm>) -> Result<Self, OntologyError> {
        let mut merged: BTreeMap<HpoId, HpoTerm> = BTreeMap::new();
        for term in terms {
            match merged.get_mut(&term.id) {
                Some(existing) => {
                    if existing.name.is_empty() {
                        existing.name = term.name;
                    }
                    for p in term.parents {
                        if !existing.parents.contains(&p) {
                            existing.parents.push(p);
                        }
                    }
                }
                None => {
                    merged.insert(term.id.clone(), term);
                }
            }
        }

        let index: HashMap<HpoId, usize> = merged
            .keys()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let mut nodes = Vec::with_capacity(merged.len());
        for term in merged.into_values() {
            let mut parents = Vec::with_capacity(term.parents.len());
            for p in &term.parents {
                match index.get(p) {
                    Some(&i) => parents.push(i),
                    None => {
                        return Err(OntologyError::DanglingParent {
                            child: term.id.clone(),
                            parent: p.clone(),
                        })
                    }
                }
            }
            nodes.push(Node {
                term,
                parents,
                closure: OnceLock::new(),
            });
        }

        if let Some(cycle) = find_cycle(&nodes) {
            return Err(OntologyError::Cycle(
                cycle.into_iter().map(|i| nodes[i].term.id.clone()).collect(),
            ));
        }
        let root = *index
            .get(&HpoId::root())
            .ok_or(OntologyError::MissingRoot)?;
        Ok(Ontology { nodes, index, root })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: &HpoId) -> bool {
        self.index.contains_key(id)
    }

    pub fn term(&self, id: &HpoId) -> Option<&HpoTerm> {
        self.index.get(id).map(|&i| &self.nodes[i].term)
    }

    pub fn name(&self, id: &HpoId) -> Option<&str> {
        self.term(id).map(|t| t.name.as_str())
    }

    /// Iterates terms in lexicographic id order.
    pub fn terms(&self) -> impl Iterator<Item = &HpoTerm> {
        self.nodes.iter().map(|n| &n.term)
    }

    fn closure(&self, i: usize) -> &BTreeSet<usize> {
        self.nodes[i].closure.get_or_init(|| {
            let mut acc = BTreeSet::new();
            for &p in &self.nodes[i].parents {
                acc.insert(p);
                acc.extend(self.closure(p).iter().copied());
            }
            acc
        })
    }

    fn in_subtree(&self, i: usize) -> bool {
        i != self.root && self.closure(i).contains(&self.root)
    }

    /// Transitive `is_a` ancestors of `id` that lie strictly inside the
    /// Phenotypic abnormality subtree. The term itself, the root and
    /// everything above it are excluded.
    pub fn ancestors(&self, id: &HpoId) -> Result<BTreeSet<HpoId>, OntologyError> {
        let &i = self
            .index
            .get(id)
            .ok_or_else(|| OntologyError::UnknownTerm(id.to_string()))?;
        Ok(self
            .closure(i)
            .iter()
            .filter(|&&a| self.in_subtree(a))
            .map(|&a| self.nodes[a].term.id.clone())
            .collect())
    }
}

fn find_cycle(nodes: &[Node]) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let mut marks = vec![Mark::New; nodes.len()];
    for start in 0..nodes.len() {
        if marks[start] != Mark::New {
            continue;
        }
        // iterative DFS: (node, next parent slot)
        let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
        marks[start] = Mark::Active;
        while let Some(top) = stack.last_mut() {
            let node = top.0;
            if let Some(&p) = nodes[node].parents.get(top.1) {
                top.1 += 1;
                match marks[p] {
                    Mark::New => {
                        marks[p] = Mark::Active;
                        stack.push((p, 0));
                    }
                    Mark::Active => {
                        let from = stack.iter().position(|&(n, _)| n == p).unwrap();
                        let mut cycle: Vec<usize> = stack[from..].iter().map(|&(n, _)| n).collect();
                        cycle.push(p);
                        return Some(cycle);
                    }
                    Mark::Done => {}
                }
            } else {
                marks[node] = Mark::Done;
                stack.pop();
            }
        }
    }
    None
}

/// Reads an ontology file, choosing the OBO reader when the file contains a
/// `[Term]` stanza and the TSV edge-list reader otherwise.
pub fn parse_ontology(path: impl AsRef<Path>) -> Result<Ontology, OntologyError> {
    let text = std::fs::read_to_string(path)?;
    parse_ontology_str(&text)
}

pub fn parse_ontology_str(text: &str) -> Result<Ontology, OntologyError> {
    let terms = if text.lines().any(|l| l.trim() == "[Term]") {
        read_obo(text)?
    } else {
        read_edge_list(text)?
    };
    Ontology::from_terms(terms)
}

fn parse_id(raw: &str, line: usize) -> Result<HpoId, OntologyError> {
    HpoId::new(raw).map_err(|e| OntologyError::Parse {
        line,
        message: e.to_string(),
    })
}

fn read_obo(text: &str) -> Result<Vec<HpoTerm>, OntologyError> {
    let mut terms = Vec::new();
    let mut current: Option<HpoTerm> = None;
    let mut in_term = false;
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if line.starts_with('[') {
            if let Some(t) = current.take() {
                terms.push(t);
            }
            in_term = line == "[Term]";
            continue;
        }
        if !in_term || line.is_empty() || line.starts_with('!') {
            continue;
        }
        let Some((tag, value)) = line.split_once(':') else {
            continue;
        };
        // strip trailing "! comment"
        let value = value.split(" !").next().unwrap_or("").trim();
        match tag.trim() {
            "id" => {
                if let Some(t) = current.take() {
                    terms.push(t);
                }
                current = Some(HpoTerm {
                    id: parse_id(value, line_no)?,
                    name: String::new(),
                    parents: Vec::new(),
                });
            }
            "name" | "is_a" => {
                let term = current.as_mut().ok_or_else(|| OntologyError::Parse {
                    line: line_no,
                    message: format!("`{}` before `id:` in stanza", tag.trim()),
                })?;
                if tag.trim() == "name" {
                    term.name = value.to_string();
                } else {
                    term.parents.push(parse_id(value, line_no)?);
                }
            }
            _ => {}
        }
    }
    if let Some(t) = current.take() {
        terms.push(t);
    }
    Ok(terms)
}

fn read_edge_list(text: &str) -> Result<Vec<HpoTerm>, OntologyError> {
    let mut terms: Vec<HpoTerm> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(OntologyError::Parse {
                line: line_no,
                message: format!("expected 3 tab-separated columns, found {}", cols.len()),
            });
        }
        let child = parse_id(cols[0], line_no)?;
        let parents = if cols[1].trim().is_empty() {
            Vec::new()
        } else {
            vec![parse_id(cols[1], line_no)?]
        };
        terms.push(HpoTerm {
            id: child,
            name: cols[2].trim().to_string(),
            parents,
        });
    }
    // parents mentioned only as parents still need a node
    let known: BTreeSet<HpoId> = terms.iter().map(|t| t.id.clone()).collect();
    let missing: BTreeSet<HpoId> = terms
        .iter()
        .flat_map(|t| t.parents.iter())
        .filter(|p| !known.contains(*p))
        .cloned()
        .collect();
    if let Some(p) = missing.into_iter().next() {
        let child = terms
            .iter()
            .find(|t| t.parents.contains(&p))
            .map(|t| t.id.clone())
            .unwrap();
        return Err(OntologyError::DanglingParent { child, parent: p });
    }
    Ok(terms)
}
