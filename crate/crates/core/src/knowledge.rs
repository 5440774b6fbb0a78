//! External knowledge: numeric entities, their normal reference ranges, the
//! phenotype triple each entity maps to, and granular severity bands.
//!
//! The on-disk format is one UTF-8 file holding five comma-separated tables,
//! each introduced by a section marker and a header row:
//!
//! ```text
//! #ENTITIES
//! entity_id,name,abbreviation
//! #RANGES
//! entity_id,name,abbreviation,unit,lower,upper
//! #TRIPLES
//! entity_id,below_hpo,above_hpo,normal_hpo
//! #GRANULAR
//! primary_hpo,unit,lower,upper,granular_hpo
//! #SYNONYMS
//! entity_id,synonym
//! ```
//!
//! Any other line starting with `#` is a comment.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::ontology::HpoId;

pub type EntityId = u32;

#[derive(Debug, Clone, PartialEq)]
pub struct NumericEntity {
    pub id: EntityId,
    pub name: String,
    pub abbreviation: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRange {
    pub entity_id: EntityId,
    pub unit: String,
    pub lower: f64,
    pub upper: f64,
}

impl ReferenceRange {
    /// Bounds are inclusive: a value equal to either bound is normal.
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhenotypeTriple {
    pub entity_id: EntityId,
    /// Affirmed when the value is below the lower bound.
    pub below_hpo: HpoId,
    /// Affirmed when the value is above the upper bound.
    pub above_hpo: HpoId,
    /// Negated when the value lies within the range.
    pub normal_hpo: HpoId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GranularBand {
    pub primary_hpo: HpoId,
    pub unit: String,
    pub lower: f64,
    pub upper: f64,
    pub granular_hpo: HpoId,
}

impl GranularBand {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// The loaded knowledge base. Construct with [`load_kb`] or [`parse_kb`];
/// treat as read-only afterwards.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KnowledgeBase {
    pub entities: Vec<NumericEntity>,
    pub ranges: Vec<ReferenceRange>,
    pub triples: Vec<PhenotypeTriple>,
    pub granular_bands: Vec<GranularBand>,
    pub synonym_sets: BTreeMap<EntityId, Vec<String>>,
}

impl KnowledgeBase {
    pub fn entity(&self, id: EntityId) -> Option<&NumericEntity> {
        self.entities.iter().find(|e| e.id == id)
    }

    /// Ranges of one entity in declaration order.
    pub fn ranges_for(&self, id: EntityId) -> Vec<&ReferenceRange> {
        self.ranges.iter().filter(|r| r.entity_id == id).collect()
    }

    pub fn range(&self, id: EntityId, unit: &str) -> Option<&ReferenceRange> {
        self.ranges
            .iter()
            .find(|r| r.entity_id == id && r.unit == unit)
    }

    pub fn triple(&self, id: EntityId) -> Option<&PhenotypeTriple> {
        self.triples.iter().find(|t| t.entity_id == id)
    }

    pub fn bands_for<'a>(
        &'a self,
        primary: &'a HpoId,
        unit: &'a str,
    ) -> impl Iterator<Item = &'a GranularBand> + 'a {
        self.granular_bands
            .iter()
            .filter(move |b| &b.primary_hpo == primary && b.unit == unit)
    }

    pub fn synonyms(&self, id: EntityId) -> &[String] {
        self.synonym_sets.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Every HPO id referenced anywhere in the KB, sorted.
    pub fn hpo_ids(&self) -> BTreeSet<HpoId> {
        let mut ids = BTreeSet::new();
        for t in &self.triples {
            ids.insert(t.below_hpo.clone());
            ids.insert(t.above_hpo.clone());
            ids.insert(t.normal_hpo.clone());
        }
        for b in &self.granular_bands {
            ids.insert(b.primary_hpo.clone());
            ids.insert(b.granular_hpo.clone());
        }
        ids
    }

    /// Entity whose triple affirms `hpo` on either side.
    fn entity_affirming(&self, hpo: &HpoId) -> Option<(&PhenotypeTriple, Side)> {
        self.triples.iter().find_map(|t| {
            if &t.below_hpo == hpo {
                Some((t, Side::Below))
            } else if &t.above_hpo == hpo {
                Some((t, Side::Above))
            } else {
                None
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Below,
    Above,
}

#[derive(Debug, Error)]
pub enum KbError {
    #[error("cannot read knowledge base: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no entities defined")]
    NoEntities,
    #[error("knowledge base is invalid:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

fn format_violations(vs: &[Violation]) -> String {
    vs.iter()
        .map(|v| format!("  {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Which invariant a [`Violation`] breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    DuplicateEntityId,
    EmptyName,
    NotLowercase,
    UnknownEntity,
    EntityWithoutRange,
    InvertedRange,
    DuplicateUnit,
    TripleNotDistinct,
    MissingTriple,
    DuplicateTriple,
    InvertedBand,
    BandWithoutPrimary,
    BandWithoutRange,
    BandStraddlesRange,
    BandWrongSide,
}

impl Rule {
    pub fn message(self) -> &'static str {
        match self {
            Rule::DuplicateEntityId => "duplicate entity id",
            Rule::EmptyName => "empty name or abbreviation",
            Rule::NotLowercase => "name, abbreviation or synonym not lowercase",
            Rule::UnknownEntity => "reference to unknown entity",
            Rule::EntityWithoutRange => "entity has no reference range",
            Rule::InvertedRange => "lower >= upper",
            Rule::DuplicateUnit => "duplicate unit for entity",
            Rule::TripleNotDistinct => "triple ids not distinct",
            Rule::MissingTriple => "entity has no phenotype triple",
            Rule::DuplicateTriple => "entity has more than one phenotype triple",
            Rule::InvertedBand => "band lower >= upper",
            Rule::BandWithoutPrimary => "band primary phenotype is not affirmed by any triple",
            Rule::BandWithoutRange => "band unit has no reference range",
            Rule::BandStraddlesRange => "band straddles normal range",
            Rule::BandWrongSide => "band lies on the wrong side of normal range",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub rule: Rule,
    /// Human-readable pointer to the offending row.
    pub row: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.rule.message(), self.row)
    }
}

/// Checks every KB invariant. Returns an empty list when all hold.
pub fn validate_kb(kb: &KnowledgeBase) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |rule: Rule, row: String| out.push(Violation { rule, row });

    let mut seen = BTreeSet::new();
    for e in &kb.entities {
        if !seen.insert(e.id) {
            push(Rule::DuplicateEntityId, format!("entity {}", e.id));
        }
        if e.name.trim().is_empty() || e.abbreviation.trim().is_empty() {
            push(Rule::EmptyName, format!("entity {}", e.id));
        } else if e.name != e.name.to_lowercase() || e.abbreviation != e.abbreviation.to_lowercase() {
            push(Rule::NotLowercase, format!("entity {}", e.id));
        }
    }
    let known = |id: EntityId| seen.contains(&id);

    let mut units: BTreeSet<(EntityId, &str)> = BTreeSet::new();
    for r in &kb.ranges {
        let row = format!("range {} {} {}..{}", r.entity_id, r.unit, r.lower, r.upper);
        if !known(r.entity_id) {
            push(Rule::UnknownEntity, row.clone());
        }
        if r.lower.partial_cmp(&r.upper) != Some(Ordering::Less) {
            push(Rule::InvertedRange, row.clone());
        }
        if !units.insert((r.entity_id, r.unit.as_str())) {
            push(Rule::DuplicateUnit, row);
        }
    }
    for e in &kb.entities {
        if !kb.ranges.iter().any(|r| r.entity_id == e.id) {
            push(Rule::EntityWithoutRange, format!("entity {}", e.id));
        }
    }

    let mut with_triple: BTreeMap<EntityId, usize> = BTreeMap::new();
    for t in &kb.triples {
        let row = format!(
            "triple {} {} {} {}",
            t.entity_id, t.below_hpo, t.above_hpo, t.normal_hpo
        );
        if !known(t.entity_id) {
            push(Rule::UnknownEntity, row.clone());
        }
        if t.below_hpo == t.above_hpo || t.below_hpo == t.normal_hpo || t.above_hpo == t.normal_hpo {
            push(Rule::TripleNotDistinct, row);
        }
        *with_triple.entry(t.entity_id).or_default() += 1;
    }
    for e in &kb.entities {
        match with_triple.get(&e.id) {
            None => push(Rule::MissingTriple, format!("entity {}", e.id)),
            Some(n) if *n > 1 => push(Rule::DuplicateTriple, format!("entity {}", e.id)),
            _ => {}
        }
    }

    for b in &kb.granular_bands {
        let row = format!(
            "band {} {} {}..{} -> {}",
            b.primary_hpo, b.unit, b.lower, b.upper, b.granular_hpo
        );
        if b.lower.partial_cmp(&b.upper) != Some(Ordering::Less) {
            push(Rule::InvertedBand, row);
            continue;
        }
        let Some((triple, side)) = kb.entity_affirming(&b.primary_hpo) else {
            push(Rule::BandWithoutPrimary, row);
            continue;
        };
        let Some(range) = kb.range(triple.entity_id, &b.unit) else {
            push(Rule::BandWithoutRange, row);
            continue;
        };
        let below = b.upper < range.lower;
        let above = b.lower > range.upper;
        if !below && !above {
            push(Rule::BandStraddlesRange, row);
        } else if (side == Side::Above && below) || (side == Side::Below && above) {
            push(Rule::BandWrongSide, row);
        }
    }

    for (id, syns) in &kb.synonym_sets {
        let row = format!("synonyms of {id}");
        if !known(*id) {
            push(Rule::UnknownEntity, row);
        } else if syns.iter().any(|s| s != &s.to_lowercase()) {
            push(Rule::NotLowercase, row);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Entities,
    Ranges,
    Triples,
    Granular,
    Synonyms,
}

impl Section {
    fn from_marker(line: &str) -> Option<Self> {
        match line.trim_end() {
            "#ENTITIES" => Some(Section::Entities),
            "#RANGES" => Some(Section::Ranges),
            "#TRIPLES" => Some(Section::Triples),
            "#GRANULAR" => Some(Section::Granular),
            "#SYNONYMS" => Some(Section::Synonyms),
            _ => None,
        }
    }

    fn marker(self) -> &'static str {
        match self {
            Section::Entities => "#ENTITIES",
            Section::Ranges => "#RANGES",
            Section::Triples => "#TRIPLES",
            Section::Granular => "#GRANULAR",
            Section::Synonyms => "#SYNONYMS",
        }
    }

    fn header(self) -> &'static [&'static str] {
        match self {
            Section::Entities => &["entity_id", "name", "abbreviation"],
            Section::Ranges => &["entity_id", "name", "abbreviation", "unit", "lower", "upper"],
            Section::Triples => &["entity_id", "below_hpo", "above_hpo", "normal_hpo"],
            Section::Granular => &["primary_hpo", "unit", "lower", "upper", "granular_hpo"],
            Section::Synonyms => &["entity_id", "synonym"],
        }
    }
}

struct RowReader {
    line: usize,
}

impl RowReader {
    fn err(&self, message: impl Into<String>) -> KbError {
        KbError::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    fn entity_id(&self, raw: &str) -> Result<EntityId, KbError> {
        raw.parse()
            .map_err(|_| self.err(format!("invalid entity id {raw:?}")))
    }

    fn number(&self, raw: &str) -> Result<f64, KbError> {
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err(format!("invalid number {raw:?}"))),
        }
    }

    fn hpo(&self, raw: &str) -> Result<HpoId, KbError> {
        HpoId::new(raw).map_err(|e| self.err(e.to_string()))
    }
}

fn normalize(raw: &str) -> String {
    raw.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Parses KB text without enforcing invariants (see [`validate_kb`]).
///
/// Each entity's synonym set is completed with its name and abbreviation.
pub fn parse_kb(text: &str) -> Result<KnowledgeBase, KbError> {
    let mut kb = KnowledgeBase::default();
    let mut section: Option<Section> = None;
    let mut expect_header = false;
    // (entity, name, abbreviation, line) from #RANGES rows, checked after all
    // entities are known
    let mut range_labels: Vec<(EntityId, String, String, usize)> = Vec::new();

    for (n, raw) in text.split('\n').enumerate() {
        let reader = RowReader { line: n + 1 };
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if let Some(s) = Section::from_marker(line) {
            section = Some(s);
            expect_header = true;
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let Some(sec) = section else {
            return Err(reader.err("row outside of any section"));
        };
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if expect_header {
            if cols != sec.header() {
                return Err(reader.err(format!(
                    "expected header `{}` for {}",
                    sec.header().join(","),
                    sec.marker()
                )));
            }
            expect_header = false;
            continue;
        }
        if cols.len() != sec.header().len() {
            return Err(reader.err(format!(
                "{} row needs {} columns, found {}",
                sec.marker(),
                sec.header().len(),
                cols.len()
            )));
        }
        match sec {
            Section::Entities => kb.entities.push(NumericEntity {
                id: reader.entity_id(cols[0])?,
                name: normalize(cols[1]),
                abbreviation: normalize(cols[2]),
            }),
            Section::Ranges => {
                let id = reader.entity_id(cols[0])?;
                range_labels.push((id, normalize(cols[1]), normalize(cols[2]), reader.line));
                kb.ranges.push(ReferenceRange {
                    entity_id: id,
                    unit: cols[3].to_string(),
                    lower: reader.number(cols[4])?,
                    upper: reader.number(cols[5])?,
                });
            }
            Section::Triples => kb.triples.push(PhenotypeTriple {
                entity_id: reader.entity_id(cols[0])?,
                below_hpo: reader.hpo(cols[1])?,
                above_hpo: reader.hpo(cols[2])?,
                normal_hpo: reader.hpo(cols[3])?,
            }),
            Section::Granular => kb.granular_bands.push(GranularBand {
                primary_hpo: reader.hpo(cols[0])?,
                unit: cols[1].to_string(),
                lower: reader.number(cols[2])?,
                upper: reader.number(cols[3])?,
                granular_hpo: reader.hpo(cols[4])?,
            }),
            Section::Synonyms => {
                let id = reader.entity_id(cols[0])?;
                let syn = normalize(cols[1]);
                if syn.is_empty() {
                    return Err(reader.err("empty synonym"));
                }
                let set = kb.synonym_sets.entry(id).or_default();
                if !set.contains(&syn) {
                    set.push(syn);
                }
            }
        }
    }

    if kb.entities.is_empty() {
        return Err(KbError::NoEntities);
    }
    for (id, name, abbr, line) in range_labels {
        if let Some(e) = kb.entity(id) {
            if e.name != name || e.abbreviation != abbr {
                return Err(KbError::Parse {
                    line,
                    message: format!(
                        "range row names entity {id} as {name:?}/{abbr:?} but #ENTITIES says {:?}/{:?}",
                        e.name, e.abbreviation
                    ),
                });
            }
        }
    }
    for e in &kb.entities {
        let set = kb.synonym_sets.entry(e.id).or_default();
        for label in [&e.abbreviation, &e.name] {
            if !set.contains(label) {
                set.insert(0, label.clone());
            }
        }
    }
    Ok(kb)
}

/// Reads, parses and validates a KB file.
pub fn load_kb(path: impl AsRef<Path>) -> Result<KnowledgeBase, KbError> {
    let text = std::fs::read_to_string(path)?;
    load_kb_str(&text)
}

pub fn load_kb_str(text: &str) -> Result<KnowledgeBase, KbError> {
    let kb = parse_kb(text)?;
    let violations = validate_kb(&kb);
    if violations.is_empty() {
        Ok(kb)
    } else {
        Err(KbError::Invalid(violations))
    }
}

/// Serializes a KB in the file format read by [`parse_kb`].
pub fn store_kb(kb: &KnowledgeBase) -> String {
    let mut out = String::new();
    let mut section = |s: Section, rows: Vec<String>| {
        out.push_str(s.marker());
        out.push('\n');
        out.push_str(&s.header().join(","));
        out.push('\n');
        for r in rows {
            out.push_str(&r);
            out.push('\n');
        }
    };
    section(
        Section::Entities,
        kb.entities
            .iter()
            .map(|e| format!("{},{},{}", e.id, e.name, e.abbreviation))
            .collect(),
    );
    section(
        Section::Ranges,
        kb.ranges
            .iter()
            .map(|r| {
                let (name, abbr) = kb
                    .entity(r.entity_id)
                    .map(|e| (e.name.as_str(), e.abbreviation.as_str()))
                    .unwrap_or(("", ""));
                format!("{},{},{},{},{},{}", r.entity_id, name, abbr, r.unit, r.lower, r.upper)
            })
            .collect(),
    );
    section(
        Section::Triples,
        kb.triples
            .iter()
            .map(|t| format!("{},{},{},{}", t.entity_id, t.below_hpo, t.above_hpo, t.normal_hpo))
            .collect(),
    );
    section(
        Section::Granular,
        kb.granular_bands
            .iter()
            .map(|b| format!("{},{},{},{},{}", b.primary_hpo, b.unit, b.lower, b.upper, b.granular_hpo))
            .collect(),
    );
    section(
        Section::Synonyms,
        kb.synonym_sets
            .iter()
            .flat_map(|(id, syns)| syns.iter().map(move |s| format!("{id},{s}")))
            .collect(),
    );
    out
}

/// Entity names plus synonym sets; the input to lexicon training.
#[derive(Debug, Clone, PartialEq)]
pub struct SynonymTable {
    /// (entity, phrases) where phrases start with the entity name.
    pub entries: Vec<(NumericEntity, Vec<String>)>,
}

impl SynonymTable {
    pub fn from_kb(kb: &KnowledgeBase) -> Self {
        let entries = kb
            .entities
            .iter()
            .map(|e| (e.clone(), kb.synonyms(e.id).to_vec()))
            .collect();
        SynonymTable { entries }
    }
}

/// Reads only the `#ENTITIES` and `#SYNONYMS` sections of a KB-format file.
/// Other sections are skipped, so both a full KB and a bare synonym file work.
pub fn load_synonym_table(path: impl AsRef<Path>) -> Result<SynonymTable, KbError> {
    let text = std::fs::read_to_string(path)?;
    parse_synonym_table(&text)
}

pub fn parse_synonym_table(text: &str) -> Result<SynonymTable, KbError> {
    let mut kept = String::new();
    let mut keep = false;
    for line in text.split('\n') {
        if let Some(s) = Section::from_marker(line) {
            keep = matches!(s, Section::Entities | Section::Synonyms);
        }
        // blank placeholder keeps parse error line numbers aligned
        kept.push_str(if keep { line } else { "" });
        kept.push('\n');
    }
    let kb = parse_kb(&kept)?;
    let violations: Vec<Violation> = validate_kb(&kb)
        .into_iter()
        .filter(|v| {
            matches!(
                v.rule,
                Rule::DuplicateEntityId | Rule::EmptyName | Rule::NotLowercase | Rule::UnknownEntity
            )
        })
        .collect();
    if !violations.is_empty() {
        return Err(KbError::Invalid(violations));
    }
    Ok(SynonymTable::from_kb(&kb))
}
