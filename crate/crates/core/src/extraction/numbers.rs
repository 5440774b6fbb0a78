//! Number mentions in token forms.
//!
//! Accepted token shapes: an optional sign, digits, an optional decimal part,
//! and at most one alphabetic affix of up to 12 letters on either side
//! (`102F`, `B12`). A trailing `%` becomes the unit hint `%`, a lone
//! trailing `s` is treated as a plural and dropped (`90s`), and `124/55`
//! yields one mention per component. Dates and tokens listed in the
//! exclusion dictionary produce nothing.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;

use super::conllu::Sentence;

#[derive(Debug, Clone, PartialEq)]
pub struct NumberMention {
    pub value: f64,
    pub unit_hint: Option<String>,
    /// 1-based index of the token carrying the number.
    pub token_index: usize,
    /// The token text as written.
    pub raw: String,
    /// 1 or 2 for the halves of a slash compound such as `124/55`.
    pub component: Option<u8>,
}

/// Case-insensitive set of alphanumeric words that are not measurements
/// (`B12`, `O2`).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExclusionDict {
    words: BTreeSet<String>,
}

impl ExclusionDict {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words = words
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty() && !w.starts_with('#'))
            .collect();
        ExclusionDict { words }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// One token per line; blank lines and `#` comments are ignored.
pub fn load_exclusions(path: impl AsRef<Path>) -> std::io::Result<ExclusionDict> {
    let text = std::fs::read_to_string(path)?;
    Ok(ExclusionDict::new(text.lines()))
}

static NUMBER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?P<pre>[A-Za-z]{1,12})?(?P<num>[+-]?\d+(?:\.\d+)?)(?P<suf>%|°?[A-Za-z]{1,12})?$").unwrap()
});
static SLASH: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?P<a>\d+(?:\.\d+)?)/(?P<b>\d+(?:\.\d+)?)$").unwrap());
static DATE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:\d{1,4}/\d{1,4}/\d{1,4}|\d{1,4}-\d{1,4}-\d{1,4})$").unwrap()
});

const MONTHS: [&str; 12] = [
    "january", "february", "march", "april", "may", "june", "july", "august", "september",
    "october", "november", "december",
];

fn is_month(word: &str) -> bool {
    let w = word.trim_end_matches('.').to_lowercase();
    if w.len() < 3 {
        return false;
    }
    MONTHS
        .iter()
        .any(|m| *m == w || (w.len() <= 4 && m.starts_with(&w) && (w.len() == 3 || w == "sept")))
}

fn looks_like_day_or_year(raw: &str) -> bool {
    raw.parse::<u32>()
        .map(|v| (1..=31).contains(&v) || (raw.len() == 4 && (1900..=2100).contains(&v)))
        .unwrap_or(false)
        || raw
            .strip_suffix("st")
            .or_else(|| raw.strip_suffix("nd"))
            .or_else(|| raw.strip_suffix("rd"))
            .or_else(|| raw.strip_suffix("th"))
            .and_then(|d| d.parse::<u32>().ok())
            .is_some_and(|v| (1..=31).contains(&v))
}

/// Splits one token into mentions, ignoring context.
pub fn parse_number_token(raw: &str, token_index: usize) -> Vec<NumberMention> {
    if DATE.is_match(raw) {
        return Vec::new();
    }
    if let Some(c) = SLASH.captures(raw) {
        return [("a", 1u8), ("b", 2u8)]
            .into_iter()
            .filter_map(|(g, k)| {
                let value: f64 = c[g].parse().ok()?;
                Some(NumberMention {
                    value,
                    unit_hint: None,
                    token_index,
                    raw: raw.to_string(),
                    component: Some(k),
                })
            })
            .collect();
    }
    let Some(c) = NUMBER.captures(raw) else {
        return Vec::new();
    };
    let pre = c.name("pre").map(|m| m.as_str());
    let suf = c.name("suf").map(|m| m.as_str());
    let hint = match (pre, suf) {
        (Some(_), Some(_)) => return Vec::new(),
        (Some(p), None) => Some(p.to_string()),
        (None, Some("s")) => None,
        (None, Some(s)) => Some(s.to_string()),
        (None, None) => None,
    };
    match c["num"].parse::<f64>() {
        Ok(value) if value.is_finite() => vec![NumberMention {
            value,
            unit_hint: hint,
            token_index,
            raw: raw.to_string(),
            component: None,
        }],
        _ => Vec::new(),
    }
}

/// All number mentions of a sentence in token order.
pub fn extract_numbers(sentence: &Sentence, exclusions: &ExclusionDict) -> Vec<NumberMention> {
    let mut out = Vec::new();
    for (i, tok) in sentence.tokens.iter().enumerate() {
        if exclusions.contains(&tok.form) {
            continue;
        }
        let mentions = parse_number_token(&tok.form, tok.index);
        if mentions.is_empty() {
            continue;
        }
        let month_adjacent = (i > 0 && is_month(&sentence.tokens[i - 1].form))
            || sentence.tokens.get(i + 1).is_some_and(|t| is_month(&t.form));
        if month_adjacent && looks_like_day_or_year(&tok.form) {
            continue;
        }
        out.extend(mentions);
    }
    out
}
