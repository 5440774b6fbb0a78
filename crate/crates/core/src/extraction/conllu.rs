//! CoNLL-U reader.
//!
//! Multi-word token ranges (`3-4`) and empty nodes (`5.1`) are skipped.
//! `# newdoc id = ...` starts a new document and `# text = ...` supplies the
//! sentence text used for character offsets.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// 1-based position in the sentence.
    pub index: usize,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    /// Index of the syntactic head; 0 for the sentence root.
    pub head: usize,
    pub deprel: String,
    /// Character offsets `[start, end)` into the sentence text.
    pub start: usize,
    pub end: usize,
}

impl Token {
    /// Dependency relation without its subtype (`nsubj:pass` -> `nsubj`).
    pub fn base_deprel(&self) -> &str {
        self.deprel.split(':').next().unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub sent_id: Option<String>,
    pub text: String,
    pub tokens: Vec<Token>,
}

impl Sentence {
    /// Token by 1-based index.
    pub fn token(&self, index: usize) -> Option<&Token> {
        index.checked_sub(1).and_then(|i| self.tokens.get(i))
    }

    pub fn children(&self, index: usize) -> impl Iterator<Item = &Token> {
        self.tokens.iter().filter(move |t| t.head == index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub sentences: Vec<Sentence>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConlluError {
    #[error("line {line}: expected 10 tab-separated columns, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: invalid token index {value:?}")]
    BadIndex { line: usize, value: String },
    #[error("line {line}: non-integer head {value:?}")]
    BadHead { line: usize, value: String },
    #[error("line {line}: head {head} outside sentence of {len} tokens")]
    HeadOutOfRange { line: usize, head: usize, len: usize },
    #[error("line {line}: token index {index} out of sequence")]
    OutOfSequence { line: usize, index: usize },
}

struct RawToken {
    line: usize,
    token: Token,
    space_after: bool,
}

#[derive(Default)]
struct SentenceBuilder {
    sent_id: Option<String>,
    text: Option<String>,
    tokens: Vec<RawToken>,
}

impl SentenceBuilder {
    fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    fn finish(self) -> Result<Sentence, ConlluError> {
        let len = self.tokens.len();
        for raw in &self.tokens {
            if raw.token.head > len {
                return Err(ConlluError::HeadOutOfRange {
                    line: raw.line,
                    head: raw.token.head,
                    len,
                });
            }
        }
        let text = match self.text {
            Some(t) => t,
            None => {
                let mut t = String::new();
                for raw in &self.tokens {
                    t.push_str(&raw.token.form);
                    if raw.space_after {
                        t.push(' ');
                    }
                }
                t.trim_end().to_string()
            }
        };
        let tokens = align_offsets(&text, self.tokens.into_iter().map(|r| r.token).collect());
        Ok(Sentence {
            sent_id: self.sent_id,
            text,
            tokens,
        })
    }
}

/// Locates each token form in `text`, left to right, in character units.
/// A form that cannot be found is placed at the current cursor.
fn align_offsets(text: &str, mut tokens: Vec<Token>) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut cursor = 0;
    for tok in &mut tokens {
        let form: Vec<char> = tok.form.chars().collect();
        let found = (cursor..=chars.len().saturating_sub(form.len()))
            .find(|&i| chars[i..].starts_with(&form));
        match found {
            Some(i) if !form.is_empty() => {
                tok.start = i;
                tok.end = i + form.len();
                cursor = tok.end;
            }
            _ => {
                tok.start = cursor;
                tok.end = cursor;
            }
        }
    }
    tokens
}

fn comment_value<'a>(comment: &'a str, key: &str) -> Option<&'a str> {
    let rest = comment.trim_start_matches('#').trim_start();
    let rest = rest.strip_prefix(key)?.trim_start();
    Some(rest.strip_prefix('=')?.trim())
}

/// Parses CoNLL-U text into documents. Sentences before the first
/// `# newdoc` marker go to a document named `doc1` (then `doc2`, ...).
pub fn parse_conllu(text: &str) -> Result<Vec<Document>, ConlluError> {
    let mut docs: Vec<Document> = Vec::new();
    let mut current = SentenceBuilder::default();
    let mut pending_doc: Option<String> = None;

    fn flush(
        docs: &mut Vec<Document>,
        pending_doc: &mut Option<String>,
        builder: SentenceBuilder,
    ) -> Result<(), ConlluError> {
        if builder.is_empty() {
            return Ok(());
        }
        let sentence = builder.finish()?;
        if let Some(id) = pending_doc.take() {
            docs.push(Document {
                doc_id: id,
                sentences: Vec::new(),
            });
        }
        if docs.is_empty() {
            docs.push(Document {
                doc_id: "doc1".into(),
                sentences: Vec::new(),
            });
        }
        docs.last_mut().unwrap().sentences.push(sentence);
        Ok(())
    }

    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut docs, &mut pending_doc, std::mem::take(&mut current))?;
            continue;
        }
        if line.starts_with('#') {
            if let Some(id) = comment_value(line, "newdoc id") {
                flush(&mut docs, &mut pending_doc, std::mem::take(&mut current))?;
                pending_doc = Some(id.to_string());
            } else if line.trim_start_matches('#').trim_start() == "newdoc" {
                flush(&mut docs, &mut pending_doc, std::mem::take(&mut current))?;
                pending_doc = Some(format!("doc{}", docs.len() + 1));
            } else if let Some(id) = comment_value(line, "sent_id") {
                current.sent_id = Some(id.to_string());
            } else if let Some(t) = comment_value(line, "text") {
                current.text = Some(t.to_string());
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(ConlluError::ColumnCount {
                line: line_no,
                found: cols.len(),
            });
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let index: usize = cols[0].parse().map_err(|_| ConlluError::BadIndex {
            line: line_no,
            value: cols[0].to_string(),
        })?;
        if index != current.tokens.len() + 1 {
            return Err(ConlluError::OutOfSequence { line: line_no, index });
        }
        let head: usize = cols[6].parse().map_err(|_| ConlluError::BadHead {
            line: line_no,
            value: cols[6].to_string(),
        })?;
        let space_after = !cols[9].split('|').any(|m| m == "SpaceAfter=No");
        current.tokens.push(RawToken {
            line: line_no,
            token: Token {
                index,
                form: cols[1].to_string(),
                lemma: cols[2].to_string(),
                upos: cols[3].to_string(),
                head,
                deprel: cols[7].to_string(),
                start: 0,
                end: 0,
            },
            space_after,
        });
    }
    flush(&mut docs, &mut pending_doc, current)?;
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_is_empty() {
        assert!(parse_conllu("").unwrap().is_empty());
    }

    #[test]
    fn nine_columns_is_an_error() {
        let text = "1\tfever\tfever\tNOUN\t_\t_\t0\troot\t_\n";
        assert_eq!(
            parse_conllu(text).unwrap_err(),
            ConlluError::ColumnCount { line: 1, found: 9 }
        );
    }

    #[test]
    fn non_integer_head() {
        let text = "1\tfever\tfever\tNOUN\t_\t_\tx\troot\t_\t_\n";
        assert!(matches!(parse_conllu(text), Err(ConlluError::BadHead { line: 1, .. })));
    }

    #[test]
    fn head_beyond_sentence() {
        let text = "1\tfever\tfever\tNOUN\t_\t_\t3\troot\t_\t_\n";
        assert!(matches!(parse_conllu(text), Err(ConlluError::HeadOutOfRange { .. })));
    }

    #[test]
    fn skips_ranges_and_empty_nodes_and_splits_docs() {
        let text = "\
# newdoc id = a
# text = I can't
1\tI\tI\tPRON\t_\t_\t2\tnsubj\t_\t_
2-3\tcan't\t_\t_\t_\t_\t_\t_\t_\t_
2\tca\tcan\tAUX\t_\t_\t0\troot\t_\tSpaceAfter=No
2.1\tx\tx\tX\t_\t_\t_\t_\t_\t_
3\tn't\tnot\tPART\t_\t_\t2\tadvmod\t_\t_

# newdoc id = b
1\tok\tok\tINTJ\t_\t_\t0\troot\t_\t_
";
        let docs = parse_conllu(text).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].doc_id, "a");
        assert_eq!(docs[0].sentences[0].tokens.len(), 3);
        assert_eq!(docs[1].doc_id, "b");
        assert_eq!(docs[1].sentences[0].text, "ok");
    }

    #[test]
    fn offsets_follow_text_comment() {
        let text = "\
# text = temp  99.5
1\ttemp\ttemp\tNOUN\t_\t_\t0\troot\t_\t_
2\t99.5\t99.5\tNUM\t_\t_\t1\tnummod\t_\t_
";
        let s = &parse_conllu(text).unwrap()[0].sentences[0];
        assert_eq!((s.tokens[1].start, s.tokens[1].end), (6, 10));
    }

    #[test]
    fn reconstructed_text_respects_space_after() {
        let text = "\
1\t99\t99\tNUM\t_\t_\t0\troot\t_\tSpaceAfter=No
2\t%\t%\tSYM\t_\t_\t1\tpunct\t_\t_
";
        let s = &parse_conllu(text).unwrap()[0].sentences[0];
        assert_eq!(s.text, "99%");
        assert_eq!((s.tokens[1].start, s.tokens[1].end), (2, 3));
    }
}
