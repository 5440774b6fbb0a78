//! Client for an external dependency parser: POST `{doc_id, text}` to
//! `<base>/parse`, get CoNLL-U back.

use anyhow::{Context, Result};
use nr_core::extraction::{parse_conllu, Document};
use serde::Serialize;

#[derive(Serialize)]
struct ParseRequest<'a> {
    doc_id: &'a str,
    text: &'a str,
}

pub fn endpoint(base: &str) -> String {
    let base = base.trim_end_matches('/');
    if base.ends_with("/parse") {
        base.to_string()
    } else {
        format!("{base}/parse")
    }
}

/// Parses one raw-text document remotely. Sentences keep the response
/// order; the document id is the one requested.
pub fn parse_remote(base: &str, doc_id: &str, text: &str) -> Result<Document> {
    let url = endpoint(base);
    let mut resp = ureq::post(&url)
        .send_json(ParseRequest { doc_id, text })
        .with_context(|| format!("parse service {url}"))?;
    let body = resp
        .body_mut()
        .read_to_string()
        .with_context(|| format!("parse service {url}: reading response"))?;
    let docs = parse_conllu(&body).with_context(|| format!("parse service {url}: bad CoNLL-U"))?;
    Ok(Document {
        doc_id: doc_id.to_string(),
        sentences: docs.into_iter().flat_map(|d| d.sentences).collect(),
    })
}
