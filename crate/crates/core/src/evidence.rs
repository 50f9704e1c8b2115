//! Evidence-augmented prompting and verdict removal from fact-check articles.
//!
//! Sentences end at `.`, `?` or `!` followed by whitespace or end of text.
//! Abbreviations are not special-cased.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::Statement;
use crate::error::{Error, Result};
use crate::prompts::{render, Evidence, PromptKind, RenderedPrompt};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub statement_id: String,
    pub text: String,
    #[serde(
        default,
        rename = "url",
        alias = "source_url",
        skip_serializing_if = "Option::is_none"
    )]
    pub source_url: Option<String>,
}

/// How verdict keywords are matched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeywordMatch {
    /// `true`, `false`, `pants` as whole words.
    #[default]
    WordBounded,
    /// Anywhere inside a word, e.g. `pantsuit`, `untrue`.
    Substring,
}

fn keyword_regex(mode: KeywordMatch) -> &'static Regex {
    static WORD: OnceLock<Regex> = OnceLock::new();
    static SUB: OnceLock<Regex> = OnceLock::new();
    match mode {
        KeywordMatch::WordBounded => {
            WORD.get_or_init(|| Regex::new(r"(?i)\b(true|false|pants)\b").unwrap())
        }
        KeywordMatch::Substring => {
            SUB.get_or_init(|| Regex::new(r"(?i)(true|false|pants)").unwrap())
        }
    }
}

/// Byte spans of each sentence, terminator included, separating whitespace
/// excluded.
pub fn sentence_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if start.is_none() {
            if c.is_whitespace() {
                continue;
            }
            start = Some(i);
        }
        if matches!(c, '.' | '?' | '!') {
            let at_boundary = chars.peek().is_none_or(|(_, next)| next.is_whitespace());
            if at_boundary {
                spans.push((start.take().unwrap(), i + c.len_utf8()));
            }
        }
    }
    if let Some(s) = start {
        let end = text.trim_end().len();
        if end > s {
            spans.push((s, end));
        }
    }
    spans
}

pub fn split_sentences(text: &str) -> Vec<&str> {
    sentence_spans(text)
        .into_iter()
        .map(|(s, e)| &text[s..e])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StripOutcome {
    pub article: Article,
    pub total_sentences: usize,
    pub removed_sentences: usize,
}

/// Remove the last sentence holding a verdict keyword and everything after it.
/// Text without any keyword comes back unchanged.
pub fn strip_verdict(article: &Article) -> Article {
    strip_verdict_with(article, KeywordMatch::WordBounded).article
}

pub fn strip_verdict_with(article: &Article, mode: KeywordMatch) -> StripOutcome {
    let spans = sentence_spans(&article.text);
    let re = keyword_regex(mode);
    let hit = spans
        .iter()
        .rposition(|&(s, e)| re.is_match(&article.text[s..e]));
    let (text, removed) = match hit {
        Some(idx) => (
            article.text[..spans[idx].0].trim_end().to_string(),
            spans.len() - idx,
        ),
        None => (article.text.clone(), 0),
    };
    StripOutcome {
        article: Article {
            text,
            ..article.clone()
        },
        total_sentences: spans.len(),
        removed_sentences: removed,
    }
}

fn article_joins(statement: &Statement, article: &Article) -> bool {
    article.statement_id == statement.id || article.statement_id == statement.base_id()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvidencePrompt {
    pub prompt: RenderedPrompt,
    pub warning: Option<String>,
}

/// Render the web-evidence prompt, optionally with the verdict stripped.
pub fn build_evidence_prompt(
    statement: &Statement,
    article: &Article,
    answerless: bool,
    mode: KeywordMatch,
) -> Result<EvidencePrompt> {
    if !article_joins(statement, article) {
        return Err(Error::MissingKeys(vec![statement.id.clone()]));
    }
    let evidence = if answerless {
        strip_verdict_with(article, mode).article
    } else {
        article.clone()
    };
    let warning = evidence
        .text
        .trim()
        .is_empty()
        .then(|| format!("{}: evidence is empty after truncation", statement.id));
    let prompt = render(
        PromptKind::WebEvidence,
        statement,
        Some(Evidence {
            id: &article.statement_id,
            text: &evidence.text,
        }),
        None,
    )?;
    Ok(EvidencePrompt { prompt, warning })
}

/// Articles keyed by `statement_id`.
pub fn load_articles(path: impl AsRef<Path>) -> Result<HashMap<String, Article>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut out = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            message,
        };
        let article: Article = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if article.text.trim().is_empty() {
            return Err(parse_err(format!(
                "article {} has empty text",
                article.statement_id
            )));
        }
        out.insert(article.statement_id.clone(), article);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationAudit {
    pub statement_id: String,
    pub total_sentences: usize,
    pub removed_sentences: usize,
    /// Word-bounded and substring matching disagree on this article.
    pub match_modes_diverge: bool,
}

pub fn audit_truncation(article: &Article, mode: KeywordMatch) -> (Article, TruncationAudit) {
    let chosen = strip_verdict_with(article, mode);
    let other = strip_verdict_with(
        article,
        match mode {
            KeywordMatch::WordBounded => KeywordMatch::Substring,
            KeywordMatch::Substring => KeywordMatch::WordBounded,
        },
    );
    let audit = TruncationAudit {
        statement_id: article.statement_id.clone(),
        total_sentences: chosen.total_sentences,
        removed_sentences: chosen.removed_sentences,
        match_modes_diverge: chosen.removed_sentences != other.removed_sentences,
    };
    (chosen.article, audit)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
