//! BIO-labelled corpora: CoNLL-style parsing, label repair and conversion
//! between per-token BIO labels and typed entity spans.
//!
//! Files follow the two-column layout used by the common BioNER releases:
//! one `token<sep>label` pair per line and a blank line between sentences.
//! Labels may be bare (`B`, `I`, `O`) or suffixed (`B-Chemical`). Bare
//! labels take the entity type configured in [`ConllOptions`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BioTag {
    B,
    I,
    O,
}

/// One per-token label. `entity_type` is present iff the tag is not `O`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BioLabel {
    tag: BioTag,
    entity_type: Option<String>,
}

impl BioLabel {
    pub fn outside() -> Self {
        BioLabel {
            tag: BioTag::O,
            entity_type: None,
        }
    }

    pub fn begin(entity_type: impl Into<String>) -> Self {
        BioLabel {
            tag: BioTag::B,
            entity_type: Some(entity_type.into()),
        }
    }

    pub fn inside(entity_type: impl Into<String>) -> Self {
        BioLabel {
            tag: BioTag::I,
            entity_type: Some(entity_type.into()),
        }
    }

    pub fn tag(&self) -> BioTag {
        self.tag
    }

    pub fn entity_type(&self) -> Option<&str> {
        self.entity_type.as_deref()
    }

    /// Parses `O`, `B`, `I`, `B-<type>` or `I-<type>`. Bare `B`/`I` take
    /// `default_type`. Returns `None` for anything else.
    pub fn parse(raw: &str, default_type: &str) -> Option<Self> {
        let (head, suffix) = match raw.split_once('-') {
            Some((h, s)) if !s.is_empty() => (h, Some(s)),
            Some(_) => return None,
            None => (raw, None),
        };
        let ty = suffix.unwrap_or(default_type);
        match head {
            "O" if suffix.is_none() => Some(BioLabel::outside()),
            "B" => Some(BioLabel::begin(ty)),
            "I" => Some(BioLabel::inside(ty)),
            _ => None,
        }
    }

    /// Renders the label in the given style.
    pub fn render(&self, style: LabelStyle) -> String {
        match (self.tag, style, &self.entity_type) {
            (BioTag::O, _, _) => "O".to_string(),
            (BioTag::B, LabelStyle::Bare, _) => "B".to_string(),
            (BioTag::I, LabelStyle::Bare, _) => "I".to_string(),
            (tag, LabelStyle::Suffixed, ty) => {
                format!("{:?}-{}", tag, ty.as_deref().unwrap_or_default())
            }
        }
    }
}

impl fmt::Display for BioLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(LabelStyle::Suffixed))
    }
}

/// How labels are written back out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LabelStyle {
    /// `B` / `I` / `O`, the usual layout of single-type BioNER files.
    #[default]
    Bare,
    /// `B-Type` / `I-Type` / `O`.
    Suffixed,
}

/// A typed, inclusive token span `start..=end`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub entity_type: String,
    #[serde(default)]
    pub surface: String,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, entity_type: impl Into<String>) -> Self {
        EntitySpan {
            start,
            end,
            entity_type: entity_type.into(),
            surface: String::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Fills `surface` with the space-joined covered tokens.
    pub fn with_surface<S: AsRef<str>>(mut self, tokens: &[S]) -> Self {
        self.surface = tokens[self.start..=self.end]
            .iter()
            .map(AsRef::as_ref)
            .collect::<Vec<_>>()
            .join(" ");
        self
    }

    fn same_extent(&self, other: &EntitySpan) -> bool {
        self.start == other.start && self.end == other.end && self.entity_type == other.entity_type
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub doc_id: String,
    pub sent_id: usize,
    pub tokens: Vec<Token>,
    pub labels: Vec<BioLabel>,
}

impl Sentence {
    /// Builds a sentence from words and already-valid labels.
    pub fn new<S: Into<String>>(
        doc_id: impl Into<String>,
        sent_id: usize,
        words: impl IntoIterator<Item = S>,
        labels: Vec<BioLabel>,
    ) -> Self {
        let tokens: Vec<Token> = words
            .into_iter()
            .enumerate()
            .map(|(index, w)| Token {
                text: w.into(),
                index,
            })
            .collect();
        assert_eq!(tokens.len(), labels.len(), "tokens and labels differ in length");
        Sentence {
            doc_id: doc_id.into(),
            sent_id,
            tokens,
            labels,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    /// Gold spans with surfaces attached.
    pub fn spans(&self) -> Vec<EntitySpan> {
        let words = self.words();
        bio_to_spans(&self.labels)
            .into_iter()
            .map(|s| s.with_surface(&words))
            .collect()
    }

    /// Gold spans restricted to one entity type.
    pub fn spans_of_type(&self, entity_type: &str) -> Vec<EntitySpan> {
        self.spans()
            .into_iter()
            .filter(|s| s.entity_type == entity_type)
            .collect()
    }

    pub fn entity_types(&self) -> BTreeSet<String> {
        self.labels
            .iter()
            .filter_map(|l| l.entity_type().map(str::to_string))
            .collect()
    }

    pub fn to_record(&self, style: LabelStyle) -> SentenceRecord {
        SentenceRecord {
            doc_id: self.doc_id.clone(),
            sent_id: self.sent_id,
            tokens: self.words().into_iter().map(str::to_string).collect(),
            labels: self.labels.iter().map(|l| l.render(style)).collect(),
            spans: self.spans(),
        }
    }
}

/// The canonical JSON-lines form of a sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub doc_id: String,
    pub sent_id: usize,
    pub tokens: Vec<String>,
    pub labels: Vec<String>,
    pub spans: Vec<EntitySpan>,
}

/// Column separator for CoNLL input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[derive(Default)]
pub enum ColumnSep {
    /// Tab if the line has one, otherwise any whitespace run.
    #[default]
    TabOrWhitespace,
    Char(char),
}


#[derive(Debug, Clone)]
pub struct ConllOptions {
    pub separator: ColumnSep,
    /// Entity type given to bare `B`/`I` labels.
    pub default_type: String,
    pub doc_id: String,
}

impl Default for ConllOptions {
    fn default() -> Self {
        ConllOptions {
            separator: ColumnSep::default(),
            default_type: "ENTITY".to_string(),
            doc_id: "doc".to_string(),
        }
    }
}

impl ConllOptions {
    pub fn with_type(entity_type: impl Into<String>) -> Self {
        ConllOptions {
            default_type: entity_type.into(),
            ..Default::default()
        }
    }
}

/// One label change made while repairing a sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Repair {
    pub sent_id: usize,
    pub index: usize,
    pub line: usize,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedCorpus {
    pub sentences: Vec<Sentence>,
    pub repairs: Vec<Repair>,
    /// `Suffixed` as soon as any label carried a type suffix.
    pub label_style: LabelStyle,
    /// The literal separator seen on the first token line.
    pub separator: Option<char>,
}

impl ParsedCorpus {
    pub fn repair_count(&self) -> usize {
        self.repairs.len()
    }
}

/// Parses a CoNLL-style stream. Invalid `I` labels are repaired to `B` and
/// reported in [`ParsedCorpus::repairs`].
pub fn parse_conll<R: BufRead>(input: R, opts: &ConllOptions) -> Result<ParsedCorpus> {
    let mut out = ParsedCorpus::default();
    let mut words: Vec<String> = Vec::new();
    let mut raw: Vec<String> = Vec::new();
    let mut lines_of: Vec<usize> = Vec::new();

    let flush = |words: &mut Vec<String>,
                     raw: &mut Vec<String>,
                     lines_of: &mut Vec<usize>,
                     out: &mut ParsedCorpus|
     -> Result<()> {
        if words.is_empty() {
            return Ok(());
        }
        let sent_id = out.sentences.len();
        let (labels, changes) = repair_bio(raw, &opts.default_type).map_err(|e| match e {
            Error::UnknownTag { index, tag } => Error::Parse {
                line: lines_of[index],
                message: format!("unknown BIO tag {tag:?}"),
            },
            other => other,
        })?;
        for index in changes {
            let repair = Repair {
                sent_id,
                index,
                line: lines_of[index],
                from: raw[index].clone(),
                to: labels[index].render(out.label_style),
            };
            debug!("repaired label at line {}: {} -> {}", repair.line, repair.from, repair.to);
            out.repairs.push(repair);
        }
        out.sentences.push(Sentence::new(
            opts.doc_id.clone(),
            sent_id,
            std::mem::take(words),
            labels,
        ));
        raw.clear();
        lines_of.clear();
        Ok(())
    };

    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| Error::Read {
            line: line_no,
            source,
        })?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            flush(&mut words, &mut raw, &mut lines_of, &mut out)?;
            continue;
        }
        let (cols, sep): (Vec<&str>, char) = match opts.separator {
            ColumnSep::Char(c) => (line.split(c).collect(), c),
            ColumnSep::TabOrWhitespace if line.contains('\t') => (line.split('\t').collect(), '\t'),
            ColumnSep::TabOrWhitespace => (line.split_whitespace().collect(), ' '),
        };
        if cols.len() != 2 || cols.iter().any(|c| c.is_empty()) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 2 columns, found {}", cols.len()),
            });
        }
        if cols[0].chars().any(char::is_whitespace) {
            return Err(Error::Parse {
                line: line_no,
                message: "token contains whitespace".to_string(),
            });
        }
        out.separator.get_or_insert(sep);
        if cols[1].contains('-') {
            out.label_style = LabelStyle::Suffixed;
        }
        words.push(cols[0].to_string());
        raw.push(cols[1].trim().to_string());
        lines_of.push(line_no);
    }
    flush(&mut words, &mut raw, &mut lines_of, &mut out)?;
    Ok(out)
}

/// Writes sentences back out in two-column form. For well-formed input,
/// `write_conll(parse_conll(x))` reproduces `x` up to the trailing newline.
pub fn write_conll(sentences: &[Sentence], sep: char, style: LabelStyle) -> String {
    let mut out = String::new();
    for (k, s) in sentences.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        for (tok, label) in s.tokens.iter().zip(&s.labels) {
            out.push_str(&tok.text);
            out.push(sep);
            out.push_str(&label.render(style));
            out.push('\n');
        }
    }
    out
}

/// Collapses each maximal `B I*` run of one type into a span. Input must
/// already be BIO-valid (see [`repair_bio`]). Spans carry no surface.
pub fn bio_to_spans(labels: &[BioLabel]) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut open: Option<EntitySpan> = None;
    for (i, label) in labels.iter().enumerate() {
        match label.tag {
            BioTag::I if open
                .as_ref()
                .is_some_and(|s| Some(s.entity_type.as_str()) == label.entity_type()) =>
            {
                if let Some(s) = open.as_mut() {
                    s.end = i;
                }
            }
            BioTag::O => spans.extend(open.take()),
            // B, or an I that cannot continue (treated as a begin)
            _ => {
                spans.extend(open.take());
                open = Some(EntitySpan::new(i, i, label.entity_type().unwrap_or_default()));
            }
        }
    }
    spans.extend(open);
    spans
}

/// Inverse of [`bio_to_spans`].
pub fn spans_to_bio(spans: &[EntitySpan], length: usize) -> Result<Vec<BioLabel>> {
    let mut labels = vec![BioLabel::outside(); length];
    let mut prev: Option<&EntitySpan> = None;
    for span in spans {
        if span.start > span.end || span.end >= length {
            return Err(Error::InvalidSpans(format!(
                "span ({}, {}) out of range for length {length}",
                span.start, span.end
            )));
        }
        if let Some(p) = prev {
            if span.start <= p.end {
                return Err(Error::InvalidSpans(format!(
                    "spans ({}, {}) and ({}, {}) overlap or are unsorted",
                    p.start, p.end, span.start, span.end
                )));
            }
        }
        labels[span.start] = BioLabel::begin(span.entity_type.clone());
        for label in &mut labels[span.start + 1..=span.end] {
            *label = BioLabel::inside(span.entity_type.clone());
        }
        prev = Some(span);
    }
    Ok(labels)
}

/// Parses raw label strings and turns every `I` without a valid
/// predecessor into `B` of the same type. Returns the repaired labels and
/// the indexes that changed.
pub fn repair_bio<S: AsRef<str>>(raw: &[S], default_type: &str) -> Result<(Vec<BioLabel>, Vec<usize>)> {
    let parsed = raw
        .iter()
        .enumerate()
        .map(|(index, r)| {
            BioLabel::parse(r.as_ref(), default_type).ok_or_else(|| Error::UnknownTag {
                index,
                tag: r.as_ref().to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(repair_labels(parsed))
}

/// [`repair_bio`] over already-parsed labels.
pub fn repair_labels(mut labels: Vec<BioLabel>) -> (Vec<BioLabel>, Vec<usize>) {
    let mut changed = Vec::new();
    for i in 0..labels.len() {
        if labels[i].tag != BioTag::I {
            continue;
        }
        let continues = i > 0
            && labels[i - 1].tag != BioTag::O
            && labels[i - 1].entity_type == labels[i].entity_type;
        if !continues {
            labels[i].tag = BioTag::B;
            changed.push(i);
        }
    }
    (labels, changed)
}

/// True if no `I` lacks a same-type predecessor.
pub fn is_bio_valid(labels: &[BioLabel]) -> bool {
    labels.iter().enumerate().all(|(i, l)| {
        l.tag != BioTag::I
            || (i > 0 && labels[i - 1].tag != BioTag::O && labels[i - 1].entity_type == l.entity_type)
    })
}

/// Distinct entity surfaces per type, sorted.
pub fn entity_inventory<'a>(sentences: impl IntoIterator<Item = &'a Sentence>) -> BTreeMap<String, Vec<String>> {
    let mut inv: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for sentence in sentences {
        for span in sentence.spans() {
            inv.entry(span.entity_type).or_default().insert(span.surface);
        }
    }
    inv.into_iter()
        .map(|(k, v)| (k, v.into_iter().collect()))
        .collect()
}

/// True if both lists describe the same extents and types (surfaces ignored).
pub fn same_spans(a: &[EntitySpan], b: &[EntitySpan]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.same_extent(y))
}
