//! Structured tag protocol for rollout text.
//!
//! A rollout is plain text interleaved with flat, non-nesting tagged blocks:
//! `<reasoning>`, `<factors>`, `<search>`, `<information>`, `<answer>`, and
//! `<rethink>`. Model output is noisy, so parsing fails soft: unknown tags are
//! treated as plain text and only an unclosed *known* tag is an error. The one
//! structural exception is that a `<search>` block may wrap its query in a
//! single inner source tag (`<search><statute>…</statute></search>`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retrieval::Evidence;
use crate::reward::SentenceValue;

/// Tags recognized by [`parse_trajectory`]. Anything else stays plain text.
pub const KNOWN_TAGS: [&str; 6] = [
    "reasoning",
    "factors",
    "search",
    "information",
    "answer",
    "rethink",
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("unclosed <{tag}> tag at byte offset {offset}")]
    MalformedTag { tag: String, offset: usize },
    #[error("search block has an empty query")]
    EmptyQuery,
    #[error("no parsable sentence value in answer text {0:?}")]
    UnparsableAnswer(String),
    #[error("information block requires at least one evidence item")]
    EmptyEvidence,
    #[error("expected a search segment, found {0:?}")]
    NotASearchSegment(SegmentKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SegmentKind {
    Reasoning,
    Factors,
    Search,
    Information,
    Answer,
    Rethink,
    Plain,
}

impl SegmentKind {
    fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "reasoning" => Some(Self::Reasoning),
            "factors" => Some(Self::Factors),
            "search" => Some(Self::Search),
            "information" => Some(Self::Information),
            "answer" => Some(Self::Answer),
            "rethink" => Some(Self::Rethink),
            _ => None,
        }
    }

    /// Tag name for tagged kinds; `None` for plain text.
    pub fn tag(&self) -> Option<&'static str> {
        match self {
            Self::Reasoning => Some("reasoning"),
            Self::Factors => Some("factors"),
            Self::Search => Some("search"),
            Self::Information => Some("information"),
            Self::Answer => Some("answer"),
            Self::Rethink => Some("rethink"),
            Self::Plain => None,
        }
    }

    /// Information and rethink text is inserted by the environment; everything
    /// else is authored by the policy.
    pub fn default_origin(&self) -> Origin {
        match self {
            Self::Information | Self::Rethink => Origin::Environment,
            _ => Origin::Generated,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    Generated,
    Environment,
}

/// Half-open token index range into a trajectory's token sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    /// Inner text for tagged kinds, raw text for plain segments.
    pub text: String,
    pub origin: Origin,
    pub token_span: Span,
}

impl Segment {
    pub fn new(kind: SegmentKind, text: impl Into<String>) -> Self {
        Self {
            kind,
            text: text.into(),
            origin: kind.default_origin(),
            token_span: Span::default(),
        }
    }

    pub fn plain(text: impl Into<String>) -> Self {
        Self::new(SegmentKind::Plain, text)
    }

    /// Segment as it appears in rollout text, tags included.
    pub fn rendered(&self) -> String {
        match self.kind.tag() {
            Some(tag) => format!("<{tag}>{}</{tag}>", self.text),
            None => self.text.clone(),
        }
    }

    /// Whitespace tokens of the rendered form. This is the canonical
    /// tokenization trajectories use when the generator does not supply ids.
    pub fn token_count(&self) -> usize {
        self.rendered().split_whitespace().count()
    }
}

/// Stable 32-bit id for a whitespace token (FNV-1a folded).
pub fn token_id(token: &str) -> u32 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in token.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    (h ^ (h >> 32)) as u32
}

/// Whitespace token ids of a segment's rendered text.
pub fn segment_token_ids(segment: &Segment) -> Vec<u32> {
    segment
        .rendered()
        .split_whitespace()
        .map(token_id)
        .collect()
}

/// Assigns cumulative, non-overlapping token spans across `segments`.
pub fn assign_token_spans(segments: &mut [Segment]) {
    let mut cursor = 0usize;
    for seg in segments {
        let n = seg.token_count();
        seg.token_span = Span {
            start: cursor,
            end: cursor + n,
        };
        cursor += n;
    }
}

fn match_opening_tag(rest: &str) -> Option<(SegmentKind, &'static str)> {
    for tag in KNOWN_TAGS {
        let open_len = tag.len() + 2;
        if rest.len() >= open_len
            && rest.as_bytes()[0] == b'<'
            && rest.as_bytes()[open_len - 1] == b'>'
            && &rest[1..open_len - 1] == tag
        {
            return Some((SegmentKind::from_tag(tag).unwrap(), tag));
        }
    }
    None
}

/// Parses rollout text into an ordered segment list.
///
/// Every well-formed `<tag>…</tag>` region becomes one segment of the
/// matching kind; text outside known tags becomes plain segments. A known
/// opening tag with no matching close before end of text is an error.
pub fn parse_trajectory(text: &str) -> Result<Vec<Segment>, ProtocolError> {
    let mut segments = Vec::new();
    let mut plain_start = 0usize;
    let mut pos = 0usize;

    while pos < text.len() {
        let Some(rel) = text[pos..].find('<') else {
            break;
        };
        let lt = pos + rel;
        match match_opening_tag(&text[lt..]) {
            Some((kind, tag)) => {
                let inner_start = lt + tag.len() + 2;
                let close = format!("</{tag}>");
                match text[inner_start..].find(&close) {
                    Some(r) => {
                        if plain_start < lt {
                            segments.push(Segment::plain(&text[plain_start..lt]));
                        }
                        segments.push(Segment::new(kind, &text[inner_start..inner_start + r]));
                        pos = inner_start + r + close.len();
                        plain_start = pos;
                    }
                    None => {
                        return Err(ProtocolError::MalformedTag {
                            tag: tag.to_string(),
                            offset: lt,
                        })
                    }
                }
            }
            None => pos = lt + 1,
        }
    }

    if plain_start < text.len() {
        segments.push(Segment::plain(&text[plain_start..]));
    }
    assign_token_spans(&mut segments);
    Ok(segments)
}

/// Inverse of [`parse_trajectory`] for well-formed segment lists.
pub fn render_segments(segments: &[Segment]) -> String {
    segments.iter().map(Segment::rendered).collect()
}

/// A parsed `<search>` request: query text plus an optional target source tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchAction {
    pub query: String,
    pub source_tag: Option<String>,
}

fn unwrap_inner_tag(text: &str) -> Option<(&str, &str)> {
    let trimmed = text.trim();
    if !trimmed.starts_with('<') {
        return None;
    }
    let name_end = trimmed.find('>')?;
    let name = &trimmed[1..name_end];
    if name.is_empty()
        || !name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
    {
        return None;
    }
    let close = format!("</{name}>");
    let body = &trimmed[name_end + 1..];
    let inner = body.strip_suffix(close.as_str())?;
    // A wrapping tag must be the sole child: no second close tag inside.
    if inner.contains(close.as_str()) {
        return None;
    }
    Some((name, inner))
}

/// Extracts the query and optional source tag from a search segment.
pub fn extract_search(seg: &Segment) -> Result<SearchAction, ProtocolError> {
    if seg.kind != SegmentKind::Search {
        return Err(ProtocolError::NotASearchSegment(seg.kind));
    }
    let (source_tag, query) = match unwrap_inner_tag(&seg.text) {
        Some((tag, inner)) => (Some(tag.to_ascii_lowercase()), inner.trim()),
        None => (None, seg.text.trim()),
    };
    if query.is_empty() {
        return Err(ProtocolError::EmptyQuery);
    }
    Ok(SearchAction {
        query: query.to_string(),
        source_tag,
    })
}

/// Answer grammar: a bare decimal is a month count; `N year(s)` and
/// `N year(s) M month(s)` forms convert at 12 months per year.
pub fn extract_answer(text: &str) -> Result<SentenceValue, ProtocolError> {
    let t = text.trim();
    let unparsable = || ProtocolError::UnparsableAnswer(text.to_string());

    let bare = regex_cached::bare_number();
    if bare.is_match(t) {
        let months: f64 = t.parse().map_err(|_| unparsable())?;
        return SentenceValue::new(months).map_err(|_| unparsable());
    }

    let structured = regex_cached::year_month();
    if let Some(caps) = structured.captures(t) {
        let years: f64 = caps
            .name("y")
            .map(|m| m.as_str().parse().unwrap_or(f64::NAN))
            .unwrap_or(0.0);
        let months: f64 = caps
            .name("m")
            .map(|m| m.as_str().parse().unwrap_or(f64::NAN))
            .unwrap_or(0.0);
        return SentenceValue::new(years * 12.0 + months).map_err(|_| unparsable());
    }

    Err(unparsable())
}

/// Renders a month value in the canonical form [`extract_answer`] accepts.
pub fn format_months(value: SentenceValue) -> String {
    format!("{}", value.months())
}

mod regex_cached {
    use regex::Regex;
    use std::sync::OnceLock;

    pub fn bare_number() -> &'static Regex {
        static RE: OnceLock<Regex> = OnceLock::new();
        RE.get_or_init(|| Regex::new(r"^(?:\d+(?:\.\d*)?|\.\d+)$").unwrap())
    }

    pub fn year_month() -> &'static Regex {
        static RE: OnceLock<Regex> = OnceLock::new();
        RE.get_or_init(|| {
            Regex::new(
                r"(?i)^(?:(?P<y>\d+(?:\.\d*)?|\.\d+)\s*years?)?\s*(?:(?P<m>\d+(?:\.\d*)?|\.\d+)\s*months?)?$",
            )
            .unwrap()
        })
    }
}

/// Ordered factor items from a `<factors>` block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorList {
    pub factors: Vec<String>,
    pub raw_text: String,
}

impl FactorList {
    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }
}

fn strip_enumerator(line: &str) -> &str {
    let s = line.trim();
    let digits = s.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &s[digits..];
        if let Some(stripped) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return stripped.trim();
        }
    }
    if let Some(stripped) = s.strip_prefix('-').or_else(|| s.strip_prefix('•')) {
        return stripped.trim();
    }
    s
}

/// Splits a factors block on lines, dropping enumerators and empty items.
pub fn extract_factors(text: &str) -> FactorList {
    let factors = text
        .lines()
        .map(strip_enumerator)
        .filter(|item| !item.is_empty())
        .map(str::to_string)
        .collect();
    FactorList {
        factors,
        raw_text: text.to_string(),
    }
}

/// Inner text of an information block listing evidence items in rank order.
///
/// Item template (kept stable for golden traces):
/// `[{rank}] source={source_id} doc={doc_id}\n{text}\n`
pub fn render_information_body(evidence: &[Evidence]) -> String {
    let mut body = String::from("\n");
    for item in evidence {
        body.push_str(&format!(
            "[{}] source={} doc={}\n{}\n",
            item.rank, item.source_id, item.doc_id, item.text
        ));
    }
    body
}

/// Full `<information>` block for non-empty evidence lists.
pub fn render_information(evidence: &[Evidence]) -> Result<String, ProtocolError> {
    if evidence.is_empty() {
        return Err(ProtocolError::EmptyEvidence);
    }
    Ok(format!(
        "<information>{}</information>",
        render_information_body(evidence)
    ))
}
