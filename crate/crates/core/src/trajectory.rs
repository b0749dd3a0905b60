//! Trajectory model and the tagged transcript grammar.
//!
//! A transcript is a sequence of `<think>`, `<search>`, `<information>` and
//! `<answer>` spans. The parser is strict: anything other than whitespace
//! between spans, unknown or nested tags, a `<search>` not immediately followed
//! by `<information>`, or anything after `<answer>` is rejected with the byte
//! offset of the offending span.
//!
//! Structured searches are written `e<n>|r<n>` and structured evidence as
//! `;`-separated `s|r|o` triples. Content is escaped with `&amp;`, `&lt;` and
//! `&gt;`, and the canonical rendering puts no whitespace between tags, so
//! `parse(render(t)) == t` for every valid trajectory.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{EntityId, EvidenceItem, Fact, Query, RelationId};

pub const THINK_PLACEHOLDER: &str = "reasoning";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    SearchEnabled,
    SearchDisabled,
}

impl Mode {
    pub fn tag(&self) -> &'static str {
        match self {
            Mode::SearchEnabled => "e",
            Mode::SearchDisabled => "d",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchQuery {
    Structured(Query),
    Raw(String),
}

impl SearchQuery {
    /// Interprets free text, upgrading `e<n>|r<n>` to a structured query.
    pub fn from_text(text: &str) -> Self {
        parse_structured_query(text)
            .map(SearchQuery::Structured)
            .unwrap_or_else(|| SearchQuery::Raw(text.to_string()))
    }

    pub fn structured(&self) -> Option<Query> {
        match self {
            SearchQuery::Structured(q) => Some(*q),
            SearchQuery::Raw(_) => None,
        }
    }
}

impl fmt::Display for SearchQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SearchQuery::Structured((e, r)) => write!(f, "{e}|{r}"),
            SearchQuery::Raw(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Information {
    Evidence(Vec<EvidenceItem>),
    Raw(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Think(String),
    Search(SearchQuery),
    Information(Information),
    Answer(String),
}

impl Step {
    pub fn kind(&self) -> TagKind {
        match self {
            Step::Think(_) => TagKind::Think,
            Step::Search(_) => TagKind::Search,
            Step::Information(_) => TagKind::Information,
            Step::Answer(_) => TagKind::Answer,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagKind {
    Think,
    Search,
    Information,
    Answer,
}

impl TagKind {
    const ALL: [TagKind; 4] = [
        TagKind::Think,
        TagKind::Search,
        TagKind::Information,
        TagKind::Answer,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TagKind::Think => "think",
            TagKind::Search => "search",
            TagKind::Information => "information",
            TagKind::Answer => "answer",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for TagKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Serialized as a [`TrajectoryRecord`], i.e. through its transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TrajectoryRecord", into = "TrajectoryRecord")]
pub struct Trajectory {
    pub question_id: String,
    pub mode: Mode,
    pub steps: Vec<Step>,
    pub predicted_answer: Option<String>,
}

impl Trajectory {
    /// Builds a trajectory, deriving `predicted_answer` from the answer step.
    pub fn new(question_id: impl Into<String>, mode: Mode, steps: Vec<Step>) -> Self {
        let predicted_answer = steps.iter().rev().find_map(|s| match s {
            Step::Answer(a) => Some(a.trim().to_string()),
            _ => None,
        });
        Self {
            question_id: question_id.into(),
            mode,
            steps,
            predicted_answer,
        }
    }

    /// Checks the structural invariants. `cap` bounds the number of searches.
    pub fn validate(&self, cap: Option<usize>) -> Result<(), String> {
        let mut searches = 0usize;
        let mut pending: Option<&SearchQuery> = None;
        for (i, step) in self.steps.iter().enumerate() {
            if let Some(q) = pending.take() {
                match step {
                    Step::Information(Information::Evidence(items)) => {
                        let Some(source) = q.structured() else {
                            return Err(format!(
                                "step {i}: structured evidence after a raw search"
                            ));
                        };
                        for item in items {
                            if item.source_query != source {
                                return Err(format!(
                                    "step {i}: evidence source differs from query"
                                ));
                            }
                            if item.is_gold != (item.fact.query() == source) {
                                return Err(format!("step {i}: gold flag disagrees with fact"));
                            }
                        }
                    }
                    Step::Information(Information::Raw(_)) => {}
                    _ => {
                        return Err(format!(
                            "step {}: search not followed by information",
                            i - 1
                        ))
                    }
                }
                continue;
            }
            match step {
                Step::Search(q) => {
                    if self.mode == Mode::SearchDisabled {
                        return Err(format!("step {i}: search in a search-disabled trajectory"));
                    }
                    searches += 1;
                    pending = Some(q);
                }
                Step::Information(_) => {
                    return Err(format!("step {i}: information without search"))
                }
                Step::Answer(a) => {
                    if a.trim().is_empty() {
                        return Err(format!("step {i}: empty answer"));
                    }
                    if i + 1 != self.steps.len() {
                        return Err(format!("step {i}: answer is not terminal"));
                    }
                }
                Step::Think(_) => {}
            }
        }
        if pending.is_some() {
            return Err("final search has no information".into());
        }
        if let Some(cap) = cap {
            if searches > cap {
                return Err(format!("{searches} searches exceed cap {cap}"));
            }
        }
        let expected = self.steps.iter().rev().find_map(|s| match s {
            Step::Answer(a) => Some(a.trim().to_string()),
            _ => None,
        });
        if expected != self.predicted_answer {
            return Err("predicted_answer disagrees with the answer step".into());
        }
        Ok(())
    }

    pub fn search_queries(&self) -> impl Iterator<Item = &SearchQuery> {
        self.steps.iter().filter_map(|s| match s {
            Step::Search(q) => Some(q),
            _ => None,
        })
    }
}

/// Number of search steps.
pub fn search_count(trajectory: &Trajectory) -> usize {
    trajectory
        .steps
        .iter()
        .filter(|s| matches!(s, Step::Search(_)))
        .count()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("byte {offset}: text outside of a tag")]
    StrayText { offset: usize },
    #[error("byte {offset}: malformed tag")]
    MalformedTag { offset: usize },
    #[error("byte {offset}: unknown tag <{name}>")]
    UnknownTag { offset: usize, name: String },
    #[error("byte {offset}: closing tag </{kind}> without opening tag")]
    UnexpectedClose { offset: usize, kind: TagKind },
    #[error("byte {offset}: <{kind}> is never closed")]
    UnclosedTag { offset: usize, kind: TagKind },
    #[error("byte {offset}: <{kind}> nested inside <{kind}>")]
    NestedTag { offset: usize, kind: TagKind },
    #[error("byte {offset}: <{inner}> interleaved inside <{outer}>")]
    InterleavedTag {
        offset: usize,
        outer: TagKind,
        inner: TagKind,
    },
    #[error("byte {offset}: content after the answer")]
    AnswerNotTerminal { offset: usize },
    #[error("byte {offset}: empty answer")]
    EmptyAnswer { offset: usize },
    #[error("byte {offset}: search not followed by information")]
    SearchWithoutInformation { offset: usize },
    #[error("byte {offset}: information without a preceding search")]
    InformationWithoutSearch { offset: usize },
    #[error("byte {offset}: search in a search-disabled transcript")]
    SearchInDisabledMode { offset: usize },
    #[error("byte {offset}: search exceeds the cap of {cap}")]
    SearchCapExceeded { offset: usize, cap: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::StrayText { offset }
            | ParseError::MalformedTag { offset }
            | ParseError::UnknownTag { offset, .. }
            | ParseError::UnexpectedClose { offset, .. }
            | ParseError::UnclosedTag { offset, .. }
            | ParseError::NestedTag { offset, .. }
            | ParseError::InterleavedTag { offset, .. }
            | ParseError::AnswerNotTerminal { offset }
            | ParseError::EmptyAnswer { offset }
            | ParseError::SearchWithoutInformation { offset }
            | ParseError::InformationWithoutSearch { offset }
            | ParseError::SearchInDisabledMode { offset }
            | ParseError::SearchCapExceeded { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ParseOptions {
    pub mode: Mode,
    pub cap: Option<usize>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            mode: Mode::SearchEnabled,
            cap: None,
        }
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find('&') {
        out.push_str(&rest[..i]);
        rest = &rest[i..];
        let (rep, len) = if rest.starts_with("&amp;") {
            ('&', 5)
        } else if rest.starts_with("&lt;") {
            ('<', 4)
        } else if rest.starts_with("&gt;") {
            ('>', 4)
        } else {
            ('&', 1)
        };
        out.push(rep);
        rest = &rest[len..];
    }
    out.push_str(rest);
    out
}

fn parse_structured_query(text: &str) -> Option<Query> {
    let (e, r) = text.split_once('|')?;
    Some((e.parse::<EntityId>().ok()?, r.parse::<RelationId>().ok()?))
}

fn parse_evidence(text: &str, source: Query) -> Option<Vec<EvidenceItem>> {
    if text.is_empty() {
        return Some(Vec::new());
    }
    text.split(';')
        .map(|item| {
            let mut parts = item.split('|');
            let fact = Fact {
                subject: parts.next()?.parse().ok()?,
                relation: parts.next()?.parse().ok()?,
                object: parts.next()?.parse().ok()?,
            };
            if parts.next().is_some() {
                return None;
            }
            Some(EvidenceItem {
                fact,
                is_gold: fact.query() == source,
                source_query: source,
            })
        })
        .collect()
}

fn render_evidence(items: &[EvidenceItem]) -> String {
    items
        .iter()
        .map(|i| format!("{}|{}|{}", i.fact.subject, i.fact.relation, i.fact.object))
        .collect::<Vec<_>>()
        .join(";")
}

/// Canonical tag rendering with no whitespace between spans.
pub fn render_transcript(trajectory: &Trajectory) -> String {
    let mut out = String::new();
    for step in &trajectory.steps {
        let body = match step {
            Step::Think(t) => escape(t),
            Step::Search(q) => escape(&q.to_string()),
            Step::Information(Information::Evidence(items)) => render_evidence(items),
            Step::Information(Information::Raw(s)) => escape(s),
            Step::Answer(a) => escape(a),
        };
        let name = step.kind().name();
        out.push('<');
        out.push_str(name);
        out.push('>');
        out.push_str(&body);
        out.push_str("</");
        out.push_str(name);
        out.push('>');
    }
    out
}

struct Tag<'a> {
    closing: bool,
    name: &'a str,
    end: usize,
}

fn read_tag(text: &str, at: usize) -> Result<Tag<'_>, ParseError> {
    let rest = &text[at + 1..];
    let close = rest
        .find('>')
        .ok_or(ParseError::MalformedTag { offset: at })?;
    let inner = &rest[..close];
    let (closing, name) = match inner.strip_prefix('/') {
        Some(n) => (true, n),
        None => (false, inner),
    };
    if name.is_empty() || !name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_') {
        return Err(ParseError::MalformedTag { offset: at });
    }
    Ok(Tag {
        closing,
        name,
        end: at + 1 + close + 1,
    })
}

/// Tokenises a transcript into `(offset, kind, raw content)` spans.
fn spans(text: &str) -> Result<Vec<(usize, TagKind, &str)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        if bytes[pos].is_ascii_whitespace() {
            pos += 1;
            continue;
        }
        if bytes[pos] != b'<' {
            return Err(ParseError::StrayText { offset: pos });
        }
        let open = read_tag(text, pos)?;
        let Some(kind) = TagKind::from_name(open.name) else {
            return Err(ParseError::UnknownTag {
                offset: pos,
                name: open.name.to_string(),
            });
        };
        if open.closing {
            return Err(ParseError::UnexpectedClose { offset: pos, kind });
        }
        let body_start = open.end;
        let Some(rel) = text[body_start..].find('<') else {
            return Err(ParseError::UnclosedTag { offset: pos, kind });
        };
        let next = body_start + rel;
        let tag = read_tag(text, next)?;
        let Some(inner) = TagKind::from_name(tag.name) else {
            return Err(ParseError::UnknownTag {
                offset: next,
                name: tag.name.to_string(),
            });
        };
        match (tag.closing, inner == kind) {
            (true, true) => {
                out.push((pos, kind, &text[body_start..next]));
                pos = tag.end;
            }
            (false, true) => return Err(ParseError::NestedTag { offset: next, kind }),
            _ => {
                return Err(ParseError::InterleavedTag {
                    offset: next,
                    outer: kind,
                    inner,
                })
            }
        }
    }
    Ok(out)
}

/// Parses a transcript into a trajectory for `question_id`.
pub fn parse_transcript(
    question_id: &str,
    text: &str,
    options: ParseOptions,
) -> Result<Trajectory, ParseError> {
    let spans = spans(text)?;
    let mut steps = Vec::with_capacity(spans.len());
    let mut searches = 0usize;
    let mut answered = false;
    let mut i = 0;
    while i < spans.len() {
        let (offset, kind, raw) = spans[i];
        if answered {
            return Err(ParseError::AnswerNotTerminal { offset });
        }
        let content = unescape(raw);
        match kind {
            TagKind::Think => steps.push(Step::Think(content)),
            TagKind::Answer => {
                if content.trim().is_empty() {
                    return Err(ParseError::EmptyAnswer { offset });
                }
                answered = true;
                steps.push(Step::Answer(content));
            }
            TagKind::Information => return Err(ParseError::InformationWithoutSearch { offset }),
            TagKind::Search => {
                if options.mode == Mode::SearchDisabled {
                    return Err(ParseError::SearchInDisabledMode { offset });
                }
                searches += 1;
                if let Some(cap) = options.cap {
                    if searches > cap {
                        return Err(ParseError::SearchCapExceeded { offset, cap });
                    }
                }
                let query = SearchQuery::from_text(&content);
                let info = match spans.get(i + 1) {
                    Some(&(_, TagKind::Information, body)) => {
                        let body = unescape(body);
                        match query.structured().and_then(|q| parse_evidence(&body, q)) {
                            Some(items) => Information::Evidence(items),
                            None => Information::Raw(body),
                        }
                    }
                    _ => return Err(ParseError::SearchWithoutInformation { offset }),
                };
                steps.push(Step::Search(query));
                steps.push(Step::Information(info));
                i += 1;
            }
        }
        i += 1;
    }
    Ok(Trajectory::new(question_id, options.mode, steps))
}

/// One line of a trajectory JSONL file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub question_id: String,
    pub mode: Mode,
    pub transcript: String,
}

impl TrajectoryRecord {
    pub fn from_trajectory(t: &Trajectory) -> Self {
        Self {
            question_id: t.question_id.clone(),
            mode: t.mode,
            transcript: render_transcript(t),
        }
    }

    pub fn parse(&self, cap: Option<usize>) -> Result<Trajectory, ParseError> {
        parse_transcript(
            &self.question_id,
            &self.transcript,
            ParseOptions {
                mode: self.mode,
                cap,
            },
        )
    }
}

impl From<Trajectory> for TrajectoryRecord {
    fn from(t: Trajectory) -> Self {
        Self::from_trajectory(&t)
    }
}

impl TryFrom<TrajectoryRecord> for Trajectory {
    type Error = ParseError;

    fn try_from(r: TrajectoryRecord) -> Result<Self, ParseError> {
        r.parse(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<Trajectory, ParseError> {
        parse_transcript("q", text, ParseOptions::default())
    }

    #[test]
    fn parses_search_then_answer() {
        let t = parse("<think>t</think><search>q</search><information>d</information><answer>Beijing</answer>")
            .unwrap();
        assert_eq!(search_count(&t), 1);
        assert_eq!(t.predicted_answer.as_deref(), Some("Beijing"));
        assert_eq!(t.steps.len(), 4);
    }

    #[test]
    fn parses_spaced_answer_like_prompt_example() {
        let t = parse("<answer> Beijing </answer>").unwrap();
        assert_eq!(t.predicted_answer.as_deref(), Some("Beijing"));
    }

    #[test]
    fn parses_no_search() {
        let t = parse("<think>t</think><answer>Paris</answer>").unwrap();
        assert_eq!(search_count(&t), 0);
        assert_eq!(t.predicted_answer.as_deref(), Some("Paris"));
    }

    #[test]
    fn rejects_search_without_information() {
        assert_eq!(
            parse("<search>q</search>"),
            Err(ParseError::SearchWithoutInformation { offset: 0 })
        );
        assert_eq!(
            parse("<search>q</search><answer>x</answer>"),
            Err(ParseError::SearchWithoutInformation { offset: 0 })
        );
    }

    #[test]
    fn distinct_errors_name_offsets() {
        assert_eq!(
            parse("<think>t</think><think>abc"),
            Err(ParseError::UnclosedTag {
                offset: 16,
                kind: TagKind::Think
            })
        );
        assert_eq!(
            parse("<think>a<think>b</think></think>"),
            Err(ParseError::NestedTag {
                offset: 8,
                kind: TagKind::Think
            })
        );
        assert_eq!(
            parse("<answer>x</answer><think>t</think>"),
            Err(ParseError::AnswerNotTerminal { offset: 18 })
        );
        assert_eq!(
            parse("<think>a<answer>b</answer></think>"),
            Err(ParseError::InterleavedTag {
                offset: 8,
                outer: TagKind::Think,
                inner: TagKind::Answer
            })
        );
        assert_eq!(
            parse("<foo>x</foo>"),
            Err(ParseError::UnknownTag {
                offset: 0,
                name: "foo".into()
            })
        );
        assert_eq!(
            parse("hi<answer>x</answer>"),
            Err(ParseError::StrayText { offset: 0 })
        );
        assert_eq!(
            parse("<answer> </answer>"),
            Err(ParseError::EmptyAnswer { offset: 0 })
        );
        assert_eq!(
            parse("<information>d</information>"),
            Err(ParseError::InformationWithoutSearch { offset: 0 })
        );
        assert_eq!(
            parse("</answer>"),
            Err(ParseError::UnexpectedClose {
                offset: 0,
                kind: TagKind::Answer
            })
        );
        assert_eq!(
            parse_transcript(
                "q",
                "<search>a</search><information>b</information>",
                ParseOptions {
                    mode: Mode::SearchDisabled,
                    cap: None
                }
            ),
            Err(ParseError::SearchInDisabledMode { offset: 0 })
        );
        let two = "<search>a</search><information>b</information><search>c</search><information>d</information>";
        assert_eq!(
            parse_transcript(
                "q",
                two,
                ParseOptions {
                    mode: Mode::SearchEnabled,
                    cap: Some(1)
                }
            ),
            Err(ParseError::SearchCapExceeded { offset: 46, cap: 1 })
        );
    }

    #[test]
    fn whitespace_between_tags_is_tolerated() {
        let t = parse("<think>t</think>\n  <answer>x</answer>\n").unwrap();
        assert_eq!(t.steps.len(), 2);
    }

    #[test]
    fn empty_transcript_is_empty_trajectory() {
        let t = Trajectory::new("q", Mode::SearchEnabled, vec![]);
        assert_eq!(render_transcript(&t), "");
        assert_eq!(parse("").unwrap(), t);
    }

    #[test]
    fn structured_search_and_evidence() {
        let q = (EntityId(3), RelationId(1));
        let gold = Fact {
            subject: EntityId(3),
            relation: RelationId(1),
            object: EntityId(9),
        };
        let other = Fact {
            subject: EntityId(3),
            relation: RelationId(2),
            object: EntityId(4),
        };
        let items = vec![
            EvidenceItem {
                fact: other,
                is_gold: false,
                source_query: q,
            },
            EvidenceItem {
                fact: gold,
                is_gold: true,
                source_query: q,
            },
        ];
        let t = Trajectory::new(
            "q",
            Mode::SearchEnabled,
            vec![
                Step::Think(THINK_PLACEHOLDER.into()),
                Step::Search(SearchQuery::Structured(q)),
                Step::Information(Information::Evidence(items)),
                Step::Answer("e9".into()),
            ],
        );
        let text = render_transcript(&t);
        assert_eq!(
            text,
            "<think>reasoning</think><search>e3|r1</search><information>e3|r2|e4;e3|r1|e9</information><answer>e9</answer>"
        );
        assert_eq!(text.matches("<search>").count(), 1);
        assert_eq!(parse(&text).unwrap(), t);
    }

    #[test]
    fn count_matches_substring_scan() {
        let text = "<search>a</search><information>x</information><think>t</think><search>b</search><information>y</information><answer>z</answer>";
        let t = parse(text).unwrap();
        assert_eq!(search_count(&t), text.matches("<search>").count());
        assert_eq!(search_count(&t), 2);
    }

    #[test]
    fn escaping_round_trips() {
        let t = Trajectory::new(
            "q",
            Mode::SearchEnabled,
            vec![
                Step::Think("a < b && c > d &amp;".into()),
                Step::Answer("x&y".into()),
            ],
        );
        assert_eq!(parse(&render_transcript(&t)).unwrap(), t);
    }

    fn text_strategy() -> impl Strategy<Value = String> {
        "[a-z <>&;|]{0,12}"
    }

    fn step_strategy() -> impl Strategy<Value = Vec<Step>> {
        let think = text_strategy().prop_map(Step::Think);
        let search = (text_strategy(), text_strategy()).prop_map(|(q, d)| {
            let q = SearchQuery::Raw(format!("x{q}"));
            vec![Step::Search(q), Step::Information(Information::Raw(d))]
        });
        prop::collection::vec(prop_oneof![think.prop_map(|s| vec![s]), search], 0..6)
            .prop_map(|v| v.into_iter().flatten().collect())
    }

    proptest! {
        #[test]
        fn render_then_parse_is_identity(
            mut steps in step_strategy(),
            answer in proptest::option::of("[a-z&<]{1,8}")
        ) {
            if let Some(a) = answer {
                steps.push(Step::Answer(a));
            }
            let t = Trajectory::new("q", Mode::SearchEnabled, steps);
            prop_assert!(t.validate(None).is_ok());
            prop_assert_eq!(parse(&render_transcript(&t)).unwrap(), t);
        }

        #[test]
        fn appending_a_search_adds_one(steps in step_strategy()) {
            let mut t = Trajectory::new("q", Mode::SearchEnabled, steps);
            let before = search_count(&t);
            t.steps.push(Step::Search(SearchQuery::Raw("more".into())));
            t.steps.push(Step::Information(Information::Raw(String::new())));
            prop_assert_eq!(search_count(&t), before + 1);
        }

        #[test]
        fn accepted_transcripts_satisfy_invariants(text in "(<(/)?(think|search|information|answer)>|[a-z ]){0,16}") {
            if let Ok(t) = parse(&text) {
                prop_assert!(t.validate(None).is_ok(), "{:?}", t);
            }
        }
    }
}
