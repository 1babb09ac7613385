//! CQA data model and the JSON-lines dataset format.
//!
//! One CQA text (a question, its answers, the topic tags and the answering
//! users' meta-data) per line:
//!
//! ```text
//! {"id": "...", "question": "...",
//!  "answers": [{"text": "...", "user": "alice"}],
//!  "topics": [{"name": "World War II", "questions": ["..."]}],
//!  "users": {"alice": {"questions": ["..."]}},
//!  "mentions": [{"surface": "Roosevelt", "unit": "q", "start": 4, "end": 13, "gold": "Franklin D. Roosevelt"}]}
//! ```
//!
//! `unit` is `"q"` for the question or a 0-based answer index. Offsets count
//! Unicode scalar values of the NFC-normalized host text, end exclusive.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Questions kept per topic tag.
pub const MAX_TOPIC_QUESTIONS: usize = 10;
/// Questions kept per user (asked plus answered).
pub const MAX_USER_QUESTIONS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CqaText {
    pub id: String,
    pub question: String,
    #[serde(default)]
    pub answers: Vec<Answer>,
    #[serde(default, rename = "topics")]
    pub topic_tags: Vec<TopicTag>,
    #[serde(default)]
    pub users: BTreeMap<String, User>,
    #[serde(default)]
    pub mentions: Vec<Mention>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub user: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicTag {
    pub name: String,
    #[serde(default)]
    pub questions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    /// Filled from the key of the `users` map.
    #[serde(skip)]
    pub name: String,
    #[serde(default)]
    pub questions: Vec<String>,
}

/// Which text unit of a CQA text hosts a mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Unit {
    Question,
    Answer(usize),
}

impl Serialize for Unit {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Unit::Question => s.serialize_str("q"),
            Unit::Answer(i) => s.serialize_u64(*i as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Unit {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct UnitVisitor;

        impl Visitor<'_> for UnitVisitor {
            type Value = Unit;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("\"q\" or a non-negative answer index")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Unit, E> {
                if v == "q" {
                    Ok(Unit::Question)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Unit, E> {
                Ok(Unit::Answer(v as usize))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Unit, E> {
                if v >= 0 {
                    Ok(Unit::Answer(v as usize))
                } else {
                    Err(E::invalid_value(de::Unexpected::Signed(v), &self))
                }
            }
        }

        d.deserialize_any(UnitVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mention {
    pub surface: String,
    pub unit: Unit,
    pub start: usize,
    pub end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<String>,
}

impl CqaText {
    /// Text of the question or of one answer.
    pub fn unit_text(&self, unit: Unit) -> Option<&str> {
        match unit {
            Unit::Question => Some(&self.question),
            Unit::Answer(i) => self.answers.get(i).map(|a| a.text.as_str()),
        }
    }

    pub fn host_text(&self, mention: &Mention) -> Option<&str> {
        self.unit_text(mention.unit)
    }

    /// Answers other than `answer_index`, in original order.
    pub fn parallel_answers(&self, answer_index: usize) -> Result<Vec<&str>> {
        if answer_index >= self.answers.len() {
            return Err(Error::InvalidArgument(format!(
                "answer index {answer_index} out of range for {} answers",
                self.answers.len()
            )));
        }
        Ok(self
            .answers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != answer_index)
            .map(|(_, a)| a.text.as_str())
            .collect())
    }

    /// All answers; the parallel answers of a question-hosted mention.
    pub fn question_parallel_answers(&self) -> Vec<&str> {
        self.answers.iter().map(|a| a.text.as_str()).collect()
    }

    /// Parallel answers for a mention hosted in `unit`.
    pub fn parallel_texts(&self, unit: Unit) -> Result<Vec<&str>> {
        match unit {
            Unit::Question => Ok(self.question_parallel_answers()),
            Unit::Answer(i) => self.parallel_answers(i),
        }
    }

    /// Questions of all topic tags, pooled in tag order.
    pub fn topic_questions(&self) -> Vec<&str> {
        self.topic_tags
            .iter()
            .flat_map(|t| t.questions.iter().map(String::as_str))
            .collect()
    }

    /// User meta-data questions for a mention hosted in `unit`: the answering
    /// user's questions for an answer, the union over all answering users
    /// (first occurrence order, each user once) for the question.
    pub fn user_questions(&self, unit: Unit) -> Vec<&str> {
        let users: Vec<&str> = match unit {
            Unit::Answer(i) => self
                .answers
                .get(i)
                .map(|a| vec![a.user.as_str()])
                .unwrap_or_default(),
            Unit::Question => {
                let mut seen = Vec::new();
                for a in &self.answers {
                    if !seen.contains(&a.user.as_str()) {
                        seen.push(a.user.as_str());
                    }
                }
                seen
            }
        };
        users
            .into_iter()
            .filter_map(|u| self.users.get(u))
            .flat_map(|u| u.questions.iter().map(String::as_str))
            .collect()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("CqaText serialization is infallible")
    }
}

/// Result of loading a dataset: accepted records plus one issue per
/// rejected line.
#[derive(Debug, Default)]
pub struct LoadReport {
    pub texts: Vec<CqaText>,
    pub rejected: Vec<Error>,
    pub warnings: Vec<String>,
}

impl LoadReport {
    /// Fails on the first rejected line, if any.
    pub fn into_strict(mut self) -> Result<Vec<CqaText>> {
        if self.rejected.is_empty() {
            Ok(self.texts)
        } else {
            Err(self.rejected.swap_remove(0))
        }
    }
}

/// Loads a JSON-lines dataset. Only I/O failures are fatal; malformed or
/// invalid lines are rejected and reported.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<LoadReport> {
    let path = path.as_ref();
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    let content = String::from_utf8(raw).map_err(|e| {
        Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()),
        )
    })?;
    Ok(parse_dataset(&content))
}

pub fn parse_dataset(content: &str) -> LoadReport {
    let mut report = LoadReport::default();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(line, i + 1, &mut report.warnings) {
            Ok(text) => report.texts.push(text),
            Err(e) => {
                log::warn!("{e}");
                report.rejected.push(e);
            }
        }
    }
    report
}

/// Parses and validates one dataset line (1-based `line` for reporting).
pub fn parse_line(line: &str, line_no: usize, warnings: &mut Vec<String>) -> Result<CqaText> {
    let de = &mut serde_json::Deserializer::from_str(line);
    let mut text: CqaText = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_data() && path != "." {
            Error::Validation {
                line: line_no,
                path,
                message: inner.to_string(),
            }
        } else {
            Error::Json {
                line: line_no,
                message: inner.to_string(),
            }
        }
    })?;
    normalize_text(&mut text);
    validate(&mut text, line_no, warnings)?;
    Ok(text)
}

fn nfc(s: &mut String) {
    if !unicode_normalization::is_nfc(s) {
        *s = s.nfc().collect();
    }
}

fn normalize_text(text: &mut CqaText) {
    nfc(&mut text.question);
    for a in &mut text.answers {
        nfc(&mut a.text);
        nfc(&mut a.user);
    }
    for t in &mut text.topic_tags {
        nfc(&mut t.name);
        t.questions.iter_mut().for_each(nfc);
    }
    let users = std::mem::take(&mut text.users);
    for (name, mut user) in users {
        let name: String = name.nfc().collect();
        user.questions.iter_mut().for_each(nfc);
        user.name = name.clone();
        text.users.insert(name, user);
    }
    for m in &mut text.mentions {
        nfc(&mut m.surface);
        if let Some(g) = &mut m.gold {
            nfc(g);
        }
    }
}

fn validate(text: &mut CqaText, line: usize, warnings: &mut Vec<String>) -> Result<()> {
    let invalid = |path: String, message: &str| Error::Validation {
        line,
        path,
        message: message.to_string(),
    };
    if text.id.trim().is_empty() {
        return Err(invalid("id".into(), "empty identifier"));
    }
    for (i, a) in text.answers.iter().enumerate() {
        if a.text.split_whitespace().next().is_none() {
            return Err(invalid(format!("answers[{i}].text"), "empty answer text"));
        }
        if !text.users.contains_key(&a.user) {
            return Err(invalid(
                format!("answers[{i}].user"),
                &format!("user {:?} missing from users", a.user),
            ));
        }
    }
    for t in &mut text.topic_tags {
        if t.questions.len() > MAX_TOPIC_QUESTIONS {
            warnings.push(format!(
                "line {line}: topic {:?} has {} questions, keeping {MAX_TOPIC_QUESTIONS}",
                t.name,
                t.questions.len()
            ));
            t.questions.truncate(MAX_TOPIC_QUESTIONS);
        }
    }
    for u in text.users.values_mut() {
        if u.questions.len() > MAX_USER_QUESTIONS {
            warnings.push(format!(
                "line {line}: user {:?} has {} questions, keeping {MAX_USER_QUESTIONS}",
                u.name,
                u.questions.len()
            ));
            u.questions.truncate(MAX_USER_QUESTIONS);
        }
    }
    for (k, m) in text.mentions.iter().enumerate() {
        let span_err = |message: String| Error::SpanMismatch {
            line,
            mention: k,
            message,
        };
        let host = text
            .unit_text(m.unit)
            .ok_or_else(|| span_err(format!("unit {:?} does not exist", m.unit)))?;
        let len = host.chars().count();
        if m.start >= m.end {
            return Err(span_err(format!("empty or inverted span [{}, {})", m.start, m.end)));
        }
        if m.end > len {
            return Err(span_err(format!(
                "end {} exceeds host text length {len}",
                m.end
            )));
        }
        let sub: String = host.chars().skip(m.start).take(m.end - m.start).collect();
        if sub != m.surface {
            return Err(span_err(format!(
                "surface {:?} does not match host text {:?}",
                m.surface, sub
            )));
        }
    }
    Ok(())
}

pub fn write_dataset(path: impl AsRef<Path>, texts: &[CqaText]) -> Result<()> {
    let path = path.as_ref();
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for t in texts {
        writeln!(out, "{}", t.to_json_line()).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Dataset-level counts used as a sanity check against a known release.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct DatasetStats {
    pub cqa_texts: usize,
    pub answers: usize,
    pub mentions: usize,
    pub labeled_mentions: usize,
    /// Topic-tag attachments summed over texts.
    pub topic_tags: usize,
}

impl DatasetStats {
    pub fn of(texts: &[CqaText]) -> Self {
        texts.iter().fold(Self::default(), |mut s, t| {
            s.cqa_texts += 1;
            s.answers += t.answers.len();
            s.mentions += t.mentions.len();
            s.labeled_mentions += t.mentions.iter().filter(|m| m.gold.is_some()).count();
            s.topic_tags += t.topic_tags.len();
            s
        })
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} CQA texts, {} answers, {} mentions ({} labeled), {} topic tags",
            self.cqa_texts, self.answers, self.mentions, self.labeled_mentions, self.topic_tags
        )
    }
}
