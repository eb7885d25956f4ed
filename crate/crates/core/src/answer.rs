//! Answer labels and the equivalence relation used whenever two agents'
//! answers are compared.
//!
//! Canonicalization covers the two answer shapes the engine is built for:
//! closed-form math answers and multiple-choice letters. Two labels are
//! equivalent iff their canonical strings are identical.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Canonical form shared by every empty or unparseable answer.
pub const EMPTY_CANONICAL: &str = "";

/// An answer as emitted by an agent together with its canonical form.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AnswerLabel {
    raw: String,
    canonical: String,
}

impl AnswerLabel {
    pub fn new(raw: impl Into<String>) -> Self {
        canonicalize(&raw.into())
    }

    /// The distinguished label for missing or unparseable answers.
    pub fn empty() -> Self {
        Self {
            raw: String::new(),
            canonical: EMPTY_CANONICAL.to_string(),
        }
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn canonical(&self) -> &str {
        &self.canonical
    }

    pub fn is_empty(&self) -> bool {
        self.canonical == EMPTY_CANONICAL
    }

    /// Answer equivalence: identical canonical forms.
    pub fn equivalent(&self, other: &AnswerLabel) -> bool {
        self.canonical == other.canonical
    }
}

impl fmt::Display for AnswerLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            f.write_str("<empty>")
        } else {
            f.write_str(&self.canonical)
        }
    }
}

impl From<&str> for AnswerLabel {
    fn from(raw: &str) -> Self {
        canonicalize(raw)
    }
}

// Serialized as the raw string only; the canonical form is always recomputed
// so a persisted label can never carry a stale canonicalization.
impl Serialize for AnswerLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.raw)
    }
}

impl<'de> Deserialize<'de> for AnswerLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        Ok(canonicalize(&raw))
    }
}

/// True iff both labels share a canonical form.
pub fn answers_equal(a: &AnswerLabel, b: &AnswerLabel) -> bool {
    a.equivalent(b)
}

/// Normalizes a raw answer string.
///
/// Rules, applied in order: collapse whitespace runs and trim; case-fold;
/// unwrap `\boxed{..}` and `$..$`; strip trailing `. , ; : ! ?`; map a lone
/// choice letter (optionally written `(b)`, `b)`) to its uppercase form;
/// rewrite plain decimal numbers in a canonical decimal form.
pub fn canonicalize(raw: &str) -> AnswerLabel {
    AnswerLabel {
        raw: raw.to_string(),
        canonical: canonical_form(raw),
    }
}

fn canonical_form(raw: &str) -> String {
    let mut s = collapse_whitespace(raw).to_lowercase();

    loop {
        let before = s.len();
        s = unwrap_math(&s);
        s = s
            .trim_end_matches(|c: char| {
                matches!(c, '.' | ',' | ';' | ':' | '!' | '?') || c.is_whitespace()
            })
            .trim_start()
            .to_string();
        if s.len() == before {
            break;
        }
    }

    if let Some(letter) = choice_letter(&s) {
        return letter.to_ascii_uppercase().to_string();
    }
    if let Some(num) = canonical_number(&s) {
        return num;
    }
    s
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn unwrap_math(s: &str) -> String {
    let t = s.trim();
    if let Some(inner) = t.strip_prefix("\\boxed{").and_then(|r| r.strip_suffix('}')) {
        return inner.trim().to_string();
    }
    if t.len() >= 2 {
        if let Some(inner) = t.strip_prefix('$').and_then(|r| r.strip_suffix('$')) {
            return inner.trim().to_string();
        }
    }
    t.to_string()
}

/// `b`, `(b)`, `b)` and `(b` all denote choice letter `b`.
fn choice_letter(s: &str) -> Option<char> {
    let t = s.strip_prefix('(').unwrap_or(s);
    let t = t.strip_suffix(')').unwrap_or(t);
    let mut chars = t.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if c.is_ascii_alphabetic() => Some(c),
        _ => None,
    }
}

/// Canonical decimal rendering of `[+-]?(digits[.digits*] | .digits)`.
/// Exact string arithmetic: no float round trip.
fn canonical_number(s: &str) -> Option<String> {
    let (negative, body) = match s.as_bytes().first()? {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit())
        || !frac_part.bytes().all(|b| b.is_ascii_digit())
    {
        return None;
    }
    let int_trimmed = int_part.trim_start_matches('0');
    let frac_trimmed = frac_part.trim_end_matches('0');
    let int_digits = if int_trimmed.is_empty() {
        "0"
    } else {
        int_trimmed
    };
    let mut out = String::new();
    if negative && !(int_digits == "0" && frac_trimmed.is_empty()) {
        out.push('-');
    }
    out.push_str(int_digits);
    if !frac_trimmed.is_empty() {
        out.push('.');
        out.push_str(frac_trimmed);
    }
    Some(out)
}
