//! Plain-text extraction of the "Item 1. Business" section of a 10-K.

use std::sync::LazyLock;

use regex::{Captures, Regex};

static HIDDEN_BLOCKS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?is)<!--.*?-->|<script\b.*?</script\s*>|<style\b.*?</style\s*>|<ix:header\b.*?</ix:header\s*>|<head\b.*?</head\s*>")
        .unwrap()
});
static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)</?[A-Za-z!?][^<>]*>").unwrap());
static ENTITY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"&(#[0-9]{1,7}|#[xX][0-9a-fA-F]{1,6}|[A-Za-z]{2,8});").unwrap());
static ITEM1_START: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bitem\s*1\b\s*[.:\-\u{2013}\u{2014}]?").unwrap());
static BUSINESS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^\s*business\b").unwrap());
static ITEM1_END: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bitem\s*(?:1\s*a|1\s*b|1[0-5]|[2-9])\b").unwrap());

fn decode_entity(name: &str) -> Option<char> {
    if let Some(num) = name.strip_prefix('#') {
        let code = match num.strip_prefix(['x', 'X']) {
            Some(hex) => u32::from_str_radix(hex, 16).ok()?,
            None => num.parse().ok()?,
        };
        return char::from_u32(code);
    }
    Some(match name {
        "nbsp" | "ensp" | "emsp" | "thinsp" => ' ',
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "rsquo" | "lsquo" => '\'',
        "rdquo" | "ldquo" => '"',
        "ndash" => '\u{2013}',
        "mdash" => '\u{2014}',
        "bull" => '\u{2022}',
        "reg" => '\u{00ae}',
        "copy" => '\u{00a9}',
        "trade" => '\u{2122}',
        _ => return None,
    })
}

/// Removes markup and collapses whitespace to single spaces.
///
/// The result never contains anything tag-shaped, even when the source
/// escaped a tag as `&lt;b&gt;`, and is never longer than the input.
pub fn strip_markup(doc: &str) -> String {
    let text = HIDDEN_BLOCKS.replace_all(doc, " ");
    let text = TAG.replace_all(&text, " ");
    let text = ENTITY.replace_all(&text, |c: &Captures| match decode_entity(&c[1]) {
        Some(ch) => ch.to_string(),
        None => c[0].to_string(),
    });
    let text = TAG.replace_all(&text, " ");
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Extracts the body text of "Item 1. Business" from a filing.
///
/// Tables of contents repeat the headings, so the section starts at the last
/// Item 1 heading that is still followed by a later item heading (Item 1A,
/// 1B or 2 and onwards). Headings followed by the word "Business" win over
/// bare "Item 1" mentions. Returns an empty string when no heading exists.
pub fn extract_item1(doc: &str) -> String {
    let text = strip_markup(doc);
    let ends: Vec<usize> = ITEM1_END.find_iter(&text).map(|m| m.start()).collect();
    let starts: Vec<(usize, usize, bool)> = ITEM1_START
        .find_iter(&text)
        .filter(|m| !ends.contains(&m.start()))
        .map(|m| (m.start(), m.end(), BUSINESS.is_match(&text[m.end()..])))
        .collect();
    if starts.is_empty() {
        return String::new();
    }
    let titled = starts.iter().any(|s| s.2);
    let candidates: Vec<&(usize, usize, bool)> = starts.iter().filter(|s| s.2 || !titled).collect();
    let next_end = |from: usize| ends.iter().copied().find(|&e| e >= from);
    let chosen = candidates
        .iter()
        .rev()
        .find(|s| next_end(s.1).is_some())
        .or(candidates.last())
        .expect("non-empty");
    let body_start = if chosen.2 {
        chosen.1 + BUSINESS.find(&text[chosen.1..]).map_or(0, |m| m.end())
    } else {
        chosen.1
    };
    let body_end = next_end(body_start).unwrap_or(text.len());
    text[body_start..body_end]
        .trim_start_matches(|c: char| {
            c.is_whitespace() || matches!(c, '.' | ':' | '-' | '\u{2013}' | '\u{2014}')
        })
        .trim_end()
        .to_string()
}
