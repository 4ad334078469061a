use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

pub const MIN_WORD_LEN: usize = 2;
pub const MAX_WORD_LEN: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Word,
    Emoji,
    Placeholder,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub kind: TokenKind,
}

impl Token {
    pub fn word(s: impl Into<String>) -> Self {
        Token {
            surface: s.into(),
            kind: TokenKind::Word,
        }
    }

    pub fn emoji(s: impl Into<String>) -> Self {
        Token {
            surface: s.into(),
            kind: TokenKind::Emoji,
        }
    }

    pub fn placeholder(s: impl Into<String>) -> Self {
        Token {
            surface: s.into(),
            kind: TokenKind::Placeholder,
        }
    }
}

/// Code points that start an emoji presentation sequence.
pub fn is_emoji_char(c: char) -> bool {
    matches!(c as u32,
        0x1F000..=0x1F02F
        | 0x1F0A0..=0x1F0FF
        | 0x1F100..=0x1F1FF
        | 0x1F300..=0x1F5FF
        | 0x1F600..=0x1F64F
        | 0x1F680..=0x1F6FF
        | 0x1F700..=0x1F77F
        | 0x1F780..=0x1F7FF
        | 0x1F900..=0x1F9FF
        | 0x1FA70..=0x1FAFF
        | 0x2600..=0x26FF
        | 0x2700..=0x27BF
        | 0x2300..=0x23FF
        | 0x2B05..=0x2B07
        | 0x2B1B..=0x2B1C
        | 0x2B50
        | 0x2B55
        | 0x3030
        | 0x303D
        | 0x3297
        | 0x3299
    )
}

pub fn is_emoji_grapheme(g: &str) -> bool {
    g.chars().next().is_some_and(is_emoji_char)
}

fn is_apostrophe(g: &str) -> bool {
    g == "'" || g == "\u{2019}"
}

fn is_word_grapheme(g: &str) -> bool {
    g.chars().next().is_some_and(char::is_alphanumeric)
}

fn flush_word(word: &mut String, out: &mut Vec<Token>) {
    let lowered = word.trim_matches('\'').to_lowercase();
    let len = lowered.chars().count();
    if (MIN_WORD_LEN..=MAX_WORD_LEN).contains(&len) {
        out.push(Token::word(lowered));
    }
    word.clear();
}

/// Splits text into lowercase word tokens and emoji tokens.
///
/// Words are maximal runs of alphanumeric graphemes, with apostrophes kept
/// only between letters ("don't"). Word tokens outside 2..=15 characters
/// are dropped; emoji grapheme clusters are always kept.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut word = String::new();
    let graphemes: Vec<&str> = text.graphemes(true).collect();
    for (i, g) in graphemes.iter().enumerate() {
        if is_emoji_grapheme(g) {
            flush_word(&mut word, &mut out);
            out.push(Token::emoji(*g));
        } else if is_word_grapheme(g) {
            word.push_str(g);
        } else if is_apostrophe(g)
            && !word.is_empty()
            && graphemes.get(i + 1).is_some_and(|n| is_word_grapheme(n))
        {
            word.push('\'');
        } else {
            flush_word(&mut word, &mut out);
        }
    }
    flush_word(&mut word, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmojiScan {
    pub emojis: Vec<String>,
    /// True when the message has at least one emoji and no alphanumeric text.
    pub emoji_only: bool,
}

pub fn emoji_sequences(text: &str) -> EmojiScan {
    let mut emojis = Vec::new();
    let mut has_text = false;
    for g in text.graphemes(true) {
        if is_emoji_grapheme(g) {
            emojis.push(g.to_string());
        } else if g.chars().any(char::is_alphanumeric) {
            has_text = true;
        }
    }
    let emoji_only = !emojis.is_empty() && !has_text;
    EmojiScan { emojis, emoji_only }
}

/// Fraction of messages consisting solely of emojis.
pub fn emoji_only_fraction<'a, I: IntoIterator<Item = &'a str>>(texts: I) -> f64 {
    let (mut n, mut only) = (0usize, 0usize);
    for t in texts {
        n += 1;
        if emoji_sequences(t).emoji_only {
            only += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        only as f64 / n as f64
    }
}
