use std::collections::BTreeSet;

const DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords.txt");

/// A token with its position in the token stream and its byte span in the
/// source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub position: u32,
    pub start: usize,
    pub end: usize,
}

/// Lowercasing tokenizer that splits on non-alphanumeric characters.
///
/// Stopwords are removed but still consume a position, so two words separated
/// by a stopword are never adjacent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenizer {
    stopwords: BTreeSet<String>,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer::new(parse_stopword_list(DEFAULT_STOPWORDS))
    }
}

/// Parses a stopword file: one word per line, `#` starts a comment.
pub fn parse_stopword_list(text: &str) -> Vec<String> {
    text.lines()
        .map(|line| line.split('#').next().unwrap_or("").trim().to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

impl Tokenizer {
    pub fn new<I, S>(stopwords: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Tokenizer {
            stopwords: stopwords
                .into_iter()
                .map(|s| s.as_ref().to_lowercase())
                .collect(),
        }
    }

    /// A tokenizer that keeps every word.
    pub fn without_stopwords() -> Self {
        Tokenizer {
            stopwords: BTreeSet::new(),
        }
    }

    pub fn stopwords(&self) -> impl Iterator<Item = &str> {
        self.stopwords.iter().map(String::as_str)
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(word)
    }

    pub fn tokenize(&self, text: &str) -> Vec<Token> {
        self.tokenize_from(text, 0)
    }

    /// Tokenizes with positions starting at `first_position`.
    pub fn tokenize_from(&self, text: &str, first_position: u32) -> Vec<Token> {
        let mut out = Vec::new();
        let mut position = first_position;
        let mut start: Option<usize> = None;
        let mut push = |s: usize, e: usize, position: &mut u32| {
            let word = text[s..e].to_lowercase();
            if !self.stopwords.contains(&word) {
                out.push(Token {
                    text: word,
                    position: *position,
                    start: s,
                    end: e,
                });
            }
            *position += 1;
        };
        for (i, ch) in text.char_indices() {
            if ch.is_alphanumeric() {
                if start.is_none() {
                    start = Some(i);
                }
            } else if let Some(s) = start.take() {
                push(s, i, &mut position);
            }
        }
        if let Some(s) = start {
            push(s, text.len(), &mut position);
        }
        out
    }

    /// Token texts only, in order.
    pub fn terms(&self, text: &str) -> Vec<String> {
        self.tokenize(text).into_iter().map(|t| t.text).collect()
    }

    /// Number of positions `text` occupies, stopwords included.
    pub fn position_span(&self, text: &str) -> u32 {
        Tokenizer::without_stopwords().tokenize(text).len() as u32
    }
}
