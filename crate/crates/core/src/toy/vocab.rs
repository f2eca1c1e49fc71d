//! Closed vocabulary for the toy lab with a detokenizer that produces text
//! the trace parser understands.

use crate::triplet::SentimentLabel;

pub type TokenId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Eos,
    Tag,
    Punct,
    Word,
}

pub const EOS: &str = "<eos>";
pub const TAGS: [&str; 4] = ["<think>", "</think>", "<answer>", "</answer>"];
pub const PUNCT: [&str; 3] = ["(", ",", ")"];
pub const CUES: [&str; 2] = ["firstly", "therefore"];
pub const FILLER: [&str; 3] = ["the", "is", "was"];
pub const ASPECTS: [&str; 6] = ["food", "service", "staff", "price", "screen", "battery"];

pub fn opinions(label: SentimentLabel) -> [&'static str; 3] {
    match label {
        SentimentLabel::Positive => ["great", "tasty", "friendly"],
        SentimentLabel::Negative => ["terrible", "slow", "rude"],
        SentimentLabel::Neutral => ["okay", "average", "standard"],
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<&'static str>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        let mut symbols = vec![EOS];
        symbols.extend(TAGS);
        symbols.extend(PUNCT);
        symbols.extend(CUES);
        symbols.extend(SentimentLabel::ALL.iter().map(|l| l.as_str()));
        symbols.extend(ASPECTS);
        for label in SentimentLabel::ALL {
            symbols.extend(opinions(label));
        }
        symbols.extend(FILLER);
        Self { symbols }
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn eos(&self) -> TokenId {
        0
    }

    pub fn symbol(&self, id: TokenId) -> &'static str {
        self.symbols[id]
    }

    pub fn id(&self, symbol: &str) -> Option<TokenId> {
        self.symbols.iter().position(|s| *s == symbol)
    }

    pub fn kind(&self, id: TokenId) -> TokenKind {
        let s = self.symbols[id];
        if id == self.eos() {
            TokenKind::Eos
        } else if TAGS.contains(&s) {
            TokenKind::Tag
        } else if PUNCT.contains(&s) {
            TokenKind::Punct
        } else {
            TokenKind::Word
        }
    }

    pub fn encode(&self, symbols: &[&str]) -> Option<Vec<TokenId>> {
        symbols.iter().map(|s| self.id(s)).collect()
    }

    /// Tags and brackets are glued to their neighbours; words are separated
    /// by one space, as is the word after a comma. Rendering stops at EOS.
    pub fn render(&self, tokens: &[TokenId]) -> String {
        let mut out = String::new();
        let mut prev: Option<&str> = None;
        for &t in tokens {
            let kind = self.kind(t);
            if kind == TokenKind::Eos {
                break;
            }
            let sym = self.symbols[t];
            if kind == TokenKind::Word && prev.is_some_and(|p| p == "," || !(TAGS.contains(&p) || PUNCT.contains(&p))) {
                out.push(' ');
            }
            out.push_str(sym);
            prev = Some(sym);
        }
        out
    }
}
