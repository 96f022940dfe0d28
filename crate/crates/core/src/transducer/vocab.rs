use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::{Error, Result};

/// Index of the blank symbol.
pub const BLANK: usize = 0;

/// Ordered symbol table; entry 0 is the blank.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<String>,
}

impl Vocabulary {
    pub fn new(symbols: Vec<String>) -> Result<Self> {
        if symbols.len() < 2 {
            return Err(Error::Vocabulary(
                "need a blank plus at least one symbol".into(),
            ));
        }
        for (i, s) in symbols.iter().enumerate() {
            if s.is_empty() || s.chars().any(char::is_whitespace) {
                return Err(Error::Vocabulary(alloc::format!(
                    "symbol {i} is empty or contains whitespace"
                )));
            }
            if symbols[..i].contains(s) {
                return Err(Error::Vocabulary(alloc::format!("duplicate symbol {s}")));
            }
        }
        Ok(Self { symbols })
    }

    /// Blank followed by `words`.
    pub fn with_blank(blank: &str, words: &[&str]) -> Result<Self> {
        let mut symbols = alloc::vec![blank.to_string()];
        symbols.extend(words.iter().map(|w| w.to_string()));
        Self::new(symbols)
    }

    /// One symbol per line; the line number is the index.
    pub fn from_lines(text: &str) -> Result<Self> {
        Self::new(
            text.lines()
                .map(|l| l.trim_end_matches('\r').to_string())
                .collect(),
        )
    }

    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for s in &self.symbols {
            out.push_str(s);
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbol(&self, id: usize) -> Option<&str> {
        self.symbols.get(id).map(String::as_str)
    }

    pub fn id(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }

    /// Whitespace-separated transcript to target ids (never blank).
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.split_whitespace()
            .map(|w| match self.id(w) {
                Some(BLANK) | None => {
                    Err(Error::Vocabulary(alloc::format!("unknown symbol {w:?}")))
                }
                Some(i) => Ok(i),
            })
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        let words: Vec<&str> = ids.iter().filter_map(|&i| self.symbol(i)).collect();
        words.join(" ")
    }

    /// Checks that every id is a non-blank symbol.
    pub fn check_targets(&self, ids: &[usize]) -> Result<()> {
        check_targets(ids, self.len())
    }
}

pub(crate) fn check_targets(ids: &[usize], vocab: usize) -> Result<()> {
    match ids.iter().find(|&&i| i == BLANK || i >= vocab) {
        Some(bad) => Err(Error::Vocabulary(alloc::format!(
            "target id {bad} is blank or outside [1, {}]",
            vocab - 1
        ))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_lines_and_text() {
        let v = Vocabulary::with_blank("<b>", &["a", "b"]).unwrap();
        assert_eq!(Vocabulary::from_lines(&v.to_lines()).unwrap(), v);
        assert_eq!(v.encode("b a").unwrap(), alloc::vec![2, 1]);
        assert_eq!(v.decode(&[2, 1]), "b a");
    }

    #[test]
    fn blank_and_unknown_are_not_targets() {
        let v = Vocabulary::with_blank("<b>", &["a"]).unwrap();
        assert!(v.encode("<b>").is_err());
        assert!(v.encode("zzz").is_err());
        assert!(v.check_targets(&[0]).is_err());
        assert!(v.check_targets(&[2]).is_err());
    }
}
