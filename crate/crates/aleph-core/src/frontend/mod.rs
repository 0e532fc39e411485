//! Concrete textual syntax: parser and printer for source terms.
//!
//! The grammar is parenthesized and keyword-first; every form starts with a
//! distinct keyword, so it is unambiguous without precedence rules. Source
//! files are UTF-8 text (conventionally `.aleph`); comments run from `;` to
//! the end of the line.

use std::fmt;

mod lexer;
mod parser;
mod printer;

pub use parser::{parse_program, parse_term};
pub use printer::{print_term, print_term_limited};

/// A parse or scope diagnostic, positioned in the input text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl Diagnostic {
    pub fn new(line: usize, col: usize, message: impl Into<String>) -> Diagnostic {
        Diagnostic {
            line,
            col,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}
