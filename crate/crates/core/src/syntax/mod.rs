// SPDX-License-Identifier: Apache-2.0

//! Surface language: abstract syntax, parser and pretty-printer.

pub mod ast;
mod lexer;
mod parser;
mod pretty;

pub use ast::*;
pub use parser::{is_keyword, parse_behaviour, parse_expr, parse_program};
pub use pretty::pretty;
