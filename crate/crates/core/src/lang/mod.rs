//! Front end for termforge source: lexing, parsing and compilation into a
//! resolved [`Program`].

mod compile;
mod lexer;
mod parser;

use std::fmt;

pub use compile::compile;
pub use lexer::{lex, DotInstruction as Terminator, Keyword, Token, TokenKind};
pub use parser::{parse, ExprAst, ModuleAst, ProgramAst, Relation, StmtAst, StmtKind};

use crate::term::{Expression, SymbolId};

/// The two-module example program: introduce `a*x + x^2`, substitute
/// `x -> a + b`, then multiply the terms that are linear in `b` by `4a/b`.
pub const FIG1_SOURCE: &str = "\
Symbols a, b, x;
Local expr = a*x + x^2;
id x = a + b;
.sort
if (degree(b) == 1) multiply 4*a/b;
.end
";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Location {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{loc}: {message}")]
pub struct LangError {
    pub loc: Location,
    pub message: String,
}

impl LangError {
    pub fn new(loc: Location, message: impl Into<String>) -> Self {
        LangError { loc, message: message.into() }
    }
}

/// A compiled statement. Literal expressions are canonical and sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Statement {
    DeclareSymbols(Vec<SymbolId>),
    DefineLocal { name: String, value: Expression },
    Substitute { target: SymbolId, rhs: Expression },
    IfDegree { symbol: SymbolId, relation: Relation, value: i64, body: Vec<Statement> },
    Multiply(Expression),
    Print(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Module {
    pub statements: Vec<Statement>,
    pub terminator: Terminator,
}

impl Module {
    /// Names printed at the end of this module, in statement order.
    pub fn prints(&self) -> impl Iterator<Item = &str> {
        self.statements.iter().filter_map(|s| match s {
            Statement::Print(n) => Some(n.as_str()),
            _ => None,
        })
    }

    /// Statements that act on individual terms.
    pub fn term_statements(&self) -> impl Iterator<Item = &Statement> {
        self.statements.iter().filter(|s| {
            matches!(s, Statement::Substitute { .. } | Statement::IfDegree { .. } | Statement::Multiply(_))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub symbols: Vec<String>,
    pub expressions: Vec<String>,
    pub modules: Vec<Module>,
}

impl Program {
    /// `(name, literal)` for every `Local` definition, in declaration order.
    pub fn initial_expressions(&self) -> Vec<(String, Expression)> {
        self.modules
            .first()
            .map(|m| {
                m.statements
                    .iter()
                    .filter_map(|s| match s {
                        Statement::DefineLocal { name, value } => Some((name.clone(), value.clone())),
                        _ => None,
                    })
                    .collect()
            })
            .unwrap_or_default()
    }
}

/// Lexes, parses and compiles `source`.
pub fn compile_source(source: &str) -> Result<Program, LangError> {
    compile(&parse(&lex(source)?)?)
}
