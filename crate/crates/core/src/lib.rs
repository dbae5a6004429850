//! termforge: a small term-stream algebra engine.
//!
//! Programs are split into modules. Each module is compiled, then every term
//! of every active expression is run through the module's statements
//! (generation), and the produced terms are sorted with equal monomials
//! summed (sorting). Because statements only ever look at one term, the
//! generation and sorting of a module can be spread over several workers
//! whose sorted outputs are merged at the end; [`parallel`] does exactly
//! that, and produces byte-identical stores to the sequential [`runner`].

pub mod bench;
pub mod cli;
pub mod codec;
pub mod engine;
pub mod lang;
pub mod oracle;
pub mod parallel;
pub mod runner;
pub mod sorter;
pub mod store;
pub mod term;

use std::io;

pub use engine::{run_module_sequential, ModuleStats, TermPipeline};
pub use lang::{compile_source, LangError, Program};
pub use oracle::oracle_expand;
pub use parallel::{run_program_parallel, ClusterConfig, TransportKind};
pub use runner::{run_program_sequential, RunConfig, RunObserver};
pub use sorter::{merge_streams, SortBuffer, SortConfig};
pub use store::ExpressionStore;
pub use term::{compare_terms, merge_like, multiply_terms, power_expression, Coefficient, Expression, Monomial, SymbolId, Term};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Lang(#[from] LangError),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("stream order violation: {0}")]
    Order(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt data: {0}")]
    Corrupt(String),
    #[error("expression not found: {0}")]
    NotFound(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("nondeterminism detected: {0}")]
    Nondeterminism(String),
}

impl Error {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Lang(_) => 1,
            Error::Runtime(_) | Error::Order(_) | Error::Config(_) => 2,
            Error::Protocol(_) | Error::Transport(_) => 3,
            Error::Io(_) | Error::Corrupt(_) | Error::NotFound(_) => 4,
            Error::Nondeterminism(_) => 5,
        }
    }
}

/// Exact coefficient arithmetic.
pub type Rational = num_rational::BigRational;
pub type Integer = num_bigint::BigInt;
