//! The generating phase: run a module's statements on one term at a time and
//! stream every produced term to a sink.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::lang::{Module, Relation, Statement};
use crate::sorter::{SortBuffer, SortedStream};
use crate::term::{multiply_terms, power_expression, Expression, SymbolId, Term};
use crate::Error;

#[derive(Debug, Clone)]
enum Op {
    Substitute { target: SymbolId, rhs: Expression },
    Multiply(Arc<[Term]>),
    /// Falls through to the next op when the condition holds, otherwise
    /// skips the following `skip` ops.
    Gate { symbol: SymbolId, relation: Relation, value: i64, skip: usize },
}

fn flatten(statements: &[Statement], ops: &mut Vec<Op>) {
    for s in statements {
        match s {
            Statement::Substitute { target, rhs } => ops.push(Op::Substitute { target: *target, rhs: rhs.clone() }),
            Statement::Multiply(e) => ops.push(Op::Multiply(e.terms.clone().into())),
            Statement::IfDegree { symbol, relation, value, body } => {
                let at = ops.len();
                ops.push(Op::Gate { symbol: *symbol, relation: *relation, value: *value, skip: 0 });
                flatten(body, ops);
                let skip = ops.len() - at - 1;
                if let Op::Gate { skip: s, .. } = &mut ops[at] {
                    *s = skip;
                }
            }
            Statement::DeclareSymbols(_) | Statement::DefineLocal { .. } | Statement::Print(_) => {}
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PipelineStats {
    pub input_terms: u64,
    pub generated_terms: u64,
    /// Most terms alive at once on the generation path.
    pub peak_live_terms: usize,
}

/// Executes one compiled module term by term. Nothing observed while
/// processing one input term carries over to the next; the only state kept
/// is a cache of expanded substitution powers.
pub struct TermPipeline {
    ops: Vec<Op>,
    symbols: Vec<String>,
    powers: HashMap<(usize, i64), Arc<[Term]>>,
    stats: PipelineStats,
}

impl TermPipeline {
    pub fn new(module: &Module, symbols: &[String]) -> Self {
        let mut ops = Vec::new();
        flatten(&module.statements, &mut ops);
        TermPipeline { ops, symbols: symbols.to_vec(), powers: HashMap::new(), stats: PipelineStats::default() }
    }

    pub fn stats(&self) -> PipelineStats {
        self.stats
    }

    /// Applies the module to `term`, emitting every output term to `sink`
    /// as soon as it is produced. Returns the number of emitted terms.
    pub fn generate(
        &mut self,
        term: Term,
        sink: &mut dyn FnMut(Term) -> Result<(), Error>,
    ) -> Result<u64, Error> {
        self.stats.input_terms += 1;
        let before = self.stats.generated_terms;
        self.step(0, term, 1, sink)?;
        Ok(self.stats.generated_terms - before)
    }

    fn power(&mut self, op: usize, n: i64) -> Arc<[Term]> {
        let Op::Substitute { rhs, .. } = &self.ops[op] else { unreachable!("not a substitution") };
        self.powers
            .entry((op, n))
            .or_insert_with(|| power_expression(rhs, n).expect("positive power").terms.into())
            .clone()
    }

    fn step(
        &mut self,
        pc: usize,
        term: Term,
        depth: usize,
        sink: &mut dyn FnMut(Term) -> Result<(), Error>,
    ) -> Result<(), Error> {
        self.stats.peak_live_terms = self.stats.peak_live_terms.max(depth);
        if term.is_zero() {
            return Ok(());
        }
        let Some(op) = self.ops.get(pc) else {
            self.stats.generated_terms += 1;
            return sink(term);
        };
        match op {
            Op::Gate { symbol, relation, value, skip } => {
                let next = if relation.holds(term.key.degree(*symbol), *value) { pc + 1 } else { pc + 1 + skip };
                self.step(next, term, depth, sink)
            }
            Op::Multiply(factor) => {
                let factor = factor.clone();
                for f in factor.iter() {
                    self.step(pc + 1, multiply_terms(&term, f), depth + 1, sink)?;
                }
                Ok(())
            }
            Op::Substitute { target, .. } => {
                let target = *target;
                let (n, rest) = term.key.split_off(target);
                if n == 0 {
                    return self.step(pc + 1, term, depth, sink);
                }
                if n < 0 {
                    return Err(Error::Runtime(format!(
                        "cannot substitute {} in term {}: negative power",
                        self.symbols.get(target.index()).map(String::as_str).unwrap_or("?"),
                        term.canonical_text(&self.symbols)
                    )));
                }
                let rest = Term::new(term.coeff, rest);
                let expanded = self.power(pc, n);
                for r in expanded.iter() {
                    self.step(pc + 1, multiply_terms(&rest, r), depth + 1, sink)?;
                }
                Ok(())
            }
        }
    }
}

/// Per-module counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ModuleStats {
    pub input_terms: u64,
    pub generated_terms: u64,
    pub generate_time: Duration,
    pub sort_time: Duration,
    pub merge_time: Duration,
    pub peak_live_terms: usize,
    pub peak_resident_bytes: usize,
}

/// Runs every input term through the pipeline into `sorter`, then returns
/// the sorter's merged stream.
pub fn run_module_sequential<I>(
    input: I,
    pipeline: &mut TermPipeline,
    mut sorter: SortBuffer,
) -> Result<(SortedStream, ModuleStats), Error>
where
    I: IntoIterator<Item = Result<Term, Error>>,
{
    let start = Instant::now();
    let mut push_time = Duration::ZERO;
    let mut generated = 0;
    let mut inputs = 0;
    for t in input {
        inputs += 1;
        generated += pipeline.generate(t?, &mut |out| {
            let at = Instant::now();
            let r = sorter.push(out);
            push_time += at.elapsed();
            r
        })?;
    }
    let generate_time = start.elapsed().saturating_sub(push_time);
    let at = Instant::now();
    let stream = sorter.finalize()?;
    let sort_time = push_time + at.elapsed();
    let stats = ModuleStats {
        input_terms: inputs,
        generated_terms: generated,
        generate_time,
        sort_time,
        merge_time: Duration::ZERO,
        peak_live_terms: pipeline.stats().peak_live_terms,
        peak_resident_bytes: stream.stats().peak_resident_bytes,
    };
    Ok((stream, stats))
}
