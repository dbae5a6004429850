//! Sequential program execution over an [`ExpressionStore`].

use std::io::{self, Write};
use std::path::PathBuf;
use std::time::Instant;

use crate::bench::{ModuleReport, RunReport};
use crate::engine::{run_module_sequential, TermPipeline};
use crate::lang::Program;
use crate::sorter::{SortBuffer, SortConfig};
use crate::store::ExpressionStore;
use crate::term::Term;
use crate::Error;

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Sort buffer budget in bytes; `None` for unbounded.
    pub sort_memory: Option<usize>,
    pub scratch: PathBuf,
    pub keep_scratch: bool,
}

/// Receives `print` output and end-of-module notifications.
pub trait RunObserver {
    fn output(&mut self) -> &mut dyn Write;

    fn module_finished(&mut self, _module: usize, _store: &ExpressionStore) -> Result<(), Error> {
        Ok(())
    }
}

/// Sends printed expressions to a writer.
pub struct PrintTo<W: Write>(pub W);

impl<W: Write> RunObserver for PrintTo<W> {
    fn output(&mut self) -> &mut dyn Write {
        &mut self.0
    }
}

/// Drops all output.
pub struct Silent(io::Sink);

impl Silent {
    pub fn new() -> Self {
        Silent(io::sink())
    }
}

impl Default for Silent {
    fn default() -> Self {
        Silent::new()
    }
}

impl RunObserver for Silent {
    fn output(&mut self) -> &mut dyn Write {
        &mut self.0
    }
}

/// Writes `name = <terms>;` followed by a newline, streaming the terms.
pub fn write_expression_text<I>(w: &mut dyn Write, name: &str, terms: I, symbols: &[String]) -> Result<(), Error>
where
    I: IntoIterator<Item = Result<Term, Error>>,
{
    write!(w, "{name} = ")?;
    let mut first = true;
    for t in terms {
        let t = t?;
        let neg = t.coeff.is_negative();
        let sep = match (first, neg) {
            (true, false) => "",
            (true, true) => "-",
            (false, false) => " + ",
            (false, true) => " - ",
        };
        write!(w, "{sep}{}", t.unsigned_text(symbols))?;
        first = false;
    }
    if first {
        write!(w, "0")?;
    }
    writeln!(w, ";")?;
    Ok(())
}

pub(crate) fn publish_initial(program: &Program, store: &mut ExpressionStore) -> Result<(), Error> {
    for (name, value) in program.initial_expressions() {
        store.write_expression(&name, value.terms.into_iter().map(Ok))?;
    }
    Ok(())
}

pub(crate) fn finish_module(
    program: &Program,
    module: usize,
    store: &ExpressionStore,
    observer: &mut dyn RunObserver,
) -> Result<(), Error> {
    for name in program.modules[module].prints() {
        let terms = store.read_expression(name)?;
        write_expression_text(observer.output(), name, terms, &program.symbols)?;
    }
    observer.output().flush()?;
    observer.module_finished(module, store)
}

/// Executes every module in-process on a single thread.
pub fn run_program_sequential(
    program: &Program,
    store: &mut ExpressionStore,
    config: &RunConfig,
    observer: &mut dyn RunObserver,
) -> Result<RunReport, Error> {
    let start = Instant::now();
    std::fs::create_dir_all(&config.scratch)?;
    publish_initial(program, store)?;
    let mut report = RunReport { workers: 1, modules: Vec::new(), total_time: Default::default() };
    for (index, module) in program.modules.iter().enumerate() {
        let mut mr = ModuleReport { module: index, ..Default::default() };
        for name in &program.expressions {
            let mut pipeline = TermPipeline::new(module, &program.symbols);
            let sort_cfg = SortConfig {
                capacity_bytes: config.sort_memory,
                scratch_dir: config.scratch.clone(),
                keep_scratch: config.keep_scratch,
            };
            let sorter = SortBuffer::new(sort_cfg, index, 0);
            let input = store.read_expression(name)?;
            let (stream, stats) = run_module_sequential(input, &mut pipeline, sorter)?;
            let at = Instant::now();
            let entry = store.write_expression(name, stream)?;
            mr.absorb(&stats);
            mr.merge_time += at.elapsed();
            mr.output_terms += entry.count;
        }
        mr.worker_busy = vec![mr.generate_time + mr.sort_time];
        report.modules.push(mr);
        finish_module(program, index, store, observer)?;
    }
    report.total_time = start.elapsed();
    Ok(report)
}
