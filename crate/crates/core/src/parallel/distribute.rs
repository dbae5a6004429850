//! Chunk dealing: the master hands fixed-size chunks of an input stream to
//! whichever worker becomes idle first.

use crate::term::Term;
use crate::Error;

pub trait WorkerPool {
    /// Blocks until some worker can take a chunk.
    fn next_idle(&mut self) -> Result<usize, Error>;
    fn deliver(&mut self, worker: usize, chunk: Vec<Term>) -> Result<(), Error>;
}

/// Which worker got each chunk, in dealing order, with chunk sizes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssignmentLog {
    pub assignments: Vec<(usize, usize)>,
}

impl AssignmentLog {
    pub fn chunks_per_worker(&self, workers: usize) -> Vec<u64> {
        let mut v = vec![0; workers];
        for &(w, _) in &self.assignments {
            v[w] += 1;
        }
        v
    }

    pub fn total_terms(&self) -> u64 {
        self.assignments.iter().map(|&(_, n)| n as u64).sum()
    }
}

/// Deals `terms` in chunks of at most `chunk_size`, preserving order inside
/// each chunk. An empty input deals nothing.
pub fn distribute_chunks<I>(terms: I, chunk_size: usize, pool: &mut dyn WorkerPool) -> Result<AssignmentLog, Error>
where
    I: IntoIterator<Item = Result<Term, Error>>,
{
    if chunk_size == 0 {
        return Err(Error::Config("chunk size must be positive".into()));
    }
    let mut log = AssignmentLog::default();
    let mut chunk = Vec::with_capacity(chunk_size.min(4096));
    let mut terms = terms.into_iter();
    loop {
        let next = terms.next().transpose()?;
        let done = next.is_none();
        if let Some(t) = next {
            chunk.push(t);
            if chunk.len() < chunk_size {
                continue;
            }
        }
        if chunk.is_empty() {
            break;
        }
        let w = pool.next_idle()?;
        log.assignments.push((w, chunk.len()));
        pool.deliver(w, std::mem::replace(&mut chunk, Vec::with_capacity(chunk_size.min(4096))))?;
        if done {
            break;
        }
    }
    Ok(log)
}
