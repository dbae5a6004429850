//! The sorting phase: buffer generated terms under a byte budget, spill
//! sorted and combined runs to disk, and k-way merge them back.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use crate::codec;
use crate::store::{RecordReader, RecordWriter};
use crate::term::{combine_sorted, compare_terms, Term};
use crate::Error;

/// Maximum number of runs merged in one pass.
pub const MAX_FAN_IN: usize = 64;

static RUN_SEQ: AtomicU64 = AtomicU64::new(0);

pub type TermStream<'a> = Box<dyn Iterator<Item = Result<Term, Error>> + 'a>;

#[derive(Debug, Clone)]
pub struct SortConfig {
    /// In-memory budget in serialized bytes; `None` never spills.
    pub capacity_bytes: Option<usize>,
    pub scratch_dir: PathBuf,
    pub keep_scratch: bool,
}

impl SortConfig {
    pub fn unbounded(scratch_dir: impl Into<PathBuf>) -> Self {
        SortConfig { capacity_bytes: None, scratch_dir: scratch_dir.into(), keep_scratch: false }
    }
}

/// A spilled, internally sorted and combined batch of terms.
#[derive(Debug)]
pub struct Run {
    pub path: PathBuf,
    pub count: u64,
    level: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SortStats {
    pub pushed: u64,
    pub runs_written: u64,
    pub peak_resident_bytes: usize,
}

#[derive(Debug)]
pub struct SortBuffer {
    config: SortConfig,
    module: usize,
    worker: usize,
    entries: Vec<Term>,
    resident_bytes: usize,
    runs: Vec<Run>,
    stats: SortStats,
}

impl SortBuffer {
    pub fn new(config: SortConfig, module: usize, worker: usize) -> Self {
        SortBuffer {
            config,
            module,
            worker,
            entries: Vec::new(),
            resident_bytes: 0,
            runs: Vec::new(),
            stats: SortStats::default(),
        }
    }

    pub fn stats(&self) -> SortStats {
        self.stats
    }

    pub fn resident_bytes(&self) -> usize {
        self.resident_bytes
    }

    pub fn run_count(&self) -> usize {
        self.runs.len()
    }

    pub fn push(&mut self, term: Term) -> Result<(), Error> {
        self.stats.pushed += 1;
        let size = codec::encoded_len(&term);
        if let Some(cap) = self.config.capacity_bytes {
            if self.resident_bytes + size > cap {
                self.spill()?;
                if size > cap {
                    // never resident: goes straight to a one-record run
                    if term.is_zero() {
                        return Ok(());
                    }
                    return self.write_run(std::iter::once(term), 0);
                }
            }
        }
        self.entries.push(term);
        self.resident_bytes += size;
        self.stats.peak_resident_bytes = self.stats.peak_resident_bytes.max(self.resident_bytes);
        Ok(())
    }

    fn sorted_batch(&mut self) -> Vec<Term> {
        let mut batch = std::mem::take(&mut self.entries);
        self.resident_bytes = 0;
        batch.sort_by(compare_terms);
        combine_sorted(batch)
    }

    fn spill(&mut self) -> Result<(), Error> {
        if self.entries.is_empty() {
            return Ok(());
        }
        let batch = self.sorted_batch();
        self.write_run(batch.into_iter(), 0)
    }

    fn next_run_path(&self) -> PathBuf {
        let seq = RUN_SEQ.fetch_add(1, AtomicOrdering::Relaxed);
        self.config.scratch_dir.join(format!("run-{}-{}-{}.tfr", self.module, self.worker, seq))
    }

    fn write_run(&mut self, terms: impl Iterator<Item = Term>, level: u32) -> Result<(), Error> {
        let path = self.next_run_path();
        let mut w = RecordWriter::create(&path)?;
        for t in terms {
            w.push(&t)?;
        }
        let (count, _, _) = w.finish()?;
        if count == 0 {
            fs::remove_file(&path)?;
        } else {
            self.stats.runs_written += 1;
            self.runs.push(Run { path, count, level });
            self.compact()?;
        }
        Ok(())
    }

    /// Tiered compaction: `MAX_FAN_IN` runs of one level merge into a run
    /// of the next level.
    fn compact(&mut self) -> Result<(), Error> {
        loop {
            let n = self.runs.len();
            if n < MAX_FAN_IN {
                return Ok(());
            }
            let level = self.runs[n - 1].level;
            if !self.runs[n - MAX_FAN_IN..].iter().all(|r| r.level == level) {
                return Ok(());
            }
            self.merge_tail(MAX_FAN_IN, level + 1)?;
        }
    }

    fn merge_tail(&mut self, k: usize, level: u32) -> Result<(), Error> {
        let tail: Vec<Run> = self.runs.split_off(self.runs.len() - k);
        let path = self.next_run_path();
        let mut w = RecordWriter::create(&path)?;
        {
            let streams = open_runs(&tail)?;
            for t in merge_streams(streams) {
                w.push(&t?)?;
            }
        }
        let (count, _, _) = w.finish()?;
        for r in &tail {
            self.discard(&r.path);
        }
        if count == 0 {
            fs::remove_file(&path)?;
        } else {
            self.stats.runs_written += 1;
            self.runs.push(Run { path, count, level });
        }
        Ok(())
    }

    fn discard(&self, path: &Path) {
        if !self.config.keep_scratch {
            let _ = fs::remove_file(path);
        }
    }

    /// Merges every run and the resident batch into one sorted, combined
    /// stream. Run files are removed when the stream is dropped.
    pub fn finalize(mut self) -> Result<SortedStream, Error> {
        while self.runs.len() > MAX_FAN_IN {
            let level = self.runs.last().map(|r| r.level).unwrap_or(0);
            self.merge_tail(MAX_FAN_IN, level + 1)?;
        }
        let batch = self.sorted_batch();
        let runs = std::mem::take(&mut self.runs);
        let mut streams = open_runs(&runs)?;
        streams.push(Box::new(batch.into_iter().map(Ok)));
        Ok(SortedStream {
            inner: merge_streams(streams),
            paths: runs.into_iter().map(|r| r.path).collect(),
            keep: self.config.keep_scratch,
            stats: self.stats,
        })
    }
}

fn open_runs(runs: &[Run]) -> Result<Vec<TermStream<'static>>, Error> {
    runs.iter()
        .map(|r| Ok(Box::new(RecordReader::open(&r.path)?) as TermStream<'static>))
        .collect()
}

/// Final merged output of a [`SortBuffer`].
pub struct SortedStream {
    inner: MergeStream<'static>,
    paths: Vec<PathBuf>,
    keep: bool,
    stats: SortStats,
}

impl SortedStream {
    pub fn stats(&self) -> SortStats {
        self.stats
    }
}

impl Iterator for SortedStream {
    type Item = Result<Term, Error>;
    fn next(&mut self) -> Option<Self::Item> {
        self.inner.next()
    }
}

impl Drop for SortedStream {
    fn drop(&mut self) {
        if !self.keep {
            for p in &self.paths {
                let _ = fs::remove_file(p);
            }
        }
    }
}

struct HeapItem {
    term: Term,
    stream: usize,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        compare_terms(&self.term, &other.term).then(self.stream.cmp(&other.stream))
    }
}

/// Heap-based k-way merge that combines equal keys and drops zero sums.
/// Each input must be strictly ascending; a violation is a hard error.
pub struct MergeStream<'a> {
    streams: Vec<TermStream<'a>>,
    last: Vec<Option<Term>>,
    heap: BinaryHeap<Reverse<HeapItem>>,
    started: bool,
    failed: bool,
}

pub fn merge_streams<'a>(streams: Vec<TermStream<'a>>) -> MergeStream<'a> {
    let n = streams.len();
    MergeStream { streams, last: vec![None; n], heap: BinaryHeap::with_capacity(n), started: false, failed: false }
}

impl MergeStream<'_> {
    fn refill(&mut self, i: usize) -> Result<(), Error> {
        match self.streams[i].next() {
            None => Ok(()),
            Some(Err(e)) => Err(e),
            Some(Ok(t)) => {
                if let Some(prev) = &self.last[i] {
                    if compare_terms(prev, &t) != Ordering::Less {
                        return Err(Error::Order(format!("merge input stream {i} is not strictly ascending")));
                    }
                }
                self.last[i] = Some(t.clone());
                self.heap.push(Reverse(HeapItem { term: t, stream: i }));
                Ok(())
            }
        }
    }

    fn step(&mut self) -> Result<Option<Term>, Error> {
        if !self.started {
            self.started = true;
            for i in 0..self.streams.len() {
                self.refill(i)?;
            }
        }
        loop {
            let Some(Reverse(first)) = self.heap.pop() else {
                return Ok(None);
            };
            self.refill(first.stream)?;
            let mut acc = first.term;
            while let Some(Reverse(top)) = self.heap.peek() {
                if top.term.key != acc.key {
                    break;
                }
                let Reverse(next) = self.heap.pop().expect("peeked");
                acc.coeff = &acc.coeff + &next.term.coeff;
                self.refill(next.stream)?;
            }
            if !acc.is_zero() {
                return Ok(Some(acc));
            }
        }
    }
}

impl Iterator for MergeStream<'_> {
    type Item = Result<Term, Error>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.step() {
            Ok(t) => t.map(Ok),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}
