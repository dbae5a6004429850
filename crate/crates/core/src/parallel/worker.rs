//! Worker side of the protocol.
//!
//! States: waiting for INIT, idle between modules, and inside a module.
//! Any message that is not legal in the current state is answered with
//! ERROR and ends the worker.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use super::transport::Endpoint;
use super::wire::{InitPayload, WireMessage, WorkerStats, ERR_IO, ERR_MALFORMED, ERR_PROTOCOL, ERR_RUNTIME};
use crate::engine::TermPipeline;
use crate::lang::Program;
use crate::sorter::{SortBuffer, SortConfig};
use crate::store::{RecordReader, RecordWriter};
use crate::Error;

/// Terms per CHUNK frame when sending a sorted run back.
pub const RETURN_BATCH: usize = 1024;

#[derive(Debug, Clone)]
pub struct WorkerConfig {
    pub id: usize,
    pub scratch: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkerExit {
    Shutdown,
    /// The master went away without SHUTDOWN.
    Disconnected,
}

struct Session {
    init: InitPayload,
}

struct ModuleWork {
    module: usize,
    pipeline: TermPipeline,
    sorter: SortBuffer,
    generate_time: Duration,
    sort_time: Duration,
}

enum State {
    AwaitInit,
    Idle(Session),
    InModule(Session, Box<ModuleWork>),
}

fn error_code(e: &Error) -> u16 {
    match e {
        Error::Runtime(_) | Error::Order(_) | Error::Config(_) => ERR_RUNTIME,
        Error::Io(_) | Error::Corrupt(_) | Error::NotFound(_) => ERR_IO,
        _ => ERR_PROTOCOL,
    }
}

/// Serves one master until SHUTDOWN or disconnect.
pub fn worker_loop(mut ep: Endpoint, config: &WorkerConfig) -> Result<WorkerExit, Error> {
    let mut state = State::AwaitInit;
    loop {
        let frame = match ep.receiver.recv_frame()? {
            Some(f) => f,
            None => return Ok(WorkerExit::Disconnected),
        };
        let msg = match WireMessage::decode(&frame) {
            Ok(m) => m,
            Err(e) => {
                let _ = ep.send(&WireMessage::Error { code: ERR_MALFORMED, message: e.to_string() });
                return Err(e);
            }
        };
        match step(state, msg, &mut ep, config) {
            Ok(Some(next)) => state = next,
            Ok(None) => return Ok(WorkerExit::Shutdown),
            Err(e) => {
                let _ = ep.send(&WireMessage::Error { code: error_code(&e), message: e.to_string() });
                return Err(e);
            }
        }
    }
}

fn illegal(msg: &WireMessage, state: &str) -> Error {
    Error::Protocol(format!("{} is not allowed while {state}", msg.name()))
}

fn step(state: State, msg: WireMessage, ep: &mut Endpoint, config: &WorkerConfig) -> Result<Option<State>, Error> {
    if msg == WireMessage::Shutdown {
        return Ok(None);
    }
    match state {
        State::AwaitInit => match msg {
            WireMessage::Init(init) => {
                std::fs::create_dir_all(&config.scratch)?;
                Ok(Some(State::Idle(Session { init: *init })))
            }
            other => Err(illegal(&other, "waiting for INIT")),
        },
        State::Idle(session) => match msg {
            WireMessage::BeginModule { module, expression } => {
                let program = &session.init.program;
                let (module, expression) = (module as usize, expression as usize);
                if module >= program.modules.len() || expression >= program.expressions.len() {
                    return Err(Error::Protocol(format!("BEGIN_MODULE {module}/{expression} out of range")));
                }
                let work = begin(&session, program, module, config);
                Ok(Some(State::InModule(session, Box::new(work))))
            }
            other => Err(illegal(&other, "idle")),
        },
        State::InModule(session, mut work) => match msg {
            WireMessage::Chunk(terms) => {
                let known = session.init.program.symbols.len();
                if terms.iter().any(|t| t.key.factors().iter().any(|f| f.0.index() >= known)) {
                    return Err(Error::Protocol("CHUNK term uses an undeclared symbol".into()));
                }
                let ModuleWork { pipeline, sorter, generate_time, sort_time, .. } = &mut *work;
                let start = Instant::now();
                let mut push_time = Duration::ZERO;
                for t in terms {
                    pipeline.generate(t, &mut |out| {
                        let at = Instant::now();
                        let r = sorter.push(out);
                        push_time += at.elapsed();
                        r
                    })?;
                }
                *generate_time += start.elapsed().saturating_sub(push_time);
                *sort_time += push_time;
                ep.send(&WireMessage::Ready)?;
                Ok(Some(State::InModule(session, work)))
            }
            WireMessage::ChunksDone => {
                finish(*work, ep, config)?;
                Ok(Some(State::Idle(session)))
            }
            other => Err(illegal(&other, "inside a module")),
        },
    }
}

fn begin(session: &Session, program: &Program, module: usize, config: &WorkerConfig) -> ModuleWork {
    let sort_cfg = SortConfig {
        capacity_bytes: session.init.sort_memory.map(|m| usize::try_from(m).unwrap_or(usize::MAX)),
        scratch_dir: config.scratch.clone(),
        keep_scratch: session.init.keep_scratch,
    };
    ModuleWork {
        module,
        pipeline: TermPipeline::new(&program.modules[module], &program.symbols),
        sorter: SortBuffer::new(sort_cfg, module, config.id + 1),
        generate_time: Duration::ZERO,
        sort_time: Duration::ZERO,
    }
}

/// Sorts what this worker generated and streams it back: RUN_HEADER, the
/// records in CHUNK frames, then WORKER_STATS.
fn finish(work: ModuleWork, ep: &mut Endpoint, config: &WorkerConfig) -> Result<(), Error> {
    let at = Instant::now();
    let stream = work.sorter.finalize()?;
    let sort_stats = stream.stats();
    let path = config.scratch.join(format!("out-{}-{}.tfr", work.module, config.id + 1));
    let mut writer = RecordWriter::create(&path)?;
    let written = (|| {
        for t in stream {
            writer.push(&t?)?;
        }
        Ok::<_, Error>(writer.finish()?.0)
    })();
    let sort_time = work.sort_time + at.elapsed();
    let sent = written.and_then(|count| {
        ep.send(&WireMessage::RunHeader { count })?;
        let mut batch = Vec::with_capacity(RETURN_BATCH);
        for t in RecordReader::open(&path)? {
            batch.push(t?);
            if batch.len() == RETURN_BATCH {
                ep.send(&WireMessage::Chunk(std::mem::take(&mut batch)))?;
            }
        }
        if !batch.is_empty() {
            ep.send(&WireMessage::Chunk(batch))?;
        }
        Ok(())
    });
    let _ = std::fs::remove_file(&path);
    sent?;
    let p = work.pipeline.stats();
    ep.send(&WireMessage::WorkerStats(WorkerStats {
        input_terms: p.input_terms,
        generated_terms: p.generated_terms,
        generate_nanos: work.generate_time.as_nanos() as u64,
        sort_nanos: sort_time.as_nanos() as u64,
        peak_resident_bytes: sort_stats.peak_resident_bytes as u64,
        peak_live_terms: p.peak_live_terms as u64,
    }))
}
