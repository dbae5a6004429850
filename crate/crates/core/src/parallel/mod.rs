//! Master/worker execution.
//!
//! For every module and expression the master streams the stored terms out
//! in chunks, one outstanding chunk per worker, dealing the next chunk to
//! whichever worker reports READY first. At the end of the input each worker
//! sorts what it generated and returns it as one sorted run; the master
//! merges the runs into the store.

pub mod distribute;
pub mod transport;
pub mod wire;
pub mod worker;

use std::collections::VecDeque;
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crate::bench::{ModuleReport, RunReport};
use crate::lang::Program;
use crate::runner::{finish_module, publish_initial, RunObserver};
use crate::sorter::{merge_streams, TermStream};
use crate::store::{ExpressionStore, RecordReader, RecordWriter};
use crate::term::Term;
use crate::Error;

use distribute::{distribute_chunks, WorkerPool};
use transport::{in_process_pair, tcp_endpoint, Endpoint, FrameSender};
use wire::{InitPayload, WireMessage, WorkerStats, ERR_RUNTIME};
use worker::{worker_loop, WorkerConfig, WorkerExit};

pub const DEFAULT_CHUNK_SIZE: usize = 64;

/// How long the master waits for TCP workers it launched itself.
const CONNECT_TIMEOUT: Duration = Duration::from_secs(30);
/// How long it waits for externally started workers.
const EXTERNAL_CONNECT_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WorkerLaunch {
    /// Worker threads in this process, connected over loopback.
    Threads,
    /// `termforge-worker` processes started from the given binary.
    Processes(PathBuf),
    /// Wait for workers started by someone else.
    External,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportKind {
    InProcess,
    Tcp { listen: String, launch: WorkerLaunch },
}

#[derive(Debug, Clone)]
pub struct ClusterConfig {
    pub workers: usize,
    pub chunk_size: usize,
    pub transport: TransportKind,
    /// Master files go to `scratch/master`, worker `i` uses `scratch/worker-i`.
    pub scratch: PathBuf,
    /// Per-worker sort buffer budget in bytes; `None` for unbounded.
    pub sort_memory: Option<usize>,
    pub keep_scratch: bool,
}

impl ClusterConfig {
    pub fn new(workers: usize, scratch: impl Into<PathBuf>) -> Self {
        ClusterConfig {
            workers,
            chunk_size: DEFAULT_CHUNK_SIZE,
            transport: TransportKind::InProcess,
            scratch: scratch.into(),
            sort_memory: None,
            keep_scratch: false,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.workers == 0 {
            return Err(Error::Config("worker count must be at least 1".into()));
        }
        if self.chunk_size == 0 {
            return Err(Error::Config("chunk size must be at least 1".into()));
        }
        Ok(())
    }
}

type Event = (usize, Result<Option<Vec<u8>>, Error>);

enum Launched {
    Threads(Vec<JoinHandle<Result<WorkerExit, Error>>>),
    Processes(Vec<Child>),
    External,
}

struct Cluster {
    senders: Vec<Box<dyn FrameSender>>,
    events: mpsc::Receiver<Event>,
    launched: Launched,
}

fn worker_config(config: &ClusterConfig, id: usize) -> WorkerConfig {
    WorkerConfig { id, scratch: config.scratch.join(format!("worker-{id}")) }
}

fn accept_workers(listener: &TcpListener, count: usize, timeout: Duration) -> Result<Vec<Endpoint>, Error> {
    listener.set_nonblocking(true)?;
    let deadline = Instant::now() + timeout;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        match listener.accept() {
            Ok((stream, _)) => {
                stream.set_nonblocking(false)?;
                out.push(tcp_endpoint(stream)?);
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    return Err(Error::Transport(format!(
                        "only {} of {count} workers connected before the timeout",
                        out.len()
                    )));
                }
                std::thread::sleep(Duration::from_millis(5));
            }
            Err(e) => return Err(Error::Transport(format!("accept failed: {e}"))),
        }
    }
    Ok(out)
}

impl Cluster {
    fn start(config: &ClusterConfig) -> Result<Cluster, Error> {
        let p = config.workers;
        let (endpoints, launched) = match &config.transport {
            TransportKind::InProcess => {
                let mut eps = Vec::with_capacity(p);
                let mut handles = Vec::with_capacity(p);
                for id in 0..p {
                    let (master, worker) = in_process_pair();
                    let cfg = worker_config(config, id);
                    handles.push(std::thread::spawn(move || worker_loop(worker, &cfg)));
                    eps.push(master);
                }
                (eps, Launched::Threads(handles))
            }
            TransportKind::Tcp { listen, launch } => {
                let listener = TcpListener::bind(listen.as_str())
                    .map_err(|e| Error::Transport(format!("cannot listen on {listen}: {e}")))?;
                let addr = listener.local_addr()?;
                let (launched, timeout) = match launch {
                    WorkerLaunch::Threads => {
                        let handles = (0..p)
                            .map(|id| {
                                let cfg = worker_config(config, id);
                                std::thread::spawn(move || {
                                    let stream = TcpStream::connect(addr)
                                        .map_err(|e| Error::Transport(format!("connect to {addr}: {e}")))?;
                                    worker_loop(tcp_endpoint(stream)?, &cfg)
                                })
                            })
                            .collect();
                        (Launched::Threads(handles), CONNECT_TIMEOUT)
                    }
                    WorkerLaunch::Processes(binary) => {
                        let mut children = Vec::with_capacity(p);
                        for id in 0..p {
                            let cfg = worker_config(config, id);
                            let child = Command::new(binary)
                                .arg("--connect")
                                .arg(addr.to_string())
                                .arg("--scratch")
                                .arg(&cfg.scratch)
                                .stdin(Stdio::null())
                                .spawn()
                                .map_err(|e| Error::Transport(format!("cannot start {}: {e}", binary.display())));
                            match child {
                                Ok(c) => children.push(c),
                                Err(e) => {
                                    for mut c in children {
                                        let _ = c.kill();
                                        let _ = c.wait();
                                    }
                                    return Err(e);
                                }
                            }
                        }
                        (Launched::Processes(children), CONNECT_TIMEOUT)
                    }
                    WorkerLaunch::External => {
                        eprintln!("listening on {addr}, waiting for {p} workers");
                        (Launched::External, EXTERNAL_CONNECT_TIMEOUT)
                    }
                };
                match accept_workers(&listener, p, timeout) {
                    Ok(eps) => (eps, launched),
                    Err(e) => {
                        if let Launched::Processes(children) = launched {
                            for mut c in children {
                                let _ = c.kill();
                                let _ = c.wait();
                            }
                        }
                        return Err(e);
                    }
                }
            }
        };
        let (tx, events) = mpsc::channel();
        let mut senders = Vec::with_capacity(p);
        for (id, ep) in endpoints.into_iter().enumerate() {
            senders.push(ep.sender);
            let mut receiver = ep.receiver;
            let tx = tx.clone();
            std::thread::spawn(move || loop {
                let r = receiver.recv_frame();
                let stop = !matches!(r, Ok(Some(_)));
                if tx.send((id, r)).is_err() || stop {
                    break;
                }
            });
        }
        Ok(Cluster { senders, events, launched })
    }

    fn send(&mut self, worker: usize, msg: &WireMessage) -> Result<(), Error> {
        self.senders[worker]
            .send_frame(&msg.encode())
            .map_err(|e| Error::Transport(format!("worker {worker}: {e}")))
    }

    fn broadcast(&mut self, msg: &WireMessage) -> Result<(), Error> {
        let frame = msg.encode();
        for (w, s) in self.senders.iter_mut().enumerate() {
            s.send_frame(&frame).map_err(|e| Error::Transport(format!("worker {w}: {e}")))?;
        }
        Ok(())
    }

    /// Next decoded message from any worker. Disconnects and ERROR
    /// messages become errors here.
    fn next_message(&mut self) -> Result<(usize, WireMessage), Error> {
        let (w, r) = self
            .events
            .recv()
            .map_err(|_| Error::Transport("all workers disconnected".into()))?;
        let frame = match r {
            Ok(Some(f)) => f,
            Ok(None) => return Err(Error::Transport(format!("worker {w} disconnected"))),
            Err(e) => return Err(Error::Transport(format!("worker {w}: {e}"))),
        };
        match WireMessage::decode(&frame) {
            Ok(WireMessage::Error { code, message }) if code == ERR_RUNTIME => {
                Err(Error::Runtime(format!("worker {w}: {}", strip_class(&message))))
            }
            Ok(WireMessage::Error { message, .. }) => Err(Error::Protocol(format!("worker {w} reported: {message}"))),
            Ok(m) => Ok((w, m)),
            Err(e) => Err(Error::Protocol(format!("from worker {w}: {e}"))),
        }
    }

    /// Sends SHUTDOWN and waits for every worker. Worker failures are only
    /// reported when the run itself succeeded.
    fn shutdown(mut self, clean: bool) -> Result<(), Error> {
        let frame = WireMessage::Shutdown.encode();
        for s in &mut self.senders {
            let _ = s.send_frame(&frame);
        }
        self.senders.clear();
        let mut first_err = None;
        match std::mem::replace(&mut self.launched, Launched::External) {
            Launched::Threads(handles) => {
                for h in handles {
                    match h.join() {
                        Ok(Ok(_)) => {}
                        Ok(Err(e)) => {
                            first_err.get_or_insert(e);
                        }
                        Err(_) => {
                            first_err.get_or_insert(Error::Runtime("worker thread panicked".into()));
                        }
                    }
                }
            }
            Launched::Processes(children) => {
                for mut c in children {
                    match c.wait() {
                        Ok(status) if status.success() => {}
                        Ok(status) => {
                            first_err.get_or_insert(Error::Transport(format!("worker process exited with {status}")));
                        }
                        Err(e) => {
                            first_err.get_or_insert(e.into());
                        }
                    }
                }
            }
            Launched::External => {}
        }
        match first_err {
            Some(e) if clean => Err(e),
            _ => Ok(()),
        }
    }
}

fn strip_class(message: &str) -> &str {
    message.strip_prefix("runtime error: ").unwrap_or(message)
}

enum Phase {
    Working,
    Receiving { expected: u64, writer: RecordWriter },
    AwaitStats,
    Done(WorkerStats),
}

struct Slot {
    outstanding: bool,
    done_sent: bool,
    phase: Phase,
    run_path: PathBuf,
    returned: u64,
}

/// Master-side state for one (module, expression) pass.
struct Pass<'c> {
    cluster: &'c mut Cluster,
    slots: Vec<Slot>,
    idle: VecDeque<usize>,
    exhausted: bool,
}

impl Pass<'_> {
    fn handle(&mut self) -> Result<(), Error> {
        let (w, msg) = self.cluster.next_message()?;
        let unexpected = |msg: &WireMessage| Error::Protocol(format!("unexpected {} from worker {w}", msg.name()));
        let slot = &mut self.slots[w];
        match (msg, &mut slot.phase) {
            (WireMessage::Ready, Phase::Working) if slot.outstanding => {
                slot.outstanding = false;
                if self.exhausted {
                    slot.done_sent = true;
                    self.cluster.send(w, &WireMessage::ChunksDone)?;
                } else {
                    self.idle.push_back(w);
                }
            }
            (WireMessage::RunHeader { count }, Phase::Working) if slot.done_sent => {
                let writer = RecordWriter::create(&slot.run_path)?;
                slot.phase = Phase::Receiving { expected: count, writer };
                if count == 0 {
                    self.close_run(w)?;
                }
            }
            (WireMessage::Chunk(terms), Phase::Receiving { expected, writer }) => {
                if writer.count() + terms.len() as u64 > *expected {
                    return Err(Error::Protocol(format!("worker {w} returned more terms than announced")));
                }
                for t in &terms {
                    writer.push(t).map_err(|e| Error::Protocol(format!("run from worker {w}: {e}")))?;
                }
                slot.returned += terms.len() as u64;
                if writer.count() == *expected {
                    self.close_run(w)?;
                }
            }
            (WireMessage::WorkerStats(s), Phase::AwaitStats) => slot.phase = Phase::Done(s),
            (msg, _) => return Err(unexpected(&msg)),
        }
        Ok(())
    }

    fn close_run(&mut self, w: usize) -> Result<(), Error> {
        if let Phase::Receiving { writer, .. } = std::mem::replace(&mut self.slots[w].phase, Phase::AwaitStats) {
            writer.finish()?;
        }
        Ok(())
    }

    fn all_done(&self) -> bool {
        self.slots.iter().all(|s| matches!(s.phase, Phase::Done(_)))
    }
}

impl WorkerPool for Pass<'_> {
    fn next_idle(&mut self) -> Result<usize, Error> {
        loop {
            if let Some(w) = self.idle.pop_front() {
                return Ok(w);
            }
            self.handle()?;
        }
    }

    fn deliver(&mut self, worker: usize, chunk: Vec<Term>) -> Result<(), Error> {
        self.slots[worker].outstanding = true;
        self.cluster.send(worker, &WireMessage::Chunk(chunk))
    }
}

fn run_pass(
    cluster: &mut Cluster,
    store: &mut ExpressionStore,
    config: &ClusterConfig,
    master_dir: &Path,
    module: usize,
    expression: (usize, &str),
    report: &mut ModuleReport,
) -> Result<(), Error> {
    let (index, name) = expression;
    let p = config.workers;
    cluster.broadcast(&WireMessage::BeginModule { module: module as u32, expression: index as u32 })?;
    let mut pass = Pass {
        cluster,
        slots: (0..p)
            .map(|w| Slot {
                outstanding: false,
                done_sent: false,
                phase: Phase::Working,
                run_path: master_dir.join(format!("run-{module}-{}-{index}.tfr", w + 1)),
                returned: 0,
            })
            .collect(),
        idle: (0..p).collect(),
        exhausted: false,
    };
    let input_count = store.entry(name).map(|e| e.count).unwrap_or(0);
    let input = store.read_expression(name)?;
    let log = distribute_chunks(input, config.chunk_size, &mut pass)?;
    pass.exhausted = true;
    while let Some(w) = pass.idle.pop_front() {
        pass.slots[w].done_sent = true;
        pass.cluster.send(w, &WireMessage::ChunksDone)?;
    }
    while !pass.all_done() {
        pass.handle()?;
    }

    let stats: Vec<WorkerStats> = pass
        .slots
        .iter()
        .map(|s| match s.phase {
            Phase::Done(st) => st,
            _ => unreachable!(),
        })
        .collect();
    let reported: u64 = stats.iter().map(|s| s.input_terms).sum();
    if log.total_terms() != input_count || reported != input_count {
        return Err(Error::Protocol(format!(
            "delivery mismatch for {name}: stored {input_count}, dealt {}, workers saw {reported}",
            log.total_terms()
        )));
    }

    let at = Instant::now();
    let paths: Vec<PathBuf> = pass.slots.iter().map(|s| s.run_path.clone()).collect();
    let returned: u64 = pass.slots.iter().map(|s| s.returned).sum();
    let written = (|| {
        let streams = paths
            .iter()
            .map(|path| Ok(Box::new(RecordReader::open(path)?) as TermStream<'static>))
            .collect::<Result<Vec<_>, Error>>()?;
        store.write_expression(name, merge_streams(streams))
    })();
    if !config.keep_scratch {
        for path in &paths {
            let _ = std::fs::remove_file(path);
        }
    }
    let entry = written?;

    report.input_terms += input_count;
    report.output_terms += entry.count;
    report.merge_time += at.elapsed();
    report.master_terms_handled += log.total_terms() + returned;
    for (w, n) in log.chunks_per_worker(p).into_iter().enumerate() {
        report.chunks_per_worker[w] += n;
    }
    for (w, s) in stats.iter().enumerate() {
        report.generated_terms += s.generated_terms;
        let generate = Duration::from_nanos(s.generate_nanos);
        let sort = Duration::from_nanos(s.sort_nanos);
        report.generate_time += generate;
        report.sort_time += sort;
        report.worker_busy[w] += generate + sort;
        report.peak_resident_bytes = report.peak_resident_bytes.max(s.peak_resident_bytes as usize);
        report.peak_live_terms = report.peak_live_terms.max(s.peak_live_terms as usize);
    }
    Ok(())
}

/// Executes `program` on `config.workers` workers. The resulting store is
/// byte-identical to the one [`crate::run_program_sequential`] produces.
pub fn run_program_parallel(
    program: &Program,
    store: &mut ExpressionStore,
    config: &ClusterConfig,
    observer: &mut dyn RunObserver,
) -> Result<RunReport, Error> {
    config.validate()?;
    let start = Instant::now();
    let master_dir = config.scratch.join("master");
    std::fs::create_dir_all(&master_dir)?;
    publish_initial(program, store)?;
    let mut cluster = Cluster::start(config)?;
    let result = (|| {
        cluster.broadcast(&WireMessage::Init(Box::new(InitPayload {
            sort_memory: config.sort_memory.map(|m| m as u64),
            keep_scratch: config.keep_scratch,
            program: program.clone(),
        })))?;
        let mut report = RunReport { workers: config.workers, modules: Vec::new(), total_time: Duration::ZERO };
        for module in 0..program.modules.len() {
            let mut mr = ModuleReport {
                module,
                chunks_per_worker: vec![0; config.workers],
                worker_busy: vec![Duration::ZERO; config.workers],
                ..Default::default()
            };
            for (index, name) in program.expressions.iter().enumerate() {
                run_pass(&mut cluster, store, config, &master_dir, module, (index, name), &mut mr)?;
            }
            report.modules.push(mr);
            finish_module(program, module, store, observer)?;
        }
        Ok::<_, Error>(report)
    })();
    let stopped = cluster.shutdown(result.is_ok());
    let mut report = result?;
    stopped?;
    report.total_time = start.elapsed();
    Ok(report)
}
