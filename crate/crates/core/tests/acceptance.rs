//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::HashMap;
use std::time::{Duration, Instant};

use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use termforge::bench::{gen_benchmark, run_bench, BenchShape, DEFAULT_TERM_CAP};
use termforge::lang::FIG1_SOURCE;
use termforge::parallel::transport::{in_process_pair, tcp_endpoint, Endpoint};
use termforge::parallel::wire::{InitPayload, WireMessage, WorkerStats};
use termforge::parallel::worker::{worker_loop, WorkerConfig, WorkerExit};
use termforge::parallel::{ClusterConfig, TransportKind, WorkerLaunch};
use termforge::{compile_source, oracle_expand, Coefficient, Expression, Monomial, Program, SymbolId, Term, TermPipeline};

use common::{random_program, run_par, run_seq, Outcome};

const SUITE_PROGRAMS: u64 = 50;
const CONSERVATION_PROGRAMS: u64 = 20;
const CONSERVATION_POINTS: usize = 5;
const FUZZ_CASES: usize = 10_000;
const FUZZ_TCP_CASES: usize = 200;

type Verdict = Result<String, String>;

fn tcp_threads() -> TransportKind {
    TransportKind::Tcp { listen: "127.0.0.1:0".into(), launch: WorkerLaunch::Threads }
}

fn fig1_source() -> String {
    FIG1_SOURCE.replace(".end", "print expr;\n.end")
}

fn text_of(terms: &[Term], symbols: &[String]) -> String {
    Expression { terms: terms.to_vec() }.display_text(symbols)
}

fn snapshot<'a>(o: &'a Outcome, module: usize, name: &str) -> Option<&'a Vec<Term>> {
    o.snapshots.get(module)?.iter().find(|(n, _)| n == name).map(|(_, t)| t)
}

fn fig1_end_to_end() -> Verdict {
    let program = compile_source(&fig1_source()).map_err(|e| e.to_string())?;
    let oracle = oracle_expand(&fig1_source()).map_err(|e| e.to_string())?;
    let expected_print = "expr = 14*a^2 + b^2;\n";
    let mut slowest = Duration::ZERO;
    let mut configs = 0;
    let mut check = |label: String, run: &dyn Fn(&std::path::Path) -> Result<Outcome, termforge::Error>| -> Result<(), String> {
        let dir = tempfile::tempdir().unwrap();
        let start = Instant::now();
        let out = run(dir.path()).map_err(|e| format!("{label}: {e}"))?;
        let took = start.elapsed();
        slowest = slowest.max(took);
        configs += 1;
        if out.printed != expected_print {
            return Err(format!("{label}: printed {:?}", out.printed));
        }
        let m1 = snapshot(&out, 0, "expr").ok_or(format!("{label}: no module 1 snapshot"))?;
        if text_of(m1, &program.symbols) != "2*a^2 + 3*a*b + b^2" {
            return Err(format!("{label}: module 1 gave {}", text_of(m1, &program.symbols)));
        }
        if oracle.snapshot(0, "expr").map(|e| &e.terms) != Some(m1) {
            return Err(format!("{label}: module 1 disagrees with the oracle"));
        }
        if took >= Duration::from_secs(1) {
            return Err(format!("{label}: took {took:?}"));
        }
        Ok(())
    };
    check("sequential".into(), &|d| run_seq(&program, d, None))?;
    for p in [1, 2, 4] {
        for chunk_size in [1, 2, 64] {
            let cfg = ClusterConfig { chunk_size, ..ClusterConfig::new(p, "") };
            check(format!("p={p} chunk={chunk_size}"), &|d| run_par(&program, d, &cfg))?;
        }
    }
    Ok(format!("{configs} configurations, slowest {:.1} ms", slowest.as_secs_f64() * 1e3))
}

fn suite_programs() -> Result<Vec<(String, Program)>, String> {
    (0..SUITE_PROGRAMS)
        .map(|seed| {
            let src = random_program(seed);
            compile_source(&src).map(|p| (src.clone(), p)).map_err(|e| format!("seed {seed}: {e}\n{src}"))
        })
        .collect()
}

fn determinism(programs: &[(String, Program)]) -> Verdict {
    let mut runs = 0;
    for (seed, (src, program)) in programs.iter().enumerate() {
        let dir = tempfile::tempdir().unwrap();
        let reference = run_seq(program, dir.path(), None).map_err(|e| format!("seed {seed}: {e}\n{src}"))?;
        runs += 1;
        let mut variant = 0;
        for p in [1, 2, 3, 4, 8] {
            for transport in [TransportKind::InProcess, tcp_threads()] {
                for sort_memory in [Some(256), Some(64 * 1024), None] {
                    let chunk_size = [1, 7, 64][variant % 3];
                    variant += 1;
                    let cfg = ClusterConfig {
                        chunk_size,
                        transport: transport.clone(),
                        sort_memory,
                        ..ClusterConfig::new(p, "")
                    };
                    let dir = tempfile::tempdir().unwrap();
                    let out = run_par(program, dir.path(), &cfg).map_err(|e| format!("seed {seed}: {e}"))?;
                    runs += 1;
                    if out.digest != reference.digest || out.printed != reference.printed {
                        return Err(format!(
                            "seed {seed}: store differs for p={p} {transport:?} sort_memory={sort_memory:?}\n{src}"
                        ));
                    }
                }
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let out = run_seq(program, dir.path(), Some(256)).map_err(|e| format!("seed {seed}: {e}"))?;
        if out.digest != reference.digest {
            return Err(format!("seed {seed}: sequential run with 256 B sort memory differs"));
        }
    }
    Ok(format!("{} programs, {runs} runs, all stores byte-identical", programs.len()))
}

fn oracle_equivalence(programs: &[(String, Program)]) -> Verdict {
    let mut compared = 0;
    for (seed, (src, program)) in programs.iter().enumerate() {
        let oracle = oracle_expand(src).map_err(|e| format!("seed {seed}: oracle: {e}"))?;
        let cfg = ClusterConfig { chunk_size: 2, sort_memory: Some(256), ..ClusterConfig::new(4, "") };
        let dir = tempfile::tempdir().unwrap();
        let out = run_par(program, dir.path(), &cfg).map_err(|e| format!("seed {seed}: {e}"))?;
        for module in 0..program.modules.len() {
            for name in &program.expressions {
                let ours = snapshot(&out, module, name).ok_or(format!("seed {seed}: missing {name}"))?;
                let theirs = oracle.snapshot(module, name).ok_or(format!("seed {seed}: oracle missing {name}"))?;
                if ours != &theirs.terms {
                    return Err(format!(
                        "seed {seed}, module {}, {name}: {} vs oracle {}\n{src}",
                        module + 1,
                        text_of(ours, &program.symbols),
                        theirs.display_text(&program.symbols)
                    ));
                }
                compared += 1;
            }
        }
    }
    Ok(format!("{compared} module snapshots equal term for term"))
}

fn out_of_core() -> Verdict {
    const BUDGET: usize = 4096;
    let mut peaks = Vec::new();
    for power in [8, 12] {
        let src = gen_benchmark(BenchShape::Expand { symbols: 4, power }, DEFAULT_TERM_CAP).map_err(|e| e.to_string())?;
        let program = compile_source(&src).map_err(|e| e.to_string())?;
        let dir = tempfile::tempdir().unwrap();
        let unbounded = run_seq(&program, dir.path(), None).map_err(|e| e.to_string())?;
        let bounded_seq = run_seq(&program, &dir.path().join("b"), Some(BUDGET)).map_err(|e| e.to_string())?;
        let cfg = ClusterConfig { sort_memory: Some(BUDGET), ..ClusterConfig::new(4, "") };
        let bounded_par = run_par(&program, &dir.path().join("c"), &cfg).map_err(|e| e.to_string())?;
        let finals = unbounded.report.modules.last().unwrap().output_terms;
        if power == 12 && finals != 455 {
            return Err(format!("expand(4, 12) has {finals} terms, expected 455"));
        }
        for (label, o) in [("sequential", &bounded_seq), ("p=4", &bounded_par)] {
            if o.digest != unbounded.digest {
                return Err(format!("n={power} {label}: 4 KiB store differs from unbounded"));
            }
            let peak = o.report.modules.iter().map(|m| m.peak_resident_bytes).max().unwrap();
            if peak > BUDGET {
                return Err(format!("n={power} {label}: sort buffer peaked at {peak} bytes"));
            }
        }
        let generated: u64 = bounded_seq.report.modules.iter().map(|m| m.generated_terms).sum();
        let peak = bounded_seq.report.modules.iter().map(|m| m.peak_resident_bytes).max().unwrap();
        let live = bounded_seq.report.modules.iter().map(|m| m.peak_live_terms).max().unwrap();
        peaks.push((power, generated, peak, live));
    }
    let (_, g8, _, l8) = peaks[0];
    let (_, g12, p12, l12) = peaks[1];
    if l12 > l8 {
        return Err(format!("live terms grew with stream length: {l8} -> {l12}"));
    }
    Ok(format!(
        "455 terms, byte-exact; generated {g8} -> {g12} terms while peak sort buffer stayed <= {p12} B and live terms {l8} -> {l12}"
    ))
}

fn relative_speedup() -> Verdict {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let forced = std::env::var_os("TERMFORGE_FORCE_SPEEDUP").is_some();
    if cores < 4 && !forced {
        return Ok(format!("NOT APPLICABLE: needs >= 4 cores, this machine exposes {cores}"));
    }
    let start = Instant::now();
    let scratch = tempfile::tempdir().unwrap();
    let template = ClusterConfig::new(1, scratch.path());
    // grow the power until the single-worker run takes at least 10 s
    let mut power = 9;
    let program = loop {
        let src = gen_benchmark(BenchShape::Expand { symbols: 5, power }, DEFAULT_TERM_CAP).map_err(|e| e.to_string())?;
        let program = compile_source(&src).map_err(|e| e.to_string())?;
        let (report, _) = termforge::bench::timed_run(&program, 1, &template).map_err(|e| e.to_string())?;
        let t = report.total_time.as_secs_f64();
        if t >= 10.0 {
            break program;
        }
        let scale = (10.5 / t.max(1e-3)).powf(0.5).clamp(1.1, 3.0);
        power = ((power as f64) * scale).ceil() as usize;
        if power > 200 {
            return Err("could not size the benchmark to 10 s".into());
        }
    };
    let (table, _) = run_bench(&program, &[1, 2, 4], 3, &template).map_err(|e| e.to_string())?;
    let t = |p| table.row(p).unwrap().median_secs;
    let (t1, t2, t4) = (t(1), t(2), t(4));
    let elapsed = start.elapsed();
    let detail = format!("expand(5, {power}): T(1)={t1:.2}s T(2)={t2:.2}s T(4)={t4:.2}s in {:.0}s", elapsed.as_secs_f64());
    if t4 <= 0.5 * t1 && t2 <= t1 && t4 <= t2 && elapsed < Duration::from_secs(300) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn normalization_identity() -> Verdict {
    let src = gen_benchmark(BenchShape::Expand { symbols: 3, power: 6 }, DEFAULT_TERM_CAP).map_err(|e| e.to_string())?;
    let program = compile_source(&src).map_err(|e| e.to_string())?;
    let scratch = tempfile::tempdir().unwrap();
    let (table, _) = run_bench(&program, &[1, 2, 4], 3, &ClusterConfig::new(1, scratch.path())).map_err(|e| e.to_string())?;
    let s2 = table.row(2).and_then(|r| r.two_normalized);
    if s2 != Some(2.0) {
        return Err(format!("library table: S_paper2norm(2) = {s2:?}"));
    }
    let csv_line = table.to_csv().lines().find(|l| l.starts_with("2,")).map(str::to_string);
    if !csv_line.as_deref().is_some_and(|l| l.ends_with(",2.000000")) {
        return Err(format!("library csv row: {csv_line:?}"));
    }

    // the same through the command-line tool
    let file = scratch.path().join("bench.frm");
    std::fs::write(&file, &src).unwrap();
    let csv = scratch.path().join("speedup.csv");
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_termforge"))
        .args(["bench", file.to_str().unwrap(), "--workers", "1,2,4", "--reps", "2", "--csv", csv.to_str().unwrap()])
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    if !status.success() {
        return Err(format!("termforge bench exited with {status}"));
    }
    let text = std::fs::read_to_string(&csv).map_err(|e| e.to_string())?;
    let row = text.lines().find(|l| l.starts_with("2,")).unwrap_or("");
    if row.rsplit(',').next() != Some("2.000000") {
        return Err(format!("cli csv row: {row:?}"));
    }
    Ok("S_paper2norm(2) = 2 in the library table and the CLI csv".into())
}

fn random_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<BigRational> {
    (0..n)
        .map(|_| {
            let mut num: i64 = rng.gen_range(1..=12);
            if rng.gen_bool(0.5) {
                num = -num;
            }
            BigRational::new(num.into(), rng.gen_range(1..=7i64).into())
        })
        .collect()
}

/// Sum of the terms at `at`, with symbol powers cached. Terms are grouped by
/// denominator so most additions stay integral.
fn eval_sum(terms: &[Term], at: &[BigRational]) -> BigRational {
    let mut powers: HashMap<(SymbolId, i64), BigRational> = HashMap::new();
    let mut by_den: HashMap<num_bigint::BigInt, num_bigint::BigInt> = HashMap::new();
    for t in terms {
        let mut v = t.coeff.as_rational().clone();
        for &(sym, e) in t.key.factors() {
            let pw = powers.entry((sym, e)).or_insert_with(|| {
                let base = &at[sym.index()];
                let r = num_traits::pow(base.clone(), e.unsigned_abs() as usize);
                if e < 0 { r.recip() } else { r }
            });
            v *= &*pw;
        }
        let (n, d) = v.into_raw();
        *by_den.entry(d).or_default() += n;
    }
    by_den.into_iter().map(|(d, n)| BigRational::new(n, d)).fold(BigRational::zero(), |a, b| a + b)
}

fn conservation() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0_5E_7E);
    let mut checks = 0;
    for seed in 1000..1000 + CONSERVATION_PROGRAMS {
        let src = random_program(seed);
        let program = compile_source(&src).map_err(|e| format!("seed {seed}: {e}"))?;
        let dir = tempfile::tempdir().unwrap();
        let cfg = ClusterConfig { chunk_size: 3, sort_memory: Some(256), ..ClusterConfig::new(3, "") };
        let out = run_par(&program, dir.path(), &cfg).map_err(|e| format!("seed {seed}: {e}"))?;
        let mut current: HashMap<String, Vec<Term>> =
            program.initial_expressions().into_iter().map(|(n, e)| (n, e.terms)).collect();
        for (m, module) in program.modules.iter().enumerate() {
            let points: Vec<Vec<BigRational>> =
                (0..CONSERVATION_POINTS).map(|_| random_point(&mut rng, program.symbols.len())).collect();
            for name in &program.expressions {
                // image of the input under the module's term map, term by term
                let mut pipeline = TermPipeline::new(module, &program.symbols);
                let mut image = Vec::new();
                for t in &current[name] {
                    pipeline
                        .generate(t.clone(), &mut |g| {
                            image.push(g);
                            Ok(())
                        })
                        .map_err(|e| e.to_string())?;
                }
                let output = snapshot(&out, m, name).ok_or(format!("seed {seed}: missing snapshot"))?;
                for at in &points {
                    if eval_sum(&image, at) != eval_sum(output, at) {
                        return Err(format!("seed {seed}, module {}, {name}: values differ\n{src}", m + 1));
                    }
                    checks += 1;
                }
                current.insert(name.clone(), output.clone());
            }
        }
    }
    Ok(format!("{CONSERVATION_PROGRAMS} programs, {checks} point evaluations agree exactly"))
}

// ---- protocol fuzzing ----

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum ModelState {
    AwaitInit,
    Idle,
    InModule,
}

#[derive(Debug, PartialEq, Eq)]
enum Verdict8 {
    Legal(ModelState),
    Stop,
    Illegal,
}

#[derive(Clone, Debug)]
enum Input {
    Msg(WireMessage),
    Raw(Vec<u8>),
}

/// Reference state machine for what a worker must accept.
fn model(state: ModelState, input: &Input, program: &Program) -> Verdict8 {
    let msg = match input {
        Input::Raw(_) => return Verdict8::Illegal,
        Input::Msg(m) => m,
    };
    use ModelState::*;
    match (state, msg) {
        (_, WireMessage::Shutdown) => Verdict8::Stop,
        (AwaitInit, WireMessage::Init(_)) => Verdict8::Legal(Idle),
        (Idle, WireMessage::BeginModule { module, expression })
            if (*module as usize) < program.modules.len() && (*expression as usize) < program.expressions.len() =>
        {
            Verdict8::Legal(InModule)
        }
        (InModule, WireMessage::Chunk(terms))
            if terms.iter().all(|t| t.key.factors().iter().all(|f| f.0.index() < program.symbols.len())) =>
        {
            Verdict8::Legal(InModule)
        }
        (InModule, WireMessage::ChunksDone) => Verdict8::Legal(Idle),
        _ => Verdict8::Illegal,
    }
}

fn random_term(rng: &mut ChaCha8Rng, symbols: u32) -> Term {
    let factors: Vec<(SymbolId, i64)> = (0..symbols).map(|s| (SymbolId(s), rng.gen_range(0..=3))).collect();
    Term::new(Coefficient::new(rng.gen_range(1..=9), rng.gen_range(1..=3)), Monomial::from_factors(factors))
}

fn random_input(rng: &mut ChaCha8Rng, program: &Program) -> Input {
    let m = match rng.gen_range(0..14) {
        0 => WireMessage::Init(Box::new(InitPayload { sort_memory: None, keep_scratch: false, program: program.clone() })),
        1 => WireMessage::BeginModule { module: rng.gen_range(0..2), expression: 0 },
        2 => WireMessage::BeginModule { module: rng.gen_range(0..4), expression: rng.gen_range(0..2) },
        3 | 4 => WireMessage::Chunk((0..rng.gen_range(0..4)).map(|_| random_term(rng, 3)).collect()),
        5 => WireMessage::Chunk(vec![random_term(rng, 5)]),
        6 => WireMessage::ChunksDone,
        7 => WireMessage::RunHeader { count: rng.gen_range(0..5) },
        8 => WireMessage::WorkerStats(WorkerStats::default()),
        9 => WireMessage::Shutdown,
        10 => WireMessage::Error { code: 1, message: "master failure".into() },
        11 => WireMessage::Ready,
        12 => {
            let mut f = WireMessage::Chunk(vec![random_term(rng, 3)]).encode();
            let cut = rng.gen_range(5..f.len());
            f.truncate(cut);
            let len = (f.len() - 4) as u32;
            f[..4].copy_from_slice(&len.to_le_bytes());
            return Input::Raw(f);
        }
        _ => {
            let mut f = vec![0u8; rng.gen_range(1..12)];
            rng.fill(&mut f[..]);
            let mut frame = ((f.len() as u32).to_le_bytes()).to_vec();
            frame.extend(f);
            // a random frame that happens to decode is not garbage
            return match WireMessage::decode(&frame) {
                Ok(m) => Input::Msg(m),
                Err(_) => Input::Raw(frame),
            };
        }
    };
    Input::Msg(m)
}

/// A sequence that mostly follows the protocol with occasional random
/// deviations.
fn random_sequence(rng: &mut ChaCha8Rng, program: &Program) -> Vec<Input> {
    let len = rng.gen_range(1..=14);
    let deviate = rng.gen_range(0.0..0.5);
    let mut state = ModelState::AwaitInit;
    let mut seq = Vec::with_capacity(len);
    for _ in 0..len {
        let input = if rng.gen_bool(deviate) {
            random_input(rng, program)
        } else {
            let m = match state {
                ModelState::AwaitInit => WireMessage::Init(Box::new(InitPayload {
                    sort_memory: if rng.gen_bool(0.5) { Some(64) } else { None },
                    keep_scratch: false,
                    program: program.clone(),
                })),
                ModelState::Idle => WireMessage::BeginModule { module: rng.gen_range(0..2), expression: 0 },
                ModelState::InModule if rng.gen_bool(0.7) => {
                    WireMessage::Chunk((0..rng.gen_range(1..4)).map(|_| random_term(rng, 3)).collect())
                }
                ModelState::InModule => WireMessage::ChunksDone,
            };
            Input::Msg(m)
        };
        if let Verdict8::Legal(next) = model(state, &input, program) {
            state = next;
        }
        seq.push(input);
    }
    seq
}

enum Expect {
    Illegal { chunks: usize, runs: usize },
    Shutdown { chunks: usize, runs: usize },
    Open { chunks: usize, runs: usize },
}

fn expectation(seq: &[Input], program: &Program) -> Expect {
    let mut state = ModelState::AwaitInit;
    let (mut chunks, mut runs) = (0, 0);
    for input in seq {
        match model(state, input, program) {
            Verdict8::Illegal => return Expect::Illegal { chunks, runs },
            Verdict8::Stop => return Expect::Shutdown { chunks, runs },
            Verdict8::Legal(next) => {
                match input {
                    Input::Msg(WireMessage::Chunk(_)) => chunks += 1,
                    Input::Msg(WireMessage::ChunksDone) => runs += 1,
                    _ => {}
                }
                state = next;
            }
        }
    }
    Expect::Open { chunks, runs }
}

fn connect(tcp: bool) -> (Endpoint, Endpoint) {
    if !tcp {
        return in_process_pair();
    }
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let client = std::net::TcpStream::connect(listener.local_addr().unwrap()).unwrap();
    let (server, _) = listener.accept().unwrap();
    (tcp_endpoint(server).unwrap(), tcp_endpoint(client).unwrap())
}

/// Runs one case; returns a description of the problem, if any.
fn fuzz_case(seq: &[Input], program: &Program, scratch: &std::path::Path, tcp: bool) -> Option<String> {
    let (master, worker) = connect(tcp);
    let cfg = WorkerConfig { id: 0, scratch: scratch.to_path_buf() };
    let handle = std::thread::spawn(move || worker_loop(worker, &cfg));
    let Endpoint { mut sender, mut receiver } = master;
    for input in seq {
        let frame = match input {
            Input::Msg(m) => m.encode(),
            Input::Raw(b) => b.clone(),
        };
        if sender.send_frame(&frame).is_err() {
            break;
        }
    }
    drop(sender);
    let mut replies = Vec::new();
    while let Ok(Some(frame)) = receiver.recv_frame() {
        match WireMessage::decode(&frame) {
            Ok(m) => replies.push(m),
            Err(e) => return Some(format!("worker sent an undecodable frame: {e}")),
        }
    }
    let exit = handle.join().expect("worker panicked");
    let readies = replies.iter().filter(|m| **m == WireMessage::Ready).count();
    let headers = replies.iter().filter(|m| matches!(m, WireMessage::RunHeader { .. })).count();
    let errors = replies.iter().filter(|m| matches!(m, WireMessage::Error { .. })).count();
    let (chunks, runs) = match expectation(seq, program) {
        Expect::Illegal { chunks, runs } => {
            if errors != 1 || !matches!(replies.last(), Some(WireMessage::Error { .. })) || exit.is_ok() {
                return Some(format!("illegal input silently accepted (replies {replies:?}, exit {exit:?})"));
            }
            (chunks, runs)
        }
        Expect::Shutdown { chunks, runs } => {
            if errors != 0 || !matches!(exit, Ok(WorkerExit::Shutdown)) {
                return Some(format!("legal session rejected: {replies:?} {exit:?}"));
            }
            (chunks, runs)
        }
        Expect::Open { chunks, runs } => {
            if errors != 0 || !matches!(exit, Ok(WorkerExit::Disconnected)) {
                return Some(format!("legal session rejected: {replies:?} {exit:?}"));
            }
            (chunks, runs)
        }
    };
    if readies != chunks || headers != runs {
        return Some(format!("expected {chunks} READY and {runs} runs, got {readies} and {headers}"));
    }
    None
}

fn protocol_robustness() -> Verdict {
    let program = compile_source(FIG1_SOURCE).unwrap();
    let scratch = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xF022);
    let mut illegal = 0;
    for case in 0..FUZZ_CASES + FUZZ_TCP_CASES {
        let tcp = case >= FUZZ_CASES;
        let seq = random_sequence(&mut rng, &program);
        if matches!(expectation(&seq, &program), Expect::Illegal { .. }) {
            illegal += 1;
        }
        if let Some(problem) = fuzz_case(&seq, &program, scratch.path(), tcp) {
            return Err(format!("case {case} ({}): {problem}\n{seq:?}", if tcp { "tcp" } else { "in-process" }));
        }
    }
    Ok(format!(
        "{} cases ({FUZZ_TCP_CASES} over TCP), {illegal} with an illegal transition, 0 silently accepted",
        FUZZ_CASES + FUZZ_TCP_CASES
    ))
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let programs = suite_programs();
    let criteria: Vec<Criterion> = vec![
        ("fig1_end_to_end", Box::new(fig1_end_to_end)),
        ("determinism", Box::new(|| determinism(programs.as_ref().map_err(Clone::clone)?))),
        ("oracle_equivalence", Box::new(|| oracle_equivalence(programs.as_ref().map_err(Clone::clone)?))),
        ("out_of_core", Box::new(out_of_core)),
        ("relative_speedup", Box::new(relative_speedup)),
        ("normalization_identity", Box::new(normalization_identity)),
        ("conservation", Box::new(conservation)),
        ("protocol_robustness", Box::new(protocol_robustness)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let verdict = check();
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) if detail.starts_with("NOT APPLICABLE") => {
                println!("acceptance {} {name}: SKIP ({secs:.2}s) {detail}", i + 1)
            }
            Ok(detail) => println!("acceptance {} {name}: PASS ({secs:.2}s) {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("acceptance {} {name}: FAIL ({secs:.2}s) {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
