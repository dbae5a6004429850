#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use termforge::parallel::{run_program_parallel, ClusterConfig};
use termforge::runner::{run_program_sequential, RunConfig, RunObserver};
use termforge::{Error, ExpressionStore, Program, Term};

pub const NAMES: [&str; 4] = ["a", "b", "c", "d"];

/// Small random program: up to 4 symbols, up to 3 modules and at most 6
/// statements after the declarations.
///
/// Only the first two symbols are ever substitution targets and they never
/// get a negative exponent; the last symbol may appear with negative powers
/// when there are at least three symbols.
pub fn random_program(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = if rng.gen_bool(0.15) { 1 } else { rng.gen_range(2..=4) };
    let syms = &NAMES[..k];
    let laurent = (k >= 3).then(|| syms[k - 1]);
    let targets = &syms[..k.min(2)];
    let exprs = if rng.gen_bool(0.3) { vec!["e", "f"] } else { vec!["e"] };

    let mut src = String::new();
    let _ = writeln!(src, "Symbols {};", syms.join(", "));
    for e in &exprs {
        let _ = writeln!(src, "Local {e} = {};", local_value(&mut rng, syms, laurent));
    }
    let modules = rng.gen_range(1..=3);
    let mut budget = rng.gen_range(1..=6);
    for m in 0..modules {
        let n = if m + 1 == modules { budget } else { rng.gen_range(0..=budget) };
        budget -= n;
        for _ in 0..n {
            src.push_str(&statement(&mut rng, syms, targets, laurent, &exprs));
        }
        src.push_str(if m + 1 == modules { ".end\n" } else { ".sort\n" });
    }
    src
}

fn coeff(rng: &mut ChaCha8Rng) -> String {
    let num: i64 = rng.gen_range(1..=5);
    let sign = if rng.gen_bool(0.3) { "-" } else { "" };
    if rng.gen_bool(0.25) {
        format!("{sign}{num}/{}", rng.gen_range(2..=4))
    } else {
        format!("{sign}{num}")
    }
}

fn monomial(rng: &mut ChaCha8Rng, syms: &[&str], laurent: Option<&str>) -> String {
    let mut parts = vec![coeff(rng)];
    let forced = rng.gen_bool(0.8).then(|| rng.gen_range(0..syms.len()));
    for (i, &s) in syms.iter().enumerate() {
        let mut e: i64 = if Some(s) == laurent { rng.gen_range(-2..=2) } else { rng.gen_range(0..=2) };
        if e == 0 && forced == Some(i) {
            e = 1;
        }
        match e {
            0 => {}
            1 => parts.push(s.to_string()),
            e => parts.push(format!("{s}^{e}")),
        }
    }
    parts.join("*")
}

fn poly(rng: &mut ChaCha8Rng, syms: &[&str], laurent: Option<&str>, max_terms: usize) -> String {
    let n = rng.gen_range(1..=max_terms);
    let mut s = String::new();
    for i in 0..n {
        if i > 0 {
            s.push_str(" + ");
        }
        s.push_str(&monomial(rng, syms, laurent));
    }
    s
}

fn local_value(rng: &mut ChaCha8Rng, syms: &[&str], laurent: Option<&str>) -> String {
    if rng.gen_bool(0.3) {
        format!("({})^{}", poly(rng, syms, None, 3), rng.gen_range(1..=3))
    } else {
        poly(rng, syms, laurent, 4)
    }
}

fn statement(
    rng: &mut ChaCha8Rng,
    syms: &[&str],
    targets: &[&str],
    laurent: Option<&str>,
    exprs: &[&str],
) -> String {
    match rng.gen_range(0..10) {
        0..=3 => {
            let t = targets.choose(rng).unwrap();
            format!("id {t} = {};\n", poly(rng, syms, laurent, 3))
        }
        4..=5 => {
            let s = syms.choose(rng).unwrap();
            let rel = ["==", "!=", "<", "<=", ">", ">="].choose(rng).unwrap();
            format!("if (degree({s}) {rel} {}) multiply {};\n", rng.gen_range(0..=2), monomial(rng, syms, laurent))
        }
        6..=7 => format!("multiply {};\n", poly(rng, syms, laurent, 2)),
        _ => format!("print {};\n", exprs.choose(rng).unwrap()),
    }
}

/// Records every expression after each module.
#[derive(Default)]
pub struct Snapshots {
    pub sink: Vec<u8>,
    pub modules: Vec<Vec<(String, Vec<Term>)>>,
}

impl RunObserver for Snapshots {
    fn output(&mut self) -> &mut dyn std::io::Write {
        &mut self.sink
    }

    fn module_finished(&mut self, _module: usize, store: &ExpressionStore) -> Result<(), Error> {
        let mut snap = Vec::new();
        for name in store.names().map(str::to_string).collect::<Vec<_>>() {
            snap.push((name.clone(), store.read_all(&name)?));
        }
        self.modules.push(snap);
        Ok(())
    }
}

pub struct Outcome {
    pub digest: Vec<u8>,
    pub printed: String,
    pub snapshots: Vec<Vec<(String, Vec<Term>)>>,
    pub report: termforge::bench::RunReport,
}

pub fn run_seq(program: &Program, dir: &Path, sort_memory: Option<usize>) -> Result<Outcome, Error> {
    let mut store = ExpressionStore::open(dir.join("store"))?;
    let cfg = RunConfig { sort_memory, scratch: dir.join("scratch"), keep_scratch: false };
    let mut obs = Snapshots::default();
    let report = run_program_sequential(program, &mut store, &cfg, &mut obs)?;
    Ok(Outcome {
        digest: store.digest_bytes()?,
        printed: String::from_utf8(obs.sink).unwrap(),
        snapshots: obs.modules,
        report,
    })
}

pub fn run_par(program: &Program, dir: &Path, config: &ClusterConfig) -> Result<Outcome, Error> {
    let mut store = ExpressionStore::open(dir.join("store"))?;
    let cfg = ClusterConfig { scratch: dir.join("scratch"), ..config.clone() };
    let mut obs = Snapshots::default();
    let report = run_program_parallel(program, &mut store, &cfg, &mut obs)?;
    Ok(Outcome {
        digest: store.digest_bytes()?,
        printed: String::from_utf8(obs.sink).unwrap(),
        snapshots: obs.modules,
        report,
    })
}
