//! Run reports, speedup tables and synthetic benchmark programs.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};

use crate::engine::ModuleStats;
use crate::lang::Program;
use crate::parallel::{run_program_parallel, ClusterConfig};
use crate::runner::{run_program_sequential, RunConfig, Silent};
use crate::store::ExpressionStore;
use crate::Error;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ModuleReport {
    pub module: usize,
    pub input_terms: u64,
    pub generated_terms: u64,
    pub output_terms: u64,
    /// Summed over workers.
    pub generate_time: Duration,
    /// Summed over workers.
    pub sort_time: Duration,
    /// Master-side merge and store write.
    pub merge_time: Duration,
    pub peak_live_terms: usize,
    pub peak_resident_bytes: usize,
    /// Terms the master read, dealt, or received back.
    pub master_terms_handled: u64,
    /// Chunks dealt to each worker.
    pub chunks_per_worker: Vec<u64>,
    /// Generate plus sort time per worker.
    pub worker_busy: Vec<Duration>,
}

impl ModuleReport {
    pub fn absorb(&mut self, s: &ModuleStats) {
        self.input_terms += s.input_terms;
        self.generated_terms += s.generated_terms;
        self.generate_time += s.generate_time;
        self.sort_time += s.sort_time;
        self.merge_time += s.merge_time;
        self.peak_live_terms = self.peak_live_terms.max(s.peak_live_terms);
        self.peak_resident_bytes = self.peak_resident_bytes.max(s.peak_resident_bytes);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunReport {
    pub workers: usize,
    pub modules: Vec<ModuleReport>,
    pub total_time: Duration,
}

impl RunReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "workers: {}  wall-clock: {:.6} s", self.workers, self.total_time.as_secs_f64());
        let _ = writeln!(
            s,
            "{:>6} {:>10} {:>12} {:>10} {:>10} {:>10} {:>10}",
            "module", "input", "generated", "output", "gen_s", "sort_s", "merge_s"
        );
        for m in &self.modules {
            let _ = writeln!(
                s,
                "{:>6} {:>10} {:>12} {:>10} {:>10.4} {:>10.4} {:>10.4}",
                m.module + 1,
                m.input_terms,
                m.generated_terms,
                m.output_terms,
                m.generate_time.as_secs_f64(),
                m.sort_time.as_secs_f64(),
                m.merge_time.as_secs_f64()
            );
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedupRow {
    pub workers: usize,
    pub median_secs: f64,
    /// `T(1) / T(p)`, when `p = 1` was measured.
    pub absolute: Option<f64>,
    /// `2 T(2) / T(p)`, when `p = 2` was measured.
    pub two_normalized: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupTable {
    pub rows: Vec<SpeedupRow>,
}

pub fn median(samples: &[f64]) -> f64 {
    assert!(!samples.is_empty(), "median of no samples");
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

impl SpeedupTable {
    /// Builds the table from per-`p` wall-clock samples in seconds.
    pub fn from_samples(samples: &[(usize, Vec<f64>)]) -> Self {
        let mut medians: Vec<(usize, f64)> = samples.iter().map(|(p, s)| (*p, median(s))).collect();
        medians.sort_by_key(|m| m.0);
        medians.dedup_by_key(|m| m.0);
        let t_of = |p: usize| medians.iter().find(|m| m.0 == p).map(|m| m.1);
        let (t1, t2) = (t_of(1), t_of(2));
        let rows = medians
            .iter()
            .map(|&(p, t)| SpeedupRow {
                workers: p,
                median_secs: t,
                absolute: t1.map(|t1| if p == 1 { 1.0 } else { t1 / t }),
                two_normalized: t2.map(|t2| if p == 2 { 2.0 } else { 2.0 * t2 / t }),
            })
            .collect();
        SpeedupTable { rows }
    }

    pub fn row(&self, p: usize) -> Option<&SpeedupRow> {
        self.rows.iter().find(|r| r.workers == p)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("p,T_median_s,S_abs,S_paper2norm\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(s, "{},{:.6},{},{}", r.workers, r.median_secs, opt(r.absolute), opt(r.two_normalized));
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{:>4} {:>14} {:>10} {:>14}\n", "p", "T_median [s]", "S_abs", "S_paper2norm");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>4} {:>14.6} {:>10} {:>14}",
                r.workers,
                r.median_secs,
                opt(r.absolute),
                opt(r.two_normalized)
            );
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchShape {
    /// `(a1 + ... + ak)^n` built by `n - 1` multiply modules.
    Expand { symbols: usize, power: usize },
    /// `depth` modules alternately renaming `x -> t` and `t -> x` in
    /// `(x + y + z)^width`.
    SubstituteChain { depth: usize, width: usize },
}

pub const DEFAULT_TERM_CAP: u64 = 5_000_000;

pub fn binomial(n: u64, k: u64) -> BigUint {
    let k = k.min(n.saturating_sub(k));
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// Final term count of the generated program.
pub fn expected_terms(shape: BenchShape) -> BigUint {
    match shape {
        BenchShape::Expand { symbols, power } => binomial((power + symbols - 1) as u64, (symbols - 1) as u64),
        BenchShape::SubstituteChain { width, .. } => binomial((width + 2) as u64, 2),
    }
}

/// Emits the source text of a synthetic benchmark.
pub fn gen_benchmark(shape: BenchShape, term_cap: u64) -> Result<String, Error> {
    match shape {
        BenchShape::Expand { symbols, power } if symbols == 0 || power == 0 => {
            return Err(Error::Config("expand needs at least one symbol and power >= 1".into()))
        }
        BenchShape::SubstituteChain { depth, width } if depth == 0 || width == 0 => {
            return Err(Error::Config("substitute-chain needs depth >= 1 and width >= 1".into()))
        }
        _ => {}
    }
    let terms = expected_terms(shape);
    if terms.to_u64().is_none_or(|t| t > term_cap) {
        return Err(Error::Config(format!("refusing to generate: {terms} final terms exceeds the cap of {term_cap}")));
    }
    let mut s = String::new();
    match shape {
        BenchShape::Expand { symbols, power } => {
            let names: Vec<String> = (1..=symbols).map(|i| format!("a{i}")).collect();
            let sum = names.join(" + ");
            let _ = writeln!(s, "* expand: ({sum})^{power}, {terms} final terms");
            let _ = writeln!(s, "Symbols {};", names.join(", "));
            let _ = writeln!(s, "Local e = {sum};");
            for _ in 1..power {
                s.push_str(".sort\n");
                let _ = writeln!(s, "multiply ({sum});");
            }
            s.push_str(".end\n");
        }
        BenchShape::SubstituteChain { depth, width } => {
            let _ = writeln!(s, "* substitute-chain: {depth} renaming modules over (x + y + z)^{width}");
            s.push_str("Symbols x, y, z, t;\n");
            let _ = writeln!(s, "Local e = (x + y + z)^{width};");
            for i in 0..depth {
                if i > 0 {
                    s.push_str(".sort\n");
                }
                s.push_str(if i % 2 == 0 { "id x = t;\n" } else { "id t = x;\n" });
            }
            s.push_str(".end\n");
        }
    }
    Ok(s)
}

/// One timed execution: `p = 1` runs sequentially, larger `p` through the
/// parallel runtime. Returns the report and the final store digest.
pub fn timed_run(program: &Program, p: usize, template: &ClusterConfig) -> Result<(RunReport, Vec<u8>), Error> {
    std::fs::create_dir_all(&template.scratch)?;
    let dir = tempfile::Builder::new().prefix("bench-").tempdir_in(&template.scratch)?;
    let mut store = ExpressionStore::open(dir.path().join("store"))?;
    let start = Instant::now();
    let mut report = if p == 1 {
        let cfg = RunConfig {
            sort_memory: template.sort_memory,
            scratch: dir.path().join("scratch"),
            keep_scratch: false,
        };
        run_program_sequential(program, &mut store, &cfg, &mut Silent::new())?
    } else {
        let cfg = ClusterConfig { workers: p, scratch: dir.path().join("scratch"), ..template.clone() };
        run_program_parallel(program, &mut store, &cfg, &mut Silent::new())?
    };
    report.total_time = start.elapsed();
    Ok((report, store.digest_bytes()?))
}

/// Runs `program` `reps` times at each worker count and builds the speedup
/// table. Any difference between final stores invalidates the benchmark.
pub fn run_bench(
    program: &Program,
    workers: &[usize],
    reps: usize,
    template: &ClusterConfig,
) -> Result<(SpeedupTable, Vec<RunReport>), Error> {
    if workers.is_empty() || workers.contains(&0) || reps == 0 {
        return Err(Error::Config("need a non-empty worker list of positive counts and reps >= 1".into()));
    }
    let mut reference: Option<Vec<u8>> = None;
    let mut samples = Vec::new();
    let mut reports = Vec::new();
    for &p in workers {
        let mut times = Vec::with_capacity(reps);
        for rep in 0..reps {
            let (report, digest) = timed_run(program, p, template)?;
            match &reference {
                None => reference = Some(digest),
                Some(r) if *r != digest => {
                    return Err(Error::Nondeterminism(format!("store after p={p} repetition {rep} differs")))
                }
                Some(_) => {}
            }
            times.push(report.total_time.as_secs_f64());
            reports.push(report);
        }
        samples.push((p, times));
    }
    Ok((SpeedupTable::from_samples(&samples), reports))
}
