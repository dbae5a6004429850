//! Master/worker wire protocol.
//!
//! Every message is one frame: `u32` little-endian length of the rest of
//! the frame, a one-byte tag, then the payload. Term sequences use the
//! record codec from [`crate::codec`].

use crate::codec::{self, SliceReader};
use crate::lang::{Module, Program, Relation, Statement, Terminator};
use crate::term::{Expression, SymbolId, Term};
use crate::Error;

pub const PROTOCOL_VERSION: u16 = 1;
pub const MAX_FRAME_BYTES: usize = 256 << 20;

pub const TAG_INIT: u8 = 0x01;
pub const TAG_BEGIN_MODULE: u8 = 0x02;
pub const TAG_CHUNK: u8 = 0x03;
pub const TAG_CHUNKS_DONE: u8 = 0x04;
pub const TAG_RUN_HEADER: u8 = 0x05;
pub const TAG_WORKER_STATS: u8 = 0x06;
pub const TAG_SHUTDOWN: u8 = 0x07;
pub const TAG_ERROR: u8 = 0x08;
pub const TAG_READY: u8 = 0x09;

// ERROR codes
pub const ERR_PROTOCOL: u16 = 1;
pub const ERR_RUNTIME: u16 = 2;
pub const ERR_MALFORMED: u16 = 3;
pub const ERR_IO: u16 = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitPayload {
    pub sort_memory: Option<u64>,
    pub keep_scratch: bool,
    pub program: Program,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorkerStats {
    pub input_terms: u64,
    pub generated_terms: u64,
    pub generate_nanos: u64,
    pub sort_nanos: u64,
    pub peak_resident_bytes: u64,
    pub peak_live_terms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireMessage {
    Init(Box<InitPayload>),
    BeginModule { module: u32, expression: u32 },
    Chunk(Vec<Term>),
    ChunksDone,
    RunHeader { count: u64 },
    WorkerStats(WorkerStats),
    Shutdown,
    Error { code: u16, message: String },
    /// Worker finished its outstanding chunk and can take another.
    Ready,
}

impl WireMessage {
    pub fn tag(&self) -> u8 {
        match self {
            WireMessage::Init(_) => TAG_INIT,
            WireMessage::BeginModule { .. } => TAG_BEGIN_MODULE,
            WireMessage::Chunk(_) => TAG_CHUNK,
            WireMessage::ChunksDone => TAG_CHUNKS_DONE,
            WireMessage::RunHeader { .. } => TAG_RUN_HEADER,
            WireMessage::WorkerStats(_) => TAG_WORKER_STATS,
            WireMessage::Shutdown => TAG_SHUTDOWN,
            WireMessage::Error { .. } => TAG_ERROR,
            WireMessage::Ready => TAG_READY,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            WireMessage::Init(_) => "INIT",
            WireMessage::BeginModule { .. } => "BEGIN_MODULE",
            WireMessage::Chunk(_) => "CHUNK",
            WireMessage::ChunksDone => "CHUNKS_DONE",
            WireMessage::RunHeader { .. } => "RUN_HEADER",
            WireMessage::WorkerStats(_) => "WORKER_STATS",
            WireMessage::Shutdown => "SHUTDOWN",
            WireMessage::Error { .. } => "ERROR",
            WireMessage::Ready => "READY",
        }
    }

    /// Encodes the full frame, length prefix included.
    pub fn encode(&self) -> Vec<u8> {
        let mut buf = vec![0, 0, 0, 0, self.tag()];
        match self {
            WireMessage::Init(init) => {
                buf.extend_from_slice(&PROTOCOL_VERSION.to_le_bytes());
                buf.extend_from_slice(&init.sort_memory.unwrap_or(u64::MAX).to_le_bytes());
                buf.push(u8::from(init.keep_scratch));
                encode_program(&init.program, &mut buf);
            }
            WireMessage::BeginModule { module, expression } => {
                buf.extend_from_slice(&module.to_le_bytes());
                buf.extend_from_slice(&expression.to_le_bytes());
            }
            WireMessage::Chunk(terms) => {
                buf.extend_from_slice(&(terms.len() as u32).to_le_bytes());
                for t in terms {
                    codec::encode_term(t, &mut buf);
                }
            }
            WireMessage::RunHeader { count } => buf.extend_from_slice(&count.to_le_bytes()),
            WireMessage::WorkerStats(s) => {
                for v in [
                    s.input_terms,
                    s.generated_terms,
                    s.generate_nanos,
                    s.sort_nanos,
                    s.peak_resident_bytes,
                    s.peak_live_terms,
                ] {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
            WireMessage::Error { code, message } => {
                buf.extend_from_slice(&code.to_le_bytes());
                buf.extend_from_slice(message.as_bytes());
            }
            WireMessage::ChunksDone | WireMessage::Shutdown | WireMessage::Ready => {}
        }
        let len = (buf.len() - 4) as u32;
        buf[..4].copy_from_slice(&len.to_le_bytes());
        buf
    }

    /// Decodes one full frame.
    pub fn decode(frame: &[u8]) -> Result<WireMessage, Error> {
        let malformed = |what: &str| Error::Protocol(format!("malformed frame: {what}"));
        if frame.len() < 5 {
            return Err(malformed("shorter than header"));
        }
        let len = u32::from_le_bytes(frame[..4].try_into().unwrap()) as usize;
        if len != frame.len() - 4 {
            return Err(malformed("length prefix does not match frame size"));
        }
        let tag = frame[4];
        let payload = &frame[5..];
        let mut r = SliceReader::new(payload);
        let u16le = |r: &mut SliceReader| -> Result<u16, Error> {
            Ok(u16::from_le_bytes(r.take(2).map_err(|_| malformed("truncated"))?.try_into().unwrap()))
        };
        let u32le = |r: &mut SliceReader| -> Result<u32, Error> {
            Ok(u32::from_le_bytes(r.take(4).map_err(|_| malformed("truncated"))?.try_into().unwrap()))
        };
        let u64le = |r: &mut SliceReader| -> Result<u64, Error> {
            Ok(u64::from_le_bytes(r.take(8).map_err(|_| malformed("truncated"))?.try_into().unwrap()))
        };
        let msg = match tag {
            TAG_INIT => {
                let version = u16le(&mut r)?;
                if version != PROTOCOL_VERSION {
                    return Err(Error::Protocol(format!(
                        "protocol version {version} not supported (expected {PROTOCOL_VERSION})"
                    )));
                }
                let mem = u64le(&mut r)?;
                let keep = match r.u8().map_err(|_| malformed("truncated"))? {
                    0 => false,
                    1 => true,
                    _ => return Err(malformed("bad flag")),
                };
                let program = decode_program(&mut r).map_err(|e| malformed(&e))?;
                WireMessage::Init(Box::new(InitPayload {
                    sort_memory: (mem != u64::MAX).then_some(mem),
                    keep_scratch: keep,
                    program,
                }))
            }
            TAG_BEGIN_MODULE => WireMessage::BeginModule { module: u32le(&mut r)?, expression: u32le(&mut r)? },
            TAG_CHUNK => {
                let n = u32le(&mut r)?;
                if n as usize > payload.len() {
                    return Err(malformed("term count exceeds payload"));
                }
                let mut terms = Vec::with_capacity(n as usize);
                for _ in 0..n {
                    terms.push(codec::decode_term(&mut r).map_err(|e| malformed(&e.to_string()))?);
                }
                WireMessage::Chunk(terms)
            }
            TAG_CHUNKS_DONE => WireMessage::ChunksDone,
            TAG_RUN_HEADER => WireMessage::RunHeader { count: u64le(&mut r)? },
            TAG_WORKER_STATS => WireMessage::WorkerStats(WorkerStats {
                input_terms: u64le(&mut r)?,
                generated_terms: u64le(&mut r)?,
                generate_nanos: u64le(&mut r)?,
                sort_nanos: u64le(&mut r)?,
                peak_resident_bytes: u64le(&mut r)?,
                peak_live_terms: u64le(&mut r)?,
            }),
            TAG_SHUTDOWN => WireMessage::Shutdown,
            TAG_ERROR => {
                let code = u16le(&mut r)?;
                let rest = r.take(payload.len() - 2).map_err(|_| malformed("truncated"))?;
                let message = String::from_utf8(rest.to_vec()).map_err(|_| malformed("error text is not UTF-8"))?;
                WireMessage::Error { code, message }
            }
            TAG_READY => WireMessage::Ready,
            other => return Err(malformed(&format!("unknown tag 0x{other:02x}"))),
        };
        if !r.is_empty() {
            return Err(malformed("trailing payload bytes"));
        }
        Ok(msg)
    }
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    codec::put_varint(buf, s.len() as u64);
    buf.extend_from_slice(s.as_bytes());
}

fn put_expr(buf: &mut Vec<u8>, e: &Expression) {
    codec::put_varint(buf, e.terms.len() as u64);
    for t in &e.terms {
        codec::encode_term(t, buf);
    }
}

const STMT_DECLARE: u8 = 0;
const STMT_LOCAL: u8 = 1;
const STMT_SUBSTITUTE: u8 = 2;
const STMT_IF_DEGREE: u8 = 3;
const STMT_MULTIPLY: u8 = 4;
const STMT_PRINT: u8 = 5;

fn relation_code(r: Relation) -> u8 {
    match r {
        Relation::Eq => 0,
        Relation::Ne => 1,
        Relation::Lt => 2,
        Relation::Le => 3,
        Relation::Gt => 4,
        Relation::Ge => 5,
    }
}

fn put_statements(buf: &mut Vec<u8>, stmts: &[Statement]) {
    codec::put_varint(buf, stmts.len() as u64);
    for s in stmts {
        match s {
            Statement::DeclareSymbols(ids) => {
                buf.push(STMT_DECLARE);
                codec::put_varint(buf, ids.len() as u64);
                for id in ids {
                    codec::put_varint(buf, id.0 as u64);
                }
            }
            Statement::DefineLocal { name, value } => {
                buf.push(STMT_LOCAL);
                put_str(buf, name);
                put_expr(buf, value);
            }
            Statement::Substitute { target, rhs } => {
                buf.push(STMT_SUBSTITUTE);
                codec::put_varint(buf, target.0 as u64);
                put_expr(buf, rhs);
            }
            Statement::IfDegree { symbol, relation, value, body } => {
                buf.push(STMT_IF_DEGREE);
                codec::put_varint(buf, symbol.0 as u64);
                buf.push(relation_code(*relation));
                codec::put_varint(buf, codec::zigzag(*value));
                put_statements(buf, body);
            }
            Statement::Multiply(e) => {
                buf.push(STMT_MULTIPLY);
                put_expr(buf, e);
            }
            Statement::Print(name) => {
                buf.push(STMT_PRINT);
                put_str(buf, name);
            }
        }
    }
}

pub fn encode_program(p: &Program, buf: &mut Vec<u8>) {
    codec::put_varint(buf, p.symbols.len() as u64);
    for s in &p.symbols {
        put_str(buf, s);
    }
    codec::put_varint(buf, p.expressions.len() as u64);
    for s in &p.expressions {
        put_str(buf, s);
    }
    codec::put_varint(buf, p.modules.len() as u64);
    for m in &p.modules {
        buf.push(match m.terminator {
            Terminator::Sort => 0,
            Terminator::End => 1,
        });
        put_statements(buf, &m.statements);
    }
}

struct ProgramDecoder<'r, 'a> {
    r: &'r mut SliceReader<'a>,
    symbols: usize,
}

impl ProgramDecoder<'_, '_> {
    fn count(&mut self) -> Result<usize, String> {
        let n = self.r.varint().map_err(|e| e.to_string())?;
        // every element takes at least one byte
        usize::try_from(n).ok().filter(|&n| n <= MAX_FRAME_BYTES).ok_or_else(|| "count too large".to_string())
    }

    fn string(&mut self) -> Result<String, String> {
        let n = self.count()?;
        let bytes = self.r.take(n).map_err(|e| e.to_string())?;
        String::from_utf8(bytes.to_vec()).map_err(|_| "name is not UTF-8".to_string())
    }

    fn symbol(&mut self) -> Result<SymbolId, String> {
        let v = self.r.varint().map_err(|e| e.to_string())?;
        if v as usize >= self.symbols {
            return Err(format!("symbol id {v} out of range"));
        }
        Ok(SymbolId(v as u32))
    }

    fn expr(&mut self) -> Result<Expression, String> {
        let n = self.count()?;
        let mut terms = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            let t = codec::decode_term(self.r).map_err(|e| e.to_string())?;
            if t.key.factors().iter().any(|f| f.0.index() >= self.symbols) {
                return Err("term uses an unknown symbol".into());
            }
            terms.push(t);
        }
        let e = Expression { terms };
        if !e.is_sorted() {
            return Err("literal expression not in sorted form".into());
        }
        Ok(e)
    }

    fn statements(&mut self, depth: usize) -> Result<Vec<Statement>, String> {
        if depth > 2 {
            return Err("statements nested too deeply".into());
        }
        let n = self.count()?;
        let mut out = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            let tag = self.r.u8().map_err(|e| e.to_string())?;
            out.push(match tag {
                STMT_DECLARE => {
                    let k = self.count()?;
                    let mut ids = Vec::with_capacity(k.min(1024));
                    for _ in 0..k {
                        ids.push(self.symbol()?);
                    }
                    Statement::DeclareSymbols(ids)
                }
                STMT_LOCAL => Statement::DefineLocal { name: self.string()?, value: self.expr()? },
                STMT_SUBSTITUTE => Statement::Substitute { target: self.symbol()?, rhs: self.expr()? },
                STMT_IF_DEGREE => {
                    let symbol = self.symbol()?;
                    let relation = match self.r.u8().map_err(|e| e.to_string())? {
                        0 => Relation::Eq,
                        1 => Relation::Ne,
                        2 => Relation::Lt,
                        3 => Relation::Le,
                        4 => Relation::Gt,
                        5 => Relation::Ge,
                        _ => return Err("bad relation".into()),
                    };
                    let value = codec::unzigzag(self.r.varint().map_err(|e| e.to_string())?);
                    let body = self.statements(depth + 1)?;
                    Statement::IfDegree { symbol, relation, value, body }
                }
                STMT_MULTIPLY => Statement::Multiply(self.expr()?),
                STMT_PRINT => Statement::Print(self.string()?),
                _ => return Err(format!("unknown statement tag {tag}")),
            });
        }
        Ok(out)
    }
}

pub fn decode_program(r: &mut SliceReader<'_>) -> Result<Program, String> {
    let mut d = ProgramDecoder { r, symbols: 0 };
    let ns = d.count()?;
    let mut symbols = Vec::with_capacity(ns.min(1024));
    for _ in 0..ns {
        symbols.push(d.string()?);
    }
    d.symbols = symbols.len();
    let ne = d.count()?;
    let mut expressions = Vec::with_capacity(ne.min(1024));
    for _ in 0..ne {
        expressions.push(d.string()?);
    }
    let nm = d.count()?;
    if nm == 0 {
        return Err("program has no modules".into());
    }
    let mut modules = Vec::with_capacity(nm.min(1024));
    for i in 0..nm {
        let terminator = match d.r.u8().map_err(|e| e.to_string())? {
            0 => Terminator::Sort,
            1 => Terminator::End,
            _ => return Err("bad terminator".into()),
        };
        if (terminator == Terminator::End) != (i + 1 == nm) {
            return Err("only the last module may end with .end".into());
        }
        modules.push(Module { statements: d.statements(0)?, terminator });
    }
    Ok(Program { symbols, expressions, modules })
}
