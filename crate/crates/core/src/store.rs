//! Disk-backed expression storage: one `<name>.tfx` record file per
//! expression plus a `manifest.json` index, published by atomic rename.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::hash::Hasher;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::codec::{self, CodecError};
use crate::term::{compare_terms, Term};
use crate::Error;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub count: u64,
    pub bytes: u64,
    /// 64-bit FNV-1a of the file content, lowercase hex.
    pub checksum: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub expressions: BTreeMap<String, ManifestEntry>,
}

/// Writes records sequentially while tracking count, size, checksum and
/// ordering.
pub struct RecordWriter {
    out: BufWriter<File>,
    hasher: FnvHasher,
    count: u64,
    bytes: u64,
    last: Option<Term>,
    scratch: Vec<u8>,
}

impl RecordWriter {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(RecordWriter {
            out: BufWriter::new(File::create(path)?),
            hasher: FnvHasher::default(),
            count: 0,
            bytes: 0,
            last: None,
            scratch: Vec::new(),
        })
    }

    /// Appends a term; fails if it does not sort strictly after the
    /// previous one.
    pub fn push(&mut self, term: &Term) -> Result<(), Error> {
        if let Some(last) = &self.last {
            if compare_terms(last, term) != std::cmp::Ordering::Less {
                return Err(Error::Order("stream written out of order".into()));
            }
        }
        if term.is_zero() {
            return Err(Error::Order("zero term in sorted stream".into()));
        }
        self.push_unchecked(term)?;
        self.last = Some(term.clone());
        Ok(())
    }

    pub(crate) fn push_unchecked(&mut self, term: &Term) -> io::Result<()> {
        self.scratch.clear();
        codec::encode_term(term, &mut self.scratch);
        self.out.write_all(&self.scratch)?;
        self.hasher.write(&self.scratch);
        self.count += 1;
        self.bytes += self.scratch.len() as u64;
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Flushes and syncs; returns `(count, bytes, checksum)`.
    pub fn finish(mut self) -> io::Result<(u64, u64, u64)> {
        self.out.flush()?;
        self.out.get_ref().sync_all()?;
        Ok((self.count, self.bytes, self.hasher.finish()))
    }
}

/// Lazily decodes records from a file, checking order when asked to.
pub struct RecordReader {
    input: BufReader<File>,
    remaining: Option<u64>,
    done: bool,
}

impl RecordReader {
    pub fn open(path: &Path) -> io::Result<Self> {
        Ok(RecordReader { input: BufReader::new(File::open(path)?), remaining: None, done: false })
    }

    fn expecting(mut self, count: u64) -> Self {
        self.remaining = Some(count);
        self
    }
}

impl Iterator for RecordReader {
    type Item = Result<Term, Error>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match codec::read_term(&mut self.input) {
            Ok(Some(t)) => {
                if let Some(r) = self.remaining.as_mut() {
                    if *r == 0 {
                        self.done = true;
                        return Some(Err(Error::Corrupt("more records than recorded count".into())));
                    }
                    *r -= 1;
                }
                Some(Ok(t))
            }
            Ok(None) => {
                self.done = true;
                match self.remaining {
                    Some(r) if r > 0 => Some(Err(Error::Corrupt("fewer records than recorded count".into()))),
                    _ => None,
                }
            }
            Err(e) => {
                self.done = true;
                Some(Err(match e {
                    CodecError::Io(e) => Error::Io(e),
                    other => Error::Corrupt(other.to_string()),
                }))
            }
        }
    }
}

/// Named sorted term streams persisted in a directory.
#[derive(Debug)]
pub struct ExpressionStore {
    dir: PathBuf,
    manifest: StoreManifest,
}

impl ExpressionStore {
    /// Opens (or initializes) a store in `dir`.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, Error> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let path = dir.join(MANIFEST_FILE);
        let manifest = if path.exists() {
            serde_json::from_slice(&fs::read(&path)?)
                .map_err(|e| Error::Corrupt(format!("unreadable manifest: {e}")))?
        } else {
            StoreManifest::default()
        };
        Ok(ExpressionStore { dir, manifest })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &StoreManifest {
        &self.manifest
    }

    pub fn entry(&self, name: &str) -> Option<&ManifestEntry> {
        self.manifest.expressions.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.manifest.expressions.keys().map(String::as_str)
    }

    /// Writes a sorted stream under `name`, replacing any previous version
    /// only once the new file and manifest are complete.
    pub fn write_expression<I>(&mut self, name: &str, terms: I) -> Result<ManifestEntry, Error>
    where
        I: IntoIterator<Item = Result<Term, Error>>,
    {
        let file = format!("{name}.tfx");
        let tmp = self.dir.join(format!("{file}.tmp"));
        let mut w = RecordWriter::create(&tmp)?;
        for t in terms {
            if let Err(e) = t.and_then(|t| w.push(&t)) {
                drop(w);
                let _ = fs::remove_file(&tmp);
                return Err(e);
            }
        }
        let (count, bytes, sum) = w.finish()?;
        fs::rename(&tmp, self.dir.join(&file))?;
        let entry = ManifestEntry { file, count, bytes, checksum: format!("{sum:016x}") };
        self.manifest.expressions.insert(name.to_string(), entry.clone());
        self.save_manifest()?;
        Ok(entry)
    }

    fn save_manifest(&self) -> Result<(), Error> {
        let tmp = self.dir.join(format!("{MANIFEST_FILE}.tmp"));
        let mut text = serde_json::to_vec_pretty(&self.manifest).expect("manifest serializes");
        text.push(b'\n');
        {
            let mut f = File::create(&tmp)?;
            f.write_all(&text)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, self.dir.join(MANIFEST_FILE))?;
        Ok(())
    }

    /// Verifies the checksum in one streaming pass, then returns a lazy
    /// reader over the records.
    pub fn read_expression(&self, name: &str) -> Result<RecordReader, Error> {
        let entry = self.entry(name).ok_or_else(|| Error::NotFound(name.to_string()))?;
        let path = self.dir.join(&entry.file);
        let mut f = BufReader::new(File::open(&path)?);
        let mut hasher = FnvHasher::default();
        let mut buf = [0u8; 64 * 1024];
        let mut total = 0u64;
        loop {
            let n = f.read(&mut buf)?;
            if n == 0 {
                break;
            }
            hasher.write(&buf[..n]);
            total += n as u64;
        }
        if total != entry.bytes || format!("{:016x}", hasher.finish()) != entry.checksum {
            return Err(Error::Corrupt(format!("checksum mismatch for expression {name}")));
        }
        Ok(RecordReader::open(&path)?.expecting(entry.count))
    }

    pub fn read_all(&self, name: &str) -> Result<Vec<Term>, Error> {
        self.read_expression(name)?.collect()
    }

    /// Concatenated manifest and record bytes, for byte-exact comparison of
    /// two stores.
    pub fn digest_bytes(&self) -> Result<Vec<u8>, Error> {
        let mut out = fs::read(self.dir.join(MANIFEST_FILE)).unwrap_or_default();
        for entry in self.manifest.expressions.values() {
            out.extend(fs::read(self.dir.join(&entry.file))?);
        }
        Ok(out)
    }
}
