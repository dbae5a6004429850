//! Binary term records.
//!
//! A record is `varint(body_len) ++ body`, where the body is
//!
//! ```text
//! sign: u8 (0 = non-negative, 1 = negative)
//! varint(len) ++ numerator magnitude, little-endian, minimal (len 0 for zero)
//! varint(len) ++ denominator, little-endian, minimal
//! varint(factor_count)
//! factor_count x (varint(symbol) ++ zigzag_varint(exponent))
//! ```
//!
//! Decoding rejects anything a canonical term would not encode to, so the
//! codec is injective.

use std::io::{self, Read, Write};

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::term::{Coefficient, Monomial, SymbolId, Term};

/// Upper bound on a single record body.
pub const MAX_RECORD_BYTES: u64 = 1 << 28;

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("truncated term record")]
    Truncated,
    #[error("malformed term record: {0}")]
    Malformed(&'static str),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn put_varint(buf: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        buf.push((v as u8) | 0x80);
        v >>= 7;
    }
    buf.push(v as u8);
}

pub fn varint_len(mut v: u64) -> usize {
    let mut n = 1;
    while v >= 0x80 {
        v >>= 7;
        n += 1;
    }
    n
}

pub fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

pub fn unzigzag(v: u64) -> i64 {
    ((v >> 1) as i64) ^ -((v & 1) as i64)
}

/// Cursor over a byte slice with varint helpers.
pub struct SliceReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> SliceReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        SliceReader { bytes, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        let b = *self.bytes.get(self.pos).ok_or(CodecError::Truncated)?;
        self.pos += 1;
        Ok(b)
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self.pos.checked_add(n).ok_or(CodecError::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(CodecError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    pub fn varint(&mut self) -> Result<u64, CodecError> {
        let mut v: u64 = 0;
        for shift in (0..64).step_by(7) {
            let b = self.u8()?;
            let part = (b & 0x7f) as u64;
            if shift == 63 && part > 1 {
                return Err(CodecError::Malformed("varint overflow"));
            }
            v |= part << shift;
            if b & 0x80 == 0 {
                if b == 0 && shift > 0 {
                    return Err(CodecError::Malformed("non-minimal varint"));
                }
                return Ok(v);
            }
        }
        Err(CodecError::Malformed("varint overflow"))
    }
}

fn magnitude_bytes(n: &BigUint) -> Vec<u8> {
    if n.is_zero() {
        Vec::new()
    } else {
        n.to_bytes_le()
    }
}

fn body_len(term: &Term) -> usize {
    let num = term.coeff.numer().magnitude();
    let den = term.coeff.denom().magnitude();
    let nbytes = if num.is_zero() { 0 } else { num.bits().div_ceil(8) as usize };
    let dbytes = den.bits().div_ceil(8) as usize;
    let mut len = 1 + varint_len(nbytes as u64) + nbytes + varint_len(dbytes as u64) + dbytes;
    let f = term.key.factors();
    len += varint_len(f.len() as u64);
    for &(s, e) in f {
        len += varint_len(s.0 as u64) + varint_len(zigzag(e));
    }
    len
}

/// Size in bytes of the encoded record, including its length prefix.
pub fn encoded_len(term: &Term) -> usize {
    let b = body_len(term);
    varint_len(b as u64) + b
}

pub fn encode_term(term: &Term, buf: &mut Vec<u8>) {
    put_varint(buf, body_len(term) as u64);
    let start = buf.len();
    buf.push(u8::from(term.coeff.numer().sign() == Sign::Minus));
    for part in [term.coeff.numer().magnitude(), term.coeff.denom().magnitude()] {
        let bytes = magnitude_bytes(part);
        put_varint(buf, bytes.len() as u64);
        buf.extend_from_slice(&bytes);
    }
    let f = term.key.factors();
    put_varint(buf, f.len() as u64);
    for &(s, e) in f {
        put_varint(buf, s.0 as u64);
        put_varint(buf, zigzag(e));
    }
    debug_assert_eq!(buf.len() - start, body_len(term));
}

fn decode_magnitude(r: &mut SliceReader<'_>) -> Result<BigUint, CodecError> {
    let len = r.varint()? as usize;
    let bytes = r.take(len)?;
    if bytes.last() == Some(&0) {
        return Err(CodecError::Malformed("non-minimal integer"));
    }
    Ok(BigUint::from_bytes_le(bytes))
}

fn decode_body(body: &[u8]) -> Result<Term, CodecError> {
    let mut r = SliceReader::new(body);
    let negative = match r.u8()? {
        0 => false,
        1 => true,
        _ => return Err(CodecError::Malformed("bad sign byte")),
    };
    let num = decode_magnitude(&mut r)?;
    let den = decode_magnitude(&mut r)?;
    if den.is_zero() {
        return Err(CodecError::Malformed("zero denominator"));
    }
    if num.is_zero() && (negative || !den.is_one()) {
        return Err(CodecError::Malformed("non-canonical zero"));
    }
    if !num.gcd(&den).is_one() && !num.is_zero() {
        return Err(CodecError::Malformed("coefficient not in lowest terms"));
    }
    let sign = if negative { Sign::Minus } else { Sign::Plus };
    let coeff = BigRational::new_raw(BigInt::from_biguint(sign, num), BigInt::from(den));
    let count = r.varint()?;
    if count > body.len() as u64 {
        return Err(CodecError::Truncated);
    }
    let mut factors = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let sym = r.varint()?;
        let sym = u32::try_from(sym).map_err(|_| CodecError::Malformed("symbol id out of range"))?;
        let e = unzigzag(r.varint()?);
        factors.push((SymbolId(sym), e));
    }
    if !r.is_empty() {
        return Err(CodecError::Malformed("trailing bytes in record"));
    }
    let key = Monomial::from_canonical(factors).ok_or(CodecError::Malformed("factors not canonical"))?;
    Ok(Term::new(Coefficient::from_rational(coeff), key))
}

/// Decodes one record from the front of `r`.
pub fn decode_term(r: &mut SliceReader<'_>) -> Result<Term, CodecError> {
    let len = r.varint()?;
    if len > MAX_RECORD_BYTES {
        return Err(CodecError::Malformed("record too large"));
    }
    decode_body(r.take(len as usize)?)
}

/// Decodes a buffer holding a whole number of records.
pub fn decode_all(bytes: &[u8]) -> Result<Vec<Term>, CodecError> {
    let mut r = SliceReader::new(bytes);
    let mut out = Vec::new();
    while !r.is_empty() {
        out.push(decode_term(&mut r)?);
    }
    Ok(out)
}

pub fn encode_all<'a>(terms: impl IntoIterator<Item = &'a Term>) -> Vec<u8> {
    let mut buf = Vec::new();
    for t in terms {
        encode_term(t, &mut buf);
    }
    buf
}

/// Reads one record from a byte stream. `Ok(None)` only at a clean record
/// boundary at end of input.
pub fn read_term<R: Read>(r: &mut R) -> Result<Option<Term>, CodecError> {
    let mut len: u64 = 0;
    let mut first = true;
    for shift in (0..64).step_by(7) {
        let mut b = [0u8];
        match r.read_exact(&mut b) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
                return if first { Ok(None) } else { Err(CodecError::Truncated) };
            }
            Err(e) => return Err(e.into()),
        }
        first = false;
        len |= ((b[0] & 0x7f) as u64) << shift;
        if b[0] & 0x80 == 0 {
            if b[0] == 0 && shift > 0 {
                return Err(CodecError::Malformed("non-minimal varint"));
            }
            break;
        }
        if shift >= 63 {
            return Err(CodecError::Malformed("varint overflow"));
        }
    }
    if len > MAX_RECORD_BYTES {
        return Err(CodecError::Malformed("record too large"));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => CodecError::Truncated,
        _ => CodecError::Io(e),
    })?;
    decode_body(&body).map(Some)
}

pub fn write_term<W: Write>(w: &mut W, term: &Term, scratch: &mut Vec<u8>) -> io::Result<usize> {
    scratch.clear();
    encode_term(term, scratch);
    w.write_all(scratch)?;
    Ok(scratch.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn term(n: BigInt, d: BigInt, f: Vec<(u32, i64)>) -> Term {
        Term::new(Coefficient::new(n, d), Monomial::from_factors(f.into_iter().map(|(s, e)| (SymbolId(s), e))))
    }

    #[test]
    fn big_coefficient_round_trip() {
        let n: BigInt = "123456789012345678901".parse().unwrap();
        let t = term(n, 7.into(), vec![(3, -3)]);
        let bytes = encode_all([&t]);
        assert_eq!(bytes.len(), encoded_len(&t));
        assert_eq!(decode_all(&bytes).unwrap(), vec![t.clone()]);
        assert_eq!(read_term(&mut bytes.as_slice()).unwrap(), Some(t));
    }

    #[test]
    fn zero_term_encodes() {
        let t = Term::constant(Coefficient::zero());
        let bytes = encode_all([&t]);
        assert_eq!(decode_all(&bytes).unwrap(), vec![t]);
    }

    #[test]
    fn rejects_noncanonical() {
        // body: sign 0, num len 1 [2], den len 1 [4], 0 factors => 2/4
        let rec = [6u8, 0, 1, 2, 1, 4, 0];
        assert!(matches!(decode_all(&rec), Err(CodecError::Malformed(_))));
        // descending factors
        let mut bad = vec![0u8, 1, 1, 1, 1, 2, 1, 2, 0, 2];
        bad.insert(0, bad.len() as u8);
        assert!(matches!(decode_all(&bad), Err(CodecError::Malformed(_))));
        // zero exponent
        let mut bad = vec![0u8, 1, 1, 1, 1, 1, 0, 0];
        bad.insert(0, bad.len() as u8);
        assert!(matches!(decode_all(&bad), Err(CodecError::Malformed(_))));
    }

    #[test]
    fn truncation_is_an_error() {
        let t = term(5.into(), 3.into(), vec![(0, 2), (4, -1)]);
        let bytes = encode_all([&t, &t]);
        for cut in 1..bytes.len() {
            if cut == bytes.len() / 2 {
                continue;
            }
            let mut slice = &bytes[..cut];
            let mut out = Vec::new();
            let res = loop {
                match read_term(&mut slice) {
                    Ok(Some(t)) => out.push(t),
                    Ok(None) => break Ok(()),
                    Err(e) => break Err(e),
                }
            };
            assert!(res.is_err(), "cut at {cut} read silently");
        }
    }

    #[test]
    fn zigzag_round_trip() {
        for v in [0i64, 1, -1, 2, -2, i64::MAX, i64::MIN] {
            assert_eq!(unzigzag(zigzag(v)), v);
        }
        assert_eq!(zigzag(-1), 1);
        assert_eq!(zigzag(1), 2);
    }

    proptest! {
        #[test]
        fn codec_round_trip_and_injective(
            n in any::<i64>(), d in 1i64..i64::MAX, big in 0u32..3,
            f in proptest::collection::vec((0u32..1000, any::<i32>()), 0..6)
        ) {
            let scale = BigInt::from(10u32).pow(big * 20);
            let t = term(BigInt::from(n) * scale, d.into(), f.into_iter().map(|(s, e)| (s, e as i64)).collect());
            let bytes = encode_all([&t]);
            prop_assert_eq!(bytes.len(), encoded_len(&t));
            let back = decode_all(&bytes).unwrap();
            prop_assert_eq!(&back, &vec![t.clone()]);
            prop_assert_eq!(encode_all(&back), bytes);
        }
    }
}
