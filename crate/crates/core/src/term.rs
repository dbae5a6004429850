//! Terms, monomial keys, exact coefficients and small in-memory expressions.
//!
//! A [`Term`] is an exact rational coefficient times a Laurent monomial. The
//! monomial (a [`Monomial`], the factor list) is the sort key; coefficients
//! never take part in ordering.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// Dense index into a program's symbol table, assigned in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SymbolId(pub u32);

impl SymbolId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Exact rational coefficient, always in lowest terms with a positive
/// denominator.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Coefficient(BigRational);

impl Coefficient {
    pub fn zero() -> Self {
        Coefficient(BigRational::zero())
    }

    pub fn one() -> Self {
        Coefficient(BigRational::one())
    }

    pub fn from_integer(n: impl Into<BigInt>) -> Self {
        Coefficient(BigRational::from_integer(n.into()))
    }

    /// Builds `num/den`, reducing. Panics on a zero denominator.
    pub fn new(num: impl Into<BigInt>, den: impl Into<BigInt>) -> Self {
        Coefficient(BigRational::new(num.into(), den.into()))
    }

    pub fn from_rational(r: BigRational) -> Self {
        Coefficient(r)
    }

    pub fn as_rational(&self) -> &BigRational {
        &self.0
    }

    pub fn into_rational(self) -> BigRational {
        self.0
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn recip(&self) -> Option<Self> {
        if self.is_zero() {
            None
        } else {
            Some(Coefficient(self.0.recip()))
        }
    }

    /// Integer power, negative exponents allowed for nonzero values.
    pub fn pow(&self, n: i64) -> Option<Self> {
        if n < 0 && self.is_zero() {
            return None;
        }
        let base = if n < 0 { self.0.recip() } else { self.0.clone() };
        let mut acc = BigRational::one();
        let mut b = base;
        let mut e = n.unsigned_abs();
        while e > 0 {
            if e & 1 == 1 {
                acc *= &b;
            }
            e >>= 1;
            if e > 0 {
                b = &b * &b;
            }
        }
        Some(Coefficient(acc))
    }

    pub fn abs(&self) -> Self {
        Coefficient(self.0.abs())
    }
}

impl Add for &Coefficient {
    type Output = Coefficient;
    fn add(self, rhs: &Coefficient) -> Coefficient {
        Coefficient(&self.0 + &rhs.0)
    }
}

impl Mul for &Coefficient {
    type Output = Coefficient;
    fn mul(self, rhs: &Coefficient) -> Coefficient {
        Coefficient(&self.0 * &rhs.0)
    }
}

impl Neg for Coefficient {
    type Output = Coefficient;
    fn neg(self) -> Coefficient {
        Coefficient(-self.0)
    }
}

impl fmt::Display for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

/// The factor list of a term: strictly ascending symbols, nonzero exponents.
///
/// Ordering walks both lists by ascending symbol, treating an absent symbol
/// as exponent 0; at the first symbol where the exponents differ, the larger
/// exponent sorts first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Monomial(Vec<(SymbolId, i64)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn symbol(id: SymbolId) -> Self {
        Monomial(vec![(id, 1)])
    }

    /// Builds a monomial from arbitrary `(symbol, exponent)` pairs, summing
    /// repeated symbols and dropping zero exponents.
    pub fn from_factors(factors: impl IntoIterator<Item = (SymbolId, i64)>) -> Self {
        let mut v: Vec<(SymbolId, i64)> = factors.into_iter().collect();
        v.sort_by_key(|f| f.0);
        let mut out: Vec<(SymbolId, i64)> = Vec::with_capacity(v.len());
        for (s, e) in v {
            match out.last_mut() {
                Some(last) if last.0 == s => {
                    last.1 = last.1.checked_add(e).expect("exponent overflow")
                }
                _ => out.push((s, e)),
            }
        }
        out.retain(|f| f.1 != 0);
        Monomial(out)
    }

    /// Wraps a factor list that is already canonical. Returns `None` if it
    /// is not strictly ascending or contains a zero exponent.
    pub fn from_canonical(factors: Vec<(SymbolId, i64)>) -> Option<Self> {
        let ascending = factors.windows(2).all(|w| w[0].0 < w[1].0);
        if ascending && factors.iter().all(|f| f.1 != 0) {
            Some(Monomial(factors))
        } else {
            None
        }
    }

    pub fn factors(&self) -> &[(SymbolId, i64)] {
        &self.0
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    /// Exponent of `sym`, 0 when absent.
    pub fn degree(&self, sym: SymbolId) -> i64 {
        self.0
            .binary_search_by_key(&sym, |f| f.0)
            .map(|i| self.0[i].1)
            .unwrap_or(0)
    }

    /// The monomial with `sym` removed, together with its exponent.
    pub fn split_off(&self, sym: SymbolId) -> (i64, Monomial) {
        match self.0.binary_search_by_key(&sym, |f| f.0) {
            Ok(i) => {
                let mut rest = self.0.clone();
                let (_, e) = rest.remove(i);
                (e, Monomial(rest))
            }
            Err(_) => (0, self.clone()),
        }
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let (a, b) = (&self.0, &other.0);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    let e = a[i].1.checked_add(b[j].1).expect("exponent overflow");
                    if e != 0 {
                        out.push((a[i].0, e));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Monomial(out)
    }

    /// Raises every exponent to the `n`-th multiple.
    pub fn pow(&self, n: i64) -> Monomial {
        if n == 0 {
            return Monomial::one();
        }
        Monomial(
            self.0
                .iter()
                .map(|&(s, e)| (s, e.checked_mul(n).expect("exponent overflow")))
                .collect(),
        )
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (&self.0, &other.0);
        let (mut i, mut j) = (0, 0);
        loop {
            let (ea, eb) = match (a.get(i), b.get(j)) {
                (None, None) => return Ordering::Equal,
                (Some(&(_, ea)), None) => {
                    i += 1;
                    (ea, 0)
                }
                (None, Some(&(_, eb))) => {
                    j += 1;
                    (0, eb)
                }
                (Some(&(sa, ea)), Some(&(sb, eb))) => match sa.cmp(&sb) {
                    Ordering::Less => {
                        i += 1;
                        (ea, 0)
                    }
                    Ordering::Greater => {
                        j += 1;
                        (0, eb)
                    }
                    Ordering::Equal => {
                        i += 1;
                        j += 1;
                        (ea, eb)
                    }
                },
            };
            if ea != eb {
                // larger exponent first
                return eb.cmp(&ea);
            }
        }
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Term {
    pub coeff: Coefficient,
    pub key: Monomial,
}

impl Term {
    pub fn new(coeff: Coefficient, key: Monomial) -> Self {
        Term { coeff, key }
    }

    pub fn constant(coeff: Coefficient) -> Self {
        Term { coeff, key: Monomial::one() }
    }

    pub fn one() -> Self {
        Term::constant(Coefficient::one())
    }

    pub fn symbol(id: SymbolId) -> Self {
        Term { coeff: Coefficient::one(), key: Monomial::symbol(id) }
    }

    pub fn is_zero(&self) -> bool {
        self.coeff.is_zero()
    }

    pub fn negated(&self) -> Term {
        Term { coeff: -self.coeff.clone(), key: self.key.clone() }
    }

    /// Canonical text form: always-signed coefficient, magnitude 1 elided
    /// unless the term is a constant, then `*sym^exp` factors with `^1`
    /// elided. Example: `+3*a*b`, `-1/2*x^-2`, `+b^2`, `-1`.
    pub fn canonical_text(&self, names: &(impl SymbolNames + ?Sized)) -> String {
        let mut s = String::new();
        s.push(if self.coeff.is_negative() { '-' } else { '+' });
        s.push_str(&self.unsigned_text(names));
        s
    }

    /// Text of `|coeff| * factors` without a sign, coefficient 1 elided.
    pub fn unsigned_text(&self, names: &(impl SymbolNames + ?Sized)) -> String {
        let mag = self.coeff.abs();
        let mut s = String::new();
        let elide = mag.is_one() && !self.key.is_one();
        if !elide {
            s.push_str(&mag.to_string());
        }
        for (k, &(sym, e)) in self.key.factors().iter().enumerate() {
            if !(elide && k == 0) {
                s.push('*');
            }
            s.push_str(names.name(sym));
            if e != 1 {
                s.push('^');
                s.push_str(&e.to_string());
            }
        }
        s
    }

    /// Evaluates the term with `values[sym]` substituted for each symbol.
    /// `None` if a negative power of zero is required.
    pub fn evaluate(&self, values: &[BigRational]) -> Option<BigRational> {
        let mut acc = self.coeff.as_rational().clone();
        for &(sym, e) in self.key.factors() {
            let v = Coefficient::from_rational(values[sym.index()].clone()).pow(e)?;
            acc *= v.into_rational();
        }
        Some(acc)
    }
}

/// Symbol name lookup used by text rendering.
pub trait SymbolNames {
    fn name(&self, sym: SymbolId) -> &str;
}

impl SymbolNames for [String] {
    fn name(&self, sym: SymbolId) -> &str {
        &self[sym.index()]
    }
}

impl SymbolNames for Vec<String> {
    fn name(&self, sym: SymbolId) -> &str {
        &self[sym.index()]
    }
}

/// Total order on monomial keys; coefficients are ignored.
pub fn compare_terms(t1: &Term, t2: &Term) -> Ordering {
    t1.key.cmp(&t2.key)
}

/// Sums two terms with equal keys; `None` when they cancel.
///
/// Panics if the keys differ.
pub fn merge_like(t1: &Term, t2: &Term) -> Option<Term> {
    assert!(t1.key == t2.key, "merge_like called on terms with different keys");
    let coeff = &t1.coeff + &t2.coeff;
    if coeff.is_zero() {
        None
    } else {
        Some(Term { coeff, key: t1.key.clone() })
    }
}

pub fn multiply_terms(t1: &Term, t2: &Term) -> Term {
    Term { coeff: &t1.coeff * &t2.coeff, key: t1.key.mul(&t2.key) }
}

/// A small in-memory polynomial: a list of terms. Most operations keep it
/// in sorted state (strictly ascending keys, no zero coefficients).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Expression {
    pub terms: Vec<Term>,
}

impl Expression {
    pub fn zero() -> Self {
        Expression { terms: Vec::new() }
    }

    pub fn from_term(t: Term) -> Self {
        Expression::from_terms(vec![t])
    }

    /// Sorts and combines arbitrary terms into sorted state.
    pub fn from_terms(mut terms: Vec<Term>) -> Self {
        terms.sort_by(compare_terms);
        Expression { terms: combine_sorted(terms) }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// True when strictly ascending with no zero coefficients.
    pub fn is_sorted(&self) -> bool {
        self.terms.iter().all(|t| !t.is_zero())
            && self.terms.windows(2).all(|w| compare_terms(&w[0], &w[1]) == Ordering::Less)
    }

    /// The single term of a one-term expression.
    pub fn as_monomial(&self) -> Option<&Term> {
        match self.terms.as_slice() {
            [t] => Some(t),
            _ => None,
        }
    }

    pub fn add(&self, other: &Expression) -> Expression {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Expression::from_terms(terms)
    }

    pub fn negate(&self) -> Expression {
        Expression { terms: self.terms.iter().map(Term::negated).collect() }
    }

    pub fn mul(&self, other: &Expression) -> Expression {
        let mut terms = Vec::with_capacity(self.len() * other.len());
        for a in &self.terms {
            for b in &other.terms {
                terms.push(multiply_terms(a, b));
            }
        }
        Expression::from_terms(terms)
    }

    pub fn scale(&self, t: &Term) -> Expression {
        Expression::from_terms(self.terms.iter().map(|a| multiply_terms(a, t)).collect())
    }

    pub fn evaluate(&self, values: &[BigRational]) -> Option<BigRational> {
        let mut acc = BigRational::zero();
        for t in &self.terms {
            acc += t.evaluate(values)?;
        }
        Some(acc)
    }

    /// Human-readable form, e.g. `14*a^2 + b^2`, `0` when empty.
    pub fn display_text(&self, names: &(impl SymbolNames + ?Sized)) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut s = String::new();
        for (i, t) in self.terms.iter().enumerate() {
            let neg = t.coeff.is_negative();
            match (i, neg) {
                (0, false) => {}
                (0, true) => s.push('-'),
                (_, false) => s.push_str(" + "),
                (_, true) => s.push_str(" - "),
            }
            s.push_str(&t.unsigned_text(names));
        }
        s
    }
}

/// Combines adjacent equal keys of an already key-sorted list and drops
/// zero sums.
pub fn combine_sorted(terms: Vec<Term>) -> Vec<Term> {
    let mut out: Vec<Term> = Vec::with_capacity(terms.len());
    for t in terms {
        match out.last_mut() {
            Some(last) if last.key == t.key => {
                last.coeff = &last.coeff + &t.coeff;
            }
            _ => out.push(t),
        }
    }
    out.retain(|t| !t.is_zero());
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("power of an expression requires a positive exponent, got {0}")]
pub struct PowerDomainError(pub i64);

/// `e^n` fully expanded and sorted, by binary exponentiation.
pub fn power_expression(e: &Expression, n: i64) -> Result<Expression, PowerDomainError> {
    if n <= 0 {
        return Err(PowerDomainError(n));
    }
    let mut acc: Option<Expression> = None;
    let mut base = Expression::from_terms(e.terms.clone());
    let mut k = n;
    while k > 0 {
        if k & 1 == 1 {
            acc = Some(match acc {
                None => base.clone(),
                Some(a) => a.mul(&base),
            });
        }
        k >>= 1;
        if k > 0 {
            base = base.mul(&base);
        }
    }
    Ok(acc.unwrap_or_else(Expression::zero))
}
