//! Reference evaluator used by tests.
//!
//! Runs a program entirely in memory with dense exponent vectors and a hash
//! map of coefficients: no streaming, no spilling, no parallelism, and none
//! of the engine's or sorter's code paths. Literals are evaluated straight
//! from the syntax tree; the compiler is only consulted so that the oracle
//! rejects exactly the programs the real front end rejects.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::lang::{self, ExprAst, ProgramAst, StmtAst, StmtKind};
use crate::term::{Coefficient, Expression, Monomial, SymbolId, Term};
use crate::Error;

type Exponents = Vec<i64>;

#[derive(Debug, Clone, Default)]
struct Poly(HashMap<Exponents, BigRational>);

impl Poly {
    fn constant(n: usize, c: BigRational) -> Poly {
        let mut m = HashMap::new();
        if !c.is_zero() {
            m.insert(vec![0; n], c);
        }
        Poly(m)
    }

    fn add_term(&mut self, e: Exponents, c: BigRational) {
        let slot = self.0.entry(e.clone()).or_insert_with(BigRational::zero);
        *slot += c;
        if slot.is_zero() {
            self.0.remove(&e);
        }
    }

    fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (e, c) in &other.0 {
            out.add_term(e.clone(), c.clone());
        }
        out
    }

    fn neg(&self) -> Poly {
        Poly(self.0.iter().map(|(e, c)| (e.clone(), -c.clone())).collect())
    }

    fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::default();
        for (e1, c1) in &self.0 {
            for (e2, c2) in &other.0 {
                let e: Exponents = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                out.add_term(e, c1 * c2);
            }
        }
        out
    }

    fn single(&self) -> Option<(&Exponents, &BigRational)> {
        if self.0.len() == 1 {
            self.0.iter().next()
        } else {
            None
        }
    }

    fn to_expression(&self) -> Expression {
        Expression::from_terms(
            self.0
                .iter()
                .map(|(e, c)| {
                    let key = Monomial::from_factors(
                        e.iter().enumerate().map(|(i, &x)| (SymbolId(i as u32), x)),
                    );
                    Term::new(Coefficient::from_rational(c.clone()), key)
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone)]
pub struct OracleOutput {
    pub symbols: Vec<String>,
    /// Final expressions in declaration order.
    pub expressions: Vec<(String, Expression)>,
    /// Expressions after each module.
    pub snapshots: Vec<Vec<(String, Expression)>>,
}

impl OracleOutput {
    pub fn get(&self, name: &str) -> Option<&Expression> {
        self.expressions.iter().find(|(n, _)| n == name).map(|(_, e)| e)
    }

    pub fn snapshot(&self, module: usize, name: &str) -> Option<&Expression> {
        self.snapshots.get(module)?.iter().find(|(n, _)| n == name).map(|(_, e)| e)
    }
}

struct Eval {
    symbols: HashMap<String, usize>,
    n: usize,
}

impl Eval {
    fn literal(&self, e: &ExprAst) -> Poly {
        match e {
            ExprAst::Int(v) => Poly::constant(self.n, BigRational::from_integer(BigInt::from(v.clone()))),
            ExprAst::Sym(name, _) => {
                let mut ex = vec![0; self.n];
                ex[self.symbols[name]] = 1;
                let mut p = Poly::default();
                p.add_term(ex, BigRational::one());
                p
            }
            ExprAst::Neg(a) => self.literal(a).neg(),
            ExprAst::Add(a, b) => self.literal(a).add(&self.literal(b)),
            ExprAst::Sub(a, b) => self.literal(a).add(&self.literal(b).neg()),
            ExprAst::Mul(a, b) => self.literal(a).mul(&self.literal(b)),
            ExprAst::Div(a, b) => {
                let den = self.literal(b);
                let (e, c) = den.single().expect("compiler accepted divisor");
                let mut inv = Poly::default();
                inv.add_term(e.iter().map(|x| -x).collect(), c.recip());
                self.literal(a).mul(&inv)
            }
            ExprAst::Pow(base, exp) => {
                let k = match exp.as_ref() {
                    ExprAst::Int(v) => i64::try_from(v).expect("small exponent"),
                    ExprAst::Neg(inner) => match inner.as_ref() {
                        ExprAst::Int(v) => -i64::try_from(v).expect("small exponent"),
                        _ => unreachable!("compiler accepted exponent"),
                    },
                    _ => unreachable!("compiler accepted exponent"),
                };
                let b = self.literal(base);
                let b = if k < 0 {
                    let (e, c) = b.single().expect("monomial base");
                    let mut inv = Poly::default();
                    inv.add_term(e.iter().map(|x| -x).collect(), c.recip());
                    inv
                } else {
                    b
                };
                let mut acc = Poly::constant(self.n, BigRational::one());
                for _ in 0..k.unsigned_abs() {
                    acc = acc.mul(&b);
                }
                acc
            }
        }
    }

    /// Applies a module's statements to every term, one statement at a time
    /// over the whole current term list.
    fn apply(&self, statements: &[StmtAst], poly: &Poly, names: &[String]) -> Result<Poly, Error> {
        let mut terms: Vec<(Exponents, BigRational)> = poly.0.iter().map(|(e, c)| (e.clone(), c.clone())).collect();
        for s in statements {
            terms = self.apply_one(s, terms, names)?;
        }
        let mut out = Poly::default();
        for (e, c) in terms {
            out.add_term(e, c);
        }
        Ok(out)
    }

    fn apply_one(
        &self,
        s: &StmtAst,
        terms: Vec<(Exponents, BigRational)>,
        names: &[String],
    ) -> Result<Vec<(Exponents, BigRational)>, Error> {
        Ok(match &s.kind {
            StmtKind::Id(target, rhs) => {
                let x = self.symbols[target];
                let rhs = self.literal(rhs);
                let mut out = Vec::new();
                for (mut e, c) in terms {
                    let k = e[x];
                    if k < 0 {
                        return Err(Error::Runtime(format!("cannot substitute {} (negative power)", names[x])));
                    }
                    e[x] = 0;
                    let mut acc = Poly::default();
                    acc.add_term(e, c);
                    for _ in 0..k {
                        acc = acc.mul(&rhs);
                    }
                    out.extend(acc.0);
                }
                out
            }
            StmtKind::Multiply(f) => {
                let f = self.literal(f);
                let mut out = Vec::new();
                for (e, c) in terms {
                    for (fe, fc) in &f.0 {
                        out.push((e.iter().zip(fe).map(|(a, b)| a + b).collect(), &c * fc));
                    }
                }
                out
            }
            StmtKind::If { symbol, relation, value, body } => {
                let x = self.symbols[symbol];
                let mut out = Vec::new();
                for t in terms {
                    if relation.holds(t.0[x], *value) {
                        let mut sub = vec![t];
                        for b in body {
                            sub = self.apply_one(b, sub, names)?;
                        }
                        out.extend(sub);
                    } else {
                        out.push(t);
                    }
                }
                out
            }
            StmtKind::Symbols(_) | StmtKind::Local(..) | StmtKind::Print(_) => terms,
        })
    }
}

/// Evaluates `source` naively in memory.
pub fn oracle_expand(source: &str) -> Result<OracleOutput, Error> {
    let ast: ProgramAst = lang::parse(&lang::lex(source)?)?;
    let compiled = lang::compile(&ast)?;
    let names = compiled.symbols.clone();
    let eval = Eval {
        symbols: names.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect(),
        n: names.len(),
    };
    let mut exprs: Vec<(String, Poly)> = Vec::new();
    let mut snapshots = Vec::new();
    for (i, m) in ast.modules.iter().enumerate() {
        if i == 0 {
            for s in &m.statements {
                if let StmtKind::Local(name, e) = &s.kind {
                    exprs.push((name.clone(), eval.literal(e)));
                }
            }
        }
        for (_, p) in exprs.iter_mut() {
            *p = eval.apply(&m.statements, p, &names)?;
        }
        snapshots.push(exprs.iter().map(|(n, p)| (n.clone(), p.to_expression())).collect());
    }
    let expressions = snapshots.last().cloned().unwrap_or_default();
    Ok(OracleOutput { symbols: names, expressions, snapshots })
}
