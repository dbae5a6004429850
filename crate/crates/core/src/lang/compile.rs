use std::collections::HashMap;

use num_bigint::BigInt;

use super::parser::{ExprAst, ProgramAst, StmtAst, StmtKind};
use super::{LangError, Location, Module, Program, Statement};
use crate::term::{power_expression, Coefficient, Expression, SymbolId, Term};

#[derive(Default)]
struct Scope {
    symbols: Vec<String>,
    symbol_ids: HashMap<String, SymbolId>,
    expressions: Vec<String>,
}

impl Scope {
    fn symbol(&self, name: &str, loc: Location) -> Result<SymbolId, LangError> {
        match self.symbol_ids.get(name) {
            Some(&id) => Ok(id),
            None if self.expressions.iter().any(|e| e == name) => Err(LangError::new(
                loc,
                format!("expression {name} cannot be used where a symbol is expected"),
            )),
            None => Err(LangError::new(loc, format!("undeclared symbol {name}"))),
        }
    }

    fn is_declared(&self, name: &str) -> bool {
        self.symbol_ids.contains_key(name) || self.expressions.iter().any(|e| e == name)
    }
}

/// Resolves identifiers, expands literal expressions and checks statement
/// placement.
pub fn compile(ast: &ProgramAst) -> Result<Program, LangError> {
    let mut scope = Scope::default();
    let mut modules = Vec::with_capacity(ast.modules.len());
    for (index, m) in ast.modules.iter().enumerate() {
        let mut statements = Vec::with_capacity(m.statements.len());
        for s in &m.statements {
            statements.push(compile_statement(s, index, &mut scope)?);
        }
        modules.push(Module { statements, terminator: m.terminator });
    }
    Ok(Program { symbols: scope.symbols, expressions: scope.expressions, modules })
}

fn compile_statement(s: &StmtAst, module: usize, scope: &mut Scope) -> Result<Statement, LangError> {
    let err = |msg: String| Err(LangError::new(s.loc, msg));
    Ok(match &s.kind {
        StmtKind::Symbols(names) => {
            if module != 0 {
                return err("symbol declarations are only allowed in the first module".into());
            }
            let mut ids = Vec::with_capacity(names.len());
            for (name, loc) in names {
                if scope.is_declared(name) {
                    return Err(LangError::new(*loc, format!("{name} is already declared")));
                }
                let id = SymbolId(scope.symbols.len() as u32);
                scope.symbols.push(name.clone());
                scope.symbol_ids.insert(name.clone(), id);
                ids.push(id);
            }
            Statement::DeclareSymbols(ids)
        }
        StmtKind::Local(name, e) => {
            if module != 0 {
                return err("Local is only allowed in the first module".into());
            }
            if scope.is_declared(name) {
                return err(format!("{name} is already declared"));
            }
            let value = literal(e, scope, s.loc)?;
            scope.expressions.push(name.clone());
            Statement::DefineLocal { name: name.clone(), value }
        }
        StmtKind::Id(target, e) => {
            let target = scope.symbol(target, s.loc)?;
            Statement::Substitute { target, rhs: literal(e, scope, s.loc)? }
        }
        StmtKind::Multiply(e) => Statement::Multiply(literal(e, scope, s.loc)?),
        StmtKind::Print(name) => {
            if !scope.expressions.iter().any(|e| e == name) {
                return err(format!("undeclared expression {name}"));
            }
            Statement::Print(name.clone())
        }
        StmtKind::If { symbol, relation, value, body } => {
            let symbol = scope.symbol(symbol, s.loc)?;
            let mut compiled = Vec::with_capacity(body.len());
            for b in body {
                match b.kind {
                    StmtKind::Multiply(_) => compiled.push(compile_statement(b, module, scope)?),
                    _ => {
                        return Err(LangError::new(b.loc, "only multiply statements are allowed inside if"))
                    }
                }
            }
            Statement::IfDegree { symbol, relation: *relation, value: *value, body: compiled }
        }
    })
}

fn literal(e: &ExprAst, scope: &Scope, stmt_loc: Location) -> Result<Expression, LangError> {
    let err = |msg: &str| Err(LangError::new(stmt_loc, msg));
    Ok(match e {
        ExprAst::Int(n) => Expression::from_term(Term::constant(Coefficient::from_integer(BigInt::from(n.clone())))),
        ExprAst::Sym(name, loc) => Expression::from_term(Term::symbol(scope.symbol(name, *loc)?)),
        ExprAst::Neg(a) => literal(a, scope, stmt_loc)?.negate(),
        ExprAst::Add(a, b) => literal(a, scope, stmt_loc)?.add(&literal(b, scope, stmt_loc)?),
        ExprAst::Sub(a, b) => literal(a, scope, stmt_loc)?.add(&literal(b, scope, stmt_loc)?.negate()),
        ExprAst::Mul(a, b) => literal(a, scope, stmt_loc)?.mul(&literal(b, scope, stmt_loc)?),
        ExprAst::Div(a, b) => {
            let num = literal(a, scope, stmt_loc)?;
            let den = literal(b, scope, stmt_loc)?;
            if den.is_zero() {
                return err("division by zero");
            }
            let Some(d) = den.as_monomial() else {
                return err("division by a sum");
            };
            let inv = Term::new(d.coeff.recip().expect("nonzero"), d.key.pow(-1));
            num.scale(&inv)
        }
        ExprAst::Pow(base, exp) => {
            let n = match exp.as_ref() {
                ExprAst::Int(n) => i64::try_from(n).ok(),
                ExprAst::Neg(inner) => match inner.as_ref() {
                    ExprAst::Int(n) => i64::try_from(n).ok().map(|v| -v),
                    _ => return err("power by a non-literal exponent"),
                },
                _ => return err("power by a non-literal exponent"),
            };
            let Some(n) = n else {
                return err("exponent too large");
            };
            let base = literal(base, scope, stmt_loc)?;
            match base.as_monomial() {
                // a single nonzero term takes any integer power
                Some(t) => {
                    let coeff = t.coeff.pow(n).expect("nonzero coefficient");
                    Expression::from_term(Term::new(coeff, t.key.pow(n)))
                }
                None => match power_expression(&base, n) {
                    Ok(p) => p,
                    Err(_) if base.is_zero() => return err("zero raised to a non-positive power"),
                    Err(_) => return err("power of a sum by a non-positive literal"),
                },
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::super::{compile_source, FIG1_SOURCE};
    use super::*;
    use crate::term::Monomial;

    fn names(p: &Program) -> &[String] {
        &p.symbols
    }

    #[test]
    fn fig1_compiles() {
        let p = compile_source(FIG1_SOURCE).unwrap();
        assert_eq!(p.symbols, vec!["a", "b", "x"]);
        assert_eq!(p.expressions, vec!["expr"]);
        let init = p.initial_expressions();
        assert_eq!(init[0].1.display_text(names(&p)), "a*x + x^2");
        match &p.modules[0].statements[2] {
            Statement::Substitute { target, rhs } => {
                assert_eq!(*target, SymbolId(2));
                assert_eq!(rhs.display_text(names(&p)), "a + b");
            }
            other => panic!("unexpected {other:?}"),
        }
        match &p.modules[1].statements[0] {
            Statement::IfDegree { symbol, value, body, .. } => {
                assert_eq!((*symbol, *value), (SymbolId(1), 1));
                let [Statement::Multiply(f)] = body.as_slice() else { panic!() };
                let expected = Term::new(
                    Coefficient::from_integer(4),
                    Monomial::from_factors([(SymbolId(0), 1), (SymbolId(1), -1)]),
                );
                assert_eq!(f, &Expression::from_term(expected));
                assert_eq!(f.terms[0].canonical_text(names(&p)), "+4*a*b^-1");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn undeclared_symbol() {
        let err = compile_source("Symbols a;\nid y = a;\n.end").unwrap_err();
        assert_eq!(err.message, "undeclared symbol y");
        let err = compile_source("Symbols a;\nLocal e = a + q;\n.end").unwrap_err();
        assert_eq!(err.message, "undeclared symbol q");
        assert_eq!(err.loc, Location { line: 2, col: 15 });
    }

    #[test]
    fn placement_rules() {
        assert!(compile_source("Symbols a;\n.sort\nLocal e = a;\n.end").is_err());
        assert!(compile_source("Symbols a;\n.sort\nSymbols b;\n.end").is_err());
        assert!(compile_source("Symbols a, a;\n.end").is_err());
        assert!(compile_source("Symbols a;\nLocal a = 1;\n.end").is_err());
        assert!(compile_source("Symbols a;\nif (degree(a) == 1) id a = 2;\n.end").is_err());
        assert!(compile_source("Symbols a;\nprint e;\n.end").is_err());
    }

    #[test]
    fn literal_rules() {
        let ok = |src: &str| compile_source(&format!("Symbols a, b;\nLocal e = {src};\n.end"));
        assert_eq!(ok("(a+b)/(a+b)").unwrap_err().message, "division by a sum");
        assert_eq!(ok("a/0").unwrap_err().message, "division by zero");
        assert_eq!(ok("a^b").unwrap_err().message, "power by a non-literal exponent");
        assert_eq!(ok("(a+b)^-1").unwrap_err().message, "power of a sum by a non-positive literal");
        assert_eq!(ok("(a+b)^0").unwrap_err().message, "power of a sum by a non-positive literal");
        let p = ok("(2*a/b)^-2 + 0*a + a - a").unwrap();
        assert_eq!(p.initial_expressions()[0].1.terms[0].canonical_text(&p.symbols), "+1/4*a^-2*b^2");
        let p = ok("a - a").unwrap();
        assert!(p.initial_expressions()[0].1.is_zero());
        let p = ok("0").unwrap();
        assert!(p.initial_expressions()[0].1.is_zero());
    }

    #[test]
    fn literals_are_canonical() {
        let p = compile_source("Symbols a, b;\nLocal e = (a - b + 1/3)^3 * a^-1 - a^2;\n.end").unwrap();
        for (_, e) in p.initial_expressions() {
            assert!(e.is_sorted());
        }
    }
}
