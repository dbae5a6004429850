//! Recursive-descent parser producing an unresolved syntax tree, and the
//! matching pretty-printer.

use std::fmt::{self, Write as _};

use num_bigint::BigUint;

use super::lexer::{DotInstruction, Keyword, Token, TokenKind};
use super::{LangError, Location};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprAst {
    Int(BigUint),
    Sym(String, Location),
    Neg(Box<ExprAst>),
    Add(Box<ExprAst>, Box<ExprAst>),
    Sub(Box<ExprAst>, Box<ExprAst>),
    Mul(Box<ExprAst>, Box<ExprAst>),
    Div(Box<ExprAst>, Box<ExprAst>),
    Pow(Box<ExprAst>, Box<ExprAst>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Relation {
    pub fn holds(self, lhs: i64, rhs: i64) -> bool {
        match self {
            Relation::Eq => lhs == rhs,
            Relation::Ne => lhs != rhs,
            Relation::Lt => lhs < rhs,
            Relation::Le => lhs <= rhs,
            Relation::Gt => lhs > rhs,
            Relation::Ge => lhs >= rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Eq => "==",
            Relation::Ne => "!=",
            Relation::Lt => "<",
            Relation::Le => "<=",
            Relation::Gt => ">",
            Relation::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtKind {
    Symbols(Vec<(String, Location)>),
    Local(String, ExprAst),
    Id(String, ExprAst),
    If { symbol: String, relation: Relation, value: i64, body: Vec<StmtAst> },
    Multiply(ExprAst),
    Print(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StmtAst {
    pub kind: StmtKind,
    pub loc: Location,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleAst {
    pub statements: Vec<StmtAst>,
    pub terminator: DotInstruction,
    pub loc: Location,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgramAst {
    pub modules: Vec<ModuleAst>,
}

struct Parser<'t> {
    tokens: &'t [Token],
    pos: usize,
}

pub fn parse(tokens: &[Token]) -> Result<ProgramAst, LangError> {
    Parser { tokens, pos: 0 }.program()
}

impl<'t> Parser<'t> {
    fn peek(&self) -> Option<&'t TokenKind> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    fn loc(&self) -> Location {
        match self.tokens.get(self.pos) {
            Some(t) => t.loc,
            None => self.tokens.last().map(|t| t.loc).unwrap_or(Location { line: 1, col: 1 }),
        }
    }

    fn bump(&mut self) -> Option<&'t Token> {
        let t = self.tokens.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T, LangError> {
        Err(LangError::new(self.loc(), msg))
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek() == Some(kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: &TokenKind, what: &str) -> Result<(), LangError> {
        if self.eat(kind) {
            Ok(())
        } else {
            match self.peek() {
                Some(found) => self.error(format!("expected {what}, found {}", describe(found))),
                None => self.error(format!("expected {what}, found end of input")),
            }
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Location), LangError> {
        let loc = self.loc();
        match self.peek() {
            Some(TokenKind::Ident(name)) => {
                self.pos += 1;
                Ok((name.clone(), loc))
            }
            Some(found) => self.error(format!("expected {what}, found {}", describe(found))),
            None => self.error(format!("expected {what}, found end of input")),
        }
    }

    fn program(&mut self) -> Result<ProgramAst, LangError> {
        let mut modules = Vec::new();
        let mut statements = Vec::new();
        let mut module_loc = self.loc();
        while let Some(kind) = self.peek() {
            if let TokenKind::Dot(d) = kind {
                self.pos += 1;
                modules.push(ModuleAst {
                    statements: std::mem::take(&mut statements),
                    terminator: *d,
                    loc: module_loc,
                });
                if *d == DotInstruction::End {
                    if self.peek().is_some() {
                        return self.error("statements after .end");
                    }
                    return Ok(ProgramAst { modules });
                }
                module_loc = self.loc();
                continue;
            }
            statements.push(self.statement()?);
        }
        if !statements.is_empty() {
            return Err(LangError::new(module_loc, "module not terminated"));
        }
        if modules.is_empty() {
            return Err(LangError::new(module_loc, "program has no modules"));
        }
        Err(LangError::new(module_loc, "program not terminated by .end"))
    }

    fn statement(&mut self) -> Result<StmtAst, LangError> {
        let loc = self.loc();
        let kind = match self.bump().map(|t| &t.kind) {
            Some(TokenKind::Keyword(Keyword::Symbols)) => {
                let mut names = vec![self.ident("symbol name")?];
                while self.eat(&TokenKind::Comma) {
                    names.push(self.ident("symbol name")?);
                }
                self.expect(&TokenKind::Semi, "';'")?;
                StmtKind::Symbols(names)
            }
            Some(TokenKind::Keyword(Keyword::Local)) => {
                let (name, _) = self.ident("expression name")?;
                self.expect(&TokenKind::Assign, "'='")?;
                let e = self.sum()?;
                self.expect(&TokenKind::Semi, "';'")?;
                StmtKind::Local(name, e)
            }
            Some(TokenKind::Keyword(Keyword::Id)) => {
                let (target, _) = self.ident("symbol to substitute")?;
                self.expect(&TokenKind::Assign, "'='")?;
                let e = self.sum()?;
                self.expect(&TokenKind::Semi, "';'")?;
                StmtKind::Id(target, e)
            }
            Some(TokenKind::Keyword(Keyword::Multiply)) => {
                let e = self.sum()?;
                self.expect(&TokenKind::Semi, "';'")?;
                StmtKind::Multiply(e)
            }
            Some(TokenKind::Keyword(Keyword::Print)) => {
                let (name, _) = self.ident("expression name")?;
                self.expect(&TokenKind::Semi, "';'")?;
                StmtKind::Print(name)
            }
            Some(TokenKind::Keyword(Keyword::If)) => self.if_statement()?,
            Some(found) => {
                self.pos -= 1;
                return self.error(format!("expected a statement, found {}", describe(found)));
            }
            None => return self.error("expected a statement, found end of input"),
        };
        Ok(StmtAst { kind, loc })
    }

    fn if_statement(&mut self) -> Result<StmtKind, LangError> {
        self.expect(&TokenKind::LParen, "'('")?;
        self.expect(&TokenKind::Keyword(Keyword::Degree), "'degree'")?;
        self.expect(&TokenKind::LParen, "'('")?;
        let (symbol, _) = self.ident("symbol name")?;
        self.expect(&TokenKind::RParen, "')'")?;
        let relation = match self.bump().map(|t| &t.kind) {
            Some(TokenKind::EqEq) => Relation::Eq,
            Some(TokenKind::NotEq) => Relation::Ne,
            Some(TokenKind::Less) => Relation::Lt,
            Some(TokenKind::LessEq) => Relation::Le,
            Some(TokenKind::Greater) => Relation::Gt,
            Some(TokenKind::GreaterEq) => Relation::Ge,
            _ => {
                self.pos -= 1;
                return self.error("expected a relation (==, !=, <, <=, >, >=)");
            }
        };
        let negative = self.eat(&TokenKind::Minus);
        let value = match self.peek() {
            Some(TokenKind::Int(n)) => {
                let v: i64 = n.try_into().map_err(|_| LangError::new(self.loc(), "integer too large"))?;
                self.pos += 1;
                if negative {
                    -v
                } else {
                    v
                }
            }
            _ => return self.error("expected an integer"),
        };
        self.expect(&TokenKind::RParen, "')'")?;
        let body = if self.eat(&TokenKind::Semi) {
            let mut body = Vec::new();
            loop {
                match self.peek() {
                    Some(TokenKind::Keyword(Keyword::EndIf)) => {
                        self.pos += 1;
                        self.expect(&TokenKind::Semi, "';'")?;
                        break;
                    }
                    Some(TokenKind::Dot(_)) | None => return self.error("missing endif"),
                    _ => body.push(self.statement()?),
                }
            }
            body
        } else {
            vec![self.statement()?]
        };
        Ok(StmtKind::If { symbol, relation, value, body })
    }

    fn sum(&mut self) -> Result<ExprAst, LangError> {
        let mut lhs = self.product()?;
        loop {
            if self.eat(&TokenKind::Plus) {
                lhs = ExprAst::Add(Box::new(lhs), Box::new(self.product()?));
            } else if self.eat(&TokenKind::Minus) {
                lhs = ExprAst::Sub(Box::new(lhs), Box::new(self.product()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn product(&mut self) -> Result<ExprAst, LangError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(&TokenKind::Star) {
                lhs = ExprAst::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(&TokenKind::Slash) {
                lhs = ExprAst::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<ExprAst, LangError> {
        if self.eat(&TokenKind::Minus) {
            Ok(ExprAst::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<ExprAst, LangError> {
        let base = self.primary()?;
        if self.eat(&TokenKind::Caret) {
            Ok(ExprAst::Pow(Box::new(base), Box::new(self.unary()?)))
        } else {
            Ok(base)
        }
    }

    fn primary(&mut self) -> Result<ExprAst, LangError> {
        let loc = self.loc();
        match self.bump().map(|t| &t.kind) {
            Some(TokenKind::Int(n)) => Ok(ExprAst::Int(n.clone())),
            Some(TokenKind::Ident(name)) => Ok(ExprAst::Sym(name.clone(), loc)),
            Some(TokenKind::LParen) => {
                let e = self.sum()?;
                self.expect(&TokenKind::RParen, "')'")?;
                Ok(e)
            }
            Some(found) => {
                self.pos -= 1;
                self.error(format!("expected an operand, found {}", describe(found)))
            }
            None => self.error("expected an operand, found end of input"),
        }
    }
}

fn describe(kind: &TokenKind) -> String {
    match kind {
        TokenKind::Keyword(k) => format!("keyword {k:?}").to_lowercase(),
        TokenKind::Ident(s) => format!("identifier '{s}'"),
        TokenKind::Int(n) => format!("integer {n}"),
        TokenKind::Dot(DotInstruction::Sort) => "'.sort'".into(),
        TokenKind::Dot(DotInstruction::End) => "'.end'".into(),
        other => format!("{other:?}"),
    }
}

// Pretty-printing. Binary operators are always parenthesized so the printed
// text reparses to the identical tree.

impl fmt::Display for ExprAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExprAst::Int(n) => write!(f, "{n}"),
            ExprAst::Sym(s, _) => write!(f, "{s}"),
            ExprAst::Neg(e) => write!(f, "-{}", Unary(e)),
            ExprAst::Add(a, b) => write!(f, "({a} + {b})"),
            ExprAst::Sub(a, b) => write!(f, "({a} - {b})"),
            ExprAst::Mul(a, b) => write!(f, "({a} * {b})"),
            ExprAst::Div(a, b) => write!(f, "({a} / {b})"),
            ExprAst::Pow(base, exp) => write!(f, "{}^{}", Primary(base), Unary(exp)),
        }
    }
}

/// Renders an operand in a position that only accepts a primary.
struct Primary<'a>(&'a ExprAst);

impl fmt::Display for Primary<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            ExprAst::Neg(_) | ExprAst::Pow(..) => write!(f, "({})", self.0),
            e => write!(f, "{e}"),
        }
    }
}

/// Renders an operand in a position that accepts a unary expression.
struct Unary<'a>(&'a ExprAst);

impl fmt::Display for Unary<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn write_statement(out: &mut String, s: &StmtAst, indent: usize) {
    let pad = "  ".repeat(indent);
    out.push_str(&pad);
    match &s.kind {
        StmtKind::Symbols(names) => {
            let list: Vec<&str> = names.iter().map(|(n, _)| n.as_str()).collect();
            let _ = writeln!(out, "Symbols {};", list.join(", "));
        }
        StmtKind::Local(name, e) => {
            let _ = writeln!(out, "Local {name} = {e};");
        }
        StmtKind::Id(target, e) => {
            let _ = writeln!(out, "id {target} = {e};");
        }
        StmtKind::Multiply(e) => {
            let _ = writeln!(out, "multiply {e};");
        }
        StmtKind::Print(name) => {
            let _ = writeln!(out, "print {name};");
        }
        StmtKind::If { symbol, relation, value, body } => {
            let _ = writeln!(out, "if (degree({symbol}) {} {value});", relation.symbol());
            for b in body {
                write_statement(out, b, indent + 1);
            }
            out.push_str(&pad);
            out.push_str("endif;\n");
        }
    }
}

impl fmt::Display for ProgramAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        for m in &self.modules {
            for s in &m.statements {
                write_statement(&mut out, s, 0);
            }
            out.push_str(match m.terminator {
                DotInstruction::Sort => ".sort\n",
                DotInstruction::End => ".end\n",
            });
        }
        f.write_str(&out)
    }
}
