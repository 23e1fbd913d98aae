//! Text formats: the KB file format, the conjunctive query format, and the
//! fact dump of a materialized store.
//!
//! KB files hold one statement per line. `#` starts a comment; blank lines
//! are ignored; `TBOX` and `ABOX` section headers are optional.

use std::fmt::{self, Write as _};

use crate::answer::{Cq, CqAtom, CqTerm};
use crate::kb::{Assertion, Axiom, ConceptId, Kb, BOT_NAME, TOP_NAME};
use crate::materialize::FactStore;
use crate::translate::Pred;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("line {line}, column {column}: {message}\n    {snippet}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub snippet: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Var(String),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Dot,
    Implies,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Var(s) => write!(f, "`?{s}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Dot => f.write_str("`.`"),
            Tok::Implies => f.write_str("`:-`"),
        }
    }
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-'
}

struct Source<'a> {
    lines: Vec<&'a str>,
}

impl<'a> Source<'a> {
    fn new(text: &'a str) -> Self {
        Source {
            lines: text.lines().collect(),
        }
    }

    fn error(&self, line: usize, column: usize, message: impl Into<String>) -> ParseError {
        let snippet = self
            .lines
            .get(line.saturating_sub(1))
            .copied()
            .unwrap_or("")
            .to_string();
        ParseError {
            line: line.max(1),
            column: column.max(1),
            message: message.into(),
            snippet,
        }
    }

    /// Tokenizes one line (1-based `line`), stopping at a `#` comment.
    fn lex_line(&self, line: usize) -> Result<Vec<Spanned>, ParseError> {
        let text = self.lines[line - 1];
        let chars: Vec<char> = text.chars().collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let column = i + 1;
            let single = |tok| Spanned { tok, line, column };
            match c {
                '#' => break,
                c if c.is_whitespace() => {
                    i += 1;
                    continue;
                }
                '(' => out.push(single(Tok::LParen)),
                ')' => out.push(single(Tok::RParen)),
                '{' => out.push(single(Tok::LBrace)),
                '}' => out.push(single(Tok::RBrace)),
                ',' => out.push(single(Tok::Comma)),
                '.' => out.push(single(Tok::Dot)),
                '⊤' => out.push(single(Tok::Ident(TOP_NAME.into()))),
                '⊥' => out.push(single(Tok::Ident(BOT_NAME.into()))),
                ':' if chars.get(i + 1) == Some(&'-') => {
                    out.push(single(Tok::Implies));
                    i += 2;
                    continue;
                }
                '?' => {
                    let start = i + 1;
                    let mut j = start;
                    while j < chars.len() && is_ident_char(chars[j]) {
                        j += 1;
                    }
                    if j == start {
                        return Err(self.error(line, column, "expected a variable name after `?`"));
                    }
                    out.push(single(Tok::Var(chars[start..j].iter().collect())));
                    i = j;
                    continue;
                }
                c if is_ident_char(c) => {
                    let mut j = i;
                    while j < chars.len() && is_ident_char(chars[j]) {
                        j += 1;
                    }
                    out.push(single(Tok::Ident(chars[i..j].iter().collect())));
                    i = j;
                    continue;
                }
                other => {
                    return Err(self.error(
                        line,
                        column,
                        format!("unexpected character `{other}`"),
                    ));
                }
            }
            i += 1;
        }
        Ok(out)
    }
}

/// A cursor over the tokens of one statement (KB) or one whole query.
struct Cursor<'s, 'a> {
    src: &'s Source<'a>,
    toks: Vec<Spanned>,
    pos: usize,
    /// Position reported when input ends.
    end: (usize, usize),
}

impl<'s, 'a> Cursor<'s, 'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|s| &s.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map_or(self.end, |s| (s.line, s.column))
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        let (line, column) = self.here();
        Err(self.src.error(line, column, message))
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|s| s.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if *t == want => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => {
                let msg = format!("expected {want}, found {t}");
                self.fail(msg)
            }
            None => self.fail(format!("expected {want}, found end of input")),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            Some(t) => {
                let msg = format!("expected {what}, found {t}");
                self.fail(msg)
            }
            None => self.fail(format!("expected {what}, found end of input")),
        }
    }

    fn keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn finish(&self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some(t) => {
                let msg = format!("unexpected {t} after end of statement");
                self.fail(msg)
            }
        }
    }
}

enum ClassExpr {
    Name(String),
    And(String, String),
    Some(String, String),
    SelfOf(String),
    Nominal(String),
}

fn parse_class_expr(c: &mut Cursor) -> Result<ClassExpr, ParseError> {
    // `some` and `self` are keywords only when a role name follows them.
    let role_follows = matches!(c.peek_at(1), Some(Tok::Ident(s)) if s != "SubClassOf");
    if c.keyword("some") && role_follows {
        c.next();
        let role = c.ident("a role name")?;
        let filler = c.ident("a filler concept")?;
        return Ok(ClassExpr::Some(role, filler));
    }
    if c.keyword("self") && role_follows {
        c.next();
        let role = c.ident("a role name")?;
        return Ok(ClassExpr::SelfOf(role));
    }
    if c.peek() == Some(&Tok::LBrace) {
        c.next();
        let ind = c.ident("an individual name")?;
        c.expect(Tok::RBrace)?;
        return Ok(ClassExpr::Nominal(ind));
    }
    let first = c.ident("a concept name")?;
    if c.keyword("and") {
        c.next();
        let second = c.ident("a concept name")?;
        return Ok(ClassExpr::And(first, second));
    }
    Ok(ClassExpr::Name(first))
}

fn parse_statement(kb: &mut Kb, c: &mut Cursor) -> Result<(), ParseError> {
    let sig = &mut kb.sig;
    // ABox assertion: Name ( ... )
    if matches!(c.peek(), Some(Tok::Ident(_))) && c.peek_at(1) == Some(&Tok::LParen) {
        let pred = c.ident("a predicate")?;
        c.expect(Tok::LParen)?;
        let a = c.ident("an individual name")?;
        if c.peek() == Some(&Tok::Comma) {
            c.next();
            let b = c.ident("an individual name")?;
            c.expect(Tok::RParen)?;
            c.finish()?;
            kb.assert_role(&pred, &a, &b);
        } else {
            c.expect(Tok::RParen)?;
            c.finish()?;
            kb.assert_concept(&pred, &a);
        }
        return Ok(());
    }
    let connective =
        matches!(c.peek_at(1), Some(Tok::Ident(s)) if s == "SubClassOf" || s == "SubRoleOf");
    if (c.keyword("transitive") || c.keyword("reflexive")) && !connective {
        let transitive = c.keyword("transitive");
        c.next();
        let r = sig.role(&c.ident("a role name")?);
        c.finish()?;
        kb.add_axiom(if transitive {
            Axiom::Transitive(r)
        } else {
            Axiom::Reflexive(r)
        });
        return Ok(());
    }
    if c.keyword("range") && !connective && c.peek_at(3).is_none() {
        c.next();
        let role = sig.role(&c.ident("a role name")?);
        let concept = sig.concept(&c.ident("a concept name")?);
        c.finish()?;
        kb.add_axiom(Axiom::Range { role, concept });
        return Ok(());
    }
    if matches!(c.peek_at(1), Some(Tok::Ident(s)) if s == "SubRoleOf") {
        let sub = sig.role(&c.ident("a role name")?);
        c.next();
        let sup = sig.role(&c.ident("a role name")?);
        c.finish()?;
        kb.add_axiom(Axiom::SubRole { sub, sup });
        return Ok(());
    }
    let start = c.here();
    let lhs = parse_class_expr(c)?;
    if !c.keyword("SubClassOf") {
        return if c.at_end() {
            c.fail("expected `SubClassOf`")
        } else {
            let t = c.peek().unwrap().to_string();
            c.fail(format!("expected `SubClassOf`, found {t}"))
        };
    }
    c.next();
    let rhs = parse_class_expr(c)?;
    c.finish()?;
    let axiom = match (lhs, rhs) {
        (ClassExpr::Name(a), ClassExpr::Name(b)) => Axiom::SubClass {
            sub: sig.concept(&a),
            sup: sig.concept(&b),
        },
        (ClassExpr::Name(a), ClassExpr::Nominal(i)) => Axiom::Nominal {
            sub: sig.concept(&a),
            individual: sig.individual(&i),
        },
        (ClassExpr::And(a1, a2), ClassExpr::Name(a)) => Axiom::Conjunction {
            left: sig.concept(&a1),
            right: sig.concept(&a2),
            sup: sig.concept(&a),
        },
        (ClassExpr::Some(r, a1), ClassExpr::Name(a)) => Axiom::ExistsSub {
            role: sig.role(&r),
            filler: sig.concept(&a1),
            sup: sig.concept(&a),
        },
        (ClassExpr::Name(a1), ClassExpr::Some(r, a)) => Axiom::ExistsSup {
            sub: sig.concept(&a1),
            role: sig.role(&r),
            filler: sig.concept(&a),
        },
        (ClassExpr::Name(a), ClassExpr::SelfOf(r)) => Axiom::SelfSup {
            sub: sig.concept(&a),
            role: sig.role(&r),
        },
        (ClassExpr::SelfOf(r), ClassExpr::Name(a)) => Axiom::SelfSub {
            role: sig.role(&r),
            sup: sig.concept(&a),
        },
        _ => {
            return Err(c
                .src
                .error(start.0, start.1, "not one of the normalized axiom forms"));
        }
    };
    kb.add_axiom(axiom);
    Ok(())
}

pub fn parse_kb(text: &str) -> Result<Kb, ParseError> {
    let src = Source::new(text);
    let mut kb = Kb::new();
    for line in 1..=src.lines.len() {
        let toks = src.lex_line(line)?;
        if toks.is_empty() {
            continue;
        }
        if toks.len() == 1 && matches!(&toks[0].tok, Tok::Ident(s) if s == "TBOX" || s == "ABOX") {
            continue;
        }
        let end = (line, src.lines[line - 1].chars().count() + 1);
        let mut c = Cursor {
            src: &src,
            toks,
            pos: 0,
            end,
        };
        parse_statement(&mut kb, &mut c)?;
    }
    Ok(kb)
}

fn concept_text(kb: &Kb, c: ConceptId) -> &str {
    kb.sig.concept_name(c)
}

/// Writes `kb` in the format read by [`parse_kb`].
pub fn serialize_kb(kb: &Kb) -> String {
    let sig = &kb.sig;
    let mut out = String::new();
    out.push_str("TBOX\n");
    for ax in kb.tbox() {
        let line = match *ax {
            Axiom::SubClass { sub, sup } => {
                format!(
                    "{} SubClassOf {}",
                    concept_text(kb, sub),
                    concept_text(kb, sup)
                )
            }
            Axiom::Nominal { sub, individual } => format!(
                "{} SubClassOf {{ {} }}",
                concept_text(kb, sub),
                sig.individual_name(individual)
            ),
            Axiom::Conjunction { left, right, sup } => format!(
                "{} and {} SubClassOf {}",
                concept_text(kb, left),
                concept_text(kb, right),
                concept_text(kb, sup)
            ),
            Axiom::ExistsSub { role, filler, sup } => format!(
                "some {} {} SubClassOf {}",
                sig.role_name(role),
                concept_text(kb, filler),
                concept_text(kb, sup)
            ),
            Axiom::SubRole { sub, sup } => {
                format!("{} SubRoleOf {}", sig.role_name(sub), sig.role_name(sup))
            }
            Axiom::Range { role, concept } => {
                format!(
                    "range {} {}",
                    sig.role_name(role),
                    concept_text(kb, concept)
                )
            }
            Axiom::ExistsSup { sub, role, filler } => format!(
                "{} SubClassOf some {} {}",
                concept_text(kb, sub),
                sig.role_name(role),
                concept_text(kb, filler)
            ),
            Axiom::Transitive(r) => format!("transitive {}", sig.role_name(r)),
            Axiom::Reflexive(r) => format!("reflexive {}", sig.role_name(r)),
            Axiom::SelfSup { sub, role } => {
                format!(
                    "{} SubClassOf self {}",
                    concept_text(kb, sub),
                    sig.role_name(role)
                )
            }
            Axiom::SelfSub { role, sup } => {
                format!(
                    "self {} SubClassOf {}",
                    sig.role_name(role),
                    concept_text(kb, sup)
                )
            }
        };
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str("ABOX\n");
    for a in kb.abox() {
        match *a {
            Assertion::Concept(c, i) => {
                let _ = writeln!(out, "{}({})", concept_text(kb, c), sig.individual_name(i));
            }
            Assertion::Role(r, i, j) => {
                let _ = writeln!(
                    out,
                    "{}({}, {})",
                    sig.role_name(r),
                    sig.individual_name(i),
                    sig.individual_name(j)
                );
            }
        }
    }
    out
}

fn parse_term(c: &mut Cursor) -> Result<CqTerm, ParseError> {
    match c.next() {
        Some(Tok::Var(v)) => Ok(CqTerm::Var(v)),
        Some(Tok::Ident(s)) => Ok(CqTerm::Const(s)),
        Some(t) => {
            c.pos -= 1;
            c.fail(format!("expected a term, found {t}"))
        }
        None => c.fail("expected a term, found end of input"),
    }
}

pub fn parse_query(text: &str) -> Result<Cq, ParseError> {
    let src = Source::new(text);
    let mut toks = Vec::new();
    for line in 1..=src.lines.len() {
        toks.extend(src.lex_line(line)?);
    }
    let end = match src.lines.len() {
        0 => (1, 1),
        n => (n, src.lines[n - 1].chars().count() + 1),
    };
    let mut c = Cursor {
        src: &src,
        toks,
        pos: 0,
        end,
    };
    if c.at_end() {
        return c.fail("empty query");
    }
    let name = c.ident("a query name")?;
    c.expect(Tok::LParen)?;
    let mut head: Vec<(String, (usize, usize))> = Vec::new();
    if c.peek() != Some(&Tok::RParen) {
        loop {
            let at = c.here();
            match c.next() {
                Some(Tok::Var(v)) => {
                    if head.iter().any(|(h, _)| *h == v) {
                        return Err(src.error(
                            at.0,
                            at.1,
                            format!("duplicate answer variable `?{v}`"),
                        ));
                    }
                    head.push((v, at));
                }
                Some(Tok::Ident(s)) => {
                    return Err(src.error(at.0, at.1, format!("constant `{s}` in the query head")));
                }
                _ => {
                    c.pos -= 1;
                    return c.fail("expected an answer variable");
                }
            }
            if c.peek() == Some(&Tok::Comma) {
                c.next();
            } else {
                break;
            }
        }
    }
    c.expect(Tok::RParen)?;
    c.expect(Tok::Implies)?;
    if c.peek() == Some(&Tok::Dot) || c.at_end() {
        return c.fail("empty query body");
    }
    let mut atoms = Vec::new();
    loop {
        let pred = c.ident("a predicate")?;
        c.expect(Tok::LParen)?;
        let s = parse_term(&mut c)?;
        if c.peek() == Some(&Tok::Comma) {
            c.next();
            let t = parse_term(&mut c)?;
            c.expect(Tok::RParen)?;
            atoms.push(CqAtom::Role(pred, s, t));
        } else {
            c.expect(Tok::RParen)?;
            atoms.push(CqAtom::Concept(pred, s));
        }
        match c.peek() {
            Some(Tok::Comma) => {
                c.next();
            }
            Some(Tok::Dot) => {
                c.next();
                break;
            }
            _ => return c.fail("expected `,` or `.` after a query atom"),
        }
    }
    c.finish()?;
    let q = Cq {
        name,
        answer_vars: head.iter().map(|(v, _)| v.clone()).collect(),
        atoms,
    };
    let body_vars = q.body_vars();
    for (v, at) in &head {
        if !body_vars.contains(v) {
            return Err(src.error(
                at.0,
                at.1,
                format!("answer variable `?{v}` does not occur in the body"),
            ));
        }
    }
    Ok(q)
}

fn term_text(t: &CqTerm) -> String {
    match t {
        CqTerm::Var(v) => format!("?{v}"),
        CqTerm::Const(c) => c.clone(),
    }
}

/// Writes `q` in the format read by [`parse_query`].
pub fn print_query(q: &Cq) -> String {
    let head: Vec<String> = q.answer_vars.iter().map(|v| format!("?{v}")).collect();
    let body: Vec<String> = q
        .atoms
        .iter()
        .map(|a| match a {
            CqAtom::Concept(p, s) => format!("{p}({})", term_text(s)),
            CqAtom::Role(p, s, t) => format!("{p}({}, {})", term_text(s), term_text(t)),
        })
        .collect();
    format!("{}({}) :- {}.", q.name, head.join(", "), body.join(", "))
}

/// One fact per line in lexicographic order, followed by nothing else; an
/// individual merged into another one is listed as `eq <member> <representative>`.
pub fn serialize_facts(store: &FactStore) -> String {
    let mut lines: Vec<String> = Vec::new();
    for (pred, a, b) in store.facts() {
        let name_a = store.individual_name(a);
        let line = match pred {
            Pred::Concept(c) => format!("{}({name_a})", store.signature().concept_name(c)),
            Pred::Ind => format!("ind({name_a})"),
            Pred::SelfOf(r) => format!("Self_{}({name_a})", store.signature().role_name(r)),
            Pred::Role(r) => {
                format!(
                    "{}({name_a}, {})",
                    store.signature().role_name(r),
                    store.individual_name(b)
                )
            }
            Pred::Direct(r) => {
                format!(
                    "dir{}({name_a}, {})",
                    store.signature().role_name(r),
                    store.individual_name(b)
                )
            }
        };
        lines.push(line);
    }
    for u in store.individual_ids() {
        let rep = store.representative(u);
        if rep != u {
            lines.push(format!(
                "eq {} {}",
                store.individual_name(u),
                store.individual_name(rep)
            ));
        }
    }
    lines.sort();
    let mut out = String::new();
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    out
}
