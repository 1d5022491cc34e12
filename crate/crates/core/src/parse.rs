//! Text formats: query files, facts files, and CSV relation directories.
//!
//! Query grammar (whitespace-insensitive, `%` comments to end of line):
//!
//! ```text
//! q(A,B) :- r(A,X), s(X,B,7), t("tag",B).
//! ```
//!
//! Identifiers starting with an uppercase letter are variables; lowercase
//! identifiers, integers and double-quoted strings are constants.
//!
//! A facts file holds ground atoms, one per statement: `r(1,2).`
//! A database may also be a directory of headerless `<relation>.csv` files,
//! one tuple per record.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::query::{Atom, Const, Database, Query, Term, Var};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(String),
    Quoted(String),
    LParen,
    RParen,
    Comma,
    Period,
    Turnstile,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn err_at(line: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, col, msg: msg.into() }
}

fn lex(text: &str) -> Result<Vec<Spanned>> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();
    while let Some(&ch) = chars.peek() {
        let (tline, tcol) = (line, col);
        let bump = |c: char, line: &mut usize, col: &mut usize| {
            if c == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
        };
        match ch {
            c if c.is_whitespace() => {
                chars.next();
                bump(c, &mut line, &mut col);
            }
            '%' => {
                for c in chars.by_ref() {
                    bump(c, &mut line, &mut col);
                    if c == '\n' {
                        break;
                    }
                }
            }
            '(' | ')' | ',' | '.' => {
                chars.next();
                bump(ch, &mut line, &mut col);
                let tok = match ch {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    _ => Tok::Period,
                };
                out.push(Spanned { tok, line: tline, col: tcol });
            }
            ':' => {
                chars.next();
                bump(':', &mut line, &mut col);
                match chars.peek() {
                    Some('-') => {
                        chars.next();
                        bump('-', &mut line, &mut col);
                        out.push(Spanned { tok: Tok::Turnstile, line: tline, col: tcol });
                    }
                    _ => return Err(err_at(tline, tcol, "expected ':-'")),
                }
            }
            '"' => {
                chars.next();
                bump('"', &mut line, &mut col);
                let mut s = String::new();
                loop {
                    match chars.next() {
                        None => return Err(err_at(tline, tcol, "unterminated string")),
                        Some('"') => {
                            bump('"', &mut line, &mut col);
                            break;
                        }
                        Some('\\') => {
                            bump('\\', &mut line, &mut col);
                            match chars.next() {
                                Some(c @ ('"' | '\\')) => {
                                    bump(c, &mut line, &mut col);
                                    s.push(c);
                                }
                                Some(c) => {
                                    return Err(err_at(
                                        line,
                                        col,
                                        format!("unknown escape '\\{c}'"),
                                    ))
                                }
                                None => {
                                    return Err(err_at(tline, tcol, "unterminated string"))
                                }
                            }
                        }
                        Some(c) => {
                            bump(c, &mut line, &mut col);
                            s.push(c);
                        }
                    }
                }
                out.push(Spanned { tok: Tok::Quoted(s), line: tline, col: tcol });
            }
            c if c.is_ascii_digit() => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_digit() {
                        s.push(d);
                        chars.next();
                        bump(d, &mut line, &mut col);
                    } else {
                        break;
                    }
                }
                out.push(Spanned { tok: Tok::Int(s), line: tline, col: tcol });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        s.push(d);
                        chars.next();
                        bump(d, &mut line, &mut col);
                    } else {
                        break;
                    }
                }
                out.push(Spanned { tok: Tok::Ident(s), line: tline, col: tcol });
            }
            c => return Err(err_at(tline, tcol, format!("unexpected character '{c}'"))),
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Spanned> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eof_err(&self, msg: &str) -> Error {
        let (line, col) = self
            .toks
            .last()
            .map(|t| (t.line, t.col + 1))
            .unwrap_or((1, 1));
        err_at(line, col, format!("{msg}, found end of input"))
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Spanned> {
        match self.next() {
            Some(t) if t.tok == want => Ok(t),
            Some(t) => Err(err_at(t.line, t.col, format!("expected {what}"))),
            None => Err(self.eof_err(&format!("expected {what}"))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, usize, usize)> {
        match self.next() {
            Some(Spanned { tok: Tok::Ident(s), line, col }) => Ok((s, line, col)),
            Some(t) => Err(err_at(t.line, t.col, format!("expected {what}"))),
            None => Err(self.eof_err(&format!("expected {what}"))),
        }
    }

    fn term(&mut self) -> Result<Term> {
        match self.next() {
            Some(Spanned { tok: Tok::Ident(s), .. }) => {
                if s.chars().next().is_some_and(|c| c.is_ascii_uppercase()) {
                    Ok(Term::Var(Var::new(s)))
                } else {
                    Ok(Term::Const(Const::new(s)))
                }
            }
            Some(Spanned { tok: Tok::Int(s), .. }) => Ok(Term::Const(Const::new(s))),
            Some(Spanned { tok: Tok::Quoted(s), .. }) => Ok(Term::Const(Const::new(s))),
            Some(t) => Err(err_at(t.line, t.col, "expected a term")),
            None => Err(self.eof_err("expected a term")),
        }
    }

    /// `name(t1,...,tn)` — the argument list may be empty.
    fn atom(&mut self) -> Result<Atom> {
        let (rel, _, _) = self.ident("a relation name")?;
        self.expect(Tok::LParen, "'('")?;
        let mut args = Vec::new();
        if matches!(self.peek(), Some(Spanned { tok: Tok::RParen, .. })) {
            self.next();
            return Ok(Atom::new(rel, args));
        }
        loop {
            args.push(self.term()?);
            match self.next() {
                Some(Spanned { tok: Tok::Comma, .. }) => continue,
                Some(Spanned { tok: Tok::RParen, .. }) => break,
                Some(t) => return Err(err_at(t.line, t.col, "expected ',' or ')'")),
                None => return Err(self.eof_err("expected ',' or ')'")),
            }
        }
        Ok(Atom::new(rel, args))
    }
}

/// Parse a single query from text.
pub fn parse_query(text: &str) -> Result<Query> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    let (name, _, _) = p.ident("a query name")?;
    p.expect(Tok::LParen, "'('")?;
    let mut free = Vec::new();
    if matches!(p.peek(), Some(Spanned { tok: Tok::RParen, .. })) {
        p.next();
    } else {
        loop {
            match p.next() {
                Some(Spanned { tok: Tok::Ident(s), line, col }) => {
                    if s.chars().next().is_some_and(|c| c.is_ascii_uppercase()) {
                        free.push(Var::new(s));
                    } else {
                        return Err(err_at(line, col, "head terms must be variables"));
                    }
                }
                Some(t) => return Err(err_at(t.line, t.col, "expected a head variable")),
                None => return Err(p.eof_err("expected a head variable")),
            }
            match p.next() {
                Some(Spanned { tok: Tok::Comma, .. }) => continue,
                Some(Spanned { tok: Tok::RParen, .. }) => break,
                Some(t) => return Err(err_at(t.line, t.col, "expected ',' or ')'")),
                None => return Err(p.eof_err("expected ',' or ')'")),
            }
        }
    }
    p.expect(Tok::Turnstile, "':-'")?;
    let mut atoms = vec![p.atom()?];
    loop {
        match p.next() {
            Some(Spanned { tok: Tok::Comma, .. }) => atoms.push(p.atom()?),
            Some(Spanned { tok: Tok::Period, .. }) => break,
            Some(t) => return Err(err_at(t.line, t.col, "expected ',' or '.'")),
            None => return Err(p.eof_err("expected ',' or '.'")),
        }
    }
    if let Some(t) = p.peek() {
        return Err(err_at(t.line, t.col, "trailing input after query"));
    }
    Query::new(name, free, atoms)
}

/// Parse a facts file: ground atoms `rel(c1,...,cn).` one or more per line.
pub fn parse_facts(text: &str) -> Result<Database> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    let mut db = Database::new();
    while p.peek().is_some() {
        let atom = p.atom()?;
        let stmt = p.expect(Tok::Period, "'.'")?;
        let mut tuple = Vec::with_capacity(atom.args.len());
        for t in &atom.args {
            match t {
                Term::Const(c) => tuple.push(c.clone()),
                Term::Var(v) => {
                    return Err(err_at(
                        stmt.line,
                        stmt.col,
                        format!("facts must be ground, found variable {v}"),
                    ))
                }
            }
        }
        db.insert(atom.rel, tuple)?;
    }
    Ok(db)
}

/// Load a database from a path: a facts file, or a directory of headerless
/// `<relation>.csv` files.
pub fn parse_database(path: &Path) -> Result<Database> {
    if path.is_dir() {
        let mut db = Database::new();
        let mut entries: Vec<_> = std::fs::read_dir(path)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect();
        entries.sort();
        if entries.is_empty() {
            return Err(Error::Io(format!(
                "no .csv files in directory {}",
                path.display()
            )));
        }
        for file in entries {
            let rel = file
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::Io(format!("bad file name {}", file.display())))?
                .to_string();
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(false)
                .flexible(false)
                .from_path(&file)
                .map_err(|e| Error::Io(e.to_string()))?;
            for record in reader.records() {
                let record = record.map_err(|e| Error::Io(e.to_string()))?;
                let tuple: Vec<Const> =
                    record.iter().map(|f| Const::new(f.to_string())).collect();
                db.insert(rel.clone(), tuple)?;
            }
        }
        Ok(db)
    } else {
        let text = std::fs::read_to_string(path)?;
        parse_facts(&text)
    }
}

/// Render a database in the facts format (sorted, deterministic).
pub fn format_facts(db: &Database) -> String {
    let mut out = String::new();
    let names: Vec<&str> = db.relation_names().collect();
    for rel in names {
        for tuple in db.tuples(rel).expect("listed relation") {
            let args: Vec<String> = tuple.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(out, "{}({}).", rel, args.join(","));
        }
    }
    out
}

/// Write a database as one `<relation>.csv` per relation under `dir`.
pub fn write_csv_database(db: &Database, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for rel in db.relation_names() {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(dir.join(format!("{rel}.csv")))
            .map_err(|e| Error::Io(e.to_string()))?;
        for tuple in db.tuples(rel).expect("listed relation") {
            w.write_record(tuple.iter().map(|c| c.as_str()))
                .map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Parse a comma-separated variable list (`"A,B,C"`), as used by CLI flags.
pub fn parse_var_list(text: &str) -> Result<Vec<Var>> {
    text.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            if s.chars().next().is_some_and(|c| c.is_ascii_uppercase())
                && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
            {
                Ok(Var::new(s))
            } else {
                Err(err_at(1, 1, format!("'{s}' is not a variable name")))
            }
        })
        .collect()
}
