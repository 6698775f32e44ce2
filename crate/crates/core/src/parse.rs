//! Parsers for domain files, problem files, and single terms.
//!
//! Two domain syntaxes are accepted and may be mixed clause by clause:
//! the bracketed block format,
//!
//! ```text
//! action grip_start(A,B) {
//!   valid: [ontable(B,X,Y), available(A), clear(B)]
//!   invalid: [gripped(_,B), gripping(_,B)]
//!   goal_block: [ontable(B,X,Y)]
//!   kb: []
//!   effects: [del(available(A)), add(gripping(A,B))]
//! }
//! durations { grip: [1, 2] }
//! ```
//!
//! and the clause format `action(Name,[...],[...],[...],[...],[...]).`,
//! which maps positionally onto the same schema. Problem files use
//! `kb { ... } init { ... } goal { ... }`. Comments run from `%` to end of
//! line. The short predicate names `ont`, `av` and `clr` are read as aliases
//! of `ontable`, `available` and `clear`.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::Rational64;
use thiserror::Error;

use crate::domain::{
    ActionSchema, DurationBounds, DurationTable, Effect, EffectKind, State, SNAP_END, SNAP_START,
};
use crate::term::{is_valid_functor, Term, VarGen};

/// A syntax error with a 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message} (at '{token}')")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub token: String,
}

#[derive(Debug, Error)]
pub enum DomainError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("unpaired snap action: {0}")]
    Pairing(String),
    #[error("bad duration bounds for '{name}': lower {lower} > upper {upper}")]
    Duration { name: String, lower: Rational64, upper: Rational64 },
}

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("non-ground literal in {section}: {literal}")]
    Groundness { section: &'static str, literal: String },
}

/// A parsed domain: action schemas in declaration order plus duration bounds.
#[derive(Debug, Clone)]
pub struct DomainFile {
    pub schemas: Vec<ActionSchema>,
    pub durations: DurationTable,
}

impl DomainFile {
    /// Structural identity up to variable renaming, used by round-trip tests.
    pub fn structurally_eq(&self, other: &DomainFile) -> bool {
        self.schemas.len() == other.schemas.len()
            && self
                .schemas
                .iter()
                .zip(&other.schemas)
                .all(|(a, b)| a.as_tuple_term().alpha_eq(&b.as_tuple_term()))
            && self.durations == other.durations
    }
}

/// A parsed problem: static kb facts, initial state, and goal literals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemFile {
    pub kb_facts: Vec<Term>,
    pub init: State,
    pub goal: Vec<Term>,
}

/// Canonical names for the paper-style abbreviations.
pub fn canonical_functor(name: &str) -> &str {
    match name {
        "ont" => "ontable",
        "av" => "available",
        "clr" => "clear",
        other => other,
    }
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Var(String),
    Int(i64),
    Decimal(Rational64),
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Colon,
    Dot,
    Neck, // ":-"
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) | Tok::Var(s) => write!(f, "{s}"),
            Tok::Int(n) => write!(f, "{n}"),
            Tok::Decimal(r) => write!(f, "{r}"),
            Tok::LParen => write!(f, "("),
            Tok::RParen => write!(f, ")"),
            Tok::LBrace => write!(f, "{{"),
            Tok::RBrace => write!(f, "}}"),
            Tok::LBracket => write!(f, "["),
            Tok::RBracket => write!(f, "]"),
            Tok::Comma => write!(f, ","),
            Tok::Colon => write!(f, ":"),
            Tok::Dot => write!(f, "."),
            Tok::Neck => write!(f, ":-"),
            Tok::Eof => write!(f, "<eof>"),
        }
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

type Spanned = (Tok, usize, usize);

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Lexer<'a> {
        Lexer { src: src.as_bytes(), pos: 0, line: 1, col: 1 }
    }

    fn bump(&mut self) -> Option<u8> {
        let c = *self.src.get(self.pos)?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek2(&self) -> Option<u8> {
        self.src.get(self.pos + 1).copied()
    }

    fn tokenize(mut self) -> Result<Vec<Spanned>, ParseError> {
        let mut out = Vec::new();
        loop {
            while let Some(c) = self.peek() {
                if c == b'%' {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                } else if c.is_ascii_whitespace() {
                    self.bump();
                } else {
                    break;
                }
            }
            let (line, col) = (self.line, self.col);
            let Some(c) = self.peek() else {
                out.push((Tok::Eof, line, col));
                return Ok(out);
            };
            let tok = match c {
                b'(' => {
                    self.bump();
                    Tok::LParen
                }
                b')' => {
                    self.bump();
                    Tok::RParen
                }
                b'{' => {
                    self.bump();
                    Tok::LBrace
                }
                b'}' => {
                    self.bump();
                    Tok::RBrace
                }
                b'[' => {
                    self.bump();
                    Tok::LBracket
                }
                b']' => {
                    self.bump();
                    Tok::RBracket
                }
                b',' => {
                    self.bump();
                    Tok::Comma
                }
                b'.' => {
                    self.bump();
                    Tok::Dot
                }
                b':' => {
                    self.bump();
                    if self.peek() == Some(b'-') {
                        self.bump();
                        Tok::Neck
                    } else {
                        Tok::Colon
                    }
                }
                b'-' => {
                    self.bump();
                    if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                        self.number(true, line, col)?
                    } else {
                        return Err(self.err(line, col, "stray '-'", "-"));
                    }
                }
                c if c.is_ascii_digit() => self.number(false, line, col)?,
                c if c.is_ascii_lowercase() => Tok::Ident(self.ident()),
                c if c.is_ascii_uppercase() || c == b'_' => Tok::Var(self.ident()),
                other => {
                    let s = (other as char).to_string();
                    return Err(self.err(line, col, "unexpected character", &s));
                }
            };
            out.push((tok, line, col));
        }
    }

    fn ident(&mut self) -> String {
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_alphanumeric() || c == b'_')
        {
            self.bump();
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn number(&mut self, neg: bool, line: usize, col: usize) -> Result<Tok, ParseError> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
        }
        let int_part = &self.src[start..self.pos];
        // decimal only when a digit follows the dot, so `foo(1).` still lexes
        if self.peek() == Some(b'.') && self.peek2().is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
            let fstart = self.pos;
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.bump();
            }
            let frac = &self.src[fstart..self.pos];
            let scale = 10_i64.checked_pow(frac.len() as u32).ok_or_else(|| {
                self.err(line, col, "decimal literal too long", "")
            })?;
            let ip: i64 = parse_digits(int_part, line, col)?;
            let fp: i64 = parse_digits(frac, line, col)?;
            let mut r = Rational64::new(ip * scale + fp, scale);
            if neg {
                r = -r;
            }
            Ok(Tok::Decimal(r))
        } else {
            let mut n: i64 = parse_digits(int_part, line, col)?;
            if neg {
                n = -n;
            }
            Ok(Tok::Int(n))
        }
    }

    fn err(&self, line: usize, col: usize, message: &str, token: &str) -> ParseError {
        ParseError { line, column: col, message: message.into(), token: token.into() }
    }
}

fn parse_digits(digits: &[u8], line: usize, col: usize) -> Result<i64, ParseError> {
    std::str::from_utf8(digits)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or(ParseError {
            line,
            column: col,
            message: "integer literal out of range".into(),
            token: String::from_utf8_lossy(digits).into_owned(),
        })
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser<'g> {
    toks: Vec<Spanned>,
    pos: usize,
    gen: &'g mut VarGen,
    /// Named variables share ids within one clause scope.
    scope: BTreeMap<String, u64>,
}

impl<'g> Parser<'g> {
    fn new(text: &str, gen: &'g mut VarGen) -> Result<Parser<'g>, ParseError> {
        Ok(Parser { toks: Lexer::new(text).tokenize()?, pos: 0, gen, scope: BTreeMap::new() })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn next(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        let (tok, line, col) = &self.toks[self.pos];
        ParseError { line: *line, column: *col, message: message.into(), token: tok.to_string() }
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        if *self.peek() == want {
            self.next();
            Ok(())
        } else {
            Err(self.error(format!("expected '{want}'")))
        }
    }

    fn expect_keyword(&mut self, word: &str) -> Result<(), ParseError> {
        match self.peek() {
            Tok::Ident(s) if s == word => {
                self.next();
                Ok(())
            }
            _ => Err(self.error(format!("expected '{word}'"))),
        }
    }

    fn new_clause_scope(&mut self) {
        self.scope.clear();
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.next();
                Ok(Term::Int(n))
            }
            Tok::Var(name) => {
                self.next();
                if name == "_" {
                    Ok(self.gen.fresh_anon())
                } else {
                    let id = match self.scope.get(&name) {
                        Some(id) => *id,
                        None => {
                            let id = self.gen.fresh_id();
                            self.scope.insert(name.clone(), id);
                            id
                        }
                    };
                    Ok(Term::Var { name, id })
                }
            }
            Tok::Ident(name) => {
                self.next();
                if !is_valid_functor(&name) {
                    return Err(self.error(format!("invalid functor '{name}'")));
                }
                let name = canonical_functor(&name).to_string();
                if *self.peek() == Tok::LParen {
                    self.next();
                    let mut args = vec![self.term()?];
                    while *self.peek() == Tok::Comma {
                        self.next();
                        args.push(self.term()?);
                    }
                    self.expect(Tok::RParen)?;
                    Ok(Term::Compound { functor: name, args })
                } else {
                    Ok(Term::Atom(name))
                }
            }
            _ => Err(self.error("expected a term")),
        }
    }

    /// `[ t, t, ... ]`, possibly empty, trailing comma allowed.
    fn term_list(&mut self) -> Result<Vec<Term>, ParseError> {
        self.expect(Tok::LBracket)?;
        let mut out = Vec::new();
        if *self.peek() == Tok::RBracket {
            self.next();
            return Ok(out);
        }
        loop {
            out.push(self.term()?);
            match self.next().0 {
                Tok::Comma => {
                    if *self.peek() == Tok::RBracket {
                        self.next();
                        return Ok(out);
                    }
                }
                Tok::RBracket => return Ok(out),
                _ => {
                    self.pos -= 1;
                    return Err(self.error("expected ',' or ']'"));
                }
            }
        }
    }

    fn effect_of_term(&self, t: Term, line: usize, col: usize) -> Result<Effect, ParseError> {
        match t {
            Term::Compound { ref functor, ref args } if args.len() == 1 && functor == "add" => {
                Ok(Effect { kind: EffectKind::Add, literal: args[0].clone() })
            }
            Term::Compound { ref functor, ref args } if args.len() == 1 && functor == "del" => {
                Ok(Effect { kind: EffectKind::Del, literal: args[0].clone() })
            }
            other => Err(ParseError {
                line,
                column: col,
                message: "effects must be add(...) or del(...)".into(),
                token: other.to_string(),
            }),
        }
    }

    fn effect_list(&mut self) -> Result<Vec<Effect>, ParseError> {
        let (line, col) = {
            let (_, l, c) = self.toks[self.pos];
            (l, c)
        };
        let terms = self.term_list()?;
        terms
            .into_iter()
            .map(|t| self.effect_of_term(t, line, col))
            .collect()
    }

    fn labeled_list(&mut self, label: &str) -> Result<Vec<Term>, ParseError> {
        self.expect_keyword(label)?;
        self.expect(Tok::Colon)?;
        self.term_list()
    }

    /// Bracketed action block; "action" already consumed.
    fn action_block(&mut self) -> Result<ActionSchema, ParseError> {
        let name = self.term()?;
        self.expect(Tok::LBrace)?;
        let valid = self.labeled_list("valid")?;
        let invalid = self.labeled_list("invalid")?;
        let invalid_at_end = self.labeled_list("goal_block")?;
        let kb_conds = self.labeled_list("kb")?;
        self.expect_keyword("effects")?;
        self.expect(Tok::Colon)?;
        let effects = self.effect_list()?;
        self.expect(Tok::RBrace)?;
        Ok(ActionSchema { name, valid, invalid, invalid_at_end, kb_conds, effects })
    }

    /// Clause-format action; "action" already consumed, next token is '('.
    fn action_clause(&mut self) -> Result<ActionSchema, ParseError> {
        self.expect(Tok::LParen)?;
        let name = self.term()?;
        self.expect(Tok::Comma)?;
        let valid = self.term_list()?;
        self.expect(Tok::Comma)?;
        let invalid = self.term_list()?;
        self.expect(Tok::Comma)?;
        let invalid_at_end = self.term_list()?;
        self.expect(Tok::Comma)?;
        let kb_conds = self.term_list()?;
        self.expect(Tok::Comma)?;
        let effects = self.effect_list()?;
        self.expect(Tok::RParen)?;
        self.expect(Tok::Dot)?;
        Ok(ActionSchema { name, valid, invalid, invalid_at_end, kb_conds, effects })
    }

    fn number(&mut self) -> Result<Rational64, ParseError> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.next();
                Ok(Rational64::from_integer(n))
            }
            Tok::Decimal(r) => {
                self.next();
                Ok(r)
            }
            _ => Err(self.error("expected a number")),
        }
    }

    fn durations_block(&mut self) -> Result<Vec<(String, DurationBounds)>, ParseError> {
        self.expect(Tok::LBrace)?;
        let mut out = Vec::new();
        loop {
            match self.peek().clone() {
                Tok::RBrace => {
                    self.next();
                    return Ok(out);
                }
                Tok::Ident(name) => {
                    self.next();
                    self.expect(Tok::Colon)?;
                    self.expect(Tok::LBracket)?;
                    let lower = self.number()?;
                    self.expect(Tok::Comma)?;
                    let upper = self.number()?;
                    self.expect(Tok::RBracket)?;
                    if *self.peek() == Tok::Comma {
                        self.next();
                    }
                    out.push((canonical_functor(&name).to_string(), DurationBounds { lower, upper }));
                }
                _ => return Err(self.error("expected a duration entry or '}'")),
            }
        }
    }

    /// Comma-separated terms up to '}'; trailing comma allowed.
    fn fact_block(&mut self) -> Result<Vec<(Term, usize, usize)>, ParseError> {
        self.expect(Tok::LBrace)?;
        let mut out = Vec::new();
        loop {
            match self.peek() {
                Tok::RBrace => {
                    self.next();
                    return Ok(out);
                }
                _ => {
                    let (_, line, col) = self.toks[self.pos];
                    let t = self.term()?;
                    out.push((t, line, col));
                    if *self.peek() == Tok::Comma {
                        self.next();
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

/// Parse a single term; named variables share ids within the call.
pub fn parse_term(text: &str) -> Result<Term, ParseError> {
    let mut gen = VarGen::new();
    parse_term_with(text, &mut gen)
}

pub fn parse_term_with(text: &str, gen: &mut VarGen) -> Result<Term, ParseError> {
    let mut p = Parser::new(text, gen)?;
    let t = p.term()?;
    if *p.peek() != Tok::Eof {
        return Err(p.error("trailing input after term"));
    }
    Ok(t)
}

/// Parse a `[t, t, ...]` list of terms.
pub fn parse_term_list(text: &str, gen: &mut VarGen) -> Result<Vec<Term>, ParseError> {
    let mut p = Parser::new(text, gen)?;
    let ts = p.term_list()?;
    if *p.peek() != Tok::Eof {
        return Err(p.error("trailing input after list"));
    }
    Ok(ts)
}

/// Parse a domain file: action schemas (either syntax) and duration blocks.
pub fn parse_domain(text: &str) -> Result<DomainFile, DomainError> {
    let mut gen = VarGen::new();
    let mut p = Parser::new(text, &mut gen)?;
    let mut schemas: Vec<ActionSchema> = Vec::new();
    let mut durations = DurationTable::default();

    loop {
        match p.peek().clone() {
            Tok::Eof => break,
            Tok::Ident(w) if w == "action" => {
                let (_, line, column) = p.next();
                p.new_clause_scope();
                let schema = if *p.peek() == Tok::LParen {
                    p.action_clause()?
                } else {
                    p.action_block()?
                };
                validate_schema(&schema).map_err(|msg| {
                    DomainError::Parse(ParseError {
                        line,
                        column,
                        message: msg,
                        token: schema.name.to_string(),
                    })
                })?;
                schemas.push(schema);
            }
            Tok::Ident(w) if w == "durations" => {
                p.next();
                for (name, bounds) in p.durations_block()? {
                    if bounds.lower > bounds.upper {
                        return Err(DomainError::Duration {
                            name,
                            lower: bounds.lower,
                            upper: bounds.upper,
                        });
                    }
                    durations.set(&name, bounds);
                }
            }
            _ => return Err(p.error("expected 'action' or 'durations'").into()),
        }
    }

    check_pairing(&schemas)?;
    Ok(DomainFile { schemas, durations })
}

fn validate_schema(schema: &ActionSchema) -> Result<(), String> {
    let functor = schema
        .name
        .functor()
        .ok_or_else(|| format!("action name must be an atom or compound: {}", schema.name))?;
    if !functor.ends_with(SNAP_START) && !functor.ends_with(SNAP_END) {
        return Err(format!("action functor '{functor}' must end in '_start' or '_end'"));
    }
    // every effect variable must be groundable from name, valid or kb conds
    let mut known = schema.name.var_ids();
    for t in schema.valid.iter().chain(&schema.kb_conds) {
        known.extend(t.var_ids());
    }
    for eff in &schema.effects {
        for id in eff.literal.var_ids() {
            if !known.contains(&id) {
                return Err(format!(
                    "effect variable in '{}' is not bound by name, valid or kb conditions",
                    eff.literal
                ));
            }
        }
    }
    Ok(())
}

fn check_pairing(schemas: &[ActionSchema]) -> Result<(), DomainError> {
    let tuple_of = |s: &ActionSchema| Term::compound("t", {
        let mut v = s.name.args().to_vec();
        if v.is_empty() {
            v.push(Term::atom("nil"));
        }
        v
    });
    for schema in schemas {
        let functor = schema.name.functor().expect("validated");
        let (base, is_start) = if let Some(base) = functor.strip_suffix(SNAP_START) {
            (base, true)
        } else {
            (functor.strip_suffix(SNAP_END).expect("validated"), false)
        };
        let partner_functor = format!("{base}{}", if is_start { SNAP_END } else { SNAP_START });
        let tuple = tuple_of(schema);
        let found = schemas.iter().any(|other| {
            other.name.functor() == Some(partner_functor.as_str())
                && tuple_of(other).alpha_eq(&tuple)
        });
        if !found {
            return Err(DomainError::Pairing(format!(
                "'{}' has no matching '{partner_functor}' with the same argument tuple",
                schema.name
            )));
        }
    }
    Ok(())
}

/// Parse a problem file: `kb { ... } init { ... } goal { ... }`.
/// The kb block may be omitted. Init and goal must be ground and free of
/// duplicates.
pub fn parse_problem(text: &str) -> Result<ProblemFile, ProblemError> {
    let mut gen = VarGen::new();
    let mut p = Parser::new(text, &mut gen)?;

    let mut kb_facts = Vec::new();
    if let Tok::Ident(w) = p.peek() {
        if w == "kb" {
            p.next();
            kb_facts = checked_section(p.fact_block()?, "kb")?;
        }
    }
    p.expect_keyword("init").map_err(ParseError::from)?;
    let init_lits = checked_section(p.fact_block()?, "init")?;
    p.expect_keyword("goal").map_err(ParseError::from)?;
    let goal = checked_section(p.fact_block()?, "goal")?;
    if *p.peek() != Tok::Eof {
        return Err(p.error("trailing input after goal block").into());
    }

    let init = State::new(init_lits).expect("checked ground and duplicate-free");
    Ok(ProblemFile { kb_facts, init, goal })
}

fn checked_section(
    facts: Vec<(Term, usize, usize)>,
    section: &'static str,
) -> Result<Vec<Term>, ProblemError> {
    let mut out: Vec<Term> = Vec::new();
    for (t, line, col) in facts {
        if !t.is_ground() {
            return Err(ProblemError::Groundness { section, literal: t.to_string() });
        }
        if out.contains(&t) {
            return Err(ProblemError::Parse(ParseError {
                line,
                column: col,
                message: format!("duplicate literal in {section}"),
                token: t.to_string(),
            }));
        }
        out.push(t);
    }
    Ok(out)
}

/// Render a domain back into the bracketed syntax; `parse_domain` of the
/// result is structurally identical to the input.
pub fn pretty_print(domain: &DomainFile) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    for schema in &domain.schemas {
        writeln!(out, "action {} {{", schema.name).unwrap();
        writeln!(out, "  valid: [{}]", join_terms(&schema.valid)).unwrap();
        writeln!(out, "  invalid: [{}]", join_terms(&schema.invalid)).unwrap();
        writeln!(out, "  goal_block: [{}]", join_terms(&schema.invalid_at_end)).unwrap();
        writeln!(out, "  kb: [{}]", join_terms(&schema.kb_conds)).unwrap();
        let effs: Vec<String> = schema
            .effects
            .iter()
            .map(|e| {
                let op = match e.kind {
                    EffectKind::Add => "add",
                    EffectKind::Del => "del",
                };
                format!("{op}({})", e.literal)
            })
            .collect();
        writeln!(out, "  effects: [{}]", effs.join(", ")).unwrap();
        writeln!(out, "}}").unwrap();
        writeln!(out).unwrap();
    }
    if !domain.durations.is_empty() {
        writeln!(out, "durations {{").unwrap();
        for (name, b) in domain.durations.entries() {
            writeln!(out, "  {name}: [{}, {}]", fmt_rational(b.lower), fmt_rational(b.upper))
                .unwrap();
        }
        writeln!(out, "}}").unwrap();
    }
    out
}

fn join_terms(ts: &[Term]) -> String {
    ts.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", ")
}

/// Parse the body of a `go(...)` clause: two bracketed literal lists
/// separated by a comma. No groundness or duplicate checks are applied; the
/// test-case validator reports those.
pub fn parse_go_body(text: &str, gen: &mut VarGen) -> Result<(Vec<Term>, Vec<Term>), ParseError> {
    let mut p = Parser::new(text, gen)?;
    let init = p.term_list()?;
    p.expect(Tok::Comma)?;
    let goal = p.term_list()?;
    if *p.peek() == Tok::Comma {
        p.next();
    }
    if *p.peek() != Tok::Eof {
        return Err(p.error("trailing input after go(...) arguments"));
    }
    Ok((init, goal))
}

/// Parse a file of named test clauses: `name :- go([...],[...]).` per entry.
pub fn parse_go_tests(text: &str) -> Result<Vec<(String, Vec<Term>, Vec<Term>)>, ParseError> {
    let mut gen = VarGen::new();
    let mut p = Parser::new(text, &mut gen)?;
    let mut out = Vec::new();
    loop {
        match p.peek().clone() {
            Tok::Eof => return Ok(out),
            Tok::Ident(name) => {
                p.next();
                p.expect(Tok::Neck)?;
                p.expect_keyword("go")?;
                p.expect(Tok::LParen)?;
                let init = p.term_list()?;
                p.expect(Tok::Comma)?;
                let goal = p.term_list()?;
                p.expect(Tok::RParen)?;
                p.expect(Tok::Dot)?;
                out.push((name, init, goal));
            }
            _ => return Err(p.error("expected a test clause name")),
        }
    }
}

/// Inverse of [`fmt_rational`]: accepts `3`, `-2`, `3/2`, and `1.5`.
pub fn parse_rational(s: &str) -> Option<Rational64> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let n: i64 = num.trim().parse().ok()?;
        let d: i64 = den.trim().parse().ok()?;
        if d == 0 {
            return None;
        }
        return Some(Rational64::new(n, d));
    }
    if let Some((int_part, frac)) = s.split_once('.') {
        let neg = int_part.starts_with('-');
        let i: i64 = int_part.parse().ok()?;
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let scale = 10_i64.checked_pow(frac.len() as u32)?;
        let f: i64 = frac.parse().ok()?;
        let magnitude = i.abs().checked_mul(scale)?.checked_add(f)?;
        return Some(Rational64::new(if neg { -magnitude } else { magnitude }, scale));
    }
    s.parse::<i64>().ok().map(Rational64::from_integer)
}

/// Rationals print as plain integers or decimal fractions where exact, and
/// as `p/q` otherwise.
pub fn fmt_rational(r: Rational64) -> String {
    if r.is_integer() {
        return r.numer().to_string();
    }
    // try an exact decimal with up to 6 places
    let mut den = *r.denom();
    let (mut twos, mut fives) = (0u32, 0u32);
    while den % 2 == 0 {
        den /= 2;
        twos += 1;
    }
    while den % 5 == 0 {
        den /= 5;
        fives += 1;
    }
    if den == 1 && twos.max(fives) <= 6 {
        let places = twos.max(fives);
        let scale = 10_i64.pow(places);
        let scaled = r * Rational64::from_integer(scale);
        let v = *scaled.numer();
        let (sign, v) = if v < 0 { ("-", -v) } else { ("", v) };
        let int = v / scale;
        let frac = v % scale;
        return format!("{sign}{int}.{frac:0width$}", width = places as usize);
    }
    format!("{}/{}", r.numer(), r.denom())
}
