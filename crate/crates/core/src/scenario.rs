//! Line-oriented scenario DSL: declarations of grids, filters, matrices,
//! one-particle vectors, biprocesses and SDE systems, followed by an ordered
//! task list. Scenarios double as regression fixtures, so the grammar is
//! deliberately explicit: every object is named before use and every time
//! must sit on the grid.

use crate::biprocess::{LegValue, SimpleBiprocess, WordFactor};
use crate::fock::FockBasis;
use crate::grid::{Filter, GridSpec};
use crate::processes::ProcessKind;
use crate::sde::{MFreeCoefficient, MFreeSdeCoefficients, SdeSystem, SdeTerm};
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::fmt;

/// A parse or validation failure with a stable code and source position.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    /// E001 syntax, E002 undefined reference, E003 off-grid time,
    /// E004 filter out of range, E005 duplicate name, E006 semantic.
    pub code: &'static str,
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}: {}", self.code, self.line, self.col, self.message)
    }
}

impl std::error::Error for Diagnostic {}

pub type ParseResult<T> = std::result::Result<T, Diagnostic>;

// ---------------------------------------------------------------------------
// AST
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum FilterExpr {
    Full,
    Set(Vec<usize>),
    Ref(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeRef {
    Abs(f64),
    /// `@`: the anchor (segment start) of the value being built.
    Anchor,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FactorExpr {
    Identity,
    MatRef(String),
    Create { color: usize, t: TimeRef },
    Annihilate { color: usize, t: TimeRef },
    Count { color: usize, t: TimeRef },
    Proj(FilterExpr),
    Scalar(Complex64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LegExpr {
    pub factors: Vec<FactorExpr>,
    pub filter: FilterExpr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiprocDecl {
    pub left: LegExpr,
    pub right: LegExpr,
    pub partition: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdeDecl {
    pub p0: Vec<FilterExpr>,
    pub initial: Vec<(FilterExpr, String)>,
    pub coeffs: Vec<(EtaToken, LegExpr, LegExpr)>,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MFreeDecl {
    pub m: usize,
    pub f: [Option<LegExpr>; 4],
    pub g: [Option<LegExpr>; 4],
    pub initial: Vec<(FilterExpr, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EtaToken {
    pub kind: u8, // 0 annihilation, 1 creation, 2 number, 3 time
    pub color: usize,
}

impl EtaToken {
    pub fn to_kind(self) -> ProcessKind {
        match self.kind {
            0 => ProcessKind::Annihilation(self.color),
            1 => ProcessKind::Creation(self.color),
            2 => ProcessKind::Number(self.color),
            _ => ProcessKind::Time,
        }
    }
}

impl fmt::Display for EtaToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            0 => write!(f, "dA({})", self.color),
            1 => write!(f, "dA*({})", self.color),
            2 => write!(f, "dN({})", self.color),
            _ => write!(f, "dT"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Calculus {
    Boson,
    MFree(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskDecl {
    Oracle { biproc: String, eta: EtaToken, t: f64, n: usize },
    Dump { u: String },
    VerifyIto { x1: String, eta1: EtaToken, x2: String, eta2: EtaToken, t: f64, n: usize },
    Adapted { biproc: String, t: f64 },
    Solve { sde: String, t: f64 },
    CheckUnitarity { sde: String },
    SweepM { mfree: String, m_list: Vec<usize>, t: f64 },
    MFreeUnitarity { mfree: String },
    ItoTable { calculus: Calculus },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decl {
    Filter(String, FilterExpr),
    Mat(String, Vec<(usize, usize, Complex64)>),
    U(String, Vec<(usize, usize, Complex64)>),
    Biproc(String, BiprocDecl),
    Sde(String, SdeDecl),
    MFree(String, MFreeDecl),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridDecl {
    pub horizon: f64,
    pub cells: usize,
    pub colors: usize,
    pub nmax: usize,
    pub h0: usize,
}

#[derive(Debug, Clone)]
pub struct Ast {
    pub grid: GridDecl,
    pub decls: Vec<Decl>,
    pub tasks: Vec<TaskDecl>,
    /// Source line of each declaration / task (not part of AST equality).
    pub decl_lines: Vec<usize>,
    pub task_lines: Vec<usize>,
}

impl PartialEq for Ast {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.decls == other.decls && self.tasks == other.tasks
    }
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Sym(char),
    Tensor,
}

struct Lexer {
    toks: Vec<(Tok, usize)>, // token, column
    pos: usize,
    line: usize,
}

fn lex_line(text: &str, line: usize) -> ParseResult<Vec<(Tok, usize)>> {
    let mut toks = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '#' {
            break;
        }
        if c == '⊗' {
            toks.push((Tok::Tensor, col));
            i += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len()
                && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '-')
            {
                i += 1;
            }
            toks.push((Tok::Ident(chars[start..i].iter().collect()), col));
            continue;
        }
        let is_num_start = c.is_ascii_digit()
            || (c == '-' && i + 1 < chars.len() && (chars[i + 1].is_ascii_digit() || chars[i + 1] == '.'))
            || (c == '.' && i + 1 < chars.len() && chars[i + 1].is_ascii_digit());
        if is_num_start {
            let start = i;
            if chars[i] == '-' {
                i += 1;
            }
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = s.parse::<f64>().map_err(|_| Diagnostic {
                code: "E001",
                line,
                col,
                message: format!("malformed number `{s}`"),
            })?;
            toks.push((Tok::Num(v), col));
            continue;
        }
        if "={}()[]|,:*@".contains(c) {
            toks.push((Tok::Sym(c), col));
            i += 1;
            continue;
        }
        // ASCII alias for the tensor sign
        if c == '%' {
            toks.push((Tok::Tensor, col));
            i += 1;
            continue;
        }
        return Err(Diagnostic {
            code: "E001",
            line,
            col,
            message: format!("unexpected character `{c}`"),
        });
    }
    Ok(toks)
}

impl Lexer {
    fn new(text: &str, line: usize) -> ParseResult<Self> {
        Ok(Lexer { toks: lex_line(text, line)?, pos: 0, line })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map(|&(_, c)| c).unwrap_or_else(|| {
            self.toks.last().map(|&(_, c)| c + 1).unwrap_or(1)
        })
    }

    fn err(&self, msg: impl Into<String>) -> Diagnostic {
        Diagnostic { code: "E001", line: self.line, col: self.col(), message: msg.into() }
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn expect_ident(&mut self) -> ParseResult<String> {
        match self.next() {
            Some(Tok::Ident(s)) => Ok(s),
            _ => {
                self.pos -= 1;
                Err(self.err("expected a name"))
            }
        }
    }

    fn expect_sym(&mut self, c: char) -> ParseResult<()> {
        match self.next() {
            Some(Tok::Sym(s)) if s == c => Ok(()),
            _ => {
                self.pos -= 1;
                Err(self.err(format!("expected `{c}`")))
            }
        }
    }

    fn expect_num(&mut self) -> ParseResult<f64> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(v),
            _ => {
                self.pos -= 1;
                Err(self.err("expected a number"))
            }
        }
    }

    fn expect_usize(&mut self) -> ParseResult<usize> {
        let v = self.expect_num()?;
        if v < 0.0 || v.fract() != 0.0 {
            self.pos -= 1;
            return Err(self.err(format!("expected a nonnegative integer, got {v}")));
        }
        Ok(v as usize)
    }

    fn eat_sym(&mut self, c: char) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(s)) if *s == c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_ident(&mut self, word: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == word) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn expect_end(&self) -> ParseResult<()> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.err("trailing tokens"))
        }
    }

    fn expect_kv_num(&mut self, key: &str) -> ParseResult<f64> {
        if !self.eat_ident(key) {
            return Err(self.err(format!("expected `{key}=`")));
        }
        self.expect_sym('=')?;
        self.expect_num()
    }
}

fn parse_filter_expr(lx: &mut Lexer) -> ParseResult<FilterExpr> {
    if lx.eat_ident("FULL") {
        return Ok(FilterExpr::Full);
    }
    if lx.eat_sym('{') {
        let mut colors = Vec::new();
        if !lx.eat_sym('}') {
            loop {
                colors.push(lx.expect_usize()?);
                if lx.eat_sym('}') {
                    break;
                }
                lx.expect_sym(',')?;
            }
        }
        colors.sort_unstable();
        colors.dedup();
        return Ok(FilterExpr::Set(colors));
    }
    match lx.peek() {
        Some(Tok::Ident(_)) => Ok(FilterExpr::Ref(lx.expect_ident()?)),
        _ => Err(lx.err("expected a filter (`FULL`, `{..}` or a name)")),
    }
}

fn parse_eta(lx: &mut Lexer) -> ParseResult<EtaToken> {
    let name = lx.expect_ident()?;
    match name.as_str() {
        "dT" => Ok(EtaToken { kind: 3, color: 0 }),
        "dA" | "dN" => {
            let kind = if lx.eat_sym('*') {
                if name != "dA" {
                    return Err(lx.err("`*` only follows dA"));
                }
                1
            } else if name == "dA" {
                0
            } else {
                2
            };
            lx.expect_sym('(')?;
            let color = lx.expect_usize()?;
            lx.expect_sym(')')?;
            Ok(EtaToken { kind, color })
        }
        other => Err(lx.err(format!("unknown process token `{other}`"))),
    }
}

fn parse_time_ref(lx: &mut Lexer) -> ParseResult<TimeRef> {
    if lx.eat_sym('@') {
        return Ok(TimeRef::Anchor);
    }
    Ok(TimeRef::Abs(lx.expect_num()?))
}

fn parse_leg(lx: &mut Lexer) -> ParseResult<LegExpr> {
    lx.expect_sym('[')?;
    let mut factors = Vec::new();
    loop {
        if lx.eat_sym('|') {
            break;
        }
        match lx.peek().cloned() {
            Some(Tok::Ident(name)) => {
                lx.next();
                match name.as_str() {
                    "I" => factors.push(FactorExpr::Identity),
                    "A" => {
                        let create = lx.eat_sym('*');
                        lx.expect_sym('(')?;
                        let color = lx.expect_usize()?;
                        lx.expect_sym(',')?;
                        let t = parse_time_ref(lx)?;
                        lx.expect_sym(')')?;
                        factors.push(if create {
                            FactorExpr::Create { color, t }
                        } else {
                            FactorExpr::Annihilate { color, t }
                        });
                    }
                    "Nop" => {
                        lx.expect_sym('(')?;
                        let color = lx.expect_usize()?;
                        lx.expect_sym(',')?;
                        let t = parse_time_ref(lx)?;
                        lx.expect_sym(')')?;
                        factors.push(FactorExpr::Count { color, t });
                    }
                    "P" => {
                        let fe = parse_filter_expr(lx)?;
                        factors.push(FactorExpr::Proj(fe));
                    }
                    _ => factors.push(FactorExpr::MatRef(name)),
                }
            }
            Some(Tok::Num(v)) => {
                lx.next();
                factors.push(FactorExpr::Scalar(Complex64::new(v, 0.0)));
            }
            Some(Tok::Sym('(')) => {
                lx.next();
                let re = lx.expect_num()?;
                lx.expect_sym(',')?;
                let im = lx.expect_num()?;
                lx.expect_sym(')')?;
                factors.push(FactorExpr::Scalar(Complex64::new(re, im)));
            }
            _ => return Err(lx.err("expected a leg factor or `|`")),
        }
    }
    let filter = parse_filter_expr(lx)?;
    lx.expect_sym(']')?;
    Ok(LegExpr { factors, filter })
}

fn parse_entries(lx: &mut Lexer) -> ParseResult<Vec<(usize, usize, Complex64)>> {
    lx.expect_sym('[')?;
    let mut out = Vec::new();
    if lx.eat_sym(']') {
        return Ok(out);
    }
    loop {
        lx.expect_sym('(')?;
        let a = lx.expect_usize()?;
        lx.expect_sym(',')?;
        let b = lx.expect_usize()?;
        lx.expect_sym(',')?;
        let re = lx.expect_num()?;
        lx.expect_sym(',')?;
        let im = lx.expect_num()?;
        lx.expect_sym(')')?;
        out.push((a, b, Complex64::new(re, im)));
        if lx.eat_sym(']') {
            break;
        }
        lx.expect_sym(',')?;
    }
    Ok(out)
}

/// Parse a scenario into its AST; the first significant line must be the
/// grid declaration.
pub fn parse_scenario(text: &str) -> ParseResult<Ast> {
    let mut grid = None;
    let mut decls = Vec::new();
    let mut tasks = Vec::new();
    let mut decl_lines = Vec::new();
    let mut task_lines = Vec::new();
    let mut lines = text.lines().enumerate().peekable();
    while let Some((idx, raw)) = lines.next() {
        let line_no = idx + 1;
        let mut lx = Lexer::new(raw, line_no)?;
        if lx.at_end() {
            continue;
        }
        let head = lx.expect_ident()?;
        match head.as_str() {
            "grid" => {
                let horizon = lx.expect_kv_num("T")?;
                let cells = {
                    if !lx.eat_ident("cells") {
                        return Err(lx.err("expected `cells=`"));
                    }
                    lx.expect_sym('=')?;
                    lx.expect_usize()?
                };
                let colors = {
                    if !lx.eat_ident("colors") {
                        return Err(lx.err("expected `colors=`"));
                    }
                    lx.expect_sym('=')?;
                    lx.expect_usize()?
                };
                let nmax = {
                    if !lx.eat_ident("nmax") {
                        return Err(lx.err("expected `nmax=`"));
                    }
                    lx.expect_sym('=')?;
                    lx.expect_usize()?
                };
                let h0 = {
                    if !lx.eat_ident("h0") {
                        return Err(lx.err("expected `h0=`"));
                    }
                    lx.expect_sym('=')?;
                    lx.expect_usize()?
                };
                lx.expect_end()?;
                if grid.is_some() {
                    return Err(Diagnostic {
                        code: "E005",
                        line: line_no,
                        col: 1,
                        message: "duplicate grid declaration".into(),
                    });
                }
                grid = Some(GridDecl { horizon, cells, colors, nmax, h0 });
            }
            "filter" => {
                let name = lx.expect_ident()?;
                lx.expect_sym('=')?;
                let fe = parse_filter_expr(&mut lx)?;
                lx.expect_end()?;
                decls.push(Decl::Filter(name, fe));
                decl_lines.push(line_no);
            }
            "mat" => {
                let name = lx.expect_ident()?;
                lx.expect_sym('=')?;
                let entries = parse_entries(&mut lx)?;
                lx.expect_end()?;
                decls.push(Decl::Mat(name, entries));
                decl_lines.push(line_no);
            }
            "u" => {
                let name = lx.expect_ident()?;
                lx.expect_sym('=')?;
                let entries = parse_entries(&mut lx)?;
                lx.expect_end()?;
                decls.push(Decl::U(name, entries));
                decl_lines.push(line_no);
            }
            "biproc" => {
                let name = lx.expect_ident()?;
                lx.expect_sym('=')?;
                let left = parse_leg(&mut lx)?;
                if !matches!(lx.next(), Some(Tok::Tensor)) {
                    lx.pos -= 1;
                    return Err(lx.err("expected `⊗` between legs"));
                }
                let right = parse_leg(&mut lx)?;
                if !lx.eat_ident("on") {
                    return Err(lx.err("expected `on (t0, …)`"));
                }
                lx.expect_sym('(')?;
                let mut partition = vec![lx.expect_num()?];
                while lx.eat_sym(',') {
                    partition.push(lx.expect_num()?);
                }
                lx.expect_sym(')')?;
                lx.expect_end()?;
                decls.push(Decl::Biproc(name, BiprocDecl { left, right, partition }));
                decl_lines.push(line_no);
            }
            "sde" => {
                let name = lx.expect_ident()?;
                lx.expect_sym('{')?;
                lx.expect_end()?;
                let mut decl = SdeDecl {
                    p0: Vec::new(),
                    initial: Vec::new(),
                    coeffs: Vec::new(),
                    tol: 1e-9,
                    max_iter: 40,
                };
                loop {
                    let (idx2, raw2) = lines
                        .next()
                        .ok_or_else(|| Diagnostic {
                            code: "E001",
                            line: line_no,
                            col: 1,
                            message: "unterminated sde block".into(),
                        })?;
                    let mut bx = Lexer::new(raw2, idx2 + 1)?;
                    if bx.at_end() {
                        continue;
                    }
                    if bx.eat_sym('}') {
                        bx.expect_end()?;
                        break;
                    }
                    let key = bx.expect_ident()?;
                    match key.as_str() {
                        "p0" => {
                            bx.expect_sym('=')?;
                            loop {
                                decl.p0.push(parse_filter_expr(&mut bx)?);
                                if !bx.eat_sym(',') {
                                    break;
                                }
                            }
                            bx.expect_end()?;
                        }
                        "init" => {
                            let fe = parse_filter_expr(&mut bx)?;
                            bx.expect_sym('=')?;
                            let mat = bx.expect_ident()?;
                            bx.expect_end()?;
                            decl.initial.push((fe, mat));
                        }
                        "coeff" => {
                            let eta = parse_eta(&mut bx)?;
                            bx.eat_sym(':');
                            let l = parse_leg(&mut bx)?;
                            if !matches!(bx.next(), Some(Tok::Tensor)) {
                                bx.pos -= 1;
                                return Err(bx.err("expected `⊗` between legs"));
                            }
                            let r = parse_leg(&mut bx)?;
                            bx.expect_end()?;
                            decl.coeffs.push((eta, l, r));
                        }
                        "tol" => {
                            bx.expect_sym('=')?;
                            decl.tol = bx.expect_num()?;
                            bx.expect_end()?;
                        }
                        "maxiter" => {
                            bx.expect_sym('=')?;
                            decl.max_iter = bx.expect_usize()?;
                            bx.expect_end()?;
                        }
                        other => return Err(bx.err(format!("unknown sde key `{other}`"))),
                    }
                }
                decls.push(Decl::Sde(name, decl));
                decl_lines.push(line_no);
            }
            "mfreesde" => {
                let name = lx.expect_ident()?;
                lx.expect_sym('{')?;
                lx.expect_end()?;
                let mut decl = MFreeDecl {
                    m: 1,
                    f: [None, None, None, None],
                    g: [None, None, None, None],
                    initial: Vec::new(),
                };
                loop {
                    let (idx2, raw2) = lines
                        .next()
                        .ok_or_else(|| Diagnostic {
                            code: "E001",
                            line: line_no,
                            col: 1,
                            message: "unterminated mfreesde block".into(),
                        })?;
                    let mut bx = Lexer::new(raw2, idx2 + 1)?;
                    if bx.at_end() {
                        continue;
                    }
                    if bx.eat_sym('}') {
                        bx.expect_end()?;
                        break;
                    }
                    let key = bx.expect_ident()?;
                    match key.as_str() {
                        "m" => {
                            bx.expect_sym('=')?;
                            decl.m = bx.expect_usize()?;
                            bx.expect_end()?;
                        }
                        "init" => {
                            let fe = parse_filter_expr(&mut bx)?;
                            bx.expect_sym('=')?;
                            let mat = bx.expect_ident()?;
                            bx.expect_end()?;
                            decl.initial.push((fe, mat));
                        }
                        k @ ("F1" | "F2" | "F3" | "F4" | "G1" | "G2" | "G3" | "G4") => {
                            bx.expect_sym('=')?;
                            let slot = k[1..].parse::<usize>().unwrap() - 1;
                            let val = if bx.eat_ident("none") {
                                None
                            } else {
                                Some(parse_leg(&mut bx)?)
                            };
                            bx.expect_end()?;
                            if k.starts_with('F') {
                                decl.f[slot] = val;
                            } else {
                                decl.g[slot] = val;
                            }
                        }
                        other => return Err(bx.err(format!("unknown mfreesde key `{other}`"))),
                    }
                }
                decls.push(Decl::MFree(name, decl));
                decl_lines.push(line_no);
            }
            "task" => {
                let kind = lx.expect_ident()?;
                let task = match kind.as_str() {
                    "dump" => TaskDecl::Dump { u: lx.expect_ident()? },
                    "oracle" => {
                        let biproc = lx.expect_ident()?;
                        let eta = parse_eta(&mut lx)?;
                        let mut t = f64::NAN;
                        let mut n = 10usize;
                        while !lx.at_end() {
                            let key = lx.expect_ident()?;
                            lx.expect_sym('=')?;
                            match key.as_str() {
                                "t" => t = lx.expect_num()?,
                                "n" => n = lx.expect_usize()?,
                                _ => return Err(lx.err(format!("unknown option `{key}`"))),
                            }
                        }
                        TaskDecl::Oracle { biproc, eta, t, n }
                    }
                    "verify-ito" => {
                        let x1 = lx.expect_ident()?;
                        let eta1 = parse_eta(&mut lx)?;
                        let x2 = lx.expect_ident()?;
                        let eta2 = parse_eta(&mut lx)?;
                        let mut t = f64::NAN;
                        let mut n = 5usize;
                        while !lx.at_end() {
                            let key = lx.expect_ident()?;
                            lx.expect_sym('=')?;
                            match key.as_str() {
                                "t" => t = lx.expect_num()?,
                                "n" => n = lx.expect_usize()?,
                                _ => return Err(lx.err(format!("unknown option `{key}`"))),
                            }
                        }
                        TaskDecl::VerifyIto { x1, eta1, x2, eta2, t, n }
                    }
                    "adapted" => {
                        let biproc = lx.expect_ident()?;
                        let t = lx.expect_kv_num("t")?;
                        TaskDecl::Adapted { biproc, t }
                    }
                    "solve" => {
                        let sde = lx.expect_ident()?;
                        let t = lx.expect_kv_num("t")?;
                        TaskDecl::Solve { sde, t }
                    }
                    "check-unitarity" => TaskDecl::CheckUnitarity { sde: lx.expect_ident()? },
                    "sweep-m" => {
                        let mfree = lx.expect_ident()?;
                        if !lx.eat_ident("mlist") {
                            return Err(lx.err("expected `mlist=(…)`"));
                        }
                        lx.expect_sym('=')?;
                        lx.expect_sym('(')?;
                        let mut m_list = vec![lx.expect_usize()?];
                        while lx.eat_sym(',') {
                            m_list.push(lx.expect_usize()?);
                        }
                        lx.expect_sym(')')?;
                        let t = lx.expect_kv_num("t")?;
                        TaskDecl::SweepM { mfree, m_list, t }
                    }
                    "mfree-unitarity" => TaskDecl::MFreeUnitarity { mfree: lx.expect_ident()? },
                    "ito-table" => {
                        let which = lx.expect_ident()?;
                        let calculus = match which.as_str() {
                            "boson" => Calculus::Boson,
                            "mfree" => {
                                lx.expect_sym(':')?;
                                Calculus::MFree(lx.expect_usize()?)
                            }
                            other => {
                                return Err(lx.err(format!("unknown calculus `{other}`")))
                            }
                        };
                        TaskDecl::ItoTable { calculus }
                    }
                    other => return Err(lx.err(format!("unknown task `{other}`"))),
                };
                lx.expect_end()?;
                tasks.push(task);
                task_lines.push(line_no);
            }
            other => {
                return Err(Diagnostic {
                    code: "E001",
                    line: line_no,
                    col: 1,
                    message: format!("unknown declaration `{other}`"),
                })
            }
        }
    }
    let grid = grid.ok_or(Diagnostic {
        code: "E006",
        line: 1,
        col: 1,
        message: "scenario must declare a grid".into(),
    })?;
    Ok(Ast { grid, decls, tasks, decl_lines, task_lines })
}

// ---------------------------------------------------------------------------
// Pretty printer (canonical form; parse ∘ print is the identity on ASTs)
// ---------------------------------------------------------------------------

fn fmt_c(v: Complex64) -> String {
    format!("({},{})", v.re, v.im)
}

fn fmt_filter(fe: &FilterExpr) -> String {
    match fe {
        FilterExpr::Full => "FULL".into(),
        FilterExpr::Set(cs) => {
            let inner: Vec<String> = cs.iter().map(|c| c.to_string()).collect();
            format!("{{{}}}", inner.join(","))
        }
        FilterExpr::Ref(n) => n.clone(),
    }
}

fn fmt_time(t: TimeRef) -> String {
    match t {
        TimeRef::Abs(v) => v.to_string(),
        TimeRef::Anchor => "@".to_string(),
    }
}

fn fmt_leg(l: &LegExpr) -> String {
    let mut parts = Vec::new();
    for f in &l.factors {
        parts.push(match f {
            FactorExpr::Identity => "I".into(),
            FactorExpr::MatRef(n) => n.clone(),
            FactorExpr::Create { color, t } => format!("A*({color},{})", fmt_time(*t)),
            FactorExpr::Annihilate { color, t } => format!("A({color},{})", fmt_time(*t)),
            FactorExpr::Count { color, t } => format!("Nop({color},{})", fmt_time(*t)),
            FactorExpr::Proj(fe) => format!("P{}", fmt_filter(fe)),
            FactorExpr::Scalar(v) => fmt_c(*v),
        });
    }
    format!("[{} | {}]", parts.join(" "), fmt_filter(&l.filter))
}

fn fmt_entries(es: &[(usize, usize, Complex64)]) -> String {
    let parts: Vec<String> =
        es.iter().map(|(a, b, v)| format!("({a},{b},{},{})", v.re, v.im)).collect();
    format!("[{}]", parts.join(", "))
}

pub fn pretty_print(ast: &Ast) -> String {
    let mut out = String::new();
    let g = &ast.grid;
    out.push_str(&format!(
        "grid T={} cells={} colors={} nmax={} h0={}\n",
        g.horizon, g.cells, g.colors, g.nmax, g.h0
    ));
    for d in &ast.decls {
        match d {
            Decl::Filter(n, fe) => out.push_str(&format!("filter {n} = {}\n", fmt_filter(fe))),
            Decl::Mat(n, es) => out.push_str(&format!("mat {n} = {}\n", fmt_entries(es))),
            Decl::U(n, es) => out.push_str(&format!("u {n} = {}\n", fmt_entries(es))),
            Decl::Biproc(n, b) => {
                let ts: Vec<String> = b.partition.iter().map(|t| t.to_string()).collect();
                out.push_str(&format!(
                    "biproc {n} = {} ⊗ {} on ({})\n",
                    fmt_leg(&b.left),
                    fmt_leg(&b.right),
                    ts.join(", ")
                ));
            }
            Decl::Sde(n, s) => {
                out.push_str(&format!("sde {n} {{\n"));
                if !s.p0.is_empty() {
                    let ps: Vec<String> = s.p0.iter().map(fmt_filter).collect();
                    out.push_str(&format!("  p0 = {}\n", ps.join(", ")));
                }
                for (fe, mat) in &s.initial {
                    out.push_str(&format!("  init {} = {mat}\n", fmt_filter(fe)));
                }
                for (eta, l, r) in &s.coeffs {
                    out.push_str(&format!("  coeff {eta} : {} ⊗ {}\n", fmt_leg(l), fmt_leg(r)));
                }
                out.push_str(&format!("  tol = {}\n", s.tol));
                out.push_str(&format!("  maxiter = {}\n", s.max_iter));
                out.push_str("}\n");
            }
            Decl::MFree(n, mf) => {
                out.push_str(&format!("mfreesde {n} {{\n"));
                out.push_str(&format!("  m = {}\n", mf.m));
                for (i, slot) in mf.f.iter().enumerate() {
                    match slot {
                        Some(l) => out.push_str(&format!("  F{} = {}\n", i + 1, fmt_leg(l))),
                        None => out.push_str(&format!("  F{} = none\n", i + 1)),
                    }
                }
                for (i, slot) in mf.g.iter().enumerate() {
                    match slot {
                        Some(l) => out.push_str(&format!("  G{} = {}\n", i + 1, fmt_leg(l))),
                        None => out.push_str(&format!("  G{} = none\n", i + 1)),
                    }
                }
                for (fe, mat) in &mf.initial {
                    out.push_str(&format!("  init {} = {mat}\n", fmt_filter(fe)));
                }
                out.push_str("}\n");
            }
        }
    }
    for t in &ast.tasks {
        match t {
            TaskDecl::Oracle { biproc, eta, t, n } => {
                out.push_str(&format!("task oracle {biproc} {eta} t={t} n={n}\n"))
            }
            TaskDecl::Dump { u } => out.push_str(&format!("task dump {u}\n")),
            TaskDecl::VerifyIto { x1, eta1, x2, eta2, t, n } => out.push_str(&format!(
                "task verify-ito {x1} {eta1} {x2} {eta2} t={t} n={n}\n"
            )),
            TaskDecl::Adapted { biproc, t } => {
                out.push_str(&format!("task adapted {biproc} t={t}\n"))
            }
            TaskDecl::Solve { sde, t } => out.push_str(&format!("task solve {sde} t={t}\n")),
            TaskDecl::CheckUnitarity { sde } => {
                out.push_str(&format!("task check-unitarity {sde}\n"))
            }
            TaskDecl::SweepM { mfree, m_list, t } => {
                let ms: Vec<String> = m_list.iter().map(|m| m.to_string()).collect();
                out.push_str(&format!("task sweep-m {mfree} mlist=({}) t={t}\n", ms.join(",")));
            }
            TaskDecl::MFreeUnitarity { mfree } => {
                out.push_str(&format!("task mfree-unitarity {mfree}\n"))
            }
            TaskDecl::ItoTable { calculus } => match calculus {
                Calculus::Boson => out.push_str("task ito-table boson\n"),
                Calculus::MFree(m) => out.push_str(&format!("task ito-table mfree:{m}\n")),
            },
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Compilation to core objects
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct CompiledSde {
    pub system: SdeSystem,
    pub tol: f64,
    pub max_iter: usize,
}

/// Resolved scenario: the basis plus every declared object by name.
#[derive(Debug)]
pub struct Compiled {
    pub basis: FockBasis,
    pub filters: BTreeMap<String, Filter>,
    pub mats: BTreeMap<String, Vec<Complex64>>,
    pub vectors: BTreeMap<String, crate::one_particle::OneParticleVector>,
    pub biprocs: BTreeMap<String, SimpleBiprocess>,
    pub sdes: BTreeMap<String, CompiledSde>,
    pub mfsdes: BTreeMap<String, (usize, MFreeSdeCoefficients)>,
    pub tasks: Vec<TaskDecl>,
}

struct Resolver<'a> {
    grid: GridSpec,
    filters: &'a BTreeMap<String, Filter>,
    mats: &'a BTreeMap<String, Vec<Complex64>>,
}

impl<'a> Resolver<'a> {
    fn filter(&self, fe: &FilterExpr) -> ParseResult<Filter> {
        let f = match fe {
            FilterExpr::Full => Filter::Full,
            FilterExpr::Set(cs) => Filter::from_colors(cs.iter().copied()),
            FilterExpr::Ref(name) => self
                .filters
                .get(name)
                .cloned()
                .ok_or(Diagnostic {
                    code: "E002",
                    line: 0,
                    col: 0,
                    message: format!("undefined filter `{name}`"),
                })?,
        };
        f.validate(&self.grid).map_err(|e| Diagnostic {
            code: "E004",
            line: 0,
            col: 0,
            message: e.to_string(),
        })?;
        Ok(f)
    }

    fn cells(&self, t: f64) -> ParseResult<usize> {
        self.grid.cells_at_time(t).map_err(|e| Diagnostic {
            code: "E003",
            line: 0,
            col: 0,
            message: e.to_string(),
        })
    }

    fn leg(&self, l: &LegExpr, anchor: usize) -> ParseResult<(LegValue, Filter)> {
        let d = self.grid.h0_dim;
        let mut h0 = vec![Complex64::ZERO; d * d];
        for i in 0..d {
            h0[i * d + i] = Complex64::ONE;
        }
        let mut word = Vec::new();
        let matmul = |a: &[Complex64], b: &[Complex64]| -> Vec<Complex64> {
            let mut out = vec![Complex64::ZERO; d * d];
            for r in 0..d {
                for c in 0..d {
                    for k in 0..d {
                        out[r * d + c] += a[r * d + k] * b[k * d + c];
                    }
                }
            }
            out
        };
        for f in &l.factors {
            match f {
                FactorExpr::Identity => {}
                FactorExpr::Scalar(s) => {
                    for v in h0.iter_mut() {
                        *v *= s;
                    }
                }
                FactorExpr::MatRef(name) => {
                    let m = self.mats.get(name).ok_or(Diagnostic {
                        code: "E002",
                        line: 0,
                        col: 0,
                        message: format!("undefined matrix `{name}`"),
                    })?;
                    h0 = matmul(&h0, m);
                }
                FactorExpr::Create { color, t } => {
                    let cells = self.time_ref_cells(*t, anchor)?;
                    word.push(WordFactor::Create { color: *color, cells });
                }
                FactorExpr::Annihilate { color, t } => {
                    let cells = self.time_ref_cells(*t, anchor)?;
                    word.push(WordFactor::Annihilate { color: *color, cells });
                }
                FactorExpr::Count { color, t } => {
                    let cells = self.time_ref_cells(*t, anchor)?;
                    word.push(WordFactor::Count { color: *color, cells });
                }
                FactorExpr::Proj(fe) => {
                    let filt = self.filter(fe)?;
                    if anchor > 0 && !filt.is_full() {
                        word.push(WordFactor::WindowProj { filter: filt, from: 0, to: anchor });
                    }
                }
            }
        }
        let filter = self.filter(&l.filter)?;
        Ok((LegValue { h0, word, anchor }, filter))
    }

    fn time_ref_cells(&self, t: TimeRef, anchor: usize) -> ParseResult<usize> {
        let cells = match t {
            TimeRef::Anchor => anchor,
            TimeRef::Abs(v) => self.cells(v)?,
        };
        if cells > anchor {
            return Err(Diagnostic {
                code: "E006",
                line: 0,
                col: 0,
                message: format!(
                    "operator time (cell {cells}) exceeds the segment anchor (cell {anchor})"
                ),
            });
        }
        Ok(cells)
    }
}

pub fn compile(ast: &Ast) -> ParseResult<Compiled> {
    let g = &ast.grid;
    let grid = GridSpec::new(g.horizon, g.cells, g.colors, g.nmax, g.h0).map_err(|e| {
        Diagnostic { code: "E006", line: 1, col: 1, message: e.to_string() }
    })?;
    let basis = FockBasis::new(grid);
    let mut filters = BTreeMap::new();
    let mut mats = BTreeMap::new();
    let mut vectors = BTreeMap::new();
    let mut biprocs = BTreeMap::new();
    let mut sdes = BTreeMap::new();
    let mut mfsdes = BTreeMap::new();
    let mut names: Vec<String> = Vec::new();
    let mut check_fresh = |name: &str| -> ParseResult<()> {
        if names.iter().any(|n| n == name) {
            return Err(Diagnostic {
                code: "E005",
                line: 0,
                col: 0,
                message: format!("duplicate declaration `{name}`"),
            });
        }
        names.push(name.to_string());
        Ok(())
    };
    for (di, d) in ast.decls.iter().enumerate() {
        let at = |mut diag: Diagnostic| {
            if diag.line == 0 {
                diag.line = ast.decl_lines.get(di).copied().unwrap_or(0);
                diag.col = 1;
            }
            diag
        };
        match d {
            Decl::Filter(name, fe) => {
                check_fresh(name).map_err(&at)?;
                let r = Resolver { grid, filters: &filters, mats: &mats };
                let f = r.filter(fe).map_err(&at)?;
                filters.insert(name.clone(), f);
            }
            Decl::Mat(name, entries) => {
                check_fresh(name).map_err(&at)?;
                let d0 = grid.h0_dim;
                let mut m = vec![Complex64::ZERO; d0 * d0];
                for (r, c, v) in entries {
                    if *r >= d0 || *c >= d0 {
                        return Err(at(Diagnostic {
                            code: "E006",
                            line: 0,
                            col: 0,
                            message: format!("matrix entry ({r},{c}) outside h0 dim {d0}"),
                        }));
                    }
                    m[r * d0 + c] = *v;
                }
                mats.insert(name.clone(), m);
            }
            Decl::U(name, entries) => {
                check_fresh(name).map_err(&at)?;
                let mut u = crate::one_particle::OneParticleVector::zero(&grid);
                for (cell, color, v) in entries {
                    u.set(*cell, *color, *v)
                        .map_err(|e| at(Diagnostic {
                            code: "E006",
                            line: 0,
                            col: 0,
                            message: e.to_string(),
                        }))?;
                }
                vectors.insert(name.clone(), u);
            }
            Decl::Biproc(name, b) => {
                check_fresh(name).map_err(&at)?;
                let r = Resolver { grid, filters: &filters, mats: &mats };
                let mut partition = Vec::new();
                for t in &b.partition {
                    partition.push(r.cells(*t).map_err(&at)?);
                }
                if partition.is_empty() || partition[0] != 0 {
                    return Err(at(Diagnostic {
                        code: "E006",
                        line: 0,
                        col: 0,
                        message: "partition must start at t = 0".into(),
                    }));
                }
                let mut left = Vec::new();
                let mut right = Vec::new();
                let mut d_filter = None;
                let mut e_filter = None;
                for &anchor in &partition {
                    let (lv, df) = r.leg(&b.left, anchor).map_err(&at)?;
                    let (rv, ef) = r.leg(&b.right, anchor).map_err(&at)?;
                    d_filter = Some(df);
                    e_filter = Some(ef);
                    left.push(lv);
                    right.push(rv);
                }
                let bp = SimpleBiprocess::new(
                    d_filter.unwrap(),
                    e_filter.unwrap(),
                    partition,
                    left,
                    right,
                )
                .map_err(|e| at(Diagnostic {
                    code: "E006",
                    line: 0,
                    col: 0,
                    message: e.to_string(),
                }))?;
                biprocs.insert(name.clone(), bp);
            }
            Decl::Sde(name, s) => {
                check_fresh(name).map_err(&at)?;
                let r = Resolver { grid, filters: &filters, mats: &mats };
                let mut p0 = Vec::new();
                for fe in &s.p0 {
                    p0.push(r.filter(fe).map_err(&at)?);
                }
                let mut initial = Vec::new();
                for (fe, mat) in &s.initial {
                    let f = r.filter(fe).map_err(&at)?;
                    let m = mats.get(mat).ok_or_else(|| at(Diagnostic {
                        code: "E002",
                        line: 0,
                        col: 0,
                        message: format!("undefined matrix `{mat}`"),
                    }))?;
                    initial.push((f, m.clone()));
                }
                let mut terms = Vec::new();
                for (eta, l, rr) in &s.coeffs {
                    let (lv, df) = r.leg(l, 0).map_err(&at)?;
                    let (rv, ef) = r.leg(rr, 0).map_err(&at)?;
                    terms.push(SdeTerm {
                        eta: eta.to_kind(),
                        coeff: SimpleBiprocess::constant(df, ef, lv, rv),
                    });
                }
                let system = SdeSystem { p0, terms, initial };
                system.validate(&grid).map_err(|e| at(Diagnostic {
                    code: "E006",
                    line: 0,
                    col: 0,
                    message: e.to_string(),
                }))?;
                sdes.insert(
                    name.clone(),
                    CompiledSde { system, tol: s.tol, max_iter: s.max_iter },
                );
            }
            Decl::MFree(name, mf) => {
                check_fresh(name).map_err(&at)?;
                let r = Resolver { grid, filters: &filters, mats: &mats };
                let build = |slot: &Option<LegExpr>| -> ParseResult<MFreeCoefficient> {
                    match slot {
                        None => Ok(MFreeCoefficient::zero()),
                        Some(l) => {
                            let (lv, f) = r.leg(l, 0)?;
                            Ok(MFreeCoefficient::single(f, lv))
                        }
                    }
                };
                let coeffs = MFreeSdeCoefficients {
                    f: [
                        build(&mf.f[0])?,
                        build(&mf.f[1])?,
                        build(&mf.f[2])?,
                        build(&mf.f[3])?,
                    ],
                    g: [
                        build(&mf.g[0])?,
                        build(&mf.g[1])?,
                        build(&mf.g[2])?,
                        build(&mf.g[3])?,
                    ],
                    initial: {
                        let mut initial = Vec::new();
                        for (fe, mat) in &mf.initial {
                            let f = r.filter(fe).map_err(&at)?;
                            let m = mats.get(mat).ok_or_else(|| at(Diagnostic {
                                code: "E002",
                                line: 0,
                                col: 0,
                                message: format!("undefined matrix `{mat}`"),
                            }))?;
                            initial.push((f, m.clone()));
                        }
                        initial
                    },
                };
                mfsdes.insert(name.clone(), (mf.m, coeffs));
            }
        }
    }
    // task references
    for (ti, t) in ast.tasks.iter().enumerate() {
        let line = ast.task_lines.get(ti).copied().unwrap_or(0);
        let missing = move |kind: &str, name: &str| Diagnostic {
            code: "E002",
            line,
            col: 1,
            message: format!("undefined {kind} `{name}`"),
        };
        match t {
            TaskDecl::Oracle { biproc, .. } | TaskDecl::Adapted { biproc, .. } => {
                if !biprocs.contains_key(biproc) {
                    return Err(missing("biprocess", biproc));
                }
            }
            TaskDecl::VerifyIto { x1, x2, .. } => {
                for n in [x1, x2] {
                    if !biprocs.contains_key(n) {
                        return Err(missing("biprocess", n));
                    }
                }
            }
            TaskDecl::Solve { sde, .. } | TaskDecl::CheckUnitarity { sde } => {
                if !sdes.contains_key(sde) {
                    return Err(missing("sde", sde));
                }
            }
            TaskDecl::SweepM { mfree, .. } | TaskDecl::MFreeUnitarity { mfree } => {
                if !mfsdes.contains_key(mfree) {
                    return Err(missing("mfreesde", mfree));
                }
            }
            TaskDecl::Dump { u } => {
                if !vectors.contains_key(u) {
                    return Err(missing("one-particle vector", u));
                }
            }
            TaskDecl::ItoTable { .. } => {}
        }
    }
    Ok(Compiled { basis, filters, mats, vectors, biprocs, sdes, mfsdes, tasks: ast.tasks.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOLDEN: &str = r#"
# minimal but representative scenario
grid T=1 cells=8 colors=3 nmax=3 h0=2
filter D = {1,2}
mat W = [(0,0,1,0), (1,1,0.5,-0.5)]
u u1 = [(0,1,0.4,0), (3,2,0.1,-0.2)]
biproc X = [W A*(1,@) | D] ⊗ [I | FULL] on (0, 0.25, 0.5)
sde S {
  p0 = {}, {1}, {1,2}, FULL
  init FULL = W
  coeff dA*(1) : [W | {1,2}] ⊗ [I | FULL]
  coeff dT : [(0.2,-0.1) | FULL] ⊗ [I | FULL]
  tol = 1e-9
  maxiter = 30
}
task oracle X dA*(1) t=1 n=3
task adapted X t=0.5
task solve S t=1
task ito-table boson
"#;

    #[test]
    fn minimal_scenario_parses() {
        let ast = parse_scenario("grid T=1 cells=4 colors=2 nmax=2 h0=1\n").unwrap();
        assert_eq!(ast.tasks.len(), 0);
        assert_eq!(ast.decls.len(), 0);
        assert_eq!(ast.grid.cells, 4);
    }

    #[test]
    fn unknown_token_is_a_positioned_syntax_error() {
        let err = parse_scenario("grid T=1 cells=4 colors=2 nmax=2 h0=1\nwhatever x\n")
            .unwrap_err();
        assert_eq!(err.code, "E001");
        assert_eq!(err.line, 2);
    }

    #[test]
    fn golden_scenario_compiles() {
        let ast = parse_scenario(GOLDEN).unwrap();
        assert_eq!(ast.tasks.len(), 4);
        let compiled = compile(&ast).unwrap();
        assert_eq!(compiled.biprocs.len(), 1);
        let x = &compiled.biprocs["X"];
        assert_eq!(x.partition, vec![0, 2, 4]);
        assert_eq!(x.d, Filter::from_colors([1, 2]));
        assert!(compiled.sdes.contains_key("S"));
        assert_eq!(compiled.sdes["S"].max_iter, 30);
    }

    #[test]
    fn print_parse_roundtrip() {
        let ast = parse_scenario(GOLDEN).unwrap();
        let printed = pretty_print(&ast);
        let reparsed = parse_scenario(&printed).unwrap();
        assert_eq!(ast, reparsed, "printed form:\n{printed}");
    }

    #[test]
    fn diagnostics_have_codes() {
        // undefined reference
        let txt = "grid T=1 cells=4 colors=2 nmax=2 h0=1\nbiproc X = [Q | FULL] ⊗ [I | FULL] on (0)\n";
        let ast = parse_scenario(txt).unwrap();
        let err = compile(&ast).unwrap_err();
        assert_eq!(err.code, "E002");
        // off-grid time
        let txt = "grid T=1 cells=4 colors=2 nmax=2 h0=1\nbiproc X = [I | FULL] ⊗ [I | FULL] on (0, 0.3)\n";
        let err = compile(&parse_scenario(txt).unwrap()).unwrap_err();
        assert_eq!(err.code, "E003");
        // filter out of range
        let txt = "grid T=1 cells=4 colors=2 nmax=2 h0=1\nfilter V = {5}\n";
        let err = compile(&parse_scenario(txt).unwrap()).unwrap_err();
        assert_eq!(err.code, "E004");
        // duplicate
        let txt = "grid T=1 cells=4 colors=2 nmax=2 h0=1\nfilter V = {1}\nfilter V = {2}\n";
        let err = compile(&parse_scenario(txt).unwrap()).unwrap_err();
        assert_eq!(err.code, "E005");
    }
}
