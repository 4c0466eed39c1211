//! Topology specification language: a bounded space, a cell partition, and
//! one monotone epsilon-template per cell. This module parses, validates,
//! and prints specifications; validation compiles each requirement to a
//! sentence of linear rational arithmetic.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::geom::{AffineExpr, IntervalPiece, SemilinearSet, SetComponent};
use crate::lra::{decide_sentence, eliminate_all, LinFormula, LinTerm};
use crate::rat::{fmt_rat, midpoint, parse_rat, pow2_neg, rzero, Rat};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DslError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unknown identifier `{0}` (expected the cell variable or `eps`)")]
    UnknownIdent(String),
    #[error("duplicate cell {0}")]
    DuplicateCell(String),
    #[error("spec has not passed validation")]
    NotValidated,
}

/// A cell of the partition: an isolated point or a bounded open interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CellKind {
    IsolPoint(Rat),
    OpenCell(Rat, Rat),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub kind: CellKind,
    pub var_name: String,
}

impl Cell {
    pub fn describe(&self) -> String {
        match &self.kind {
            CellKind::IsolPoint(q) => format!("{{{}}}", fmt_rat(q)),
            CellKind::OpenCell(a, b) => format!("({},{})", fmt_rat(a), fmt_rat(b)),
        }
    }

    pub fn as_set(&self) -> SemilinearSet {
        match &self.kind {
            CellKind::IsolPoint(q) => SemilinearSet::point(q.clone()),
            CellKind::OpenCell(a, b) => SemilinearSet::open(a.clone(), b.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NbhdTemplate {
    pub pieces: Vec<IntervalPiece>,
}

/// A parsed topology specification. `eps_domain` is computed, not
/// user-supplied: per cell, the quantifier-free formula in variables
/// (`a`, `eps`) describing the valid scale parameters.
#[derive(Debug, Clone)]
pub struct TopologySpec {
    pub space: SemilinearSet,
    pub cells: Vec<Cell>,
    pub templates: Vec<NbhdTemplate>,
    pub eps_domain: Vec<LinFormula>,
    validated: bool,
}

impl PartialEq for TopologySpec {
    fn eq(&self, other: &Self) -> bool {
        // the validated flag is run state, not document content
        self.space == other.space
            && self.cells == other.cells
            && self.templates == other.templates
            && self.eps_domain == other.eps_domain
    }
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct Failure {
    pub check: String,
    pub witness: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct ValidationReport {
    pub ok: bool,
    pub failures: Vec<Failure>,
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Num(Rat),
    Sym(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, DslError> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c == '\n' {
            chars.next();
            line += 1;
            col = 1;
        } else if c.is_whitespace() {
            chars.next();
            col += 1;
        } else if c == '#' {
            while let Some(&d) = chars.peek() {
                if d == '\n' {
                    break;
                }
                chars.next();
                col += 1;
            }
        } else if c.is_ascii_digit() {
            let (tl, tc) = (line, col);
            let mut num = String::new();
            while let Some(&d) = chars.peek() {
                if d.is_ascii_digit() {
                    num.push(d);
                    chars.next();
                    col += 1;
                } else {
                    break;
                }
            }
            // optional "/ INT" forming an exact rational literal
            let mut save = chars.clone();
            let mut save_col = col;
            if let Some('/') = save.peek().copied() {
                save.next();
                save_col += 1;
                let mut den = String::new();
                while let Some(&d) = save.peek() {
                    if d.is_ascii_digit() {
                        den.push(d);
                        save.next();
                        save_col += 1;
                    } else {
                        break;
                    }
                }
                if !den.is_empty() {
                    num.push('/');
                    num.push_str(&den);
                    chars = save;
                    col = save_col;
                }
            }
            let r = parse_rat(&num).ok_or(DslError::Syntax {
                line: tl,
                col: tc,
                msg: format!("bad number `{num}`"),
            })?;
            out.push(Token {
                tok: Tok::Num(r),
                line: tl,
                col: tc,
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let (tl, tc) = (line, col);
            let mut id = String::new();
            while let Some(&d) = chars.peek() {
                if d.is_ascii_alphanumeric() || d == '_' {
                    id.push(d);
                    chars.next();
                    col += 1;
                } else {
                    break;
                }
            }
            out.push(Token {
                tok: Tok::Ident(id),
                line: tl,
                col: tc,
            });
        } else if "(){}[],:;+-*".contains(c) {
            out.push(Token {
                tok: Tok::Sym(c),
                line,
                col,
            });
            chars.next();
            col += 1;
        } else {
            return Err(DslError::Syntax {
                line,
                col,
                msg: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn err(&self, msg: &str) -> DslError {
        let (line, col) = self
            .tokens
            .get(self.pos)
            .or_else(|| self.tokens.last())
            .map(|t| (t.line, t.col))
            .unwrap_or((1, 1));
        DslError::Syntax {
            line,
            col,
            msg: msg.to_string(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).map(|t| t.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect_sym(&mut self, c: char) -> Result<(), DslError> {
        match self.peek() {
            Some(Tok::Sym(s)) if *s == c => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(&format!("expected `{c}`"))),
        }
    }

    fn expect_ident(&mut self, word: &str) -> Result<(), DslError> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == word => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(&format!("expected `{word}`"))),
        }
    }

    fn ident(&mut self) -> Result<String, DslError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err("expected identifier")),
        }
    }

    fn signed_rat(&mut self) -> Result<Rat, DslError> {
        let neg = matches!(self.peek(), Some(Tok::Sym('-')));
        if neg {
            self.pos += 1;
        }
        match self.next() {
            Some(Tok::Num(r)) => Ok(if neg { -r } else { r }),
            _ => Err(self.err("expected rational literal")),
        }
    }

    /// item := "(" rat "," rat ")" | "{" rat "}"
    fn item(&mut self) -> Result<CellKind, DslError> {
        match self.peek() {
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let lo = self.signed_rat()?;
                self.expect_sym(',')?;
                let hi = self.signed_rat()?;
                self.expect_sym(')')?;
                if lo >= hi {
                    return Err(self.err("interval requires lo < hi"));
                }
                Ok(CellKind::OpenCell(lo, hi))
            }
            Some(Tok::Sym('{')) => {
                self.pos += 1;
                let q = self.signed_rat()?;
                self.expect_sym('}')?;
                Ok(CellKind::IsolPoint(q))
            }
            _ => Err(self.err("expected `(lo,hi)` or `{q}`")),
        }
    }

    /// expr := affine combination of the cell variable, `eps`, and rationals
    fn expr(&mut self, var: &str) -> Result<AffineExpr, DslError> {
        let mut acc = AffineExpr::constant(rzero());
        let mut sign = Rat::from_integer(1.into());
        let mut first = true;
        loop {
            match self.peek() {
                Some(Tok::Sym('-')) => {
                    self.pos += 1;
                    sign = -Rat::from_integer(1.into());
                }
                Some(Tok::Sym('+')) if !first => {
                    self.pos += 1;
                    sign = Rat::from_integer(1.into());
                }
                _ if first => {}
                _ => break,
            }
            // term := NUM ["*" IDENT] | IDENT
            let term = match self.next() {
                Some(Tok::Num(k)) => {
                    if matches!(self.peek(), Some(Tok::Sym('*'))) {
                        self.pos += 1;
                        let id = self.ident()?;
                        (k, Some(id))
                    } else {
                        (k, None)
                    }
                }
                Some(Tok::Ident(id)) => (Rat::from_integer(1.into()), Some(id)),
                _ => return Err(self.err("expected term")),
            };
            let k = &term.0 * &sign;
            match term.1 {
                None => acc.constant += k,
                Some(id) if id == "eps" => acc.coef_eps += k,
                Some(id) if id == var => acc.coef_a += k,
                Some(id) => return Err(DslError::UnknownIdent(id)),
            }
            first = false;
            match self.peek() {
                Some(Tok::Sym('+')) | Some(Tok::Sym('-')) => continue,
                _ => break,
            }
        }
        Ok(acc)
    }

    /// piece := lb expr "," expr rb | "{" expr "}"
    fn piece(&mut self, var: &str) -> Result<IntervalPiece, DslError> {
        match self.peek() {
            Some(Tok::Sym('{')) => {
                self.pos += 1;
                let at = self.expr(var)?;
                self.expect_sym('}')?;
                Ok(IntervalPiece::Singleton(at))
            }
            Some(Tok::Sym(c)) if *c == '(' || *c == '[' => {
                let left_closed = *c == '[';
                self.pos += 1;
                let lo = self.expr(var)?;
                self.expect_sym(',')?;
                let hi = self.expr(var)?;
                let right_closed = match self.next() {
                    Some(Tok::Sym(')')) => false,
                    Some(Tok::Sym(']')) => true,
                    _ => return Err(self.err("expected `)` or `]`")),
                };
                Ok(IntervalPiece::Interval {
                    lo,
                    hi,
                    left_closed,
                    right_closed,
                })
            }
            _ => Err(self.err("expected neighborhood piece")),
        }
    }
}

/// Parses a specification source. The returned spec is unvalidated but has
/// its per-cell epsilon domain already computed.
pub fn parse(text: &str) -> Result<TopologySpec, DslError> {
    let mut p = Parser {
        tokens: lex(text)?,
        pos: 0,
    };
    p.expect_ident("space")?;
    p.expect_sym('{')?;
    let mut space_items = Vec::new();
    loop {
        space_items.push(p.item()?);
        match p.peek() {
            Some(Tok::Sym(',')) => {
                p.pos += 1;
            }
            _ => break,
        }
    }
    p.expect_sym('}')?;
    p.expect_ident("topology")?;
    p.expect_sym('{')?;
    let mut cells: Vec<Cell> = Vec::new();
    let mut templates: Vec<NbhdTemplate> = Vec::new();
    while matches!(p.peek(), Some(Tok::Ident(w)) if w == "on") {
        p.pos += 1;
        let kind = p.item()?;
        p.expect_ident("at")?;
        let var_name = p.ident()?;
        if var_name == "eps" {
            return Err(p.err("cell variable may not be named `eps`"));
        }
        p.expect_sym(':')?;
        p.expect_sym('{')?;
        let mut pieces = Vec::new();
        loop {
            pieces.push(p.piece(&var_name)?);
            match p.peek() {
                Some(Tok::Sym(',')) => {
                    p.pos += 1;
                }
                _ => break,
            }
        }
        p.expect_sym('}')?;
        p.expect_sym(';')?;
        let cell = Cell {
            kind,
            var_name,
        };
        if cells.iter().any(|c| c.kind == cell.kind) {
            return Err(DslError::DuplicateCell(cell.describe()));
        }
        cells.push(cell);
        templates.push(NbhdTemplate { pieces });
    }
    p.expect_sym('}')?;
    if p.pos != p.tokens.len() {
        return Err(p.err("trailing tokens after topology block"));
    }
    if cells.is_empty() {
        return Err(p.err("topology block needs at least one rule"));
    }

    let space = SemilinearSet::canonicalize(
        space_items
            .into_iter()
            .map(|k| match k {
                CellKind::IsolPoint(q) => SetComponent::Point(q),
                CellKind::OpenCell(a, b) => SetComponent::Open(a, b),
            })
            .collect(),
    );
    let mut spec = TopologySpec {
        space,
        cells,
        templates,
        eps_domain: Vec::new(),
        validated: false,
    };
    spec.eps_domain = (0..spec.cells.len()).map(|i| spec.compute_domain(i)).collect();
    Ok(spec)
}

/// Prints a specification in the canonical source form; `parse(emit(s))`
/// equals `s` structurally.
pub fn emit(spec: &TopologySpec) -> String {
    let mut out = String::new();
    let items: Vec<String> = spec
        .space
        .components()
        .iter()
        .map(|c| match c {
            SetComponent::Point(q) => format!("{{{}}}", fmt_rat(q)),
            SetComponent::Open(a, b) => format!("({}, {})", fmt_rat(a), fmt_rat(b)),
        })
        .collect();
    let _ = writeln!(out, "space {{ {} }}", items.join(", "));
    let _ = writeln!(out, "topology {{");
    for (cell, tpl) in spec.cells.iter().zip(&spec.templates) {
        let pieces: Vec<String> = tpl
            .pieces
            .iter()
            .map(|p| match p {
                IntervalPiece::Singleton(at) => format!("{{{}}}", at.render(&cell.var_name)),
                IntervalPiece::Interval {
                    lo,
                    hi,
                    left_closed,
                    right_closed,
                } => format!(
                    "{}{}, {}{}",
                    if *left_closed { '[' } else { '(' },
                    lo.render(&cell.var_name),
                    hi.render(&cell.var_name),
                    if *right_closed { ']' } else { ')' },
                ),
            })
            .collect();
        let _ = writeln!(
            out,
            "  on {} at {}: {{ {} }};",
            cell.describe(),
            cell.var_name,
            pieces.join(", ")
        );
    }
    let _ = writeln!(out, "}}");
    out
}

// ---------------------------------------------------------------------------
// Formula construction
// ---------------------------------------------------------------------------

fn affine_term(e: &AffineExpr, a_var: &str, eps_var: &str) -> LinTerm {
    LinTerm::from_parts(
        vec![
            (a_var.to_string(), e.coef_a.clone()),
            (eps_var.to_string(), e.coef_eps.clone()),
        ],
        e.constant.clone(),
    )
}

/// `lhs < var` or `lhs <= var` depending on closedness on the left.
fn between(
    lo: &AffineExpr,
    hi: &AffineExpr,
    left_closed: bool,
    right_closed: bool,
    a_var: &str,
    eps_var: &str,
    y_var: &str,
) -> LinFormula {
    let y = LinTerm::var(y_var);
    let lo_t = affine_term(lo, a_var, eps_var);
    let hi_t = affine_term(hi, a_var, eps_var);
    let left = if left_closed {
        LinFormula::le(lo_t, y.clone())
    } else {
        LinFormula::lt(lo_t, y.clone())
    };
    let right = if right_closed {
        LinFormula::le(y, hi_t)
    } else {
        LinFormula::lt(y, hi_t)
    };
    LinFormula::and(vec![left, right])
}

/// Membership of a concrete rational in a formula-sense set.
pub fn set_member_formula(set: &SemilinearSet, var: &str) -> LinFormula {
    LinFormula::or(
        set.components()
            .iter()
            .map(|c| match c {
                SetComponent::Point(q) => LinFormula::eq(
                    LinTerm::var(var),
                    LinTerm::constant(q.clone()),
                ),
                SetComponent::Open(a, b) => LinFormula::and(vec![
                    LinFormula::lt(LinTerm::constant(a.clone()), LinTerm::var(var)),
                    LinFormula::lt(LinTerm::var(var), LinTerm::constant(b.clone())),
                ]),
            })
            .collect(),
    )
}

impl TopologySpec {
    /// Builds a specification programmatically, computing the epsilon
    /// domains; the result still has to pass `validate`.
    pub fn assemble(
        space: SemilinearSet,
        cells: Vec<Cell>,
        templates: Vec<NbhdTemplate>,
    ) -> TopologySpec {
        let mut spec = TopologySpec {
            space,
            cells,
            templates,
            eps_domain: Vec::new(),
            validated: false,
        };
        spec.eps_domain = (0..spec.cells.len()).map(|i| spec.compute_domain(i)).collect();
        spec
    }

    pub fn is_validated(&self) -> bool {
        self.validated
    }

    pub fn require_validated(&self) -> Result<(), DslError> {
        if self.validated {
            Ok(())
        } else {
            Err(DslError::NotValidated)
        }
    }

    /// Marks the spec validated without running checks; test-only escape
    /// hatch for modules exercising deliberately broken specs.
    pub fn force_validated(&mut self) {
        self.validated = true;
    }

    pub fn space_member(&self, var: &str) -> LinFormula {
        set_member_formula(&self.space, var)
    }

    pub fn cell_member(&self, idx: usize, var: &str) -> LinFormula {
        match &self.cells[idx].kind {
            CellKind::IsolPoint(q) => {
                LinFormula::eq(LinTerm::var(var), LinTerm::constant(q.clone()))
            }
            CellKind::OpenCell(a, b) => LinFormula::and(vec![
                LinFormula::lt(LinTerm::constant(a.clone()), LinTerm::var(var)),
                LinFormula::lt(LinTerm::var(var), LinTerm::constant(b.clone())),
            ]),
        }
    }

    /// `y ∈ N_idx(a, eps)` as a quantifier-free formula.
    pub fn nbhd_member(&self, idx: usize, a_var: &str, eps_var: &str, y_var: &str) -> LinFormula {
        LinFormula::or(
            self.templates[idx]
                .pieces
                .iter()
                .map(|p| match p {
                    IntervalPiece::Singleton(at) => LinFormula::eq(
                        LinTerm::var(y_var),
                        affine_term(at, a_var, eps_var),
                    ),
                    IntervalPiece::Interval {
                        lo,
                        hi,
                        left_closed,
                        right_closed,
                    } => between(lo, hi, *left_closed, *right_closed, a_var, eps_var, y_var),
                })
                .collect(),
        )
    }

    /// The computed validity domain for cell `idx`, renamed to the given
    /// variable names.
    pub fn domain(&self, idx: usize, a_var: &str, eps_var: &str) -> LinFormula {
        let f = &self.eps_domain[idx];
        let tmp_a = "__dom_a";
        let tmp_e = "__dom_eps";
        f.substitute("a", &LinTerm::var(tmp_a))
            .substitute("eps", &LinTerm::var(tmp_e))
            .substitute(tmp_a, &LinTerm::var(a_var))
            .substitute(tmp_e, &LinTerm::var(eps_var))
    }

    /// Constants of isolated-point cells other than `owner`.
    pub fn foreign_constants(&self, owner: usize) -> Vec<Rat> {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(j, c)| match &c.kind {
                CellKind::IsolPoint(q) if j != owner => Some(q.clone()),
                _ => None,
            })
            .collect()
    }

    /// Computes the validity domain of cell `idx` as a quantifier-free
    /// formula in (`a`, `eps`): positivity, non-degeneracy, containment of
    /// the instantiated neighborhood in the space, and avoidance of the
    /// isolated points belonging to other cells.
    fn compute_domain(&self, idx: usize) -> LinFormula {
        let mut parts = vec![LinFormula::lt(
            LinTerm::constant(rzero()),
            LinTerm::var("eps"),
        )];
        for p in &self.templates[idx].pieces {
            if let IntervalPiece::Interval { lo, hi, .. } = p {
                parts.push(LinFormula::lt(
                    affine_term(lo, "a", "eps"),
                    affine_term(hi, "a", "eps"),
                ));
            }
        }
        // containment: forall y (y in N(a,eps) -> y in X), projected to (a,eps)
        let contain = LinFormula::forall(
            "y",
            LinFormula::implies(
                self.nbhd_member(idx, "a", "eps", "y"),
                self.space_member("y"),
            ),
        );
        parts.push(eliminate_all(&contain).to_formula());
        // avoidance: neighborhoods never capture another cell's isolated point
        for q in self.foreign_constants(idx) {
            let hit = self
                .nbhd_member(idx, "a", "eps", "y")
                .substitute("y", &LinTerm::constant(q));
            parts.push(LinFormula::not(hit));
        }
        eliminate_all(&LinFormula::and(parts)).to_formula()
    }

    /// Sample rationals inside a cell at dyadic resolution `k`, always
    /// including off-center points near the cell boundary.
    pub fn cell_samples(&self, idx: usize, k: u32) -> Vec<Rat> {
        match &self.cells[idx].kind {
            CellKind::IsolPoint(q) => vec![q.clone()],
            CellKind::OpenCell(a, b) => {
                let mut out = Vec::new();
                let step = pow2_neg(k);
                let mut q = a + &step;
                while q < *b {
                    out.push(q.clone());
                    q += &step;
                }
                let mid = midpoint(a, b);
                if !out.contains(&mid) {
                    out.push(mid);
                }
                let near_lo = a + (b - a) / Rat::from_integer(64.into());
                let near_hi = b - (b - a) / Rat::from_integer(64.into());
                for extra in [near_lo, near_hi] {
                    if !out.contains(&extra) {
                        out.push(extra);
                    }
                }
                out.sort();
                out
            }
        }
    }

    /// Sample rationals across the whole space (grid plus special points).
    pub fn space_samples(&self, k: u32) -> Vec<Rat> {
        let mut out = Vec::new();
        for idx in 0..self.cells.len() {
            out.extend(self.cell_samples(idx, k));
        }
        out.sort();
        out.dedup();
        out
    }

    /// Index of the cell containing a rational, if any.
    pub fn cell_of(&self, q: &Rat) -> Option<usize> {
        self.cells.iter().position(|c| match &c.kind {
            CellKind::IsolPoint(p) => p == q,
            CellKind::OpenCell(a, b) => a < q && q < b,
        })
    }

    /// Instantiates the neighborhood of a concrete point.
    pub fn nbhd_at(&self, q: &Rat, eps: &Rat) -> Option<SemilinearSet> {
        let idx = self.cell_of(q)?;
        crate::geom::eval_template(&self.templates[idx].pieces, q, eps).ok()
    }

    /// Largest epsilon of the dyadic schedule valid at `q`, if any.
    pub fn valid_eps(&self, q: &Rat, depth: u32) -> Option<Rat> {
        let idx = self.cell_of(q)?;
        let dom = self.domain(idx, "a", "eps");
        for k in 1..=depth {
            let eps = pow2_neg(k);
            let mut asg = BTreeMap::new();
            asg.insert("a".to_string(), q.clone());
            asg.insert("eps".to_string(), eps.clone());
            if dom.eval(&asg).unwrap_or(false) {
                return Some(eps);
            }
        }
        None
    }

    // -- validation ---------------------------------------------------------

    /// Runs all validity checks, extracting a concrete rational witness for
    /// every failure. Marks the spec validated when everything passes.
    pub fn validate(&mut self) -> ValidationReport {
        let mut failures = Vec::new();

        // (i) partition: cells pairwise disjoint, union equals the space
        let mut union = SemilinearSet::empty();
        let mut disjoint_ok = true;
        for (i, c) in self.cells.iter().enumerate() {
            let cs = c.as_set();
            let overlap = union.intersection(&cs);
            if !overlap.is_empty() {
                disjoint_ok = false;
                failures.push(Failure {
                    check: "partition".into(),
                    witness: BTreeMap::from([(
                        "overlap".into(),
                        format!("{} (cell {})", overlap.render(), i),
                    )]),
                });
            }
            union = union.union(&cs);
        }
        if disjoint_ok && union != self.space {
            let missing = self.space.difference(&union);
            let extra = union.difference(&self.space);
            failures.push(Failure {
                check: "partition".into(),
                witness: BTreeMap::from([
                    ("uncovered".into(), missing.render()),
                    ("outside_space".into(), extra.render()),
                ]),
            });
        }

        // per-cell sentence checks
        for idx in 0..self.cells.len() {
            self.check_membership(idx, &mut failures);
            self.check_domain_nonempty(idx, &mut failures);
            self.check_monotone(idx, &mut failures);
        }
        self.check_openness(&mut failures);

        // (vi) boundedness: structural for SemilinearSet, asserted explicitly
        if self.space.bounds().is_none() && !self.space.is_empty() {
            failures.push(Failure {
                check: "boundedness".into(),
                witness: BTreeMap::new(),
            });
        }

        let ok = failures.is_empty();
        self.validated = ok;
        ValidationReport { ok, failures }
    }

    fn decide(&self, sentence: &LinFormula) -> bool {
        decide_sentence(sentence).expect("validation sentences are closed")
    }

    /// Searches a dyadic grid for an assignment satisfying a
    /// quantifier-free formula; used to extract failure witnesses.
    fn find_witness(
        &self,
        formula: &LinFormula,
        vars: &[(&str, Vec<Rat>)],
    ) -> BTreeMap<String, String> {
        fn rec(
            formula: &LinFormula,
            vars: &[(&str, Vec<Rat>)],
            asg: &mut BTreeMap<String, Rat>,
        ) -> bool {
            match vars.split_first() {
                None => formula.eval(asg).unwrap_or(false),
                Some(((name, values), rest)) => {
                    for v in values {
                        asg.insert(name.to_string(), v.clone());
                        if rec(formula, rest, asg) {
                            return true;
                        }
                    }
                    asg.remove(*name);
                    false
                }
            }
        }
        let mut asg = BTreeMap::new();
        if rec(formula, vars, &mut asg) {
            asg.into_iter().map(|(k, v)| (k, fmt_rat(&v))).collect()
        } else {
            BTreeMap::from([("witness".into(), "below sampling resolution".into())])
        }
    }

    fn schedule(&self) -> Vec<Rat> {
        (1..=10).map(pow2_neg).collect()
    }

    /// (ii) membership: a ∈ N(a, eps) throughout the domain.
    fn check_membership(&self, idx: usize, failures: &mut Vec<Failure>) {
        let body = LinFormula::implies(
            LinFormula::and(vec![
                self.cell_member(idx, "a"),
                self.domain(idx, "a", "eps"),
            ]),
            self.nbhd_member(idx, "a", "eps", "a"),
        );
        let sentence = LinFormula::forall("a", LinFormula::forall("eps", body.clone()));
        if !self.decide(&sentence) {
            let neg = LinFormula::not(body);
            let witness = self.find_witness(
                &neg,
                &[
                    ("a", self.cell_samples(idx, 5)),
                    ("eps", self.schedule()),
                ],
            );
            failures.push(Failure {
                check: format!("membership (cell {})", self.cells[idx].describe()),
                witness,
            });
        }
    }

    /// (iii) domain nonemptiness: every point of the cell admits some valid
    /// eps (this is where containment violations surface — an uncontainable
    /// template has an empty domain).
    fn check_domain_nonempty(&self, idx: usize, failures: &mut Vec<Failure>) {
        let sentence = LinFormula::forall(
            "a",
            LinFormula::implies(
                self.cell_member(idx, "a"),
                LinFormula::exists("eps", self.domain(idx, "a", "eps")),
            ),
        );
        if !self.decide(&sentence) {
            let neg = LinFormula::and(vec![
                self.cell_member(idx, "a"),
                LinFormula::not(
                    eliminate_all(&LinFormula::exists("eps", self.domain(idx, "a", "eps")))
                        .to_formula(),
                ),
            ]);
            let witness = self.find_witness(&neg, &[("a", self.cell_samples(idx, 6))]);
            failures.push(Failure {
                check: format!("containment/domain (cell {})", self.cells[idx].describe()),
                witness,
            });
        }
    }

    /// (iv) monotonicity in eps.
    fn check_monotone(&self, idx: usize, failures: &mut Vec<Failure>) {
        let body = LinFormula::implies(
            LinFormula::and(vec![
                self.cell_member(idx, "a"),
                self.domain(idx, "a", "eps"),
                self.domain(idx, "a", "eps2"),
                LinFormula::lt(LinTerm::var("eps2"), LinTerm::var("eps")),
                self.nbhd_member(idx, "a", "eps2", "y"),
            ]),
            self.nbhd_member(idx, "a", "eps", "y"),
        );
        let sentence = LinFormula::forall(
            "a",
            LinFormula::forall(
                "eps",
                LinFormula::forall("eps2", LinFormula::forall("y", body.clone())),
            ),
        );
        if !self.decide(&sentence) {
            let neg = LinFormula::not(body);
            let mut ys: Vec<Rat> = self.space_samples(5);
            ys.extend(self.space.affine_closure().components().iter().filter_map(
                |c| match c {
                    SetComponent::Point(p) => Some(p.clone()),
                    _ => None,
                },
            ));
            let witness = self.find_witness(
                &neg,
                &[
                    ("a", self.cell_samples(idx, 4)),
                    ("eps", self.schedule()),
                    ("eps2", self.schedule()),
                    ("y", ys),
                ],
            );
            failures.push(Failure {
                check: format!("monotonicity (cell {})", self.cells[idx].describe()),
                witness,
            });
        }
    }

    /// (v) openness coherence: every point of a neighborhood has a
    /// neighborhood of its own inside it, case-split over the cell of the
    /// inner point.
    fn check_openness(&self, failures: &mut Vec<Failure>) {
        for i in 0..self.cells.len() {
            for j in 0..self.cells.len() {
                let subset = LinFormula::forall(
                    "y",
                    LinFormula::implies(
                        self.nbhd_member(j, "b", "delta", "y"),
                        self.nbhd_member(i, "a", "eps", "y"),
                    ),
                );
                let inner = LinFormula::exists(
                    "delta",
                    LinFormula::and(vec![self.domain(j, "b", "delta"), subset]),
                );
                let body = LinFormula::implies(
                    LinFormula::and(vec![
                        self.cell_member(i, "a"),
                        self.domain(i, "a", "eps"),
                        self.nbhd_member(i, "a", "eps", "b"),
                        self.cell_member(j, "b"),
                    ]),
                    inner.clone(),
                );
                let sentence = LinFormula::forall(
                    "a",
                    LinFormula::forall("eps", LinFormula::forall("b", body)),
                );
                if !self.decide(&sentence) {
                    // witness: (a, eps, b) with the inner condition reduced
                    // to quantifier-free form first
                    let inner_qf = eliminate_all(&inner).to_formula();
                    let neg = LinFormula::and(vec![
                        self.cell_member(i, "a"),
                        self.domain(i, "a", "eps"),
                        self.nbhd_member(i, "a", "eps", "b"),
                        self.cell_member(j, "b"),
                        LinFormula::not(inner_qf),
                    ]);
                    let witness = self.find_witness(
                        &neg,
                        &[
                            ("a", self.cell_samples(i, 4)),
                            ("eps", self.schedule()),
                            ("b", self.cell_samples(j, 6)),
                        ],
                    );
                    failures.push(Failure {
                        check: format!(
                            "openness (cell {} point inside neighborhood of cell {})",
                            self.cells[j].describe(),
                            self.cells[i].describe()
                        ),
                        witness,
                    });
                }
            }
        }
    }
}
