//! Quantifier elimination and satisfiability for linear constraints over the
//! ordered rationals.
//!
//! Everything downstream (validation, closures, shadow sets, the main-theorem
//! deciders) compiles to sentences in this fragment and is discharged here by
//! Fourier-Motzkin elimination. All arithmetic is exact; there is no floating
//! point anywhere on a decision path.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::{Signed, Zero};

use crate::geom::{SemilinearSet, SetComponent};
use crate::rat::{fmt_rat, parse_rat, rzero, Rat};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum LraError {
    #[error("formula has unexpected free variables: {0:?}")]
    FreeVariables(Vec<String>),
    #[error("solution set is unbounded")]
    Unbounded,
    #[error("variable {0} missing from assignment")]
    MissingVariable(String),
    #[error("formula is not quantifier-free")]
    NotQuantifierFree,
    #[error("parse error in formula text: {0}")]
    Parse(String),
}

/// Affine term `sum(coeff_i * var_i) + constant`. Zero coefficients are never
/// stored.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct LinTerm {
    coeffs: BTreeMap<String, Rat>,
    constant: Rat,
}

impl LinTerm {
    pub fn constant(c: Rat) -> Self {
        LinTerm {
            coeffs: BTreeMap::new(),
            constant: c,
        }
    }

    pub fn var(name: &str) -> Self {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(name.to_string(), Rat::from_integer(1.into()));
        LinTerm {
            coeffs,
            constant: rzero(),
        }
    }

    pub fn from_parts(coeffs: Vec<(String, Rat)>, constant: Rat) -> Self {
        let mut t = LinTerm::constant(constant);
        for (v, c) in coeffs {
            t.add_coeff(&v, c);
        }
        t
    }

    pub fn coeff(&self, var: &str) -> Rat {
        self.coeffs.get(var).cloned().unwrap_or_else(rzero)
    }

    pub fn constant_part(&self) -> &Rat {
        &self.constant
    }

    pub fn coeffs(&self) -> &BTreeMap<String, Rat> {
        &self.coeffs
    }

    fn add_coeff(&mut self, var: &str, c: Rat) {
        if c.is_zero() {
            return;
        }
        let entry = self.coeffs.entry(var.to_string()).or_insert_with(rzero);
        *entry += c;
        if entry.is_zero() {
            self.coeffs.remove(var);
        }
    }

    pub fn add(&self, other: &LinTerm) -> LinTerm {
        let mut out = self.clone();
        out.constant += &other.constant;
        for (v, c) in &other.coeffs {
            out.add_coeff(v, c.clone());
        }
        out
    }

    pub fn scale(&self, k: &Rat) -> LinTerm {
        if k.is_zero() {
            return LinTerm::constant(rzero());
        }
        LinTerm {
            coeffs: self.coeffs.iter().map(|(v, c)| (v.clone(), c * k)).collect(),
            constant: &self.constant * k,
        }
    }

    pub fn sub(&self, other: &LinTerm) -> LinTerm {
        self.add(&other.scale(&-Rat::from_integer(1.into())))
    }

    pub fn neg(&self) -> LinTerm {
        self.scale(&-Rat::from_integer(1.into()))
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn vars(&self) -> impl Iterator<Item = &String> {
        self.coeffs.keys()
    }

    /// Replaces `var` by the term `repl`.
    pub fn substitute(&self, var: &str, repl: &LinTerm) -> LinTerm {
        match self.coeffs.get(var) {
            None => self.clone(),
            Some(c) => {
                let c = c.clone();
                let mut out = self.clone();
                out.coeffs.remove(var);
                out.add(&repl.scale(&c))
            }
        }
    }

    pub fn eval(&self, assignment: &BTreeMap<String, Rat>) -> Result<Rat, LraError> {
        let mut v = self.constant.clone();
        for (var, c) in &self.coeffs {
            let x = assignment
                .get(var)
                .ok_or_else(|| LraError::MissingVariable(var.clone()))?;
            v += c * x;
        }
        Ok(v)
    }
}

impl fmt::Display for LinTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (v, c) in &self.coeffs {
            if first {
                write!(f, "{}*{}", fmt_rat(c), v)?;
                first = false;
            } else if c.is_negative() {
                write!(f, " - {}*{}", fmt_rat(&-c.clone()), v)?;
            } else {
                write!(f, " + {}*{}", fmt_rat(c), v)?;
            }
        }
        if first {
            write!(f, "{}", fmt_rat(&self.constant))?;
        } else if !self.constant.is_zero() {
            if self.constant.is_negative() {
                write!(f, " - {}", fmt_rat(&-self.constant.clone()))?;
            } else {
                write!(f, " + {}", fmt_rat(&self.constant))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rel {
    Lt,
    Le,
    Eq,
}

/// Atomic constraint `term rel 0`, kept in a primitive normal form so that
/// syntactically equal constraints deduplicate.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    term: LinTerm,
    rel: Rel,
}

impl Atom {
    pub fn new(term: LinTerm, rel: Rel) -> Self {
        Atom { term, rel }.normalize()
    }

    pub fn term(&self) -> &LinTerm {
        &self.term
    }

    pub fn rel(&self) -> Rel {
        self.rel
    }

    /// Scales the term to a primitive representative: the smallest-named
    /// variable gets coefficient +-1, and equalities fix the sign to +1.
    fn normalize(mut self) -> Self {
        let scale = match self.term.coeffs.values().next() {
            Some(c) => c.abs(),
            None => return self,
        };
        self.term = self.term.scale(&(Rat::from_integer(1.into()) / scale));
        if self.rel == Rel::Eq {
            if let Some(c) = self.term.coeffs.values().next() {
                if c.is_negative() {
                    self.term = self.term.neg();
                }
            }
        }
        self
    }

    /// For ground atoms, the truth value.
    fn ground_value(&self) -> Option<bool> {
        if !self.term.is_constant() {
            return None;
        }
        let c = &self.term.constant;
        Some(match self.rel {
            Rel::Lt => c.is_negative(),
            Rel::Le => c.is_negative() || c.is_zero(),
            Rel::Eq => c.is_zero(),
        })
    }

    fn eval(&self, assignment: &BTreeMap<String, Rat>) -> Result<bool, LraError> {
        let v = self.term.eval(assignment)?;
        Ok(match self.rel {
            Rel::Lt => v.is_negative(),
            Rel::Le => !v.is_positive(),
            Rel::Eq => v.is_zero(),
        })
    }

    /// Negation as a disjunction of atoms.
    fn negate(&self) -> Vec<Atom> {
        match self.rel {
            Rel::Lt => vec![Atom::new(self.term.neg(), Rel::Le)],
            Rel::Le => vec![Atom::new(self.term.neg(), Rel::Lt)],
            Rel::Eq => vec![
                Atom::new(self.term.clone(), Rel::Lt),
                Atom::new(self.term.neg(), Rel::Lt),
            ],
        }
    }
}

/// Quantified boolean combination of linear constraints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LinFormula {
    True,
    False,
    Atom(Atom),
    And(Vec<LinFormula>),
    Or(Vec<LinFormula>),
    Not(Box<LinFormula>),
    Exists(String, Box<LinFormula>),
    Forall(String, Box<LinFormula>),
}

impl LinFormula {
    pub fn atom(term: LinTerm, rel: Rel) -> Self {
        let a = Atom::new(term, rel);
        match a.ground_value() {
            Some(true) => LinFormula::True,
            Some(false) => LinFormula::False,
            None => LinFormula::Atom(a),
        }
    }

    /// `lhs < rhs`
    pub fn lt(lhs: LinTerm, rhs: LinTerm) -> Self {
        Self::atom(lhs.sub(&rhs), Rel::Lt)
    }

    /// `lhs <= rhs`
    pub fn le(lhs: LinTerm, rhs: LinTerm) -> Self {
        Self::atom(lhs.sub(&rhs), Rel::Le)
    }

    /// `lhs = rhs`
    pub fn eq(lhs: LinTerm, rhs: LinTerm) -> Self {
        Self::atom(lhs.sub(&rhs), Rel::Eq)
    }

    pub fn and(parts: Vec<LinFormula>) -> Self {
        let mut out = Vec::new();
        for p in parts {
            match p {
                LinFormula::True => {}
                LinFormula::False => return LinFormula::False,
                LinFormula::And(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => LinFormula::True,
            1 => out.pop().unwrap(),
            _ => LinFormula::And(out),
        }
    }

    pub fn or(parts: Vec<LinFormula>) -> Self {
        let mut out = Vec::new();
        for p in parts {
            match p {
                LinFormula::False => {}
                LinFormula::True => return LinFormula::True,
                LinFormula::Or(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => LinFormula::False,
            1 => out.pop().unwrap(),
            _ => LinFormula::Or(out),
        }
    }

    pub fn not(f: LinFormula) -> Self {
        match f {
            LinFormula::True => LinFormula::False,
            LinFormula::False => LinFormula::True,
            LinFormula::Not(inner) => *inner,
            other => LinFormula::Not(Box::new(other)),
        }
    }

    pub fn implies(lhs: LinFormula, rhs: LinFormula) -> Self {
        Self::or(vec![Self::not(lhs), rhs])
    }

    pub fn iff(lhs: LinFormula, rhs: LinFormula) -> Self {
        Self::and(vec![
            Self::implies(lhs.clone(), rhs.clone()),
            Self::implies(rhs, lhs),
        ])
    }

    pub fn exists(var: &str, body: LinFormula) -> Self {
        LinFormula::Exists(var.to_string(), Box::new(body))
    }

    pub fn forall(var: &str, body: LinFormula) -> Self {
        LinFormula::Forall(var.to_string(), Box::new(body))
    }

    pub fn is_quantifier_free(&self) -> bool {
        match self {
            LinFormula::True | LinFormula::False | LinFormula::Atom(_) => true,
            LinFormula::And(ps) | LinFormula::Or(ps) => ps.iter().all(|p| p.is_quantifier_free()),
            LinFormula::Not(p) => p.is_quantifier_free(),
            LinFormula::Exists(..) | LinFormula::Forall(..) => false,
        }
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        fn walk(f: &LinFormula, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
            match f {
                LinFormula::True | LinFormula::False => {}
                LinFormula::Atom(a) => {
                    for v in a.term.vars() {
                        if !bound.contains(v) {
                            out.insert(v.clone());
                        }
                    }
                }
                LinFormula::And(ps) | LinFormula::Or(ps) => {
                    for p in ps {
                        walk(p, bound, out);
                    }
                }
                LinFormula::Not(p) => walk(p, bound, out),
                LinFormula::Exists(v, p) | LinFormula::Forall(v, p) => {
                    bound.push(v.clone());
                    walk(p, bound, out);
                    bound.pop();
                }
            }
        }
        let mut out = BTreeSet::new();
        walk(self, &mut Vec::new(), &mut out);
        out
    }

    /// Substitutes a term for a free variable.
    pub fn substitute(&self, var: &str, repl: &LinTerm) -> LinFormula {
        match self {
            LinFormula::True => LinFormula::True,
            LinFormula::False => LinFormula::False,
            LinFormula::Atom(a) => {
                LinFormula::atom(a.term.substitute(var, repl), a.rel)
            }
            LinFormula::And(ps) => {
                LinFormula::and(ps.iter().map(|p| p.substitute(var, repl)).collect())
            }
            LinFormula::Or(ps) => {
                LinFormula::or(ps.iter().map(|p| p.substitute(var, repl)).collect())
            }
            LinFormula::Not(p) => LinFormula::not(p.substitute(var, repl)),
            LinFormula::Exists(v, p) => {
                if v == var {
                    self.clone()
                } else {
                    LinFormula::exists(v, p.substitute(var, repl))
                }
            }
            LinFormula::Forall(v, p) => {
                if v == var {
                    self.clone()
                } else {
                    LinFormula::forall(v, p.substitute(var, repl))
                }
            }
        }
    }

    /// Evaluates a quantifier-free formula under a rational assignment.
    pub fn eval(&self, assignment: &BTreeMap<String, Rat>) -> Result<bool, LraError> {
        match self {
            LinFormula::True => Ok(true),
            LinFormula::False => Ok(false),
            LinFormula::Atom(a) => a.eval(assignment),
            LinFormula::And(ps) => {
                for p in ps {
                    if !p.eval(assignment)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            LinFormula::Or(ps) => {
                for p in ps {
                    if p.eval(assignment)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            LinFormula::Not(p) => Ok(!p.eval(assignment)?),
            LinFormula::Exists(..) | LinFormula::Forall(..) => Err(LraError::NotQuantifierFree),
        }
    }
}

// ---------------------------------------------------------------------------
// DNF machinery
// ---------------------------------------------------------------------------

/// Conjunction of atoms, sorted and deduplicated. The empty conjunct is true.
type Conjunct = Vec<Atom>;

/// Disjunction of conjuncts. The empty disjunction is false.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dnf(Vec<Conjunct>);

/// Sign possibilities of a term value allowed by a set of constraints.
#[derive(Clone, Copy, PartialEq, Eq)]
struct SignSet {
    neg: bool,
    zero: bool,
    pos: bool,
}

impl SignSet {
    const ALL: SignSet = SignSet {
        neg: true,
        zero: true,
        pos: true,
    };

    fn intersect(self, other: SignSet) -> SignSet {
        SignSet {
            neg: self.neg && other.neg,
            zero: self.zero && other.zero,
            pos: self.pos && other.pos,
        }
    }

    fn is_empty(self) -> bool {
        !(self.neg || self.zero || self.pos)
    }
}

/// Canonical key for a conjunct's term group: the primitive term with its
/// leading coefficient forced positive, plus whether we flipped the sign.
fn oriented(term: &LinTerm) -> (LinTerm, bool) {
    match term.coeffs.values().next() {
        Some(c) if c.is_negative() => (term.neg(), true),
        _ => (term.clone(), false),
    }
}

fn atom_sign_set(rel: Rel, flipped: bool) -> SignSet {
    // Constraint on the oriented term `t`: atom says (flipped ? -t : t) rel 0.
    match (rel, flipped) {
        (Rel::Lt, false) => SignSet {
            neg: true,
            zero: false,
            pos: false,
        },
        (Rel::Le, false) => SignSet {
            neg: true,
            zero: true,
            pos: false,
        },
        (Rel::Eq, _) => SignSet {
            neg: false,
            zero: true,
            pos: false,
        },
        (Rel::Lt, true) => SignSet {
            neg: false,
            zero: false,
            pos: true,
        },
        (Rel::Le, true) => SignSet {
            neg: false,
            zero: true,
            pos: true,
        },
    }
}

fn sign_set_atoms(term: LinTerm, s: SignSet) -> Option<Vec<Atom>> {
    Some(match (s.neg, s.zero, s.pos) {
        (true, true, true) => vec![],
        (true, false, false) => vec![Atom::new(term, Rel::Lt)],
        (true, true, false) => vec![Atom::new(term, Rel::Le)],
        (false, true, false) => vec![Atom::new(term, Rel::Eq)],
        (false, false, true) => vec![Atom::new(term.neg(), Rel::Lt)],
        (false, true, true) => vec![Atom::new(term.neg(), Rel::Le)],
        // `t != 0` and the empty set cannot be produced by intersecting
        // single-atom sign sets other than via contradiction.
        (true, false, true) => vec![],
        (false, false, false) => return None,
    })
}

/// Simplifies a conjunct: ground atoms are evaluated, constraints on the same
/// primitive term are merged, contradictions collapse to None.
fn prune_conjunct(atoms: Vec<Atom>) -> Option<Conjunct> {
    let mut groups: BTreeMap<LinTerm, SignSet> = BTreeMap::new();
    for a in atoms {
        match a.ground_value() {
            Some(true) => continue,
            Some(false) => return None,
            None => {}
        }
        let (key, flipped) = oriented(&a.term);
        let s = atom_sign_set(a.rel, flipped);
        let entry = groups.entry(key).or_insert(SignSet::ALL);
        *entry = entry.intersect(s);
        if entry.is_empty() {
            return None;
        }
    }
    let mut out = Vec::new();
    for (term, s) in groups {
        out.extend(sign_set_atoms(term, s)?);
    }
    out.sort();
    out.dedup();
    Some(out)
}

impl Dnf {
    pub fn truth(value: bool) -> Dnf {
        if value {
            Dnf(vec![vec![]])
        } else {
            Dnf(vec![])
        }
    }

    fn from_conjuncts(conjs: Vec<Conjunct>) -> Dnf {
        let mut pruned: Vec<Conjunct> = Vec::new();
        for c in conjs {
            if let Some(c) = prune_conjunct(c) {
                if c.is_empty() {
                    return Dnf::truth(true);
                }
                pruned.push(c);
            }
        }
        pruned.sort();
        pruned.dedup();
        // Drop conjuncts that are strict supersets of another conjunct:
        // the smaller conjunct is weaker and already implied.
        let keep: Vec<bool> = pruned
            .iter()
            .map(|c| {
                !pruned.iter().any(|other| {
                    other.len() < c.len() && other.iter().all(|a| c.binary_search(a).is_ok())
                })
            })
            .collect();
        Dnf(pruned
            .into_iter()
            .zip(keep)
            .filter_map(|(c, k)| k.then_some(c))
            .collect())
    }

    pub fn is_true(&self) -> bool {
        self.0.iter().any(|c| c.is_empty())
    }

    pub fn is_false(&self) -> bool {
        self.0.is_empty()
    }

    fn or(mut self, other: Dnf) -> Dnf {
        self.0.extend(other.0);
        Dnf::from_conjuncts(self.0)
    }

    fn and(self, other: &Dnf) -> Dnf {
        let mut out = Vec::with_capacity(self.0.len() * other.0.len());
        for a in &self.0 {
            for b in &other.0 {
                let mut c = a.clone();
                c.extend(b.iter().cloned());
                out.push(c);
            }
        }
        Dnf::from_conjuncts(out)
    }

    fn negate(&self) -> Dnf {
        let mut acc = Dnf::truth(true);
        for conj in &self.0 {
            // negation of a conjunct is a disjunction over negated atoms
            let clauses: Vec<Conjunct> = conj
                .iter()
                .flat_map(|a| a.negate())
                .map(|a| vec![a])
                .collect();
            acc = acc.and(&Dnf::from_conjuncts(clauses));
            if acc.is_false() {
                break;
            }
        }
        acc
    }

    pub fn to_formula(&self) -> LinFormula {
        LinFormula::or(
            self.0
                .iter()
                .map(|c| {
                    LinFormula::and(c.iter().map(|a| LinFormula::Atom(a.clone())).collect())
                })
                .collect(),
        )
    }
}

fn conjunct_first_var(c: &Conjunct) -> Option<String> {
    c.iter().flat_map(|a| a.term.vars()).next().cloned()
}

/// Satisfiability of a single conjunct over the rationals, by eliminating
/// its variables one at a time. Cheap: used for semantic simplification.
fn conjunct_unsat(c: &Conjunct) -> bool {
    let mut cur = match prune_conjunct(c.clone()) {
        None => return true,
        Some(x) => x,
    };
    while let Some(v) = conjunct_first_var(&cur) {
        cur = match prune_conjunct(fm_conjunct(&v, &cur)) {
            None => return true,
            Some(x) => x,
        };
    }
    false
}

/// Whether every solution of `c` satisfies `atom`.
fn conjunct_implies_atom(c: &Conjunct, atom: &Atom) -> bool {
    atom.negate().iter().all(|na| {
        let mut cc = c.clone();
        cc.push(na.clone());
        conjunct_unsat(&cc)
    })
}

fn conjunct_implies(c: &Conjunct, d: &Conjunct) -> bool {
    d.iter().all(|a| conjunct_implies_atom(c, a))
}

impl Dnf {
    /// Semantic simplification: drops unsatisfiable conjuncts, removes
    /// atoms implied by the rest of their conjunct, and drops conjuncts
    /// whose solutions are covered by another conjunct. Applied after each
    /// quantifier elimination to keep intermediate formulas small.
    pub fn simplify(&self) -> Dnf {
        let mut conjs: Vec<Conjunct> = Vec::new();
        for c in &self.0 {
            if conjunct_unsat(c) {
                continue;
            }
            let mut c = c.clone();
            let mut i = 0;
            while i < c.len() {
                let atom = c.remove(i);
                if conjunct_implies_atom(&c, &atom) {
                    continue; // redundant, stays removed
                }
                c.insert(i, atom);
                i += 1;
            }
            conjs.push(c);
        }
        let n = conjs.len();
        let mut kept = vec![true; n];
        for i in 0..n {
            if !kept[i] {
                continue;
            }
            for j in 0..n {
                if i == j || !kept[j] {
                    continue;
                }
                if conjunct_implies(&conjs[i], &conjs[j]) {
                    // if they are mutually implying, keep the earlier one
                    if j < i || !conjunct_implies(&conjs[j], &conjs[i]) {
                        kept[i] = false;
                        break;
                    }
                }
            }
        }
        Dnf::from_conjuncts(
            conjs
                .into_iter()
                .zip(kept)
                .filter_map(|(c, k)| k.then_some(c))
                .collect(),
        )
    }
}

/// Eliminates `var` from a single conjunct by Fourier-Motzkin.
fn fm_conjunct(var: &str, conj: &Conjunct) -> Conjunct {
    // Equality case: solve and substitute.
    if let Some(eq) = conj
        .iter()
        .find(|a| a.rel == Rel::Eq && !a.term.coeff(var).is_zero())
    {
        let c = eq.term.coeff(var);
        let mut rest = eq.term.clone();
        rest.coeffs.remove(var);
        let solution = rest.scale(&(-Rat::from_integer(1.into()) / c));
        return conj
            .iter()
            .filter(|a| *a != eq)
            .map(|a| Atom::new(a.term.substitute(var, &solution), a.rel))
            .collect();
    }

    let mut lowers: Vec<(LinTerm, bool)> = Vec::new(); // (bound, strict): bound <(=) var
    let mut uppers: Vec<(LinTerm, bool)> = Vec::new(); // var <(=) bound
    let mut rest: Conjunct = Vec::new();
    for a in conj {
        let c = a.term.coeff(var);
        if c.is_zero() {
            rest.push(a.clone());
            continue;
        }
        let mut bound = a.term.clone();
        bound.coeffs.remove(var);
        let bound = bound.scale(&(-Rat::from_integer(1.into()) / &c));
        let strict = a.rel == Rel::Lt;
        // c*var + t rel 0  <=>  var rel -t/c (flipped when c < 0)
        if c.is_positive() {
            uppers.push((bound, strict));
        } else {
            lowers.push((bound, strict));
        }
    }
    for (lo, lo_strict) in &lowers {
        for (hi, hi_strict) in &uppers {
            let rel = if *lo_strict || *hi_strict {
                Rel::Lt
            } else {
                Rel::Le
            };
            rest.push(Atom::new(lo.sub(hi), rel));
        }
    }
    rest
}

fn fm_eliminate(var: &str, dnf: &Dnf) -> Dnf {
    Dnf::from_conjuncts(dnf.0.iter().map(|c| fm_conjunct(var, c)).collect())
}

/// Recursively eliminates every quantifier, innermost first, producing an
/// equivalent quantifier-free DNF.
pub fn eliminate_all(f: &LinFormula) -> Dnf {
    match f {
        LinFormula::True => Dnf::truth(true),
        LinFormula::False => Dnf::truth(false),
        LinFormula::Atom(a) => match a.ground_value() {
            Some(v) => Dnf::truth(v),
            None => Dnf::from_conjuncts(vec![vec![a.clone()]]),
        },
        LinFormula::And(ps) => {
            let mut acc = Dnf::truth(true);
            for p in ps {
                acc = acc.and(&eliminate_all(p));
                if acc.is_false() {
                    break;
                }
            }
            acc
        }
        LinFormula::Or(ps) => {
            let mut acc = Dnf::truth(false);
            for p in ps {
                acc = acc.or(eliminate_all(p));
                if acc.is_true() {
                    break;
                }
            }
            acc
        }
        LinFormula::Not(p) => eliminate_all(p).simplify().negate().simplify(),
        LinFormula::Exists(v, p) => fm_eliminate(v, &eliminate_all(p)).simplify(),
        LinFormula::Forall(v, p) => {
            let negated_body = eliminate_all(p).simplify().negate().simplify();
            fm_eliminate(v, &negated_body).simplify().negate().simplify()
        }
    }
}

/// Removes one existential quantifier from a quantifier-free body.
pub fn eliminate_exists(var: &str, body: &LinFormula) -> Result<LinFormula, LraError> {
    if !body.is_quantifier_free() {
        return Err(LraError::NotQuantifierFree);
    }
    Ok(fm_eliminate(var, &eliminate_all(body)).to_formula())
}

/// Decides a sentence (formula with no free variables) over the rationals.
pub fn decide_sentence(f: &LinFormula) -> Result<bool, LraError> {
    let free = f.free_vars();
    if !free.is_empty() {
        return Err(LraError::FreeVariables(free.into_iter().collect()));
    }
    let dnf = eliminate_all(f);
    Ok(!dnf.is_false())
}

// ---------------------------------------------------------------------------
// One-variable solution sets
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Bound {
    NegInf,
    Fin(Rat),
    PosInf,
}

/// Computes `{q : f(q)}` as a canonical semilinear set. Errors if `f` has
/// free variables besides `var` or if the solution set is unbounded.
pub fn solution_set_1d(f: &LinFormula, var: &str) -> Result<SemilinearSet, LraError> {
    let mut free = f.free_vars();
    free.remove(var);
    if !free.is_empty() {
        return Err(LraError::FreeVariables(free.into_iter().collect()));
    }
    let dnf = eliminate_all(f);
    if dnf.is_true() {
        return Err(LraError::Unbounded);
    }
    let mut components: Vec<SetComponent> = Vec::new();
    for conj in &dnf.0 {
        // Each conjunct constrains the single variable: intersect bounds.
        let mut lo = Bound::NegInf;
        let mut lo_strict = true;
        let mut hi = Bound::PosInf;
        let mut hi_strict = true;
        let mut point: Option<Rat> = None;
        let mut empty = false;
        for a in conj {
            let c = a.term.coeff(var);
            debug_assert!(!c.is_zero(), "ground atoms are pruned");
            let b = -a.term.constant_part() / &c;
            match (a.rel, c.is_positive()) {
                (Rel::Eq, _) => match &point {
                    Some(p) if *p != b => empty = true,
                    _ => point = Some(b),
                },
                (rel, true) => {
                    // var rel b (upper bound)
                    let strict = rel == Rel::Lt;
                    let tighter = match &hi {
                        Bound::PosInf => true,
                        Bound::Fin(h) => b < *h || (b == *h && strict && !hi_strict),
                        Bound::NegInf => false,
                    };
                    if tighter {
                        hi = Bound::Fin(b);
                        hi_strict = strict;
                    }
                }
                (rel, false) => {
                    // b rel var (lower bound)
                    let strict = rel == Rel::Lt;
                    let tighter = match &lo {
                        Bound::NegInf => true,
                        Bound::Fin(l) => b > *l || (b == *l && strict && !lo_strict),
                        Bound::PosInf => false,
                    };
                    if tighter {
                        lo = Bound::Fin(b);
                        lo_strict = strict;
                    }
                }
            }
        }
        if empty {
            continue;
        }
        if let Some(p) = point {
            let lo_ok = match &lo {
                Bound::NegInf => true,
                Bound::Fin(l) => if lo_strict { *l < p } else { *l <= p },
                Bound::PosInf => false,
            };
            let hi_ok = match &hi {
                Bound::PosInf => true,
                Bound::Fin(h) => if hi_strict { p < *h } else { p <= *h },
                Bound::NegInf => false,
            };
            if lo_ok && hi_ok {
                components.push(SetComponent::Point(p));
            }
            continue;
        }
        match (&lo, &hi) {
            (Bound::Fin(l), Bound::Fin(h)) => {
                if l < h {
                    components.push(SetComponent::Open(l.clone(), h.clone()));
                    if !lo_strict {
                        components.push(SetComponent::Point(l.clone()));
                    }
                    if !hi_strict {
                        components.push(SetComponent::Point(h.clone()));
                    }
                } else if l == h && !lo_strict && !hi_strict {
                    components.push(SetComponent::Point(l.clone()));
                }
            }
            _ => return Err(LraError::Unbounded),
        }
    }
    Ok(SemilinearSet::canonicalize(components))
}

// ---------------------------------------------------------------------------
// S-expression round trip (debug textual form, used by test fixtures)
// ---------------------------------------------------------------------------

pub fn to_sexpr(f: &LinFormula) -> String {
    fn term_sexpr(t: &LinTerm) -> String {
        let mut parts: Vec<String> = t
            .coeffs
            .iter()
            .map(|(v, c)| format!("(* {} {})", fmt_rat(c), v))
            .collect();
        if !t.constant.is_zero() || parts.is_empty() {
            parts.push(fmt_rat(&t.constant));
        }
        if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            format!("(+ {})", parts.join(" "))
        }
    }
    match f {
        LinFormula::True => "true".into(),
        LinFormula::False => "false".into(),
        LinFormula::Atom(a) => {
            let op = match a.rel {
                Rel::Lt => "<",
                Rel::Le => "<=",
                Rel::Eq => "=",
            };
            format!("({} {} 0)", op, term_sexpr(&a.term))
        }
        LinFormula::And(ps) => format!(
            "(and {})",
            ps.iter().map(to_sexpr).collect::<Vec<_>>().join(" ")
        ),
        LinFormula::Or(ps) => format!(
            "(or {})",
            ps.iter().map(to_sexpr).collect::<Vec<_>>().join(" ")
        ),
        LinFormula::Not(p) => format!("(not {})", to_sexpr(p)),
        LinFormula::Exists(v, p) => format!("(exists {} {})", v, to_sexpr(p)),
        LinFormula::Forall(v, p) => format!("(forall {} {})", v, to_sexpr(p)),
    }
}

pub fn from_sexpr(text: &str) -> Result<LinFormula, LraError> {
    #[derive(Debug)]
    enum SExpr {
        Sym(String),
        List(Vec<SExpr>),
    }

    fn tokenize(s: &str) -> Vec<String> {
        s.replace('(', " ( ")
            .replace(')', " ) ")
            .split_whitespace()
            .map(|t| t.to_string())
            .collect()
    }

    fn parse(tokens: &[String], pos: &mut usize) -> Result<SExpr, LraError> {
        if *pos >= tokens.len() {
            return Err(LraError::Parse("unexpected end of input".into()));
        }
        let t = &tokens[*pos];
        *pos += 1;
        if t == "(" {
            let mut items = Vec::new();
            while *pos < tokens.len() && tokens[*pos] != ")" {
                items.push(parse(tokens, pos)?);
            }
            if *pos >= tokens.len() {
                return Err(LraError::Parse("missing closing paren".into()));
            }
            *pos += 1;
            Ok(SExpr::List(items))
        } else if t == ")" {
            Err(LraError::Parse("unexpected )".into()))
        } else {
            Ok(SExpr::Sym(t.clone()))
        }
    }

    fn term_of(e: &SExpr) -> Result<LinTerm, LraError> {
        match e {
            SExpr::Sym(s) => {
                if let Some(r) = parse_rat(s) {
                    Ok(LinTerm::constant(r))
                } else {
                    Ok(LinTerm::var(s))
                }
            }
            SExpr::List(items) => {
                let head = match items.first() {
                    Some(SExpr::Sym(s)) => s.as_str(),
                    _ => return Err(LraError::Parse("bad term".into())),
                };
                match head {
                    "+" => {
                        let mut t = LinTerm::constant(rzero());
                        for item in &items[1..] {
                            t = t.add(&term_of(item)?);
                        }
                        Ok(t)
                    }
                    "*" => {
                        if items.len() != 3 {
                            return Err(LraError::Parse("(* k x) expected".into()));
                        }
                        let k = match &items[1] {
                            SExpr::Sym(s) => parse_rat(s)
                                .ok_or_else(|| LraError::Parse("bad coefficient".into()))?,
                            _ => return Err(LraError::Parse("bad coefficient".into())),
                        };
                        Ok(term_of(&items[2])?.scale(&k))
                    }
                    _ => Err(LraError::Parse(format!("unknown term head {head}"))),
                }
            }
        }
    }

    fn formula_of(e: &SExpr) -> Result<LinFormula, LraError> {
        match e {
            SExpr::Sym(s) if s == "true" => Ok(LinFormula::True),
            SExpr::Sym(s) if s == "false" => Ok(LinFormula::False),
            SExpr::Sym(s) => Err(LraError::Parse(format!("unexpected symbol {s}"))),
            SExpr::List(items) => {
                let head = match items.first() {
                    Some(SExpr::Sym(s)) => s.as_str(),
                    _ => return Err(LraError::Parse("bad formula".into())),
                };
                match head {
                    "<" | "<=" | "=" => {
                        if items.len() != 3 {
                            return Err(LraError::Parse("atom arity".into()));
                        }
                        let t = term_of(&items[1])?;
                        let rel = match head {
                            "<" => Rel::Lt,
                            "<=" => Rel::Le,
                            _ => Rel::Eq,
                        };
                        Ok(LinFormula::atom(t, rel))
                    }
                    "and" => Ok(LinFormula::and(
                        items[1..]
                            .iter()
                            .map(formula_of)
                            .collect::<Result<_, _>>()?,
                    )),
                    "or" => Ok(LinFormula::or(
                        items[1..]
                            .iter()
                            .map(formula_of)
                            .collect::<Result<_, _>>()?,
                    )),
                    "not" => {
                        if items.len() != 2 {
                            return Err(LraError::Parse("not arity".into()));
                        }
                        Ok(LinFormula::not(formula_of(&items[1])?))
                    }
                    "exists" | "forall" => {
                        if items.len() != 3 {
                            return Err(LraError::Parse("quantifier arity".into()));
                        }
                        let v = match &items[1] {
                            SExpr::Sym(s) => s.clone(),
                            _ => return Err(LraError::Parse("bad binder".into())),
                        };
                        let body = formula_of(&items[2])?;
                        Ok(if head == "exists" {
                            LinFormula::Exists(v, Box::new(body))
                        } else {
                            LinFormula::Forall(v, Box::new(body))
                        })
                    }
                    _ => Err(LraError::Parse(format!("unknown head {head}"))),
                }
            }
        }
    }

    let tokens = tokenize(text);
    let mut pos = 0;
    let e = parse(&tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err(LraError::Parse("trailing tokens".into()));
    }
    formula_of(&e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::{rat, rint};

    fn v(name: &str) -> LinTerm {
        LinTerm::var(name)
    }

    fn c(n: i64) -> LinTerm {
        LinTerm::constant(rint(n))
    }

    #[test]
    fn exists_interval_nonempty() {
        // exists x (x > a && x < b)  ->  a < b
        let body = LinFormula::and(vec![
            LinFormula::lt(v("a"), v("x")),
            LinFormula::lt(v("x"), v("b")),
        ]);
        let out = eliminate_exists("x", &body).unwrap();
        let expected = LinFormula::lt(v("a"), v("b"));
        // compare via double implication decided over all (a, b)
        let equiv = LinFormula::forall(
            "a",
            LinFormula::forall("b", LinFormula::iff(out, expected)),
        );
        assert!(decide_sentence(&equiv).unwrap());
    }

    #[test]
    fn exists_substitution_case() {
        // exists x (x = a && x <= b)  ->  a <= b
        let body = LinFormula::and(vec![
            LinFormula::eq(v("x"), v("a")),
            LinFormula::le(v("x"), v("b")),
        ]);
        let out = eliminate_exists("x", &body).unwrap();
        let expected = LinFormula::le(v("a"), v("b"));
        let equiv = LinFormula::forall(
            "a",
            LinFormula::forall("b", LinFormula::iff(out, expected)),
        );
        assert!(decide_sentence(&equiv).unwrap());
    }

    #[test]
    fn decide_trivial_sentences() {
        // forall a exists eps (eps > 0 && eps < a || a <= 0)
        let f = LinFormula::forall(
            "a",
            LinFormula::exists(
                "eps",
                LinFormula::or(vec![
                    LinFormula::and(vec![
                        LinFormula::lt(c(0), v("eps")),
                        LinFormula::lt(v("eps"), v("a")),
                    ]),
                    LinFormula::le(v("a"), c(0)),
                ]),
            ),
        );
        assert!(decide_sentence(&f).unwrap());

        let g = LinFormula::exists(
            "x",
            LinFormula::and(vec![
                LinFormula::lt(v("x"), c(0)),
                LinFormula::lt(c(1), v("x")),
            ]),
        );
        assert!(!decide_sentence(&g).unwrap());
    }

    #[test]
    fn decide_negation_involution() {
        let samples = vec![
            LinFormula::forall("x", LinFormula::exists("y", LinFormula::lt(v("x"), v("y")))),
            LinFormula::exists(
                "x",
                LinFormula::and(vec![
                    LinFormula::lt(c(0), v("x")),
                    LinFormula::lt(v("x"), c(0)),
                ]),
            ),
            LinFormula::forall("x", LinFormula::le(v("x"), v("x"))),
        ];
        for f in samples {
            let lhs = decide_sentence(&LinFormula::not(f.clone())).unwrap();
            let rhs = !decide_sentence(&f).unwrap();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn solution_set_basic() {
        // (x > 0 && x < 1) || x = 3
        let f = LinFormula::or(vec![
            LinFormula::and(vec![
                LinFormula::lt(c(0), v("x")),
                LinFormula::lt(v("x"), c(1)),
            ]),
            LinFormula::eq(v("x"), c(3)),
        ]);
        let s = solution_set_1d(&f, "x").unwrap();
        assert_eq!(s.render(), "(0,1) ∪ {3}");
    }

    #[test]
    fn solution_set_empty() {
        // exists y (y > x && y < x)
        let f = LinFormula::exists(
            "y",
            LinFormula::and(vec![
                LinFormula::lt(v("x"), v("y")),
                LinFormula::lt(v("y"), v("x")),
            ]),
        );
        let s = solution_set_1d(&f, "x").unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn solution_set_half_closed() {
        // (3/8 < x && x <= 1/2) || (19/8 <= x && x < 5/2)
        let f = LinFormula::or(vec![
            LinFormula::and(vec![
                LinFormula::lt(LinTerm::constant(rat(3, 8)), v("x")),
                LinFormula::le(v("x"), LinTerm::constant(rat(1, 2))),
            ]),
            LinFormula::and(vec![
                LinFormula::le(LinTerm::constant(rat(19, 8)), v("x")),
                LinFormula::lt(v("x"), LinTerm::constant(rat(5, 2))),
            ]),
        ]);
        let s = solution_set_1d(&f, "x").unwrap();
        assert_eq!(s.render(), "(3/8,1/2] ∪ [19/8,5/2)");
    }

    #[test]
    fn solution_set_rejects_extra_vars() {
        let f = LinFormula::lt(v("x"), v("y"));
        assert!(matches!(
            solution_set_1d(&f, "x"),
            Err(LraError::FreeVariables(_))
        ));
    }

    #[test]
    fn sexpr_round_trip() {
        let f = LinFormula::forall(
            "a",
            LinFormula::exists(
                "eps",
                LinFormula::or(vec![
                    LinFormula::and(vec![
                        LinFormula::lt(c(0), v("eps")),
                        LinFormula::lt(v("eps"), v("a").add(&LinTerm::constant(rat(1, 2)))),
                    ]),
                    LinFormula::not(LinFormula::le(c(0), v("a"))),
                ]),
            ),
        );
        let text = to_sexpr(&f);
        let back = from_sexpr(&text).unwrap();
        assert_eq!(to_sexpr(&back), text);
        // and semantic equality
        assert_eq!(decide_sentence(&back).unwrap(), decide_sentence(&f).unwrap());
    }
}
