//! Canonical algebra of semilinear subsets of the rational line, plus the
//! affine expressions and interval pieces used by neighborhood templates.

use std::fmt;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::rat::{fmt_rat, parse_rat, rzero, Rat};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GeomError {
    #[error("degenerate interval: lo >= hi ({0} >= {1})")]
    DegenerateInterval(String, String),
    #[error("operation requires a bounded set")]
    Unbounded,
    #[error("parse error in set text: {0}")]
    Parse(String),
}

/// One canonical component: an isolated rational point or a bounded open
/// interval. Half-closed and closed intervals are represented as an open
/// interval plus adjacent `Point` components.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SetComponent {
    Point(Rat),
    Open(Rat, Rat),
}

impl SetComponent {
    fn lo(&self) -> &Rat {
        match self {
            SetComponent::Point(p) => p,
            SetComponent::Open(a, _) => a,
        }
    }
}

/// Canonical finite union of disjoint points and open intervals, sorted by
/// position. Equality of canonical values is set equality.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SemilinearSet {
    components: Vec<SetComponent>,
}

impl SemilinearSet {
    pub fn empty() -> Self {
        SemilinearSet::default()
    }

    pub fn point(p: Rat) -> Self {
        SemilinearSet::canonicalize(vec![SetComponent::Point(p)])
    }

    pub fn open(lo: Rat, hi: Rat) -> Self {
        SemilinearSet::canonicalize(vec![SetComponent::Open(lo, hi)])
    }

    pub fn closed(lo: Rat, hi: Rat) -> Self {
        SemilinearSet::canonicalize(vec![
            SetComponent::Point(lo.clone()),
            SetComponent::Open(lo, hi.clone()),
            SetComponent::Point(hi),
        ])
    }

    /// Canonicalizes an arbitrary list of components: merges overlapping
    /// intervals, fills junctions covered by points, drops interior points.
    pub fn canonicalize(raw: Vec<SetComponent>) -> Self {
        let mut intervals: Vec<(Rat, Rat)> = Vec::new();
        let mut points: Vec<Rat> = Vec::new();
        for c in raw {
            match c {
                SetComponent::Point(p) => points.push(p),
                SetComponent::Open(a, b) => {
                    assert!(a < b, "open interval with lo >= hi");
                    intervals.push((a, b));
                }
            }
        }
        points.sort();
        points.dedup();
        intervals.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.cmp(&y.1)));

        // Merge intervals, allowing a point at a shared endpoint to fuse two
        // touching intervals into one.
        let mut merged: Vec<(Rat, Rat)> = Vec::new();
        for (a, b) in intervals {
            match merged.last_mut() {
                Some((_, chi)) if a < *chi => {
                    if b > *chi {
                        *chi = b;
                    }
                }
                Some((_, chi)) if a == *chi && points.binary_search(&a).is_ok() => {
                    if b > *chi {
                        *chi = b;
                    }
                }
                _ => merged.push((a, b)),
            }
        }
        // Keep only points not interior to a merged interval.
        let points: Vec<Rat> = points
            .into_iter()
            .filter(|p| {
                !merged
                    .iter()
                    .any(|(a, b)| a < p && p < b)
            })
            .collect();

        let mut components: Vec<SetComponent> = merged
            .into_iter()
            .map(|(a, b)| SetComponent::Open(a, b))
            .chain(points.into_iter().map(SetComponent::Point))
            .collect();
        components.sort_by(|x, y| {
            x.lo().cmp(y.lo()).then_with(|| match (x, y) {
                // a point at p sorts before an interval starting at p
                (SetComponent::Point(_), SetComponent::Open(..)) => std::cmp::Ordering::Less,
                (SetComponent::Open(..), SetComponent::Point(_)) => std::cmp::Ordering::Greater,
                _ => std::cmp::Ordering::Equal,
            })
        });
        SemilinearSet { components }
    }

    pub fn components(&self) -> &[SetComponent] {
        &self.components
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn contains(&self, q: &Rat) -> bool {
        self.components.iter().any(|c| match c {
            SetComponent::Point(p) => p == q,
            SetComponent::Open(a, b) => a < q && q < b,
        })
    }

    pub fn is_subset(&self, other: &SemilinearSet) -> bool {
        self.difference(other).is_empty()
    }

    /// Least and greatest elements of the affine closure (None when empty).
    pub fn bounds(&self) -> Option<(Rat, Rat)> {
        let mut lo: Option<Rat> = None;
        let mut hi: Option<Rat> = None;
        for c in &self.components {
            let (a, b) = match c {
                SetComponent::Point(p) => (p.clone(), p.clone()),
                SetComponent::Open(a, b) => (a.clone(), b.clone()),
            };
            lo = Some(match lo {
                None => a,
                Some(l) => l.min(a),
            });
            hi = Some(match hi {
                None => b,
                Some(h) => h.max(b),
            });
        }
        Some((lo?, hi?))
    }

    pub fn union(&self, other: &SemilinearSet) -> SemilinearSet {
        let mut all = self.components.clone();
        all.extend(other.components.iter().cloned());
        SemilinearSet::canonicalize(all)
    }

    pub fn intersection(&self, other: &SemilinearSet) -> SemilinearSet {
        let mut out = Vec::new();
        for x in &self.components {
            for y in &other.components {
                match (x, y) {
                    (SetComponent::Point(p), SetComponent::Point(q)) => {
                        if p == q {
                            out.push(SetComponent::Point(p.clone()));
                        }
                    }
                    (SetComponent::Point(p), SetComponent::Open(a, b))
                    | (SetComponent::Open(a, b), SetComponent::Point(p)) => {
                        if a < p && p < b {
                            out.push(SetComponent::Point(p.clone()));
                        }
                    }
                    (SetComponent::Open(a, b), SetComponent::Open(c, d)) => {
                        let lo = a.max(c).clone();
                        let hi = b.min(d).clone();
                        if lo < hi {
                            out.push(SetComponent::Open(lo, hi));
                        }
                    }
                }
            }
        }
        SemilinearSet::canonicalize(out)
    }

    pub fn difference(&self, other: &SemilinearSet) -> SemilinearSet {
        let mut pieces: Vec<SetComponent> = self.components.clone();
        for y in &other.components {
            let mut next: Vec<SetComponent> = Vec::new();
            for x in pieces {
                match (&x, y) {
                    (SetComponent::Point(p), SetComponent::Point(q)) => {
                        if p != q {
                            next.push(x);
                        }
                    }
                    (SetComponent::Point(p), SetComponent::Open(a, b)) => {
                        if !(a < p && p < b) {
                            next.push(x);
                        }
                    }
                    (SetComponent::Open(a, b), SetComponent::Point(q)) => {
                        if a < q && q < b {
                            next.push(SetComponent::Open(a.clone(), q.clone()));
                            next.push(SetComponent::Open(q.clone(), b.clone()));
                        } else {
                            next.push(x);
                        }
                    }
                    (SetComponent::Open(a, b), SetComponent::Open(c, d)) => {
                        if d <= a || b <= c {
                            next.push(x);
                        } else {
                            // overlap: keep (a,c), {c}, {d}, (d,b) as applicable
                            if a < c {
                                next.push(SetComponent::Open(a.clone(), c.clone()));
                            }
                            if a < c && c < b {
                                next.push(SetComponent::Point(c.clone()));
                            }
                            if a < d && d < b {
                                next.push(SetComponent::Point(d.clone()));
                                next.push(SetComponent::Open(d.clone(), b.clone()));
                            }
                        }
                    }
                }
            }
            pieces = next;
        }
        SemilinearSet::canonicalize(pieces)
    }

    /// Closure in the affine (order) topology: adds both endpoints of every
    /// interval component.
    pub fn affine_closure(&self) -> SemilinearSet {
        let mut out = self.components.clone();
        for c in &self.components {
            if let SetComponent::Open(a, b) = c {
                out.push(SetComponent::Point(a.clone()));
                out.push(SetComponent::Point(b.clone()));
            }
        }
        SemilinearSet::canonicalize(out)
    }

    /// Isolated rational points of the canonical form that are not endpoints
    /// of an adjacent interval (i.e. truly isolated in the affine sense).
    pub fn affine_isolated_points(&self) -> Vec<Rat> {
        self.components
            .iter()
            .filter_map(|c| match c {
                SetComponent::Point(p) => {
                    let adjacent = self.components.iter().any(|d| match d {
                        SetComponent::Open(a, b) => a == p || b == p,
                        _ => false,
                    });
                    (!adjacent).then(|| p.clone())
                }
                _ => None,
            })
            .collect()
    }

    /// Renders the canonical set using half-closed/closed interval sugar.
    pub fn render(&self) -> String {
        if self.components.is_empty() {
            return "∅".to_string();
        }
        let mut out: Vec<String> = Vec::new();
        let comps = &self.components;
        let mut i = 0;
        while i < comps.len() {
            match &comps[i] {
                SetComponent::Point(p) => {
                    // left-closed sugar: {p} immediately followed by (p, b)
                    if let Some(SetComponent::Open(a, b)) = comps.get(i + 1) {
                        if a == p {
                            let right_closed = matches!(
                                comps.get(i + 2),
                                Some(SetComponent::Point(q)) if q == b
                            );
                            if right_closed {
                                out.push(format!("[{},{}]", fmt_rat(p), fmt_rat(b)));
                                i += 3;
                            } else {
                                out.push(format!("[{},{})", fmt_rat(p), fmt_rat(b)));
                                i += 2;
                            }
                            continue;
                        }
                    }
                    out.push(format!("{{{}}}", fmt_rat(p)));
                    i += 1;
                }
                SetComponent::Open(a, b) => {
                    if let Some(SetComponent::Point(q)) = comps.get(i + 1) {
                        if q == b {
                            out.push(format!("({},{}]", fmt_rat(a), fmt_rat(b)));
                            i += 2;
                            continue;
                        }
                    }
                    out.push(format!("({},{})", fmt_rat(a), fmt_rat(b)));
                    i += 1;
                }
            }
        }
        out.join(" ∪ ")
    }

    /// Parses the textual rendering (including half-closed sugar) back into
    /// a canonical set.
    pub fn parse(text: &str) -> Result<SemilinearSet, GeomError> {
        let text = text.trim();
        if text.is_empty() || text == "∅" {
            return Ok(SemilinearSet::empty());
        }
        let mut components = Vec::new();
        for part in text.split('∪') {
            let part = part.trim();
            let bad = || GeomError::Parse(format!("bad component `{part}`"));
            if let Some(inner) = part.strip_prefix('{').and_then(|s| s.strip_suffix('}')) {
                components.push(SetComponent::Point(parse_rat(inner).ok_or_else(bad)?));
                continue;
            }
            let mut chars = part.chars();
            let open = chars.next().ok_or_else(bad)?;
            let close = part.chars().last().ok_or_else(bad)?;
            if !matches!(open, '(' | '[') || !matches!(close, ')' | ']') {
                return Err(bad());
            }
            let inner = &part[open.len_utf8()..part.len() - close.len_utf8()];
            let (lo_s, hi_s) = inner.split_once(',').ok_or_else(bad)?;
            let lo = parse_rat(lo_s).ok_or_else(bad)?;
            let hi = parse_rat(hi_s).ok_or_else(bad)?;
            if lo >= hi {
                return Err(GeomError::DegenerateInterval(fmt_rat(&lo), fmt_rat(&hi)));
            }
            if open == '[' {
                components.push(SetComponent::Point(lo.clone()));
            }
            if close == ']' {
                components.push(SetComponent::Point(hi.clone()));
            }
            components.push(SetComponent::Open(lo, hi));
        }
        Ok(SemilinearSet::canonicalize(components))
    }
}

impl fmt::Display for SemilinearSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl Serialize for SemilinearSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.render())
    }
}

impl<'de> Deserialize<'de> for SemilinearSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        SemilinearSet::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Affine expression `coef_a * a + coef_eps * eps + constant` in a cell's
/// generic variable and the scale variable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct AffineExpr {
    pub coef_a: Rat,
    pub coef_eps: Rat,
    pub constant: Rat,
}

impl AffineExpr {
    pub fn constant(c: Rat) -> Self {
        AffineExpr {
            coef_a: rzero(),
            coef_eps: rzero(),
            constant: c,
        }
    }

    pub fn eval(&self, a: &Rat, eps: &Rat) -> Rat {
        &self.coef_a * a + &self.coef_eps * eps + &self.constant
    }

    /// The expression with eps sent to 0 (symbolic limit endpoint).
    pub fn at_eps_zero(&self) -> AffineExpr {
        AffineExpr {
            coef_a: self.coef_a.clone(),
            coef_eps: rzero(),
            constant: self.constant.clone(),
        }
    }

    pub fn depends_on_eps(&self) -> bool {
        !self.coef_eps.is_zero()
    }

    pub fn render(&self, var: &str) -> String {
        let mut parts: Vec<String> = Vec::new();
        if !self.coef_a.is_zero() {
            if self.coef_a == Rat::from_integer(1.into()) {
                parts.push(var.to_string());
            } else if self.coef_a == -Rat::from_integer(1.into()) {
                parts.push(format!("-{var}"));
            } else {
                parts.push(format!("{}*{}", fmt_rat(&self.coef_a), var));
            }
        }
        if !self.coef_eps.is_zero() {
            let term = if self.coef_eps == Rat::from_integer(1.into()) {
                "eps".to_string()
            } else if self.coef_eps == -Rat::from_integer(1.into()) {
                "-eps".to_string()
            } else {
                format!("{}*eps", fmt_rat(&self.coef_eps))
            };
            parts.push(term);
        }
        if !self.constant.is_zero() || parts.is_empty() {
            parts.push(fmt_rat(&self.constant));
        }
        let mut out = String::new();
        for (i, p) in parts.iter().enumerate() {
            if i == 0 {
                out.push_str(p);
            } else if let Some(rest) = p.strip_prefix('-') {
                out.push_str(" - ");
                out.push_str(rest);
            } else {
                out.push_str(" + ");
                out.push_str(p);
            }
        }
        out
    }
}

/// One piece of a neighborhood template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IntervalPiece {
    Interval {
        lo: AffineExpr,
        hi: AffineExpr,
        left_closed: bool,
        right_closed: bool,
    },
    Singleton(AffineExpr),
}

/// Instantiates a template at concrete rational (a, eps). Errors if an
/// interval piece degenerates.
pub fn eval_template(
    pieces: &[IntervalPiece],
    a: &Rat,
    eps: &Rat,
) -> Result<SemilinearSet, GeomError> {
    let mut out = Vec::new();
    for p in pieces {
        match p {
            IntervalPiece::Singleton(at) => out.push(SetComponent::Point(at.eval(a, eps))),
            IntervalPiece::Interval {
                lo,
                hi,
                left_closed,
                right_closed,
            } => {
                let l = lo.eval(a, eps);
                let h = hi.eval(a, eps);
                if l >= h {
                    return Err(GeomError::DegenerateInterval(fmt_rat(&l), fmt_rat(&h)));
                }
                if *left_closed {
                    out.push(SetComponent::Point(l.clone()));
                }
                if *right_closed {
                    out.push(SetComponent::Point(h.clone()));
                }
                out.push(SetComponent::Open(l, h));
            }
        }
    }
    Ok(SemilinearSet::canonicalize(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::{rat, rint, rone};

    #[test]
    fn canonicalize_merges_across_filled_endpoint() {
        let s = SemilinearSet::canonicalize(vec![
            SetComponent::Open(rint(0), rint(1)),
            SetComponent::Open(rint(1), rint(2)),
            SetComponent::Point(rint(1)),
        ]);
        assert_eq!(s.render(), "(0,2)");
    }

    #[test]
    fn canonicalize_dedup_and_sort() {
        let s = SemilinearSet::canonicalize(vec![
            SetComponent::Point(rint(3)),
            SetComponent::Open(rint(0), rint(1)),
            SetComponent::Point(rint(3)),
        ]);
        assert_eq!(s.render(), "(0,1) ∪ {3}");
    }

    #[test]
    fn canonicalize_overlap_merge() {
        let s = SemilinearSet::canonicalize(vec![
            SetComponent::Open(rint(0), rat(1, 2)),
            SetComponent::Open(rat(1, 3), rint(1)),
        ]);
        assert_eq!(s.render(), "(0,1)");
    }

    #[test]
    fn combine_examples() {
        let a = SemilinearSet::open(rint(0), rint(2));
        let b = SemilinearSet::point(rint(1)).union(&SemilinearSet::open(rint(3), rint(4)));
        assert_eq!(a.intersection(&b).render(), "{1}");

        let c = SemilinearSet::open(rint(0), rint(1));
        let d = SemilinearSet::point(rat(1, 2));
        assert_eq!(c.difference(&d).render(), "(0,1/2) ∪ (1/2,1)");
    }

    #[test]
    fn affine_closure_examples() {
        assert_eq!(
            SemilinearSet::open(rint(0), rint(1)).affine_closure().render(),
            "[0,1]"
        );
        assert_eq!(SemilinearSet::point(rint(2)).affine_closure().render(), "{2}");
        let inst = SemilinearSet::canonicalize(vec![
            SetComponent::Open(rint(0), rat(1, 4)),
            SetComponent::Open(rat(7, 4), rat(9, 4)),
            SetComponent::Open(rat(15, 4), rint(4)),
        ]);
        assert_eq!(
            inst.affine_closure().render(),
            "[0,1/4] ∪ [7/4,9/4] ∪ [15/4,4]"
        );
    }

    #[test]
    fn render_round_trip_with_sugar() {
        for text in [
            "(0,1) ∪ {1} ∪ (3/2,2]",
            "(3/8,1/2] ∪ [19/8,5/2)",
            "[0,1]",
            "{5}",
            "∅",
        ] {
            let s = SemilinearSet::parse(text).unwrap();
            let t = SemilinearSet::parse(&s.render()).unwrap();
            assert_eq!(s, t);
        }
        // half-closed forms re-sugar exactly
        assert_eq!(
            SemilinearSet::parse("(3/8,1/2] ∪ [19/8,5/2)").unwrap().render(),
            "(3/8,1/2] ∪ [19/8,5/2)"
        );
    }

    #[test]
    fn eval_template_affine() {
        // (a - eps, a + eps) at a = 1/2, eps = 1/4
        let pieces = vec![IntervalPiece::Interval {
            lo: AffineExpr {
                coef_a: rone(),
                coef_eps: -rone(),
                constant: rzero(),
            },
            hi: AffineExpr {
                coef_a: rone(),
                coef_eps: rone(),
                constant: rzero(),
            },
            left_closed: false,
            right_closed: false,
        }];
        let s = eval_template(&pieces, &rat(1, 2), &rat(1, 4)).unwrap();
        assert_eq!(s.render(), "(1/4,3/4)");
    }

    #[test]
    fn eval_template_isolating_pattern() {
        // {a} ∪ (a+1, a+1+eps) ∪ (a+2-eps, a+2) at a=1/2, eps=1/8
        let e = |ca: i64, ce: i64, c: (i64, i64)| AffineExpr {
            coef_a: rint(ca),
            coef_eps: rint(ce),
            constant: rat(c.0, c.1),
        };
        let pieces = vec![
            IntervalPiece::Singleton(e(1, 0, (0, 1))),
            IntervalPiece::Interval {
                lo: e(1, 0, (1, 1)),
                hi: e(1, 1, (1, 1)),
                left_closed: false,
                right_closed: false,
            },
            IntervalPiece::Interval {
                lo: e(1, -1, (2, 1)),
                hi: e(1, 0, (2, 1)),
                left_closed: false,
                right_closed: false,
            },
        ];
        let s = eval_template(&pieces, &rat(1, 2), &rat(1, 8)).unwrap();
        assert_eq!(s.render(), "{1/2} ∪ (3/2,13/8) ∪ (19/8,5/2)");
    }

    #[test]
    fn eval_template_half_closed_pattern() {
        // (a - eps, a] ∪ (a+2-eps, a+2) at a=1/2, eps=1/8
        let e = |ca: i64, ce: i64, c: i64| AffineExpr {
            coef_a: rint(ca),
            coef_eps: rint(ce),
            constant: rint(c),
        };
        let pieces = vec![
            IntervalPiece::Interval {
                lo: e(1, -1, 0),
                hi: e(1, 0, 0),
                left_closed: false,
                right_closed: true,
            },
            IntervalPiece::Interval {
                lo: e(1, -1, 2),
                hi: e(1, 0, 2),
                left_closed: false,
                right_closed: false,
            },
        ];
        let s = eval_template(&pieces, &rat(1, 2), &rat(1, 8)).unwrap();
        assert_eq!(s.render(), "(3/8,1/2] ∪ (19/8,5/2)");
    }

    #[test]
    fn set_operations_against_membership() {
        let a = SemilinearSet::parse("(0,1) ∪ {3/2} ∪ (2,3]").unwrap();
        let b = SemilinearSet::parse("[1/2,5/2)").unwrap();
        let u = a.union(&b);
        let i = a.intersection(&b);
        let d = a.difference(&b);
        let mut q = rat(-1, 1);
        let step = rat(1, 16);
        while q <= rat(7, 2) {
            let ia = a.contains(&q);
            let ib = b.contains(&q);
            assert_eq!(u.contains(&q), ia || ib, "union at {}", fmt_rat(&q));
            assert_eq!(i.contains(&q), ia && ib, "intersection at {}", fmt_rat(&q));
            assert_eq!(d.contains(&q), ia && !ib, "difference at {}", fmt_rat(&q));
            q += &step;
        }
    }
}
