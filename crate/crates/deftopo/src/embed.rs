//! Explicit piecewise-linear embeddings into rational three-space for
//! affinizable topologies: normalization (moving every special point to an
//! affine-isolated position), deterministic curve layout with anchor
//! attachments, and an exact sample-based homeomorphism certificate.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{Signed, ToPrimitive, Zero};
use serde_json::json;

use crate::decide::{has_ray, ExceptionalSets, RayReport, RaySide};
use crate::dsl::{Cell, CellKind, NbhdTemplate, TopologySpec};
use crate::geom::{AffineExpr, IntervalPiece, SemilinearSet, SetComponent};
use crate::rat::{fmt_rat, midpoint, parse_rat, pow2_neg, rint, rzero, Rat};
use crate::shadow::{classify, shadow_map, PointClass, Region, ShadowError};

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("spec must be validated first")]
    NotValidated,
    #[error("not affinizable: {0}")]
    NotAffinizable(String),
    #[error("normalization failed: {0}")]
    NormalizationFailed(String),
    #[error("attachment conflict: {0}")]
    AttachmentConflict(String),
    #[error("anchor hosts too many attachments: {0}")]
    TooManyAttachments(String),
    #[error("curve layout self-intersects: {0}")]
    SelfIntersecting(String),
    #[error("ray report mismatch: {0}")]
    RayMismatch(String),
    #[error("verification failure at point {point}, scale {eps}, direction ({direction})")]
    Verify {
        point: String,
        eps: String,
        direction: String,
    },
    #[error("{0}")]
    Shadow(#[from] ShadowError),
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// One piece of the normalization bijection: an interval of the source
/// space translated rigidly, or a special point sent to a fresh isolated
/// position.
#[derive(Debug, Clone)]
pub enum PieceMap {
    Interval {
        src_lo: Rat,
        src_hi: Rat,
        shift: Rat,
        cell: usize,
    },
    Point {
        src: Rat,
        image: Rat,
        cell: usize,
    },
}

/// A validated spec on the rearranged space, together with the bijection.
#[derive(Debug)]
pub struct NormalizedSpec {
    pub spec: TopologySpec,
    pub pieces: Vec<PieceMap>,
}

impl NormalizedSpec {
    pub fn forward_point(&self, x: &Rat) -> Option<Rat> {
        self.pieces.iter().find_map(|p| match p {
            PieceMap::Interval {
                src_lo,
                src_hi,
                shift,
                ..
            } if src_lo < x && x < src_hi => Some(x + shift),
            PieceMap::Point { src, image, .. } if src == x => Some(image.clone()),
            _ => None,
        })
    }

    pub fn inverse_point(&self, y: &Rat) -> Option<Rat> {
        self.pieces.iter().find_map(|p| match p {
            PieceMap::Interval {
                src_lo,
                src_hi,
                shift,
                ..
            } if &(src_lo + shift) < y && y < &(src_hi + shift) => Some(y - shift),
            PieceMap::Point { src, image, .. } if image == y => Some(src.clone()),
            _ => None,
        })
    }

    /// Transports a subset of the source space through the bijection.
    pub fn forward_set(&self, s: &SemilinearSet) -> SemilinearSet {
        let mut out = Vec::new();
        for comp in s.components() {
            match comp {
                SetComponent::Point(p) => {
                    if let Some(img) = self.forward_point(p) {
                        out.push(SetComponent::Point(img));
                    }
                }
                SetComponent::Open(x, y) => {
                    for piece in &self.pieces {
                        match piece {
                            PieceMap::Interval {
                                src_lo,
                                src_hi,
                                shift,
                                ..
                            } => {
                                let lo = if x > src_lo { x.clone() } else { src_lo.clone() };
                                let hi = if y < src_hi { y.clone() } else { src_hi.clone() };
                                if lo < hi {
                                    out.push(SetComponent::Open(&lo + shift, &hi + shift));
                                }
                            }
                            PieceMap::Point { src, image, .. } => {
                                if x < src && src < y {
                                    out.push(SetComponent::Point(image.clone()));
                                }
                            }
                        }
                    }
                }
            }
        }
        SemilinearSet::canonicalize(out)
    }
}

/// Moves every special point of the topology (locally isolated points and
/// points with a non-affine basis) to an affine-isolated position, carrying
/// the templates along; the result must re-validate.
pub fn normalize_isolate(
    spec: &TopologySpec,
    exceptional: &ExceptionalSets,
) -> Result<NormalizedSpec, EmbedError> {
    spec.require_validated().map_err(|_| EmbedError::NotValidated)?;
    if !exceptional.e_finite() {
        return Err(EmbedError::NotAffinizable(format!(
            "E = {} is infinite",
            exceptional.e.render()
        )));
    }

    // H: the points that must become affine-isolated
    let mut h: BTreeSet<Rat> = BTreeSet::new();
    for comp in exceptional.a.components() {
        match comp {
            SetComponent::Point(p) => {
                h.insert(p.clone());
            }
            SetComponent::Open(lo, hi) => {
                return Err(EmbedError::NotAffinizable(format!(
                    "A contains the interval ({},{})",
                    fmt_rat(lo),
                    fmt_rat(hi)
                )));
            }
        }
    }
    let map = shadow_map(spec)?;
    for (region, class) in classify(spec, &map) {
        if class == PointClass::LocallyIsolated {
            match region {
                Region::Special { at, .. } => {
                    h.insert(at);
                }
                Region::Subcell { lo, hi, .. } => {
                    return Err(EmbedError::NotAffinizable(format!(
                        "interval ({},{}) of locally isolated points",
                        fmt_rat(&lo),
                        fmt_rat(&hi)
                    )));
                }
            }
        }
    }
    // every affine-isolated source point needs an image slot regardless
    for comp in spec.space.components() {
        if let SetComponent::Point(p) = comp {
            h.insert(p.clone());
        }
    }

    // source interval pieces: space intervals split at interior H points
    let mut src_intervals: Vec<(Rat, Rat)> = Vec::new();
    for comp in spec.space.components() {
        if let SetComponent::Open(a, b) = comp {
            let mut lo = a.clone();
            for p in h.iter().filter(|p| *p > a && *p < b) {
                src_intervals.push((lo.clone(), p.clone()));
                lo = p.clone();
            }
            src_intervals.push((lo, b.clone()));
        }
    }

    // layout: intervals shifted into disjoint slots with unit gaps, then
    // the isolated images spaced beyond them
    let mut pieces: Vec<PieceMap> = Vec::new();
    let mut cursor = rzero();
    for (lo, hi) in &src_intervals {
        pieces.push(PieceMap::Interval {
            src_lo: lo.clone(),
            src_hi: hi.clone(),
            shift: &cursor - lo,
            cell: usize::MAX,
        });
        cursor = &cursor + &(hi - lo) + rint(1);
    }
    for (i, p) in h.iter().enumerate() {
        pieces.push(PieceMap::Point {
            src: p.clone(),
            image: &cursor + rint(i as i64),
            cell: usize::MAX,
        });
    }
    for (i, piece) in pieces.iter_mut().enumerate() {
        match piece {
            PieceMap::Interval { cell, .. } | PieceMap::Point { cell, .. } => *cell = i,
        }
    }

    // transported cells and templates
    let mut cells = Vec::new();
    let mut templates = Vec::new();
    for piece in &pieces {
        let (owner_idx, a0, owner_shift) = match piece {
            PieceMap::Interval {
                src_lo,
                src_hi,
                shift,
                ..
            } => {
                let a0 = midpoint(src_lo, src_hi);
                let owner = spec.cell_of(&a0).ok_or_else(|| {
                    EmbedError::NormalizationFailed(format!(
                        "no cell contains {}",
                        fmt_rat(&a0)
                    ))
                })?;
                (owner, a0, Some(shift.clone()))
            }
            PieceMap::Point { src, .. } => {
                let owner = spec.cell_of(src).ok_or_else(|| {
                    EmbedError::NormalizationFailed(format!("no cell contains {}", fmt_rat(src)))
                })?;
                (owner, src.clone(), None)
            }
        };
        let tpl = transport_template(spec, &pieces, owner_idx, &a0, owner_shift.as_ref())?;
        let kind = match piece {
            PieceMap::Interval {
                src_lo,
                src_hi,
                shift,
                ..
            } => CellKind::OpenCell(src_lo + shift, src_hi + shift),
            PieceMap::Point { image, .. } => CellKind::IsolPoint(image.clone()),
        };
        cells.push(Cell {
            kind,
            var_name: spec.cells[owner_idx].var_name.clone(),
        });
        templates.push(tpl);
    }

    let space = SemilinearSet::canonicalize(
        cells
            .iter()
            .map(|c| match &c.kind {
                CellKind::IsolPoint(q) => SetComponent::Point(q.clone()),
                CellKind::OpenCell(a, b) => SetComponent::Open(a.clone(), b.clone()),
            })
            .collect(),
    );
    let mut nspec = TopologySpec::assemble(space, cells, templates);
    let report = nspec.validate();
    if !report.ok {
        return Err(EmbedError::NormalizationFailed(format!(
            "rearranged spec fails validation: {:?}",
            report.failures
        )));
    }
    Ok(NormalizedSpec { spec: nspec, pieces })
}

/// Transports one endpoint expression through the bijection. For interval
/// owners the parameter shifts with the owner (`a' = a + s_c`); for point
/// owners the parameter is folded into the constant.
fn transport_expr(
    e: &AffineExpr,
    owner_shift: Option<&Rat>,
    a0: &Rat,
    target_shift: &Rat,
) -> AffineExpr {
    match owner_shift {
        Some(sc) => AffineExpr {
            coef_a: e.coef_a.clone(),
            coef_eps: e.coef_eps.clone(),
            constant: &e.constant + target_shift - &(&e.coef_a * sc),
        },
        None => AffineExpr {
            coef_a: rzero(),
            coef_eps: e.coef_eps.clone(),
            constant: &e.constant + &(&e.coef_a * a0) + target_shift,
        },
    }
}

fn transport_template(
    spec: &TopologySpec,
    pieces: &[PieceMap],
    owner_idx: usize,
    a0: &Rat,
    owner_shift: Option<&Rat>,
) -> Result<NbhdTemplate, EmbedError> {
    let eps_big = spec.valid_eps(a0, 16).ok_or_else(|| {
        EmbedError::NormalizationFailed(format!("no valid scale at {}", fmt_rat(a0)))
    })?;
    // a smaller scale keeps the sampled layout generic; validity is
    // preserved under shrinking by monotonicity
    let eps0 = eps_big / rint(16);

    let mut out = Vec::new();
    for p in &spec.templates[owner_idx].pieces {
        match p {
            IntervalPiece::Singleton(at) => {
                let v = at.eval(a0, &eps0);
                let target = pieces.iter().find(|t| match t {
                    PieceMap::Point { src, .. } => src == &v,
                    PieceMap::Interval { src_lo, src_hi, .. } => src_lo < &v && &v < src_hi,
                });
                match target {
                    Some(PieceMap::Point { src, image, .. }) => {
                        if at.depends_on_eps() || (!at.coef_a.is_zero() && owner_shift.is_some()) {
                            // a moving singleton cannot pin a relocated point
                            if &at.eval(a0, &rzero()) != src {
                                return Err(EmbedError::NormalizationFailed(
                                    "singleton piece slides across a relocated point".into(),
                                ));
                            }
                        }
                        out.push(IntervalPiece::Singleton(AffineExpr::constant(image.clone())));
                    }
                    Some(PieceMap::Interval { src_lo, shift, .. }) => {
                        let _ = src_lo;
                        out.push(IntervalPiece::Singleton(transport_expr(
                            at,
                            owner_shift,
                            a0,
                            shift,
                        )));
                    }
                    None => {
                        return Err(EmbedError::NormalizationFailed(format!(
                            "singleton piece value {} is outside the space",
                            fmt_rat(&v)
                        )))
                    }
                }
            }
            IntervalPiece::Interval {
                lo,
                hi,
                left_closed,
                right_closed,
            } => {
                let l0 = lo.eval(a0, &eps0);
                let h0 = hi.eval(a0, &eps0);
                let holds = |q: &Rat| {
                    (&l0 < q && q < &h0)
                        || (*left_closed && q == &l0)
                        || (*right_closed && q == &h0)
                };
                for target in pieces {
                    match target {
                        PieceMap::Point { src, image, .. } if holds(src) => {
                            out.push(IntervalPiece::Singleton(AffineExpr::constant(
                                image.clone(),
                            )));
                        }
                        PieceMap::Interval {
                            src_lo,
                            src_hi,
                            shift,
                            ..
                        } if &l0 < src_hi && src_lo < &h0 => {
                            let (lo_e, lc) = if &l0 > src_lo {
                                (transport_expr(lo, owner_shift, a0, shift), *left_closed)
                            } else {
                                (AffineExpr::constant(src_lo + shift), false)
                            };
                            let (hi_e, rc) = if &h0 < src_hi {
                                (transport_expr(hi, owner_shift, a0, shift), *right_closed)
                            } else {
                                (AffineExpr::constant(src_hi + shift), false)
                            };
                            out.push(IntervalPiece::Interval {
                                lo: lo_e,
                                hi: hi_e,
                                left_closed: lc,
                                right_closed: rc,
                            });
                        }
                        _ => {}
                    }
                }
            }
        }
    }
    if out.is_empty() {
        return Err(EmbedError::NormalizationFailed(
            "template transports to nothing".into(),
        ));
    }
    Ok(NbhdTemplate { pieces: out })
}

// ---------------------------------------------------------------------------
// Embedding construction
// ---------------------------------------------------------------------------

pub type Pt3 = [Rat; 3];

#[derive(Debug, Clone)]
pub struct Anchor {
    /// source coordinate of the special point
    pub src: Rat,
    /// its coordinate in the rearranged space
    pub image: Rat,
    /// cell index in the normalized spec
    pub cell: usize,
    pub pos: Pt3,
}

#[derive(Debug, Clone)]
pub struct Curve {
    /// cell index in the normalized spec
    pub cell: usize,
    /// parameter interval (the normalized cell's interval)
    pub lo: Rat,
    pub hi: Rat,
    pub vertices: Vec<Pt3>,
    pub left_anchor: Option<usize>,
    pub right_anchor: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Embedding {
    pub anchors: Vec<Anchor>,
    pub curves: Vec<Curve>,
    pub sigma: Rat,
    pub k: usize,
}

fn p3(x: Rat, y: Rat, z: Rat) -> Pt3 {
    [x, y, z]
}

/// Builds the deterministic curve layout: anchors on the x-axis with the
/// spacing rule, one curve per interval cell in its own y-plane, ray
/// attachments realized as straight approach segments with globally unique
/// slopes, loops closed by a connecting edge.
pub fn build_embedding(n: &NormalizedSpec, rays: &RayReport) -> Result<Embedding, EmbedError> {
    n.spec
        .require_validated()
        .map_err(|_| EmbedError::NotValidated)?;
    let spec = &n.spec;

    let mut anchors: Vec<Anchor> = Vec::new();
    let mut anchor_of_cell: BTreeMap<usize, usize> = BTreeMap::new();
    let mut intervals: Vec<(usize, Rat, Rat)> = Vec::new();
    for piece in &n.pieces {
        match piece {
            PieceMap::Point { src, image, cell } => {
                anchor_of_cell.insert(*cell, anchors.len());
                anchors.push(Anchor {
                    src: src.clone(),
                    image: image.clone(),
                    cell: *cell,
                    pos: p3(rzero(), rzero(), rzero()),
                });
            }
            PieceMap::Interval {
                src_lo,
                src_hi,
                shift,
                cell,
            } => intervals.push((*cell, src_lo + shift, src_hi + shift)),
        }
    }
    let k = intervals.len();
    let n_anchor = anchors.len();

    // spacing rule: 2k·|p_i − p_j| < r − q for every anchor pair and cell
    let min_len = intervals
        .iter()
        .map(|(_, lo, hi)| hi - lo)
        .min()
        .unwrap_or_else(|| rint(1));
    let sigma = if n_anchor <= 1 || k == 0 {
        rint(1)
    } else {
        min_len / rint(2 * (k as i64) * ((n_anchor as i64) - 1) + 1)
    };
    for (i, a) in anchors.iter_mut().enumerate() {
        a.pos = p3(rint(i as i64 + 1) * &sigma, rzero(), rzero());
    }

    // attachments: an interval end glues to an anchor exactly when every
    // neighborhood of the anchor's point contains a ray abutting that end
    let mut attach_count = vec![0usize; n_anchor];
    let mut ends: Vec<(Option<usize>, Option<usize>)> = Vec::new();
    for (cell, lo, hi) in &intervals {
        let mut left = None;
        let mut right = None;
        for (ai, a) in anchors.iter().enumerate() {
            if has_ray(spec, a.cell, &a.image, lo, true) {
                if left.replace(ai).is_some() {
                    return Err(EmbedError::AttachmentConflict(format!(
                        "two anchors claim the left end of cell {}",
                        spec.cells[*cell].describe()
                    )));
                }
                attach_count[ai] += 1;
            }
            if has_ray(spec, a.cell, &a.image, hi, false) {
                if right.replace(ai).is_some() {
                    return Err(EmbedError::AttachmentConflict(format!(
                        "two anchors claim the right end of cell {}",
                        spec.cells[*cell].describe()
                    )));
                }
                attach_count[ai] += 1;
            }
        }
        ends.push((left, right));
    }
    for (ai, count) in attach_count.iter().enumerate() {
        if *count > 4 {
            return Err(EmbedError::TooManyAttachments(format!(
                "anchor at {} hosts {} ray attachments",
                fmt_rat(&anchors[ai].src),
                count
            )));
        }
    }

    check_ray_report(n, rays, &anchors, &intervals, &ends)?;

    // geometry: curve j lives at y = j+1; each attachment approaches its
    // anchor along z = c·y with a globally unique integer slope c, loop and
    // bridge ends getting consecutive slopes so no third approach can pass
    // between them
    let mut curves = Vec::new();
    let mut slope = 0i64;
    for (j, ((cell, lo, hi), (left, right))) in intervals.iter().zip(&ends).enumerate() {
        let y = rint(j as i64 + 1);
        let len = hi - lo;
        let vertices = match (left, right) {
            (None, None) => vec![
                p3(lo.clone(), y.clone(), rzero()),
                p3(hi.clone(), y.clone(), rzero()),
            ],
            (Some(ai), None) => {
                slope += 1;
                let z = rint(slope) * &y;
                let px = anchors[*ai].pos[0].clone();
                vec![
                    anchors[*ai].pos.clone(),
                    p3(px.clone(), y.clone(), z.clone()),
                    p3(&px + &len, y.clone(), z),
                ]
            }
            (None, Some(ai)) => {
                slope += 1;
                let z = rint(slope) * &y;
                let px = anchors[*ai].pos[0].clone();
                vec![
                    p3(&px - &len, y.clone(), z.clone()),
                    p3(px.clone(), y.clone(), z),
                    anchors[*ai].pos.clone(),
                ]
            }
            (Some(a1), Some(a2)) => {
                slope += 2;
                let z1 = rint(slope - 1) * &y;
                let z2 = rint(slope) * &y;
                let p1 = anchors[*a1].pos[0].clone();
                let p2 = anchors[*a2].pos[0].clone();
                vec![
                    anchors[*a1].pos.clone(),
                    p3(p1, y.clone(), z1),
                    p3(p2, y.clone(), z2),
                    anchors[*a2].pos.clone(),
                ]
            }
        };
        curves.push(Curve {
            cell: *cell,
            lo: lo.clone(),
            hi: hi.clone(),
            vertices,
            left_anchor: *left,
            right_anchor: *right,
        });
    }

    let emb = Embedding {
        anchors,
        curves,
        sigma,
        k,
    };
    check_disjoint(&emb)?;
    Ok(emb)
}

/// Every reported generalized ray must be realized as an attachment.
fn check_ray_report(
    n: &NormalizedSpec,
    rays: &RayReport,
    anchors: &[Anchor],
    intervals: &[(usize, Rat, Rat)],
    ends: &[(Option<usize>, Option<usize>)],
) -> Result<(), EmbedError> {
    for entry in &rays.entries {
        let p = parse_rat(&entry.point).ok_or_else(|| {
            EmbedError::RayMismatch(format!("unreadable ray point {}", entry.point))
        })?;
        let anchor_idx = anchors.iter().position(|a| a.src == p).ok_or_else(|| {
            EmbedError::RayMismatch(format!("ray point {} has no anchor", entry.point))
        })?;
        for ray in &entry.rays {
            let at = parse_rat(&ray.at).ok_or_else(|| {
                EmbedError::RayMismatch(format!("unreadable ray endpoint {}", ray.at))
            })?;
            // locate the rearranged curve whose source end abuts the ray
            let found = n.pieces.iter().find_map(|piece| match piece {
                PieceMap::Interval {
                    src_lo,
                    src_hi,
                    cell,
                    ..
                } => match ray.side {
                    RaySide::Left if *src_lo == at => Some((*cell, true)),
                    RaySide::Right if *src_hi == at => Some((*cell, false)),
                    _ => None,
                },
                _ => None,
            });
            let (cell, is_left) = found.ok_or_else(|| {
                EmbedError::RayMismatch(format!("ray at {} matches no curve end", ray.at))
            })?;
            let idx = intervals.iter().position(|(c, _, _)| *c == cell).unwrap();
            let attached = if is_left { ends[idx].0 } else { ends[idx].1 };
            if attached != Some(anchor_idx) {
                return Err(EmbedError::RayMismatch(format!(
                    "ray of {} at {} not realized as an attachment",
                    entry.point, ray.at
                )));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Exact disjointness of the layout
// ---------------------------------------------------------------------------

fn sub3(a: &Pt3, b: &Pt3) -> Pt3 {
    [&a[0] - &b[0], &a[1] - &b[1], &a[2] - &b[2]]
}

fn cross3(a: &Pt3, b: &Pt3) -> Pt3 {
    [
        &a[1] * &b[2] - &a[2] * &b[1],
        &a[2] * &b[0] - &a[0] * &b[2],
        &a[0] * &b[1] - &a[1] * &b[0],
    ]
}

fn is_zero3(a: &Pt3) -> bool {
    a.iter().all(|c| c.is_zero())
}

fn lerp3(p: &Pt3, q: &Pt3, t: &Rat) -> Pt3 {
    [
        &p[0] + &(t * &(&q[0] - &p[0])),
        &p[1] + &(t * &(&q[1] - &p[1])),
        &p[2] + &(t * &(&q[2] - &p[2])),
    ]
}

struct Seg {
    p: Pt3,
    q: Pt3,
    curve: usize,
    index: usize,
}

/// Exact pairwise disjointness of the open polylines; touching is only
/// permitted at anchor positions (excluded curve endpoints) and at shared
/// vertices of adjacent segments of one curve.
fn check_disjoint(emb: &Embedding) -> Result<(), EmbedError> {
    let mut segs = Vec::new();
    for (ci, c) in emb.curves.iter().enumerate() {
        for (si, w) in c.vertices.windows(2).enumerate() {
            segs.push(Seg {
                p: w[0].clone(),
                q: w[1].clone(),
                curve: ci,
                index: si,
            });
        }
    }
    let allowed = |pt: &Pt3, a: &Seg, b: &Seg| -> bool {
        if emb.anchors.iter().any(|an| an.pos == *pt) {
            return true;
        }
        // shared vertex of adjacent segments of one curve
        a.curve == b.curve
            && a.index.abs_diff(b.index) == 1
            && (a.p == *pt || a.q == *pt)
            && (b.p == *pt || b.q == *pt)
    };
    for i in 0..segs.len() {
        for j in (i + 1)..segs.len() {
            let (a, b) = (&segs[i], &segs[j]);
            if a.curve == b.curve && a.index.abs_diff(b.index) <= 1 {
                // adjacency within one curve is fine by construction, but
                // collinear overlap is not
                let u = sub3(&a.q, &a.p);
                let v = sub3(&b.q, &b.p);
                if is_zero3(&cross3(&u, &v)) && is_zero3(&cross3(&sub3(&b.p, &a.p), &u)) {
                    return Err(EmbedError::SelfIntersecting(format!(
                        "curve {} folds back on itself at segment {}",
                        a.curve, a.index
                    )));
                }
                continue;
            }
            for pt in segment_intersections(a, b) {
                if !allowed(&pt, a, b) {
                    return Err(EmbedError::SelfIntersecting(format!(
                        "curves {} and {} meet at ({},{},{})",
                        a.curve,
                        b.curve,
                        fmt_rat(&pt[0]),
                        fmt_rat(&pt[1]),
                        fmt_rat(&pt[2])
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Intersection points of two closed rational segments (at most two are
/// reported for collinear overlaps: the overlap endpoints).
fn segment_intersections(a: &Seg, b: &Seg) -> Vec<Pt3> {
    let u = sub3(&a.q, &a.p);
    let v = sub3(&b.q, &b.p);
    let w = sub3(&b.p, &a.p);
    let n = cross3(&u, &v);
    if is_zero3(&n) {
        // parallel: collinear iff w is also parallel to u
        if !is_zero3(&cross3(&w, &u)) {
            return vec![];
        }
        // project onto the first nonzero coordinate of u
        let axis = (0..3).find(|&i| !u[i].is_zero());
        let axis = match axis {
            Some(i) => i,
            None => {
                // degenerate point segment
                return if w.iter().all(|c| c.is_zero()) {
                    vec![a.p.clone()]
                } else {
                    vec![]
                };
            }
        };
        let t0 = &w[axis] / &u[axis];
        let t1 = &(&w[axis] + &v[axis]) / &u[axis];
        let (mut lo, mut hi) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
        if lo < rzero() {
            lo = rzero();
        }
        if hi > rint(1) {
            hi = rint(1);
        }
        if lo > hi {
            return vec![];
        }
        let mut out = vec![lerp3(&a.p, &a.q, &lo)];
        if hi != lo {
            out.push(lerp3(&a.p, &a.q, &hi));
        }
        return out;
    }
    // skew or crossing: solve the 2x2 system on a coordinate pair with a
    // nonzero determinant, then check the remaining coordinate
    for (c1, c2) in [(0usize, 1usize), (0, 2), (1, 2)] {
        let det = &u[c1] * &v[c2] - &u[c2] * &v[c1];
        if det.is_zero() {
            continue;
        }
        let t = (&w[c1] * &v[c2] - &w[c2] * &v[c1]) / &det;
        let s = (&u[c1] * &w[c2] - &u[c2] * &w[c1]) / -&det;
        let zero = rzero();
        let one = rint(1);
        if t < zero || t > one || s < zero || s > one {
            return vec![];
        }
        let pa = lerp3(&a.p, &a.q, &t);
        let pb = lerp3(&b.p, &b.q, &s);
        return if pa == pb { vec![pa] } else { vec![] };
    }
    vec![]
}

// ---------------------------------------------------------------------------
// Point maps
// ---------------------------------------------------------------------------

fn curve_of_cell(emb: &Embedding, cell: usize) -> Option<usize> {
    emb.curves.iter().position(|c| c.cell == cell)
}

/// Position on curve `ci` at parameter `t` (segments split the parameter
/// interval evenly).
pub fn position_at(emb: &Embedding, ci: usize, t: &Rat) -> Pt3 {
    let c = &emb.curves[ci];
    let m = c.vertices.len() - 1;
    let d = (&c.hi - &c.lo) / rint(m as i64);
    let raw = ((t - &c.lo) / &d).floor().to_integer();
    let l = raw.to_usize().unwrap_or(0).min(m - 1);
    let local = (t - &c.lo - rint(l as i64) * &d) / &d;
    lerp3(&c.vertices[l], &c.vertices[l + 1], &local)
}

/// The embedding map on a source-space point.
pub fn map_point(n: &NormalizedSpec, emb: &Embedding, x: &Rat) -> Option<Pt3> {
    for piece in &n.pieces {
        match piece {
            PieceMap::Point { src, cell, .. } if src == x => {
                let ai = emb.anchors.iter().position(|a| a.cell == *cell)?;
                return Some(emb.anchors[ai].pos.clone());
            }
            PieceMap::Interval {
                src_lo,
                src_hi,
                shift,
                cell,
            } if src_lo < x && x < src_hi => {
                let ci = curve_of_cell(emb, *cell)?;
                return Some(position_at(emb, ci, &(x + shift)));
            }
            _ => {}
        }
    }
    None
}

/// The stored inverse of the embedding map.
pub fn inverse_map_point(n: &NormalizedSpec, emb: &Embedding, p: &Pt3) -> Option<Rat> {
    if let Some(a) = emb.anchors.iter().find(|a| a.pos == *p) {
        return Some(a.src.clone());
    }
    for (ci, c) in emb.curves.iter().enumerate() {
        let m = c.vertices.len() - 1;
        let d = (&c.hi - &c.lo) / rint(m as i64);
        for l in 0..m {
            let u = sub3(&c.vertices[l + 1], &c.vertices[l]);
            let w = sub3(p, &c.vertices[l]);
            if !is_zero3(&cross3(&w, &u)) {
                continue;
            }
            let axis = (0..3).find(|&i| !u[i].is_zero())?;
            let lam = &w[axis] / &u[axis];
            if lam < rzero() || lam > rint(1) {
                continue;
            }
            if lerp3(&c.vertices[l], &c.vertices[l + 1], &lam) != *p {
                continue;
            }
            let t = &c.lo + rint(l as i64) * &d + &lam * &d;
            if t <= c.lo || t >= c.hi {
                continue;
            }
            let _ = ci;
            // t is a coordinate of the rearranged space
            return n.inverse_point(&t);
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

/// A subset of the embedded figure: some anchors plus, per curve, a
/// parameter set.
#[derive(Debug, Clone, Default)]
struct ImageSet {
    anchors: BTreeSet<usize>,
    arcs: BTreeMap<usize, SemilinearSet>,
}

impl ImageSet {
    fn is_subset(&self, other: &ImageSet) -> bool {
        self.anchors.is_subset(&other.anchors)
            && self.arcs.iter().all(|(ci, s)| {
                s.is_empty()
                    || other
                        .arcs
                        .get(ci)
                        .map(|o| s.is_subset(o))
                        .unwrap_or(false)
            })
    }
}

/// Image of a subset of the source space.
fn image_set(n: &NormalizedSpec, emb: &Embedding, s: &SemilinearSet) -> ImageSet {
    let mut out = ImageSet::default();
    let fwd = n.forward_set(s);
    for comp in fwd.components() {
        match comp {
            SetComponent::Point(p) => {
                if let Some(ai) = emb
                    .anchors
                    .iter()
                    .position(|a| a.image == *p)
                {
                    out.anchors.insert(ai);
                } else if let Some(ci) = emb
                    .curves
                    .iter()
                    .position(|c| c.lo < *p && *p < c.hi)
                {
                    let entry = out.arcs.entry(ci).or_insert_with(SemilinearSet::empty);
                    *entry = entry.union(&SemilinearSet::point(p.clone()));
                }
            }
            SetComponent::Open(x, y) => {
                for (ci, c) in emb.curves.iter().enumerate() {
                    let lo = if x > &c.lo { x.clone() } else { c.lo.clone() };
                    let hi = if y < &c.hi { y.clone() } else { c.hi.clone() };
                    if lo < hi {
                        let entry = out.arcs.entry(ci).or_insert_with(SemilinearSet::empty);
                        *entry = entry.union(&SemilinearSet::open(lo, hi));
                    }
                }
            }
        }
    }
    out
}

/// Parameters of curve `ci` whose position lies in the open max-norm box of
/// radius `gamma` around `center`.
fn curve_box_params(emb: &Embedding, ci: usize, center: &Pt3, gamma: &Rat) -> SemilinearSet {
    let c = &emb.curves[ci];
    let m = c.vertices.len() - 1;
    let d = (&c.hi - &c.lo) / rint(m as i64);
    let mut comps = Vec::new();
    for l in 0..m {
        let v0 = &c.vertices[l];
        let v1 = &c.vertices[l + 1];
        // lambda range in [0,1] satisfying |v0 + lambda*(v1-v0) - center| < gamma
        let mut lo = rzero();
        let mut hi = rint(1);
        let mut lo_closed = true;
        let mut hi_closed = true;
        let mut empty = false;
        for coord in 0..3 {
            let base = &v0[coord] - &center[coord];
            let delta = &v1[coord] - &v0[coord];
            if delta.is_zero() {
                if base.abs() >= *gamma {
                    empty = true;
                    break;
                }
                continue;
            }
            let b1 = (-gamma - &base) / &delta;
            let b2 = (gamma - &base) / &delta;
            let (l1, l2) = if b1 < b2 { (b1, b2) } else { (b2, b1) };
            if l1 > lo {
                lo = l1;
                lo_closed = false;
            } else if l1 == lo {
                lo_closed = false;
            }
            if l2 < hi {
                hi = l2;
                hi_closed = false;
            } else if l2 == hi {
                hi_closed = false;
            }
        }
        if empty || lo > hi || (lo == hi && !(lo_closed && hi_closed)) {
            continue;
        }
        let t_lo = &c.lo + rint(l as i64) * &d + &lo * &d;
        let t_hi = &c.lo + rint(l as i64) * &d + &hi * &d;
        if t_lo == t_hi {
            comps.push(SetComponent::Point(t_lo));
            continue;
        }
        if lo_closed {
            comps.push(SetComponent::Point(t_lo.clone()));
        }
        if hi_closed {
            comps.push(SetComponent::Point(t_hi.clone()));
        }
        comps.push(SetComponent::Open(t_lo, t_hi));
    }
    SemilinearSet::canonicalize(comps)
        .intersection(&SemilinearSet::open(c.lo.clone(), c.hi.clone()))
}

/// All embedded points within the open box of radius `gamma`.
fn box_trace(emb: &Embedding, center: &Pt3, gamma: &Rat) -> ImageSet {
    let mut out = ImageSet::default();
    for (ai, a) in emb.anchors.iter().enumerate() {
        if (0..3).all(|c| (&a.pos[c] - &center[c]).abs() < *gamma) {
            out.anchors.insert(ai);
        }
    }
    for ci in 0..emb.curves.len() {
        let params = curve_box_params(emb, ci, center, gamma);
        if !params.is_empty() {
            out.arcs.insert(ci, params);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct CertEntry {
    pub point: Rat,
    pub eps: Rat,
    pub gamma: Rat,
    pub eps_inner: Rat,
}

#[derive(Debug, Clone)]
pub struct Certificate {
    pub entries: Vec<CertEntry>,
    pub pass: bool,
}

fn eps_valid(spec: &TopologySpec, a: &Rat, eps: &Rat) -> bool {
    let idx = match spec.cell_of(a) {
        Some(i) => i,
        None => return false,
    };
    let dom = spec.domain(idx, "a", "eps");
    let mut asg = BTreeMap::new();
    asg.insert("a".to_string(), a.clone());
    asg.insert("eps".to_string(), eps.clone());
    dom.eval(&asg).unwrap_or(false)
}

/// Certifies the embedding on a dense rational sample: for every sampled
/// point and valid scale, (i) some open box trace around the image is
/// contained in the image of the neighborhood, and (ii) the image of a
/// smaller neighborhood fits inside that box trace.
pub fn verify_embedding(
    spec: &TopologySpec,
    n: &NormalizedSpec,
    emb: &Embedding,
    depth: u32,
) -> Result<Certificate, EmbedError> {
    let mut samples = spec.space_samples(2);
    for piece in &n.pieces {
        if let PieceMap::Point { src, .. } = piece {
            if !samples.contains(src) {
                samples.push(src.clone());
            }
        }
    }
    samples.sort();

    // boxes are scaled below the anchor spacing so a trace near one anchor
    // cannot capture another
    let unit = rint(1);
    let scale = if emb.sigma < unit { emb.sigma.clone() } else { unit };

    let mut entries = Vec::new();
    for a in &samples {
        let fa = map_point(n, emb, a).ok_or_else(|| EmbedError::Verify {
            point: fmt_rat(a),
            eps: "-".into(),
            direction: "map".into(),
        })?;
        for ke in 1..=depth {
            let eps = pow2_neg(ke);
            if !eps_valid(spec, a, &eps) {
                continue;
            }
            let nbhd = match spec.nbhd_at(a, &eps) {
                Some(s) => s,
                None => continue,
            };
            let img = image_set(n, emb, &nbhd);
            // direction (i): find a box trace inside the image
            let mut found = None;
            for m in 1..=(depth + 4) {
                let gamma = &scale * pow2_neg(m);
                let tr = box_trace(emb, &fa, &gamma);
                if tr.is_subset(&img) {
                    found = Some((gamma, tr));
                    break;
                }
            }
            let (gamma, tr) = found.ok_or_else(|| EmbedError::Verify {
                point: fmt_rat(a),
                eps: fmt_rat(&eps),
                direction: "i".into(),
            })?;
            // direction (ii): a smaller neighborhood maps into the trace
            let mut inner = None;
            for ki in ke..=(depth + 8) {
                let eps2 = pow2_neg(ki);
                if !eps_valid(spec, a, &eps2) {
                    continue;
                }
                let nb2 = match spec.nbhd_at(a, &eps2) {
                    Some(s) => s,
                    None => continue,
                };
                if image_set(n, emb, &nb2).is_subset(&tr) {
                    inner = Some(eps2);
                    break;
                }
            }
            let eps_inner = inner.ok_or_else(|| EmbedError::Verify {
                point: fmt_rat(a),
                eps: fmt_rat(&eps),
                direction: "ii".into(),
            })?;
            entries.push(CertEntry {
                point: a.clone(),
                eps,
                gamma,
                eps_inner,
            });
        }
    }
    Ok(Certificate {
        entries,
        pass: true,
    })
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

fn pt_json(p: &Pt3) -> serde_json::Value {
    json!([fmt_rat(&p[0]), fmt_rat(&p[1]), fmt_rat(&p[2])])
}

impl Embedding {
    pub fn to_json(&self, n: &NormalizedSpec) -> serde_json::Value {
        let anchors: Vec<_> = self
            .anchors
            .iter()
            .map(|a| {
                json!({
                    "source": fmt_rat(&a.src),
                    "normalized": fmt_rat(&a.image),
                    "position": pt_json(&a.pos),
                })
            })
            .collect();
        let curves: Vec<_> = self
            .curves
            .iter()
            .map(|c| {
                let m = c.vertices.len() - 1;
                let d = (&c.hi - &c.lo) / rint(m as i64);
                let map: Vec<_> = (0..m)
                    .map(|l| {
                        let t0 = &c.lo + rint(l as i64) * &d;
                        let t1 = &t0 + &d;
                        let coeffs: Vec<_> = (0..3)
                            .map(|coord| {
                                let slope =
                                    (&c.vertices[l + 1][coord] - &c.vertices[l][coord]) / &d;
                                let icept = &c.vertices[l][coord] - &(&slope * &t0);
                                json!([fmt_rat(&slope), fmt_rat(&icept)])
                            })
                            .collect();
                        json!({
                            "param": [fmt_rat(&t0), fmt_rat(&t1)],
                            "affine": coeffs,
                        })
                    })
                    .collect();
                json!({
                    "cell": n.spec.cells[c.cell].describe(),
                    "param": [fmt_rat(&c.lo), fmt_rat(&c.hi)],
                    "vertices": c.vertices.iter().map(pt_json).collect::<Vec<_>>(),
                    "left_attached": c.left_anchor,
                    "right_attached": c.right_anchor,
                    "map": map,
                })
            })
            .collect();
        json!({
            "k": self.k,
            "sigma": fmt_rat(&self.sigma),
            "anchors": anchors,
            "curves": curves,
        })
    }
}

impl Certificate {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "pass": self.pass,
            "entries": self.entries.iter().map(|e| json!({
                "point": fmt_rat(&e.point),
                "eps": fmt_rat(&e.eps),
                "gamma": fmt_rat(&e.gamma),
                "eps_inner": fmt_rat(&e.eps_inner),
            })).collect::<Vec<_>>(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decide::analyze;
    use crate::dsl::parse;

    fn fixture(name: &str) -> TopologySpec {
        let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
        let mut spec = parse(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert!(spec.validate().ok, "{name} must validate");
        spec
    }

    fn embed_fixture(name: &str) -> (TopologySpec, NormalizedSpec, Embedding) {
        let spec = fixture(name);
        let analysis = analyze(&spec).unwrap();
        assert!(analysis.verdict.affinizable, "{name} must be affinizable");
        let n = normalize_isolate(&spec, &analysis.exceptional).unwrap();
        let emb = build_embedding(&n, &analysis.rays).unwrap();
        (spec, n, emb)
    }

    #[test]
    fn affine_single_free_segment() {
        let (spec, n, emb) = embed_fixture("affine.top");
        assert!(emb.anchors.is_empty());
        assert_eq!(emb.curves.len(), 1);
        assert!(emb.curves[0].left_anchor.is_none() && emb.curves[0].right_anchor.is_none());
        assert_eq!(emb.curves[0].vertices.len(), 2);
        let cert = verify_embedding(&spec, &n, &emb, 8).unwrap();
        assert!(cert.pass && !cert.entries.is_empty());
    }

    #[test]
    fn infty_two_loops_on_one_anchor() {
        let (spec, n, emb) = embed_fixture("infty.top");
        assert_eq!(emb.anchors.len(), 1);
        assert_eq!(emb.curves.len(), 2);
        for c in &emb.curves {
            assert_eq!(c.left_anchor, Some(0));
            assert_eq!(c.right_anchor, Some(0));
        }
        let cert = verify_embedding(&spec, &n, &emb, 8).unwrap();
        assert!(cert.pass);
    }

    #[test]
    fn chain_attachments() {
        let (spec, n, emb) = embed_fixture("chain.top");
        assert_eq!(emb.anchors.len(), 3);
        assert_eq!(emb.curves.len(), 3);
        // anchor of 1 receives the right end of the (1,2)-image; anchor of
        // 2 the right end of the (2,3)-image; anchor of 3 stays isolated
        let by_src = |r: i64| {
            emb.anchors
                .iter()
                .position(|a| a.src == rint(r))
                .unwrap()
        };
        let curve_src = |lo: i64, hi: i64| {
            emb.curves
                .iter()
                .find(|c| {
                    let piece = n.pieces.iter().find_map(|p| match p {
                        PieceMap::Interval {
                            src_lo,
                            src_hi,
                            cell,
                            ..
                        } if *cell == c.cell => Some((src_lo.clone(), src_hi.clone())),
                        _ => None,
                    });
                    piece == Some((rint(lo), rint(hi)))
                })
                .unwrap()
        };
        assert_eq!(curve_src(0, 1).left_anchor, None);
        assert_eq!(curve_src(0, 1).right_anchor, None);
        assert_eq!(curve_src(1, 2).right_anchor, Some(by_src(1)));
        assert_eq!(curve_src(1, 2).left_anchor, None);
        assert_eq!(curve_src(2, 3).right_anchor, Some(by_src(2)));
        assert_eq!(curve_src(2, 3).left_anchor, None);
        let cert = verify_embedding(&spec, &n, &emb, 8).unwrap();
        assert!(cert.pass);
    }

    #[test]
    fn two_cells_free_segments() {
        let (spec, n, emb) = embed_fixture("two_cells.top");
        assert!(emb.anchors.is_empty());
        assert_eq!(emb.curves.len(), 2);
        let cert = verify_embedding(&spec, &n, &emb, 8).unwrap();
        assert!(cert.pass);
    }

    #[test]
    fn round_trip_identity() {
        for name in ["affine.top", "infty.top", "chain.top"] {
            let (spec, n, emb) = embed_fixture(name);
            for a in spec.space_samples(3) {
                let p = map_point(&n, &emb, &a).unwrap();
                let back = inverse_map_point(&n, &emb, &p).unwrap();
                assert_eq!(back, a, "{name}: round trip at {}", fmt_rat(&a));
            }
        }
    }

    #[test]
    fn non_affinizable_is_rejected() {
        let spec = fixture("halfopen.top");
        let analysis = analyze(&spec).unwrap();
        let err = normalize_isolate(&spec, &analysis.exceptional).unwrap_err();
        assert!(matches!(err, EmbedError::NotAffinizable(_)));
    }

    #[test]
    fn corrupted_embedding_fails_at_glue_point() {
        let (spec, n, mut emb) = embed_fixture("infty.top");
        // detach one loop end: move the final vertex off the anchor
        let c = &mut emb.curves[0];
        let m = c.vertices.len() - 1;
        c.vertices[m] = p3(rint(50), rint(50), rint(50));
        c.right_anchor = None;
        let err = verify_embedding(&spec, &n, &emb, 8).unwrap_err();
        match err {
            EmbedError::Verify {
                point, direction, ..
            } => {
                assert_eq!(point, "2");
                assert_eq!(direction, "ii");
            }
            other => panic!("expected verification failure, got {other:?}"),
        }
    }
}
