//! Topological core: closures in the defined topology, shadow sets (the
//! points glued to a point by the topology, possibly outside the space),
//! generic shadow functions per cell, local point classification, and
//! comparison of the defined neighborhood basis against the affine one.

use num_traits::Zero;
use serde::Serialize;

use crate::dsl::{set_member_formula, CellKind, TopologySpec};
use crate::geom::{AffineExpr, IntervalPiece, SemilinearSet, SetComponent};
use crate::lra::{decide_sentence, solution_set_1d, LinFormula, LinTerm, LraError};
use crate::rat::{fmt_rat, midpoint, rzero, Rat};

#[derive(Debug, thiserror::Error)]
pub enum ShadowError {
    #[error("set {0} is not contained in the space")]
    NotSubset(String),
    #[error("point {0} is not in the space")]
    NotInSpace(String),
    #[error("spec must be validated first")]
    NotValidated,
    #[error("shadow set is not finite: {0}")]
    InfiniteShadow(String),
    #[error("cell {0} is not an open cell")]
    NotOpenCell(usize),
    #[error("shadow functions do not cover the sampled shadow set on subcell ({0},{1})")]
    IncompleteShadowFunctions(String, String),
    #[error("linear arithmetic failure: {0}")]
    Lra(#[from] LraError),
}

/// The four exclusive local shapes of a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PointClass {
    LocallyIsolated,
    LocallyRightClosed,
    LocallyLeftClosed,
    LocallyEuclidean,
}

/// Comparison of the point's defined basis with its affine basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BasisClass {
    Iso,
    LeftClosedHalf,
    RightClosedHalf,
    Affine,
    NonLocal,
}

/// A maximal region on which the analysis is uniform: the interior of a
/// subcell between breakpoints, or a single special point (breakpoint or
/// isolated point).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Region {
    Subcell { cell: usize, lo: Rat, hi: Rat },
    Special { cell: usize, at: Rat },
}

impl Region {
    pub fn as_set(&self) -> SemilinearSet {
        match self {
            Region::Subcell { lo, hi, .. } => SemilinearSet::open(lo.clone(), hi.clone()),
            Region::Special { at, .. } => SemilinearSet::point(at.clone()),
        }
    }

    pub fn sample(&self) -> Rat {
        match self {
            Region::Subcell { lo, hi, .. } => midpoint(lo, hi),
            Region::Special { at, .. } => at.clone(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Region::Subcell { lo, hi, .. } => format!("({},{})", fmt_rat(lo), fmt_rat(hi)),
            Region::Special { at, .. } => format!("{{{}}}", fmt_rat(at)),
        }
    }
}

/// Shadow structure of one open cell: affine shadow functions on each
/// subcell (first function always the identity), with per-breakpoint
/// shadow sets computed individually.
#[derive(Debug, Clone)]
pub struct CellShadowEntry {
    pub breakpoints: Vec<Rat>,
    pub subcells: Vec<SubcellShadows>,
    pub breakpoint_shadows: Vec<(Rat, Vec<Rat>)>,
}

#[derive(Debug, Clone)]
pub struct SubcellShadows {
    pub lo: Rat,
    pub hi: Rat,
    /// Affine functions of the cell variable; `funcs[0]` is the identity.
    pub funcs: Vec<AffineExpr>,
}

/// Shadow structure of the whole space.
#[derive(Debug, Clone)]
pub struct ShadowMap {
    /// Parallel to the spec's cells; `None` for isolated-point cells.
    pub cells: Vec<Option<CellShadowEntry>>,
    /// Shadow sets of the isolated-point cells.
    pub points: Vec<(Rat, Vec<Rat>)>,
}

impl ShadowMap {
    /// All analysis regions, in space order.
    pub fn regions(&self, spec: &TopologySpec) -> Vec<Region> {
        let mut out = Vec::new();
        for (idx, cell) in spec.cells.iter().enumerate() {
            match &cell.kind {
                CellKind::IsolPoint(q) => out.push(Region::Special {
                    cell: idx,
                    at: q.clone(),
                }),
                CellKind::OpenCell(..) => {
                    let entry = self.cells[idx].as_ref().expect("open cell entry");
                    for sc in &entry.subcells {
                        out.push(Region::Subcell {
                            cell: idx,
                            lo: sc.lo.clone(),
                            hi: sc.hi.clone(),
                        });
                    }
                    for b in &entry.breakpoints {
                        out.push(Region::Special {
                            cell: idx,
                            at: b.clone(),
                        });
                    }
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Formula helpers
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

/// `y ∈ cl^af(N_idx(a, eps))`: like neighborhood membership but with all
/// interval endpoints included.
fn nbhd_closure_member(
    spec: &TopologySpec,
    idx: usize,
    a_var: &str,
    eps_var: &str,
    y_var: &str,
) -> LinFormula {
    LinFormula::or(
        spec.templates[idx]
            .pieces
            .iter()
            .map(|p| match p {
                IntervalPiece::Singleton(at) => LinFormula::eq(
                    LinTerm::var(y_var),
                    affine_term(at, a_var, eps_var),
                ),
                IntervalPiece::Interval { lo, hi, .. } => LinFormula::and(vec![
                    LinFormula::le(affine_term(lo, a_var, eps_var), LinTerm::var(y_var)),
                    LinFormula::le(LinTerm::var(y_var), affine_term(hi, a_var, eps_var)),
                ]),
            })
            .collect(),
    )
}

/// `x ∈ cl_tau(Z)` as a formula in `x_var`, case-split over the cell of x.
/// `z_member` describes membership in Z with free variable `cy`; it may
/// carry further free variables of the caller's own quantifier context (the
/// closure binders here are `cdelta` and `cy`, chosen to avoid capture).
pub fn closure_member_of(
    spec: &TopologySpec,
    z_member: &LinFormula,
    x_var: &str,
) -> LinFormula {
    LinFormula::or(
        (0..spec.cells.len())
            .map(|i| {
                LinFormula::and(vec![
                    spec.cell_member(i, x_var),
                    LinFormula::forall(
                        "cdelta",
                        LinFormula::implies(
                            spec.domain(i, x_var, "cdelta"),
                            LinFormula::exists(
                                "cy",
                                LinFormula::and(vec![
                                    spec.nbhd_member(i, x_var, "cdelta", "cy"),
                                    z_member.clone(),
                                ]),
                            ),
                        ),
                    ),
                ])
            })
            .collect(),
    )
}

fn closure_member_formula(spec: &TopologySpec, z: &SemilinearSet, x_var: &str) -> LinFormula {
    closure_member_of(spec, &set_member_formula(z, "cy"), x_var)
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Closure of `Z` in the defined topology. `Z` must lie inside the space.
pub fn tau_closure(spec: &TopologySpec, z: &SemilinearSet) -> Result<SemilinearSet, ShadowError> {
    if !spec.is_validated() {
        return Err(ShadowError::NotValidated);
    }
    if !z.is_subset(&spec.space) {
        return Err(ShadowError::NotSubset(z.render()));
    }
    let formula = closure_member_formula(spec, z, "x");
    Ok(solution_set_1d(&formula, "x")?)
}

/// The shadow set of a concrete point: the intersection of affine closures
/// of all its valid neighborhoods. May contain points outside the space.
pub fn shadows_at(spec: &TopologySpec, q: &Rat) -> Result<Vec<Rat>, ShadowError> {
    if !spec.is_validated() {
        return Err(ShadowError::NotValidated);
    }
    let idx = spec
        .cell_of(q)
        .ok_or_else(|| ShadowError::NotInSpace(fmt_rat(q)))?;
    let q_term = LinTerm::constant(q.clone());
    let body = LinFormula::implies(
        spec.domain(idx, "a", "delta").substitute("a", &q_term),
        nbhd_closure_member(spec, idx, "a", "delta", "b").substitute("a", &q_term),
    );
    let formula = LinFormula::forall("delta", body);
    let sol = solution_set_1d(&formula, "b")?;
    let mut out = Vec::new();
    for c in sol.components() {
        match c {
            SetComponent::Point(p) => out.push(p.clone()),
            SetComponent::Open(..) => return Err(ShadowError::InfiniteShadow(sol.render())),
        }
    }
    Ok(out)
}

/// Verifies symbolically that `f(a)` is a shadow of `a` throughout the open
/// interval (lo, hi) of cell `idx`.
fn is_shadow_function_on(
    spec: &TopologySpec,
    idx: usize,
    lo: &Rat,
    hi: &Rat,
    f: &AffineExpr,
) -> bool {
    let f_term = LinTerm::from_parts(
        vec![("a".to_string(), f.coef_a.clone())],
        f.constant.clone(),
    );
    let inside = LinFormula::and(vec![
        LinFormula::lt(LinTerm::constant(lo.clone()), LinTerm::var("a")),
        LinFormula::lt(LinTerm::var("a"), LinTerm::constant(hi.clone())),
    ]);
    let adheres = LinFormula::forall(
        "delta",
        LinFormula::implies(
            spec.domain(idx, "a", "delta"),
            nbhd_closure_member(spec, idx, "a", "delta", "b")
                .substitute("b", &f_term),
        ),
    );
    let sentence = LinFormula::forall("a", LinFormula::implies(inside, adheres));
    decide_sentence(&sentence).unwrap_or(false)
}

/// Computes the shadow structure of one open cell: subdivides at the
/// finitely many parameters where the symbolic limit structure changes and
/// finds the affine shadow functions on each subcell.
pub fn shadows_generic(spec: &TopologySpec, idx: usize) -> Result<CellShadowEntry, ShadowError> {
    if !spec.is_validated() {
        return Err(ShadowError::NotValidated);
    }
    let (cell_lo, cell_hi) = match &spec.cells[idx].kind {
        CellKind::OpenCell(a, b) => (a.clone(), b.clone()),
        CellKind::IsolPoint(_) => return Err(ShadowError::NotOpenCell(idx)),
    };

    // Endpoint expressions of the template, taken at eps = 0.
    let mut limits: Vec<AffineExpr> = Vec::new();
    for p in &spec.templates[idx].pieces {
        match p {
            IntervalPiece::Singleton(at) => limits.push(at.at_eps_zero()),
            IntervalPiece::Interval { lo, hi, .. } => {
                limits.push(lo.at_eps_zero());
                limits.push(hi.at_eps_zero());
            }
        }
    }
    limits.sort();
    limits.dedup();

    // Constants against which limit endpoints may cross: boundary points of
    // the space and every cell endpoint/constant.
    let mut constants: Vec<Rat> = Vec::new();
    for c in spec.space.affine_closure().components() {
        if let SetComponent::Point(p) = c {
            constants.push(p.clone());
        }
    }
    for cell in &spec.cells {
        match &cell.kind {
            CellKind::IsolPoint(q) => constants.push(q.clone()),
            CellKind::OpenCell(a, b) => {
                constants.push(a.clone());
                constants.push(b.clone());
            }
        }
    }
    constants.sort();
    constants.dedup();

    let mut breakpoints: Vec<Rat> = Vec::new();
    let mut consider = |a_star: Rat| {
        if cell_lo < a_star && a_star < cell_hi {
            breakpoints.push(a_star);
        }
    };
    for i in 0..limits.len() {
        for j in (i + 1)..limits.len() {
            let dc = &limits[i].coef_a - &limits[j].coef_a;
            if !dc.is_zero() {
                consider((&limits[j].constant - &limits[i].constant) / dc);
            }
        }
        if !limits[i].coef_a.is_zero() {
            for c in &constants {
                consider((c - &limits[i].constant) / &limits[i].coef_a);
            }
        }
    }
    breakpoints.sort();
    breakpoints.dedup();

    // Candidate shadow functions: the identity plus every eps-0 endpoint.
    let identity = AffineExpr {
        coef_a: Rat::from_integer(1.into()),
        coef_eps: rzero(),
        constant: rzero(),
    };
    let mut candidates = vec![identity.clone()];
    candidates.extend(limits.iter().cloned());
    candidates.dedup();

    let mut cuts = vec![cell_lo.clone()];
    cuts.extend(breakpoints.iter().cloned());
    cuts.push(cell_hi.clone());

    let mut subcells = Vec::new();
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0].clone(), w[1].clone());
        let mid = midpoint(&lo, &hi);
        let sampled = shadows_at(spec, &mid)?;
        let mut funcs: Vec<AffineExpr> = Vec::new();
        for s in &sampled {
            let f = candidates
                .iter()
                .find(|c| c.eval(&mid, &rzero()) == *s && is_shadow_function_on(spec, idx, &lo, &hi, c))
                .cloned();
            match f {
                Some(f) => funcs.push(f),
                None => {
                    return Err(ShadowError::IncompleteShadowFunctions(
                        fmt_rat(&lo),
                        fmt_rat(&hi),
                    ))
                }
            }
        }
        // cross-check completeness at a second parameter
        let second = &lo + (&hi - &lo) / Rat::from_integer(3.into());
        let mut expected: Vec<Rat> = funcs.iter().map(|f| f.eval(&second, &rzero())).collect();
        expected.sort();
        let mut actual = shadows_at(spec, &second)?;
        actual.sort();
        if expected != actual {
            return Err(ShadowError::IncompleteShadowFunctions(
                fmt_rat(&lo),
                fmt_rat(&hi),
            ));
        }
        // identity first, remaining by value at the midpoint
        funcs.sort_by(|f, g| f.eval(&mid, &rzero()).cmp(&g.eval(&mid, &rzero())));
        if let Some(pos) = funcs.iter().position(|f| *f == identity) {
            let id = funcs.remove(pos);
            funcs.insert(0, id);
        }
        subcells.push(SubcellShadows { lo, hi, funcs });
    }

    let breakpoint_shadows = breakpoints
        .iter()
        .map(|b| Ok((b.clone(), shadows_at(spec, b)?)))
        .collect::<Result<Vec<_>, ShadowError>>()?;

    Ok(CellShadowEntry {
        breakpoints,
        subcells,
        breakpoint_shadows,
    })
}

/// Shadow structure of every cell of the space.
pub fn shadow_map(spec: &TopologySpec) -> Result<ShadowMap, ShadowError> {
    let mut cells = Vec::new();
    let mut points = Vec::new();
    for (idx, cell) in spec.cells.iter().enumerate() {
        match &cell.kind {
            CellKind::OpenCell(..) => cells.push(Some(shadows_generic(spec, idx)?)),
            CellKind::IsolPoint(q) => {
                cells.push(None);
                points.push((q.clone(), shadows_at(spec, q)?));
            }
        }
    }
    Ok(ShadowMap { cells, points })
}

// ---------------------------------------------------------------------------
// Local classification and basis comparison
// ---------------------------------------------------------------------------

/// Side conditions near a point, with `a` free:
/// - empty: some neighborhood misses the whole side trace;
/// - filled: every neighborhood eventually contains the full side trace.
fn side_empty(spec: &TopologySpec, idx: usize, left: bool) -> LinFormula {
    let y_between = if left {
        LinFormula::and(vec![
            LinFormula::lt(
                LinTerm::var("a").sub(&LinTerm::var("gamma")),
                LinTerm::var("y"),
            ),
            LinFormula::lt(LinTerm::var("y"), LinTerm::var("a")),
        ])
    } else {
        LinFormula::and(vec![
            LinFormula::lt(LinTerm::var("a"), LinTerm::var("y")),
            LinFormula::lt(
                LinTerm::var("y"),
                LinTerm::var("a").add(&LinTerm::var("gamma")),
            ),
        ])
    };
    LinFormula::exists(
        "eps",
        LinFormula::and(vec![
            spec.domain(idx, "a", "eps"),
            LinFormula::exists(
                "gamma",
                LinFormula::and(vec![
                    LinFormula::lt(LinTerm::constant(rzero()), LinTerm::var("gamma")),
                    LinFormula::forall(
                        "y",
                        LinFormula::implies(
                            y_between,
                            LinFormula::not(spec.nbhd_member(idx, "a", "eps", "y")),
                        ),
                    ),
                ]),
            ),
        ]),
    )
}

fn side_filled(spec: &TopologySpec, idx: usize, left: bool) -> LinFormula {
    let y_between = if left {
        LinFormula::and(vec![
            LinFormula::lt(
                LinTerm::var("a").sub(&LinTerm::var("gamma")),
                LinTerm::var("y"),
            ),
            LinFormula::lt(LinTerm::var("y"), LinTerm::var("a")),
        ])
    } else {
        LinFormula::and(vec![
            LinFormula::lt(LinTerm::var("a"), LinTerm::var("y")),
            LinFormula::lt(
                LinTerm::var("y"),
                LinTerm::var("a").add(&LinTerm::var("gamma")),
            ),
        ])
    };
    LinFormula::forall(
        "eps",
        LinFormula::implies(
            spec.domain(idx, "a", "eps"),
            LinFormula::exists(
                "gamma",
                LinFormula::and(vec![
                    LinFormula::lt(LinTerm::constant(rzero()), LinTerm::var("gamma")),
                    LinFormula::forall(
                        "y",
                        LinFormula::implies(
                            LinFormula::and(vec![y_between, spec.space_member("y")]),
                            spec.nbhd_member(idx, "a", "eps", "y"),
                        ),
                    ),
                ]),
            ),
        ),
    )
}

/// Decides whether `cond(a)` holds for every point of the region.
fn holds_on_region(_spec: &TopologySpec, region: &Region, cond: &LinFormula) -> bool {
    let scope = match region {
        Region::Subcell { lo, hi, .. } => LinFormula::and(vec![
            LinFormula::lt(LinTerm::constant(lo.clone()), LinTerm::var("a")),
            LinFormula::lt(LinTerm::var("a"), LinTerm::constant(hi.clone())),
        ]),
        Region::Special { at, .. } => LinFormula::eq(
            LinTerm::var("a"),
            LinTerm::constant(at.clone()),
        ),
    };
    let sentence = LinFormula::forall("a", LinFormula::implies(scope, cond.clone()));
    decide_sentence(&sentence).unwrap_or(false)
}

pub fn region_cell(region: &Region) -> usize {
    match region {
        Region::Subcell { cell, .. } | Region::Special { cell, .. } => *cell,
    }
}

/// Classifies every region into its unique local class.
pub fn classify(spec: &TopologySpec, map: &ShadowMap) -> Vec<(Region, PointClass)> {
    map.regions(spec)
        .into_iter()
        .map(|region| {
            let idx = region_cell(&region);
            let le = holds_on_region(spec, &region, &side_empty(spec, idx, true));
            let re = holds_on_region(spec, &region, &side_empty(spec, idx, false));
            let class = if le && re {
                PointClass::LocallyIsolated
            } else if re {
                debug_assert!(holds_on_region(spec, &region, &side_filled(spec, idx, true)));
                PointClass::LocallyRightClosed
            } else if le {
                debug_assert!(holds_on_region(spec, &region, &side_filled(spec, idx, false)));
                PointClass::LocallyLeftClosed
            } else {
                PointClass::LocallyEuclidean
            };
            (region, class)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CompareEntry {
    pub coarser: bool,
    pub finer: bool,
    pub basis_class: BasisClass,
}

/// `B_a` refines to the affine basis: every defined neighborhood contains
/// an affine trace neighborhood.
fn coarser_formula(spec: &TopologySpec, idx: usize) -> LinFormula {
    // one universal per space component so each elimination stays small
    let per_component = LinFormula::and(
        spec.space
            .components()
            .iter()
            .map(|c| {
                let in_c = match c {
                    SetComponent::Point(p) => {
                        LinFormula::eq(LinTerm::var("y"), LinTerm::constant(p.clone()))
                    }
                    SetComponent::Open(lo, hi) => LinFormula::and(vec![
                        LinFormula::lt(LinTerm::constant(lo.clone()), LinTerm::var("y")),
                        LinFormula::lt(LinTerm::var("y"), LinTerm::constant(hi.clone())),
                    ]),
                };
                let y_near = LinFormula::and(vec![
                    LinFormula::lt(
                        LinTerm::var("a").sub(&LinTerm::var("gamma")),
                        LinTerm::var("y"),
                    ),
                    LinFormula::lt(
                        LinTerm::var("y"),
                        LinTerm::var("a").add(&LinTerm::var("gamma")),
                    ),
                    in_c,
                ]);
                LinFormula::forall(
                    "y",
                    LinFormula::implies(y_near, spec.nbhd_member(idx, "a", "eps", "y")),
                )
            })
            .collect(),
    );
    LinFormula::forall(
        "eps",
        LinFormula::implies(
            spec.domain(idx, "a", "eps"),
            LinFormula::exists(
                "gamma",
                LinFormula::and(vec![
                    LinFormula::lt(LinTerm::constant(rzero()), LinTerm::var("gamma")),
                    per_component,
                ]),
            ),
        ),
    )
}

/// The affine basis refines to `B_a`: every affine trace neighborhood
/// contains a defined neighborhood.
fn finer_formula(spec: &TopologySpec, idx: usize) -> LinFormula {
    let y_near = LinFormula::and(vec![
        LinFormula::lt(
            LinTerm::var("a").sub(&LinTerm::var("gamma")),
            LinTerm::var("y"),
        ),
        LinFormula::lt(
            LinTerm::var("y"),
            LinTerm::var("a").add(&LinTerm::var("gamma")),
        ),
    ]);
    LinFormula::forall(
        "gamma",
        LinFormula::implies(
            LinFormula::lt(LinTerm::constant(rzero()), LinTerm::var("gamma")),
            LinFormula::exists(
                "eps",
                LinFormula::and(vec![
                    spec.domain(idx, "a", "eps"),
                    LinFormula::forall(
                        "y",
                        LinFormula::implies(spec.nbhd_member(idx, "a", "eps", "y"), y_near),
                    ),
                ]),
            ),
        ),
    )
}

/// Compares the defined basis with the affine basis on every region.
pub fn affine_comparison(
    spec: &TopologySpec,
    map: &ShadowMap,
) -> Vec<(Region, CompareEntry)> {
    let classes = classify(spec, map);
    classes
        .into_iter()
        .map(|(region, class)| {
            let idx = region_cell(&region);
            let coarser = holds_on_region(spec, &region, &coarser_formula(spec, idx));
            let finer = holds_on_region(spec, &region, &finer_formula(spec, idx));
            let basis_class = if !finer {
                BasisClass::NonLocal
            } else if coarser {
                BasisClass::Affine
            } else {
                match class {
                    PointClass::LocallyIsolated => BasisClass::Iso,
                    PointClass::LocallyLeftClosed => BasisClass::LeftClosedHalf,
                    PointClass::LocallyRightClosed => BasisClass::RightClosedHalf,
                    // finer but not coarser with a Euclidean shape cannot
                    // happen for monotone one-scale families
                    PointClass::LocallyEuclidean => BasisClass::Affine,
                }
            };
            (
                region,
                CompareEntry {
                    coarser,
                    finer,
                    basis_class,
                },
            )
        })
        .collect()
}
