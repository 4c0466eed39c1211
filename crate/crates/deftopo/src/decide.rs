//! Theorem-level decision procedures: Hausdorff separation, regularity,
//! exceptional sets, the affinizability verdict, definably connected
//! components, and explicit clopen/disconnection witnesses.

use serde::Serialize;

use crate::dsl::TopologySpec;
use crate::geom::{AffineExpr, SemilinearSet, SetComponent};
use crate::lra::{decide_sentence, eliminate_all, LinFormula, LinTerm, LraError};
use crate::rat::{fmt_rat, pow2_neg, rzero, Rat};
use crate::shadow::{
    classify, region_cell, shadow_map, shadows_at, tau_closure, CompareEntry, PointClass, Region,
    ShadowError, ShadowMap,
};

#[derive(Debug, thiserror::Error)]
pub enum DecideError {
    #[error("spec must be validated first")]
    NotValidated,
    #[error("operation requires a Hausdorff spec")]
    NotHausdorff,
    #[error("{0}")]
    Shadow(#[from] ShadowError),
    #[error("linear arithmetic failure: {0}")]
    Lra(#[from] LraError),
    #[error("certificate failure: {0}")]
    Certificate(String),
}

// ---------------------------------------------------------------------------
// Witness and verdict types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct SeparationWitness {
    pub p: String,
    pub q: String,
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct RegularityWitness {
    pub point: String,
    pub eps: String,
}

#[derive(Debug, Clone)]
pub struct ExceptionalSets {
    pub e: SemilinearSet,
    pub a: SemilinearSet,
    pub g: SemilinearSet,
}

impl ExceptionalSets {
    pub fn e_finite(&self) -> bool {
        self.e
            .components()
            .iter()
            .all(|c| matches!(c, SetComponent::Point(_)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RaySide {
    Left,
    Right,
}

/// A generalized ray of the space contained in every small neighborhood of
/// an exceptional point: a one-sided interval abutting the endpoint `at`
/// of the host interval component.
#[derive(Debug, Clone, Serialize)]
pub struct Ray {
    pub side: RaySide,
    pub at: String,
    pub host: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RayEntry {
    pub point: String,
    pub rays: Vec<Ray>,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct RayReport {
    pub entries: Vec<RayEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClopenWitness {
    pub z: SemilinearSet,
    pub is_open: bool,
    pub closure_equals_z: bool,
}

#[derive(Debug, Clone)]
pub enum ComponentsResult {
    Finite(Vec<SemilinearSet>),
    NoFiniteDecomposition {
        disconnected_intervals: Vec<SemilinearSet>,
        clopen: Option<ClopenWitness>,
    },
    NotComputed,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExceptionalJson {
    #[serde(rename = "E")]
    pub e: String,
    #[serde(rename = "A")]
    pub a: String,
    #[serde(rename = "G")]
    pub g: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Conditions {
    pub c3: bool,
    pub c4: bool,
    pub regular_and_finite_components: bool,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ComponentsJson {
    Finite { sets: Vec<String> },
    NoFiniteDecomposition,
    NotComputed,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClopenJson {
    pub set: String,
    pub is_open: bool,
    pub closure_equals_set: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Witnesses {
    pub separation: Option<SeparationWitness>,
    pub regularity: Option<RegularityWitness>,
    pub clopen: Option<ClopenJson>,
    pub disconnected_intervals: Vec<String>,
}

/// The serializable verdict of a full analysis.
#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub hausdorff: bool,
    pub regular: bool,
    pub exceptional: ExceptionalJson,
    pub conditions: Conditions,
    pub affinizable: bool,
    pub components: ComponentsJson,
    pub witnesses: Witnesses,
}

/// Full analysis bundle: the verdict plus the intermediate structures the
/// embedding construction and the oracle need.
#[derive(Debug)]
pub struct Analysis {
    pub verdict: Verdict,
    pub map: Option<ShadowMap>,
    pub comparisons: Vec<(Region, CompareEntry)>,
    pub classes: Vec<(Region, PointClass)>,
    pub exceptional: ExceptionalSets,
    pub rays: RayReport,
    pub components: ComponentsResult,
    /// Sufficient condition of the final theorem: finitely many locally
    /// isolated points and finitely many half-closed points, together with
    /// finitely many components. Implies affinizability.
    pub alt_sufficient: bool,
}

// ---------------------------------------------------------------------------
// Hausdorff
// ---------------------------------------------------------------------------

fn var(name: &str) -> LinTerm {
    LinTerm::var(name)
}

/// Decides Hausdorff separation; on failure extracts a concrete pair of
/// points whose scheduled neighborhoods always intersect.
pub fn check_hausdorff(
    spec: &TopologySpec,
) -> Result<(bool, Option<SeparationWitness>), DecideError> {
    spec.require_validated().map_err(|_| DecideError::NotValidated)?;
    let n = spec.cells.len();
    for i in 0..n {
        for j in i..n {
            let distinct = if i == j {
                LinFormula::or(vec![
                    LinFormula::lt(var("a"), var("b")),
                    LinFormula::lt(var("b"), var("a")),
                ])
            } else {
                LinFormula::True
            };
            let separated = LinFormula::exists(
                "e1",
                LinFormula::and(vec![
                    spec.domain(i, "a", "e1"),
                    LinFormula::exists(
                        "e2",
                        LinFormula::and(vec![
                            spec.domain(j, "b", "e2"),
                            LinFormula::forall(
                                "y",
                                LinFormula::not(LinFormula::and(vec![
                                    spec.nbhd_member(i, "a", "e1", "y"),
                                    spec.nbhd_member(j, "b", "e2", "y"),
                                ])),
                            ),
                        ]),
                    ),
                ]),
            );
            let premise = LinFormula::and(vec![
                spec.cell_member(i, "a"),
                spec.cell_member(j, "b"),
                distinct,
            ]);
            let sentence = LinFormula::forall(
                "a",
                LinFormula::forall("b", LinFormula::implies(premise.clone(), separated.clone())),
            );
            if !decide_sentence(&sentence)? {
                let witness = hausdorff_witness(spec, i, j)
                    .unwrap_or(SeparationWitness {
                        p: "below sampling resolution".into(),
                        q: String::new(),
                    });
                return Ok((false, Some(witness)));
            }
        }
    }
    Ok((true, None))
}

fn hausdorff_witness(spec: &TopologySpec, i: usize, j: usize) -> Option<SeparationWitness> {
    let schedule: Vec<Rat> = (1..=10).map(pow2_neg).collect();
    for p in spec.cell_samples(i, 4) {
        for q in spec.cell_samples(j, 4) {
            if p == q {
                continue;
            }
            let inseparable = schedule.iter().all(|eps| {
                match (spec.nbhd_at(&p, eps), spec.nbhd_at(&q, eps)) {
                    (Some(np), Some(nq)) => !np.intersection(&nq).is_empty(),
                    // outside the valid domain: not evidence of separation
                    _ => true,
                }
            });
            if inseparable {
                return Some(SeparationWitness {
                    p: fmt_rat(&p),
                    q: fmt_rat(&q),
                });
            }
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Regularity
// ---------------------------------------------------------------------------

/// Decides regularity: every neighborhood contains the closure of a smaller
/// one. The verdict is fully symbolic; the witness on failure is confirmed
/// against a shrinking schedule.
pub fn check_regularity(
    spec: &TopologySpec,
    hausdorff: bool,
) -> Result<(bool, Option<RegularityWitness>), DecideError> {
    spec.require_validated().map_err(|_| DecideError::NotValidated)?;
    if !hausdorff {
        return Err(DecideError::NotHausdorff);
    }
    for i in 0..spec.cells.len() {
        // z_member: cy ∈ N_i(a, delta)
        let z_member = spec.nbhd_member(i, "a", "delta", "cy");
        // x ∈ cl(N_i(a,delta)) → x ∈ N_i(a,eps), distributed over the
        // adherence case split per cell of x so each universal is
        // eliminated on a small formula
        let closure_inside = LinFormula::and(
            (0..spec.cells.len())
                .map(|j| {
                    let adh = LinFormula::and(vec![
                        spec.cell_member(j, "x"),
                        LinFormula::forall(
                            "cdelta",
                            LinFormula::implies(
                                spec.domain(j, "x", "cdelta"),
                                LinFormula::exists(
                                    "cy",
                                    LinFormula::and(vec![
                                        spec.nbhd_member(j, "x", "cdelta", "cy"),
                                        z_member.clone(),
                                    ]),
                                ),
                            ),
                        ),
                    ]);
                    LinFormula::forall(
                        "x",
                        LinFormula::implies(adh, spec.nbhd_member(i, "a", "eps", "x")),
                    )
                })
                .collect(),
        );
        let body = LinFormula::implies(
            LinFormula::and(vec![spec.cell_member(i, "a"), spec.domain(i, "a", "eps")]),
            LinFormula::exists(
                "delta",
                LinFormula::and(vec![spec.domain(i, "a", "delta"), closure_inside]),
            ),
        );
        let sentence = LinFormula::forall("a", LinFormula::forall("eps", body));
        if !decide_sentence(&sentence)? {
            let witness = regularity_witness(spec, i);
            return Ok((false, witness));
        }
    }
    Ok((true, None))
}

fn regularity_witness(spec: &TopologySpec, i: usize) -> Option<RegularityWitness> {
    let schedule: Vec<Rat> = (1..=10).map(pow2_neg).collect();
    for a in spec.cell_samples(i, 4) {
        for eps in &schedule {
            let n_eps = match spec.nbhd_at(&a, eps) {
                Some(s) => s,
                None => continue,
            };
            let refuted = schedule.iter().all(|delta| {
                match spec.nbhd_at(&a, delta) {
                    Some(n_delta) => match tau_closure(spec, &n_delta) {
                        Ok(cl) => !cl.is_subset(&n_eps),
                        Err(_) => false,
                    },
                    None => true,
                }
            });
            if refuted {
                return Some(RegularityWitness {
                    point: fmt_rat(&a),
                    eps: fmt_rat(eps),
                });
            }
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Exceptional sets, rays
// ---------------------------------------------------------------------------

/// E = points whose basis does not refine to the affine basis; A = points
/// where the bases are inequivalent; G = E when E is finite.
pub fn exceptional_sets(comparisons: &[(Region, CompareEntry)]) -> ExceptionalSets {
    let mut e = SemilinearSet::empty();
    let mut a = SemilinearSet::empty();
    for (region, entry) in comparisons {
        if !entry.coarser {
            e = e.union(&region.as_set());
        }
        if !(entry.coarser && entry.finer) {
            a = a.union(&region.as_set());
        }
    }
    let g = if e
        .components()
        .iter()
        .all(|c| matches!(c, SetComponent::Point(_)))
    {
        e.clone()
    } else {
        SemilinearSet::empty()
    };
    ExceptionalSets { e, a, g }
}

/// Tests whether every valid neighborhood of `p` contains a one-sided
/// interval abutting `s` (from the right when `from_right`).
pub fn has_ray(spec: &TopologySpec, idx: usize, p: &Rat, s: &Rat, from_right: bool) -> bool {
    let p_term = LinTerm::constant(p.clone());
    let s_term = LinTerm::constant(s.clone());
    let y_in_ray = if from_right {
        LinFormula::and(vec![
            LinFormula::lt(s_term.clone(), var("y")),
            LinFormula::lt(var("y"), s_term.add(&var("gamma"))),
        ])
    } else {
        LinFormula::and(vec![
            LinFormula::lt(s_term.sub(&var("gamma")), var("y")),
            LinFormula::lt(var("y"), s_term.clone()),
        ])
    };
    let sentence = LinFormula::forall(
        "eps",
        LinFormula::implies(
            spec.domain(idx, "a", "eps").substitute("a", &p_term),
            LinFormula::exists(
                "gamma",
                LinFormula::and(vec![
                    LinFormula::lt(LinTerm::constant(rzero()), var("gamma")),
                    LinFormula::forall(
                        "y",
                        LinFormula::implies(
                            LinFormula::and(vec![y_in_ray.clone(), spec.space_member("y")]),
                            spec.nbhd_member(idx, "a", "eps", "y").substitute("a", &p_term),
                        ),
                    ),
                ]),
            ),
        ),
    );
    decide_sentence(&sentence).unwrap_or(false)
}

/// Enumerates, for every isolated exceptional point, the generalized rays
/// its small neighborhoods contain.
pub fn ray_report(
    spec: &TopologySpec,
    comparisons: &[(Region, CompareEntry)],
) -> Result<RayReport, DecideError> {
    let mut entries = Vec::new();
    for (region, entry) in comparisons {
        if entry.coarser && entry.finer {
            continue;
        }
        let p = match region {
            Region::Special { at, .. } => at.clone(),
            Region::Subcell { .. } => continue,
        };
        let idx = region_cell(region);
        let mut rays = Vec::new();
        for s in shadows_at(spec, &p)? {
            if s == p {
                continue;
            }
            // a ray abutting s from the right is a left generalized ray of
            // the interval component starting at s, and dually
            if has_ray(spec, idx, &p, &s, true) {
                if let Some((lo, hi)) = host_interval(spec, &s, true) {
                    rays.push(Ray {
                        side: RaySide::Left,
                        at: fmt_rat(&s),
                        host: format!("({},{})", fmt_rat(&lo), fmt_rat(&hi)),
                    });
                }
            }
            if has_ray(spec, idx, &p, &s, false) {
                if let Some((lo, hi)) = host_interval(spec, &s, false) {
                    rays.push(Ray {
                        side: RaySide::Right,
                        at: fmt_rat(&s),
                        host: format!("({},{})", fmt_rat(&lo), fmt_rat(&hi)),
                    });
                }
            }
        }
        if !rays.is_empty() {
            entries.push(RayEntry {
                point: fmt_rat(&p),
                rays,
            });
        }
    }
    Ok(RayReport { entries })
}

/// The interval component of the space whose left (resp. right) endpoint is
/// `s`; this hosts a generalized ray abutting `s`.
fn host_interval(spec: &TopologySpec, s: &Rat, left_end: bool) -> Option<(Rat, Rat)> {
    spec.space.components().iter().find_map(|c| match c {
        SetComponent::Open(a, b) if (left_end && a == s) || (!left_end && b == s) => {
            Some((a.clone(), b.clone()))
        }
        _ => None,
    })
}

// ---------------------------------------------------------------------------
// Condition (4): almost tau-subset-of-affine with the finite set G removed
// ---------------------------------------------------------------------------

fn restricted_coarser_formula(spec: &TopologySpec, idx: usize, g: &[Rat]) -> LinFormula {
    // one universal per space component so each elimination stays small
    let per_component = LinFormula::and(
        spec.space
            .components()
            .iter()
            .map(|c| {
                let in_c = match c {
                    SetComponent::Point(p) => {
                        LinFormula::eq(var("y"), LinTerm::constant(p.clone()))
                    }
                    SetComponent::Open(lo, hi) => LinFormula::and(vec![
                        LinFormula::lt(LinTerm::constant(lo.clone()), var("y")),
                        LinFormula::lt(var("y"), LinTerm::constant(hi.clone())),
                    ]),
                };
                let mut y_near = vec![
                    LinFormula::lt(var("a").sub(&var("gamma")), var("y")),
                    LinFormula::lt(var("y"), var("a").add(&var("gamma"))),
                    in_c,
                ];
                for q in g {
                    y_near.push(LinFormula::not(LinFormula::eq(
                        var("y"),
                        LinTerm::constant(q.clone()),
                    )));
                }
                LinFormula::forall(
                    "y",
                    LinFormula::implies(
                        LinFormula::and(y_near),
                        spec.nbhd_member(idx, "a", "eps", "y"),
                    ),
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
                    LinFormula::lt(LinTerm::constant(rzero()), var("gamma")),
                    per_component,
                ]),
            ),
        ),
    )
}

/// Condition (4) of the main equivalence, verified independently with
/// G = E: on X minus G, every defined neighborhood basis refines to the
/// affine basis of the reduced space.
pub fn check_condition_4(
    spec: &TopologySpec,
    regions: &[Region],
    exceptional: &ExceptionalSets,
) -> Result<bool, DecideError> {
    let g: Vec<Rat> = exceptional
        .g
        .components()
        .iter()
        .filter_map(|c| match c {
            SetComponent::Point(p) => Some(p.clone()),
            _ => None,
        })
        .collect();
    for region in regions {
        if let Region::Special { at, .. } = region {
            if g.contains(at) {
                continue;
            }
        }
        let idx = region_cell(region);
        let cond = restricted_coarser_formula(spec, idx, &g);
        let scope = match region {
            Region::Subcell { lo, hi, .. } => LinFormula::and(vec![
                LinFormula::lt(LinTerm::constant(lo.clone()), var("a")),
                LinFormula::lt(var("a"), LinTerm::constant(hi.clone())),
            ]),
            Region::Special { at, .. } => {
                LinFormula::eq(var("a"), LinTerm::constant(at.clone()))
            }
        };
        let sentence = LinFormula::forall("a", LinFormula::implies(scope, cond));
        if !decide_sentence(&sentence)? {
            return Ok(false);
        }
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// Clopen witnesses and components
// ---------------------------------------------------------------------------

/// Checks that `z` is open: every point of it has a neighborhood inside it.
fn is_open_set(spec: &TopologySpec, z: &SemilinearSet) -> bool {
    let z_member_x = crate::dsl::set_member_formula(z, "x");
    let z_member_y = crate::dsl::set_member_formula(z, "y");
    // split per cell: on each cell the interior condition is checked
    // independently, keeping every elimination small
    (0..spec.cells.len()).all(|i| {
        let inner = LinFormula::exists(
            "eps",
            LinFormula::and(vec![
                spec.domain(i, "x", "eps"),
                LinFormula::forall(
                    "y",
                    LinFormula::implies(
                        spec.nbhd_member(i, "x", "eps", "y"),
                        z_member_y.clone(),
                    ),
                ),
            ]),
        );
        let sentence = LinFormula::forall(
            "x",
            LinFormula::implies(
                LinFormula::and(vec![z_member_x.clone(), spec.cell_member(i, "x")]),
                inner,
            ),
        );
        decide_sentence(&sentence).unwrap_or(false)
    })
}

/// Verifies a candidate clopen set exactly; returns it only when certified.
fn certify_clopen(spec: &TopologySpec, z: &SemilinearSet) -> Option<ClopenWitness> {
    if z.is_empty() || *z == spec.space || !z.is_subset(&spec.space) {
        return None;
    }
    let closure_equals_z = tau_closure(spec, z).ok()? == *z;
    if !closure_equals_z {
        return None;
    }
    let is_open = is_open_set(spec, z);
    if is_open {
        Some(ClopenWitness {
            z: z.clone(),
            is_open,
            closure_equals_z,
        })
    } else {
        None
    }
}

/// Constructs a clopen witness from a uniformly half-closed subcell with at
/// most two generic shadow functions: the single-interval pattern for one
/// function, the paired pattern oriented by the image side's closedness
/// for two. Returns a witness only when its certificate verifies.
pub fn clopen_witness(
    spec: &TopologySpec,
    map: &ShadowMap,
    classes: &[(Region, PointClass)],
    cell_idx: usize,
) -> Option<ClopenWitness> {
    let entry = map.cells.get(cell_idx)?.as_ref()?;
    for sc in &entry.subcells {
        let class = classes.iter().find_map(|(r, c)| match r {
            Region::Subcell { cell, lo, hi } if *cell == cell_idx && *lo == sc.lo && *hi == sc.hi => {
                Some(*c)
            }
            _ => None,
        })?;
        if !matches!(
            class,
            PointClass::LocallyLeftClosed | PointClass::LocallyRightClosed
        ) {
            continue;
        }
        if sc.funcs.len() > 2 {
            continue;
        }
        let span = &sc.hi - &sc.lo;
        let p = &sc.lo + &span / Rat::from_integer(4.into());
        let q = &sc.lo + &span / Rat::from_integer(2.into());
        let base = match class {
            PointClass::LocallyLeftClosed => SemilinearSet::parse(&format!(
                "[{},{})",
                fmt_rat(&p),
                fmt_rat(&q)
            ))
            .unwrap(),
            _ => SemilinearSet::parse(&format!("({},{}]", fmt_rat(&p), fmt_rat(&q))).unwrap(),
        };
        let z = if sc.funcs.len() == 2 {
            let f2: &AffineExpr = &sc.funcs[1];
            let (ip, iq) = (f2.eval(&p, &rzero()), f2.eval(&q, &rzero()));
            let (lo2, hi2) = if ip <= iq { (ip, iq) } else { (iq, ip) };
            let mid2 = crate::rat::midpoint(&lo2, &hi2);
            let img_class = classes.iter().find_map(|(r, c)| match r {
                Region::Subcell { lo, hi, .. } if *lo < mid2 && mid2 < *hi => Some(*c),
                _ => None,
            })?;
            let part2 = match img_class {
                PointClass::LocallyLeftClosed => {
                    SemilinearSet::parse(&format!("[{},{})", fmt_rat(&lo2), fmt_rat(&hi2))).unwrap()
                }
                PointClass::LocallyRightClosed => {
                    SemilinearSet::parse(&format!("({},{}]", fmt_rat(&lo2), fmt_rat(&hi2))).unwrap()
                }
                _ => return None,
            };
            base.union(&part2)
        } else {
            base
        };
        if let Some(w) = certify_clopen(spec, &z) {
            return Some(w);
        }
    }
    None
}

/// Definably connected components via the gluing graph of analysis regions:
/// two regions join when either meets the closure of the other. Each
/// resulting component is certified clopen. When E is infinite the tool
/// reports witnesses instead of a decomposition.
pub fn components(
    spec: &TopologySpec,
    map: &ShadowMap,
    classes: &[(Region, PointClass)],
    exceptional: &ExceptionalSets,
) -> Result<ComponentsResult, DecideError> {
    if !exceptional.e_finite() {
        let disconnected_intervals: Vec<SemilinearSet> = classes
            .iter()
            .filter_map(|(r, c)| match r {
                Region::Subcell { .. } if *c != PointClass::LocallyEuclidean => Some(r.as_set()),
                _ => None,
            })
            .collect();
        let clopen = (0..spec.cells.len())
            .find_map(|idx| clopen_witness(spec, map, classes, idx));
        return Ok(ComponentsResult::NoFiniteDecomposition {
            disconnected_intervals,
            clopen,
        });
    }

    let regions = map.regions(spec);
    let sets: Vec<SemilinearSet> = regions.iter().map(|r| r.as_set()).collect();
    let closures: Vec<SemilinearSet> = sets
        .iter()
        .map(|s| tau_closure(spec, s))
        .collect::<Result<_, _>>()?;

    // union-find over regions
    let mut parent: Vec<usize> = (0..regions.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..regions.len() {
        for j in (i + 1)..regions.len() {
            let touching = !closures[i].intersection(&sets[j]).is_empty()
                || !closures[j].intersection(&sets[i]).is_empty();
            if touching {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri] = rj;
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, SemilinearSet> = Default::default();
    for i in 0..regions.len() {
        let root = find(&mut parent, i);
        let entry = groups.entry(root).or_insert_with(SemilinearSet::empty);
        *entry = entry.union(&sets[i]);
    }
    let mut comps: Vec<SemilinearSet> = groups.into_values().collect();
    comps.sort_by_key(|c| c.bounds().map(|(lo, _)| lo));

    // certification: each component is clopen, and no witness-grammar
    // clopen set splits it
    for c in &comps {
        let cl = tau_closure(spec, c)?;
        if cl != *c {
            return Err(DecideError::Certificate(format!(
                "component {} is not closed (closure {})",
                c.render(),
                cl.render()
            )));
        }
        if !is_open_set(spec, c) {
            return Err(DecideError::Certificate(format!(
                "component {} is not open",
                c.render()
            )));
        }
    }
    for idx in 0..spec.cells.len() {
        if let Some(w) = clopen_witness(spec, map, classes, idx) {
            if let Some(c) = comps.iter().find(|c| w.z.is_subset(c)) {
                if w.z != *c {
                    return Err(DecideError::Certificate(format!(
                        "component {} split by clopen set {}",
                        c.render(),
                        w.z.render()
                    )));
                }
            }
        }
    }
    Ok(ComponentsResult::Finite(comps))
}

// ---------------------------------------------------------------------------
// Full analysis
// ---------------------------------------------------------------------------

fn components_json(c: &ComponentsResult) -> ComponentsJson {
    match c {
        ComponentsResult::Finite(sets) => ComponentsJson::Finite {
            sets: sets.iter().map(|s| s.render()).collect(),
        },
        ComponentsResult::NoFiniteDecomposition { .. } => ComponentsJson::NoFiniteDecomposition,
        ComponentsResult::NotComputed => ComponentsJson::NotComputed,
    }
}

/// Runs every decision procedure and assembles the verdict.
pub fn analyze(spec: &TopologySpec) -> Result<Analysis, DecideError> {
    spec.require_validated().map_err(|_| DecideError::NotValidated)?;
    let (hausdorff, separation) = check_hausdorff(spec)?;
    if !hausdorff {
        let exceptional = ExceptionalSets {
            e: SemilinearSet::empty(),
            a: SemilinearSet::empty(),
            g: SemilinearSet::empty(),
        };
        let verdict = Verdict {
            hausdorff: false,
            regular: false,
            exceptional: ExceptionalJson {
                e: "∅".into(),
                a: "∅".into(),
                g: "∅".into(),
            },
            conditions: Conditions {
                c3: false,
                c4: false,
                regular_and_finite_components: false,
            },
            affinizable: false,
            components: ComponentsJson::NotComputed,
            witnesses: Witnesses {
                separation,
                regularity: None,
                clopen: None,
                disconnected_intervals: vec![],
            },
        };
        return Ok(Analysis {
            verdict,
            map: None,
            comparisons: vec![],
            classes: vec![],
            exceptional,
            rays: RayReport::default(),
            components: ComponentsResult::NotComputed,
            alt_sufficient: false,
        });
    }

    let map = shadow_map(spec)?;
    let classes = classify(spec, &map);
    let comparisons = crate::shadow::affine_comparison(spec, &map);
    let exceptional = exceptional_sets(&comparisons);
    let rays = ray_report(spec, &comparisons)?;
    let (regular, regularity_witness) = check_regularity(spec, true)?;
    let comps = components(spec, &map, &classes, &exceptional)?;

    let c3 = exceptional.e_finite();
    let regions: Vec<Region> = map.regions(spec);
    let c4 = check_condition_4(spec, &regions, &exceptional)?;
    let finite_components = matches!(comps, ComponentsResult::Finite(_));
    let regular_and_finite_components = regular && finite_components;
    let affinizable = c3;

    // final-theorem sufficient condition: finitely many locally isolated
    // points and finitely many half-closed points, plus finite components
    let iso_finite = classes.iter().all(|(r, c)| {
        *c != PointClass::LocallyIsolated || matches!(r, Region::Special { .. })
    });
    let half_finite = classes.iter().all(|(r, c)| {
        !matches!(
            c,
            PointClass::LocallyLeftClosed | PointClass::LocallyRightClosed
        ) || matches!(r, Region::Special { .. })
    });
    let alt_sufficient = iso_finite && half_finite && finite_components;

    let (clopen_json, disconnected) = match &comps {
        ComponentsResult::NoFiniteDecomposition {
            disconnected_intervals,
            clopen,
        } => (
            clopen.as_ref().map(|w| ClopenJson {
                set: w.z.render(),
                is_open: w.is_open,
                closure_equals_set: w.closure_equals_z,
            }),
            disconnected_intervals.iter().map(|s| s.render()).collect(),
        ),
        _ => (None, vec![]),
    };

    let verdict = Verdict {
        hausdorff,
        regular,
        exceptional: ExceptionalJson {
            e: exceptional.e.render(),
            a: exceptional.a.render(),
            g: exceptional.g.render(),
        },
        conditions: Conditions {
            c3,
            c4,
            regular_and_finite_components,
        },
        affinizable,
        components: components_json(&comps),
        witnesses: Witnesses {
            separation: None,
            regularity: regularity_witness,
            clopen: clopen_json,
            disconnected_intervals: disconnected,
        },
    };
    Ok(Analysis {
        verdict,
        map: Some(map),
        comparisons,
        classes,
        exceptional,
        rays,
        components: comps,
        alt_sufficient,
    })
}

/// Quantifier-free reduction helper shared with tests: decides whether a
/// closed formula holds after full elimination.
pub fn holds(f: &LinFormula) -> bool {
    !eliminate_all(f).is_false()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;

    fn fixture(name: &str) -> TopologySpec {
        let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
        let mut spec = parse(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert!(spec.validate().ok, "{name} must validate");
        spec
    }

    #[test]
    fn hausdorff_verdicts() {
        for name in ["threecopy.top", "infty.top", "chain.top", "lex.top"] {
            let spec = fixture(name);
            let (h, _) = check_hausdorff(&spec).unwrap();
            assert!(h, "{name} should be Hausdorff");
        }
        let spec = fixture("nonhaus.top");
        let (h, w) = check_hausdorff(&spec).unwrap();
        assert!(!h);
        let w = w.unwrap();
        assert_eq!((w.p.as_str(), w.q.as_str()), ("2", "3"));
    }

    #[test]
    fn regularity_verdicts() {
        let spec = fixture("affine.top");
        assert!(check_regularity(&spec, true).unwrap().0);

        let spec = fixture("lex.top");
        assert!(check_regularity(&spec, true).unwrap().0);

        let spec = fixture("threecopy.top");
        let (r, w) = check_regularity(&spec, true).unwrap();
        assert!(!r);
        assert!(w.is_some());
    }

    #[test]
    fn exceptional_sets_examples() {
        let spec = fixture("infty.top");
        let map = shadow_map(&spec).unwrap();
        let cmp = crate::shadow::affine_comparison(&spec, &map);
        let exc = exceptional_sets(&cmp);
        assert_eq!(exc.e.render(), "∅");
        assert_eq!(exc.a.render(), "{2}");
        assert_eq!(exc.g.render(), "∅");

        let spec = fixture("halfopen.top");
        let map = shadow_map(&spec).unwrap();
        let cmp = crate::shadow::affine_comparison(&spec, &map);
        let exc = exceptional_sets(&cmp);
        assert_eq!(exc.e.render(), "(0,1)");
        assert_eq!(exc.a.render(), "(0,1)");
        assert!(!exc.e_finite());

        let spec = fixture("affine.top");
        let map = shadow_map(&spec).unwrap();
        let cmp = crate::shadow::affine_comparison(&spec, &map);
        let exc = exceptional_sets(&cmp);
        assert_eq!(exc.e.render(), "∅");
        assert_eq!(exc.a.render(), "∅");
    }

    #[test]
    fn affinizability_verdicts() {
        let spec = fixture("infty.top");
        let a = analyze(&spec).unwrap();
        assert!(a.verdict.affinizable);
        assert!(a.verdict.conditions.c3 && a.verdict.conditions.c4);

        let spec = fixture("threecopy.top");
        let a = analyze(&spec).unwrap();
        assert!(!a.verdict.affinizable);
        assert!(!a.verdict.conditions.c3 && !a.verdict.conditions.c4);
        assert!(a.verdict.hausdorff);
        assert!(!a.verdict.regular);

        let spec = fixture("lex.top");
        let a = analyze(&spec).unwrap();
        assert!(!a.verdict.affinizable);
        assert!(a.verdict.regular);
    }

    #[test]
    fn components_examples() {
        let spec = fixture("infty.top");
        let a = analyze(&spec).unwrap();
        match &a.components {
            ComponentsResult::Finite(sets) => {
                assert_eq!(sets.len(), 1);
                assert_eq!(sets[0], spec.space);
            }
            other => panic!("expected one component, got {other:?}"),
        }

        let spec = fixture("two_cells.top");
        let a = analyze(&spec).unwrap();
        match &a.components {
            ComponentsResult::Finite(sets) => {
                assert_eq!(sets.len(), 2);
                assert_eq!(sets[0].render(), "(0,1)");
                assert_eq!(sets[1].render(), "(2,3)");
            }
            other => panic!("expected two components, got {other:?}"),
        }

        let spec = fixture("halfopen.top");
        let a = analyze(&spec).unwrap();
        match &a.components {
            ComponentsResult::NoFiniteDecomposition { clopen, .. } => {
                let w = clopen.as_ref().expect("clopen witness");
                assert_eq!(w.z.render(), "[1/4,1/2)");
                assert!(w.is_open && w.closure_equals_z);
            }
            other => panic!("expected no finite decomposition, got {other:?}"),
        }
    }

    #[test]
    fn threecopy_disconnected_witness_includes_middle_cell() {
        let spec = fixture("threecopy.top");
        let a = analyze(&spec).unwrap();
        match &a.components {
            ComponentsResult::NoFiniteDecomposition {
                disconnected_intervals,
                ..
            } => {
                assert!(disconnected_intervals
                    .iter()
                    .any(|s| s.render() == "(1,2)"));
            }
            other => panic!("expected no finite decomposition, got {other:?}"),
        }
    }

    #[test]
    fn lex_clopen_witness() {
        let spec = fixture("lex.top");
        let a = analyze(&spec).unwrap();
        match &a.components {
            ComponentsResult::NoFiniteDecomposition { clopen, .. } => {
                let w = clopen.as_ref().expect("clopen witness");
                assert_eq!(w.z.render(), "(1/4,1/2] ∪ [9/4,5/2)");
            }
            other => panic!("expected no finite decomposition, got {other:?}"),
        }
    }

    #[test]
    fn infty_ray_report() {
        let spec = fixture("infty.top");
        let a = analyze(&spec).unwrap();
        assert_eq!(a.rays.entries.len(), 1);
        let entry = &a.rays.entries[0];
        assert_eq!(entry.point, "2");
        let mut descr: Vec<(RaySide, &str)> =
            entry.rays.iter().map(|r| (r.side, r.at.as_str())).collect();
        descr.sort_by_key(|(_, at)| at.parse::<i64>().unwrap());
        assert_eq!(descr, vec![(RaySide::Left, "0"), (RaySide::Right, "4")]);
    }
}
