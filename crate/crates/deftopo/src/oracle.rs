//! Brute-force cross-checker: finite sampling with shrinking scale
//! schedules approximating closures, shadows, and connectivity, used to
//! validate the symbolic results at desk scale. Sampling guarantees are
//! one-sided: a scheduled check can miss behaviour below its resolution,
//! so a discrepancy is emitted only on a proven exact disagreement.

use serde_json::json;

use crate::decide::{Analysis, ComponentsResult};
use crate::dsl::{CellKind, TopologySpec};
use crate::geom::{SemilinearSet, SetComponent};
use crate::rat::{fmt_rat, pow2_neg, rint, Rat};
use crate::shadow::{shadows_at, tau_closure, ShadowError};

/// Finite rational sample of the space plus a shrinking scale schedule.
#[derive(Debug, Clone)]
pub struct SampleGrid {
    pub points: Vec<Rat>,
    pub schedule: Vec<Rat>,
}

impl SampleGrid {
    /// Uniform grid at spacing `2^-resolution` restricted to the space,
    /// together with the near-boundary sample points, and the schedule
    /// `2^-1 … 2^-depth`.
    pub fn build(spec: &TopologySpec, resolution: u32, depth: u32) -> SampleGrid {
        let h = pow2_neg(resolution);
        let mut points: Vec<Rat> = spec.space_samples(2);
        for comp in spec.space.components() {
            match comp {
                SetComponent::Point(p) => points.push(p.clone()),
                SetComponent::Open(a, b) => {
                    // multiples of h strictly inside (a, b)
                    let mut j = (a / &h).floor() + rint(1);
                    loop {
                        let q = &j * &h;
                        if q >= *b {
                            break;
                        }
                        if q > *a {
                            points.push(q);
                        }
                        j += rint(1);
                    }
                }
            }
        }
        points.sort();
        points.dedup();
        let schedule = (1..=depth).map(pow2_neg).collect();
        SampleGrid { points, schedule }
    }
}

/// A proven exact disagreement between a symbolic result and the sampled
/// approximation at a grid point.
#[derive(Debug, Clone)]
pub struct Discrepancy {
    pub check: String,
    pub location: String,
    pub symbolic: String,
    pub sampled: String,
}

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("{0}")]
    Shadow(#[from] ShadowError),
}

/// Scales from the schedule that are valid at `p`.
fn valid_schedule<'a>(
    spec: &TopologySpec,
    grid_schedule: &'a [Rat],
    p: &Rat,
) -> Vec<&'a Rat> {
    let idx = match spec.cell_of(p) {
        Some(i) => i,
        None => return Vec::new(),
    };
    let dom = spec.domain(idx, "a", "eps");
    grid_schedule
        .iter()
        .filter(|eps| {
            let mut asg = std::collections::BTreeMap::new();
            asg.insert("a".to_string(), p.clone());
            asg.insert("eps".to_string(), (*eps).clone());
            dom.eval(&asg).unwrap_or(false)
        })
        .collect()
}

/// Marks a grid point adherent to `z` when every scheduled neighborhood
/// meets `z`; compares against the symbolic closure. Schedule adherence is
/// necessary at resolution: a symbolic closure point that fails it is a
/// proven disagreement, while spurious sampled adherence is not.
pub fn brute_closure(
    spec: &TopologySpec,
    z: &SemilinearSet,
    grid: &SampleGrid,
) -> Result<(Vec<Rat>, Vec<Discrepancy>), OracleError> {
    let closure = tau_closure(spec, z)?;
    let mut adherent = Vec::new();
    let mut discrepancies = Vec::new();
    for p in &grid.points {
        let scales = valid_schedule(spec, &grid.schedule, p);
        let sampled = if scales.is_empty() {
            z.contains(p)
        } else {
            scales.iter().all(|eps| {
                spec.nbhd_at(p, eps)
                    .map(|n| !n.intersection(z).is_empty())
                    .unwrap_or(false)
            })
        };
        if sampled {
            adherent.push(p.clone());
        }
        if closure.contains(p) && !sampled {
            discrepancies.push(Discrepancy {
                check: "closure".into(),
                location: fmt_rat(p),
                symbolic: format!("{} in closure of {}", fmt_rat(p), z.render()),
                sampled: "some scheduled neighborhood misses the set".into(),
            });
        }
    }
    Ok((adherent, discrepancies))
}

fn extrapolate(v_prev: &Rat, e_prev: &Rat, v_last: &Rat, e_last: &Rat) -> Rat {
    // endpoints are affine in the scale, so two samples determine the limit
    v_last + &(&(v_last - v_prev) * &(e_last / &(e_prev - e_last)))
}

fn endpoints(s: &SemilinearSet) -> Vec<(Rat, Rat)> {
    s.components()
        .iter()
        .map(|c| match c {
            SetComponent::Point(p) => (p.clone(), p.clone()),
            SetComponent::Open(a, b) => (a.clone(), b.clone()),
        })
        .collect()
}

/// Intersects the affine closures of the scheduled neighborhoods of `p`
/// and extrapolates the component endpoints to scale zero; the stabilized
/// endpoint set is compared exactly with the symbolic shadow set.
pub fn brute_shadows(
    spec: &TopologySpec,
    p: &Rat,
    schedule: &[Rat],
) -> Result<(Vec<Rat>, Vec<Discrepancy>), OracleError> {
    let mut symbolic = shadows_at(spec, p)?;
    symbolic.sort();

    let scales = valid_schedule(spec, schedule, p);
    let mut running: Option<SemilinearSet> = None;
    let mut history: Vec<(Rat, SemilinearSet)> = Vec::new();
    for eps in &scales {
        if let Some(n) = spec.nbhd_at(p, eps) {
            let cl = n.affine_closure();
            let next = match &running {
                Some(r) => r.intersection(&cl),
                None => cl,
            };
            running = Some(next.clone());
            history.push(((*eps).clone(), next));
        }
    }

    let mut sampled: Vec<Rat> = match history.len() {
        0 => vec![p.clone()],
        1 => endpoints(&history[0].1)
            .into_iter()
            .flat_map(|(a, b)| [a, b])
            .collect(),
        _ => {
            let (e_prev, s_prev) = &history[history.len() - 2];
            let (e_last, s_last) = &history[history.len() - 1];
            let ep = endpoints(s_prev);
            let el = endpoints(s_last);
            if ep.len() == el.len() {
                ep.iter()
                    .zip(&el)
                    .flat_map(|((lo_p, hi_p), (lo_l, hi_l))| {
                        [
                            extrapolate(lo_p, e_prev, lo_l, e_last),
                            extrapolate(hi_p, e_prev, hi_l, e_last),
                        ]
                    })
                    .collect()
            } else {
                // the component pattern has not stabilized at this
                // resolution; extrapolation would be unsound
                el.into_iter().flat_map(|(a, b)| [a, b]).collect()
            }
        }
    };
    sampled.sort();
    sampled.dedup();

    let mut discrepancies = Vec::new();
    let stable = history.len() >= 2
        && endpoints(&history[history.len() - 2].1).len()
            == endpoints(&history[history.len() - 1].1).len();
    if stable && sampled != symbolic {
        discrepancies.push(Discrepancy {
            check: "shadows".into(),
            location: fmt_rat(p),
            symbolic: format!(
                "{{{}}}",
                symbolic.iter().map(fmt_rat).collect::<Vec<_>>().join(", ")
            ),
            sampled: format!(
                "{{{}}}",
                sampled.iter().map(fmt_rat).collect::<Vec<_>>().join(", ")
            ),
        });
    }
    Ok((sampled, discrepancies))
}

/// Partitions the grid by chain adjacency: consecutive grid points are
/// joined when the open gap between them lies in the space and each point
/// is scheduled-adherent to that gap. The partition must refine the
/// symbolic component decomposition — merging two symbolic components is a
/// proven disagreement.
pub fn brute_components(
    spec: &TopologySpec,
    grid: &SampleGrid,
    symbolic: &ComponentsResult,
) -> (Vec<Vec<Rat>>, Vec<Discrepancy>) {
    let adheres_to_gap = |p: &Rat, gap: &SemilinearSet| -> bool {
        let scales = valid_schedule(spec, &grid.schedule, p);
        !scales.is_empty()
            && scales.iter().all(|eps| {
                spec.nbhd_at(p, eps)
                    .map(|n| !n.intersection(gap).is_empty() || gap.contains(p))
                    .unwrap_or(false)
            })
    };

    let n = grid.points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    for i in 0..n.saturating_sub(1) {
        let (p, q) = (&grid.points[i], &grid.points[i + 1]);
        let gap = SemilinearSet::open(p.clone(), q.clone());
        if !gap.is_subset(&spec.space) {
            continue;
        }
        if adheres_to_gap(p, &gap) && adheres_to_gap(q, &gap) {
            let (rp, rq) = (find(&mut parent, i), find(&mut parent, i + 1));
            parent[rp] = rq;
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<Rat>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(grid.points[i].clone());
    }
    let mut partition: Vec<Vec<Rat>> = groups.into_values().collect();
    partition.sort_by(|a, b| a[0].cmp(&b[0]));

    let mut discrepancies = Vec::new();
    if let ComponentsResult::Finite(sets) = symbolic {
        for part in &partition {
            let mut hit: Option<usize> = None;
            for p in part {
                if let Some(j) = sets.iter().position(|s| s.contains(p)) {
                    match hit {
                        None => hit = Some(j),
                        Some(prev) if prev != j => {
                            discrepancies.push(Discrepancy {
                                check: "components".into(),
                                location: fmt_rat(p),
                                symbolic: format!(
                                    "{} and {} are distinct components",
                                    sets[prev].render(),
                                    sets[j].render()
                                ),
                                sampled: "one grid component spans both".into(),
                            });
                            break;
                        }
                        _ => {}
                    }
                }
            }
        }
    }
    (partition, discrepancies)
}

/// Full cross-validation report.
#[derive(Debug)]
pub struct OracleReport {
    pub resolution: u32,
    pub schedule: Vec<Rat>,
    pub checks: Vec<String>,
    pub discrepancies: Vec<Discrepancy>,
}

impl OracleReport {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "resolution": self.resolution,
            "schedule": self.schedule.iter().map(fmt_rat).collect::<Vec<_>>(),
            "checks": self.checks,
            "discrepancies": self.discrepancies.iter().map(|d| json!({
                "check": d.check,
                "location": d.location,
                "symbolic": d.symbolic,
                "sampled": d.sampled,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Runs every brute-force check against the symbolic analysis: closures of
/// one canonical subset per cell, shadow sets at all near-boundary sample
/// points, and the grid component partition.
pub fn cross_validate(
    spec: &TopologySpec,
    analysis: &Analysis,
    resolution: u32,
    depth: u32,
) -> Result<OracleReport, OracleError> {
    let grid = SampleGrid::build(spec, resolution, depth);
    let mut checks = Vec::new();
    let mut discrepancies = Vec::new();

    for cell in &spec.cells {
        let z = match &cell.kind {
            CellKind::IsolPoint(p) => SemilinearSet::point(p.clone()),
            CellKind::OpenCell(a, b) => {
                let quarter = &(b - a) / &rint(4);
                SemilinearSet::open(a + &quarter, a + &quarter + &quarter)
            }
        };
        checks.push(format!("closure of {}", z.render()));
        let (_, d) = brute_closure(spec, &z, &grid)?;
        discrepancies.extend(d);
    }

    for p in spec.space_samples(2) {
        checks.push(format!("shadows at {}", fmt_rat(&p)));
        let (_, d) = brute_shadows(spec, &p, &grid.schedule)?;
        discrepancies.extend(d);
    }

    checks.push("component partition refinement".into());
    let (_, d) = brute_components(spec, &grid, &analysis.components);
    discrepancies.extend(d);

    Ok(OracleReport {
        resolution,
        schedule: grid.schedule,
        checks,
        discrepancies,
    })
}
