//! Seeded generator of small validated Hausdorff topology specs, used by
//! the randomized consistency sweeps. Specs are assembled from building
//! blocks that are separable by construction: Euclidean and half-closed
//! interval cells, and isolated points optionally glued to cell endpoints
//! by one-sided rays (each endpoint claimed by at most one point).

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::dsl::{Cell, CellKind, NbhdTemplate, TopologySpec};
use crate::geom::{AffineExpr, IntervalPiece, SemilinearSet, SetComponent};
use crate::rat::{rint, rzero, Rat};

fn expr(coef_a: i64, coef_eps_num: i64, coef_eps_den: i64, constant: &Rat) -> AffineExpr {
    AffineExpr {
        coef_a: rint(coef_a),
        coef_eps: Rat::new(coef_eps_num.into(), coef_eps_den.into()),
        constant: constant.clone(),
    }
}

#[derive(Clone, Copy)]
enum IntervalStyle {
    Euclidean,
    LeftClosed,
    RightClosed,
}

/// Deterministically generates one validated spec from `(seed, index)`.
pub fn generate(seed: u64, index: u64) -> TopologySpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b97f4a7c15) ^ index);

    let n_cells = rng.gen_range(1..=4usize);
    // slot i occupies [3i, 3i+2]: intervals are (3i, 3i+2), points sit at 3i+1
    let mut kinds: Vec<CellKind> = Vec::new();
    for i in 0..n_cells {
        let base = 3 * i as i64;
        if rng.gen_bool(0.3) {
            kinds.push(CellKind::IsolPoint(rint(base + 1)));
        } else {
            kinds.push(CellKind::OpenCell(rint(base), rint(base + 2)));
        }
    }

    // endpoints of interval cells available for ray gluing, each at most once
    let mut free_ends: Vec<(Rat, bool)> = Vec::new(); // (endpoint, is_left_end)
    for k in &kinds {
        if let CellKind::OpenCell(a, b) = k {
            free_ends.push((a.clone(), true));
            free_ends.push((b.clone(), false));
        }
    }

    let mut cells = Vec::new();
    let mut templates = Vec::new();
    for kind in kinds {
        let tpl = match &kind {
            CellKind::OpenCell(_, _) => {
                let c_den = *[1i64, 2, 3].choose(&mut rng).unwrap();
                let style = *[
                    IntervalStyle::Euclidean,
                    IntervalStyle::Euclidean,
                    IntervalStyle::LeftClosed,
                    IntervalStyle::RightClosed,
                ]
                .choose(&mut rng)
                .unwrap();
                let z = rzero();
                let piece = match style {
                    IntervalStyle::Euclidean => IntervalPiece::Interval {
                        lo: expr(1, -1, c_den, &z),
                        hi: expr(1, 1, c_den, &z),
                        left_closed: false,
                        right_closed: false,
                    },
                    IntervalStyle::LeftClosed => IntervalPiece::Interval {
                        lo: expr(1, 0, 1, &z),
                        hi: expr(1, 1, c_den, &z),
                        left_closed: true,
                        right_closed: false,
                    },
                    IntervalStyle::RightClosed => IntervalPiece::Interval {
                        lo: expr(1, -1, c_den, &z),
                        hi: expr(1, 0, 1, &z),
                        left_closed: false,
                        right_closed: true,
                    },
                };
                NbhdTemplate { pieces: vec![piece] }
            }
            CellKind::IsolPoint(_) => {
                let mut pieces = vec![IntervalPiece::Singleton(expr(1, 0, 1, &rzero()))];
                let n_rays = rng.gen_range(0..=2usize.min(free_ends.len()));
                for _ in 0..n_rays {
                    let pick = rng.gen_range(0..free_ends.len());
                    let (at, is_left) = free_ends.swap_remove(pick);
                    let c_den = *[1i64, 2].choose(&mut rng).unwrap();
                    let piece = if is_left {
                        // (at, at + eps/c)
                        IntervalPiece::Interval {
                            lo: expr(0, 0, 1, &at),
                            hi: expr(0, 1, c_den, &at),
                            left_closed: false,
                            right_closed: false,
                        }
                    } else {
                        // (at - eps/c, at)
                        IntervalPiece::Interval {
                            lo: expr(0, -1, c_den, &at),
                            hi: expr(0, 0, 1, &at),
                            left_closed: false,
                            right_closed: false,
                        }
                    };
                    pieces.push(piece);
                }
                NbhdTemplate { pieces }
            }
        };
        cells.push(Cell {
            kind,
            var_name: "a".into(),
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
    let mut spec = TopologySpec::assemble(space, cells, templates);
    let report = spec.validate();
    assert!(
        report.ok,
        "generated spec (seed {seed}, index {index}) must validate: {:?}",
        report.failures
    );
    spec
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decide::check_hausdorff;

    #[test]
    fn generated_specs_validate_and_are_hausdorff() {
        for i in 0..25 {
            let spec = generate(0, i);
            assert!(spec.cells.len() <= 4);
            assert!(spec.templates.iter().all(|t| t.pieces.len() <= 3));
            let (h, _) = check_hausdorff(&spec).unwrap();
            assert!(h, "generated spec {i} must be separable");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = crate::dsl::emit(&generate(7, 3));
        let b = crate::dsl::emit(&generate(7, 3));
        assert_eq!(a, b);
    }
}
