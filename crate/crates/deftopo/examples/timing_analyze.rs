use std::time::Instant;

use deftopo::decide::{analyze, check_hausdorff, check_regularity};
use deftopo::dsl::parse;
use deftopo::shadow::shadow_map;

fn main() {
    let dir = format!("{}/fixtures", env!("CARGO_MANIFEST_DIR"));
    let names = [
        "affine.top",
        "halfopen.top",
        "two_cells.top",
        "infty.top",
        "lex.top",
        "chain.top",
        "threecopy.top",
        "nonhaus.top",
    ];
    for name in names {
        let src = std::fs::read_to_string(format!("{dir}/{name}")).unwrap();
        let mut spec = parse(&src).unwrap();
        let t = Instant::now();
        let rep = spec.validate();
        let t_val = t.elapsed();
        assert!(rep.ok);
        let t = Instant::now();
        let (h, _) = check_hausdorff(&spec).unwrap();
        let t_haus = t.elapsed();
        let t = Instant::now();
        if h {
            let _ = shadow_map(&spec).unwrap();
        }
        let t_shadow = t.elapsed();
        let t = Instant::now();
        if h {
            let _ = check_regularity(&spec, true).unwrap();
        }
        let t_reg = t.elapsed();
        let t = Instant::now();
        let _ = analyze(&spec).unwrap();
        let t_all = t.elapsed();
        println!(
            "{name:20} validate {t_val:>8.2?}  hausdorff {t_haus:>8.2?}  shadows {t_shadow:>8.2?}  regular {t_reg:>8.2?}  analyze {t_all:>8.2?}"
        );
    }
}
