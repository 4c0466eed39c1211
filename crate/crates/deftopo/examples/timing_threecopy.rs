use std::time::Instant;

use deftopo::decide::{
    check_condition_4, check_hausdorff, check_regularity, clopen_witness, exceptional_sets,
    ray_report,
};
use deftopo::dsl::parse;
use deftopo::shadow::{affine_comparison, classify, shadow_map};

fn main() {
    let dir = format!("{}/fixtures", env!("CARGO_MANIFEST_DIR"));
    let src = std::fs::read_to_string(format!("{dir}/threecopy.top")).unwrap();
    let mut spec = parse(&src).unwrap();
    assert!(spec.validate().ok);
    let t = Instant::now();
    let _ = check_hausdorff(&spec).unwrap();
    println!("hausdorff   {:?}", t.elapsed());
    let t = Instant::now();
    let map = shadow_map(&spec).unwrap();
    println!("shadow_map  {:?}", t.elapsed());
    let t = Instant::now();
    let classes = classify(&spec, &map);
    println!("classify    {:?}", t.elapsed());
    let t = Instant::now();
    let cmp = affine_comparison(&spec, &map);
    println!("comparison  {:?}", t.elapsed());
    let t = Instant::now();
    let exc = exceptional_sets(&cmp);
    println!("exceptional {:?}", t.elapsed());
    let t = Instant::now();
    let _ = ray_report(&spec, &cmp).unwrap();
    println!("rays        {:?}", t.elapsed());
    let t = Instant::now();
    let _ = check_regularity(&spec, true).unwrap();
    println!("regularity  {:?}", t.elapsed());
    let regions = map.regions(&spec);
    let t = Instant::now();
    let c4 = check_condition_4(&spec, &regions, &exc).unwrap();
    println!("c4={c4}      {:?}", t.elapsed());
    for idx in 0..spec.cells.len() {
        let t = Instant::now();
        let w = clopen_witness(&spec, &map, &classes, idx);
        println!("clopen[{idx}] {:?} -> {:?}", t.elapsed(), w.map(|w| w.z.render()));
    }
}
