use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let names: Vec<&str> = if args.len() > 1 {
        args[1..].iter().map(|s| s.as_str()).collect()
    } else {
        vec![
            "affine.top",
            "halfopen.top",
            "two_cells.top",
            "nonhaus.top",
            "lex.top",
            "infty.top",
            "threecopy.top",
            "chain.top",
        ]
    };
    for name in names {
        let path = format!("{}/fixtures/{}", env!("CARGO_MANIFEST_DIR"), name);
        let text = std::fs::read_to_string(&path).unwrap();
        let t0 = Instant::now();
        let mut spec = deftopo::dsl::parse(&text).unwrap();
        let t1 = Instant::now();
        let report = spec.validate();
        let t2 = Instant::now();
        println!(
            "{name}: parse+domain {:?}, validate {:?}, ok={}",
            t1 - t0,
            t2 - t1,
            report.ok
        );
    }
}
