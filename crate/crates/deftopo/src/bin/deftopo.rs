//! Command-line driver: parsing, validation, analysis, embedding, and
//! brute-force cross-checks, with deterministic JSON artifacts.
//!
//! Exit codes: 0 = run completed (mathematical verdicts never affect the
//! exit code), 1 = invalid input spec, 2 = internal error, certificate
//! failure, or suite/oracle mismatch.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use deftopo::decide::{analyze, Analysis};
use deftopo::dsl::{parse, TopologySpec};
use deftopo::embed::{build_embedding, normalize_isolate, verify_embedding, EmbedError};
use deftopo::geom::SemilinearSet;
use deftopo::oracle::cross_validate;
use deftopo::rat::parse_rat;
use deftopo::shadow::{shadows_at, tau_closure};

#[derive(Parser)]
#[command(name = "deftopo", about = "Analyzer for definable topologies on bounded one-dimensional sets", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed for randomized subcommands (reserved; current commands are
    /// deterministic)
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct IoArgs {
    /// Input spec file
    input: PathBuf,
    /// Write a JSON report to this path
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a spec
    Check { input: PathBuf },
    /// Full analysis: separation, regularity, exceptional sets, verdict,
    /// components, rays
    Analyze(IoArgs),
    /// Verdict and conditions only
    Decide(IoArgs),
    /// Shadow set at a point
    Shadows {
        #[command(flatten)]
        io: IoArgs,
        /// The point, as a rational literal
        #[arg(long)]
        point: String,
    },
    /// Topological closure of a subset
    Closure {
        #[command(flatten)]
        io: IoArgs,
        /// The subset, e.g. "(1/4,1/2) ∪ {3}" (ASCII "u" also accepted)
        #[arg(long)]
        set: String,
    },
    /// Construct and certify an explicit embedding into rational 3-space
    Embed {
        #[command(flatten)]
        io: IoArgs,
        /// Verification schedule depth
        #[arg(long, default_value_t = 6)]
        depth: u32,
    },
    /// Brute-force cross-validation of the symbolic results
    Oracle {
        #[command(flatten)]
        io: IoArgs,
        /// Grid spacing exponent (spacing 2^-resolution)
        #[arg(long, default_value_t = 8)]
        resolution: u32,
        /// Schedule depth (scales 2^-1 … 2^-depth)
        #[arg(long, default_value_t = 12)]
        depth: u32,
    },
    /// Analyze every bundled fixture and compare with the expected-results
    /// manifest
    Suite {
        /// Fixture directory
        #[arg(long, default_value = "fixtures")]
        dir: PathBuf,
        /// Expected-results manifest
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Also run the brute-force oracle on every fixture
        #[arg(long)]
        with_oracle: bool,
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long, default_value_t = 6)]
        resolution: u32,
        #[arg(long, default_value_t = 12)]
        depth: u32,
    },
}

const EXIT_INVALID: u8 = 1;
const EXIT_INTERNAL: u8 = 2;

fn load(path: &PathBuf) -> Result<TopologySpec, u8> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return Err(EXIT_INVALID);
        }
    };
    let mut spec = match parse(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("parse error: {e}");
            return Err(EXIT_INVALID);
        }
    };
    let report = spec.validate();
    if !report.ok {
        eprintln!("validation failed:");
        for f in &report.failures {
            let witness: Vec<String> =
                f.witness.iter().map(|(k, v)| format!("{k}={v}")).collect();
            eprintln!("  [{}] {}", f.check, witness.join(", "));
        }
        return Err(EXIT_INVALID);
    }
    Ok(spec)
}

fn write_json(path: &Option<PathBuf>, value: &serde_json::Value) -> Result<(), u8> {
    if let Some(p) = path {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        if let Err(e) = std::fs::write(p, text) {
            eprintln!("error: cannot write {}: {e}", p.display());
            return Err(EXIT_INTERNAL);
        }
    }
    Ok(())
}

fn run_analysis(spec: &TopologySpec) -> Result<Analysis, u8> {
    analyze(spec).map_err(|e| {
        eprintln!("analysis error: {e}");
        EXIT_INTERNAL
    })
}

fn summarize(analysis: &Analysis) {
    let v = &analysis.verdict;
    println!("hausdorff:   {}", v.hausdorff);
    if let Some(w) = &v.witnesses.separation {
        println!("  inseparable pair: {} and {}", w.p, w.q);
    }
    println!("regular:     {}", v.regular);
    if let Some(w) = &v.witnesses.regularity {
        println!("  witness: point {}, scale {}", w.point, w.eps);
    }
    println!("E = {}   A = {}   G = {}", v.exceptional.e, v.exceptional.a, v.exceptional.g);
    println!(
        "conditions:  finite-exceptional={}  coarser-off-G={}",
        v.conditions.c3, v.conditions.c4
    );
    println!("affinizable: {}", v.affinizable);
    match &v.components {
        deftopo::decide::ComponentsJson::Finite { sets } => {
            println!("components:  {} ({})", sets.len(), sets.join(" ; "));
        }
        deftopo::decide::ComponentsJson::NoFiniteDecomposition => {
            println!("components:  no finite decomposition");
            if let Some(c) = &v.witnesses.clopen {
                println!("  clopen witness: {}", c.set);
            }
            for z in &v.witnesses.disconnected_intervals {
                println!("  totally disconnected on {z}");
            }
        }
        deftopo::decide::ComponentsJson::NotComputed => {
            println!("components:  not computed");
        }
    }
    for entry in &analysis.rays.entries {
        for ray in &entry.rays {
            println!(
                "ray: point {} captures the {:?} end of {} at {}",
                entry.point, ray.side, ray.host, ray.at
            );
        }
    }
}

fn cmd_analyze(io: &IoArgs, verdict_only: bool) -> Result<(), u8> {
    let spec = load(&io.input)?;
    let analysis = run_analysis(&spec)?;
    summarize(&analysis);
    let value = if verdict_only {
        json!({ "verdict": analysis.verdict })
    } else {
        json!({ "verdict": analysis.verdict, "rays": analysis.rays })
    };
    write_json(&io.json, &value)
}

fn cmd_embed(io: &IoArgs, depth: u32) -> Result<(), u8> {
    let spec = load(&io.input)?;
    let analysis = run_analysis(&spec)?;
    if !analysis.verdict.affinizable {
        println!("not affinizable; no embedding exists");
        let value = json!({ "affinizable": false, "verdict": analysis.verdict });
        return write_json(&io.json, &value);
    }
    let n = normalize_isolate(&spec, &analysis.exceptional).map_err(|e| {
        eprintln!("normalization error: {e}");
        EXIT_INTERNAL
    })?;
    let emb = build_embedding(&n, &analysis.rays).map_err(|e| {
        eprintln!("embedding construction error: {e}");
        EXIT_INTERNAL
    })?;
    match verify_embedding(&spec, &n, &emb, depth) {
        Ok(cert) => {
            println!(
                "embedding: {} anchors, {} curves; certificate passes ({} sampled checks)",
                emb.anchors.len(),
                emb.curves.len(),
                cert.entries.len()
            );
            let value = json!({
                "affinizable": true,
                "embedding": emb.to_json(&n),
                "certificate": cert.to_json(),
            });
            write_json(&io.json, &value)
        }
        Err(e @ EmbedError::Verify { .. }) => {
            eprintln!("certificate failure: {e}");
            Err(EXIT_INTERNAL)
        }
        Err(e) => {
            eprintln!("verification error: {e}");
            Err(EXIT_INTERNAL)
        }
    }
}

fn cmd_oracle(io: &IoArgs, resolution: u32, depth: u32) -> Result<(), u8> {
    let spec = load(&io.input)?;
    let analysis = run_analysis(&spec)?;
    let report = cross_validate(&spec, &analysis, resolution, depth).map_err(|e| {
        eprintln!("oracle error: {e}");
        EXIT_INTERNAL
    })?;
    println!(
        "oracle: {} checks, {} discrepancies",
        report.checks.len(),
        report.discrepancies.len()
    );
    for d in &report.discrepancies {
        println!(
            "  DISCREPANCY [{}] at {}: symbolic {} vs sampled {}",
            d.check, d.location, d.symbolic, d.sampled
        );
    }
    write_json(&io.json, &report.to_json())?;
    if report.discrepancies.is_empty() {
        Ok(())
    } else {
        Err(EXIT_INTERNAL)
    }
}

fn components_kind(v: &deftopo::decide::ComponentsJson) -> (&'static str, Option<usize>) {
    match v {
        deftopo::decide::ComponentsJson::Finite { sets } => ("finite", Some(sets.len())),
        deftopo::decide::ComponentsJson::NoFiniteDecomposition => {
            ("no_finite_decomposition", None)
        }
        deftopo::decide::ComponentsJson::NotComputed => ("not_computed", None),
    }
}

fn cmd_suite(
    dir: &PathBuf,
    manifest: &Option<PathBuf>,
    with_oracle: bool,
    json_out: &Option<PathBuf>,
    resolution: u32,
    depth: u32,
) -> Result<(), u8> {
    let manifest_path = manifest.clone().unwrap_or_else(|| dir.join("expected.json"));
    let manifest_text = std::fs::read_to_string(&manifest_path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", manifest_path.display());
        EXIT_INVALID
    })?;
    let expected: serde_json::Value = serde_json::from_str(&manifest_text).map_err(|e| {
        eprintln!("error: bad manifest: {e}");
        EXIT_INVALID
    })?;
    let expected = expected.as_object().ok_or_else(|| {
        eprintln!("error: manifest must be an object");
        EXIT_INVALID
    })?;

    let mut mismatches = 0usize;
    let mut rows = Vec::new();
    println!(
        "{:<22} {:<9} {:<8} {:<12} {:<24} {}",
        "fixture", "hausdorff", "regular", "affinizable", "components", "status"
    );
    for (name, want) in expected {
        let path = dir.join(name);
        let spec = load(&path)?;
        let analysis = run_analysis(&spec)?;
        let v = &analysis.verdict;
        let (kind, count) = components_kind(&v.components);
        let comp_desc = match count {
            Some(c) => format!("{kind}:{c}"),
            None => kind.to_string(),
        };
        let got = json!({
            "hausdorff": v.hausdorff,
            "regular": v.regular,
            "affinizable": v.affinizable,
            "components": comp_desc,
            "clopen": v.witnesses.clopen.as_ref().map(|c| c.set.clone()),
        });
        let mut status = "ok";
        if let Some(obj) = want.as_object() {
            for (key, expect) in obj {
                if got.get(key) != Some(expect) {
                    status = "MISMATCH";
                }
            }
        }
        if status == "MISMATCH" {
            mismatches += 1;
        }
        let mut oracle_note = String::new();
        if with_oracle {
            let report = cross_validate(&spec, &analysis, resolution, depth).map_err(|e| {
                eprintln!("oracle error on {name}: {e}");
                EXIT_INTERNAL
            })?;
            if !report.discrepancies.is_empty() {
                mismatches += 1;
                status = "MISMATCH";
            }
            oracle_note = format!("  oracle: {} discrepancies", report.discrepancies.len());
        }
        println!(
            "{:<22} {:<9} {:<8} {:<12} {:<24} {status}{oracle_note}",
            name, v.hausdorff, v.regular, v.affinizable, comp_desc
        );
        rows.push(json!({ "fixture": name, "got": got, "status": status }));
    }
    write_json(json_out, &json!({ "rows": rows, "mismatches": mismatches }))?;
    if mismatches == 0 {
        println!("all fixtures match the manifest");
        Ok(())
    } else {
        eprintln!("{mismatches} fixture(s) mismatch the manifest");
        Err(EXIT_INTERNAL)
    }
}

fn run(cli: &Cli) -> Result<(), u8> {
    match &cli.command {
        Command::Check { input } => {
            load(input)?;
            println!("ok");
            Ok(())
        }
        Command::Analyze(io) => cmd_analyze(io, false),
        Command::Decide(io) => cmd_analyze(io, true),
        Command::Shadows { io, point } => {
            let spec = load(&io.input)?;
            let p = parse_rat(point).ok_or_else(|| {
                eprintln!("error: bad rational literal: {point}");
                EXIT_INVALID
            })?;
            let mut s = shadows_at(&spec, &p).map_err(|e| {
                eprintln!("shadow error: {e}");
                EXIT_INTERNAL
            })?;
            s.sort();
            let rendered: Vec<String> = s.iter().map(deftopo::rat::fmt_rat).collect();
            println!("S({point}) = {{{}}}", rendered.join(", "));
            write_json(&io.json, &json!({ "point": point, "shadows": rendered }))
        }
        Command::Closure { io, set } => {
            let spec = load(&io.input)?;
            let z = SemilinearSet::parse(&set.replace(" u ", " ∪ ")).map_err(|e| {
                eprintln!("error: bad set literal: {e}");
                EXIT_INVALID
            })?;
            let cl = tau_closure(&spec, &z).map_err(|e| {
                eprintln!("closure error: {e}");
                EXIT_INTERNAL
            })?;
            println!("closure = {}", cl.render());
            write_json(&io.json, &json!({ "set": z.render(), "closure": cl.render() }))
        }
        Command::Embed { io, depth } => cmd_embed(io, *depth),
        Command::Oracle {
            io,
            resolution,
            depth,
        } => cmd_oracle(io, *resolution, *depth),
        Command::Suite {
            dir,
            manifest,
            with_oracle,
            json,
            resolution,
            depth,
        } => cmd_suite(dir, manifest, *with_oracle, json, *resolution, *depth),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}
