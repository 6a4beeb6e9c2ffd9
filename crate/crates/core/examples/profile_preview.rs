//! Quick look at a simulation profile without writing any files:
//!
//! ```text
//! cargo run --release --example profile_preview -- desk 10
//! ```
//!
//! Arguments: profile name (desk | paper | figure1 | ztest) and an optional
//! replicate count override.

use mlkf_core::sim::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(|s| s.as_str()).unwrap_or("desk");
    let mut cfg = match which {
        "desk" => ExperimentConfig::desk_profile(),
        "paper" => ExperimentConfig::paper_profile(),
        "figure1" => ExperimentConfig::figure1_profile(),
        "ztest" => ExperimentConfig::ztest_profile(),
        other => {
            eprintln!("unknown profile '{other}' (expected desk|paper|figure1|ztest)");
            std::process::exit(2);
        }
    };
    if let Some(reps) = args.get(2).and_then(|s| s.parse().ok()) {
        cfg.reps = reps;
    }
    let t0 = std::time::Instant::now();
    let res = run(&cfg).expect("experiment failed");
    println!("profile {which}, reps {}, elapsed {:?}", cfg.reps, t0.elapsed());
    for s in &res.summaries {
        println!(
            "{:10} layer {}: FDP {:.4} (se {:.4})  power {:.4} (se {:.4})",
            s.method.as_str(),
            s.layer + 1,
            s.mean_fdp,
            s.fdp_se,
            s.mean_power,
            s.power_se
        );
    }
    for f in &res.failures {
        eprintln!("replicate {} failed: {}", f.rep, f.message);
    }
}
