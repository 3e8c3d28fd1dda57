//! Runs the synthetic ablation grid and prints mean test accuracy per cell.
//!
//! cargo run --release --example probe_ablation -- [first_seed] [seeds]

use std::time::Instant;

use kbert::probe::{run_ablation, Cell, ProbeSettings, ProbeVariant};

fn main() -> kbert::Result<()> {
    let mut args = std::env::args().skip(1);
    let first: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let count: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);
    let seeds: Vec<u64> = (first..first + count).collect();
    let settings = ProbeSettings::default();

    let start = Instant::now();
    let report = run_ablation(
        &seeds,
        &[ProbeVariant::Knowledge, ProbeVariant::Misleading],
        &Cell::ALL,
        &settings,
    )?;
    println!("{:<11} {:<24} {:>6}  per seed", "variant", "cell", "mean");
    for variant in [ProbeVariant::Knowledge, ProbeVariant::Misleading] {
        for cell in Cell::ALL {
            let accs = report.accuracies(variant, cell);
            let per: Vec<String> = accs.iter().map(|a| format!("{a:.3}")).collect();
            println!(
                "{:<11} {:<24} {:>6.3}  {}",
                variant.as_str(),
                cell.as_str(),
                report.mean(variant, cell).unwrap_or(f64::NAN),
                per.join(" ")
            );
        }
    }
    eprintln!("{:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
