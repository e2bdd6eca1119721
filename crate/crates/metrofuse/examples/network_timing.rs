//! Calibrates the fiber round-trip delays from simulated time tags: one photon
//! of each pair is detected locally, its partner after a loop through a metro
//! node, and the cross-correlation histogram peaks at the loop delay with a
//! width fixed by the two detectors' jitter in quadrature.

use std::path::Path;

use metrofuse::config::Config;
use metrofuse::runner::g2_run;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");

    for name in ["g2_tqn.toml", "g2_bqn.toml"] {
        let text = std::fs::read_to_string(dir.join(name)).expect("bundled config");
        let config: Config = toml::from_str(&text).expect("config parses");
        let resolved = config.resolve(&dir).expect("config resolves");
        let sim = resolved.sim.as_ref().expect("g2 plan");

        let (histogram, estimates, _) = g2_run(sim, resolved.seed).expect("g2 run");

        println!("{name}");
        println!("  correlated detections: {}", estimates.total_counts);
        match (estimates.relative_delay_ps, estimates.fwhm_ps) {
            (Some(delay), Some(fwhm)) => {
                println!("  recovered delay: {:.3} us", delay / 1.0e6);
                println!("  correlation FWHM: {fwhm:.0} ps");

                // Print the histogram around the peak.
                let peak_bin = histogram
                    .counts
                    .iter()
                    .enumerate()
                    .max_by_key(|(_, c)| **c)
                    .map(|(i, _)| i)
                    .unwrap();
                let max = *histogram.counts.iter().max().unwrap() as f64;
                for i in peak_bin.saturating_sub(8)..(peak_bin + 9).min(histogram.counts.len()) {
                    let count = histogram.counts[i];
                    let bar = "#".repeat((40.0 * count as f64 / max).round() as usize);
                    println!("  {:>12.1} ps  {count:>5}  {bar}", histogram.bin_center_ps(i));
                }
            }
            _ => println!("  no coincidence peak found"),
        }
        println!();
    }
}
