//! Prints the distribution rate budget for the metro deployment: the local
//! fused-state rate, the per-fiber loss and latency ledger, and the aggregate
//! rate after every photon has survived its path.

use std::path::Path;

use metrofuse::config::Config;
use metrofuse::runner::throughput_budget;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let text = std::fs::read_to_string(dir.join("throughput.toml")).expect("bundled config");
    let config: Config = toml::from_str(&text).expect("config parses");
    let resolved = config.resolve(&dir).expect("config resolves");
    let plan = resolved.throughput.as_ref().expect("throughput plan");

    let budget = throughput_budget(plan).expect("budget computes");

    println!("local heralded fourfold rate: {:.2} Hz", budget.local_fourfold_hz);
    println!();
    println!("mode   path (dB)   extra (dB)   insertion (dB)   delay (us)   transmission");
    for (mode, slice) in &budget.per_mode {
        println!(
            "{:>4}   {:>9.2}   {:>10.2}   {:>14.2}   {:>10.3}   {:>12.5}",
            mode.as_str(),
            slice.path_loss_db,
            slice.extra_loss_db,
            slice.insertion_share_db,
            slice.delay_us,
            slice.transmission
        );
    }
    println!();
    println!("aggregate loss: {:.1} dB", budget.aggregate_loss_db);
    println!("distributed rate (per-photon product): {:.4} Hz", budget.distributed_hz);
    println!("aggregate rate (single application):   {:.4} Hz", budget.aggregate_hz);
    println!();
    println!("{}", budget.note);
}
