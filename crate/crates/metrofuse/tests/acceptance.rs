//! Acceptance gate: one test per shipped claim, each printing a PASS line with
//! the measured figure next to its tolerance. Every analytic claim is checked
//! against an independent recomputation, every statistical claim against Monte
//! Carlo output at explicit confidence margins.

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use common::{bundled, fit_gaussian_dip, fused_oracle_amplitudes, gaussian_fwhm};
use metrofuse::config::Config;
use metrofuse::fock::{Mode, Polarization};
use metrofuse::netmodel::{db_to_transmission, distributed_rate, local_fourfold_rate};
use metrofuse::optics::WavepacketModel;
use metrofuse::protocol::{
    bell_fringe, bell_fringe_via_state, bell_post_select, fidelity, fuse, herald_menu,
    noon_state, projection_spectrum, singlet_pair, splitter_tree_success, visibility,
    FusionLayout, HeraldClass,
};
use metrofuse::runner::{g2_run, predict_rows, scan, throughput_budget};
use metrofuse::source::SpdcSpec;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EXACT: f64 = 1e-12;

fn ideal_fused() -> metrofuse::PureState {
    let sigma = SpdcSpec::default().coherence_sigma_t_ps();
    let model = WavepacketModel::ideal(sigma).unwrap();
    fuse(&FusionLayout::default(), 0.0, &model).unwrap().state
}

fn resolve_inline(text: &str) -> metrofuse::config::Resolved {
    let config: Config = toml::from_str(text).expect("inline config parses");
    config.resolve(std::path::Path::new(".")).expect("inline config resolves")
}

#[test]
fn criterion_01_fusion_state_exactness() {
    let state = ideal_fused();
    let oracle = fused_oracle_amplitudes();

    let mut max_err = 0.0_f64;
    for (ket, expected) in &oracle {
        max_err = max_err.max((state.amplitude(ket) - expected).norm());
    }
    for (ket, amp) in state.terms() {
        let expected = oracle.get(ket).copied().unwrap_or_default();
        max_err = max_err.max((amp - expected).norm());
    }
    assert_eq!(state.term_count(), oracle.len());
    assert!(max_err < EXACT, "max amplitude error {max_err}");
    println!("criterion 01 fusion-state exactness: PASS (max |err| = {max_err:.3e})");
}

#[test]
fn criterion_02_splitter_tree_probability() {
    // 4 photons over 4 ports: every one of the 256 assignments enumerated here.
    let mut success = 0u32;
    for outcome in 0..256u32 {
        let port = |photon: u32| outcome >> (2 * photon) & 0b11;
        let pair_ok = |a: u32, b: u32| port(a) / 2 == port(b) / 2 && port(a) != port(b);
        if pair_ok(0, 1) && pair_ok(2, 3) && port(0) / 2 != port(2) / 2 {
            success += 1;
        }
    }
    assert_eq!(Ratio::new(u64::from(success), 256), Ratio::new(1, 32));
    assert_eq!(splitter_tree_success(), Ratio::new(1, 32));
    println!("criterion 02 splitter-tree probability: PASS ({success}/256 = 1/32 exactly)");
}

#[test]
fn criterion_03_heralding_table() {
    let layout = FusionLayout::default();
    let menu = herald_menu(&ideal_fused(), &layout);
    assert_eq!(menu.len(), 4);

    use Polarization::{H, V};
    for outcome in &menu {
        assert!(
            (outcome.probability - 0.25).abs() < EXACT,
            "herald {:?} probability {}",
            outcome.herald,
            outcome.probability
        );
        match outcome.herald {
            (a, b) if a == b => {
                let expect_pol = if a == H { V } else { H };
                assert_eq!(outcome.class, HeraldClass::Noon(expect_pol));
                let target = noon_state(expect_pol, "e", "f");
                let f = fidelity(&outcome.conditional, &target);
                assert!((f - 1.0).abs() < EXACT, "noon fidelity {f}");
            }
            _ => {
                assert_eq!(outcome.class, HeraldClass::Bell);
                let (p, post) = bell_post_select(&outcome.conditional, &layout);
                assert!((p - 0.5).abs() < EXACT, "post-selection probability {p}");
                let f = fidelity(&post, &singlet_pair("e", "f"));
                assert!((f - 1.0).abs() < EXACT, "singlet fidelity {f}");
            }
        }
    }
    println!(
        "criterion 03 heralding table: PASS (4 patterns at 1/4; noon and singlet fidelities 1)"
    );
}

#[test]
fn criterion_04_fringe_identity_and_monte_carlo() {
    let started = Instant::now();

    // Analytic identity at random phases.
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let mut max_err = 0.0_f64;
    for _ in 0..100 {
        let phase = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
        let via_state = bell_fringe_via_state(phase, "1", "2").unwrap();
        let law = bell_fringe(phase);
        for ((_, _, a), (_, _, b)) in via_state.as_array().iter().zip(law.as_array()) {
            max_err = max_err.max((a - b).abs());
        }
    }
    assert!(max_err < EXACT, "max fringe identity error {max_err}");

    // Monte Carlo fringe with at least 1e5 detected pairs per point.
    let phases = [0.25, 0.9, 1.55, 2.2, 2.85, 3.5, 4.15, 4.8];
    let points_list =
        phases.iter().map(f64::to_string).collect::<Vec<_>>().join(", ");
    let text = format!(
        r#"
mode = "simulate"
seed = 40104

[source]
entangled_fraction = 1.0
background_singles_hz = 0.0

[preparation]
kind = "singlet"
modes = ["1", "2"]

[[circuit]]
kind = "lcvr"
mode = "1"
retardance_rad = 0.0

[[circuit]]
kind = "rotation"
mode = "1"
angle_deg = 45.0

[[circuit]]
kind = "rotation"
mode = "2"
angle_deg = 45.0

[[detectors]]
id = "1H"
mode = "1"
pol = "H"

[[detectors]]
id = "1V"
mode = "1"
pol = "V"

[[detectors]]
id = "2H"
mode = "2"
pol = "H"

[[detectors]]
id = "2V"
mode = "2"
pol = "V"

[[coincidence.patterns]]
name = "hh"
channels = ["1H", "2H"]

[[coincidence.patterns]]
name = "hv"
channels = ["1H", "2V"]

[[coincidence.patterns]]
name = "vh"
channels = ["1V", "2H"]

[[coincidence.patterns]]
name = "vv"
channels = ["1V", "2V"]

[scan]
axis = "lcvr_phase"
target_mode = "1"
points = [{points_list}]
duration_s = 20.0
"#
    );
    let resolved = resolve_inline(&text);
    let sim = resolved.sim.as_ref().unwrap();
    let run = scan(sim, resolved.seed).unwrap();
    assert_eq!(run.len(), phases.len());

    let mut worst_sigma = 0.0_f64;
    for (point, &phase) in run.iter().zip(&phases) {
        let detected: u64 = point.counts.iter().map(|c| c.raw).sum();
        assert!(detected >= 100_000, "only {detected} detected pairs at phase {phase}");
        let law = bell_fringe(phase);
        for (counts, (_, _, p)) in point.counts.iter().zip(law.as_array()) {
            let mean = detected as f64 * p;
            let sd = (detected as f64 * p * (1.0 - p)).sqrt().max(1.0);
            let pull = (counts.raw as f64 - mean).abs() / sd;
            assert!(
                pull < 5.0,
                "pattern {} at phase {phase}: {} counts vs {mean:.1} ({pull:.2} sigma)",
                counts.name,
                counts.raw
            );
            worst_sigma = worst_sigma.max(pull);
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 120, "criterion ran {elapsed:?}, budget 2 min");
    println!(
        "criterion 04 fringe identity and Monte Carlo: PASS (identity err {max_err:.3e}; \
         worst MC pull {worst_sigma:.2} sigma; {elapsed:.2?})"
    );
}

#[test]
fn criterion_05_hom_dip_depth_and_width() {
    let resolved = bundled("hom_dip.toml");
    let sim = resolved.sim.as_ref().unwrap();

    // The ideal ensemble nulls the heralded fourfold exactly at zero delay.
    let rows = predict_rows(sim, false).unwrap();
    let ideal_at_zero = rows
        .iter()
        .find(|r| r.scan_value == 0.0 && r.quantity == "p_fourfold_ideal")
        .expect("ideal prediction at zero delay");
    assert!(ideal_at_zero.value.abs() < EXACT, "ideal dip floor {}", ideal_at_zero.value);

    let run = scan(sim, resolved.seed).unwrap();
    let dip: Vec<(f64, f64)> = run
        .iter()
        .map(|p| {
            let c = &p.counts[0];
            (p.scan_value, c.raw as f64 - c.accidentals as f64)
        })
        .collect();

    let (base, depth, sigma) = fit_gaussian_dip(&dip);
    let vis = depth / base;
    assert!(
        (vis - 0.68).abs() < 0.02,
        "fitted visibility {vis:.4} outside 0.68 +- 0.02"
    );

    let fwhm = gaussian_fwhm(sigma);
    let expected_fwhm = 1.209380414802988;
    assert!(
        (fwhm - expected_fwhm).abs() / expected_fwhm < 0.05,
        "fitted deficit FWHM {fwhm:.4} ps outside 5% of {expected_fwhm}"
    );
    println!(
        "criterion 05 dip depth and width: PASS (ideal floor 0; visibility {vis:.4}; \
         FWHM {fwhm:.4} ps vs {expected_fwhm:.4} ps)"
    );
}

#[test]
fn criterion_06_projection_spectrum() {
    // Analytic spectrum over the four measured rails.
    let modes: [Mode; 4] = ["b".into(), "f".into(), "e".into(), "d".into()];
    let spectrum = projection_spectrum(&ideal_fused(), &modes);
    assert_eq!(spectrum.len(), 16);

    let label = |pols: &[Polarization; 4]| -> String {
        pols.iter().map(|p| match p {
            Polarization::H => 'H',
            Polarization::V => 'V',
        }).collect()
    };
    let live: BTreeMap<String, f64> = spectrum
        .iter()
        .filter(|(_, p)| *p > EXACT)
        .map(|(pols, p)| (label(pols), *p))
        .collect();
    let expected = ["HHVV", "HVHV", "VHVH", "VVHH"];
    assert_eq!(live.keys().cloned().collect::<Vec<_>>(), expected);
    for (name, p) in &live {
        assert!((p - 1.0 / 16.0).abs() < EXACT, "pattern {name} probability {p}");
    }

    // Monte Carlo spectrum from the bundled config.
    let resolved = bundled("projection_spectrum.toml");
    let sim = resolved.sim.as_ref().unwrap();
    let run = scan(sim, resolved.seed).unwrap();
    let counts = &run[0].counts;
    assert_eq!(counts.len(), 16);

    let total_live: f64 = counts
        .iter()
        .filter(|c| expected.contains(&c.name.as_str()))
        .map(|c| c.raw as f64 - c.accidentals as f64)
        .sum();
    assert!(total_live >= 1.0e4, "only {total_live} live fourfold events");

    let mut worst = 0.0_f64;
    for c in counts {
        let subtracted = c.raw as f64 - c.accidentals as f64;
        let pull = if expected.contains(&c.name.as_str()) {
            let mean = total_live / 4.0;
            let sd = (total_live * 0.25 * 0.75).sqrt();
            (subtracted - mean).abs() / sd
        } else {
            // Dead patterns carry only accidentals; allow their counting noise.
            subtracted.abs() / (c.raw as f64 + c.accidentals as f64 + 1.0).sqrt()
        };
        assert!(pull < 5.0, "pattern {}: {subtracted} events ({pull:.2} sigma)", c.name);
        worst = worst.max(pull);
    }
    println!(
        "criterion 06 projection spectrum: PASS (4 live patterns at 1/16; \
         {total_live:.0} events, worst pull {worst:.2} sigma)"
    );
}

#[test]
fn criterion_07_network_timing() {
    for (config, expected_delay) in
        [("g2_tqn.toml", 22_594_000.0_f64), ("g2_bqn.toml", 33_179_000.0_f64)]
    {
        let resolved = bundled(config);
        let sim = resolved.sim.as_ref().unwrap();
        let (_, estimates, _) = g2_run(sim, resolved.seed).unwrap();

        let delay = estimates.relative_delay_ps.expect("peak found");
        assert!(
            (delay - expected_delay).abs() <= sim.histogram_bin_ps as f64,
            "{config}: recovered {delay} ps, expected {expected_delay} ps"
        );
        let fwhm = estimates.fwhm_ps.expect("width measurable");
        assert!(
            (fwhm - 750.0).abs() <= 75.0,
            "{config}: correlation FWHM {fwhm} ps outside 750 +- 75"
        );
        println!(
            "criterion 07 network timing [{config}]: PASS (delay {delay} ps, FWHM {fwhm:.1} ps)"
        );
    }
}

#[test]
fn criterion_08_rate_budget() {
    let local = local_fourfold_rate(6.0e3, 1.0 / 32.0);
    assert_eq!(local, 93.75);

    let resolved = bundled("throughput.toml");
    let plan = resolved.throughput.as_ref().unwrap();
    let budget = throughput_budget(plan).unwrap();
    assert!((budget.aggregate_loss_db - 23.0).abs() < EXACT);
    assert!((budget.aggregate_hz - 0.46986303152556785).abs() < EXACT);
    assert!((budget.distributed_hz - budget.aggregate_hz).abs() < EXACT);
    assert!(
        budget.note.contains("0.07 Hz") && budget.note.contains("0.47 Hz"),
        "note must surface the measured-vs-budget gap: {}",
        budget.note
    );

    // dB-multiplicativity: adding loss anywhere scales the rate by 10^(-dB/10).
    let base_inputs = plan.inputs();
    let base_rate = distributed_rate(&base_inputs).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5150);
    let mode_pool = ["b", "d", "e", "f"];
    let mut worst_rel = 0.0_f64;
    for _ in 0..200 {
        let mode: Mode = mode_pool[rng.gen_range(0..mode_pool.len())].into();
        let delta_db: f64 = rng.gen_range(0.0..30.0);
        let mut extra = base_inputs.extra_mode_db.clone();
        *extra.entry(mode).or_insert(0.0) += delta_db;
        let mut inputs = plan.inputs();
        inputs.extra_mode_db = &extra;
        let rate = distributed_rate(&inputs).unwrap();
        let rel = (rate / base_rate - db_to_transmission(delta_db)).abs()
            / db_to_transmission(delta_db);
        worst_rel = worst_rel.max(rel);
    }
    assert!(worst_rel < 1e-12, "multiplicativity violated at {worst_rel:.3e} relative");
    println!(
        "criterion 08 rate budget: PASS (local {local} Hz; aggregate {:.4} Hz; \
         note surfaces 0.07 Hz vs 0.47 Hz; multiplicative within {worst_rel:.2e})"
    , budget.aggregate_hz);
}

#[test]
fn criterion_09_background_pedestal_visibility() {
    let resolved = bundled("bell_fringe.toml");
    let sim = resolved.sim.as_ref().unwrap();
    let rows = predict_rows(sim, false).unwrap();

    let fringe: Vec<f64> = rows
        .iter()
        .filter(|r| r.quantity == "p_hh")
        .map(|r| r.value)
        .collect();
    assert!(!fringe.is_empty());
    let max = fringe.iter().cloned().fold(f64::MIN, f64::max);
    let min = fringe.iter().cloned().fold(f64::MAX, f64::min);
    let vis = visibility(max, min);
    assert!(
        (vis - 0.17).abs() < EXACT,
        "predicted visibility {vis} differs from the entangled fraction"
    );
    println!("criterion 09 background pedestal: PASS (predicted visibility {vis})");
}

#[test]
fn criterion_10_determinism_across_worker_counts() {
    use metrofuse::runner::execute;

    let resolved = bundled("projection_spectrum.toml");
    let text = std::fs::read_to_string(common::configs_dir().join("projection_spectrum.toml"))
        .unwrap();

    let mut snapshots: Vec<BTreeMap<String, Vec<u8>>> = Vec::new();
    for workers in [1usize, 2, 8] {
        let mut run = resolved.clone();
        run.workers = workers;
        let dir = tempfile::tempdir().unwrap();
        execute(&run, &text, dir.path(), true).unwrap();

        let mut files = BTreeMap::new();
        for entry in std::fs::read_dir(dir.path()).unwrap() {
            let entry = entry.unwrap();
            files.insert(
                entry.file_name().to_string_lossy().into_owned(),
                std::fs::read(entry.path()).unwrap(),
            );
        }
        snapshots.push(files);
    }

    let names: Vec<&String> = snapshots[0].keys().collect();
    assert!(names.iter().any(|n| n.as_str() == "results.csv"));
    assert!(names.iter().any(|n| n.as_str() == "manifest.json"));
    for other in &snapshots[1..] {
        assert_eq!(
            snapshots[0].keys().collect::<Vec<_>>(),
            other.keys().collect::<Vec<_>>()
        );
        for (name, bytes) in &snapshots[0] {
            assert_eq!(bytes, &other[name], "file {name} differs between worker counts");
        }
    }
    println!(
        "criterion 10 determinism: PASS ({} files byte-identical across 1/2/8 workers)",
        snapshots[0].len()
    );
}
