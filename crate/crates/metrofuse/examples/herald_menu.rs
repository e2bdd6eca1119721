//! Walks the four herald patterns of the fusion circuit: probability, the
//! state each one prepares across the two output fibers, and the Bell pair
//! recovered by post-selecting one photon per output.

use metrofuse::optics::WavepacketModel;
use metrofuse::protocol::{
    bell_post_select, fidelity, fuse, herald_menu, noon_state, singlet_pair, FusionLayout,
    HeraldClass,
};
use metrofuse::source::SpdcSpec;
use num_complex::Complex64;

fn fmt_amp(amp: Complex64) -> String {
    if amp.im.abs() < 1e-12 {
        format!("{:+.4}", amp.re)
    } else {
        format!("{:+.4}{:+.4}i", amp.re, amp.im)
    }
}

fn main() {
    let layout = FusionLayout::default();
    let sigma = SpdcSpec::default().coherence_sigma_t_ps();
    let model = WavepacketModel::ideal(sigma).expect("positive coherence time");
    let fused = fuse(&layout, 0.0, &model).expect("fusion circuit runs").state;

    println!("herald  probability  prepared output state");
    for outcome in herald_menu(&fused, &layout) {
        let (pb, pd) = outcome.herald;
        match outcome.class {
            HeraldClass::Noon(pol) => {
                let f = fidelity(&outcome.conditional, &noon_state(pol, "e", "f"));
                println!(
                    "({pb},{pd})   {:>10.4}   {pol}-polarized pair bunched across e/f \
                     (N00N, fidelity {f:.4})",
                    outcome.probability
                );
            }
            HeraldClass::Bell => {
                let (p_both, post) = bell_post_select(&outcome.conditional, &layout);
                let f = fidelity(&post, &singlet_pair("e", "f"));
                println!(
                    "({pb},{pd})   {:>10.4}   Bell candidate; one photon per fiber with \
                     probability {p_both:.2}, then singlet fidelity {f:.4}",
                    outcome.probability
                );
            }
        }
        for (ket, amp) in outcome.conditional.terms() {
            println!("             {}  |{ket}>", fmt_amp(amp));
        }
    }

    println!();
    println!("every pattern fires with probability 1/4; the crossed patterns herald");
    println!("distributable entanglement, so half of all fusions are usable and the");
    println!("post-selected half of those carry a perfect singlet.");
}
