//! Weight to resistance-pair mapping, discrete weight tables and stuck
//! device compensation.
//!
//! cargo run --example weight_mapping

use memxbar::device::MemristorCell;
use memxbar::mapping::{
    compensate_stuck, discrete_weight_table, resistances_for_weight, signed_weight_states, w_max,
    weight_from_resistances, Reference, ResistanceRange,
};

fn main() -> memxbar::error::Result<()> {
    let r_f = 100e3;
    let wide = ResistanceRange::default();
    let narrow = ResistanceRange::new(10e3, 60e3);
    println!("w_max on [10k, 300k]: {:.4}", w_max(r_f, &wide));
    println!("w_max on [10k, 60k]:  {:.4}", w_max(r_f, &narrow));

    for w in [-7.0, -1.0, 0.0, 0.5, 3.0, 8.0] {
        let s = resistances_for_weight(w, r_f, &narrow)?;
        println!(
            "w = {w:+.2}: r_m1 = {:>8.1}, r_m2 = {:>8.1}, back = {:+.12}",
            s.r_m1,
            s.r_m2,
            weight_from_resistances(&s)
        );
    }

    let table = discrete_weight_table(r_f, 60e3, &narrow, 5e3);
    println!("5k-step table against 60k: {:?}", table.iter().map(|w| format!("{w:.3}")).collect::<Vec<_>>());
    let states = signed_weight_states(4, r_f, &narrow);
    println!("4-state signed weights: {:?}", states.iter().map(|w| format!("{w:.3}")).collect::<Vec<_>>());

    let free = MemristorCell::new(wide.r_max);
    let stuck = MemristorCell::stuck_at(42e3);
    for target in [1.0, -1.0, 9.0] {
        let c = compensate_stuck((&free, &stuck), target, r_f, &wide, Reference::PinMax);
        println!(
            "r_m2 stuck at 42k, target {target:+.1}: r_m1 = {:.1}, achieved {:+.4}",
            c.nominals.r_m1, c.achieved_w
        );
    }
    Ok(())
}
