//! One 16x16 crossbar: differential neurons, bias maps and ADC read-back.
//!
//! cargo run --example crossbar_forward

use memxbar::crossbar::{BiasMode, Crossbar, CrossbarConfig};
use memxbar::device::DeviceParams;

fn main() -> memxbar::error::Result<()> {
    let device = DeviceParams::default();
    let mut xb = Crossbar::new(CrossbarConfig::default(), device.clone())?;

    // Neuron 0 gets a positive weight on input 0, neuron 1 a negative one.
    xb.set_resistance(0, 0, 10e3)?;
    xb.set_resistance(1, 0, 300e3)?;
    xb.set_resistance(2, 1, 300e3)?;
    xb.set_resistance(3, 1, 20e3)?;

    let mut x = vec![0.0; xb.cols()];
    x[0] = 0.1;
    x[1] = 0.05;
    let pre = xb.layer_preactivation(&x)?;
    let out = xb.layer_forward(&x)?;
    for n in 0..2 {
        println!("neuron {n}: u = {:+.5} V, output = {:+.5}", pre[n], out[n]);
    }

    for mode in [BiasMode::Set, BiasMode::Reset { amplitude: 2.4 }, BiasMode::Read] {
        let map = xb.bias_assignment((5, 7), mode)?;
        map.check(device.v_threshold)?;
        println!("{mode:?}: largest non-target drop {:.2} V", map.max_non_target_drop());
    }

    for (row, col) in [(0, 0), (3, 1), (2, 1)] {
        let true_r = xb.cell(row, col)?.resistance;
        println!("cell ({row}, {col}): {:.0} ohm reads back as {:.1} ohm", true_r, xb.measure_resistance(row, col)?);
    }
    Ok(())
}
