//! Write-verify programming of single devices, including a stuck one.
//!
//! cargo run --example device_programming -- [seed]

use memxbar::device::{program_to, DeviceParams, MemristorCell, ProgramLog};
use memxbar::rng::{domain, substream};

fn main() -> memxbar::error::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let params = DeviceParams::default();
    let mut rng = substream(seed, domain::PROGRAM, 0);

    println!("{}", ProgramLog::CSV_HEADER);
    for target in [12e3, 25e3, 42e3, 60e3, 150e3, 280e3] {
        let mut cell = MemristorCell::new(params.r_hrs_nominal);
        let log = program_to(&mut cell, target, &params, &mut rng)?;
        println!("{}", log.csv_row());
    }

    let mut stuck = MemristorCell::stuck_at(42e3);
    let log = program_to(&mut stuck, 42e3, &params, &mut rng)?;
    println!("stuck at 42k, target 42k: success={} pulses={}", log.success, log.pulses);
    match program_to(&mut stuck, 100e3, &params, &mut rng) {
        Ok(_) => println!("unexpected success"),
        Err(e) => println!("stuck at 42k, target 100k: {e}"),
    }
    Ok(())
}
