//! Distillation temperature against target-language dev accuracy, with the
//! vanilla student as a flat reference.

mod common;

use monox::evalx::temperature_sweep;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let setup = common::quick_setup();
    let temps = [0.01, 0.1, 1.0, 10.0];
    let sweep = temperature_sweep(&setup, &temps, &[1, 2])?;
    let vanilla = sweep.vanilla.points[0].mean;
    println!("{:>8} {:>8} {:>8}", "T", "kd", "vs vanilla");
    for p in &sweep.kd.points {
        println!("{:>8} {:>8.4} {:>+8.4}", p.x, p.mean, p.mean - vanilla);
    }
    Ok(())
}
