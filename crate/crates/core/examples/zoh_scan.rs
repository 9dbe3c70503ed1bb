//! Zero-order-hold discretization of one diagonal mode and the selective
//! scan over a short random sequence.

use cogload::numerics::{Tape, Tensor};
use cogload::ssm::{discretize_zoh, scan_discretized, selective_scan};

fn main() -> cogload::Result<()> {
    for (a, delta) in [(-1.0, 0.1), (-0.5, 1.0), (-1e-12, 0.5)] {
        let (abar, bbar) = discretize_zoh(a, delta, 1.0)?;
        println!("a = {a:e}, delta = {delta}: abar = {abar:.12}, bbar = {bbar:.12}");
    }

    // A single mode driven by a unit step.
    let (abar, bbar) = discretize_zoh(-2.0, 0.25, 1.0)?;
    let n = 12;
    let y = scan_discretized(&vec![abar; n], &vec![bbar; n], &vec![1.0; n], 0.0, &vec![1.0; n])?;
    println!("step response approaches -1/a = 0.5: {:.4?}", y);

    // The fused scan: T=6 steps, 3 channels, 2 states.
    let (steps, inner, state) = (6, 3, 2);
    let mut tape = Tape::<f64>::inference();
    let u = tape.constant(Tensor::from_fn([steps, inner], |i| ((i % 5) as f64 - 2.0) / 2.0));
    let delta = tape.constant(Tensor::filled([steps, inner], 0.3));
    let a_log = tape.constant(Tensor::from_fn([inner, state], |i| 0.2 * i as f64));
    let b = tape.constant(Tensor::filled([steps, state], 1.0));
    let c = tape.constant(Tensor::filled([steps, state], 0.5));
    let d = tape.constant(Tensor::filled([inner], 0.1));
    let out = selective_scan(&mut tape, u, delta, a_log, b, c, d)?;
    for t in 0..steps {
        println!("t={t}: {:.4?}", &tape.value(out).data()[t * inner..(t + 1) * inner]);
    }
    Ok(())
}
