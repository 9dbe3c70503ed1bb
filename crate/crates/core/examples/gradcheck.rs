//! Builds a small computation on the tape, backpropagates, and checks the
//! analytic gradient against central finite differences.

use cogload::numerics::{grad_check, ParamStore, Tape, Tensor};

fn main() -> cogload::Result<()> {
    let mut params = ParamStore::<f64>::new();
    let w = params.add("w", Tensor::from_fn([3, 4], |i| (i as f64 * 0.37).sin()));
    let b = params.add("b", Tensor::from_fn([3], |i| 0.1 * i as f64));
    let x = Tensor::from_fn([5, 4], |i| (i as f64 * 0.11).cos());

    // One explicit backward pass.
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let xv = tape.constant(x.clone());
    let y = tape.linear(xv, bound[w], Some(bound[b]))?;
    let y = tape.tanh(y)?;
    let loss = tape.mean(y)?;
    tape.backward(loss)?;
    println!("loss = {:.6}", tape.value(loss).data()[0]);
    println!("dL/db = {:?}", tape.grad(bound[b]).map(|g| g.to_vec()));

    let report = grad_check(&mut params, 1e-5, |tape, bound| {
        let xv = tape.constant(x.clone());
        let y = tape.linear(xv, bound[w], Some(bound[b]))?;
        let y = tape.tanh(y)?;
        tape.mean(y)
    })?;
    println!(
        "finite differences over {} coordinates: max relative error {:.2e} at {}[{}]",
        report.coordinates, report.max_rel_error, report.worst_param, report.worst_index
    );
    Ok(())
}
