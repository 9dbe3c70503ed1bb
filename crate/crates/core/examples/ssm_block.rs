//! One gated residual selective-SSM block: parameter layout, a forward
//! pass, and causality (a late perturbation leaves earlier rows alone).

use cogload::numerics::{ParamStore, Tape, Tensor};
use cogload::ssm::{block_forward, BlockConfig, BlockParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn run(store: &ParamStore<f64>, p: &BlockParams, h: &Tensor<f64>) -> cogload::Result<Tensor<f64>> {
    let mut tape = Tape::inference();
    let bound = store.bind(&mut tape);
    let x = tape.constant(h.clone());
    let y = block_forward(&mut tape, &bound, p, x, None)?;
    Ok(tape.value(y).clone())
}

fn main() -> cogload::Result<()> {
    let cfg = BlockConfig {
        d_model: 8,
        d_state: 4,
        d_conv: 4,
        expand: 2,
    };
    let mut store = ParamStore::new();
    let p = BlockParams::init(&mut store, "block", cfg, &mut ChaCha8Rng::seed_from_u64(0))?;
    for (name, t) in store.iter() {
        println!("{name:<24} {:?}", t.shape());
    }
    println!("total scalars: {}", store.num_scalars());

    let h = Tensor::from_fn([10, 8], |i| (i as f64 * 0.7).sin());
    let mut late = h.clone();
    late.data_mut()[7 * 8] += 1.0;
    let (a, b) = (run(&store, &p, &h)?, run(&store, &p, &late)?);
    for t in 0..10 {
        let diff: f64 = (0..8).map(|c| (a.data()[t * 8 + c] - b.data()[t * 8 + c]).abs()).sum();
        println!("row {t}: |change| = {diff:.3e}");
    }
    Ok(())
}
