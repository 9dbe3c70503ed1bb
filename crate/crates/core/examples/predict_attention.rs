//! Initializes the bidirectional classifier, predicts one synthetic window,
//! prints the attention profile of each direction, and round-trips the
//! checkpoint.

use cogload::eval::{generate_synthetic, SynthSpec};
use cogload::model::{load_checkpoint, save_checkpoint, BiMambaClassifier, ModelConfig};

fn main() -> cogload::Result<()> {
    let cfg = ModelConfig {
        d_model: 32,
        layers_per_direction: 2,
        ..ModelConfig::default()
    };
    let model = BiMambaClassifier::<f32>::init(&cfg)?;
    println!(
        "{} parameters (default config: {})",
        model.num_params(),
        ModelConfig::default().num_params()
    );

    let set = generate_synthetic(&SynthSpec {
        participants: 1,
        windows_per_participant: 1,
        steps: 40,
        ..SynthSpec::default()
    })?;
    let w = &set.windows[0];
    let p = model.predict_window_values(&w.z, w.steps)?;
    println!(
        "label {}, probability {:.4}, logit {:+.4}",
        w.label, p.probability, p.logit
    );
    let peak = |a: &[f64]| {
        a.iter()
            .enumerate()
            .fold((0, 0.0), |m, (i, &v)| if v > m.1 { (i, v) } else { m })
    };
    println!(
        "forward attention peak {:?}, backward peak {:?}",
        peak(&p.alpha_forward),
        peak(&p.alpha_backward)
    );

    let mut bytes = Vec::new();
    save_checkpoint(&model, &mut bytes)?;
    let back: BiMambaClassifier<f32> = load_checkpoint(bytes.as_slice())?;
    println!("checkpoint {} bytes, reload identical: {}", bytes.len(), back == model);
    Ok(())
}
