//! Class-imbalance handling: positive weight, weighted BCE, accuracy
//! threshold search and flip calibration on a hand-made validation set.

use cogload::eval::compute_metrics;
use cogload::train::{calibrate_flip, compute_pos_weight, optimize_threshold, weighted_bce_value, WeightingMode};

fn main() -> cogload::Result<()> {
    let w = compute_pos_weight(100, 300, WeightingMode::InverseFrequency)?;
    println!("pos_weight for 100 positives / 300 negatives: {w}");
    println!(
        "BCE at z=0: unweighted {:.4}, weighted {:.4}",
        weighted_bce_value(&[0.0, 0.0], &[1, 0], 1.0),
        weighted_bce_value(&[0.0, 0.0], &[1, 0], w)
    );

    // Scores that run low overall: the 0.5 cut calls everything negative.
    let probs = [0.42, 0.38, 0.35, 0.31, 0.22, 0.18, 0.15, 0.30];
    let labels = [1, 1, 1, 0, 0, 0, 0, 1];
    let theta = optimize_threshold(&probs, &labels);
    let at_half = compute_metrics(&probs, &labels, 0.5, false)?;
    let tuned = compute_metrics(&probs, &labels, theta, false)?;
    println!(
        "0.5 cut: accuracy {:.3}, macro-F1 {:.3}",
        at_half.accuracy, at_half.f1_macro
    );
    println!(
        "tuned {theta:.3}: accuracy {:.3}, macro-F1 {:.3}",
        tuned.accuracy, tuned.f1_macro
    );

    // Inversely ranked scores get flipped.
    let inverted: Vec<f64> = probs.iter().map(|p| 1.0 - p).collect();
    println!(
        "flip original: {}, flip inverted: {}",
        calibrate_flip(&probs, &labels),
        calibrate_flip(&inverted, &labels)
    );
    Ok(())
}
