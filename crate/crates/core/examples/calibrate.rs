//! Cross-validated isotonic calibration with ECE before and after.

use radlabel::confidence::{calibrate_cv, expected_calibration_error, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    // raw scores are overconfident: the true hit rate is the square of the score
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samples: Vec<Sample> = (0..5000)
        .map(|_| {
            let p: f64 = rng.random_range(0.0..1.0);
            Sample::new(p, rng.random_bool(p * p))
        })
        .collect();
    let cv = calibrate_cv(&samples, 3, 7).unwrap();
    let after: Vec<Sample> = cv.calibrated.iter().zip(&samples).map(|(c, s)| Sample::new(*c, s.correct)).collect();
    println!("ECE before {:.4}", expected_calibration_error(&samples, 10).unwrap());
    println!("ECE after  {:.4}", expected_calibration_error(&after, 10).unwrap());
    for p in [0.2, 0.5, 0.8, 0.95] {
        println!("  {p:.2} -> {:.3}", cv.model.apply(p));
    }
}
