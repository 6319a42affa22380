//! Train the multilayer perceptron on noisy XOR.

use iclab::grid::Grid;
use iclab::learn::{accuracy, mlp_predict, mlp_train, MlpSpec, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 400;
    let mut labels = Vec::with_capacity(n);
    let x = Grid::from_fn(n, 2, |r, c| {
        if c == 0 {
            labels.push(r % 4 == 1 || r % 4 == 2);
        }
        let bit = if c == 0 { r % 2 } else { (r / 2) % 2 };
        bit as f64 + rng.random_range(-0.2..0.2)
    });
    let spec = MlpSpec::new(2, vec![8, 4])?;
    let cfg = TrainConfig {
        learning_rate: 0.5,
        max_epochs: 400,
        ..TrainConfig::mlp(3)
    };
    let model = mlp_train(&x, &labels, &spec, &cfg)?;
    let predicted: Vec<bool> = (0..n)
        .map(|r| mlp_predict(&model, x.row(r)).map(|p| p >= 0.5))
        .collect::<Result<_, _>>()?;
    println!("layers {:?}, {} parameters", spec.layer_sizes(), spec.param_count());
    println!("training accuracy {:.3}", accuracy(&predicted, &labels));
    for (a, b) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
        println!("  xor({a}, {b}) -> {:.3}", mlp_predict(&model, &[a, b])?);
    }
    Ok(())
}
