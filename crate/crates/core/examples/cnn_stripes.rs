//! The convolutional network on a toy task: horizontal vs vertical stripes.

use iclab::grid::Grid;
use iclab::learn::{accuracy, cnn_predict, cnn_train, CnnSpec, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIDE: usize = 12;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let standard = CnnSpec::standard(40, 240);
    let chain: Vec<String> = standard
        .shape_chain()
        .iter()
        .map(|s| format!("{}x{}x{}", s.rows, s.cols, s.channels))
        .collect();
    println!(
        "standard 40x240 network: {} -> fc {}",
        chain.join(" -> "),
        standard.flatten_len()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 200;
    let labels: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    let mut data = Vec::with_capacity(n * SIDE * SIDE);
    for &vertical in &labels {
        let period = rng.random_range(3..6);
        let phase = rng.random_range(0..period);
        for r in 0..SIDE {
            for c in 0..SIDE {
                let k = if vertical { c } else { r };
                let on = (k + phase) % period < period / 2 + 1;
                data.push(f32::from(on) + rng.random_range(-0.3f32..0.3));
            }
        }
    }
    let x = Grid::from_vec(n, SIDE * SIDE, data);
    let spec = CnnSpec {
        input_rows: SIDE,
        input_cols: SIDE,
        kernel: 3,
        conv_features: vec![4, 8],
        fc: vec![16],
        classes: 2,
    };
    let cfg = TrainConfig {
        batch_budget: Some(300),
        batch_size: 16,
        ..TrainConfig::cnn(9)
    };
    let model = cnn_train(&x, &labels, &spec, &cfg)?;
    let predicted: Vec<bool> = (0..n)
        .map(|r| cnn_predict(&model, x.row(r)).map(|p| p[1] >= p[0]))
        .collect::<Result<_, _>>()?;
    println!(
        "training accuracy {:.3} after 300 batches",
        accuracy(&predicted, &labels)
    );
    Ok(())
}
