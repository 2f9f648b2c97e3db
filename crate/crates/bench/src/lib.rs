//! Deterministic fixtures shared by the benchmarks.

use seqmine_core::{ModelConfig, ModelParams, Tensor};

/// Default-sized model: `d = 3`, `h = 64`, windows `[3, 7, 11]`, four classes.
pub fn model(hidden_size: usize) -> ModelParams {
    let config = ModelConfig {
        input_dim: 3,
        hidden_size,
        window_lengths: vec![3, 7, 11],
        num_classes: 4,
    };
    ModelParams::init(&config, 1).expect("valid config")
}

/// A `[len, 3]` input with a fixed, irregular pattern.
pub fn input(len: usize) -> Tensor {
    let data = (0..len * 3)
        .map(|i| ((i * 37 % 101) as f64 / 50.0 - 1.0).sin())
        .collect();
    Tensor::new(vec![len, 3], data).expect("finite input")
}

pub fn energies(len: usize) -> Tensor {
    let data = (0..len)
        .map(|i| ((i * 13 % 29) as f64 / 7.0).cos())
        .collect();
    Tensor::new(vec![len], data).expect("finite energies")
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixtures_are_consistent() {
        let m = super::model(8);
        let x = super::input(20);
        assert!(seqmine_core::forward(&x, &m).is_ok());
        assert_eq!(super::energies(5).shape(), &[5]);
    }
}
