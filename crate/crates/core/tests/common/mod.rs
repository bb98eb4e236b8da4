#![allow(dead_code)]

use bimf::data::{ImageTensor, RatingScale, RatingsDataset};
use bimf::network::{Architecture, LayerSpec, Shape};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rng: &mut impl Rng, shape: Shape) -> ImageTensor {
    let pixels = (0..shape.len()).map(|_| rng.random::<f64>()).collect();
    ImageTensor::new(shape.height, shape.width, shape.channels, pixels).unwrap()
}

/// conv3x8 -> relu -> pool2 -> flatten -> dense32 on 3 x side x side.
pub fn small_arch(side: usize) -> Architecture {
    Architecture {
        input: Shape::new(3, side, side),
        layers: vec![
            LayerSpec::Conv { kernel: 3, channels: 8, stride: 1 },
            LayerSpec::Relu,
            LayerSpec::MaxPool { window: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { out_dim: 32 },
        ],
    }
}

pub fn random_dataset(
    rng: &mut impl Rng,
    n: usize,
    m: usize,
    density: f64,
) -> RatingsDataset {
    let mut triplets = Vec::new();
    for i in 0..n {
        for j in 0..m {
            if rng.random::<f64>() < density {
                triplets.push((i, j, rng.random_range(1.0..=5.0)));
            }
        }
    }
    RatingsDataset::from_triplets(n, m, triplets, RatingScale::default()).unwrap()
}
