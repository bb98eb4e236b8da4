//! Train Bi-ISFMF on a small synthetic dataset and compare it with PMF.

use bimf::data::{generate_synthetic, SplitSpec, SyntheticConfig};
use bimf::eval::{evaluate, prepare_split, Protocol};
use bimf::factorization::{train, Hyperparams, ModelKind};
use bimf::network::{Architecture, LayerSpec, Shape};

fn main() -> bimf::Result<()> {
    let synthetic = SyntheticConfig {
        num_users: 150,
        num_items: 120,
        latent_dim: 4,
        observed_fraction: 0.06,
        image_height: 12,
        image_width: 12,
        ..SyntheticConfig::default()
    };
    let (ds, images, _truth) = generate_synthetic(&synthetic, 7)?;
    println!("{}", ds.stats());

    let protocol = Protocol { cold_item_fraction: 0.2, images_per_user: 4 };
    let split = prepare_split(&ds, Some(&images), &SplitSpec::default(), &protocol)?;
    let data = split.training_data(Some(&images))?;

    let arch = Architecture {
        input: Shape::new(3, 12, 12),
        layers: vec![
            LayerSpec::Conv { kernel: 3, channels: 8, stride: 1 },
            LayerSpec::Relu,
            LayerSpec::MaxPool { window: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { out_dim: 32 },
        ],
    };
    let mut hyper = Hyperparams { k: 4, lambda_w_user: 10.0, outer_max_iters: 20, ..Hyperparams::default() };
    hyper.optimizer.learning_rate = 0.01;

    for kind in [ModelKind::Pmf, ModelKind::BiIsfmf] {
        let (model, report) = train(kind, &data, &hyper, &arch, protocol.images_per_user)?;
        let eval = evaluate(&model, &split.test, Some(&images))?;
        println!(
            "{kind}: {} iterations, test rmse {:.4} (cold items {:.4})",
            report.iterations.len(),
            eval.rmse,
            eval.rmse_cold.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
