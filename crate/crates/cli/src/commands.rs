use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bimf::data::{
    filter_dataset, generate_synthetic, load_available_images, load_ratings, write_packed,
    RatingScale, SyntheticLayout,
};
use bimf::eval::{compare_models, evaluate, grid_search, image_count_sweep, prepare_split};
use bimf::factorization::{train, Checkpoint, ColdInputs};
use bimf::Error;

use crate::config::{read_json, write_json, RunConfig, SynthConfig};
use crate::data_io::{checkpoint_images, load_for_checkpoint, load_run_data};
use crate::failure::{create_dir, write, Failure};

pub struct IngestArgs {
    pub ratings: PathBuf,
    pub images: PathBuf,
    pub min_ratings: usize,
    pub out: PathBuf,
    pub image_size: usize,
    pub scale: RatingScale,
}

pub fn ingest(args: &IngestArgs) -> Result<(), Failure> {
    let raw = load_ratings(&args.ratings, args.scale)?;
    let size = (args.image_size, args.image_size);
    let store = load_available_images(&args.images, &raw, size)?;
    let ds = filter_dataset(&raw, &store, args.min_ratings)?;
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_packed(&ds, &args.out)?;
    println!("{}", ds.stats());
    Ok(())
}

pub fn synth(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<(), Failure> {
    let mut cfg: SynthConfig = match config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let (ds, store, truth) = generate_synthetic(&cfg.synthetic, cfg.seed)?;
    let img_dir = out.join("images");
    create_dir(&img_dir)?;

    let mut csv = String::from("user_id,item_id,rating\n");
    for r in ds.ratings() {
        writeln!(csv, "{},{},{}", ds.user_ids()[r.user], ds.item_ids()[r.item], r.value)
            .expect("string write");
    }
    write(&out.join("ratings.csv"), csv)?;
    for id in ds.item_ids() {
        let img = store.get(id).expect("every item is rendered");
        img.save_png(img_dir.join(format!("{id}.png")))?;
    }
    write_json(&out.join("ground_truth.json"), &truth)?;
    write_json(&out.join("effective_config.json"), &cfg)?;
    let layout = SyntheticLayout::new(
        cfg.synthetic.latent_dim,
        cfg.synthetic.image_height,
        cfg.synthetic.image_width,
    )?;
    log::debug!("synthetic layout {layout:?}");
    println!("{}", ds.stats());
    Ok(())
}

fn save_effective(cfg: &RunConfig) -> Result<(), Failure> {
    create_dir(&cfg.output_dir)?;
    write_json(&cfg.output_dir.join("effective_config.json"), cfg)
}

pub fn train_cmd(cfg: &RunConfig) -> Result<(), Failure> {
    save_effective(cfg)?;
    let (ds, images) = load_run_data(cfg)?;
    let split = prepare_split(&ds, images.as_ref(), &cfg.split_spec()?, &cfg.protocol())?;
    let data = split.training_data(images.as_ref())?;
    let out = &cfg.output_dir;
    let (ckpt, report) =
        match train(cfg.model, &data, &cfg.hyper, &cfg.architecture, cfg.images_per_user) {
            Ok(r) => r,
            Err(Error::Diverged { iteration, message, last_good }) => {
                let path = out.join("last_good.bimf");
                last_good.save(&path)?;
                return Err(Failure::Numerical(format!(
                    "training diverged at outer iteration {iteration}: {message}; \
                     last good state saved to {}",
                    path.display()
                )));
            }
            Err(e) => return Err(e.into()),
        };
    ckpt.save(out.join("model.bimf"))?;
    write_json(&out.join("train_report.json"), &report)?;
    write_packed(&split.validation, out.join("validation.bids"))?;
    write_packed(&split.test, out.join("test.bids"))?;
    println!(
        "{}: {} outer iterations, joint loss {:.6} -> {:.6}{}",
        cfg.model,
        report.iterations.len(),
        report.initial_loss,
        report.final_loss,
        if report.converged { " (converged)" } else { "" }
    );
    if !split.test.is_empty() {
        let eval = evaluate(&ckpt, &split.test, images.as_ref())?;
        write_json(&out.join("eval_report.json"), &eval)?;
        print_eval(&eval);
    }
    Ok(())
}

fn print_eval(r: &bimf::eval::EvalReport) {
    let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.6}"));
    println!("pairs      {:>8}", r.n_pairs);
    println!("rmse       {:>8.6}", r.rmse);
    println!("rmse_warm  {:>8} ({} pairs)", opt(r.rmse_warm), r.n_warm);
    println!("rmse_cold  {:>8} ({} pairs, {} by training mean)", opt(r.rmse_cold), r.n_cold, r.n_fallback);
}

pub fn eval_cmd(checkpoint: &Path, data: &Path, images: Option<&Path>, out: Option<&Path>) -> Result<(), Failure> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let test = load_for_checkpoint(data, &ckpt)?;
    if test.is_empty() {
        return Err(Failure::input(format!("{} holds no ratings", data.display())));
    }
    let store = match images {
        Some(dir) => checkpoint_images(dir, &ckpt)?,
        None => None,
    };
    let report = evaluate(&ckpt, &test, store.as_ref())?;
    print_eval(&report);
    if let Some(p) = out {
        write_json(p, &report)?;
    }
    Ok(())
}

pub fn grid_cmd(cfg: &RunConfig) -> Result<(), Failure> {
    save_effective(cfg)?;
    let (ds, images) = load_run_data(cfg)?;
    let split = prepare_split(&ds, images.as_ref(), &cfg.split_spec()?, &cfg.protocol())?;
    let res = grid_search(cfg.model, &split, images.as_ref(), &cfg.grid, &cfg.hyper, &cfg.architecture)?;
    let mut csv = String::from("lambda_u,lambda_v,validation_rmse\n");
    for c in &res.table {
        writeln!(csv, "{},{},{}", c.lambda_u, c.lambda_v, c.rmse).expect("string write");
    }
    write(&cfg.output_dir.join("grid.csv"), &csv)?;
    write_json(&cfg.output_dir.join("grid.json"), &res)?;
    println!("{:>10} {:>10} {:>12}", "lambda_u", "lambda_v", "val_rmse");
    for c in &res.table {
        println!("{:>10} {:>10} {:>12.6}", c.lambda_u, c.lambda_v, c.rmse);
    }
    println!("best: lambda_u={} lambda_v={} rmse={:.6}", res.best.lambda_u, res.best.lambda_v, res.best.rmse);
    Ok(())
}

pub fn compare_cmd(cfg: &RunConfig) -> Result<(), Failure> {
    save_effective(cfg)?;
    let (ds, images) = load_run_data(cfg)?;
    if images.is_none() && cfg.compare.kinds.iter().any(|k| k.uses_item_encoder()) {
        return Err(Failure::input("comparing image models needs an images directory"));
    }
    let spec = cfg.split_spec()?;
    let hyper = bimf::factorization::Hyperparams { seed: spec.seed, ..cfg.hyper.clone() };
    let table = compare_models(
        &ds,
        images.as_ref(),
        &cfg.compare.kinds,
        &cfg.compare.train_fractions,
        &cfg.protocol(),
        &hyper,
        &cfg.architecture,
        &cfg.grid,
    )?;
    write(&cfg.output_dir.join("comparison.csv"), table.to_csv())?;
    write_json(&cfg.output_dir.join("comparison.json"), &table)?;
    let text = format!("{table}\n");
    write(&cfg.output_dir.join("comparison.txt"), &text)?;
    print!("{text}");
    Ok(())
}

pub fn sweep_cmd(cfg: &RunConfig) -> Result<(), Failure> {
    save_effective(cfg)?;
    let (ds, images) = load_run_data(cfg)?;
    let images = images.ok_or_else(|| Failure::input("the image-count sweep needs an images directory"))?;
    let points = image_count_sweep(
        &ds,
        &images,
        &cfg.sweep.image_counts,
        cfg.sweep.repeats,
        &cfg.split_spec()?,
        &cfg.protocol(),
        &cfg.hyper,
        &cfg.architecture,
    )?;
    let mut csv = String::from("images_per_user,mean_rmse,variance,repeats\n");
    println!("{:>6} {:>10} {:>10}", "P", "mean", "variance");
    for p in &points {
        writeln!(csv, "{},{},{},{}", p.images_per_user, p.mean, p.variance, p.rmses.len()).expect("string write");
        println!("{:>6} {:>10.6} {:>10.3e}", p.images_per_user, p.mean, p.variance);
    }
    write(&cfg.output_dir.join("sweep.csv"), csv)?;
    write_json(&cfg.output_dir.join("sweep.json"), &points)
}

fn resolve_index(ids: &[String], key: &str, what: &str) -> Result<usize, Failure> {
    if let Some(pos) = ids.iter().position(|id| id == key) {
        return Ok(pos);
    }
    match key.parse::<usize>() {
        Ok(i) if i < ids.len() => Ok(i),
        _ => Err(Failure::input(format!("unknown {what} {key:?}"))),
    }
}

pub fn predict_cmd(checkpoint: &Path, user: &str, item: &str, images: Option<&Path>, clamp: bool) -> Result<(), Failure> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let i = resolve_index(&ckpt.user_ids, user, "user")?;
    let j = resolve_index(&ckpt.item_ids, item, "item")?;
    let store = match images {
        Some(dir) if ckpt.is_cold_item(j) => checkpoint_images(dir, &ckpt)?,
        _ => None,
    };
    let img = store.as_ref().and_then(|s| s.get(&ckpt.item_ids[j]).cloned());
    let cold = ColdInputs { item_image: img.as_deref(), user_images: None };
    let value = if clamp { ckpt.predict_clamped(i, j, &cold)? } else { ckpt.predict_with(i, j, &cold)? };
    println!("{value}");
    Ok(())
}
