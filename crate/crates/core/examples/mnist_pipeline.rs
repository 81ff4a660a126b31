//! Loads MNIST IDX files (default `data/mnist-5k`), draws a seeded subset
//! and applies the preprocessing steps, printing provenance at each stage.
//! Pass another directory as the first argument.

use std::path::PathBuf;

use stochpool::data::{load_idx, local_contrast_normalize_auto, per_pixel_mean_subtract, scale_unit, subsample};

fn main() -> stochpool::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data/mnist-5k"));
    let train = load_idx(dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte"))?;
    let test = load_idx(dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte"))?;
    println!("train {} images {:?}, test {}", train.len(), train.image_dims(), test.len());
    println!("train class counts {:?}", train.class_counts());

    let small = scale_unit(&subsample(&train, 1000, 7)?)?;
    println!("subset class counts {:?}", small.class_counts());
    let (centered, _, mean) = per_pixel_mean_subtract(&small, &[])?;
    println!("mean image range {:.3}..{:.3}", mean.data().iter().cloned().fold(f64::MAX, f64::min), mean.max_abs());
    println!("steps {:?}", centered.provenance().steps());

    let lcn = local_contrast_normalize_auto(&small, 4)?;
    println!("after local contrast normalization, max |x| = {:.3}", lcn.images().max_abs());
    println!("steps {:?}", lcn.provenance().steps());
    Ok(())
}
