//! Pools one rectified feature map with every mode and prints the outputs,
//! the sampled switches and how many sub-models the layer can select.

use stochpool::pooling::{
    enumerate_regions, model_count, pool_forward, region_probabilities, PoolingGeometry, PoolingMode,
};
use stochpool::rng::{Purpose, RngStream};
use stochpool::{Shape4, Tensor4};

fn main() -> stochpool::Result<()> {
    let input = Tensor4::from_fn(Shape4::new(1, 1, 6, 6), |_, _, y, x| ((y * 7 + x * 3) % 5) as f64);
    let geometry = PoolingGeometry::new((3, 3), 2, (6, 6))?;
    let regions = enumerate_regions(&geometry)?;
    println!("{} regions over a 6x6 map with 3x3 windows, stride 2", regions.len());

    let first: Vec<f64> = regions[0].iter().map(|&i| input.data()[i]).collect();
    println!("region 0 activations {first:?}");
    println!("region 0 probabilities {:.3?}", region_probabilities(&first)?.probabilities());

    let mut stream = RngStream::derive(42, Purpose::Pooling);
    for mode in [PoolingMode::Average, PoolingMode::Max, PoolingMode::Stochastic, PoolingMode::ProbWeight] {
        let pooled = pool_forward(&input, &geometry, mode, &mut stream)?;
        println!("{mode:>10}: {:.3?}", pooled.output.data());
        if let Some(sw) = pooled.switches {
            println!("{:>10}  switches {:?}", "", sw.cells());
        }
    }

    let count = model_count(9, regions.len() as u64)?;
    println!("3x3 regions x {} give {count:?} selectable models", regions.len());
    println!("a layer with 10^4 such regions: 10^{:.1} models", model_count(9, 10_000)?.log10());
    Ok(())
}
