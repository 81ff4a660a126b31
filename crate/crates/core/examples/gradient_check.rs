//! Central finite differences against backprop on a small network with
//! stochastic pooling. The switches drawn in the first pass are replayed
//! so the loss is a smooth function of the weights.

use stochpool::net::{network_backward, network_forward, network_forward_with, ForwardOptions, LayerSpec, NetParams, NetworkSpec, Phase};
use stochpool::pooling::PoolingMode;
use stochpool::rng::{Purpose, RngStream};
use stochpool::{Shape4, Tensor4};

fn main() -> stochpool::Result<()> {
    let spec = NetworkSpec {
        input: (1, 8, 8),
        layers: vec![
            LayerSpec::Conv { maps: 3, kernel: 3, stride: 1, padding: 1 },
            LayerSpec::Relu,
            LayerSpec::Pool { size: 3, stride: 2, train: PoolingMode::Stochastic, test: PoolingMode::ProbWeight },
            LayerSpec::Softmax { classes: 4 },
        ],
        init_std: 0.3,
    };
    let net = spec.resolve()?;
    let mut params = NetParams::init(&net, &mut RngStream::derive(1, Purpose::Init));
    let x = Tensor4::from_fn(Shape4::new(2, 1, 8, 8), |n, _, y, x| ((n * 31 + y * 7 + x * 5) % 11) as f64 / 10.0 - 0.3);
    let labels = [1, 3];

    let trace = network_forward(&net, &params, &x, Phase::Train, &mut RngStream::derive(1, Purpose::Pooling))?;
    let grads = network_backward(&net, &params, &trace, &labels)?;
    let switches = trace.switches();
    let options = ForwardOptions { phase: Phase::Train, pool_override: None, replay: Some(&switches) };
    let loss = |p: &NetParams| -> stochpool::Result<f64> {
        let t = network_forward_with(&net, p, &x, options, &mut RngStream::new(0))?;
        Ok(network_backward(&net, p, &t, &labels)?.loss)
    };

    let h = 1e-5;
    let analytic: Vec<(String, Vec<f64>)> =
        grads.params.entries().into_iter().map(|(info, g)| (info.name(), g.to_vec())).collect();
    for (k, (name, g)) in analytic.iter().enumerate() {
        let mut worst = 0.0f64;
        for i in 0..g.len() {
            let bump = |p: &mut NetParams, d: f64| p.entries_mut()[k].1[i] += d;
            bump(&mut params, h);
            let up = loss(&params)?;
            bump(&mut params, -2.0 * h);
            let down = loss(&params)?;
            bump(&mut params, h);
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max((numeric - g[i]).abs() / numeric.abs().max(g[i].abs()).max(1e-6));
        }
        println!("{name:<28} {:>4} values, max relative error {worst:.2e}", g.len());
    }
    Ok(())
}
