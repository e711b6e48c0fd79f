//! Fits a two-layer network to XOR with the tape-based autodiff engine and
//! compares one analytic gradient with a finite difference.
//!
//! ```text
//! cargo run --release --example autodiff -- [adam|adadelta]
//! ```

use domain_sieve::nn::{Adadelta, AdadeltaConfig, Adam, AdamConfig, Graph, Optimizer, ParamId, ParamStore, Tensor, Var};
use domain_sieve::rng::seeded;

fn loss(params: &ParamStore, x: &Tensor, labels: &[usize]) -> domain_sieve::Result<f64> {
    let mut g = Graph::new(params);
    let l = forward(&mut g, &params.ids().collect::<Vec<_>>(), x, labels)?;
    Ok(g.value(l).item())
}

fn forward(g: &mut Graph<'_>, ids: &[ParamId], x: &Tensor, labels: &[usize]) -> domain_sieve::Result<Var> {
    let x = g.constant(x.clone());
    let (w1, b1, w2, b2) = (g.param(ids[0]), g.param(ids[1]), g.param(ids[2]), g.param(ids[3]));
    let h = g.matmul(x, w1)?;
    let h = g.add_bias(h, b1)?;
    let h = g.tanh(h)?;
    let o = g.matmul(h, w2)?;
    let o = g.add_bias(o, b2)?;
    g.softmax_cross_entropy(o, labels)
}

fn main() -> domain_sieve::Result<()> {
    let use_adam = std::env::args().nth(1).as_deref() != Some("adadelta");
    let mut rng = seeded(3);
    let mut params = ParamStore::new();
    params.add("w1", Tensor::uniform(&[2, 8], -1.0, 1.0, &mut rng));
    params.add("b1", Tensor::zeros(&[1, 8]));
    params.add("w2", Tensor::uniform(&[8, 2], -1.0, 1.0, &mut rng));
    params.add("b2", Tensor::zeros(&[1, 2]));
    let x = Tensor::matrix(4, 2, vec![0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0])?;
    let labels = [0, 1, 1, 0];
    let ids: Vec<ParamId> = params.ids().collect();

    let grads = {
        let mut g = Graph::new(&params);
        let l = forward(&mut g, &ids, &x, &labels)?;
        g.backward(l)?
    };
    let w1 = params.find("w1").expect("w1");
    let analytic = grads.param(w1).expect("gradient").data()[0];
    let h = 1e-6;
    let mut shifted = params.clone();
    shifted.get_mut(w1).data_mut()[0] += h;
    let up = loss(&shifted, &x, &labels)?;
    shifted.get_mut(w1).data_mut()[0] -= 2.0 * h;
    let down = loss(&shifted, &x, &labels)?;
    println!("dL/dw1[0]: analytic {analytic:.8}, central difference {:.8}", (up - down) / (2.0 * h));

    let mut opt: Box<dyn Optimizer> = if use_adam {
        Box::new(Adam::new(AdamConfig { lr: 0.05, ..AdamConfig::default() }, &params))
    } else {
        Box::new(Adadelta::new(AdadeltaConfig::default(), &params))
    };
    for step in 0..=500 {
        let (value, grads) = {
            let mut g = Graph::new(&params);
            let l = forward(&mut g, &ids, &x, &labels)?;
            (g.value(l).item(), g.backward(l)?)
        };
        if step % 100 == 0 {
            println!("step {step:>3}: loss {value:.5}");
        }
        opt.step(&mut params, &grads);
    }
    Ok(())
}
