//! Central-difference gradient checks.

use domain_sieve::classifier::{ClassifierConfig, ClassifierModel, EncoderKind};
use domain_sieve::nn::{Gradients, Graph, ParamStore, Tensor, Var};
use domain_sieve::rng::seeded;
use domain_sieve::Result;

pub const STEP: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, floor)`; the floor keeps near-zero gradients
/// from turning rounding noise into large ratios.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-5)
}

/// Projects `out` onto fixed random weights so every output coordinate
/// contributes to a scalar loss.
fn project(g: &mut Graph<'_>, out: Var, seed: u64) -> Result<Var> {
    let (r, c) = g.value(out).dims();
    let w = Tensor::uniform(&[r, c], -1.0, 1.0, &mut seeded(seed));
    let prod = g.mul_const(out, w)?;
    g.sum(prod)
}

/// Worst relative error between analytic and numeric gradients of a
/// projected op output with respect to each input tensor.
pub fn check_op<F>(inputs: &[Tensor], seed: u64, build: F) -> f64
where
    F: for<'p> Fn(&mut Graph<'p>, &[Var]) -> Result<Var>,
{
    let empty = ParamStore::new();
    let eval = |xs: &[Tensor]| -> f64 {
        let mut g = Graph::new(&empty);
        let vars: Vec<Var> = xs.iter().map(|t| g.leaf(t.clone())).collect();
        let out = build(&mut g, &vars).expect("op");
        let loss = project(&mut g, out, seed).expect("projection");
        g.value(loss).item()
    };

    let mut g = Graph::new(&empty);
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = build(&mut g, &vars).expect("op");
    let loss = project(&mut g, out, seed).expect("projection");
    let grads = g.backward(loss).expect("backward");

    let mut worst = 0.0f64;
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads.wrt(*v).cloned().unwrap_or_else(|| Tensor::zeros(inputs[k].shape()));
        for j in 0..inputs[k].len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[j] += STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[j] -= STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * STEP);
            worst = worst.max(rel_err(analytic.data()[j], numeric));
        }
    }
    worst
}

/// Worst relative error over every coordinate of every parameter, given
/// analytic gradients and a scalar loss recomputed from a parameter store.
pub fn check_params<L>(params: &ParamStore, grads: &Gradients, loss: L) -> f64
where
    L: Fn(&ParamStore) -> f64,
{
    let mut worst = 0.0f64;
    for id in params.ids() {
        let analytic = grads.param(id).cloned().unwrap_or_else(|| Tensor::zeros(params.get(id).shape()));
        let mut p = params.clone();
        for j in 0..params.get(id).len() {
            let orig = p.get(id).data()[j];
            p.get_mut(id).data_mut()[j] = orig + STEP;
            let up = loss(&p);
            p.get_mut(id).data_mut()[j] = orig - STEP;
            let down = loss(&p);
            p.get_mut(id).data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max(rel_err(analytic.data()[j], numeric));
        }
    }
    worst
}

pub type OpBuilder = Box<dyn for<'p> Fn(&mut Graph<'p>, &[Var]) -> Result<Var>>;

/// Every differentiable op with input shapes for a check.
pub fn op_cases() -> Vec<(&'static str, Vec<Vec<usize>>, OpBuilder)> {
    let mask = Tensor::matrix(2, 3, vec![0.0, 2.0, 2.0, 0.0, 2.0, 0.0]).unwrap();
    vec![
        ("matmul", vec![vec![3, 4], vec![4, 2]], Box::new(|g, v| g.matmul(v[0], v[1]))),
        ("add_bias", vec![vec![3, 4], vec![1, 4]], Box::new(|g, v| g.add_bias(v[0], v[1]))),
        ("add", vec![vec![2, 3], vec![2, 3]], Box::new(|g, v| g.add(v[0], v[1]))),
        ("mul", vec![vec![2, 3], vec![2, 3]], Box::new(|g, v| g.mul(v[0], v[1]))),
        ("mul_const", vec![vec![2, 3]], Box::new(move |g, v| g.mul_const(v[0], mask.clone()))),
        ("sum", vec![vec![3, 3]], Box::new(|g, v| g.sum(v[0]))),
        ("relu", vec![vec![4, 5]], Box::new(|g, v| g.relu(v[0]))),
        ("tanh", vec![vec![4, 5]], Box::new(|g, v| g.tanh(v[0]))),
        ("sigmoid", vec![vec![4, 5]], Box::new(|g, v| g.sigmoid(v[0]))),
        ("softmax_rows", vec![vec![3, 4]], Box::new(|g, v| g.softmax_rows(v[0]))),
        (
            "softmax_cross_entropy",
            vec![vec![4, 2]],
            Box::new(|g, v| g.softmax_cross_entropy(v[0], &[0, 1, 1, 0])),
        ),
        ("concat_cols", vec![vec![2, 3], vec![2, 1]], Box::new(|g, v| g.concat_cols(&[v[0], v[1]]))),
        ("slice_cols", vec![vec![3, 5]], Box::new(|g, v| g.slice_cols(v[0], 1, 3))),
        ("slice_rows", vec![vec![5, 2]], Box::new(|g, v| g.slice_rows(v[0], 2, 2))),
        ("embedding", vec![vec![6, 3]], Box::new(|g, v| g.embedding(v[0], &[1, 4, 4, 0, 5]))),
        (
            "blend",
            vec![vec![3, 2], vec![3, 2]],
            Box::new(|g, v| g.blend(&[true, false, true], v[0], v[1])),
        ),
        // Two sequences of length 5, d = 3, width 2, 4 filters.
        ("conv1d", vec![vec![10, 3], vec![6, 4]], Box::new(|g, v| g.conv1d(v[0], v[1], 2, 5, 2))),
        ("max_over_time", vec![vec![8, 3]], Box::new(|g, v| g.max_over_time(v[0], 4, &[4, 2]))),
    ]
}

/// Worst error of one op case for one seed.
pub fn check_case(shapes: &[Vec<usize>], build: &OpBuilder, seed: u64) -> f64 {
    let inputs: Vec<Tensor> = shapes
        .iter()
        .enumerate()
        .map(|(k, s)| Tensor::uniform(s, -1.0, 1.0, &mut seeded(seed * 31 + k as u64)))
        .collect();
    check_op(&inputs, seed, build)
}

/// Toy classifier with every parameter moved off the zero-bias kinks of
/// the fresh initialization.
pub fn toy_model(kind: EncoderKind, seed: u64) -> ClassifierModel {
    let cfg = ClassifierConfig {
        embed_dim: 4,
        cnn_widths: vec![2, 3],
        cnn_feature_maps: 3,
        lstm_units: 3,
        hidden: vec![5, 4],
        ..ClassifierConfig::new(kind)
    };
    let mut m = ClassifierModel::new(cfg, 10, seed).unwrap();
    let mut rng = seeded(seed + 100);
    let ids: Vec<_> = m.params().ids().collect();
    for id in ids {
        let shape = m.params().get(id).shape().to_vec();
        *m.params_mut().get_mut(id) = Tensor::uniform(&shape, -0.5, 0.5, &mut rng);
    }
    m.zero_pad_embedding();
    m
}

/// Worst parameter-gradient error of a full classifier on a toy batch.
pub fn check_model(kind: EncoderKind, seed: u64) -> f64 {
    let batch: Vec<Vec<u32>> = vec![vec![4, 5, 6, 7], vec![8, 9], vec![5, 5, 4, 9, 6, 7], vec![6]];
    let refs: Vec<&[u32]> = batch.iter().map(|s| s.as_slice()).collect();
    let labels = [1, 0, 1, 0];
    let model = toy_model(kind, seed);
    let mut g = Graph::new(model.params());
    let logits = model.logits_graph(&mut g, &refs, None).unwrap();
    let loss = g.softmax_cross_entropy(logits, &labels).unwrap();
    let grads = g.backward(loss).unwrap();
    check_params(model.params(), &grads, |p| {
        let mut m = model.clone();
        m.set_params(p.clone()).unwrap();
        m.mean_loss(&refs, &labels, 16).unwrap()
    })
}
