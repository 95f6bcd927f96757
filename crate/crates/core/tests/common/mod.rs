//! Test-only oracles shared by the integration and acceptance suites.

#![allow(dead_code)]

use drawering::drawers::{DrawerSet, DrawerTargets};
use drawering::nn::{LayerSpec, Mode, Network, Tensor2};
use drawering::trainer::{DraweredModel, ModelSpec, TrainRng};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
/// Gradients smaller than this are compared relative to it instead of their
/// own magnitude; central differences carry roughly 1e-10 absolute noise.
pub const FD_FLOOR: f64 = 1e-5;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

/// Central differences of `f` at `x`.
pub fn central_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest relative error between two gradient vectors.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor2 {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    Tensor2::new(rows, cols, data).unwrap()
}

/// Reduced-width copy of the published drawered architecture.
pub fn reduced_spec() -> ModelSpec {
    ModelSpec {
        core: vec![
            LayerSpec::linear(20, 16),
            LayerSpec::Relu,
            LayerSpec::linear(16, 32),
            LayerSpec::Relu,
        ],
        head_g: vec![LayerSpec::linear(32, 1)],
        head_s: Some(vec![
            LayerSpec::linear(32, 64),
            LayerSpec::Relu,
            LayerSpec::dropout(0.5),
            LayerSpec::linear(64, 9),
            LayerSpec::Sigmoid,
        ]),
    }
}

/// Which parameters of a drawered model to perturb.
#[derive(Clone, Copy, Debug)]
pub enum Part {
    Core,
    HeadG,
    HeadS,
}

fn params_of(model: &DraweredModel, part: Part) -> Vec<f64> {
    match part {
        Part::Core => model.core().params().flatten(),
        Part::HeadG => model.head_g().params().flatten(),
        Part::HeadS => model.head_s().unwrap().params().flatten(),
    }
}

fn set_params(model: &mut DraweredModel, part: Part, flat: &[f64]) {
    let bank = match part {
        Part::Core => model.core_mut().params_mut(),
        Part::HeadG => model.head_g_mut().params_mut(),
        Part::HeadS => model.head_s_mut().unwrap().params_mut(),
    };
    bank.assign_flat(flat).unwrap();
}

/// Numerical gradient of the regression loss (`aux = false`) or the auxiliary
/// loss (`aux = true`) with respect to one part's parameters. Dropout masks
/// are replayed from `rng_seed` on every evaluation.
pub fn numeric_grad(
    model: &DraweredModel,
    part: Part,
    aux: bool,
    batch: &Tensor2,
    y: &[f64],
    labels: Option<&DrawerTargets>,
    rng_seed: u64,
) -> Vec<f64> {
    let mut probe = model.clone();
    let x0 = params_of(model, part);
    central_diff(
        |p| {
            set_params(&mut probe, part, p);
            let out = probe
                .dual_backward(batch, y, labels, &mut TrainRng::new(rng_seed))
                .unwrap();
            if aux {
                out.loss_s
            } else {
                out.loss_g
            }
        },
        &x0,
        FD_STEP,
    )
}

/// Nested labels for `y` against evenly spaced boundaries.
pub fn nested_labels(y: &[f64], boundaries: Vec<f64>) -> DrawerTargets {
    let ds = DrawerSet::new(
        drawering::drawers::DrawerKind::Regular,
        drawering::drawers::DrawerMode::Nested,
        boundaries,
    )
    .unwrap();
    ds.encode_targets(y).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Checks parameter and input gradients of `net` under the scalar objective
/// `Σ out ⊙ weights` with a fixed dropout mask.
pub fn check_network(net: &Network, batch: &Tensor2, seed: u64) -> (f64, f64) {
    let mut r = rng(seed ^ 0xabc);
    let (out, _) = net
        .forward(
            batch,
            Mode::Train,
            Some(&mut ChaCha8Rng::seed_from_u64(seed)),
        )
        .unwrap();
    let weights = random_tensor(&mut r, out.rows(), out.cols());
    let objective = |n: &Network, x: &Tensor2| -> f64 {
        let (o, _) = n
            .forward(x, Mode::Train, Some(&mut ChaCha8Rng::seed_from_u64(seed)))
            .unwrap();
        o.data()
            .iter()
            .zip(weights.data())
            .map(|(a, b)| a * b)
            .sum()
    };

    let (_, tape) = net
        .forward(
            batch,
            Mode::Train,
            Some(&mut ChaCha8Rng::seed_from_u64(seed)),
        )
        .unwrap();
    let (bank, in_grad) = net.backward(tape, &weights).unwrap();

    let mut probe = net.clone();
    let numeric_params = central_diff(
        |p| {
            probe.params_mut().assign_flat(p).unwrap();
            objective(&probe, batch)
        },
        &net.params().flatten(),
        FD_STEP,
    );
    let param_err = if bank.param_count() > 0 {
        max_rel_err(&bank.flatten(), &numeric_params)
    } else {
        0.0
    };

    // Embedding index columns are integer lookups with no gradient.
    let skip = net
        .layers()
        .iter()
        .take_while(|l| matches!(l, LayerSpec::Embedding { .. }))
        .count();
    let free: Vec<usize> = (0..batch.data().len())
        .filter(|i| i % batch.cols() >= skip)
        .collect();
    let mut probe_x = batch.clone();
    let numeric_input = central_diff(
        |x| {
            for (&i, &v) in free.iter().zip(x) {
                probe_x.data_mut()[i] = v;
            }
            objective(net, &probe_x)
        },
        &free.iter().map(|&i| batch.data()[i]).collect::<Vec<_>>(),
        FD_STEP,
    );
    let analytic_input: Vec<f64> = free.iter().map(|&i| in_grad.data()[i]).collect();
    let input_err = max_rel_err(&analytic_input, &numeric_input);
    (param_err, input_err)
}
