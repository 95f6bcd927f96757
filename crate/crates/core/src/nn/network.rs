use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::sigmoid;
use super::{GradientBank, LayerSpec, ParamBank, ParamGroup, Tensor2};
use crate::error::{Error, Result};

static NEXT_NETWORK_ID: AtomicU64 = AtomicU64::new(1);

fn next_id() -> u64 {
    NEXT_NETWORK_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
enum TapeEntry {
    Linear { input: Tensor2 },
    Relu { input: Tensor2 },
    Sigmoid { output: Tensor2 },
    Dropout { mask: Option<Vec<f64>> },
}

/// Everything one backward pass needs from the forward pass that produced it.
///
/// A tape is consumed by [`Network::backward`]; it is rejected if the network's
/// parameters were modified after the forward pass.
#[derive(Debug, Clone)]
pub struct ActivationTape {
    network_id: u64,
    version: u64,
    mode: Mode,
    depth: usize,
    rows: usize,
    output_cols: usize,
    embed_indices: Vec<Vec<usize>>,
    passthrough: usize,
    entries: Vec<TapeEntry>,
}

impl ActivationTape {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Number of layers the forward pass executed.
    pub fn depth(&self) -> usize {
        self.depth
    }
}

/// A sequential dense network with its parameters.
#[derive(Debug)]
pub struct Network {
    layers: Vec<LayerSpec>,
    params: ParamBank,
    slots: Vec<Option<usize>>,
    embed_count: usize,
    input_dim: Option<usize>,
    output_dim: Option<usize>,
    seed: u64,
    stream: u64,
    id: u64,
    version: u64,
    ops: AtomicU64,
}

impl Clone for Network {
    fn clone(&self) -> Self {
        Self {
            layers: self.layers.clone(),
            params: self.params.clone(),
            slots: self.slots.clone(),
            embed_count: self.embed_count,
            input_dim: self.input_dim,
            output_dim: self.output_dim,
            seed: self.seed,
            stream: self.stream,
            id: next_id(),
            version: 0,
            ops: AtomicU64::new(0),
        }
    }
}

struct Layout {
    slots: Vec<Option<usize>>,
    embed_count: usize,
    input_dim: Option<usize>,
    output_dim: Option<usize>,
}

fn layout(spec: &[LayerSpec]) -> Result<Layout> {
    if spec.is_empty() {
        return Err(Error::Spec("empty layer list".into()));
    }
    let embed_count = spec
        .iter()
        .take_while(|l| matches!(l, LayerSpec::Embedding { .. }))
        .count();
    let embed_width: usize = spec[..embed_count]
        .iter()
        .map(|l| match l {
            LayerSpec::Embedding { dim, .. } => *dim,
            _ => 0,
        })
        .sum();

    let mut slots = Vec::with_capacity(spec.len());
    let mut next_slot = 0;
    let mut width: Option<usize> = None;
    let mut input_dim: Option<usize> = None;

    for (i, layer) in spec.iter().enumerate() {
        match *layer {
            LayerSpec::Embedding { vocab, dim } => {
                if i >= embed_count {
                    return Err(Error::Spec(format!(
                        "layer {i}: embeddings are only allowed as the leading input stage"
                    )));
                }
                if vocab == 0 || dim == 0 {
                    return Err(Error::Spec(format!(
                        "layer {i}: {layer} has a zero dimension"
                    )));
                }
            }
            LayerSpec::Linear { input, output } => {
                if input == 0 || output == 0 {
                    return Err(Error::Spec(format!(
                        "layer {i}: {layer} has a zero dimension"
                    )));
                }
                match width {
                    Some(w) if w != input => {
                        return Err(Error::Spec(format!(
                            "layer {i}: {layer} expects {input} inputs but receives {w}"
                        )));
                    }
                    Some(_) => {}
                    None if embed_count > 0 => {
                        if input < embed_width {
                            return Err(Error::Spec(format!(
                                "layer {i}: {layer} is narrower than the {embed_width} embedding outputs"
                            )));
                        }
                        input_dim = Some(embed_count + input - embed_width);
                    }
                    None => input_dim = Some(input),
                }
                width = Some(output);
            }
            LayerSpec::Dropout { p } => {
                if !(0.0..1.0).contains(&p) {
                    return Err(Error::Spec(format!(
                        "layer {i}: dropout rate {p} outside [0, 1)"
                    )));
                }
            }
            LayerSpec::Relu | LayerSpec::Sigmoid => {}
        }
        if i + 1 == embed_count {
            // The stage output is only known once the next Linear fixes the
            // passthrough width; with no further layers there is none.
            if spec.len() == embed_count {
                input_dim = Some(embed_count);
                width = Some(embed_width);
            } else if !matches!(spec[embed_count], LayerSpec::Linear { .. }) {
                return Err(Error::Spec(
                    "the embedding stage must be followed by a Linear layer".into(),
                ));
            }
        }
        if layer.is_parameterized() {
            slots.push(Some(next_slot));
            next_slot += 1;
        } else {
            slots.push(None);
        }
    }

    Ok(Layout {
        slots,
        embed_count,
        input_dim,
        output_dim: width,
    })
}

/// Builds a network whose parameters are drawn from stream 0 of `seed`.
pub fn build_network(spec: &[LayerSpec], seed: u64) -> Result<Network> {
    Network::build(spec, seed, 0)
}

impl Network {
    /// Builds a network, drawing its initial parameters from the ChaCha stream
    /// `(seed, stream)`. Identical arguments always give bit-identical
    /// parameters.
    ///
    /// Linear weights are uniform in `±sqrt(6 / fan_in)` with zero biases;
    /// embedding rows are uniform in `±sqrt(3 / dim)` (unit expected row norm).
    pub fn build(spec: &[LayerSpec], seed: u64, stream: u64) -> Result<Self> {
        let layout = layout(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);

        let mut groups = Vec::new();
        for layer in spec {
            match *layer {
                LayerSpec::Linear { input, output } => {
                    let limit = (6.0 / input as f64).sqrt();
                    let data = (0..input * output)
                        .map(|_| rng.random_range(-limit..limit))
                        .collect();
                    groups.push(ParamGroup {
                        weight: Tensor2::new(input, output, data)?,
                        bias: vec![0.0; output],
                    });
                }
                LayerSpec::Embedding { vocab, dim } => {
                    let limit = (3.0 / dim as f64).sqrt();
                    let data = (0..vocab * dim)
                        .map(|_| rng.random_range(-limit..limit))
                        .collect();
                    groups.push(ParamGroup {
                        weight: Tensor2::new(vocab, dim, data)?,
                        bias: Vec::new(),
                    });
                }
                _ => {}
            }
        }

        Ok(Self {
            layers: spec.to_vec(),
            params: ParamBank::new(groups),
            slots: layout.slots,
            embed_count: layout.embed_count,
            input_dim: layout.input_dim,
            output_dim: layout.output_dim,
            seed,
            stream,
            id: next_id(),
            version: 0,
            ops: AtomicU64::new(0),
        })
    }

    /// Rebuilds a network from a spec and an explicit parameter bank.
    pub fn from_params(
        spec: &[LayerSpec],
        params: ParamBank,
        seed: u64,
        stream: u64,
    ) -> Result<Self> {
        let mut net = Self::build(spec, seed, stream)?;
        if !net.params.is_congruent(&params) {
            return Err(Error::Shape(
                "parameter bank does not match layer spec".into(),
            ));
        }
        net.params = params;
        Ok(net)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &ParamBank {
        &self.params
    }

    /// Mutable access to the parameters. Invalidates outstanding tapes.
    pub fn params_mut(&mut self) -> &mut ParamBank {
        self.version += 1;
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    /// Width of the input batch, or `None` for purely elementwise networks.
    pub fn input_dim(&self) -> Option<usize> {
        self.input_dim
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.output_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Multiply-adds and elementwise operations executed since the last reset.
    pub fn op_count(&self) -> u64 {
        self.ops.load(Ordering::Relaxed)
    }

    pub fn reset_op_count(&self) {
        self.ops.store(0, Ordering::Relaxed);
    }

    fn count(&self, n: usize) {
        self.ops.fetch_add(n as u64, Ordering::Relaxed);
    }

    fn has_terminal_sigmoid(&self) -> bool {
        matches!(self.layers.last(), Some(LayerSpec::Sigmoid))
    }

    pub fn forward(
        &self,
        batch: &Tensor2,
        mode: Mode,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<(Tensor2, ActivationTape)> {
        let (out, tape) = self.run(batch, mode, rng, self.layers.len(), true)?;
        Ok((out, tape.expect("tape recorded")))
    }

    /// Forward pass that stops before a trailing Sigmoid, returning logits for
    /// losses that fuse the sigmoid.
    pub fn forward_logits(
        &self,
        batch: &Tensor2,
        mode: Mode,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<(Tensor2, ActivationTape)> {
        let depth = self.layers.len() - usize::from(self.has_terminal_sigmoid());
        let (out, tape) = self.run(batch, mode, rng, depth, true)?;
        Ok((out, tape.expect("tape recorded")))
    }

    /// Eval-mode forward pass without recording a tape.
    pub fn predict(&self, batch: &Tensor2) -> Result<Tensor2> {
        Ok(self
            .run(batch, Mode::Eval, None, self.layers.len(), false)?
            .0)
    }

    /// Eval-mode logits without recording a tape.
    pub fn predict_logits(&self, batch: &Tensor2) -> Result<Tensor2> {
        let depth = self.layers.len() - usize::from(self.has_terminal_sigmoid());
        Ok(self.run(batch, Mode::Eval, None, depth, false)?.0)
    }

    fn run(
        &self,
        batch: &Tensor2,
        mode: Mode,
        mut rng: Option<&mut dyn RngCore>,
        depth: usize,
        record: bool,
    ) -> Result<(Tensor2, Option<ActivationTape>)> {
        if let Some(d) = self.input_dim {
            if batch.cols() != d {
                return Err(Error::Shape(format!(
                    "batch has {} columns, network expects {d}",
                    batch.cols()
                )));
            }
        }
        let rows = batch.rows();
        let mut embed_indices = Vec::new();
        let mut passthrough = 0;

        let mut x = if self.embed_count > 0 {
            let (out, idx) = self.embed(batch)?;
            passthrough = batch.cols() - self.embed_count;
            if record {
                embed_indices = idx;
            }
            out
        } else {
            batch.clone()
        };

        let mut entries = Vec::new();
        for i in self.embed_count..depth {
            let layer = &self.layers[i];
            let (next, entry) = match *layer {
                LayerSpec::Linear { input, output } => {
                    let p = &self.params.groups()[self.slots[i].expect("linear slot")];
                    let mut y = x.matmul(&p.weight)?;
                    for r in 0..rows {
                        for (v, b) in y.row_mut(r).iter_mut().zip(&p.bias) {
                            *v += b;
                        }
                    }
                    self.count(rows * input * output);
                    (y, record.then_some(TapeEntry::Linear { input: x }))
                }
                LayerSpec::Relu => {
                    let y = x.map(|v| v.max(0.0));
                    self.count(rows * x.cols());
                    (y, record.then_some(TapeEntry::Relu { input: x }))
                }
                LayerSpec::Sigmoid => {
                    let y = x.map(sigmoid);
                    self.count(rows * x.cols());
                    let entry = record.then(|| TapeEntry::Sigmoid { output: y.clone() });
                    (y, entry)
                }
                LayerSpec::Dropout { p } => {
                    self.count(rows * x.cols());
                    if mode == Mode::Eval || p == 0.0 {
                        (x, record.then_some(TapeEntry::Dropout { mask: None }))
                    } else {
                        let rng = rng.as_deref_mut().ok_or_else(|| {
                            Error::Config("train-mode dropout requires an rng".into())
                        })?;
                        let keep = 1.0 / (1.0 - p);
                        let mask: Vec<f64> = (0..x.data().len())
                            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                            .collect();
                        let mut y = x;
                        for (v, m) in y.data_mut().iter_mut().zip(&mask) {
                            *v *= m;
                        }
                        (y, record.then_some(TapeEntry::Dropout { mask: Some(mask) }))
                    }
                }
                LayerSpec::Embedding { .. } => unreachable!("embeddings are leading"),
            };
            if !next.all_finite() {
                return Err(Error::NonFinite(format!("layer {i} ({layer})")));
            }
            x = next;
            if let Some(e) = entry {
                entries.push(e);
            }
        }

        let tape = record.then(|| ActivationTape {
            network_id: self.id,
            version: self.version,
            mode,
            depth,
            rows,
            output_cols: x.cols(),
            embed_indices,
            passthrough,
            entries,
        });
        Ok((x, tape))
    }

    fn embed(&self, batch: &Tensor2) -> Result<(Tensor2, Vec<Vec<usize>>)> {
        let rows = batch.rows();
        let e = self.embed_count;
        let passthrough = batch.cols() - e;
        let tables: Vec<&Tensor2> = (0..e)
            .map(|i| &self.params.groups()[self.slots[i].expect("embedding slot")].weight)
            .collect();
        let width: usize = tables.iter().map(|t| t.cols()).sum::<usize>() + passthrough;

        let mut out = Tensor2::zeros(rows, width);
        let mut indices = vec![Vec::with_capacity(rows); e];
        for r in 0..rows {
            let src = batch.row(r);
            let dst = out.row_mut(r);
            let mut offset = 0;
            for (col, table) in tables.iter().enumerate() {
                let raw = src[col];
                if !(raw >= 0.0 && raw.fract() == 0.0 && (raw as usize) < table.rows()) {
                    return Err(Error::Shape(format!(
                        "row {r}: embedding {col} index {raw} outside vocabulary of {}",
                        table.rows()
                    )));
                }
                let idx = raw as usize;
                dst[offset..offset + table.cols()].copy_from_slice(table.row(idx));
                offset += table.cols();
                indices[col].push(idx);
            }
            dst[offset..].copy_from_slice(&src[e..]);
        }
        self.count(rows * width);
        Ok((out, indices))
    }

    /// Backpropagates `out_grad` through the layers recorded in `tape`.
    ///
    /// Returns the parameter gradients and the gradient with respect to the
    /// batch input. Embedding index columns receive zero input gradient.
    pub fn backward(
        &self,
        tape: ActivationTape,
        out_grad: &Tensor2,
    ) -> Result<(GradientBank, Tensor2)> {
        if tape.network_id != self.id || tape.version != self.version {
            return Err(Error::StaleTape);
        }
        if out_grad.shape() != (tape.rows, tape.output_cols) {
            return Err(Error::Shape(format!(
                "output gradient is {}x{}, forward output was {}x{}",
                out_grad.rows(),
                out_grad.cols(),
                tape.rows,
                tape.output_cols
            )));
        }

        let mut grads = self.params.zeros_like();
        let mut g = out_grad.clone();
        let rows = tape.rows;

        for (i, entry) in (self.embed_count..tape.depth).zip(tape.entries).rev() {
            g = match entry {
                TapeEntry::Linear { input } => {
                    let slot = self.slots[i].expect("linear slot");
                    let p = &self.params.groups()[slot];
                    let dst = &mut grads.groups_mut()[slot];
                    dst.weight = input.t_matmul(&g)?;
                    for r in 0..rows {
                        for (b, v) in dst.bias.iter_mut().zip(g.row(r)) {
                            *b += v;
                        }
                    }
                    g.matmul_t(&p.weight)?
                }
                TapeEntry::Relu { input } => {
                    for (gv, &xv) in g.data_mut().iter_mut().zip(input.data()) {
                        if xv <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    g
                }
                TapeEntry::Sigmoid { output } => {
                    for (gv, &y) in g.data_mut().iter_mut().zip(output.data()) {
                        *gv *= y * (1.0 - y);
                    }
                    g
                }
                TapeEntry::Dropout { mask: Some(mask) } => {
                    for (gv, m) in g.data_mut().iter_mut().zip(&mask) {
                        *gv *= m;
                    }
                    g
                }
                TapeEntry::Dropout { mask: None } => g,
            };
        }

        if self.embed_count == 0 {
            return Ok((grads, g));
        }

        let mut in_grad = Tensor2::zeros(rows, self.embed_count + tape.passthrough);
        let mut offset = 0;
        for (col, idx) in tape.embed_indices.iter().enumerate() {
            let slot = self.slots[col].expect("embedding slot");
            let table = &mut grads.groups_mut()[slot].weight;
            let dim = table.cols();
            for (r, &k) in idx.iter().enumerate() {
                let src = &g.row(r)[offset..offset + dim];
                for (t, v) in table.row_mut(k).iter_mut().zip(src) {
                    *t += v;
                }
            }
            offset += dim;
        }
        for r in 0..rows {
            in_grad.row_mut(r)[self.embed_count..].copy_from_slice(&g.row(r)[offset..]);
        }
        Ok((grads, in_grad))
    }
}

/// Serializable form of a network: spec, parameters and seed label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub layers: Vec<LayerSpec>,
    pub params: ParamBank,
    pub seed: u64,
    pub stream: u64,
}

impl From<&Network> for NetworkState {
    fn from(net: &Network) -> Self {
        Self {
            layers: net.layers.clone(),
            params: net.params.clone(),
            seed: net.seed,
            stream: net.stream,
        }
    }
}

impl TryFrom<NetworkState> for Network {
    type Error = Error;

    fn try_from(state: NetworkState) -> Result<Self> {
        Network::from_params(&state.layers, state.params, state.seed, state.stream)
    }
}
