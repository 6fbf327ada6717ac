//! Deep LSTM stacks with a linear fast-forward path between layers.
//!
//! Each layer k owns a projection `W_f^k` and a peephole LSTM cell. The
//! projection output `f` (width 4d) is both the cell's gate pre-activation
//! block `[z, z_rho, z_phi, z_pi]` and — through its first half — a purely
//! linear route into layer k+1, carrying gradients past the recurrent
//! nonlinearities. Upper layers consume `[Half(f), Dr(h)]` (width 3d); with
//! the fast-forward path disabled they consume `Dr(h)` alone, giving the
//! conventional stacked model. Scan direction alternates with layer parity
//! in interleaved stacks; the first scanned position always sees a zero
//! neighbor state. No path carries a bias term.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::{dropout_mask, SeededRng, Tape, Tensor, ValueId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn flipped(self) -> Direction {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }
}

/// How scan directions are assigned across a stack's layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionScheme {
    /// Direction alternates with layer parity; `first` is layer 1's direction.
    Interleaved { first: Direction },
    /// Every layer scans forward.
    AllForward,
}

impl DirectionScheme {
    /// Direction of 1-based layer `k`.
    pub fn layer_direction(self, k: usize) -> Direction {
        match self {
            DirectionScheme::AllForward => Direction::Forward,
            DirectionScheme::Interleaved { first } => {
                if k % 2 == 1 {
                    first
                } else {
                    first.flipped()
                }
            }
        }
    }
}

/// Recurrent matrix and peephole vectors of one cell (no biases).
#[derive(Debug, Clone)]
pub struct LstmParams {
    /// `[4d x d]`; rows ordered as the blocks `[z, z_rho, z_phi, z_pi]`.
    pub w_r: Arc<Tensor>,
    pub theta_rho: Arc<Tensor>,
    pub theta_phi: Arc<Tensor>,
    pub theta_pi: Arc<Tensor>,
}

impl LstmParams {
    pub fn zeros(d: usize) -> LstmParams {
        LstmParams {
            w_r: Arc::new(Tensor::zeros(&[4 * d, d])),
            theta_rho: Arc::new(Tensor::zeros(&[d])),
            theta_phi: Arc::new(Tensor::zeros(&[d])),
            theta_pi: Arc::new(Tensor::zeros(&[d])),
        }
    }

    pub fn cell_width(&self) -> Result<usize> {
        let (rows, d) = self.w_r.expect_matrix("lstm params")?;
        if rows != 4 * d {
            return Err(Error::dimension(
                "lstm params",
                format!("recurrent matrix must be [4d x d], got {}", self.w_r.shape_string()),
            ));
        }
        for theta in [&self.theta_rho, &self.theta_phi, &self.theta_pi] {
            if theta.expect_vector("lstm params")? != d {
                return Err(Error::dimension(
                    "lstm params",
                    format!("peephole width {} vs cell width {d}", theta.shape_string()),
                ));
            }
        }
        Ok(d)
    }
}

/// One stack layer: the projection into the cell plus the cell itself.
#[derive(Debug, Clone)]
pub struct LayerParams {
    /// `[4d x in_dim]`: in_dim is the raw input width at layer 1, `3d` above
    /// it with the fast-forward path, `d` without.
    pub w_f: Arc<Tensor>,
    pub lstm: LstmParams,
    pub direction: Direction,
    /// 1-based position in the stack.
    pub layer_index: usize,
}

impl LayerParams {
    pub fn cell_width(&self) -> Result<usize> {
        self.lstm.cell_width()
    }

    /// Validate internal width consistency; returns (in_dim, d).
    pub fn widths(&self) -> Result<(usize, usize)> {
        let d = self.lstm.cell_width()?;
        let (rows, in_dim) = self.w_f.expect_matrix("layer params")?;
        if rows != 4 * d {
            return Err(Error::dimension(
                "layer params",
                format!("projection must have 4d = {} rows, got {}", 4 * d, self.w_f.shape_string()),
            ));
        }
        Ok((in_dim, d))
    }
}

/// Stack-wide settings.
#[derive(Debug, Clone, Copy)]
pub struct StackConfig {
    pub depth: usize,
    pub cell_width: usize,
    pub ff_enabled: bool,
    pub scheme: DirectionScheme,
    /// Dropout probability on `h` where it enters the next layer's input.
    pub p_drop: f64,
}

impl StackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::Config(format!("stack depth {} must be >= 1", self.depth)));
        }
        if !(0.0..1.0).contains(&self.p_drop) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.p_drop)));
        }
        Ok(())
    }
}

/// Tape handles for one layer's parameters.
#[derive(Debug, Clone, Copy)]
pub struct BoundLayer {
    pub w_f: ValueId,
    pub w_r: ValueId,
    pub theta_rho: ValueId,
    pub theta_phi: ValueId,
    pub theta_pi: ValueId,
    pub direction: Direction,
    pub layer_index: usize,
}

/// Record a layer's five parameter tensors on a tape. Trainable bindings are
/// differentiable leaves; frozen ones are constants.
pub fn bind_layer(tape: &mut Tape, params: &LayerParams, trainable: bool) -> BoundLayer {
    let mut bind = |t: &Arc<Tensor>| {
        if trainable {
            tape.input_shared(Arc::clone(t))
        } else {
            tape.constant_shared(Arc::clone(t))
        }
    };
    BoundLayer {
        w_f: bind(&params.w_f),
        w_r: bind(&params.lstm.w_r),
        theta_rho: bind(&params.lstm.theta_rho),
        theta_phi: bind(&params.lstm.theta_phi),
        theta_pi: bind(&params.lstm.theta_pi),
        direction: params.direction,
        layer_index: params.layer_index,
    }
}

/// Recurrent state of one cell, as tape handles.
#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: ValueId,
    pub s: ValueId,
}

/// The zero boundary state used at the first scanned position.
pub fn zero_state(tape: &mut Tape, d: usize) -> LstmState {
    let z = tape.constant(Tensor::zeros(&[d]));
    LstmState { h: z, s: z }
}

/// Everything a layer emits at one position.
#[derive(Debug, Clone, Copy)]
pub struct LayerStep {
    pub f: ValueId,
    pub h: ValueId,
    pub s: ValueId,
}

/// One cell update: split `f_t + W_r h_prev` into `[z, z_rho, z_phi, z_pi]`,
/// gate with peepholes, and emit the new state.
pub fn lstm_step(
    tape: &mut Tape,
    layer: &BoundLayer,
    f_t: ValueId,
    prev: &LstmState,
) -> Result<LstmState> {
    let (four_d, d) = tape.value(layer.w_r).expect_matrix("lstm_step")?;
    if four_d != 4 * d {
        return Err(Error::dimension(
            "lstm_step",
            format!("recurrent matrix must be [4d x d], got {}", tape.value(layer.w_r).shape_string()),
        ));
    }
    let f_width = tape.value(f_t).expect_vector("lstm_step")?;
    if f_width != 4 * d {
        return Err(Error::dimension(
            "lstm_step",
            format!("gate input width {f_width} vs 4d = {}", 4 * d),
        ));
    }

    let recur = tape.matvec(layer.w_r, prev.h)?;
    let z_all = tape.add(f_t, recur)?;
    let z = tape.slice(z_all, 0, d)?;
    let z_rho = tape.slice(z_all, d, d)?;
    let z_phi = tape.slice(z_all, 2 * d, d)?;
    let z_pi = tape.slice(z_all, 3 * d, d)?;

    let peek_rho = tape.mul(prev.s, layer.theta_rho)?;
    let gate_in = {
        let a = tape.add(z_rho, peek_rho)?;
        tape.sigmoid(a)
    };
    let peek_phi = tape.mul(prev.s, layer.theta_phi)?;
    let gate_forget = {
        let a = tape.add(z_phi, peek_phi)?;
        tape.sigmoid(a)
    };

    let candidate = tape.tanh(z);
    let write = tape.mul(candidate, gate_in)?;
    let keep = tape.mul(gate_forget, prev.s)?;
    let s_t = tape.add(write, keep)?;

    let peek_pi = tape.mul(s_t, layer.theta_pi)?;
    let gate_out = {
        let a = tape.add(z_pi, peek_pi)?;
        tape.sigmoid(a)
    };
    let s_squashed = tape.tanh(s_t);
    let h_t = tape.mul(s_squashed, gate_out)?;

    Ok(LstmState { h: h_t, s: s_t })
}

/// Layer-1 projection `f = W_f . x`.
pub fn input_project(tape: &mut Tape, layer: &BoundLayer, x: ValueId) -> Result<ValueId> {
    if layer.layer_index != 1 {
        return Err(Error::State(format!(
            "input_project called on layer {}, only layer 1 projects raw input",
            layer.layer_index
        )));
    }
    tape.matvec(layer.w_f, x)
}

/// Upper-layer fast-forward projection: `W_f . [Half(f_prev), mask * h_prev]`.
/// The path is linear end to end — no bias, no activation, no recurrence.
pub fn ff_project(
    tape: &mut Tape,
    layer: &BoundLayer,
    f_prev: ValueId,
    h_prev: ValueId,
    mask: Option<ValueId>,
) -> Result<ValueId> {
    if layer.layer_index <= 1 {
        return Err(Error::State(format!(
            "ff_project called on layer {}, layer 1 projects raw input",
            layer.layer_index
        )));
    }
    let f_width = tape.value(f_prev).expect_vector("ff_project")?;
    if f_width % 2 != 0 {
        return Err(Error::dimension(
            "ff_project",
            format!("input width {f_width} has no first half"),
        ));
    }
    let half = tape.slice(f_prev, 0, f_width / 2)?;
    let dropped = match mask {
        Some(m) => tape.mul(h_prev, m)?,
        None => h_prev,
    };
    let joined = tape.concat(&[half, dropped])?;
    tape.matvec(layer.w_f, joined)
}

/// Upper-layer projection with the fast-forward path disabled: `W_f . (mask * h_prev)`.
pub fn plain_project(
    tape: &mut Tape,
    layer: &BoundLayer,
    h_prev: ValueId,
    mask: Option<ValueId>,
) -> Result<ValueId> {
    if layer.layer_index <= 1 {
        return Err(Error::State(format!(
            "plain_project called on layer {}, layer 1 projects raw input",
            layer.layer_index
        )));
    }
    let dropped = match mask {
        Some(m) => tape.mul(h_prev, m)?,
        None => h_prev,
    };
    tape.matvec(layer.w_f, dropped)
}

/// Scan one layer over position-wise gate inputs `fs`, in `direction`.
/// Outputs are aligned to input positions regardless of direction.
fn scan_layer(
    tape: &mut Tape,
    layer: &BoundLayer,
    fs: &[ValueId],
    d: usize,
) -> Result<Vec<LayerStep>> {
    let m = fs.len();
    let mut out: Vec<Option<LayerStep>> = vec![None; m];
    let mut state = zero_state(tape, d);
    let order: Vec<usize> = match layer.direction {
        Direction::Forward => (0..m).collect(),
        Direction::Backward => (0..m).rev().collect(),
    };
    for t in order {
        state = lstm_step(tape, layer, fs[t], &state)?;
        out[t] = Some(LayerStep {
            f: fs[t],
            h: state.h,
            s: state.s,
        });
    }
    Ok(out.into_iter().map(|o| o.expect("every position visited")).collect())
}

/// Run a whole stack over a sequence. Dropout masks for the `h` inputs of
/// layers 2.. are drawn from `dropout` when provided (training); omit it for
/// evaluation. Returns per-layer, per-position outputs.
pub fn stack_forward(
    tape: &mut Tape,
    layers: &[BoundLayer],
    xs: &[ValueId],
    config: &StackConfig,
    mut dropout: Option<&mut SeededRng>,
) -> Result<Vec<Vec<LayerStep>>> {
    config.validate()?;
    if xs.is_empty() {
        return Err(Error::Domain("stack_forward on an empty sequence".to_string()));
    }
    if layers.len() != config.depth {
        return Err(Error::Config(format!(
            "stack depth {} but {} layers bound",
            config.depth,
            layers.len()
        )));
    }
    let d = config.cell_width;
    let mut per_layer: Vec<Vec<LayerStep>> = Vec::with_capacity(layers.len());
    for (idx, layer) in layers.iter().enumerate() {
        let fs: Vec<ValueId> = if idx == 0 {
            xs.iter()
                .map(|&x| input_project(tape, layer, x))
                .collect::<Result<_>>()?
        } else {
            let below: &[LayerStep] = &per_layer[idx - 1];
            let below: Vec<LayerStep> = below.to_vec();
            let mut fs = Vec::with_capacity(below.len());
            for step in &below {
                let mask = match dropout.as_deref_mut() {
                    Some(rng) if config.p_drop > 0.0 => {
                        let m = dropout_mask(&[d], config.p_drop, rng)?;
                        Some(tape.constant(m))
                    }
                    _ => None,
                };
                let f = if config.ff_enabled {
                    ff_project(tape, layer, step.f, step.h, mask)?
                } else {
                    plain_project(tape, layer, step.h, mask)?
                };
                fs.push(f);
            }
            fs
        };
        per_layer.push(scan_layer(tape, layer, &fs, d)?);
    }
    Ok(per_layer)
}

/// Recurrent state of every layer in a stack, for stepwise decoding.
#[derive(Debug, Clone)]
pub struct StackState {
    pub layers: Vec<LstmState>,
}

/// All-zero initial state for a stack of `depth` cells of width `d`.
pub fn stack_init_state(tape: &mut Tape, depth: usize, d: usize) -> StackState {
    let z = tape.constant(Tensor::zeros(&[d]));
    StackState {
        layers: vec![LstmState { h: z, s: z }; depth],
    }
}

/// Advance a forward-scanning stack by one position. Returns the new state
/// and each layer's outputs at this position.
pub fn stack_step(
    tape: &mut Tape,
    layers: &[BoundLayer],
    x: ValueId,
    state: &StackState,
    config: &StackConfig,
    mut dropout: Option<&mut SeededRng>,
) -> Result<(StackState, Vec<LayerStep>)> {
    config.validate()?;
    if layers.len() != config.depth || state.layers.len() != config.depth {
        return Err(Error::Config(format!(
            "stack depth {} but {} layers / {} states",
            config.depth,
            layers.len(),
            state.layers.len()
        )));
    }
    let d = config.cell_width;
    let mut next = Vec::with_capacity(layers.len());
    let mut steps = Vec::with_capacity(layers.len());
    for (idx, layer) in layers.iter().enumerate() {
        let f = if idx == 0 {
            input_project(tape, layer, x)?
        } else {
            let below: LayerStep = steps[idx - 1];
            let mask = match dropout.as_deref_mut() {
                Some(rng) if config.p_drop > 0.0 => {
                    let m = dropout_mask(&[d], config.p_drop, rng)?;
                    Some(tape.constant(m))
                }
                _ => None,
            };
            if config.ff_enabled {
                ff_project(tape, layer, below.f, below.h, mask)?
            } else {
                plain_project(tape, layer, below.h, mask)?
            }
        };
        let new_state = lstm_step(tape, layer, f, &state.layers[idx])?;
        next.push(new_state);
        steps.push(LayerStep {
            f,
            h: new_state.h,
            s: new_state.s,
        });
    }
    Ok((StackState { layers: next }, steps))
}
