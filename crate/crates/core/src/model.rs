//! The encoder-decoder translation model.
//!
//! An interleaved bi-directional encoder (one or two parameter-independent
//! columns) feeds one of two interfaces: a fixed vector built once per
//! sentence (`interface_ed`) or per-step attention over projected encoder
//! states (`interface_att`). The decoder is an all-forward stack whose input
//! at step t is `[c_t, emb(y_{t-1})]`, with the step-0 history embedding
//! fixed at zero. The last decoder layer's `h` feeds a linear softmax layer.
//!
//! Parameters live in a canonical flat order (the layout) shared by
//! initialization, checkpointing, optimizer state, and gradient mapping:
//! source embedding, target embedding, encoder columns in order (each layer
//! contributing `w_f, w_r, theta_rho, theta_phi, theta_pi`), decoder layers,
//! attention parameters (attention variant only), output matrix.

use std::sync::Arc;

use crate::corpus::SPECIALS;
use crate::error::{Error, Result};
use crate::numerics::{SeededRng, Tape, Tensor, ValueId};
use crate::stack::{
    stack_forward, stack_init_state, stack_step, BoundLayer, Direction,
    DirectionScheme, LayerParams, LayerStep, LstmParams, StackConfig, StackState,
};

/// Which encoder-decoder interface the model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Fixed source vector, constant across decoder steps.
    DeepEd,
    /// Per-step attention over projected encoder states.
    DeepAtt,
}

impl Variant {
    pub fn parse(name: &str) -> Result<Variant> {
        match name {
            "deep-ed" => Ok(Variant::DeepEd),
            "deep-att" => Ok(Variant::DeepAtt),
            other => Err(Error::Config(format!(
                "unknown variant {other:?} (deep-ed, deep-att)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::DeepEd => "deep-ed",
            Variant::DeepAtt => "deep-att",
        }
    }
}

/// Structural hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Encoder layers per column.
    pub n_e: usize,
    /// Decoder layers.
    pub n_d: usize,
    /// Encoder columns (1 or 2).
    pub columns: usize,
    pub emb_dim: usize,
    /// LSTM cell width d.
    pub cell_width: usize,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub p_drop: f64,
    pub ff_enabled: bool,
    /// Hidden width of the alignment network (attention variant).
    pub attention_hidden: usize,
    /// The interface projection shrinks e by this factor (attention variant).
    pub projection_factor: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_e < 1 || self.n_d < 1 {
            return Err(Error::Config(format!(
                "layer counts must be >= 1 (n_e {}, n_d {})",
                self.n_e, self.n_d
            )));
        }
        if !(1..=2).contains(&self.columns) {
            return Err(Error::Config(format!("columns {} must be 1 or 2", self.columns)));
        }
        if self.emb_dim < 1 || self.cell_width < 1 {
            return Err(Error::Config(format!(
                "widths must be >= 1 (emb {}, cell {})",
                self.emb_dim, self.cell_width
            )));
        }
        if self.src_vocab < SPECIALS || self.tgt_vocab < SPECIALS {
            return Err(Error::Config(format!(
                "vocabulary sizes must cover the {SPECIALS} reserved ids (src {}, tgt {})",
                self.src_vocab, self.tgt_vocab
            )));
        }
        if !(0.0..1.0).contains(&self.p_drop) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.p_drop)));
        }
        if self.variant == Variant::DeepAtt {
            if self.attention_hidden < 1 {
                return Err(Error::Config("attention hidden width must be >= 1".to_string()));
            }
            if self.projection_factor < 1 {
                return Err(Error::Config("projection factor must be >= 1".to_string()));
            }
            if !self.e_width().is_multiple_of(self.projection_factor) {
                return Err(Error::Config(format!(
                    "interface width {} is not divisible by the projection factor {}",
                    self.e_width(),
                    self.projection_factor
                )));
            }
        }
        Ok(())
    }

    /// Width of the concatenated interface vector e: each column contributes
    /// h (d) and, with the fast-forward path, f (4d).
    pub fn e_width(&self) -> usize {
        let per_column = if self.ff_enabled {
            5 * self.cell_width
        } else {
            self.cell_width
        };
        self.columns * per_column
    }

    /// Width of the context c fed to the decoder each step.
    pub fn c_width(&self) -> usize {
        match self.variant {
            Variant::DeepEd => self.e_width(),
            Variant::DeepAtt => self.e_width() / self.projection_factor,
        }
    }

    /// Decoder layer-1 input width: `[c, y-embedding]`.
    pub fn decoder_input_width(&self) -> usize {
        self.c_width() + self.emb_dim
    }

    /// Total LSTM layers across all columns and the decoder.
    pub fn lstm_layer_count(&self) -> usize {
        self.columns * self.n_e + self.n_d
    }

    /// Stack depth along one path from source word to prediction.
    pub fn depth(&self) -> usize {
        self.n_e + self.n_d
    }

    fn upper_in_dim(&self) -> usize {
        if self.ff_enabled {
            3 * self.cell_width
        } else {
            self.cell_width
        }
    }

    pub fn encoder_layer_in_dim(&self, k: usize) -> usize {
        if k == 1 {
            self.emb_dim
        } else {
            self.upper_in_dim()
        }
    }

    pub fn decoder_layer_in_dim(&self, k: usize) -> usize {
        if k == 1 {
            self.decoder_input_width()
        } else {
            self.upper_in_dim()
        }
    }

    /// Column 0 starts forward, column 1 backward.
    pub fn column_scheme(&self, column: usize) -> DirectionScheme {
        DirectionScheme::Interleaved {
            first: if column == 0 {
                Direction::Forward
            } else {
                Direction::Backward
            },
        }
    }

    pub fn encoder_stack_config(&self, column: usize) -> StackConfig {
        StackConfig {
            depth: self.n_e,
            cell_width: self.cell_width,
            ff_enabled: self.ff_enabled,
            scheme: self.column_scheme(column),
            p_drop: self.p_drop,
        }
    }

    pub fn decoder_stack_config(&self) -> StackConfig {
        StackConfig {
            depth: self.n_d,
            cell_width: self.cell_width,
            ff_enabled: self.ff_enabled,
            scheme: DirectionScheme::AllForward,
            p_drop: self.p_drop,
        }
    }
}

/// Optimizer routing class of a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamClass {
    /// `W_r` and the peephole vectors: higher learning rate, regularized.
    Recurrent,
    /// Projections, attention, output matrix: lower rate, regularized.
    NonRecurrent,
    /// Embedding tables: lower rate, exempt from the L2 shrink term.
    Embedding,
}

/// One slot in the canonical parameter layout.
#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub class: ParamClass,
}

fn push_layer_specs(specs: &mut Vec<ParamSpec>, prefix: &str, in_dim: usize, d: usize) {
    let four_d = 4 * d;
    specs.push(ParamSpec {
        name: format!("{prefix}.w_f"),
        shape: vec![four_d, in_dim],
        class: ParamClass::NonRecurrent,
    });
    specs.push(ParamSpec {
        name: format!("{prefix}.w_r"),
        shape: vec![four_d, d],
        class: ParamClass::Recurrent,
    });
    for gate in ["theta_rho", "theta_phi", "theta_pi"] {
        specs.push(ParamSpec {
            name: format!("{prefix}.{gate}"),
            shape: vec![d],
            class: ParamClass::Recurrent,
        });
    }
}

impl ModelConfig {
    /// The canonical parameter layout: names, shapes, classes, in order.
    pub fn param_template(&self) -> Vec<ParamSpec> {
        let d = self.cell_width;
        let mut specs = vec![
            ParamSpec {
                name: "embedding.src".to_string(),
                shape: vec![self.src_vocab, self.emb_dim],
                class: ParamClass::Embedding,
            },
            ParamSpec {
                name: "embedding.tgt".to_string(),
                shape: vec![self.tgt_vocab, self.emb_dim],
                class: ParamClass::Embedding,
            },
        ];
        for col in 0..self.columns {
            for k in 1..=self.n_e {
                push_layer_specs(
                    &mut specs,
                    &format!("enc.c{}.l{k}", col + 1),
                    self.encoder_layer_in_dim(k),
                    d,
                );
            }
        }
        for k in 1..=self.n_d {
            push_layer_specs(&mut specs, &format!("dec.l{k}"), self.decoder_layer_in_dim(k), d);
        }
        if self.variant == Variant::DeepAtt {
            specs.push(ParamSpec {
                name: "att.w_p".to_string(),
                shape: vec![self.c_width(), self.e_width()],
                class: ParamClass::NonRecurrent,
            });
            specs.push(ParamSpec {
                name: "att.w_a".to_string(),
                shape: vec![self.attention_hidden, d],
                class: ParamClass::NonRecurrent,
            });
            specs.push(ParamSpec {
                name: "att.u_a".to_string(),
                shape: vec![self.attention_hidden, self.c_width()],
                class: ParamClass::NonRecurrent,
            });
            specs.push(ParamSpec {
                name: "att.v_a".to_string(),
                shape: vec![self.attention_hidden],
                class: ParamClass::NonRecurrent,
            });
        }
        specs.push(ParamSpec {
            name: "output.w".to_string(),
            shape: vec![self.tgt_vocab, d],
            class: ParamClass::NonRecurrent,
        });
        specs
    }
}

/// Attention parameters: interface projection and alignment network.
#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub w_p: Arc<Tensor>,
    pub w_a: Arc<Tensor>,
    pub u_a: Arc<Tensor>,
    pub v_a: Arc<Tensor>,
}

/// All model parameters, plus the config that shaped them.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub src_embedding: Arc<Tensor>,
    pub tgt_embedding: Arc<Tensor>,
    /// `[column][layer]`.
    pub encoder: Vec<Vec<LayerParams>>,
    pub decoder: Vec<LayerParams>,
    pub attention: Option<AttentionParams>,
    pub w_out: Arc<Tensor>,
}

impl ModelParams {
    /// Assemble from tensors in canonical layout order.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<Arc<Tensor>>) -> Result<ModelParams> {
        config.validate()?;
        let template = config.param_template();
        if tensors.len() != template.len() {
            return Err(Error::Config(format!(
                "parameter count mismatch: layout has {} slots, got {}",
                template.len(),
                tensors.len()
            )));
        }
        for (spec, tensor) in template.iter().zip(&tensors) {
            if tensor.shape() != spec.shape.as_slice() {
                return Err(Error::dimension(
                    "model assembly",
                    format!(
                        "{} expects {} values shaped as given in the layout, got {}",
                        spec.name,
                        crate::error::shape_string(&spec.shape),
                        tensor.shape_string()
                    ),
                ));
            }
        }

        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("count checked");
        let src_embedding = next();
        let tgt_embedding = next();
        let mut take_layer = |direction: Direction, layer_index: usize| -> LayerParams {
            LayerParams {
                w_f: next(),
                lstm: LstmParams {
                    w_r: next(),
                    theta_rho: next(),
                    theta_phi: next(),
                    theta_pi: next(),
                },
                direction,
                layer_index,
            }
        };
        let mut encoder = Vec::with_capacity(config.columns);
        for col in 0..config.columns {
            let scheme = config.column_scheme(col);
            encoder.push(
                (1..=config.n_e)
                    .map(|k| take_layer(scheme.layer_direction(k), k))
                    .collect(),
            );
        }
        let decoder: Vec<LayerParams> = (1..=config.n_d)
            .map(|k| take_layer(Direction::Forward, k))
            .collect();
        let attention = if config.variant == Variant::DeepAtt {
            Some(AttentionParams {
                w_p: next(),
                w_a: next(),
                u_a: next(),
                v_a: next(),
            })
        } else {
            None
        };
        let w_out = next();
        Ok(ModelParams {
            config,
            src_embedding,
            tgt_embedding,
            encoder,
            decoder,
            attention,
            w_out,
        })
    }

    /// All tensors in canonical layout order.
    pub fn to_tensors(&self) -> Vec<Arc<Tensor>> {
        let mut out = vec![Arc::clone(&self.src_embedding), Arc::clone(&self.tgt_embedding)];
        let push_layer = |out: &mut Vec<Arc<Tensor>>, layer: &LayerParams| {
            out.push(Arc::clone(&layer.w_f));
            out.push(Arc::clone(&layer.lstm.w_r));
            out.push(Arc::clone(&layer.lstm.theta_rho));
            out.push(Arc::clone(&layer.lstm.theta_phi));
            out.push(Arc::clone(&layer.lstm.theta_pi));
        };
        for column in &self.encoder {
            for layer in column {
                push_layer(&mut out, layer);
            }
        }
        for layer in &self.decoder {
            push_layer(&mut out, layer);
        }
        if let Some(att) = &self.attention {
            out.push(Arc::clone(&att.w_p));
            out.push(Arc::clone(&att.w_a));
            out.push(Arc::clone(&att.u_a));
            out.push(Arc::clone(&att.v_a));
        }
        out.push(Arc::clone(&self.w_out));
        out
    }

    /// Fresh parameters: recurrent tensors zero, everything else
    /// Normal(0, 0.07^2), drawn in layout order.
    pub fn init(config: &ModelConfig, rng: &mut SeededRng) -> Result<ModelParams> {
        ModelParams::init_with_recurrent_std(config, rng, 0.0)
    }

    /// Initialization with an overridden recurrent standard deviation (the
    /// gradient-propagation and instability probes set it to 0.07 so the
    /// recurrent paths are active from step one).
    pub fn init_with_recurrent_std(
        config: &ModelConfig,
        rng: &mut SeededRng,
        recurrent_std: f64,
    ) -> Result<ModelParams> {
        config.validate()?;
        let tensors: Vec<Arc<Tensor>> = config
            .param_template()
            .into_iter()
            .map(|spec| {
                let std_dev = match spec.class {
                    ParamClass::Recurrent => recurrent_std,
                    _ => 0.07,
                };
                let mut t = Tensor::zeros(&spec.shape);
                if std_dev > 0.0 {
                    rng.fill_normal(t.data_mut(), 0.0, std_dev);
                }
                Arc::new(t)
            })
            .collect();
        ModelParams::from_tensors(config.clone(), tensors)
    }
}

/// Attention parameter handles on a tape.
#[derive(Debug, Clone, Copy)]
pub struct BoundAttention {
    pub w_p: ValueId,
    pub w_a: ValueId,
    pub u_a: ValueId,
    pub v_a: ValueId,
}

/// The whole model bound onto one tape.
pub struct BoundModel {
    pub src_embedding: ValueId,
    pub tgt_embedding: ValueId,
    pub encoder: Vec<Vec<BoundLayer>>,
    pub decoder: Vec<BoundLayer>,
    pub attention: Option<BoundAttention>,
    pub w_out: ValueId,
    /// Every parameter's tape id in canonical layout order.
    pub flat: Vec<ValueId>,
}

/// Structure a flat id list (canonical layout order) into a [`BoundModel`].
pub fn bound_from_ids(config: &ModelConfig, ids: &[ValueId]) -> Result<BoundModel> {
    let expected = config.param_template().len();
    if ids.len() != expected {
        return Err(Error::Config(format!(
            "layout has {expected} parameters, got {} ids",
            ids.len()
        )));
    }
    let mut pos = 0;
    let mut next = || {
        let id = ids[pos];
        pos += 1;
        id
    };
    let src_embedding = next();
    let tgt_embedding = next();
    let mut take_layer = |direction: Direction, layer_index: usize| -> BoundLayer {
        BoundLayer {
            w_f: next(),
            w_r: next(),
            theta_rho: next(),
            theta_phi: next(),
            theta_pi: next(),
            direction,
            layer_index,
        }
    };
    let mut encoder = Vec::with_capacity(config.columns);
    for col in 0..config.columns {
        let scheme = config.column_scheme(col);
        encoder.push(
            (1..=config.n_e)
                .map(|k| take_layer(scheme.layer_direction(k), k))
                .collect(),
        );
    }
    let decoder: Vec<BoundLayer> = (1..=config.n_d)
        .map(|k| take_layer(Direction::Forward, k))
        .collect();
    let attention = if config.variant == Variant::DeepAtt {
        Some(BoundAttention {
            w_p: next(),
            w_a: next(),
            u_a: next(),
            v_a: next(),
        })
    } else {
        None
    };
    let w_out = next();
    Ok(BoundModel {
        src_embedding,
        tgt_embedding,
        encoder,
        decoder,
        attention,
        w_out,
        flat: ids.to_vec(),
    })
}

/// Record every parameter on `tape` (in layout order) and structure the ids.
pub fn bind_model(tape: &mut Tape, params: &ModelParams, trainable: bool) -> Result<BoundModel> {
    let ids: Vec<ValueId> = params
        .to_tensors()
        .into_iter()
        .map(|t| {
            if trainable {
                tape.input_shared(t)
            } else {
                tape.constant_shared(t)
            }
        })
        .collect();
    bound_from_ids(&params.config, &ids)
}

/// Per-column, per-layer, per-position encoder outputs, time-aligned.
pub struct EncoderOutput {
    /// `[column][layer][position]`.
    pub layers: Vec<Vec<Vec<LayerStep>>>,
}

impl EncoderOutput {
    pub fn len(&self) -> usize {
        self.layers[0][0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Top-layer outputs of one column.
    pub fn top(&self, column: usize) -> &[LayerStep] {
        self.layers[column].last().expect("n_e >= 1")
    }
}

/// Run all encoder columns over the source ids.
pub fn encode(
    tape: &mut Tape,
    bm: &BoundModel,
    config: &ModelConfig,
    source_ids: &[usize],
    mut dropout: Option<&mut SeededRng>,
) -> Result<EncoderOutput> {
    if source_ids.is_empty() {
        return Err(Error::Domain("encode on an empty source".to_string()));
    }
    for &id in source_ids {
        if id >= config.src_vocab {
            return Err(Error::Domain(format!(
                "source id {id} >= vocabulary size {}",
                config.src_vocab
            )));
        }
    }
    let xs: Vec<ValueId> = source_ids
        .iter()
        .map(|&id| tape.row(bm.src_embedding, id))
        .collect::<Result<_>>()?;
    let mut layers = Vec::with_capacity(config.columns);
    for (col, column_layers) in bm.encoder.iter().enumerate() {
        let stack_cfg = config.encoder_stack_config(col);
        let out = stack_forward(tape, column_layers, &xs, &stack_cfg, dropout.as_deref_mut())?;
        layers.push(out);
    }
    Ok(EncoderOutput { layers })
}

/// Per-dimension maximum of one top-layer signal over all positions.
fn max_over_time(
    tape: &mut Tape,
    steps: &[LayerStep],
    pick: impl Fn(&LayerStep) -> ValueId,
) -> Result<ValueId> {
    let ids: Vec<ValueId> = steps.iter().map(pick).collect();
    tape.max_over(&ids)
}

/// The fixed interface vector: `[h_last(col 1), Max h(col 2), Max f(col 1),
/// Max f(col 2)]`, with the f-terms dropped when the fast-forward path is
/// off and the column-2 terms dropped in single-column mode. Used as c at
/// every decoder step.
pub fn interface_ed(tape: &mut Tape, config: &ModelConfig, enc: &EncoderOutput) -> Result<ValueId> {
    let m = enc.len();
    let top1 = enc.top(0);
    let mut parts = vec![top1[m - 1].h];
    if config.columns == 2 {
        parts.push(max_over_time(tape, enc.top(1), |s| s.h)?);
    }
    if config.ff_enabled {
        parts.push(max_over_time(tape, top1, |s| s.f)?);
        if config.columns == 2 {
            parts.push(max_over_time(tape, enc.top(1), |s| s.f)?);
        }
    }
    tape.concat(&parts)
}

/// Position-wise interface vectors `e_t = [h(col 1), h(col 2), f(col 1),
/// f(col 2)]` (same reductions as [`interface_ed`] for disabled parts).
fn e_vectors(tape: &mut Tape, config: &ModelConfig, enc: &EncoderOutput) -> Result<Vec<ValueId>> {
    let m = enc.len();
    let mut out = Vec::with_capacity(m);
    for t in 0..m {
        let mut parts = vec![enc.top(0)[t].h];
        if config.columns == 2 {
            parts.push(enc.top(1)[t].h);
        }
        if config.ff_enabled {
            parts.push(enc.top(0)[t].f);
            if config.columns == 2 {
                parts.push(enc.top(1)[t].f);
            }
        }
        out.push(tape.concat(&parts)?);
    }
    Ok(out)
}

/// Source-side attention quantities that do not depend on the decoder step:
/// the projected interface vectors `u_t = W_p e_t` and their alignment-net
/// images `U_a u_t`.
pub struct AttContext {
    pub projected: Vec<ValueId>,
    alignment_images: Vec<ValueId>,
}

/// Project the encoder output once per sentence.
pub fn prepare_attention(
    tape: &mut Tape,
    att: &BoundAttention,
    config: &ModelConfig,
    enc: &EncoderOutput,
) -> Result<AttContext> {
    let es = e_vectors(tape, config, enc)?;
    project_for_attention(tape, att, &es)
}

/// Build the step-independent attention context from raw interface vectors.
pub fn project_for_attention(
    tape: &mut Tape,
    att: &BoundAttention,
    es: &[ValueId],
) -> Result<AttContext> {
    let mut projected = Vec::with_capacity(es.len());
    let mut alignment_images = Vec::with_capacity(es.len());
    for &e in es {
        let u = tape.matvec(att.w_p, e)?;
        alignment_images.push(tape.matvec(att.u_a, u)?);
        projected.push(u);
    }
    Ok(AttContext {
        projected,
        alignment_images,
    })
}

/// One attention read: score each position with the alignment network
/// `v . tanh(W_a h_dec + U_a u_t)`, softmax into weights, mix the projected
/// vectors. Returns `(c_t, weights)`.
pub fn attend(
    tape: &mut Tape,
    att: &BoundAttention,
    ctx: &AttContext,
    h_dec_prev: ValueId,
) -> Result<(ValueId, ValueId)> {
    let query = tape.matvec(att.w_a, h_dec_prev)?;
    let mut scores = Vec::with_capacity(ctx.projected.len());
    for &img in &ctx.alignment_images {
        let pre = tape.add(query, img)?;
        let act = tape.tanh(pre);
        scores.push(tape.dot(att.v_a, act)?);
    }
    let score_vec = tape.concat(&scores)?;
    let alphas = tape.softmax(score_vec)?;
    let c = tape.weighted_sum(alphas, &ctx.projected)?;
    Ok((c, alphas))
}

/// Convenience wrapper: prepare and read in one call (single decoder step).
pub fn interface_att(
    tape: &mut Tape,
    att: &BoundAttention,
    config: &ModelConfig,
    enc: &EncoderOutput,
    h_dec_prev: ValueId,
) -> Result<(ValueId, ValueId)> {
    let ctx = prepare_attention(tape, att, config, enc)?;
    attend(tape, att, &ctx, h_dec_prev)
}

/// Decoder recurrent state plus the layer-1 output the next attention read
/// conditions on.
#[derive(Debug, Clone)]
pub struct DecoderState {
    pub stack: StackState,
    pub h1: ValueId,
}

/// Zero state: all cells zero, and a zero `h1` for the first attention read.
pub fn init_decoder_state(tape: &mut Tape, config: &ModelConfig) -> DecoderState {
    let stack = stack_init_state(tape, config.n_d, config.cell_width);
    let h1 = stack.layers[0].h;
    DecoderState { stack, h1 }
}

/// One decoder step. `y_prev` is the previously emitted token id, or `None`
/// at step one (the start mark is the zero embedding). Returns the
/// vocabulary logits and the advanced state.
pub fn decode_step(
    tape: &mut Tape,
    bm: &BoundModel,
    config: &ModelConfig,
    c: ValueId,
    y_prev: Option<usize>,
    state: &DecoderState,
    dropout: Option<&mut SeededRng>,
) -> Result<(ValueId, DecoderState)> {
    let y_emb = match y_prev {
        None => tape.constant(Tensor::zeros(&[config.emb_dim])),
        Some(id) => {
            if id >= config.tgt_vocab {
                return Err(Error::Domain(format!(
                    "target id {id} >= vocabulary size {}",
                    config.tgt_vocab
                )));
            }
            tape.row(bm.tgt_embedding, id)?
        }
    };
    let x = tape.concat(&[c, y_emb])?;
    let stack_cfg = config.decoder_stack_config();
    let (next_stack, steps) = stack_step(tape, &bm.decoder, x, &state.stack, &stack_cfg, dropout)?;
    let logits = tape.matvec(bm.w_out, steps.last().expect("n_d >= 1").h)?;
    Ok((
        logits,
        DecoderState {
            h1: steps[0].h,
            stack: next_stack,
        },
    ))
}

/// A recorded teacher-forced pass: the tape, the scalar loss, parameter ids
/// in layout order, and per-position argmax-vs-gold flags.
pub struct SequenceRun {
    pub tape: Tape,
    pub loss: ValueId,
    pub param_ids: Vec<ValueId>,
    pub correct: Vec<bool>,
}

/// Teacher-forced negative log-likelihood of `target_ids` (which must end
/// with the end mark) given `source_ids`. With `trainable`, parameters are
/// recorded as differentiable leaves so the caller can run backward.
pub fn sequence_nll(
    params: &ModelParams,
    source_ids: &[usize],
    target_ids: &[usize],
    trainable: bool,
    dropout: Option<&mut SeededRng>,
) -> Result<SequenceRun> {
    let config = &params.config;
    if target_ids.is_empty() {
        return Err(Error::Domain("empty target sequence".to_string()));
    }
    for &id in target_ids {
        if id >= config.tgt_vocab {
            return Err(Error::Domain(format!(
                "target id {id} >= vocabulary size {}",
                config.tgt_vocab
            )));
        }
    }
    let mut tape = Tape::new();
    let bm = bind_model(&mut tape, params, trainable)?;
    let loss_and_flags =
        sequence_nll_on(&mut tape, &bm, config, source_ids, target_ids, dropout)?;
    Ok(SequenceRun {
        tape,
        loss: loss_and_flags.0,
        param_ids: bm.flat,
        correct: loss_and_flags.1,
    })
}

/// The loss graph itself, on a caller-provided tape with a bound model.
pub fn sequence_nll_on(
    tape: &mut Tape,
    bm: &BoundModel,
    config: &ModelConfig,
    source_ids: &[usize],
    target_ids: &[usize],
    mut dropout: Option<&mut SeededRng>,
) -> Result<(ValueId, Vec<bool>)> {
    let enc = encode(tape, bm, config, source_ids, dropout.as_deref_mut())?;
    let ed_context = match config.variant {
        Variant::DeepEd => Some(interface_ed(tape, config, &enc)?),
        Variant::DeepAtt => None,
    };
    let att_context = match (config.variant, &bm.attention) {
        (Variant::DeepAtt, Some(att)) => Some(prepare_attention(tape, att, config, &enc)?),
        (Variant::DeepAtt, None) => {
            return Err(Error::State("attention variant bound without attention parameters".to_string()))
        }
        _ => None,
    };

    let mut state = init_decoder_state(tape, config);
    let mut losses = Vec::with_capacity(target_ids.len());
    let mut correct = Vec::with_capacity(target_ids.len());
    for (j, &gold) in target_ids.iter().enumerate() {
        let c = match config.variant {
            Variant::DeepEd => ed_context.expect("built above"),
            Variant::DeepAtt => {
                let att = bm.attention.as_ref().expect("checked above");
                let ctx = att_context.as_ref().expect("built above");
                attend(tape, att, ctx, state.h1)?.0
            }
        };
        let y_prev = if j == 0 { None } else { Some(target_ids[j - 1]) };
        let (logits, next_state) =
            decode_step(tape, bm, config, c, y_prev, &state, dropout.as_deref_mut())?;
        state = next_state;
        correct.push(argmax(tape.value(logits).data()) == gold);
        losses.push(tape.cross_entropy(logits, gold)?);
    }
    let loss = tape.add_n(&losses)?;
    Ok((loss, correct))
}

/// Index of the largest value (first on ties).
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}
