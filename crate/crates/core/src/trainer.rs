//! Training: initialization, Adam with split learning rates and the L2
//! shrink rule, length-grouped batching with masks, and the epoch loop.
//!
//! The recurrent part — `W_r` and the three peephole vectors — takes the
//! larger learning rate `l_r`; every other parameter (input projections,
//! embeddings, attention, output softmax) takes `l_f`. The effective
//! gradient for regularized parameters is `g + r·v` where `v` is the current
//! parameter value; the two embedding matrices are exempt. There is no
//! gradient clipping: non-finite losses or gradients are surfaced as
//! recorded events and the update is skipped.

use std::cmp::Ordering;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::checkpoint;
use crate::config::BeamSettings;
use crate::corpus::{ParallelCorpus, Vocabulary, END_ID, PAD_ID};
use crate::error::{io_error, Error, Result};
use crate::evaluator;
use crate::generator::translate_corpus;
use crate::model::{bind_model, sequence_nll_on, ModelConfig, ModelParams, ParamClass, ParamSpec};
use crate::numerics::{SeededRng, Tape, Tensor};

/// Optimizer and loop settings. `l_r` drives the recurrent part, `l_f` the
/// rest; `r` is the L2 shrink strength; `p_d` the dropout ratio.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub l_r: f64,
    pub l_f: f64,
    pub r: f64,
    pub p_d: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Sequences longer than this many ids on either side are skipped.
    pub max_len: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Updates between checkpoints and dev evaluations; 0 = once per epoch.
    pub checkpoint_every: usize,
    /// Abort the run once this many non-finite events have been recorded.
    pub max_events: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            l_r: 5e-4,
            l_f: 4e-5,
            r: 2.0,
            p_d: 0.1,
            batch_size: 32,
            max_epochs: 10,
            max_len: 100,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 1,
            checkpoint_every: 0,
            max_events: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // comparisons are written to also reject NaN
        if self.l_r.partial_cmp(&0.0) != Some(Ordering::Greater)
            || self.l_f.partial_cmp(&0.0) != Some(Ordering::Greater)
        {
            return Err(Error::Config("learning rates must be positive".to_string()));
        }
        if self.r.partial_cmp(&0.0) == Some(Ordering::Less) || self.r.is_nan() {
            return Err(Error::Config("regularization strength must be >= 0".to_string()));
        }
        if !(0.0..1.0).contains(&self.p_d) {
            return Err(Error::Config("dropout ratio must lie in [0, 1)".to_string()));
        }
        if self.batch_size < 1 || self.max_epochs < 1 || self.max_len < 1 {
            return Err(Error::Config(
                "batch_size, max_epochs and max_len must be >= 1".to_string(),
            ));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".to_string()));
        }
        if self.adam_eps.partial_cmp(&0.0) != Some(Ordering::Greater) {
            return Err(Error::Config("Adam epsilon must be positive".to_string()));
        }
        Ok(())
    }
}

/// Adam moments, one pair of tensors per parameter in canonical order.
#[derive(Debug, Clone)]
pub struct OptimState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl OptimState {
    pub fn new(specs: &[ParamSpec]) -> OptimState {
        let zeros: Vec<Tensor> = specs.iter().map(|s| Tensor::zeros(&s.shape)).collect();
        OptimState { m: zeros.clone(), v: zeros, step: 0 }
    }
}

/// One padded batch: id matrices with 0/1 masks; padded positions carry the
/// pad id, contribute zero loss, and receive zero gradient.
#[derive(Debug, Clone)]
pub struct Batch {
    pub source: Vec<Vec<usize>>,
    pub source_mask: Vec<Vec<f64>>,
    pub target: Vec<Vec<usize>>,
    pub target_mask: Vec<Vec<f64>>,
    /// Unpadded (source, target) lengths per row.
    pub lengths: Vec<(usize, usize)>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    /// Unpadded id slices for one row.
    pub fn row(&self, i: usize) -> (&[usize], &[usize]) {
        let (sl, tl) = self.lengths[i];
        (&self.source[i][..sl], &self.target[i][..tl])
    }
}

fn pad_rows(rows: Vec<Vec<usize>>) -> (Vec<Vec<usize>>, Vec<Vec<f64>>) {
    let width = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut padded = Vec::with_capacity(rows.len());
    let mut masks = Vec::with_capacity(rows.len());
    for mut row in rows {
        let len = row.len();
        row.resize(width, PAD_ID);
        let mut mask = vec![1.0; len];
        mask.resize(width, 0.0);
        padded.push(row);
        masks.push(mask);
    }
    (padded, masks)
}

/// Encode a token corpus into id pairs; targets get the end mark appended.
pub fn encode_pairs(
    corpus: &ParallelCorpus,
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
) -> Vec<(Vec<usize>, Vec<usize>)> {
    corpus
        .pairs
        .iter()
        .map(|p| {
            let src = src_vocab.encode_tokens(&p.source);
            let mut tgt = tgt_vocab.encode_tokens(&p.target);
            tgt.push(END_ID);
            (src, tgt)
        })
        .collect()
}

/// Shuffle by seed, group by similar total length to limit padding, pad, and
/// emit masks. Returns the batches plus the count of skipped over-long pairs.
pub fn make_batches(
    pairs: &[(Vec<usize>, Vec<usize>)],
    batch_size: usize,
    max_len: usize,
    rng: &mut SeededRng,
) -> Result<(Vec<Batch>, usize)> {
    if pairs.is_empty() {
        return Err(Error::Input("cannot batch an empty corpus".to_string()));
    }
    if batch_size < 1 {
        return Err(Error::Config("batch_size must be >= 1".to_string()));
    }
    let kept: Vec<usize> = (0..pairs.len())
        .filter(|&i| pairs[i].0.len() <= max_len && pairs[i].1.len() <= max_len)
        .collect();
    let skipped = pairs.len() - kept.len();
    if kept.is_empty() {
        return Err(Error::Input(format!(
            "all {} pairs exceed max_len {max_len}",
            pairs.len()
        )));
    }
    let perm = rng.permutation(kept.len());
    let mut order: Vec<usize> = perm.into_iter().map(|j| kept[j]).collect();
    // stable sort: equal-length runs keep their shuffled order
    order.sort_by_key(|&i| pairs[i].0.len() + pairs[i].1.len());

    let mut batches = Vec::new();
    for chunk in order.chunks(batch_size) {
        let lengths: Vec<(usize, usize)> =
            chunk.iter().map(|&i| (pairs[i].0.len(), pairs[i].1.len())).collect();
        let (source, source_mask) =
            pad_rows(chunk.iter().map(|&i| pairs[i].0.clone()).collect());
        let (target, target_mask) =
            pad_rows(chunk.iter().map(|&i| pairs[i].1.clone()).collect());
        batches.push(Batch { source, source_mask, target, target_mask, lengths });
    }
    rng.shuffle(&mut batches);
    Ok((batches, skipped))
}

/// Fresh parameters: recurrent part exactly zero, everything else
/// Normal(0, 0.07²).
pub fn init_params(config: &ModelConfig, rng: &mut SeededRng) -> Result<ModelParams> {
    ModelParams::init(config, rng)
}

/// Loss, accumulated gradients (canonical order), and token count for one
/// batch. Per-sequence passes may run in parallel; accumulation is ordered
/// by row index so results do not depend on the worker count.
pub struct BatchBackward {
    pub loss: f64,
    pub grads: Vec<Tensor>,
    pub tokens: usize,
    /// Per-position teacher-forced argmax hits across the batch.
    pub correct: usize,
    pub finite: bool,
}

/// loss, per-parameter gradients (None = zero), target tokens, argmax hits
type RowBackward = (f64, Vec<Option<Tensor>>, usize, usize);

pub fn batch_backward(
    params: &ModelParams,
    batch: &Batch,
    dropout: Option<&SeededRng>,
) -> Result<BatchBackward> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".to_string()));
    }
    let config = &params.config;
    let per_row: Vec<Result<RowBackward>> = (0..batch.len())
        .into_par_iter()
        .map(|i| {
            let (src, tgt) = batch.row(i);
            let mut tape = Tape::new();
            let bm = bind_model(&mut tape, params, true)?;
            let mut row_rng = dropout.map(|r| r.fork(i as u64));
            let (loss, flags) =
                sequence_nll_on(&mut tape, &bm, config, src, tgt, row_rng.as_mut())?;
            let loss_value = tape.value(loss).as_scalar()?;
            let mut grads = tape.backward(loss)?;
            let per_param: Vec<Option<Tensor>> =
                bm.flat.iter().map(|&id| grads.take(id)).collect();
            let correct = flags.iter().filter(|&&c| c).count();
            Ok((loss_value, per_param, tgt.len(), correct))
        })
        .collect();

    let specs = config.param_template();
    let mut total = 0.0;
    let mut tokens = 0;
    let mut correct = 0;
    let mut acc: Vec<Tensor> = specs.iter().map(|s| Tensor::zeros(&s.shape)).collect();
    let mut finite = true;
    for row in per_row {
        let (loss, per_param, row_tokens, row_correct) = row?;
        total += loss;
        tokens += row_tokens;
        correct += row_correct;
        for (slot, g) in acc.iter_mut().zip(per_param) {
            if let Some(g) = g {
                if !g.all_finite() {
                    finite = false;
                }
                for (a, b) in slot.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
        }
    }
    if !total.is_finite() {
        finite = false;
    }
    Ok(BatchBackward { loss: total, grads: acc, tokens, correct, finite })
}

/// One Adam update with bias correction. Regularized parameters see
/// `ĝ = g + r·v`; embeddings are exempt; the recurrent part uses `l_r` and
/// everything else `l_f`.
pub fn adam_step(
    params: &mut [Arc<Tensor>],
    specs: &[ParamSpec],
    grads: &[Tensor],
    opt: &mut OptimState,
    tc: &TrainConfig,
) -> Result<()> {
    if params.len() != specs.len() || grads.len() != specs.len() {
        return Err(Error::Dimension {
            op: "adam step",
            detail: format!(
                "got {} params, {} grads for a {}-entry layout",
                params.len(),
                grads.len(),
                specs.len()
            ),
        });
    }
    opt.step += 1;
    let t = opt.step as i32;
    let bias1 = 1.0 - tc.adam_beta1.powi(t);
    let bias2 = 1.0 - tc.adam_beta2.powi(t);
    for (i, spec) in specs.iter().enumerate() {
        if grads[i].shape() != spec.shape.as_slice() {
            return Err(Error::Dimension {
                op: "adam step",
                detail: format!("gradient for {} has the wrong shape", spec.name),
            });
        }
        let lr = match spec.class {
            ParamClass::Recurrent => tc.l_r,
            ParamClass::NonRecurrent | ParamClass::Embedding => tc.l_f,
        };
        let shrink = match spec.class {
            ParamClass::Embedding => 0.0,
            _ => tc.r,
        };
        let p = Arc::make_mut(&mut params[i]);
        let pd = p.data_mut();
        let md = opt.m[i].data_mut();
        let vd = opt.v[i].data_mut();
        let gd = grads[i].data();
        for j in 0..pd.len() {
            let g = gd[j] + shrink * pd[j];
            md[j] = tc.adam_beta1 * md[j] + (1.0 - tc.adam_beta1) * g;
            vd[j] = tc.adam_beta2 * vd[j] + (1.0 - tc.adam_beta2) * g * g;
            let m_hat = md[j] / bias1;
            let v_hat = vd[j] / bias2;
            pd[j] -= lr * m_hat / (v_hat.sqrt() + tc.adam_eps);
        }
    }
    Ok(())
}

/// Outcome of one training step. On a non-finite loss or gradient the update
/// is skipped and `event` is set.
pub struct StepOutcome {
    pub loss: f64,
    pub tokens: usize,
    pub correct: usize,
    pub event: bool,
}

/// Run backward on one batch and apply Adam unless something non-finite
/// appeared. `step_rng` seeds the per-row dropout masks; pass dropout only
/// when `p_d > 0`.
pub fn train_step(
    params: &mut [Arc<Tensor>],
    config: &ModelConfig,
    tc: &TrainConfig,
    opt: &mut OptimState,
    batch: &Batch,
    step_rng: &SeededRng,
) -> Result<StepOutcome> {
    let model = ModelParams::from_tensors(config.clone(), params.to_vec())?;
    let dropout = if config.p_drop > 0.0 { Some(step_rng) } else { None };
    let bb = batch_backward(&model, batch, dropout)?;
    if !bb.finite {
        return Ok(StepOutcome { loss: bb.loss, tokens: bb.tokens, correct: bb.correct, event: true });
    }
    let specs = config.param_template();
    adam_step(params, &specs, &bb.grads, opt, tc)?;
    Ok(StepOutcome { loss: bb.loss, tokens: bb.tokens, correct: bb.correct, event: false })
}

/// Consecutive dev evaluations without a loss improvement before the run
/// stops early.
const EARLY_STOP_PATIENCE: usize = 5;

/// One periodic development-set measurement.
#[derive(Debug, Clone)]
pub struct DevPoint {
    pub step: u64,
    /// Mean per-token teacher-forced negative log-likelihood.
    pub loss: f64,
    pub ter: f64,
    pub bleu: f64,
}

/// What a finished run reports. Per-step losses live in `metrics.csv`, dev
/// measurements in `dev.csv`, parameters in `step-N.ckpt` / `best.ckpt`
/// (highest dev BLEU) / `final.ckpt`, all under the output directory.
#[derive(Debug)]
pub struct TrainReport {
    pub steps: u64,
    pub epochs_run: usize,
    pub events: usize,
    pub skipped_too_long: usize,
    /// Teacher-forced token accuracy over the last completed epoch's batches.
    pub final_train_accuracy: f64,
    pub best_dev_bleu: Option<f64>,
    pub stopped_early: bool,
    pub dev_points: Vec<DevPoint>,
    pub out_dir: PathBuf,
}

/// Everything `train` needs, borrowed from the caller.
pub struct TrainJob<'a> {
    pub model: &'a ModelConfig,
    pub tc: &'a TrainConfig,
    pub beam: &'a BeamSettings,
    pub train_corpus: &'a ParallelCorpus,
    pub dev_corpus: &'a ParallelCorpus,
    pub src_vocab: &'a Vocabulary,
    pub tgt_vocab: &'a Vocabulary,
    pub out_dir: &'a Path,
}

struct EvalCtx<'a> {
    cfg: &'a ModelConfig,
    dev_pairs: &'a [(Vec<usize>, Vec<usize>)],
    dev_sources: &'a [String],
    dev_refs: &'a [String],
    src_vocab: &'a Vocabulary,
    tgt_vocab: &'a Vocabulary,
    beam: &'a BeamSettings,
    out_dir: &'a Path,
}

struct EvalState {
    dev_log: fs::File,
    dev_path: PathBuf,
    best_bleu: f64,
    best_loss: f64,
    patience: usize,
    stop: bool,
    points: Vec<DevPoint>,
}

fn eval_and_log(
    ctx: &EvalCtx,
    st: &mut EvalState,
    step: u64,
    tensors: &[Arc<Tensor>],
) -> Result<()> {
    let model = ModelParams::from_tensors(ctx.cfg.clone(), tensors.to_vec())?;
    let (nll, tokens) = evaluator::corpus_nll(&model, ctx.dev_pairs)?;
    let loss = nll / tokens as f64;
    let ter = evaluator::token_error_rate(&model, ctx.dev_pairs)?;
    let candidates = translate_corpus(
        &[&model],
        ctx.src_vocab,
        ctx.tgt_vocab,
        ctx.dev_sources,
        ctx.beam,
        None,
    )?;
    let bleu = evaluator::bleu(&candidates, ctx.dev_refs)?.bleu;
    writeln!(st.dev_log, "{step},{loss},{ter},{bleu}")
        .map_err(|e| io_error(&st.dev_path, &e))?;
    checkpoint::save(&ctx.out_dir.join(format!("step-{step}.ckpt")), &model)?;
    if bleu > st.best_bleu {
        st.best_bleu = bleu;
        checkpoint::save(&ctx.out_dir.join("best.ckpt"), &model)?;
    }
    if loss < st.best_loss {
        st.best_loss = loss;
        st.patience = EARLY_STOP_PATIENCE;
    } else {
        st.patience -= 1;
        if st.patience == 0 {
            st.stop = true;
        }
    }
    st.points.push(DevPoint { step, loss, ter, bleu });
    Ok(())
}

/// The training loop: epochs of Adam steps over length-grouped batches, a
/// per-step loss log, periodic dev loss / error rate / BLEU with a
/// checkpoint at each measurement, and early stopping on dev loss. Aborts
/// with a numeric error once non-finite events exceed the configured cap.
pub fn train(job: &TrainJob) -> Result<TrainReport> {
    job.tc.validate()?;
    let cfg = ModelConfig { p_drop: job.tc.p_d, ..job.model.clone() };
    cfg.validate()?;
    if job.train_corpus.is_empty() {
        return Err(Error::Input("empty training corpus".to_string()));
    }
    if job.dev_corpus.is_empty() {
        return Err(Error::Input("empty development corpus".to_string()));
    }
    fs::create_dir_all(job.out_dir).map_err(|e| io_error(job.out_dir, &e))?;

    let train_pairs = encode_pairs(job.train_corpus, job.src_vocab, job.tgt_vocab);
    let dev_pairs = encode_pairs(job.dev_corpus, job.src_vocab, job.tgt_vocab);
    let dev_sources = job.dev_corpus.source_lines();
    let dev_refs = job.dev_corpus.target_lines();

    let root = SeededRng::from_seed(job.tc.seed);
    let mut params = init_params(&cfg, &mut root.fork(0))?.to_tensors();
    let mut opt = OptimState::new(&cfg.param_template());
    let batch_root = root.fork(1);
    let dropout_root = root.fork(2);

    let metrics_path = job.out_dir.join("metrics.csv");
    let mut metrics =
        fs::File::create(&metrics_path).map_err(|e| io_error(&metrics_path, &e))?;
    writeln!(metrics, "step,loss,lr_part,events").map_err(|e| io_error(&metrics_path, &e))?;
    let lr_part = format!("{}/{}", job.tc.l_r, job.tc.l_f);

    let dev_path = job.out_dir.join("dev.csv");
    let mut dev_log = fs::File::create(&dev_path).map_err(|e| io_error(&dev_path, &e))?;
    writeln!(dev_log, "step,dev_loss,dev_ter,dev_bleu").map_err(|e| io_error(&dev_path, &e))?;

    let ctx = EvalCtx {
        cfg: &cfg,
        dev_pairs: &dev_pairs,
        dev_sources: &dev_sources,
        dev_refs: &dev_refs,
        src_vocab: job.src_vocab,
        tgt_vocab: job.tgt_vocab,
        beam: job.beam,
        out_dir: job.out_dir,
    };
    let mut st = EvalState {
        dev_log,
        dev_path,
        best_bleu: f64::NEG_INFINITY,
        best_loss: f64::INFINITY,
        patience: EARLY_STOP_PATIENCE,
        stop: false,
        points: Vec::new(),
    };

    let mut step: u64 = 0;
    let mut events = 0usize;
    let mut skipped_too_long = 0usize;
    let mut epochs_run = 0usize;
    let mut final_train_accuracy = 0.0;

    'epochs: for epoch in 0..job.tc.max_epochs {
        let (batches, skipped) = make_batches(
            &train_pairs,
            job.tc.batch_size,
            job.tc.max_len,
            &mut batch_root.fork(epoch as u64),
        )?;
        if epoch == 0 {
            skipped_too_long = skipped;
        }
        let mut epoch_correct = 0usize;
        let mut epoch_tokens = 0usize;
        for batch in &batches {
            let out =
                train_step(&mut params, &cfg, job.tc, &mut opt, batch, &dropout_root.fork(step))?;
            step += 1;
            if out.event {
                events += 1;
            }
            epoch_correct += out.correct;
            epoch_tokens += out.tokens;
            writeln!(
                metrics,
                "{step},{},{lr_part},{events}",
                out.loss / out.tokens.max(1) as f64
            )
            .map_err(|e| io_error(&metrics_path, &e))?;
            if events > job.tc.max_events {
                return Err(Error::Numeric(format!(
                    "aborted at step {step}: {events} non-finite events exceed the cap of {}",
                    job.tc.max_events
                )));
            }
            if job.tc.checkpoint_every > 0 && step.is_multiple_of(job.tc.checkpoint_every as u64)
            {
                eval_and_log(&ctx, &mut st, step, &params)?;
                if st.stop {
                    epochs_run = epoch + 1;
                    break 'epochs;
                }
            }
        }
        final_train_accuracy = epoch_correct as f64 / epoch_tokens.max(1) as f64;
        epochs_run = epoch + 1;
        if job.tc.checkpoint_every == 0 {
            eval_and_log(&ctx, &mut st, step, &params)?;
            if st.stop {
                break 'epochs;
            }
        }
    }

    let model = ModelParams::from_tensors(cfg.clone(), params)?;
    checkpoint::save(&job.out_dir.join("final.ckpt"), &model)?;
    Ok(TrainReport {
        steps: step,
        epochs_run,
        events,
        skipped_too_long,
        final_train_accuracy,
        best_dev_bleu: if st.points.is_empty() { None } else { Some(st.best_bleu) },
        stopped_early: st.stop,
        dev_points: st.points,
        out_dir: job.out_dir.to_path_buf(),
    })
}
