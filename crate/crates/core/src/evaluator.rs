//! Scoring and measurement: corpus BLEU, teacher-forced token error rate,
//! length-bucketed reporting, unknown-word subset scoring, and the
//! gradient-propagation probe comparing stacks with and without the linear
//! input-projection path.
//!
//! BLEU follows the classic corpus-level script semantics exactly: whitespace
//! tokens, case preserved, clipped n-gram precision up to 4-grams summed over
//! the corpus, brevity penalty `min(1, e^(1-r/c))`, no smoothing, single
//! reference. A zero precision at any order gives 0; an empty candidate
//! corpus gives 0 with BP 0.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::corpus::{Vocabulary, END_ID, SPECIALS, UNK_ID};
use crate::error::{Error, Result};
use crate::model::{
    bound_from_ids, sequence_nll, sequence_nll_on, ModelConfig, ModelParams, ParamClass,
};
use crate::numerics::{fd_check, SeededRng, Tape, Tensor, FD_STEP};
use crate::stack::{
    bind_layer, stack_forward, Direction, DirectionScheme, LayerParams, LstmParams, StackConfig,
};
use std::sync::Arc;

/// Corpus BLEU with its parts. `bleu` is a percentage in [0, 100].
#[derive(Debug, Clone)]
pub struct BleuReport {
    pub bleu: f64,
    pub precisions: [f64; 4],
    pub brevity_penalty: f64,
    pub candidate_len: usize,
    pub reference_len: usize,
}

fn ngram_counts<'a>(tokens: &[&'a str], n: usize) -> HashMap<Vec<&'a str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU over whitespace-tokenized, case-sensitive lines,
/// single reference per candidate.
pub fn bleu(candidate_lines: &[String], reference_lines: &[String]) -> Result<BleuReport> {
    if candidate_lines.len() != reference_lines.len() {
        return Err(Error::Input(format!(
            "{} candidate lines against {} references",
            candidate_lines.len(),
            reference_lines.len()
        )));
    }
    if candidate_lines.is_empty() {
        return Err(Error::Input("empty corpus".to_string()));
    }
    let mut correct = [0usize; 4];
    let mut total = [0usize; 4];
    let mut candidate_len = 0usize;
    let mut reference_len = 0usize;
    for (cand, reference) in candidate_lines.iter().zip(reference_lines) {
        let c: Vec<&str> = cand.split_whitespace().collect();
        let r: Vec<&str> = reference.split_whitespace().collect();
        candidate_len += c.len();
        reference_len += r.len();
        for n in 1..=4 {
            total[n - 1] += c.len().saturating_sub(n - 1).min(c.len());
            if c.len() >= n {
                let rn = ngram_counts(&r, n);
                for (gram, count) in ngram_counts(&c, n) {
                    let clip = rn.get(&gram).copied().unwrap_or(0);
                    correct[n - 1] += count.min(clip);
                }
            }
        }
    }
    let mut precisions = [0.0; 4];
    for n in 0..4 {
        if total[n] > 0 {
            precisions[n] = correct[n] as f64 / total[n] as f64;
        }
    }
    if candidate_len == 0 {
        return Ok(BleuReport {
            bleu: 0.0,
            precisions,
            brevity_penalty: 0.0,
            candidate_len,
            reference_len,
        });
    }
    let brevity_penalty = if candidate_len >= reference_len {
        1.0
    } else {
        (1.0 - reference_len as f64 / candidate_len as f64).exp()
    };
    let bleu = if precisions.contains(&0.0) {
        0.0
    } else {
        100.0 * brevity_penalty * (precisions.iter().map(|p| p.ln()).sum::<f64>() / 4.0).exp()
    };
    Ok(BleuReport { bleu, precisions, brevity_penalty, candidate_len, reference_len })
}

/// Teacher-forced token error rate: for every target position, the argmax
/// prediction given the gold history is compared against the gold token.
/// `pairs` are encoded ids, targets ending with the end mark.
pub fn token_error_rate(
    params: &ModelParams,
    pairs: &[(Vec<usize>, Vec<usize>)],
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Input("token error rate over an empty corpus".to_string()));
    }
    let counts: Vec<Result<(usize, usize)>> = pairs
        .par_iter()
        .map(|(src, tgt)| {
            let run = sequence_nll(params, src, tgt, false, None)?;
            let correct = run.correct.iter().filter(|&&c| c).count();
            Ok((correct, tgt.len()))
        })
        .collect();
    let mut correct = 0usize;
    let mut total = 0usize;
    for c in counts {
        let (c, t) = c?;
        correct += c;
        total += t;
    }
    Ok(1.0 - correct as f64 / total as f64)
}

/// Total teacher-forced negative log-likelihood and token count over encoded
/// pairs. The sum is accumulated in corpus order regardless of worker count.
pub fn corpus_nll(
    params: &ModelParams,
    pairs: &[(Vec<usize>, Vec<usize>)],
) -> Result<(f64, usize)> {
    if pairs.is_empty() {
        return Err(Error::Input("likelihood of an empty corpus".to_string()));
    }
    let rows: Vec<Result<(f64, usize)>> = pairs
        .par_iter()
        .map(|(src, tgt)| {
            let run = sequence_nll(params, src, tgt, false, None)?;
            Ok((run.tape.value(run.loss).as_scalar()?, tgt.len()))
        })
        .collect();
    let mut nll = 0.0;
    let mut tokens = 0usize;
    for row in rows {
        let (l, t) = row?;
        nll += l;
        tokens += t;
    }
    Ok((nll, tokens))
}

/// BLEU per source-length bucket. Buckets are `[i*width, (i+1)*width)`;
/// buckets holding no sentences report `None` rather than zero.
#[derive(Debug)]
pub struct LengthBucket {
    pub lo: usize,
    pub hi: usize,
    pub count: usize,
    pub report: Option<BleuReport>,
}

pub fn length_bucket_bleu(
    candidate_lines: &[String],
    reference_lines: &[String],
    source_lines: &[String],
    bucket_width: usize,
) -> Result<Vec<LengthBucket>> {
    if candidate_lines.len() != reference_lines.len()
        || candidate_lines.len() != source_lines.len()
    {
        return Err(Error::Input("bucketed scoring needs aligned line counts".to_string()));
    }
    if bucket_width < 1 {
        return Err(Error::Config("bucket width must be >= 1".to_string()));
    }
    if candidate_lines.is_empty() {
        return Err(Error::Input("empty corpus".to_string()));
    }
    let lengths: Vec<usize> =
        source_lines.iter().map(|l| l.split_whitespace().count()).collect();
    let buckets = lengths.iter().max().unwrap() / bucket_width + 1;
    let mut out = Vec::with_capacity(buckets);
    for b in 0..buckets {
        let lo = b * bucket_width;
        let hi = lo + bucket_width;
        let members: Vec<usize> = (0..lengths.len())
            .filter(|&i| lengths[i] >= lo && lengths[i] < hi)
            .collect();
        let report = if members.is_empty() {
            None
        } else {
            let cands: Vec<String> =
                members.iter().map(|&i| candidate_lines[i].clone()).collect();
            let refs: Vec<String> =
                members.iter().map(|&i| reference_lines[i].clone()).collect();
            Some(bleu(&cands, &refs)?)
        };
        out.push(LengthBucket { lo, hi, count: members.len(), report });
    }
    Ok(out)
}

/// Score only the sentence pairs whose reference contains no token that the
/// target vocabulary would map to unk. Returns the subset report (None when
/// nothing survives) and the retained fraction.
pub fn unk_subset_score(
    candidate_lines: &[String],
    reference_lines: &[String],
    tgt_vocab: &Vocabulary,
) -> Result<(Option<BleuReport>, f64)> {
    if candidate_lines.len() != reference_lines.len() {
        return Err(Error::Input("subset scoring needs aligned line counts".to_string()));
    }
    if candidate_lines.is_empty() {
        return Err(Error::Input("empty corpus".to_string()));
    }
    let keeps: Vec<usize> = (0..reference_lines.len())
        .filter(|&i| {
            reference_lines[i]
                .split_whitespace()
                .all(|tok| matches!(tgt_vocab.id(tok), Some(id) if id != UNK_ID))
        })
        .collect();
    let ratio = keeps.len() as f64 / reference_lines.len() as f64;
    if keeps.is_empty() {
        return Ok((None, ratio));
    }
    let cands: Vec<String> = keeps.iter().map(|&i| candidate_lines[i].clone()).collect();
    let refs: Vec<String> = keeps.iter().map(|&i| reference_lines[i].clone()).collect();
    Ok((Some(bleu(&cands, &refs)?), ratio))
}

/// Gradient-propagation probe settings. Two matched all-forward stacks are
/// built per trial — identical seeds, widths, and depth, one with the linear
/// input-projection path enabled and one without — and one forward/backward
/// pass over a random sequence measures per-layer input-projection gradient
/// norms. Recurrent weights are drawn from Normal(0, 0.07²) so the recurrent
/// paths are active.
#[derive(Debug, Clone)]
pub struct ProbeConfig {
    pub depth: usize,
    pub cell_width: usize,
    pub seq_len: usize,
    pub trials: usize,
    pub seed: u64,
}

/// One measured norm: `group` is "ff" or "no_ff".
#[derive(Debug, Clone)]
pub struct ProbeRow {
    pub layer: usize,
    pub group: &'static str,
    pub norm: f64,
    pub trial: usize,
}

#[derive(Debug)]
pub struct ProbeReport {
    pub config: ProbeConfig,
    pub rows: Vec<ProbeRow>,
    /// Per-trial bottom-layer norm ratio, with-path / without-path.
    pub bottom_ratios: Vec<f64>,
    pub median_bottom_ratio: f64,
    pub nonfinite_events: usize,
}

impl ProbeReport {
    /// CSV rendering: `layer,group,norm,trial`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,group,norm,trial\n");
        for row in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", row.layer, row.group, row.norm, row.trial));
        }
        out
    }
}

fn probe_arm(
    config: &StackConfig,
    rng: &SeededRng,
    xs_data: &[Tensor],
) -> Result<Vec<f64>> {
    let d = config.cell_width;
    let mut layers = Vec::with_capacity(config.depth);
    for k in 1..=config.depth {
        let in_dim = if k == 1 {
            d
        } else if config.ff_enabled {
            3 * d
        } else {
            d
        };
        let fill = |tag: u64, shape: &[usize]| -> Arc<Tensor> {
            let mut t = Tensor::zeros(shape);
            rng.fork(k as u64 * 16 + tag).fill_normal(t.data_mut(), 0.0, 0.07);
            Arc::new(t)
        };
        layers.push(LayerParams {
            w_f: fill(0, &[4 * d, in_dim]),
            lstm: LstmParams {
                w_r: fill(1, &[4 * d, d]),
                theta_rho: fill(2, &[d]),
                theta_phi: fill(3, &[d]),
                theta_pi: fill(4, &[d]),
            },
            direction: Direction::Forward,
            layer_index: k,
        });
    }
    let mut tape = Tape::new();
    let mut bound = Vec::with_capacity(layers.len());
    let mut w_f_ids = Vec::with_capacity(layers.len());
    for layer in &layers {
        let b = bind_layer(&mut tape, layer, true);
        w_f_ids.push(b.w_f);
        bound.push(b);
    }
    let xs: Vec<_> = xs_data
        .iter()
        .map(|x| tape.constant(x.clone()))
        .collect();
    let steps = stack_forward(&mut tape, &bound, &xs, config, None)?;
    let mut parts = Vec::with_capacity(steps.len());
    for step in steps.last().expect("depth >= 1") {
        parts.push(tape.sum(step.h));
    }
    let loss = tape.add_n(&parts)?;
    let grads = tape.backward(loss)?;
    Ok(w_f_ids
        .iter()
        .map(|&id| grads.wrt(id).map_or(0.0, Tensor::l2_norm))
        .collect())
}

/// Worst finite-difference disagreement across random model instances.
#[derive(Debug, Clone)]
pub struct GradCheckOutcome {
    pub instances: usize,
    /// Scalar coordinates compared in total.
    pub coords: usize,
    pub max_rel_err: f64,
    /// `instance/input/index` of the worst coordinate.
    pub worst: String,
}

impl GradCheckOutcome {
    pub fn passes_default(&self) -> bool {
        self.max_rel_err <= crate::numerics::FD_TOLERANCE
    }
}

/// Validate full-model gradients against central finite differences on
/// `instances` random (parameters, sentence pair) draws. Recurrent weights
/// are re-drawn from Normal(0, 0.3²) so their gradients are exercised;
/// dropout stays off because finite differences need a deterministic loss.
pub fn model_grad_check(
    config: &ModelConfig,
    instances: usize,
    seed: u64,
) -> Result<GradCheckOutcome> {
    if instances < 1 {
        return Err(Error::Config("gradient check needs at least one instance".to_string()));
    }
    if config.src_vocab <= SPECIALS || config.tgt_vocab <= SPECIALS {
        return Err(Error::Config("gradient check needs non-reserved vocabulary room".to_string()));
    }
    let root = SeededRng::from_seed(seed);
    let mut out = GradCheckOutcome {
        instances,
        coords: 0,
        max_rel_err: 0.0,
        worst: String::new(),
    };
    for instance in 0..instances {
        let rng = root.fork(instance as u64);
        let seeded = ModelParams::init(config, &mut rng.fork(0))?;
        let tensors: Vec<Tensor> = config
            .param_template()
            .iter()
            .zip(seeded.to_tensors())
            .enumerate()
            .map(|(slot, (spec, t))| {
                if spec.class == ParamClass::Recurrent {
                    let mut r = Tensor::zeros(&spec.shape);
                    rng.fork(100 + slot as u64).fill_normal(r.data_mut(), 0.0, 0.3);
                    r
                } else {
                    (*t).clone()
                }
            })
            .collect();
        let mut draw = rng.fork(1);
        let src_len = 2 + draw.next_below(3);
        let tgt_len = 2 + draw.next_below(3);
        let source: Vec<usize> =
            (0..src_len).map(|_| SPECIALS + draw.next_below(config.src_vocab - SPECIALS)).collect();
        let mut target: Vec<usize> =
            (0..tgt_len).map(|_| SPECIALS + draw.next_below(config.tgt_vocab - SPECIALS)).collect();
        target.push(END_ID);

        let report = fd_check(&tensors, FD_STEP, |tape, ids| {
            let bm = bound_from_ids(config, ids)?;
            let (loss, _) = sequence_nll_on(tape, &bm, config, &source, &target, None)?;
            Ok(loss)
        })?;
        out.coords += report.checked;
        if report.max_rel_err > out.max_rel_err {
            out.max_rel_err = report.max_rel_err;
            out.worst = format!("{instance}/{}", report.worst);
        }
    }
    Ok(out)
}

pub fn gradient_probe(pc: &ProbeConfig) -> Result<ProbeReport> {
    if pc.depth < 2 {
        return Err(Error::Config(
            "a gradient-propagation probe over fewer than 2 layers is vacuous".to_string(),
        ));
    }
    if pc.cell_width < 1 || pc.seq_len < 1 || pc.trials < 1 {
        return Err(Error::Config("probe needs positive width, length, trials".to_string()));
    }
    let base = StackConfig {
        depth: pc.depth,
        cell_width: pc.cell_width,
        ff_enabled: true,
        scheme: DirectionScheme::AllForward,
        p_drop: 0.0,
    };
    let no_ff = StackConfig { ff_enabled: false, ..base };

    let mut rows = Vec::new();
    let mut bottom_ratios = Vec::with_capacity(pc.trials);
    let mut nonfinite_events = 0usize;
    for trial in 0..pc.trials {
        let rng = SeededRng::from_seed(pc.seed).fork(trial as u64);
        let mut xs_rng = rng.fork(1000);
        let xs: Vec<Tensor> = (0..pc.seq_len)
            .map(|_| {
                let mut t = Tensor::zeros(&[pc.cell_width]);
                xs_rng.fill_normal(t.data_mut(), 0.0, 1.0);
                t
            })
            .collect();
        let ff_norms = probe_arm(&base, &rng, &xs)?;
        let no_ff_norms = probe_arm(&no_ff, &rng, &xs)?;
        for (i, &n) in ff_norms.iter().enumerate() {
            if !n.is_finite() {
                nonfinite_events += 1;
            }
            rows.push(ProbeRow { layer: i + 1, group: "ff", norm: n, trial });
        }
        for (i, &n) in no_ff_norms.iter().enumerate() {
            if !n.is_finite() {
                nonfinite_events += 1;
            }
            rows.push(ProbeRow { layer: i + 1, group: "no_ff", norm: n, trial });
        }
        bottom_ratios.push(ff_norms[0] / no_ff_norms[0]);
    }
    let mut sorted = bottom_ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median_bottom_ratio = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    Ok(ProbeReport {
        config: pc.clone(),
        rows,
        bottom_ratios,
        median_bottom_ratio,
        nonfinite_events,
    })
}
