//! Central finite-difference validation of tape gradients.

use crate::error::{Error, Result};
use crate::numerics::tape::{Tape, ValueId};
use crate::numerics::tensor::Tensor;

/// Perturbation step for central differences.
pub const FD_STEP: f64 = 1e-5;
/// Acceptance threshold on the worst relative error.
pub const FD_TOLERANCE: f64 = 1e-6;

/// Outcome of one finite-difference comparison run.
#[derive(Debug, Clone)]
pub struct FdReport {
    /// Number of scalar coordinates compared.
    pub checked: usize,
    /// Worst relative error seen, `|fd - grad| / max(1, |fd|, |grad|)`.
    pub max_rel_err: f64,
    /// Location of the worst coordinate, as `input/index`.
    pub worst: String,
}

impl FdReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err <= tolerance
    }
}

/// Relative error as used throughout gradient validation.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1.0_f64.max(a.abs()).max(b.abs())
}

/// Compare tape gradients of a scalar-valued function against central finite
/// differences over every coordinate of every input.
///
/// `build` records the function on a fresh tape from leaves matching `inputs`
/// and returns the id of a width-1 output. It is re-invoked once per
/// perturbed evaluation, so it must be deterministic given the leaf values.
pub fn fd_check<F>(inputs: &[Tensor], step: f64, build: F) -> Result<FdReport>
where
    F: Fn(&mut Tape, &[ValueId]) -> Result<ValueId>,
{
    let eval = |tensors: &[Tensor]| -> Result<(Tape, Vec<ValueId>, ValueId)> {
        let mut tape = Tape::new();
        let ids: Vec<ValueId> = tensors.iter().map(|t| tape.input(t.clone())).collect();
        let out = build(&mut tape, &ids)?;
        if tape.value(out).len() != 1 {
            return Err(Error::dimension(
                "fd_check",
                format!("output must be width 1, got {}", tape.value(out).shape_string()),
            ));
        }
        Ok((tape, ids, out))
    };

    let (tape, leaf_ids, out) = eval(inputs)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = inputs
        .iter()
        .zip(&leaf_ids)
        .map(|(t, &id)| {
            grads
                .wrt(id)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(t.shape()))
        })
        .collect();

    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut report = FdReport {
        checked: 0,
        max_rel_err: 0.0,
        worst: String::new(),
    };
    for i in 0..inputs.len() {
        for j in 0..inputs[i].len() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + step;
            let (tp, _, op) = eval(&work)?;
            let f_plus = tp.value(op).as_scalar()?;
            work[i].data_mut()[j] = orig - step;
            let (tm, _, om) = eval(&work)?;
            let f_minus = tm.value(om).as_scalar()?;
            work[i].data_mut()[j] = orig;

            let fd = (f_plus - f_minus) / (2.0 * step);
            let err = rel_err(fd, analytic[i].data()[j]);
            report.checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = format!("{i}/{j}");
            }
        }
    }
    Ok(report)
}
