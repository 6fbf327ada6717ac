//! Tensors, seeded randomness, and reverse-mode differentiation.

pub mod fdcheck;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use fdcheck::{fd_check, rel_err, FdReport, FD_STEP, FD_TOLERANCE};
pub use rng::SeededRng;
pub use tape::{log_sum_exp, sigmoid, softmax_slice, Gradients, Tape, ValueId};
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// Inverted-dropout mask: each element keeps with probability `1 - p_drop`
/// and is scaled by `1 / (1 - p_drop)`, so the expected value of a masked
/// activation equals the unmasked one and no rescaling is needed at
/// evaluation time. `p_drop = 0` yields an all-ones mask.
pub fn dropout_mask(shape: &[usize], p_drop: f64, rng: &mut SeededRng) -> Result<Tensor> {
    if !(0.0..1.0).contains(&p_drop) {
        return Err(Error::Domain(format!(
            "dropout probability {p_drop} outside [0, 1)"
        )));
    }
    let keep_scale = 1.0 / (1.0 - p_drop);
    let mut mask = Tensor::zeros(shape);
    for x in mask.data_mut() {
        *x = if rng.next_f64() < p_drop { 0.0 } else { keep_scale };
    }
    Ok(mask)
}
