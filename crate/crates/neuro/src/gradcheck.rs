//! Central finite differences against the tape's gradients.

use kgtext_core::seeding::substream;
use kgtext_core::{Modality, TokenSeq};

use crate::model::{ModelError, Seq2Seq};

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is (numerically) zero are judged by absolute error.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Tensor name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Checks every coordinate of every parameter tensor. With `dropout_seed`
/// the same dropout masks are drawn for every evaluation.
pub fn gradient_check(
    model: &Seq2Seq<f64>,
    src: &TokenSeq,
    tgt: &TokenSeq,
    output: Modality,
    epsilon: f64,
    dropout_seed: Option<u64>,
) -> Result<GradCheck, ModelError> {
    let loss = |m: &Seq2Seq<f64>| -> Result<f64, ModelError> {
        let mut rng = dropout_seed.map(|s| substream(s, "gradcheck", 0));
        Ok(m.loss_and_grads(src, tgt, output, rng.as_mut())?.0)
    };
    let mut rng = dropout_seed.map(|s| substream(s, "gradcheck", 0));
    let (_, grads) = model.loss_and_grads(src, tgt, output, rng.as_mut())?;

    let mut probe = model.clone();
    let mut report = GradCheck { max_rel_error: 0.0, worst: None, checked: 0 };
    for p in 0..model.params.data.len() {
        for k in 0..model.params.data[p].len() {
            let orig = model.params.data[p][k];
            probe.params.data[p][k] = orig + epsilon;
            let up = loss(&probe)?;
            probe.params.data[p][k] = orig - epsilon;
            let down = loss(&probe)?;
            probe.params.data[p][k] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            let err = relative_error(grads.data[p][k], numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((model.params.shapes[p].name.clone(), k));
            }
        }
    }
    Ok(report)
}
