//! Central-difference verification of the reverse pass.

use super::{NodeId, ParamStore, Tape, TensorError};

/// Outcome of a gradient check.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    /// Max over all parameter components of `|a - n| / max(|a|, |n|, 1e-8)`
    /// where `a` is the analytic and `n` the central-difference gradient.
    pub max_rel_error: f64,
    /// Smallest margin to a non-differentiable decision (pooling argmax
    /// gap, relu or hinge boundary) seen across every forward pass of the
    /// check. Small margins mean a decision may flip inside the
    /// perturbation interval; callers should resample and retry.
    pub min_kink_gap: f64,
}

impl GradCheckReport {
    /// True when a pooling, relu, or hinge decision could flip within the
    /// perturbation. The factor allows for amplification of a parameter
    /// step through similarity and convolution chains.
    pub fn tie_suspected(&self, eps: f64) -> bool {
        self.min_kink_gap < 16.0 * eps
    }
}

/// Compares the analytic gradient of a scalar-valued fragment against
/// central differences `(f(x + eps) - f(x - eps)) / (2 eps)`, component by
/// component over every parameter in the store.
///
/// `build` reconstructs the forward pass from current parameter values and
/// returns the loss node; it is called once for the analytic pass and twice
/// per parameter component for the numeric one. `eps` must lie in
/// `[1e-6, 1e-3]`.
pub fn grad_check<F>(
    store: &mut ParamStore,
    mut build: F,
    eps: f64,
) -> Result<GradCheckReport, TensorError>
where
    F: FnMut(&mut Tape) -> Result<NodeId, TensorError>,
{
    assert!((1e-6..=1e-3).contains(&eps), "eps must be in [1e-6, 1e-3]");

    let mut min_kink_gap;
    let analytic = {
        let mut tape = Tape::new(store);
        let loss = build(&mut tape)?;
        if tape.value(loss).len() != 1 {
            return Err(TensorError::NonScalarLoss {
                shape: tape.value(loss).shape().to_vec(),
            });
        }
        min_kink_gap = tape.min_kink_gap();
        tape.backward(loss, 1.0)?
    };

    let mut max_rel_error = 0.0f64;
    let param_ids: alloc::vec::Vec<_> = store.ids().collect();
    for pid in param_ids {
        let n_components = store.value(pid).len();
        for c in 0..n_components {
            let orig = store.value(pid).data()[c];

            store.value_mut(pid).data_mut()[c] = orig + eps;
            let (f_plus, gap_plus) = eval(store, &mut build)?;
            store.value_mut(pid).data_mut()[c] = orig - eps;
            let (f_minus, gap_minus) = eval(store, &mut build)?;
            store.value_mut(pid).data_mut()[c] = orig;

            min_kink_gap = min_kink_gap.min(gap_plus).min(gap_minus);
            let numeric = (f_plus - f_minus) / (2.0 * eps);
            let a = analytic.get(pid).map_or(0.0, |g| g.data()[c]);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            if rel > max_rel_error {
                max_rel_error = rel;
            }
        }
    }

    Ok(GradCheckReport { max_rel_error, min_kink_gap })
}

fn eval<F>(store: &ParamStore, build: &mut F) -> Result<(f64, f64), TensorError>
where
    F: FnMut(&mut Tape) -> Result<NodeId, TensorError>,
{
    let mut tape = Tape::new(store);
    let loss = build(&mut tape)?;
    Ok((tape.scalar_value(loss), tape.min_kink_gap()))
}
