use super::{EngineError, ParamId, ParamStore, Tape, Var};

/// Outcome of [`finite_difference_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Max over coordinates of `|analytic - numeric| / max(1, |numeric|)`.
    pub max_relative_error: f64,
    /// Parameter and flat coordinate where the maximum was attained.
    pub worst: Option<(ParamId, usize)>,
    pub coordinates: usize,
}

fn eval<F>(store: &ParamStore, build_loss: &mut F) -> Result<f64, EngineError>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var, EngineError>,
{
    let mut tape = Tape::new();
    let loss = build_loss(&mut tape, store)?;
    tape.scalar(loss).ok_or(EngineError::NotScalar {
        shape: tape.value(loss).shape(),
    })
}

/// Compares reverse-mode gradients of `build_loss` against central
/// differences `(f(θ+ε) − f(θ−ε)) / 2ε`, one coordinate at a time, for
/// every parameter in `params`.
///
/// `build_loss` must register parameters through [`Tape::param`] so that
/// perturbations of `store` are seen by the forward pass.
pub fn finite_difference_check<F>(
    store: &mut ParamStore,
    params: &[ParamId],
    eps: f64,
    mut build_loss: F,
) -> Result<GradCheckReport, EngineError>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var, EngineError>,
{
    assert!(eps > 0.0, "eps must be positive");

    let mut tape = Tape::new();
    let loss = build_loss(&mut tape, store)?;
    let base = tape.scalar(loss).ok_or(EngineError::NotScalar {
        shape: tape.value(loss).shape(),
    })?;
    let again = eval(store, &mut build_loss)?;
    if base.to_bits() != again.to_bits() {
        return Err(EngineError::NonDeterministicLoss {
            first: base,
            second: again,
        });
    }
    let grads = tape.backward(loss)?;
    drop(tape);

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    for &id in params {
        let shape = store.value(id).shape();
        let analytic = grads
            .wrt(id)
            .unwrap_or_else(|| super::Matrix::zeros(shape.0, shape.1));
        for k in 0..store.value(id).data().len() {
            let orig = store.value(id).data()[k];
            store.get_mut(id).value.data_mut()[k] = orig + eps;
            let plus = eval(store, &mut build_loss);
            store.get_mut(id).value.data_mut()[k] = orig - eps;
            let minus = eval(store, &mut build_loss);
            store.get_mut(id).value.data_mut()[k] = orig;
            let numeric = (plus? - minus?) / (2.0 * eps);
            let err = (analytic.data()[k] - numeric).abs() / numeric.abs().max(1.0);
            report.coordinates += 1;
            if report.worst.is_none() || err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = Some((id, k));
            }
        }
    }
    Ok(report)
}
