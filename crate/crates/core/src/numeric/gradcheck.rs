//! Central-difference verification of tape gradients.

use super::{NumericError, Tape, Tensor, Var};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, 1e-3)`.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// (tensor index, element index) of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    pub tol: f64,
    pub passed: bool,
}

/// Relative errors are measured against this floor so that entries whose
/// true gradient is ~0 are judged on absolute error instead.
const REL_FLOOR: f64 = 1e-3;

/// Compares the tape gradient of the scalar built by `f` against central
/// differences with step `h`, perturbing every element of every tensor in
/// `params`. `f` receives the tape and one [`Var`] per parameter tensor.
pub fn grad_check<F, E>(
    mut f: F,
    params: &mut [Tensor],
    h: f64,
    tol: f64,
) -> Result<GradCheckReport, E>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var, E>,
    E: From<NumericError>,
{
    let mut eval = |params: &[Tensor]| -> Result<(Tape, Vec<Var>, Var), E> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok((tape, vars, out))
    };

    let (tape, vars, out) = eval(params)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(params.iter())
        .map(|(&v, p)| grads.get(v).map_or_else(|| vec![0.0; p.len()], <[f64]>::to_vec))
        .collect();
    drop(tape);

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst: None,
        checked: 0,
        tol,
        passed: true,
    };
    for ti in 0..params.len() {
        for ei in 0..params[ti].len() {
            let orig = params[ti].data()[ei];
            params[ti].data_mut()[ei] = orig + h;
            let plus = scalar(&eval(params)?)?;
            params[ti].data_mut()[ei] = orig - h;
            let minus = scalar(&eval(params)?)?;
            params[ti].data_mut()[ei] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[ti][ei];
            if !numeric.is_finite() || !a.is_finite() {
                return Err(NumericError::Unstable(format!(
                    "non-finite gradient at tensor {ti} element {ei}: analytic {a}, numeric {numeric}"
                ))
                .into());
            }
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_FLOOR);
            report.max_abs_error = report.max_abs_error.max(abs);
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((ti, ei));
            }
            report.checked += 1;
        }
    }
    report.passed = report.max_rel_error <= tol;
    Ok(report)
}

fn scalar<E: From<NumericError>>(r: &(Tape, Vec<Var>, Var)) -> Result<f64, E> {
    let v = r.0.value(r.2).data()[0];
    if v.is_finite() {
        Ok(v)
    } else {
        Err(NumericError::Unstable(format!("objective evaluated to {v}")).into())
    }
}
