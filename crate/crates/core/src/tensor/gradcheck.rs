use super::{Tape, Tensor, Var};
use crate::error::Result;

/// Lower bound on the denominator of the relative error, so entries whose
/// true gradient is essentially zero are judged on absolute error instead.
pub const GRAD_CHECK_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckFailure {
    pub param: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub rel_tol: f64,
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(param, index)` of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub failures: Vec<GradCheckFailure>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub(crate) fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Compares tape gradients of a scalar function against central differences
/// `(f(θ+h) - f(θ-h)) / 2h` for every entry of every parameter.
///
/// `f` receives a fresh tape and the parameters bound as leaves (in the
/// order given) and must return a scalar node. It is evaluated
/// `1 + 2 * Σ|θ|` times, so it has to be deterministic. Parameter values are
/// restored before returning.
pub fn grad_check<F>(params: &mut [Tensor], step: f64, rel_tol: f64, mut f: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |params: &[Tensor], f: &mut F| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p)).collect();
        let out = f(&mut tape, &vars)?;
        tape.scalar_value(out)
    };

    let analytic: Vec<Vec<f64>> = {
        let trainable: Vec<Tensor> = params
            .iter()
            .map(|p| {
                let mut c = p.clone();
                if !c.is_trainable() {
                    c = c.requires_grad();
                }
                c
            })
            .collect();
        let mut tape = Tape::new();
        let vars: Vec<Var> = trainable.iter().map(|p| tape.leaf(p)).collect();
        let out = f(&mut tape, &vars)?;
        let grads = tape.backward(out)?;
        vars.iter()
            .zip(&trainable)
            .map(|(&v, p)| grads.get(v).map_or_else(|| vec![0.0; p.len()], <[f64]>::to_vec))
            .collect()
    };

    let mut report = GradCheckReport {
        rel_tol,
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
        failures: Vec::new(),
    };
    for p in 0..params.len() {
        for i in 0..params[p].len() {
            let orig = params[p].data()[i];
            params[p].data_mut()[i] = orig + step;
            let plus = eval(params, &mut f);
            params[p].data_mut()[i] = orig - step;
            let minus = eval(params, &mut f);
            params[p].data_mut()[i] = orig;
            let numeric = (plus? - minus?) / (2.0 * step);
            let a = analytic[p][i];
            let rel = relative_error(a, numeric);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel;
                report.worst = Some((p, i));
            }
            if !(rel < rel_tol) {
                report.failures.push(GradCheckFailure {
                    param: p,
                    index: i,
                    analytic: a,
                    numeric,
                    rel_error: rel,
                });
            }
        }
    }
    Ok(report)
}
