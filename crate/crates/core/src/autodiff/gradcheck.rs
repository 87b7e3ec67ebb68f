use super::{AutodiffError, ParamStore, Tape, Var};

/// Finite-difference stencil used as the numeric reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stencil {
    /// `(f(x+h) − f(x−h)) / 2h`
    Central,
    /// `(−f(x+2h) + 8f(x+h) − 8f(x−h) + f(x−2h)) / 12h`, truncation error O(h⁴).
    FivePoint,
    /// Central differences from step `eps` shrinking by 1.4 per level, Richardson
    /// extrapolated; the table entry with the smallest error estimate wins.
    /// Start from a large step (0.1–0.2) so tiny gradients stay above the
    /// rounding floor.
    Ridders,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: Option<String>,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

fn eval<F>(model: &F, params: &ParamStore) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Tape) -> Result<Var, AutodiffError>,
{
    let mut tape = Tape::new(params);
    let loss = model(&mut tape)?;
    Ok(tape.value(loss).item())
}

/// Compares reverse-mode gradients of `model` against finite differences of
/// the same closure, over every scalar in `params`. The closure must be
/// deterministic (freeze dropout masks).
///
/// Relative error per entry is `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<F>(
    model: F,
    params: &mut ParamStore,
    eps: f64,
    stencil: Stencil,
) -> Result<GradCheckReport, AutodiffError>
where
    F: Fn(&mut Tape) -> Result<Var, AutodiffError>,
{
    let analytic = {
        let mut tape = Tape::new(params);
        let loss = model(&mut tape)?;
        let grads = tape.backward(loss)?;
        let mut dense: Vec<Vec<f64>> = params
            .iter()
            .map(|(_, p)| vec![0.0; p.value.numel()])
            .collect();
        for (idx, g) in grads.iter() {
            dense[idx].copy_from_slice(g.data());
        }
        dense
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: None,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for idx in 0..params.len() {
        for i in 0..params.entry(idx).value.numel() {
            let orig = params.entry(idx).value.data()[i];
            let at = |offset: f64, params: &mut ParamStore| -> Result<f64, AutodiffError> {
                params.entry_mut(idx).value.data_mut()[i] = orig + offset;
                let v = eval(&model, params);
                params.entry_mut(idx).value.data_mut()[i] = orig;
                v
            };
            let numeric = match stencil {
                Stencil::Central => (at(eps, params)? - at(-eps, params)?) / (2.0 * eps),
                Stencil::FivePoint => {
                    let (p2, p1) = (at(2.0 * eps, params)?, at(eps, params)?);
                    let (m1, m2) = (at(-eps, params)?, at(-2.0 * eps, params)?);
                    (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * eps)
                }
                Stencil::Ridders => {
                    ridders(|h| Ok((at(h, params)? - at(-h, params)?) / (2.0 * h)), eps)?
                }
            };
            let a = analytic[idx][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst_param.is_none() {
                report.max_rel_error = rel;
                report.worst_param = Some(params.name(idx).to_string());
                report.worst_index = i;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

fn ridders(
    mut central: impl FnMut(f64) -> Result<f64, AutodiffError>,
    h0: f64,
) -> Result<f64, AutodiffError> {
    // Central differences are even in h, so each column removes the next h²
    // term. The gentle 1.4 ratio keeps the smallest step near h0 / 20, above
    // where rounding dominates.
    const LEVELS: usize = 10;
    const CON: f64 = 1.4;
    let mut prev: Vec<f64> = Vec::with_capacity(LEVELS);
    let mut best = 0.0;
    let mut err = f64::INFINITY;
    let mut h = h0;
    for i in 0..LEVELS {
        let mut cur = Vec::with_capacity(i + 1);
        cur.push(central(h)?);
        let mut fac = CON * CON;
        for j in 1..=i {
            let v = (cur[j - 1] * fac - prev[j - 1]) / (fac - 1.0);
            cur.push(v);
            fac *= CON * CON;
            let e = (v - cur[j - 1]).abs().max((v - prev[j - 1]).abs());
            if e <= err {
                err = e;
                best = v;
            }
        }
        if i == 0 {
            best = cur[0];
        }
        prev = cur;
        h /= CON;
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn linear_store() -> ParamStore {
        let mut s = ParamStore::new();
        s.insert(
            "w",
            Tensor::matrix(3, 2, vec![0.5, -0.25, 1.0, 0.75, -1.5, 0.125]).unwrap(),
        );
        s.insert("b", Tensor::row(vec![0.1, -0.2]));
        s
    }

    fn linear_model(tape: &mut Tape) -> Result<Var, AutodiffError> {
        let x = tape.constant(Tensor::row(vec![1.0, -2.0, 0.5]));
        let w = tape.param("w")?;
        let b = tape.param("b")?;
        let y = tape.matmul(x, w)?;
        let y = tape.add(y, b)?;
        let probe = tape.constant(Tensor::row(vec![0.3, -0.7]));
        let z = tape.mul(y, probe)?;
        let ones = tape.constant(Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap());
        tape.matmul(z, ones)
    }

    #[test]
    fn affine_model_is_exact() {
        let mut store = linear_store();
        let r = grad_check(linear_model, &mut store, 1e-5, Stencil::Central).unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
        assert_eq!(r.checked, 8);
    }

    #[test]
    fn store_is_restored() {
        let mut store = linear_store();
        let before = store.clone();
        grad_check(linear_model, &mut store, 1e-3, Stencil::FivePoint).unwrap();
        assert_eq!(store, before);
    }
}
