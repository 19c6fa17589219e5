use super::ParamSet;

/// Central-difference gradient `(f(θ+h) − f(θ−h)) / 2h` for every scalar in
/// `params`. Used as an independent check on [`Tape::backward`](super::Tape::backward).
pub fn finite_difference_gradient<F>(f: F, params: &ParamSet, h: f64) -> ParamSet
where
    F: Fn(&ParamSet) -> f64,
{
    let mut probe = params.clone();
    let mut grads = params.zeros_like();
    let names: Vec<String> = params.names().map(str::to_owned).collect();
    for name in &names {
        let len = params.get(name).map_or(0, |m| m.len());
        for i in 0..len {
            let original = params.get(name).unwrap().as_slice()[i];
            set(&mut probe, name, i, original + h);
            let up = f(&probe);
            set(&mut probe, name, i, original - h);
            let down = f(&probe);
            set(&mut probe, name, i, original);
            grads.get_mut(name).unwrap().as_mut_slice()[i] = (up - down) / (2.0 * h);
        }
    }
    grads
}

fn set(params: &mut ParamSet, name: &str, i: usize, v: f64) {
    params.get_mut(name).unwrap().as_mut_slice()[i] = v;
}

/// `|a − b| / max(1, |a|)`, the error measure used for gradient checks.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

/// Worst [`relative_error`] per parameter name. NaN counts as infinitely bad.
pub fn worst_relative_errors(analytic: &ParamSet, numeric: &ParamSet) -> Vec<(String, f64)> {
    analytic
        .iter()
        .map(|(name, a)| {
            let worst = numeric.get(name).map_or(f64::INFINITY, |n| {
                a.as_slice()
                    .iter()
                    .zip(n.as_slice())
                    .map(|(&x, &y)| relative_error(x, y))
                    .map(|e| if e.is_nan() { f64::INFINITY } else { e })
                    .fold(0.0, f64::max)
            });
            (name.to_owned(), worst)
        })
        .collect()
}
