//! Central finite-difference checks for hand-written gradients.

/// Largest relative error seen over the checked coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradReport {
    pub checked: usize,
    pub max_rel_err: f64,
}

/// `|a - n| / max(|a|, |n|)`; the plain difference when both are below
/// `1e-8`, where a relative measure is just noise.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    let diff = (analytic - numeric).abs();
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

/// Compares `analytic[i]` with `(f(i, +h) - f(i, -h)) / 2h`, where
/// `f(i, delta)` evaluates the loss with coordinate `i` shifted by `delta`.
/// `f` returns `None` when the shift crosses a non-differentiable point;
/// the whole check is then void and `None` comes back.
pub fn check_gradient(
    analytic: &[f64],
    h: f64,
    mut f: impl FnMut(usize, f64) -> Option<f64>,
) -> Option<GradReport> {
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let up = f(i, h)?;
        let down = f(i, -h)?;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(a, numeric));
    }
    Some(GradReport {
        checked: analytic.len(),
        max_rel_err: worst,
    })
}
