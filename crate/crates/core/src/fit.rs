//! Small regression helpers shared by the rigid reference and the sweep metrics.

/// Least-squares line through `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination; 1 for a perfect fit.
    pub r2: f64,
}

/// Ordinary least squares; `None` with fewer than two distinct abscissae.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = x[..n].iter().sum::<f64>() / nf;
    let my = y[..n].iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (dx, dy) = (x[i] - mx, y[i] - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LineFit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

/// Largest `|y|` between consecutive sign changes of `y`.
///
/// The first and last partial half-cycles are dropped when `complete_only` is set,
/// since their maxima are cut off by the sampling window rather than the dynamics.
pub fn half_cycle_peaks(t: &[f64], y: &[f64], complete_only: bool) -> Vec<(f64, f64)> {
    let mut peaks = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    let mut sign = 0.0;
    let mut segments = 0usize;
    for (&ti, &yi) in t.iter().zip(y) {
        let s = if yi > 0.0 {
            1.0
        } else if yi < 0.0 {
            -1.0
        } else {
            0.0
        };
        if s != 0.0 && sign != 0.0 && s != sign {
            if let Some(p) = best.take() {
                if !complete_only || segments > 0 {
                    peaks.push(p);
                }
            }
            segments += 1;
        }
        if s != 0.0 {
            sign = s;
        }
        if best.is_none_or(|(_, m)| yi.abs() > m) {
            best = Some((ti, yi.abs()));
        }
    }
    if !complete_only {
        peaks.extend(best);
    }
    peaks
}

/// Exponential decay rate `r` from a fit of `log y = c - r t` over positive samples.
pub fn log_decay_rate(points: &[(f64, f64)]) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|(_, v)| *v > 0.0)
        .map(|&(t, v)| (t, v.ln()))
        .unzip();
    linear_fit(&x, &y).map(|f| -f.slope)
}
