//! Log-log slope fits.

/// A fitted `ln y = intercept + slope · ln t` with a 95% band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// False when some point had zero or undefined standard error and the
    /// fit fell back to unweighted least squares.
    pub weighted: bool,
}

const Z95: f64 = 1.959_963_984_540_054;

/// Least squares on `(ln t, ln y)` weighted by inverse squared relative
/// standard error.
///
/// The weighted band uses the known variances. If any standard error is
/// zero or undefined, every point gets unit weight and the band comes from
/// the residuals.
pub fn fit_loglog(t: &[f64], y: &[f64], stderr: &[f64]) -> SlopeFit {
    let xs: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let weighted = stderr.iter().zip(y).all(|(s, v)| *s > 0.0 && s.is_finite() && *v > 0.0);
    let w: Vec<f64> = if weighted { stderr.iter().zip(y).map(|(s, v)| (v / s).powi(2)).collect() } else { vec![1.0; xs.len()] };
    let sw: f64 = w.iter().sum();
    let xm = xs.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let ym = ys.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(&w).map(|(x, w)| w * (x - xm).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).zip(&w).map(|((x, y), w)| w * (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let stderr = if weighted {
        (1.0 / sxx).sqrt()
    } else if xs.len() > 2 {
        let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (rss / (xs.len() - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    SlopeFit { slope, intercept, stderr, ci_lo: slope - Z95 * stderr, ci_hi: slope + Z95 * stderr, weighted }
}
