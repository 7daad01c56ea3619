//! Standard-normal primitives and Gaussian smoothing of piecewise-linear functions.
//!
//! The smoothing kernels here are exact for piecewise-linear integrands: each
//! grid segment contributes a closed-form `Phi`/`phi` expression, so no
//! quadrature error is incurred beyond the piecewise-linear representation of
//! the input itself.

use statrs::function::erf::{erf, erf_inv};

const FRAC_1_SQRT_2PI: f64 = 0.39894228040143267794;
const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF.
pub fn cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / SQRT_2))
}

/// Standard normal quantile function.
pub fn quantile(p: f64) -> f64 {
    assert!((0.0..=1.0).contains(&p), "quantile argument out of [0,1]");
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let mut x = SQRT_2 * erf_inv(2.0 * p - 1.0);
    // Newton polish: erf_inv alone is only good to ~1e-9
    for _ in 0..2 {
        let d = pdf(x);
        if d < 1e-300 {
            break;
        }
        x -= (cdf(x) - p) / d;
    }
    x
}

/// Kernel support radius in standard deviations. Gaussian mass beyond
/// 8 sigma is below 1e-15, negligible at f64 working precision.
pub const TAIL_SIGMAS: f64 = 8.0;

/// Antiderivative of the standard normal CDF.
fn big_g(u: f64) -> f64 {
    u * cdf(u) + pdf(u)
}

/// Convolve a piecewise-linear function (nodes `grid`/`vals`, constant
/// extension beyond the ends) with the centred Gaussian density of standard
/// deviation `s`, evaluated at `out_grid`.
///
/// Stieltjes form: the result is vals[0] + sum over segments of
/// dv (G(b) - G(a)) / (b - a) with a = (x-q)/s, b = (x-p)/s and
/// G(u) = u Phi(u) + phi(u); exact for piecewise-linear input. Segments
/// much thinner than `s` collapse to the jump formula dv Phi((x-mid)/s),
/// which avoids the cancellation the exact expression suffers there.
pub fn smooth_eval(grid: &[f64], vals: &[f64], s: f64, out_grid: &[f64]) -> Vec<f64> {
    assert_eq!(grid.len(), vals.len());
    assert!(grid.len() >= 2);
    assert!(s >= 0.0);
    if s == 0.0 {
        return out_grid.iter().map(|&x| interp(grid, vals, x)).collect();
    }
    let n = grid.len();
    let radius = TAIL_SIGMAS * s;
    out_grid
        .iter()
        .map(|&x| {
            // segments fully below the kernel window contribute their whole
            // increment; the sum over them telescopes to vals[lo] - vals[0]
            let lo = partition_point(grid, x - radius).saturating_sub(1);
            let hi = partition_point(grid, x + radius).min(n - 1);
            let mut acc = vals[lo];
            for j in lo..hi {
                let (p, q) = (grid[j], grid[j + 1]);
                let dv = vals[j + 1] - vals[j];
                if dv == 0.0 {
                    continue;
                }
                let a = (x - q) / s;
                let b = (x - p) / s;
                if b - a < 1e-6 {
                    acc += dv * cdf((x - 0.5 * (p + q)) / s);
                } else {
                    acc += dv * (big_g(b) - big_g(a)) / (b - a);
                }
            }
            acc
        })
        .collect()
}

/// Fast path of [`smooth_eval`] for a uniform grid, evaluated on the same
/// grid, with `Phi`/`phi` lag tables shared across all output points.
pub fn smooth_uniform(h: f64, vals: &[f64], s: f64) -> Vec<f64> {
    let n = vals.len();
    assert!(n >= 2);
    assert!(h > 0.0 && s >= 0.0);
    if s == 0.0 || s < 1e-14 * h {
        return vals.to_vec();
    }
    // lag tables: Phi(k h / s), phi(k h / s) for |k| <= kmax
    let kmax = ((TAIL_SIGMAS * s / h).ceil() as usize + 1).min(4 * n);
    let mut phi_t = vec![0.0; kmax + 1];
    let mut cdf_t = vec![0.0; kmax + 1];
    for k in 0..=kmax {
        let u = k as f64 * h / s;
        phi_t[k] = pdf(u);
        cdf_t[k] = cdf(u);
    }
    let phi_at = |k: i64| -> f64 {
        let a = k.unsigned_abs() as usize;
        if a > kmax {
            0.0
        } else {
            phi_t[a]
        }
    };
    let cdf_at = |k: i64| -> f64 {
        let a = k.unsigned_abs() as usize;
        if a > kmax {
            if k > 0 {
                1.0
            } else {
                0.0
            }
        } else if k >= 0 {
            cdf_t[a]
        } else {
            1.0 - cdf_t[a]
        }
    };
    let mut out = vec![0.0; n];
    for i in 0..n {
        let ii = i as i64;
        let mut acc = vals[0] * (1.0 - cdf_at(ii)) + vals[n - 1] * cdf_at(ii - (n as i64 - 1));
        let j_lo = (ii - kmax as i64 - 1).max(0) as usize;
        let j_hi = ((ii + kmax as i64).max(0) as usize).min(n - 2);
        for j in j_lo..=j_hi.max(j_lo) {
            if j + 1 >= n {
                break;
            }
            let k = ii - j as i64; // (x - p)/s = k h / s
            let d = (vals[j + 1] - vals[j]) / h;
            let dphi = cdf_at(k) - cdf_at(k - 1);
            acc += (vals[j] + d * (k as f64) * h) * dphi - s * d * (phi_at(k - 1) - phi_at(k));
        }
        out[i] = acc;
    }
    out
}

/// Linear interpolation with constant extension.
pub fn interp(grid: &[f64], vals: &[f64], x: f64) -> f64 {
    let n = grid.len();
    if x <= grid[0] {
        return vals[0];
    }
    if x >= grid[n - 1] {
        return vals[n - 1];
    }
    let i = partition_point(grid, x);
    // grid[i-1] < x <= grid[i] after this
    let i = i.clamp(1, n - 1);
    let (x0, x1) = (grid[i - 1], grid[i]);
    let t = (x - x0) / (x1 - x0);
    vals[i - 1] + t * (vals[i] - vals[i - 1])
}

/// Index of the first grid element >= x (grid sorted ascending).
pub fn partition_point(grid: &[f64], x: f64) -> usize {
    grid.partition_point(|&g| g < x)
}
