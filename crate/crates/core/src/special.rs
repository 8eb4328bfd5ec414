//! Special functions behind the Rice/Rayleigh fading statistics.

use std::f64::consts::PI;

/// Exponentially scaled modified Bessel function of the first kind,
/// `I_nu(x) e^{-x}`, for `nu` in {0, 1} and `x >= 0`.
fn bessel_ie(nu: u32, x: f64) -> f64 {
    assert!(x >= 0.0, "bessel argument must be non-negative");
    if x <= 50.0 {
        let q = 0.25 * x * x;
        let mut term = if nu == 0 { 1.0 } else { 0.5 * x };
        let mut sum = term;
        let mut k = 1.0;
        loop {
            term *= q / (k * (k + nu as f64));
            sum += term;
            if term <= sum * 1e-17 {
                break;
            }
            k += 1.0;
        }
        sum * (-x).exp()
    } else {
        let mu = 4.0 * (nu * nu) as f64;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..12 {
            let odd = (2 * k - 1) as f64;
            term *= -(mu - odd * odd) / (k as f64 * 8.0 * x);
            sum += term;
        }
        sum / (2.0 * PI * x).sqrt()
    }
}

pub fn bessel_i0e(x: f64) -> f64 {
    bessel_ie(0, x)
}

pub fn bessel_i1e(x: f64) -> f64 {
    bessel_ie(1, x)
}

/// Marcum Q-function of order one, `Q_1(a, b)`, evaluated as a Poisson
/// mixture of Poisson lower tails (noncentral chi-square survival with two
/// degrees of freedom). Accurate in both tails.
pub fn marcum_q1(a: f64, b: f64) -> f64 {
    assert!(a >= 0.0 && b >= 0.0, "marcum_q1 needs non-negative arguments");
    let lambda = 0.5 * a * a;
    let y = 0.5 * b * b;
    if y == 0.0 {
        return 1.0;
    }
    if lambda == 0.0 {
        return (-y).exp();
    }
    let ln_lambda = lambda.ln();
    let ln_y = y.ln();
    let j_min = (lambda + 12.0 * lambda.sqrt() + 40.0).ceil() as usize;
    let mut ln_fact = 0.0;
    let mut pois_cdf_y = 0.0;
    let mut q = 0.0;
    // Poisson(lambda) mass beyond j_min is below e^-72
    for j in 0..=j_min {
        if j > 0 {
            ln_fact += (j as f64).ln();
        }
        let jf = j as f64;
        pois_cdf_y += (-y + jf * ln_y - ln_fact).exp();
        let w = (-lambda + jf * ln_lambda - ln_fact).exp();
        q += w * pois_cdf_y.min(1.0);
    }
    q.clamp(0.0, 1.0)
}

/// Survival `P(zeta > x)` of a Rice variable with `Omega = 1` and linear
/// shape factor `k`.
pub fn rice_survival(x: f64, k: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    marcum_q1((2.0 * k).sqrt(), x * (2.0 * (k + 1.0)).sqrt())
}

pub fn rice_cdf(x: f64, k: f64) -> f64 {
    1.0 - rice_survival(x, k)
}

/// Rice density with `Omega = 1`:
/// `2(K+1) y exp(-(K+1) y^2 - K) I_0(2 sqrt(K(K+1)) y)`.
pub fn rice_pdf(y: f64, k: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let z = 2.0 * (k * (k + 1.0)).sqrt() * y;
    let gap = (k + 1.0).sqrt() * y - k.sqrt();
    2.0 * (k + 1.0) * y * (-gap * gap).exp() * bessel_i0e(z)
}

/// Mean of the Rice variable with `Omega = 1` and shape `k` via the Laguerre
/// polynomial `L_{1/2}`.
pub fn rice_mean(k: f64) -> f64 {
    let sigma = (0.5 / (k + 1.0)).sqrt();
    let h = 0.5 * k;
    let laguerre = (1.0 + k) * bessel_i0e(h) + k * bessel_i1e(h);
    sigma * (PI / 2.0).sqrt() * laguerre
}

/// Rayleigh survival with unit scale: `exp(-x^2 / 2)`.
pub fn rayleigh_survival(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        (-0.5 * x * x).exp()
    }
}

pub fn rayleigh_cdf(x: f64) -> f64 {
    1.0 - rayleigh_survival(x)
}

pub fn rayleigh_pdf(y: f64) -> f64 {
    if y <= 0.0 {
        0.0
    } else {
        y * (-0.5 * y * y).exp()
    }
}
