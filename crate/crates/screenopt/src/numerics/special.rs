//! Special functions and distribution quantiles: Lanczos log-gamma,
//! regularized incomplete beta via Lentz's continued fraction, Student-t and
//! F CDFs/quantiles, and the chi mean factor E√(χ²_g/g).
//!
//! Implemented in-module rather than pulled from a stats crate so the
//! constants feeding the design criteria are bit-stable across platforms.

use crate::error::Error;

/// ln Γ(z) for z > 0, Lanczos approximation (Numerical Recipes coefficients).
pub fn ln_gamma(z: f64) -> f64 {
    assert!(z > 0.0, "ln_gamma requires z > 0");
    const C: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let mut sum = 1.000000000190015;
    for (i, c) in C.iter().enumerate() {
        sum += c / (z + i as f64 + 1.0);
    }
    let tmp = z + 5.5;
    let tmp = (z + 0.5) * tmp.ln() - tmp;
    tmp + (2.5066282746310005 * sum / z).ln()
}

/// Regularized incomplete beta I_x(a, b), Lentz's continued fraction.
pub fn inc_beta(x: f64, a: f64, b: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "inc_beta requires a, b > 0");
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    // symmetry for faster convergence
    if x > (a + 1.0) / (a + b + 2.0) {
        return 1.0 - inc_beta(1.0 - x, b, a);
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b));
    let front = ln_front.exp();

    const TINY: f64 = 1e-30;
    const EPS: f64 = 1e-15;
    let mut f = 1.0;
    let mut c = 1.0;
    let mut d = 0.0;
    let step = |num: f64, c: &mut f64, d: &mut f64| -> f64 {
        *d = 1.0 + num * *d;
        if d.abs() < TINY {
            *d = TINY;
        }
        *d = 1.0 / *d;
        *c = 1.0 + num / *c;
        if c.abs() < TINY {
            *c = TINY;
        }
        *c * *d
    };
    for m in 0..300 {
        let mf = m as f64;
        let odd = -(a + mf) * (a + b + mf) * x / ((a + 2.0 * mf) * (a + 2.0 * mf + 1.0));
        let delta = step(odd, &mut c, &mut d);
        f *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
        let even = (mf + 1.0) * (b - mf - 1.0) * x / ((a + 2.0 * mf + 1.0) * (a + 2.0 * mf + 2.0));
        let delta = step(even, &mut c, &mut d);
        f *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    (front / (f * a)).clamp(0.0, 1.0)
}

/// Inverse of I_x(a, b) in x for p in (0, 1): bisection with Newton polish.
pub fn inv_inc_beta(p: f64, a: f64, b: f64) -> f64 {
    assert!((0.0..=1.0).contains(&p));
    if p == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut x = 0.5;
    for _ in 0..80 {
        if inc_beta(x, a, b) < p {
            lo = x;
        } else {
            hi = x;
        }
        x = 0.5 * (lo + hi);
    }
    // Newton polish: d/dx I_x = x^(a-1) (1-x)^(b-1) / B(a,b)
    let ln_b = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    for _ in 0..5 {
        let fx = inc_beta(x, a, b) - p;
        if x <= 0.0 || x >= 1.0 {
            break;
        }
        let pdf = ((a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_b).exp();
        if pdf <= 0.0 || !pdf.is_finite() {
            break;
        }
        let next = x - fx / pdf;
        if next > lo && next < hi {
            x = next;
        }
    }
    x
}

/// CDF of Student's t with `g` degrees of freedom.
pub fn t_cdf(t: f64, g: usize) -> f64 {
    let gf = g as f64;
    let x = gf / (gf + t * t);
    let tail = 0.5 * inc_beta(x, gf / 2.0, 0.5);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Two-sided t p-value for an observed statistic.
pub fn t_p_value(t: f64, g: usize) -> f64 {
    let gf = g as f64;
    let x = gf / (gf + t * t);
    inc_beta(x, gf / 2.0, 0.5).clamp(0.0, 1.0)
}

/// Upper-α/2 Student-t quantile `t_{α/2, g}` for a two-sided level α.
pub fn t_quantile(alpha_two_sided: f64, g: usize) -> Result<f64, Error> {
    if !(0.0 < alpha_two_sided && alpha_two_sided < 1.0) {
        return Err(Error::InvalidProbability(alpha_two_sided));
    }
    if g == 0 {
        return Err(Error::InvalidDegreesOfFreedom(0));
    }
    let gf = g as f64;
    // P(|T| > t) = I_x(g/2, 1/2) with x = g/(g + t^2); solve I_x = alpha
    let x = inv_inc_beta(alpha_two_sided, gf / 2.0, 0.5);
    Ok((gf * (1.0 - x) / x).sqrt())
}

/// CDF of the F distribution with (d1, d2) degrees of freedom.
pub fn f_cdf(f: f64, d1: usize, d2: usize) -> f64 {
    if f <= 0.0 {
        return 0.0;
    }
    let (a, b) = (d1 as f64, d2 as f64);
    inc_beta(a * f / (a * f + b), a / 2.0, b / 2.0)
}

/// Lower-p F quantile.
pub fn f_quantile(p: f64, d1: usize, d2: usize) -> Result<f64, Error> {
    if !(0.0 < p && p < 1.0) {
        return Err(Error::InvalidProbability(p));
    }
    if d1 == 0 || d2 == 0 {
        return Err(Error::InvalidDegreesOfFreedom(0));
    }
    let (a, b) = (d1 as f64, d2 as f64);
    let w = inv_inc_beta(p, a / 2.0, b / 2.0);
    Ok(b * w / (a * (1.0 - w)))
}

/// `(1/σ)E(√σ̂²) = √(2/g)·Γ((g+1)/2)/Γ(g/2)`, the mean of √(χ²_g/g).
///
/// Strictly increasing in g and always below 1.
pub fn chi_mean_sqrt(g: usize) -> Result<f64, Error> {
    if g == 0 {
        return Err(Error::InvalidDegreesOfFreedom(0));
    }
    let gf = g as f64;
    Ok((0.5 * (2.0 / gf).ln() + ln_gamma((gf + 1.0) / 2.0) - ln_gamma(gf / 2.0)).exp())
}
