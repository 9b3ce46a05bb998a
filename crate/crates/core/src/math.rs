//! Thin wrappers over `libm` so the crate stays `no_std`.

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn expm1(x: f64) -> f64 {
    libm::expm1(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn powf(x: f64, e: f64) -> f64 {
    libm::pow(x, e)
}

#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

/// `|x|^e` for `x` of any sign, with a multiply chain for small integer exponents.
#[inline]
pub fn abs_pow(x: f64, e: f64) -> f64 {
    let a = x.abs();
    if e == 0.0 {
        return 1.0;
    }
    if e == 1.0 {
        return a;
    }
    if e == 2.0 {
        return a * a;
    }
    if e == 3.0 {
        return a * a * a;
    }
    if e == 0.5 {
        return sqrt(a);
    }
    powf(a, e)
}

/// `(1 - e^{-x}) / x`, continuous through `x = 0`.
#[inline]
pub fn phi1(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0 - 0.5 * x
    } else {
        -expm1(-x) / x
    }
}

/// Converts a time in seconds to an integer number of `dt` ticks, rejecting
/// values that are not (numerically) on the grid.
pub fn to_ticks(t: f64, dt: f64) -> Option<i64> {
    let r = t / dt;
    let k = round(r);
    if (r - k).abs() <= 1e-6 {
        Some(k as i64)
    } else {
        None
    }
}

pub const PI: f64 = core::f64::consts::PI;
