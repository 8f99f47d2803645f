//! Analytic estimates of full-sibling-code-set sizes.

use crate::error::{Error, Result};

/// Round half-up, subtract one, clamp at zero; `f < 1` gives zero.
fn ns_from_f(f: f64) -> u16 {
    if f < 1.0 {
        return 0;
    }
    ((f + 0.5).floor() as i64 - 1).max(0) as u16
}

/// Expected sibling count of a level-`l` node in a hash tree of depth `d`
/// and branching `2^c`, given leaf occupancy probability `omega`.
pub fn estimate_fscs_hash(omega: f64, c: u32, d: u32, l: u32) -> Result<u16> {
    if !(omega > 0.0 && omega <= 1.0) {
        return Err(Error::OmegaOutOfRange(omega));
    }
    if l > d {
        return Err(Error::LevelOutOfRange(l));
    }
    // (1-omega)^(2^((d-l)c)) via exp/ln to avoid overflowing the exponent
    let exponent = 2f64.powi(((d - l) * c) as i32);
    let gamma = if omega >= 1.0 { 1.0 } else { 1.0 - (exponent * (1.0 - omega).ln()).exp() };
    let f = 2f64.powi(c as i32) * gamma;
    Ok(ns_from_f(f).min(((1u32 << c) - 1) as u16))
}

/// Sibling-count estimate for an alphabetical code of length `l`,
/// `f(l) = 26 / l^2`.
pub fn estimate_fscs_alph(l: u32) -> Result<u16> {
    if l < 1 {
        return Err(Error::LevelOutOfRange(l));
    }
    Ok(ns_from_f(26.0 / (l as f64 * l as f64)))
}

/// Keywords per unit of the nominal hash space `(2^c)^(d+1) - (2^c)^d`.
pub fn omega_nominal(n_keywords: usize, c: u32, d: u32) -> f64 {
    let s = 2f64.powi((c * d) as i32);
    n_keywords as f64 / (s * 2f64.powi(c as i32) - s)
}

/// Probability that a given leaf of a `space`-leaf hash space is occupied
/// after hashing `n_keywords` keywords uniformly.
pub fn omega_occupancy(n_keywords: usize, space: u64) -> f64 {
    let s = space.max(1) as f64;
    let w = -((n_keywords as f64) * (-1.0 / s).ln_1p()).exp_m1();
    w.clamp(f64::MIN_POSITIVE, 1.0)
}
