//! Closed-form probabilities used as analytic columns and test oracles.
//!
//! Products and powers are evaluated in log space with `ln_1p`/`exp_m1`, so
//! quantities such as `1 - (1 - 4^-n)^(3^2n)` keep full relative precision
//! even when one side is close to 0 or 1. Every function here has absolute
//! error below 1e-12 for the argument ranges used in this crate.

use std::sync::OnceLock;

/// `4^-i`, exact in binary floating point.
#[inline]
pub fn pow4_neg(i: u32) -> f64 {
    (2f64).powi(-2 * i as i32)
}

/// Infinite tails `ln prod_{i >= from} (1 - 4^-i)` for `from < TAIL_TABLE`;
/// beyond that every factor is dropped anyway.
const TAIL_TABLE: usize = 72;

fn ln_tail(from: u32) -> f64 {
    static TABLE: OnceLock<[f64; TAIL_TABLE]> = OnceLock::new();
    let table = TABLE.get_or_init(|| std::array::from_fn(|i| ln_prod_direct(i as u32, u32::MAX)));
    table.get(from as usize).copied().unwrap_or(0.0)
}

/// `ln prod_{from <= i < to} (1 - 4^-i)`, with `to = None` meaning infinity.
/// Terms below 1e-40 are dropped; the dropped remainder is below 1e-40 too.
pub fn ln_prod_one_minus_pow4(from: u32, to: Option<u32>) -> f64 {
    match to {
        None if from > 0 => ln_tail(from),
        _ => ln_prod_direct(from, to.unwrap_or(u32::MAX)),
    }
}

fn ln_prod_direct(from: u32, end: u32) -> f64 {
    if from == 0 && end > 0 {
        // p_0 = 1: the factor (1 - 4^0) vanishes.
        return f64::NEG_INFINITY;
    }
    let mut acc = 0.0;
    let mut i = from;
    while i < end {
        let t = pow4_neg(i);
        if t < 1e-40 {
            break;
        }
        acc += (-t).ln_1p();
        i += 1;
    }
    acc
}

/// `prod_{i >= from} (1 - 4^-i)`.
pub fn prod_one_minus_pow4_from(from: u32) -> f64 {
    ln_prod_one_minus_pow4(from, None).exp()
}

/// `1 - prod_{i >= from} (1 - 4^-i)`, without cancellation.
pub fn one_minus_prod_one_minus_pow4_from(from: u32) -> f64 {
    -ln_prod_one_minus_pow4(from, None).exp_m1()
}

/// `sum_{i >= from} 4^-i = 4^-from * 4/3`.
pub fn tail_mass_pow4(from: u32) -> f64 {
    pow4_neg(from) * 4.0 / 3.0
}

/// `P(m(x) <= k) = prod_{i > k} (1 - 4^-i)`.
pub fn m_cdf(k: u32) -> f64 {
    prod_one_minus_pow4_from(k + 1)
}

/// `P(m(x) = k)`. Since `P(m <= k-1) = P(m <= k) (1 - 4^-k)`, the mass is
/// `P(m <= k) 4^-k` for `k >= 1`.
pub fn m_pmf(k: u32) -> f64 {
    if k == 0 {
        m_cdf(0)
    } else {
        m_cdf(k) * pow4_neg(k)
    }
}

/// Number of vertices of a full ternary tree of depth `k`.
pub fn ternary_size(k: u32) -> f64 {
    (3f64.powi(k as i32 + 1) - 1.0) / 2.0
}

/// `E|T_x| = sum_k P(m = k) (3^(k+1) - 1) / 2`. Terms decay like `(3/4)^k`;
/// the sum stops once the remaining mass is below 1e-16.
pub fn expected_ternary_size() -> f64 {
    static VALUE: OnceLock<f64> = OnceLock::new();
    *VALUE.get_or_init(expected_ternary_size_direct)
}

fn expected_ternary_size_direct() -> f64 {
    let mut acc = 0.0;
    for k in 0..400u32 {
        let term = m_pmf(k) * ternary_size(k);
        acc += term;
        // remainder <= term * sum_{j>=1} (3/4)^j = 3 term.
        if k > 8 && 3.0 * term < 1e-16 {
            break;
        }
    }
    acc
}

/// `1 - (1 - p)^trials`.
pub fn one_minus_pow_complement(p: f64, trials: f64) -> f64 {
    -(trials * (-p).ln_1p()).exp_m1()
}

/// Level-`i` probability of the canopy root law, `(2/3) 3^-i`.
pub fn canopy_root_level_pmf(i: u32) -> f64 {
    2.0 / 3.0 * 3f64.powi(-(i as i32))
}

/// `P(A)` under the canopy root law: the root is a level-0 leaf with
/// `m = 0`.
pub fn prob_type_zero_leaf_canopy_law() -> f64 {
    canopy_root_level_pmf(0) * m_pmf(0)
}

/// `P(A)` under the size-biased root law of the decorated canopy tree.
pub fn prob_type_zero_leaf_size_biased() -> f64 {
    let z = 1.0 / 3.0 + 2.0 / 3.0 * expected_ternary_size();
    2.0 / 3.0 * m_pmf(0) / z
}

/// Lower bound on `P(A'_n | A)` as stated: `1 - (1 - 4^-n)^(3^2n)`.
pub fn good_vertex_bound(n: u32) -> f64 {
    one_minus_pow_complement(pow4_neg(n), 9f64.powi(n as i32))
}

/// The weaker closed form `1 - exp(-(9/4)^n)`.
pub fn good_vertex_exp_bound(n: u32) -> f64 {
    -(-(2.25f64).powi(n as i32)).exp_m1()
}

/// Exact `P(A'_n | A)`: conditioned on `A`, the `n`-grandparent of the root
/// is one of the `3^2n` candidates and has `xi = 0`, so only `3^2n - 1`
/// independent trials remain.
pub fn good_vertex_exact(n: u32) -> f64 {
    one_minus_pow_complement(pow4_neg(n), 9f64.powi(n as i32) - 1.0)
}
