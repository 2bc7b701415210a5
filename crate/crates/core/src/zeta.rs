//! Hurwitz zeta function by Euler–Maclaurin summation with an explicit
//! remainder bound.

use crate::{Error, Result};

// B_2, B_4, ..., B_24
const BERNOULLI: [f64; 12] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
    -236364091.0 / 2730.0,
];

const DIRECT_TERMS: u32 = 24;
const CORRECTIONS: usize = 10;

/// Value together with a guaranteed bound on the truncation error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounded {
    pub value: f64,
    pub error: f64,
}

/// `ζ(s, q) = Σ_{k≥0} (q+k)^{-s}` for real `s > 1`, `q > 0`.
///
/// The remainder after `p` correction terms is bounded by the magnitude of
/// the first omitted term (the derivatives of `x^{-s}` have alternating,
/// monotone signs for real `s`).
pub fn hurwitz(s: f64, q: f64) -> Result<Bounded> {
    if !(s > 1.0) {
        return Err(Error::Undefined(format!("ζ(s) diverges for s = {s} ≤ 1")));
    }
    if !(q > 0.0) {
        return Err(Error::Param(format!("Hurwitz shift must be positive, got {q}")));
    }
    let mut head = 0.0;
    for k in 0..DIRECT_TERMS {
        head += (q + k as f64).powf(-s);
    }
    let x = q + DIRECT_TERMS as f64;
    let mut tail = x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s);
    // Rising factorial s(s+1)...(s+2j-2) / (2j)!, times x^{-s-2j+1}.
    let mut rising = s;
    let mut fact = 2.0;
    let mut xpow = x.powf(-s - 1.0);
    let mut last = 0.0;
    for j in 1..=CORRECTIONS + 1 {
        let term = BERNOULLI[j - 1] / fact * rising * xpow;
        if j <= CORRECTIONS {
            tail += term;
        } else {
            last = term.abs();
        }
        let k = 2.0 * j as f64;
        rising *= (s + k - 1.0) * (s + k);
        fact *= (k + 1.0) * (k + 2.0);
        xpow /= x * x;
    }
    let value = head + tail;
    let rounding = 4.0 * f64::EPSILON * value.abs() * DIRECT_TERMS as f64;
    Ok(Bounded { value, error: last + rounding })
}

/// Riemann zeta `ζ(s)` for real `s > 1`.
pub fn riemann(s: f64) -> Result<Bounded> {
    hurwitz(s, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn known_values() {
        let z2 = riemann(2.0).unwrap();
        assert!((z2.value - PI * PI / 6.0).abs() < 1e-14);
        assert!(z2.error < 1e-12);
        let z4 = riemann(4.0).unwrap();
        assert!((z4.value - PI.powi(4) / 90.0).abs() < 1e-14);
        let z3 = riemann(3.0).unwrap();
        assert!((z3.value - 1.202_056_903_159_594_3).abs() < 1e-14);
    }

    #[test]
    fn near_pole() {
        // ζ(1 + h) = 1/h + γ + O(h)
        let h = 1e-3;
        let z = riemann(1.0 + h).unwrap();
        assert!((z.value - (1.0 / h + 0.577_215_664_901_532_9)).abs() < 1e-3);
    }

    #[test]
    fn shift_identity() {
        // ζ(s, q) = q^{-s} + ζ(s, q+1)
        for &s in &[1.5, 2.5, 7.0] {
            let a = hurwitz(s, 3.0).unwrap().value;
            let b = 3f64.powf(-s) + hurwitz(s, 4.0).unwrap().value;
            assert!((a - b).abs() < 1e-14 * a);
        }
    }

    #[test]
    fn divergent_rejected() {
        assert!(riemann(1.0).is_err());
        assert!(riemann(0.5).is_err());
    }
}
