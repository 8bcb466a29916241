//! Problem identity: the flux exponent, the far-field states and the
//! Rankine-Hugoniot shock speed, plus the power-law flux and its divided
//! differences.

use serde::Serialize;

use crate::error::{Error, Result};

/// Lower end of the exponent range covered by the contraction theorem.
pub const P_MIN: f64 = 2.0;
/// Upper end of the exponent range covered by the contraction theorem.
pub const P_MAX: f64 = 4.0;

/// Largest integer exponent evaluated by repeated multiplication.
const MAX_INT_EXP: f64 = 16.0;

/// Below this ratio |U - v| / v the divided-difference derivatives switch to
/// their binomial series.
const SERIES_RADIUS: f64 = 0.05;

/// `(p, u_minus, u_plus)` plus the derived shock speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShockParams {
    pub p: f64,
    pub u_minus: f64,
    pub u_plus: f64,
    pub s: f64,
    #[serde(skip)]
    int_exp: Option<u32>,
}

/// Flux value and its first three derivatives at one state.
#[derive(Debug, Clone, Copy)]
pub struct FluxDerivs {
    pub f: f64,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
}

/// Divided difference `D(U, v) = (f(U) - f(v)) / (U - v)` and its first two
/// derivatives in `U` with `v` held fixed.
#[derive(Debug, Clone, Copy)]
pub struct DividedDifference {
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
}

fn integer_exponent(p: f64) -> Option<u32> {
    if p.fract() == 0.0 && p >= 1.0 && p <= MAX_INT_EXP {
        Some(p as u32)
    } else {
        None
    }
}

impl ShockParams {
    /// Parameters inside the theorem's hypotheses: `2 <= p <= 4`,
    /// `u_plus < u_minus`, and `u_plus > 0` unless `p = 2`.
    pub fn new(p: f64, u_minus: f64, u_plus: f64) -> Result<Self> {
        if !(P_MIN..=P_MAX).contains(&p) {
            return Err(Error::InvalidParams(format!(
                "exponent p = {p} outside [{P_MIN}, {P_MAX}]"
            )));
        }
        Self::exploratory(p, u_minus, u_plus)
    }

    /// Like [`ShockParams::new`] but accepts any convex exponent `p > 1`.
    /// Used by the certifier to probe parameters outside the theorem.
    pub fn exploratory(p: f64, u_minus: f64, u_plus: f64) -> Result<Self> {
        if !(p.is_finite() && u_minus.is_finite() && u_plus.is_finite()) {
            return Err(Error::InvalidParams("non-finite parameter".into()));
        }
        if p <= 1.0 {
            return Err(Error::InvalidParams(format!(
                "exponent p = {p} gives a non-convex flux"
            )));
        }
        if u_plus == u_minus {
            return Err(Error::DegenerateStates(u_plus));
        }
        if u_plus > u_minus {
            return Err(Error::InvalidParams(format!(
                "entropy condition requires u_plus < u_minus (got u_plus = {u_plus}, u_minus = {u_minus})"
            )));
        }
        if p != 2.0 && u_plus <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "positivity hypothesis 0 < u_plus < u_minus is required for p != 2 (got u_plus = {u_plus})"
            )));
        }
        let s = shock_speed(p, u_minus, u_plus)?;
        Ok(Self {
            p,
            u_minus,
            u_plus,
            s,
            int_exp: integer_exponent(p),
        })
    }

    /// Whether `p` lies in the range covered by the contraction theorem.
    pub fn in_hypotheses(&self) -> bool {
        (P_MIN..=P_MAX).contains(&self.p)
    }

    /// Shock strength `u_minus - u_plus`.
    pub fn width(&self) -> f64 {
        self.u_minus - self.u_plus
    }

    pub fn is_integer_exponent(&self) -> bool {
        self.int_exp.is_some()
    }

    /// `u^p`, failing when a non-integer exponent meets a non-positive base.
    pub fn flux(&self, u: f64) -> Result<f64> {
        if self.int_exp.is_none() && u <= 0.0 {
            return Err(Error::NonPositiveBase { base: u, p: self.p });
        }
        Ok(self.flux_unchecked(u))
    }

    /// `u^p` without the positivity guard.
    #[inline]
    pub fn flux_unchecked(&self, u: f64) -> f64 {
        match self.int_exp {
            Some(n) => powi(u, n),
            None => (self.p * u.ln()).exp(),
        }
    }

    /// `(f(u), f'(u))` from one power evaluation, without the positivity guard.
    #[inline]
    pub fn flux_pair(&self, u: f64) -> (f64, f64) {
        let q = match self.int_exp {
            Some(n) => powi(u, n - 1),
            None => ((self.p - 1.0) * u.ln()).exp(),
        };
        (q * u, self.p * q)
    }

    /// `f'(u) = p u^(p-1)` without the positivity guard.
    #[inline]
    pub fn flux_prime(&self, u: f64) -> f64 {
        self.flux_derivative(u, 1)
    }

    /// k-th derivative `p (p-1) ... (p-k+1) u^(p-k)`.
    pub fn flux_derivative(&self, u: f64, k: u32) -> f64 {
        let mut coeff = 1.0;
        for j in 0..k {
            coeff *= self.p - j as f64;
        }
        if coeff == 0.0 {
            return 0.0;
        }
        match self.int_exp {
            Some(n) => coeff * powi(u, n - k),
            None => coeff * (u.ln() * (self.p - k as f64)).exp(),
        }
    }

    /// `f, f', f'', f'''` sharing a single power evaluation.
    pub fn flux_derivs(&self, u: f64) -> FluxDerivs {
        let p = self.p;
        let c1 = p;
        let c2 = p * (p - 1.0);
        let c3 = c2 * (p - 2.0);
        match self.int_exp {
            Some(n) => {
                let pw = |k: u32| if k <= n { powi(u, n - k) } else { 0.0 };
                FluxDerivs {
                    f: pw(0),
                    f1: c1 * pw(1),
                    f2: c2 * pw(2),
                    f3: if c3 == 0.0 { 0.0 } else { c3 * pw(3) },
                }
            }
            None => {
                let base = ((p - 3.0) * u.ln()).exp();
                FluxDerivs {
                    f: base * u * u * u,
                    f1: c1 * base * u * u,
                    f2: c2 * base * u,
                    f3: c3 * base,
                }
            }
        }
    }

    /// Divided difference `(f(a) - f(b)) / (a - b)`, evaluated without
    /// cancellation; equals `f'(a)` when `a == b`.
    pub fn divided_difference(&self, a: f64, b: f64) -> f64 {
        match self.int_exp {
            Some(n) => {
                // Ordered so the result is symmetric in its arguments.
                let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
                // sum_j hi^(n-1-j) lo^j
                let mut acc = 1.0;
                let mut lo_k = 1.0;
                for _ in 1..n {
                    lo_k *= lo;
                    acc = acc * hi + lo_k;
                }
                acc
            }
            None => {
                let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
                let r = (hi - lo) / lo;
                let scale = ((self.p - 1.0) * lo.ln()).exp();
                if r == 0.0 {
                    self.p * scale
                } else {
                    scale * (self.p * r.ln_1p()).exp_m1() / r
                }
            }
        }
    }

    /// `D(U, v)` and its first two `U`-derivatives.
    pub fn divided_difference_derivs(&self, u: f64, v: f64) -> DividedDifference {
        match self.int_exp {
            Some(n) => poly_divided_difference(n, u, v),
            None => {
                let r = (u - v) / v;
                if r.abs() < SERIES_RADIUS {
                    self.series_divided_difference(v, r)
                } else {
                    let d0 = self.divided_difference(u, v);
                    let fd = self.flux_derivs(u);
                    let e = u - v;
                    let d1 = (fd.f1 - d0) / e;
                    let d2 = (fd.f2 - 2.0 * d1) / e;
                    DividedDifference { d0, d1, d2 }
                }
            }
        }
    }

    fn series_divided_difference(&self, v: f64, r: f64) -> DividedDifference {
        let p = self.p;
        // q0 = sum_{k>=1} C(p,k) r^(k-1), q1 and q2 its first two r-derivatives.
        let mut binom = p;
        let (mut q0, mut q1, mut q2) = (0.0, 0.0, 0.0);
        // r^(k-1), r^(k-2), r^(k-3)
        let (mut r1, mut r2, mut r3) = (1.0, 0.0, 0.0);
        for k in 1..96u32 {
            let kf = k as f64;
            if k > 1 {
                binom *= (p - kf + 1.0) / kf;
                r3 = r2;
                r2 = r1;
                r1 *= r;
            }
            let t0 = binom * r1;
            let t1 = if k >= 2 { binom * (kf - 1.0) * r2 } else { 0.0 };
            let t2 = if k >= 3 { binom * (kf - 1.0) * (kf - 2.0) * r3 } else { 0.0 };
            q0 += t0;
            q1 += t1;
            q2 += t2;
            if k > 4
                && t0.abs() <= 1e-18 * q0.abs()
                && t1.abs() <= 1e-18 * q1.abs()
                && t2.abs() <= 1e-18 * q2.abs()
            {
                break;
            }
        }
        let lv = v.ln();
        DividedDifference {
            d0: ((p - 1.0) * lv).exp() * q0,
            d1: ((p - 2.0) * lv).exp() * q1,
            d2: ((p - 3.0) * lv).exp() * q2,
        }
    }
}

/// `sum_j u^j v^(n-1-j)` and its first two `u`-derivatives by Horner's rule.
fn poly_divided_difference(n: u32, u: f64, v: f64) -> DividedDifference {
    let (mut p0, mut p1, mut p2) = (1.0, 0.0, 0.0);
    let mut v_k = 1.0;
    for _ in 1..n {
        v_k *= v;
        p2 = p2 * u + p1;
        p1 = p1 * u + p0;
        p0 = p0 * u + v_k;
    }
    DividedDifference {
        d0: p0,
        d1: p1,
        d2: 2.0 * p2,
    }
}

#[inline]
fn powi(u: f64, n: u32) -> f64 {
    let mut acc = 1.0;
    let mut i = 0;
    while i < n {
        acc *= u;
        i += 1;
    }
    acc
}

/// `u^p` for the given parameters.
pub fn flux(params: &ShockParams, u: f64) -> Result<f64> {
    params.flux(u)
}

/// Rankine-Hugoniot speed `(f(u_plus) - f(u_minus)) / (u_plus - u_minus)`.
pub fn shock_speed(p: f64, u_minus: f64, u_plus: f64) -> Result<f64> {
    if u_plus == u_minus {
        return Err(Error::DegenerateStates(u_plus));
    }
    let int_exp = integer_exponent(p);
    if int_exp.is_none() && (u_plus <= 0.0 || u_minus <= 0.0) {
        let base = u_plus.min(u_minus);
        return Err(Error::NonPositiveBase { base, p });
    }
    let probe = ShockParams {
        p,
        u_minus,
        u_plus,
        s: f64::NAN,
        int_exp,
    };
    Ok(probe.divided_difference(u_minus, u_plus))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn flux_examples() {
        let p2 = ShockParams::new(2.0, 4.0, 1.0).unwrap();
        assert_eq!(p2.flux(3.0).unwrap(), 9.0);
        let p3 = ShockParams::new(3.0, 4.0, 1.0).unwrap();
        assert_eq!(p3.flux(2.0).unwrap(), 8.0);
        let p25 = ShockParams::new(2.5, 4.0, 1.0).unwrap();
        assert!(matches!(
            p25.flux(-1.0),
            Err(Error::NonPositiveBase { .. })
        ));
        assert!((p25.flux(4.0).unwrap() - 32.0).abs() < 1e-12);
    }

    #[test]
    fn shock_speed_examples() {
        assert_eq!(shock_speed(2.0, 2.0, 1.0).unwrap(), 3.0);
        assert_eq!(shock_speed(3.0, 2.0, 1.0).unwrap(), 7.0);
        assert_eq!(shock_speed(2.0, 1.0, -1.0).unwrap(), 0.0);
        assert!(matches!(
            shock_speed(3.0, 1.0, 1.0),
            Err(Error::DegenerateStates(_))
        ));
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(ShockParams::new(3.0, 1.0, 2.0).is_err());
        assert!(ShockParams::new(3.0, 2.0, -1.0).is_err());
        assert!(ShockParams::new(5.0, 2.0, 1.0).is_err());
        assert!(ShockParams::exploratory(5.0, 2.0, 1.0).is_ok());
        assert!(ShockParams::new(2.0, 1.0, -1.0).is_ok());
    }

    #[test]
    fn series_and_closed_form_agree() {
        let params = ShockParams::new(2.5, 3.0, 1.0).unwrap();
        // Straddle the series radius around v = 2.
        for &u in &[2.0 * 1.2499, 2.0 * 1.2501, 2.0 * 0.7501, 2.0 * 0.7499] {
            let dd = params.divided_difference_derivs(u, 2.0);
            let d0 = (params.flux(u).unwrap() - params.flux(2.0).unwrap()) / (u - 2.0);
            assert!((dd.d0 - d0).abs() < 1e-12 * d0.abs(), "{u}");
        }
        let at = params.divided_difference_derivs(2.0, 2.0);
        assert!((at.d0 - params.flux_derivative(2.0, 1)).abs() < 1e-13);
        assert!((at.d1 - params.flux_derivative(2.0, 2) / 2.0).abs() < 1e-13);
        assert!((at.d2 - params.flux_derivative(2.0, 3) / 3.0).abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn shock_speed_is_symmetric(p in 2.0f64..4.0, a in 0.1f64..10.0, b in 0.1f64..10.0) {
            prop_assume!((a - b).abs() > 1e-6);
            let s1 = shock_speed(p, a, b).unwrap();
            let s2 = shock_speed(p, b, a).unwrap();
            prop_assert_eq!(s1, s2);
        }

        #[test]
        fn burgers_speed_is_sum_of_states(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            prop_assume!(a != b);
            prop_assert_eq!(shock_speed(2.0, a, b).unwrap(), a + b);
        }

        #[test]
        fn flux_is_strictly_convex(p in 2.0f64..4.0, x in 0.1f64..10.0, h1 in 0.01f64..2.0, h2 in 0.01f64..2.0) {
            let params = ShockParams::new(p, 20.0, 0.05).unwrap();
            let (a, b, c) = (x, x + h1, x + h1 + h2);
            let fa = params.flux(a).unwrap();
            let fb = params.flux(b).unwrap();
            let fc = params.flux(c).unwrap();
            let second = ((fc - fb) / (c - b) - (fb - fa) / (b - a)) / (c - a);
            prop_assert!(second > 0.0);
        }
    }
}
