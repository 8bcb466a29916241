//! The contraction weight `a(U)` and the coefficient functions `g(U)`, `m(U)`.
//!
//! `a` is the difference of two divided differences of the flux,
//! `a(U) = D(U, u_-) - D(U, u_+)`, which is smooth across both endpoints and is
//! evaluated without cancellation (see [`ShockParams::divided_difference_derivs`]).
//! `g` has two closed forms: the weighted form built from `a, a', a''` and the
//! rational form `-|u_+ - u_-| m(U) / ((U-u_-)^2 (u_+-U)^2)` built from `h` and
//! its derivatives. The second is 0/0 at the endpoints, where the first reduces
//! to the endpoint formulas.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::ShockParams;

/// Relative band width around each endpoint where `g` blends into the
/// endpoint formula.
pub const ENDPOINT_BLEND: f64 = 1e-4;

/// Absolute slack allowed outside `[u_plus, u_minus]` before `OutOfBand`.
pub const BAND_TOLERANCE: f64 = 1e-12;

/// Everything the proof needs at one state.
#[derive(Debug, Clone, Copy)]
pub struct LocalCoefficients {
    pub u: f64,
    pub a: f64,
    pub da: f64,
    pub dda: f64,
    pub h: f64,
    pub dh: f64,
    pub ddh: f64,
    pub dddh: f64,
}

/// Lower and upper bounds of `a` over the closed state interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightBounds {
    pub a_min: f64,
    pub a_max: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct WeightFunctions {
    pub params: ShockParams,
    /// `a(u_plus) = s - f'(u_plus)`
    pub a_plus: f64,
    /// `a(u_minus) = f'(u_minus) - s`
    pub a_minus: f64,
}

impl WeightFunctions {
    pub fn new(params: ShockParams) -> Result<Self> {
        let a_plus = params.s - params.flux_prime(params.u_plus);
        let a_minus = params.flux_prime(params.u_minus) - params.s;
        if !(a_plus > 0.0 && a_minus > 0.0) {
            return Err(Error::InvalidParams(format!(
                "Lax condition fails: a(u_plus) = {a_plus}, a(u_minus) = {a_minus}"
            )));
        }
        Ok(Self {
            params,
            a_plus,
            a_minus,
        })
    }

    fn check_band(&self, u: f64) -> Result<()> {
        let (lo, hi) = (self.params.u_plus, self.params.u_minus);
        if u < lo - BAND_TOLERANCE || u > hi + BAND_TOLERANCE || u.is_nan() {
            return Err(Error::OutOfBand { value: u, lo, hi });
        }
        Ok(())
    }

    /// `h(U) = -s (U - u_+) + f(U) - f(u_+)`, factored around the nearer
    /// endpoint so it vanishes exactly at both.
    pub fn h(&self, u: f64) -> f64 {
        let p = &self.params;
        if (u - p.u_plus).abs() <= (u - p.u_minus).abs() {
            (u - p.u_plus) * (p.divided_difference(u, p.u_plus) - p.s)
        } else {
            (u - p.u_minus) * (p.divided_difference(u, p.u_minus) - p.s)
        }
    }

    /// `a(U)` without the band check; valid for any `U` in the flux domain.
    #[inline]
    pub fn a_unchecked(&self, u: f64) -> f64 {
        let p = &self.params;
        p.divided_difference(u, p.u_minus) - p.divided_difference(u, p.u_plus)
    }

    pub fn a(&self, u: f64) -> Result<f64> {
        self.check_band(u)?;
        Ok(self.a_unchecked(u))
    }

    /// `(a'(U), a''(U))`.
    pub fn a_derivs(&self, u: f64) -> Result<(f64, f64)> {
        self.check_band(u)?;
        let c = self.local(u);
        Ok((c.da, c.dda))
    }

    /// `a, a', a'', h, h', h'', h'''` at `u` (no band check).
    pub fn local(&self, u: f64) -> LocalCoefficients {
        let p = &self.params;
        let dm = p.divided_difference_derivs(u, p.u_minus);
        let dp = p.divided_difference_derivs(u, p.u_plus);
        let fd = p.flux_derivs(u);
        let h = if (u - p.u_plus).abs() <= (u - p.u_minus).abs() {
            (u - p.u_plus) * (dp.d0 - p.s)
        } else {
            (u - p.u_minus) * (dm.d0 - p.s)
        };
        LocalCoefficients {
            u,
            a: dm.d0 - dp.d0,
            da: dm.d1 - dp.d1,
            dda: dm.d2 - dp.d2,
            h,
            dh: fd.f1 - p.s,
            ddh: fd.f2,
            dddh: fd.f3,
        }
    }

    /// `m(U) = (U-u_-)(u_+-U)(h h'' - h'^2) + 3h^2 + h h' (u_+ + u_- - 2U)`.
    pub fn m(&self, u: f64) -> Result<f64> {
        self.check_band(u)?;
        Ok(self.m_local(&self.local(u)))
    }

    pub fn m_local(&self, c: &LocalCoefficients) -> f64 {
        let p = &self.params;
        let u = c.u;
        (u - p.u_minus) * (p.u_plus - u) * (c.h * c.ddh - c.dh * c.dh)
            + 3.0 * c.h * c.h
            + c.h * c.dh * (p.u_plus + p.u_minus - 2.0 * u)
    }

    /// Weighted form `2a^2/(u_+-u_-) + a f''/2 + (a''/2 - a'^2/a) h`.
    pub fn g_weighted(&self, c: &LocalCoefficients) -> f64 {
        let p = &self.params;
        2.0 * c.a * c.a / (p.u_plus - p.u_minus)
            + 0.5 * c.a * c.ddh
            + (0.5 * c.dda - c.da * c.da / c.a) * c.h
    }

    /// Rational form `-|u_+-u_-| m / ((U-u_-)^2 (u_+-U)^2)`; 0/0 at the endpoints.
    pub fn g_rational(&self, c: &LocalCoefficients) -> f64 {
        let p = &self.params;
        let l = (c.u - p.u_minus) * (p.u_plus - c.u);
        -p.width() * self.m_local(c) / (l * l)
    }

    /// `g(u_+) = 2 a(u_+) [f''(u_+)/4 + a(u_+)/(u_+ - u_-)]`.
    pub fn g_at_plus(&self) -> f64 {
        let p = &self.params;
        let f2 = p.flux_derivative(p.u_plus, 2);
        2.0 * self.a_plus * (0.25 * f2 + self.a_plus / (p.u_plus - p.u_minus))
    }

    /// `g(u_-) = 2 a(u_-) [f''(u_-)/4 + a(u_-)/(u_+ - u_-)]`.
    pub fn g_at_minus(&self) -> f64 {
        let p = &self.params;
        let f2 = p.flux_derivative(p.u_minus, 2);
        2.0 * self.a_minus * (0.25 * f2 + self.a_minus / (p.u_plus - p.u_minus))
    }

    /// `g(U)` from the weighted form, blended linearly into the endpoint
    /// formulas within `ENDPOINT_BLEND * (u_- - u_+)` of each endpoint.
    pub fn g(&self, u: f64) -> Result<f64> {
        self.check_band(u)?;
        Ok(self.g_blended(&self.local(u)))
    }

    pub fn g_blended(&self, c: &LocalCoefficients) -> f64 {
        let p = &self.params;
        let band = ENDPOINT_BLEND * p.width();
        let dp = c.u - p.u_plus;
        let dm = p.u_minus - c.u;
        if dp <= 0.0 {
            self.g_at_plus()
        } else if dm <= 0.0 {
            self.g_at_minus()
        } else if dp < band {
            let t = dp / band;
            (1.0 - t) * self.g_at_plus() + t * self.g_weighted(c)
        } else if dm < band {
            let t = dm / band;
            (1.0 - t) * self.g_at_minus() + t * self.g_weighted(c)
        } else {
            self.g_weighted(c)
        }
    }

    /// `(weighted, rational)` forms of `g` at an interior state.
    pub fn g_dual(&self, u: f64) -> Result<(f64, f64)> {
        self.check_band(u)?;
        let c = self.local(u);
        Ok((self.g_weighted(&c), self.g_rational(&c)))
    }

    /// Scan of `a` on `n` uniform states including both endpoints.
    pub fn bounds(&self, n: usize) -> WeightBounds {
        let p = &self.params;
        let n = n.max(2);
        let mut a_min = self.a_plus.min(self.a_minus);
        let mut a_max = self.a_plus.max(self.a_minus);
        for i in 1..n - 1 {
            let u = p.u_plus + p.width() * i as f64 / (n - 1) as f64;
            let a = self.a_unchecked(u);
            a_min = a_min.min(a);
            a_max = a_max.max(a);
        }
        WeightBounds { a_min, a_max }
    }
}

/// Residuals of the interior inequalities used in the sign proof of `g`.
/// Each field is oriented so that the inequality holds iff the value is
/// negative (`h_minus`, `h_plus`) or positive (`product`, `m_margin`).
#[derive(Debug, Clone, Copy)]
pub struct InequalityResiduals {
    /// `h + (u_- - U) h'`, must be < 0.
    pub h_minus: f64,
    /// `h + (u_+ - U) h' + (h''/4)(u_+ - U)^2`, must be < 0.
    pub h_plus: f64,
    /// `[h + (u_- - U)h'][h + (u_+ - U)h'] - (h'')^2 (u_+-U)^2 (u_--U)^2 / 8`, must be > 0.
    pub product: f64,
    /// `m - 2 [h + h'' (U - u_-)(u_+ - U)/4]^2`, must be > 0.
    pub m_margin: f64,
}

impl WeightFunctions {
    pub fn inequalities(&self, c: &LocalCoefficients) -> InequalityResiduals {
        let p = &self.params;
        let u = c.u;
        let em = p.u_minus - u;
        let ep = p.u_plus - u;
        let left = c.h + em * c.dh;
        let right = c.h + ep * c.dh;
        let sq = c.h + c.ddh * (u - p.u_minus) * ep / 4.0;
        InequalityResiduals {
            h_minus: left,
            h_plus: right + 0.25 * c.ddh * ep * ep,
            product: left * right - c.ddh * c.ddh * ep * ep * em * em / 8.0,
            m_margin: self.m_local(c) - 2.0 * sq * sq,
        }
    }
}

/// `h(U)` for the given parameters.
#[allow(non_snake_case)]
pub fn h_of_U(params: &ShockParams, u: f64) -> f64 {
    let p = params;
    if (u - p.u_plus).abs() <= (u - p.u_minus).abs() {
        (u - p.u_plus) * (p.divided_difference(u, p.u_plus) - p.s)
    } else {
        (u - p.u_minus) * (p.divided_difference(u, p.u_minus) - p.s)
    }
}

pub fn weight_a(params: &ShockParams, u: f64) -> Result<f64> {
    WeightFunctions::new(*params)?.a(u)
}

pub fn weight_a_derivs(params: &ShockParams, u: f64) -> Result<(f64, f64)> {
    WeightFunctions::new(*params)?.a_derivs(u)
}

#[allow(non_snake_case)]
pub fn m_of_U(params: &ShockParams, u: f64) -> Result<f64> {
    WeightFunctions::new(*params)?.m(u)
}

#[allow(non_snake_case)]
pub fn g_of_U(params: &ShockParams, u: f64) -> Result<f64> {
    WeightFunctions::new(*params)?.g(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cubic() -> WeightFunctions {
        WeightFunctions::new(ShockParams::new(3.0, 2.0, 1.0).unwrap()).unwrap()
    }

    // Oracles for p = 3, (u_-, u_+) = (2, 1): h factors as (U-1)(U-2)(U+3),
    // the divided differences are U^2+2U+4 and U^2+U+1.
    fn h_cubic(u: f64) -> f64 {
        (u - 1.0) * (u - 2.0) * (u + 3.0)
    }
    fn a_cubic_direct(u: f64) -> f64 {
        (u.powi(3) - 8.0) / (u - 2.0) - (u.powi(3) - 1.0) / (u - 1.0)
    }

    #[test]
    fn h_examples() {
        let p = ShockParams::new(3.0, 2.0, 1.0).unwrap();
        assert!((h_of_U(&p, 1.5) - -1.125).abs() < 1e-15);
        assert!((h_of_U(&p, 1.5) - h_cubic(1.5)).abs() < 1e-15);
        assert_eq!(h_of_U(&p, 1.0), 0.0);
        assert_eq!(h_of_U(&p, 2.0), 0.0);
        for k in 1..100 {
            let u = 1.0 + k as f64 / 100.0;
            assert!((h_of_U(&p, u) - h_cubic(u)).abs() < 1e-14);
            assert!(h_of_U(&p, u) < 0.0);
        }
    }

    #[test]
    fn weight_examples() {
        let burgers = ShockParams::new(2.0, 3.5, 0.5).unwrap();
        for k in 0..=20 {
            let u = 0.5 + 3.0 * k as f64 / 20.0;
            assert!((weight_a(&burgers, u).unwrap() - 3.0).abs() < 1e-12);
            assert_eq!(weight_a_derivs(&burgers, u).unwrap(), (0.0, 0.0));
        }
        let p = ShockParams::new(3.0, 2.0, 1.0).unwrap();
        assert!((weight_a(&p, 1.5).unwrap() - 4.5).abs() < 1e-14);
        assert!((weight_a(&p, 1.5).unwrap() - a_cubic_direct(1.5)).abs() < 1e-14);
        assert!((weight_a(&p, 1.0).unwrap() - 4.0).abs() < 1e-14);
        assert!((weight_a(&p, 2.0).unwrap() - 5.0).abs() < 1e-14);
        let (d1, d2) = weight_a_derivs(&p, 1.5).unwrap();
        assert!((d1 - 1.0).abs() < 1e-13 && d2.abs() < 1e-13);
        assert!(matches!(weight_a(&p, 2.1), Err(Error::OutOfBand { .. })));
    }

    #[test]
    fn m_examples() {
        let p = ShockParams::new(3.0, 2.0, 1.0).unwrap();
        assert_eq!(m_of_U(&p, 1.0).unwrap(), 0.0);
        assert_eq!(m_of_U(&p, 2.0).unwrap(), 0.0);
        // Oracle: direct evaluation with h = -1.125, h' = -0.25, h'' = 9.
        let (h, dh, ddh, u): (f64, f64, f64, f64) = (-1.125, -0.25, 9.0, 1.5);
        let oracle = (u - 2.0) * (1.0 - u) * (h * ddh - dh * dh) + 3.0 * h * h + h * dh * (3.0 - 2.0 * u);
        assert!((oracle - 1.25).abs() < 1e-15);
        assert!((m_of_U(&p, 1.5).unwrap() - oracle).abs() < 1e-13);
    }

    #[test]
    fn g_examples() {
        let burgers = ShockParams::new(2.0, 2.0, 1.0).unwrap();
        for k in 0..=10 {
            let u = 1.0 + k as f64 / 10.0;
            assert!((g_of_U(&burgers, u).unwrap() + 1.0).abs() < 1e-12);
        }
        let w = cubic();
        for u in [1.0, 1.5, 2.0] {
            assert!((w.g(u).unwrap() + 20.0).abs() < 1e-12, "{u}");
        }
        assert!((w.g_at_plus() + 20.0).abs() < 1e-12);
        assert!((w.g_at_minus() + 20.0).abs() < 1e-12);
        let (g1, g2) = w.g_dual(1.5).unwrap();
        assert!((g1 + 20.0).abs() < 1e-12 && (g2 + 20.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_form_matches_endpoint_formulas() {
        for &(p, um, up) in &[(2.5, 3.0, 1.0), (3.5, 9.0, 0.2), (4.0, 2.0, 1.5)] {
            let w = WeightFunctions::new(ShockParams::new(p, um, up).unwrap()).unwrap();
            let gp = w.g_weighted(&w.local(up));
            let gm = w.g_weighted(&w.local(um));
            assert!((gp - w.g_at_plus()).abs() < 1e-10 * gp.abs());
            assert!((gm - w.g_at_minus()).abs() < 1e-10 * gm.abs());
        }
    }

    proptest! {
        #[test]
        fn derivatives_match_finite_differences(p in 2.0f64..4.0, lo in 0.05f64..5.0, span in 0.1f64..5.0, t in 0.0f64..1.0) {
            let params = ShockParams::new(p, lo + span, lo).unwrap();
            let w = WeightFunctions::new(params).unwrap();
            let u = lo + span * (0.01 + 0.98 * t);
            let step = 1e-4 * span;
            let c = w.local(u);
            let fd1 = (w.a_unchecked(u + step) - w.a_unchecked(u - step)) / (2.0 * step);
            let fd2 = (w.local(u + step).da - w.local(u - step).da) / (2.0 * step);
            prop_assert!((c.da - fd1).abs() <= 1e-6 * (1.0 + c.da.abs()));
            prop_assert!((c.dda - fd2).abs() <= 1e-6 * (1.0 + c.dda.abs()));
        }

        #[test]
        fn dual_forms_agree(p in 2.0f64..4.0, lo in 0.05f64..5.0, span in 0.1f64..5.0, t in 0.01f64..0.99) {
            let params = ShockParams::new(p, lo + span, lo).unwrap();
            let w = WeightFunctions::new(params).unwrap();
            let (g1, g2) = w.g_dual(lo + span * t).unwrap();
            prop_assert!((g1 - g2).abs() <= 1e-9 * g1.abs(), "{} vs {}", g1, g2);
        }

        #[test]
        fn weight_positive_and_inequalities_hold(p in 2.0f64..4.0, lo in 0.05f64..5.0, span in 0.1f64..5.0, t in 0.01f64..0.99) {
            let params = ShockParams::new(p, lo + span, lo).unwrap();
            let w = WeightFunctions::new(params).unwrap();
            let c = w.local(lo + span * t);
            prop_assert!(c.a > 0.0);
            let r = w.inequalities(&c);
            prop_assert!(r.h_minus < 0.0);
            prop_assert!(r.h_plus < 0.0);
            prop_assert!(r.product > 0.0);
            prop_assert!(r.m_margin > 0.0);
        }
    }
}
