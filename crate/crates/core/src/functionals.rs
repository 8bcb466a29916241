//! Scalar diagnostics of a perturbation `phi = u - U(xi - X)`: norms, the
//! weighted energy `E_a`, dissipation budgets, the profile overlap `R(tau)`,
//! the shift bound and the `t^(-1/4)` decay fit.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::quadrature;
use crate::profile::ShockProfile;
use crate::solver::Trajectory;

/// Column contract of the time-series CSV.
pub const CSV_HEADER: &str = "t,X,Xdot,E_a,L1,L2,Linf,H1semi,D1,D2,int_D1,int_D2,int_Xdot2,mono_violation";

/// Shortest decimal form that round-trips, in scientific notation for very
/// small or very large magnitudes.
pub fn format_float(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// One snapshot of diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    #[serde(rename = "X")]
    pub x: f64,
    #[serde(rename = "Xdot")]
    pub xdot: f64,
    #[serde(rename = "E_a")]
    pub e_a: f64,
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
    #[serde(rename = "Linf")]
    pub linf: f64,
    #[serde(rename = "H1semi")]
    pub h1_semi: f64,
    /// `int phi_xi^2`
    #[serde(rename = "D1")]
    pub d1: f64,
    /// `int phi^2 |U_xi(xi - X)|`
    #[serde(rename = "D2")]
    pub d2: f64,
    #[serde(rename = "int_D1")]
    pub int_d1: f64,
    #[serde(rename = "int_D2")]
    pub int_d2: f64,
    #[serde(rename = "int_Xdot2")]
    pub int_xdot2: f64,
    /// Largest single-step increase of `E_a` since the previous row, divided
    /// by `E_a(0)` (by one when `E_a(0) = 0`).
    pub mono_violation: f64,
}

impl DiagnosticsRow {
    pub fn csv_line(&self) -> String {
        let cols = [
            self.t,
            self.x,
            self.xdot,
            self.e_a,
            self.l1,
            self.l2,
            self.linf,
            self.h1_semi,
            self.d1,
            self.d2,
            self.int_d1,
            self.int_d2,
            self.int_xdot2,
            self.mono_violation,
        ];
        let mut line = String::new();
        for (k, v) in cols.iter().enumerate() {
            if k > 0 {
                line.push(',');
            }
            line.push_str(&format_float(*v));
        }
        line
    }
}

/// The whole time series as CSV text, header included.
pub fn rows_to_csv(rows: &[DiagnosticsRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    let _ = writeln!(out, "{CSV_HEADER}");
    for row in rows {
        let _ = writeln!(out, "{}", row.csv_line());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Norms {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    pub h1_semi: f64,
}

/// Centered difference in the interior, one-sided at the two ends.
fn derivative_at(phi: &[f64], dx: f64, i: usize) -> f64 {
    let n = phi.len();
    if i == 0 {
        (phi[1] - phi[0]) / dx
    } else if i + 1 == n {
        (phi[n - 1] - phi[n - 2]) / dx
    } else {
        (phi[i + 1] - phi[i - 1]) / (2.0 * dx)
    }
}

fn trapezoid_by(n: usize, dx: f64, f: impl Fn(usize) -> f64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.5 * (f(0) + f(n - 1));
    for i in 1..n - 1 {
        sum += f(i);
    }
    sum * dx
}

/// `int phi_xi^2` with centered differences and the trapezoid rule.
pub fn gradient_energy(phi: &[f64], grid: &Grid) -> f64 {
    let dx = grid.dx;
    trapezoid_by(phi.len(), dx, |i| {
        let d = derivative_at(phi, dx, i);
        d * d
    })
}

/// `(L1, L2, Linf, H1-seminorm)` by the trapezoid rule.
pub fn norms(phi: &[f64], grid: &Grid) -> Norms {
    let dx = grid.dx;
    let n = phi.len();
    Norms {
        l1: trapezoid_by(n, dx, |i| phi[i].abs()),
        l2: trapezoid_by(n, dx, |i| phi[i] * phi[i]).sqrt(),
        linf: phi.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        h1_semi: gradient_energy(phi, grid).sqrt(),
    }
}

/// `int a phi^2` for pre-sampled weights.
pub fn weighted_energy_sampled(a: &[f64], phi: &[f64], grid: &Grid) -> f64 {
    trapezoid_by(phi.len(), grid.dx, |i| a[i] * phi[i] * phi[i])
}

/// `E_a = int a(U(xi - X)) (u - U(xi - X))^2` by the trapezoid rule.
pub fn weighted_energy(u: &[f64], x_shift: f64, profile: &ShockProfile, grid: &Grid) -> f64 {
    let n = grid.n;
    let (mut ub, mut uxi, mut a) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    profile.sample_shifted(grid, x_shift, &mut ub, &mut uxi, &mut a);
    let phi: Vec<f64> = u.iter().zip(&ub).map(|(u, b)| u - b).collect();
    weighted_energy_sampled(&a, &phi, grid)
}

/// Far-field offset below which profile differences are treated as zero when
/// choosing integration ranges, relative to the shock strength.
const REACH_TOL: f64 = 1e-18;

/// Integration range and panel count covering both tails of `U(. - tau)`
/// and `U(.)`.
fn covering_panels(profile: &ShockProfile, tau: f64) -> (f64, f64, usize) {
    let (left, right) = profile.far_field_reach(REACH_TOL * profile.params.width());
    let lo = left - tau.abs();
    let hi = right + tau.abs();
    let rate = profile.lambda_minus.max(-profile.lambda_plus);
    // Panels of at most a tenth of the steepest decay length.
    let panels = (((hi - lo) * rate * 10.0).ceil() as usize).max(200);
    (lo, hi, panels)
}

/// `R(tau) = int |U(xi - tau) - U(xi)|^2`.
#[allow(non_snake_case)]
pub fn R_of_tau(profile: &ShockProfile, tau: f64) -> f64 {
    if tau == 0.0 {
        return 0.0;
    }
    let (lo, hi, panels) = covering_panels(profile, tau);
    let f = |xi: f64| {
        let d = profile.eval_U(xi - tau) - profile.eval_U(xi);
        d * d
    };
    quadrature::composite(&f, lo, hi, panels)
}

/// `int |U(xi - tau) - U(xi)|`, equal to `|tau| (u_- - u_+)` by Fubini.
pub fn shift_l1(profile: &ShockProfile, tau: f64) -> f64 {
    if tau == 0.0 {
        return 0.0;
    }
    let (lo, hi, panels) = covering_panels(profile, tau);
    let f = |xi: f64| (profile.eval_U(xi - tau) - profile.eval_U(xi)).abs();
    quadrature::composite(&f, lo, hi, panels)
}

/// `beta' = 2 int int_x^{x+1} U'(y) U'(x) dy dx` by nested Gauss-Legendre.
pub fn beta_prime(profile: &ShockProfile) -> f64 {
    let (lo, hi, panels) = covering_panels(profile, 1.0);
    let rate = profile.lambda_minus.max(-profile.lambda_plus);
    let inner_panels = ((rate * 10.0).ceil() as usize).max(8);
    let inner = |x: f64| quadrature::composite(&|y: f64| profile.eval_Uxi(y), x, x + 1.0, inner_panels);
    2.0 * quadrature::composite(&|x: f64| profile.eval_Uxi(x) * inner(x), lo, hi, panels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FubiniCheck {
    pub tau: f64,
    pub l1: f64,
    pub expected: f64,
    pub rel_err: f64,
    pub holds: bool,
}

pub const FUBINI_TOL: f64 = 1e-6;

pub fn fubini_check(profile: &ShockProfile, tau: f64) -> FubiniCheck {
    let l1 = shift_l1(profile, tau);
    let expected = tau.abs() * profile.params.width();
    let rel_err = if expected > 0.0 {
        (l1 - expected).abs() / expected
    } else {
        l1.abs()
    };
    FubiniCheck {
        tau,
        l1,
        expected,
        rel_err,
        holds: rel_err <= FUBINI_TOL,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShiftBoundSample {
    pub t: f64,
    pub displacement: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftBoundReport {
    pub beta_prime: f64,
    pub x0: f64,
    pub samples: Vec<ShiftBoundSample>,
    pub all_hold: bool,
    /// Fubini identity at each snapshot displacement (non-zero ones only).
    pub fubini: Vec<FubiniCheck>,
    pub fubini_holds: bool,
}

/// Checks `|X(t) - x0| <= R(X(t) - x0)/beta' + 1` and the Fubini identity at
/// every snapshot. Violations are reported, not raised.
pub fn shift_bound_check(trajectory: &Trajectory, profile: &ShockProfile) -> Result<ShiftBoundReport> {
    let rows = &trajectory.rows;
    let first = rows
        .first()
        .ok_or_else(|| Error::EmptyInput("trajectory has no snapshots".into()))?;
    let x0 = first.x;
    let bp = beta_prime(profile);
    let mut samples = Vec::with_capacity(rows.len());
    let mut fubini = Vec::new();
    for row in rows {
        let d = row.x - x0;
        let bound = R_of_tau(profile, d) / bp + 1.0;
        samples.push(ShiftBoundSample {
            t: row.t,
            displacement: d.abs(),
            bound,
            holds: d.abs() <= bound,
        });
        if d.abs() > 1e-8 {
            fubini.push(fubini_check(profile, d));
        }
    }
    Ok(ShiftBoundReport {
        beta_prime: bp,
        x0,
        all_hold: samples.iter().all(|s| s.holds),
        fubini_holds: fubini.iter().all(|f| f.holds),
        samples,
        fubini,
    })
}

/// Every row satisfies `|X'| <= constant * ||phi||_inf`; returns the number of
/// rows where it fails.
pub fn shift_rate_bound_breaks(rows: &[DiagnosticsRow], constant: f64) -> usize {
    rows.iter()
        .filter(|r| r.xdot.abs() > constant * r.linf * (1.0 + 1e-12))
        .count()
}

pub const DECAY_MIN_SPAN: f64 = 50.0;
pub const DECAY_START: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    /// Empirical constant: the smallest `C` with
    /// `||phi(t)|| <= C n0 / (1 + C t^(1/4) n0)` at every sample `t >= 1`.
    /// `None` when no finite constant works.
    pub c_star: Option<f64>,
    /// Largest `(||phi|| - bound)/bound` over the samples; `<= 0` when the
    /// bound holds everywhere.
    pub margin: f64,
    /// `sup_{t >= 1} t^(1/4) ||phi(t)||`.
    pub sup_scaled: f64,
    pub n0: f64,
    pub samples: usize,
}

/// Fits the decay constant to `(t, ||phi(t)||_{L2})` pairs with initial norm `n0`.
pub fn decay_fit_series(series: &[(f64, f64)], n0: f64) -> Result<DecayFit> {
    let t_end = series.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    if !(t_end >= DECAY_MIN_SPAN) {
        return Err(Error::InsufficientSpan {
            t_end,
            required: DECAY_MIN_SPAN,
        });
    }
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|s| s.0 >= DECAY_START)
        .map(|&(t, y)| (t.powf(0.25), y))
        .collect();
    let sup_scaled = pts.iter().map(|&(q, y)| q * y).fold(0.0, f64::max);
    let margin_for = |c: f64| -> f64 {
        pts.iter()
            .map(|&(q, y)| {
                let bound = if c.is_infinite() {
                    1.0 / q
                } else {
                    c * n0 / (1.0 + c * q * n0)
                };
                if bound > 0.0 {
                    (y - bound) / bound
                } else if y > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .fold(f64::NEG_INFINITY, f64::max)
            .max(if pts.is_empty() { 0.0 } else { f64::NEG_INFINITY })
    };
    let feasible = pts.iter().all(|&(q, y)| y * q < 1.0);
    if !feasible || (n0 <= 0.0 && pts.iter().any(|p| p.1 > 0.0)) {
        return Ok(DecayFit {
            c_star: None,
            margin: margin_for(f64::INFINITY).max(f64::MIN_POSITIVE),
            sup_scaled,
            n0,
            samples: pts.len(),
        });
    }
    let mut c = pts
        .iter()
        .map(|&(q, y)| if y > 0.0 { y / (n0 * (1.0 - y * q)) } else { 0.0 })
        .fold(0.0, f64::max);
    let mut margin = margin_for(c);
    // Rounding in the bound can leave the tightest sample a few ulps above it.
    while margin > 0.0 {
        c = c.next_up();
        margin = margin_for(c);
    }
    Ok(DecayFit {
        c_star: Some(c),
        margin,
        sup_scaled,
        n0,
        samples: pts.len(),
    })
}

/// Decay fit of a trajectory's `L2` column, with `n0` its value at `t = 0`.
pub fn decay_fit(trajectory: &Trajectory) -> Result<DecayFit> {
    let rows = &trajectory.rows;
    let n0 = rows
        .first()
        .ok_or_else(|| Error::EmptyInput("trajectory has no snapshots".into()))?
        .l2;
    let series: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.l2)).collect();
    decay_fit_series(&series, n0)
}

/// Smallest `C0` with `||phi(t)||_{H1}^2 + int (D1 + D2) + int X'^2 <= C0 ||phi_0||_{H1}^2`
/// at every row. `None` when the initial norm vanishes.
pub fn energy_budget_constant(rows: &[DiagnosticsRow]) -> Option<f64> {
    let first = rows.first()?;
    let n0 = first.l2 * first.l2 + first.h1_semi * first.h1_semi;
    if n0 <= 0.0 {
        return None;
    }
    let worst = rows
        .iter()
        .map(|r| r.l2 * r.l2 + r.h1_semi * r.h1_semi + r.int_d1 + r.int_d2 + r.int_xdot2)
        .fold(0.0, f64::max);
    Some(worst / n0)
}

/// `|X(T) - X(T/2)| / (T/2)` for each `T`, read from rows at those times.
pub fn mean_drift(rows: &[DiagnosticsRow], horizons: &[f64]) -> Result<Vec<f64>> {
    let at = |t: f64| -> Result<f64> {
        rows.iter()
            .find(|r| (r.t - t).abs() <= 1e-9 * t.max(1.0))
            .map(|r| r.x)
            .ok_or_else(|| Error::EmptyInput(format!("no snapshot at t = {t}")))
    };
    horizons
        .iter()
        .map(|&t| Ok((at(t)? - at(0.5 * t)?).abs() / (0.5 * t)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ShockParams;
    use crate::profile::build_default;

    fn burgers() -> ShockProfile {
        build_default(&ShockParams::new(2.0, 2.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn zero_field_has_zero_norms() {
        let grid = Grid::new(10.0, 201).unwrap();
        let n = norms(&vec![0.0; grid.n], &grid);
        assert_eq!((n.l1, n.l2, n.linf, n.h1_semi), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn box_norms() {
        let grid = Grid::new(5.0, 100_001).unwrap();
        let phi: Vec<f64> = grid.points().map(|x| if x.abs() <= 1.0 { 1.0 } else { 0.0 }).collect();
        let n = norms(&phi, &grid);
        assert!((n.l1 - 2.0).abs() < 1e-3);
        assert!((n.l2 - 2f64.sqrt()).abs() < 1e-3);
        assert_eq!(n.linf, 1.0);
    }

    #[test]
    fn sobolev_interpolation_holds() {
        let grid = Grid::new(30.0, 6001).unwrap();
        for (amp, w) in [(0.1, 5.0), (2.0, 0.7), (-1.0, 3.0)] {
            let phi: Vec<f64> = grid
                .points()
                .map(|x| amp * (-(x / w).powi(2)).exp() * (1.0 + 0.3 * (x).sin()))
                .collect();
            let n = norms(&phi, &grid);
            assert!(n.linf <= 2f64.sqrt() * (n.l2 * n.h1_semi).sqrt() * 1.01);
        }
    }

    #[test]
    fn burgers_weighted_energy_is_scaled_l2() {
        let prof = build_default(&ShockParams::new(2.0, 3.0, 0.5).unwrap()).unwrap();
        let grid = Grid::new(40.0, 4001).unwrap();
        let mut ub = vec![0.0; grid.n];
        let (mut d, mut a) = (vec![0.0; grid.n], vec![0.0; grid.n]);
        prof.sample_shifted(&grid, 0.3, &mut ub, &mut d, &mut a);
        let u: Vec<f64> = ub
            .iter()
            .zip(grid.points())
            .map(|(b, x)| b + 0.2 * (-x * x / 4.0).exp())
            .collect();
        let e = weighted_energy(&u, 0.3, &prof, &grid);
        let phi: Vec<f64> = u.iter().zip(&ub).map(|(u, b)| u - b).collect();
        let l2 = norms(&phi, &grid).l2;
        assert!((e - 2.5 * l2 * l2).abs() < 1e-12 * e);
        assert_eq!(weighted_energy(&ub, 0.3, &prof, &grid), 0.0);
    }

    #[test]
    fn overlap_is_even_and_grows_linearly() {
        let prof = burgers();
        assert_eq!(R_of_tau(&prof, 0.0), 0.0);
        for tau in [0.5, 1.0, 3.0] {
            let (a, b) = (R_of_tau(&prof, tau), R_of_tau(&prof, -tau));
            assert!((a - b).abs() <= 1e-10 * a.max(1e-300), "{a} {b}");
        }
        let r = R_of_tau(&prof, 50.0) / 50.0;
        assert!((r - 1.0).abs() < 0.05, "{r}");
    }

    #[test]
    fn fubini_identity() {
        let prof = burgers();
        for tau in [0.5, 1.0, 3.0, -2.0] {
            let c = fubini_check(&prof, tau);
            assert!(c.holds, "{c:?}");
        }
        assert!((shift_l1(&prof, 3.0) - 3.0).abs() < 3e-6);
        assert_eq!(shift_l1(&prof, 0.0), 0.0);
        let cubic = build_default(&ShockParams::new(3.0, 2.0, 1.0).unwrap()).unwrap();
        assert!(fubini_check(&cubic, 1.7).holds);
    }

    #[test]
    fn beta_prime_matches_single_integral() {
        for prof in [burgers(), build_default(&ShockParams::new(3.5, 4.0, 0.5).unwrap()).unwrap()] {
            let bp = beta_prime(&prof);
            assert!(bp > 0.0);
            let (lo, hi, panels) = covering_panels(&prof, 1.0);
            let single = 2.0
                * quadrature::composite(
                    &|x: f64| prof.eval_Uxi(x) * (prof.eval_U(x + 1.0) - prof.eval_U(x)),
                    lo,
                    hi,
                    panels,
                );
            assert!((bp - single).abs() < 1e-9 * bp, "{bp} {single}");
        }
    }

    #[test]
    fn decay_fit_examples() {
        let ts: Vec<f64> = (0..=200).map(|k| k as f64).collect();
        let decaying: Vec<(f64, f64)> = ts.iter().map(|&t| (t, (1.0 + t).powf(-0.5))).collect();
        let fit = decay_fit_series(&decaying, 1.0).unwrap();
        assert!(fit.c_star.is_some_and(|c| c.is_finite()));
        assert!(fit.margin <= 0.0);
        let c = fit.c_star.unwrap();
        for &(t, y) in decaying.iter().filter(|s| s.0 >= 1.0) {
            assert!(y <= c / (1.0 + c * t.powf(0.25)));
        }

        let flat: Vec<(f64, f64)> = ts.iter().map(|&t| (t, 1.0)).collect();
        let fit = decay_fit_series(&flat, 1.0).unwrap();
        assert!(fit.c_star.is_none() && fit.margin > 0.0);

        let zero: Vec<(f64, f64)> = ts.iter().map(|&t| (t, 0.0)).collect();
        let fit = decay_fit_series(&zero, 0.0).unwrap();
        assert_eq!(fit.margin, 0.0);
        assert!(fit.c_star.is_some());

        let short: Vec<(f64, f64)> = (0..=40).map(|k| (k as f64, 1.0)).collect();
        assert!(matches!(
            decay_fit_series(&short, 1.0),
            Err(Error::InsufficientSpan { .. })
        ));
    }

    #[test]
    fn csv_row_layout() {
        let row = DiagnosticsRow {
            t: 1.0,
            x: 0.5,
            xdot: -1e-7,
            e_a: 0.25,
            l1: 0.0,
            l2: 0.0,
            linf: 0.0,
            h1_semi: 0.0,
            d1: 0.0,
            d2: 0.0,
            int_d1: 0.0,
            int_d2: 0.0,
            int_xdot2: 0.0,
            mono_violation: 0.0,
        };
        let line = row.csv_line();
        assert_eq!(line.split(',').count(), CSV_HEADER.split(',').count());
        assert!(line.starts_with("1,0.5,-1e-7,0.25,"));
        let csv = rows_to_csv(&[row]);
        assert!(csv.starts_with(CSV_HEADER));
    }
}
