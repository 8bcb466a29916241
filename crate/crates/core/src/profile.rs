//! Viscous shock profile `U' = h(U)`, `U(-inf) = u_-`, `U(+inf) = u_+`,
//! normalized by `U(0) = (u_+ + u_-)/2`.
//!
//! The table is built in the logit coordinate `eta = ln((U - u_+)/(u_- - U))`,
//! in which `d xi / d eta = -1 / a(U)` has a bounded smooth integrand, so the
//! endpoint singularity of `1/h` never reaches the quadrature. Beyond the
//! table the profile follows the closed-form solution of the quadratic tail
//! ODE `v' = lambda v + (f''(u_pm)/2) v^2`, which is exact for Burgers flux.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::params::ShockParams;
use crate::quadrature;
use crate::weight::WeightFunctions;

pub const DEFAULT_TABLE_SIZE: usize = 4096;
/// Default tail switch distance, relative to the shock strength.
pub const DEFAULT_DELTA_TAIL: f64 = 1e-3;
pub const MIN_TABLE_SIZE: usize = 64;

/// Tail offsets below this fraction of the shock strength are returned as
/// the far-field state itself.
const TAIL_CUTOFF: f64 = 1e-20;

#[derive(Debug, Clone, Copy)]
struct Tail {
    state: f64,
    xi_edge: f64,
    v_edge: f64,
    lambda: f64,
    /// `kappa * v_edge / lambda`; zero selects a pure exponential.
    c: f64,
    /// Signed distance beyond `xi_edge` where the tail is dropped.
    cutoff: f64,
}

impl Tail {
    fn new(state: f64, xi_edge: f64, u_edge: f64, lambda: f64, kappa: f64, width: f64) -> Self {
        let v_edge = u_edge - state;
        let mut c = kappa * v_edge / lambda;
        if !(c.abs() < 0.5) {
            c = 0.0;
        }
        let cutoff = (TAIL_CUTOFF * width * (1.0 - c.abs()) / v_edge.abs()).ln() / lambda;
        Self {
            state,
            xi_edge,
            v_edge,
            lambda,
            c,
            cutoff,
        }
    }

    /// Offset `U - state` at `xi`, or `None` past the cutoff.
    #[inline]
    fn offset(&self, xi: f64) -> Option<f64> {
        let d = xi - self.xi_edge;
        if d.abs() >= self.cutoff.abs() {
            return None;
        }
        let e = (self.lambda * d).exp();
        Some(self.v_edge * e / (1.0 + self.c * (1.0 - e)))
    }

    /// Where `|U - state|` falls to `tol`.
    fn reach(&self, tol: f64) -> f64 {
        self.xi_edge + (tol * (1.0 - self.c.abs()) / self.v_edge.abs()).ln() / self.lambda
    }
}

/// Tabulated monotone profile with analytic tails.
#[derive(Debug, Clone)]
pub struct ShockProfile {
    pub params: ShockParams,
    pub weights: WeightFunctions,
    table_u: Vec<f64>,
    table_xi: Vec<f64>,
    /// Hermite slopes, `h(U_k)` after monotonicity limiting.
    slopes: Vec<f64>,
    /// `h'(u_-) = f'(u_-) - s > 0`
    pub lambda_minus: f64,
    /// `h'(u_+) = f'(u_+) - s < 0`
    pub lambda_plus: f64,
    pub delta_tail: f64,
    tail_minus: Tail,
    tail_plus: Tail,
    /// Largest relative mismatch between a centered difference of the table
    /// and `h` at interior nodes.
    pub ode_residual: f64,
}

/// One row of the exported table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProfileRow {
    pub xi: f64,
    #[serde(rename = "U")]
    pub u: f64,
    #[serde(rename = "Uxi")]
    pub uxi: f64,
}

/// Build with the default table size and tail distance.
pub fn build_default(params: &ShockParams) -> Result<ShockProfile> {
    build_profile(params, DEFAULT_TABLE_SIZE, DEFAULT_DELTA_TAIL * params.width())
}

pub fn build_profile(params: &ShockParams, m: usize, delta_tail: f64) -> Result<ShockProfile> {
    let width = params.width();
    if m < MIN_TABLE_SIZE {
        return Err(Error::InvalidParams(format!(
            "table size {m} below minimum {MIN_TABLE_SIZE}"
        )));
    }
    if !(delta_tail > 0.0 && delta_tail < 0.25 * width) {
        return Err(Error::InvalidParams(format!(
            "delta_tail = {delta_tail} must lie in (0, {})",
            0.25 * width
        )));
    }
    let weights = WeightFunctions::new(*params)?;
    let (up, um) = (params.u_plus, params.u_minus);

    let state_at = |eta: f64| -> f64 {
        if eta >= 0.0 {
            um - width / (1.0 + eta.exp())
        } else {
            up + width / (1.0 + (-eta).exp())
        }
    };
    let integrand = |eta: f64| 1.0 / weights.a_unchecked(state_at(eta));

    let eta_edge = ((width - delta_tail) / delta_tail).ln();
    let d_eta = 2.0 * eta_edge / (m - 1) as f64;
    let etas: Vec<f64> = (0..m)
        .map(|k| {
            if k + 1 == m {
                -eta_edge
            } else {
                eta_edge - k as f64 * d_eta
            }
        })
        .collect();
    let table_u: Vec<f64> = etas.iter().map(|&e| state_at(e)).collect();

    let a_scale = weights.a_plus.min(weights.a_minus);
    let tol = 1e-14 * d_eta / a_scale;
    let panel = |lo: f64, hi: f64| quadrature::adaptive(&integrand, lo, hi, tol);

    // Anchor at eta = 0 and sweep outward.
    let k0 = etas
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(k, _)| k)
        .unwrap_or(0);
    let mut table_xi = vec![0.0; m];
    table_xi[k0] = -signed_integral(&panel, 0.0, etas[k0])?;
    for k in k0 + 1..m {
        table_xi[k] = table_xi[k - 1] + panel(etas[k], etas[k - 1])?;
    }
    for k in (0..k0).rev() {
        table_xi[k] = table_xi[k + 1] - panel(etas[k + 1], etas[k])?;
    }
    if table_xi.iter().any(|x| !x.is_finite()) || table_xi.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::QuadratureFailure(
            "profile abscissae are not strictly increasing".into(),
        ));
    }

    let exact_slopes: Vec<f64> = table_u.iter().map(|&u| weights.h(u)).collect();
    let slopes = limit_slopes(&table_xi, &table_u, exact_slopes.clone());
    let ode_residual = ode_residual(&table_xi, &table_u, &exact_slopes);

    let lambda_minus = params.flux_prime(um) - params.s;
    let lambda_plus = params.flux_prime(up) - params.s;
    let kappa_minus = 0.5 * params.flux_derivative(um, 2);
    let kappa_plus = 0.5 * params.flux_derivative(up, 2);
    let tail_minus = Tail::new(um, table_xi[0], table_u[0], lambda_minus, kappa_minus, width);
    let tail_plus = Tail::new(
        up,
        table_xi[m - 1],
        table_u[m - 1],
        lambda_plus,
        kappa_plus,
        width,
    );

    Ok(ShockProfile {
        params: *params,
        weights,
        table_u,
        table_xi,
        slopes,
        lambda_minus,
        lambda_plus,
        delta_tail,
        tail_minus,
        tail_plus,
        ode_residual,
    })
}

fn signed_integral<F>(panel: &F, from: f64, to: f64) -> Result<f64>
where
    F: Fn(f64, f64) -> Result<f64>,
{
    if to >= from {
        panel(from, to)
    } else {
        Ok(-panel(to, from)?)
    }
}

/// Fritsch-Carlson limiting of Hermite slopes for a decreasing table.
fn limit_slopes(xs: &[f64], ys: &[f64], mut slopes: Vec<f64>) -> Vec<f64> {
    for k in 0..xs.len() - 1 {
        let secant = (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k]);
        if secant == 0.0 {
            slopes[k] = 0.0;
            slopes[k + 1] = 0.0;
            continue;
        }
        let alpha = slopes[k] / secant;
        let beta = slopes[k + 1] / secant;
        if alpha < 0.0 {
            slopes[k] = 0.0;
        }
        if beta < 0.0 {
            slopes[k + 1] = 0.0;
        }
        let r2 = alpha * alpha + beta * beta;
        if r2 > 9.0 {
            let tau = 3.0 / r2.sqrt();
            slopes[k] = tau * alpha * secant;
            slopes[k + 1] = tau * beta * secant;
        }
    }
    slopes
}

/// Nodes are uniform in `eta`, so `dU/dxi` is the ratio of fourth-order
/// centered differences of the two columns in `eta`.
fn ode_residual(xs: &[f64], ys: &[f64], hs: &[f64]) -> f64 {
    let centered = |v: &[f64], k: usize| v[k - 2] - 8.0 * v[k - 1] + 8.0 * v[k + 1] - v[k + 2];
    let mut worst: f64 = 0.0;
    for k in 2..xs.len() - 2 {
        let d = centered(ys, k) / centered(xs, k);
        worst = worst.max((d - hs[k]).abs() / hs[k].abs());
    }
    worst
}

impl ShockProfile {
    pub fn table_len(&self) -> usize {
        self.table_xi.len()
    }

    /// Abscissa range covered by the table.
    pub fn table_range(&self) -> (f64, f64) {
        (self.table_xi[0], self.table_xi[self.table_xi.len() - 1])
    }

    pub fn rows(&self) -> impl Iterator<Item = ProfileRow> + '_ {
        self.table_xi
            .iter()
            .zip(&self.table_u)
            .map(|(&xi, &u)| ProfileRow {
                xi,
                u,
                uxi: self.weights.h(u),
            })
    }

    #[allow(non_snake_case)]
    pub fn eval_U(&self, xi: f64) -> f64 {
        self.eval(xi).0
    }

    /// `U_xi(xi) = h(U(xi))`.
    #[allow(non_snake_case)]
    pub fn eval_Uxi(&self, xi: f64) -> f64 {
        self.eval(xi).1
    }

    /// `(U, U_xi)` at `xi`.
    pub fn eval(&self, xi: f64) -> (f64, f64) {
        let n = self.table_xi.len();
        if xi <= self.table_xi[0] {
            return self.eval_tail(&self.tail_minus, xi);
        }
        if xi >= self.table_xi[n - 1] {
            return self.eval_tail(&self.tail_plus, xi);
        }
        let k = self.table_xi.partition_point(|&x| x <= xi) - 1;
        let u = self.hermite(k, xi);
        (u, self.weights.h(u))
    }

    #[inline]
    fn eval_tail(&self, tail: &Tail, xi: f64) -> (f64, f64) {
        match tail.offset(xi) {
            None => (tail.state, 0.0),
            Some(v) => {
                let p = &self.params;
                let u = tail.state + v;
                (u, v * (p.divided_difference(u, tail.state) - p.s))
            }
        }
    }

    #[inline]
    fn hermite(&self, k: usize, xi: f64) -> f64 {
        let (x0, x1) = (self.table_xi[k], self.table_xi[k + 1]);
        let (y0, y1) = (self.table_u[k], self.table_u[k + 1]);
        let h = x1 - x0;
        let t = (xi - x0) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * y0 + h10 * h * self.slopes[k] + h01 * y1 + h11 * h * self.slopes[k + 1]
    }

    /// Samples `U(xi_i - shift)`, `U_xi(xi_i - shift)` and `a(U(xi_i - shift))`
    /// on the grid. Returns the index window `[lo, hi)` outside of which the
    /// profile equals its far-field states exactly (and `U_xi = 0`).
    pub fn sample_shifted(
        &self,
        grid: &Grid,
        shift: f64,
        u: &mut [f64],
        uxi: &mut [f64],
        a: &mut [f64],
    ) -> (usize, usize) {
        let n = grid.n;
        let (up, um) = (self.params.u_plus, self.params.u_minus);
        let cut_lo = self.tail_minus.xi_edge + self.tail_minus.cutoff;
        let cut_hi = self.tail_plus.xi_edge + self.tail_plus.cutoff;
        let m = self.table_xi.len();
        let mut lo = n;
        let mut hi = 0;
        let mut k = 0usize;
        for i in 0..n {
            let xi = grid.xi(i) - shift;
            if xi <= cut_lo {
                u[i] = um;
                uxi[i] = 0.0;
                a[i] = self.weights.a_minus;
                continue;
            }
            if xi >= cut_hi {
                u[i] = up;
                uxi[i] = 0.0;
                a[i] = self.weights.a_plus;
                continue;
            }
            lo = lo.min(i);
            hi = i + 1;
            let (val, der) = if xi <= self.table_xi[0] {
                self.eval_tail(&self.tail_minus, xi)
            } else if xi >= self.table_xi[m - 1] {
                self.eval_tail(&self.tail_plus, xi)
            } else {
                while k + 2 < m && self.table_xi[k + 1] <= xi {
                    k += 1;
                }
                let val = self.hermite(k, xi);
                (val, self.weights.h(val))
            };
            u[i] = val;
            uxi[i] = der;
            a[i] = self.weights.a_unchecked(val);
        }
        if lo >= hi {
            (0, 0)
        } else {
            (lo, hi)
        }
    }

    /// Abscissae beyond which `|U - u_pm| < tol` on each side.
    pub fn far_field_reach(&self, tol: f64) -> (f64, f64) {
        (self.tail_minus.reach(tol), self.tail_plus.reach(tol))
    }

    /// Half-length such that `|U(+-L) - u_pm| < 1e-10` plus a margin of
    /// `20 + |expected_shift|`.
    pub fn recommended_half_length(&self, expected_shift: f64) -> f64 {
        let (left, right) = self.far_field_reach(1e-10);
        left.abs().max(right.abs()) + 20.0 + expected_shift.abs()
    }
}
