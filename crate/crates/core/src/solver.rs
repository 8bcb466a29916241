//! Moving-frame solver for `u_t - s u_xi + f(u)_xi = u_xixi` coupled to the
//! shift ODE `X' = -4/(u_- - u_+)^2 * int a(U(xi - X)) U_xi(xi - X) phi`,
//! with `phi = u - U(xi - X)`.
//!
//! Space is a conservative finite-volume discretization with Dirichlet
//! far-field states; time is classical RK4 on the coupled `(u, X)` system.
//! By default the stepper subtracts the discrete residual of the shifted
//! profile from the right-hand side, so an unperturbed profile is an exact
//! steady state of the scheme (see [`SolverConfig::well_balanced`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::functionals::{self, DiagnosticsRow, Norms};
use crate::grid::{Field, Grid};
use crate::params::ShockParams;
use crate::profile::ShockProfile;

pub const DEFAULT_CFL: f64 = 0.4;
/// Maximum-principle excursions above this are recorded.
pub const MP_EPSILON: f64 = 1e-8;
/// Maximum-principle excursions above this also raise a warning.
pub const MP_WARNING: f64 = 1e-6;
/// Largest tolerated gap between the first interior cells and the far-field
/// states before the domain is flagged as too short.
pub const FAR_FIELD_TOL: f64 = 1e-8;
/// Soft smallness threshold on `||phi_0||_{H^1}`, relative to the shock strength.
pub const SMALLNESS_FRACTION: f64 = 0.5;

/// Numerical diffusion added to the central flux.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stabilizer {
    /// Coefficient `max(1/dx, alpha/2)`: the physical viscosity alone when the
    /// cell Peclet number `alpha dx / 2` is below one, local Lax-Friedrichs
    /// beyond. Second order on smooth solutions at resolved grids.
    #[default]
    Hybrid,
    /// Coefficient `1/dx + alpha/2`: physical viscosity plus full local
    /// Lax-Friedrichs. First order in `dx`.
    Additive,
    /// Coefficient `1/dx`: central flux with the physical viscosity only.
    /// Unstable once the cell Peclet number exceeds one.
    None,
}

impl Stabilizer {
    #[inline]
    fn coefficient(self, inv_dx: f64, alpha: f64) -> f64 {
        match self {
            Stabilizer::Hybrid => inv_dx.max(0.5 * alpha),
            Stabilizer::Additive => inv_dx + 0.5 * alpha,
            Stabilizer::None => inv_dx,
        }
    }
}

/// Initial perturbation added to the shifted profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Perturbation {
    /// `amplitude * exp(-((xi - center)/width)^2)`.
    Gaussian {
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// Compactly supported `amplitude * exp(1 - 1/(1 - r^2))`, `r = (xi - center)/width`.
    Bump {
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// Piecewise-linear through `(xi[k], values[k])`, zero outside.
    CustomTable { xi: Vec<f64>, values: Vec<f64> },
}

impl Default for Perturbation {
    fn default() -> Self {
        Perturbation::Gaussian {
            amplitude: 0.1,
            center: 0.0,
            width: 5.0,
        }
    }
}

impl Perturbation {
    pub fn zero() -> Self {
        Perturbation::Gaussian {
            amplitude: 0.0,
            center: 0.0,
            width: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Perturbation::Gaussian {
                amplitude,
                center,
                width,
            }
            | Perturbation::Bump {
                amplitude,
                center,
                width,
            } => {
                if !(amplitude.is_finite() && center.is_finite() && width.is_finite() && *width > 0.0) {
                    return Err(Error::InvalidParams(format!(
                        "perturbation needs finite amplitude/center and positive width, got ({amplitude}, {center}, {width})"
                    )));
                }
            }
            Perturbation::CustomTable { xi, values } => {
                if xi.len() < 2 || xi.len() != values.len() {
                    return Err(Error::InvalidParams(
                        "custom-table perturbation needs at least two (xi, value) pairs of equal length".into(),
                    ));
                }
                if xi.windows(2).any(|w| !(w[1] > w[0])) || values.iter().chain(xi).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParams(
                        "custom-table abscissae must be finite and strictly increasing".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Perturbation::Gaussian {
                amplitude,
                center,
                width,
            } => {
                let r = (x - center) / width;
                amplitude * (-r * r).exp()
            }
            Perturbation::Bump {
                amplitude,
                center,
                width,
            } => {
                let r = (x - center) / width;
                if r.abs() >= 1.0 {
                    0.0
                } else {
                    amplitude * (1.0 - 1.0 / (1.0 - r * r)).exp()
                }
            }
            Perturbation::CustomTable { xi, values } => {
                let n = xi.len();
                if x < xi[0] || x > xi[n - 1] {
                    return 0.0;
                }
                let k = xi.partition_point(|&v| v <= x).clamp(1, n - 1);
                let t = (x - xi[k - 1]) / (xi[k] - xi[k - 1]);
                values[k - 1] + t * (values[k] - values[k - 1])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    pub grid: Grid,
    pub cfl_safety: f64,
    pub t_end: f64,
    pub output_every: f64,
    pub x0: f64,
    pub perturbation: Perturbation,
    pub stabilizer: Stabilizer,
    /// Subtract the discrete residual of `U(xi - X)` from the right-hand side,
    /// making the unperturbed profile an exact discrete steady state. The
    /// correction vanishes with the truncation error of the scheme.
    pub well_balanced: bool,
    /// Keep the full field at every snapshot.
    pub store_fields: bool,
    #[serde(skip)]
    pub execution: Execution,
}

impl SolverConfig {
    /// Defaults: `cfl_safety = 0.4`, snapshots every unit of time, Gaussian
    /// perturbation `(0.1, 0, 5)`, hybrid stabilizer, well-balanced stepping.
    pub fn new(grid: Grid, t_end: f64) -> Self {
        Self {
            grid,
            cfl_safety: DEFAULT_CFL,
            t_end,
            output_every: 1.0,
            x0: 0.0,
            perturbation: Perturbation::default(),
            stabilizer: Stabilizer::default(),
            well_balanced: true,
            store_fields: false,
            execution: Execution::Auto,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "cfl_safety = {} must lie in (0, 1]",
                self.cfl_safety
            )));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(Error::InvalidParams(format!("t_end = {} must be >= 0", self.t_end)));
        }
        if !(self.output_every.is_finite() && self.output_every > 0.0) {
            return Err(Error::InvalidParams(format!(
                "output_every = {} must be positive",
                self.output_every
            )));
        }
        if !self.x0.is_finite() {
            return Err(Error::InvalidParams("x0 must be finite".into()));
        }
        self.perturbation.validate()
    }
}

/// Field and shift at one instant. `phi` is always recomputed from these.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionState {
    pub t: f64,
    pub x_shift: f64,
    pub u: Vec<f64>,
}

/// Running checks accumulated over every step of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StepMonitor {
    pub steps: u64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Largest single-step increase of `E_a`.
    pub max_positive_increment: f64,
    /// Sum of all single-step increases of `E_a`.
    pub sum_positive_increments: f64,
    /// Sum of the parts of single-step increases of `E_a` that exceed the
    /// rounding resolution of `E_a` at both ends of the step.
    pub sum_resolved_increments: f64,
    pub resolved_increment_steps: u64,
    /// Steps whose `E_a` increase exceeded `1e-7 E_a(0)`.
    pub monotonicity_breaks: u64,
    pub max_mp_violation: f64,
    pub mp_violation_steps: u64,
    /// Largest gap between the first interior cells and the far-field states.
    pub far_field_gap: f64,
    /// Steps where `|X'| > 4 max(a) ||phi||_inf / (u_- - u_+)` failed.
    pub shift_bound_breaks: u64,
    /// Time integral of `X'` by the trapezoid rule over steps.
    pub int_xdot: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub params: ShockParams,
    pub config: SolverConfig,
    pub rows: Vec<DiagnosticsRow>,
    /// Fields at each snapshot when `store_fields` is set; otherwise empty.
    pub snapshots: Vec<SolutionState>,
    pub final_state: SolutionState,
    pub monitor: StepMonitor,
    pub initial_h1_norm: f64,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn final_row(&self) -> &DiagnosticsRow {
        self.rows.last().expect("a trajectory always holds the initial row")
    }
}

/// Relative tolerance on single-step increases of `E_a`.
pub const MONOTONICITY_TOL: f64 = 1e-7;

/// Plain semidiscrete right-hand side of the moving-frame equation; zero at
/// the two Dirichlet cells.
pub fn semidiscrete_rhs(
    u: &Field,
    params: &ShockParams,
    grid: &Grid,
    stabilizer: Stabilizer,
) -> Result<Field> {
    if u.len() != grid.n {
        return Err(Error::InvalidGrid(format!(
            "field has {} values, grid has {} points",
            u.len(),
            grid.n
        )));
    }
    let ops = Operator::new(*params, *grid, stabilizer);
    let mut out = vec![0.0; grid.n];
    ops.rhs(&u.values, &mut out, 1, grid.n - 1)?;
    if let Some(i) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            t: 0.0,
            what: format!("right-hand side at cell {i}"),
        });
    }
    Ok(Field { values: out })
}

/// `X' = -4/(u_- - u_+)^2 * trapezoid(a(U(xi - X)) U_xi(xi - X) phi)`.
pub fn shift_rate(u: &[f64], x_shift: f64, profile: &ShockProfile, grid: &Grid) -> f64 {
    let n = grid.n;
    let (mut ub, mut uxi, mut ab) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let window = profile.sample_shifted(grid, x_shift, &mut ub, &mut uxi, &mut ab);
    shift_rate_sampled(u, &ub, &uxi, &ab, window, grid, profile.params.width())
}

fn shift_rate_sampled(
    u: &[f64],
    ub: &[f64],
    uxi: &[f64],
    ab: &[f64],
    window: (usize, usize),
    grid: &Grid,
    width: f64,
) -> f64 {
    let integral = window_trapezoid(window, grid, |i| ab[i] * uxi[i] * (u[i] - ub[i]));
    -4.0 / (width * width) * integral
}

/// Trapezoid rule for an integrand that vanishes outside `[lo, hi)`.
pub(crate) fn window_trapezoid(window: (usize, usize), grid: &Grid, f: impl Fn(usize) -> f64) -> f64 {
    let (lo, hi) = window;
    let mut sum = 0.0;
    for i in lo..hi {
        let w = if i == 0 || i + 1 == grid.n { 0.5 } else { 1.0 };
        sum += w * f(i);
    }
    sum * grid.dx
}

/// Flux evaluation for the conservative scheme.
#[derive(Debug, Clone)]
struct Operator {
    params: ShockParams,
    grid: Grid,
    stabilizer: Stabilizer,
    inv_dx: f64,
}

impl Operator {
    fn new(params: ShockParams, grid: Grid, stabilizer: Stabilizer) -> Self {
        Self {
            params,
            grid,
            stabilizer,
            inv_dx: 1.0 / grid.dx,
        }
    }

    /// `(f(v) - s v, |f'(v) - s|)`.
    #[inline]
    fn cell(&self, v: f64) -> Result<(f64, f64)> {
        let p = &self.params;
        if !(v > 0.0) && !p.is_integer_exponent() {
            return Err(Error::NonPositiveBase { base: v, p: p.p });
        }
        let (f, df) = p.flux_pair(v);
        Ok((f - p.s * v, (df - p.s).abs()))
    }

    /// Numerical flux between neighbouring cells.
    #[inline]
    fn face(&self, left: (f64, f64), right: (f64, f64), u_left: f64, u_right: f64) -> f64 {
        let d = self.stabilizer.coefficient(self.inv_dx, left.1.max(right.1));
        0.5 * (left.0 + right.0) - d * (u_right - u_left)
    }

    /// Flux through the face between cells `j` and `j + 1`.
    #[cfg(test)]
    fn face_at(&self, u: &[f64], j: usize) -> Result<f64> {
        Ok(self.face(self.cell(u[j])?, self.cell(u[j + 1])?, u[j], u[j + 1]))
    }

    /// Writes the right-hand side at cells `[lo, hi)` (clamped to the
    /// interior) and returns the largest `|f'(u) - s|` among the cells read.
    fn rhs(&self, u: &[f64], out: &mut [f64], lo: usize, hi: usize) -> Result<f64> {
        let n = self.grid.n;
        let lo = lo.max(1);
        let hi = hi.min(n - 1);
        if lo >= hi {
            return Ok(0.0);
        }
        let left = self.cell(u[lo - 1])?;
        let mut mid = self.cell(u[lo])?;
        let mut alpha_max = left.1.max(mid.1);
        let mut flux_left = self.face(left, mid, u[lo - 1], u[lo]);
        for (w, o) in u[lo - 1..=hi].windows(3).zip(&mut out[lo..hi]) {
            let right = self.cell(w[2])?;
            alpha_max = alpha_max.max(right.1);
            let flux_right = self.face(mid, right, w[1], w[2]);
            *o = -(flux_right - flux_left) * self.inv_dx;
            flux_left = flux_right;
            mid = right;
        }
        Ok(alpha_max)
    }
}

/// Profile samples at one shift.
#[derive(Debug, Clone)]
struct Sampled {
    x_shift: f64,
    ubar: Vec<f64>,
    ubar_xi: Vec<f64>,
    abar: Vec<f64>,
    window: (usize, usize),
    /// Discrete residual of `ubar`, nonzero only next to the window.
    residual: Vec<f64>,
}

impl Sampled {
    fn new(n: usize) -> Self {
        Self {
            x_shift: f64::NAN,
            ubar: vec![0.0; n],
            ubar_xi: vec![0.0; n],
            abar: vec![0.0; n],
            window: (0, 0),
            residual: vec![0.0; n],
        }
    }
}

/// Per-instant quantities needed at every step.
#[derive(Debug, Clone, Copy, Default)]
struct Instant {
    xdot: f64,
    e_a: f64,
    d1: f64,
    d2: f64,
    linf: f64,
    /// Rounding resolution of `e_a`.
    e_floor: f64,
}

/// Explicit RK4 stepper for the coupled `(u, X)` system.
#[derive(Debug, Clone)]
pub struct Solver<'a> {
    profile: &'a ShockProfile,
    config: SolverConfig,
    ops: Operator,
    sampled: Sampled,
    state: SolutionState,
    /// Right-hand side and shift rate at the current state; reused as the
    /// first RK stage of the next step.
    k1: Vec<f64>,
    xdot: f64,
    alpha_max: f64,
    k: [Vec<f64>; 3],
    stage: Vec<f64>,
    phi: Vec<f64>,
    /// Rounding error of the last state update, fed back into the next.
    carry: Vec<f64>,
    a_max: f64,
}

impl<'a> Solver<'a> {
    /// Starts from `U(xi - x0)` plus the configured perturbation, with the
    /// Dirichlet cells pinned to the far-field states.
    pub fn new(profile: &'a ShockProfile, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.grid;
        let mut u = vec![0.0; grid.n];
        let (mut uxi, mut a) = (vec![0.0; grid.n], vec![0.0; grid.n]);
        profile.sample_shifted(&grid, config.x0, &mut u, &mut uxi, &mut a);
        for (i, v) in u.iter_mut().enumerate() {
            *v += config.perturbation.eval(grid.xi(i));
        }
        let x0 = config.x0;
        Self::with_initial(profile, config, u, x0)
    }

    /// Starts from an explicit field; the first and last values are replaced
    /// by the far-field states.
    pub fn with_initial(
        profile: &'a ShockProfile,
        config: SolverConfig,
        mut u: Vec<f64>,
        x_shift: f64,
    ) -> Result<Self> {
        config.validate()?;
        let grid = config.grid;
        if u.len() != grid.n {
            return Err(Error::InvalidGrid(format!(
                "initial field has {} values, grid has {} points",
                u.len(),
                grid.n
            )));
        }
        let params = profile.params;
        u[0] = params.u_minus;
        u[grid.n - 1] = params.u_plus;
        if let Some(i) = u.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                t: 0.0,
                what: format!("initial field at cell {i}"),
            });
        }
        let n = grid.n;
        let a_max = profile.weights.a_plus.max(profile.weights.a_minus).max(
            profile.weights.bounds(1025).a_max,
        );
        let mut solver = Self {
            profile,
            ops: Operator::new(params, grid, config.stabilizer),
            config,
            sampled: Sampled::new(n),
            state: SolutionState {
                t: 0.0,
                x_shift,
                u,
            },
            k1: vec![0.0; n],
            xdot: 0.0,
            alpha_max: 0.0,
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            stage: vec![0.0; n],
            phi: vec![0.0; n],
            carry: vec![0.0; n],
            a_max,
        };
        let mut k1 = std::mem::take(&mut solver.k1);
        let u0 = std::mem::take(&mut solver.state.u);
        let res = solver.evaluate(&u0, x_shift, &mut k1);
        solver.state.u = u0;
        solver.k1 = k1;
        let (xdot, alpha) = res?;
        solver.xdot = xdot;
        solver.alpha_max = alpha;
        Ok(solver)
    }

    pub fn state(&self) -> &SolutionState {
        &self.state
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// Shift rate at the current state.
    pub fn shift_rate(&self) -> f64 {
        self.xdot
    }

    /// `cfl_safety * min(dx^2/2, dx / max|f'(u) - s|)` at the current state.
    pub fn stable_dt(&self) -> f64 {
        let dx = self.config.grid.dx;
        let diffusive = 0.5 * dx * dx;
        let advective = if self.alpha_max > 0.0 {
            dx / self.alpha_max
        } else {
            f64::INFINITY
        };
        self.config.cfl_safety * diffusive.min(advective)
    }

    /// `phi = u - U(xi - X)` at the current state.
    pub fn perturbation(&self) -> Vec<f64> {
        self.state
            .u
            .iter()
            .zip(&self.sampled.ubar)
            .map(|(u, b)| u - b)
            .collect()
    }

    /// Samples the profile at `x_shift` (unless cached), writes the right-hand
    /// side for `u` into `out` and returns `(X', max |f'(u) - s|)`.
    fn evaluate(&mut self, u: &[f64], x_shift: f64, out: &mut [f64]) -> Result<(f64, f64)> {
        let grid = self.config.grid;
        let n = grid.n;
        if self.sampled.x_shift.to_bits() != x_shift.to_bits() {
            let s = &mut self.sampled;
            let old = s.window;
            s.window = self
                .profile
                .sample_shifted(&grid, x_shift, &mut s.ubar, &mut s.ubar_xi, &mut s.abar);
            s.x_shift = x_shift;
            if self.config.well_balanced {
                // Outside the window the profile is exactly constant and its
                // residual is exactly zero.
                let (lo, hi) = (old.0.min(s.window.0).saturating_sub(1), (old.1.max(s.window.1) + 1).min(n));
                for r in &mut s.residual[lo..hi] {
                    *r = 0.0;
                }
                if s.window.0 < s.window.1 {
                    let lo = s.window.0.saturating_sub(1);
                    let hi = (s.window.1 + 1).min(n);
                    self.ops.rhs(&s.ubar, &mut s.residual, lo, hi)?;
                }
            }
        }
        // Cells whose stencil lies entirely in the bit-exact far field have
        // a zero right-hand side.
        let first = u.iter().position(|&v| v != u[0]).unwrap_or(n);
        let last = u.iter().rposition(|&v| v != u[n - 1]).unwrap_or(0);
        let lo = first.saturating_sub(1).max(1);
        let hi = (last + 2).min(n - 1);
        let alpha = if lo < hi {
            out[..lo].fill(0.0);
            out[hi..].fill(0.0);
            self.ops.rhs(u, out, lo, hi)?
        } else {
            out.fill(0.0);
            0.0
        };
        let alpha = alpha
            .max(self.ops.cell(u[0])?.1)
            .max(self.ops.cell(u[n - 1])?.1);
        if self.config.well_balanced {
            let (lo, hi) = self.sampled.window;
            if lo < hi {
                let lo = lo.saturating_sub(1).max(1);
                let hi = (hi + 1).min(n - 1);
                for i in lo..hi {
                    out[i] -= self.sampled.residual[i];
                }
            }
        }
        let s = &self.sampled;
        let xdot = shift_rate_sampled(
            u,
            &s.ubar,
            &s.ubar_xi,
            &s.abar,
            s.window,
            &grid,
            self.profile.params.width(),
        );
        Ok((xdot, alpha))
    }

    /// Advances one RK4 step of size `dt`.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        let t = self.state.t;
        self.try_step(dt).map_err(|e| Error::StepFailed {
            t,
            source: Box::new(e),
        })
    }

    fn try_step(&mut self, dt: f64) -> Result<()> {
        let n = self.config.grid.n;
        let x = self.state.x_shift;
        let u = std::mem::take(&mut self.state.u);
        let mut stage = std::mem::take(&mut self.stage);
        let mut k = std::mem::take(&mut self.k);
        let result = (|| -> Result<(f64, f64, f64)> {
            let half = 0.5 * dt;
            let xd1 = self.xdot;
            for i in 0..n {
                stage[i] = u[i] + half * self.k1[i];
            }
            let (xd2, _) = self.evaluate(&stage, x + half * xd1, &mut k[0])?;
            for i in 0..n {
                stage[i] = u[i] + half * k[0][i];
            }
            let (xd3, _) = self.evaluate(&stage, x + half * xd2, &mut k[1])?;
            for i in 0..n {
                stage[i] = u[i] + dt * k[1][i];
            }
            let (xd4, _) = self.evaluate(&stage, x + dt * xd3, &mut k[2])?;
            let sixth = dt / 6.0;
            let x_new = x + sixth * (xd1 + 2.0 * (xd2 + xd3) + xd4);
            Ok((x_new, xd1, xd4))
        })();
        let (x_new, _, _) = match result {
            Ok(v) => v,
            Err(e) => {
                self.k = k;
                self.state.u = u;
                self.stage = stage;
                return Err(e);
            }
        };
        // Increments far below one ulp of u would otherwise be rounded away
        // with a consistent sign and leak mass, so the update is compensated.
        let sixth = dt / 6.0;
        for i in 0..n {
            let inc = sixth * (self.k1[i] + 2.0 * (k[0][i] + k[1][i]) + k[2][i]);
            let y = inc - self.carry[i];
            let sum = u[i] + y;
            self.carry[i] = (sum - u[i]) - y;
            stage[i] = sum;
        }
        self.k = k;
        // The old field becomes scratch space for the next step.
        self.stage = u;
        self.state.u = stage;
        if let Some(i) = self.state.u.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                t: self.state.t + dt,
                what: format!("solution at cell {i}"),
            });
        }
        if !x_new.is_finite() {
            return Err(Error::NonFinite {
                t: self.state.t + dt,
                what: "shift".into(),
            });
        }
        self.state.t += dt;
        self.state.x_shift = x_new;
        let mut k1 = std::mem::take(&mut self.k1);
        let u_new = std::mem::take(&mut self.state.u);
        let res = self.evaluate(&u_new, x_new, &mut k1);
        self.state.u = u_new;
        self.k1 = k1;
        let (xdot, alpha) = res?;
        self.xdot = xdot;
        self.alpha_max = alpha;
        Ok(())
    }

    fn refresh_phi(&mut self) {
        for ((p, u), b) in self.phi.iter_mut().zip(&self.state.u).zip(&self.sampled.ubar) {
            *p = u - b;
        }
    }

    fn instant(&mut self) -> Instant {
        self.refresh_phi();
        let grid = self.config.grid;
        let s = &self.sampled;
        let phi = &self.phi;
        let e_a = functionals::weighted_energy_sampled(&s.abar, phi, &grid);
        let d1 = functionals::gradient_energy(phi, &grid);
        let d2 = window_trapezoid(s.window, &grid, |i| phi[i] * phi[i] * s.ubar_xi[i].abs());
        let (linf, l1) = phi
            .iter()
            .fold((0.0f64, 0.0), |(m, s), v| (m.max(v.abs()), s + v.abs()));
        // phi carries an absolute rounding error of about one ulp of u per cell.
        let p = &self.profile.params;
        let ulp = f64::EPSILON * p.u_minus.abs().max(p.u_plus.abs());
        let e_floor = self.a_max * ulp * (2.0 * l1 * grid.dx + ulp * 2.0 * grid.half_length);
        Instant {
            e_floor,
            xdot: self.xdot,
            e_a,
            d1,
            d2,
            linf,
        }
    }

    fn norms(&mut self) -> Norms {
        self.refresh_phi();
        functionals::norms(&self.phi, &self.config.grid)
    }

    /// `4 max(a) / (u_- - u_+)`, the constant in `|X'| <= C ||phi||_inf`.
    pub fn shift_bound_constant(&self) -> f64 {
        4.0 * self.a_max / self.profile.params.width()
    }
}

/// Runs to `t_end`, emitting a diagnostics row at `t = 0`, every
/// `output_every` and at `t_end`.
pub fn run(profile: &ShockProfile, config: &SolverConfig) -> Result<Trajectory> {
    let solver = Solver::new(profile, config.clone())?;
    drive(solver)
}

/// Same as [`run`] from an explicit initial field.
pub fn run_from(
    profile: &ShockProfile,
    config: &SolverConfig,
    u0: Vec<f64>,
    x_shift: f64,
) -> Result<Trajectory> {
    let solver = Solver::with_initial(profile, config.clone(), u0, x_shift)?;
    drive(solver)
}

fn drive(mut solver: Solver<'_>) -> Result<Trajectory> {
    let config = solver.config.clone();
    let grid = config.grid;
    let params = solver.profile.params;
    let n = grid.n;
    let width = params.width();
    let bound_c = solver.shift_bound_constant();
    let mut warnings = Vec::new();

    let reach = solver.profile.recommended_half_length(config.x0);
    if grid.half_length < reach {
        warnings.push(format!(
            "half length {} is below the recommended {reach:.2} for this profile",
            grid.half_length
        ));
    }

    let u0 = &solver.state.u;
    let lo0 = u0.iter().fold(params.u_plus, |m, &v| m.min(v));
    let hi0 = u0.iter().fold(params.u_minus, |m, &v| m.max(v));

    let norms0 = solver.norms();
    let initial_h1_norm = (norms0.l2 * norms0.l2 + norms0.h1_semi * norms0.h1_semi).sqrt();
    if initial_h1_norm > SMALLNESS_FRACTION * width {
        warnings.push(format!(
            "||phi_0||_H1 = {initial_h1_norm:.3e} exceeds {SMALLNESS_FRACTION} (u_- - u_+); the smallness hypothesis may fail"
        ));
    }

    let mut now = solver.instant();
    let e0 = now.e_a;
    let scale = if e0 > 0.0 { e0 } else { 1.0 };
    let mut monitor = StepMonitor {
        dt_min: f64::INFINITY,
        ..StepMonitor::default()
    };
    let (mut int_d1, mut int_d2, mut int_x2) = (0.0, 0.0, 0.0);
    let mut window_violation: f64 = 0.0;
    let mut rows = Vec::new();
    let mut snapshots = Vec::new();

    let emit = |solver: &mut Solver<'_>, now: &Instant, ints: (f64, f64, f64), mono: f64,
                    rows: &mut Vec<DiagnosticsRow>, snapshots: &mut Vec<SolutionState>| {
        let norms = solver.norms();
        rows.push(DiagnosticsRow {
            t: solver.state.t,
            x: solver.state.x_shift,
            xdot: now.xdot,
            e_a: now.e_a,
            l1: norms.l1,
            l2: norms.l2,
            linf: norms.linf,
            h1_semi: norms.h1_semi,
            d1: now.d1,
            d2: now.d2,
            int_d1: ints.0,
            int_d2: ints.1,
            int_xdot2: ints.2,
            mono_violation: mono,
        });
        if config.store_fields {
            snapshots.push(solver.state.clone());
        }
    };
    emit(&mut solver, &now, (0.0, 0.0, 0.0), 0.0, &mut rows, &mut snapshots);
    if now.xdot.abs() > bound_c * now.linf * (1.0 + 1e-12) {
        monitor.shift_bound_breaks += 1;
    }

    let t_end = config.t_end;
    let mut out_index: u64 = 1;
    while solver.state.t < t_end {
        let target = (out_index as f64 * config.output_every).min(t_end);
        let dt_cfl = solver.stable_dt();
        let remaining = target - solver.state.t;
        // Land exactly on output times without leaving a sliver step behind.
        let (dt, lands) = if remaining <= dt_cfl * (1.0 + 1e-9) {
            (remaining, true)
        } else if remaining < 2.0 * dt_cfl {
            (0.5 * remaining, false)
        } else {
            (dt_cfl, false)
        };
        solver.step(dt)?;
        if lands {
            solver.state.t = target;
        }
        monitor.steps += 1;
        monitor.dt_min = monitor.dt_min.min(dt);
        monitor.dt_max = monitor.dt_max.max(dt);

        let next = solver.instant();
        let inc = next.e_a - now.e_a;
        if inc > 0.0 {
            let resolved = inc - (now.e_floor + next.e_floor);
            if resolved > 0.0 {
                monitor.sum_resolved_increments += resolved;
                monitor.resolved_increment_steps += 1;
            }
            monitor.sum_positive_increments += inc;
            monitor.max_positive_increment = monitor.max_positive_increment.max(inc);
            window_violation = window_violation.max(inc / scale);
            if inc > MONOTONICITY_TOL * e0 {
                monitor.monotonicity_breaks += 1;
            }
        }
        int_d1 += 0.5 * dt * (now.d1 + next.d1);
        int_d2 += 0.5 * dt * (now.d2 + next.d2);
        int_x2 += 0.5 * dt * (now.xdot * now.xdot + next.xdot * next.xdot);
        monitor.int_xdot += 0.5 * dt * (now.xdot + next.xdot);
        if next.xdot.abs() > bound_c * next.linf * (1.0 + 1e-12) {
            monitor.shift_bound_breaks += 1;
        }

        let u = &solver.state.u;
        let (umin, umax) = u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let mp = (umax - hi0).max(lo0 - umin).max(0.0);
        if mp > MP_EPSILON {
            monitor.mp_violation_steps += 1;
        }
        monitor.max_mp_violation = monitor.max_mp_violation.max(mp);
        let gap = (u[1] - params.u_minus).abs().max((u[n - 2] - params.u_plus).abs());
        monitor.far_field_gap = monitor.far_field_gap.max(gap);
        now = next;

        if lands {
            emit(
                &mut solver,
                &now,
                (int_d1, int_d2, int_x2),
                window_violation,
                &mut rows,
                &mut snapshots,
            );
            window_violation = 0.0;
            out_index += 1;
        }
    }
    if monitor.steps == 0 {
        monitor.dt_min = 0.0;
    }
    if monitor.max_mp_violation > MP_WARNING {
        warnings.push(format!(
            "maximum principle exceeded by {:.3e}",
            monitor.max_mp_violation
        ));
    }
    if monitor.far_field_gap > FAR_FIELD_TOL {
        warnings.push(format!(
            "solution departs from the far-field states by {:.3e} next to the boundary; the domain may be too short",
            monitor.far_field_gap
        ));
    }
    Ok(Trajectory {
        params,
        config,
        rows,
        snapshots,
        final_state: solver.state.clone(),
        monitor,
        initial_h1_norm,
        warnings,
    })
}

/// Per-step behaviour of `||u - v||_L1` for two runs advanced with common
/// steps.
#[derive(Debug, Clone, Serialize)]
pub struct L1ContractionReport {
    pub steps: u64,
    pub initial: f64,
    pub final_distance: f64,
    /// Largest single-step increase of the distance (zero if it never grew).
    pub max_increase: f64,
}

/// Advances `config` and a copy perturbed by `other` instead, with the plain
/// operator (the well-balanced forcing depends on each run's own shift), for
/// `steps` steps of the smaller stable size.
pub fn l1_contraction(
    profile: &ShockProfile,
    config: &SolverConfig,
    other: &Perturbation,
    steps: u64,
) -> Result<L1ContractionReport> {
    other.validate()?;
    let mut first = config.clone();
    first.well_balanced = false;
    let mut second = first.clone();
    second.perturbation = other.clone();
    let mut a = Solver::new(profile, first)?;
    let mut b = Solver::new(profile, second)?;
    let grid = config.grid;
    let distance = |a: &Solver<'_>, b: &Solver<'_>| {
        let diff: Vec<f64> = a.state.u.iter().zip(&b.state.u).map(|(x, y)| (x - y).abs()).collect();
        grid.trapezoid(&diff)
    };
    let initial = distance(&a, &b);
    let mut prev = initial;
    let mut max_increase: f64 = 0.0;
    for _ in 0..steps {
        let dt = a.stable_dt().min(b.stable_dt());
        a.step(dt)?;
        b.step(dt)?;
        let d = distance(&a, &b);
        max_increase = max_increase.max(d - prev);
        prev = d;
    }
    Ok(L1ContractionReport {
        steps,
        initial,
        final_distance: prev,
        max_increase,
    })
}

/// Steady-profile residual study: `max |rhs(U)|` over interior cells with the
/// plain operator, at each spacing.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub params: ShockParams,
    pub half_length: f64,
    pub stabilizer: Stabilizer,
    pub dx: Vec<f64>,
    pub residual: Vec<f64>,
    /// `log2` ratios of successive residuals, normalized by the spacing ratio.
    pub orders: Vec<f64>,
    pub min_order: f64,
}

pub fn steady_residual(
    profile: &ShockProfile,
    half_length: f64,
    dx: f64,
    stabilizer: Stabilizer,
) -> Result<f64> {
    let grid = Grid::with_spacing(half_length, dx)?;
    let u = Field::from_fn(&grid, |xi| profile.eval_U(xi))?;
    let rhs = semidiscrete_rhs(&u, &profile.params, &grid, stabilizer)?;
    Ok(rhs.values.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

pub fn convergence_study(
    profile: &ShockProfile,
    half_length: f64,
    spacings: &[f64],
    stabilizer: Stabilizer,
) -> Result<ConvergenceReport> {
    if spacings.len() < 2 {
        return Err(Error::EmptyInput("need at least two spacings".into()));
    }
    let residual = spacings
        .iter()
        .map(|&dx| steady_residual(profile, half_length, dx, stabilizer))
        .collect::<Result<Vec<f64>>>()?;
    let orders: Vec<f64> = residual
        .windows(2)
        .zip(spacings.windows(2))
        .map(|(r, h)| (r[0] / r[1]).ln() / (h[0] / h[1]).ln())
        .collect();
    let min_order = orders.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(ConvergenceReport {
        params: profile.params,
        half_length,
        stabilizer,
        dx: spacings.to_vec(),
        residual,
        orders,
        min_order,
    })
}
