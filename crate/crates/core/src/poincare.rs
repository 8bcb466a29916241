//! Weighted Poincare inequality on `[0, 1]`:
//! `int |f - mean f|^2 <= (1/2) int y (1 - y) |f'|^2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;

pub const DEFAULT_POINTS: usize = 65_537;
pub const MIN_POINTS: usize = 64;
/// Gaps below this fail the battery.
pub const GAP_TOLERANCE: f64 = -1e-9;
/// Cases with `gap < NEAR_EQUALITY * rhs` are reported as near-equality.
pub const NEAR_EQUALITY: f64 = 1e-3;
pub const MIN_KNOTS: usize = 8;
pub const MAX_KNOTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoincareGap {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// Continuous piecewise-linear function through `(knots[k], values[k])`,
/// with `knots` strictly increasing from 0 to 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseLinear {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 || knots.len() != values.len() {
            return Err(Error::InvalidParams(
                "piecewise-linear function needs at least two knots and one value per knot".into(),
            ));
        }
        if knots[0] != 0.0 || knots[knots.len() - 1] != 1.0 {
            return Err(Error::InvalidParams("knots must start at 0 and end at 1".into()));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(
                "knots must increase strictly and values must be finite".into(),
            ));
        }
        Ok(Self { knots, values })
    }

    pub fn identity() -> Self {
        Self {
            knots: vec![0.0, 1.0],
            values: vec![0.0, 1.0],
        }
    }

    /// `lambda f + c`.
    pub fn affine(&self, lambda: f64, c: f64) -> Self {
        Self {
            knots: self.knots.clone(),
            values: self.values.iter().map(|v| lambda * v + c).collect(),
        }
    }

    /// Random function with 8 to 64 knots and values in `[-1, 1]`.
    pub fn random(rng: &mut impl Rng) -> Self {
        let count = rng.gen_range(MIN_KNOTS..=MAX_KNOTS);
        let mut knots: Vec<f64> = (0..count - 2).map(|_| rng.gen_range(0.0..1.0)).collect();
        knots.push(0.0);
        knots.push(1.0);
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        let values = (0..knots.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        Self { knots, values }
    }
}

/// Integrates over the union of a uniform `n`-point mesh and the knots. Each
/// mesh interval lies inside one linear piece, where both integrands are
/// quadratic, so Simpson's rule per interval is exact and the only error left
/// is rounding. `f'` is the exact slope of each piece.
pub fn poincare_gap(f: &PiecewiseLinear, n: usize) -> Result<PoincareGap> {
    if n < MIN_POINTS {
        return Err(Error::InvalidParams(format!(
            "need at least {MIN_POINTS} quadrature points, got {n}"
        )));
    }
    let k = &f.knots;
    let v = &f.values;
    let uniform = |j: usize| if j + 1 == n { 1.0 } else { j as f64 / (n - 1) as f64 };
    // (y0, y1, f0, f1, slope) per mesh interval.
    let mut cells: Vec<(f64, f64, f64, f64, f64)> = Vec::with_capacity(n + k.len());
    let mut piece = 0usize;
    let mut next_uniform = 1usize;
    let (mut y0, mut f0) = (0.0, v[0]);
    while y0 < 1.0 {
        let knot = k[piece + 1];
        let grid = uniform(next_uniform);
        let y1 = knot.min(grid);
        let slope = (v[piece + 1] - v[piece]) / (knot - k[piece]);
        let f1 = if y1 == knot {
            v[piece + 1]
        } else {
            v[piece] + slope * (y1 - k[piece])
        };
        cells.push((y0, y1, f0, f1, slope));
        if grid <= knot {
            next_uniform += 1;
        }
        if y1 == knot {
            piece += 1;
        }
        y0 = y1;
        f0 = f1;
    }
    let simpson = |a: f64, m: f64, b: f64, h: f64| h / 6.0 * (a + 4.0 * m + b);
    let mean: f64 = cells.iter().map(|c| 0.5 * (c.1 - c.0) * (c.2 + c.3)).sum();
    let mut lhs = 0.0;
    let mut weighted = 0.0;
    for &(y0, y1, f0, f1, slope) in &cells {
        let h = y1 - y0;
        let (a, b) = (f0 - mean, f1 - mean);
        let m = 0.5 * (a + b);
        lhs += simpson(a * a, m * m, b * b, h);
        let ym = 0.5 * (y0 + y1);
        weighted += slope * slope * simpson(y0 * (1.0 - y0), ym * (1.0 - ym), y1 * (1.0 - y1), h);
    }
    let rhs = 0.5 * weighted;
    Ok(PoincareGap {
        lhs,
        rhs,
        gap: rhs - lhs,
    })
}

/// Same quantities for a smooth `f`, with `f'` by centered differences on a
/// uniform `n`-point mesh (one-sided at the ends).
pub fn poincare_gap_smooth(f: impl Fn(f64) -> f64, n: usize) -> Result<PoincareGap> {
    if n < MIN_POINTS {
        return Err(Error::InvalidParams(format!(
            "need at least {MIN_POINTS} quadrature points, got {n}"
        )));
    }
    let h = 1.0 / (n - 1) as f64;
    let ys: Vec<f64> = (0..n).map(|j| if j + 1 == n { 1.0 } else { j as f64 * h }).collect();
    let fs: Vec<f64> = ys.iter().map(|&y| f(y)).collect();
    let trap = |g: &dyn Fn(usize) -> f64| {
        let mut s = 0.5 * (g(0) + g(n - 1));
        for j in 1..n - 1 {
            s += g(j);
        }
        s * h
    };
    let mean = trap(&|j| fs[j]);
    let lhs = trap(&|j| (fs[j] - mean).powi(2));
    let deriv = |j: usize| {
        if j == 0 {
            (fs[1] - fs[0]) / h
        } else if j + 1 == n {
            (fs[n - 1] - fs[n - 2]) / h
        } else {
            (fs[j + 1] - fs[j - 1]) / (2.0 * h)
        }
    };
    let rhs = 0.5 * trap(&|j| ys[j] * (1.0 - ys[j]) * deriv(j).powi(2));
    Ok(PoincareGap {
        lhs,
        rhs,
        gap: rhs - lhs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatteryCase {
    pub index: usize,
    pub gap: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatteryReport {
    pub count: usize,
    pub points: usize,
    pub min_gap: f64,
    pub min_gap_index: usize,
    pub near_equality: Vec<BatteryCase>,
    pub failures: Vec<BatteryCase>,
    pub pass: bool,
}

/// Evaluates every function; fails with the first witness below the tolerance.
pub fn run_battery(functions: &[PiecewiseLinear], n: usize, exec: Execution) -> Result<BatteryReport> {
    if functions.is_empty() {
        return Err(Error::EmptyInput("Poincare battery needs at least one function".into()));
    }
    let gaps = exec
        .map(functions, |f| poincare_gap(f, n))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut min_gap = f64::INFINITY;
    let mut min_gap_index = 0;
    let mut near_equality = Vec::new();
    let mut failures = Vec::new();
    for (index, g) in gaps.iter().enumerate() {
        if g.gap < min_gap {
            min_gap = g.gap;
            min_gap_index = index;
        }
        let case = BatteryCase {
            index,
            gap: g.gap,
            rhs: g.rhs,
        };
        if g.gap < GAP_TOLERANCE {
            failures.push(case.clone());
        }
        if g.gap < NEAR_EQUALITY * g.rhs {
            near_equality.push(case);
        }
    }
    let report = BatteryReport {
        count: functions.len(),
        points: n,
        min_gap,
        min_gap_index,
        near_equality,
        pass: failures.is_empty(),
        failures,
    };
    if let Some(first) = report.failures.first() {
        let witness = serde_json::to_string(&functions[first.index]).unwrap_or_default();
        return Err(Error::BatteryFailure {
            gap: first.gap,
            witness,
        });
    }
    Ok(report)
}

/// `count` seeded random piecewise-linear functions.
pub fn random_battery(count: usize, seed: u64) -> Vec<PiecewiseLinear> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| PiecewiseLinear::random(&mut rng)).collect()
}

pub fn poincare_battery(count: usize, seed: u64, n: usize, exec: Execution) -> Result<BatteryReport> {
    if count == 0 {
        return Err(Error::EmptyInput("Poincare battery needs count >= 1".into()));
    }
    run_battery(&random_battery(count, seed), n, exec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_have_zero_gap() {
        let f = PiecewiseLinear::new(vec![0.0, 0.3, 1.0], vec![7.0, 7.0, 7.0]).unwrap();
        let g = poincare_gap(&f, 1025).unwrap();
        assert!(g.lhs.abs() < 1e-24 && g.rhs == 0.0);
    }

    #[test]
    fn identity_is_equality_case() {
        let g = poincare_gap(&PiecewiseLinear::identity(), DEFAULT_POINTS).unwrap();
        assert!((g.lhs - 1.0 / 12.0).abs() < 1e-10);
        assert!((g.rhs - 1.0 / 12.0).abs() < 1e-10);
        assert!(g.gap.abs() <= 1e-10);
        let s = poincare_gap_smooth(|y| y, DEFAULT_POINTS).unwrap();
        assert!(s.gap.abs() <= 1e-10);
    }

    #[test]
    fn square_case() {
        let g = poincare_gap_smooth(|y| y * y, DEFAULT_POINTS).unwrap();
        assert!((g.lhs - 4.0 / 45.0).abs() < 1e-8);
        assert!((g.rhs - 0.1).abs() < 1e-8);
        assert!((g.gap - 1.0 / 90.0).abs() < 1e-8);
    }

    #[test]
    fn scale_and_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let f = PiecewiseLinear::random(&mut rng);
            let g = poincare_gap(&f, 4097).unwrap().gap;
            for lambda in [2.0, -3.0] {
                let gl = poincare_gap(&f.affine(lambda, 0.0), 4097).unwrap().gap;
                assert!((gl - lambda * lambda * g).abs() < 1e-12 * (1.0 + gl.abs()));
            }
            let gs = poincare_gap(&f.affine(1.0, 0.75), 4097).unwrap().gap;
            assert!((gs - g).abs() < 1e-12 * (1.0 + g.abs()));
        }
    }

    #[test]
    fn battery_reports_identity_as_near_equality() {
        let mut fs = random_battery(20, 1);
        fs.insert(0, PiecewiseLinear::identity());
        let r = run_battery(&fs, 4097, Execution::Auto).unwrap();
        assert!(r.pass);
        assert!(r.near_equality.iter().any(|c| c.index == 0));
    }

    #[test]
    fn empty_battery_is_an_error() {
        assert!(matches!(
            poincare_battery(0, 42, 1025, Execution::Auto),
            Err(Error::EmptyInput(_))
        ));
        assert!(poincare_gap(&PiecewiseLinear::identity(), 10).is_err());
    }

    #[test]
    fn random_knots_are_valid() {
        for f in random_battery(200, 5) {
            assert!(PiecewiseLinear::new(f.knots.clone(), f.values.clone()).is_ok());
            assert!(f.knots.len() >= 2 && f.knots.len() <= MAX_KNOTS);
        }
    }
}
