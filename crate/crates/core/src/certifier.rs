//! Numerical certificate that `g(U) <= -beta < 0` on `[u_+, u_-]`.
//!
//! `g` is scanned on three nested uniform grids (`N - 1`, `2(N - 1)` and
//! `4(N - 1)` intervals). Nesting makes the coarse maxima exact subsets of
//! the fine one, so `beta` can only shrink under refinement. `m`, the proof
//! inequalities, the rational/weighted cross-check and `H'(z)` are checked on
//! the base grid, away from the endpoints where they degenerate.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::params::ShockParams;
use crate::weight::WeightFunctions;

pub const DEFAULT_N: usize = 100_000;
pub const MIN_N: usize = 1_000;
/// Strict interior inequalities are checked this far (relative to the shock
/// strength) from the endpoints.
pub const INTERIOR_MARGIN: f64 = 1e-3;
/// Relative change of `g_max` allowed between the last two refinements.
pub const REFINEMENT_TOL: f64 = 1e-8;
/// `m` may dip to this value from roundoff without failing.
pub const M_FLOOR: f64 = -1e-12;
/// Largest relative gap allowed between the two closed forms of `g`.
pub const DUAL_TOL: f64 = 1e-9;

/// Smallest probe offset for the endpoint limit, relative to the local scale.
const ENDPOINT_PROBE: f64 = 1e-3;

const REFINE: usize = 2;
const CHUNK: usize = 1 << 14;

/// `H(z) = (p-1)(p-4)/4 z^p + (3p-p^2)/2 z^(p-1) + p(p-1)/4 z^(p-2) - 1`.
#[allow(non_snake_case)]
pub fn H_of_z(params: &ShockParams, z: f64) -> f64 {
    let p = params.p;
    (p - 1.0) * (p - 4.0) / 4.0 * z.powf(p) + (3.0 * p - p * p) / 2.0 * z.powf(p - 1.0)
        + p * (p - 1.0) / 4.0 * z.powf(p - 2.0)
        - 1.0
}

/// `H'(z) = p(p-1)/4 z^(p-3) [(p-4) z^2 + 2(3-p) z + (p-2)]`.
#[allow(non_snake_case)]
pub fn H_prime(params: &ShockParams, z: f64) -> f64 {
    let p = params.p;
    p * (p - 1.0) / 4.0 * z.powf(p - 3.0) * ((p - 4.0) * z * z + 2.0 * (3.0 - p) * z + (p - 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RefinementLevel {
    pub n: usize,
    pub g_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub params: ShockParams,
    pub in_hypotheses: bool,
    pub beta: f64,
    pub g_max: f64,
    pub g_argmax: f64,
    /// Minimum of `m` over interior states of the base grid.
    pub m_min: f64,
    pub m_argmin: f64,
    /// Max of `H'` over `z in (1, u_-/u_+)`; absent when `u_+ <= 0`.
    pub h_prime_max: Option<f64>,
    pub g_plus: f64,
    pub g_minus: f64,
    /// Relative gap between the endpoint formulas and the limit of the
    /// rational form, at `u_+` and `u_-`.
    pub endpoint_limit_rel_err: [f64; 2],
    pub a_min: f64,
    pub a_max: f64,
    pub dual_max_rel_diff: f64,
    pub inequalities_hold: bool,
    pub inequality_witness: Option<f64>,
    pub refinement: Vec<RefinementLevel>,
    pub refinement_converged: bool,
    pub n: usize,
    pub pass: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
struct Extremum {
    value: f64,
    at: f64,
}

impl Extremum {
    fn max_seed() -> Self {
        Self { value: f64::NEG_INFINITY, at: f64::NAN }
    }
    fn min_seed() -> Self {
        Self { value: f64::INFINITY, at: f64::NAN }
    }
    fn take_max(&mut self, value: f64, at: f64) {
        if value > self.value {
            *self = Self { value, at };
        }
    }
    fn take_min(&mut self, value: f64, at: f64) {
        if value < self.value {
            *self = Self { value, at };
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Scan {
    g_levels: [Extremum; 3],
    m_min: Extremum,
    a_min: f64,
    a_max: f64,
    h_prime_max: Extremum,
    dual: f64,
    ineq_witness: Option<f64>,
}

impl Scan {
    fn new() -> Self {
        Self {
            g_levels: [Extremum::max_seed(); 3],
            m_min: Extremum::min_seed(),
            a_min: f64::INFINITY,
            a_max: f64::NEG_INFINITY,
            h_prime_max: Extremum::max_seed(),
            dual: 0.0,
            ineq_witness: None,
        }
    }

    // Chunks are merged in index order; strict comparisons keep the first
    // extremum, matching a single sequential pass.
    fn merge(mut self, other: Scan) -> Scan {
        for (mine, theirs) in self.g_levels.iter_mut().zip(other.g_levels) {
            mine.take_max(theirs.value, theirs.at);
        }
        self.m_min.take_min(other.m_min.value, other.m_min.at);
        self.a_min = self.a_min.min(other.a_min);
        self.a_max = self.a_max.max(other.a_max);
        self.h_prime_max
            .take_max(other.h_prime_max.value, other.h_prime_max.at);
        self.dual = self.dual.max(other.dual);
        self.ineq_witness = self.ineq_witness.or(other.ineq_witness);
        self
    }
}

pub fn certify(params: &ShockParams, n: usize) -> Result<CertificateReport> {
    certify_with(params, n, Execution::Sequential)
}

pub fn certify_with(params: &ShockParams, n: usize, exec: Execution) -> Result<CertificateReport> {
    if n < MIN_N {
        return Err(Error::InvalidParams(format!(
            "grid size {n} below minimum {MIN_N}"
        )));
    }
    let weights = WeightFunctions::new(*params)?;
    let (up, um) = (params.u_plus, params.u_minus);
    let width = params.width();
    let coarse = n - 1;
    let fine = coarse * REFINE * REFINE;
    let margin = INTERIOR_MARGIN * width;
    let check_h = up > 0.0;

    let scan_range = |range: &(usize, usize)| -> Scan {
        let mut scan = Scan::new();
        for j in range.0..range.1 {
            let u = if j == fine {
                um
            } else {
                up + width * (j as f64 / fine as f64)
            };
            let c = weights.local(u);
            let g = weights.g_blended(&c);
            scan.g_levels[2].take_max(g, u);
            if j % REFINE == 0 {
                scan.g_levels[1].take_max(g, u);
            }
            if j % (REFINE * REFINE) == 0 {
                scan.g_levels[0].take_max(g, u);
            }
            scan.a_min = scan.a_min.min(c.a);
            scan.a_max = scan.a_max.max(c.a);
            if j == 0 || j == fine || j % (REFINE * REFINE) != 0 {
                continue;
            }
            scan.m_min.take_min(weights.m_local(&c), u);
            if u - up <= margin || um - u <= margin {
                continue;
            }
            let gr = weights.g_rational(&c);
            scan.dual = scan.dual.max((g - gr).abs() / g.abs().max(f64::MIN_POSITIVE));
            let r = weights.inequalities(&c);
            if scan.ineq_witness.is_none()
                && !(r.h_minus < 0.0 && r.h_plus < 0.0 && r.product > 0.0 && r.m_margin > 0.0)
            {
                scan.ineq_witness = Some(u);
            }
            if check_h {
                scan.h_prime_max.take_max(H_prime(params, u / up), u);
            }
        }
        scan
    };

    let chunks: Vec<(usize, usize)> = (0..=fine)
        .step_by(CHUNK)
        .map(|lo| (lo, (lo + CHUNK).min(fine + 1)))
        .collect();
    let scan = exec
        .map(&chunks, scan_range)
        .into_iter()
        .fold(Scan::new(), Scan::merge);

    let refinement: Vec<RefinementLevel> = [coarse, coarse * REFINE, fine]
        .iter()
        .zip(scan.g_levels.iter())
        .map(|(&intervals, e)| RefinementLevel {
            n: intervals + 1,
            g_max: e.value,
        })
        .collect();
    let g_max = scan.g_levels[2].value;
    let refinement_converged =
        (refinement[2].g_max - refinement[1].g_max).abs() < REFINEMENT_TOL * g_max.abs();

    let g_plus = weights.g_at_plus();
    let g_minus = weights.g_at_minus();
    let endpoint_limit_rel_err = [
        endpoint_limit(&weights, up, 1.0, g_plus),
        endpoint_limit(&weights, um, -1.0, g_minus),
    ];

    let in_hypotheses = params.in_hypotheses();
    let h_prime_max = check_h.then_some(scan.h_prime_max.value);
    let h_ok = !(in_hypotheses && check_h) || scan.h_prime_max.value < 0.0;
    let pass = g_max < 0.0 && scan.m_min.value >= M_FLOOR && h_ok;

    let mut warnings = Vec::new();
    if !in_hypotheses {
        warnings.push(format!(
            "p = {} lies outside [2, 4]; the contraction theorem does not cover these parameters",
            params.p
        ));
    }
    if !refinement_converged {
        warnings.push(format!(
            "g_max changed by {:e} between the last two refinements",
            (refinement[2].g_max - refinement[1].g_max).abs()
        ));
    }

    let report = CertificateReport {
        params: *params,
        in_hypotheses,
        beta: -g_max,
        g_max,
        g_argmax: scan.g_levels[2].at,
        m_min: scan.m_min.value,
        m_argmin: scan.m_min.at,
        h_prime_max,
        g_plus,
        g_minus,
        endpoint_limit_rel_err,
        a_min: scan.a_min,
        a_max: scan.a_max,
        dual_max_rel_diff: scan.dual,
        inequalities_hold: scan.ineq_witness.is_none(),
        inequality_witness: scan.ineq_witness,
        refinement,
        refinement_converged,
        n,
        pass,
        warnings,
    };

    if pass {
        return Ok(report);
    }
    let (witness, reason) = if g_max >= 0.0 {
        (report.g_argmax, format!("g = {g_max:e} >= 0"))
    } else if report.m_min < M_FLOOR {
        (report.m_argmin, format!("m = {:e} < 0", report.m_min))
    } else {
        (
            scan.h_prime_max.at,
            format!("H' = {:e} >= 0", scan.h_prime_max.value),
        )
    };
    Err(Error::CertificationFailed {
        p: params.p,
        u_minus: params.u_minus,
        u_plus: params.u_plus,
        witness,
        reason,
        report: Box::new(report),
    })
}

/// Relative gap between an endpoint formula and the limit of the rational
/// form approaching that endpoint. The limit is a cubic extrapolation to zero
/// offset through four offsets scaled to the endpoint's own curvature scale,
/// which is `|u|` near `u = 0` for power fluxes.
fn endpoint_limit(weights: &WeightFunctions, end: f64, dir: f64, formula: f64) -> f64 {
    let width = weights.params.width();
    let scale = if end != 0.0 { width.min(end.abs()) } else { width };
    let e0 = ENDPOINT_PROBE * scale;
    let offsets: [f64; 4] = [e0, 2.0 * e0, 4.0 * e0, 8.0 * e0];
    let mut vals = offsets.map(|e| weights.g_rational(&weights.local(end + dir * e)));
    // Neville's scheme evaluated at zero offset.
    for level in 1..vals.len() {
        for i in (level..vals.len()).rev() {
            let (xa, xb) = (offsets[i - level], offsets[i]);
            vals[i] = (xb * vals[i - 1] - xa * vals[i]) / (xb - xa);
        }
    }
    (vals[3] - formula).abs() / formula.abs()
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepFailure {
    pub p: f64,
    pub u_minus: f64,
    pub u_plus: f64,
    pub witness: f64,
    pub reason: String,
    pub in_hypotheses: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepOutcome {
    pub reports: Vec<CertificateReport>,
    pub failures: Vec<SweepFailure>,
}

impl SweepOutcome {
    pub fn all_pass(&self) -> bool {
        self.failures.is_empty()
    }

    /// Failures for parameters the theorem actually covers.
    pub fn failures_within_hypotheses(&self) -> usize {
        self.failures.iter().filter(|f| f.in_hypotheses).count()
    }
}

/// Certifies every `(p, (u_minus, u_plus))` combination. Certification
/// failures are collected, not propagated; reports come back sorted by
/// `(p, u_minus - u_plus)` whatever the execution order.
pub fn sweep(
    p_list: &[f64],
    pairs: &[(f64, f64)],
    n: usize,
    allow_outside_hypotheses: bool,
    exec: Execution,
) -> Result<SweepOutcome> {
    if p_list.is_empty() {
        return Err(Error::EmptyInput("p_list".into()));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyInput("state pairs".into()));
    }
    let mut jobs = Vec::with_capacity(p_list.len() * pairs.len());
    for &p in p_list {
        for &(um, up) in pairs {
            let params = if allow_outside_hypotheses {
                ShockParams::exploratory(p, um, up)?
            } else {
                ShockParams::new(p, um, up)?
            };
            jobs.push(params);
        }
    }
    jobs.sort_by(|a, b| a.p.total_cmp(&b.p).then(a.width().total_cmp(&b.width())));

    let results = exec.map(&jobs, |params| certify_with(params, n, Execution::Sequential));
    let mut reports = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for result in results {
        match result {
            Ok(report) => reports.push(report),
            Err(Error::CertificationFailed {
                witness,
                reason,
                report,
                ..
            }) => {
                failures.push(SweepFailure {
                    p: report.params.p,
                    u_minus: report.params.u_minus,
                    u_plus: report.params.u_plus,
                    witness,
                    reason,
                    in_hypotheses: report.in_hypotheses,
                });
                reports.push(*report);
            }
            Err(other) => return Err(other),
        }
    }
    Ok(SweepOutcome { reports, failures })
}

/// `count` seeded pairs `(u_minus, u_plus)` with `0 < u_plus < u_minus <= upper`.
pub fn random_pairs(seed: u64, count: usize, upper: f64) -> Vec<(f64, f64)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(count);
    while pairs.len() < count {
        let a: f64 = upper * (1.0 - rng.gen::<f64>());
        let b: f64 = upper * (1.0 - rng.gen::<f64>());
        if a == b {
            continue;
        }
        pairs.push((a.max(b), a.min(b)));
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn h_examples() {
        for p in [2.0, 2.5, 3.0, 3.7, 4.0] {
            let params = ShockParams::new(p, 2.0, 1.0).unwrap();
            assert!(H_of_z(&params, 1.0).abs() < 1e-15);
        }
        let p2 = ShockParams::new(2.0, 3.0, 1.0).unwrap();
        // bracket -2z^2 + 2z = -4 at z = 2, prefactor (1/2) 2^-1
        assert!((H_prime(&p2, 2.0) + 1.0).abs() < 1e-15);
        let p4 = ShockParams::new(4.0, 3.0, 1.0).unwrap();
        for z in [1.01, 1.5, 2.9] {
            assert!(H_prime(&p4, z) < 0.0);
            assert!((H_prime(&p4, z) - 3.0 * z * (2.0 - 2.0 * z)).abs() < 1e-12);
        }
    }

    #[test]
    fn h_prime_matches_difference_quotient() {
        let params = ShockParams::new(2.7, 5.0, 1.0).unwrap();
        for z in [1.2, 2.0, 4.5] {
            let fd = (H_of_z(&params, z + 1e-6) - H_of_z(&params, z - 1e-6)) / 2e-6;
            assert!((fd - H_prime(&params, z)).abs() < 1e-7);
        }
    }

    #[test]
    fn burgers_certificate() {
        let report = certify(&ShockParams::new(2.0, 2.0, 1.0).unwrap(), 1000).unwrap();
        assert!(report.pass);
        assert!((report.beta - 1.0).abs() < 1e-12);
        let negative = certify(&ShockParams::new(2.0, 1.0, -1.0).unwrap(), 1000).unwrap();
        assert!(negative.pass);
        assert!((negative.beta - 2.0).abs() < 1e-12);
        assert!(negative.h_prime_max.is_none());
    }

    #[test]
    fn cubic_endpoint_values() {
        let report = certify(&ShockParams::new(3.0, 2.0, 1.0).unwrap(), 1000).unwrap();
        assert!((report.g_plus + 20.0).abs() < 1e-12);
        assert!((report.g_minus + 20.0).abs() < 1e-12);
        assert!(report.pass && report.inequalities_hold);
        assert!(report.endpoint_limit_rel_err.iter().all(|&e| e < 1e-6));
        assert!((report.a_min - 4.0).abs() < 1e-12 && (report.a_max - 5.0).abs() < 1e-12);
    }

    #[test]
    fn beta_is_monotone_under_refinement() {
        for (p, um, up) in [(2.5, 7.0, 0.3), (3.5, 4.0, 2.0), (4.0, 9.0, 0.1)] {
            let r = certify(&ShockParams::new(p, um, up).unwrap(), 1000).unwrap();
            let betas: Vec<f64> = r.refinement.iter().map(|l| -l.g_max).collect();
            assert!(betas[2] <= betas[1] + 1e-8 && betas[1] <= betas[0] + 1e-8);
            assert!(r.endpoint_limit_rel_err.iter().all(|&e| e < 1e-6), "{:?}", r.endpoint_limit_rel_err);
        }
    }

    #[test]
    fn sweep_sorts_and_flags() {
        let out = sweep(
            &[3.0, 2.0],
            &[(5.0, 1.0), (2.0, 1.0)],
            1000,
            false,
            Execution::Auto,
        )
        .unwrap();
        let keys: Vec<(f64, f64)> = out.reports.iter().map(|r| (r.params.p, r.params.width())).collect();
        assert_eq!(keys, vec![(2.0, 1.0), (2.0, 4.0), (3.0, 1.0), (3.0, 4.0)]);
        assert!(out.all_pass());
        assert!(matches!(
            sweep(&[], &[(2.0, 1.0)], 1000, false, Execution::Auto),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn out_of_range_exponent_carries_warning() {
        assert!(sweep(&[5.0], &[(2.0, 1.0)], 1000, false, Execution::Auto).is_err());
        let out = sweep(&[5.0], &[(2.0, 1.0)], 1000, true, Execution::Auto).unwrap();
        let report = &out.reports[0];
        assert!(!report.in_hypotheses);
        assert!(report.warnings.iter().any(|w| w.contains("outside")));
        assert_eq!(out.failures_within_hypotheses(), 0);
    }

    #[test]
    fn parallel_and_sequential_reports_match() {
        let params = ShockParams::new(3.5, 6.0, 0.5).unwrap();
        let a = certify_with(&params, 20_000, Execution::Sequential).unwrap();
        let b = certify_with(&params, 20_000, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn random_pairs_are_ordered_and_bounded() {
        let pairs = random_pairs(3, 200, 10.0);
        assert_eq!(pairs, random_pairs(3, 200, 10.0));
        assert!(pairs.iter().all(|&(um, up)| 0.0 < up && up < um && um <= 10.0));
    }
}
