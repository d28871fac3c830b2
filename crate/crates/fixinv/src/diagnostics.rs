//! Metrics and theorem verification.
//!
//! Everything the convergence analysis promises is checked here as a
//! numeric inequality with explicit slack: the per-step cocoercivity
//! descent of the forward step method, the inertial Lyapunov chain with its
//! `epsilon` margin and `min ||T y^k||^2` rate bound, the identity
//! composite of optimal linear autoencoders, and the cocoercivity ratio
//! scan used to probe pairs whose constant is not known analytically.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{FixinvError, Result};
use crate::models::cocoercivity_constant;
use crate::operators::{OperatorPair, PrecisionMode, Vector};
use crate::solvers::{IterateTrace, Method, SolverConfig};

/// Ratios with a squared denominator under this floor are excluded from a
/// scan and counted separately; the ratio is undefined at exact
/// convergence.
const SCAN_DENOMINATOR_FLOOR: f64 = 1e-20;

/// Slack allowed when checking theorem inequalities in floating point.
pub const THEOREM_SLACK: f64 = 1e-9;

/// NMSE floor; exact reconstruction has no finite dB value.
const NMSE_FLOOR_DB: f64 = -300.0;

// ---------------------------------------------------------------------------
// NMSE
// ---------------------------------------------------------------------------

/// `10 log10(||z_est - z_ref||^2 / ||z_ref||^2)`, clamped at -300 dB.
pub fn nmse_db(z_est: &Vector, z_ref: &Vector) -> Result<f64> {
    if z_est.dim() != z_ref.dim() {
        return Err(FixinvError::DimensionMismatch {
            context: "nmse",
            expected: z_ref.dim(),
            got: z_est.dim(),
        });
    }
    let ref_sq = z_ref.norm_sq();
    if ref_sq == 0.0 {
        return Err(FixinvError::ZeroReference);
    }
    let err_sq = z_est.sub(z_ref).norm_sq();
    if err_sq == 0.0 {
        return Ok(NMSE_FLOOR_DB);
    }
    Ok((10.0 * (err_sq / ref_sq).log10()).max(NMSE_FLOOR_DB))
}

// ---------------------------------------------------------------------------
// Cocoercivity scan
// ---------------------------------------------------------------------------

/// Per-trajectory cocoercivity probe:
/// `<E D z^inf - E D z^k, z^inf - z^k> / ||E D z^inf - E D z^k||^2`
/// for `k` in `[0, K_short]`, against a reference iterate `z^inf` taken
/// from an extended run.
#[derive(Clone, Debug, Serialize)]
pub struct CocoercivityScan {
    /// Included per-step ratios, in step order.
    pub ratios: Vec<f64>,
    /// Steps dropped because the denominator fell under the floor.
    pub excluded_steps: usize,
    pub min_ratio: Option<f64>,
    /// `z^inf`, by convention the iterate of a run roughly three times the
    /// scan window.
    pub reference_iterate: Vector,
    /// `||z^{K_short} - z^inf||`.
    pub convergence_norm: f64,
}

pub fn cocoercivity_scan(
    pair: &OperatorPair,
    trace: &IterateTrace,
    z_inf: &Vector,
    window: usize,
) -> Result<CocoercivityScan> {
    let iterates = trace.iterates.as_ref().ok_or(FixinvError::TraceTooShort {
        needed: window + 1,
        got: 0,
    })?;
    if iterates.len() < window + 1 {
        return Err(FixinvError::TraceTooShort {
            needed: window + 1,
            got: iterates.len(),
        });
    }
    let ed = |z: &Vector| -> Result<Vector> {
        let decoded = pair.decode(z, PrecisionMode::Full)?;
        pair.encode(&decoded, PrecisionMode::Full)
    };
    let ed_inf = ed(z_inf)?;
    let mut ratios = Vec::with_capacity(window + 1);
    let mut excluded = 0;
    for z_k in iterates.iter().take(window + 1) {
        let ed_k = ed(z_k)?;
        let num = ed_inf.sub(&ed_k).dot(&z_inf.sub(z_k));
        let den = ed_inf.sub(&ed_k).norm_sq();
        if den < SCAN_DENOMINATOR_FLOOR {
            excluded += 1;
        } else {
            ratios.push(num / den);
        }
    }
    let min_ratio = ratios.iter().copied().reduce(f64::min);
    Ok(CocoercivityScan {
        ratios,
        excluded_steps: excluded,
        min_ratio,
        reference_iterate: z_inf.clone(),
        convergence_norm: iterates[window].sub(z_inf).norm(),
    })
}

// ---------------------------------------------------------------------------
// Theorem reports
// ---------------------------------------------------------------------------

/// Forward-step descent: for every step with `0 < rho_k < 2 beta`,
/// `||z^{k+1} - z*||^2 <= ||z^k - z*||^2 - rho_k (2 beta - rho_k) ||T z^k||^2`.
#[derive(Clone, Debug, Serialize)]
pub struct Theorem1Check {
    pub per_step_descent_ok: bool,
    /// Largest violation of the descent inequality (negative means slack to
    /// spare).
    pub worst_slack: f64,
    pub residual_final: f64,
    pub steps_checked: usize,
    /// Steps skipped because the scheduled rate left `(0, 2 beta)`.
    pub steps_skipped: usize,
}

/// Inertial-KM conclusions: the step condition, the per-step Lyapunov
/// descent `C^{k+1} + nu a ||z^{k+1}-2z^k+z^{k-1}||^2 + eps ||z^k-z^{k-1}||^2
/// <= C^k`, and the rate bound
/// `min_{1<=k<=n} ||T y^k||^2 <= (1+a)^2 ||z^1-z*||^2 / (eps rho^2 n)`.
#[derive(Clone, Debug, Serialize)]
pub struct Theorem2Check {
    pub alpha: f64,
    pub rho: f64,
    pub lambda: f64,
    pub nu: f64,
    pub epsilon: f64,
    /// `lambda (1 - alpha + 2 alpha^2) < (1 - alpha)^2`
    pub condition10_ok: bool,
    pub lyapunov_descent_ok: bool,
    pub worst_lyapunov_slack: f64,
    pub bound_b_ok: bool,
    pub worst_bound_b_slack: f64,
    /// `(1 + alpha)^2 / (epsilon rho^2)`
    pub m_constant: f64,
    /// Spread of `||z^k - z*||` over the trailing tenth of the run; small
    /// values indicate the distance limit has stabilized.
    pub limit_exists_estimate: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Remark2Check {
    pub max_dev_from_identity: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TheoremReport {
    pub theorem1: Option<Theorem1Check>,
    pub theorem2: Option<Theorem2Check>,
    pub remark2: Option<Remark2Check>,
}

/// Max-entry deviation of the composite `E*D` from the identity.
pub fn remark2_check(pair: &OperatorPair) -> Result<f64> {
    let m = pair.composite().ok_or(FixinvError::NotLinear)?;
    let mut worst: f64 = 0.0;
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let target = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((m[(r, c)] - target).abs());
        }
    }
    Ok(worst)
}

/// Direct linear-system oracle for the residual zero: solves
/// `(E D) z = E x`. This is the reference the iterative routes are checked
/// against, so it never goes through them.
pub fn linear_fixed_point(pair: &OperatorPair, x: &Vector) -> Result<Vector> {
    let m = pair.composite().ok_or(FixinvError::NotLinear)?.clone();
    let target = pair.encode(x, PrecisionMode::Full)?;
    let rhs = nalgebra::DVector::from_column_slice(target.as_slice());
    let solution = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| FixinvError::OracleUnavailable("singular composite".into()))?;
    Ok(Vector::new(solution.iter().copied().collect()))
}

/// Evaluates every theorem inequality the trace's method is subject to.
/// Requires a full-level trace and a pair with a known cocoercivity
/// constant.
pub fn theorem_report(
    pair: &OperatorPair,
    trace: &IterateTrace,
    cfg: &SolverConfig,
    z_star: &Vector,
) -> Result<TheoremReport> {
    let beta = cocoercivity_constant(pair).ok_or_else(|| {
        FixinvError::OracleUnavailable(
            "cocoercivity constant unknown; theorem checks need a linear composite".into(),
        )
    })?;
    let iterates = trace.iterates.as_ref().ok_or(FixinvError::TraceTooShort {
        needed: 2,
        got: 0,
    })?;
    if iterates.len() < 2 {
        return Err(FixinvError::TraceTooShort {
            needed: 2,
            got: iterates.len(),
        });
    }

    let dist_sq: Vec<f64> = iterates.iter().map(|z| z.sub(z_star).norm_sq()).collect();

    let theorem1 = match cfg.method {
        Method::ForwardStep => Some(check_theorem1(trace, cfg, beta, &dist_sq)),
        _ => None,
    };
    let theorem2 = match cfg.method {
        Method::InertialKm { alpha, rho } => {
            Some(check_theorem2(trace, alpha, rho, beta, &dist_sq, iterates, z_star))
        }
        _ => None,
    };
    let remark2 = remark2_check(pair).ok().map(|d| Remark2Check {
        max_dev_from_identity: d,
    });

    Ok(TheoremReport {
        theorem1,
        theorem2,
        remark2,
    })
}

fn check_theorem1(
    trace: &IterateTrace,
    cfg: &SolverConfig,
    beta: f64,
    dist_sq: &[f64],
) -> Theorem1Check {
    let steps = dist_sq.len() - 1;
    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0;
    let mut skipped = 0;
    for k in 0..steps.min(trace.residual_norms.len()) {
        let rho = cfg.schedule.lr_clamped(k + 1);
        if !(rho > 0.0 && rho < 2.0 * beta) {
            skipped += 1;
            continue;
        }
        let t_sq = trace.residual_norms[k] * trace.residual_norms[k];
        let slack = dist_sq[k + 1] - dist_sq[k] + rho * (2.0 * beta - rho) * t_sq;
        worst = worst.max(slack);
        checked += 1;
    }
    if checked == 0 {
        worst = 0.0;
    }
    Theorem1Check {
        per_step_descent_ok: worst <= THEOREM_SLACK,
        worst_slack: worst,
        residual_final: trace.residual_norms.last().copied().unwrap_or(f64::NAN),
        steps_checked: checked,
        steps_skipped: skipped,
    }
}

#[allow(clippy::too_many_arguments)]
fn check_theorem2(
    trace: &IterateTrace,
    alpha: f64,
    rho: f64,
    beta: f64,
    dist_sq: &[f64],
    iterates: &[Vector],
    z_star: &Vector,
) -> Theorem2Check {
    let lambda = rho / (2.0 * beta);
    let nu = 1.0 / lambda - 1.0;
    let epsilon = nu * (1.0 - alpha) - alpha * (1.0 + alpha) - nu * alpha * (1.0 - alpha);
    let condition10_ok = lambda * (1.0 - alpha + 2.0 * alpha * alpha) < (1.0 - alpha) * (1.0 - alpha);

    let steps = iterates.len() - 1;
    // C^1 = ||z^1 - z*||^2 by convention; general formula from k = 2 on.
    let c = |k: usize| -> f64 {
        if k == 1 {
            dist_sq[1]
        } else {
            let delta = nu * (1.0 - alpha) * iterates[k].sub(&iterates[k - 1]).norm_sq();
            dist_sq[k] - alpha * dist_sq[k - 1] + delta
        }
    };

    let mut worst_lyapunov = f64::NEG_INFINITY;
    for k in 1..steps {
        let second = iterates[k + 1]
            .sub(&iterates[k])
            .sub(&iterates[k].sub(&iterates[k - 1]))
            .norm_sq();
        let step = iterates[k].sub(&iterates[k - 1]).norm_sq();
        let slack = c(k + 1) + nu * alpha * second + epsilon * step - c(k);
        worst_lyapunov = worst_lyapunov.max(slack);
    }
    if steps < 2 {
        worst_lyapunov = 0.0;
    }

    let m_constant = (1.0 + alpha) * (1.0 + alpha) / (epsilon * rho * rho);
    let z1_dist_sq = dist_sq.get(1).copied().unwrap_or(0.0);
    let mut worst_bound_b = f64::NEG_INFINITY;
    let mut running_min = f64::INFINITY;
    // T y^k for k >= 1; ty_norms[0] belongs to y^0.
    let mut any_bound = false;
    for (idx, ty) in trace.ty_norms.iter().enumerate().skip(1) {
        let n = idx as f64;
        running_min = running_min.min(ty * ty);
        let rhs = m_constant * z1_dist_sq / n;
        worst_bound_b = worst_bound_b.max(running_min - rhs);
        any_bound = true;
    }
    if !any_bound {
        worst_bound_b = 0.0;
    }

    let dists: Vec<f64> = iterates.iter().map(|z| z.sub(z_star).norm()).collect();
    let tail = (dists.len() / 10).max(2).min(dists.len());
    let tail_slice = &dists[dists.len() - tail..];
    let limit_estimate = tail_slice.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - tail_slice.iter().copied().fold(f64::INFINITY, f64::min);

    Theorem2Check {
        alpha,
        rho,
        lambda,
        nu,
        epsilon,
        condition10_ok,
        lyapunov_descent_ok: worst_lyapunov <= THEOREM_SLACK,
        worst_lyapunov_slack: worst_lyapunov,
        bound_b_ok: worst_bound_b <= THEOREM_SLACK,
        worst_bound_b_slack: worst_bound_b,
        m_constant,
        limit_exists_estimate: limit_estimate,
    }
}

// ---------------------------------------------------------------------------
// Scatter export
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct ScatterRow {
    pub instance_id: usize,
    /// NaN when the scan excluded every step.
    pub min_ratio: f64,
    pub convergence_norm: f64,
    pub final_nmse_db: f64,
}

/// Least-squares line `convergence_norm ~ min_ratio`; absent when fewer
/// than two usable points exist or the fit is singular.
#[derive(Clone, Debug, Serialize)]
pub struct LinearFit {
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub points: usize,
}

/// One row per scanned instance plus the least-squares fit of convergence
/// against the minimum cocoercivity ratio.
pub fn scatter_export(
    scans: &[CocoercivityScan],
    nmse: &[f64],
) -> Result<(Vec<ScatterRow>, LinearFit)> {
    if scans.is_empty() {
        return Err(FixinvError::EmptyInput("scatter_export needs at least one scan"));
    }
    if scans.len() != nmse.len() {
        return Err(FixinvError::DimensionMismatch {
            context: "scatter_export",
            expected: scans.len(),
            got: nmse.len(),
        });
    }
    let rows: Vec<ScatterRow> = scans
        .iter()
        .zip(nmse)
        .enumerate()
        .map(|(i, (scan, &db))| ScatterRow {
            instance_id: i,
            min_ratio: scan.min_ratio.unwrap_or(f64::NAN),
            convergence_norm: scan.convergence_norm,
            final_nmse_db: db,
        })
        .collect();
    let fit = fit_rows(&rows);
    Ok((rows, fit))
}

fn fit_rows(rows: &[ScatterRow]) -> LinearFit {
    let usable: Vec<&ScatterRow> = rows.iter().filter(|r| r.min_ratio.is_finite()).collect();
    let n = usable.len();
    if n < 2 {
        return LinearFit {
            slope: None,
            intercept: None,
            points: n,
        };
    }
    let xbar = usable.iter().map(|r| r.min_ratio).sum::<f64>() / n as f64;
    let ybar = usable.iter().map(|r| r.convergence_norm).sum::<f64>() / n as f64;
    let sxx: f64 = usable.iter().map(|r| (r.min_ratio - xbar).powi(2)).sum();
    let sxy: f64 = usable
        .iter()
        .map(|r| (r.min_ratio - xbar) * (r.convergence_norm - ybar))
        .sum();
    if sxx <= 1e-30 {
        return LinearFit {
            slope: None,
            intercept: None,
            points: n,
        };
    }
    let slope = sxy / sxx;
    LinearFit {
        slope: Some(slope),
        intercept: Some(ybar - slope * xbar),
        points: n,
    }
}

/// CSV schema: `instance_id,min_ratio,convergence_norm,final_nmse_db`.
pub fn write_scatter_csv(path: &Path, rows: &[ScatterRow]) -> Result<()> {
    let mut out = String::from("instance_id,min_ratio,convergence_norm,final_nmse_db\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.instance_id, r.min_ratio, r.convergence_norm, r.final_nmse_db
        ));
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_linear_pair, linear_pair_from_matrices, LinearPairSpec, LinearVariant};
    use crate::operators::PrecisionMode;
    use crate::solvers::{forward_step_solve, inertial_km_solve, SolverConfig, TraceLevel};
    use nalgebra::DMatrix;

    fn diag_pair(entries: &[f64]) -> OperatorPair {
        let n = entries.len();
        let e = DMatrix::from_fn(n, n, |r, c| if r == c { entries[r] } else { 0.0 });
        linear_pair_from_matrices(e, DMatrix::identity(n, n)).unwrap()
    }

    #[test]
    fn nmse_trivial_values() {
        let z = Vector::new(vec![1.0, 0.0]);
        assert_eq!(nmse_db(&z, &z).unwrap(), -300.0);
        let est = Vector::new(vec![1.1, 0.0]);
        assert!((nmse_db(&est, &z).unwrap() - (-20.0)).abs() <= 1e-9);
        let est = Vector::new(vec![2.0, 0.0]);
        assert!(nmse_db(&est, &z).unwrap().abs() <= 1e-12);
        assert!(matches!(
            nmse_db(&z, &Vector::zeros(2)),
            Err(FixinvError::ZeroReference)
        ));
    }

    #[test]
    fn nmse_error_scaling_adds_20db_per_decade() {
        let z_ref = Vector::new(vec![2.0, -1.0, 0.5]);
        let err = Vector::new(vec![0.01, -0.03, 0.02]);
        let a = nmse_db(&z_ref.add_scaled(1.0, &err), &z_ref).unwrap();
        let b = nmse_db(&z_ref.add_scaled(10.0, &err), &z_ref).unwrap();
        assert!((b - a - 20.0).abs() <= 1e-9);
    }

    #[test]
    fn scan_identity_composite_ratios_are_one() {
        let spec = LinearPairSpec {
            pixel_dim: 12,
            latent_dim: 4,
            seed: 13,
            variant: LinearVariant::PcaOptimal,
        };
        let pair = build_linear_pair(&spec).unwrap();
        let z_inf = Vector::new(vec![0.4, -0.2, 1.1, 0.9]);
        let mut rng = crate::models::seeded_rng(3, 4);
        let iterates: Vec<Vector> = (0..21)
            .map(|_| {
                z_inf.add_scaled(
                    0.5,
                    &(0..4)
                        .map(|_| rand::Rng::sample::<f64, _>(&mut rng, rand_distr::StandardNormal))
                        .collect(),
                )
            })
            .collect();
        let trace = IterateTrace::from_iterates(iterates);
        let scan = cocoercivity_scan(&pair, &trace, &z_inf, 20).unwrap();
        assert_eq!(scan.excluded_steps, 0);
        for r in &scan.ratios {
            assert!((r - 1.0).abs() <= 1e-9, "ratio {r}");
        }
    }

    #[test]
    fn scan_ratios_respect_eigenvalue_interval() {
        let pair = diag_pair(&[1.0, 0.5]);
        let z_inf = Vector::new(vec![0.0, 0.0]);
        // Second-coordinate-dominant direction: the ratio approaches
        // 1/lambda_min = 2.
        let iterates: Vec<Vector> = (0..11)
            .map(|k| Vector::new(vec![0.0, 1.0 / (k as f64 + 1.0)]))
            .collect();
        let trace = IterateTrace::from_iterates(iterates);
        let scan = cocoercivity_scan(&pair, &trace, &z_inf, 10).unwrap();
        for r in &scan.ratios {
            assert!((r - 2.0).abs() <= 1e-12);
        }
        // Generic directions stay inside [1/lambda_max, 1/lambda_min].
        let mut rng = crate::models::seeded_rng(8, 4);
        let iterates: Vec<Vector> = (0..31)
            .map(|_| {
                (0..2)
                    .map(|_| rand::Rng::sample::<f64, _>(&mut rng, rand_distr::StandardNormal))
                    .collect()
            })
            .collect();
        let trace = IterateTrace::from_iterates(iterates);
        let scan = cocoercivity_scan(&pair, &trace, &z_inf, 30).unwrap();
        for r in &scan.ratios {
            assert!(*r >= 1.0 - 1e-9 && *r <= 2.0 + 1e-9, "ratio {r}");
        }
    }

    #[test]
    fn scan_excludes_converged_steps_and_reports_window_norm() {
        let pair = diag_pair(&[1.0, 0.5]);
        let z_inf = Vector::new(vec![1.0, 1.0]);
        let mut iterates = vec![z_inf.clone(); 3]; // excluded: zero denominator
        iterates.push(Vector::new(vec![2.0, 1.0]));
        let trace = IterateTrace::from_iterates(iterates);
        let scan = cocoercivity_scan(&pair, &trace, &z_inf, 3).unwrap();
        assert_eq!(scan.excluded_steps, 3);
        assert_eq!(scan.ratios.len(), 1);
        assert!((scan.convergence_norm - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn scan_requires_full_trace_of_window_length() {
        let pair = diag_pair(&[1.0]);
        let trace = IterateTrace::from_iterates(vec![Vector::zeros(1); 5]);
        let err = cocoercivity_scan(&pair, &trace, &Vector::zeros(1), 10).unwrap_err();
        assert!(matches!(err, FixinvError::TraceTooShort { .. }));
    }

    #[test]
    fn theorem1_descent_holds_on_lossy_fsm() {
        let spec = LinearPairSpec {
            pixel_dim: 16,
            latent_dim: 6,
            seed: 4,
            variant: LinearVariant::LossySpectrum(vec![1.0, 0.8, 0.6, 0.5, 0.4, 0.25]),
        };
        let pair = build_linear_pair(&spec).unwrap();
        let beta = cocoercivity_constant(&pair).unwrap();
        let mut rng = crate::models::seeded_rng(4, 1);
        let z_true: Vector = (0..6)
            .map(|_| rand::Rng::sample::<f64, _>(&mut rng, rand_distr::StandardNormal))
            .collect();
        let x = pair.decode(&z_true, PrecisionMode::Full).unwrap();
        let cfg =
            SolverConfig::forward_step_fixed(beta, 500).with_trace_level(TraceLevel::Full);
        let result = forward_step_solve(&pair, &x, &cfg).unwrap();
        let z_star = linear_fixed_point(&pair, &x).unwrap();
        let report = theorem_report(&pair, &result.trace, &cfg, &z_star).unwrap();
        let t1 = report.theorem1.unwrap();
        assert!(t1.per_step_descent_ok, "worst slack {}", t1.worst_slack);
        assert_eq!(t1.steps_checked, 500);
        assert!(t1.residual_final < 1e-10);
    }

    #[test]
    fn theorem2_constant_trace_passes_with_zero_slack() {
        let pair = diag_pair(&[1.0, 0.5]);
        let z_star = Vector::new(vec![0.7, -0.3]);
        let mut trace = IterateTrace::from_iterates(vec![z_star.clone(); 20]);
        trace.ty_norms = vec![0.0; 19];
        let cfg = SolverConfig::inertial_km(0.5, 0.4, 19);
        let report = theorem_report(&pair, &trace, &cfg, &z_star).unwrap();
        let t2 = report.theorem2.unwrap();
        assert!(t2.condition10_ok);
        assert!(t2.lyapunov_descent_ok);
        assert!(t2.worst_lyapunov_slack <= 0.0);
        assert!(t2.bound_b_ok);
        assert_eq!(t2.limit_exists_estimate, 0.0);
    }

    #[test]
    fn theorem2_condition10_arithmetic() {
        // beta = 1 on this composite, so rho = 2 lambda.
        let pair = diag_pair(&[1.0, 0.5]);
        let z_true = Vector::new(vec![1.0, 1.0]);
        let x = pair.decode(&z_true, PrecisionMode::Full).unwrap();
        let z_star = linear_fixed_point(&pair, &x).unwrap();

        let cfg = SolverConfig::inertial_km(0.5, 0.4, 50).with_trace_level(TraceLevel::Full);
        let result = inertial_km_solve(&pair, &x, &cfg).unwrap();
        let t2 = theorem_report(&pair, &result.trace, &cfg, &z_star)
            .unwrap()
            .theorem2
            .unwrap();
        assert!(t2.condition10_ok);
        assert!((t2.lambda - 0.2).abs() < 1e-12);
        assert!((t2.epsilon - 0.25).abs() < 1e-12);
        assert!((t2.m_constant - 56.25).abs() < 1e-9);

        let cfg = SolverConfig::inertial_km(0.9, 0.02, 50).with_trace_level(TraceLevel::Full);
        let result = inertial_km_solve(&pair, &x, &cfg).unwrap();
        let t2 = theorem_report(&pair, &result.trace, &cfg, &z_star)
            .unwrap()
            .theorem2
            .unwrap();
        // lambda = 0.01: 0.01 * 1.72 > 0.1^2 fails the step condition.
        assert!(!t2.condition10_ok);
    }

    #[test]
    fn theorem2_lyapunov_and_bound_hold_on_lossy_km() {
        let spec = LinearPairSpec {
            pixel_dim: 16,
            latent_dim: 6,
            seed: 6,
            variant: LinearVariant::LossySpectrum(vec![1.0, 0.9, 0.6, 0.3, 0.15, 0.05]),
        };
        let pair = build_linear_pair(&spec).unwrap();
        let mut rng = crate::models::seeded_rng(6, 1);
        let z_true: Vector = (0..6)
            .map(|_| rand::Rng::sample::<f64, _>(&mut rng, rand_distr::StandardNormal))
            .collect();
        let x = pair.decode(&z_true, PrecisionMode::Full).unwrap();
        let cfg = SolverConfig::inertial_km(0.5, 0.4, 800).with_trace_level(TraceLevel::Full);
        let result = inertial_km_solve(&pair, &x, &cfg).unwrap();
        let z_star = linear_fixed_point(&pair, &x).unwrap();
        let t2 = theorem_report(&pair, &result.trace, &cfg, &z_star)
            .unwrap()
            .theorem2
            .unwrap();
        assert!(t2.condition10_ok);
        assert!(t2.lyapunov_descent_ok, "slack {}", t2.worst_lyapunov_slack);
        assert!(t2.bound_b_ok, "slack {}", t2.worst_bound_b_slack);
        assert!(t2.limit_exists_estimate < 1e-8);
    }

    #[test]
    fn remark2_values() {
        let spec = LinearPairSpec {
            pixel_dim: 16,
            latent_dim: 4,
            seed: 7,
            variant: LinearVariant::PcaOptimal,
        };
        let pair = build_linear_pair(&spec).unwrap();
        assert!(remark2_check(&pair).unwrap() <= 1e-10);

        let pair = diag_pair(&[1.0, 0.5]);
        assert!((remark2_check(&pair).unwrap() - 0.5).abs() <= 1e-15);

        let pair = diag_pair(&[1.0, 1.0]);
        assert!(remark2_check(&pair).unwrap() <= 1e-15);
    }

    #[test]
    fn fixed_point_oracle_matches_truth_when_exact() {
        let pair = diag_pair(&[1.0, 0.5]);
        let z_true = Vector::new(vec![0.3, -0.9]);
        let x = pair.decode(&z_true, PrecisionMode::Full).unwrap();
        let z_star = linear_fixed_point(&pair, &x).unwrap();
        assert!(z_star.sub(&z_true).norm() <= 1e-12);
    }

    #[test]
    fn scatter_fit_matches_hand_computed_slope() {
        let scans: Vec<CocoercivityScan> = [(1.0, 2.0), (2.0, 3.0), (4.0, 7.0)]
            .iter()
            .map(|&(x, y)| CocoercivityScan {
                ratios: vec![x],
                excluded_steps: 0,
                min_ratio: Some(x),
                reference_iterate: Vector::zeros(1),
                convergence_norm: y,
            })
            .collect();
        let (rows, fit) = scatter_export(&scans, &[-10.0, -20.0, -30.0]).unwrap();
        assert_eq!(rows.len(), 3);
        // Hand computation: slope 12/7, intercept 0.
        assert!((fit.slope.unwrap() - 12.0 / 7.0).abs() <= 1e-12);
        assert!(fit.intercept.unwrap().abs() <= 1e-12);
    }

    #[test]
    fn scatter_fit_degenerate_cases() {
        let scan = |x: f64| CocoercivityScan {
            ratios: vec![x],
            excluded_steps: 0,
            min_ratio: Some(x),
            reference_iterate: Vector::zeros(1),
            convergence_norm: 1.0,
        };
        let (_, fit) = scatter_export(&[scan(1.0)], &[-5.0]).unwrap();
        assert!(fit.slope.is_none());
        let (_, fit) = scatter_export(&[scan(1.0), scan(1.0)], &[-5.0, -6.0]).unwrap();
        assert!(fit.slope.is_none());
        assert!(matches!(
            scatter_export(&[], &[]),
            Err(FixinvError::EmptyInput(_))
        ));
    }

    #[test]
    fn scatter_csv_schema_is_stable() {
        let scans = vec![CocoercivityScan {
            ratios: vec![1.5],
            excluded_steps: 0,
            min_ratio: Some(1.5),
            reference_iterate: Vector::zeros(1),
            convergence_norm: 0.25,
        }];
        let (rows, _) = scatter_export(&scans, &[-12.5]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scatter.csv");
        write_scatter_csv(&path, &rows).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            body,
            "instance_id,min_ratio,convergence_norm,final_nmse_db\n0,1.5,0.25,-12.5\n"
        );
    }
}
