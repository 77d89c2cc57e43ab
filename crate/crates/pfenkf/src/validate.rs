//! Built-in verification suites behind the `validate` subcommand:
//! finite-difference checks of the assembled gradient and tangent, the local
//! phase-update contract, kernel identities, ensemble algebra, and Newton's
//! convergence rate. Each check reports a pass/fail result with a one-line
//! numeric summary instead of panicking, so the CLI can print the whole
//! table before deciding the exit code.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

use crate::ensemble::{
    ensemble_anomalies, ensemble_mean, inflate, localization_taper, rng_for, sample_prior,
    PriorSpec,
};
use crate::error::{Error, Result};
use crate::kernel::{matern_gram, matern_r, MaternParams};
use crate::material::MaterialParams;
use crate::mesh::{build_mesh_1d, build_mesh_sens, Diagonal, Mesh, RefineBand};
use crate::model::solve::solve_sparse;
use crate::model::{
    assemble, assemble_energy, local_phase_update, AssemblyContext, BoundaryConditions,
    PhiCoupling, SystemKind,
};

/// Outcome of one verification check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// One-line numeric summary (worst error, counts, thresholds).
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        CheckResult {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// Test hook: multiply the displacement block of the assembled tangent by
/// `scale` before comparing against finite differences. The tangent check
/// must detect any `scale != 1`.
#[derive(Debug, Clone, Copy)]
pub struct TangentFault {
    pub scale: f64,
}

fn reference_params() -> MaterialParams {
    MaterialParams {
        youngs: 210_000.0,
        poisson: 0.3,
        gc: 2.7,
        ell: 2.5e-2,
        beta: 100.0,
    }
}

fn check_mesh_1d() -> Mesh {
    build_mesh_1d(50, -1.0, 1.0).expect("reference 1d mesh")
}

fn check_mesh_2d() -> Mesh {
    build_mesh_sens(
        0.16,
        0.08,
        RefineBand {
            x_min: 0.4,
            x_max: 1.0,
            y_min: 0.0,
            y_max: 0.6,
        },
        Diagonal::Falling,
    )
    .expect("reference 2d mesh")
}

fn random_state(
    mesh: &Mesh,
    rng: &mut ChaCha12Rng,
    u_scale: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let a_u = (0..mesh.n_u_dofs())
        .map(|_| rng.random_range(-u_scale..u_scale))
        .collect();
    let a_d = (0..mesh.n_d_dofs())
        .map(|_| rng.random_range(0.0..0.9))
        .collect();
    let floor = (0..mesh.n_qp_total())
        .map(|_| rng.random_range(0.0..0.3))
        .collect();
    (a_u, a_d, floor)
}

/// A random probe direction over either the displacement or the
/// micromorphic dofs, unit in the max norm.
fn probe_direction(n: usize, active: std::ops::Range<usize>, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let mut v: Vec<f64> = vec![0.0; n];
    let mut amax = 0.0f64;
    for i in active {
        v[i] = rng.random_range(-1.0..1.0);
        amax = amax.max(v[i].abs());
    }
    for x in v.iter_mut() {
        *x /= amax;
    }
    v
}

/// Central finite differences of the incremental energy along random probe
/// directions must reproduce the assembled residual (the energy gradient)
/// to 1e-5 relative accuracy, on `n_states` random admissible states.
pub fn check_gradient_fd(mesh: &Mesh, params: &MaterialParams, n_states: usize, seed: u64) -> CheckResult {
    let name = format!("gradient-fd-{}d", mesh.dim());
    let mut rng = rng_for(seed, "check-gradient", mesh.dim() as u64, 0);
    let u_scale = if mesh.dim() == 1 { 2e-3 } else { 5e-4 };
    let n_u = mesh.n_u_dofs();
    let n = mesh.n_total_dofs();
    let mut worst = 0.0f64;
    for _ in 0..n_states {
        let (a_u, a_d, floor) = random_state(mesh, &mut rng, u_scale);
        let ctx = AssemblyContext {
            mesh,
            params,
            lambda: params.ell,
            phi_floor: &floor,
            phi_coupling: PhiCoupling::Evolving,
        };
        let out = match assemble(&ctx, &a_u, &a_d, SystemKind::Monolithic, false) {
            Ok(o) => o,
            Err(e) => return CheckResult::new(&name, false, format!("assembly failed: {e}")),
        };
        let mut grad = out.r_u.clone();
        grad.extend_from_slice(&out.r_d);
        let scale = grad.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        // One displacement probe, one micromorphic probe per state.
        for (range, h) in [(0..n_u, 1e-9), (n_u..n, 1e-7)] {
            let v = probe_direction(n, range, &mut rng);
            let push = |sign: f64| -> Result<f64> {
                let au: Vec<f64> = a_u
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x + sign * h * v[i])
                    .collect();
                let ad: Vec<f64> = a_d
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x + sign * h * v[n_u + i])
                    .collect();
                assemble_energy(&ctx, &au, &ad)
            };
            let (ep, em) = match (push(1.0), push(-1.0)) {
                (Ok(a), Ok(b)) => (a, b),
                _ => return CheckResult::new(&name, false, "energy evaluation failed".into()),
            };
            let fd = (ep - em) / (2.0 * h);
            let directional: f64 = grad.iter().zip(&v).map(|(g, vi)| g * vi).sum();
            worst = worst.max((fd - directional).abs() / scale);
        }
    }
    CheckResult::new(
        &name,
        worst <= 1e-5,
        format!("worst relative error {worst:.3e} over {n_states} states (tol 1e-5)"),
    )
}

/// The assembled tangent must match directional finite differences of the
/// residual to 1e-5 relative accuracy on `n_states` random states,
/// alternating between the evolving and the extrapolated coupling. A
/// `fault` deliberately corrupts the displacement block so tests can verify
/// the check has teeth.
pub fn check_tangent_fd(
    mesh: &Mesh,
    params: &MaterialParams,
    n_states: usize,
    seed: u64,
    fault: Option<TangentFault>,
) -> CheckResult {
    let name = format!("tangent-fd-{}d", mesh.dim());
    let mut rng = rng_for(seed, "check-tangent", mesh.dim() as u64, 1);
    let u_scale = if mesh.dim() == 1 { 2e-3 } else { 5e-4 };
    let n_u = mesh.n_u_dofs();
    let n = mesh.n_total_dofs();
    let mut worst = 0.0f64;
    for state_idx in 0..n_states {
        let (a_u, a_d, floor) = random_state(mesh, &mut rng, u_scale);
        let d_check: Vec<f64> = (0..mesh.n_qp_total())
            .map(|_| rng.random_range(0.0..0.9))
            .collect();
        let coupling = if state_idx % 2 == 0 {
            PhiCoupling::Evolving
        } else {
            PhiCoupling::Extrapolated(&d_check)
        };
        let ctx = AssemblyContext {
            mesh,
            params,
            lambda: params.ell,
            phi_floor: &floor,
            phi_coupling: coupling,
        };
        let sys = match assemble(&ctx, &a_u, &a_d, SystemKind::Monolithic, true) {
            Ok(o) => o,
            Err(e) => return CheckResult::new(&name, false, format!("assembly failed: {e}")),
        };
        let mut triplets = sys.triplets;
        if let Some(f) = fault {
            for t in triplets.iter_mut() {
                if t.0 < n_u && t.1 < n_u {
                    t.2 *= f.scale;
                }
            }
        }
        let scale = triplets.iter().fold(1.0f64, |m, t| m.max(t.2.abs()));
        for (range, h) in [(0..n_u, 1e-9), (n_u..n, 1e-7)] {
            let v = probe_direction(n, range, &mut rng);
            let mut kv = vec![0.0; n];
            for &(r, c, val) in &triplets {
                kv[r] += val * v[c];
            }
            let residual = |sign: f64| -> Result<Vec<f64>> {
                let au: Vec<f64> = a_u
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x + sign * h * v[i])
                    .collect();
                let ad: Vec<f64> = a_d
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x + sign * h * v[n_u + i])
                    .collect();
                let o = assemble(&ctx, &au, &ad, SystemKind::Monolithic, false)?;
                let mut r = o.r_u;
                r.extend_from_slice(&o.r_d);
                Ok(r)
            };
            let (rp, rm) = match (residual(1.0), residual(-1.0)) {
                (Ok(a), Ok(b)) => (a, b),
                _ => return CheckResult::new(&name, false, "residual evaluation failed".into()),
            };
            for i in 0..n {
                let fd = (rp[i] - rm[i]) / (2.0 * h);
                worst = worst.max((fd - kv[i]).abs() / scale);
            }
        }
    }
    CheckResult::new(
        &name,
        worst <= 1e-5,
        format!("worst relative error {worst:.3e} over {n_states} states (tol 1e-5)"),
    )
}

/// Property contract of the closed-form local phase update on `n` random
/// inputs: stays in [floor, 1], never decreases with the driving energy or
/// the micromorphic value on the smooth branch, and reproduces the
/// homogeneous fixed point d* = 2Ψ/(2Ψ + G_c/λ) for every penalty β.
pub fn check_local_update(params: &MaterialParams, n: usize, seed: u64) -> CheckResult {
    let name = "local-update";
    let mut rng = rng_for(seed, "check-local-update", 0, 2);
    let lambda = params.ell;
    let mut violations = 0usize;
    let mut worst_fixed_point = 0.0f64;
    for _ in 0..n {
        // Log-uniform Ψ⁺ spans quiet and near-critical quadrature points.
        let psi = 10f64.powf(rng.random_range(-6.0..4.0));
        let d = rng.random_range(0.0..1.2);
        let floor = rng.random_range(0.0..1.0);
        let phi = local_phase_update(psi, d, floor, params, lambda);
        if !(floor..=1.0).contains(&phi) {
            violations += 1;
        }
        // Monotone in Ψ⁺ (for admissible d ≤ 1) and in d.
        let d_adm = d.min(1.0);
        let lo = local_phase_update(psi, d_adm, floor, params, lambda);
        let hi = local_phase_update(psi * 1.5, d_adm, floor, params, lambda);
        if hi < lo - 1e-14 {
            violations += 1;
        }
        let hi_d = local_phase_update(psi, (d_adm + 0.1).min(1.0), floor, params, lambda);
        if hi_d < local_phase_update(psi, d_adm, floor, params, lambda) - 1e-14 {
            violations += 1;
        }
        // Homogeneous fixed point, independent of the penalty strength.
        let d_star = 2.0 * psi / (2.0 * psi + params.gc / lambda);
        let mut weak = *params;
        weak.beta = 7.0;
        for p in [params, &weak] {
            let back = local_phase_update(psi, d_star, 0.0, p, lambda);
            worst_fixed_point = worst_fixed_point.max((back - d_star).abs());
        }
    }
    let passed = violations == 0 && worst_fixed_point <= 1e-12;
    CheckResult::new(
        name,
        passed,
        format!(
            "{violations} violations over {n} inputs; fixed-point error {worst_fixed_point:.3e}"
        ),
    )
}

/// Kernel identities: the ν = 1/2 closed form, the large-ν squared
/// exponential limit, and positive semidefiniteness of a scattered Gram
/// matrix.
pub fn check_matern(seed: u64) -> CheckResult {
    let name = "matern-kernel";
    let mut worst_exp = 0.0f64;
    let w_half = MaternParams {
        nu: 0.5,
        sigma: 1.3,
        length: 0.7,
    };
    for k in 0..40 {
        let r = k as f64 * 0.05;
        let exact = w_half.sigma * w_half.sigma * (-r / w_half.length).exp();
        worst_exp = worst_exp.max((matern_r(r, &w_half) - exact).abs() / exact.max(1e-12));
    }
    let mut worst_se = 0.0f64;
    let w_big = MaternParams {
        nu: 150.0,
        sigma: 1.0,
        length: 0.45,
    };
    for frac in [0.25, 0.5, 1.0, 1.5, 2.0] {
        let r = frac * w_big.length;
        let se = (-r * r / (2.0 * w_big.length * w_big.length)).exp();
        worst_se = worst_se.max((matern_r(r, &w_big) - se).abs() / se);
    }
    let mut rng = rng_for(seed, "check-matern", 0, 3);
    let points: Vec<Vec<f64>> = (0..40)
        .map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
        .collect();
    let mut min_eig = f64::INFINITY;
    for nu in [0.5, 1.5, 4.0] {
        let g = matern_gram(
            &points,
            &MaternParams {
                nu,
                sigma: 1.0,
                length: 0.2,
            },
        );
        let eigs = g.symmetric_eigenvalues();
        min_eig = min_eig.min(eigs.iter().cloned().fold(f64::INFINITY, f64::min));
    }
    let passed = worst_exp <= 1e-10 && worst_se <= 0.01 && min_eig >= -1e-8;
    CheckResult::new(
        name,
        passed,
        format!(
            "exponential match {worst_exp:.3e} (tol 1e-10); squared-exponential limit \
             {worst_se:.3e} (tol 1e-2); Gram min eigenvalue {min_eig:.3e} (tol -1e-8)"
        ),
    )
}

/// Ensemble algebra: inflation must keep the mean (1e-14), scale anomalies
/// by exactly r (1e-12) and covariances by r², and the localization taper
/// must keep every tapered covariance positive semidefinite.
pub fn check_ensemble_algebra(seed: u64) -> CheckResult {
    let name = "ensemble-algebra";
    let mesh = build_mesh_1d(16, -1.0, 1.0).expect("small rod");
    let mut ens = sample_prior(&PriorSpec::Pristine, &mesh, 12, seed).expect("prior");
    let mut rng = rng_for(seed, "check-ensemble", 0, 4);
    for m in ens.members.iter_mut() {
        for v in m.state.a_u.iter_mut() {
            *v = rng.random_range(-1e-3..1e-3);
        }
        for v in m.state.a_d.iter_mut() {
            *v = rng.random_range(0.0..0.5);
        }
    }
    let mean0 = ensemble_mean(&ens);
    let (_, anoms0) = ensemble_anomalies(&ens);
    let r = 1.07;
    inflate(&mut ens, r);
    let mean1 = ensemble_mean(&ens);
    let (_, anoms1) = ensemble_anomalies(&ens);
    let mean_scale = mean0.iter().fold(1e-10f64, |m, v| m.max(v.abs()));
    let mean_drift = mean0
        .iter()
        .zip(&mean1)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        / mean_scale;
    let mut anom_err = 0.0f64;
    let anom_scale = anoms0.amax().max(1e-30);
    for (a, b) in anoms0.iter().zip(anoms1.iter()) {
        anom_err = anom_err.max((a * r - b).abs() / anom_scale);
    }
    let cov_err = {
        let c0 = &anoms0 * anoms0.transpose();
        let c1 = &anoms1 * anoms1.transpose();
        let scale = c0.amax().max(1e-30);
        let mut worst = 0.0f64;
        for (a, b) in c0.iter().zip(c1.iter()) {
            worst = worst.max((a * r * r - b).abs() / scale);
        }
        worst
    };
    // Tapered covariance must stay positive semidefinite.
    let locs = mesh.stacked_dof_locations();
    let taper = localization_taper(&locs, &locs, 0.3);
    let c = &anoms1 * anoms1.transpose();
    let tapered = c.component_mul(&taper);
    let eigs = tapered.symmetric_eigenvalues();
    let min_eig = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    let eig_tol = -1e-8 * c.amax();
    let passed = mean_drift <= 1e-14 && anom_err <= 1e-12 && cov_err <= 1e-12 && min_eig >= eig_tol;
    CheckResult::new(
        name,
        passed,
        format!(
            "inflation mean drift {mean_drift:.3e} (tol 1e-14); anomaly scaling error \
             {anom_err:.3e} (tol 1e-12); covariance scaling error {cov_err:.3e} (tol 1e-12); \
             tapered min eigenvalue {min_eig:.3e} (tol {eig_tol:.3e})"
        ),
    )
}

/// Newton on the monolithic evolving system must show a quadratic tail:
/// residuals strictly decreasing with r_{k+1} <= 10 r_k^2 / r_{k-1} over the
/// final three iterates.
pub fn check_newton_quadratic(seed: u64) -> CheckResult {
    let name = "newton-quadratic";
    let mesh = build_mesh_1d(40, -1.0, 1.0).expect("rod mesh");
    let params = reference_params();
    let bc = match BoundaryConditions::bar(&mesh) {
        Ok(b) => b,
        Err(e) => return CheckResult::new(name, false, format!("boundary setup failed: {e}")),
    };
    let constrained = bc.constrained_dofs();
    let mut rng = rng_for(seed, "check-newton", 0, 5);

    // A seeded defect plus a stretched rod puts the state on the strongly
    // nonlinear softening branch where Newton needs several iterations.
    let floor: Vec<f64> = mesh
        .qp_coords()
        .iter()
        .map(|p| 0.55 * (-(p[0] - 0.2) * (p[0] - 0.2) / (2.0 * 0.05 * 0.05)).exp())
        .collect();
    let mut u_d = 4e-3;
    for _attempt in 0..6 {
        let mut a_u: Vec<f64> = mesh
            .coords()
            .iter()
            .map(|p| u_d * (p[0] + 1.0) / 2.0 + rng.random_range(-1e-5..1e-5))
            .collect();
        let mut a_d = vec![0.0; mesh.n_d_dofs()];
        bc.apply(&mut a_u, u_d);
        let ctx = AssemblyContext {
            mesh: &mesh,
            params: &params,
            lambda: params.ell,
            phi_floor: &floor,
            phi_coupling: PhiCoupling::Evolving,
        };
        let free: Vec<usize> = {
            let mut mask = vec![true; mesh.n_total_dofs()];
            for &c in &constrained {
                mask[c] = false;
            }
            (0..mesh.n_total_dofs()).filter(|&i| mask[i]).collect()
        };
        let n_u = mesh.n_u_dofs();
        let mut history = Vec::new();
        let mut converged = false;
        for _iter in 0..30 {
            let out = match assemble(&ctx, &a_u, &a_d, SystemKind::Monolithic, true) {
                Ok(o) => o,
                Err(e) => return CheckResult::new(name, false, format!("assembly failed: {e}")),
            };
            let rnorm = free
                .iter()
                .map(|&f| {
                    let r = if f < n_u { out.r_u[f] } else { out.r_d[f - n_u] };
                    r * r
                })
                .sum::<f64>()
                .sqrt();
            history.push(rnorm);
            if rnorm <= 1e-10 {
                converged = true;
                break;
            }
            let mut full_to_free = vec![usize::MAX; mesh.n_total_dofs()];
            for (k, &f) in free.iter().enumerate() {
                full_to_free[f] = k;
            }
            let reduced: Vec<(usize, usize, f64)> = out
                .triplets
                .iter()
                .filter_map(|&(r, c, v)| {
                    let (fr, fc) = (full_to_free[r], full_to_free[c]);
                    (fr != usize::MAX && fc != usize::MAX).then_some((fr, fc, v))
                })
                .collect();
            let rhs: Vec<f64> = free
                .iter()
                .map(|&f| -(if f < n_u { out.r_u[f] } else { out.r_d[f - n_u] }))
                .collect();
            let dx = match solve_sparse(free.len(), &reduced, &rhs, false) {
                Ok(d) => d,
                Err(e) => return CheckResult::new(name, false, format!("linear solve failed: {e}")),
            };
            for (k, &f) in free.iter().enumerate() {
                if f < n_u {
                    a_u[f] += dx[k];
                } else {
                    a_d[f - n_u] += dx[k];
                }
            }
        }
        if !converged {
            return CheckResult::new(name, false, "newton did not converge in 30 iterations".into());
        }
        if history.len() < 4 {
            u_d *= 1.5; // too easy: push further into the nonlinear regime
            continue;
        }
        // Quadratic tail over the last three residuals above roundoff.
        let tail: Vec<f64> = history
            .iter()
            .cloned()
            .filter(|&r| r > 1e-13 * history[0].max(1.0))
            .collect();
        if tail.len() < 3 {
            u_d *= 1.5;
            continue;
        }
        let (ra, rb, rc) = (
            tail[tail.len() - 3],
            tail[tail.len() - 2],
            tail[tail.len() - 1],
        );
        let monotone = rc < rb && rb < ra;
        let quadratic = rc <= 10.0 * rb * rb / ra;
        return CheckResult::new(
            name,
            monotone && quadratic,
            format!(
                "{} iterations; final residuals {ra:.3e} -> {rb:.3e} -> {rc:.3e}; \
                 quadratic bound {:.3e}",
                history.len() - 1,
                10.0 * rb * rb / ra
            ),
        );
    }
    CheckResult::new(
        name,
        false,
        "could not reach a load level with at least 3 newton iterations".into(),
    )
}

/// Run the full verification battery. `quick` trims the local-update sweep
/// for interactive use; the full sweep covers 100_000 inputs.
pub fn run_all(seed: u64, quick: bool) -> Vec<CheckResult> {
    let params = reference_params();
    let mesh_1d = check_mesh_1d();
    let mesh_2d = check_mesh_2d();
    let n_local = if quick { 10_000 } else { 100_000 };
    vec![
        check_gradient_fd(&mesh_1d, &params, 10, seed),
        check_gradient_fd(&mesh_2d, &params, 10, seed),
        check_tangent_fd(&mesh_1d, &params, 10, seed, None),
        check_tangent_fd(&mesh_2d, &params, 10, seed, None),
        check_local_update(&params, n_local, seed),
        check_matern(seed),
        check_ensemble_algebra(seed),
        check_newton_quadratic(seed),
    ]
}

/// Render results as one aligned line per check.
pub fn format_report(results: &[CheckResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for r in results {
        let status = if r.passed { "pass" } else { "FAIL" };
        out.push_str(&format!(
            "{status}  {name:<width$}  {detail}\n",
            name = r.name,
            detail = r.detail
        ));
    }
    out
}

/// Collapse results into the CLI contract: any failed check is an error.
pub fn ensure_all_passed(results: &[CheckResult]) -> Result<()> {
    let failed: Vec<&CheckResult> = results.iter().filter(|r| !r.passed).collect();
    if let Some(first) = failed.first() {
        return Err(Error::CheckFailed {
            name: first.name.clone(),
            detail: format!("{} ({} checks failed in total)", first.detail, failed.len()),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Instant;

    #[test]
    fn full_battery_passes_within_a_minute() {
        let start = Instant::now();
        let results = run_all(2024, false);
        let elapsed = start.elapsed();
        for r in &results {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
        assert_eq!(results.len(), 8);
        assert!(
            elapsed.as_secs() < 60,
            "battery took {elapsed:?}, budget is one minute"
        );
        assert!(ensure_all_passed(&results).is_ok());
    }

    #[test]
    fn tangent_check_detects_an_injected_fault() {
        let mesh = check_mesh_1d();
        let params = reference_params();
        let bad = check_tangent_fd(&mesh, &params, 2, 7, Some(TangentFault { scale: 1.01 }));
        assert!(!bad.passed, "1% stiffness fault must be detected: {}", bad.detail);
        let good = check_tangent_fd(&mesh, &params, 2, 7, None);
        assert!(good.passed, "{}", good.detail);
    }

    #[test]
    fn failed_checks_map_to_check_failed_errors() {
        let results = vec![
            CheckResult::new("ok-check", true, "fine".into()),
            CheckResult::new("broken-check", false, "worst error 0.5".into()),
        ];
        match ensure_all_passed(&results) {
            Err(Error::CheckFailed { name, .. }) => assert_eq!(name, "broken-check"),
            other => panic!("expected CheckFailed, got {other:?}"),
        }
        let report = format_report(&results);
        assert!(report.contains("pass  ok-check"));
        assert!(report.contains("FAIL  broken-check"));
    }

    #[test]
    fn local_update_check_counts_real_violations() {
        // A sanity run with few samples must already pass.
        let params = reference_params();
        let r = check_local_update(&params, 500, 3);
        assert!(r.passed, "{}", r.detail);
    }
}
