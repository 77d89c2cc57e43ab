//! The ensemble Kalman analysis update, the staggered regularization that
//! projects analysis states back onto the model manifold, and the filter
//! driver tying forecast, analysis, and regularization together.
//!
//! The analysis never materializes the full-state covariance: every product
//! with `C` goes through the anomaly factor, and localization tapers only the
//! cross terms `C·Hᵀ` (DOF × sensor) and `H·C·Hᵀ` (sensor × sensor).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{
    ensemble_anomalies, forecast_step, inflate, localization_taper, EnsembleState,
};
use crate::error::{Error, Result};
use crate::material::MaterialParams;
use crate::mesh::Mesh;
use crate::model::{
    assemble, newton_step, reaction_force, AssemblyContext, BoundaryConditions, FieldState,
    LoadSchedule, NewtonSettings, PhiCoupling, SystemKind,
};
use crate::observation::{
    calibrate_hyperparameters, cholesky_lower, cholesky_solve, CalibrationSettings, DataBatch,
    ObservationModel,
};

/// Analysis-side configuration of the filter.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    /// Load steps at which data is assimilated (the set T_D).
    pub analysis_steps: Vec<usize>,
    /// Multiplicative covariance inflation, applied before each analysis.
    pub inflation: f64,
    /// Localization length for the squared-exponential taper; `None` disables
    /// localization.
    pub localization: Option<f64>,
    /// Regularization solve scale L (must exceed the material's ℓ).
    pub l_reg: f64,
    /// Staggered sweeps in the final regularization stage. Zero is valid:
    /// the pass then ends with the phase field rebuilt at the material
    /// scale, which keeps the most data influence in the state.
    pub n_stagger: usize,
    /// Observation scaling ρ of the data model.
    pub rho: f64,
    /// Re-fit the discrepancy kernel from each analysis batch before updating.
    pub recalibrate: bool,
}

impl FilterConfig {
    pub fn validate(&self, ell: f64) -> Result<()> {
        if !(self.l_reg > ell) {
            return Err(Error::Config(format!(
                "regularization scale {} must exceed the length scale {ell}",
                self.l_reg
            )));
        }
        if !(self.inflation >= 1.0) {
            return Err(Error::Config(format!(
                "inflation must be at least 1, got {}",
                self.inflation
            )));
        }
        if !(self.rho > 0.0) {
            return Err(Error::Config(format!(
                "observation scaling must be positive, got {}",
                self.rho
            )));
        }
        if let Some(l) = self.localization {
            if !(l > 0.0) {
                return Err(Error::Config(format!(
                    "localization length must be positive, got {l}"
                )));
            }
        }
        if self.analysis_steps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "analysis steps must be strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

/// Per-member misfit bookkeeping of one Kalman update.
#[derive(Debug, Clone)]
pub struct AnalysisStats {
    /// `(member index, pre-update misfit, post-update misfit)` where the
    /// misfit is `‖Σⱼyⱼ/n_obs − ρHa‖` in the G-weighted norm.
    pub misfits: Vec<(usize, f64, f64)>,
    pub mean_pre: f64,
    pub mean_post: f64,
}

/// G-weighted misfit `sqrt(rᵀ G⁻¹ r)` with `r = y_mean − ρ·H a`.
fn weighted_misfit(resid: &DVector<f64>, chol_g: &DMatrix<f64>) -> f64 {
    cholesky_solve(chol_g, resid).dot(resid).max(0.0).sqrt()
}

/// Apply the Kalman shift of Eq.-style analysis to every live member:
/// `aᴬ = aᶠ + (C Hᵀ) G⁻¹ (Σⱼ yⱼ − ρ·n_obs·H aᶠ)` with
/// `G = ρ²·n_obs·(H C Hᵀ) + C_δ + C_e`, all covariance products formed from
/// the anomaly factor and Schur-tapered when localization is enabled.
/// Quadrature-point phase fields are left untouched (regularization rebuilds
/// them). Inflation is the caller's responsibility.
///
/// With ρ = 1 the update provably contracts the mean G-weighted misfit; that
/// contraction is asserted on every run (a failed assertion is reported as a
/// check failure, not a panic).
pub fn kalman_update(
    ens: &mut EnsembleState,
    batch: &DataBatch,
    obs: &ObservationModel,
    localization: Option<f64>,
    mesh: &Mesh,
) -> Result<AnalysisStats> {
    batch.validate()?;
    ens.validate()?;
    let h = &obs.matrix;
    if h.n_state() != mesh.n_total_dofs() {
        return Err(Error::Config(
            "observation matrix was built for a different mesh".into(),
        ));
    }
    let q = h.n_rows();
    if batch.ys[0].len() != q {
        return Err(Error::Config(format!(
            "data has {} channels but the observation matrix has {q} rows",
            batch.ys[0].len()
        )));
    }
    let n_obs = batch.n_obs() as f64;
    let rho = obs.rho;
    let y_sum = batch.sum();
    let y_mean = &y_sum / n_obs;

    let (_, anoms) = ensemble_anomalies(ens);
    let ha = h.apply_matrix(&anoms);
    let mut hch = &ha * ha.transpose();
    let row_locs = h.row_locations();
    if let Some(l_loc) = localization {
        let t_ss = localization_taper(&row_locs, &row_locs, l_loc);
        hch.component_mul_assign(&t_ss);
    }
    let mut g = hch * (rho * rho * n_obs);
    g += obs.discrepancy_covariance();
    for i in 0..q {
        g[(i, i)] += obs.sigma_e * obs.sigma_e;
    }
    let chol_g = cholesky_lower(&g)?;

    // C·Hᵀ, tapered between DOF and sensor locations when localized. The
    // untapered product stays in factored form A·(HA)ᵀ applied right-to-left.
    let cht_loc = localization.map(|l_loc| {
        let mut cht = &anoms * ha.transpose();
        let t_ds = localization_taper(&mesh.stacked_dof_locations(), &row_locs, l_loc);
        cht.component_mul_assign(&t_ds);
        cht
    });

    let live: Vec<usize> = ens
        .members
        .iter()
        .enumerate()
        .filter(|(_, m)| m.alive)
        .map(|(i, _)| i)
        .collect();
    let mut misfits = Vec::with_capacity(live.len());
    for &i in &live {
        let stacked = ens.members[i].state.stacked();
        let h_a = h.apply(&stacked);
        let innovation = &y_sum - &h_a * (rho * n_obs);
        let w = cholesky_solve(&chol_g, &innovation);
        let shift = match &cht_loc {
            Some(cht) => cht * &w,
            None => &anoms * (ha.transpose() * &w),
        };
        let pre = weighted_misfit(&(&y_mean - &h_a * rho), &chol_g);
        let mut updated = stacked;
        for (v, s) in updated.iter_mut().zip(shift.iter()) {
            *v += s;
        }
        let post = weighted_misfit(&(&y_mean - h.apply(&updated) * rho), &chol_g);
        ens.members[i].state.set_stacked(&updated);
        misfits.push((i, pre, post));
    }

    let mean_pre = misfits.iter().map(|m| m.1).sum::<f64>() / misfits.len() as f64;
    let mean_post = misfits.iter().map(|m| m.2).sum::<f64>() / misfits.len() as f64;
    // The ρ = 1 contraction proof needs H(CHᵀ·w) = (HCHᵀ)w, which tapering
    // breaks by an O(taper mismatch) term; keep slack for the localized path.
    if rho == 1.0 && mean_post > mean_pre * (1.0 + 1e-8) + 1e-14 {
        return Err(Error::CheckFailed {
            name: "analysis-misfit-contraction".into(),
            detail: format!(
                "mean G-weighted misfit grew from {mean_pre} to {mean_post} at step {}",
                batch.step
            ),
        });
    }
    Ok(AnalysisStats {
        misfits,
        mean_pre,
        mean_post,
    })
}

/// Report of one member's regularization pass.
#[derive(Debug, Clone, Default)]
pub struct RegularizationReport {
    /// Post-step reduced residual norm per stage, in execution order.
    pub stages: Vec<(&'static str, f64)>,
    /// Reduced displacement-residual norm at scale ℓ (floor-free local update)
    /// after the final stagger sweep — the distance to the model manifold.
    pub manifold_residual: f64,
    /// Whether the pass succeeded only after doubling `n_stagger`.
    pub retried: bool,
}

/// Staggered regularization of one analysis state (the analysis itself is
/// purely algebraic, so the result generally violates the model):
///
/// 1. at scale `L`, update the micromorphic field from the analysis
///    displacement, 2. update the displacement at scale `L`, 3. update
///    the micromorphic field at the material scale `ℓ`, 4. `n_stagger`
///    alternating displacement/micromorphic sweeps at `ℓ` — all with the
///    irreversibility floor removed. The phase field is then rebuilt from the
///    final fields via the floor-free local update at `ℓ`, and the
///    extrapolation history is reset.
///
/// Each stage takes a single Newton step rather than iterating to
/// convergence: the step is a one-step proximal approximation that balances
/// the model against the data. A converged solve would forget where it
/// started — before a crack has formed, the equilibrium at fixed load is the
/// homogeneous state, so full convergence erases exactly the localized
/// pattern the update was meant to inject, leaving members that report
/// either almost no damage or (past the snap) total damage. The micromorphic
/// stages are linear in `d`, so for them the single step is already the
/// exact solve; the proximal character lives in the displacement stages.
/// States near equilibrium are contracted quadratically, so on a developed
/// crack the sweeps do converge in the ordinary sense.
///
/// Removing the floor is deliberate: the data may relocate or erase damage
/// that the forecast history asserted, which is the only way an ensemble
/// member can abandon a misplaced nucleus. A genuine crack survives the
/// rebuild on its own because the assimilated displacement keeps the strain
/// concentration that regenerates it. Forecast-step irreversibility resumes
/// from the rebuilt phase field.
///
/// Dirichlet values are re-imposed from the member's current prescribed
/// displacement before solving (the algebraic update may have shifted them).
/// A stage that breaks down (assembly or linear solve) is retried once from
/// the entry state with `n_stagger` doubled; the error of a failed retry
/// names the stage that broke.
pub fn regularize_member(
    state: &mut FieldState,
    mesh: &Mesh,
    params: &MaterialParams,
    bc: &BoundaryConditions,
    l_reg: f64,
    n_stagger: usize,
    settings: &NewtonSettings,
) -> Result<RegularizationReport> {
    let entry_u = state.a_u.clone();
    let entry_d = state.a_d.clone();
    match regularize_attempt(state, mesh, params, bc, l_reg, n_stagger, settings) {
        Ok(mut report) => {
            state.reset_extrapolation();
            report.manifold_residual =
                manifold_residual(state, mesh, params, bc, params.ell)?;
            Ok(report)
        }
        Err(first) => {
            state.a_u.copy_from_slice(&entry_u);
            state.a_d.copy_from_slice(&entry_d);
            let more = (2 * n_stagger).max(1);
            match regularize_attempt(state, mesh, params, bc, l_reg, more, settings) {
                Ok(mut report) => {
                    report.retried = true;
                    state.reset_extrapolation();
                    report.manifold_residual =
                        manifold_residual(state, mesh, params, bc, params.ell)?;
                    Ok(report)
                }
                Err(_) => Err(first),
            }
        }
    }
}

/// One full Algorithm-2 pass; leaves `state.phi_q` to the caller.
fn regularize_attempt(
    state: &mut FieldState,
    mesh: &Mesh,
    params: &MaterialParams,
    bc: &BoundaryConditions,
    l_reg: f64,
    n_stagger: usize,
    settings: &NewtonSettings,
) -> Result<RegularizationReport> {
    let zero_floor = vec![0.0; mesh.n_qp_total()];
    let constrained = bc.constrained_dofs();
    bc.apply(&mut state.a_u, state.u_d);
    let mut report = RegularizationReport::default();

    let stage = |label: &'static str,
                     lambda: f64,
                     kind: SystemKind,
                     a_u: &mut [f64],
                     a_d: &mut [f64]|
     -> Result<(f64, Vec<f64>)> {
        let ctx = AssemblyContext {
            mesh,
            params,
            lambda,
            phi_floor: &zero_floor,
            phi_coupling: PhiCoupling::Evolving,
        };
        let out = newton_step(&ctx, kind, a_u, a_d, &constrained, settings)
            .map_err(|e| Error::Regularization {
                stage: label,
                source: Box::new(e),
            })?;
        if std::env::var_os("PFENKF_DEBUG").is_some() {
            let (mut mx, mut at) = (0.0f64, 0.0f64);
            let coords = mesh.qp_coords();
            for (q, &p) in out.phi_q.iter().enumerate() {
                if p > mx {
                    mx = p;
                    at = coords[q][0];
                }
            }
            let dmax = a_d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            eprintln!(
                "  [reg] {label:22} res {:9.3e}  phi max {mx:.4} @ {at:+.4}  d max {dmax:.4}",
                out.report.residual
            );
        }
        Ok((out.report.residual, out.phi_q))
    };

    let (res, _) = stage(
        "micromorphic-coarse",
        l_reg,
        SystemKind::MicromorphicOnly,
        &mut state.a_u,
        &mut state.a_d,
    )?;
    report.stages.push(("micromorphic-coarse", res));
    let (res, _) = stage(
        "displacement-coarse",
        l_reg,
        SystemKind::DisplacementOnly,
        &mut state.a_u,
        &mut state.a_d,
    )?;
    report.stages.push(("displacement-coarse", res));
    let (res, phi) = stage(
        "micromorphic-fine",
        params.ell,
        SystemKind::MicromorphicOnly,
        &mut state.a_u,
        &mut state.a_d,
    )?;
    report.stages.push(("micromorphic-fine", res));

    let mut last_phi = Some(phi);
    for _ in 0..n_stagger {
        let (res, _) = stage(
            "stagger-displacement",
            params.ell,
            SystemKind::DisplacementOnly,
            &mut state.a_u,
            &mut state.a_d,
        )?;
        report.stages.push(("stagger-displacement", res));
        let (res, phi) = stage(
            "stagger-micromorphic",
            params.ell,
            SystemKind::MicromorphicOnly,
            &mut state.a_u,
            &mut state.a_d,
        )?;
        report.stages.push(("stagger-micromorphic", res));
        last_phi = Some(phi);
    }
    // The final micromorphic step evaluated exactly the floor-free local
    // update at scale ℓ — that is the rebuilt phase field.
    state.phi_q = last_phi.expect("micromorphic-fine always runs");
    Ok(report)
}

/// Reduced displacement-residual norm with the floor-free local update at the
/// given scale: how far the state is from the model manifold.
pub fn manifold_residual(
    state: &FieldState,
    mesh: &Mesh,
    params: &MaterialParams,
    bc: &BoundaryConditions,
    lambda: f64,
) -> Result<f64> {
    let zero_floor = vec![0.0; mesh.n_qp_total()];
    let ctx = AssemblyContext {
        mesh,
        params,
        lambda,
        phi_floor: &zero_floor,
        phi_coupling: PhiCoupling::Evolving,
    };
    let out = assemble(&ctx, &state.a_u, &state.a_d, SystemKind::DisplacementOnly, false)?;
    let mut r = out.r_u;
    for dof in bc.constrained_dofs() {
        r[dof] = 0.0;
    }
    Ok(r.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// φ-weighted centroid of quadrature points with φ > 0.5; `None` when no
/// point qualifies.
pub fn crack_position_1d(phi_q: &[f64], mesh: &Mesh) -> Option<f64> {
    let coords = mesh.qp_coords();
    let mut weight = 0.0;
    let mut moment = 0.0;
    for (x, &phi) in coords.iter().zip(phi_q) {
        if phi > 0.5 {
            weight += phi;
            moment += phi * x[0];
        }
    }
    (weight > 0.0).then(|| moment / weight)
}

/// Ridge polyline of the phase field: quadrature points with φ > 0.5 are
/// bucketed into `n_bins` columns along x, and each column contributes its
/// maximum-φ point. Empty when nothing exceeds the threshold.
pub fn crack_ridge_2d(phi_q: &[f64], mesh: &Mesh, n_bins: usize) -> Vec<[f64; 2]> {
    assert!(n_bins > 0);
    let coords = mesh.qp_coords();
    let qualify: Vec<usize> = (0..phi_q.len()).filter(|&i| phi_q[i] > 0.5).collect();
    if qualify.is_empty() {
        return Vec::new();
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &i in &qualify {
        lo = lo.min(coords[i][0]);
        hi = hi.max(coords[i][0]);
    }
    let width = (hi - lo).max(1e-12);
    let mut best: Vec<Option<usize>> = vec![None; n_bins];
    for &i in &qualify {
        let bin = (((coords[i][0] - lo) / width) * n_bins as f64)
            .floor()
            .clamp(0.0, (n_bins - 1) as f64) as usize;
        if best[bin].map_or(true, |b| phi_q[i] > phi_q[b]) {
            best[bin] = Some(i);
        }
    }
    best.into_iter()
        .flatten()
        .map(|i| coords[i])
        .collect()
}

/// Crack-position spread across live members: `(mean, std, n_located)` of the
/// 1D position estimates.
pub fn crack_position_spread(ens: &EnsembleState, mesh: &Mesh) -> (Option<f64>, Option<f64>, usize) {
    let positions: Vec<f64> = ens
        .alive()
        .filter_map(|m| crack_position_1d(&m.state.phi_q, mesh))
        .collect();
    let n = positions.len();
    if n == 0 {
        return (None, None, 0);
    }
    let mean = positions.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        None
    } else {
        Some(
            (positions.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt(),
        )
    };
    (Some(mean), std, n)
}

/// One per-step record of the filter run.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub u_d: f64,
    pub mean_force: f64,
    pub std_force: f64,
    pub crack_mean: Option<f64>,
    pub crack_std: Option<f64>,
    pub n_alive: usize,
}

/// Per-member record of one analysis step.
#[derive(Debug, Clone)]
pub struct MemberAnalysis {
    pub member: usize,
    pub pre_misfit: f64,
    pub post_misfit: f64,
    pub crack_position: Option<f64>,
    /// Largest quadrature-point phase-field value after regularization.
    pub phi_max: f64,
    pub reaction_force: f64,
    pub manifold_residual: f64,
    pub retried: bool,
}

/// Record of one analysis (data assimilation) step.
#[derive(Debug, Clone)]
pub struct AnalysisRecord {
    pub step: usize,
    pub mean_pre_misfit: f64,
    pub mean_post_misfit: f64,
    pub members: Vec<MemberAnalysis>,
    /// Discrepancy kernel in force at this analysis (recalibrated or static).
    pub kernel: crate::kernel::MaternParams,
}

/// Full output of a filter run.
#[derive(Debug, Clone, Default)]
pub struct FilterRun {
    pub steps: Vec<StepRecord>,
    pub analyses: Vec<AnalysisRecord>,
}

/// Everything the driver needs besides the ensemble itself.
pub struct FilterDriver<'a> {
    pub mesh: &'a Mesh,
    pub params: &'a MaterialParams,
    pub bc: &'a BoundaryConditions,
    pub schedule: &'a LoadSchedule,
    pub newton: &'a NewtonSettings,
    pub obs: &'a ObservationModel,
    pub config: &'a FilterConfig,
    /// Data batches keyed by analysis step; must cover `config.analysis_steps`.
    pub data: &'a BTreeMap<usize, DataBatch>,
    pub loaded_boundary: &'a str,
    pub load_component: usize,
    pub parallel: bool,
}

/// Run the filter for `n_steps` load steps: forecast every member each step
/// and, at analysis steps, recalibrate (optionally), inflate, apply the
/// Kalman update, and regularize every member. The regularized states become
/// the next forecasts. `per_step` fires after every completed step (post
/// analysis, when one happened).
pub fn run_filter(
    ens: &mut EnsembleState,
    driver: &FilterDriver,
    n_steps: usize,
    mut per_step: impl FnMut(&EnsembleState, &StepRecord),
) -> Result<FilterRun> {
    driver.config.validate(driver.params.ell)?;
    driver.obs.validate()?;
    for &step in &driver.config.analysis_steps {
        if step <= ens.step || step > ens.step + n_steps {
            continue;
        }
        if !driver.data.contains_key(&step) {
            return Err(Error::Config(format!(
                "no data batch available for analysis step {step}"
            )));
        }
    }

    let mut obs = driver.obs.clone();
    let mut run = FilterRun::default();
    for _ in 0..n_steps {
        forecast_step(
            ens,
            driver.mesh,
            driver.params,
            driver.bc,
            driver.schedule,
            driver.newton,
            driver.parallel,
        )?;

        if driver.config.analysis_steps.contains(&ens.step) {
            let record = analysis_pass(ens, driver, &mut obs)?;
            run.analyses.push(record);
        }

        let record = step_record(ens, driver)?;
        per_step(ens, &record);
        run.steps.push(record);
    }
    Ok(run)
}

fn step_record(ens: &EnsembleState, driver: &FilterDriver) -> Result<StepRecord> {
    let mut forces = Vec::with_capacity(ens.n_alive());
    let mut u_d = 0.0;
    for m in ens.alive() {
        forces.push(reaction_force(
            &m.state,
            driver.mesh,
            driver.params,
            driver.loaded_boundary,
            driver.load_component,
        )?);
        u_d = m.state.u_d;
    }
    let n = forces.len().max(1) as f64;
    let mean_force = forces.iter().sum::<f64>() / n;
    let std_force = if forces.len() < 2 {
        0.0
    } else {
        (forces.iter().map(|f| (f - mean_force).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    let (crack_mean, crack_std, _) = crack_position_spread(ens, driver.mesh);
    Ok(StepRecord {
        step: ens.step,
        u_d,
        mean_force,
        std_force,
        crack_mean,
        crack_std,
        n_alive: ens.n_alive(),
    })
}

fn analysis_pass(
    ens: &mut EnsembleState,
    driver: &FilterDriver,
    obs: &mut ObservationModel,
) -> Result<AnalysisRecord> {
    let step = ens.step;
    let batch = &driver.data[&step];

    if driver.config.recalibrate {
        let (mean, anoms) = ensemble_anomalies(ens);
        let ha = obs.matrix.apply_matrix(&anoms);
        let mean_obs = obs.matrix.apply(&mean) * driver.config.rho;
        let fit = calibrate_hyperparameters(
            batch,
            &mean_obs,
            &ha,
            driver.config.rho,
            obs.matrix.sensors(),
            obs.matrix.dim(),
            obs.sigma_e,
            obs.kernel,
            &CalibrationSettings {
                map_prior: true,
                ..CalibrationSettings::default()
            },
        )?;
        obs.kernel = fit.kernel;
    }

    inflate(ens, driver.config.inflation);
    let stats = kalman_update(ens, batch, obs, driver.config.localization, driver.mesh)?;

    let reg = |m: &mut crate::ensemble::MemberSlot| {
        if !m.alive {
            return None;
        }
        Some(regularize_member(
            &mut m.state,
            driver.mesh,
            driver.params,
            driver.bc,
            driver.config.l_reg,
            driver.config.n_stagger,
            driver.newton,
        ))
    };
    let outcomes: Vec<Option<Result<RegularizationReport>>> = if driver.parallel {
        ens.members.par_iter_mut().map(reg).collect()
    } else {
        ens.members.iter_mut().map(reg).collect()
    };

    let mut reports: Vec<Option<RegularizationReport>> = Vec::with_capacity(outcomes.len());
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            None => reports.push(None),
            Some(Ok(rep)) => reports.push(Some(rep)),
            Some(Err(_)) => {
                ens.members[i].alive = false;
                reports.push(None);
            }
        }
    }
    let total = ens.members.len();
    let failed = total - ens.n_alive();
    if 10 * failed > total {
        return Err(Error::TooManyMemberFailures { failed, total });
    }

    let mut members = Vec::new();
    for (i, pre, post) in &stats.misfits {
        let Some(report) = reports[*i].as_ref() else {
            continue; // died during regularization
        };
        let m = &ens.members[*i];
        members.push(MemberAnalysis {
            member: *i,
            pre_misfit: *pre,
            post_misfit: *post,
            crack_position: crack_position_1d(&m.state.phi_q, driver.mesh),
            phi_max: m.state.phi_q.iter().cloned().fold(0.0, f64::max),
            reaction_force: reaction_force(
                &m.state,
                driver.mesh,
                driver.params,
                driver.loaded_boundary,
                driver.load_component,
            )?,
            manifold_residual: report.manifold_residual,
            retried: report.retried,
        });
    }
    Ok(AnalysisRecord {
        step,
        mean_pre_misfit: stats.mean_pre,
        mean_post_misfit: stats.mean_post,
        members,
        kernel: obs.kernel,
    })
}
