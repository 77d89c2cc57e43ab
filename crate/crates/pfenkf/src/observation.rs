//! Observation operator, measurement data model, marginal likelihood, and
//! synthetic ground-truth data generation.
//!
//! The data model is `y = ρ·H·a + δ + e`: a scaled observation of the
//! displacement field plus a correlated model-discrepancy term `δ` (Matérn
//! kernel over sensor locations) plus white sensor noise `e`. Ground truth is
//! produced on a finer, non-nested mesh so that the assimilation never sees
//! its own discretization (an "inverse crime" guard).

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_distr::StandardNormal;

use crate::ensemble::{nucleus_floor, rng_for, NucleusDraw};
use crate::error::{Error, Result};
use crate::kernel::{matern, MaternParams};
use crate::material::MaterialParams;
use crate::mesh::{build_mesh_1d, Mesh};
use crate::model::{
    run_load_stepping, BoundaryConditions, FieldState, LoadSchedule, NewtonSettings,
};

/// Sparse observation matrix: row `s·dim + c` interpolates displacement
/// component `c` at sensor `s` from the stacked state vector `[a_u, a_d]`.
/// Rows never touch micromorphic columns.
#[derive(Debug, Clone)]
pub struct ObservationMatrix {
    rows: Vec<Vec<(usize, f64)>>,
    sensors: Vec<[f64; 2]>,
    dim: usize,
    n_state: usize,
    n_u: usize,
}

impl ObservationMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_sensors(&self) -> usize {
        self.sensors.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sensors(&self) -> &[[f64; 2]] {
        &self.sensors
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    /// Length of the stacked state vectors this matrix applies to.
    pub fn n_state(&self) -> usize {
        self.n_state
    }

    /// Sensor coordinates of every row (each sensor repeated once per
    /// displacement component); used for localization tapers.
    pub fn row_locations(&self) -> Vec<[f64; 2]> {
        let mut locs = Vec::with_capacity(self.rows.len());
        for s in &self.sensors {
            for _ in 0..self.dim {
                locs.push(*s);
            }
        }
        locs
    }

    /// `y = H a` for one stacked state vector.
    pub fn apply(&self, stacked: &[f64]) -> DVector<f64> {
        assert_eq!(stacked.len(), self.n_state, "state length mismatch");
        DVector::from_iterator(
            self.rows.len(),
            self.rows
                .iter()
                .map(|row| row.iter().map(|&(j, w)| w * stacked[j]).sum()),
        )
    }

    /// `H A` for a matrix whose columns are stacked states (anomaly factor).
    pub fn apply_matrix(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(a.nrows(), self.n_state, "state length mismatch");
        let mut out = DMatrix::zeros(self.rows.len(), a.ncols());
        for (i, row) in self.rows.iter().enumerate() {
            for col in 0..a.ncols() {
                out[(i, col)] = row.iter().map(|&(j, w)| w * a[(j, col)]).sum();
            }
        }
        out
    }

    /// Structural invariants: rows only touch displacement columns and each
    /// row is a partition of unity (sums to 1 within 1e-12).
    pub fn check_structure(&self) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            if row.iter().any(|&(j, _)| j >= self.n_u) {
                return Err(Error::Config(format!(
                    "observation row {i} touches a non-displacement column"
                )));
            }
            let sum: f64 = row.iter().map(|&(_, w)| w).sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "observation row {i} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(())
    }
}

/// Evaluate the FE basis at every sensor. Sensors may sit anywhere inside the
/// domain; a sensor outside any element is an error.
pub fn build_observation_matrix(mesh: &Mesh, sensors: &[[f64; 2]]) -> Result<ObservationMatrix> {
    let dim = mesh.dim();
    let mut rows = Vec::with_capacity(sensors.len() * dim);
    for s in sensors {
        let basis = mesh.eval_basis(&s[..dim])?;
        for c in 0..dim {
            rows.push(
                basis
                    .iter()
                    .map(|&(node, w)| (mesh.u_dof(node, c), w))
                    .collect(),
            );
        }
    }
    let h = ObservationMatrix {
        rows,
        sensors: sensors.to_vec(),
        dim,
        n_state: mesh.n_total_dofs(),
        n_u: mesh.n_u_dofs(),
    };
    h.check_structure()?;
    Ok(h)
}

/// `n` equispaced interior sensors on `(x_min, x_max)`.
pub fn equispaced_sensors_1d(n: usize, x_min: f64, x_max: f64) -> Vec<[f64; 2]> {
    let h = (x_max - x_min) / (n + 1) as f64;
    (1..=n).map(|k| [x_min + k as f64 * h, 0.0]).collect()
}

/// `n_x × n_y` sensor grid with inclusive endpoint ranges.
pub fn grid_sensors_2d(n_x: usize, n_y: usize, x: (f64, f64), y: (f64, f64)) -> Vec<[f64; 2]> {
    let lin = |n: usize, (lo, hi): (f64, f64), k: usize| {
        if n == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * k as f64 / (n - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(n_x * n_y);
    for j in 0..n_y {
        for i in 0..n_x {
            out.push([lin(n_x, x, i), lin(n_y, y, j)]);
        }
    }
    out
}

/// The full measurement data model `y = ρ·H·a + δ + e`.
#[derive(Debug, Clone)]
pub struct ObservationModel {
    pub matrix: ObservationMatrix,
    /// Observation scaling ρ.
    pub rho: f64,
    /// Sensor noise standard deviation (per scalar channel).
    pub sigma_e: f64,
    /// Model-discrepancy kernel hyperparameters.
    pub kernel: MaternParams,
}

impl ObservationModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_e > 0.0) {
            return Err(Error::Config(format!(
                "sensor noise must be positive, got {}",
                self.sigma_e
            )));
        }
        self.kernel.validate()?;
        self.matrix.check_structure()
    }

    /// Sensor-noise covariance `C_e = σ_e² I`.
    pub fn noise_covariance(&self) -> DMatrix<f64> {
        DMatrix::identity(self.matrix.n_rows(), self.matrix.n_rows()) * self.sigma_e.powi(2)
    }

    /// Model-discrepancy covariance `C_δ`: Matérn Gram matrix over sensor
    /// locations per displacement component, no cross-component correlation.
    pub fn discrepancy_covariance(&self) -> DMatrix<f64> {
        discrepancy_covariance(self.matrix.sensors(), self.matrix.dim(), &self.kernel)
    }
}

/// Matérn Gram matrix over sensors, per displacement component (row layout
/// `sensor·dim + component`), zero across components.
pub fn discrepancy_covariance(
    sensors: &[[f64; 2]],
    dim: usize,
    w: &MaternParams,
) -> DMatrix<f64> {
    let n = sensors.len() * dim;
    DMatrix::from_fn(n, n, |i, j| {
        if i % dim != j % dim {
            0.0
        } else {
            matern(&sensors[i / dim], &sensors[j / dim], w)
        }
    })
}

/// Repeated noisy observations of one load step.
#[derive(Debug, Clone)]
pub struct DataBatch {
    pub step: usize,
    pub ys: Vec<DVector<f64>>,
}

impl DataBatch {
    pub fn n_obs(&self) -> usize {
        self.ys.len()
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.ys.first() else {
            return Err(Error::Config("data batch is empty".into()));
        };
        if self.ys.iter().any(|y| y.len() != first.len()) {
            return Err(Error::Config(
                "data batch mixes observation lengths".into(),
            ));
        }
        Ok(())
    }

    /// Sum over the repeated observations, `Σⱼ yⱼ`.
    pub fn sum(&self) -> DVector<f64> {
        let mut acc = DVector::zeros(self.ys.first().map_or(0, |y| y.len()));
        for y in &self.ys {
            acc += y;
        }
        acc
    }

    pub fn mean(&self) -> DVector<f64> {
        self.sum() / self.n_obs() as f64
    }
}

/// Deterministic fine-mesh reference trajectory the synthetic data is drawn
/// from. The mesh must not share interior nodes with the ensemble mesh.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub mesh: Mesh,
    /// Converged states at the recorded steps.
    pub snapshots: BTreeMap<usize, FieldState>,
    /// Reaction force after every step `1..=n_steps`.
    pub forces: Vec<(usize, f64)>,
}

impl GroundTruth {
    pub fn snapshot(&self, step: usize) -> Result<&FieldState> {
        self.snapshots.get(&step).ok_or_else(|| {
            Error::Config(format!("ground truth holds no snapshot for step {step}"))
        })
    }
}

/// Fine rod mesh for ground truth: `2n+1` elements over the same interval,
/// so interior nodes never coincide with the `n`-element ensemble mesh.
pub fn truth_mesh_1d(n_ensemble_elems: usize, x_min: f64, x_max: f64) -> Result<Mesh> {
    build_mesh_1d(2 * n_ensemble_elems + 1, x_min, x_max)
}

/// Run the deterministic fine-mesh model and record snapshots at the steps
/// data will be generated for.
#[allow(clippy::too_many_arguments)]
pub fn run_ground_truth(
    mesh: Mesh,
    params: &MaterialParams,
    bc: &BoundaryConditions,
    schedule: &LoadSchedule,
    settings: &NewtonSettings,
    n_steps: usize,
    nucleus: Option<&NucleusDraw>,
    record_steps: &BTreeSet<usize>,
    loaded_boundary: &str,
    load_component: usize,
) -> Result<GroundTruth> {
    let mut state = FieldState::new(&mesh);
    if let Some(draw) = nucleus {
        state.seed_floor(&nucleus_floor(&mesh, draw));
    }
    let mut snapshots = BTreeMap::new();
    let mut forces = Vec::with_capacity(n_steps);
    run_load_stepping(
        &mut state,
        &mesh,
        params,
        bc,
        schedule,
        settings,
        n_steps,
        loaded_boundary,
        load_component,
        |s, force| {
            forces.push((s.step, force));
            if record_steps.contains(&s.step) {
                snapshots.insert(s.step, s.clone());
            }
        },
    )?;
    Ok(GroundTruth {
        mesh,
        snapshots,
        forces,
    })
}

/// Sample `n_obs` noisy observations of the recorded truth at one step:
/// `y_j = ρ·(H_truth a_truth) + e_j` with `e_j ~ N(0, σ_e² I)` i.i.d.
/// Reproducible from `(seed, step)` regardless of call order.
pub fn generate_data(
    truth: &GroundTruth,
    sensors: &[[f64; 2]],
    rho: f64,
    sigma_e: f64,
    n_obs: usize,
    seed: u64,
    step: usize,
) -> Result<DataBatch> {
    if n_obs == 0 {
        return Err(Error::Config("n_obs must be at least 1".into()));
    }
    if sigma_e < 0.0 {
        return Err(Error::Config(format!(
            "sensor noise must be non-negative, got {sigma_e}"
        )));
    }
    let snapshot = truth.snapshot(step)?;
    let h = build_observation_matrix(&truth.mesh, sensors)?;
    let clean = h.apply(&snapshot.stacked()) * rho;
    let mut ys = Vec::with_capacity(n_obs);
    for j in 0..n_obs {
        let mut rng = rng_for(seed, "obs-noise", step as u64, j as u64);
        let noise = DVector::from_iterator(
            clean.len(),
            (0..clean.len()).map(|_| sigma_e * rng.sample::<f64, _>(StandardNormal)),
        );
        ys.push(&clean + noise);
    }
    Ok(DataBatch { step, ys })
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
/// Reports the first non-positive pivot instead of failing silently.
pub fn cholesky_lower(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = g.nrows();
    assert_eq!(n, g.ncols(), "cholesky needs a square matrix");
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut diag = g[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: diag });
        }
        let root = diag.sqrt();
        l[(j, j)] = root;
        for i in j + 1..n {
            let mut v = g[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / root;
        }
    }
    Ok(l)
}

/// Solve `L Lᵀ x = b` given the lower factor.
pub fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for i in 0..n {
        for k in 0..i {
            let v = x[k];
            x[i] -= l[(i, k)] * v;
        }
        x[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let v = x[k];
            x[i] -= l[(k, i)] * v;
        }
        x[i] /= l[(i, i)];
    }
    x
}

/// Multivariate Gaussian log density of a residual under covariance `g`:
/// `-½ (rᵀ g⁻¹ r + ln|g| + n ln 2π)`.
pub fn gaussian_log_density(resid: &DVector<f64>, g: &DMatrix<f64>) -> Result<f64> {
    let n = resid.len();
    assert_eq!(g.nrows(), n, "covariance/residual dimension mismatch");
    let l = cholesky_lower(g)?;
    // w = L⁻¹ r, so rᵀ G⁻¹ r = ‖w‖².
    let mut w = resid.clone();
    for i in 0..n {
        for k in 0..i {
            let v = w[k];
            w[i] -= l[(i, k)] * v;
        }
        w[i] /= l[(i, i)];
    }
    let quad = w.norm_squared();
    let logdet: f64 = (0..n).map(|i| 2.0 * l[(i, i)].ln()).sum();
    Ok(-0.5 * (quad + logdet + n as f64 * (2.0 * std::f64::consts::PI).ln()))
}

/// Marginal observation covariance `G = ρ²(HA)(HA)ᵀ + C_δ + σ_e² I` from the
/// observed anomaly factor `HA`.
pub fn observation_covariance(
    obs_anomalies: &DMatrix<f64>,
    rho: f64,
    c_delta: &DMatrix<f64>,
    sigma_e: f64,
) -> DMatrix<f64> {
    let mut g = obs_anomalies * obs_anomalies.transpose() * rho.powi(2);
    g += c_delta;
    for i in 0..g.nrows() {
        g[(i, i)] += sigma_e * sigma_e;
    }
    g
}

/// Batch marginal log likelihood: the repeated observations are modeled as
/// i.i.d. draws `y_j ~ N(mean_obs, g)` with `mean_obs = ρ·H·ā`, so the batch
/// value is the sum of the per-observation Gaussian log densities.
pub fn log_likelihood(
    batch: &DataBatch,
    mean_obs: &DVector<f64>,
    g: &DMatrix<f64>,
) -> Result<f64> {
    batch.validate()?;
    let l = cholesky_lower(g)?;
    let n = mean_obs.len();
    let logdet: f64 = (0..n).map(|i| 2.0 * l[(i, i)].ln()).sum();
    let mut total = 0.0;
    for y in &batch.ys {
        let mut w = y - mean_obs;
        for i in 0..n {
            for k in 0..i {
                let v = w[k];
                w[i] -= l[(i, k)] * v;
            }
            w[i] /= l[(i, i)];
        }
        total += -0.5 * (w.norm_squared() + logdet + n as f64 * (2.0 * std::f64::consts::PI).ln());
    }
    Ok(total)
}

/// Calibration knobs.
#[derive(Debug, Clone)]
pub struct CalibrationSettings {
    /// Add independent log-normal priors (unit log-std around the initial
    /// values) so the fit is a MAP estimate instead of a plain MLE.
    pub map_prior: bool,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        CalibrationSettings {
            map_prior: false,
            max_iters: 200,
            tol: 1e-9,
        }
    }
}

/// Result of a hyperparameter calibration.
#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub kernel: MaternParams,
    /// Negative log likelihood (plus prior penalty if enabled) at the optimum.
    pub objective: f64,
    pub converged: bool,
    pub evaluations: usize,
}

/// Fit the discrepancy kernel's (σ, l) by minimizing the negative batch log
/// likelihood with Nelder–Mead in log parameters; ν stays fixed. On
/// non-convergence the best iterate is returned with `converged = false`.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_hyperparameters(
    batch: &DataBatch,
    mean_obs: &DVector<f64>,
    obs_anomalies: &DMatrix<f64>,
    rho: f64,
    sensors: &[[f64; 2]],
    dim: usize,
    sigma_e: f64,
    init: MaternParams,
    settings: &CalibrationSettings,
) -> Result<CalibrationResult> {
    batch.validate()?;
    init.validate()?;
    let hch = obs_anomalies * obs_anomalies.transpose() * rho.powi(2);
    let init_log = [init.sigma.ln(), init.length.ln()];
    let mut evaluations = 0usize;
    let mut objective = |p: &[f64; 2]| -> f64 {
        evaluations += 1;
        let w = MaternParams {
            nu: init.nu,
            sigma: p[0].exp(),
            length: p[1].exp(),
        };
        let mut g = hch.clone();
        g += discrepancy_covariance(sensors, dim, &w);
        for i in 0..g.nrows() {
            g[(i, i)] += sigma_e * sigma_e;
        }
        let mut f = match log_likelihood(batch, mean_obs, &g) {
            Ok(ll) => -ll,
            Err(_) => return f64::INFINITY,
        };
        if settings.map_prior {
            f += 0.5 * (p[0] - init_log[0]).powi(2) + 0.5 * (p[1] - init_log[1]).powi(2);
        }
        if f.is_finite() {
            f
        } else {
            f64::INFINITY
        }
    };

    let (best, f_best, converged) =
        nelder_mead_2d(&mut objective, init_log, 0.5, settings.max_iters, settings.tol);
    if !f_best.is_finite() {
        return Err(Error::CalibrationDiverged { evaluations });
    }
    Ok(CalibrationResult {
        kernel: MaternParams {
            nu: init.nu,
            sigma: best[0].exp(),
            length: best[1].exp(),
        },
        objective: f_best,
        converged,
        evaluations,
    })
}

/// Minimal Nelder–Mead in two dimensions. Returns the best vertex, its value,
/// and whether the simplex collapsed below `tol` before `max_iters`.
fn nelder_mead_2d(
    f: &mut impl FnMut(&[f64; 2]) -> f64,
    start: [f64; 2],
    scale: f64,
    max_iters: usize,
    tol: f64,
) -> ([f64; 2], f64, bool) {
    let mut simplex = [
        start,
        [start[0] + scale, start[1]],
        [start[0], start[1] + scale],
    ];
    let mut values = simplex.map(|p| f(&p));
    let mut converged = false;
    for _ in 0..max_iters {
        // Order best → worst.
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = [simplex[idx[0]], simplex[idx[1]], simplex[idx[2]]];
        values = [values[idx[0]], values[idx[1]], values[idx[2]]];
        let spread = (values[2] - values[0]).abs();
        if spread < tol * (1.0 + values[0].abs()) {
            converged = true;
            break;
        }
        let centroid = [
            0.5 * (simplex[0][0] + simplex[1][0]),
            0.5 * (simplex[0][1] + simplex[1][1]),
        ];
        let dir = [centroid[0] - simplex[2][0], centroid[1] - simplex[2][1]];
        let at = |t: f64| [centroid[0] + t * dir[0], centroid[1] + t * dir[1]];

        let reflected = at(1.0);
        let f_r = f(&reflected);
        if f_r < values[0] {
            let expanded = at(2.0);
            let f_e = f(&expanded);
            if f_e < f_r {
                simplex[2] = expanded;
                values[2] = f_e;
            } else {
                simplex[2] = reflected;
                values[2] = f_r;
            }
        } else if f_r < values[1] {
            simplex[2] = reflected;
            values[2] = f_r;
        } else {
            let contracted = if f_r < values[2] { at(0.5) } else { at(-0.5) };
            let f_c = f(&contracted);
            if f_c < values[2].min(f_r) {
                simplex[2] = contracted;
                values[2] = f_c;
            } else {
                // Shrink towards the best vertex.
                for k in 1..3 {
                    simplex[k] = [
                        0.5 * (simplex[k][0] + simplex[0][0]),
                        0.5 * (simplex[k][1] + simplex[0][1]),
                    ];
                    values[k] = f(&simplex[k]);
                }
            }
        }
    }
    let mut best = 0;
    for k in 1..3 {
        if values[k] < values[best] {
            best = k;
        }
    }
    (simplex[best], values[best], converged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh_sens, Diagonal, RefineBand};

    #[test]
    fn sensor_at_a_node_selects_that_dof() {
        let mesh = build_mesh_1d(10, -1.0, 1.0).unwrap();
        let h = build_observation_matrix(&mesh, &[[mesh.coord(3)[0], 0.0]]).unwrap();
        assert_eq!(h.n_rows(), 1);
        let row = &h.rows()[0];
        let heavy: Vec<_> = row.iter().filter(|&&(_, w)| w.abs() > 1e-12).collect();
        assert_eq!(heavy.len(), 1);
        assert_eq!(heavy[0].0, mesh.u_dof(3, 0));
        assert!((heavy[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equispaced_rod_sensors_have_short_rows_that_sum_to_one() {
        let mesh = build_mesh_1d(200, -1.0, 1.0).unwrap();
        let sensors = equispaced_sensors_1d(25, -1.0, 1.0);
        let h = build_observation_matrix(&mesh, &sensors).unwrap();
        assert_eq!(h.n_rows(), 25);
        for row in h.rows() {
            assert!(row.len() <= 2);
            let sum: f64 = row.iter().map(|&(_, w)| w).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        h.check_structure().unwrap();
    }

    #[test]
    fn observation_is_exact_on_linear_fields() {
        // 1D: u(x) = 3x - 2.
        let mesh = build_mesh_1d(17, -1.0, 1.0).unwrap();
        let sensors = equispaced_sensors_1d(9, -1.0, 1.0);
        let h = build_observation_matrix(&mesh, &sensors).unwrap();
        let mut stacked = vec![0.0; mesh.n_total_dofs()];
        for n in 0..mesh.n_nodes() {
            stacked[mesh.u_dof(n, 0)] = 3.0 * mesh.coord(n)[0] - 2.0;
        }
        let y = h.apply(&stacked);
        for (yi, s) in y.iter().zip(&sensors) {
            assert!((yi - (3.0 * s[0] - 2.0)).abs() < 1e-12);
        }

        // 2D: u = (x + 2y, 4 - y), rows ordered (sensor, component).
        let mesh2 = build_mesh_sens(0.23, 0.12, RefineBand::sens_default(), Diagonal::Falling)
            .unwrap();
        let sensors2 = grid_sensors_2d(3, 3, (0.1, 0.9), (0.08, 0.88));
        let h2 = build_observation_matrix(&mesh2, &sensors2).unwrap();
        assert_eq!(h2.n_rows(), 18);
        let mut stacked2 = vec![0.0; mesh2.n_total_dofs()];
        for n in 0..mesh2.n_nodes() {
            let [x, y] = mesh2.coord(n);
            stacked2[mesh2.u_dof(n, 0)] = x + 2.0 * y;
            stacked2[mesh2.u_dof(n, 1)] = 4.0 - y;
        }
        let y2 = h2.apply(&stacked2);
        for (s, pair) in sensors2.iter().zip(y2.as_slice().chunks(2)) {
            assert!((pair[0] - (s[0] + 2.0 * s[1])).abs() < 1e-12);
            assert!((pair[1] - (4.0 - s[1])).abs() < 1e-12);
        }
        h2.check_structure().unwrap();
    }

    #[test]
    fn sensor_outside_the_domain_is_rejected() {
        let mesh = build_mesh_1d(10, -1.0, 1.0).unwrap();
        let err = build_observation_matrix(&mesh, &[[1.5, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::SensorOutsideMesh(_)));
    }

    #[test]
    fn discrepancy_covariance_is_blockwise_matern() {
        let sensors = grid_sensors_2d(2, 2, (0.2, 0.8), (0.2, 0.8));
        let w = MaternParams {
            nu: 1.5,
            sigma: 0.3,
            length: 0.4,
        };
        let c = discrepancy_covariance(&sensors, 2, &w);
        assert_eq!(c.nrows(), 8);
        for i in 0..8 {
            assert!((c[(i, i)] - 0.09).abs() < 1e-12);
            for j in 0..8 {
                if i % 2 != j % 2 {
                    assert_eq!(c[(i, j)], 0.0, "components must be uncorrelated");
                } else {
                    let expect = matern(&sensors[i / 2], &sensors[j / 2], &w);
                    assert!((c[(i, j)] - expect).abs() < 1e-14);
                }
            }
        }
    }

    fn rod_truth(n_steps: usize, record: &[usize]) -> GroundTruth {
        let mesh = truth_mesh_1d(24, -1.0, 1.0).unwrap();
        let params = MaterialParams {
            youngs: 210_000.0,
            poisson: 0.3,
            gc: 2.7,
            ell: 2.5e-2,
            beta: 100.0,
        };
        let bc = BoundaryConditions::bar(&mesh).unwrap();
        run_ground_truth(
            mesh,
            &params,
            &bc,
            &LoadSchedule::uniform(1e-4),
            &NewtonSettings::default(),
            n_steps,
            Some(&NucleusDraw {
                center: [0.57, 0.0],
                magnitude: 0.7,
                std: 0.05,
            }),
            &record.iter().copied().collect(),
            "right",
            0,
        )
        .unwrap()
    }

    #[test]
    fn truth_mesh_is_not_nested_in_the_ensemble_mesh() {
        let coarse = build_mesh_1d(24, -1.0, 1.0).unwrap();
        let fine = truth_mesh_1d(24, -1.0, 1.0).unwrap();
        assert!(fine.n_elems() > 2 * coarse.n_elems());
        for nf in 1..fine.n_nodes() - 1 {
            for nc in 1..coarse.n_nodes() - 1 {
                assert!(
                    (fine.coord(nf)[0] - coarse.coord(nc)[0]).abs() > 1e-9,
                    "interior nodes must not coincide"
                );
            }
        }
    }

    #[test]
    fn noiseless_data_reproduces_the_interpolated_truth() {
        let truth = rod_truth(3, &[2, 3]);
        let sensors = equispaced_sensors_1d(7, -1.0, 1.0);
        let batch = generate_data(&truth, &sensors, 1.0, 0.0, 4, 99, 3).unwrap();
        assert_eq!(batch.n_obs(), 4);
        let h = build_observation_matrix(&truth.mesh, &sensors).unwrap();
        let clean = h.apply(&truth.snapshot(3).unwrap().stacked());
        for y in &batch.ys {
            for (a, b) in y.iter().zip(clean.iter()) {
                assert_eq!(a, b, "zero noise must reproduce the truth exactly");
            }
        }
        // Unrecorded step is an error.
        assert!(generate_data(&truth, &sensors, 1.0, 0.0, 4, 99, 1).is_err());
    }

    #[test]
    fn data_noise_has_the_requested_scale_and_mean() {
        let truth = rod_truth(2, &[2]);
        let sensors = equispaced_sensors_1d(25, -1.0, 1.0);
        let h = build_observation_matrix(&truth.mesh, &sensors).unwrap();
        let clean = h.apply(&truth.snapshot(2).unwrap().stacked());
        let sigma_e = 4e-4;

        // Per-sensor sample std over n_obs = 20 stays inside a wide band.
        let batch = generate_data(&truth, &sensors, 1.0, sigma_e, 20, 7, 2).unwrap();
        let mean = batch.mean();
        for s in 0..sensors.len() {
            let var: f64 = batch
                .ys
                .iter()
                .map(|y| (y[s] - mean[s]).powi(2))
                .sum::<f64>()
                / (batch.n_obs() - 1) as f64;
            let std = var.sqrt();
            assert!(
                (std - sigma_e).abs() < 2e-4,
                "sensor {s}: sample std {std} outside 4e-4 ± 2e-4"
            );
        }

        // Sample mean over 1e4 draws concentrates on the truth (CLT rate).
        let big = generate_data(&truth, &sensors, 1.0, sigma_e, 10_000, 7, 2).unwrap();
        let big_mean = big.mean();
        for s in 0..sensors.len() {
            assert!(
                (big_mean[s] - clean[s]).abs() < 3.0 * sigma_e / 100.0,
                "sensor {s}: mean off by {}",
                (big_mean[s] - clean[s]).abs()
            );
        }

        // Reproducible from the seed.
        let again = generate_data(&truth, &sensors, 1.0, sigma_e, 20, 7, 2).unwrap();
        for (a, b) in batch.ys.iter().zip(&again.ys) {
            assert_eq!(a.as_slice(), b.as_slice());
        }
    }

    #[test]
    fn gaussian_log_density_matches_closed_forms() {
        // Scalar case against the 1D formula.
        let r = DVector::from_vec(vec![0.7]);
        let g = DMatrix::from_vec(1, 1, vec![0.3]);
        let got = gaussian_log_density(&r, &g).unwrap();
        let expect = -0.5 * (0.7f64 * 0.7 / 0.3 + 0.3f64.ln() + (2.0 * std::f64::consts::PI).ln());
        assert!((got - expect).abs() < 1e-12);

        // Zero residual under the identity: -(n/2) log 2π.
        let n = 5;
        let got = gaussian_log_density(&DVector::zeros(n), &DMatrix::identity(n, n)).unwrap();
        assert!((got + n as f64 / 2.0 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);

        // Dense 3×3 oracle via explicit inverse and determinant.
        let g = DMatrix::from_row_slice(
            3,
            3,
            &[2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.1],
        );
        let r = DVector::from_vec(vec![0.4, -0.9, 0.25]);
        let inv = g.clone().try_inverse().unwrap();
        let quad: f64 = (r.transpose() * &inv * &r)[(0, 0)];
        let logdet: f64 = g.determinant().ln();
        let expect = -0.5 * (quad + logdet + 3.0 * (2.0 * std::f64::consts::PI).ln());
        let got = gaussian_log_density(&r, &g).unwrap();
        assert!((got - expect).abs() < 1e-10);

        // Monotone: growing the residual lowers the density.
        let worse = gaussian_log_density(&(&r * 2.0), &g).unwrap();
        assert!(worse < got);

        // Non-PD covariance reports its pivot.
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match gaussian_log_density(&DVector::zeros(2), &bad).unwrap_err() {
            Error::NotPositiveDefinite { pivot } => assert!((pivot + 3.0).abs() < 1e-12),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn batch_likelihood_sums_per_observation_densities() {
        let g = DMatrix::from_row_slice(2, 2, &[1.2, 0.4, 0.4, 0.9]);
        let mean = DVector::from_vec(vec![0.1, -0.3]);
        let ys = vec![
            DVector::from_vec(vec![0.15, -0.4]),
            DVector::from_vec(vec![0.05, -0.1]),
            DVector::from_vec(vec![0.3, -0.35]),
        ];
        let batch = DataBatch { step: 1, ys: ys.clone() };
        let total = log_likelihood(&batch, &mean, &g).unwrap();
        let by_hand: f64 = ys
            .iter()
            .map(|y| gaussian_log_density(&(y - &mean), &g).unwrap())
            .sum();
        assert!((total - by_hand).abs() < 1e-12);
    }

    /// Draw `n_obs` observations y_j = mean + δ_j + e_j with δ_j ~ N(0, C_δ(w)).
    fn synthetic_batch(
        mean: &DVector<f64>,
        sensors: &[[f64; 2]],
        w: Option<&MaternParams>,
        sigma_e: f64,
        n_obs: usize,
        seed: u64,
    ) -> DataBatch {
        let l_delta = w.map(|w| {
            cholesky_lower(&discrepancy_covariance(sensors, 1, w)).expect("C_delta PD")
        });
        let mut ys = Vec::with_capacity(n_obs);
        for j in 0..n_obs {
            let mut rng = rng_for(seed, "cal-test", j as u64, 0);
            let mut y = mean.clone();
            if let Some(l) = &l_delta {
                let z = DVector::from_iterator(
                    mean.len(),
                    (0..mean.len()).map(|_| rng.sample::<f64, _>(StandardNormal)),
                );
                y += l * z;
            }
            for v in y.iter_mut() {
                *v += sigma_e * rng.sample::<f64, _>(StandardNormal);
            }
            ys.push(y);
        }
        DataBatch { step: 0, ys }
    }

    #[test]
    fn calibration_recovers_known_hyperparameters() {
        let sensors = equispaced_sensors_1d(12, 0.0, 1.0);
        let truth_w = MaternParams {
            nu: 1.5,
            sigma: 5e-3,
            length: 0.3,
        };
        let mean = DVector::from_fn(12, |i, _| 1e-3 * i as f64);
        let sigma_e = 1e-4;
        let batch = synthetic_batch(&mean, &sensors, Some(&truth_w), sigma_e, 200, 31);
        let init = MaternParams {
            nu: 1.5,
            sigma: 1e-3,
            length: 0.1,
        };
        // No ensemble spread in this synthetic study.
        let ha = DMatrix::zeros(12, 2);
        let fit = calibrate_hyperparameters(
            &batch,
            &mean,
            &ha,
            1.0,
            &sensors,
            1,
            sigma_e,
            init,
            &CalibrationSettings::default(),
        )
        .unwrap();
        assert!(fit.converged, "calibration should converge");
        assert!(
            (fit.kernel.sigma - truth_w.sigma).abs() < 0.2 * truth_w.sigma,
            "sigma {} vs {}",
            fit.kernel.sigma,
            truth_w.sigma
        );
        assert!(
            (fit.kernel.length - truth_w.length).abs() < 0.3 * truth_w.length,
            "length {} vs {}",
            fit.kernel.length,
            truth_w.length
        );

        // Descent: the fit is at least as good as the initial guess.
        let g_init = {
            let mut g = discrepancy_covariance(&sensors, 1, &init);
            for i in 0..g.nrows() {
                g[(i, i)] += sigma_e * sigma_e;
            }
            g
        };
        let f_init = -log_likelihood(&batch, &mean, &g_init).unwrap();
        assert!(fit.objective <= f_init + 1e-9);
        assert!(fit.evaluations >= 3);
    }

    #[test]
    fn zero_discrepancy_data_drives_sigma_to_the_noise_floor() {
        let sensors = equispaced_sensors_1d(10, 0.0, 1.0);
        let mean = DVector::from_fn(10, |i, _| (i as f64 * 0.4).sin() * 1e-3);
        let sigma_e = 1e-4;
        let batch = synthetic_batch(&mean, &sensors, None, sigma_e, 150, 5);
        let init = MaternParams {
            nu: 1.5,
            sigma: 5e-3,
            length: 0.2,
        };
        let ha = DMatrix::zeros(10, 2);
        let fit = calibrate_hyperparameters(
            &batch,
            &mean,
            &ha,
            1.0,
            &sensors,
            1,
            sigma_e,
            init,
            &CalibrationSettings::default(),
        )
        .unwrap();
        assert!(
            fit.kernel.sigma < 10.0 * sigma_e,
            "sigma {} should collapse towards the noise scale",
            fit.kernel.sigma
        );
    }

    #[test]
    fn map_prior_pulls_the_fit_towards_the_initial_values() {
        let sensors = equispaced_sensors_1d(8, 0.0, 1.0);
        let mean = DVector::zeros(8);
        let sigma_e = 1e-4;
        let batch = synthetic_batch(&mean, &sensors, None, sigma_e, 40, 17);
        let init = MaternParams {
            nu: 1.5,
            sigma: 2e-3,
            length: 0.25,
        };
        let ha = DMatrix::zeros(8, 2);
        let mle = calibrate_hyperparameters(
            &batch, &mean, &ha, 1.0, &sensors, 1, sigma_e, init,
            &CalibrationSettings::default(),
        )
        .unwrap();
        let map = calibrate_hyperparameters(
            &batch, &mean, &ha, 1.0, &sensors, 1, sigma_e, init,
            &CalibrationSettings {
                map_prior: true,
                ..CalibrationSettings::default()
            },
        )
        .unwrap();
        // Zero-discrepancy data wants sigma → 0; the prior resists the drop.
        assert!(map.kernel.sigma > mle.kernel.sigma);
        let pull = |r: &CalibrationResult| (r.kernel.sigma.ln() - init.sigma.ln()).abs();
        assert!(pull(&map) < pull(&mle));
    }
}
