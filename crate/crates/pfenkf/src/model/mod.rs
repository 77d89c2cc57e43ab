//! The micromorphic phase-field fracture model and its solver.
//!
//! The phase field φ is condensed out locally: at every quadrature point it
//! is the closed-form minimizer
//!
//! φ = min( max( (2Ψ⁺ + α d) / (2Ψ⁺ + α + G_c/λ), φ′ ), 1 )
//!
//! where d is the micromorphic field, φ′ the irreversibility floor carried
//! from the previous step, and λ the active length scale. Within a load
//! step the micromorphic field entering φ is the linear extrapolation of
//! the two previous converged states, which makes the step energy convex in
//! (u, d) and the coupled tangent block lower-triangular.

pub mod assembly;
pub mod solve;

use crate::error::{Error, Result};
use crate::material::MaterialParams;
use crate::mesh::Mesh;

pub use assembly::{assemble, assemble_energy, Assembled, AssemblyContext, PhiCoupling, SystemKind};
pub use solve::{newton_solve, newton_step, NewtonOutcome, NewtonReport, NewtonSettings};

/// AT2 normalization constant c_w.
pub const C_W: f64 = 2.0;

/// Degradation g(φ) = (1-φ)².
pub fn degradation(phi: f64) -> f64 {
    (1.0 - phi) * (1.0 - phi)
}

/// g′(φ) = -2(1-φ).
pub fn degradation_prime(phi: f64) -> f64 {
    -2.0 * (1.0 - phi)
}

/// Crack surface density w(φ) = φ².
pub fn crack_density(phi: f64) -> f64 {
    phi * phi
}

/// w′(φ) = 2φ.
pub fn crack_density_prime(phi: f64) -> f64 {
    2.0 * phi
}

/// Closed-form local phase update at one quadrature point.
pub fn local_phase_update(
    psi_pos: f64,
    d: f64,
    phi_floor: f64,
    params: &MaterialParams,
    lambda: f64,
) -> f64 {
    let den = 2.0 * psi_pos + params.alpha() + params.gc / lambda;
    let raw = (2.0 * psi_pos + params.alpha() * d) / den;
    raw.max(phi_floor).min(1.0)
}

/// Linear extrapolation of the micromorphic dofs across load steps:
/// ǎ = a_{n-1} + Δt_n (a_{n-1} - a_{n-2}) / Δt_{n-1}. Until two converged
/// states exist (signalled by `dt_prev <= 0`) or for a zero increment the
/// previous state is returned unchanged.
pub fn extrapolate_micromorphic(
    a_d_prev: &[f64],
    a_d_prev2: &[f64],
    dt_n: f64,
    dt_prev: f64,
) -> Vec<f64> {
    if dt_prev <= 0.0 || dt_n == 0.0 {
        return a_d_prev.to_vec();
    }
    let c = dt_n / dt_prev;
    a_d_prev
        .iter()
        .zip(a_d_prev2)
        .map(|(a, b)| a + c * (a - b))
        .collect()
}

/// Piecewise-constant loading program: segment k prescribes the Dirichlet
/// increment per step from `from_step` until the next segment starts.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LoadSchedule {
    pub segments: Vec<LoadSegment>,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LoadSegment {
    pub from_step: usize,
    pub delta_u: f64,
}

impl LoadSchedule {
    pub fn uniform(delta_u: f64) -> Self {
        LoadSchedule {
            segments: vec![LoadSegment { from_step: 1, delta_u }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() || self.segments[0].from_step != 1 {
            return Err(Error::Config(
                "load schedule must start with a segment at step 1".into(),
            ));
        }
        for pair in self.segments.windows(2) {
            if pair[1].from_step <= pair[0].from_step {
                return Err(Error::Config(
                    "load schedule segments must have strictly increasing start steps".into(),
                ));
            }
        }
        if self.segments.iter().any(|s| !(s.delta_u > 0.0)) {
            return Err(Error::Config(
                "load schedule increments must be strictly positive".into(),
            ));
        }
        Ok(())
    }

    /// Dirichlet increment applied at `step` (1-based).
    pub fn increment(&self, step: usize) -> f64 {
        let mut du = self.segments[0].delta_u;
        for s in &self.segments {
            if s.from_step <= step {
                du = s.delta_u;
            }
        }
        du
    }

    /// Accumulated prescribed displacement after `step` steps.
    pub fn u_at(&self, step: usize) -> f64 {
        let mut total = 0.0;
        for (k, s) in self.segments.iter().enumerate() {
            let end = self
                .segments
                .get(k + 1)
                .map(|n| n.from_step - 1)
                .unwrap_or(step)
                .min(step);
            if end >= s.from_step {
                total += (end - s.from_step + 1) as f64 * s.delta_u;
            }
        }
        total
    }
}

/// Dirichlet constraints on displacement dofs: each entry prescribes
/// `a_u[dof] = scale × u_D` for the current load value `u_D`.
#[derive(Debug, Clone, Default)]
pub struct BoundaryConditions {
    pub entries: Vec<(usize, f64)>,
}

impl BoundaryConditions {
    /// Bar pulled at the right end, fixed at the left.
    pub fn bar(mesh: &Mesh) -> Result<Self> {
        let left = mesh.boundary("left")?;
        let right = mesh.boundary("right")?;
        let mut entries = Vec::new();
        for &n in left {
            entries.push((mesh.u_dof(n, 0), 0.0));
        }
        for &n in right {
            entries.push((mesh.u_dof(n, 0), 1.0));
        }
        Ok(BoundaryConditions { entries })
    }

    /// Single-edge notched shear: bottom fully fixed, top sheared
    /// horizontally with zero vertical motion, lateral edges vertically
    /// constrained.
    pub fn sens(mesh: &Mesh) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for &n in mesh.boundary("left")? {
            map.insert(mesh.u_dof(n, 1), 0.0);
        }
        for &n in mesh.boundary("right")? {
            map.insert(mesh.u_dof(n, 1), 0.0);
        }
        for &n in mesh.boundary("top")? {
            map.insert(mesh.u_dof(n, 0), 1.0);
            map.insert(mesh.u_dof(n, 1), 0.0);
        }
        for &n in mesh.boundary("bottom")? {
            map.insert(mesh.u_dof(n, 0), 0.0);
            map.insert(mesh.u_dof(n, 1), 0.0);
        }
        Ok(BoundaryConditions {
            entries: map.into_iter().collect(),
        })
    }

    pub fn apply(&self, a_u: &mut [f64], u_d: f64) {
        for &(dof, scale) in &self.entries {
            a_u[dof] = scale * u_d;
        }
    }

    pub fn constrained_dofs(&self) -> Vec<usize> {
        self.entries.iter().map(|&(d, _)| d).collect()
    }
}

/// Complete solver state of one realization at a converged load step.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub a_u: Vec<f64>,
    pub a_d: Vec<f64>,
    /// Phase field at quadrature points; the irreversibility floor for the
    /// next step. Monotone non-decreasing across forecast steps.
    pub phi_q: Vec<f64>,
    /// Micromorphic dofs one and two converged increments back.
    pub a_d_prev: Vec<f64>,
    pub a_d_prev2: Vec<f64>,
    /// Pseudo-time of the last converged increment; 0 until history exists.
    pub dt_last: f64,
    /// Converged increments so far (saturates at 2; extrapolation is active
    /// only from the third increment on).
    pub history_steps: usize,
    pub step: usize,
    pub u_d: f64,
}

impl FieldState {
    pub fn new(mesh: &Mesh) -> Self {
        FieldState {
            a_u: vec![0.0; mesh.n_u_dofs()],
            a_d: vec![0.0; mesh.n_d_dofs()],
            phi_q: vec![0.0; mesh.n_qp_total()],
            a_d_prev: vec![0.0; mesh.n_d_dofs()],
            a_d_prev2: vec![0.0; mesh.n_d_dofs()],
            dt_last: 0.0,
            history_steps: 0,
            step: 0,
            u_d: 0.0,
        }
    }

    /// Initial damage: raise the floor (and the current phase field) to a
    /// pointwise maximum with `floor` at every quadrature point.
    pub fn seed_floor(&mut self, floor: &[f64]) {
        assert_eq!(floor.len(), self.phi_q.len());
        for (p, &f) in self.phi_q.iter_mut().zip(floor) {
            *p = p.max(f);
        }
    }

    /// Stacked state vector [a_u, a_d] seen by the filter.
    pub fn stacked(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.a_u.len() + self.a_d.len());
        v.extend_from_slice(&self.a_u);
        v.extend_from_slice(&self.a_d);
        v
    }

    pub fn set_stacked(&mut self, v: &[f64]) {
        let n_u = self.a_u.len();
        assert_eq!(v.len(), n_u + self.a_d.len());
        self.a_u.copy_from_slice(&v[..n_u]);
        self.a_d.copy_from_slice(&v[n_u..]);
    }

    /// Forget the extrapolation history so the next step extrapolates
    /// constantly from the current micromorphic field.
    pub fn reset_extrapolation(&mut self) {
        self.a_d_prev.copy_from_slice(&self.a_d);
        self.a_d_prev2.copy_from_slice(&self.a_d);
    }
}

/// Outcome of one committed load step.
#[derive(Debug, Clone, Default)]
pub struct StepReport {
    /// Newton iterations summed over sub-steps.
    pub iterations: usize,
    /// Number of committed sub-increments (1 when no cutting happened).
    pub substeps: usize,
    /// How many times the increment was halved.
    pub cuts: usize,
}

/// Advance one schedule step, cutting the increment in halves (up to
/// `settings.max_cuts`) when Newton fails.
pub fn advance_step(
    state: &mut FieldState,
    mesh: &Mesh,
    params: &MaterialParams,
    bc: &BoundaryConditions,
    schedule: &LoadSchedule,
    settings: &NewtonSettings,
) -> Result<StepReport> {
    let target_step = state.step + 1;
    let du_total = schedule.increment(target_step);
    let mut remaining = du_total;
    let mut du_try = du_total;
    let mut cuts = 0usize;
    let mut report = StepReport::default();

    while remaining > 1e-14 * du_total {
        match solve_increment(state, mesh, params, bc, du_try, settings) {
            Ok(iters) => {
                report.iterations += iters;
                report.substeps += 1;
                remaining -= du_try;
                du_try = du_try.min(remaining);
            }
            Err(err @ (Error::NewtonDiverged { .. } | Error::LinearSolve(_))) => {
                cuts += 1;
                if cuts > settings.max_cuts {
                    return Err(err);
                }
                du_try *= 0.5;
            }
            Err(other) => return Err(other),
        }
    }
    state.step = target_step;
    report.cuts = cuts;
    Ok(report)
}

/// Solve a single increment of size `du` from the current converged state
/// and commit it (state history update included). Returns the Newton
/// iteration count.
fn solve_increment(
    state: &mut FieldState,
    mesh: &Mesh,
    params: &MaterialParams,
    bc: &BoundaryConditions,
    du: f64,
    settings: &NewtonSettings,
) -> Result<usize> {
    let dt_prev = if state.history_steps >= 2 { state.dt_last } else { 0.0 };
    let mut a_d_check = extrapolate_micromorphic(&state.a_d, &state.a_d_prev, du, dt_prev);
    // During a snap the micromorphic field jumps by an amount that is not
    // load-proportional, so the linear extrapolation can overshoot past 1.
    // φ would then clamp to exactly 1 and the degraded stiffness g(φ) to
    // exactly 0, leaving a singular displacement block. Confining the
    // extrapolated field to the physical range keeps g positive; converged
    // states stay below 1, so the guard is inactive away from snaps.
    for v in a_d_check.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    let d_check_qp = assembly::nodal_to_qp(mesh, &a_d_check);

    let mut a_u = state.a_u.clone();
    let mut a_d = state.a_d.clone();
    bc.apply(&mut a_u, state.u_d + du);

    let ctx = AssemblyContext {
        mesh,
        params,
        lambda: params.ell,
        phi_floor: &state.phi_q,
        phi_coupling: PhiCoupling::Extrapolated(&d_check_qp),
    };
    let outcome = newton_solve(
        &ctx,
        SystemKind::Monolithic,
        &mut a_u,
        &mut a_d,
        &bc.constrained_dofs(),
        settings,
    )?;

    state.a_d_prev2 = std::mem::take(&mut state.a_d_prev);
    state.a_d_prev = std::mem::replace(&mut state.a_d, a_d);
    state.a_u = a_u;
    state.phi_q = outcome.phi_q;
    state.dt_last = du;
    state.history_steps = (state.history_steps + 1).min(2);
    state.u_d += du;
    Ok(outcome.report.iterations)
}

/// Reaction force conjugate to the prescribed displacement: the sum of the
/// unconstrained residual over the loaded boundary's dofs in the loading
/// direction, evaluated with the converged phase field held fixed.
pub fn reaction_force(
    state: &FieldState,
    mesh: &Mesh,
    params: &MaterialParams,
    boundary: &str,
    component: usize,
) -> Result<f64> {
    let ctx = AssemblyContext {
        mesh,
        params,
        lambda: params.ell,
        phi_floor: &state.phi_q,
        phi_coupling: PhiCoupling::Frozen(&state.phi_q),
    };
    let out = assemble(&ctx, &state.a_u, &state.a_d, SystemKind::DisplacementOnly, false)?;
    let mut force = 0.0;
    for &n in mesh.boundary(boundary)? {
        force += out.r_u[mesh.u_dof(n, component)];
    }
    Ok(force)
}

/// Deterministic forward run: `n_steps` committed steps with per-step
/// reaction forces.
pub fn run_load_stepping(
    state: &mut FieldState,
    mesh: &Mesh,
    params: &MaterialParams,
    bc: &BoundaryConditions,
    schedule: &LoadSchedule,
    settings: &NewtonSettings,
    n_steps: usize,
    loaded_boundary: &str,
    load_component: usize,
    mut per_step: impl FnMut(&FieldState, f64),
) -> Result<()> {
    schedule.validate()?;
    for _ in 0..n_steps {
        advance_step(state, mesh, params, bc, schedule, settings)?;
        let force = reaction_force(state, mesh, params, loaded_boundary, load_component)?;
        per_step(state, force);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh_1d;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn params() -> MaterialParams {
        MaterialParams {
            youngs: 210_000.0,
            poisson: 0.3,
            gc: 2.7,
            ell: 2.5e-2,
            beta: 100.0,
        }
    }

    #[test]
    fn at2_functions() {
        assert_eq!(degradation(0.0), 1.0);
        assert_eq!(degradation(1.0), 0.0);
        assert_eq!(degradation_prime(1.0), 0.0);
        assert_eq!(crack_density(0.5), 0.25);
        assert_eq!(crack_density_prime(0.5), 1.0);
        assert_eq!(C_W, 2.0);
    }

    #[test]
    fn local_update_bounds_and_clamps() {
        let p = params();
        // Zero drive, zero floor: undamaged.
        assert_eq!(local_phase_update(0.0, 0.0, 0.0, &p, p.ell), 0.0);
        // The floor wins when the drive is small.
        assert_eq!(local_phase_update(0.0, 0.0, 0.7, &p, p.ell), 0.7);
        // Saturation at 1 for overwhelming drive.
        assert!((local_phase_update(1e12, 0.0, 0.0, &p, p.ell) - 1.0).abs() < 1e-6);
        assert!(local_phase_update(1e300, 1.0, 0.0, &p, p.ell) <= 1.0);
    }

    #[test]
    fn local_update_is_monotone_in_drive_and_d() {
        let p = params();
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        for _ in 0..20_000 {
            let psi: f64 = rng.random_range(0.0..1e5);
            let d: f64 = rng.random_range(0.0..1.0);
            let floor: f64 = rng.random_range(0.0..1.0);
            let lambda = if rng.random_bool(0.5) { p.ell } else { 4.0 * p.ell };
            let phi = local_phase_update(psi, d, floor, &p, lambda);
            assert!((floor..=1.0).contains(&phi), "phi out of [floor, 1]");
            let phi_up = local_phase_update(psi * 1.01 + 1e-9, d, floor, &p, lambda);
            assert!(phi_up >= phi - 1e-15, "not monotone in psi");
            let phi_d = local_phase_update(psi, (d + 0.01).min(1.0), floor, &p, lambda);
            assert!(phi_d >= phi - 1e-15, "not monotone in d");
        }
    }

    #[test]
    fn local_update_tracks_d_for_large_penalty() {
        let mut p = params();
        p.beta = 1e12;
        for d in [0.0, 0.3, 0.9] {
            let phi = local_phase_update(123.0, d, 0.0, &p, p.ell);
            assert!((phi - d).abs() < 1e-9, "alpha → ∞ should give phi → d");
        }
    }

    #[test]
    fn extrapolation_bootstrap_and_formula() {
        let a1 = [1.0, 2.0];
        let a0 = [0.5, 1.0];
        // No history or zero increment: previous state.
        assert_eq!(extrapolate_micromorphic(&a1, &a0, 0.1, 0.0), a1.to_vec());
        assert_eq!(extrapolate_micromorphic(&a1, &a0, 0.0, 0.1), a1.to_vec());
        // Equal spacing: linear continuation.
        let e = extrapolate_micromorphic(&a1, &a0, 0.1, 0.1);
        assert_eq!(e, vec![1.5, 3.0]);
        // Halved increment: half the slope.
        let e = extrapolate_micromorphic(&a1, &a0, 0.05, 0.1);
        assert_eq!(e, vec![1.25, 2.5]);
    }

    #[test]
    fn load_schedule_accumulates_segments() {
        let s = LoadSchedule {
            segments: vec![
                LoadSegment { from_step: 1, delta_u: 1e-4 },
                LoadSegment { from_step: 71, delta_u: 1e-5 },
            ],
        };
        s.validate().unwrap();
        assert_eq!(s.increment(1), 1e-4);
        assert_eq!(s.increment(70), 1e-4);
        assert_eq!(s.increment(71), 1e-5);
        assert!((s.u_at(70) - 70.0e-4).abs() < 1e-15);
        assert!((s.u_at(100) - (70.0e-4 + 30.0e-5)).abs() < 1e-15);

        let bad = LoadSchedule {
            segments: vec![LoadSegment { from_step: 2, delta_u: 1.0 }],
        };
        assert!(bad.validate().is_err());
        let bad = LoadSchedule {
            segments: vec![LoadSegment { from_step: 1, delta_u: -1.0 }],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn bar_boundary_conditions() {
        let mesh = build_mesh_1d(10, -1.0, 1.0).unwrap();
        let bc = BoundaryConditions::bar(&mesh).unwrap();
        let mut u = vec![f64::NAN; mesh.n_u_dofs()];
        bc.apply(&mut u, 2.0);
        assert_eq!(u[0], 0.0);
        assert_eq!(u[10], 2.0);
    }
}
