//! Ensemble representation: prior sampling, parallel forecasts, and the
//! covariance-factor algebra consumed by the Kalman update.
//!
//! The ensemble covariance is never formed densely at full state dimension.
//! All filter algebra goes through the anomaly factor `A` (state × members,
//! columns `(a_i - mean) / sqrt(n - 1)`), so `C = A Aᵀ` stays implicit.

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Beta, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::material::MaterialParams;
use crate::mesh::Mesh;
use crate::model::{
    advance_step, BoundaryConditions, FieldState, LoadSchedule, NewtonSettings, StepReport,
};

/// Maximum rejection-sampling attempts per member before giving up.
const MAX_PRIOR_TRIES: usize = 100;

/// Derive a 256-bit stream key from a root seed, a purpose label, and two
/// counters (typically member index and step). Counter-based derivation keeps
/// every random draw independent of execution order, so serial, parallel, and
/// resumed runs consume identical streams.
fn derive_key(seed: u64, domain: &str, a: u64, b: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update([domain.len() as u8]);
    h.update(domain.as_bytes());
    h.update(a.to_le_bytes());
    h.update(b.to_le_bytes());
    h.finalize().into()
}

/// Deterministic RNG for one (purpose, counter, counter) cell of the run.
pub fn rng_for(seed: u64, domain: &str, a: u64, b: u64) -> ChaCha12Rng {
    ChaCha12Rng::from_seed(derive_key(seed, domain, a, b))
}

/// Compact per-member seed record kept for checkpoint manifests.
pub fn member_seed(seed: u64, index: usize) -> u64 {
    let key = derive_key(seed, "member", index as u64, 0);
    u64::from_le_bytes(key[..8].try_into().expect("key is 32 bytes"))
}

/// Prior law for the initial damage nucleus of the 1D rod: the bump center is
/// Gaussian, the magnitude uniform, the bump width fixed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorRod1d {
    pub center_mean: f64,
    pub center_std: f64,
    pub mag_low: f64,
    pub mag_high: f64,
    pub bump_std: f64,
    /// Open interval the center must fall in; draws outside are rejected.
    pub domain: (f64, f64),
}

impl Default for PriorRod1d {
    fn default() -> Self {
        PriorRod1d {
            center_mean: -0.25,
            center_std: 0.12,
            mag_low: 0.73,
            mag_high: 0.76,
            bump_std: 0.05,
            domain: (-1.0, 1.0),
        }
    }
}

/// Prior law for the initial pore of the SENS plate. The pore center is drawn
/// in slit-relative coordinates: `x0 = x0_base + x0_scale·Beta(a,b)` and
/// `y0 = slit_y + y0_base + y0_scale·Beta(a,b)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorPore2d {
    pub x0_base: f64,
    pub x0_scale: f64,
    pub y0_base: f64,
    pub y0_scale: f64,
    pub beta_a: f64,
    pub beta_b: f64,
    pub slit_y: f64,
    pub radius: f64,
    pub magnitude: f64,
}

impl Default for PriorPore2d {
    fn default() -> Self {
        PriorPore2d {
            x0_base: 0.51,
            x0_scale: 0.11,
            y0_base: -0.11,
            y0_scale: 0.13,
            beta_a: 8.0,
            beta_b: 8.0,
            slit_y: 0.5,
            radius: 0.03,
            magnitude: 0.75,
        }
    }
}

/// Prior over member initial conditions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PriorSpec {
    Rod1d(PriorRod1d),
    Pore2d(PriorPore2d),
    /// Members start pristine (no nucleus); useful for controls.
    Pristine,
}

/// One drawn nucleus: an isotropic Gaussian bump in the phase field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NucleusDraw {
    pub center: [f64; 2],
    pub magnitude: f64,
    pub std: f64,
}

impl NucleusDraw {
    /// Bump value at a point (1D draws ignore the y coordinate).
    pub fn value_at(&self, x: &[f64; 2], dim: usize) -> f64 {
        let dx = x[0] - self.center[0];
        let r2 = if dim == 1 {
            dx * dx
        } else {
            let dy = x[1] - self.center[1];
            dx * dx + dy * dy
        };
        self.magnitude * (-r2 / (2.0 * self.std * self.std)).exp()
    }
}

/// Draw one nucleus from the prior. Rod centers falling outside the open
/// domain interval are rejected and redrawn (at most [`MAX_PRIOR_TRIES`]).
pub fn draw_nucleus(spec: &PriorSpec, rng: &mut ChaCha12Rng) -> Result<Option<NucleusDraw>> {
    match spec {
        PriorSpec::Pristine => Ok(None),
        PriorSpec::Rod1d(p) => {
            let normal = Normal::new(p.center_mean, p.center_std)
                .map_err(|e| Error::Config(format!("rod prior: {e}")))?;
            let mut center = f64::NAN;
            let mut accepted = false;
            for _ in 0..MAX_PRIOR_TRIES {
                let c = normal.sample(rng);
                if c > p.domain.0 && c < p.domain.1 {
                    center = c;
                    accepted = true;
                    break;
                }
            }
            if !accepted {
                return Err(Error::Config(format!(
                    "prior nucleus center rejected {MAX_PRIOR_TRIES} times; \
                     law N({}, {}) barely intersects the open domain ({}, {})",
                    p.center_mean, p.center_std, p.domain.0, p.domain.1
                )));
            }
            let magnitude = rng.random_range(p.mag_low..p.mag_high);
            Ok(Some(NucleusDraw {
                center: [center, 0.0],
                magnitude,
                std: p.bump_std,
            }))
        }
        PriorSpec::Pore2d(p) => {
            let beta = Beta::new(p.beta_a, p.beta_b)
                .map_err(|e| Error::Config(format!("pore prior: {e}")))?;
            let bx: f64 = beta.sample(rng);
            let by: f64 = beta.sample(rng);
            let x0 = p.x0_base + p.x0_scale * bx;
            let y0 = p.slit_y + p.y0_base + p.y0_scale * by;
            Ok(Some(NucleusDraw {
                center: [x0, y0],
                magnitude: p.magnitude,
                std: p.radius,
            }))
        }
    }
}

/// Evaluate a nucleus as a quadrature-point floor field.
pub fn nucleus_floor(mesh: &Mesh, draw: &NucleusDraw) -> Vec<f64> {
    mesh.qp_coords()
        .iter()
        .map(|x| draw.value_at(x, mesh.dim()))
        .collect()
}

/// One ensemble member: solver state plus bookkeeping.
#[derive(Debug, Clone)]
pub struct MemberSlot {
    pub state: FieldState,
    /// Seed record for manifests; derivable from the root seed and index.
    pub seed: u64,
    /// Cleared when a forecast for this member fails; dead members are
    /// excluded from all ensemble statistics.
    pub alive: bool,
}

/// The ensemble at one pseudo-time step.
#[derive(Debug, Clone)]
pub struct EnsembleState {
    pub members: Vec<MemberSlot>,
    pub step: usize,
}

impl EnsembleState {
    /// Members still participating in statistics.
    pub fn alive(&self) -> impl Iterator<Item = &MemberSlot> {
        self.members.iter().filter(|m| m.alive)
    }

    pub fn n_alive(&self) -> usize {
        self.alive().count()
    }

    /// Check structural invariants: at least two live members, all at the
    /// ensemble's step.
    pub fn validate(&self) -> Result<()> {
        let alive = self.n_alive();
        if alive < 2 {
            return Err(Error::Config(format!(
                "ensemble needs at least 2 live members, has {alive}"
            )));
        }
        for (i, m) in self.members.iter().enumerate() {
            if m.alive && m.state.step != self.step {
                return Err(Error::Config(format!(
                    "member {i} is at step {} but the ensemble is at step {}",
                    m.state.step, self.step
                )));
            }
        }
        Ok(())
    }
}

/// Sample the initial ensemble: every member starts from the pristine state
/// with its drawn nucleus imposed as a phase-field floor. Bitwise reproducible
/// for a fixed `(spec, mesh, n_ens, seed)`.
pub fn sample_prior(
    spec: &PriorSpec,
    mesh: &Mesh,
    n_ens: usize,
    seed: u64,
) -> Result<EnsembleState> {
    if n_ens < 2 {
        return Err(Error::Config(format!(
            "ensemble size must be at least 2, got {n_ens}"
        )));
    }
    let mut members = Vec::with_capacity(n_ens);
    for i in 0..n_ens {
        let mut rng = rng_for(seed, "prior", i as u64, 0);
        let mut state = FieldState::new(mesh);
        if let Some(draw) = draw_nucleus(spec, &mut rng)? {
            state.seed_floor(&nucleus_floor(mesh, &draw));
        }
        members.push(MemberSlot {
            state,
            seed: member_seed(seed, i),
            alive: true,
        });
    }
    Ok(EnsembleState { members, step: 0 })
}

/// Outcome of one ensemble forecast step.
#[derive(Debug, Clone, Default)]
pub struct ForecastReport {
    /// Per-member step report; `None` for members that were already dead or
    /// failed during this step.
    pub per_member: Vec<Option<StepReport>>,
    /// Indices of members that failed during this step, with the failure text.
    pub newly_failed: Vec<(usize, String)>,
}

/// Advance every live member one load step. Members whose solve fails are
/// flagged dead and excluded from later statistics; if more than 10% of the
/// ensemble is dead after the step the forecast aborts.
///
/// Member forecasts are independent, so results are identical whether the
/// loop runs serially or on the rayon pool.
pub fn forecast_step(
    ens: &mut EnsembleState,
    mesh: &Mesh,
    params: &MaterialParams,
    bc: &BoundaryConditions,
    schedule: &LoadSchedule,
    settings: &NewtonSettings,
    parallel: bool,
) -> Result<ForecastReport> {
    let advance = |m: &mut MemberSlot| -> Option<std::result::Result<StepReport, String>> {
        if !m.alive {
            return None;
        }
        match advance_step(&mut m.state, mesh, params, bc, schedule, settings) {
            Ok(rep) => Some(Ok(rep)),
            Err(e) => Some(Err(e.to_string())),
        }
    };
    let outcomes: Vec<_> = if parallel {
        ens.members.par_iter_mut().map(advance).collect()
    } else {
        ens.members.iter_mut().map(advance).collect()
    };

    let mut report = ForecastReport::default();
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            None => report.per_member.push(None),
            Some(Ok(rep)) => report.per_member.push(Some(rep)),
            Some(Err(msg)) => {
                ens.members[i].alive = false;
                report.per_member.push(None);
                report.newly_failed.push((i, msg));
            }
        }
    }
    ens.step += 1;

    let total = ens.members.len();
    let failed = total - ens.n_alive();
    if 10 * failed > total {
        return Err(Error::TooManyMemberFailures { failed, total });
    }
    Ok(report)
}

/// Mean of the stacked `[a_u, a_d]` vectors over live members.
pub fn ensemble_mean(ens: &EnsembleState) -> Vec<f64> {
    let n = ens.n_alive();
    assert!(n > 0, "ensemble mean of an empty ensemble");
    let mut mean = vec![0.0; stacked_len(ens)];
    for m in ens.alive() {
        for (acc, v) in mean.iter_mut().zip(m.state.stacked()) {
            *acc += v;
        }
    }
    for v in &mut mean {
        *v /= n as f64;
    }
    mean
}

fn stacked_len(ens: &EnsembleState) -> usize {
    let m = ens.alive().next().expect("ensemble has a live member");
    m.state.a_u.len() + m.state.a_d.len()
}

/// Anomaly factor of the live ensemble: an `M × n_alive` matrix whose columns
/// are `(a_i - mean) / sqrt(n_alive - 1)`, so that `A Aᵀ` is the unbiased
/// sample covariance without ever forming it densely.
pub fn ensemble_anomalies(ens: &EnsembleState) -> (Vec<f64>, DMatrix<f64>) {
    let n = ens.n_alive();
    assert!(n >= 2, "anomalies need at least 2 live members");
    let mean = ensemble_mean(ens);
    let m_dim = mean.len();
    let scale = 1.0 / ((n - 1) as f64).sqrt();
    let mut a = DMatrix::zeros(m_dim, n);
    for (col, member) in ens.alive().enumerate() {
        let stacked = member.state.stacked();
        for row in 0..m_dim {
            a[(row, col)] = (stacked[row] - mean[row]) * scale;
        }
    }
    (mean, a)
}

/// Multiplicative covariance inflation about the ensemble mean, applied to
/// the stacked nodal vectors only; quadrature-point phase fields are left
/// untouched. `r = 1` is exactly the identity.
pub fn inflate(ens: &mut EnsembleState, r: f64) {
    assert!(r >= 1.0, "inflation factor must be >= 1, got {r}");
    if r == 1.0 {
        return;
    }
    let mean = ensemble_mean(ens);
    for m in &mut ens.members {
        if !m.alive {
            continue;
        }
        let mut stacked = m.state.stacked();
        for (v, mu) in stacked.iter_mut().zip(&mean) {
            *v = r * (*v - mu) + mu;
        }
        m.state.set_stacked(&stacked);
    }
}

/// Squared-exponential localization taper between two location sets:
/// `T[i][j] = exp(-‖xa_i - xb_j‖² / (2 l_loc²))`.
pub fn localization_taper(
    locs_a: &[[f64; 2]],
    locs_b: &[[f64; 2]],
    l_loc: f64,
) -> DMatrix<f64> {
    assert!(l_loc > 0.0, "localization length must be positive");
    let inv = 1.0 / (2.0 * l_loc * l_loc);
    DMatrix::from_fn(locs_a.len(), locs_b.len(), |i, j| {
        let dx = locs_a[i][0] - locs_b[j][0];
        let dy = locs_a[i][1] - locs_b[j][1];
        (-(dx * dx + dy * dy) * inv).exp()
    })
}
