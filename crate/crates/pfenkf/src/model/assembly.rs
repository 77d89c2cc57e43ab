//! Residual, tangent, and incremental-energy assembly for the condensed
//! two-field system in the stacked dof ordering [u-dofs, d-dofs].

use crate::error::{Error, Result};
use crate::material::{split_tangents, strain_energy_split, MaterialParams};
use crate::mesh::Mesh;
use crate::model::{crack_density, degradation, degradation_prime};

/// How the condensed phase field couples to the unknowns during assembly.
#[derive(Debug, Clone, Copy)]
pub enum PhiCoupling<'a> {
    /// φ is updated from Ψ⁺ and a fixed micromorphic field given at
    /// quadrature points (the extrapolated field within a load step), so
    /// ∂φ/∂u ≠ 0 but ∂φ/∂d = 0 and the coupled tangent is block
    /// lower-triangular.
    Extrapolated(&'a [f64]),
    /// φ is updated from Ψ⁺ and the current micromorphic unknowns.
    Evolving,
    /// φ is held fixed at the given quadrature-point values.
    Frozen(&'a [f64]),
}

/// Which blocks of the coupled system to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    Monolithic,
    DisplacementOnly,
    MicromorphicOnly,
}

pub struct AssemblyContext<'a> {
    pub mesh: &'a Mesh,
    pub params: &'a MaterialParams,
    /// Active micromorphic length scale (the material ℓ during forecasting;
    /// a larger smoothing length during regularization).
    pub lambda: f64,
    /// Irreversibility floor per quadrature point.
    pub phi_floor: &'a [f64],
    pub phi_coupling: PhiCoupling<'a>,
}

/// Assembled residual blocks, the phase field realized at quadrature
/// points, and (optionally) tangent triplets in stacked indexing.
#[derive(Debug)]
pub struct Assembled {
    pub r_u: Vec<f64>,
    pub r_d: Vec<f64>,
    pub phi_q: Vec<f64>,
    pub triplets: Vec<(usize, usize, f64)>,
}

/// Local phase update with its partial derivatives (∂φ/∂Ψ⁺, ∂φ/∂d);
/// both vanish on the clamped branches.
fn phase_with_derivatives(
    psi_pos: f64,
    d: f64,
    floor: f64,
    params: &MaterialParams,
    lambda: f64,
) -> (f64, f64, f64) {
    let alpha = params.alpha();
    let frac = params.gc / lambda;
    let den = 2.0 * psi_pos + alpha + frac;
    let raw = (2.0 * psi_pos + alpha * d) / den;
    if raw <= floor {
        (floor, 0.0, 0.0)
    } else if raw >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let dpsi = 2.0 * (alpha * (1.0 - d) + frac) / (den * den);
        (raw, dpsi, alpha / den)
    }
}

/// Phase value and derivatives at one quadrature point under the context's
/// coupling rule. `d_qp` is the current micromorphic field at the point.
fn phase_at(ctx: &AssemblyContext, qp: usize, psi_pos: f64, d_qp: f64) -> (f64, f64, f64) {
    match ctx.phi_coupling {
        PhiCoupling::Frozen(phi) => (phi[qp], 0.0, 0.0),
        PhiCoupling::Extrapolated(d_check) => {
            let (phi, dpsi, _) = phase_with_derivatives(
                psi_pos,
                d_check[qp],
                ctx.phi_floor[qp],
                ctx.params,
                ctx.lambda,
            );
            (phi, dpsi, 0.0)
        }
        PhiCoupling::Evolving => {
            phase_with_derivatives(psi_pos, d_qp, ctx.phi_floor[qp], ctx.params, ctx.lambda)
        }
    }
}

/// Interpolate a nodal field to every quadrature point (flat indexing).
pub fn nodal_to_qp(mesh: &Mesh, nodal: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; mesh.n_qp_total()];
    for e in 0..mesh.n_elems() {
        let geom = mesh.elem_geom(e);
        let nodes = mesh.elem(e);
        for q in 0..mesh.n_qp_per_elem() {
            let mut v = 0.0;
            for (i, &n) in nodes.iter().enumerate() {
                v += geom.shape[q][i] * nodal[n];
            }
            out[mesh.qp_index(e, q)] = v;
        }
    }
    out
}

pub fn assemble(
    ctx: &AssemblyContext,
    a_u: &[f64],
    a_d: &[f64],
    kind: SystemKind,
    with_tangent: bool,
) -> Result<Assembled> {
    let mesh = ctx.mesh;
    let dim = mesh.dim();
    let npe = mesh.nodes_per_elem();
    let n_qp = mesh.n_qp_per_elem();
    let n_u = mesh.n_u_dofs();
    let n_strain = if dim == 1 { 1 } else { 3 };
    let edofs = npe * dim;
    let gc = ctx.params.gc;
    let alpha = ctx.params.alpha();
    let lambda = ctx.lambda;

    let want_u = kind != SystemKind::MicromorphicOnly;
    let want_d = kind != SystemKind::DisplacementOnly;

    let mut out = Assembled {
        r_u: vec![0.0; n_u],
        r_d: vec![0.0; mesh.n_d_dofs()],
        phi_q: vec![0.0; mesh.n_qp_total()],
        triplets: Vec::new(),
    };

    for e in 0..mesh.n_elems() {
        let geom = mesh.elem_geom(e);
        let nodes = mesh.elem(e);

        let mut u_e = [0.0; 6];
        let mut d_e = [0.0; 3];
        for (i, &n) in nodes.iter().enumerate() {
            for c in 0..dim {
                u_e[dim * i + c] = a_u[mesh.u_dof(n, c)];
            }
            d_e[i] = a_d[n];
        }

        let mut r_u_e = [0.0; 6];
        let mut r_d_e = [0.0; 3];
        let mut k_uu = [[0.0; 6]; 6];
        let mut k_ud = [[0.0; 3]; 6];
        let mut k_du = [[0.0; 6]; 3];
        let mut k_dd = [[0.0; 3]; 3];

        for q in 0..n_qp {
            let w = geom.qp_w[q];
            let mut strain = [0.0; 3];
            for (r, s) in strain.iter_mut().enumerate().take(n_strain) {
                *s = (0..edofs).map(|j| geom.b[r][j] * u_e[j]).sum();
            }
            let split = strain_energy_split(&strain, dim, ctx.params);

            let mut d_qp = 0.0;
            let mut grad_d = [0.0, 0.0];
            for i in 0..npe {
                d_qp += geom.shape[q][i] * d_e[i];
                grad_d[0] += geom.grad_n[i][0] * d_e[i];
                grad_d[1] += geom.grad_n[i][1] * d_e[i];
            }

            let qi = mesh.qp_index(e, q);
            let (phi, dphi_dpsi, dphi_dd) = phase_at(ctx, qi, split.psi_pos, d_qp);
            out.phi_q[qi] = phi;
            let g = degradation(phi);
            let gp = degradation_prime(phi);

            // Bᵀσ⁺ and Bᵀ(g σ⁺ + σ⁻) per element dof.
            let mut bt_sig_pos = [0.0; 6];
            let mut bt_sig = [0.0; 6];
            for j in 0..edofs {
                for r in 0..n_strain {
                    bt_sig_pos[j] += geom.b[r][j] * split.sig_pos[r];
                    bt_sig[j] += geom.b[r][j] * (g * split.sig_pos[r] + split.sig_neg[r]);
                }
            }

            if want_u {
                for j in 0..edofs {
                    r_u_e[j] += w * bt_sig[j];
                }
            }
            if want_d {
                for i in 0..npe {
                    let gn = geom.grad_n[i];
                    let diffusion = gc * lambda * (gn[0] * grad_d[0] + gn[1] * grad_d[1]);
                    r_d_e[i] += w * (diffusion - geom.shape[q][i] * alpha * (phi - d_qp));
                }
            }

            if with_tangent {
                if want_u {
                    let (c_pos, c_neg) = split_tangents(&strain, dim, ctx.params);
                    let mut cc = [[0.0; 3]; 3];
                    for r in 0..n_strain {
                        for s in 0..n_strain {
                            cc[r][s] = g * c_pos[r][s] + c_neg[r][s];
                        }
                    }
                    let geo = gp * dphi_dpsi;
                    for j in 0..edofs {
                        for k in 0..edofs {
                            let mut mat = 0.0;
                            for r in 0..n_strain {
                                for s in 0..n_strain {
                                    mat += geom.b[r][j] * cc[r][s] * geom.b[s][k];
                                }
                            }
                            k_uu[j][k] += w * (mat + geo * bt_sig_pos[j] * bt_sig_pos[k]);
                        }
                    }
                    if kind == SystemKind::Monolithic && dphi_dd != 0.0 {
                        for j in 0..edofs {
                            for i in 0..npe {
                                k_ud[j][i] +=
                                    w * gp * dphi_dd * geom.shape[q][i] * bt_sig_pos[j];
                            }
                        }
                    }
                }
                if want_d {
                    if kind == SystemKind::Monolithic && dphi_dpsi != 0.0 {
                        for i in 0..npe {
                            for j in 0..edofs {
                                k_du[i][j] -=
                                    w * alpha * geom.shape[q][i] * dphi_dpsi * bt_sig_pos[j];
                            }
                        }
                    }
                    for i in 0..npe {
                        for j in 0..npe {
                            let gi = geom.grad_n[i];
                            let gj = geom.grad_n[j];
                            let diff = gc * lambda * (gi[0] * gj[0] + gi[1] * gj[1]);
                            let react =
                                alpha * (1.0 - dphi_dd) * geom.shape[q][i] * geom.shape[q][j];
                            k_dd[i][j] += w * (diff + react);
                        }
                    }
                }
            }
        }

        let finite = r_u_e.iter().chain(&r_d_e).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFiniteAssembly { element: e });
        }

        // Scatter into global storage (stacked indices: d dof j sits at n_u + j).
        if want_u {
            for (j, &v) in r_u_e.iter().enumerate().take(edofs) {
                out.r_u[mesh.u_dof(nodes[j / dim], j % dim)] += v;
            }
        }
        if want_d {
            for (i, &v) in r_d_e.iter().enumerate().take(npe) {
                out.r_d[nodes[i]] += v;
            }
        }
        if with_tangent {
            let gu = |j: usize| mesh.u_dof(nodes[j / dim], j % dim);
            if want_u {
                for j in 0..edofs {
                    for k in 0..edofs {
                        out.triplets.push((gu(j), gu(k), k_uu[j][k]));
                    }
                }
                if kind == SystemKind::Monolithic {
                    for j in 0..edofs {
                        for i in 0..npe {
                            if k_ud[j][i] != 0.0 {
                                out.triplets.push((gu(j), n_u + nodes[i], k_ud[j][i]));
                            }
                        }
                    }
                }
            }
            if want_d {
                if kind == SystemKind::Monolithic {
                    for i in 0..npe {
                        for j in 0..edofs {
                            if k_du[i][j] != 0.0 {
                                out.triplets.push((n_u + nodes[i], gu(j), k_du[i][j]));
                            }
                        }
                    }
                }
                for i in 0..npe {
                    for j in 0..npe {
                        out.triplets.push((n_u + nodes[i], n_u + nodes[j], k_dd[i][j]));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Incremental potential Ê(u, d) with φ condensed per the context's
/// coupling. With `PhiCoupling::Evolving` the assembled residuals are the
/// exact gradient of this functional (envelope theorem: φ either satisfies
/// its pointwise stationarity condition or sits on a clamp with zero
/// sensitivity), which is what the finite-difference consistency checks
/// rely on.
pub fn assemble_energy(ctx: &AssemblyContext, a_u: &[f64], a_d: &[f64]) -> Result<f64> {
    let mesh = ctx.mesh;
    let dim = mesh.dim();
    let npe = mesh.nodes_per_elem();
    let n_strain = if dim == 1 { 1 } else { 3 };
    let edofs = npe * dim;
    let gc = ctx.params.gc;
    let alpha = ctx.params.alpha();
    let lambda = ctx.lambda;

    let mut energy = 0.0;
    for e in 0..mesh.n_elems() {
        let geom = mesh.elem_geom(e);
        let nodes = mesh.elem(e);
        let mut u_e = [0.0; 6];
        let mut d_e = [0.0; 3];
        for (i, &n) in nodes.iter().enumerate() {
            for c in 0..dim {
                u_e[dim * i + c] = a_u[mesh.u_dof(n, c)];
            }
            d_e[i] = a_d[n];
        }
        for q in 0..mesh.n_qp_per_elem() {
            let w = geom.qp_w[q];
            let mut strain = [0.0; 3];
            for (r, s) in strain.iter_mut().enumerate().take(n_strain) {
                *s = (0..edofs).map(|j| geom.b[r][j] * u_e[j]).sum();
            }
            let split = strain_energy_split(&strain, dim, ctx.params);
            let mut d_qp = 0.0;
            let mut grad_d = [0.0, 0.0];
            for i in 0..npe {
                d_qp += geom.shape[q][i] * d_e[i];
                grad_d[0] += geom.grad_n[i][0] * d_e[i];
                grad_d[1] += geom.grad_n[i][1] * d_e[i];
            }
            let qi = mesh.qp_index(e, q);
            let (phi, _, _) = phase_at(ctx, qi, split.psi_pos, d_qp);
            let misfit = phi - d_qp;
            energy += w
                * (degradation(phi) * split.psi_pos
                    + split.psi_neg
                    + 0.5 * gc / lambda * crack_density(phi)
                    + 0.5 * gc * lambda * (grad_d[0] * grad_d[0] + grad_d[1] * grad_d[1])
                    + 0.5 * alpha * misfit * misfit);
        }
        if !energy.is_finite() {
            return Err(Error::NonFiniteAssembly { element: e });
        }
    }
    Ok(energy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh_1d, build_mesh_sens, Diagonal, RefineBand};
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

    fn small_sens_mesh() -> Mesh {
        build_mesh_sens(
            0.22,
            0.11,
            RefineBand { x_min: 0.4, x_max: 1.0, y_min: 0.0, y_max: 0.6 },
            Diagonal::Falling,
        )
        .unwrap()
    }

    fn random_state(mesh: &Mesh, rng: &mut impl Rng, u_scale: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let a_u: Vec<f64> = (0..mesh.n_u_dofs())
            .map(|_| rng.random_range(-u_scale..u_scale))
            .collect();
        let a_d: Vec<f64> = (0..mesh.n_d_dofs())
            .map(|_| rng.random_range(0.0..0.9))
            .collect();
        let floor: Vec<f64> = (0..mesh.n_qp_total())
            .map(|_| rng.random_range(0.0..0.3))
            .collect();
        (a_u, a_d, floor)
    }

    /// Central-difference gradient of the incremental energy must match the
    /// assembled residuals under the evolving coupling.
    fn check_energy_gradient(mesh: &Mesh, seed: u64) {
        let p = params();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let u_scale = if mesh.dim() == 1 { 2e-3 } else { 5e-4 };
        let (a_u, a_d, floor) = random_state(mesh, &mut rng, u_scale);
        let ctx = AssemblyContext {
            mesh,
            params: &p,
            lambda: p.ell,
            phi_floor: &floor,
            phi_coupling: PhiCoupling::Evolving,
        };
        let out = assemble(&ctx, &a_u, &a_d, SystemKind::Monolithic, false).unwrap();
        let mut grad: Vec<f64> = out.r_u.clone();
        grad.extend_from_slice(&out.r_d);
        let norm = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));

        let n_u = mesh.n_u_dofs();
        let mut worst = 0.0f64;
        for dof in 0..mesh.n_total_dofs() {
            let h = if dof < n_u { 1e-9 } else { 1e-7 };
            let mut up = (a_u.clone(), a_d.clone());
            let mut dn = (a_u.clone(), a_d.clone());
            if dof < n_u {
                up.0[dof] += h;
                dn.0[dof] -= h;
            } else {
                up.1[dof - n_u] += h;
                dn.1[dof - n_u] -= h;
            }
            let ep = assemble_energy(&ctx, &up.0, &up.1).unwrap();
            let em = assemble_energy(&ctx, &dn.0, &dn.1).unwrap();
            let fd = (ep - em) / (2.0 * h);
            worst = worst.max((fd - grad[dof]).abs());
        }
        assert!(
            worst <= 1e-5 * norm.max(1.0),
            "energy gradient mismatch {worst:.3e} vs scale {norm:.3e}"
        );
    }

    #[test]
    fn energy_gradient_matches_residual_1d() {
        let mesh = build_mesh_1d(12, -1.0, 1.0).unwrap();
        check_energy_gradient(&mesh, 3);
    }

    #[test]
    fn energy_gradient_matches_residual_2d() {
        let mesh = small_sens_mesh();
        check_energy_gradient(&mesh, 4);
    }

    /// The assembled tangent must match the finite-difference Jacobian of
    /// the residual under both within-step couplings.
    fn check_tangent(mesh: &Mesh, extrapolated: bool, seed: u64) {
        let p = params();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let u_scale = if mesh.dim() == 1 { 2e-3 } else { 5e-4 };
        let (a_u, a_d, floor) = random_state(mesh, &mut rng, u_scale);
        let d_check: Vec<f64> = (0..mesh.n_qp_total())
            .map(|_| rng.random_range(0.0..0.9))
            .collect();
        let coupling = if extrapolated {
            PhiCoupling::Extrapolated(&d_check)
        } else {
            PhiCoupling::Evolving
        };
        let ctx = AssemblyContext {
            mesh,
            params: &p,
            lambda: p.ell,
            phi_floor: &floor,
            phi_coupling: coupling,
        };
        let n = mesh.n_total_dofs();
        let n_u = mesh.n_u_dofs();
        let out = assemble(&ctx, &a_u, &a_d, SystemKind::Monolithic, true).unwrap();
        let mut dense = vec![vec![0.0; n]; n];
        for &(r, c, v) in &out.triplets {
            dense[r][c] += v;
        }
        let residual = |au: &[f64], ad: &[f64]| -> Vec<f64> {
            let o = assemble(&ctx, au, ad, SystemKind::Monolithic, false).unwrap();
            let mut r = o.r_u;
            r.extend_from_slice(&o.r_d);
            r
        };
        let scale = dense
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0f64;
        for col in 0..n {
            let h = if col < n_u { 1e-9 } else { 1e-7 };
            let mut up = (a_u.clone(), a_d.clone());
            let mut dn = (a_u.clone(), a_d.clone());
            if col < n_u {
                up.0[col] += h;
                dn.0[col] -= h;
            } else {
                up.1[col - n_u] += h;
                dn.1[col - n_u] -= h;
            }
            let rp = residual(&up.0, &up.1);
            let rm = residual(&dn.0, &dn.1);
            for row in 0..n {
                let fd = (rp[row] - rm[row]) / (2.0 * h);
                worst = worst.max((fd - dense[row][col]).abs());
            }
        }
        assert!(
            worst <= 1e-5 * scale,
            "tangent mismatch {worst:.3e} vs scale {scale:.3e}"
        );
    }

    #[test]
    fn tangent_matches_fd_extrapolated_1d() {
        let mesh = build_mesh_1d(10, -1.0, 1.0).unwrap();
        check_tangent(&mesh, true, 11);
    }

    #[test]
    fn tangent_matches_fd_evolving_1d() {
        let mesh = build_mesh_1d(10, -1.0, 1.0).unwrap();
        check_tangent(&mesh, false, 12);
    }

    #[test]
    fn tangent_matches_fd_extrapolated_2d() {
        let mesh = small_sens_mesh();
        check_tangent(&mesh, true, 13);
    }

    #[test]
    fn tangent_matches_fd_evolving_2d() {
        let mesh = small_sens_mesh();
        check_tangent(&mesh, false, 14);
    }

    #[test]
    fn extrapolated_coupling_has_no_ud_block() {
        let mesh = build_mesh_1d(8, 0.0, 1.0).unwrap();
        let p = params();
        let d_check = vec![0.4; mesh.n_qp_total()];
        let floor = vec![0.0; mesh.n_qp_total()];
        let ctx = AssemblyContext {
            mesh: &mesh,
            params: &p,
            lambda: p.ell,
            phi_floor: &floor,
            phi_coupling: PhiCoupling::Extrapolated(&d_check),
        };
        let a_u: Vec<f64> = (0..mesh.n_u_dofs()).map(|i| 1e-3 * i as f64).collect();
        let a_d = vec![0.3; mesh.n_d_dofs()];
        let out = assemble(&ctx, &a_u, &a_d, SystemKind::Monolithic, true).unwrap();
        let n_u = mesh.n_u_dofs();
        assert!(
            out.triplets
                .iter()
                .all(|&(r, c, v)| !(r < n_u && c >= n_u) || v == 0.0),
            "u-d coupling block must vanish under extrapolation"
        );
        // The d-u block must not vanish (the drive still moves the phase).
        assert!(out.triplets.iter().any(|&(r, c, v)| r >= n_u && c < n_u && v != 0.0));
    }

    #[test]
    fn pristine_state_is_equilibrium() {
        let mesh = small_sens_mesh();
        let p = params();
        let floor = vec![0.0; mesh.n_qp_total()];
        let ctx = AssemblyContext {
            mesh: &mesh,
            params: &p,
            lambda: p.ell,
            phi_floor: &floor,
            phi_coupling: PhiCoupling::Evolving,
        };
        let a_u = vec![0.0; mesh.n_u_dofs()];
        let a_d = vec![0.0; mesh.n_d_dofs()];
        let out = assemble(&ctx, &a_u, &a_d, SystemKind::Monolithic, false).unwrap();
        assert!(out.r_u.iter().all(|&v| v == 0.0));
        assert!(out.r_d.iter().all(|&v| v == 0.0));
        assert!(out.phi_q.iter().all(|&v| v == 0.0));
        assert_eq!(assemble_energy(&ctx, &a_u, &a_d).unwrap(), 0.0);
    }

    #[test]
    fn frozen_coupling_is_linear_in_u() {
        let mesh = build_mesh_1d(6, 0.0, 1.0).unwrap();
        let p = params();
        let phi = vec![0.5; mesh.n_qp_total()];
        let floor = vec![0.0; mesh.n_qp_total()];
        let ctx = AssemblyContext {
            mesh: &mesh,
            params: &p,
            lambda: p.ell,
            phi_floor: &floor,
            phi_coupling: PhiCoupling::Frozen(&phi),
        };
        let a_d = vec![0.0; mesh.n_d_dofs()];
        let u1: Vec<f64> = (0..mesh.n_u_dofs()).map(|i| 1e-3 * i as f64).collect();
        let u2: Vec<f64> = u1.iter().map(|v| 2.0 * v).collect();
        let r1 = assemble(&ctx, &u1, &a_d, SystemKind::DisplacementOnly, false).unwrap();
        let r2 = assemble(&ctx, &u2, &a_d, SystemKind::DisplacementOnly, false).unwrap();
        for (a, b) in r1.r_u.iter().zip(&r2.r_u) {
            assert!((2.0 * a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn nodal_to_qp_reproduces_linear_fields() {
        let mesh = small_sens_mesh();
        let nodal: Vec<f64> = (0..mesh.n_nodes())
            .map(|n| {
                let c = mesh.coord(n);
                1.0 + 2.0 * c[0] - 0.5 * c[1]
            })
            .collect();
        let qp = nodal_to_qp(&mesh, &nodal);
        for (v, x) in qp.iter().zip(mesh.qp_coords()) {
            let expect = 1.0 + 2.0 * x[0] - 0.5 * x[1];
            assert!((v - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_input_is_reported() {
        let mesh = build_mesh_1d(4, 0.0, 1.0).unwrap();
        let p = params();
        let floor = vec![0.0; mesh.n_qp_total()];
        let ctx = AssemblyContext {
            mesh: &mesh,
            params: &p,
            lambda: p.ell,
            phi_floor: &floor,
            phi_coupling: PhiCoupling::Evolving,
        };
        let mut a_u = vec![0.0; mesh.n_u_dofs()];
        a_u[2] = f64::NAN;
        let a_d = vec![0.0; mesh.n_d_dofs()];
        let err = assemble(&ctx, &a_u, &a_d, SystemKind::Monolithic, false).unwrap_err();
        assert!(matches!(err, Error::NonFiniteAssembly { .. }));
    }
}
