//! Newton iteration over the reduced (Dirichlet-eliminated) system and the
//! sparse linear solves behind it.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};

use crate::error::{Error, Result};
use crate::model::assembly::{assemble, Assembled, AssemblyContext, SystemKind};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NewtonSettings {
    /// Euclidean norm of the reduced residual below which the state counts
    /// as converged.
    pub tol: f64,
    pub max_iter: usize,
    /// How many times a load increment may be halved after a failed solve.
    pub max_cuts: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings { tol: 1e-8, max_iter: 25, max_cuts: 4 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residual: f64,
}

/// Converged solve: iteration report plus the phase field realized at
/// quadrature points in the final state.
#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub report: NewtonReport,
    pub phi_q: Vec<f64>,
}

fn reduced_norm(out: &Assembled, free: &[usize], n_u: usize) -> f64 {
    free.iter()
        .map(|&f| {
            let r = if f < n_u { out.r_u[f] } else { out.r_d[f - n_u] };
            r * r
        })
        .sum::<f64>()
        .sqrt()
}

/// Solve the nonlinear system selected by `kind` in place. The state is
/// checked before the first iteration, so calling this on an already
/// converged state reports zero iterations and does no linear algebra.
pub fn newton_solve(
    ctx: &AssemblyContext,
    kind: SystemKind,
    a_u: &mut [f64],
    a_d: &mut [f64],
    constrained_u: &[usize],
    settings: &NewtonSettings,
) -> Result<NewtonOutcome> {
    let mesh = ctx.mesh;
    let n_u = mesh.n_u_dofs();

    let mut constrained = vec![false; n_u];
    for &dof in constrained_u {
        constrained[dof] = true;
    }
    let mut free: Vec<usize> = Vec::new();
    if kind != SystemKind::MicromorphicOnly {
        free.extend((0..n_u).filter(|&i| !constrained[i]));
    }
    if kind != SystemKind::DisplacementOnly {
        free.extend(n_u..mesh.n_total_dofs());
    }
    let mut full_to_free = vec![usize::MAX; mesh.n_total_dofs()];
    for (k, &f) in free.iter().enumerate() {
        full_to_free[f] = k;
    }
    let spd = kind == SystemKind::MicromorphicOnly;

    let mut out = assemble(ctx, a_u, a_d, kind, false)?;
    let mut rnorm = reduced_norm(&out, &free, n_u);
    let mut history = Vec::new();
    let mut iterations = 0;

    while rnorm > settings.tol {
        if iterations >= settings.max_iter {
            return Err(Error::NewtonDiverged { iterations, residual: rnorm, history });
        }
        let sys = assemble(ctx, a_u, a_d, kind, true)?;
        let reduced: Vec<(usize, usize, f64)> = sys
            .triplets
            .iter()
            .filter_map(|&(r, c, v)| {
                let (fr, fc) = (full_to_free[r], full_to_free[c]);
                (fr != usize::MAX && fc != usize::MAX).then_some((fr, fc, v))
            })
            .collect();
        let rhs: Vec<f64> = free
            .iter()
            .map(|&f| -(if f < n_u { sys.r_u[f] } else { sys.r_d[f - n_u] }))
            .collect();
        let dx = solve_sparse(free.len(), &reduced, &rhs, spd)?;
        for (k, &f) in free.iter().enumerate() {
            if f < n_u {
                a_u[f] += dx[k];
            } else {
                a_d[f - n_u] += dx[k];
            }
        }
        iterations += 1;
        out = assemble(ctx, a_u, a_d, kind, false)?;
        rnorm = reduced_norm(&out, &free, n_u);
        history.push(rnorm);
    }
    Ok(NewtonOutcome {
        report: NewtonReport { iterations, residual: rnorm },
        phi_q: out.phi_q,
    })
}

/// Perform at most one Newton update of the system selected by `kind`.
///
/// This is the proximal building block of the analysis-regularization
/// stages: a single step pulls the state toward the model manifold without
/// erasing the information the update injected, which a converged solve
/// would do (the converged state is independent of where the iteration
/// started). A state already below tolerance is left untouched, so the
/// step is idempotent on equilibrated states. Non-convergence is expected
/// here and is not an error; only assembly or linear-solve failures are.
pub fn newton_step(
    ctx: &AssemblyContext,
    kind: SystemKind,
    a_u: &mut [f64],
    a_d: &mut [f64],
    constrained_u: &[usize],
    settings: &NewtonSettings,
) -> Result<NewtonOutcome> {
    let mesh = ctx.mesh;
    let n_u = mesh.n_u_dofs();

    let mut constrained = vec![false; n_u];
    for &dof in constrained_u {
        constrained[dof] = true;
    }
    let mut free: Vec<usize> = Vec::new();
    if kind != SystemKind::MicromorphicOnly {
        free.extend((0..n_u).filter(|&i| !constrained[i]));
    }
    if kind != SystemKind::DisplacementOnly {
        free.extend(n_u..mesh.n_total_dofs());
    }
    let mut full_to_free = vec![usize::MAX; mesh.n_total_dofs()];
    for (k, &f) in free.iter().enumerate() {
        full_to_free[f] = k;
    }
    let spd = kind == SystemKind::MicromorphicOnly;

    let out = assemble(ctx, a_u, a_d, kind, false)?;
    let rnorm = reduced_norm(&out, &free, n_u);
    if rnorm <= settings.tol {
        return Ok(NewtonOutcome {
            report: NewtonReport { iterations: 0, residual: rnorm },
            phi_q: out.phi_q,
        });
    }

    let sys = assemble(ctx, a_u, a_d, kind, true)?;
    let reduced: Vec<(usize, usize, f64)> = sys
        .triplets
        .iter()
        .filter_map(|&(r, c, v)| {
            let (fr, fc) = (full_to_free[r], full_to_free[c]);
            (fr != usize::MAX && fc != usize::MAX).then_some((fr, fc, v))
        })
        .collect();
    let rhs: Vec<f64> = free
        .iter()
        .map(|&f| -(if f < n_u { sys.r_u[f] } else { sys.r_d[f - n_u] }))
        .collect();
    let dx = solve_sparse(free.len(), &reduced, &rhs, spd)?;
    for (k, &f) in free.iter().enumerate() {
        if f < n_u {
            a_u[f] += dx[k];
        } else {
            a_d[f - n_u] += dx[k];
        }
    }
    let out = assemble(ctx, a_u, a_d, kind, false)?;
    Ok(NewtonOutcome {
        report: NewtonReport { iterations: 1, residual: reduced_norm(&out, &free, n_u) },
        phi_q: out.phi_q,
    })
}

/// Solve `A x = b` for sparse `A` given as (row, col, value) triplets
/// (duplicates are summed). SPD systems go through a sparse Cholesky
/// factorization, general ones through sparse LU.
pub fn solve_sparse(
    n: usize,
    triplets: &[(usize, usize, f64)],
    rhs: &[f64],
    spd: bool,
) -> Result<Vec<f64>> {
    assert_eq!(rhs.len(), n);
    let entries: Vec<Triplet<usize, usize, f64>> = triplets
        .iter()
        .map(|&(r, c, v)| Triplet::new(r, c, v))
        .collect();
    let a = SparseColMat::try_new_from_triplets(n, n, &entries)
        .map_err(|e| Error::LinearSolve(format!("building sparse matrix: {e:?}")))?;
    let b = Mat::from_fn(n, 1, |i, _| rhs[i]);
    let x = if spd {
        let chol = a.sp_cholesky(faer::Side::Lower).map_err(|_| {
            let mut diag = f64::INFINITY;
            for &(r, c, v) in triplets {
                if r == c {
                    diag = diag.min(v);
                }
            }
            Error::NotPositiveDefinite { pivot: diag }
        })?;
        chol.solve(&b)
    } else {
        let lu = a
            .sp_lu()
            .map_err(|e| Error::LinearSolve(format!("sparse LU: {e:?}")))?;
        lu.solve(&b)
    };
    let sol: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    if !sol.iter().all(|v| v.is_finite()) {
        return Err(Error::LinearSolve("solution contains non-finite entries".into()));
    }
    Ok(sol)
}
