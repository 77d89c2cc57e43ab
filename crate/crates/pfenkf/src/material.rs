//! Material parameters and the volumetric–deviatoric strain-energy split.
//!
//! The tensile part Ψ⁺ = ½K⟨tr ε⟩² + μ ε_dev : ε_dev drives fracture and is
//! degraded; the compressive part Ψ⁻ = ½K⟨-tr ε⟩² remains undegraded. In
//! plane strain the trace and deviator are the three-dimensional ones
//! (ε_zz = 0, dev_zz = -tr ε / 3), so Ψ⁺ + Ψ⁻ recovers the full isotropic
//! energy exactly. Bars use the full axial energy as Ψ⁺ with Ψ⁻ = 0.

use crate::error::{Error, Result};

/// Elastic and fracture parameters. The micromorphic penalty is
/// α = β G_c / ℓ; β is dimensionless.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MaterialParams {
    /// Young's modulus E (N/mm²).
    pub youngs: f64,
    /// Poisson ratio ν.
    pub poisson: f64,
    /// Fracture toughness G_c (N/mm).
    pub gc: f64,
    /// Phase-field length scale ℓ (mm).
    pub ell: f64,
    /// Penalty multiplier β in α = β G_c / ℓ.
    pub beta: f64,
}

impl MaterialParams {
    /// Micromorphic penalty α.
    pub fn alpha(&self) -> f64 {
        self.beta * self.gc / self.ell
    }

    /// Bulk modulus K = E / (3(1 - 2ν)).
    pub fn bulk(&self) -> f64 {
        self.youngs / (3.0 * (1.0 - 2.0 * self.poisson))
    }

    /// Shear modulus μ = E / (2(1 + ν)).
    pub fn shear(&self) -> f64 {
        self.youngs / (2.0 * (1.0 + self.poisson))
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.youngs > 0.0
            && (0.0..0.5).contains(&self.poisson)
            && self.gc > 0.0
            && self.ell > 0.0
            && self.beta > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid material parameters: {self:?}")))
        }
    }
}

/// Split of the elastic energy density and stress at one material point.
/// Stress components follow the strain convention: `[σ]` for bars,
/// `[σxx, σyy, σxy]` for plane strain (work-conjugate to `[εxx, εyy, γxy]`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrainSplit {
    pub psi_pos: f64,
    pub psi_neg: f64,
    pub sig_pos: [f64; 3],
    pub sig_neg: [f64; 3],
}

/// Evaluate the split at a strain. `strain` holds `[ε]` in 1D and
/// `[εxx, εyy, γxy]` (engineering shear) in 2D plane strain.
pub fn strain_energy_split(strain: &[f64; 3], dim: usize, p: &MaterialParams) -> StrainSplit {
    match dim {
        1 => {
            let e = strain[0];
            StrainSplit {
                psi_pos: 0.5 * p.youngs * e * e,
                psi_neg: 0.0,
                sig_pos: [p.youngs * e, 0.0, 0.0],
                sig_neg: [0.0; 3],
            }
        }
        _ => {
            let (k, mu) = (p.bulk(), p.shear());
            let t = strain[0] + strain[1];
            let (tp, tn) = (t.max(0.0), t.min(0.0));
            let dev = [strain[0] - t / 3.0, strain[1] - t / 3.0, -t / 3.0];
            let dev2 = dev[0] * dev[0]
                + dev[1] * dev[1]
                + dev[2] * dev[2]
                + 0.5 * strain[2] * strain[2];
            StrainSplit {
                psi_pos: 0.5 * k * tp * tp + mu * dev2,
                psi_neg: 0.5 * k * tn * tn,
                sig_pos: [
                    k * tp + 2.0 * mu * dev[0],
                    k * tp + 2.0 * mu * dev[1],
                    mu * strain[2],
                ],
                sig_neg: [k * tn, k * tn, 0.0],
            }
        }
    }
}

/// Tangents (C⁺, C⁻) of the split stresses with respect to the strain, in
/// the same component convention. At tr ε = 0 the tensile branch is used.
pub fn split_tangents(strain: &[f64; 3], dim: usize, p: &MaterialParams) -> ([[f64; 3]; 3], [[f64; 3]; 3]) {
    let mut c_pos = [[0.0; 3]; 3];
    let mut c_neg = [[0.0; 3]; 3];
    match dim {
        1 => {
            c_pos[0][0] = p.youngs;
        }
        _ => {
            let (k, mu) = (p.bulk(), p.shear());
            let tensile = strain[0] + strain[1] >= 0.0;
            let dev = [
                [2.0 * mu * (2.0 / 3.0), 2.0 * mu * (-1.0 / 3.0), 0.0],
                [2.0 * mu * (-1.0 / 3.0), 2.0 * mu * (2.0 / 3.0), 0.0],
                [0.0, 0.0, mu],
            ];
            for i in 0..3 {
                for j in 0..3 {
                    c_pos[i][j] = dev[i][j];
                }
            }
            let vol = if tensile { &mut c_pos } else { &mut c_neg };
            for i in 0..2 {
                for j in 0..2 {
                    vol[i][j] += k;
                }
            }
        }
    }
    (c_pos, c_neg)
}

#[cfg(test)]
mod tests {
    use super::*;
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

    fn full_energy_2d(strain: &[f64; 3], p: &MaterialParams) -> f64 {
        // Plane-strain isotropic energy ½ λ (tr ε)² + μ ε : ε with ε_zz = 0.
        let lambda = p.youngs * p.poisson / ((1.0 + p.poisson) * (1.0 - 2.0 * p.poisson));
        let mu = p.shear();
        let t = strain[0] + strain[1];
        let eps_contract =
            strain[0] * strain[0] + strain[1] * strain[1] + 0.5 * strain[2] * strain[2];
        0.5 * lambda * t * t + mu * eps_contract
    }

    #[test]
    fn derived_moduli() {
        let p = params();
        assert!((p.bulk() - 175_000.0).abs() < 1e-9);
        assert!((p.shear() - 80_769.230_769_230_77).abs() < 1e-6);
        assert!((p.alpha() - 100.0 * 2.7 / 2.5e-2).abs() < 1e-9);
    }

    #[test]
    fn validate_rejects_bad_parameters() {
        let mut p = params();
        p.poisson = 0.5;
        assert!(p.validate().is_err());
        let mut p = params();
        p.youngs = -1.0;
        assert!(p.validate().is_err());
        assert!(params().validate().is_ok());
    }

    #[test]
    fn split_sums_to_full_energy() {
        let p = params();
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        for _ in 0..500 {
            let strain = [
                rng.random_range(-0.02..0.02),
                rng.random_range(-0.02..0.02),
                rng.random_range(-0.02..0.02),
            ];
            let s = strain_energy_split(&strain, 2, &p);
            let full = full_energy_2d(&strain, &p);
            assert!(
                (s.psi_pos + s.psi_neg - full).abs() <= 1e-10 * full.abs().max(1e-30),
                "split does not sum to the full energy"
            );
            // The split stresses sum to the full isotropic stress.
            let lambda = p.youngs * p.poisson / ((1.0 + p.poisson) * (1.0 - 2.0 * p.poisson));
            let mu = p.shear();
            let t = strain[0] + strain[1];
            let full_sig = [
                lambda * t + 2.0 * mu * strain[0],
                lambda * t + 2.0 * mu * strain[1],
                mu * strain[2],
            ];
            for i in 0..3 {
                let got = s.sig_pos[i] + s.sig_neg[i];
                assert!((got - full_sig[i]).abs() <= 1e-9 * full_sig[i].abs().max(1.0));
            }
        }
        // 1D: the whole energy is tensile by convention.
        for _ in 0..100 {
            let e = rng.random_range(-0.05..0.05f64);
            let s = strain_energy_split(&[e, 0.0, 0.0], 1, &p);
            assert_eq!(s.psi_neg, 0.0);
            assert!((s.psi_pos - 0.5 * p.youngs * e * e).abs() < 1e-12 * s.psi_pos.max(1.0));
        }
    }

    #[test]
    fn tension_is_tensile_and_volumetric_compression_lands_in_psi_neg() {
        let p = params();
        // Uniaxial stretch: everything tensile.
        let s = strain_energy_split(&[1e-3, 0.0, 0.0], 2, &p);
        assert!(s.psi_neg < 1e-30);
        assert!((s.psi_pos - full_energy_2d(&[1e-3, 0.0, 0.0], &p)).abs() < 1e-10);
        // Negative trace: the volumetric term moves entirely to Ψ⁻.
        let strain = [-2e-3, -1e-3, 5e-4];
        let s = strain_energy_split(&strain, 2, &p);
        let t: f64 = strain[0] + strain[1];
        assert!((s.psi_neg - 0.5 * p.bulk() * t * t).abs() < 1e-10 * s.psi_neg.max(1.0));
        assert!(s.psi_pos > 0.0, "deviatoric part stays tensile");
    }

    #[test]
    fn stresses_are_energy_gradients() {
        // Central finite differences of Ψ±; the exact gradients are the
        // split stresses. Both branches are quadratic, so the only FD error
        // is roundoff — a generous step is the accurate choice. Samples
        // whose trace sits within a step of the tension/compression kink
        // are skipped.
        let p = params();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for dim in [1usize, 2] {
            for _ in 0..200 {
                let strain: [f64; 3] = [
                    rng.random_range(-0.02..0.02),
                    rng.random_range(-0.02..0.02),
                    rng.random_range(-0.02..0.02),
                ];
                if dim == 2 && (strain[0] + strain[1]).abs() < 1e-4 {
                    continue;
                }
                let s = strain_energy_split(&strain, dim, &p);
                let n_comp = if dim == 1 { 1 } else { 3 };
                for c in 0..n_comp {
                    let h = 1e-5;
                    let mut up = strain;
                    up[c] += h;
                    let mut dn = strain;
                    dn[c] -= h;
                    let su = strain_energy_split(&up, dim, &p);
                    let sd = strain_energy_split(&dn, dim, &p);
                    let fd_pos = (su.psi_pos - sd.psi_pos) / (2.0 * h);
                    let fd_neg = (su.psi_neg - sd.psi_neg) / (2.0 * h);
                    let scale = s.sig_pos[c].abs().max(1.0);
                    assert!(
                        (fd_pos - s.sig_pos[c]).abs() <= 1e-8 * scale,
                        "dim {dim} comp {c}: σ⁺ {} vs fd {fd_pos}",
                        s.sig_pos[c]
                    );
                    assert!((fd_neg - s.sig_neg[c]).abs() <= 1e-8 * s.sig_neg[c].abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn tangents_match_stress_differences() {
        let p = params();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..200 {
            let strain = [
                rng.random_range(-0.02..0.02),
                rng.random_range(-0.02..0.02),
                rng.random_range(-0.02..0.02),
            ];
            let (c_pos, c_neg) = split_tangents(&strain, 2, &p);
            for c in 0..3 {
                let h = 1e-7;
                let mut up = strain;
                up[c] += h;
                let mut dn = strain;
                dn[c] -= h;
                let su = strain_energy_split(&up, 2, &p);
                let sd = strain_energy_split(&dn, 2, &p);
                for r in 0..3 {
                    let fd = (su.sig_pos[r] - sd.sig_pos[r]) / (2.0 * h);
                    assert!(
                        (fd - c_pos[r][c]).abs() <= 1e-5 * c_pos[r][c].abs().max(p.shear()),
                        "C+ [{r}][{c}]"
                    );
                    let fd = (su.sig_neg[r] - sd.sig_neg[r]) / (2.0 * h);
                    assert!((fd - c_neg[r][c]).abs() <= 1e-5 * c_neg[r][c].abs().max(p.shear()));
                }
            }
        }
    }
}
