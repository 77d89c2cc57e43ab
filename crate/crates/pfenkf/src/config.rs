//! Declarative experiment configuration: TOML files with sections mirroring
//! the library modules, shipped presets at desk and production scale, and a
//! stable content hash that every output artifact records.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ensemble::{NucleusDraw, PriorPore2d, PriorRod1d, PriorSpec};
use crate::error::{Error, Result};
use crate::filter::FilterConfig;
use crate::kernel::MaternParams;
use crate::material::MaterialParams;
use crate::mesh::{build_mesh_1d, build_mesh_sens, Diagonal, Mesh, RefineBand};
use crate::model::{BoundaryConditions, LoadSchedule, LoadSegment, NewtonSettings};
use crate::observation::{equispaced_sensors_1d, grid_sensors_2d, truth_mesh_1d};

/// Which of the shipped experiments a config describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Tension rod with an uncertain initial damage nucleus.
    Rod1d,
    /// Single-edge-notched shear plate with an uncertain initial pore.
    Sens2d,
    /// Small linear-Gaussian smoke experiment exercising the full pipeline.
    LinearToy,
}

impl ExperimentKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "rod1d" => Ok(ExperimentKind::Rod1d),
            "sens2d" => Ok(ExperimentKind::Sens2d),
            "linear-toy" => Ok(ExperimentKind::LinearToy),
            other => Err(Error::Config(format!(
                "unknown experiment '{other}' (expected rod1d, sens2d, or linear-toy)"
            ))),
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ExperimentKind::Rod1d => "rod1d",
            ExperimentKind::Sens2d => "sens2d",
            ExperimentKind::LinearToy => "linear-toy",
        };
        f.write_str(name)
    }
}

/// Scale preset: `desk` finishes on a laptop, `paper` matches the production
/// resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Desk,
    Paper,
}

impl Preset {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::Config(format!(
                "unknown preset '{other}' (expected desk or paper)"
            ))),
        }
    }
}

/// Mesh settings per experiment geometry.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeshConfig {
    Rod1d {
        n_elems: usize,
        x_min: f64,
        x_max: f64,
    },
    Sens2d {
        h_coarse: f64,
        h_fine: f64,
        band: RefineBand,
        diagonal: Diagonal,
    },
}

impl MeshConfig {
    pub fn build(&self) -> Result<Mesh> {
        match self {
            MeshConfig::Rod1d {
                n_elems,
                x_min,
                x_max,
            } => build_mesh_1d(*n_elems, *x_min, *x_max),
            MeshConfig::Sens2d {
                h_coarse,
                h_fine,
                band,
                diagonal,
            } => build_mesh_sens(*h_coarse, *h_fine, *band, *diagonal),
        }
    }

    /// Finer, non-nested mesh for the ground truth: 1D uses `2n+1` elements;
    /// 2D shrinks both target edge lengths by `refine` and flips the
    /// triangulation diagonal.
    pub fn build_truth(&self, refine: f64) -> Result<Mesh> {
        if !(refine > 1.0) {
            return Err(Error::Config(format!(
                "truth refinement factor must exceed 1, got {refine}"
            )));
        }
        match self {
            MeshConfig::Rod1d {
                n_elems,
                x_min,
                x_max,
            } => truth_mesh_1d(*n_elems, *x_min, *x_max),
            MeshConfig::Sens2d {
                h_coarse,
                h_fine,
                band,
                diagonal,
            } => build_mesh_sens(
                h_coarse / refine,
                h_fine / refine,
                *band,
                match diagonal {
                    Diagonal::Rising => Diagonal::Falling,
                    Diagonal::Falling => Diagonal::Rising,
                },
            ),
        }
    }
}

/// Sensor placement.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SensorLayout {
    Equispaced1d {
        n: usize,
        x_min: f64,
        x_max: f64,
    },
    Grid2d {
        n_x: usize,
        n_y: usize,
        x: (f64, f64),
        y: (f64, f64),
    },
    Explicit {
        points: Vec<[f64; 2]>,
    },
}

impl SensorLayout {
    pub fn points(&self) -> Vec<[f64; 2]> {
        match self {
            SensorLayout::Equispaced1d { n, x_min, x_max } => {
                equispaced_sensors_1d(*n, *x_min, *x_max)
            }
            SensorLayout::Grid2d { n_x, n_y, x, y } => grid_sensors_2d(*n_x, *n_y, *x, *y),
            SensorLayout::Explicit { points } => points.clone(),
        }
    }

    pub fn n_sensors(&self) -> usize {
        match self {
            SensorLayout::Equispaced1d { n, .. } => *n,
            SensorLayout::Grid2d { n_x, n_y, .. } => n_x * n_y,
            SensorLayout::Explicit { points } => points.len(),
        }
    }
}

/// A fixed damage nucleus (the ground truth's initial defect).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NucleusConfig {
    pub center: [f64; 2],
    pub magnitude: f64,
    pub std: f64,
}

impl NucleusConfig {
    pub fn draw(&self) -> NucleusDraw {
        NucleusDraw {
            center: self.center,
            magnitude: self.magnitude,
            std: self.std,
        }
    }
}

/// Ground-truth settings: the fixed defect and how much finer its mesh is.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub nucleus: Option<NucleusConfig>,
    /// Edge-length refinement of the truth mesh relative to the ensemble
    /// mesh (2D; the 1D truth mesh always uses 2n+1 elements).
    pub refine: f64,
}

/// Prior over member initial conditions plus the ensemble size.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub n_ens: usize,
    pub spec: PriorSpec,
}

/// Data-model settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    pub sensors: SensorLayout,
    pub rho: f64,
    pub sigma_e: f64,
    pub kernel: MaternParams,
    pub n_obs: usize,
}

/// Artifact settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Output directory; overridable with `--out`.
    pub dir: String,
    /// Also run a no-analysis control ensemble during `filter`, for
    /// with/without-assimilation comparisons.
    pub control_run: bool,
}

/// The complete declarative description of one experiment run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Master seed; every random draw derives from it.
    pub seed: u64,
    /// Committed load steps of the run.
    pub n_steps: usize,
    pub mesh: MeshConfig,
    pub material: MaterialParams,
    pub load: LoadSchedule,
    pub newton: NewtonSettings,
    pub prior: PriorConfig,
    pub truth: TruthConfig,
    pub observation: ObservationConfig,
    pub filter: FilterConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    /// Parse a TOML config file.
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Serialize to canonical TOML (field order is fixed by the types).
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("config serialization failed: {e}")))
    }

    /// SHA-256 of the canonical TOML form; recorded in every artifact.
    pub fn hash(&self) -> String {
        let text = self.to_toml().expect("config reserializes");
        let mut h = Sha256::new();
        h.update(text.as_bytes());
        let digest = h.finalize();
        let mut out = String::with_capacity(64);
        for b in digest {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }

    /// Shipped preset for an experiment at a scale.
    pub fn preset(kind: ExperimentKind, preset: Preset) -> ExperimentConfig {
        match kind {
            ExperimentKind::Rod1d => rod1d_preset(preset),
            ExperimentKind::Sens2d => sens2d_preset(preset),
            ExperimentKind::LinearToy => linear_toy_preset(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.material.validate()?;
        self.load.validate()?;
        self.observation.kernel.validate()?;
        self.filter.validate(self.material.ell)?;
        if self.prior.n_ens < 2 {
            return Err(Error::Config(format!(
                "ensemble size must be at least 2, got {}",
                self.prior.n_ens
            )));
        }
        if self.n_steps == 0 {
            return Err(Error::Config("n_steps must be positive".into()));
        }
        if !(self.observation.sigma_e > 0.0) {
            return Err(Error::Config(format!(
                "sensor noise must be positive, got {}",
                self.observation.sigma_e
            )));
        }
        if self.observation.n_obs == 0 {
            return Err(Error::Config("n_obs must be at least 1".into()));
        }
        if self.observation.sensors.n_sensors() == 0 {
            return Err(Error::Config("at least one sensor is required".into()));
        }
        if !(self.truth.refine > 1.0) {
            return Err(Error::Config(format!(
                "truth refinement factor must exceed 1, got {}",
                self.truth.refine
            )));
        }
        if let Some(&last) = self.filter.analysis_steps.last() {
            if last > self.n_steps {
                return Err(Error::Config(format!(
                    "analysis step {last} lies beyond the {}-step run",
                    self.n_steps
                )));
            }
        }
        let mesh_matches = matches!(
            (self.experiment, &self.mesh),
            (ExperimentKind::Rod1d, MeshConfig::Rod1d { .. })
                | (ExperimentKind::LinearToy, MeshConfig::Rod1d { .. })
                | (ExperimentKind::Sens2d, MeshConfig::Sens2d { .. })
        );
        if !mesh_matches {
            return Err(Error::Config(format!(
                "experiment {} does not match the configured mesh geometry",
                self.experiment
            )));
        }
        match (&self.experiment, &self.prior.spec) {
            (ExperimentKind::Sens2d, PriorSpec::Rod1d(_)) => {
                return Err(Error::Config(
                    "sens2d cannot use the 1D rod prior".into(),
                ));
            }
            (ExperimentKind::Rod1d | ExperimentKind::LinearToy, PriorSpec::Pore2d(_)) => {
                return Err(Error::Config(
                    "1D experiments cannot use the 2D pore prior".into(),
                ));
            }
            _ => {}
        }
        Ok(())
    }

    /// Dirichlet set of the experiment's geometry.
    pub fn boundary_conditions(&self, mesh: &Mesh) -> Result<BoundaryConditions> {
        match self.experiment {
            ExperimentKind::Rod1d | ExperimentKind::LinearToy => BoundaryConditions::bar(mesh),
            ExperimentKind::Sens2d => BoundaryConditions::sens(mesh),
        }
    }

    /// Boundary whose reaction force is reported, and its component.
    pub fn loaded_boundary(&self) -> (&'static str, usize) {
        match self.experiment {
            ExperimentKind::Rod1d | ExperimentKind::LinearToy => ("right", 0),
            ExperimentKind::Sens2d => ("top", 0),
        }
    }
}

fn rod1d_preset(preset: Preset) -> ExperimentConfig {
    let n_ens = match preset {
        Preset::Desk => 50,
        Preset::Paper => 100,
    };
    ExperimentConfig {
        experiment: ExperimentKind::Rod1d,
        seed: 1234,
        n_steps: 110,
        mesh: MeshConfig::Rod1d {
            n_elems: 200,
            x_min: -1.0,
            x_max: 1.0,
        },
        material: MaterialParams {
            youngs: 210_000.0,
            poisson: 0.3,
            gc: 2.7,
            ell: 2.5e-2,
            beta: 100.0,
        },
        load: LoadSchedule::uniform(1e-4),
        newton: NewtonSettings::default(),
        prior: PriorConfig {
            n_ens,
            // The position law is deliberately broad: a Kalman update moves
            // members only inside the ensemble anomaly span, so the prior
            // must place nuclei across the whole bar for the data to be able
            // to select the supported crack position. A narrow prior that
            // misses the true crack region leaves the filter no direction in
            // which to relocate damage, no matter how informative the data.
            spec: PriorSpec::Rod1d(PriorRod1d {
                center_mean: 0.0,
                center_std: 1.0,
                domain: (-0.9, 0.9),
                ..PriorRod1d::default()
            }),
        },
        truth: TruthConfig {
            nucleus: Some(NucleusConfig {
                center: [0.57, 0.0],
                magnitude: 0.7,
                std: 0.05,
            }),
            refine: 2.0,
        },
        observation: ObservationConfig {
            sensors: SensorLayout::Equispaced1d {
                n: 25,
                x_min: -1.0,
                x_max: 1.0,
            },
            rho: 1.0,
            sigma_e: 4e-4,
            kernel: MaternParams {
                nu: 1.5,
                sigma: 2e-4,
                length: 0.3,
            },
            n_obs: 20,
        },
        filter: FilterConfig {
            analysis_steps: vec![82, 92, 102],
            // A 50-member ensemble in a ~400-dimensional state badly
            // underestimates variance in sparsely supported directions;
            // the aggressive factor keeps the update strong enough for the
            // rebuilt phase field to stay above the self-sustaining level.
            inflation: 2.0,
            localization: Some(0.45),
            l_reg: 0.1,
            // No extra staggered sweeps: before a crack is fully developed,
            // every sweep contracts the rebuilt phase field toward the
            // homogeneous state and bleeds out the assimilated localization.
            n_stagger: 0,
            rho: 1.0,
            recalibrate: false,
        },
        output: OutputConfig {
            dir: "out/rod1d".into(),
            control_run: false,
        },
    }
}

fn sens2d_preset(preset: Preset) -> ExperimentConfig {
    let (h_coarse, h_fine, n_ens, n_steps, analysis_steps, load, sensors) = match preset {
        Preset::Desk => (
            0.08,
            0.018,
            20,
            130,
            vec![100usize],
            LoadSchedule::uniform(1e-4),
            SensorLayout::Grid2d {
                n_x: 5,
                n_y: 5,
                x: (0.1, 0.9),
                y: (0.08, 0.88),
            },
        ),
        Preset::Paper => (
            0.05,
            0.006,
            100,
            520,
            vec![381usize, 485],
            LoadSchedule {
                segments: vec![
                    LoadSegment {
                        from_step: 1,
                        delta_u: 1e-4,
                    },
                    LoadSegment {
                        from_step: 71,
                        delta_u: 1e-5,
                    },
                ],
            },
            SensorLayout::Grid2d {
                n_x: 10,
                n_y: 10,
                x: (0.1, 0.9),
                y: (0.08, 0.88),
            },
        ),
    };
    let ell = 1.5e-2;
    ExperimentConfig {
        experiment: ExperimentKind::Sens2d,
        seed: 1234,
        n_steps,
        mesh: MeshConfig::Sens2d {
            h_coarse,
            h_fine,
            band: RefineBand::sens_default(),
            diagonal: Diagonal::Falling,
        },
        material: MaterialParams {
            youngs: 210_000.0,
            poisson: 0.3,
            gc: 2.7,
            ell,
            beta: 100.0,
        },
        load,
        newton: NewtonSettings::default(),
        prior: PriorConfig {
            n_ens,
            spec: PriorSpec::Pore2d(PriorPore2d::default()),
        },
        truth: TruthConfig {
            nucleus: Some(NucleusConfig {
                center: [0.565, 0.455],
                magnitude: 0.75,
                std: 0.03,
            }),
            refine: 1.5,
        },
        observation: ObservationConfig {
            sensors,
            rho: 1.0,
            sigma_e: 4e-4,
            kernel: MaternParams {
                nu: 1.5,
                sigma: 2e-4,
                length: 0.45,
            },
            n_obs: 20,
        },
        filter: FilterConfig {
            analysis_steps,
            inflation: 1.05,
            localization: Some(0.45),
            l_reg: 4.0 * ell,
            n_stagger: 4,
            rho: 1.0,
            recalibrate: false,
        },
        output: OutputConfig {
            dir: "out/sens2d".into(),
            control_run: true,
        },
    }
}

fn linear_toy_preset() -> ExperimentConfig {
    ExperimentConfig {
        experiment: ExperimentKind::LinearToy,
        seed: 1234,
        n_steps: 3,
        mesh: MeshConfig::Rod1d {
            n_elems: 12,
            x_min: -1.0,
            x_max: 1.0,
        },
        material: MaterialParams {
            youngs: 210_000.0,
            poisson: 0.3,
            gc: 2.7,
            ell: 2.5e-2,
            beta: 100.0,
        },
        load: LoadSchedule::uniform(5e-4),
        newton: NewtonSettings::default(),
        prior: PriorConfig {
            n_ens: 10,
            spec: PriorSpec::Rod1d(PriorRod1d::default()),
        },
        truth: TruthConfig {
            nucleus: None,
            refine: 2.0,
        },
        observation: ObservationConfig {
            sensors: SensorLayout::Equispaced1d {
                n: 5,
                x_min: -1.0,
                x_max: 1.0,
            },
            rho: 1.0,
            sigma_e: 4e-4,
            kernel: MaternParams {
                nu: 1.5,
                sigma: 2e-4,
                length: 0.3,
            },
            n_obs: 5,
        },
        filter: FilterConfig {
            analysis_steps: vec![2],
            inflation: 1.05,
            localization: None,
            l_reg: 0.1,
            n_stagger: 1,
            rho: 1.0,
            recalibrate: false,
        },
        output: OutputConfig {
            dir: "out/linear-toy".into(),
            control_run: false,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip_through_toml() {
        for kind in [
            ExperimentKind::Rod1d,
            ExperimentKind::Sens2d,
            ExperimentKind::LinearToy,
        ] {
            for preset in [Preset::Desk, Preset::Paper] {
                let cfg = ExperimentConfig::preset(kind, preset);
                cfg.validate().unwrap();
                let text = cfg.to_toml().unwrap();
                let back: ExperimentConfig = toml::from_str(&text).unwrap();
                back.validate().unwrap();
                assert_eq!(cfg.hash(), back.hash(), "{kind} {preset:?}");
            }
        }
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::preset(ExperimentKind::Rod1d, Preset::Desk);
        let b = ExperimentConfig::preset(ExperimentKind::Rod1d, Preset::Desk);
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let mut c = a.clone();
        c.seed += 1;
        assert_ne!(a.hash(), c.hash(), "seed must enter the hash");
    }

    #[test]
    fn desk_sens_mesh_lands_in_the_target_dof_range() {
        let cfg = ExperimentConfig::preset(ExperimentKind::Sens2d, Preset::Desk);
        let mesh = cfg.mesh.build().unwrap();
        let n = mesh.n_total_dofs();
        assert!(
            (4_000..=8_000).contains(&n),
            "desk mesh has {n} dofs, want 4e3..8e3"
        );
        let truth = cfg.mesh.build_truth(cfg.truth.refine).unwrap();
        assert!(truth.n_total_dofs() > n, "truth mesh must be finer");
    }

    #[test]
    fn paper_sens_mesh_lands_near_production_scale() {
        let cfg = ExperimentConfig::preset(ExperimentKind::Sens2d, Preset::Paper);
        let mesh = cfg.mesh.build().unwrap();
        let n = mesh.n_total_dofs();
        assert!(
            (30_000..=40_000).contains(&n),
            "paper mesh has {n} dofs, want 3e4..4e4"
        );
    }

    #[test]
    fn validation_rejects_inconsistent_configs() {
        let mut cfg = ExperimentConfig::preset(ExperimentKind::Rod1d, Preset::Desk);
        cfg.filter.analysis_steps = vec![500];
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));

        let mut cfg = ExperimentConfig::preset(ExperimentKind::Rod1d, Preset::Desk);
        cfg.prior.spec = PriorSpec::Pore2d(PriorPore2d::default());
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));

        let mut cfg = ExperimentConfig::preset(ExperimentKind::Sens2d, Preset::Desk);
        cfg.mesh = MeshConfig::Rod1d {
            n_elems: 10,
            x_min: 0.0,
            x_max: 1.0,
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));

        let mut cfg = ExperimentConfig::preset(ExperimentKind::Rod1d, Preset::Desk);
        cfg.filter.l_reg = cfg.material.ell * 0.5;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn experiment_names_parse_back() {
        for kind in [
            ExperimentKind::Rod1d,
            ExperimentKind::Sens2d,
            ExperimentKind::LinearToy,
        ] {
            assert_eq!(ExperimentKind::parse(&kind.to_string()).unwrap(), kind);
        }
        assert!(ExperimentKind::parse("bogus").is_err());
        assert!(Preset::parse("desk").is_ok());
        assert!(Preset::parse("paper").is_ok());
        assert!(Preset::parse("huge").is_err());
    }
}
