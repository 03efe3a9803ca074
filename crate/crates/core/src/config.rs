//! Run configuration: a TOML file with one section per concern.
//!
//! ```toml
//! [mesh]
//! nx = 32
//! ny = 16
//! lx = 2.0
//! ly = 1.0
//! left = ["dirichlet_d", "dirichlet_c"]
//! right = ["neumann_0", "neumann_g"]
//! top = ["neumann_0"]
//! bottom = ["neumann_0"]
//!
//! [materials]
//! epsilon = 0.0625
//! density = [1.0]
//! young = [1.0]
//! poisson = [0.3]
//! void_density = 1.0
//! void_young = 1.0
//!
//! [objective]
//! targets = [1]
//! psi = "neg_min_first"
//! gamma = 0.01
//!
//! [constraints]
//! mean = [0.4, 0.6]
//! ```
//!
//! Optional sections: `[loads]` (enables the combined problem),
//! `[optimizer]`, `[output]`, and `[[constraints.solid]]` /
//! `[[constraints.void]]` boxes pinning material or void. Every validation
//! failure reports the offending key path. The one interface thickness
//! `materials.epsilon` feeds both the void scaling and the interface energy.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compliance::{LoadCase, Rect};
use crate::eigen::EigenOptions;
use crate::grid::{build_rect_mesh, BoundarySpec, BoundaryTag, Mesh};
use crate::material::{CutoffParams, MaterialSet};
use crate::opt::{ObjectiveSpec, OptOptions, PsiKind};
use crate::phasefield::{AdmissibleSet, FixedRegions, PhaseField};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TagName {
    #[serde(rename = "dirichlet_d")]
    DirichletD,
    #[serde(rename = "neumann_0")]
    Neumann0,
    #[serde(rename = "dirichlet_c")]
    DirichletC,
    #[serde(rename = "neumann_g")]
    NeumannG,
}

impl From<TagName> for BoundaryTag {
    fn from(t: TagName) -> Self {
        match t {
            TagName::DirichletD => BoundaryTag::DirichletD,
            TagName::Neumann0 => BoundaryTag::Neumann0,
            TagName::DirichletC => BoundaryTag::DirichletC,
            TagName::NeumannG => BoundaryTag::NeumannG,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub bottom: Vec<TagName>,
    pub right: Vec<TagName>,
    pub top: Vec<TagName>,
    pub left: Vec<TagName>,
}

fn default_void_poisson() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialsConfig {
    /// Interface thickness; the void phase scales with its square.
    pub epsilon: f64,
    pub density: Vec<f64>,
    pub young: Vec<f64>,
    pub poisson: Vec<f64>,
    pub void_density: f64,
    pub void_young: f64,
    #[serde(default = "default_void_poisson")]
    pub void_poisson: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiName {
    WeightedSum,
    NegMinFirst,
    InverseSum,
}

impl From<PsiName> for PsiKind {
    fn from(p: PsiName) -> Self {
        match p {
            PsiName::WeightedSum => PsiKind::WeightedSum,
            PsiName::NegMinFirst => PsiKind::NegMinFirst,
            PsiName::InverseSum => PsiKind::InverseSum,
        }
    }
}

fn default_c_psi() -> f64 {
    1e6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    /// One-based eigenvalue indices.
    pub targets: Vec<usize>,
    pub psi: PsiName,
    #[serde(default)]
    pub weights: Vec<f64>,
    pub gamma: f64,
    #[serde(default = "default_c_psi")]
    pub c_psi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl From<BoxConfig> for Rect {
    fn from(b: BoxConfig) -> Self {
        Rect {
            x0: b.x0,
            y0: b.y0,
            x1: b.x1,
            y1: b.y1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintsConfig {
    /// Prescribed spatial mean, one entry per phase, summing to one.
    pub mean: Vec<f64>,
    /// Boxes whose vertices are pinned to full material.
    #[serde(default)]
    pub solid: Vec<BoxConfig>,
    /// Boxes whose vertices are pinned to void.
    #[serde(default)]
    pub void: Vec<BoxConfig>,
}

fn default_nu() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadsConfig {
    pub body_force: [f64; 2],
    #[serde(default)]
    pub traction: [f64; 2],
    #[serde(default)]
    pub target: [f64; 2],
    #[serde(default)]
    pub weight_support: Option<BoxConfig>,
    #[serde(default = "default_nu")]
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub max_iter: usize,
    pub conv_tol: f64,
    pub armijo_sigma: f64,
    pub backtrack_beta: f64,
    pub step0: f64,
    pub seed: u64,
    pub vi_probes: usize,
    pub eig_tol: f64,
    pub cluster_tol: f64,
    /// Amplitude of the seeded noise added to the constant initial field.
    pub init_noise: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let opt = OptOptions::default();
        Self {
            max_iter: opt.max_iter,
            conv_tol: opt.conv_tol,
            armijo_sigma: opt.armijo_sigma,
            backtrack_beta: opt.backtrack_beta,
            step0: opt.step0,
            seed: opt.seed,
            vi_probes: opt.vi_probes,
            eig_tol: opt.eig.tol,
            cluster_tol: opt.eig.cluster_tol,
            init_noise: 0.01,
        }
    }
}

fn default_directory() -> String {
    "out".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: String,
    /// Write a VTK snapshot every this many iterations; 0 = final only.
    pub vtk_every: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            vtk_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshConfig,
    pub materials: MaterialsConfig,
    pub objective: ObjectiveConfig,
    pub constraints: ConstraintsConfig,
    #[serde(default)]
    pub loads: Option<LoadsConfig>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Reads and fully validates a configuration file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    parse_config_str(&text).map_err(|e| match e {
        Error::Config {
            path: key,
            message,
        } => Error::config(format!("{}:{key}", path.display()), message),
        other => other,
    })
}

/// Parses configuration text; used by [`parse_config`] and tests.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig =
        toml::from_str(text).map_err(|e| Error::config("<toml>", e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Serializes a configuration; `parse_config_str(write_config_str(c)) == c`.
pub fn write_config_str(cfg: &RunConfig) -> Result<String> {
    toml::to_string_pretty(cfg).map_err(|e| Error::config("<toml>", e.to_string()))
}

pub fn write_config(path: impl AsRef<Path>, cfg: &RunConfig) -> Result<()> {
    std::fs::write(path, write_config_str(cfg)?)?;
    Ok(())
}

impl RunConfig {
    /// Phase count including void.
    pub fn n_phases(&self) -> usize {
        self.materials.density.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.mesh;
        if m.nx == 0 || m.ny == 0 {
            return Err(Error::config("mesh.nx", "cell counts must be positive"));
        }
        if !(m.lx > 0.0 && m.ly > 0.0) {
            return Err(Error::config("mesh.lx", "side lengths must be positive"));
        }
        let mats = &self.materials;
        let n_real = mats.density.len();
        if n_real == 0 {
            return Err(Error::config(
                "materials.density",
                "at least one material is required",
            ));
        }
        if mats.young.len() != n_real || mats.poisson.len() != n_real {
            return Err(Error::config(
                "materials.young",
                format!(
                    "expected {n_real} entries to match materials.density, got {} young / {} poisson",
                    mats.young.len(),
                    mats.poisson.len()
                ),
            ));
        }
        if !(mats.epsilon > 0.0) {
            return Err(Error::config("materials.epsilon", "must be positive"));
        }
        // the material table itself is validated when built
        self.build_materials()
            .map_err(|e| Error::config("materials", e.to_string()))?;

        let obj = &self.objective;
        match obj.psi {
            PsiName::NegMinFirst => {
                if obj.targets != [1] {
                    return Err(Error::config(
                        "objective.targets",
                        "neg_min_first targets exactly eigenvalue 1",
                    ));
                }
            }
            PsiName::WeightedSum | PsiName::InverseSum => {
                if obj.weights.len() != obj.targets.len() {
                    return Err(Error::config(
                        "objective.weights",
                        format!(
                            "{} weights for {} targets",
                            obj.weights.len(),
                            obj.targets.len()
                        ),
                    ));
                }
            }
        }
        if obj.targets.iter().any(|&t| t == 0) {
            return Err(Error::config("objective.targets", "indices are one-based"));
        }
        if !(obj.gamma >= 0.0) {
            return Err(Error::config("objective.gamma", "must be nonnegative"));
        }

        let cons = &self.constraints;
        if cons.mean.len() != self.n_phases() {
            return Err(Error::config(
                "constraints.mean",
                format!(
                    "{} entries for {} phases",
                    cons.mean.len(),
                    self.n_phases()
                ),
            ));
        }
        if cons.mean.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::config(
                "constraints.mean",
                "mean not on the open simplex: components must lie in (0, 1)",
            ));
        }
        if (cons.mean.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::config(
                "constraints.mean",
                "mean not on simplex: components must sum to one",
            ));
        }
        for (kind, boxes) in [("solid", &cons.solid), ("void", &cons.void)] {
            for (i, b) in boxes.iter().enumerate() {
                if b.x0 > b.x1 || b.y0 > b.y1 {
                    return Err(Error::config(
                        format!("constraints.{kind}[{i}]"),
                        "box corners are reversed",
                    ));
                }
                if b.x0 < 0.0 || b.y0 < 0.0 || b.x1 > m.lx || b.y1 > m.ly {
                    return Err(Error::config(
                        format!("constraints.{kind}[{i}]"),
                        "box extends outside the design domain",
                    ));
                }
            }
        }

        if let Some(loads) = &self.loads {
            if !(loads.nu > 0.0 && loads.nu <= 1.0) {
                return Err(Error::config("loads.nu", "exponent must lie in (0, 1]"));
            }
            if loads.alpha < 0.0 || loads.beta < 0.0 {
                return Err(Error::config("loads.alpha", "weights must be nonnegative"));
            }
        }
        if !(self.optimizer.conv_tol > 0.0)
            || !(self.optimizer.step0 > 0.0)
            || !(self.optimizer.backtrack_beta > 0.0 && self.optimizer.backtrack_beta < 1.0)
        {
            return Err(Error::config(
                "optimizer",
                "tolerances and steps must be positive, backtrack_beta in (0, 1)",
            ));
        }
        Ok(())
    }

    pub fn build_mesh(&self) -> Result<Mesh> {
        let conv = |tags: &[TagName]| -> Vec<BoundaryTag> {
            tags.iter().map(|&t| t.into()).collect()
        };
        let spec = BoundarySpec {
            bottom: conv(&self.mesh.bottom),
            right: conv(&self.mesh.right),
            top: conv(&self.mesh.top),
            left: conv(&self.mesh.left),
        };
        build_rect_mesh(self.mesh.nx, self.mesh.ny, self.mesh.lx, self.mesh.ly, &spec)
    }

    pub fn build_materials(&self) -> Result<MaterialSet> {
        MaterialSet::new(
            &self.materials.density,
            &self.materials.young,
            &self.materials.poisson,
            self.materials.void_density,
            self.materials.void_young,
            self.materials.void_poisson,
            self.materials.epsilon,
        )
    }

    pub fn cutoff_params(&self) -> Result<CutoffParams> {
        Ok(CutoffParams::default_for(&self.build_materials()?))
    }

    pub fn objective_spec(&self) -> ObjectiveSpec {
        ObjectiveSpec {
            targets: self.objective.targets.clone(),
            kind: self.objective.psi.into(),
            weights: self.objective.weights.clone(),
            gamma: self.objective.gamma,
            epsilon: self.materials.epsilon,
            lower_bound: self.objective.c_psi,
        }
    }

    pub fn admissible_set(&self, mesh: &Mesh) -> Result<AdmissibleSet> {
        let nv = mesh.num_vertices();
        let mut fixed = FixedRegions::none(nv);
        for b in &self.constraints.solid {
            for v in mesh.vertices_in_box(b.x0, b.y0, b.x1, b.y1) {
                fixed.solid[v] = true;
            }
        }
        for b in &self.constraints.void {
            for v in mesh.vertices_in_box(b.x0, b.y0, b.x1, b.y1) {
                if fixed.solid[v] {
                    return Err(Error::Infeasible(
                        "solid and void boxes overlap".into(),
                    ));
                }
                fixed.void[v] = true;
            }
        }
        Ok(AdmissibleSet::new(self.constraints.mean.clone(), fixed))
    }

    pub fn load_case(&self) -> Result<LoadCase> {
        let loads = self.loads.as_ref().ok_or_else(|| {
            Error::config("loads", "the combined problem needs a [loads] section")
        })?;
        Ok(LoadCase {
            body_force: loads.body_force,
            traction: loads.traction,
            target: loads.target,
            weight_support: loads.weight_support.map(Rect::from),
            exponent: loads.nu,
            alpha: loads.alpha,
            beta: loads.beta,
        })
    }

    pub fn opt_options(&self) -> OptOptions {
        let o = &self.optimizer;
        OptOptions {
            max_iter: o.max_iter,
            conv_tol: o.conv_tol,
            armijo_sigma: o.armijo_sigma,
            backtrack_beta: o.backtrack_beta,
            step0: o.step0,
            seed: o.seed,
            vi_probes: o.vi_probes,
            eig: EigenOptions {
                tol: o.eig_tol,
                cluster_tol: o.cluster_tol,
                seed: o.seed,
            },
        }
    }

    /// Initial field: the constant mean plus seeded componentwise noise,
    /// projected back onto the admissible set.
    pub fn initial_field(&self, mesh: &Mesh, admissible: &AdmissibleSet) -> Result<PhaseField> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.optimizer.seed);
        let n = self.n_phases();
        let noise = self.optimizer.init_noise;
        let mean = &self.constraints.mean;
        let raw = PhaseField::from_fn(mesh.num_vertices(), n, |_, i| {
            mean[i] + noise * (rng.random::<f64>() - 0.5)
        });
        admissible.project(mesh, &raw)
    }
}

/// A small eigenvalue-maximization setup on a clamped beam; the starting
/// point for hand-written configurations.
pub fn example_config() -> RunConfig {
    RunConfig {
        mesh: MeshConfig {
            nx: 16,
            ny: 8,
            lx: 2.0,
            ly: 1.0,
            bottom: vec![TagName::Neumann0],
            right: vec![TagName::Neumann0, TagName::NeumannG],
            top: vec![TagName::Neumann0],
            left: vec![TagName::DirichletD, TagName::DirichletC],
        },
        materials: MaterialsConfig {
            epsilon: 0.0625,
            density: vec![1.0],
            young: vec![1.0],
            poisson: vec![0.3],
            void_density: 1.0,
            void_young: 1.0,
            void_poisson: default_void_poisson(),
        },
        objective: ObjectiveConfig {
            targets: vec![1],
            psi: PsiName::NegMinFirst,
            weights: vec![],
            gamma: 0.01,
            c_psi: default_c_psi(),
        },
        constraints: ConstraintsConfig {
            mean: vec![0.4, 0.6],
            solid: vec![],
            void: vec![],
        },
        loads: Some(LoadsConfig {
            body_force: [0.0, -1.0],
            traction: [0.0, 0.0],
            target: [0.0, 0.0],
            weight_support: None,
            nu: 1.0,
            alpha: 1.0,
            beta: 0.0,
        }),
        optimizer: OptimizerConfig {
            max_iter: 60,
            ..OptimizerConfig::default()
        },
        output: OutputConfig::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_round_trips() {
        let cfg = example_config();
        cfg.validate().unwrap();
        let text = write_config_str(&cfg).unwrap();
        let back = parse_config_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn minimal_file_fills_defaults() {
        let text = r#"
            [mesh]
            nx = 4
            ny = 4
            lx = 1.0
            ly = 1.0
            bottom = ["neumann_0"]
            right = ["neumann_0"]
            top = ["neumann_0"]
            left = ["dirichlet_d"]

            [materials]
            epsilon = 0.25
            density = [1.0]
            young = [1.0]
            poisson = [0.3]
            void_density = 1.0
            void_young = 1.0

            [objective]
            targets = [1]
            psi = "neg_min_first"
            gamma = 0.05

            [constraints]
            mean = [0.5, 0.5]
        "#;
        let cfg = parse_config_str(text).unwrap();
        assert_eq!(cfg.optimizer.max_iter, OptimizerConfig::default().max_iter);
        assert_eq!(cfg.output.directory, "out");
        assert_eq!(cfg.materials.void_poisson, 0.3);
        assert!(cfg.loads.is_none());
    }

    #[test]
    fn mean_off_simplex_rejected() {
        let mut cfg = example_config();
        cfg.constraints.mean = vec![0.6, 0.5];
        let err = cfg.validate().unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("constraints.mean") && msg.contains("sum to one"),
            "unexpected message: {msg}"
        );
    }

    #[test]
    fn key_paths_in_errors() {
        let mut cfg = example_config();
        cfg.objective.targets = vec![0];
        assert!(cfg.validate().unwrap_err().to_string().contains("objective.targets"));

        let mut cfg = example_config();
        cfg.materials.poisson = vec![0.7];
        assert!(cfg.validate().unwrap_err().to_string().contains("materials"));

        let mut cfg = example_config();
        cfg.constraints.solid = vec![BoxConfig {
            x0: -1.0,
            y0: 0.0,
            x1: 0.5,
            y1: 0.5,
        }];
        assert!(cfg
            .validate()
            .unwrap_err()
            .to_string()
            .contains("constraints.solid[0]"));
    }

    #[test]
    fn missing_file_is_config_error() {
        let err = parse_config("/nonexistent/path.toml").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn builders_produce_consistent_objects() {
        let cfg = example_config();
        let mesh = cfg.build_mesh().unwrap();
        assert_eq!(mesh.num_vertices(), 17 * 9);
        let mats = cfg.build_materials().unwrap();
        assert_eq!(mats.n_phases(), 2);
        let spec = cfg.objective_spec();
        assert_eq!(spec.epsilon, cfg.materials.epsilon);
        let admissible = cfg.admissible_set(&mesh).unwrap();
        let phi0 = cfg.initial_field(&mesh, &admissible).unwrap();
        assert!(admissible.is_admissible(&mesh, &phi0, 1e-9));
        let load = cfg.load_case().unwrap();
        assert_eq!(load.alpha, 1.0);
    }
}
