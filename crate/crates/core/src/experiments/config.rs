use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LodError, Result};
use crate::fem::{read_field, CoefficientField, PotentialField};
use crate::grid::{BoundarySpec, DomainRect, Level, TwoScaleMesh};
use crate::lod::{RhsMode, SourceMode};

use super::generators::{gen_checkerboard_kappa, gen_harmonic_v, gen_kronig_penney_v};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    Poisson,
    Bvp,
    Evp,
    KronigPenney,
    Gpe,
}

impl Problem {
    pub fn name(self) -> &'static str {
        match self {
            Problem::Poisson => "poisson",
            Problem::Bvp => "bvp",
            Problem::Evp => "evp",
            Problem::KronigPenney => "kronig_penney",
            Problem::Gpe => "gpe",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSpec {
    Constant { value: f64 },
    Checkerboard { seed: u64, contrast: f64 },
    File { path: PathBuf },
}

impl CoefficientSpec {
    pub fn build(&self, mesh: &TwoScaleMesh) -> Result<CoefficientField> {
        match self {
            CoefficientSpec::Constant { value } => CoefficientField::constant(mesh, *value),
            CoefficientSpec::Checkerboard { seed, contrast } => {
                gen_checkerboard_kappa(mesh, *seed, *contrast)
            }
            CoefficientSpec::File { path } => {
                let file = std::fs::File::open(path)?;
                let (nx, ny, values) = read_field(std::io::BufReader::new(file))?;
                if (nx, ny) != (mesh.nx(Level::Fine) - 1, mesh.ny(Level::Fine) - 1) {
                    return invalid(format!(
                        "coefficient file is {nx}x{ny}, mesh needs its fine cell counts"
                    ));
                }
                CoefficientField::new(values)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    None,
    KronigPenney {
        gamma: f64,
        wave_number: f64,
    },
    /// `scale·|x − center|²`.
    Harmonic {
        scale: f64,
    },
}

impl PotentialSpec {
    pub fn build(&self, mesh: &TwoScaleMesh) -> Result<Option<PotentialField>> {
        match self {
            PotentialSpec::None => Ok(None),
            PotentialSpec::KronigPenney { gamma, wave_number } => {
                gen_kronig_penney_v(mesh, *gamma, *wave_number).map(Some)
            }
            PotentialSpec::Harmonic { scale } => gen_harmonic_v(mesh, *scale).map(Some),
        }
    }
}

/// Scalar data functions of the boundary value problems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarFn {
    Constant {
        value: f64,
    },
    /// `c₀ + c₁x + c₂y + c₃xy`.
    Bilinear {
        coeffs: [f64; 4],
    },
    /// `amplitude·sin(2π·frequency·(x + y))`.
    Oscillatory {
        amplitude: f64,
        frequency: f64,
    },
}

impl ScalarFn {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            ScalarFn::Constant { value } => *value,
            ScalarFn::Bilinear { coeffs: c } => c[0] + c[1] * x + c[2] * y + c[3] * x * y,
            ScalarFn::Oscillatory {
                amplitude,
                frequency,
            } => amplitude * (2.0 * std::f64::consts::PI * frequency * (x + y)).sin(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ScalarFn::Constant { value } => *value == 0.0,
            ScalarFn::Bilinear { coeffs } => coeffs.iter().all(|&c| c == 0.0),
            ScalarFn::Oscillatory { amplitude, .. } => *amplitude == 0.0,
        }
    }
}

/// Patch size selection for a row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LayerSpec {
    Fixed(usize),
    /// `k = ⌈m·|ln H|⌉`.
    Scaled(f64),
    Full,
}

impl LayerSpec {
    pub fn layers(&self, mesh: &TwoScaleMesh, h_coarse: f64) -> usize {
        match *self {
            LayerSpec::Fixed(k) => k,
            LayerSpec::Scaled(m) => (m * h_coarse.ln().abs()).ceil() as usize,
            LayerSpec::Full => mesh.coarse_cells.0.max(mesh.coarse_cells.1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Problem,
    /// `[x0, y0, x1, y1]`.
    pub domain: [f64; 4],
    /// Coarse mesh widths, one row group each.
    pub coarse_h: Vec<f64>,
    pub fine_h: f64,
    /// Patch layers; ignored when `m` is set or `full_patches` is true.
    pub layers: Vec<usize>,
    pub m: Option<f64>,
    pub full_patches: bool,
    pub bc: BoundarySpec,
    pub coefficient: CoefficientSpec,
    pub potential: PotentialSpec,
    pub f: ScalarFn,
    pub g: ScalarFn,
    pub q: ScalarFn,
    /// `None` disables source correctors.
    pub source_mode: Option<SourceMode>,
    pub rhs: RhsMode,
    pub n_ev: usize,
    pub beta: f64,
    pub delta_tol: f64,
    pub max_iter: usize,
    pub eig_tol: f64,
    /// Share Schur factorizations between identical patches.
    pub reuse_schur: bool,
    /// Emit wall-clock timings; disable for byte-reproducible CSV.
    pub timings: bool,
    pub output: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: Problem::Poisson,
            domain: [0.0, 0.0, 1.0, 1.0],
            coarse_h: vec![0.25, 0.125, 0.0625, 0.03125],
            fine_h: 1.0 / 128.0,
            layers: vec![2],
            m: None,
            full_patches: false,
            bc: BoundarySpec::all_dirichlet(),
            coefficient: CoefficientSpec::Checkerboard {
                seed: 1,
                contrast: 100.0,
            },
            potential: PotentialSpec::None,
            f: ScalarFn::Constant { value: 1.0 },
            g: ScalarFn::Constant { value: 0.0 },
            q: ScalarFn::Constant { value: 0.0 },
            source_mode: Some(SourceMode::Boundary),
            rhs: RhsMode::Corrected,
            n_ev: 1,
            beta: 0.0,
            delta_tol: 1e-9,
            max_iter: 200,
            eig_tol: 1e-10,
            reuse_schur: true,
            timings: true,
            output: None,
            cache_dir: None,
            threads: None,
        }
    }
}

impl ExperimentConfig {
    /// Desk-scale defaults of each study.
    pub fn preset(problem: Problem) -> Self {
        let base = Self {
            problem,
            ..Self::default()
        };
        match problem {
            Problem::Poisson => base,
            Problem::Bvp => Self {
                g: ScalarFn::Oscillatory {
                    amplitude: 1.0,
                    frequency: 4.0,
                },
                ..base
            },
            Problem::Evp => Self {
                coarse_h: vec![0.25, 0.125, 0.0625],
                fine_h: 1.0 / 64.0,
                full_patches: true,
                coefficient: CoefficientSpec::Constant { value: 1.0 },
                n_ev: 4,
                ..base
            },
            Problem::KronigPenney => Self {
                domain: [0.0, 0.0, 2.0, 3.0],
                coarse_h: vec![0.125],
                fine_h: 1.0 / 64.0,
                layers: vec![1],
                coefficient: CoefficientSpec::Constant { value: 1.0 },
                potential: PotentialSpec::KronigPenney {
                    gamma: 2e4,
                    wave_number: 8.0,
                },
                n_ev: 20,
                eig_tol: 1e-9,
                ..base
            },
            Problem::Gpe => Self {
                coarse_h: vec![0.125, 0.0625],
                fine_h: 1.0 / 64.0,
                full_patches: true,
                coefficient: CoefficientSpec::Constant { value: 1.0 },
                potential: PotentialSpec::Harmonic { scale: 100.0 },
                beta: 1.0,
                ..base
            },
        }
    }

    /// Preset for `problem` overlaid with the fields of a JSON document.
    pub fn from_json(problem: Problem, text: &str) -> Result<Self> {
        let overlay: serde_json::Value =
            serde_json::from_str(text).map_err(|e| LodError::Parse(e.to_string()))?;
        let serde_json::Value::Object(fields) = overlay else {
            return Err(LodError::Parse("config must be a JSON object".into()));
        };
        let mut merged = serde_json::to_value(Self::preset(problem)).expect("config serializes");
        let target = merged.as_object_mut().expect("config is an object");
        for (k, v) in fields {
            target.insert(k, v);
        }
        let cfg: Self =
            serde_json::from_value(merged).map_err(|e| LodError::Parse(e.to_string()))?;
        if cfg.problem != problem {
            return invalid(format!(
                "config is for '{}' but '{}' was requested",
                cfg.problem.name(),
                problem.name()
            ));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.domain_rect()?;
        BoundarySpec::new(self.bc.left, self.bc.right, self.bc.bottom, self.bc.top)?;
        if self.coarse_h.is_empty() {
            return invalid("coarse_h must not be empty");
        }
        if !self.full_patches && self.m.is_none() && self.layers.is_empty() {
            return invalid("layers must not be empty");
        }
        if self.m.is_some_and(|m| !(m > 0.0)) {
            return invalid("m must be positive");
        }
        for &h in &self.coarse_h {
            self.mesh(h)?;
        }
        if self.n_ev == 0 {
            return invalid("n_ev must be positive");
        }
        if !(self.beta >= 0.0) || !(self.delta_tol > 0.0) || !(self.eig_tol > 0.0) {
            return invalid("beta must be nonnegative and tolerances positive");
        }
        Ok(())
    }

    pub fn domain_rect(&self) -> Result<DomainRect> {
        let [x0, y0, x1, y1] = self.domain;
        DomainRect::new(x0, y0, x1, y1)
    }

    pub fn mesh(&self, h_coarse: f64) -> Result<TwoScaleMesh> {
        TwoScaleMesh::with_sizes(self.domain_rect()?, h_coarse, self.fine_h)
    }

    /// Mesh whose coarse level is the fine level, for reference solves.
    pub fn fine_mesh(&self) -> Result<TwoScaleMesh> {
        self.mesh(self.fine_h)
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        if self.full_patches {
            vec![LayerSpec::Full]
        } else if let Some(m) = self.m {
            vec![LayerSpec::Scaled(m)]
        } else {
            self.layers.iter().map(|&k| LayerSpec::Fixed(k)).collect()
        }
    }
}
