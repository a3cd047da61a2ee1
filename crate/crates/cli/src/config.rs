//! Experiment configuration: a versioned TOML file with nested sections.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use telegraph_core::estimates::{parse_rational, KernelTraits, Rational};
use telegraph_core::field::{Fft3, PicardStart, SpectralField, TorusGrid};
use telegraph_core::kernel::{CreepKernel, Kernel, SampledKernel};
use telegraph_core::randomizer::RandomLaw;
use telegraph_core::{GridMode, TimeGrid};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// A number given either as a TOML number or as an exact string like `"4/3"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Exact {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Exact {
    pub fn rational(&self, name: &str) -> Result<Rational, CliError> {
        let text = match self {
            Exact::Int(i) => i.to_string(),
            Exact::Float(f) => format!("{f}"),
            Exact::Text(s) => s.clone(),
        };
        parse_rational(&text).map_err(|e| CliError::Config(format!("{name}: {e}")))
    }

    pub fn value(&self, name: &str) -> Result<f64, CliError> {
        match self {
            Exact::Float(f) => Ok(*f),
            _ => Ok(telegraph_core::estimates::approx(self.rational(name)?)),
        }
    }
}

fn ex(s: &str) -> Exact {
    Exact::Text(s.to_string())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    /// `heaviside`, `fractional_rl` or `custom`.
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Exact>,
    /// Custom pairs: `a0` and two-column sample files for `a1` and `b`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a1_samples: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_samples: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub beta: Exact,
    pub gamma: f64,
    pub kappa: Exact,
    pub p: Exact,
    pub s: Exact,
    pub q0: Exact,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub t_final: f64,
    pub cells: usize,
    #[serde(default = "uniform")]
    pub mode: String,
    #[serde(default = "two")]
    pub grading: f64,
}

fn uniform() -> String {
    "uniform".into()
}

fn two() -> f64 {
    2.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusSection {
    pub n: usize,
    #[serde(default = "tau")]
    pub box_length: f64,
    #[serde(default = "yes")]
    pub dealias: bool,
}

fn tau() -> f64 {
    std::f64::consts::TAU
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// `zero`, `cosine`, `gaussian` or `multiscale`.
    pub kind: String,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "one")]
    pub width: f64,
    #[serde(default = "unit_mode")]
    pub mode: [i64; 3],
    #[serde(default)]
    pub zero_mean: bool,
}

fn one() -> f64 {
    1.0
}

fn unit_mode() -> [i64; 3] {
    [1, 0, 0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_iter")]
    pub max_iter: usize,
    #[serde(default = "zero_start")]
    pub start: String,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_iter() -> usize {
    60
}

fn zero_start() -> String {
    "zero".into()
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            tol: default_tol(),
            max_iter: default_iter(),
            start: zero_start(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSection {
    #[serde(default = "rademacher")]
    pub law: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Time nodes used by the mixed-norm functional.
    #[serde(default = "default_nodes")]
    pub time_nodes: usize,
    #[serde(default)]
    pub thresholds: Option<Vec<f64>>,
}

fn rademacher() -> String {
    "rademacher".into()
}

fn default_samples() -> usize {
    2000
}

fn default_nodes() -> usize {
    16
}

impl Default for RandomSection {
    fn default() -> Self {
        RandomSection {
            law: rademacher(),
            seed: 0,
            samples: default_samples(),
            time_nodes: default_nodes(),
            thresholds: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    /// Defaults to `[T/10, T]`.
    #[serde(default)]
    pub window: Option<[f64; 2]>,
    #[serde(default = "default_probe_samples")]
    pub samples: usize,
    #[serde(default = "cos_hs")]
    pub kind: String,
}

fn default_probe_samples() -> usize {
    30
}

fn cos_hs() -> String {
    "cos-hs".into()
}

impl Default for ProbeSection {
    fn default() -> Self {
        ProbeSection {
            window: None,
            samples: default_probe_samples(),
            kind: cos_hs(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: default_dir() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub kernel: KernelSection,
    pub model: ModelSection,
    pub time: TimeSection,
    pub torus: TorusSection,
    pub data: DataSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub randomization: RandomSection,
    #[serde(default)]
    pub probe: ProbeSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Everything a subcommand needs, built and validated up front.
pub struct Setup {
    pub kernel: CreepKernel,
    pub traits: Option<KernelTraits>,
    pub beta: Rational,
    pub kappa: Rational,
    pub p: Rational,
    pub s: Rational,
    pub q0: Rational,
    pub time: TimeGrid,
    pub torus: TorusGrid,
    pub law: RandomLaw,
    pub start: PicardStart,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema
            )));
        }
        Ok(cfg)
    }

    /// Canonical TOML text of the effective configuration.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    /// SHA-256 of [`Self::canonical`] with the output section reset, hex
    /// encoded; where results are written does not change them.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputSection::default();
        let digest = Sha256::digest(c.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Validates every referenced parameter domain before any computation.
    pub fn setup(&self) -> Result<Setup, CliError> {
        let (kernel, traits) = self.build_kernel()?;
        let m = &self.model;
        let beta = m.beta.rational("model.beta")?;
        let kappa = m.kappa.rational("model.kappa")?;
        let p = m.p.rational("model.p")?;
        let s = m.s.rational("model.s")?;
        let q0 = m.q0.rational("model.q0")?;
        // domain checks for β, p, κ, q0 live in the exponent calculator
        telegraph_core::estimates::exponents(beta, p, s, kappa, q0)?;
        if !(m.gamma.is_finite() && m.gamma >= 0.0) {
            return Err(CliError::Config(format!("model.gamma must be nonnegative, got {}", m.gamma)));
        }
        let mode = match self.time.mode.as_str() {
            "uniform" => GridMode::Uniform,
            "graded" => GridMode::Graded {
                exponent: self.time.grading,
            },
            other => return Err(CliError::Config(format!("time.mode {other:?} is not uniform or graded"))),
        };
        let time = TimeGrid::new(self.time.t_final, self.time.cells, mode)?;
        let torus = TorusGrid::new(self.torus.n, self.torus.box_length)?.with_dealias(self.torus.dealias);
        let law = match self.randomization.law.as_str() {
            "rademacher" => RandomLaw::Rademacher,
            "gaussian" | "standard_gaussian" => RandomLaw::StandardGaussian,
            other => return Err(CliError::Config(format!("randomization.law {other:?} is unknown"))),
        };
        let start = match self.solver.start.as_str() {
            "zero" => PicardStart::Zero,
            "linear" => PicardStart::Linear,
            other => return Err(CliError::Config(format!("solver.start {other:?} is not zero or linear"))),
        };
        if !["zero", "cosine", "gaussian", "multiscale"].contains(&self.data.kind.as_str()) {
            return Err(CliError::Config(format!("data.kind {:?} is unknown", self.data.kind)));
        }
        if !(self.data.width > 0.0 && self.data.amplitude.is_finite()) {
            return Err(CliError::Config("data.width must be positive and data.amplitude finite".into()));
        }
        if let Some([a, b]) = self.probe.window {
            if !(a > 0.0 && b > a) {
                return Err(CliError::Config(format!("probe.window [{a}, {b}] is not an interval in (0, ∞)")));
            }
        }
        if self.randomization.time_nodes < 2 {
            return Err(CliError::Config("randomization.time_nodes must be at least 2".into()));
        }
        Ok(Setup {
            kernel,
            traits,
            beta,
            kappa,
            p,
            s,
            q0,
            time,
            torus,
            law,
            start,
        })
    }

    fn build_kernel(&self) -> Result<(CreepKernel, Option<KernelTraits>), CliError> {
        let k = &self.kernel;
        match k.family.as_str() {
            "heaviside" => Ok((CreepKernel::heaviside(), Some(KernelTraits::heaviside()))),
            "fractional_rl" => {
                let alpha = k
                    .alpha
                    .as_ref()
                    .ok_or_else(|| CliError::Config("kernel.alpha is required for fractional_rl".into()))?;
                let exact = alpha.rational("kernel.alpha")?;
                let kernel = CreepKernel::fractional(alpha.value("kernel.alpha")?)?;
                Ok((kernel, Some(KernelTraits::fractional(exact)?)))
            }
            "custom" => {
                let a0 = k.a0.unwrap_or(0.0);
                let load = |p: &Option<PathBuf>, name: &str| -> Result<Kernel, CliError> {
                    let path = p
                        .as_ref()
                        .ok_or_else(|| CliError::Config(format!("kernel.{name} is required for custom kernels")))?;
                    Ok(Kernel::Sampled(SampledKernel::from_rows(&read_rows(path)?)?))
                };
                let kernel = CreepKernel::custom(a0, load(&k.a1_samples, "a1_samples")?, load(&k.b_samples, "b_samples")?)?;
                Ok((kernel, None))
            }
            other => Err(CliError::Config(format!("kernel.family {other:?} is unknown"))),
        }
    }

    /// Initial datum on the torus, dealiased when the grid asks for it.
    pub fn datum(&self, grid: &TorusGrid, fft: &Fft3) -> SpectralField {
        let d = &self.data;
        let c = grid.box_length / 2.0;
        let bump = |w: f64| {
            move |x: f64, y: f64, z: f64| {
                let r2 = (x - c).powi(2) + (y - c).powi(2) + (z - c).powi(2);
                (-r2 / (2.0 * w * w)).exp()
            }
        };
        let mut u = match d.kind.as_str() {
            "cosine" => SpectralField::cosine_mode(grid, d.mode, d.amplitude),
            "gaussian" => SpectralField::from_fn(grid, fft, bump(d.width)).scaled(d.amplitude),
            "multiscale" => {
                let f = |x, y, z| [0.25, 0.5, 1.0].iter().map(|s| bump(s * d.width)(x, y, z)).sum::<f64>();
                SpectralField::from_fn(grid, fft, f).scaled(d.amplitude)
            }
            _ => SpectralField::zeros(grid),
        };
        if d.zero_mean {
            u.coeffs[0] = 0.0.into();
        }
        u.dealiased(grid)
    }
}

fn read_rows(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let mut it = l.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty());
            let parse = |s: Option<&str>| s.and_then(|v| v.parse::<f64>().ok());
            match (parse(it.next()), parse(it.next())) {
                (Some(a), Some(b)) => Ok((a, b)),
                _ => Err(CliError::Config(format!("{}: bad row {l:?}", path.display()))),
            }
        })
        .collect()
}

/// Preset for the damped cubic wave equation with Heaviside memory.
pub fn damped_cubic_wave() -> ExperimentConfig {
    ExperimentConfig {
        schema: SCHEMA_VERSION,
        kernel: KernelSection {
            family: "heaviside".into(),
            alpha: None,
            a0: None,
            a1_samples: None,
            b_samples: None,
        },
        model: ModelSection {
            beta: ex("2"),
            gamma: 1.0,
            kappa: ex("3"),
            p: ex("4/3"),
            s: ex("11/8"),
            q0: ex("5/3"),
        },
        time: TimeSection {
            t_final: 1.0,
            cells: 64,
            mode: uniform(),
            grading: 2.0,
        },
        torus: TorusSection {
            n: 16,
            box_length: tau(),
            dealias: true,
        },
        data: DataSection {
            kind: "gaussian".into(),
            amplitude: 0.5,
            width: 0.6,
            mode: unit_mode(),
            zero_mean: false,
        },
        solver: SolverSection::default(),
        randomization: RandomSection {
            law: rademacher(),
            seed: 2024,
            samples: 500,
            time_nodes: 9,
            thresholds: None,
        },
        probe: ProbeSection::default(),
        output: OutputSection::default(),
    }
}

/// Preset for the space-time fractional telegraph equation, `b = g_{11/12}`.
pub fn space_time_fractional() -> ExperimentConfig {
    let mut cfg = damped_cubic_wave();
    cfg.kernel.family = "fractional_rl".into();
    cfg.kernel.alpha = Some(ex("11/12"));
    cfg.model = ModelSection {
        beta: ex("4/3"),
        gamma: 1.0,
        kappa: ex("2"),
        p: ex("3/2"),
        s: ex("5/6"),
        q0: ex("5/3"),
    };
    cfg
}
