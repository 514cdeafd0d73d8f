//! Training-data generation: persistent excitation (noise or step inputs from
//! a zero state) and cross excitation.
//!
//! Cross excitation realizes `x₀ ↦ y ↦ x`: an autonomous run from a perturbed
//! initial state produces an output signal (the observability map), which is
//! then replayed as input from the zero state (the input-to-state map). The
//! second run, with its recorded outputs, is the training trajectory.
//!
//! Random numbers come from ChaCha8 seeded with the excitation's 64-bit seed and are
//! turned into standard normals by the Box–Muller transform, so a fixed seed
//! reproduces bit-identical data on every platform.

use core::f64::consts::PI;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::plant::{simulate_continuous, Plant, SimConfig};
use crate::{Error, Matrix, Result, TrajectoryData, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExcitationKind {
    PeGaussianNoise,
    PeStep,
    CeGaussianInit,
    CeShiftedInit,
    /// Drive the plant with the bell-shaped benchmark input.
    TargetInput,
}

impl ExcitationKind {
    pub fn is_persistent(self) -> bool {
        matches!(self, Self::PeGaussianNoise | Self::PeStep)
    }

    pub fn is_cross(self) -> bool {
        matches!(self, Self::CeGaussianInit | Self::CeShiftedInit)
    }

    pub const ALL: [Self; 5] = [Self::TargetInput, Self::PeGaussianNoise, Self::PeStep, Self::CeGaussianInit, Self::CeShiftedInit];

    /// Short name used in tables and on the command line.
    pub fn tag(self) -> &'static str {
        match self {
            Self::PeGaussianNoise => "pe_noise",
            Self::PeStep => "pe_step",
            Self::CeGaussianInit => "ce_random",
            Self::CeShiftedInit => "ce_shifted",
            Self::TargetInput => "target",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag)
    }
}

impl core::fmt::Display for ExcitationKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcitationSpec {
    pub kind: ExcitationKind,
    pub seed: u64,
    pub amplitude: f64,
}

impl ExcitationSpec {
    pub fn new(kind: ExcitationKind, seed: u64) -> Self {
        Self { kind, seed, amplitude: 1.0 }
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }
}

/// Standard normal stream: ChaCha8 uniforms through Box–Muller.
pub struct GaussianStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = libm::sqrt(-2.0 * libm::log(u1));
        let angle = 2.0 * PI * u2;
        self.spare = Some(radius * libm::sin(angle));
        radius * libm::cos(angle)
    }
}

/// The benchmark input `û(t) = exp(−(t − 1/10)²/1000)`.
pub fn target_input(t: f64) -> f64 {
    libm::exp(-(t - 0.1) * (t - 0.1) / 1000.0)
}

/// `û` sampled on the simulation grid, one row per plant input.
pub fn target_signal(plant: &Plant, cfg: &SimConfig) -> Result<Matrix> {
    let times = cfg.times()?;
    Ok(Matrix::from_fn(plant.input_dim(), times.len(), |_, k| target_input(times[k])))
}

fn validate_amplitude(spec: &ExcitationSpec) -> Result<()> {
    if spec.amplitude.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("excitation amplitude must be finite"))
    }
}

/// Persistent excitation from the zero state: i.i.d. `N(0, amplitude²)` per
/// channel and sample, or a constant step of height `amplitude`.
pub fn excite_pe(plant: &Plant, spec: &ExcitationSpec, cfg: &SimConfig) -> Result<TrajectoryData> {
    validate_amplitude(spec)?;
    let samples = cfg.steps()? + 1;
    let m = plant.input_dim();
    let u = match spec.kind {
        ExcitationKind::PeGaussianNoise => {
            let mut g = GaussianStream::new(spec.seed);
            let mut u = Matrix::zeros(m, samples);
            for k in 0..samples {
                for ch in 0..m {
                    u[(ch, k)] = spec.amplitude * g.next_normal();
                }
            }
            u
        }
        ExcitationKind::PeStep => Matrix::from_element(m, samples, spec.amplitude),
        _ => return Err(Error::invalid("persistent excitation needs a noise or step kind")),
    };
    Ok(simulate_continuous(plant, &u, &Vector::zeros(plant.state_dim()), cfg)?.with_label(spec.kind.tag()))
}

/// Both stages of a cross excitation run.
#[derive(Debug, Clone)]
pub struct CrossExcitation {
    /// Autonomous run from the perturbed initial state.
    pub observed: TrajectoryData,
    /// Zero-state run driven by the observed output; the training data.
    pub training: TrajectoryData,
}

/// Initial state of the first cross-excitation stage.
pub fn cross_initial_state(plant: &Plant, spec: &ExcitationSpec) -> Result<Vector> {
    validate_amplitude(spec)?;
    let n = plant.state_dim();
    match spec.kind {
        ExcitationKind::CeGaussianInit => {
            let mut g = GaussianStream::new(spec.seed);
            Ok(Vector::from_fn(n, |_, _| spec.amplitude * g.next_normal()))
        }
        ExcitationKind::CeShiftedInit => Ok(Vector::from_element(n, spec.amplitude)),
        _ => Err(Error::invalid("cross excitation needs a Gaussian or shifted initial-state kind")),
    }
}

/// Cross excitation with the initial state given explicitly.
pub fn excite_ce_from(plant: &Plant, x0: &Vector, cfg: &SimConfig) -> Result<CrossExcitation> {
    if !plant.is_square() {
        return Err(Error::invalid("cross excitation requires as many inputs as outputs"));
    }
    let samples = cfg.steps()? + 1;
    let observed = simulate_continuous(plant, &Matrix::zeros(plant.input_dim(), samples), x0, cfg)?;
    // The output is replayed sample-by-sample on the same grid (zero-order hold).
    let training = simulate_continuous(plant, observed.outputs(), &Vector::zeros(plant.state_dim()), cfg)?;
    Ok(CrossExcitation { observed, training })
}

pub fn excite_ce_stages(plant: &Plant, spec: &ExcitationSpec, cfg: &SimConfig) -> Result<CrossExcitation> {
    let x0 = cross_initial_state(plant, spec)?;
    let mut ce = excite_ce_from(plant, &x0, cfg)?;
    ce.training = ce.training.with_label(spec.kind.tag());
    Ok(ce)
}

/// Training trajectory of a cross excitation run.
pub fn excite_ce(plant: &Plant, spec: &ExcitationSpec, cfg: &SimConfig) -> Result<TrajectoryData> {
    excite_ce_stages(plant, spec, cfg).map(|ce| ce.training)
}

/// Zero-state response to the benchmark input.
pub fn excite_target(plant: &Plant, cfg: &SimConfig) -> Result<TrajectoryData> {
    let u = target_signal(plant, cfg)?;
    Ok(simulate_continuous(plant, &u, &Vector::zeros(plant.state_dim()), cfg)?.with_label(ExcitationKind::TargetInput.tag()))
}

/// Dispatches on the excitation kind.
pub fn generate(plant: &Plant, spec: &ExcitationSpec, cfg: &SimConfig) -> Result<TrajectoryData> {
    match spec.kind {
        ExcitationKind::TargetInput => excite_target(plant, cfg),
        k if k.is_persistent() => excite_pe(plant, spec, cfg),
        _ => excite_ce(plant, spec, cfg),
    }
}
