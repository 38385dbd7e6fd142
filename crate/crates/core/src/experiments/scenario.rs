use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution as _};
use serde::{Deserialize, Serialize};

use crate::conic::SolverOptions;
use crate::data::Plant;
use crate::error::{Error, Result};
use crate::ocp::{chance_sigma, CovarianceMode, OcpConfig, SigmaMode, DEFAULT_BETA};
use crate::pce::{Distribution, DisturbanceModel};
use crate::sets::BoxSet;

/// Plant `x⁺ = A x + B u + w`, by preset name or explicit matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlantSpec {
    /// `x⁺ = 2x + u + w`.
    Scalar,
    /// Linearised four-state batch reactor with two inputs.
    BatchReactor,
    Matrices {
        #[serde(with = "crate::serde_util::matrix")]
        a: DMatrix<f64>,
        #[serde(with = "crate::serde_util::matrix")]
        b: DMatrix<f64>,
    },
}

impl PlantSpec {
    pub fn matrices(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        match self {
            PlantSpec::Scalar => (DMatrix::from_element(1, 1, 2.0), DMatrix::from_element(1, 1, 1.0)),
            PlantSpec::BatchReactor => (
                DMatrix::from_row_slice(
                    4,
                    4,
                    &[
                        1.178, 0.001, 0.511, -0.403, //
                        -0.051, 0.661, -0.011, 0.061, //
                        0.076, 0.335, 0.560, 0.382, //
                        0.0, 0.335, 0.089, 0.849,
                    ],
                ),
                DMatrix::from_row_slice(
                    4,
                    2,
                    &[0.004, -0.087, 0.467, 0.001, 0.213, -0.235, 0.213, -0.016],
                ),
            ),
            PlantSpec::Matrices { a, b } => (a.clone(), b.clone()),
        }
    }
}

/// Distribution of the initial state, sampled independently per coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialState {
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
    /// `lo + (hi − lo)·B(α, β)`.
    Beta { alpha: f64, beta: f64, lo: Vec<f64>, hi: Vec<f64> },
    Point { x: Vec<f64> },
}

impl InitialState {
    pub fn dim(&self) -> usize {
        match self {
            InitialState::Uniform { lo, .. } | InitialState::Beta { lo, .. } => lo.len(),
            InitialState::Point { x } => x.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            InitialState::Uniform { lo, hi } | InitialState::Beta { lo, hi, .. } => {
                if lo.len() != hi.len() || lo.iter().zip(hi).any(|(l, h)| !(l < h)) {
                    return Err(Error::arg("initial-state bounds must satisfy lo < hi"));
                }
                if let InitialState::Beta { alpha, beta, .. } = self {
                    if !(*alpha > 0.0 && *beta > 0.0) {
                        return Err(Error::arg("beta shape parameters must be positive"));
                    }
                }
                Ok(())
            }
            InitialState::Point { x } if x.iter().all(|v| v.is_finite()) => Ok(()),
            InitialState::Point { .. } => Err(Error::arg("initial point must be finite")),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        Ok(match self {
            InitialState::Uniform { lo, hi } => {
                DVector::from_iterator(lo.len(), lo.iter().zip(hi).map(|(&l, &h)| rng.random_range(l..h)))
            }
            InitialState::Beta { alpha, beta, lo, hi } => {
                let d = Beta::new(*alpha, *beta).map_err(|e| Error::arg(format!("beta: {e}")))?;
                DVector::from_iterator(
                    lo.len(),
                    lo.iter().zip(hi).map(|(&l, &h)| l + (h - l) * d.sample(rng)),
                )
            }
            InitialState::Point { x } => DVector::from_column_slice(x),
        })
    }
}

/// How offline inputs are generated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Excitation {
    /// `u ~ U(−a, a)` throughout.
    OpenLoopRandom { amplitude: f64 },
    /// `count_open` open-loop samples, then `u = K̃x + v` with `K̃` synthesised
    /// from the open-loop data and `v ~ U(−a, a)`.
    Prestabilized {
        count_open: usize,
        count_closed: usize,
        amplitude: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    /// Number of input samples `T`.
    pub samples: usize,
    pub excitation: Excitation,
    /// Leading samples used for the Hankel stack and terminal synthesis;
    /// all samples when absent.
    #[serde(default)]
    pub hankel_window: Option<usize>,
    /// Fresh input draws allowed when the data are not persistently exciting.
    #[serde(default = "default_pe_retries")]
    pub pe_retries: usize,
}

fn default_pe_retries() -> usize {
    20
}

/// How disturbances are known offline and online.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// I: disturbances measured.
    Measured,
    /// II: disturbances estimated from state and input data.
    Estimated,
    /// III: estimated disturbances and an identified model.
    IdentifiedModel,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Measured, Variant::Estimated, Variant::IdentifiedModel];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Measured => "I",
            Variant::Estimated => "II",
            Variant::IdentifiedModel => "III",
        }
    }

    pub fn measured(self) -> bool {
        self == Variant::Measured
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "1" | "measured" => Ok(Variant::Measured),
            "ii" | "2" | "estimated" => Ok(Variant::Estimated),
            "iii" | "3" | "identified_model" => Ok(Variant::IdentifiedModel),
            _ => Err(Error::arg(format!("unknown variant {s:?}"))),
        }
    }
}

/// System representation inside the OCP.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepresentationKind {
    /// Hankel equalities with multipliers `g`.
    Hankel,
    /// The data predictor `Φ`, equivalent to the Hankel form.
    #[default]
    Predictor,
    /// One-step model read off the data, `[Â B̂] = (X⁺ − W) [X; U]⁺`.
    Model,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalLevel {
    /// Largest level `2⁻ᵏ` passing the terminal assumption.
    Auto,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub coordinate: usize,
    pub steps: Vec<usize>,
    pub bins: usize,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self {
            coordinate: 0,
            steps: vec![0, 5, 10, 15, 20, 25, 30],
            bins: 50,
        }
    }
}

/// Everything needed to collect data, synthesise ingredients and run a
/// campaign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub plant: PlantSpec,
    pub disturbance: Distribution,
    pub initial_state: InitialState,
    pub horizon: usize,
    #[serde(with = "crate::serde_util::matrix")]
    pub q: DMatrix<f64>,
    #[serde(with = "crate::serde_util::matrix")]
    pub r: DMatrix<f64>,
    pub x_box: BoxSet,
    pub u_box: BoxSet,
    pub epsilon_x: f64,
    pub epsilon_u: f64,
    /// Gaussian quantile for Gaussian disturbances, distribution-free
    /// otherwise, when absent.
    #[serde(default)]
    pub sigma_mode: Option<SigmaMode>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub covariance_mode: CovarianceMode,
    pub terminal_level: TerminalLevel,
    pub data: DataSpec,
    #[serde(default)]
    pub representation: RepresentationKind,
    pub variant: Variant,
    pub steps: usize,
    pub samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub histogram: HistogramSpec,
}

fn default_beta() -> f64 {
    DEFAULT_BETA
}

/// Named scenarios.
pub const PRESETS: [&str; 3] = ["scalar_case1", "scalar_case2", "batch_reactor"];

impl Scenario {
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "scalar_case1" => Ok(Self::scalar(
                name,
                Distribution::Gaussian {
                    covariance: DMatrix::from_element(1, 1, 0.01),
                },
                InitialState::Uniform {
                    lo: vec![0.0],
                    hi: vec![2.0],
                },
            )),
            "scalar_case2" => Ok(Self::scalar(
                name,
                Distribution::Uniform {
                    half_widths: vec![0.173],
                },
                InitialState::Beta {
                    alpha: 0.5,
                    beta: 0.5,
                    lo: vec![0.0],
                    hi: vec![1.0],
                },
            )),
            "batch_reactor" => Ok(Self::batch_reactor()),
            _ => Err(Error::arg(format!(
                "unknown preset {name:?}; expected one of {}",
                PRESETS.join(", ")
            ))),
        }
    }

    fn scalar(name: &str, disturbance: Distribution, initial_state: InitialState) -> Self {
        let one = DMatrix::from_element(1, 1, 1.0);
        Self {
            name: name.into(),
            plant: PlantSpec::Scalar,
            disturbance,
            initial_state,
            horizon: 25,
            q: one.clone(),
            r: one,
            x_box: BoxSet::symmetric(&[2.0]).expect("valid box"),
            u_box: BoxSet::symmetric(&[3.0]).expect("valid box"),
            epsilon_x: 0.1,
            epsilon_u: 0.1,
            sigma_mode: None,
            beta: DEFAULT_BETA,
            covariance_mode: CovarianceMode::Semidefinite,
            terminal_level: TerminalLevel::Auto,
            data: DataSpec {
                samples: 100,
                excitation: Excitation::Prestabilized {
                    count_open: 5,
                    count_closed: 95,
                    amplitude: 1.0,
                },
                hankel_window: None,
                pe_retries: default_pe_retries(),
            },
            representation: RepresentationKind::Model,
            variant: Variant::Measured,
            steps: 60,
            samples: 1000,
            seed: 7,
            histogram: HistogramSpec::default(),
        }
    }

    fn batch_reactor() -> Self {
        Self {
            name: "batch_reactor".into(),
            plant: PlantSpec::BatchReactor,
            disturbance: Distribution::Gaussian {
                covariance: DMatrix::identity(4, 4) * 1e-4,
            },
            initial_state: InitialState::Uniform {
                lo: vec![-5.0; 4],
                hi: vec![5.0; 4],
            },
            horizon: 10,
            q: DMatrix::identity(4, 4),
            r: DMatrix::identity(2, 2),
            x_box: BoxSet::unconstrained(4),
            u_box: BoxSet::new(vec![-2.0, 0.0], vec![2.0, 0.0], vec![true, false]).expect("valid box"),
            epsilon_x: 0.1,
            epsilon_u: 0.1,
            sigma_mode: None,
            beta: DEFAULT_BETA,
            covariance_mode: CovarianceMode::Semidefinite,
            terminal_level: TerminalLevel::Fixed(1e-2),
            data: DataSpec {
                samples: 1000,
                excitation: Excitation::Prestabilized {
                    count_open: 20,
                    count_closed: 980,
                    amplitude: 1.0,
                },
                hankel_window: Some(120),
                pe_retries: default_pe_retries(),
            },
            representation: RepresentationKind::Predictor,
            variant: Variant::Measured,
            steps: 30,
            samples: 10,
            seed: 7,
            histogram: HistogramSpec {
                coordinate: 0,
                steps: vec![0, 5, 10, 15, 20, 25],
                bins: 50,
            },
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.plant.matrices();
        let (nx, nu) = (a.nrows(), b.ncols());
        if a.ncols() != nx || b.nrows() != nx || nx == 0 || nu == 0 {
            return Err(Error::dim("plant matrices must be n×n and n×m"));
        }
        let dist = self.disturbance_model()?;
        if dist.dim() != nx || self.initial_state.dim() != nx {
            return Err(Error::dim("disturbance or initial state dimension differs from plant"));
        }
        self.initial_state.validate()?;
        if let TerminalLevel::Fixed(level) = self.terminal_level {
            if !(level > 0.0 && level.is_finite()) {
                return Err(Error::arg("terminal level must be positive"));
            }
        }
        let data = &self.data;
        if let Excitation::Prestabilized {
            count_open,
            count_closed,
            ..
        } = data.excitation
        {
            if count_open + count_closed != data.samples {
                return Err(Error::arg("prestabilised counts must sum to the sample count"));
            }
            if count_open < nx + nu {
                return Err(Error::arg("too few open-loop samples to synthesise a prestabilising gain"));
            }
        }
        let window = self.window();
        if window == 0 || window > data.samples {
            return Err(Error::arg("hankel window must lie within the collected samples"));
        }
        if window < self.horizon + 1 {
            return Err(Error::arg("hankel window shorter than the horizon"));
        }
        if self.histogram.bins == 0 || self.histogram.coordinate >= nx {
            return Err(Error::arg("histogram needs bins and a valid state coordinate"));
        }
        self.ocp_config()?.validate(nx, nu)
    }

    pub fn window(&self) -> usize {
        self.data.hankel_window.unwrap_or(self.data.samples)
    }

    pub fn plant(&self) -> Result<Plant> {
        let (a, b) = self.plant.matrices();
        Plant::new(a, b, self.disturbance_model()?)
    }

    pub fn disturbance_model(&self) -> Result<DisturbanceModel> {
        DisturbanceModel::try_from(self.disturbance.clone())
    }

    pub fn sigma_mode(&self) -> SigmaMode {
        self.sigma_mode.unwrap_or(match self.disturbance {
            Distribution::Gaussian { .. } => SigmaMode::Gaussian,
            Distribution::Uniform { .. } => SigmaMode::DistributionFree,
        })
    }

    pub fn ocp_config(&self) -> Result<OcpConfig> {
        let mode = self.sigma_mode();
        Ok(OcpConfig {
            horizon: self.horizon,
            q: self.q.clone(),
            r: self.r.clone(),
            x_box: self.x_box.clone(),
            u_box: self.u_box.clone(),
            sigma_x: chance_sigma(mode, self.epsilon_x)?,
            sigma_u: chance_sigma(mode, self.epsilon_u)?,
            beta: self.beta,
            covariance_mode: self.covariance_mode,
            terminal_constraints: true,
            solver: SolverOptions::default(),
        })
    }
}
