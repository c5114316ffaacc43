//! Task domains: benchmark control systems, robot-arm regression and the two
//! synthetic classification domains. Every task carries its descriptor.

pub mod robot;
pub mod synthetic;
pub mod systems;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dictionary::TaskId;
use crate::{Error, Result};
use robot::{robot_fk, DhJoint, RobotArm, JOINTS};
use synthetic::{labelled_samples, PlantedFactors, Synth2Config, SYNTH1_DIM};
use systems::{BenchmarkSystem, Bicycle, CartPole, Dynamics, SpringMass};

/// Anything a Gaussian policy can be rolled out in. Actions are scalar.
pub trait Environment {
    fn state_dim(&self) -> usize;
    fn initial_state(&self, rng: &mut dyn RngCore) -> DVector<f64>;
    /// Next state and reward.
    fn step(&self, state: &DVector<f64>, action: f64) -> Result<(DVector<f64>, f64)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Sm,
    Cp,
    Bk,
    Robot,
    Synth1,
    Synth2,
}

impl Domain {
    pub const ALL: [Domain; 6] = [
        Domain::Sm,
        Domain::Cp,
        Domain::Bk,
        Domain::Robot,
        Domain::Synth1,
        Domain::Synth2,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Domain::Sm => "sm",
            Domain::Cp => "cp",
            Domain::Bk => "bk",
            Domain::Robot => "robot",
            Domain::Synth1 => "synth1",
            Domain::Synth2 => "synth2",
        }
    }

    pub fn is_rl(self) -> bool {
        matches!(self, Domain::Sm | Domain::Cp | Domain::Bk)
    }

    pub fn is_classification(self) -> bool {
        matches!(self, Domain::Synth1 | Domain::Synth2)
    }

    /// Parameter names, in descriptor order for the physical domains.
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Domain::Sm => &["mass", "spring", "damping"],
            Domain::Cp => &["cart_mass", "pole_mass", "pole_length", "damping"],
            Domain::Bk => &["mass", "com_x", "com_z", "wheelbase", "trail", "head_angle"],
            Domain::Robot => &["twist", "length", "offset"],
            Domain::Synth1 => &["m"],
            Domain::Synth2 => &["theta", "s"],
        }
    }

    pub fn descriptor_dim(self, synth2: &Synth2Config) -> usize {
        match self {
            Domain::Sm => 3,
            Domain::Cp => 4,
            Domain::Bk => 6,
            Domain::Robot => 3 * JOINTS,
            Domain::Synth1 => SYNTH1_DIM,
            Domain::Synth2 => synth2.d_m,
        }
    }

    /// Named descriptor groups used by the ablation study, with the
    /// descriptor indices each group covers.
    pub fn descriptor_groups(self) -> Vec<(&'static str, Vec<usize>)> {
        match self {
            Domain::Sm => vec![("M", vec![0]), ("K", vec![1]), ("D", vec![2])],
            Domain::Robot => vec![
                ("T", (0..JOINTS).collect()),
                ("L", (JOINTS..2 * JOINTS).collect()),
                ("O", (2 * JOINTS..3 * JOINTS).collect()),
            ],
            Domain::Cp => Domain::Cp
                .param_names()
                .iter()
                .enumerate()
                .map(|(i, n)| (*n, vec![i]))
                .collect(),
            Domain::Bk => Domain::Bk
                .param_names()
                .iter()
                .enumerate()
                .map(|(i, n)| (*n, vec![i]))
                .collect(),
            Domain::Synth1 | Domain::Synth2 => Vec::new(),
        }
    }

    /// Default uniform sampling ranges.
    pub fn default_ranges(self) -> BTreeMap<String, (f64, f64)> {
        let pairs: &[(&str, (f64, f64))] = match self {
            Domain::Sm => &[("mass", (0.5, 5.0)), ("spring", (0.5, 5.0)), ("damping", (0.5, 5.0))],
            Domain::Cp => &[
                ("cart_mass", (0.5, 2.0)),
                ("pole_mass", (0.1, 0.5)),
                ("pole_length", (0.5, 1.5)),
                ("damping", (0.05, 0.5)),
            ],
            Domain::Bk => &[
                ("mass", (1.0, 3.0)),
                ("com_x", (0.2, 0.6)),
                ("com_z", (0.5, 1.0)),
                ("wheelbase", (0.8, 1.2)),
                ("trail", (0.05, 0.15)),
                ("head_angle", (1.1, 1.4)),
            ],
            Domain::Robot => &[
                ("twist", (-0.5, 0.5)),
                ("length", (0.3, 0.7)),
                ("offset", (0.1, 0.3)),
                ("joint_angle", (-0.5, 0.5)),
            ],
            Domain::Synth1 => &[("m", (-0.5, 0.5)), ("x", (-1.0, 1.0))],
            Domain::Synth2 => &[("x", (-1.0, 1.0))],
        };
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Domain::ALL
            .into_iter()
            .find(|d| d.tag() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown domain '{s}'")))
    }
}

/// Domain-specific parameters of one task.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskParams {
    SpringMass(SpringMass),
    CartPole(CartPole),
    Bicycle(Bicycle),
    Robot(RobotArm),
    Synth1 { m: DVector<f64> },
    Synth2 { theta: DVector<f64>, code: DVector<f64> },
}

impl TaskParams {
    /// Flat name → value view used by the task file.
    pub fn to_named(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        let mut put = |k: String, v: f64| {
            out.insert(k, v);
        };
        match self {
            TaskParams::SpringMass(p) => {
                put("mass".into(), p.mass);
                put("spring".into(), p.spring);
                put("damping".into(), p.damping);
            }
            TaskParams::CartPole(p) => {
                put("cart_mass".into(), p.cart_mass);
                put("pole_mass".into(), p.pole_mass);
                put("pole_length".into(), p.pole_length);
                put("damping".into(), p.damping);
            }
            TaskParams::Bicycle(p) => {
                put("mass".into(), p.mass);
                put("com_x".into(), p.com_x);
                put("com_z".into(), p.com_z);
                put("wheelbase".into(), p.wheelbase);
                put("trail".into(), p.trail);
                put("head_angle".into(), p.head_angle);
            }
            TaskParams::Robot(arm) => {
                for (i, j) in arm.joints.iter().enumerate() {
                    put(format!("twist_{i}"), j.twist);
                    put(format!("length_{i}"), j.length);
                    put(format!("offset_{i}"), j.offset);
                }
            }
            TaskParams::Synth1 { m } => {
                for (i, v) in m.iter().enumerate() {
                    put(format!("m_{i}"), *v);
                }
            }
            TaskParams::Synth2 { theta, code } => {
                for (i, v) in theta.iter().enumerate() {
                    put(format!("theta_{i}"), *v);
                }
                for (i, v) in code.iter().enumerate() {
                    put(format!("s_{i}"), *v);
                }
            }
        }
        out
    }

    pub fn from_named(domain: Domain, named: &BTreeMap<String, f64>) -> Result<Self> {
        let get = |k: &str| {
            named
                .get(k)
                .copied()
                .ok_or_else(|| Error::InvalidInput(format!("missing parameter '{k}'")))
        };
        let indexed = |prefix: &str| -> Vec<f64> {
            (0..)
                .map_while(|i| named.get(&format!("{prefix}_{i}")).copied())
                .collect()
        };
        Ok(match domain {
            Domain::Sm => TaskParams::SpringMass(SpringMass {
                mass: get("mass")?,
                spring: get("spring")?,
                damping: get("damping")?,
            }),
            Domain::Cp => TaskParams::CartPole(CartPole {
                cart_mass: get("cart_mass")?,
                pole_mass: get("pole_mass")?,
                pole_length: get("pole_length")?,
                damping: get("damping")?,
            }),
            Domain::Bk => TaskParams::Bicycle(Bicycle {
                mass: get("mass")?,
                com_x: get("com_x")?,
                com_z: get("com_z")?,
                wheelbase: get("wheelbase")?,
                trail: get("trail")?,
                head_angle: get("head_angle")?,
            }),
            Domain::Robot => {
                let mut joints = [DhJoint { twist: 0.0, length: 0.0, offset: 0.0 }; JOINTS];
                for (i, j) in joints.iter_mut().enumerate() {
                    j.twist = get(&format!("twist_{i}"))?;
                    j.length = get(&format!("length_{i}"))?;
                    j.offset = get(&format!("offset_{i}"))?;
                }
                TaskParams::Robot(RobotArm { joints })
            }
            Domain::Synth1 => {
                let m = indexed("m");
                if m.len() != SYNTH1_DIM {
                    return Err(Error::dims("synth1 parameters", SYNTH1_DIM, m.len()));
                }
                TaskParams::Synth1 { m: DVector::from_vec(m) }
            }
            Domain::Synth2 => TaskParams::Synth2 {
                theta: DVector::from_vec(indexed("theta")),
                code: DVector::from_vec(indexed("s")),
            },
        })
    }

    pub fn dynamics(&self) -> Option<Dynamics> {
        match self {
            TaskParams::SpringMass(p) => Some(Dynamics::SpringMass(*p)),
            TaskParams::CartPole(p) => Some(Dynamics::CartPole(*p)),
            TaskParams::Bicycle(p) => Some(Dynamics::Bicycle(*p)),
            _ => None,
        }
    }
}

/// Labelled data; `y` is `n × outputs` (one column except for the robot,
/// whose three columns are the end-effector coordinates).
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedData {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

impl SupervisedData {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn labels(&self) -> DVector<f64> {
        self.y.column(0).into_owned()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub id: TaskId,
    pub domain: Domain,
    pub descriptor_raw: DVector<f64>,
    pub params: TaskParams,
    pub data: Option<SupervisedData>,
    pub goal: Option<DVector<f64>>,
}

impl TaskSpec {
    /// The simulator for reinforcement-learning tasks.
    pub fn system(&self) -> Option<BenchmarkSystem> {
        let dynamics = self.params.dynamics()?;
        let mut sys = BenchmarkSystem::new(dynamics);
        if let Some(goal) = &self.goal {
            sys.goal = goal.clone();
        }
        Some(sys)
    }

    /// Fresh labelled samples drawn from the task's ground truth.
    pub fn evaluation_set(&self, n: usize, seed: u64, cfg: &GenerationConfig) -> Result<SupervisedData> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ranges = cfg.resolved_ranges(self.domain)?;
        match &self.params {
            TaskParams::Synth1 { m } => {
                let (lo, hi) = ranges["x"];
                let (x, y) = labelled_samples(m, n, lo, hi, &mut rng);
                Ok(SupervisedData { x, y: DMatrix::from_column_slice(n, 1, y.as_slice()) })
            }
            TaskParams::Synth2 { theta, .. } => {
                let (lo, hi) = ranges["x"];
                let (x, y) = labelled_samples(theta, n, lo, hi, &mut rng);
                Ok(SupervisedData { x, y: DMatrix::from_column_slice(n, 1, y.as_slice()) })
            }
            TaskParams::Robot(arm) => robot_samples(arm, n, ranges["joint_angle"], &mut rng),
            _ => Err(Error::InvalidInput(format!(
                "domain {} has no supervised data",
                self.domain
            ))),
        }
    }
}

/// Knobs of task generation beyond the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    /// Overrides of [`Domain::default_ranges`].
    #[serde(default)]
    pub ranges: BTreeMap<String, (f64, f64)>,
    #[serde(default = "default_samples")]
    pub samples_per_task: usize,
    #[serde(default)]
    pub synth2: Synth2Config,
    /// Seed of the planted domain-2 factors, shared by every task file
    /// generated with the same config; `None` means 0.
    #[serde(default)]
    pub planted_seed: Option<u64>,
}

fn default_samples() -> usize {
    10
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            ranges: BTreeMap::new(),
            samples_per_task: default_samples(),
            synth2: Synth2Config::default(),
            planted_seed: None,
        }
    }
}

impl GenerationConfig {
    pub fn resolved_ranges(&self, domain: Domain) -> Result<BTreeMap<String, (f64, f64)>> {
        let mut ranges = domain.default_ranges();
        for (k, v) in &self.ranges {
            if ranges.contains_key(k) {
                ranges.insert(k.clone(), *v);
            }
        }
        for (name, (lo, hi)) in &ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::BadRange { name: name.clone(), low: *lo, high: *hi });
            }
        }
        Ok(ranges)
    }

    /// Per-dimension descriptor bounds implied by the generation ranges, for
    /// min–max descriptor scaling. `None` where the domain has no fixed range.
    pub fn descriptor_bounds(&self, domain: Domain) -> Result<Option<Vec<(f64, f64)>>> {
        let ranges = self.resolved_ranges(domain)?;
        Ok(match domain {
            Domain::Sm | Domain::Cp | Domain::Bk => Some(
                domain.param_names().iter().map(|n| ranges[*n]).collect(),
            ),
            Domain::Robot => Some(
                ["twist", "length", "offset"]
                    .iter()
                    .flat_map(|n| std::iter::repeat_n(ranges[*n], JOINTS))
                    .collect(),
            ),
            Domain::Synth1 => Some(vec![ranges["m"]; SYNTH1_DIM]),
            Domain::Synth2 => None,
        })
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi { lo } else { rng.random_range(lo..hi) }
}

fn robot_samples<R: Rng + ?Sized>(
    arm: &RobotArm,
    n: usize,
    angle_range: (f64, f64),
    rng: &mut R,
) -> Result<SupervisedData> {
    let x = DMatrix::from_fn(n, JOINTS, |_, _| uniform(rng, angle_range));
    let mut y = DMatrix::zeros(n, 3);
    for i in 0..n {
        let q: Vec<f64> = x.row(i).iter().copied().collect();
        let p = robot_fk(arm, &q)?;
        y.row_mut(i).copy_from(&p.transpose());
    }
    Ok(SupervisedData { x, y })
}

/// A robot regression task: `n_points` random joint configurations (raw
/// angles, `n × 8`) and their end-effector positions (`n × 3`).
pub fn make_robot_task<R: Rng + ?Sized>(
    id: TaskId,
    arm: RobotArm,
    n_points: usize,
    angle_range: (f64, f64),
    rng: &mut R,
) -> Result<TaskSpec> {
    if n_points == 0 {
        return Err(Error::InvalidInput("robot task needs at least one point".into()));
    }
    let data = robot_samples(&arm, n_points, angle_range, rng)?;
    Ok(TaskSpec {
        id,
        domain: Domain::Robot,
        descriptor_raw: DVector::from_vec(arm.descriptor()),
        params: TaskParams::Robot(arm),
        data: Some(data),
        goal: None,
    })
}

/// Samples `count` tasks of a domain, i.i.d. uniform over the configured
/// parameter ranges. Same `(domain, count, seed, cfg)` ⇒ same list.
pub fn generate_domain(
    domain: Domain,
    count: usize,
    seed: u64,
    cfg: &GenerationConfig,
) -> Result<Vec<TaskSpec>> {
    if count == 0 {
        return Err(Error::InvalidInput("count must be >= 1".into()));
    }
    let ranges = cfg.resolved_ranges(domain)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planted = match domain {
        Domain::Synth2 => Some(PlantedFactors::generate(&cfg.synth2, cfg.planted_seed.unwrap_or(0))?),
        _ => None,
    };
    let n = cfg.samples_per_task;
    let mut tasks = Vec::with_capacity(count);
    for id in 0..count as TaskId {
        let task = match domain {
            Domain::Sm | Domain::Cp | Domain::Bk => {
                let values: Vec<f64> = domain
                    .param_names()
                    .iter()
                    .map(|name| uniform(&mut rng, ranges[*name]))
                    .collect();
                let params = match domain {
                    Domain::Sm => TaskParams::SpringMass(SpringMass {
                        mass: values[0],
                        spring: values[1],
                        damping: values[2],
                    }),
                    Domain::Cp => TaskParams::CartPole(CartPole {
                        cart_mass: values[0],
                        pole_mass: values[1],
                        pole_length: values[2],
                        damping: values[3],
                    }),
                    _ => TaskParams::Bicycle(Bicycle {
                        mass: values[0],
                        com_x: values[1],
                        com_z: values[2],
                        wheelbase: values[3],
                        trail: values[4],
                        head_angle: values[5],
                    }),
                };
                let state_dim = params.dynamics().map_or(0, |d| d.state_dim());
                TaskSpec {
                    id,
                    domain,
                    descriptor_raw: DVector::from_vec(values),
                    params,
                    data: None,
                    goal: Some(DVector::zeros(state_dim)),
                }
            }
            Domain::Robot => {
                let joints = std::array::from_fn(|_| DhJoint {
                    twist: uniform(&mut rng, ranges["twist"]),
                    length: uniform(&mut rng, ranges["length"]),
                    offset: uniform(&mut rng, ranges["offset"]),
                });
                make_robot_task(id, RobotArm { joints }, n, ranges["joint_angle"], &mut rng)?
            }
            Domain::Synth1 => {
                let m = DVector::from_fn(SYNTH1_DIM, |_, _| uniform(&mut rng, ranges["m"]));
                let (lo, hi) = ranges["x"];
                let (x, y) = labelled_samples(&m, n, lo, hi, &mut rng);
                TaskSpec {
                    id,
                    domain,
                    descriptor_raw: m.clone(),
                    params: TaskParams::Synth1 { m },
                    data: Some(SupervisedData { x, y: DMatrix::from_column_slice(n, 1, y.as_slice()) }),
                    goal: None,
                }
            }
            Domain::Synth2 => {
                let planted = planted.as_ref().expect("planted factors for synth2");
                let code = planted.sparse_code(cfg.synth2.nnz, &mut rng);
                let theta = &planted.l * &code;
                let descriptor = &planted.d * &code;
                let (lo, hi) = ranges["x"];
                let (x, y) = labelled_samples(&theta, n, lo, hi, &mut rng);
                TaskSpec {
                    id,
                    domain,
                    descriptor_raw: descriptor,
                    params: TaskParams::Synth2 { theta, code },
                    data: Some(SupervisedData { x, y: DMatrix::from_column_slice(n, 1, y.as_slice()) }),
                    goal: None,
                }
            }
        };
        tasks.push(task);
    }
    Ok(tasks)
}
