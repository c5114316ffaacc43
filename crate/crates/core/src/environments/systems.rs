//! Benchmark dynamical systems, integrated with semi-implicit Euler
//! (velocity first, then position with the new velocity).

use nalgebra::DVector;
use rand::{Rng, RngCore};

use super::Environment;
use crate::{Error, Result};

pub const GRAVITY: f64 = 9.81;
pub const DEFAULT_DT: f64 = 0.01;

/// Spring–mass–damper: `m ẍ = u − k x − c ẋ`. State `(x, ẋ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpringMass {
    pub mass: f64,
    pub spring: f64,
    pub damping: f64,
}

impl SpringMass {
    pub fn accel(&self, x: f64, v: f64, u: f64) -> f64 {
        (u - self.spring * x - self.damping * v) / self.mass
    }

    pub fn energy(&self, state: &DVector<f64>) -> f64 {
        0.5 * self.mass * state[1] * state[1] + 0.5 * self.spring * state[0] * state[0]
    }
}

/// Cart-pole with viscous cart damping. State `(x, ẋ, θ, θ̇)` with `θ = 0`
/// upright. `pole_length` is the full pole length; the equations use the
/// half-length `l = pole_length / 2`:
///
/// ```text
/// tmp = (u + m_p l θ̇² sinθ − b ẋ) / (m_c + m_p)
/// θ̈  = (g sinθ − cosθ · tmp) / (l (4/3 − m_p cos²θ / (m_c + m_p)))
/// ẍ  = tmp − m_p l θ̈ cosθ / (m_c + m_p)
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartPole {
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub pole_length: f64,
    pub damping: f64,
}

impl CartPole {
    pub fn accels(&self, state: &DVector<f64>, u: f64) -> (f64, f64) {
        let (xdot, th, thdot) = (state[1], state[2], state[3]);
        let total = self.cart_mass + self.pole_mass;
        let l = 0.5 * self.pole_length;
        let (sin, cos) = th.sin_cos();
        let tmp = (u + self.pole_mass * l * thdot * thdot * sin - self.damping * xdot) / total;
        let thacc = (GRAVITY * sin - cos * tmp)
            / (l * (4.0 / 3.0 - self.pole_mass * cos * cos / total));
        let xacc = tmp - self.pole_mass * l * thacc * cos / total;
        (xacc, thacc)
    }
}

/// Linearized bicycle roll at constant forward speed. State `(φ, φ̇)`, the
/// tilt and its rate; the action is the handlebar torque `u`:
///
/// ```text
/// φ̈ = (g m z φ + κ u) / (m z²),   κ = (com_x + trail · cos(head_angle)) / wheelbase
/// ```
///
/// where `z = com_z`. Gravity destabilizes the upright state at rate
/// `sqrt(g / z)`; steering couples into roll through `κ`, which grows with the
/// forward offset of the center of mass and the trail and shrinks with the
/// wheelbase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bicycle {
    pub mass: f64,
    pub com_x: f64,
    pub com_z: f64,
    pub wheelbase: f64,
    pub trail: f64,
    pub head_angle: f64,
}

impl Bicycle {
    pub fn steering_coupling(&self) -> f64 {
        (self.com_x + self.trail * self.head_angle.cos()) / self.wheelbase
    }

    pub fn roll_accel(&self, tilt: f64, u: f64) -> f64 {
        let z = self.com_z;
        (GRAVITY * self.mass * z * tilt + self.steering_coupling() * u) / (self.mass * z * z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dynamics {
    SpringMass(SpringMass),
    CartPole(CartPole),
    Bicycle(Bicycle),
}

impl Dynamics {
    pub fn state_dim(&self) -> usize {
        match self {
            Dynamics::SpringMass(_) => 2,
            Dynamics::CartPole(_) => 4,
            Dynamics::Bicycle(_) => 2,
        }
    }

    /// One semi-implicit Euler step, without reward.
    pub fn integrate(&self, state: &DVector<f64>, u: f64, dt: f64) -> DVector<f64> {
        match self {
            Dynamics::SpringMass(p) => {
                let v = state[1] + dt * p.accel(state[0], state[1], u);
                DVector::from_vec(vec![state[0] + dt * v, v])
            }
            Dynamics::CartPole(p) => {
                let (xacc, thacc) = p.accels(state, u);
                let xdot = state[1] + dt * xacc;
                let thdot = state[3] + dt * thacc;
                DVector::from_vec(vec![state[0] + dt * xdot, xdot, state[2] + dt * thdot, thdot])
            }
            Dynamics::Bicycle(p) => {
                let rate = state[1] + dt * p.roll_accel(state[0], u);
                DVector::from_vec(vec![state[0] + dt * rate, rate])
            }
        }
    }

    /// Half-widths of the uniform initial-state box, per state component.
    fn initial_spread(&self) -> &'static [f64] {
        match self {
            Dynamics::SpringMass(_) => &[1.0, 0.5],
            Dynamics::CartPole(_) => &[0.2, 0.1, 0.1, 0.1],
            Dynamics::Bicycle(_) => &[0.1, 0.1],
        }
    }
}

/// A dynamical system with its integration step and goal state.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSystem {
    pub dynamics: Dynamics,
    pub dt: f64,
    pub goal: DVector<f64>,
}

impl BenchmarkSystem {
    pub fn new(dynamics: Dynamics) -> Self {
        let n = dynamics.state_dim();
        BenchmarkSystem {
            dynamics,
            dt: DEFAULT_DT,
            goal: DVector::zeros(n),
        }
    }

    /// Advances one step; reward is `−‖next − goal‖`.
    pub fn step(&self, state: &DVector<f64>, action: f64) -> Result<(DVector<f64>, f64)> {
        let n = self.dynamics.state_dim();
        if state.len() != n {
            return Err(Error::dims("system state", n, state.len()));
        }
        let next = self.dynamics.integrate(state, action, self.dt);
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let reward = -(&next - &self.goal).norm();
        Ok((next, reward))
    }
}

impl Environment for BenchmarkSystem {
    fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    fn initial_state(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        let spread = self.dynamics.initial_spread();
        DVector::from_iterator(
            spread.len(),
            spread.iter().map(|w| rng.random_range(-*w..=*w)),
        )
    }

    fn step(&self, state: &DVector<f64>, action: f64) -> Result<(DVector<f64>, f64)> {
        BenchmarkSystem::step(self, state, action)
    }
}
