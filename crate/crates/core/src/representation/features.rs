use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::random_time::EnlargedScenario;
use crate::scalar::Real;
use crate::stoch_calc::Grid;

/// State monomial `L_t^level · A_t^azema`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub level: u32,
    #[serde(default)]
    pub azema: i32,
}

impl Monomial {
    pub const fn new(level: u32, azema: i32) -> Self {
        Monomial { level, azema }
    }
}

/// Default-state gate multiplying a monomial, evaluated at the left end of each cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Gate<T> {
    Always,
    /// `1 − H_{t−}`.
    Alive,
    /// `1 − H_{(t∧s)−}`.
    AliveUntil {
        s: T,
    },
    /// `1{t < s}·(1 − H_{t−})`.
    AliveBefore {
        s: T,
    },
}

impl<T: Real> Gate<T> {
    pub fn uses_default_state(&self) -> bool {
        !matches!(self, Gate::Always)
    }

    fn eval(&self, t: T, scenario: &EnlargedScenario<T>) -> f64 {
        let alive_at = |u: T| !(scenario.defaulted && scenario.tau <= u);
        let on = match *self {
            Gate::Always => true,
            Gate::Alive => alive_at(t),
            Gate::AliveUntil { s } => alive_at(t.min(s)),
            Gate::AliveBefore { s } => t < s && alive_at(t),
        };
        if on {
            1.0
        } else {
            0.0
        }
    }
}

/// Predictable feature dictionary: every (monomial, gate) product times a
/// piecewise-linear hat function of time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec<T> {
    pub monomials: Vec<Monomial>,
    pub gates: Vec<Gate<T>>,
    /// Number of hat functions on `[0, T]` (1 = constant in time).
    pub time_nodes: usize,
    /// Relative ridge added to the standardized normal equations.
    #[serde(default = "default_ridge")]
    pub ridge: f64,
}

fn default_ridge() -> f64 {
    1e-8
}

impl<T: Real> FeatureSpec<T> {
    /// `{1, L, L², A}` with gates `{1, 1 − H_−}`.
    pub fn default_enlarged() -> Self {
        FeatureSpec {
            monomials: vec![
                Monomial::new(0, 0),
                Monomial::new(1, 0),
                Monomial::new(2, 0),
                Monomial::new(0, 1),
            ],
            gates: vec![Gate::Always, Gate::Alive],
            time_nodes: 5,
            ridge: default_ridge(),
        }
    }

    /// Reference-filtration features: the same monomials, no default gates.
    pub fn default_reference() -> Self {
        FeatureSpec {
            gates: vec![Gate::Always],
            ..Self::default_enlarged()
        }
    }

    /// Superset adding monomials and gates not already present.
    pub fn refined(&self, monomials: &[Monomial], gates: &[Gate<T>]) -> Self {
        let mut out = self.clone();
        for m in monomials {
            if !out.monomials.contains(m) {
                out.monomials.push(*m);
            }
        }
        for g in gates {
            if !out.gates.contains(g) {
                out.gates.push(*g);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.monomials.is_empty() || self.gates.is_empty() {
            return Err(Error::Configuration(
                "feature spec needs at least one monomial and one gate".into(),
            ));
        }
        if self.time_nodes == 0 {
            return Err(Error::Configuration("features.time_nodes must be >= 1".into()));
        }
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(Error::Configuration("features.ridge must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn uses_default_state(&self) -> bool {
        self.gates.iter().any(Gate::uses_default_state)
    }

    /// Number of (monomial, gate) products.
    pub fn state_len(&self) -> usize {
        self.monomials.len() * self.gates.len()
    }

    /// Number of basis functions per integrator.
    pub fn len(&self) -> usize {
        self.state_len() * self.time_nodes
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Products `monomial × gate` at grid index `k`, monomial index fastest.
    pub fn state_values(&self, scenario: &EnlargedScenario<T>, k: usize, out: &mut [f64]) {
        let t = scenario.path.grid.time(k);
        let level = scenario.path.l_values[k].to_f64_lossy();
        let a = scenario.a_values[k].to_f64_lossy();
        let n_m = self.monomials.len();
        for (g, gate) in self.gates.iter().enumerate() {
            let gv = gate.eval(t, scenario);
            for (m, mono) in self.monomials.iter().enumerate() {
                out[g * n_m + m] = if gv == 0.0 {
                    0.0
                } else {
                    gv * level.powi(mono.level as i32) * a.powi(mono.azema)
                };
            }
        }
    }

    /// The two hat functions active at `t_k` and their weights.
    pub fn hat_weights(&self, grid: &Grid<T>, k: usize) -> [(usize, f64); 2] {
        if self.time_nodes == 1 {
            return [(0, 1.0), (0, 0.0)];
        }
        let x = k as f64 / grid.n_steps as f64 * (self.time_nodes - 1) as f64;
        let i = (x.floor() as usize).min(self.time_nodes - 2);
        let w = x - i as f64;
        [(i, 1.0 - w), (i + 1, w)]
    }
}
