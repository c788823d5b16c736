//! Cox random times joined to simulated paths.

use std::borrow::Cow;

use rand_distr::{Distribution, Exp1};

use super::hazard::{HazardSpec, PreparedHazard};
use crate::error::{Error, Result};
use crate::levy_sim::{PathBundle, PathSource};
use crate::rng::{self, TAG_THETA};
use crate::scalar::Real;
use crate::stoch_calc::{ContinuousPart, GridProcess, JumpMark};

/// How the hypotheses on τ are met, recorded with every scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub theta_seed: u64,
    /// Θ comes from a stream disjoint from every path stream, so it is
    /// independent of the reference filtration (immersion).
    pub immersion: bool,
    /// Γ is continuous, so τ avoids the reference stopping times.
    pub avoidance: bool,
}

/// A path with its default time and the derived processes on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct EnlargedScenario<T> {
    pub path: PathBundle<T>,
    pub theta: T,
    /// Default time; `T + 1` when no default occurs in `[0, T]`.
    pub tau: T,
    pub defaulted: bool,
    /// Γ at grid points.
    pub gamma_values: Vec<T>,
    /// Γ at `τ ∧ T`.
    pub gamma_at_tau: T,
    pub h_values: Vec<T>,
    pub a_values: Vec<T>,
    /// Λ^G = Γ_{t∧τ}.
    pub lambda_values: Vec<T>,
    /// Absolutely continuous part of Λ^G.
    pub lambda_ac_values: Vec<T>,
    pub m_values: Vec<T>,
    pub y_values: Vec<T>,
    pub provenance: Provenance,
}

impl<T: Real> EnlargedScenario<T> {
    pub fn default_time(&self) -> Option<T> {
        self.defaulted.then_some(self.tau)
    }

    fn tau_jump(&self, size: T) -> Vec<JumpMark<T>> {
        self.default_time()
            .map(|t| vec![JumpMark { time: t, size }])
            .unwrap_or_default()
    }

    pub fn m_process(&self) -> GridProcess<T> {
        GridProcess {
            grid: self.path.grid,
            values: self.m_values.clone(),
            jumps: self.tau_jump(T::one()),
            continuous: ContinuousPart::FiniteVariation,
        }
    }

    pub fn h_process(&self) -> GridProcess<T> {
        GridProcess {
            grid: self.path.grid,
            values: self.h_values.clone(),
            jumps: self.tau_jump(T::one()),
            continuous: ContinuousPart::FiniteVariation,
        }
    }

    pub fn lambda_process(&self) -> GridProcess<T> {
        GridProcess {
            grid: self.path.grid,
            values: self.lambda_values.clone(),
            jumps: Vec::new(),
            continuous: ContinuousPart::FiniteVariation,
        }
    }

    /// `Y = A^{-1}1_{[0,τ)}` with its jump to zero at τ.
    pub fn y_process(&self) -> GridProcess<T> {
        let jump = self.gamma_at_tau.exp();
        GridProcess {
            grid: self.path.grid,
            values: self.y_values.clone(),
            jumps: self.tau_jump(-jump),
            continuous: ContinuousPart::FiniteVariation,
        }
    }
}

/// Time tolerance of the first-passage bisection.
pub fn passage_tolerance<T: Real>(horizon: T) -> T {
    T::lit(1e-12).max(T::epsilon() * T::lit(4.0) * horizon)
}

/// Draws Θ ~ Exp(1) from `theta_seed` and builds the scenario on a prepared hazard.
pub fn enlarge<T: Real>(
    hazard: &PreparedHazard<T>,
    path: PathBundle<T>,
    theta_seed: u64,
) -> Result<EnlargedScenario<T>> {
    let mut rng = rng::generator(theta_seed);
    let theta: f64 = Exp1.sample(&mut rng);
    let theta = T::lit(theta.max(f64::MIN_POSITIVE));
    enlarge_with_threshold(hazard, path, theta, theta_seed)
}

/// Builds the scenario for a given threshold Θ.
pub fn enlarge_with_threshold<T: Real>(
    hazard: &PreparedHazard<T>,
    path: PathBundle<T>,
    theta: T,
    theta_seed: u64,
) -> Result<EnlargedScenario<T>> {
    let grid = path.grid;
    let curve = hazard.curve(&path)?;
    let gamma_values = curve.grid_values();
    let passage = curve.first_passage(theta, &gamma_values, passage_tolerance(grid.horizon))?;
    let (tau, defaulted) = match passage {
        Some(t) => (t, true),
        None => (grid.horizon + T::one(), false),
    };
    let stop = if defaulted { tau } else { grid.horizon };
    let gamma_at_tau = curve.value(stop)?;
    let ac_at_tau = curve.ac_value(stop)?;
    let ac_grid = curve.ac_grid();

    let n = grid.len();
    let mut h_values = Vec::with_capacity(n);
    let mut a_values = Vec::with_capacity(n);
    let mut lambda_values = Vec::with_capacity(n);
    let mut lambda_ac_values = Vec::with_capacity(n);
    let mut m_values = Vec::with_capacity(n);
    let mut y_values = Vec::with_capacity(n);
    for k in 0..n {
        let t = grid.time(k);
        let alive = !(defaulted && tau <= t);
        let a = (-gamma_values[k]).exp();
        let (h, lambda, lambda_ac) = if alive {
            (T::zero(), gamma_values[k], ac_grid[k])
        } else {
            (T::one(), gamma_at_tau, ac_at_tau)
        };
        h_values.push(h);
        a_values.push(a);
        lambda_values.push(lambda);
        lambda_ac_values.push(lambda_ac);
        m_values.push(h - lambda);
        y_values.push(if alive { a.recip() } else { T::zero() });
    }
    Ok(EnlargedScenario {
        path,
        theta,
        tau,
        defaulted,
        gamma_values,
        gamma_at_tau,
        h_values,
        a_values,
        lambda_values,
        lambda_ac_values,
        m_values,
        y_values,
        provenance: Provenance {
            theta_seed,
            immersion: true,
            avoidance: true,
        },
    })
}

/// Cox construction `τ = inf{t : Γ_t >= Θ}` on one path.
pub fn draw_random_time<T: Real>(
    spec: &HazardSpec<T>,
    path: &PathBundle<T>,
    theta_seed: u64,
) -> Result<EnlargedScenario<T>> {
    let prepared = spec.prepare(path.grid)?;
    enlarge(&prepared, path.clone(), theta_seed)
}

/// `E(−M)` by the Doléans-Dade product: `exp(−M_t)·Π_{s≤t}(1 − ΔM_s)e^{ΔM_s}`.
pub fn stochastic_exponential_of_minus_m<T: Real>(scenario: &EnlargedScenario<T>) -> Vec<T> {
    let grid = scenario.path.grid;
    let jump = T::one();
    scenario
        .m_values
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let product = match scenario.default_time() {
                Some(tau) if tau <= grid.time(k) => (T::one() - jump) * jump.exp(),
                _ => T::one(),
            };
            (-m).exp() * product
        })
        .collect()
}

fn rel_err<T: Real>(a: T, b: T) -> f64 {
    let (a, b) = (a.to_f64_lossy(), b.to_f64_lossy());
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Largest relative deviations of the pathwise identities on one scenario.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IdentityCheck {
    /// `A` against `exp(−Γ)` with Γ re-evaluated pointwise.
    pub azema: f64,
    /// `Λ^G` against `−log A_{τ∧t}`.
    pub compensator: f64,
    /// `M` against `H − Λ^G`.
    pub martingale: f64,
    /// `Y` against the Doléans-Dade exponential of `−M`.
    pub exponential: f64,
    pub a_nonincreasing: bool,
    pub a_positive_before_default: bool,
    /// `M` has exactly one jump, of size one, iff τ <= T.
    pub single_unit_jump: bool,
}

impl IdentityCheck {
    pub fn max_rel(&self) -> f64 {
        self.azema
            .max(self.compensator)
            .max(self.martingale)
            .max(self.exponential)
    }

    pub fn structural_ok(&self) -> bool {
        self.a_nonincreasing && self.a_positive_before_default && self.single_unit_jump
    }

    pub fn merge(&mut self, o: &IdentityCheck) {
        self.azema = self.azema.max(o.azema);
        self.compensator = self.compensator.max(o.compensator);
        self.martingale = self.martingale.max(o.martingale);
        self.exponential = self.exponential.max(o.exponential);
        self.a_nonincreasing &= o.a_nonincreasing;
        self.a_positive_before_default &= o.a_positive_before_default;
        self.single_unit_jump &= o.single_unit_jump;
    }
}

/// Checks the Azéma identities of one scenario against an independent
/// pointwise evaluation of the hazard.
pub fn check_identities<T: Real>(hazard: &PreparedHazard<T>, s: &EnlargedScenario<T>) -> Result<IdentityCheck> {
    let grid = s.path.grid;
    let curve = hazard.curve(&s.path)?;
    let y = stochastic_exponential_of_minus_m(s);
    let a_tau = (-curve.value(if s.defaulted { s.tau } else { grid.horizon })?).exp();
    let mut out = IdentityCheck {
        a_nonincreasing: true,
        a_positive_before_default: true,
        ..Default::default()
    };
    for k in 0..grid.len() {
        let t = grid.time(k);
        let gamma = curve.value(t)?;
        out.azema = out.azema.max(rel_err(s.a_values[k], (-gamma).exp()));
        let stopped_a = if s.defaulted && s.tau <= t {
            a_tau
        } else {
            s.a_values[k]
        };
        out.compensator = out.compensator.max(rel_err(s.lambda_values[k], -stopped_a.ln()));
        out.martingale = out
            .martingale
            .max(rel_err(s.m_values[k], s.h_values[k] - s.lambda_values[k]));
        out.exponential = out.exponential.max(rel_err(s.y_values[k], y[k]));
        if k > 0 && s.a_values[k] > s.a_values[k - 1] {
            out.a_nonincreasing = false;
        }
        if !(s.defaulted && s.tau < t) && s.a_values[k] <= T::zero() {
            out.a_positive_before_default = false;
        }
    }
    let m = s.m_process();
    let total_jump = m.values[grid.n_steps] - m.values[0] + s.lambda_values[grid.n_steps];
    out.single_unit_jump = if s.defaulted {
        m.jumps.len() == 1 && m.jumps[0].size == T::one() && total_jump == T::one() && s.tau > T::zero()
    } else {
        m.jumps.is_empty() && total_jump == T::zero()
    };
    Ok(out)
}

/// Random access to a batch of enlarged scenarios.
pub trait ScenarioSource<T: Real>: Sync {
    fn len(&self) -> usize;
    fn scenario(&self, i: usize) -> Result<Cow<'_, EnlargedScenario<T>>>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<T: Real> ScenarioSource<T> for [EnlargedScenario<T>] {
    fn len(&self) -> usize {
        <[EnlargedScenario<T>]>::len(self)
    }

    fn scenario(&self, i: usize) -> Result<Cow<'_, EnlargedScenario<T>>> {
        Ok(Cow::Borrowed(&self[i]))
    }
}

impl<T: Real> ScenarioSource<T> for Vec<EnlargedScenario<T>> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn scenario(&self, i: usize) -> Result<Cow<'_, EnlargedScenario<T>>> {
        Ok(Cow::Borrowed(&self[i]))
    }
}

/// Lazily built scenarios: path `i` from the path source, Θ from stream `i`
/// of the threshold family.
#[derive(Clone, Debug)]
pub struct EnlargedBatch<T, P> {
    pub paths: P,
    pub hazard: PreparedHazard<T>,
    pub root_seed: u64,
}

impl<T: Real, P: PathSource<T>> EnlargedBatch<T, P> {
    pub fn new(paths: P, spec: &HazardSpec<T>, root_seed: u64) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::Configuration("batch has no paths".into()));
        }
        let grid = paths.path(0)?.grid;
        Ok(EnlargedBatch {
            hazard: spec.prepare(grid)?,
            paths,
            root_seed,
        })
    }

    pub fn theta_seed(&self, i: usize) -> u64 {
        rng::stream_seed(self.root_seed, TAG_THETA, i as u64)
    }
}

impl<T: Real, P: PathSource<T>> ScenarioSource<T> for EnlargedBatch<T, P> {
    fn len(&self) -> usize {
        self.paths.len()
    }

    fn scenario(&self, i: usize) -> Result<Cow<'_, EnlargedScenario<T>>> {
        let path = self.paths.path(i)?.into_owned();
        enlarge(&self.hazard, path, self.theta_seed(i)).map(Cow::Owned)
    }
}

#[cfg(test)]
mod tests {
    use super::super::cantor::cantor_distance;
    use super::*;
    use crate::levy_sim::{simulate_path, JumpAtom, LevyBatch, LevyModel};
    use crate::stats::Moments;
    use proptest::prelude::*;

    fn model() -> LevyModel<f64> {
        LevyModel::new(
            0.1,
            1.0,
            vec![
                JumpAtom {
                    size: 1.0,
                    intensity: 0.5,
                },
                JumpAtom {
                    size: -0.5,
                    intensity: 1.0,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn survival_probability_matches_azema_at_horizon() {
        let batch = LevyBatch {
            model: LevyModel::gaussian(1.0),
            horizon: 1.0,
            n_steps: 8,
            n_paths: 100_000,
            root_seed: 3,
        };
        let b = EnlargedBatch::new(batch, &HazardSpec::constant(1.0), 3).unwrap();
        let alive: Moments = (0..b.len())
            .map(|i| if b.scenario(i).unwrap().defaulted { 0.0 } else { 1.0 })
            .collect();
        assert!((alive.mean() - (-1.0f64).exp()).abs() <= 4.0 * alive.std_err());
    }

    #[test]
    fn no_default_before_horizon() {
        let p = simulate_path(&model(), 1.0, 64, 1).unwrap();
        let prepared = HazardSpec::constant(1.0).prepare(p.grid).unwrap();
        let s = enlarge_with_threshold(&prepared, p, 5.0, 0).unwrap();
        assert!(!s.defaulted);
        assert_eq!(s.tau, 2.0);
        assert!(s.h_values.iter().all(|&h| h == 0.0));
        for (k, t) in s.path.grid.times().enumerate() {
            assert!((s.m_values[k] + t).abs() < 1e-15);
        }
    }

    #[test]
    fn exponential_before_and_after_default() {
        let p = simulate_path(&model(), 1.0, 10, 1).unwrap();
        let prepared = HazardSpec::constant(1.0).prepare(p.grid).unwrap();
        let s = enlarge_with_threshold(&prepared, p, 0.5, 0).unwrap();
        assert!((s.tau - 0.5).abs() <= 1e-12);
        let y = stochastic_exponential_of_minus_m(&s);
        let k = s.path.grid.index_of(0.4).unwrap();
        assert!((y[k] - 0.4f64.exp()).abs() < 1e-14);
        let k = s.path.grid.index_of(0.6).unwrap();
        assert_eq!(y[k], 0.0);
    }

    #[test]
    fn staircase_defaults_sit_on_the_cantor_set() {
        let spec = HazardSpec::staircase(10.0, 1.0);
        let batch = LevyBatch {
            model: LevyModel::gaussian(1.0),
            horizon: 1.0,
            n_steps: 256,
            n_paths: 2_000,
            root_seed: 8,
        };
        let b = EnlargedBatch::new(batch, &spec, 8).unwrap();
        let mut n = 0;
        for i in 0..b.len() {
            if let Some(tau) = b.scenario(i).unwrap().default_time() {
                assert!(cantor_distance(tau, 48).unwrap() <= 1e-9, "tau {tau}");
                n += 1;
            }
        }
        assert!(n > 1_500);
    }

    #[test]
    fn processes_carry_the_default_jump() {
        let p = simulate_path(&model(), 1.0, 64, 2).unwrap();
        let prepared = HazardSpec::constant(2.0).prepare(p.grid).unwrap();
        let s = enlarge_with_threshold(&prepared, p, 0.3, 0).unwrap();
        let m = s.m_process();
        assert_eq!(m.jumps.len(), 1);
        assert_eq!(s.y_process().jumps[0].size, -(s.gamma_at_tau.exp()));
        assert!(GridProcess::new(m.grid, m.values.clone(), m.jumps.clone(), m.continuous).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn identities_hold_pathwise(seed in any::<u64>(), theta_seed in any::<u64>(), which in 0usize..3) {
            use super::super::hazard::{HazardKind, Intensity};
            let spec = match which {
                0 => HazardSpec::constant(1.3),
                1 => HazardSpec::staircase(5.0, 1.0),
                _ => HazardSpec::mixed(vec![
                    HazardKind::AbsolutelyContinuous { intensity: Intensity::Exponential { base: 0.8, slope: 0.5 } },
                    HazardKind::SingularContinuous { scale: 2.0, s_max: 0.9 },
                ]),
            };
            let p = simulate_path(&model(), 1.0, 256, seed).unwrap();
            let prepared = spec.prepare(p.grid).unwrap();
            let s = enlarge(&prepared, p, theta_seed).unwrap();
            prop_assert!(s.tau > 0.0);
            let c = check_identities(&prepared, &s).unwrap();
            prop_assert!(c.max_rel() <= 1e-10, "{c:?}");
            prop_assert!(c.structural_ok(), "{c:?}");
            prop_assert_eq!(s.a_values[0], 1.0);
            for k in 0..s.path.grid.len() {
                prop_assert!((s.lambda_values[k] - s.gamma_values[k]).abs() < 1e-12 || s.h_values[k] == 1.0);
            }
        }
    }
}
