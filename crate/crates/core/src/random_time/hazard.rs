//! Hazard processes Γ for the Cox construction.

use serde::{Deserialize, Serialize};

use super::cantor::{cantor_function, CantorComplement, DEFAULT_CANTOR_DEPTH, MAX_CANTOR_DEPTH};
use crate::error::{Error, Result};
use crate::levy_sim::PathBundle;
use crate::scalar::Real;
use crate::stoch_calc::Grid;

/// Default intensity `λ(t, L_t)` of an absolutely continuous hazard.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Intensity<T> {
    Constant {
        rate: T,
    },
    /// `base + slope·L_t`; evaluation fails if it turns negative.
    Affine {
        base: T,
        slope: T,
    },
    /// `base·exp(slope·L_t)`.
    Exponential {
        base: T,
        slope: T,
    },
}

impl<T: Real> Intensity<T> {
    pub fn rate(&self, level: T) -> T {
        match *self {
            Intensity::Constant { rate } => rate,
            Intensity::Affine { base, slope } => base + slope * level,
            Intensity::Exponential { base, slope } => base * (slope * level).exp(),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, Intensity::Constant { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HazardKind<T> {
    AbsolutelyContinuous {
        intensity: Intensity<T>,
    },
    /// `Γ_t = scale·C(min(t / s_max, 1))`.
    SingularContinuous {
        scale: T,
        s_max: T,
    },
    Mixed {
        parts: Vec<HazardKind<T>>,
    },
}

fn default_depth() -> u32 {
    DEFAULT_CANTOR_DEPTH
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HazardSpec<T> {
    pub kind: HazardKind<T>,
    #[serde(default = "default_depth")]
    pub cantor_depth: u32,
}

/// Coarse classification used in reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HazardClass {
    AbsolutelyContinuous,
    SingularContinuous,
    Mixed,
}

impl std::fmt::Display for HazardClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HazardClass::AbsolutelyContinuous => "absolutely-continuous",
            HazardClass::SingularContinuous => "singular-continuous",
            HazardClass::Mixed => "mixed",
        })
    }
}

impl<T: Real> HazardSpec<T> {
    pub fn constant(rate: T) -> Self {
        HazardSpec {
            kind: HazardKind::AbsolutelyContinuous {
                intensity: Intensity::Constant { rate },
            },
            cantor_depth: DEFAULT_CANTOR_DEPTH,
        }
    }

    pub fn staircase(scale: T, s_max: T) -> Self {
        HazardSpec {
            kind: HazardKind::SingularContinuous { scale, s_max },
            cantor_depth: DEFAULT_CANTOR_DEPTH,
        }
    }

    pub fn mixed(parts: Vec<HazardKind<T>>) -> Self {
        HazardSpec {
            kind: HazardKind::Mixed { parts },
            cantor_depth: DEFAULT_CANTOR_DEPTH,
        }
    }

    fn parts(&self) -> Vec<&HazardKind<T>> {
        match &self.kind {
            HazardKind::Mixed { parts } => parts.iter().collect(),
            other => vec![other],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_CANTOR_DEPTH).contains(&self.cantor_depth) {
            return Err(Error::Configuration(format!(
                "hazard.cantor_depth must be in 1..={MAX_CANTOR_DEPTH}, got {}",
                self.cantor_depth
            )));
        }
        let parts = self.parts();
        if parts.is_empty() {
            return Err(Error::Configuration("hazard.kind.parts must not be empty".into()));
        }
        for (i, part) in parts.iter().enumerate() {
            let at = format!("hazard part {i}");
            match part {
                HazardKind::Mixed { .. } => {
                    return Err(Error::Configuration(format!("{at}: mixed hazards cannot be nested")))
                }
                HazardKind::SingularContinuous { scale, s_max } => {
                    if !(scale.is_finite() && *scale > T::zero()) {
                        return Err(Error::Configuration(format!("{at}: scale must be finite and > 0")));
                    }
                    if !(s_max.is_finite() && *s_max > T::zero()) {
                        return Err(Error::Configuration(format!("{at}: s_max must be finite and > 0")));
                    }
                }
                HazardKind::AbsolutelyContinuous { intensity } => {
                    let ok = match *intensity {
                        Intensity::Constant { rate } => rate.is_finite(),
                        Intensity::Affine { base, slope } => base.is_finite() && slope.is_finite(),
                        Intensity::Exponential { base, slope } => base.is_finite() && slope.is_finite(),
                    };
                    if !ok {
                        return Err(Error::Configuration(format!(
                            "{at}: intensity parameters must be finite"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn class(&self) -> HazardClass {
        let parts = self.parts();
        let ac = parts
            .iter()
            .any(|p| matches!(p, HazardKind::AbsolutelyContinuous { .. }));
        let sc = parts.iter().any(|p| matches!(p, HazardKind::SingularContinuous { .. }));
        match (ac, sc) {
            (true, false) => HazardClass::AbsolutelyContinuous,
            (false, true) => HazardClass::SingularContinuous,
            _ => HazardClass::Mixed,
        }
    }

    /// True when Γ does not depend on the path.
    pub fn is_deterministic(&self) -> bool {
        self.parts().iter().all(|p| match p {
            HazardKind::AbsolutelyContinuous { intensity } => intensity.is_deterministic(),
            _ => true,
        })
    }

    /// Staircase horizon of the singular parts, if any; parts with different
    /// horizons have no common carrier set and are rejected.
    pub fn staircase_horizon(&self) -> Result<Option<T>> {
        let mut found: Option<T> = None;
        for p in self.parts() {
            if let HazardKind::SingularContinuous { s_max, .. } = p {
                match found {
                    Some(s) if s != *s_max => {
                        return Err(Error::Configuration(
                            "singular parts must share one staircase horizon".into(),
                        ))
                    }
                    _ => found = Some(*s_max),
                }
            }
        }
        Ok(found)
    }

    /// Time set carrying the absolutely continuous part (complement of the
    /// scaled Cantor set), when the hazard has a singular part.
    pub fn splitting_set(&self) -> Result<Option<CantorComplement<T>>> {
        self.staircase_horizon()?
            .map(|s| CantorComplement::new(s, self.cantor_depth))
            .transpose()
    }

    /// Evaluates everything path-independent on `grid` once.
    pub fn prepare(&self, grid: Grid<T>) -> Result<PreparedHazard<T>> {
        self.validate()?;
        let mut constant_rate = T::zero();
        let mut intensities = Vec::new();
        let mut staircases = Vec::new();
        for p in self.parts() {
            match p {
                HazardKind::AbsolutelyContinuous {
                    intensity: Intensity::Constant { rate },
                } => {
                    if *rate < T::zero() {
                        return Err(Error::Model(format!("negative intensity {rate}")));
                    }
                    constant_rate += *rate;
                }
                HazardKind::AbsolutelyContinuous { intensity } => intensities.push(intensity.clone()),
                HazardKind::SingularContinuous { scale, s_max } => staircases.push((*scale, *s_max)),
                HazardKind::Mixed { .. } => unreachable!("validated"),
            }
        }
        let mut prepared = PreparedHazard {
            grid,
            depth: self.cantor_depth,
            constant_rate,
            intensities,
            staircases,
            singular_grid: Vec::new(),
        };
        prepared.singular_grid = grid.times().map(|t| prepared.singular_at(t)).collect::<Result<_>>()?;
        Ok(prepared)
    }
}

/// Hazard with its deterministic staircase precomputed on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedHazard<T> {
    grid: Grid<T>,
    depth: u32,
    constant_rate: T,
    intensities: Vec<Intensity<T>>,
    staircases: Vec<(T, T)>,
    singular_grid: Vec<T>,
}

impl<T: Real> PreparedHazard<T> {
    pub fn grid(&self) -> Grid<T> {
        self.grid
    }

    fn singular_at(&self, t: T) -> Result<T> {
        let mut s = T::zero();
        for &(scale, s_max) in &self.staircases {
            s += scale * cantor_function((t / s_max).min(T::one()), self.depth)?;
        }
        Ok(s)
    }

    /// Γ along one path. Path-dependent intensities are integrated with the
    /// left-point rule, so Γ is piecewise linear and its value on a cell only
    /// uses the path up to the cell's left end.
    pub fn curve<'a>(&'a self, path: &PathBundle<T>) -> Result<HazardCurve<'a, T>> {
        if path.grid != self.grid {
            return Err(Error::Structural(
                "hazard prepared on a different grid than the path".into(),
            ));
        }
        let mut rates = Vec::new();
        let mut ac_grid = Vec::with_capacity(self.grid.len());
        if self.intensities.is_empty() {
            ac_grid.extend(self.grid.times().map(|t| self.constant_rate * t));
        } else {
            rates.reserve(self.grid.n_steps);
            let dt = self.grid.dt();
            let mut acc = T::zero();
            ac_grid.push(acc);
            for k in 0..self.grid.n_steps {
                let level = path.l_values[k];
                let mut r = self.constant_rate;
                for intensity in &self.intensities {
                    let v = intensity.rate(level);
                    if !(v >= T::zero()) || !v.is_finite() {
                        return Err(Error::Model(format!(
                            "intensity {v} at t = {} (L = {level}) is not a finite nonnegative rate",
                            self.grid.time(k)
                        )));
                    }
                    r += v;
                }
                rates.push(r);
                acc += r * dt;
                ac_grid.push(acc);
            }
        }
        Ok(HazardCurve {
            prepared: self,
            rates,
            ac_grid,
        })
    }
}

/// Γ on one path, evaluable at any time in `[0, T]`.
#[derive(Clone, Debug)]
pub struct HazardCurve<'a, T> {
    prepared: &'a PreparedHazard<T>,
    /// Per-cell total rate; empty when the rate is constant.
    rates: Vec<T>,
    ac_grid: Vec<T>,
}

impl<T: Real> HazardCurve<'_, T> {
    fn check(&self, t: T) -> Result<()> {
        let h = self.prepared.grid.horizon;
        let tol = T::lit(1e-12) * h;
        if !(t >= T::zero() && t <= h + tol) {
            return Err(Error::Domain(format!("hazard evaluated at t = {t} outside [0, {h}]")));
        }
        Ok(())
    }

    /// Absolutely continuous part of Γ_t.
    pub fn ac_value(&self, t: T) -> Result<T> {
        self.check(t)?;
        if self.rates.is_empty() {
            return Ok(self.prepared.constant_rate * t);
        }
        let grid = self.prepared.grid;
        let k = grid.cell_of(t);
        let t_k = grid.time(k);
        if t <= t_k {
            return Ok(self.ac_grid[k]);
        }
        Ok(self.ac_grid[k] + self.rates[k] * (t - t_k))
    }

    pub fn singular_value(&self, t: T) -> Result<T> {
        self.check(t)?;
        self.prepared.singular_at(t)
    }

    pub fn value(&self, t: T) -> Result<T> {
        Ok(self.ac_value(t)? + self.singular_value(t)?)
    }

    pub fn ac_grid(&self) -> &[T] {
        &self.ac_grid
    }

    pub fn singular_grid(&self) -> &[T] {
        &self.prepared.singular_grid
    }

    /// Γ at every grid point.
    pub fn grid_values(&self) -> Vec<T> {
        self.ac_grid
            .iter()
            .zip(&self.prepared.singular_grid)
            .map(|(&a, &s)| a + s)
            .collect()
    }

    /// `inf{t : Γ_t >= θ}` by grid bracketing and bisection to `tol`; `None`
    /// when Γ_T < θ.
    pub fn first_passage(&self, theta: T, grid_values: &[T], tol: T) -> Result<Option<T>> {
        let grid = self.prepared.grid;
        if grid_values[grid.n_steps] < theta {
            return Ok(None);
        }
        let k = grid_values.partition_point(|&g| g < theta);
        if k == 0 {
            return Ok(Some(T::min_positive_value()));
        }
        let (mut lo, mut hi) = (grid.time(k - 1), grid.time(k));
        while hi - lo > tol {
            let mid = lo + (hi - lo) * T::lit(0.5);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.value(mid)? >= theta {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(Some(hi))
    }
}

/// `Γ_t` for one path and time.
pub fn hazard_value<T: Real>(spec: &HazardSpec<T>, path: &PathBundle<T>, t: T) -> Result<T> {
    let prepared = spec.prepare(path.grid)?;
    prepared.curve(path)?.value(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_sim::{simulate_path, LevyModel};
    use proptest::prelude::*;

    fn path() -> PathBundle<f64> {
        simulate_path(&LevyModel::gaussian(1.0), 1.0, 1024, 17).unwrap()
    }

    #[test]
    fn constant_rate() {
        let v = hazard_value(&HazardSpec::constant(1.0), &path(), 0.7).unwrap();
        assert!((v - 0.7).abs() < 1e-15);
    }

    #[test]
    fn staircase_at_one_third() {
        let v = hazard_value(&HazardSpec::staircase(1.0, 1.0), &path(), 1.0 / 3.0).unwrap();
        assert!((v - 0.5).abs() < 1e-9);
    }

    #[test]
    fn mixed_at_horizon() {
        let spec = HazardSpec::mixed(vec![
            HazardKind::AbsolutelyContinuous {
                intensity: Intensity::Constant { rate: 1.0 },
            },
            HazardKind::SingularContinuous { scale: 2.0, s_max: 1.0 },
        ]);
        assert_eq!(hazard_value(&spec, &path(), 1.0).unwrap(), 3.0);
        assert_eq!(spec.class(), HazardClass::Mixed);
    }

    #[test]
    fn staircase_flat_after_horizon() {
        let spec = HazardSpec::staircase(2.0, 0.5);
        let p = path();
        assert_eq!(hazard_value(&spec, &p, 0.75).unwrap(), 2.0);
        assert_eq!(hazard_value(&spec, &p, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn beyond_horizon_is_domain_error() {
        assert!(matches!(
            hazard_value(&HazardSpec::constant(1.0), &path(), 1.5),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn negative_rate_is_model_error() {
        let spec = HazardSpec {
            kind: HazardKind::AbsolutelyContinuous {
                intensity: Intensity::Affine { base: 0.1, slope: 10.0 },
            },
            cantor_depth: 48,
        };
        let mut hit = false;
        for seed in 0..20 {
            let p = simulate_path(&LevyModel::gaussian(1.0), 1.0, 64, seed).unwrap();
            if p.l_values[..64].iter().any(|&l| 0.1 + 10.0 * l < 0.0) {
                assert!(matches!(hazard_value(&spec, &p, 1.0), Err(Error::Model(_))));
                hit = true;
            }
        }
        assert!(hit);
        assert!(matches!(
            hazard_value(&HazardSpec::constant(-1.0), &path(), 0.5),
            Err(Error::Model(_))
        ));
    }

    #[test]
    fn left_point_quadrature_of_state_dependent_rate() {
        let spec = HazardSpec {
            kind: HazardKind::AbsolutelyContinuous {
                intensity: Intensity::Exponential { base: 0.5, slope: 0.3 },
            },
            cantor_depth: 48,
        };
        let p = simulate_path(&LevyModel::gaussian(1.0), 1.0, 16, 4).unwrap();
        let dt = 1.0 / 16.0;
        let want: f64 = (0..16).map(|k| 0.5 * (0.3f64 * p.l_values[k]).exp() * dt).sum();
        assert!((hazard_value(&spec, &p, 1.0).unwrap() - want).abs() < 1e-14);
        // Mid-cell value interpolates with the cell's left-point rate.
        let mid = 0.5 * dt;
        assert!((hazard_value(&spec, &p, mid).unwrap() - 0.5 * mid).abs() < 1e-15);
    }

    #[test]
    fn invalid_specs() {
        assert!(HazardSpec::staircase(0.0, 1.0).validate().is_err());
        assert!(HazardSpec::staircase(1.0, -1.0).validate().is_err());
        let nested = HazardSpec::<f64>::mixed(vec![HazardKind::Mixed { parts: vec![] }]);
        assert!(nested.validate().is_err());
        let mut deep = HazardSpec::constant(1.0);
        deep.cantor_depth = 70;
        assert!(deep.validate().is_err());
    }

    proptest! {
        #[test]
        fn hazard_nondecreasing_and_starts_at_zero(seed in any::<u64>(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let spec = HazardSpec::mixed(vec![
                HazardKind::AbsolutelyContinuous { intensity: Intensity::Exponential { base: 0.5, slope: 0.7 } },
                HazardKind::SingularContinuous { scale: 3.0, s_max: 0.8 },
            ]);
            let p = simulate_path(&LevyModel::gaussian(1.0), 1.0, 128, seed).unwrap();
            let prepared = spec.prepare(p.grid).unwrap();
            let curve = prepared.curve(&p).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert_eq!(curve.value(0.0).unwrap(), 0.0);
            prop_assert!(curve.value(lo).unwrap() <= curve.value(hi).unwrap());
            let g = curve.grid_values();
            prop_assert!(g.windows(2).all(|w| w[1] >= w[0]));
        }
    }
}
