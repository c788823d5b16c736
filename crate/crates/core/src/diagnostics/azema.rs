use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::levy_sim::{simulate_path, LevyModel};
use crate::random_time::{cantor_distance, passage_tolerance, HazardKind, HazardSpec};
use crate::rng::{self, stream_seed, TAG_NESTED, TAG_PATH};
use crate::scalar::Real;
use crate::stats::{map_indexed, z_score};

/// Nested Monte Carlo layout: outer paths × inner threshold redraws.
#[derive(Clone, Debug, PartialEq)]
pub struct AzemaCheckConfig {
    pub horizon: f64,
    pub n_steps: usize,
    pub outer_paths: usize,
    pub inner_draws: usize,
    pub times: Vec<f64>,
    pub root_seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AzemaCell {
    pub path: usize,
    pub t: f64,
    /// Fraction of inner draws with τ > t.
    pub estimate: f64,
    /// `exp(−Γ_t)` on the same path.
    pub exact: f64,
    /// Binomial standard error under the exact value.
    pub se: f64,
    pub z: f64,
}

/// Two times inside one staircase plateau and the Azéma values there.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauCheck {
    pub t1: f64,
    pub t2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl PlateauCheck {
    pub fn flat(&self) -> bool {
        self.a1 == self.a2
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AzemaReport {
    pub cells: Vec<AzemaCell>,
    pub inner_draws: usize,
    pub z_gate: f64,
    pub plateau: Option<PlateauCheck>,
}

impl AzemaReport {
    pub fn max_abs_z(&self) -> f64 {
        self.cells.iter().map(|c| c.z.abs()).fold(0.0, f64::max)
    }

    pub fn pass(&self) -> bool {
        self.max_abs_z() <= self.z_gate && self.plateau.as_ref().is_none_or(PlateauCheck::flat)
    }
}

/// Estimates `P[τ > t | F_t]` per path by redrawing Θ and locating τ, and
/// compares with the closed form `exp(−Γ_t)`.
pub fn azema_crosscheck<T: Real>(
    spec: &HazardSpec<T>,
    model: &LevyModel<T>,
    cfg: &AzemaCheckConfig,
) -> Result<AzemaReport> {
    if cfg.outer_paths == 0 || cfg.inner_draws == 0 || cfg.times.is_empty() {
        return Err(Error::Configuration(
            "azema cross-check needs outer paths, inner draws and times".into(),
        ));
    }
    let horizon = T::lit(cfg.horizon);
    let per_path = map_indexed(cfg.outer_paths, |i| {
        let path = simulate_path(
            model,
            horizon,
            cfg.n_steps,
            stream_seed(cfg.root_seed, TAG_PATH, i as u64),
        )?;
        let prepared = spec.prepare(path.grid)?;
        let curve = prepared.curve(&path)?;
        let gamma = curve.grid_values();
        let idx: Vec<usize> = cfg
            .times
            .iter()
            .map(|&t| path.grid.index_of(T::lit(t)))
            .collect::<Result<_>>()?;
        let mut survive = vec![0usize; idx.len()];
        let nested = stream_seed(cfg.root_seed, TAG_NESTED, i as u64);
        let tol = passage_tolerance(horizon);
        for j in 0..cfg.inner_draws {
            let mut g = rng::generator(rng::sub_seed(nested, j as u64));
            let theta: f64 = Exp1.sample(&mut g);
            let tau = curve.first_passage(T::lit(theta.max(f64::MIN_POSITIVE)), &gamma, tol)?;
            for (c, &t) in cfg.times.iter().enumerate() {
                if tau.is_none_or(|tau| tau.to_f64_lossy() > t) {
                    survive[c] += 1;
                }
            }
        }
        let n = cfg.inner_draws as f64;
        Ok(idx
            .iter()
            .zip(&survive)
            .zip(&cfg.times)
            .map(|((&k, &s), &t)| {
                let exact = (-gamma[k].to_f64_lossy()).exp();
                let estimate = s as f64 / n;
                let se = (exact * (1.0 - exact) / n).sqrt();
                AzemaCell {
                    path: i,
                    t,
                    estimate,
                    exact,
                    se,
                    z: z_score(estimate, exact, se),
                }
            })
            .collect::<Vec<_>>())
    })?;
    let plateau = staircase_plateau(spec, model, cfg)?;
    Ok(AzemaReport {
        cells: per_path.into_iter().flatten().collect(),
        inner_draws: cfg.inner_draws,
        z_gate: 4.0,
        plateau,
    })
}

/// For hazards with a staircase part: `A` at two grid times inside the
/// middle-third plateau of the first path.
fn staircase_plateau<T: Real>(
    spec: &HazardSpec<T>,
    model: &LevyModel<T>,
    cfg: &AzemaCheckConfig,
) -> Result<Option<PlateauCheck>> {
    let HazardKind::SingularContinuous { s_max, .. } = spec.kind else {
        return Ok(None);
    };
    let path = simulate_path(
        model,
        T::lit(cfg.horizon),
        cfg.n_steps,
        stream_seed(cfg.root_seed, TAG_PATH, 0),
    )?;
    let grid = path.grid;
    let on_plateau: Vec<usize> = (0..grid.len())
        .filter(|&k| {
            let x = grid.time(k) / s_max;
            x > T::lit(1.0 / 3.0)
                && x < T::lit(2.0 / 3.0)
                && cantor_distance(x, spec.cantor_depth).is_ok_and(|d| d > T::zero())
        })
        .collect();
    let (Some(&k1), Some(&k2)) = (on_plateau.first(), on_plateau.last()) else {
        return Ok(None);
    };
    let prepared = spec.prepare(grid)?;
    let gamma = prepared.curve(&path)?.grid_values();
    Ok(Some(PlateauCheck {
        t1: grid.time(k1).to_f64_lossy(),
        t2: grid.time(k2).to_f64_lossy(),
        a1: (-gamma[k1].to_f64_lossy()).exp(),
        a2: (-gamma[k2].to_f64_lossy()).exp(),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(times: Vec<f64>) -> AzemaCheckConfig {
        AzemaCheckConfig {
            horizon: 1.0,
            n_steps: 64,
            outer_paths: 16,
            inner_draws: 4000,
            times,
            root_seed: 8,
        }
    }

    #[test]
    fn constant_rate_matches_closed_form() {
        let r = azema_crosscheck(
            &HazardSpec::constant(1.0),
            &LevyModel::gaussian(1.0),
            &cfg(vec![0.0, 0.5, 1.0]),
        )
        .unwrap();
        assert!(r.pass(), "max z {}", r.max_abs_z());
        for c in r.cells.iter().filter(|c| c.t == 1.0) {
            assert!((c.exact - (-1.0f64).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn time_zero_is_exactly_one() {
        let r = azema_crosscheck(&HazardSpec::constant(3.0), &LevyModel::gaussian(1.0), &cfg(vec![0.0])).unwrap();
        assert!(r
            .cells
            .iter()
            .all(|c| c.estimate == 1.0 && c.exact == 1.0 && c.z == 0.0));
    }

    #[test]
    fn staircase_is_flat_on_the_middle_plateau() {
        let r = azema_crosscheck(
            &HazardSpec::staircase(5.0, 1.0),
            &LevyModel::gaussian(1.0),
            &cfg(vec![0.25, 1.0]),
        )
        .unwrap();
        let p = r.plateau.clone().unwrap();
        assert!(p.t1 < p.t2 && p.flat());
        assert!(r.pass(), "max z {}", r.max_abs_z());
    }

    #[test]
    fn path_dependent_rate_matches() {
        let spec = HazardSpec {
            kind: HazardKind::AbsolutelyContinuous {
                intensity: crate::random_time::Intensity::Exponential { base: 0.5, slope: 0.3 },
            },
            cantor_depth: 48,
        };
        let r = azema_crosscheck(&spec, &LevyModel::gaussian(1.0), &cfg(vec![0.5, 1.0])).unwrap();
        assert!(r.pass(), "max z {}", r.max_abs_z());
    }
}
