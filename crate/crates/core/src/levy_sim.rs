//! Finite-activity Lévy paths with an exact jump ledger.

use std::borrow::Cow;

use num_complex::Complex;
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{require_power, Error, Result};
use crate::rng::{self, TAG_PATH};
use crate::scalar::Real;
use crate::stats::{fold_indexed, z_score, Moments};
use crate::stoch_calc::Grid;

/// Minimum batch size for characteristic-function tables.
pub const MIN_PATHS: usize = 10_000;

/// One support point of the Lévy measure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpAtom<T> {
    pub size: T,
    pub intensity: T,
}

/// Characteristic triplet with a finitely supported Lévy measure.
///
/// `beta` is the drift in the characteristic exponent, where jumps with
/// `|x| <= 1` are compensated. Paths are assembled from uncompensated jump
/// sums, so they move with [`LevyModel::path_drift`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyModel<T> {
    pub beta: T,
    pub sigma2: T,
    #[serde(default)]
    pub nu: Vec<JumpAtom<T>>,
}

impl<T: Real> LevyModel<T> {
    pub fn new(beta: T, sigma2: T, nu: Vec<JumpAtom<T>>) -> Result<Self> {
        let model = LevyModel { beta, sigma2, nu };
        model.validate()?;
        Ok(model)
    }

    /// Brownian motion with variance rate `sigma2` and no drift.
    pub fn gaussian(sigma2: T) -> Self {
        LevyModel {
            beta: T::zero(),
            sigma2,
            nu: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.beta.is_finite() {
            return Err(Error::Configuration("model.beta must be finite".into()));
        }
        if !(self.sigma2.is_finite() && self.sigma2 >= T::zero()) {
            return Err(Error::Configuration("model.sigma2 must be finite and >= 0".into()));
        }
        for (i, atom) in self.nu.iter().enumerate() {
            if !(atom.size.is_finite() && atom.size != T::zero()) {
                return Err(Error::Configuration(format!(
                    "model.nu[{i}].size must be finite and nonzero"
                )));
            }
            if !(atom.intensity.is_finite() && atom.intensity > T::zero()) {
                return Err(Error::Configuration(format!(
                    "model.nu[{i}].intensity must be finite and > 0"
                )));
            }
            if self.nu[..i].iter().any(|a| a.size == atom.size) {
                return Err(Error::Configuration(format!(
                    "model.nu[{i}].size duplicates an earlier atom"
                )));
            }
        }
        Ok(())
    }

    pub fn total_intensity(&self) -> T {
        self.nu.iter().map(|a| a.intensity).sum()
    }

    /// Drift of the uncompensated path: `beta` minus the small-jump compensator.
    pub fn path_drift(&self) -> T {
        let small: T = self
            .nu
            .iter()
            .filter(|a| a.size.abs() <= T::one())
            .map(|a| a.size * a.intensity)
            .sum();
        self.beta - small
    }

    /// `ψ(u) = iβu − u²σ²/2 + Σ (e^{iux} − 1 − iux·1{|x|≤1}) ν`.
    pub fn characteristic_exponent(&self, u: T) -> Complex<T> {
        let half = T::lit(0.5);
        let mut psi = Complex::new(-half * u * u * self.sigma2, self.beta * u);
        for atom in &self.nu {
            let ux = u * atom.size;
            let mut term = Complex::new(ux.cos() - T::one(), ux.sin());
            if atom.size.abs() <= T::one() {
                term.im -= ux;
            }
            psi = psi + term * atom.intensity;
        }
        psi
    }
}

/// A jump of the simulated path: exact time, size and the index of its atom in `nu`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jump<T> {
    pub time: T,
    pub size: T,
    pub atom: usize,
}

/// Clock driving the Gaussian part of a path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Clock<T> {
    /// Calendar time: `⟨W⟩_t = σ² t`.
    Calendar,
    /// Cantor clock: `W` runs on `C(t / s_max)`, so its bracket is singular continuous.
    Cantor { s_max: T },
}

/// One simulated path on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PathBundle<T> {
    pub grid: Grid<T>,
    pub w_values: Vec<T>,
    pub l_values: Vec<T>,
    /// Jumps ordered by time, all in `(0, T]`.
    pub jumps: Vec<Jump<T>>,
    /// Drift used to assemble `l_values`.
    pub drift: T,
    pub seed: u64,
    pub clock: Clock<T>,
}

impl<T: Real> PathBundle<T> {
    pub fn horizon(&self) -> T {
        self.grid.horizon
    }

    /// Sum of jump sizes with `time <= t_k`, for every grid index `k`.
    pub fn cumulative_jumps(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.grid.len());
        let mut acc = T::zero();
        let mut next = 0;
        for k in 0..self.grid.len() {
            let t = self.grid.time(k);
            while next < self.jumps.len() && self.jumps[next].time <= t {
                acc += self.jumps[next].size;
                next += 1;
            }
            out.push(acc);
        }
        out
    }

    /// Rebuilds `L` from drift, Gaussian part and ledger, in the same
    /// floating-point order used by the simulator.
    pub fn assemble_level(&self) -> Vec<T> {
        self.cumulative_jumps()
            .into_iter()
            .enumerate()
            .map(|(k, j)| self.drift * self.grid.time(k) + self.w_values[k] + j)
            .collect()
    }

    /// Value of `L` at a grid time.
    pub fn level_at(&self, t: T) -> Result<T> {
        Ok(self.l_values[self.grid.index_of(t)?])
    }
}

/// Simulates one path; a pure function of its arguments.
pub fn simulate_path<T: Real>(model: &LevyModel<T>, horizon: T, n_steps: usize, seed: u64) -> Result<PathBundle<T>> {
    model.validate()?;
    let grid = Grid::new(horizon, n_steps)?;
    let mut rng = rng::generator(seed);

    let sd = (model.sigma2.to_f64_lossy() * grid.dt().to_f64_lossy()).sqrt();
    let mut w_values = Vec::with_capacity(n_steps + 1);
    let mut w = T::zero();
    w_values.push(w);
    for _ in 0..n_steps {
        let z: f64 = rng.sample(StandardNormal);
        w += T::lit(sd * z);
        w_values.push(w);
    }

    let mut jumps = Vec::new();
    let total = model.total_intensity().to_f64_lossy() * horizon.to_f64_lossy();
    if total > 0.0 {
        let count = Poisson::new(total)
            .map_err(|e| Error::Configuration(format!("jump count distribution: {e}")))?
            .sample(&mut rng) as usize;
        let weights = WeightedIndex::new(model.nu.iter().map(|a| a.intensity.to_f64_lossy()))
            .map_err(|e| Error::Configuration(format!("jump size distribution: {e}")))?;
        let h = horizon.to_f64_lossy();
        for _ in 0..count {
            let u: f64 = rng.random();
            let atom = weights.sample(&mut rng);
            jumps.push(Jump {
                time: T::lit(h * (1.0 - u)),
                size: model.nu[atom].size,
                atom,
            });
        }
        jumps.sort_by(|a, b| a.time.partial_cmp(&b.time).expect("finite jump times"));
    }

    let mut path = PathBundle {
        grid,
        w_values,
        l_values: Vec::new(),
        jumps,
        drift: model.path_drift(),
        seed,
        clock: Clock::Calendar,
    };
    path.l_values = path.assemble_level();
    Ok(path)
}

/// Random access to a batch of paths, materialized or regenerated on demand.
pub trait PathSource<T: Real>: Sync {
    fn len(&self) -> usize;
    fn path(&self, i: usize) -> Result<Cow<'_, PathBundle<T>>>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<T: Real, P: PathSource<T> + ?Sized> PathSource<T> for &P {
    fn len(&self) -> usize {
        (**self).len()
    }

    fn path(&self, i: usize) -> Result<Cow<'_, PathBundle<T>>> {
        (**self).path(i)
    }
}

impl<T: Real> PathSource<T> for [PathBundle<T>] {
    fn len(&self) -> usize {
        <[PathBundle<T>]>::len(self)
    }

    fn path(&self, i: usize) -> Result<Cow<'_, PathBundle<T>>> {
        Ok(Cow::Borrowed(&self[i]))
    }
}

impl<T: Real> PathSource<T> for Vec<PathBundle<T>> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn path(&self, i: usize) -> Result<Cow<'_, PathBundle<T>>> {
        Ok(Cow::Borrowed(&self[i]))
    }
}

/// Lazily simulated batch: path `i` uses stream `i` of the root seed.
#[derive(Clone, Debug)]
pub struct LevyBatch<T> {
    pub model: LevyModel<T>,
    pub horizon: T,
    pub n_steps: usize,
    pub n_paths: usize,
    pub root_seed: u64,
}

impl<T: Real> LevyBatch<T> {
    pub fn path_seed(&self, i: usize) -> u64 {
        rng::stream_seed(self.root_seed, TAG_PATH, i as u64)
    }
}

impl<T: Real> PathSource<T> for LevyBatch<T> {
    fn len(&self) -> usize {
        self.n_paths
    }

    fn path(&self, i: usize) -> Result<Cow<'_, PathBundle<T>>> {
        simulate_path(&self.model, self.horizon, self.n_steps, self.path_seed(i)).map(Cow::Owned)
    }
}

/// One `(u, t)` cell of the characteristic-function table.
#[derive(Clone, Debug, PartialEq)]
pub struct CharacteristicCell {
    pub u: f64,
    pub t: f64,
    pub mean_re: f64,
    pub mean_im: f64,
    pub target_re: f64,
    pub target_im: f64,
    pub se_re: f64,
    pub se_im: f64,
    pub z_re: f64,
    pub z_im: f64,
}

impl CharacteristicCell {
    pub fn max_abs_z(&self) -> f64 {
        self.z_re.abs().max(self.z_im.abs())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CharacteristicReport {
    pub n_paths: usize,
    pub cells: Vec<CharacteristicCell>,
    pub z_gate: f64,
}

impl CharacteristicReport {
    pub fn max_abs_z(&self) -> f64 {
        self.cells.iter().map(CharacteristicCell::max_abs_z).fold(0.0, f64::max)
    }

    pub fn pass(&self) -> bool {
        self.max_abs_z() <= self.z_gate
    }
}

/// Compares the empirical mean of `e^{iuL_t}` with `e^{tψ(u)}` on every cell.
pub fn verify_levy_characterization<T: Real, S: PathSource<T> + ?Sized>(
    paths: &S,
    model: &LevyModel<T>,
    u_grid: &[f64],
    t_grid: &[f64],
) -> Result<CharacteristicReport> {
    require_power(paths.len(), MIN_PATHS)?;
    model.validate()?;
    let first = paths.path(0)?;
    let grid = first.grid;
    let idx: Vec<usize> = t_grid
        .iter()
        .map(|&t| grid.index_of(T::lit(t)))
        .collect::<Result<_>>()?;
    drop(first);
    let n_cells = u_grid.len() * t_grid.len();

    let acc = fold_indexed(
        paths.len(),
        || vec![(Moments::default(), Moments::default()); n_cells],
        |acc, i| {
            let p = paths.path(i)?;
            if p.grid != grid {
                return Err(Error::Structural("paths in a batch must share a grid".into()));
            }
            for (a, &u) in u_grid.iter().enumerate() {
                for (b, &k) in idx.iter().enumerate() {
                    let phase = u * p.l_values[k].to_f64_lossy();
                    let cell = &mut acc[a * idx.len() + b];
                    cell.0.push(phase.cos());
                    cell.1.push(phase.sin());
                }
            }
            Ok(())
        },
        |total, part| {
            for (t, p) in total.iter_mut().zip(part.iter()) {
                t.0.merge(&p.0);
                t.1.merge(&p.1);
            }
        },
    )?;

    let mut cells = Vec::with_capacity(n_cells);
    for (a, &u) in u_grid.iter().enumerate() {
        let psi = model.characteristic_exponent(T::lit(u));
        let psi = Complex::new(psi.re.to_f64_lossy(), psi.im.to_f64_lossy());
        for (b, &t) in t_grid.iter().enumerate() {
            let target = (psi * t).exp();
            let (re, im) = &acc[a * idx.len() + b];
            cells.push(CharacteristicCell {
                u,
                t,
                mean_re: re.mean(),
                mean_im: im.mean(),
                target_re: target.re,
                target_im: target.im,
                se_re: re.std_err(),
                se_im: im.std_err(),
                z_re: z_score(re.mean(), target.re, re.std_err()),
                z_im: z_score(im.mean(), target.im, im.std_err()),
            });
        }
    }
    Ok(CharacteristicReport {
        n_paths: paths.len(),
        cells,
        z_gate: 4.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn two_atom() -> LevyModel<f64> {
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
    fn exponent_pure_gaussian() {
        let psi = LevyModel::gaussian(1.0).characteristic_exponent(2.0);
        assert_eq!(psi, Complex::new(-2.0, 0.0));
    }

    #[test]
    fn exponent_vanishes_at_zero() {
        assert_eq!(two_atom().characteristic_exponent(0.0), Complex::new(0.0, 0.0));
    }

    #[test]
    fn exponent_large_jump_has_no_compensator() {
        // e^{2i} - 1, evaluated independently.
        let m = LevyModel::new(
            0.0,
            0.0,
            vec![JumpAtom {
                size: 2.0,
                intensity: 1.0,
            }],
        )
        .unwrap();
        let psi = m.characteristic_exponent(1.0);
        assert_abs_diff_eq!(psi.re, -1.4161468365471424, epsilon = 1e-15);
        assert_abs_diff_eq!(psi.im, 0.9092974268256817, epsilon = 1e-15);
    }

    #[test]
    fn exponent_small_jump_is_compensated() {
        // e^{0.5i} - 1 - 0.5i, times intensity 2.
        let m = LevyModel::new(
            0.0,
            0.0,
            vec![JumpAtom {
                size: 0.5,
                intensity: 2.0,
            }],
        )
        .unwrap();
        let psi = m.characteristic_exponent(1.0);
        assert_abs_diff_eq!(psi.re, 2.0 * (0.5f64.cos() - 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(psi.im, 2.0 * (0.5f64.sin() - 0.5), epsilon = 1e-15);
    }

    #[test]
    fn exponent_in_single_precision() {
        let m = LevyModel::<f32>::gaussian(1.0);
        assert_eq!(m.characteristic_exponent(2.0), Complex::new(-2.0f32, 0.0));
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(LevyModel::new(0.0, -1.0, vec![]).is_err());
        assert!(LevyModel::new(
            0.0,
            1.0,
            vec![JumpAtom {
                size: 0.0,
                intensity: 1.0
            }]
        )
        .is_err());
        assert!(LevyModel::new(
            0.0,
            1.0,
            vec![JumpAtom {
                size: 1.0,
                intensity: 0.0
            }]
        )
        .is_err());
        let dup = vec![
            JumpAtom {
                size: 1.0,
                intensity: 1.0,
            },
            JumpAtom {
                size: 1.0,
                intensity: 2.0,
            },
        ];
        assert!(LevyModel::new(0.0, 1.0, dup).is_err());
    }

    #[test]
    fn path_drift_subtracts_small_jump_compensator() {
        assert_abs_diff_eq!(two_atom().path_drift(), 0.1 - 0.5 + 0.5, epsilon = 1e-15);
        let big = LevyModel::new(
            0.3,
            0.0,
            vec![JumpAtom {
                size: 2.0,
                intensity: 1.0,
            }],
        )
        .unwrap();
        assert_eq!(big.path_drift(), 0.3);
    }

    #[test]
    fn deterministic_drift_path() {
        let m = LevyModel::new(1.0, 0.0, vec![]).unwrap();
        let p = simulate_path(&m, 1.0, 64, 3).unwrap();
        for k in 0..=64 {
            assert_eq!(p.l_values[k], p.grid.time(k));
        }
    }

    #[test]
    fn bad_arguments_are_configuration_errors() {
        let m = LevyModel::gaussian(1.0);
        assert!(matches!(simulate_path(&m, 0.0, 4, 1), Err(Error::Configuration(_))));
        assert!(matches!(simulate_path(&m, 1.0, 0, 1), Err(Error::Configuration(_))));
    }

    #[test]
    fn same_seed_same_path() {
        let m = two_atom();
        assert_eq!(
            simulate_path(&m, 1.0, 128, 42).unwrap(),
            simulate_path(&m, 1.0, 128, 42).unwrap()
        );
        assert_ne!(
            simulate_path(&m, 1.0, 128, 42).unwrap(),
            simulate_path(&m, 1.0, 128, 43).unwrap()
        );
    }

    #[test]
    fn poisson_jump_count_mean() {
        let m = LevyModel::new(
            0.0,
            0.0,
            vec![JumpAtom {
                size: 1.0,
                intensity: 3.0,
            }],
        )
        .unwrap();
        let batch = LevyBatch {
            model: m,
            horizon: 1.0,
            n_steps: 4,
            n_paths: 100_000,
            root_seed: 11,
        };
        let counts: Moments = (0..batch.n_paths)
            .map(|i| batch.path(i).unwrap().jumps.len() as f64)
            .collect();
        assert!((counts.mean() - 3.0).abs() <= 3.0 * (3.0f64 / 1e5).sqrt());
    }

    #[test]
    fn gaussian_characteristic_function() {
        let batch = LevyBatch {
            model: LevyModel::gaussian(1.0),
            horizon: 1.0,
            n_steps: 8,
            n_paths: 20_000,
            root_seed: 5,
        };
        let r = verify_levy_characterization(&batch, &batch.model, &[0.0, 1.0], &[1.0]).unwrap();
        assert!(r.pass(), "{r:?}");
        assert_eq!(r.cells[0].mean_re, 1.0);
        assert_eq!(r.cells[0].z_re, 0.0);
        assert_abs_diff_eq!(r.cells[1].target_re, (-0.5f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn shifted_drift_fails_characteristic_check() {
        let batch = LevyBatch {
            model: two_atom(),
            horizon: 1.0,
            n_steps: 16,
            n_paths: 20_000,
            root_seed: 9,
        };
        let mut wrong = two_atom();
        wrong.beta += 1.0;
        let r = verify_levy_characterization(&batch, &wrong, &[-1.0, 1.0], &[0.5, 1.0]).unwrap();
        assert!(!r.pass());
    }

    #[test]
    fn small_batch_is_power_error() {
        let batch = LevyBatch {
            model: two_atom(),
            horizon: 1.0,
            n_steps: 4,
            n_paths: 100,
            root_seed: 1,
        };
        assert!(matches!(
            verify_levy_characterization(&batch, &batch.model, &[1.0], &[1.0]),
            Err(Error::StatisticalPower { .. })
        ));
    }

    #[test]
    fn off_grid_time_is_domain_error() {
        let batch = LevyBatch {
            model: two_atom(),
            horizon: 1.0,
            n_steps: 4,
            n_paths: 10_000,
            root_seed: 1,
        };
        assert!(matches!(
            verify_levy_characterization(&batch, &batch.model, &[1.0], &[0.3]),
            Err(Error::Domain(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn level_is_exact_sum_of_parts(seed in any::<u64>(), n in 1usize..200) {
            let p = simulate_path(&two_atom(), 1.0, n, seed).unwrap();
            prop_assert_eq!(p.l_values[0], 0.0);
            prop_assert_eq!(p.w_values[0], 0.0);
            prop_assert_eq!(&p.assemble_level(), &p.l_values);
            for w in p.jumps.windows(2) {
                prop_assert!(w[0].time < w[1].time);
            }
            for j in &p.jumps {
                prop_assert!(j.time > 0.0 && j.time <= 1.0);
                prop_assert!(p.grid.index_of(j.time).is_err());
            }
        }
    }
}
