use std::fmt;

use crate::error::{require_power, Error, Result};
use crate::random_time::{EnlargedScenario, ScenarioSource};
use crate::representation::{FamilyContext, MartingaleFamily};
use crate::scalar::Real;
use crate::stats::{fold_indexed, z_score, Moments};

pub const MIN_BATCH: usize = 10_000;
pub const Z_GATE: f64 = 4.0;

/// Processes that can be put through the increment test.
#[derive(Clone, Debug, PartialEq)]
pub enum TestedProcess {
    DefaultMartingale,
    /// `H` without its compensator; a negative control.
    UncompensatedDefault,
    Wsigma,
    Jump(usize),
    /// Real part of `exp(iuL_t − tψ(u))`.
    CharacteristicRe(f64),
    /// Imaginary part of `exp(iuL_t − tψ(u))`.
    CharacteristicIm(f64),
    Constant(f64),
}

impl fmt::Display for TestedProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestedProcess::DefaultMartingale => f.write_str("M"),
            TestedProcess::UncompensatedDefault => f.write_str("H"),
            TestedProcess::Wsigma => f.write_str("W"),
            TestedProcess::Jump(i) => write!(f, "Xf{}", i + 1),
            TestedProcess::CharacteristicRe(u) => write!(f, "ReZ(u={u})"),
            TestedProcess::CharacteristicIm(u) => write!(f, "ImZ(u={u})"),
            TestedProcess::Constant(c) => write!(f, "const({c})"),
        }
    }
}

impl TestedProcess {
    fn needs_family(&self) -> bool {
        matches!(self, TestedProcess::Jump(_))
    }

    fn value<T: Real>(
        &self,
        ctx: &FamilyContext<'_, T>,
        s: &EnlargedScenario<T>,
        family: Option<&MartingaleFamily<T>>,
        k: usize,
    ) -> Result<f64> {
        Ok(match self {
            TestedProcess::DefaultMartingale => s.m_values[k].to_f64_lossy(),
            TestedProcess::UncompensatedDefault => s.h_values[k].to_f64_lossy(),
            TestedProcess::Wsigma => s.path.w_values[k].to_f64_lossy(),
            TestedProcess::Jump(i) => family
                .and_then(|f| f.xf.get(*i))
                .ok_or_else(|| Error::Configuration(format!("no jump member {}", i + 1)))?
                .values[k]
                .to_f64_lossy(),
            TestedProcess::CharacteristicRe(u) | TestedProcess::CharacteristicIm(u) => {
                let psi = ctx.model.characteristic_exponent(T::lit(*u));
                let t = s.path.grid.time(k).to_f64_lossy();
                let (re, im) = (psi.re.to_f64_lossy(), psi.im.to_f64_lossy());
                let modulus = (-t * re).exp();
                let phase = u * s.path.l_values[k].to_f64_lossy() - t * im;
                if matches!(self, TestedProcess::CharacteristicRe(_)) {
                    modulus * phase.cos()
                } else {
                    modulus * phase.sin()
                }
            }
            TestedProcess::Constant(c) => *c,
        })
    }
}

/// Bounded test functions `φ`, evaluated at the start of each increment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestFunction {
    One,
    /// `1 − H_t`.
    Alive,
    TanhLevel,
    CosLevel,
    SinLevel,
}

impl TestFunction {
    pub const ALL: [TestFunction; 5] = [
        TestFunction::One,
        TestFunction::Alive,
        TestFunction::TanhLevel,
        TestFunction::CosLevel,
        TestFunction::SinLevel,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TestFunction::One => "1",
            TestFunction::Alive => "1-H",
            TestFunction::TanhLevel => "tanh(L)",
            TestFunction::CosLevel => "cos(L)",
            TestFunction::SinLevel => "sin(L)",
        }
    }

    fn eval<T: Real>(&self, s: &EnlargedScenario<T>, k: usize) -> f64 {
        let level = s.path.l_values[k].to_f64_lossy();
        match self {
            TestFunction::One => 1.0,
            TestFunction::Alive => 1.0 - s.h_values[k].to_f64_lossy(),
            TestFunction::TanhLevel => level.tanh(),
            TestFunction::CosLevel => level.cos(),
            TestFunction::SinLevel => level.sin(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IncrementCell {
    pub t0: f64,
    pub t1: f64,
    pub function: &'static str,
    pub mean: f64,
    pub se: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MartingaleTestReport {
    pub process: String,
    pub times: Vec<f64>,
    pub cells: Vec<IncrementCell>,
    pub n: usize,
    pub seed: u64,
    pub z_gate: f64,
}

impl MartingaleTestReport {
    pub fn max_abs_z(&self) -> f64 {
        self.cells.iter().map(|c| c.z.abs()).fold(0.0, f64::max)
    }

    pub fn pass(&self) -> bool {
        self.max_abs_z() <= self.z_gate
    }
}

/// z-scores of `Ê[φ(t_j)·(X_{t_{j+1}} − X_{t_j})]` for consecutive test times.
pub fn martingale_increment_test<T: Real, S: ScenarioSource<T> + ?Sized>(
    process: &TestedProcess,
    source: &S,
    ctx: &FamilyContext<'_, T>,
    test_functions: &[TestFunction],
    times: &[f64],
    seed: u64,
) -> Result<MartingaleTestReport> {
    let mut v = martingale_increment_tests(std::slice::from_ref(process), source, ctx, test_functions, times, seed)?;
    Ok(v.remove(0))
}

/// Several processes tested in one pass over the batch.
pub fn martingale_increment_tests<T: Real, S: ScenarioSource<T> + ?Sized>(
    processes: &[TestedProcess],
    source: &S,
    ctx: &FamilyContext<'_, T>,
    test_functions: &[TestFunction],
    times: &[f64],
    seed: u64,
) -> Result<Vec<MartingaleTestReport>> {
    require_power(source.len(), MIN_BATCH)?;
    if times.len() < 2 || test_functions.is_empty() || processes.is_empty() {
        return Err(Error::Configuration(
            "increment test needs >= 2 times, >= 1 test function and >= 1 process".into(),
        ));
    }
    let grid = source.scenario(0)?.path.grid;
    let idx: Vec<usize> = times.iter().map(|&t| grid.index_of(T::lit(t))).collect::<Result<_>>()?;
    if idx.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Configuration("test times must be increasing".into()));
    }
    let n_int = idx.len() - 1;
    let nf = test_functions.len();
    let per = n_int * nf;
    let needs_family = processes.iter().any(TestedProcess::needs_family);
    let acc = fold_indexed(
        source.len(),
        || vec![Moments::default(); processes.len() * per],
        |acc, i| {
            let s = source.scenario(i)?;
            let family = if needs_family { Some(ctx.family(&s)?) } else { None };
            for (q, process) in processes.iter().enumerate() {
                for j in 0..n_int {
                    let x0 = process.value(ctx, &s, family.as_ref(), idx[j])?;
                    let x1 = process.value(ctx, &s, family.as_ref(), idx[j + 1])?;
                    for (f, phi) in test_functions.iter().enumerate() {
                        acc[q * per + j * nf + f].push(phi.eval(&s, idx[j]) * (x1 - x0));
                    }
                }
            }
            Ok(())
        },
        |total, part| {
            for (t, p) in total.iter_mut().zip(&part) {
                t.merge(p);
            }
        },
    )?;
    Ok(processes
        .iter()
        .enumerate()
        .map(|(q, process)| {
            let mut cells = Vec::with_capacity(per);
            for j in 0..n_int {
                for (f, phi) in test_functions.iter().enumerate() {
                    let m = &acc[q * per + j * nf + f];
                    cells.push(IncrementCell {
                        t0: times[j],
                        t1: times[j + 1],
                        function: phi.name(),
                        mean: m.mean(),
                        se: m.std_err(),
                        z: z_score(m.mean(), 0.0, m.std_err()),
                    });
                }
            }
            MartingaleTestReport {
                process: process.to_string(),
                times: times.to_vec(),
                cells,
                n: source.len(),
                seed,
                z_gate: Z_GATE,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_sim::{LevyBatch, LevyModel};
    use crate::random_time::{EnlargedBatch, HazardSpec};
    use crate::representation::OrthonormalBasis;

    fn batch(n: usize) -> EnlargedBatch<f64, LevyBatch<f64>> {
        let paths = LevyBatch {
            model: LevyModel::gaussian(1.0),
            horizon: 1.0,
            n_steps: 32,
            n_paths: n,
            root_seed: 4,
        };
        EnlargedBatch::new(paths, &HazardSpec::constant(1.0), 4).unwrap()
    }

    fn run(p: TestedProcess, n: usize) -> Result<MartingaleTestReport> {
        let model = LevyModel::gaussian(1.0);
        let basis = OrthonormalBasis::canonical(&model);
        let ctx = FamilyContext {
            model: &model,
            basis: &basis,
        };
        martingale_increment_test(&p, &batch(n), &ctx, &TestFunction::ALL, &[0.0, 0.25, 0.5, 1.0], 4)
    }

    #[test]
    fn constant_process_has_zero_scores() {
        let r = run(TestedProcess::Constant(2.5), MIN_BATCH).unwrap();
        assert!(r.cells.iter().all(|c| c.z == 0.0 && c.mean == 0.0));
        assert!(r.pass());
    }

    #[test]
    fn brownian_and_default_martingale_pass() {
        assert!(run(TestedProcess::Wsigma, MIN_BATCH).unwrap().pass());
        assert!(run(TestedProcess::DefaultMartingale, MIN_BATCH).unwrap().pass());
        assert!(run(TestedProcess::CharacteristicRe(1.0), MIN_BATCH).unwrap().pass());
    }

    #[test]
    fn uncompensated_default_fails() {
        let r = run(TestedProcess::UncompensatedDefault, MIN_BATCH).unwrap();
        assert!(r.max_abs_z() > 10.0, "{}", r.max_abs_z());
    }

    #[test]
    fn joint_pass_matches_single_runs() {
        let model = LevyModel::gaussian(1.0);
        let basis = OrthonormalBasis::canonical(&model);
        let ctx = FamilyContext {
            model: &model,
            basis: &basis,
        };
        let procs = [TestedProcess::Wsigma, TestedProcess::UncompensatedDefault];
        let joint =
            martingale_increment_tests(&procs, &batch(MIN_BATCH), &ctx, &TestFunction::ALL, &[0.0, 0.5, 1.0], 4)
                .unwrap();
        for (p, r) in procs.iter().zip(&joint) {
            let single =
                martingale_increment_test(p, &batch(MIN_BATCH), &ctx, &TestFunction::ALL, &[0.0, 0.5, 1.0], 4).unwrap();
            assert_eq!(&single, r);
        }
    }

    #[test]
    fn small_batch_is_a_power_error() {
        assert!(matches!(
            run(TestedProcess::Wsigma, 100),
            Err(Error::StatisticalPower { .. })
        ));
    }
}
