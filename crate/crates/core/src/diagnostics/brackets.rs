use num_complex::Complex;

use crate::error::{require_power, Error, Result};
use crate::levy_sim::CharacteristicCell;
use crate::random_time::{check_identities, IdentityCheck, PreparedHazard, ScenarioSource};
use crate::representation::{ExplicitRepresentation, FamilyContext, Member, RegressionRepresentation};
use crate::scalar::Real;
use crate::stats::{fold_indexed, z_score, Moments};
use crate::stoch_calc::quadratic_covariation;

use super::martingale::{MIN_BATCH, Z_GATE};

/// Mean and standard error of a sample with its z-score against a target.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ZCell {
    pub mean: f64,
    pub se: f64,
    pub target: f64,
    pub z: f64,
}

impl ZCell {
    pub fn from_moments(m: &Moments, target: f64) -> Self {
        ZCell {
            mean: m.mean(),
            se: m.std_err(),
            target,
            z: z_score(m.mean(), target, m.std_err()),
        }
    }
}

/// Worst pathwise identity deviations over a batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdentitySweep {
    pub n: usize,
    pub worst: IdentityCheck,
    pub tolerance: f64,
}

impl IdentitySweep {
    pub fn pass(&self) -> bool {
        self.worst.max_rel() <= self.tolerance && self.worst.structural_ok()
    }
}

/// Runs [`check_identities`] on every scenario.
pub fn identity_sweep<T: Real, S: ScenarioSource<T> + ?Sized>(
    hazard: &PreparedHazard<T>,
    source: &S,
    tolerance: f64,
) -> Result<IdentitySweep> {
    let worst = fold_indexed(
        source.len(),
        || IdentityCheck {
            a_nonincreasing: true,
            a_positive_before_default: true,
            single_unit_jump: true,
            ..Default::default()
        },
        |acc, i| {
            let s = source.scenario(i)?;
            acc.merge(&check_identities(hazard, &s)?);
            Ok(())
        },
        |a, b| a.merge(&b),
    )?;
    Ok(IdentitySweep {
        n: source.len(),
        worst,
        tolerance,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BracketReport {
    pub n: usize,
    /// Paths where the computed `[M, M]_T` differs from `H_T`.
    pub mm_mismatches: usize,
    pub max_abs_mm_minus_h: f64,
    /// `M_T² − Λ^G_T`, paired per path, against 0.
    pub m2_minus_lambda: ZCell,
    /// `M_T² − H_T`, paired per path, against 0.
    pub m2_minus_h: ZCell,
    pub m_terminal: ZCell,
}

impl BracketReport {
    pub fn pass(&self) -> bool {
        self.mm_mismatches == 0
            && self.m2_minus_lambda.z.abs() <= Z_GATE
            && self.m2_minus_h.z.abs() <= Z_GATE
            && self.m_terminal.z.abs() <= Z_GATE
    }
}

/// `[M,M]_T = H_T` per path, and `E[M_T²] = E[Λ^G_T] = E[H_T]`.
pub fn bracket_identities<T: Real, S: ScenarioSource<T> + ?Sized>(source: &S) -> Result<BracketReport> {
    require_power(source.len(), MIN_BATCH)?;
    #[derive(Default)]
    struct Acc {
        mismatches: usize,
        max_dev: f64,
        m2l: Moments,
        m2h: Moments,
        m: Moments,
    }
    let acc = fold_indexed(
        source.len(),
        Acc::default,
        |acc, i| {
            let s = source.scenario(i)?;
            let m = s.m_process();
            let mm = quadratic_covariation(&m, &m)?.bracket.terminal();
            let n = s.path.grid.n_steps;
            let h = s.h_values[n];
            if mm != h {
                acc.mismatches += 1;
            }
            acc.max_dev = acc.max_dev.max((mm - h).abs().to_f64_lossy());
            let mt = s.m_values[n].to_f64_lossy();
            acc.m2l.push(mt * mt - s.lambda_values[n].to_f64_lossy());
            acc.m2h.push(mt * mt - h.to_f64_lossy());
            acc.m.push(mt);
            Ok(())
        },
        |a, b| {
            a.mismatches += b.mismatches;
            a.max_dev = a.max_dev.max(b.max_dev);
            a.m2l.merge(&b.m2l);
            a.m2h.merge(&b.m2h);
            a.m.merge(&b.m);
        },
    )?;
    Ok(BracketReport {
        n: source.len(),
        mm_mismatches: acc.mismatches,
        max_abs_mm_minus_h: acc.max_dev,
        m2_minus_lambda: ZCell::from_moments(&acc.m2l, 0.0),
        m2_minus_h: ZCell::from_moments(&acc.m2h, 0.0),
        m_terminal: ZCell::from_moments(&acc.m, 0.0),
    })
}

/// Terminal product statistics of one pair of family members.
#[derive(Clone, Debug, PartialEq)]
pub struct PairCell {
    pub first: String,
    pub second: String,
    /// `Ê[P_T Q_T]` against 0.
    pub product: ZCell,
    /// `Ê[P_T Q_T] − Ê[P_T]Ê[Q_T]`.
    pub covariance: f64,
    /// Mean of the computed bracket `[P, Q]_T`.
    pub bracket_mean: f64,
    /// Common jump times of the two members, summed over the batch.
    pub cojumps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrthogonalityReport {
    pub n: usize,
    pub members: Vec<String>,
    pub pairs: Vec<PairCell>,
    /// Scenarios where τ coincides with a jump time of the path.
    pub default_on_jump: usize,
}

impl OrthogonalityReport {
    pub fn max_abs_z(&self) -> f64 {
        self.pairs.iter().map(|p| p.product.z.abs()).fold(0.0, f64::max)
    }

    pub fn cojump_events(&self) -> usize {
        self.default_on_jump + self.pairs.iter().map(|p| p.cojumps).sum::<usize>()
    }

    pub fn pass(&self) -> bool {
        self.max_abs_z() <= Z_GATE && self.cojump_events() == 0
    }
}

/// Pairwise terminal products of distinct family members and the co-jump audit.
pub fn family_orthogonality<T: Real, S: ScenarioSource<T> + ?Sized>(
    source: &S,
    ctx: &FamilyContext<'_, T>,
) -> Result<OrthogonalityReport> {
    require_power(source.len(), MIN_BATCH)?;
    let members = ctx.family(&*source.scenario(0)?)?.members();
    let pairs: Vec<(Member, Member)> = members
        .iter()
        .enumerate()
        .flat_map(|(a, &p)| members[a + 1..].iter().map(move |&q| (p, q)))
        .collect();
    let nm = members.len();
    let np = pairs.len();
    // Per member: terminal moments; per pair: product moments, bracket sum, cojumps.
    type Acc = (Vec<Moments>, Vec<Moments>, Vec<f64>, Vec<usize>, usize);
    let acc: Acc = fold_indexed(
        source.len(),
        || {
            (
                vec![Moments::default(); nm],
                vec![Moments::default(); np],
                vec![0.0; np],
                vec![0; np],
                0,
            )
        },
        |acc, i| {
            let s = source.scenario(i)?;
            let fam = ctx.family(&s)?;
            let terminal: Vec<f64> = members
                .iter()
                .map(|&m| fam.process(m).map(|p| p.terminal().to_f64_lossy()))
                .collect::<Result<_>>()?;
            for (m, &v) in acc.0.iter_mut().zip(&terminal) {
                m.push(v);
            }
            for (c, &(p, q)) in pairs.iter().enumerate() {
                let (a, b) = (
                    members.iter().position(|&m| m == p).unwrap(),
                    members.iter().position(|&m| m == q).unwrap(),
                );
                acc.1[c].push(terminal[a] * terminal[b]);
                let cov = quadratic_covariation(fam.process(p)?, fam.process(q)?)?;
                acc.2[c] += cov.bracket.terminal().to_f64_lossy();
                acc.3[c] += cov.bracket.jumps.len();
            }
            if let Some(tau) = s.default_time() {
                if s.path.jumps.iter().any(|j| j.time == tau) {
                    acc.4 += 1;
                }
            }
            Ok(())
        },
        |a, b| {
            for (x, y) in a.0.iter_mut().zip(&b.0) {
                x.merge(y);
            }
            for (x, y) in a.1.iter_mut().zip(&b.1) {
                x.merge(y);
            }
            for (x, y) in a.2.iter_mut().zip(&b.2) {
                *x += y;
            }
            for (x, y) in a.3.iter_mut().zip(&b.3) {
                *x += y;
            }
            a.4 += b.4;
        },
    )?;
    let n = source.len() as f64;
    let cells = pairs
        .iter()
        .enumerate()
        .map(|(c, &(p, q))| {
            let (a, b) = (
                members.iter().position(|&m| m == p).unwrap(),
                members.iter().position(|&m| m == q).unwrap(),
            );
            PairCell {
                first: p.to_string(),
                second: q.to_string(),
                product: ZCell::from_moments(&acc.1[c], 0.0),
                covariance: acc.1[c].mean() - acc.0[a].mean() * acc.0[b].mean(),
                bracket_mean: acc.2[c] / n,
                cojumps: acc.3[c],
            }
        })
        .collect();
    Ok(OrthogonalityReport {
        n: source.len(),
        members: members.iter().map(|m| m.to_string()).collect(),
        pairs: cells,
        default_on_jump: acc.4,
    })
}

/// Post-default increments of `L`: `Ê[e^{iu(L_T − L_t)} | τ ≤ t]` against `e^{(T−t)ψ(u)}`.
pub fn levy_after_default<T: Real, S: ScenarioSource<T> + ?Sized>(
    source: &S,
    ctx: &FamilyContext<'_, T>,
    u_grid: &[f64],
    t: f64,
) -> Result<Vec<CharacteristicCell>> {
    let grid = source.scenario(0)?.path.grid;
    let k = grid.index_of(T::lit(t))?;
    let n = grid.n_steps;
    let horizon = grid.horizon.to_f64_lossy();
    let nu = u_grid.len();
    let acc = fold_indexed(
        source.len(),
        || vec![(Moments::default(), Moments::default()); nu],
        |acc, i| {
            let s = source.scenario(i)?;
            if s.h_values[k] == T::one() {
                let inc = (s.path.l_values[n] - s.path.l_values[k]).to_f64_lossy();
                for (cell, &u) in acc.iter_mut().zip(u_grid) {
                    cell.0.push((u * inc).cos());
                    cell.1.push((u * inc).sin());
                }
            }
            Ok(())
        },
        |a, b| {
            for (x, y) in a.iter_mut().zip(&b) {
                x.0.merge(&y.0);
                x.1.merge(&y.1);
            }
        },
    )?;
    let defaulted = acc.first().map_or(0, |c| c.0.count() as usize);
    require_power(defaulted, MIN_BATCH / 10)?;
    Ok(u_grid
        .iter()
        .zip(&acc)
        .map(|(&u, (re, im))| {
            let psi = ctx.model.characteristic_exponent(T::lit(u));
            let target = (Complex::new(psi.re.to_f64_lossy(), psi.im.to_f64_lossy()) * (horizon - t)).exp();
            CharacteristicCell {
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
            }
        })
        .collect())
}

/// L² distance between two reconstructions of the same payoff, relative to
/// the payoff spread, against the sum of their residuals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Agreement {
    pub distance_rel: f64,
    pub se: f64,
    pub allowance: f64,
}

impl Agreement {
    pub fn pass(&self) -> bool {
        self.distance_rel <= self.allowance + Z_GATE * self.se
    }
}

/// Compares the explicit reconstruction with payoff `j` of a regression fitted on the same batch.
pub fn representation_agreement<T: Real>(
    explicit: &ExplicitRepresentation<T>,
    regression: &RegressionRepresentation<T>,
    j: usize,
) -> Result<Agreement> {
    let other = regression
        .predictions
        .get(j)
        .ok_or_else(|| Error::Configuration(format!("regression has no payoff {j}")))?;
    if other.len() != explicit.predictions.len() {
        return Err(Error::Structural(
            "reconstructions come from batches of different size".into(),
        ));
    }
    let d2: Moments = explicit
        .predictions
        .iter()
        .zip(other)
        .map(|(a, b)| (a - b) * (a - b))
        .collect();
    let sd = explicit.stats.payoff_sd.max(crate::representation::RESIDUAL_FLOOR);
    let rms = d2.mean().max(0.0).sqrt();
    let se = if rms > 0.0 {
        d2.std_err() / (2.0 * rms * sd)
    } else {
        0.0
    };
    let r = &regression.stats[j];
    Ok(Agreement {
        distance_rel: rms / sd,
        se: (se * se + explicit.stats.se.powi(2) + r.se.powi(2)).sqrt(),
        allowance: explicit.stats.residual_rel + r.residual_rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_sim::{JumpAtom, LevyBatch, LevyModel};
    use crate::random_time::{EnlargedBatch, HazardSpec};
    use crate::representation::OrthonormalBasis;

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

    fn batch(spec: &HazardSpec<f64>) -> EnlargedBatch<f64, LevyBatch<f64>> {
        let paths = LevyBatch {
            model: model(),
            horizon: 1.0,
            n_steps: 32,
            n_paths: MIN_BATCH,
            root_seed: 12,
        };
        EnlargedBatch::new(paths, spec, 12).unwrap()
    }

    #[test]
    fn brackets_hold_for_both_hazard_types() {
        for spec in [HazardSpec::constant(1.0), HazardSpec::staircase(5.0, 1.0)] {
            let r = bracket_identities(&batch(&spec)).unwrap();
            assert_eq!(r.mm_mismatches, 0);
            assert!(r.pass(), "{r:?}");
        }
    }

    #[test]
    fn identities_sweep_is_exact() {
        let b = batch(&HazardSpec::staircase(5.0, 1.0));
        let r = identity_sweep(&b.hazard, &b, 1e-10).unwrap();
        assert!(r.pass(), "{r:?}");
    }

    #[test]
    fn family_is_orthogonal_without_cojumps() {
        let m = model();
        let basis = OrthonormalBasis::canonical(&m);
        let ctx = FamilyContext {
            model: &m,
            basis: &basis,
        };
        let r = family_orthogonality(&batch(&HazardSpec::constant(1.0)), &ctx).unwrap();
        assert_eq!(r.pairs.len(), 6);
        assert_eq!(r.cojump_events(), 0);
        assert!(r.pass(), "max z {}", r.max_abs_z());
        // Distinct canonical jump members have zero bracket on every path.
        assert!(r.pairs.iter().all(|p| p.bracket_mean == 0.0));
    }

    #[test]
    fn post_default_increments_keep_the_exponent() {
        let m = model();
        let basis = OrthonormalBasis::canonical(&m);
        let ctx = FamilyContext {
            model: &m,
            basis: &basis,
        };
        let cells = levy_after_default(&batch(&HazardSpec::constant(2.0)), &ctx, &[0.5, 1.0, 2.0], 0.5).unwrap();
        assert!(cells.iter().all(|c| c.max_abs_z() <= Z_GATE), "{cells:?}");
    }
}
