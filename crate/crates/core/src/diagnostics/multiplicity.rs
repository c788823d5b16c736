use std::borrow::Cow;
use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{require_power, Error, Result};
use crate::levy_sim::{Clock, LevyModel, PathBundle, PathSource};
use crate::random_time::{cantor_function, CantorComplement, EnlargedBatch, HazardClass, HazardSpec, ScenarioSource};
use crate::representation::{
    assemble_design, fit_all, predictions, residual_stats, Carrier, DesignSpec, FamilyContext, FeatureSpec, Integrator,
    Member, OrthonormalBasis, Payoff, PayoffClass, MIN_SCENARIOS,
};
use crate::rng::{self, TAG_PATH};
use crate::scalar::Real;
use crate::stats::{fold_indexed, Moments};
use crate::stoch_calc::Grid;

use super::martingale::Z_GATE;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    MultiplicityOne,
    MultiplicityTwo,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::MultiplicityOne => "multiplicity-one consistent",
            Verdict::MultiplicityTwo => "multiplicity-two consistent",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiplicityConfig<T> {
    pub features: FeatureSpec<T>,
    /// Largest `r_single − r_pair` (relative to the payoff spread) still read as multiplicity one.
    pub tolerance: f64,
    /// Smallest `r_single − r_pair` read as multiplicity two.
    pub gap: f64,
}

impl<T: Real> Default for MultiplicityConfig<T> {
    fn default() -> Self {
        MultiplicityConfig {
            features: FeatureSpec::default_enlarged(),
            tolerance: 0.05,
            gap: 0.10,
        }
    }
}

/// Residuals of one payoff, all relative to its standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct SingularityRow {
    pub payoff: String,
    pub payoff_sd: f64,
    pub r_pair: f64,
    pub se_pair: f64,
    /// Free integrand against `Z = W^σ + M`.
    pub r_free: f64,
    pub se_free: f64,
    /// `1_D U + 1_{D^c} V` built from the pair fit, when a split applies.
    pub r_splice: Option<f64>,
    pub se_splice: Option<f64>,
}

impl SingularityRow {
    pub fn r_single(&self) -> f64 {
        self.r_splice.map_or(self.r_free, |s| s.min(self.r_free))
    }

    fn se_single(&self) -> f64 {
        match (self.r_splice, self.se_splice) {
            (Some(s), Some(se)) if s < self.r_free => se,
            _ => self.se_free,
        }
    }

    pub fn excess(&self) -> f64 {
        self.r_single() - self.r_pair
    }

    /// The pair can only do better than a single integrator.
    pub fn ordering_ok(&self) -> bool {
        self.r_pair <= self.r_single() + Z_GATE * self.se_single()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SingularityReport {
    pub hazard_class: HazardClass,
    pub split: Option<String>,
    pub carriers: Option<(Carrier, Carrier)>,
    pub rows: Vec<SingularityRow>,
    pub tolerance: f64,
    pub gap: f64,
    pub verdict: Verdict,
    pub n: usize,
}

impl SingularityReport {
    pub fn ordering_ok(&self) -> bool {
        self.rows.iter().all(SingularityRow::ordering_ok)
    }

    pub fn row(&self, payoff: &str) -> Option<&SingularityRow> {
        self.rows.iter().find(|r| r.payoff == payoff)
    }
}

fn check_panel<T: Real>(panel: &[Payoff<T>]) -> Result<()> {
    let has = |c: PayoffClass| panel.iter().any(|p| p.class() == c);
    let missing: Vec<&str> = [
        (PayoffClass::Reference, "a reference functional"),
        (PayoffClass::Default, "a default functional"),
        (PayoffClass::Mixed, "a mixed g(L_T)(1-H_s) payoff"),
    ]
    .iter()
    .filter(|(c, _)| !has(*c))
    .map(|(_, name)| *name)
    .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::Configuration(format!(
            "payoff panel lacks {}",
            missing.join(", ")
        )))
    }
}

/// Carriers of `W^σ` and `M` with respect to `d`, read from the first scenarios.
fn carriers<T: Real, S: ScenarioSource<T> + ?Sized>(
    source: &S,
    ctx: &FamilyContext<'_, T>,
    d: &CantorComplement<T>,
) -> Result<(Carrier, Carrier)> {
    let merge = |a: Option<Carrier>, b: Carrier| match a {
        None => b,
        Some(a) if a == b => a,
        Some(_) => Carrier::Both,
    };
    let (mut w, mut m) = (None, None);
    for i in 0..source.len().min(64) {
        let fam = ctx.family(&*source.scenario(i)?)?;
        w = Some(merge(w, fam.carrier(Member::Wsigma, d)?));
        m = Some(merge(m, fam.carrier(Member::Default, d)?));
    }
    Ok((w.unwrap_or(Carrier::Both), m.unwrap_or(Carrier::Both)))
}

/// Pair `{W^σ, M}` against the single combined integrator `Z = W^σ + M`.
///
/// Design slots: `W`, `M`, `1_D Z`, `1_{D^c} Z`. The pair uses blocks `[W]`,
/// `[M]`; the free single integrand uses `[W + M]`; the splice evaluates the
/// pair coefficients on the restricted slots matching each member's carrier.
pub fn multiplicity_experiment<T: Real, S: ScenarioSource<T> + ?Sized>(
    source: &S,
    ctx: &FamilyContext<'_, T>,
    hazard: &HazardSpec<T>,
    panel: &[Payoff<T>],
    config: &MultiplicityConfig<T>,
) -> Result<SingularityReport> {
    check_panel(panel)?;
    require_power(source.len(), MIN_SCENARIOS)?;
    if ctx.model.total_intensity() > T::zero() {
        return Err(Error::Configuration(
            "the multiplicity experiment needs a model without jumps".into(),
        ));
    }
    let class = hazard.class();
    let d = match hazard.splitting_set()? {
        Some(d) => d,
        None => {
            let s_max = source.scenario(0)?.path.clock_horizon();
            match s_max {
                Some(s) => CantorComplement::new(s, hazard.cantor_depth)?,
                None => CantorComplement::new(source.scenario(0)?.path.grid.horizon, hazard.cantor_depth)?,
            }
        }
    };
    let (cw, cm) = carriers(source, ctx, &d)?;
    let split_slots = match (cw, cm) {
        (Carrier::Inside, Carrier::Outside) => Some((2usize, 3usize)),
        (Carrier::Outside, Carrier::Inside) => Some((3, 2)),
        _ => None,
    };
    let z = vec![Member::Wsigma, Member::Default];
    let spec = DesignSpec {
        features: config.features.clone(),
        slots: vec![
            Integrator::Member(Member::Wsigma),
            Integrator::Member(Member::Default),
            Integrator::Restricted {
                members: z.clone(),
                inside: true,
            },
            Integrator::Restricted {
                members: z,
                inside: false,
            },
        ],
        split: Some(d),
    };
    let design = assemble_design(source, ctx, &spec, panel)?;
    let pair_blocks = vec![vec![0], vec![1]];
    let pair = fit_all(&design, &pair_blocks, config.features.ridge)?;
    let free = fit_all(&design, &[vec![0, 1]], config.features.ridge)?;
    let mut rows = Vec::with_capacity(panel.len());
    for (j, p) in panel.iter().enumerate() {
        let rp = residual_stats(&design, j, &predictions(&design, &pair[j], &pair_blocks)?);
        let rf = residual_stats(&design, j, &predictions(&design, &free[j], &[vec![0, 1]])?);
        let rs = match split_slots {
            Some((sw, sm)) => Some(residual_stats(
                &design,
                j,
                &predictions(&design, &pair[j], &[vec![sw], vec![sm]])?,
            )),
            None => None,
        };
        rows.push(SingularityRow {
            payoff: p.name(),
            payoff_sd: rp.payoff_sd,
            r_pair: rp.residual_rel,
            se_pair: rp.se,
            r_free: rf.residual_rel,
            se_free: rf.se,
            r_splice: rs.map(|r| r.residual_rel),
            se_splice: rs.map(|r| r.se),
        });
    }
    let live: Vec<&SingularityRow> = rows.iter().filter(|r| r.payoff_sd > 0.0).collect();
    let verdict = if live.iter().all(|r| r.excess() <= config.tolerance) {
        Verdict::MultiplicityOne
    } else if live.iter().any(|r| r.excess() >= config.gap) {
        Verdict::MultiplicityTwo
    } else {
        Verdict::Inconclusive
    };
    Ok(SingularityReport {
        hazard_class: class,
        split: Some(d.describe()),
        carriers: Some((cw, cm)),
        rows,
        tolerance: config.tolerance,
        gap: config.gap,
        verdict,
        n: source.len(),
    })
}

impl<T: Real> PathBundle<T> {
    fn clock_horizon(&self) -> Option<T> {
        match self.clock {
            Clock::Calendar => None,
            Clock::Cantor { s_max } => Some(s_max),
        }
    }
}

/// Paths of `X_t = W_{C(t/s_max)}`: Brownian motion run on the Cantor clock,
/// with exact Gaussian increments `√(σ²ΔC_k)·ξ_k`.
#[derive(Clone, Debug)]
pub struct TimeChangedBatch<T> {
    pub sigma2: T,
    pub grid: Grid<T>,
    pub s_max: T,
    pub n_paths: usize,
    pub root_seed: u64,
    clock: Vec<f64>,
}

impl<T: Real> TimeChangedBatch<T> {
    pub fn new(sigma2: T, grid: Grid<T>, s_max: T, depth: u32, n_paths: usize, root_seed: u64) -> Result<Self> {
        if sigma2 < T::zero() || s_max <= T::zero() {
            return Err(Error::Configuration(
                "time change needs sigma2 >= 0 and s_max > 0".into(),
            ));
        }
        let clock = (0..grid.len())
            .map(|k| cantor_function((grid.time(k) / s_max).min(T::one()), depth).map(|c| c.to_f64_lossy()))
            .collect::<Result<_>>()?;
        Ok(TimeChangedBatch {
            sigma2,
            grid,
            s_max,
            n_paths,
            root_seed,
            clock,
        })
    }

    /// `C(t_k / s_max)` on the grid.
    pub fn clock_values(&self) -> &[f64] {
        &self.clock
    }

    pub fn model(&self) -> LevyModel<T> {
        LevyModel::gaussian(self.sigma2)
    }
}

impl<T: Real> PathSource<T> for TimeChangedBatch<T> {
    fn len(&self) -> usize {
        self.n_paths
    }

    fn path(&self, i: usize) -> Result<Cow<'_, PathBundle<T>>> {
        let seed = rng::stream_seed(self.root_seed, TAG_PATH, i as u64);
        let mut g = rng::generator(seed);
        let s2 = self.sigma2.to_f64_lossy();
        let mut w = T::zero();
        let mut values = Vec::with_capacity(self.grid.len());
        values.push(w);
        for c in self.clock.windows(2) {
            let xi: f64 = g.sample(StandardNormal);
            let dc = c[1] - c[0];
            if dc > 0.0 {
                w += T::lit((s2 * dc).sqrt() * xi);
            }
            values.push(w);
        }
        Ok(Cow::Owned(PathBundle {
            grid: self.grid,
            l_values: values.clone(),
            w_values: values,
            jumps: Vec::new(),
            drift: T::zero(),
            seed,
            clock: Clock::Cantor { s_max: self.s_max },
        }))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeChangeReport {
    /// Batch mean of the realized `[X, X]_T`.
    pub qv_mean: f64,
    pub qv_se: f64,
    /// `σ²·C(T / s_max)`.
    pub qv_target: f64,
    /// Realized `[X, X]_T` of the first path.
    pub qv_first_path: f64,
    /// Cells where the clock is flat, summed over the batch.
    pub plateau_cells: usize,
    /// Of those, cells where `X` moved.
    pub plateau_moves: usize,
    pub singularity: SingularityReport,
}

impl TimeChangeReport {
    pub fn qv_rel_err(&self) -> f64 {
        (self.qv_mean - self.qv_target).abs() / self.qv_target.abs().max(f64::MIN_POSITIVE)
    }
}

/// Enlarges the time-changed batch by an absolutely continuous hazard and
/// runs the multiplicity experiment with `Z = X + M`.
pub fn time_change_example<T: Real>(
    batch: &TimeChangedBatch<T>,
    hazard: &HazardSpec<T>,
    panel: &[Payoff<T>],
    config: &MultiplicityConfig<T>,
    theta_root: u64,
) -> Result<TimeChangeReport> {
    if hazard.class() != HazardClass::AbsolutelyContinuous {
        return Err(Error::Configuration(
            "the time-change example needs an absolutely continuous hazard".into(),
        ));
    }
    require_power(batch.len(), MIN_SCENARIOS)?;
    let clock = batch.clock_values();
    let (qv, cells, moves) = fold_indexed(
        batch.len(),
        || (Moments::default(), 0usize, 0usize),
        |acc, i| {
            let p = batch.path(i)?;
            let mut q = 0.0;
            for (k, w) in p.w_values.windows(2).enumerate() {
                let dx = (w[1] - w[0]).to_f64_lossy();
                q += dx * dx;
                if clock[k + 1] == clock[k] {
                    acc.1 += 1;
                    if dx != 0.0 {
                        acc.2 += 1;
                    }
                }
            }
            acc.0.push(q);
            Ok(())
        },
        |a, b| {
            a.0.merge(&b.0);
            a.1 += b.1;
            a.2 += b.2;
        },
    )?;
    let first = batch.path(0)?;
    let qv_first_path = first
        .w_values
        .windows(2)
        .map(|w| (w[1] - w[0]).to_f64_lossy().powi(2))
        .sum();
    let model = batch.model();
    let basis = OrthonormalBasis::canonical(&model);
    let ctx = FamilyContext {
        model: &model,
        basis: &basis,
    };
    let scenarios = EnlargedBatch::new(batch, hazard, theta_root)?;
    let singularity = multiplicity_experiment(&scenarios, &ctx, hazard, panel, config)?;
    Ok(TimeChangeReport {
        qv_mean: qv.mean(),
        qv_se: qv.std_err(),
        qv_target: batch.sigma2.to_f64_lossy() * clock[clock.len() - 1],
        qv_first_path,
        plateau_cells: cells,
        plateau_moves: moves,
        singularity,
    })
}
