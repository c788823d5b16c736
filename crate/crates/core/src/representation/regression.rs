use super::design::{
    assemble_design, fit_all, predictions, residual_from_moments, residual_stats, DesignSpec, FamilyContext,
    Integrator, LinearFit, ResidualStats, MIN_SCENARIOS,
};
use super::family::{MartingaleFamily, Member};
use super::features::FeatureSpec;
use super::payoff::{Payoff, TerminalFunction};
use crate::error::{require_power, Error, Result};
use crate::random_time::{EnlargedScenario, ScenarioSource};
use crate::scalar::Real;
use crate::stats::{fold_indexed, Moments};
use crate::stoch_calc::{stochastic_integral, ContinuousPart, GridProcess};

/// Integrands of a representation `ξ ≈ c + Z·W^σ + Σ V^n·X^{f_n} + U·M` on one scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegrandSet<T> {
    pub constant: T,
    pub z: GridProcess<T>,
    pub v: Vec<GridProcess<T>>,
    pub u: GridProcess<T>,
    /// Batch-level relative residual of the representation that produced these integrands.
    pub residual_rel: T,
}

impl<T: Real> IntegrandSet<T> {
    /// `c + Z·W^σ + Σ V^n·X^{f_n} + U·M` on the grid.
    pub fn reconstruct(&self, family: &MartingaleFamily<T>) -> Result<GridProcess<T>> {
        let mut total = stochastic_integral(&self.z, &family.wsigma)?;
        let mut add = |p: GridProcess<T>| {
            for (t, v) in total.values.iter_mut().zip(&p.values) {
                *t += *v;
            }
        };
        for (v, x) in self.v.iter().zip(&family.xf) {
            add(stochastic_integral(v, x)?);
        }
        add(stochastic_integral(&self.u, &family.m)?);
        for t in total.values.iter_mut() {
            *t += self.constant;
        }
        total.jumps.clear();
        total.continuous = ContinuousPart::FiniteVariation;
        Ok(total)
    }
}

/// Integrand grid of one fitted block: `Σ_b coef_b · feature_b(t_k)`.
pub fn block_integrand<T: Real>(
    features: &FeatureSpec<T>,
    coefficients: &[f64],
    scenario: &EnlargedScenario<T>,
) -> GridProcess<T> {
    let grid = scenario.path.grid;
    let sl = features.state_len();
    let mut state = vec![0.0; sl];
    let mut values = Vec::with_capacity(grid.len());
    for k in 0..grid.n_steps {
        features.state_values(scenario, k, &mut state);
        let mut v = 0.0;
        for (h, w) in features.hat_weights(&grid, k) {
            if w == 0.0 {
                continue;
            }
            let c = &coefficients[h * sl..(h + 1) * sl];
            v += w * c.iter().zip(&state).map(|(a, b)| a * b).sum::<f64>();
        }
        values.push(T::lit(v));
    }
    let last = *values.last().expect("at least one cell");
    values.push(last);
    GridProcess {
        grid,
        values,
        jumps: Vec::new(),
        continuous: ContinuousPart::FiniteVariation,
    }
}

/// Regression-based representation of a payoff panel against the family members.
#[derive(Clone, Debug)]
pub struct RegressionRepresentation<T> {
    pub spec: DesignSpec<T>,
    pub members: Vec<Member>,
    pub payoffs: Vec<Payoff<T>>,
    pub fits: Vec<LinearFit>,
    pub stats: Vec<ResidualStats>,
    /// In-sample fitted payoff per scenario, per payoff.
    pub predictions: Vec<Vec<f64>>,
}

impl<T: Real> RegressionRepresentation<T> {
    pub fn integrands(
        &self,
        payoff: usize,
        scenario: &EnlargedScenario<T>,
        family: &MartingaleFamily<T>,
    ) -> IntegrandSet<T> {
        let fit = &self.fits[payoff];
        let width = self.spec.features.len();
        let grid = scenario.path.grid;
        let mut z = GridProcess::zero(grid);
        let mut v = vec![GridProcess::zero(grid); family.xf.len()];
        let mut u = GridProcess::zero(grid);
        for (j, member) in self.members.iter().enumerate() {
            let k = block_integrand(&self.spec.features, fit.block(j, width), scenario);
            match member {
                Member::Wsigma => z = k,
                Member::Jump(i) => v[*i] = k,
                Member::Default => u = k,
            }
        }
        IntegrandSet {
            constant: T::lit(fit.intercept),
            z,
            v,
            u,
            residual_rel: T::lit(self.stats[payoff].residual_rel),
        }
    }
}

fn members_of<T: Real, S: ScenarioSource<T> + ?Sized>(source: &S, ctx: &FamilyContext<'_, T>) -> Result<Vec<Member>> {
    let first = source.scenario(0)?;
    Ok(ctx.family(&first)?.members())
}

/// Projects each payoff on `{W^σ, X^{f_n}, M}` with one coefficient block per member.
pub fn regression_representation<T: Real, S: ScenarioSource<T> + ?Sized>(
    payoffs: &[Payoff<T>],
    source: &S,
    ctx: &FamilyContext<'_, T>,
    features: &FeatureSpec<T>,
) -> Result<RegressionRepresentation<T>> {
    require_power(source.len(), MIN_SCENARIOS)?;
    let members = members_of(source, ctx)?;
    project(payoffs, source, ctx, features, members)
}

fn project<T: Real, S: ScenarioSource<T> + ?Sized>(
    payoffs: &[Payoff<T>],
    source: &S,
    ctx: &FamilyContext<'_, T>,
    features: &FeatureSpec<T>,
    members: Vec<Member>,
) -> Result<RegressionRepresentation<T>> {
    let spec = DesignSpec {
        features: features.clone(),
        slots: members.iter().map(|&m| Integrator::Member(m)).collect(),
        split: None,
    };
    let design = assemble_design(source, ctx, &spec, payoffs)?;
    let blocks: Vec<Vec<usize>> = (0..members.len()).map(|s| vec![s]).collect();
    let fits = fit_all(&design, &blocks, features.ridge)?;
    let mut stats = Vec::with_capacity(fits.len());
    let mut preds = Vec::with_capacity(fits.len());
    for (j, fit) in fits.iter().enumerate() {
        let p = predictions(&design, fit, &blocks)?;
        stats.push(residual_stats(&design, j, &p));
        preds.push(p);
    }
    Ok(RegressionRepresentation {
        spec,
        members,
        payoffs: payoffs.to_vec(),
        fits,
        stats,
        predictions: preds,
    })
}

/// The claim `g(L_T)·(1 − H_s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalClaim<T> {
    pub g: TerminalFunction<T>,
    pub s: T,
}

impl<T: Real> SurvivalClaim<T> {
    pub fn payoff(&self) -> Payoff<T> {
        Payoff::Survival {
            g: self.g.clone(),
            s: self.s,
        }
    }
}

/// Representation assembled from the reference-filtration representation of
/// `X'_t = E[g(L_T)A_s | F_t]`: with `Y^s` the process `Y` stopped at `s`,
/// the integrands are `Y^s_−Ẑ`, `Y^s_−V̂^n` and `−X'_−Y_−1_{[0,s]}`.
#[derive(Clone, Debug)]
pub struct ExplicitRepresentation<T> {
    pub claim: SurvivalClaim<T>,
    /// Fit of `g(L_T)A_s` on the reference members only.
    pub reference: RegressionRepresentation<T>,
    pub stats: ResidualStats,
    /// Reconstructed claim per scenario.
    pub predictions: Vec<f64>,
}

impl<T: Real> ExplicitRepresentation<T> {
    pub fn integrands(&self, scenario: &EnlargedScenario<T>, family: &MartingaleFamily<T>) -> Result<IntegrandSet<T>> {
        let grid = scenario.path.grid;
        let ks = grid.index_of(self.claim.s)?;
        let reference = self.reference.integrands(0, scenario, family);
        let x_prime = reference.reconstruct(family)?;
        let y = &scenario.y_values;
        let ys = |k: usize| y[k.min(ks)];
        let scale = |p: &GridProcess<T>| GridProcess {
            values: p.values.iter().enumerate().map(|(k, &v)| ys(k) * v).collect(),
            ..p.clone()
        };
        let u_values = (0..grid.len())
            .map(|k| if k < ks { -x_prime.values[k] * y[k] } else { T::zero() })
            .collect();
        Ok(IntegrandSet {
            constant: reference.constant,
            z: scale(&reference.z),
            v: reference.v.iter().map(scale).collect(),
            u: GridProcess {
                grid,
                values: u_values,
                jumps: Vec::new(),
                continuous: ContinuousPart::FiniteVariation,
            },
            residual_rel: T::lit(self.stats.residual_rel),
        })
    }
}

/// Explicit representation of `g(L_T)(1 − H_s)` for bounded `g`.
pub fn explicit_representation<T: Real, S: ScenarioSource<T> + ?Sized>(
    claim: &SurvivalClaim<T>,
    source: &S,
    ctx: &FamilyContext<'_, T>,
    reference_features: &FeatureSpec<T>,
) -> Result<ExplicitRepresentation<T>> {
    if !claim.g.is_bounded() {
        return Err(Error::Domain(format!(
            "terminal function {} is unbounded",
            claim.g.label()
        )));
    }
    if reference_features.uses_default_state() {
        return Err(Error::Configuration(
            "reference features must not depend on the default state".into(),
        ));
    }
    require_power(source.len(), MIN_SCENARIOS)?;
    let grid = source.scenario(0)?.path.grid;
    grid.index_of(claim.s)?;
    let members: Vec<Member> = members_of(source, ctx)?
        .into_iter()
        .filter(|m| *m != Member::Default)
        .collect();
    let weighted = Payoff::AzemaWeighted {
        g: claim.g.clone(),
        s: claim.s,
    };
    let reference = project(&[weighted], source, ctx, reference_features, members)?;
    let mut out = ExplicitRepresentation {
        claim: claim.clone(),
        reference,
        stats: residual_from_moments(&Moments::default(), &Moments::default()),
        predictions: Vec::new(),
    };
    let payoff = claim.payoff();
    let (y, e2, preds) = fold_indexed(
        source.len(),
        || (Moments::default(), Moments::default(), Vec::new()),
        |(y, e2, preds), i| {
            let scenario = source.scenario(i)?;
            let family = ctx.family(&scenario)?;
            let target = payoff.evaluate(&scenario, &family)?.to_f64_lossy();
            let fitted = out
                .integrands(&scenario, &family)?
                .reconstruct(&family)?
                .terminal()
                .to_f64_lossy();
            y.push(target);
            e2.push((target - fitted) * (target - fitted));
            preds.push(fitted);
            Ok(())
        },
        |(y, e2, preds), (py, pe, pp)| {
            y.merge(&py);
            e2.merge(&pe);
            preds.extend(pp);
        },
    )?;
    out.stats = residual_from_moments(&y, &e2);
    out.predictions = preds;
    Ok(out)
}
