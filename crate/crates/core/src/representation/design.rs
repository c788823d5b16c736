//! Least-squares projection of payoffs on stochastic integrals.
//!
//! Each integrator contributes one column per feature: the sum over cells
//! of `feature(t_k)·ΔX_k`, i.e. the stochastic integral of that feature.
//! One global fit over the whole batch then estimates the integrand as a
//! linear combination of features.

use nalgebra::{DMatrix, DVector};

use super::basis::OrthonormalBasis;
use super::family::{build_family, MartingaleFamily, Member};
use super::features::FeatureSpec;
use super::payoff::Payoff;
use crate::error::{Error, Result};
use crate::levy_sim::LevyModel;
use crate::random_time::{CantorComplement, EnlargedScenario, ScenarioSource};
use crate::scalar::Real;
use crate::stats::{fold_indexed, Moments, CHUNK};

/// Model and basis needed to turn a scenario into a family.
#[derive(Clone, Copy, Debug)]
pub struct FamilyContext<'a, T> {
    pub model: &'a LevyModel<T>,
    pub basis: &'a OrthonormalBasis<T>,
}

impl<T: Real> FamilyContext<'_, T> {
    pub fn family(&self, scenario: &EnlargedScenario<T>) -> Result<MartingaleFamily<T>> {
        build_family(self.model, self.basis, scenario)
    }
}

/// What a design slot integrates against.
#[derive(Clone, Debug, PartialEq)]
pub enum Integrator {
    Member(Member),
    /// Sum of members.
    Sum(Vec<Member>),
    /// Sum of members restricted to the splitting set (`inside`) or its complement.
    Restricted {
        members: Vec<Member>,
        inside: bool,
    },
}

impl Integrator {
    pub fn label(&self) -> String {
        let join = |ms: &[Member]| ms.iter().map(|m| m.to_string()).collect::<Vec<_>>().join("+");
        match self {
            Integrator::Member(m) => m.to_string(),
            Integrator::Sum(ms) => join(ms),
            Integrator::Restricted { members, inside: true } => format!("1_D({})", join(members)),
            Integrator::Restricted { members, inside: false } => format!("1_Dc({})", join(members)),
        }
    }

    fn increments<T: Real>(
        &self,
        family: &MartingaleFamily<T>,
        split: Option<&CantorComplement<T>>,
    ) -> Result<Vec<f64>> {
        let plain = |m: Member| -> Result<Vec<f64>> {
            let p = family.process(m)?;
            Ok(p.values.windows(2).map(|w| (w[1] - w[0]).to_f64_lossy()).collect())
        };
        match self {
            Integrator::Member(m) => plain(*m),
            Integrator::Sum(ms) => {
                let mut out = vec![0.0; family.wsigma.grid.n_steps];
                for m in ms {
                    for (o, d) in out.iter_mut().zip(plain(*m)?) {
                        *o += d;
                    }
                }
                Ok(out)
            }
            Integrator::Restricted { members, inside } => {
                let d = split
                    .ok_or_else(|| Error::Configuration("restricted integrator without a splitting set".into()))?;
                let mut out = vec![0.0; family.wsigma.grid.n_steps];
                for m in members {
                    for (o, (a, b)) in out.iter_mut().zip(family.split_increments(*m, d)?) {
                        *o += if *inside { a } else { b }.to_f64_lossy();
                    }
                }
                Ok(out)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesignSpec<T> {
    pub features: FeatureSpec<T>,
    pub slots: Vec<Integrator>,
    pub split: Option<CantorComplement<T>>,
}

/// Minimum batch size for regression-based representations.
pub const MIN_SCENARIOS: usize = 10_000;

/// Per-scenario regressors (one block of `features.len()` columns per slot)
/// and payoff values, stored row-major.
#[derive(Clone, Debug)]
pub struct Design {
    pub n: usize,
    pub n_slots: usize,
    pub slot_width: usize,
    rows: Vec<f64>,
    targets: Vec<f64>,
    pub payoff_names: Vec<String>,
}

impl Design {
    pub fn width(&self) -> usize {
        self.n_slots * self.slot_width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.width()..(i + 1) * self.width()]
    }

    pub fn target(&self, i: usize, payoff: usize) -> f64 {
        self.targets[i * self.payoff_names.len() + payoff]
    }

    pub fn n_payoffs(&self) -> usize {
        self.payoff_names.len()
    }

    /// Regressors of a block (sum of slots) for row `i`, appended to `out`.
    fn block_row(&self, i: usize, blocks: &[Vec<usize>], out: &mut Vec<f64>) {
        let row = self.row(i);
        for block in blocks {
            let start = out.len();
            out.resize(start + self.slot_width, 0.0);
            for &s in block {
                let src = &row[s * self.slot_width..(s + 1) * self.slot_width];
                for (o, &v) in out[start..].iter_mut().zip(src) {
                    *o += v;
                }
            }
        }
    }
}

/// Regressor row of one scenario.
pub fn scenario_row<T: Real>(
    spec: &DesignSpec<T>,
    scenario: &EnlargedScenario<T>,
    family: &MartingaleFamily<T>,
) -> Result<Vec<f64>> {
    let grid = scenario.path.grid;
    let f = &spec.features;
    let b = f.len();
    let sl = f.state_len();
    let incs: Vec<Vec<f64>> = spec
        .slots
        .iter()
        .map(|s| s.increments(family, spec.split.as_ref()))
        .collect::<Result<_>>()?;
    let mut row = vec![0.0; spec.slots.len() * b];
    let mut state = vec![0.0; sl];
    for k in 0..grid.n_steps {
        if incs.iter().all(|inc| inc[k] == 0.0) {
            continue;
        }
        f.state_values(scenario, k, &mut state);
        let hats = f.hat_weights(&grid, k);
        for (s, inc) in incs.iter().enumerate() {
            let d = inc[k];
            if d == 0.0 {
                continue;
            }
            for &(h, w) in &hats {
                let c = w * d;
                if c == 0.0 {
                    continue;
                }
                let base = s * b + h * sl;
                for (o, &v) in row[base..base + sl].iter_mut().zip(&state) {
                    *o += c * v;
                }
            }
        }
    }
    Ok(row)
}

/// Builds the design over a batch.
pub fn assemble_design<T: Real, S: ScenarioSource<T> + ?Sized>(
    source: &S,
    ctx: &FamilyContext<'_, T>,
    spec: &DesignSpec<T>,
    payoffs: &[Payoff<T>],
) -> Result<Design> {
    spec.features.validate()?;
    if spec.slots.is_empty() {
        return Err(Error::Configuration("design needs at least one integrator".into()));
    }
    let n = source.len();
    let width = spec.slots.len() * spec.features.len();
    let n_pay = payoffs.len();
    let (rows, targets) = fold_indexed(
        n,
        || (Vec::with_capacity(CHUNK * width), Vec::with_capacity(CHUNK * n_pay)),
        |(rows, targets), i| {
            let scenario = source.scenario(i)?;
            let family = ctx.family(&scenario)?;
            rows.extend(scenario_row(spec, &scenario, &family)?);
            for p in payoffs {
                targets.push(p.evaluate(&scenario, &family)?.to_f64_lossy());
            }
            Ok(())
        },
        |(rows, targets), (r, t)| {
            if rows.is_empty() {
                rows.reserve_exact(n * width);
                targets.reserve_exact(n * n_pay);
            }
            rows.extend(r);
            targets.extend(t);
        },
    )?;
    Ok(Design {
        n,
        n_slots: spec.slots.len(),
        slot_width: spec.features.len(),
        rows,
        targets,
        payoff_names: payoffs.iter().map(Payoff::name).collect(),
    })
}

/// Fitted coefficients of one payoff on a block structure.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearFit {
    /// Each regressor block is the sum of these slots.
    pub blocks: Vec<Vec<usize>>,
    pub intercept: f64,
    /// `blocks.len() × slot_width`, block-major.
    pub coefficients: Vec<f64>,
    pub ridge: f64,
    pub ridge_bumped: bool,
    pub dropped_columns: usize,
}

impl LinearFit {
    pub fn block(&self, j: usize, slot_width: usize) -> &[f64] {
        &self.coefficients[j * slot_width..(j + 1) * slot_width]
    }
}

/// Residual of a fit over the batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualStats {
    /// `‖ξ − ξ̂‖ / max(‖ξ − E ξ‖, ε)`.
    pub residual_rel: f64,
    /// Standard error of `residual_rel` (delta method on the mean squared residual).
    pub se: f64,
    pub payoff_sd: f64,
    pub n: usize,
}

/// Floor of the residual denominator.
pub const RESIDUAL_FLOOR: f64 = 1e-12;

/// Least squares (with intercept) of every payoff on the given blocks.
/// Columns are centered and standardized; the relative ridge is raised
/// until the Cholesky factorization succeeds.
pub fn fit_all(design: &Design, blocks: &[Vec<usize>], ridge: f64) -> Result<Vec<LinearFit>> {
    if let Some(&s) = blocks.iter().flatten().find(|&&s| s >= design.n_slots) {
        return Err(Error::Structural(format!(
            "block references slot {s} of {}",
            design.n_slots
        )));
    }
    let p = blocks.len() * design.slot_width;
    let q = design.n_payoffs();
    let n = design.n;
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut cross = DMatrix::<f64>::zeros(p, q);
    let mut sum_x = DVector::<f64>::zeros(p);
    let mut y_moments = vec![Moments::default(); q];
    let mut y_range = vec![(f64::INFINITY, f64::NEG_INFINITY); q];
    let mut buf = Vec::with_capacity(CHUNK * p);
    let mut ybuf = Vec::with_capacity(CHUNK * q);
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        buf.clear();
        ybuf.clear();
        for i in start..end {
            design.block_row(i, blocks, &mut buf);
            for j in 0..q {
                let y = design.target(i, j);
                ybuf.push(y);
                y_moments[j].push(y);
                y_range[j] = (y_range[j].0.min(y), y_range[j].1.max(y));
            }
        }
        let rows = end - start;
        let x = DMatrix::from_row_slice(rows, p, &buf);
        let y = DMatrix::from_row_slice(rows, q, &ybuf);
        gram.gemm_tr(1.0, &x, &x, 1.0);
        cross.gemm_tr(1.0, &x, &y, 1.0);
        for (s, c) in sum_x.iter_mut().zip(x.column_iter()) {
            *s += c.sum();
        }
    }
    let nf = n as f64;
    let mean_x = &sum_x / nf;
    let cov = gram / nf - &mean_x * mean_x.transpose();
    let diag: Vec<f64> = (0..p).map(|j| cov[(j, j)]).collect();
    let max_d = diag.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..p).filter(|&j| diag[j] > 1e-14 * max_d && diag[j] > 0.0).collect();
    let r = keep.len();
    let mut corr = DMatrix::<f64>::zeros(r, r);
    for (a, &i) in keep.iter().enumerate() {
        for (b, &j) in keep.iter().enumerate() {
            corr[(a, b)] = cov[(i, j)] / (diag[i] * diag[j]).sqrt();
        }
    }
    let mut lambda = ridge;
    let mut bumped = false;
    let chol = loop {
        let mut m = corr.clone();
        for a in 0..r {
            m[(a, a)] += lambda;
        }
        if let Some(c) = m.cholesky() {
            break c;
        }
        bumped = true;
        lambda = if lambda == 0.0 { 1e-12 } else { lambda * 100.0 };
        if lambda > 1.0 {
            return Err(Error::Model(
                "normal equations remain singular after ridge escalation".into(),
            ));
        }
    };
    let mut fits = Vec::with_capacity(q);
    for j in 0..q {
        let my = y_moments[j].mean();
        let mut coefficients = vec![0.0; p];
        let constant = y_range[j].0 == y_range[j].1;
        if !constant && r > 0 {
            let rhs = DVector::from_iterator(
                r,
                keep.iter()
                    .map(|&i| (cross[(i, j)] / nf - mean_x[i] * my) / diag[i].sqrt()),
            );
            let sol = chol.solve(&rhs);
            for (a, &i) in keep.iter().enumerate() {
                coefficients[i] = sol[a] / diag[i].sqrt();
            }
        }
        let intercept = my - coefficients.iter().zip(mean_x.iter()).map(|(c, m)| c * m).sum::<f64>();
        fits.push(LinearFit {
            blocks: blocks.to_vec(),
            intercept,
            coefficients,
            ridge: lambda,
            ridge_bumped: bumped,
            dropped_columns: p - r,
        });
    }
    Ok(fits)
}

/// Predicted payoffs using `fit`'s coefficients on the regressors of
/// `eval_blocks` (which may differ from the fitted blocks, e.g. a splice).
pub fn predictions(design: &Design, fit: &LinearFit, eval_blocks: &[Vec<usize>]) -> Result<Vec<f64>> {
    if eval_blocks.len() != fit.blocks.len() {
        return Err(Error::Structural(
            "evaluation blocks must match the fitted block count".into(),
        ));
    }
    let mut buf = Vec::with_capacity(fit.coefficients.len());
    Ok((0..design.n)
        .map(|i| {
            buf.clear();
            design.block_row(i, eval_blocks, &mut buf);
            fit.intercept + buf.iter().zip(&fit.coefficients).map(|(x, c)| x * c).sum::<f64>()
        })
        .collect())
}

/// Residual statistics of predictions against payoff `j`.
pub fn residual_stats(design: &Design, j: usize, predicted: &[f64]) -> ResidualStats {
    let mut y = Moments::default();
    let mut e2 = Moments::default();
    for (i, &p) in predicted.iter().enumerate() {
        let t = design.target(i, j);
        y.push(t);
        let e = t - p;
        e2.push(e * e);
    }
    residual_from_moments(&y, &e2)
}

/// Residual statistics from moments of the payoff and of squared errors.
pub fn residual_from_moments(y: &Moments, e2: &Moments) -> ResidualStats {
    let n = y.count() as f64;
    let sd = if n > 0.0 {
        (y.variance() * (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    let denom = sd.max(RESIDUAL_FLOOR);
    let ms = e2.mean().max(0.0);
    let rms = ms.sqrt();
    let se = if rms > 0.0 {
        e2.std_err() / (2.0 * rms * denom)
    } else {
        0.0
    };
    ResidualStats {
        residual_rel: rms / denom,
        se,
        payoff_sd: sd,
        n: y.count() as usize,
    }
}
