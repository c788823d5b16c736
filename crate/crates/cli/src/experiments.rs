//! The five experiments: simulation, checks and the tables they emit.

use enlarge_core::diagnostics::{
    azema_crosscheck, bracket_identities, family_orthogonality, identity_sweep, levy_after_default,
    martingale_increment_tests, multiplicity_experiment, representation_agreement, time_change_example,
    AzemaCheckConfig, MartingaleTestReport, MultiplicityConfig, SingularityReport, TestFunction, TestedProcess,
    TimeChangedBatch, Verdict, ZCell, Z_GATE,
};
use enlarge_core::levy_sim::{verify_levy_characterization, CharacteristicCell, LevyBatch};
use enlarge_core::random_time::{EnlargedBatch, HazardClass, ScenarioSource};
use enlarge_core::representation::{
    explicit_representation, regression_representation, FamilyContext, OrthonormalBasis, SurvivalClaim,
};
use enlarge_core::stoch_calc::Grid;
use enlarge_core::{EnlargedScenario, IntegrandSet, MartingaleFamily, Result};

use crate::config::{Experiment, ExperimentConfig};
use crate::report::{num, Outcome, Table};

/// Validates the configuration and runs one experiment.
pub fn run_experiment(config: &ExperimentConfig, experiment: Experiment) -> Result<Outcome> {
    config.validate(experiment)?;
    match experiment {
        Experiment::VerifyLevy => verify_levy(config),
        Experiment::VerifyEnlargement => verify_enlargement(config),
        Experiment::Represent => represent(config),
        Experiment::Multiplicity => multiplicity(config),
        Experiment::TimeChange => time_change(config),
    }
}

fn paths(config: &ExperimentConfig) -> LevyBatch<f64> {
    LevyBatch {
        model: config.model.clone(),
        horizon: config.horizon,
        n_steps: config.n_steps,
        n_paths: config.n_paths,
        root_seed: config.root_seed,
    }
}

fn scenarios(config: &ExperimentConfig, experiment: Experiment) -> Result<EnlargedBatch<f64, LevyBatch<f64>>> {
    EnlargedBatch::new(paths(config), config.hazard(experiment)?, config.root_seed)
}

fn characteristic_table(name: &str, cells: &[CharacteristicCell]) -> Table {
    let mut t = Table::new(
        name,
        &[
            "u",
            "t",
            "mean_re",
            "mean_im",
            "target_re",
            "target_im",
            "se_re",
            "se_im",
            "z_re",
            "z_im",
        ],
    );
    for c in cells {
        t.push(
            [
                c.u,
                c.t,
                c.mean_re,
                c.mean_im,
                c.target_re,
                c.target_im,
                c.se_re,
                c.se_im,
                c.z_re,
                c.z_im,
            ]
            .map(num)
            .to_vec(),
        );
    }
    t
}

fn max_z(cells: &[CharacteristicCell]) -> f64 {
    cells.iter().map(CharacteristicCell::max_abs_z).fold(0.0, f64::max)
}

fn verify_levy(config: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::new(Experiment::VerifyLevy);
    let r = verify_levy_characterization(&paths(config), &config.model, &config.levy.u_grid, &config.levy.t_grid)?;
    out.gate(
        "characteristic function",
        r.pass(),
        format!("max |z| = {:.3} over {} cells", r.max_abs_z(), r.cells.len()),
    );
    out.tables.push(characteristic_table("characteristic", &r.cells));
    Ok(out)
}

fn martingale_rows(t: &mut Table, r: &MartingaleTestReport) {
    for c in &r.cells {
        t.push(vec![
            r.process.clone(),
            num(c.t0),
            num(c.t1),
            c.function.to_string(),
            num(c.mean),
            num(c.se),
            num(c.z),
        ]);
    }
}

fn zcell_row(name: &str, c: &ZCell) -> Vec<String> {
    vec![name.to_string(), num(c.mean), num(c.se), num(c.target), num(c.z)]
}

fn verify_enlargement(config: &ExperimentConfig) -> Result<Outcome> {
    let e = Experiment::VerifyEnlargement;
    let mut out = Outcome::new(e);
    let sec = &config.enlargement;
    let hazard = config.hazard(e)?;
    let batch = scenarios(config, e)?;
    out.note("hazard", hazard.class());

    let sweep = identity_sweep(&batch.hazard, &batch, sec.identity_tolerance)?;
    let w = &sweep.worst;
    out.gate(
        "pathwise identities",
        sweep.pass(),
        format!(
            "max relative error {:.3e} (tolerance {:.0e}), structural checks {}",
            w.max_rel(),
            sec.identity_tolerance,
            w.structural_ok()
        ),
    );
    let mut t = Table::new("identities", &["identity", "max_rel_error"]);
    for (name, v) in [
        ("A=exp(-Gamma)", w.azema),
        ("Lambda=-log A", w.compensator),
        ("M=H-Lambda", w.martingale),
        ("Y=E(-M)", w.exponential),
    ] {
        t.push(vec![name.into(), num(v)]);
    }
    out.tables.push(t);

    let az = azema_crosscheck(
        hazard,
        &config.model,
        &AzemaCheckConfig {
            horizon: config.horizon,
            n_steps: config.n_steps,
            outer_paths: sec.azema_outer_paths,
            inner_draws: sec.azema_inner_draws,
            times: sec.azema_times.clone(),
            root_seed: config.root_seed,
        },
    )?;
    let plateau = az.plateau.as_ref().map_or("n/a".to_string(), |p| {
        format!("A({})={} A({})={}", p.t1, p.a1, p.t2, p.a2)
    });
    out.gate(
        "azema nested monte carlo",
        az.pass(),
        format!("max |z| = {:.3}, plateau {plateau}", az.max_abs_z()),
    );
    let mut t = Table::new("azema", &["path", "t", "estimate", "exact", "se", "z"]);
    for c in &az.cells {
        t.push(vec![
            c.path.to_string(),
            num(c.t),
            num(c.estimate),
            num(c.exact),
            num(c.se),
            num(c.z),
        ]);
    }
    out.tables.push(t);

    let br = bracket_identities(&batch)?;
    out.gate(
        "brackets",
        br.pass(),
        format!(
            "[M,M]_T != H_T on {} paths; z(M_T^2 - Lambda_T) = {:.3}; z(M_T) = {:.3}",
            br.mm_mismatches, br.m2_minus_lambda.z, br.m_terminal.z
        ),
    );
    let mut t = Table::new("brackets", &["quantity", "mean", "se", "target", "z"]);
    t.push(zcell_row("M_T^2-Lambda_T", &br.m2_minus_lambda));
    t.push(zcell_row("M_T^2-H_T", &br.m2_minus_h));
    t.push(zcell_row("M_T", &br.m_terminal));
    out.tables.push(t);

    let basis = OrthonormalBasis::canonical(&config.model);
    let ctx = FamilyContext {
        model: &config.model,
        basis: &basis,
    };
    let orth = family_orthogonality(&batch, &ctx)?;
    out.gate(
        "orthogonality",
        orth.max_abs_z() <= Z_GATE,
        format!("max |z| = {:.3} over {} pairs", orth.max_abs_z(), orth.pairs.len()),
    );
    out.gate(
        "avoidance audit",
        orth.cojump_events() == 0,
        format!("{} co-jump events", orth.cojump_events()),
    );
    let mut t = Table::new(
        "orthogonality",
        &[
            "first",
            "second",
            "mean_product",
            "se",
            "z",
            "covariance",
            "bracket_mean",
            "cojumps",
        ],
    );
    for p in &orth.pairs {
        t.push(vec![
            p.first.clone(),
            p.second.clone(),
            num(p.product.mean),
            num(p.product.se),
            num(p.product.z),
            num(p.covariance),
            num(p.bracket_mean),
            p.cojumps.to_string(),
        ]);
    }
    out.tables.push(t);

    let mut processes = vec![TestedProcess::DefaultMartingale, TestedProcess::Wsigma];
    processes.extend((0..config.model.nu.len()).map(TestedProcess::Jump));
    for &u in &sec.u_grid {
        processes.push(TestedProcess::CharacteristicRe(u));
        processes.push(TestedProcess::CharacteristicIm(u));
    }
    processes.push(TestedProcess::UncompensatedDefault);
    let reports = martingale_increment_tests(
        &processes,
        &batch,
        &ctx,
        &TestFunction::ALL,
        &sec.test_times,
        config.root_seed,
    )?;
    let mut t = Table::new(
        "martingale",
        &["process", "t0", "t1", "test_function", "mean", "se", "z"],
    );
    let (neg, tested) = reports.split_last().expect("at least the negative control");
    for r in tested {
        out.gate(
            format!("martingale {}", r.process),
            r.pass(),
            format!("max |z| = {:.3}", r.max_abs_z()),
        );
        martingale_rows(&mut t, r);
    }
    out.gate(
        "negative control: uncompensated H is rejected",
        neg.max_abs_z() > sec.negative_control_z,
        format!(
            "max |z| = {:.3} (must exceed {})",
            neg.max_abs_z(),
            sec.negative_control_z
        ),
    );
    martingale_rows(&mut t, neg);
    out.tables.push(t);

    let post = levy_after_default(&batch, &ctx, &sec.u_grid, sec.post_default_time)?;
    out.gate(
        "levy after default",
        max_z(&post) <= Z_GATE,
        format!(
            "max |z| = {:.3} conditional on tau <= {}",
            max_z(&post),
            sec.post_default_time
        ),
    );
    out.tables
        .push(characteristic_table("post_default_characteristic", &post));
    Ok(out)
}

fn integrand_rows(t: &mut Table, label: &str, set: &IntegrandSet, k: usize) {
    let grid = set.z.grid;
    for i in 0..grid.len() {
        let v: Vec<f64> = (0..k).map(|n| set.v.get(n).map_or(0.0, |p| p.values[i])).collect();
        let mut row = vec![label.to_string(), num(grid.time(i)), num(set.z.values[i])];
        row.extend(v.into_iter().map(num));
        row.push(num(set.u.values[i]));
        t.push(row);
    }
}

/// Largest gap between a reconstruction and the fitted prediction over the first scenarios.
fn reconstruction_gap<S: ScenarioSource<f64>>(
    source: &S,
    ctx: &FamilyContext<'_, f64>,
    predicted: &[f64],
    mut set: impl FnMut(usize, &EnlargedScenario, &MartingaleFamily) -> Result<IntegrandSet>,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 0..source.len().min(32) {
        let s = source.scenario(i)?;
        let fam = ctx.family(&s)?;
        let x = set(i, &s, &fam)?.reconstruct(&fam)?.terminal();
        worst = worst.max((x - predicted[i]).abs() / (1.0 + predicted[i].abs()));
    }
    Ok(worst)
}

const RECONSTRUCTION_TOL: f64 = 1e-9;

fn represent(config: &ExperimentConfig) -> Result<Outcome> {
    let e = Experiment::Represent;
    let mut out = Outcome::new(e);
    let batch = scenarios(config, e)?;
    let basis = OrthonormalBasis::canonical(&config.model);
    let ctx = FamilyContext {
        model: &config.model,
        basis: &basis,
    };
    let k = basis.len();
    let mut header = vec!["payoff".to_string(), "t".into(), "z".into()];
    header.extend((1..=k).map(|n| format!("v{n}")));
    header.push("u".into());
    let mut integrands = Table {
        name: "integrands".into(),
        header,
        rows: Vec::new(),
    };
    let first = batch.scenario(0)?;
    let first_family = ctx.family(&first)?;
    let mut residuals = Table::new(
        "residuals",
        &[
            "payoff",
            "method",
            "residual_rel",
            "se",
            "payoff_sd",
            "tolerance",
            "ridge",
            "ridge_bumped",
        ],
    );

    let regression = if config.payoffs.is_empty() {
        None
    } else {
        let features = config.features();
        out.note("features", format!("{} per integrator", features.len()));
        let rep = regression_representation(&config.payoffs, &batch, &ctx, &features)?;
        for (j, p) in config.payoffs.iter().enumerate() {
            let s = &rep.stats[j];
            let tol = config.represent.tolerances.get(j).copied();
            if let Some(tol) = tol {
                out.gate(
                    format!("regression {}", p.name()),
                    s.residual_rel <= tol,
                    format!("residual {:.4} (se {:.4}, tolerance {tol})", s.residual_rel, s.se),
                );
            }
            residuals.push(vec![
                p.name(),
                "regression".into(),
                num(s.residual_rel),
                num(s.se),
                num(s.payoff_sd),
                tol.map(num).unwrap_or_default(),
                num(rep.fits[j].ridge),
                rep.fits[j].ridge_bumped.to_string(),
            ]);
            integrand_rows(&mut integrands, &p.name(), &rep.integrands(j, &first, &first_family), k);
            let gap = reconstruction_gap(&batch, &ctx, &rep.predictions[j], |_, s, f| Ok(rep.integrands(j, s, f)))?;
            out.gate(
                format!("reconstruction {}", p.name()),
                gap <= RECONSTRUCTION_TOL,
                format!("integrals of the integrands match the fit to {gap:.2e}"),
            );
        }
        Some(rep)
    };

    if let Some(x) = &config.represent.explicit {
        let claim = SurvivalClaim { g: x.g.clone(), s: x.s };
        let name = claim.payoff().name();
        let ex = explicit_representation(&claim, &batch, &ctx, &config.reference_features())?;
        out.gate(
            format!("explicit {name}"),
            ex.stats.residual_rel <= x.tolerance,
            format!(
                "residual {:.4} (se {:.4}, tolerance {})",
                ex.stats.residual_rel, ex.stats.se, x.tolerance
            ),
        );
        residuals.push(vec![
            name.clone(),
            "explicit".into(),
            num(ex.stats.residual_rel),
            num(ex.stats.se),
            num(ex.stats.payoff_sd),
            num(x.tolerance),
            num(ex.reference.fits[0].ridge),
            ex.reference.fits[0].ridge_bumped.to_string(),
        ]);
        integrand_rows(
            &mut integrands,
            &format!("explicit {name}"),
            &ex.integrands(&first, &first_family)?,
            k,
        );
        let gap = reconstruction_gap(&batch, &ctx, &ex.predictions, |_, s, f| ex.integrands(s, f))?;
        out.gate(
            format!("reconstruction explicit {name}"),
            gap <= RECONSTRUCTION_TOL,
            format!("integrals of the integrands match the construction to {gap:.2e}"),
        );
        let matching = config.payoffs.iter().position(|p| *p == claim.payoff());
        if let Some((rep, j)) = regression.as_ref().zip(matching) {
            let a = representation_agreement(&ex, rep, j)?;
            out.gate(
                format!("explicit vs regression {name}"),
                a.pass(),
                format!(
                    "L2 distance {:.4} vs allowance {:.4} + 4 se ({:.4})",
                    a.distance_rel, a.allowance, a.se
                ),
            );
        }
    }
    out.tables.push(residuals);
    out.tables.push(integrands);
    Ok(out)
}

fn multiplicity_config(config: &ExperimentConfig) -> MultiplicityConfig<f64> {
    MultiplicityConfig {
        features: config.features(),
        tolerance: config.multiplicity.tolerance,
        gap: config.multiplicity.gap,
    }
}

fn singularity_table(r: &SingularityReport) -> Table {
    let mut t = Table::new(
        "singularity",
        &[
            "payoff",
            "payoff_sd",
            "r_pair",
            "se_pair",
            "r_free",
            "se_free",
            "r_splice",
            "se_splice",
            "r_single",
            "excess",
            "ordering_ok",
        ],
    );
    for row in &r.rows {
        t.push(vec![
            row.payoff.clone(),
            num(row.payoff_sd),
            num(row.r_pair),
            num(row.se_pair),
            num(row.r_free),
            num(row.se_free),
            row.r_splice.map(num).unwrap_or_default(),
            row.se_splice.map(num).unwrap_or_default(),
            num(row.r_single()),
            num(row.excess()),
            row.ordering_ok().to_string(),
        ]);
    }
    t
}

fn singularity_gates(out: &mut Outcome, r: &SingularityReport, expected: Verdict, negative_control: bool) {
    out.note("hazard", r.hazard_class);
    out.note("splitting set", r.split.clone().unwrap_or_else(|| "none".into()));
    if let Some((w, m)) = r.carriers {
        out.note("carriers (reference, default)", format!("{w:?}, {m:?}"));
    }
    out.note("verdict", r.verdict);
    out.gate(
        "pair-vs-single ordering",
        r.ordering_ok(),
        "r_pair <= r_single + 4 se on every payoff".to_string(),
    );
    let worst = r.rows.iter().map(|x| x.excess()).fold(f64::NEG_INFINITY, f64::max);
    let name = if negative_control {
        "negative control: single integrator fails".to_string()
    } else {
        format!("verdict {expected}")
    };
    out.gate(
        name,
        r.verdict == expected,
        format!("{} (largest excess {worst:.4})", r.verdict),
    );
    if expected == Verdict::MultiplicityTwo {
        if let Some(h) = r.row("H_T") {
            out.gate(
                "H_T single-integrator excess",
                h.excess() >= r.gap,
                format!("r_single - r_pair = {:.4} (gap {})", h.excess(), r.gap),
            );
        }
    }
}

fn multiplicity(config: &ExperimentConfig) -> Result<Outcome> {
    let e = Experiment::Multiplicity;
    let mut out = Outcome::new(e);
    let hazard = config.hazard(e)?;
    let batch = scenarios(config, e)?;
    let basis = OrthonormalBasis::canonical(&config.model);
    let ctx = FamilyContext {
        model: &config.model,
        basis: &basis,
    };
    let r = multiplicity_experiment(&batch, &ctx, hazard, &config.payoffs, &multiplicity_config(config))?;
    let expected = if hazard.class() == HazardClass::SingularContinuous {
        Verdict::MultiplicityOne
    } else {
        Verdict::MultiplicityTwo
    };
    singularity_gates(&mut out, &r, expected, config.multiplicity.negative_control);
    out.tables.push(singularity_table(&r));
    Ok(out)
}

fn time_change(config: &ExperimentConfig) -> Result<Outcome> {
    let e = Experiment::TimeChange;
    let mut out = Outcome::new(e);
    let hazard = config.hazard(e)?;
    let grid = Grid::new(config.horizon, config.n_steps)?;
    let s_max = config.time_change.s_max.unwrap_or(config.horizon);
    let batch = TimeChangedBatch::new(
        config.model.sigma2,
        grid,
        s_max,
        hazard.cantor_depth,
        config.n_paths,
        config.root_seed,
    )?;
    let r = time_change_example(
        &batch,
        hazard,
        &config.payoffs,
        &multiplicity_config(config),
        config.root_seed,
    )?;
    let tol = config.time_change.qv_tolerance;
    out.gate(
        "[X,X]_T",
        r.qv_rel_err() <= tol,
        format!(
            "batch mean {:.5} (se {:.5}) vs {:.5}; first path {:.5}",
            r.qv_mean, r.qv_se, r.qv_target, r.qv_first_path
        ),
    );
    out.gate(
        "flat clock freezes X",
        r.plateau_moves == 0,
        format!("{} of {} flat cells moved", r.plateau_moves, r.plateau_cells),
    );
    singularity_gates(&mut out, &r.singularity, Verdict::MultiplicityOne, false);
    let mut t = Table::new("time_change", &["quantity", "value"]);
    for (k, v) in [
        ("qv_mean", r.qv_mean),
        ("qv_se", r.qv_se),
        ("qv_target", r.qv_target),
        ("qv_first_path", r.qv_first_path),
        ("plateau_cells", r.plateau_cells as f64),
        ("plateau_moves", r.plateau_moves as f64),
    ] {
        t.push(vec![k.into(), num(v)]);
    }
    out.tables.push(t);
    out.tables.push(singularity_table(&r.singularity));
    Ok(out)
}
