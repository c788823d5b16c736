//! Pathwise integrals and brackets on uniform grids with exact jump ledgers.
//!
//! A [`GridProcess`] stores values at the grid points together with the
//! jumps it carries between grid points. Integrand values are predictable:
//! `values[k]` is the integrand on the cell `(t_k, t_{k+1}]`.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform time grid `t_k = T·k/N`, `k = 0..=N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid<T> {
    pub horizon: T,
    pub n_steps: usize,
}

impl<T: Real> Grid<T> {
    pub fn new(horizon: T, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > T::zero()) {
            return Err(Error::Configuration(format!(
                "horizon must be finite and > 0, got {horizon}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::Configuration("n_steps must be >= 1".into()));
        }
        Ok(Grid { horizon, n_steps })
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, k: usize) -> T {
        self.horizon * T::from_usize_lossy(k) / T::from_usize_lossy(self.n_steps)
    }

    pub fn dt(&self) -> T {
        self.horizon / T::from_usize_lossy(self.n_steps)
    }

    fn snap_tolerance(&self) -> T {
        T::lit(1e-12).max(T::epsilon() * T::lit(8.0)) * self.horizon
    }

    /// Index of a grid time; times off the grid are a domain error.
    pub fn index_of(&self, t: T) -> Result<usize> {
        let tol = self.snap_tolerance();
        if !(t >= -tol && t <= self.horizon + tol) {
            return Err(Error::Domain(format!("time {t} outside [0, {}]", self.horizon)));
        }
        let k = (t / self.dt()).round().to_usize().unwrap_or(0).min(self.n_steps);
        if (self.time(k) - t).abs() > tol {
            return Err(Error::Domain(format!(
                "time {t} is not a grid point (dt = {})",
                self.dt()
            )));
        }
        Ok(k)
    }

    /// Cell `k` with `t_k < t <= t_{k+1}`, for `t` in `(0, T]`; times at or
    /// below zero map to cell 0 and times past the horizon to the last cell.
    pub fn cell_of(&self, t: T) -> usize {
        let last = self.n_steps - 1;
        let mut k = (t / self.dt()).floor().to_usize().unwrap_or(0).min(last);
        while k < last && self.time(k + 1) < t {
            k += 1;
        }
        while k > 0 && self.time(k) >= t {
            k -= 1;
        }
        k
    }

    pub fn times(&self) -> impl Iterator<Item = T> + '_ {
        (0..self.len()).map(move |k| self.time(k))
    }
}

/// A jump carried by a grid process at an exact off-grid time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpMark<T> {
    pub time: T,
    pub size: T,
}

/// Nature of the part of a process that moves between ledger jumps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContinuousPart {
    /// Continuous martingale part with nonzero quadratic variation.
    Diffusive,
    /// Continuous part of finite variation (drift, compensator, staircase).
    FiniteVariation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridProcess<T> {
    pub grid: Grid<T>,
    pub values: Vec<T>,
    /// Jumps ordered by time, in `(0, T]`.
    pub jumps: Vec<JumpMark<T>>,
    pub continuous: ContinuousPart,
}

impl<T: Real> GridProcess<T> {
    pub fn new(grid: Grid<T>, values: Vec<T>, jumps: Vec<JumpMark<T>>, continuous: ContinuousPart) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Structural(format!(
                "process has {} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite process value at grid index {k}")));
        }
        for w in jumps.windows(2) {
            if w[0].time > w[1].time {
                return Err(Error::Structural("jump ledger must be ordered by time".into()));
            }
        }
        if jumps.iter().any(|j| !(j.time > T::zero() && j.time <= grid.horizon)) {
            return Err(Error::Structural("jump times must lie in (0, T]".into()));
        }
        Ok(GridProcess {
            grid,
            values,
            jumps,
            continuous,
        })
    }

    /// Continuous process of finite variation, no jumps.
    pub fn smooth(grid: Grid<T>, values: Vec<T>) -> Result<Self> {
        Self::new(grid, values, Vec::new(), ContinuousPart::FiniteVariation)
    }

    pub fn constant(grid: Grid<T>, c: T) -> Self {
        GridProcess {
            grid,
            values: vec![c; grid.len()],
            jumps: Vec::new(),
            continuous: ContinuousPart::FiniteVariation,
        }
    }

    pub fn zero(grid: Grid<T>) -> Self {
        Self::constant(grid, T::zero())
    }

    pub fn terminal(&self) -> T {
        *self.values.last().expect("grid has at least two points")
    }

    pub fn at(&self, t: T) -> Result<T> {
        Ok(self.values[self.grid.index_of(t)?])
    }

    /// Index ranges of ledger jumps per cell: jumps of cell `k` are
    /// `jumps[offsets[k]..offsets[k + 1]]`.
    pub fn cell_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.grid.len());
        offsets.push(0);
        let mut next = 0;
        for k in 1..self.grid.len() {
            let t = self.grid.time(k);
            while next < self.jumps.len() && self.jumps[next].time <= t {
                next += 1;
            }
            offsets.push(next);
        }
        if let Some(last) = offsets.last_mut() {
            *last = self.jumps.len();
        }
        offsets
    }
}

fn same_grid<T: Real>(a: &GridProcess<T>, b: &GridProcess<T>) -> Result<()> {
    if a.grid != b.grid {
        return Err(Error::Structural(format!(
            "grid mismatch: (T={}, N={}) vs (T={}, N={})",
            a.grid.horizon, a.grid.n_steps, b.grid.horizon, b.grid.n_steps
        )));
    }
    Ok(())
}

/// Left-point Itô sum `K·X`: `K_{t_k}` times the continuous increment of each
/// cell, plus `K_{s-}·ΔX_s` for every ledger jump of `X`.
pub fn stochastic_integral<T: Real>(integrand: &GridProcess<T>, integrator: &GridProcess<T>) -> Result<GridProcess<T>> {
    same_grid(integrand, integrator)?;
    let grid = integrator.grid;
    let offsets = integrator.cell_offsets();
    let k_jumps = &integrand.jumps;
    let mut kp = 0;
    let mut acc = T::zero();
    let mut values = Vec::with_capacity(grid.len());
    let mut jumps = Vec::new();
    values.push(acc);
    for k in 0..grid.n_steps {
        let t_k = grid.time(k);
        while kp < k_jumps.len() && k_jumps[kp].time <= t_k {
            kp += 1;
        }
        let cell = &integrator.jumps[offsets[k]..offsets[k + 1]];
        let jump_sum: T = cell.iter().map(|j| j.size).sum();
        let continuous = integrator.values[k + 1] - integrator.values[k] - jump_sum;
        acc += integrand.values[k] * continuous;
        let mut left = integrand.values[k];
        let mut kq = kp;
        for j in cell {
            while kq < k_jumps.len() && k_jumps[kq].time < j.time {
                left += k_jumps[kq].size;
                kq += 1;
            }
            let dj = left * j.size;
            acc += dj;
            jumps.push(JumpMark { time: j.time, size: dj });
        }
        values.push(acc);
    }
    GridProcess::new(grid, values, jumps, integrator.continuous)
}

/// A value with a crude discretization error proxy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    /// Half the change from the half-resolution grid, when available.
    pub error_proxy: Option<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Covariation<T> {
    /// `[X, Y]`: continuous-part products (both diffusive) plus exact common-jump products.
    pub bracket: GridProcess<T>,
    /// Cumulative grid cross products not attributed to the bracket.
    pub discretization_noise: Vec<T>,
    pub error_proxy: Option<T>,
}

impl<T: Real> Covariation<T> {
    pub fn terminal(&self) -> Estimate<T> {
        Estimate {
            value: self.bracket.terminal(),
            error_proxy: self.error_proxy,
        }
    }
}

/// Quadratic covariation on the grid with exact treatment of ledger jumps.
pub fn quadratic_covariation<T: Real>(x: &GridProcess<T>, y: &GridProcess<T>) -> Result<Covariation<T>> {
    same_grid(x, y)?;
    let grid = x.grid;
    let both_diffusive = x.continuous == ContinuousPart::Diffusive && y.continuous == ContinuousPart::Diffusive;
    let (ox, oy) = (x.cell_offsets(), y.cell_offsets());
    let mut q = T::zero();
    let mut noise = T::zero();
    let mut values = Vec::with_capacity(grid.len());
    let mut noise_values = Vec::with_capacity(grid.len());
    let mut jumps = Vec::new();
    let mut cont_x = Vec::with_capacity(grid.n_steps);
    let mut cont_y = Vec::with_capacity(grid.n_steps);
    values.push(q);
    noise_values.push(noise);
    for k in 0..grid.n_steps {
        let jx = &x.jumps[ox[k]..ox[k + 1]];
        let jy = &y.jumps[oy[k]..oy[k + 1]];
        let dx = x.values[k + 1] - x.values[k];
        let dy = y.values[k + 1] - y.values[k];
        let cx = dx - jx.iter().map(|j| j.size).sum::<T>();
        let cy = dy - jy.iter().map(|j| j.size).sum::<T>();
        cont_x.push(cx);
        cont_y.push(cy);
        let mut dq = if both_diffusive { cx * cy } else { T::zero() };
        let (mut a, mut b) = (0, 0);
        while a < jx.len() && b < jy.len() {
            if jx[a].time == jy[b].time {
                let p = jx[a].size * jy[b].size;
                dq += p;
                jumps.push(JumpMark {
                    time: jx[a].time,
                    size: p,
                });
                a += 1;
                b += 1;
            } else if jx[a].time < jy[b].time {
                a += 1;
            } else {
                b += 1;
            }
        }
        q += dq;
        noise += dx * dy - dq;
        values.push(q);
        noise_values.push(noise);
    }
    let error_proxy = if both_diffusive && grid.n_steps.is_multiple_of(2) && grid.n_steps >= 2 {
        let fine: T = cont_x.iter().zip(&cont_y).map(|(&a, &b)| a * b).sum();
        let coarse: T = cont_x
            .chunks(2)
            .zip(cont_y.chunks(2))
            .map(|(a, b)| (a[0] + a[1]) * (b[0] + b[1]))
            .sum();
        Some((fine - coarse).abs() * T::lit(0.5))
    } else if both_diffusive {
        None
    } else {
        Some(T::zero())
    };
    Ok(Covariation {
        bracket: GridProcess::new(grid, values, jumps, ContinuousPart::FiniteVariation)?,
        discretization_noise: noise_values,
        error_proxy,
    })
}

/// Left-point Stieltjes sum `Σ K_{t_k} (B_{t_{k+1}} − B_{t_k})` against a nondecreasing `B`.
pub fn lebesgue_stieltjes_integral<T: Real>(
    integrand: &GridProcess<T>,
    increasing: &GridProcess<T>,
) -> Result<GridProcess<T>> {
    same_grid(integrand, increasing)?;
    if let Some(k) = increasing.values.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::Model(format!("integrator decreases on cell {k}")));
    }
    let grid = increasing.grid;
    let offsets = increasing.cell_offsets();
    let mut acc = T::zero();
    let mut values = Vec::with_capacity(grid.len());
    let mut jumps = Vec::new();
    values.push(acc);
    for k in 0..grid.n_steps {
        acc += integrand.values[k] * (increasing.values[k + 1] - increasing.values[k]);
        for j in &increasing.jumps[offsets[k]..offsets[k + 1]] {
            jumps.push(JumpMark {
                time: j.time,
                size: integrand.values[k] * j.size,
            });
        }
        values.push(acc);
    }
    GridProcess::new(grid, values, jumps, ContinuousPart::FiniteVariation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize) -> Grid<f64> {
        Grid::new(1.0, n).unwrap()
    }

    /// A compensated single-jump process `1{τ <= t} − min(t, τ)`.
    fn default_martingale(g: Grid<f64>, tau: f64) -> GridProcess<f64> {
        let values = g
            .times()
            .map(|t| if tau <= t { 1.0 } else { 0.0 } - t.min(tau))
            .collect();
        GridProcess::new(
            g,
            values,
            vec![JumpMark { time: tau, size: 1.0 }],
            ContinuousPart::FiniteVariation,
        )
        .unwrap()
    }

    fn brownian(g: Grid<f64>, seed: u64) -> GridProcess<f64> {
        use rand::Rng;
        use rand_distr::StandardNormal;
        let mut rng = crate::rng::generator(seed);
        let sd = g.dt().sqrt();
        let mut w = 0.0;
        let mut values = vec![0.0];
        for _ in 0..g.n_steps {
            let z: f64 = rng.sample(StandardNormal);
            w += sd * z;
            values.push(w);
        }
        GridProcess::new(g, values, vec![], ContinuousPart::Diffusive).unwrap()
    }

    #[test]
    fn grid_index_and_cells() {
        let g = grid(8);
        assert_eq!(g.index_of(0.25).unwrap(), 2);
        assert!(matches!(g.index_of(0.3), Err(Error::Domain(_))));
        assert!(matches!(g.index_of(1.5), Err(Error::Domain(_))));
        assert_eq!(g.cell_of(0.25), 1);
        assert_eq!(g.cell_of(0.2500001), 2);
        assert_eq!(g.cell_of(1.0), 7);
        assert_eq!(g.cell_of(1e-9), 0);
    }

    #[test]
    fn unit_integrand_returns_increments() {
        let g = grid(16);
        let m = default_martingale(g, 0.37);
        let r = stochastic_integral(&GridProcess::constant(g, 1.0), &m).unwrap();
        for k in 0..g.len() {
            assert!((r.values[k] - (m.values[k] - m.values[0])).abs() < 1e-15);
        }
        assert_eq!(r.jumps, vec![JumpMark { time: 0.37, size: 1.0 }]);
    }

    #[test]
    fn zero_integrand_gives_zero() {
        let g = grid(16);
        let r = stochastic_integral(&GridProcess::zero(g), &default_martingale(g, 0.5)).unwrap();
        assert!(r.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stopped_integrand_stops_the_integral() {
        // Direct summation oracle: M_{t∧s} for s on the grid.
        let g = grid(32);
        for tau in [0.2, 0.61] {
            let m = default_martingale(g, tau);
            let s = 0.5;
            let gate = GridProcess::smooth(g, g.times().map(|t| if t < s { 1.0 } else { 0.0 }).collect()).unwrap();
            let r = stochastic_integral(&gate, &m).unwrap();
            for (k, t) in g.times().enumerate() {
                let want = m.values[g.index_of(t.min(s)).unwrap()];
                assert!((r.values[k] - want).abs() < 1e-14, "tau {tau} t {t}");
            }
        }
    }

    #[test]
    fn integrand_left_limit_at_jumps() {
        // Integrand jumps to zero at τ, as Y does; the jump of M still sees the left limit.
        let g = grid(8);
        let tau = 0.3;
        let m = default_martingale(g, tau);
        let y = GridProcess::new(
            g,
            g.times().map(|t| if t < tau { 2.0 } else { 0.0 }).collect(),
            vec![JumpMark { time: tau, size: -2.0 }],
            ContinuousPart::FiniteVariation,
        )
        .unwrap();
        let r = stochastic_integral(&y, &m).unwrap();
        assert_eq!(r.jumps, vec![JumpMark { time: tau, size: 2.0 }]);
    }

    #[test]
    fn grid_mismatch_is_structural() {
        let r = stochastic_integral(&GridProcess::zero(grid(4)), &GridProcess::zero(grid(8)));
        assert!(matches!(r, Err(Error::Structural(_))));
        assert!(quadratic_covariation(&GridProcess::zero(grid(4)), &GridProcess::zero(grid(8))).is_err());
    }

    #[test]
    fn bracket_of_default_martingale_is_default_indicator() {
        let g = grid(64);
        let m = default_martingale(g, 0.4);
        let q = quadratic_covariation(&m, &m).unwrap();
        for (k, t) in g.times().enumerate() {
            assert_eq!(q.bracket.values[k], if t >= 0.4 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn no_common_jumps_means_zero_bracket() {
        let g = grid(64);
        let a = default_martingale(g, 0.4);
        let b = default_martingale(g, 0.7);
        assert_eq!(quadratic_covariation(&a, &b).unwrap().bracket.terminal(), 0.0);
    }

    #[test]
    fn drift_path_has_small_grid_variation() {
        let g = grid(128);
        let beta = 0.7;
        let x = GridProcess::new(
            g,
            g.times().map(|t| beta * t).collect(),
            vec![],
            ContinuousPart::Diffusive,
        )
        .unwrap();
        let q = quadratic_covariation(&x, &x).unwrap().bracket.terminal();
        assert!(q >= 0.0 && q <= beta * beta * g.dt() + 1e-15);
    }

    #[test]
    fn brownian_variation_near_horizon() {
        let g = grid(4096);
        let w = brownian(g, 3);
        let est = quadratic_covariation(&w, &w).unwrap().terminal();
        assert!((est.value - 1.0).abs() < 0.1);
        assert!(est.error_proxy.unwrap() >= 0.0);
    }

    #[test]
    fn stieltjes_examples() {
        let g = grid(10);
        let gamma = GridProcess::smooth(g, g.times().collect()).unwrap();
        let r = lebesgue_stieltjes_integral(&GridProcess::constant(g, 3.0), &gamma).unwrap();
        for (k, t) in g.times().enumerate() {
            assert!((r.values[k] - 3.0 * t).abs() < 1e-14);
        }
        let flat = lebesgue_stieltjes_integral(&gamma, &GridProcess::constant(g, 5.0)).unwrap();
        assert!(flat.values.iter().all(|&v| v == 0.0));
        let down = GridProcess::smooth(g, g.times().map(|t| -t).collect()).unwrap();
        assert!(matches!(
            lebesgue_stieltjes_integral(&gamma, &down),
            Err(Error::Model(_))
        ));
    }

    #[test]
    fn stieltjes_stopped_compensator() {
        let g = grid(20);
        let tau = 0.63;
        let lambda = GridProcess::smooth(g, g.times().map(|t| t.min(tau)).collect()).unwrap();
        let s = 0.4;
        let gate = GridProcess::smooth(g, g.times().map(|t| if t < s { 1.0 } else { 0.0 }).collect()).unwrap();
        let r = lebesgue_stieltjes_integral(&gate, &lambda).unwrap();
        for (k, t) in g.times().enumerate() {
            assert!((r.values[k] - t.min(s).min(tau)).abs() < 1e-14);
        }
    }

    #[test]
    fn integration_by_parts_residual_shrinks() {
        // XY − X_−·Y − Y_−·X − [X,Y] with X = W and Y = t + (default martingale).
        let mut prev = f64::INFINITY;
        for n in [64usize, 1024] {
            let g = grid(n);
            let mut mse = 0.0;
            for seed in 0..200 {
                let x = brownian(g, seed);
                let m = default_martingale(g, 0.3 + 0.002 * seed as f64);
                let y = GridProcess::new(
                    g,
                    m.values.iter().zip(g.times()).map(|(v, t)| v + t).collect(),
                    m.jumps.clone(),
                    ContinuousPart::FiniteVariation,
                )
                .unwrap();
                let r = x.terminal() * y.terminal()
                    - stochastic_integral(&x, &y).unwrap().terminal()
                    - stochastic_integral(&y, &x).unwrap().terminal()
                    - quadratic_covariation(&x, &y).unwrap().bracket.terminal();
                mse += r * r / 200.0;
            }
            assert!(mse < prev);
            prev = mse;
        }
        assert!(prev < 1e-3);
    }

    proptest! {
        #[test]
        fn covariation_symmetric_bilinear(seed in any::<u64>(), a in -3.0f64..3.0, tau in 0.01f64..0.99) {
            let g = grid(64);
            let w1 = brownian(g, seed);
            let w2 = brownian(g, seed ^ 0x55);
            let sum = GridProcess::new(
                g,
                w1.values.iter().zip(&w2.values).map(|(x, y)| a * x + y).collect(),
                vec![],
                ContinuousPart::Diffusive,
            ).unwrap();
            let q_1s = quadratic_covariation(&w1, &sum).unwrap().bracket.terminal();
            let q_s1 = quadratic_covariation(&sum, &w1).unwrap().bracket.terminal();
            let q_11 = quadratic_covariation(&w1, &w1).unwrap().bracket.terminal();
            let q_12 = quadratic_covariation(&w1, &w2).unwrap().bracket.terminal();
            prop_assert!((q_1s - q_s1).abs() < 1e-12);
            prop_assert!((q_1s - a * q_11 - q_12).abs() < 1e-12);
            let m = default_martingale(g, tau);
            let q = quadratic_covariation(&m, &m).unwrap().bracket;
            prop_assert!(q.values.windows(2).all(|v| v[1] >= v[0]));
            let q = quadratic_covariation(&sum, &sum).unwrap().bracket;
            prop_assert!(q.values.windows(2).all(|v| v[1] >= v[0]));
            prop_assert!(q.values[0] == 0.0);
        }
    }
}
