use std::fmt;

use super::basis::OrthonormalBasis;
use crate::error::{Error, Result};
use crate::levy_sim::{Clock, LevyModel};
use crate::random_time::{CantorComplement, EnlargedScenario};
use crate::scalar::Real;
use crate::stoch_calc::{ContinuousPart, GridProcess, JumpMark};

/// A member of the orthogonal family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Member {
    Wsigma,
    /// `X^{f_i}`.
    Jump(usize),
    /// `M = H − Λ^G`.
    Default,
}

impl fmt::Display for Member {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Member::Wsigma => f.write_str("W"),
            Member::Jump(i) => write!(f, "Xf{}", i + 1),
            Member::Default => f.write_str("M"),
        }
    }
}

/// Which side of a splitting set carries a member's bracket.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Carrier {
    /// Absolutely continuous bracket (or jumps at times in the set).
    Inside,
    /// Singular continuous bracket on the Cantor set.
    Outside,
    /// Both parts present.
    Both,
}

/// `{W^σ, X^{f_1}, …, X^{f_k}, M}` on one scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct MartingaleFamily<T> {
    pub wsigma: GridProcess<T>,
    pub xf: Vec<GridProcess<T>>,
    pub m: GridProcess<T>,
    /// `∫ f_i f_j dν`; `⟨X^{f_i}, X^{f_j}⟩_t` is `t` times this.
    pub jump_gram: Vec<Vec<T>>,
    clock: Clock<T>,
    /// Per-cell singular (Cantor) part of the continuous increments of `M`.
    m_singular: Vec<T>,
}

/// Builds the family from a scenario.
pub fn build_family<T: Real>(
    model: &LevyModel<T>,
    basis: &OrthonormalBasis<T>,
    scenario: &EnlargedScenario<T>,
) -> Result<MartingaleFamily<T>> {
    if !basis.matches(model) {
        return Err(Error::Structural(
            "basis support does not match the jump measure of the model".into(),
        ));
    }
    let path = &scenario.path;
    let grid = path.grid;
    let wsigma = GridProcess {
        grid,
        values: path.w_values.clone(),
        jumps: Vec::new(),
        continuous: ContinuousPart::Diffusive,
    };
    let mut xf = Vec::with_capacity(basis.len());
    for i in 0..basis.len() {
        let compensator = basis.mean(i, model)?;
        let mut jumps = Vec::new();
        let mut values = Vec::with_capacity(grid.len());
        let mut acc = T::zero();
        let mut next = 0;
        for k in 0..grid.len() {
            let t = grid.time(k);
            while next < path.jumps.len() && path.jumps[next].time <= t {
                let j = path.jumps[next];
                let size = basis.value(i, j.atom);
                if size != T::zero() {
                    acc += size;
                    jumps.push(JumpMark { time: j.time, size });
                }
                next += 1;
            }
            values.push(acc - t * compensator);
        }
        xf.push(GridProcess {
            grid,
            values,
            jumps,
            continuous: ContinuousPart::FiniteVariation,
        });
    }
    let lambda_sing: Vec<T> = scenario
        .lambda_values
        .iter()
        .zip(&scenario.lambda_ac_values)
        .map(|(&l, &a)| l - a)
        .collect();
    let m_singular = lambda_sing.windows(2).map(|w| -(w[1] - w[0])).collect();
    Ok(MartingaleFamily {
        wsigma,
        xf,
        m: scenario.m_process(),
        jump_gram: basis.gram(model)?,
        clock: path.clock,
        m_singular,
    })
}

impl<T: Real> MartingaleFamily<T> {
    pub fn members(&self) -> Vec<Member> {
        let mut out = vec![Member::Wsigma];
        out.extend((0..self.xf.len()).map(Member::Jump));
        out.push(Member::Default);
        out
    }

    pub fn process(&self, member: Member) -> Result<&GridProcess<T>> {
        match member {
            Member::Wsigma => Ok(&self.wsigma),
            Member::Jump(i) => self
                .xf
                .get(i)
                .ok_or_else(|| Error::Configuration(format!("family has no jump member {}", i + 1))),
            Member::Default => Ok(&self.m),
        }
    }

    /// `⟨X^{f_i}, X^{f_j}⟩_t`.
    pub fn jump_bracket_target(&self, i: usize, j: usize, t: T) -> T {
        t * self.jump_gram[i][j]
    }

    /// Per-cell continuous increments of a member split into (absolutely
    /// continuous, singular) parts.
    fn continuous_split(&self, member: Member, k: usize, continuous: T) -> (T, T) {
        match member {
            Member::Wsigma => match self.clock {
                Clock::Calendar => (continuous, T::zero()),
                Clock::Cantor { .. } => (T::zero(), continuous),
            },
            Member::Jump(_) => (continuous, T::zero()),
            Member::Default => {
                let s = self.m_singular[k];
                (continuous - s, s)
            }
        }
    }

    /// Cell increments of `member` restricted to the set `d` and to its
    /// complement: `(Δ(1_D·X)_k, Δ(1_{D^c}·X)_k)` for every cell.
    pub fn split_increments(&self, member: Member, d: &CantorComplement<T>) -> Result<Vec<(T, T)>> {
        let p = self.process(member)?;
        let offsets = p.cell_offsets();
        let mut out = Vec::with_capacity(p.grid.n_steps);
        for k in 0..p.grid.n_steps {
            let cell = &p.jumps[offsets[k]..offsets[k + 1]];
            let jump_sum: T = cell.iter().map(|j| j.size).sum();
            let continuous = p.values[k + 1] - p.values[k] - jump_sum;
            let (mut inside, mut outside) = self.continuous_split(member, k, continuous);
            // Γ crosses Θ at τ, so the part of Λ^G growing in τ's cell locates
            // τ; distances to the Cantor set decide only when both parts grow.
            let default_side = match member {
                Member::Default => {
                    let (ac, sing) = self.continuous_split(member, k, continuous);
                    match (ac != T::zero(), sing != T::zero()) {
                        (true, false) => Some(true),
                        (false, true) => Some(false),
                        _ => None,
                    }
                }
                _ => None,
            };
            for j in cell {
                if default_side.unwrap_or_else(|| d.contains(j.time)) {
                    inside += j.size;
                } else {
                    outside += j.size;
                }
            }
            out.push((inside, outside));
        }
        Ok(out)
    }

    /// Side of the Cantor split carrying the member's bracket.
    pub fn carrier(&self, member: Member, d: &CantorComplement<T>) -> Result<Carrier> {
        let parts = self.split_increments(member, d)?;
        let inside = parts.iter().any(|&(a, _)| a != T::zero());
        let outside = parts.iter().any(|&(_, b)| b != T::zero());
        Ok(match (inside, outside) {
            (true, true) => Carrier::Both,
            (false, true) => Carrier::Outside,
            _ => Carrier::Inside,
        })
    }
}
