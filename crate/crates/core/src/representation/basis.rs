use crate::error::{Error, Result};
use crate::levy_sim::LevyModel;
use crate::scalar::Real;

/// Functions `f_1..f_k` on the support of ν, stored as
/// `values[i][m] = f_i(x_m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthonormalBasis<T> {
    support: Vec<T>,
    values: Vec<Vec<T>>,
}

pub const ORTHONORMAL_TOL: f64 = 1e-12;

impl<T: Real> OrthonormalBasis<T> {
    /// `f_i = 1_{x_i} / √ν_i`, complete for a finitely supported ν.
    pub fn canonical(model: &LevyModel<T>) -> Self {
        let k = model.nu.len();
        let values = (0..k)
            .map(|i| {
                (0..k)
                    .map(|m| {
                        if i == m {
                            model.nu[i].intensity.sqrt().recip()
                        } else {
                            T::zero()
                        }
                    })
                    .collect()
            })
            .collect();
        OrthonormalBasis {
            support: model.nu.iter().map(|a| a.size).collect(),
            values,
        }
    }

    /// Checked constructor: the functions must be orthonormal in `L²(ν)`.
    pub fn new(model: &LevyModel<T>, values: Vec<Vec<T>>) -> Result<Self> {
        let basis = Self::unchecked(model, values)?;
        let gram = basis.gram(model)?;
        for (i, row) in gram.iter().enumerate() {
            for (j, &g) in row.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                if (g.to_f64_lossy() - want).abs() > ORTHONORMAL_TOL {
                    return Err(Error::Configuration(format!(
                        "basis functions {i} and {j} have inner product {g}, expected {want}"
                    )));
                }
            }
        }
        Ok(basis)
    }

    /// Basis slots without the orthonormality check (degenerate slots for diagnostics).
    pub fn unchecked(model: &LevyModel<T>, values: Vec<Vec<T>>) -> Result<Self> {
        let k = model.nu.len();
        if let Some(i) = values.iter().position(|f| f.len() != k) {
            return Err(Error::Structural(format!(
                "basis function {i} is not given on the {k} support points of nu"
            )));
        }
        Ok(OrthonormalBasis {
            support: model.nu.iter().map(|a| a.size).collect(),
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn support(&self) -> &[T] {
        &self.support
    }

    /// `f_i(x_m)`.
    pub fn value(&self, i: usize, m: usize) -> T {
        self.values[i][m]
    }

    pub fn matches(&self, model: &LevyModel<T>) -> bool {
        self.support.len() == model.nu.len() && self.support.iter().zip(&model.nu).all(|(&x, a)| x == a.size)
    }

    fn require_match(&self, model: &LevyModel<T>) -> Result<()> {
        if !self.matches(model) {
            return Err(Error::Structural(
                "basis support does not match the jump measure of the model".into(),
            ));
        }
        Ok(())
    }

    /// `∫ f_i dν`.
    pub fn mean(&self, i: usize, model: &LevyModel<T>) -> Result<T> {
        self.require_match(model)?;
        Ok(self.values[i]
            .iter()
            .zip(&model.nu)
            .map(|(&f, a)| f * a.intensity)
            .sum())
    }

    /// `∫ f_i f_j dν`, the rate of `⟨X^{f_i}, X^{f_j}⟩`.
    pub fn inner(&self, i: usize, j: usize, model: &LevyModel<T>) -> Result<T> {
        self.require_match(model)?;
        Ok(self.values[i]
            .iter()
            .zip(&self.values[j])
            .zip(&model.nu)
            .map(|((&f, &g), a)| f * g * a.intensity)
            .sum())
    }

    pub fn gram(&self, model: &LevyModel<T>) -> Result<Vec<Vec<T>>> {
        (0..self.len())
            .map(|i| (0..self.len()).map(|j| self.inner(i, j, model)).collect())
            .collect()
    }
}
