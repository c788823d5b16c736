use serde::{Deserialize, Serialize};

use super::family::MartingaleFamily;
use crate::error::{Error, Result};
use crate::random_time::EnlargedScenario;
use crate::scalar::Real;

/// Function `g` of the terminal level in survival claims.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TerminalFunction<T> {
    One,
    Identity,
    /// `x` clipped to `[-bound, bound]`.
    Clip {
        bound: T,
    },
}

impl<T: Real> TerminalFunction<T> {
    pub fn eval(&self, x: T) -> T {
        match *self {
            TerminalFunction::One => T::one(),
            TerminalFunction::Identity => x,
            TerminalFunction::Clip { bound } => x.max(-bound).min(bound),
        }
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, TerminalFunction::Identity)
    }

    pub fn label(&self) -> String {
        match self {
            TerminalFunction::One => "1".into(),
            TerminalFunction::Identity => "L_T".into(),
            TerminalFunction::Clip { bound } => format!("clip{bound}(L_T)"),
        }
    }
}

/// Role of a payoff in a multiplicity panel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PayoffClass {
    /// Functional of the reference path only.
    Reference,
    /// Functional of the default indicator only.
    Default,
    /// Both.
    Mixed,
    Constant,
}

/// Terminal payoffs addressable by identifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Payoff<T> {
    /// `W^σ_T`.
    WsigmaTerminal,
    /// `L_T`.
    LevelTerminal,
    /// `X^{f_i}_T`, zero-based index.
    JumpTerminal {
        index: usize,
    },
    /// `M_T`.
    DefaultMartingale,
    /// `H_T`.
    DefaultIndicator,
    /// `g(L_T)·(1 − H_s)`.
    Survival {
        g: TerminalFunction<T>,
        s: T,
    },
    /// `g(L_T)·A_s`, measurable with respect to the reference filtration; `s` on the grid.
    AzemaWeighted {
        g: TerminalFunction<T>,
        s: T,
    },
    Constant {
        value: T,
    },
}

impl<T: Real> Payoff<T> {
    pub fn name(&self) -> String {
        match self {
            Payoff::WsigmaTerminal => "W_T".into(),
            Payoff::LevelTerminal => "L_T".into(),
            Payoff::JumpTerminal { index } => format!("Xf{}_T", index + 1),
            Payoff::DefaultMartingale => "M_T".into(),
            Payoff::DefaultIndicator => "H_T".into(),
            Payoff::Survival { g, s } => format!("{}*(1-H_{s})", g.label()),
            Payoff::AzemaWeighted { g, s } => format!("{}*A_{s}", g.label()),
            Payoff::Constant { value } => format!("const_{value}"),
        }
    }

    pub fn class(&self) -> PayoffClass {
        match self {
            Payoff::WsigmaTerminal
            | Payoff::LevelTerminal
            | Payoff::JumpTerminal { .. }
            | Payoff::AzemaWeighted { .. } => PayoffClass::Reference,
            Payoff::DefaultMartingale | Payoff::DefaultIndicator => PayoffClass::Default,
            Payoff::Survival { .. } => PayoffClass::Mixed,
            Payoff::Constant { .. } => PayoffClass::Constant,
        }
    }

    pub fn validate(&self, horizon: T) -> Result<()> {
        if let Payoff::Survival { g, s } | Payoff::AzemaWeighted { g, s } = self {
            if !(*s >= T::zero() && *s <= horizon) {
                return Err(Error::Configuration(format!(
                    "survival anchor s = {s} outside [0, {horizon}]"
                )));
            }
            if let TerminalFunction::Clip { bound } = g {
                if !(bound.is_finite() && *bound > T::zero()) {
                    return Err(Error::Configuration("clip bound must be finite and > 0".into()));
                }
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, scenario: &EnlargedScenario<T>, family: &MartingaleFamily<T>) -> Result<T> {
        Ok(match self {
            Payoff::WsigmaTerminal => family.wsigma.terminal(),
            Payoff::LevelTerminal => *scenario.path.l_values.last().expect("nonempty grid"),
            Payoff::JumpTerminal { index } => family
                .xf
                .get(*index)
                .ok_or_else(|| Error::Configuration(format!("payoff references missing jump member {}", index + 1)))?
                .terminal(),
            Payoff::DefaultMartingale => family.m.terminal(),
            Payoff::DefaultIndicator => *scenario.h_values.last().expect("nonempty grid"),
            Payoff::Survival { g, s } => {
                let survived = !(scenario.defaulted && scenario.tau <= *s);
                let level = *scenario.path.l_values.last().expect("nonempty grid");
                if survived {
                    g.eval(level)
                } else {
                    T::zero()
                }
            }
            Payoff::AzemaWeighted { g, s } => {
                let k = scenario.path.grid.index_of(*s)?;
                g.eval(*scenario.path.l_values.last().expect("nonempty grid")) * scenario.a_values[k]
            }
            Payoff::Constant { value } => *value,
        })
    }
}
