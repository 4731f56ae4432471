//! Named simulators with their input domains.

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::functions::{cauchysine, exp2d, f2d, friedman5, gramacy1d};
use super::keyed::{mixture_sim, seeded_noise_sim};
use super::optim::{fsim, true_fmin};

/// Noise level of the seeded-noise cartoon simulator.
pub const NOISY_SD: f64 = 0.1;
/// Fraction of inputs on which the mixture cartoon returns the wrong solution.
pub const MIXTURE_P_BAD: f64 = 0.1;
/// Offset of the wrong solution in the mixture cartoon.
pub const MIXTURE_OFFSET: f64 = 0.5;

/// Catalog entry describing a simulator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulatorSpec {
    pub name: &'static str,
    pub dims: usize,
    pub domain: Vec<(f64, f64)>,
    /// A separate smooth "true" function is available besides the simulator output.
    pub truth_available: bool,
    pub description: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Simulator {
    Gramacy1d,
    Cauchysine,
    Exp2d,
    Friedman5,
    Fsim,
    TrueFmin,
    F2d,
    NoisyGramacy,
    MixtureGramacy,
}

impl Simulator {
    pub const ALL: [Simulator; 9] = [
        Simulator::Gramacy1d,
        Simulator::Cauchysine,
        Simulator::Exp2d,
        Simulator::Friedman5,
        Simulator::Fsim,
        Simulator::TrueFmin,
        Simulator::F2d,
        Simulator::NoisyGramacy,
        Simulator::MixtureGramacy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Simulator::Gramacy1d => "gramacy1d",
            Simulator::Cauchysine => "cauchysine",
            Simulator::Exp2d => "exp2d",
            Simulator::Friedman5 => "friedman5",
            Simulator::Fsim => "fsim",
            Simulator::TrueFmin => "true_fmin",
            Simulator::F2d => "f2d",
            Simulator::NoisyGramacy => "noisy_gramacy",
            Simulator::MixtureGramacy => "mixture_gramacy",
        }
    }

    /// Looks a simulator up by name; the error lists the valid names.
    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|s| s.name() == name)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|s| s.name()).collect();
                Error::Config(format!(
                    "unknown simulator '{name}'; valid names: {}",
                    names.join(", ")
                ))
            })
    }

    pub fn spec(self) -> SimulatorSpec {
        let (dims, domain, truth_available, description) = match self {
            Simulator::Gramacy1d => (
                1,
                vec![(0.5, 2.5)],
                false,
                "sin(10πx)/(2x) + (x−1)^4; sparse-data oscillation",
            ),
            Simulator::Cauchysine => (
                1,
                vec![(0.0, TAU)],
                false,
                "sin(x) − 0.02·Cauchy(x; 1.57, 0.05); nonstationary spike",
            ),
            Simulator::Exp2d => (2, vec![(-2.0, 6.0); 2], false, "x1·exp(−x1² − x2²)"),
            Simulator::Friedman5 => (
                5,
                vec![(0.0, 1.0); 5],
                false,
                "10 sin(π x1 x2) + 20(x3 − 0.5)² + 10 x4 + 5 x5",
            ),
            Simulator::Fsim => (
                1,
                vec![(-1.5, 1.5)],
                true,
                "Nelder-Mead minimum of x1 ↦ f2d(x1, x) started at x1 = x; truth is true_fmin",
            ),
            Simulator::TrueFmin => (
                1,
                vec![(-1.5, 1.5)],
                false,
                "global minimum over x1 of f2d(x1, x)",
            ),
            Simulator::F2d => (2, vec![(-1.5, 1.5); 2], false, "−w(x1)·w(x2)"),
            Simulator::NoisyGramacy => (
                1,
                vec![(0.5, 2.5)],
                true,
                "gramacy1d plus N(0, 0.1²) noise keyed by x; truth is gramacy1d",
            ),
            Simulator::MixtureGramacy => (
                1,
                vec![(0.5, 2.5)],
                true,
                "gramacy1d, or gramacy1d + 0.5 on a keyed 10% of inputs; truth is gramacy1d",
            ),
        };
        SimulatorSpec {
            name: self.name(),
            dims,
            domain,
            truth_available,
            description,
        }
    }

    pub fn dims(self) -> usize {
        self.spec().dims
    }

    fn check_dims(self, x: &[f64]) -> Result<()> {
        let m = self.dims();
        if x.len() != m {
            return Err(Error::invalid(format!(
                "{} takes {m} inputs, got {}",
                self.name(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Simulator output at one input.
    pub fn eval(self, x: &[f64]) -> Result<f64> {
        self.check_dims(x)?;
        let gram = |t: f64| gramacy1d(t).unwrap_or(f64::NAN);
        let v = match self {
            Simulator::Gramacy1d => gramacy1d(x[0])?,
            Simulator::Cauchysine => cauchysine(x[0]),
            Simulator::Exp2d => exp2d(x[0], x[1]),
            Simulator::Friedman5 => friedman5(&[x[0], x[1], x[2], x[3], x[4]]),
            Simulator::Fsim => fsim(x[0])?,
            Simulator::TrueFmin => true_fmin(x[0]),
            Simulator::F2d => f2d(x[0], x[1]),
            Simulator::NoisyGramacy => seeded_noise_sim(gram, x[0], NOISY_SD),
            Simulator::MixtureGramacy => {
                mixture_sim(gram, |t| gram(t) + MIXTURE_OFFSET, x[0], MIXTURE_P_BAD)
            }
        };
        if !v.is_finite() {
            return Err(Error::invalid(format!(
                "{} undefined at {x:?}",
                self.name()
            )));
        }
        Ok(v)
    }

    /// The smooth function the simulator approximates, where one exists.
    pub fn truth(self, x: &[f64]) -> Option<Result<f64>> {
        if let Err(e) = self.check_dims(x) {
            return Some(Err(e));
        }
        match self {
            Simulator::Fsim => Some(Ok(true_fmin(x[0]))),
            Simulator::NoisyGramacy | Simulator::MixtureGramacy => Some(gramacy1d(x[0])),
            _ => None,
        }
    }
}

impl fmt::Display for Simulator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Simulator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_name(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_is_consistent() {
        for sim in Simulator::ALL {
            let spec = sim.spec();
            assert_eq!(Simulator::from_name(spec.name).unwrap(), sim);
            assert_eq!(spec.domain.len(), spec.dims);
            assert!(spec.domain.iter().all(|(lo, hi)| lo < hi));
            let mid: Vec<f64> = spec.domain.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
            assert!(sim.eval(&mid).unwrap().is_finite());
            assert_eq!(sim.truth(&mid).is_some(), spec.truth_available);
        }
    }

    #[test]
    fn unknown_name_lists_choices() {
        let err = Simulator::from_name("branin").unwrap_err().to_string();
        assert!(err.contains("gramacy1d") && err.contains("fsim"));
    }

    #[test]
    fn wrong_arity_rejected() {
        assert!(Simulator::Exp2d.eval(&[1.0]).is_err());
        assert!(Simulator::Gramacy1d.eval(&[0.0]).is_err());
    }
}
