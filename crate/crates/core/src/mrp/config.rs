//! TOML representation of a Markov reward process.
//!
//! ```toml
//! num_states = 2
//! transition = [[0.5, 0.5], [1.0, 0.0]]
//!
//! [[rewards]]
//! from = 0
//! to = 1
//! atoms = [{ value = 0.2, prob = 0.5 }, { value = 0.8, prob = 0.5 }]
//! ```
//!
//! Deterministic rewards are a single atom. Unknown keys are rejected.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{MarkovRewardProcess, RewardAtom, RewardLaw};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomEntry {
    pub value: f64,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardEntry {
    pub from: usize,
    pub to: usize,
    pub atoms: Vec<AtomEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MrpFile {
    pub num_states: usize,
    pub transition: Vec<Vec<f64>>,
    #[serde(default)]
    pub rewards: Vec<RewardEntry>,
}

impl MrpFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        // Serializing plain numbers and vectors cannot fail.
        toml::to_string(self).expect("MRP file serializes")
    }

    /// Shape checks plus conversion; stochastic invariants are left to
    /// [`MarkovRewardProcess::validate`].
    pub fn to_mrp(&self) -> Result<MarkovRewardProcess> {
        let m = self.num_states;
        if m == 0 {
            return Err(Error::Parse("num_states must be positive".into()));
        }
        if self.transition.len() != m {
            return Err(Error::Parse(format!(
                "transition has {} rows, num_states is {m}",
                self.transition.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for e in &self.rewards {
            if !seen.insert((e.from, e.to)) {
                return Err(Error::Parse(format!(
                    "duplicate reward entry for {} -> {}",
                    e.from, e.to
                )));
            }
            if e.atoms.is_empty() {
                return Err(Error::Parse(format!(
                    "reward entry {} -> {} has no atoms",
                    e.from, e.to
                )));
            }
        }
        let laws = self.rewards.iter().map(|e| {
            let atoms = e
                .atoms
                .iter()
                .map(|a| RewardAtom {
                    value: a.value,
                    prob: a.prob,
                })
                .collect();
            ((e.from, e.to), RewardLaw::new(atoms))
        });
        MarkovRewardProcess::new(self.transition.clone(), laws).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_mrp(mrp: &MarkovRewardProcess) -> Self {
        let m = mrp.num_states();
        let mut rewards = Vec::new();
        for i in 0..m {
            for j in 0..m {
                let law = mrp.reward_law(i, j);
                if !law.is_empty() {
                    rewards.push(RewardEntry {
                        from: i,
                        to: j,
                        atoms: law
                            .atoms()
                            .iter()
                            .map(|a| AtomEntry {
                                value: a.value,
                                prob: a.prob,
                            })
                            .collect(),
                    });
                }
            }
        }
        Self {
            num_states: m,
            transition: (0..m).map(|i| mrp.row(i).to_vec()).collect(),
            rewards,
        }
    }
}

impl MarkovRewardProcess {
    /// Parses the TOML format described in [`MrpFile`]; the result is not yet validated.
    pub fn from_toml(text: &str) -> Result<Self> {
        MrpFile::from_toml(text)?.to_mrp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = r#"
num_states = 2
transition = [[0.5, 0.5], [1.0, 0.0]]

[[rewards]]
from = 0
to = 0
atoms = [{ value = 0.1, prob = 1.0 }]

[[rewards]]
from = 0
to = 1
atoms = [{ value = 0.2, prob = 0.5 }, { value = 0.8, prob = 0.5 }]

[[rewards]]
from = 1
to = 0
atoms = [{ value = 1.0, prob = 1.0 }]
"#;

    #[test]
    fn parses_and_validates() {
        let mrp = MarkovRewardProcess::from_toml(TWO).unwrap();
        assert!(mrp.validate().is_empty());
        assert_eq!(mrp.reward_law(0, 1).atoms().len(), 2);
        let back = MarkovRewardProcess::from_toml(&MrpFile::from_mrp(&mrp).to_toml()).unwrap();
        assert_eq!(back, mrp);
    }

    #[test]
    fn unknown_key_rejected() {
        let text = format!("{TWO}\ndiscount = 0.9\n");
        let err = MarkovRewardProcess::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("discount"), "{err}");
    }

    #[test]
    fn duplicate_entry_rejected() {
        let text = format!("{TWO}\n[[rewards]]\nfrom = 1\nto = 0\natoms = [{{ value = 0.0, prob = 1.0 }}]\n");
        assert!(MarkovRewardProcess::from_toml(&text).is_err());
    }

    #[test]
    fn ragged_rows_rejected() {
        let text = "num_states = 2\ntransition = [[1.0], [0.5, 0.5]]\n";
        assert!(MarkovRewardProcess::from_toml(text).is_err());
    }
}
