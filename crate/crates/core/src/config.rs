//! Experiment configuration (TOML).
//!
//! ```toml
//! name = "thue-morse-poisson"
//! mode = "poisson"            # or "geometric"
//! n = 512                     # N; omit when a [family] block is given
//! samples = 100000            # M
//! master_seed = 7
//! workers = 4
//! epsilon = 0.5
//! exact = true
//!
//! [model]
//! kind = "iid"
//! alphabet = ["a", "b"]
//! probs = [0.5, 0.5]
//!
//! [targets.v]
//! kind = "thue-morse"
//! length = 8
//!
//! [schedule]
//! kind = "linear"
//! offset = 0
//! ```
//!
//! Table schedules may list their rows inline (`tables = { "10" = [...] }`)
//! or as two-column CSV files (`csv = { "10" = "q10.csv" }`), resolved
//! relative to the config file.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bounds::DEFAULT_EPSILON;
use crate::counting::Mode;
use crate::cylinder::{periodic, thue_morse, TargetSet};
use crate::error::{Error, Result};
use crate::model::{Alphabet, MixingProfile, ProcessModel, Symbol};
use crate::oracle::EnumerationBudget;
use crate::schedule::{read_table_csv, Schedule, ScheduleKind};

const MODULE: &str = "cli";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKindSpec,
    pub alphabet: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<Vec<Vec<f64>>>,
    /// Separator between symbols in word strings (needed for multi-character symbols).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separator: Option<String>,
    /// Replaces the exact φ of the model in the bound evaluation: `phi_decay[i] = φ(i+1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_decay: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKindSpec {
    Iid,
    Markov,
}

impl ModelSpec {
    pub fn build(&self) -> Result<ProcessModel> {
        let alphabet = Alphabet::new(self.alphabet.clone())?;
        match self.kind {
            ModelKindSpec::Iid => {
                let probs = self
                    .probs
                    .clone()
                    .ok_or_else(|| Error::input(MODULE, "iid model needs `probs`"))?;
                ProcessModel::iid(alphabet, probs)
            }
            ModelKindSpec::Markov => {
                let rows = self
                    .transition
                    .clone()
                    .ok_or_else(|| Error::input(MODULE, "markov model needs `transition`"))?;
                ProcessModel::markov(alphabet, rows)
            }
        }
    }

    pub fn profile(&self, model: &ProcessModel) -> Result<MixingProfile> {
        match &self.phi_decay {
            Some(values) => MixingProfile::from_decay(values.clone()),
            None => Ok(model.mixing_profile()),
        }
    }
}

/// A target set given by its words or produced by a generator. Generators
/// take `length` symbols of a sequence after skipping `skip` of them; in a
/// family run the length is the level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetSpec {
    Words {
        words: Vec<String>,
    },
    /// Thue–Morse over the first two symbols; `complement` swaps them.
    ThueMorse {
        #[serde(default)]
        length: Option<usize>,
        #[serde(default)]
        skip: usize,
        #[serde(default)]
        complement: bool,
    },
    Periodic {
        pattern: String,
        #[serde(default)]
        length: Option<usize>,
        #[serde(default)]
        skip: usize,
    },
    /// A trajectory sampled from the model itself.
    Sampled {
        seed: u64,
        #[serde(default)]
        length: Option<usize>,
        #[serde(default)]
        skip: usize,
    },
}

impl TargetSpec {
    pub fn is_generator(&self) -> bool {
        !matches!(self, TargetSpec::Words { .. })
    }

    /// Builds the set; `level` overrides a generator's length.
    pub fn build(&self, model: &ProcessModel, separator: Option<&str>, level: Option<usize>) -> Result<TargetSet> {
        let length = |given: Option<usize>| {
            level
                .or(given)
                .filter(|&l| l >= 1)
                .ok_or_else(|| Error::input(MODULE, "target generator needs `length` >= 1"))
        };
        let alphabet = model.alphabet();
        let seq: Vec<Symbol> = match self {
            TargetSpec::Words { words } => {
                if level.is_some() {
                    return Err(Error::input(MODULE, "family runs need generated targets, not fixed words"));
                }
                let parsed = words.iter().map(|w| alphabet.parse_word(w, separator)).collect::<Result<Vec<_>>>()?;
                return TargetSet::new(parsed);
            }
            TargetSpec::ThueMorse { length: l, skip, complement } => {
                let l = length(*l)?;
                thue_morse(skip + l)[*skip..].iter().map(|&b| if *complement { 1 - b } else { b }).collect()
            }
            TargetSpec::Periodic { pattern, length: l, skip } => {
                let l = length(*l)?;
                let pat = alphabet.parse_word(pattern, separator)?;
                if pat.is_empty() {
                    return Err(Error::input(MODULE, "periodic pattern is empty"));
                }
                periodic(&pat, skip + l)[*skip..].to_vec()
            }
            TargetSpec::Sampled { seed, length: l, skip } => {
                let l = length(*l)?;
                model.stream(*seed).skip(*skip).take(l).collect()
            }
        };
        TargetSet::single(seq)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetsSpec {
    pub v: TargetSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<TargetSpec>,
}

/// How `N_L` is chosen at each level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NRule {
    /// `N_L = ⌈factor / P(T_L)⌉` with `T_L` the `V` (default) or `W` target.
    InverseProb {
        factor: f64,
        #[serde(default)]
        of: WhichTarget,
    },
    Fixed {
        n: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WhichTarget {
    #[default]
    V,
    W,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    /// First and last level (target length), inclusive.
    pub from: usize,
    pub to: usize,
    pub n_rule: NRule,
}

impl FamilySpec {
    pub fn levels(&self) -> Result<Vec<usize>> {
        if self.from == 0 || self.from > self.to {
            return Err(Error::input(MODULE, format!("empty family range {}..={}", self.from, self.to)));
        }
        Ok((self.from..=self.to).collect())
    }

    pub fn n_for(&self, p_v: f64, p_w: Option<f64>) -> Result<u64> {
        match &self.n_rule {
            NRule::Fixed { n } => Ok(*n),
            NRule::InverseProb { factor, of } => {
                let p = match of {
                    WhichTarget::V => p_v,
                    WhichTarget::W => p_w.ok_or_else(|| Error::input(MODULE, "n_rule uses W but no W is given"))?,
                };
                let n = (factor / p).ceil();
                if !(n >= 1.0 && n < u64::MAX as f64) {
                    return Err(Error::input(MODULE, format!("n_rule gives an invalid N = {n}")));
                }
                Ok(n as u64)
            }
        }
    }
}

fn default_workers() -> usize {
    1
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_true() -> bool {
    true
}

fn default_budget() -> EnumerationBudget {
    EnumerationBudget::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    pub samples: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_true")]
    pub exact: bool,
    #[serde(default = "default_budget")]
    pub budget: EnumerationBudget,
    /// `N` values for the schedule audit; defaults to the run's `N`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit_ns: Option<Vec<u64>>,
    /// Fixes `R` instead of choosing `R = M_N + window`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_r: Option<u64>,
    pub model: ModelSpec,
    pub targets: TargetsSpec,
    pub schedule: Schedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilySpec>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::input(MODULE, format!("config parse error: {e}")))?;
        resolve_table_csv(&mut table, base_dir)?;
        let config: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| Error::input(MODULE, format!("config error: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_toml_str(&text, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::input(MODULE, "samples (M) must be >= 1"));
        }
        if self.workers == 0 {
            return Err(Error::input(MODULE, "workers must be >= 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::input(MODULE, "epsilon must lie in (0,1)"));
        }
        if self.budget.max_states == 0 || self.budget.max_work == 0 {
            return Err(Error::input(MODULE, "budget limits must be positive"));
        }
        if self.mode == Mode::Geometric && self.targets.w.is_none() {
            return Err(Error::input(MODULE, "geometric mode requires a W target"));
        }
        if self.mode == Mode::Poisson && self.targets.w.is_some() {
            return Err(Error::input(MODULE, "poisson mode takes no W target"));
        }
        match (&self.family, self.n) {
            (None, None) => return Err(Error::input(MODULE, "give either `n` or a [family] block")),
            (Some(_), Some(_)) => return Err(Error::input(MODULE, "`n` and [family] are mutually exclusive")),
            (None, Some(0)) => return Err(Error::input(MODULE, "n must be >= 1")),
            (Some(f), None) => {
                f.levels()?;
            }
            _ => {}
        }
        if let Some(ns) = &self.audit_ns {
            if ns.is_empty() || ns.contains(&0) {
                return Err(Error::input(MODULE, "audit_ns must be a nonempty list of N >= 1"));
            }
        }
        self.model.build()?;
        Ok(())
    }
}

/// Replaces `schedule.csv = { N = path }` with inline `tables`.
fn resolve_table_csv(table: &mut toml::Table, base_dir: Option<&Path>) -> Result<()> {
    let Some(toml::Value::Table(sched)) = table.get_mut("schedule") else {
        return Ok(());
    };
    let Some(csv) = sched.remove("csv") else {
        return Ok(());
    };
    let toml::Value::Table(files) = csv else {
        return Err(Error::input(MODULE, "schedule.csv must map N to a file path"));
    };
    let mut rows = toml::Table::new();
    for (n, path) in files {
        let path = path
            .as_str()
            .ok_or_else(|| Error::input(MODULE, "schedule.csv paths must be strings"))?;
        let full = base_dir.map_or_else(|| Path::new(path).to_path_buf(), |d| d.join(path));
        let file = std::fs::File::open(&full).map_err(|e| Error::io(full.display().to_string(), e))?;
        let values = read_table_csv(file)?;
        rows.insert(n, toml::Value::Array(values.into_iter().map(|q| toml::Value::Integer(q as i64)).collect()));
    }
    sched.insert("tables".into(), toml::Value::Table(rows));
    Ok(())
}

/// Inline table schedule from explicit rows, for programmatic configs.
pub fn table_schedule(rows: BTreeMap<u64, Vec<u64>>) -> Result<Schedule> {
    Schedule::new(ScheduleKind::Table { tables: rows })
}
