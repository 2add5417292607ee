use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataio::SensorLayout;
use crate::mhe::MheConfig;
use crate::simkit::{derive_seed, Scenario, ScenarioRole, SimConfig, SimConfigFile};
use crate::sysid::IdentificationConfig;
use crate::{Error, Result};

/// One sensor placement to evaluate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorCase {
    pub name: String,
    pub sensors: Vec<usize>,
}

/// Nodes for which time-series plot data is written.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlotSelection {
    pub thermal_nodes: Vec<usize>,
    pub smoke_nodes: Vec<usize>,
}

impl Default for PlotSelection {
    fn default() -> Self {
        Self {
            thermal_nodes: vec![3, 6, 8],
            smoke_nodes: vec![4, 7, 9],
        }
    }
}

fn default_seed() -> u64 {
    42
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_scenarios() -> Vec<Scenario> {
    Scenario::protocol()
}

fn default_cases() -> Vec<SensorCase> {
    [
        ("case1", vec![1, 5]),
        ("case2", vec![5]),
        ("case3", vec![5, 10]),
        ("case4", vec![1, 5, 10]),
    ]
    .into_iter()
    .map(|(name, sensors)| SensorCase {
        name: name.into(),
        sensors,
    })
    .collect()
}

/// Everything needed to rerun an experiment end to end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Root seed. The simulator and the sensor noise seeds are derived from it.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub simulation: SimConfigFile,
    #[serde(default = "default_scenarios")]
    pub scenarios: Vec<Scenario>,
    #[serde(default)]
    pub identification: IdentificationConfig,
    #[serde(default)]
    pub mhe: MheConfig,
    #[serde(default = "default_cases")]
    pub cases: Vec<SensorCase>,
    #[serde(default)]
    pub plots: PlotSelection,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            output_dir: default_output_dir(),
            simulation: SimConfigFile::default(),
            scenarios: default_scenarios(),
            identification: IdentificationConfig::default(),
            mhe: MheConfig::default(),
            cases: default_cases(),
            plots: PlotSelection::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(format!("experiment config: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    /// Simulator settings with the derived seed applied.
    pub fn sim_config(&self) -> Result<SimConfig> {
        let mut cfg = self.simulation.clone().into_config()?;
        cfg.rng_seed = derive_seed(self.seed, 0);
        Ok(cfg)
    }

    /// Estimator settings with the derived noise seed applied.
    pub fn mhe_config(&self) -> MheConfig {
        let mut cfg = self.mhe.clone();
        cfg.noise.seed = derive_seed(self.seed, 1);
        cfg
    }

    pub fn layouts(&self, node_count: usize) -> Result<Vec<(String, SensorLayout)>> {
        self.cases
            .iter()
            .map(|c| {
                SensorLayout::new(c.sensors.iter().copied(), node_count)
                    .map(|l| (c.name.clone(), l))
                    .map_err(|e| Error::Config(format!("case {}: {e}", c.name)))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let count = |r| self.scenarios.iter().filter(|s| s.role == r).count();
        if count(ScenarioRole::Train) == 0 || count(ScenarioRole::Validation) == 0 {
            return Err(Error::Config(
                "need at least one training and one validation scenario".into(),
            ));
        }
        if count(ScenarioRole::Validation) > 1 {
            return Err(Error::Config("only one validation scenario is supported".into()));
        }
        if self.cases.is_empty() {
            return Err(Error::Config("sensor cases must not be empty".into()));
        }
        let mut names: Vec<&str> = self.cases.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("sensor case names must be unique".into()));
        }
        if let Some(c) = self
            .cases
            .iter()
            .find(|c| c.name.is_empty() || c.name.contains(['/', '\\']) || c.name.starts_with('.'))
        {
            return Err(Error::Config(format!(
                "case name {:?} is not a plain directory name",
                c.name
            )));
        }
        self.identification.validate()?;
        self.mhe.validate()?;
        let sim = self.sim_config()?;
        sim.validate()?;
        let n = sim.geometry.node_count();
        self.layouts(n)?;
        for &i in self.plots.thermal_nodes.iter().chain(&self.plots.smoke_nodes) {
            if i == 0 || i > n {
                return Err(Error::Config(format!("plot node {i} outside 1..={n}")));
            }
        }
        Ok(())
    }
}
