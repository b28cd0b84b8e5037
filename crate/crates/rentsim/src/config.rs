//! `run.toml`: everything one pipeline execution depends on.
//!
//! Relative paths are resolved against the directory holding the config file.

use std::path::{Path, PathBuf};

use rentsim_core::market::{default_schedule, Anchor};
use rentsim_core::optimizer::GaParams;
use rentsim_core::world::ServiceRadii;
use serde::{Deserialize, Serialize};

use crate::RunError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldFiles {
    pub zones: PathBuf,
    pub sites: PathBuf,
    pub facilities: PathBuf,
    /// optional `from_id,to_id,distance_km` table overriding centroid distances
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_matrix: Option<PathBuf>,
    #[serde(default)]
    pub service_radii: ServiceRadii,
}

/// GA settings; per-agent seeds always come from the master seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaSection {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
}

impl Default for GaSection {
    fn default() -> Self {
        let d = GaParams::default();
        GaSection {
            population_size: d.population_size,
            generations: d.generations,
            crossover_rate: d.crossover_rate,
            mutation_rate: d.mutation_rate,
        }
    }
}

impl GaSection {
    pub fn params(&self) -> GaParams {
        GaParams {
            population_size: self.population_size,
            generations: self.generations,
            crossover_rate: self.crossover_rate,
            mutation_rate: self.mutation_rate,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    /// new units per month; takes precedence over `yearly_supply`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<[u32; 12]>,
    /// new units per year, spread over months like the relocation distribution
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yearly_supply: Option<u32>,
    #[serde(default)]
    pub anchor: Anchor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub n_agents: usize,
    pub world: WorldFiles,
    pub synthesis: PathBuf,
    #[serde(default)]
    pub ga: GaSection,
    pub market: MarketSection,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<PathBuf>,
    /// concurrent scenario jobs in `serve`
    #[serde(default = "default_max_jobs")]
    pub max_jobs: usize,
}

fn default_max_jobs() -> usize {
    2
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, RunError> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        resolve(base_dir, &mut cfg.world.zones);
        resolve(base_dir, &mut cfg.world.sites);
        resolve(base_dir, &mut cfg.world.facilities);
        if let Some(p) = cfg.world.distance_matrix.as_mut() {
            resolve(base_dir, p);
        }
        resolve(base_dir, &mut cfg.synthesis);
        resolve(base_dir, &mut cfg.output_dir);
        if let Some(p) = cfg.scenario.as_mut() {
            resolve(base_dir, p);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    /// Every input file, in the order they enter the run id.
    pub fn input_files(&self) -> Vec<(&'static str, &Path)> {
        let mut v: Vec<(&'static str, &Path)> = vec![
            ("zones", &self.world.zones),
            ("sites", &self.world.sites),
            ("facilities", &self.world.facilities),
            ("synthesis", &self.synthesis),
        ];
        if let Some(p) = &self.world.distance_matrix {
            v.push(("distance_matrix", p));
        }
        if let Some(p) = &self.scenario {
            v.push(("scenario", p));
        }
        v
    }

    /// Checks everything that can be checked without reading the inputs.
    pub fn validate(&self) -> Result<(), RunError> {
        for (what, p) in self.input_files() {
            if !p.is_file() {
                return Err(RunError::Config(format!("{what} file {} does not exist", p.display())));
            }
        }
        if self.n_agents == 0 {
            return Err(RunError::Config("n_agents must be > 0".into()));
        }
        if self.max_jobs == 0 {
            return Err(RunError::Config("max_jobs must be > 0".into()));
        }
        if self.market.schedule.is_none() && self.market.yearly_supply.is_none() {
            return Err(RunError::Config(
                "market needs either `schedule` or `yearly_supply`".into(),
            ));
        }
        self.ga
            .params()
            .validate()
            .map_err(|e| RunError::Config(format!("ga: {e}")))?;
        Ok(())
    }

    /// Monthly new supply, spreading `yearly_supply` by `month_shares` when no explicit
    /// schedule is given.
    pub fn schedule(&self, month_shares: &[f64; 12]) -> Result<[u32; 12], RunError> {
        match (self.market.schedule, self.market.yearly_supply) {
            (Some(s), _) => Ok(s),
            (None, Some(total)) => default_schedule(total, month_shares).map_err(RunError::at("market")),
            (None, None) => Err(RunError::Config("market supply missing".into())),
        }
    }

    /// Same config with a different scenario (or none).
    pub fn with_scenario(&self, scenario: Option<PathBuf>) -> Self {
        RunConfig {
            scenario,
            ..self.clone()
        }
    }
}

/// Config written next to a generated synthetic city.
pub fn fixture_config_toml(scenario: Option<&str>) -> String {
    let mut s = String::from(
        "seed = 42\n\
         n_agents = 2000\n\
         synthesis = \"synthesis.toml\"\n\
         output_dir = \"runs\"\n",
    );
    if let Some(name) = scenario {
        s.push_str(&format!("scenario = \"scenarios/{name}.json\"\n"));
    }
    s.push_str(
        "\n[world]\n\
         zones = \"zones.csv\"\n\
         sites = \"sites.csv\"\n\
         facilities = \"facilities.csv\"\n\
         \n[ga]\n\
         population_size = 40\n\
         generations = 50\n\
         crossover_rate = 0.9\n\
         mutation_rate = 0.1\n\
         \n[market]\n\
         yearly_supply = 2400\n\
         anchor = \"auto\"\n",
    );
    s
}
