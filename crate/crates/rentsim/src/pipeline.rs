use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rentsim_core::market::{self, run_year, MarketParams, MarketState};
use rentsim_core::optimizer::options_for_population;
use rentsim_core::population::{self, synthesize_population, Household, SynthesisParams};
use rentsim_core::scenario::{self, apply_scenario, diff_runs, RunView, Scenario, ScenarioDiff};
use rentsim_core::world::{load_world_with, World, ZoneId};
use rentsim_core::seed;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::RunError;

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), "/", env!("CARGO_PKG_VERSION"));

/// Loaded and validated inputs of a run.
#[derive(Clone, Debug)]
pub struct Inputs {
    pub config: RunConfig,
    pub world: World,
    pub synthesis: SynthesisParams,
    pub scenario: Option<Scenario>,
    /// hash state over everything but the scenario
    id_state: Sha256,
}

impl Inputs {
    pub fn load(config: &RunConfig) -> Result<Inputs, RunError> {
        config.validate()?;
        let w = &config.world;
        let mut world = load_world_with(&w.zones, &w.sites, &w.facilities, &w.service_radii)
            .map_err(RunError::at("world"))?;
        if let Some(p) = &w.distance_matrix {
            let matrix = read_distance_matrix(p, &world)?;
            world = world.with_distance_matrix(matrix).map_err(RunError::at("world"))?;
        }
        let synthesis = SynthesisParams::load(&config.synthesis).map_err(RunError::at("population"))?;
        synthesis.validate(&world).map_err(RunError::at("population"))?;
        let scenario = match &config.scenario {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| RunError::Config(format!("{}: {e}", p.display())))?;
                Some(parse_scenario(&text, &world, config)?)
            }
            None => None,
        };
        let id_state = id_state(config)?;
        Ok(Inputs {
            config: config.clone(),
            world,
            synthesis,
            scenario,
            id_state,
        })
    }

    /// Run id of the base run, or of a scenario run against it.
    pub fn run_id(&self, scenario: Option<&Scenario>) -> String {
        let mut h = self.id_state.clone();
        if let Some(s) = scenario {
            h.update(b"scenario\0");
            h.update(s.to_json().as_bytes());
        }
        hex::encode(&h.finalize()[..16])
    }
}

/// Parses a scenario body and checks it against the world, collecting every field error.
pub fn parse_scenario(text: &str, world: &World, config: &RunConfig) -> Result<Scenario, RunError> {
    let sc = Scenario::from_json(text, &config.world.service_radii).map_err(RunError::Scenario)?;
    let errs = sc.check_against(world);
    if errs.is_empty() {
        Ok(sc)
    } else {
        Err(RunError::Scenario(errs))
    }
}

#[derive(Serialize)]
struct IdParams<'a> {
    seed: u64,
    n_agents: usize,
    ga: &'a crate::config::GaSection,
    market: &'a crate::config::MarketSection,
    service_radii: &'a rentsim_core::world::ServiceRadii,
}

// Paths and the output location do not enter the id, only what the files contain.
fn id_state(config: &RunConfig) -> Result<Sha256, RunError> {
    let mut h = Sha256::new();
    h.update(CODE_VERSION.as_bytes());
    h.update(b"\0");
    let params = IdParams {
        seed: config.seed,
        n_agents: config.n_agents,
        ga: &config.ga,
        market: &config.market,
        service_radii: &config.world.service_radii,
    };
    h.update(serde_json::to_vec(&params).expect("params serialize"));
    for (what, path) in config.input_files() {
        if what == "scenario" {
            continue;
        }
        let bytes = fs::read(path).map_err(|e| RunError::Config(format!("{what} {}: {e}", path.display())))?;
        h.update(what.as_bytes());
        h.update(b"\0");
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(h)
}

#[derive(Deserialize)]
struct DistanceRow {
    from_id: u32,
    to_id: u32,
    distance_km: f64,
}

/// Reads a full `from_id,to_id,distance_km` table; the diagonal may be omitted.
pub fn read_distance_matrix(path: &Path, world: &World) -> Result<Vec<f64>, RunError> {
    let n = world.len();
    let bad = |msg: String| RunError::Config(format!("distance matrix {}: {msg}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let mut m: Vec<Option<f64>> = vec![None; n * n];
    for (k, row) in rdr.deserialize::<DistanceRow>().enumerate() {
        let r = row.map_err(|e| bad(format!("line {}: {e}", k + 2)))?;
        let i = world.zone_index(ZoneId(r.from_id)).map_err(|e| bad(e.to_string()))?;
        let j = world.zone_index(ZoneId(r.to_id)).map_err(|e| bad(e.to_string()))?;
        if m[i * n + j].replace(r.distance_km).is_some() {
            return Err(bad(format!("duplicate pair {} -> {}", r.from_id, r.to_id)));
        }
    }
    (0..n * n)
        .map(|k| match m[k] {
            Some(d) => Ok(d),
            None if k / n == k % n => Ok(0.0),
            None => Err(bad(format!(
                "missing pair {} -> {}",
                world.zones()[k / n].id,
                world.zones()[k % n].id
            ))),
        })
        .collect()
}

/// Options and market outcome for one world.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub options: Vec<Vec<ZoneId>>,
    pub market: MarketState,
}

impl Outcome {
    pub fn view(&self) -> RunView<'_> {
        RunView {
            options: &self.options,
            market: &self.market,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BaseRun {
    pub run_id: String,
    pub households: Vec<Household>,
    pub outcome: Outcome,
    pub timings_ms: BTreeMap<String, u64>,
}

#[derive(Clone, Debug)]
pub struct ScenarioRun {
    pub run_id: String,
    pub scenario: Scenario,
    pub world: World,
    pub outcome: Outcome,
    pub diff: ScenarioDiff,
    pub timings_ms: BTreeMap<String, u64>,
}

fn elapsed_ms(t: Instant) -> u64 {
    t.elapsed().as_millis() as u64
}

/// Optimizes and allocates `households` in `world` under the config's seeds.
pub fn simulate(
    inputs: &Inputs,
    world: &World,
    households: &[Household],
    timings: &mut BTreeMap<String, u64>,
    prefix: &str,
) -> Result<Outcome, RunError> {
    let cfg = &inputs.config;
    let t = Instant::now();
    let options = options_for_population(households, world, &cfg.ga.params(), cfg.seed)
        .map_err(RunError::at("optimizer"))?;
    timings.insert(format!("{prefix}optimize"), elapsed_ms(t));
    let t = Instant::now();
    let params = MarketParams {
        schedule: cfg.schedule(&inputs.synthesis.relocation_months)?,
        anchor: cfg.market.anchor,
        seed: cfg.seed,
    };
    let market = run_year(households, world, &options, &params).map_err(RunError::at("market"))?;
    timings.insert(format!("{prefix}allocate"), elapsed_ms(t));
    Ok(Outcome { options, market })
}

pub fn run_base(inputs: &Inputs) -> Result<BaseRun, RunError> {
    let mut timings = BTreeMap::new();
    let t = Instant::now();
    let households = synthesize_population(
        &inputs.world,
        &inputs.synthesis,
        inputs.config.n_agents,
        inputs.config.seed,
    )
    .map_err(RunError::at("population"))?;
    timings.insert("synthesize".to_string(), elapsed_ms(t));
    let outcome = simulate(inputs, &inputs.world, &households, &mut timings, "")?;
    Ok(BaseRun {
        run_id: inputs.run_id(None),
        households,
        outcome,
        timings_ms: timings,
    })
}

/// Re-runs the base population in the scenario world with the same seeds and diffs the
/// two runs.
pub fn run_scenario(inputs: &Inputs, base: &BaseRun, scenario: &Scenario) -> Result<ScenarioRun, RunError> {
    let mut timings = BTreeMap::new();
    let t = Instant::now();
    let world = apply_scenario(&inputs.world, scenario).map_err(RunError::at("scenario"))?;
    timings.insert("apply_scenario".to_string(), elapsed_ms(t));
    let outcome = simulate(inputs, &world, &base.households, &mut timings, "scenario_")?;
    let t = Instant::now();
    let diff = diff_runs(
        &base.households,
        &inputs.world,
        &world,
        base.outcome.view(),
        outcome.view(),
        scenario,
    )
    .map_err(RunError::at("scenario"))?;
    timings.insert("diff".to_string(), elapsed_ms(t));
    Ok(ScenarioRun {
        run_id: inputs.run_id(Some(scenario)),
        scenario: scenario.clone(),
        world,
        outcome,
        diff,
        timings_ms: timings,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub code_version: String,
    /// `base` or `scenario`
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_run_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    pub config: RunConfig,
    pub seeds: BTreeMap<String, u64>,
    pub n_agents: usize,
    pub unhoused: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_unhoused: Option<usize>,
    pub timings_ms: BTreeMap<String, u64>,
    /// sha256 of every output file
    pub files: BTreeMap<String, String>,
}

#[derive(Clone, Debug)]
pub struct RunArtifact {
    pub run_id: String,
    pub dir: PathBuf,
    pub manifest: Manifest,
    /// false when the run directory already existed and was reused
    pub fresh: bool,
}

fn seeds(master: u64) -> BTreeMap<String, u64> {
    // stage seeds as consumed by the core; per-agent seeds hang off these
    [
        ("master", master),
        ("workplaces", seed::derive(master, "workplaces", 0)),
        ("relocation", seed::derive(master, "relocation", 0)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

pub fn write_options(options: &[Vec<ZoneId>], households: &[Household], path: &Path) -> Result<(), RunError> {
    let err = RunError::output(path);
    let mut w = csv::Writer::from_path(path).map_err(|e| err(e.into()))?;
    w.write_record(["agent_id", "rank", "zone_id"]).map_err(|e| err(e.into()))?;
    for (h, opts) in households.iter().zip(options) {
        for (rank, z) in opts.iter().enumerate() {
            w.write_record([h.id.to_string(), (rank + 1).to_string(), z.to_string()])
                .map_err(|e| err(e.into()))?;
        }
    }
    w.flush().map_err(&err)
}

fn write_outcome(outcome: &Outcome, households: &[Household], dir: &Path, prefix: &str) -> Result<(), RunError> {
    write_options(&outcome.options, households, &dir.join(format!("{prefix}options.csv")))?;
    market::write_allocation(&outcome.market, &dir.join(format!("{prefix}allocation.csv")))
        .map_err(RunError::at("market"))?;
    market::write_zone_month(&outcome.market, &dir.join(format!("{prefix}zone_month.csv")))
        .map_err(RunError::at("market"))
}

/// Writes the base run, and the scenario run when given, into `dir`.
pub fn write_run_files(base: &BaseRun, scenario: Option<&ScenarioRun>, dir: &Path) -> Result<(), RunError> {
    population::write_population(&base.households, dir).map_err(RunError::at("population"))?;
    write_outcome(&base.outcome, &base.households, dir, "")?;
    if let Some(s) = scenario {
        write_outcome(&s.outcome, &base.households, dir, "scenario_")?;
        let p = dir.join("scenario.json");
        fs::write(&p, s.scenario.to_json() + "\n").map_err(RunError::output(&p))?;
        let p = dir.join("scenario_world");
        fs::create_dir_all(&p).map_err(RunError::output(&p))?;
        rentsim_core::world::write_world(&s.world, &p).map_err(RunError::at("scenario"))?;
        scenario::write_diff_zones(&s.diff, &dir.join("diff_zones.csv")).map_err(RunError::at("scenario"))?;
        scenario::write_diff_summary(&s.diff, &dir.join("diff_summary.csv")).map_err(RunError::at("scenario"))?;
        scenario::write_diff_geojson(&s.diff, &s.world, &dir.join("diff_zones.geojson"))
            .map_err(RunError::at("scenario"))?;
    }
    Ok(())
}

fn hash_files(dir: &Path, rel: &Path, out: &mut BTreeMap<String, String>) -> std::io::Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let name = rel.join(e.file_name());
        if e.file_type()?.is_dir() {
            hash_files(&e.path(), &name, out)?;
        } else {
            let digest = Sha256::digest(fs::read(e.path())?);
            out.insert(name.to_string_lossy().replace('\\', "/"), hex::encode(digest));
        }
    }
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, RunError> {
    let p = dir.join("manifest.json");
    let text = fs::read_to_string(&p).map_err(RunError::output(&p))?;
    serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", p.display())))
}

/// Writes the run into `<output_dir>/<run id>` through a temporary directory, so a run
/// directory is either complete or absent. An existing complete run is left untouched.
pub fn persist(
    inputs: &Inputs,
    base: &BaseRun,
    scenario: Option<&ScenarioRun>,
) -> Result<RunArtifact, RunError> {
    let out = &inputs.config.output_dir;
    let run_id = scenario.map_or(&base.run_id, |s| &s.run_id).clone();
    let dir = out.join(&run_id);
    if dir.join("manifest.json").is_file() {
        let manifest = read_manifest(&dir)?;
        return Ok(RunArtifact {
            run_id,
            dir,
            manifest,
            fresh: false,
        });
    }
    fs::create_dir_all(out).map_err(RunError::output(out))?;
    let tmp = tempfile::Builder::new()
        .prefix(&format!(".tmp-{run_id}-"))
        .tempdir_in(out)
        .map_err(RunError::output(out))?;
    write_run_files(base, scenario, tmp.path())?;
    let mut files = BTreeMap::new();
    hash_files(tmp.path(), Path::new(""), &mut files).map_err(RunError::output(tmp.path()))?;
    let mut timings = base.timings_ms.clone();
    if let Some(s) = scenario {
        timings.extend(s.timings_ms.clone());
    }
    let manifest = Manifest {
        run_id: run_id.clone(),
        code_version: CODE_VERSION.to_string(),
        kind: if scenario.is_some() { "scenario" } else { "base" }.to_string(),
        base_run_id: scenario.map(|_| base.run_id.clone()),
        scenario: scenario.map(|s| s.scenario.name.clone()),
        config: inputs.config.clone(),
        seeds: seeds(inputs.config.seed),
        n_agents: base.households.len(),
        unhoused: base.outcome.market.unhoused(),
        scenario_unhoused: scenario.map(|s| s.outcome.market.unhoused()),
        timings_ms: timings,
        files,
    };
    let p = tmp.path().join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&p, text + "\n").map_err(RunError::output(&p))?;
    let tmp_path = tmp.keep();
    if let Err(e) = fs::rename(&tmp_path, &dir) {
        let _ = fs::remove_dir_all(&tmp_path);
        // another writer finished the same run first
        if dir.join("manifest.json").is_file() {
            return Ok(RunArtifact {
                run_id,
                dir: dir.clone(),
                manifest: read_manifest(&dir)?,
                fresh: false,
            });
        }
        return Err(RunError::output(&dir)(e));
    }
    Ok(RunArtifact {
        run_id,
        dir,
        manifest,
        fresh: true,
    })
}

/// Full pipeline for one config: load → synthesize → optimize → allocate
/// (→ scenario run and diff), persisted atomically.
pub fn execute(config: &RunConfig) -> Result<RunArtifact, RunError> {
    let inputs = Inputs::load(config)?;
    let base = run_base(&inputs)?;
    let scenario = match &inputs.scenario {
        Some(s) => Some(run_scenario(&inputs, &base, s)?),
        None => None,
    };
    persist(&inputs, &base, scenario.as_ref())
}
