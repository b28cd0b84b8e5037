//! Transport development scenarios: new facilities, the rent response around them, and
//! the comparison of a scenario run against its paired base run.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::csvout::CsvOut;
use crate::error::{Error, Result};
use crate::geometry::{self, euclid, Point};
use crate::market::MarketState;
use crate::population::Household;
use crate::world::{
    parse_multipoint, FacilityGeometry, Mode, ServiceRadii, TransportFacility, World, Zone,
    ZoneId,
};

/// Spacing of the quadrature grid used to measure rent-band areas inside zones.
pub const RENT_GRID_CELL_KM: f64 = 0.02;

/// Rent change applied to housing between `r_min` and `r_max` km of a new facility.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RentBand {
    pub mode: Mode,
    pub r_min: f64,
    pub r_max: f64,
    pub rate_pct: f64,
}

impl RentBand {
    pub fn multiplier(&self) -> f64 {
        1.0 + self.rate_pct / 100.0
    }

    fn contains(&self, d: f64) -> bool {
        d >= self.r_min && d < self.r_max
    }
}

/// Highway bands measure distance to the road; subway bands to the stations.
pub fn default_rent_bands() -> Vec<RentBand> {
    let band = |mode, r_min, r_max, rate_pct| RentBand {
        mode,
        r_min,
        r_max,
        rate_pct,
    };
    vec![
        band(Mode::Highway, 0.0, 0.1, -15.0),
        band(Mode::Highway, 0.1, 1.0, 15.0),
        band(Mode::Highway, 1.0, 1.5, 10.0),
        band(Mode::Highway, 1.5, 2.0, 5.0),
        band(Mode::Subway, 0.0, 0.5, 15.0),
        band(Mode::Subway, 0.5, 1.2, 10.0),
        band(Mode::Subway, 1.2, 1.9, 5.0),
    ]
}

/// Radius (km) around new facilities inside which a move counts as "near" the facility.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeighborhoodRadii {
    pub highway: f64,
    pub subway: f64,
    pub brt: f64,
    pub bus: f64,
}

impl Default for NeighborhoodRadii {
    fn default() -> Self {
        NeighborhoodRadii {
            highway: 2.0,
            subway: 1.9,
            brt: 1.0,
            bus: 1.0,
        }
    }
}

impl NeighborhoodRadii {
    pub fn for_mode(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Highway => self.highway,
            Mode::Subway => self.subway,
            Mode::Brt => self.brt,
            Mode::Bus => self.bus,
        }
    }
}

/// Distance used for rent bands and neighbourhoods: to the road for highways, to the
/// nearest station or stop otherwise.
pub fn facility_distance(f: &TransportFacility, p: Point) -> f64 {
    match f.mode {
        Mode::Highway => f.geometry.distance_to(p),
        _ => f.access_distance(p),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    /// ids are placeholders; they are renumbered when the scenario is applied
    pub facilities: Vec<TransportFacility>,
    pub rent_bands: Vec<RentBand>,
    pub neighborhood_radius: NeighborhoodRadii,
}

/// A problem with one field of a submitted scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        FieldError {
            field: field.into(),
            message: message.into(),
        }
    }
}

fn joined(errors: &[FieldError]) -> String {
    errors
        .iter()
        .map(|e| format!("{}: {}", e.field, e.message))
        .collect::<Vec<_>>()
        .join("; ")
}

// Wire format of scenario.json.

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default)]
    pub facilities: Vec<FacilitySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rent_bands: Option<Vec<RentBandSpec>>,
    #[serde(default)]
    pub neighborhood_radius_km: NeighborhoodRadii,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FacilitySpec {
    pub mode: String,
    pub geometry_wkt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service_radius_km: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub access_points_wkt: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RentBandSpec {
    pub mode: String,
    pub r_min_km: f64,
    pub r_max_km: f64,
    pub rate_pct: f64,
}

fn check_bands(bands: &[RentBand], errors: &mut Vec<FieldError>) {
    for (k, b) in bands.iter().enumerate() {
        let field = format!("rent_bands[{k}]");
        if matches!(b.mode, Mode::Brt | Mode::Bus) {
            errors.push(FieldError::new(
                format!("{field}.mode"),
                "rent bands apply to highway and subway only",
            ));
        }
        if !(b.r_min >= 0.0) || !b.r_max.is_finite() || !(b.r_max > b.r_min) {
            errors.push(FieldError::new(
                &field,
                "radius interval must satisfy 0 <= r_min_km < r_max_km",
            ));
        }
        if !(b.multiplier() > 0.0) || !b.rate_pct.is_finite() {
            errors.push(FieldError::new(
                format!("{field}.rate_pct"),
                "rate must be greater than -100",
            ));
        }
    }
    for mode in [Mode::Highway, Mode::Subway] {
        let mut own: Vec<(usize, &RentBand)> =
            bands.iter().enumerate().filter(|(_, b)| b.mode == mode).collect();
        own.sort_by(|a, b| a.1.r_min.total_cmp(&b.1.r_min));
        for pair in own.windows(2) {
            if pair[1].1.r_min < pair[0].1.r_max {
                errors.push(FieldError::new(
                    format!("rent_bands[{}]", pair[1].0),
                    format!("overlaps rent_bands[{}] for mode {}", pair[0].0, mode.as_str()),
                ));
            }
        }
    }
}

fn check_radii(r: &NeighborhoodRadii, errors: &mut Vec<FieldError>) {
    for mode in Mode::ALL {
        let v = r.for_mode(mode);
        if !(v > 0.0) || !v.is_finite() {
            errors.push(FieldError::new(
                format!("neighborhood_radius_km.{}", mode.as_str()),
                "must be > 0",
            ));
        }
    }
}

impl ScenarioSpec {
    /// Builds the scenario, collecting every field problem rather than stopping at the
    /// first. Facilities without a radius take the per-mode default from `radii`.
    pub fn build(&self, radii: &ServiceRadii) -> Result<Scenario, Vec<FieldError>> {
        let mut errors = Vec::new();
        if self.name.trim().is_empty() {
            errors.push(FieldError::new("name", "must not be empty"));
        }
        let mut facilities = Vec::new();
        for (k, f) in self.facilities.iter().enumerate() {
            let field = |s: &str| format!("facilities[{k}].{s}");
            let mode = f.mode.parse::<Mode>();
            if let Err(e) = &mode {
                errors.push(FieldError::new(field("mode"), e));
            }
            let geometry = FacilityGeometry::parse_wkt(&f.geometry_wkt);
            if let Err(e) = &geometry {
                errors.push(FieldError::new(field("geometry_wkt"), e));
            }
            let access = match f.access_points_wkt.as_deref() {
                Some(s) if !s.trim().is_empty() => parse_multipoint(s),
                _ => Ok(Vec::new()),
            };
            if let Err(e) = &access {
                errors.push(FieldError::new(field("access_points_wkt"), e));
            }
            if let Some(r) = f.service_radius_km {
                if !(r > 0.0) || !r.is_finite() {
                    errors.push(FieldError::new(field("service_radius_km"), "must be > 0"));
                }
            }
            if let (Ok(mode), Ok(geometry), Ok(access)) = (mode, geometry, access) {
                let radius = f.service_radius_km.unwrap_or_else(|| radii.for_mode(mode));
                match TransportFacility::new(k as u32, mode, geometry, radius, access) {
                    Ok(fac) => facilities.push(fac),
                    Err(Error::Validation(m)) => {
                        if f.service_radius_km.map_or(true, |r| r > 0.0) {
                            errors.push(FieldError::new(field("geometry_wkt"), m));
                        }
                    }
                    Err(e) => errors.push(FieldError::new(field("geometry_wkt"), e.to_string())),
                }
            }
        }
        let rent_bands = match &self.rent_bands {
            None => default_rent_bands(),
            Some(bands) => {
                let mut out = Vec::new();
                for (k, b) in bands.iter().enumerate() {
                    match b.mode.parse::<Mode>() {
                        Ok(mode) => out.push(RentBand {
                            mode,
                            r_min: b.r_min_km,
                            r_max: b.r_max_km,
                            rate_pct: b.rate_pct,
                        }),
                        Err(e) => errors.push(FieldError::new(format!("rent_bands[{k}].mode"), e)),
                    }
                }
                out
            }
        };
        check_bands(&rent_bands, &mut errors);
        check_radii(&self.neighborhood_radius_km, &mut errors);
        if errors.is_empty() {
            Ok(Scenario {
                name: self.name.clone(),
                facilities,
                rent_bands,
                neighborhood_radius: self.neighborhood_radius_km,
            })
        } else {
            Err(errors)
        }
    }
}

impl Scenario {
    /// A scenario that adds nothing.
    pub fn empty(name: &str) -> Self {
        Scenario {
            name: name.to_string(),
            facilities: Vec::new(),
            rent_bands: default_rent_bands(),
            neighborhood_radius: NeighborhoodRadii::default(),
        }
    }

    pub fn from_json(text: &str, radii: &ServiceRadii) -> Result<Scenario, Vec<FieldError>> {
        let spec: ScenarioSpec = serde_json::from_str(text)
            .map_err(|e| vec![FieldError::new("body", e.to_string())])?;
        spec.build(radii)
    }

    pub fn load(path: &Path, radii: &ServiceRadii) -> Result<Scenario> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Scenario::from_json(&text, radii).map_err(|errs| {
            Error::validation(format!("scenario {}: {}", path.display(), joined(&errs)))
        })
    }

    pub fn to_spec(&self) -> ScenarioSpec {
        ScenarioSpec {
            name: self.name.clone(),
            facilities: self
                .facilities
                .iter()
                .map(|f| FacilitySpec {
                    mode: f.mode.as_str().to_string(),
                    geometry_wkt: f.geometry.to_wkt(),
                    service_radius_km: Some(f.service_radius),
                    access_points_wkt: match &f.geometry {
                        FacilityGeometry::Line(_) => Some(multipoint_wkt(&f.access_points)),
                        FacilityGeometry::Point(_) => None,
                    },
                })
                .collect(),
            rent_bands: Some(
                self.rent_bands
                    .iter()
                    .map(|b| RentBandSpec {
                        mode: b.mode.as_str().to_string(),
                        r_min_km: b.r_min,
                        r_max_km: b.r_max,
                        rate_pct: b.rate_pct,
                    })
                    .collect(),
            ),
            neighborhood_radius_km: self.neighborhood_radius,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_spec()).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        for f in &self.facilities {
            if let Err(e) = f.validate() {
                errors.push(FieldError::new(format!("facilities[{}]", f.id), e.to_string()));
            }
        }
        check_bands(&self.rent_bands, &mut errors);
        check_radii(&self.neighborhood_radius, &mut errors);
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::validation(joined(&errors)))
        }
    }

    /// Problems that only show against a particular world, such as facilities outside
    /// the city.
    pub fn check_against(&self, world: &World) -> Vec<FieldError> {
        self.facilities
            .iter()
            .enumerate()
            .filter(|(_, f)| world.check_facility_inside(f).is_err())
            .map(|(k, _)| {
                FieldError::new(
                    format!("facilities[{k}].geometry_wkt"),
                    "facility lies outside the city outline",
                )
            })
            .collect()
    }

    /// True when `p` lies within the neighbourhood radius of some new facility.
    pub fn is_near(&self, p: Point) -> bool {
        self.facilities
            .iter()
            .any(|f| facility_distance(f, p) <= self.neighborhood_radius.for_mode(f.mode))
    }
}

fn multipoint_wkt(points: &[Point]) -> String {
    let body: Vec<String> = points.iter().map(|p| format!("({} {})", p.x, p.y)).collect();
    format!("MULTIPOINT({})", body.join(","))
}

/// Area-weighted blend of unchanged and rescaled rent. `bands` holds, per rate, the
/// area (km²) of the zone it applies to.
pub fn blended_rent(area: f64, rent: f64, bands: &[(f64, f64)]) -> f64 {
    let covered: f64 = bands.iter().map(|(b, _)| b).sum();
    if covered == 0.0 {
        return rent;
    }
    let scaled: f64 = bands
        .iter()
        .map(|(b, rate)| b * (1.0 + rate / 100.0) * rent)
        .sum();
    ((area - covered) * rent + scaled) / area
}

/// Area (km²) of `zone` falling in each rent band of the scenario's new facilities, as
/// `(area, rate_pct)` pairs. Where bands of several facilities overlap, the higher rate
/// takes the overlap, so the areas never sum past the zone area.
pub fn band_areas(zone: &Zone, scenario: &Scenario) -> Vec<(f64, f64)> {
    let bands: Vec<&RentBand> = scenario
        .rent_bands
        .iter()
        .filter(|b| scenario.facilities.iter().any(|f| f.mode == b.mode))
        .collect();
    if bands.is_empty() {
        return Vec::new();
    }
    let reach = bands.iter().map(|b| b.r_max).fold(0.0, f64::max);
    let spread = zone
        .boundary
        .exterior()
        .0
        .iter()
        .map(|v| euclid(*v, zone.centroid))
        .fold(0.0, f64::max);
    let relevant: Vec<&TransportFacility> = scenario
        .facilities
        .iter()
        .filter(|f| bands.iter().any(|b| b.mode == f.mode))
        .filter(|f| facility_distance(f, zone.centroid) - spread < reach)
        .collect();
    if relevant.is_empty() {
        return Vec::new();
    }

    let mut samples = geometry::grid_samples(&zone.boundary, RENT_GRID_CELL_KM);
    if samples.is_empty() {
        samples.push(zone.centroid);
    }
    let mut rates: Vec<f64> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for p in &samples {
        let mut best: Option<f64> = None;
        for mode in [Mode::Highway, Mode::Subway] {
            let d = relevant
                .iter()
                .filter(|f| f.mode == mode)
                .map(|f| facility_distance(f, *p))
                .fold(f64::INFINITY, f64::min);
            for b in bands.iter().filter(|b| b.mode == mode && b.contains(d)) {
                best = Some(best.map_or(b.rate_pct, |r: f64| r.max(b.rate_pct)));
            }
        }
        if let Some(rate) = best {
            match rates.iter().position(|r| *r == rate) {
                Some(k) => counts[k] += 1,
                None => {
                    rates.push(rate);
                    counts.push(1);
                }
            }
        }
    }
    let n = samples.len() as f64;
    rates
        .into_iter()
        .zip(counts)
        .map(|(rate, c)| (zone.area * c as f64 / n, rate))
        .collect()
}

/// Rent of `zone` after the scenario's facilities are built.
pub fn adjusted_rent(zone: &Zone, scenario: &Scenario) -> f64 {
    blended_rent(zone.area, zone.rent, &band_areas(zone, scenario))
}

/// The world after the scenario: facilities appended with fresh ids, rents adjusted,
/// accessibility tables recomputed. The base world is left untouched.
pub fn apply_scenario(world: &World, scenario: &Scenario) -> Result<World> {
    scenario.validate()?;
    let next_id = world.facilities().iter().map(|f| f.id + 1).max().unwrap_or(1);
    let mut added = Vec::with_capacity(scenario.facilities.len());
    for (k, f) in scenario.facilities.iter().enumerate() {
        let mut f = f.clone();
        f.id = next_id + k as u32;
        world.check_facility_inside(&f)?;
        added.push(f);
    }
    let rents: Vec<f64> = world
        .zones()
        .iter()
        .map(|z| adjusted_rent(z, scenario))
        .collect();
    world.rebuilt(Some(&rents), added)
}

// ---------------------------------------------------------------------------
// Run comparison

/// One run's per-household options and market outcome.
#[derive(Clone, Copy, Debug)]
pub struct RunView<'a> {
    pub options: &'a [Vec<ZoneId>],
    pub market: &'a MarketState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoneDiff {
    pub zone_id: ZoneId,
    pub demand_base: u32,
    pub demand_alt: u32,
    pub delta_demand: i64,
    pub residents_base: u32,
    pub residents_alt: u32,
    pub delta_residents: i64,
    /// share of the zone's residents (base ∪ scenario) that are not in both runs
    pub resident_change_pct: f64,
    pub delta_mean_income: Option<f64>,
    pub delta_mean_cars: Option<f64>,
    pub rent_base: f64,
    pub rent_alt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffSummary {
    pub zones_demand_changed_pct: f64,
    pub max_demand_increase_pct: f64,
    pub max_demand_decrease_pct: f64,
    pub zones_affected_pct: f64,
    pub max_resident_change_pct: f64,
    pub movers_pct: f64,
    pub moves_under_2_5km_pct: f64,
    pub moves_over_5km_pct: f64,
    pub near_high_income_pct: f64,
    pub near_low_income_pct: f64,
    pub near_multi_car_pct: f64,
    pub near_no_car_pct: f64,
    /// relative change of the unhoused count; absent when the base run had none but
    /// the scenario run does
    pub unhoused_change_pct: Option<f64>,
    pub movers: u32,
    pub near_movers: u32,
    pub unhoused_base: u32,
    pub unhoused_alt: u32,
    pub neighborhood_mean_income: f64,
}

impl DiffSummary {
    /// `(metric, value)` rows in reporting order.
    pub fn rows(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("zones_demand_changed_pct", Some(self.zones_demand_changed_pct)),
            ("max_demand_increase_pct", Some(self.max_demand_increase_pct)),
            ("max_demand_decrease_pct", Some(self.max_demand_decrease_pct)),
            ("zones_affected_pct", Some(self.zones_affected_pct)),
            ("max_resident_change_pct", Some(self.max_resident_change_pct)),
            ("movers_pct", Some(self.movers_pct)),
            ("moves_under_2_5km_pct", Some(self.moves_under_2_5km_pct)),
            ("moves_over_5km_pct", Some(self.moves_over_5km_pct)),
            ("near_high_income_pct", Some(self.near_high_income_pct)),
            ("near_low_income_pct", Some(self.near_low_income_pct)),
            ("near_multi_car_pct", Some(self.near_multi_car_pct)),
            ("near_no_car_pct", Some(self.near_no_car_pct)),
            ("unhoused_change_pct", self.unhoused_change_pct),
            ("movers", Some(self.movers as f64)),
            ("near_movers", Some(self.near_movers as f64)),
            ("unhoused_base", Some(self.unhoused_base as f64)),
            ("unhoused_alt", Some(self.unhoused_alt as f64)),
            ("neighborhood_mean_income", Some(self.neighborhood_mean_income)),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDiff {
    pub scenario: String,
    pub zones: Vec<ZoneDiff>,
    pub summary: DiffSummary,
}

/// Number of households holding each zone (world order) among their options.
pub fn demand_counts(options: &[Vec<ZoneId>], world: &World) -> Result<Vec<u32>> {
    let mut out = vec![0; world.len()];
    for opts in options {
        for z in opts {
            out[world.zone_index(*z)?] += 1;
        }
    }
    Ok(out)
}

fn pct(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn zone_indices(world: &World, market: &MarketState) -> Result<Vec<Option<usize>>> {
    market
        .allocations
        .iter()
        .map(|a| a.zone.map(|z| world.zone_index(z)).transpose())
        .collect()
}

/// Compares a scenario run with its base run over the same households.
pub fn diff_runs(
    households: &[Household],
    base_world: &World,
    alt_world: &World,
    base: RunView<'_>,
    alt: RunView<'_>,
    scenario: &Scenario,
) -> Result<ScenarioDiff> {
    let n = households.len();
    let same_len = [
        base.options.len(),
        alt.options.len(),
        base.market.allocations.len(),
        alt.market.allocations.len(),
    ]
    .iter()
    .all(|l| *l == n);
    if !same_len {
        return Err(Error::contract("runs cover different populations"));
    }
    let ids_match = households.iter().enumerate().all(|(k, h)| {
        base.market.allocations[k].agent_id == h.id && alt.market.allocations[k].agent_id == h.id
    });
    if !ids_match {
        return Err(Error::contract("runs cover different populations"));
    }
    let same_zones = base_world.len() == alt_world.len()
        && base_world
            .zones()
            .iter()
            .zip(alt_world.zones())
            .all(|(a, b)| a.id == b.id);
    if !same_zones {
        return Err(Error::contract("runs use different zone systems"));
    }

    let zones = base_world.zones();
    let demand_base = demand_counts(base.options, base_world)?;
    let demand_alt = demand_counts(alt.options, base_world)?;
    let home_base = zone_indices(base_world, base.market)?;
    let home_alt = zone_indices(base_world, alt.market)?;

    let mut res_base: Vec<Vec<usize>> = vec![Vec::new(); zones.len()];
    let mut res_alt: Vec<Vec<usize>> = vec![Vec::new(); zones.len()];
    for k in 0..n {
        if let Some(z) = home_base[k] {
            res_base[z].push(k);
        }
        if let Some(z) = home_alt[k] {
            res_alt[z].push(k);
        }
    }

    let mut zone_diffs = Vec::with_capacity(zones.len());
    for (z, zone) in zones.iter().enumerate() {
        let b: HashSet<usize> = res_base[z].iter().copied().collect();
        let a: HashSet<usize> = res_alt[z].iter().copied().collect();
        let union = b.union(&a).count();
        let both = b.intersection(&a).count();
        let income = |set: &[usize]| mean(set.iter().map(|k| households[*k].income));
        let cars = |set: &[usize]| mean(set.iter().map(|k| households[*k].n_cars as f64));
        let delta = |f: &dyn Fn(&[usize]) -> Option<f64>| {
            Some(f(&res_alt[z])? - f(&res_base[z])?)
        };
        zone_diffs.push(ZoneDiff {
            zone_id: zone.id,
            demand_base: demand_base[z],
            demand_alt: demand_alt[z],
            delta_demand: demand_alt[z] as i64 - demand_base[z] as i64,
            residents_base: b.len() as u32,
            residents_alt: a.len() as u32,
            delta_residents: a.len() as i64 - b.len() as i64,
            resident_change_pct: pct(union - both, union),
            delta_mean_income: delta(&income),
            delta_mean_cars: delta(&cars),
            rent_base: zone.rent,
            rent_alt: alt_world.zones()[z].rent,
        });
    }

    let relative = |d: &ZoneDiff| {
        let top = d.demand_base.max(d.demand_alt);
        if top == 0 {
            0.0
        } else {
            100.0 * d.delta_demand.unsigned_abs() as f64 / top as f64
        }
    };
    let max_of = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0, f64::max);
    let nz = zones.len();

    let movers: Vec<usize> = (0..n).filter(|k| home_base[*k] != home_alt[*k]).collect();
    let relocated: Vec<(usize, usize)> = movers
        .iter()
        .filter_map(|k| Some((home_base[*k]?, home_alt[*k]?)))
        .collect();
    let dist = |(a, b): &(usize, usize)| base_world.zone_distance(*a, *b);
    let near_zone: Vec<bool> = zones.iter().map(|z| scenario.is_near(z.centroid)).collect();
    let near_movers: Vec<usize> = movers
        .iter()
        .copied()
        .filter(|k| home_alt[*k].is_some_and(|z| near_zone[z]))
        .collect();
    let neighborhood_mean = mean(
        (0..n)
            .filter(|k| home_base[*k].is_some_and(|z| near_zone[z]))
            .map(|k| households[k].income),
    )
    .or_else(|| mean((0..n).filter(|k| home_base[*k].is_some()).map(|k| households[k].income)))
    .unwrap_or(0.0);
    let count_near = |f: &dyn Fn(&Household) -> bool| {
        near_movers.iter().filter(|k| f(&households[**k])).count()
    };

    let unhoused_base = base.market.unhoused() as u32;
    let unhoused_alt = alt.market.unhoused() as u32;
    let unhoused_change_pct = match (unhoused_base, unhoused_alt) {
        (0, 0) => Some(0.0),
        (0, _) => None,
        (b, a) => Some(100.0 * (a as f64 - b as f64) / b as f64),
    };

    let summary = DiffSummary {
        zones_demand_changed_pct: pct(zone_diffs.iter().filter(|d| d.delta_demand != 0).count(), nz),
        max_demand_increase_pct: max_of(
            &mut zone_diffs.iter().filter(|d| d.delta_demand > 0).map(relative),
        ),
        max_demand_decrease_pct: max_of(
            &mut zone_diffs.iter().filter(|d| d.delta_demand < 0).map(relative),
        ),
        zones_affected_pct: pct(
            zone_diffs.iter().filter(|d| d.resident_change_pct > 0.0).count(),
            nz,
        ),
        max_resident_change_pct: max_of(&mut zone_diffs.iter().map(|d| d.resident_change_pct)),
        movers_pct: pct(movers.len(), n),
        moves_under_2_5km_pct: pct(
            relocated.iter().filter(|p| dist(p) < 2.5).count(),
            relocated.len(),
        ),
        moves_over_5km_pct: pct(
            relocated.iter().filter(|p| dist(p) > 5.0).count(),
            relocated.len(),
        ),
        near_high_income_pct: pct(count_near(&|h| h.income > neighborhood_mean), near_movers.len()),
        near_low_income_pct: pct(count_near(&|h| h.income < neighborhood_mean), near_movers.len()),
        near_multi_car_pct: pct(count_near(&|h| h.n_cars > 1), near_movers.len()),
        near_no_car_pct: pct(count_near(&|h| h.n_cars == 0), near_movers.len()),
        unhoused_change_pct,
        movers: movers.len() as u32,
        near_movers: near_movers.len() as u32,
        unhoused_base,
        unhoused_alt,
        neighborhood_mean_income: neighborhood_mean,
    };
    Ok(ScenarioDiff {
        scenario: scenario.name.clone(),
        zones: zone_diffs,
        summary,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_diff_zones(diff: &ScenarioDiff, path: &Path) -> Result<()> {
    let mut out = CsvOut::create(
        path,
        [
            "zone_id",
            "demand_base",
            "demand_alt",
            "delta_demand",
            "residents_base",
            "residents_alt",
            "delta_residents",
            "resident_change_pct",
            "delta_mean_income",
            "delta_mean_cars",
            "rent_base",
            "rent_alt",
        ],
    )?;
    for d in &diff.zones {
        out.row([
            d.zone_id.to_string(),
            d.demand_base.to_string(),
            d.demand_alt.to_string(),
            d.delta_demand.to_string(),
            d.residents_base.to_string(),
            d.residents_alt.to_string(),
            d.delta_residents.to_string(),
            d.resident_change_pct.to_string(),
            opt(d.delta_mean_income),
            opt(d.delta_mean_cars),
            d.rent_base.to_string(),
            d.rent_alt.to_string(),
        ])?;
    }
    out.finish()
}

pub fn write_diff_summary(diff: &ScenarioDiff, path: &Path) -> Result<()> {
    let mut out = CsvOut::create(path, ["metric", "value"])?;
    for (metric, value) in diff.summary.rows() {
        out.row([metric.to_string(), opt(value)])?;
    }
    out.finish()
}

/// Zone polygons with their diff values as GeoJSON feature properties.
pub fn diff_geojson(diff: &ScenarioDiff, world: &World) -> Result<serde_json::Value> {
    let mut features = Vec::with_capacity(diff.zones.len());
    for d in &diff.zones {
        let zone = world.zone(d.zone_id)?;
        let ring = |ls: &geo_types::LineString<f64>| -> Vec<[f64; 2]> {
            ls.0.iter().map(|c| [c.x, c.y]).collect()
        };
        let mut rings = vec![ring(zone.boundary.exterior())];
        rings.extend(zone.boundary.interiors().iter().map(ring));
        let mut properties = serde_json::to_value(d).expect("zone diff serializes");
        properties["zone_id"] = json!(d.zone_id.0);
        features.push(json!({
            "type": "Feature",
            "id": d.zone_id.0,
            "geometry": {"type": "Polygon", "coordinates": rings},
            "properties": properties,
        }));
    }
    Ok(json!({"type": "FeatureCollection", "features": features}))
}

pub fn write_diff_geojson(diff: &ScenarioDiff, world: &World, path: &Path) -> Result<()> {
    let value = diff_geojson(diff, world)?;
    let text = serde_json::to_string(&value).expect("geojson serializes");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Validation curve

/// Share of `(actual, simulated)` pairs whose centroid distance is at most each edge.
pub fn accuracy_by_distance(
    pairs: &[(ZoneId, ZoneId)],
    world: &World,
    band_edges: &[f64],
) -> Result<Vec<f64>> {
    if pairs.is_empty() {
        return Err(Error::contract("no validation pairs"));
    }
    if band_edges.first() != Some(&0.0) || band_edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::contract(
            "band edges must start at 0 and increase strictly",
        ));
    }
    let mut d = pairs
        .iter()
        .map(|(a, s)| Ok(world.zone_distance(world.zone_index(*a)?, world.zone_index(*s)?)))
        .collect::<Result<Vec<f64>>>()?;
    d.sort_by(|a, b| a.total_cmp(b));
    Ok(band_edges
        .iter()
        .map(|e| d.partition_point(|x| x <= e) as f64 / d.len() as f64)
        .collect())
}

#[derive(Deserialize)]
struct PairRow {
    actual_zone: u32,
    simulated_zone: u32,
}

/// Reads `actual_zone,simulated_zone` rows.
pub fn read_pairs(path: &Path) -> Result<Vec<(ZoneId, ZoneId)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let mut out = Vec::new();
    for (k, row) in rdr.deserialize::<PairRow>().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            file: path.into(),
            line: k + 2,
            message: e.to_string(),
        })?;
        out.push((ZoneId(row.actual_zone), ZoneId(row.simulated_zone)));
    }
    Ok(out)
}
