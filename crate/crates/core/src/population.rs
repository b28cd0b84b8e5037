//! Synthetic renter households.
//!
//! Households are drawn sequentially: former zone, income, size and ages first; then
//! cars, employees and required floor area conditional on those; then the preference
//! profile conditional on the household's size, income and car classes; finally
//! workplaces and the relocation month. Every household draws from its own seeded
//! stream, so generation is independent of scheduling.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::world::{ServiceType, TransitAccess, World, ZoneId};

const PROB_TOL: f64 = 1e-9;
/// Members below this age count as children.
pub const ADULT_AGE: u32 = 18;

/// Residence criteria a household may hold, in survey-table column order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Rent,
    WorkplaceDist,
    FormerDist,
    Air,
    Noise,
    Retail,
    Educational,
    Green,
    Health,
    Cultural,
    Traffic,
    Highway,
    Subway,
    Bus,
}

impl Criterion {
    pub const ALL: [Criterion; 14] = [
        Criterion::Rent,
        Criterion::WorkplaceDist,
        Criterion::FormerDist,
        Criterion::Air,
        Criterion::Noise,
        Criterion::Retail,
        Criterion::Educational,
        Criterion::Green,
        Criterion::Health,
        Criterion::Cultural,
        Criterion::Traffic,
        Criterion::Highway,
        Criterion::Subway,
        Criterion::Bus,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Rent => "rent",
            Criterion::WorkplaceDist => "workplace_dist",
            Criterion::FormerDist => "former_dist",
            Criterion::Air => "air",
            Criterion::Noise => "noise",
            Criterion::Retail => "retail",
            Criterion::Educational => "educational",
            Criterion::Green => "green",
            Criterion::Health => "health",
            Criterion::Cultural => "cultural",
            Criterion::Traffic => "traffic",
            Criterion::Highway => "highway",
            Criterion::Subway => "subway",
            Criterion::Bus => "bus",
        }
    }

    pub fn service_type(self) -> Option<ServiceType> {
        match self {
            Criterion::Retail => Some(ServiceType::Retail),
            Criterion::Educational => Some(ServiceType::Educational),
            Criterion::Green => Some(ServiceType::GreenRecreational),
            Criterion::Health => Some(ServiceType::Health),
            Criterion::Cultural => Some(ServiceType::Cultural),
            _ => None,
        }
    }

    pub fn transit_access(self) -> Option<TransitAccess> {
        match self {
            Criterion::Highway => Some(TransitAccess::Highway),
            Criterion::Subway => Some(TransitAccess::Subway),
            Criterion::Bus => Some(TransitAccess::Bus),
            _ => None,
        }
    }
}

/// A set of criteria as a bit mask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct CriteriaSet(u16);

impl CriteriaSet {
    pub fn contains(self, c: Criterion) -> bool {
        self.0 & (1 << c.index()) != 0
    }

    pub fn insert(&mut self, c: Criterion) {
        self.0 |= 1 << c.index();
    }

    pub fn iter(self) -> impl Iterator<Item = Criterion> {
        Criterion::ALL.into_iter().filter(move |c| self.contains(*c))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

impl FromIterator<Criterion> for CriteriaSet {
    fn from_iter<T: IntoIterator<Item = Criterion>>(iter: T) -> Self {
        let mut s = CriteriaSet::default();
        for c in iter {
            s.insert(c);
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreferenceProfile {
    pub active: CriteriaSet,
    /// Indexed by [`ServiceType::index`]; sums to 1 when any service criterion is active.
    pub service_weights: [f64; 5],
    /// Indexed by [`TransitAccess::index`]; sums to 1 when any transit criterion is active.
    pub transit_weights: [f64; 3],
    /// Rent-to-income share bounds.
    pub band_min: f64,
    pub band_max: f64,
    pub hard_air: bool,
    pub hard_noise: bool,
    pub hard_traffic: bool,
}

impl PreferenceProfile {
    /// Profile caring only about rent, with the widest possible band.
    pub fn rent_only() -> Self {
        PreferenceProfile {
            active: [Criterion::Rent].into_iter().collect(),
            service_weights: [0.0; 5],
            transit_weights: [0.0; 3],
            band_min: 0.0,
            band_max: 1.0,
            hard_air: false,
            hard_noise: false,
            hard_traffic: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.active.contains(Criterion::Rent) {
            return Err(Error::validation("rent criterion must always be active"));
        }
        if !(0.0 <= self.band_min && self.band_min <= self.band_max && self.band_max <= 1.0) {
            return Err(Error::validation(format!(
                "income band [{}, {}] must satisfy 0 <= min <= max <= 1",
                self.band_min, self.band_max
            )));
        }
        let any_service = self.active.iter().any(|c| c.service_type().is_some());
        let any_transit = self.active.iter().any(|c| c.transit_access().is_some());
        let service_sum: f64 = self.service_weights.iter().sum();
        let transit_sum: f64 = self.transit_weights.iter().sum();
        let ok = |active: bool, sum: f64| {
            if active {
                (sum - 1.0).abs() <= PROB_TOL
            } else {
                sum == 0.0
            }
        };
        if !ok(any_service, service_sum) || !ok(any_transit, transit_sum) {
            return Err(Error::validation("preference weights are not normalized"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SizeClass {
    Single,
    Couple,
    ThreeFour,
    FivePlus,
}

impl SizeClass {
    pub const ALL: [SizeClass; 4] = [
        SizeClass::Single,
        SizeClass::Couple,
        SizeClass::ThreeFour,
        SizeClass::FivePlus,
    ];

    pub fn of(size: u32) -> Self {
        match size {
            0 | 1 => SizeClass::Single,
            2 => SizeClass::Couple,
            3 | 4 => SizeClass::ThreeFour,
            _ => SizeClass::FivePlus,
        }
    }
}

impl FromStr for SizeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(SizeClass::Single),
            "couple" => Ok(SizeClass::Couple),
            "3-4" => Ok(SizeClass::ThreeFour),
            ">4" => Ok(SizeClass::FivePlus),
            _ => Err(Error::validation(format!("unknown size class {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IncomeClass {
    Below500,
    From500To1000,
    Above1000,
}

impl IncomeClass {
    pub const ALL: [IncomeClass; 3] = [
        IncomeClass::Below500,
        IncomeClass::From500To1000,
        IncomeClass::Above1000,
    ];

    /// Monthly income in USD.
    pub fn of(income: f64) -> Self {
        if income < 500.0 {
            IncomeClass::Below500
        } else if income <= 1000.0 {
            IncomeClass::From500To1000
        } else {
            IncomeClass::Above1000
        }
    }
}

impl FromStr for IncomeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "<500" => Ok(IncomeClass::Below500),
            "500-1000" => Ok(IncomeClass::From500To1000),
            ">1000" => Ok(IncomeClass::Above1000),
            _ => Err(Error::validation(format!("unknown income class {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CarClass {
    None,
    One,
    Multiple,
}

impl CarClass {
    pub const ALL: [CarClass; 3] = [CarClass::None, CarClass::One, CarClass::Multiple];

    pub fn of(cars: u32) -> Self {
        match cars {
            0 => CarClass::None,
            1 => CarClass::One,
            _ => CarClass::Multiple,
        }
    }
}

impl FromStr for CarClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "0" => Ok(CarClass::None),
            "1" => Ok(CarClass::One),
            ">1" => Ok(CarClass::Multiple),
            _ => Err(Error::validation(format!("unknown car class {s:?}"))),
        }
    }
}

/// Which class dimension sets the activation probability of a criterion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Size,
    Income,
    Cars,
}

/// Activation probabilities per class and criterion (survey shares of households rating
/// a criterion above 4 on the 0–9 scale), plus the remaining profile sampling settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreferencePriors {
    /// rows: single, couple, 3-4, >4
    pub size: [[f64; 14]; 4],
    /// rows: <500, 500-1000, >1000 USD
    pub income: [[f64; 14]; 3],
    /// rows: 0, 1, >1 cars
    pub cars: [[f64; 14]; 3],
    pub governing: [Dimension; 14],
    /// `band_min ~ U[lo, hi]`
    pub band_min: [f64; 2],
    /// `band_max ~ U[lo, hi]`
    pub band_max: [f64; 2],
    /// Chance an active pollution/traffic criterion becomes a hard filter.
    pub hard_flag_prob: f64,
}

#[rustfmt::skip]
const SIZE_TABLE: [[f64; 14]; 4] = [
    [100.0, 92.9, 46.4, 50.0, 64.3, 46.4, 17.9,  7.1,  3.6, 10.7, 67.9, 78.6, 35.7, 17.9],
    [100.0, 90.7, 52.6, 63.9, 74.2, 61.9, 10.3, 50.5,  7.2,  7.2, 64.9, 73.2, 48.5, 20.6],
    [100.0, 84.2, 62.6, 61.4, 69.6, 62.6, 71.3, 57.3, 12.3,  8.8, 63.7, 71.3, 53.2, 22.8],
    [100.0, 79.4, 61.8, 64.7, 70.6, 55.9, 88.2, 64.7, 14.7,  5.9, 67.6, 73.5, 52.9, 20.6],
];

#[rustfmt::skip]
const INCOME_TABLE: [[f64; 14]; 3] = [
    [100.0, 92.8, 68.1, 40.6, 47.8, 47.8, 42.0, 34.8,  7.2,  5.8, 46.4, 58.0, 58.0, 29.0],
    [100.0, 85.8, 56.4, 64.2, 73.5, 64.7, 58.3, 53.9, 12.3,  8.8, 64.7, 70.6, 49.5, 21.1],
    [100.0, 80.7, 52.6, 77.2, 87.7, 59.6, 33.3, 64.9,  7.0,  8.8, 87.7, 98.2, 43.9, 14.0],
];

#[rustfmt::skip]
const CARS_TABLE: [[f64; 14]; 3] = [
    [100.0, 97.1, 55.9, 38.2, 52.9, 64.7, 55.9, 44.1, 14.7,  8.8,  5.9,  14.7, 88.2, 73.5],
    [100.0, 86.1, 58.4, 62.8, 70.6, 63.2, 55.8, 55.8, 10.8,  8.2, 64.5,  73.6, 55.4, 18.2],
    [100.0, 81.5, 58.5, 69.2, 80.0, 47.7, 29.2, 41.5,  6.2,  7.7, 96.9, 100.0, 12.3,  6.2],
];

fn percent_rows<const R: usize>(t: &[[f64; 14]; R]) -> [[f64; 14]; R] {
    t.map(|row| row.map(|v| v / 100.0))
}

impl Default for PreferencePriors {
    fn default() -> Self {
        use Dimension::*;
        PreferencePriors {
            size: percent_rows(&SIZE_TABLE),
            income: percent_rows(&INCOME_TABLE),
            cars: percent_rows(&CARS_TABLE),
            // rent, workplace, former, air, noise, retail, educational, green, health,
            // cultural, traffic, highway, subway, bus
            governing: [
                Size, Size, Size, Income, Income, Size, Size, Size, Size, Size, Income, Cars,
                Cars, Cars,
            ],
            band_min: [0.15, 0.25],
            band_max: [0.35, 0.50],
            hard_flag_prob: 0.5,
        }
    }
}

impl PreferencePriors {
    pub fn validate(&self) -> Result<()> {
        let rows = self
            .size
            .iter()
            .chain(self.income.iter())
            .chain(self.cars.iter());
        for row in rows {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::validation("activation probabilities must lie in [0, 1]"));
            }
        }
        let [lo, hi] = self.band_min;
        let [lo2, hi2] = self.band_max;
        if !(0.0 <= lo && lo <= hi && hi <= lo2 && lo2 <= hi2 && hi2 <= 1.0) {
            return Err(Error::validation(
                "band ranges must satisfy 0 <= min.lo <= min.hi <= max.lo <= max.hi <= 1",
            ));
        }
        if !(0.0..=1.0).contains(&self.hard_flag_prob) {
            return Err(Error::validation("hard_flag_prob must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Activation probability of `criterion` for a household of the given classes.
    pub fn probability(
        &self,
        criterion: Criterion,
        size: SizeClass,
        income: IncomeClass,
        cars: CarClass,
    ) -> f64 {
        let k = criterion.index();
        match self.governing[k] {
            Dimension::Size => self.size[size as usize][k],
            Dimension::Income => self.income[income as usize][k],
            Dimension::Cars => self.cars[cars as usize][k],
        }
    }
}

/// Draws a preference profile for a household of the given classes.
///
/// Each criterion is activated by an independent Bernoulli draw; rent is always active.
/// Active service and transit criteria get a stated score in 5..=9, normalized per
/// family into weights.
pub fn sample_preference_profile<R: Rng + ?Sized>(
    size: SizeClass,
    income: IncomeClass,
    cars: CarClass,
    priors: &PreferencePriors,
    rng: &mut R,
) -> PreferenceProfile {
    let mut active = CriteriaSet::default();
    active.insert(Criterion::Rent);
    for c in &Criterion::ALL[1..] {
        let p = priors.probability(*c, size, income, cars);
        if rng.random::<f64>() < p {
            active.insert(*c);
        }
    }
    let mut service_weights = [0.0; 5];
    let mut transit_weights = [0.0; 3];
    for c in active.iter() {
        if let Some(s) = c.service_type() {
            service_weights[s.index()] = rng.random_range(5..=9) as f64;
        } else if let Some(t) = c.transit_access() {
            transit_weights[t.index()] = rng.random_range(5..=9) as f64;
        }
    }
    normalize(&mut service_weights);
    normalize(&mut transit_weights);
    let band_min = uniform(rng, priors.band_min);
    let band_max = uniform(rng, priors.band_max);
    let mut hard = |c: Criterion| active.contains(c) && rng.random::<f64>() < priors.hard_flag_prob;
    let hard_air = hard(Criterion::Air);
    let hard_noise = hard(Criterion::Noise);
    let hard_traffic = hard(Criterion::Traffic);
    PreferenceProfile {
        active,
        service_weights,
        transit_weights,
        band_min,
        band_max,
        hard_air,
        hard_noise,
        hard_traffic,
    }
}

fn normalize(w: &mut [f64]) {
    let s: f64 = w.iter().sum();
    if s > 0.0 {
        w.iter_mut().for_each(|x| *x /= s);
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Household {
    pub id: u32,
    /// currency per month
    pub income: f64,
    pub size: u32,
    pub member_ages: Vec<u32>,
    pub n_cars: u32,
    pub n_employees: u32,
    /// m²
    pub required_area: f64,
    pub former_zone: ZoneId,
    pub workplaces: Vec<ZoneId>,
    /// 1..=12
    pub relocation_month: u8,
    pub profile: PreferenceProfile,
}

impl Household {
    pub fn has_child(&self) -> bool {
        self.member_ages.iter().any(|a| *a < ADULT_AGE)
    }

    pub fn size_class(&self) -> SizeClass {
        SizeClass::of(self.size)
    }

    pub fn income_class(&self) -> IncomeClass {
        IncomeClass::of(self.income)
    }

    pub fn car_class(&self) -> CarClass {
        CarClass::of(self.n_cars)
    }

    pub fn validate(&self) -> Result<()> {
        let id = self.id;
        let fail = |m: &str| Err(Error::validation(format!("household {id}: {m}")));
        if self.size < 1 {
            return fail("size must be >= 1");
        }
        if self.member_ages.len() != self.size as usize {
            return fail("member_ages length must equal size");
        }
        if self.n_employees > self.size {
            return fail("more employees than members");
        }
        if self.workplaces.len() != self.n_employees as usize {
            return fail("workplaces length must equal n_employees");
        }
        if !(self.required_area > 0.0) {
            return fail("required area must be > 0");
        }
        if !(self.income > 0.0) {
            return fail("income must be > 0");
        }
        if !(1..=12).contains(&self.relocation_month) {
            return fail("relocation month must lie in 1..=12");
        }
        self.profile.validate()
    }
}

// ---------------------------------------------------------------------------
// Synthesis parameters

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncomeParams {
    /// `[lo, hi]` USD/month; income is uniform within the drawn bin.
    pub bins: Vec<[f64; 2]>,
    pub probs: Vec<f64>,
    /// Per-zone overrides of `probs`, keyed by zone id.
    #[serde(default)]
    pub zones: BTreeMap<String, Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeParams {
    /// Probabilities of sizes 1, 2, 3, ...
    pub probs: Vec<f64>,
    #[serde(default)]
    pub zones: BTreeMap<String, Vec<f64>>,
    /// Chance that a member beyond the first two is a child.
    pub child_share: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarParams {
    /// One row per income class (<500, 500-1000, >1000); each row is a distribution
    /// over 0, 1, 2, ... cars.
    pub by_income_class: [Vec<f64>; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmploymentParams {
    /// Chance a working-age adult (18–64) is employed.
    pub rate: f64,
    /// Jobs per zone (relative weights), keyed by zone id.
    pub zones: BTreeMap<String, f64>,
    /// Mean of the exponential commute-distance kernel.
    pub commute_mean_km: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AreaParams {
    pub base_m2: f64,
    pub per_member_m2: f64,
    /// relative half-width of the uniform noise
    pub noise: f64,
}

impl Default for AreaParams {
    fn default() -> Self {
        AreaParams {
            base_m2: 30.0,
            per_member_m2: 20.0,
            noise: 0.15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisParams {
    pub income: IncomeParams,
    pub size: SizeParams,
    pub cars: CarParams,
    pub employment: EmploymentParams,
    #[serde(default)]
    pub area: AreaParams,
    /// Distribution of moves over months 1..=12.
    pub relocation_months: [f64; 12],
    /// Per-zone multipliers on residential area for drawing the former zone (default 1).
    #[serde(default)]
    pub residence_weights: BTreeMap<String, f64>,
    #[serde(default)]
    pub priors: PreferencePriors,
}

fn check_distribution(name: &str, probs: &[f64]) -> Result<()> {
    if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(Error::validation(format!(
            "{name}: probabilities must be non-empty, finite and >= 0"
        )));
    }
    let s: f64 = probs.iter().sum();
    if (s - 1.0).abs() > PROB_TOL {
        return Err(Error::validation(format!("{name}: probabilities sum to {s}, expected 1")));
    }
    Ok(())
}

fn zone_key(world: &World, key: &str, what: &str) -> Result<usize> {
    let id: u32 = key
        .parse()
        .map_err(|_| Error::validation(format!("{what}: bad zone id {key:?}")))?;
    world.zone_index(ZoneId(id))
}

impl SynthesisParams {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::validation(format!("synthesis params: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            file: path.into(),
            line: e
                .span()
                .map(|s| text[..s.start].lines().count().max(1))
                .unwrap_or(0),
            message: e.message().to_string(),
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("synthesis params serialize")
    }

    /// Checks every table against `world`.
    pub fn validate(&self, world: &World) -> Result<()> {
        let inc = &self.income;
        if inc.bins.len() != inc.probs.len() {
            return Err(Error::validation("income: bins and probs differ in length"));
        }
        if inc.bins.iter().any(|[lo, hi]| !(*lo > 0.0) || hi < lo) {
            return Err(Error::validation("income: bins must satisfy 0 < lo <= hi"));
        }
        check_distribution("income", &inc.probs)?;
        for (k, row) in &inc.zones {
            zone_key(world, k, "income.zones")?;
            if row.len() != inc.bins.len() {
                return Err(Error::validation(format!("income.zones.{k}: wrong length")));
            }
            check_distribution(&format!("income.zones.{k}"), row)?;
        }
        check_distribution("size", &self.size.probs)?;
        for (k, row) in &self.size.zones {
            zone_key(world, k, "size.zones")?;
            check_distribution(&format!("size.zones.{k}"), row)?;
        }
        if !(0.0..=1.0).contains(&self.size.child_share) {
            return Err(Error::validation("size.child_share must lie in [0, 1]"));
        }
        for (i, row) in self.cars.by_income_class.iter().enumerate() {
            check_distribution(&format!("cars.by_income_class[{i}]"), row)?;
        }
        let emp = &self.employment;
        if !(0.0..=1.0).contains(&emp.rate) {
            return Err(Error::validation("employment.rate must lie in [0, 1]"));
        }
        if !(emp.commute_mean_km > 0.0) {
            return Err(Error::validation("employment.commute_mean_km must be > 0"));
        }
        for (k, w) in &emp.zones {
            zone_key(world, k, "employment.zones")?;
            if !(*w >= 0.0) || !w.is_finite() {
                return Err(Error::validation(format!("employment.zones.{k} must be >= 0")));
            }
        }
        if emp.zones.values().sum::<f64>() <= 0.0 {
            return Err(Error::validation("employment distribution is all zero"));
        }
        check_distribution("relocation_months", &self.relocation_months)?;
        for (k, w) in &self.residence_weights {
            zone_key(world, k, "residence_weights")?;
            if !(*w >= 0.0) || !w.is_finite() {
                return Err(Error::validation(format!("residence_weights.{k} must be >= 0")));
            }
        }
        let a = &self.area;
        if !(a.base_m2 > 0.0) || a.per_member_m2 < 0.0 || !(0.0..1.0).contains(&a.noise) {
            return Err(Error::validation("area: need base > 0, per_member >= 0, noise in [0,1)"));
        }
        self.priors.validate()
    }

    fn per_zone_rows(
        &self,
        world: &World,
        default: &[f64],
        overrides: &BTreeMap<String, Vec<f64>>,
    ) -> Result<Vec<WeightedIndex<f64>>> {
        let mut rows = vec![default.to_vec(); world.len()];
        for (k, row) in overrides {
            rows[zone_key(world, k, "zone override")?] = row.clone();
        }
        rows.into_iter()
            .map(|r| WeightedIndex::new(r).map_err(|e| Error::validation(e.to_string())))
            .collect()
    }

    fn employment_weights(&self, world: &World) -> Result<Vec<f64>> {
        let mut w = vec![0.0; world.len()];
        for (k, v) in &self.employment.zones {
            w[zone_key(world, k, "employment.zones")?] = *v;
        }
        Ok(w)
    }
}

fn weighted(weights: &[f64], what: &str) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(weights.iter().copied())
        .map_err(|e| Error::validation(format!("{what}: {e}")))
}

/// Generates `n_agents` households with workplaces and relocation months assigned.
pub fn synthesize_population(
    world: &World,
    params: &SynthesisParams,
    n_agents: usize,
    seed: u64,
) -> Result<Vec<Household>> {
    if n_agents == 0 {
        return Err(Error::validation("n_agents must be > 0"));
    }
    params.validate(world)?;

    let zone_weights: Vec<f64> = world
        .zones()
        .iter()
        .map(|z| {
            let m = params
                .residence_weights
                .get(&z.id.to_string())
                .copied()
                .unwrap_or(1.0);
            z.residential_area * m
        })
        .collect();
    let zone_dist = weighted(&zone_weights, "residential area weights")?;
    let income_rows = params.per_zone_rows(world, &params.income.probs, &params.income.zones)?;
    let size_rows = params.per_zone_rows(world, &params.size.probs, &params.size.zones)?;
    let car_rows = params
        .cars
        .by_income_class
        .iter()
        .map(|r| weighted(r, "cars"))
        .collect::<Result<Vec<_>>>()?;

    let mut households = Vec::with_capacity(n_agents);
    for a in 0..n_agents {
        let mut rng = seed::stream(seed, "synthesis", a as u64);
        // (1) where, how rich, how many and how old
        let zi = zone_dist.sample(&mut rng);
        let [lo, hi] = params.income.bins[income_rows[zi].sample(&mut rng)];
        let income = if lo == hi { lo } else { rng.random_range(lo..=hi) };
        let size = size_rows[zi].sample(&mut rng) as u32 + 1;
        let member_ages = draw_ages(size, params.size.child_share, &mut rng);
        // (2) cars, employees, floor area
        let income_class = IncomeClass::of(income);
        let n_cars = car_rows[income_class as usize].sample(&mut rng) as u32;
        let n_employees = member_ages
            .iter()
            .filter(|age| (ADULT_AGE..65).contains(*age))
            .filter(|_| rng.random::<f64>() < params.employment.rate)
            .count() as u32;
        let a_params = &params.area;
        let nominal = a_params.base_m2 + a_params.per_member_m2 * (size - 1) as f64;
        let noise = if a_params.noise > 0.0 {
            rng.random_range(-a_params.noise..=a_params.noise)
        } else {
            0.0
        };
        let required_area = nominal * (1.0 + noise);
        // (3) preferences
        let profile = sample_preference_profile(
            SizeClass::of(size),
            income_class,
            CarClass::of(n_cars),
            &params.priors,
            &mut rng,
        );
        households.push(Household {
            id: a as u32,
            income,
            size,
            member_ages,
            n_cars,
            n_employees,
            required_area,
            former_zone: world.zones()[zi].id,
            workplaces: Vec::new(),
            relocation_month: 1,
            profile,
        });
    }
    // (4) workplaces and timing
    assign_workplaces(&mut households, params, world, seed::derive(seed, "workplaces", 0))?;
    assign_relocation_months(
        &mut households,
        &params.relocation_months,
        seed::derive(seed, "relocation", 0),
    )?;
    for h in &households {
        h.validate()?;
    }
    Ok(households)
}

fn draw_ages<R: Rng + ?Sized>(size: u32, child_share: f64, rng: &mut R) -> Vec<u32> {
    (0..size)
        .map(|m| match m {
            0 => rng.random_range(22..=70),
            1 => rng.random_range(20..=70),
            _ if rng.random::<f64>() < child_share => rng.random_range(0..ADULT_AGE),
            _ => rng.random_range(ADULT_AGE..=30),
        })
        .collect()
}

/// Draws a workplace zone for every employee with probability proportional to
/// `jobs(z) · exp(-d(former, z) / mean)`.
pub fn assign_workplaces(
    households: &mut [Household],
    params: &SynthesisParams,
    world: &World,
    seed: u64,
) -> Result<()> {
    let jobs = params.employment_weights(world)?;
    if jobs.iter().sum::<f64>() <= 0.0 {
        return Err(Error::validation("employment distribution is all zero"));
    }
    let mean = params.employment.commute_mean_km;
    let mut cache: Vec<Option<WeightedIndex<f64>>> = vec![None; world.len()];
    for h in households.iter_mut() {
        let from = world.zone_index(h.former_zone)?;
        if cache[from].is_none() {
            let w: Vec<f64> = (0..world.len())
                .map(|z| jobs[z] * (-world.zone_distance(from, z) / mean).exp())
                .collect();
            cache[from] = Some(weighted(&w, "commute weights")?);
        }
        let dist = cache[from].as_ref().expect("filled above");
        let mut rng = seed::stream(seed, "workplace", h.id as u64);
        h.workplaces = (0..h.n_employees)
            .map(|_| world.zones()[dist.sample(&mut rng)].id)
            .collect();
    }
    Ok(())
}

/// Draws each household's relocation month i.i.d. from `monthly`.
pub fn assign_relocation_months(
    households: &mut [Household],
    monthly: &[f64; 12],
    seed: u64,
) -> Result<()> {
    check_distribution("relocation months", monthly)?;
    let dist = weighted(monthly, "relocation months")?;
    for h in households.iter_mut() {
        let mut rng = seed::stream(seed, "month", h.id as u64);
        h.relocation_month = dist.sample(&mut rng) as u8 + 1;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Export

struct Joined<'a, T>(&'a [T]);

impl<T: fmt::Display> fmt::Display for Joined<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{x}")?;
        }
        Ok(())
    }
}

/// Writes `population.csv` and the sidecar `profiles.csv` into `dir`.
pub fn write_population(households: &[Household], dir: &Path) -> Result<()> {
    let path = dir.join("population.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::io(&path, e.into()))?;
    let err = |p: &Path, e: csv::Error| Error::io(p, e.into());
    w.write_record([
        "id",
        "former_zone",
        "income",
        "size",
        "member_ages",
        "n_cars",
        "n_employees",
        "required_area_m2",
        "workplaces",
        "relocation_month",
    ])
    .map_err(|e| err(&path, e))?;
    for h in households {
        w.write_record([
            h.id.to_string(),
            h.former_zone.to_string(),
            h.income.to_string(),
            h.size.to_string(),
            Joined(&h.member_ages).to_string(),
            h.n_cars.to_string(),
            h.n_employees.to_string(),
            h.required_area.to_string(),
            Joined(&h.workplaces).to_string(),
            h.relocation_month.to_string(),
        ])
        .map_err(|e| err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("profiles.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::io(&path, e.into()))?;
    let mut header = vec!["id".to_string(), "active".to_string()];
    header.extend(ServiceType::ALL.iter().map(|s| format!("w_{}", s.as_str())));
    header.extend(["w_highway", "w_subway", "w_bus"].map(String::from));
    header.extend(
        ["band_min", "band_max", "hard_air", "hard_noise", "hard_traffic"].map(String::from),
    );
    w.write_record(&header).map_err(|e| err(&path, e))?;
    for h in households {
        let p = &h.profile;
        let active: Vec<&str> = p.active.iter().map(Criterion::as_str).collect();
        let mut row = vec![h.id.to_string(), active.join(";")];
        row.extend(p.service_weights.iter().map(f64::to_string));
        row.extend(p.transit_weights.iter().map(f64::to_string));
        row.push(p.band_min.to_string());
        row.push(p.band_max.to_string());
        row.extend([p.hard_air, p.hard_noise, p.hard_traffic].map(|b| b.to_string()));
        w.write_record(&row).map_err(|e| err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}
