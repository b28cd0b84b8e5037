//! The zonal city model: zones, service sites, transport facilities, distances and the
//! two accessibility measures (gravity form over service sites, coverage form over
//! transport buffers).

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::path::Path;
use std::str::FromStr;

use geo_types::{Geometry, LineString, Polygon};
use serde::{Deserialize, Serialize};
use wkt::{ToWkt, TryFromWkt};

use crate::error::{Error, Result};
use crate::geometry::{self, euclid, Point};
use crate::population::PreferenceProfile;

/// Tolerance for "lies inside the city" checks, in km (1 m).
pub const OUTLINE_TOLERANCE_KM: f64 = 1e-3;
/// Lower bound of the distance floor used by the gravity accessibility measure.
pub const MIN_DISTANCE_FLOOR_KM: f64 = 0.1;
const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ZoneId(pub u32);

impl fmt::Display for ZoneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Zone {
    pub id: ZoneId,
    pub centroid: Point,
    pub boundary: Polygon<f64>,
    /// km²
    pub area: f64,
    /// km²
    pub residential_area: f64,
    /// currency per m² per month
    pub rent: f64,
    pub air_class: u8,
    pub noise_class: u8,
    pub traffic_class: u8,
}

impl Zone {
    pub fn validate(&self) -> Result<()> {
        let id = self.id;
        if !(self.area > 0.0) {
            return Err(Error::validation(format!("zone {id}: area must be > 0")));
        }
        if !(0.0..=self.area).contains(&self.residential_area) {
            return Err(Error::validation(format!(
                "zone {id}: residential area {} outside [0, {}]",
                self.residential_area, self.area
            )));
        }
        if !(self.rent >= 0.0) || !self.rent.is_finite() {
            return Err(Error::validation(format!("zone {id}: rent must be >= 0")));
        }
        if self.air_class > 4 || self.noise_class > 4 {
            return Err(Error::validation(format!(
                "zone {id}: pollution classes must lie in 0..=4"
            )));
        }
        if self.traffic_class > 2 {
            return Err(Error::validation(format!(
                "zone {id}: traffic class must lie in 0..=2"
            )));
        }
        geometry::validate_polygon(&self.boundary)?;
        let poly_area = geometry::polygon_area(&self.boundary);
        if (poly_area - self.area).abs() > 0.01 * self.area {
            return Err(Error::validation(format!(
                "zone {id}: boundary area {poly_area:.6} disagrees with stated area {}",
                self.area
            )));
        }
        Ok(())
    }

    /// Radius of the disk with the zone's area.
    pub fn equivalent_radius(&self) -> f64 {
        (self.area / std::f64::consts::PI).sqrt()
    }

    /// Distance floor applied inside the gravity measure for this zone.
    pub fn distance_floor(&self) -> f64 {
        MIN_DISTANCE_FLOOR_KM.max(self.equivalent_radius() / 2.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceType {
    Educational,
    Retail,
    GreenRecreational,
    Cultural,
    Health,
}

impl ServiceType {
    pub const ALL: [ServiceType; 5] = [
        ServiceType::Educational,
        ServiceType::Retail,
        ServiceType::GreenRecreational,
        ServiceType::Cultural,
        ServiceType::Health,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ServiceType::Educational => "educational",
            ServiceType::Retail => "retail",
            ServiceType::GreenRecreational => "green_recreational",
            ServiceType::Cultural => "cultural",
            ServiceType::Health => "health",
        }
    }
}

impl FromStr for ServiceType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        ServiceType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown service type {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServiceSite {
    pub id: u32,
    pub kind: ServiceType,
    pub location: Point,
    /// km²
    pub area: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Highway,
    Subway,
    Brt,
    Bus,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Highway, Mode::Subway, Mode::Brt, Mode::Bus];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Highway => "highway",
            Mode::Subway => "subway",
            Mode::Brt => "brt",
            Mode::Bus => "bus",
        }
    }

    /// The transit preference a facility of this mode serves. BRT stops serve the bus
    /// preference.
    pub fn access(self) -> TransitAccess {
        match self {
            Mode::Highway => TransitAccess::Highway,
            Mode::Subway => TransitAccess::Subway,
            Mode::Brt | Mode::Bus => TransitAccess::Bus,
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown transport mode {s:?}"))
    }
}

/// Transport preference families of the household profile.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitAccess {
    Highway,
    Subway,
    Bus,
}

impl TransitAccess {
    pub const ALL: [TransitAccess; 3] =
        [TransitAccess::Highway, TransitAccess::Subway, TransitAccess::Bus];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FacilityGeometry {
    Point(Point),
    Line(LineString<f64>),
}

impl FacilityGeometry {
    pub fn distance_to(&self, p: Point) -> f64 {
        match self {
            FacilityGeometry::Point(q) => euclid(*q, p),
            FacilityGeometry::Line(l) => geometry::point_polyline_distance(p, l),
        }
    }

    pub fn to_wkt(&self) -> String {
        match self {
            FacilityGeometry::Point(p) => geo_types::Point::from(*p).wkt_string(),
            FacilityGeometry::Line(l) => l.wkt_string(),
        }
    }

    pub fn parse_wkt(s: &str) -> Result<Self, String> {
        match Geometry::<f64>::try_from_wkt_str(s).map_err(|e| e.to_string())? {
            Geometry::Point(p) => Ok(FacilityGeometry::Point(p.0)),
            Geometry::LineString(l) => Ok(FacilityGeometry::Line(l)),
            other => Err(format!("expected POINT or LINESTRING, got {other:?}")),
        }
    }

    fn vertices(&self) -> Vec<Point> {
        match self {
            FacilityGeometry::Point(p) => vec![*p],
            FacilityGeometry::Line(l) => l.0.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransportFacility {
    pub id: u32,
    pub mode: Mode,
    pub geometry: FacilityGeometry,
    /// km
    pub service_radius: f64,
    /// Ramps, stations or stops. A point facility is its own single access point.
    pub access_points: Vec<Point>,
}

impl TransportFacility {
    /// Builds a facility; a line without explicit access points uses its vertices.
    pub fn new(
        id: u32,
        mode: Mode,
        geometry: FacilityGeometry,
        service_radius: f64,
        access_points: Vec<Point>,
    ) -> Result<Self> {
        let access_points = match (&geometry, access_points.is_empty()) {
            (FacilityGeometry::Point(p), true) => vec![*p],
            (FacilityGeometry::Line(l), true) => l.0.clone(),
            (_, false) => access_points,
        };
        let f = TransportFacility {
            id,
            mode,
            geometry,
            service_radius,
            access_points,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.service_radius > 0.0) || !self.service_radius.is_finite() {
            return Err(Error::validation(format!(
                "facility {}: service radius must be > 0",
                self.id
            )));
        }
        if let FacilityGeometry::Line(l) = &self.geometry {
            if l.0.len() < 2 {
                return Err(Error::validation(format!(
                    "facility {}: linestring needs at least 2 vertices",
                    self.id
                )));
            }
        }
        if self.access_points.is_empty() {
            return Err(Error::validation(format!(
                "facility {}: no access points",
                self.id
            )));
        }
        Ok(())
    }

    /// Centres of the disk buffers representing this facility in the coverage measure.
    pub fn buffer_centers(&self) -> &[Point] {
        &self.access_points
    }

    /// Distance from `p` to the nearest access point.
    pub fn access_distance(&self, p: Point) -> f64 {
        self.access_points
            .iter()
            .map(|a| euclid(*a, p))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Default per-mode buffer radii (km) used when a facility row leaves its radius empty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceRadii {
    pub bus: f64,
    pub brt: f64,
    pub subway: f64,
    pub highway: f64,
}

impl Default for ServiceRadii {
    fn default() -> Self {
        ServiceRadii {
            bus: 0.4,
            brt: 0.4,
            subway: 0.8,
            highway: 1.5,
        }
    }
}

impl ServiceRadii {
    pub fn for_mode(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Highway => self.highway,
            Mode::Subway => self.subway,
            Mode::Brt => self.brt,
            Mode::Bus => self.bus,
        }
    }
}

/// Zone-to-zone distance model.
#[derive(Clone, Debug, PartialEq)]
pub enum DistanceModel {
    /// Straight-line distance between centroids.
    Euclidean,
    /// Precomputed row-major `n × n` matrix in zone order (e.g. network distances).
    Matrix(Vec<f64>),
}

/// Something a zone can be measured against.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Place {
    Zone(ZoneId),
    Site(u32),
    Point(Point),
}

#[derive(Clone, Debug)]
pub struct World {
    zones: Vec<Zone>,
    sites: Vec<ServiceSite>,
    facilities: Vec<TransportFacility>,
    distance: DistanceModel,
    index: HashMap<ZoneId, usize>,
    /// per service type: max site area (the gravity weight normalizer)
    type_max_area: [f64; 5],
    /// per zone, per service type: Σ w_j / d_floor²
    service_table: Vec<[f64; 5]>,
    /// per zone, per transit preference: Σ covered area / zone area
    transit_table: Vec<[f64; 3]>,
}

impl PartialEq for World {
    fn eq(&self, other: &Self) -> bool {
        self.zones == other.zones
            && self.sites == other.sites
            && self.facilities == other.facilities
            && self.distance == other.distance
            && self.type_max_area == other.type_max_area
            && self.service_table == other.service_table
            && self.transit_table == other.transit_table
    }
}

impl World {
    /// Validates the inputs, orders everything by id and precomputes the accessibility
    /// tables.
    pub fn new(
        mut zones: Vec<Zone>,
        mut sites: Vec<ServiceSite>,
        mut facilities: Vec<TransportFacility>,
    ) -> Result<World> {
        zones.sort_by_key(|z| z.id);
        sites.sort_by_key(|s| s.id);
        facilities.sort_by_key(|f| f.id);
        if zones.is_empty() {
            return Err(Error::validation("world has no zones"));
        }
        let mut index = HashMap::with_capacity(zones.len());
        for (i, z) in zones.iter().enumerate() {
            z.validate()?;
            if index.insert(z.id, i).is_some() {
                return Err(Error::validation(format!("duplicate zone id {}", z.id)));
            }
        }
        for w in sites.windows(2) {
            if w[0].id == w[1].id {
                return Err(Error::validation(format!("duplicate site id {}", w[0].id)));
            }
        }
        for w in facilities.windows(2) {
            if w[0].id == w[1].id {
                return Err(Error::validation(format!(
                    "duplicate facility id {}",
                    w[0].id
                )));
            }
        }
        let mut world = World {
            zones,
            sites: Vec::new(),
            facilities: Vec::new(),
            distance: DistanceModel::Euclidean,
            index,
            type_max_area: [0.0; 5],
            service_table: Vec::new(),
            transit_table: Vec::new(),
        };
        for s in &sites {
            if !(s.area > 0.0) {
                return Err(Error::validation(format!("site {}: area must be > 0", s.id)));
            }
            if !world.inside_city(s.location) {
                return Err(Error::validation(format!(
                    "site {} lies outside the city outline",
                    s.id
                )));
            }
        }
        for f in &facilities {
            f.validate()?;
            world.check_facility_inside(f)?;
        }
        world.sites = sites;
        world.facilities = facilities;
        world.refresh_tables()?;
        Ok(world)
    }

    /// Replaces the zone-to-zone metric with a precomputed matrix in zone order.
    pub fn with_distance_matrix(mut self, matrix: Vec<f64>) -> Result<World> {
        let n = self.zones.len();
        if matrix.len() != n * n {
            return Err(Error::validation(format!(
                "distance matrix has {} entries, expected {}",
                matrix.len(),
                n * n
            )));
        }
        if matrix.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(Error::validation("distance matrix entries must be finite and >= 0"));
        }
        self.distance = DistanceModel::Matrix(matrix);
        Ok(self)
    }

    pub(crate) fn check_facility_inside(&self, f: &TransportFacility) -> Result<()> {
        let outside = f
            .geometry
            .vertices()
            .into_iter()
            .chain(f.access_points.iter().copied())
            .any(|p| !self.inside_city(p));
        if outside {
            return Err(Error::validation(format!(
                "facility {} lies outside the city outline",
                f.id
            )));
        }
        Ok(())
    }

    /// True when `p` is inside some zone boundary or within 1 m of one.
    pub fn inside_city(&self, p: Point) -> bool {
        self.zones.iter().any(|z| {
            geometry::contains(&z.boundary, p)
                || geometry::point_boundary_distance(&z.boundary, p) <= OUTLINE_TOLERANCE_KM
        })
    }

    fn refresh_tables(&mut self) -> Result<()> {
        let mut max_area = [0.0f64; 5];
        for s in &self.sites {
            let m = &mut max_area[s.kind.index()];
            *m = m.max(s.area);
        }
        self.type_max_area = max_area;
        self.service_table = self
            .zones
            .iter()
            .map(|z| {
                let floor = z.distance_floor();
                let mut row = [0.0; 5];
                for s in &self.sites {
                    let k = s.kind.index();
                    let w = s.area / max_area[k];
                    let d = euclid(z.centroid, s.location).max(floor);
                    row[k] += w / (d * d);
                }
                row
            })
            .collect();
        let mut transit = vec![[0.0; 3]; self.zones.len()];
        for (zi, z) in self.zones.iter().enumerate() {
            for f in &self.facilities {
                let covered = buffer_coverage(f, z, f.service_radius)?;
                transit[zi][f.mode.access().index()] += covered / z.area;
            }
        }
        self.transit_table = transit;
        Ok(())
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn sites(&self) -> &[ServiceSite] {
        &self.sites
    }

    pub fn facilities(&self) -> &[TransportFacility] {
        &self.facilities
    }

    pub fn distance_model(&self) -> &DistanceModel {
        &self.distance
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }

    pub fn zone_index(&self, id: ZoneId) -> Result<usize> {
        self.index
            .get(&id)
            .copied()
            .ok_or_else(|| Error::UnknownId(format!("zone {id}")))
    }

    pub fn zone(&self, id: ZoneId) -> Result<&Zone> {
        Ok(&self.zones[self.zone_index(id)?])
    }

    /// Per-type maximum site area used to normalize site weights.
    pub fn service_normalizers(&self) -> [f64; 5] {
        self.type_max_area
    }

    /// Raw zone-to-zone distance by zone index.
    pub fn zone_distance(&self, a: usize, b: usize) -> f64 {
        match &self.distance {
            DistanceModel::Euclidean => euclid(self.zones[a].centroid, self.zones[b].centroid),
            DistanceModel::Matrix(m) => m[a * self.zones.len() + b],
        }
    }

    /// Distance in km from a zone to another zone, a service site or a point.
    pub fn distance(&self, from: ZoneId, to: Place) -> Result<f64> {
        let a = self.zone_index(from)?;
        match to {
            Place::Zone(id) => Ok(self.zone_distance(a, self.zone_index(id)?)),
            Place::Site(id) => {
                let site = self
                    .sites
                    .binary_search_by_key(&id, |s| s.id)
                    .map(|i| &self.sites[i])
                    .map_err(|_| Error::UnknownId(format!("site {id}")))?;
                Ok(euclid(self.zones[a].centroid, site.location))
            }
            Place::Point(p) => Ok(euclid(self.zones[a].centroid, p)),
        }
    }

    /// Gravity accessibility to the household's preferred public services.
    pub fn public_service_accessibility(
        &self,
        zone: ZoneId,
        profile: &PreferenceProfile,
    ) -> Result<f64> {
        check_weights("service", &profile.service_weights)?;
        Ok(self.service_score(self.zone_index(zone)?, &profile.service_weights))
    }

    /// Coverage accessibility to the household's preferred transport services.
    pub fn transit_accessibility(&self, zone: ZoneId, profile: &PreferenceProfile) -> Result<f64> {
        check_weights("transit", &profile.transit_weights)?;
        Ok(self.transit_score(self.zone_index(zone)?, &profile.transit_weights))
    }

    /// Unchecked gravity score by zone index; the score is linear in `weights`.
    pub fn service_score(&self, zone: usize, weights: &[f64; 5]) -> f64 {
        self.service_table[zone]
            .iter()
            .zip(weights)
            .map(|(t, w)| t * w)
            .sum()
    }

    /// Unchecked coverage score by zone index; the score is linear in `weights`.
    pub fn transit_score(&self, zone: usize, weights: &[f64; 3]) -> f64 {
        self.transit_table[zone]
            .iter()
            .zip(weights)
            .map(|(t, w)| t * w)
            .sum()
    }

    pub fn transit_table(&self) -> &[[f64; 3]] {
        &self.transit_table
    }

    pub fn service_table(&self) -> &[[f64; 5]] {
        &self.service_table
    }

    /// Copy of this world with replaced zone rents and extra facilities. Derived tables
    /// are recomputed.
    pub(crate) fn rebuilt(
        &self,
        rents: Option<&[f64]>,
        extra: Vec<TransportFacility>,
    ) -> Result<World> {
        let mut zones = self.zones.clone();
        if let Some(rents) = rents {
            for (z, r) in zones.iter_mut().zip(rents) {
                z.rent = *r;
            }
        }
        let mut facilities = self.facilities.clone();
        facilities.extend(extra);
        let mut w = World::new(zones, self.sites.clone(), facilities)?;
        w.distance = self.distance.clone();
        Ok(w)
    }
}

fn check_weights<const N: usize>(what: &str, weights: &[f64; N]) -> Result<()> {
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::contract(format!("{what} weights must be finite and >= 0")));
    }
    let sum: f64 = weights.iter().sum();
    if sum != 0.0 && (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::contract(format!(
            "{what} weights sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Area (km²) of the facility's disk buffers of `radius` clipped to the zone boundary,
/// summed over the facility's access points.
pub fn buffer_coverage(facility: &TransportFacility, zone: &Zone, radius: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::Geometry(format!("buffer radius must be > 0, got {radius}")));
    }
    let (lo, hi) = geometry::bounds(&zone.boundary.exterior().0);
    let mut total = 0.0;
    for c in facility.buffer_centers() {
        let dx = (lo.x - c.x).max(c.x - hi.x).max(0.0);
        let dy = (lo.y - c.y).max(c.y - hi.y).max(0.0);
        if dx.hypot(dy) >= radius {
            continue;
        }
        total += geometry::disk_intersection_area(&zone.boundary, *c, radius)?;
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// CSV ingestion and export

#[derive(Debug, Deserialize, Serialize)]
struct ZoneRow {
    id: u32,
    cx_km: f64,
    cy_km: f64,
    area_km2: f64,
    res_area_km2: f64,
    rent_per_m2: f64,
    air_class: u8,
    noise_class: u8,
    traffic_class: u8,
    boundary_wkt: String,
}

#[derive(Debug, Deserialize, Serialize)]
struct SiteRow {
    id: u32,
    #[serde(rename = "type")]
    kind: String,
    x_km: f64,
    y_km: f64,
    area_km2: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct FacilityRow {
    id: u32,
    mode: String,
    geometry_wkt: String,
    service_radius_km: Option<f64>,
    #[serde(default)]
    access_points_wkt: Option<String>,
}

fn read_rows<T, U>(
    path: &Path,
    mut convert: impl FnMut(T) -> std::result::Result<U, String>,
) -> Result<Vec<U>>
where
    T: serde::de::DeserializeOwned,
{
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            file: path.into(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let parse_err = |line: usize, message: String| Error::Parse {
            file: path.into(),
            line,
            message,
        };
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let row: T = rec
            .deserialize(Some(&headers))
            .map_err(|e| parse_err(line, e.to_string()))?;
        out.push(convert(row).map_err(|m| parse_err(line, m))?);
    }
    Ok(out)
}

fn parse_polygon(s: &str) -> std::result::Result<Polygon<f64>, String> {
    Polygon::<f64>::try_from_wkt_str(s).map_err(|e| format!("bad polygon WKT: {e}"))
}

pub(crate) fn parse_multipoint(s: &str) -> std::result::Result<Vec<Point>, String> {
    let mp = geo_types::MultiPoint::<f64>::try_from_wkt_str(s)
        .map_err(|e| format!("bad multipoint WKT: {e}"))?;
    Ok(mp.0.into_iter().map(|p| p.0).collect())
}

/// Reads the three world tables. Rows with an empty `service_radius_km` take the
/// per-mode default from `radii`.
pub fn load_world_with(
    zone_file: &Path,
    site_file: &Path,
    facility_file: &Path,
    radii: &ServiceRadii,
) -> Result<World> {
    let zones = read_rows(zone_file, |r: ZoneRow| {
        Ok(Zone {
            id: ZoneId(r.id),
            centroid: Point { x: r.cx_km, y: r.cy_km },
            boundary: parse_polygon(&r.boundary_wkt)?,
            area: r.area_km2,
            residential_area: r.res_area_km2,
            rent: r.rent_per_m2,
            air_class: r.air_class,
            noise_class: r.noise_class,
            traffic_class: r.traffic_class,
        })
    })?;
    let sites = read_rows(site_file, |r: SiteRow| {
        Ok(ServiceSite {
            id: r.id,
            kind: r.kind.parse()?,
            location: Point { x: r.x_km, y: r.y_km },
            area: r.area_km2,
        })
    })?;
    let facilities = read_rows(facility_file, |r: FacilityRow| {
        let mode: Mode = r.mode.parse()?;
        let geometry = FacilityGeometry::parse_wkt(&r.geometry_wkt)?;
        let access = match r.access_points_wkt.as_deref() {
            Some(s) if !s.is_empty() => parse_multipoint(s)?,
            _ => Vec::new(),
        };
        let radius = r.service_radius_km.unwrap_or_else(|| radii.for_mode(mode));
        TransportFacility::new(r.id, mode, geometry, radius, access).map_err(|e| e.to_string())
    })?;
    World::new(zones, sites, facilities)
}

/// [`load_world_with`] using default service radii.
pub fn load_world(zone_file: &Path, site_file: &Path, facility_file: &Path) -> Result<World> {
    load_world_with(zone_file, site_file, facility_file, &ServiceRadii::default())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// Writes the world back out in the ingestion format.
pub fn write_world(world: &World, dir: &Path) -> Result<()> {
    let path = dir.join("zones.csv");
    let mut w = csv_writer(&path)?;
    for z in world.zones() {
        w.serialize(ZoneRow {
            id: z.id.0,
            cx_km: z.centroid.x,
            cy_km: z.centroid.y,
            area_km2: z.area,
            res_area_km2: z.residential_area,
            rent_per_m2: z.rent,
            air_class: z.air_class,
            noise_class: z.noise_class,
            traffic_class: z.traffic_class,
            boundary_wkt: z.boundary.wkt_string(),
        })
        .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("sites.csv");
    let mut w = csv_writer(&path)?;
    for s in world.sites() {
        w.serialize(SiteRow {
            id: s.id,
            kind: s.kind.as_str().to_string(),
            x_km: s.location.x,
            y_km: s.location.y,
            area_km2: s.area,
        })
        .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("facilities.csv");
    let mut w = csv_writer(&path)?;
    for f in world.facilities() {
        let access = match f.geometry {
            FacilityGeometry::Point(_) => String::new(),
            FacilityGeometry::Line(_) => {
                geo_types::MultiPoint::from(f.access_points.clone()).wkt_string()
            }
        };
        w.serialize(FacilityRow {
            id: f.id,
            mode: f.mode.as_str().to_string(),
            geometry_wkt: f.geometry.to_wkt(),
            service_radius_km: Some(f.service_radius),
            access_points_wkt: Some(access),
        })
        .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}
