//! A synthetic city for tests and demos.
//!
//! Zones are jittered cells of a regular grid of 2 km cells. The north is expensive and
//! affluent, the centre is dense, polluted and job-rich, and the southwest has no metro,
//! which is where the sample subway scenario runs.

use std::collections::BTreeMap;
use std::path::Path;

use geo_types::{LineString, Polygon};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{self, Point};
use crate::population::{
    AreaParams, CarParams, EmploymentParams, IncomeParams, PreferencePriors, SizeParams,
    SynthesisParams,
};
use crate::scenario::{FacilitySpec, NeighborhoodRadii, RentBandSpec, ScenarioSpec};
use crate::seed;
use crate::world::{
    self, FacilityGeometry, Mode, ServiceRadii, ServiceSite, ServiceType, TransportFacility,
    World, Zone, ZoneId,
};

pub const CELL_KM: f64 = 2.0;
const JITTER_KM: f64 = 0.35;

pub struct SynthCity {
    pub world: World,
    pub synthesis: SynthesisParams,
    /// `(file stem, scenario)`
    pub scenarios: Vec<(String, ScenarioSpec)>,
}

/// Grid shape for `n` zones: the factorisation closest to a 5:3 landscape.
fn grid_shape(n: usize) -> (usize, usize) {
    let target = (n as f64 * 0.6).sqrt();
    let ny = (1..=n)
        .filter(|d| n % d == 0 && *d <= n / d)
        .min_by(|a, b| {
            (*a as f64 - target)
                .abs()
                .total_cmp(&(*b as f64 - target).abs())
        })
        .unwrap_or(1);
    (n / ny, ny)
}

struct Layout {
    width: f64,
    height: f64,
}

impl Layout {
    /// 0 at the centre, 1 at (and beyond) half the shorter side away.
    fn centrality(&self, p: Point) -> f64 {
        let dx = (p.x - self.width / 2.0) / self.width;
        let dy = (p.y - self.height / 2.0) / self.height;
        (2.0 * dx.hypot(dy)).min(1.0)
    }

    /// 0 in the south, 1 in the north.
    fn north(&self, p: Point) -> f64 {
        p.y / self.height
    }

    fn at(&self, u: f64, v: f64) -> Point {
        Point {
            x: u * self.width,
            y: v * self.height,
        }
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn class(x: f64, max: u8) -> u8 {
    x.round().clamp(0.0, max as f64) as u8
}

fn point_in(poly: &Polygon<f64>, rng: &mut ChaCha8Rng) -> Point {
    let (lo, hi) = geometry::bounds(&poly.exterior().0);
    loop {
        let p = Point {
            x: round4(rng.random_range(lo.x..hi.x)),
            y: round4(rng.random_range(lo.y..hi.y)),
        };
        if geometry::contains(poly, p) && geometry::point_boundary_distance(poly, p) > 0.05 {
            return p;
        }
    }
}

/// `count` points evenly spaced along `line`, including both ends.
fn stations_along(line: &[Point], count: usize) -> Vec<Point> {
    let seg: Vec<f64> = line.windows(2).map(|w| geometry::euclid(w[0], w[1])).collect();
    let total: f64 = seg.iter().sum();
    (0..count)
        .map(|k| {
            let mut s = total * k as f64 / (count - 1) as f64;
            for (i, len) in seg.iter().enumerate() {
                if s <= *len || i == seg.len() - 1 {
                    let t = (s / len).min(1.0);
                    let (a, b) = (line[i], line[i + 1]);
                    return Point {
                        x: round4(a.x + t * (b.x - a.x)),
                        y: round4(a.y + t * (b.y - a.y)),
                    };
                }
                s -= len;
            }
            unreachable!()
        })
        .collect()
}

fn wkt_line(points: &[Point]) -> String {
    FacilityGeometry::Line(LineString::from(points.to_vec())).to_wkt()
}

fn wkt_multipoint(points: &[Point]) -> String {
    let body: Vec<String> = points.iter().map(|p| format!("({} {})", p.x, p.y)).collect();
    format!("MULTIPOINT({})", body.join(","))
}

fn line_facility(
    id: u32,
    mode: Mode,
    line: &[Point],
    stations: usize,
    radii: &ServiceRadii,
) -> Result<TransportFacility> {
    TransportFacility::new(
        id,
        mode,
        FacilityGeometry::Line(LineString::from(line.to_vec())),
        radii.for_mode(mode),
        stations_along(line, stations),
    )
}

fn line_spec(mode: Mode, line: &[Point], stations: usize) -> FacilitySpec {
    FacilitySpec {
        mode: mode.as_str().to_string(),
        geometry_wkt: wkt_line(line),
        service_radius_km: None,
        access_points_wkt: Some(wkt_multipoint(&stations_along(line, stations))),
    }
}

/// Builds the synthetic city with `n_zones` zones.
pub fn generate(n_zones: usize, seed_value: u64) -> Result<SynthCity> {
    if n_zones == 0 {
        return Err(Error::validation("need at least one zone"));
    }
    let (nx, ny) = grid_shape(n_zones);
    let layout = Layout {
        width: nx as f64 * CELL_KM,
        height: ny as f64 * CELL_KM,
    };
    let mut rng = seed::stream(seed_value, "synthcity", 0);

    let mut vertex = vec![vec![Point { x: 0.0, y: 0.0 }; ny + 1]; nx + 1];
    for (i, col) in vertex.iter_mut().enumerate() {
        for (j, v) in col.iter_mut().enumerate() {
            let interior = i > 0 && i < nx && j > 0 && j < ny;
            let (jx, jy) = if interior {
                (
                    rng.random_range(-JITTER_KM..JITTER_KM),
                    rng.random_range(-JITTER_KM..JITTER_KM),
                )
            } else {
                (0.0, 0.0)
            };
            *v = Point {
                x: round4(i as f64 * CELL_KM + jx),
                y: round4(j as f64 * CELL_KM + jy),
            };
        }
    }

    let mut zones = Vec::with_capacity(n_zones);
    for j in 0..ny {
        for i in 0..nx {
            let ring = vec![
                vertex[i][j],
                vertex[i + 1][j],
                vertex[i + 1][j + 1],
                vertex[i][j + 1],
                vertex[i][j],
            ];
            let boundary = Polygon::new(LineString::from(ring), vec![]);
            let area = geometry::polygon_area(&boundary);
            let centroid = geometry::polygon_centroid(&boundary);
            let c = layout.centrality(centroid);
            let north = layout.north(centroid);
            let res_share = 0.35 + 0.25 * c + rng.random_range(-0.05..0.05);
            let rent = 0.5 + 11.0 * north.powf(1.6) + 1.0 * (1.0 - c) + rng.random_range(-0.3..0.3);
            let air = 2.6 * (1.0 - c) + 1.6 * (1.0 - north) + rng.random_range(-0.6..0.6);
            let noise = 3.0 * (1.0 - c) + 0.8 * (1.0 - north) + rng.random_range(-0.6..0.6);
            let traffic = if c < 0.22 {
                2
            } else if c < 0.4 {
                1
            } else {
                0
            };
            zones.push(Zone {
                id: ZoneId((j * nx + i + 1) as u32),
                centroid: Point {
                    x: round4(centroid.x),
                    y: round4(centroid.y),
                },
                boundary,
                area,
                residential_area: round4(area * res_share),
                rent: round2(rent.max(0.4)),
                air_class: class(air, 4),
                noise_class: class(noise, 4),
                traffic_class: traffic,
            });
        }
    }

    let mut sites = Vec::new();
    for z in &zones {
        let c = layout.centrality(z.centroid);
        let count = 1 + rng.random_range(0..3) + if c < 0.4 { 2 } else { 0 };
        for _ in 0..count {
            let kind = ServiceType::ALL[rng.random_range(0..5)];
            let area = match kind {
                ServiceType::GreenRecreational => rng.random_range(0.02..0.5),
                ServiceType::Retail => rng.random_range(0.005..0.1),
                _ => rng.random_range(0.005..0.05),
            };
            sites.push(ServiceSite {
                id: sites.len() as u32 + 1,
                kind,
                location: point_in(&z.boundary, &mut rng),
                area: round4(area),
            });
        }
    }

    let radii = ServiceRadii::default();
    let at = |u, v| layout.at(u, v);
    let mut facilities = vec![
        line_facility(1, Mode::Highway, &[at(0.02, 0.78), at(0.98, 0.8)], 8, &radii)?,
        line_facility(2, Mode::Highway, &[at(0.72, 0.98), at(0.7, 0.3)], 5, &radii)?,
        line_facility(3, Mode::Subway, &[at(0.56, 0.97), at(0.55, 0.4)], 7, &radii)?,
        line_facility(4, Mode::Brt, &[at(0.5, 0.55), at(0.97, 0.52)], 8, &radii)?,
    ];
    for z in &zones {
        let north = layout.north(z.centroid);
        let southwest = z.centroid.x < 0.6 * layout.width && north < 0.45;
        if !southwest && rng.random::<f64>() < 0.45 + 0.45 * north {
            facilities.push(TransportFacility::new(
                facilities.len() as u32 + 1,
                Mode::Bus,
                FacilityGeometry::Point(point_in(&z.boundary, &mut rng)),
                radii.bus,
                vec![],
            )?);
        }
    }

    let world = World::new(zones, sites, facilities)?;

    let key = |z: &Zone| z.id.to_string();
    let income_zones: BTreeMap<String, Vec<f64>> = world
        .zones()
        .iter()
        .map(|z| {
            let n = layout.north(z.centroid);
            let low = 0.5 - 0.35 * n;
            let high = 0.08 + 0.3 * n;
            (key(z), vec![low, 1.0 - low - high, high])
        })
        .collect();
    let jobs: BTreeMap<String, f64> = world
        .zones()
        .iter()
        .map(|z| {
            let c = layout.centrality(z.centroid);
            let w = 0.3 + 3.0 * (1.0 - c) + 0.8 * layout.north(z.centroid);
            (key(z), round2(w))
        })
        .collect();
    let synthesis = SynthesisParams {
        income: IncomeParams {
            bins: vec![[250.0, 500.0], [500.0, 1000.0], [1000.0, 1800.0]],
            probs: vec![0.35, 0.45, 0.2],
            zones: income_zones,
        },
        size: SizeParams {
            probs: vec![0.08, 0.3, 0.27, 0.22, 0.09, 0.04],
            zones: BTreeMap::new(),
            child_share: 0.75,
        },
        cars: CarParams {
            by_income_class: [
                vec![0.45, 0.5, 0.05],
                vec![0.2, 0.65, 0.15],
                vec![0.05, 0.55, 0.4],
            ],
        },
        employment: EmploymentParams {
            rate: 0.55,
            zones: jobs,
            commute_mean_km: 6.0,
        },
        area: AreaParams::default(),
        relocation_months: [
            0.06, 0.06, 0.07, 0.09, 0.1, 0.11, 0.11, 0.1, 0.09, 0.07, 0.07, 0.07,
        ],
        residence_weights: BTreeMap::new(),
        priors: PreferencePriors::default(),
    };
    synthesis.validate(&world)?;

    let subway = [at(0.02, 0.07), at(0.5, 0.065), at(0.97, 0.07)];
    let highway = [at(0.01, 0.22), at(0.5, 0.25), at(0.99, 0.2)];
    let brt = [at(0.97, 0.3), at(0.6, 0.15), at(0.35, 0.12)];
    let spec = |name: &str, facilities| ScenarioSpec {
        name: name.to_string(),
        facilities,
        rent_bands: None,
        neighborhood_radius_km: NeighborhoodRadii::default(),
    };
    let scenarios = vec![
        (
            "highway".to_string(),
            spec("highway", vec![line_spec(Mode::Highway, &highway, 9)]),
        ),
        (
            "subway".to_string(),
            spec("subway", vec![line_spec(Mode::Subway, &subway, 15)]),
        ),
        ("brt".to_string(), spec("brt", vec![line_spec(Mode::Brt, &brt, 12)])),
        (
            "subway_rent_shock".to_string(),
            ScenarioSpec {
                rent_bands: Some(vec![
                    RentBandSpec {
                        mode: "subway".into(),
                        r_min_km: 0.0,
                        r_max_km: 2.5,
                        rate_pct: 60.0,
                    },
                    RentBandSpec {
                        mode: "subway".into(),
                        r_min_km: 2.5,
                        r_max_km: 4.0,
                        rate_pct: 35.0,
                    },
                ]),
                ..spec("subway_rent_shock", vec![line_spec(Mode::Subway, &subway, 15)])
            },
        ),
    ];

    Ok(SynthCity {
        world,
        synthesis,
        scenarios,
    })
}

/// Writes the city tables, `synthesis.toml` and `scenarios/*.json` into `dir`.
pub fn write(city: &SynthCity, dir: &Path) -> Result<()> {
    let scen_dir = dir.join("scenarios");
    std::fs::create_dir_all(&scen_dir).map_err(|e| Error::io(&scen_dir, e))?;
    world::write_world(&city.world, dir)?;
    let path = dir.join("synthesis.toml");
    std::fs::write(&path, city.synthesis.to_toml_string()).map_err(|e| Error::io(&path, e))?;
    for (stem, spec) in &city.scenarios {
        let path = scen_dir.join(format!("{stem}.json"));
        let text = serde_json::to_string_pretty(spec).expect("scenario serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
