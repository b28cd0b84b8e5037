//! Objective vectors and hard constraints of a household over candidate zones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::{Criterion, Household};
use crate::world::{World, ZoneId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Min,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// monthly rent of the required floor area
    Rent,
    ServiceAccess,
    TransitAccess,
    /// summed distance to the employees' workplaces
    Workplace,
    /// distance to the former residence
    FormerResidence,
    Air,
    Noise,
    Traffic,
}

impl Objective {
    pub fn sense(self) -> Sense {
        match self {
            Objective::ServiceAccess | Objective::TransitAccess => Sense::Max,
            _ => Sense::Min,
        }
    }

    /// Value oriented so that smaller is better.
    fn oriented(self, v: f64) -> f64 {
        match self.sense() {
            Sense::Min => v,
            Sense::Max => -v,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveVector {
    pub entries: Vec<(Objective, f64)>,
}

impl ObjectiveVector {
    pub fn new(entries: Vec<(Objective, f64)>) -> Self {
        ObjectiveVector { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn value(&self, objective: Objective) -> Option<f64> {
        self.entries
            .iter()
            .find(|(o, _)| *o == objective)
            .map(|(_, v)| *v)
    }

    /// Component `k` oriented for minimisation.
    pub fn oriented(&self, k: usize) -> f64 {
        let (o, v) = self.entries[k];
        o.oriented(v)
    }

    fn same_criteria(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.0 == b.0)
    }
}

/// Pareto dominance: `u` is no worse than `v` everywhere and strictly better somewhere.
pub fn dominates(u: &ObjectiveVector, v: &ObjectiveVector) -> Result<bool> {
    if !u.same_criteria(v) {
        return Err(Error::contract("objective vectors over different criteria"));
    }
    Ok(dominates_unchecked(u, v))
}

pub(crate) fn dominates_unchecked(u: &ObjectiveVector, v: &ObjectiveVector) -> bool {
    let mut strictly = false;
    for k in 0..u.entries.len() {
        let (a, b) = (u.oriented(k), v.oriented(k));
        if a > b {
            return false;
        }
        if a < b {
            strictly = true;
        }
    }
    strictly
}

/// The objectives this household evaluates, in a fixed order.
pub fn objectives_for(household: &Household) -> Vec<Objective> {
    let p = &household.profile;
    let active = p.active;
    let mut out = vec![Objective::Rent];
    if active.iter().any(|c| c.service_type().is_some()) {
        out.push(Objective::ServiceAccess);
    }
    if active.iter().any(|c| c.transit_access().is_some()) {
        out.push(Objective::TransitAccess);
    }
    if active.contains(Criterion::WorkplaceDist) && household.n_employees > 0 {
        out.push(Objective::Workplace);
    }
    if active.contains(Criterion::FormerDist) {
        out.push(Objective::FormerResidence);
    }
    if active.contains(Criterion::Air) && !p.hard_air {
        out.push(Objective::Air);
    }
    if active.contains(Criterion::Noise) && !p.hard_noise {
        out.push(Objective::Noise);
    }
    if active.contains(Criterion::Traffic) && !p.hard_traffic {
        out.push(Objective::Traffic);
    }
    out
}

fn is_feasible(household: &Household, world: &World, zi: usize) -> bool {
    let z = &world.zones()[zi];
    let p = &household.profile;
    let cost = household.required_area * z.rent;
    let lo = p.band_min * household.income;
    let hi = p.band_max * household.income;
    lo <= cost
        && cost <= hi
        && !(p.hard_air && z.air_class > 2)
        && !(p.hard_noise && z.noise_class > 2)
        && !(p.hard_traffic && z.traffic_class != 0)
}

/// Zone indices passing the rent band and the household's hard pollution/traffic filters.
pub fn feasible_indices(household: &Household, world: &World) -> Vec<usize> {
    (0..world.len())
        .filter(|zi| is_feasible(household, world, *zi))
        .collect()
}

/// Zones the household may choose from; may be empty.
pub fn feasible_zones(household: &Household, world: &World) -> Vec<ZoneId> {
    feasible_indices(household, world)
        .into_iter()
        .map(|zi| world.zones()[zi].id)
        .collect()
}

pub(crate) fn evaluate_index(
    household: &Household,
    world: &World,
    zi: usize,
    objectives: &[Objective],
    former: usize,
    workplaces: &[usize],
) -> ObjectiveVector {
    let z = &world.zones()[zi];
    let p = &household.profile;
    let entries = objectives
        .iter()
        .map(|o| {
            let v = match o {
                Objective::Rent => household.required_area * z.rent,
                Objective::ServiceAccess => world.service_score(zi, &p.service_weights),
                Objective::TransitAccess => world.transit_score(zi, &p.transit_weights),
                Objective::Workplace => {
                    workplaces.iter().map(|w| world.zone_distance(zi, *w)).sum()
                }
                Objective::FormerResidence => world.zone_distance(zi, former),
                Objective::Air => z.air_class as f64,
                Objective::Noise => z.noise_class as f64,
                Objective::Traffic => z.traffic_class as f64,
            };
            (*o, v)
        })
        .collect();
    ObjectiveVector { entries }
}

/// Objective vector of `household` at `zone`; the zone must be feasible.
pub fn evaluate(household: &Household, zone: ZoneId, world: &World) -> Result<ObjectiveVector> {
    let zi = world.zone_index(zone)?;
    if !is_feasible(household, world, zi) {
        return Err(Error::contract(format!(
            "zone {zone} is not feasible for household {}",
            household.id
        )));
    }
    let former = world.zone_index(household.former_zone)?;
    let workplaces = household
        .workplaces
        .iter()
        .map(|w| world.zone_index(*w))
        .collect::<Result<Vec<_>>>()?;
    Ok(evaluate_index(
        household,
        world,
        zi,
        &objectives_for(household),
        former,
        &workplaces,
    ))
}

/// A household's decision problem: the feasible zones and their objective vectors.
#[derive(Clone, Debug)]
pub struct AgentProblem {
    /// zone indices into the world
    pub zones: Vec<usize>,
    pub vectors: Vec<ObjectiveVector>,
}

impl AgentProblem {
    pub fn build(household: &Household, world: &World) -> Result<Self> {
        let former = world.zone_index(household.former_zone)?;
        let workplaces = household
            .workplaces
            .iter()
            .map(|w| world.zone_index(*w))
            .collect::<Result<Vec<_>>>()?;
        let objectives = objectives_for(household);
        let zones = feasible_indices(household, world);
        let vectors = zones
            .iter()
            .map(|zi| evaluate_index(household, world, *zi, &objectives, former, &workplaces))
            .collect();
        Ok(AgentProblem { zones, vectors })
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::population::{CriteriaSet, PreferenceProfile};
    use crate::world::tests::square_zone;
    use proptest::prelude::*;

    pub fn household(profile: PreferenceProfile) -> Household {
        Household {
            id: 0,
            income: 1000.0,
            size: 2,
            member_ages: vec![30, 30],
            n_cars: 1,
            n_employees: 0,
            required_area: 50.0,
            former_zone: ZoneId(1),
            workplaces: vec![],
            relocation_month: 1,
            profile,
        }
    }

    fn three_rent_world() -> World {
        let zones = [3.0, 6.0, 9.0]
            .iter()
            .enumerate()
            .map(|(i, r)| square_zone(i as u32 + 1, i as f64 * 2.0, 0.0, 2.0, *r))
            .collect();
        World::new(zones, vec![], vec![]).unwrap()
    }

    fn v(pairs: &[(Objective, f64)]) -> ObjectiveVector {
        ObjectiveVector::new(pairs.to_vec())
    }

    #[test]
    fn rent_band_arithmetic() {
        let world = three_rent_world();
        let mut p = PreferenceProfile::rent_only();
        p.band_min = 0.2;
        p.band_max = 0.4;
        let h = household(p); // band [200, 400], A = 50
        assert_eq!(feasible_zones(&h, &world), vec![ZoneId(2)]);
    }

    #[test]
    fn traffic_hard_flag_excludes_everything() {
        let mut zones: Vec<_> = (0..3)
            .map(|i| square_zone(i + 1, i as f64 * 2.0, 0.0, 2.0, 5.0))
            .collect();
        zones.iter_mut().for_each(|z| z.traffic_class = 1);
        let world = World::new(zones, vec![], vec![]).unwrap();
        let mut p = PreferenceProfile::rent_only();
        p.active.insert(Criterion::Traffic);
        p.hard_traffic = true;
        assert!(feasible_zones(&household(p.clone()), &world).is_empty());
        // soft: traffic stays an objective and never filters
        p.hard_traffic = false;
        let h = household(p);
        assert_eq!(feasible_zones(&h, &world).len(), 3);
        assert_eq!(evaluate(&h, ZoneId(1), &world).unwrap().value(Objective::Traffic), Some(1.0));
    }

    #[test]
    fn vacuous_constraints_keep_all_zones() {
        let world = three_rent_world();
        let h = household(PreferenceProfile::rent_only());
        assert_eq!(feasible_zones(&h, &world).len(), 3);
    }

    #[test]
    fn rent_product() {
        let world = World::new(vec![square_zone(1, 0.0, 0.0, 2.0, 5.0)], vec![], vec![]).unwrap();
        let mut h = household(PreferenceProfile::rent_only());
        h.required_area = 60.0;
        let ov = evaluate(&h, ZoneId(1), &world).unwrap();
        assert_eq!(ov.entries, vec![(Objective::Rent, 300.0)]);
    }

    #[test]
    fn distance_objectives_vanish_at_home_and_work() {
        let world = three_rent_world();
        let mut p = PreferenceProfile::rent_only();
        p.active = [Criterion::Rent, Criterion::FormerDist, Criterion::WorkplaceDist]
            .into_iter()
            .collect::<CriteriaSet>();
        let mut h = household(p);
        h.former_zone = ZoneId(2);
        h.n_employees = 2;
        h.workplaces = vec![ZoneId(3), ZoneId(3)];
        let at_home = evaluate(&h, ZoneId(2), &world).unwrap();
        assert_eq!(at_home.value(Objective::FormerResidence), Some(0.0));
        assert_eq!(at_home.value(Objective::Workplace), Some(4.0));
        let at_work = evaluate(&h, ZoneId(3), &world).unwrap();
        assert_eq!(at_work.value(Objective::Workplace), Some(0.0));
    }

    #[test]
    fn infeasible_zone_is_a_contract_error() {
        let world = three_rent_world();
        let mut p = PreferenceProfile::rent_only();
        p.band_min = 0.2;
        p.band_max = 0.4;
        let h = household(p);
        assert!(matches!(evaluate(&h, ZoneId(1), &world), Err(Error::Contract(_))));
    }

    #[test]
    fn dominance_examples() {
        use Objective::*;
        let u = v(&[(Rent, 200.0), (ServiceAccess, 0.5)]);
        let w = v(&[(Rent, 300.0), (ServiceAccess, 0.4)]);
        assert!(dominates(&u, &w).unwrap());
        assert!(!dominates(&u, &u).unwrap());
        let a = v(&[(Rent, 200.0), (ServiceAccess, 0.3)]);
        let b = v(&[(Rent, 300.0), (ServiceAccess, 0.4)]);
        assert!(!dominates(&a, &b).unwrap());
        assert!(!dominates(&b, &a).unwrap());
        let c = v(&[(Rent, 200.0)]);
        assert!(matches!(dominates(&a, &c), Err(Error::Contract(_))));
    }

    fn arb_vec() -> impl Strategy<Value = ObjectiveVector> {
        prop::collection::vec(0..4i32, 3).prop_map(|xs| {
            v(&[
                (Objective::Rent, xs[0] as f64),
                (Objective::ServiceAccess, xs[1] as f64),
                (Objective::FormerResidence, xs[2] as f64),
            ])
        })
    }

    proptest! {
        #[test]
        fn dominance_is_a_strict_partial_order(a in arb_vec(), b in arb_vec(), c in arb_vec()) {
            prop_assert!(!dominates(&a, &a).unwrap());
            if dominates(&a, &b).unwrap() {
                prop_assert!(!dominates(&b, &a).unwrap());
                if dominates(&b, &c).unwrap() {
                    prop_assert!(dominates(&a, &c).unwrap());
                }
            }
        }

        #[test]
        fn widening_the_band_never_shrinks_feasibility(
            lo in 0.0..0.5f64, hi in 0.5..1.0f64, dl in 0.0..0.2f64, dh in 0.0..0.2f64,
        ) {
            let world = three_rent_world();
            let mut p = PreferenceProfile::rent_only();
            p.band_min = lo;
            p.band_max = hi;
            let narrow = feasible_zones(&household(p.clone()), &world);
            p.band_min = (lo - dl).max(0.0);
            p.band_max = (hi + dh).min(1.0);
            let wide = feasible_zones(&household(p), &world);
            prop_assert!(narrow.iter().all(|z| wide.contains(z)));
        }
    }
}
