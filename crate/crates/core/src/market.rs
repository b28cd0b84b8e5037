//! Monthly capacity-constrained allocation of movers to their residential options.
//!
//! Each month, zone capacity is the housing vacated by that month's movers plus a share
//! of new supply proportional to residential area. Movers propose to their options in
//! anchor-distance order; an over-subscribed zone admits its highest-priority proposers
//! and the rest move on. A mover left without options retries once next month, after
//! which it is unhoused.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::csvout::CsvOut;
use crate::error::{Error, Result};
use crate::population::{Criterion, Household};
use crate::seed;
use crate::world::{World, ZoneId};

/// Splits `total` into integer parts proportional to `weights`, distributing the
/// leftover units by largest fractional remainder (ties to the lower index).
pub fn largest_remainder(total: u32, weights: &[f64]) -> Result<Vec<u32>> {
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::validation("apportionment weights must be finite and >= 0"));
    }
    let sum: f64 = weights.iter().sum();
    if total == 0 {
        return Ok(vec![0; weights.len()]);
    }
    if !(sum > 0.0) {
        return Err(Error::validation(
            "cannot apportion new supply: total residential area is zero",
        ));
    }
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut parts: Vec<u32> = quotas.iter().map(|q| q.floor() as u32).collect();
    let assigned: u32 = parts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|a, b| {
        let fa = quotas[*a] - quotas[*a].floor();
        let fb = quotas[*b] - quotas[*b].floor();
        fb.total_cmp(&fa).then(a.cmp(b))
    });
    for i in order.into_iter().take((total - assigned) as usize) {
        parts[i] += 1;
    }
    Ok(parts)
}

/// Capacity of every zone for one month: `vacated[i]` plus zone i's share of `new_supply`.
pub fn monthly_capacities(world: &World, vacated: &[u32], new_supply: u32) -> Result<Vec<u32>> {
    if vacated.len() != world.len() {
        return Err(Error::contract("one vacated count per zone required"));
    }
    let areas: Vec<f64> = world.zones().iter().map(|z| z.residential_area).collect();
    let shares = largest_remainder(new_supply, &areas)?;
    Ok(vacated.iter().zip(shares).map(|(n, s)| n + s).collect())
}

/// Default monthly new supply: a yearly total split by the monthly relocation shares.
pub fn default_schedule(yearly_total: u32, month_shares: &[f64; 12]) -> Result<[u32; 12]> {
    let parts = largest_remainder(yearly_total, month_shares)?;
    let mut out = [0; 12];
    out.copy_from_slice(&parts);
    Ok(out)
}

/// Competition order between households; smaller keys win.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PriorityKey {
    pub size_rank: u8,
    pub income: f64,
    pub has_child: bool,
    pub tiebreak: u64,
    pub agent_id: u32,
}

impl PriorityKey {
    pub fn of(household: &Household, seed: u64) -> Self {
        PriorityKey {
            size_rank: size_rank(household.size),
            income: household.income,
            has_child: household.has_child(),
            tiebreak: seed::derive(seed, "priority", household.id as u64),
            agent_id: household.id,
        }
    }
}

/// Couples first, then 3, 4 and 5+ members, singles last.
pub fn size_rank(size: u32) -> u8 {
    match size {
        2 => 0,
        3 => 1,
        4 => 2,
        1 => 4,
        _ => 3,
    }
}

impl Eq for PriorityKey {}

impl Ord for PriorityKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.size_rank
            .cmp(&other.size_rank)
            .then(other.income.total_cmp(&self.income))
            .then(self.has_child.cmp(&other.has_child))
            .then(self.tiebreak.cmp(&other.tiebreak))
            .then(self.agent_id.cmp(&other.agent_id))
    }
}

impl PartialOrd for PriorityKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Reference point used to order a household's options.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    /// first workplace when the workplace criterion is active and someone works,
    /// otherwise the former residence
    #[default]
    Auto,
    Former,
}

fn anchor_zone(household: &Household, anchor: Anchor) -> ZoneId {
    let use_work = anchor == Anchor::Auto
        && household.profile.active.contains(Criterion::WorkplaceDist)
        && household.n_employees >= 1;
    match household.workplaces.first() {
        Some(w) if use_work => *w,
        _ => household.former_zone,
    }
}

/// Options as zone indices, nearest to the household's anchor first.
pub fn order_options(
    household: &Household,
    options: &[ZoneId],
    world: &World,
    anchor: Anchor,
) -> Result<Vec<usize>> {
    let a = world.zone_index(anchor_zone(household, anchor))?;
    let mut idx = options
        .iter()
        .map(|z| world.zone_index(*z))
        .collect::<Result<Vec<_>>>()?;
    idx.sort_by(|x, y| {
        world
            .zone_distance(a, *x)
            .total_cmp(&world.zone_distance(a, *y))
            .then(x.cmp(y))
    });
    idx.dedup();
    Ok(idx)
}

/// Outcome of one month's proposal rounds.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MonthResult {
    /// (mover, zone index)
    pub assigned: Vec<(usize, usize)>,
    pub deferred: Vec<usize>,
    /// distinct proposers per zone
    pub demand: Vec<u32>,
}

/// Runs proposal rounds for `movers` (indices into `options`/`priority`) against
/// `capacity`, which is decremented in place.
pub fn run_month(
    movers: &[usize],
    options: &[Vec<usize>],
    priority: &[PriorityKey],
    capacity: &mut [u32],
) -> MonthResult {
    let mut result = MonthResult {
        demand: vec![0; capacity.len()],
        ..Default::default()
    };
    let mut proposed: Vec<Vec<bool>> = movers
        .iter()
        .map(|_| vec![false; capacity.len()])
        .collect();
    let mut cursor = vec![0usize; movers.len()];
    let mut active: Vec<usize> = (0..movers.len()).collect();
    while !active.is_empty() {
        let mut by_zone: Vec<Vec<usize>> = vec![Vec::new(); capacity.len()];
        for &m in &active {
            let opts = &options[movers[m]];
            while cursor[m] < opts.len() && capacity[opts[cursor[m]]] == 0 {
                cursor[m] += 1;
            }
            match opts.get(cursor[m]) {
                Some(&z) => {
                    if !proposed[m][z] {
                        proposed[m][z] = true;
                        result.demand[z] += 1;
                    }
                    by_zone[z].push(m);
                }
                None => result.deferred.push(movers[m]),
            }
        }
        let mut next = Vec::new();
        for (z, mut bidders) in by_zone.into_iter().enumerate() {
            if bidders.is_empty() {
                continue;
            }
            bidders.sort_by_key(|m| priority[movers[*m]]);
            let take = (capacity[z] as usize).min(bidders.len());
            capacity[z] -= take as u32;
            for &m in &bidders[..take] {
                result.assigned.push((movers[m], z));
            }
            for &m in &bidders[take..] {
                cursor[m] += 1;
                next.push(m);
            }
        }
        next.sort_unstable();
        active = next;
    }
    result.assigned.sort_unstable();
    result.deferred.sort_unstable();
    result
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarketParams {
    /// new housing units released per month
    pub schedule: [u32; 12],
    pub anchor: Anchor,
    pub seed: u64,
}

impl Default for MarketParams {
    fn default() -> Self {
        MarketParams {
            schedule: [0; 12],
            anchor: Anchor::Auto,
            seed: 0,
        }
    }
}

/// Final outcome for one household.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Allocation {
    pub agent_id: u32,
    /// month the outcome was settled
    pub month: u8,
    /// `None` when unhoused
    pub zone: Option<ZoneId>,
    /// months in which the household took part in the competition
    pub months_competed: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ZoneMonth {
    pub zone: ZoneId,
    pub month: u8,
    pub capacity: u32,
    pub vacated: u32,
    pub new_supply: u32,
    pub demand: u32,
    pub assigned: u32,
}

/// The settled market after twelve months.
#[derive(Clone, Debug, PartialEq)]
pub struct MarketState {
    /// one per household, in household order
    pub allocations: Vec<Allocation>,
    pub zone_months: Vec<ZoneMonth>,
}

impl MarketState {
    pub fn unhoused(&self) -> usize {
        self.allocations.iter().filter(|a| a.zone.is_none()).count()
    }

    pub fn housed(&self) -> usize {
        self.allocations.len() - self.unhoused()
    }

    /// Residents per zone (by world zone order).
    pub fn residents(&self, world: &World) -> Result<Vec<u32>> {
        let mut out = vec![0; world.len()];
        for a in &self.allocations {
            if let Some(z) = a.zone {
                out[world.zone_index(z)?] += 1;
            }
        }
        Ok(out)
    }
}

/// Runs the twelve-month market for `households`, where `options[k]` are household k's
/// residential options.
pub fn run_year(
    households: &[Household],
    world: &World,
    options: &[Vec<ZoneId>],
    params: &MarketParams,
) -> Result<MarketState> {
    if options.len() != households.len() {
        return Err(Error::contract("one option list per household required"));
    }
    let n_zones = world.len();
    let ordered = households
        .iter()
        .zip(options)
        .map(|(h, o)| order_options(h, o, world, params.anchor))
        .collect::<Result<Vec<_>>>()?;
    let former = households
        .iter()
        .map(|h| world.zone_index(h.former_zone))
        .collect::<Result<Vec<_>>>()?;
    let priority: Vec<PriorityKey> = households
        .iter()
        .map(|h| PriorityKey::of(h, params.seed))
        .collect();

    let mut scheduled: Vec<Vec<usize>> = vec![Vec::new(); 12];
    for (k, h) in households.iter().enumerate() {
        if !(1..=12).contains(&h.relocation_month) {
            return Err(Error::validation(format!(
                "household {}: relocation month {} outside 1..=12",
                h.id, h.relocation_month
            )));
        }
        scheduled[h.relocation_month as usize - 1].push(k);
    }

    let mut outcome: Vec<Option<Allocation>> = vec![None; households.len()];
    let mut competed = vec![0u8; households.len()];
    let mut zone_months = Vec::with_capacity(12 * n_zones);
    let mut carried: Vec<usize> = Vec::new();

    for month in 1..=12u8 {
        let mut vacated = vec![0u32; n_zones];
        for &k in &scheduled[month as usize - 1] {
            vacated[former[k]] += 1;
        }
        let new_supply = params.schedule[month as usize - 1];
        let capacity = monthly_capacities(world, &vacated, new_supply)?;
        let mut remaining = capacity.clone();

        let mut movers = carried.clone();
        for &k in &scheduled[month as usize - 1] {
            if ordered[k].is_empty() {
                outcome[k] = Some(Allocation {
                    agent_id: households[k].id,
                    month,
                    zone: None,
                    months_competed: 0,
                });
            } else {
                movers.push(k);
            }
        }
        for &k in &movers {
            competed[k] += 1;
        }
        let result = run_month(&movers, &ordered, &priority, &mut remaining);

        let mut assigned = vec![0u32; n_zones];
        for &(k, z) in &result.assigned {
            assigned[z] += 1;
            outcome[k] = Some(Allocation {
                agent_id: households[k].id,
                month,
                zone: Some(world.zones()[z].id),
                months_competed: competed[k],
            });
        }
        let mut next = Vec::new();
        for &k in &result.deferred {
            if competed[k] >= 2 || month == 12 {
                outcome[k] = Some(Allocation {
                    agent_id: households[k].id,
                    month,
                    zone: None,
                    months_competed: competed[k],
                });
            } else {
                next.push(k);
            }
        }
        carried = next;

        for (z, zone) in world.zones().iter().enumerate() {
            zone_months.push(ZoneMonth {
                zone: zone.id,
                month,
                capacity: capacity[z],
                vacated: vacated[z],
                new_supply: capacity[z] - vacated[z],
                demand: result.demand[z],
                assigned: assigned[z],
            });
        }
    }

    let allocations = outcome
        .into_iter()
        .map(|a| a.expect("every household is settled by month 12"))
        .collect();
    Ok(MarketState {
        allocations,
        zone_months,
    })
}

/// Writes `agent_id,month,zone_id` with `UNHOUSED` for households without a residence.
pub fn write_allocation(state: &MarketState, path: &Path) -> Result<()> {
    let mut out = CsvOut::create(path, ["agent_id", "month", "zone_id"])?;
    for a in &state.allocations {
        let zone = a.zone.map_or_else(|| "UNHOUSED".to_string(), |z| z.to_string());
        out.row([a.agent_id.to_string(), a.month.to_string(), zone])?;
    }
    out.finish()
}

pub fn write_zone_month(state: &MarketState, path: &Path) -> Result<()> {
    let mut out = CsvOut::create(
        path,
        ["zone_id", "month", "capacity", "vacated", "new_supply", "demand", "assigned"],
    )?;
    for r in &state.zone_months {
        out.row([
            r.zone.to_string(),
            r.month.to_string(),
            r.capacity.to_string(),
            r.vacated.to_string(),
            r.new_supply.to_string(),
            r.demand.to_string(),
            r.assigned.to_string(),
        ])?;
    }
    out.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::tests::household;
    use crate::population::PreferenceProfile;
    use crate::world::tests::square_zone;
    use proptest::prelude::*;

    fn key(size: u32, income: f64, child: bool, agent: u32) -> PriorityKey {
        let mut h = household(PreferenceProfile::rent_only());
        h.id = agent;
        h.size = size;
        h.income = income;
        h.member_ages = vec![if child { 10 } else { 40 }; size as usize];
        PriorityKey::of(&h, 1)
    }

    fn line_world(areas: &[f64]) -> World {
        let zones = areas
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let mut z = square_zone(i as u32 + 1, i as f64 * 2.0, 0.0, 2.0, 5.0);
                z.residential_area = *a;
                z
            })
            .collect();
        World::new(zones, vec![], vec![]).unwrap()
    }

    #[test]
    fn capacity_proportional_to_residential_area() {
        let w = line_world(&[1.0, 3.0]);
        assert_eq!(monthly_capacities(&w, &[0, 0], 8).unwrap(), vec![2, 6]);
    }

    #[test]
    fn capacity_without_supply_is_vacated() {
        let w = line_world(&[1.0, 3.0]);
        assert_eq!(monthly_capacities(&w, &[4, 1], 0).unwrap(), vec![4, 1]);
    }

    #[test]
    fn equal_shares_round_to_exact_total() {
        let parts = largest_remainder(4, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(parts.iter().sum::<u32>(), 4);
        assert_eq!(parts, vec![2, 1, 1]);
    }

    #[test]
    fn zero_residential_area_with_supply_fails() {
        let w = line_world(&[0.0, 0.0]);
        assert!(matches!(
            monthly_capacities(&w, &[0, 0], 3),
            Err(Error::Validation(_))
        ));
        assert_eq!(monthly_capacities(&w, &[1, 0], 0).unwrap(), vec![1, 0]);
    }

    proptest! {
        #[test]
        fn apportionment_conserves_and_stays_near_quota(
            weights in prop::collection::vec(0.0f64..10.0, 1..20),
            total in 0u32..500,
        ) {
            prop_assume!(weights.iter().sum::<f64>() > 0.0);
            let parts = largest_remainder(total, &weights).unwrap();
            prop_assert_eq!(parts.iter().sum::<u32>(), total);
            let sum: f64 = weights.iter().sum();
            for (p, w) in parts.iter().zip(&weights) {
                let q = total as f64 * w / sum;
                prop_assert!((*p as f64) >= q.floor() && (*p as f64) <= q.floor() + 1.0);
            }
        }

        #[test]
        fn priority_is_a_strict_total_order(
            raw in prop::collection::vec((1u32..7, 0u32..4, any::<bool>()), 2..30),
        ) {
            let keys: Vec<PriorityKey> = raw
                .iter()
                .enumerate()
                .map(|(i, (s, inc, c))| key(*s, *inc as f64 * 400.0, *c, i as u32))
                .collect();
            for a in &keys {
                for b in &keys {
                    prop_assert_eq!(a.cmp(b), b.cmp(a).reverse());
                    prop_assert_eq!(a.cmp(b) == Ordering::Equal, a.agent_id == b.agent_id);
                    for c in &keys {
                        if a < b && b < c {
                            prop_assert!(a < c);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn size_rank_order() {
        let ranks: Vec<u8> = [2, 3, 4, 5, 9, 1].iter().map(|s| size_rank(*s)).collect();
        assert_eq!(ranks, vec![0, 1, 2, 3, 3, 4]);
    }

    #[test]
    fn couple_beats_richer_family() {
        assert!(key(2, 900.0, false, 1) < key(4, 1200.0, false, 2));
    }

    #[test]
    fn income_then_children_break_size_ties() {
        assert!(key(3, 1200.0, true, 1) < key(3, 900.0, false, 2));
        assert!(key(3, 900.0, false, 1) < key(3, 900.0, true, 2));
    }

    #[test]
    fn single_mover_is_assigned() {
        let mut cap = vec![1, 0];
        let r = run_month(&[0], &[vec![0]], &[key(2, 500.0, false, 1)], &mut cap);
        assert_eq!(r.assigned, vec![(0, 0)]);
        assert!(r.deferred.is_empty());
        assert_eq!(cap, vec![0, 0]);
    }

    #[test]
    fn loser_moves_to_next_option_or_defers() {
        let prio = [key(4, 1200.0, false, 1), key(2, 900.0, false, 2), key(1, 900.0, false, 3)];
        let options = vec![vec![0, 1], vec![0], vec![0]];
        let mut cap = vec![1, 1];
        let r = run_month(&[0, 1, 2], &options, &prio, &mut cap);
        assert_eq!(r.assigned, vec![(0, 1), (1, 0)]);
        assert_eq!(r.deferred, vec![2]);
        assert_eq!(r.demand, vec![3, 1]);
    }

    #[test]
    fn full_zones_are_skipped_without_proposing() {
        let mut cap = vec![0, 1];
        let r = run_month(&[0], &[vec![0, 1]], &[key(2, 500.0, false, 1)], &mut cap);
        assert_eq!(r.assigned, vec![(0, 1)]);
        assert_eq!(r.demand, vec![0, 1]);
    }

    #[test]
    fn identical_movers_split_by_seeded_tiebreak() {
        let prio = [key(3, 700.0, false, 1), key(3, 700.0, false, 2)];
        let winner = |p: &[PriorityKey]| {
            let mut cap = vec![1];
            run_month(&[0, 1], &[vec![0], vec![0]], p, &mut cap).assigned[0].0
        };
        let first = winner(&prio);
        assert_eq!(first, winner(&prio));
        let expected = if prio[0].tiebreak < prio[1].tiebreak { 0 } else { 1 };
        assert_eq!(first, expected);
    }

    fn movers(n: u32, month: u8) -> Vec<Household> {
        (0..n)
            .map(|i| {
                let mut h = household(PreferenceProfile::rent_only());
                h.id = i + 1;
                h.former_zone = ZoneId(1);
                h.relocation_month = month;
                h
            })
            .collect()
    }

    #[test]
    fn empty_options_leave_everyone_unhoused() {
        let w = line_world(&[1.0, 1.0]);
        let hs = movers(5, 3);
        let state = run_year(&hs, &w, &vec![vec![]; 5], &MarketParams::default()).unwrap();
        assert_eq!(state.unhoused(), 5);
        assert!(state.allocations.iter().all(|a| a.months_competed == 0));
    }

    #[test]
    fn ample_capacity_gives_nearest_option() {
        let w = line_world(&[1.0, 1.0, 1.0]);
        let hs = movers(4, 1);
        let options = vec![vec![ZoneId(3), ZoneId(2)]; 4];
        let params = MarketParams {
            schedule: [100; 12],
            ..Default::default()
        };
        let state = run_year(&hs, &w, &options, &params).unwrap();
        assert!(state.allocations.iter().all(|a| a.zone == Some(ZoneId(2))));
    }

    #[test]
    fn deferred_movers_get_one_more_month() {
        let w = line_world(&[0.0, 1.0]);
        // four movers from zone 1 in month 1; zone 2 only gets supply in month 2
        let hs = movers(4, 1);
        let options = vec![vec![ZoneId(2)]; 4];
        let mut schedule = [0; 12];
        schedule[1] = 2;
        let params = MarketParams {
            schedule,
            ..Default::default()
        };
        let state = run_year(&hs, &w, &options, &params).unwrap();
        assert_eq!(state.housed(), 2);
        assert_eq!(state.unhoused(), 2);
        for a in &state.allocations {
            assert_eq!(a.month, 2);
            assert_eq!(a.months_competed, 2);
        }
    }

    #[test]
    fn december_deferral_is_final() {
        let w = line_world(&[0.0, 1.0]);
        let hs = movers(1, 12);
        let state = run_year(&hs, &w, &[vec![ZoneId(2)]], &MarketParams::default()).unwrap();
        assert_eq!(state.allocations[0].zone, None);
        assert_eq!(state.allocations[0].month, 12);
    }

    #[test]
    fn vacated_units_feed_capacity() {
        let w = line_world(&[0.0, 1.0]);
        let mut hs = movers(2, 5);
        hs[1].former_zone = ZoneId(2);
        let options = vec![vec![ZoneId(2)], vec![ZoneId(1)]];
        let state = run_year(&hs, &w, &options, &MarketParams::default()).unwrap();
        assert_eq!(state.housed(), 2);
        let may: Vec<_> = state.zone_months.iter().filter(|r| r.month == 5).collect();
        assert_eq!(may.iter().map(|r| r.vacated).collect::<Vec<_>>(), vec![1, 1]);
    }

    #[test]
    fn allocation_csv_marks_unhoused() {
        let w = line_world(&[1.0]);
        let hs = movers(2, 1);
        let options = vec![vec![ZoneId(1)], vec![]];
        let params = MarketParams {
            schedule: [1; 12],
            ..Default::default()
        };
        let state = run_year(&hs, &w, &options, &params).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("allocation.csv");
        write_allocation(&state, &path).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text, "agent_id,month,zone_id\n1,1,1\n2,1,UNHOUSED\n");
    }
}
