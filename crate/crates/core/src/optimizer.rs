//! Per-household NSGA-II over the feasible zone set, plus an exhaustive Pareto scan used
//! as its oracle.
//!
//! The genome is a single index into the household's feasible zone list. Crossover moves
//! a parent one step towards the other parent in space; mutation redraws the zone
//! uniformly. Environmental selection works on distinct zones first, so a population
//! never crowds out a distinct non-dominated zone with copies of another.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::{dominates_unchecked, AgentProblem, ObjectiveVector};
use crate::population::Household;
use crate::seed;
use crate::world::{World, ZoneId};

/// Upper bound on the number of options a household keeps.
pub const MAX_OPTIONS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaParams {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub seed: u64,
}

impl Default for GaParams {
    fn default() -> Self {
        GaParams {
            population_size: 40,
            generations: 50,
            crossover_rate: 0.9,
            mutation_rate: 0.1,
            seed: 0,
        }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 4 || self.population_size % 2 != 0 {
            return Err(Error::validation("population size must be even and >= 4"));
        }
        if self.generations < 1 {
            return Err(Error::validation("generations must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) || !(0.0..=1.0).contains(&self.mutation_rate)
        {
            return Err(Error::validation("operator rates must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// One non-dominated front: `members` index into the sorted population.
#[derive(Clone, Debug, PartialEq)]
pub struct Front {
    pub rank: usize,
    pub members: Vec<usize>,
    /// crowding distance of each member, same order
    pub crowding: Vec<f64>,
}

/// Partitions `pop` into non-dominated fronts, best first, with crowding distances.
pub fn nondominated_sort(pop: &[ObjectiveVector]) -> Vec<Front> {
    let n = pop.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates_unchecked(&pop[i], &pop[j]) {
                dominated_by_me[i].push(j);
                domination_count[j] += 1;
            } else if dominates_unchecked(&pop[j], &pop[i]) {
                dominated_by_me[j].push(i);
                domination_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|i| domination_count[*i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by_me[i] {
                domination_count[j] -= 1;
                if domination_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        let refs: Vec<&ObjectiveVector> = current.iter().map(|i| &pop[*i]).collect();
        let crowding = crowding_distance(&refs);
        fronts.push(Front {
            rank: fronts.len(),
            members: current,
            crowding,
        });
        current = next;
    }
    fronts
}

/// Crowding distance of each member of a front.
///
/// Per objective, a member attaining the front's minimum or maximum is a boundary
/// member (+∞); otherwise it gains `(next − prev) / range`, where `prev`/`next` are the
/// nearest strictly smaller/larger values in the front. Objectives with zero range
/// contribute nothing. Using distinct neighbour values makes the result independent of
/// input order, including for duplicated vectors.
pub fn crowding_distance(front: &[&ObjectiveVector]) -> Vec<f64> {
    let n = front.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let m = front[0].len();
    let mut dist = vec![0.0; n];
    for k in 0..m {
        let mut vals: Vec<f64> = front.iter().map(|v| v.oriented(k)).collect();
        let col = vals.clone();
        vals.sort_by(|a, b| a.total_cmp(b));
        vals.dedup();
        let (lo, hi) = (vals[0], vals[vals.len() - 1]);
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for (i, x) in col.iter().enumerate() {
            if *x == lo || *x == hi {
                dist[i] = f64::INFINITY;
                continue;
            }
            let pos = vals.partition_point(|v| v < x);
            dist[i] += (vals[pos + 1] - vals[pos - 1]) / range;
        }
    }
    dist
}

/// Rank and crowding attached to one genome.
#[derive(Clone, Copy, Debug)]
struct Fitness {
    rank: usize,
    crowding: f64,
}

struct Search<'a> {
    problem: &'a AgentProblem,
    world: &'a World,
    params: GaParams,
    rng: ChaCha8Rng,
}

impl Search<'_> {
    fn distance(&self, a: usize, b: usize) -> f64 {
        self.world
            .zone_distance(self.problem.zones[a], self.problem.zones[b])
    }

    /// Sorts the distinct genomes of `pool` and returns them front by front with
    /// their fitness, each front ordered by crowding (descending), then genome.
    fn rank_distinct(&self, pool: &[usize]) -> Vec<Vec<(usize, Fitness)>> {
        let mut distinct = pool.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        let vectors: Vec<ObjectiveVector> = distinct
            .iter()
            .map(|g| self.problem.vectors[*g].clone())
            .collect();
        nondominated_sort(&vectors)
            .into_iter()
            .map(|f| {
                let mut members: Vec<(usize, Fitness)> = f
                    .members
                    .iter()
                    .zip(&f.crowding)
                    .map(|(i, c)| {
                        (
                            distinct[*i],
                            Fitness {
                                rank: f.rank,
                                crowding: *c,
                            },
                        )
                    })
                    .collect();
                members.sort_by(|a, b| b.1.crowding.total_cmp(&a.1.crowding).then(a.0.cmp(&b.0)));
                members
            })
            .collect()
    }

    /// Picks the next parent population of size N from the combined pool.
    fn select(&self, pool: &[usize]) -> (Vec<usize>, Vec<Fitness>) {
        let n = self.params.population_size;
        let mut chosen: Vec<(usize, Fitness)> = Vec::with_capacity(n);
        for front in self.rank_distinct(pool) {
            let room = n - chosen.len();
            chosen.extend(front.into_iter().take(room));
            if chosen.len() == n {
                break;
            }
        }
        let distinct = chosen.len();
        for i in distinct..n {
            chosen.push(chosen[i % distinct]);
        }
        chosen.into_iter().unzip()
    }

    fn tournament(&mut self, pop: &[usize], fit: &[Fitness]) -> usize {
        let a = self.rng.random_range(0..pop.len());
        let b = self.rng.random_range(0..pop.len());
        let (fa, fb) = (fit[a], fit[b]);
        let order = fa
            .rank
            .cmp(&fb.rank)
            .then(fb.crowding.total_cmp(&fa.crowding));
        match order {
            Ordering::Less => pop[a],
            Ordering::Greater => pop[b],
            Ordering::Equal => {
                if self.rng.random::<bool>() {
                    pop[a]
                } else {
                    pop[b]
                }
            }
        }
    }

    /// The feasible zone nearest to `from` among those strictly closer to `towards`
    /// than `from` is.
    fn step_towards(&self, from: usize, towards: usize) -> usize {
        if from == towards {
            return from;
        }
        let gap = self.distance(from, towards);
        (0..self.problem.len())
            .filter(|j| self.distance(*j, towards) < gap)
            .min_by(|a, b| {
                self.distance(*a, from)
                    .total_cmp(&self.distance(*b, from))
                    .then(a.cmp(b))
            })
            .unwrap_or(towards)
    }

    fn offspring(&mut self, pop: &[usize], fit: &[Fitness]) -> Vec<usize> {
        let n = self.params.population_size;
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let a = self.tournament(pop, fit);
            let b = self.tournament(pop, fit);
            let (mut c1, mut c2) = if self.rng.random::<f64>() < self.params.crossover_rate {
                (self.step_towards(a, b), self.step_towards(b, a))
            } else {
                (a, b)
            };
            for c in [&mut c1, &mut c2] {
                if self.rng.random::<f64>() < self.params.mutation_rate {
                    *c = self.rng.random_range(0..self.problem.len());
                }
            }
            out.push(c1);
            out.push(c2);
        }
        out.truncate(n);
        out
    }

    fn run(&mut self, mut observer: impl FnMut(usize, &[usize])) -> Vec<usize> {
        let n = self.params.population_size;
        let initial: Vec<usize> = (0..n)
            .map(|_| self.rng.random_range(0..self.problem.len()))
            .collect();
        let (mut pop, mut fit) = self.select(&initial);
        observer(0, &pop);
        for g in 1..=self.params.generations {
            let children = self.offspring(&pop, &fit);
            let pool: Vec<usize> = pop.iter().chain(&children).copied().collect();
            (pop, fit) = self.select(&pool);
            observer(g, &pop);
        }
        self.rank_distinct(&pop)
            .into_iter()
            .next()
            .unwrap_or_default()
            .into_iter()
            .map(|(g, _)| g)
            .collect()
    }
}

/// Runs NSGA-II on a prepared problem. `observer` sees the parent population (as
/// feasible-list indices) after initialisation and after every generation. Returns the
/// final rank-0 distinct genomes, crowding-descending.
pub fn evolve(
    problem: &AgentProblem,
    world: &World,
    params: &GaParams,
    observer: impl FnMut(usize, &[usize]),
) -> Result<Vec<usize>> {
    params.validate()?;
    if problem.is_empty() {
        return Ok(Vec::new());
    }
    let mut search = Search {
        problem,
        world,
        params: *params,
        rng: ChaCha8Rng::seed_from_u64(params.seed),
    };
    Ok(search.run(observer))
}

/// Up to ten residential options for the household: distinct zones of the final rank-0
/// front, in crowding-descending order. Empty when nothing is feasible.
pub fn nsga2_options(household: &Household, world: &World, params: &GaParams) -> Result<Vec<ZoneId>> {
    let problem = AgentProblem::build(household, world)?;
    let front = evolve(&problem, world, params, |_, _| {})?;
    Ok(front
        .into_iter()
        .take(MAX_OPTIONS)
        .map(|g| world.zones()[problem.zones[g]].id)
        .collect())
}

/// Exact Pareto-optimal subset of the household's feasible zones, in id order.
pub fn exhaustive_pareto(household: &Household, world: &World) -> Result<Vec<ZoneId>> {
    let problem = AgentProblem::build(household, world)?;
    Ok(pareto_indices(&problem.vectors)
        .into_iter()
        .map(|i| world.zones()[problem.zones[i]].id)
        .collect())
}

/// Indices of the non-dominated vectors by full pairwise comparison.
pub fn pareto_indices(vectors: &[ObjectiveVector]) -> Vec<usize> {
    (0..vectors.len())
        .filter(|i| {
            !vectors
                .iter()
                .any(|other| dominates_unchecked(other, &vectors[*i]))
        })
        .collect()
}

/// Options for every household, optimized in parallel. Each household's search is
/// seeded from `(master_seed, household id)`.
pub fn options_for_population(
    households: &[Household],
    world: &World,
    params: &GaParams,
    master_seed: u64,
) -> Result<Vec<Vec<ZoneId>>> {
    households
        .par_iter()
        .map(|h| {
            let p = GaParams {
                seed: seed::derive(master_seed, "optimizer", h.id as u64),
                ..*params
            };
            nsga2_options(h, world, &p)
        })
        .collect()
}
