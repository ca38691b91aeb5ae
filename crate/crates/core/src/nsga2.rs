//! Elitist non-dominated sorting GA over schedules.
//!
//! One generation: binary-tournament selection with the crowded-comparison operator, height-cut
//! crossover, equal-height swap mutation, then survival selection on the union of parents and
//! offspring by non-domination rank and crowding distance.
//!
//! All randomness comes from one `ChaCha8Rng` seeded with [`EvolutionConfig::seed`], consumed in
//! this order:
//!
//! 1. initial population: `pop_size` calls to [`random_schedule`];
//! 2. per offspring pair: tournament for parent A, tournament for parent B, the crossover coin,
//!    the cut height (only when crossing over), then for each child the mutation coin followed by
//!    the mutation draws (only when mutating).
//!
//! Objective evaluation and survival selection consume no randomness, so offspring can be
//! evaluated on any number of threads without changing results.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{param, Error, Result};
use crate::schedule::{
    evaluate, is_legal, random_schedule, Allocation, HeightMap, ObjectiveVector, Problem, Schedule,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub schedule: Schedule,
    pub objectives: ObjectiveVector,
    /// Front index, 0 is best. `None` until ranked.
    pub rank: Option<usize>,
    /// Crowding distance within the individual's front. `None` until assigned.
    pub crowding: Option<f64>,
}

impl Individual {
    pub fn new(schedule: Schedule, problem: &Problem) -> Result<Self> {
        let objectives = evaluate(&schedule, problem)?;
        Ok(Individual {
            schedule,
            objectives,
            rank: None,
            crowding: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub members: Vec<Individual>,
    pub generation: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionConfig {
    pub pop_size: usize,
    pub generations: usize,
    pub p_crossover: f64,
    pub p_mutation: f64,
    pub seed: u64,
    pub tournament_size: usize,
    pub allocation: Allocation,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            pop_size: 20,
            generations: 100,
            p_crossover: 0.9,
            p_mutation: 0.1,
            seed: 0,
            tournament_size: 2,
            allocation: Allocation::default(),
        }
    }
}

impl EvolutionConfig {
    /// Defaults with a population of twice the number of tasks.
    pub fn for_tasks(n_tasks: usize) -> Self {
        EvolutionConfig {
            pop_size: 2 * n_tasks,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pop_size < 2 || !self.pop_size.is_multiple_of(2) {
            return Err(param("pop_size", format!("{} must be an even number >= 2", self.pop_size)));
        }
        for (name, p) in [("p_crossover", self.p_crossover), ("p_mutation", self.p_mutation)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(param(name, format!("{p} is outside [0, 1]")));
            }
        }
        if self.tournament_size == 0 {
            return Err(param("tournament_size", "must be at least 1"));
        }
        Ok(())
    }
}

/// Minimisation dominance: no worse in both objectives and different in at least one.
pub fn dominates(a: &ObjectiveVector, b: &ObjectiveVector) -> bool {
    a.makespan <= b.makespan && a.reliability_cost <= b.reliability_cost && a != b
}

/// Partitions indices of `objectives` into non-domination fronts, best first.
pub fn fast_nondominated_sort(objectives: &[ObjectiveVector]) -> Vec<Vec<usize>> {
    let n = objectives.len();
    let mut dominated: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut counts = vec![0usize; n];
    let mut current = Vec::new();
    for p in 0..n {
        for q in 0..n {
            if dominates(&objectives[p], &objectives[q]) {
                dominated[p].push(q);
            } else if dominates(&objectives[q], &objectives[p]) {
                counts[p] += 1;
            }
        }
        if counts[p] == 0 {
            current.push(p);
        }
    }

    let mut fronts = Vec::new();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            for &q in &dominated[p] {
                counts[q] -= 1;
                if counts[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::replace(&mut current, next));
    }
    fronts
}

/// Crowding distance of each member of `front` (same order as `front`).
///
/// Boundary members of each objective get `+inf`; interior members accumulate the gap between
/// their neighbours normalised by the objective's range. A zero range contributes nothing.
pub fn assign_crowding(front: &[usize], objectives: &[ObjectiveVector]) -> Vec<f64> {
    let l = front.len();
    let mut distance = vec![0.0; l];
    if l <= 2 {
        distance.fill(f64::INFINITY);
        return distance;
    }
    let mut order: Vec<usize> = (0..l).collect();
    for m in 0..ObjectiveVector::COUNT {
        let value = |k: usize| objectives[front[k]].get(m);
        order.sort_by(|&x, &y| value(x).total_cmp(&value(y)));
        let (lo, hi) = (value(order[0]), value(order[l - 1]));
        distance[order[0]] = f64::INFINITY;
        distance[order[l - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range > 0.0 {
            for k in 1..l - 1 {
                distance[order[k]] += (value(order[k + 1]) - value(order[k - 1])) / range;
            }
        }
    }
    distance
}

/// Sets rank and crowding distance on every member.
pub fn rank_and_crowd(members: &mut [Individual]) {
    let objectives: Vec<ObjectiveVector> = members.iter().map(|m| m.objectives).collect();
    for (rank, front) in fast_nondominated_sort(&objectives).iter().enumerate() {
        let crowding = assign_crowding(front, &objectives);
        for (&idx, d) in front.iter().zip(crowding) {
            members[idx].rank = Some(rank);
            members[idx].crowding = Some(d);
        }
    }
}

/// `Less` when `a` (at population index `ia`) is preferred over `b` (at `ib`): lower rank wins,
/// then larger crowding distance, then the lower index.
pub fn crowded_compare(a: &Individual, ia: usize, b: &Individual, ib: usize) -> Result<Ordering> {
    let key = |x: &Individual, i: usize| match (x.rank, x.crowding) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(Error::Contract(format!("individual {i} has no rank or crowding distance"))),
    };
    let (ra, ca) = key(a, ia)?;
    let (rb, cb) = key(b, ib)?;
    Ok(ra
        .cmp(&rb)
        .then_with(|| cb.total_cmp(&ca))
        .then_with(|| ia.cmp(&ib)))
}

/// Index of the crowded-comparison winner among `tournament_size` members drawn with
/// replacement.
pub fn tournament_select<R: Rng + ?Sized>(
    members: &[Individual],
    tournament_size: usize,
    rng: &mut R,
) -> Result<usize> {
    if members.is_empty() {
        return Err(Error::Contract("tournament on an empty population".to_string()));
    }
    let mut best = rng.random_range(0..members.len());
    for _ in 1..tournament_size {
        let challenger = rng.random_range(0..members.len());
        if crowded_compare(&members[challenger], challenger, &members[best], best)? == Ordering::Less {
            best = challenger;
        }
    }
    Ok(best)
}

/// Crossover with an explicit cut height: every processor list is split after its last task of
/// height `<= cut` and the children swap the tails.
pub fn crossover_at(a: &Schedule, b: &Schedule, heights: &HeightMap, cut: usize) -> Result<(Schedule, Schedule)> {
    for (name, s) in [("first", a), ("second", b)] {
        if !is_legal(s, heights) {
            return Err(Error::Contract(format!("{name} crossover parent is illegal")));
        }
    }
    if a.n_procs() != b.n_procs() {
        return Err(Error::Contract("crossover parents differ in processor count".to_string()));
    }
    let split = |list: &[usize]| list.partition_point(|&t| heights.height(t) <= cut);
    let mut c1 = Vec::with_capacity(a.n_procs());
    let mut c2 = Vec::with_capacity(a.n_procs());
    for (la, lb) in a.proc_lists.iter().zip(&b.proc_lists) {
        let (sa, sb) = (split(la), split(lb));
        c1.push([&la[..sa], &lb[sb..]].concat());
        c2.push([&lb[..sb], &la[sa..]].concat());
    }
    Ok((Schedule::new(c1), Schedule::new(c2)))
}

/// Crossover at a cut height drawn uniformly from `0..=max_height`.
pub fn crossover<R: Rng + ?Sized>(
    a: &Schedule,
    b: &Schedule,
    heights: &HeightMap,
    rng: &mut R,
) -> Result<(Schedule, Schedule)> {
    let cut = rng.random_range(0..=heights.max_height());
    crossover_at(a, b, heights, cut)
}

/// Swaps a random task with a random distinct task of the same height. Returns an unchanged
/// copy when the picked task has no equal-height partner.
pub fn mutate<R: Rng + ?Sized>(s: &Schedule, heights: &HeightMap, rng: &mut R) -> Schedule {
    let n = heights.n_tasks();
    let mut out = s.clone();
    if n == 0 {
        return out;
    }
    let first = rng.random_range(0..n);
    let group = heights.group(heights.height(first));
    if group.len() < 2 {
        return out;
    }
    let mut pick = rng.random_range(0..group.len() - 1);
    if group[pick] == first {
        pick = group.len() - 1;
    }
    let second = group[pick];
    swap_tasks(&mut out, first, second);
    out
}

/// Exchanges the positions of two tasks.
pub fn swap_tasks(s: &mut Schedule, x: usize, y: usize) {
    let locate = |s: &Schedule, t: usize| {
        s.proc_lists
            .iter()
            .enumerate()
            .find_map(|(j, l)| l.iter().position(|&u| u == t).map(|pos| (j, pos)))
            .expect("task present in schedule")
    };
    let (jx, px) = locate(s, x);
    let (jy, py) = locate(s, y);
    s.proc_lists[jx][px] = y;
    s.proc_lists[jy][py] = x;
}

/// Builds `pop_size` offspring from a ranked, crowded population.
pub fn make_offspring<R: Rng + ?Sized>(
    parents: &[Individual],
    config: &EvolutionConfig,
    problem: &Problem,
    rng: &mut R,
) -> Result<Vec<Individual>> {
    let heights = problem.heights();
    let mut children = Vec::with_capacity(config.pop_size);
    for _ in 0..config.pop_size / 2 {
        let a = tournament_select(parents, config.tournament_size, rng)?;
        let b = tournament_select(parents, config.tournament_size, rng)?;
        let (sa, sb) = (&parents[a].schedule, &parents[b].schedule);
        let (c1, c2) = if rng.random_bool(config.p_crossover) {
            crossover(sa, sb, heights, rng)?
        } else {
            (sa.clone(), sb.clone())
        };
        for child in [c1, c2] {
            let child = if rng.random_bool(config.p_mutation) {
                mutate(&child, heights, rng)
            } else {
                child
            };
            children.push(child);
        }
    }
    evaluate_all(children, problem)
}

fn evaluate_all(schedules: Vec<Schedule>, problem: &Problem) -> Result<Vec<Individual>> {
    schedules
        .into_par_iter()
        .map(|s| Individual::new(s, problem))
        .collect()
}

/// Indices of `objectives` kept when truncating to `capacity` by front, then by crowding.
pub fn survivors(objectives: &[ObjectiveVector], capacity: usize) -> Vec<usize> {
    let mut keep = Vec::with_capacity(capacity);
    for front in fast_nondominated_sort(objectives) {
        let room = capacity - keep.len();
        if front.len() <= room {
            keep.extend_from_slice(&front);
        } else {
            let crowding = assign_crowding(&front, objectives);
            let mut order: Vec<usize> = (0..front.len()).collect();
            order.sort_by(|&x, &y| crowding[y].total_cmp(&crowding[x]).then(front[x].cmp(&front[y])));
            keep.extend(order.into_iter().take(room).map(|k| front[k]));
        }
        if keep.len() == capacity {
            break;
        }
    }
    keep
}

/// One elitist generation: offspring, union with the parents, truncation back to `pop_size`.
pub fn evolve_generation<R: Rng + ?Sized>(
    population: &Population,
    config: &EvolutionConfig,
    problem: &Problem,
    rng: &mut R,
) -> Result<Population> {
    if population.members.len() != config.pop_size {
        return Err(Error::Contract(format!(
            "population has {} members, expected {}",
            population.members.len(),
            config.pop_size
        )));
    }
    let offspring = make_offspring(&population.members, config, problem, rng)?;
    let mut combined: Vec<Individual> = population.members.iter().cloned().chain(offspring).collect();
    let objectives: Vec<ObjectiveVector> = combined.iter().map(|m| m.objectives).collect();
    let mut keep = survivors(&objectives, config.pop_size);
    keep.sort_unstable();

    let mut members = Vec::with_capacity(config.pop_size);
    for (idx, ind) in combined.drain(..).enumerate() {
        if keep.binary_search(&idx).is_ok() {
            members.push(ind);
        }
    }
    rank_and_crowd(&mut members);
    Ok(Population {
        members,
        generation: population.generation + 1,
    })
}

/// Random initial population, ranked and crowded.
pub fn initial_population<R: Rng + ?Sized>(
    config: &EvolutionConfig,
    problem: &Problem,
    rng: &mut R,
) -> Result<Population> {
    let schedules: Vec<Schedule> = (0..config.pop_size)
        .map(|_| random_schedule(problem.heights(), problem.n_procs(), config.allocation, rng))
        .collect();
    let mut members = evaluate_all(schedules, problem)?;
    rank_and_crowd(&mut members);
    Ok(Population {
        members,
        generation: 0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_makespan: f64,
    pub best_rc: f64,
    pub mean_makespan: f64,
    pub mean_rc: f64,
    pub front0_size: usize,
}

impl GenerationStats {
    pub fn of(population: &Population) -> Self {
        let members = &population.members;
        let n = members.len() as f64;
        let ms = members.iter().map(|m| m.objectives.makespan);
        let rc = members.iter().map(|m| m.objectives.reliability_cost);
        GenerationStats {
            generation: population.generation,
            best_makespan: ms.clone().fold(f64::INFINITY, f64::min),
            best_rc: rc.clone().fold(f64::INFINITY, f64::min),
            mean_makespan: ms.sum::<f64>() / n,
            mean_rc: rc.sum::<f64>() / n,
            front0_size: members.iter().filter(|m| m.rank == Some(0)).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontPoint {
    pub schedule: Schedule,
    pub objectives: ObjectiveVector,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    /// First front of the final population, one point per distinct objective vector, sorted by
    /// makespan.
    pub front: Vec<FrontPoint>,
    /// Statistics for generation 0 (the initial population) through the last generation.
    pub stats: Vec<GenerationStats>,
    pub population: Population,
}

/// Distinct rank-0 objective vectors of a ranked population, sorted by makespan then cost.
pub fn first_front(population: &Population) -> Vec<FrontPoint> {
    let mut front: Vec<FrontPoint> = Vec::new();
    for m in population.members.iter().filter(|m| m.rank == Some(0)) {
        if !front.iter().any(|p| p.objectives == m.objectives) {
            front.push(FrontPoint {
                schedule: m.schedule.clone(),
                objectives: m.objectives,
            });
        }
    }
    front.sort_by(|a, b| {
        a.objectives
            .makespan
            .total_cmp(&b.objectives.makespan)
            .then(a.objectives.reliability_cost.total_cmp(&b.objectives.reliability_cost))
    });
    front
}

pub fn run(problem: &Problem, config: &EvolutionConfig) -> Result<RunResult> {
    run_with(problem, config, |_| {})
}

/// Like [`run`], calling `observe` with the population after initialisation and after every
/// generation.
pub fn run_with<F: FnMut(&Population)>(
    problem: &Problem,
    config: &EvolutionConfig,
    mut observe: F,
) -> Result<RunResult> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut population = initial_population(config, problem, &mut rng)?;
    observe(&population);
    let mut stats = vec![GenerationStats::of(&population)];
    for _ in 0..config.generations {
        population = evolve_generation(&population, config, problem, &mut rng)?;
        observe(&population);
        stats.push(GenerationStats::of(&population));
    }
    Ok(RunResult {
        front: first_front(&population),
        stats,
        population,
    })
}
