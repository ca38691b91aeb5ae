//! Chromosome encoding and the two objective evaluators.
//!
//! A [`Schedule`] holds one ordered task list per processor. A schedule is legal when every
//! task appears exactly once and each list is non-decreasing in task height; ancestors always
//! have a smaller height than their descendants, so a legal schedule can always be executed in
//! list order without deadlock.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::instance::{validate, Instance, TaskGraph};

/// Height of every task: 0 for sources, otherwise one more than the highest predecessor.
pub fn compute_heights(graph: &TaskGraph) -> Result<Vec<usize>> {
    let order = graph.topological_order()?;
    let mut height = vec![0usize; graph.n_tasks];
    for &i in &order {
        height[i] = graph.predecessors[i]
            .iter()
            .map(|&p| height[p] + 1)
            .max()
            .unwrap_or(0);
    }
    Ok(height)
}

/// Task heights together with the tasks grouped by height.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeightMap {
    heights: Vec<usize>,
    groups: Vec<Vec<usize>>,
}

impl HeightMap {
    pub fn new(graph: &TaskGraph) -> Result<Self> {
        Ok(Self::from_heights(compute_heights(graph)?))
    }

    pub fn from_heights(heights: Vec<usize>) -> Self {
        let levels = heights.iter().max().map_or(0, |h| h + 1);
        let mut groups = vec![Vec::new(); levels];
        for (task, &h) in heights.iter().enumerate() {
            groups[h].push(task);
        }
        HeightMap { heights, groups }
    }

    pub fn n_tasks(&self) -> usize {
        self.heights.len()
    }

    pub fn height(&self, task: usize) -> usize {
        self.heights[task]
    }

    pub fn heights(&self) -> &[usize] {
        &self.heights
    }

    pub fn max_height(&self) -> usize {
        self.groups.len().saturating_sub(1)
    }

    /// Tasks of height `h`, ascending by index.
    pub fn group(&self, h: usize) -> &[usize] {
        &self.groups[h]
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }
}

/// A validated instance bundled with its height map.
#[derive(Debug, Clone)]
pub struct Problem {
    instance: Instance,
    heights: HeightMap,
}

impl Problem {
    pub fn new(instance: Instance) -> Result<Self> {
        let violations = validate(&instance);
        if !violations.is_empty() {
            return Err(Error::Validation(violations));
        }
        let heights = HeightMap::new(&instance.graph)?;
        Ok(Problem { instance, heights })
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn heights(&self) -> &HeightMap {
        &self.heights
    }

    pub fn n_tasks(&self) -> usize {
        self.instance.graph.n_tasks
    }

    pub fn n_procs(&self) -> usize {
        self.instance.platform.n_procs
    }
}

/// Per-processor ordered task lists.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Schedule {
    pub proc_lists: Vec<Vec<usize>>,
}

impl Schedule {
    pub fn new(proc_lists: Vec<Vec<usize>>) -> Self {
        Schedule { proc_lists }
    }

    pub fn n_procs(&self) -> usize {
        self.proc_lists.len()
    }

    pub fn n_tasks(&self) -> usize {
        self.proc_lists.iter().map(Vec::len).sum()
    }

    /// Processor of every task. Only meaningful for schedules with the partition property.
    pub fn assignment(&self, n_tasks: usize) -> Vec<usize> {
        let mut proc_of = vec![usize::MAX; n_tasks];
        for (j, list) in self.proc_lists.iter().enumerate() {
            for &t in list {
                proc_of[t] = j;
            }
        }
        proc_of
    }

    /// Single-line form with processors separated by `|`, e.g. `0,2|1,3`.
    pub fn to_compact(&self) -> String {
        self.proc_lists
            .iter()
            .map(|l| join(l))
            .collect::<Vec<_>>()
            .join("|")
    }

    pub fn from_compact(s: &str) -> Result<Self> {
        parse_lists(s.split('|'))
    }
}

fn join(list: &[usize]) -> String {
    list.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn parse_lists<'a>(lines: impl Iterator<Item = &'a str>) -> Result<Schedule> {
    let mut proc_lists = Vec::new();
    for (j, line) in lines.enumerate() {
        let line = line.trim();
        let list = if line.is_empty() {
            Vec::new()
        } else {
            line.split(',')
                .map(|tok| {
                    tok.trim().parse::<usize>().map_err(|e| Error::Parse {
                        field: format!("processor {j}"),
                        message: format!("`{}`: {e}", tok.trim()),
                    })
                })
                .collect::<Result<Vec<_>>>()?
        };
        proc_lists.push(list);
    }
    Ok(Schedule { proc_lists })
}

/// Text form: one line per processor, comma-separated task indices, empty line for an idle
/// processor.
impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for list in &self.proc_lists {
            writeln!(f, "{}", join(list))?;
        }
        Ok(())
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let body = s.strip_suffix('\n').unwrap_or(s);
        let body = body.strip_suffix('\r').unwrap_or(body);
        parse_lists(body.split('\n'))
    }
}

/// Why a schedule is illegal; empty when it is legal.
pub fn legality_violations(schedule: &Schedule, heights: &HeightMap) -> Vec<String> {
    let n = heights.n_tasks();
    let mut seen = vec![0usize; n];
    let mut v = Vec::new();
    for (j, list) in schedule.proc_lists.iter().enumerate() {
        for &t in list {
            if t >= n {
                v.push(format!("processor {j} lists task {t}, out of range"));
            } else {
                seen[t] += 1;
            }
        }
        for w in list.windows(2) {
            if w[0] < n && w[1] < n && heights.height(w[0]) > heights.height(w[1]) {
                v.push(format!(
                    "processor {j} runs task {} (height {}) before task {} (height {})",
                    w[0],
                    heights.height(w[0]),
                    w[1],
                    heights.height(w[1])
                ));
            }
        }
    }
    for (t, &count) in seen.iter().enumerate() {
        match count {
            1 => {}
            0 => v.push(format!("task {t} is not scheduled")),
            c => v.push(format!("task {t} is scheduled {c} times")),
        }
    }
    v
}

pub fn is_legal(schedule: &Schedule, heights: &HeightMap) -> bool {
    legality_violations(schedule, heights).is_empty()
}

fn check_for(schedule: &Schedule, problem: &Problem) -> Result<()> {
    if schedule.n_procs() != problem.n_procs() {
        return Err(Error::Contract(format!(
            "schedule has {} processor lists, instance has {} processors",
            schedule.n_procs(),
            problem.n_procs()
        )));
    }
    let violations = legality_violations(schedule, problem.heights());
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::Contract(format!("illegal schedule: {}", violations.join("; "))))
    }
}

/// How the permuted tasks of one height group are handed to processors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Allocation {
    /// Each task goes to a processor drawn uniformly at random, so every assignment can occur.
    #[default]
    Uniform,
    /// Task `k` of the permuted group goes to processor `start + k`, and `start` carries on past
    /// the last processor used. Every processor gets the same share of each group, give or
    /// take one, and crossover and mutation never change those shares.
    RoundRobin,
}

/// Random legal schedule: group tasks by height, shuffle each group, then deal the groups out
/// to processors in ascending height order.
///
/// Random draws, in order: for [`Allocation::RoundRobin`] the starting processor; then per
/// height group the shuffle, followed for [`Allocation::Uniform`] by one processor draw per task.
pub fn random_schedule<R: Rng + ?Sized>(
    heights: &HeightMap,
    n_procs: usize,
    allocation: Allocation,
    rng: &mut R,
) -> Schedule {
    assert!(n_procs > 0, "at least one processor is required");
    let mut lists = vec![Vec::new(); n_procs];
    let mut start = match allocation {
        Allocation::RoundRobin => rng.random_range(0..n_procs),
        Allocation::Uniform => 0,
    };
    for group in heights.groups() {
        let mut perm = group.clone();
        perm.shuffle(rng);
        match allocation {
            Allocation::Uniform => {
                for &t in &perm {
                    lists[rng.random_range(0..n_procs)].push(t);
                }
            }
            Allocation::RoundRobin => {
                for (k, &t) in perm.iter().enumerate() {
                    lists[(start + k) % n_procs].push(t);
                }
                start = (start + perm.len()) % n_procs;
            }
        }
    }
    Schedule { proc_lists: lists }
}

/// Start, finish and earliest-start times of every task.
#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub start: Vec<f64>,
    pub finish: Vec<f64>,
    pub earliest: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveVector {
    pub makespan: f64,
    pub reliability_cost: f64,
}

impl ObjectiveVector {
    pub fn new(makespan: f64, reliability_cost: f64) -> Self {
        ObjectiveVector {
            makespan,
            reliability_cost,
        }
    }

    pub fn get(&self, objective: usize) -> f64 {
        match objective {
            0 => self.makespan,
            1 => self.reliability_cost,
            _ => panic!("objective index {objective} out of range"),
        }
    }

    pub const COUNT: usize = 2;
}

/// List-scheduling simulation: each task starts once its inputs have arrived and the previous
/// task on its processor has finished. Communication between processors `k` and `j` costs
/// `data_volume * link_delay[k][j]`, which is zero when `k == j`.
pub fn evaluate_makespan(schedule: &Schedule, problem: &Problem) -> Result<(f64, Timing)> {
    check_for(schedule, problem)?;
    let inst = problem.instance();
    let n = problem.n_tasks();
    let proc_of = schedule.assignment(n);
    let exec = &inst.platform.exec_time;
    let delay = &inst.platform.link_delay;
    let volume = &inst.graph.data_volume;

    let mut timing = Timing {
        start: vec![0.0; n],
        finish: vec![0.0; n],
        earliest: vec![0.0; n],
    };
    let mut cursor = vec![0usize; schedule.n_procs()];
    let mut free_at = vec![0.0_f64; schedule.n_procs()];

    // Legal lists are non-decreasing in height, so sweeping heights in order visits every task
    // after its predecessors (strictly lower height) and after its list predecessor.
    for h in 0..=problem.heights().max_height() {
        for (j, list) in schedule.proc_lists.iter().enumerate() {
            while cursor[j] < list.len() && problem.heights().height(list[cursor[j]]) == h {
                let i = list[cursor[j]];
                let ready = inst.graph.predecessors[i]
                    .iter()
                    .map(|&p| timing.finish[p] + volume[p][i] * delay[proc_of[p]][j])
                    .fold(0.0, f64::max);
                timing.earliest[i] = ready;
                timing.start[i] = ready.max(free_at[j]);
                timing.finish[i] = timing.start[i] + exec[i][j];
                free_at[j] = timing.finish[i];
                cursor[j] += 1;
            }
        }
    }
    if cursor.iter().zip(&schedule.proc_lists).any(|(&c, l)| c != l.len()) {
        return Err(Error::Structural("list simulation stalled".to_string()));
    }
    let makespan = timing.finish.iter().copied().fold(0.0, f64::max);
    Ok((makespan, timing))
}

/// Sum over tasks of `f_j * exec_time(i, j)` for the task's processor `j`, plus, for every
/// incoming edge from a task on processor `k`, `g_kj * data_volume * link_delay_kj`.
pub fn evaluate_reliability_cost(schedule: &Schedule, problem: &Problem) -> Result<f64> {
    check_for(schedule, problem)?;
    let inst = problem.instance();
    let plat = &inst.platform;
    let proc_of = schedule.assignment(problem.n_tasks());
    let mut rc = 0.0;
    for (j, list) in schedule.proc_lists.iter().enumerate() {
        for &i in list {
            let mut task_cost = plat.proc_failure[j] * plat.exec_time[i][j];
            for &p in &inst.graph.predecessors[i] {
                let k = proc_of[p];
                task_cost += plat.link_failure[k][j] * inst.graph.data_volume[p][i] * plat.link_delay[k][j];
            }
            rc += task_cost;
        }
    }
    Ok(rc)
}

pub fn evaluate(schedule: &Schedule, problem: &Problem) -> Result<ObjectiveVector> {
    let (makespan, _) = evaluate_makespan(schedule, problem)?;
    let rc = evaluate_reliability_cost(schedule, problem)?;
    Ok(ObjectiveVector::new(makespan, rc))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeadlineReport {
    pub missed: Vec<bool>,
    pub count: usize,
}

/// Tasks whose finish time exceeds their deadline. Finish times are never truncated.
pub fn deadline_misses(timing: &Timing, deadlines: &[f64]) -> DeadlineReport {
    let missed: Vec<bool> = timing
        .finish
        .iter()
        .zip(deadlines)
        .map(|(&f, &d)| f > d)
        .collect();
    let count = missed.iter().filter(|&&m| m).count();
    DeadlineReport { missed, count }
}
