//! Exhaustive ground truth for small instances.
//!
//! Nothing here calls into the evaluators or the sorting code of the engine: heights, schedule
//! simulation, reliability cost and dominance are all re-derived so that agreement between the
//! two sides means something.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::schedule::{ObjectiveVector, Schedule};

pub const MAX_TASKS: usize = 8;
pub const MAX_PROCS: usize = 3;

/// Relative tolerance for calling two objective values equal.
pub const MATCH_TOLERANCE: f64 = 1e-9;

fn guard(instance: &Instance) -> Result<()> {
    let (n, m) = (instance.graph.n_tasks, instance.platform.n_procs);
    if n > MAX_TASKS {
        return Err(Error::Size {
            what: "n_tasks",
            value: n,
            limit: MAX_TASKS,
        });
    }
    if m > MAX_PROCS {
        return Err(Error::Size {
            what: "n_procs",
            value: m,
            limit: MAX_PROCS,
        });
    }
    Ok(())
}

/// Longest incoming path length by repeated relaxation.
fn longest_path_heights(instance: &Instance) -> Result<Vec<usize>> {
    let n = instance.graph.n_tasks;
    let mut h = vec![0usize; n];
    for _ in 0..=n {
        let mut changed = false;
        for (i, preds) in instance.graph.predecessors.iter().enumerate() {
            for &p in preds {
                if h[p] + 1 > h[i] {
                    h[i] = h[p] + 1;
                    changed = true;
                }
            }
        }
        if !changed {
            return Ok(h);
        }
    }
    Err(Error::Structural("task graph contains a cycle".to_string()))
}

fn next_permutation(xs: &mut [usize]) -> bool {
    if xs.len() < 2 {
        return false;
    }
    let mut i = xs.len() - 1;
    while i > 0 && xs[i - 1] >= xs[i] {
        i -= 1;
    }
    if i == 0 {
        xs.reverse();
        return false;
    }
    let mut j = xs.len() - 1;
    while xs[j] <= xs[i - 1] {
        j -= 1;
    }
    xs.swap(i - 1, j);
    xs[i..].reverse();
    true
}

/// Every legal schedule: each processor assignment crossed with every per-processor order that
/// keeps heights non-decreasing (all orders of each equal-height block).
pub struct LegalSchedules {
    n_procs: usize,
    heights: Vec<usize>,
    assignment: Vec<usize>,
    /// (processor, tasks of one height on that processor), processors ascending, heights ascending.
    blocks: Vec<(usize, Vec<usize>)>,
    done: bool,
}

impl LegalSchedules {
    fn new(instance: &Instance) -> Result<Self> {
        guard(instance)?;
        let heights = longest_path_heights(instance)?;
        let mut it = LegalSchedules {
            n_procs: instance.platform.n_procs,
            heights,
            assignment: vec![0; instance.graph.n_tasks],
            blocks: Vec::new(),
            done: false,
        };
        it.rebuild_blocks();
        Ok(it)
    }

    fn rebuild_blocks(&mut self) {
        self.blocks.clear();
        let top = self.heights.iter().copied().max().unwrap_or(0);
        for j in 0..self.n_procs {
            for h in 0..=top {
                let block: Vec<usize> = (0..self.heights.len())
                    .filter(|&t| self.assignment[t] == j && self.heights[t] == h)
                    .collect();
                if !block.is_empty() {
                    self.blocks.push((j, block));
                }
            }
        }
    }

    fn current(&self) -> Schedule {
        let mut lists = vec![Vec::new(); self.n_procs];
        for (j, block) in &self.blocks {
            lists[*j].extend_from_slice(block);
        }
        Schedule::new(lists)
    }

    fn advance(&mut self) {
        for (_, block) in self.blocks.iter_mut().rev() {
            if next_permutation(block) {
                return;
            }
        }
        for digit in self.assignment.iter_mut() {
            *digit += 1;
            if *digit < self.n_procs {
                self.rebuild_blocks();
                return;
            }
            *digit = 0;
        }
        self.done = true;
    }
}

impl Iterator for LegalSchedules {
    type Item = Schedule;

    fn next(&mut self) -> Option<Schedule> {
        if self.done {
            return None;
        }
        let s = self.current();
        self.advance();
        Some(s)
    }
}

pub fn enumerate_legal_schedules(instance: &Instance) -> Result<LegalSchedules> {
    LegalSchedules::new(instance)
}

/// Number of legal schedules: sum over assignments of the product of equal-height block
/// factorials.
pub fn count_legal_schedules(instance: &Instance) -> Result<u64> {
    guard(instance)?;
    let heights = longest_path_heights(instance)?;
    let (n, m) = (heights.len(), instance.platform.n_procs);
    let top = heights.iter().copied().max().unwrap_or(0);
    let factorial = |k: usize| (1..=k as u64).product::<u64>();
    let mut total = 0u64;
    for code in 0..(m as u64).pow(n as u32) {
        let mut counts = vec![vec![0usize; top + 1]; m];
        let mut c = code;
        for &h in &heights {
            counts[(c % m as u64) as usize][h] += 1;
            c /= m as u64;
        }
        total += counts.iter().flatten().map(|&k| factorial(k)).product::<u64>();
    }
    Ok(total)
}

#[derive(Clone, Copy, PartialEq)]
struct Time(f64);

impl Eq for Time {}

impl PartialOrd for Time {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Time {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Finish { task: usize, proc: usize },
    Arrive { task: usize },
}

/// Simulated execution of a schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub start: Vec<f64>,
    pub finish: Vec<f64>,
    pub makespan: f64,
}

/// Discrete-event simulation: finishing tasks send their outputs, which arrive after the link
/// delay; an idle processor starts its next listed task once all its inputs have arrived.
pub fn simulate(instance: &Instance, schedule: &Schedule) -> Result<SimulationTrace> {
    let n = instance.graph.n_tasks;
    let m = instance.platform.n_procs;
    if schedule.proc_lists.len() != m {
        return Err(Error::Contract("schedule does not match processor count".to_string()));
    }
    let mut host = vec![usize::MAX; n];
    for (j, list) in schedule.proc_lists.iter().enumerate() {
        for &t in list {
            if t >= n || host[t] != usize::MAX {
                return Err(Error::Contract(format!("task {t} is out of range or duplicated")));
            }
            host[t] = j;
        }
    }
    if host.contains(&usize::MAX) {
        return Err(Error::Contract("schedule omits a task".to_string()));
    }

    let mut consumers: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, preds) in instance.graph.predecessors.iter().enumerate() {
        for &p in preds {
            consumers[p].push(i);
        }
    }
    let mut missing_inputs: Vec<usize> = instance.graph.predecessors.iter().map(Vec::len).collect();
    let mut next_slot = vec![0usize; m];
    let mut idle = vec![true; m];
    let mut start = vec![f64::NAN; n];
    let mut finish = vec![f64::NAN; n];
    let mut queue: BinaryHeap<Reverse<(Time, Event)>> = BinaryHeap::new();
    let mut now = 0.0;
    let mut completed = 0;

    loop {
        for j in 0..m {
            if !idle[j] {
                continue;
            }
            if let Some(&task) = schedule.proc_lists[j].get(next_slot[j]) {
                if missing_inputs[task] == 0 {
                    idle[j] = false;
                    next_slot[j] += 1;
                    start[task] = now;
                    let end = now + instance.platform.exec_time[task][j];
                    queue.push(Reverse((Time(end), Event::Finish { task, proc: j })));
                }
            }
        }
        let Some(Reverse((Time(t), event))) = queue.pop() else {
            break;
        };
        now = t;
        match event {
            Event::Finish { task, proc } => {
                finish[task] = t;
                idle[proc] = true;
                completed += 1;
                for &c in &consumers[task] {
                    let delay = instance.platform.link_delay[proc][host[c]];
                    let arrival = t + instance.graph.data_volume[task][c] * delay;
                    queue.push(Reverse((Time(arrival), Event::Arrive { task: c })));
                }
            }
            Event::Arrive { task } => missing_inputs[task] -= 1,
        }
    }

    if completed != n {
        return Err(Error::Structural(format!(
            "simulation deadlocked with {} of {n} tasks finished",
            completed
        )));
    }
    let makespan = finish.iter().copied().fold(0.0, f64::max);
    Ok(SimulationTrace {
        start,
        finish,
        makespan,
    })
}

/// Reliability cost as the full double sum over processors and processor pairs with 0/1
/// assignment indicators.
pub fn reliability_cost(instance: &Instance, schedule: &Schedule) -> f64 {
    let n = instance.graph.n_tasks;
    let m = instance.platform.n_procs;
    let plat = &instance.platform;
    let mut x = vec![vec![0.0; m]; n];
    for (j, list) in schedule.proc_lists.iter().enumerate() {
        for &t in list {
            x[t][j] = 1.0;
        }
    }
    let mut compute = 0.0;
    for j in 0..m {
        for i in 0..n {
            compute += plat.proc_failure[j] * x[i][j] * plat.exec_time[i][j];
        }
    }
    let mut transfer = 0.0;
    for k in 0..m {
        for b in 0..m {
            for i in 0..n {
                for j in 0..n {
                    transfer += plat.link_failure[k][b]
                        * x[i][k]
                        * x[j][b]
                        * instance.graph.data_volume[i][j]
                        * plat.link_delay[k][b];
                }
            }
        }
    }
    compute + transfer
}

pub fn objectives(instance: &Instance, schedule: &Schedule) -> Result<ObjectiveVector> {
    let trace = simulate(instance, schedule)?;
    Ok(ObjectiveVector::new(trace.makespan, reliability_cost(instance, schedule)))
}

/// `a` is no worse than `b` in both objectives.
fn weakly_better(a: &ObjectiveVector, b: &ObjectiveVector) -> bool {
    a.makespan <= b.makespan && a.reliability_cost <= b.reliability_cost
}

fn strictly_dominates(a: &ObjectiveVector, b: &ObjectiveVector) -> bool {
    weakly_better(a, b) && (a.makespan < b.makespan || a.reliability_cost < b.reliability_cost)
}

/// The exact Pareto front of a small instance with one witness schedule per point.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactFront {
    pub points: Vec<ObjectiveVector>,
    pub witnesses: Vec<Schedule>,
}

pub fn exact_pareto_front(instance: &Instance) -> Result<ExactFront> {
    let mut archive: Vec<(ObjectiveVector, Schedule)> = Vec::new();
    for schedule in enumerate_legal_schedules(instance)? {
        let v = objectives(instance, &schedule)?;
        if archive.iter().any(|(a, _)| weakly_better(a, &v)) {
            continue;
        }
        archive.retain(|(a, _)| !strictly_dominates(&v, a));
        archive.push((v, schedule));
    }
    archive.sort_by(|a, b| a.0.makespan.total_cmp(&b.0.makespan));
    let (points, witnesses) = archive.into_iter().unzip();
    Ok(ExactFront { points, witnesses })
}

pub fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= MATCH_TOLERANCE * a.abs().max(b.abs()) || a == b
}

fn same_point(a: &ObjectiveVector, b: &ObjectiveVector) -> bool {
    approx_eq(a.makespan, b.makespan) && approx_eq(a.reliability_cost, b.reliability_cost)
}

/// True when some exact point is no worse than `point` in both objectives, up to the match
/// tolerance.
pub fn weakly_dominated_by_front(point: &ObjectiveVector, exact: &ExactFront) -> bool {
    let le = |a: f64, b: f64| a <= b || approx_eq(a, b);
    exact
        .points
        .iter()
        .any(|e| le(e.makespan, point.makespan) && le(e.reliability_cost, point.reliability_cost))
}

/// One line of the comparison report, per exact point.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceRow {
    pub exact: ObjectiveVector,
    pub matched: bool,
    pub nearest_found: Option<ObjectiveVector>,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontDistance {
    /// Fraction of exact points reproduced by some found point.
    pub coverage: f64,
    /// Largest normalised distance from a found point to its nearest exact point.
    pub deviation: f64,
    pub rows: Vec<DistanceRow>,
}

/// Compares a found front against the exact one. Distances are Euclidean after scaling each
/// objective by the exact front's range (or by its magnitude when the range is zero).
pub fn front_distance(found: &[ObjectiveVector], exact: &ExactFront) -> Result<FrontDistance> {
    if exact.points.is_empty() {
        return Err(Error::Contract("exact front is empty".to_string()));
    }
    let scale = |get: fn(&ObjectiveVector) -> f64| {
        let lo = exact.points.iter().map(get).fold(f64::INFINITY, f64::min);
        let hi = exact.points.iter().map(get).fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            hi - lo
        } else if hi.abs() > 0.0 {
            hi.abs()
        } else {
            1.0
        }
    };
    let sm = scale(|v| v.makespan);
    let sr = scale(|v| v.reliability_cost);
    let dist = |a: &ObjectiveVector, b: &ObjectiveVector| {
        if same_point(a, b) {
            return 0.0;
        }
        ((a.makespan - b.makespan) / sm).hypot((a.reliability_cost - b.reliability_cost) / sr)
    };
    let nearest = |p: &ObjectiveVector, pool: &[ObjectiveVector]| {
        pool.iter()
            .map(|q| (dist(p, q), *q))
            .min_by(|x, y| x.0.total_cmp(&y.0))
    };

    let rows: Vec<DistanceRow> = exact
        .points
        .iter()
        .map(|e| {
            let near = nearest(e, found);
            DistanceRow {
                exact: *e,
                matched: found.iter().any(|f| same_point(f, e)),
                nearest_found: near.map(|(_, q)| q),
                deviation: near.map_or(f64::INFINITY, |(d, _)| d),
            }
        })
        .collect();
    let matched = rows.iter().filter(|r| r.matched).count();
    let deviation = found
        .iter()
        .map(|f| nearest(f, &exact.points).map_or(0.0, |(d, _)| d))
        .fold(0.0, f64::max);
    Ok(FrontDistance {
        coverage: matched as f64 / exact.points.len() as f64,
        deviation,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Platform, TaskGraph};

    fn instance(graph: TaskGraph, exec: Vec<Vec<f64>>, proc_failure: Vec<f64>) -> Instance {
        let m = exec[0].len();
        let off: Vec<Vec<f64>> = (0..m)
            .map(|k| (0..m).map(|b| if k == b { 0.0 } else { 1e-5 }).collect())
            .collect();
        Instance {
            graph,
            platform: Platform {
                n_procs: m,
                exec_time: exec,
                proc_failure,
                link_failure: off.clone(),
                link_delay: off.iter().map(|r| r.iter().map(|x| x * 50_000.0).collect()).collect(),
            },
            deadlines: None,
        }
    }

    #[test]
    fn enumeration_counts() {
        let one = instance(TaskGraph::from_edges(1, &[]), vec![vec![1.0, 2.0]], vec![1e-5; 2]);
        assert_eq!(enumerate_legal_schedules(&one).unwrap().count(), 2);

        let pair = instance(TaskGraph::from_edges(2, &[]), vec![vec![1.0]; 2], vec![1e-5]);
        let all: Vec<Schedule> = enumerate_legal_schedules(&pair).unwrap().collect();
        assert_eq!(all, vec![Schedule::new(vec![vec![0, 1]]), Schedule::new(vec![vec![1, 0]])]);

        let chain = instance(TaskGraph::from_edges(2, &[(0, 1, 1.0)]), vec![vec![1.0, 1.0]; 2], vec![1e-5; 2]);
        assert_eq!(enumerate_legal_schedules(&chain).unwrap().count(), 4);
        assert_eq!(count_legal_schedules(&chain).unwrap(), 4);
    }

    #[test]
    fn enumeration_matches_analytic_count() {
        let g = TaskGraph::from_edges(5, &[(0, 2, 1.0), (1, 2, 1.0), (2, 4, 1.0)]);
        let inst = instance(g, vec![vec![1.0, 1.0, 1.0]; 5], vec![1e-5; 3]);
        let enumerated = enumerate_legal_schedules(&inst).unwrap().count() as u64;
        assert_eq!(enumerated, count_legal_schedules(&inst).unwrap());
    }

    #[test]
    fn size_guard() {
        let big = instance(TaskGraph::from_edges(9, &[]), vec![vec![1.0]; 9], vec![1e-5]);
        assert!(matches!(
            enumerate_legal_schedules(&big),
            Err(Error::Size { what: "n_tasks", .. })
        ));
        let wide = instance(TaskGraph::from_edges(1, &[]), vec![vec![1.0; 4]], vec![1e-5; 4]);
        assert!(matches!(exact_pareto_front(&wide), Err(Error::Size { what: "n_procs", .. })));
    }

    #[test]
    fn simulation_of_split_chain() {
        let inst = Instance {
            graph: TaskGraph::from_edges(2, &[(0, 1, 2.0)]),
            platform: Platform {
                n_procs: 2,
                exec_time: vec![vec![3.0, 3.0], vec![4.0, 4.0]],
                proc_failure: vec![1e-5; 2],
                link_failure: vec![vec![0.0, 1e-5], vec![1e-5, 0.0]],
                link_delay: vec![vec![0.0, 0.5], vec![0.5, 0.0]],
            },
            deadlines: None,
        };
        let s = Schedule::new(vec![vec![0], vec![1]]);
        let trace = simulate(&inst, &s).unwrap();
        assert_eq!(trace.start, vec![0.0, 4.0]);
        assert_eq!(trace.makespan, 8.0);
        assert!((reliability_cost(&inst, &s) - 8e-5).abs() < 1e-18);
    }

    #[test]
    fn simulation_detects_deadlock() {
        let inst = instance(TaskGraph::from_edges(2, &[(0, 1, 1.0)]), vec![vec![1.0]; 2], vec![1e-5]);
        let backwards = Schedule::new(vec![vec![1, 0]]);
        assert!(matches!(simulate(&inst, &backwards), Err(Error::Structural(_))));
    }

    #[test]
    fn single_task_fronts() {
        // Faster and more reliable on processor 0.
        let dominant = instance(TaskGraph::from_edges(1, &[]), vec![vec![2.0, 3.0]], vec![1e-5, 1e-5]);
        let f = exact_pareto_front(&dominant).unwrap();
        assert_eq!(f.points, vec![ObjectiveVector::new(2.0, 2e-5)]);
        assert_eq!(f.witnesses, vec![Schedule::new(vec![vec![0], vec![]])]);

        // Faster on 0 but more reliable on 1.
        let tradeoff = instance(TaskGraph::from_edges(1, &[]), vec![vec![2.0, 3.0]], vec![2e-5, 1e-5]);
        assert_eq!(exact_pareto_front(&tradeoff).unwrap().points.len(), 2);
    }

    #[test]
    fn distance_examples() {
        let exact = ExactFront {
            points: vec![ObjectiveVector::new(1.0, 3.0), ObjectiveVector::new(2.0, 2.0), ObjectiveVector::new(3.0, 1.0)],
            witnesses: vec![Schedule::new(vec![]); 3],
        };
        let all = front_distance(&exact.points, &exact).unwrap();
        assert_eq!((all.coverage, all.deviation), (1.0, 0.0));

        let part = front_distance(&exact.points[..2], &exact).unwrap();
        assert!(part.coverage < 1.0);
        assert_eq!(part.deviation, 0.0);
        assert_eq!(part.rows.iter().filter(|r| r.matched).count(), 2);

        let mut with_bad = exact.points.clone();
        with_bad.push(ObjectiveVector::new(3.0, 3.0));
        assert!(front_distance(&with_bad, &exact).unwrap().deviation > 0.0);
        assert!(!weakly_dominated_by_front(&ObjectiveVector::new(0.5, 5.0), &exact));
        assert!(weakly_dominated_by_front(&ObjectiveVector::new(3.0, 3.0), &exact));
    }
}
