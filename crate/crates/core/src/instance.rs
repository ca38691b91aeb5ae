//! Problem data: the task graph, the processor platform and random instance generation.
//!
//! Instances are generated with the P-method: the strict upper triangle of an adjacency matrix
//! is filled by independent Bernoulli trials, which yields a DAG whose topological order is the
//! task index order. Execution times come from an exponential or normal distribution, data
//! volumes are integers in `1..=10`, failure rates are uniform on `[7.5e-6, 1.25e-5]`.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// Version written to and required from instance files.
pub const FORMAT_VERSION: i64 = 1;

/// Floor applied to execution-time and slack draws so every value stays strictly positive.
pub const MIN_DRAW: f64 = 0.001;

pub const FAILURE_RATE_MIN: f64 = 0.000_007_5;
pub const FAILURE_RATE_MAX: f64 = 0.000_012_5;

pub const DATA_VOLUME_MIN: u32 = 1;
pub const DATA_VOLUME_MAX: u32 = 10;

/// Dense row-major matrix stored as nested rows, which keeps the file format readable.
pub type Matrix = Vec<Vec<f64>>;

/// Directed acyclic task graph with per-edge data volumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskGraph {
    pub n_tasks: usize,
    /// Immediate predecessors of each task, ascending.
    pub predecessors: Vec<Vec<usize>>,
    /// `data_volume[k][l]` is the amount of data task `k` sends to task `l`; zero off the edges.
    pub data_volume: Matrix,
}

impl TaskGraph {
    /// Builds a graph from an adjacency matrix and the matching data-volume matrix.
    pub fn from_adjacency(adjacency: &Adjacency, data_volume: Matrix) -> Self {
        let n = adjacency.n();
        let mut predecessors = vec![Vec::new(); n];
        for (k, l) in adjacency.edges() {
            predecessors[l].push(k);
        }
        TaskGraph {
            n_tasks: n,
            predecessors,
            data_volume,
        }
    }

    /// Builds a graph from an explicit edge list `(from, to, volume)`.
    pub fn from_edges(n_tasks: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut predecessors = vec![Vec::new(); n_tasks];
        let mut data_volume = vec![vec![0.0; n_tasks]; n_tasks];
        for &(k, l, v) in edges {
            predecessors[l].push(k);
            data_volume[k][l] = v;
        }
        for p in &mut predecessors {
            p.sort_unstable();
            p.dedup();
        }
        TaskGraph {
            n_tasks,
            predecessors,
            data_volume,
        }
    }

    pub fn edge_count(&self) -> usize {
        self.predecessors.iter().map(Vec::len).sum()
    }

    pub fn successors(&self) -> Vec<Vec<usize>> {
        let mut succ = vec![Vec::new(); self.n_tasks];
        for (l, preds) in self.predecessors.iter().enumerate() {
            for &k in preds {
                succ[k].push(l);
            }
        }
        succ
    }

    /// Kahn's algorithm. Fails with a structural error when the graph has a cycle.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let succ = self.successors();
        let mut indegree: Vec<usize> = self.predecessors.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..self.n_tasks).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(self.n_tasks);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &v in &succ[u] {
                indegree[v] -= 1;
                if indegree[v] == 0 {
                    queue.push_back(v);
                }
            }
        }
        if order.len() != self.n_tasks {
            return Err(Error::Structural(format!(
                "task graph contains a cycle ({} of {} tasks are on or behind one)",
                self.n_tasks - order.len(),
                self.n_tasks
            )));
        }
        Ok(order)
    }
}

/// Heterogeneous processors and their interconnect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Platform {
    pub n_procs: usize,
    /// `exec_time[i][j]`: execution time of task `i` on processor `j`.
    pub exec_time: Matrix,
    /// Failure rate of each processor.
    pub proc_failure: Vec<f64>,
    /// `link_failure[k][b]`: failure rate of the link from processor `k` to `b`.
    pub link_failure: Matrix,
    /// `link_delay[k][b]`: time to move one unit of data from processor `k` to `b`.
    pub link_delay: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub graph: TaskGraph,
    pub platform: Platform,
    pub deadlines: Option<Vec<f64>>,
}

impl Instance {
    pub fn n_tasks(&self) -> usize {
        self.graph.n_tasks
    }

    pub fn n_procs(&self) -> usize {
        self.platform.n_procs
    }
}

/// Returns one description per violated model invariant; empty when the instance is well formed.
pub fn validate(instance: &Instance) -> Vec<String> {
    let mut v = Vec::new();
    let g = &instance.graph;
    let p = &instance.platform;
    let n = g.n_tasks;
    let m = p.n_procs;

    if n == 0 {
        v.push("n_tasks must be positive".to_string());
    }
    if m == 0 {
        v.push("n_procs must be positive".to_string());
    }

    let mut graph_shape_ok = true;
    if g.predecessors.len() != n {
        v.push(format!(
            "predecessors has {} entries, expected n_tasks = {n}",
            g.predecessors.len()
        ));
        graph_shape_ok = false;
    }
    if !is_square(&g.data_volume, n) {
        v.push(format!("data_volume must be a {n}x{n} matrix"));
        graph_shape_ok = false;
    }

    if graph_shape_ok {
        for (l, preds) in g.predecessors.iter().enumerate() {
            for (idx, &k) in preds.iter().enumerate() {
                if k >= n {
                    v.push(format!("task {l} lists predecessor {k}, out of range"));
                } else if k == l {
                    v.push(format!("self-edge on task {l}"));
                } else if preds[..idx].contains(&k) {
                    v.push(format!("duplicate edge ({k},{l})"));
                }
            }
        }
        for k in 0..n {
            for l in 0..n {
                let w = g.data_volume[k][l];
                let is_edge = k != l && g.predecessors[l].contains(&k);
                if !w.is_finite() || w < 0.0 {
                    v.push(format!("data_volume({k},{l}) = {w} is not a finite nonnegative value"));
                } else if k == l && w != 0.0 {
                    v.push(format!("self-edge: data_volume({k},{k}) = {w} must be 0"));
                } else if is_edge && w <= 0.0 {
                    v.push(format!("edge ({k},{l}) has nonpositive data volume"));
                } else if !is_edge && k != l && w != 0.0 {
                    v.push(format!("data_volume({k},{l}) = {w} but ({k},{l}) is not an edge"));
                }
            }
        }
        let in_range = g.predecessors.iter().flatten().all(|&k| k < n);
        if in_range {
            if let Err(e) = g.topological_order() {
                v.push(e.to_string());
            }
        }
    }

    if p.exec_time.len() != n || p.exec_time.iter().any(|row| row.len() != m) {
        v.push(format!("exec_time must be a {n}x{m} matrix"));
    } else {
        for (i, row) in p.exec_time.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if !(c.is_finite() && c > 0.0) {
                    v.push(format!("exec_time({i},{j}) = {c} must be finite and positive"));
                }
            }
        }
    }

    if p.proc_failure.len() != m {
        v.push(format!("proc_failure must have {m} entries"));
    } else if let Some(j) = p.proc_failure.iter().position(|f| !nonneg(*f)) {
        v.push(format!("proc_failure({j}) must be finite and nonnegative"));
    }

    for (name, mat) in [("link_failure", &p.link_failure), ("link_delay", &p.link_delay)] {
        if !is_square(mat, m) {
            v.push(format!("{name} must be a {m}x{m} matrix"));
            continue;
        }
        for k in 0..m {
            for b in 0..m {
                let x = mat[k][b];
                if !nonneg(x) {
                    v.push(format!("{name}({k},{b}) = {x} must be finite and nonnegative"));
                } else if k == b && x != 0.0 {
                    v.push(format!("{name}({k},{k}) = {x}: diagonal must be 0"));
                }
            }
        }
    }

    if let Some(d) = &instance.deadlines {
        if d.len() != n {
            v.push(format!("deadlines has {} entries, expected {n}", d.len()));
        } else if let Some(i) = d.iter().position(|x| x.is_nan() || *x <= 0.0) {
            v.push(format!("deadline({i}) must be positive"));
        }
    }

    v
}

fn is_square(mat: &Matrix, n: usize) -> bool {
    mat.len() == n && mat.iter().all(|row| row.len() == n)
}

fn nonneg(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

/// Strictly upper-triangular 0/1 adjacency matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    rows: Vec<Vec<bool>>,
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Adjacency {
            rows: vec![vec![false; n]; n],
        }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, k: usize, l: usize) -> bool {
        self.rows[k][l]
    }

    pub fn set(&mut self, k: usize, l: usize, edge: bool) {
        self.rows[k][l] = edge;
    }

    pub fn edge_count(&self) -> usize {
        self.rows.iter().flatten().filter(|&&e| e).count()
    }

    /// Edges in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows.iter().enumerate().flat_map(|(k, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, &e)| e)
                .map(move |(l, _)| (k, l))
        })
    }
}

/// P-method random DAG: every entry above the diagonal is an edge with probability `epsilon`.
pub fn generate_pmethod<R: Rng + ?Sized>(n: usize, epsilon: f64, rng: &mut R) -> Result<Adjacency> {
    if n == 0 {
        return Err(param("n_tasks", "must be at least 1"));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(param("epsilon", format!("{epsilon} is outside [0, 1]")));
    }
    let mut adj = Adjacency::empty(n);
    for k in 0..n {
        for l in k + 1..n {
            if rng.random_bool(epsilon) {
                adj.set(k, l, true);
            }
        }
    }
    Ok(adj)
}

/// Distribution family for execution times and deadline slack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExecDistribution {
    Exponential,
    /// Normal with the given standard deviation; the mean is supplied per draw.
    Normal { std_dev: f64 },
}

impl ExecDistribution {
    pub const DEFAULT_NORMAL_STD_DEV: f64 = 1.0;

    pub fn normal() -> Self {
        ExecDistribution::Normal {
            std_dev: Self::DEFAULT_NORMAL_STD_DEV,
        }
    }

    fn check(&self) -> Result<()> {
        if let ExecDistribution::Normal { std_dev } = *self {
            if !(std_dev.is_finite() && std_dev >= 0.0) {
                return Err(param("std_dev", format!("{std_dev} must be finite and nonnegative")));
            }
        }
        Ok(())
    }

    /// One draw with the given mean, floored at [`MIN_DRAW`].
    fn draw<R: Rng + ?Sized>(&self, mean: f64, rng: &mut R) -> f64 {
        let x = match *self {
            ExecDistribution::Exponential => Exp::new(1.0 / mean).expect("positive rate").sample(rng),
            ExecDistribution::Normal { std_dev } => {
                Normal::new(mean, std_dev).expect("valid std dev").sample(rng)
            }
        };
        x.max(MIN_DRAW)
    }
}

impl fmt::Display for ExecDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExecDistribution::Exponential => f.write_str("exponential"),
            ExecDistribution::Normal { .. } => f.write_str("normal"),
        }
    }
}

impl FromStr for ExecDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exponential" | "exp" => Ok(ExecDistribution::Exponential),
            "normal" => Ok(ExecDistribution::normal()),
            other => Err(param("dist", format!("unknown distribution `{other}`"))),
        }
    }
}

/// `n x m` execution-time matrix with i.i.d. entries of the given mean.
pub fn generate_exec_times<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    dist: ExecDistribution,
    mean: f64,
    rng: &mut R,
) -> Result<Matrix> {
    if !(mean.is_finite() && mean > 0.0) {
        return Err(param("mean", format!("{mean} must be positive")));
    }
    dist.check()?;
    Ok((0..n)
        .map(|_| (0..m).map(|_| dist.draw(mean, rng)).collect())
        .collect())
}

/// Integer data volumes in `1..=10` on every edge, zero elsewhere.
pub fn generate_data_volumes<R: Rng + ?Sized>(adjacency: &Adjacency, rng: &mut R) -> Matrix {
    let n = adjacency.n();
    let mut w = vec![vec![0.0; n]; n];
    for (k, l) in adjacency.edges() {
        w[k][l] = f64::from(rng.random_range(DATA_VOLUME_MIN..=DATA_VOLUME_MAX));
    }
    w
}

/// Processor failure rates and a link failure-rate matrix with a zero diagonal.
pub fn generate_failure_rates<R: Rng + ?Sized>(m: usize, rng: &mut R) -> (Vec<f64>, Matrix) {
    let proc_failure = (0..m)
        .map(|_| rng.random_range(FAILURE_RATE_MIN..=FAILURE_RATE_MAX))
        .collect();
    let link_failure = off_diagonal(m, FAILURE_RATE_MIN, FAILURE_RATE_MAX, rng);
    (proc_failure, link_failure)
}

/// Per-unit link delays, uniform on `[min, max]` for each ordered processor pair.
pub fn generate_link_delays<R: Rng + ?Sized>(m: usize, min: f64, max: f64, rng: &mut R) -> Result<Matrix> {
    if !(min.is_finite() && max.is_finite() && 0.0 <= min && min <= max) {
        return Err(param("link_delay", format!("range [{min}, {max}] is invalid")));
    }
    Ok(off_diagonal(m, min, max, rng))
}

fn off_diagonal<R: Rng + ?Sized>(m: usize, lo: f64, hi: f64, rng: &mut R) -> Matrix {
    let mut mat = vec![vec![0.0; m]; m];
    for (k, row) in mat.iter_mut().enumerate() {
        for (b, x) in row.iter_mut().enumerate() {
            if k != b {
                *x = rng.random_range(lo..=hi);
            }
        }
    }
    mat
}

/// Assignment-independent lower bound on each task's earliest start: sources start at 0,
/// every other task no earlier than the fastest completion of its slowest predecessor chain.
pub fn earliest_start_bounds(graph: &TaskGraph, exec_time: &Matrix) -> Result<Vec<f64>> {
    let order = graph.topological_order()?;
    let mut bound = vec![0.0_f64; graph.n_tasks];
    for &i in &order {
        bound[i] = graph.predecessors[i]
            .iter()
            .map(|&p| bound[p] + min_of(&exec_time[p]))
            .fold(0.0, f64::max);
    }
    Ok(bound)
}

/// Deadlines `lower-bound start + slowest execution + random slack + worst-case communication`.
///
/// Slack is drawn from `dist` with mean equal to the task's mean execution time. The
/// communication term is the largest incoming data volume times the largest link delay.
pub fn generate_deadlines<R: Rng + ?Sized>(
    graph: &TaskGraph,
    platform: &Platform,
    dist: ExecDistribution,
    rng: &mut R,
) -> Result<Vec<f64>> {
    dist.check()?;
    let start = earliest_start_bounds(graph, &platform.exec_time)?;
    let worst_delay = platform.link_delay.iter().flatten().copied().fold(0.0, f64::max);
    let deadlines = (0..graph.n_tasks)
        .map(|i| {
            let row = &platform.exec_time[i];
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            let slack = dist.draw(mean, rng);
            let comm = graph.predecessors[i]
                .iter()
                .map(|&p| graph.data_volume[p][i] * worst_delay)
                .fold(0.0, f64::max);
            start[i] + max_of(row) + slack + comm
        })
        .collect();
    Ok(deadlines)
}

fn min_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::INFINITY, f64::min)
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Parameters for [`generate_instance`].
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub n_tasks: usize,
    pub n_procs: usize,
    pub epsilon: f64,
    pub dist: ExecDistribution,
    pub mean_exec_time: f64,
    pub link_delay_min: f64,
    pub link_delay_max: f64,
    pub with_deadlines: bool,
}

impl GeneratorConfig {
    pub fn new(n_tasks: usize, n_procs: usize, epsilon: f64, dist: ExecDistribution) -> Self {
        GeneratorConfig {
            n_tasks,
            n_procs,
            epsilon,
            dist,
            mean_exec_time: 5.0,
            link_delay_min: 0.1,
            link_delay_max: 1.0,
            with_deadlines: true,
        }
    }
}

/// Runs every generator in a fixed order on one stream: adjacency, execution times, data
/// volumes, failure rates, link delays, deadlines.
pub fn generate_instance<R: Rng + ?Sized>(cfg: &GeneratorConfig, rng: &mut R) -> Result<Instance> {
    if cfg.n_procs == 0 {
        return Err(param("n_procs", "must be at least 1"));
    }
    let adjacency = generate_pmethod(cfg.n_tasks, cfg.epsilon, rng)?;
    let exec_time = generate_exec_times(cfg.n_tasks, cfg.n_procs, cfg.dist, cfg.mean_exec_time, rng)?;
    let volumes = generate_data_volumes(&adjacency, rng);
    let (proc_failure, link_failure) = generate_failure_rates(cfg.n_procs, rng);
    let link_delay = generate_link_delays(cfg.n_procs, cfg.link_delay_min, cfg.link_delay_max, rng)?;
    let graph = TaskGraph::from_adjacency(&adjacency, volumes);
    let platform = Platform {
        n_procs: cfg.n_procs,
        exec_time,
        proc_failure,
        link_failure,
        link_delay,
    };
    let deadlines = if cfg.with_deadlines {
        Some(generate_deadlines(&graph, &platform, cfg.dist, rng)?)
    } else {
        None
    };
    Ok(Instance {
        graph,
        platform,
        deadlines,
    })
}

// ---------------------------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------------------------

#[derive(Serialize)]
struct InstanceFileRef<'a> {
    format_version: i64,
    n_tasks: usize,
    n_procs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    deadlines: Option<&'a Vec<f64>>,
    graph: GraphSection<'a>,
    platform: PlatformSection<'a>,
}

#[derive(Serialize)]
struct GraphSection<'a> {
    predecessors: &'a Vec<Vec<usize>>,
    data_volume: &'a Matrix,
}

#[derive(Serialize)]
struct PlatformSection<'a> {
    exec_time: &'a Matrix,
    proc_failure: &'a Vec<f64>,
    link_failure: &'a Matrix,
    link_delay: &'a Matrix,
}

/// Renders the instance as a versioned TOML document.
pub fn to_toml_string(instance: &Instance) -> String {
    let doc = InstanceFileRef {
        format_version: FORMAT_VERSION,
        n_tasks: instance.graph.n_tasks,
        n_procs: instance.platform.n_procs,
        deadlines: instance.deadlines.as_ref(),
        graph: GraphSection {
            predecessors: &instance.graph.predecessors,
            data_volume: &instance.graph.data_volume,
        },
        platform: PlatformSection {
            exec_time: &instance.platform.exec_time,
            proc_failure: &instance.platform.proc_failure,
            link_failure: &instance.platform.link_failure,
            link_delay: &instance.platform.link_delay,
        },
    };
    toml::to_string(&doc).expect("instance data is always representable in TOML")
}

/// Parses and validates an instance document.
pub fn from_toml_str(text: &str) -> Result<Instance> {
    let root: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse {
        field: "<document>".to_string(),
        message: e.message().to_string(),
    })?;

    let version: i64 = field(&root, "format_version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }

    let graph_t = section(&root, "graph")?;
    let plat_t = section(&root, "platform")?;
    let n_tasks: usize = field(&root, "n_tasks")?;
    let n_procs: usize = field(&root, "n_procs")?;
    let deadlines: Option<Vec<f64>> = match root.get("deadlines") {
        None => None,
        Some(_) => Some(field(&root, "deadlines")?),
    };

    let instance = Instance {
        graph: TaskGraph {
            n_tasks,
            predecessors: prefixed(graph_t, "graph", "predecessors")?,
            data_volume: prefixed(graph_t, "graph", "data_volume")?,
        },
        platform: Platform {
            n_procs,
            exec_time: prefixed(plat_t, "platform", "exec_time")?,
            proc_failure: prefixed(plat_t, "platform", "proc_failure")?,
            link_failure: prefixed(plat_t, "platform", "link_failure")?,
            link_delay: prefixed(plat_t, "platform", "link_delay")?,
        },
        deadlines,
    };

    let violations = validate(&instance);
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    Ok(instance)
}

fn section<'a>(root: &'a toml::Table, name: &str) -> Result<&'a toml::Table> {
    match root.get(name) {
        Some(toml::Value::Table(t)) => Ok(t),
        Some(_) => Err(Error::Parse {
            field: name.to_string(),
            message: "expected a table".to_string(),
        }),
        None => Err(Error::Parse {
            field: name.to_string(),
            message: "missing section".to_string(),
        }),
    }
}

fn field<T: DeserializeOwned>(table: &toml::Table, key: &str) -> Result<T> {
    lookup(table, key, key)
}

fn prefixed<T: DeserializeOwned>(table: &toml::Table, prefix: &str, key: &str) -> Result<T> {
    lookup(table, key, &format!("{prefix}.{key}"))
}

fn lookup<T: DeserializeOwned>(table: &toml::Table, key: &str, path: &str) -> Result<T> {
    let value = table.get(key).ok_or_else(|| Error::Parse {
        field: path.to_string(),
        message: "missing field".to_string(),
    })?;
    value.clone().try_into().map_err(|e: toml::de::Error| Error::Parse {
        field: path.to_string(),
        message: e.message().to_string(),
    })
}

pub fn save_instance(instance: &Instance, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, to_toml_string(instance))
}

pub fn load_instance(path: &Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
        field: "<file>".to_string(),
        message: format!("{}: {e}", path.display()),
    })?;
    from_toml_str(&text)
}
