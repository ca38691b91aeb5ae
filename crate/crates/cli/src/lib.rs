//! Command-line front end: instance generation, optimisation runs, schedule evaluation, oracle
//! comparison and the two reference experiments.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dagsched::instance::{self, generate_instance};
use dagsched::nsga2::{self, FrontPoint, GenerationStats};
use dagsched::oracle::{self, MAX_PROCS, MAX_TASKS};
use dagsched::schedule::{deadline_misses, evaluate_makespan, evaluate_reliability_cost, legality_violations};
use dagsched::{
    seeded_rng, Allocation, Error, EvolutionConfig, ExecDistribution, GeneratorConfig, Instance, ObjectiveVector, Problem,
    Schedule,
};

#[derive(Parser, Debug, Clone)]
#[command(name = "dagsched", version, about = "Bi-objective DAG scheduling on heterogeneous processors")]
pub struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving output files.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Suppress the summary printed on success.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Worker threads for objective evaluation; 0 lets the runtime decide.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Generate a random instance.
    Gen(GenArgs),
    /// Run NSGA-II on an instance and write its first front.
    Solve(SolveArgs),
    /// Evaluate one schedule.
    Eval(EvalArgs),
    /// Compare NSGA-II against the exhaustively enumerated front of a small instance.
    Oracle(OracleArgs),
    /// Regenerate the 10-task/2-processor or 50-task/4-processor experiment.
    PaperCase(PaperCaseArgs),
}

#[derive(Args, Debug, Clone)]
pub struct GenArgs {
    #[arg(long)]
    pub tasks: usize,
    #[arg(long)]
    pub procs: usize,
    /// Edge probability of the P-method generator.
    #[arg(long, value_parser = probability)]
    pub epsilon: f64,
    #[command(flatten)]
    pub dist: DistArgs,
    /// Mean execution time.
    #[arg(long, default_value_t = 5.0)]
    pub mean: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delay_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub delay_max: f64,
    /// Output file, relative to --out-dir.
    #[arg(long, default_value = "instance.toml")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct DistArgs {
    #[arg(long, value_enum, default_value_t = DistKind::Normal)]
    pub dist: DistKind,
    /// Standard deviation of the normal distribution.
    #[arg(long, default_value_t = ExecDistribution::DEFAULT_NORMAL_STD_DEV)]
    pub normal_sd: f64,
}

impl DistArgs {
    fn resolve(&self, kind: DistKind) -> ExecDistribution {
        match kind {
            DistKind::Normal => ExecDistribution::Normal {
                std_dev: self.normal_sd,
            },
            DistKind::Exponential => ExecDistribution::Exponential,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistKind {
    Normal,
    #[value(alias = "exp")]
    Exponential,
}

impl DistKind {
    fn name(self) -> &'static str {
        match self {
            DistKind::Normal => "normal",
            DistKind::Exponential => "exponential",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocationKind {
    Uniform,
    RoundRobin,
}

/// Engine settings shared by every optimising command.
#[derive(Args, Debug, Clone)]
pub struct EngineArgs {
    /// Population size; defaults to twice the task count.
    #[arg(long)]
    pub pop_size: Option<usize>,
    #[arg(long, default_value_t = 0.9, value_parser = probability)]
    pub p_crossover: f64,
    #[arg(long, default_value_t = 0.1, value_parser = probability)]
    pub p_mutation: f64,
    #[arg(long, default_value_t = 2)]
    pub tournament_size: usize,
    #[arg(long, value_enum, default_value_t = AllocationKind::Uniform)]
    pub allocation: AllocationKind,
}

impl EngineArgs {
    pub fn config(&self, n_tasks: usize, generations: usize, seed: u64) -> EvolutionConfig {
        EvolutionConfig {
            pop_size: self.pop_size.unwrap_or(2 * n_tasks),
            generations,
            p_crossover: self.p_crossover,
            p_mutation: self.p_mutation,
            seed,
            tournament_size: self.tournament_size,
            allocation: match self.allocation {
                AllocationKind::Uniform => Allocation::Uniform,
                AllocationKind::RoundRobin => Allocation::RoundRobin,
            },
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct SolveArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub generations: usize,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Also write per-generation statistics.
    #[arg(long)]
    pub stats: bool,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Schedule file: one line per processor, comma-separated task indices.
    #[arg(long)]
    pub schedule: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct OracleArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub generations: usize,
    /// Number of runs, seeded consecutively from --seed, whose fronts are pooled.
    #[arg(long, default_value_t = 1)]
    pub runs: u64,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    Case1,
    Case2,
}

impl Case {
    pub fn name(self) -> &'static str {
        match self {
            Case::Case1 => "case1",
            Case::Case2 => "case2",
        }
    }

    pub fn size(self) -> (usize, usize) {
        match self {
            Case::Case1 => (10, 2),
            Case::Case2 => (50, 4),
        }
    }

    pub fn distributions(self) -> &'static [DistKind] {
        match self {
            Case::Case1 => &[DistKind::Normal, DistKind::Exponential],
            Case::Case2 => &[DistKind::Normal],
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct PaperCaseArgs {
    #[arg(value_enum)]
    pub case: Case,
    /// Generation counts to run, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,5")]
    pub generations: Vec<usize>,
    #[arg(long, default_value_t = 0.5, value_parser = probability)]
    pub epsilon: f64,
    #[arg(long, default_value_t = ExecDistribution::DEFAULT_NORMAL_STD_DEV)]
    pub normal_sd: f64,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long)]
    pub stats: bool,
}

fn probability(s: &str) -> Result<f64, String> {
    let p: f64 = s.parse().map_err(|e| format!("`{s}`: {e}"))?;
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(format!("{p} is outside [0, 1]"))
    }
}

/// Exit status for a failed command: 2 for bad parameters, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let bad_parameter = err
        .chain()
        .filter_map(|c| c.downcast_ref::<Error>())
        .any(|e| matches!(e, Error::Parameter { .. }));
    if bad_parameter {
        2
    } else {
        1
    }
}

/// Runs one command, writing its summary to `out` unless `--quiet` is set.
pub fn execute<W: Write>(cli: &Cli, out: &mut W) -> anyhow::Result<()> {
    let mut sink = String::new();
    let result = if cli.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build()?;
        pool.install(|| dispatch(cli, &mut sink))
    } else {
        dispatch(cli, &mut sink)
    };
    if !cli.quiet {
        out.write_all(sink.as_bytes())?;
    }
    result
}

fn dispatch(cli: &Cli, out: &mut String) -> anyhow::Result<()> {
    match &cli.command {
        Command::Gen(args) => cmd_gen(cli, args, out),
        Command::Solve(args) => cmd_solve(cli, args, out),
        Command::Eval(args) => cmd_eval(args, out),
        Command::Oracle(args) => cmd_oracle(cli, args, out),
        Command::PaperCase(args) => cmd_paper_case(cli, args, out),
    }
}

/// Writes `bytes` to a temporary file beside `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn load(path: &Path) -> anyhow::Result<Instance> {
    instance::load_instance(path).with_context(|| format!("loading instance {}", path.display()))
}

fn mean_exec_time(inst: &Instance) -> f64 {
    let cells = inst.platform.exec_time.iter().flatten();
    let count = (inst.n_tasks() * inst.n_procs()).max(1) as f64;
    cells.sum::<f64>() / count
}

fn cmd_gen(cli: &Cli, args: &GenArgs, out: &mut String) -> anyhow::Result<()> {
    let mut cfg = GeneratorConfig::new(args.tasks, args.procs, args.epsilon, args.dist.resolve(args.dist.dist));
    cfg.mean_exec_time = args.mean;
    cfg.link_delay_min = args.delay_min;
    cfg.link_delay_max = args.delay_max;
    let inst = generate_instance(&cfg, &mut seeded_rng(cli.seed))?;
    let path = cli.out_dir.join(&args.out);
    write_atomic(&path, instance::to_toml_string(&inst).as_bytes())?;
    writeln!(
        out,
        "wrote {}: {} tasks, {} processors, {} edges, mean exec time {:.4}",
        path.display(),
        inst.n_tasks(),
        inst.n_procs(),
        inst.graph.edge_count(),
        mean_exec_time(&inst)
    )?;
    Ok(())
}

/// Front CSV: makespan, reliability cost in scientific notation with 9 significant digits, and
/// the schedule in compact form.
pub fn front_csv(front: &[FrontPoint]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["makespan", "reliability_cost", "schedule"])?;
    for p in front {
        w.write_record([
            p.objectives.makespan.to_string(),
            format!("{:.8e}", p.objectives.reliability_cost),
            p.schedule.to_compact(),
        ])?;
    }
    Ok(w.into_inner()?)
}

pub fn stats_csv(stats: &[GenerationStats]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["generation", "best_makespan", "best_rc", "mean_makespan", "mean_rc", "front0_size"])?;
    for s in stats {
        w.write_record([
            s.generation.to_string(),
            s.best_makespan.to_string(),
            format!("{:.8e}", s.best_rc),
            s.mean_makespan.to_string(),
            format!("{:.8e}", s.mean_rc),
            s.front0_size.to_string(),
        ])?;
    }
    Ok(w.into_inner()?)
}

fn describe_front(front: &[FrontPoint]) -> String {
    let best_ms = front.iter().map(|p| p.objectives.makespan).fold(f64::INFINITY, f64::min);
    let best_rc = front.iter().map(|p| p.objectives.reliability_cost).fold(f64::INFINITY, f64::min);
    format!("{} points, best makespan {best_ms:.6}, best reliability cost {best_rc:.8e}", front.len())
}

fn cmd_solve(cli: &Cli, args: &SolveArgs, out: &mut String) -> anyhow::Result<()> {
    let problem = Problem::new(load(&args.instance)?)?;
    let config = args.engine.config(problem.n_tasks(), args.generations, cli.seed);
    let result = nsga2::run(&problem, &config)?;
    writeln!(
        out,
        "instance: {} tasks, {} processors",
        problem.n_tasks(),
        problem.n_procs()
    )?;
    writeln!(
        out,
        "pop_size {}, generations {}, p_crossover {}, p_mutation {}, seed {}",
        config.pop_size, config.generations, config.p_crossover, config.p_mutation, config.seed
    )?;
    writeln!(out, "front: {}", describe_front(&result.front))?;
    let front_path = cli.out_dir.join("front.csv");
    write_atomic(&front_path, &front_csv(&result.front)?)?;
    writeln!(out, "wrote {}", front_path.display())?;
    if args.stats {
        let stats_path = cli.out_dir.join("stats.csv");
        write_atomic(&stats_path, &stats_csv(&result.stats)?)?;
        writeln!(out, "wrote {}", stats_path.display())?;
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs, out: &mut String) -> anyhow::Result<()> {
    let problem = Problem::new(load(&args.instance)?)?;
    let text = fs::read_to_string(&args.schedule).with_context(|| format!("reading {}", args.schedule.display()))?;
    let schedule: Schedule = text.parse()?;
    let mut violations = Vec::new();
    if schedule.n_procs() != problem.n_procs() {
        violations.push(format!(
            "schedule has {} processor lines, instance has {} processors",
            schedule.n_procs(),
            problem.n_procs()
        ));
    } else {
        violations = legality_violations(&schedule, problem.heights());
    }
    if !violations.is_empty() {
        return Err(anyhow::Error::new(Error::Validation(violations)).context("illegal schedule"));
    }
    let (makespan, timing) = evaluate_makespan(&schedule, &problem)?;
    let rc = evaluate_reliability_cost(&schedule, &problem)?;
    writeln!(out, "makespan {makespan}")?;
    writeln!(out, "reliability_cost {rc:.8e}")?;
    let host = schedule.assignment(problem.n_tasks());
    let deadlines = problem.instance().deadlines.as_deref();
    let report = deadlines.map(|d| deadline_misses(&timing, d));
    writeln!(out, "{:>5} {:>5} {:>12} {:>12} {:>12} {:>6}", "task", "proc", "start", "finish", "deadline", "missed")?;
    for i in 0..problem.n_tasks() {
        let (deadline, missed) = match (deadlines, &report) {
            (Some(d), Some(r)) => (format!("{:.4}", d[i]), if r.missed[i] { "yes" } else { "no" }),
            _ => ("-".to_string(), "-"),
        };
        writeln!(
            out,
            "{:>5} {:>5} {:>12.4} {:>12.4} {:>12} {:>6}",
            i, host[i], timing.start[i], timing.finish[i], deadline, missed
        )?;
    }
    match report {
        Some(r) => writeln!(out, "deadline misses: {}", r.count)?,
        None => writeln!(out, "deadline misses: no deadlines in instance")?,
    }
    Ok(())
}

/// Oracle report CSV, one row per exact point.
pub fn oracle_report_csv(distance: &oracle::FrontDistance) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "exact_makespan",
        "exact_reliability_cost",
        "matched",
        "nearest_makespan",
        "nearest_reliability_cost",
        "deviation",
    ])?;
    for r in &distance.rows {
        let (nm, nr) = match r.nearest_found {
            Some(v) => (v.makespan.to_string(), format!("{:.8e}", v.reliability_cost)),
            None => (String::new(), String::new()),
        };
        w.write_record([
            r.exact.makespan.to_string(),
            format!("{:.8e}", r.exact.reliability_cost),
            r.matched.to_string(),
            nm,
            nr,
            r.deviation.to_string(),
        ])?;
    }
    Ok(w.into_inner()?)
}

fn cmd_oracle(cli: &Cli, args: &OracleArgs, out: &mut String) -> anyhow::Result<()> {
    let inst = load(&args.instance)?;
    let exact = oracle::exact_pareto_front(&inst).with_context(|| {
        format!("oracle size guard: enumeration is limited to {MAX_TASKS} tasks and {MAX_PROCS} processors")
    })?;
    if args.runs == 0 {
        bail!("--runs must be at least 1");
    }
    let problem = Problem::new(inst)?;
    let mut found: Vec<ObjectiveVector> = Vec::new();
    for r in 0..args.runs {
        let config = args.engine.config(problem.n_tasks(), args.generations, cli.seed.wrapping_add(r));
        for p in nsga2::run(&problem, &config)?.front {
            if !found.contains(&p.objectives) {
                found.push(p.objectives);
            }
        }
    }
    let bounded = found.iter().all(|p| oracle::weakly_dominated_by_front(p, &exact));
    let mut found: Vec<ObjectiveVector> = nsga2::fast_nondominated_sort(&found)[0].iter().map(|&i| found[i]).collect();
    found.sort_by(|a, b| a.makespan.total_cmp(&b.makespan).then(a.reliability_cost.total_cmp(&b.reliability_cost)));
    let distance = oracle::front_distance(&found, &exact)?;

    writeln!(out, "coverage {}", distance.coverage)?;
    writeln!(out, "deviation {}", distance.deviation)?;
    writeln!(out, "every found point weakly dominated by the exact front: {}", if bounded { "yes" } else { "no" })?;
    writeln!(out, "exact front ({} points):", exact.points.len())?;
    for p in &exact.points {
        writeln!(out, "  {} {:.8e}", p.makespan, p.reliability_cost)?;
    }
    writeln!(out, "found front ({} points, non-dominated union of {} runs):", found.len(), args.runs)?;
    for p in &found {
        writeln!(out, "  {} {:.8e}", p.makespan, p.reliability_cost)?;
    }
    let path = cli.out_dir.join("oracle_report.csv");
    write_atomic(&path, &oracle_report_csv(&distance)?)?;
    writeln!(out, "wrote {}", path.display())?;
    Ok(())
}

fn cmd_paper_case(cli: &Cli, args: &PaperCaseArgs, out: &mut String) -> anyhow::Result<()> {
    let (n, m) = args.case.size();
    let dist_args = DistArgs {
        dist: DistKind::Normal,
        normal_sd: args.normal_sd,
    };
    for &kind in args.case.distributions() {
        let stem = format!("{}_{}", args.case.name(), kind.name());
        let cfg = GeneratorConfig::new(n, m, args.epsilon, dist_args.resolve(kind));
        let inst = generate_instance(&cfg, &mut seeded_rng(cli.seed))?;
        let inst_path = cli.out_dir.join(format!("{stem}_instance.toml"));
        write_atomic(&inst_path, instance::to_toml_string(&inst).as_bytes())?;
        writeln!(out, "wrote {}: {} edges", inst_path.display(), inst.graph.edge_count())?;
        let problem = Problem::new(inst)?;
        for &g in &args.generations {
            let config = args.engine.config(n, g, cli.seed);
            let result = nsga2::run(&problem, &config)?;
            let path = cli.out_dir.join(format!("{stem}_gen{g}_front.csv"));
            write_atomic(&path, &front_csv(&result.front)?)?;
            writeln!(out, "{stem}, {g} generations, pop_size {}: {}", config.pop_size, describe_front(&result.front))?;
            writeln!(out, "wrote {}", path.display())?;
            if args.stats {
                let path = cli.out_dir.join(format!("{stem}_gen{g}_stats.csv"));
                write_atomic(&path, &stats_csv(&result.stats)?)?;
                writeln!(out, "wrote {}", path.display())?;
            }
        }
    }
    Ok(())
}
