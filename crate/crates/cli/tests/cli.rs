use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dagsched::instance::load_instance;
use dagsched::schedule::{evaluate, is_legal};
use dagsched::{Problem, Schedule};

fn dagsched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dagsched")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = dagsched(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn gen(dir: &Path, name: &str, tasks: usize, procs: usize, eps: &str, seed: &str) {
    ok(&[
        "--seed", seed, "--out-dir", dir.to_str().unwrap(), "--quiet", "gen",
        "--tasks", &tasks.to_string(), "--procs", &procs.to_string(), "--epsilon", eps, "--out", name,
    ]);
}

fn read_front(path: &Path) -> Vec<(f64, f64, Schedule)> {
    let mut r = csv::Reader::from_path(path).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["makespan", "reliability_cost", "schedule"]);
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (
                rec[0].parse().unwrap(),
                rec[1].parse().unwrap(),
                Schedule::from_compact(&rec[2]).unwrap(),
            )
        })
        .collect()
}

#[test]
fn gen_writes_a_reloadable_deterministic_instance() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let summary = ok(&["--seed", "42", "--out-dir", d, "gen", "--tasks", "10", "--procs", "2", "--epsilon", "0.5", "--dist", "normal"]);
    assert!(summary.contains("edges") && summary.contains("mean exec time"));
    let first = fs::read(dir.path().join("instance.toml")).unwrap();
    let inst = load_instance(&dir.path().join("instance.toml")).unwrap();
    assert_eq!((inst.n_tasks(), inst.n_procs()), (10, 2));
    assert!(inst.deadlines.is_some());
    ok(&["--seed", "42", "--out-dir", d, "gen", "--tasks", "10", "--procs", "2", "--epsilon", "0.5", "--dist", "normal"]);
    assert_eq!(fs::read(dir.path().join("instance.toml")).unwrap(), first);
}

#[test]
fn gen_rejects_out_of_range_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let out = dagsched(&["--out-dir", dir.path().to_str().unwrap(), "gen", "--tasks", "10", "--procs", "2", "--epsilon", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon"));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);

    let out = dagsched(&["--out-dir", dir.path().to_str().unwrap(), "gen", "--tasks", "0", "--procs", "2", "--epsilon", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn solve_front_rows_re_evaluate_to_their_objectives() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    gen(dir.path(), "inst.toml", 10, 2, "0.5", "7");
    let inst_path = dir.path().join("inst.toml");
    let summary = ok(&["--seed", "5", "--out-dir", d, "solve", "--instance", inst_path.to_str().unwrap(), "--generations", "30", "--stats"]);
    assert!(summary.contains("pop_size 20"), "{summary}");

    let problem = Problem::new(load_instance(&inst_path).unwrap()).unwrap();
    let front = read_front(&dir.path().join("front.csv"));
    assert!(!front.is_empty());
    for w in front.windows(2) {
        assert!(w[0].0 <= w[1].0);
    }
    for (ms, rc, s) in &front {
        assert!(is_legal(s, problem.heights()));
        let v = evaluate(s, &problem).unwrap();
        assert_eq!(v.makespan, *ms);
        assert!((v.reliability_cost - rc).abs() <= 1e-8 * rc);
    }

    let mut stats = csv::Reader::from_path(dir.path().join("stats.csv")).unwrap();
    assert_eq!(
        stats.headers().unwrap(),
        vec!["generation", "best_makespan", "best_rc", "mean_makespan", "mean_rc", "front0_size"]
    );
    let gens: Vec<usize> = stats.records().map(|r| r.unwrap()[0].parse().unwrap()).collect();
    assert_eq!(gens, (0..=30).collect::<Vec<_>>());
}

#[test]
fn more_generations_never_worsen_the_best_makespan() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "inst.toml", 10, 2, "0.5", "11");
    let inst = dir.path().join("inst.toml");
    let mut best = Vec::new();
    for g in ["1", "5"] {
        let out = dir.path().join(format!("g{g}"));
        ok(&["--seed", "3", "--quiet", "--out-dir", out.to_str().unwrap(), "solve", "--instance", inst.to_str().unwrap(), "--generations", g]);
        best.push(read_front(&out.join("front.csv")).iter().map(|r| r.0).fold(f64::INFINITY, f64::min));
    }
    assert!(best[1] <= best[0]);
}

#[test]
fn solve_reports_unreadable_instances() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    let out = dagsched(&["--out-dir", dir.path().to_str().unwrap(), "solve", "--instance", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("front.csv").exists());

    gen(dir.path(), "inst.toml", 4, 2, "0.5", "1");
    let inst = dir.path().join("inst.toml");
    let out = dagsched(&["--out-dir", dir.path().to_str().unwrap(), "solve", "--instance", inst.to_str().unwrap(), "--pop-size", "7"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("front.csv").exists());
}

#[test]
fn eval_matches_solve_output() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "inst.toml", 8, 3, "0.4", "2");
    let inst = dir.path().join("inst.toml");
    ok(&["--quiet", "--out-dir", dir.path().to_str().unwrap(), "solve", "--instance", inst.to_str().unwrap(), "--generations", "10"]);
    let (ms, rc, schedule) = read_front(&dir.path().join("front.csv")).remove(0);
    let sched_path = dir.path().join("sched.txt");
    fs::write(&sched_path, schedule.to_string()).unwrap();
    let report = ok(&["eval", "--instance", inst.to_str().unwrap(), "--schedule", sched_path.to_str().unwrap()]);
    assert!(report.contains(&format!("makespan {ms}\n")), "{report}");
    assert!(report.contains(&format!("reliability_cost {rc:.8e}\n")), "{report}");
    assert!(report.contains("deadline misses: "));
    assert_eq!(report.lines().filter(|l| l.trim_start().starts_with(char::is_numeric)).count(), 8);
}

#[test]
fn eval_lists_violations_of_an_illegal_schedule() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "inst.toml", 4, 2, "1.0", "2");
    let inst = dir.path().join("inst.toml");
    let sched = dir.path().join("bad.txt");
    // Chain 0 -> 1 -> 2 -> 3 listed out of height order, with task 3 missing.
    fs::write(&sched, "1,0\n2\n").unwrap();
    let out = dagsched(&["eval", "--instance", inst.to_str().unwrap(), "--schedule", sched.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("illegal schedule"), "{err}");
    assert!(err.contains("task 3"), "{err}");
    assert!(err.contains("height"), "{err}");
}

#[test]
fn eval_single_task_starts_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "one.toml", 1, 2, "0.0", "4");
    let sched = dir.path().join("s.txt");
    fs::write(&sched, "\n0\n").unwrap();
    let report = ok(&["eval", "--instance", dir.path().join("one.toml").to_str().unwrap(), "--schedule", sched.to_str().unwrap()]);
    let row: Vec<&str> = report.lines().find(|l| l.trim_start().starts_with('0')).unwrap().split_whitespace().collect();
    assert_eq!(&row[..3], &["0", "1", "0.0000"]);
}

#[test]
fn oracle_covers_a_single_task_instance() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    gen(dir.path(), "one.toml", 1, 3, "0.0", "9");
    let out = ok(&["--out-dir", d, "oracle", "--instance", dir.path().join("one.toml").to_str().unwrap(), "--generations", "2", "--pop-size", "16"]);
    assert!(out.contains("coverage 1\n"), "{out}");
    let mut r = csv::Reader::from_path(dir.path().join("oracle_report.csv")).unwrap();
    assert_eq!(r.headers().unwrap().len(), 6);
    assert!(r.records().all(|rec| &rec.unwrap()[2] == "true"));
}

#[test]
fn oracle_refuses_large_instances() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "big.toml", 50, 2, "0.4", "1");
    let out = dagsched(&["--out-dir", dir.path().to_str().unwrap(), "oracle", "--instance", dir.path().join("big.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("size guard") && err.contains("n_tasks = 50"), "{err}");
    assert!(!dir.path().join("oracle_report.csv").exists());
}

#[test]
fn paper_cases_emit_one_front_per_distribution_and_generation_count() {
    let dir = tempfile::tempdir().unwrap();
    let count = |sub: &str| {
        let mut names: Vec<String> = fs::read_dir(dir.path().join(sub))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .filter(|n| n.ends_with("_front.csv"))
            .collect();
        names.sort();
        names
    };
    ok(&["--quiet", "--out-dir", dir.path().join("a").to_str().unwrap(), "paper-case", "case1"]);
    assert_eq!(
        count("a"),
        vec![
            "case1_exponential_gen1_front.csv",
            "case1_exponential_gen5_front.csv",
            "case1_normal_gen1_front.csv",
            "case1_normal_gen5_front.csv"
        ]
    );
    ok(&["--quiet", "--out-dir", dir.path().join("b").to_str().unwrap(), "paper-case", "case2"]);
    assert_eq!(count("b"), vec!["case2_normal_gen1_front.csv", "case2_normal_gen5_front.csv"]);
    let inst = load_instance(&dir.path().join("b/case2_normal_instance.toml")).unwrap();
    assert_eq!((inst.n_tasks(), inst.n_procs()), (50, 4));

    ok(&["--quiet", "--out-dir", dir.path().join("c").to_str().unwrap(), "paper-case", "case1", "--generations", "3"]);
    assert_eq!(count("c"), vec!["case1_exponential_gen3_front.csv", "case1_normal_gen3_front.csv"]);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["x", "y"] {
        ok(&["--seed", "8", "--quiet", "--out-dir", dir.path().join(sub).to_str().unwrap(), "paper-case", "case1", "--stats"]);
    }
    let mut files = 0;
    for e in fs::read_dir(dir.path().join("x")).unwrap() {
        let name = e.unwrap().file_name();
        assert_eq!(fs::read(dir.path().join("x").join(&name)).unwrap(), fs::read(dir.path().join("y").join(&name)).unwrap());
        files += 1;
    }
    assert_eq!(files, 10);
}

#[test]
fn quiet_suppresses_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dagsched(&["--quiet", "--out-dir", dir.path().to_str().unwrap(), "gen", "--tasks", "3", "--procs", "2", "--epsilon", "0.5"]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
}
