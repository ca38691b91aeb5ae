use dagsched::instance::{generate_instance, Platform};
use dagsched::nsga2::{
    self, crossover_at, dominates, evolve_generation, initial_population, make_offspring, rank_and_crowd, swap_tasks,
    tournament_select,
};
use dagsched::oracle::enumerate_legal_schedules;
use dagsched::schedule::{evaluate, is_legal};
use dagsched::{
    seeded_rng, EvolutionConfig, ExecDistribution, GeneratorConfig, HeightMap, Individual, Instance, ObjectiveVector,
    Problem, Schedule, TaskGraph,
};

fn problem(n: usize, m: usize, epsilon: f64, seed: u64) -> Problem {
    let cfg = GeneratorConfig::new(n, m, epsilon, ExecDistribution::Exponential);
    Problem::new(generate_instance(&cfg, &mut seeded_rng(seed)).unwrap()).unwrap()
}

fn diamond6() -> Instance {
    // 0 -> {1,2,3} -> 4 -> 5, with 1 -> 5 as well.
    let graph = TaskGraph::from_edges(
        6,
        &[(0, 1, 2.0), (0, 2, 3.0), (0, 3, 1.0), (1, 4, 4.0), (2, 4, 1.0), (3, 4, 2.0), (4, 5, 5.0), (1, 5, 1.0)],
    );
    Instance {
        graph,
        platform: Platform {
            n_procs: 2,
            exec_time: vec![vec![2.0, 3.0], vec![4.0, 1.0], vec![3.0, 3.0], vec![1.0, 2.0], vec![5.0, 4.0], vec![2.0, 2.0]],
            proc_failure: vec![1e-5, 1.2e-5],
            link_failure: vec![vec![0.0, 9e-6], vec![1.1e-5, 0.0]],
            link_delay: vec![vec![0.0, 0.4], vec![0.7, 0.0]],
        },
        deadlines: None,
    }
}

#[test]
fn crossover_closure_over_every_cut() {
    let hm = HeightMap::from_heights(vec![0, 0, 1, 1, 1, 2]);
    let a = Schedule::new(vec![vec![1, 3, 5], vec![0, 4, 2]]);
    let b = Schedule::new(vec![vec![0, 1, 2, 4], vec![3, 5]]);
    for cut in 0..=hm.max_height() {
        let (c1, c2) = crossover_at(&a, &b, &hm, cut).unwrap();
        for c in [&c1, &c2] {
            assert!(is_legal(c, &hm), "cut {cut}: {c:?}");
            let mut tasks: Vec<usize> = c.proc_lists.iter().flatten().copied().collect();
            tasks.sort_unstable();
            assert_eq!(tasks, (0..6).collect::<Vec<_>>());
        }
    }
}

#[test]
fn every_mutation_swap_is_legal() {
    let inst = diamond6();
    let hm = HeightMap::new(&inst.graph).unwrap();
    assert_eq!(hm.heights(), &[0, 1, 1, 1, 2, 3]);
    for s in enumerate_legal_schedules(&inst).unwrap() {
        for x in 0..6 {
            for y in hm.group(hm.height(x)).iter().copied().filter(|&y| y != x) {
                let mut t = s.clone();
                swap_tasks(&mut t, x, y);
                assert!(is_legal(&t, &hm));
            }
        }
    }
}

#[test]
fn rank_zero_wins_tournaments_more_often() {
    let objs = [(1.0, 5.0), (5.0, 1.0), (3.0, 3.0), (4.0, 6.0), (6.0, 4.0), (7.0, 7.0)];
    let mut members: Vec<Individual> = objs
        .iter()
        .map(|&(a, b)| Individual {
            schedule: Schedule::new(vec![]),
            objectives: ObjectiveVector::new(a, b),
            rank: None,
            crowding: None,
        })
        .collect();
    rank_and_crowd(&mut members);
    let rank = |i: usize| members[i].rank.unwrap();
    assert_eq!((0..6).map(rank).collect::<Vec<_>>(), vec![0, 0, 0, 1, 1, 2]);

    let mut rng = seeded_rng(77);
    let mut wins = [0usize; 3];
    for _ in 0..10_000 {
        wins[rank(tournament_select(&members, 2, &mut rng).unwrap())] += 1;
    }
    // Per member: rank 0 has three members, rank 1 two.
    assert!(wins[0] as f64 / 3.0 > wins[1] as f64 / 2.0, "{wins:?}");
    assert!(wins[1] > wins[2]);
}

#[test]
fn offspring_stay_legal_over_many_generations() {
    let p = problem(20, 3, 0.3, 5);
    let config = EvolutionConfig {
        pop_size: 20,
        ..Default::default()
    };
    let mut rng = seeded_rng(1);
    let mut pop = initial_population(&config, &p, &mut rng).unwrap();
    for _ in 0..100 {
        let kids = make_offspring(&pop.members, &config, &p, &mut rng).unwrap();
        assert_eq!(kids.len(), config.pop_size);
        for k in &kids {
            assert!(is_legal(&k.schedule, p.heights()));
            assert_eq!(k.objectives, evaluate(&k.schedule, &p).unwrap());
        }
        pop = evolve_generation(&pop, &config, &p, &mut rng).unwrap();
    }
}

#[test]
fn survivors_come_from_the_union_and_keep_the_first_front() {
    let p = problem(12, 2, 0.4, 9);
    let config = EvolutionConfig {
        pop_size: 24,
        ..Default::default()
    };
    let mut rng = seeded_rng(3);
    let pop = initial_population(&config, &p, &mut rng).unwrap();
    for _ in 0..30 {
        let mut peek = rng.clone();
        let kids = make_offspring(&pop.members, &config, &p, &mut peek).unwrap();
        let union: Vec<Individual> = pop.members.iter().cloned().chain(kids).collect();
        let next = evolve_generation(&pop, &config, &p, &mut rng).unwrap();
        assert_eq!(next.members.len(), config.pop_size);
        for m in &next.members {
            assert!(union.iter().any(|u| u.schedule == m.schedule && u.objectives == m.objectives));
        }
        let objs: Vec<ObjectiveVector> = union.iter().map(|u| u.objectives).collect();
        let first = &nsga2::fast_nondominated_sort(&objs)[0];
        if first.len() <= config.pop_size {
            for &i in first {
                assert!(next.members.iter().any(|m| m.schedule == union[i].schedule));
            }
        }
    }
}

#[test]
fn per_objective_bests_never_regress() {
    let p = problem(15, 3, 0.3, 21);
    let config = EvolutionConfig {
        pop_size: 30,
        generations: 200,
        seed: 4,
        ..Default::default()
    };
    let res = nsga2::run(&p, &config).unwrap();
    assert_eq!(res.stats.len(), 201);
    for w in res.stats.windows(2) {
        assert!(w[1].best_makespan <= w[0].best_makespan);
        assert!(w[1].best_rc <= w[0].best_rc);
    }
}

#[test]
fn runs_are_deterministic_and_fronts_non_dominated() {
    let p = problem(10, 2, 0.5, 2);
    let config = EvolutionConfig {
        pop_size: 20,
        generations: 40,
        seed: 99,
        ..Default::default()
    };
    let a = nsga2::run(&p, &config).unwrap();
    let b = nsga2::run(&p, &config).unwrap();
    assert_eq!(a.front, b.front);
    assert_eq!(a.stats, b.stats);
    for x in &a.front {
        for y in &a.front {
            assert!(!dominates(&x.objectives, &y.objectives));
        }
    }
    for w in a.front.windows(2) {
        assert!(w[0].objectives.makespan < w[1].objectives.makespan);
    }
}

#[test]
fn population_size_must_match() {
    let p = problem(4, 2, 0.5, 2);
    let config = EvolutionConfig {
        pop_size: 8,
        ..Default::default()
    };
    let mut rng = seeded_rng(0);
    let mut pop = initial_population(&config, &p, &mut rng).unwrap();
    pop.members.pop();
    assert!(evolve_generation(&pop, &config, &p, &mut rng).is_err());
}
