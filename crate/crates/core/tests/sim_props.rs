use comborl::sim::{generate_map, observe, step, ArenaConfig, TaskKind};
use proptest::prelude::*;

fn task() -> impl Strategy<Value = TaskKind> {
    prop_oneof![Just(TaskKind::PointTsp), Just(TaskKind::TimedTsp), Just(TaskKind::ColourMatch)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_play_respects_task_invariants(
        kind in task(),
        seed in 0u64..10_000,
        actions in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..400),
    ) {
        let cfg = ArenaConfig { time_limit: 300, timeout_min: 50, timeout_max: 300, ..ArenaConfig::default() };
        let mut s = generate_map(seed, kind, &cfg).unwrap();
        let mut visited = s.visited_count();
        let mut total = 0.0;
        for (k, &(a, b)) in actions.iter().cycle().take(400).enumerate() {
            if s.done {
                break;
            }
            let out = step(&mut s, [a, b]).unwrap();
            let p = s.robot.position;
            prop_assert!(p[0].abs() <= cfg.arena_half_width && p[1].abs() <= cfg.arena_half_width);
            prop_assert_eq!(out.observation.clone(), observe(&s));
            prop_assert_eq!(s.t_elapsed as usize, k + 1);
            if kind.is_tsp() {
                prop_assert!(s.visited_count() >= visited);
                prop_assert_eq!(out.dense_component, (s.visited_count() - visited) as f64);
                visited = s.visited_count();
                prop_assert!(out.reward >= 0.0);
            } else {
                prop_assert!(out.dense_component.abs() <= 2.0 * out.triggered.len() as f64);
            }
            total += out.reward;
        }
        prop_assert!(s.t_elapsed <= cfg.time_limit);
        if kind == TaskKind::PointTsp && !s.success {
            prop_assert!(total < 15.0);
        }
    }

    #[test]
    fn identical_seeds_give_identical_maps(kind in task(), seed in 0u64..1_000_000) {
        let cfg = ArenaConfig::default();
        prop_assert_eq!(generate_map(seed, kind, &cfg).unwrap(), generate_map(seed, kind, &cfg).unwrap());
    }
}
