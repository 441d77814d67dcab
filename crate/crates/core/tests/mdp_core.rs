mod common;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{data_path, paper_mdp, random_policy, PAPER_EXAMPLE};
use safe_reach::mdp::{
    kappa, load_mdp, parse_mdp, safety_function, simulate_episode, to_json, validate_mdp, value_function,
    Invariant, MdpError, Policy,
};

fn everywhere(action: usize) -> Policy {
    Policy::deterministic(2, &[action; 5])
}

#[test]
fn bundled_model_loads() {
    let mdp = load_mdp(data_path()).unwrap();
    assert_eq!(mdp.n_states(), 5);
    assert_eq!(mdp.n_actions(), 2);
    let (s2, a2, s5) = (
        mdp.state_index("2").unwrap(),
        mdp.action_index("2").unwrap(),
        mdp.state_index("5").unwrap(),
    );
    assert_eq!(mdp.p(s2, a2, s5), 0.8);
    assert_eq!(mdp.p(0, 0, 1), 0.9);
    assert!(validate_mdp(&mdp).passed());
}

#[test]
fn probability_above_one_is_rejected() {
    let text = PAPER_EXAMPLE.replacen("\"p\": 0.9", "\"p\": 1.2", 1);
    assert!(load_from_text(&text).is_err());
}

#[test]
fn missing_goal_key_is_a_parse_error() {
    let text = PAPER_EXAMPLE.replace("\"goal\": [\"5\"],", "");
    match parse_mdp(&text) {
        Err(MdpError::Parse { message, .. }) => assert!(message.contains("goal"), "{message}"),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

fn load_from_text(text: &str) -> Result<(), MdpError> {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    std::fs::write(&path, text).unwrap();
    load_mdp(&path).map(|_| ())
}

#[test]
fn short_row_fails_stochasticity() {
    let text = PAPER_EXAMPLE.replace(
        r#"{ "from": "3", "action": "2", "to": "5", "p": 1.0 }"#,
        r#"{ "from": "3", "action": "2", "to": "5", "p": 0.9 }"#,
    );
    let mdp = parse_mdp(&text).unwrap();
    let report = validate_mdp(&mdp);
    assert!(report.violates(Invariant::Stochasticity));
    assert!(matches!(load_from_text(&text), Err(MdpError::Invalid(_))));
}

#[test]
fn absorbing_living_state_fails_accessibility() {
    let text = r#"{
      "states": ["h", "e"], "actions": ["a", "b"],
      "living": ["h"], "unsafe": [], "goal": ["e"],
      "unsafe_terminal": true, "t_max": 4,
      "transitions": [
        {"from": "h", "action": "a", "to": "h", "p": 1.0},
        {"from": "h", "action": "b", "to": "h", "p": 1.0}
      ],
      "costs": []
    }"#;
    let report = validate_mdp(&parse_mdp(text).unwrap());
    assert!(report.violates(Invariant::Accessibility));
    assert!(!report.passed());
}

#[test]
fn kappa_examples() {
    let mdp = paper_mdp();
    assert_eq!(kappa(&mdp, 1, 0).unwrap(), 0.8);
    assert_eq!(kappa(&mdp, 0, 0).unwrap(), 0.0);
    assert_eq!(kappa(&mdp, 2, 1).unwrap(), 0.0);
    assert!(matches!(kappa(&mdp, 4, 0), Err(MdpError::Domain(_))));
    assert!(matches!(kappa(&mdp, 3, 0), Err(MdpError::Domain(_))));
}

#[test]
fn exact_evaluation_examples() {
    let mdp = paper_mdp();
    let s = safety_function(&mdp, &everywhere(0)).unwrap();
    for v in &s[..3] {
        assert_abs_diff_eq!(*v, 0.8, epsilon = 1e-12);
    }
    assert_eq!(s[3], 1.0);
    assert_eq!(s[4], 0.0);

    let v = value_function(&mdp, &everywhere(1)).unwrap();
    assert_abs_diff_eq!(v[2], -0.1, epsilon = 1e-12);
    assert_abs_diff_eq!(v[1], -0.12, epsilon = 1e-12);
    assert_abs_diff_eq!(v[0], -0.202, epsilon = 1e-12);
    assert_eq!(v[3], 0.0);
    assert_eq!(v[4], 0.0);
}

#[test]
fn single_step_to_goal() {
    let mdp = paper_mdp();
    let traj = simulate_episode(&mdp, &everywhere(1), 2, 17);
    assert_eq!(traj.len(), 1);
    let step = traj.steps[0];
    assert_eq!((step.state, step.action, step.next_state), (2, 1, 4));
    assert_eq!(step.cost, -0.1);
    assert!(!traj.hit_unsafe);
    assert!(!traj.truncated);
}

#[test]
fn json_round_trip() {
    let mdp = paper_mdp();
    let again = parse_mdp(&to_json(&mdp)).unwrap();
    assert_eq!(mdp, again);
}

#[test]
fn invalid_policy_is_rejected() {
    let mdp = paper_mdp();
    let bad = Policy::from_probs(5, 2, vec![0.5, 0.4, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    assert!(matches!(safety_function(&mdp, &bad), Err(MdpError::InvalidPolicy(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn safety_satisfies_its_recursion(seed in any::<u64>()) {
        let mdp = paper_mdp();
        let pi = random_policy(&mdp, &mut ChaCha8Rng::seed_from_u64(seed));
        let s = safety_function(&mdp, &pi).unwrap();
        for x in mdp.states() {
            prop_assert!((0.0..=1.0).contains(&s[x]));
            if mdp.is_unsafe(x) {
                prop_assert_eq!(s[x], 1.0);
            } else if mdp.is_goal(x) {
                prop_assert_eq!(s[x], 0.0);
            } else {
                let rhs: f64 = mdp.actions().map(|a| {
                    let next: f64 = mdp.states().filter(|&y| mdp.is_living(y)).map(|y| mdp.p(x, a, y) * s[y]).sum();
                    pi.prob(x, a) * (mdp.kappa(x, a).unwrap() + next)
                }).sum();
                prop_assert!((s[x] - rhs).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn value_satisfies_its_recursion(seed in any::<u64>()) {
        let mdp = paper_mdp();
        let pi = random_policy(&mdp, &mut ChaCha8Rng::seed_from_u64(seed));
        let v = value_function(&mdp, &pi).unwrap();
        for x in mdp.states().filter(|&x| mdp.is_living(x)) {
            let rhs: f64 = mdp.actions().map(|a| {
                let next: f64 = mdp.states().map(|y| mdp.p(x, a, y) * v[y]).sum();
                pi.prob(x, a) * (mdp.cost(x, a) + next)
            }).sum();
            prop_assert!((v[x] - rhs).abs() < 1e-8);
        }
    }

    #[test]
    fn simulation_is_deterministic_and_well_formed(seed in any::<u64>(), policy_seed in any::<u64>(), x0 in 0usize..3) {
        let mdp = paper_mdp();
        let pi = random_policy(&mdp, &mut ChaCha8Rng::seed_from_u64(policy_seed));
        let a = simulate_episode(&mdp, &pi, x0, seed);
        let b = simulate_episode(&mdp, &pi, x0, seed);
        prop_assert_eq!(&a, &b);
        prop_assert!(a.len() <= mdp.t_max());
        prop_assert_eq!(a.steps[0].state, x0);
        for w in a.steps.windows(2) {
            prop_assert_eq!(w[0].next_state, w[1].state);
        }
        for s in &a.steps {
            prop_assert!(mdp.p(s.state, s.action, s.next_state) > 0.0);
            prop_assert_eq!(s.cost, mdp.cost(s.state, s.action));
        }
        let last = a.steps.last().unwrap().next_state;
        prop_assert_eq!(a.terminal_state, last);
        prop_assert_eq!(a.hit_unsafe, mdp.is_unsafe(last));
        prop_assert!(a.truncated || mdp.is_terminal(last));
    }
}
