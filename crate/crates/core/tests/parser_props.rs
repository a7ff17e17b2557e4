mod common;

use std::time::{Duration, Instant};

use masmp_core::action::{ActionCommand, Verb};
use masmp_core::backend::{Backend, DecisionContext, GenerationRequest, OracleBackend};
use masmp_core::machine::symbolic_execute;
use masmp_core::output::{extract_actions, extract_strategies, validate_actions, ActionCandidate};
use masmp_core::sim::{observe, Player, WorldState};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{cfg, random_observations, random_prev, spec};

fn to_command(c: &ActionCandidate) -> ActionCommand {
    let verb = Verb::parse_loose(c.verb.as_deref().expect("oracle lines match the grammar")).unwrap();
    ActionCommand::new(verb, c.argument.as_deref())
}

#[test]
fn oracle_output_round_trips_on_1000_observations() {
    let start = Instant::now();
    let cfg = cfg();
    let spec = spec(&cfg);
    let oracle = OracleBackend::new(spec.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let observations = random_observations(&cfg, 99, 1000);
    assert_eq!(observations.len(), 1000);
    for (i, o) in observations.into_iter().enumerate() {
        let prev = random_prev(&spec, &mut rng);
        let expected = symbolic_execute(&spec, &o, prev.as_ref()).unwrap();
        let req = GenerationRequest::new("p").with_context(DecisionContext { observation: o, prev });
        let text = oracle.generate(&req).unwrap();

        let frags = extract_strategies(&text);
        assert_eq!(frags.len(), 1, "observation {i}");
        assert_eq!(frags[0], expected.variables, "observation {i}");
        assert_eq!(frags[0]["Tactic"], expected.state, "observation {i}");
        let actions: Vec<_> = extract_actions(&text).iter().map(to_command).collect();
        assert_eq!(actions, expected.actions, "observation {i}");
    }
    assert!(start.elapsed() < Duration::from_secs(10));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn parsing_is_total_on_arbitrary_bytes(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
        let text = String::from_utf8_lossy(&bytes);
        let frags = extract_strategies(&text);
        let cands = extract_actions(&text);
        prop_assert!(frags.iter().all(|f| !f.is_empty()));
        let cfg = cfg();
        let obs = observe(&WorldState::new(&cfg, 0), &cfg, Player::A);
        let (kept, report) = validate_actions(&cands, &cfg, &obs);
        prop_assert_eq!(report.verdicts.len(), cands.len());
        prop_assert_eq!(kept.len(), report.accepted);
    }

    #[test]
    fn parsing_is_total_on_line_soup(
        lines in proptest::collection::vec(
            prop_oneof![
                "\\[[A-Za-z_]{0,6}\\]:<[^\n]{0,6}>",
                "Action:[^\n]{0,16}",
                "Action: [A-Za-z]{0,7}\\([a-z_0-9 ]{0,8}\\)",
                "[^\n]{0,20}",
                Just(String::new()),
            ],
            0..40,
        )
    ) {
        let text = lines.join("\n");
        let frags = extract_strategies(&text);
        let cands = extract_actions(&text);
        // Every accepted fragment entry came from a well-formed line.
        for f in &frags {
            for (k, v) in f {
                let line = format!("[{k}]:<{v}>");
                prop_assert!(text.contains(&line));
            }
        }
        prop_assert!(cands.len() <= lines.len());
    }
}
