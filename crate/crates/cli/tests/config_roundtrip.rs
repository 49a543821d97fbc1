use kochergin_cli::ExperimentConfig;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_text_round_trips(
        seed in 0..=i64::MAX as u64,
        eta in 0.01f64..0.99,
        zeta in 0.001f64..0.2,
        t_max in 4000.0f64..1e4,
        qs in prop::collection::vec(100.0f64..5000.0, 1..4),
        minimal in any::<bool>(),
    ) {
        let mut c = ExperimentConfig::preset(if minimal { "minimal" } else { "desk" }).unwrap();
        c.seed = seed;
        c.roof.eta = eta;
        c.margin.zeta = zeta;
        c.correlation.t_max = t_max;
        c.badset.q_targets = qs;
        let text = c.to_toml();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.to_toml(), text);
    }
}

#[test]
fn seeds_beyond_toml_integers_are_rejected() {
    let mut c = ExperimentConfig::default();
    c.seed = u64::MAX;
    assert_eq!(c.validate().unwrap_err().exit_code(), 2);
}

#[test]
fn documented_config_is_the_desk_preset() {
    let doc = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../CONFIG.md")).unwrap();
    let block = doc.split("```toml\n").nth(1).unwrap().split("```").next().unwrap();
    assert_eq!(ExperimentConfig::from_toml(block).unwrap(), ExperimentConfig::default());
}
