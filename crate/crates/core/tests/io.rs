mod common;

use common::{random_chain, random_subset, two_state};
use metastable::io::{chain_to_json, fmt_f64, parse_chain, read_chain, write_chain};
use metastable::models::curie_weiss::build_cw_mag;
use metastable::{Error, ReversibleChain};
use proptest::prelude::*;

fn assert_same(a: &ReversibleChain, b: &ReversibleChain) {
    assert_eq!(a.states(), b.states());
    for x in 0..a.len() {
        assert_eq!(a.mu()[x].to_bits(), b.mu()[x].to_bits(), "mu at {x}");
        assert_eq!(a.p(x, x).to_bits(), b.p(x, x).to_bits(), "self-loop at {x}");
        for (y, p) in a.neighbors(x) {
            assert_eq!(p.to_bits(), b.p(x, y).to_bits(), "p({x}, {y})");
        }
    }
}

#[test]
fn minimal_document_parses() {
    let text = r#"{"states": ["a", "b"], "edges": [{"from": "a", "to": "b", "p": 0.2}, {"from": "b", "to": "a", "p": 0.3}], "R": ["a"]}"#;
    let (chain, r) = parse_chain(text).unwrap();
    assert_eq!(r, Some(vec![0]));
    assert!((chain.p(0, 0) - 0.8).abs() < 1e-15);
    assert!((chain.mu()[0] - 0.6).abs() < 1e-14);
}

#[test]
fn unknown_states_and_bad_json_are_errors() {
    let text = r#"{"states": ["a", "b"], "edges": [{"from": "a", "to": "c", "p": 0.2}]}"#;
    assert!(matches!(parse_chain(text), Err(Error::UnknownState(s)) if s == "c"));
    let text = r#"{"states": ["a", "b"], "edges": [{"from": "a", "to": "b", "p": 0.2}, {"from": "b", "to": "a", "p": 0.3}], "R": ["z"]}"#;
    assert!(parse_chain(text).is_err());
    assert!(parse_chain("{\"states\": [").is_err());
}

#[test]
fn files_round_trip_bit_for_bit() {
    let dir = std::env::temp_dir().join(format!("metastable-io-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("mag.json");
    let chain = build_cw_mag(80, 1.5, 0.05).unwrap();
    let r: Vec<usize> = (0..20).collect();
    write_chain(&path, &chain, Some(&r)).unwrap();
    let (back, r_back) = read_chain(&path).unwrap();
    assert_same(&chain, &back);
    assert_eq!(r_back, Some(r));
    std::fs::remove_dir_all(&dir).unwrap();
    assert!(read_chain(dir.join("missing.json")).is_err());
}

#[test]
fn number_formatting() {
    assert_eq!(fmt_f64(0.0), "0");
    assert_eq!(fmt_f64(f64::INFINITY), "inf");
    assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
    assert_eq!(fmt_f64(f64::NAN), "nan");
    for v in [
        0.1,
        1.0 / 3.0,
        6.02214076e23,
        -2.5e-300,
        f64::MIN_POSITIVE,
        f64::MAX,
    ] {
        assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }
    let chain = two_state(0.2, 0.3);
    assert!(chain_to_json(&chain, None).unwrap().contains("\"mu\""));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn json_round_trip(seed in 0u64..10_000, n in 2usize..25) {
        let chain = random_chain(seed, n);
        let r = random_subset(&chain, seed);
        let text = chain_to_json(&chain, r.as_deref()).unwrap();
        let (back, r_back) = parse_chain(&text).unwrap();
        assert_same(&chain, &back);
        prop_assert_eq!(r_back, r);
    }

    #[test]
    fn formatting_round_trips(bits in any::<u64>()) {
        let v = f64::from_bits(bits);
        prop_assume!(v.is_finite());
        prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), if v == 0.0 { 0 } else { v.to_bits() });
    }
}
