mod common;

use scalesteg::resampler::resize;

#[test]
fn resampler_matches_exact_oracle() {
    let cases = common::golden_cases();
    assert_eq!(cases.len(), 150);
    let mut bad = Vec::new();
    for case in &cases {
        let got = resize(&case.input, &case.spec).unwrap();
        assert_eq!(got.dims(), case.expected.dims(), "{}", case.name);
        let diff = got
            .data()
            .iter()
            .zip(case.expected.data())
            .filter(|(a, b)| a != b)
            .count();
        if diff > 0 {
            bad.push((case.name.clone(), diff));
        }
    }
    assert!(bad.is_empty(), "mismatching cases: {bad:?}");
}
