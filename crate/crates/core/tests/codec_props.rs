mod common;

use common::{brute_force_coset as brute_force, dense_h, gf2_mul as mul};
use proptest::prelude::*;
use scalesteg::codec::{
    bits_to_bytes, bytes_to_bits, embed_framed, extract_framed, simulate_optimal, solve_lambda, stc_embed_bits,
    syndrome, total_entropy, StcCode,
};
use scalesteg::cost::CostMap;

fn instance() -> impl Strategy<Value = (Vec<u8>, Vec<f64>, Vec<u8>, usize)> {
    (2usize..=16).prop_flat_map(|n| {
        (
            proptest::collection::vec(0u8..2, n),
            proptest::collection::vec(prop_oneof![9 => 0.01f64..10.0, 1 => Just(f64::INFINITY)], n),
            proptest::collection::vec(0u8..2, 1..=n.div_ceil(2)),
            2usize..=6,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn trellis_matches_brute_force((lsb, costs, msg, h) in instance(), first in any::<u32>()) {
        let code = StcCode::generate(h, 8, (first & ((1 << h) - 1)) | 1 | (1 << (h - 1)));
        let dense = dense_h(lsb.len(), msg.len(), &code);
        let want = brute_force(&dense, &lsb, &costs, &msg);
        match stc_embed_bits(&lsb, &costs, &msg, &code) {
            Ok(flips) => {
                let y: Vec<u8> = lsb.iter().zip(&flips).map(|(&b, &f)| b ^ f as u8).collect();
                prop_assert_eq!(&mul(&dense, &y), &msg);
                prop_assert_eq!(syndrome(&y, msg.len(), &code).unwrap(), msg.clone());
                let got: f64 = flips.iter().zip(&costs).filter(|(&f, _)| f).map(|(_, &c)| c).sum();
                prop_assert!(got.is_finite(), "wet flip");
                let want = want.expect("trellis found a solution brute force missed");
                prop_assert!((got - want).abs() <= 1e-9 * want.max(1.0), "trellis {got} vs {want}");
            }
            Err(_) => prop_assert!(want.is_none()),
        }
    }

    #[test]
    fn default_code_syndrome_holds(n in 40usize..400, seed in any::<u64>()) {
        let mut x = seed | 1;
        let mut next = || { x ^= x << 13; x ^= x >> 7; x ^= x << 17; x };
        let lsb: Vec<u8> = (0..n).map(|_| (next() & 1) as u8).collect();
        let costs: Vec<f64> = (0..n).map(|_| 0.1 + (next() % 1000) as f64 / 100.0).collect();
        let msg: Vec<u8> = (0..n / 3).map(|_| (next() & 1) as u8).collect();
        let code = StcCode::default();
        let flips = stc_embed_bits(&lsb, &costs, &msg, &code).unwrap();
        let y: Vec<u8> = lsb.iter().zip(&flips).map(|(&b, &f)| b ^ f as u8).collect();
        prop_assert_eq!(syndrome(&y, msg.len(), &code).unwrap(), msg.clone());
        prop_assert_eq!(mul(&dense_h(n, msg.len(), &code), &y), msg);
    }

    #[test]
    fn framed_messages_round_trip(bytes in proptest::collection::vec(any::<u8>(), 0..24), seed in any::<u64>()) {
        let n = 800;
        let mut x = seed | 1;
        let mut next = || { x ^= x << 13; x ^= x >> 7; x ^= x << 17; x };
        let lsb: Vec<u8> = (0..n).map(|_| (next() & 1) as u8).collect();
        let costs: Vec<f64> = (0..n).map(|_| 1.0 + (next() % 50) as f64).collect();
        let code = StcCode::default();
        let flips = embed_framed(&lsb, &costs, &bytes, &code).unwrap();
        let y: Vec<u8> = lsb.iter().zip(&flips).map(|(&b, &f)| b ^ f as u8).collect();
        prop_assert_eq!(extract_framed(&y, &code).unwrap(), bytes.clone());
        prop_assert_eq!(bits_to_bytes(&bytes_to_bits(&bytes)), bytes);
    }

    #[test]
    fn simulated_entropy_hits_payload(
        costs in proptest::collection::vec((0.05f64..20.0, prop_oneof![4 => 0.05f64..20.0, 1 => Just(f64::INFINITY)]), 5..200),
        frac in 0.01f64..0.95,
        seed: u64,
    ) {
        let map = CostMap {
            rho_plus: costs.iter().map(|c| c.0).collect(),
            rho_minus: costs.iter().map(|c| c.1).collect(),
        };
        let max: f64 = scalesteg::codec::max_payload(&map);
        let payload = frac * max;
        let lambda = solve_lambda(&map, payload).unwrap();
        let h = total_entropy(&map, lambda);
        prop_assert!((h - payload).abs() <= 1e-6 * payload, "entropy {h} vs {payload}");
        let changes = simulate_optimal(&map, payload, seed).unwrap();
        for (k, &c) in changes.iter().enumerate() {
            prop_assert!(!(c < 0 && map.rho_minus[k].is_infinite()));
        }
    }
}

/// Two sites, one bit: costs (1, inf) and (1, 1). The multiplier solves
/// H_b(q1) + H_3(q2) = 1 with q1 = e/(1+e), q2 = e/(1+2e), e = exp(-lambda).
#[test]
fn two_site_multiplier_matches_closed_form_root() {
    fn entropy(lambda: f64) -> f64 {
        let e = (-lambda).exp();
        let h = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
        let q1 = e / (1.0 + e);
        let q2 = e / (1.0 + 2.0 * e);
        h(q1) + h(1.0 - q1) + 2.0 * h(q2) + h(1.0 - 2.0 * q2)
    }
    // secant iteration, independent of the library's bisection
    let (mut a, mut b) = (0.5f64, 3.0f64);
    for _ in 0..100 {
        let (fa, fb) = (entropy(a) - 1.0, entropy(b) - 1.0);
        if fb == fa {
            break;
        }
        let c = b - fb * (b - a) / (fb - fa);
        a = b;
        b = c;
    }
    assert!((entropy(b) - 1.0).abs() < 1e-13);
    let map = CostMap {
        rho_plus: vec![1.0, 1.0],
        rho_minus: vec![f64::INFINITY, 1.0],
    };
    let lambda = solve_lambda(&map, 1.0).unwrap();
    assert!((lambda - b).abs() < 1e-9, "{lambda} vs {b}");
    assert_eq!(solve_lambda(&map, 0.0).unwrap(), f64::INFINITY);
    assert_eq!(solve_lambda(&map, 1.0 + 3f64.log2()).unwrap(), 0.0);
    assert!(solve_lambda(&map, 3.0).is_err());
}
