mod common;

use proptest::prelude::*;
use scalesteg::solver::{exhaustive_min_l1, forward_check, solve_site, solve_sites};
use scalesteg::{build_embed_plan, ChannelSpec, DeltaMap, Family, PixelGrid, PlanOptions, ScaleFactor};

const CHANNELS: [(Family, bool); 5] = [
    (Family::Nearest, false),
    (Family::Bilinear, false),
    (Family::Bicubic, false),
    (Family::Bilinear, true),
    (Family::Bicubic, true),
];

fn channel() -> impl Strategy<Value = ChannelSpec> {
    (0..CHANNELS.len(), 5i64..=19).prop_map(|(c, n)| {
        let (family, aa) = CHANNELS[c];
        ChannelSpec::new(family, aa, ScaleFactor::new(n, 20).unwrap()).unwrap()
    })
}

fn full_resize_at(spec: &ChannelSpec, x: &PixelGrid, d: &DeltaMap, y: (usize, usize)) -> Option<i32> {
    let xp = x.apply_delta(d).ok()?;
    Some(scalesteg::resampler::resize(&xp, spec).unwrap().get(y.0, y.1) as i32)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solutions_are_minimal_exact_and_sign_pure(
        spec in channel(),
        seed in 0u64..10_000,
        picks in proptest::collection::vec((any::<prop::sample::Index>(), any::<bool>()), 8),
    ) {
        let x = common::random_cover(72, 72, 0, 255, seed);
        let plan = build_embed_plan(&x, &spec, PlanOptions::default()).unwrap();
        let r = plan.resampler();
        for (pick, up) in picks {
            let site = &plan.sites[pick.index(plan.sites.len())];
            let dy = if up { 1 } else { -1 };
            let dir = site.direction(dy);
            if dir.wet {
                prop_assert!(solve_site(r, &x, site, dy).is_err());
                continue;
            }
            let sol = solve_site(r, &x, site, dy).unwrap();
            prop_assert!(sol.verified, "site {:?} unsolved", site.y);
            prop_assert!(sol.deltas.iter().all(|&d| d == 0 || d.signum() == dy));
            for (k, &d) in sol.deltas.iter().enumerate() {
                prop_assert!(d == 0 || (dir.mask[k] && d.unsigned_abs() <= dir.bound as u32));
            }
            prop_assert!(sol.l1() <= dir.bound as u32 * dir.masked_count() as u32);
            let mut dm = DeltaMap::new(x.height(), x.width());
            for (p, &d) in site.support.iter().zip(&sol.deltas) {
                dm.add(p.row, p.col, d);
            }
            prop_assert_eq!(full_resize_at(&spec, &x, &dm, site.y), Some(site.y_value as i32 + dy));
            if dir.masked_count() <= 4 {
                prop_assert_eq!(exhaustive_min_l1(r, &x, site, dy), Some(sol.l1()));
            }
        }
    }

    /// The patched single-pixel evaluation agrees with a full resize for
    /// arbitrary (including mixed-sign and out-of-range) perturbations.
    #[test]
    fn forward_check_agrees_with_full_resize(
        spec in channel(),
        seed in 0u64..10_000,
        pick in any::<prop::sample::Index>(),
        deltas in proptest::collection::vec(-3i32..=3, 4),
        offset in -2i32..=2,
    ) {
        let x = common::random_cover(64, 64, 0, 255, seed);
        let plan = build_embed_plan(&x, &spec, PlanOptions::default()).unwrap();
        let site = &plan.sites[pick.index(plan.sites.len())];
        let deltas: Vec<i32> = deltas.into_iter().cycle().take(site.support.len()).collect();
        let mut dm = DeltaMap::new(x.height(), x.width());
        for (p, &d) in site.support.iter().zip(&deltas) {
            dm.add(p.row, p.col, d);
        }
        let truth = full_resize_at(&spec, &x, &dm, site.y);
        let probe = truth.unwrap_or(site.y_value as i32) + offset;
        let want = truth == Some(probe);
        prop_assert_eq!(forward_check(plan.resampler(), &x, site, &deltas, probe), want);
    }

    /// Requested changes land exactly; every other lattice value is untouched.
    #[test]
    fn batch_solve_changes_only_requested_sites(spec in channel(), seed in 0u64..10_000, density in 0.05f64..0.6) {
        let x = common::random_cover(80, 80, 0, 255, seed);
        let plan = build_embed_plan(&x, &spec, PlanOptions::default()).unwrap();
        let mut s = seed | 1;
        let changes: Vec<i8> = plan.sites.iter().map(|site| {
            s ^= s << 13; s ^= s >> 7; s ^= s << 17;
            let u = (s % 10_000) as f64 / 10_000.0;
            let sign = if s >> 40 & 1 == 1 { 1 } else { -1 };
            if u < density && !site.direction(sign).wet { sign as i8 } else { 0 }
        }).collect();
        let (delta, failed) = solve_sites(&plan, &x, &changes).unwrap();
        prop_assert!(failed.is_empty(), "{failed:?}");
        let before = plan.resampler().resize(&x).unwrap();
        let after = plan.resampler().resize(&x.apply_delta(&delta).unwrap()).unwrap();
        for (site, &c) in plan.sites.iter().zip(&changes) {
            let (u, v) = site.y;
            prop_assert_eq!(after.get(u, v) as i32, before.get(u, v) as i32 + c as i32);
        }
        let support: std::collections::HashSet<(usize, usize)> = plan.support_pixels().collect();
        prop_assert!(delta.iter().all(|(p, _)| support.contains(p)));
    }
}
