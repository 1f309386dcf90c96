//! Randomized invariants of the precoders and rate model.

mod common;

use proptest::prelude::*;
use relay_ris::channel::{dbm_to_watts, watts_to_dbm, ChannelSet};
use relay_ris::rates::{effective_first_hop, effective_second_hop, phasors, relay_rate, sinrs};
use relay_ris::relay::{duality_precoder, zf_beamformer, FixedPointOptions, SinrTargets};
use relay_ris::waterfill::svd_waterfill;
use relay_ris::{CMatrix, C64};

fn dims() -> impl Strategy<Value = (usize, usize, u64)> {
    (1usize..=4).prop_flat_map(|k| (Just(k), k..=k + 3, any::<u64>()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn duality_meets_targets_below_zf_power(
        (k, n, seed) in dims(),
        etas in proptest::collection::vec(0.0f64..20.0, 4),
        sigma2 in 0.05f64..2.0,
    ) {
        let rows = common::gaussian(k, n, 1.0, &mut common::rng(seed));
        let targets = SinrTargets::new(etas[..k].to_vec());
        let dual = duality_precoder(&rows, &targets, sigma2, FixedPointOptions::default()).unwrap();
        for (got, want) in sinrs(&rows, &dual.u, sigma2).iter().zip(targets.as_slice()) {
            prop_assert!((got - want).abs() <= 1e-6 * want.max(1e-12) + 1e-12, "{got} vs {want}");
        }
        if let Ok(zf) = zf_beamformer(&rows, &targets, sigma2) {
            prop_assert!(dual.u.norm_squared() <= zf.norm_squared() * (1.0 + 1e-9) + 1e-12);
            let hu = &rows * &zf;
            let desired = (0..k).map(|i| hu[(i, i)].norm_sqr()).fold(0.0, f64::max);
            for i in 0..k {
                for j in 0..k {
                    if i != j {
                        prop_assert!(hu[(i, j)].norm_sqr() <= 1e-9 * desired.max(1e-300));
                    }
                }
            }
        }
    }

    #[test]
    fn waterfilled_precoder_hits_relay_rate(
        (k, n, seed) in dims(),
        extra in 0usize..3,
        rate in 0.1f64..4.0,
        sigma2 in 0.01f64..1.0,
    ) {
        let h = common::gaussian(n, k + extra, 1.0, &mut common::rng(seed));
        let (w, alloc) = svd_waterfill(&h, k, rate, sigma2).unwrap();
        let achieved = relay_rate(&h, &w, sigma2);
        prop_assert!((achieved - 2.0 * k as f64 * rate).abs() <= 1e-8 * 2.0 * k as f64 * rate);
        prop_assert!(alloc.powers.iter().all(|&p| p >= 0.0));
        prop_assert!((w.norm_squared() - alloc.total_power()).abs() <= 1e-9 * alloc.total_power());
    }

    #[test]
    fn relay_rate_grows_with_beam_scaling(seed in any::<u64>(), scale in 1.0f64..10.0) {
        let mut r = common::rng(seed);
        let h = common::gaussian(3, 4, 1.0, &mut r);
        let w = common::gaussian(4, 2, 1.0, &mut r);
        let base = relay_rate(&h, &w, 1.0);
        prop_assert!(base >= 0.0);
        prop_assert!(relay_rate(&h, &(&w * C64::from(scale)), 1.0) >= base - 1e-12);
    }

    #[test]
    fn reflected_paths_vanish_without_ris_links(seed in any::<u64>(), idx in proptest::collection::vec(0u16..4, 5)) {
        let ch = common::random_channels(3, 2, 5, 2, seed);
        let cut = ChannelSet { h_ir: CMatrix::zeros(2, 5), h_i: CMatrix::zeros(2, 5), ..ch.clone() };
        let p = phasors(&idx, 2);
        prop_assert_eq!(effective_first_hop(&cut, &p), ch.h_tr.clone());
        prop_assert_eq!(effective_second_hop(&cut, &p), ch.h_r.clone());
    }

    #[test]
    fn dbm_round_trip(w in 1e-12f64..1e3) {
        prop_assert!((dbm_to_watts(watts_to_dbm(w)) / w - 1.0).abs() < 1e-12);
    }
}
