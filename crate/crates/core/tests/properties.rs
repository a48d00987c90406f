use fee_market_core::best_response::best_response_scan;
use fee_market_core::eo::*;
use fee_market_core::sim::greedy_validate;
use fee_market_core::uc::*;
use fee_market_core::MarketParams;
use proptest::prelude::*;

fn market() -> impl Strategy<Value = MarketParams> {
    (0.2f64..6.0, 0.2f64..3.0).prop_map(|(l, k)| MarketParams::new(l, k))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn uc_bid_properties(p in market(), a in 0.0f64..20.0, b in 0.0f64..20.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let r = uc_bid_rate(&p);
        // strictly below one until exp(-r t) underflows against 1 in f64
        prop_assert!((0.0..=1.0).contains(&uc_bid(hi, &p)));
        if r * lo <= 30.0 {
            prop_assert!(uc_bid(lo, &p) < 1.0);
        }
        prop_assert!(uc_bid(lo, &p) <= uc_bid(hi, &p));
        if hi - lo > 1e-6 && hi < 5.0 {
            prop_assert!(uc_bid(lo, &p) < uc_bid(hi, &p));
        }
        prop_assert_eq!(uc_bid(0.0, &p), 0.0);
        let far = 40.0 / r;
        if far <= MAX_POOL_TIME {
            prop_assert!(uc_bid(far, &p) > 1.0 - 1e-9);
        }
        // continuity: a small step in t moves the bid by at most rate * step
        let step = 1e-7;
        prop_assert!(uc_bid(lo + step, &p) - uc_bid(lo, &p) <= uc_bid_rate(&p) * step * (1.0 + 1e-6) + 1e-15);
    }

    #[test]
    fn eo_bid_properties(p in market(), frac in 0.0f64..0.999, a in 0.0f64..10.0, b in 0.0f64..10.0) {
        let ts = ThresholdTime::Finite(frac * p.capacity);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (blo, bhi) = (eo_bid(lo, ts, &p).unwrap(), eo_bid(hi, ts, &p).unwrap());
        prop_assert!((0.0..=1.0).contains(&blo) && (0.0..=1.0).contains(&bhi));
        if uc_bid_rate(&p) * lo <= 30.0 {
            prop_assert!(blo < 1.0);
        }
        prop_assert!(blo <= bhi);
        prop_assert_eq!(eo_bid(0.0, ts, &p).unwrap(), 0.0);
        let far = frac * p.capacity + 40.0 / uc_bid_rate(&p);
        if far <= MAX_POOL_TIME {
            prop_assert!(eo_bid(far, ts, &p).unwrap() > 1.0 - 1e-9);
        }
    }

    #[test]
    fn hazard_ordering(p in market(), f1 in 0.0f64..0.999, f2 in 0.0f64..0.999, t in 0.0f64..8.0) {
        let (lo, hi) = if f1 < f2 { (f1, f2) } else { (f2, f1) };
        let k = p.capacity;
        let b_lo = eo_bid(t, ThresholdTime::Finite(lo * k), &p).unwrap();
        let b_hi = eo_bid(t, ThresholdTime::Finite(hi * k), &p).unwrap();
        prop_assert!(b_lo <= b_hi + 1e-12);
    }

    #[test]
    fn eo_w_nonincreasing(p in market(), eta in 0.0f64..1.0, l in -2.0f64..4.0, s1 in -3.0f64..3.0, s2 in -3.0f64..3.0) {
        let q = p.with_eta(eta);
        let (lo, hi) = if s1 < s2 { (s1, s2) } else { (s2, s1) };
        prop_assert!(eo_w(hi, l, &q) <= eo_w(lo, l, &q) + 1e-15);
        prop_assert!((0.0..=1.0).contains(&eo_w(lo, l, &q)));
        prop_assert_eq!(eo_w(lo, -1.0, &q), uc_w(lo, &q));
    }

    #[test]
    fn greedy_validation_respects_capacity(pool in 0.0f64..10.0, k in 0.1f64..3.0, cells in 100usize..5000) {
        let dt = k / cells as f64;
        let v = greedy_validate(pool, k, dt);
        prop_assert!(v.validated_mass <= k + 1e-9);
        prop_assert!(v.validated_mass <= pool + 1e-9);
        // validated cells are the newest ones, contiguous from the top
        prop_assert_eq!(v.first_validated_cell() + v.validated_cells, v.full_cells);
        // the next older cell would not have fit
        if v.validated_cells < v.full_cells {
            prop_assert!(v.validated_mass + dt > k - 1e-9);
        }
    }

    #[test]
    fn deviation_payoff_single_peaked(p in market(), frac in 0.0f64..0.95, t in 0.0f64..4.0) {
        let p = p.with_cost(0.0);
        for ts in [ThresholdTime::NeverSuspend, ThresholdTime::Finite(frac * p.capacity)] {
            let scan = best_response_scan(t, ts, &p, 401).unwrap();
            prop_assert!(scan.single_peaked(1e-9));
            prop_assert!(scan.peaks_at_zero(1e-9));
        }
    }

    #[test]
    fn stationary_cdf_is_a_cdf(l in 0.2f64..6.0, k in 0.2f64..3.0, frac in 0.0f64..0.999, a in 0.0f64..10.0, b in 0.0f64..10.0) {
        let p = MarketParams::new(l, k);
        let tstar = frac * k;
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (flo, fhi) = (stationary_cdf(lo, tstar, &p).unwrap(), stationary_cdf(hi, tstar, &p).unwrap());
        prop_assert!((0.0..=1.0).contains(&flo) && flo <= fhi + 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn miner_surplus_shape(l in 0.3f64..5.0, k in 0.3f64..3.0) {
        let p = MarketParams::new(l, k);
        let n = 60;
        let m: Vec<f64> = (0..=n).map(|i| miner_surplus((k * i as f64 / n as f64).min(k), &p).unwrap()).collect();
        prop_assert!(m.iter().all(|&v| v >= 0.0));
        prop_assert!(m.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(m.windows(3).all(|w| w[0] - 2.0 * w[1] + w[2] >= -1e-9));
        // decreasing in lambda and capacity at fixed threshold
        let tstar = 0.5 * k;
        let base = miner_surplus(tstar, &p).unwrap();
        prop_assert!(miner_surplus(tstar, &MarketParams::new(l * 1.1, k)).unwrap() <= base + 1e-12);
        prop_assert!(miner_surplus(tstar, &MarketParams::new(l, k * 1.1)).unwrap() <= base + 1e-12);
    }

    #[test]
    fn eo_bid_convex_in_threshold(l in 0.3f64..5.0, k in 0.3f64..3.0, t_frac in 0.0f64..0.9) {
        let p = MarketParams::new(l, k);
        let t = t_frac * k;
        let n = 40;
        let lo = t;
        let hi = 0.999 * k;
        let bids: Vec<f64> = (0..=n)
            .map(|i| eo_bid(t, ThresholdTime::Finite(lo + (hi - lo) * i as f64 / n as f64), &p).unwrap())
            .collect();
        prop_assert!(bids.windows(3).all(|w| w[0] - 2.0 * w[1] + w[2] >= -1e-9));
    }

    #[test]
    fn threshold_solves_profit_condition(l in 0.3f64..5.0, c in 0.01f64..1.0, y in 0.0f64..0.2) {
        let p = MarketParams::new(l, 1.0).with_cost(c).with_reward(y);
        match equilibrium_threshold(&p).unwrap() {
            ThresholdTime::NeverSuspend => prop_assert!(l * y > c),
            ThresholdTime::NeverOperate => prop_assert!(l * (1.0 + y) <= c),
            ThresholdTime::Finite(v) => {
                prop_assert!((0.0..1.0).contains(&v));
                let profit = l * (miner_surplus(v, &p).unwrap() + y) - c;
                prop_assert!(v == 0.0 && profit >= 0.0 || profit.abs() < 1e-9);
            }
        }
    }
}
