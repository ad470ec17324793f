use super::*;
use crate::seq::MaskSet;

fn nae3_spec() -> LOSpec {
    // Three latents over {1,2,3}, one NAE observation on (0,1,2).
    LOSpec::identity(
        3,
        3,
        LOSpec::uniform_prior(3),
        vec![ObsFn::Nae { triple: [0, 1, 2] }],
    )
    .unwrap()
}

#[test]
fn nae_eval_cases() {
    assert_eq!(nae_eval(2, 2, 2).unwrap(), 0);
    assert_eq!(nae_eval(1, 2, 2).unwrap(), 1);
    assert!(matches!(nae_eval(0, 1, 1), Err(Error::UnexpectedMask { pos: 0 })));
}

#[test]
fn nae_sum_over_all_27_inputs() {
    // Exhaustive: 27 assignments for m = 3, exactly 3 are all-equal.
    let mut sum = 0u32;
    for a in 1..=3 {
        for b in 1..=3 {
            for c in 1..=3 {
                sum += nae_eval(a, b, c).unwrap() as u32;
            }
        }
    }
    assert_eq!(sum, 24);
}

#[test]
fn nae_obs_encoding() {
    let obs = ObsFn::Nae { triple: [0, 1, 2] };
    // All-equal: output 0, stored as token 1.
    assert_eq!(obs.prob(&[1, 1, 1], 1), 1.0);
    assert_eq!(obs.prob(&[1, 1, 1], 2), 0.0);
    // Not-all-equal: output 1, stored as token 2.
    assert_eq!(obs.prob(&[1, 2, 1], 2), 1.0);
}

#[test]
fn nae_satisfaction_rate_matches_enumeration() {
    // gamma = 24/27 = 8/9 for m = 3, k = 3; Monte Carlo within 0.01.
    let spec = NaeSatSpec::random(9, 30, 3, &RngHandle::new(11, 0)).unwrap();
    let lo = spec.to_lospec().unwrap();
    let mut sat = 0u64;
    let mut total = 0u64;
    for rep in 0..4000u64 {
        let x = lo.sample(&RngHandle::new(12, rep));
        for j in 0..lo.n_obs() {
            total += 1;
            if x.get(lo.obs_position(j)) == 2 {
                sat += 1;
            }
        }
    }
    let rate = sat as f64 / total as f64;
    assert!((rate - 8.0 / 9.0).abs() < 0.01, "rate={rate}");
}

#[test]
fn lo_sample_observations_consistent_with_latents() {
    let lo = nae3_spec();
    for rep in 0..50 {
        let x = lo.sample(&RngHandle::new(3, rep));
        assert!(!x.has_mask());
        let latents: Vec<u32> = (0..3).map(|i| x.get(lo.latent_position(i))).collect();
        let expect = nae_eval(latents[0], latents[1], latents[2]).unwrap() as u32 + 1;
        assert_eq!(x.get(lo.obs_position(0)), expect);
    }
}

#[test]
fn parity_hand_case() {
    // eta = 0, both latent tokens 1 (bit 1): parity 1^1 = 0, even -> token 2.
    let obs = ObsFn::Parity { support: vec![0, 1], eta: 0.0 };
    assert_eq!(obs.prob(&[1, 1], 2), 1.0);
    assert_eq!(obs.prob(&[1, 1], 1), 0.0);
    // One bit set: odd -> token 1.
    assert_eq!(obs.prob(&[1, 2], 1), 1.0);
}

#[test]
fn parity_noise_rates() {
    let mut rng = RngHandle::new(21, 0).rng();
    // eta = 1/2: uniform output.
    let obs = ObsFn::Parity { support: vec![0, 2], eta: 0.5 };
    let ones = (0..100_000)
        .filter(|_| obs.sample(&[1, 2, 1], 2, &mut rng) == 1)
        .count() as f64;
    assert!((ones / 100_000.0 - 0.5).abs() < 0.01);
    // eta = 0.1 with fixed latents: flip rate 0.1 +- 0.01.
    let obs = ObsFn::Parity { support: vec![0, 1], eta: 0.1 };
    let clean = 2; // latents (1,1): even
    let flips = (0..100_000)
        .filter(|_| obs.sample(&[1, 1], 2, &mut rng) != clean)
        .count() as f64;
    assert!((flips / 100_000.0 - 0.1).abs() < 0.01);
}

#[test]
fn slab_hand_cases() {
    // Wide slab contains everything.
    let wide = ObsFn::Slab { direction: vec![3.0], beta: 10.0 };
    assert_eq!(wide.prob(&[1], 2), 1.0);
    // Zero-width slab excludes generic points.
    let zero = ObsFn::Slab { direction: vec![0.7], beta: 0.0 };
    assert_eq!(zero.prob(&[1], 1), 1.0);
    // |<(1,1,1,1), +1^4>| = 4 > beta sqrt(N) = 2 -> outside -> token 1.
    let o = ObsFn::Slab { direction: vec![1.0; 4], beta: 1.0 };
    assert_eq!(o.prob(&[1, 1, 1, 1], 1), 1.0);
}

#[test]
fn posterior_no_observations_is_prior() {
    let lo = LOSpec::identity(1, 2, LOSpec::uniform_prior(2), vec![]).unwrap();
    let x = TokenSeq::all_mask(1, 2);
    let t = lo.exact_posterior(&x, DEFAULT_ENUM_BUDGET).unwrap();
    assert_eq!(t.row(0), &[0.5, 0.5]);
}

#[test]
fn posterior_fully_unmasked_has_no_active_rows() {
    let lo = nae3_spec();
    let x = lo.sample(&RngHandle::new(5, 0));
    let t = lo.exact_posterior(&x, DEFAULT_ENUM_BUDGET).unwrap();
    assert!(t.active_positions().is_empty());
}

#[test]
fn posterior_nae_all_latents_masked_is_uniform() {
    // 24 of 27 assignments survive "not-all-equal"; by symmetry each latent
    // marginal is uniform.
    let lo = nae3_spec();
    let mut x = TokenSeq::all_mask(4, 3);
    x.set(3, 2); // observation: not-all-equal
    let t = lo.exact_posterior(&x, DEFAULT_ENUM_BUDGET).unwrap();
    for pos in 0..3 {
        for v in 0..3 {
            assert!((t.row(pos)[v] - 1.0 / 3.0).abs() < 1e-12);
        }
    }
}

#[test]
fn posterior_rows_normalized() {
    let spec = NaeSatSpec::random(6, 12, 3, &RngHandle::new(8, 0)).unwrap();
    let lo = spec.to_lospec().unwrap();
    for rep in 0..20u64 {
        let x0 = lo.sample(&RngHandle::new(9, rep));
        let mut r = RngHandle::new(10, rep).rng();
        let mask: MaskSet = (0..lo.len()).filter(|_| r.gen::<f64>() < 0.5).collect();
        let masked = x0.apply_mask(&mask).unwrap();
        let t = lo.exact_posterior(&masked, DEFAULT_ENUM_BUDGET).unwrap();
        t.validate().unwrap();
        assert_eq!(t.active_positions(), masked.masked_positions());
    }
}

#[test]
fn posterior_budget_error_reports_size() {
    let spec = NaeSatSpec::random(30, 10, 3, &RngHandle::new(1, 0)).unwrap();
    let lo = spec.to_lospec().unwrap();
    let x = TokenSeq::all_mask(lo.len(), 3);
    match lo.exact_posterior(&x, DEFAULT_ENUM_BUDGET) {
        Err(Error::BudgetExceeded { required, budget }) => {
            assert!(required > budget);
        }
        other => panic!("expected budget error, got {other:?}"),
    }
}

#[test]
fn posterior_matches_atom_oracle() {
    // Independent oracle: enumerate the support and condition by summation.
    let spec = NaeSatSpec::random(5, 9, 3, &RngHandle::new(14, 0)).unwrap();
    let lo = spec.to_lospec().unwrap();
    let dist = lo.enumerate(1e7).unwrap();
    for rep in 0..30u64 {
        let x0 = lo.sample(&RngHandle::new(15, rep));
        let mut r = RngHandle::new(16, rep).rng();
        let mask: MaskSet = (0..lo.len()).filter(|_| r.gen::<f64>() < 0.6).collect();
        let masked = x0.apply_mask(&mask).unwrap();
        let ours = lo.exact_posterior(&masked, DEFAULT_ENUM_BUDGET).unwrap();
        let oracle = dist.conditional_marginals(&masked);
        for &pos in &masked.masked_positions() {
            for v in 0..3 {
                assert!(
                    (ours.row(pos)[v] - oracle.row(pos)[v]).abs() < 1e-10,
                    "rep={rep} pos={pos} v={v}: {} vs {}",
                    ours.row(pos)[v],
                    oracle.row(pos)[v]
                );
            }
        }
    }
}

#[test]
fn fast_path_matches_generic() {
    // Binary NAE specs qualify for the bit-parallel path; the generic
    // enumerator is the oracle, including on contradictory evidence.
    let spec = NaeSatSpec::random(6, 14, 2, &RngHandle::new(30, 0)).unwrap();
    let lo = spec.to_lospec().unwrap();
    assert!(NaeBitPosterior::try_new(&lo).is_some());
    for rep in 0..40u64 {
        let mut r = RngHandle::new(31, rep).rng();
        // Random (not necessarily consistent) partial assignments.
        let tokens: Vec<u32> = (0..lo.len())
            .map(|_| if r.gen::<f64>() < 0.5 { 0 } else { r.gen_range(1..=2) })
            .collect();
        let x = TokenSeq::new(tokens, 2).unwrap();
        let fast = lo.exact_posterior(&x, DEFAULT_ENUM_BUDGET).unwrap();
        let generic = lo.exact_posterior_generic(&x, DEFAULT_ENUM_BUDGET).unwrap();
        for &pos in &x.masked_positions() {
            for v in 0..2 {
                assert!(
                    (fast.row(pos)[v] - generic.row(pos)[v]).abs() < 1e-10,
                    "rep={rep} pos={pos} v={v}: fast={} generic={}",
                    fast.row(pos)[v],
                    generic.row(pos)[v]
                );
            }
        }
    }
}

#[test]
fn posterior_monte_carlo_consistency() {
    // Rejection sampling against the exact posterior, 3 sigma binomial.
    let spec = NaeSatSpec::random(6, 6, 2, &RngHandle::new(40, 0)).unwrap();
    let lo = spec.to_lospec().unwrap();
    let x0 = lo.sample(&RngHandle::new(41, 0));
    let mask: MaskSet = [0, 2, 3, 7, 9].into_iter().collect();
    let masked = x0.apply_mask(&mask).unwrap();
    let exact = lo.exact_posterior(&masked, DEFAULT_ENUM_BUDGET).unwrap();

    let mut r = RngHandle::new(42, 0).rng();
    let mut accepted = 0u64;
    let mut counts = vec![[0u64; 2]; lo.len()];
    for _ in 0..100_000 {
        let y = lo.sample_with(&mut r);
        let consistent = (0..lo.len())
            .all(|i| masked.is_masked(i) || masked.get(i) == y.get(i));
        if !consistent {
            continue;
        }
        accepted += 1;
        for &pos in &masked.masked_positions() {
            counts[pos][(y.get(pos) - 1) as usize] += 1;
        }
    }
    assert!(accepted > 500, "rejection acceptance too low: {accepted}");
    for &pos in &masked.masked_positions() {
        let p = exact.row(pos)[0];
        let freq = counts[pos][0] as f64 / accepted as f64;
        let sigma = (p * (1.0 - p) / accepted as f64).sqrt();
        assert!(
            (freq - p).abs() <= 3.0 * sigma + 1e-9,
            "pos={pos}: freq={freq} exact={p} sigma={sigma}"
        );
    }
}

#[test]
fn posterior_permutation_equivariance() {
    let spec = NaeSatSpec::random(5, 8, 2, &RngHandle::new(50, 0)).unwrap();
    let lo = spec.to_lospec().unwrap();
    let l = lo.len();
    // A fixed relabeling of positions.
    let rho: Vec<usize> = (0..l).map(|i| (i * 7 + 3) % l).collect();
    let lo2 = lo.relabel_positions(&rho).unwrap();

    let x0 = lo.sample(&RngHandle::new(51, 0));
    let mask: MaskSet = [1, 2, 5, 8, 11].into_iter().collect();
    let masked = x0.apply_mask(&mask).unwrap();

    let mut tokens2 = vec![0u32; l];
    for i in 0..l {
        tokens2[rho[i]] = masked.get(i);
    }
    let masked2 = TokenSeq::new(tokens2, 2).unwrap();

    let t1 = lo.exact_posterior(&masked, DEFAULT_ENUM_BUDGET).unwrap();
    let t2 = lo2.exact_posterior(&masked2, DEFAULT_ENUM_BUDGET).unwrap();
    for &pos in &masked.masked_positions() {
        for v in 0..2 {
            assert!((t1.row(pos)[v] - t2.row(rho[pos])[v]).abs() < 1e-12);
        }
    }
}

#[test]
fn parity_full_rank_recovers_latents() {
    // Noiseless singleton parities pin each latent bit exactly.
    let supports: Vec<Vec<usize>> = (0..4).map(|i| vec![i]).collect();
    let spec = ParitySpec { n_latent: 4, sparsity: 1, eta: 0.0, supports };
    let lo = spec.to_lospec().unwrap();
    let x0 = lo.sample(&RngHandle::new(60, 0));
    let mask: MaskSet = (0..4).collect(); // mask all latents
    let masked = x0.apply_mask(&mask).unwrap();
    let t = lo.exact_posterior(&masked, DEFAULT_ENUM_BUDGET).unwrap();
    for i in 0..4 {
        let truth = x0.get(i);
        assert!((t.prob(i, truth) - 1.0).abs() < 1e-12, "latent {i} not pinned");
    }
}

#[test]
fn contradictory_evidence_minimizes_violations() {
    // Single NAE observation claimed "all equal" (token 1) while the pinned
    // latents already disagree: no completion is consistent, so the posterior
    // must fall back to the fewest-violation set, which here is every
    // completion of the remaining latent.
    let lo = nae3_spec();
    let x = TokenSeq::new(vec![1, 2, 0, 1], 3).unwrap();
    let t = lo.exact_posterior(&x, DEFAULT_ENUM_BUDGET).unwrap();
    for v in 0..3 {
        assert!((t.row(2)[v] - 1.0 / 3.0).abs() < 1e-12);
    }
}

#[test]
fn config_json_roundtrip_and_strictness() {
    let json = r#"{"kind":"nae","n_latent":15,"n_obs":150,"vocab":2,"seed":7}"#;
    let cfg: DistribConfig = serde_json::from_str(json).unwrap();
    let lo = cfg.build().unwrap();
    assert_eq!(lo.len(), 165);
    assert_eq!(lo.n_latent(), 15);

    let padded = r#"{"kind":"nae","n_latent":20,"n_obs":280,"seed":1,"pad_len":212,"pad_token":2}"#;
    let cfg: DistribConfig = serde_json::from_str(padded).unwrap();
    let lo = cfg.build().unwrap();
    assert_eq!(lo.len(), 512);
    let x = lo.sample(&RngHandle::new(2, 0));
    assert!(x.tokens()[300..].iter().all(|&t| t == 2));

    let bad = r#"{"kind":"nae","n_latent":5,"n_obs":5,"seed":1,"wat":3}"#;
    assert!(serde_json::from_str::<DistribConfig>(bad).is_err());
}

#[test]
fn deterministic_structure_from_seed() {
    let a = NaeSatSpec::random(10, 50, 2, &RngHandle::new(99, 0)).unwrap();
    let b = NaeSatSpec::random(10, 50, 2, &RngHandle::new(99, 0)).unwrap();
    assert_eq!(a.triples, b.triples);
}
