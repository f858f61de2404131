//! Cross-engine agreement on tiny networks.

use bnnverify::falsifier::{falsify, greedy_attack, AttackConfig};
use bnnverify::synth::tiny_instance;
use bnnverify::verifier::cnf::{export_cnf, first_layer_phases, forward_from_phases};
use bnnverify::verifier::dpll::solve;
use bnnverify::verifier::{
    bab_verify, brute_force_verify, ibp_propagate, verify_ibp, BabConfig, IntervalTensor, Verdict,
};
use bnnverify::vnnlib::{check_witness, RobustnessProperty};
use bnnverify::Network;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid_points(prop: &RobustnessProperty) -> Vec<Vec<f64>> {
    let b = prop.integer_bounds().unwrap();
    let mut out = Vec::new();
    let mut x: Vec<f64> = b.iter().map(|r| r.0).collect();
    loop {
        out.push(x.clone());
        let mut i = x.len();
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if x[i] < b[i].1 {
                x[i] += 1.0;
                break;
            }
            x[i] = b[i].0;
        }
    }
}

fn violates(net: &Network, prop: &RobustnessProperty, x: &[f64]) -> bool {
    let y = net.forward_flat(x).unwrap();
    let t = prop.target_label;
    y.iter().enumerate().any(|(j, &v)| j != t && v >= y[t])
}

#[test]
fn bab_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut tally = [0usize; 2];
    for i in 0..240 {
        let eps = [0.0, 1.0, 2.0][i % 3];
        let (net, prop) = tiny_instance(&mut rng, eps);
        let truth = brute_force_verify(&net, &prop).unwrap();
        let bab = bab_verify(&net, &prop, &BabConfig::default()).unwrap();
        assert_eq!(truth.verdict.as_str(), bab.verdict.as_str(), "instance {i}");
        for r in [&truth, &bab] {
            if let Some(w) = r.verdict.witness() {
                assert!(check_witness(&net, &prop, w).unwrap(), "instance {i}");
            }
        }
        tally[usize::from(matches!(truth.verdict, Verdict::Falsified(_)))] += 1;
        if verify_ibp(&net, &prop).unwrap().verdict == Verdict::Verified {
            assert_eq!(truth.verdict, Verdict::Verified);
        }
        if let Some(w) = greedy_attack(&net, &prop, &AttackConfig::default()).unwrap() {
            assert!(check_witness(&net, &prop, &w).unwrap());
            assert!(matches!(truth.verdict, Verdict::Falsified(_)));
        }
    }
    // Both outcomes are exercised.
    assert!(tally[0] > 20 && tally[1] > 20, "{tally:?}");
}

#[test]
fn ibp_bounds_contain_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..50 {
        let eps = rng.random_range(0..=3) as f64;
        let (net, prop) = tiny_instance(&mut rng, eps);
        let bounds = ibp_propagate(&net, &IntervalTensor::from_property(&net, &prop).unwrap()).unwrap();
        for _ in 0..10_000 {
            let x: Vec<f64> = prop
                .input_bounds
                .iter()
                .map(|&(lo, hi)| if lo == hi { lo } else { rng.random_range(lo..=hi) })
                .collect();
            let y = net.forward_flat(&x).unwrap();
            for (b, v) in bounds.bounds.iter().zip(&y) {
                assert!(b.contains(*v), "{v} outside [{}, {}]", b.lo, b.hi);
            }
        }
    }
}

#[test]
fn cnf_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut cases = 0;
    let mut tally = [0usize; 4];
    while cases < 60 {
        let eps = [0.0, 1.0, 2.0][cases % 3];
        let (net, prop) = tiny_instance(&mut rng, eps);
        let points = grid_points(&prop);
        let export = export_cnf(&net, &prop, None).unwrap();
        let model = solve(&export.formula);
        let any = points.iter().any(|x| violates(&net, &prop, x));
        assert_eq!(model.is_some(), any);
        tally[usize::from(any)] += 1;
        if let Some(m) = model {
            let w = export.decode_witness(&net, &m).unwrap();
            assert!(check_witness(&net, &prop, &w).unwrap());
        }
        // Fixed phases: satisfiable iff some grid point with those phases violates.
        let phases: Vec<Vec<bool>> = points
            .iter()
            .map(|x| first_layer_phases(&net, x).unwrap())
            .collect();
        if phases[0].is_empty() {
            continue;
        }
        let pick = &phases[rng.random_range(0..phases.len())];
        let fixed = export_cnf(&net, &prop, Some(pick)).unwrap();
        let expected = points
            .iter()
            .zip(&phases)
            .any(|(x, p)| p == pick && violates(&net, &prop, x));
        assert_eq!(solve(&fixed.formula).is_some(), expected);
        tally[2 + usize::from(expected)] += 1;
        cases += 1;
    }
    assert!(tally.iter().all(|&n| n >= 5), "{tally:?}");
}

#[test]
fn pure_binary_phase_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut cases = 0;
    while cases < 50 {
        let (net, mut prop) = tiny_instance(&mut rng, 1.0);
        let k = match first_layer_phases(&net, &prop.center()) {
            Ok(p) if !p.is_empty() && p.len() <= 10 => p.len(),
            _ => continue,
        };
        // Non-integer bounds leave the first layer opaque.
        for b in prop.input_bounds.iter_mut() {
            b.0 -= 0.5;
        }
        for mask in 0..(1u32 << k) {
            let phases: Vec<bool> = (0..k).map(|i| mask >> i & 1 == 1).collect();
            let y = forward_from_phases(&net, &phases).unwrap();
            let t = prop.target_label;
            let expected = y.iter().enumerate().any(|(j, &v)| j != t && v >= y[t]);
            let f = export_cnf(&net, &prop, Some(&phases)).unwrap();
            assert_eq!(solve(&f.formula).is_some(), expected);
        }
        cases += 1;
    }
}

#[test]
fn ball_nesting() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..40 {
        let (net, prop) = tiny_instance(&mut rng, 1.0);
        let center = prop.center();
        let img = bnnverify::Tensor::new(net.input_shape().to_vec(), center).unwrap();
        let mut falsified = false;
        for eps in [0.0, 1.0, 2.0] {
            let p = RobustnessProperty::around(&img, eps, prop.target_label, net.num_classes(), false).unwrap();
            if bnnverify::verifier::brute::grid_points(&p).unwrap() > 200_000 {
                break;
            }
            let v = brute_force_verify(&net, &p).unwrap().verdict;
            if falsified {
                assert!(matches!(v, Verdict::Falsified(_)));
            }
            falsified |= matches!(v, Verdict::Falsified(_));
            if let Some(w) = falsify(&net, &p, &AttackConfig::default()).unwrap() {
                assert!(check_witness(&net, &p, &w).unwrap());
                assert!(falsified);
            }
        }
    }
}
