use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xbar_core::engine::{baseline_traces, infer_reduced, LayerTrace, TerminationPolicy};
use xbar_core::fixed::digit_unchecked;
use xbar_core::hwmodel::*;
use xbar_core::zoo;

#[test]
fn crossbar_matches_digit_dot_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10_000 {
        let bits: u8 = rng.gen_range(2..=16);
        let k = rng.gen_range(1..=128);
        let wmax = (1i32 << (bits - 1)) - 1;
        let w: Vec<i32> = (0..k).map(|_| rng.gen_range(-wmax..=wmax)).collect();
        let d: Vec<i8> = (0..k).map(|_| rng.gen_range(-1..=1)).collect();
        let slices: Vec<_> = w
            .iter()
            .map(|&x| slice_weight(x, bits, 2).unwrap())
            .collect();
        let want: i64 = d.iter().zip(&w).map(|(&a, &b)| a as i64 * b as i64).sum();
        assert_eq!(crossbar_mac_faithful(&d, &slices, 2).unwrap(), want);
    }
}

#[test]
fn crossbar_reproduces_each_iteration_of_a_mac() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..500 {
        let k = rng.gen_range(1..=64);
        let a: Vec<i32> = (0..k).map(|_| rng.gen_range(-255..=255)).collect();
        let w: Vec<i32> = (0..k).map(|_| rng.gen_range(-127..=127)).collect();
        let slices: Vec<_> = w.iter().map(|&x| slice_weight(x, 8, 2).unwrap()).collect();
        let mut total = 0i64;
        for pos in (0..9).rev() {
            let d: Vec<i8> = a.iter().map(|&x| digit_unchecked(x as i64, pos)).collect();
            total += crossbar_mac_faithful(&d, &slices, 2).unwrap() << pos;
        }
        assert_eq!(
            total,
            a.iter()
                .zip(&w)
                .map(|(&x, &y)| x as i64 * y as i64)
                .sum::<i64>()
        );
    }
}

#[test]
fn baseline_report_ignores_policy_path() {
    let model = zoo::lenet5(8).unwrap();
    let cfg = HwConfig::default();
    let plan = map_network(&model, &cfg).unwrap();
    let img = zoo::synthetic_images(model.input_shape, 1, 10, 3)
        .prepare(&model)
        .unwrap();
    let run = infer_reduced(&model, &img[0].pixels, &TerminationPolicy::exact(), None).unwrap();
    let a = evaluate(&model, &plan, &[run.traces], &cfg, false).unwrap();
    let b = evaluate(&model, &plan, &[baseline_traces(&model)], &cfg, false).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unreduced_comparison_costs_only_overhead() {
    let model = zoo::cifar_quick(16).unwrap();
    let cfg = HwConfig::default();
    let plan = map_network(&model, &cfg).unwrap();
    let c = compare(&model, &plan, &cfg, &[baseline_traces(&model)]).unwrap();
    assert!((c.throughput_ratio - 1.0).abs() < 1e-12);
    assert!(c.energy_efficiency_ratio < 1.0);
    assert!(c.area_overhead > 0.0);
}

fn shrink(traces: &[LayerTrace], seed: u64, p: f64) -> Vec<LayerTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = traces.to_vec();
    for t in out.iter_mut() {
        for e in t.executed.iter_mut() {
            if *e > 1 && rng.gen_bool(p) {
                *e = rng.gen_range(1..*e);
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn fewer_iterations_never_cost_more(seed in any::<u64>(), p in 0.0f64..1.0, bits in prop::sample::select(vec![8u8, 16])) {
        let model = zoo::lenet5(bits).unwrap();
        let cfg = HwConfig::default();
        let plan = map_network(&model, &cfg).unwrap();
        let base = inject_reduction(&model, 0.3).unwrap();
        let less = shrink(&base, seed, p);
        let a = evaluate(&model, &plan, &[base], &cfg, true).unwrap();
        let b = evaluate(&model, &plan, &[less], &cfg, true).unwrap();
        prop_assert!(b.timing.frame_latency_ns <= a.timing.frame_latency_ns);
        prop_assert!(b.energy.total_j <= a.energy.total_j * (1.0 + 1e-12));
    }
}
