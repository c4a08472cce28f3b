//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line; run with
//! `cargo test -p xbar-cli --test acceptance -- --nocapture` to see them.

use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xbar_core::engine::{
    accu_trajectory, infer_reduced, mac_bitserial, oracle_remaining, ReducedRunner, Termination,
    TerminationPolicy,
};
use xbar_core::estimator::{
    build_lut, extract_probabilities, lut_row, BitProbability, BoundsMode, KernelSums,
};
use xbar_core::fixed::dot_exact;
use xbar_core::hwmodel::{
    compare, crossbar_mac_faithful, inject_reduction, map_network, slice_weight, HwConfig,
};
use xbar_core::net::{infer_exact, LabeledImage};
use xbar_core::{zoo, NetworkModel};

fn verdict(name: &str, ok: bool, detail: &str) {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{name}: {detail}");
}

fn zoo_models() -> Vec<NetworkModel> {
    let mut v = Vec::new();
    for bits in [8, 16] {
        v.push(zoo::lenet5(bits).unwrap());
        v.push(zoo::cifar_quick(bits).unwrap());
    }
    v
}

fn toy_models(seed: u64, n: usize) -> Vec<NetworkModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let bits = rng.gen_range(4..=12);
            zoo::random_model(&mut rng, bits).unwrap()
        })
        .collect()
}

fn images(model: &NetworkModel, n: usize, seed: u64) -> Vec<LabeledImage> {
    zoo::synthetic_images(model.input_shape, n, model.num_classes as u8, seed)
        .prepare(model)
        .unwrap()
}

#[test]
fn bit_serial_equivalence() {
    let start = Instant::now();
    let exact = TerminationPolicy::exact();
    let mut mismatches = 0u64;
    let mut check = |a: &[i32], w: &[i32], bias: i64, bits: usize| {
        let t = mac_bitserial(a, w, None, &exact, bias, true, bits).unwrap();
        if t.final_accu != dot_exact(a, w).unwrap() + bias || t.iterations_executed != bits {
            mismatches += 1;
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..100_000 {
        let bits = rng.gen_range(2..=16usize);
        let signed = rng.gen_bool(0.5);
        let k = rng.gen_range(1..=64);
        let amax = (1i32 << (bits - signed as usize)) - 1;
        let amin = if signed { -amax } else { 0 };
        let wmax = (1i32 << (bits - 1)) - 1;
        let a: Vec<i32> = (0..k).map(|_| rng.gen_range(amin..=amax)).collect();
        let w: Vec<i32> = (0..k).map(|_| rng.gen_range(-wmax..=wmax)).collect();
        let bias = rng.gen_range(-(1i64 << 20)..=(1i64 << 20));
        check(&a, &w, bias, bits);
    }
    let random = 100_000;
    // exhaustive: 4-bit activations (unsigned and signed), 4-bit weights, k <= 3
    let mut exhaustive = 0u64;
    for (lo, hi) in [(0i32, 15i32), (-7, 7)] {
        for k in 1..=3u32 {
            let na = (hi - lo + 1) as u64;
            let nw = 15u64;
            for code in 0..(na * nw).pow(k) {
                let mut c = code;
                let mut a = [0i32; 3];
                let mut w = [0i32; 3];
                for j in 0..k as usize {
                    a[j] = lo + (c % na) as i32;
                    c /= na;
                    w[j] = -7 + (c % nw) as i32;
                    c /= nw;
                }
                check(&a[..k as usize], &w[..k as usize], 0, 4);
                exhaustive += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        "bit-serial equivalence",
        mismatches == 0 && secs < 60.0,
        &format!(
            "{random} random + {exhaustive} exhaustive MACs, {mismatches} mismatches, {secs:.1}s"
        ),
    );
}

#[test]
fn worked_example() {
    let a = [4, 12, 10];
    let w = [4, -8, -5];
    let traj = accu_trajectory(&a, &w, 0, 4).unwrap();
    let row = lut_row(KernelSums::of(&w), None, 4, BoundsMode::WorstCase, true).unwrap();
    let t = mac_bitserial(
        &a,
        &w,
        Some(&row),
        &TerminationPolicy::approx(0.5, BoundsMode::WorstCase),
        0,
        true,
        4,
    )
    .unwrap();
    let ok = traj == [-104, -120, -130, -130]
        && t.termination == Termination::Approx
        && t.iterations_executed == 2;
    verdict(
        "worked example",
        ok,
        &format!(
            "trajectory {traj:?}, T=0.5 worst case stops after iteration {} ({:?})",
            t.iterations_executed, t.termination
        ),
    );
}

#[test]
fn worst_case_zero_loss_bypass() {
    let policy = TerminationPolicy::relu(BoundsMode::WorstCase);
    let mut models = toy_models(200, 60);
    let toy = models.len();
    models.extend(zoo_models());
    let mut logit_mismatch = 0;
    let mut out_of_bounds = 0u64;
    let mut checked = 0u64;
    let mut rng = ChaCha8Rng::seed_from_u64(201);
    for (m, model) in models.iter().enumerate() {
        let lut = build_lut(model, None, BoundsMode::WorstCase).unwrap();
        let runner = ReducedRunner::new(model, &policy, Some(&lut)).unwrap();
        let inputs: Vec<_> = if m < toy {
            (0..3)
                .map(|_| zoo::random_input(&mut rng, model.input_shape, model.input_spec()))
                .collect()
        } else {
            images(model, 2, m as u64)
                .into_iter()
                .map(|i| i.pixels)
                .collect()
        };
        for x in &inputs {
            let exact = infer_exact(model, x).unwrap();
            if runner.infer(x).unwrap().logits != exact.logits {
                logit_mismatch += 1;
            }
            // remaining partial sum inside [Min_t, Max_t] on sampled MACs
            for i in model.mac_layers() {
                let layer = &model.layers[i];
                let d = &layer.desc;
                let input = if i == 0 { x } else { &exact.activations[i - 1] };
                let n = d.input_spec.iterations();
                let [_, oh, ow] = d.output_shape;
                let table = lut.for_layer(i).unwrap();
                let mut window = Vec::new();
                for _ in 0..8 {
                    let (oy, ox) = (rng.gen_range(0..oh), rng.gen_range(0..ow));
                    d.gather_window(input.data(), oy, ox, &mut window);
                    let z = rng.gen_range(0..d.out_channels());
                    let row = &table.channels[z];
                    for t in 1..n {
                        let r = oracle_remaining(&window, layer.kernel(z), t, n).unwrap();
                        checked += 1;
                        if r < row.min[t - 1] || r > row.max[t - 1] {
                            out_of_bounds += 1;
                        }
                    }
                }
            }
        }
    }
    verdict(
        "worst-case zero-loss bypass",
        logit_mismatch == 0 && out_of_bounds == 0,
        &format!(
            "{toy} toy + {} reference models, {logit_mismatch} logit mismatches, {out_of_bounds}/{checked} bound violations",
            models.len() - toy
        ),
    );
}

#[test]
fn statistical_degeneracy() {
    let mut models = toy_models(300, 50);
    models.extend(zoo_models());
    let mut differing = 0;
    for model in &models {
        let worst = build_lut(model, None, BoundsMode::WorstCase).unwrap();
        let full = BitProbability::full_span(model);
        let stat = build_lut(model, Some(&full), BoundsMode::Statistical).unwrap();
        if worst.layers != stat.layers {
            differing += 1;
        }
    }
    verdict(
        "statistical degeneracy",
        differing == 0,
        &format!("{} models, {differing} with differing tables", models.len()),
    );
}

#[test]
fn threshold_monotonicity() {
    let thresholds = [0.0, 0.2, 0.5, 0.8, 1.1];
    let mut models = toy_models(400, 20);
    models.push(zoo::lenet5(8).unwrap());
    models.push(zoo::cifar_quick(8).unwrap());
    let mut violations = 0;
    let mut runs = 0;
    for (m, model) in models.iter().enumerate() {
        let imgs = images(model, 4, 40 + m as u64);
        let probs = extract_probabilities(model, &imgs).unwrap();
        let worst = build_lut(model, None, BoundsMode::WorstCase).unwrap();
        let stat = build_lut(model, Some(&probs), BoundsMode::Statistical).unwrap();
        for bounds in [
            BoundsMode::WorstCase,
            BoundsMode::Statistical,
            BoundsMode::Oracle,
        ] {
            let lut = match bounds {
                BoundsMode::WorstCase => Some(&worst),
                BoundsMode::Statistical => Some(&stat),
                BoundsMode::Oracle => None,
            };
            for mode in ["relu", "approx", "combined"] {
                for img in &imgs {
                    let mut prev = u64::MAX;
                    for &t in &thresholds {
                        let p = match mode {
                            "relu" => TerminationPolicy::relu(bounds),
                            "approx" => TerminationPolicy::approx(t, bounds),
                            _ => TerminationPolicy::combined(t, bounds),
                        };
                        let out = infer_reduced(model, &img.pixels, &p, lut).unwrap();
                        let exec: u64 = out.stats.iter().map(|s| s.iterations_executed).sum();
                        if exec > prev {
                            violations += 1;
                        }
                        prev = exec;
                        runs += 1;
                    }
                }
            }
        }
    }
    verdict(
        "threshold monotonicity",
        violations == 0,
        &format!(
            "{runs} runs over {} models, {violations} violations",
            models.len()
        ),
    );
}

#[test]
fn crossbar_faithful_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut mismatches = 0;
    let cases = 10_000;
    for _ in 0..cases {
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
        if crossbar_mac_faithful(&d, &slices, 2).unwrap() != want {
            mismatches += 1;
        }
    }
    verdict(
        "crossbar-faithful path",
        mismatches == 0,
        &format!("{cases} cases, {mismatches} mismatches"),
    );
}

#[test]
fn model_level_ratios() {
    // (model, reduction, energy-efficiency target, throughput target)
    let cases = [
        (zoo::cifar_quick(16).unwrap(), 0.694, 2.9, 2.8),
        (zoo::lenet5(16).unwrap(), 0.785, 3.0, 4.5),
        (zoo::cifar_quick(8).unwrap(), 0.391, 1.4, 1.6),
        (zoo::lenet5(8).unwrap(), 0.454, 1.6, 1.9),
    ];
    let hw = HwConfig::default();
    let within = |got: f64, want: f64| (got / want - 1.0).abs() <= 0.2;
    let mut ok = true;
    let mut lines = Vec::new();
    for (i, (model, r, energy, thr)) in cases.iter().enumerate() {
        let plan = map_network(model, &hw).unwrap();
        let traces = vec![inject_reduction(model, *r).unwrap()];
        let c = compare(model, &plan, &hw, &traces).unwrap();
        ok &= within(c.energy_efficiency_ratio, *energy) && within(c.throughput_ratio, *thr);
        if i == 0 {
            ok &= (c.overhead_share - 0.034).abs() <= 0.02;
        }
        lines.push(format!(
            "{} energy x{:.2} (want {energy}) throughput x{:.2} (want {thr}) overhead {:.2}%",
            model.name,
            c.energy_efficiency_ratio,
            c.throughput_ratio,
            100.0 * c.overhead_share
        ));
    }
    verdict("model-level ratios", ok, &lines.join("; "));
}

#[test]
fn behavioral_reproduction() {
    // Needs trained, exported bundles; the zoo networks have random weights.
    match std::env::var("XBAR_BUNDLES") {
        Err(_) => println!(
            "SKIP behavioral reproduction: set XBAR_BUNDLES to a directory with trained cifar_quick/ and lenet5/ bundles"
        ),
        Ok(root) => {
            let root = std::path::Path::new(&root);
            let bin = env!("CARGO_BIN_EXE_xbar");
            let out = tempfile::tempdir().unwrap();
            let run = |model: &str, mode: &str, data: &str, tag: &str| -> serde_json::Value {
                let dir = out.path().join(tag);
                let st = Command::new(bin)
                    .args(["run", "--bits", "16", "--bounds", "stat", "--threshold", "0.8"])
                    .arg("--model")
                    .arg(root.join(model))
                    .arg("--dataset")
                    .arg(root.join(data))
                    .args(["--mode", mode, "--out"])
                    .arg(&dir)
                    .status()
                    .unwrap();
                assert!(st.success());
                serde_json::from_str(&std::fs::read_to_string(dir.join("results.json")).unwrap()).unwrap()
            };
            let c = run("cifar_quick", "combined", "cifar10", "c");
            let l = run("lenet5", "approx", "mnist", "l");
            let red_c = c["reduction"]["reduction_overall"].as_f64().unwrap();
            let drop_c = c["accuracy"]["drop"].as_f64().unwrap();
            let det = c["reduction"]["detection_rate"].as_f64().unwrap();
            let share = c["reduction"]["negative_share"].as_f64().unwrap();
            let red_l = l["reduction"]["reduction_overall"].as_f64().unwrap();
            let ok = (red_c - 0.694).abs() <= 0.10
                && drop_c <= 0.005
                && det >= 0.99
                && (share - 0.575).abs() <= 0.10
                && (red_l - 0.785).abs() <= 0.10;
            verdict(
                "behavioral reproduction",
                ok,
                &format!(
                    "cifar reduction {:.1}% drop {:.2}pp detection {:.2}% negative share {:.1}%; lenet reduction {:.1}%",
                    100.0 * red_c,
                    100.0 * drop_c,
                    100.0 * det,
                    100.0 * share,
                    100.0 * red_l
                ),
            );
        }
    }
}

#[test]
fn deterministic_results() {
    let bin = env!("CARGO_BIN_EXE_xbar");
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let out = dir.path().join(tag);
        let st = Command::new(bin)
            .args([
                "run",
                "--model",
                "zoo:lenet5",
                "--bits",
                "8",
                "--mode",
                "combined",
                "--bounds",
                "stat",
                "--threshold",
                "0.5",
                "--images-n",
                "24",
                "--calib-n",
                "16",
                "--seed",
                "9",
                "--out",
            ])
            .arg(&out)
            .status()
            .unwrap();
        assert!(st.success());
        std::fs::read(out.join("results.json")).unwrap()
    };
    let (a, b) = (run("a"), run("b"));
    verdict(
        "determinism",
        !a.is_empty() && a == b,
        &format!("results.json {} bytes, identical: {}", a.len(), a == b),
    );
}
