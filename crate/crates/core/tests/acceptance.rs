//! Acceptance gate: runs criteria 1 to 12 and prints one PASS/FAIL line
//! for each. Exits nonzero when any criterion fails.

mod common;

use std::ops::ControlFlow;
use std::panic::{self, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use attacknet::bench::bench;
use attacknet::data::{Label, LoadedDataset};
use attacknet::gradcam::{grad_cam, write_overlay};
use attacknet::metrics::{ConfusionMatrix, EvalReport};
use attacknet::model::{
    build_model, load_checkpoint, param_count, save_checkpoint, write_checkpoint, FlopBreakdown,
    Model, ModelConfig,
};
use attacknet::protocol::{run_cross_eval_grid, run_fused, train_run, ExperimentOptions};
use attacknet::synthetic::blob_set;
use attacknet::trainer::{fit_with_observer, run_epochs, train_step, EpochRecord, StopReason};
use attacknet::{Prng, Tensor};
use common::{conv_oracle_gap, gradient_suite, metrics_oracle_mismatches};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cli(args: &[&str]) -> Result<String, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_attacknet"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(String::from_utf8_lossy(&o.stderr).into_owned());
    }
    Ok(String::from_utf8_lossy(&o.stdout).into_owned())
}

fn field<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines()
        .find_map(|l| l.strip_prefix(key)?.strip_prefix(','))
}

fn crit1() -> Outcome {
    let out = cli(&["params"])?;
    let n = param_count(
        &build_model(&ModelConfig::default(), &mut Prng::new(0)).map_err(|e| e.to_string())?,
    );
    check(field(&out, "params") == Some("291042"), || {
        format!("cli printed {out:?}")
    })?;
    check(field(&out, "params_M") == Some("0.3"), || {
        format!("cli printed {out:?}")
    })?;
    check(n == 291_042, || format!("param_count {n}"))?;
    Ok(format!("params {n}, {:.1}M", n as f64 / 1e6))
}

fn crit2() -> Outcome {
    let out = cli(&["flops"])?;
    let total: u64 = field(&out, "flops")
        .and_then(|v| v.parse().ok())
        .ok_or("no flops line")?;
    check((22_400_000..=23_000_000).contains(&total), || {
        format!("total {total}")
    })?;
    check(field(&out, "mflops") == Some("22.7"), || {
        format!("cli printed {out:?}")
    })?;
    let f = FlopBreakdown::for_config(&ModelConfig::default());
    check(f.total() == total, || {
        format!("library {} vs cli {total}", f.total())
    })?;
    Ok(format!("{total} FLOPs, {:.1} MFLOPs", total as f64 / 1e6))
}

fn crit3() -> Outcome {
    let results = gradient_suite(31, 12);
    check(results.len() == 10, || {
        format!("{} layers checked", results.len())
    })?;
    for r in &results {
        check(r.cases >= 10, || {
            format!("{} ran {} cases", r.layer, r.cases)
        })?;
        check(r.passed(), || {
            format!("{} worst {:e} ≥ {:e}", r.layer, r.worst, r.tolerance)
        })?;
    }
    let worst = results.iter().map(|r| r.worst).fold(0.0, f64::max);
    Ok(format!(
        "{} layers, worst relative error {worst:.1e}",
        results.len()
    ))
}

fn crit4() -> Outcome {
    let gap = conv_oracle_gap(404, 50);
    check(gap <= 1e-5, || format!("gap {gap:e}"))?;
    Ok(format!("50 cases, worst gap {gap:.1e}"))
}

fn crit5() -> Outcome {
    let bad = metrics_oracle_mismatches(505, 1000);
    check(bad == 0, || format!("{bad} mismatching vectors"))?;
    let r = EvalReport::from_confusion(ConfusionMatrix {
        tp: 96,
        fn_: 4,
        fp: 8,
        tn: 92,
    })
    .map_err(|e| e.to_string())?;
    let shown = format!("{:.3}", r.hter);
    check(shown == "0.060", || format!("HTER {shown}"))?;
    Ok(format!("1000 vectors exact, HTER(0.08, 0.04) = {shown}"))
}

fn crit6() -> Outcome {
    let mut reached = Vec::new();
    for seed in 0..5u64 {
        let cfg = ModelConfig {
            augment: None,
            max_epochs: 200,
            patience: 200,
            seed,
            ..ModelConfig::default()
        };
        let set = blob_set(64, 32, 32, 600 + seed, "overfit");
        let model = build_model(&cfg, &mut Prng::new(seed)).map_err(|e| e.to_string())?;
        let mut rng = Prng::new(seed ^ 0x5eed);
        let (_, log) = fit_with_observer(model, &set, &set, &mut rng, |_, r| {
            if r.train_acc >= 1.0 {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })
        .map_err(|e| e.to_string())?;
        let last = log.records.last().unwrap();
        reached.push(
            (log.stop_reason == StopReason::Halted && last.train_acc >= 1.0).then_some(last.epoch),
        );
    }
    let hits = reached.iter().flatten().count();
    let epochs: Vec<String> = reached
        .iter()
        .map(|r| r.map_or("-".into(), |e| e.to_string()))
        .collect();
    check(hits >= 4, || {
        format!("{hits}/5 seeds reached 100% (epochs {})", epochs.join(","))
    })?;
    Ok(format!(
        "{hits}/5 seeds at 100% train accuracy, epochs {}",
        epochs.join(",")
    ))
}

fn crit7() -> Outcome {
    let cfg = ModelConfig {
        input_h: 8,
        input_w: 8,
        phase1_filters: 2,
        phase2_filters: 4,
        dense_width: 8,
        batch_size: 8,
        augment: None,
        ..ModelConfig::default()
    };
    let data = blob_set(8, 8, 8, 7, "es");
    let idx: Vec<usize> = (0..data.len()).collect();
    let x = data.batch(&idx).map_err(|e| e.to_string())?;
    let labels = data.label_indices();
    let sequences: Vec<(Vec<f64>, usize)> = vec![
        (
            (1..=30)
                .map(|e| if e <= 5 { 10.0 - e as f64 } else { 6.0 })
                .collect(),
            5,
        ),
        (
            (1..=30)
                .map(|e| if e == 3 { 0.5 } else { 1.0 + e as f64 })
                .collect(),
            3,
        ),
        (
            (1..=40)
                .map(|e| if e <= 12 { 2.0 - 0.1 * e as f64 } else { 2.0 })
                .collect(),
            12,
        ),
        (
            (1..=30)
                .map(|e| match e {
                    1 => 3.0,
                    11 => 1.0,
                    _ => 2.0,
                })
                .collect(),
            11,
        ),
    ];
    for (i, (losses, best)) in sequences.iter().enumerate() {
        let mut model = build_model(&cfg, &mut Prng::new(i as u64)).map_err(|e| e.to_string())?;
        let mut rng = Prng::new(70 + i as u64);
        let mut snapshots: Vec<Vec<u8>> = Vec::new();
        let (restored, log) = run_epochs(
            &mut model,
            losses.len(),
            10,
            |m, epoch| {
                train_step(m, &x, &labels, &mut rng)?;
                snapshots.push(write_checkpoint(m));
                Ok(EpochRecord {
                    epoch,
                    train_loss: 0.0,
                    train_acc: 0.0,
                    val_loss: losses[epoch - 1],
                    val_acc: 0.0,
                })
            },
            |_, _| ControlFlow::Continue(()),
        )
        .map_err(|e| e.to_string())?;
        let stop = log.records.len();
        check(log.stop_reason == StopReason::EarlyStop, || {
            format!("sequence {i}: {:?}", log.stop_reason)
        })?;
        check(log.best_epoch == *best, || {
            format!("sequence {i}: best {} want {best}", log.best_epoch)
        })?;
        check(stop == best + 10, || {
            format!("sequence {i}: stopped at {stop}, best {best}")
        })?;
        check(write_checkpoint(&restored) == snapshots[best - 1], || {
            format!("sequence {i}: restored weights differ from epoch {best}")
        })?;
    }
    Ok(format!(
        "{} sequences stop at best+10 with bit-exact restore",
        sequences.len()
    ))
}

fn dataset(name: &str, n: usize, side: usize, seed: u64) -> LoadedDataset {
    LoadedDataset {
        name: name.into(),
        train: blob_set(n, side, side, seed, name),
        val: blob_set(n, side, side, seed ^ 0xa11ce, name),
    }
}

fn shuffled(name: &str, n: usize, side: usize, seed: u64) -> Result<LoadedDataset, String> {
    let mut d = dataset(name, n, side, seed);
    let mut labels: Vec<Label> = (0..d.val.len()).map(|i| Label::ALL[i % 2]).collect();
    Prng::new(seed).shuffle(&mut labels);
    d.val = d.val.with_labels(labels).map_err(|e| e.to_string())?;
    Ok(d)
}

fn small_side_config(seed: u64) -> ModelConfig {
    ModelConfig {
        input_h: 16,
        input_w: 16,
        max_epochs: 40,
        seed,
        ..ModelConfig::default()
    }
}

fn crit8() -> Outcome {
    let mut good = 0;
    let mut notes = Vec::new();
    for seed in 0..5u64 {
        let a = dataset("a", 64, 16, 800 + seed);
        let b = dataset("b", 64, 16, 900 + seed);
        let s = shuffled("shuffled", 256, 16, 1000 + seed)?;
        let opts = ExperimentOptions {
            config: small_side_config(seed),
            seed,
        };
        let (m, _) = run_cross_eval_grid(&[a.clone(), b.clone()], &[a, b, s], &opts)
            .map_err(|e| e.to_string())?;
        let grid = m.hter_grid();
        let same = [grid[0][0], grid[0][1], grid[1][0], grid[1][1]];
        let random = [grid[0][2], grid[1][2]];
        let ok = same.iter().all(|&h| h <= 0.05)
            && random.iter().all(|h| (0.4..=0.6).contains(h))
            && grid[0][0] <= grid[0][2]
            && grid[1][1] <= grid[1][2];
        good += ok as usize;
        notes.push(format!(
            "seed {seed}: max same {:.3}, shuffled {:.3}/{:.3}",
            same.iter().cloned().fold(0.0, f32::max),
            random[0],
            random[1]
        ));
    }
    check(good >= 4, || {
        format!("{good}/5 seeds ({})", notes.join("; "))
    })?;
    Ok(format!("{good}/5 seeds ({})", notes.join("; ")))
}

fn crit9() -> Outcome {
    let cfg = small_side_config(9);
    let a = dataset("src_a", 64, 16, 901);
    let b = dataset("src_b", 64, 16, 902);
    let outcome = run_fused(
        &[a, b],
        &ExperimentOptions {
            config: cfg.clone(),
            seed: 9,
        },
    )
    .map_err(|e| e.to_string())?;
    check(outcome.reports.len() == 2, || {
        format!("{} reports", outcome.reports.len())
    })?;
    let names: Vec<&str> = outcome.reports.iter().map(|(n, _)| n.as_str()).collect();
    check(names == ["src_a", "src_b"], || format!("sources {names:?}"))?;
    let rows = outcome.log().to_csv().lines().count() - 1;
    check(
        rows <= cfg.max_epochs && rows == outcome.log().records.len(),
        || format!("{rows} log rows for max_epochs {}", cfg.max_epochs),
    )?;
    let (ha, hb) = (outcome.reports[0].1.hter, outcome.reports[1].1.hter);
    check((ha - hb).abs() <= 0.05, || {
        format!("HTERs {ha:.3} and {hb:.3}")
    })?;
    Ok(format!("2 reports, {rows} log rows, HTERs {ha:.3}/{hb:.3}"))
}

fn crit10() -> Outcome {
    let cfg = ModelConfig {
        input_h: 16,
        input_w: 16,
        max_epochs: 4,
        batch_size: 16,
        ..ModelConfig::default()
    };
    let train = blob_set(48, 16, 16, 1001, "d");
    let val = blob_set(16, 16, 16, 1002, "d");
    let one = train_run("d", &train, &val, &cfg, 10).map_err(|e| e.to_string())?;
    let two = train_run("d", &train, &val, &cfg, 10).map_err(|e| e.to_string())?;
    check(one.log.to_csv() == two.log.to_csv(), || {
        "train logs differ".into()
    })?;
    let bytes = write_checkpoint(&one.model);
    check(bytes == write_checkpoint(&two.model), || {
        "checkpoints differ".into()
    })?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("m.atkn");
    save_checkpoint(&one.model, &path).map_err(|e| e.to_string())?;
    let back = load_checkpoint(&path).map_err(|e| e.to_string())?;
    let idx: Vec<usize> = (0..val.len()).collect();
    let x = val.batch(&idx).map_err(|e| e.to_string())?;
    let (p, q) = (
        one.model.predict(&x).map_err(|e| e.to_string())?,
        back.predict(&x).map_err(|e| e.to_string())?,
    );
    check(
        p.data()
            .iter()
            .zip(q.data())
            .all(|(a, b)| a.to_bits() == b.to_bits()),
        || "reloaded model predicts differently".into(),
    )?;
    Ok(format!(
        "{} epochs twice, {} checkpoint bytes identical",
        one.log.records.len(),
        bytes.len()
    ))
}

fn crit11() -> Outcome {
    let model =
        build_model(&ModelConfig::default(), &mut Prng::new(11)).map_err(|e| e.to_string())?;
    let r = bench(&model, 5000, 11).map_err(|e| e.to_string())?;
    check(r.mean_ms < 10.0, || format!("mean {:.3} ms", r.mean_ms))?;
    Ok(format!(
        "mean {:.3} ms, median {:.3} ms, {:.0} FPS",
        r.mean_ms, r.median_ms, r.fps
    ))
}

/// A default-shaped model whose phase-2 feature map is zero except for
/// channel `k`, which equals the 2×2 max-pooled red plane of the input,
/// and whose `target` logit grows with that channel.
fn analytic_model(k: usize, target: Label) -> Result<Model, String> {
    let cfg = ModelConfig::default();
    let mut m = build_model(&cfg, &mut Prng::new(12)).map_err(|e| e.to_string())?;
    for conv in m.convs_mut() {
        conv.weight.data_mut().fill(0.0);
        conv.bias.data_mut().fill(0.0);
    }
    for norm in m.norms_mut() {
        norm.gamma.data_mut().fill(1.0);
        norm.beta.data_mut().fill(0.0);
        norm.running_mean.data_mut().fill(0.0);
        norm.running_var.data_mut().fill(1.0);
    }
    let (c1, c2) = (cfg.phase1_filters, cfg.phase2_filters);
    let center = 4;
    m.convs_mut()[0].weight.data_mut()[center] = 1.0;
    m.convs_mut()[3].weight.data_mut()[k * c1 * 9 + center] = 1.0;
    for i in [2, 5] {
        m.norms_mut()[i].gamma.data_mut().fill(0.0);
    }
    let plane = (cfg.input_h / 4) * (cfg.input_w / 4);
    let hidden = cfg.dense_width;
    let fc1 = m.fc1_mut();
    fc1.weight.data_mut().fill(0.0);
    fc1.bias.data_mut().fill(0.0);
    for j in 0..plane {
        fc1.weight.data_mut()[(k * plane + j) * hidden] = 0.01;
    }
    let fc2 = m.fc2_mut();
    fc2.weight.data_mut().fill(0.0);
    fc2.bias.data_mut().fill(0.0);
    fc2.weight.data_mut()[target.index()] = 1.0;
    debug_assert_eq!(m.fc1().weight.shape(), &[c2 * plane, hidden]);
    Ok(m)
}

fn spot_image(row: usize, col: usize) -> Tensor {
    let mut x = Tensor::full(&[3, 32, 32], 0.1f32).unwrap();
    x.data_mut()[row * 32 + col] = 0.9;
    x
}

fn crit12() -> Outcome {
    let mut checked = 0;
    for (k, target, row, col) in [
        (5, Label::Bonafide, 21, 9),
        (0, Label::Attack, 3, 28),
        (31, Label::Bonafide, 14, 14),
    ] {
        let model = analytic_model(k, target)?;
        let x = spot_image(row, col);
        let cam = grad_cam(&model, &x, target).map_err(|e| e.to_string())?;
        for map in [&cam.raw, &cam.upsampled] {
            let max = map.data().iter().cloned().fold(f32::MIN, f32::max);
            check(
                map.data().iter().all(|v| (0.0..=1.0).contains(v)) && max == 1.0,
                || format!("map not normalized (max {max})"),
            )?;
        }
        check(cam.raw_argmax() == (row / 2, col / 2), || {
            format!(
                "raw argmax {:?}, spot at {:?}",
                cam.raw_argmax(),
                (row / 2, col / 2)
            )
        })?;
        let (ur, uc) = cam.upsampled_argmax();
        let (er, ec) = (2 * (row / 2), 2 * (col / 2));
        check(ur.abs_diff(er) <= 2 && uc.abs_diff(ec) <= 2, || {
            format!("upsampled argmax {:?} far from {:?}", (ur, uc), (er, ec))
        })?;
        let again = grad_cam(&model, &x, target).map_err(|e| e.to_string())?;
        check(again == cam, || "repeated Grad-CAM differs".into())?;

        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut files = Vec::new();
        for name in ["a.ppm", "b.ppm"] {
            let p = dir.path().join(name);
            write_overlay(&p, &cam, &x, 0.5, true).map_err(|e| e.to_string())?;
            files.push(std::fs::read(&p).map_err(|e| e.to_string())?);
        }
        check(files[0] == files[1], || "overlay bytes differ".into())?;
        checked += 1;
    }
    Ok(format!(
        "{checked} analytic constructions peak at the planted spot"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("parameter budget", crit1),
        ("FLOP budget", crit2),
        ("gradient suite", crit3),
        ("convolution oracle", crit4),
        ("metrics oracle", crit5),
        ("overfit sanity", crit6),
        ("early stopping", crit7),
        ("cross-database harness", crit8),
        ("fused protocol", crit9),
        ("determinism and persistence", crit10),
        ("latency benchmark", crit11),
        ("Grad-CAM", crit12),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .and_then(|v| v.parse().ok());
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let took = fmt_secs(start.elapsed());
        let line = match result {
            Ok(detail) => format!("PASS criterion {n:>2} {name}: {detail} [{took}]"),
            Err(why) => {
                failed += 1;
                format!("FAIL criterion {n:>2} {name}: {why} [{took}]")
            }
        };
        println!("{line}");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn fmt_secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}
