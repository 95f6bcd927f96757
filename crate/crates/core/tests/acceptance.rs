//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use common::*;
use drawering::data::{
    fit_encoders, gen_synthetic, split_by_fraction, synthetic_schema, EncodedDataset, SplitSpec,
    SynthKind,
};
use drawering::drawers::{build_regular, build_uneven, DrawerKind, DrawerMode, DrawerSet};
use drawering::harness::{
    analyze_head, compare, train_model, ComparisonReport, TrainConfig, CSV_HEADER,
};
use drawering::nn::{
    bce_loss, build_network, mse_loss, softmax_ce_loss, LayerSpec, Network, ParamBank, ParamGroup,
    Tensor2,
};
use drawering::trainer::{
    s_term, AdamConfig, DraweredModel, MixConfig, MixMode, ModelSpec, TrainRng, Trainer,
    DEFAULT_RATIO_FLOOR,
};
use rand::Rng;

type Outcome = Result<String, String>;
type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || {
        format!("took {elapsed:.1?}, limit {limit:?}")
    })
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut r = rng(1);

    // Every layer kind, parameters and inputs.
    for trial in 0..6 {
        let (a, b) = (r.random_range(1..=24), r.random_range(1..=24));
        for spec in [
            vec![LayerSpec::linear(a, b)],
            vec![LayerSpec::Relu],
            vec![LayerSpec::Sigmoid],
            vec![LayerSpec::dropout(0.3)],
            vec![LayerSpec::embedding(7, 3), LayerSpec::linear(3 + a, b)],
        ] {
            let net = Network::build(&spec, trial, 0).map_err(|e| e.to_string())?;
            let cols = net.input_dim().unwrap_or(a);
            let mut batch = random_tensor(&mut r, 5, cols);
            if matches!(spec[0], LayerSpec::Embedding { .. }) {
                for row in 0..5 {
                    batch.set(row, 0, r.random_range(0..7) as f64);
                }
            }
            let (pe, ie) = check_network(&net, &batch, trial);
            ensure(pe < FD_REL_TOL && ie < FD_REL_TOL, || {
                format!("{spec:?}: {pe:e} / {ie:e}")
            })?;
            worst = worst.max(pe).max(ie);
        }
    }

    // Every loss.
    for _ in 0..5 {
        let (b, m) = (r.random_range(1..=12), r.random_range(2..=10));
        let pred = random_tensor(&mut r, b, 1);
        let y: Vec<f64> = (0..b).map(|_| r.random_range(-2.0..2.0)).collect();
        let (_, g) = mse_loss(&pred, &y).map_err(|e| e.to_string())?;
        let num = central_diff(
            |p| mse_loss(&Tensor2::column(p), &y).unwrap().0,
            pred.data(),
            FD_STEP,
        );
        worst = worst.max(max_rel_err(g.data(), &num));

        let logits = random_tensor(&mut r, b, m).map(|v| 3.0 * v);
        let classes: Vec<usize> = (0..b).map(|_| r.random_range(0..m)).collect();
        let (_, g) = softmax_ce_loss(&logits, &classes).map_err(|e| e.to_string())?;
        let num = central_diff(
            |z| {
                softmax_ce_loss(&Tensor2::new(b, m, z.to_vec()).unwrap(), &classes)
                    .unwrap()
                    .0
            },
            logits.data(),
            FD_STEP,
        );
        worst = worst.max(max_rel_err(g.data(), &num));

        let labels = Tensor2::new(
            b,
            m,
            (0..b * m).map(|_| f64::from(r.random_bool(0.5))).collect(),
        )
        .unwrap();
        let (_, g) = bce_loss(&logits, &labels).map_err(|e| e.to_string())?;
        let num = central_diff(
            |z| {
                bce_loss(&Tensor2::new(b, m, z.to_vec()).unwrap(), &labels)
                    .unwrap()
                    .0
            },
            logits.data(),
            FD_STEP,
        );
        worst = worst.max(max_rel_err(g.data(), &num));
    }
    ensure(worst < FD_REL_TOL, || format!("loss gradients {worst:e}"))?;

    // Full drawered architecture at reduced width, both gradient paths.
    let model =
        DraweredModel::build(&reduced_spec(), DrawerMode::Nested, 5).map_err(|e| e.to_string())?;
    let batch = random_tensor(&mut r, 8, 20);
    let y: Vec<f64> = (0..8).map(|_| r.random_range(-1.0..1.0)).collect();
    let labels = nested_labels(&y, (0..9).map(|i| -0.8 + 0.2 * i as f64).collect());
    let out = model
        .dual_backward(&batch, &y, Some(&labels), &mut TrainRng::new(3))
        .map_err(|e| e.to_string())?;
    for (analytic, part, aux, name) in [
        (out.grad_g.flatten(), Part::HeadG, false, "g"),
        (out.grad_hg.flatten(), Part::Core, false, "h via g"),
        (out.grad_s.flatten(), Part::HeadS, true, "s"),
        (out.grad_hs.flatten(), Part::Core, true, "h via s"),
    ] {
        let num = numeric_grad(&model, part, aux, &batch, &y, Some(&labels), 3);
        let err = max_rel_err(&analytic, &num);
        ensure(err < FD_REL_TOL, || format!("{name}: {err:e}"))?;
        worst = worst.max(err);
    }
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "max relative error {worst:.2e} in {:.1?}",
        start.elapsed()
    ))
}

fn alpha_one_equivalence() -> Outcome {
    let start = Instant::now();
    let spec = ModelSpec {
        core: vec![
            LayerSpec::linear(20, 16),
            LayerSpec::Relu,
            LayerSpec::dropout(0.2),
            LayerSpec::linear(16, 32),
            LayerSpec::Relu,
        ],
        head_g: vec![LayerSpec::dropout(0.1), LayerSpec::linear(32, 1)],
        head_s: reduced_spec().head_s,
    };
    let mix = MixConfig {
        alpha: 1.0,
        ..MixConfig::default()
    };
    let err = |e: drawering::Error| e.to_string();
    let mut drawered = DraweredModel::build(&spec, DrawerMode::Nested, 9).map_err(err)?;
    let mut plain = DraweredModel::build(
        &ModelSpec {
            head_s: None,
            ..spec
        },
        DrawerMode::Nested,
        9,
    )
    .map_err(err)?;
    let mut t1 = Trainer::new(&drawered, mix, AdamConfig::default()).map_err(err)?;
    let mut t2 = Trainer::new(&plain, mix, AdamConfig::default()).map_err(err)?;
    let (mut r1, mut r2) = (TrainRng::new(4), TrainRng::new(4));
    let mut data_rng = rng(10);
    for _ in 0..200 {
        let batch = random_tensor(&mut data_rng, 16, 20);
        let y: Vec<f64> = (0..16).map(|i| batch.row(i)[..4].iter().sum()).collect();
        let labels = nested_labels(&y, (0..9).map(|i| -1.6 + 0.4 * i as f64).collect());
        t1.train_step(&mut drawered, &batch, &y, Some(&labels), &mut r1)
            .map_err(err)?;
        t2.train_step(&mut plain, &batch, &y, None, &mut r2)
            .map_err(err)?;
    }
    let diff = drawered
        .core()
        .params()
        .max_abs_diff(plain.core().params())
        .map_err(err)?
        .max(
            drawered
                .head_g()
                .params()
                .max_abs_diff(plain.head_g().params())
                .map_err(err)?,
        );
    ensure(diff <= 1e-12, || format!("max abs diff {diff:e}"))?;
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!("200 steps, max abs diff {diff:e}"))
}

fn random_bank(r: &mut rand_chacha::ChaCha8Rng, shapes: &[(usize, usize)]) -> ParamBank {
    ParamBank::new(
        shapes
            .iter()
            .map(|&(i, o)| {
                let scale = 10f64.powi(r.random_range(-3..3));
                ParamGroup {
                    weight: random_tensor(r, i, o).map(|v| v * scale),
                    bias: (0..o).map(|_| r.random_range(-1.0..1.0)).collect(),
                }
            })
            .collect(),
    )
}

fn scale_identity() -> Outcome {
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let shapes: Vec<(usize, usize)> = (0..r.random_range(1..4))
            .map(|_| (r.random_range(1..12), r.random_range(1..12)))
            .collect();
        let hg = random_bank(&mut r, &shapes);
        let hs = random_bank(&mut r, &shapes);
        let alpha = r.random_range(0.0..1.0);
        let term = s_term(&hg, &hs, alpha, DEFAULT_RATIO_FLOOR)
            .map_err(|e| e.to_string())?
            .ok_or("auxiliary term dropped")?;
        let want = (1.0 - alpha) * hg.l1_norm();
        let rel = (term.l1_norm() - want).abs() / want;
        worst = worst.max(rel);
    }
    ensure(worst <= 1e-9, || format!("max relative error {worst:e}"))?;
    Ok(format!("1000 pairs, max relative error {worst:.2e}"))
}

fn drawer_oracles() -> Outcome {
    let mut r = rng(4);
    for _ in 0..50 {
        let m = r.random_range(1..60);
        let mut b: Vec<f64> = (0..m).map(|_| r.random_range(-100.0..100.0)).collect();
        b.sort_by(f64::total_cmp);
        b.dedup();
        let ds = DrawerSet::new(DrawerKind::Regular, DrawerMode::Disjoint, b.clone())
            .map_err(|e| e.to_string())?;
        for _ in 0..100_000 {
            let y = r.random_range(-120.0..120.0);
            let linear = b.iter().take_while(|&&v| v < y).count();
            ensure(ds.assign_disjoint(y) == linear, || {
                format!("y={y} in {b:?}")
            })?;
        }
    }

    for _ in 0..30 {
        let n_targets = r.random_range(2..5000);
        let n = r.random_range(2..=n_targets.min(40));
        let mut ys: Vec<f64> = (0..n_targets).map(|_| r.random_range(-1e3..1e3)).collect();
        ys.sort_by(f64::total_cmp);
        ys.dedup();
        let ds = build_regular(&ys, n).map_err(|e| e.to_string())?;
        let balanced = ys.len() as f64 / n as f64;
        for c in ds.counts(&ys) {
            ensure((c as f64 - balanced).abs() <= 1.0, || {
                format!("count {c} vs {balanced} (N={}, n={n})", ys.len())
            })?;
        }
    }

    for k in 6..=12 {
        let ys: Vec<f64> = (1..=1u32 << k).map(f64::from).collect();
        let unit = 1usize << (k - 3);
        let want: Vec<usize> = [1, 1, 2, 2, 1, 1].iter().map(|c| c * unit).collect();
        let got = build_uneven(&ys, 3).map_err(|e| e.to_string())?.counts(&ys);
        ensure(got == want, || {
            format!("2^{k} values: {got:?}, want {want:?}")
        })?;
    }
    Ok("binary search = linear scan on 5e6 queries; regular within ±1; uneven (8,8,16,16,8,8) pattern".into())
}

fn parameter_count() -> Outcome {
    let head = [
        LayerSpec::linear(128, 1024),
        LayerSpec::Relu,
        LayerSpec::dropout(0.5),
        LayerSpec::linear(1024, 19),
        LayerSpec::Sigmoid,
    ];
    let count = build_network(&head, 0)
        .map_err(|e| e.to_string())?
        .param_count();
    ensure(count == 151_571, || format!("{count} parameters"))?;
    Ok(format!("{count} parameters"))
}

struct Benchmark {
    data: EncodedDataset,
    splits: SplitSpec,
    cfg: TrainConfig,
}

fn benchmark_task() -> Benchmark {
    let kind = SynthKind::HeavyTail;
    let table = gen_synthetic(kind, 70_000, 7);
    let splits = split_by_fraction(70_000, 1.0 / 7.0, 1.0 / 7.0, 7).expect("valid fractions");
    let data = fit_encoders(&table, &synthetic_schema(kind), &splits.train)
        .expect("synthetic data encodes");
    Benchmark {
        data,
        splits,
        cfg: TrainConfig::desk_scale(),
    }
}

fn ab_benchmark(task: &Benchmark) -> Outcome {
    let start = Instant::now();
    let (train, val, test) = (
        task.splits.train.len(),
        task.splits.validation.len(),
        task.splits.test.len(),
    );
    ensure((train, val, test) == (50_000, 10_000, 10_000), || {
        format!("split sizes {train}/{val}/{test}")
    })?;
    let report = compare(
        &task.cfg.original(),
        &task.cfg,
        10,
        &task.data,
        &task.splits,
        1,
    )
    .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(report.errors().count() == 0, || "some runs failed".into())?;
    let (o, e) = (
        report.original.test.clone().unwrap(),
        report.extended.test.clone().unwrap(),
    );
    let imp = report.test_improvement.clone().unwrap();
    println!(
        "    test All mean: original {:.5}, extended {:.5}; Min {:.5} vs {:.5}",
        o.all_mean, e.all_mean, o.min, e.min
    );
    println!(
        "    relative improvement: Min {:+.2}%, All mean {:+.2}%",
        100.0 * imp.min,
        100.0 * imp.all_mean
    );
    println!(
        "    extended train MSE >= original in {} of {} paired runs; {elapsed:.1?}",
        report.train_not_lower, report.paired_runs
    );
    within(elapsed, Duration::from_secs(15 * 60))?;
    ensure(e.all_mean <= o.all_mean, || {
        format!("extended {} > original {}", e.all_mean, o.all_mean)
    })?;
    ensure(report.train_not_lower >= 6, || {
        format!("only {} of 10 train pairs", report.train_not_lower)
    })?;
    Ok(format!(
        "All mean {:.5} <= {:.5}, train direction {}/10, {elapsed:.0?}",
        e.all_mean, o.all_mean, report.train_not_lower
    ))
}

fn cached_fidelity(task: &Benchmark) -> Outcome {
    let err = |e: drawering::Error| e.to_string();
    // One step, refresh period 1.
    let step = |mode: MixMode| -> Result<DraweredModel, String> {
        let mut model =
            DraweredModel::build(&reduced_spec(), DrawerMode::Nested, 21).map_err(err)?;
        let mix = MixConfig {
            mode,
            ratio_refresh_period: 1,
            ..MixConfig::default()
        };
        let mut trainer = Trainer::new(&model, mix, AdamConfig::default()).map_err(err)?;
        let mut r = rng(22);
        let batch = random_tensor(&mut r, 32, 20);
        let y: Vec<f64> = (0..32).map(|i| batch.row(i)[..3].iter().sum()).collect();
        let labels = nested_labels(&y, (0..9).map(|i| -1.2 + 0.3 * i as f64).collect());
        trainer
            .train_step(
                &mut model,
                &batch,
                &y,
                Some(&labels),
                &mut TrainRng::new(23),
            )
            .map_err(err)?;
        Ok(model)
    };
    let (exact, cached) = (step(MixMode::Exact)?, step(MixMode::Cached)?);
    let mut diff: f64 = 0.0;
    for (a, b) in [
        (exact.core().params(), cached.core().params()),
        (exact.head_g().params(), cached.head_g().params()),
        (
            exact.head_s().unwrap().params(),
            cached.head_s().unwrap().params(),
        ),
    ] {
        diff = diff.max(a.max_abs_diff(b).map_err(err)?);
    }
    ensure(diff <= 1e-12, || format!("one-step diff {diff:e}"))?;

    // Full run, refresh period 50.
    let exact_run = train_model(&task.cfg, &task.data, &task.splits, None).map_err(err)?;
    let mut cfg = task.cfg.clone();
    cfg.mix.mode = MixMode::Cached;
    cfg.mix.ratio_refresh_period = 50;
    let cached_run = train_model(&cfg, &task.data, &task.splits, None).map_err(err)?;
    let (a, b) = (exact_run.result.test, cached_run.result.test);
    let rel = (b - a).abs() / a;
    ensure(rel <= 0.05, || {
        format!("test MSE exact {a:.5}, cached {b:.5} ({:.2}%)", 100.0 * rel)
    })?;
    Ok(format!(
        "one step diff {diff:e}; test MSE exact {a:.5}, cached {b:.5} ({:+.2}%)",
        100.0 * (b - a) / a
    ))
}

fn head_monotonicity(task: &Benchmark) -> Outcome {
    let err = |e: drawering::Error| e.to_string();
    let run = train_model(&task.cfg, &task.data, &task.splits, None).map_err(err)?;
    let drawers = run.drawers.as_ref().ok_or("no drawers")?;
    let analysis = analyze_head(&run.model, &task.data, &task.splits.test, drawers).map_err(err)?;
    ensure(analysis.rows.len() == task.splits.test.len(), || {
        "row count".into()
    })?;
    for row in &analysis.rows {
        ensure(row.outputs.len() == drawers.len() - 1, || {
            format!("row {} has {} outputs", row.row, row.outputs.len())
        })?;
        ensure(row.true_index < drawers.len(), || {
            format!("row {} index {}", row.row, row.true_index)
        })?;
    }
    let v = analysis.mean_adjacent_violation;
    let soft = if v < 0.05 { "below" } else { "above" };
    Ok(format!(
        "{} rows x {} outputs; mean adjacent violation {v:.6} ({soft} the 0.05 soft target)",
        analysis.rows.len(),
        drawers.len() - 1
    ))
}

fn determinism_and_format() -> Outcome {
    let err = |e: drawering::Error| e.to_string();
    let kind = SynthKind::HeavyTail;
    let table = gen_synthetic(kind, 3000, 2);
    let splits = split_by_fraction(3000, 0.2, 0.2, 2).map_err(err)?;
    let data = fit_encoders(&table, &synthetic_schema(kind), &splits.train).map_err(err)?;
    let mut cfg = TrainConfig::desk_scale();
    cfg.drawers.n = 3;
    cfg.min_occupancy = 50;
    cfg.max_iterations = Some(3);
    let emit = |jobs: usize| -> Result<(String, String), String> {
        let report = compare(&cfg.original(), &cfg, 3, &data, &splits, jobs).map_err(err)?;
        let mut csv = Vec::new();
        report.write_csv(&mut csv).map_err(err)?;
        Ok((
            report.to_json().map_err(err)?,
            String::from_utf8(csv).unwrap(),
        ))
    };
    let (a, csv) = emit(1)?;
    let (b, _) = emit(2)?;
    ensure(a == b, || "JSON reports differ between invocations".into())?;
    let header = csv.lines().next().unwrap_or_default();
    ensure(header == CSV_HEADER.join(","), || {
        format!("header {header:?}")
    })?;
    ensure(
        header == "Model,Min,Top5 mean,Top5 std,All mean,All std",
        || format!("header {header:?}"),
    )?;
    let mut empty = Vec::new();
    ComparisonReport::empty()
        .write_csv(&mut empty)
        .map_err(err)?;
    ensure(
        String::from_utf8(empty).unwrap().lines().count() == 1,
        || "empty report is not header-only".into(),
    )?;
    Ok(format!("{} identical JSON bytes; header {header}", a.len()))
}

fn main() {
    let task = benchmark_task();
    let criteria: Vec<(&str, Check)> = vec![
        ("gradient oracle", Box::new(gradient_oracle)),
        ("alpha=1 equivalence", Box::new(alpha_one_equivalence)),
        ("mixing scale identity", Box::new(scale_identity)),
        ("drawer oracles", Box::new(drawer_oracles)),
        ("parameter count", Box::new(parameter_count)),
        ("A/B benchmark", Box::new(|| ab_benchmark(&task))),
        ("cached-ratio fidelity", Box::new(|| cached_fidelity(&task))),
        (
            "head monotonicity report",
            Box::new(|| head_monotonicity(&task)),
        ),
        ("determinism and format", Box::new(determinism_and_format)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
