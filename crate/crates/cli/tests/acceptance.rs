//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails.

mod common;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;
use skywatch::crime::{CrimeEvent, Severity};
use skywatch::di::{
    datasets, distributed_logits, split_model, sweep_eval, train_models, DiConfig, LossyLink,
    SplitPlan, SweepRow,
};
use skywatch::nn::{
    check_gradients, Activation, Conv2d, Dense, Dropout, GradCheckConfig, GradCheckReport, Layer,
    MaxPool2, Mode, Parameterized, Sequential, Tensor,
};
use skywatch::par::Execution;
use skywatch::ppo::{compute_gae, run_episode, train, Environment, PpoConfig, RolloutBuffer};
use skywatch::predictor::{
    make_training_set, mse, train_predictor, PredictorConfig, PredictorModel,
};
use skywatch::rng::stream;
use skywatch::world::{
    connectivity, deterred_count, distance, sensed_events, Placement, Role, UavAssignment,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

// ---------------------------------------------------------------- 1

fn uniform(shape: &[usize], r: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| r.random_range(-1.0..1.0))
}

fn weighted(y: &Tensor, w: &Tensor) -> f64 {
    y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

fn check_stack(mut net: Sequential, x: Tensor, seed: u64) -> GradCheckReport {
    let mut r = stream(seed, "acc-grad");
    let w = uniform(net.forward(&x, &mut r).unwrap().shape(), &mut r);
    let cfg = GradCheckConfig {
        samples: 120,
        ..Default::default()
    };
    check_gradients(
        &mut net,
        cfg,
        &mut stream(seed, "acc-grad-pick"),
        |n| {
            n.zero_grad();
            n.forward(&x, &mut stream(0, "fixed"))?;
            n.backward(&w)?;
            Ok(())
        },
        |n| Ok(weighted(&n.forward(&x, &mut stream(0, "fixed"))?, &w)),
    )
    .unwrap()
}

fn gradient_integrity() -> Outcome {
    let start = Instant::now();
    let mut r = stream(1, "acc-nets");
    let mut reports = Vec::new();

    let dense = Sequential::new(vec![
        Layer::Dense(Dense::new(6, 12, Activation::Tanh, &mut r)),
        Layer::Dense(Dense::new(12, 4, Activation::Softmax, &mut r)),
    ])
    .unwrap();
    reports.push(("dense", check_stack(dense, uniform(&[5, 6], &mut r), 2)));

    let conv = Sequential::new(vec![
        Layer::Conv(Conv2d::new(2, 4, 3, &mut r)),
        Layer::act(Activation::Relu),
        Layer::MaxPool(MaxPool2::new()),
        Layer::flatten(),
        Layer::Dense(Dense::new(4 * 3 * 3, 5, Activation::Identity, &mut r)),
    ])
    .unwrap();
    reports.push(("conv", check_stack(conv, uniform(&[3, 2, 6, 6], &mut r), 3)));

    let mut dropout = Sequential::new(vec![
        Layer::Dense(Dense::new(8, 16, Activation::Tanh, &mut r)),
        Layer::Dropout(Dropout::with_scaling(0.4, false).unwrap()),
        Layer::Dense(Dense::new(16, 3, Activation::Identity, &mut r)),
    ])
    .unwrap();
    dropout.set_mode(Mode::Train);
    dropout.freeze_dropout(true);
    reports.push(("dropout", check_stack(dropout, uniform(&[6, 8], &mut r), 4)));

    let cfg = PredictorConfig {
        hidden_units: 8,
        window_len: 5,
        ..Default::default()
    };
    let mut lstm = PredictorModel::new(cfg, 3, 5);
    lstm.head.bias.value.fill(2.0);
    let x = Tensor::from_fn(&[4, 5, 3], |_| r.random_range(0.0..3.0));
    let t = Tensor::from_fn(&[4, 3], |_| r.random_range(0.0..4.0));
    let report = check_gradients(
        &mut lstm,
        GradCheckConfig {
            samples: 120,
            ..Default::default()
        },
        &mut stream(6, "acc-grad-pick"),
        |m| {
            m.zero_grad();
            let h = m.lstm.forward(&x)?;
            let p = m.head.forward(&h)?;
            let k = 2.0 / p.len() as f64;
            let dh = m.head.backward(&p.zip_map(&t, |a, b| k * (a - b))?)?;
            m.lstm.backward(&dh)?;
            Ok(())
        },
        |m| mse(&m.predict_batch(&x)?, &t),
    )
    .unwrap();
    reports.push(("lstm", report));

    let elapsed = start.elapsed();
    let worst = reports
        .iter()
        .map(|(_, r)| r.max_relative_error)
        .fold(0.0, f64::max);
    let fewest = reports.iter().map(|(_, r)| r.checked).min().unwrap();
    let pass = reports
        .iter()
        .all(|(_, r)| r.passes(1e-4) && r.checked >= 100)
        && elapsed < Duration::from_secs(60);
    let per: Vec<String> = reports
        .iter()
        .map(|(n, r)| format!("{n} {:.1e}", r.max_relative_error))
        .collect();
    outcome(
        pass,
        format!(
            "{} | worst {worst:.1e}, ≥{fewest} params each, {:.1}s",
            per.join(", "),
            secs(elapsed)
        ),
    )
}

// ---------------------------------------------------------------- 2

fn random_placement(r: &mut impl Rng, n: usize) -> Placement {
    let roles = [Role::Sensing, Role::Computing, Role::Deterrence];
    Placement {
        assignments: (0..n)
            .map(|i| UavAssignment {
                uav_id: i,
                cell_index: i,
                role: roles[r.random_range(0..3)],
            })
            .collect(),
        positions: (0..n)
            .map(|_| {
                [
                    r.random_range(-1500.0..1500.0),
                    r.random_range(-1500.0..1500.0),
                ]
            })
            .collect(),
    }
}

/// Relay reachability by repeated relaxation to a fixed point.
fn fixed_point_reachable(p: &Placement, comm: f64) -> Vec<bool> {
    let n = p.positions.len();
    let relay = |i: usize| p.assignments[i].role != Role::Deterrence;
    let mut linked: Vec<bool> = (0..n)
        .map(|i| p.assignments[i].role == Role::Computing)
        .collect();
    loop {
        let mut changed = false;
        for i in 0..n {
            if linked[i] || !relay(i) {
                continue;
            }
            if (0..n)
                .any(|j| linked[j] && relay(j) && distance(p.positions[i], p.positions[j]) <= comm)
            {
                linked[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (0..n)
        .map(|i| p.assignments[i].role == Role::Sensing && linked[i])
        .collect()
}

fn gae_reference(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last: f64,
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = rewards.len();
    (0..n)
        .map(|t| {
            let (mut sum, mut w) = (0.0, 1.0);
            for l in t..n {
                let next = if l + 1 == n { last } else { values[l + 1] };
                let delta = rewards[l] + if dones[l] { 0.0 } else { gamma * next } - values[l];
                sum += w * delta;
                if dones[l] {
                    break;
                }
                w *= gamma * lambda;
            }
            sum
        })
        .collect()
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut r = stream(2, "acc-oracles");
    let ts = chrono::NaiveDate::from_ymd_opt(2016, 3, 4)
        .unwrap()
        .and_hms_opt(21, 0, 0)
        .unwrap();
    let instances = 200;
    let mut mismatches = Vec::new();
    let mut gae_err: f64 = 0.0;
    for k in 0..instances {
        let uavs = r.random_range(1..=20);
        let p = random_placement(&mut r, uavs);
        let comm = r.random_range(100.0..1200.0);
        let range = r.random_range(10.0..1500.0);
        let sensing = r.random_range(10.0..500.0);
        let events: Vec<CrimeEvent> = (0..r.random_range(0..40))
            .map(|_| CrimeEvent {
                timestamp: ts,
                x_m: r.random_range(-1500.0..1500.0),
                y_m: r.random_range(-1500.0..1500.0),
                block_id: 0,
                severity: if r.random_bool(0.5) {
                    Severity::Major
                } else {
                    Severity::Misdemeanor
                },
            })
            .collect();
        let refs: Vec<&CrimeEvent> = events.iter().collect();

        let reach = fixed_point_reachable(&p, comm);
        let conn = connectivity(&p, comm);
        if conn.reachable != reach {
            mismatches.push(format!("connectivity #{k}"));
        }
        let deterred = events
            .iter()
            .filter(|e| {
                e.is_major()
                    && p.assignments.iter().zip(&p.positions).any(|(a, pos)| {
                        a.role == Role::Deterrence
                            && (e.x_m - pos[0]).powi(2) + (e.y_m - pos[1]).powi(2) <= range * range
                    })
            })
            .count();
        if deterred_count(&refs, &p, range) != deterred {
            mismatches.push(format!("deterred #{k}"));
        }
        let sensed: Vec<usize> = (0..events.len())
            .filter(|&i| {
                !events[i].is_major()
                    && (0..p.positions.len()).any(|u| {
                        reach[u]
                            && distance(p.positions[u], [events[i].x_m, events[i].y_m]) <= sensing
                    })
            })
            .collect();
        let got: Vec<usize> = sensed_events(&refs, &p, &conn, sensing)
            .into_iter()
            .map(|e| events.iter().position(|x| std::ptr::eq(x, e)).unwrap())
            .collect();
        if got != sensed {
            mismatches.push(format!("sensed #{k}"));
        }

        let n = r.random_range(1..60);
        let mut buf = RolloutBuffer::new(n);
        for _ in 0..n {
            buf.push(
                vec![],
                vec![],
                vec![0.0],
                r.random_range(-5.0..5.0),
                r.random_range(-5.0..5.0),
                r.random_bool(0.2),
            )
            .unwrap();
        }
        let (gamma, lambda, last) = (
            r.random_range(0.0..=1.0),
            r.random_range(0.0..=1.0),
            r.random_range(-5.0..5.0),
        );
        let (adv, _) = compute_gae(&buf, last, gamma, lambda).unwrap();
        let reference = gae_reference(&buf.rewards, &buf.values, &buf.dones, last, gamma, lambda);
        gae_err = adv
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .fold(gae_err, f64::max);
    }
    let elapsed = start.elapsed();
    let pass = mismatches.is_empty() && gae_err <= 1e-10 && elapsed < Duration::from_secs(60);
    outcome(
        pass,
        format!(
            "{instances} instances, {} mismatches{}, GAE max err {gae_err:.1e}, {:.1}s",
            mismatches.len(),
            mismatches
                .first()
                .map(|m| format!(" (first: {m})"))
                .unwrap_or_default(),
            secs(elapsed)
        ),
    )
}

// ---------------------------------------------------------------- 3

/// One-step two-head bandit; the best joint arm pays 2.
struct Bandit;

impl Environment for Bandit {
    fn observation_size(&self) -> usize {
        2
    }
    fn action_heads(&self) -> Vec<usize> {
        vec![4, 3]
    }
    fn reset(&mut self, _seed: u64) -> skywatch::Result<Vec<f64>> {
        Ok(vec![1.0, -1.0])
    }
    fn step(&mut self, a: &[usize]) -> skywatch::Result<(Vec<f64>, f64, bool)> {
        let r = f64::from(u8::from(a[0] == 2)) + f64::from(u8::from(a[1] == 1));
        Ok((vec![1.0, -1.0], r, true))
    }
}

fn ppo_sanity() -> Outcome {
    let start = Instant::now();
    let config = PpoConfig {
        n_steps: 64,
        minibatch_size: 32,
        epochs_per_update: 4,
        learning_rate: 3e-3,
        total_steps: 64 * 200,
        hidden: vec![16],
        plateau_window: 0,
        ..Default::default()
    };
    let out = train(|_| Ok(Bandit), &config, 3, Execution::Sequential).unwrap();
    let mut r = stream(3, "acc-bandit");
    let episodes = 2000;
    let mean = (0..episodes)
        .map(|i| {
            run_episode(&out.policy, &mut Bandit, i, &mut r, false)
                .unwrap()
                .0
        })
        .sum::<f64>()
        / episodes as f64;
    let elapsed = start.elapsed();
    let pass = out.curve.len() <= 200 && mean >= 0.95 * 2.0 && elapsed < Duration::from_secs(300);
    outcome(
        pass,
        format!(
            "mean reward {mean:.3} of optimum 2 ({:.1}%), {} updates, {:.1}s",
            50.0 * mean,
            out.curve.len(),
            secs(elapsed)
        ),
    )
}

// ---------------------------------------------------------------- 4

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

struct RangeMean {
    range: f64,
    mean: f64,
}

fn range_means(path: &Path) -> Vec<RangeMean> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let mut out: Vec<(f64, Vec<f64>)> = Vec::new();
    for row in reader.records() {
        let row = row.unwrap();
        let range: f64 = row[0].parse().unwrap();
        let ratio: f64 = row[4].parse().unwrap();
        match out.iter_mut().find(|(r, _)| *r == range) {
            Some((_, v)) => v.push(ratio),
            None => out.push((range, vec![ratio])),
        }
    }
    out.into_iter()
        .map(|(range, v)| RangeMean {
            range,
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
        .collect()
}

fn deterrence_trend() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let config = repo_root().join("configs/desk.toml");
    let cfg = config.to_str().unwrap();
    let out = dir.path().to_str().unwrap();
    let raw = dir.path().join("raw_crimes.csv");
    let steps: Vec<Vec<&str>> = vec![
        vec!["synth-data"],
        vec!["ingest", "--input", raw.to_str().unwrap()],
        vec!["train-predictor"],
        vec!["train-policy"],
        vec!["eval-sweep"],
        vec!["baseline"],
    ];
    for step in &steps {
        let mut args = vec!["--config", cfg, "--out", out];
        args.extend_from_slice(step);
        let o = common::skywatch(dir.path(), &args);
        if !o.status.success() {
            return outcome(
                false,
                format!(
                    "{step:?} failed: {}",
                    String::from_utf8_lossy(&o.stderr).trim()
                ),
            );
        }
    }
    let rl = range_means(&dir.path().join("rl_sweep.csv"));
    let base = range_means(&dir.path().join("baseline_sweep.csv"));
    let elapsed = start.elapsed();
    let monotone = |v: &[RangeMean]| {
        v.windows(2)
            .all(|w| w[1].range > w[0].range && w[1].mean >= w[0].mean)
    };
    let lift_ok = rl.len() == base.len()
        && rl
            .iter()
            .zip(&base)
            .all(|(a, b)| a.range == b.range && a.mean >= 1.2 * b.mean && a.mean > b.mean);
    let pass = lift_ok && monotone(&rl) && monotone(&base) && elapsed < Duration::from_secs(7200);
    let table: Vec<String> = rl
        .iter()
        .zip(&base)
        .map(|(a, b)| format!("{}m {:.3}/{:.3}", a.range, a.mean, b.mean))
        .collect();
    outcome(
        pass,
        format!(
            "RL/baseline {} | monotone RL {} baseline {}, {:.0}s",
            table.join(", "),
            monotone(&rl),
            monotone(&base),
            secs(elapsed)
        ),
    )
}

// ---------------------------------------------------------------- 5 and 6

/// Mean accuracy over seeds at one `(p12, p23)` point, seeds in order.
fn seed_accuracies(rows: &[SweepRow], tag: &str, p12: f64, p23: f64) -> Vec<f64> {
    let mut v: Vec<&SweepRow> = rows
        .iter()
        .filter(|r| r.model_tag == tag && r.p12 == p12 && r.p23 == p23)
        .collect();
    v.sort_by_key(|r| r.seed);
    v.iter().map(|r| r.accuracy).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn loss_resilience(
    models: &[(String, skywatch::di::DeskNet)],
    cfg: &DiConfig,
    start: Instant,
) -> Outcome {
    let (_, test) = datasets(cfg, 2024);
    let rows = sweep_eval(models, cfg, &test, 2024, Execution::Parallel).unwrap();
    let (tuned, conv) = ("dropout_0.5", "conventional");
    let mut pass = true;
    let mut parts = Vec::new();
    for varied in ["p12", "p23"] {
        let at = |tag: &str, p: f64| {
            let (p12, p23) = if varied == "p12" {
                (p, cfg.fixed_p)
            } else {
                (cfg.fixed_p, p)
            };
            seed_accuracies(&rows, tag, p12, p23)
        };
        // Paired drops: the same link realisations for both models.
        let drop = |tag: &str| {
            mean(
                &at(tag, 0.0)
                    .iter()
                    .zip(at(tag, 0.8))
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            )
        };
        let (dt, dc) = (drop(tuned), drop(conv));
        let never_worse = cfg.p_grid.iter().filter(|&&p| p >= 0.3 - 1e-12).all(|&p| {
            let diffs: Vec<f64> = at(tuned, p)
                .iter()
                .zip(at(conv, p))
                .map(|(a, b)| a - b)
                .collect();
            diffs.len() == cfg.loss_seeds && mean(&diffs) >= 0.0
        });
        pass &= dt <= 0.15 && dt < dc && never_worse;
        parts.push(format!(
            "{varied} varied: drop {:.1} vs {:.1} points, tuned ≥ conventional for p ≥ 0.3: {never_worse}",
            100.0 * dt,
            100.0 * dc
        ));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(1800);
    outcome(
        pass,
        format!(
            "split (1,3), {} seeds | {} | {:.0}s",
            cfg.loss_seeds,
            parts.join(" | "),
            secs(elapsed)
        ),
    )
}

fn split_identity(net: &skywatch::di::DeskNet, cfg: &DiConfig) -> Outcome {
    let start = Instant::now();
    let images =
        skywatch::di::generate_images(&cfg.images, 1000, &mut stream(6, "acc-identity")).images;
    let full = net.infer(&images).unwrap();
    let mut identical = true;
    for plan in [SplitPlan::new(1, 3), SplitPlan::new(1, 4)] {
        let split = split_model(net, plan).unwrap();
        let clear = LossyLink::new(0.0, 1);
        let composed = distributed_logits(&split, [&clear, &clear], &images).unwrap();
        identical &= composed.shape() == full.shape()
            && composed
                .data()
                .iter()
                .zip(full.data())
                .all(|(a, b)| a.to_bits() == b.to_bits());
    }
    let elapsed = start.elapsed();
    outcome(
        identical,
        format!(
            "1000 inputs, splits (1,3) and (1,4), bit-identical {identical}, {:.2}s",
            secs(elapsed)
        ),
    )
}

// ---------------------------------------------------------------- 7

fn determinism() -> Outcome {
    let start = Instant::now();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        if let Err(e) = common::run_pipeline(d.path()) {
            return outcome(false, e);
        }
    }
    let (fa, fb) = (common::outputs(a.path()), common::outputs(b.path()));
    let names = |f: &[PathBuf]| {
        f.iter()
            .map(|p| p.file_name().unwrap().to_owned())
            .collect::<Vec<_>>()
    };
    let same_set = names(&fa) == names(&fb);
    let differing: Vec<String> = fa
        .iter()
        .zip(&fb)
        .filter(|(x, y)| std::fs::read(x).unwrap() != std::fs::read(y).unwrap())
        .map(|(x, _)| x.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    let csvs = fa
        .iter()
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .count();
    outcome(
        same_set && differing.is_empty(),
        format!(
            "{} subcommands, {} files ({csvs} CSV) byte-identical, differing {differing:?}, {:.1}s",
            common::PIPELINE.len(),
            fa.len(),
            secs(start.elapsed())
        ),
    )
}

// ---------------------------------------------------------------- 8

fn predictor_utility() -> Outcome {
    let start = Instant::now();
    let blocks = 6;
    let counts = Tensor::from_fn(&[240, blocks], |i| {
        let (t, b) = ((i / blocks) as f64, (i % blocks) as f64);
        4.0 + 3.0 * (std::f64::consts::TAU * t / 6.0 + b).sin()
    });
    let cfg = PredictorConfig {
        hidden_units: 32,
        window_len: 4,
        epochs: 120,
        batch_size: 32,
        optimizer: skywatch::nn::AdamConfig::with_lr(0.01),
        standardize: false,
    };
    let (x, y) = make_training_set(&counts, cfg.window_len).unwrap();
    let n = x.dim(0);
    let cut = n * 3 / 4;
    let (model, _) =
        train_predictor(&x.slice_outer(0, cut), &y.slice_outer(0, cut), &cfg, 8).unwrap();
    let (test_x, test_y, train_y) = (
        x.slice_outer(cut, n),
        y.slice_outer(cut, n),
        y.slice_outer(0, cut),
    );
    let lstm = mse(&model.predict_batch(&test_x).unwrap(), &test_y).unwrap();
    let rows = train_y.dim(0);
    let means: Vec<f64> = (0..blocks)
        .map(|j| {
            (0..rows)
                .map(|i| train_y.data()[i * blocks + j])
                .sum::<f64>()
                / rows as f64
        })
        .collect();
    let baseline = mse(
        &Tensor::from_fn(test_y.shape(), |i| means[i % blocks]),
        &test_y,
    )
    .unwrap();
    let elapsed = start.elapsed();
    outcome(
        lstm * 2.0 <= baseline && elapsed < Duration::from_secs(300),
        format!(
            "MSE forecaster {lstm:.4} vs mean {baseline:.4} ({:.1}× lower), {:.1}s",
            baseline / lstm,
            secs(elapsed)
        ),
    )
}

// ----------------------------------------------------------------

fn report(n: usize, name: &str, o: &Outcome) -> bool {
    println!(
        "criterion {n} {name:<24} {} {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
    o.pass
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut all = true;
    all &= report(1, "gradient integrity", &gradient_integrity());
    all &= report(2, "oracle equivalence", &oracle_equivalence());
    all &= report(3, "ppo sanity", &ppo_sanity());
    all &= report(8, "predictor utility", &predictor_utility());
    all &= report(7, "determinism", &determinism());

    let di_start = Instant::now();
    let cfg = DiConfig {
        dropout_rates: vec![0.5],
        plans: vec![SplitPlan::new(1, 3)],
        ..Default::default()
    };
    let (train_set, _) = datasets(&cfg, 2024);
    let models = train_models(&cfg, &train_set, 2024, Execution::Parallel).unwrap();
    all &= report(6, "split identity", &split_identity(&models[0].1, &cfg));
    all &= report(
        5,
        "loss resilience trend",
        &loss_resilience(&models, &cfg, di_start),
    );

    all &= report(4, "deterrence trend", &deterrence_trend());
    if !all {
        std::process::exit(1);
    }
}
