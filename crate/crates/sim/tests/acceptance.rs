//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.
//!
//! Criteria 6 to 9 train desk-scale demodulators with reduced attention
//! (2 heads of width 16); everything else is exact.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use ndarray::Array3;
use noma_csk::demod::{evaluate, generate_dataset, stack_features, train};
use noma_csk::demod::{DatasetConfig, DemodulatorModel, Hyperparams, TrainConfig};
use noma_csk::features::psd;
use noma_csk::link::{LinkConfig, LinkScenario};
use noma_csk::metrics::{complexity_estimate, energy_efficiency, mutual_information, spectral_efficiency, BerRecord};
use noma_csk::nn::layers::cross_entropy_batch;
use noma_csk::noma::power_coefficients;
use noma_csk_sim::{run_ber_sweep, run_robustness_sweep, run_security_eval, ExperimentConfig};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn desk_hyper() -> Hyperparams {
    Hyperparams {
        heads: 2,
        head_dim: 16,
        ..Hyperparams::default()
    }
}

fn train_model(n: usize, beta: usize, scenario: LinkScenario, snr: (f64, f64), samples: usize, epochs: usize) -> Trained {
    let t = Instant::now();
    let link = LinkConfig::new(n, beta, scenario).expect("link");
    let data = generate_dataset(
        &DatasetConfig {
            link,
            n_samples: samples,
            snr_range_db: snr,
        },
        1,
    )
    .expect("dataset");
    let init = DemodulatorModel::new(beta, desk_hyper(), 7).expect("model");
    let cfg = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let (model, history) = train(&init, &data, &cfg).expect("training");
    let best = history.best().expect("history").clone();
    eprintln!(
        "  trained N={n} beta={beta} {scenario:?}: best epoch {} val acc {:.4} in {:.0}s",
        best.epoch,
        best.val_accuracy,
        t.elapsed().as_secs_f64()
    );
    Trained {
        model,
        val_accuracy: best.val_accuracy,
    }
}

struct Trained {
    model: DemodulatorModel,
    val_accuracy: f64,
}

fn two_vehicle_model() -> &'static Trained {
    static M: OnceLock<Trained> = OnceLock::new();
    M.get_or_init(|| train_model(2, 32, LinkScenario::Rayleigh, (24.0, 28.0), 100_000, 20))
}

fn sweep_cfg(n: usize, beta: usize, scenario: LinkScenario, snr: &[f64], bits: u64) -> ExperimentConfig {
    ExperimentConfig {
        n_vehicles: n,
        beta,
        scenario,
        snr_db: snr.to_vec(),
        bits_per_point: bits,
        model: desk_hyper(),
        ..ExperimentConfig::default()
    }
}

fn fmt_ber(records: &[BerRecord]) -> String {
    records
        .iter()
        .map(|r| format!("{}dB/v{}={:.4}", r.snr_db, r.vehicle, r.ber()))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Later point not worse than the earlier one, or the two Wilson intervals overlap.
fn non_increasing(a: &BerRecord, b: &BerRecord) -> bool {
    b.ber() <= a.ber() || b.wilson().0 <= a.wilson().1
}

fn c1_parameter_counts() -> Check {
    let model = DemodulatorModel::new(64, Hyperparams::default(), 0).map_err(|e| e.to_string())?;
    let counts: Vec<usize> = model
        .layer_parameter_counts()
        .into_iter()
        .filter(|(name, _)| !matches!(*name, "input" | "mhsa" | "gap"))
        .map(|(_, c)| c)
        .collect();
    ensure(counts == [224, 64, 6176, 64, 2112, 130], format!("{counts:?}"))
}

fn c2_shape_chain() -> Check {
    for beta in [8, 16, 32, 64, 128] {
        let model = DemodulatorModel::new(beta, Hyperparams::default(), 0).map_err(|e| e.to_string())?;
        let got = model.shape_chain();
        let want: Vec<Vec<usize>> = vec![
            vec![2, beta],
            vec![32, beta - 2],
            vec![32, beta - 2],
            vec![32, beta - 7],
            vec![32, beta - 7],
            vec![32, beta - 7],
            vec![32],
            vec![64],
            vec![2],
        ];
        let shapes: Vec<Vec<usize>> = got.into_iter().map(|(_, s)| s).collect();
        if shapes != want {
            return Err(format!("beta {beta}: {shapes:?}"));
        }
    }
    Ok("beta 8..128 match".into())
}

fn c3_gradient_check() -> Check {
    let hyper = Hyperparams {
        filters: 4,
        kernel_size: 3,
        heads: 2,
        head_dim: 3,
        fc_hidden: 64,
    };
    let mut model = DemodulatorModel::new(16, hyper, 21).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for t in &mut model.params_mut().tensors {
        if t.name.ends_with("bias") || t.name.ends_with("beta") || t.name.ends_with("gamma") {
            for v in t.data_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
    }
    let x = Array3::from_shape_fn((2, 2, 16), |_| rng.random_range(-2.0..2.0));
    let labels = [0u8, 1];
    let loss = |m: &DemodulatorModel| {
        let tape = m.forward_train(x.view()).expect("forward");
        cross_entropy_batch(tape.probs().view(), &labels).expect("loss").0
    };
    let tape = model.forward_train(x.view()).map_err(|e| e.to_string())?;
    let grads = model.backward(&tape, &labels).map_err(|e| e.to_string())?;
    let eps = 1e-6;
    let mut worst = 0.0f64;
    for ti in 0..model.params().tensors.len() {
        for j in 0..model.params().tensors[ti].len() {
            let orig = model.params().tensors[ti].data()[j];
            model.params_mut().tensors[ti].data_mut()[j] = orig + eps;
            let up = loss(&model);
            model.params_mut().tensors[ti].data_mut()[j] = orig - eps;
            let down = loss(&model);
            model.params_mut().tensors[ti].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grads.params.tensors[ti].data()[j];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5);
            worst = worst.max(rel);
        }
    }
    ensure(
        worst < 1e-4,
        format!("{} parameters, worst relative error {worst:.2e}", model.parameter_count()),
    )
}

fn c4_closed_forms() -> Check {
    let alloc = power_coefficients(4).map_err(|e| e.to_string())?;
    if alloc.coefficients() != [8.0 / 15.0, 4.0 / 15.0, 2.0 / 15.0, 1.0 / 15.0] {
        return Err(format!("power coefficients {:?}", alloc.coefficients()));
    }
    let ee = energy_efficiency(0.0, 1.0).map_err(|e| e.to_string())?;
    let se = spectral_efficiency(4, 64).map_err(|e| e.to_string())?;
    let dominant = complexity_estimate(128, 32, 8, 64, 3).map_err(|e| e.to_string())?.dominant();
    if ee != 1.0 || se != 0.0625 || dominant != 524_288 {
        return Err(format!("EE {ee}, SE {se}, dominant {dominant}"));
    }
    let mi_half = mutual_information(0.5).map_err(|e| e.to_string())?;
    let mut worst = mi_half.abs();
    for i in 0..=100 {
        let p = i as f64 / 100.0;
        let a = mutual_information(p).map_err(|e| e.to_string())?;
        let b = mutual_information(1.0 - p).map_err(|e| e.to_string())?;
        worst = worst.max((a - b).abs());
    }
    ensure(
        worst <= 1e-12,
        format!("EE 1, SE 0.0625, dominant 524288, MI symmetry error {worst:.1e}"),
    )
}

fn c5_spectral() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst_parseval = 0.0f64;
    let mut worst_shift = 0.0f64;
    for _ in 0..1000 {
        let r: Vec<Complex64> = (0..64)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let s = psd(&r).map_err(|e| e.to_string())?;
        let lhs: f64 = s.iter().sum();
        let rhs = 64.0 * r.iter().map(|z| z.norm_sqr()).sum::<f64>();
        worst_parseval = worst_parseval.max((lhs - rhs).abs() / rhs);
        let mut shifted = r.clone();
        shifted.rotate_left(rng.random_range(1..64));
        let t = psd(&shifted).map_err(|e| e.to_string())?;
        for (a, b) in s.iter().zip(&t) {
            worst_shift = worst_shift.max((a - b).abs() / a.abs().max(b.abs()).max(1e-300));
        }
    }
    ensure(
        worst_parseval <= 1e-9 && worst_shift <= 1e-9,
        format!("Parseval {worst_parseval:.1e}, shift {worst_shift:.1e}"),
    )
}

fn c6_single_user() -> Check {
    let trained = train_model(1, 16, LinkScenario::Awgn, (20.0, 20.0), 50_000, 10);
    let cfg = sweep_cfg(1, 16, LinkScenario::Awgn, &[4.0, 10.0, 16.0], 50_000);
    let r = run_ber_sweep(&cfg, &trained.model).map_err(|e| e.to_string())?;
    let decreasing = r.windows(2).all(|w| w[1].ber() < w[0].ber());
    ensure(
        trained.val_accuracy > 0.95 && decreasing,
        format!("val acc {:.4}; {}", trained.val_accuracy, fmt_ber(&r)),
    )
}

fn c7_two_vehicles() -> Check {
    let trained = two_vehicle_model();
    let cfg = sweep_cfg(2, 32, LinkScenario::Rayleigh, &[8.0, 16.0, 24.0], 100_000);
    let r = run_ber_sweep(&cfg, &trained.model).map_err(|e| e.to_string())?;
    let top: Vec<&BerRecord> = r.iter().filter(|x| x.snr_db == 24.0).collect();
    let below = top.iter().all(|x| x.ber() < 0.25);
    let monotone = (1..=2).all(|v| {
        let per: Vec<&BerRecord> = r.iter().filter(|x| x.vehicle == v).collect();
        per.windows(2).all(|w| non_increasing(w[0], w[1]))
    });

    let four = train_model(4, 32, LinkScenario::Rayleigh, (24.0, 28.0), 50_000, 10);
    let cfg4 = sweep_cfg(4, 32, LinkScenario::Rayleigh, &[24.0], 100_000);
    let r4 = run_ber_sweep(&cfg4, &four.model).map_err(|e| e.to_string())?;
    let mean = |rs: &[&BerRecord]| rs.iter().map(|x| x.ber()).sum::<f64>() / rs.len() as f64;
    let m2 = mean(&top);
    let m4 = mean(&r4.iter().collect::<Vec<_>>());
    ensure(
        below && monotone && m4 > m2,
        format!("{}; mean at 24 dB N=2 {m2:.4} vs N=4 {m4:.4}", fmt_ber(&r)),
    )
}

fn c8_security() -> Check {
    let trained = train_model(4, 64, LinkScenario::Rayleigh, (24.0, 28.0), 50_000, 10);
    let cfg = sweep_cfg(4, 64, LinkScenario::Rayleigh, &[8.0, 16.0, 24.0], 50_000);
    let points = run_security_eval(&cfg, &trained.model, &cfg.eve_config()).map_err(|e| e.to_string())?;
    let mut detail = Vec::new();
    let mut ok = true;
    for p in &points {
        let rep = &p.report;
        let eve_ok = rep.eve_ber.iter().all(|b| (0.35..=0.65).contains(b));
        ok &= eve_ok && rep.leakage < 0.1 && rep.secrecy_capacity > 0.0;
        detail.push(format!(
            "{}dB legit {:?} eve {:?} leak {:.4} secrecy {:.4}",
            p.snr_db,
            rep.legit_ber.iter().map(|b| (b * 1e4).round() / 1e4).collect::<Vec<_>>(),
            rep.eve_ber.iter().map(|b| (b * 1e4).round() / 1e4).collect::<Vec<_>>(),
            rep.leakage,
            rep.secrecy_capacity
        ));
    }
    let top = &points.last().expect("points").report;
    let legit_mean = top.legit_ber.iter().sum::<f64>() / top.legit_ber.len() as f64;
    ok &= legit_mean < 0.25;
    ok &= points
        .windows(2)
        .all(|w| w[1].report.secrecy_capacity > w[0].report.secrecy_capacity);
    ensure(ok, format!("{}; top mean legit {legit_mean:.4}", detail.join(" | ")))
}

fn c9_robustness() -> Check {
    let trained = two_vehicle_model();
    let cfg = sweep_cfg(2, 32, LinkScenario::Rayleigh, &[24.0], 100_000);
    let plain = run_ber_sweep(&cfg, &trained.model).map_err(|e| e.to_string())?;
    let rhos = [1.0, 0.95, 0.85];
    let rows = run_robustness_sweep(&cfg, &trained.model, &rhos).map_err(|e| e.to_string())?;
    let at = |rho: f64| -> Vec<BerRecord> { rows.iter().filter(|r| r.rho == rho).map(|r| r.record).collect() };
    let identical = at(1.0) == plain;
    let pooled: Vec<BerRecord> = rhos
        .iter()
        .map(|&rho| {
            let rs = at(rho);
            BerRecord {
                snr_db: 24.0,
                vehicle: 0,
                bits: rs.iter().map(|r| r.bits).sum(),
                errors: rs.iter().map(|r| r.errors).sum(),
            }
        })
        .collect();
    let inversions = pooled.windows(2).filter(|w| w[1].ber() < w[0].ber()).count();
    let within_ci = pooled.windows(2).all(|w| non_increasing(&w[1], &w[0]));
    ensure(
        identical && inversions <= 1 && within_ci,
        format!(
            "rho=1 identical: {identical}; mean BER {}",
            pooled
                .iter()
                .zip(rhos)
                .map(|(r, rho)| format!("rho {rho}: {:.4}", r.ber()))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn run_cli(dir: &Path, out: &str, model: &str, cmd: &str) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_noma-sim"))
        .current_dir(dir)
        .args(["--config", "exp.toml", "--model", model, "--out", out, cmd])
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    Ok(())
}

fn c10_reproducibility() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = r#"
n_vehicles = 2
beta = 16
scenario = "rayleigh"
snr_db = [10.0, 20.0]
bits_per_point = 2000
rho_grid = [1.0, 0.9]

[model]
filters = 8
heads = 2
head_dim = 8
fc_hidden = 16

[training]
samples = 2000
epochs = 2

[eve]
intercept_count = 512
epochs = 1
"#;
    fs::write(dir.path().join("exp.toml"), config).map_err(|e| e.to_string())?;
    let mut compared = 0;
    for (cmd, file) in [
        ("dataset-gen", "dataset.csv"),
        ("train", "training.csv"),
        ("ber", "ber.csv"),
        ("robustness", "robustness.csv"),
        ("security", "security.csv"),
    ] {
        let mut bytes = Vec::new();
        for out in ["a", "b"] {
            let model = if cmd == "train" { format!("{out}.dncw") } else { "a.dncw".to_string() };
            run_cli(dir.path(), out, &model, cmd)?;
            bytes.push(fs::read(dir.path().join(out).join(file)).map_err(|e| e.to_string())?);
        }
        if bytes[0] != bytes[1] || bytes[0].is_empty() {
            return Err(format!("{cmd}: {file} differs between runs"));
        }
        compared += 1;
    }
    let wa = fs::read(dir.path().join("a.dncw")).map_err(|e| e.to_string())?;
    let wb = fs::read(dir.path().join("b.dncw")).map_err(|e| e.to_string())?;
    if wa != wb {
        return Err("trained weights differ between runs".into());
    }

    let model = DemodulatorModel::load(&dir.path().join("a.dncw")).map_err(|e| e.to_string())?;
    let path = dir.path().join("roundtrip.dncw");
    model.save(&path).map_err(|e| e.to_string())?;
    let back = DemodulatorModel::load(&path).map_err(|e| e.to_string())?;
    let resaved = dir.path().join("again.dncw");
    back.save(&resaved).map_err(|e| e.to_string())?;
    let same_bytes = fs::read(&path).map_err(|e| e.to_string())? == fs::read(&resaved).map_err(|e| e.to_string())?;
    let link = LinkConfig::new(2, 16, LinkScenario::Rayleigh).map_err(|e| e.to_string())?;
    let probe = generate_dataset(&DatasetConfig::new(link, 64), 9).map_err(|e| e.to_string())?;
    let x = stack_features(probe.iter().map(|s| &s.feature), 16).map_err(|e| e.to_string())?;
    let labels: Vec<u8> = probe.iter().map(|s| s.label.as_u8()).collect();
    let same_eval = evaluate(&model, &x, &labels).map_err(|e| e.to_string())?
        == evaluate(&back, &x, &labels).map_err(|e| e.to_string())?;
    ensure(
        model == back && same_bytes && same_eval,
        format!("{compared} subcommands byte-identical, save/load exact"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("parameter-count audit", c1_parameter_counts),
        ("shape-chain audit", c2_shape_chain),
        ("gradient check", c3_gradient_check),
        ("closed-form metrics", c4_closed_forms),
        ("spectral invariants", c5_spectral),
        ("scaled learning check", c6_single_user),
        ("scaled system check", c7_two_vehicles),
        ("security replication", c8_security),
        ("robustness replication", c9_robustness),
        ("reproducibility", c10_reproducibility),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let t = Instant::now();
        let outcome = check();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {id:>2} {name}: PASS ({d}) [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("criterion {id:>2} {name}: FAIL ({d}) [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
