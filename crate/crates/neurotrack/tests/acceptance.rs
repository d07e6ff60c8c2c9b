//! One PASS/FAIL line per acceptance criterion; exits non-zero on any FAIL.

use std::f64::consts::PI;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use neurotrack_core::apps::{replay, rho_log_from_jsonl, rho_log_to_jsonl, snake_step, Cell, SnakeConfig, SnakeState};
use neurotrack_core::dsp::{preprocess, subband_weight, FilterBankSpec};
use neurotrack_core::layout::{stage2_targets, Alignment, Ring, TargetSpec};
use neurotrack_core::stats::{mean, paired_t_greater, pearson};
use neurotrack_core::synth::{make_cohort, SyntheticSubject};
use neurotrack_core::task::{
    fitts_itr, initial_models, Decoder, Engine, FirstStepErrors, MetricsReport, Outcome, StepRecord, TaskKind,
    TrialRecord,
};
use neurotrack_core::trca::{trca_filter, RhoVector, TemplateMatcher};
use neurotrack_core::velocity::{decay_profile, initial_velocity_weight, total_displacement, VelocityDecoder};
use neurotrack_core::{EegEpoch, SessionConfig, Vec2};

type Outcome2 = Result<String, String>;

struct Criterion {
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome2,
}

fn check(ok: bool, detail: String) -> Outcome2 {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn formula_oracles() -> Outcome2 {
    let mut worst_w = 0.0f64;
    for m in 1..=10 {
        let direct = (m as f64).powf(-1.25) + 0.25;
        worst_w = worst_w.max((subband_weight(m).map_err(|e| e.to_string())? - direct).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_itr = 0.0f64;
    for _ in 0..100 {
        let d: f64 = rng.random_range(1.0..1000.0);
        let s = rng.random_range(1.0..200.0);
        let t = rng.random_range(0.1..20.0);
        let direct = (d / s + 1.0).log2() / t;
        worst_itr = worst_itr.max((fitts_itr(d, s, t).map_err(|e| e.to_string())? - direct).abs());
    }
    let config = SessionConfig::default();
    let h = 2f64.sqrt() / 2.0;
    let printed = [
        [1.0, 0.0],
        [h, h],
        [0.0, 1.0],
        [-h, h],
        [-1.0, 0.0],
        [-h, -h],
        [0.0, -1.0],
        [h, -h],
    ];
    let s = config.width() / 6.0;
    let expected: Vec<[f64; 2]> = printed.iter().map(|[x, y]| [x * s, y * s]).collect();
    let exact = initial_velocity_weight(&config).matrix == expected;
    check(
        worst_w <= 1e-12 && worst_itr <= 1e-12 && exact,
        format!("sub-band weight err {worst_w:.1e}, ITR err {worst_itr:.1e}, initial weight exact: {exact}"),
    )
}

fn trca_planted_recovery() -> Outcome2 {
    let (nc, len, trials) = (21, 250, 6);
    let mut good = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DVector::from_fn(nc, |_, _| rng.sample::<f64, _>(StandardNormal)).normalize();
        let s: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        // unit-power source against unit total noise power: 0 dB
        let sd = (1.0 / nc as f64).sqrt();
        let x: Vec<DMatrix<f64>> = (0..trials)
            .map(|_| DMatrix::from_fn(nc, len, |c, t| a[c] * s[t] + sd * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let (w, _) = trca_filter(std::slice::from_ref(&x)).map_err(|e| e.to_string())?;
        let w = DVector::from_column_slice(&w);
        let r = mean(
            &x.iter()
                .map(|m| pearson(m.tr_mul(&w).as_slice(), &s).abs())
                .collect::<Vec<_>>(),
        );
        good += usize::from(r >= 0.9);
    }
    check(good >= 95, format!("{good}/100 seeds with correlation ≥ 0.9"))
}

fn trained(config: &SessionConfig, subject: &SyntheticSubject) -> Result<(Engine, neurotrack_core::task::Training, Decoder), String> {
    let engine = Engine::new(config, subject).map_err(|e| e.to_string())?;
    let training = engine.run_training().map_err(|e| e.to_string())?;
    let decoder = Decoder::new(&training.models, config).map_err(|e| e.to_string())?;
    Ok((engine, training, decoder))
}

fn classification_baseline() -> Outcome2 {
    let config = SessionConfig::default();
    let (engine, _, decoder) = trained(&config, &SyntheticSubject::default_for(&config))?;
    let (mut correct, mut total) = (0, 0);
    for rep in 0..25 {
        for region in 0..config.n_regions {
            let epoch = engine.stage1_test_epoch(region, rep).map_err(|e| e.to_string())?;
            let rho = decoder.matcher.match_raw(&epoch).map_err(|e| e.to_string())?;
            correct += usize::from(rho.argmax() == region);
            total += 1;
        }
    }
    let acc = correct as f64 / total as f64;
    check(acc >= 0.95, format!("held-out accuracy {acc:.3} ({correct}/{total})"))
}

fn cohort() -> Result<(SessionConfig, Vec<SyntheticSubject>), String> {
    let config = SessionConfig::default();
    let subjects = make_cohort(17, 7, &config).map_err(|e| e.to_string())?;
    Ok((config, subjects))
}

fn rho_distribution_shape() -> Outcome2 {
    let (config, subjects) = cohort()?;
    let targets: Vec<TargetSpec> = stage2_targets(&config)
        .into_iter()
        .filter(|t| t.alignment == Alignment::Center)
        .collect();
    let n = config.n_regions;
    let (mut t_out, mut t_in, mut a_out, mut a_in) = (vec![], vec![], vec![], vec![]);
    for subject in &subjects {
        let (engine, _, decoder) = trained(&config, subject)?;
        let mut sums = [[0.0; 2]; 2];
        let mut counts = [0.0; 2];
        for rep in 0..6 {
            for t in &targets {
                let r = t.region.expect("center targets sit on a region");
                let epoch = engine.stage2_test_epoch(t, rep).map_err(|e| e.to_string())?;
                let rho = decoder.matcher.match_raw(&epoch).map_err(|e| e.to_string())?.rho;
                let ring = usize::from(t.ring == Ring::Outer);
                sums[ring][0] += rho[r];
                sums[ring][1] += (rho[(r + 1) % n] + rho[(r + n - 1) % n]) / 2.0;
                counts[ring] += 1.0;
            }
        }
        t_in.push(sums[0][0] / counts[0]);
        a_in.push(sums[0][1] / counts[0]);
        t_out.push(sums[1][0] / counts[1]);
        a_out.push(sums[1][1] / counts[1]);
    }
    let target = paired_t_greater(&t_out, &t_in);
    let adjacent = paired_t_greater(&a_in, &a_out);
    check(
        target.p_greater < 0.05 && adjacent.p_greater < 0.05,
        format!(
            "target ρ outer {:.3} > inner {:.3} (p={:.1e}); adjacent ρ inner {:.3} > outer {:.3} (p={:.1e})",
            mean(&t_out),
            mean(&t_in),
            target.p_greater,
            mean(&a_in),
            mean(&a_out),
            adjacent.p_greater
        ),
    )
}

fn velocity_weight_effect() -> Outcome2 {
    let (config, subjects) = cohort()?;
    let (mut vec_init, mut vec_star, mut ang_init, mut ang_star) = (vec![], vec![], vec![], vec![]);
    let (mut gain_inner, mut gain_outer) = (vec![], vec![]);
    for subject in &subjects {
        let (engine, training, decoder) = trained(&config, subject)?;
        let firsts = engine.fixed_first_steps(&decoder).map_err(|e| e.to_string())?;
        let errors = |vd: VelocityDecoder| {
            FirstStepErrors::from_decodes(&firsts, &vd, config.step_seconds, &engine.layout).map_err(|e| e.to_string())
        };
        let star = errors(VelocityDecoder::new(training.models.velocity.clone(), &config))?;
        let init = errors(VelocityDecoder::new(initial_models(&training, &config).velocity, &config))?;
        vec_init.push(init.mean_vector(None));
        vec_star.push(star.mean_vector(None));
        ang_init.push(init.mean_angular(None));
        ang_star.push(star.mean_angular(None));
        gain_inner.push(init.mean_vector(Some(Ring::Inner)) - star.mean_vector(Some(Ring::Inner)));
        gain_outer.push(init.mean_vector(Some(Ring::Outer)) - star.mean_vector(Some(Ring::Outer)));
    }
    let vector = paired_t_greater(&vec_init, &vec_star);
    let angular = paired_t_greater(&ang_init, &ang_star);
    let interaction = paired_t_greater(&gain_inner, &gain_outer);
    check(
        vector.p_greater < 0.05 && angular.p_greater < 0.05 && interaction.p_greater < 0.05,
        format!(
            "vector error {:.3} → {:.3} (p={:.1e}); angular {:.1}° → {:.1}° (p={:.1e}); reduction inner {:.3} vs outer {:.3} (p={:.1e})",
            mean(&vec_init),
            mean(&vec_star),
            vector.p_greater,
            mean(&ang_init),
            mean(&ang_star),
            angular.p_greater,
            mean(&gain_inner),
            mean(&gain_outer),
            interaction.p_greater
        ),
    )
}

fn closed_loop_band() -> Outcome2 {
    let config = SessionConfig::default();
    let (engine, _, decoder) = trained(&config, &SyntheticSubject::default_for(&config))?;
    let fixed = engine.run_fixed_task(&decoder).map_err(|e| e.to_string())?;
    let random = engine.run_random_task(&decoder).map_err(|e| e.to_string())?;
    let f = MetricsReport::for_config(&fixed, &config).map_err(|e| e.to_string())?;
    let r = MetricsReport::for_config(&random, &config).map_err(|e| e.to_string())?;
    let itr = f.fitts_itr_bps.mean;
    check(
        f.success_rate >= 0.9 && (0.30..=0.80).contains(&itr) && r.success_rate >= 0.75,
        format!(
            "fixed success {:.3}, ITR {:.3} bps; random success {:.3}",
            f.success_rate, itr, r.success_rate
        ),
    )
}

fn metric_exclusion() -> Outcome2 {
    let config = SessionConfig::default();
    let target = |x: f64| TargetSpec::free(Vec2::new(x, 0.0), 40.0);
    let record = |i: usize, x: f64, outcome: Outcome, t: f64| TrialRecord {
        subject: 0,
        task: TaskKind::Random,
        trial: i,
        target: target(x),
        start_px: Vec2::ZERO,
        steps: vec![StepRecord {
            rho: RhoVector::new(vec![0.0; 8]),
            velocity: Vec2::ZERO,
            cursor: Vec2::ZERO,
        }],
        outcome,
        time_to_target_s: t,
        end_px: Vec2::new(x, 0.0),
        post_hit: Vec::new(),
    };
    let records = vec![
        record(0, 200.0, Outcome::Hit, 2.0),
        record(1, 300.0, Outcome::Timeout, 15.0),
        record(2, 100.0, Outcome::Hit, 4.0),
        record(3, 250.0, Outcome::Timeout, 15.0),
    ];
    let m = MetricsReport::for_config(&records, &config).map_err(|e| e.to_string())?;
    let itr = ((200.0f64 / 80.0 + 1.0).log2() / 2.0 + (100.0f64 / 80.0 + 1.0).log2() / 4.0) / 2.0;
    check(
        m.success_rate == 0.5 && (m.fitts_itr_bps.mean - itr).abs() < 1e-12 && m.time_to_target_s.mean == 3.0,
        format!(
            "success {} (expect 0.5), ITR {:.6} (expect {itr:.6}), TTT {} (expect 3)",
            m.success_rate, m.fitts_itr_bps.mean, m.time_to_target_s.mean
        ),
    )
}

fn decay_conservation() -> Outcome2 {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut bad = 0;
    for _ in 0..1000 {
        let v = Vec2::new(rng.random_range(-5000.0..5000.0), rng.random_range(-5000.0..5000.0));
        let frames = rng.random_range(1..=120);
        bad += usize::from(total_displacement(&decay_profile(v, frames)) != v);
    }
    check(bad == 0, format!("{bad}/1000 velocities not reproduced exactly"))
}

fn snake_rules() -> Outcome2 {
    let alpha = 0.05;
    let confident = |region: usize| {
        let mut r = vec![0.1, 0.12, 0.08, 0.11, 0.09, 0.1, 0.13, 0.07];
        r[region] = 0.9;
        RhoVector::new(r)
    };
    let start = SnakeState::new(&SnakeConfig::default()).map_err(|e| e.to_string())?;
    let step = |s: &SnakeState, r: &RhoVector| snake_step(s, r, alpha).map_err(|e| e.to_string());

    let mut fed = start.clone();
    fed.food = Some(Cell { col: fed.head().col + 1, row: fed.head().row });
    let grown = step(&fed, &confident(0))?;
    let grows = grown.len() == start.len() + 1 && grown.score == 1;
    let collides = !step(&start, &confident(4))?.alive;
    let holds = [1, 3, 5, 7].iter().all(|&d| step(&start, &confident(d)).is_ok_and(|s| s == start));

    let script: Vec<RhoVector> = [2, 2, 1, 0, 0, 6, 5, 4, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0]
        .iter()
        .map(|&r| confident(r))
        .collect();
    let live = replay(&start, &script, alpha).map_err(|e| e.to_string())?;
    let back = rho_log_from_jsonl(&rho_log_to_jsonl(&script)).map_err(|e| e.to_string())?;
    let again = replay(&start, &back, alpha).map_err(|e| e.to_string())?;
    let identical = serde_json::to_string(&live).ok() == serde_json::to_string(&again).ok() && back == script;
    let deterministic = replay(&start, &script, alpha).ok() == Some(live.clone());
    check(
        grows && collides && holds && identical && deterministic,
        format!(
            "grow {grows}, collide {collides}, diagonal hold {holds}, replay bit-identical {identical}, deterministic {deterministic}"
        ),
    )
}

fn dual_path() -> Outcome2 {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = Command::new(env!("CARGO_BIN_EXE_neurotrack"))
        .args(["simulate", "--task", "fixed", "--task", "random", "--seed", "11", "--out"])
        .arg(dir.path())
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    let cli_trials = std::fs::read(dir.path().join("trials.jsonl")).map_err(|e| e.to_string())?;
    let cli_metrics = std::fs::read(dir.path().join("metrics.json")).map_err(|e| e.to_string())?;

    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let (trials, metrics) = rt.block_on(async {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.map_err(|e| e.to_string())?;
        let base = format!("http://{}", listener.local_addr().map_err(|e| e.to_string())?);
        tokio::spawn(neurotrack::service::serve(listener));
        let client = reqwest::Client::new();
        let post = |path: String, body: serde_json::Value| {
            let req = client.post(format!("{base}{path}")).json(&body);
            async move {
                let r = req.send().await.map_err(|e| e.to_string())?;
                if !r.status().is_success() {
                    return Err(format!("{path}: {}", r.status()));
                }
                r.json::<serde_json::Value>().await.map_err(|e| e.to_string())
            }
        };
        let created = post("/sessions".into(), serde_json::json!({ "seed": 11 })).await?;
        let id = created["session_id"].as_str().ok_or("no session id")?.to_string();
        post(format!("/sessions/{id}/train"), serde_json::json!({})).await?;
        for task in ["fixed", "random"] {
            post(format!("/sessions/{id}/tasks"), serde_json::json!({ "task": task })).await?;
        }
        let get = |what: &str| {
            let req = client.get(format!("{base}/sessions/{id}/export/{what}"));
            async move { Ok::<_, String>(req.send().await.map_err(|e| e.to_string())?.bytes().await.map_err(|e| e.to_string())?.to_vec()) }
        };
        Ok::<_, String>((get("trials").await?, get("metrics").await?))
    })?;
    let n = cli_trials.iter().filter(|&&b| b == b'\n').count();
    check(
        trials == cli_trials && metrics == cli_metrics && n > 0,
        format!(
            "{n} trial lines; logs identical: {}, metrics identical: {}",
            trials == cli_trials,
            metrics == cli_metrics
        ),
    )
}

fn dsp() -> Outcome2 {
    let spec = FilterBankSpec::default();
    let rms = |x: &[f64]| (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
    let tone: Vec<f64> = (0..1000).map(|i| (2.0 * PI * 50.0 * i as f64 / 1000.0).sin()).collect();
    let run = |x: Vec<f64>| -> Result<Vec<f64>, String> {
        let e = EegEpoch::new(vec![x], 1000.0).map_err(|e| e.to_string())?;
        Ok(preprocess(&e, &spec).map_err(|e| e.to_string())?.samples.remove(0))
    };
    let out = run(tone.clone())?;
    let db = 20.0 * (rms(&out) / rms(&tone)).log10();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a: Vec<f64> = (0..1000).map(|_| rng.sample(StandardNormal)).collect();
    let b: Vec<f64> = (0..1000).map(|i| (2.0 * PI * 11.0 * i as f64 / 1000.0).cos()).collect();
    let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 1.5 * x - 2.5 * y).collect();
    let (pa, pb, pm) = (run(a)?, run(b)?, run(mix)?);
    let scale = pm.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rel = pm
        .iter()
        .zip(pa.iter().zip(&pb))
        .map(|(m, (x, y))| (m - (1.5 * x - 2.5 * y)).abs() / scale)
        .fold(0.0f64, f64::max);
    check(
        db <= -30.0 && out.len() == 250 && rel <= 1e-9,
        format!("50 Hz at {db:.1} dB, 1 s @ 1000 Hz → {} samples, linearity error {rel:.1e}", out.len()),
    )
}

fn main() {
    let criteria = [
        Criterion { name: "formula oracles", limit: Duration::from_secs(1), run: formula_oracles },
        Criterion { name: "TRCA planted-component recovery", limit: Duration::from_secs(30), run: trca_planted_recovery },
        Criterion { name: "classification baseline", limit: Duration::from_secs(60), run: classification_baseline },
        Criterion { name: "rho distribution shape", limit: Duration::from_secs(300), run: rho_distribution_shape },
        Criterion { name: "velocity weight effect", limit: Duration::from_secs(600), run: velocity_weight_effect },
        Criterion { name: "closed-loop band", limit: Duration::from_secs(600), run: closed_loop_band },
        Criterion { name: "metric exclusion rule", limit: Duration::from_secs(60), run: metric_exclusion },
        Criterion { name: "decay conservation", limit: Duration::from_secs(60), run: decay_conservation },
        Criterion { name: "snake rules", limit: Duration::from_secs(60), run: snake_rules },
        Criterion { name: "dual-path equivalence", limit: Duration::from_secs(600), run: dual_path },
        Criterion { name: "DSP", limit: Duration::from_secs(60), run: dsp },
    ];
    let mut failed = 0;
    for c in &criteria {
        let t0 = Instant::now();
        let result = (c.run)();
        let took = t0.elapsed();
        let (pass, detail) = match result {
            Ok(d) if took <= c.limit => (true, d),
            Ok(d) => (false, format!("{d}; over the {:?} limit", c.limit)),
            Err(d) => (false, d),
        };
        failed += usize::from(!pass);
        println!(
            "{} {} ({:.1} s): {detail}",
            if pass { "PASS" } else { "FAIL" },
            c.name,
            took.as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
