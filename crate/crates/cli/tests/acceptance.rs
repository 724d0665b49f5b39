//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. The training criteria drive the `junction`
//! binary and take several minutes.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use junction_core::compare::median;
use junction_core::config::Scenario;
use junction_core::controller::{ControllerKind, Env};
use junction_core::geometry::IntersectionSpec;
use junction_core::idm::{idm_accel, IdmParams};
use junction_core::movement::{conflicts, MovementId};
use junction_core::nn::Mlp;
use junction_core::observe::avg_waiting_time;
use junction_core::policy::{compose, decode_lane_change, safety_filter, Decision, RawLowAction, SafetyBands};
use junction_core::ppo::{gae, head_terms, ppo_loss, Action, LossConfig, Sample};
use junction_core::report::parse_reports;
use junction_core::sim::{LaneChange, SimParams, SimState};
use junction_core::vehicle::{Phase, VehicleKind};

type Check = Result<String, String>;

fn mv(s: &str) -> MovementId {
    s.parse().unwrap()
}

fn conflict_algebra() -> Check {
    let compatible = ["S-C N-C", "W-C E-C", "S-L N-L", "E-L W-L", "S-C S-L", "E-C E-L", "N-C N-L", "W-C W-L"];
    let mut free = BTreeSet::new();
    for p in compatible {
        let (a, b) = p.split_once(' ').unwrap();
        free.insert((mv(a), mv(b)));
        free.insert((mv(b), mv(a)));
    }
    let mut n_free = 0;
    for a in MovementId::ALL {
        for b in MovementId::ALL {
            let expect = !(a == b || free.contains(&(a, b)));
            if conflicts(a, b) != expect {
                return Err(format!("conflicts({a}, {b}) = {}", !expect));
            }
            n_free += usize::from(!expect);
        }
    }
    if n_free != 24 {
        return Err(format!("{n_free} non-conflicting ordered pairs"));
    }
    Ok("64 ordered pairs, 24 non-conflicting".into())
}

/// Textbook car-following law, written out independently.
fn idm_oracle(v: f64, gap: f64, vl: f64, p: &IdmParams) -> f64 {
    let desired = p.s0 + f64::max(0.0, v * p.time_headway + v * (v - vl) / (2.0 * f64::sqrt(p.a_max * p.b_comf)));
    p.a_max * (1.0 - f64::powf(v / p.v0, p.delta) - (desired / gap) * (desired / gap))
}

fn idm_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let p = IdmParams {
            v0: rng.random_range(5.0..35.0),
            time_headway: rng.random_range(0.5..3.0),
            a_max: rng.random_range(0.5..4.0),
            b_comf: rng.random_range(1.0..6.0),
            s0: rng.random_range(0.5..5.0),
            delta: rng.random_range(1.0..6.0),
        };
        let v = rng.random_range(0.0..30.0);
        let gap = rng.random_range(0.1..150.0);
        let vl = rng.random_range(0.0..30.0);
        let got = idm_accel(v, gap, vl, &p, f64::INFINITY).map_err(|e| e.to_string())?;
        let want = idm_oracle(v, gap, vl, &p);
        let rel = if want == 0.0 { got.abs() } else { ((got - want) / want).abs() };
        worst = worst.max(rel);
    }
    if worst < 1e-12 {
        Ok(format!("max relative error {worst:.2e}"))
    } else {
        Err(format!("max relative error {worst:.2e}"))
    }
}

fn safety_filter_bands() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = IntersectionSpec::default();
    let params = SimParams::default();
    let bands = SafetyBands::default();
    let entrance = spec.entrance_line();
    let m = mv("E-C");
    let lane = spec.lanes_for(m)[0];
    let mut worst = f64::NEG_INFINITY;
    for i in 0..100_000 {
        let d = if i % 50 == 0 { 0.0 } else { rng.random_range(0.0..60.0) };
        let env = bands.envelope(d, params.stop_decel()).min(params.idm.v0);
        let v = if i % 7 == 0 { env } else { rng.random_range(0.0..=env) };
        let mut s = SimState::new(spec.clone(), params);
        let id = s.insert_vehicle(VehicleKind::Rv, m, lane, entrance - d, v);
        if rng.random_bool(0.3) {
            let lead = entrance - d + params.vehicle_length + rng.random_range(0.5..30.0);
            if lead <= entrance {
                s.insert_vehicle(VehicleKind::Hv, m, lane, lead, rng.random_range(0.0..v.max(0.1)));
            }
        }
        let raw = RawLowAction { acc: rng.random_range(-1.0..=1.0), lc: rng.random_range(-1.0..=1.0) };
        let cmd = compose(Decision::Stop, raw, &params).map_err(|e| e.to_string())?;
        let filtered = safety_filter(cmd, s.vehicle(id).unwrap(), &bands, Decision::Stop, &spec, &params);
        s.step(&BTreeMap::from([(id, filtered)]), &BTreeSet::new());
        let after = s.vehicle(id).ok_or("vehicle vanished")?;
        if after.phase != Phase::Approaching || after.pos > entrance {
            return Err(format!("crossed the entrance from d = {d}, v = {v}"));
        }
        if let Some(limit) = bands.limit_at(entrance - after.pos) {
            worst = worst.max(after.speed - limit);
            if after.speed > limit + 1e-9 {
                return Err(format!("speed {} above limit {limit} from d = {d}, v = {v}", after.speed));
            }
        }
    }
    Ok(format!("1e5 states, max excess over limit {worst:.2e}"))
}

fn random_traffic_fuzz(root: &Path) -> (Check, Check) {
    let mut sc = match Scenario::load(&root.join("scenarios/shared_40.toml")) {
        Ok(s) => s,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    sc.env.rv_penetration = 0.5;
    sc.env.demand = sc.env.demand.map(|r| 1.5 * r);
    let mut min_gap = f64::INFINITY;
    let mut conflict_steps = 0;
    let mut departures = 0;
    let mut steps = 0;
    for seed in 0..5 {
        let mut env = Env::new(&sc.env, ControllerKind::Random.control(), None, seed);
        for _ in 0..20_000 {
            match env.step() {
                Ok(info) => departures += info.departures,
                Err(e) => return (Err(e.to_string()), Err(e.to_string())),
            }
            steps += 1;
            if let Some(g) = env.state.min_same_path_gap() {
                min_gap = min_gap.min(g);
            }
            if !env.state.conflicting_inside_pairs().is_empty() {
                conflict_steps += 1;
            }
        }
    }
    let gap = if min_gap >= 0.0 {
        Ok(format!("{steps} steps, {departures} departures, min gap {min_gap:.3} m"))
    } else {
        Err(format!("min same-path gap {min_gap}"))
    };
    let excl = if conflict_steps == 0 {
        Ok(format!("{steps} steps without conflicting vehicles in the box"))
    } else {
        Err(format!("{conflict_steps} steps with conflicting vehicles in the box"))
    };
    (gap, excl)
}

fn loss_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = LossConfig { clip_eps: 0.2, vf_coef: 0.5, ent_coef: 0.01 };
    let batch = |p: &Mlp, rng: &mut ChaCha8Rng| -> Vec<Sample> {
        (0..8)
            .map(|_| {
                let obs: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                let action = Action::Discrete(rng.random_range(0..2));
                let lp = head_terms(&p.forward(&obs), &action).log_prob;
                Sample {
                    obs,
                    action,
                    log_prob_old: lp + rng.random_range(-0.3..0.3),
                    advantage: rng.random_range(-2.0..2.0),
                    value_target: rng.random_range(-2.0..2.0),
                }
            })
            .collect()
    };
    let mut worst_fd = 0.0f64;
    for point in 0..100 {
        let p = Mlp::new(&[4, 8, 2], 1.0, &mut rng);
        let v = Mlp::new(&[4, 8, 1], 1.0, &mut rng);
        let mut b = batch(&p, &mut rng);

        // (c) analytic gradient against central differences.
        let mut gp = vec![0.0; p.params.len()];
        let mut gv = vec![0.0; v.params.len()];
        ppo_loss(&p, &v, &b, &cfg, Some((&mut gp, &mut gv)));
        let h = 1e-6;
        let mut fd = Vec::with_capacity(gp.len() + gv.len());
        for i in 0..p.params.len() {
            let (mut a, mut z) = (p.clone(), p.clone());
            a.params[i] += h;
            z.params[i] -= h;
            fd.push((ppo_loss(&a, &v, &b, &cfg, None).loss - ppo_loss(&z, &v, &b, &cfg, None).loss) / (2.0 * h));
        }
        for i in 0..v.params.len() {
            let (mut a, mut z) = (v.clone(), v.clone());
            a.params[i] += h;
            z.params[i] -= h;
            fd.push((ppo_loss(&p, &a, &b, &cfg, None).loss - ppo_loss(&p, &z, &b, &cfg, None).loss) / (2.0 * h));
        }
        let an: Vec<f64> = gp.iter().chain(&gv).copied().collect();
        let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
        let diff: Vec<f64> = an.iter().zip(&fd).map(|(a, f)| a - f).collect();
        let rel = norm(&diff) / norm(&an).max(norm(&fd)).max(1e-12);
        worst_fd = worst_fd.max(rel);
        if rel >= 1e-4 {
            return Err(format!("point {point}: gradient relative error {rel:.2e}"));
        }

        // (a) and (b) at the sampling parameters with exact value targets.
        for s in &mut b {
            s.log_prob_old = head_terms(&p.forward(&s.obs), &s.action).log_prob;
            s.value_target = v.forward(&s.obs)[0];
        }
        let st = ppo_loss(&p, &v, &b, &cfg, None);
        let mean_adv = b.iter().map(|s| s.advantage).sum::<f64>() / b.len() as f64;
        if (st.policy_loss + mean_adv).abs() > 1e-9 {
            return Err(format!("point {point}: policy loss {} vs -mean(A) {}", st.policy_loss, -mean_adv));
        }
        if st.vf_loss != 0.0 {
            return Err(format!("point {point}: value loss {}", st.vf_loss));
        }
    }
    Ok(format!("100 points, max gradient relative error {worst_fd:.2e}"))
}

fn gae_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=16);
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let last = rng.random_range(-5.0..5.0);
        let terminal = rng.random_bool(0.5);
        let g = rng.random_range(0.5..=1.0);
        let l = rng.random_range(0.0..=1.0);
        let (adv, ret) = gae(&r, &v, last, terminal, g, l);
        let value = |t: usize| if t < n { v[t] } else if terminal { 0.0 } else { last };
        for t in 0..n {
            let mut a = 0.0;
            for k in t..n {
                a += (g * l).powi((k - t) as i32) * (r[k] + g * value(k + 1) - v[k]);
            }
            worst = worst.max((a - adv[t]).abs()).max((a + v[t] - ret[t]).abs());
        }
    }
    if worst < 1e-10 {
        Ok(format!("1000 episodes, max abs diff {worst:.2e}"))
    } else {
        Err(format!("max abs diff {worst:.2e}"))
    }
}

fn lane_change_decode() -> Check {
    let n = 100_001;
    let mut prev = None;
    let mut breaks = Vec::new();
    for k in 0..n {
        let x = -1.0 + 2.0 * k as f64 / (n - 1) as f64;
        let d = decode_lane_change(x.clamp(-1.0, 1.0)).map_err(|e| e.to_string())?;
        if prev.is_some_and(|p| p != d) {
            breaks.push(x);
        }
        prev = Some(d);
    }
    if breaks.len() != 2 {
        return Err(format!("{} breakpoints", breaks.len()));
    }
    let at = |x: f64| decode_lane_change(x).ok();
    let ok = at(-1.0) == Some(LaneChange::Left)
        && at(-0.33) == Some(LaneChange::Keep)
        && at(0.33) == Some(LaneChange::Keep)
        && at(0.0) == Some(LaneChange::Keep)
        && at(1.0) == Some(LaneChange::Right)
        && at(-0.33 - 1e-12) == Some(LaneChange::Left)
        && at(0.33 + 1e-12) == Some(LaneChange::Right)
        && at(1.0 + 1e-9).is_none();
    if ok {
        Ok(format!("breakpoints near {:.4} and {:.4}", breaks[0], breaks[1]))
    } else {
        Err("boundary values decode incorrectly".into())
    }
}

fn waiting_time_oracle() -> Check {
    let spec = IntersectionSpec::default();
    let entrance = spec.entrance_line();
    let mut s = SimState::new(spec.clone(), SimParams::default());
    let lane = |m: &str| spec.lanes_for(mv(m))[0];
    let a = s.insert_vehicle(VehicleKind::Hv, mv("W-C"), lane("W-C"), entrance, 0.0);
    let b = s.insert_vehicle(VehicleKind::Hv, mv("N-C"), lane("N-C"), entrance, 0.0);
    s.insert_vehicle(VehicleKind::Hv, mv("E-C"), lane("E-C"), entrance - 30.0, 10.0);
    let mut departed = 0;
    while departed < 3 && s.step_count < 1000 {
        let mut holds = BTreeSet::new();
        if s.step_count < 70 {
            holds.insert(a);
        }
        if s.step_count < 130 {
            holds.insert(b);
        }
        departed += s.step(&BTreeMap::new(), &holds);
    }
    s.finish();
    let w = avg_waiting_time(&s.event_log);
    let expect = 20.0 / 3.0;
    if departed == 3 && w.vehicles == 3 && (w.avg_waiting_time - expect).abs() <= 0.1 {
        Ok(format!("avg waiting time {:.4} s", w.avg_waiting_time))
    } else {
        Err(format!("avg waiting time {} over {} vehicles, {departed} departed", w.avg_waiting_time, w.vehicles))
    }
}

struct Cli {
    bin: PathBuf,
    dir: PathBuf,
}

impl Cli {
    fn run(&self, args: &[&str]) -> Result<(), String> {
        let out = Command::new(&self.bin)
            .args(args)
            .current_dir(&self.dir)
            .env("RUST_LOG", "warn")
            .output()
            .map_err(|e| e.to_string())?;
        if out.status.success() {
            Ok(())
        } else {
            Err(format!("junction {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
        }
    }

    /// Copies a shipped scenario next to the demand file, pointing its
    /// checkpoint at `checkpoint` (relative to the temp dir).
    fn scenario(&self, root: &Path, name: &str, out: &str, checkpoint: Option<&str>) -> Result<String, String> {
        let text = fs::read_to_string(root.join("scenarios").join(name)).map_err(|e| e.to_string())?;
        let text = match checkpoint {
            Some(ck) => text
                .lines()
                .map(|l| if l.starts_with("checkpoint") { format!("checkpoint = \"{ck}\"") } else { l.to_string() })
                .collect::<Vec<_>>()
                .join("\n"),
            None => text,
        };
        fs::write(self.dir.join(out), text).map_err(|e| e.to_string())?;
        Ok(out.to_string())
    }

    fn report(&self, dir: &str) -> Result<junction_core::report::ReportRow, String> {
        let bytes = fs::read(self.dir.join(dir).join("report.csv")).map_err(|e| e.to_string())?;
        parse_reports(&bytes).map_err(|e| e.to_string())?.into_iter().next().ok_or_else(|| "empty report".to_string())
    }

    /// Trains on `config` and returns the environment steps used.
    fn train(&self, config: &str, seed: u64, out: &str) -> Result<u64, String> {
        self.run(&["train", config, "--seed", &seed.to_string(), "--out", out])?;
        let text = fs::read_to_string(self.dir.join(out).join("training.csv")).map_err(|e| e.to_string())?;
        let mut steps = 0;
        for line in text.lines().skip(2) {
            steps += line.split(',').nth(2).and_then(|x| x.parse::<u64>().ok()).ok_or("bad training.csv row")?;
        }
        Ok(steps)
    }

    fn eval(&self, config: &str, seed: u64, out: &str) -> Result<junction_core::report::ReportRow, String> {
        self.run(&["eval", config, "--seed", &seed.to_string(), "--out", out])?;
        self.report(out)
    }
}

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn training_efficacy(cli: &Cli, root: &Path) -> Check {
    let random = cli.scenario(root, "synthetic_random.toml", "random.toml", None)?;
    let tl = cli.scenario(root, "synthetic_tl.toml", "tl.toml", None)?;
    let (mut h, mut r, mut t) = (Vec::new(), Vec::new(), Vec::new());
    let mut max_steps = 0;
    for s in SEEDS {
        let cfg = cli.scenario(root, "synthetic.toml", &format!("hier_{s}.toml"), Some(&format!("train_{s}/final.ckpt")))?;
        max_steps = max_steps.max(cli.train(&cfg, s, &format!("train_{s}"))?);
        h.push(cli.eval(&cfg, s, &format!("eval_hier_{s}"))?.avg_waiting_time);
        r.push(cli.eval(&random, s, &format!("eval_random_{s}"))?.avg_waiting_time);
        t.push(cli.eval(&tl, s, &format!("eval_tl_{s}"))?.avg_waiting_time);
    }
    let (mh, mr, mt) = (median(&h).unwrap(), median(&r).unwrap(), median(&t).unwrap());
    let detail = format!(
        "median wait hierarchical {mh:.2} s, random {mr:.2} s ({:+.1}%), tl {mt:.2} s; {max_steps} training steps per seed",
        100.0 * (mh - mr) / mr
    );
    if mh <= 0.7 * mr && mh <= mt && max_steps <= 200_000 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn lane_change_benefit(cli: &Cli, root: &Path) -> Check {
    let (mut hr, mut lr, mut ht, mut lt) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut budget = (0, 0);
    for s in SEEDS {
        let hier = cli.scenario(root, "shared_40.toml", &format!("shared_{s}.toml"), Some(&format!("shared_train_{s}/final.ckpt")))?;
        let hl = cli.scenario(root, "shared_40_hl_only.toml", &format!("hl_{s}.toml"), Some(&format!("hl_train_{s}/final.ckpt")))?;
        budget.0 = budget.0.max(cli.train(&hier, s, &format!("shared_train_{s}"))?);
        budget.1 = budget.1.max(cli.train(&hl, s, &format!("hl_train_{s}"))?);
        let a = cli.eval(&hier, s, &format!("eval_shared_{s}"))?;
        let b = cli.eval(&hl, s, &format!("eval_hl_{s}"))?;
        let horizon = a.horizon;
        hr.push(a.mean_unregulated_ratio);
        lr.push(b.mean_unregulated_ratio);
        // A run that never reaches half regulated counts as the full horizon.
        ht.push(a.time_to_half_regulated.unwrap_or(horizon));
        lt.push(b.time_to_half_regulated.unwrap_or(horizon));
    }
    let (mhr, mlr, mht, mlt) = (median(&hr).unwrap(), median(&lr).unwrap(), median(&ht).unwrap(), median(&lt).unwrap());
    let detail = format!(
        "median unregulated ratio {mhr:.3} vs hl_only {mlr:.3}, time to 50% {mht:.1} s vs {mlt:.1} s; training steps {} vs {}",
        budget.0, budget.1
    );
    if mhr < mlr && mht < mlt && budget.0 == budget.1 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn determinism(cli: &Cli, root: &Path) -> Check {
    let cfg = cli.scenario(root, "synthetic.toml", "det.toml", Some("train_1/final.ckpt"))?;
    cli.run(&["eval", &cfg, "--seed", "11", "--out", "det_a"])?;
    cli.run(&["eval", &cfg, "--seed", "11", "--out", "det_b"])?;
    for f in ["metrics.csv", "report.csv"] {
        let a = fs::read(cli.dir.join("det_a").join(f)).map_err(|e| e.to_string())?;
        let b = fs::read(cli.dir.join("det_b").join(f)).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("{f} differs between runs"));
        }
    }
    Ok("metrics.csv and report.csv byte-identical".into())
}

fn main() -> ExitCode {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let tmp = tempfile::tempdir().expect("temp dir");
    fs::copy(root.join("scenarios/demand_300.csv"), tmp.path().join("demand_300.csv")).expect("copy demand");
    let cli = Cli { bin: PathBuf::from(env!("CARGO_BIN_EXE_junction")), dir: tmp.path().to_path_buf() };

    let mut failed = 0;
    let mut report = |n: usize, name: &str, start: Instant, r: Check| {
        let secs = start.elapsed().as_secs_f64();
        match r {
            Ok(d) => println!("criterion {n:>2} PASS  {name}: {d} [{secs:.1} s]"),
            Err(d) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {d} [{secs:.1} s]");
            }
        }
    };

    let t = Instant::now();
    report(1, "conflict algebra", t, conflict_algebra());
    let t = Instant::now();
    report(2, "car-following oracle", t, idm_equivalence());
    let t = Instant::now();
    report(3, "speed bands under Stop", t, safety_filter_bands());
    let t = Instant::now();
    let (gap, excl) = random_traffic_fuzz(&root);
    report(4, "same-path collision freedom", t, gap);
    report(5, "box exclusivity", t, excl);
    let t = Instant::now();
    report(6, "PPO loss identities and gradient", t, loss_identities());
    let t = Instant::now();
    report(7, "GAE against direct summation", t, gae_equivalence());
    let t = Instant::now();
    report(8, "lane-change decode", t, lane_change_decode());
    let t = Instant::now();
    report(9, "waiting-time metric", t, waiting_time_oracle());
    let t = Instant::now();
    report(10, "training efficacy", t, training_efficacy(&cli, &root));
    let t = Instant::now();
    report(11, "lane-change benefit", t, lane_change_benefit(&cli, &root));
    let t = Instant::now();
    report(12, "eval determinism", t, determinism(&cli, &root));

    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
