//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

use std::time::Instant;

use rand::Rng;
use ris_core::channel::{cascade, gauge_transform, sample_channels, ChannelRealization};
use ris_core::config::{derive_link_budget, SystemConfig};
use ris_core::dual_link::{
    build_reflection_schedule, decorrelate_products, simulate_dual_link, PairSet,
};
use ris_core::harness::{
    run_convergence, run_end_to_end, run_experiment, run_trial, ExperimentKind, ExperimentSpec,
    TrialOutcome,
};
use ris_core::metrics::pilot_overhead;
use ris_core::mobile::{
    assemble_measurement_matrix, despread, estimate_mobile, generate_pilot_plan,
    simulate_uplink_frame, LsSolver,
};
use ris_core::quasi_static::{refine_coefficient, solve_column, ColumnSubproblem};
use ris_core::rng::derive_stream;
use ris_core::{baseline::baseline_pilot_slots, CMatrix, CVector, C64};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn paper() -> SystemConfig {
    SystemConfig::default()
}

fn channels(cfg: &SystemConfig, seed: u64, label: &str) -> ChannelRealization {
    let budget = derive_link_budget(cfg).unwrap();
    sample_channels(cfg, &budget, &mut derive_stream(seed, label))
}

fn rel_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).norm() / b.norm()
}

fn convergence() -> Outcome {
    let cfg = SystemConfig {
        bs_antennas: 32,
        ris_elements: 64,
        tx_antennas: 2,
        ..paper()
    };
    let spec = ExperimentSpec {
        grid: vec![0.0, 10.0, 20.0],
        trials: 100,
        threads: Some(1),
        ..ExperimentSpec::new(ExperimentKind::Convergence, 7)
    };
    let start = Instant::now();
    let table = run_convergence(&cfg, &spec).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let mut ok = secs < 300.0;
    let mut parts = Vec::new();
    for &s in &spec.grid {
        let m = table.means_at(s);
        let monotone = m.windows(2).all(|w| w[1] <= w[0]);
        let change = (m[4] - m[5]).abs() / m[4];
        ok &= monotone && change < 0.05 && m.len() == 6;
        parts.push(format!("{s} dB: monotone={monotone} change45={change:.3}"));
    }
    check(
        ok,
        format!("{}; {secs:.1} s single worker", parts.join(", ")),
    )
}

fn noiseless_exactness() -> Outcome {
    let cfg = paper().noiseless();
    let mut total = TrialOutcome::default();
    for trial in 0..10 {
        let o = run_trial(&cfg, &cfg, 11, trial).map_err(|e| e.to_string())?;
        total.cascaded.merge(&o.cascaded);
        total.direct.merge(&o.direct);
    }
    let c = total.cascaded.value("C").map_err(|e| e.to_string())?;
    let h = total.direct.value("h").map_err(|e| e.to_string())?;
    check(
        c < 1e-12 && h < 1e-12,
        format!("NMSE_C={c:.3e} NMSE_h={h:.3e}"),
    )
}

fn product_error_law() -> Outcome {
    let cfg = paper().with_sinr_l_db(10.0).map_err(|e| e.to_string())?;
    let budget = derive_link_budget(&cfg).unwrap();
    let sched = build_reflection_schedule(cfg.ris_elements);
    let (mut sum, mut count) = (0.0, 0usize);
    let mut trial = 0;
    while count < 10_000 {
        let real = channels(&cfg, 21, &format!("trial-{trial}/channels"));
        let obs = simulate_dual_link(
            &real,
            &sched,
            &cfg,
            &budget,
            &mut derive_stream(21, &format!("trial-{trial}/dl")),
        )
        .map_err(|e| e.to_string())?;
        let prod = decorrelate_products(&obs, &cfg).map_err(|e| e.to_string())?;
        for (row, &(m1, m2)) in prod.pairs.pairs().iter().enumerate() {
            for n in 0..cfg.ris_elements {
                sum += (prod.a[(row, n)] - real.g[(m1, n)] * real.g[(m2, n)]).norm_sqr();
                count += 1;
            }
        }
        trial += 1;
    }
    let empirical = sum / count as f64;
    let theory = cfg.product_error_variance();
    let rel = (empirical / theory - 1.0).abs();
    check(
        rel < 0.05,
        format!(
            "{count} samples, empirical/theory = {:.4}",
            empirical / theory
        ),
    )
}

fn gauge_invariance() -> Outcome {
    let cfg = SystemConfig {
        bs_antennas: 8,
        ris_elements: 12,
        users: 3,
        ..paper()
    };
    let mut rng = derive_stream(31, "gauges");
    let mut worst = 0.0f64;
    for i in 0..200 {
        let real = channels(&cfg, 31, &format!("gauge-{i}"));
        let p = CVector::from_fn(cfg.ris_elements, |_, _| {
            let phase = C64::from_polar(1.0, rng.uniform_phase());
            if i < 100 {
                phase
            } else {
                phase * rng.random_range(0.05..20.0)
            }
        });
        let before = cascade(&real).map_err(|e| e.to_string())?;
        let after = cascade(&gauge_transform(&real, &p).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        for k in 0..cfg.users {
            worst = worst.max(rel_diff(&after.c[k], &before.c[k]));
        }
    }

    let cfg = paper();
    let mut worst_sign = 0.0f64;
    for trial in 0..5 {
        let real = channels(&cfg, 32, &format!("trial-{trial}/channels"));
        let noisy_g = &real.g
            + CMatrix::from_fn(cfg.bs_antennas, cfg.ris_elements, |_, _| {
                rng.complex_gaussian(1e-3 * 1.85e-5)
            });
        let signs = CVector::from_fn(cfg.ris_elements, |_, _| {
            C64::new(if rng.random_bool(0.5) { -1.0 } else { 1.0 }, 0.0)
        });
        let flipped = &noisy_g * CMatrix::from_diagonal(&signs);
        let plan =
            generate_pilot_plan(&cfg, &mut derive_stream(32, &format!("trial-{trial}/plan")));
        let obs = simulate_uplink_frame(
            &real,
            &plan,
            &cfg,
            &mut derive_stream(32, &format!("trial-{trial}/noise")),
        )
        .map_err(|e| e.to_string())?;
        let a = estimate_mobile(&noisy_g, &plan, &obs).map_err(|e| e.to_string())?;
        let b = estimate_mobile(&flipped, &plan, &obs).map_err(|e| e.to_string())?;
        for k in 0..cfg.users {
            worst_sign = worst_sign.max(rel_diff(&b.c_hat[k], &a.c_hat[k]));
        }
    }
    check(
        worst < 1e-12 && worst_sign < 1e-10,
        format!("gauge max rel {worst:.2e}, sign-flip max rel {worst_sign:.2e}"),
    )
}

fn overhead_table() -> Outcome {
    let r = pilot_overhead(&paper());
    let mut ok = r.tau1 == 130 && r.tau2 == 24 && r.tau_avg == 32.125 && r.baseline_mvu == 768;
    for alpha in [4.0, 8.0, 16.0, 32.0] {
        let a = pilot_overhead(&SystemConfig {
            alpha_timescale: alpha,
            ..paper()
        });
        ok &= a.tau_avg < a.baseline_mvu as f64 && a.tau_avg < a.baseline_reduced as f64;
    }
    check(
        ok,
        format!(
            "tau1={} tau2={} tau_avg={} mvu={} reduced={}",
            r.tau1, r.tau2, r.tau_avg, r.baseline_mvu, r.baseline_reduced
        ),
    )
}

/// Golden-section search of a unimodal function on `[lo, hi]`.
fn golden(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

fn coordinate_update() -> Outcome {
    let mut rng = derive_stream(41, "instances");
    let (mut worst, mut worst_rise) = (0.0f64, f64::NEG_INFINITY);
    for _ in 0..1000 {
        let m = rng.random_range(3..=6usize);
        let l = rng.random_range(2..=m);
        let pairs = PairSet::new(m, l);
        let truth: Vec<C64> = (0..m).map(|_| rng.unit_complex_gaussian()).collect();
        let values: Vec<C64> = pairs
            .pairs()
            .iter()
            .map(|&(a, b)| truth[a] * truth[b] + rng.complex_gaussian(0.1))
            .collect();
        let sub = ColumnSubproblem {
            ris_element: 0,
            pairs: &pairs,
            values: values.clone(),
            error_variance: 0.1,
        };
        let g: Vec<C64> = (0..m).map(|_| rng.unit_complex_gaussian()).collect();
        let target = rng.random_range(0..m);

        let cost = |z: C64| -> f64 {
            pairs
                .pairs()
                .iter()
                .zip(&values)
                .map(|(&(a, b), v)| {
                    let ga = if a == target { z } else { g[a] };
                    let gb = if b == target { z } else { g[b] };
                    (v - ga * gb).norm_sqr()
                })
                .sum()
        };
        let re = golden(|x| cost(C64::new(x, 0.0)), -50.0, 50.0);
        let im = golden(|y| cost(C64::new(re, y)), -50.0, 50.0);
        let re = golden(|x| cost(C64::new(x, im)), -50.0, 50.0);
        let update = refine_coefficient(&sub, target, &g);
        worst = worst.max((update.value - C64::new(re, im)).norm());

        let (_, trace) = solve_column(&sub, 10, 0.0).map_err(|e| e.to_string())?;
        for w in trace.objective.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
        }
    }
    check(
        worst < 1e-6 && worst_rise <= 1e-10,
        format!("max |update - oracle| = {worst:.2e}, max sweep rise = {worst_rise:.2e}"),
    )
}

fn ls_covariance() -> Outcome {
    let cfg = SystemConfig {
        bs_antennas: 8,
        ris_elements: 8,
        users: 2,
        uplink_subframes: 2,
        ..paper()
    };
    let real = channels(&cfg, 51, "channels");
    let plan = generate_pilot_plan(&cfg, &mut derive_stream(51, "plan"));
    let mat = assemble_measurement_matrix(&real.g, &plan).map_err(|e| e.to_string())?;
    let solver = LsSolver::new(&mat).map_err(|e| e.to_string())?;
    let gram = mat.a.adjoint() * &mat.a;
    let inv = gram.try_inverse().ok_or("singular Gram matrix")?;
    let theory = cfg.sigma2_n / (cfg.users as f64 * cfg.p_ue) * inv.trace().re;

    let trials = 10_000;
    let mut sum = 0.0;
    for t in 0..trials {
        let obs = simulate_uplink_frame(
            &real,
            &plan,
            &cfg,
            &mut derive_stream(51, &format!("noise-{t}")),
        )
        .map_err(|e| e.to_string())?;
        for k in 0..cfg.users {
            let (f, h) = solver
                .solve(&despread(&obs, &plan, k))
                .map_err(|e| e.to_string())?;
            sum += (f - &real.f[k]).norm_squared() + (h - &real.h[k]).norm_squared();
        }
    }
    let empirical = sum / (trials * cfg.users) as f64;
    let ratio = empirical / theory;
    check(
        (ratio - 1.0).abs() < 0.10,
        format!("empirical/theory = {ratio:.4} over {trials} trials"),
    )
}

fn nmse_vs_snr() -> Outcome {
    let cfg = paper();
    let spec = ExperimentSpec {
        trials: 200,
        ..ExperimentSpec::new(ExperimentKind::NmseSweep, 61)
    };
    let rows = run_end_to_end(&cfg, &spec).map_err(|e| e.to_string())?;
    let dec_c = rows.windows(2).all(|w| w[1].nmse_c < w[0].nmse_c);
    let dec_h = rows.windows(2).all(|w| w[1].nmse_h < w[0].nmse_h);
    let baseline_better = rows.iter().all(|r| r.baseline_nmse_c < r.nmse_c);
    let ratio = baseline_pilot_slots(&cfg) as f64 / pilot_overhead(&cfg).tau_avg;
    check(
        dec_c && dec_h && baseline_better && ratio >= 16.0,
        format!(
            "NMSE_C {:.3e}..{:.3e} decreasing={dec_c}, NMSE_h decreasing={dec_h}, baseline lower={baseline_better}, overhead ratio {ratio:.2}",
            rows[0].nmse_c,
            rows[rows.len() - 1].nmse_c
        ),
    )
}

fn determinism() -> Outcome {
    let cfg = SystemConfig {
        bs_antennas: 8,
        ris_elements: 16,
        users: 3,
        ..paper()
    };
    let mut ok = true;
    for kind in [
        ExperimentKind::Convergence,
        ExperimentKind::NmseSweep,
        ExperimentKind::OverheadSweep,
    ] {
        let spec = ExperimentSpec {
            trials: 20,
            threads: Some(1),
            ..ExperimentSpec::new(kind, 71)
        };
        let a = run_experiment(&cfg, &spec).map_err(|e| e.to_string())?.0;
        let b = run_experiment(&cfg, &spec).map_err(|e| e.to_string())?.0;
        let c = run_experiment(
            &cfg,
            &ExperimentSpec {
                threads: Some(4),
                ..spec.clone()
            },
        )
        .map_err(|e| e.to_string())?
        .0;
        ok &= a == b && a == c;
    }
    check(ok, "repeat and 4-worker runs byte-identical".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("convergence", convergence),
        ("noiseless exactness", noiseless_exactness),
        ("product error law", product_error_law),
        ("gauge invariance", gauge_invariance),
        ("overhead table", overhead_table),
        ("coordinate update", coordinate_update),
        ("LS covariance", ls_covariance),
        ("NMSE vs SNR", nmse_vs_snr),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {} ({name}): PASS  {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL  {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
