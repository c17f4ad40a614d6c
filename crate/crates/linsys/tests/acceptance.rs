//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured numbers (run with `--nocapture` to see them).
//!
//! The limit statements behind these checks are almost-sure or
//! infinite-time; the suite substitutes exact identities, closed-form
//! cross-checks, and finite-horizon Monte Carlo trends at pinned tolerances.

use linsys::analysis;
use linsys::engine::{self, Horizon};
use linsys::ensemble::{EnsembleOptions, run_ensemble, summarize};
use linsys::identities::{random_density, random_kernel};
use linsys::kernel::KernelDistribution;
use linsys::lattice::{MassField, Site};
use linsys::output::trajectories_to_csv;
use linsys::rng::Rng;
use linsys::theory::{self, GreenMethod, GreenParams, PhaseClass, PhaseOptions, l1_ball};
use std::time::Instant;

#[allow(clippy::too_many_arguments)]
fn ensemble(
    dist: &KernelDistribution,
    runs: u64,
    workers: usize,
    seed: u64,
    t_max: f64,
    max_events: u64,
    sample_times: &[f64],
    dual: bool,
) -> Vec<engine::TrajectoryRecord> {
    run_ensemble(
        dist,
        &EnsembleOptions {
            runs,
            workers,
            master_seed: seed,
            horizon: Horizon { t_max, max_events },
            sample_times: sample_times.to_vec(),
            prune_threshold: None,
            dual,
        },
    )
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values[values.len() / 2]
}

#[test]
fn criterion_01_martingale_normalization() {
    let start = Instant::now();
    let dist = KernelDistribution::bcpp(1, 1.0).unwrap();
    let times = [1.0, 3.0, 5.0];
    let records = ensemble(&dist, 10_000, 1, 0xC1, 5.0, u64::MAX, &times, false);
    let mut report = String::new();
    for (ti, &t) in times.iter().enumerate() {
        let values: Vec<f64> = records
            .iter()
            .map(|r| r.rows[ti].log_normalized_mass.exp())
            .collect();
        let (mean, se) = mean_and_se(&values);
        assert!(
            (mean - 1.0).abs() <= 4.0 * se,
            "criterion 1 FAIL at t = {t}: mean {mean} not within 4 se ({se}) of 1"
        );
        report.push_str(&format!(" t={t}: {mean:.4}±{se:.4}"));
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "criterion 1 runtime {elapsed:.1}s >= 60s");
    println!(
        "criterion 01 martingale normalization: PASS ({report}, {elapsed:.1}s, single-threaded)"
    );
}

#[test]
fn criterion_02_slow_growth_d1() {
    let dist = KernelDistribution::bcpp(1, 1.0).unwrap();
    let times = [10.0, 20.0];
    let records = ensemble(&dist, 500, 2, 0xC2, 20.0, u64::MAX, &times, false);
    let mut rates10: Vec<f64> = records
        .iter()
        .map(|r| r.rows[0].log_normalized_mass / 10.0)
        .collect();
    let mut rates20: Vec<f64> = records
        .iter()
        .map(|r| r.rows[1].log_normalized_mass / 20.0)
        .collect();
    let m10 = median(&mut rates10);
    let m20 = median(&mut rates20);
    assert!(
        m10 <= -0.01,
        "criterion 2 FAIL: median rate at t=10 is {m10}"
    );
    assert!(
        m20 <= -0.01,
        "criterion 2 FAIL: median rate at t=20 is {m20}"
    );
    assert!(
        m20 <= m10,
        "criterion 2 FAIL: median rate increased from {m10} to {m20}"
    );
    println!("criterion 02 slow growth d=1: PASS (medians {m10:.4} at t=10, {m20:.4} at t=20)");
}

#[test]
fn criterion_03_log_moment_phase_boundary() {
    let start = Instant::now();
    for d in 1..=3usize {
        let crit = 1.0 / (2.0 * d as f64);
        let below = KernelDistribution::bcpp(d, crit * (1.0 - 1e-6)).unwrap();
        let above = KernelDistribution::bcpp(d, crit * (1.0 + 1e-6)).unwrap();
        assert!(
            below.log_moment_margin() > 0.0,
            "criterion 3 FAIL: margin not positive just below 1/(2*{d})"
        );
        assert!(
            above.log_moment_margin() < 0.0,
            "criterion 3 FAIL: margin not negative just above 1/(2*{d})"
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 1.0, "criterion 3 runtime {elapsed:.3}s >= 1s");
    println!(
        "criterion 03 log-moment phase boundary: PASS (sign flips at 1/(2d), d = 1..3, {elapsed:.3}s)"
    );
}

/// Independent Monte Carlo oracle for the simple-random-walk return
/// probability in d = 3: direct return-frequency counting to a step cap,
/// plus a tail correction whose coefficient is fitted from the walk's own
/// first-return histogram (first returns happen on even steps and their
/// tail decays like n^{-3/2}).
fn mc_return_probability_d3(walks: u64, step_cap: usize, seed: u64) -> f64 {
    let fit_lo = 300usize; // both even
    assert!(fit_lo.is_multiple_of(2) && step_cap.is_multiple_of(2));
    let mut rng = Rng::from_seed(seed);
    let mut returned: u64 = 0;
    let mut window_hits: u64 = 0;
    for _ in 0..walks {
        let mut pos = [0i32; 3];
        for n in 1..=step_cap {
            let dir = rng.index(6);
            let axis = dir / 2;
            pos[axis] += if dir.is_multiple_of(2) { 1 } else { -1 };
            if pos == [0, 0, 0] {
                returned += 1;
                if n > fit_lo {
                    window_hits += 1;
                }
                break;
            }
        }
    }
    // sum of n^{-3/2} over even n in (lo, cap] and beyond the cap.
    let even_sum = |lo: usize, hi: usize| -> f64 {
        ((lo + 2)..=hi)
            .step_by(2)
            .map(|n| (n as f64).powf(-1.5))
            .sum()
    };
    let window_mass = even_sum(fit_lo, step_cap);
    // Euler-Maclaurin tail over even n > cap: 2^{-3/2} * tail over m > cap/2.
    let m0 = step_cap as f64 / 2.0;
    let tail_mass =
        2.0f64.powf(-1.5) * (2.0 * m0.powf(-0.5) - 0.5 * m0.powf(-1.5) + 0.125 * m0.powf(-2.5));
    let c_hat = window_hits as f64 / walks as f64 / window_mass;
    returned as f64 / walks as f64 + c_hat * tail_mass
}

#[test]
fn criterion_04_green_function_cross_validation() {
    let start = Instant::now();
    let params = GreenParams::default();

    // Series vs Fourier at |x| <= 3 for the contact-path kernel and five
    // random d = 3 kernels.
    let mut rng = Rng::from_seed(0xC4);
    let mut kernels = vec![KernelDistribution::bcpp(3, 1.0).unwrap()];
    for _ in 0..5 {
        kernels.push(random_kernel(&mut rng, 3));
    }
    let mut worst = 0.0f64;
    for dist in &kernels {
        let k = dist.mean_kernel();
        let series = theory::green_table(&k, 3, 3, GreenMethod::Series, &params).unwrap();
        let fourier = theory::green_table(&k, 3, 3, GreenMethod::Fourier, &params).unwrap();
        for x in l1_ball(3, 3) {
            worst = worst.max((series.value(x) - fourier.value(x)).abs());
        }
    }
    assert!(
        worst <= 1e-6,
        "criterion 4 FAIL: series/fourier disagree by {worst}"
    );

    // Closed form G(0) = (2 d lambda + 1)/(2 d lambda) / (1 - pi_3).
    let pi3 = theory::srw_return_probability(3);
    let lambda = 1.0;
    let dist = KernelDistribution::bcpp(3, lambda).unwrap();
    let g0 = theory::green_table(&dist.mean_kernel(), 3, 0, GreenMethod::Series, &params)
        .unwrap()
        .origin();
    let closed = (6.0 * lambda + 1.0) / (6.0 * lambda) / (1.0 - pi3);
    assert!(
        (g0 - closed).abs() <= 1e-4,
        "criterion 4 FAIL: G(0) {g0} vs closed form {closed}"
    );

    // Independent Monte Carlo return-frequency oracle.
    let mc = mc_return_probability_d3(3_000_000, 3000, 0x04AC1E);
    assert!(
        (pi3 - 0.34054).abs() <= 1e-3,
        "criterion 4 FAIL: pi_3 {pi3} vs 0.34054"
    );
    assert!(
        (pi3 - mc).abs() <= 1e-3,
        "criterion 4 FAIL: quadrature pi_3 {pi3} vs Monte Carlo {mc}"
    );

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "criterion 4 runtime {elapsed:.1}s >= 120s");
    println!(
        "criterion 04 green cross-validation: PASS (max method gap {worst:.2e}, G0 gap {:.2e}, pi3 {pi3:.6} vs MC {mc:.6}, {elapsed:.1}s)",
        (g0 - closed).abs()
    );
}

#[test]
fn criterion_05_threshold_closed_forms() {
    let pi3 = theory::srw_return_probability(3);
    let lambda_crit = 1.0 / (6.0 * (1.0 - 2.0 * pi3));
    let opts = PhaseOptions::default();

    // Classification flips across lambda* (tested 2% off on both sides).
    let below = theory::phase_report(
        &KernelDistribution::bcpp(3, lambda_crit * 0.98).unwrap(),
        &opts,
    )
    .unwrap();
    assert_eq!(
        below.classification,
        PhaseClass::LocalizationConditionHolds,
        "criterion 5 FAIL below threshold: {below:?}"
    );
    assert!(below.loc_statistic.unwrap() > 2.0);
    let above = theory::phase_report(
        &KernelDistribution::bcpp(3, lambda_crit * 1.02).unwrap(),
        &opts,
    )
    .unwrap();
    assert_eq!(
        above.classification,
        PhaseClass::RegularGrowthSufficient,
        "criterion 5 FAIL above threshold: {above:?}"
    );
    assert!(above.loc_statistic.unwrap() < 2.0);

    // Product-form statistic algebra on 20 random instances: the direct
    // double sum against E[W^2]<G*k,k> - <G, k+kr> + G(0), computed from the
    // same Green values (accuracy of G cancels; only algebra remains).
    let mut rng = Rng::from_seed(0xC5);
    let quick = GreenParams {
        series_steps: 64,
        ..GreenParams::default()
    };
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 20 {
        let w_lo = 0.1 + 0.6 * rng.next_f64();
        let p_hi = 0.2 + 0.6 * rng.next_f64();
        let w_hi = (1.0 - (1.0 - p_hi) * w_lo) / p_hi;
        let mut k = MassField::new();
        for axis in 0..3 {
            for sign in [1, -1] {
                if rng.next_f64() < 0.8 {
                    k.add_assign(Site::unit(axis, sign), 0.05 + rng.next_f64());
                }
            }
        }
        if rng.next_f64() < 0.5 {
            k.add_assign(Site::ORIGIN, 0.5 * rng.next_f64());
        }
        let Ok(dist) = KernelDistribution::potlatch(3, k, &[(1.0 - p_hi, w_lo), (p_hi, w_hi)])
        else {
            continue;
        };
        let pf = dist.product_form().unwrap();
        let kmean = dist.mean_kernel();
        let radius = 2 * pf.k_table.support_radius();
        let table = theory::green_table(&kmean, 3, radius, GreenMethod::Series, &quick).unwrap();
        let direct = theory::localization_statistic_from(&table, &dist.beta_table());
        let mut gk_k = 0.0;
        for (x, vx) in pf.k_table.iter() {
            for (y, vy) in pf.k_table.iter() {
                gk_k += vx * vy * table.value(x - y);
            }
        }
        let g_sym: f64 = pf
            .k_table
            .iter()
            .map(|(x, vx)| vx * (table.value(x) + table.value(-x)))
            .sum();
        let algebraic = pf.w_second_moment * gk_k - g_sym + table.origin();
        worst = worst.max((direct - algebraic).abs());
        done += 1;
    }
    assert!(
        worst <= 1e-8,
        "criterion 5 FAIL: potlatch statistic algebra residual {worst}"
    );
    println!(
        "criterion 05 threshold closed forms: PASS (lambda* = {lambda_crit:.4}, flips at ±2%, algebra residual {worst:.2e})"
    );
}

#[test]
fn criterion_06_exact_drift_inequalities() {
    let start = Instant::now();
    let mut rng = Rng::from_seed(0xC6);
    // Small witness cap: draws whose crossing sits deeper are redrawn, which
    // keeps the instance generation well inside the runtime target.
    let opts = PhaseOptions {
        witness_n_max: 400,
        ..PhaseOptions::default()
    };

    let mut worst_u = 0.0f64;
    let mut worst_w = 0.0f64;
    let mut worst_slack = 0.0f64;
    let mut done = 0;
    while done < 100 {
        let d = 1 + rng.index(2);
        let dist = random_kernel(&mut rng, d);
        let report = theory::phase_report(&dist, &opts).unwrap();
        let Some(n) = report.witness_n else {
            continue; // witness beyond the search cap; draw another kernel
        };
        let p = theory::JumpLaw::from_mean_kernel(&dist.mean_kernel(), d).unwrap();
        let g = theory::partial_green_sum(&p, n as usize);
        let sites = 2 + rng.index(14);
        let rho = random_density(&mut rng, d, sites, 8);
        let b = analysis::exact_drift(&rho, &dist, &g);
        worst_u =
            worst_u.max((b.u_term - analysis::u_term_convolution_route(&rho, &dist, &g)).abs());
        worst_w = worst_w.max((b.w_term - analysis::w_term_factorized(&rho, &dist, &g)).abs());
        worst_slack = worst_slack.max(b.lower_bound_rhs - b.lower_bound_lhs);
        done += 1;
    }
    assert!(
        worst_u <= 1e-12,
        "criterion 6 FAIL: U-identity residual {worst_u}"
    );
    assert!(
        worst_w <= 1e-12,
        "criterion 6 FAIL: W-identity residual {worst_w}"
    );
    assert!(
        worst_slack <= 1e-12,
        "criterion 6 FAIL: drift lower bound violated by {worst_slack}"
    );

    let mut worst_hy = f64::NEG_INFINITY;
    for _ in 0..200 {
        let nf = 1 + rng.index(8);
        let f = random_density(&mut rng, 1, nf, 8).scale(0.2 + 2.0 * rng.next_f64());
        let nh = 1 + rng.index(8);
        let h = random_density(&mut rng, 1, nh, 8).scale(0.2 + 2.0 * rng.next_f64());
        let (lhs, rhs) = analysis::hausdorff_young_check(&f, &h);
        worst_hy = worst_hy.max(lhs - rhs);
    }
    assert!(
        worst_hy <= 1e-12,
        "criterion 6 FAIL: Hausdorff-Young violated by {worst_hy}"
    );

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "criterion 6 runtime {elapsed:.1}s >= 30s");
    println!(
        "criterion 06 exact drift inequalities: PASS (U {worst_u:.2e}, W {worst_w:.2e}, bound slack {worst_slack:.2e}, HY {worst_hy:.2e}, {elapsed:.1}s)"
    );
}

#[test]
fn criterion_07_localization_trend() {
    let k = MassField::from_entries(&[(Site::new(&[1]), 1.0), (Site::new(&[-1]), 1.0)]);
    let dist = KernelDistribution::potlatch(1, k, &[(0.5, 0.0), (0.5, 2.0)]).unwrap();
    let times = [20.0, 40.0];
    let records = ensemble(&dist, 2000, 2, 0xC7, 40.0, u64::MAX, &times, false);
    let survivors: Vec<_> = records.iter().filter(|r| r.survived).collect();
    if survivors.len() < 20 {
        println!(
            "criterion 07 localization trend: SKIPPED ({} survivors of 2000, needs 20)",
            survivors.len()
        );
        return;
    }
    let mean20: f64 = survivors
        .iter()
        .map(|r| r.rows[0].integrated_overlap)
        .sum::<f64>()
        / survivors.len() as f64;
    let mean40: f64 = survivors
        .iter()
        .map(|r| r.rows[1].integrated_overlap)
        .sum::<f64>()
        / survivors.len() as f64;
    assert!(
        mean40 >= 1.25 * mean20,
        "criterion 7 FAIL: mean integrated overlap {mean40} at t=40 vs {mean20} at t=20"
    );
    println!(
        "criterion 07 localization trend: PASS ({} survivors, mean integral {mean20:.3} -> {mean40:.3}, ratio {:.3})",
        survivors.len(),
        mean40 / mean20
    );
}

#[test]
fn criterion_08_delocalization_trend() {
    let pi3 = theory::srw_return_probability(3);
    let lambda = 1.2 / (6.0 * (1.0 - 2.0 * pi3));
    let dist = KernelDistribution::bcpp(3, lambda).unwrap();
    let times = [20.0, 40.0];
    let records = ensemble(&dist, 300, 2, 0xC8, 40.0, 100_000, &times, false);
    let n = records.len() as f64;
    let first: f64 = records
        .iter()
        .map(|r| r.rows[0].integrated_overlap)
        .sum::<f64>()
        / n;
    let second: f64 = records
        .iter()
        .map(|r| r.rows[1].integrated_overlap - r.rows[0].integrated_overlap)
        .sum::<f64>()
        / n;
    assert!(
        second <= 0.5 * first,
        "criterion 8 FAIL: increment {second} over [20,40] vs {first} over [0,20]"
    );
    let truncated = records.iter().filter(|r| r.truncated).count();
    println!(
        "criterion 08 delocalization trend: PASS (lambda = {lambda:.4}, increments {first:.3} then {second:.3}, ratio {:.3}, {truncated} runs event-capped)",
        second / first
    );
}

#[test]
fn criterion_09_determinism_and_parallel_equivalence() {
    let dist = KernelDistribution::bcpp(1, 1.0).unwrap();
    let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();

    // Byte-identical CSV across reruns with a fixed seed.
    let a = engine::run(
        &dist,
        Horizon {
            t_max: 10.0,
            max_events: u64::MAX,
        },
        &times,
        0xC9,
        None,
    );
    let b = engine::run(
        &dist,
        Horizon {
            t_max: 10.0,
            max_events: u64::MAX,
        },
        &times,
        0xC9,
        None,
    );
    let csv_a = trajectories_to_csv(std::slice::from_ref(&a));
    let csv_b = trajectories_to_csv(std::slice::from_ref(&b));
    assert_eq!(
        csv_a.as_bytes(),
        csv_b.as_bytes(),
        "criterion 9 FAIL: reruns differ"
    );

    // Identical summaries for 1 and 8 workers.
    let recs1 = ensemble(
        &dist,
        200,
        1,
        0xC9C9,
        5.0,
        u64::MAX,
        &[0.0, 2.5, 5.0],
        false,
    );
    let recs8 = ensemble(
        &dist,
        200,
        8,
        0xC9C9,
        5.0,
        u64::MAX,
        &[0.0, 2.5, 5.0],
        false,
    );
    assert_eq!(
        recs1, recs8,
        "criterion 9 FAIL: records differ across workers"
    );
    let s1 = summarize(&dist, 0xC9C9, &[0.0, 2.5, 5.0], None, &recs1);
    let s8 = summarize(&dist, 0xC9C9, &[0.0, 2.5, 5.0], None, &recs8);
    assert_eq!(
        serde_json::to_string(&s1).unwrap(),
        serde_json::to_string(&s8).unwrap(),
        "criterion 9 FAIL: summaries differ across workers"
    );
    println!(
        "criterion 09 determinism and parallel equivalence: PASS (CSV bytes equal, workers 1 = 8)"
    );
}

#[test]
fn criterion_10_dual_process_normalization() {
    let dist = KernelDistribution::bcpp(1, 1.0).unwrap();
    let records = ensemble(&dist, 5000, 2, 0xCA, 3.0, u64::MAX, &[3.0], true);
    let values: Vec<f64> = records
        .iter()
        .map(|r| r.rows[0].log_normalized_mass.exp())
        .collect();
    let (mean, se) = mean_and_se(&values);
    assert!(
        (mean - 1.0).abs() <= 4.0 * se,
        "criterion 10 FAIL: dual mean {mean} not within 4 se ({se}) of 1"
    );
    println!("criterion 10 dual normalization: PASS (mean {mean:.4} ± {se:.4} at t = 3)");
}
