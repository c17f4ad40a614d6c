//! Self-check battery of the analytical identities.
//!
//! Runs every identity the analysis and theory layers rely on against the
//! configured kernel plus deterministic randomized instances, and reports
//! named residuals. Checks that need a finite Green function are skipped
//! (with a notice) for `d <= 2`.

use crate::analysis;
use crate::kernel::KernelDistribution;
use crate::lattice::{MassField, SignedField, Site};
use crate::rng::Rng;
use crate::theory::{self, GreenMethod, GreenParams, JumpLaw};
use serde::Serialize;

/// Outcome of one named check.
#[derive(Clone, Debug, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    /// Worst residual observed (sign convention per check).
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl IdentityCheck {
    fn passed_check(name: &str, residual: f64, tolerance: f64) -> IdentityCheck {
        IdentityCheck {
            name: name.into(),
            residual,
            tolerance,
            passed: residual <= tolerance,
            note: None,
        }
    }

    fn skipped(name: &str, why: &str) -> IdentityCheck {
        IdentityCheck {
            name: name.into(),
            residual: 0.0,
            tolerance: 0.0,
            passed: true,
            note: Some(format!("skipped: {why}")),
        }
    }
}

/// Battery controls.
#[derive(Clone, Debug)]
pub struct BatteryOptions {
    pub seed: u64,
    /// Test mode: multiply the covariance term of the U-identity by
    /// `1 + beta_perturbation` to verify the battery actually detects
    /// corruption. Zero in normal operation.
    pub beta_perturbation: f64,
    pub green: GreenParams,
}

impl Default for BatteryOptions {
    fn default() -> Self {
        BatteryOptions {
            seed: 0x1d3_b0a7,
            beta_perturbation: 0.0,
            green: GreenParams::default(),
        }
    }
}

/// A random normalized density on `sites` sites within l1 radius `spread`.
pub fn random_density(rng: &mut Rng, d: usize, sites: usize, spread: i32) -> MassField {
    let mut f = MassField::new();
    while f.support_size() < sites {
        let coords: Vec<i32> = (0..d)
            .map(|_| rng.index((2 * spread + 1) as usize) as i32 - spread)
            .collect();
        f.add_assign(Site::new(&coords), rng.next_f64_open());
    }
    let total = f.total();
    f.scale(1.0 / total)
}

/// A random valid kernel distribution with range-1 support (unit neighbors
/// plus the origin), guaranteed to satisfy the standing assumptions.
///
/// Draws whose induced jump law nearly degenerates along some axis are
/// rejected: such kernels are numerically almost lower-dimensional, and
/// every quantitative statement about them is dominated by that
/// near-degeneracy rather than by anything the draw was meant to exercise.
pub fn random_kernel(rng: &mut Rng, d: usize) -> KernelDistribution {
    use crate::kernel::KernelAtom;
    'draw: loop {
        let n_atoms = 2 + rng.index(3);
        let mut atoms = Vec::with_capacity(n_atoms);
        let mut probs = Vec::with_capacity(n_atoms);
        for _ in 0..n_atoms {
            probs.push(0.05 + rng.next_f64());
        }
        let psum: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= psum;
        }
        for &p in &probs {
            let mut v = MassField::new();
            if rng.next_f64() < 0.7 {
                v.add_assign(Site::ORIGIN, 0.2 + 1.5 * rng.next_f64());
            }
            for axis in 0..d {
                for sign in [1, -1] {
                    if rng.next_f64() < 0.6 {
                        v.add_assign(Site::unit(axis, sign), 0.1 + rng.next_f64());
                    }
                }
            }
            atoms.push(KernelAtom::new(p, v));
        }
        let Ok(dist) = KernelDistribution::custom(d, atoms) else {
            continue;
        };
        let k = dist.mean_kernel();
        let off_origin = 2.0 * (k.total() - k.get(Site::ORIGIN));
        for axis in 0..d {
            let axis_weight =
                (k.get(Site::unit(axis, 1)) + k.get(Site::unit(axis, -1))) * 2.0 / off_origin;
            if axis_weight < 0.12 {
                continue 'draw;
            }
        }
        return dist;
    }
}

/// Run the full battery for a kernel.
pub fn run_battery(dist: &KernelDistribution, opts: &BatteryOptions) -> Vec<IdentityCheck> {
    let mut rng = Rng::from_seed(opts.seed);
    let d = dist.dim();
    let k = dist.mean_kernel();
    let p = JumpLaw::from_mean_kernel(&k, d).expect("validated kernel has off-origin mean mass");
    let mut checks = Vec::new();

    // Telescoping identity g_n * (p - delta_0) = p_{n+1} - delta_0.
    {
        let mut worst = 0.0f64;
        for n in [0usize, 1, 2, 5, 9] {
            let g = theory::partial_green_sum(&p, n);
            let mut p_minus = SignedField::from_mass(&p.probs);
            p_minus.add_assign(Site::ORIGIN, -1.0);
            let lhs = SignedField::from_mass(&g).convolve(&p_minus);
            let power = theory::series::sparse_power(&p, n + 1);
            let mut rhs = SignedField::new();
            for (&s, &v) in &power {
                rhs.add_assign(s, v);
            }
            rhs.add_assign(Site::ORIGIN, -1.0);
            let mut diff = lhs;
            for (s, v) in rhs.iter() {
                diff.add_assign(s, -v);
            }
            worst = worst.max(diff.max_abs());
        }
        checks.push(IdentityCheck::passed_check(
            "occupation-sum-telescoping",
            worst,
            1e-12,
        ));
    }

    // Hausdorff-Young on random sparse pairs: |f*h|_2 <= |f|_1 |h|_2.
    {
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..200 {
            let nf = 1 + rng.index(8);
            let f = random_density(&mut rng, d, nf, 6).scale(0.2 + 2.0 * rng.next_f64());
            let nh = 1 + rng.index(8);
            let h = random_density(&mut rng, d, nh, 6).scale(0.2 + 2.0 * rng.next_f64());
            let (lhs, rhs) = analysis::hausdorff_young_check(&f, &h);
            worst = worst.max(lhs - rhs);
        }
        checks.push(IdentityCheck::passed_check(
            "hausdorff-young",
            worst.max(0.0),
            1e-12,
        ));
    }

    // U-term decomposition, W-term factorization, drift lower bound.
    {
        let mut worst_u = 0.0f64;
        let mut worst_w = 0.0f64;
        let mut worst_slack = 0.0f64;
        for _ in 0..20 {
            let sites = 2 + rng.index(12);
            let rho = random_density(&mut rng, d, sites, 8);
            let n = 1 + rng.index(5);
            let g = theory::partial_green_sum(&p, n);
            let b = analysis::exact_drift(&rho, dist, &g);
            let mut u_conv = analysis::u_term_convolution_route(&rho, dist, &g);
            if opts.beta_perturbation != 0.0 {
                // Corrupt the covariance contribution deliberately.
                let sum_g_beta: f64 = dist
                    .beta_table()
                    .lag_sums()
                    .into_iter()
                    .map(|(lag, w)| w * g.get(lag))
                    .sum();
                u_conv += opts.beta_perturbation * sum_g_beta * rho.sum_of_squares();
            }
            worst_u = worst_u.max((b.u_term - u_conv).abs());
            worst_w = worst_w.max((b.w_term - analysis::w_term_factorized(&rho, dist, &g)).abs());
            worst_slack = worst_slack.max(b.lower_bound_rhs - b.lower_bound_lhs);
        }
        checks.push(IdentityCheck::passed_check(
            "u-term-decomposition",
            worst_u,
            1e-12,
        ));
        checks.push(IdentityCheck::passed_check(
            "w-term-factorization",
            worst_w,
            1e-12,
        ));
        checks.push(IdentityCheck::passed_check(
            "drift-lower-bound",
            worst_slack,
            1e-12,
        ));
    }

    // Green convolution identity (k + kr) * G / 2 = |k| G - delta_0.
    if d >= 3 {
        let r_k = dist.support_radius().max(1);
        let radius = 3;
        let table = theory::green_table(&k, d, radius + r_k, GreenMethod::Series, &opts.green)
            .expect("green table");
        let k_norm = k.total();
        let mut worst = 0.0f64;
        for x in theory::l1_ball(d, radius) {
            let mut conv = 0.0;
            for (u, vu) in k.iter() {
                let w = 0.5 * vu;
                conv += w * table.value(x - u) + w * table.value(x + u);
            }
            let rhs = k_norm * table.value(x) - if x.is_origin() { 1.0 } else { 0.0 };
            worst = worst.max((conv - rhs).abs());
        }
        checks.push(IdentityCheck::passed_check(
            "green-convolution-identity",
            worst,
            1e-6,
        ));
    } else {
        checks.push(IdentityCheck::skipped(
            "green-convolution-identity",
            "Green function diverges for d <= 2",
        ));
    }

    // Product-form statistic algebra, in the form that is exact in the G
    // values themselves:
    // sum G(x-y) beta(x,y) = E[W^2] <G*k, k> - <G, k + kr> + G(0).
    if d >= 3 {
        if let Some(pf) = dist.product_form() {
            let radius = 2 * pf.k_table.support_radius();
            let table = theory::green_table(&k, d, radius, GreenMethod::Series, &opts.green)
                .expect("green table");
            let beta = dist.beta_table();
            let direct = theory::localization_statistic_from(&table, &beta);
            let mut gk_k = 0.0;
            for (x, vx) in pf.k_table.iter() {
                for (y, vy) in pf.k_table.iter() {
                    gk_k += vx * vy * table.value(x - y);
                }
            }
            let g_k_sym: f64 = pf
                .k_table
                .iter()
                .map(|(x, vx)| vx * (table.value(x) + table.value(-x)))
                .sum();
            let algebraic = pf.w_second_moment * gk_k - g_k_sym + table.origin();
            checks.push(IdentityCheck::passed_check(
                "potlatch-statistic-closed-form",
                (direct - algebraic).abs(),
                1e-8,
            ));
        } else {
            checks.push(IdentityCheck::skipped(
                "potlatch-statistic-closed-form",
                "kernel is not product-form",
            ));
        }
    } else {
        checks.push(IdentityCheck::skipped(
            "potlatch-statistic-closed-form",
            "Green function diverges for d <= 2",
        ));
    }

    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_passes_on_contact_path_d3() {
        let dist = KernelDistribution::bcpp(3, 1.0).unwrap();
        let checks = run_battery(&dist, &BatteryOptions::default());
        for c in &checks {
            assert!(c.passed, "{} failed: residual {}", c.name, c.residual);
        }
        assert!(
            checks
                .iter()
                .any(|c| c.name == "green-convolution-identity" && c.note.is_none())
        );
    }

    #[test]
    fn battery_skips_green_checks_for_d1() {
        let dist = KernelDistribution::bcpp(1, 1.0).unwrap();
        let checks = run_battery(&dist, &BatteryOptions::default());
        for c in &checks {
            assert!(c.passed, "{} failed: residual {}", c.name, c.residual);
        }
        let green = checks
            .iter()
            .find(|c| c.name == "green-convolution-identity")
            .unwrap();
        assert!(green.note.as_deref().unwrap_or("").contains("skipped"));
    }

    #[test]
    fn corrupted_covariance_is_detected() {
        let dist = KernelDistribution::bcpp(1, 1.0).unwrap();
        let opts = BatteryOptions {
            beta_perturbation: 1e-3,
            ..BatteryOptions::default()
        };
        let checks = run_battery(&dist, &opts);
        let u = checks
            .iter()
            .find(|c| c.name == "u-term-decomposition")
            .unwrap();
        assert!(!u.passed, "corruption went undetected");
    }

    #[test]
    fn potlatch_statistic_check_runs_for_product_form_d3() {
        let mut k = MassField::new();
        for axis in 0..3 {
            for sign in [1, -1] {
                k.add_assign(Site::unit(axis, sign), 0.2);
            }
        }
        k.add_assign(Site::ORIGIN, 0.1);
        let dist = KernelDistribution::potlatch(3, k, &[(0.5, 0.5), (0.5, 1.5)]).unwrap();
        let checks = run_battery(&dist, &BatteryOptions::default());
        let c = checks
            .iter()
            .find(|c| c.name == "potlatch-statistic-closed-form")
            .unwrap();
        assert!(c.note.is_none(), "unexpected skip: {:?}", c.note);
        assert!(c.passed, "residual {}", c.residual);
    }
}
