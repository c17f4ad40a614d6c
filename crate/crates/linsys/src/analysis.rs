//! Deterministic drift analysis of the overlap functional.
//!
//! For a weight field `g` (in practice a partial occupation sum `g_n`), the
//! functional `S = <g * rho, rho>` changes at an event at site `z` with draw
//! `xi` from `S` to `<g * Jbar, Jbar>`, where
//! `Jbar = (rho + v) / m`, `v = (xi - delta_0)_{. - z} rho_z`, and
//! `m = 1 + (|xi| - 1) rho_z` is the total-mass ratio. Everything here is an
//! exact finite sum over kernel atoms and occupied sites; no Monte Carlo.
//!
//! The drift (expected instantaneous change) decomposes into three pieces:
//!
//! * `U = J J - rho rho` (the unnormalized square change),
//! * `V = (|xi| - 1) U rho_z` (the normalization cross term),
//! * `W = (|xi| - 1) rho rho rho_z` (the pure mass-change term),
//!
//! with the pointwise bound `Jbar Jbar - rho rho >= U - 2V - 2W` (from
//! `(1 + x)^{-2} >= 1 - 2x`). Two exact identities pin the atoms sums to
//! convolution forms, and the lower bound
//! `sum g (U - 2W) >= (sum g beta - 2(|k| - k_0)) R` follows from the
//! telescoping identity `g_n * (p - delta_0) = p_{n+1} - delta_0 >= -delta_0`.

use crate::kernel::{KernelAtom, KernelDistribution};
use crate::lattice::{MassField, SignedField, Site};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Overlap functional `S = <g * rho, rho>`.
pub fn overlap_functional(rho: &MassField, g: &MassField) -> f64 {
    g.convolve(rho).inner(rho)
}

/// Exact drift of `S` with its term decomposition and inequality sides.
#[derive(Clone, Debug, Serialize)]
pub struct DriftBreakdown {
    /// Exact expected instantaneous change of `S` (extinction draws at a
    /// fully concentrated site excluded; see `excluded_mass`).
    pub drift: f64,
    /// `sum_z sum_xi P <g, U>`.
    pub u_term: f64,
    /// `sum_z sum_xi P (|xi| - 1) rho_z <g, U>`.
    pub v_term: f64,
    /// `sum_z sum_xi P (|xi| - 1) rho_z S`, equal to `(|k| - 1) S sum rho`.
    pub w_term: f64,
    /// `u_term - 2 w_term`.
    pub lower_bound_lhs: f64,
    /// `(sum g beta - 2 (|k| - k_0)) R`.
    pub lower_bound_rhs: f64,
    /// Probability mass of draws with mass ratio exactly zero (the update is
    /// undefined there: the population dies). Nonzero only when some site
    /// carries the whole population and the kernel has a zero draw.
    pub excluded_mass: f64,
    /// Replica overlap of the analyzed density.
    pub overlap: f64,
}

/// The local shift vector `v = (xi - delta_0)_{. - z} rho_z` as (site, value)
/// pairs. Entries can be negative at `z` itself.
fn shift_vector(atom: &KernelAtom, z: Site, rho_z: f64) -> Vec<(Site, f64)> {
    let mut v: Vec<(Site, f64)> = Vec::with_capacity(atom.vector.support_size() + 1);
    let mut origin_handled = false;
    for (o, w) in atom.vector.iter() {
        if o.is_origin() {
            v.push((z, (w - 1.0) * rho_z));
            origin_handled = true;
        } else {
            v.push((z + o, w * rho_z));
        }
    }
    if !origin_handled {
        v.push((z, -rho_z));
    }
    v
}

/// `A = 2 <g * rho, v> + <g * v, v> = <g, (rho + v)(rho + v) - rho rho>`.
fn square_change(g: &MassField, g_rho: &SignedField, v: &[(Site, f64)]) -> f64 {
    let mut linear = 0.0;
    for &(s, val) in v {
        linear += g_rho.get(s) * val;
    }
    let mut quad = 0.0;
    for &(a, va) in v {
        for &(b, vb) in v {
            quad += g.get(a - b) * va * vb;
        }
    }
    2.0 * linear + quad
}

/// Exact drift of the overlap functional for a normalized density, a
/// finite-atom kernel, and a symmetric nonnegative weight field.
pub fn exact_drift(rho: &MassField, dist: &KernelDistribution, g: &MassField) -> DriftBreakdown {
    let g_rho = SignedField::from_mass(&g.convolve(rho));
    let s_value = g_rho.inner(&SignedField::from_mass(rho));
    let overlap = rho.sum_of_squares();

    let mut drift = 0.0;
    let mut u_term = 0.0;
    let mut v_term = 0.0;
    let mut w_direct = 0.0;
    let mut excluded = 0.0;

    let rho_entries: Vec<(Site, f64)> = rho.sorted_entries();
    for &(z, rho_z) in &rho_entries {
        for atom in dist.atoms() {
            let p = atom.prob;
            let x = (atom.total_mass - 1.0) * rho_z;
            let m = 1.0 + x;
            let v = shift_vector(atom, z, rho_z);
            let a = square_change(g, &g_rho, &v);
            u_term += p * a;
            v_term += p * x * a;
            w_direct += p * x * s_value;
            if m == 0.0 {
                excluded += p;
            } else {
                drift += p * ((s_value + a) / (m * m) - s_value);
            }
        }
    }

    let beta = dist.beta_table();
    let sum_g_beta: f64 = beta
        .lag_sums()
        .into_iter()
        .map(|(lag, w)| w * g.get(lag))
        .sum();
    let k = dist.mean_kernel();
    let threshold = 2.0 * (k.total() - k.get(Site::ORIGIN));

    DriftBreakdown {
        drift,
        u_term,
        v_term,
        w_term: w_direct,
        lower_bound_lhs: u_term - 2.0 * w_direct,
        lower_bound_rhs: (sum_g_beta - threshold) * overlap,
        excluded_mass: excluded,
        overlap,
    }
}

/// The convolution route for the U-term:
/// `<g*(k - d0)*rho, rho> + <g*(kr - d0)*rho, rho> + (sum g beta) R`,
/// which must match the atom summation exactly.
pub fn u_term_convolution_route(rho: &MassField, dist: &KernelDistribution, g: &MassField) -> f64 {
    let k = dist.mean_kernel();
    let rho_s = SignedField::from_mass(rho);
    let g_s = SignedField::from_mass(g);

    let mut k_minus = SignedField::from_mass(&k);
    k_minus.add_assign(Site::ORIGIN, -1.0);
    let mut kr_minus = SignedField::from_mass(&k.reflect());
    kr_minus.add_assign(Site::ORIGIN, -1.0);

    let term1 = g_s.convolve(&k_minus).convolve(&rho_s).inner(&rho_s);
    let term2 = g_s.convolve(&kr_minus).convolve(&rho_s).inner(&rho_s);
    let sum_g_beta: f64 = dist
        .beta_table()
        .lag_sums()
        .into_iter()
        .map(|(lag, w)| w * g.get(lag))
        .sum();
    term1 + term2 + sum_g_beta * rho.sum_of_squares()
}

/// The factorized W-term `(|k| - 1) <g * rho, rho>`.
pub fn w_term_factorized(rho: &MassField, dist: &KernelDistribution, g: &MassField) -> f64 {
    (dist.mean_total_mass() - 1.0) * overlap_functional(rho, g)
}

/// Per-draw change of the overlap functional,
/// `F_z(xi) = <g, Jbar Jbar - rho rho>`. `None` when the draw kills the
/// population (mass ratio zero).
pub fn update_functional(
    rho: &MassField,
    g: &MassField,
    z: Site,
    atom: &KernelAtom,
) -> Option<f64> {
    let rho_z = rho.get(z);
    let g_rho = SignedField::from_mass(&g.convolve(rho));
    let s_value = g_rho.inner(&SignedField::from_mass(rho));
    let m = 1.0 + (atom.total_mass - 1.0) * rho_z;
    if m == 0.0 {
        return None;
    }
    let v = shift_vector(atom, z, rho_z);
    let a = square_change(g, &g_rho, &v);
    Some((s_value + a) / (m * m) - s_value)
}

/// Constants in the drift lower bound `drift >= c1 R - c2 R^{3/2}`.
#[derive(Clone, Debug, Serialize)]
pub struct DriftBoundConstants {
    /// `c1 = sum g beta - 2 (|k| - k_0)`; positive when `g` is a witness.
    pub c1: f64,
    /// One valid (not optimal) `c2`, from termwise bounds on the V-term.
    pub c2: f64,
}

/// Derive explicit bound constants from the kernel's atoms and the weight
/// field. Errors when `c1 <= 0` (then `g` is no witness and the bound says
/// nothing).
pub fn drift_bound_constants(
    dist: &KernelDistribution,
    g: &MassField,
) -> Result<DriftBoundConstants, AnalysisError> {
    let k = dist.mean_kernel();
    let sum_g_beta: f64 = dist
        .beta_table()
        .lag_sums()
        .into_iter()
        .map(|(lag, w)| w * g.get(lag))
        .sum();
    let c1 = sum_g_beta - 2.0 * (k.total() - k.get(Site::ORIGIN));
    if c1 <= 0.0 {
        return Err(AnalysisError::InvalidParameter(format!(
            "weight field is not a witness: sum g beta - 2(|k| - k_0) = {c1} <= 0"
        )));
    }
    // Termwise V-term bound: with c_m = max ||xi| - 1|, c_s = max |xi - d0|_1,
    // g1 = |g|, gmax = max g, and using max(g*rho) <= g1 sqrt(R) plus
    // sum rho^3 <= R^{3/2}:
    //   |V| <= c_m (2 c_s g1 + c_s^2 gmax) R^{3/2},
    // and the drift bound uses 2|V|.
    let mut c_m = 0.0f64;
    let mut c_s = 0.0f64;
    for atom in dist.atoms() {
        c_m = c_m.max((atom.total_mass - 1.0).abs());
        let mut l1 = 0.0;
        let mut origin_seen = false;
        for (o, w) in atom.vector.iter() {
            if o.is_origin() {
                l1 += (w - 1.0).abs();
                origin_seen = true;
            } else {
                l1 += w;
            }
        }
        if !origin_seen {
            l1 += 1.0;
        }
        c_s = c_s.max(l1);
    }
    let g1 = g.total();
    let gmax = g.max_value();
    let c2 = 2.0 * c_m * (2.0 * c_s * g1 + c_s * c_s * gmax);
    Ok(DriftBoundConstants { c1, c2 })
}

/// Bound constant `c` with `|F_z(xi)| <= c rho_z` whenever `rho_z <= 1/2`,
/// from the same termwise estimates (the mass ratio is then at least 1/2,
/// so `1/m^2 <= 4`).
pub fn update_functional_bound_constant(dist: &KernelDistribution, g: &MassField) -> f64 {
    let mut c_m = 0.0f64;
    let mut c_s = 0.0f64;
    for atom in dist.atoms() {
        c_m = c_m.max((atom.total_mass - 1.0).abs());
        let mut l1 = 0.0;
        let mut origin_seen = false;
        for (o, w) in atom.vector.iter() {
            if o.is_origin() {
                l1 += (w - 1.0).abs();
                origin_seen = true;
            } else {
                l1 += w;
            }
        }
        if !origin_seen {
            l1 += 1.0;
        }
        c_s = c_s.max(l1);
    }
    let g1 = g.total();
    let gmax = g.max_value();
    // |F| = |A - (m^2 - 1) S| / m^2 with |A| <= (2 c_s g1 + c_s^2 gmax) rho_z,
    // |m^2 - 1| = |2x + x^2| <= (2 c_m + c_m^2) rho_z, S <= g1.
    4.0 * (2.0 * c_s * g1 + c_s * c_s * gmax + (2.0 * c_m + c_m * c_m) * g1)
}

/// Hausdorff-Young check: returns `(|f * h|_2, |f|_1 |h|_2)`; the first never
/// exceeds the second.
pub fn hausdorff_young_check(f: &MassField, h: &MassField) -> (f64, f64) {
    let conv = f.convolve(h);
    let lhs = conv.sum_of_squares().sqrt();
    let rhs = f.total() * h.sum_of_squares().sqrt();
    (lhs, rhs)
}
