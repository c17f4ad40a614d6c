//! Kernel distributions: the law of the random redistribution vector.
//!
//! A kernel is a finite-atom law of a random vector `K = (K_x)` with
//! nonnegative, bounded, finite-range entries. When a site's clock rings, a
//! fresh draw of `K` redistributes that site's mass: the site keeps `K_0`
//! times its mass and ships `K_x` times its mass to each displacement `x`.
//!
//! Only finite-atom laws are supported. That restriction buys exact moment
//! computations: the mean kernel, the covariance table `beta`, and the
//! log-moment margin are all finite sums over atoms, so every downstream
//! phase criterion is evaluated to machine precision rather than sampled.
//!
//! Two standing assumptions are enforced at construction, and checkable via
//! [`KernelDistribution::validate`]:
//!
//! * the support of the mean kernel spans `R^d` (the model is truly
//!   d-dimensional), and
//! * `P(|K| = 1) < 1` (total mass actually moves).

use crate::lattice::{MassField, Site};
use crate::rng::Rng;
use rustc_hash::FxHashMap;
use thiserror::Error;

/// Tolerance for probability normalization and exact-moment checks.
pub const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("kernel assumption violated: {0}")]
    AssumptionViolated(String),
}

/// One atom of a kernel law: a realization vector and its probability.
#[derive(Clone, Debug)]
pub struct KernelAtom {
    pub prob: f64,
    pub vector: MassField,
    /// Total mass `|xi|` of the realization, precomputed once.
    pub total_mass: f64,
}

impl KernelAtom {
    pub fn new(prob: f64, vector: MassField) -> KernelAtom {
        let total_mass = vector.total();
        KernelAtom {
            prob,
            vector,
            total_mass,
        }
    }
}

/// Symmetric covariance table `beta(x, y) = E[(K - delta_0)_x (K - delta_0)_y]`.
#[derive(Clone, Debug, Default)]
pub struct BetaTable {
    entries: FxHashMap<(Site, Site), f64>,
}

impl BetaTable {
    #[inline]
    pub fn get(&self, x: Site, y: Site) -> f64 {
        self.entries.get(&(x, y)).copied().unwrap_or(0.0)
    }

    fn add(&mut self, x: Site, y: Site, v: f64) {
        if v != 0.0 {
            *self.entries.entry((x, y)).or_insert(0.0) += v;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = ((Site, Site), f64)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sum of all entries; equals `E[(|K| - 1)^2]`.
    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Row sums `sum_z beta(z, z + y)` indexed by the lag `y`.
    pub fn lag_sums(&self) -> FxHashMap<Site, f64> {
        let mut out = FxHashMap::default();
        for (&(x, y), &v) in &self.entries {
            *out.entry(y - x).or_insert(0.0) += v;
        }
        out
    }
}

/// Extra structure recorded for product-form (potlatch) kernels `K = W k`.
#[derive(Clone, Debug)]
pub struct ProductForm {
    /// The fixed redistribution table `k`.
    pub k_table: MassField,
    /// Atoms `(prob, value)` of the scalar factor `W`.
    pub w_atoms: Vec<(f64, f64)>,
    /// Second moment `E[W^2]`, used by the localization threshold.
    pub w_second_moment: f64,
}

/// A validated finite-atom kernel law.
#[derive(Clone, Debug)]
pub struct KernelDistribution {
    d: usize,
    atoms: Vec<KernelAtom>,
    /// Cumulative atom probabilities for sampling.
    cum: Vec<f64>,
    /// Recorded entry bound `b_K = max_x max_atoms K_x`.
    b_k: f64,
    /// Recorded range bound `r_K = max l1 radius of any atom's support`.
    r_k: i64,
    product_form: Option<ProductForm>,
}

/// Result of checking the standing assumptions, by name.
#[derive(Clone, Debug)]
pub struct AssumptionReport {
    /// Recorded entry bound.
    pub b_k: f64,
    /// Recorded support radius.
    pub r_k: i64,
    /// The support of the mean kernel contains `d` linearly independent vectors.
    pub spans_dimension: bool,
    /// Rank actually found by elimination.
    pub span_rank: usize,
    /// `P(|K| = 1) < 1`: the total mass is not frozen at its initial value.
    pub mass_moves: bool,
    /// Names of failed assumptions, empty when all hold.
    pub failures: Vec<String>,
}

impl AssumptionReport {
    pub fn all_hold(&self) -> bool {
        self.failures.is_empty()
    }
}

impl KernelDistribution {
    /// Binary contact path kernel in dimension `d` with parameter `lambda`.
    ///
    /// `2d + 1` atoms: for each of the `2d` unit neighbors `e`, the vector
    /// `delta_0 + delta_e` with probability `lambda / (2 d lambda + 1)`; and
    /// the zero vector with probability `1 / (2 d lambda + 1)`.
    pub fn bcpp(d: usize, lambda: f64) -> Result<KernelDistribution, KernelError> {
        if d == 0 || d > crate::lattice::MAX_DIM {
            return Err(KernelError::InvalidParameter(format!(
                "dimension must be in 1..={}, got {d}",
                crate::lattice::MAX_DIM
            )));
        }
        if lambda <= 0.0 || !lambda.is_finite() {
            return Err(KernelError::InvalidParameter(format!(
                "lambda must be positive and finite, got {lambda}"
            )));
        }
        let denom = 2.0 * d as f64 * lambda + 1.0;
        let mut atoms = Vec::with_capacity(2 * d + 1);
        for axis in 0..d {
            for sign in [1, -1] {
                let mut v = MassField::new();
                v.set(Site::ORIGIN, 1.0);
                v.set(Site::unit(axis, sign), 1.0);
                atoms.push(KernelAtom::new(lambda / denom, v));
            }
        }
        atoms.push(KernelAtom::new(1.0 / denom, MassField::new()));
        Self::from_atoms(d, atoms)
    }

    /// Product-form (potlatch) kernel `K = W k` from a fixed table `k` and a
    /// finite-atom scalar `W` with mean one.
    pub fn potlatch(
        d: usize,
        k_table: MassField,
        w_atoms: &[(f64, f64)],
    ) -> Result<KernelDistribution, KernelError> {
        if d == 0 || d > crate::lattice::MAX_DIM {
            return Err(KernelError::InvalidParameter(format!(
                "dimension must be in 1..={}, got {d}",
                crate::lattice::MAX_DIM
            )));
        }
        if k_table.is_empty() {
            return Err(KernelError::InvalidParameter(
                "redistribution table k must have nonempty support".into(),
            ));
        }
        if w_atoms.is_empty() {
            return Err(KernelError::InvalidParameter(
                "W needs at least one atom".into(),
            ));
        }
        for &(p, w) in w_atoms {
            if p <= 0.0 || !p.is_finite() {
                return Err(KernelError::InvalidParameter(format!(
                    "W atom probability must be positive, got {p}"
                )));
            }
            if w < 0.0 || !w.is_finite() {
                return Err(KernelError::InvalidParameter(format!(
                    "W atom value must be nonnegative and finite, got {w}"
                )));
            }
        }
        let psum: f64 = w_atoms.iter().map(|&(p, _)| p).sum();
        if (psum - 1.0).abs() > PROB_TOL {
            return Err(KernelError::InvalidParameter(format!(
                "W atom probabilities sum to {psum}, not 1"
            )));
        }
        let w_atoms: Vec<(f64, f64)> = w_atoms.iter().map(|&(p, w)| (p / psum, w)).collect();
        let mean: f64 = w_atoms.iter().map(|&(p, w)| p * w).sum();
        if (mean - 1.0).abs() > PROB_TOL {
            return Err(KernelError::InvalidParameter(format!(
                "W must have mean one (within {PROB_TOL}), got mean {mean}"
            )));
        }
        let mass_at_one: f64 = w_atoms
            .iter()
            .filter(|&&(_, w)| (w - 1.0).abs() <= PROB_TOL)
            .map(|&(p, _)| p)
            .sum();
        if mass_at_one >= 1.0 - PROB_TOL {
            return Err(KernelError::AssumptionViolated(
                "scalar factor W is degenerate at 1 (P(W = 1) must be < 1)".into(),
            ));
        }
        let w_second_moment: f64 = w_atoms.iter().map(|&(p, w)| p * w * w).sum();
        let atoms: Vec<KernelAtom> = w_atoms
            .iter()
            .map(|&(p, w)| {
                let v = if w == 0.0 {
                    MassField::new()
                } else {
                    k_table.scale(w)
                };
                KernelAtom::new(p, v)
            })
            .collect();
        let mut dist = Self::from_atoms(d, atoms)?;
        dist.product_form = Some(ProductForm {
            k_table,
            w_atoms,
            w_second_moment,
        });
        Ok(dist)
    }

    /// Kernel from explicit atoms.
    pub fn custom(d: usize, atoms: Vec<KernelAtom>) -> Result<KernelDistribution, KernelError> {
        if d == 0 || d > crate::lattice::MAX_DIM {
            return Err(KernelError::InvalidParameter(format!(
                "dimension must be in 1..={}, got {d}",
                crate::lattice::MAX_DIM
            )));
        }
        Self::from_atoms(d, atoms)
    }

    fn from_atoms(d: usize, mut atoms: Vec<KernelAtom>) -> Result<KernelDistribution, KernelError> {
        if atoms.is_empty() {
            return Err(KernelError::InvalidParameter(
                "kernel needs at least one atom".into(),
            ));
        }
        for a in &atoms {
            if a.prob <= 0.0 || !a.prob.is_finite() {
                return Err(KernelError::InvalidParameter(format!(
                    "atom probability must be positive, got {}",
                    a.prob
                )));
            }
            for (s, v) in a.vector.iter() {
                if s.coords(crate::lattice::MAX_DIM)[d..]
                    .iter()
                    .any(|&c| c != 0)
                {
                    return Err(KernelError::InvalidParameter(format!(
                        "atom support site {:?} has nonzero coordinates beyond dimension {d}",
                        s.coords(crate::lattice::MAX_DIM)
                    )));
                }
                debug_assert!(v > 0.0);
            }
        }
        let psum: f64 = atoms.iter().map(|a| a.prob).sum();
        if (psum - 1.0).abs() > PROB_TOL {
            return Err(KernelError::InvalidParameter(format!(
                "atom probabilities sum to {psum}, off 1 by more than {PROB_TOL}"
            )));
        }
        // Renormalize exactly; user configs carry decimal round-off.
        for a in &mut atoms {
            a.prob /= psum;
        }
        let b_k = atoms
            .iter()
            .map(|a| a.vector.max_value())
            .fold(0.0, f64::max);
        let r_k = atoms
            .iter()
            .map(|a| a.vector.support_radius())
            .max()
            .unwrap_or(0);
        let mut cum = Vec::with_capacity(atoms.len());
        let mut acc = 0.0;
        for a in &atoms {
            acc += a.prob;
            cum.push(acc);
        }
        if let Some(last) = cum.last_mut() {
            *last = 1.0;
        }
        let dist = KernelDistribution {
            d,
            atoms,
            cum,
            b_k,
            r_k,
            product_form: None,
        };
        let report = dist.validate();
        if !report.all_hold() {
            return Err(KernelError::AssumptionViolated(report.failures.join("; ")));
        }
        Ok(dist)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn atoms(&self) -> &[KernelAtom] {
        &self.atoms
    }

    pub fn entry_bound(&self) -> f64 {
        self.b_k
    }

    pub fn support_radius(&self) -> i64 {
        self.r_k
    }

    pub fn product_form(&self) -> Option<&ProductForm> {
        self.product_form.as_ref()
    }

    /// Check the standing assumptions and report failures by name.
    pub fn validate(&self) -> AssumptionReport {
        let k = self.mean_kernel();
        // The zero vector never contributes to a basis, so the origin (if in
        // the support) is skipped by construction of the elimination below.
        let support: Vec<Site> = k.sites().filter(|s| !s.is_origin()).collect();
        let rank = rank_of_sites(&support, self.d);
        let spans = rank == self.d;

        let mass_at_one: f64 = self
            .atoms
            .iter()
            .filter(|a| (a.total_mass - 1.0).abs() <= PROB_TOL)
            .map(|a| a.prob)
            .sum();
        let mass_moves = mass_at_one < 1.0 - PROB_TOL;

        let mut failures = Vec::new();
        if !spans {
            failures.push(format!(
                "mean-kernel support spans only a rank-{rank} sublattice of dimension {}",
                self.d
            ));
        }
        if !mass_moves {
            failures.push("total mass is almost surely conserved (P(|K| = 1) = 1)".into());
        }
        AssumptionReport {
            b_k: self.b_k,
            r_k: self.r_k,
            spans_dimension: spans,
            span_rank: rank,
            mass_moves,
            failures,
        }
    }

    /// Draw one realization of `K`.
    pub fn sample<'a>(&'a self, rng: &mut Rng) -> &'a MassField {
        &self.atoms[self.sample_index(rng)].vector
    }

    /// Draw an atom index with the atom probabilities.
    pub fn sample_index(&self, rng: &mut Rng) -> usize {
        let u = rng.next_f64();
        // Linear CDF walk; atom counts are tiny.
        for (i, &c) in self.cum.iter().enumerate() {
            if u < c {
                return i;
            }
        }
        self.cum.len() - 1
    }

    /// Mean kernel `k_x = E[K_x]`.
    pub fn mean_kernel(&self) -> MassField {
        let mut k = MassField::new();
        for a in &self.atoms {
            for (s, v) in a.vector.iter() {
                k.add_assign(s, a.prob * v);
            }
        }
        k
    }

    /// Expected total mass `|k| = E[|K|]`; `|k| - 1` is the exponential
    /// growth rate of the expected population.
    pub fn mean_total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.prob * a.total_mass).sum()
    }

    /// Covariance table `beta(x, y) = E[(K - delta_0)_x (K - delta_0)_y]`,
    /// an exact finite sum over atoms.
    pub fn beta_table(&self) -> BetaTable {
        let mut table = BetaTable::default();
        for a in &self.atoms {
            // Centered vector K - delta_0 on this atom.
            let mut centered: Vec<(Site, f64)> = a.vector.iter().collect();
            let origin_val = a.vector.get(Site::ORIGIN);
            if origin_val == 0.0 {
                centered.push((Site::ORIGIN, 0.0));
            }
            let centered: Vec<(Site, f64)> = centered
                .into_iter()
                .map(|(s, v)| (s, if s.is_origin() { v - 1.0 } else { v }))
                .collect();
            for &(x, vx) in &centered {
                for &(y, vy) in &centered {
                    table.add(x, y, a.prob * vx * vy);
                }
            }
        }
        table
    }

    /// Second moment `E[(|K| - 1)^2]` of the one-step total-mass change.
    pub fn mass_change_second_moment(&self) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.prob * (a.total_mass - 1.0) * (a.total_mass - 1.0))
            .sum()
    }

    /// The slow-growth margin `sum_x E[K_x ln K_x] - (|k| - 1)`, with the
    /// convention `0 ln 0 = 0`. A positive margin certifies slow growth.
    pub fn log_moment_margin(&self) -> f64 {
        let mut log_moment = 0.0;
        for a in &self.atoms {
            for (_, v) in a.vector.iter() {
                // v > 0 by the field invariant; v = 1 contributes nothing.
                log_moment += a.prob * v * v.ln();
            }
        }
        log_moment - (self.mean_total_mass() - 1.0)
    }
}

/// Rank of a set of lattice vectors, by Gaussian elimination with a fixed
/// pivot tolerance of 1e-12.
#[allow(clippy::needless_range_loop)]
fn rank_of_sites(sites: &[Site], d: usize) -> usize {
    let mut rows: Vec<Vec<f64>> = sites
        .iter()
        .map(|s| s.coords(d).iter().map(|&c| c as f64).collect())
        .collect();
    let mut rank = 0;
    for col in 0..d {
        // Find the largest pivot in this column.
        let mut best = rank;
        for r in rank..rows.len() {
            if rows[r][col].abs() > rows[best][col].abs() {
                best = r;
            }
        }
        if rows.is_empty() || rank >= rows.len() || rows[best][col].abs() <= 1e-12 {
            continue;
        }
        rows.swap(rank, best);
        let pivot = rows[rank][col];
        for r in (rank + 1)..rows.len() {
            let f = rows[r][col] / pivot;
            if f != 0.0 {
                for c in col..d {
                    let sub = f * rows[rank][c];
                    rows[r][c] -= sub;
                }
            }
        }
        rank += 1;
        if rank == d {
            break;
        }
    }
    rank
}
