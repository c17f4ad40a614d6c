//! Exact event-driven simulation of the population process.
//!
//! Each active site carries a unit-rate exponential clock; when a clock
//! rings, an independent kernel draw redistributes that site's mass. For the
//! forward process an update at an empty site is the identity, so simulating
//! clocks only on occupied sites is exact: one aggregate exponential with
//! rate equal to the active count plus a uniform site pick reproduces the
//! per-site-clock law.
//!
//! State is held in scaled form: a positive vector `v` with tracked sum `V`,
//! so the spatial density is `rho = v / V` and the true total mass satisfies
//! `ln|eta| = log_mass`, accumulated per event. Events touch only the kernel
//! support, so a step costs O(kernel support); the sum, the sum of squares
//! (for the replica overlap), and `log_mass` advance incrementally and are
//! re-summed exactly on a fixed cadence to pin floating drift. Total mass
//! grows or shrinks exponentially, which raw storage cannot represent past
//! ~1e308; the scaled form never overflows because `v` is rescaled whenever
//! `V` leaves a wide safe band.
//!
//! Extinction is exact rather than thresholded: total mass can only hit zero
//! through a zero-vector kernel draw, which removes its site outright, so
//! extinction is simply "the support became empty".

mod dual;

pub use dual::DualConfiguration;

use crate::kernel::{KernelAtom, KernelDistribution};
use crate::lattice::{MassField, Site};
use crate::rng::Rng;
use rustc_hash::FxHashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("cannot step an extinct configuration")]
    ExtinctState,
}

/// Events between exact re-summations of the tracked aggregates.
const RESUM_INTERVAL: u64 = 4096;
/// Rescale the carried vector when its sum leaves this band.
const SCALE_BAND: (f64, f64) = (1e-120, 1e120);

/// Population state in normalized form.
#[derive(Clone, Debug)]
pub struct Configuration {
    d: usize,
    time: f64,
    /// ln of the true total mass; -inf when extinct.
    log_mass: f64,
    /// Tracked sum of the scaled vector.
    total: f64,
    /// Tracked sum of squares of the scaled vector.
    sum_sq: f64,
    /// Dense site/mass pairs, every value strictly positive.
    masses: Vec<(Site, f64)>,
    index: FxHashMap<Site, u32>,
    events: u64,
    events_since_resum: u64,
    prune_threshold: Option<f64>,
}

/// One applied event.
#[derive(Clone, Debug, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub site: Site,
    pub atom_index: usize,
    /// Total-mass ratio `1 + (|xi| - 1) rho_z`; zero exactly at extinction.
    pub mass_ratio: f64,
}

/// Sampled observables of a configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Observables {
    pub time: f64,
    /// Density at the most populated site.
    pub rho_star: f64,
    /// Replica overlap `R = sum_x rho_x^2`.
    pub overlap: f64,
    pub active_sites: usize,
    pub log_mass: f64,
    /// `ln|eta_t| - (|k| - 1) t`: log of the mean-normalized mass.
    pub log_normalized_mass: f64,
    /// `int_0^t R_s ds`, accumulated exactly between events.
    pub integrated_overlap: f64,
}

/// Why a run stopped.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum StopReason {
    Horizon,
    Extinct,
    MaxEvents,
}

/// Stopping rules for a run.
#[derive(Copy, Clone, Debug)]
pub struct Horizon {
    pub t_max: f64,
    pub max_events: u64,
}

/// Final state digest of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct FinalSummary {
    pub time: f64,
    pub active_sites: usize,
    pub log_mass: f64,
    pub events: u64,
    pub stop: StopReason,
}

/// A complete sampled trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub rows: Vec<Observables>,
    pub final_state: FinalSummary,
    pub survived: bool,
    pub seed: u64,
    /// True when the run was cut by the event cap; later rows carry the
    /// frozen configuration.
    pub truncated: bool,
    /// Prune threshold in force, if any (changes the sampled law).
    pub prune_threshold: Option<f64>,
}

impl Configuration {
    /// A single unit of mass at the origin at time zero.
    pub fn single_at_origin(d: usize) -> Configuration {
        let mut index = FxHashMap::default();
        index.insert(Site::ORIGIN, 0u32);
        Configuration {
            d,
            time: 0.0,
            log_mass: 0.0,
            total: 1.0,
            sum_sq: 1.0,
            masses: vec![(Site::ORIGIN, 1.0)],
            index,
            events: 0,
            events_since_resum: 0,
            prune_threshold: None,
        }
    }

    pub fn with_prune_threshold(mut self, threshold: Option<f64>) -> Configuration {
        self.prune_threshold = threshold;
        self
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn is_extinct(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn active_sites(&self) -> usize {
        self.masses.len()
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn log_mass(&self) -> f64 {
        self.log_mass
    }

    /// Density at a site.
    pub fn density(&self, site: Site) -> f64 {
        match self.index.get(&site) {
            Some(&i) => self.masses[i as usize].1 / self.total,
            None => 0.0,
        }
    }

    /// Current replica overlap from the tracked aggregates.
    pub fn overlap(&self) -> f64 {
        if self.is_extinct() {
            0.0
        } else {
            self.sum_sq / (self.total * self.total)
        }
    }

    /// Sum of the stored density (1 up to floating drift; exact after resum).
    pub fn density_sum(&self) -> f64 {
        if self.is_extinct() {
            0.0
        } else {
            self.masses.iter().map(|&(_, v)| v).sum::<f64>() / self.total
        }
    }

    /// Snapshot of the normalized density as a sparse field.
    pub fn density_field(&self) -> MassField {
        let mut f = MassField::new();
        for &(s, v) in &self.masses {
            f.set(s, v / self.total);
        }
        f
    }

    /// Observables at the current instant. `integrated_overlap` is whatever
    /// the caller has accumulated (zero at time zero).
    pub fn observables(&self, k_norm: f64, integrated_overlap: f64) -> Observables {
        self.observables_at(self.time, k_norm, integrated_overlap)
    }

    fn observables_at(&self, t: f64, k_norm: f64, integrated_overlap: f64) -> Observables {
        let (rho_star, overlap) = density_stats(&self.masses);
        Observables {
            time: t,
            rho_star,
            overlap,
            active_sites: self.masses.len(),
            log_mass: self.log_mass,
            log_normalized_mass: self.log_mass - (k_norm - 1.0) * t,
            integrated_overlap,
        }
    }

    #[inline]
    fn mass_at_slot(&self, slot: u32) -> f64 {
        self.masses[slot as usize].1
    }

    fn set_mass(&mut self, site: Site, value: f64) {
        debug_assert!(value >= 0.0);
        match self.index.get(&site).copied() {
            Some(slot) => {
                let old = self.mass_at_slot(slot);
                self.sum_sq += value * value - old * old;
                if value == 0.0 {
                    // Swap-remove keeps the dense vector compact.
                    let last = self.masses.len() - 1;
                    let moved = self.masses[last].0;
                    self.masses.swap(slot as usize, last);
                    self.masses.pop();
                    self.index.remove(&site);
                    if moved != site {
                        self.index.insert(moved, slot);
                    }
                } else {
                    self.masses[slot as usize].1 = value;
                }
            }
            None => {
                if value > 0.0 {
                    self.index.insert(site, self.masses.len() as u32);
                    self.masses.push((site, value));
                    self.sum_sq += value * value;
                }
            }
        }
    }

    /// Apply one kernel draw at an occupied site. Deterministic given its
    /// arguments; the random layer reduces to choosing `(site, atom)`.
    pub fn apply_update(&mut self, z: Site, atom: &KernelAtom, atom_index: usize) -> EventRecord {
        let slot = *self.index.get(&z).expect("update site must be occupied");
        let mz = self.mass_at_slot(slot);
        let old_total = self.total;

        if atom.vector.is_empty() {
            // Zero draw: the site's mass is annihilated. Recompute the total
            // exactly so that extinction is the literal emptying of the
            // support, not a rounding artifact.
            self.set_mass(z, 0.0);
            let new_total: f64 = self.masses.iter().map(|&(_, v)| v).sum();
            self.total = new_total;
            self.sum_sq = self.masses.iter().map(|&(_, v)| v * v).sum();
            let ratio = new_total / old_total;
            self.log_mass += if new_total == 0.0 {
                f64::NEG_INFINITY
            } else {
                ratio.ln()
            };
            self.events += 1;
            self.events_since_resum += 1;
            return EventRecord {
                time: self.time,
                site: z,
                atom_index,
                mass_ratio: if new_total == 0.0 { 0.0 } else { ratio },
            };
        }

        // Ship mass along the atom's support; the origin offset overwrites.
        let origin_factor = atom.vector.get(Site::ORIGIN);
        for (offset, w) in atom.vector.iter() {
            if offset.is_origin() {
                continue;
            }
            let target = z + offset;
            let old = match self.index.get(&target) {
                Some(&s) => self.mass_at_slot(s),
                None => 0.0,
            };
            self.set_mass(target, old + w * mz);
        }
        self.set_mass(z, origin_factor * mz);

        let new_total = old_total + (atom.total_mass - 1.0) * mz;
        let ratio = new_total / old_total;
        self.total = new_total;
        self.log_mass += ratio.ln();
        self.events += 1;
        self.events_since_resum += 1;

        if let Some(eps) = self.prune_threshold {
            self.prune_touched(z, atom, eps);
        }
        // Cancellation guard plus periodic drift control.
        if self.events_since_resum >= RESUM_INTERVAL
            || new_total < 0.5 * old_total
            || !(SCALE_BAND.0..SCALE_BAND.1).contains(&new_total)
        {
            self.resum();
        }
        EventRecord {
            time: self.time,
            site: z,
            atom_index,
            mass_ratio: ratio,
        }
    }

    fn prune_touched(&mut self, z: Site, atom: &KernelAtom, eps: f64) {
        let cutoff = eps * self.total;
        let mut doomed: Vec<Site> = Vec::new();
        for (offset, _) in atom.vector.iter() {
            let target = z + offset;
            if let Some(&s) = self.index.get(&target)
                && self.mass_at_slot(s) < cutoff
            {
                doomed.push(target);
            }
        }
        if let Some(&s) = self.index.get(&z)
            && self.mass_at_slot(s) < cutoff
        {
            doomed.push(z);
        }
        for site in doomed {
            if let Some(&s) = self.index.get(&site) {
                let v = self.mass_at_slot(s);
                self.total -= v;
                self.set_mass(site, 0.0);
            }
        }
    }

    /// Exact re-summation of the tracked aggregates, with rescaling when the
    /// carried sum has drifted far from 1.
    fn resum(&mut self) {
        self.events_since_resum = 0;
        let exact: f64 = self.masses.iter().map(|&(_, v)| v).sum();
        if exact == 0.0 {
            self.masses.clear();
            self.index.clear();
            self.total = 0.0;
            self.sum_sq = 0.0;
            return;
        }
        if !(0.5..2.0).contains(&exact) {
            for entry in &mut self.masses {
                entry.1 /= exact;
            }
            if let Some(eps) = self.prune_threshold {
                let doomed: Vec<Site> = self
                    .masses
                    .iter()
                    .filter(|&&(_, v)| v < eps)
                    .map(|&(s, _)| s)
                    .collect();
                for site in doomed {
                    self.set_mass(site, 0.0);
                }
            }
            self.total = self.masses.iter().map(|&(_, v)| v).sum();
        } else {
            self.total = exact;
        }
        self.sum_sq = self.masses.iter().map(|&(_, v)| v * v).sum();
    }

    /// Advance by one random event: exponential holding time at the aggregate
    /// rate, uniform active site, kernel draw.
    pub fn step(
        &mut self,
        dist: &KernelDistribution,
        rng: &mut Rng,
    ) -> Result<EventRecord, EngineError> {
        if self.is_extinct() {
            return Err(EngineError::ExtinctState);
        }
        let rate = self.masses.len() as f64;
        let dt = rng.exponential(rate);
        self.time += dt;
        let z = self.masses[rng.index(self.masses.len())].0;
        let atom_index = dist.sample_index(rng);
        Ok(self.apply_update(z, &dist.atoms()[atom_index], atom_index))
    }
}

/// Density maximum and replica overlap from raw masses, normalized by their
/// exact sum. The pair always satisfies `rho_star^2 <= overlap <= rho_star`:
/// the squared maximum is one of the summed terms, and the upper bound is an
/// algebraic identity of probability vectors, so the computed overlap is
/// clamped into the (at most one ulp wide) violating gap rounding can open.
pub(crate) fn density_stats(masses: &[(Site, f64)]) -> (f64, f64) {
    if masses.is_empty() {
        return (0.0, 0.0);
    }
    let total: f64 = masses.iter().map(|&(_, v)| v).sum();
    let mut max_q = 0.0f64;
    let mut sum_q2 = 0.0f64;
    for &(_, v) in masses {
        let q = v / total;
        max_q = max_q.max(q);
        sum_q2 += q * q;
    }
    let clamped = sum_q2.clamp(max_q * max_q, max_q);
    debug_assert!((clamped - sum_q2).abs() <= 1e-12 * sum_q2.max(1e-300));
    (max_q, clamped)
}

/// Shared trajectory loop over primal and dual processes.
pub(crate) trait Process {
    fn time(&self) -> f64;
    fn set_time(&mut self, t: f64);
    fn is_extinct(&self) -> bool;
    fn events(&self) -> u64;
    fn occupied_sites(&self) -> usize;
    fn current_log_mass(&self) -> f64;
    /// Aggregate event rate at this instant.
    fn rate(&self) -> f64;
    /// Current replica overlap.
    fn current_overlap(&self) -> f64;
    fn apply_random_event(&mut self, dist: &KernelDistribution, rng: &mut Rng) -> EventRecord;
    fn observables_now(&self, t: f64, k_norm: f64, integrated: f64) -> Observables;
}

impl Process for Configuration {
    fn time(&self) -> f64 {
        self.time
    }
    fn set_time(&mut self, t: f64) {
        self.time = t;
    }
    fn is_extinct(&self) -> bool {
        self.is_extinct()
    }
    fn events(&self) -> u64 {
        self.events
    }
    fn occupied_sites(&self) -> usize {
        self.masses.len()
    }
    fn current_log_mass(&self) -> f64 {
        self.log_mass
    }
    fn rate(&self) -> f64 {
        self.masses.len() as f64
    }
    fn current_overlap(&self) -> f64 {
        self.overlap()
    }
    fn apply_random_event(&mut self, dist: &KernelDistribution, rng: &mut Rng) -> EventRecord {
        let z = self.masses[rng.index(self.masses.len())].0;
        let atom_index = dist.sample_index(rng);
        self.apply_update(z, &dist.atoms()[atom_index], atom_index)
    }
    fn observables_now(&self, t: f64, k_norm: f64, integrated: f64) -> Observables {
        self.observables_at(t, k_norm, integrated)
    }
}

pub(crate) fn run_process<P: Process>(
    mut proc: P,
    dist: &KernelDistribution,
    horizon: Horizon,
    sample_times: &[f64],
    seed: u64,
    prune_threshold: Option<f64>,
) -> TrajectoryRecord {
    debug_assert!(sample_times.windows(2).all(|w| w[0] <= w[1]));
    let mut rng = Rng::from_seed(seed);
    let k_norm = dist.mean_total_mass();
    let mut rows: Vec<Observables> = Vec::with_capacity(sample_times.len());
    let mut integrated = 0.0f64; // int_0^cursor R_s ds
    let mut cursor = 0.0f64;
    let mut next_sample = 0usize;

    let stop = loop {
        if proc.is_extinct() {
            break StopReason::Extinct;
        }
        if proc.events() >= horizon.max_events {
            break StopReason::MaxEvents;
        }
        let overlap_now = proc.current_overlap();
        let dt = rng.exponential(proc.rate());
        let t_next = proc.time() + dt;
        let t_reach = t_next.min(horizon.t_max);
        // Emit every sample in (cursor, t_reach]; the configuration is
        // constant there, so the overlap integral advances linearly.
        while next_sample < sample_times.len() && sample_times[next_sample] <= t_reach {
            let s = sample_times[next_sample];
            integrated += overlap_now * (s - cursor);
            cursor = s;
            rows.push(proc.observables_now(s, k_norm, integrated));
            next_sample += 1;
        }
        if t_next > horizon.t_max {
            integrated += overlap_now * (horizon.t_max - cursor);
            cursor = horizon.t_max;
            proc.set_time(horizon.t_max);
            break StopReason::Horizon;
        }
        integrated += overlap_now * (t_next - cursor);
        cursor = t_next;
        proc.set_time(t_next);
        proc.apply_random_event(dist, &mut rng);
    };

    // Remaining samples: after extinction the overlap is zero by the
    // occupancy indicator; after an event-cap stop the configuration is
    // frozen and its overlap keeps accruing.
    let overlap_tail = match stop {
        StopReason::Extinct => 0.0,
        _ => proc.current_overlap(),
    };
    while next_sample < sample_times.len() {
        let s = sample_times[next_sample];
        integrated += overlap_tail * (s - cursor);
        cursor = s;
        rows.push(proc.observables_now(s, k_norm, integrated));
        next_sample += 1;
    }

    let survived = !proc.is_extinct();
    TrajectoryRecord {
        final_state: FinalSummary {
            time: proc.time(),
            active_sites: proc.occupied_sites(),
            log_mass: proc.current_log_mass(),
            events: proc.events(),
            stop,
        },
        rows,
        survived,
        seed,
        truncated: stop == StopReason::MaxEvents,
        prune_threshold,
    }
}

/// Simulate one forward trajectory from a single particle at the origin.
pub fn run(
    dist: &KernelDistribution,
    horizon: Horizon,
    sample_times: &[f64],
    seed: u64,
    prune_threshold: Option<f64>,
) -> TrajectoryRecord {
    let config = Configuration::single_at_origin(dist.dim()).with_prune_threshold(prune_threshold);
    run_process(config, dist, horizon, sample_times, seed, prune_threshold)
}

/// Simulate one dual (transposed-update) trajectory from a single particle
/// at the origin.
pub fn run_dual(
    dist: &KernelDistribution,
    horizon: Horizon,
    sample_times: &[f64],
    seed: u64,
) -> TrajectoryRecord {
    let config = DualConfiguration::single_at_origin(dist.dim(), dist.support_radius());
    run_process(config, dist, horizon, sample_times, seed, None)
}
