//! Dual (transposed-update) process.
//!
//! When the clock at `z` rings with draw `xi`, only the coordinate at `z`
//! changes: it becomes `sum_y xi_{y-z} zeta_y`. Unlike the forward process,
//! an update at an *empty* site can create mass there (it gathers from
//! occupied neighbors), so restricting clocks to occupied sites is wrong.
//! The correct finite event set is the halo: every site within l1 distance
//! `r_K` of an occupied site. Sites outside the halo gather only zeros, so
//! their updates are identities and their clocks can be dropped exactly.
//!
//! The halo is maintained by reference counts: occupying a site increments
//! the count of every site in its `r_K`-ball, vacating decrements. Uniform
//! picking over the halo uses the same dense-vector-plus-index layout as the
//! forward engine.

use super::{EventRecord, Observables, Process};
use crate::kernel::{KernelAtom, KernelDistribution};
use crate::lattice::Site;
use crate::rng::Rng;
use rustc_hash::FxHashMap;

const RESUM_INTERVAL: u64 = 4096;
const SCALE_BAND: (f64, f64) = (1e-120, 1e120);

/// Dense set with O(1) uniform pick and reference-counted membership.
#[derive(Clone, Debug, Default)]
struct HaloSet {
    members: Vec<Site>,
    slot: FxHashMap<Site, u32>,
    counts: FxHashMap<Site, u32>,
}

impl HaloSet {
    fn len(&self) -> usize {
        self.members.len()
    }

    fn pick(&self, rng: &mut Rng) -> Site {
        self.members[rng.index(self.members.len())]
    }

    fn increment(&mut self, site: Site) {
        let c = self.counts.entry(site).or_insert(0);
        *c += 1;
        if *c == 1 {
            self.slot.insert(site, self.members.len() as u32);
            self.members.push(site);
        }
    }

    fn decrement(&mut self, site: Site) {
        let c = self.counts.get_mut(&site).expect("halo count present");
        *c -= 1;
        if *c == 0 {
            self.counts.remove(&site);
            let s = self.slot.remove(&site).expect("halo slot present") as usize;
            let last = self.members.len() - 1;
            let moved = self.members[last];
            self.members.swap(s, last);
            self.members.pop();
            if moved != site {
                self.slot.insert(moved, s as u32);
            }
        }
    }
}

/// Dual process state in the same scaled form as the forward engine.
#[derive(Clone, Debug)]
pub struct DualConfiguration {
    d: usize,
    time: f64,
    log_mass: f64,
    total: f64,
    sum_sq: f64,
    masses: Vec<(Site, f64)>,
    index: FxHashMap<Site, u32>,
    halo: HaloSet,
    ball: Vec<Site>,
    events: u64,
    events_since_resum: u64,
}

impl DualConfiguration {
    pub fn single_at_origin(d: usize, kernel_radius: i64) -> DualConfiguration {
        let ball = crate::theory::l1_ball(d, kernel_radius.max(0));
        let mut config = DualConfiguration {
            d,
            time: 0.0,
            log_mass: 0.0,
            total: 1.0,
            sum_sq: 1.0,
            masses: Vec::new(),
            index: FxHashMap::default(),
            halo: HaloSet::default(),
            ball,
            events: 0,
            events_since_resum: 0,
        };
        config.occupy(Site::ORIGIN, 1.0);
        config
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

    pub fn event_set_size(&self) -> usize {
        self.halo.len()
    }

    pub fn log_mass(&self) -> f64 {
        self.log_mass
    }

    pub fn mass(&self, site: Site) -> f64 {
        match self.index.get(&site) {
            Some(&i) => self.masses[i as usize].1,
            None => 0.0,
        }
    }

    pub fn density(&self, site: Site) -> f64 {
        self.mass(site) / self.total
    }

    fn occupy(&mut self, site: Site, value: f64) {
        debug_assert!(value > 0.0);
        debug_assert!(!self.index.contains_key(&site));
        self.index.insert(site, self.masses.len() as u32);
        self.masses.push((site, value));
        self.sum_sq += value * value;
        for &o in &self.ball {
            self.halo.increment(site + o);
        }
    }

    fn vacate(&mut self, site: Site) {
        let slot = self.index.remove(&site).expect("site occupied") as usize;
        let value = self.masses[slot].1;
        self.sum_sq -= value * value;
        let last = self.masses.len() - 1;
        let moved = self.masses[last].0;
        self.masses.swap(slot, last);
        self.masses.pop();
        if moved != site {
            self.index.insert(moved, slot as u32);
        }
        for &o in &self.ball {
            self.halo.decrement(site + o);
        }
    }

    fn set_value(&mut self, site: Site, value: f64) {
        match self.index.get(&site).copied() {
            Some(slot) => {
                if value == 0.0 {
                    self.vacate(site);
                } else {
                    let old = self.masses[slot as usize].1;
                    self.sum_sq += value * value - old * old;
                    self.masses[slot as usize].1 = value;
                }
            }
            None => {
                if value > 0.0 {
                    self.occupy(site, value);
                }
            }
        }
    }

    /// Apply a transposed update at `z`: the coordinate there becomes the
    /// kernel-weighted gather of its neighborhood.
    pub fn apply_update(&mut self, z: Site, atom: &KernelAtom, atom_index: usize) -> EventRecord {
        let old_total = self.total;
        let old_z = self.mass(z);
        let mut new_z = 0.0;
        for (offset, w) in atom.vector.iter() {
            new_z += w * self.mass(z + offset);
        }
        self.set_value(z, new_z);
        let new_total = old_total + (new_z - old_z);
        self.events += 1;
        self.events_since_resum += 1;

        if self.masses.is_empty() {
            self.total = 0.0;
            self.sum_sq = 0.0;
            self.log_mass = f64::NEG_INFINITY;
            return EventRecord {
                time: self.time,
                site: z,
                atom_index,
                mass_ratio: 0.0,
            };
        }
        let mut total = new_total;
        // Gathers can cancel most of the total; resum exactly when they do,
        // in the current units, before the ratio is taken.
        let needs_resum = self.events_since_resum >= RESUM_INTERVAL || total < 0.5 * old_total;
        if needs_resum {
            self.events_since_resum = 0;
            total = self.masses.iter().map(|&(_, v)| v).sum();
            self.sum_sq = self.masses.iter().map(|&(_, v)| v * v).sum();
        }
        let ratio = total / old_total;
        self.log_mass += ratio.ln();
        // Rescale only after the ratio is recorded; density is unchanged.
        if !(SCALE_BAND.0..SCALE_BAND.1).contains(&total) {
            for entry in &mut self.masses {
                entry.1 /= total;
            }
            total = self.masses.iter().map(|&(_, v)| v).sum();
            self.sum_sq = self.masses.iter().map(|&(_, v)| v * v).sum();
        }
        self.total = total;
        EventRecord {
            time: self.time,
            site: z,
            atom_index,
            mass_ratio: ratio,
        }
    }
}

impl Process for DualConfiguration {
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
        self.halo.len() as f64
    }
    fn current_overlap(&self) -> f64 {
        if self.is_extinct() {
            0.0
        } else {
            self.sum_sq / (self.total * self.total)
        }
    }
    fn apply_random_event(&mut self, dist: &KernelDistribution, rng: &mut Rng) -> EventRecord {
        let z = self.halo.pick(rng);
        let atom_index = dist.sample_index(rng);
        self.apply_update(z, &dist.atoms()[atom_index], atom_index)
    }
    fn observables_now(&self, t: f64, k_norm: f64, integrated: f64) -> Observables {
        let (rho_star, overlap) = super::density_stats(&self.masses);
        Observables {
            time: t,
            rho_star,
            overlap,
            active_sites: self.masses.len(),
            log_mass: self.log_mass,
            log_normalized_mass: self.log_mass - (k_norm - 1.0) * t,
            integrated_overlap: integrated,
        }
    }
}
