//! Sites of the integer lattice and sparse nonnegative fields over them.
//!
//! A [`Site`] is a point of `Z^d`. Coordinates are stored inline in a fixed
//! array of length [`MAX_DIM`] with unused trailing entries zero, so sites are
//! `Copy` and hash quickly; the model dimension `d` travels separately with
//! the kernel or field that owns the sites. Raising `MAX_DIM` is a one-line
//! change.
//!
//! A [`MassField`] is a finitely supported map `Site -> (0, inf)`. Exact zeros
//! are never stored, which keeps supports minimal and makes "is this site
//! occupied" a plain containment test.

use rustc_hash::FxHashMap;
use std::ops::{Add, Neg, Sub};

/// Maximum supported lattice dimension.
pub const MAX_DIM: usize = 8;

/// A point of the integer lattice `Z^d`, `d <= MAX_DIM`.
#[derive(Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Site([i32; MAX_DIM]);

impl Site {
    /// The origin.
    pub const ORIGIN: Site = Site([0; MAX_DIM]);

    /// Build a site from explicit coordinates.
    ///
    /// Panics if more than `MAX_DIM` coordinates are given.
    pub fn new(coords: &[i32]) -> Site {
        assert!(
            coords.len() <= MAX_DIM,
            "site has {} coordinates but MAX_DIM = {MAX_DIM}",
            coords.len()
        );
        let mut c = [0i32; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Site(c)
    }

    /// Unit vector along axis `axis` (0-based), scaled by `sign`.
    pub fn unit(axis: usize, sign: i32) -> Site {
        assert!(axis < MAX_DIM);
        let mut c = [0i32; MAX_DIM];
        c[axis] = sign;
        Site(c)
    }

    /// Coordinate along `axis`.
    #[inline]
    pub fn coord(&self, axis: usize) -> i32 {
        self.0[axis]
    }

    /// The first `d` coordinates.
    pub fn coords(&self, d: usize) -> &[i32] {
        &self.0[..d]
    }

    /// The l1 norm `|x| = sum_i |x_i|`.
    #[inline]
    pub fn l1_norm(&self) -> i64 {
        self.0.iter().map(|&c| (c as i64).abs()).sum()
    }

    /// True if every coordinate is zero.
    #[inline]
    pub fn is_origin(&self) -> bool {
        self.0 == [0; MAX_DIM]
    }
}

impl Add for Site {
    type Output = Site;
    #[inline]
    fn add(self, rhs: Site) -> Site {
        let mut c = self.0;
        for (v, r) in c.iter_mut().zip(rhs.0) {
            *v += r;
        }
        Site(c)
    }
}

impl Sub for Site {
    type Output = Site;
    #[inline]
    fn sub(self, rhs: Site) -> Site {
        let mut c = self.0;
        for (v, r) in c.iter_mut().zip(rhs.0) {
            *v -= r;
        }
        Site(c)
    }
}

impl Neg for Site {
    type Output = Site;
    #[inline]
    fn neg(self) -> Site {
        let mut c = self.0;
        for v in &mut c {
            *v = -*v;
        }
        Site(c)
    }
}

/// A finitely supported field `Z^d -> (0, inf)`.
///
/// Stored entries are strictly positive; inserting a zero removes the site.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MassField {
    entries: FxHashMap<Site, f64>,
}

impl MassField {
    pub fn new() -> MassField {
        MassField {
            entries: FxHashMap::default(),
        }
    }

    /// The field `delta_0` (unit mass at the origin).
    pub fn delta_origin() -> MassField {
        let mut f = MassField::new();
        f.set(Site::ORIGIN, 1.0);
        f
    }

    pub fn from_entries(entries: &[(Site, f64)]) -> MassField {
        let mut f = MassField::new();
        for &(s, v) in entries {
            f.set(s, v);
        }
        f
    }

    /// Value at `site`, zero off the support.
    #[inline]
    pub fn get(&self, site: Site) -> f64 {
        self.entries.get(&site).copied().unwrap_or(0.0)
    }

    /// Set the value at `site`; a zero (or negative rounded to zero) removes it.
    pub fn set(&mut self, site: Site, value: f64) {
        assert!(
            value >= 0.0 && value.is_finite(),
            "mass values must be finite and nonnegative, got {value}"
        );
        if value == 0.0 {
            self.entries.remove(&site);
        } else {
            self.entries.insert(site, value);
        }
    }

    /// Add `value` to the entry at `site`.
    pub fn add_assign(&mut self, site: Site, value: f64) {
        let v = self.get(site) + value;
        self.set(site, if v > 0.0 { v } else { 0.0 });
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of occupied sites.
    #[inline]
    pub fn support_size(&self) -> usize {
        self.entries.len()
    }

    /// Total mass `|f| = sum_x f(x)`.
    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Largest entry, or zero for the empty field.
    pub fn max_value(&self) -> f64 {
        self.entries.values().fold(0.0, |a, &b| a.max(b))
    }

    /// Largest l1 norm over the support (the field's range).
    pub fn support_radius(&self) -> i64 {
        self.entries.keys().map(|s| s.l1_norm()).max().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Site, f64)> + '_ {
        self.entries.iter().map(|(&s, &v)| (s, v))
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        self.entries.keys().copied()
    }

    /// Entries in lexicographic site order (for reproducible summation and output).
    pub fn sorted_entries(&self) -> Vec<(Site, f64)> {
        let mut v: Vec<(Site, f64)> = self.iter().collect();
        v.sort_by_key(|&(s, _)| s);
        v
    }

    /// Scale every entry by `factor > 0`.
    pub fn scale(&self, factor: f64) -> MassField {
        assert!(factor > 0.0);
        let mut out = MassField::new();
        for (s, v) in self.iter() {
            out.set(s, v * factor);
        }
        out
    }

    /// The reflected field `f(-x)`.
    pub fn reflect(&self) -> MassField {
        let mut out = MassField::new();
        for (s, v) in self.iter() {
            out.set(-s, v);
        }
        out
    }

    /// Sum of squared entries.
    pub fn sum_of_squares(&self) -> f64 {
        self.entries.values().map(|v| v * v).sum()
    }

    /// l2 inner product `<f, g> = sum_x f(x) g(x)`.
    pub fn inner(&self, other: &MassField) -> f64 {
        // Iterate over the smaller support.
        let (small, big) = if self.support_size() <= other.support_size() {
            (self, other)
        } else {
            (other, self)
        };
        small.iter().map(|(s, v)| v * big.get(s)).sum()
    }

    /// Discrete convolution `(f * g)(x) = sum_y f(y) g(x - y)`.
    pub fn convolve(&self, other: &MassField) -> MassField {
        let mut out = MassField::new();
        for (a, va) in self.iter() {
            for (b, vb) in other.iter() {
                out.add_assign(a + b, va * vb);
            }
        }
        out
    }

    /// Entrywise maximum absolute difference against `other`.
    pub fn max_abs_diff(&self, other: &MassField) -> f64 {
        let mut worst: f64 = 0.0;
        for (s, v) in self.iter() {
            worst = worst.max((v - other.get(s)).abs());
        }
        for (s, v) in other.iter() {
            worst = worst.max((v - self.get(s)).abs());
        }
        worst
    }
}

/// A signed finitely supported field. Used where differences of mass fields
/// arise (convolution identities, residuals); plain arithmetic container.
#[derive(Clone, Debug, Default)]
pub struct SignedField {
    entries: FxHashMap<Site, f64>,
}

impl SignedField {
    pub fn new() -> SignedField {
        SignedField {
            entries: FxHashMap::default(),
        }
    }

    pub fn from_mass(f: &MassField) -> SignedField {
        let mut out = SignedField::new();
        for (s, v) in f.iter() {
            out.add_assign(s, v);
        }
        out
    }

    #[inline]
    pub fn get(&self, site: Site) -> f64 {
        self.entries.get(&site).copied().unwrap_or(0.0)
    }

    pub fn add_assign(&mut self, site: Site, value: f64) {
        *self.entries.entry(site).or_insert(0.0) += value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (Site, f64)> + '_ {
        self.entries.iter().map(|(&s, &v)| (s, v))
    }

    pub fn convolve(&self, other: &SignedField) -> SignedField {
        let mut out = SignedField::new();
        for (a, va) in self.iter() {
            for (b, vb) in other.iter() {
                out.add_assign(a + b, va * vb);
            }
        }
        out
    }

    pub fn inner(&self, other: &SignedField) -> f64 {
        let (small, big) = if self.entries.len() <= other.entries.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.iter().map(|(s, v)| v * big.get(s)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.values().fold(0.0f64, |a, &b| a.max(b.abs()))
    }
}
