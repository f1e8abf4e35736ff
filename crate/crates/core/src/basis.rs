//! Computational basis restricted to a fixed number of excitations.
//!
//! Sites are labeled `1..=L` in every public signature; bit `n - 1` of a
//! [`Configuration`] mask stores site `n`. Labels are reduced cyclically, so
//! site `n + L` is site `n`.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Largest chain handled by the dense sector builders.
pub const MAX_SITES: usize = 24;

/// Occupation pattern of an `L`-site chain; a set bit is an up spin (excitation).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    bits: u64,
    sites: usize,
}

impl Configuration {
    pub fn from_bits(bits: u64, sites: usize) -> Result<Self> {
        check_sites(sites)?;
        if sites < 64 && bits >> sites != 0 {
            return Err(Error::domain(format!(
                "bitmask {bits:#b} has bits beyond site {sites}"
            )));
        }
        Ok(Self { bits, sites })
    }

    /// Builds `φ(n1, n2, ...)` from 1-based site labels.
    pub fn from_sites(labels: &[i64], sites: usize) -> Result<Self> {
        check_sites(sites)?;
        let mut bits = 0u64;
        for &label in labels {
            let bit = 1u64 << reduce_label(label, sites);
            if bits & bit != 0 {
                return Err(Error::domain(format!(
                    "site {label} listed twice (mod {sites})"
                )));
            }
            bits |= bit;
        }
        Ok(Self { bits, sites })
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn num_sites(&self) -> usize {
        self.sites
    }

    pub fn excitations(&self) -> usize {
        self.bits.count_ones() as usize
    }

    /// Whether 1-based `site` is excited.
    pub fn is_excited(&self, site: usize) -> bool {
        (self.bits >> reduce_label(site as i64, self.sites)) & 1 == 1
    }

    /// Excited sites, 1-based, ascending.
    pub fn excited_sites(&self) -> Vec<usize> {
        (0..self.sites)
            .filter(|&i| (self.bits >> i) & 1 == 1)
            .map(|i| i + 1)
            .collect()
    }

    /// Number of anti-aligned nearest-neighbor bonds. The wrap bond `(L, 1)`
    /// is included when `periodic`.
    pub fn anti_aligned_bonds(&self, periodic: bool) -> usize {
        let l = self.sites;
        let mask = self.full_mask();
        let rotated = ((self.bits >> 1) | (self.bits << (l - 1))) & mask;
        let mut diff = (self.bits ^ rotated) & mask;
        if !periodic {
            // bit l-1 of the xor compares site L with site 1
            diff &= !(1u64 << (l - 1));
        }
        diff.count_ones() as usize
    }

    /// Configurations reached by moving one excitation to an empty nearest
    /// neighbor.
    pub fn hops(&self, periodic: bool) -> Vec<Configuration> {
        let l = self.sites;
        let bonds = if periodic { l } else { l - 1 };
        let mut out = Vec::new();
        for i in 0..bonds {
            let j = (i + 1) % l;
            if i == j {
                continue;
            }
            let (bi, bj) = ((self.bits >> i) & 1, (self.bits >> j) & 1);
            if bi != bj {
                let flipped = self.bits ^ (1u64 << i) ^ (1u64 << j);
                let c = Configuration {
                    bits: flipped,
                    sites: l,
                };
                // L = 2 periodic: both bonds join the same pair
                if !out.contains(&c) {
                    out.push(c);
                }
            }
        }
        out
    }

    fn full_mask(&self) -> u64 {
        if self.sites == 64 {
            u64::MAX
        } else {
            (1u64 << self.sites) - 1
        }
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sites: Vec<String> = self.excited_sites().iter().map(|s| s.to_string()).collect();
        write!(f, "φ({})", sites.join(","))
    }
}

/// Ordered set of configurations with a fixed excitation number.
///
/// The full sector is ordered by ascending bitmask. A basis may also be an
/// ordered subset of a sector (defect blocks, effective models).
#[derive(Clone, Debug)]
pub struct SectorBasis {
    sites: usize,
    excitations: usize,
    states: Vec<Configuration>,
    index: HashMap<u64, usize>,
}

impl PartialEq for SectorBasis {
    fn eq(&self, other: &Self) -> bool {
        self.sites == other.sites
            && self.excitations == other.excitations
            && self.states == other.states
    }
}

impl SectorBasis {
    /// All `binomial(L, N)` configurations with `N` excitations.
    pub fn enumerate(sites: usize, excitations: usize) -> Result<Self> {
        if sites < 2 {
            return Err(Error::domain(format!("need at least 2 sites, got {sites}")));
        }
        check_sites(sites)?;
        if excitations > sites {
            return Err(Error::domain(format!(
                "excitation number {excitations} exceeds site count {sites}"
            )));
        }
        let states = fixed_weight_masks(sites, excitations)
            .map(|bits| Configuration { bits, sites })
            .collect();
        Ok(Self::from_sorted(sites, excitations, states))
    }

    /// A sub-basis from explicit configurations, kept in the given order.
    pub fn from_configurations(configs: Vec<Configuration>) -> Result<Self> {
        let first = configs
            .first()
            .ok_or_else(|| Error::domain("empty configuration list"))?;
        let (sites, excitations) = (first.sites, first.excitations());
        for c in &configs {
            if c.sites != sites || c.excitations() != excitations {
                return Err(Error::domain(format!(
                    "{c} does not belong to the ({sites} sites, {excitations} excitations) sector"
                )));
            }
        }
        let basis = Self::from_sorted(sites, excitations, configs);
        if basis.index.len() != basis.states.len() {
            return Err(Error::domain("duplicate configurations in basis"));
        }
        Ok(basis)
    }

    fn from_sorted(sites: usize, excitations: usize, states: Vec<Configuration>) -> Self {
        let index = states.iter().enumerate().map(|(i, c)| (c.bits, i)).collect();
        Self {
            sites,
            excitations,
            states,
            index,
        }
    }

    pub fn num_sites(&self) -> usize {
        self.sites
    }

    pub fn excitations(&self) -> usize {
        self.excitations
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Configuration] {
        &self.states
    }

    pub fn get(&self, i: usize) -> Option<Configuration> {
        self.states.get(i).copied()
    }

    pub fn index_of(&self, config: &Configuration) -> Option<usize> {
        if config.sites != self.sites {
            return None;
        }
        self.index.get(&config.bits).copied()
    }

    /// Index of `φ(labels...)`, or a domain error when it is not in the basis.
    pub fn index_of_sites(&self, labels: &[i64]) -> Result<usize> {
        let c = Configuration::from_sites(labels, self.sites)?;
        self.index_of(&c)
            .ok_or_else(|| Error::domain(format!("{c} is not in this basis")))
    }
}

/// Masks of `sites` bits with exactly `weight` ones, ascending.
fn fixed_weight_masks(sites: usize, weight: usize) -> impl Iterator<Item = u64> {
    let limit = 1u64 << sites;
    let first = if weight == 0 { 0 } else { (1u64 << weight) - 1 };
    let mut next = Some(first);
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == 0 {
            None
        } else {
            // Gosper's hack
            let c = cur & cur.wrapping_neg();
            let r = cur + c;
            let n = (((r ^ cur) >> 2) / c) | r;
            (n < limit).then_some(n)
        };
        Some(cur)
    })
}

fn reduce_label(label: i64, sites: usize) -> u32 {
    (label - 1).rem_euclid(sites as i64) as u32
}

fn check_sites(sites: usize) -> Result<()> {
    if sites == 0 || sites > MAX_SITES {
        return Err(Error::domain(format!(
            "site count {sites} outside 1..={MAX_SITES}"
        )));
    }
    Ok(())
}
