//! Exchangeable lineage state: counts of lineages by the number of
//! not-yet-mutated individuals they carry. Size 0 marks a lineage whose
//! individuals have all mutated (it still coalesces, but only carries
//! redundant mutations).
//!
//! Two representations share one draw protocol. Classes of size `<= split`
//! (and the size-0 class) are drawn with the main stream; the aggregated
//! tail is either kept as one count (truncated) or resolved into concrete
//! sizes (full), and any extra draws that resolution needs come from the
//! auxiliary stream. The main stream therefore sees identical calls in both
//! representations.

use std::collections::BTreeMap;

use rand::Rng;

use super::{AlleleSpectrum, TruncatedState};
use crate::numeric::ln_binomial;

/// Below this many draws a uniform subset is taken ball by ball from the
/// urn; above it, class by class with hypergeometric variates.
const URN_DRAW_LIMIT: u64 = 32;

pub(crate) enum Tail<'a> {
    Aggregate(u64),
    Resolved(&'a [(u64, u64)]),
}

impl Tail<'_> {
    fn total(&self) -> u64 {
        match self {
            Tail::Aggregate(c) => *c,
            Tail::Resolved(entries) => entries.iter().map(|e| e.1).sum(),
        }
    }

    fn len(&self) -> usize {
        match self {
            Tail::Aggregate(_) => 1,
            Tail::Resolved(entries) => entries.len(),
        }
    }

    fn count(&self, i: usize) -> u64 {
        match self {
            Tail::Aggregate(c) => *c,
            Tail::Resolved(entries) => entries[i].1,
        }
    }
}

/// Hypergeometric variate: successes among `draws` taken without
/// replacement from `population` items of which `successes` are marked.
/// Inversion that walks outwards from the mode, so the cost is of the order
/// of the standard deviation and the set-up is O(1) in the population.
pub(crate) fn hypergeometric<R: Rng>(rng: &mut R, population: u64, successes: u64, draws: u64) -> u64 {
    if draws == 0 || successes == 0 {
        return 0;
    }
    if successes == population {
        return draws;
    }
    if draws == population {
        return successes;
    }
    let (n_all, k, n) = (population, successes, draws);
    let lo = (n + k).saturating_sub(n_all);
    let hi = k.min(n);
    let mode = ((((n + 1) as f64) * ((k + 1) as f64) / ((n_all + 2) as f64)) as u64).clamp(lo, hi);
    let ln_p = ln_binomial(k, mode) + ln_binomial(n_all - k, n - mode) - ln_binomial(n_all, n);
    let (kf, nf, rest) = (k as f64, n as f64, (n_all - k) as f64);
    let mut u: f64 = rng.random();
    let p_mode = ln_p.exp();
    u -= p_mode;
    if u <= 0.0 {
        return mode;
    }
    let (mut down, mut p_down) = (mode, p_mode);
    let (mut up, mut p_up) = (mode, p_mode);
    loop {
        let can_down = down > lo;
        let can_up = up < hi;
        if !can_down && !can_up {
            // Rounding left a sliver of mass unassigned.
            return mode;
        }
        if can_up {
            let x = up as f64;
            p_up *= (kf - x) * (nf - x) / ((x + 1.0) * (rest - nf + x + 1.0));
            up += 1;
            u -= p_up;
            if u <= 0.0 {
                return up;
            }
        }
        if can_down {
            let x = down as f64;
            p_down *= x * (rest - nf + x) / ((kf - x + 1.0) * (nf - x + 1.0));
            down -= 1;
            u -= p_down;
            if u <= 0.0 {
                return down;
            }
        }
    }
}

/// Draws a uniform `j`-subset of the `core` classes plus the tail. Returns
/// the number of participants per core class and per tail entry.
pub(crate) fn draw_participants<R: Rng>(
    core: &[u64],
    tail: Tail<'_>,
    j: u64,
    main: &mut R,
    aux: &mut R,
) -> (Vec<u64>, Vec<u64>) {
    let core_total: u64 = core.iter().sum();
    let tail_total = tail.total();
    let b = core_total + tail_total;
    debug_assert!(j <= b);
    let complement = 2 * j > b;
    let draws = if complement { b - j } else { j };

    let mut core_pick = vec![0u64; core.len()];
    let mut tail_pick = vec![0u64; tail.len()];

    if draws <= URN_DRAW_LIMIT {
        let mut remaining = b;
        for _ in 0..draws {
            let mut r = main.random_range(0..remaining);
            remaining -= 1;
            let mut placed = false;
            for (c, &count) in core.iter().enumerate() {
                let left = count - core_pick[c];
                if r < left {
                    core_pick[c] += 1;
                    placed = true;
                    break;
                }
                r -= left;
            }
            if !placed {
                // The offset into the tail selects a concrete size when the
                // tail is resolved; no extra randomness.
                for (i, pick) in tail_pick.iter_mut().enumerate() {
                    let left = tail.count(i) - *pick;
                    if r < left {
                        *pick += 1;
                        break;
                    }
                    r -= left;
                }
            }
        }
    } else {
        let mut population = b;
        let mut left = draws;
        for (c, &count) in core.iter().enumerate() {
            let x = hypergeometric(main, population, count, left);
            core_pick[c] = x;
            population -= count;
            left -= x;
        }
        debug_assert_eq!(population, tail_total);
        match tail {
            Tail::Aggregate(_) => tail_pick[0] = left,
            Tail::Resolved(entries) => {
                for (i, &(_, count)) in entries.iter().enumerate() {
                    let x = hypergeometric(aux, population, count, left);
                    tail_pick[i] = x;
                    population -= count;
                    left -= x;
                }
            }
        }
    }

    if complement {
        for (p, &c) in core_pick.iter_mut().zip(core) {
            *p = c - *p;
        }
        for (i, p) in tail_pick.iter_mut().enumerate() {
            *p = tail.count(i) - *p;
        }
    }
    (core_pick, tail_pick)
}

/// Outcome of a mutation landing on a lineage.
pub(crate) enum Mutation {
    /// The lineage had already fully mutated.
    Redundant,
    /// An active block froze.
    Froze,
}

pub(crate) trait LineageStore {
    fn lineages(&self) -> u64;
    fn active(&self) -> u64;
    /// Mutation on the lineage at position `r` (ordered by size, size-0 first).
    fn mutate(&mut self, r: u64) -> Mutation;
    /// Merges a uniform `j`-subset of lineages; returns the number of active
    /// participants.
    fn merge<R: Rng>(&mut self, j: u64, main: &mut R, aux: &mut R) -> u64;
    fn truncated_view(&self, out: &mut TruncatedState);
    fn spectrum(&self) -> AlleleSpectrum;
}

/// `(dead, X_1..X_d, Y_{d+1})` plus frozen tallies `Z_1..Z_d` and the
/// frozen tail. Every event is `O(d)`.
#[derive(Debug, Clone)]
pub(crate) struct TruncatedStore {
    d: usize,
    classes: Vec<u64>,
    frozen: Vec<u64>,
    frozen_tail: u64,
    lineages: u64,
    active: u64,
}

impl TruncatedStore {
    pub(crate) fn new(n: u64, d: usize) -> Self {
        debug_assert!(d >= 1);
        let mut classes = vec![0u64; d + 2];
        classes[1] = n;
        Self { d, classes, frozen: vec![0; d + 1], frozen_tail: 0, lineages: n, active: n }
    }
}

impl LineageStore for TruncatedStore {
    fn lineages(&self) -> u64 {
        self.lineages
    }

    fn active(&self) -> u64 {
        self.active
    }

    fn mutate(&mut self, mut r: u64) -> Mutation {
        let mut class = self.classes.len() - 1;
        for (c, &count) in self.classes.iter().enumerate() {
            if r < count {
                class = c;
                break;
            }
            r -= count;
        }
        if class == 0 {
            return Mutation::Redundant;
        }
        self.classes[class] -= 1;
        self.classes[0] += 1;
        self.active -= 1;
        if class <= self.d {
            self.frozen[class] += 1;
        } else {
            self.frozen_tail += 1;
        }
        Mutation::Froze
    }

    fn merge<R: Rng>(&mut self, j: u64, main: &mut R, aux: &mut R) -> u64 {
        let d = self.d;
        let (core, tail) =
            draw_participants(&self.classes[..=d], Tail::Aggregate(self.classes[d + 1]), j, main, aux);
        let tail_part = tail[0];
        let mut size = 0u64;
        let mut active = tail_part;
        for (c, &p) in core.iter().enumerate() {
            self.classes[c] -= p;
            size += c as u64 * p;
            if c > 0 {
                active += p;
            }
        }
        self.classes[d + 1] -= tail_part;
        let target = if active == 0 {
            0
        } else if tail_part > 0 || size > d as u64 {
            d + 1
        } else {
            size as usize
        };
        self.classes[target] += 1;
        self.lineages -= j - 1;
        if active > 0 {
            self.active -= active - 1;
        }
        active
    }

    fn truncated_view(&self, out: &mut TruncatedState) {
        out.x.clear();
        out.x.extend_from_slice(&self.classes[1..=self.d]);
        out.y = self.classes[self.d + 1];
        out.z.clear();
        out.z.extend_from_slice(&self.frozen[1..]);
        out.z_tail = self.frozen_tail;
    }

    fn spectrum(&self) -> AlleleSpectrum {
        let counts = (1..=self.d as u64).map(|k| (k, self.frozen[k as usize])).filter(|e| e.1 > 0).collect();
        AlleleSpectrum::with_tail(counts, self.d as u64, self.frozen_tail)
    }
}

/// Every block size tracked exactly. `split` fixes which sizes are drawn
/// from the main stream; with `split = d` the main stream is consumed
/// exactly as by [`TruncatedStore`] with cutoff `d`.
#[derive(Debug, Clone)]
pub(crate) struct FullStore {
    split: u64,
    view_d: usize,
    dead: u64,
    blocks: BTreeMap<u64, u64>,
    frozen: BTreeMap<u64, u64>,
    lineages: u64,
    active: u64,
}

impl FullStore {
    pub(crate) fn new(n: u64, split: u64, view_d: usize) -> Self {
        Self {
            split,
            view_d,
            dead: 0,
            blocks: BTreeMap::from([(1, n)]),
            frozen: BTreeMap::new(),
            lineages: n,
            active: n,
        }
    }

    /// Individuals in active blocks plus individuals in frozen blocks.
    #[cfg(test)]
    pub(crate) fn total_mass(&self) -> u64 {
        let a: u64 = self.blocks.iter().map(|(s, c)| s * c).sum();
        let f: u64 = self.frozen.iter().map(|(s, c)| s * c).sum();
        a + f
    }

    fn add_block(&mut self, size: u64) {
        *self.blocks.entry(size).or_insert(0) += 1;
    }

    fn remove_blocks(&mut self, size: u64, count: u64) {
        if count == 0 {
            return;
        }
        let e = self.blocks.get_mut(&size).expect("block class present");
        *e -= count;
        if *e == 0 {
            self.blocks.remove(&size);
        }
    }
}

impl LineageStore for FullStore {
    fn lineages(&self) -> u64 {
        self.lineages
    }

    fn active(&self) -> u64 {
        self.active
    }

    fn mutate(&mut self, mut r: u64) -> Mutation {
        if r < self.dead {
            return Mutation::Redundant;
        }
        r -= self.dead;
        let mut hit = None;
        for (&s, &c) in &self.blocks {
            if r < c {
                hit = Some(s);
                break;
            }
            r -= c;
        }
        let size = hit.expect("mutation index within lineage count");
        self.remove_blocks(size, 1);
        self.dead += 1;
        self.active -= 1;
        *self.frozen.entry(size).or_insert(0) += 1;
        Mutation::Froze
    }

    fn merge<R: Rng>(&mut self, j: u64, main: &mut R, aux: &mut R) -> u64 {
        let mut core_sizes = vec![0u64];
        let mut core_counts = vec![self.dead];
        let mut tail_entries = Vec::new();
        for (&s, &c) in &self.blocks {
            if s <= self.split {
                core_sizes.push(s);
                core_counts.push(c);
            } else {
                tail_entries.push((s, c));
            }
        }
        let (core, tail) = draw_participants(&core_counts, Tail::Resolved(&tail_entries), j, main, aux);
        let mut size = 0u64;
        let mut active = 0u64;
        self.dead -= core[0];
        for (i, &p) in core.iter().enumerate().skip(1) {
            self.remove_blocks(core_sizes[i], p);
            size += core_sizes[i] * p;
            active += p;
        }
        for (&(s, _), &p) in tail_entries.iter().zip(&tail) {
            self.remove_blocks(s, p);
            size += s * p;
            active += p;
        }
        if active == 0 {
            self.dead += 1;
        } else {
            self.add_block(size);
            self.active -= active - 1;
        }
        self.lineages -= j - 1;
        active
    }

    fn truncated_view(&self, out: &mut TruncatedState) {
        let d = self.view_d as u64;
        out.x.clear();
        out.x.extend((1..=d).map(|k| self.blocks.get(&k).copied().unwrap_or(0)));
        out.y = self.blocks.range(d + 1..).map(|e| e.1).sum();
        out.z.clear();
        out.z.extend((1..=d).map(|k| self.frozen.get(&k).copied().unwrap_or(0)));
        out.z_tail = self.frozen.range(d + 1..).map(|e| e.1).sum();
    }

    fn spectrum(&self) -> AlleleSpectrum {
        AlleleSpectrum::exact(self.frozen.clone())
    }
}
