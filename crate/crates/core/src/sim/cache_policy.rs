//! Bounded content stores and the replacement policies acting on them.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    /// Popularity-aware caching.
    Pac,
    Lru,
    Fifo,
    Random,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [PolicyKind::Pac, PolicyKind::Lru, PolicyKind::Fifo, PolicyKind::Random];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Pac => "pac",
            PolicyKind::Lru => "lru",
            PolicyKind::Fifo => "fifo",
            PolicyKind::Random => "random",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown caching policy `{0}` (expected pac, lru, fifo or random)")]
pub struct UnknownPolicy(pub String);

impl FromStr for PolicyKind {
    type Err = UnknownPolicy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownPolicy(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub content: usize,
    pub size_mbit: f64,
    /// Store clock at insertion; doubles as an identity for expiry events.
    pub inserted: u64,
    pub last_used: u64,
}

/// A cache bounded both in total size and in item count.
#[derive(Debug, Clone)]
pub struct ContentStore {
    capacity_mbit: f64,
    max_items: usize,
    entries: Vec<Entry>,
    clock: u64,
}

impl ContentStore {
    pub fn new(capacity_mbit: f64, max_items: usize) -> Self {
        assert!(capacity_mbit >= 0.0, "negative capacity");
        Self {
            capacity_mbit,
            max_items,
            entries: Vec::with_capacity(max_items.min(64)),
            clock: 0,
        }
    }

    /// A store of `n` slots that ignores content sizes.
    pub fn slots(n: usize) -> Self {
        Self::new(f64::INFINITY, n)
    }

    pub fn capacity_mbit(&self) -> f64 {
        self.capacity_mbit
    }

    pub fn max_items(&self) -> usize {
        self.max_items
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn used_mbit(&self) -> f64 {
        self.entries.iter().map(|e| e.size_mbit).sum()
    }

    pub fn get(&self, content: usize) -> Option<&Entry> {
        self.entries.iter().find(|e| e.content == content)
    }

    pub fn contains(&self, content: usize) -> bool {
        self.get(content).is_some()
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    /// Records a request served from the store.
    pub fn touch(&mut self, content: usize) -> bool {
        let now = self.tick();
        match self.entries.iter_mut().find(|e| e.content == content) {
            Some(e) => {
                e.last_used = now;
                true
            }
            None => false,
        }
    }

    pub fn remove(&mut self, content: usize) -> Option<Entry> {
        let i = self.entries.iter().position(|e| e.content == content)?;
        Some(self.entries.remove(i))
    }

    /// Removes `content` only if it is still the copy inserted at `stamp`.
    pub fn expire(&mut self, content: usize, stamp: u64) -> bool {
        match self.entries.iter().position(|e| e.content == content && e.inserted == stamp) {
            Some(i) => {
                self.entries.remove(i);
                true
            }
            None => false,
        }
    }

    fn fits_after(&self, removed: &[usize], size_mbit: f64) -> bool {
        let kept = self.entries.iter().enumerate().filter(|(i, _)| !removed.contains(i));
        let (count, used) = kept.fold((0, 0.0), |(n, u), (_, e)| (n + 1, u + e.size_mbit));
        count < self.max_items && used + size_mbit <= self.capacity_mbit
    }

    fn insert_unchecked(&mut self, content: usize, size_mbit: f64) -> u64 {
        let now = self.tick();
        self.entries.push(Entry {
            content,
            size_mbit,
            inserted: now,
            last_used: now,
        });
        now
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Admission {
    Inserted { stamp: u64, evicted: Vec<usize> },
    /// Store unchanged.
    Rejected,
    /// The content was already held; its use was recorded.
    AlreadyCached,
}

/// Offers `content` of size `size_mbit` to `store` under `policy`.
///
/// Contents that cannot fit even in an empty store are rejected outright.
/// PAC evicts at most one resident, picked with probability proportional to
/// the inverse of its popularity, and only if the new content then fits.
/// The other policies evict until the new content fits.
pub fn apply_cache_policy<R: Rng + ?Sized>(
    policy: PolicyKind,
    store: &mut ContentStore,
    content: usize,
    size_mbit: f64,
    popularity: &[f64],
    rng: &mut R,
) -> Admission {
    if store.touch(content) {
        return Admission::AlreadyCached;
    }
    if store.max_items == 0 || size_mbit > store.capacity_mbit {
        return Admission::Rejected;
    }
    if store.fits_after(&[], size_mbit) {
        let stamp = store.insert_unchecked(content, size_mbit);
        return Admission::Inserted { stamp, evicted: Vec::new() };
    }
    let mut victims = Vec::new();
    if policy == PolicyKind::Pac {
        let v = pac_victim(store, popularity, rng);
        if !store.fits_after(&[v], size_mbit) {
            return Admission::Rejected;
        }
        victims.push(v);
    } else {
        while !store.fits_after(&victims, size_mbit) {
            let alive = (0..store.entries.len()).filter(|i| !victims.contains(i));
            let v = match policy {
                PolicyKind::Lru => alive.min_by_key(|&i| store.entries[i].last_used),
                PolicyKind::Fifo => alive.min_by_key(|&i| store.entries[i].inserted),
                _ => {
                    let alive: Vec<usize> = alive.collect();
                    Some(alive[rng.random_range(0..alive.len())])
                }
            }
            .expect("an empty store admits any content that fits its capacity");
            victims.push(v);
        }
    }
    victims.sort_unstable_by(|a, b| b.cmp(a));
    let evicted = victims.iter().map(|&i| store.entries.remove(i).content).collect();
    let stamp = store.insert_unchecked(content, size_mbit);
    Admission::Inserted { stamp, evicted }
}

/// Index of the PAC victim: each resident is evicted with probability
/// proportional to `1 / p`. With two residents `c_i, c_j` this evicts `c_i`
/// with probability `p_j / (p_i + p_j)`.
fn pac_victim<R: Rng + ?Sized>(store: &ContentStore, popularity: &[f64], rng: &mut R) -> usize {
    let entries = &store.entries;
    let unpopular: Vec<usize> = (0..entries.len())
        .filter(|&i| popularity[entries[i].content] <= 0.0)
        .collect();
    if !unpopular.is_empty() {
        return unpopular[rng.random_range(0..unpopular.len())];
    }
    let weights: Vec<f64> = entries.iter().map(|e| 1.0 / popularity[e.content]).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    entries.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn empty_store_accepts_fitting_content() {
        for policy in PolicyKind::ALL {
            let mut s = ContentStore::new(50.0, 2);
            let a = apply_cache_policy(policy, &mut s, 3, 20.0, &[0.25; 4], &mut rng());
            assert!(matches!(a, Admission::Inserted { ref evicted, .. } if evicted.is_empty()));
            assert!(s.contains(3));
        }
    }

    #[test]
    fn oversized_content_leaves_store_untouched() {
        for policy in PolicyKind::ALL {
            let mut s = ContentStore::new(50.0, 2);
            apply_cache_policy(policy, &mut s, 0, 10.0, &[0.5, 0.5], &mut rng());
            let before = s.entries().to_vec();
            let a = apply_cache_policy(policy, &mut s, 1, 60.0, &[0.5, 0.5], &mut rng());
            assert_eq!(a, Admission::Rejected);
            assert_eq!(s.entries(), &before[..]);
        }
    }

    #[test]
    fn pac_evicts_less_popular_two_thirds_of_the_time() {
        let pop = [0.6, 0.3, 0.1];
        let mut r = rng();
        let trials = 60_000;
        let mut evicted_second = 0;
        for _ in 0..trials {
            let mut s = ContentStore::slots(2);
            apply_cache_policy(PolicyKind::Pac, &mut s, 0, 1.0, &pop, &mut r);
            apply_cache_policy(PolicyKind::Pac, &mut s, 1, 1.0, &pop, &mut r);
            match apply_cache_policy(PolicyKind::Pac, &mut s, 2, 1.0, &pop, &mut r) {
                Admission::Inserted { evicted, .. } if evicted == [1] => evicted_second += 1,
                Admission::Inserted { .. } => {}
                other => panic!("unexpected {other:?}"),
            }
        }
        let freq = evicted_second as f64 / trials as f64;
        let se = (2.0 / 9.0 / trials as f64).sqrt();
        assert!((freq - 2.0 / 3.0).abs() < 4.0 * se, "{freq}");
    }

    #[test]
    fn pac_rejects_when_survivor_and_newcomer_overflow() {
        let mut s = ContentStore::new(50.0, 2);
        let pop = [0.5, 0.3, 0.2];
        apply_cache_policy(PolicyKind::Pac, &mut s, 0, 24.0, &pop, &mut rng());
        apply_cache_policy(PolicyKind::Pac, &mut s, 1, 24.0, &pop, &mut rng());
        let a = apply_cache_policy(PolicyKind::Pac, &mut s, 2, 30.0, &pop, &mut rng());
        assert_eq!(a, Admission::Rejected);
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn lru_fifo_and_random_evict_until_fit() {
        let pop = [0.25; 4];
        let mut s = ContentStore::new(50.0, 3);
        for c in 0..3 {
            apply_cache_policy(PolicyKind::Lru, &mut s, c, 15.0, &pop, &mut rng());
        }
        s.touch(0);
        match apply_cache_policy(PolicyKind::Lru, &mut s, 3, 30.0, &pop, &mut rng()) {
            Admission::Inserted { evicted, .. } => assert_eq!(evicted, vec![2, 1]),
            other => panic!("unexpected {other:?}"),
        }
        assert!(s.contains(0));
        assert!(s.used_mbit() <= 50.0);

        let mut s = ContentStore::new(50.0, 3);
        for c in 0..3 {
            apply_cache_policy(PolicyKind::Fifo, &mut s, c, 15.0, &pop, &mut rng());
        }
        s.touch(0);
        match apply_cache_policy(PolicyKind::Fifo, &mut s, 3, 20.0, &pop, &mut rng()) {
            Admission::Inserted { evicted, .. } => assert_eq!(evicted, vec![0]),
            other => panic!("unexpected {other:?}"),
        }

        let mut s = ContentStore::slots(2);
        let mut r = rng();
        for c in 0..4 {
            apply_cache_policy(PolicyKind::Random, &mut s, c, 1.0, &pop, &mut r);
            assert!(s.len() <= 2);
        }
    }

    #[test]
    fn expiry_ignores_stale_stamps() {
        let mut s = ContentStore::slots(1);
        let pop = [0.5, 0.5];
        let Admission::Inserted { stamp, .. } = apply_cache_policy(PolicyKind::Lru, &mut s, 0, 1.0, &pop, &mut rng())
        else {
            panic!()
        };
        apply_cache_policy(PolicyKind::Lru, &mut s, 1, 1.0, &pop, &mut rng());
        apply_cache_policy(PolicyKind::Lru, &mut s, 0, 1.0, &pop, &mut rng());
        assert!(!s.expire(0, stamp));
        assert!(s.contains(0));
    }

    #[test]
    fn policy_names_round_trip() {
        for p in PolicyKind::ALL {
            assert_eq!(p.name().parse::<PolicyKind>().unwrap(), p);
        }
        assert!("mru".parse::<PolicyKind>().is_err());
    }
}
