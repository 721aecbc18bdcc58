//! Event loop of one replication.

use super::cache_policy::{apply_cache_policy, Admission, ContentStore, PolicyKind};
use super::stats::{D2dProbe, SimStats};
use super::topology::Topology;
use crate::ctmc::Family;
use crate::link::{Capacities, BITS_PER_MEGABIT};
use crate::params::SystemParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Exp};
use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

/// Independent random streams of a replication.
mod stream {
    pub const TOPOLOGY: u64 = 0;
    pub const PREWARM: u64 = 1;
    pub const HU: u64 = 2;
    pub const PU: u64 = 3;
    pub const DECISION: u64 = 4;
    pub const TTL: u64 = 5;
    pub const CACHE: u64 = 6;
}

/// The device-cache pre-warm lasts this many mean TTLs or this many
/// requests per device, whichever is shorter.
const PREWARM_TTLS: f64 = 6.0;
const PREWARM_REQUESTS: f64 = 2000.0;

#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    /// Audit occupancy and geometry after every event; panics on violation.
    pub check_invariants: bool,
    /// Replaces the sampled device layout.
    pub topology: Option<Topology>,
    /// Initial device caches, one per device; skips the pre-warm.
    pub device_caches: Option<Vec<ContentStore>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EventKind {
    HuRequest,
    PuArrival,
    PuEnd(u64),
    ServiceEnd(u64),
    Expiry { device: usize, content: usize, stamp: u64 },
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed: BinaryHeap pops the earliest event first
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Sat(usize),
    Ter(usize),
    F1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TerUse {
    Idle,
    Pu(u64),
    Hu(u64),
}

#[derive(Debug, Clone)]
struct Service {
    family: Family,
    content: usize,
    requester: usize,
    holder: Option<usize>,
    size_mbit: f64,
    start: f64,
    /// End of the universal-source leg; equals `start` otherwise.
    relay_end: f64,
    end: f64,
    slot: Slot,
    counted: bool,
}

fn stream_rng(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn pick<R: Rng + ?Sized>(weighted: &[(Family, f64)], rng: &mut R) -> Option<Family> {
    let total: f64 = weighted.iter().map(|w| w.1).sum();
    if !(total > 0.0) {
        return None;
    }
    let mut u = rng.random::<f64>() * total;
    for &(f, w) in weighted.iter().filter(|w| w.1 > 0.0) {
        if u < w {
            return Some(f);
        }
        u -= w;
    }
    weighted.iter().rev().find(|w| w.1 > 0.0).map(|w| w.0)
}

pub(super) struct Engine<'a> {
    params: &'a SystemParams,
    policy: PolicyKind,
    opts: SimOptions,
    caps: Capacities,
    popularity: Vec<f64>,
    contents: WeightedIndex<f64>,
    size: Exp<f64>,
    topo: Topology,
    devices: Vec<ContentStore>,
    /// Devices start from preset caches when set.
    prewarmed: bool,
    sat_cache: ContentStore,
    bs_cache: ContentStore,
    sat: Vec<Option<u64>>,
    ter: Vec<TerUse>,
    f1_pu: Option<u64>,
    d2d_active: Vec<u64>,
    d_max: usize,
    services: BTreeMap<u64, Service>,
    next_id: u64,
    heap: BinaryHeap<Event>,
    seq: u64,
    now: f64,
    warmup_end: f64,
    horizon: f64,
    device_ttl: Exp<f64>,
    rng_hu: ChaCha8Rng,
    rng_pu: ChaCha8Rng,
    rng_decide: ChaCha8Rng,
    rng_ttl: ChaCha8Rng,
    rng_cache: ChaCha8Rng,
    stats: SimStats,
}

impl<'a> Engine<'a> {
    pub(super) fn new(params: &'a SystemParams, policy: PolicyKind, seed: u64, horizon: f64, mut opts: SimOptions) -> Self {
        assert!(horizon > 0.0, "horizon must be positive");
        let topo = opts.topology.take().unwrap_or_else(|| {
            Topology::sample(
                params.hu_density_per_m2,
                params.cell_radius_m,
                params.r_int_m,
                &mut stream_rng(seed, stream::TOPOLOGY),
            )
        });
        let preset = opts.device_caches.take();
        let prewarmed = preset.is_some();
        if let Some(c) = &preset {
            assert_eq!(c.len(), topo.len(), "one initial cache per device");
        }
        let popularity = params.catalog().popularity().to_vec();
        let d_max = params.effective_d_max() as usize;
        // Each device sees 1/n of the request stream, so its TTL is stretched
        // by n to keep the per-device request/expiry balance.
        let device_ttl = Exp::new(1.0 / (params.ttl_mean_sec * topo.len() as f64)).expect("positive TTL");
        let stats = SimStats {
            seed,
            policy: Some(policy),
            window_sec: horizon * (1.0 - params.warmup_fraction),
            devices: topo.len(),
            d2d_probes: vec![
                D2dProbe {
                    attempts: vec![0; params.n_contents],
                    feasible: vec![0; params.n_contents],
                };
                d_max
            ],
            ..Default::default()
        };
        Self {
            params,
            policy,
            opts,
            caps: params.link_budget().capacities(),
            contents: WeightedIndex::new(&popularity).expect("positive popularity"),
            popularity,
            size: Exp::new(1.0 / params.mean_content_size_mbit).expect("positive mean size"),
            devices: preset
                .unwrap_or_else(|| vec![ContentStore::new(params.cache_dev_mbit, params.local_max_contents); topo.len()]),
            prewarmed,
            topo,
            sat_cache: ContentStore::slots(params.sat_slots()),
            bs_cache: ContentStore::slots(params.bs_slots()),
            sat: vec![None; params.n_freq_sat as usize],
            ter: vec![TerUse::Idle; params.n_freq_ter as usize - 1],
            f1_pu: None,
            d2d_active: Vec::new(),
            d_max,
            services: BTreeMap::new(),
            next_id: 0,
            heap: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            warmup_end: horizon * params.warmup_fraction,
            horizon,
            device_ttl,
            rng_hu: stream_rng(seed, stream::HU),
            rng_pu: stream_rng(seed, stream::PU),
            rng_decide: stream_rng(seed, stream::DECISION),
            rng_ttl: stream_rng(seed, stream::TTL),
            rng_cache: stream_rng(seed, stream::CACHE),
            stats,
        }
    }

    fn schedule(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.heap.push(Event {
            time,
            seq: self.seq,
            kind,
        });
    }

    fn fresh_id(&mut self) -> u64 {
        self.next_id += 1;
        self.next_id
    }

    fn in_window(&self) -> bool {
        self.now >= self.warmup_end
    }

    /// Runs each device cache on its own full request stream for a few TTLs
    /// so the replication starts near the caches' steady state.
    fn prewarm(&mut self, seed: u64) {
        let p = self.params;
        if self.prewarmed || p.lambda_hu <= 0.0 {
            self.schedule_expiries();
            return;
        }
        let mut rng = stream_rng(seed, stream::PREWARM);
        let requests = Exp::new(p.lambda_hu).expect("positive rate");
        let ttl = Exp::new(1.0 / p.ttl_mean_sec).expect("positive TTL");
        let span = (PREWARM_TTLS * p.ttl_mean_sec).min(PREWARM_REQUESTS / p.lambda_hu);
        for d in 0..self.devices.len() {
            let cache = &mut self.devices[d];
            let mut expiries: Vec<(usize, u64, f64)> = Vec::new();
            let mut next_req = requests.sample(&mut rng);
            loop {
                let next_exp = expiries
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1 .2.total_cmp(&b.1 .2))
                    .map(|(i, e)| (i, e.2));
                if let Some((i, t)) = next_exp.filter(|&(_, t)| t < next_req) {
                    if t > span {
                        break;
                    }
                    let (c, stamp, _) = expiries.swap_remove(i);
                    cache.expire(c, stamp);
                    continue;
                }
                if next_req > span {
                    break;
                }
                let content = self.contents.sample(&mut rng);
                let size = self.size.sample(&mut rng);
                if let Admission::Inserted { stamp, evicted } =
                    apply_cache_policy(self.policy, cache, content, size, &self.popularity, &mut rng)
                {
                    expiries.retain(|e| !evicted.contains(&e.0));
                    expiries.push((content, stamp, next_req + ttl.sample(&mut rng)));
                }
                next_req += requests.sample(&mut rng);
            }
        }
        self.schedule_expiries();
    }

    fn schedule_expiries(&mut self) {
        for d in 0..self.devices.len() {
            let entries: Vec<_> = self.devices[d].entries().to_vec();
            for e in entries {
                let t = self.device_ttl.sample(&mut self.rng_ttl);
                self.schedule(
                    t,
                    EventKind::Expiry {
                        device: d,
                        content: e.content,
                        stamp: e.inserted,
                    },
                );
            }
        }
    }

    pub(super) fn run(mut self) -> SimStats {
        self.prewarm(self.stats.seed);
        if self.params.lambda_hu > 0.0 {
            let t = Exp::new(self.params.lambda_hu).unwrap().sample(&mut self.rng_hu);
            self.schedule(t, EventKind::HuRequest);
        }
        if self.params.lambda_pu > 0.0 {
            let t = Exp::new(self.params.lambda_pu).unwrap().sample(&mut self.rng_pu);
            self.schedule(t, EventKind::PuArrival);
        }
        while let Some(ev) = self.heap.pop() {
            if ev.time > self.horizon {
                break;
            }
            self.now = ev.time;
            match ev.kind {
                EventKind::HuRequest => self.on_hu_request(),
                EventKind::PuArrival => self.on_pu_arrival(),
                EventKind::PuEnd(id) => self.on_pu_end(id),
                EventKind::ServiceEnd(id) => self.on_service_end(id),
                EventKind::Expiry { device, content, stamp } => {
                    self.devices[device].expire(content, stamp);
                }
            }
            if self.opts.check_invariants {
                self.audit();
            }
        }
        self.now = self.horizon;
        let open: Vec<Service> = std::mem::take(&mut self.services).into_values().collect();
        for s in &open {
            self.charge(s, self.horizon);
            if s.counted {
                self.stats.unfinished += 1;
            }
        }
        self.stats
    }

    /// Adds the energy `s` spent inside the observation window up to `until`.
    fn charge(&mut self, s: &Service, until: f64) {
        let lo = self.warmup_end;
        let hi = self.horizon.min(until);
        let overlap = |a: f64, b: f64| (b.min(hi) - a.max(lo)).max(0.0);
        let p = self.params;
        let e = &mut self.stats.energy_j;
        match s.family {
            Family::Bs => e.bs += p.p_bs_ch_w * overlap(s.start, s.end),
            Family::BsUniversal => {
                e.bs_u += p.p_bs_ch_w / p.theta_bs * overlap(s.start, s.relay_end)
                    + p.p_bs_ch_w * overlap(s.relay_end, s.end)
            }
            Family::D2d => e.d2d += p.p_dev_tx_w * overlap(s.start, s.end),
            Family::Sat | Family::SatUniversal => {}
        }
    }

    /// Nearest in-range holder of `content` whose transmission keeps every
    /// active D2D pair interference free, if the requester itself is clear.
    fn find_holder(&self, requester: usize, content: usize) -> Option<usize> {
        let active: Vec<&Service> = self.d2d_active.iter().map(|id| &self.services[id]).collect();
        let receiver_clear = active
            .iter()
            .all(|s| self.topo.clear_of(requester, s.holder.expect("D2D service has a holder")));
        if !receiver_clear {
            return None;
        }
        self.topo.neighbors(requester).iter().copied().find(|&h| {
            self.devices[h].contains(content) && active.iter().all(|s| self.topo.clear_of(h, s.requester))
        })
    }

    fn on_hu_request(&mut self) {
        let p = self.params;
        let gap = Exp::new(p.lambda_hu).unwrap().sample(&mut self.rng_hu);
        self.schedule(self.now + gap, EventKind::HuRequest);
        let content = self.contents.sample(&mut self.rng_hu);
        let requester = self.rng_hu.random_range(0..self.devices.len());
        let size = self.size.sample(&mut self.rng_hu);
        let bits = size * BITS_PER_MEGABIT;
        let counted = self.in_window();
        if counted {
            self.stats.requests += 1;
        }
        if self.devices[requester].touch(content) {
            if counted {
                self.stats.local_hits += 1;
                self.stats.local_bits += bits;
                self.stats.energy_j.local += p.p_dev_tx_w / p.theta_loc * bits / self.caps.hu_d2d;
            }
            return;
        }

        let idle_sat = self.sat.iter().filter(|s| s.is_none()).count() as f64;
        let idle_ter = self.ter.iter().filter(|s| **s == TerUse::Idle).count() as f64;
        let holder = if p.weight_dev > 0.0 && self.f1_pu.is_none() && self.d2d_active.len() < self.d_max {
            let h = self.find_holder(requester, content);
            if counted {
                let probe = &mut self.stats.d2d_probes[self.d2d_active.len()];
                probe.attempts[content] += 1;
                probe.feasible[content] += h.is_some() as u64;
            }
            h
        } else {
            None
        };
        let sat_has = self.sat_cache.contains(content);
        let bs_has = self.bs_cache.contains(content);
        let cached = [
            (Family::Sat, if sat_has { p.weight_sat * idle_sat } else { 0.0 }),
            (Family::Bs, if bs_has { p.weight_bs * idle_ter } else { 0.0 }),
            (Family::D2d, if holder.is_some() { p.weight_dev } else { 0.0 }),
        ];
        let universal = [
            (Family::SatUniversal, p.weight_sat * idle_sat),
            (Family::BsUniversal, p.weight_bs * idle_ter),
        ];
        let choice = pick(&cached, &mut self.rng_decide).or_else(|| {
            if p.universal_source {
                pick(&universal, &mut self.rng_decide)
            } else {
                None
            }
        });
        let Some(family) = choice else {
            if counted {
                if p.universal_source || sat_has || bs_has || holder.is_some() {
                    self.stats.blocked_capacity += 1;
                } else {
                    self.stats.blocked_unavailable += 1;
                }
            }
            return;
        };

        let c = &self.caps;
        let (relay, tx) = match family {
            Family::Sat => (0.0, bits / c.hu_sat),
            Family::SatUniversal => (bits / c.sat_u, bits / c.hu_sat),
            Family::Bs => (0.0, bits / c.hu_bs),
            Family::BsUniversal => (bits / c.bs_u, bits / c.hu_bs),
            Family::D2d => (0.0, bits / c.hu_d2d),
        };
        let id = self.fresh_id();
        let slot = match family {
            Family::Sat | Family::SatUniversal => {
                let idle: Vec<usize> = (0..self.sat.len()).filter(|&i| self.sat[i].is_none()).collect();
                let i = idle[self.rng_decide.random_range(0..idle.len())];
                self.sat[i] = Some(id);
                Slot::Sat(i)
            }
            Family::Bs | Family::BsUniversal => {
                let idle: Vec<usize> = (0..self.ter.len()).filter(|&i| self.ter[i] == TerUse::Idle).collect();
                let i = idle[self.rng_decide.random_range(0..idle.len())];
                self.ter[i] = TerUse::Hu(id);
                Slot::Ter(i)
            }
            Family::D2d => {
                self.d2d_active.push(id);
                Slot::F1
            }
        };
        match family {
            Family::Sat => {
                self.sat_cache.touch(content);
            }
            Family::Bs => {
                self.bs_cache.touch(content);
            }
            Family::D2d => {
                self.devices[holder.expect("D2D chosen only with a holder")].touch(content);
            }
            _ => {}
        }
        if counted {
            *self.stats.admitted.get_mut(family) += 1;
        }
        let s = Service {
            family,
            content,
            requester,
            holder,
            size_mbit: size,
            start: self.now,
            relay_end: self.now + relay,
            end: self.now + relay + tx,
            slot,
            counted,
        };
        self.schedule(s.end, EventKind::ServiceEnd(id));
        self.services.insert(id, s);
    }

    fn release(&mut self, id: u64, s: &Service) {
        match s.slot {
            Slot::Sat(i) => self.sat[i] = None,
            Slot::Ter(i) => self.ter[i] = TerUse::Idle,
            Slot::F1 => self.d2d_active.retain(|&x| x != id),
        }
    }

    fn on_service_end(&mut self, id: u64) {
        let Some(s) = self.services.remove(&id) else {
            return;
        };
        self.release(id, &s);
        self.charge(&s, s.end);
        if s.end >= self.warmup_end {
            *self.stats.served_bits.get_mut(s.family) += s.size_mbit * BITS_PER_MEGABIT;
        }
        if s.counted {
            *self.stats.served.get_mut(s.family) += 1;
        }
        let admission = apply_cache_policy(
            self.policy,
            &mut self.devices[s.requester],
            s.content,
            s.size_mbit,
            &self.popularity,
            &mut self.rng_cache,
        );
        if let Admission::Inserted { stamp, .. } = admission {
            let t = self.now + self.device_ttl.sample(&mut self.rng_ttl);
            self.schedule(
                t,
                EventKind::Expiry {
                    device: s.requester,
                    content: s.content,
                    stamp,
                },
            );
        }
        let relay = match s.family {
            Family::SatUniversal => Some(&mut self.sat_cache),
            Family::BsUniversal => Some(&mut self.bs_cache),
            _ => None,
        };
        if let Some(cache) = relay {
            apply_cache_policy(
                self.policy,
                cache,
                s.content,
                s.size_mbit,
                &self.popularity,
                &mut self.rng_cache,
            );
        }
    }

    fn drop_service(&mut self, id: u64) {
        let s = self.services.remove(&id).expect("dropping a live service");
        self.release(id, &s);
        self.charge(&s, self.now);
        if s.counted {
            *self.stats.dropped.get_mut(s.family) += 1;
        }
    }

    fn on_pu_arrival(&mut self) {
        let p = self.params;
        let gap = Exp::new(p.lambda_pu).unwrap().sample(&mut self.rng_pu);
        self.schedule(self.now + gap, EventKind::PuArrival);
        let freq = self.rng_pu.random_range(0..p.n_freq_ter as usize);
        let duration = self.size.sample(&mut self.rng_pu) * BITS_PER_MEGABIT / self.caps.pu_ter;
        let counted = self.in_window();
        if counted {
            self.stats.pu_arrivals += 1;
        }
        if freq == 0 {
            if self.f1_pu.is_some() {
                if counted {
                    self.stats.pu_lost += 1;
                }
                return;
            }
            let id = self.fresh_id();
            self.f1_pu = Some(id);
            for sid in self.d2d_active.clone() {
                self.drop_service(sid);
            }
            self.schedule(self.now + duration, EventKind::PuEnd(id));
            return;
        }
        let open: Vec<usize> = (0..self.ter.len())
            .filter(|&i| !matches!(self.ter[i], TerUse::Pu(_)))
            .collect();
        if open.is_empty() {
            if counted {
                self.stats.pu_lost += 1;
            }
            return;
        }
        let target = open[self.rng_decide.random_range(0..open.len())];
        if let TerUse::Hu(sid) = self.ter[target] {
            let idle: Vec<usize> = (0..self.ter.len()).filter(|&i| self.ter[i] == TerUse::Idle).collect();
            if idle.is_empty() {
                self.drop_service(sid);
            } else {
                let j = idle[self.rng_decide.random_range(0..idle.len())];
                self.ter[j] = TerUse::Hu(sid);
                self.services.get_mut(&sid).expect("live service").slot = Slot::Ter(j);
                if counted {
                    self.stats.relocations += 1;
                }
            }
        }
        let id = self.fresh_id();
        self.ter[target] = TerUse::Pu(id);
        self.schedule(self.now + duration, EventKind::PuEnd(id));
    }

    fn on_pu_end(&mut self, id: u64) {
        if self.f1_pu == Some(id) {
            self.f1_pu = None;
            return;
        }
        if let Some(slot) = self.ter.iter_mut().find(|s| **s == TerUse::Pu(id)) {
            *slot = TerUse::Idle;
        }
    }

    fn audit(&self) {
        for (&id, s) in &self.services {
            let ok = match s.slot {
                Slot::Sat(i) => self.sat[i] == Some(id),
                Slot::Ter(i) => self.ter[i] == TerUse::Hu(id),
                Slot::F1 => self.d2d_active.contains(&id),
            };
            assert!(ok, "service {id} is not on its recorded slot");
        }
        let busy_sat = self.sat.iter().filter(|s| s.is_some()).count();
        let sat_services = self.services.values().filter(|s| matches!(s.slot, Slot::Sat(_))).count();
        assert_eq!(busy_sat, sat_services, "satellite occupancy mismatch");
        for u in &self.ter {
            if let TerUse::Hu(id) = u {
                assert!(self.services.contains_key(id), "terrestrial frequency held by a finished service");
            }
        }
        assert!(self.d2d_active.len() <= self.d_max, "more D2D operations than D_max");
        assert!(
            self.f1_pu.is_none() || self.d2d_active.is_empty(),
            "D2D active while a PU holds f1"
        );
        for &a in &self.d2d_active {
            for &b in &self.d2d_active {
                if a != b {
                    let (sa, sb) = (&self.services[&a], &self.services[&b]);
                    assert!(
                        self.topo.clear_of(sa.requester, sb.holder.expect("holder")),
                        "D2D receiver within the interference radius of a foreign transmitter"
                    );
                }
            }
        }
        for d in &self.devices {
            assert!(d.len() <= d.max_items() && d.used_mbit() <= d.capacity_mbit() + 1e-9);
        }
    }
}
