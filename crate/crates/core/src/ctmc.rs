//! Resource-allocation chain over satellite, terrestrial and D2D channel
//! occupancy. Builds the generator from PU activity, per-content HU arrivals
//! and HU departures, and records the HU arrival rates by destination family
//! for the metrics.

use crate::cache::AvailabilityProfile;
use crate::content::ContentCatalog;
use crate::link::ServiceRates;
use crate::solver::RateMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("mode weights must lie in [0,1] and sum to 1, got ({0}, {1}, {2})")]
    InvalidWeights(f64, f64, f64),
    #[error("channel configuration invalid: {0}")]
    InvalidChannels(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChannelState {
    pub i_hu_sat: u32,
    pub i_hu_sat_u: u32,
    pub i_pu_ter_nf1: u32,
    pub i_hu_bs: u32,
    pub i_hu_bs_u: u32,
    pub i_pu_ter_f1: u32,
    pub i_hu_d_f1: u32,
}

impl ChannelState {
    pub const EMPTY: ChannelState = ChannelState {
        i_hu_sat: 0,
        i_hu_sat_u: 0,
        i_pu_ter_nf1: 0,
        i_hu_bs: 0,
        i_hu_bs_u: 0,
        i_pu_ter_f1: 0,
        i_hu_d_f1: 0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeWeights {
    pub r_sat: f64,
    pub r_bs: f64,
    pub r_dev: f64,
}

impl ModeWeights {
    pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(r_sat: f64, r_bs: f64, r_dev: f64) -> Result<Self, ModelError> {
        let in_range = |w: f64| (0.0..=1.0).contains(&w);
        if !(in_range(r_sat) && in_range(r_bs) && in_range(r_dev))
            || (r_sat + r_bs + r_dev - 1.0).abs() > Self::WEIGHT_SUM_TOLERANCE
        {
            return Err(ModelError::InvalidWeights(r_sat, r_bs, r_dev));
        }
        Ok(Self { r_sat, r_bs, r_dev })
    }

    pub fn equal() -> Self {
        Self {
            r_sat: 1.0 / 3.0,
            r_bs: 1.0 / 3.0,
            r_dev: 1.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct D2DGeometry {
    /// HUs per square meter.
    pub hu_density: f64,
    pub cell_radius: f64,
    pub interference_radius: f64,
    pub d_max: u32,
}

impl D2DGeometry {
    /// Largest admissible D_max for the given frequency counts.
    pub fn d_max_bound(&self, n_freq_sat: u32, n_freq_ter: u32) -> i64 {
        let users = self.hu_density * PI * self.cell_radius * self.cell_radius;
        ((users - n_freq_sat as f64 - (n_freq_ter as f64 - 1.0)) / 2.0).floor() as i64
    }

    /// Expected number of devices within the interference radius, floored.
    pub fn neighbors(&self) -> u32 {
        (self.hu_density * PI * self.interference_radius * self.interference_radius).floor() as u32
    }

    /// Probability a new receiver lies outside every active transmitter's disc.
    pub fn receiver_clearance(&self, active: u32) -> f64 {
        let cell = self.cell_radius * self.cell_radius;
        let blocked = active as f64 * self.interference_radius * self.interference_radius;
        (cell - blocked).max(0.0) / cell
    }

    /// Probability a new transmitter keeps clear of every active receiver.
    pub fn transmitter_clearance(&self, active: u32) -> f64 {
        let cell = self.cell_radius * self.cell_radius;
        let r2 = 2.0 * self.interference_radius;
        let blocked = active as f64 * r2 * r2;
        (cell - blocked).max(0.0) / cell
    }

    /// Probability that at least one neighbor caches a content with local
    /// availability `p_loc`.
    pub fn content_in_range(&self, p_loc: f64) -> f64 {
        1.0 - (1.0 - p_loc).powi(self.neighbors() as i32)
    }

    /// Feasibility-weighted D2D availability of a content with `active`
    /// concurrent D2D operations.
    pub fn p_d2d(&self, active: u32, p_loc: f64) -> f64 {
        if active >= self.d_max {
            return 0.0;
        }
        self.receiver_clearance(active) * self.transmitter_clearance(active) * self.content_in_range(p_loc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub n_freq_sat: u32,
    pub n_freq_ter: u32,
    pub d_max: u32,
    pub lambda_pu: f64,
    pub universal_source: bool,
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_freq_ter < 2 {
            return Err(ModelError::InvalidChannels(
                "at least two terrestrial frequencies are needed".into(),
            ));
        }
        if self.d_max < 1 {
            return Err(ModelError::InvalidChannels("d_max must be at least 1".into()));
        }
        if !(self.lambda_pu >= 0.0 && self.lambda_pu.is_finite()) {
            return Err(ModelError::InvalidChannels("lambda_pu must be nonnegative".into()));
        }
        Ok(())
    }

    fn ter_pool(&self) -> u32 {
        self.n_freq_ter - 1
    }

    pub fn is_valid_state(&self, s: &ChannelState) -> bool {
        s.i_hu_sat + s.i_hu_sat_u <= self.n_freq_sat
            && s.i_pu_ter_nf1 + s.i_hu_bs + s.i_hu_bs_u <= self.ter_pool()
            && s.i_pu_ter_f1 <= 1
            && s.i_hu_d_f1 <= self.d_max
            && !(s.i_pu_ter_f1 == 1 && s.i_hu_d_f1 > 0)
    }
}

/// All valid states in lexicographic order of the seven components.
pub fn enumerate_states(cfg: &ChannelConfig) -> Vec<ChannelState> {
    let mut out = Vec::new();
    let pool = cfg.ter_pool();
    for i_hu_sat in 0..=cfg.n_freq_sat {
        for i_hu_sat_u in 0..=cfg.n_freq_sat - i_hu_sat {
            for i_pu_ter_nf1 in 0..=pool {
                for i_hu_bs in 0..=pool - i_pu_ter_nf1 {
                    for i_hu_bs_u in 0..=pool - i_pu_ter_nf1 - i_hu_bs {
                        for i_pu_ter_f1 in 0..=1 {
                            let d_top = if i_pu_ter_f1 == 1 { 0 } else { cfg.d_max };
                            for i_hu_d_f1 in 0..=d_top {
                                out.push(ChannelState {
                                    i_hu_sat,
                                    i_hu_sat_u,
                                    i_pu_ter_nf1,
                                    i_hu_bs,
                                    i_hu_bs_u,
                                    i_pu_ter_f1,
                                    i_hu_d_f1,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// `(idle_sat, idle_ter_nf1)`. PUs never occupy satellite frequencies.
pub fn idle_counts(s: &ChannelState, cfg: &ChannelConfig) -> (u32, u32) {
    (
        cfg.n_freq_sat - s.i_hu_sat - s.i_hu_sat_u,
        cfg.ter_pool() - s.i_pu_ter_nf1 - s.i_hu_bs - s.i_hu_bs_u,
    )
}

/// Aggregate mode weights `(R_sat, R_bs, R_d2d)`.
pub fn aggregate_weights(s: &ChannelState, w: &ModeWeights, cfg: &ChannelConfig) -> (f64, f64, f64) {
    let (idle_sat, idle_ter) = idle_counts(s, cfg);
    let d2d_open = (s.i_hu_d_f1 > 0 && s.i_hu_d_f1 < cfg.d_max)
        || (s.i_hu_d_f1 == 0 && s.i_pu_ter_f1 == 0);
    (
        w.r_sat * idle_sat as f64,
        w.r_bs * idle_ter as f64,
        if d2d_open { w.r_dev } else { 0.0 },
    )
}

/// HU destination families, in the order of the destination states h1..h5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    SatUniversal,
    BsUniversal,
    Sat,
    Bs,
    D2d,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::SatUniversal,
        Family::BsUniversal,
        Family::Sat,
        Family::Bs,
        Family::D2d,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::SatUniversal => "sat_u",
            Family::BsUniversal => "bs_u",
            Family::Sat => "sat",
            Family::Bs => "bs",
            Family::D2d => "d2d",
        }
    }

    fn arrive(self, s: &ChannelState) -> ChannelState {
        let mut d = *s;
        match self {
            Family::SatUniversal => d.i_hu_sat_u += 1,
            Family::BsUniversal => d.i_hu_bs_u += 1,
            Family::Sat => d.i_hu_sat += 1,
            Family::Bs => d.i_hu_bs += 1,
            Family::D2d => d.i_hu_d_f1 += 1,
        }
        d
    }

    fn occupancy(self, s: &ChannelState) -> u32 {
        match self {
            Family::SatUniversal => s.i_hu_sat_u,
            Family::BsUniversal => s.i_hu_bs_u,
            Family::Sat => s.i_hu_sat,
            Family::Bs => s.i_hu_bs,
            Family::D2d => s.i_hu_d_f1,
        }
    }

    fn depart(self, s: &ChannelState) -> ChannelState {
        let mut d = *s;
        match self {
            Family::SatUniversal => d.i_hu_sat_u -= 1,
            Family::BsUniversal => d.i_hu_bs_u -= 1,
            Family::Sat => d.i_hu_sat -= 1,
            Family::Bs => d.i_hu_bs -= 1,
            Family::D2d => d.i_hu_d_f1 -= 1,
        }
        d
    }

    pub fn service_rate(self, r: &ServiceRates) -> f64 {
        match self {
            Family::SatUniversal => r.mu_hu_sat_u,
            Family::BsUniversal => r.mu_hu_bs_u,
            Family::Sat => r.mu_hu_sat,
            Family::Bs => r.mu_hu_bs,
            Family::D2d => r.mu_hu_d2d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransitionLabel {
    /// PU takes a non-f1 frequency without displacing an HU for good.
    PuArrival,
    /// PU preempts a direct BS service.
    PuPreemptBs,
    /// PU preempts a universal BS service.
    PuPreemptBsUniversal,
    PuArrivalF1,
    /// PU takes f1 and drops every D2D operation.
    PuFlushD2d,
    PuDeparture,
    PuDepartureF1,
    HuArrival(Family),
    HuDeparture(Family),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledTransition {
    pub label: TransitionLabel,
    pub to: ChannelState,
    pub rate: f64,
}

/// Outgoing transitions caused by PU arrivals and departures.
pub fn pu_transitions(s: &ChannelState, cfg: &ChannelConfig, mu_pu: f64) -> Vec<LabeledTransition> {
    let mut out = Vec::new();
    let n_ter = cfg.n_freq_ter as f64;
    let pool = cfg.ter_pool();
    let (_, idle_ter) = idle_counts(s, cfg);
    let nf1_rate = (n_ter - 1.0) * cfg.lambda_pu / n_ter;
    let f1_rate = cfg.lambda_pu / n_ter;
    let mut push = |label, to: ChannelState, rate: f64| {
        if rate > 0.0 {
            out.push(LabeledTransition { label, to, rate });
        }
    };
    if idle_ter > 0 {
        let mut to = *s;
        to.i_pu_ter_nf1 += 1;
        push(TransitionLabel::PuArrival, to, nf1_rate);
    }
    let non_pu = pool - s.i_pu_ter_nf1;
    if idle_ter == 0 && non_pu > 0 {
        let mut to = *s;
        to.i_pu_ter_nf1 += 1;
        if s.i_hu_bs > 0 {
            let mut t = to;
            t.i_hu_bs -= 1;
            push(
                TransitionLabel::PuPreemptBs,
                t,
                nf1_rate * s.i_hu_bs as f64 / non_pu as f64,
            );
        }
        if s.i_hu_bs_u > 0 {
            let mut t = to;
            t.i_hu_bs_u -= 1;
            push(
                TransitionLabel::PuPreemptBsUniversal,
                t,
                nf1_rate * s.i_hu_bs_u as f64 / non_pu as f64,
            );
        }
    }
    if s.i_pu_ter_f1 == 0 && s.i_hu_d_f1 == 0 {
        let mut to = *s;
        to.i_pu_ter_f1 = 1;
        push(TransitionLabel::PuArrivalF1, to, f1_rate);
    }
    if s.i_hu_d_f1 > 0 {
        let mut to = *s;
        to.i_pu_ter_f1 = 1;
        to.i_hu_d_f1 = 0;
        push(TransitionLabel::PuFlushD2d, to, f1_rate);
    }
    if s.i_pu_ter_nf1 > 0 {
        let mut to = *s;
        to.i_pu_ter_nf1 -= 1;
        push(TransitionLabel::PuDeparture, to, s.i_pu_ter_nf1 as f64 * mu_pu);
    }
    if s.i_pu_ter_f1 > 0 {
        let mut to = *s;
        to.i_pu_ter_f1 = 0;
        push(TransitionLabel::PuDepartureF1, to, mu_pu);
    }
    out
}

/// Per-content arrival rates of the twenty availability-case rows, ordered
/// 1-a..1-d, 2-a..2-d, 3-a..3-d, 4-a..4-d, 5-a..5-d. Row group `k`
/// feeds family `Family::ALL[k]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalRows(pub [f64; 20]);

impl ArrivalRows {
    pub fn family(&self, f: Family) -> f64 {
        let k = f.index() * 4;
        self.0[k..k + 4].iter().sum()
    }

    pub fn families(&self) -> [f64; 5] {
        Family::ALL.map(|f| self.family(f))
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

fn frac(x: f64, y: f64) -> f64 {
    if y > 0.0 {
        x / y
    } else {
        0.0
    }
}

fn ind(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Everything the HU arrival rows need about one content.
#[derive(Debug, Clone, Copy)]
pub struct ContentView {
    pub lambda: f64,
    pub p_loc: f64,
    pub p_sat: f64,
    pub p_bs: f64,
    pub p_d2d: f64,
}

/// Arrival rows for one content in state `s`.
pub fn arrival_rows(
    s: &ChannelState,
    c: &ContentView,
    w: &ModeWeights,
    cfg: &ChannelConfig,
) -> ArrivalRows {
    let (idle_s, idle_t) = idle_counts(s, cfg);
    let (rs, rb, rd) = aggregate_weights(s, w, cfg);
    let a = c.lambda * (1.0 - c.p_loc);
    let (ps, pb, pd) = (c.p_sat, c.p_bs, c.p_d2d);
    let (qs, qb, qd) = (1.0 - ps, 1.0 - pb, 1.0 - pd);
    let sat_ok = idle_s > 0 && w.r_sat > 0.0;
    let bs_ok = idle_t > 0 && w.r_bs > 0.0;
    let d2d_closed = w.r_dev == 0.0 || s.i_hu_d_f1 == cfg.d_max || s.i_pu_ter_f1 == 1;
    let d2d_gate = ind(w.r_dev > 0.0)
        * (ind(s.i_hu_d_f1 > 0 && s.i_hu_d_f1 < cfg.d_max)
            + ind(s.i_hu_d_f1 == 0 && s.i_pu_ter_f1 == 0));
    let u = ind(cfg.universal_source);
    ArrivalRows([
        // universal via satellite
        u * a * qs * qb * qd * frac(rs, rs + rb),
        u * a * qs * pb * qd * ind((idle_t == 0 || w.r_bs == 0.0) && sat_ok),
        u * a * qs * qb * pd * frac(rs, rs + rb) * ind(d2d_closed),
        u * a * qs * pb * pd * ind(rb + rd == 0.0 && sat_ok),
        // universal via BS
        u * a * qs * qb * qd * frac(rb, rs + rb),
        u * a * ps * qb * qd * ind((idle_s == 0 || w.r_sat == 0.0) && bs_ok),
        u * a * qs * qb * pd * frac(rb, rs + rb) * ind(d2d_closed),
        u * a * ps * qb * pd * ind(rs + rd == 0.0 && bs_ok),
        // satellite cache
        a * ps * qb * qd * ind(sat_ok),
        a * ps * pb * qd * frac(rs, rs + rb),
        a * ps * qb * pd * frac(rs, rs + rd),
        a * ps * pb * pd * frac(rs, rs + rb + rd),
        // BS cache
        a * qs * pb * qd * ind(bs_ok),
        a * ps * pb * qd * frac(rb, rs + rb),
        a * qs * pb * pd * frac(rb, rb + rd),
        a * ps * pb * pd * frac(rb, rs + rb + rd),
        // D2D
        a * qs * qb * pd * d2d_gate,
        a * ps * qb * pd * frac(rd, rs + rd),
        a * qs * pb * pd * frac(rd, rb + rd),
        a * ps * pb * pd * frac(rd, rs + rb + rd),
    ])
}

/// HU departure transitions.
pub fn hu_departures(s: &ChannelState, rates: &ServiceRates) -> Vec<LabeledTransition> {
    Family::ALL
        .iter()
        .filter(|f| f.occupancy(s) > 0)
        .map(|&f| LabeledTransition {
            label: TransitionLabel::HuDeparture(f),
            to: f.depart(s),
            rate: f.occupancy(s) as f64 * f.service_rate(rates),
        })
        .collect()
}

/// Everything needed to build the generator.
#[derive(Debug, Clone)]
pub struct RaInputs<'a> {
    pub channels: ChannelConfig,
    pub catalog: &'a ContentCatalog,
    pub availability: &'a AvailabilityProfile,
    pub weights: ModeWeights,
    pub geometry: D2DGeometry,
    pub rates: ServiceRates,
}

/// Per-state HU arrival rates by destination family.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaTable {
    n_contents: usize,
    totals: Vec<[f64; 5]>,
    per_content: Vec<[f64; 5]>,
}

impl GammaTable {
    /// `Γ_f(x)` for every family.
    pub fn totals(&self, state: usize) -> [f64; 5] {
        self.totals[state]
    }

    pub fn gamma(&self, state: usize, family: Family) -> f64 {
        self.totals[state][family.index()]
    }

    /// `γ_f^i(x)` for content `i`.
    pub fn content(&self, state: usize, content: usize) -> [f64; 5] {
        self.per_content[state * self.n_contents + content]
    }

    pub fn n_states(&self) -> usize {
        self.totals.len()
    }
}

#[derive(Debug, Clone)]
pub struct RaModel {
    channels: ChannelConfig,
    states: Vec<ChannelState>,
    index: HashMap<ChannelState, usize>,
    matrix: RateMatrix,
    gamma: GammaTable,
}

impl RaModel {
    pub fn build(inputs: &RaInputs<'_>) -> Result<Self, ModelError> {
        let cfg = inputs.channels;
        cfg.validate()?;
        if inputs.geometry.d_max != cfg.d_max {
            return Err(ModelError::InvalidChannels(
                "geometry and channel configuration disagree on d_max".into(),
            ));
        }
        let states = enumerate_states(&cfg);
        let index: HashMap<ChannelState, usize> =
            states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let n = inputs.catalog.len();
        let lambda = inputs.catalog.request_rate();
        let av = inputs.availability;
        let rows: Vec<(Vec<LabeledTransition>, Vec<[f64; 5]>)> = states
            .par_iter()
            .map(|s| {
                let mut out = pu_transitions(s, &cfg, inputs.rates.mu_pu_ter);
                let mut per_content = Vec::with_capacity(n);
                let mut totals = [0.0; 5];
                for i in 0..n {
                    let view = ContentView {
                        lambda: lambda[i],
                        p_loc: av.p_loc[i],
                        p_sat: av.p_sat[i],
                        p_bs: av.p_bs[i],
                        p_d2d: inputs.geometry.p_d2d(s.i_hu_d_f1, av.p_loc[i]),
                    };
                    let fam = arrival_rows(s, &view, &inputs.weights, &cfg).families();
                    for k in 0..5 {
                        totals[k] += fam[k];
                    }
                    per_content.push(fam);
                }
                for f in Family::ALL {
                    let rate = totals[f.index()];
                    if rate > 0.0 {
                        out.push(LabeledTransition {
                            label: TransitionLabel::HuArrival(f),
                            to: f.arrive(s),
                            rate,
                        });
                    }
                }
                out.extend(hu_departures(s, &inputs.rates));
                per_content.push(totals);
                (out, per_content)
            })
            .collect();
        let mut matrix = RateMatrix::new(states.len());
        let mut gamma = GammaTable {
            n_contents: n,
            totals: Vec::with_capacity(states.len()),
            per_content: Vec::with_capacity(states.len() * n),
        };
        for (from, (transitions, mut per_content)) in rows.into_iter().enumerate() {
            for t in transitions {
                let to = *index.get(&t.to).unwrap_or_else(|| {
                    panic!("transition {:?} leaves the state space from {:?}", t.label, states[from])
                });
                matrix.add(from, to, t.rate);
            }
            let totals = per_content.pop().expect("totals row");
            gamma.totals.push(totals);
            gamma.per_content.extend(per_content);
        }
        Ok(Self {
            channels: cfg,
            states,
            index,
            matrix,
            gamma,
        })
    }

    pub fn channels(&self) -> &ChannelConfig {
        &self.channels
    }

    pub fn states(&self) -> &[ChannelState] {
        &self.states
    }

    pub fn index_of(&self, s: &ChannelState) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn matrix(&self) -> &RateMatrix {
        &self.matrix
    }

    pub fn gamma(&self) -> &GammaTable {
        &self.gamma
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }
}
