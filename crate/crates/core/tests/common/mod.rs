//! Test-only reference implementations shared by integration tests.
#![allow(dead_code)]

use sathet::cache::AvailabilityProfile;
use sathet::ctmc::{ChannelConfig, D2DGeometry, ModeWeights, RaInputs, RaModel};
use sathet::link::{service_rates, Capacities, ServiceRates};
use sathet::{ChannelState, ContentCatalog, SizeDistribution};
use std::collections::HashMap;
use std::f64::consts::PI;

/// `(sat, sat_u, pu_nf1, bs, bs_u, pu_f1, d)`.
pub type Tuple = [u32; 7];

/// Everything the brute-force generator needs, spelled out without library
/// types.
#[derive(Debug, Clone)]
pub struct TinyModel {
    pub n_sat: u32,
    pub n_ter: u32,
    pub d_max: u32,
    pub lambda_pu: f64,
    pub mu_pu: f64,
    /// Per-content request rates.
    pub lambda: Vec<f64>,
    pub p_loc: Vec<f64>,
    pub p_sat: Vec<f64>,
    pub p_bs: Vec<f64>,
    pub r_sat: f64,
    pub r_bs: f64,
    pub r_dev: f64,
    pub universal: bool,
    pub density: f64,
    pub r_cell: f64,
    pub r_int: f64,
    /// Service rates of sat, sat_u, bs, bs_u, d2d.
    pub mu: [f64; 5],
}

fn one(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// `x / y` when the guard `y > 0` holds, else 0.
fn share(x: f64, y: f64) -> f64 {
    if y > 0.0 {
        x / y
    } else {
        0.0
    }
}

impl TinyModel {
    /// Walked with D2D count outermost, unlike the library.
    pub fn states(&self) -> Vec<Tuple> {
        let mut out = Vec::new();
        for d in 0..=self.d_max {
            for f1 in 0..=1u32 {
                if f1 == 1 && d > 0 {
                    continue;
                }
                for bs_u in 0..self.n_ter {
                    for bs in 0..self.n_ter {
                        for pu in 0..self.n_ter {
                            if pu + bs + bs_u > self.n_ter - 1 {
                                continue;
                            }
                            for sat_u in 0..=self.n_sat {
                                for sat in 0..=self.n_sat - sat_u {
                                    out.push([sat, sat_u, pu, bs, bs_u, f1, d]);
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn p_d2d(&self, d: u32, p_loc: f64) -> f64 {
        if d >= self.d_max {
            return 0.0;
        }
        let cell = PI * self.r_cell * self.r_cell;
        let rec = (cell - d as f64 * PI * self.r_int * self.r_int).max(0.0) / cell;
        let tx = (cell - d as f64 * PI * (2.0 * self.r_int) * (2.0 * self.r_int)).max(0.0) / cell;
        let m = (self.density * PI * self.r_int * self.r_int).floor();
        rec * tx * (1.0 - (1.0 - p_loc).powf(m))
    }

    /// Outgoing `(destination, rate)` pairs of `x`, one per transition rule with
    /// a positive rate.
    pub fn rows(&self, x: &Tuple) -> Vec<(Tuple, f64)> {
        let [sat, sat_u, pu, bs, bs_u, f1, d] = *x;
        let nt = self.n_ter as f64;
        let idle_s = self.n_sat - sat - sat_u;
        let idle_t = self.n_ter - 1 - pu - bs - bs_u;
        let mut out: Vec<(Tuple, f64)> = Vec::new();
        let mut push = |to: Tuple, rate: f64| {
            if rate > 0.0 {
                out.push((to, rate));
            }
        };

        // PU activity
        let nf1 = (nt - 1.0) * self.lambda_pu / nt;
        let free = self.n_ter - 1 - pu;
        push([sat, sat_u, pu + 1, bs, bs_u, f1, d], nf1 * one(idle_t > 0));
        let pre = one(idle_t == 0 && free > 0);
        if bs > 0 {
            push([sat, sat_u, pu + 1, bs - 1, bs_u, f1, d], nf1 * bs as f64 / free as f64 * pre);
        }
        if bs_u > 0 {
            push([sat, sat_u, pu + 1, bs, bs_u - 1, f1, d], nf1 * bs_u as f64 / free as f64 * pre);
        }
        push([sat, sat_u, pu, bs, bs_u, f1 + 1, d], self.lambda_pu / nt * one(f1 == 0 && d == 0));
        push([sat, sat_u, pu, bs, bs_u, f1 + 1, 0], self.lambda_pu / nt * one(d > 0));
        if pu > 0 {
            push([sat, sat_u, pu - 1, bs, bs_u, f1, d], pu as f64 * self.mu_pu);
        }
        if f1 > 0 {
            push([sat, sat_u, pu, bs, bs_u, f1 - 1, d], f1 as f64 * self.mu_pu);
        }

        // HU arrivals, summed per destination over contents
        let rs = self.r_sat * idle_s as f64;
        let rb = self.r_bs * idle_t as f64;
        let rd = self.r_dev * (one(0 < d && d < self.d_max) + one(d == 0 && f1 == 0));
        let d2d_blocked = one(self.r_dev == 0.0 || d == self.d_max || f1 == 1);
        let u = one(self.universal);
        let mut h = [0.0; 5];
        for i in 0..self.lambda.len() {
            let base = self.lambda[i] * (1.0 - self.p_loc[i]);
            let (ps, pb, pd) = (self.p_sat[i], self.p_bs[i], self.p_d2d(d, self.p_loc[i]));
            let (qs, qb, qd) = (1.0 - ps, 1.0 - pb, 1.0 - pd);
            // h1
            h[0] += u * base * qs * qb * qd * share(rs, rs + rb);
            h[0] += u * base * qs * pb * qd * one((idle_t == 0 || self.r_bs == 0.0) && idle_s > 0 && self.r_sat > 0.0);
            h[0] += u * base * qs * qb * pd * share(rs, rs + rb) * d2d_blocked;
            h[0] += u * base * qs * pb * pd * one(rb + rd == 0.0 && idle_s > 0 && self.r_sat > 0.0);
            // h2
            h[1] += u * base * qs * qb * qd * share(rb, rs + rb);
            h[1] += u * base * ps * qb * qd * one((idle_s == 0 || self.r_sat == 0.0) && idle_t > 0 && self.r_bs > 0.0);
            h[1] += u * base * qs * qb * pd * share(rb, rs + rb) * d2d_blocked;
            h[1] += u * base * ps * qb * pd * one(rs + rd == 0.0 && idle_t > 0 && self.r_bs > 0.0);
            // h3
            h[2] += base * ps * qb * qd * one(idle_s > 0 && self.r_sat > 0.0);
            h[2] += base * ps * pb * qd * share(rs, rs + rb);
            h[2] += base * ps * qb * pd * share(rs, rs + rd);
            h[2] += base * ps * pb * pd * share(rs, rs + rb + rd);
            // h4
            h[3] += base * qs * pb * qd * one(idle_t > 0 && self.r_bs > 0.0);
            h[3] += base * ps * pb * qd * share(rb, rs + rb);
            h[3] += base * qs * pb * pd * share(rb, rb + rd);
            h[3] += base * ps * pb * pd * share(rb, rs + rb + rd);
            // h5
            h[4] += base * qs * qb * pd * one(self.r_dev > 0.0) * (one(0 < d && d < self.d_max) + one(d == 0 && f1 == 0));
            h[4] += base * ps * qb * pd * share(rd, rs + rd);
            h[4] += base * qs * pb * pd * share(rd, rb + rd);
            h[4] += base * ps * pb * pd * share(rd, rs + rb + rd);
        }
        push([sat, sat_u + 1, pu, bs, bs_u, f1, d], h[0]);
        push([sat, sat_u, pu, bs, bs_u + 1, f1, d], h[1]);
        push([sat + 1, sat_u, pu, bs, bs_u, f1, d], h[2]);
        push([sat, sat_u, pu, bs + 1, bs_u, f1, d], h[3]);
        push([sat, sat_u, pu, bs, bs_u, f1, d + 1], h[4]);

        // HU departures
        if sat > 0 {
            push([sat - 1, sat_u, pu, bs, bs_u, f1, d], sat as f64 * self.mu[0]);
        }
        if sat_u > 0 {
            push([sat, sat_u - 1, pu, bs, bs_u, f1, d], sat_u as f64 * self.mu[1]);
        }
        if bs > 0 {
            push([sat, sat_u, pu, bs - 1, bs_u, f1, d], bs as f64 * self.mu[2]);
        }
        if bs_u > 0 {
            push([sat, sat_u, pu, bs, bs_u - 1, f1, d], bs_u as f64 * self.mu[3]);
        }
        if d > 0 {
            push([sat, sat_u, pu, bs, bs_u, f1, d - 1], d as f64 * self.mu[4]);
        }
        out
    }

    /// Dense generator in [`TinyModel::states`] order, diagonal included.
    pub fn generator(&self) -> (Vec<Tuple>, Vec<Vec<f64>>) {
        let states = self.states();
        let index: HashMap<Tuple, usize> = states.iter().enumerate().map(|(k, s)| (*s, k)).collect();
        let n = states.len();
        let mut q = vec![vec![0.0; n]; n];
        for (from, s) in states.iter().enumerate() {
            for (to, rate) in self.rows(s) {
                let j = *index
                    .get(&to)
                    .unwrap_or_else(|| panic!("row from {s:?} leaves the state space to {to:?}"));
                q[from][j] += rate;
                q[from][from] -= rate;
            }
        }
        (states, q)
    }
}

pub const ZIPF: f64 = 0.8;

pub fn rates() -> ServiceRates {
    service_rates(
        &Capacities {
            pu_ter: 8e6,
            hu_sat: 2e6,
            hu_bs: 5e6,
            hu_d2d: 2e7,
            sat_u: 1e6,
            bs_u: 1e7,
        },
        &SizeDistribution::with_mean(25.0),
    )
}

pub fn tuple(s: &ChannelState) -> Tuple {
    [s.i_hu_sat, s.i_hu_sat_u, s.i_pu_ter_nf1, s.i_hu_bs, s.i_hu_bs_u, s.i_pu_ter_f1, s.i_hu_d_f1]
}

/// `N_f_sat = 1, N_f_ter = 2, D_max = 1`, three contents, all mode weights
/// positive.
pub fn tiny() -> TinyModel {
    let total = 1.7;
    let raw: Vec<f64> = (1..=3).map(|k| (k as f64).powf(-ZIPF)).collect();
    let norm: f64 = raw.iter().sum();
    let r = rates();
    TinyModel {
        n_sat: 1,
        n_ter: 2,
        d_max: 1,
        lambda_pu: 0.6,
        mu_pu: r.mu_pu_ter,
        lambda: raw.iter().map(|w| total * w / norm).collect(),
        p_loc: vec![0.4, 0.25, 0.1],
        p_sat: vec![0.9, 0.3, 0.05],
        p_bs: vec![0.7, 0.6, 0.2],
        r_sat: 0.3,
        r_bs: 0.5,
        r_dev: 0.2,
        universal: true,
        density: 0.002,
        r_cell: 500.0,
        r_int: 80.0,
        mu: [r.mu_hu_sat, r.mu_hu_sat_u, r.mu_hu_bs, r.mu_hu_bs_u, r.mu_hu_d2d],
    }
}

pub fn library(t: &TinyModel) -> RaModel {
    let total: f64 = t.lambda.iter().sum();
    let catalog = ContentCatalog::new(t.lambda.len(), ZIPF, total);
    for (a, b) in catalog.request_rate().iter().zip(&t.lambda) {
        assert!((a - b).abs() <= 1e-14 * b, "catalog rate {a} vs {b}");
    }
    RaModel::build(&RaInputs {
        channels: ChannelConfig {
            n_freq_sat: t.n_sat,
            n_freq_ter: t.n_ter,
            d_max: t.d_max,
            lambda_pu: t.lambda_pu,
            universal_source: t.universal,
        },
        catalog: &catalog,
        availability: &AvailabilityProfile {
            p_loc: t.p_loc.clone(),
            p_sat: t.p_sat.clone(),
            p_bs: t.p_bs.clone(),
        },
        weights: ModeWeights {
            r_sat: t.r_sat,
            r_bs: t.r_bs,
            r_dev: t.r_dev,
        },
        geometry: D2DGeometry {
            hu_density: t.density,
            cell_radius: t.r_cell,
            interference_radius: t.r_int,
            d_max: t.d_max,
        },
        rates: rates(),
    })
    .unwrap()
}

/// Largest entrywise difference between library and oracle generators.
pub fn max_gap(t: &TinyModel) -> f64 {
    let model = library(t);
    let (states, q) = t.generator();
    assert_eq!(states.len(), model.n_states());
    let dense = model.matrix().to_dense();
    let lib_index: Vec<usize> = states
        .iter()
        .map(|s| {
            model
                .states()
                .iter()
                .position(|x| tuple(x) == *s)
                .unwrap_or_else(|| panic!("{s:?} missing from the library"))
        })
        .collect();
    let mut gap: f64 = 0.0;
    for (a, &la) in lib_index.iter().enumerate() {
        for (b, &lb) in lib_index.iter().enumerate() {
            gap = gap.max((dense[(la, lb)] - q[a][b]).abs());
        }
    }
    gap
}
