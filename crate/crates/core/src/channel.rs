//! Effective waveguide-to-user channels under an antenna activation mask.
//!
//! Each activated antenna on waveguide `k` contributes
//! `η · exp(-j2π(r/λ + l/λ_g)) / r` to user `n`, where `r` is the free-space
//! distance antenna→user and `l` the in-waveguide distance feed→antenna.
//! Contributions are precomputed once per geometry so that toggling an
//! antenna only re-sums one row.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::scenario::{DerivedConstants, UserDrop};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }
}

/// Euclidean distance in meters.
pub fn distance(a: Point3, b: Point3) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Binary antenna activation matrix `β` (K × M).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActivationMask {
    waveguides: usize,
    antennas: usize,
    beta: Vec<bool>,
}

impl ActivationMask {
    /// All antennas off.
    pub fn new(waveguides: usize, antennas: usize) -> Self {
        Self { waveguides, antennas, beta: vec![false; waveguides * antennas] }
    }

    pub fn all_active(waveguides: usize, antennas: usize) -> Self {
        Self { waveguides, antennas, beta: vec![true; waveguides * antennas] }
    }

    /// Builds a mask from rows; all rows must have the same length.
    pub fn from_rows(rows: &[Vec<bool>]) -> Option<Self> {
        let antennas = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != antennas) {
            return None;
        }
        Some(Self { waveguides: rows.len(), antennas, beta: rows.iter().flatten().copied().collect() })
    }

    pub fn waveguides(&self) -> usize {
        self.waveguides
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn is_active(&self, k: usize, m: usize) -> bool {
        self.beta[k * self.antennas + m]
    }

    pub fn set(&mut self, k: usize, m: usize, on: bool) {
        self.beta[k * self.antennas + m] = on;
    }

    pub fn clear_waveguide(&mut self, k: usize) {
        self.row_mut(k).fill(false);
    }

    /// `M_k`, the number of active antennas on waveguide `k`.
    pub fn active_count(&self, k: usize) -> usize {
        self.row(k).iter().filter(|&&b| b).count()
    }

    pub fn total_active(&self) -> usize {
        self.beta.iter().filter(|&&b| b).count()
    }

    pub fn active(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(k).iter().enumerate().filter(|(_, &b)| b).map(|(m, _)| m)
    }

    pub fn row(&self, k: usize) -> &[bool] {
        &self.beta[k * self.antennas..(k + 1) * self.antennas]
    }

    fn row_mut(&mut self, k: usize) -> &mut [bool] {
        &mut self.beta[k * self.antennas..(k + 1) * self.antennas]
    }
}

/// Effective channels `h` (K × N) plus their squared magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    waveguides: usize,
    users: usize,
    h: Vec<Complex64>,
    gain2: Vec<f64>,
    active: Vec<usize>,
}

impl ChannelMatrix {
    pub fn waveguides(&self) -> usize {
        self.waveguides
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn h(&self, k: usize, n: usize) -> Complex64 {
        self.h[k * self.users + n]
    }

    /// `|h_{k,n}|²`.
    pub fn gain2(&self, k: usize, n: usize) -> f64 {
        self.gain2[k * self.users + n]
    }

    /// Number of active antennas `M_k` the row was computed with.
    pub fn active_count(&self, k: usize) -> usize {
        self.active[k]
    }
}

/// Antenna and feed positions for each waveguide (or fixed array).
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    /// Antenna positions, one row per waveguide; all rows equally long.
    pub antennas: Vec<Vec<Point3>>,
    /// Feed point of each waveguide.
    pub feeds: Vec<Point3>,
}

impl ArrayGeometry {
    pub fn pinching(drop: &UserDrop) -> Self {
        let antennas = drop
            .waveguide_y
            .iter()
            .map(|&y| drop.antenna_x.iter().map(|&x| Point3::new(x, y, drop.height)).collect())
            .collect();
        let feeds = drop.waveguide_y.iter().map(|&y| Point3::new(drop.feed_x, y, drop.height)).collect();
        Self { antennas, feeds }
    }
}

pub fn user_points(drop: &UserDrop) -> Vec<Point3> {
    drop.user_xy.iter().map(|&[x, y]| Point3::new(x, y, 0.0)).collect()
}

/// Phase `2π(r/λ + l/λ_g)` reduced to `[0, 2π)` before any trig call.
fn reduced_phase(r_over_lambda: f64, l_over_lambda_g: f64) -> f64 {
    let cycles = r_over_lambda.fract() + l_over_lambda_g.fract();
    TAU * cycles.fract()
}

/// Per-antenna channel contributions for a fixed geometry and user set.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    waveguides: usize,
    antennas: usize,
    users: usize,
    contrib: Vec<Complex64>,
}

impl ChannelModel {
    pub fn new(geometry: &ArrayGeometry, users: &[Point3], consts: &DerivedConstants) -> Self {
        let waveguides = geometry.antennas.len();
        let antennas = geometry.antennas.first().map_or(0, Vec::len);
        let mut contrib = Vec::with_capacity(waveguides * antennas * users.len());
        for (row, &feed) in geometry.antennas.iter().zip(&geometry.feeds) {
            assert_eq!(row.len(), antennas, "ragged antenna geometry");
            for &ant in row {
                let guided = distance(feed, ant) / consts.lambda_g;
                for &user in users {
                    let r = distance(user, ant);
                    let phase = reduced_phase(r / consts.lambda, guided);
                    contrib.push(Complex64::from_polar(consts.eta / r, -phase));
                }
            }
        }
        Self { waveguides, antennas, users: users.len(), contrib }
    }

    pub fn pinching(drop: &UserDrop, consts: &DerivedConstants) -> Self {
        Self::new(&ArrayGeometry::pinching(drop), &user_points(drop), consts)
    }

    pub fn waveguides(&self) -> usize {
        self.waveguides
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn users(&self) -> usize {
        self.users
    }

    /// Contribution of antenna `m` on waveguide `k` to user `n`.
    pub fn contribution(&self, k: usize, m: usize, n: usize) -> Complex64 {
        self.contrib[(k * self.antennas + m) * self.users + n]
    }

    pub fn channel(&self, mask: &ActivationMask) -> ChannelMatrix {
        debug_assert_eq!(mask.waveguides(), self.waveguides);
        debug_assert_eq!(mask.antennas(), self.antennas);
        let mut ch = ChannelMatrix {
            waveguides: self.waveguides,
            users: self.users,
            h: vec![Complex64::new(0.0, 0.0); self.waveguides * self.users],
            gain2: vec![0.0; self.waveguides * self.users],
            active: vec![0; self.waveguides],
        };
        for k in 0..self.waveguides {
            self.update_row(&mut ch, k, mask);
        }
        ch
    }

    /// Re-sums row `k` of `ch` from scratch for the given mask.
    pub fn update_row(&self, ch: &mut ChannelMatrix, k: usize, mask: &ActivationMask) {
        let row = &mut ch.h[k * self.users..(k + 1) * self.users];
        row.fill(Complex64::new(0.0, 0.0));
        let mut count = 0;
        for m in mask.active(k) {
            count += 1;
            let base = (k * self.antennas + m) * self.users;
            for (h, c) in row.iter_mut().zip(&self.contrib[base..base + self.users]) {
                *h += c;
            }
        }
        ch.active[k] = count;
        for n in 0..self.users {
            ch.gain2[k * self.users + n] = ch.h[k * self.users + n].norm_sqr();
        }
    }
}

/// Convenience wrapper: channels of a pinching drop under `mask`.
pub fn effective_channel(drop: &UserDrop, consts: &DerivedConstants, mask: &ActivationMask) -> ChannelMatrix {
    ChannelModel::pinching(drop, consts).channel(mask)
}
