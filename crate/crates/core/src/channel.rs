//! Indoor propagation: InH-Office path loss and LOS probability, log-normal
//! shadowing, Ricean fast fading with a log-normal K factor, thermal noise.
//!
//! All dB-domain losses live in [`LinkLargeScale`]; fading matrices are
//! normalized to unit mean entry power.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Complex, DMatrix};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::Serialize;

use crate::config::ChannelConfig;
use crate::error::{Result, SimError};
use crate::rng::{self, Subsystem};
use crate::scenario::{AntennaArray, Deployment, Position};

pub type C64 = Complex<f64>;

/// LOS probability of the open-office indoor hotspot model.
pub fn los_probability(d_2d: f64) -> Result<f64> {
    if !(d_2d >= 0.0) {
        return Err(SimError::Argument(format!("negative 2D distance {d_2d}")));
    }
    let p = if d_2d <= 5.0 {
        1.0
    } else if d_2d <= 49.0 {
        (-(d_2d - 5.0) / 70.8).exp()
    } else {
        (-(d_2d - 49.0) / 211.7).exp() * 0.54
    };
    Ok(p.clamp(0.0, 1.0))
}

/// Indoor-office path loss in dB. Distances below 1 m are clamped to 1 m;
/// the NLOS value never drops below the LOS value.
pub fn path_loss_db(d_3d: f64, fc_ghz: f64, is_los: bool) -> Result<f64> {
    if !(0.5..=100.0).contains(&fc_ghz) {
        return Err(SimError::Argument(format!(
            "carrier {fc_ghz} GHz outside [0.5, 100]"
        )));
    }
    if d_3d.is_nan() {
        return Err(SimError::Argument("distance is NaN".into()));
    }
    let d = d_3d.max(1.0);
    let los = 32.4 + 17.3 * d.log10() + 20.0 * fc_ghz.log10();
    if is_los {
        Ok(los)
    } else {
        let nlos = 17.3 + 38.3 * d.log10() + 24.9 * fc_ghz.log10();
        Ok(los.max(nlos))
    }
}

pub fn shadowing_sample<R: Rng + ?Sized>(is_los: bool, cfg: &ChannelConfig, rng: &mut R) -> f64 {
    let sigma = if is_los {
        cfg.shadowing_los_db
    } else {
        cfg.shadowing_nlos_db
    };
    let z: f64 = StandardNormal.sample(rng);
    sigma * z
}

/// Ricean K factor in linear scale: log-normal for LOS links, zero (Rayleigh)
/// for NLOS links.
pub fn k_factor_sample<R: Rng + ?Sized>(is_los: bool, cfg: &ChannelConfig, rng: &mut R) -> f64 {
    if !is_los {
        return 0.0;
    }
    let k_db = Normal::new(cfg.k_factor_mean_db, cfg.k_factor_std_db.max(0.0))
        .expect("finite K-factor parameters")
        .sample(rng);
    db_to_linear(k_db)
}

pub fn noise_power_dbm(psd_dbm_hz: f64, bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    psd_dbm_hz + 10.0 * bandwidth_hz.log10() + noise_figure_db
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkLargeScale {
    pub tx: usize,
    pub rx: usize,
    pub distance_3d: f64,
    pub is_los: bool,
    pub path_loss_db: f64,
    pub shadowing_db: f64,
}

impl LinkLargeScale {
    pub fn loss_db(&self) -> f64 {
        self.path_loss_db + self.shadowing_db
    }
}

/// Received power with 0 dBi antennas.
pub fn rx_power_dbm(tx_power_dbm: f64, link: &LinkLargeScale) -> f64 {
    tx_power_dbm - link.path_loss_db - link.shadowing_db
}

/// Large-scale state of every node pair in a drop. Links are reciprocal.
#[derive(Debug, Clone)]
pub struct LargeScaleMap {
    n: usize,
    path_loss_db: Vec<f64>,
    shadowing_db: Vec<f64>,
    is_los: Vec<bool>,
    distance_3d: Vec<f64>,
}

impl LargeScaleMap {
    pub fn generate(dep: &Deployment, cfg: &ChannelConfig, fc_ghz: f64, seed: u64) -> Result<Self> {
        let n = dep.n_nodes();
        let mut map = LargeScaleMap {
            n,
            path_loss_db: vec![0.0; n * n],
            shadowing_db: vec![0.0; n * n],
            is_los: vec![true; n * n],
            distance_3d: vec![0.0; n * n],
        };
        let positions: Vec<Position> = (0..n).map(|i| dep.node(i).position).collect();
        for i in 0..n {
            // One stream per transmitter row keeps each link's draws fixed
            // regardless of how many nodes exist.
            let mut rng = rng::stream(seed, Subsystem::LargeScale, i as u64);
            for j in (i + 1)..n {
                let d2 = positions[i].distance_2d(&positions[j]);
                let d3 = positions[i].distance_3d(&positions[j]);
                let los = rng.random::<f64>() < los_probability(d2)?;
                let pl = path_loss_db(d3, fc_ghz, los)?;
                let sh = shadowing_sample(los, cfg, &mut rng);
                for (a, b) in [(i, j), (j, i)] {
                    let k = a * n + b;
                    map.path_loss_db[k] = pl;
                    map.shadowing_db[k] = sh;
                    map.is_los[k] = los;
                    map.distance_3d[k] = d3;
                }
            }
        }
        Ok(map)
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn link(&self, tx: usize, rx: usize) -> LinkLargeScale {
        let k = tx * self.n + rx;
        LinkLargeScale {
            tx,
            rx,
            distance_3d: self.distance_3d[k],
            is_los: self.is_los[k],
            path_loss_db: self.path_loss_db[k],
            shadowing_db: self.shadowing_db[k],
        }
    }

    /// Path loss plus shadowing in dB.
    #[inline]
    pub fn loss_db(&self, tx: usize, rx: usize) -> f64 {
        let k = tx * self.n + rx;
        self.path_loss_db[k] + self.shadowing_db[k]
    }

    /// CSV dump: tx, rx, d3d, los, pl, shadow (one row per ordered pair i < j).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "tx,rx,d3d,los,pl,shadow")?;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let l = self.link(i, j);
                writeln!(
                    out,
                    "{},{},{:.4},{},{:.4},{:.4}",
                    i, j, l.distance_3d, l.is_los as u8, l.path_loss_db, l.shadowing_db
                )?;
            }
        }
        Ok(())
    }
}

/// Far-field response of a planar array lying in the horizontal plane
/// (ceiling mounted) toward unit direction `dir`.
pub fn steering_vector(array: &AntennaArray, dir: [f64; 3]) -> Vec<C64> {
    let mut v = Vec::with_capacity(array.elements());
    for r in 0..array.rows {
        for c in 0..array.cols {
            let phase = 2.0
                * PI
                * array.spacing_wavelengths
                * (r as f64 * dir[0] + c as f64 * dir[1]);
            v.push(C64::from_polar(1.0, phase));
        }
    }
    v
}

/// Per-link fast-fading parameters, fixed for the drop.
#[derive(Debug, Clone)]
pub struct FadingState {
    pub k_linear: f64,
    /// Transmit-side steering vector of the LOS path.
    pub tx_steering: Vec<C64>,
    /// Receive-side steering vector of the LOS path.
    pub rx_steering: Vec<C64>,
}

impl FadingState {
    pub fn new(
        k_linear: f64,
        tx_array: &AntennaArray,
        tx_pos: &Position,
        rx_array: &AntennaArray,
        rx_pos: &Position,
    ) -> Self {
        let d = tx_pos.distance_3d(rx_pos).max(1e-9);
        let out = [
            (rx_pos.x - tx_pos.x) / d,
            (rx_pos.y - tx_pos.y) / d,
            (rx_pos.z - tx_pos.z) / d,
        ];
        let back = [-out[0], -out[1], -out[2]];
        FadingState {
            k_linear,
            tx_steering: steering_vector(tx_array, out),
            rx_steering: steering_vector(rx_array, back),
        }
    }

    fn weights(&self) -> (f64, f64) {
        if self.k_linear.is_infinite() {
            (1.0, 0.0)
        } else {
            let k = self.k_linear.max(0.0);
            ((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt())
        }
    }

    /// One block-fading realization, `rx elements x tx elements`.
    pub fn channel_matrix<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<C64> {
        let (w_los, w_nlos) = self.weights();
        let nr = self.rx_steering.len();
        let nt = self.tx_steering.len();
        DMatrix::from_fn(nr, nt, |i, j| {
            let los = self.rx_steering[i] * self.tx_steering[j].conj();
            los * w_los + complex_gaussian(rng) * w_nlos
        })
    }

    /// Single-receive-antenna shortcut of [`channel_matrix`](Self::channel_matrix).
    pub fn channel_row<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<C64> {
        let (w_los, w_nlos) = self.weights();
        let r0 = self.rx_steering[0];
        self.tx_steering
            .iter()
            .map(|t| r0 * t.conj() * w_los + complex_gaussian(rng) * w_nlos)
            .collect()
    }
}

/// Circularly-symmetric complex Gaussian with unit variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}
