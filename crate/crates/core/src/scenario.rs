//! Enterprise deployment: floor, ceiling-mounted AP grid, uniformly dropped
//! STAs, association and channel reuse.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{DeploymentConfig, PhyConfig};
use crate::error::{Result, SimError};
use crate::rng::{self, Subsystem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Position { x, y, z }
    }

    pub fn distance_2d(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_3d(&self, other: &Position) -> f64 {
        let d2 = self.distance_2d(other);
        d2.hypot(self.z - other.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloorPlan {
    pub width: f64,
    pub depth: f64,
    pub ceiling_height: f64,
}

impl FloorPlan {
    pub fn new(width: f64, depth: f64, ceiling_height: f64) -> Result<Self> {
        if width > 0.0 && depth > 0.0 && ceiling_height > 0.0 {
            Ok(FloorPlan {
                width,
                depth,
                ceiling_height,
            })
        } else {
            Err(SimError::Config("floor dimensions must be positive".into()))
        }
    }

    pub fn contains(&self, p: &Position) -> bool {
        (0.0..=self.width).contains(&p.x)
            && (0.0..=self.depth).contains(&p.y)
            && (0.0..=self.ceiling_height).contains(&p.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Ap,
    Sta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntennaArray {
    pub rows: usize,
    pub cols: usize,
    pub spacing_wavelengths: f64,
}

impl AntennaArray {
    pub fn single() -> Self {
        AntennaArray {
            rows: 1,
            cols: 1,
            spacing_wavelengths: 0.5,
        }
    }

    pub fn elements(&self) -> usize {
        self.rows * self.cols
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// Global node index: APs first, then STAs.
    pub id: usize,
    pub role: Role,
    pub position: Position,
    pub array: AntennaArray,
    pub max_tx_power_dbm: f64,
    pub noise_figure_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub floor: FloorPlan,
    pub aps: Vec<Node>,
    pub stas: Vec<Node>,
    /// Serving AP index for each STA (indexed by STA order, not node id).
    pub association: Vec<usize>,
    /// Channel index for each AP.
    pub channel_of_ap: Vec<usize>,
}

impl Deployment {
    /// Builds the geometry and channel plan for one drop. Association is left
    /// empty until [`associate`] runs against the drop's large-scale channel.
    pub fn generate(dep: &DeploymentConfig, phy: &PhyConfig, seed: u64) -> Result<Deployment> {
        let floor = FloorPlan::new(dep.floor_width_m, dep.floor_depth_m, dep.ceiling_height_m)?;
        let ap_positions = place_aps(&floor, dep.ap_grid_x, dep.ap_grid_y, dep.ap_spacing_m)?;
        let mut placement_rng = rng::stream(seed, Subsystem::StaPlacement, 0);
        let sta_positions = place_stas(
            &floor,
            dep.n_stas,
            dep.sta_min_separation_m,
            dep.sta_height_m,
            dep.sta_placement_attempts,
            &mut placement_rng,
        )?;
        let ap_array = AntennaArray {
            rows: phy.ap_array_rows,
            cols: phy.ap_array_cols,
            spacing_wavelengths: phy.element_spacing_wavelengths,
        };
        let aps: Vec<Node> = ap_positions
            .into_iter()
            .enumerate()
            .map(|(id, position)| Node {
                id,
                role: Role::Ap,
                position,
                array: ap_array,
                max_tx_power_dbm: phy.ap_tx_power_dbm,
                noise_figure_db: phy.ap_noise_figure_db,
            })
            .collect();
        let n_aps = aps.len();
        let stas = sta_positions
            .into_iter()
            .enumerate()
            .map(|(i, position)| Node {
                id: n_aps + i,
                role: Role::Sta,
                position,
                array: AntennaArray::single(),
                max_tx_power_dbm: phy.sta_tx_power_dbm,
                noise_figure_db: phy.sta_noise_figure_db,
            })
            .collect();
        let channel_of_ap = assign_channels(dep.ap_grid_x, dep.ap_grid_y, dep.channel_reuse)?;
        Ok(Deployment {
            floor,
            aps,
            stas,
            association: Vec::new(),
            channel_of_ap,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.aps.len() + self.stas.len()
    }

    pub fn node(&self, id: usize) -> &Node {
        if id < self.aps.len() {
            &self.aps[id]
        } else {
            &self.stas[id - self.aps.len()]
        }
    }

    pub fn sta_node_id(&self, sta: usize) -> usize {
        self.aps.len() + sta
    }

    /// STAs served by each AP, in ascending STA order.
    pub fn stas_per_ap(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.aps.len()];
        for (sta, &ap) in self.association.iter().enumerate() {
            out[ap].push(sta);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("deployment serializes")
    }
}

/// Centered square grid at ceiling height, row-major (x fastest).
pub fn place_aps(floor: &FloorPlan, nx: usize, ny: usize, spacing: f64) -> Result<Vec<Position>> {
    let span_x = nx as f64 * spacing;
    let span_y = ny as f64 * spacing;
    if nx == 0 || ny == 0 || spacing <= 0.0 || span_x > floor.width || span_y > floor.depth {
        return Err(SimError::Config(format!(
            "{nx}x{ny} AP grid with {spacing} m spacing does not fit a {}x{} m floor",
            floor.width, floor.depth
        )));
    }
    let x0 = (floor.width - span_x) / 2.0 + spacing / 2.0;
    let y0 = (floor.depth - span_y) / 2.0 + spacing / 2.0;
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            out.push(Position::new(
                x0 + i as f64 * spacing,
                y0 + j as f64 * spacing,
                floor.ceiling_height,
            ));
        }
    }
    Ok(out)
}

/// Uniform STA drop with a minimum pairwise horizontal separation.
pub fn place_stas<R: Rng + ?Sized>(
    floor: &FloorPlan,
    n: usize,
    min_separation: f64,
    height: f64,
    attempts_per_sta: usize,
    rng: &mut R,
) -> Result<Vec<Position>> {
    if n == 0 || min_separation < 0.0 {
        return Err(SimError::Argument(
            "need n >= 1 and a non-negative separation".into(),
        ));
    }
    let mut out: Vec<Position> = Vec::with_capacity(n);
    for k in 0..n {
        let mut placed = false;
        for _ in 0..attempts_per_sta.max(1) {
            let p = Position::new(
                rng.random::<f64>() * floor.width,
                rng.random::<f64>() * floor.depth,
                height,
            );
            if out.iter().all(|q| q.distance_2d(&p) >= min_separation) {
                out.push(p);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(SimError::Generation(format!(
                "could not place STA {k} with {min_separation} m separation"
            )));
        }
    }
    Ok(out)
}

/// Index of the AP with the strongest average received power for each STA.
/// `rx_power_dbm(ap, sta)` must exclude fast fading. Ties go to the lower AP.
pub fn associate<F>(n_aps: usize, n_stas: usize, mut rx_power_dbm: F) -> Vec<usize>
where
    F: FnMut(usize, usize) -> f64,
{
    (0..n_stas)
        .map(|sta| {
            let mut best = 0;
            let mut best_p = f64::NEG_INFINITY;
            for ap in 0..n_aps {
                let p = rx_power_dbm(ap, sta);
                if p > best_p {
                    best = ap;
                    best_p = p;
                }
            }
            best
        })
        .collect()
}

/// Channel index per AP (row-major grid order). Reuse 4 tiles the grid in
/// 2x2 blocks so that the four nearest neighbors never share a channel.
pub fn assign_channels(nx: usize, ny: usize, reuse: usize) -> Result<Vec<usize>> {
    match reuse {
        1 => Ok(vec![0; nx * ny]),
        4 => Ok((0..ny)
            .flat_map(|j| (0..nx).map(move |i| (i % 2) * 2 + (j % 2)))
            .collect()),
        other => Err(SimError::Config(format!(
            "unsupported channel reuse factor {other} (supported: 1, 4)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Preset, SimConfig};

    fn floor() -> FloorPlan {
        FloorPlan::new(40.0, 40.0, 3.0).unwrap()
    }

    #[test]
    fn canonical_grid_is_centered() {
        let aps = place_aps(&floor(), 4, 4, 10.0).unwrap();
        assert_eq!(aps.len(), 16);
        assert_eq!(aps[0], Position::new(5.0, 5.0, 3.0));
        assert_eq!(aps[15], Position::new(35.0, 35.0, 3.0));
        let xs: Vec<f64> = aps[..4].iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![5.0, 15.0, 25.0, 35.0]);
    }

    #[test]
    fn single_ap_sits_in_the_middle() {
        let aps = place_aps(&floor(), 1, 1, 10.0).unwrap();
        assert_eq!(aps, vec![Position::new(20.0, 20.0, 3.0)]);
    }

    #[test]
    fn oversized_grid_rejected() {
        assert!(matches!(
            place_aps(&floor(), 5, 5, 10.0),
            Err(SimError::Config(_))
        ));
    }

    #[test]
    fn sta_drop_respects_separation_and_floor() {
        let mut rng = rng::stream(3, Subsystem::StaPlacement, 0);
        let stas = place_stas(&floor(), 512, 0.1, 1.0, 10_000, &mut rng).unwrap();
        assert_eq!(stas.len(), 512);
        let f = floor();
        for (i, a) in stas.iter().enumerate() {
            assert!(f.contains(a));
            assert_eq!(a.z, 1.0);
            for b in &stas[i + 1..] {
                assert!(a.distance_2d(b) >= 0.1);
            }
        }
    }

    #[test]
    fn one_sta_and_determinism() {
        let mut rng = rng::stream(9, Subsystem::StaPlacement, 0);
        let one = place_stas(&floor(), 1, 0.1, 1.0, 10, &mut rng).unwrap();
        assert!(floor().contains(&one[0]));

        let a = place_stas(&floor(), 50, 0.1, 1.0, 100, &mut rng::stream(4, Subsystem::StaPlacement, 0));
        let b = place_stas(&floor(), 50, 0.1, 1.0, 100, &mut rng::stream(4, Subsystem::StaPlacement, 0));
        assert_eq!(a.unwrap(), b.unwrap());
    }

    #[test]
    fn impossible_separation_is_a_generation_error() {
        let tiny = FloorPlan::new(1.0, 1.0, 3.0).unwrap();
        let mut rng = rng::stream(1, Subsystem::StaPlacement, 0);
        assert!(matches!(
            place_stas(&tiny, 10, 5.0, 1.0, 50, &mut rng),
            Err(SimError::Generation(_))
        ));
    }

    #[test]
    fn association_argmax_and_tie_break() {
        let powers = [[-72.0, -60.0, -90.0], [-65.0, -65.0, -70.0]];
        // STA 0 hears AP1 best, STA 1 has a tie between AP0 and AP1.
        let assoc = associate(3, 2, |ap, sta| powers[sta][ap]);
        assert_eq!(assoc, vec![1, 0]);
    }

    #[test]
    fn reuse_four_tiles_the_grid() {
        let ch = assign_channels(4, 4, 4).unwrap();
        for c in 0..4 {
            assert_eq!(ch.iter().filter(|&&x| x == c).count(), 4);
        }
        for j in 0..4usize {
            for i in 0..4usize {
                let me = ch[j * 4 + i];
                if i + 1 < 4 {
                    assert_ne!(me, ch[j * 4 + i + 1]);
                }
                if j + 1 < 4 {
                    assert_ne!(me, ch[(j + 1) * 4 + i]);
                }
            }
        }
        assert_eq!(assign_channels(4, 4, 1).unwrap(), vec![0; 16]);
        assert!(assign_channels(4, 4, 3).is_err());
    }

    #[test]
    fn generated_deployment_has_expected_shape() {
        let cfg = SimConfig::preset(Preset::Be);
        let d = Deployment::generate(&cfg.deployment, &cfg.phy, 11).unwrap();
        assert_eq!(d.aps.len(), 16);
        assert_eq!(d.stas.len(), 512);
        assert!(d.aps.iter().all(|a| a.position.z == 3.0 && a.array.elements() == 16));
        assert!(d.stas.iter().all(|s| s.array.elements() == 1 && s.position.z == 1.0));
        assert_eq!(d.node(16).id, 16);
        assert_eq!(d.node(16).role, Role::Sta);
    }
}
