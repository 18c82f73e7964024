//! Synthetic multipath CIR generator over 2D scenes with movable obstacles.
//!
//! Each base station contributes a direct path (amplitude `1/d` at tap
//! `round(d/c·bandwidth)`, attenuated by every obstacle crossing the segment)
//! plus four first-order image-source wall reflections scaled by the wall
//! reflection coefficient. Complex circular Gaussian noise is added per tap.
//! Everything is deterministic per seed; per-sample noise streams are derived
//! from `(seed, sample id)` so generation can be sharded.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn dist(&self, other: &Position) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// Axis-aligned rectangle `[x0,x1] × [y0,y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn contains(&self, p: &Position) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    /// Slab test for segment–rectangle intersection.
    pub fn intersects_segment(&self, a: &Position, b: &Position) -> bool {
        let (mut tmin, mut tmax) = (0.0_f64, 1.0_f64);
        let d = [b.x - a.x, b.y - a.y];
        let lo = [self.x0, self.y0];
        let hi = [self.x1, self.y1];
        let o = [a.x, a.y];
        for i in 0..2 {
            if d[i].abs() < 1e-15 {
                if o[i] < lo[i] || o[i] > hi[i] {
                    return false;
                }
            } else {
                let inv = 1.0 / d[i];
                let mut t0 = (lo[i] - o[i]) * inv;
                let mut t1 = (hi[i] - o[i]) * inv;
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                tmin = tmin.max(t0);
                tmax = tmax.min(t1);
                if tmin > tmax {
                    return false;
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub id: u32,
    pub rect: Rect,
    /// Amplitude factor applied to every path crossing this obstacle, in (0,1].
    pub attenuation: f64,
}

/// Immutable scene description: room, base stations, obstacles, radio model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub width: f64,
    pub height: f64,
    pub base_stations: Vec<Position>,
    pub obstacles: Vec<Obstacle>,
    /// Wall reflection coefficient in [0,1).
    pub wall_reflection: f64,
    pub bandwidth: f64,
    pub n_taps: usize,
    pub noise_std: f64,
}

impl Scene {
    /// Desk-scale default: 20×20 m room, six base stations, 100 MHz, 64 taps.
    pub fn default_desk() -> Self {
        Scene {
            width: 20.0,
            height: 20.0,
            base_stations: vec![
                Position::new(1.0, 1.0),
                Position::new(19.0, 1.0),
                Position::new(1.0, 19.0),
                Position::new(19.0, 19.0),
                Position::new(10.0, 1.0),
                Position::new(10.0, 19.0),
            ],
            obstacles: vec![],
            wall_reflection: 0.4,
            bandwidth: 100e6,
            n_taps: 64,
            noise_std: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width <= 0.0 || self.height <= 0.0 {
            return Err(Error::InvalidScene("non-positive room size".into()));
        }
        if self.base_stations.is_empty() {
            return Err(Error::InvalidScene("no base stations".into()));
        }
        for (i, bs) in self.base_stations.iter().enumerate() {
            if bs.x < 0.0 || bs.x > self.width || bs.y < 0.0 || bs.y > self.height {
                return Err(Error::InvalidScene(format!("base station {i} outside room")));
            }
        }
        for o in &self.obstacles {
            if !(o.attenuation > 0.0 && o.attenuation <= 1.0) {
                return Err(Error::InvalidScene(format!(
                    "obstacle {} attenuation {} not in (0,1]",
                    o.id, o.attenuation
                )));
            }
            if o.rect.x0 > o.rect.x1 || o.rect.y0 > o.rect.y1 {
                return Err(Error::InvalidScene(format!("obstacle {} degenerate rect", o.id)));
            }
        }
        if !(0.0..1.0).contains(&self.wall_reflection) {
            return Err(Error::InvalidScene("wall reflection outside [0,1)".into()));
        }
        if self.n_taps < 1 {
            return Err(Error::InvalidScene("n_taps < 1".into()));
        }
        if self.bandwidth <= 0.0 {
            return Err(Error::InvalidScene("non-positive bandwidth".into()));
        }
        Ok(())
    }

    pub fn contains(&self, p: &Position) -> bool {
        p.x >= 0.0 && p.x <= self.width && p.y >= 0.0 && p.y <= self.height
    }

    /// Stable hash of the scene descriptor (canonical JSON, hex digest).
    pub fn descriptor_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("scene serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Image-source mirror points of `src` across the four walls.
    fn wall_images(&self, src: &Position) -> [Position; 4] {
        [
            Position::new(-src.x, src.y),
            Position::new(2.0 * self.width - src.x, src.y),
            Position::new(src.x, -src.y),
            Position::new(src.x, 2.0 * self.height - src.y),
        ]
    }
}

/// Region label of a sample relative to the last domain change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Static,
    Modified,
}

/// One fingerprint: complex taps per base station plus the reference position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CirSample {
    pub id: u64,
    /// Flattened `[bs × n_taps]`, base-station major.
    pub taps: Vec<Complex64>,
    pub position: Position,
    pub region: Region,
}

impl CirSample {
    pub fn tap(&self, bs: usize, n: usize, n_taps: usize) -> Complex64 {
        self.taps[bs * n_taps + n]
    }
}

/// Ordered fingerprint collection for one domain, with a train/test split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskDataset {
    pub task_id: usize,
    pub samples: Vec<CirSample>,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub scene_hash: String,
}

impl TaskDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Seeded 80/20-style split, stratified by region label so modified
    /// regions appear in both halves. Disjoint and covering by construction.
    pub fn split(&mut self, train_ratio: f64, seed: u64) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5117_5eed);
        for region in [Region::Static, Region::Modified] {
            let mut idx: Vec<usize> = (0..self.samples.len())
                .filter(|&i| self.samples[i].region == region)
                .collect();
            // Fisher-Yates
            for i in (1..idx.len()).rev() {
                let j = rng.gen_range(0..=i);
                idx.swap(i, j);
            }
            let cut = (idx.len() as f64 * train_ratio).round() as usize;
            train.extend_from_slice(&idx[..cut]);
            test.extend_from_slice(&idx[cut..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        self.train_idx = train;
        self.test_idx = test;
    }
}

/// Per-sample noise stream derived from `(seed, sample id)`.
fn sample_rng(seed: u64, id: u64) -> ChaCha8Rng {
    let mixed = seed
        .wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(id.wrapping_mul(0xbf58476d1ce4e5b9))
        .wrapping_add(0x94d049bb133111eb);
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Synthesizes one CIR fingerprint at `pos`. Pure given the rng stream.
pub fn synthesize_cir(
    scene: &Scene,
    pos: &Position,
    id: u64,
    region: Region,
    rng: &mut impl Rng,
) -> Result<CirSample> {
    if !scene.contains(pos) {
        return Err(Error::InvalidScene(format!(
            "position ({}, {}) outside room",
            pos.x, pos.y
        )));
    }
    let nt = scene.n_taps;
    let mut taps = vec![Complex64::new(0.0, 0.0); scene.base_stations.len() * nt];
    let tap_of = |d: f64| -> usize { (d / SPEED_OF_LIGHT * scene.bandwidth).round() as usize };
    // Minimum distance guard: a sample exactly on top of a base station would
    // have unbounded amplitude.
    let min_d = 1e-3;
    for (b, bs) in scene.base_stations.iter().enumerate() {
        // Direct path.
        let d = bs.dist(pos).max(min_d);
        let tap = tap_of(d);
        if tap >= nt {
            return Err(Error::SceneUnderResolved { tap, n_taps: nt });
        }
        let att: f64 = scene
            .obstacles
            .iter()
            .filter(|o| o.rect.intersects_segment(bs, pos))
            .map(|o| o.attenuation)
            .product();
        taps[b * nt + tap] += Complex64::new(att / d, 0.0);
        // First-order wall reflections (image sources), dropped if out of window.
        if scene.wall_reflection > 0.0 {
            for img in scene.wall_images(bs) {
                let di = img.dist(pos).max(min_d);
                let ti = tap_of(di);
                if ti >= nt {
                    continue;
                }
                let ai: f64 = scene
                    .obstacles
                    .iter()
                    .filter(|o| o.rect.intersects_segment(&img, pos))
                    .map(|o| o.attenuation)
                    .product();
                taps[b * nt + ti] += Complex64::new(scene.wall_reflection * ai / di, 0.0);
            }
        }
    }
    if scene.noise_std > 0.0 {
        let normal = Normal::new(0.0, scene.noise_std).expect("positive std");
        for t in &mut taps {
            t.re += normal.sample(rng);
            t.im += normal.sample(rng);
        }
    }
    Ok(CirSample {
        id,
        taps,
        position: *pos,
        region,
    })
}

/// Trajectory model: seeded persistent random walk with reflecting boundaries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WalkConfig {
    pub step: f64,
    /// Std of the per-step heading perturbation (radians).
    pub turn_std: f64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            step: 0.05,
            turn_std: 0.3,
        }
    }
}

/// Labels positions as modified/static after a domain change.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RegionLabeler {
    pub modified: Vec<Rect>,
}

impl RegionLabeler {
    pub fn label(&self, p: &Position) -> Region {
        if self.modified.iter().any(|r| r.contains(p)) {
            Region::Modified
        } else {
            Region::Static
        }
    }
}

/// Generates `k` samples along a seeded random-walk trajectory.
/// Bit-identical datasets for the same `(scene, walk, k, seed)`.
pub fn generate_task(
    scene: &Scene,
    walk: &WalkConfig,
    labeler: &RegionLabeler,
    task_id: usize,
    k: usize,
    seed: u64,
) -> Result<TaskDataset> {
    scene.validate()?;
    if k < 1 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    let mut walk_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos = Position::new(
        walk_rng.gen_range(0.0..scene.width),
        walk_rng.gen_range(0.0..scene.height),
    );
    let mut heading: f64 = walk_rng.gen_range(0.0..std::f64::consts::TAU);
    let turn = Normal::new(0.0, walk.turn_std).expect("positive std");
    let mut samples = Vec::with_capacity(k);
    for id in 0..k as u64 {
        let region = labeler.label(&pos);
        let mut srng = sample_rng(seed, id);
        samples.push(synthesize_cir(scene, &pos, id, region, &mut srng)?);
        // Advance the walk with reflecting boundaries.
        heading += turn.sample(&mut walk_rng);
        let mut nx = pos.x + walk.step * heading.cos();
        let mut ny = pos.y + walk.step * heading.sin();
        if nx < 0.0 || nx > scene.width {
            nx = nx.clamp(0.0, scene.width);
            heading = std::f64::consts::PI - heading;
        }
        if ny < 0.0 || ny > scene.height {
            ny = ny.clamp(0.0, scene.height);
            heading = -heading;
        }
        pos = Position::new(nx, ny);
    }
    Ok(TaskDataset {
        task_id,
        samples,
        train_idx: vec![],
        test_idx: vec![],
        scene_hash: scene.descriptor_hash(),
    })
}

/// One obstacle edit between consecutive domains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ObstacleChange {
    Insert { obstacle: Obstacle },
    Delete { id: u32 },
    Move { id: u32, to: Rect },
}

/// A set of obstacle edits; the modified region is the union of the old and
/// new footprints of every changed obstacle.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainChange {
    pub changes: Vec<ObstacleChange>,
}

/// Applies a change set, returning the successor scene and a labeler that
/// tags positions inside any modified-region rectangle.
pub fn apply_change(scene: &Scene, change: &DomainChange) -> Result<(Scene, RegionLabeler)> {
    let mut next = scene.clone();
    let mut modified = Vec::new();
    for ch in &change.changes {
        match ch {
            ObstacleChange::Insert { obstacle } => {
                if next.obstacles.iter().any(|o| o.id == obstacle.id) {
                    return Err(Error::InvalidChange(format!(
                        "insert of existing obstacle id {}",
                        obstacle.id
                    )));
                }
                modified.push(obstacle.rect);
                next.obstacles.push(obstacle.clone());
            }
            ObstacleChange::Delete { id } => {
                let i = next
                    .obstacles
                    .iter()
                    .position(|o| o.id == *id)
                    .ok_or_else(|| Error::InvalidChange(format!("delete of unknown id {id}")))?;
                modified.push(next.obstacles[i].rect);
                next.obstacles.remove(i);
            }
            ObstacleChange::Move { id, to } => {
                let o = next
                    .obstacles
                    .iter_mut()
                    .find(|o| o.id == *id)
                    .ok_or_else(|| Error::InvalidChange(format!("move of unknown id {id}")))?;
                modified.push(o.rect);
                modified.push(*to);
                o.rect = *to;
            }
        }
    }
    next.validate()?;
    Ok((next, RegionLabeler { modified }))
}

/// Flattens a sample into `[Re h[b][·], Im h[b][·]]` per base station and
/// applies per-sample max-abs normalization to [−1, 1]. All-zero samples are
/// returned as zeros.
pub fn to_features(sample: &CirSample, n_bs: usize, n_taps: usize) -> Vec<f64> {
    debug_assert_eq!(sample.taps.len(), n_bs * n_taps);
    let mut out = Vec::with_capacity(2 * n_bs * n_taps);
    for b in 0..n_bs {
        for n in 0..n_taps {
            out.push(sample.taps[b * n_taps + n].re);
        }
        for n in 0..n_taps {
            out.push(sample.taps[b * n_taps + n].im);
        }
    }
    let max_abs = out.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if max_abs > 0.0 {
        for v in &mut out {
            *v /= max_abs;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Binary dataset file: magic "CIRD", version, dims, then per sample
// id u64 | x f64 | y f64 | region u8 | taps as interleaved re/im f64,
// everything little-endian.
// ---------------------------------------------------------------------------

const DATASET_MAGIC: &[u8; 4] = b"CIRD";
const DATASET_VERSION: u32 = 1;

pub fn write_dataset(path: &std::path::Path, ds: &TaskDataset, n_bs: usize, n_taps: usize) -> Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(DATASET_MAGIC)?;
    f.write_all(&DATASET_VERSION.to_le_bytes())?;
    f.write_all(&(ds.task_id as u64).to_le_bytes())?;
    f.write_all(&(n_bs as u32).to_le_bytes())?;
    f.write_all(&(n_taps as u32).to_le_bytes())?;
    f.write_all(&(ds.samples.len() as u64).to_le_bytes())?;
    let mut hash = [0u8; 32];
    let hex = &ds.scene_hash;
    for i in 0..32 {
        hash[i] = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16)
            .map_err(|_| Error::BadDatasetFile("bad scene hash".into()))?;
    }
    f.write_all(&hash)?;
    for s in &ds.samples {
        f.write_all(&s.id.to_le_bytes())?;
        f.write_all(&s.position.x.to_le_bytes())?;
        f.write_all(&s.position.y.to_le_bytes())?;
        f.write_all(&[match s.region {
            Region::Static => 0u8,
            Region::Modified => 1u8,
        }])?;
        for t in &s.taps {
            f.write_all(&t.re.to_le_bytes())?;
            f.write_all(&t.im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_dataset(path: &std::path::Path) -> Result<(TaskDataset, usize, usize)> {
    use std::io::Read;
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut u32buf = [0u8; 4];
    let mut u64buf = [0u8; 8];
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    if &magic != DATASET_MAGIC {
        return Err(Error::BadDatasetFile("bad magic".into()));
    }
    f.read_exact(&mut u32buf)?;
    if u32::from_le_bytes(u32buf) != DATASET_VERSION {
        return Err(Error::BadDatasetFile("unsupported version".into()));
    }
    f.read_exact(&mut u64buf)?;
    let task_id = u64::from_le_bytes(u64buf) as usize;
    f.read_exact(&mut u32buf)?;
    let n_bs = u32::from_le_bytes(u32buf) as usize;
    f.read_exact(&mut u32buf)?;
    let n_taps = u32::from_le_bytes(u32buf) as usize;
    f.read_exact(&mut u64buf)?;
    let count = u64::from_le_bytes(u64buf) as usize;
    let mut hash = [0u8; 32];
    f.read_exact(&mut hash)?;
    let scene_hash: String = hash.iter().map(|b| format!("{b:02x}")).collect();
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        f.read_exact(&mut u64buf)?;
        let id = u64::from_le_bytes(u64buf);
        f.read_exact(&mut u64buf)?;
        let x = f64::from_le_bytes(u64buf);
        f.read_exact(&mut u64buf)?;
        let y = f64::from_le_bytes(u64buf);
        let mut rb = [0u8; 1];
        f.read_exact(&mut rb)?;
        let region = match rb[0] {
            0 => Region::Static,
            1 => Region::Modified,
            v => return Err(Error::BadDatasetFile(format!("bad region byte {v}"))),
        };
        let mut taps = Vec::with_capacity(n_bs * n_taps);
        for _ in 0..n_bs * n_taps {
            f.read_exact(&mut u64buf)?;
            let re = f64::from_le_bytes(u64buf);
            f.read_exact(&mut u64buf)?;
            let im = f64::from_le_bytes(u64buf);
            taps.push(Complex64::new(re, im));
        }
        samples.push(CirSample {
            id,
            taps,
            position: Position::new(x, y),
            region,
        });
    }
    Ok((
        TaskDataset {
            task_id,
            samples,
            train_idx: vec![],
            test_idx: vec![],
            scene_hash,
        },
        n_bs,
        n_taps,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quiet_scene() -> Scene {
        let mut s = Scene::default_desk();
        s.noise_std = 0.0;
        s.wall_reflection = 0.0;
        s
    }

    #[test]
    fn direct_path_only_single_tap() {
        let scene = quiet_scene();
        let pos = Position::new(7.0, 1.0); // 6 m from BS 0 at (1,1)
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = synthesize_cir(&scene, &pos, 0, Region::Static, &mut rng).unwrap();
        let d = scene.base_stations[0].dist(&pos);
        let tap = (d / SPEED_OF_LIGHT * scene.bandwidth).round() as usize;
        assert_eq!(tap, 2);
        let nt = scene.n_taps;
        let nonzero: Vec<usize> = (0..nt).filter(|&n| s.tap(0, n, nt).norm() > 0.0).collect();
        assert_eq!(nonzero, vec![tap]);
        assert_relative_eq!(s.tap(0, tap, nt).re, 1.0 / d, max_relative = 1e-12);
        assert_eq!(s.tap(0, tap, nt).im, 0.0);
    }

    #[test]
    fn obstacle_attenuates_direct_path() {
        let mut scene = quiet_scene();
        scene.obstacles.push(Obstacle {
            id: 1,
            rect: Rect::new(3.0, 0.5, 4.0, 2.0),
            attenuation: 0.1,
        });
        let pos = Position::new(7.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = synthesize_cir(&scene, &pos, 0, Region::Static, &mut rng).unwrap();
        let d = scene.base_stations[0].dist(&pos);
        let tap = (d / SPEED_OF_LIGHT * scene.bandwidth).round() as usize;
        assert_relative_eq!(s.tap(0, tap, scene.n_taps).re, 0.1 / d, max_relative = 1e-12);
    }

    #[test]
    fn image_sources_match_hand_geometry() {
        // Single BS, rho = 0.5: direct plus four mirror paths, at tap indices
        // and magnitudes computed from the image-source geometry directly.
        let mut scene = quiet_scene();
        scene.wall_reflection = 0.5;
        scene.base_stations = vec![Position::new(4.0, 6.0)];
        let pos = Position::new(14.0, 9.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = synthesize_cir(&scene, &pos, 0, Region::Static, &mut rng).unwrap();
        let nt = scene.n_taps;
        let mut expected = vec![0.0; nt];
        let bs = scene.base_stations[0];
        let sources = [
            (bs, 1.0),
            (Position::new(-bs.x, bs.y), 0.5),
            (Position::new(2.0 * scene.width - bs.x, bs.y), 0.5),
            (Position::new(bs.x, -bs.y), 0.5),
            (Position::new(bs.x, 2.0 * scene.height - bs.y), 0.5),
        ];
        for (src, amp) in sources {
            let d = src.dist(&pos);
            let tap = (d / SPEED_OF_LIGHT * scene.bandwidth).round() as usize;
            expected[tap] += amp / d;
        }
        let nonzero = (0..nt).filter(|&n| expected[n] > 0.0).count();
        assert!(nonzero >= 4, "distinct tap count {nonzero}");
        for n in 0..nt {
            assert_relative_eq!(s.tap(0, n, nt).re, expected[n], max_relative = 1e-12);
        }
    }

    #[test]
    fn under_resolved_scene_rejected() {
        let mut scene = quiet_scene();
        scene.n_taps = 2; // max direct tap in a 20x20 room exceeds 1
        let pos = Position::new(19.0, 19.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            synthesize_cir(&scene, &pos, 0, Region::Static, &mut rng),
            Err(Error::SceneUnderResolved { .. })
        ));
    }

    #[test]
    fn monotone_signal_decay() {
        let mut scene = quiet_scene();
        scene.base_stations = vec![Position::new(1.0, 1.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut prev = f64::INFINITY;
        for i in 1..=10 {
            let pos = Position::new(1.0 + 1.5 * i as f64, 1.0);
            let s = synthesize_cir(&scene, &pos, i as u64, Region::Static, &mut rng).unwrap();
            let mag = s.taps.iter().map(|t| t.norm()).fold(0.0_f64, f64::max);
            assert!(mag < prev, "magnitude did not decay at step {i}");
            prev = mag;
        }
    }

    #[test]
    fn generate_task_deterministic() {
        let scene = Scene::default_desk();
        let walk = WalkConfig::default();
        let lab = RegionLabeler::default();
        let a = generate_task(&scene, &walk, &lab, 0, 50, 123).unwrap();
        let b = generate_task(&scene, &walk, &lab, 0, 50, 123).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = generate_task(&scene, &walk, &lab, 0, 1, 7).unwrap();
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn empty_change_is_identity() {
        let scene = Scene::default_desk();
        let (next, lab) = apply_change(&scene, &DomainChange::default()).unwrap();
        assert_eq!(next, scene);
        assert_eq!(lab.label(&Position::new(5.0, 5.0)), Region::Static);
    }

    #[test]
    fn move_labels_union_of_footprints() {
        let mut scene = Scene::default_desk();
        let r1 = Rect::new(2.0, 2.0, 4.0, 4.0);
        let r2 = Rect::new(10.0, 10.0, 12.0, 12.0);
        scene.obstacles.push(Obstacle {
            id: 1,
            rect: r1,
            attenuation: 0.5,
        });
        let change = DomainChange {
            changes: vec![ObstacleChange::Move { id: 1, to: r2 }],
        };
        let (next, lab) = apply_change(&scene, &change).unwrap();
        assert_eq!(next.obstacles[0].rect, r2);
        assert_eq!(lab.label(&Position::new(3.0, 3.0)), Region::Modified);
        assert_eq!(lab.label(&Position::new(11.0, 11.0)), Region::Modified);
        assert_eq!(lab.label(&Position::new(7.0, 7.0)), Region::Static);
    }

    #[test]
    fn bad_change_rejected() {
        let scene = Scene::default_desk();
        let change = DomainChange {
            changes: vec![ObstacleChange::Delete { id: 99 }],
        };
        assert!(matches!(
            apply_change(&scene, &change),
            Err(Error::InvalidChange(_))
        ));
    }

    #[test]
    fn modified_fraction_matches_area_ratio() {
        // Monte-Carlo area estimate: fraction of walk samples labeled
        // modified should track the modified-region area ratio.
        let mut scene = Scene::default_desk();
        scene.obstacles.push(Obstacle {
            id: 1,
            rect: Rect::new(2.0, 2.0, 6.0, 6.0),
            attenuation: 0.3,
        });
        let change = DomainChange {
            changes: vec![
                ObstacleChange::Move {
                    id: 1,
                    to: Rect::new(12.0, 2.0, 16.0, 6.0),
                },
                ObstacleChange::Insert {
                    obstacle: Obstacle {
                        id: 2,
                        rect: Rect::new(4.0, 12.0, 8.0, 16.0),
                        attenuation: 0.3,
                    },
                },
            ],
        };
        let (next, lab) = apply_change(&scene, &change).unwrap();
        // Area ratio of the union of footprints (all disjoint here).
        let area_ratio = 3.0 * 16.0 / (20.0 * 20.0);
        // Uniform Monte-Carlo positions rather than the walk (the walk is
        // spatially correlated); the labeler is what is under test.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20_000;
        let hits = (0..n)
            .filter(|_| {
                let p = Position::new(rng.gen_range(0.0..next.width), rng.gen_range(0.0..next.height));
                lab.label(&p) == Region::Modified
            })
            .count();
        let frac = hits as f64 / n as f64;
        assert!((frac - area_ratio).abs() < 0.05 * area_ratio.max(0.05) + 0.02,
            "frac {frac} vs area ratio {area_ratio}");
    }

    #[test]
    fn features_layout_and_normalization() {
        let mut s = CirSample {
            id: 0,
            taps: vec![Complex64::new(0.0, 0.0); 2 * 3],
            position: Position::new(0.0, 0.0),
            region: Region::Static,
        };
        // all-zero sample stays zero
        let f = to_features(&s, 2, 3);
        assert_eq!(f, vec![0.0; 12]);
        // single tap 3+4i at b=0, n=0 → 3/4 and 4/4 after max-abs = 4
        s.taps[0] = Complex64::new(3.0, 4.0);
        let f = to_features(&s, 2, 3);
        assert_eq!(f.len(), 12);
        assert_relative_eq!(f[0], 0.75);
        assert_relative_eq!(f[3], 1.0); // first Im slot of bs 0
        assert!(f[1] == 0.0 && f[2] == 0.0 && f[4..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn split_partitions_and_stratifies() {
        let scene = Scene::default_desk();
        let lab = RegionLabeler {
            modified: vec![Rect::new(0.0, 0.0, 20.0, 10.0)],
        };
        let mut ds = generate_task(&scene, &WalkConfig::default(), &lab, 0, 500, 1).unwrap();
        ds.split(0.8, 42);
        let mut all: Vec<usize> = ds.train_idx.iter().chain(&ds.test_idx).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..500).collect::<Vec<_>>());
        // static ∪ modified partition covers the dataset by construction;
        // check both regions appear in both splits when present at all
        let has = |idx: &[usize], r: Region| idx.iter().any(|&i| ds.samples[i].region == r);
        for r in [Region::Static, Region::Modified] {
            if ds.samples.iter().any(|s| s.region == r) && ds.samples.iter().filter(|s| s.region == r).count() >= 5 {
                assert!(has(&ds.train_idx, r) && has(&ds.test_idx, r));
            }
        }
    }

    #[test]
    fn dataset_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let scene = Scene::default_desk();
        let mut ds = generate_task(&scene, &WalkConfig::default(), &RegionLabeler::default(), 3, 20, 9).unwrap();
        ds.split(0.8, 1);
        let path = dir.path().join("t.cird");
        write_dataset(&path, &ds, scene.base_stations.len(), scene.n_taps).unwrap();
        let (back, n_bs, n_taps) = read_dataset(&path).unwrap();
        assert_eq!(n_bs, 6);
        assert_eq!(n_taps, 64);
        assert_eq!(back.samples, ds.samples);
        assert_eq!(back.scene_hash, ds.scene_hash);
    }
}
