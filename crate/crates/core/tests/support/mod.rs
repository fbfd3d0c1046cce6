//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use aerotraffic_core::rng::XorShift64Star;
use aerotraffic_core::{BBox, BinaryMask, GrayFrame, MixtureParams};

/// One Gaussian of the reference mixture.
#[derive(Debug, Clone, Copy)]
pub struct Gauss {
    pub weight: f64,
    pub mean: f64,
    pub var: f64,
}

/// Single-pixel mixture written straight from the update rules, with no
/// shared code or layout with the library model.
#[derive(Debug, Clone)]
pub struct PixelOracle {
    pub p: MixtureParams,
    pub comps: Vec<Gauss>,
}

impl PixelOracle {
    pub fn new(p: MixtureParams, first: u8) -> Self {
        PixelOracle {
            p,
            comps: vec![Gauss {
                weight: 1.0,
                mean: first as f64,
                var: p.initial_variance,
            }],
        }
    }

    /// Update with `x`, then report whether it is foreground at `threshold`.
    pub fn step(&mut self, x: u8, threshold: f64) -> bool {
        let x = x as f64;
        let a = self.p.learning_rate;
        let owner = self
            .comps
            .iter()
            .position(|g| (x - g.mean) * (x - g.mean) / g.var < self.p.match_threshold_sq);
        match owner {
            Some(o) => {
                let d2 = (x - self.comps[o].mean) * (x - self.comps[o].mean);
                for (i, g) in self.comps.iter_mut().enumerate() {
                    let target = if i == o { 1.0 } else { 0.0 };
                    g.weight += a * (target - g.weight);
                }
                self.renormalize();
                let g = &mut self.comps[o];
                let rho = a / g.weight;
                g.mean += rho * (x - g.mean);
                g.var = (g.var + rho * (d2 - g.var)).max(self.p.min_variance);
            }
            None => {
                for g in &mut self.comps {
                    g.weight += a * (0.0 - g.weight);
                }
                let fresh = Gauss {
                    weight: a,
                    mean: x,
                    var: self.p.initial_variance,
                };
                if self.comps.len() < self.p.max_components {
                    self.comps.push(fresh);
                } else {
                    *self.comps.last_mut().unwrap() = fresh;
                }
                self.renormalize();
            }
        }
        // std's sort is stable, so equal weights keep their order
        self.comps
            .sort_by(|l, r| r.weight.partial_cmp(&l.weight).unwrap());
        !self.is_background(x, threshold)
    }

    pub fn classify(&self, x: u8, threshold: f64) -> bool {
        !self.is_background(x as f64, threshold)
    }

    fn is_background(&self, x: f64, threshold: f64) -> bool {
        let mut acc = 0.0;
        for g in &self.comps {
            if (x - g.mean) * (x - g.mean) / g.var < threshold {
                return true;
            }
            acc += g.weight;
            if acc > self.p.background_ratio {
                return false;
            }
        }
        false
    }

    fn renormalize(&mut self) {
        let total: f64 = self.comps.iter().map(|g| g.weight).sum();
        for g in &mut self.comps {
            g.weight /= total;
        }
    }
}

/// Per-pixel intensity streams laid out as frames: a noisy background
/// level with occasional lighting shifts and transient foreground objects.
pub fn random_streams(width: usize, height: usize, frames: usize, seed: u64) -> Vec<GrayFrame> {
    struct Stream {
        level: f64,
        sigma: f64,
        object: Option<(f64, usize)>,
    }
    let mut rng = XorShift64Star::new(seed);
    let mut streams: Vec<Stream> = (0..width * height)
        .map(|_| Stream {
            level: 20.0 + 215.0 * rng.next_f64(),
            sigma: 0.5 + 8.0 * rng.next_f64(),
            object: None,
        })
        .collect();
    let mut out = Vec::with_capacity(frames);
    for _ in 0..frames {
        let mut px = Vec::with_capacity(width * height);
        for s in &mut streams {
            if rng.below(1000) < 3 {
                s.level = (s.level + 40.0 * (rng.next_f64() - 0.5)).clamp(0.0, 255.0);
            }
            match &mut s.object {
                Some((_, left)) if *left == 0 => s.object = None,
                Some((_, left)) => *left -= 1,
                None if rng.below(100) < 2 => {
                    let value = 255.0 * rng.next_f64();
                    s.object = Some((value, 1 + rng.below(40) as usize));
                }
                None => {}
            }
            let v = match s.object {
                Some((value, _)) => value,
                None => s.level + s.sigma * rng.normal(),
            };
            px.push(v.round().clamp(0.0, 255.0) as u8);
        }
        out.push(GrayFrame::new(width, height, px).unwrap());
    }
    out
}

pub fn random_mask(rng: &mut XorShift64Star, width: usize, height: usize, density: f64) -> BinaryMask {
    BinaryMask::from_fn(width, height, |_, _| rng.next_f64() < density)
}

/// Morphology by definition: every pixel checks its full window.
pub fn brute_morph(mask: &BinaryMask, rx: usize, ry: usize, erode: bool) -> BinaryMask {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        let mut all = true;
        let mut any = false;
        for dy in -(ry as i64)..=ry as i64 {
            for dx in -(rx as i64)..=rx as i64 {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                let v = nx >= 0 && ny >= 0 && nx < w && ny < h && mask.get(nx as usize, ny as usize);
                all &= v;
                any |= v;
            }
        }
        if erode {
            all
        } else {
            any
        }
    })
}

/// Component label per pixel (0 = background) from repeated relaxation
/// of 8-neighbor minimum labels until nothing changes.
pub fn brute_labels(mask: &BinaryMask) -> Vec<usize> {
    let (w, h) = (mask.width(), mask.height());
    let mut lab: Vec<usize> = (0..w * h)
        .map(|i| if mask.bits()[i] != 0 { i + 1 } else { 0 })
        .collect();
    loop {
        let mut changed = false;
        for y in 0..h {
            for x in 0..w {
                if lab[y * w + x] == 0 {
                    continue;
                }
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let n = lab[ny as usize * w + nx as usize];
                        if n != 0 && n < lab[y * w + x] {
                            lab[y * w + x] = n;
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            return lab;
        }
    }
}

/// Largest number of one-to-one pairs with IoU at or above `iou_min`.
pub fn optimal_matches(dets: &[BBox], gts: &[BBox], iou_min: f64) -> usize {
    fn go(i: usize, dets: &[BBox], gts: &[BBox], used: &mut Vec<bool>, iou_min: f64) -> usize {
        if i == dets.len() {
            return 0;
        }
        let mut best = go(i + 1, dets, gts, used, iou_min);
        for j in 0..gts.len() {
            if !used[j] && aerotraffic_core::iou(&dets[i], &gts[j]) >= iou_min {
                used[j] = true;
                best = best.max(1 + go(i + 1, dets, gts, used, iou_min));
                used[j] = false;
            }
        }
        best
    }
    go(0, dets, gts, &mut vec![false; gts.len()], iou_min)
}

/// Two-lane strip with a single pair of same-direction vehicles that stay
/// in view over the whole sampling window, plus one vehicle going the
/// other way. Used to measure what merging the pair costs in recall.
pub fn pair_scene() -> aerotraffic_core::SceneConfig {
    let frame_count = 750;
    use aerotraffic_core::synth::{Background, BandModel, VehicleSpec};
    use aerotraffic_core::Polygon;
    let vehicle = |direction: &str, x: i64, y: i64, speed: i64, intensity: u8| VehicleSpec {
        entry_frame: 150,
        direction: direction.into(),
        x,
        y,
        speed,
        width: 40,
        height: 16,
        intensity,
        exit_frame: Some(frame_count - 1),
    };
    let mut polys = std::collections::BTreeMap::new();
    polys.insert("north".to_string(), Polygon::rect(0.0, 0.0, 640.0, 100.0));
    polys.insert("south".to_string(), Polygon::rect(0.0, 100.0, 640.0, 160.0));
    aerotraffic_core::SceneConfig {
        width: 640,
        height: 160,
        frame_count,
        seed: 77,
        background: Background::Flat { intensity: 90 },
        vehicles: vec![
            vehicle("south", 0, 104, 1, 230),
            vehicle("south", 0, 136, 1, 5),
            vehicle("north", 600, 72, -1, 200),
        ],
        band_model: BandModel::rgb_like(),
        cutoff_fraction: 0.4,
        direction_polygons: polys,
        frame_rate: None,
    }
}
