//! Adaptive per-pixel Gaussian-mixture background model.
//!
//! Each pixel keeps up to `max_components` Gaussians (weight, mean,
//! variance) sorted by descending weight. For every new sample `x`:
//!
//! 1. the first component with `|x - μ|² / σ² < match_threshold_sq` owns it;
//! 2. weights move toward ownership, `w ← w + α (o - w)`;
//! 3. the owner's mean and variance follow with rate `α / w`
//!    (variance floored at `min_variance`);
//! 4. with no owner a new component `(x, initial_variance, α)` is added,
//!    replacing the lightest one once the pixel is full;
//! 5. weights are renormalized and re-sorted.
//!
//! The background set is the shortest weight-ordered prefix whose
//! cumulative weight exceeds `background_ratio`. A pixel is background
//! when its squared Mahalanobis distance to some component in that set is
//! below `classify_threshold_sq`. Color models use one shared variance per
//! component and sum squared differences over channels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{GrayFrame, RgbFrame};
use crate::geometry::Band;
use crate::maskops::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixtureParams {
    pub max_components: usize,
    /// Squared Mahalanobis distance below which a component owns a sample.
    pub match_threshold_sq: f64,
    /// Squared Mahalanobis distance below which a sample is background.
    pub classify_threshold_sq: f64,
    pub learning_rate: f64,
    pub background_ratio: f64,
    pub initial_variance: f64,
    pub min_variance: f64,
    /// Frames before detections are considered settled.
    pub warmup_frames: usize,
}

/// Background-classification threshold for the visible band.
pub const RGB_CLASSIFY_THRESHOLD_SQ: f64 = 16.0;
/// Thermal imagery is noisier; its default threshold is higher.
pub const IR_CLASSIFY_THRESHOLD_SQ: f64 = 36.0;

impl Default for MixtureParams {
    fn default() -> Self {
        MixtureParams {
            max_components: 5,
            match_threshold_sq: 9.0,
            classify_threshold_sq: RGB_CLASSIFY_THRESHOLD_SQ,
            learning_rate: 1.0 / 500.0,
            background_ratio: 0.9,
            initial_variance: 225.0,
            min_variance: 4.0,
            warmup_frames: 200,
        }
    }
}

impl MixtureParams {
    pub fn for_band(band: Band) -> Self {
        MixtureParams {
            classify_threshold_sq: default_classify_threshold(band),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_components == 0 || self.max_components > u8::MAX as usize {
            return Err(Error::invalid("max_components", "must be in 1..=255"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::invalid("learning_rate", "must be in (0, 1]"));
        }
        if !(self.background_ratio > 0.0 && self.background_ratio < 1.0) {
            return Err(Error::invalid("background_ratio", "must be in (0, 1)"));
        }
        if !(self.min_variance > 0.0) {
            return Err(Error::invalid("min_variance", "must be > 0"));
        }
        if !(self.initial_variance >= self.min_variance) {
            return Err(Error::invalid("initial_variance", "must be >= min_variance"));
        }
        if !(self.classify_threshold_sq > 0.0) {
            return Err(Error::invalid("classify_threshold_sq", "must be > 0"));
        }
        if !(self.match_threshold_sq > 0.0) {
            return Err(Error::invalid("match_threshold_sq", "must be > 0"));
        }
        Ok(())
    }
}

pub fn default_classify_threshold(band: Band) -> f64 {
    match band {
        Band::Rgb => RGB_CLASSIFY_THRESHOLD_SQ,
        Band::Ir => IR_CLASSIFY_THRESHOLD_SQ,
    }
}

/// Snapshot of one Gaussian, for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub variance: f64,
}

/// Per-pixel mixture state for a whole frame.
#[derive(Debug, Clone)]
pub struct MixtureModel {
    params: MixtureParams,
    width: usize,
    height: usize,
    channels: usize,
    // pixel-major, K slots per pixel; means hold K * channels per pixel
    weights: Vec<f64>,
    variances: Vec<f64>,
    means: Vec<f64>,
    counts: Vec<u8>,
    frame_count: u64,
}

/// Seed a model from `first_frame`: one component per pixel at its value.
pub fn init_model(
    params: MixtureParams,
    width: usize,
    height: usize,
    first_frame: &GrayFrame,
) -> Result<MixtureModel> {
    if first_frame.width() != width || first_frame.height() != height {
        return Err(Error::DimensionMismatch {
            expected_width: width,
            expected_height: height,
            width: first_frame.width(),
            height: first_frame.height(),
        });
    }
    MixtureModel::new(params, first_frame)
}

impl MixtureModel {
    pub fn new(params: MixtureParams, first_frame: &GrayFrame) -> Result<Self> {
        Self::seed(params, first_frame.width(), first_frame.height(), 1, first_frame.pixels())
    }

    /// Three-channel model over an RGB frame.
    pub fn new_rgb(params: MixtureParams, first_frame: &RgbFrame) -> Result<Self> {
        Self::seed(params, first_frame.width(), first_frame.height(), 3, first_frame.pixels())
    }

    fn seed(
        params: MixtureParams,
        width: usize,
        height: usize,
        channels: usize,
        pixels: &[u8],
    ) -> Result<Self> {
        params.validate()?;
        if width == 0 || height == 0 {
            return Err(Error::invalid("frame", "dimensions must be > 0"));
        }
        let n = width * height;
        let k = params.max_components;
        let mut weights = vec![0.0; n * k];
        let mut variances = vec![0.0; n * k];
        let mut means = vec![0.0; n * k * channels];
        for p in 0..n {
            weights[p * k] = 1.0;
            variances[p * k] = params.initial_variance;
            for c in 0..channels {
                means[p * k * channels + c] = pixels[p * channels + c] as f64;
            }
        }
        Ok(MixtureModel {
            params,
            width,
            height,
            channels,
            weights,
            variances,
            means,
            counts: vec![1; n],
            frame_count: 1,
        })
    }

    pub fn params(&self) -> &MixtureParams {
        &self.params
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Frames absorbed so far, counting the seed frame.
    pub fn frame_count(&self) -> u64 {
        self.frame_count
    }

    /// Components of pixel `(x, y)` in descending weight order.
    pub fn components(&self, x: usize, y: usize) -> Vec<Component> {
        let p = y * self.width + x;
        let k = self.params.max_components;
        let c = self.channels;
        (0..self.counts[p] as usize)
            .map(|i| Component {
                weight: self.weights[p * k + i],
                variance: self.variances[p * k + i],
                mean: self.means[(p * k + i) * c..(p * k + i + 1) * c].to_vec(),
            })
            .collect()
    }

    fn check_dims(&self, width: usize, height: usize, channels: usize) -> Result<()> {
        if width != self.width || height != self.height {
            return Err(Error::DimensionMismatch {
                expected_width: self.width,
                expected_height: self.height,
                width,
                height,
            });
        }
        if channels != self.channels {
            return Err(Error::invalid(
                "frame",
                format!("{channels}-channel frame for a {}-channel model", self.channels),
            ));
        }
        Ok(())
    }

    /// Update with `frame` and return its foreground mask (1 = foreground).
    pub fn apply(&mut self, frame: &GrayFrame) -> Result<BinaryMask> {
        self.check_dims(frame.width(), frame.height(), 1)?;
        let t = self.params.classify_threshold_sq;
        Ok(self.run::<1>(frame.pixels(), true, t, false))
    }

    /// Same result as [`apply`](Self::apply), split across row bands on the rayon pool.
    pub fn apply_parallel(&mut self, frame: &GrayFrame) -> Result<BinaryMask> {
        self.check_dims(frame.width(), frame.height(), 1)?;
        let t = self.params.classify_threshold_sq;
        Ok(self.run::<1>(frame.pixels(), true, t, true))
    }

    pub fn apply_rgb(&mut self, frame: &RgbFrame) -> Result<BinaryMask> {
        self.check_dims(frame.width(), frame.height(), 3)?;
        let t = self.params.classify_threshold_sq;
        Ok(self.run::<3>(frame.pixels(), true, t, false))
    }

    /// Classify `frame` against the current state without updating it.
    pub fn classify(&self, frame: &GrayFrame, classify_threshold_sq: f64) -> Result<BinaryMask> {
        self.check_dims(frame.width(), frame.height(), 1)?;
        Ok(self.classify_only::<1>(frame.pixels(), classify_threshold_sq))
    }

    pub fn classify_rgb(&self, frame: &RgbFrame, classify_threshold_sq: f64) -> Result<BinaryMask> {
        self.check_dims(frame.width(), frame.height(), 3)?;
        Ok(self.classify_only::<3>(frame.pixels(), classify_threshold_sq))
    }

    /// Mean of each pixel's heaviest component, luma-weighted for color models.
    pub fn background_image(&self) -> GrayFrame {
        let k = self.params.max_components;
        let c = self.channels;
        let pixels = (0..self.width * self.height)
            .map(|p| {
                let m = &self.means[p * k * c..p * k * c + c];
                let v = if c == 3 {
                    0.299 * m[0] + 0.587 * m[1] + 0.114 * m[2]
                } else {
                    m[0]
                };
                v.round().clamp(0.0, 255.0) as u8
            })
            .collect();
        GrayFrame::new(self.width, self.height, pixels).expect("dimensions match")
    }

    fn run<const C: usize>(
        &mut self,
        pixels: &[u8],
        update: bool,
        threshold: f64,
        parallel: bool,
    ) -> BinaryMask {
        let params = self.params;
        let k = params.max_components;
        let mut mask = BinaryMask::new(self.width, self.height);
        if parallel {
            let rows = (self.height / rayon::current_num_threads().max(1) / 4).max(1);
            let band = rows * self.width;
            self.weights
                .par_chunks_mut(band * k)
                .zip(self.variances.par_chunks_mut(band * k))
                .zip(self.means.par_chunks_mut(band * k * C))
                .zip(self.counts.par_chunks_mut(band))
                .zip(mask.bits_mut().par_chunks_mut(band))
                .zip(pixels.par_chunks(band * C))
                .for_each(|(((((w, v), m), n), out), px)| {
                    let mut state = PixelsMut { w, v, m, n };
                    process_band::<C>(&params, &mut state, px, out, update, threshold);
                });
        } else {
            let mut state = PixelsMut {
                w: &mut self.weights,
                v: &mut self.variances,
                m: &mut self.means,
                n: &mut self.counts,
            };
            process_band::<C>(&params, &mut state, pixels, mask.bits_mut(), update, threshold);
        }
        if update {
            self.frame_count += 1;
        }
        mask
    }

    fn classify_only<const C: usize>(&self, pixels: &[u8], threshold: f64) -> BinaryMask {
        let k = self.params.max_components;
        let mut mask = BinaryMask::new(self.width, self.height);
        for (p, out) in mask.bits_mut().iter_mut().enumerate() {
            let mut x = [0.0; C];
            for c in 0..C {
                x[c] = pixels[p * C + c] as f64;
            }
            let n = self.counts[p] as usize;
            let bg = is_background::<C>(
                &self.params,
                &self.weights[p * k..p * k + n],
                &self.variances[p * k..p * k + n],
                &self.means[p * k * C..(p * k + n) * C],
                &x,
                threshold,
            );
            *out = (!bg) as u8;
        }
        mask
    }
}

struct PixelsMut<'a> {
    w: &'a mut [f64],
    v: &'a mut [f64],
    m: &'a mut [f64],
    n: &'a mut [u8],
}

fn process_band<const C: usize>(
    params: &MixtureParams,
    state: &mut PixelsMut<'_>,
    pixels: &[u8],
    out: &mut [u8],
    update: bool,
    threshold: f64,
) {
    let k = params.max_components;
    for (p, bit) in out.iter_mut().enumerate() {
        let mut x = [0.0; C];
        for c in 0..C {
            x[c] = pixels[p * C + c] as f64;
        }
        let w = &mut state.w[p * k..(p + 1) * k];
        let v = &mut state.v[p * k..(p + 1) * k];
        let m = &mut state.m[p * k * C..(p + 1) * k * C];
        let n = &mut state.n[p];
        if update {
            update_pixel::<C>(params, w, v, m, n, &x);
        }
        let used = *n as usize;
        let bg = is_background::<C>(params, &w[..used], &v[..used], &m[..used * C], &x, threshold);
        *bit = (!bg) as u8;
    }
}

#[inline]
fn dist_sq<const C: usize>(mean: &[f64], x: &[f64; C]) -> f64 {
    let mut d = 0.0;
    for c in 0..C {
        let e = x[c] - mean[c];
        d += e * e;
    }
    d
}

#[inline]
fn update_pixel<const C: usize>(
    params: &MixtureParams,
    w: &mut [f64],
    v: &mut [f64],
    m: &mut [f64],
    n: &mut u8,
    x: &[f64; C],
) {
    let alpha = params.learning_rate;
    let used = *n as usize;

    let owner = (0..used).find_map(|i| {
        let d2 = dist_sq::<C>(&m[i * C..(i + 1) * C], x);
        (d2 / v[i] < params.match_threshold_sq).then_some((i, d2))
    });

    match owner {
        Some((o, d2)) => {
            for (i, wi) in w[..used].iter_mut().enumerate() {
                let own = if i == o { 1.0 } else { 0.0 };
                *wi += alpha * (own - *wi);
            }
            normalize(&mut w[..used]);
            let rho = alpha / w[o];
            for c in 0..C {
                let mc = &mut m[o * C + c];
                *mc += rho * (x[c] - *mc);
            }
            v[o] = (v[o] + rho * (d2 - v[o])).max(params.min_variance);
        }
        None => {
            for wi in w[..used].iter_mut() {
                *wi += alpha * (0.0 - *wi);
            }
            // sorted, so the lightest component is the last one
            let slot = if used < params.max_components {
                *n += 1;
                used
            } else {
                used - 1
            };
            w[slot] = alpha;
            v[slot] = params.initial_variance;
            m[slot * C..(slot + 1) * C].copy_from_slice(x);
            normalize(&mut w[..*n as usize]);
        }
    }

    sort_desc::<C>(&mut w[..*n as usize], v, m);
}

#[inline]
fn normalize(w: &mut [f64]) {
    let sum: f64 = w.iter().sum();
    for wi in w {
        *wi /= sum;
    }
}

// Stable insertion sort by descending weight, carrying variances and means.
#[inline]
fn sort_desc<const C: usize>(w: &mut [f64], v: &mut [f64], m: &mut [f64]) {
    for i in 1..w.len() {
        let mut j = i;
        while j > 0 && w[j] > w[j - 1] {
            w.swap(j, j - 1);
            v.swap(j, j - 1);
            for c in 0..C {
                m.swap(j * C + c, (j - 1) * C + c);
            }
            j -= 1;
        }
    }
}

#[inline]
fn is_background<const C: usize>(
    params: &MixtureParams,
    w: &[f64],
    v: &[f64],
    m: &[f64],
    x: &[f64; C],
    threshold: f64,
) -> bool {
    let mut cumulative = 0.0;
    for i in 0..w.len() {
        if dist_sq::<C>(&m[i * C..(i + 1) * C], x) / v[i] < threshold {
            return true;
        }
        cumulative += w[i];
        if cumulative > params.background_ratio {
            break;
        }
    }
    false
}
