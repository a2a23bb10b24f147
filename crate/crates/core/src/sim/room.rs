//! Rectangular-room impulse responses by the image-source method.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::SimError;

pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;
const MAX_DEFAULT_ORDER: u32 = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    /// (Lx, Ly, Lz) in meters.
    pub dims: [f64; 3],
    pub source_pos: [f64; 3],
    pub mic_pos: [f64; 3],
    /// Reverberation time in seconds.
    pub t60: f64,
    pub max_reflection_order: u32,
    pub speed_of_sound: f64,
}

impl RoomSpec {
    /// Builds a room whose reflection order follows the default policy
    /// `ceil(t60 * c / min_dim)`, capped at 60.
    pub fn new(dims: [f64; 3], source_pos: [f64; 3], mic_pos: [f64; 3], t60: f64) -> Self {
        Self {
            dims,
            source_pos,
            mic_pos,
            t60,
            max_reflection_order: default_max_order(dims, t60, DEFAULT_SPEED_OF_SOUND),
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
        }
    }

    pub fn volume(&self) -> f64 {
        self.dims.iter().product()
    }

    pub fn surface_area(&self) -> f64 {
        let [x, y, z] = self.dims;
        2.0 * (x * y + x * z + y * z)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.dims.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(SimError::InvalidGeometry(format!(
                "room dimensions must be positive, got {:?}",
                self.dims
            )));
        }
        for (name, p) in [("source", &self.source_pos), ("mic", &self.mic_pos)] {
            for axis in 0..3 {
                if !(p[axis] > 0.0 && p[axis] < self.dims[axis]) {
                    return Err(SimError::InvalidGeometry(format!(
                        "{name} position {p:?} is not strictly inside room {:?}",
                        self.dims
                    )));
                }
            }
        }
        if !(self.t60 > 0.0) {
            return Err(SimError::InvalidGeometry(format!(
                "t60 must be positive, got {}",
                self.t60
            )));
        }
        if !(self.speed_of_sound > 0.0) {
            return Err(SimError::InvalidGeometry("speed of sound must be positive".into()));
        }
        Ok(())
    }
}

pub fn default_max_order(dims: [f64; 3], t60: f64, speed_of_sound: f64) -> u32 {
    let min_dim = dims.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min_dim > 0.0) || !(t60 > 0.0) {
        return 0;
    }
    let order = (t60 * speed_of_sound / min_dim).ceil();
    if order >= MAX_DEFAULT_ORDER as f64 {
        MAX_DEFAULT_ORDER
    } else {
        order as u32
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    taps: Vec<f64>,
    sample_rate: u32,
}

impl ImpulseResponse {
    pub fn new(taps: Vec<f64>, sample_rate: u32) -> Result<Self, SimError> {
        if taps.is_empty() {
            return Err(SimError::InvalidImpulseResponse("no taps".into()));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(SimError::InvalidImpulseResponse("non-finite tap".into()));
        }
        if sample_rate == 0 {
            return Err(SimError::InvalidImpulseResponse("zero sample rate".into()));
        }
        Ok(Self { taps, sample_rate })
    }

    /// A single unit tap at `delay`.
    pub fn unit_impulse(delay: usize, sample_rate: u32) -> Self {
        let mut taps = vec![0.0; delay + 1];
        taps[delay] = 1.0;
        Self { taps, sample_rate }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }
}

/// Uniform wall reflection coefficient from Eyring's reverberation formula.
///
/// `alpha = 1 - exp(-0.161 V / (S T60))`, `beta = sqrt(1 - alpha)`.
pub fn derive_reflection_coeff(room: &RoomSpec) -> Result<f64, SimError> {
    if room.dims.iter().any(|&d| !(d > 0.0)) {
        return Err(SimError::InvalidGeometry(format!(
            "room dimensions must be positive, got {:?}",
            room.dims
        )));
    }
    if !(room.t60 > 0.0) {
        return Err(SimError::InvalidGeometry(format!(
            "t60 must be positive, got {}",
            room.t60
        )));
    }
    let alpha = eyring_absorption(room.volume(), room.surface_area(), room.t60);
    Ok((1.0 - alpha).sqrt())
}

pub fn eyring_absorption(volume: f64, surface: f64, t60: f64) -> f64 {
    1.0 - (-0.161 * volume / (surface * t60)).exp()
}

/// One mirror image of the source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSource {
    pub position: [f64; 3],
    pub order: u32,
}

/// Per-axis image coordinates with their reflection counts, for orders `0..=max_order`.
///
/// An image along one axis is `(1 - 2q) s + 2 n L` with `q ∈ {0, 1}` and
/// `n ∈ Z`; it has undergone `|n - q| + |n|` reflections on that axis.
fn axis_images(src: f64, len: f64, max_order: u32) -> Vec<(f64, u32)> {
    let mut out = Vec::with_capacity(2 * max_order as usize + 1);
    out.push((src, 0));
    for o in 1..=max_order as i64 {
        if o % 2 == 0 {
            let n = o / 2;
            out.push((src + 2.0 * n as f64 * len, o as u32));
            out.push((src - 2.0 * n as f64 * len, o as u32));
        } else {
            let hi = (o + 1) / 2;
            let lo = (1 - o) / 2;
            out.push((-src + 2.0 * hi as f64 * len, o as u32));
            out.push((-src + 2.0 * lo as f64 * len, o as u32));
        }
    }
    out
}

/// All image sources with total reflection order `<= max_order`.
pub fn image_sources(room: &RoomSpec) -> Vec<ImageSource> {
    let r = room.max_reflection_order;
    let xs = axis_images(room.source_pos[0], room.dims[0], r);
    let ys = axis_images(room.source_pos[1], room.dims[1], r);
    let zs = axis_images(room.source_pos[2], room.dims[2], r);
    let mut out = Vec::new();
    for &(x, ox) in &xs {
        for &(y, oy) in ys.iter().take_while(|(_, oy)| ox + oy <= r) {
            for &(z, oz) in zs.iter().take_while(|(_, oz)| ox + oy + oz <= r) {
                out.push(ImageSource {
                    position: [x, y, z],
                    order: ox + oy + oz,
                });
            }
        }
    }
    out
}

/// Simulates the room impulse response from source to microphone.
///
/// Each image of order `r` at distance `d` adds `beta^r / (4 pi d)` at sample
/// `round(fs d / c)`. The response spans up to the latest image arrival.
pub fn simulate_rir(room: &RoomSpec, beta: f64, sample_rate: u32) -> Result<ImpulseResponse, SimError> {
    simulate_rir_limited(room, beta, sample_rate, None)
}

/// As [`simulate_rir`], but drops every image arriving at or after `max_taps`
/// samples. Used when the response will be truncated anyway.
pub fn simulate_rir_limited(
    room: &RoomSpec,
    beta: f64,
    sample_rate: u32,
    max_taps: Option<usize>,
) -> Result<ImpulseResponse, SimError> {
    room.validate()?;
    if !(0.0..=1.0).contains(&beta) {
        return Err(SimError::InvalidGeometry(format!(
            "reflection coefficient {beta} outside [0, 1]"
        )));
    }
    if sample_rate == 0 {
        return Err(SimError::InvalidImpulseResponse("zero sample rate".into()));
    }
    let direct = distance(&room.source_pos, &room.mic_pos);
    if direct == 0.0 {
        return Err(SimError::SingularGeometry);
    }

    let fs = sample_rate as f64;
    let c = room.speed_of_sound;
    let r = room.max_reflection_order;
    let [mx, my, mz] = room.mic_pos;
    let max_d2 = max_taps.map(|n| {
        // Any image with round(fs d / c) >= n satisfies d >= (n - 0.5) c / fs.
        let d = (n as f64 - 0.5) * c / fs;
        d * d
    });

    let xs = axis_images(room.source_pos[0], room.dims[0], r);
    let ys = axis_images(room.source_pos[1], room.dims[1], r);
    let zs = axis_images(room.source_pos[2], room.dims[2], r);
    let pows: Vec<f64> = (0..=r as i32).map(|o| beta.powi(o)).collect();

    let mut taps: Vec<f64> = Vec::new();
    for &(x, ox) in &xs {
        let dx2 = (x - mx) * (x - mx);
        if max_d2.is_some_and(|m| dx2 >= m) {
            continue;
        }
        for &(y, oy) in ys.iter().take_while(|(_, oy)| ox + oy <= r) {
            let dxy2 = dx2 + (y - my) * (y - my);
            if max_d2.is_some_and(|m| dxy2 >= m) {
                continue;
            }
            for &(z, oz) in zs.iter().take_while(|(_, oz)| ox + oy + oz <= r) {
                let order = (ox + oy + oz) as usize;
                let amp = pows[order];
                if amp == 0.0 && order > 0 {
                    continue;
                }
                let d = (dxy2 + (z - mz) * (z - mz)).sqrt();
                let idx = (fs * d / c).round() as usize;
                if max_taps.is_some_and(|n| idx >= n) {
                    continue;
                }
                if idx >= taps.len() {
                    taps.resize(idx + 1, 0.0);
                }
                taps[idx] += amp / (4.0 * PI * d);
            }
        }
    }
    if taps.is_empty() {
        taps.push(0.0);
    }
    ImpulseResponse::new(taps, sample_rate)
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Reverberation time measured from the Schroeder backward-integrated energy
/// decay curve: a least-squares line is fitted between -5 dB and -25 dB and
/// extrapolated to -60 dB. Returns `None` if the curve never reaches -25 dB.
pub fn schroeder_t60(ir: &ImpulseResponse) -> Option<f64> {
    let taps = ir.taps();
    let mut edc = vec![0.0; taps.len()];
    let mut acc = 0.0;
    for i in (0..taps.len()).rev() {
        acc += taps[i] * taps[i];
        edc[i] = acc;
    }
    let total = edc[0];
    if !(total > 0.0) {
        return None;
    }
    let (hi, lo) = (-5.0, -25.0);
    let fs = ir.sample_rate() as f64;
    let pts: Vec<(f64, f64)> = edc
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > 0.0)
        .map(|(i, &e)| (i as f64 / fs, 10.0 * (e / total).log10()))
        .filter(|&(_, db)| db <= hi && db >= lo)
        .collect();
    if pts.len() < 2 || !edc.iter().any(|&e| 10.0 * (e / total).log10() < lo) {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let md = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - md)).sum();
    let var: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    let slope = cov / var;
    if !(slope < 0.0) {
        return None;
    }
    Some(-60.0 / slope)
}
