//! Height maps, strip averaging into 1D pile-up curves, and the hand-crafted
//! pile-up, force and hardness features.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ProfileError>;

/// Surface heights on a regular grid, row-major (`heights[iy * nx + ix]`),
/// zero at the unindented surface. Lengths in micrometres.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    pub nx: usize,
    pub ny: usize,
    pub heights: Vec<f64>,
    pub pitch: f64,
    /// Imprint center in pixel coordinates.
    pub center: (f64, f64),
    /// Indentation lateral length used to normalise distances and heights.
    pub lateral_length: f64,
}

const MAGIC: &[u8; 4] = b"IMPR";
const HEADER_LEN: usize = 4 + 4 + 4 + 8 * 4;

impl HeightMap {
    pub fn new(
        nx: usize,
        ny: usize,
        heights: Vec<f64>,
        pitch: f64,
        center: (f64, f64),
        lateral_length: f64,
    ) -> Result<Self> {
        let map = Self {
            nx,
            ny,
            heights,
            pitch,
            center,
            lateral_length,
        };
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 16 || self.ny < 16 {
            return Err(ProfileError::Input(format!(
                "map is {}x{}, need at least 16x16",
                self.nx, self.ny
            )));
        }
        if self.heights.len() != self.nx * self.ny {
            return Err(ProfileError::Input(format!(
                "expected {} heights, got {}",
                self.nx * self.ny,
                self.heights.len()
            )));
        }
        if !(self.pitch > 0.0) || !(self.lateral_length > 0.0) {
            return Err(ProfileError::Input("pitch and lateral length must be positive".into()));
        }
        if self.heights.iter().any(|h| !h.is_finite()) {
            return Err(ProfileError::Input("heights must be finite".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.heights[iy * self.nx + ix]
    }

    /// Little-endian binary: magic, u32 nx, u32 ny, f64 pitch, f64 a,
    /// f64 cx, f64 cy, then the heights row-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.heights.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.nx as u32).to_le_bytes());
        out.extend_from_slice(&(self.ny as u32).to_le_bytes());
        for v in [self.pitch, self.lateral_length, self.center.0, self.center.1] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for h in &self.heights {
            out.extend_from_slice(&h.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(ProfileError::Format("file shorter than header".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(ProfileError::Format("bad magic bytes (expected IMPR)".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let nx = u32_at(4);
        let ny = u32_at(8);
        let pitch = f64_at(12);
        let a = f64_at(20);
        let center = (f64_at(28), f64_at(36));
        let expected = HEADER_LEN + 8 * nx * ny;
        if bytes.len() != expected {
            return Err(ProfileError::Format(format!(
                "expected {expected} bytes for a {nx}x{ny} map, got {}",
                bytes.len()
            )));
        }
        let heights = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        HeightMap::new(nx, ny, heights, pitch, center, a)
    }

    /// CSV: a header line `nx,ny,pitch,a,cx,cy`, then `ny` rows of `nx` heights.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "{},{},{},{},{},{}\n",
            self.nx, self.ny, self.pitch, self.lateral_length, self.center.0, self.center.1
        );
        for row in self.heights.chunks(self.nx) {
            let line: Vec<String> = row.iter().map(|h| h.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| ProfileError::Format("empty CSV".into()))?;
        let fields: Vec<&str> = header.split(',').map(str::trim).collect();
        if fields.len() != 6 {
            return Err(ProfileError::Format(
                "CSV header must be nx,ny,pitch,a,cx,cy".into(),
            ));
        }
        let parse_usize = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| ProfileError::Format(format!("bad header field '{s}': {e}")))
        };
        let parse_f64 = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| ProfileError::Format(format!("bad number '{s}': {e}")))
        };
        let nx = parse_usize(fields[0])?;
        let ny = parse_usize(fields[1])?;
        let pitch = parse_f64(fields[2])?;
        let a = parse_f64(fields[3])?;
        let center = (parse_f64(fields[4])?, parse_f64(fields[5])?);
        let mut heights = Vec::with_capacity(nx * ny);
        for (row, line) in lines.enumerate() {
            let before = heights.len();
            for cell in line.split(',') {
                heights.push(parse_f64(cell.trim())?);
            }
            if heights.len() - before != nx {
                return Err(ProfileError::Format(format!("row {row} does not have {nx} values")));
            }
        }
        HeightMap::new(nx, ny, heights, pitch, center, a)
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        if bytes.starts_with(MAGIC) || path.extension().is_none_or(|e| e != "csv") {
            Self::from_bytes(&bytes)
        } else {
            let text = String::from_utf8(bytes)
                .map_err(|_| ProfileError::Format("CSV map is not UTF-8".into()))?;
            Self::from_csv(&text)
        }
    }
}

/// Normalised 1D pile-up curve: `(x/a, h/a)` with strictly increasing `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PileUpCurve {
    pub samples: Vec<(f64, f64)>,
}

impl PileUpCurve {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(ProfileError::Input("pile-up abscissae must increase strictly".into()));
        }
        Ok(Self { samples })
    }
}

/// How a height map is reduced to a 1D curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StripMode {
    /// Bands of half-width `a/4` along the four semi-axes, binned by distance to the center.
    #[default]
    Axes,
    /// Full annuli binned by radius.
    Radial,
}

impl std::str::FromStr for StripMode {
    type Err = ProfileError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "axes" | "strips" => Ok(StripMode::Axes),
            "radial" => Ok(StripMode::Radial),
            _ => Err(ProfileError::Input(format!("unknown strip mode '{s}'"))),
        }
    }
}

#[derive(Default, Clone, Copy)]
struct Bin {
    sum_h: f64,
    sum_d: f64,
    count: usize,
}

pub fn strip_average(map: &HeightMap) -> Result<PileUpCurve> {
    strip_average_with(map, StripMode::Axes)
}

pub fn strip_average_with(map: &HeightMap, mode: StripMode) -> Result<PileUpCurve> {
    map.validate()?;
    let (cx, cy) = map.center;
    if !(cx >= 0.0 && cy >= 0.0 && cx <= (map.nx - 1) as f64 && cy <= (map.ny - 1) as f64) {
        return Err(ProfileError::Geometry("center lies outside the grid".into()));
    }
    let a = map.lateral_length;
    let p = map.pitch;
    if a < 4.0 * p {
        return Err(ProfileError::Geometry(format!(
            "lateral length {a} is below four pixels ({})",
            4.0 * p
        )));
    }
    // common extent covered by all four semi-axes
    let extent = [cx, (map.nx - 1) as f64 - cx, cy, (map.ny - 1) as f64 - cy]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
        * p;
    let nbins = (extent / p).floor() as usize + 1;
    if nbins < 8 {
        return Err(ProfileError::Geometry(format!(
            "only {nbins} distance bins fit inside the map"
        )));
    }
    let half_width = a / 4.0 * (1.0 + 1e-12);

    let mut samples = Vec::with_capacity(nbins);
    match mode {
        StripMode::Axes => {
            // +X, -X, +Y, -Y as (axis unit vector, perpendicular unit vector)
            let axes: [((f64, f64), (f64, f64)); 4] = [
                ((1.0, 0.0), (0.0, 1.0)),
                ((-1.0, 0.0), (0.0, 1.0)),
                ((0.0, 1.0), (1.0, 0.0)),
                ((0.0, -1.0), (1.0, 0.0)),
            ];
            let mut bins = vec![[Bin::default(); 4]; nbins];
            for iy in 0..map.ny {
                let y = (iy as f64 - cy) * p;
                for ix in 0..map.nx {
                    let x = (ix as f64 - cx) * p;
                    let h = map.at(ix, iy);
                    for (k, (u, v)) in axes.iter().enumerate() {
                        let along = x * u.0 + y * u.1;
                        let perp = x * v.0 + y * v.1;
                        if along < 0.0 || perp.abs() > half_width {
                            continue;
                        }
                        let r = (x * x + y * y).sqrt();
                        let b = (r / p).floor() as usize;
                        if b < nbins {
                            let bin = &mut bins[b][k];
                            bin.sum_h += h;
                            bin.sum_d += r;
                            bin.count += 1;
                        }
                    }
                }
            }
            for (b, per_axis) in bins.iter().enumerate() {
                let mut h = 0.0;
                let mut d = 0.0;
                for bin in per_axis {
                    if bin.count == 0 {
                        return Err(ProfileError::Geometry(format!("distance bin {b} is empty")));
                    }
                    h += bin.sum_h / bin.count as f64;
                    d += bin.sum_d / bin.count as f64;
                }
                samples.push((d / 4.0 / a, h / 4.0 / a));
            }
        }
        StripMode::Radial => {
            let mut bins = vec![Bin::default(); nbins];
            for iy in 0..map.ny {
                let y = (iy as f64 - cy) * p;
                for ix in 0..map.nx {
                    let x = (ix as f64 - cx) * p;
                    let r = (x * x + y * y).sqrt();
                    let b = (r / p).floor() as usize;
                    if b < nbins {
                        let bin = &mut bins[b];
                        bin.sum_h += map.at(ix, iy);
                        bin.sum_d += r;
                        bin.count += 1;
                    }
                }
            }
            for (b, bin) in bins.iter().enumerate() {
                if bin.count == 0 {
                    return Err(ProfileError::Geometry(format!("radius bin {b} is empty")));
                }
                let n = bin.count as f64;
                samples.push((bin.sum_d / n / a, bin.sum_h / n / a));
            }
        }
    }
    PileUpCurve::new(samples)
}

/// Nine pile-up descriptors of a normalised curve (all dimensionless).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PileUpFeatures {
    pub h_max: f64,
    pub v1: f64,
    pub o1: f64,
    pub v_half: f64,
    pub o_half: f64,
    pub v_quarter: f64,
    pub o_quarter: f64,
    pub v_eighth: f64,
    pub o_eighth: f64,
    /// Set when the curve has no part above the surface; all values are zero then.
    #[serde(default)]
    pub degenerate: bool,
}

impl PileUpFeatures {
    pub fn to_array(&self) -> [f64; 9] {
        [
            self.h_max,
            self.v1,
            self.o1,
            self.v_half,
            self.o_half,
            self.v_quarter,
            self.o_quarter,
            self.v_eighth,
            self.o_eighth,
        ]
    }
}

/// Height fractions of `H_max` bounding the four volume/center pairs. The
/// "quarter" and "eighth" regions are the top quarter and top eighth.
const LEVELS: [f64; 4] = [0.0, 0.5, 0.75, 0.875];

/// `(int h dx, int x h dx)` over the part of the linear segment where
/// `h >= level`, exact for piecewise-linear `h`.
fn clipped_moments(x0: f64, h0: f64, x1: f64, h1: f64, level: f64) -> (f64, f64) {
    let (mut xa, mut ha, mut xb, mut hb) = (x0, h0, x1, h1);
    let in0 = h0 >= level;
    let in1 = h1 >= level;
    if !in0 && !in1 {
        return (0.0, 0.0);
    }
    if in0 != in1 {
        let t = (level - h0) / (h1 - h0);
        let xc = x0 + t * (x1 - x0);
        if in0 {
            xb = xc;
            hb = level;
        } else {
            xa = xc;
            ha = level;
        }
    }
    let w = xb - xa;
    let area = 0.5 * w * (ha + hb);
    // Simpson is exact for the quadratic x*h(x)
    let xm = 0.5 * (xa + xb);
    let hm = 0.5 * (ha + hb);
    let moment = w / 6.0 * (xa * ha + 4.0 * xm * hm + xb * hb);
    (area, moment)
}

pub fn extract_pileup_features(curve: &PileUpCurve) -> Result<PileUpFeatures> {
    let s = &curve.samples;
    if s.len() < 8 {
        return Err(ProfileError::Input(format!(
            "pile-up curve has {} samples, need at least 8",
            s.len()
        )));
    }
    let h_max = s.iter().fold(f64::NEG_INFINITY, |m, p| m.max(p.1));
    if !(h_max > 0.0) {
        log::warn!("pile-up curve has no part above the surface; features set to zero");
        return Ok(PileUpFeatures {
            degenerate: true,
            ..Default::default()
        });
    }
    let mut vo = [(0.0, 0.0); 4];
    for (slot, frac) in vo.iter_mut().zip(LEVELS) {
        let level = frac * h_max;
        let (mut v, mut m) = (0.0, 0.0);
        for w in s.windows(2) {
            let (a, b) = clipped_moments(w[0].0, w[0].1, w[1].0, w[1].1, level);
            v += a;
            m += b;
        }
        *slot = (v, if v > 0.0 { m / v } else { 0.0 });
    }
    Ok(PileUpFeatures {
        h_max,
        v1: vo[0].0,
        o1: vo[0].1,
        v_half: vo[1].0,
        o_half: vo[1].1,
        v_quarter: vo[2].0,
        o_quarter: vo[2].1,
        v_eighth: vo[3].0,
        o_eighth: vo[3].1,
        degenerate: false,
    })
}

/// Load-displacement record: `(h, P)` pairs for loading and unloading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadCurve {
    pub loading: Vec<(f64, f64)>,
    pub unloading: Vec<(f64, f64)>,
    pub p_max: f64,
    pub h_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceFeatures {
    /// Loading curvature from `P = C h^2`.
    pub c: f64,
    /// Initial unloading slope.
    pub s: f64,
    pub hr_over_hm: f64,
}

impl ForceFeatures {
    pub fn to_array(&self) -> [f64; 3] {
        [self.c, self.s, self.hr_over_hm]
    }
}

/// Fraction of the maximum load defining the top of the unloading branch.
const UNLOAD_FIT_FRACTION: f64 = 0.9;

/// `C` by least squares through the origin, `S` as the endpoint slope of a
/// straight-line fit in log-log coordinates (`ln P` against `ln(h - h_r)`)
/// over the top 10% of the unloading load, `h_r` by linear extrapolation of
/// the last two unloading samples to zero load.
pub fn extract_force_features(lc: &LoadCurve) -> Result<ForceFeatures> {
    if lc.loading.len() < 10 || lc.unloading.len() < 10 {
        return Err(ProfileError::Data("need at least 10 loading and unloading samples".into()));
    }
    if lc
        .loading
        .windows(2)
        .any(|w| !(w[1].0 > w[0].0) || w[1].1 < w[0].1)
    {
        return Err(ProfileError::Data("loading branch is not monotone".into()));
    }
    let (num, den) = lc
        .loading
        .iter()
        .fold((0.0, 0.0), |(n, d), &(h, p)| (n + p * h * h, d + h.powi(4)));
    let c = num / den;

    let n = lc.unloading.len();
    let (h1, p1) = lc.unloading[n - 2];
    let (h2, p2) = lc.unloading[n - 1];
    let h_r = if p1 == p2 {
        h2
    } else {
        h2 - p2 * (h1 - h2) / (p1 - p2)
    };
    let h_r = h_r.max(0.0);
    let p_top = lc.unloading.iter().fold(0.0f64, |m, p| m.max(p.1));
    let h_top = lc
        .unloading
        .iter()
        .fold(f64::NEG_INFINITY, |m, p| m.max(p.0));
    let top: Vec<(f64, f64)> = lc
        .unloading
        .iter()
        .filter(|&&(h, p)| p >= UNLOAD_FIT_FRACTION * p_top && p > 0.0 && h > h_r)
        .map(|&(h, p)| ((h - h_r).ln(), p.ln()))
        .collect();
    if top.len() < 2 {
        return Err(ProfileError::Data(
            "fewer than two unloading samples in the top 10% of load".into(),
        ));
    }
    let m = top.len() as f64;
    let mx = top.iter().map(|t| t.0).sum::<f64>() / m;
    let my = top.iter().map(|t| t.1).sum::<f64>() / m;
    let sxy: f64 = top.iter().map(|t| (t.0 - mx) * (t.1 - my)).sum();
    let sxx: f64 = top.iter().map(|t| (t.0 - mx).powi(2)).sum();
    let exponent = sxy / sxx;
    // slope of P = exp(intercept) (h - h_r)^exponent at the top of unloading
    let at_top = (my + exponent * ((h_top - h_r).ln() - mx)).exp();
    let s = exponent * at_top / (h_top - h_r);
    if !(c > 0.0 && s > 0.0) {
        return Err(ProfileError::Data(format!("non-physical force features C={c}, S={s}")));
    }
    Ok(ForceFeatures {
        c,
        s,
        hr_over_hm: (h_r / lc.h_m).clamp(0.0, 1.0),
    })
}

pub fn hardness(load: f64, area: f64) -> Result<f64> {
    if !(load > 0.0) || !(area > 0.0) {
        return Err(ProfileError::Input(format!(
            "hardness needs positive load and area, got P={load}, A={area}"
        )));
    }
    Ok(load / area)
}

pub const PILEUP_FEATURE_NAMES: [&str; 9] = [
    "H_max",
    "V1",
    "O1",
    "V_half",
    "O_half",
    "V_quarter",
    "O_quarter",
    "V_eighth",
    "O_eighth",
];
pub const HARDNESS_NAME: &str = "H";
pub const FORCE_FEATURE_NAMES: [&str; 3] = ["C", "S", "hr_over_hm"];

/// Ordered NN input: nine pile-up features, hardness, then optionally C, S, h_r/h_m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn names(&self) -> Vec<&'static str> {
        feature_names(self.0.len() > 10)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn feature_names(with_force: bool) -> Vec<&'static str> {
    let mut names: Vec<&'static str> = PILEUP_FEATURE_NAMES.to_vec();
    names.push(HARDNESS_NAME);
    if with_force {
        names.extend(FORCE_FEATURE_NAMES);
    }
    names
}

pub fn assemble_features(pf: &PileUpFeatures, h: f64, ff: Option<&ForceFeatures>) -> FeatureVector {
    let mut v = pf.to_array().to_vec();
    v.push(h);
    if let Some(ff) = ff {
        v.extend(ff.to_array());
    }
    FeatureVector(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map_from_fn(n: usize, pitch: f64, a: f64, f: impl Fn(f64, f64) -> f64) -> HeightMap {
        let c = (n as f64 - 1.0) / 2.0;
        let mut heights = Vec::with_capacity(n * n);
        for iy in 0..n {
            for ix in 0..n {
                heights.push(f((ix as f64 - c) * pitch, (iy as f64 - c) * pitch));
            }
        }
        HeightMap::new(n, n, heights, pitch, (c, c), a).unwrap()
    }

    fn triangle() -> PileUpCurve {
        // peak 1 at x=1 over [0.5, 1.5], sampled at 0.0625 spacing on [0, 2]
        let samples = (0..=32)
            .map(|i| {
                let x = i as f64 * 0.0625;
                (x, (1.0 - 2.0 * (x - 1.0).abs()).max(0.0))
            })
            .collect();
        PileUpCurve::new(samples).unwrap()
    }

    #[test]
    fn triangle_features() {
        let f = extract_pileup_features(&triangle()).unwrap();
        assert!(!f.degenerate);
        assert!((f.h_max - 1.0).abs() < 1e-15);
        assert!((f.v1 - 0.5).abs() < 1e-14);
        assert!((f.o1 - 1.0).abs() < 1e-14);
        assert!((f.v_half - 0.375).abs() < 1e-14);
        assert!((f.o_half - 1.0).abs() < 1e-14);
        assert!((f.v_quarter - 0.21875).abs() < 1e-14);
        assert!((f.v_eighth - 0.1171875).abs() < 1e-14);
        assert!((f.o_eighth - 1.0).abs() < 1e-14);
    }

    #[test]
    fn height_scaling() {
        let base = triangle();
        let scaled = PileUpCurve::new(base.samples.iter().map(|&(x, h)| (x, 3.0 * h)).collect()).unwrap();
        let f0 = extract_pileup_features(&base).unwrap();
        let f1 = extract_pileup_features(&scaled).unwrap();
        let (a, b) = (f0.to_array(), f1.to_array());
        for i in [0, 1, 3, 5, 7] {
            assert!((b[i] - 3.0 * a[i]).abs() < 1e-13);
        }
        for i in [2, 4, 6, 8] {
            assert!((b[i] - a[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn all_negative_curve_flags_zero_features() {
        let c = PileUpCurve::new((0..10).map(|i| (i as f64, -1.0 - i as f64)).collect()).unwrap();
        let f = extract_pileup_features(&c).unwrap();
        assert!(f.degenerate);
        assert!(f.to_array().iter().all(|&v| v == 0.0));
        let short = PileUpCurve::new((0..5).map(|i| (i as f64, 1.0)).collect()).unwrap();
        assert!(extract_pileup_features(&short).is_err());
    }

    #[test]
    fn constant_map_gives_constant_curve() {
        let m = map_from_fn(33, 0.5, 4.0, |_, _| 0.3);
        let c = strip_average(&m).unwrap();
        assert!(c.samples.iter().all(|&(_, h)| (h - 0.3 / 4.0).abs() < 1e-15));
        let r = strip_average_with(&m, StripMode::Radial).unwrap();
        assert!(r.samples.iter().all(|&(_, h)| (h - 0.3 / 4.0).abs() < 1e-15));
    }

    #[test]
    fn geometry_errors() {
        let m = map_from_fn(33, 1.0, 3.0, |_, _| 0.0);
        assert!(matches!(strip_average(&m), Err(ProfileError::Geometry(_))));
        let mut off = map_from_fn(33, 0.5, 4.0, |_, _| 0.0);
        off.center = (40.0, 3.0);
        assert!(matches!(strip_average(&off), Err(ProfileError::Geometry(_))));
    }

    #[test]
    fn binary_and_csv_round_trip() {
        let m = map_from_fn(20, 0.37, 2.0, |x, y| (x * 1.3).sin() * (y * 0.7).cos() / 3.0);
        let back = HeightMap::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        let back = HeightMap::from_csv(&m.to_csv()).unwrap();
        assert_eq!(back, m);
        let mut bad = m.to_bytes();
        bad[0] = b'X';
        assert!(matches!(HeightMap::from_bytes(&bad), Err(ProfileError::Format(_))));
        assert!(HeightMap::from_bytes(&m.to_bytes()[..100]).is_err());
    }

    fn kick_load_curve(c: f64, h_m: f64, h_r: f64, m: f64) -> LoadCurve {
        let p_max = c * h_m * h_m;
        let loading = (1..=64).map(|i| {
            let h = h_m * i as f64 / 64.0;
            (h, c * h * h)
        });
        let unloading = (0..64).map(|i| {
            let p = p_max * (1.0 - i as f64 / 63.0);
            (h_r + (h_m - h_r) * (p / p_max).powf(1.0 / m), p)
        });
        LoadCurve {
            loading: loading.collect(),
            unloading: unloading.collect(),
            p_max,
            h_m,
        }
    }

    #[test]
    fn force_features_recover_generating_law() {
        let lc = kick_load_curve(50.0, 1.2, 0.7, 1.6);
        let ff = extract_force_features(&lc).unwrap();
        assert!((ff.c - 50.0).abs() < 1e-10);
        // endpoint derivative of P = Pmax ((h-hr)/(hm-hr))^m
        let s0 = 1.6 * lc.p_max / (1.2 - 0.7);
        assert!(((ff.s - s0) / s0).abs() < 0.01);
        assert!((ff.hr_over_hm - 0.7 / 1.2).abs() < 1e-9);

        let origin = kick_load_curve(50.0, 1.2, 0.0, 1.3);
        assert_eq!(extract_force_features(&origin).unwrap().hr_over_hm, 0.0);
    }

    #[test]
    fn non_monotone_loading_rejected() {
        let mut lc = kick_load_curve(50.0, 1.2, 0.7, 1.6);
        lc.loading.swap(3, 4);
        assert!(matches!(extract_force_features(&lc), Err(ProfileError::Data(_))));
    }

    #[test]
    fn hardness_examples() {
        assert_eq!(hardness(10.0, 2.0).unwrap(), 5.0);
        assert!((hardness(0.98, 0.49).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(hardness(20.0, 4.0).unwrap(), hardness(10.0, 2.0).unwrap());
        assert!(hardness(0.0, 1.0).is_err());
        assert!(hardness(1.0, -1.0).is_err());
    }

    #[test]
    fn feature_vector_layout() {
        let pf = extract_pileup_features(&triangle()).unwrap();
        let v = assemble_features(&pf, 2.5, None);
        assert_eq!(v.len(), 10);
        assert_eq!(v.0[9], 2.5);
        let ff = ForceFeatures {
            c: 1.0,
            s: 2.0,
            hr_over_hm: 0.5,
        };
        let v = assemble_features(&pf, 2.5, Some(&ff));
        assert_eq!(v.len(), 13);
        assert_eq!(v.names()[12], "hr_over_hm");
        let a = serde_json::to_string(&v).unwrap();
        let b = serde_json::to_string(&assemble_features(&pf, 2.5, Some(&ff))).unwrap();
        assert_eq!(a, b);
    }
}
