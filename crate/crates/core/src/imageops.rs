//! Contrast enhancement on 8-bit rasters: global histogram equalization,
//! CLAHE and gamma correction.
//!
//! Every operation works on single-channel rasters. Color rasters are
//! handled by [`apply_on_luma`], which converts to BT.601 YCbCr, enhances
//! the Y plane and converts back.

use std::fmt;

pub type Histogram = [u64; 256];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ImageOpsError {
    #[error("expected {expected} channel(s), got {got}")]
    Channels { expected: u8, got: u8 },
    #[error("sample buffer has {got} values, expected {expected}")]
    BufferSize { expected: usize, got: usize },
    #[error("raster dimensions must be non-zero")]
    EmptyRaster,
    #[error("tile grid {tiles_x}x{tiles_y} larger than image {width}x{height}")]
    GridTooLarge { tiles_x: u32, tiles_y: u32, width: u32, height: u32 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Row-major 8-bit image, channels interleaved.
#[derive(Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    channels: u8,
    samples: Vec<u8>,
}

impl fmt::Debug for Raster {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Raster")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("channels", &self.channels)
            .finish_non_exhaustive()
    }
}

impl Raster {
    pub fn new(width: u32, height: u32, channels: u8, samples: Vec<u8>) -> Result<Self, ImageOpsError> {
        if width == 0 || height == 0 {
            return Err(ImageOpsError::EmptyRaster);
        }
        if channels != 1 && channels != 3 {
            return Err(ImageOpsError::InvalidParameter(format!(
                "unsupported channel count {channels}"
            )));
        }
        let expected = width as usize * height as usize * channels as usize;
        if samples.len() != expected {
            return Err(ImageOpsError::BufferSize {
                expected,
                got: samples.len(),
            });
        }
        Ok(Raster {
            width,
            height,
            channels,
            samples,
        })
    }

    pub fn gray(width: u32, height: u32, samples: Vec<u8>) -> Result<Self, ImageOpsError> {
        Raster::new(width, height, 1, samples)
    }

    pub fn rgb(width: u32, height: u32, samples: Vec<u8>) -> Result<Self, ImageOpsError> {
        Raster::new(width, height, 3, samples)
    }

    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Result<Self, ImageOpsError> {
        let n = width as usize * height as usize * channels as usize;
        Raster::new(width, height, channels, vec![value; n])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<u8> {
        self.samples
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    fn with_samples(&self, samples: Vec<u8>) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            channels: self.channels,
            samples,
        }
    }

    fn require_channels(&self, expected: u8) -> Result<(), ImageOpsError> {
        if self.channels != expected {
            return Err(ImageOpsError::Channels {
                expected,
                got: self.channels,
            });
        }
        Ok(())
    }

    fn map_lut(&self, lut: &[u8; 256]) -> Raster {
        self.with_samples(self.samples.iter().map(|&v| lut[v as usize]).collect())
    }
}

/// Positive, finite gamma exponent. `out = in^gamma` on normalized
/// intensities, so values below 1 brighten.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaValue(f64);

impl GammaValue {
    pub fn new(gamma: f64) -> Result<Self, ImageOpsError> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(ImageOpsError::InvalidParameter(format!(
                "gamma must be positive and finite, got {gamma}"
            )));
        }
        Ok(GammaValue(gamma))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for GammaValue {
    fn default() -> Self {
        GammaValue(1.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaheParams {
    tiles_x: u32,
    tiles_y: u32,
    clip_limit: Option<f64>,
}

impl ClaheParams {
    /// `clip_limit` is a multiple of the mean bin count of a tile histogram;
    /// `None` disables clipping.
    pub fn new(tiles_x: u32, tiles_y: u32, clip_limit: Option<f64>) -> Result<Self, ImageOpsError> {
        if tiles_x == 0 || tiles_y == 0 {
            return Err(ImageOpsError::InvalidParameter("tile counts must be >= 1".into()));
        }
        if let Some(c) = clip_limit {
            if !(c.is_finite() && c >= 1.0) {
                return Err(ImageOpsError::InvalidParameter(format!(
                    "clip limit must be >= 1, got {c}"
                )));
            }
        }
        Ok(ClaheParams {
            tiles_x,
            tiles_y,
            clip_limit,
        })
    }

    pub fn tiles(&self) -> (u32, u32) {
        (self.tiles_x, self.tiles_y)
    }

    pub fn clip_limit(&self) -> Option<f64> {
        self.clip_limit
    }
}

impl Default for ClaheParams {
    fn default() -> Self {
        ClaheParams {
            tiles_x: 8,
            tiles_y: 8,
            clip_limit: Some(2.0),
        }
    }
}

pub fn histogram(r: &Raster) -> Result<Histogram, ImageOpsError> {
    r.require_channels(1)?;
    let mut bins = [0u64; 256];
    for &v in &r.samples {
        bins[v as usize] += 1;
    }
    Ok(bins)
}

/// Equalization lookup table for a histogram holding `total` samples.
///
/// `lut[v] = round((cdf(v) - cdf_min) / (total - cdf_min) * 255)`, where
/// `cdf_min` is the smallest non-zero cumulative count. A single-level
/// histogram (`cdf_min == total`) yields the identity table.
pub fn equalization_lut(hist: &Histogram, total: u64) -> [u8; 256] {
    let mut lut = [0u8; 256];
    let mut cdf = [0u64; 256];
    let mut acc = 0u64;
    for (c, &h) in cdf.iter_mut().zip(hist.iter()) {
        acc += h;
        *c = acc;
    }
    let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
    if cdf_min >= total {
        for (v, out) in lut.iter_mut().enumerate() {
            *out = v as u8;
        }
        return lut;
    }
    let denom = (total - cdf_min) as f64;
    for (out, &c) in lut.iter_mut().zip(cdf.iter()) {
        let num = c.saturating_sub(cdf_min) as f64;
        *out = (num / denom * 255.0).round().clamp(0.0, 255.0) as u8;
    }
    lut
}

pub fn equalize_hist(r: &Raster) -> Result<Raster, ImageOpsError> {
    let hist = histogram(r)?;
    let lut = equalization_lut(&hist, r.pixel_count() as u64);
    Ok(r.map_lut(&lut))
}

pub fn gamma_lut(g: GammaValue) -> [u8; 256] {
    let mut lut = [0u8; 256];
    for (v, out) in lut.iter_mut().enumerate() {
        let x = v as f64 / 255.0;
        *out = (255.0 * x.powf(g.0)).round().clamp(0.0, 255.0) as u8;
    }
    lut
}

/// Power-law tone mapping applied to every sample of every channel.
pub fn gamma_correct(r: &Raster, g: GammaValue) -> Raster {
    r.map_lut(&gamma_lut(g))
}

/// Clip every bin at `limit` and spread the excess evenly over all 256
/// bins; leftover units go to bins 0, 1, 2, ... one each. Total mass is
/// unchanged.
pub fn clip_histogram(hist: &mut Histogram, limit: u64) {
    let mut excess = 0u64;
    for h in hist.iter_mut() {
        if *h > limit {
            excess += *h - limit;
            *h = limit;
        }
    }
    let share = excess / 256;
    let residue = (excess % 256) as usize;
    for (i, h) in hist.iter_mut().enumerate() {
        *h += share + u64::from(i < residue);
    }
}

/// Integer clip threshold for a tile: `floor(clip * tile_pixels / 256)`,
/// at least 1.
pub fn clip_threshold(clip_limit: f64, tile_pixels: u64) -> u64 {
    ((clip_limit * tile_pixels as f64 / 256.0).floor() as u64).max(1)
}

/// Partition of the image into a CLAHE tile grid. The last row and column
/// of tiles absorb the remainder pixels.
#[derive(Debug, Clone)]
pub struct TileGrid {
    x_bounds: Vec<u32>,
    y_bounds: Vec<u32>,
}

fn axis_bounds(len: u32, tiles: u32) -> Vec<u32> {
    let step = len / tiles;
    let mut b: Vec<u32> = (0..tiles).map(|i| i * step).collect();
    b.push(len);
    b
}

impl TileGrid {
    pub fn new(width: u32, height: u32, tiles_x: u32, tiles_y: u32) -> Result<Self, ImageOpsError> {
        if tiles_x == 0 || tiles_y == 0 {
            return Err(ImageOpsError::InvalidParameter("tile counts must be >= 1".into()));
        }
        if tiles_x > width || tiles_y > height {
            return Err(ImageOpsError::GridTooLarge {
                tiles_x,
                tiles_y,
                width,
                height,
            });
        }
        Ok(TileGrid {
            x_bounds: axis_bounds(width, tiles_x),
            y_bounds: axis_bounds(height, tiles_y),
        })
    }

    pub fn tiles_x(&self) -> usize {
        self.x_bounds.len() - 1
    }

    pub fn tiles_y(&self) -> usize {
        self.y_bounds.len() - 1
    }

    /// Pixel ranges `(x0..x1, y0..y1)` of tile `(tx, ty)`.
    pub fn tile_rect(&self, tx: usize, ty: usize) -> (std::ops::Range<u32>, std::ops::Range<u32>) {
        (
            self.x_bounds[tx]..self.x_bounds[tx + 1],
            self.y_bounds[ty]..self.y_bounds[ty + 1],
        )
    }

    fn centers(bounds: &[u32]) -> Vec<f64> {
        bounds
            .windows(2)
            .map(|w| (f64::from(w[0]) + f64::from(w[1])) / 2.0)
            .collect()
    }
}

/// For each pixel position along an axis: the two neighbouring tile
/// indices and the weight of the second one.
fn axis_weights(len: u32, centers: &[f64]) -> Vec<(usize, usize, f64)> {
    let last = centers.len() - 1;
    (0..len)
        .map(|p| {
            let pos = f64::from(p) + 0.5;
            if pos <= centers[0] {
                (0, 0, 0.0)
            } else if pos >= centers[last] {
                (last, last, 0.0)
            } else {
                let i = centers.partition_point(|&c| c <= pos) - 1;
                let t = (pos - centers[i]) / (centers[i + 1] - centers[i]);
                (i, i + 1, t)
            }
        })
        .collect()
}

/// Histograms of every tile, after clipping when enabled. Row-major over
/// the tile grid.
pub fn clahe_tile_histograms(r: &Raster, p: &ClaheParams) -> Result<Vec<Histogram>, ImageOpsError> {
    Ok(tile_stats(r, p)?.1.into_iter().map(|t| t.clipped).collect())
}

struct TileStats {
    clipped: Histogram,
    pixels: u64,
    single_level: bool,
}

fn tile_stats(r: &Raster, p: &ClaheParams) -> Result<(TileGrid, Vec<TileStats>), ImageOpsError> {
    r.require_channels(1)?;
    let grid = TileGrid::new(r.width, r.height, p.tiles_x, p.tiles_y)?;
    let w = r.width as usize;
    let mut stats = Vec::with_capacity(grid.tiles_x() * grid.tiles_y());
    for ty in 0..grid.tiles_y() {
        for tx in 0..grid.tiles_x() {
            let (xs, ys) = grid.tile_rect(tx, ty);
            let mut hist = [0u64; 256];
            for y in ys.clone() {
                let row = &r.samples[y as usize * w..(y as usize + 1) * w];
                for &v in &row[xs.start as usize..xs.end as usize] {
                    hist[v as usize] += 1;
                }
            }
            let pixels = u64::from(xs.end - xs.start) * u64::from(ys.end - ys.start);
            let single_level = hist.contains(&pixels);
            if let Some(clip) = p.clip_limit {
                clip_histogram(&mut hist, clip_threshold(clip, pixels));
            }
            stats.push(TileStats {
                clipped: hist,
                pixels,
                single_level,
            });
        }
    }
    Ok((grid, stats))
}

/// Contrast-limited adaptive histogram equalization.
///
/// Each tile gets its own equalization table built from its (clipped)
/// histogram. A tile holding a single intensity level maps to the identity,
/// before clipping is considered. Output pixels blend the tables of the
/// nearest tile centers bilinearly, clamping to the edge tiles at borders.
pub fn clahe(r: &Raster, p: &ClaheParams) -> Result<Raster, ImageOpsError> {
    let (grid, stats) = tile_stats(r, p)?;
    let luts: Vec<[u8; 256]> = stats
        .iter()
        .map(|t| {
            if t.single_level {
                equalization_lut(&[0; 256], 0)
            } else {
                equalization_lut(&t.clipped, t.pixels)
            }
        })
        .collect();
    let nx = grid.tiles_x();
    let xw = axis_weights(r.width, &TileGrid::centers(&grid.x_bounds));
    let yw = axis_weights(r.height, &TileGrid::centers(&grid.y_bounds));

    let w = r.width as usize;
    let mut out = vec![0u8; r.samples.len()];
    for (y, &(ty0, ty1, wy)) in yw.iter().enumerate() {
        for (x, &(tx0, tx1, wx)) in xw.iter().enumerate() {
            let v = r.samples[y * w + x] as usize;
            let m00 = f64::from(luts[ty0 * nx + tx0][v]);
            let m01 = f64::from(luts[ty0 * nx + tx1][v]);
            let m10 = f64::from(luts[ty1 * nx + tx0][v]);
            let m11 = f64::from(luts[ty1 * nx + tx1][v]);
            let top = (1.0 - wx) * m00 + wx * m01;
            let bottom = (1.0 - wx) * m10 + wx * m11;
            let value = (1.0 - wy) * top + wy * bottom;
            out[y * w + x] = value.round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(r.with_samples(out))
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Run a single-channel operation on the BT.601 luma of a color raster.
///
/// Chroma is kept in full precision between the forward and inverse
/// transforms, so an identity `op` reproduces the input within one level.
pub fn apply_on_luma<F>(r: &Raster, op: F) -> Result<Raster, ImageOpsError>
where
    F: FnOnce(&Raster) -> Result<Raster, ImageOpsError>,
{
    r.require_channels(3)?;
    let n = r.pixel_count();
    let mut luma = Vec::with_capacity(n);
    let mut chroma = Vec::with_capacity(n);
    for px in r.samples.chunks_exact(3) {
        let (red, green, blue) = (f64::from(px[0]), f64::from(px[1]), f64::from(px[2]));
        let y = 0.299 * red + 0.587 * green + 0.114 * blue;
        let cb = 128.0 - 0.168736 * red - 0.331264 * green + 0.5 * blue;
        let cr = 128.0 + 0.5 * red - 0.418688 * green - 0.081312 * blue;
        luma.push(to_u8(y));
        chroma.push((cb - 128.0, cr - 128.0));
    }
    let plane = Raster::gray(r.width, r.height, luma)?;
    let enhanced = op(&plane)?;
    if enhanced.channels != 1 || enhanced.width != r.width || enhanced.height != r.height {
        return Err(ImageOpsError::InvalidParameter(
            "luma operation changed raster shape".into(),
        ));
    }
    let mut out = Vec::with_capacity(n * 3);
    for (&y, &(cb, cr)) in enhanced.samples.iter().zip(chroma.iter()) {
        let y = f64::from(y);
        out.push(to_u8(y + 1.402 * cr));
        out.push(to_u8(y - 0.344136 * cb - 0.714136 * cr));
        out.push(to_u8(y + 1.772 * cb));
    }
    Ok(r.with_samples(out))
}

/// One of the three enhancement techniques with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Enhancement {
    Equalize,
    Clahe(ClaheParams),
    Gamma(GammaValue),
}

impl Enhancement {
    fn apply_gray(&self, r: &Raster) -> Result<Raster, ImageOpsError> {
        match self {
            Enhancement::Equalize => equalize_hist(r),
            Enhancement::Clahe(p) => clahe(r, p),
            Enhancement::Gamma(g) => Ok(gamma_correct(r, *g)),
        }
    }

    /// Apply to a raster: directly for grayscale, on the luma plane for color.
    pub fn apply(&self, r: &Raster) -> Result<Raster, ImageOpsError> {
        if r.channels == 1 {
            self.apply_gray(r)
        } else {
            apply_on_luma(r, |y| self.apply_gray(y))
        }
    }

    pub fn technique(&self) -> &'static str {
        match self {
            Enhancement::Equalize => "he",
            Enhancement::Clahe(_) => "clahe",
            Enhancement::Gamma(_) => "gamma",
        }
    }

    pub fn describe_params(&self) -> String {
        match self {
            Enhancement::Equalize => "-".to_string(),
            Enhancement::Clahe(p) => match p.clip_limit {
                Some(c) => format!("tiles={}x{} clip={c}", p.tiles_x, p.tiles_y),
                None => format!("tiles={}x{} clip=none", p.tiles_x, p.tiles_y),
            },
            Enhancement::Gamma(g) => format!("gamma={}", g.0),
        }
    }
}
