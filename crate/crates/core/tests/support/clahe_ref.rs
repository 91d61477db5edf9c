//! Scalar CLAHE reference: every output pixel recomputes the histograms
//! and tables of its neighbouring tiles from scratch.

pub struct Gray<'a> {
    pub width: usize,
    pub height: usize,
    pub pixels: &'a [u8],
}

fn tile_span(len: usize, tiles: usize, t: usize) -> (usize, usize) {
    let step = len / tiles;
    let start = t * step;
    let end = if t + 1 == tiles { len } else { start + step };
    (start, end)
}

fn tile_center(len: usize, tiles: usize, t: usize) -> f64 {
    let (s, e) = tile_span(len, tiles, t);
    (s + e) as f64 / 2.0
}

fn tile_table(img: &Gray, tiles_x: usize, tiles_y: usize, tx: usize, ty: usize, clip: Option<f64>) -> Vec<u8> {
    let (x0, x1) = tile_span(img.width, tiles_x, tx);
    let (y0, y1) = tile_span(img.height, tiles_y, ty);
    let mut hist = vec![0u64; 256];
    for y in y0..y1 {
        for x in x0..x1 {
            hist[img.pixels[y * img.width + x] as usize] += 1;
        }
    }
    let n = ((x1 - x0) * (y1 - y0)) as u64;
    let distinct = hist.iter().filter(|&&h| h > 0).count();
    if distinct <= 1 {
        return (0..=255u8).collect();
    }
    if let Some(c) = clip {
        let limit = std::cmp::max(1, (c * n as f64 / 256.0).floor() as u64);
        let mut excess = 0;
        for h in hist.iter_mut() {
            if *h > limit {
                excess += *h - limit;
                *h = limit;
            }
        }
        for (i, h) in hist.iter_mut().enumerate() {
            *h += excess / 256;
            if (i as u64) < excess % 256 {
                *h += 1;
            }
        }
    }
    let mut cdf = vec![0u64; 256];
    let mut run = 0;
    for v in 0..256 {
        run += hist[v];
        cdf[v] = run;
    }
    let cdf_min = *cdf.iter().find(|&&c| c != 0).unwrap();
    (0..256)
        .map(|v| {
            if cdf[v] < cdf_min {
                0
            } else if cdf_min == n {
                v as u8
            } else {
                let f = (cdf[v] - cdf_min) as f64 / (n - cdf_min) as f64;
                (f * 255.0).round() as u8
            }
        })
        .collect()
}

fn neighbours(pos: f64, len: usize, tiles: usize) -> (usize, usize, f64) {
    let first = tile_center(len, tiles, 0);
    let last = tile_center(len, tiles, tiles - 1);
    if pos <= first {
        return (0, 0, 0.0);
    }
    if pos >= last {
        return (tiles - 1, tiles - 1, 0.0);
    }
    let mut i = 0;
    while tile_center(len, tiles, i + 1) <= pos {
        i += 1;
    }
    let (a, b) = (tile_center(len, tiles, i), tile_center(len, tiles, i + 1));
    (i, i + 1, (pos - a) / (b - a))
}

pub fn clahe(img: &Gray, tiles_x: usize, tiles_y: usize, clip: Option<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(img.pixels.len());
    for y in 0..img.height {
        for x in 0..img.width {
            let (tx0, tx1, wx) = neighbours(x as f64 + 0.5, img.width, tiles_x);
            let (ty0, ty1, wy) = neighbours(y as f64 + 0.5, img.height, tiles_y);
            let v = img.pixels[y * img.width + x] as usize;
            let m = |tx, ty| f64::from(tile_table(img, tiles_x, tiles_y, tx, ty, clip)[v]);
            let top = (1.0 - wx) * m(tx0, ty0) + wx * m(tx1, ty0);
            let bottom = (1.0 - wx) * m(tx0, ty1) + wx * m(tx1, ty1);
            let value = (1.0 - wy) * top + wy * bottom;
            out.push(value.round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}
