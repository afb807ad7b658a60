//! Local and semi-local filters: training restricted to a pixel region.

use std::fmt;

use crate::error::{Error, Result};
use crate::imaging::ImageVector;
use crate::training::{train, TrainingConfig, TrainingOutcome};

/// Engaged-pixel density of a global 512-of-4096 filter, per color.
const LOCAL_DENSITY_DIVISOR: usize = 16;

/// A named set of pixel positions on a `width × height` canvas.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    name: String,
    width: usize,
    height: usize,
    indices: Vec<usize>,
}

impl Region {
    pub fn new(name: impl Into<String>, width: usize, height: usize, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() {
            return Err(Error::argument("region must contain at least one pixel"));
        }
        if let Some(&i) = indices.last() {
            if i >= width * height {
                return Err(Error::argument(format!(
                    "region index {i} outside {width}x{height} canvas"
                )));
            }
        }
        Ok(Region {
            name: name.into(),
            width,
            height,
            indices,
        })
    }

    /// The whole canvas.
    pub fn full(width: usize, height: usize) -> Result<Self> {
        Self::new("full", width, height, (0..width * height).collect())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Sorted, distinct positions.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, p: usize) -> bool {
        self.indices.binary_search(&p).is_ok()
    }

    /// Default per-color filter size, keeping the global 1/8 engaged
    /// fraction: `round(|region| / 16)`, at least one.
    pub fn default_filter_size(&self) -> usize {
        ((self.len() as f64 / LOCAL_DENSITY_DIVISOR as f64).round() as usize).max(1)
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} px)", self.name, self.len())
    }
}

/// Axis-aligned rectangle `[x0, x1) × [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

fn rect_indices(width: usize, r: Rect, out: &mut Vec<usize>) {
    for row in r.y0..r.y1 {
        out.extend((r.x0..r.x1).map(|col| row * width + col));
    }
}

/// Splits the canvas into `rows × cols` equal rectangles, row-major.
pub fn grid_regions(width: usize, height: usize, rows: usize, cols: usize) -> Result<Vec<Region>> {
    if rows == 0 || cols == 0 || !height.is_multiple_of(rows) || !width.is_multiple_of(cols) {
        return Err(Error::argument(format!(
            "a {rows}x{cols} grid does not evenly divide a {width}x{height} canvas"
        )));
    }
    let (cell_h, cell_w) = (height / rows, width / cols);
    let mut regions = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut idx = Vec::with_capacity(cell_h * cell_w);
            rect_indices(
                width,
                Rect {
                    x0: c * cell_w,
                    y0: r * cell_h,
                    x1: (c + 1) * cell_w,
                    y1: (r + 1) * cell_h,
                },
                &mut idx,
            );
            regions.push(Region::new(format!("grid{rows}x{cols}_r{r}c{c}"), width, height, idx)?);
        }
    }
    Ok(regions)
}

/// All pixels with `row_start <= row < row_end`.
pub fn band_region(width: usize, height: usize, row_start: usize, row_end: usize) -> Result<Region> {
    if row_start >= row_end || row_end > height {
        return Err(Error::argument(format!(
            "invalid band [{row_start}, {row_end}) on a canvas of height {height}"
        )));
    }
    Region::new(
        format!("band{row_start}-{row_end}"),
        width,
        height,
        (row_start * width..row_end * width).collect(),
    )
}

/// Union of rectangles.
pub fn rects_region(width: usize, height: usize, rects: &[Rect]) -> Result<Region> {
    let mut idx = Vec::new();
    for &r in rects {
        if r.x0 >= r.x1 || r.y0 >= r.y1 || r.x1 > width || r.y1 > height {
            return Err(Error::argument(format!(
                "rectangle {},{},{},{} is empty or outside the {width}x{height} canvas",
                r.x0, r.y0, r.x1, r.y1
            )));
        }
        rect_indices(width, r, &mut idx);
    }
    Region::new("rects", width, height, idx)
}

/// Default semi-local band covering eyes, nose and cheeks on a 64-row canvas.
pub fn default_semi_local(width: usize, height: usize) -> Result<Region> {
    band_region(width, height, height / 4, height * 5 / 8)
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::argument(format!("bad {what} '{s}' in region spec")))
}

/// Parses `grid:RxC`, `band:r0:r1` or `rects:x0,y0,x1,y1[;...]`.
pub fn parse_region_spec(spec: &str, width: usize, height: usize) -> Result<Vec<Region>> {
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| Error::argument(format!("region spec '{spec}' has no kind prefix")))?;
    match kind {
        "grid" => {
            let (r, c) = rest
                .split_once(['x', 'X'])
                .ok_or_else(|| Error::argument(format!("expected grid:RxC, got '{spec}'")))?;
            grid_regions(width, height, parse_usize(r, "rows")?, parse_usize(c, "cols")?)
        }
        "band" => {
            let (a, b) = rest
                .split_once(':')
                .ok_or_else(|| Error::argument(format!("expected band:r0:r1, got '{spec}'")))?;
            Ok(vec![band_region(
                width,
                height,
                parse_usize(a, "row")?,
                parse_usize(b, "row")?,
            )?])
        }
        "rects" => {
            let rects = rest
                .split(';')
                .filter(|s| !s.trim().is_empty())
                .map(|r| {
                    let parts: Vec<&str> = r.split(',').collect();
                    if parts.len() != 4 {
                        return Err(Error::argument(format!("rectangle '{r}' needs 4 coordinates")));
                    }
                    Ok(Rect {
                        x0: parse_usize(parts[0], "x0")?,
                        y0: parse_usize(parts[1], "y0")?,
                        x1: parse_usize(parts[2], "x1")?,
                        y1: parse_usize(parts[3], "y1")?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if rects.is_empty() {
                return Err(Error::argument("rects: spec lists no rectangles"));
            }
            Ok(vec![rects_region(width, height, &rects)?])
        }
        other => Err(Error::argument(format!("unknown region kind '{other}'"))),
    }
}

/// Trains a filter whose pixels all lie inside `region`.
pub fn train_local(
    faces: &[ImageVector],
    clutters: &[ImageVector],
    region: &Region,
    cfg: &TrainingConfig,
) -> Result<TrainingOutcome> {
    if cfg.n_black + cfg.n_white > region.len() {
        return Err(Error::argument(format!(
            "region {} has {} pixels, filter needs {}",
            region.name(),
            region.len(),
            cfg.n_black + cfg.n_white
        )));
    }
    let cfg = TrainingConfig {
        region: Some(region.clone()),
        ..cfg.clone()
    };
    train(faces, clutters, &cfg)
}

/// Local training config with the density-preserving default filter size.
pub fn local_config(region: &Region, base: &TrainingConfig) -> TrainingConfig {
    let n = region.default_filter_size();
    TrainingConfig {
        n_black: n,
        n_white: n,
        region: Some(region.clone()),
        ..base.clone()
    }
}
