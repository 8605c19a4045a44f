//! Linear measurement operators for column-subsampled acquisition.
//!
//! The forward model is `y = A x + n` where `A` selects a subset of image
//! coordinates (whole columns for the scan-line task, arbitrary pixels for
//! the generic mask) and `n` is optional white Gaussian noise. Selection
//! operators make the adjoint a scatter and `A^T A` an orthogonal
//! projection, which the tests rely on.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::field::ImageField;
use crate::rng::rng_from_seed;

/// Mask structure of a selection operator.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskKind {
    /// Keeps whole columns; indices ascending.
    Columns(Vec<usize>),
    /// Keeps individual pixels.
    Pixels(Array2<bool>),
    /// Keeps everything.
    Identity,
}

/// A masking measurement operator on `height x width` images, with the
/// standard deviation of its additive observation noise.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOperator {
    height: usize,
    width: usize,
    kind: MaskKind,
    noise_std: f64,
}

/// Measured data `y` for one frame.
#[derive(Debug, Clone)]
pub struct Observation {
    pub values: Vec<f64>,
    pub op: LinearOperator,
    pub frame_index: usize,
}

impl LinearOperator {
    /// Uniformly samples `round(keep_fraction * width)` distinct kept
    /// columns. The same seed always selects the same columns.
    pub fn column_mask(
        height: usize,
        width: usize,
        keep_fraction: f64,
        noise_std: f64,
        seed: u64,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("image shape must be nonzero"));
        }
        if !(keep_fraction > 0.0) || keep_fraction > 1.0 {
            return Err(Error::invalid(format!(
                "keep_fraction must lie in (0, 1], got {keep_fraction}"
            )));
        }
        let count = (keep_fraction * width as f64).round() as usize;
        if count == 0 {
            return Err(Error::invalid(format!(
                "keep_fraction {keep_fraction} keeps no columns at width {width}"
            )));
        }
        let mut rng = rng_from_seed(seed);
        let mut kept = rand::seq::index::sample(&mut rng, width, count).into_vec();
        kept.sort_unstable();
        Self::from_kept_columns(height, width, kept, noise_std)
    }

    /// Builds a column mask from explicit kept indices.
    pub fn from_kept_columns(
        height: usize,
        width: usize,
        kept: Vec<usize>,
        noise_std: f64,
    ) -> Result<Self> {
        if kept.is_empty() {
            return Err(Error::invalid("mask must keep at least one column"));
        }
        if kept.windows(2).any(|w| w[0] >= w[1]) || *kept.last().unwrap() >= width {
            return Err(Error::invalid("kept columns must be ascending and within width"));
        }
        if noise_std < 0.0 {
            return Err(Error::invalid("noise_std must be nonnegative"));
        }
        Ok(Self { height, width, kind: MaskKind::Columns(kept), noise_std })
    }

    pub fn pixel_mask(mask: Array2<bool>, noise_std: f64) -> Result<Self> {
        if !mask.iter().any(|&m| m) {
            return Err(Error::invalid("mask must keep at least one pixel"));
        }
        let (height, width) = mask.dim();
        Ok(Self { height, width, kind: MaskKind::Pixels(mask), noise_std })
    }

    pub fn identity(height: usize, width: usize, noise_std: f64) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("image shape must be nonzero"));
        }
        Ok(Self { height, width, kind: MaskKind::Identity, noise_std })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn kind(&self) -> &MaskKind {
        &self.kind
    }

    /// Number of observed coordinates `m`.
    pub fn observed_len(&self) -> usize {
        match &self.kind {
            MaskKind::Columns(kept) => self.height * kept.len(),
            MaskKind::Pixels(mask) => mask.iter().filter(|&&m| m).count(),
            MaskKind::Identity => self.height * self.width,
        }
    }

    fn check_image(&self, x: &Array2<f64>) -> Result<()> {
        if x.dim() != (self.height, self.width) {
            return Err(Error::shape(
                format!("({}, {})", self.height, self.width),
                format!("{:?}", x.dim()),
            ));
        }
        Ok(())
    }

    fn check_measurement(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.observed_len() {
            return Err(Error::shape(
                format!("measurement of length {}", self.observed_len()),
                format!("length {}", y.len()),
            ));
        }
        Ok(())
    }

    /// Extracts kept coordinates in row-major order of the kept columns.
    pub fn forward_raw(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        self.check_image(x)?;
        let mut y = Vec::with_capacity(self.observed_len());
        match &self.kind {
            MaskKind::Columns(kept) => {
                for r in 0..self.height {
                    for &c in kept {
                        y.push(x[[r, c]]);
                    }
                }
            }
            MaskKind::Pixels(mask) => {
                for (v, &m) in x.iter().zip(mask.iter()) {
                    if m {
                        y.push(*v);
                    }
                }
            }
            MaskKind::Identity => y.extend(x.iter().copied()),
        }
        Ok(y)
    }

    pub fn forward(&self, x: &ImageField) -> Result<Vec<f64>> {
        self.forward_raw(x.values())
    }

    /// Scatters a measurement back into image coordinates, zero elsewhere.
    pub fn adjoint(&self, y: &[f64]) -> Result<Array2<f64>> {
        self.check_measurement(y)?;
        let mut x = Array2::zeros((self.height, self.width));
        match &self.kind {
            MaskKind::Columns(kept) => {
                let mut it = y.iter();
                for r in 0..self.height {
                    for &c in kept {
                        x[[r, c]] = *it.next().unwrap();
                    }
                }
            }
            MaskKind::Pixels(mask) => {
                let mut it = y.iter();
                for (v, &m) in x.iter_mut().zip(mask.iter()) {
                    if m {
                        *v = *it.next().unwrap();
                    }
                }
            }
            MaskKind::Identity => {
                for (v, src) in x.iter_mut().zip(y.iter()) {
                    *v = *src;
                }
            }
        }
        Ok(x)
    }

    /// Measures a frame: `y = A x + noise_std * g` with seeded normal `g`.
    pub fn observe(&self, x: &ImageField, frame_index: usize, seed: u64) -> Result<Observation> {
        let mut values = self.forward(x)?;
        if self.noise_std > 0.0 {
            let mut rng = rng_from_seed(seed);
            for v in values.iter_mut() {
                *v += self.noise_std * rng.sample::<f64, _>(StandardNormal);
            }
        }
        Ok(Observation { values, op: self.clone(), frame_index })
    }

    /// Deterministic single-frame reconstruction: kept columns are copied
    /// and each dropped column is linearly interpolated between its nearest
    /// kept neighbors (nearest-copy at the borders). Pixel masks fall back
    /// to the plain adjoint scatter.
    pub fn fill(&self, y: &[f64]) -> Result<Array2<f64>> {
        self.check_measurement(y)?;
        match &self.kind {
            MaskKind::Identity | MaskKind::Pixels(_) => self.adjoint(y),
            MaskKind::Columns(kept) => {
                let mut x = self.adjoint(y)?;
                let mut next_kept = vec![None; self.width];
                let mut prev_kept = vec![None; self.width];
                let mut last = None;
                for c in 0..self.width {
                    if kept.binary_search(&c).is_ok() {
                        last = Some(c);
                    }
                    prev_kept[c] = last;
                }
                let mut next = None;
                for c in (0..self.width).rev() {
                    if kept.binary_search(&c).is_ok() {
                        next = Some(c);
                    }
                    next_kept[c] = next;
                }
                for c in 0..self.width {
                    if kept.binary_search(&c).is_ok() {
                        continue;
                    }
                    match (prev_kept[c], next_kept[c]) {
                        (Some(l), Some(r)) => {
                            let w = (c - l) as f64 / (r - l) as f64;
                            for row in 0..self.height {
                                x[[row, c]] = (1.0 - w) * x[[row, l]] + w * x[[row, r]];
                            }
                        }
                        (Some(l), None) => {
                            for row in 0..self.height {
                                x[[row, c]] = x[[row, l]];
                            }
                        }
                        (None, Some(r)) => {
                            for row in 0..self.height {
                                x[[row, c]] = x[[row, r]];
                            }
                        }
                        (None, None) => unreachable!("mask keeps at least one column"),
                    }
                }
                Ok(x)
            }
        }
    }

    /// Serializes a column mask as one text line of ascending kept indices.
    pub fn kept_columns_line(&self) -> Option<String> {
        match &self.kind {
            MaskKind::Columns(kept) => Some(
                kept.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","),
            ),
            _ => None,
        }
    }

    /// Short stable identifier derived from the mask contents.
    pub fn mask_id(&self) -> String {
        // FNV-1a over the kept coordinate pattern.
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |byte: u8| {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        };
        match &self.kind {
            MaskKind::Columns(kept) => {
                for &c in kept {
                    for b in (c as u64).to_le_bytes() {
                        eat(b);
                    }
                }
            }
            MaskKind::Pixels(mask) => {
                for &m in mask.iter() {
                    eat(m as u8);
                }
            }
            MaskKind::Identity => eat(0xff),
        }
        format!("{h:016x}")
    }
}

/// Writes one text line per mask: comma-separated kept-column indices.
pub fn save_column_masks(masks: &[&LinearOperator], path: &std::path::Path) -> Result<()> {
    let mut out = String::new();
    for op in masks {
        let line = op.kept_columns_line().ok_or_else(|| {
            Error::invalid("only column masks have a text representation")
        })?;
        out.push_str(&line);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads masks written by [`save_column_masks`].
pub fn load_column_masks(
    path: &std::path::Path,
    height: usize,
    width: usize,
    noise_std: f64,
) -> Result<Vec<LinearOperator>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut masks = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let kept: std::result::Result<Vec<usize>, _> =
            line.split(',').map(|tok| tok.trim().parse::<usize>()).collect();
        let kept = kept.map_err(|e| {
            Error::format(
                path.display().to_string(),
                None,
                format!("line {}: bad column index: {e}", line_no + 1),
            )
        })?;
        masks.push(LinearOperator::from_kept_columns(height, width, kept, noise_std)?);
    }
    Ok(masks)
}
