//! Image fields and their value spaces.
//!
//! All pixel data moves through the crate as an `H x W` grid of `f64`.
//! Two value conventions coexist: measurement data and metrics live in
//! `[0, 1]` (data space), while diffusion runs on the zero-centered
//! affine image `z = 2x - 1` in `[-1, 1]` (model space), matching the
//! standard-normal base distribution.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Which value convention a field's pixels follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    /// Values in `[0, 1]`.
    Data,
    /// Values in `[-1, 1]`, the affine map `z = 2x - 1` of a data-space field.
    Model,
}

/// A real-valued `H x W` frame tagged with its value space.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageField {
    values: Array2<f64>,
    space: Space,
}

impl ImageField {
    /// Wraps a grid of values, checking the range invariant of the space.
    pub fn new(values: Array2<f64>, space: Space) -> Result<Self> {
        let (lo, hi) = match space {
            Space::Data => (0.0, 1.0),
            Space::Model => (-1.0, 1.0),
        };
        for &v in values.iter() {
            if !v.is_finite() || v < lo || v > hi {
                return Err(Error::invalid(format!(
                    "field value {v} outside {space:?}-space range [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { values, space })
    }

    /// Wraps a grid without range checking. For noise fields and
    /// intermediate diffusion states, which are unbounded.
    pub fn from_raw(values: Array2<f64>, space: Space) -> Self {
        Self { values, space }
    }

    pub fn zeros(height: usize, width: usize, space: Space) -> Self {
        Self { values: Array2::zeros((height, width)), space }
    }

    pub fn height(&self) -> usize {
        self.values.nrows()
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height(), self.width())
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    /// Maps a data-space field to model space via `z = 2x - 1`.
    pub fn to_model(&self) -> ImageField {
        debug_assert_eq!(self.space, Space::Data);
        ImageField { values: self.values.mapv(|x| 2.0 * x - 1.0), space: Space::Model }
    }

    /// Maps a model-space field back to data space, clamping to `[0, 1]`.
    pub fn to_data(&self) -> ImageField {
        debug_assert_eq!(self.space, Space::Model);
        ImageField {
            values: self.values.mapv(|z| ((z + 1.0) / 2.0).clamp(0.0, 1.0)),
            space: Space::Data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Converts raw model-space values to a clamped data-space field.
pub fn model_values_to_data(values: &Array2<f64>) -> ImageField {
    ImageField {
        values: values.mapv(|z| ((z + 1.0) / 2.0).clamp(0.0, 1.0)),
        space: Space::Data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn range_check_rejects_out_of_space_values() {
        let bad = array![[0.5, 1.2]];
        assert!(ImageField::new(bad, Space::Data).is_err());
        let ok = array![[0.5, 1.0]];
        assert!(ImageField::new(ok, Space::Data).is_ok());
    }

    #[test]
    fn model_round_trip_is_affine() {
        let x = ImageField::new(array![[0.0, 0.25], [0.5, 1.0]], Space::Data).unwrap();
        let z = x.to_model();
        assert_eq!(z.values()[[0, 0]], -1.0);
        assert_eq!(z.values()[[1, 1]], 1.0);
        let back = z.to_data();
        for (a, b) in back.values().iter().zip(x.values().iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn to_data_clamps_overshoot() {
        let z = ImageField::from_raw(array![[-1.4, 1.7]], Space::Model);
        let x = z.to_data();
        assert_eq!(x.values()[[0, 0]], 0.0);
        assert_eq!(x.values()[[0, 1]], 1.0);
    }
}
