use ndarray::Array2;

use crate::error::{GridError, Result};
use crate::value_map::ValueMap;

/// A channel knowledge map: an `l x w` field of channel gains in dB together with
/// the pixel mapping convention and an optional building mask.
///
/// Where the mask is true the gain carries the sentinel `min_db` rather than
/// channel data. Grids are immutable after construction.
#[derive(Debug, Clone)]
pub struct CkmGrid {
    gains: Array2<f64>,
    value_map: ValueMap,
    building_mask: Option<Array2<bool>>,
}

impl CkmGrid {
    pub fn new(
        gains: Array2<f64>,
        value_map: ValueMap,
        building_mask: Option<Array2<bool>>,
    ) -> Result<Self> {
        let (l, w) = gains.dim();
        if l == 0 || w == 0 {
            return Err(GridError::Shape("grid dimensions must be positive".into()));
        }
        for &g in gains.iter() {
            if g < value_map.min_db || g > value_map.max_db || !g.is_finite() {
                return Err(GridError::OutOfRange {
                    value: g,
                    min: value_map.min_db,
                    max: value_map.max_db,
                });
            }
        }
        if let Some(mask) = &building_mask {
            if mask.dim() != gains.dim() {
                return Err(GridError::Shape(format!(
                    "mask shape {:?} does not match grid shape {:?}",
                    mask.dim(),
                    gains.dim()
                )));
            }
            for ((r, c), &inside) in mask.indexed_iter() {
                if inside && gains[(r, c)] != value_map.min_db {
                    return Err(GridError::Invariant(format!(
                        "building cell ({r}, {c}) must carry the sentinel {} dB, found {}",
                        value_map.min_db,
                        gains[(r, c)]
                    )));
                }
            }
        }
        Ok(CkmGrid {
            gains,
            value_map,
            building_mask,
        })
    }

    /// Builds a grid from normalized pixel values in [0, 1].
    pub fn from_pixels(
        pixels: Array2<f64>,
        value_map: ValueMap,
        building_mask: Option<Array2<bool>>,
    ) -> Result<Self> {
        let mut gains = Array2::zeros(pixels.dim());
        for ((r, c), &p) in pixels.indexed_iter() {
            gains[(r, c)] = value_map.db_of(p)?;
        }
        CkmGrid::new(gains, value_map, building_mask)
    }

    pub fn height(&self) -> usize {
        self.gains.nrows()
    }

    pub fn width(&self) -> usize {
        self.gains.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.gains.dim()
    }

    pub fn gains(&self) -> &Array2<f64> {
        &self.gains
    }

    pub fn value_map(&self) -> &ValueMap {
        &self.value_map
    }

    pub fn building_mask(&self) -> Option<&Array2<bool>> {
        self.building_mask.as_ref()
    }

    /// Normalized pixel view of the grid.
    pub fn pixels(&self) -> Array2<f64> {
        self.gains
            .mapv(|g| (g - self.value_map.min_db) / self.value_map.span())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_out_of_range_gain() {
        let gains = array![[-50.0, -40.0]];
        assert!(CkmGrid::new(gains, ValueMap::CKM_IMAGE_NET, None).is_err());
    }

    #[test]
    fn rejects_non_sentinel_building_cell() {
        let gains = array![[-100.0, -60.0]];
        let mask = array![[true, false]];
        assert!(CkmGrid::new(gains, ValueMap::CKM_IMAGE_NET, Some(mask)).is_err());
    }

    #[test]
    fn pixel_round_trip() {
        let gains = array![[-250.0, -150.0], [-100.0, -50.0]];
        let grid = CkmGrid::new(gains.clone(), ValueMap::CKM_IMAGE_NET, None).unwrap();
        let px = grid.pixels();
        let back = CkmGrid::from_pixels(px, ValueMap::CKM_IMAGE_NET, None).unwrap();
        for (a, b) in gains.iter().zip(back.gains().iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
