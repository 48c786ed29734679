use serde::{Deserialize, Serialize};

use crate::error::{GridError, Result};

/// Affine mapping between channel gains in dB and normalized pixel values in [0, 1].
///
/// `pixel = (gain - min_db) / (max_db - min_db)`, so pixel 0 corresponds to the
/// minimum gain (building sentinel) and pixel 1 to the maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueMap {
    pub min_db: f64,
    pub max_db: f64,
}

impl ValueMap {
    /// Channel gain convention of the CKMImageNet corpus: -250 dB to -50 dB.
    pub const CKM_IMAGE_NET: ValueMap = ValueMap {
        min_db: -250.0,
        max_db: -50.0,
    };

    /// Path loss convention of the RadioMapSeer corpus: threshold -147 dB up to -47 dB.
    pub const RADIO_MAP_SEER: ValueMap = ValueMap {
        min_db: -147.0,
        max_db: -47.0,
    };

    pub fn new(min_db: f64, max_db: f64) -> Result<Self> {
        if !(min_db < max_db) || !min_db.is_finite() || !max_db.is_finite() {
            return Err(GridError::InvalidValueMap { min_db, max_db });
        }
        Ok(ValueMap { min_db, max_db })
    }

    /// Width of the dB range, used when converting pixel-level errors to gain-level errors.
    pub fn span(&self) -> f64 {
        self.max_db - self.min_db
    }

    /// Normalized pixel value of a gain in dB.
    pub fn pixel_of(&self, gain_db: f64) -> Result<f64> {
        if gain_db < self.min_db || gain_db > self.max_db || !gain_db.is_finite() {
            return Err(GridError::OutOfRange {
                value: gain_db,
                min: self.min_db,
                max: self.max_db,
            });
        }
        Ok((gain_db - self.min_db) / self.span())
    }

    /// Gain in dB of a normalized pixel value.
    pub fn db_of(&self, pixel: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&pixel) || !pixel.is_finite() {
            return Err(GridError::OutOfRange {
                value: pixel,
                min: 0.0,
                max: 1.0,
            });
        }
        Ok(pixel * self.span() + self.min_db)
    }
}

/// Free-function form of [`ValueMap::pixel_of`].
pub fn pixel_of_gain(gain_db: f64, map: &ValueMap) -> Result<f64> {
    map.pixel_of(gain_db)
}

/// Free-function form of [`ValueMap::db_of`].
pub fn gain_of_pixel(pixel: f64, map: &ValueMap) -> Result<f64> {
    map.db_of(pixel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ckm_image_net_endpoints() {
        let m = ValueMap::CKM_IMAGE_NET;
        assert_eq!(m.pixel_of(-50.0).unwrap(), 1.0);
        assert_eq!(m.pixel_of(-250.0).unwrap(), 0.0);
    }

    #[test]
    fn radio_map_seer_endpoints() {
        let m = ValueMap::RADIO_MAP_SEER;
        assert_eq!(m.pixel_of(-147.0).unwrap(), 0.0);
        assert_eq!(m.db_of(1.0).unwrap(), -47.0);
    }

    #[test]
    fn affine_examples() {
        let m = ValueMap::CKM_IMAGE_NET;
        assert_relative_eq!(m.db_of(0.5).unwrap(), -150.0);
        let r = ValueMap::RADIO_MAP_SEER;
        assert_relative_eq!(r.db_of(0.25).unwrap(), -122.0);
    }

    #[test]
    fn out_of_range_rejected() {
        let m = ValueMap::RADIO_MAP_SEER;
        assert!(m.pixel_of(-146.9).is_ok());
        assert!(m.pixel_of(-147.1).is_err());
        assert!(m.db_of(1.0 + 1e-9).is_err());
        assert!(m.db_of(-0.1).is_err());
    }

    #[test]
    fn invalid_map_rejected() {
        assert!(ValueMap::new(-47.0, -147.0).is_err());
        assert!(ValueMap::new(0.0, 0.0).is_err());
    }

    #[test]
    fn round_trip_1000_points() {
        let m = ValueMap::CKM_IMAGE_NET;
        for i in 0..1000 {
            let g = m.min_db + m.span() * (i as f64 / 999.0);
            let back = m.db_of(m.pixel_of(g).unwrap()).unwrap();
            assert_relative_eq!(back, g, max_relative = 1e-12);
        }
    }
}
