use ckm_grid::ValueMap;
use proptest::prelude::*;

proptest! {
    #[test]
    fn pixel_gain_round_trip(
        g in -249.999f64..-50.001,
    ) {
        let m = ValueMap::CKM_IMAGE_NET;
        let back = m.db_of(m.pixel_of(g).unwrap()).unwrap();
        prop_assert!((back - g).abs() <= 1e-12 * g.abs());
    }

    #[test]
    fn pixel_always_in_unit_interval(
        g in -147.0f64..=-47.0,
    ) {
        let m = ValueMap::RADIO_MAP_SEER;
        let p = m.pixel_of(g).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
    }
}
