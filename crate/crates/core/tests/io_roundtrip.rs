use proptest::prelude::*;
use saliency::frame_io::{read_saliency, write_saliency};
use saliency::raster::Plane;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn saliency_png_round_trips_within_one_level(
        w in 1usize..12,
        h in 1usize..12,
        seed in proptest::collection::vec(0.0f64..=1.0, 144),
    ) {
        let map = Plane::from_fn(w, h, |x, y| seed[y * 12 + x]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        write_saliency(&map, &path).unwrap();
        let back = read_saliency(&path).unwrap();
        prop_assert_eq!((back.width(), back.height()), (w, h));
        for (a, b) in map.data().iter().zip(back.data()) {
            prop_assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }
}

#[test]
fn out_of_range_maps_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let map = Plane::from_vec(2, 1, vec![0.5, 1.2]);
    assert!(write_saliency(&map, &dir.path().join("bad.png")).is_err());
}
