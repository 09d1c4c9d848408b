mod common;

use bodygps::{DescriptorLayout, IntensityWindow, Sampler, WorldPoint};
use proptest::prelude::*;

/// Multiples of 1/8 mm keep every coordinate sum exact in f64.
fn dyadic(range: std::ops::Range<i32>) -> impl Strategy<Value = f64> {
    range.prop_map(|v| v as f64 / 8.0)
}

fn point(range: std::ops::Range<i32>) -> impl Strategy<Value = [f64; 3]> {
    [dyadic(range.clone()), dyadic(range.clone()), dyadic(range)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn translating_volume_and_query_gives_the_same_descriptor(
        seed in any::<u64>(),
        origin in point(-800..800),
        p in point(-400..1200),
        t in point(-4000..4000),
    ) {
        let sampler = Sampler::new(DescriptorLayout::default_layout(), IntensityWindow::default());
        let v = common::random_volume(seed, [30, 26, 22], [2.0, 2.0, 3.0], origin);
        let moved = v.with_origin([origin[0] + t[0], origin[1] + t[1], origin[2] + t[2]]).unwrap();
        let p = WorldPoint::from(p);
        let a = sampler.extract(&v, p);
        let b = sampler.extract(&moved, p.offset(t));
        prop_assert_eq!(a, b);
    }
}

#[test]
fn extraction_is_deterministic_and_sized_by_the_layout() {
    let sampler = Sampler::new(DescriptorLayout::default_layout(), IntensityWindow::default());
    let v = common::random_volume(3, [40, 40, 40], [1.5; 3], [0.0; 3]);
    let p = WorldPoint::new(30.0, 31.0, 29.5);
    let a = sampler.extract(&v, p);
    assert_eq!(a.len(), 7290);
    assert_eq!(a, sampler.extract(&v, p));
    assert!(a.values.iter().all(|x| (0.0..=1.0).contains(x)));
}

/// Samples are placed in millimetres, so a volume whose intensity is a
/// function of world position yields the same descriptor at any resolution
/// that resolves that function.
#[test]
fn descriptor_depends_on_world_content_not_voxel_size() {
    use bodygps::{Geometry, Volume};
    let sampler = Sampler::new(DescriptorLayout::default_layout(), IntensityWindow::default());
    // constant on 8 mm cells aligned with the origin
    let f = |q: WorldPoint| (((q.x / 8.0).floor() + 3.0 * (q.y / 8.0).floor() + 7.0 * (q.z / 8.0).floor()) * 10.0) as f32;
    let coarse = Volume::from_fn(Geometry::new([48; 3], [2.0; 3], [-47.0; 3]).unwrap(), -1024.0, f).unwrap();
    let fine = Volume::from_fn(Geometry::new([96; 3], [1.0; 3], [-47.5; 3]).unwrap(), -1024.0, f).unwrap();
    // voxel boundaries of both grids include every cell boundary, and no
    // sample lands on an integer coordinate
    for p in [WorldPoint::new(1.25, 2.25, 3.25), WorldPoint::new(-13.25, 20.75, 9.25)] {
        assert_eq!(sampler.extract(&coarse, p), sampler.extract(&fine, p));
    }
}
