use proptest::prelude::*;

use diffeoflow::diffeo::{DiffeoMap, MapChain};
use diffeoflow::field::{Grid, PeriodicField};
use diffeoflow::io::{
    decode_chain, decode_field, decode_map, decode_trajectory, encode_chain, encode_field, encode_map,
    encode_trajectory,
};
use diffeoflow::solvers::{Trajectory, TrajectoryMeta};

fn grid() -> impl Strategy<Value = Grid> {
    (2usize..6, 2usize..6).prop_map(|(a, b)| Grid::new(2 * a, 2 * b).unwrap())
}

fn field(g: Grid, channels: usize) -> impl Strategy<Value = PeriodicField> {
    prop::collection::vec(-1e3f64..1e3, g.len() * channels)
        .prop_map(move |d| PeriodicField::new(g, channels, d).unwrap())
}

fn map(g: Grid) -> impl Strategy<Value = DiffeoMap> {
    prop::collection::vec(-0.05f64..0.05, 8 * g.len()).prop_map(move |d| {
        let planes: Vec<&[f64]> = d.chunks(g.len()).collect();
        DiffeoMap::from_planes(g, planes.try_into().unwrap()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn field_round_trip((f, ch) in grid().prop_flat_map(|g| (1usize..3).prop_flat_map(move |c| (field(g, c), Just(c))))) {
        let back = decode_field(&encode_field(&f)).unwrap();
        prop_assert_eq!(back.channels(), ch);
        prop_assert_eq!(back, f);
    }

    #[test]
    fn map_round_trip(m in grid().prop_flat_map(map)) {
        let back = decode_map(&encode_map(&m)).unwrap();
        prop_assert_eq!(back.planes(), m.planes());
    }

    #[test]
    fn chain_round_trip(maps in grid().prop_flat_map(|g| prop::collection::vec(map(g), 0..4))) {
        let chain = MapChain::from_maps(maps).unwrap();
        let back = decode_chain(&encode_chain(&chain)).unwrap();
        prop_assert_eq!(back.len(), chain.len());
        for (a, b) in back.maps().iter().zip(chain.maps()) {
            prop_assert_eq!(a.planes(), b.planes());
        }
    }

    #[test]
    fn trajectory_round_trip(frames in grid().prop_flat_map(|g| prop::collection::vec(field(g, 1), 1..4)), dt in 1e-4f64..1.0) {
        let meta = TrajectoryMeta { solver: "test".into(), seed: Some(3), remap_every: 1, step_dt: dt, note: String::new() };
        let t = Trajectory::new(frames[0].grid(), dt, frames, None, meta).unwrap();
        prop_assert_eq!(decode_trajectory(&encode_trajectory(&t).unwrap()).unwrap(), t);
    }

    #[test]
    fn truncated_archives_are_rejected(f in grid().prop_flat_map(|g| field(g, 1)), cut in 1usize..40) {
        let bytes = encode_field(&f);
        prop_assert!(decode_field(&bytes[..bytes.len() - cut.min(bytes.len())]).is_err());
    }
}
