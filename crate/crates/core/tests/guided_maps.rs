mod common;

use common::*;
use proptest::prelude::*;
use vqe_core::partition::{boundary_map, depth_map, mean_map, parse_tu_str, write_tu_string, TuPartition, TuSequence};
use vqe_core::LumaFrame;

#[test]
fn thousand_random_partitions() {
    let s = guided_suite(1000, 51).unwrap();
    assert_eq!(s.partitions, 1000);
    assert_eq!(s.mean_not_constant, 0);
    assert!(s.max_mean_gap <= 0.5, "{}", s.max_mean_gap);
    assert_eq!(s.boundary_mismatch, 0);
    assert_eq!(s.round_trip_failures, 0);
}

fn partition() -> impl Strategy<Value = (TuPartition, Vec<u8>)> {
    (1usize..=24, 1usize..=24, any::<u64>(), 0.0f64..1.0).prop_flat_map(|(w4, h4, seed, bias)| {
        let (w, h) = (w4 * 4, h4 * 4);
        let mut g = rng(seed);
        use rand::Rng;
        let p = TuPartition::quadtree(w, h, |_, _, _| g.gen_bool(bias)).unwrap();
        (Just(p), proptest::collection::vec(any::<u8>(), w * h))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn depth_matches_tu_size((p, px) in partition()) {
        let frame = LumaFrame::new(p.width, p.height, px).unwrap();
        let d = depth_map(&p);
        let m = mean_map(&frame, &p).unwrap();
        for tu in &p.tus {
            let expect = match tu.size { 32 => 1, 16 => 2, 8 => 3, _ => 4 };
            prop_assert_eq!(d.get(tu.x + tu.size - 1, tu.y), expect);
            let vals: Vec<f64> = (tu.y..tu.y + tu.size)
                .flat_map(|y| (tu.x..tu.x + tu.size).map(move |x| (x, y)))
                .map(|(x, y)| frame.get(x, y) as f64)
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            prop_assert!((m.get(tu.x, tu.y) as f64 - mean).abs() <= 0.5);
        }
    }

    #[test]
    fn boundary_only_on_tu_edges((p, _px) in partition()) {
        let b = boundary_map(&p);
        let ones = b.samples().iter().filter(|&&v| v == 1).count();
        prop_assert!(b.samples().iter().all(|&v| v <= 1));
        prop_assert_eq!(b.get(0, 0), 0);
        for y in 0..p.height {
            for x in 0..p.width {
                prop_assert!(b.get(x, y) == 0 || x % 4 == 0 || y % 4 == 0);
            }
        }
        if p.tus.len() == 1 { prop_assert_eq!(ones, 0); }
    }

    #[test]
    fn sidecar_round_trip((p, _px) in partition()) {
        let seq = TuSequence { width: p.width, height: p.height, frames: vec![p] };
        let text = write_tu_string(&seq);
        let back = parse_tu_str(&text).unwrap();
        prop_assert_eq!(&back, &seq);
        prop_assert_eq!(write_tu_string(&back), text);
    }
}

#[test]
fn parser_reports_offending_line() {
    let text = "# vqe-tu v1\ndims 8 8\nframe 0\n0 0 8\nframe 1\n0 0 4\n4 0 4\n0 4 4\n2 4 4\n";
    let e = parse_tu_str(text).unwrap_err();
    assert!(matches!(e, vqe_core::Error::Parse { line: 9, .. }), "{e}");
}
