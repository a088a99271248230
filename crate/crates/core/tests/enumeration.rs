use std::collections::BTreeSet;

use hyperlat::hypgeom::{cartan_radius, Mat2, RhoParam};
use hyperlat::latenum::*;
use hyperlat::numberfield::QuadInt;
use hyperlat::quaternion::{congruence_test, embed_matrix, quat_mul, quat_norm, AlgebraDesc, QuatElt};

fn alg() -> AlgebraDesc {
    AlgebraDesc::preset_q17()
}

fn opts(strategy: &'static str) -> EnumOptions {
    EnumOptions {
        strategy,
        node_budget: u64::MAX,
        ..Default::default()
    }
}

fn coord_set(v: &[LatticeElement]) -> BTreeSet<[i64; 8]> {
    v.iter().map(|e| e.coords()).collect()
}

#[test]
fn gram_matrix_matches_golden_table() {
    let text = include_str!("golden/gram_q17.txt");
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split_whitespace().map(|x| x.parse().unwrap()).collect())
        .collect();
    let g = gram_matrix(&alg()).unwrap();
    for i in 0..8 {
        for j in 0..8 {
            let want = rows[i][j];
            assert!((g.g[i][j] - want).abs() <= 1e-12 * want.abs().max(1.0), "{i} {j}");
        }
    }
}

/// Largest Cartan radius any point of `[-b, b]^8` can have at either place.
fn box_radius(a: &AlgebraDesc, b: i64) -> f64 {
    let mut worst: f64 = 0.0;
    for p in 1..=2u8 {
        let mut f = 0.0;
        for k in 0..8 {
            let mut c = [0i64; 8];
            c[k] = 1;
            f += embed_matrix(&QuatElt::from_coords(&c), p, a).unwrap().frob2().sqrt();
        }
        let frob2 = (b as f64 * f).powi(2);
        worst = worst.max((frob2 / 2.0).max(1.0).acosh());
    }
    worst + 1e-6
}

#[test]
fn enumeration_equals_brute_force_on_boxes() {
    let a = alg();
    for b in 1..=3 {
        let brute: BTreeSet<[i64; 8]> = brute_force_units(&a, b, 10_000_000_000)
            .unwrap()
            .into_iter()
            .filter_map(|q| {
                let c = q.coords_i64().unwrap();
                let first = *c.iter().find(|&&x| x != 0).unwrap();
                (first > 0).then_some(c)
            })
            .collect();
        assert!(brute.contains(&[1, 0, 0, 0, 0, 0, 0, 0]));
        let r = box_radius(&a, b);
        for s in search_strategies().names() {
            let o = EnumOptions {
                coord_box: Some(b),
                ..opts(s)
            };
            let got = enumerate_units_with(&a, r, r, &o).unwrap();
            assert_eq!(coord_set(&got), brute, "box {b} strategy {s}");
        }
    }
}

#[test]
fn brute_force_outputs_have_norm_one() {
    let a = alg();
    let v = brute_force_units(&a, 2, u64::MAX).unwrap();
    // Both signs are listed.
    assert_eq!(v.len() % 2, 0);
    for q in v {
        assert_eq!(quat_norm(&q, &a).unwrap(), QuadInt::ONE);
    }
}

#[test]
fn count_at_radius_two_matches_brute_force() {
    let a = alg();
    // The box that certainly contains every unit with t1, t2 <= 2.
    let g = search_form(&a, &[PlaceBall::centered(1, 2.0), PlaceBall::centered(2, 2.0)]).unwrap();
    let inv = fp::invert(&g.g).unwrap();
    let b = (0..8).map(|i| (4.0 * inv[i][i]).sqrt().floor() as i64).max().unwrap();
    assert!(b <= 4, "box {b}");
    let brute: Vec<QuatElt> = brute_force_units(&a, b, u64::MAX)
        .unwrap()
        .into_iter()
        .filter(|q| {
            let c = q.coords_i64().unwrap();
            c.iter().find(|&&x| x != 0).is_some_and(|&x| x > 0)
                && (1..=2).all(|p| cartan_radius(&embed_matrix(q, p, &a).unwrap(), RhoParam::Half).unwrap() <= 2.0)
        })
        .collect();
    let got = enumerate_units(&a, 2.0, 2.0, None).unwrap();
    assert_eq!(got.len(), brute.len());
    assert_eq!(got.len(), 1);
}

#[test]
fn strategies_agree_on_varied_regions() {
    let a = alg();
    let off = Mat2::a_t(0.7) * Mat2::k_theta(0.4);
    let cases = [
        [PlaceBall::centered(1, 4.5), PlaceBall::centered(2, 4.5)],
        [PlaceBall::centered(1, 1.0), PlaceBall::centered(2, 8.0)],
        [PlaceBall::centered(1, 7.0), PlaceBall::centered(2, 2.5)],
        [
            PlaceBall {
                place: 1,
                left: off.inv_unimodular(),
                right: Mat2::n_y(0.3),
                radius: 1.5,
            },
            PlaceBall::centered(2, 7.0),
        ],
    ];
    for balls in cases {
        let (x, _) = units_in_balls(&a, &balls, &opts("norm-solve")).unwrap();
        let (y, _) = units_in_balls(&a, &balls, &opts("full-lattice")).unwrap();
        assert_eq!(coord_set(&x), coord_set(&y));
        for e in &x {
            for b in &balls {
                assert!(b.displacement(e.matrices.get(b.place)).unwrap() <= b.radius + 1e-9);
            }
        }
    }
}

#[test]
fn elements_satisfy_invariants_and_are_sorted() {
    let a = alg();
    let v = enumerate_units(&a, 5.0, 5.0, None).unwrap();
    assert_eq!(v.len(), 11);
    for e in &v {
        assert_eq!(quat_norm(&e.q, &a).unwrap(), QuadInt::ONE);
        for p in 1..=2u8 {
            let t = cartan_radius(&embed_matrix(&e.q, p, &a).unwrap(), RhoParam::Half).unwrap();
            let stored = if p == 1 { e.radii.0 } else { e.radii.1 };
            assert!((t - stored).abs() <= 1e-9);
        }
    }
    let mut sorted = v.clone();
    sort_elements(&mut sorted);
    assert_eq!(sorted, v);
}

#[test]
fn frozen_counts() {
    let a = alg();
    let o = opts(DEFAULT_STRATEGY);
    assert_eq!(enumerate_units_with(&a, 3.0, 3.0, &o).unwrap().len(), 3);
    assert_eq!(enumerate_units_with(&a, 4.0, 4.0, &o).unwrap().len(), 11);
    assert_eq!(enumerate_sum_region(&a, 10.0, &o).unwrap().len(), 35);
    assert_eq!(enumerate_sum_region(&a, 12.0, &o).unwrap().len(), 201);
}

#[test]
fn group_closure_under_multiplication() {
    let a = alg();
    let o = opts(DEFAULT_STRATEGY);
    let small = enumerate_units_with(&a, 4.0, 4.0, &o).unwrap();
    let big = coord_set(&enumerate_units_with(&a, 8.0, 8.0, &o).unwrap());
    for x in &small {
        for y in &small {
            let xy = quat_mul(&x.q, &y.q, &a).unwrap().canonical_sign().unwrap();
            let e = LatticeElement::from_quat(xy, &a).unwrap();
            assert!(e.radii.0 <= x.radii.0 + y.radii.0 + 1e-9);
            assert!(e.radii.1 <= x.radii.1 + y.radii.1 + 1e-9);
            assert!(big.contains(&e.coords()));
        }
    }
}

#[test]
fn congruence_filter_is_a_subset() {
    let a = alg();
    let all = enumerate_units(&a, 7.0, 7.0, None).unwrap();
    for q in [2u64, 3] {
        let sub = enumerate_units(&a, 7.0, 7.0, Some(q)).unwrap();
        assert!(coord_set(&sub).is_subset(&coord_set(&all)));
        let expect: Vec<_> = all.iter().filter(|e| congruence_test(&e.q, q)).cloned().collect();
        assert_eq!(sub, expect);
    }
}

#[test]
fn output_is_independent_of_thread_count() {
    let a = alg();
    let run = |n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
            .install(|| enumerate_sum_region(&a, 11.0, &opts(DEFAULT_STRATEGY)).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one, four);
    assert_eq!(elements_csv(&one, &a).unwrap(), elements_csv(&four, &a).unwrap());
}

#[test]
fn histogram_properties() {
    let a = alg();
    let h = count_by_radius(&a, 10.0, 100, &opts(DEFAULT_STRATEGY)).unwrap();
    assert_eq!(h.sum_cumulative[0], 1);
    assert_eq!(h.max_cumulative[0], 1);
    assert!(h.sum_cumulative.windows(2).all(|w| w[0] <= w[1]));
    assert!(h.max_cumulative.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(*h.sum_cumulative.last().unwrap(), 35);
}

#[test]
fn unknown_strategy_is_reported() {
    let e = enumerate_units_with(&alg(), 1.0, 1.0, &opts("nope")).unwrap_err();
    assert!(e.to_string().contains("norm-solve"));
}

#[test]
fn cache_file_roundtrip() {
    let a = alg();
    let v = enumerate_units(&a, 5.0, 5.0, None).unwrap();
    let dir = std::env::temp_dir().join(format!("hyperlat-cache-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("units.bin");
    assert!(read_cache(&path, b"key", &a).unwrap().is_none());
    write_cache(&path, b"key", &v).unwrap();
    assert_eq!(read_cache(&path, b"key", &a).unwrap().unwrap(), v);
    std::fs::remove_dir_all(&dir).unwrap();
}
