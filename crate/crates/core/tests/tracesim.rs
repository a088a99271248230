use std::collections::BTreeMap;

use hyperlat::hypgeom::{Mat2, RhoParam};
use hyperlat::latenum::{enumerate_units_with, EnumOptions, IsometryPair};
use hyperlat::quad::{integrate_real, QuadTol};
use hyperlat::quaternion::AlgebraDesc;
use hyperlat::spectral::{profile_families, Bump, RadialProfile};
use hyperlat::tracesim::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const D22: [usize; 2] = [2, 2];

fn map(v: &[(usize, f64)]) -> BTreeMap<usize, f64> {
    v.iter().copied().collect()
}

#[test]
fn estimator_examples() {
    let full = PartitionShape::from_mask(1, 2, 0b11).unwrap();
    let zeros = map(&[(0, 0.0), (1, 0.0)]);
    let h = estimator_h(0.3, 5.0, &full, &map(&[]), &zeros, 4, &D22).unwrap();
    assert!((h - 0.09).abs() < 1e-15);
    // R t = 1 on a J_pr factor.
    let h1 = estimator_h(0.3, 5.0, &full, &map(&[]), &map(&[(0, 0.0), (1, 0.2)]), 4, &D22).unwrap();
    assert!((h1 / h - 1.0 / 16.0).abs() < 1e-15);

    let shape = PartitionShape::new(1, 2, &[], &[]).unwrap();
    let v = estimator_h(0.5, 1.0, &shape, &map(&[(1, 0.25)]), &map(&[]), 4, &D22).unwrap();
    // Direct product: r^{d_1} e^{2 s_2 (d_2 - 1) R}.
    let direct = 0.5f64 * 0.5 * (2.0 * 0.25 * 1.0 * 1.0f64).exp();
    assert!((v - direct).abs() < 1e-15 && (v - 0.25 * 0.5f64.exp()).abs() < 1e-15);
}

#[test]
fn estimator_rejects_mismatched_parameters() {
    let worst = PartitionShape::worst_case(1, 2).unwrap();
    let (s, t) = (map(&[(1, 0.2)]), map(&[(0, 1.0)]));
    assert!(estimator_h(0.1, 2.0, &worst, &s, &t, 4, &D22).is_ok());
    assert!(matches!(estimator_h(0.1, 2.0, &worst, &s, &t, 3, &D22), Err(TraceError::BadParam(_))));
    assert!(matches!(estimator_h(0.1, 2.0, &worst, &map(&[]), &t, 4, &D22), Err(TraceError::Mismatch(_))));
    assert!(matches!(estimator_h(0.1, 2.0, &worst, &s, &map(&[]), 4, &D22), Err(TraceError::Mismatch(_))));
    assert!(matches!(estimator_h(0.1, 2.0, &worst, &map(&[(0, 0.1), (1, 0.2)]), &t, 4, &D22), Err(TraceError::Mismatch(_))));
    assert!(matches!(estimator_h(0.1, 2.0, &worst, &s, &t, 4, &[2, 2, 2]), Err(TraceError::Mismatch(_))));
}

#[test]
fn trace_sum_basics() {
    let trivial = vec![SpectrumAtom::new(vec![Param::Principal(0.0); 2], 1).unwrap()];
    for (r, big_r) in [(0.5, 1.0), (0.01, 9.0)] {
        let v = trace_sum(&trivial, r, big_r, 4, &D22, 1).unwrap();
        assert!((v - r * r).abs() < 1e-15 * r * r);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut spec: Vec<SpectrumAtom> = (0..50)
        .map(|_| {
            let p = |rng: &mut ChaCha8Rng| {
                if rng.gen_bool(0.5) {
                    Param::Principal(rng.gen_range(0.0..20.0))
                } else {
                    Param::Complementary(rng.gen_range(0.01..0.45))
                }
            };
            SpectrumAtom::new(vec![p(&mut rng), p(&mut rng)], rng.gen_range(1..5)).unwrap()
        })
        .collect();
    let one = trace_breakdown(&spec, 0.05, 6.0, 4, &D22, 1).unwrap();
    assert!((one.total - one.by_mask.values().sum::<f64>()).abs() < 1e-15);
    for a in &mut spec {
        a.mult *= 2;
    }
    let two = trace_sum(&spec, 0.05, 6.0, 4, &D22, 1).unwrap();
    assert!((two - 2.0 * one.total).abs() <= 1e-14 * two);
    assert!(SpectrumAtom::new(vec![Param::Complementary(0.5)], 1).is_err());
    assert!(SpectrumAtom::new(vec![Param::Principal(1.0)], 0).is_err());
}

#[test]
fn tempered_spectrum_has_no_exponential_growth() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let spec: Vec<SpectrumAtom> = (0..200)
        .map(|_| SpectrumAtom::new(vec![Param::Principal(rng.gen_range(0.0..30.0)); 2], 1).unwrap())
        .collect();
    let shape = split_shape(1, &D22).unwrap();
    let mut prev = f64::INFINITY;
    for i in 1..=10 {
        let big_r = i as f64;
        let r = hyperlat::diophantine::schedule_r(big_r, &shape).unwrap();
        let ratio = trace_sum(&spec, r, big_r, 4, &D22, 1).unwrap() / (r * r);
        assert!(ratio <= 200.0 && ratio <= prev);
        prev = ratio;
    }
}

#[test]
fn synthetic_spectrum_contract() {
    let cfg = SynthConfig::desk(7);
    let s = synth_spectrum(&cfg).unwrap();
    assert!(s.atoms.len() > 1000);
    let cap = 0.5 - cfg.gap;
    for a in &s.atoms {
        for p in &a.params {
            match *p {
                Param::Complementary(x) => assert!(x > 0.0 && x <= cap),
                Param::Principal(t) => assert!(t > 0.0 && t <= cfg.t_max),
            }
        }
    }
    assert_eq!(density_grid_check(&s.atoms, &cfg.dims, &DensityGrid::standard(cfg.t_max)), None);
    assert_eq!(synth_spectrum(&cfg).unwrap(), s);
    assert_ne!(synth_spectrum(&SynthConfig::desk(8)).unwrap().atoms, s.atoms);

    let empty = SynthConfig {
        t_max: 0.0,
        comp_intensity: 0.0,
        ..SynthConfig::desk(1)
    };
    assert!(synth_spectrum(&empty).unwrap().atoms.is_empty());
    assert!(synth_spectrum(&SynthConfig { gap: 0.5, ..cfg.clone() }).is_err());

    // An intensity far above the bound is halved until it complies.
    let dense = SynthConfig {
        comp_intensity: 20.0,
        t_max: 20.0,
        ..SynthConfig::desk(2)
    };
    let d = synth_spectrum(&dense).unwrap();
    assert!(d.halvings >= 2 && d.scale < 0.5, "{}", d.halvings);
    assert_eq!(density_grid_check(&d.atoms, &dense.dims, &DensityGrid::standard(20.0)), None);
}

#[test]
fn density_check_basics() {
    assert!(density_count_check(&[], &D22, 0b01, &[0.0, 0.1], 10.0, 2.0, 0.1));
    let heavy = vec![SpectrumAtom::new(vec![Param::Principal(1.0), Param::Complementary(0.3)], 1_000).unwrap()];
    assert!(!density_count_check(&heavy, &D22, 0b01, &[0.0, 0.1], 10.0, 2.0, 0.1));
    // Outside the box in either coordinate: nothing counted.
    assert!(density_count_check(&heavy, &D22, 0b01, &[0.0, 0.3], 10.0, 2.0, 0.1));
    assert!(density_count_check(&heavy, &D22, 0b01, &[0.0, 0.1], 0.5, 2.0, 0.1));
    assert!(density_count_check(&heavy, &D22, 0b10, &[0.1, 0.0], 10.0, 2.0, 0.1));
}

#[test]
fn counting_function_vanishes_on_the_boundary() {
    let cfg = SynthConfig::desk(2024);
    let s = synth_spectrum(&cfg).unwrap();
    let big = cfg.t_max;
    for q in 0u32..4 {
        let all = count_in_box(&s.atoms, q, &[0.0, 0.0], &[big, big]);
        assert!(all > 0, "mask {q}");
        for j in 0..2 {
            let mut tau = [big, big];
            tau[j] = 0.0;
            let mut sigma = [0.0, 0.0];
            sigma[j] = 0.5;
            if q >> j & 1 == 1 {
                assert_eq!(count_in_box(&s.atoms, q, &[0.0, 0.0], &tau), 0);
            } else {
                assert_eq!(count_in_box(&s.atoms, q, &sigma, &[big, big]), 0);
            }
        }
    }
}

#[test]
fn trace_scaling_is_flat_and_worst_case_dominates() {
    for seed in [1, 2, 3, 2024] {
        let s = synth_spectrum(&SynthConfig::desk(seed)).unwrap();
        let rep = trace_scaling(&s.atoms, &D22, 1, 4, &[4.0, 6.0, 8.0, 10.0]).unwrap();
        assert!(rep.growth_exponent <= 0.5, "seed {seed}: {}", rep.growth_exponent);
        assert_eq!(rep.worst_mask, 0b01);
        assert!(rep.worst_dominates, "seed {seed}: {:?}", rep.rows);
        for row in &rep.rows {
            assert!((row.r - (-row.big_r / 2.0).exp()).abs() < 1e-15);
        }
    }
}

#[test]
fn one_dimensional_bounds_hold_within_five() {
    // Closed form at p = 0: int (1 + r tau)^{-5} = 1 / (4 r).
    for r in [0.1, 0.01, 1.0, 3.0] {
        let v = branch_integral(0.0, r, 4).unwrap();
        assert!((v - 0.25 / r).abs() < 1e-9 * v, "{r}");
    }
    for d in [2, 3] {
        for m in [0.1, 0.25, 0.4] {
            for r in [0.1, 0.01] {
                let v = branch_integral(density_exponent(d, m, 0.1), r, 4).unwrap();
                let ratio = v / branch_bound(d, m, 0.1, r);
                assert!(ratio > 0.0 && ratio <= 5.0, "d {d} m {m} r {r}: {ratio}");
            }
        }
    }
    assert!(branch_integral(4.0, 0.1, 4).is_err());
}

fn random_instance(rng: &mut ChaCha8Rng, dim: usize) -> (TensorPoly, AtomicMeasure, RectBox) {
    let lo: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..0.0)).collect();
    let hi: Vec<f64> = lo.iter().map(|l| l + rng.gen_range(0.2..1.5)).collect();
    let n = rng.gen_range(1..=8);
    let atoms = (0..n)
        .map(|_| {
            // Some atoms fall outside the box on purpose.
            let p: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.3..1.3)).collect();
            (p, rng.gen_range(-2.0..2.0))
        })
        .collect();
    let deg = rng.gen_range(0..=4);
    (TensorPoly::random(rng, dim, deg), AtomicMeasure { dim, atoms }, RectBox::new(lo, hi).unwrap())
}

#[test]
fn zaremba_identity_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for (dim, count) in [(1, 100), (2, 20), (3, 20)] {
        for i in 0..count {
            let (f, phi, b) = random_instance(&mut rng, dim);
            let lhs = stieltjes_integrate(&f, &phi, &b).unwrap();
            let rhs = zaremba_rhs(&f, &phi, &b).unwrap();
            assert!((lhs - rhs).abs() <= 1e-9, "dim {dim} #{i}: {lhs} vs {rhs}");
        }
    }
}

#[test]
fn zaremba_with_constant_test_function_is_box_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for dim in 1..=3 {
        let (_, phi, b) = random_instance(&mut rng, dim);
        let one = TensorPoly::constant(dim, 1.0);
        let inc = box_increment(&phi, &b);
        assert!((zaremba_rhs(&one, &phi, &b).unwrap() - inc).abs() < 1e-12);
        assert!((stieltjes_integrate(&one, &phi, &b).unwrap() - inc).abs() < 1e-12);
    }
}

#[test]
fn stieltjes_small_cases_and_dimension_limit() {
    let x = TensorPoly { dim: 1, deg: 1, coeffs: vec![0.0, 1.0] };
    let phi = AtomicMeasure {
        dim: 1,
        atoms: vec![(vec![0.5], 1.0)],
    };
    let b = RectBox::new(vec![0.0], vec![1.0]).unwrap();
    assert_eq!(stieltjes_integrate(&x, &phi, &b).unwrap(), 0.5);
    let b4 = RectBox::new(vec![0.0; 4], vec![1.0; 4]).unwrap();
    let phi4 = AtomicMeasure { dim: 4, atoms: vec![] };
    let f4 = TensorPoly::constant(4, 1.0);
    assert_eq!(stieltjes_integrate(&f4, &phi4, &b4), Err(TraceError::Dimension(4)));
    assert_eq!(zaremba_rhs(&f4, &phi4, &b4), Err(TraceError::Dimension(4)));
}

/// Product of logistic distribution functions.
struct Logistic {
    mu: Vec<f64>,
    s: Vec<f64>,
}

impl Logistic {
    fn sig(&self, j: usize, x: f64) -> f64 {
        1.0 / (1.0 + (-(x - self.mu[j]) / self.s[j]).exp())
    }
    fn density(&self, x: &[f64]) -> f64 {
        (0..x.len())
            .map(|j| {
                let g = self.sig(j, x[j]);
                g * (1.0 - g) / self.s[j]
            })
            .product()
    }
}

impl Cdf for Logistic {
    fn dim(&self) -> usize {
        self.mu.len()
    }
    fn cdf(&self, x: &[f64]) -> f64 {
        (0..x.len()).map(|j| self.sig(j, x[j])).product()
    }
}

fn nested(f: &dyn Fn(&[f64]) -> f64, b: &RectBox, fixed: &[f64]) -> f64 {
    let j = fixed.len();
    let tol = QuadTol::with_abs(1e-13);
    integrate_real(
        |x| {
            let mut p = fixed.to_vec();
            p.push(x);
            if p.len() == b.dim() {
                f(&p)
            } else {
                nested(f, b, &p)
            }
        },
        b.lo[j],
        b.hi[j],
        &tol,
    )
    .unwrap()
}

#[test]
fn smooth_distribution_matches_density_integral() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for dim in 1..=3 {
        let phi = Logistic {
            mu: (0..dim).map(|_| rng.gen_range(-0.3..0.3)).collect(),
            s: (0..dim).map(|_| rng.gen_range(0.3..0.8)).collect(),
        };
        let f = TensorPoly::random(&mut rng, dim, 3);
        let b = RectBox::new(vec![-1.0; dim], vec![0.8; dim]).unwrap();
        let rs = stieltjes_smooth(&f, &phi, &b, if dim == 3 { 6 } else { 8 }).unwrap();
        let direct = nested(&|x: &[f64]| f.eval(x) * phi.density(x), &b, &[]);
        assert!((rs - direct).abs() <= 1e-8, "dim {dim}: {rs} vs {direct}");
    }
}

fn bump_profile(scale: f64) -> Box<dyn RadialProfile> {
    profile_families().get("bump").unwrap().build(scale, RhoParam::Half, Bump::new(0.1).unwrap()).unwrap()
}

fn opts() -> EnumOptions {
    EnumOptions {
        node_budget: 3_000_000_000,
        ..Default::default()
    }
}

fn sample_point() -> IsometryPair {
    IsometryPair {
        m1: Mat2::a_t(0.3) * Mat2::n_y(0.2),
        m2: Mat2::k_theta(0.5) * Mat2::a_t(0.4),
    }
}

#[test]
fn kernel_at_identity_with_small_support_is_f_of_e() {
    let a = AlgebraDesc::preset_q17();
    let (f1, f2) = (bump_profile(1.0), bump_profile(1.5));
    let kp = KernelPair { first: f1.as_ref(), second: f2.as_ref() };
    let e = IsometryPair {
        m1: Mat2::identity(),
        m2: Mat2::identity(),
    };
    let els = enumerate_units_with(&a, 1.0, 1.5, &opts()).unwrap();
    assert_eq!(els.len(), 1);
    assert_eq!(kernel_diag(&kp, &e, &els, (1.0, 1.5)).unwrap(), kp.at_identity());
    assert_eq!(kernel_diag_search(&a, &kp, &e, &opts()).unwrap(), kp.at_identity());
}

#[test]
fn kernel_is_invariant_under_lattice_translation() {
    let a = AlgebraDesc::preset_q17();
    let (f1, f2) = (bump_profile(4.0), bump_profile(10.0));
    let kp = KernelPair { first: f1.as_ref(), second: f2.as_ref() };
    let x = sample_point();
    let base = kernel_diag_search(&a, &kp, &x, &opts()).unwrap();
    assert!(base > kp.at_identity());
    let units = enumerate_units_with(&a, 3.0, 3.0, &opts()).unwrap();
    assert!(units.len() > 1);
    for g in units.iter().skip(1) {
        let gx = IsometryPair {
            m1: g.matrices.m1 * x.m1,
            m2: g.matrices.m2 * x.m2,
        };
        let v = kernel_diag_search(&a, &kp, &gx, &opts()).unwrap();
        assert!((v - base).abs() <= 1e-9 * base, "{v} vs {base}");
    }
}

#[test]
fn kernel_from_cached_elements_and_coverage() {
    let a = AlgebraDesc::preset_q17();
    let (f1, f2) = (bump_profile(3.0), bump_profile(8.0));
    let kp = KernelPair { first: f1.as_ref(), second: f2.as_ref() };
    let x = sample_point();
    let need = kernel_coverage(&kp, &x).unwrap();
    let els = enumerate_units_with(&a, need.0, need.1, &opts()).unwrap();
    let cached = kernel_diag(&kp, &x, &els, need).unwrap();
    let exact = kernel_diag_search(&a, &kp, &x, &opts()).unwrap();
    assert!((cached - exact).abs() <= 1e-12 * exact);
    let short = (need.0, need.1 - 0.5);
    assert!(matches!(kernel_diag(&kp, &x, &els, short), Err(TraceError::Coverage { .. })));
}

#[test]
fn kernel_grows_with_support() {
    let a = AlgebraDesc::preset_q17();
    let x = sample_point();
    let mut prev = 0.0;
    for (s1, s2) in [(0.5, 0.5), (1.0, 1.0), (2.0, 5.0), (3.0, 8.0), (3.5, 9.0), (4.0, 10.0)] {
        let (f1, f2) = (bump_profile(s1), bump_profile(s2));
        let v = kernel_diag_search(&a, &KernelPair { first: f1.as_ref(), second: f2.as_ref() }, &x, &opts()).unwrap();
        assert!(v >= prev, "({s1}, {s2}): {v} < {prev}");
        prev = v;
    }
}
