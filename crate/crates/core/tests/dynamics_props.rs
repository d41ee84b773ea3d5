use critset_core::dynamics::*;
use critset_core::geometry::{Mat2, Vec2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn families() -> Vec<MapDef> {
    vec![
        MapDef::henon(1.4, 0.3).unwrap(),
        MapDef::henon(6.0, -0.5).unwrap(),
        MapDef::linear(Mat2::new(2.0, 1.0, 1.0, 1.0)).unwrap(),
        MapDef::linear(Mat2::rotation(0.7)).unwrap(),
    ]
}

#[test]
fn backward_undoes_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for map in families() {
        for _ in 0..10_000 {
            let p = Vec2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let (q, _) = map.eval(p, Time::Forward).unwrap();
            let (r, _) = map.eval(q, Time::Backward).unwrap();
            assert!(r.dist(p) <= 1e-9 * (1.0 + p.norm()), "{map:?} {p:?}");
        }
    }
}

#[test]
fn jacobian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = 1e-6;
    for map in families() {
        for time in [Time::Forward, Time::Backward] {
            for _ in 0..2000 {
                let p = Vec2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
                let (_, jac) = map.eval(p, time).unwrap();
                let col = |e: Vec2| {
                    let (a, _) = map.eval(p + e * h, time).unwrap();
                    let (b, _) = map.eval(p - e * h, time).unwrap();
                    (a - b) * (0.5 / h)
                };
                let cx = col(Vec2::new(1.0, 0.0));
                let cy = col(Vec2::new(0.0, 1.0));
                let fd = Mat2::new(cx.x, cy.x, cx.y, cy.y);
                let scale = jac.max_abs();
                for (x, y) in [(fd.a, jac.a), (fd.b, jac.b), (fd.c, jac.c), (fd.d, jac.d)] {
                    assert!((x - y).abs() <= 1e-4 * scale, "{map:?} {p:?}: {fd:?} vs {jac:?}");
                }
            }
        }
    }
}

#[test]
fn henon_determinant_is_b() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for b in [0.3, -0.2, 0.9] {
        let map = MapDef::henon(1.4, b).unwrap();
        for _ in 0..10_000 {
            let p = Vec2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            assert!((map.jacobian(p).det() - b).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn periodic_points_return(a in 1.5..6.0f64, b in 0.1..0.5f64, period in 1usize..5) {
        let map = MapDef::henon(a, b).unwrap();
        let r = map.trapping_radius().unwrap();
        let pts = find_periodic_points(&map, period, &BoxRegion::square(r), 12).unwrap();
        for p in pts {
            let (q, _) = map.iterate(p.location, p.period, Time::Forward).unwrap();
            prop_assert!(q.dist(p.location) < 1e-8);
        }
    }
}
