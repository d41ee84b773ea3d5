use critset_core::criticality::*;
use critset_core::dynamics::{orbit, MapDef};
use critset_core::geometry::{Direction, Mat2, Vec2};
use proptest::prelude::*;
use std::f64::consts::PI;

fn opts() -> SearchOptions {
    SearchOptions::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn score_shrinks_with_the_window(a in 1.0..1.4f64, b in 0.1..0.3f64, x in -0.5..0.5f64, y in -0.5..0.5f64, n in 1usize..12) {
        let map = MapDef::henon(a, b).unwrap();
        let p = Vec2::new(x, y);
        let (Ok(small), Ok(large)) = (criticality_score(&map, p, n, &opts()), criticality_score(&map, p, n + 1, &opts())) else {
            return Ok(());
        };
        prop_assert!(large.score <= small.score + 1e-9, "{} > {}", large.score, small.score);
    }

    #[test]
    fn conformal_maps_are_critical_everywhere(s in 0.5..2.0f64, t in 0.0..6.3f64, x in -1.0..1.0f64, y in -1.0..1.0f64, n in 1usize..20) {
        for m in [Mat2::rotation(t), Mat2::rotation(t).scale(s), Mat2::scalar(s)] {
            let map = MapDef::linear(m).unwrap().with_escape_radius(1e12);
            let p = Vec2::new(x, y);
            let rep = criticality_score(&map, p, n, &opts()).unwrap();
            prop_assert!(rep.score.abs() <= 1e-9, "{:?}: {}", m, rep.score);
            let far = far_from_homotheties(&map, p, 0.2, n, &opts()).unwrap();
            prop_assert_eq!(far.verdict, HomothetyVerdict::HomothetyLikeWitnessFound);
        }
    }

    #[test]
    fn jordan_blocks_are_critical_along_the_eigendirection(l in 0.5..2.0f64, k in 0.1..3.0f64, n in 1usize..20) {
        let map = MapDef::linear(Mat2::new(l, k, 0.0, l)).unwrap().with_escape_radius(1e300);
        let rep = criticality_score(&map, Vec2::ZERO, n, &opts()).unwrap();
        prop_assert!(rep.score >= -1e-9);
        prop_assert!(rep.best_direction.distance(Direction::new(0.0)) <= 1e-6);
    }
}

/// RP¹ diameter of `{θ : objective(θ) ≥ level}`, from a global grid plus a
/// fine grid around `center`.
fn superlevel_diameter(objective: impl Fn(f64) -> f64, center: f64, level: f64) -> f64 {
    let mut hits: Vec<Direction> = (0..20_000)
        .map(|i| i as f64 * PI / 20_000.0)
        .chain((-20_000..=20_000).map(|i| center + i as f64 * 5e-8))
        .filter(|&t| objective(t) >= level)
        .map(Direction::new)
        .collect();
    hits.push(Direction::new(center));
    let mut diam = 0.0f64;
    for a in &hits {
        for b in &hits {
            diam = diam.max(a.distance(*b));
        }
        if diam > 0.1 {
            break;
        }
    }
    diam
}

#[test]
fn critical_direction_is_numerically_unique() {
    let cases = [
        Mat2::new(1.0, 1.0, 0.0, 1.0),
        Mat2::new(2.0, 1.0, 0.0, 2.0),
        Mat2::new(0.7, -0.4, 0.0, 0.7),
    ];
    for m in cases {
        let map = MapDef::linear(m).unwrap().with_escape_radius(1e300);
        for n in [5, 10, 20] {
            let rep = criticality_score(&map, Vec2::ZERO, n, &opts()).unwrap();
            assert!(rep.score >= -1e-6);
            let wc = WindowCocycle::new(&orbit(&map, Vec2::ZERO, n, n).unwrap()).unwrap();
            let diam = superlevel_diameter(|t| wc.two_sided_min(t), rep.best_direction.theta(), rep.score - 1e-6);
            assert!(diam < 10.0 * opts().refine_tol, "{m:?} n={n}: diameter {diam}");
        }
    }
}

#[test]
fn shear_contracted_directions_align_at_rate_one_over_n() {
    let map = MapDef::linear(Mat2::new(1.0, 1.0, 0.0, 1.0)).unwrap();
    let rep = criticality_score(&map, Vec2::ZERO, 20, &opts()).unwrap();
    let slopes = alignment_slopes(&map, Vec2::ZERO, rep.best_direction, 50);
    let checked: Vec<_> = slopes.iter().filter(|s| (5..=50).contains(&s.n)).collect();
    assert_eq!(checked.len(), 46);
    for s in checked {
        assert!(s.slope <= 2.0 / s.n as f64, "n={} slope {}", s.n, s.slope);
    }
}
