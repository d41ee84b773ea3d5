use std::collections::HashMap;

use critset_core::dynamics::{find_periodic_points, BoxRegion, MapDef, PeriodicPoint, Time};
use critset_core::geometry::Vec2;
use critset_core::manifolds::*;

fn saddle(map: &MapDef, pick_min_x: bool) -> PeriodicPoint {
    let pts = find_periodic_points(map, 1, &BoxRegion::square(4.0), 9).unwrap();
    let key = |p: &PeriodicPoint| if pick_min_x { p.location.x } else { -p.location.x };
    pts.into_iter().min_by(|p, q| key(p).total_cmp(&key(q))).unwrap()
}

/// Segments of a branch bucketed on a square grid.
struct SegmentGrid {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<(Vec2, Vec2)>>,
}

impl SegmentGrid {
    fn new(branches: &[ManifoldBranch], cell: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<(Vec2, Vec2)>> = HashMap::new();
        for piece in branches.iter().flat_map(|b| &b.pieces) {
            for w in piece.points.windows(2) {
                let lo = Vec2::new(w[0].x.min(w[1].x), w[0].y.min(w[1].y));
                let hi = Vec2::new(w[0].x.max(w[1].x), w[0].y.max(w[1].y));
                for i in (lo.x / cell).floor() as i64..=(hi.x / cell).floor() as i64 {
                    for j in (lo.y / cell).floor() as i64..=(hi.y / cell).floor() as i64 {
                        cells.entry((i, j)).or_default().push((w[0], w[1]));
                    }
                }
            }
        }
        SegmentGrid { cell, cells }
    }

    /// Distance to the nearest segment, or infinity beyond one cell.
    fn distance(&self, q: Vec2) -> f64 {
        let (ci, cj) = ((q.x / self.cell).floor() as i64, (q.y / self.cell).floor() as i64);
        let mut best = f64::INFINITY;
        for i in ci - 1..=ci + 1 {
            for j in cj - 1..=cj + 1 {
                for &(a, b) in self.cells.get(&(i, j)).into_iter().flatten() {
                    let d = b - a;
                    let len2 = d.dot(d);
                    let t = if len2 > 0.0 { ((q - a).dot(d) / len2).clamp(0.0, 1.0) } else { 0.0 };
                    best = best.min(q.dist(a + d * t));
                }
            }
        }
        best
    }
}

#[test]
fn image_of_unstable_branch_lies_on_the_regrown_branch() {
    for (a, b, budget) in [(1.4, 0.3, 8.0), (6.0, 0.3, 10.0)] {
        let map = MapDef::henon(a, b).unwrap();
        let p = saddle(&map, true);
        let short = grow_branch(&map, &p, BranchKind::Unstable, Side::Plus, &GrowOptions::with_budget(budget)).unwrap();
        // With a negative eigenvalue f swaps the two sides.
        let long: Vec<ManifoldBranch> = [Side::Plus, Side::Minus]
            .into_iter()
            .map(|side| grow_branch(&map, &p, BranchKind::Unstable, side, &GrowOptions::with_budget(budget * 6.0)).unwrap())
            .collect();
        let grid = SegmentGrid::new(&long, 0.01);
        let mut checked = 0;
        let mut worst = 0.0f64;
        for q in short.polyline() {
            let (image, _) = map.eval(q, Time::Forward).unwrap();
            // Growth drops points that provably escape.
            if map.escapes_under(image, Time::Forward) {
                continue;
            }
            worst = worst.max(grid.distance(image));
            checked += 1;
        }
        println!("a={a}: {checked} image points, worst distance {worst:e}");
        assert!(checked > 50);
        assert!(worst <= 1e-3, "a={a}: {worst}");
    }
}

#[test]
fn intersections_do_not_depend_on_argument_order() {
    for (a, pick_min) in [(6.0, true), (6.0, false), (2.8, false)] {
        let map = MapDef::henon(a, 0.3).unwrap();
        let p = saddle(&map, pick_min);
        let opts = GrowOptions::with_budget(30.0);
        for (su, ss) in [(Side::Plus, Side::Plus), (Side::Minus, Side::Minus), (Side::Plus, Side::Minus)] {
            let u = grow_branch(&map, &p, BranchKind::Unstable, su, &opts).unwrap();
            let s = grow_branch(&map, &p, BranchKind::Stable, ss, &opts).unwrap();
            let ab = find_intersections(&u, &s, 1e-12);
            let ba = find_intersections(&s, &u, 1e-12);
            assert_eq!(ab.len(), ba.len(), "a={a} {su:?}/{ss:?}");
            for e in &ab {
                let f = ba.iter().min_by(|x, y| x.point.dist(e.point).total_cmp(&y.point.dist(e.point))).unwrap();
                assert!(f.point.dist(e.point) <= 1e-12, "a={a} {su:?}/{ss:?}: {e:?} vs {f:?}");
                assert!((f.angle - e.angle).abs() <= 1e-12);
            }
        }
    }
}
