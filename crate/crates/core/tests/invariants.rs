use fracmetrics_core::chamfer::{chamfer_distance, directed_mean_nn, PointSet};
use fracmetrics_core::geom::{Point3, RigidTransform};
use fracmetrics_core::kdtree::KdTree;
use fracmetrics_core::rbf::rbf_fit;
use fracmetrics_core::registration::{icp_rigid, kabsch, IcpParams};
use fracmetrics_core::sphere_fit::{fit_sphere, geometric_objective, LandmarkSet};
use proptest::prelude::*;

fn point() -> impl Strategy<Value = Point3> {
    (-50.0..50.0f64, -50.0..50.0f64, -50.0..50.0f64).prop_map(|(x, y, z)| Point3::xyz(x, y, z))
}

fn cloud(max: usize) -> impl Strategy<Value = Vec<Point3>> {
    prop::collection::vec(point(), 1..max)
}

fn rigid() -> impl Strategy<Value = RigidTransform> {
    (point(), 0.0..std::f64::consts::PI, point()).prop_filter_map("zero axis", |(axis, angle, t)| {
        RigidTransform::from_axis_angle(axis, angle).map(|r| r.with_translation(t))
    })
}

fn brute_nearest_squared(points: &[Point3], q: Point3) -> f64 {
    points.iter().map(|p| p.distance_squared(q)).fold(f64::INFINITY, f64::min)
}

fn moved(points: &[Point3], t: &RigidTransform) -> Vec<Point3> {
    points.iter().map(|&p| t.apply(p)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kdtree_matches_brute_force(points in cloud(300), queries in cloud(40)) {
        let tree = KdTree::build(&points);
        for q in queries {
            let (i, d2) = tree.nearest(q).unwrap();
            prop_assert_eq!(d2, brute_nearest_squared(&points, q));
            // ties resolve to the lowest index
            prop_assert_eq!(i, points.iter().position(|p| p.distance_squared(q) == d2).unwrap());
        }
    }

    #[test]
    fn chamfer_is_symmetric_and_nonnegative(a in cloud(120), b in cloud(120)) {
        let (a, b) = (PointSet::new(a).unwrap(), PointSet::new(b).unwrap());
        let ab = chamfer_distance(&a, &b);
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, directed_mean_nn(&a, &b) + directed_mean_nn(&b, &a));
        let ba = chamfer_distance(&b, &a);
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
    }

    #[test]
    fn chamfer_of_a_set_with_itself_is_zero(a in cloud(120)) {
        let a = PointSet::new(a).unwrap();
        prop_assert_eq!(chamfer_distance(&a, &a), 0.0);
    }

    #[test]
    fn chamfer_is_rigid_invariant(a in cloud(100), b in cloud(100), t in rigid()) {
        let before = chamfer_distance(&PointSet::new(a.clone()).unwrap(), &PointSet::new(b.clone()).unwrap());
        let after = chamfer_distance(
            &PointSet::new(moved(&a, &t)).unwrap(),
            &PointSet::new(moved(&b, &t)).unwrap(),
        );
        prop_assert!((before - after).abs() <= 1e-9 * before.max(1.0), "{} vs {}", before, after);
    }

    #[test]
    fn sphere_fit_is_rigid_equivariant(
        dirs in prop::collection::vec(point(), 12..60),
        noise in prop::collection::vec(-0.3..0.3f64, 60),
        radius in 5.0..40.0f64,
        t in rigid(),
    ) {
        let pts: Vec<Point3> = dirs
            .iter()
            .zip(&noise)
            .filter_map(|(d, e)| d.normalized().map(|u| u * (radius + e)))
            .collect();
        prop_assume!(pts.len() >= 12);
        let a = fit_sphere(&LandmarkSet::new(pts.clone(), "a").unwrap());
        let b = fit_sphere(&LandmarkSet::new(moved(&pts, &t), "b").unwrap());
        let (a, b) = match (a, b) {
            (Ok(a), Ok(b)) => (a.sphere, b.sphere),
            // degenerate spreads must fail in both poses
            (a, b) => { prop_assert_eq!(a.is_err(), b.is_err()); return Ok(()); }
        };
        prop_assert!((a.radius - b.radius).abs() < 1e-7 * radius);
        prop_assert!(t.apply(a.center).distance(b.center) < 1e-7 * radius);
    }

    #[test]
    fn sphere_fit_is_a_local_minimum(
        dirs in prop::collection::vec(point(), 20..60),
        noise in prop::collection::vec(-0.5..0.5f64, 60),
        radius in 5.0..40.0f64,
        probe in point(),
    ) {
        let pts: Vec<Point3> = dirs
            .iter()
            .zip(&noise)
            .filter_map(|(d, e)| d.normalized().map(|u| u * (radius + e)))
            .collect();
        prop_assume!(pts.len() >= 20);
        let Ok(fit) = fit_sphere(&LandmarkSet::new(pts.clone(), "s").unwrap()) else { return Ok(()); };
        let s = fit.sphere;
        let best = geometric_objective(&pts, s.center, s.radius);
        let h = 1e-3;
        let dir = probe.normalized().unwrap_or(Point3::xyz(1.0, 0.0, 0.0));
        for (dc, dr) in [(dir * h, 0.0), (dir * -h, 0.0), (Point3::xyz(0.0, 0.0, 0.0), h), (Point3::xyz(0.0, 0.0, 0.0), -h)] {
            let other = geometric_objective(&pts, s.center + dc, s.radius + dr);
            prop_assert!(other >= best - 1e-9 * best.max(1.0), "{} < {}", other, best);
        }
    }

    #[test]
    fn kabsch_recovers_exact_transforms(src in prop::collection::vec(point(), 4..80), t in rigid()) {
        let dst = moved(&src, &t);
        let Ok(est) = kabsch(&src, &dst) else { return Ok(()); };
        for &p in &src {
            prop_assert!(est.apply(p).distance(t.apply(p)) < 1e-8, "residual at {:?}", p);
        }
    }

    #[test]
    fn icp_trimmed_rms_never_increases(src in prop::collection::vec(point(), 30..200), t in rigid(), jitter in point()) {
        let dst = moved(&src, &t);
        let init = t.compose(&RigidTransform::from_translation(jitter * 0.05));
        let res = icp_rigid(
            &PointSet::new(src).unwrap(),
            &PointSet::new(dst).unwrap(),
            &init,
            &IcpParams::default(),
        ).unwrap();
        for w in res.rms_history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0), "{:?}", res.rms_history);
        }
    }
}

/// Dense Gaussian elimination with partial pivoting on the unscaled system.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let pivot = a[col].clone();
        for row in col + 1..n {
            let f = a[row][col] / pivot[col];
            for (x, p) in a[row][col..].iter_mut().zip(&pivot[col..]) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

fn kernel(p: [f64; 2], q: [f64; 2]) -> f64 {
    let r = (p[0] - q[0]).hypot(p[1] - q[1]);
    if r == 0.0 {
        0.0
    } else {
        r * r * r.ln()
    }
}

#[test]
fn tps_matches_independent_solver() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
    for case in 0..10 {
        // jittered grid keeps nodes well separated
        let side = 3 + case;
        let mut nodes = Vec::new();
        for i in 0..side {
            for j in 0..side {
                nodes.push([
                    4.0 * i as f64 + rng.random_range(-1.0..1.0) + 7.0,
                    4.0 * j as f64 + rng.random_range(-1.0..1.0) - 3.0,
                ]);
            }
        }
        let values: Vec<f64> = nodes.iter().map(|_| rng.random_range(-2.0..2.0)).collect();
        let n = nodes.len();
        let mut a = vec![vec![0.0; n + 3]; n + 3];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = kernel(nodes[i], nodes[j]);
            }
            for (k, v) in [1.0, nodes[i][0], nodes[i][1]].into_iter().enumerate() {
                a[i][n + k] = v;
                a[n + k][i] = v;
            }
        }
        let mut rhs = values.clone();
        rhs.extend([0.0; 3]);
        let x = solve(a, rhs);
        let oracle = |p: [f64; 2]| {
            (0..n).map(|i| x[i] * kernel(p, nodes[i])).sum::<f64>() + x[n] + x[n + 1] * p[0] + x[n + 2] * p[1]
        };

        let tps = rbf_fit(&nodes, &values).unwrap();
        assert!(!tps.is_regularized());
        for _ in 0..50 {
            let p = [rng.random_range(5.0..(4.0 * side as f64 + 9.0)), rng.random_range(-5.0..(4.0 * side as f64))];
            let (got, want) = (tps.evaluate(p), oracle(p));
            assert!((got - want).abs() < 1e-8, "case {case} at {p:?}: {got} vs {want}");
        }
    }
}
