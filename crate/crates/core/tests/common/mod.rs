//! Module invariants as plain property functions plus their input
//! strategies, shared by the invariant suite and the acceptance run.

use std::sync::OnceLock;

use nalgebra::Point2;
use proptest::prelude::*;
use proptest::test_runner::TestCaseResult;
use ribgraph::cloud::{pca_axes, PointCloud};
use ribgraph::coarse::{flood_fill, project_to_feature_plane, BinaryImage, CoarseAnalysis, CoarseConfig};
use ribgraph::eval::{icp_rigid_from, IcpParams};
use ribgraph::geometry::{Point3, RigidTransform, Vec3};
use ribgraph::graph::{build_template_graph, NodeLayout, TEMPLATE_NODE_COUNT};
use ribgraph::nonrigid::{blend_weights, map_point, LocalTransformSet, Weighting};
use ribgraph::synthetic::{generate_ribcage, RibcageParams};

pub fn point() -> impl Strategy<Value = Point3> {
    (-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0).prop_map(|(x, y, z)| Point3::new(x, y, z))
}

pub fn rigid() -> impl Strategy<Value = RigidTransform> {
    (
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
        0.0f64..std::f64::consts::PI,
        (-30.0f64..30.0, -30.0f64..30.0, -30.0f64..30.0),
    )
        .prop_filter("axis must be non-zero", |((x, y, z), _, _)| {
            x * x + y * y + z * z > 1e-3
        })
        .prop_map(|((x, y, z), angle, (tx, ty, tz))| {
            RigidTransform::from_axis_angle(Vec3::new(x, y, z), angle, Vec3::new(tx, ty, tz))
        })
}

pub fn transform_set() -> impl Strategy<Value = LocalTransformSet> {
    prop::collection::vec((point(), rigid()), 1..30).prop_map(|nodes| LocalTransformSet {
        anchors: nodes.iter().map(|(p, _)| *p).collect(),
        transforms: nodes.iter().map(|(_, t)| *t).collect(),
        neighbors: (0..nodes.len()).map(|i| vec![i]).collect(),
    })
}

pub fn weighting() -> impl Strategy<Value = Weighting> {
    prop_oneof![Just(Weighting::Inverse), Just(Weighting::Literal)]
}

/// Layouts whose node counts sum to the template total.
pub fn valid_layout() -> impl Strategy<Value = NodeLayout> {
    let grids: Vec<(usize, usize)> = (2..=20usize)
        .flat_map(|r| (2..=8usize).map(move |c| (r, c)))
        .filter(|&(r, c)| r * c < TEMPLATE_NODE_COUNT && (TEMPLATE_NODE_COUNT - r * c).is_multiple_of(4))
        .filter(|&(r, c)| (TEMPLATE_NODE_COUNT - r * c) / 4 >= 8)
        .collect();
    prop::sample::select(grids).prop_flat_map(|(rows, cols)| {
        let per_rail_total = (TEMPLATE_NODE_COUNT - rows * cols) / 4;
        // Three cut points split the rail total into four chains of at least 2.
        prop::collection::vec(0..=per_rail_total - 8, 3).prop_map(move |mut cuts| {
            cuts.sort_unstable();
            let free = per_rail_total - 8;
            let parts = [cuts[0], cuts[1] - cuts[0], cuts[2] - cuts[1], free - cuts[2]];
            NodeLayout {
                sternum_rows: rows,
                sternum_cols: cols,
                chain_lengths: parts.map(|p| p + 2),
            }
        })
    })
}

fn default_cage() -> &'static (PointCloud, CoarseAnalysis) {
    static CAGE: OnceLock<(PointCloud, CoarseAnalysis)> = OnceLock::new();
    CAGE.get_or_init(|| {
        let (cloud, _) = generate_ribcage(&RibcageParams::default()).unwrap();
        let analysis = CoarseAnalysis::run(&cloud, &CoarseConfig::default()).unwrap();
        (cloud, analysis)
    })
}

pub type BlendCase = (LocalTransformSet, Point3, usize, Weighting);

pub fn blend_case() -> impl Strategy<Value = BlendCase> {
    (transform_set(), point(), 1usize..8, weighting())
}

pub fn partition_of_unity((set, p, n_blend, mode): BlendCase) -> TestCaseResult {
    let w = blend_weights(&p, &set, n_blend, mode);
    let expected = if w.len() == 1 { 1 } else { n_blend.min(set.len()) };
    prop_assert_eq!(w.len(), expected);
    prop_assert!(w.iter().all(|&(i, x)| i < set.len() && x >= 0.0));
    let total: f64 = w.iter().map(|&(_, x)| x).sum();
    prop_assert!((total - 1.0).abs() < 1e-12, "sum {}", total);
    Ok(())
}

pub type AnchorCase = (LocalTransformSet, prop::sample::Index, Weighting);

pub fn anchor_case() -> impl Strategy<Value = AnchorCase> {
    (transform_set(), any::<prop::sample::Index>(), weighting())
}

pub fn coincident_point_takes_its_anchor((set, pick, mode): AnchorCase) -> TestCaseResult {
    let i = pick.index(set.len());
    let p = set.anchors[i];
    let isolated = set
        .anchors
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .all(|(_, a)| (a - p).norm() > 1e-6);
    prop_assume!(isolated);
    prop_assert_eq!(map_point(&p, &set, 3, mode), set.transforms[i].apply(&p));
    Ok(())
}

pub type IcpCase = (Vec<Point3>, RigidTransform, RigidTransform, Vec<(f64, f64, f64)>);

pub fn icp_case() -> impl Strategy<Value = IcpCase> {
    (
        prop::collection::vec(point(), 3..60),
        rigid(),
        rigid(),
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 60),
    )
}

pub fn icp_rms_never_increases((source, motion, start, noise): IcpCase) -> TestCaseResult {
    let target: Vec<Point3> = source
        .iter()
        .zip(&noise)
        .map(|(p, (a, b, c))| motion.apply(p) + Vec3::new(*a, *b, *c))
        .collect();
    let source = PointCloud::new(source);
    let target = PointCloud::new(target);
    match icp_rigid_from(
        &source,
        &target,
        &start,
        &IcpParams {
            max_iter: 30,
            tol: 1e-9,
        },
    ) {
        Ok(r) => {
            for w in r.rms_history.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-9, "{:?}", r.rms_history);
            }
            prop_assert_eq!(r.rms_history.len(), r.iterations + 1);
        }
        Err(ribgraph::Error::DegenerateConfiguration(_)) => {}
        Err(e) => prop_assert!(false, "{}", e),
    }
    Ok(())
}

pub type PcaCase = (Vec<(f64, f64, f64)>, RigidTransform);

pub fn pca_case() -> impl Strategy<Value = PcaCase> {
    (
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 20..80),
        rigid(),
    )
}

pub fn pca_is_rotation_equivariant((raw, motion): PcaCase) -> TestCaseResult {
    // Distinct spreads per axis keep the principal axes well separated.
    let points: Vec<Point3> = raw
        .iter()
        .map(|(x, y, z)| Point3::new(40.0 * x, 15.0 * y, 3.0 * z))
        .collect();
    let cloud = PointCloud::new(points);
    let (Ok(a), Ok(plane_a)) = (pca_axes(&cloud), project_to_feature_plane(&cloud)) else {
        return Err(TestCaseError::reject("ambiguous axes"));
    };
    let moved = cloud.transformed(&motion);
    let b = pca_axes(&moved).unwrap();
    let plane_b = project_to_feature_plane(&moved).unwrap();
    prop_assert!((motion.apply(&a.origin) - b.origin).norm() < 1e-9);
    for k in 0..3 {
        let d = motion.apply_vector(&a.axes[k]).dot(&b.axes[k]);
        prop_assert!((d.abs() - 1.0).abs() < 1e-6, "axis {} dot {}", k, d);
    }
    let mut signs = [0.0; 3];
    for (k, s) in signs.iter_mut().enumerate() {
        *s = motion
            .apply_vector(&plane_a.basis.axes[k])
            .dot(&plane_b.basis.axes[k])
            .signum();
    }
    for i in 0..cloud.len() {
        let (p, q) = (plane_a.points2d[i], plane_b.points2d[i]);
        prop_assert!((p.x * signs[0] - q.x).abs() < 1e-6);
        prop_assert!((p.y * signs[1] - q.y).abs() < 1e-6);
        prop_assert!((plane_a.depths[i] * signs[2] - plane_b.depths[i]).abs() < 1e-6);
    }
    Ok(())
}

pub type FloodCase = (
    usize,
    usize,
    Vec<bool>,
    (usize, usize, usize, usize),
    prop::sample::Index,
);

pub fn flood_case() -> impl Strategy<Value = FloodCase> {
    (
        1usize..32,
        1usize..32,
        prop::collection::vec(any::<bool>(), 32 * 32),
        (0usize..32, 0usize..32, 0usize..16, 0usize..16),
        any::<prop::sample::Index>(),
    )
}

pub fn flood_fill_respects_the_mask((w, h, bits, rect, seed_pick): FloodCase) -> TestCaseResult {
    let mut image = BinaryImage::new(w, h, 1.0, Point2::origin());
    for y in 0..h {
        for x in 0..w {
            if bits[y * 32 + x] {
                image.set(x, y, true);
            }
        }
    }
    let (rx, ry, rw, rh) = rect;
    let blocked = |x: usize, y: usize| x >= rx && x < rx + rw && y >= ry && y < ry + rh;
    let open: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| image.get(x, y) && !blocked(x, y))
        .collect();
    if open.is_empty() {
        let seed = (seed_pick.index(w), 0);
        prop_assert!(flood_fill(&image, seed, blocked).is_err());
        return Ok(());
    }
    let seed = open[seed_pick.index(open.len())];
    let region = flood_fill(&image, seed, blocked).unwrap();
    prop_assert!(region.contains(&seed));
    for &(x, y) in &region {
        prop_assert!(image.get(x, y) && !blocked(x, y));
    }
    // Closed under 4-neighbours that are set and unblocked.
    for &(x, y) in &region {
        for (nx, ny) in [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)] {
            if nx < w && ny < h && image.get(nx, ny) && !blocked(nx, ny) {
                prop_assert!(region.binary_search_by_key(&(ny, nx), |&(a, b)| (b, a)).is_ok());
            }
        }
    }
    Ok(())
}

pub fn template_graph_has_245_nodes(layout: NodeLayout) -> TestCaseResult {
    prop_assert!(layout.validate().is_ok());
    let (cloud, analysis) = default_cage();
    let g = build_template_graph(cloud, analysis, &layout).unwrap();
    prop_assert_eq!(g.len(), TEMPLATE_NODE_COUNT);
    prop_assert!(g.is_connected_undirected());
    Ok(())
}

pub type OffTotalCase = (usize, usize, [usize; 4]);

pub fn off_total_case() -> impl Strategy<Value = OffTotalCase> {
    (2usize..20, 2usize..8, prop::array::uniform4(2usize..20))
}

pub fn layouts_off_the_total_are_rejected((rows, cols, chains): OffTotalCase) -> TestCaseResult {
    let layout = NodeLayout {
        sternum_rows: rows,
        sternum_cols: cols,
        chain_lengths: chains,
    };
    prop_assume!(layout.total() != TEMPLATE_NODE_COUNT);
    match layout.validate() {
        Err(ribgraph::Error::Config { field, .. }) => prop_assert_eq!(field, "layout"),
        other => prop_assert!(false, "{:?}", other),
    }
    Ok(())
}
