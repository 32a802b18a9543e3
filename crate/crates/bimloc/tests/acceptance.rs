//! Acceptance suite: ten end-to-end criteria covering labeling, search,
//! registration, tracking, simulation deviations, and evaluation metrics.
//! Each criterion prints one pass/fail line; they run sequentially inside a
//! single test because several check wall-clock budgets and must not contend
//! for cores.
//!
//! Run with: `cargo test -p bimloc --test acceptance -- --nocapture`

use std::f64::consts::PI;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use bimloc::eval::{
    compute_rmse, compute_z_drift, evaluate, AlignMode, EvalConfig, PosePair, Trajectory,
};
use bimloc::geometry::KdTree;
use bimloc::localizer::{run_sequence, IndexedMap, StepDiagnostics, TrackerConfig, Variant};
use bimloc::map::{
    build_semantic_map, label_map, point_in_box, BoxManifest, CategoryTable, LabeledBox, MapConfig,
    TriangleMesh,
};
use bimloc::registration::{
    solve_icp, weight_combined, weight_huber, weight_semantic, WeightConfig,
};
use bimloc::sim::{build_scene, cast_scan, simulate_sequence, BoxShape, DeviationSpec, SensorModel};
use bimloc::{Label, Pose, SemanticPointCloud, UNLABELED};
use nalgebra::{Point3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fail the enclosing criterion with a formatted reason.
macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !($cond) {
            return Err(format!($($arg)+));
        }
    };
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Result<String, String>); 10] = [
        ("map labeling matches brute force", criterion_01_labeling),
        ("knn matches linear scan", criterion_02_knn),
        ("registration recovers perturbed poses", criterion_03_recovery),
        ("uniform semantic weights equal baseline", criterion_04_weight_degeneracy),
        ("corridor tracking accuracy", criterion_05_corridor_accuracy),
        ("semantic weighting improves deviant scenes", criterion_06_variant_trend),
        ("vertical drift is bounded", criterion_07_z_drift),
        ("tracking throughput", criterion_08_throughput),
        ("weight functions are exact", criterion_09_weight_values),
        ("rmse matches closed form", criterion_10_rmse_oracle),
    ];

    let mut failed = Vec::new();
    for (number, (name, run)) in criteria.iter().enumerate() {
        let id = number + 1;
        match run_criterion(*run) {
            Ok(detail) => println!("criterion {id:>2} PASS  {name} ({detail})"),
            Err(why) => {
                println!("criterion {id:>2} FAIL  {name}: {why}");
                failed.push(id);
            }
        }
    }
    assert!(failed.is_empty(), "failed acceptance criteria: {failed:?}");
}

/// A panicking criterion fails its own line instead of aborting the suite.
fn run_criterion(run: fn() -> Result<String, String>) -> Result<String, String> {
    std::panic::catch_unwind(run).unwrap_or_else(|panic| {
        let why = panic
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| panic.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "opaque payload".into());
        Err(format!("panicked: {why}"))
    })
}

fn lib<T>(result: bimloc::Result<T>) -> Result<T, String> {
    result.map_err(|e| e.to_string())
}

// ── Criterion 1: box labeling vs exhaustive oracle ──────────────────────────

fn criterion_01_labeling() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let boxes: Vec<LabeledBox<f64>> = (0..50)
        .map(|i| {
            let min: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..18.0));
            let size: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.5..4.0));
            let max = [min[0] + size[0], min[1] + size[1], min[2] + size[2]];
            let category = rng.random_range(1..=6u16) as Label;
            lbox(&format!("B{i}"), category, min, max)
        })
        .collect();
    let points: Vec<Point3<f64>> = (0..1000)
        .map(|_| {
            Point3::new(
                rng.random_range(0.0..20.0),
                rng.random_range(0.0..20.0),
                rng.random_range(0.0..20.0),
            )
        })
        .collect();
    let cloud = SemanticPointCloud::new(points.clone());

    let start = Instant::now();
    let (labeled, _) = lib(label_map(&cloud, &boxes, boxes.len()))?;
    let elapsed = start.elapsed();

    let labels = labeled.labels.as_ref().ok_or("labeled cloud lacks labels")?;
    // Oracle: every box sorted by (center distance^2, manifest index); the
    // nearest containing box wins, no containing box means UNLABELED.
    for (i, p) in points.iter().enumerate() {
        let mut order: Vec<(f64, usize)> = boxes
            .iter()
            .enumerate()
            .map(|(j, b)| {
                let c = b.center();
                let (dx, dy, dz) = (c.x - p.x, c.y - p.y, c.z - p.z);
                (dx * dx + dy * dy + dz * dz, j)
            })
            .collect();
        order.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        let expected = order
            .iter()
            .find(|&&(_, j)| point_in_box(p, &boxes[j]))
            .map_or(UNLABELED, |&(_, j)| boxes[j].category);
        ensure!(
            labels[i] == expected,
            "point {i}: label {} != oracle {expected}",
            labels[i]
        );
    }
    ensure!(
        elapsed < Duration::from_secs(5),
        "labeling took {elapsed:.2?}, budget 5 s"
    );
    Ok(format!("1000 points x 50 boxes exact, {elapsed:.2?}"))
}

// ── Criterion 2: k-nearest-neighbour search vs linear scan ──────────────────

fn criterion_02_knn() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let points: Vec<Point3<f64>> = (0..500)
        .map(|_| {
            Point3::new(
                rng.random_range(0.0..10.0),
                rng.random_range(0.0..10.0),
                rng.random_range(0.0..10.0),
            )
        })
        .collect();
    let queries: Vec<Point3<f64>> = (0..50)
        .map(|_| {
            Point3::new(
                rng.random_range(-1.0..11.0),
                rng.random_range(-1.0..11.0),
                rng.random_range(-1.0..11.0),
            )
        })
        .collect();

    let start = Instant::now();
    let tree = lib(KdTree::new(&points))?;
    let mut got = Vec::with_capacity(queries.len());
    for q in &queries {
        got.push(lib(tree.knn(q, 10))?);
    }
    let elapsed = start.elapsed();

    for (qi, q) in queries.iter().enumerate() {
        let mut order: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let (dx, dy, dz) = (q.x - p.x, q.y - p.y, q.z - p.z);
                (dx * dx + dy * dy + dz * dz, i)
            })
            .collect();
        order.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        let expected: Vec<(usize, f64)> = order[..10].iter().map(|&(d2, i)| (i, d2.sqrt())).collect();
        ensure!(
            got[qi] == expected,
            "query {qi}: neighbours disagree with the linear scan"
        );
    }
    ensure!(
        elapsed < Duration::from_secs(1),
        "build + 50 queries took {elapsed:.2?}, budget 1 s"
    );
    Ok(format!("50 queries x k=10 over 500 points exact, {elapsed:.2?}"))
}

// ── Criterion 3: single-solve recovery from perturbed initializations ───────

fn criterion_03_recovery() -> Result<String, String> {
    let (mesh, manifest) = room_scene();
    // Density 120 keeps estimated normals clean near wall/floor seams; the
    // solver's bias floor tracks the normal-estimation neighbourhood radius.
    let map_config = MapConfig {
        density: 120.0,
        ..MapConfig::default()
    };
    let (map, _) = lib(build_semantic_map(&mesh, &manifest, &map_config))?;
    let index = lib(KdTree::new(&map.points))?;
    let scene = lib(build_scene(&mesh, &[], &DeviationSpec::default()))?;
    let sensor = wide_sensor(1.0, 0.0, 0);

    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst_t = 0.0f64;
    let mut worst_r = 0.0f64;
    let mut worst_time = Duration::ZERO;
    for trial in 0..50 {
        let truth = Pose::new(
            Rotation3::from_axis_angle(&Vector3::z_axis(), rng.random_range(-PI..PI)),
            Vector3::new(
                rng.random_range(1.5..4.5),
                rng.random_range(1.5..4.5),
                rng.random_range(1.0..2.0),
            ),
        );
        let scan = lib(cast_scan(&scene, &truth, &sensor))?;
        // Up to 0.5 m in a uniform direction and 10 deg of yaw off the truth.
        let offset = unit_vector(&mut rng) * rng.random_range(0.0..0.5);
        let dyaw = rng.random_range(-10f64.to_radians()..10f64.to_radians());
        let init = Pose::new(
            Rotation3::from_axis_angle(&Vector3::z_axis(), dyaw) * truth.rotation,
            truth.translation + offset,
        );

        let start = Instant::now();
        let result = lib(solve_icp(&scan, &map, &index, &init, &WeightConfig::default(), 40))?;
        let elapsed = start.elapsed();

        let terr = result.pose.translation_distance_to(&truth);
        let rerr = result.pose.rotation_angle_to(&truth).to_degrees();
        ensure!(
            elapsed < Duration::from_secs(2),
            "trial {trial}: solve took {elapsed:.2?}, budget 2 s"
        );
        ensure!(terr <= 1e-3, "trial {trial}: translation error {terr:.2e} m > 1e-3");
        ensure!(rerr <= 0.05, "trial {trial}: rotation error {rerr:.2e} deg > 0.05");
        worst_t = worst_t.max(terr);
        worst_r = worst_r.max(rerr);
        worst_time = worst_time.max(elapsed);
    }
    Ok(format!(
        "50 trials: worst {worst_t:.1e} m / {worst_r:.1e} deg / {worst_time:.0?} per solve"
    ))
}

// ── Criterion 4: mu = 0.5 semantic weighting degenerates to the baseline ────

fn criterion_04_weight_degeneracy() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0.0f64;
    for trial in 0..10 {
        let step = rng.random_range(0.12..0.18);
        let map = lib(IndexedMap::new(three_plane_cloud(step, 1), walls_table()))?;
        let (tx, ty, tyaw) = (
            rng.random_range(1.8..2.2),
            rng.random_range(1.8..2.2),
            rng.random_range(-0.087..0.087),
        );
        let truth = Pose::from_se2(tx, ty, 0.0, tyaw);
        let init = Pose::from_se2(
            tx + rng.random_range(-0.1..0.1),
            ty + rng.random_range(-0.1..0.1),
            0.0,
            tyaw + rng.random_range(-0.03..0.03),
        );
        let decimate = rng.random_range(2usize..5);
        let scan = interior_scan(map.cloud(), &truth, 1.0, decimate).with_timestamp(1.0);

        // With mu = 0.5 a uniformly labeled scene weights matches and
        // mismatches identically, so the fine stage must reproduce the
        // unweighted baseline's pose.
        let sem = TrackerConfig {
            variant: Variant::SemWc,
            selection_whitelist: vec!["Walls".into()],
            weight: WeightConfig {
                mu: 0.5,
                ..WeightConfig::default()
            },
            ..TrackerConfig::default()
        };
        let icp = TrackerConfig {
            variant: Variant::IcpOrg,
            ..sem.clone()
        };
        let a = lib(run_sequence(&[scan.clone()], &map, &sem, &init))?;
        let b = lib(run_sequence(&[scan], &map, &icp, &init))?;
        ensure!(
            !a.diagnostics[0].failure && !b.diagnostics[0].failure,
            "fixture {trial}: a tracking step fell back"
        );

        let pa = a.trajectory.last().ok_or("empty trajectory")?.1;
        let pb = b.trajectory.last().ok_or("empty trajectory")?.1;
        let gap_t = pa.translation_distance_to(&pb);
        let gap_r = (pa.rotation.matrix() - pb.rotation.matrix()).amax();
        ensure!(
            gap_t <= 1e-6 && gap_r <= 1e-6,
            "fixture {trial}: poses differ by {gap_t:.2e} m / {gap_r:.2e} matrix"
        );
        // Agreement on a wrong pose would be vacuous; both must track truth.
        let err = pa.translation_distance_to(&truth);
        ensure!(err <= 1e-3, "fixture {trial}: both poses off truth by {err:.2e} m");
        worst = worst.max(gap_t.max(gap_r));
    }
    Ok(format!("10 fixtures, max pose gap {worst:.1e} (mu = 0.5)"))
}

// ── Criteria 5, 7, 8: one 40 m corridor run shared across three checks ──────

struct CorridorRun {
    gt: Trajectory<f64>,
    est: Trajectory<f64>,
    diagnostics: Vec<StepDiagnostics>,
    track_seconds: f64,
}

static CORRIDOR: OnceLock<Result<CorridorRun, String>> = OnceLock::new();

fn corridor() -> Result<&'static CorridorRun, String> {
    CORRIDOR.get_or_init(build_corridor).as_ref().map_err(Clone::clone)
}

/// 44 x 4 x 3 m corridor with ten alternating wall columns; 401 scans along
/// a 40 m straight path at 0.1 m spacing, tracked with the default config.
fn build_corridor() -> Result<CorridorRun, String> {
    let mut b = MeshBuilder::new();
    b.box_shell([0.0, 0.0, 0.0], [44.0, 4.0, 3.0]);
    let (categories, [floors, walls, ceilings, columns]) = standard_categories();
    let mut boxes = vec![
        lbox("FL", floors, [-0.1, -0.1, -0.1], [44.1, 4.1, 0.1]),
        lbox("CE", ceilings, [-0.1, -0.1, 2.9], [44.1, 4.1, 3.1]),
        lbox("WA-Y0", walls, [-0.1, -0.1, -0.1], [44.1, 0.1, 3.1]),
        lbox("WA-Y4", walls, [-0.1, 3.9, -0.1], [44.1, 4.1, 3.1]),
        lbox("WA-X0", walls, [-0.1, -0.1, -0.1], [0.1, 4.1, 3.1]),
        lbox("WA-X44", walls, [43.9, -0.1, -0.1], [44.1, 4.1, 3.1]),
    ];
    for k in 1..=10 {
        let x = 4.0 * k as f64;
        let (y0, y1) = if k % 2 == 0 { (0.0, 0.5) } else { (3.5, 4.0) };
        b.box_shell([x - 0.25, y0, 0.0], [x + 0.25, y1, 3.0]);
        boxes.push(lbox(
            &format!("CO-{k}"),
            columns,
            [x - 0.35, y0 - 0.1, -0.1],
            [x + 0.35, y1 + 0.1, 3.1],
        ));
    }
    let mesh = b.build();
    let manifest = BoxManifest { boxes, categories };
    let (map_cloud, _) =
        build_semantic_map(&mesh, &manifest, &MapConfig::default()).map_err(|e| e.to_string())?;
    let map =
        IndexedMap::new(map_cloud, manifest.categories.clone()).map_err(|e| e.to_string())?;

    let gt = Trajectory::new(
        (0..=400)
            .map(|i| (i as f64 * 0.1, Pose::from_se2(2.0 + 0.1 * i as f64, 2.0, 1.5, 0.0)))
            .collect(),
    )
    .map_err(|e| e.to_string())?;
    let scene = build_scene(&mesh, &[], &DeviationSpec::default()).map_err(|e| e.to_string())?;
    let sensor = wide_sensor(1.0, 0.02, 5);
    let scans: Vec<SemanticPointCloud<f64>> = simulate_sequence(&scene, &gt, &sensor)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|(_, cloud)| cloud)
        .collect();

    let config = TrackerConfig::default();
    let init = Pose::from_se2(2.02, 2.01, 1.5, 0.005);
    let start = Instant::now();
    let output = run_sequence(&scans, &map, &config, &init).map_err(|e| e.to_string())?;
    let track_seconds = start.elapsed().as_secs_f64();

    if let Some(step) = output.diagnostics.iter().find(|d| d.failure) {
        return Err(format!(
            "step at t={} fell back: {}",
            step.timestamp,
            step.failure_reason.as_deref().unwrap_or("unknown")
        ));
    }
    Ok(CorridorRun {
        gt,
        est: output.trajectory,
        diagnostics: output.diagnostics,
        track_seconds,
    })
}

fn criterion_05_corridor_accuracy() -> Result<String, String> {
    let run = corridor()?;
    let config = EvalConfig {
        mode: AlignMode::None,
        max_dt: 0.05,
        z_window: 50,
    };
    let report = lib(evaluate(&run.est, &run.gt, &config))?;
    ensure!(report.pairs == 401, "expected 401 evaluated pairs, got {}", report.pairs);
    ensure!(
        report.rmse_translation < 0.05,
        "translation RMSE {:.4} m >= 0.05",
        report.rmse_translation
    );
    ensure!(
        report.rmse_rotation_deg < 0.5,
        "rotation RMSE {:.4} deg >= 0.5",
        report.rmse_rotation_deg
    );
    ensure!(
        run.track_seconds < 60.0,
        "tracking took {:.1} s, budget 60 s",
        run.track_seconds
    );
    Ok(format!(
        "40 m, 401 scans: {:.4} m / {:.3} deg RMSE, tracked in {:.1} s",
        report.rmse_translation, report.rmse_rotation_deg, run.track_seconds
    ))
}

fn criterion_07_z_drift() -> Result<String, String> {
    let run = corridor()?;
    let drift = lib(compute_z_drift(&run.est, 50))?;
    ensure!(drift.abs() <= 0.1, "z drift {drift:.4} m exceeds 0.1 m");
    Ok(format!("|dz| = {:.4} m over {} poses (window 50)", drift.abs(), run.est.len()))
}

fn criterion_08_throughput() -> Result<String, String> {
    let run = corridor()?;
    let n = run.diagnostics.len() as f64;
    let mean_ms = run.diagnostics.iter().map(|d| d.duration_ms).sum::<f64>() / n;
    let mean_points = run.diagnostics.iter().map(|d| d.filtered_points as f64).sum::<f64>() / n;
    // The budget is meaningful only on realistically sized inputs.
    ensure!(
        mean_points >= 1500.0,
        "post-filter scans average {mean_points:.0} points, fixture wants ~2000"
    );
    ensure!(mean_ms <= 150.0, "mean step time {mean_ms:.1} ms > 150 ms");
    Ok(format!("mean {mean_ms:.1} ms per step at {mean_points:.0} post-filter points"))
}

// ── Criterion 6: variant ordering under as-built deviations ──────────────────

fn criterion_06_variant_trend() -> Result<String, String> {
    // Mapped 8 x 8 x 3 room with an interior partition; the as-built scenes
    // omit the partition, add two unmapped columns, and replace 5% of rays
    // with dynamic close-range returns.
    let mut b = MeshBuilder::new();
    b.box_shell([0.0, 0.0, 0.0], [8.0, 8.0, 3.0]);
    // Designed partition segment 1.5 m south of the path; the as-built
    // scenes drop it, leaving a phantom wall in the map.
    b.quad([
        [4.0, 2.5, 0.0],
        [4.0, 4.0, 0.0],
        [4.0, 4.0, 3.0],
        [4.0, 2.5, 3.0],
    ]);
    let mesh = b.build();
    let (categories, [floors, walls, ceilings, _]) = standard_categories();
    let boxes = vec![
        lbox("FL", floors, [-0.1, -0.1, -0.1], [8.1, 8.1, 0.1]),
        lbox("CE", ceilings, [-0.1, -0.1, 2.9], [8.1, 8.1, 3.1]),
        lbox("WA-X0", walls, [-0.1, -0.1, -0.1], [0.1, 8.1, 3.1]),
        lbox("WA-X8", walls, [7.9, -0.1, -0.1], [8.1, 8.1, 3.1]),
        lbox("WA-Y0", walls, [-0.1, -0.1, -0.1], [8.1, 0.1, 3.1]),
        lbox("WA-Y8", walls, [-0.1, 7.9, -0.1], [8.1, 8.1, 3.1]),
        lbox("WA-P", walls, [3.9, 2.4, -0.1], [4.1, 4.1, 3.1]),
    ];
    let manifest = BoxManifest { boxes, categories };
    // Density 120 as in the recovery criterion: residuals on intact surfaces
    // then stay below the Huber threshold, so down-weighting isolates the
    // injected deviations instead of map sampling artifacts.
    let map_config = MapConfig {
        density: 120.0,
        ..MapConfig::default()
    };
    let (map_cloud, _) = lib(build_semantic_map(&mesh, &manifest, &map_config))?;
    let map = lib(IndexedMap::new(map_cloud, manifest.categories.clone()))?;

    let gt = lib(Trajectory::new(
        (0..51)
            .map(|i| (i as f64 * 0.1, Pose::from_se2(1.5 + 0.1 * i as f64, 5.5, 1.5, 0.0)))
            .collect(),
    ))?;
    let init = Pose::from_se2(1.52, 5.51, 1.5, 0.005);
    let eval_config = EvalConfig {
        mode: AlignMode::None,
        max_dt: 0.05,
        z_window: 50,
    };

    let variants = [Variant::IcpOrg, Variant::SemOrg, Variant::SemWcWrho];
    let mut rmse = [[0.0f64; 5]; 3];
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        // Unmapped 1.6 m service columns graze the path (0.3-0.8 m away),
        // filling a large share of the scan while the sensor passes.
        let mut column = || {
            let cx = rng.random_range(2.5..5.5);
            let cy = rng.random_range(3.9..4.4);
            BoxShape {
                min: [cx - 0.8, cy - 0.8, 0.0],
                max: [cx + 0.8, cy + 0.8, 3.0],
            }
        };
        let deviations = DeviationSpec {
            add: vec![column(), column()],
            remove: vec!["WA-P".into()],
            dynamic_fraction: 0.05,
        };
        let scene = lib(build_scene(&mesh, &manifest.boxes, &deviations))?;
        let sensor = wide_sensor(1.5, 0.02, 100 + seed);
        let scans: Vec<SemanticPointCloud<f64>> = lib(simulate_sequence(&scene, &gt, &sensor))?
            .into_iter()
            .map(|(_, cloud)| cloud)
            .collect();
        for (vi, &variant) in variants.iter().enumerate() {
            let config = TrackerConfig {
                variant,
                ..TrackerConfig::default()
            };
            let output = lib(run_sequence(&scans, &map, &config, &init))?;
            let report = lib(evaluate(&output.trajectory, &gt, &eval_config))?;
            ensure!(
                report.pairs == 51,
                "{} seed {seed}: expected 51 pairs, got {}",
                variant.name(),
                report.pairs
            );
            rmse[vi][seed as usize] = report.rmse_translation;
        }
    }

    let median = |mut values: [f64; 5]| {
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite rmse"));
        values[2]
    };
    let (m_icp, m_sem, m_full) = (median(rmse[0]), median(rmse[1]), median(rmse[2]));
    ensure!(
        m_full <= m_sem && m_sem <= m_icp,
        "median RMSE ordering broken: SEM_WC_WRHO {m_full:.4} / SEM_ORG {m_sem:.4} / ICP_ORG {m_icp:.4}"
    );
    ensure!(
        m_full <= 0.9 * m_icp,
        "SEM_WC_WRHO {m_full:.4} m improves on ICP_ORG {m_icp:.4} m by {:.0}%, need >= 10%",
        (1.0 - m_full / m_icp) * 100.0
    );
    Ok(format!(
        "median RMSE m over 5 seeds: ICP_ORG {m_icp:.4}, SEM_ORG {m_sem:.4}, SEM_WC_WRHO {m_full:.4}"
    ))
}

// ── Criterion 9: weight functions at pinned operating points ────────────────

fn criterion_09_weight_values() -> Result<String, String> {
    let mu = 0.8f64;
    let w_match: f64 = weight_semantic(2 as Label, 2 as Label, mu);
    let w_mismatch: f64 = weight_semantic(2 as Label, 3 as Label, mu);
    ensure!(w_match == 0.8, "w_c(match) = {w_match}, expected 0.8 exactly");
    ensure!(
        w_mismatch == 1.0 - 0.8,
        "w_c(mismatch) = {w_mismatch}, expected 1 - 0.8 exactly"
    );

    let w_rho: f64 = weight_huber(0.10, 0.05);
    ensure!(w_rho == 0.5, "w_rho(0.10, 0.05) = {w_rho}, expected 0.5 exactly");
    ensure!(
        weight_huber(0.04, 0.05) == 1.0,
        "w_rho below the threshold must be exactly 1"
    );

    ensure!(
        weight_combined(w_match, w_rho) == 0.8 * 0.5,
        "combined match weight is not the exact product"
    );
    ensure!(
        weight_combined(w_mismatch, w_rho) == (1.0 - 0.8) * 0.5,
        "combined mismatch weight is not the exact product"
    );
    Ok("w_c(0.8) and w_rho(0.10, 0.05) = 0.5 exact, products exact".into())
}

// ── Criterion 10: RMSE against a closed-form oracle ─────────────────────────

fn criterion_10_rmse_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut worst = 0.0f64;
    for round in 0..20 {
        let n = rng.random_range(2usize..50);
        let mut sum_t = 0.0f64;
        let mut sum_r = 0.0f64;
        let pairs: Vec<PosePair<f64>> = (0..n)
            .map(|i| {
                let (ex, ey, eyaw): (f64, f64, f64) = (
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-PI..PI),
                );
                let (gx, gy, gyaw): (f64, f64, f64) = (
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-PI..PI),
                );
                sum_t += (ex - gx).powi(2) + (ey - gy).powi(2);
                let dyaw = wrap_deg((eyaw - gyaw).to_degrees());
                sum_r += dyaw * dyaw;
                PosePair {
                    timestamp: i as f64,
                    dt: 0.0,
                    est: Pose::from_se2(ex, ey, 0.3, eyaw),
                    gt: Pose::from_se2(gx, gy, 0.0, gyaw),
                }
            })
            .collect();
        let (rmse_t, rmse_r) = lib(compute_rmse(&pairs))?;
        let oracle_t = (sum_t / n as f64).sqrt();
        let oracle_r = (sum_r / n as f64).sqrt();
        ensure!(
            (rmse_t - oracle_t).abs() <= 1e-12,
            "round {round}: translation RMSE {rmse_t} vs oracle {oracle_t}"
        );
        ensure!(
            (rmse_r - oracle_r).abs() <= 1e-12,
            "round {round}: rotation RMSE {rmse_r} vs oracle {oracle_r}"
        );
        worst = worst.max((rmse_t - oracle_t).abs()).max((rmse_r - oracle_r).abs());
    }

    let identical: Vec<PosePair<f64>> = (0..10)
        .map(|i| {
            let pose = Pose::from_se2(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-PI..PI),
            );
            PosePair {
                timestamp: i as f64,
                dt: 0.0,
                est: pose,
                gt: pose,
            }
        })
        .collect();
    let (zero_t, zero_r) = lib(compute_rmse(&identical))?;
    ensure!(
        zero_t == 0.0 && zero_r == 0.0,
        "identical trajectories gave ({zero_t}, {zero_r}), expected exactly (0, 0)"
    );
    Ok(format!(
        "20 randomized rounds within 1e-12 (worst {worst:.1e}); identical pairs exactly zero"
    ))
}

/// Wrap to (-180, 180] degrees.
fn wrap_deg(mut angle: f64) -> f64 {
    while angle > 180.0 {
        angle -= 360.0;
    }
    while angle <= -180.0 {
        angle += 360.0;
    }
    angle
}

// ── Shared fixtures ──────────────────────────────────────────────────────────

struct MeshBuilder {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[u32; 3]>,
}

impl MeshBuilder {
    fn new() -> Self {
        MeshBuilder {
            vertices: Vec::new(),
            triangles: Vec::new(),
        }
    }

    fn quad(&mut self, corners: [[f64; 3]; 4]) {
        let base = self.vertices.len() as u32;
        for c in corners {
            self.vertices.push(Point3::new(c[0], c[1], c[2]));
        }
        self.triangles.push([base, base + 1, base + 2]);
        self.triangles.push([base, base + 2, base + 3]);
    }

    /// Six faces of an axis-aligned box.
    fn box_shell(&mut self, min: [f64; 3], max: [f64; 3]) {
        let [x0, y0, z0] = min;
        let [x1, y1, z1] = max;
        self.quad([[x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0]]);
        self.quad([[x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1]]);
        self.quad([[x0, y0, z0], [x0, y1, z0], [x0, y1, z1], [x0, y0, z1]]);
        self.quad([[x1, y0, z0], [x1, y1, z0], [x1, y1, z1], [x1, y0, z1]]);
        self.quad([[x0, y0, z0], [x1, y0, z0], [x1, y0, z1], [x0, y0, z1]]);
        self.quad([[x0, y1, z0], [x1, y1, z0], [x1, y1, z1], [x0, y1, z1]]);
    }

    fn build(self) -> TriangleMesh<f64> {
        TriangleMesh::new(self.vertices, self.triangles).expect("fixture mesh is valid")
    }
}

fn lbox(id: &str, category: Label, min: [f64; 3], max: [f64; 3]) -> LabeledBox<f64> {
    LabeledBox::new(
        id,
        category,
        Point3::new(min[0], min[1], min[2]),
        Point3::new(max[0], max[1], max[2]),
    )
    .expect("fixture box is valid")
}

/// The four standard categories, interned in a fixed order.
fn standard_categories() -> (CategoryTable, [Label; 4]) {
    let mut table = CategoryTable::new();
    let labels = ["Floors", "Walls", "Ceilings", "Columns"]
        .map(|name| table.intern(name).expect("fresh table"));
    (table, labels)
}

/// +-45 deg vertical field of view: floor and ceiling stay visible in every
/// scan, which point-to-plane needs to constrain z.
fn wide_sensor(step_deg: f64, sigma: f64, seed: u64) -> SensorModel {
    SensorModel {
        channels: 16,
        vertical_fov: (-PI / 4.0, PI / 4.0),
        horizontal_step: step_deg.to_radians(),
        max_range: 100.0,
        range_noise_sigma: sigma,
        seed,
    }
}

/// 6 x 6 x 3 m room shell with the standard category boxes.
fn room_scene() -> (TriangleMesh<f64>, BoxManifest<f64>) {
    let mut b = MeshBuilder::new();
    b.box_shell([0.0, 0.0, 0.0], [6.0, 6.0, 3.0]);
    let (categories, [floors, walls, ceilings, _]) = standard_categories();
    let boxes = vec![
        lbox("FL", floors, [-0.1, -0.1, -0.1], [6.1, 6.1, 0.1]),
        lbox("CE", ceilings, [-0.1, -0.1, 2.9], [6.1, 6.1, 3.1]),
        lbox("WA-X0", walls, [-0.1, -0.1, -0.1], [0.1, 6.1, 3.1]),
        lbox("WA-X6", walls, [5.9, -0.1, -0.1], [6.1, 6.1, 3.1]),
        lbox("WA-Y0", walls, [-0.1, -0.1, -0.1], [6.1, 0.1, 3.1]),
        lbox("WA-Y6", walls, [-0.1, 5.9, -0.1], [6.1, 6.1, 3.1]),
    ];
    (b.build(), BoxManifest { boxes, categories })
}

fn walls_table() -> CategoryTable {
    let mut table = CategoryTable::new();
    table.intern("Walls").expect("fresh table");
    table
}

/// Floor z=0 plus walls x=0 and y=0 over a 6 x 6 x 3 m extent, exact normals,
/// one contiguous block per plane so decimation samples all three.
fn three_plane_cloud(step: f64, label: Label) -> SemanticPointCloud<f64> {
    let n = (6.0 / step) as usize + 1;
    let nz = (3.0 / step) as usize + 1;
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for i in 0..n {
        for j in 0..n {
            points.push(Point3::new(i as f64 * step, j as f64 * step, 0.0));
            normals.push(Vector3::new(0.0, 0.0, 1.0));
        }
    }
    for i in 0..n {
        for k in 1..nz {
            points.push(Point3::new(0.0, i as f64 * step, k as f64 * step));
            normals.push(Vector3::new(1.0, 0.0, 0.0));
        }
    }
    for i in 0..n {
        for k in 1..nz {
            points.push(Point3::new(i as f64 * step, 0.0, k as f64 * step));
            normals.push(Vector3::new(0.0, 1.0, 0.0));
        }
    }
    let labels = vec![label; points.len()];
    SemanticPointCloud::new(points)
        .with_normals(normals)
        .expect("fixture normals are valid")
        .with_labels(labels)
        .expect("fixture labels are valid")
}

/// Decimated interior sample of the three-plane map, expressed in the sensor
/// frame of `truth`. Margins keep plane edges out of the scan.
fn interior_scan(
    map: &SemanticPointCloud<f64>,
    truth: &Pose<f64>,
    margin: f64,
    decimate: usize,
) -> SemanticPointCloud<f64> {
    let inv = truth.inverse();
    let points: Vec<Point3<f64>> = map
        .points
        .iter()
        .filter(|p| {
            (p.z == 0.0
                && p.x > margin
                && p.x < 6.0 - margin
                && p.y > margin
                && p.y < 6.0 - margin)
                || (p.x == 0.0
                    && p.y > margin
                    && p.y < 6.0 - margin
                    && p.z > margin
                    && p.z < 3.0 - margin)
                || (p.y == 0.0
                    && p.x > margin
                    && p.x < 6.0 - margin
                    && p.z > margin
                    && p.z < 3.0 - margin)
        })
        .step_by(decimate)
        .map(|p| inv.transform_point(p))
        .collect();
    SemanticPointCloud::new(points)
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let z: f64 = rng.random_range(-1.0..1.0);
    let theta = rng.random_range(-PI..PI);
    let r = (1.0 - z * z).sqrt();
    Vector3::new(r * theta.cos(), r * theta.sin(), z)
}
