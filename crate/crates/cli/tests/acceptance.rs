//! Acceptance run over the three built-in examples and the estimator
//! invariants. Prints one `CRITERION n: PASS|FAIL` line per criterion and
//! exits nonzero if any criterion fails.
//!
//! `cargo test -p asym-tool --test acceptance -- 4 7` runs a subset.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use asym_core::analysis::{covering_dimension, dimension_scales, lipschitz_profile, LipschitzVerdict};
use asym_core::corpus::{arcs_length, endpoint_a, get_example, stated_arcs};
use asym_core::directions::{covering_number, hausdorff_extrinsic, hausdorff_intrinsic};
use asym_core::fibers::{EstimatorConfig, RadiusSchedule};
use asym_core::flow::{trace_gradient_flow, verify_bounds_with_slack, FlowStatus, StepControl};
use asym_core::geom::{dist, random_unit_vector, rng_for};
use asym_core::malgrange::{check_witness_sequence, scan_asymptotic_critical_values, WitnessVerdict};
use asym_core::volume::{
    curve_part, estimate_length_crofton, estimate_volume_covering, great_circle_arc, volume_profile, VolumeConfig,
};
use asym_core::{DirectionSet, Polynomial, Provenance};
use rand::Rng;

const MESH: f64 = 0.02;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn example(id: &str) -> Polynomial {
    get_example(id).unwrap().polynomial
}

/// Scan schedule R = 10, 10^1.5, ..., 10^3.
fn scan_schedule() -> RadiusSchedule {
    RadiusSchedule::new(10.0, 10f64.sqrt(), 5).unwrap()
}

fn c1_paraboloid_directions() -> Outcome {
    let f = example("paraboloid");
    let pole = DirectionSet::new(3, vec![vec![0.0, 0.0, 1.0]], MESH, Provenance::Derived).unwrap();
    let cfg = EstimatorConfig::default();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for t in [-1.0, 0.0, 7.0] {
        let (d, _) = cfg.estimate(&f, t).unwrap();
        let h = hausdorff_extrinsic(&d, &pole).unwrap();
        parts.push(format!("t={t}: dH={h:.4} ({} pts)", d.len()));
        worst = worst.max(h);
    }
    check(worst <= 2.0 * MESH, format!("{}; bound {}", parts.join(", "), 2.0 * MESH))
}

fn c2_paraboloid_clearance() -> Outcome {
    let f = example("paraboloid");
    let rep = scan_asymptotic_critical_values(&f, &scan_schedule(), 400, 0, (-2.0, 2.0)).unwrap();
    let worst = rep
        .radii
        .iter()
        .map(|r| r.min_rabier / r.radius)
        .fold(f64::INFINITY, f64::min);
    check(
        rep.candidates.is_empty() && worst >= 0.99,
        format!("{} candidates, min over radii of min_rabier/R = {worst:.4}", rep.candidates.len()),
    )
}

fn c3_parusinski_detection() -> Outcome {
    let f = example("parusinski");
    let rep = scan_asymptotic_critical_values(&f, &scan_schedule(), 400, 0, (-2.0, 2.0)).unwrap();
    let values: Vec<f64> = rep.candidates.iter().map(|c| c.value).collect();
    let near_zero = values.iter().filter(|v| v.abs() <= 0.05).count();
    let spurious = values.iter().filter(|v| (0.1..=2.0).contains(&v.abs())).count();
    check(
        values.len() == 1 && near_zero == 1 && spurious == 0,
        format!("candidates {values:?}"),
    )
}

fn c4_parusinski_arcs() -> Outcome {
    let f = example("parusinski");
    let cfg = EstimatorConfig::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for t in [0.25, 1.0] {
        let (d, _) = cfg.estimate(&f, t).unwrap();
        let band = d.band(0, 2.0 * MESH).unwrap();
        let a = endpoint_a(t);
        let minus_a = a.map(|c| -c);
        let nearest = |p: &[f64; 3]| band.points().iter().map(|q| dist(q, p)).fold(f64::INFINITY, f64::min);
        let (da, dma) = (nearest(&a), nearest(&minus_a));
        let length = estimate_length_crofton(&curve_part(&band).unwrap(), 400, 0).unwrap();
        let target = arcs_length(&stated_arcs(t));
        let rel = (length.value - target).abs() / target;
        ok &= da <= 0.03 && dma <= 0.03 && rel <= 0.05;
        parts.push(format!(
            "t={t}: d(A)={da:.3}, d(-A)={dma:.3}, length={:.3}pi vs {:.3}pi (rel {rel:.3})",
            length.value / PI,
            target / PI
        ));
    }
    check(ok, parts.join("; "))
}

fn c5_vanishing_component_volume() -> Outcome {
    let f = example("vanishing_component");
    let grid = [-0.5, 0.0, 0.4, 0.5, 0.6];
    let prof = volume_profile(&f, &grid, &VolumeConfig::default()).unwrap();
    let vol = |t: f64| {
        prof.entries
            .iter()
            .find(|e| e.t == t)
            .and_then(|e| e.estimate.as_ref())
            .map_or(f64::NAN, |e| e.value)
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for (t, want) in [(-0.5, 3.0 * PI), (0.0, 2.0 * PI), (0.5, 3.0 * PI)] {
        let v = vol(t);
        ok &= (v - want).abs() <= 0.05 * want;
        parts.push(format!("vol({t})={:.4}pi", v / PI));
    }
    // difference quotients across 0 on the grid -0.5, 0, 0.5
    let across = [(-0.5, 0.0), (0.0, 0.5)]
        .map(|(a, b)| (vol(b) - vol(a)).abs() / (b - a))
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let smooth = [(0.4, 0.5), (0.5, 0.6)]
        .map(|(a, b)| (vol(b) - vol(a)).abs() / (b - a))
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    ok &= across > 5.0 && smooth <= 0.5;
    parts.push(format!("quotient across 0 = {across:.3}, max on 0.4..0.6 = {smooth:.3}"));
    check(ok, parts.join(", "))
}

fn c6_vanishing_component_witness() -> Outcome {
    let f = example("vanishing_component");
    let ks: Vec<f64> = (10..=1000).map(f64::from).collect();
    let pts: Vec<Vec<f64>> = ks.iter().map(|&k| vec![1.0 / k, k, 1.0 / k]).collect();
    let rep = check_witness_sequence(&f, &pts).unwrap();
    let mut worst_value: f64 = 0.0;
    let mut worst_rabier: f64 = 0.0;
    for (row, &k) in rep.rows.iter().zip(&ks) {
        worst_value = worst_value.max((row.value - k.powi(-3)).abs() / k.powi(-3));
        if k >= 100.0 {
            let want = 5f64.sqrt() / k;
            worst_rabier = worst_rabier.max((row.rabier - want).abs() / want);
        }
    }
    let supports = matches!(rep.verdict, WitnessVerdict::Supports { .. });
    check(
        worst_value <= 1e-12 && worst_rabier <= 0.02 && supports,
        format!(
            "max rel error of f = {worst_value:.2e}, of rabier (k>=100) = {worst_rabier:.2e}, verdict {:?}",
            rep.verdict
        ),
    )
}

fn c7_flow_bounds() -> Outcome {
    let f = example("paraboloid");
    let mut rng = rng_for(2024, 0);
    let ctrl = StepControl::default();
    let mut failures = Vec::new();
    // the growth bounds are tight at the start point, so only drift has a
    // margin worth reporting
    let mut least_drift = f64::INFINITY;
    for i in 0..100 {
        let t1: f64 = rng.random_range(-1.0..=1.0);
        let t2: f64 = rng.random_range(-1.0..=1.0);
        // on z = t1 + x^2 + y^2 with x^2 + y^2 = rho^2 the norm exceeds rho
        let rho: f64 = rng.random_range(25.0..60.0);
        let th: f64 = rng.random_range(0.0..2.0 * PI);
        let x0 = vec![rho * th.cos(), rho * th.sin(), t1 + rho * rho];
        let traj = trace_gradient_flow(&f, &x0, t2, 1e-3, &ctrl).unwrap();
        if traj.status != FlowStatus::Reached {
            failures.push(format!("#{i} {:?}", traj.status));
            continue;
        }
        let rep = verify_bounds_with_slack(&traj, 1e-6).unwrap();
        least_drift = least_drift.min(rep.drift.margin);
        if !rep.all_hold() {
            failures.push(format!("#{i} bounds {rep:?}"));
        }
    }
    check(
        failures.is_empty(),
        format!(
            "{} of 100 reached with all bounds, least drift margin {least_drift:.3e}{}",
            100 - failures.len(),
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join(", ")) }
        ),
    )
}

fn c8_lipschitz() -> Outcome {
    let cfg = EstimatorConfig::default();
    let p1 = lipschitz_profile(&example("paraboloid"), 5.0, 1.0, 7, &cfg).unwrap();
    let p3 = lipschitz_profile(&example("vanishing_component"), 0.0, 0.5, 7, &cfg).unwrap();
    check(
        p1.verdict == LipschitzVerdict::LipschitzConsistent && p3.verdict == LipschitzVerdict::JumpDetected,
        format!("paraboloid at 5: {:?}; vanishing_component at 0: {:?}", p1.verdict, p3.verdict),
    )
}

fn c9_cross_validation() -> Outcome {
    let eps = [0.064, 0.032, 0.016, 0.008];
    let mut ok = true;
    let mut parts = Vec::new();
    for ang in [PI / 4.0, PI / 2.0, PI, 1.5 * PI] {
        let arc = great_circle_arc(ang, 0.002).unwrap();
        let cov = estimate_volume_covering(&arc, &eps).unwrap().value;
        let cro = estimate_length_crofton(&arc, 2000, 7).unwrap().value;
        let rel = (cov - cro).abs() / cro;
        ok &= rel <= 0.1;
        parts.push(format!("{:.2}pi: rel {rel:.3}", ang / PI));
    }
    let circle = great_circle_arc(2.0 * PI, 0.01).unwrap();
    let mut within = 0;
    let mut worst_dev: f64 = 0.0;
    for seed in 0..20 {
        let v = estimate_length_crofton(&circle, 200, seed).unwrap();
        let dev = (v.value - 2.0 * PI).abs();
        worst_dev = worst_dev.max(dev);
        if dev <= 3.0 * v.error_bar + 1e-12 {
            within += 1;
        }
    }
    ok &= within == 20;
    parts.push(format!("circle: {within}/20 seeds within 3 SE, worst deviation {worst_dev:.2e}"));
    check(ok, parts.join(", "))
}

fn random_polynomial<R: Rng>(rng: &mut R, n: usize) -> Polynomial {
    let terms: Vec<(Vec<u32>, f64)> = (0..rng.random_range(1..8))
        .map(|_| {
            let exps = (0..n).map(|_| rng.random_range(0..4)).collect();
            (exps, rng.random_range(-3.0..3.0))
        })
        .collect();
    Polynomial::from_terms(n, terms).unwrap()
}

fn random_cloud<R: Rng>(rng: &mut R, count: usize) -> DirectionSet {
    let pts = (0..count).map(|_| random_unit_vector(rng, 3)).collect();
    DirectionSet::new(3, pts, 0.05, Provenance::Derived).unwrap()
}

fn on_circle<R: Rng>(rng: &mut R) -> DirectionSet {
    let pts = (0..rng.random_range(1..6))
        .map(|_| {
            let a: f64 = rng.random_range(0.0..2.0 * PI);
            vec![a.cos(), a.sin(), 0.0]
        })
        .collect();
    DirectionSet::new(3, pts, 0.05, Provenance::Derived).unwrap()
}

fn run_cli(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_asym")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn c10_invariants() -> Outcome {
    let mut rng = rng_for(10, 0);
    let mut parts = Vec::new();
    let mut ok = true;

    let mut resum = 0.0f64;
    let mut grad_err = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(2..5);
        let f = random_polynomial(&mut rng, n);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let parts_sum: f64 = f.homogeneous_decomposition().unwrap().iter().map(|p| p.value(&x)).sum();
        resum = resum.max((parts_sum - f.value(&x)).abs() / (1.0 + f.value(&x).abs()));
        let mut g = vec![0.0; n];
        f.value_and_gradient(&x, &mut g);
        for i in 0..n {
            let h = 1e-6;
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += h;
            xm[i] -= h;
            let fd = (f.value(&xp) - f.value(&xm)) / (2.0 * h);
            grad_err = grad_err.max((fd - g[i]).abs() / (1.0 + g[i].abs()));
        }
    }
    ok &= resum <= 1e-12 && grad_err <= 1e-6;
    parts.push(format!("re-sum {resum:.1e}, gradient {grad_err:.1e}"));

    let ambient = great_circle_arc(2.0 * PI, 0.01).unwrap().with_graph(0.03).unwrap();
    let mut axioms = true;
    for _ in 0..100 {
        let (a, b, c) = (random_cloud(&mut rng, 12), random_cloud(&mut rng, 9), random_cloud(&mut rng, 15));
        let d = |x: &DirectionSet, y: &DirectionSet| hausdorff_extrinsic(x, y).unwrap();
        axioms &= d(&a, &a) == 0.0 && d(&a, &b) == d(&b, &a) && d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12;
        let (a, b, c) = (on_circle(&mut rng), on_circle(&mut rng), on_circle(&mut rng));
        let g = |x: &DirectionSet, y: &DirectionSet| hausdorff_intrinsic(x, y, &ambient).unwrap();
        axioms &= g(&a, &a) == 0.0 && g(&a, &b) == g(&b, &a) && g(&a, &c) <= g(&a, &b) + g(&b, &c) + 1e-12;
    }
    ok &= axioms;
    parts.push(format!("Hausdorff axioms {}", if axioms { "hold" } else { "violated" }));

    let mut antitone = true;
    for _ in 0..50 {
        let cloud = random_cloud(&mut rng, 300);
        let counts: Vec<usize> = (1..40).map(|j| covering_number(&cloud, 0.02 * j as f64).unwrap()).collect();
        antitone &= counts.windows(2).all(|w| w[0] >= w[1]);
    }
    ok &= antitone;
    parts.push(format!("covering {}", if antitone { "antitone" } else { "not antitone" }));

    let circle = great_circle_arc(2.0 * PI, 0.005).unwrap();
    let dim = covering_dimension(&circle, &dimension_scales(0.005)).unwrap();
    ok &= (0.9..=1.1).contains(&dim);
    parts.push(format!("circle dimension {dim:.3}"));

    let runs: [&[&str]; 3] = [
        &["examples", "--example", "parusinski"],
        &["scan-kinf", "--example", "parusinski", "--radius-count", "4", "--starts", "60", "--seed", "3"],
        &["volume", "--example", "vanishing_component", "--t-grid", "-0.5", "0", "--mesh", "0.05", "--format", "csv"],
    ];
    let mut same = true;
    for args in runs {
        same &= run_cli(args) == run_cli(args);
    }
    ok &= same;
    parts.push(format!("CLI output {}", if same { "byte-identical" } else { "differs between runs" }));

    check(ok, parts.join(", "))
}

const CRITERIA: [(u32, &str, fn() -> Outcome); 10] = [
    (1, "paraboloid directions", c1_paraboloid_directions),
    (2, "paraboloid clearance", c2_paraboloid_clearance),
    (3, "parusinski detection", c3_parusinski_detection),
    (4, "parusinski arc endpoints", c4_parusinski_arcs),
    (5, "vanishing component volume jump", c5_vanishing_component_volume),
    (6, "vanishing component witness", c6_vanishing_component_witness),
    (7, "flow bounds", c7_flow_bounds),
    (8, "Lipschitz consistency vs jump", c8_lipschitz),
    (9, "estimator cross-validation", c9_cross_validation),
    (10, "invariant suites", c10_invariants),
];

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        for (n, name, _) in CRITERIA {
            println!("criterion_{n}: test ({name})");
        }
        return;
    }
    let wanted: Vec<u32> = args.iter().filter_map(|a| a.parse().ok()).collect();
    // panics inside a criterion become FAIL lines; keep their messages short
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = Vec::new();
    for (n, name, run) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("CRITERION {n}: PASS  {name} [{secs:.1}s] {detail}"),
            Err(detail) => {
                println!("CRITERION {n}: FAIL  {name} [{secs:.1}s] {detail}");
                failed.push(n);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
