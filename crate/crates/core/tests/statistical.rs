//! Distributional checks of the samplers and the estimators on cases with
//! known answers.

mod common;

use common::{halfline, halfspace, ks_critical_1pct, ks_statistic, mean_and_se, toy};
use dris::estimator::{empirical_h, empirical_p, run_dris, solve, MethodKind};
use dris::geometry::CanonicalFrame;
use dris::normal;
use dris::oracle::{quad_h_1d, quad_p_1d, solve_1d, solve_2d};
use dris::sampler::{draw_batch, draw_normal_batch, likelihood, transform, RngStream};

#[test]
fn base_draws_follow_their_laws() {
    let n = 20_000;
    let batch = draw_batch(RngStream::new(11, 0), n, 3).unwrap();
    let mut first: Vec<f64> = batch.column(0).collect();
    let d = ks_statistic(&mut first, |y| 1.0 - (-y).exp());
    assert!(d < ks_critical_1pct(n), "exponential KS {d}");
    for j in 1..3 {
        let mut col: Vec<f64> = batch.column(j).collect();
        let d = ks_statistic(&mut col, normal::cdf);
        assert!(d < ks_critical_1pct(n), "normal KS {d} in column {j}");
    }
    let normal_batch = draw_normal_batch(RngStream::new(11, 1), n, 2).unwrap();
    for j in 0..2 {
        let mut col: Vec<f64> = normal_batch.column(j).collect();
        let d = ks_statistic(&mut col, normal::cdf);
        assert!(d < ks_critical_1pct(n), "normal KS {d} in column {j}");
    }
}

#[test]
fn transformed_first_coordinate_is_shifted_exponential() {
    // X1 = w + Y / w has CDF 1 - exp(-w (x - w)) on [w, ∞).
    let (x1, u) = (4.0, 1.5);
    let w = x1 - u;
    let n = 20_000;
    let batch = draw_batch(RngStream::new(12, 0), n, 2).unwrap();
    let mut xs: Vec<f64> = batch.rows().map(|z| transform(z, u, x1).unwrap()[0]).collect();
    let d = ks_statistic(&mut xs, |x| if x < w { 0.0 } else { 1.0 - (-w * (x - w)).exp() });
    assert!(d < ks_critical_1pct(n), "KS {d}");
}

#[test]
fn likelihood_has_tail_mass_mean() {
    let (x1, u) = (3.0, 0.8);
    let batch = draw_batch(RngStream::new(13, 0), 200_000, 1).unwrap();
    let l: Vec<f64> = batch.rows().map(|z| likelihood(z, u, x1).unwrap()).collect();
    let (m, se) = mean_and_se(&l);
    let want = normal::sf(x1 - u);
    assert!((m - want).abs() < 4.0 * se, "{m} vs {want} (se {se})");
}

#[test]
fn kernel_means_are_unbiased_in_one_dimension() {
    // 200 independent batches of 10^4 at a fixed u.
    let (r, u) = (3.0, 0.7);
    let set = halfline(r);
    let frame = CanonicalFrame::new(&set).unwrap();
    let base = RngStream::new(14, 0);
    let (mut ps, mut hs) = (Vec::new(), Vec::new());
    for k in 0..200 {
        let batch = draw_batch(base.derive(&[k]), 10_000, 1).unwrap();
        ps.push(empirical_p(&batch, u, &frame, &set).unwrap());
        hs.push(empirical_h(&batch, u, &frame, &set).unwrap());
    }
    let (mp, sp) = mean_and_se(&ps);
    let (mh, sh) = mean_and_se(&hs);
    let (p_true, h_true) = (quad_p_1d(r, u), quad_h_1d(r, u));
    assert!((mp - p_true).abs() < 4.0 * sp, "p {mp} vs {p_true} (se {sp})");
    assert!((mh - h_true).abs() < 4.0 * sh, "h {mh} vs {h_true} (se {sh})");
}

#[test]
fn empirical_curves_follow_quadrature_in_u() {
    let r = 3.0;
    let set = halfline(r);
    let frame = CanonicalFrame::new(&set).unwrap();
    let batch = draw_batch(RngStream::new(15, 0), 100_000, 1).unwrap();
    let grid = [0.2, 0.6, 1.0, 1.4, 1.8];
    for pair in grid.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        assert!(quad_h_1d(r, a) <= quad_h_1d(r, b));
        assert!(quad_p_1d(r, a) <= quad_p_1d(r, b));
    }
    for &u in &grid {
        let p = empirical_p(&batch, u, &frame, &set).unwrap();
        let want = quad_p_1d(r, u);
        assert!((p / want - 1.0).abs() < 0.05, "u={u}: {p} vs {want}");
    }
}

#[test]
fn root_bracket_straddles_target() {
    let set = toy(3.0);
    let frame = CanonicalFrame::new(&set).unwrap();
    let x1 = frame.x1_star();
    let delta = 1e-3;
    let rng = RngStream::new(16, 0);
    let batch = draw_batch(rng, 50_000, 2).unwrap();
    let (_, root) = solve(|u| empirical_h(&batch, u, &frame, &set), delta * delta, x1).unwrap();
    assert!(empirical_h(&batch, root.lo, &frame, &set).unwrap() <= delta * delta);
    assert!(empirical_h(&batch, root.hi, &frame, &set).unwrap() > delta * delta);
    assert!(root.hi - root.lo <= 1e-9 * x1 * (1.0 + 1e-12));
    // The full pipeline on the same stream lands on the same root.
    let res = run_dris(&set, delta, 50_000, rng).unwrap();
    assert!((res.u_hat - root.u_hat).abs() <= 1e-12 * x1, "{} vs {}", res.u_hat, root.u_hat);
}

#[test]
fn clt_coverage_in_one_dimension() {
    let (r, delta) = (3.0, 0.05);
    let (_, p_star) = solve_1d(r, delta).unwrap();
    let set = halfline(r);
    let base = RngStream::new(17, 0);
    let covered = (0..100u64)
        .filter(|&k| {
            let res = run_dris(&set, delta, 20_000, base.derive(&[k])).unwrap();
            let (lo, hi) = res.ci();
            lo <= p_star && p_star <= hi
        })
        .count();
    assert!(covered >= 90, "coverage {covered}/100");
}

#[test]
fn rotation_leaves_halfspace_estimates_unchanged() {
    // DRIS only sees the set through its canonical frame, so a rotated copy of
    // a halfspace gives the same estimate from the same stream.
    let r = 3.5;
    let v = {
        let raw = [0.3, -1.2, 0.5, 2.0, -0.7];
        let n = common::norm(&raw);
        raw.map(|x| x / n)
    };
    let aligned = halfspace(&[1.0, 0.0, 0.0, 0.0, 0.0], r);
    let rotated = halfspace(&v, r);
    let rng = RngStream::new(18, 0);
    let a = run_dris(&aligned, 0.02, 50_000, rng).unwrap();
    let b = run_dris(&rotated, 0.02, 50_000, rng).unwrap();
    assert!((a.u_hat - b.u_hat).abs() < 1e-9 * r, "{} vs {}", a.u_hat, b.u_hat);
    assert!((a.p_hat / b.p_hat - 1.0).abs() < 1e-9);
    let (u_star, p_star) = solve_1d(r, 0.02).unwrap();
    assert!((b.p_hat - p_star).abs() < 3.0 * b.ci_halfwidth, "{} vs {p_star}", b.p_hat);
    assert!((b.u_hat / u_star - 1.0).abs() < 0.02);
}

#[test]
fn rotated_wedge_in_five_dimensions_matches_planar_oracle() {
    // The toy wedge times R^3, rotated by a fixed orthogonal matrix. Extra
    // coordinates do not change distances, so the planar oracle applies.
    let r = 3.0;
    let planar = toy(r);
    let (_, p_star) = solve_2d(&planar, 1e-3).unwrap();

    let angle = 0.7_f64;
    let (c, s) = (angle.cos(), angle.sin());
    // Rotation mixing coordinates (0, 2) and (1, 4).
    let rotate = |n: [f64; 5]| -> Vec<f64> {
        vec![c * n[0] - s * n[2], c * n[1] - s * n[4], s * n[0] + c * n[2], n[3], s * n[1] + c * n[4]]
    };
    let set: dris::geometry::ConvexTarget = dris::geometry::Polyhedron::from_pairs(&[
        (rotate([1.0, -5.0, 0.0, 0.0, 0.0]), r),
        (rotate([1.0, 5.0, 0.0, 0.0, 0.0]), r),
    ])
    .unwrap()
    .into();
    assert!((CanonicalFrame::new(&set).unwrap().x1_star() - r).abs() < 1e-9);
    let res = run_dris(&set, 1e-3, 200_000, RngStream::new(19, 0)).unwrap();
    assert!((res.p_hat - p_star).abs() < 3.0 * res.ci_halfwidth, "{} vs {p_star} ± {}", res.p_hat, res.ci_halfwidth);
}

#[test]
fn methods_agree_within_combined_intervals() {
    let set = toy(2.0);
    let delta = 1e-3;
    let rng = RngStream::new(20, 0);
    let runs: Vec<_> = MethodKind::ALL
        .iter()
        .map(|m| m.run(&set, delta, 200_000, rng.derive(&[m.tag()])).unwrap())
        .collect();
    for a in &runs {
        for b in &runs {
            let gap = (a.p_hat - b.p_hat).abs();
            let ci = (a.ci_halfwidth.powi(2) + b.ci_halfwidth.powi(2)).sqrt();
            assert!(gap <= 3.0 * ci, "{} {} vs {} {}", a.method, a.p_hat, b.method, b.p_hat);
        }
    }
    // Per-sample variance ordering at this rarity.
    let var = |m: MethodKind| runs.iter().find(|r| r.method == m).unwrap().asym_var;
    assert!(var(MethodKind::Dris) < var(MethodKind::ExpTwist));
    assert!(var(MethodKind::ExpTwist) < var(MethodKind::CrudeMc));
}
