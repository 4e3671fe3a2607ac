//! Randomized invariants of the geometry, transport, dynamics, potential and
//! one-dimensional layers.

use lagflow::dynamics::{run_simulation, FlowConfig};
use lagflow::geometry::{build_power_diagram, clip_with_disk};
use lagflow::oned::{project_crowd_1d, truncated_gaussian_variance, verify_crowd_bound, Particles1D};
use lagflow::ot::{check_complementarity, moreau_yosida};
use lagflow::potentials::{GridField, PotentialSpec};
use lagflow::presets;
use lagflow::{ConvexPolygon, DomainGeometry, NewtonOptions, ParticleSet, TransportMode, Vec2};
use proptest::prelude::*;

fn unit_square() -> DomainGeometry {
    presets::square(0.0, 0.0, 1.0).unwrap()
}

fn far_enough(pts: &[Vec2], min: f64) -> bool {
    pts.iter().enumerate().all(|(i, p)| pts[..i].iter().all(|q| (p - q).norm() > min))
}

/// `n` points in `[lo, hi]²` with pairwise distances above `1e-3`.
fn cloud(n: std::ops::Range<usize>, lo: f64, hi: f64) -> impl Strategy<Value = Vec<Vec2>> {
    prop::collection::vec((lo..hi, lo..hi), n)
        .prop_map(|v| v.into_iter().map(|(x, y)| Vec2::new(x, y)).collect::<Vec<_>>())
        .prop_filter("near-coincident points", |p| far_enough(p, 1e-3))
}

fn cloud_with_psi(n: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<Vec2>, Vec<f64>)> {
    cloud(n, 0.0, 1.0).prop_flat_map(|p| {
        let k = p.len();
        (Just(p), prop::collection::vec(-0.05..0.05f64, k))
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn laguerre_cells_partition_the_domain((pts, psi) in cloud_with_psi(2..40), bimodal in any::<bool>()) {
        let dom = if bimodal {
            // the cloud sits in the left room; corridor and right room must
            // still be shared out
            let b = presets::bimodal(presets::bimodal_alpha()).unwrap();
            b.domain
        } else {
            unit_square()
        };
        let x = ParticleSet::new(pts, 0.05).unwrap();
        let cells = build_power_diagram(&x, &psi, &dom).unwrap();
        let total: f64 = cells.iter().map(|c| c.area()).sum();
        prop_assert!(rel(total, dom.total_area()) <= 1e-9, "{} vs {}", total, dom.total_area());
    }

    #[test]
    fn shared_facets_have_equal_length((pts, psi) in cloud_with_psi(2..40)) {
        let dom = unit_square();
        let x = ParticleSet::new(pts, 0.05).unwrap();
        let cells = build_power_diagram(&x, &psi, &dom).unwrap();
        for (i, c) in cells.iter().enumerate() {
            for f in c.facets() {
                let back = cells[f.neighbor].facets().into_iter().find(|g| g.neighbor == i).map_or(0.0, |g| g.length);
                prop_assert!(rel(f.length, back) <= 1e-10 || (f.length - back).abs() <= 1e-14,
                    "|Γ_{}{}| = {} but |Γ_{}{}| = {}", i, f.neighbor, f.length, f.neighbor, i, back);
            }
        }
    }

    #[test]
    fn barycenters_translate_with_the_configuration(
        (pts, psi) in cloud_with_psi(2..30),
        vx in -5.0..5.0f64,
        vy in -5.0..5.0f64,
    ) {
        let v = Vec2::new(vx, vy);
        let dom = unit_square();
        let x = ParticleSet::new(pts.clone(), 0.05).unwrap();
        let moved = ParticleSet::new(pts.iter().map(|p| p + v).collect(), 0.05).unwrap();
        let a = build_power_diagram(&x, &psi, &dom).unwrap();
        let b = build_power_diagram(&moved, &psi, &dom.translated(&v)).unwrap();
        for (ca, cb) in a.iter().zip(&b) {
            match (ca.moments().barycenter, cb.moments().barycenter) {
                (Some(p), Some(q)) => prop_assert!((q - p - v).norm() <= 1e-12, "{:e}", (q - p - v).norm()),
                (None, None) => {}
                (p, q) => prop_assert!(false, "emptiness differs: {:?} {:?}", p, q),
            }
        }
    }

    #[test]
    fn raising_a_potential_never_shrinks_its_cell(
        (pts, psi) in cloud_with_psi(2..30),
        pick in any::<prop::sample::Index>(),
        delta in 1e-6..0.05f64,
    ) {
        let dom = unit_square();
        let x = ParticleSet::new(pts, 0.05).unwrap();
        let i = pick.index(psi.len());
        let before = build_power_diagram(&x, &psi, &dom).unwrap()[i].area();
        let mut raised = psi.clone();
        raised[i] += delta;
        let after = build_power_diagram(&x, &raised, &dom).unwrap()[i].area();
        prop_assert!(after >= before - 1e-15, "{} < {}", after, before);
    }

    #[test]
    fn disk_clipping_is_bounded_by_cell_and_disk((pts, psi) in cloud_with_psi(2..30), r in 0.0..0.8f64) {
        let dom = unit_square();
        let x = ParticleSet::new(pts, 0.05).unwrap();
        for c in build_power_diagram(&x, &psi, &dom).unwrap() {
            let clipped = clip_with_disk(&c, &c.origin, r).area();
            let bound = c.area().min(std::f64::consts::PI * r * r);
            prop_assert!(clipped <= bound * (1.0 + 1e-12) + 1e-15, "{} > {}", clipped, bound);
        }
    }
}

fn my_value(pts: &[Vec2], eps: f64, mode: TransportMode) -> f64 {
    let x = ParticleSet::new(pts.to_vec(), eps).unwrap();
    moreau_yosida(&x, &unit_square(), mode, &NewtonOptions::default(), None).unwrap().value
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// `F_ε(X) - |X|²/(2Nε)` is midpoint concave.
    #[test]
    fn moreau_yosida_is_semiconcave(
        a in cloud(8..9, 0.2, 0.8),
        b in cloud(8..9, 0.2, 0.8),
        entropy in any::<bool>(),
    ) {
        let mid: Vec<Vec2> = a.iter().zip(&b).map(|(p, q)| 0.5 * (p + q)).collect();
        prop_assume!(far_enough(&mid, 1e-3));
        let (eps, n) = (0.05, 8.0);
        let mode = if entropy { TransportMode::Entropy } else { TransportMode::Crowd };
        let g = |x: &[Vec2]| my_value(x, eps, mode) - x.iter().map(|p| p.norm_squared()).sum::<f64>() / (2.0 * n * eps);
        let (ga, gb, gm) = (g(&a), g(&b), g(&mid));
        prop_assert!(gm >= 0.5 * (ga + gb) - 1e-9, "{} < {}", gm, 0.5 * (ga + gb));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn converged_duals_split_mass_evenly(pts in cloud(3..40, 0.1, 0.9), entropy in any::<bool>()) {
        let n = pts.len();
        let x = ParticleSet::new(pts, 0.03).unwrap();
        let mode = if entropy { TransportMode::Entropy } else { TransportMode::Crowd };
        let my = moreau_yosida(&x, &unit_square(), mode, &NewtonOptions::default(), None).unwrap();
        let tol = 1e-9 / n as f64;
        for m in &my.dual.cell_masses {
            prop_assert!((m - 1.0 / n as f64).abs() <= tol);
        }
        prop_assert!(my.duality_gap() <= 1e-8, "gap {}", my.duality_gap());
    }

    #[test]
    fn crowd_transport_cost_decomposes(pts in cloud(3..40, 0.1, 0.9)) {
        let n = pts.len() as f64;
        let x = ParticleSet::new(pts, 0.03).unwrap();
        let my = moreau_yosida(&x, &unit_square(), TransportMode::Crowd, &NewtonOptions::default(), None).unwrap();
        let d = &my.dual;
        let rhs = d.second_moments.iter().sum::<f64>()
            + d.positions.iter().zip(&d.barycenters).map(|(x, b)| (x - b).norm_squared()).sum::<f64>() / n;
        prop_assert!(rel(d.w2_squared(), rhs) <= 1e-8);
    }

    #[test]
    fn forces_are_translation_invariant(pts in cloud(3..25, 0.1, 0.9), vx in -3.0..3.0f64, vy in -3.0..3.0f64, entropy in any::<bool>()) {
        let v = Vec2::new(vx, vy);
        let mode = if entropy { TransportMode::Entropy } else { TransportMode::Crowd };
        let dom = unit_square();
        let opts = NewtonOptions::default();
        let a = moreau_yosida(&ParticleSet::new(pts.clone(), 0.03).unwrap(), &dom, mode, &opts, None).unwrap();
        let moved = ParticleSet::new(pts.iter().map(|p| p + v).collect(), 0.03).unwrap();
        let b = moreau_yosida(&moved, &dom.translated(&v), mode, &opts, None).unwrap();
        let scale = a.force.iter().map(|f| f.norm()).fold(1.0, f64::max);
        for (fa, fb) in a.force.iter().zip(&b.force) {
            // both solves stop somewhere inside the Newton tolerance
            prop_assert!((fa - fb).norm() <= 1e-6 * scale, "{:e}", (fa - fb).norm());
        }
    }
}

#[test]
fn runs_are_bitwise_deterministic() {
    let dom = unit_square();
    let pts = lagflow::dynamics::grid_initialization(&presets::square(0.3, 0.3, 0.4).unwrap(), 0.1).unwrap();
    let x = ParticleSet::new(pts, 0.1).unwrap();
    let cfg = FlowConfig::from_grid_spacing(
        0.1,
        TransportMode::Crowd,
        0.3,
        PotentialSpec::Quadratic { center: Vec2::new(0.5, 0.2) },
    );
    let a = run_simulation(&x, &dom, &cfg).unwrap();
    let b = run_simulation(&x, &dom, &cfg).unwrap();
    assert_eq!(a.frames.len(), b.frames.len());
    for (fa, fb) in a.frames.iter().zip(&b.frames) {
        assert_eq!(fa.positions, fb.positions);
        assert_eq!(fa.psi, fb.psi);
        assert_eq!(fa.energy.to_bits(), fb.energy.to_bits());
    }
}

#[test]
fn crowd_density_constraint_holds_along_a_run() {
    let dom = unit_square();
    let pts = lagflow::dynamics::grid_initialization(&presets::square(0.05, 0.05, 0.5).unwrap(), 1.0 / 12.0).unwrap();
    let h = 1.0 / 12.0;
    let x = ParticleSet::new(pts, h).unwrap();
    let cfg = FlowConfig::from_grid_spacing(h, TransportMode::Crowd, 0.5, PotentialSpec::Norm { center: Vec2::new(0.9, 0.9) });
    let traj = run_simulation(&x, &dom, &cfg).unwrap();
    assert!(traj.completed());
    assert!(traj.min_distance > 1e-12);
    let opts = NewtonOptions::default();
    for f in &traj.frames {
        let my = moreau_yosida(&ParticleSet::new(f.positions.clone(), h).unwrap(), &dom, TransportMode::Crowd, &opts, None).unwrap();
        let rep = check_complementarity(&my.dual, &dom, 60);
        assert!(rep.max_violation <= 1e-10, "t = {}: {}", f.t, rep.max_violation);
        assert_eq!(rep.overlaps, 0);
    }
}

/// Dissipated kinetic energy against the drop in `E^N`, over the whole run.
fn dissipation_mismatch(tau: f64) -> f64 {
    let eps = 0.05;
    let dom = presets::square(-2.0, -2.0, 4.0).unwrap();
    let pts = lagflow::dynamics::grid_initialization(&presets::square(-0.3, -0.3, 0.6).unwrap(), 0.1).unwrap();
    let x = ParticleSet::new(pts, eps).unwrap();
    let cfg = FlowConfig {
        tau,
        ..FlowConfig::from_grid_spacing(0.1, TransportMode::Entropy, 0.2, PotentialSpec::Quadratic { center: Vec2::zeros() })
    };
    let traj = run_simulation(&x, &dom, &cfg).unwrap();
    assert!(traj.completed());
    assert_eq!(traj.projections, 0);
    let dissipated: f64 = traj.mean_sq_speed.iter().take(traj.energies.len() - 1).map(|v2| tau * v2).sum();
    let drop = traj.energies[0] - traj.energies.last().unwrap();
    (dissipated - drop).abs() / drop
}

#[test]
fn kinetic_dissipation_matches_energy_drop_as_tau_shrinks() {
    let m: Vec<f64> = [0.02, 0.01, 0.005].into_iter().map(dissipation_mismatch).collect();
    assert!(m[2] <= 0.2, "{m:?}");
    assert!(m[2] < m[0], "{m:?}");
}

#[test]
fn eikonal_field_has_unit_speed() {
    let b = presets::bimodal(presets::bimodal_alpha()).unwrap();
    let h = b.alpha / 40.0;
    let field = GridField::fast_marching(&b.domain, &b.targets, h).unwrap();
    let mut worst: f64 = 0.0;
    for j in 0..field.ny {
        for i in 0..field.nx {
            let k = j * field.nx + i;
            if !field.inside[k] {
                continue;
            }
            assert!(field.values[k].is_finite() && field.values[k] >= 0.0);
            if i + 1 < field.nx && field.inside[k + 1] {
                worst = worst.max((field.values[k + 1] - field.values[k]).abs() / field.spacing[0]);
            }
            if j + 1 < field.ny && field.inside[k + field.nx] {
                worst = worst.max((field.values[k + field.nx] - field.values[k]).abs() / field.spacing[1]);
            }
        }
    }
    assert!(worst <= 1.0 + 1e-9, "difference quotient {worst}");
}

/// Targets and re-entrant door corners: `V` is a cone around each of them,
/// so the bilinear interpolant's gradient reaches up to √2 within a grid
/// cell or so, at every resolution.
fn bimodal_apices(a: f64) -> [Vec2; 6] {
    [
        Vec2::new(a, a / 3.0),
        Vec2::new(a, 2.0 * a / 3.0),
        Vec2::new(4.0 * a / 3.0, a / 3.0),
        Vec2::new(4.0 * a / 3.0, 2.0 * a / 3.0),
        Vec2::new(7.0 * a / 3.0, 0.0),
        Vec2::new(7.0 * a / 3.0, a),
    ]
}

/// Largest `|∇V| - 1` over a sample grid of the bimodal domain, at distance
/// more than `margin` from the apices.
fn eikonal_excess(h: f64, margin: f64) -> f64 {
    let b = presets::bimodal(presets::bimodal_alpha()).unwrap();
    let field = GridField::fast_marching(&b.domain, &b.targets, h).unwrap();
    let apices = bimodal_apices(b.alpha);
    let m = 420;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..=m {
        for j in 0..=m / 3 {
            let p = Vec2::new(7.0 * b.alpha / 3.0 * i as f64 / m as f64, b.alpha * j as f64 / (m / 3) as f64);
            if b.domain.contains(&p) && apices.iter().all(|c| (p - c).norm() > margin) {
                worst = worst.max(field.gradient(&p).norm() - 1.0);
            }
        }
    }
    worst
}

#[test]
fn eikonal_gradient_excess_is_first_order_away_from_apices() {
    let a = presets::bimodal_alpha();
    let e: Vec<f64> = [20.0, 40.0, 80.0].into_iter().map(|d| eikonal_excess(a / d, 0.1)).collect();
    assert!(e[1] <= 0.6 * e[0] && e[2] <= 0.6 * e[1], "{e:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interpolated_eikonal_gradient_is_bounded(u in 0.0..1.0f64, v in 0.0..1.0f64, room in 0usize..3) {
        let b = presets::bimodal(presets::bimodal_alpha()).unwrap();
        let h = b.alpha / 40.0;
        let piece: &ConvexPolygon = [&b.left, &b.corridor, &b.right][room];
        let (lo, hi) = piece.vertices().iter().fold(
            (Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY)),
            |(lo, hi), p| (lo.inf(p), hi.sup(p)),
        );
        let p = Vec2::new(lo.x + u * (hi.x - lo.x), lo.y + v * (hi.y - lo.y));
        let field = GridField::fast_marching(&b.domain, &b.targets, h).unwrap();
        let g = field.gradient(&p);
        // each partial is a blend of grid difference quotients
        prop_assert!(g.amax() <= 1.0 + 1e-12, "∇V = {:?} at {:?}", g, p);
        if bimodal_apices(b.alpha).iter().all(|c| (p - c).norm() > 0.1) {
            prop_assert!(g.norm() <= 1.0 + 6.0 * h, "|∇V| = {} at {:?}", g.norm(), p);
        }
    }
}

/// Isotonic regression through the greatest convex minorant of the
/// cumulative sum diagram (a convex hull, not a pooling sweep).
fn isotonic_by_minorant(y: &[f64]) -> Vec<f64> {
    let mut pts = vec![(0.0, 0.0)];
    let mut s = 0.0;
    for (k, v) in y.iter().enumerate() {
        s += v;
        pts.push(((k + 1) as f64, s));
    }
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            // drop b when it lies on or above the chord a→p
            if (b.1 - a.1) * (p.0 - a.0) >= (p.1 - a.1) * (b.0 - a.0) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let mut out = Vec::with_capacity(y.len());
    for w in hull.windows(2) {
        let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
        for _ in w[0].0 as usize..w[1].0 as usize {
            out.push(slope);
        }
    }
    out
}

/// `min ∫_0^1 |T - X|²` over quantile functions with `T' ≥ 1` and range in
/// `[a, b]`, on `m` midpoints: `T = s + U` with `U` nondecreasing in
/// `[a, b - 1]`.
fn quantile_qp_cost(x: &[f64], (a, b): (f64, f64), m: usize) -> f64 {
    let n = x.len();
    let s: Vec<f64> = (0..m).map(|j| (j as f64 + 0.5) / m as f64).collect();
    let target: Vec<f64> = s.iter().map(|sj| x[((sj * n as f64) as usize).min(n - 1)]).collect();
    let y: Vec<f64> = target.iter().zip(&s).map(|(t, sj)| t - sj).collect();
    let u = isotonic_by_minorant(&y);
    u.iter()
        .zip(&s)
        .zip(&target)
        .map(|((uj, sj), t)| (sj + uj.clamp(a, b - 1.0) - t).powi(2))
        .sum::<f64>()
        / m as f64
}

fn sorted_positions(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, n).prop_map(|mut v| {
        v.sort_by(f64::total_cmp);
        v
    })
    .prop_filter("repeated position", |v| v.windows(2).all(|w| w[0] < w[1]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn pooling_projection_matches_the_quantile_qp(x in sorted_positions(50, 0.0, 2.0), window in 0.2..2.0f64) {
        // squeeze part of the configurations so that blocks touch the ends
        let x: Vec<f64> = x.iter().map(|v| v * window / 2.0 + (2.0 - window) * 0.5).collect();
        let p = Particles1D::new(x.clone(), 1.0 / 50.0, (0.0, 2.0)).unwrap();
        let proj = project_crowd_1d(&p).unwrap();
        let oracle = quantile_qp_cost(&x, (0.0, 2.0), 10_000);
        prop_assert!((proj.cost - oracle).abs() <= 1e-6, "{} vs {}", proj.cost, oracle);
    }

    #[test]
    fn crowd_quantity_is_exactly_a_twelfth(x in sorted_positions(20, 0.0, 1.5)) {
        let p = Particles1D::new(x, 1.0 / 20.0, (0.0, 1.5)).unwrap();
        prop_assert!((verify_crowd_bound(&p).unwrap() - 1.0 / 12.0).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn truncated_gaussian_variance_is_at_most_eps(
        lo in -2.0..2.0f64,
        width in 1e-3..5.0f64,
        x in -3.0..3.0f64,
        log_eps in -9.0..0.0f64,
    ) {
        let eps = log_eps.exp();
        let v = truncated_gaussian_variance(lo, lo + width, x, eps);
        prop_assert!(v <= eps * (1.0 + 1e-12), "{} > {}", v, eps);
        prop_assert!(v >= 0.0);
    }
}

#[test]
fn radial_error_table_is_deterministic() {
    let a = lagflow::validation::error_table(&[1.0 / 8.0], 0.25).unwrap();
    let b = lagflow::validation::error_table(&[1.0 / 8.0], 0.25).unwrap();
    assert_eq!(a.rows[0].err_h.to_bits(), b.rows[0].err_h.to_bits());
    assert_eq!(a.rows[0].w2_series, b.rows[0].w2_series);
}
