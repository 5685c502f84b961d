use nalgebra::{Matrix2, Matrix4, Matrix4x2, Vector4};
use proptest::prelude::*;
use std::f64::consts::PI;

use roundabout_core::kinematics::{
    discretize, dynamics_rhs, expm, integrate_plant, linearize, predict_trajectory, AugmentedState,
    ControlDelta, ControlInput, HorizonConfig, PredictionMatrices, VehicleParameters, VehicleState,
};
use roundabout_core::scenario::geometry::{Path, Port, RoundaboutGeometry, Route, Segment};
use roundabout_core::scenario::tracking::curve_speed_limit;
use roundabout_core::scenario::{
    assign_roles, bundled, load_scenario, RoleConfig, TrackerConfig, BUNDLED,
};

fn params() -> VehicleParameters {
    VehicleParameters::default()
}

fn state() -> impl Strategy<Value = VehicleState> {
    (0.0f64..15.0, -PI..PI, -50.0f64..50.0, -50.0f64..50.0)
        .prop_map(|(v, p, x, y)| VehicleState::new(v, p, x, y))
}

fn control() -> impl Strategy<Value = ControlInput> {
    (-3.0f64..3.0, -0.5f64..0.5).prop_map(|(a, d)| ControlInput::new(a, d))
}

fn rhs(x: &Vector4<f64>, u: &ControlInput) -> Vector4<f64> {
    dynamics_rhs(&VehicleState::from_vector(x), u, &params()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn jacobians_match_central_differences(x in state(), u in control()) {
        let (a, b) = linearize(&x, &u, &params()).unwrap();
        let h = 1e-6;
        let x0 = x.to_vector();
        for j in 0..4 {
            let mut e = Vector4::zeros();
            e[j] = h;
            let fd = (rhs(&(x0 + e), &u) - rhs(&(x0 - e), &u)) / (2.0 * h);
            for i in 0..4 {
                prop_assert!((a[(i, j)] - fd[i]).abs() <= 1e-5 * a[(i, j)].abs().max(1.0), "A[{i},{j}]");
            }
        }
        for j in 0..2 {
            let mut up = u;
            let mut dn = u;
            if j == 0 {
                up.ax += h;
                dn.ax -= h;
            } else {
                up.delta_f += h;
                dn.delta_f -= h;
            }
            let fd = (rhs(&x0, &up) - rhs(&x0, &dn)) / (2.0 * h);
            for i in 0..4 {
                prop_assert!((b[(i, j)] - fd[i]).abs() <= 1e-5 * b[(i, j)].abs().max(1.0), "B[{i},{j}]");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lifted_prediction_equals_step_recursion(
        x in state(),
        u in control(),
        np in 1usize..25,
        nc_frac in 0.0f64..1.0,
        raw in proptest::collection::vec((-0.5f64..0.5, -0.05f64..0.05), 25),
    ) {
        let nc = 1 + ((np - 1) as f64 * nc_frac) as usize;
        let horizon = HorizonConfig { np, nc, dt: 0.1 };
        let mats = PredictionMatrices::at(&x, &u, &params(), horizon).unwrap();
        let du: Vec<ControlDelta> = raw[..nc].iter().map(|&(a, d)| ControlDelta::new(a, d)).collect();
        let xi0 = AugmentedState::new(&x, &u);
        let lifted = mats.lifted_output(&xi0, &du).unwrap();

        // independent recursion on the increment form
        let (ak, bk) = (mats.a_k, mats.b_k);
        let mut s = x.to_vector();
        let mut uk = nalgebra::Vector2::new(u.ax, u.delta_f);
        for p in 0..np {
            if p < nc {
                uk += nalgebra::Vector2::new(du[p].d_ax, du[p].d_delta_f);
            }
            s = ak * s + bk * uk;
            for i in 0..4 {
                let l = lifted[4 * p + i];
                prop_assert!((l - s[i]).abs() <= 1e-10 * s[i].abs().max(1.0), "p {p} i {i}: {l} vs {}", s[i]);
            }
        }
        let traj = predict_trajectory(&xi0, &du, &mats).unwrap();
        prop_assert_eq!(traj.len(), np);
    }

    #[test]
    fn expm_inverts_and_matches_closed_forms(
        entries in proptest::collection::vec(-2.0f64..2.0, 16),
        t in -3.0f64..3.0,
    ) {
        let m = Matrix4::from_column_slice(&entries);
        let prod = expm(&m) * expm(&(-m));
        prop_assert!((prod - Matrix4::identity()).amax() < 1e-9);

        let rot = expm(&Matrix2::new(0.0, -t, t, 0.0));
        prop_assert!((rot - Matrix2::new(t.cos(), -t.sin(), t.sin(), t.cos())).amax() < 1e-12);
        let diag = expm(&Matrix2::new(t, 0.0, 0.0, -0.5 * t));
        prop_assert!((diag - Matrix2::new(t.exp(), 0.0, 0.0, (-0.5 * t).exp())).amax() < 1e-12 * t.exp().max(1.0));
    }

    #[test]
    fn zero_order_hold_is_exact_for_nilpotent_dynamics(
        lower in proptest::collection::vec(-3.0f64..3.0, 6),
        bs in proptest::collection::vec(-3.0f64..3.0, 8),
        dt in 0.01f64..0.5,
    ) {
        let mut a = Matrix4::zeros();
        let mut k = 0;
        for i in 1..4 {
            for j in 0..i {
                a[(i, j)] = lower[k];
                k += 1;
            }
        }
        let b = Matrix4x2::from_column_slice(&bs);
        let (ak, bk) = discretize(&a, &b, dt).unwrap();
        let a2 = a * a;
        let a3 = a2 * a;
        let e = Matrix4::identity() + a * dt + a2 * (dt * dt / 2.0) + a3 * (dt.powi(3) / 6.0);
        let g = (Matrix4::identity() * dt + a * (dt * dt / 2.0) + a2 * (dt.powi(3) / 6.0) + a3 * (dt.powi(4) / 24.0)) * b;
        prop_assert!((ak - e).amax() < 1e-12);
        prop_assert!((bk - g).amax() < 1e-12);
    }

    #[test]
    fn rk4_is_exact_on_straight_constant_acceleration(x in state(), ax in 0.0f64..3.0, dt in 0.01f64..0.5) {
        let u = ControlInput::new(ax, 0.0);
        let next = integrate_plant(&x, &u, &params(), dt).unwrap();
        let dist = x.vx * dt + 0.5 * ax * dt * dt;
        prop_assert!((next.vx - (x.vx + ax * dt)).abs() < 1e-12);
        prop_assert!((next.x - (x.x + dist * x.phi.cos())).abs() < 1e-10);
        prop_assert!((next.y - (x.y + dist * x.phi.sin())).abs() < 1e-10);
        prop_assert!((next.phi - x.phi).abs() < 1e-15);
    }

    #[test]
    fn constant_steering_traces_a_circle(x in state(), delta in 0.02f64..0.5, sign in prop::bool::ANY) {
        let v = x.vx.max(1.0);
        let delta = if sign { delta } else { -delta };
        let p = params();
        let beta = p.sideslip(delta);
        let r = p.lr / beta.sin();
        let course = x.phi + beta;
        let center = (x.x - r * course.sin(), x.y + r * course.cos());
        let u = ControlInput::new(0.0, delta);
        let mut s = VehicleState::new(v, x.phi, x.x, x.y);
        for _ in 0..50 {
            s = integrate_plant(&s, &u, &p, 0.1).unwrap();
            let d = (s.x - center.0).hypot(s.y - center.1);
            prop_assert!((d - r.abs()).abs() < 1e-6 * r.abs().max(1.0), "radius {d} vs {r}");
        }
        prop_assert!((s.vx - v).abs() < 1e-12);
    }

    #[test]
    fn braking_never_reverses(x in state(), ax in -5.0f64..0.0, delta in -0.4f64..0.4) {
        let mut s = x;
        for _ in 0..100 {
            s = integrate_plant(&s, &ControlInput::new(ax, delta), &params(), 0.1).unwrap();
            prop_assert!(s.vx >= 0.0);
        }
    }
}

fn routes() -> Vec<(Route, usize)> {
    let mut out = Vec::new();
    for entry in [Port::A, Port::B, Port::C, Port::D] {
        for exit in [Port::A, Port::B, Port::C, Port::D] {
            if entry == exit {
                continue;
            }
            for lane in 0..2 {
                for ring in 0..2 {
                    out.push((
                        Route {
                            entry: Some((entry, lane)),
                            exit,
                            ring_start_angle: 0.0,
                        },
                        ring,
                    ));
                }
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn projection_recovers_station_and_offset(k in 0usize..48, frac in 0.0f64..1.0, offset in -1.0f64..1.0) {
        let g = RoundaboutGeometry::default();
        let (route, ring) = routes()[k];
        let path = g.route_path(&route, ring);
        let s = frac * path.length();
        let ((px, py), heading, _) = path.pose_at(s);
        let p = (px - offset * heading.sin(), py + offset * heading.cos());
        let proj = path.project_near(p, Some(heading), s, 5.0, 5.0);
        prop_assert!((proj.s - s).abs() < 1e-6, "s {} vs {s}", proj.s);
        prop_assert!((proj.dy - offset).abs() < 1e-6, "dy {} vs {offset}", proj.dy);
        prop_assert!(proj.dphi.abs() < 1e-9);
    }

    #[test]
    fn curve_limit_tracks_the_distance_to_a_curve(
        line in 5.0f64..80.0,
        radius in 10.0f64..40.0,
        frac in 0.0f64..1.0,
        ay_max in 1.0f64..5.0,
    ) {
        let s = frac * line;
        let cfg = TrackerConfig::default();
        let arc = Segment::arc((line, radius), radius, -PI / 2.0, PI / 2.0);
        let path = Path::new("t", vec![Segment::line((0.0, 0.0), 0.0, line), arc]);
        let limit = curve_speed_limit(&path, s, ay_max, &cfg);
        let on_curve = (cfg.curve_ay_fraction * ay_max * radius).sqrt();
        let dist = line - s;
        if dist > cfg.preview {
            prop_assert!(limit.is_infinite());
        } else {
            let lower = (on_curve.powi(2) + 2.0 * cfg.preview_decel * dist).sqrt();
            let upper = (on_curve.powi(2) + 2.0 * cfg.preview_decel * (dist + 1.0)).sqrt();
            prop_assert!(limit >= lower - 1e-9 && limit <= upper + 1e-9, "{limit} outside [{lower}, {upper}]");
        }
        let straight = Path::new("l", vec![Segment::line((0.0, 0.0), 0.3, 200.0)]);
        prop_assert!(curve_speed_limit(&straight, s, ay_max, &cfg).is_infinite());
    }
}

#[test]
fn roles_are_consistent_in_every_scenario() {
    for (name, _) in BUNDLED {
        let cfg = load_scenario(bundled(name).unwrap()).unwrap();
        let agents = cfg.build_agents().unwrap();
        for ego in 0..agents.len() {
            let map = assign_roles(&agents, ego, &cfg.geometry, &RoleConfig::default());
            let nv: Vec<usize> = map.neighbors().collect();
            let mut seen = nv.clone();
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), nv.len(), "{name}: repeated neighbor");
            assert!(
                !nv.contains(&ego) && map.lv != Some(ego),
                "{name}: ego in its own roles"
            );
            if let Some(lv) = map.lv {
                assert!(!nv.contains(&lv), "{name}: leader also a neighbor");
            }
            // every other agent has exactly one role
            let mut count = vec![0; agents.len()];
            for j in nv
                .iter()
                .copied()
                .chain(map.lv)
                .chain(map.iv.iter().copied())
            {
                count[j] += 1;
            }
            for (j, c) in count.iter().enumerate() {
                assert_eq!(*c, usize::from(j != ego), "{name}: agent {j} from {ego}");
            }
        }
    }
}

#[test]
fn lifted_output_rejects_wrong_lengths() {
    let horizon = HorizonConfig {
        np: 5,
        nc: 3,
        dt: 0.1,
    };
    let x = VehicleState::new(5.0, 0.0, 0.0, 0.0);
    let u = ControlInput::new(0.0, 0.0);
    let mats = PredictionMatrices::at(&x, &u, &params(), horizon).unwrap();
    let xi = AugmentedState::new(&x, &u);
    assert!(mats
        .lifted_output(&xi, &[ControlDelta::new(0.0, 0.0); 2])
        .is_err());
    let zero = mats
        .lifted_output(&xi, &[ControlDelta::new(0.0, 0.0); 3])
        .unwrap();
    assert_eq!(zero.len(), 20);
}
