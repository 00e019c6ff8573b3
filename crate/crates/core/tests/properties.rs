use navobs::dataset::{align, Event};
use navobs::lie::{
    anti_symmetric_part, dist_so3, expm5, skew, trace_r_skew, upsilon, vex, Mat3, Mat5, NavState,
    Rotation, TangentElement, Vec3,
};
use navobs::measurement::{
    aggregate, check_configuration, landmark_scatter, synthesize_observation,
};
use navobs::quat::{quat_product, quat_to_rot, rot_to_quat, Quat};
use navobs::sim::ImuSample;
use navobs::{Landmark, LandmarkMap, LandmarkObservation, Reading};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-range..range).prop_map(Vec3::from)
}

fn mat3() -> impl Strategy<Value = Mat3> {
    prop::array::uniform9(-10.0..10.0f64).prop_map(|a| Mat3::from_column_slice(&a))
}

/// Rotations up to just short of a half turn.
fn rotation() -> impl Strategy<Value = Rotation> {
    (vec3(1.0), 0.0..std::f64::consts::PI - 1e-3).prop_map(|(axis, angle)| {
        let axis = if axis.norm() < 1e-6 { Vec3::z() } else { axis };
        Rotation::from_axis_angle(&axis, angle)
    })
}

fn nav_state() -> impl Strategy<Value = NavState> {
    (rotation(), vec3(20.0), vec3(5.0)).prop_map(|(r, p, v)| NavState::new(r, p, v))
}

fn unit_quat() -> impl Strategy<Value = Quat> {
    prop::array::uniform4(-1.0..1.0f64)
        .prop_filter("away from zero", |a| {
            a.iter().map(|x| x * x).sum::<f64>() > 1e-3
        })
        .prop_map(|a| Quat::from_array(a).normalized())
}

/// Landmark sets that can observe attitude.
fn landmark_map() -> impl Strategy<Value = LandmarkMap> {
    prop::collection::vec((vec3(10.0), 0.05..2.0f64), 3..9)
        .prop_map(|pts| {
            LandmarkMap::new(
                pts.into_iter()
                    .enumerate()
                    .map(|(i, (p, s))| Landmark::new(i as u64, p, s))
                    .collect(),
            )
            .unwrap()
        })
        .prop_filter("observable", |m| {
            !check_configuration(m).violates_assumption
        })
}

fn observe(x: &NavState, map: &LandmarkMap) -> LandmarkObservation {
    synthesize_observation(x, map, 0.0, 0.0, &mut ChaCha8Rng::seed_from_u64(0))
}

proptest! {
    #[test]
    fn vex_inverts_skew_exactly(x in vec3(1e6)) {
        prop_assert_eq!(vex(&skew(&x)).unwrap(), x);
    }

    #[test]
    fn upsilon_ignores_symmetric_parts(a in mat3(), b in mat3(), c in -5.0..5.0f64) {
        let y = upsilon(&a);
        prop_assert!((upsilon(&anti_symmetric_part(&a)) - y).amax() < 1e-12);
        let sym = (b + b.transpose()) * c;
        prop_assert!((upsilon(&(a + sym)) - y).amax() < 1e-12 * (1.0 + sym.amax()));
    }

    #[test]
    fn distance_is_bounded_and_matches_frobenius(r in rotation()) {
        let d = dist_so3(&r);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!((d - (Mat3::identity() - r.matrix()).norm_squared() / 8.0).abs() < 1e-12);
    }

    #[test]
    fn exponential_inverts_with_negated_step(
        w in vec3(3.0), v in vec3(10.0), a in vec3(20.0), kappa in 0.0..1.0f64, dt in -1.0..1.0f64,
    ) {
        let u = TangentElement::new(w, v, a, kappa);
        let prod = expm5(&u, dt) * expm5(&u, -dt);
        prop_assert!((prod - Mat5::identity()).amax() < 1e-11);
    }

    #[test]
    fn composition_is_closed(x in nav_state(), y in nav_state()) {
        let product = x.to_matrix() * y.to_matrix();
        let back = NavState::from_matrix(&product).unwrap();
        prop_assert_eq!(back.to_matrix(), product);
        prop_assert!((x.compose(&y).to_matrix() - product).amax() < 1e-12);
    }

    #[test]
    fn trace_identity(r in rotation(), w in vec3(5.0)) {
        let direct = (r.matrix() * skew(&w)).trace();
        let via_axis = -2.0 * upsilon(r.matrix()).dot(&w);
        prop_assert!((direct - via_axis).abs() < 1e-12);
        prop_assert!((trace_r_skew(r.matrix(), &w) - direct).abs() < 1e-12);
    }

    #[test]
    fn quaternion_round_trip_up_to_sign(q in unit_quat()) {
        let back = rot_to_quat(&quat_to_rot(&q).unwrap());
        let sign = (back.q0 * q.q0 + back.q.dot(&q.q)).signum();
        prop_assert!((back.q0 * sign - q.q0).abs() < 1e-10);
        prop_assert!((back.q * sign - q.q).amax() < 1e-10);
    }

    #[test]
    fn quaternion_product_is_unit_and_homomorphic(a in unit_quat(), b in unit_quat()) {
        let ab = quat_product(&a, &b);
        prop_assert!((ab.norm() - 1.0).abs() < 1e-12);
        let lhs = quat_to_rot(&ab).unwrap();
        let rhs = quat_to_rot(&a).unwrap().matrix() * quat_to_rot(&b).unwrap().matrix();
        prop_assert!((lhs.matrix() - rhs).amax() < 1e-12);
    }

    #[test]
    fn noise_free_aggregate_sees_the_attitude_error(
        map in landmark_map(), x in nav_state(), xhat in nav_state(),
    ) {
        let s = aggregate(&map, &observe(&x, &map), &xhat.r, &xhat.p).unwrap();
        let r_tilde = x.r.matrix() * xhat.r.matrix().transpose();
        let m = landmark_scatter(&map);
        let scale = m.amax().max(1.0);
        prop_assert!((s.m - s.m.transpose()).amax() < 1e-12 * scale);
        prop_assert!((s.m_rtilde - m * r_tilde).amax() < 1e-12 * scale);
        prop_assert!(s.dist_m >= 0.0);
        let expected = 0.25 * (m * (Mat3::identity() - r_tilde)).trace();
        prop_assert!((s.dist_m - expected.max(0.0)).abs() < 1e-12 * scale);
    }

    #[test]
    fn exact_attitude_leaves_position_residual(map in landmark_map(), x in nav_state(), phat in vec3(20.0)) {
        let s = aggregate(&map, &observe(&x, &map), &x.r, &phat).unwrap();
        prop_assert!((s.rtp_eps - (x.p - phat)).amax() < 1e-10);
    }

    #[test]
    fn confidence_scaling(map in landmark_map(), x in nav_state(), xhat in nav_state(), c in 0.01..100.0f64) {
        let scaled = LandmarkMap::new(
            map.landmarks().iter().map(|l| Landmark::new(l.id, l.position, l.confidence * c)).collect(),
        ).unwrap();
        let obs = observe(&x, &map);
        let a = aggregate(&map, &obs, &xhat.r, &xhat.p).unwrap();
        let b = aggregate(&scaled, &obs, &xhat.r, &xhat.p).unwrap();
        let tol = 1e-10 * (1.0 + a.m.amax() * c);
        prop_assert!((a.p_c - b.p_c).amax() < 1e-10);
        prop_assert!((a.rtp_eps - b.rtp_eps).amax() < 1e-9);
        prop_assert!((a.m * c - b.m).amax() < tol);
        prop_assert!((a.m_rtilde * c - b.m_rtilde).amax() < tol);
        prop_assert!((a.dist_m * c - b.dist_m).abs() < tol);
    }

    #[test]
    fn eigenvalue_bounds_hold(map in landmark_map(), r in rotation()) {
        let report = check_configuration(&map);
        let m = landmark_scatter(&map);
        let dist = 0.25 * (m * (Mat3::identity() - r.matrix())).trace();
        let y2 = upsilon(&(m * r.matrix())).norm_squared();
        let lower = 0.5 * report.lambda_min_mbar * (1.0 + r.trace()) * dist;
        let upper = 2.0 * report.lambda_max_mbar * dist;
        let slack = 1e-12 * upper.max(1.0);
        prop_assert!(lower <= y2 + slack, "{} > {}", lower, y2);
        prop_assert!(y2 <= upper + slack, "{} > {}", y2, upper);
    }

    #[test]
    fn align_is_a_stable_merge(
        imu_dt in prop::collection::vec(1u32..5, 2..30),
        obs_t in prop::collection::vec(0u32..100, 1..20),
    ) {
        let mut t = 0;
        let imu: Vec<ImuSample> = imu_dt.iter().map(|dt| {
            t += dt;
            ImuSample { t: f64::from(t), omega_m: Vec3::zeros(), a_m: Vec3::zeros() }
        }).collect();
        let mut sorted_obs = obs_t.clone();
        sorted_obs.sort_unstable();
        let obs: Vec<LandmarkObservation> = sorted_obs.iter().enumerate().map(|(i, t)| LandmarkObservation {
            t: f64::from(*t),
            readings: vec![Reading { id: i as u64, y: Vec3::zeros() }],
        }).collect();
        let stream = align(imu.clone(), obs.clone(), None).unwrap();
        prop_assert_eq!(stream.len(), imu.len() + obs.len());
        let key = |e: &Event| (e.t(), matches!(e, Event::Landmark(_)));
        prop_assert!(stream.events.windows(2).all(|w| key(&w[0]) <= key(&w[1])));
        // equal-time observations keep their input order
        let ids: Vec<u64> = stream.events.iter().filter_map(|e| match e {
            Event::Landmark(o) => Some(o.readings[0].id),
            _ => None,
        }).collect();
        prop_assert_eq!(ids, (0..obs.len() as u64).collect::<Vec<_>>());
    }
}
