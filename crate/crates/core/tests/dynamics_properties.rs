use proptest::prelude::*;
use resc::dynamics::*;
use resc::Vec3;

fn tumbling_state() -> QuadState {
    QuadState {
        position: Vec3::new(0.1, -0.2, 1.0),
        velocity: Vec3::new(0.5, 0.2, -0.1),
        acceleration: Vec3::zeros(),
        attitude: Vec3::new(0.3, -0.2, 0.5),
        body_rates: Vec3::new(2.0, -1.5, 3.0),
    }
}

fn integrate(s0: QuadState, u: RotorThrusts, p: &QuadParams, t: f64, n: usize) -> QuadState {
    let dt = t / n as f64;
    let mut s = s0;
    for _ in 0..n {
        s = rk4_step(&s, &u, dt, p).unwrap();
    }
    s
}

fn distance(a: &QuadState, b: &QuadState) -> f64 {
    ((a.position - b.position).norm_squared()
        + (a.velocity - b.velocity).norm_squared()
        + (a.attitude - b.attitude).norm_squared()
        + (a.body_rates - b.body_rates).norm_squared())
    .sqrt()
}

#[test]
fn hover_holds_position() {
    let p = QuadParams::default();
    let s0 = QuadState::at_rest(Vec3::new(1.0, 2.0, 1.0), 0.4);
    let u = RotorThrusts::uniform(p.hover_thrust() / 4.0);
    let s = integrate(s0, u, &p, 1.0, 400);
    assert!((s.position - s0.position).norm() < 1e-6);
    assert!(s.velocity.norm() < 1e-6);
}

#[test]
fn positive_roll_error_loads_rotors_three_and_four() {
    let p = QuadParams::default();
    let s = QuadState::at_rest(Vec3::zeros(), 0.0);
    let cmd = BodyCommand {
        thrust: p.hover_thrust(),
        rates: Vec3::new(0.5, 0.0, 0.0),
    };
    let f = rate_controller(&s, &cmd, &p, &RateGains::default()).thrusts.0;
    assert!(f[2] + f[3] > f[0] + f[1]);
}

#[test]
fn free_fall_matches_closed_form() {
    let p = QuadParams::default();
    let s0 = QuadState::at_rest(Vec3::new(0.0, 0.0, 10.0), 0.0);
    let s = integrate(s0, RotorThrusts::uniform(0.0), &p, 1.0, 200);
    assert!((s.position.z - (10.0 - 0.5 * 9.81)).abs() < 1e-9);
    assert!((s.velocity.z + 9.81).abs() < 1e-9);
}

#[test]
fn rk4_converges_at_fourth_order() {
    let p = QuadParams::default();
    let s0 = tumbling_state();
    let u = RotorThrusts([3.0, 4.5, 5.0, 3.5]);
    let t = 0.5;
    let reference = integrate(s0, u, &p, t, 64 * 64);
    let coarse = integrate(s0, u, &p, t, 32);
    let fine = integrate(s0, u, &p, t, 64);
    let ratio = distance(&coarse, &reference) / distance(&fine, &reference);
    assert!((12.0..=20.0).contains(&ratio), "error ratio {ratio}");
    assert!(ratio.log2() >= 3.5);
}

#[test]
fn single_axis_spin_conserves_rate() {
    let p = QuadParams::default();
    let mut s0 = QuadState::at_rest(Vec3::zeros(), 0.0);
    s0.body_rates = Vec3::new(0.0, 0.0, 4.0);
    let s = integrate(s0, RotorThrusts::uniform(0.0), &p, 1.0, 200);
    assert!((s.body_rates.norm() - 4.0).abs() < 1e-6);
}

#[test]
fn roll_rate_step_settles_quickly() {
    let p = QuadParams::default();
    let gains = RateGains::default();
    let cmd = BodyCommand {
        thrust: p.hover_thrust(),
        rates: Vec3::new(1.0, 0.0, 0.0),
    };
    let mut s = QuadState::at_rest(Vec3::new(0.0, 0.0, 5.0), 0.0);
    let dt = 0.005;
    let mut settled_at = None;
    for i in 1..=40 {
        let a = rate_controller(&s, &cmd, &p, &gains);
        s = rk4_step(&s, &a.thrusts, dt, &p).unwrap();
        if settled_at.is_none() && (s.body_rates.x - 1.0).abs() <= 0.1 {
            settled_at = Some(i as f64 * dt);
        }
    }
    let t = settled_at.expect("roll rate never reached 90% of the step");
    assert!(t <= 0.2, "{t}");
    assert!((s.body_rates.x - 1.0).abs() <= 0.1);
}

proptest! {
    #[test]
    fn allocation_round_trip(u in prop::array::uniform4(0.0f64..8.0)) {
        let p = QuadParams::default();
        let w = thrusts_to_wrench(&p, &RotorThrusts(u));
        let back = wrench_to_thrusts(&p, w.thrust, w.torque);
        prop_assert!(!back.saturated);
        for (a, b) in back.thrusts.0.iter().zip(&u) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn allocation_respects_limits(
        thrust in -5.0f64..40.0,
        tx in -3.0f64..3.0, ty in -3.0f64..3.0, tz in -1.0f64..1.0,
    ) {
        let p = QuadParams::default();
        let a = wrench_to_thrusts(&p, thrust, Vec3::new(tx, ty, tz));
        for f in a.thrusts.0 {
            prop_assert!((0.0..=p.f_rotor_max).contains(&f));
        }
        let expected = thrust.clamp(0.0, p.max_collective_thrust());
        prop_assert!((a.thrusts.total() - expected).abs() < 1e-9);
    }

    #[test]
    fn yaw_does_not_move_level_thrust(yaw in -10.0f64..10.0, thrust in 0.0f64..32.0) {
        let p = QuadParams::default();
        let level = translational_acceleration(&p, Vec3::zeros(), thrust);
        let yawed = translational_acceleration(&p, Vec3::new(0.0, 0.0, yaw), thrust);
        prop_assert!((level - yawed).norm() <= 1e-12);
        prop_assert!(level.x == 0.0 && level.y == 0.0);
    }

    #[test]
    fn rk4_keeps_finite_state(
        roll in -0.8f64..0.8, pitch in -0.8f64..0.8,
        rates in prop::array::uniform3(-5.0f64..5.0),
        u in prop::array::uniform4(0.0f64..8.0),
    ) {
        let p = QuadParams::default();
        let mut s = QuadState::at_rest(Vec3::zeros(), 0.0);
        s.attitude = Vec3::new(roll, pitch, 0.0);
        s.body_rates = Vec3::from(rates);
        let n = rk4_step(&s, &RotorThrusts(u), 0.005, &p).unwrap();
        prop_assert!(n.is_finite());
    }
}
