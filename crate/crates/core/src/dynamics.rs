//! Rigid-body quadrotor model.
//!
//! Translational and rotational dynamics are decoupled: collective thrust along
//! the body z axis drives the world-frame acceleration, and rotor torques drive
//! the body rates through Euler's equation. Attitude is carried as Z-Y-X Euler
//! angles (roll, pitch, yaw).

use nalgebra::{Matrix3, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec3;

pub const GRAVITY: f64 = 9.81;

/// Pitch magnitude beyond which the Euler-rate mapping is rejected.
pub const PITCH_SINGULARITY_MARGIN: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inertia {
    pub xx: f64,
    pub yy: f64,
    pub zz: f64,
}

impl Inertia {
    pub fn as_vec(&self) -> Vec3 {
        Vec3::new(self.xx, self.yy, self.zz)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axes {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Axes {
    pub fn as_vec(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }
}

/// Physical parameters. Units: kg, kg·m², m, N.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadParams {
    /// Mass, kg.
    pub m: f64,
    /// Diagonal inertia, kg·m².
    pub inertia: Inertia,
    /// Arm length from center of mass to rotor center, m.
    pub l: f64,
    /// Rotor torque coefficient (yaw torque per newton of thrust).
    pub kappa: f64,
    /// Per-rotor thrust limit, N.
    pub f_rotor_max: f64,
    #[serde(default = "default_gravity")]
    pub g: f64,
    /// Constant body torque standing in for the rotor gyroscopic term; zero by
    /// default since no rotor speed model is simulated.
    #[serde(default)]
    pub gyroscopic_torque: [f64; 3],
}

fn default_gravity() -> f64 {
    GRAVITY
}

impl Default for QuadParams {
    fn default() -> Self {
        Self {
            m: 1.64,
            inertia: Inertia {
                xx: 0.011,
                yy: 0.010,
                zz: 0.007,
            },
            l: 0.125,
            kappa: 0.012,
            f_rotor_max: 8.0,
            g: GRAVITY,
            gyroscopic_torque: [0.0; 3],
        }
    }
}

impl QuadParams {
    pub fn validate(&self) -> Result<()> {
        let j = self.inertia;
        let ok = self.m > 0.0
            && j.xx > 0.0
            && j.yy > 0.0
            && j.zz > 0.0
            && self.l > 0.0
            && self.kappa > 0.0
            && self.g > 0.0
            && self.f_rotor_max > self.m * self.g / 4.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!(
                "quadrotor parameters out of range (hover must be feasible): {self:?}"
            )))
        }
    }

    pub fn hover_thrust(&self) -> f64 {
        self.m * self.g
    }

    pub fn max_collective_thrust(&self) -> f64 {
        4.0 * self.f_rotor_max
    }
}

/// Proportional body-rate gains, N·m per rad/s.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateGains(pub Vec3);

impl Default for RateGains {
    fn default() -> Self {
        Self(Vec3::new(0.25, 0.25, 0.10))
    }
}

/// Quadrotor parameter file: physical parameters plus rate-loop gains.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    #[serde(flatten)]
    pub params: QuadParams,
    pub rate_gains: Axes,
}

impl Default for QuadConfig {
    fn default() -> Self {
        let k = RateGains::default().0;
        Self {
            params: QuadParams::default(),
            rate_gains: Axes {
                x: k.x,
                y: k.y,
                z: k.z,
            },
        }
    }
}

impl QuadConfig {
    pub fn gains(&self) -> RateGains {
        RateGains(self.rate_gains.as_vec())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: QuadConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.params.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("quad config serializes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadState {
    /// World position, m.
    pub position: Vec3,
    /// World velocity, m/s.
    pub velocity: Vec3,
    /// World acceleration implied by the last applied thrusts, m/s².
    pub acceleration: Vec3,
    /// Roll, pitch, yaw, rad.
    pub attitude: Vec3,
    /// Body angular velocity, rad/s.
    pub body_rates: Vec3,
}

impl QuadState {
    pub fn at_rest(position: Vec3, yaw: f64) -> Self {
        Self {
            position,
            velocity: Vec3::zeros(),
            acceleration: Vec3::zeros(),
            attitude: Vec3::new(0.0, 0.0, yaw),
            body_rates: Vec3::zeros(),
        }
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_zyx(self.attitude)
    }

    /// Body x axis expressed in the world frame (unit length).
    pub fn heading(&self) -> Vec3 {
        self.rotation().column(0).into_owned()
    }

    pub fn is_finite(&self) -> bool {
        [
            self.position,
            self.velocity,
            self.acceleration,
            self.attitude,
            self.body_rates,
        ]
        .iter()
        .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Per-rotor thrusts, N.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotorThrusts(pub [f64; 4]);

impl RotorThrusts {
    pub fn uniform(f: f64) -> Self {
        Self([f; 4])
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Policy action in physical units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BodyCommand {
    /// Collective thrust, N.
    pub thrust: f64,
    /// Requested body rate, rad/s.
    pub rates: Vec3,
}

impl BodyCommand {
    pub fn hover(params: &QuadParams) -> Self {
        Self {
            thrust: params.hover_thrust(),
            rates: Vec3::zeros(),
        }
    }
}

/// Collective thrust and body torque.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Wrench {
    pub thrust: f64,
    pub torque: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Allocation {
    pub thrusts: RotorThrusts,
    /// True when rotor limits forced the requested wrench to be altered.
    pub saturated: bool,
}

/// Body-to-world rotation for Z-Y-X Euler angles `(roll, pitch, yaw)`.
pub fn rotation_zyx(attitude: Vec3) -> Matrix3<f64> {
    let (sr, cr) = attitude.x.sin_cos();
    let (sp, cp) = attitude.y.sin_cos();
    let (sy, cy) = attitude.z.sin_cos();
    Matrix3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    )
}

/// Maps rotor thrusts to `(f_T, τx, τy, τz)`.
pub fn allocation_matrix(params: &QuadParams) -> Matrix4<f64> {
    let s = params.l / std::f64::consts::SQRT_2;
    let k = params.kappa;
    Matrix4::new(
        1.0, 1.0, 1.0, 1.0, //
        -s, -s, s, s, //
        -s, s, s, -s, //
        -k, k, -k, k,
    )
}

pub fn thrusts_to_wrench(params: &QuadParams, u: &RotorThrusts) -> Wrench {
    let w = allocation_matrix(params) * Vector4::from(u.0);
    Wrench {
        thrust: w[0],
        torque: Vec3::new(w[1], w[2], w[3]),
    }
}

/// Exact inverse of the allocation matrix, without limits.
pub fn invert_allocation(params: &QuadParams, thrust: f64, torque: Vec3) -> [f64; 4] {
    let s = params.l / std::f64::consts::SQRT_2;
    let (x, y, z) = (torque.x / s, torque.y / s, torque.z / params.kappa);
    [
        (thrust - x - y - z) / 4.0,
        (thrust - x + y + z) / 4.0,
        (thrust + x + y - z) / 4.0,
        (thrust + x - y + z) / 4.0,
    ]
}

/// Largest `alpha ∈ [0, 1]` with `base + alpha·delta` inside `[0, max]` per rotor.
fn feasible_scale(base: &[f64; 4], delta: &[f64; 4], max: f64) -> f64 {
    let mut alpha = 1.0f64;
    for (b, d) in base.iter().zip(delta) {
        if *d > 0.0 {
            alpha = alpha.min((max - b) / d);
        } else if *d < 0.0 {
            alpha = alpha.min(-b / d);
        }
    }
    alpha.clamp(0.0, 1.0)
}

/// Solves the allocation for rotor thrusts within `[0, f_rotor_max]`.
///
/// When limits bind, collective thrust is kept (clamped to its feasible range)
/// and torque is scaled back: roll/pitch first keep as much as fits, then yaw
/// takes whatever margin is left.
pub fn wrench_to_thrusts(params: &QuadParams, thrust: f64, torque: Vec3) -> Allocation {
    let max = params.f_rotor_max;
    let exact = invert_allocation(params, thrust, torque);
    if exact.iter().all(|f| (0.0..=max).contains(f)) {
        return Allocation {
            thrusts: RotorThrusts(exact),
            saturated: false,
        };
    }
    let collective = thrust.clamp(0.0, 4.0 * max);
    let mut u = [collective / 4.0; 4];
    let roll_pitch = invert_allocation(params, 0.0, Vec3::new(torque.x, torque.y, 0.0));
    let a = feasible_scale(&u, &roll_pitch, max);
    for (ui, d) in u.iter_mut().zip(&roll_pitch) {
        *ui += a * d;
    }
    let yaw = invert_allocation(params, 0.0, Vec3::new(0.0, 0.0, torque.z));
    let b = feasible_scale(&u, &yaw, max);
    for (ui, d) in u.iter_mut().zip(&yaw) {
        *ui = (*ui + b * d).clamp(0.0, max);
    }
    Allocation {
        thrusts: RotorThrusts(u),
        saturated: true,
    }
}

/// Time derivative of the state, in the same layout as [`QuadState`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateDerivative {
    pub position: Vec3,
    pub velocity: Vec3,
    pub attitude: Vec3,
    pub body_rates: Vec3,
}

/// World acceleration from collective thrust along the body z axis.
pub fn translational_acceleration(params: &QuadParams, attitude: Vec3, thrust: f64) -> Vec3 {
    let body_z = rotation_zyx(attitude).column(2).into_owned();
    Vec3::new(0.0, 0.0, -params.g) + body_z * (thrust / params.m)
}

/// Euler-angle rates from body rates (Z-Y-X convention).
pub fn euler_rates(attitude: Vec3, body_rates: Vec3) -> Result<Vec3> {
    let (sr, cr) = attitude.x.sin_cos();
    let cp = attitude.y.cos();
    if attitude.y.abs() >= std::f64::consts::FRAC_PI_2 - PITCH_SINGULARITY_MARGIN {
        return Err(Error::Singular(attitude.y));
    }
    let tp = attitude.y.tan();
    let (p, q, r) = (body_rates.x, body_rates.y, body_rates.z);
    Ok(Vec3::new(
        p + sr * tp * q + cr * tp * r,
        cr * q - sr * r,
        (sr * q + cr * r) / cp,
    ))
}

pub fn state_derivative(
    state: &QuadState,
    u: &RotorThrusts,
    params: &QuadParams,
) -> Result<StateDerivative> {
    let wrench = thrusts_to_wrench(params, u);
    let j = params.inertia.as_vec();
    let w = state.body_rates;
    let jw = j.component_mul(&w);
    let ga = Vec3::from(params.gyroscopic_torque);
    let domega = (-w.cross(&jw) + ga + wrench.torque).component_div(&j);
    Ok(StateDerivative {
        position: state.velocity,
        velocity: translational_acceleration(params, state.attitude, wrench.thrust),
        attitude: euler_rates(state.attitude, w)?,
        body_rates: domega,
    })
}

fn advance(state: &QuadState, d: &StateDerivative, h: f64) -> QuadState {
    QuadState {
        position: state.position + d.position * h,
        velocity: state.velocity + d.velocity * h,
        acceleration: state.acceleration,
        attitude: state.attitude + d.attitude * h,
        body_rates: state.body_rates + d.body_rates * h,
    }
}

/// Classical fourth-order Runge-Kutta step with thrusts held constant.
pub fn rk4_step(state: &QuadState, u: &RotorThrusts, dt: f64, params: &QuadParams) -> Result<QuadState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParam(format!("dt {dt} must be > 0")));
    }
    let k1 = state_derivative(state, u, params)?;
    let k2 = state_derivative(&advance(state, &k1, dt / 2.0), u, params)?;
    let k3 = state_derivative(&advance(state, &k2, dt / 2.0), u, params)?;
    let k4 = state_derivative(&advance(state, &k3, dt), u, params)?;
    let combine = |a: Vec3, b: Vec3, c: Vec3, d: Vec3| (a + (b + c) * 2.0 + d) * (dt / 6.0);
    let mut next = QuadState {
        position: state.position
            + combine(k1.position, k2.position, k3.position, k4.position),
        velocity: state.velocity
            + combine(k1.velocity, k2.velocity, k3.velocity, k4.velocity),
        acceleration: state.acceleration,
        attitude: state.attitude
            + combine(k1.attitude, k2.attitude, k3.attitude, k4.attitude),
        body_rates: state.body_rates
            + combine(k1.body_rates, k2.body_rates, k3.body_rates, k4.body_rates),
    };
    next.attitude.z = wrap_angle(next.attitude.z);
    next.acceleration = translational_acceleration(params, next.attitude, u.total());
    Ok(next)
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut x = (a + PI).rem_euclid(2.0 * PI) - PI;
    if x <= -PI {
        x += 2.0 * PI;
    }
    x
}

/// Proportional body-rate loop followed by allocation.
pub fn rate_controller(
    state: &QuadState,
    cmd: &BodyCommand,
    params: &QuadParams,
    gains: &RateGains,
) -> Allocation {
    let torque = gains.0.component_mul(&(cmd.rates - state.body_rates));
    wrench_to_thrusts(params, cmd.thrust, torque)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> QuadParams {
        QuadParams::default()
    }

    #[test]
    fn allocation_examples() {
        let p = QuadParams {
            l: 0.1,
            ..params()
        };
        let w = thrusts_to_wrench(&p, &RotorThrusts::uniform(2.0));
        assert_eq!(w.thrust, 8.0);
        assert!(w.torque.norm() < 1e-15);

        let c = 3.0;
        let w = thrusts_to_wrench(&p, &RotorThrusts([0.0, 0.0, c, c]));
        assert!((w.thrust - 2.0 * c).abs() < 1e-15);
        assert!((w.torque.x - 2.0 * c * 0.1 / 2f64.sqrt()).abs() < 1e-12);
        assert!((w.torque.x / c - 0.141421356).abs() < 1e-8);
        assert!(w.torque.y.abs() < 1e-15);

        // |det| = 16·(l/√2)²·κ
        let det = allocation_matrix(&p).determinant();
        let s = 0.1 / 2f64.sqrt();
        assert!((det.abs() - 16.0 * s * s * p.kappa).abs() < 1e-12, "{det}");
    }

    #[test]
    fn hover_allocation() {
        let p = params();
        let a = wrench_to_thrusts(&p, 1.64 * 9.81, Vec3::zeros());
        for f in a.thrusts.0 {
            assert!((f - 4.0221).abs() < 1e-12, "{f}");
        }
        assert!(!a.saturated);
        let a = wrench_to_thrusts(&p, 0.0, Vec3::zeros());
        assert_eq!(a.thrusts.0, [0.0; 4]);
    }

    #[test]
    fn saturation_keeps_collective_thrust() {
        let p = params();
        let a = wrench_to_thrusts(&p, 20.0, Vec3::new(5.0, -3.0, 1.0));
        assert!(a.saturated);
        assert!((a.thrusts.total() - 20.0).abs() < 1e-9);
        assert!(a.thrusts.0.iter().all(|f| (0.0..=p.f_rotor_max).contains(f)));
        let w = thrusts_to_wrench(&p, &a.thrusts);
        // torque keeps the requested roll/pitch direction
        assert!(w.torque.x > 0.0 && w.torque.y < 0.0);
        assert!((w.torque.x / w.torque.y - 5.0 / -3.0).abs() < 1e-9);

        let a = wrench_to_thrusts(&p, 100.0, Vec3::zeros());
        assert_eq!(a.thrusts.0, [p.f_rotor_max; 4]);
    }

    #[test]
    fn equilibrium_and_free_fall() {
        let p = params();
        let s = QuadState::at_rest(Vec3::new(0.0, 0.0, 1.0), 0.3);
        let hover = RotorThrusts::uniform(p.hover_thrust() / 4.0);
        let d = state_derivative(&s, &hover, &p).unwrap();
        assert!(d.velocity.norm() < 1e-12);
        assert!(d.body_rates.norm() < 1e-12);
        let d = state_derivative(&s, &RotorThrusts::uniform(0.0), &p).unwrap();
        assert_eq!(d.velocity, Vec3::new(0.0, 0.0, -9.81));
    }

    #[test]
    fn single_axis_spin_has_no_gyroscopic_term() {
        let p = params();
        let mut s = QuadState::at_rest(Vec3::zeros(), 0.0);
        s.body_rates = Vec3::new(1.0, 0.0, 0.0);
        let d = state_derivative(&s, &RotorThrusts::uniform(0.0), &p).unwrap();
        assert_eq!(d.body_rates, Vec3::zeros());
    }

    #[test]
    fn singular_pitch_is_rejected() {
        let p = params();
        let mut s = QuadState::at_rest(Vec3::zeros(), 0.0);
        s.attitude.y = std::f64::consts::FRAC_PI_2;
        assert!(matches!(
            state_derivative(&s, &RotorThrusts::uniform(1.0), &p),
            Err(Error::Singular(_))
        ));
        assert!(rk4_step(&s, &RotorThrusts::uniform(1.0), 0.0, &p).is_err());
    }

    #[test]
    fn rate_controller_signs() {
        let p = params();
        let k = RateGains::default();
        let s = QuadState::at_rest(Vec3::zeros(), 0.0);
        let cmd = BodyCommand {
            thrust: 16.0,
            rates: Vec3::zeros(),
        };
        let a = rate_controller(&s, &cmd, &p, &k);
        assert_eq!(a.thrusts.0, [4.0; 4]);

        let eps = 0.4;
        let cmd = BodyCommand {
            thrust: 16.0,
            rates: Vec3::new(eps, 0.0, 0.0),
        };
        let a = rate_controller(&s, &cmd, &p, &k);
        let w = thrusts_to_wrench(&p, &a.thrusts);
        assert!((w.torque.x - k.0.x * eps).abs() < 1e-12);
        let u = a.thrusts.0;
        assert!(u[2] + u[3] > u[0] + u[1]);
    }

    #[test]
    fn rotation_is_orthonormal_and_heading_matches_yaw() {
        let att = Vec3::new(0.2, -0.4, 2.5);
        let r = rotation_zyx(att);
        assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
        let level = QuadState::at_rest(Vec3::zeros(), 0.7);
        let h = level.heading();
        assert!((h - Vec3::new(0.7f64.cos(), 0.7f64.sin(), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn config_round_trip() {
        let cfg = QuadConfig::default();
        let text = cfg.to_toml();
        assert!(text.contains("kappa"));
        assert_eq!(QuadConfig::from_toml(&text).unwrap(), cfg);
        let bad = text.replace("f_rotor_max = 8.0", "f_rotor_max = 1.0");
        assert!(QuadConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        use std::f64::consts::PI;
        for a in [-7.0, -PI, -0.1, 0.0, PI, 3.5, 12.0] {
            let w = wrap_angle(a);
            assert!(w > -PI && w <= PI);
            assert!(((a - w) / (2.0 * PI)).fract().abs() < 1e-9 || ((a - w) / (2.0 * PI)).fract().abs() > 1.0 - 1e-9);
        }
    }
}
