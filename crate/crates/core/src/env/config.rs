use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::QuadConfig;
use crate::error::{Error, Result};

/// Which of the two trained policies a situation calls for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyTag {
    Free,
    Obstacle,
}

impl PolicyTag {
    pub const ALL: [PolicyTag; 2] = [PolicyTag::Free, PolicyTag::Obstacle];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyTag::Free => "free",
            PolicyTag::Obstacle => "obstacle",
        }
    }
}

impl fmt::Display for PolicyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "free" => Ok(PolicyTag::Free),
            "obstacle" => Ok(PolicyTag::Obstacle),
            other => Err(Error::InvalidParam(format!(
                "unknown policy tag {other:?} (expected free or obstacle)"
            ))),
        }
    }
}

/// How training scenes are drawn at reset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneRandomization {
    /// Side length of the square training map, m.
    pub map_size: f64,
    pub map_resolution: f64,
    /// Obstacle inflation (vehicle radius), m.
    pub inflation: f64,
    /// Extra clearance kept between inflated obstacles and the straight
    /// control-point chain, m.
    pub channel_margin: f64,
    pub start_z: f64,
    pub cp_count: usize,
    pub cp_distance: [f64; 2],
    /// Largest bearing change between consecutive chain segments, rad.
    pub cp_max_turn: f64,
    pub cp_z: [f64; 2],
    pub obstacle_count: [usize; 2],
    pub obstacle_radius: [f64; 2],
    /// Lateral slack beyond the channel edge when placing an obstacle, m.
    pub obstacle_offset: [f64; 2],
    /// Std-dev of the initial velocity direction around the bearing to the
    /// first control point, rad.
    pub velocity_angle_sigma: f64,
    /// Initial speed is uniform in `[0, speed_fraction·v_max]`.
    pub speed_fraction: f64,
    pub init_tilt: f64,
    pub init_yaw_noise: f64,
    pub init_rate: f64,
    pub max_tries: usize,
}

impl Default for SceneRandomization {
    fn default() -> Self {
        Self {
            map_size: 20.0,
            map_resolution: 0.1,
            inflation: 0.3,
            channel_margin: 0.1,
            start_z: 1.0,
            cp_count: 2,
            cp_distance: [1.5, 4.0],
            cp_max_turn: 60f64.to_radians(),
            cp_z: [0.8, 1.2],
            obstacle_count: [0, 0],
            obstacle_radius: [0.2, 0.6],
            obstacle_offset: [0.0, 1.0],
            velocity_angle_sigma: 0.3,
            speed_fraction: 0.6,
            init_tilt: 0.1,
            init_yaw_noise: 0.3,
            init_rate: 0.2,
            max_tries: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub v_max: f64,
    pub a_max: f64,
    /// Roll/pitch magnitude counted as a dynamic violation, rad.
    pub attitude_soft_limit: f64,
    /// Roll/pitch magnitude that ends the episode as a crash, rad.
    pub attitude_limit: f64,
    pub d_hor: f64,
    pub d_hgt: f64,
    /// Control period, s.
    pub dt: f64,
    pub physics_substeps: usize,
    pub k_p: f64,
    pub k_d: f64,
    pub k_v: f64,
    pub k_s: f64,
    pub r_c: f64,
    pub r_f: f64,
    pub r_t: f64,
    pub fov_half_angle_h: f64,
    pub fov_half_angle_v: f64,
    pub sensing_horizon: f64,
    pub action_delay_steps: usize,
    pub max_episode_steps: usize,
    /// Body-rate command limit per axis, rad/s.
    pub rate_limit: f64,
    /// Half-width of the uniform multiplier on plant m, J and κ.
    pub domain_rand: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub quad: QuadConfig,
    pub scene: SceneRandomization,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            v_max: 3.0,
            a_max: 6.0,
            attitude_soft_limit: 0.8,
            attitude_limit: 1.2,
            d_hor: 0.5,
            d_hgt: 0.2,
            dt: 0.02,
            physics_substeps: 4,
            k_p: 2.0,
            k_d: 5.0,
            k_v: 5.0,
            k_s: 0.01,
            r_c: -600.0,
            r_f: 300.0,
            r_t: -1.5,
            fov_half_angle_h: 43.5f64.to_radians(),
            fov_half_angle_v: 29f64.to_radians(),
            sensing_horizon: 5.0,
            action_delay_steps: 1,
            max_episode_steps: 600,
            rate_limit: 5.0,
            domain_rand: 0.1,
            z_min: 0.0,
            z_max: 2.0,
            quad: QuadConfig::default(),
            scene: SceneRandomization::default(),
        }
    }
}

impl EnvConfig {
    /// Defaults with the scene randomization used to train `tag`.
    pub fn for_tag(tag: PolicyTag) -> Self {
        let mut cfg = Self::default();
        cfg.scene.obstacle_count = match tag {
            PolicyTag::Free => [0, 0],
            PolicyTag::Obstacle => [1, 6],
        };
        cfg
    }

    pub fn max_thrust(&self) -> f64 {
        self.quad.params.max_collective_thrust()
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scene;
        let checks: [(bool, &str); 14] = [
            (self.v_max > 0.0, "v_max must be > 0"),
            (self.a_max > 0.0, "a_max must be > 0"),
            (self.dt > 0.0, "dt must be > 0"),
            (self.d_hor > 0.0, "d_hor must be > 0"),
            (self.d_hgt > 0.0, "d_hgt must be > 0"),
            (self.physics_substeps >= 1, "physics_substeps must be >= 1"),
            (self.sensing_horizon > 0.0, "sensing_horizon must be > 0"),
            (self.rate_limit > 0.0, "rate_limit must be > 0"),
            (
                self.attitude_soft_limit <= self.attitude_limit
                    && self.attitude_limit < std::f64::consts::FRAC_PI_2,
                "attitude limits must satisfy soft <= hard < pi/2",
            ),
            ((0.0..1.0).contains(&self.domain_rand), "domain_rand must be in [0, 1)"),
            (self.z_min < self.z_max, "z_min must be < z_max"),
            (self.max_episode_steps >= 1, "max_episode_steps must be >= 1"),
            (
                s.cp_count >= 1
                    && s.cp_distance[0] > 0.0
                    && s.cp_distance[0] <= s.cp_distance[1]
                    && s.obstacle_count[0] <= s.obstacle_count[1]
                    && s.obstacle_radius[0] > 0.0
                    && s.obstacle_radius[0] <= s.obstacle_radius[1]
                    && s.cp_z[0] <= s.cp_z[1]
                    && s.obstacle_offset[0] <= s.obstacle_offset[1],
                "scene ranges must be ordered and positive",
            ),
            (
                s.map_size > 0.0 && s.map_resolution > 0.0 && s.max_tries >= 1,
                "scene map size, resolution and max_tries must be positive",
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(msg.to_string()));
            }
        }
        self.quad.params.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: EnvConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("env config serializes")
    }
}
