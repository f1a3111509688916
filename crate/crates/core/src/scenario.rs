//! Flight scenarios: a map, start and goal, and the allowed altitude band.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridmap::{build_esdf, EsdfMap, OccupancyGrid};
use crate::Vec2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Shape {
    Disc { center: [f64; 2], radius: f64 },
    Box { min: [f64; 2], max: [f64; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Occupancy map file; when absent the map is built from `size`,
    /// `origin`, `resolution` and `obstacles`.
    pub map_file: Option<PathBuf>,
    pub size: [f64; 2],
    pub origin: [f64; 2],
    pub resolution: f64,
    pub obstacles: Vec<Shape>,
    pub start: [f64; 2],
    pub goal: [f64; 2],
    pub z_center: f64,
    pub z_half_width: f64,
    /// Safety radius the vehicle is modeled with, m.
    pub inflation: f64,
    /// Extra inflation applied only when searching, m.
    pub search_margin: f64,
    /// Flight time limit, s.
    pub max_time: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            map_file: None,
            size: [10.0, 10.0],
            origin: [0.0, 0.0],
            resolution: 0.1,
            obstacles: Vec::new(),
            start: [1.0, 1.0],
            goal: [9.0, 9.0],
            z_center: 1.0,
            z_half_width: 1.0,
            inflation: 0.3,
            search_margin: 0.2,
            max_time: 30.0,
        }
    }
}

pub const BUILTIN_SCENARIOS: [&str; 4] = ["corridor", "slalom", "dense-block", "gap"];

impl Scenario {
    /// Straight 10 m run without obstacles. Observations see the map edge
    /// as a wall, so the map extends past the sensing horizon on every side.
    pub fn corridor() -> Self {
        Self {
            name: "corridor".into(),
            size: [24.0, 12.0],
            origin: [-7.0, -6.0],
            start: [0.0, 0.0],
            goal: [10.0, 0.0],
            ..Self::default()
        }
    }

    /// Discs alternating on both sides of the straight line to the goal.
    pub fn slalom() -> Self {
        let obstacles = [(3.0, 0.35), (5.5, -0.35), (8.0, 0.35)]
            .iter()
            .map(|&(x, y)| Shape::Disc {
                center: [x, y],
                radius: 0.4,
            })
            .collect();
        Self {
            name: "slalom".into(),
            size: [15.0, 8.0],
            origin: [-2.0, -4.0],
            obstacles,
            start: [0.0, 0.0],
            goal: [11.0, 0.0],
            ..Self::default()
        }
    }

    /// Staggered square pillars.
    pub fn dense_block() -> Self {
        let mut obstacles = Vec::new();
        for i in 0..4 {
            for j in 0..3 {
                let x = 2.5 + 2.0 * i as f64;
                let y = -2.0 + 2.0 * j as f64 + if i % 2 == 0 { 0.0 } else { 1.0 };
                obstacles.push(Shape::Box {
                    min: [x - 0.3, y - 0.3],
                    max: [x + 0.3, y + 0.3],
                });
            }
        }
        Self {
            name: "dense-block".into(),
            size: [14.0, 8.0],
            origin: [-1.0, -4.0],
            obstacles,
            start: [0.0, 0.0],
            goal: [11.0, 0.0],
            ..Self::default()
        }
    }

    /// A wall with a 2 m opening off the direct line.
    pub fn gap() -> Self {
        Self {
            name: "gap".into(),
            size: [12.0, 10.0],
            origin: [-1.0, -5.0],
            obstacles: vec![
                Shape::Box {
                    min: [4.8, -5.0],
                    max: [5.2, 0.5],
                },
                Shape::Box {
                    min: [4.8, 2.5],
                    max: [5.2, 5.0],
                },
            ],
            start: [0.0, 0.0],
            goal: [10.0, 0.0],
            ..Self::default()
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "corridor" => Some(Self::corridor()),
            "slalom" => Some(Self::slalom()),
            "dense-block" => Some(Self::dense_block()),
            "gap" => Some(Self::gap()),
            _ => None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// A built-in name or a TOML file. Relative `map_file` paths resolve
    /// against the scenario file's directory.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if let Some(s) = Self::builtin(name_or_path) {
            return Ok(s);
        }
        let path = Path::new(name_or_path);
        if !path.exists() {
            return Err(Error::Config(format!(
                "unknown scenario {name_or_path:?}; built-ins are {}",
                BUILTIN_SCENARIOS.join(", ")
            )));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut s = Self::from_toml(&text)?;
        if let (Some(m), Some(dir)) = (&s.map_file, path.parent()) {
            if m.is_relative() {
                s.map_file = Some(dir.join(m));
            }
        }
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn start(&self) -> Vec2 {
        Vec2::new(self.start[0], self.start[1])
    }

    pub fn goal(&self) -> Vec2 {
        Vec2::new(self.goal[0], self.goal[1])
    }

    /// Occupancy before inflation.
    pub fn raw_grid(&self) -> Result<OccupancyGrid> {
        if let Some(p) = &self.map_file {
            return OccupancyGrid::load(p);
        }
        if !(self.resolution > 0.0) || !(self.size[0] > 0.0 && self.size[1] > 0.0) {
            return Err(Error::InvalidMap("scenario map needs positive size and resolution".into()));
        }
        let w = (self.size[0] / self.resolution).round() as usize;
        let h = (self.size[1] / self.resolution).round() as usize;
        let mut g = OccupancyGrid::new(w, h, self.resolution, Vec2::new(self.origin[0], self.origin[1]))?;
        for s in &self.obstacles {
            match *s {
                Shape::Disc { center, radius } => g.fill_disc(Vec2::new(center[0], center[1]), radius),
                Shape::Box { min, max } => g.fill_box(Vec2::new(min[0], min[1]), Vec2::new(max[0], max[1])),
            }
        }
        Ok(g)
    }

    /// Checks parameters and that start and goal are free in the inflated map.
    pub fn validate(&self, map: &EsdfMap) -> Result<()> {
        if !(self.z_half_width > 0.0) || !self.z_center.is_finite() {
            return Err(Error::InvalidParam("altitude band must have positive half-width".into()));
        }
        if !(self.inflation >= 0.0 && self.search_margin >= 0.0 && self.max_time > 0.0) {
            return Err(Error::InvalidParam("inflation, search_margin and max_time must be non-negative".into()));
        }
        let g = map.grid();
        for (what, p) in [("start", self.start()), ("goal", self.goal())] {
            if !g.contains(p) {
                return Err(Error::OutOfBounds(g.world_to_cell(p)));
            }
            if map.is_occupied(g.world_to_cell(p)) {
                return Err(Error::Occupied { what });
            }
        }
        Ok(())
    }

    /// Collision map (inflated by `inflation`) after validation.
    pub fn build_map(&self) -> Result<EsdfMap> {
        let map = build_esdf(&self.raw_grid()?, self.inflation);
        self.validate(&map)?;
        Ok(map)
    }
}
