//! Flight traces: one CSV row per control period.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::Vec3;

pub const TRACE_HEADER: &str =
    "t,p_x,p_y,p_z,v_x,v_y,v_z,a_x,a_y,a_z,phi,theta,psi,wx,wy,wz,fT,reward,event";

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    /// Roll, pitch, yaw.
    pub attitude: Vec3,
    pub body_rates: Vec3,
    pub thrust: f64,
    pub reward: f64,
    /// `;`-separated event tags, e.g. `pass:2`, `finish`, `collision`.
    pub event: String,
}

impl TraceRow {
    pub fn events(&self) -> impl Iterator<Item = &str> {
        self.event.split(';').filter(|e| !e.is_empty())
    }

    pub fn has_event(&self, name: &str) -> bool {
        self.events().any(|e| e == name || e.split(':').next() == Some(name))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    /// Serializes with shortest round-trip float formatting, so parsing the
    /// output yields bit-identical values.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.rows.len() * 200 + 100);
        s.push_str(TRACE_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{}", r.t);
            for v in [r.position, r.velocity, r.acceleration, r.attitude, r.body_rates] {
                let _ = write!(s, ",{},{},{}", v.x, v.y, v.z);
            }
            let _ = writeln!(s, ",{},{},{}", r.thrust, r.reward, r.event);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == TRACE_HEADER => {}
            Some((_, h)) => {
                return Err(Error::TraceParse {
                    line: 1,
                    msg: format!("unexpected header {h:?}"),
                })
            }
            None => return Err(Error::TraceParse { line: 1, msg: "empty trace".into() }),
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 19 {
                return Err(Error::TraceParse {
                    line: line_no,
                    msg: format!("expected 19 fields, found {}", fields.len()),
                });
            }
            let mut nums = [0.0; 18];
            for (k, f) in fields[..18].iter().enumerate() {
                nums[k] = f.trim().parse().map_err(|_| Error::TraceParse {
                    line: line_no,
                    msg: format!("field {} ({f:?}) is not a number", k + 1),
                })?;
            }
            let v = |k: usize| Vec3::new(nums[k], nums[k + 1], nums[k + 2]);
            rows.push(TraceRow {
                t: nums[0],
                position: v(1),
                velocity: v(4),
                acceleration: v(7),
                attitude: v(10),
                body_rates: v(13),
                thrust: nums[16],
                reward: nums[17],
                event: fields[18].trim().to_string(),
            });
        }
        Ok(Self { rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}
