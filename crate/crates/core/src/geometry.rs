//! Bus interior geometry: footprint, access point position and seats.
//!
//! Seat coordinates in the shipped default layout are approximate; the
//! footprint (12.80 m x 2.55 m), the 2 m receiver height, the 1.2 m / 0.7 m
//! transmitter heights and the lower-position exclusions (seats 5-8 and
//! 27-30, above the wheel arches) are the measured facts.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{HeightClass, Region};

const DEFAULT_LAYOUT_JSON: &str = include_str!("../data/default_layout.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// How `upper_height_m` / `lower_height_m` are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeightMode {
    /// Absolute height above the floor.
    #[default]
    Floor,
    /// Offset above the seat surface (`seat_height_m`).
    SeatRelative,
}

fn default_seat_height() -> f64 {
    0.45
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeatSpec {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    #[serde(default = "default_seat_height")]
    pub seat_height_m: f64,
    pub group: Region,
    #[serde(default)]
    pub lower_excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LayoutRecord")]
pub struct BusLayout {
    pub length_m: f64,
    pub width_m: f64,
    pub rx: Point3,
    pub upper_height_m: f64,
    pub lower_height_m: f64,
    pub height_mode: HeightMode,
    pub seats: Vec<SeatSpec>,
}

#[derive(Deserialize)]
struct LayoutRecord {
    length_m: f64,
    width_m: f64,
    rx: Option<Point3>,
    upper_height_m: Option<f64>,
    lower_height_m: Option<f64>,
    #[serde(default)]
    height_mode: HeightMode,
    #[serde(default)]
    seats: Vec<SeatSpec>,
}

impl TryFrom<LayoutRecord> for BusLayout {
    type Error = Error;

    fn try_from(r: LayoutRecord) -> Result<Self> {
        let layout = BusLayout {
            length_m: r.length_m,
            width_m: r.width_m,
            rx: r
                .rx
                .unwrap_or_else(|| Point3::new(0.5, r.width_m / 2.0, 2.0)),
            upper_height_m: r.upper_height_m.unwrap_or(1.2),
            lower_height_m: r.lower_height_m.unwrap_or(0.7),
            height_mode: r.height_mode,
            seats: r.seats,
        };
        layout.validate()?;
        Ok(layout)
    }
}

impl BusLayout {
    /// The bundled 30-seat city bus layout.
    pub fn default_layout() -> Self {
        Self::from_json(DEFAULT_LAYOUT_JSON).expect("bundled layout is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::File {
            path: path.to_owned(),
            msg: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: e.line() as u64,
            msg: e.to_string(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Collects every violation rather than stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.length_m.is_finite() && self.length_m > 0.0) {
            errs.push(format!("length_m must be positive, got {}", self.length_m));
        }
        if !(self.width_m.is_finite() && self.width_m > 0.0) {
            errs.push(format!("width_m must be positive, got {}", self.width_m));
        }
        let inside = |x: f64, y: f64| {
            (0.0..=self.length_m).contains(&x) && (0.0..=self.width_m).contains(&y)
        };
        if !self.rx.is_finite() || !inside(self.rx.x, self.rx.y) {
            errs.push(format!(
                "receiver ({}, {}) lies outside the {} x {} m footprint",
                self.rx.x, self.rx.y, self.length_m, self.width_m
            ));
        }
        for (name, h) in [
            ("upper_height_m", self.upper_height_m),
            ("lower_height_m", self.lower_height_m),
        ] {
            if !(h.is_finite() && h >= 0.0) {
                errs.push(format!("{name} must be non-negative, got {h}"));
            }
        }
        let mut ids = BTreeSet::new();
        for s in &self.seats {
            if !ids.insert(s.id) {
                errs.push(format!("duplicate seat id {}", s.id));
            }
            if !(s.x.is_finite() && s.y.is_finite()) || !inside(s.x, s.y) {
                errs.push(format!(
                    "seat {} at ({}, {}) lies outside the footprint",
                    s.id, s.x, s.y
                ));
            }
            if s.group == Region::All {
                errs.push(format!("seat {} uses group \"All\"; expected A-D", s.id));
            }
            if !(s.seat_height_m.is_finite() && s.seat_height_m >= 0.0) {
                errs.push(format!("seat {} has invalid seat_height_m", s.id));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn seat(&self, id: u32) -> Result<&SeatSpec> {
        self.seats
            .iter()
            .find(|s| s.id == id)
            .ok_or(Error::SeatNotFound(id))
    }

    pub fn is_eligible(&self, id: u32, height: HeightClass) -> Result<bool> {
        let s = self.seat(id)?;
        Ok(!(height == HeightClass::Lower && s.lower_excluded))
    }

    pub fn tx_position(&self, seat_id: u32, height: HeightClass) -> Result<Point3> {
        let s = self.seat(seat_id)?;
        if height == HeightClass::Lower && s.lower_excluded {
            return Err(Error::ExcludedPosition(seat_id));
        }
        let offset = match height {
            HeightClass::Upper => self.upper_height_m,
            HeightClass::Lower => self.lower_height_m,
        };
        let z = match self.height_mode {
            HeightMode::Floor => offset,
            HeightMode::SeatRelative => s.seat_height_m + offset,
        };
        Ok(Point3::new(s.x, s.y, z))
    }

    /// Straight-line transmitter-receiver distance, m.
    pub fn link_distance(&self, seat_id: u32, height: HeightClass) -> Result<f64> {
        Ok(self.rx.distance(&self.tx_position(seat_id, height)?))
    }

    /// Seat ids of `region` eligible at `height`, ascending. `All` selects
    /// every eligible seat.
    pub fn seats_in_group(&self, region: Region, height: HeightClass) -> Vec<u32> {
        let mut ids: Vec<u32> = self
            .seats
            .iter()
            .filter(|s| region == Region::All || s.group == region)
            .filter(|s| !(height == HeightClass::Lower && s.lower_excluded))
            .map(|s| s.id)
            .collect();
        ids.sort_unstable();
        ids
    }
}
