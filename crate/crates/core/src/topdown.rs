//! Top-down biasing ahead of the saliency block: hard gating to a region of
//! interest, or soft modulation of the per-event state increment.

use std::fmt;
use std::str::FromStr;

use crate::events::{Event, Resolution};
use crate::fixedpoint::Fixed;

/// Inclusive rectangle `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RegionOfInterest {
    pub x0: u16,
    pub y0: u16,
    pub x1: u16,
    pub y1: u16,
}

impl RegionOfInterest {
    pub fn full(res: Resolution) -> Self {
        RegionOfInterest { x0: 0, y0: 0, x1: res.width - 1, y1: res.height - 1 }
    }

    pub fn upper_half(res: Resolution) -> Self {
        RegionOfInterest { y1: res.height / 2 - 1, ..Self::full(res) }
    }

    pub fn left_half(res: Resolution) -> Self {
        RegionOfInterest { x1: res.width / 2 - 1, ..Self::full(res) }
    }

    pub fn contains(&self, x: u16, y: u16) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }

    pub fn validate(&self, res: Resolution) -> Result<(), String> {
        if self.x0 > self.x1 || self.y0 > self.y1 {
            return Err(format!("roi {self} is empty"));
        }
        if self.x1 >= res.width || self.y1 >= res.height {
            return Err(format!("roi {self} exceeds {res}"));
        }
        Ok(())
    }
}

impl fmt::Display for RegionOfInterest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{},{},{}]", self.x0, self.y0, self.x1, self.y1)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BiasMode {
    #[default]
    Off,
    Gating,
    Modulation,
}

impl FromStr for BiasMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" => Ok(BiasMode::Off),
            "gating" => Ok(BiasMode::Gating),
            "modulation" => Ok(BiasMode::Modulation),
            other => Err(format!("unknown top-down mode {other:?} (expected off, gating or modulation)")),
        }
    }
}

impl fmt::Display for BiasMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BiasMode::Off => "off",
            BiasMode::Gating => "gating",
            BiasMode::Modulation => "modulation",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TopDownConfig {
    pub mode: BiasMode,
    pub roi: RegionOfInterest,
    pub gain_inside: Fixed,
    pub gain_outside: Fixed,
}

impl TopDownConfig {
    /// Mode off, full-frame region, gains 1.0 inside and 0.25 outside.
    pub fn new(res: Resolution) -> Self {
        TopDownConfig {
            mode: BiasMode::Off,
            roi: RegionOfInterest::full(res),
            gain_inside: Fixed::ONE,
            gain_outside: Fixed::from_raw(Fixed::ONE.raw() / 4),
        }
    }

    pub fn gating(roi: RegionOfInterest, res: Resolution) -> Self {
        TopDownConfig { mode: BiasMode::Gating, roi, ..Self::new(res) }
    }

    pub fn modulation(roi: RegionOfInterest, res: Resolution) -> Self {
        TopDownConfig { mode: BiasMode::Modulation, roi, ..Self::new(res) }
    }

    pub fn validate(&self, res: Resolution) -> Result<(), String> {
        self.roi.validate(res)?;
        if self.gain_outside.is_negative() || self.gain_inside < self.gain_outside {
            return Err(format!(
                "gains must satisfy gain_inside >= gain_outside >= 0, got {} and {}",
                self.gain_inside, self.gain_outside
            ));
        }
        Ok(())
    }

    /// Drops events outside the region when gating; identity otherwise.
    pub fn gate(&self, e: Event) -> Option<Event> {
        match self.mode {
            BiasMode::Gating if !self.roi.contains(e.x, e.y) => None,
            _ => Some(e),
        }
    }

    /// State increment for this event. 1.0 unless modulating.
    pub fn modulation_gain(&self, e: &Event) -> Fixed {
        match self.mode {
            BiasMode::Modulation if self.roi.contains(e.x, e.y) => self.gain_inside,
            BiasMode::Modulation => self.gain_outside,
            _ => Fixed::ONE,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::Polarity;

    const RES: Resolution = Resolution::DAVIS240;

    fn at(x: u16, y: u16) -> Event {
        Event::new(0, x, y, Polarity::On)
    }

    #[test]
    fn upper_half_gating() {
        let roi = RegionOfInterest::upper_half(RES);
        assert_eq!(roi, RegionOfInterest { x0: 0, y0: 0, x1: 239, y1: 89 });
        let td = TopDownConfig::gating(roi, RES);
        assert_eq!(td.gate(at(3, 20)), Some(at(3, 20)));
        assert_eq!(td.gate(at(3, 170)), None);
        assert_eq!(td.gate(at(3, 89)), Some(at(3, 89)));
        assert_eq!(td.gate(at(3, 90)), None);
    }

    #[test]
    fn full_frame_gating_is_identity() {
        let td = TopDownConfig::gating(RegionOfInterest::full(RES), RES);
        for (x, y) in [(0, 0), (239, 179), (120, 90)] {
            assert_eq!(td.gate(at(x, y)), Some(at(x, y)));
        }
    }

    #[test]
    fn non_gating_modes_pass_everything() {
        let roi = RegionOfInterest::left_half(RES);
        for td in [TopDownConfig { roi, ..TopDownConfig::new(RES) }, TopDownConfig::modulation(roi, RES)] {
            assert_eq!(td.gate(at(200, 10)), Some(at(200, 10)));
        }
    }

    #[test]
    fn gains() {
        let off = TopDownConfig::new(RES);
        assert_eq!(off.modulation_gain(&at(200, 170)), Fixed::ONE);
        let td = TopDownConfig::modulation(RegionOfInterest::upper_half(RES), RES);
        assert_eq!(td.modulation_gain(&at(10, 10)), Fixed::ONE);
        assert_eq!(td.modulation_gain(&at(10, 100)).to_real(), 0.25);
        let gating = TopDownConfig::gating(RegionOfInterest::upper_half(RES), RES);
        assert_eq!(gating.modulation_gain(&at(10, 100)), Fixed::ONE);
    }

    #[test]
    fn validation() {
        assert!(TopDownConfig::new(RES).validate(RES).is_ok());
        let mut td = TopDownConfig::new(RES);
        td.gain_outside = Fixed::from_real(2.0);
        assert!(td.validate(RES).is_err());
        td = TopDownConfig::new(RES);
        td.roi = RegionOfInterest { x0: 5, y0: 0, x1: 4, y1: 3 };
        assert!(td.validate(RES).is_err());
        td.roi = RegionOfInterest { x0: 0, y0: 0, x1: 240, y1: 3 };
        assert!(td.validate(RES).is_err());
    }

    #[test]
    fn mode_parsing() {
        for m in [BiasMode::Off, BiasMode::Gating, BiasMode::Modulation] {
            assert_eq!(m.to_string().parse::<BiasMode>().unwrap(), m);
        }
        assert!("both".parse::<BiasMode>().is_err());
    }
}
