//! Time-surface images of event streams and attention-trajectory overlays,
//! written as binary PGM/PPM.

use std::io::{self, Write};

use thiserror::Error;

use crate::events::{Event, Resolution};
use crate::saliency::FocusSample;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("event ({x}, {y}) outside {resolution}")]
    EventOutOfRange { x: u16, y: u16, resolution: Resolution },
    #[error("trajectory sample at t={t} ({cx}, {cy}) outside {resolution}")]
    SampleOutOfRange { t: u64, cx: u16, cy: u16, resolution: Resolution },
    #[error("tau_vis must be positive")]
    ZeroTau,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Grayscale recency image: 255 for an event at `t_ref`, fading with age.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimeSurface {
    pub resolution: Resolution,
    pub t_ref: u64,
    pub tau_vis: u64,
    pixels: Vec<u8>,
}

/// Colour used to mark attended pixels.
pub const TRAJECTORY_RGB: [u8; 3] = [255, 0, 0];

impl TimeSurface {
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: u16, y: u16) -> u8 {
        self.pixels[y as usize * self.resolution.width as usize + x as usize]
    }

    /// `255 - v` on every pixel, for dark-is-recent figures.
    pub fn inverted(mut self) -> Self {
        self.pixels.iter_mut().for_each(|v| *v = 255 - *v);
        self
    }

    pub fn write_pgm<W: Write>(&self, sink: &mut W) -> io::Result<()> {
        write!(sink, "P5\n{} {}\n255\n", self.resolution.width, self.resolution.height)?;
        sink.write_all(&self.pixels)
    }
}

/// Renders the most recent event of each pixel, ignoring events after `t_ref`.
pub fn render_time_surface(
    events: &[Event],
    t_ref: u64,
    tau_vis: u64,
    resolution: Resolution,
) -> Result<TimeSurface, RenderError> {
    if tau_vis == 0 {
        return Err(RenderError::ZeroTau);
    }
    let mut last: Vec<Option<u64>> = vec![None; resolution.pixel_count()];
    for e in events {
        if !resolution.contains(e.x, e.y) {
            return Err(RenderError::EventOutOfRange { x: e.x, y: e.y, resolution });
        }
        if e.t > t_ref {
            continue;
        }
        let slot = &mut last[resolution.index(e.pixel())];
        *slot = Some(slot.map_or(e.t, |t| t.max(e.t)));
    }
    let pixels = last
        .into_iter()
        .map(|t| match t {
            Some(t) => (255.0 * (-((t_ref - t) as f64) / tau_vis as f64).exp()).round() as u8,
            None => 0,
        })
        .collect();
    Ok(TimeSurface { resolution, t_ref, tau_vis, pixels })
}

/// RGB image, row-major, three bytes per pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColorImage {
    pub resolution: Resolution,
    rgb: Vec<u8>,
}

impl ColorImage {
    pub fn get(&self, x: u16, y: u16) -> [u8; 3] {
        let i = 3 * (y as usize * self.resolution.width as usize + x as usize);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn write_ppm<W: Write>(&self, sink: &mut W) -> io::Result<()> {
        write!(sink, "P6\n{} {}\n255\n", self.resolution.width, self.resolution.height)?;
        sink.write_all(&self.rgb)
    }
}

/// Promotes the surface to RGB and paints every trajectory pixel red.
pub fn overlay_trajectory(surface: &TimeSurface, trajectory: &[FocusSample]) -> Result<ColorImage, RenderError> {
    let res = surface.resolution;
    let mut rgb: Vec<u8> = surface.pixels.iter().flat_map(|&v| [v, v, v]).collect();
    for s in trajectory {
        if !res.contains(s.cx, s.cy) {
            return Err(RenderError::SampleOutOfRange { t: s.t, cx: s.cx, cy: s.cy, resolution: res });
        }
        let i = 3 * res.index(s.center());
        rgb[i..i + 3].copy_from_slice(&TRAJECTORY_RGB);
    }
    Ok(ColorImage { resolution: res, rgb })
}
