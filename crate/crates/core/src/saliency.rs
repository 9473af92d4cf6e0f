//! The saliency block: lazily decayed per-pixel state, winner tracking and
//! inhibition of return over the focus-of-attention window.
//!
//! Each pixel keeps its state as of its own last event together with that
//! event's timestamp. Decay is applied only when a pixel is touched again,
//! so an event costs O(1) plus O(m_x * m_y) on a winner switch.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::events::{Event, Pixel, Resolution};
use crate::fixedpoint::{pwl_exp_decay, Fixed, PwlTable};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SaliencyError {
    #[error("event at t={t} for pixel ({}, {}) precedes its last event at t={last}", pixel.x, pixel.y)]
    Ordering { pixel: Pixel, last: u64, t: u64 },
    #[error("pixel ({}, {}) outside {resolution}", pixel.x, pixel.y)]
    OutOfRange { pixel: Pixel, resolution: Resolution },
    #[error("invalid attention config: {0}")]
    Config(String),
}

/// Focus-of-attention window size. Both sides are positive and even.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FoaSize {
    pub width: u16,
    pub height: u16,
}

impl Default for FoaSize {
    fn default() -> Self {
        FoaSize { width: 16, height: 16 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionConfig {
    /// Decay time constant in µs.
    pub tau: u64,
    /// Excitation added over the new focus window on a switch.
    pub s_plus: Fixed,
    /// Inhibition subtracted over the previous focus window on a switch.
    pub s_minus: Fixed,
    pub foa: FoaSize,
    pub resolution: Resolution,
    pub pwl: PwlTable,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        AttentionConfig {
            tau: 10_000,
            s_plus: Fixed::ONE,
            s_minus: Fixed::ONE,
            foa: FoaSize::default(),
            resolution: Resolution::DAVIS240,
            pwl: PwlTable::default(),
        }
    }
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<(), SaliencyError> {
        let bad = |msg: String| Err(SaliencyError::Config(msg));
        if self.tau == 0 {
            return bad("tau must be positive".into());
        }
        if self.s_plus.is_negative() || self.s_minus.is_negative() {
            return bad("s_plus and s_minus must be non-negative".into());
        }
        let FoaSize { width, height } = self.foa;
        if width == 0 || height == 0 || width % 2 != 0 || height % 2 != 0 {
            return bad(format!("foa {width}x{height} must be positive and even"));
        }
        if width > self.resolution.width || height > self.resolution.height {
            return bad(format!("foa {width}x{height} larger than {}", self.resolution));
        }
        if self.resolution.width == 0 || self.resolution.height == 0 {
            return bad(format!("resolution {} must be non-empty", self.resolution));
        }
        Ok(())
    }
}

/// One point of the attention trajectory: the winner chosen at time `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FocusSample {
    pub t: u64,
    pub cx: u16,
    pub cy: u16,
}

impl FocusSample {
    pub fn center(&self) -> Pixel {
        Pixel::new(self.cx, self.cy)
    }
}

/// Inclusive pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub x0: u16,
    pub y0: u16,
    pub x1: u16,
    pub y1: u16,
}

impl Window {
    pub fn contains(&self, x: u16, y: u16) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }

    pub fn pixels(&self) -> impl Iterator<Item = Pixel> + '_ {
        (self.y0..=self.y1).flat_map(move |y| (self.x0..=self.x1).map(move |x| Pixel::new(x, y)))
    }
}

/// The focus window around `center`: `[c - m/2, c + m/2 - 1]` on each axis,
/// truncated at the sensor edges.
pub fn foa_window(center: Pixel, foa: FoaSize, res: Resolution) -> Window {
    let span = |c: u16, m: u16, limit: u16| {
        let half = m / 2;
        let lo = c.saturating_sub(half);
        let hi = (c as u32 + half as u32).saturating_sub(1).min(limit as u32 - 1) as u16;
        (lo, hi.max(lo))
    };
    let (x0, x1) = span(center.x, foa.width, res.width);
    let (y0, y1) = span(center.y, foa.height, res.height);
    Window { x0, y0, x1, y1 }
}

/// Backing storage for pixel state and last-event timestamps.
pub trait PixelStore {
    fn resolution(&self) -> Resolution;

    /// State and timestamp of an in-range pixel.
    fn load(&self, p: Pixel) -> (Fixed, u64);

    fn store(&mut self, p: Pixel, value: Fixed, t: u64);

    /// Adds `delta` to the state without touching the timestamp.
    fn adjust(&mut self, p: Pixel, delta: Fixed) {
        let (v, t) = self.load(p);
        self.store(p, v.add_sat(delta), t);
    }
}

/// Two flat row-major grids, cleared to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseStore {
    resolution: Resolution,
    values: Vec<Fixed>,
    times: Vec<u64>,
}

impl DenseStore {
    pub fn new(resolution: Resolution) -> Self {
        let n = resolution.pixel_count();
        DenseStore { resolution, values: vec![Fixed::ZERO; n], times: vec![0; n] }
    }

    pub fn values(&self) -> &[Fixed] {
        &self.values
    }

    pub fn times(&self) -> &[u64] {
        &self.times
    }
}

impl PixelStore for DenseStore {
    fn resolution(&self) -> Resolution {
        self.resolution
    }

    #[inline]
    fn load(&self, p: Pixel) -> (Fixed, u64) {
        let i = self.resolution.index(p);
        (self.values[i], self.times[i])
    }

    #[inline]
    fn store(&mut self, p: Pixel, value: Fixed, t: u64) {
        let i = self.resolution.index(p);
        self.values[i] = value;
        self.times[i] = t;
    }

    #[inline]
    fn adjust(&mut self, p: Pixel, delta: Fixed) {
        let i = self.resolution.index(p);
        self.values[i] = self.values[i].add_sat(delta);
    }
}

/// Saliency map plus the lazily tracked winner.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyState<S = DenseStore> {
    store: S,
    winner: Option<Pixel>,
}

impl SaliencyState<DenseStore> {
    pub fn new(resolution: Resolution) -> Self {
        SaliencyState::with_store(DenseStore::new(resolution))
    }
}

impl<S: PixelStore> SaliencyState<S> {
    pub fn with_store(store: S) -> Self {
        SaliencyState { store, winner: None }
    }

    pub fn store(&self) -> &S {
        &self.store
    }

    pub fn resolution(&self) -> Resolution {
        self.store.resolution()
    }

    pub fn winner(&self) -> Option<Pixel> {
        self.winner
    }

    /// Stored winner state, as of the winner's own last update.
    pub fn winner_state(&self) -> Option<Fixed> {
        self.winner.map(|w| self.store.load(w).0)
    }

    pub fn value(&self, p: Pixel) -> Fixed {
        self.store.load(p).0
    }

    pub fn last_event_time(&self, p: Pixel) -> u64 {
        self.store.load(p).1
    }

    fn decayed(&self, p: Pixel, t: u64, cfg: &AttentionConfig) -> Result<Fixed, SaliencyError> {
        let (s_old, t_old) = self.store.load(p);
        if t < t_old {
            return Err(SaliencyError::Ordering { pixel: p, last: t_old, t });
        }
        let factor = pwl_exp_decay(t - t_old, cfg.tau, &cfg.pwl).map_err(|e| SaliencyError::Config(e.to_string()))?;
        Ok(s_old.mul_decay(factor))
    }

    /// `s = gain + s_old * decay(t - t_old)`, written back with timestamp `t`.
    pub fn update_pixel_state(
        &mut self,
        p: Pixel,
        t: u64,
        gain: Fixed,
        cfg: &AttentionConfig,
    ) -> Result<Fixed, SaliencyError> {
        let s_new = gain.add_sat(self.decayed(p, t, cfg)?);
        self.store.store(p, s_new, t);
        Ok(s_new)
    }

    /// Decays the winner to `t` without any increment and writes it back.
    /// Returns `None` while no winner has been chosen.
    pub fn refresh_winner_state(&mut self, t: u64, cfg: &AttentionConfig) -> Result<Option<Fixed>, SaliencyError> {
        let Some(w) = self.winner else { return Ok(None) };
        let s = self.decayed(w, t, cfg)?;
        self.store.store(w, s, t);
        Ok(Some(s))
    }

    /// Excites the window around `new_winner`, then inhibits the window
    /// around `old_winner`. Timestamps are left alone.
    pub fn apply_ior(&mut self, old_winner: Option<Pixel>, new_winner: Pixel, cfg: &AttentionConfig) {
        let res = self.resolution();
        if cfg.s_plus != Fixed::ZERO {
            for p in foa_window(new_winner, cfg.foa, res).pixels() {
                self.store.adjust(p, cfg.s_plus);
            }
        }
        if let Some(old) = old_winner {
            if cfg.s_minus != Fixed::ZERO {
                let inhibit = -cfg.s_minus;
                for p in foa_window(old, cfg.foa, res).pixels() {
                    self.store.adjust(p, inhibit);
                }
            }
        }
    }

    /// Runs one event through the saliency block and reports a winner switch.
    pub fn process_event(
        &mut self,
        e: &Event,
        gain: Fixed,
        cfg: &AttentionConfig,
    ) -> Result<Option<FocusSample>, SaliencyError> {
        let p = e.pixel();
        let res = self.resolution();
        if !res.contains(p.x, p.y) {
            return Err(SaliencyError::OutOfRange { pixel: p, resolution: res });
        }
        let s_new = self.update_pixel_state(p, e.t, gain, cfg)?;
        let switch = match self.winner {
            Some(w) if w == p => false,
            Some(_) => {
                let s_star = self.refresh_winner_state(e.t, cfg)?.expect("winner present");
                s_new > s_star
            }
            None => true,
        };
        if !switch {
            return Ok(None);
        }
        let old = self.winner.replace(p);
        self.apply_ior(old, p, cfg);
        Ok(Some(FocusSample { t: e.t, cx: p.x, cy: p.y }))
    }
}

pub fn write_trajectory<'a, W, I>(samples: I, sink: &mut W) -> io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a FocusSample>,
{
    for s in samples {
        writeln!(sink, "{},{},{}", s.t, s.cx, s.cy)?;
    }
    Ok(())
}

/// Reads `t_us,cx,cy` lines; `#` lines are comments.
pub fn read_trajectory<R: BufRead>(source: R) -> Result<Vec<FocusSample>, crate::events::EventError> {
    use crate::events::EventError;
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = body.split(',').map(str::trim).collect();
        let parsed = match fields.as_slice() {
            [t, x, y] => t.parse().ok().zip(x.parse().ok()).zip(y.parse().ok()),
            _ => None,
        };
        let ((t, cx), cy) = parsed
            .ok_or_else(|| EventError::Parse { line: i + 1, msg: format!("expected `t_us,cx,cy`, found {body:?}") })?;
        out.push(FocusSample { t, cx, cy });
    }
    Ok(out)
}
