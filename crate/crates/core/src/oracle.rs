//! Reference models for verification.
//!
//! [`FloatState`] replays the saliency procedure step by step on `f64`
//! grids, scanning the whole grid for window membership instead of using
//! [`crate::saliency::foa_window`]. In [`Arithmetic::Exact`] mode it uses the
//! true exponential; in [`Arithmetic::Quantized`] mode every stored value is
//! pushed through the Q12.8 grid and the PWL decay table. Nothing here is
//! meant to be fast.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::events::{Event, Pixel, Polarity, Resolution};
use crate::fixedpoint::{pwl_exp_decay, FixedPointError, PwlTable};
use crate::saliency::{AttentionConfig, FocusSample, SaliencyError};

const STATE_MAX: f64 = 4095.99609375;
const STATE_MIN: f64 = -4096.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arithmetic {
    /// Real arithmetic with `exp`.
    Exact,
    /// Values rounded as the fixed-point datapath rounds them.
    Quantized,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FloatState {
    resolution: Resolution,
    arithmetic: Arithmetic,
    values: Vec<f64>,
    times: Vec<u64>,
    winner: Option<Pixel>,
}

fn in_window(p: Pixel, center: Pixel, width: u16, height: u16) -> bool {
    let (px, py) = (p.x as i64, p.y as i64);
    let (cx, cy) = (center.x as i64, center.y as i64);
    let (hx, hy) = (width as i64 / 2, height as i64 / 2);
    px >= cx - hx && px < cx + hx && py >= cy - hy && py < cy + hy
}

fn quantized_decay(value: f64, delta_t: u64, tau: u64, table: &PwlTable) -> Result<f64, FixedPointError> {
    let factor = pwl_exp_decay(delta_t, tau, table)?.raw() as f64;
    // exact in f64: |raw| < 2^21 and factor <= 2^16
    Ok((value * 256.0 * factor / 65536.0).trunc() / 256.0)
}

fn saturate(v: f64) -> f64 {
    v.clamp(STATE_MIN, STATE_MAX)
}

impl FloatState {
    pub fn new(resolution: Resolution, arithmetic: Arithmetic) -> Self {
        let n = resolution.pixel_count();
        FloatState { resolution, arithmetic, values: vec![0.0; n], times: vec![0; n], winner: None }
    }

    pub fn winner(&self) -> Option<Pixel> {
        self.winner
    }

    fn idx(&self, p: Pixel) -> usize {
        p.y as usize * self.resolution.width as usize + p.x as usize
    }

    pub fn value(&self, p: Pixel) -> f64 {
        self.values[self.idx(p)]
    }

    fn decay(&self, value: f64, delta_t: u64, cfg: &AttentionConfig) -> Result<f64, SaliencyError> {
        match self.arithmetic {
            Arithmetic::Exact => Ok(value * (-(delta_t as f64) / cfg.tau as f64).exp()),
            Arithmetic::Quantized => {
                quantized_decay(value, delta_t, cfg.tau, &cfg.pwl).map_err(|e| SaliencyError::Config(e.to_string()))
            }
        }
    }

    fn add(&self, a: f64, b: f64) -> f64 {
        match self.arithmetic {
            Arithmetic::Exact => a + b,
            Arithmetic::Quantized => saturate(a + b),
        }
    }

    /// Value of pixel `p` decayed to `t`, without storing it.
    pub fn decayed_value(&self, p: Pixel, t: u64, cfg: &AttentionConfig) -> Result<f64, SaliencyError> {
        let i = self.idx(p);
        let t_old = self.times[i];
        if t < t_old {
            return Err(SaliencyError::Ordering { pixel: p, last: t_old, t });
        }
        self.decay(self.values[i], t - t_old, cfg)
    }

    /// Winner-switch comparison the next event would face: the updated event
    /// pixel state and the decayed winner state. `None` without a winner.
    pub fn peek_comparison(
        &self,
        e: &Event,
        gain: f64,
        cfg: &AttentionConfig,
    ) -> Result<Option<(f64, f64)>, SaliencyError> {
        let Some(w) = self.winner else { return Ok(None) };
        let s_p = self.add(gain, self.decayed_value(e.pixel(), e.t, cfg)?);
        let s_star = if w == e.pixel() { s_p } else { self.decayed_value(w, e.t, cfg)? };
        Ok(Some((s_p, s_star)))
    }

    /// The saliency procedure for one event, step by step.
    pub fn reference_process_event(
        &mut self,
        e: &Event,
        gain: f64,
        cfg: &AttentionConfig,
    ) -> Result<Option<FocusSample>, SaliencyError> {
        let p = e.pixel();
        // steps 1-4: read t_old and s_old, decay, add the increment, store
        let s_p = self.add(gain, self.decayed_value(p, e.t, cfg)?);
        let i = self.idx(p);
        self.values[i] = s_p;
        self.times[i] = e.t;

        // step 5: bring the winner to the same time
        let s_star = match self.winner {
            Some(w) => {
                let s = self.decayed_value(w, e.t, cfg)?;
                let j = self.idx(w);
                self.values[j] = s;
                self.times[j] = e.t;
                Some(s)
            }
            None => None,
        };

        // step 6: compare, and on a switch excite the new window then inhibit the old
        if s_star.is_some_and(|s| s_p <= s) {
            return Ok(None);
        }
        let old = self.winner.replace(p);
        let (s_plus, s_minus) = (cfg.s_plus.to_real(), cfg.s_minus.to_real());
        let (mx, my) = (cfg.foa.width, cfg.foa.height);
        for y in 0..self.resolution.height {
            for x in 0..self.resolution.width {
                let q = Pixel::new(x, y);
                let k = self.idx(q);
                if in_window(q, p, mx, my) {
                    self.values[k] = self.add(self.values[k], s_plus);
                }
                if old.is_some_and(|o| in_window(q, o, mx, my)) {
                    self.values[k] = self.add(self.values[k], -s_minus);
                }
            }
        }
        Ok(Some(FocusSample { t: e.t, cx: p.x, cy: p.y }))
    }

    /// Brute-force maximum over every pixel decayed to `t`; ties go to the
    /// smallest row, then the smallest column.
    pub fn global_argmax(&self, t: u64, cfg: &AttentionConfig) -> Result<Pixel, SaliencyError> {
        let mut best = (Pixel::new(0, 0), f64::NEG_INFINITY);
        for y in 0..self.resolution.height {
            for x in 0..self.resolution.width {
                let p = Pixel::new(x, y);
                let v = self.decayed_value(p, t, cfg)?;
                if v > best.1 {
                    best = (p, v);
                }
            }
        }
        Ok(best.0)
    }
}

/// Replays a stream through a fresh reference state with unit gain.
pub fn reference_trajectory(
    events: &[Event],
    cfg: &AttentionConfig,
    arithmetic: Arithmetic,
) -> Result<Vec<FocusSample>, SaliencyError> {
    let mut state = FloatState::new(cfg.resolution, arithmetic);
    let mut out = Vec::new();
    for e in events {
        out.extend(state.reference_process_event(e, 1.0, cfg)?);
    }
    Ok(out)
}

/// Knobs for [`margin_stream`].
#[derive(Clone, Debug)]
pub struct StreamShape {
    pub events: usize,
    /// Inter-event gap drawn uniformly from `0..=max_gap` µs.
    pub max_gap: u64,
    /// Forbid equal timestamps.
    pub strictly_increasing: bool,
    /// Number of hot pixels that receive `hot_fraction` of all events.
    pub hot_pixels: usize,
    pub hot_fraction: f64,
    /// Minimum accepted gap, relative to the larger compared value, between
    /// an event's updated state and the decayed winner state.
    pub relative_margin: f64,
    /// Absolute part of the minimum gap.
    pub absolute_margin: f64,
}

impl Default for StreamShape {
    fn default() -> Self {
        StreamShape {
            events: 5_000,
            max_gap: 400,
            strictly_increasing: false,
            hot_pixels: 6,
            hot_fraction: 0.6,
            relative_margin: 2.0 / 128.0,
            absolute_margin: 4.0 / 256.0,
        }
    }
}

/// Random stream whose winner comparisons, evaluated in exact arithmetic,
/// all clear the configured margin. Candidates that would produce a near
/// tie are redrawn.
pub fn margin_stream(seed: u64, shape: &StreamShape, cfg: &AttentionConfig) -> Vec<Event> {
    let res = cfg.resolution;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hot: Vec<Pixel> = (0..shape.hot_pixels)
        .map(|_| Pixel::new(rng.random_range(0..res.width), rng.random_range(0..res.height)))
        .collect();
    let mut state = FloatState::new(res, Arithmetic::Exact);
    let mut out = Vec::with_capacity(shape.events);
    let mut t = 0u64;

    while out.len() < shape.events {
        let min_gap = u64::from(shape.strictly_increasing && !out.is_empty());
        let t_next = t + rng.random_range(min_gap..=shape.max_gap.max(min_gap));
        // hot spots wander now and then so attention keeps moving
        if !hot.is_empty() && rng.random_bool(0.002) {
            let k = rng.random_range(0..hot.len());
            hot[k] = Pixel::new(rng.random_range(0..res.width), rng.random_range(0..res.height));
        }

        let mut accepted = None;
        for _ in 0..64 {
            let p = if !hot.is_empty() && rng.random_bool(shape.hot_fraction) {
                hot[rng.random_range(0..hot.len())]
            } else {
                Pixel::new(rng.random_range(0..res.width), rng.random_range(0..res.height))
            };
            let pol = if rng.random::<bool>() { Polarity::On } else { Polarity::Off };
            let e = Event::new(t_next, p.x, p.y, pol);
            let clear = match state.peek_comparison(&e, 1.0, cfg).expect("monotone by construction") {
                Some((s_p, s_star)) if Some(p) != state.winner() => {
                    let scale = s_p.abs().max(s_star.abs());
                    (s_p - s_star).abs() >= shape.relative_margin * scale + shape.absolute_margin
                }
                _ => true,
            };
            if clear {
                accepted = Some(e);
                break;
            }
        }
        // a crowded instant: let time move on and redraw
        t = t_next;
        if let Some(e) = accepted {
            state.reference_process_event(&e, 1.0, cfg).expect("monotone by construction");
            out.push(e);
        }
    }
    out
}
