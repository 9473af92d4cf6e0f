//! End-to-end attention pipeline.
//!
//! Stage order per event: word split, input handshake link, word merge,
//! top-down bias, saliency block, fovea filter, output handshake link. The
//! fovea filter sees the winner after the saliency block has consumed the
//! same event, so the event that triggers a switch is itself forwarded.

mod handshake;
mod words;

use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

pub use handshake::{HandshakeChannel, HandshakeError, Phase};
pub use words::{merge_words, split_event, split_words, AerWord, WordMerger, WordOrder};

use crate::events::{write_csv_stream, Event, Pixel};
use crate::saliency::{foa_window, write_trajectory, AttentionConfig, FocusSample, SaliencyError, SaliencyState};
use crate::topdown::TopDownConfig;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Saliency(#[from] SaliencyError),
    #[error(transparent)]
    Handshake(#[from] HandshakeError),
    #[error("event at t={t} arrived after t={prev}")]
    Ordering { prev: u64, t: u64 },
    #[error("invalid top-down config: {0}")]
    TopDown(String),
}

/// Passes `e` only if a winner exists and `e` lies in its focus window.
pub fn fovea_filter(e: &Event, winner: Option<Pixel>, cfg: &AttentionConfig) -> Option<Event> {
    let w = winner?;
    foa_window(w, cfg.foa, cfg.resolution).contains(e.x, e.y).then_some(*e)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PipelineStats {
    pub events_in: u64,
    pub events_gated: u64,
    pub events_dropped_no_winner: u64,
    pub events_dropped_outside_foa: u64,
    pub events_out: u64,
    pub winner_switches: u64,
    pub protocol_errors: u64,
}

impl PipelineStats {
    /// Every merged event is accounted for exactly once.
    pub fn is_balanced(&self) -> bool {
        self.events_in
            == self.events_gated + self.events_dropped_no_winner + self.events_dropped_outside_foa + self.events_out
    }
}

impl fmt::Display for PipelineStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "events_in={}", self.events_in)?;
        writeln!(f, "events_gated={}", self.events_gated)?;
        writeln!(f, "events_dropped_no_winner={}", self.events_dropped_no_winner)?;
        writeln!(f, "events_dropped_outside_foa={}", self.events_dropped_outside_foa)?;
        writeln!(f, "events_out={}", self.events_out)?;
        writeln!(f, "winner_switches={}", self.winner_switches)?;
        writeln!(f, "protocol_errors={}", self.protocol_errors)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PipelineOutput {
    pub events: Vec<Event>,
    pub trajectory: Vec<FocusSample>,
    pub stats: PipelineStats,
}

impl PipelineOutput {
    pub fn write_foveated<W: Write>(&self, sink: &mut W) -> io::Result<()> {
        write_csv_stream(&self.events, sink)
    }

    pub fn write_trajectory<W: Write>(&self, sink: &mut W) -> io::Result<()> {
        write_trajectory(&self.trajectory, sink)
    }

    pub fn write_stats<W: Write>(&self, sink: &mut W) -> io::Result<()> {
        write!(sink, "{}", self.stats)
    }
}

/// What one input event produced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Step {
    pub switch: Option<FocusSample>,
    pub forwarded: Option<Event>,
}

/// Streaming form of [`run_pipeline`].
#[derive(Clone, Debug)]
pub struct Pipeline {
    cfg: AttentionConfig,
    topdown: Option<TopDownConfig>,
    order: WordOrder,
    input_link: HandshakeChannel<AerWord>,
    merger: WordMerger,
    saliency: SaliencyState,
    output_link: HandshakeChannel<Event>,
    last_t: Option<u64>,
    stats: PipelineStats,
}

impl Pipeline {
    pub fn new(cfg: AttentionConfig, topdown: Option<TopDownConfig>) -> Result<Self, PipelineError> {
        cfg.validate()?;
        if let Some(td) = &topdown {
            td.validate(cfg.resolution).map_err(PipelineError::TopDown)?;
        }
        Ok(Pipeline {
            saliency: SaliencyState::new(cfg.resolution),
            cfg,
            topdown,
            order: WordOrder::default(),
            input_link: HandshakeChannel::new(),
            merger: WordMerger::new(WordOrder::default()),
            output_link: HandshakeChannel::new(),
            last_t: None,
            stats: PipelineStats::default(),
        })
    }

    pub fn with_word_order(mut self, order: WordOrder) -> Self {
        self.order = order;
        self.merger = WordMerger::new(order);
        self
    }

    pub fn config(&self) -> &AttentionConfig {
        &self.cfg
    }

    pub fn saliency(&self) -> &SaliencyState {
        &self.saliency
    }

    pub fn winner(&self) -> Option<Pixel> {
        self.saliency.winner()
    }

    pub fn stats(&self) -> PipelineStats {
        PipelineStats {
            protocol_errors: self.merger.protocol_errors()
                + self.input_link.protocol_errors()
                + self.output_link.protocol_errors(),
            ..self.stats
        }
    }

    pub fn push(&mut self, e: &Event) -> Result<Step, PipelineError> {
        if let Some(prev) = self.last_t {
            if e.t < prev {
                return Err(PipelineError::Ordering { prev, t: e.t });
            }
        }
        self.last_t = Some(e.t);

        let mut step = Step::default();
        for word in split_event(e, self.order) {
            self.input_link.send(word)?;
            let word = self.input_link.receive()?;
            if let Some(merged) = self.merger.push(word) {
                step = self.process(merged)?;
            }
        }
        Ok(step)
    }

    fn process(&mut self, e: Event) -> Result<Step, PipelineError> {
        self.stats.events_in += 1;
        let (e, gain) = match &self.topdown {
            Some(td) => match td.gate(e) {
                Some(e) => (e, td.modulation_gain(&e)),
                None => {
                    self.stats.events_gated += 1;
                    return Ok(Step::default());
                }
            },
            None => (e, crate::fixedpoint::Fixed::ONE),
        };

        let switch = self.saliency.process_event(&e, gain, &self.cfg)?;
        if switch.is_some() {
            self.stats.winner_switches += 1;
        }

        let forwarded = match fovea_filter(&e, self.saliency.winner(), &self.cfg) {
            Some(out) => {
                self.output_link.send(out)?;
                let out = self.output_link.receive()?;
                self.stats.events_out += 1;
                Some(out)
            }
            None if self.saliency.winner().is_none() => {
                self.stats.events_dropped_no_winner += 1;
                None
            }
            None => {
                self.stats.events_dropped_outside_foa += 1;
                None
            }
        };
        Ok(Step { switch, forwarded })
    }
}

/// Runs a whole stream through a fresh pipeline.
pub fn run_pipeline(
    input: &[Event],
    cfg: &AttentionConfig,
    td: Option<&TopDownConfig>,
) -> Result<PipelineOutput, PipelineError> {
    let mut pipeline = Pipeline::new(cfg.clone(), td.copied())?;
    let mut out = PipelineOutput::default();
    for e in input {
        let step = pipeline.push(e)?;
        out.trajectory.extend(step.switch);
        out.events.extend(step.forwarded);
    }
    out.stats = pipeline.stats();
    Ok(out)
}
