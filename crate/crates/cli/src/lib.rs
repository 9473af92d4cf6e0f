//! Command implementations behind the `fovea` binary.

pub mod config;

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use fovea_core::events::{generate_stimulus, read_csv_stream, read_raw_aer_stream, write_csv_stream, EventError};
use fovea_core::render::{overlay_trajectory, render_time_surface, RenderError};
use fovea_core::saliency::read_trajectory;
use fovea_core::{Event, Pipeline, PipelineOutput, Resolution};
use thiserror::Error;

pub use config::{parse_stimulus, InputFormat, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config, stimulus description or command-line value.
    #[error("config error: {0}")]
    Config(String),
    /// Malformed or inconsistent event data.
    #[error("input error: {0}")]
    Input(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Input(_) => 3,
            CliError::Io { .. } => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn event_err(path: &Path, e: EventError) -> CliError {
    match e {
        EventError::Io(source) => CliError::Io { path: path.to_path_buf(), source },
        other => CliError::Input(format!("{}: {other}", path.display())),
    }
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), CliError> {
    let mut sink = BufWriter::new(File::create(path).map_err(io_err(path))?);
    body(&mut sink).and_then(|()| sink.flush()).map_err(io_err(path))
}

pub const FOVEATED_FILE: &str = "foveated.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const STATS_FILE: &str = "stats.txt";
pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.txt";

/// Loads a run config; relative paths inside it resolve against its directory.
pub fn load_run_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let base = std::path::absolute(path).map_err(io_err(path))?;
    let dir = base.parent().unwrap_or(Path::new("/"));
    RunConfig::parse(&text, dir)
}

pub fn read_events(cfg: &RunConfig) -> Result<Vec<Event>, CliError> {
    let path = &cfg.input;
    let file = File::open(path).map_err(io_err(path))?;
    let res = cfg.attention.resolution;
    match cfg.format {
        InputFormat::Csv => read_csv_stream(BufReader::new(file), res),
        InputFormat::Raw => read_raw_aer_stream(file, &cfg.decode, res),
    }
    .map_err(|e| event_err(path, e))
}

/// Runs the pipeline on the configured input, in memory.
pub fn process(cfg: &RunConfig, events: &[Event]) -> Result<PipelineOutput, CliError> {
    let mut pipeline = Pipeline::new(cfg.attention.clone(), Some(cfg.topdown))
        .map_err(|e| CliError::Config(e.to_string()))?
        .with_word_order(cfg.word_order);
    let mut out = PipelineOutput::default();
    for e in events {
        let step = pipeline.push(e).map_err(|e| CliError::Input(e.to_string()))?;
        out.trajectory.extend(step.switch);
        out.events.extend(step.forwarded);
    }
    out.stats = pipeline.stats();
    Ok(out)
}

/// `fovea run`: writes the four result files into `output.dir`.
pub fn cmd_run(config_path: &Path) -> Result<PipelineOutput, CliError> {
    let cfg = load_run_config(config_path)?;
    let events = read_events(&cfg)?;
    let out = process(&cfg, &events)?;

    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_file(&dir.join(FOVEATED_FILE), |w| {
        w.write_all(b"# t_us,x,y,p\n")?;
        out.write_foveated(w)
    })?;
    write_file(&dir.join(TRAJECTORY_FILE), |w| {
        w.write_all(b"# t_us,cx,cy\n")?;
        out.write_trajectory(w)
    })?;
    write_file(&dir.join(STATS_FILE), |w| out.write_stats(w))?;
    write_file(&dir.join(EFFECTIVE_CONFIG_FILE), |w| w.write_all(cfg.to_text().as_bytes()))?;
    Ok(out)
}

/// `fovea gen`: synthesizes a stimulus stream as CSV, to `out` or stdout.
pub fn cmd_gen(spec_path: &Path, out: Option<&Path>) -> Result<usize, CliError> {
    let text = fs::read_to_string(spec_path).map_err(io_err(spec_path))?;
    let spec = parse_stimulus(&text)?;
    let events = generate_stimulus(&spec).map_err(|e| CliError::Config(e.to_string()))?;
    let body = |w: &mut dyn Write| -> io::Result<()> {
        writeln!(w, "# resolution {}", spec.resolution)?;
        w.write_all(b"# t_us,x,y,p\n")?;
        write_csv_stream(&events, &mut &mut *w)
    };
    match out {
        Some(path) => write_file(path, |w| body(w))?,
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock).and_then(|()| lock.flush()).map_err(io_err(Path::new("<stdout>")))?;
        }
    }
    Ok(events.len())
}

#[derive(Clone, Debug)]
pub struct RenderArgs {
    pub events: PathBuf,
    pub trajectory: Option<PathBuf>,
    pub out: PathBuf,
    /// Defaults to the last event timestamp.
    pub t_ref: Option<u64>,
    pub tau_vis: u64,
    pub invert: bool,
    pub resolution: Resolution,
}

/// `fovea render`: PGM time surface, or PPM when a trajectory is overlaid.
///
/// Data that does not fit the resolution is a config error, since the
/// resolution is what the user supplied.
pub fn cmd_render(args: &RenderArgs) -> Result<(), CliError> {
    let res = args.resolution;
    let file = File::open(&args.events).map_err(io_err(&args.events))?;
    let events = read_csv_stream(BufReader::new(file), res).map_err(|e| match e {
        EventError::Range { .. } => CliError::Config(format!("{}: {e}", args.events.display())),
        other => event_err(&args.events, other),
    })?;
    let t_ref = args.t_ref.unwrap_or_else(|| events.last().map_or(0, |e| e.t));
    let mut surface = render_time_surface(&events, t_ref, args.tau_vis, res).map_err(render_err)?;
    if args.invert {
        surface = surface.inverted();
    }
    match &args.trajectory {
        None => write_file(&args.out, |w| surface.write_pgm(w)),
        Some(path) => {
            let file = File::open(path).map_err(io_err(path))?;
            let trajectory = read_trajectory(BufReader::new(file)).map_err(|e| event_err(path, e))?;
            let image = overlay_trajectory(&surface, &trajectory).map_err(render_err)?;
            write_file(&args.out, |w| image.write_ppm(w))
        }
    }
}

fn render_err(e: RenderError) -> CliError {
    match e {
        RenderError::Io(source) => CliError::Io { path: PathBuf::from("<render>"), source },
        other => CliError::Config(other.to_string()),
    }
}

/// Parses `WIDTHxHEIGHT`.
pub fn parse_resolution(s: &str) -> Result<Resolution, String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WIDTHxHEIGHT, found {s:?}"))?;
    let w = w.trim().parse().map_err(|e| format!("width: {e}"))?;
    let h = h.trim().parse().map_err(|e| format!("height: {e}"))?;
    Resolution::new(w, h).map_err(|e| e.to_string())
}
