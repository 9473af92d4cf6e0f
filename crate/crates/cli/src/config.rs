//! Flat `key = value` config files with dotted section prefixes.
//!
//! Blank lines and lines starting with `#` are ignored. Keys may appear only
//! once and unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fovea_core::events::{AddressDecode, PointSource, StimulusSpec};
use fovea_core::pipeline::WordOrder;
use fovea_core::{
    AttentionConfig, BiasMode, Fixed, FoaSize, Polarity, PwlTable, RegionOfInterest, Resolution, TopDownConfig,
};

use crate::CliError;

/// Parsed key/value pairs, consumed key by key.
#[derive(Debug)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let body = line.trim();
            if body.is_empty() || body.starts_with('#') {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {line_no}: expected `key = value`")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(CliError::Config(format!("line {line_no}: empty key")));
            }
            if entries.insert(key.to_string(), (line_no, value.trim().to_string())).is_some() {
                return Err(CliError::Config(format!("line {line_no}: duplicate key `{key}`")));
            }
        }
        Ok(KeyValues { entries })
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn parsed<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some((line, raw)) => {
                raw.parse().map(Some).map_err(|e| CliError::Config(format!("line {line}: `{key}`: {e}")))
            }
        }
    }

    fn or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    fn required<T: FromStr>(&mut self, key: &str) -> Result<T, CliError>
    where
        T::Err: fmt::Display,
    {
        self.parsed(key)?.ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))
    }

    fn keys_with_prefix(&self, prefix: &str) -> Vec<String> {
        self.entries.keys().filter(|k| k.starts_with(prefix)).cloned().collect()
    }

    /// Fails on whatever was not consumed.
    fn finish(self) -> Result<(), CliError> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, (line, _))) => Err(CliError::Config(format!("line {line}: unknown key `{key}`"))),
        }
    }
}

/// Unsigned integer in decimal or `0x` hex.
#[derive(Clone, Copy, Debug)]
struct Int(u32);

impl FromStr for Int {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
            Some(hex) => u32::from_str_radix(hex, 16),
            None => s.parse(),
        };
        parsed.map(Int).map_err(|e| format!("{e} in {s:?}"))
    }
}

/// `[x0,y0,x1,y1]`
struct Roi(RegionOfInterest);

impl FromStr for Roi {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let inner = s.trim().strip_prefix('[').and_then(|r| r.strip_suffix(']')).ok_or("expected [x0,y0,x1,y1]")?;
        let v: Vec<u16> =
            inner.split(',').map(|p| p.trim().parse::<u16>().map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
        match v.as_slice() {
            &[x0, y0, x1, y1] => Ok(Roi(RegionOfInterest { x0, y0, x1, y1 })),
            _ => Err(format!("expected 4 coordinates, found {}", v.len())),
        }
    }
}

struct FixedValue(Fixed);

impl FromStr for FixedValue {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
        if !v.is_finite() {
            return Err(format!("{s} is not finite"));
        }
        Ok(FixedValue(Fixed::from_real(v)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputFormat {
    Csv,
    Raw,
}

impl FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(InputFormat::Csv),
            "raw" => Ok(InputFormat::Raw),
            other => Err(format!("unknown input format {other:?} (expected csv or raw)")),
        }
    }
}

impl fmt::Display for InputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputFormat::Csv => "csv",
            InputFormat::Raw => "raw",
        })
    }
}

struct Order(WordOrder);

impl FromStr for Order {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "y_then_x" => Ok(Order(WordOrder::YThenX)),
            "x_then_y" => Ok(Order(WordOrder::XThenY)),
            other => Err(format!("unknown word order {other:?} (expected y_then_x or x_then_y)")),
        }
    }
}

fn order_name(o: WordOrder) -> &'static str {
    match o {
        WordOrder::YThenX => "y_then_x",
        WordOrder::XThenY => "x_then_y",
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = PathBuf::from(p);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub input: PathBuf,
    pub format: InputFormat,
    pub decode: AddressDecode,
    pub attention: AttentionConfig,
    pub topdown: TopDownConfig,
    pub word_order: WordOrder,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl RunConfig {
    /// Parses a config; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut kv = KeyValues::parse(text)?;
        let input = resolve(base_dir, &kv.required::<String>("input.path")?);
        let format = kv.or("input.format", InputFormat::Csv)?;
        let tau: u64 = kv.required("tau")?;

        let width: u16 = kv.or("resolution.width", Resolution::DAVIS240.width)?;
        let height: u16 = kv.or("resolution.height", Resolution::DAVIS240.height)?;
        let resolution = Resolution::new(width, height).map_err(|e| CliError::Config(e.to_string()))?;

        let defaults = AttentionConfig::default();
        let s_plus = kv.parsed::<FixedValue>("s_plus")?.map_or(defaults.s_plus, |v| v.0);
        let s_minus = kv.parsed::<FixedValue>("s_minus")?.map_or(defaults.s_minus, |v| v.0);
        let foa = FoaSize {
            width: kv.or("foa.width", defaults.foa.width)?,
            height: kv.or("foa.height", defaults.foa.height)?,
        };
        let pwl = PwlTable::new(
            kv.or("pwl.segment_count", defaults.pwl.segment_count())?,
            kv.or("pwl.domain_cutoff", defaults.pwl.domain_cutoff())?,
        )
        .map_err(|e| CliError::Config(e.to_string()))?;
        let attention = AttentionConfig { tau, s_plus, s_minus, foa, resolution, pwl };
        attention.validate().map_err(|e| CliError::Config(e.to_string()))?;

        let mut topdown = TopDownConfig::new(resolution);
        topdown.mode = kv.or::<BiasMode>("topdown.mode", topdown.mode)?;
        if let Some(Roi(roi)) = kv.parsed("topdown.roi")? {
            topdown.roi = roi;
        }
        if let Some(FixedValue(g)) = kv.parsed("topdown.gain_inside")? {
            topdown.gain_inside = g;
        }
        if let Some(FixedValue(g)) = kv.parsed("topdown.gain_outside")? {
            topdown.gain_outside = g;
        }
        topdown.validate(resolution).map_err(CliError::Config)?;

        let d = AddressDecode::default();
        let decode = AddressDecode {
            x_shift: kv.or("raw.x_shift", Int(d.x_shift))?.0,
            x_mask: kv.or("raw.x_mask", Int(d.x_mask))?.0,
            y_shift: kv.or("raw.y_shift", Int(d.y_shift))?.0,
            y_mask: kv.or("raw.y_mask", Int(d.y_mask))?.0,
            pol_shift: kv.or("raw.pol_shift", Int(d.pol_shift))?.0,
        };
        for (name, shift) in
            [("raw.x_shift", decode.x_shift), ("raw.y_shift", decode.y_shift), ("raw.pol_shift", decode.pol_shift)]
        {
            if shift > 31 {
                return Err(CliError::Config(format!("`{name}` = {shift} exceeds 31")));
            }
        }
        let word_order = kv.or("pipeline.word_order", Order(WordOrder::default()))?.0;
        let output_dir = resolve(base_dir, &kv.or("output.dir", "out".to_string())?);
        let seed = kv.or("seed", 0u64)?;
        kv.finish()?;

        Ok(RunConfig { input, format, decode, attention, topdown, word_order, output_dir, seed })
    }

    /// The effective config, every key spelled out.
    pub fn to_text(&self) -> String {
        let a = &self.attention;
        let td = &self.topdown;
        let mut s = String::from("# effective configuration\n");
        let mut line = |k: &str, v: &dyn fmt::Display| {
            writeln!(s, "{k} = {v}").expect("write to String");
        };
        line("input.path", &self.input.display());
        line("input.format", &self.format);
        line("resolution.width", &a.resolution.width);
        line("resolution.height", &a.resolution.height);
        line("tau", &a.tau);
        line("s_plus", &a.s_plus);
        line("s_minus", &a.s_minus);
        line("foa.width", &a.foa.width);
        line("foa.height", &a.foa.height);
        line("pwl.segment_count", &a.pwl.segment_count());
        line("pwl.domain_cutoff", &a.pwl.domain_cutoff());
        line("topdown.mode", &td.mode);
        line("topdown.roi", &td.roi);
        line("topdown.gain_inside", &td.gain_inside);
        line("topdown.gain_outside", &td.gain_outside);
        line("pipeline.word_order", &order_name(self.word_order));
        line("raw.x_shift", &self.decode.x_shift);
        line("raw.x_mask", &format_args!("{:#x}", self.decode.x_mask));
        line("raw.y_shift", &self.decode.y_shift);
        line("raw.y_mask", &format_args!("{:#x}", self.decode.y_mask));
        line("raw.pol_shift", &self.decode.pol_shift);
        line("output.dir", &self.output_dir.display());
        line("seed", &self.seed);
        s
    }
}

fn parse_source(index: usize, line: usize, raw: &str) -> Result<PointSource, CliError> {
    let err = |msg: String| CliError::Config(format!("line {line}: `source.{index}`: {msg}"));
    let f: Vec<&str> = raw.split(',').map(str::trim).collect();
    if f.len() != 6 {
        return Err(err(format!("expected x,y,rate_hz,start_us,stop_us,polarity, found {} fields", f.len())));
    }
    let num = |i: usize| f[i].parse::<u64>().map_err(|e| err(format!("field {}: {e}", i + 1)));
    let coord = |i: usize| f[i].parse::<u16>().map_err(|e| err(format!("field {}: {e}", i + 1)));
    let rate_hz: f64 = f[2].parse().map_err(|e| err(format!("rate: {e}")))?;
    let polarity = f[5]
        .parse::<i64>()
        .ok()
        .and_then(Polarity::from_sign)
        .ok_or_else(|| err(format!("polarity must be 1 or -1, found {:?}", f[5])))?;
    Ok(PointSource { x: coord(0)?, y: coord(1)?, rate_hz, start: num(3)?, stop: num(4)?, polarity })
}

/// Parses a stimulus description: `duration`, `seed`, `noise.rate_hz`,
/// `resolution.*` and any number of `source.N = x,y,rate_hz,start,stop,p`.
pub fn parse_stimulus(text: &str) -> Result<StimulusSpec, CliError> {
    let mut kv = KeyValues::parse(text)?;
    let width: u16 = kv.or("resolution.width", Resolution::DAVIS240.width)?;
    let height: u16 = kv.or("resolution.height", Resolution::DAVIS240.height)?;
    let resolution = Resolution::new(width, height).map_err(|e| CliError::Config(e.to_string()))?;
    let duration: u64 = kv.required("duration")?;
    let seed: u64 = kv.or("seed", 0)?;
    let noise_rate_hz: f64 = kv.or("noise.rate_hz", 0.0)?;

    let mut indexed = Vec::new();
    for key in kv.keys_with_prefix("source.") {
        let Ok(index) = key["source.".len()..].parse::<usize>() else { continue };
        let (line, raw) = kv.take(&key).expect("key listed above");
        indexed.push((index, parse_source(index, line, &raw)?));
    }
    indexed.sort_by_key(|(i, _)| *i);
    kv.finish()?;

    let spec = StimulusSpec {
        resolution,
        sources: indexed.into_iter().map(|(_, s)| s).collect(),
        noise_rate_hz,
        duration,
        seed,
    };
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(spec)
}
