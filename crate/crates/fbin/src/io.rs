//! On-disk artifact formats.
//!
//! Every pipeline stage reads and writes plain files so that runs are
//! scriptable and reproducible byte for byte:
//!
//! * **Time tags** — the raw detector record. Binary layout: a 16-byte
//!   header (8-byte magic [`TAG_MAGIC`], little-endian u64
//!   [`FORMAT_VERSION`]) followed by 9-byte records of `u8` channel and
//!   little-endian `u64` timestamp in picoseconds. A CSV twin
//!   (`channel,timestamp_ps`) exists for spreadsheets and quick inspection.
//! * **Coincidence histograms** — the 2-D detection-time grid. Binary
//!   layout: an 8-byte magic [`HISTOGRAM_MAGIC`], u64 version, the geometry
//!   as little-endian 64-bit values (`bin_width`, both axis origins as
//!   `f64`; rows and columns as `u64`), then row-major little-endian `u32`
//!   counts. The CSV twin lists every bin center with its value and works
//!   for weighted (background-subtracted) grids too.
//! * **Configs** — plain-text `key = value` files mirroring the field names
//!   of [`SourceConfig`], [`NoiseConfig`], [`ChannelModel`] and
//!   [`FwiDesign`]. Blank lines and `#` comments are ignored; unknown or
//!   repeated keys are errors (they are always typos); omitted keys keep
//!   their defaults.
//! * **Reports** — pretty-printed JSON of any serializable result type
//!   (fits, certificates, tomography output, design solutions).
//!
//! Binary readers validate magic, version and payload size and fail with
//! [`Error::Format`] rather than guessing; all numbers are little-endian on
//! every platform. Problems in `key = value` files are [`Error::Config`]
//! instead — they describe the run, not the data.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fwi::{ArmSegment, FwiDesign};
use crate::jti::{JtiGrid, JtiHistogram, SourceConfig};
use crate::sim::{ChannelModel, NoiseConfig, TimeTag, TimeTagStream};

/// Magic bytes opening a binary time-tag file.
pub const TAG_MAGIC: &[u8; 8] = b"FBINTAG\0";
/// Magic bytes opening a binary histogram file.
pub const HISTOGRAM_MAGIC: &[u8; 8] = b"FBINJTI\0";
/// Version written into (and required from) the binary headers.
pub const FORMAT_VERSION: u64 = 1;

// ---------------------------------------------------------------------------
// Time tags
// ---------------------------------------------------------------------------

/// Writes a tag stream in the binary time-tag format.
pub fn write_tags_binary(path: &Path, tags: &TimeTagStream) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(TAG_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    for tag in tags.tags() {
        w.write_all(&[tag.channel])?;
        w.write_all(&tag.time_ps.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a binary time-tag file.
pub fn read_tags_binary(path: &Path) -> Result<TimeTagStream> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("time-tag file shorter than its header".into()))?;
    if &magic != TAG_MAGIC {
        return Err(Error::Format(format!(
            "not a time-tag file: magic {magic:?} (expected {TAG_MAGIC:?})"
        )));
    }
    let version = read_u64(&mut r, "time-tag header version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported time-tag format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() % 9 != 0 {
        return Err(Error::Format(format!(
            "time-tag payload of {} bytes is not a whole number of 9-byte records",
            payload.len()
        )));
    }
    let tags = payload
        .chunks_exact(9)
        .map(|rec| TimeTag {
            channel: rec[0],
            time_ps: u64::from_le_bytes(rec[1..9].try_into().unwrap()),
        })
        .collect();
    Ok(TimeTagStream::new(tags))
}

/// Writes a tag stream as `channel,timestamp_ps` CSV.
pub fn write_tags_csv(path: &Path, tags: &TimeTagStream) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "channel,timestamp_ps")?;
    for tag in tags.tags() {
        writeln!(w, "{},{}", tag.channel, tag.time_ps)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `channel,timestamp_ps` CSV (header line optional).
pub fn read_tags_csv(path: &Path) -> Result<TimeTagStream> {
    let r = BufReader::new(File::open(path)?);
    let mut tags = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (idx == 0 && line.eq_ignore_ascii_case("channel,timestamp_ps")) {
            continue;
        }
        let (ch, ts) = line.split_once(',').ok_or_else(|| {
            Error::Format(format!("line {}: expected 'channel,timestamp_ps'", idx + 1))
        })?;
        let channel: u8 = ch
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("line {}: bad channel {ch:?}", idx + 1)))?;
        let time_ps: u64 = ts
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("line {}: bad timestamp {ts:?}", idx + 1)))?;
        tags.push(TimeTag { channel, time_ps });
    }
    Ok(TimeTagStream::new(tags))
}

// ---------------------------------------------------------------------------
// Histograms
// ---------------------------------------------------------------------------

/// Writes a histogram in the binary layout.
pub fn write_histogram_binary(path: &Path, hist: &JtiHistogram) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(HISTOGRAM_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&hist.bin_width().to_le_bytes())?;
    w.write_all(&hist.t0_s().to_le_bytes())?;
    w.write_all(&hist.t0_i().to_le_bytes())?;
    let (rows, cols) = hist.dims();
    w.write_all(&(rows as u64).to_le_bytes())?;
    w.write_all(&(cols as u64).to_le_bytes())?;
    for &count in hist.counts() {
        w.write_all(&count.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a binary histogram file.
pub fn read_histogram_binary(path: &Path) -> Result<JtiHistogram> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("histogram file shorter than its header".into()))?;
    if &magic != HISTOGRAM_MAGIC {
        return Err(Error::Format(format!(
            "not a histogram file: magic {magic:?} (expected {HISTOGRAM_MAGIC:?})"
        )));
    }
    let version = read_u64(&mut r, "histogram header version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported histogram format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let bin_width = f64::from_bits(read_u64(&mut r, "histogram bin width")?);
    let t0_s = f64::from_bits(read_u64(&mut r, "histogram signal origin")?);
    let t0_i = f64::from_bits(read_u64(&mut r, "histogram idler origin")?);
    let rows = read_u64(&mut r, "histogram row count")? as usize;
    let cols = read_u64(&mut r, "histogram column count")? as usize;
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format("histogram dimensions overflow".into()))?;
    let mut payload = vec![0u8; n * 4];
    r.read_exact(&mut payload)
        .map_err(|_| Error::Format("histogram payload shorter than rows × cols counts".into()))?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format(
            "histogram file has trailing bytes after the counts payload".into(),
        ));
    }
    let counts = payload
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    JtiHistogram::from_counts(bin_width, t0_s, t0_i, rows, cols, counts)
}

/// Writes any 2-D grid (raw or weighted) as `ts_s,ti_s,value` CSV covering
/// every bin.
pub fn write_grid_csv(path: &Path, grid: &impl JtiGrid) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "ts_s,ti_s,value")?;
    let (rows, cols) = grid.dims();
    for r in 0..rows {
        for c in 0..cols {
            let ts = grid.t0_s() + (r as f64 + 0.5) * grid.bin_width();
            let ti = grid.t0_i() + (c as f64 + 0.5) * grid.bin_width();
            writeln!(w, "{:e},{:e},{}", ts, ti, grid.value(r, c))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes a generic plot-ready CSV: one header line, then one line per row
/// with the values joined by commas.
pub fn write_csv<I>(path: &Path, header: &str, rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{header}")?;
    for row in rows {
        let line = row
            .iter()
            .map(|v| format!("{v}"))
            .collect::<Vec<_>>()
            .join(",");
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Key-value configs
// ---------------------------------------------------------------------------

/// The full run configuration: source physics, noise model and detection
/// channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Pair-source parameters.
    pub source: SourceConfig,
    /// Detector and background noise.
    pub noise: NoiseConfig,
    /// Efficiencies and demultiplexer quality.
    pub channels: ChannelModel,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            source: SourceConfig::default_source(),
            noise: NoiseConfig::default_noise(),
            channels: ChannelModel::default_channels(),
        }
    }
}

impl RunConfig {
    /// Validates all three sections.
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.noise.validate()?;
        self.channels.validate()
    }
}

/// Parses a `key = value` file into a map, rejecting repeated keys.
fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected 'key = value', got {raw:?}", idx + 1))
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if map.insert(key.clone(), value).is_some() {
            return Err(Error::Config(format!(
                "line {}: key {key:?} given more than once",
                idx + 1
            )));
        }
    }
    Ok(map)
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("key {key:?}: {value:?} is not a number")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("key {key:?}: {value:?} is not true/false")))
}

/// Reads a run configuration. Omitted keys keep their defaults; unknown
/// keys are rejected.
pub fn read_run_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let map = parse_kv(&text)?;
    let mut cfg = RunConfig::default();
    for (key, value) in &map {
        apply_run_config_key(&mut cfg, key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Sets one configuration field by its file key. Used both by the file
/// reader and by command-line `key=value` overrides, so the key vocabulary
/// is identical in both places.
pub fn apply_run_config_key(cfg: &mut RunConfig, key: &str, value: &str) -> Result<()> {
    {
        match key {
            "delta_omega" => cfg.source.delta_omega = parse_f64(key, value)?,
            "gamma" => cfg.source.gamma = parse_f64(key, value)?,
            "theta" => cfg.source.theta = parse_f64(key, value)?,
            "pair_rate" => cfg.source.pair_rate = parse_f64(key, value)?,
            "window" => cfg.source.window = parse_f64(key, value)?,
            "jitter_fwhm_signal" => cfg.noise.jitter_fwhm_signal = parse_f64(key, value)?,
            "jitter_fwhm_idler" => cfg.noise.jitter_fwhm_idler = parse_f64(key, value)?,
            "dark_rate_signal" => cfg.noise.dark_rate_signal = parse_f64(key, value)?,
            "dark_rate_idler" => cfg.noise.dark_rate_idler = parse_f64(key, value)?,
            "accidental_fraction" => cfg.noise.accidental_fraction = parse_f64(key, value)?,
            "accidental_window" => cfg.noise.accidental_window = parse_f64(key, value)?,
            "pump_leak_fraction" => cfg.noise.pump_leak_fraction = parse_f64(key, value)?,
            "phase_diffusion" => cfg.noise.phase_diffusion = parse_f64(key, value)?,
            "eta_signal" => cfg.channels.eta_signal = parse_f64(key, value)?,
            "eta_idler" => cfg.channels.eta_idler = parse_f64(key, value)?,
            "z_port_efficiency" => {
                let vals: Vec<f64> = value
                    .split([',', ' '])
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_f64(key, s))
                    .collect::<Result<_>>()?;
                if vals.len() != 4 {
                    return Err(Error::Config(format!(
                        "key {key:?}: expected 4 values (signal port 0, signal port 1, \
                         idler port 0, idler port 1), got {}",
                        vals.len()
                    )));
                }
                cfg.channels.z_port_efficiency = [[vals[0], vals[1]], [vals[2], vals[3]]];
            }
            "demux_visibility_signal" => {
                cfg.channels.demux_visibility_signal = parse_f64(key, value)?
            }
            "demux_visibility_idler" => {
                cfg.channels.demux_visibility_idler = parse_f64(key, value)?
            }
            _ => {
                return Err(Error::Config(format!(
                    "unknown configuration key {key:?}"
                )))
            }
        }
    }
    Ok(())
}

/// Writes a run configuration with every key explicit.
pub fn write_run_config(path: &Path, cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# pair source")?;
    writeln!(w, "delta_omega = {:e}", cfg.source.delta_omega)?;
    writeln!(w, "gamma = {:e}", cfg.source.gamma)?;
    writeln!(w, "theta = {}", cfg.source.theta)?;
    writeln!(w, "pair_rate = {:e}", cfg.source.pair_rate)?;
    writeln!(w, "window = {:e}", cfg.source.window)?;
    writeln!(w)?;
    writeln!(w, "# detectors and backgrounds")?;
    writeln!(w, "jitter_fwhm_signal = {:e}", cfg.noise.jitter_fwhm_signal)?;
    writeln!(w, "jitter_fwhm_idler = {:e}", cfg.noise.jitter_fwhm_idler)?;
    writeln!(w, "dark_rate_signal = {:e}", cfg.noise.dark_rate_signal)?;
    writeln!(w, "dark_rate_idler = {:e}", cfg.noise.dark_rate_idler)?;
    writeln!(w, "accidental_fraction = {}", cfg.noise.accidental_fraction)?;
    writeln!(w, "accidental_window = {:e}", cfg.noise.accidental_window)?;
    writeln!(w, "pump_leak_fraction = {}", cfg.noise.pump_leak_fraction)?;
    writeln!(w, "phase_diffusion = {:e}", cfg.noise.phase_diffusion)?;
    writeln!(w)?;
    writeln!(w, "# detection channels")?;
    writeln!(w, "eta_signal = {}", cfg.channels.eta_signal)?;
    writeln!(w, "eta_idler = {}", cfg.channels.eta_idler)?;
    let z = &cfg.channels.z_port_efficiency;
    writeln!(
        w,
        "z_port_efficiency = {} {} {} {}",
        z[0][0], z[0][1], z[1][0], z[1][1]
    )?;
    writeln!(
        w,
        "demux_visibility_signal = {}",
        cfg.channels.demux_visibility_signal
    )?;
    writeln!(
        w,
        "demux_visibility_idler = {}",
        cfg.channels.demux_visibility_idler
    )?;
    w.flush()?;
    Ok(())
}

fn parse_arm(key: &str, value: &str) -> Result<Vec<ArmSegment>> {
    let mut segments = Vec::new();
    for part in value.split([',', ' ']).filter(|s| !s.is_empty()) {
        let (len, idx) = part.split_once(':').ok_or_else(|| {
            Error::Config(format!(
                "key {key:?}: segment {part:?} must be 'length:index'"
            ))
        })?;
        segments.push(ArmSegment::new(parse_f64(key, len)?, parse_f64(key, idx)?)?);
    }
    Ok(segments)
}

/// Reads an interferometer design from a `key = value` file with
/// `long_arm`/`short_arm` as space-separated `length:index` segments.
pub fn read_fwi_design(path: &Path) -> Result<FwiDesign> {
    let text = std::fs::read_to_string(path)?;
    let map = parse_kv(&text)?;
    let mut long_arm = Vec::new();
    let mut short_arm = Vec::new();
    let mut double_pass = false;
    let mut input_index = 1.0;
    for (key, value) in &map {
        match key.as_str() {
            "long_arm" => long_arm = parse_arm(key, value)?,
            "short_arm" => short_arm = parse_arm(key, value)?,
            "double_pass" => double_pass = parse_bool(key, value)?,
            "input_index" => input_index = parse_f64(key, value)?,
            _ => {
                return Err(Error::Config(format!(
                    "unknown design key {key:?}"
                )))
            }
        }
    }
    FwiDesign::new(long_arm, short_arm, double_pass, input_index)
}

/// Writes an interferometer design in the key-value format.
pub fn write_fwi_design(path: &Path, design: &FwiDesign) -> Result<()> {
    design.validate()?;
    let arm_text = |segments: &[ArmSegment]| {
        segments
            .iter()
            .map(|s| format!("{}:{}", s.length, s.index))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "long_arm = {}", arm_text(&design.long_arm))?;
    writeln!(w, "short_arm = {}", arm_text(&design.short_arm))?;
    writeln!(w, "double_pass = {}", design.double_pass)?;
    writeln!(w, "input_index = {}", design.input_index)?;
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// JSON reports
// ---------------------------------------------------------------------------

/// Writes any serializable value as pretty-printed JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| Error::Format(format!("JSON encoding failed: {e}")))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Reads a JSON file into any deserializable type.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let r = BufReader::new(File::open(path)?);
    serde_json::from_reader(r).map_err(|e| Error::Format(format!("JSON decoding failed: {e}")))
}

fn read_u64(r: &mut impl Read, what: &str) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format(format!("file ends inside {what}")))?;
    Ok(u64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::path::PathBuf;

    fn scratch(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("fbin-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn sample_stream() -> TimeTagStream {
        TimeTagStream::new(vec![
            TimeTag {
                channel: 1,
                time_ps: 17,
            },
            TimeTag {
                channel: 0,
                time_ps: 5,
            },
            TimeTag {
                channel: 0,
                time_ps: 1_234_567_890_123,
            },
        ])
    }

    #[test]
    fn tags_binary_round_trips() {
        let path = scratch("tags.bin");
        let stream = sample_stream();
        write_tags_binary(&path, &stream).unwrap();
        let back = read_tags_binary(&path).unwrap();
        assert_eq!(back.tags(), stream.tags());

        let empty = TimeTagStream::new(Vec::new());
        write_tags_binary(&path, &empty).unwrap();
        assert!(read_tags_binary(&path).unwrap().is_empty());
    }

    #[test]
    fn tags_binary_rejects_corruption() {
        let path = scratch("tags-corrupt.bin");
        write_tags_binary(&path, &sample_stream()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();

        let truncated = scratch("tags-truncated.bin");
        std::fs::write(&truncated, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            read_tags_binary(&truncated),
            Err(Error::Format(_))
        ));

        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_tags_binary(&path), Err(Error::Format(_))));

        let short = scratch("tags-short.bin");
        std::fs::write(&short, b"FBIN").unwrap();
        assert!(matches!(read_tags_binary(&short), Err(Error::Format(_))));
    }

    #[test]
    fn tags_csv_round_trips() {
        let path = scratch("tags.csv");
        let stream = sample_stream();
        write_tags_csv(&path, &stream).unwrap();
        let back = read_tags_csv(&path).unwrap();
        assert_eq!(back.tags(), stream.tags());

        let bad = scratch("tags-bad.csv");
        std::fs::write(&bad, "channel,timestamp_ps\n0,notanumber\n").unwrap();
        assert!(matches!(read_tags_csv(&bad), Err(Error::Format(_))));
    }

    #[test]
    fn histogram_binary_round_trips() {
        let path = scratch("hist.bin");
        let mut hist = JtiHistogram::new(10e-12, 1e-9, 2e-9, 4, 3).unwrap();
        hist.accumulate(1.015e-9, 2.005e-9);
        hist.accumulate(1.035e-9, 2.025e-9);
        hist.accumulate(1.035e-9, 2.025e-9);
        write_histogram_binary(&path, &hist).unwrap();
        let back = read_histogram_binary(&path).unwrap();
        assert_eq!(back.counts(), hist.counts());
        assert_eq!(back.dims(), hist.dims());
        assert_eq!(back.bin_width(), hist.bin_width());
        assert_eq!(back.t0_s(), hist.t0_s());
        assert_eq!(back.t0_i(), hist.t0_i());
    }

    #[test]
    fn histogram_binary_rejects_corruption() {
        let path = scratch("hist-corrupt.bin");
        let hist = JtiHistogram::new(10e-12, 0.0, 0.0, 2, 2).unwrap();
        write_histogram_binary(&path, &hist).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();

        let truncated = scratch("hist-truncated.bin");
        std::fs::write(&truncated, &bytes[..bytes.len() - 2]).unwrap();
        assert!(matches!(
            read_histogram_binary(&truncated),
            Err(Error::Format(_))
        ));

        let trailing = scratch("hist-trailing.bin");
        let mut padded = bytes.clone();
        padded.push(0);
        std::fs::write(&trailing, &padded).unwrap();
        assert!(matches!(
            read_histogram_binary(&trailing),
            Err(Error::Format(_))
        ));

        bytes[2] = b'?';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_histogram_binary(&path),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn grid_csv_lists_every_bin() {
        let path = scratch("grid.csv");
        let mut hist = JtiHistogram::new(10e-12, 0.0, 0.0, 3, 2).unwrap();
        hist.accumulate(5e-12, 15e-12);
        write_grid_csv(&path, &hist).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 3 * 2);
        assert_eq!(lines[0], "ts_s,ti_s,value");
        // The filled bin (row 0, col 1) carries its center and the count.
        let filled: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(filled[2], "1");
    }

    #[test]
    fn run_config_round_trips_and_validates() {
        let path = scratch("run.cfg");
        let mut cfg = RunConfig::default();
        cfg.source.theta = 0.25;
        cfg.noise.accidental_fraction = 0.1;
        cfg.channels.demux_visibility_signal = 0.9;
        write_run_config(&path, &cfg).unwrap();
        let back = read_run_config(&path).unwrap();
        assert_eq!(back, cfg);

        // Omitted keys keep defaults.
        let partial = scratch("partial.cfg");
        std::fs::write(&partial, "theta = 1.5\n\n# comment\npair_rate = 2e5\n").unwrap();
        let cfg = read_run_config(&partial).unwrap();
        assert_eq!(cfg.source.theta, 1.5);
        assert_eq!(cfg.source.pair_rate, 2e5);
        assert_eq!(cfg.noise, NoiseConfig::default_noise());

        let unknown = scratch("unknown.cfg");
        std::fs::write(&unknown, "tehta = 1.5\n").unwrap();
        assert!(matches!(read_run_config(&unknown), Err(Error::Config(_))));

        let dup = scratch("dup.cfg");
        std::fs::write(&dup, "theta = 1\ntheta = 2\n").unwrap();
        assert!(matches!(read_run_config(&dup), Err(Error::Config(_))));

        let invalid = scratch("invalid.cfg");
        std::fs::write(&invalid, "gamma = -3\n").unwrap();
        assert!(matches!(read_run_config(&invalid), Err(Error::Config(_))));
    }

    #[test]
    fn single_key_overrides_use_the_file_vocabulary() {
        let mut cfg = RunConfig::default();
        apply_run_config_key(&mut cfg, "theta", "0.75").unwrap();
        assert_eq!(cfg.source.theta, 0.75);
        apply_run_config_key(&mut cfg, "z_port_efficiency", "0.1 0.2 0.3 0.4").unwrap();
        assert_eq!(cfg.channels.z_port_efficiency, [[0.1, 0.2], [0.3, 0.4]]);
        assert!(apply_run_config_key(&mut cfg, "no_such_key", "1").is_err());
    }

    #[test]
    fn fwi_design_round_trips() {
        let path = scratch("design.cfg");
        let design = FwiDesign::new(
            vec![
                ArmSegment::new(0.02, 1.0).unwrap(),
                ArmSegment::new(0.10, 1.5007).unwrap(),
            ],
            vec![ArmSegment::new(0.0785, 1.0).unwrap()],
            true,
            1.0,
        )
        .unwrap();
        write_fwi_design(&path, &design).unwrap();
        let back = read_fwi_design(&path).unwrap();
        assert_eq!(back, design);

        let bad = scratch("design-bad.cfg");
        std::fs::write(&bad, "long_arm = 0.02\n").unwrap();
        assert!(matches!(read_fwi_design(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn json_round_trips() {
        let path = scratch("report.json");
        let cfg = SourceConfig::default_source();
        write_json(&path, &cfg).unwrap();
        let back: SourceConfig = read_json(&path).unwrap();
        assert_eq!(back, cfg);

        let garbled = scratch("garbled.json");
        std::fs::write(&garbled, "{not json").unwrap();
        assert!(matches!(
            read_json::<SourceConfig>(&garbled),
            Err(Error::Format(_))
        ));
    }

    proptest! {
        #[test]
        fn arbitrary_tag_streams_round_trip(
            raw in proptest::collection::vec((0u8..4, 0u64..1u64 << 48), 0..200)
        ) {
            let tags: Vec<TimeTag> = raw
                .iter()
                .map(|&(channel, time_ps)| TimeTag { channel, time_ps })
                .collect();
            let stream = TimeTagStream::new(tags);
            let path = scratch(&format!(
                "prop-{:x}.bin",
                raw.iter().map(|&(c, t)| t ^ c as u64).sum::<u64>()
            ));
            write_tags_binary(&path, &stream).unwrap();
            let back = read_tags_binary(&path).unwrap();
            prop_assert_eq!(back.tags(), stream.tags());
            std::fs::remove_file(&path).ok();
        }
    }
}
