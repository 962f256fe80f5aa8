//! CSI data model, CSV ingestion, windowing, synthetic generation, and
//! packet-loss simulation.
//!
//! A capture is modelled on a fixed slot grid: at a nominal rate of `r` Hz,
//! slot `k` covers the half-open interval `[k/r, (k+1)/r)` seconds. A slot
//! with no received packet is a *pad* slot: it carries a zero sentinel vector
//! and the nominal slot-start timestamp, and is never read as data — pad
//! semantics come solely from `pad_mask`.
//!
//! CSV interchange format (one file per capture):
//!
//! ```text
//! timestamp_ms,sc_0,...,sc_{d-1}[,label]
//! 0,23.1,24.8,...
//! 10,22.9,24.6,...
//! ```
//!
//! Rows for lost packets are simply absent.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::{self, tag};

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// One received CSI frame: capture-relative timestamp plus the per-subcarrier
/// amplitude vector (linear scale).
#[derive(Debug, Clone, PartialEq)]
pub struct CsiFrame {
    /// Milliseconds since capture start.
    pub timestamp_ms: f64,
    /// Subcarrier amplitudes; fixed dimension `d` across a dataset.
    pub values: Vec<f64>,
}

/// A fixed-grid CSI sequence.
///
/// `frames.len() == pad_mask.len()`; `pad_mask[k]` is true when slot `k` has
/// no received packet. Pad frames carry the zero sentinel and the nominal
/// slot-start timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiSequence {
    pub frames: Vec<CsiFrame>,
    pub pad_mask: Vec<bool>,
    pub dim: usize,
    pub nominal_rate_hz: f64,
}

impl CsiSequence {
    /// Number of slots.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Nominal start of slot `k`, in milliseconds.
    pub fn slot_start_ms(&self, k: usize) -> f64 {
        k as f64 / self.nominal_rate_hz * 1000.0
    }

    /// Indices of slots that carry data.
    pub fn non_pad_indices(&self) -> Vec<usize> {
        self.pad_mask
            .iter()
            .enumerate()
            .filter(|(_, &p)| !p)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn observed_count(&self) -> usize {
        self.pad_mask.iter().filter(|&&p| !p).count()
    }

    /// Fraction of pad slots.
    pub fn loss_rate(&self) -> f64 {
        if self.frames.is_empty() {
            return 0.0;
        }
        let pads = self.len() - self.observed_count();
        pads as f64 / self.len() as f64
    }

    /// Dense `n x d` value matrix (pad slots contribute the sentinel).
    pub fn values_matrix(&self) -> Array2<f64> {
        let n = self.len();
        let mut m = Array2::zeros((n, self.dim));
        for (i, f) in self.frames.iter().enumerate() {
            for (j, &v) in f.values.iter().enumerate() {
                m[[i, j]] = v;
            }
        }
        m
    }

    pub fn timestamps_ms(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.timestamp_ms).collect()
    }

    /// Build a sequence from a dense matrix, reusing grid timestamps.
    pub fn from_matrix(
        values: &Array2<f64>,
        timestamps_ms: &[f64],
        pad_mask: Vec<bool>,
        nominal_rate_hz: f64,
    ) -> Self {
        let (n, d) = values.dim();
        assert_eq!(n, timestamps_ms.len());
        assert_eq!(n, pad_mask.len());
        let frames = (0..n)
            .map(|i| CsiFrame {
                timestamp_ms: timestamps_ms[i],
                values: values.row(i).to_vec(),
            })
            .collect();
        CsiSequence {
            frames,
            pad_mask,
            dim: d,
            nominal_rate_hz,
        }
    }

    /// Check structural invariants; used by loaders and tests.
    pub fn validate(&self) -> Result<()> {
        if self.frames.len() != self.pad_mask.len() {
            return Err(Error::InvalidInput(format!(
                "frames ({}) and pad_mask ({}) length mismatch",
                self.frames.len(),
                self.pad_mask.len()
            )));
        }
        let mut prev_ts = f64::NEG_INFINITY;
        for (i, f) in self.frames.iter().enumerate() {
            if f.values.len() != self.dim {
                return Err(Error::InvalidInput(format!(
                    "frame {} has dim {} (expected {})",
                    i,
                    f.values.len(),
                    self.dim
                )));
            }
            if !f.timestamp_ms.is_finite() || f.timestamp_ms < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "frame {} has invalid timestamp {}",
                    i, f.timestamp_ms
                )));
            }
            if !self.pad_mask[i] {
                if f.timestamp_ms <= prev_ts {
                    return Err(Error::InvalidInput(format!(
                        "timestamps not strictly increasing at slot {}",
                        i
                    )));
                }
                prev_ts = f.timestamp_ms;
            }
        }
        Ok(())
    }
}

/// How deleted slots are distributed by [`simulate_loss`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossModel {
    /// Each deletion drawn independently and uniformly.
    Iid,
    /// Deletions arrive in runs of geometric length (mean `burst_mean_len`).
    Bursty,
}

/// Configuration for [`synth_generate`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Subcarrier count per frame.
    pub d: usize,
    /// Slots per generated sequence.
    pub n: usize,
    /// Nominal sampling rate.
    pub rate_hz: f64,
    pub num_sequences: usize,
    /// Mean per-sequence loss rate in `[0, 1]`.
    pub loss_rate_mean: f64,
    pub loss_model: LossModel,
    /// Mean run length for [`LossModel::Bursty`].
    pub burst_mean_len: f64,
    /// Std of the additive Gaussian measurement noise.
    pub noise_std: f64,
    pub seed: u64,
    /// Number of signal classes (label = sequence index mod classes). Class
    /// shifts the latent tone band so a downstream classifier has something
    /// to find; 1 means unlabeled.
    pub num_classes: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            d: 52,
            n: 100,
            rate_hz: 100.0,
            num_sequences: 64,
            loss_rate_mean: 0.1451,
            loss_model: LossModel::Iid,
            burst_mean_len: 3.0,
            noise_std: 0.5,
            seed: 0,
            num_classes: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 {
            return Err(Error::Config("d and n must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.loss_rate_mean) {
            return Err(Error::Config(format!(
                "loss_rate_mean {} outside [0,1]",
                self.loss_rate_mean
            )));
        }
        if self.rate_hz <= 0.0 {
            return Err(Error::Config("rate_hz must be positive".into()));
        }
        if self.burst_mean_len < 1.0 {
            return Err(Error::Config("burst_mean_len must be >= 1".into()));
        }
        if self.noise_std < 0.0 {
            return Err(Error::Config("noise_std must be >= 0".into()));
        }
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be >= 1".into()));
        }
        Ok(())
    }
}

/// Aggregated per-window loss rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub mean: f64,
    pub max: f64,
    pub min: f64,
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Round half up; mask/deletion counts use this for cross-platform
/// determinism.
pub(crate) fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// A parsed CSV capture: the whole-file sequence plus the optional label
/// column value.
#[derive(Debug, Clone)]
pub struct LoadedCsv {
    pub seq: CsiSequence,
    pub label: Option<u32>,
}

/// Load one capture CSV onto the slot grid at `rate_hz`.
///
/// Frames are snapped to the slot covering their timestamp; empty slots are
/// marked pad. A malformed row rejects the whole file with its row number; a
/// duplicate slot keeps the first frame and warns.
pub fn load_csv(path: &Path, rate_hz: f64) -> Result<LoadedCsv> {
    if rate_hz <= 0.0 {
        return Err(Error::Config("rate_hz must be positive".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::CsvFormat {
            path: path.into(),
            row: 0,
            msg: e.to_string(),
        })?
        .clone();
    let (dim, has_label) = parse_header(&headers, path)?;

    let mut slots: BTreeMap<usize, CsiFrame> = BTreeMap::new();
    let mut label: Option<u32> = None;
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| Error::CsvFormat {
            path: path.into(),
            row,
            msg: e.to_string(),
        })?;
        let expected = 1 + dim + usize::from(has_label);
        if record.len() != expected {
            return Err(Error::CsvFormat {
                path: path.into(),
                row,
                msg: format!("expected {} fields, found {}", expected, record.len()),
            });
        }
        let ts: f64 = parse_field(&record[0], path, row, "timestamp_ms")?;
        if !ts.is_finite() || ts < 0.0 {
            return Err(Error::CsvFormat {
                path: path.into(),
                row,
                msg: format!("timestamp_ms {} is not finite and non-negative", ts),
            });
        }
        let mut values = Vec::with_capacity(dim);
        for j in 0..dim {
            let v: f64 = parse_field(&record[1 + j], path, row, &format!("sc_{}", j))?;
            if !v.is_finite() {
                return Err(Error::CsvFormat {
                    path: path.into(),
                    row,
                    msg: format!("sc_{} is not finite", j),
                });
            }
            values.push(v);
        }
        if has_label {
            let l: u32 = record[1 + dim].parse().map_err(|_| Error::CsvFormat {
                path: path.into(),
                row,
                msg: format!("label '{}' is not an integer", &record[1 + dim]),
            })?;
            match label {
                None => label = Some(l),
                Some(prev) if prev != l => {
                    log::warn!(
                        "{}: row {} label {} differs from first label {}; keeping first",
                        path.display(),
                        row,
                        l,
                        prev
                    );
                }
                _ => {}
            }
        }
        // Epsilon nudge: frames at exact slot boundaries must not fall into
        // the previous slot through float representation error.
        let slot = (ts * rate_hz / 1000.0 + 1e-9).floor() as usize;
        if slots.contains_key(&slot) {
            log::warn!(
                "{}: row {} duplicates slot {}; keeping first",
                path.display(),
                row,
                slot
            );
            continue;
        }
        slots.insert(
            slot,
            CsiFrame {
                timestamp_ms: ts,
                values,
            },
        );
    }

    if slots.is_empty() {
        return Err(Error::CsvFormat {
            path: path.into(),
            row: 0,
            msg: "file contains no data rows".into(),
        });
    }

    let n = *slots.keys().next_back().unwrap() + 1;
    let mut frames = Vec::with_capacity(n);
    let mut pad_mask = Vec::with_capacity(n);
    for k in 0..n {
        match slots.remove(&k) {
            Some(f) => {
                frames.push(f);
                pad_mask.push(false);
            }
            None => {
                frames.push(CsiFrame {
                    timestamp_ms: k as f64 / rate_hz * 1000.0,
                    values: vec![0.0; dim],
                });
                pad_mask.push(true);
            }
        }
    }
    let seq = CsiSequence {
        frames,
        pad_mask,
        dim,
        nominal_rate_hz: rate_hz,
    };
    seq.validate()?;
    Ok(LoadedCsv { seq, label })
}

fn parse_header(headers: &csv::StringRecord, path: &Path) -> Result<(usize, bool)> {
    let cols: Vec<&str> = headers.iter().collect();
    if cols.first() != Some(&"timestamp_ms") {
        return Err(Error::CsvFormat {
            path: path.into(),
            row: 0,
            msg: "first column must be timestamp_ms".into(),
        });
    }
    let has_label = cols.last() == Some(&"label");
    let sc_cols = &cols[1..cols.len() - usize::from(has_label)];
    if sc_cols.is_empty() {
        return Err(Error::CsvFormat {
            path: path.into(),
            row: 0,
            msg: "no subcarrier columns".into(),
        });
    }
    for (j, c) in sc_cols.iter().enumerate() {
        let expected = format!("sc_{}", j);
        if *c != expected {
            return Err(Error::CsvFormat {
                path: path.into(),
                row: 0,
                msg: format!("expected column '{}', found '{}'", expected, c),
            });
        }
    }
    Ok((sc_cols.len(), has_label))
}

fn parse_field(s: &str, path: &Path, row: usize, col: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::CsvFormat {
        path: path.into(),
        row,
        msg: format!("{} '{}' is not a number", col, s),
    })
}

/// Write a sequence in the interchange format: observed rows only (lost
/// packets are absent), shortest-roundtrip float formatting so reruns are
/// byte-identical.
pub fn write_csv(path: &Path, seq: &CsiSequence, label: Option<u32>) -> Result<()> {
    let mut out = String::new();
    out.push_str("timestamp_ms");
    for j in 0..seq.dim {
        out.push_str(&format!(",sc_{}", j));
    }
    if label.is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    for (i, f) in seq.frames.iter().enumerate() {
        if seq.pad_mask[i] {
            continue;
        }
        out.push_str(&format!("{}", f.timestamp_ms));
        for v in &f.values {
            out.push_str(&format!(",{}", v));
        }
        if let Some(l) = label {
            out.push_str(&format!(",{}", l));
        }
        out.push('\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Split into non-overlapping windows of exactly `length` slots; the trailing
/// partial window is dropped.
pub fn window(seq: &CsiSequence, length: usize) -> Vec<CsiSequence> {
    assert!(length > 0, "window length must be positive");
    let full = seq.len() / length;
    (0..full)
        .map(|w| {
            let lo = w * length;
            let hi = lo + length;
            CsiSequence {
                frames: seq.frames[lo..hi].to_vec(),
                pad_mask: seq.pad_mask[lo..hi].to_vec(),
                dim: seq.dim,
                nominal_rate_hz: seq.nominal_rate_hz,
            }
        })
        .collect()
}

/// Mark `round(rate * observed)` additional slots as pad.
///
/// Only currently observed slots are eligible; the caller keeps the input as
/// ground truth for scoring. Deleted slots take the sentinel value vector and
/// the nominal slot timestamp.
pub fn simulate_loss(
    seq: &CsiSequence,
    rate: f64,
    model: LossModel,
    seed: u64,
) -> Result<CsiSequence> {
    simulate_loss_with_burst(seq, rate, model, 3.0, seed)
}

/// Like [`simulate_loss`] but with an explicit burst mean (used by synth).
fn simulate_loss_with_burst(
    seq: &CsiSequence,
    rate: f64,
    model: LossModel,
    burst_mean_len: f64,
    seed: u64,
) -> Result<CsiSequence> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidInput(format!(
            "loss rate {} outside [0,1)",
            rate
        )));
    }
    let non_pad = seq.non_pad_indices();
    let count = round_half_up(rate * non_pad.len() as f64);
    let mut out = seq.clone();
    if count == 0 {
        return Ok(out);
    }
    let mut rng = seeding::rng(seed);
    let chosen: Vec<usize> = match model {
        LossModel::Iid => rand::seq::index::sample(&mut rng, non_pad.len(), count)
            .into_iter()
            .map(|i| non_pad[i])
            .collect(),
        LossModel::Bursty => bursty_positions(&mut rng, seq, &non_pad, count, burst_mean_len),
    };
    for slot in chosen {
        out.pad_mask[slot] = true;
        out.frames[slot] = CsiFrame {
            timestamp_ms: out.slot_start_ms(slot),
            values: vec![0.0; out.dim],
        };
    }
    Ok(out)
}

/// Pick `count` distinct non-pad slots in geometric-length runs.
fn bursty_positions(
    rng: &mut rand_chacha::ChaCha8Rng,
    seq: &CsiSequence,
    non_pad: &[usize],
    count: usize,
    burst_mean_len: f64,
) -> Vec<usize> {
    let mut deleted = vec![false; seq.len()];
    let mut chosen = Vec::with_capacity(count);
    // P(success) for the geometric run length; mean length = burst_mean_len.
    let p = (1.0 / burst_mean_len.max(1.0)).clamp(1e-6, 1.0);
    while chosen.len() < count {
        let candidates: Vec<usize> = non_pad
            .iter()
            .copied()
            .filter(|&s| !deleted[s])
            .collect();
        if candidates.is_empty() {
            break;
        }
        let start = candidates[rng.random_range(0..candidates.len())];
        let run_len = if p >= 1.0 {
            1
        } else {
            let u: f64 = rng.random();
            1 + ((1.0 - u).ln() / (1.0 - p).ln()).floor() as usize
        };
        let mut covered = 0;
        let mut slot = start;
        while covered < run_len && slot < seq.len() && chosen.len() < count {
            if !seq.pad_mask[slot] && !deleted[slot] {
                deleted[slot] = true;
                chosen.push(slot);
            }
            covered += 1;
            slot += 1;
        }
    }
    chosen
}

/// Generate `(ground truth, lossy)` sequence pairs.
///
/// Each sequence is a sum of `K = 3` shared latent tones mixed into the
/// subcarriers through a random low-rank matrix, on a per-subcarrier offset,
/// plus Gaussian noise. The per-sequence loss rate is drawn uniformly from
/// `[0.5, 1.5] * loss_rate_mean` (clipped to `[0, 0.95]`) so loss varies
/// window to window the way real captures do.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Vec<(CsiSequence, CsiSequence)>> {
    cfg.validate()?;
    const K: usize = 3;
    let mut out = Vec::with_capacity(cfg.num_sequences);
    for s in 0..cfg.num_sequences {
        let mut rng = seeding::rng_for(cfg.seed, &[tag("synth-seq"), s as u64]);
        let class = (s % cfg.num_classes) as f64;

        // Latent tones; each class occupies a shifted band.
        let freqs: Vec<f64> = (0..K)
            .map(|_| rng.random_range(0.5..8.0) + 1.5 * class)
            .collect();
        let phases: Vec<f64> = (0..K)
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();

        let base: Vec<f64> = (0..cfg.d).map(|_| rng.random_range(5.0..15.0)).collect();
        let amp: Vec<f64> = (0..cfg.d).map(|_| rng.random_range(1.0..3.0)).collect();
        let std_normal = Normal::new(0.0, 1.0).unwrap();
        let mix: Vec<Vec<f64>> = (0..cfg.d)
            .map(|_| {
                (0..K)
                    .map(|_| std_normal.sample(&mut rng) / (K as f64).sqrt())
                    .collect()
            })
            .collect();

        let noise = Normal::new(0.0, cfg.noise_std.max(0.0)).unwrap();
        let mut frames = Vec::with_capacity(cfg.n);
        for k in 0..cfg.n {
            let t = k as f64 / cfg.rate_hz;
            let tones: Vec<f64> = (0..K)
                .map(|i| (std::f64::consts::TAU * freqs[i] * t + phases[i]).sin())
                .collect();
            let mut values = Vec::with_capacity(cfg.d);
            for j in 0..cfg.d {
                let sig: f64 = (0..K).map(|i| mix[j][i] * tones[i]).sum();
                let eps = if cfg.noise_std > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                values.push(base[j] + amp[j] * sig + eps);
            }
            frames.push(CsiFrame {
                timestamp_ms: t * 1000.0,
                values,
            });
        }
        let truth = CsiSequence {
            frames,
            pad_mask: vec![false; cfg.n],
            dim: cfg.d,
            nominal_rate_hz: cfg.rate_hz,
        };

        let mut rate_rng = seeding::rng_for(cfg.seed, &[tag("synth-rate"), s as u64]);
        let m = cfg.loss_rate_mean;
        let rate = if m == 0.0 {
            0.0
        } else {
            rate_rng
                .random_range(0.5 * m..1.5 * m)
                .clamp(0.0, 0.95)
        };
        let lossy = simulate_loss_with_burst(
            &truth,
            rate,
            cfg.loss_model,
            cfg.burst_mean_len,
            seeding::derive(cfg.seed, &[tag("synth-loss"), s as u64]),
        )?;
        out.push((truth, lossy));
    }
    Ok(out)
}

/// Mean/max/min per-window loss rate over a set of sequences.
pub fn loss_stats(seqs: &[CsiSequence]) -> LossStats {
    if seqs.is_empty() {
        return LossStats {
            mean: 0.0,
            max: 0.0,
            min: 0.0,
        };
    }
    let rates: Vec<f64> = seqs.iter().map(|s| s.loss_rate()).collect();
    LossStats {
        mean: rates.iter().sum::<f64>() / rates.len() as f64,
        max: rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        min: rates.iter().cloned().fold(f64::INFINITY, f64::min),
    }
}

// ---------------------------------------------------------------------------
// Dataset manifest
// ---------------------------------------------------------------------------

/// One capture in a dataset manifest. Paths are relative to the manifest
/// file's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<u32>,
    pub lossy: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
}

/// Dataset manifest: the JSON file that ties captures, labels, and dimensions
/// together.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub dim: usize,
    pub rate_hz: f64,
    /// Window length used when cutting sequences for the model.
    pub window_len: usize,
    pub entries: Vec<DatasetEntry>,
    /// Directory the relative paths resolve against; not serialized.
    #[serde(skip)]
    pub root: PathBuf,
}

/// One model-ready window: the lossy input, optional aligned ground truth,
/// and optional label.
#[derive(Debug, Clone)]
pub struct WindowRecord {
    pub lossy: CsiSequence,
    pub truth: Option<CsiSequence>,
    pub label: Option<u32>,
}

impl Dataset {
    pub fn load(manifest_path: &Path) -> Result<Dataset> {
        let text = std::fs::read_to_string(manifest_path)
            .map_err(|e| Error::io(manifest_path, e))?;
        let mut ds: Dataset = serde_json::from_str(&text)?;
        ds.root = manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .to_path_buf();
        Ok(ds)
    }

    pub fn save(&self, manifest_path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(manifest_path, text).map_err(|e| Error::io(manifest_path, e))
    }

    /// Load every entry and cut it into aligned windows.
    pub fn load_windows(&self) -> Result<Vec<WindowRecord>> {
        let mut out = Vec::new();
        for e in &self.entries {
            let lossy = load_csv(&self.root.join(&e.lossy), self.rate_hz)?;
            let label = e.label.or(lossy.label);
            let truth = match &e.truth {
                Some(p) => Some(load_csv(&self.root.join(p), self.rate_hz)?.seq),
                None => None,
            };
            let lossy_windows = window(&lossy.seq, self.window_len);
            let truth_windows: Vec<Option<CsiSequence>> = match truth {
                Some(t) => window(&t, self.window_len).into_iter().map(Some).collect(),
                None => vec![None; lossy_windows.len()],
            };
            for (w, (l, t)) in lossy_windows
                .into_iter()
                .zip(truth_windows.into_iter())
                .enumerate()
            {
                if let Some(t) = &t {
                    if t.len() != l.len() {
                        return Err(Error::InvalidInput(format!(
                            "entry {} window {}: truth/lossy length mismatch",
                            e.id, w
                        )));
                    }
                }
                out.push(WindowRecord {
                    lossy: l,
                    truth: t,
                    label,
                });
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_seq(n: usize, d: usize, rate: f64) -> CsiSequence {
        let frames = (0..n)
            .map(|k| CsiFrame {
                timestamp_ms: k as f64 / rate * 1000.0,
                values: (0..d).map(|j| (k * d + j) as f64).collect(),
            })
            .collect();
        CsiSequence {
            frames,
            pad_mask: vec![false; n],
            dim: d,
            nominal_rate_hz: rate,
        }
    }

    fn write_temp_csv(content: &str) -> tempfile::NamedTempFile {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_complete_capture() {
        let mut csv = String::from("timestamp_ms,sc_0,sc_1\n");
        for k in 0..100 {
            csv.push_str(&format!("{},{},{}\n", k as f64 * 10.0, k, k + 1));
        }
        let f = write_temp_csv(&csv);
        let loaded = load_csv(f.path(), 100.0).unwrap();
        assert_eq!(loaded.seq.len(), 100);
        assert!(loaded.seq.pad_mask.iter().all(|&p| !p));
        assert_eq!(loaded.label, None);
    }

    #[test]
    fn load_single_missing_slot() {
        let mut csv = String::from("timestamp_ms,sc_0\n");
        for k in 0..100 {
            if k == 7 {
                continue;
            }
            csv.push_str(&format!("{},{}\n", k as f64 * 10.0, k));
        }
        let f = write_temp_csv(&csv);
        let loaded = load_csv(f.path(), 100.0).unwrap();
        assert_eq!(loaded.seq.len(), 100);
        let pads: Vec<usize> = (0..100).filter(|&k| loaded.seq.pad_mask[k]).collect();
        assert_eq!(pads, vec![7]);
        // Pad slot carries the sentinel, never data.
        assert!(loaded.seq.frames[7].values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn load_reports_loss_rate() {
        let mut csv = String::from("timestamp_ms,sc_0\n");
        for k in 0..100 {
            if k % 20 < 3 {
                continue; // drop 15 of 100 slots
            }
            csv.push_str(&format!("{},{}\n", k as f64 * 10.0, k));
        }
        let f = write_temp_csv(&csv);
        let loaded = load_csv(f.path(), 100.0).unwrap();
        // Slots 0..2 missing at the head shift the grid start; the file's
        // first present slot is 3, so max slot is 99 and n = 100.
        assert_eq!(loaded.seq.len(), 100);
        assert!((loaded.seq.loss_rate() - 0.15).abs() < 1e-12);
    }

    #[test]
    fn load_rejects_malformed_row_with_number() {
        let csv = "timestamp_ms,sc_0\n0,1.0\n10,not_a_number\n";
        let f = write_temp_csv(csv);
        match load_csv(f.path(), 100.0) {
            Err(Error::CsvFormat { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected CsvFormat error, got {:?}", other),
        }
    }

    #[test]
    fn load_keeps_first_on_duplicate_slot() {
        let csv = "timestamp_ms,sc_0\n0,1.0\n1,2.0\n10,3.0\n";
        let f = write_temp_csv(csv);
        // ts 0 and ts 1 both land in slot 0 at 100 Hz.
        let loaded = load_csv(f.path(), 100.0).unwrap();
        assert_eq!(loaded.seq.frames[0].values[0], 1.0);
        assert_eq!(loaded.seq.len(), 2);
    }

    #[test]
    fn load_parses_label_column() {
        let csv = "timestamp_ms,sc_0,label\n0,1.0,3\n10,2.0,3\n";
        let f = write_temp_csv(csv);
        let loaded = load_csv(f.path(), 100.0).unwrap();
        assert_eq!(loaded.label, Some(3));
    }

    #[test]
    fn window_counts() {
        let seq = grid_seq(250, 2, 100.0);
        assert_eq!(window(&seq, 100).len(), 2);
        let seq = grid_seq(100, 2, 100.0);
        let w = window(&seq, 100);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0], seq);
        let seq = grid_seq(99, 2, 100.0);
        assert_eq!(window(&seq, 100).len(), 0);
    }

    #[test]
    fn window_preserves_slot_time_ranges() {
        let seq = grid_seq(250, 1, 100.0);
        for (w, win) in window(&seq, 100).iter().enumerate() {
            for (k, f) in win.frames.iter().enumerate() {
                let global = w * 100 + k;
                let lo = global as f64 / 100.0 * 1000.0;
                let hi = (global + 1) as f64 / 100.0 * 1000.0;
                assert!(f.timestamp_ms >= lo && f.timestamp_ms < hi);
            }
        }
    }

    #[test]
    fn simulate_loss_exact_counts() {
        let seq = grid_seq(100, 2, 100.0);
        let out = simulate_loss(&seq, 0.0, LossModel::Iid, 1).unwrap();
        assert_eq!(out, seq);
        let out = simulate_loss(&seq, 0.15, LossModel::Iid, 1).unwrap();
        assert_eq!(out.len() - out.observed_count(), 15);
        let out = simulate_loss(&seq, 0.70, LossModel::Iid, 1).unwrap();
        assert_eq!(out.len() - out.observed_count(), 70);
    }

    #[test]
    fn simulate_loss_never_double_deletes() {
        let seq = grid_seq(100, 1, 100.0);
        let once = simulate_loss(&seq, 0.2, LossModel::Bursty, 5).unwrap();
        assert_eq!(once.observed_count(), 80);
        // Deleting from the already-lossy sequence counts against the
        // remaining non-pad slots only.
        let twice = simulate_loss(&once, 0.5, LossModel::Bursty, 6).unwrap();
        assert_eq!(twice.observed_count(), 40);
    }

    #[test]
    fn simulate_loss_rejects_rate_one() {
        let seq = grid_seq(10, 1, 100.0);
        assert!(simulate_loss(&seq, 1.0, LossModel::Iid, 1).is_err());
    }

    #[test]
    fn synth_zero_loss_is_identity() {
        let cfg = SynthConfig {
            num_sequences: 3,
            loss_rate_mean: 0.0,
            ..SynthConfig::default()
        };
        for (truth, lossy) in synth_generate(&cfg).unwrap() {
            assert_eq!(truth, lossy);
            assert!(lossy.pad_mask.iter().all(|&p| !p));
        }
    }

    #[test]
    fn synth_hits_target_loss_rate() {
        // 100 sequences x 100 slots = 10k slots.
        let cfg = SynthConfig {
            num_sequences: 100,
            loss_rate_mean: 0.1451,
            seed: 11,
            ..SynthConfig::default()
        };
        let pairs = synth_generate(&cfg).unwrap();
        let lossy: Vec<CsiSequence> = pairs.into_iter().map(|(_, l)| l).collect();
        let stats = loss_stats(&lossy);
        assert!(
            (stats.mean - 0.1451).abs() <= 0.01,
            "empirical loss rate {} too far from 0.1451",
            stats.mean
        );
    }

    #[test]
    fn synth_is_deterministic() {
        let cfg = SynthConfig {
            num_sequences: 4,
            seed: 42,
            ..SynthConfig::default()
        };
        let a = synth_generate(&cfg).unwrap();
        let b = synth_generate(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn loss_stats_examples() {
        let clean = grid_seq(100, 1, 100.0);
        let s = loss_stats(&[clean.clone()]);
        assert_eq!((s.mean, s.max, s.min), (0.0, 0.0, 0.0));

        let lossy = simulate_loss(&clean, 0.15, LossModel::Iid, 3).unwrap();
        let s = loss_stats(&[lossy]);
        assert!((s.mean - 0.15).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip_preserves_observed_rows() {
        let seq = grid_seq(50, 3, 100.0);
        let lossy = simulate_loss(&seq, 0.2, LossModel::Iid, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seq.csv");
        write_csv(&path, &lossy, Some(2)).unwrap();
        let loaded = load_csv(&path, 100.0).unwrap();
        assert_eq!(loaded.label, Some(2));
        assert_eq!(loaded.seq.pad_mask, lossy.pad_mask);
        for i in lossy.non_pad_indices() {
            assert_eq!(loaded.seq.frames[i], lossy.frames[i]);
        }
    }
}
