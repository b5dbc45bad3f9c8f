//! Windowed, normalised training samples cut from snapshot runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::cfd::{FlowSnapshot, SnapshotDir, SolverConfig};
use crate::error::{Error, Result};
use crate::kv::{join, split_list, KvDoc};
use crate::rng::Rng;
use crate::tensor::{DType, Tensor};
use crate::vten;

pub const MANIFEST: &str = "manifest.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Channel {
    U,
    V,
    P,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::U => "u",
            Channel::V => "v",
            Channel::P => "p",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "u" => Some(Channel::U),
            "v" => Some(Channel::V),
            "p" => Some(Channel::P),
            _ => None,
        }
    }

    fn field(self, snap: &FlowSnapshot) -> &Tensor<f64> {
        match self {
            Channel::U => &snap.u,
            Channel::V => &snap.v,
            Channel::P => &snap.p,
        }
    }
}

impl std::str::FromStr for Channel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Channel::parse(s).ok_or_else(|| format!("unknown channel `{s}`"))
    }
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Grid-cell window `[row0, row0 + height) x [col0, col0 + width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropRegion {
    pub row0: usize,
    pub col0: usize,
    pub height: usize,
    pub width: usize,
}

impl CropRegion {
    /// From the downstream edge of the last cylinder to four diameters
    /// short of the outlet, over the full channel height.
    pub fn wake(cfg: &SolverConfig) -> Result<Self> {
        let cyl = cfg
            .cylinders
            .iter()
            .max_by(|a, b| (a.center_x + a.diameter).total_cmp(&(b.center_x + b.diameter)))
            .ok_or_else(|| Error::invalid("the default wake crop needs a cylinder"))?;
        let dx = cfg.dx();
        let col0 = ((cyl.center_x + cyl.diameter / 2.0) / dx).ceil() as usize;
        let end = ((cfg.domain_width - 4.0 * cyl.diameter) / dx).floor() as usize;
        if end <= col0 {
            return Err(Error::invalid("no room for a wake crop downstream of the cylinder"));
        }
        Ok(CropRegion {
            row0: 0,
            col0,
            height: cfg.ny,
            width: end - col0,
        })
    }

    fn check(&self, ny: usize, nx: usize) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.row0 + self.height > ny || self.col0 + self.width > nx {
            return Err(Error::invalid(format!(
                "crop {self:?} does not fit a {ny}x{nx} grid"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub sources: Vec<PathBuf>,
    /// `None` uses [`CropRegion::wake`] of each source.
    pub crop: Option<CropRegion>,
    /// Crops are area-averaged to `out_height x out_width`.
    pub out_height: usize,
    pub out_width: usize,
    pub channels: Vec<Channel>,
    pub t_in: usize,
    pub t_out: usize,
    pub stride: usize,
    pub split_seed: u64,
    pub fractions: [f64; 3],
    /// `None` takes the transient fraction of each source run.
    pub transient_fraction: Option<f64>,
    /// Keep only the first `n` windows (in time order).
    pub max_samples: Option<usize>,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            sources: Vec::new(),
            crop: None,
            out_height: 64,
            out_width: 128,
            channels: vec![Channel::U, Channel::V],
            t_in: 10,
            t_out: 1,
            stride: 1,
            split_seed: 0,
            fractions: [0.7, 0.1, 0.2],
            transient_fraction: None,
            max_samples: None,
        }
    }
}

impl DatasetSpec {
    pub fn window(&self) -> usize {
        self.t_in + self.t_out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(m.to_string()));
        if self.t_in == 0 {
            return bad("t_in must be at least 1");
        }
        if self.t_out == 0 {
            return bad("t_out must be at least 1: samples need targets");
        }
        if self.stride == 0 {
            return bad("stride must be at least 1");
        }
        if self.out_height == 0 || self.out_width == 0 {
            return bad("output size must be positive");
        }
        if self.channels.is_empty() {
            return bad("at least one channel is required");
        }
        let mut seen = self.channels.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.channels.len() {
            return bad("channels must be distinct");
        }
        check_fractions(&self.fractions)?;
        if let Some(f) = self.transient_fraction {
            if !(0.0..1.0).contains(&f) {
                return bad("transient_fraction must lie in [0, 1)");
            }
        }
        if self.max_samples == Some(0) {
            return bad("max_samples must be positive");
        }
        Ok(())
    }

    /// Paths are written as given; callers resolve them.
    pub fn write_kv(&self, doc: &mut KvDoc, section: &str) {
        let sources: Vec<String> = self.sources.iter().map(|p| p.display().to_string()).collect();
        doc.set_in(section, "sources", join(&sources));
        doc.set_in(
            section,
            "crop",
            self.crop.map_or("auto".to_string(), |c| {
                format!("{}:{}:{}:{}", c.row0, c.col0, c.height, c.width)
            }),
        );
        doc.set_in(section, "out_height", self.out_height);
        doc.set_in(section, "out_width", self.out_width);
        doc.set_in(section, "channels", join(&self.channels));
        doc.set_in(section, "t_in", self.t_in);
        doc.set_in(section, "t_out", self.t_out);
        doc.set_in(section, "stride", self.stride);
        doc.set_in(section, "split_seed", self.split_seed);
        doc.set_in(section, "fractions", join(&self.fractions));
        doc.set_in(
            section,
            "transient_fraction",
            self.transient_fraction.map_or("auto".to_string(), |f| f.to_string()),
        );
        doc.set_in(
            section,
            "max_samples",
            self.max_samples.map_or("all".to_string(), |n| n.to_string()),
        );
    }

    pub fn apply<'a>(&mut self, entries: impl IntoIterator<Item = (&'a str, &'a str)>, origin: &Path) -> Result<()> {
        fn num<V: std::str::FromStr>(key: &str, raw: &str, origin: &Path) -> Result<V> {
            raw.parse()
                .map_err(|_| Error::format(origin, format!("cannot parse `{key} = {raw}`")))
        }
        for (key, raw) in entries {
            match key {
                "sources" => {
                    self.sources = raw
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(PathBuf::from)
                        .collect()
                }
                "crop" => {
                    self.crop = if raw == "auto" {
                        None
                    } else {
                        let v: Vec<usize> = raw
                            .split(':')
                            .map(|p| num("crop", p.trim(), origin))
                            .collect::<Result<_>>()?;
                        match v[..] {
                            [row0, col0, height, width] => Some(CropRegion {
                                row0,
                                col0,
                                height,
                                width,
                            }),
                            _ => return Err(Error::format(origin, "crop must be `row0:col0:height:width` or `auto`")),
                        }
                    }
                }
                "out_height" => self.out_height = num(key, raw, origin)?,
                "out_width" => self.out_width = num(key, raw, origin)?,
                "channels" => self.channels = split_list(raw, origin, key)?,
                "t_in" => self.t_in = num(key, raw, origin)?,
                "t_out" => self.t_out = num(key, raw, origin)?,
                "stride" => self.stride = num(key, raw, origin)?,
                "split_seed" => self.split_seed = num(key, raw, origin)?,
                "fractions" => {
                    let f: Vec<f64> = split_list(raw, origin, key)?;
                    self.fractions = f
                        .try_into()
                        .map_err(|_| Error::format(origin, "fractions needs three values"))?;
                }
                "transient_fraction" => {
                    self.transient_fraction = if raw == "auto" { None } else { Some(num(key, raw, origin)?) }
                }
                "max_samples" => self.max_samples = if raw == "all" { None } else { Some(num(key, raw, origin)?) },
                _ => return Err(Error::format(origin, format!("unknown dataset key `{key}`"))),
            }
        }
        Ok(())
    }
}

fn check_fractions(f: &[f64; 3]) -> Result<()> {
    if f.iter().any(|&x| !(x >= 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split fractions {f:?} must be non-negative and sum to 1"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded permutation of `0..n` cut at `round(f0 n)` and `round((f0 + f1) n)`.
pub fn split(n: usize, seed: u64, fractions: [f64; 3]) -> Result<Split> {
    if n < 10 {
        return Err(Error::invalid(format!("need at least 10 samples to split, got {n}")));
    }
    check_fractions(&fractions)?;
    let perm = Rng::new(seed).permutation(n);
    let a = ((fractions[0] * n as f64).round() as usize).min(n);
    let b = (((fractions[0] + fractions[1]) * n as f64).round() as usize).clamp(a, n);
    Ok(Split {
        train: perm[..a].to_vec(),
        val: perm[a..b].to_vec(),
        test: perm[b..].to_vec(),
    })
}

/// Per-channel min/max from the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub channels: Vec<Channel>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormalizationStats {
    pub fn new(channels: Vec<Channel>, min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if channels.len() != min.len() || channels.len() != max.len() {
            return Err(Error::invalid("stats need one min and max per channel"));
        }
        for ((c, &lo), &hi) in channels.iter().zip(&min).zip(&max) {
            if !(hi > lo) {
                return Err(Error::DegenerateRange {
                    channel: c.name().into(),
                    value: lo,
                });
            }
        }
        Ok(NormalizationStats { channels, min, max })
    }

    /// `(x - min) / (max - min)` along the channel axis of a `(C, h, w)`
    /// or `(T, C, h, w)` tensor.
    pub fn normalize(&self, x: &Tensor<f64>) -> Result<Tensor<f64>> {
        self.per_channel(x, |v, lo, hi| (v - lo) / (hi - lo))
    }

    pub fn denormalize(&self, x: &Tensor<f64>) -> Result<Tensor<f64>> {
        self.per_channel(x, |v, lo, hi| lo + v * (hi - lo))
    }

    fn per_channel(&self, x: &Tensor<f64>, f: impl Fn(f64, f64, f64) -> f64) -> Result<Tensor<f64>> {
        let s = x.shape();
        let axis = match s.len() {
            3 => 0,
            4 => 1,
            _ => return Err(Error::invalid(format!("expected (C,h,w) or (T,C,h,w), got {s:?}"))),
        };
        if s[axis] != self.channels.len() {
            return Err(Error::invalid(format!(
                "tensor has {} channels, stats have {}",
                s[axis],
                self.channels.len()
            )));
        }
        let plane: usize = s[axis + 1..].iter().product();
        let c = self.channels.len();
        let mut out = x.clone();
        for (k, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
            let ch = k % c;
            let (lo, hi) = (self.min[ch], self.max[ch]);
            chunk.iter_mut().for_each(|v| *v = f(*v, lo, hi));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    /// `(T_in, C, h, w)`, normalised.
    pub input: Tensor<f32>,
    /// `(T_out, C, h, w)`, the frames right after the input window.
    pub target: Tensor<f32>,
    /// Index of the source run.
    pub source: usize,
    /// Frame index of the first input frame in its run.
    pub frame: usize,
}

/// Area-weighted resampling of a `src_h x src_w` plane.
pub fn area_resample(src: &[f64], src_h: usize, src_w: usize, dst_h: usize, dst_w: usize) -> Vec<f64> {
    let wy = overlap_weights(src_h, dst_h);
    let wx = overlap_weights(src_w, dst_w);
    let mut rows = vec![0.0; dst_h * src_w];
    for (o, taps) in wy.iter().enumerate() {
        for &(i, w) in taps {
            let (out, inp) = (&mut rows[o * src_w..(o + 1) * src_w], &src[i * src_w..(i + 1) * src_w]);
            out.iter_mut().zip(inp).for_each(|(a, &b)| *a += w * b);
        }
    }
    let mut out = vec![0.0; dst_h * dst_w];
    for r in 0..dst_h {
        for (o, taps) in wx.iter().enumerate() {
            out[r * dst_w + o] = taps.iter().map(|&(i, w)| w * rows[r * src_w + i]).sum();
        }
    }
    out
}

/// For each destination cell, source cells and their normalised overlap.
fn overlap_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let (lo, hi) = (o as f64 * scale, (o + 1) as f64 * scale);
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            (first..last)
                .filter_map(|i| {
                    let w = (hi.min(i as f64 + 1.0) - lo.max(i as f64)) / scale;
                    (w > 1e-12).then_some((i, w))
                })
                .collect()
        })
        .collect()
}

/// Anything that can hand out snapshots of one run.
pub trait FrameSource {
    fn config(&self) -> &SolverConfig;
    fn frame_count(&self) -> usize;
    fn frame_time(&self, k: usize) -> f64;
    fn frame(&self, k: usize) -> Result<FlowSnapshot>;
}

impl FrameSource for SnapshotDir {
    fn config(&self) -> &SolverConfig {
        &self.cfg
    }
    fn frame_count(&self) -> usize {
        self.count
    }
    fn frame_time(&self, k: usize) -> f64 {
        self.time(k)
    }
    fn frame(&self, k: usize) -> Result<FlowSnapshot> {
        self.load(k)
    }
}

/// A run held in memory.
#[derive(Debug, Clone)]
pub struct MemoryRun {
    pub cfg: SolverConfig,
    pub snapshots: Vec<FlowSnapshot>,
}

impl FrameSource for MemoryRun {
    fn config(&self) -> &SolverConfig {
        &self.cfg
    }
    fn frame_count(&self) -> usize {
        self.snapshots.len()
    }
    fn frame_time(&self, k: usize) -> f64 {
        self.snapshots[k].t
    }
    fn frame(&self, k: usize) -> Result<FlowSnapshot> {
        self.snapshots
            .get(k)
            .cloned()
            .ok_or_else(|| Error::invalid(format!("frame {k} out of range")))
    }
}

/// Crops, resamples and stacks the requested channels: `(C, h, w)`.
pub fn prepare_frame(snap: &FlowSnapshot, spec: &DatasetSpec, crop: &CropRegion) -> Result<Tensor<f64>> {
    let (ny, nx) = (snap.u.shape()[0], snap.u.shape()[1]);
    crop.check(ny, nx)?;
    let (h, w) = (spec.out_height, spec.out_width);
    let mut data = Vec::with_capacity(spec.channels.len() * h * w);
    let mut window = vec![0.0; crop.height * crop.width];
    for &c in &spec.channels {
        let field = c.field(snap).data();
        for r in 0..crop.height {
            let src = (crop.row0 + r) * nx + crop.col0;
            window[r * crop.width..(r + 1) * crop.width].copy_from_slice(&field[src..src + crop.width]);
        }
        data.extend(area_resample(&window, crop.height, crop.width, h, w));
    }
    Tensor::new(vec![spec.channels.len(), h, w], data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub stats: NormalizationStats,
    pub samples: Vec<SequenceSample>,
    pub split: Split,
}

/// `(source, first frame)` of every window, in time order.
fn windows(spec: &DatasetSpec, sources: &[&dyn FrameSource]) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    let mut best = 0;
    for (s, src) in sources.iter().enumerate() {
        let cfg = src.config();
        let frac = spec.transient_fraction.unwrap_or(cfg.transient_fraction);
        let cutoff = frac * cfg.total_time();
        let n = src.frame_count();
        let first = (0..n).find(|&k| src.frame_time(k) >= cutoff - 1e-9 * cfg.dt).unwrap_or(n);
        best = best.max(n - first);
        let mut start = first;
        while start + spec.window() <= n {
            out.push((s, start));
            start += spec.stride;
        }
    }
    if out.is_empty() {
        return Err(Error::InsufficientFrames {
            required: spec.window(),
            available: best,
        });
    }
    if let Some(m) = spec.max_samples {
        out.truncate(m);
    }
    Ok(out)
}

/// Opens `spec.sources` as snapshot directories and builds the dataset.
pub fn build_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    if spec.sources.is_empty() {
        return Err(Error::invalid("dataset needs at least one source directory"));
    }
    let dirs: Vec<SnapshotDir> = spec.sources.iter().map(|p| SnapshotDir::open(p)).collect::<Result<_>>()?;
    let refs: Vec<&dyn FrameSource> = dirs.iter().map(|d| d as &dyn FrameSource).collect();
    build_from_sources(spec, &refs)
}

pub fn build_from_sources(spec: &DatasetSpec, sources: &[&dyn FrameSource]) -> Result<Dataset> {
    spec.validate()?;
    let wins = windows(spec, sources)?;
    let split = split(wins.len(), spec.split_seed, spec.fractions)?;
    if split.train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    let crops: Vec<CropRegion> = sources
        .iter()
        .map(|s| match spec.crop {
            Some(c) => Ok(c),
            None => CropRegion::wake(s.config()),
        })
        .collect::<Result<_>>()?;

    let mut frames: BTreeMap<(usize, usize), Tensor<f64>> = BTreeMap::new();
    for &(s, start) in &wins {
        for k in start..start + spec.window() {
            if let std::collections::btree_map::Entry::Vacant(e) = frames.entry((s, k)) {
                e.insert(prepare_frame(&sources[s].frame(k)?, spec, &crops[s])?);
            }
        }
    }

    let nc = spec.channels.len();
    let mut lo = vec![f64::INFINITY; nc];
    let mut hi = vec![f64::NEG_INFINITY; nc];
    let mut used: Vec<(usize, usize)> = split
        .train
        .iter()
        .flat_map(|&i| {
            let (s, start) = wins[i];
            (start..start + spec.window()).map(move |k| (s, k))
        })
        .collect();
    used.sort();
    used.dedup();
    let plane = spec.out_height * spec.out_width;
    for key in &used {
        for (c, chunk) in frames[key].data().chunks(plane).enumerate() {
            for &v in chunk {
                lo[c] = lo[c].min(v);
                hi[c] = hi[c].max(v);
            }
        }
    }
    let stats = NormalizationStats::new(spec.channels.clone(), lo, hi)?;

    let normalized: BTreeMap<(usize, usize), Tensor<f64>> = frames
        .into_iter()
        .map(|(k, t)| Ok((k, stats.normalize(&t)?.map(|v| v.clamp(0.0, 1.0)))))
        .collect::<Result<_>>()?;
    let stack = |s: usize, range: std::ops::Range<usize>| -> Result<Tensor<f32>> {
        let items: Vec<Tensor<f64>> = range.map(|k| normalized[&(s, k)].clone()).collect();
        Ok(Tensor::stack(&items)?.cast())
    };
    let samples = wins
        .iter()
        .map(|&(s, start)| {
            Ok(SequenceSample {
                input: stack(s, start..start + spec.t_in)?,
                target: stack(s, start + spec.t_in..start + spec.window())?,
                source: s,
                frame: start,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Dataset {
        spec: spec.clone(),
        stats,
        samples,
        split,
    })
}

fn sample_path(dir: &Path, i: usize, part: &str) -> PathBuf {
    dir.join(format!("sample_{i:06}_{part}.vten"))
}

impl Dataset {
    pub fn channels(&self) -> usize {
        self.spec.channels.len()
    }

    pub fn subset(&self, indices: &[usize]) -> Vec<&SequenceSample> {
        indices.iter().map(|&i| &self.samples[i]).collect()
    }

    pub fn train(&self) -> Vec<&SequenceSample> {
        self.subset(&self.split.train)
    }

    pub fn val(&self) -> Vec<&SequenceSample> {
        self.subset(&self.split.val)
    }

    pub fn test(&self) -> Vec<&SequenceSample> {
        self.subset(&self.split.test)
    }

    /// Spec, normalization, split and sample provenance; everything but the tensors.
    pub fn manifest(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        self.spec.write_kv(&mut doc, "spec");
        for (i, c) in self.stats.channels.iter().enumerate() {
            doc.set_in("stats", &format!("{c}_min"), self.stats.min[i]);
            doc.set_in("stats", &format!("{c}_max"), self.stats.max[i]);
        }
        doc.set_in("split", "train", join(&self.split.train));
        doc.set_in("split", "val", join(&self.split.val));
        doc.set_in("split", "test", join(&self.split.test));
        let sources: Vec<usize> = self.samples.iter().map(|s| s.source).collect();
        let frames: Vec<usize> = self.samples.iter().map(|s| s.frame).collect();
        doc.set_in("samples", "count", self.samples.len());
        doc.set_in("samples", "source", join(&sources));
        doc.set_in("samples", "frame", join(&frames));
        doc
    }

    /// SHA-256 of the rendered manifest, as lowercase hex.
    pub fn fingerprint(&self) -> String {
        self.manifest().digest()
    }

    /// Manifest plus one input and one target file per sample.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let doc = self.manifest();
        for (i, s) in self.samples.iter().enumerate() {
            vten::write_as(&sample_path(dir, i, "input"), &s.input, DType::F32)?;
            vten::write_as(&sample_path(dir, i, "target"), &s.target, DType::F32)?;
        }
        doc.save(&dir.join(MANIFEST))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let doc = KvDoc::load(&path)?;
        let mut spec = DatasetSpec::default();
        spec.apply(doc.section_entries("spec"), &path)?;
        spec.validate()?;
        let get = |section: &str, key: &str| {
            doc.get_in(section, key)
                .ok_or_else(|| Error::format(&path, format!("missing [{section}] {key}")))
        };
        let num = |section: &str, key: &str| -> Result<f64> {
            get(section, key)?
                .parse()
                .map_err(|_| Error::format(&path, format!("bad [{section}] {key}")))
        };
        let mut min = Vec::new();
        let mut max = Vec::new();
        for c in &spec.channels {
            min.push(num("stats", &format!("{c}_min"))?);
            max.push(num("stats", &format!("{c}_max"))?);
        }
        let stats = NormalizationStats::new(spec.channels.clone(), min, max)?;
        let split = Split {
            train: split_list(get("split", "train")?, &path, "train")?,
            val: split_list(get("split", "val")?, &path, "val")?,
            test: split_list(get("split", "test")?, &path, "test")?,
        };
        let count: usize = num("samples", "count")? as usize;
        let sources: Vec<usize> = split_list(get("samples", "source")?, &path, "source")?;
        let frames: Vec<usize> = split_list(get("samples", "frame")?, &path, "frame")?;
        if sources.len() != count || frames.len() != count {
            return Err(Error::format(&path, "sample index lists do not match the count"));
        }
        let mut all: Vec<usize> = split.train.iter().chain(&split.val).chain(&split.test).copied().collect();
        all.sort_unstable();
        if all != (0..count).collect::<Vec<_>>() {
            return Err(Error::format(&path, "split does not partition the samples"));
        }
        let (c, h, w) = (spec.channels.len(), spec.out_height, spec.out_width);
        let samples = (0..count)
            .map(|i| {
                let input: Tensor<f32> = vten::read(&sample_path(dir, i, "input"))?;
                let target: Tensor<f32> = vten::read(&sample_path(dir, i, "target"))?;
                if input.shape() != [spec.t_in, c, h, w] || target.shape() != [spec.t_out, c, h, w] {
                    return Err(Error::DatasetMismatch(format!(
                        "sample {i} has shapes {:?}/{:?}",
                        input.shape(),
                        target.shape()
                    )));
                }
                Ok(SequenceSample {
                    input,
                    target,
                    source: sources[i],
                    frame: frames[i],
                })
            })
            .collect::<Result<_>>()?;
        Ok(Dataset {
            spec,
            stats,
            samples,
            split,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn area_resample_block_means_and_conservation() {
        let src: Vec<f64> = (0..16).map(|v| v as f64).collect();
        let out = area_resample(&src, 4, 4, 2, 2);
        assert_eq!(out, vec![2.5, 4.5, 10.5, 12.5]);
        let src: Vec<f64> = (0..35).map(|v| ((v * 7) % 11) as f64).collect();
        let out = area_resample(&src, 5, 7, 3, 4);
        let mean_src = src.iter().sum::<f64>() / 35.0;
        let mean_out = out.iter().sum::<f64>() / 12.0;
        assert!((mean_src - mean_out).abs() < 1e-12);
        assert!(area_resample(&[3.0; 20], 4, 5, 3, 3).iter().all(|&v| (v - 3.0).abs() < 1e-12));
        assert_eq!(area_resample(&src, 5, 7, 5, 7), src);
    }

    #[test]
    fn wake_crop_for_defaults() {
        let c = CropRegion::wake(&SolverConfig::default()).unwrap();
        assert_eq!((c.row0, c.col0, c.height, c.width), (0, 68, 128, 156));
    }

    #[test]
    fn split_sizes() {
        let s = split(100, 42, [0.7, 0.1, 0.2]).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (70, 10, 20));
        assert_eq!(s, split(100, 42, [0.7, 0.1, 0.2]).unwrap());
        assert_ne!(split(1000, 1, [0.7, 0.1, 0.2]).unwrap(), split(1000, 2, [0.7, 0.1, 0.2]).unwrap());
        assert!(split(9, 0, [0.7, 0.1, 0.2]).is_err());
        assert!(split(50, 0, [0.7, 0.2, 0.2]).is_err());
    }

    #[test]
    fn stats_reject_degenerate_range() {
        let err = NormalizationStats::new(vec![Channel::U], vec![1.0], vec![1.0]).unwrap_err();
        assert!(err.to_string().contains("max > min violated"));
    }

    #[test]
    fn spec_kv_round_trip() {
        let spec = DatasetSpec {
            sources: vec!["a".into(), "b/c".into()],
            crop: Some(CropRegion {
                row0: 1,
                col0: 2,
                height: 3,
                width: 4,
            }),
            channels: vec![Channel::P, Channel::U],
            transient_fraction: Some(0.3),
            max_samples: Some(12),
            ..DatasetSpec::default()
        };
        let mut doc = KvDoc::new();
        spec.write_kv(&mut doc, "d");
        let mut back = DatasetSpec::default();
        back.apply(doc.section_entries("d"), Path::new("x")).unwrap();
        assert_eq!(back, spec);
        assert!(back.apply([("bogus", "1")], Path::new("x")).is_err());
    }
}
