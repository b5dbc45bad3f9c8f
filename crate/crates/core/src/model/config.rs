use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kv::{join, split_list, KvDoc};
use crate::nn::check_kernel;
use crate::tensor::DType;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Stacked ConvLSTM layers followed by the Conv3d head.
    Standard,
    /// Conv3d lift, residual blocks and SE attention in front of the ConvLSTM core.
    Improved,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Standard => "standard",
            Variant::Improved => "improved",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Variant::Standard),
            "improved" => Ok(Variant::Improved),
            _ => Err(Error::invalid(format!("unknown model variant `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Physical channels per frame.
    pub channels: usize,
    pub t_in: usize,
    pub t_out: usize,
    /// Width of the improved front end (lift conv, residual blocks, SE).
    pub front_width: usize,
    pub residual_blocks: usize,
    /// SE reduction ratio; `None` means no SE block.
    pub se_ratio: Option<usize>,
    /// Hidden width of each stacked ConvLSTM layer.
    pub hidden: Vec<usize>,
    pub lstm_kernel: usize,
    /// Spatial and temporal kernel of the front-end Conv3d layers.
    pub front_kernel: usize,
    pub front_kernel_t: usize,
    pub head_kernel: usize,
    pub head_kernel_t: usize,
    /// The head predicts a logit-space increment on the last input frame
    /// instead of the frame itself.
    pub persistence_skip: bool,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: String,
    pub seed: u64,
    /// Arithmetic used for training and inference.
    pub precision: DType,
}

impl ModelConfig {
    /// Two stacked 32-wide ConvLSTM layers and a 3x3x3 head.
    pub fn standard() -> Self {
        ModelConfig {
            variant: Variant::Standard,
            channels: 2,
            t_in: 10,
            t_out: 1,
            front_width: 0,
            residual_blocks: 0,
            se_ratio: None,
            hidden: vec![32, 32],
            lstm_kernel: 3,
            front_kernel: 3,
            front_kernel_t: 3,
            head_kernel: 3,
            head_kernel_t: 3,
            persistence_skip: true,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 8,
            epochs: 50,
            loss: "mse".into(),
            seed: 0,
            precision: DType::F32,
        }
    }

    /// One 16-wide residual block with SE (r = 4), one 24-wide ConvLSTM layer.
    pub fn improved() -> Self {
        ModelConfig {
            variant: Variant::Improved,
            front_width: 16,
            residual_blocks: 1,
            se_ratio: Some(4),
            hidden: vec![24],
            ..Self::standard()
        }
    }

    pub fn reference(variant: Variant) -> Self {
        match variant {
            Variant::Standard => Self::standard(),
            Variant::Improved => Self::improved(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        match self.variant {
            Variant::Improved => {
                if self.residual_blocks == 0 || self.se_ratio.is_none() {
                    return bad("improved model needs at least one residual block and an SE block".into());
                }
                if self.front_width == 0 {
                    return bad("improved model needs front_width > 0".into());
                }
                if let Some(r) = self.se_ratio {
                    if r == 0 || self.front_width % r != 0 {
                        return bad(format!("se_ratio {r} must divide front_width {}", self.front_width));
                    }
                }
                check_kernel(self.front_kernel, "front")?;
                check_kernel(self.front_kernel_t, "front temporal")?;
            }
            Variant::Standard => {
                if self.residual_blocks != 0 || self.se_ratio.is_some() {
                    return bad("standard model has no residual or SE blocks".into());
                }
            }
        }
        if self.channels == 0 || self.t_in == 0 || self.t_out == 0 {
            return bad("channels, t_in and t_out must be positive".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad(format!("hidden widths {:?} must be non-empty and positive", self.hidden));
        }
        check_kernel(self.lstm_kernel, "ConvLSTM")?;
        check_kernel(self.head_kernel, "head")?;
        check_kernel(self.head_kernel_t, "head temporal")?;
        if !(self.learning_rate > 0.0) || !(self.epsilon > 0.0) {
            return bad("learning_rate and epsilon must be positive".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.loss != "mse" {
            return bad(format!("unsupported loss `{}` (only `mse`)", self.loss));
        }
        Ok(())
    }

    /// Parameter count implied by the configuration alone.
    pub fn param_count(&self) -> usize {
        let conv3 = |cin: usize, cout: usize, kt: usize, k: usize| cout * cin * kt * k * k + cout;
        let mut n = 0;
        let mut width = self.channels;
        if self.variant == Variant::Improved {
            let (f, kt, k) = (self.front_width, self.front_kernel_t, self.front_kernel);
            n += conv3(width, f, kt, k) + self.residual_blocks * 2 * conv3(f, f, kt, k);
            if let Some(r) = self.se_ratio {
                let mid = f / r;
                n += (f * mid + mid) + (mid * f + f);
            }
            width = f;
        }
        for &h in &self.hidden {
            n += crate::convlstm::count_params(width, h, self.lstm_kernel);
            width = h;
        }
        n + conv3(width, self.channels, self.head_kernel_t, self.head_kernel)
    }

    pub fn write_kv(&self, doc: &mut KvDoc, section: &str) {
        doc.set_in(section, "variant", self.variant);
        doc.set_in(section, "channels", self.channels);
        doc.set_in(section, "t_in", self.t_in);
        doc.set_in(section, "t_out", self.t_out);
        doc.set_in(section, "front_width", self.front_width);
        doc.set_in(section, "residual_blocks", self.residual_blocks);
        doc.set_in(
            section,
            "se_ratio",
            self.se_ratio.map_or("none".to_string(), |r| r.to_string()),
        );
        doc.set_in(section, "hidden", join(&self.hidden));
        doc.set_in(section, "lstm_kernel", self.lstm_kernel);
        doc.set_in(section, "front_kernel", self.front_kernel);
        doc.set_in(section, "front_kernel_t", self.front_kernel_t);
        doc.set_in(section, "head_kernel", self.head_kernel);
        doc.set_in(section, "head_kernel_t", self.head_kernel_t);
        doc.set_in(section, "persistence_skip", self.persistence_skip);
        doc.set_in(section, "learning_rate", self.learning_rate);
        doc.set_in(section, "beta1", self.beta1);
        doc.set_in(section, "beta2", self.beta2);
        doc.set_in(section, "epsilon", self.epsilon);
        doc.set_in(section, "batch_size", self.batch_size);
        doc.set_in(section, "epochs", self.epochs);
        doc.set_in(section, "loss", &self.loss);
        doc.set_in(section, "seed", self.seed);
        doc.set_in(section, "precision", self.precision.name());
    }

    pub fn apply<'a>(&mut self, entries: impl IntoIterator<Item = (&'a str, &'a str)>, origin: &Path) -> Result<()> {
        fn num<V: FromStr>(key: &str, raw: &str, origin: &Path) -> Result<V> {
            raw.parse()
                .map_err(|_| Error::format(origin, format!("cannot parse `{key} = {raw}`")))
        }
        for (key, raw) in entries {
            match key {
                "variant" => self.variant = raw.parse().map_err(|e: Error| Error::format(origin, e.to_string()))?,
                "channels" => self.channels = num(key, raw, origin)?,
                "t_in" => self.t_in = num(key, raw, origin)?,
                "t_out" => self.t_out = num(key, raw, origin)?,
                "front_width" => self.front_width = num(key, raw, origin)?,
                "residual_blocks" => self.residual_blocks = num(key, raw, origin)?,
                "se_ratio" => self.se_ratio = if raw == "none" { None } else { Some(num(key, raw, origin)?) },
                "hidden" => self.hidden = split_list(raw, origin, key)?,
                "lstm_kernel" => self.lstm_kernel = num(key, raw, origin)?,
                "front_kernel" => self.front_kernel = num(key, raw, origin)?,
                "front_kernel_t" => self.front_kernel_t = num(key, raw, origin)?,
                "head_kernel" => self.head_kernel = num(key, raw, origin)?,
                "head_kernel_t" => self.head_kernel_t = num(key, raw, origin)?,
                "persistence_skip" => self.persistence_skip = num(key, raw, origin)?,
                "learning_rate" => self.learning_rate = num(key, raw, origin)?,
                "beta1" => self.beta1 = num(key, raw, origin)?,
                "beta2" => self.beta2 = num(key, raw, origin)?,
                "epsilon" => self.epsilon = num(key, raw, origin)?,
                "batch_size" => self.batch_size = num(key, raw, origin)?,
                "epochs" => self.epochs = num(key, raw, origin)?,
                "loss" => self.loss = raw.to_string(),
                "seed" => self.seed = num(key, raw, origin)?,
                "precision" => {
                    self.precision = match raw {
                        "f32" => DType::F32,
                        "f64" => DType::F64,
                        _ => return Err(Error::format(origin, format!("precision must be f32 or f64, got `{raw}`"))),
                    }
                }
                _ => return Err(Error::format(origin, format!("unknown model key `{key}`"))),
            }
        }
        Ok(())
    }

    pub fn from_kv(doc: &KvDoc, section: &str, origin: &Path) -> Result<Self> {
        let variant = match doc.get_in(section, "variant") {
            Some(v) => v.parse().map_err(|e: Error| Error::format(origin, e.to_string()))?,
            None => Variant::Improved,
        };
        let mut cfg = Self::reference(variant);
        cfg.apply(doc.section_entries(section), origin)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_configs_are_valid_and_improved_is_smaller() {
        let (s, i) = (ModelConfig::standard(), ModelConfig::improved());
        s.validate().unwrap();
        i.validate().unwrap();
        assert_eq!(s.param_count(), 115_074);
        assert!(i.param_count() < s.param_count());
    }

    #[test]
    fn variant_invariants_are_enforced() {
        let mut c = ModelConfig::improved();
        c.se_ratio = None;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::improved();
        c.residual_blocks = 0;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::standard();
        c.residual_blocks = 1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn kv_round_trip() {
        let mut c = ModelConfig::improved();
        c.seed = 7;
        c.hidden = vec![8, 4];
        c.precision = DType::F64;
        let mut doc = KvDoc::new();
        c.write_kv(&mut doc, "model");
        let back = ModelConfig::from_kv(&doc, "model", Path::new("x")).unwrap();
        assert_eq!(back, c);
        let mut doc = KvDoc::new();
        doc.set_in("model", "dropout", 0.1);
        assert!(ModelConfig::from_kv(&doc, "model", Path::new("x")).is_err());
    }
}
