use std::fs;
use std::path::{Path, PathBuf};

use super::config::ModelConfig;
use super::network::Network;
use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::nn::Parameters;
use crate::tensor::Real;
use crate::vten;

pub const MANIFEST: &str = "manifest.txt";

fn param_file(name: &str) -> String {
    format!("{name}.vten")
}

/// Writes `cfg`, `extra` sections and every weight into `dir` atomically:
/// everything goes to a sibling temporary directory that is then renamed.
///
/// `extra` may carry e.g. `[checkpoint]` epoch and metrics; the `[model]`
/// and `[params]` sections are owned by this function.
pub fn save<T: Real>(dir: &Path, cfg: &ModelConfig, net: &Network<T>, extra: &KvDoc) -> Result<()> {
    let tmp = temp_sibling(dir);
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut doc = KvDoc::new();
    cfg.write_kv(&mut doc, "model");
    for section in extra.sections() {
        if section == "model" || section == "params" {
            return Err(Error::invalid(format!("checkpoint section [{section}] is reserved")));
        }
        for (k, v) in extra.section_entries(section) {
            doc.set_in(section, k, v);
        }
    }
    doc.set_in("params", "count", net.count_params());
    for (name, t) in net.params() {
        let file = param_file(&name);
        vten::write_as(&tmp.join(&file), t, cfg.precision)?;
        doc.set_in("params", &name, file);
    }
    doc.save(&tmp.join(MANIFEST))?;
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))
}

fn temp_sibling(dir: &Path) -> PathBuf {
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    dir.with_file_name(format!(".{name}.tmp-{}", std::process::id()))
}

/// Reads a checkpoint back as `(config, weights, manifest)`.
pub fn load<T: Real>(dir: &Path) -> Result<(ModelConfig, Network<T>, KvDoc)> {
    let path = dir.join(MANIFEST);
    let doc = KvDoc::load(&path)?;
    let cfg = ModelConfig::from_kv(&doc, "model", &path)?;
    let mut net: Network<T> = Network::init(&cfg)?;
    let names: Vec<String> = net.params().into_iter().map(|(n, _)| n).collect();
    for (name, slot) in names.iter().zip(net.params_mut()) {
        let file = doc
            .get_in("params", name)
            .ok_or_else(|| Error::format(&path, format!("missing parameter `{name}`")))?;
        let t = vten::read(&dir.join(file))?;
        if t.shape() != slot.shape() {
            return Err(Error::format(
                &path,
                format!("parameter `{name}` has shape {:?}, expected {:?}", t.shape(), slot.shape()),
            ));
        }
        *slot = t;
    }
    let listed = doc.section_entries("params").filter(|(k, _)| *k != "count").count();
    if listed != names.len() {
        return Err(Error::format(&path, "checkpoint lists parameters the model does not have"));
    }
    Ok((cfg, net, doc))
}

/// Sum of parameter-file payloads divided by the element size.
pub fn stored_param_count(dir: &Path) -> Result<usize> {
    let path = dir.join(MANIFEST);
    let doc = KvDoc::load(&path)?;
    let mut total = 0;
    for (key, file) in doc.section_entries("params") {
        if key == "count" {
            continue;
        }
        let p = dir.join(file);
        let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
        let (rank, dtype) = vten::peek(&bytes, &p)?;
        total += (bytes.len() - vten::header_len(rank)) / dtype.size();
    }
    Ok(total)
}
