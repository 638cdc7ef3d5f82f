//! Versioned JSON checkpoints of named, shape-tagged parameter arrays.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use super::net::{AugmentableNet, Stage};
use crate::error::{Error, Result};

pub const FORMAT: &str = "cm3-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    fn from_array(a: ndarray::ArrayViewD<f64>) -> Self {
        Self {
            shape: a.shape().to_vec(),
            data: a.iter().copied().collect(),
        }
    }

    fn to_array(&self) -> Result<ArrayD<f64>> {
        ArrayD::from_shape_vec(self.shape.clone(), self.data.clone())
            .map_err(|e| Error::CheckpointMismatch(e.to_string()))
    }
}

/// Parameters of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetState {
    pub stage: Stage,
    pub augment_at: usize,
    pub tensors: BTreeMap<String, Tensor>,
}

impl AugmentableNet {
    pub fn state(&self) -> NetState {
        NetState {
            stage: self.stage(),
            augment_at: self.augment_at(),
            tensors: self
                .param_names()
                .into_iter()
                .zip(self.params())
                .map(|(n, p)| (n, Tensor::from_array(p)))
                .collect(),
        }
    }

    /// Restore parameters by name.
    ///
    /// A Stage-One state may be loaded into a Stage-Two network: every
    /// Stage-One tensor is copied and the side branch and bridge keep their
    /// current values. Any other missing tensor, or any shape disagreement,
    /// is an error.
    pub fn load_state(&mut self, state: &NetState) -> Result<()> {
        let partial = state.stage == Stage::One && self.stage() == Stage::Two;
        if state.stage == Stage::Two && self.stage() == Stage::One {
            return Err(Error::StageMismatch(
                "cannot load a Stage-Two checkpoint into a Stage-One network".into(),
            ));
        }
        if state.stage == Stage::Two && state.augment_at != self.augment_at() {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint augments layer {}, network augments layer {}",
                state.augment_at,
                self.augment_at()
            )));
        }
        let names = self.param_names();
        let mut loaded = Vec::with_capacity(names.len());
        for (name, current) in names.iter().zip(self.params()) {
            match state.tensors.get(name) {
                Some(t) => {
                    if t.shape != current.shape() {
                        return Err(Error::CheckpointMismatch(format!(
                            "{name}: checkpoint shape {:?}, network shape {:?}",
                            t.shape,
                            current.shape()
                        )));
                    }
                    loaded.push(Some(t.to_array()?));
                }
                None if partial && (name.starts_with("side.") || name.starts_with("bridge.")) => {
                    loaded.push(None)
                }
                None => {
                    return Err(Error::CheckpointMismatch(format!("missing tensor {name}")));
                }
            }
        }
        if let Some(extra) = state.tensors.keys().find(|k| !names.contains(k)) {
            return Err(Error::CheckpointMismatch(format!("unexpected tensor {extra}")));
        }
        for (mut p, value) in self.params_mut().into_iter().zip(loaded) {
            if let Some(v) = value {
                p.assign(&v);
            }
        }
        Ok(())
    }
}

/// A set of named networks plus run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub stage: Stage,
    pub env: String,
    pub method: String,
    pub nets: BTreeMap<String, NetState>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn new(stage: Stage, env: &str, method: &str) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            stage,
            env: env.to_string(),
            method: method.to_string(),
            nets: BTreeMap::new(),
            meta: serde_json::Value::Null,
        }
    }

    pub fn insert(&mut self, name: &str, net: &AugmentableNet) {
        self.nets.insert(name.to_string(), net.state());
    }

    pub fn net(&self, name: &str) -> Result<&NetState> {
        self.nets
            .get(name)
            .ok_or_else(|| Error::CheckpointMismatch(format!("checkpoint has no network '{name}'")))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format != FORMAT {
            return Err(Error::CheckpointMismatch(format!("unknown format '{}'", ckpt.format)));
        }
        if ckpt.version > VERSION {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint version {} is newer than supported version {VERSION}",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }

    /// Write via a temporary file and rename, so readers never see a partial file.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{file_name}.{}.tmp", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::net::{BranchSpec, NetSpec, SideSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(seed: u64) -> AugmentableNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AugmentableNet::new(&NetSpec::mlp(3, vec![8, 8, 2]), &mut rng).unwrap()
    }

    fn side() -> SideSpec {
        SideSpec {
            input_len: 2,
            branch: BranchSpec::dense(vec![0..2], &[4]),
        }
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let n = net(1);
        let mut ckpt = Checkpoint::new(Stage::One, "navigation", "cm3");
        ckpt.insert("policy", &n);
        let back = Checkpoint::from_json(&ckpt.to_json().unwrap()).unwrap();
        let mut fresh = net(2);
        fresh.load_state(back.net("policy").unwrap()).unwrap();
        assert_eq!(fresh.flat_params(), n.flat_params());
    }

    #[test]
    fn stage_one_into_stage_two_is_partial() {
        let trained = net(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut stage2 = net(5).augment(&side(), None, &mut rng).unwrap();
        let side_before = stage2.side().unwrap().clone();
        stage2.load_state(&trained.state()).unwrap();
        let n1 = trained.param_count();
        assert_eq!(stage2.flat_params()[..n1], trained.flat_params()[..]);
        assert_eq!(stage2.side().unwrap(), &side_before);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let other = AugmentableNet::new(&NetSpec::mlp(3, vec![4, 2]), &mut rng).unwrap();
        let mut n = net(7);
        assert!(matches!(n.load_state(&other.state()), Err(Error::CheckpointMismatch(_))));
    }

    #[test]
    fn stage_two_into_stage_one_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s2 = net(9).augment(&side(), None, &mut rng).unwrap();
        assert!(matches!(net(10).load_state(&s2.state()), Err(Error::StageMismatch(_))));
    }

    #[test]
    fn atomic_save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/ckpt.json");
        let mut ckpt = Checkpoint::new(Stage::One, "checkers", "cm3");
        ckpt.insert("critic", &net(11));
        ckpt.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ckpt);
        assert_eq!(std::fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}
