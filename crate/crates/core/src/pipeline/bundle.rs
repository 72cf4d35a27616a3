use std::io::Read;
use std::path::Path;

use crate::corners::CornerConfig;
use crate::editdist::TemplateStore;
use crate::ensemble::{RelDiffStrategy, VotingConfig};
use crate::mlp::{read_f64s, read_u32, MlpModel};
use crate::{Error, Result};

pub const BUNDLE_MAGIC: &[u8; 4] = b"TSGB";
pub const BUNDLE_VERSION: u8 = 1;

/// Everything `predict` needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub labels: Vec<String>,
    pub side: usize,
    pub shadow: MlpModel,
    pub chain: MlpModel,
    /// Fusion weights (shadow, chain), gate threshold, rejection floor.
    pub voting: VotingConfig,
    pub corner: CornerConfig,
    pub templates: TemplateStore,
}

impl ModelBundle {
    pub fn check(&self) -> Result<()> {
        let n = self.labels.len();
        for m in [&self.shadow, &self.chain] {
            if m.n_out != n {
                return Err(Error::ShapeMismatch {
                    expected: n,
                    actual: m.n_out,
                });
            }
        }
        if self.voting.weights.len() != 2
            || (self.voting.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Format(format!(
                "bad fusion weights {:?}",
                self.voting.weights
            )));
        }
        Ok(())
    }

    /// Layout (integers u32 LE, reals f64 LE):
    ///
    /// ```text
    /// "TSGB" version:u8 side:u32
    /// labels:    count, then per label len + UTF-8 bytes
    /// shadow:    len + TSG1 model bytes
    /// chain:     len + TSG1 model bytes
    /// weights:   count, then f64s
    /// theta:f64  floor:f64  k_of_d:f64  strategy:u8
    /// corner:    k:f64 t_rel:f64 nms_radius:u32 window:25 x f64
    /// templates: count, then per entry len + label + 25 count bytes
    /// ```
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.check()?;
        let mut out = Vec::new();
        out.extend_from_slice(BUNDLE_MAGIC);
        out.push(BUNDLE_VERSION);
        put_u32(&mut out, self.side as u32);
        put_u32(&mut out, self.labels.len() as u32);
        for l in &self.labels {
            put_u32(&mut out, l.len() as u32);
            out.extend_from_slice(l.as_bytes());
        }
        for m in [&self.shadow, &self.chain] {
            let bytes = m.to_bytes();
            put_u32(&mut out, bytes.len() as u32);
            out.extend_from_slice(&bytes);
        }
        put_u32(&mut out, self.voting.weights.len() as u32);
        for w in &self.voting.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for v in [
            self.voting.theta,
            self.voting.rejection_floor,
            self.voting.k_of_d,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(self.voting.strategy.code());
        out.extend_from_slice(&self.corner.k.to_le_bytes());
        out.extend_from_slice(&self.corner.t_rel.to_le_bytes());
        put_u32(&mut out, self.corner.nms_radius as u32);
        for w in &self.corner.gaussian {
            out.extend_from_slice(&w.to_le_bytes());
        }
        self.templates.write_to(&mut out)?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let r = &mut &bytes[..];
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic).map_err(|_| Error::TruncatedFile)?;
        if &magic[..4] != BUNDLE_MAGIC {
            return Err(Error::BadMagic);
        }
        if magic[4] != BUNDLE_VERSION {
            return Err(Error::VersionMismatch(magic[4]));
        }
        let side = read_u32(r)? as usize;
        let n_labels = read_u32(r)? as usize;
        let mut labels = Vec::with_capacity(n_labels.min(1 << 16));
        for _ in 0..n_labels {
            labels.push(read_string(r)?);
        }
        let shadow = read_model(r)?;
        let chain = read_model(r)?;
        let n_weights = read_u32(r)? as usize;
        let weights = read_f64s(r, n_weights)?;
        let gate = read_f64s(r, 3)?;
        let mut code = [0u8; 1];
        r.read_exact(&mut code).map_err(|_| Error::TruncatedFile)?;
        let strategy = RelDiffStrategy::from_code(code[0])
            .ok_or_else(|| Error::Format(format!("unknown gate strategy {}", code[0])))?;
        let ck = read_f64s(r, 2)?;
        let nms_radius = read_u32(r)? as usize;
        let window = read_f64s(r, 25)?;
        let templates = TemplateStore::read_from(r)?;
        if !r.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", r.len())));
        }
        let bundle = Self {
            labels,
            side,
            shadow,
            chain,
            voting: VotingConfig {
                weights,
                theta: gate[0],
                rejection_floor: gate[1],
                k_of_d: gate[2],
                strategy,
            },
            corner: CornerConfig {
                k: ck[0],
                t_rel: ck[1],
                nms_radius,
                gaussian: window.try_into().expect("25 values"),
            },
            templates,
        };
        bundle.check()?;
        Ok(bundle)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
        Self::from_bytes(&bytes).map_err(|e| e.in_file(path))
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn read_string(r: &mut &[u8]) -> Result<String> {
    let len = read_u32(r)? as usize;
    if r.len() < len {
        return Err(Error::TruncatedFile);
    }
    let (head, tail) = r.split_at(len);
    *r = tail;
    String::from_utf8(head.to_vec()).map_err(|_| Error::Format("label is not UTF-8".into()))
}

fn read_model(r: &mut &[u8]) -> Result<MlpModel> {
    let len = read_u32(r)? as usize;
    if r.len() < len {
        return Err(Error::TruncatedFile);
    }
    let (head, tail) = r.split_at(len);
    *r = tail;
    MlpModel::from_bytes(head)
}
