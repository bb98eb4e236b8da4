//! Trained model state and its binary file format.
//!
//! Layout (little-endian): magic `BIMF`, u32 format version, u8 model kind,
//! u64 k, u64 N, u64 M, `k*N` f64 for U (column after column), `k*M` f64
//! for V, u32 tensor count, then per tensor a u64 length and its f64 values
//! (user encoder layers and head, then item encoder layers and head, for the
//! networks the model kind uses), and finally a u64 length followed by a
//! JSON trailer with hyperparameters, layer lists and index maps.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::hyper::{Hyperparams, ModelKind};
use super::latent::{dot, LatentMatrix};
use crate::data::{ImageTensor, RatingScale};
use crate::error::{Error, Result};
use crate::network::{Architecture, EncoderParams, Head, LatentNetwork};

const MAGIC: &[u8; 4] = b"BIMF";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub hyper: Hyperparams,
    pub scale: RatingScale,
    /// Mean training rating, used for pairs the model cannot score.
    pub train_mean: f64,
    pub u: LatentMatrix,
    pub v: LatentMatrix,
    pub user_net: Option<LatentNetwork>,
    pub item_net: Option<LatentNetwork>,
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
    pub user_train_counts: Vec<u32>,
    pub item_train_counts: Vec<u32>,
}

/// Side information for entities without training ratings.
#[derive(Debug, Clone, Copy, Default)]
pub struct ColdInputs<'a> {
    pub item_image: Option<&'a ImageTensor>,
    pub user_images: Option<&'a [&'a ImageTensor]>,
}

impl Checkpoint {
    pub fn num_users(&self) -> usize {
        self.u.cols()
    }

    pub fn num_items(&self) -> usize {
        self.v.cols()
    }

    pub fn is_cold_user(&self, i: usize) -> bool {
        self.user_train_counts[i] == 0
    }

    pub fn is_cold_item(&self, j: usize) -> bool {
        self.item_train_counts[j] == 0
    }

    fn check_indices(&self, i: usize, j: usize) -> Result<()> {
        if i >= self.num_users() || j >= self.num_items() {
            return Err(Error::InvalidInput(format!(
                "pair ({i}, {j}) outside the {}x{} model",
                self.num_users(),
                self.num_items()
            )));
        }
        Ok(())
    }

    /// `u_i . v_j` for users and items seen in training.
    pub fn predict(&self, i: usize, j: usize) -> Result<f64> {
        self.predict_with(i, j, &ColdInputs::default())
    }

    /// Like [`predict`](Self::predict); a cold user or item is replaced by its
    /// encoder output on the supplied images.
    pub fn predict_with(&self, i: usize, j: usize, cold: &ColdInputs<'_>) -> Result<f64> {
        self.check_indices(i, j)?;
        let user: Vec<f64> = if self.is_cold_user(i) {
            match (&self.user_net, cold.user_images) {
                (Some(net), Some(imgs)) => net.forward(imgs)?,
                _ => return Err(Error::ColdWithoutImage(format!("user {i}"))),
            }
        } else {
            self.u.col(i).to_vec()
        };
        let item: Vec<f64> = if self.is_cold_item(j) {
            match (&self.item_net, cold.item_image) {
                (Some(net), Some(img)) => net.forward(&[img])?,
                _ => return Err(Error::ColdWithoutImage(format!("item {j}"))),
            }
        } else {
            self.v.col(j).to_vec()
        };
        Ok(dot(&user, &item))
    }

    pub fn predict_clamped(&self, i: usize, j: usize, cold: &ColdInputs<'_>) -> Result<f64> {
        Ok(self.scale.clamp(self.predict_with(i, j, cold)?))
    }

    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for net in self.user_net.iter().chain(self.item_net.iter()) {
            for t in 0..net.num_tensors() {
                out.push(net.tensor(t));
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let k = self.u.dim();
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.push(self.kind.code());
        for x in [k, self.num_users(), self.num_items()] {
            buf.extend_from_slice(&(x as u64).to_le_bytes());
        }
        for x in self.u.as_slice().iter().chain(self.v.as_slice()) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        let tensors = self.tensors();
        buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for t in tensors {
            buf.extend_from_slice(&(t.len() as u64).to_le_bytes());
            for x in t {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        let trailer = Trailer {
            hyper: self.hyper.clone(),
            scale: self.scale,
            train_mean: self.train_mean,
            user_network: self.user_net.as_ref().map(NetworkMeta::of),
            item_network: self.item_net.as_ref().map(NetworkMeta::of),
            user_ids: self.user_ids.clone(),
            item_ids: self.item_ids.clone(),
            user_train_counts: self.user_train_counts.clone(),
            item_train_counts: self.item_train_counts.clone(),
        };
        let json = serde_json::to_vec(&trailer).map_err(|e| Error::Format(e.to_string()))?;
        buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&json);
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { bytes, pos: 0 };
        if rd.take(4)? != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = rd.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let kind = ModelKind::from_code(rd.take(1)?[0])
            .ok_or_else(|| Error::Format("unknown model kind".into()))?;
        let k = rd.u64()? as usize;
        let n = rd.u64()? as usize;
        let m = rd.u64()? as usize;
        let u = LatentMatrix::from_vec(k, n, rd.f64s(k * n)?)?;
        let v = LatentMatrix::from_vec(k, m, rd.f64s(k * m)?)?;
        let count = rd.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = rd.u64()? as usize;
            tensors.push(rd.f64s(len)?);
        }
        let trailer_len = rd.u64()? as usize;
        let trailer: Trailer = serde_json::from_slice(rd.take(trailer_len)?)
            .map_err(|e| Error::Format(format!("checkpoint trailer: {e}")))?;
        if rd.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }

        let mut tensors = tensors.into_iter();
        let mut rebuild = |meta: &Option<NetworkMeta>| -> Result<Option<LatentNetwork>> {
            meta.as_ref().map(|meta| meta.rebuild(&mut tensors)).transpose()
        };
        let user_net = rebuild(&trailer.user_network)?;
        let item_net = rebuild(&trailer.item_network)?;
        if tensors.next().is_some() {
            return Err(Error::Format("unused weight tensors in checkpoint".into()));
        }
        if user_net.is_some() != kind.uses_user_encoder()
            || item_net.is_some() != kind.uses_item_encoder()
        {
            return Err(Error::Format(format!("networks do not match model kind {kind}")));
        }
        if trailer.user_ids.len() != n
            || trailer.item_ids.len() != m
            || trailer.user_train_counts.len() != n
            || trailer.item_train_counts.len() != m
        {
            return Err(Error::Format("index maps do not match factor dimensions".into()));
        }
        Ok(Checkpoint {
            kind,
            hyper: trailer.hyper,
            scale: trailer.scale,
            train_mean: trailer.train_mean,
            u,
            v,
            user_net,
            item_net,
            user_ids: trailer.user_ids,
            item_ids: trailer.item_ids,
            user_train_counts: trailer.user_train_counts,
            item_train_counts: trailer.item_train_counts,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[derive(Serialize, Deserialize)]
struct NetworkMeta {
    architecture: Architecture,
    slots: usize,
    latent_dim: usize,
}

impl NetworkMeta {
    fn of(net: &LatentNetwork) -> Self {
        NetworkMeta {
            architecture: net.encoder.architecture().clone(),
            slots: net.slots(),
            latent_dim: net.latent_dim(),
        }
    }

    fn rebuild(&self, tensors: &mut impl Iterator<Item = Vec<f64>>) -> Result<LatentNetwork> {
        let n_layers = self.architecture.layers.len();
        let enc: Vec<Vec<f64>> = tensors.by_ref().take(n_layers).collect();
        if enc.len() != n_layers {
            return Err(Error::Format("missing encoder tensors".into()));
        }
        let encoder = EncoderParams::from_weights(&self.architecture, enc)?;
        let head_w = tensors
            .next()
            .ok_or_else(|| Error::Format("missing head tensor".into()))?;
        let head = Head::zeros(self.slots, encoder.feature_dim(), self.latent_dim)?.with_weights(head_w)?;
        LatentNetwork::new(encoder, head)
    }
}

#[derive(Serialize, Deserialize)]
struct Trailer {
    hyper: Hyperparams,
    scale: RatingScale,
    train_mean: f64,
    user_network: Option<NetworkMeta>,
    item_network: Option<NetworkMeta>,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    user_train_counts: Vec<u32>,
    item_train_counts: Vec<u32>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}
