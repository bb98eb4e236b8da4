//! Binary dataset file plus a JSON sidecar holding the external ids.
//!
//! Layout (little-endian): magic `BIDS`, u32 version, u64 N, u64 M,
//! f64 scale min, f64 scale max, u64 count, then `count` records of
//! (u32 user, u32 item, f64 rating). Ids live in `<path>.ids.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ratings::{Rating, RatingScale, RatingsDataset};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"BIDS";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct IdMaps {
    users: Vec<String>,
    items: Vec<String>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".ids.json");
    PathBuf::from(s)
}

pub fn write_packed(ds: &RatingsDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(48 + 16 * ds.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(ds.num_users() as u64).to_le_bytes());
    buf.extend_from_slice(&(ds.num_items() as u64).to_le_bytes());
    buf.extend_from_slice(&ds.scale().min.to_le_bytes());
    buf.extend_from_slice(&ds.scale().max.to_le_bytes());
    buf.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    for r in ds.ratings() {
        buf.extend_from_slice(&(r.user as u32).to_le_bytes());
        buf.extend_from_slice(&(r.item as u32).to_le_bytes());
        buf.extend_from_slice(&r.value.to_le_bytes());
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))?;
    let ids = IdMaps {
        users: ds.user_ids().to_vec(),
        items: ds.item_ids().to_vec(),
    };
    let side = sidecar_path(path);
    let json = serde_json::to_vec_pretty(&ids).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(&side, json).map_err(|e| Error::io(side, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Format("truncated dataset file".into()))?;
        self.pos = end;
        Ok(slice.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        self.take::<4>().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64> {
        self.take::<8>().map(u64::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64> {
        self.take::<8>().map(f64::from_le_bytes)
    }
}

pub fn read_packed(path: impl AsRef<Path>) -> Result<RatingsDataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut rd = Reader { bytes: &bytes, pos: 0 };
    if &rd.take::<4>()? != MAGIC {
        return Err(Error::Format(format!("{} is not a packed dataset", path.display())));
    }
    let version = rd.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let n = rd.u64()? as usize;
    let m = rd.u64()? as usize;
    let scale = RatingScale::new(rd.f64()?, rd.f64()?)?;
    let count = rd.u64()? as usize;
    let mut ratings = Vec::with_capacity(count.min(bytes.len() / 16));
    for _ in 0..count {
        ratings.push(Rating {
            user: rd.u32()? as usize,
            item: rd.u32()? as usize,
            value: rd.f64()?,
        });
    }
    if rd.pos != bytes.len() {
        return Err(Error::Format("trailing bytes in dataset file".into()));
    }
    let side = sidecar_path(path);
    let ids: IdMaps = match std::fs::read(&side) {
        Ok(raw) => serde_json::from_slice(&raw).map_err(|e| Error::Format(e.to_string()))?,
        Err(_) => IdMaps {
            users: (0..n).map(|i| i.to_string()).collect(),
            items: (0..m).map(|j| j.to_string()).collect(),
        },
    };
    if ids.users.len() != n || ids.items.len() != m {
        return Err(Error::Format("id sidecar does not match dataset dimensions".into()));
    }
    RatingsDataset::new(ids.users, ids.items, ratings, scale)
}
