//! The correlation database and its `GRDB` file format.
//!
//! ```text
//! "GRDB" | version u32 | layer count u32
//! per layer: name (u16 length + UTF-8) | N u32
//! K u32
//! per entry: id (u16 length + UTF-8) | per layer f32[N (N + 1) / 2]
//!            lower triangle, row-major (row i holds columns 0..=i)
//! CRC32 u32 over all preceding bytes
//! ```
//!
//! Database textures live next to the file as `<id>.png`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use super::{mask_hash, masked_gram_database, texture_grams};
use crate::binio::{read_file, write_file, Reader, Writer};
use crate::error::{Error, Result};
use crate::morphable::SegmentationMask;
use crate::net::{GramMatrix, GramStack, LayerSelection, NetworkSpec};
use crate::numerics::ImageBuffer;

pub const MAGIC: &[u8; 4] = b"GRDB";
pub const GRDB_VERSION: u32 = 1;
const FORMAT: &str = "GRDB";

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationEntry {
    pub id: String,
    pub stack: GramStack,
}

type CacheKey = (u64, u64);

/// `K >= 1` entries sharing one layer list and per-layer dims. Stacks are
/// held at `f32` precision so a saved database reads back identically.
#[derive(Debug)]
pub struct CorrelationDatabase {
    layers: Vec<(String, usize)>,
    entries: Vec<CorrelationEntry>,
    masked: Mutex<HashMap<CacheKey, Arc<Vec<GramStack>>>>,
}

impl Clone for CorrelationDatabase {
    fn clone(&self) -> Self {
        Self { layers: self.layers.clone(), entries: self.entries.clone(), masked: Mutex::new(HashMap::new()) }
    }
}

impl PartialEq for CorrelationDatabase {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.entries == other.entries
    }
}

impl CorrelationDatabase {
    pub fn new(entries: Vec<CorrelationEntry>) -> Result<Self> {
        let first = entries.first().ok_or_else(|| Error::InvalidArgument("correlation database needs at least one entry".into()))?;
        let layers: Vec<(String, usize)> = first.stack.layers.iter().map(|(n, g)| (n.clone(), g.dim())).collect();
        let mut ids = std::collections::HashSet::new();
        for e in &entries {
            let these: Vec<(String, usize)> = e.stack.layers.iter().map(|(n, g)| (n.clone(), g.dim())).collect();
            if these != layers {
                return Err(Error::DimensionMismatch(format!("entry {} has layers {these:?}, expected {layers:?}", e.id)));
            }
            if !ids.insert(e.id.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate database id {}", e.id)));
            }
        }
        let entries = entries.into_iter().map(|e| CorrelationEntry { id: e.id, stack: e.stack.quantized() }).collect();
        Ok(Self { layers, entries, masked: Mutex::new(HashMap::new()) })
    }

    /// Full Gram stacks of `(id, texture)` pairs at the selection's Gram layers.
    pub fn build(net: &NetworkSpec, textures: &[(String, ImageBuffer)], selection: &LayerSelection) -> Result<Self> {
        selection.validate(net)?;
        let entries = textures
            .iter()
            .map(|(id, t)| Ok(CorrelationEntry { id: id.clone(), stack: texture_grams(net, t, &selection.gram_layers)? }))
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[CorrelationEntry] {
        &self.entries
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.id.as_str()).collect()
    }

    pub fn layer_names(&self) -> Vec<String> {
        self.layers.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        self.layers.iter().map(|(_, d)| d).copied().collect()
    }

    /// The same entries restricted to `names`, in that order.
    pub fn select_layers(&self, names: &[String]) -> Result<Self> {
        let entries = self
            .entries
            .iter()
            .map(|e| {
                let layers = names
                    .iter()
                    .map(|n| e.stack.get(n).map(|g| (n.clone(), g.clone())).ok_or_else(|| Error::InvalidArgument(format!("database has no layer {n}"))))
                    .collect::<Result<Vec<_>>>()?;
                Ok(CorrelationEntry { id: e.id.clone(), stack: GramStack { layers } })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }

    /// Masked stacks of the database textures (given in entry order),
    /// cached by mask and layer set.
    pub fn masked_stacks(&self, textures: &[ImageBuffer], mask: &SegmentationMask, net: &NetworkSpec) -> Result<Arc<Vec<GramStack>>> {
        if textures.len() != self.len() {
            return Err(Error::DimensionMismatch(format!("{} textures for {} database entries", textures.len(), self.len())));
        }
        let layers = self.layer_names();
        let key = (mask_hash(mask), LayerSelection::new(layers.clone(), vec![]).digest());
        if let Some(hit) = self.masked.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let stacks = Arc::new(masked_gram_database(textures, mask, net, &layers)?);
        self.masked.lock().expect("cache lock").insert(key, stacks.clone());
        Ok(stacks)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &write_database(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_database(&read_file(path)?)
    }
}

/// Where the texture of entry `id` is stored for a database at `grdb`.
pub fn persisted_texture_path(grdb: &Path, id: &str) -> PathBuf {
    grdb.parent().unwrap_or(Path::new(".")).join(format!("{id}.png"))
}

pub fn write_database(db: &CorrelationDatabase) -> Result<Vec<u8>> {
    let mut w = Writer::new(MAGIC);
    w.u32(GRDB_VERSION);
    w.u32(db.layers.len() as u32);
    for (name, n) in &db.layers {
        w.str(name)?;
        w.u32(*n as u32);
    }
    w.u32(db.entries.len() as u32);
    for e in &db.entries {
        w.str(&e.id)?;
        for (_, g) in &e.stack.layers {
            for i in 0..g.dim() {
                for j in 0..=i {
                    w.f32(g.get(i, j));
                }
            }
        }
    }
    Ok(w.finish())
}

pub fn read_database(bytes: &[u8]) -> Result<CorrelationDatabase> {
    let mut r = Reader::new(FORMAT, MAGIC, bytes)?;
    let version = r.u32(&|| "version".to_string())?;
    if version != GRDB_VERSION {
        return Err(Error::Version { format: FORMAT, found: version, expected: GRDB_VERSION });
    }
    let count = r.u32(&|| "layer count".to_string())? as usize;
    let mut layers = Vec::with_capacity(count.min(64));
    for l in 0..count {
        let name = r.str(&|| format!("layer {l} name"))?;
        let n = r.u32(&|| format!("layer {name} dim"))? as usize;
        layers.push((name, n));
    }
    let k = r.u32(&|| "entry count".to_string())? as usize;
    let mut entries = Vec::with_capacity(k.min(4096));
    for e in 0..k {
        let id = r.str(&|| format!("entry {e} id"))?;
        let mut stack = Vec::with_capacity(layers.len());
        for (name, n) in &layers {
            let tri = r.f32s(n * (n + 1) / 2, &|| format!("entry {id} layer {name}"))?;
            let mut full = vec![0.0; n * n];
            let mut it = tri.into_iter();
            for i in 0..*n {
                for j in 0..=i {
                    let v = it.next().expect("triangle size");
                    full[i * n + j] = v;
                    full[j * n + i] = v;
                }
            }
            stack.push((name.clone(), GramMatrix::from_data(*n, full)?));
        }
        entries.push(CorrelationEntry { id, stack: GramStack { layers: stack } });
    }
    r.finish()?;
    CorrelationDatabase::new(entries).map_err(|e| Error::format(FORMAT, e.to_string()))
}
