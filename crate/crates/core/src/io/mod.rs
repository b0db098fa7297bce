//! On-disk formats: PFM float planes, 8-bit PNG, binary PLY for Gaussians
//! and meshes, OBJ with vertex colors, and the view-set manifest.

mod manifest;
mod mesh;
mod raster;

pub use manifest::{read_manifest, read_view_set, resolve_manifest, write_view_set, SceneManifest, ViewRecord, MANIFEST_VERSION};
pub use mesh::{read_gaussian_ply, read_mesh, read_mesh_ply, read_obj, write_gaussian_ply, write_mesh, write_mesh_ply, write_obj};
pub use raster::{read_pfm, read_png_rgb, write_pfm, write_png_rgb, PfmImage};

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    w.write_all(bytes).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Cursor over a byte buffer for headers followed by binary payloads.
pub(crate) struct Bytes<'a> {
    pub data: &'a [u8],
    pub pos: usize,
}

impl<'a> Bytes<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    /// Next line without its terminator, or `None` at the end.
    pub fn line(&mut self) -> Option<&'a str> {
        if self.pos >= self.data.len() {
            return None;
        }
        let rest = &self.data[self.pos..];
        let end = rest.iter().position(|&b| b == b'\n').unwrap_or(rest.len());
        self.pos += (end + 1).min(rest.len());
        std::str::from_utf8(&rest[..end]).ok().map(|s| s.trim_end_matches('\r'))
    }

    pub fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let out = self.data.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(out)
    }
}
