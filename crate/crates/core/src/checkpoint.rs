//! Binary checkpoint format for fitted fields.
//!
//! Layout (little-endian): magic `MLTP1`, then `u32` resolution, layers,
//! channels, number of decoder widths and the widths themselves, followed by
//! `f32` data: the XY, XZ and YZ planes, then each decoder layer's weight and
//! bias.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::decoder::RadianceDecoder;
use crate::error::{Error, Result};
use crate::field::RadianceField;
use crate::triplane::MultiLayerTriplane;

pub const MAGIC: &[u8; 5] = b"MLTP1";

pub fn encode(field: &RadianceField<f32>) -> Vec<u8> {
    let tp = &field.triplane;
    let widths = field.decoder.widths();
    let mut out = Vec::with_capacity(64 + 4 * (tp.param_count() + field.decoder.param_count()));
    out.extend_from_slice(MAGIC);
    for v in [tp.resolution(), tp.layers(), tp.channels(), widths.len()]
        .into_iter()
        .chain(widths.iter().copied())
    {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    let floats = tp
        .planes()
        .iter()
        .flatten()
        .chain(field.decoder.layers().iter().flat_map(|l| l.weight.iter().chain(&l.bias)));
    for v in floats {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<RadianceField<f32>> {
    let bad = |message: String| Error::Format {
        format: "checkpoint",
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic(path.to_path_buf()));
    }
    let mut pos = MAGIC.len();
    let word = |pos: &mut usize| -> Result<[u8; 4]> {
        let b = bytes
            .get(*pos..*pos + 4)
            .ok_or_else(|| bad("truncated".into()))?;
        *pos += 4;
        Ok(b.try_into().unwrap())
    };
    let mut header = Vec::new();
    for _ in 0..4 {
        header.push(u32::from_le_bytes(word(&mut pos)?) as usize);
    }
    let (r, l, c, nw) = (header[0], header[1], header[2], header[3]);
    if nw > 64 {
        return Err(bad(format!("implausible decoder depth {nw}")));
    }
    let mut widths = Vec::with_capacity(nw);
    for _ in 0..nw {
        widths.push(u32::from_le_bytes(word(&mut pos)?) as usize);
    }
    let mut triplane = MultiLayerTriplane::<f32>::zeros(r, l, c).map_err(|e| bad(e.to_string()))?;
    let mut decoder = RadianceDecoder::<f32>::zeros(&widths).map_err(|e| bad(e.to_string()))?;
    if widths[0] != c {
        return Err(bad(format!("decoder input width {} != channels {c}", widths[0])));
    }
    let expected = 4 * (triplane.param_count() + decoder.param_count());
    if bytes.len() - pos != expected {
        return Err(bad(format!("expected {expected} bytes of parameters, found {}", bytes.len() - pos)));
    }
    let mut floats = bytes[pos..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()));
    let targets = triplane
        .planes_mut()
        .iter_mut()
        .flat_map(|p| p.iter_mut())
        .chain(
            decoder
                .layers_mut()
                .iter_mut()
                .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut())),
        );
    for t in targets {
        *t = floats.next().unwrap();
    }
    RadianceField::new(triplane, decoder)
}

/// Writes to a temporary sibling and renames it into place.
pub fn save(field: &RadianceField<f32>, path: &Path) -> Result<()> {
    write_atomic(path, &encode(field))
}

pub fn load(path: &Path) -> Result<RadianceField<f32>> {
    if !path.is_file() {
        return Err(Error::Missing(format!("missing checkpoint {}", path.display())));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

/// Write-then-rename so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldShape;

    fn field() -> RadianceField<f32> {
        RadianceField::init(
            &FieldShape {
                resolution: 5,
                layers: 2,
                channels: 3,
                hidden: vec![7, 6],
            },
            4,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.mltp");
        let f = field();
        save(&f, &p).unwrap();
        assert_eq!(load(&p).unwrap(), f);
        assert_eq!(fs::read(&p).unwrap(), encode(&f));
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn corrupted_magic_reported() {
        let mut bytes = encode(&field());
        bytes[0] = b'X';
        let err = decode(&bytes, Path::new("c.mltp")).unwrap_err();
        assert!(err.to_string().contains("bad magic MLTP1"), "{err}");
    }

    #[test]
    fn truncation_reported() {
        let bytes = encode(&field());
        assert!(matches!(
            decode(&bytes[..bytes.len() - 3], Path::new("c")),
            Err(Error::Format { .. })
        ));
        assert!(matches!(decode(&bytes[..7], Path::new("c")), Err(Error::Format { .. })));
    }
}
