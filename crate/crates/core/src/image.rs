//! On-disk form of a crash image: one file per region, each with a 64-byte
//! little-endian header followed by the region's durable bytes.

use std::fs;
use std::path::Path;

use crate::error::ImageError;
use crate::pm::{CrashImage, LogFormat, PmLayout, RegionId};

pub const MAGIC: [u8; 8] = *b"DUMBOPM\0";
pub const VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 64;

fn header(layout: &PmLayout, region: RegionId) -> [u8; HEADER_BYTES] {
    let mut h = [0u8; HEADER_BYTES];
    h[0..8].copy_from_slice(&MAGIC);
    let words32 = [
        VERSION,
        layout.line_size as u32,
        region as u32,
        layout.threads,
        layout.log_format as u32,
        0,
    ];
    for (i, w) in words32.iter().enumerate() {
        h[8 + 4 * i..12 + 4 * i].copy_from_slice(&w.to_le_bytes());
    }
    let words64 = [layout.heap_bytes, layout.log_bytes, layout.marker_bytes, layout.marker_slots];
    for (i, w) in words64.iter().enumerate() {
        h[32 + 8 * i..40 + 8 * i].copy_from_slice(&w.to_le_bytes());
    }
    h
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

fn u64_at(b: &[u8], off: usize) -> u64 {
    u64::from_le_bytes(b[off..off + 8].try_into().unwrap())
}

fn parse_header(path: &str, b: &[u8], expect: RegionId) -> Result<PmLayout, ImageError> {
    let fail = |reason: &str| ImageError::Format { path: path.to_string(), reason: reason.to_string() };
    if b.len() < HEADER_BYTES {
        return Err(fail("truncated header"));
    }
    if b[0..8] != MAGIC {
        return Err(fail("bad magic"));
    }
    if u32_at(b, 8) != VERSION {
        return Err(fail("unsupported version"));
    }
    if RegionId::from_index(u32_at(b, 16)) != Some(expect) {
        return Err(fail("region id does not match file name"));
    }
    let log_format = LogFormat::from_u32(u32_at(b, 24)).ok_or_else(|| fail("unknown log format"))?;
    Ok(PmLayout {
        line_size: u32_at(b, 12) as u64,
        threads: u32_at(b, 20),
        log_format,
        heap_bytes: u64_at(b, 32),
        log_bytes: u64_at(b, 40),
        marker_bytes: u64_at(b, 48),
        marker_slots: u64_at(b, 56),
    })
}

fn region_bytes(layout: &PmLayout, r: RegionId) -> u64 {
    match r {
        RegionId::Heap => layout.heap_bytes,
        RegionId::RedoLogs => layout.log_bytes,
        RegionId::DurMarkers => layout.marker_bytes,
    }
}

/// Writes `img` into `dir`, creating it if needed.
pub fn write_image(dir: &Path, img: &CrashImage) -> Result<(), ImageError> {
    let io = |p: &Path, e| ImageError::Io { path: p.display().to_string(), source: e };
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    for r in RegionId::ALL {
        let path = dir.join(r.file_name());
        let words = img.words(r);
        let mut buf = Vec::with_capacity(HEADER_BYTES + words.len() * 8);
        buf.extend_from_slice(&header(&img.layout, r));
        for w in words {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        fs::write(&path, buf).map_err(|e| io(&path, e))?;
    }
    Ok(())
}

/// Reads an image directory written by [`write_image`].
pub fn read_image(dir: &Path) -> Result<CrashImage, ImageError> {
    let mut layout: Option<PmLayout> = None;
    let mut regions: [Vec<u64>; 3] = Default::default();
    for r in RegionId::ALL {
        let path = dir.join(r.file_name());
        let name = path.display().to_string();
        let bytes = fs::read(&path).map_err(|e| ImageError::Io { path: name.clone(), source: e })?;
        let l = parse_header(&name, &bytes, r)?;
        if let Some(prev) = layout {
            if prev != l {
                return Err(ImageError::Format { path: name, reason: "header disagrees with other regions".into() });
            }
        }
        let body = &bytes[HEADER_BYTES..];
        if body.len() as u64 != region_bytes(&l, r) {
            return Err(ImageError::Format { path: name, reason: "body size does not match header".into() });
        }
        regions[r.index()] = body.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
        layout = Some(l);
    }
    Ok(CrashImage::from_regions(layout.expect("three regions read"), regions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pm::{FlushCompletion, Pm};

    #[test]
    fn roundtrip_is_bit_exact() {
        let layout = PmLayout {
            line_size: 64,
            heap_bytes: 512,
            log_bytes: 256,
            marker_bytes: 128,
            marker_slots: 2,
            threads: 3,
            log_format: LogFormat::InlineScan,
        };
        let mut pm = Pm::new(layout, 310, FlushCompletion::OnFence);
        pm.write_word(RegionId::Heap, 8, u64::MAX).unwrap();
        pm.write_word(RegionId::DurMarkers, 64, 77).unwrap();
        let img = pm.shutdown_image();
        let dir = std::env::temp_dir().join(format!("dumbolab-img-{}", std::process::id()));
        write_image(&dir, &img).unwrap();
        let back = read_image(&dir).unwrap();
        assert_eq!(back.layout, img.layout);
        for r in RegionId::ALL {
            assert_eq!(back.words(r), img.words(r));
        }
        let raw = fs::read(dir.join("heap.img")).unwrap();
        assert_eq!(&raw[0..8], b"DUMBOPM\0");
        assert_eq!(raw.len(), 64 + 512);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn rejects_bad_magic() {
        let l = PmLayout {
            line_size: 64,
            heap_bytes: 64,
            log_bytes: 64,
            marker_bytes: 64,
            marker_slots: 1,
            threads: 1,
            log_format: LogFormat::MarkerArray,
        };
        let mut h = header(&l, RegionId::Heap);
        h[0] = b'X';
        assert!(parse_header("x", &h, RegionId::Heap).is_err());
        let h = header(&l, RegionId::Heap);
        assert!(parse_header("x", &h, RegionId::RedoLogs).is_err());
        assert_eq!(parse_header("x", &h, RegionId::Heap).unwrap(), l);
    }
}
