//! Scene snapshot text format and bit-exact heightmap dumps.
//!
//! Snapshot: plain text, `#`-prefixed documentation lines, a small header
//! (grid config, target, motion count, RNG seed) and one `object` line per
//! object carrying id, footprint vertices, height, pose and color. Floats
//! use Rust's shortest round-trip formatting, so import is exact.
//!
//! Heightmaps: binary netpbm. Depth is a 16-bit P5 graymap scaled by a
//! fixed 10000 counts/m (big-endian sample order per the netpbm spec);
//! color is an 8-bit P6 pixmap of palette colors; masks are 8-bit P5.

use super::{SceneObject, WorldState, BACKGROUND_COLOR_ID, PALETTE};
use crate::error::{Error, Result};
use crate::geometry::{ConvexPolygon, Vec2};
use crate::grid::{Grid, GridConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};
use std::path::Path;

/// Fixed depth scaling for 16-bit graymap dumps.
pub const DEPTH_COUNTS_PER_METER: f64 = 10000.0;

/// Serializes a world plus its grid config to the snapshot text format.
pub fn export_scene(ws: &WorldState, cfg: &GridConfig, seed: u64) -> String {
    let mut s = String::new();
    s.push_str("# tabletop scene snapshot v1\n");
    s.push_str("# header: resolution, cell_size, target, seed, motions\n");
    s.push_str("# object <id> <color_id> <height> <x> <y> <z> <yaw> <k> <vx> <vy> ...\n");
    s.push_str(&format!("resolution {}\n", cfg.resolution()));
    s.push_str(&format!("cell_size {}\n", cfg.cell_size()));
    s.push_str(&format!("target {}\n", ws.target_id));
    s.push_str(&format!("seed {seed}\n"));
    s.push_str(&format!("motions {}\n", ws.motion_count));
    for o in &ws.objects {
        s.push_str(&format!(
            "object {} {} {} {} {} {} {} {}",
            o.id, o.color_id, o.height, o.x, o.y, o.z, o.yaw,
            o.footprint.verts().len()
        ));
        for v in o.footprint.verts() {
            s.push_str(&format!(" {} {}", v.x, v.y));
        }
        s.push('\n');
    }
    s
}

/// Parses a snapshot produced by [`export_scene`].
pub fn import_scene(text: &str) -> Result<(WorldState, GridConfig, u64)> {
    let mut resolution: Option<usize> = None;
    let mut cell_size: Option<f64> = None;
    let mut target: Option<u32> = None;
    let mut seed: Option<u64> = None;
    let mut motions: u32 = 0;
    let mut objects = Vec::new();

    let parse_err = |line: usize, msg: &str| Error::Parse {
        line,
        msg: msg.to_string(),
    };

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let key = it.next().unwrap();
        match key {
            "resolution" => {
                resolution = Some(
                    it.next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| parse_err(line_no, "bad resolution"))?,
                )
            }
            "cell_size" => {
                cell_size = Some(
                    it.next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| parse_err(line_no, "bad cell_size"))?,
                )
            }
            "target" => {
                target = Some(
                    it.next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| parse_err(line_no, "bad target"))?,
                )
            }
            "seed" => {
                seed = Some(
                    it.next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| parse_err(line_no, "bad seed"))?,
                )
            }
            "motions" => {
                motions = it
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| parse_err(line_no, "bad motions"))?
            }
            "object" => {
                let mut nums: Vec<f64> = Vec::new();
                for tok in it {
                    nums.push(
                        tok.parse()
                            .map_err(|_| parse_err(line_no, "bad object field"))?,
                    );
                }
                if nums.len() < 8 {
                    return Err(parse_err(line_no, "truncated object line"));
                }
                let k = nums[7] as usize;
                if nums.len() != 8 + 2 * k || k < 3 {
                    return Err(parse_err(line_no, "vertex count mismatch"));
                }
                let verts = (0..k)
                    .map(|j| Vec2::new(nums[8 + 2 * j], nums[9 + 2 * j]))
                    .collect();
                objects.push(SceneObject {
                    id: nums[0] as u32,
                    color_id: nums[1] as u8,
                    height: nums[2],
                    x: nums[3],
                    y: nums[4],
                    z: nums[5],
                    yaw: nums[6],
                    footprint: ConvexPolygon::new(verts),
                });
            }
            other => {
                return Err(parse_err(line_no, &format!("unknown key '{other}'")));
            }
        }
    }

    let resolution = resolution.ok_or_else(|| parse_err(0, "missing resolution"))?;
    let cell_size = cell_size.ok_or_else(|| parse_err(0, "missing cell_size"))?;
    let target = target.ok_or_else(|| parse_err(0, "missing target"))?;
    let seed = seed.unwrap_or(0);
    let cfg = GridConfig::new(resolution, cell_size);
    let target_present = objects.iter().any(|o: &SceneObject| o.id == target);
    Ok((
        WorldState {
            objects,
            target_id: target,
            target_grasped: !target_present,
            motion_count: motions,
            rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9E37_79B9_7F4A_7C15)),
        },
        cfg,
        seed,
    ))
}

/// Writes a depth map as a 16-bit binary graymap (P5, maxval 65535).
pub fn write_depth_pgm16(depth: &Grid<f64>, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(32 + depth.data().len() * 2);
    write!(buf, "P5\n{} {}\n65535\n", depth.cols(), depth.rows())?;
    for &d in depth.data() {
        let counts = (d * DEPTH_COUNTS_PER_METER).round().clamp(0.0, 65535.0) as u16;
        buf.extend_from_slice(&counts.to_be_bytes());
    }
    std::fs::write(path, buf)?;
    Ok(())
}

/// Reads back a 16-bit P5 graymap into depth meters.
pub fn read_pgm16(path: &Path) -> Result<Grid<f64>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let header_err = |msg: &str| Error::Parse {
        line: 1,
        msg: msg.to_string(),
    };
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 && pos < bytes.len() {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| header_err("bad header"))?);
    }
    if fields.len() != 4 || fields[0] != "P5" {
        return Err(header_err("not a P5 graymap"));
    }
    let cols: usize = fields[1].parse().map_err(|_| header_err("bad width"))?;
    let rows: usize = fields[2].parse().map_err(|_| header_err("bad height"))?;
    if fields[3] != "65535" {
        return Err(header_err("expected 16-bit maxval"));
    }
    pos += 1; // single whitespace after maxval
    let need = rows * cols * 2;
    if bytes.len() < pos + need {
        return Err(header_err("truncated pixel data"));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows * cols {
        let hi = bytes[pos + 2 * i] as u16;
        let lo = bytes[pos + 2 * i + 1] as u16;
        data.push(((hi << 8) | lo) as f64 / DEPTH_COUNTS_PER_METER);
    }
    Ok(Grid::from_vec(rows, cols, data))
}

/// Writes a color-id map as a binary pixmap (P6) using the palette.
pub fn write_color_ppm(color_ids: &Grid<u8>, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(32 + color_ids.data().len() * 3);
    write!(buf, "P6\n{} {}\n255\n", color_ids.cols(), color_ids.rows())?;
    for &id in color_ids.data() {
        let rgb = if id == BACKGROUND_COLOR_ID {
            [40, 40, 40]
        } else {
            PALETTE[id as usize % PALETTE.len()]
        };
        buf.extend_from_slice(&rgb);
    }
    std::fs::write(path, buf)?;
    Ok(())
}

/// Writes a binary mask as an 8-bit graymap (P5, 0/255).
pub fn write_mask_pgm(mask: &Grid<bool>, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(32 + mask.data().len());
    write!(buf, "P5\n{} {}\n255\n", mask.cols(), mask.rows())?;
    buf.extend(mask.data().iter().map(|&m| if m { 255u8 } else { 0u8 }));
    std::fs::write(path, buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{render, spawn_scene, SpawnMode};

    #[test]
    fn snapshot_round_trip_is_exact() {
        let cfg = GridConfig::new(64, 0.007);
        let ws = spawn_scene(&cfg, 5, SpawnMode::Mixed, 17).unwrap();
        let text = export_scene(&ws, &cfg, 17);
        let (ws2, cfg2, seed) = import_scene(&text).unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(seed, 17);
        assert_eq!(ws.objects, ws2.objects);
        assert_eq!(ws.target_id, ws2.target_id);
        // and re-export is byte-identical
        assert_eq!(text, export_scene(&ws2, &cfg2, seed));
    }

    #[test]
    fn snapshot_rejects_unknown_key_with_line_number() {
        let bad = "resolution 64\ncell_size 0.007\ntarget 0\nbogus 1\n";
        match import_scene(bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn depth_pgm_round_trip_is_bit_exact_at_quantum() {
        let cfg = GridConfig::new(32, 0.007);
        let ws = spawn_scene(&cfg, 3, SpawnMode::Scattered, 9).unwrap();
        let obs = render(&ws, &cfg);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("depth.pgm");
        write_depth_pgm16(&obs.depth, &path).unwrap();
        let back = read_pgm16(&path).unwrap();
        // heights are multiples of 4 mm = 40 counts, so the quantized
        // round trip reproduces depths exactly
        for (a, b) in obs.depth.data().iter().zip(back.data().iter()) {
            assert_eq!(a, b);
        }
        // writing again produces identical bytes
        let path2 = dir.path().join("depth2.pgm");
        write_depth_pgm16(&back, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }
}
