//! On-disk sequence format.
//!
//! ```text
//! intrinsics.txt           fx fy cx cy width height
//! poses.txt                frame_id + 12 row-major entries of camera-to-world
//! rgb/%06d.png             8-bit RGB
//! mask/%06d.png            16-bit gray instance ids
//! sparse_depth/%06d.txt    u v depth
//! lines/%06d.txt           instance_id u1 v1 u2 v2
//! detections/%06d.txt      instance_id class_id u0 v0 u1 v1   (optional)
//! gt/objects.json          optional ground truth, meshes under gt/meshes/
//! ```
//!
//! Reals are written in shortest round-trip form, so a save/load cycle is exact.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DepthSample, Detection, Frame, GtObject, LineObservation, MaskImage, RgbImage, SceneBundle};
use crate::error::{Error, Result};
use crate::geometry::{Box2, CameraIntrinsics, ObjectPose, RigidTransform, Segment2, Vec3};
use crate::mesh::{read_obj, write_obj, MeshFrame};

#[derive(Serialize, Deserialize)]
struct GtRecord {
    id: u32,
    class: u32,
    pose: ObjectPose,
    half_extents: [f64; 3],
    mesh: String,
}

fn frame_file(dir: &Path, sub: &str, id: u32, ext: &str) -> PathBuf {
    dir.join(sub).join(format!("{id:06}.{ext}"))
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn join<T: std::fmt::Display>(values: impl IntoIterator<Item = T>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn write_png(path: &Path, width: u32, height: u32, color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width, height);
    enc.set_color(color);
    enc.set_depth(depth);
    let to_io = |e: png::EncodingError| Error::io(path, std::io::Error::other(e));
    let mut writer = enc.write_header().map_err(to_io)?;
    writer.write_image_data(data).map_err(to_io)?;
    writer.finish().map_err(to_io)
}

fn read_png(path: &Path, color: png::ColorType, depth: png::BitDepth) -> Result<(u32, u32, Vec<u8>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = png::Decoder::new(BufReader::new(file));
    dec.set_transformations(png::Transformations::IDENTITY);
    let bad = |m: String| Error::parse(path, "image", m);
    let mut reader = dec.read_info().map_err(|e| bad(e.to_string()))?;
    let size = reader.output_buffer_size().ok_or_else(|| bad("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| bad(e.to_string()))?;
    if info.color_type != color || info.bit_depth != depth {
        return Err(bad(format!(
            "expected {color:?}/{depth:?}, found {:?}/{:?}",
            info.color_type, info.bit_depth
        )));
    }
    buf.truncate(info.buffer_size());
    Ok((info.width, info.height, buf))
}

/// Writes `bundle` under `dir`, creating directories as needed.
pub fn save_sequence(bundle: &SceneBundle, dir: &Path) -> Result<()> {
    for sub in ["rgb", "mask", "sparse_depth", "lines", "detections"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let k = &bundle.intrinsics;
    write_text(
        &dir.join("intrinsics.txt"),
        &format!("{} {} {} {} {} {}\n", k.fx, k.fy, k.cx, k.cy, k.width, k.height),
    )?;
    let mut poses = String::new();
    for f in &bundle.frames {
        poses.push_str(&format!("{} {}\n", f.frame_id, join(f.pose.to_rows())));
    }
    write_text(&dir.join("poses.txt"), &poses)?;

    for f in &bundle.frames {
        let id = f.frame_id;
        write_png(
            &frame_file(dir, "rgb", id, "png"),
            f.rgb.width,
            f.rgb.height,
            png::ColorType::Rgb,
            png::BitDepth::Eight,
            &f.rgb.data,
        )?;
        let mask_bytes: Vec<u8> = f.mask.data.iter().flat_map(|v| v.to_be_bytes()).collect();
        write_png(
            &frame_file(dir, "mask", id, "png"),
            f.mask.width,
            f.mask.height,
            png::ColorType::Grayscale,
            png::BitDepth::Sixteen,
            &mask_bytes,
        )?;
        let depth: String = f.sparse_depth.iter().map(|s| format!("{} {} {}\n", s.u, s.v, s.depth)).collect();
        write_text(&frame_file(dir, "sparse_depth", id, "txt"), &depth)?;
        let lines: String = f
            .lines
            .iter()
            .map(|l| {
                format!(
                    "{} {} {} {} {}\n",
                    l.instance_id, l.segment.a[0], l.segment.a[1], l.segment.b[0], l.segment.b[1]
                )
            })
            .collect();
        write_text(&frame_file(dir, "lines", id, "txt"), &lines)?;
        let dets: String = f
            .detections
            .iter()
            .map(|d| {
                format!(
                    "{} {} {} {} {} {}\n",
                    d.instance_id, d.class_id, d.bbox.min[0], d.bbox.min[1], d.bbox.max[0], d.bbox.max[1]
                )
            })
            .collect();
        write_text(&frame_file(dir, "detections", id, "txt"), &dets)?;
    }

    if !bundle.gt_objects.is_empty() {
        let meshes = dir.join("gt").join("meshes");
        fs::create_dir_all(&meshes).map_err(|e| Error::io(&meshes, e))?;
        let mut records = Vec::new();
        for o in &bundle.gt_objects {
            let rel = format!("meshes/{}.obj", o.id);
            write_obj(&dir.join("gt").join(&rel), &o.mesh)?;
            records.push(GtRecord {
                id: o.id,
                class: o.class_id,
                pose: o.pose,
                half_extents: o.half_extents.into(),
                mesh: rel,
            });
        }
        let path = dir.join("gt").join("objects.json");
        let json = serde_json::to_string_pretty(&records).map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
        write_text(&path, &json)?;
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, field: &str, tok: Option<&str>) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::parse(path, field, format!("line {line}: missing value")))?;
    tok.parse()
        .map_err(|_| Error::parse(path, field, format!("line {line}: cannot parse {tok:?}")))
}

/// Whitespace-separated records of exactly `N` fields, with line numbers.
struct Records<'a, const N: usize> {
    path: &'a Path,
    fields: [&'static str; N],
    rows: Vec<(usize, Vec<String>)>,
}

impl<'a, const N: usize> Records<'a, N> {
    fn read(path: &'a Path, fields: [&'static str; N]) -> Result<Self> {
        let text = read_text(path)?;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let toks: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
            if toks.len() != N {
                let field = fields.get(toks.len()).copied().unwrap_or("record");
                return Err(Error::parse(
                    path,
                    field,
                    format!("line {}: expected {N} values, found {}", i + 1, toks.len()),
                ));
            }
            rows.push((i + 1, toks));
        }
        Ok(Self { path, fields, rows })
    }

    fn map<T>(&self, f: impl Fn(&dyn Fn(usize) -> Result<f64>, &dyn Fn(usize) -> Result<u32>) -> Result<T>) -> Result<Vec<T>> {
        self.rows
            .iter()
            .map(|(line, toks)| {
                let real = |k: usize| parse_field::<f64>(self.path, *line, self.fields[k], Some(&toks[k]));
                let int = |k: usize| parse_field::<u32>(self.path, *line, self.fields[k], Some(&toks[k]));
                f(&real, &int)
            })
            .collect()
    }
}

/// Reads a sequence directory. Ground truth is optional.
pub fn load_sequence(dir: &Path) -> Result<SceneBundle> {
    let ipath = dir.join("intrinsics.txt");
    let text = read_text(&ipath)?;
    let mut toks = text.split_whitespace();
    let intrinsics = CameraIntrinsics {
        fx: parse_field(&ipath, 1, "fx", toks.next())?,
        fy: parse_field(&ipath, 1, "fy", toks.next())?,
        cx: parse_field(&ipath, 1, "cx", toks.next())?,
        cy: parse_field(&ipath, 1, "cy", toks.next())?,
        width: parse_field(&ipath, 1, "width", toks.next())?,
        height: parse_field(&ipath, 1, "height", toks.next())?,
    };
    intrinsics
        .validate()
        .map_err(|e| Error::parse(&ipath, "intrinsics", e.to_string()))?;

    let ppath = dir.join("poses.txt");
    let pose_text = read_text(&ppath)?;
    let mut poses = Vec::new();
    for (i, line) in pose_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let id: u32 = parse_field(&ppath, i + 1, "frame_id", toks.next())?;
        let mut rows = [0.0; 12];
        for (k, r) in rows.iter_mut().enumerate() {
            *r = parse_field(&ppath, i + 1, &format!("pose[{k}]"), toks.next())?;
        }
        if toks.next().is_some() {
            return Err(Error::parse(&ppath, "pose", format!("line {}: trailing values", i + 1)));
        }
        poses.push((id, RigidTransform::from_rows(&rows)));
    }

    let gt_objects = load_ground_truth(dir)?;

    let mut frames = Vec::with_capacity(poses.len());
    for (id, pose) in poses {
        let rgb_path = frame_file(dir, "rgb", id, "png");
        if !rgb_path.exists() {
            return Err(Error::MissingFrameData { what: "rgb image", frame_id: id });
        }
        let (w, h, data) = read_png(&rgb_path, png::ColorType::Rgb, png::BitDepth::Eight)?;
        let rgb = RgbImage { width: w, height: h, data };

        let mask_path = frame_file(dir, "mask", id, "png");
        if !mask_path.exists() {
            return Err(Error::MissingFrameData { what: "mask", frame_id: id });
        }
        let (mw, mh, bytes) = read_png(&mask_path, png::ColorType::Grayscale, png::BitDepth::Sixteen)?;
        let mask = MaskImage {
            width: mw,
            height: mh,
            data: bytes.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect(),
        };

        let dpath = frame_file(dir, "sparse_depth", id, "txt");
        let sparse_depth = if dpath.exists() {
            Records::read(&dpath, ["u", "v", "depth"])?.map(|real, int| {
                Ok(DepthSample {
                    u: int(0)?,
                    v: int(1)?,
                    depth: real(2)?,
                })
            })?
        } else {
            Vec::new()
        };

        let lpath = frame_file(dir, "lines", id, "txt");
        let lines = if lpath.exists() {
            Records::read(&lpath, ["instance_id", "u1", "v1", "u2", "v2"])?.map(|real, int| {
                Ok(LineObservation {
                    instance_id: int(0)?,
                    segment: Segment2::new([real(1)?, real(2)?], [real(3)?, real(4)?]),
                })
            })?
        } else {
            Vec::new()
        };

        let detpath = frame_file(dir, "detections", id, "txt");
        let detections = if detpath.exists() {
            Records::read(&detpath, ["instance_id", "class_id", "u0", "v0", "u1", "v1"])?.map(|real, int| {
                Ok(Detection {
                    instance_id: int(0)?,
                    class_id: int(1)?,
                    bbox: Box2::new(real(2)?, real(3)?, real(4)?, real(5)?),
                })
            })?
        } else {
            // Without a detector output, boxes come from the masks.
            mask.instance_boxes()
                .into_iter()
                .map(|(instance_id, bbox)| Detection {
                    instance_id,
                    class_id: gt_objects.iter().find(|o| o.id == instance_id).map_or(0, |o| o.class_id),
                    bbox,
                })
                .collect()
        };

        let frame = Frame {
            frame_id: id,
            pose,
            rgb,
            mask,
            sparse_depth,
            lines,
            detections,
        };
        frame.validate().map_err(|e| Error::parse(&mask_path, "frame", e.to_string()))?;
        frames.push(frame);
    }

    let bundle = SceneBundle {
        intrinsics,
        frames,
        gt_objects,
    };
    bundle.validate()?;
    Ok(bundle)
}

fn load_ground_truth(dir: &Path) -> Result<Vec<GtObject>> {
    let path = dir.join("gt").join("objects.json");
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = read_text(&path)?;
    let records: Vec<GtRecord> =
        serde_json::from_str(&text).map_err(|e| Error::parse(&path, "objects", e.to_string()))?;
    records
        .into_iter()
        .map(|r| {
            let mesh = read_obj(&dir.join("gt").join(&r.mesh), MeshFrame::Object, r.id)?;
            Ok(GtObject {
                id: r.id,
                class_id: r.class,
                pose: r.pose,
                half_extents: Vec3::from(r.half_extents),
                mesh,
            })
        })
        .collect()
}
