//! File formats: versioned JSON envelopes with provenance, binary PGM,
//! CSV tables, OBJ mirror quads, SVG overlap plots and the light-field
//! directory layout.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decode::{LfView, LightField4D, MaskedImage, RectifiedGridModel};
use crate::design::{footprints_local, full_overlap, DesignState};
use crate::error::{Error, Result};
use crate::features::Feature4D;
use crate::geometry::MirrorPlane;
use crate::simulate::{CornerId, Observation, Observations, RawImage};

pub const TOOL_NAME: &str = "mirrorfield";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Major.minor of every JSON schema written by this build.
pub const SCHEMA_VERSION: &str = "1.0";

pub mod schema {
    pub const DESIGN_SPEC: &str = "mirrorfield.design_spec";
    pub const DESIGN: &str = "mirrorfield.design";
    pub const SCENE: &str = "mirrorfield.scene";
    pub const SUBIMAGE_MAP: &str = "mirrorfield.subimage_map";
    pub const CALIBRATION: &str = "mirrorfield.calibration";
    pub const LIGHT_FIELD: &str = "mirrorfield.light_field";
}

/// Tags an i/o error with the file it concerns.
fn at(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |err| Error::File {
        path: path.to_path_buf(),
        err,
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    /// File name without directories, so outputs do not depend on where
    /// the inputs happened to live.
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
}

impl Provenance {
    pub fn new(seed: Option<u64>) -> Self {
        Provenance {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            seed,
            inputs: Vec::new(),
        }
    }

    pub fn with_input_bytes(mut self, name: &str, bytes: &[u8]) -> Self {
        self.inputs.push(InputDigest {
            name: name.into(),
            sha256: sha256_hex(bytes),
        });
        self
    }

    pub fn with_input_file(self, path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(at(path))?;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(self.with_input_bytes(&name, &bytes))
    }

    /// One line per fact, for formats that only carry comments.
    pub fn comment_lines(&self) -> Vec<String> {
        let mut out = vec![format!("{} {}", self.tool, self.version)];
        out.push(match self.seed {
            Some(s) => format!("seed {s}"),
            None => "seed none".into(),
        });
        for i in &self.inputs {
            out.push(format!("input {} sha256 {}", i.name, i.sha256));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema: String,
    pub schema_version: String,
    pub provenance: Provenance,
    pub payload: T,
}

fn major(version: &str) -> Result<u64> {
    version
        .split('.')
        .next()
        .and_then(|m| m.parse().ok())
        .ok_or_else(|| Error::Format(format!("malformed schema version {version:?}")))
}

pub fn to_json<T: Serialize>(schema: &str, provenance: &Provenance, payload: &T) -> Result<String> {
    let env = Envelope {
        schema: schema.to_string(),
        schema_version: SCHEMA_VERSION.to_string(),
        provenance: provenance.clone(),
        payload,
    };
    let mut s = serde_json::to_string_pretty(&env).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Parses an enveloped document of the given schema. Hand-written inputs
/// without an envelope are accepted as a bare payload.
pub fn from_json<T: DeserializeOwned>(text: &str, schema: &str) -> Result<(T, Option<Provenance>)> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    let enveloped = value.get("schema").is_some() && value.get("payload").is_some();
    if !enveloped {
        let payload = serde_json::from_value(value).map_err(|e| Error::Format(e.to_string()))?;
        return Ok((payload, None));
    }
    let found = value["schema"].as_str().unwrap_or_default();
    if found != schema {
        return Err(Error::Format(format!(
            "expected schema {schema}, found {found:?}"
        )));
    }
    let version = value
        .get("schema_version")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::Format("missing schema_version".into()))?;
    if major(version)? > major(SCHEMA_VERSION)? {
        return Err(Error::Format(format!(
            "{schema} version {version} is newer than supported {SCHEMA_VERSION}"
        )));
    }
    let env: Envelope<T> =
        serde_json::from_value(value).map_err(|e| Error::Format(e.to_string()))?;
    Ok((env.payload, Some(env.provenance)))
}

pub fn write_json<T: Serialize>(
    path: &Path,
    schema: &str,
    provenance: &Provenance,
    payload: &T,
) -> Result<()> {
    fs::write(path, to_json(schema, provenance, payload)?).map_err(at(path))?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path, schema: &str) -> Result<T> {
    let text = fs::read_to_string(path).map_err(at(path))?;
    from_json(&text, schema)
        .map(|(p, _)| p)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------- PGM

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmDepth {
    Eight,
    Sixteen,
}

impl PgmDepth {
    fn maxval(self) -> u32 {
        match self {
            PgmDepth::Eight => 255,
            PgmDepth::Sixteen => 65535,
        }
    }
}

/// Binary (P5) PGM; intensities in `[0, 1]` are clamped and rounded.
pub fn encode_pgm(img: &RawImage, depth: PgmDepth, comments: &[String]) -> Vec<u8> {
    let max = depth.maxval();
    let mut out = b"P5\n".to_vec();
    for c in comments {
        out.extend_from_slice(format!("# {}\n", c.replace('\n', " ")).as_bytes());
    }
    out.extend_from_slice(format!("{} {}\n{}\n", img.width, img.height, max).as_bytes());
    for &v in &img.pixels {
        let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        let q = (v * max as f64).round() as u32;
        match depth {
            PgmDepth::Eight => out.push(q as u8),
            PgmDepth::Sixteen => out.extend_from_slice(&(q as u16).to_be_bytes()),
        }
    }
    out
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self) -> Result<u32> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("expected a number at byte {start}")))
    }
}

/// Reads P2 (ASCII) or P5 (binary) PGM with 8- or 16-bit samples, scaled to `[0, 1]`.
pub fn decode_pgm(bytes: &[u8]) -> Result<RawImage> {
    if bytes.len() < 2 || bytes[0] != b'P' || !matches!(bytes[1], b'2' | b'5') {
        return Err(Error::Format("not a P2/P5 PGM".into()));
    }
    let binary = bytes[1] == b'5';
    let mut h = Header { bytes, pos: 2 };
    let (w, hgt, max) = (h.number()? as usize, h.number()? as usize, h.number()?);
    if max == 0 || max > 65535 {
        return Err(Error::Format(format!("invalid maxval {max}")));
    }
    let n = w * hgt;
    let mut pixels = Vec::with_capacity(n);
    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        let start = h.pos + 1;
        let wide = max > 255;
        let need = n * if wide { 2 } else { 1 };
        let data = bytes
            .get(start..start + need)
            .ok_or_else(|| Error::Format("truncated raster".into()))?;
        if wide {
            pixels.extend(
                data.chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / max as f64),
            );
        } else {
            pixels.extend(data.iter().map(|&b| b as f64 / max as f64));
        }
    } else {
        for _ in 0..n {
            let v = h.number()?;
            if v > max {
                return Err(Error::Format(format!("sample {v} exceeds maxval {max}")));
            }
            pixels.push(v as f64 / max as f64);
        }
    }
    RawImage::from_pixels(w, hgt, pixels)
}

pub fn write_pgm(path: &Path, img: &RawImage, depth: PgmDepth, comments: &[String]) -> Result<()> {
    fs::write(path, encode_pgm(img, depth, comments)).map_err(at(path))?;
    Ok(())
}

pub fn read_pgm(path: &Path) -> Result<RawImage> {
    decode_pgm(&fs::read(path).map_err(at(path))?)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------- CSV

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

fn comment_header(comments: &[String]) -> String {
    comments.iter().map(|c| format!("# {c}\n")).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct ObservationRecord {
    mirror_index: usize,
    board: usize,
    row: usize,
    col: usize,
    px: f64,
    py: f64,
}

pub fn observations_to_csv(obs: &Observations, comments: &[String]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if obs.observations.is_empty() {
        w.write_record(["mirror_index", "board", "row", "col", "px", "py"])
            .map_err(csv_err)?;
    }
    for o in &obs.observations {
        w.serialize(ObservationRecord {
            mirror_index: o.mirror_index,
            board: o.corner.board,
            row: o.corner.row,
            col: o.corner.col,
            px: o.pixel.x,
            py: o.pixel.y,
        })
        .map_err(csv_err)?;
    }
    let body = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    Ok(comment_header(comments) + &String::from_utf8_lossy(&body))
}

pub fn observations_from_csv(text: &str) -> Result<Observations> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut observations = Vec::new();
    for rec in r.deserialize::<ObservationRecord>() {
        let rec = rec.map_err(csv_err)?;
        observations.push(Observation {
            mirror_index: rec.mirror_index,
            corner: CornerId {
                board: rec.board,
                row: rec.row,
                col: rec.col,
            },
            pixel: Vector2::new(rec.px, rec.py),
        });
    }
    Ok(Observations {
        observations,
        warning: None,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct FeatureRecord {
    u: f64,
    v: f64,
    slope: f64,
    support: usize,
    residual_rms_px: f64,
    /// Supporting views as `s:t` pairs separated by spaces.
    views: String,
}

pub fn features_to_csv(features: &[Feature4D], comments: &[String]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if features.is_empty() {
        w.write_record(["u", "v", "slope", "support", "residual_rms_px", "views"])
            .map_err(csv_err)?;
    }
    for f in features {
        let views = f
            .views
            .iter()
            .map(|(s, t)| format!("{s}:{t}"))
            .collect::<Vec<_>>()
            .join(" ");
        w.serialize(FeatureRecord {
            u: f.u,
            v: f.v,
            slope: f.slope,
            support: f.support,
            residual_rms_px: f.residual_rms_px,
            views,
        })
        .map_err(csv_err)?;
    }
    let body = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    Ok(comment_header(comments) + &String::from_utf8_lossy(&body))
}

pub fn features_from_csv(text: &str) -> Result<Vec<Feature4D>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in r.deserialize::<FeatureRecord>() {
        let rec = rec.map_err(csv_err)?;
        let views = rec
            .views
            .split_whitespace()
            .map(|p| {
                let (s, t) = p
                    .split_once(':')
                    .ok_or_else(|| Error::Format(format!("bad view {p:?}")))?;
                let parse = |x: &str| {
                    x.parse::<usize>()
                        .map_err(|_| Error::Format(format!("bad view {p:?}")))
                };
                Ok((parse(s)?, parse(t)?))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(Feature4D {
            u: rec.u,
            v: rec.v,
            slope: rec.slope,
            support: rec.support,
            residual_rms_px: rec.residual_rms_px,
            views,
        });
    }
    Ok(out)
}

/// Any serializable rows as CSV, with a comment header.
pub fn rows_to_csv<T: Serialize>(rows: &[T], comments: &[String]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    let body = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    Ok(comment_header(comments) + &String::from_utf8_lossy(&body))
}

// ---------------------------------------------------------------- OBJ

/// Named polygons as OBJ objects, one face each.
pub fn polygons_to_obj(objects: &[(String, Vec<Vector3<f64>>)], comments: &[String]) -> String {
    let mut s = String::new();
    for c in comments {
        let _ = writeln!(s, "# {c}");
    }
    let mut base = 1;
    for (name, verts) in objects {
        let _ = writeln!(s, "o {name}");
        for v in verts {
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        let idx: Vec<String> = (base..base + verts.len()).map(|i| i.to_string()).collect();
        let _ = writeln!(s, "f {}", idx.join(" "));
        base += verts.len();
    }
    s
}

/// Mirror extents in world coordinates, objects named `mirror_k`.
pub fn mirrors_to_obj(mirrors: &[MirrorPlane], comments: &[String]) -> String {
    let objects: Vec<(String, Vec<Vector3<f64>>)> = mirrors
        .iter()
        .enumerate()
        .map(|(k, m)| (format!("mirror_{k}"), m.world_vertices()))
        .collect();
    polygons_to_obj(&objects, comments)
}

/// Reads objects back as their face polygons (vertex order as listed in
/// each face).
pub fn obj_to_polygons(text: &str) -> Result<Vec<(String, Vec<Vector3<f64>>)>> {
    let mut verts: Vec<Vector3<f64>> = Vec::new();
    let mut out: Vec<(String, Vec<Vector3<f64>>)> = Vec::new();
    let mut name = String::new();
    for (ln, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        let bad = || Error::Format(format!("OBJ line {}: {line:?}", ln + 1));
        match it.next() {
            Some("o") => name = it.collect::<Vec<_>>().join(" "),
            Some("v") => {
                let c: Vec<f64> = it
                    .map(|x| x.parse().map_err(|_| bad()))
                    .collect::<Result<_>>()?;
                if c.len() < 3 {
                    return Err(bad());
                }
                verts.push(Vector3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let poly = it
                    .map(|x| {
                        let i: usize = x
                            .split('/')
                            .next()
                            .unwrap_or("")
                            .parse()
                            .map_err(|_| bad())?;
                        verts.get(i.wrapping_sub(1)).copied().ok_or_else(bad)
                    })
                    .collect::<Result<Vec<_>>>()?;
                out.push((name.clone(), poly));
            }
            _ => {}
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- SVG

const PANEL: f64 = 360.0;
const PAD: f64 = 20.0;
const COLORS: [&str; 9] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#17becf",
];

/// Footprints of every mirror and their common overlap on each evaluation
/// plane: one row per labelled design, one column per depth.
pub fn overlap_svg(panels: &[(&str, &DesignState)], comments: &[String]) -> Result<String> {
    let depths: Vec<f64> = panels
        .first()
        .map(|(_, s)| s.spec.eval_depths.clone())
        .unwrap_or_default();
    let (w, h) = (
        depths.len().max(1) as f64 * (PANEL + PAD) + PAD,
        panels.len().max(1) as f64 * (PANEL + 2.0 * PAD) + PAD,
    );
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#
    );
    for c in comments {
        let _ = writeln!(s, "<!-- {} -->", c.replace("--", "- -"));
    }
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (row, (label, state)) in panels.iter().enumerate() {
        for (col, &depth) in depths.iter().enumerate() {
            let (frame, fps) = footprints_local(state, depth)?;
            let (overlap, area) = full_overlap(state, depth)?;
            let all: Vec<&Vector2<f64>> = fps.iter().flatten().collect();
            let (mut lo, mut hi) = (
                Vector2::repeat(f64::INFINITY),
                Vector2::repeat(f64::NEG_INFINITY),
            );
            for p in &all {
                lo = lo.inf(p);
                hi = hi.sup(p);
            }
            let scale = PANEL / (hi - lo).max().max(1e-12);
            let ox = PAD + col as f64 * (PANEL + PAD);
            let oy = 2.0 * PAD + row as f64 * (PANEL + 2.0 * PAD);
            // Plane v points down the page so the plot is not mirrored.
            let map = |p: &Vector2<f64>| (ox + (p.x - lo.x) * scale, oy + (p.y - lo.y) * scale);
            let pts = |poly: &[Vector2<f64>]| {
                poly.iter()
                    .map(|p| {
                        let (x, y) = map(p);
                        format!("{x:.2},{y:.2}")
                    })
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            let _ = writeln!(
                s,
                r#"<text x="{ox:.0}" y="{:.0}" font-family="sans-serif" font-size="12">{label} depth {depth} m, overlap {:.3e} m²</text>"#,
                oy - 6.0,
                area
            );
            if let Some(ov) = overlap {
                let local: Vec<Vector2<f64>> =
                    ov.vertices.iter().map(|v| frame.to_local(v)).collect();
                let _ = writeln!(
                    s,
                    r##"<polygon points="{}" fill="#444" fill-opacity="0.3" stroke="none"/>"##,
                    pts(&local)
                );
            }
            for (k, fp) in fps.iter().enumerate() {
                let _ = writeln!(
                    s,
                    r#"<polygon points="{}" fill="none" stroke="{}" stroke-width="1.2"/>"#,
                    pts(fp),
                    COLORS[k % COLORS.len()]
                );
            }
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

// ---------------------------------------------------------------- light field

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfViewEntry {
    pub s: usize,
    pub t: usize,
    pub mirror_index: usize,
    pub image: String,
    pub mask: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfManifest {
    pub s_count: usize,
    pub t_count: usize,
    pub u_count: usize,
    pub v_count: usize,
    pub source_id: String,
    pub warnings: Vec<String>,
    pub model: RectifiedGridModel,
    pub views: Vec<LfViewEntry>,
    pub tile: Option<String>,
}

fn view_raw(img: &MaskedImage) -> RawImage {
    let px = img
        .pixels
        .iter()
        .zip(&img.mask)
        .map(|(p, m)| if *m { *p } else { 0.0 })
        .collect();
    RawImage {
        width: img.width,
        height: img.height,
        pixels: px,
    }
}

fn mask_raw(img: &MaskedImage) -> RawImage {
    RawImage {
        width: img.width,
        height: img.height,
        pixels: img
            .mask
            .iter()
            .map(|m| if *m { 1.0 } else { 0.0 })
            .collect(),
    }
}

/// Writes `view_s_t.pgm` (16-bit), `mask_s_t.pgm`, `lf.json` and optionally
/// `tile.pgm` into `dir`.
pub fn write_lf_dir(
    dir: &Path,
    lf: &LightField4D,
    provenance: &Provenance,
    tile: bool,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(at(dir))?;
    let comments = provenance.comment_lines();
    let mut views = Vec::new();
    for v in &lf.views {
        let image = format!("view_{}_{}.pgm", v.s, v.t);
        let mask = format!("mask_{}_{}.pgm", v.s, v.t);
        write_pgm(
            &dir.join(&image),
            &view_raw(&v.image),
            PgmDepth::Sixteen,
            &comments,
        )?;
        write_pgm(
            &dir.join(&mask),
            &mask_raw(&v.image),
            PgmDepth::Eight,
            &comments,
        )?;
        views.push(LfViewEntry {
            s: v.s,
            t: v.t,
            mirror_index: v.mirror_index,
            image,
            mask,
        });
    }
    let tile_name = tile.then(|| "tile.pgm".to_string());
    if let Some(name) = &tile_name {
        write_pgm(
            &dir.join(name),
            &crate::decode::tile(lf),
            PgmDepth::Sixteen,
            &comments,
        )?;
    }
    let manifest = LfManifest {
        s_count: lf.s_count,
        t_count: lf.t_count,
        u_count: lf.u_count,
        v_count: lf.v_count,
        source_id: lf.source_id.clone(),
        warnings: lf.warnings.clone(),
        model: lf.model.clone(),
        views,
        tile: tile_name,
    };
    write_json(
        &dir.join("lf.json"),
        schema::LIGHT_FIELD,
        provenance,
        &manifest,
    )
}

pub fn read_lf_dir(dir: &Path) -> Result<LightField4D> {
    let m: LfManifest = read_json(&dir.join("lf.json"), schema::LIGHT_FIELD)?;
    let mut views = Vec::new();
    for e in &m.views {
        let img = read_pgm(&dir.join(&e.image))?;
        let mask = read_pgm(&dir.join(&e.mask))?;
        if (img.width, img.height) != (m.u_count, m.v_count)
            || (mask.width, mask.height) != (m.u_count, m.v_count)
        {
            return Err(Error::Format(format!(
                "view ({}, {}) has the wrong size",
                e.s, e.t
            )));
        }
        views.push(LfView {
            s: e.s,
            t: e.t,
            mirror_index: e.mirror_index,
            image: MaskedImage {
                width: img.width,
                height: img.height,
                pixels: img.pixels,
                mask: mask.pixels.iter().map(|v| *v > 0.5).collect(),
            },
        });
    }
    Ok(LightField4D {
        s_count: m.s_count,
        t_count: m.t_count,
        u_count: m.u_count,
        v_count: m.v_count,
        views,
        model: m.model,
        source_id: m.source_id,
        warnings: m.warnings,
    })
}

/// Reads a whole file, mapping errors to carry the path.
pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut f = fs::File::open(path).map_err(at(path))?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf)?;
    Ok(buf)
}

/// Writes text, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p).map_err(at(p))?;
    }
    let mut f = fs::File::create(path).map_err(at(path))?;
    f.write_all(text.as_bytes())?;
    Ok(())
}
