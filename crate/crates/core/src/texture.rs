//! Texture baking by visibility-weighted averaging of camera images.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose, TriangleMesh};
use crate::raycast::MeshBvh;

#[derive(Debug, Error)]
pub enum TextureError {
    #[error("mesh has no uv coordinates")]
    NoUVs,
    #[error("no camera views given")]
    NoViews,
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid resolution {0}x{1}")]
    InvalidResolution(usize, usize),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("png decode: {0}")]
    PngDecode(#[from] png::DecodingError),
    #[error("png encode: {0}")]
    PngEncode(#[from] png::EncodingError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Flag color for texels no camera sees.
pub const UNSEEN: [u8; 3] = [255, 0, 255];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    /// Pinhole camera looking along +z with the principal point centered.
    pub fn centered(width: usize, height: usize, focal: f64) -> Self {
        Self {
            fx: focal,
            fy: focal,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            width,
            height,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Row-major, three bytes per pixel.
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        Self {
            width,
            height,
            data: rgb.iter().copied().cycle().take(width * height * 3).collect(),
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Bilinear lookup with pixel centers at integer coordinates.
    pub fn sample(&self, x: f64, y: f64) -> [f64; 3] {
        let x0 = (x.floor() as isize).clamp(0, self.width as isize - 1) as usize;
        let y0 = (y.floor() as isize).clamp(0, self.height as isize - 1) as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (fx, fy) = ((x - x0 as f64).clamp(0.0, 1.0), (y - y0 as f64).clamp(0.0, 1.0));
        let [a, b, c, d] = [self.pixel(x0, y0), self.pixel(x1, y0), self.pixel(x0, y1), self.pixel(x1, y1)];
        let mut out = [0.0; 3];
        for k in 0..3 {
            let top = a[k] as f64 * (1.0 - fx) + b[k] as f64 * fx;
            let bottom = c[k] as f64 * (1.0 - fx) + d[k] as f64 * fx;
            out[k] = top * (1.0 - fy) + bottom * fy;
        }
        out
    }
}

/// Pinhole view; `pose` maps camera coordinates (x right, y down, z forward)
/// to the world.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraView {
    pub pose: Pose,
    pub intrinsics: Intrinsics,
    pub image: RgbImage,
}

impl CameraView {
    pub fn validate(&self) -> Result<(), TextureError> {
        let k = &self.intrinsics;
        if !(k.fx > 0.0 && k.fy > 0.0) || k.width == 0 || k.height == 0 {
            return Err(TextureError::InvalidCamera(format!("intrinsics {k:?}")));
        }
        if self.image.width != k.width || self.image.height != k.height || self.image.data.len() != 3 * k.width * k.height {
            return Err(TextureError::InvalidCamera("image size does not match intrinsics".into()));
        }
        Ok(())
    }

    /// Pixel coordinates of a world point in front of the camera and inside
    /// the sampled image area.
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        let c = self.pose.inverse().transform_point(p);
        if c.z <= 0.0 {
            return None;
        }
        let k = &self.intrinsics;
        let (u, v) = (k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy);
        let inside = u >= 0.0 && v >= 0.0 && u <= (k.width - 1) as f64 && v <= (k.height - 1) as f64;
        inside.then_some((u, v))
    }

    /// Camera at `eye` looking at `target`, image "up" roughly along `up`.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>, intrinsics: Intrinsics, image: RgbImage) -> Self {
        let z = (target - eye).normalize();
        let x = z.cross(&up).normalize();
        let y = z.cross(&x);
        let r = nalgebra::Rotation3::from_basis_unchecked(&[x, y, z]);
        Self {
            pose: Pose::new(eye, UnitQuaternion::from_rotation_matrix(&r)),
            intrinsics,
            image,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TextureMap {
    pub width: usize,
    pub height: usize,
    /// Averaged color per texel, row 0 at v = 1.
    pub texels: Vec<[f64; 3]>,
    pub counts: Vec<u32>,
    /// Texels inside some UV triangle.
    pub covered: Vec<bool>,
}

impl TextureMap {
    /// RGB8 raster: averages rounded, unseen covered texels magenta,
    /// uncovered texels black.
    pub fn to_rgb8(&self) -> RgbImage {
        let mut data = Vec::with_capacity(self.texels.len() * 3);
        for ((t, &n), &cov) in self.texels.iter().zip(&self.counts).zip(&self.covered) {
            let px = if n > 0 {
                t.map(|c| c.round().clamp(0.0, 255.0) as u8)
            } else if cov {
                UNSEEN
            } else {
                [0, 0, 0]
            };
            data.extend_from_slice(&px);
        }
        RgbImage {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BakeConfig {
    /// Surface offset for the visibility ray, as a fraction of the mesh
    /// bounding-box diagonal.
    pub epsilon_scale: f64,
}

impl Default for BakeConfig {
    fn default() -> Self {
        Self { epsilon_scale: 1e-4 }
    }
}

/// Texel owner: triangle index and barycentric weights, first triangle wins.
fn rasterize_uvs(mesh: &TriangleMesh, uvs: &[[f64; 2]], w: usize, h: usize) -> Vec<Option<(usize, [f64; 3])>> {
    let mut owner = vec![None; w * h];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let q = tri.map(|i| uvs[i as usize]);
        let to_px = |p: [f64; 2]| (p[0] * w as f64 - 0.5, (1.0 - p[1]) * h as f64 - 0.5);
        let c = q.map(to_px);
        let det = (c[1].0 - c[0].0) * (c[2].1 - c[0].1) - (c[2].0 - c[0].0) * (c[1].1 - c[0].1);
        if det.abs() < 1e-18 {
            continue;
        }
        let xs = [c[0].0, c[1].0, c[2].0];
        let ys = [c[0].1, c[1].1, c[2].1];
        let lo_x = xs.iter().copied().fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let hi_x = (xs.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil() as isize).min(w as isize - 1);
        let lo_y = ys.iter().copied().fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let hi_y = (ys.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil() as isize).min(h as isize - 1);
        if hi_x < 0 || hi_y < 0 {
            continue;
        }
        for y in lo_y..=hi_y as usize {
            for x in lo_x..=hi_x as usize {
                let (px, py) = (x as f64, y as f64);
                let l1 = ((px - c[0].0) * (c[2].1 - c[0].1) - (c[2].0 - c[0].0) * (py - c[0].1)) / det;
                let l2 = ((c[1].0 - c[0].0) * (py - c[0].1) - (px - c[0].0) * (c[1].1 - c[0].1)) / det;
                let l0 = 1.0 - l1 - l2;
                let tol = -1e-12;
                if l0 >= tol && l1 >= tol && l2 >= tol {
                    let slot = &mut owner[y * w + x];
                    if slot.is_none() {
                        *slot = Some((t, [l0, l1, l2]));
                    }
                }
            }
        }
    }
    owner
}

/// Sets every texel covered by the UV layout to the mean color over the
/// cameras that see its surface point unobstructed.
pub fn bake_texture(
    mesh: &TriangleMesh,
    views: &[CameraView],
    width: usize,
    height: usize,
    config: &BakeConfig,
) -> Result<TextureMap, TextureError> {
    let uvs = mesh.uvs.as_deref().ok_or(TextureError::NoUVs)?;
    if views.is_empty() {
        return Err(TextureError::NoViews);
    }
    if width == 0 || height == 0 {
        return Err(TextureError::InvalidResolution(width, height));
    }
    for v in views {
        v.validate()?;
    }
    let eps = mesh
        .bounding_box()
        .map_or(0.0, |(lo, hi)| (hi - lo).norm() * config.epsilon_scale);
    let bvh = MeshBvh::build(mesh);
    let owner = rasterize_uvs(mesh, uvs, width, height);

    let texels: Vec<([f64; 3], u32)> = owner
        .par_iter()
        .map(|slot| {
            let Some((t, w)) = slot else {
                return ([0.0; 3], 0);
            };
            let c = mesh.corners(*t);
            let p = c[0] * w[0] + c[1] * w[1] + c[2] * w[2];
            let n = mesh.triangle_normal(*t);
            let mut samples: Vec<[f64; 3]> = Vec::new();
            for view in views {
                let Some((u, v)) = view.project(&p) else {
                    continue;
                };
                let eye = view.pose.position;
                let side = if n.dot(&(eye - p)) >= 0.0 { 1.0 } else { -1.0 };
                let origin = p + n * (side * eps);
                let to_eye = eye - origin;
                let dist = to_eye.norm();
                if bvh.occluded(&origin, &(to_eye / dist), 0.0, dist) {
                    continue;
                }
                samples.push(view.image.sample(u, v));
            }
            if samples.is_empty() {
                return ([0.0; 3], 0);
            }
            // sorted so the sum does not depend on view order
            samples.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])).then(a[2].total_cmp(&b[2])));
            let mut sum = [0.0; 3];
            for s in &samples {
                for k in 0..3 {
                    sum[k] += s[k];
                }
            }
            let n = samples.len() as f64;
            (sum.map(|s| s / n), samples.len() as u32)
        })
        .collect();

    Ok(TextureMap {
        width,
        height,
        covered: owner.iter().map(Option::is_some).collect(),
        texels: texels.iter().map(|t| t.0).collect(),
        counts: texels.iter().map(|t| t.1).collect(),
    })
}

/// Renders `mesh` with one flat color per triangle; misses get `background`.
pub fn render_flat(
    mesh: &TriangleMesh,
    bvh: &MeshBvh,
    colors: &[[u8; 3]],
    pose: &Pose,
    intrinsics: &Intrinsics,
    background: [u8; 3],
) -> RgbImage {
    let k = *intrinsics;
    let rows: Vec<Vec<u8>> = (0..k.height)
        .into_par_iter()
        .map(|y| {
            let mut row = Vec::with_capacity(3 * k.width);
            for x in 0..k.width {
                let d = Vector3::new((x as f64 - k.cx) / k.fx, (y as f64 - k.cy) / k.fy, 1.0);
                let dir = pose.rotation * d.normalize();
                let px = match bvh.first_hit(&pose.position, &dir, 0.0, f64::INFINITY) {
                    Some(hit) if hit.triangle < mesh.triangles.len() => colors[hit.triangle],
                    _ => background,
                };
                row.extend_from_slice(&px);
            }
            row
        })
        .collect();
    RgbImage {
        width: k.width,
        height: k.height,
        data: rows.concat(),
    }
}

pub fn write_png(path: impl AsRef<Path>, img: &RgbImage) -> Result<(), TextureError> {
    let w = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(w, img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    writer.write_image_data(&img.data)?;
    writer.finish()?;
    Ok(())
}

pub fn read_png(path: impl AsRef<Path>) -> Result<RgbImage, TextureError> {
    let mut dec = png::Decoder::new(std::io::BufReader::new(File::open(path)?));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info()?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let px = &buf[..info.buffer_size()];
    let data: Vec<u8> = match info.color_type {
        png::ColorType::Rgb => px.to_vec(),
        png::ColorType::Rgba => px.chunks(4).flat_map(|c| [c[0], c[1], c[2]]).collect(),
        png::ColorType::Grayscale => px.iter().flat_map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => px.chunks(2).flat_map(|c| [c[0], c[0], c[0]]).collect(),
        png::ColorType::Indexed => return Err(TextureError::InvalidCamera("indexed png after expansion".into())),
    };
    Ok(RgbImage { width: w, height: h, data })
}

/// Binary PGM of the per-texel visible-camera counts (clamped to 255).
pub fn write_count_pgm(path: impl AsRef<Path>, map: &TextureMap) -> Result<(), TextureError> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{} {}\n255\n", map.width, map.height)?;
    let bytes: Vec<u8> = map.counts.iter().map(|&c| c.min(255) as u8).collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// Camera description on disk; `image` is relative to the JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    /// (w, x, y, z), camera to world.
    pub quaternion: [f64; 4],
    pub translation: [f64; 3],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub image: PathBuf,
}

pub fn load_cameras(path: impl AsRef<Path>) -> Result<Vec<CameraView>, TextureError> {
    let path = path.as_ref();
    let records: Vec<CameraRecord> = serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?;
    let base = path.parent().unwrap_or(Path::new("."));
    records
        .into_iter()
        .map(|r| {
            let view = CameraView {
                pose: Pose::from_wxyz(Vector3::from(r.translation), r.quaternion),
                intrinsics: Intrinsics {
                    fx: r.fx,
                    fy: r.fy,
                    cx: r.cx,
                    cy: r.cy,
                    width: r.width,
                    height: r.height,
                },
                image: read_png(base.join(&r.image))?,
            };
            view.validate()?;
            Ok(view)
        })
        .collect()
}

pub fn save_cameras(path: impl AsRef<Path>, views: &[CameraView], image_prefix: &str) -> Result<(), TextureError> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let mut records = Vec::with_capacity(views.len());
    for (i, v) in views.iter().enumerate() {
        let name = PathBuf::from(format!("{image_prefix}{i:02}.png"));
        write_png(base.join(&name), &v.image)?;
        let k = v.intrinsics;
        records.push(CameraRecord {
            quaternion: v.pose.wxyz(),
            translation: v.pose.position.into(),
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
            image: name,
        });
    }
    serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), &records)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(z: f64) -> TriangleMesh {
        TriangleMesh::with_uvs(
            vec![
                Vector3::new(-0.5, -0.5, z),
                Vector3::new(0.5, -0.5, z),
                Vector3::new(0.5, 0.5, z),
                Vector3::new(-0.5, 0.5, z),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
            Some(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
        )
        .unwrap()
    }

    fn overhead(color: [u8; 3], x: f64) -> CameraView {
        let k = Intrinsics::centered(64, 64, 40.0);
        CameraView::look_at(Vector3::new(x, 0.0, 2.0), Vector3::new(x, 0.0, 0.0), Vector3::y(), k, RgbImage::filled(64, 64, color))
    }

    #[test]
    fn single_red_camera() {
        let map = bake_texture(&quad(0.0), &[overhead([255, 0, 0], 0.0)], 16, 16, &BakeConfig::default()).unwrap();
        assert!(map.covered.iter().all(|&c| c));
        assert!(map.texels.iter().all(|t| *t == [255.0, 0.0, 0.0]));
        assert!(map.counts.iter().all(|&n| n == 1));
    }

    #[test]
    fn projection_round_trip() {
        let v = overhead([0; 3], 0.0);
        let (u, w) = v.project(&Vector3::new(0.0, 0.0, 0.0)).unwrap();
        assert!((u - 31.5).abs() < 1e-12 && (w - 31.5).abs() < 1e-12);
        assert!(v.project(&Vector3::new(0.0, 0.0, 3.0)).is_none());
    }

    #[test]
    fn bilinear_midpoint() {
        let img = RgbImage::from_fn(2, 1, |x, _| [if x == 0 { 0 } else { 200 }, 0, 0]);
        assert_eq!(img.sample(0.5, 0.0)[0], 100.0);
        assert_eq!(img.sample(0.25, 0.0)[0], 50.0);
    }

    #[test]
    fn missing_inputs() {
        let mut m = quad(0.0);
        assert!(matches!(bake_texture(&m, &[], 4, 4, &BakeConfig::default()), Err(TextureError::NoViews)));
        m.uvs = None;
        assert!(matches!(
            bake_texture(&m, &[overhead([0; 3], 0.0)], 4, 4, &BakeConfig::default()),
            Err(TextureError::NoUVs)
        ));
    }

    #[test]
    fn png_and_camera_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = RgbImage::from_fn(5, 3, |x, y| [x as u8 * 40, y as u8 * 80, 7]);
        write_png(dir.path().join("a.png"), &img).unwrap();
        assert_eq!(read_png(dir.path().join("a.png")).unwrap(), img);
        let mut cam = overhead([1, 2, 3], 0.2);
        cam.image = RgbImage::filled(64, 64, [9, 8, 7]);
        save_cameras(dir.path().join("cams.json"), &[cam.clone()], "view").unwrap();
        let back = load_cameras(dir.path().join("cams.json")).unwrap();
        assert_eq!(back[0].image, cam.image);
        assert!((back[0].pose.position - cam.pose.position).norm() < 1e-15);
    }
}
