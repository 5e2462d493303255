//! Dataset directories: `spec.txt`, per-frame `frame_NNNN.ppm`,
//! `depth_NNNN.raw`, `feat_NNNN.raw`, `mask_NNNN.raw`, plus `cameras.csv`,
//! `codebook.raw` and `points.csv`.

use std::path::Path;

use super::spec::SceneSpec;
use super::world::{Dataset, Frame};
use crate::error::{Error, Result};
use crate::render::image::{read_ppm, read_raw, write_ppm, write_raw};
use crate::render::Image;
use crate::scene::Camera;

const CAMERA_HEADER: [&str; 21] = [
    "frame", "t", "r00", "r01", "r02", "r10", "r11", "r12", "r20", "r21", "r22", "tx", "ty", "tz", "fx", "fy", "cx", "cy",
    "width", "height", "near",
];
const POINT_HEADER: [&str; 7] = ["x", "y", "z", "r", "g", "b", "label"];

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Config(format!("{}: {e}", path.display()))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, path: &Path) -> Result<T> {
    let line = rec.position().map_or(0, |p| p.line());
    rec.get(i)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Config(format!("{}: line {line}: bad value in column {}", path.display(), i + 1)))
}

pub fn save_dataset(data: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("spec.txt"), data.spec.to_text())?;
    let cam_path = dir.join("cameras.csv");
    let mut cams = csv::Writer::from_path(&cam_path).map_err(|e| csv_error(&cam_path, e))?;
    let mut header = CAMERA_HEADER.to_vec();
    header.push("far");
    cams.write_record(&header).map_err(|e| csv_error(&cam_path, e))?;
    for f in &data.frames {
        let c = &f.camera;
        let mut rec = vec![f.index.to_string(), f.t.to_string()];
        rec.extend(c.rotation.iter().flatten().map(|v| v.to_string()));
        rec.extend(c.translation.iter().map(|v| v.to_string()));
        rec.extend([c.fx, c.fy, c.cx, c.cy].map(|v| v.to_string()));
        rec.extend([c.width.to_string(), c.height.to_string(), c.near.to_string(), c.far.to_string()]);
        cams.write_record(&rec).map_err(|e| csv_error(&cam_path, e))?;
        let i = f.index;
        write_ppm(&f.rgb, dir.join(format!("frame_{i:04}.ppm")))?;
        write_raw(&f.depth, dir.join(format!("depth_{i:04}.raw")))?;
        write_raw(&f.feature, dir.join(format!("feat_{i:04}.raw")))?;
        let mask = Image::from_vec(f.rgb.width, f.rgb.height, 1, f.mask.iter().map(|&m| m as f64).collect())?;
        write_raw(&mask, dir.join(format!("mask_{i:04}.raw")))?;
    }
    cams.flush()?;
    let dim = data.codebook.first().map_or(0, |r| r.len());
    let book = Image::from_vec(dim, data.codebook.len(), 1, data.codebook.concat())?;
    write_raw(&book, dir.join("codebook.raw"))?;
    let pts_path = dir.join("points.csv");
    let mut pts = csv::Writer::from_path(&pts_path).map_err(|e| csv_error(&pts_path, e))?;
    pts.write_record(POINT_HEADER).map_err(|e| csv_error(&pts_path, e))?;
    for ((p, c), l) in data.points.iter().zip(&data.point_colors).zip(&data.point_labels) {
        let mut rec: Vec<String> = p.iter().chain(c).map(|v| v.to_string()).collect();
        rec.push(l.to_string());
        pts.write_record(&rec).map_err(|e| csv_error(&pts_path, e))?;
    }
    pts.flush()?;
    Ok(())
}

fn check_size<T>(img: &Image<T>, spec: &SceneSpec, channels: usize, what: &str) -> Result<()> {
    if img.width != spec.width || img.height != spec.height || img.channels != channels {
        return Err(Error::Shape(format!(
            "{what}: {}x{}x{}, expected {}x{}x{channels}",
            img.width, img.height, img.channels, spec.width, spec.height
        )));
    }
    Ok(())
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let spec = SceneSpec::parse(&std::fs::read_to_string(dir.join("spec.txt"))?)?;
    let cam_path = dir.join("cameras.csv");
    let mut reader = csv::Reader::from_path(&cam_path).map_err(|e| csv_error(&cam_path, e))?;
    let mut frames = Vec::with_capacity(spec.frames);
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(&cam_path, e))?;
        let p = cam_path.as_path();
        let index: usize = field(&rec, 0, p)?;
        if index != frames.len() {
            return Err(Error::Config(format!("{}: frames out of order at {index}", p.display())));
        }
        let t: f64 = field(&rec, 1, p)?;
        let mut rotation = [[0.0; 3]; 3];
        for (k, v) in rotation.iter_mut().flatten().enumerate() {
            *v = field(&rec, 2 + k, p)?;
        }
        let translation = [field(&rec, 11, p)?, field(&rec, 12, p)?, field(&rec, 13, p)?];
        let camera = Camera::new(
            rotation,
            translation,
            field(&rec, 14, p)?,
            field(&rec, 15, p)?,
            field(&rec, 16, p)?,
            field(&rec, 17, p)?,
            field(&rec, 18, p)?,
            field(&rec, 19, p)?,
            field(&rec, 20, p)?,
            field(&rec, 21, p)?,
        )?;
        let i = index;
        let rgb = read_ppm(dir.join(format!("frame_{i:04}.ppm")))?;
        check_size(&rgb, &spec, 3, "frame")?;
        let depth = read_raw(dir.join(format!("depth_{i:04}.raw")))?.map(|v| v as f64);
        check_size(&depth, &spec, 1, "depth")?;
        let feature = read_raw(dir.join(format!("feat_{i:04}.raw")))?.map(|v| v as f64);
        check_size(&feature, &spec, spec.feature_dim, "feature")?;
        let mask_img = read_raw(dir.join(format!("mask_{i:04}.raw")))?;
        check_size(&mask_img, &spec, 1, "mask")?;
        let mask = mask_img.data.iter().map(|&v| v as u32).collect();
        frames.push(Frame { index, t, camera, rgb, depth, feature, mask });
    }
    if frames.len() != spec.frames {
        return Err(Error::Config(format!("{}: {} cameras for {} frames", cam_path.display(), frames.len(), spec.frames)));
    }
    let book = read_raw(dir.join("codebook.raw"))?;
    if book.width != spec.feature_dim || book.height != spec.objects.len() + 1 {
        return Err(Error::Shape(format!("codebook is {}x{}", book.height, book.width)));
    }
    let codebook = book.data.chunks(book.width).map(|r| r.iter().map(|&v| v as f64).collect()).collect();
    let pts_path = dir.join("points.csv");
    let mut reader = csv::Reader::from_path(&pts_path).map_err(|e| csv_error(&pts_path, e))?;
    let (mut points, mut point_colors, mut point_labels) = (Vec::new(), Vec::new(), Vec::new());
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(&pts_path, e))?;
        let p = pts_path.as_path();
        points.push([field(&rec, 0, p)?, field(&rec, 1, p)?, field(&rec, 2, p)?]);
        point_colors.push([field(&rec, 3, p)?, field(&rec, 4, p)?, field(&rec, 5, p)?]);
        point_labels.push(field(&rec, 6, p)?);
    }
    Ok(Dataset { spec, frames, codebook, points, point_colors, point_labels })
}
