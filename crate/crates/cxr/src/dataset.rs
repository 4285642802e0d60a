//! Kaggle chest X-ray folder scanning, manifest files and image decoding.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::thread;

use cxr_core::data::{rgb_to_gray, GrayImage, Label, Manifest, Record, Split};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class folder names, indexed by label.
pub const CLASS_DIRS: [&str; 2] = ["NORMAL", "PNEUMONIA"];

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v = Vec::new();
    for e in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        v.push(e.map_err(|e| Error::io(dir, e))?.path());
    }
    v.sort();
    Ok(v)
}

/// Child directory of `dir` whose name matches `name` ignoring case.
fn find_dir(dir: &Path, name: &str) -> Result<Option<PathBuf>> {
    Ok(sorted_entries(dir)?
        .into_iter()
        .find(|p| p.is_dir() && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.eq_ignore_ascii_case(name))))
}

fn listing(dir: &Path, root: &Path) -> Result<String> {
    let names: Vec<String> = sorted_entries(dir)?
        .iter()
        .filter(|p| p.is_dir())
        .map(|p| relative(p, root))
        .collect();
    Ok(if names.is_empty() { "nothing".into() } else { names.join(", ") })
}

fn relative(path: &Path, root: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

fn is_image(path: &Path) -> bool {
    let ext_ok = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.iter().any(|x| e.eq_ignore_ascii_case(x)));
    ext_ok
        && image::ImageReader::open(path)
            .and_then(|r| r.with_guessed_format())
            .is_ok_and(|r| r.into_dimensions().is_ok())
}

/// Manifest of every decodable image under `root/{train,test,val}/{NORMAL,PNEUMONIA}`.
///
/// Record paths are relative to `root` with `/` separators.
pub fn scan_dataset(root: &Path) -> Result<Manifest> {
    if !root.is_dir() {
        return Err(Error::Layout(format!("dataset root {} is not a directory", root.display())));
    }
    let mut split_dirs = Vec::new();
    for split in Split::ALL {
        let Some(dir) = find_dir(root, split.as_str())? else {
            return Err(Error::Layout(format!(
                "missing split folder {:?} under {}; found {}",
                split.as_str(),
                root.display(),
                listing(root, root)?
            )));
        };
        split_dirs.push((split, dir));
    }
    let mut records = Vec::new();
    for (split, split_dir) in split_dirs {
        for (label, class) in CLASS_DIRS.iter().enumerate() {
            let Some(class_dir) = find_dir(&split_dir, class)? else {
                return Err(Error::Layout(format!(
                    "missing class folder {:?} in {}; found {}",
                    class,
                    relative(&split_dir, root),
                    listing(&split_dir, root)?
                )));
            };
            for file in sorted_entries(&class_dir)? {
                if file.is_file() && is_image(&file) {
                    records.push(Record { path: relative(&file, root), label: Label::from_index(label)?, split });
                }
            }
        }
    }
    Ok(Manifest::new(records)?)
}

#[derive(Serialize, Deserialize)]
struct ManifestRow {
    path: String,
    label: usize,
    split: String,
}

/// CSV with header `path,label,split`.
pub fn write_manifest<W: Write>(manifest: &Manifest, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in manifest.records() {
        w.serialize(ManifestRow { path: r.path.clone(), label: r.label.index(), split: r.split.as_str().into() })?;
    }
    if manifest.is_empty() {
        w.write_record(["path", "label", "split"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest<R: Read>(input: R) -> Result<Manifest> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["path", "label", "split"] {
        return Err(Error::Schema(format!("manifest header {:?}, expected path,label,split", header)));
    }
    let mut records = Vec::new();
    for row in rd.deserialize() {
        let row: ManifestRow = row?;
        records.push(Record { path: row.path, label: Label::from_index(row.label)?, split: row.split.parse()? });
    }
    Ok(Manifest::new(records)?)
}

pub fn save_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_manifest(manifest, std::io::BufWriter::new(f))
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_manifest(std::io::BufReader::new(f))
}

/// Decodes a PNG or JPEG as gray values in `[0, 1]`, bilinearly resized to
/// `side × side`.
pub fn load_grayscale(path: &Path, side: usize) -> Result<GrayImage> {
    let decode = |message: String| Error::Decode { path: path.to_path_buf(), message };
    let img = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| decode(e.to_string()))?;
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let gray = GrayImage::new(h, w, rgb_to_gray(rgb.as_raw())).map_err(|e| decode(e.to_string()))?;
    Ok(if h == side && w == side { gray } else { gray.resize(side, side) })
}

/// Decodes `paths` (relative to `root`) on up to `workers` threads,
/// preserving order.
pub fn load_images(root: &Path, paths: &[&str], side: usize, workers: usize) -> Result<Vec<GrayImage>> {
    let workers = workers.clamp(1, paths.len().max(1));
    let chunk = paths.len().div_ceil(workers).max(1);
    thread::scope(|s| {
        let handles: Vec<_> = paths
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|p| load_grayscale(&root.join(p), side)).collect::<Result<Vec<_>>>()))
            .collect();
        let mut out = Vec::with_capacity(paths.len());
        for h in handles {
            out.extend(h.join().expect("image decoding thread panicked")?);
        }
        Ok(out)
    })
}
