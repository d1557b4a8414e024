//! Dataset manifests, set files and ingestion.
//!
//! A set file holds one vectorized image per line, values separated by
//! whitespace or commas; blank lines and `#` comments are skipped. A manifest
//! lists the sets of a dataset:
//!
//! ```text
//! # comment
//! d 400
//! source ETH-80, 20x20 grayscale
//! set cup/cup1.txt cup cup1
//! set cup/cup2.txt cup
//! ```
//!
//! `set` lines carry a path relative to the manifest root, a class label and
//! an optional set id (defaulting to the path). A path that names a directory
//! is read as a folder of image files instead.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use nalgebra::DMatrix;

use crate::error::{MmmlError, Result};
use crate::set_model::ImageSet;

pub const DEFAULT_IMAGE_SIDE: u32 = 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: String,
    pub set_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    /// Expected feature dimension, if declared.
    pub d: Option<usize>,
    pub source_note: String,
}

impl DatasetManifest {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut manifest = DatasetManifest::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| MmmlError::Parse {
                path: origin.to_path_buf(),
                line: lineno + 1,
                message,
            };
            let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            match key {
                "d" => {
                    let d = rest
                        .parse::<usize>()
                        .map_err(|_| err(format!("invalid dimension '{rest}'")))?;
                    manifest.d = Some(d);
                }
                "source" => manifest.source_note = rest.to_string(),
                "set" => {
                    let fields: Vec<&str> = rest.split_whitespace().collect();
                    let (path, label, set_id) = match fields.as_slice() {
                        [p, l] => (*p, *l, *p),
                        [p, l, id] => (*p, *l, *id),
                        _ => return Err(err("expected 'set <path> <label> [set_id]'".into())),
                    };
                    manifest.entries.push(ManifestEntry {
                        path: PathBuf::from(path),
                        label: label.to_string(),
                        set_id: set_id.to_string(),
                    });
                }
                other => return Err(err(format!("unknown directive '{other}'"))),
            }
        }
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| MmmlError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn render(&self) -> String {
        let mut out = String::from("# mmml dataset manifest\n");
        if let Some(d) = self.d {
            let _ = writeln!(out, "d {d}");
        }
        if !self.source_note.is_empty() {
            let _ = writeln!(out, "source {}", self.source_note);
        }
        for e in &self.entries {
            let _ = writeln!(out, "set {} {} {}", e.path.display(), e.label, e.set_id);
        }
        out
    }

    pub fn classes(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.label.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PixelScale {
    /// Values are used as read.
    #[default]
    Raw,
    /// Values are divided by 255.
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestOptions {
    pub pixel_scale: PixelScale,
    /// Side length images are resized to when a set is a directory of images.
    pub image_side: u32,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            pixel_scale: PixelScale::Raw,
            image_side: DEFAULT_IMAGE_SIDE,
        }
    }
}

/// Parses a set file into row vectors (one image per row).
pub fn parse_set_text(text: &str, origin: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    let mut width = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| MmmlError::Parse {
            path: origin.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let row = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(format!("invalid number '{t}'")))
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(err(format!("row has {} values, expected {w}", row.len())))
            }
            _ => {}
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Renders rows with shortest round-trip formatting.
pub fn render_set_text(samples: &DMatrix<f64>) -> String {
    let mut out = String::with_capacity(samples.len() * 12);
    for j in 0..samples.ncols() {
        for i in 0..samples.nrows() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}", samples[(i, j)]);
        }
        out.push('\n');
    }
    out
}

pub fn write_set_file(path: &Path, set: &ImageSet) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| MmmlError::io(parent, e))?;
    }
    fs::write(path, render_set_text(set.samples())).map_err(|e| MmmlError::io(path, e))
}

const IMAGE_EXTENSIONS: &[&str] = &[
    "png", "jpg", "jpeg", "bmp", "pgm", "pnm", "ppm", "tif", "tiff",
];

/// Decodes every image in `dir` (sorted by file name) to grayscale, resizes
/// it to `side × side` bilinearly and flattens it row by row.
pub fn read_image_dir(dir: &Path, side: u32) -> Result<Vec<Vec<f64>>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| MmmlError::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    files
        .iter()
        .map(|path| {
            let img = image::open(path).map_err(|source| MmmlError::Image {
                path: path.clone(),
                source,
            })?;
            let gray = img.to_luma8();
            let resized = image::imageops::resize(&gray, side, side, FilterType::Triangle);
            Ok(resized.pixels().map(|p| f64::from(p.0[0])).collect())
        })
        .collect()
}

/// Reads one manifest entry into an image set.
pub fn read_entry(root: &Path, entry: &ManifestEntry, options: &IngestOptions) -> Result<ImageSet> {
    let path = root.join(&entry.path);
    let mut rows = if path.is_dir() {
        read_image_dir(&path, options.image_side)?
    } else {
        let text = fs::read_to_string(&path).map_err(|e| MmmlError::io(&path, e))?;
        parse_set_text(&text, &path)?
    };
    if options.pixel_scale == PixelScale::Unit {
        for v in rows.iter_mut().flatten() {
            *v /= 255.0;
        }
    }
    ImageSet::from_rows(&rows, entry.label.clone(), entry.set_id.clone())
}

/// Reads every set of a manifest, checking dimensions against the declared
/// `d` (or the first set's dimension) and that at least two classes exist.
pub fn ingest(
    root: &Path,
    manifest: &DatasetManifest,
    options: &IngestOptions,
) -> Result<Vec<ImageSet>> {
    if manifest.classes().len() < 2 {
        return Err(MmmlError::Protocol(format!(
            "dataset needs at least 2 classes, found {}",
            manifest.classes().len()
        )));
    }
    let mut expected = manifest.d;
    let mut sets = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let set = read_entry(root, entry, options)?;
        match expected {
            None => expected = Some(set.dim()),
            Some(d) if d != set.dim() => {
                return Err(MmmlError::Parse {
                    path: root.join(&entry.path),
                    line: 1,
                    message: format!("dimension mismatch: expected d={d}, found d={}", set.dim()),
                })
            }
            _ => {}
        }
        sets.push(set);
    }
    Ok(sets)
}

/// Loads a manifest and ingests it relative to the manifest's directory.
pub fn ingest_manifest(manifest_path: &Path, options: &IngestOptions) -> Result<Vec<ImageSet>> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    ingest(root, &manifest, options)
}

/// Writes `sets` under `dir` as `<label>/<set_id>.txt` plus `manifest.txt`.
pub fn write_dataset(dir: &Path, sets: &[ImageSet], source_note: &str) -> Result<PathBuf> {
    let mut manifest = DatasetManifest {
        d: sets.first().map(ImageSet::dim),
        source_note: source_note.to_string(),
        ..Default::default()
    };
    for set in sets {
        let rel = PathBuf::from(set.label()).join(format!("{}.txt", set.set_id()));
        write_set_file(&dir.join(&rel), set)?;
        manifest.entries.push(ManifestEntry {
            path: rel,
            label: set.label().to_string(),
            set_id: set.set_id().to_string(),
        });
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest.render()).map_err(|e| MmmlError::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_parse_and_render() {
        let text = "# hi\nd 3\nsource toy data\nset a/1.txt a s1\nset b/2.txt b\n";
        let m = DatasetManifest::parse(text, Path::new("m.txt")).unwrap();
        assert_eq!(m.d, Some(3));
        assert_eq!(m.source_note, "toy data");
        assert_eq!(m.entries[1].set_id, "b/2.txt");
        let again = DatasetManifest::parse(&m.render(), Path::new("m.txt")).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn manifest_errors_name_line() {
        let err = DatasetManifest::parse("d 3\nset only\n", Path::new("m.txt")).unwrap_err();
        assert!(matches!(err, MmmlError::Parse { line: 2, .. }));
        let err = DatasetManifest::parse("bogus 1\n", Path::new("m.txt")).unwrap_err();
        assert!(err.to_string().contains("unknown directive"));
    }

    #[test]
    fn set_text_parse_errors() {
        let err = parse_set_text("1 2 3\n4 5\n", Path::new("s.txt")).unwrap_err();
        assert!(matches!(err, MmmlError::Parse { line: 2, .. }));
        let err = parse_set_text("1 2 x\n", Path::new("s.txt")).unwrap_err();
        assert!(err.to_string().contains("s.txt:1"));
        let rows = parse_set_text("# header\n1,2\n\n3 4 # trailing\n", Path::new("s.txt")).unwrap();
        assert_eq!(rows, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }

    #[test]
    fn forty_one_by_four_hundred() {
        let samples = DMatrix::from_fn(400, 41, |i, j| ((i * 7 + j * 13) % 256) as f64);
        let text = render_set_text(&samples);
        let rows = parse_set_text(&text, Path::new("x")).unwrap();
        let set = ImageSet::from_rows(&rows, "c", "x").unwrap();
        assert_eq!((set.dim(), set.len()), (400, 41));
        assert_eq!(set.samples(), &samples);
    }

    #[test]
    fn single_row_set_is_degenerate() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("one.txt"), "1 2 3\n").unwrap();
        let entry = ManifestEntry {
            path: "one.txt".into(),
            label: "a".into(),
            set_id: "one".into(),
        };
        let err = read_entry(dir.path(), &entry, &IngestOptions::default()).unwrap_err();
        assert!(matches!(err, MmmlError::DegenerateSet { .. }));
    }

    #[test]
    fn image_directory_ingestion() {
        let dir = tempfile::tempdir().unwrap();
        let frames = dir.path().join("frames");
        fs::create_dir(&frames).unwrap();
        for k in 0..3u8 {
            let img =
                image::GrayImage::from_fn(40, 40, |x, y| image::Luma([(x as u8 + y as u8) * k]));
            img.save(frames.join(format!("f{k}.png"))).unwrap();
        }
        let entry = ManifestEntry {
            path: "frames".into(),
            label: "a".into(),
            set_id: "frames".into(),
        };
        let options = IngestOptions {
            pixel_scale: PixelScale::Unit,
            image_side: 20,
        };
        let set = read_entry(dir.path(), &entry, &options).unwrap();
        assert_eq!((set.dim(), set.len()), (400, 3));
        assert!(set.samples().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(set.samples().column(0).amax(), 0.0);
    }
}
