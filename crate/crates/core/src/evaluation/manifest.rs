//! Dataset manifests: a UTF-8 CSV with header `image_id,filename,r,g,b`.
//!
//! Optional metadata lines precede the header:
//!
//! ```text
//! # name: sfu-colorchecker
//! # bit_depth: 16
//! # linear: true
//! image_id,filename,r,g,b
//! 8D5U5524,images/8D5U5524.png,0.31,0.52,0.79
//! ```
//!
//! Filenames are relative to the manifest's directory. Ground truth vectors
//! are normalized on load.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{load_image, write_atomic};
use crate::types::{normalize_illuminant, Illuminant, LinearImage};

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub image_id: String,
    pub filename: String,
    pub ground_truth: Illuminant,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub name: String,
    pub bit_depth: Option<u8>,
    /// When false, images are linearized with a 2.2 gamma on load.
    pub linear: bool,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct Row {
    image_id: String,
    filename: String,
    r: f64,
    g: f64,
    b: f64,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, name: impl Into<String>, entries: Vec<ManifestEntry>) -> Result<Self> {
        let m = Self { root: root.into(), name: name.into(), bit_depth: None, linear: true, entries };
        m.check_unique()?;
        Ok(m)
    }

    fn check_unique(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.image_id.as_str()) {
                return Err(Error::Manifest(format!("duplicate image id {:?}", e.image_id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn image_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.filename)
    }

    pub fn load_image(&self, index: usize) -> Result<LinearImage> {
        load_image(&self.image_path(&self.entries[index]), self.linear)
    }

    /// Checks that every referenced file exists.
    pub fn check_files(&self) -> Result<()> {
        let missing: Vec<&str> =
            self.entries.iter().filter(|e| !self.image_path(e).is_file()).map(|e| e.image_id.as_str()).collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Manifest(format!("missing image files for ids {missing:?}")))
        }
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.image_id.clone()).collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut out = format!("# name: {}\n", self.name);
        if let Some(b) = self.bit_depth {
            out.push_str(&format!("# bit_depth: {b}\n"));
        }
        out.push_str(&format!("# linear: {}\n", self.linear));
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &self.entries {
            let [r, g, b] = e.ground_truth.rgb();
            w.serialize(Row { image_id: e.image_id.clone(), filename: e.filename.clone(), r, g, b })?;
        }
        let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        out.push_str(&String::from_utf8(body).expect("csv output is UTF-8"));
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv()?.as_bytes())
    }
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Manifest(format!("cannot read {}: {e}", path.display())))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(&text, root, path)
}

pub fn parse_manifest(text: &str, root: PathBuf, origin: &Path) -> Result<DatasetManifest> {
    let mut name = origin.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into());
    let mut bit_depth = None;
    let mut linear = true;
    let mut body = String::new();
    for line in text.lines() {
        if let Some(meta) = line.trim_start().strip_prefix('#') {
            if let Some((k, v)) = meta.split_once(':') {
                let v = v.trim();
                match k.trim() {
                    "name" => name = v.to_string(),
                    "bit_depth" => {
                        bit_depth = Some(v.parse().map_err(|_| Error::Manifest(format!("bad bit_depth {v:?}")))?)
                    }
                    "linear" => linear = v.parse().map_err(|_| Error::Manifest(format!("bad linear flag {v:?}")))?,
                    _ => {}
                }
            }
            continue;
        }
        body.push_str(line);
        body.push('\n');
    }

    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
    let headers = reader.headers()?.clone();
    let want = ["image_id", "filename", "r", "g", "b"];
    if headers.iter().collect::<Vec<_>>() != want {
        return Err(Error::Manifest(format!(
            "{}: header must be {}, got {}",
            origin.display(),
            want.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut entries = Vec::new();
    for (line, row) in reader.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::Manifest(format!("{}: row {}: {e}", origin.display(), line + 1)))?;
        let ground_truth = normalize_illuminant([row.r, row.g, row.b])
            .map_err(|e| Error::Manifest(format!("{}: id {:?}: {e}", origin.display(), row.image_id)))?;
        entries.push(ManifestEntry { image_id: row.image_id, filename: row.filename, ground_truth });
    }
    let m = DatasetManifest { root, name, bit_depth, linear, entries };
    m.check_unique()?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_metadata_and_normalizes() {
        let text =
            "# name: demo\n# bit_depth: 16\n# linear: false\nimage_id,filename,r,g,b\na,a.png,2,0,0\nb, b.png ,1,1,1\n";
        let m = parse_manifest(text, "/data".into(), Path::new("x.csv")).unwrap();
        assert_eq!(m.name, "demo");
        assert_eq!(m.bit_depth, Some(16));
        assert!(!m.linear);
        assert_eq!(m.entries[0].ground_truth.rgb(), [1.0, 0.0, 0.0]);
        assert_eq!(m.entries[1].filename, "b.png");
        assert_eq!(m.image_path(&m.entries[1]), PathBuf::from("/data/b.png"));
    }

    #[test]
    fn rejects_bad_manifests() {
        let p = Path::new("x.csv");
        assert!(parse_manifest("id,file,r,g,b\n", "".into(), p).is_err());
        assert!(parse_manifest("image_id,filename,r,g,b\na,a.png,1,1,1\na,b.png,1,1,1\n", "".into(), p).is_err());
        assert!(parse_manifest("image_id,filename,r,g,b\na,a.png,0,0,0\n", "".into(), p).is_err());
        assert!(parse_manifest("image_id,filename,r,g,b\na,a.png,x,1,1\n", "".into(), p).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let entries = vec![ManifestEntry {
            image_id: "s1".into(),
            filename: "img/s1.png".into(),
            ground_truth: normalize_illuminant([0.3, 0.5, 0.8]).unwrap(),
        }];
        let mut m = DatasetManifest::new(dir.path(), "synth", entries).unwrap();
        m.bit_depth = Some(16);
        let path = dir.path().join("manifest.csv");
        m.save(&path).unwrap();
        let back = load_manifest(&path).unwrap();
        assert_eq!(back.name, "synth");
        assert_eq!(back.entries[0].image_id, "s1");
        assert!(crate::types::angular_error(&back.entries[0].ground_truth, &m.entries[0].ground_truth) < 1e-6);
        assert!(back.check_files().is_err());
    }
}
