use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class labels in report order when a manifest declares none.
pub const DEFAULT_LABELS: [&str; 6] = ["clean", "soiled", "blur", "glare", "noise", "underexposure"];

const LABELS_DIRECTIVE: &str = "# labels:";

/// Mounting position of the camera that captured an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Camera {
    /// Front view.
    FV,
    /// Rear view.
    RV,
    /// Left mirror view.
    MVL,
    /// Right mirror view.
    MVR,
    Unknown,
}

impl Camera {
    pub const ALL: [Camera; 5] = [Camera::FV, Camera::RV, Camera::MVL, Camera::MVR, Camera::Unknown];
}

impl fmt::Display for Camera {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Camera::FV => "FV",
            Camera::RV => "RV",
            Camera::MVL => "MVL",
            Camera::MVR => "MVR",
            Camera::Unknown => "unknown",
        })
    }
}

impl FromStr for Camera {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "FV" => Ok(Camera::FV),
            "RV" => Ok(Camera::RV),
            "MVL" => Ok(Camera::MVL),
            "MVR" => Ok(Camera::MVR),
            "" | "UNKNOWN" => Ok(Camera::Unknown),
            other => Err(Error::InvalidParameter(format!("unknown camera tag '{other}'"))),
        }
    }
}

/// Parses `all` or a comma-separated list of camera tags.
pub fn parse_camera_set(s: &str) -> Result<Vec<Camera>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(Camera::ALL.to_vec());
    }
    let mut tags: Vec<Camera> = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    tags.sort();
    tags.dedup();
    if tags.is_empty() {
        return Err(Error::InvalidParameter("empty camera set".into()));
    }
    Ok(tags)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// As written in the manifest; relative paths resolve against the
    /// manifest's directory.
    pub path: String,
    pub label: String,
    pub camera: Camera,
    pub dataset: String,
}

/// Labelled image listing.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    labels: Vec<String>,
    entries: Vec<ManifestEntry>,
    base_dir: PathBuf,
}

impl Manifest {
    /// Validates label membership and path uniqueness. `labels` fixes the
    /// report order.
    pub fn new(labels: Vec<String>, entries: Vec<ManifestEntry>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let declared: HashSet<&str> = labels.iter().map(String::as_str).collect();
        if declared.len() != labels.len() {
            return Err(Error::InvalidParameter("duplicate label in declared label set".into()));
        }
        let mut seen = HashSet::new();
        for e in &entries {
            if !declared.contains(e.label.as_str()) {
                return Err(Error::UnknownLabel {
                    label: e.label.clone(),
                    declared: labels.join(","),
                });
            }
            if !seen.insert(e.path.as_str()) {
                return Err(Error::DuplicatePath(e.path.clone()));
            }
        }
        Ok(Self {
            labels,
            entries,
            base_dir: base_dir.into(),
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Declared labels that occur at least once, in declared order.
    pub fn present_labels(&self) -> Vec<String> {
        self.labels
            .iter()
            .filter(|l| self.entries.iter().any(|e| &e.label == *l))
            .cloned()
            .collect()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn class_counts(&self) -> Vec<(String, usize)> {
        self.labels
            .iter()
            .map(|l| (l.clone(), self.entries.iter().filter(|e| &e.label == l).count()))
            .collect()
    }

    /// Same labels and base directory, entries picked by index.
    pub fn subset(&self, indices: &[usize]) -> Manifest {
        Manifest {
            labels: self.labels.clone(),
            entries: indices.iter().map(|&i| self.entries[i].clone()).collect(),
            base_dir: self.base_dir.clone(),
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = format!("{LABELS_DIRECTIVE} {}\n", self.labels.join(","));
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["path", "label", "camera", "dataset"])?;
        for e in &self.entries {
            w.write_record([e.path.as_str(), &e.label, &e.camera.to_string(), &e.dataset])?;
        }
        let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        out.push_str(std::str::from_utf8(&body).expect("csv output is utf-8"));
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Reads a `path,label,camera,dataset` manifest. An optional leading
/// `# labels: a,b,c` line declares the label set and its order; otherwise
/// [`DEFAULT_LABELS`] apply. Missing camera or dataset values become
/// `unknown`.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(&text, path, base_dir)
}

pub fn parse_manifest(text: &str, path: &Path, base_dir: PathBuf) -> Result<Manifest> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut labels: Vec<String> = DEFAULT_LABELS.iter().map(|s| s.to_string()).collect();
    for l in text.lines() {
        if let Some(rest) = l.trim().strip_prefix(LABELS_DIRECTIVE) {
            labels = rest
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            break;
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(pc), Some(lc)) = (col("path"), col("label")) else {
        return Err(parse_err(1, "header must name 'path' and 'label' columns".into()));
    };
    let cc = col("camera");
    let dc = col("dataset");

    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: Option<usize>| i.and_then(|i| rec.get(i)).unwrap_or("");
        let p = field(Some(pc));
        let label = field(Some(lc));
        if p.is_empty() || label.is_empty() {
            return Err(parse_err(line, "missing path or label".into()));
        }
        if !labels.iter().any(|l| l == label) {
            return Err(Error::UnknownLabel {
                label: label.to_string(),
                declared: labels.join(","),
            });
        }
        if !seen.insert(p.to_string()) {
            return Err(Error::DuplicatePath(p.to_string()));
        }
        let camera = field(cc)
            .parse::<Camera>()
            .map_err(|e| parse_err(line, e.to_string()))?;
        let dataset = match field(dc) {
            "" => "unknown".to_string(),
            d => d.to_string(),
        };
        entries.push(ManifestEntry {
            path: p.to_string(),
            label: label.to_string(),
            camera,
            dataset,
        });
    }
    if entries.is_empty() {
        return Err(parse_err(1, "manifest has no entries".into()));
    }
    Manifest::new(labels, entries, base_dir)
}

/// Entries whose camera tag is in `tags`.
pub fn filter_by_camera(m: &Manifest, tags: &[Camera]) -> Result<Manifest> {
    if tags.is_empty() {
        return Err(Error::InvalidParameter("camera filter needs at least one tag".into()));
    }
    let idx: Vec<usize> = (0..m.len()).filter(|&i| tags.contains(&m.entries[i].camera)).collect();
    if idx.is_empty() {
        let names: Vec<String> = tags.iter().map(Camera::to_string).collect();
        return Err(Error::EmptyResult(format!("no entries with camera in {{{}}}", names.join(","))));
    }
    Ok(m.subset(&idx))
}

/// Entries with one of `labels`; the result declares only those labels (in
/// the original declared order).
pub fn filter_by_labels(m: &Manifest, labels: &[&str]) -> Result<Manifest> {
    for l in labels {
        if m.label_index(l).is_none() {
            return Err(Error::UnknownLabel {
                label: l.to_string(),
                declared: m.labels.join(","),
            });
        }
    }
    let kept: Vec<String> = m.labels.iter().filter(|l| labels.contains(&l.as_str())).cloned().collect();
    let entries: Vec<ManifestEntry> = m
        .entries
        .iter()
        .filter(|e| labels.contains(&e.label.as_str()))
        .cloned()
        .collect();
    if entries.is_empty() {
        return Err(Error::EmptyResult(format!("no entries labelled {}", labels.join(","))));
    }
    Manifest::new(kept, entries, m.base_dir.clone())
}
