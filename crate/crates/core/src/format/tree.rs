//! The four-modality folder tree:
//! `<root>/{rgb,depth,ir,joints}/<LLIISS>/<t1_t2>/`, holding frames `0..=90`
//! for image modalities or a single `<LLIISS_t1_t2>.csv` for joints.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::name::{parse_group_code, parse_window, LocationCode, SampleName};
use super::skeleton::{parse_skeleton_csv, write_skeleton_csv, SkeletonSequence, FRAMES_PER_SAMPLE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Rgb,
    Depth,
    Ir,
    Joints,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::Rgb, Modality::Depth, Modality::Ir, Modality::Joints];

    pub fn dir_name(self) -> &'static str {
        match self {
            Modality::Rgb => "rgb",
            Modality::Depth => "depth",
            Modality::Ir => "ir",
            Modality::Joints => "joints",
        }
    }

    /// Frame file extension for image modalities.
    pub fn frame_extension(self) -> Option<&'static str> {
        match self {
            Modality::Rgb => Some("jpeg"),
            Modality::Depth | Modality::Ir => Some("png"),
            Modality::Joints => None,
        }
    }

    fn from_dir_name(s: &str) -> Option<Modality> {
        Modality::ALL.into_iter().find(|m| m.dir_name() == s)
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    NoModality,
    UnknownEntry,
    NotADirectory,
    BadGroupName,
    BadWindowName,
    MissingFrame,
    UnexpectedFile,
    MissingCsv,
    BadCsv,
    FrameCount,
    MissingModality,
    ModalityMismatch,
    Unreadable,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Finding {
    pub path: PathBuf,
    pub rule: Rule,
    pub message: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<Finding>,
    pub warnings: Vec<Finding>,
    pub counts: BTreeMap<Modality, usize>,
}

impl ValidationReport {
    pub fn is_conforming(&self) -> bool {
        self.errors.is_empty()
    }

    fn error(&mut self, path: &Path, rule: Rule, message: impl Into<String>) {
        self.errors.push(Finding {
            path: path.to_path_buf(),
            rule,
            message: message.into(),
        });
    }

    fn warn(&mut self, path: &Path, rule: Rule, message: impl Into<String>) {
        self.warnings.push(Finding {
            path: path.to_path_buf(),
            rule,
            message: message.into(),
        });
    }
}

pub fn sample_dir(root: &Path, modality: Modality, name: &SampleName) -> PathBuf {
    root.join(modality.dir_name())
        .join(name.group_code())
        .join(name.window())
}

pub fn joints_csv_path(root: &Path, name: &SampleName) -> PathBuf {
    sample_dir(root, Modality::Joints, name).join(format!("{name}.csv"))
}

/// Writes one sample's skeleton CSV into the joints tree.
pub fn write_joints_sample(root: &Path, name: &SampleName, seq: &SkeletonSequence) -> Result<PathBuf> {
    let path = joints_csv_path(root, name);
    let dir = path.parent().expect("sample dir");
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let text = write_skeleton_csv(seq)?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Creates empty frame files `0..=90` for an image modality.
pub fn write_image_placeholders(root: &Path, modality: Modality, name: &SampleName) -> Result<()> {
    let ext = modality
        .frame_extension()
        .ok_or_else(|| Error::Contract("joints have no image frames".into()))?;
    let dir = sample_dir(root, modality, name);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for frame in 0..FRAMES_PER_SAMPLE {
        let path = dir.join(format!("{frame}.{ext}"));
        fs::write(&path, b"").map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn sorted_entries(dir: &Path) -> std::io::Result<Vec<(String, PathBuf, bool)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let is_dir = entry.file_type()?.is_dir();
        out.push((entry.file_name().to_string_lossy().into_owned(), entry.path(), is_dir));
    }
    out.sort();
    Ok(out)
}

/// Location, activity, pair and window of one sample directory.
type SampleKey = (LocationCode, u8, u8, u64, u64);

/// Checks a dataset tree. Structural problems become report entries; only an
/// unreadable root is an error.
///
/// Missing image modalities are warnings so a joints-only tree conforms; an
/// image modality that is present must be complete.
pub fn validate_dataset_tree(root: &Path) -> Result<ValidationReport> {
    let top = sorted_entries(root).map_err(|e| Error::io(root, e))?;
    let mut report = ValidationReport::default();
    let mut samples: BTreeMap<Modality, BTreeSet<SampleKey>> = BTreeMap::new();

    for (name, path, is_dir) in &top {
        match Modality::from_dir_name(name) {
            Some(m) if *is_dir => {
                let found = validate_modality(m, path, &mut report);
                report.counts.insert(m, found.len());
                samples.insert(m, found);
            }
            Some(_) => report.error(path, Rule::NotADirectory, "modality root is not a directory"),
            None => report.warn(path, Rule::UnknownEntry, "not a modality directory"),
        }
    }

    if samples.is_empty() {
        report.error(root, Rule::NoModality, "no modality directory (rgb, depth, ir, joints)");
    } else {
        for m in Modality::ALL {
            if !samples.contains_key(&m) {
                report.warn(&root.join(m.dir_name()), Rule::MissingModality, "modality absent");
            }
        }
        let union: BTreeSet<_> = samples.values().flatten().copied().collect();
        for (m, set) in &samples {
            let missing = union.difference(set).count();
            if missing > 0 {
                report.warn(
                    &root.join(m.dir_name()),
                    Rule::ModalityMismatch,
                    format!("{missing} samples present in other modalities are missing here"),
                );
            }
        }
    }

    report.errors.sort();
    report.warnings.sort();
    Ok(report)
}

fn validate_modality(modality: Modality, dir: &Path, report: &mut ValidationReport) -> BTreeSet<SampleKey> {
    let mut found = BTreeSet::new();
    let groups = match sorted_entries(dir) {
        Ok(g) => g,
        Err(e) => {
            report.error(dir, Rule::Unreadable, e.to_string());
            return found;
        }
    };
    for (group, gpath, is_dir) in groups {
        if !is_dir {
            report.error(&gpath, Rule::NotADirectory, "expected an LLIISS directory");
            continue;
        }
        let (location, activity, pair) = match parse_group_code(&group) {
            Ok(parsed) => parsed,
            Err((field, message)) => {
                report.error(&gpath, Rule::BadGroupName, format!("{field}: {message}"));
                continue;
            }
        };
        let windows = match sorted_entries(&gpath) {
            Ok(w) => w,
            Err(e) => {
                report.error(&gpath, Rule::Unreadable, e.to_string());
                continue;
            }
        };
        for (window, wpath, is_dir) in windows {
            if !is_dir {
                report.error(&wpath, Rule::NotADirectory, "expected a t1_t2 directory");
                continue;
            }
            let Some((t1, t2)) = parse_window(&window) else {
                report.error(
                    &wpath,
                    Rule::BadWindowName,
                    format!("{window:?} is not t1_t2 with t1 < t2"),
                );
                continue;
            };
            let name = SampleName::new(location, activity, pair, t1, t2).expect("components validated");
            let ok = match modality.frame_extension() {
                Some(ext) => check_frames(&wpath, ext, report),
                None => check_joints(&wpath, &name, report),
            };
            if ok {
                found.insert((location, activity, pair, t1, t2));
            }
        }
    }
    found
}

fn check_frames(dir: &Path, ext: &str, report: &mut ValidationReport) -> bool {
    let entries = match sorted_entries(dir) {
        Ok(e) => e,
        Err(e) => {
            report.error(dir, Rule::Unreadable, e.to_string());
            return false;
        }
    };
    let expected: BTreeSet<String> = (0..FRAMES_PER_SAMPLE).map(|i| format!("{i}.{ext}")).collect();
    let present: BTreeSet<String> = entries
        .iter()
        .filter(|(_, _, is_dir)| !is_dir)
        .map(|(n, _, _)| n.clone())
        .collect();
    let mut ok = true;
    for missing in expected.difference(&present) {
        report.error(&dir.join(missing), Rule::MissingFrame, "frame file missing");
        ok = false;
    }
    for (name, path, _) in &entries {
        if !expected.contains(name) {
            report.warn(path, Rule::UnexpectedFile, "not a frame of this sample");
        }
    }
    ok
}

fn check_joints(dir: &Path, name: &SampleName, report: &mut ValidationReport) -> bool {
    let file = format!("{name}.csv");
    let path = dir.join(&file);
    if let Ok(entries) = sorted_entries(dir) {
        for (n, p, _) in entries {
            if n != file {
                report.warn(&p, Rule::UnexpectedFile, "joints sample holds a single CSV");
            }
        }
    }
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            report.error(&path, Rule::MissingCsv, "skeleton CSV missing");
            return false;
        }
        Err(e) => {
            report.error(&path, Rule::Unreadable, e.to_string());
            return false;
        }
    };
    match parse_skeleton_csv(&text) {
        Ok(parsed) => {
            for w in parsed.warnings {
                report.warn(&path, Rule::FrameCount, w);
            }
            true
        }
        Err(e) => {
            report.error(&path, Rule::BadCsv, e.to_string());
            false
        }
    }
}

/// Reads every skeleton CSV under `root/joints` in name order. Unlike the
/// validator this stops at the first malformed entry.
pub fn load_joints_tree(root: &Path) -> Result<Vec<(SampleName, SkeletonSequence)>> {
    let joints = root.join(Modality::Joints.dir_name());
    let mut out = Vec::new();
    for (group, gpath, is_dir) in sorted_entries(&joints).map_err(|e| Error::io(&joints, e))? {
        if !is_dir {
            return Err(Error::Format(format!(
                "{}: expected an LLIISS directory",
                gpath.display()
            )));
        }
        let (location, activity, pair) = parse_group_code(&group)
            .map_err(|(field, message)| Error::Format(format!("{}: {field}: {message}", gpath.display())))?;
        for (window, wpath, _) in sorted_entries(&gpath).map_err(|e| Error::io(&gpath, e))? {
            let (t1, t2) = parse_window(&window)
                .ok_or_else(|| Error::Format(format!("{}: not a t1_t2 window", wpath.display())))?;
            let name = SampleName::new(location, activity, pair, t1, t2)?;
            let path = wpath.join(format!("{name}.csv"));
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let parsed = parse_skeleton_csv(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
            out.push((name, parsed.sequence));
        }
    }
    out.sort_by_key(|(name, _)| *name);
    Ok(out)
}
