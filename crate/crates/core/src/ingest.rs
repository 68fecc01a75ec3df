//! Dataset loaders and the text feature function.
//!
//! File formats (UTF-8, one record per line, tab-separated):
//!
//! * features: `scene_id \t idx:val idx:val ...` (0-based indices, may be empty)
//! * captions: `scene_id \t caption text`, one caption per line
//! * manifest: `scene_id \t train|dev|test`
//!
//! With `strict` set, conditions that are otherwise logged as warnings
//! (more than eight captions per scene, captions for unknown scenes) are errors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::SparseVec;
use crate::phrase::{Caption, PhraseInventory};

/// Captions per scene above which a warning is raised.
pub const MAX_CAPTIONS_PER_SCENE: usize = 8;

/// One input with its visual features and reference captions.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRecord {
    pub scene_id: String,
    pub phi: SparseVec,
    pub captions: Vec<Caption>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidParameter(format!("unknown split `{other}`"))),
        }
    }
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

/// Disjoint train/dev/test scene lists, each sorted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
}

impl SplitManifest {
    pub fn get(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.dev.len(), self.test.len())
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn split_record<'a>(path: &Path, line_no: usize, line: &'a str) -> Result<(&'a str, &'a str)> {
    let (id, rest) = line
        .split_once('\t')
        .ok_or_else(|| Error::parse(path, line_no, "expected `scene_id<TAB>...`"))?;
    if id.is_empty() || id.contains(char::is_whitespace) {
        return Err(Error::parse(path, line_no, format!("bad scene id `{id}`")));
    }
    Ok((id, rest))
}

/// Loads `scene_id → φ(x)` and validates every vector against `dim`.
pub fn load_visual_features(
    path: impl AsRef<Path>,
    dim: usize,
) -> Result<BTreeMap<String, SparseVec>> {
    let path = path.as_ref();
    if dim == 0 {
        return Err(Error::InvalidParameter(
            "feature dim must be positive".into(),
        ));
    }
    let mut out = BTreeMap::new();
    for (n, line) in read(path)?.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (id, rest) = split_record(path, line_no, line)?;
        let mut entries = Vec::new();
        for tok in rest.split_whitespace() {
            let (i, v) = tok.split_once(':').ok_or_else(|| {
                Error::parse(path, line_no, format!("expected idx:val, found `{tok}`"))
            })?;
            let i: usize = i
                .parse()
                .map_err(|_| Error::parse(path, line_no, format!("bad feature index `{i}`")))?;
            let v: f64 = v
                .parse()
                .map_err(|_| Error::parse(path, line_no, format!("bad feature value `{v}`")))?;
            if i >= dim {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("feature index {i} >= dim {dim}"),
                ));
            }
            entries.push((i, v));
        }
        let phi =
            SparseVec::new(dim, entries).map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        if out.insert(id.to_string(), phi).is_some() {
            return Err(Error::parse(
                path,
                line_no,
                format!("duplicate scene id `{id}`"),
            ));
        }
    }
    log::info!(
        "loaded features for {} scenes (dim {dim}) from {}",
        out.len(),
        path.display()
    );
    Ok(out)
}

pub fn write_visual_features(
    features: &BTreeMap<String, SparseVec>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for (id, phi) in features {
        out.push_str(id);
        out.push('\t');
        for (k, (i, v)) in phi.iter().enumerate() {
            if k > 0 {
                out.push(' ');
            }
            write!(out, "{i}:{v}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Loads `scene_id → captions`, keeping file order within each scene.
pub fn load_captions(
    path: impl AsRef<Path>,
    strict: bool,
) -> Result<BTreeMap<String, Vec<Caption>>> {
    let path = path.as_ref();
    let mut out: BTreeMap<String, Vec<Caption>> = BTreeMap::new();
    let mut total = 0;
    for (n, line) in read(path)?.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = split_record(path, line_no, line)?;
        let caption =
            Caption::parse(text).map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        out.entry(id.to_string()).or_default().push(caption);
        total += 1;
    }
    for (id, caps) in &out {
        if caps.len() > MAX_CAPTIONS_PER_SCENE {
            let msg = format!(
                "scene `{id}` has {} captions (more than {MAX_CAPTIONS_PER_SCENE})",
                caps.len()
            );
            if strict {
                return Err(Error::InvalidInput(msg));
            }
            log::warn!("{msg}; keeping all");
        }
    }
    log::info!(
        "loaded {total} captions for {} scenes from {}",
        out.len(),
        path.display()
    );
    Ok(out)
}

pub fn write_captions(
    captions: &BTreeMap<String, Vec<Caption>>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for (id, caps) in captions {
        for c in caps {
            writeln!(out, "{id}\t{c}").unwrap();
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<SplitManifest> {
    let path = path.as_ref();
    let mut seen: BTreeMap<String, Split> = BTreeMap::new();
    for (n, line) in read(path)?.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (id, split) = split_record(path, line_no, line)?;
        let split: Split = split
            .trim()
            .parse()
            .map_err(|e: Error| Error::parse(path, line_no, e.to_string()))?;
        if let Some(prev) = seen.insert(id.to_string(), split) {
            return Err(Error::parse(
                path,
                line_no,
                format!(
                    "scene `{id}` listed twice ({} and {})",
                    prev.as_str(),
                    split.as_str()
                ),
            ));
        }
    }
    let mut manifest = SplitManifest::default();
    for (id, split) in seen {
        match split {
            Split::Train => manifest.train.push(id),
            Split::Dev => manifest.dev.push(id),
            Split::Test => manifest.test.push(id),
        }
    }
    let (tr, dv, te) = manifest.sizes();
    log::info!(
        "manifest {}: {tr} train, {dv} dev, {te} test",
        path.display()
    );
    Ok(manifest)
}

/// Binary `ψ(y)`: 1 at the index of every inventory phrase occurring
/// contiguously in `y`.
pub fn text_features(y: &Caption, inventory: &PhraseInventory) -> SparseVec {
    SparseVec::binary(inventory.len().max(1), inventory.matches(y.tokens()))
        .expect("inventory indices are in range")
}

/// One `(φ(x), ψ(y))` pair per (scene, caption), ordered by scene id then
/// caption order. Captions of scenes without features are skipped.
pub fn build_training_pairs(
    scenes: &BTreeMap<String, SparseVec>,
    captions: &BTreeMap<String, Vec<Caption>>,
    inventory: &PhraseInventory,
    strict: bool,
) -> Result<Vec<(SparseVec, SparseVec)>> {
    let mut pairs = Vec::new();
    let mut unknown = BTreeSet::new();
    for (id, caps) in captions {
        let Some(phi) = scenes.get(id) else {
            unknown.insert(id.as_str());
            continue;
        };
        for c in caps {
            pairs.push((phi.clone(), text_features(c, inventory)));
        }
    }
    if !unknown.is_empty() {
        let msg = format!(
            "{} captioned scenes have no features (e.g. `{}`)",
            unknown.len(),
            unknown.first().unwrap()
        );
        if strict {
            return Err(Error::InvalidInput(msg));
        }
        log::warn!("{msg}; skipped");
    }
    Ok(pairs)
}

/// Joins features and captions into records for the given scene ids.
pub fn scene_records(
    ids: &[String],
    scenes: &BTreeMap<String, SparseVec>,
    captions: &BTreeMap<String, Vec<Caption>>,
) -> Result<Vec<SceneRecord>> {
    ids.iter()
        .map(|id| {
            let phi = scenes
                .get(id)
                .ok_or_else(|| Error::InvalidInput(format!("scene `{id}` has no features")))?;
            Ok(SceneRecord {
                scene_id: id.clone(),
                phi: phi.clone(),
                captions: captions.get(id).cloned().unwrap_or_default(),
            })
        })
        .collect()
}
