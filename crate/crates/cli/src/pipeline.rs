//! JSON pipeline manifests: an ordered list of named steps, each one a CLI
//! subcommand with its arguments. A run writes `<stem>.lock.json` into the
//! work directory with the SHA-256 of every input and output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::commands::*;
use crate::error::{CliError, CliResult};

pub const TOOL_VERSION: &str = concat!("nrv ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum Op {
    Info(InfoArgs),
    Phantom(PhantomArgs),
    Degenerate(DegenerateArgs),
    Blur(BlurArgs),
    Normalize(NormalizeArgs),
    Tile(TileArgs),
    Stitch(StitchArgs),
    Predict(PredictArgs),
    Loss(LossArgs),
    Vesselness(VesselnessArgs),
    Components(ComponentsArgs),
    Morph(MorphArgs),
    MorphSequence(MorphSequenceArgs),
    Mesh(MeshArgs),
    Density(DensityArgs),
}

impl Op {
    pub fn step(&self) -> &dyn Step {
        match self {
            Op::Info(a) => a,
            Op::Phantom(a) => a,
            Op::Degenerate(a) => a,
            Op::Blur(a) => a,
            Op::Normalize(a) => a,
            Op::Tile(a) => a,
            Op::Stitch(a) => a,
            Op::Predict(a) => a,
            Op::Loss(a) => a,
            Op::Vesselness(a) => a,
            Op::Components(a) => a,
            Op::Morph(a) => a,
            Op::MorphSequence(a) => a,
            Op::Mesh(a) => a,
            Op::Density(a) => a,
        }
    }

    pub fn step_mut(&mut self) -> &mut dyn Step {
        match self {
            Op::Info(a) => a,
            Op::Phantom(a) => a,
            Op::Degenerate(a) => a,
            Op::Blur(a) => a,
            Op::Normalize(a) => a,
            Op::Tile(a) => a,
            Op::Stitch(a) => a,
            Op::Predict(a) => a,
            Op::Loss(a) => a,
            Op::Vesselness(a) => a,
            Op::Components(a) => a,
            Op::Morph(a) => a,
            Op::MorphSequence(a) => a,
            Op::Mesh(a) => a,
            Op::Density(a) => a,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepEntry {
    pub name: String,
    #[serde(flatten)]
    pub op: Op,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    /// Base for relative paths; defaults to the manifest's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub work_dir: Option<PathBuf>,
    pub steps: Vec<StepEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub name: String,
    #[serde(flatten)]
    pub op: Op,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool: String,
    pub steps: Vec<StepRecord>,
}

impl RunRecord {
    /// Every recorded output hash in step order.
    pub fn output_hashes(&self) -> Vec<&FileHash> {
        self.steps.iter().flat_map(|s| &s.outputs).collect()
    }
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn display(path: &Path, base: &Path) -> String {
    let rel = path.strip_prefix(base).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn collect_files(path: &Path, out: &mut Vec<PathBuf>) -> CliResult<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
        entries.sort();
        for e in entries {
            collect_files(&e, out)?;
        }
    } else if path.exists() {
        out.push(path.to_path_buf());
    }
    Ok(())
}

fn hash_all(paths: &[PathBuf], base: &Path) -> CliResult<Vec<FileHash>> {
    let mut files = Vec::new();
    for p in paths {
        collect_files(p, &mut files)?;
    }
    files
        .iter()
        .map(|f| {
            Ok(FileHash {
                path: display(f, base),
                sha256: sha256_file(f)?,
            })
        })
        .collect()
}

pub fn lock_path(manifest_path: &Path, work_dir: &Path) -> PathBuf {
    let stem = manifest_path.file_stem().and_then(|s| s.to_str()).unwrap_or("manifest");
    work_dir.join(format!("{stem}.lock.json"))
}

fn work_dir(manifest: &Manifest, manifest_path: &Path) -> PathBuf {
    let dir = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    match &manifest.work_dir {
        Some(w) if w.is_absolute() => w.clone(),
        Some(w) => dir.join(w),
        None => dir,
    }
}

/// Runs every step in order and writes the lock file. The first failing
/// step aborts the run; its name is attached to the error.
pub fn run_pipeline(manifest_path: &Path) -> CliResult<RunRecord> {
    if !manifest_path.exists() {
        return Err(CliError::new("missing_input", format!("manifest {} not found", manifest_path.display())));
    }
    let manifest: Manifest = read_json(manifest_path)?;
    let base = work_dir(&manifest, manifest_path);
    fs::create_dir_all(&base)?;
    let mut record = RunRecord {
        tool: TOOL_VERSION.to_string(),
        steps: Vec::with_capacity(manifest.steps.len()),
    };
    for entry in &manifest.steps {
        let fail = |e: CliError| e.at_step(&entry.name);
        let mut op = entry.op.clone();
        op.step_mut().rebase(&base);
        let step = op.step();
        for input in step.inputs() {
            if !input.exists() {
                return Err(fail(CliError::new(
                    "missing_input",
                    format!("{} not found", display(&input, &base)),
                )));
            }
        }
        let inputs = hash_all(&step.inputs(), &base).map_err(fail)?;
        log::info!("step `{}`", entry.name);
        let report = step.run().map_err(fail)?;
        let outputs = hash_all(&step.outputs(), &base).map_err(fail)?;
        record.steps.push(StepRecord {
            name: entry.name.clone(),
            op: entry.op.clone(),
            inputs,
            outputs,
            report,
        });
    }
    write_json(&lock_path(manifest_path, &base), &record)?;
    Ok(record)
}

/// The shipped demo: young and old phantoms of `size`³ voxels through
/// widefield simulation, normalization, tiling, vesselness, prediction,
/// morphing, meshes and density.
pub fn demo_manifest(size: usize) -> Manifest {
    let v: Value = serde_json::json!({
        "steps": [
            {"name": "young phantom", "op": "phantom", "random": 14, "radius_um": [1.5, 3.5], "seed": 7,
             "dims": [size, size, size], "out": "young.nrv", "save_tubes": "young_tubes.json"},
            {"name": "age", "op": "degenerate", "in": "young.nrv", "tubes": "young_tubes.json",
             "thinning": 0.5, "fragment": 0.5, "gap_um": 8.0, "seed": 3, "out": "old.nrv", "save_tubes": "old_tubes.json"},
            {"name": "widefield", "op": "blur", "in": "young.nrv", "sigma_xy": 1.0, "sigma_z": 2.0, "counts": 4000,
             "out": "young_wf.nrv"},
            {"name": "normalize", "op": "normalize", "in": "young_wf.nrv", "out": "young_norm.nrv"},
            {"name": "tile", "op": "tile", "d": 64, "delta": 16, "in": "young_norm.nrv", "out_dir": "tiles"},
            {"name": "stitch", "op": "stitch", "manifest": "tiles/manifest.json", "out": "young_stitched.nrv"},
            {"name": "vesselness", "op": "vesselness", "sigmas": [1.0, 2.0, 3.0], "tau": 0.5,
             "in": "young_stitched.nrv", "out": "young_response.nrv"},
            {"name": "restore", "op": "predict", "in": "old.nrv", "direction": "o2y", "tubes": "young_tubes.json",
             "thinning": 0.5, "fragment": 0.5, "gap_um": 8.0, "seed": 3, "out": "young_predicted.nrv"},
            {"name": "components", "op": "components", "threshold": 0.5, "domain": "young", "in": "young.nrv",
             "out": "young_components.json", "labels": "young_labels.nrv"},
            {"name": "morph", "op": "morph-sequence", "young": "young.nrv", "old": "old.nrv", "direction": "y2o",
             "threshold": 0.5, "field": "morph.field", "steps": 4, "out_dir": "frames"},
            {"name": "young mesh", "op": "mesh", "iso": 0.5, "domain": "young", "in": "young.nrv", "out": "young.obj"},
            {"name": "old mesh", "op": "mesh", "iso": 0.5, "domain": "old", "in": "old.nrv", "out": "old.obj"},
            {"name": "density", "op": "density", "threshold": 0.5, "in": "young.nrv", "old": "old.nrv",
             "out": "density.json"}
        ]
    });
    serde_json::from_value(v).expect("demo manifest matches the step schema")
}
