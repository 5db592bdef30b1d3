//! One argument struct per subcommand. The same structs are deserialized from
//! pipeline manifest steps, so a manifest step and a command line run the
//! same code.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use nrv_core::intensity::RescaleMap;
use nrv_core::io::NrvHeader;
use nrv_core::losses::{
    cycle_loss, density_multiplier, extended_cycle_loss, hallucination_terms, shared_background, tile_objective,
    TileLosses,
};
use nrv_core::neuromorph::build_morph_field;
use nrv_core::phantom::{degenerate_specs, predict, random_tube_specs, rasterize_tubes, widefield_blur};
use nrv_core::tiling::{read_tiles, split_tiles, stitch, write_tiles};
use nrv_core::vesselness::{jerman_response, suppress_background, DEFAULT_GRAD_PERCENTILE};
use nrv_core::views::{fiber_density, percentage_difference};
use nrv_core::{
    connected_components, extract_isosurface, foreground_mask, histogram, load_volume, nonlinear_rescale, save_volume,
    BBox, DegenerationParams, Direction, Domain, LossConfig, MorphField, PredictorBackend, TubeSpec, VesselnessParams,
    Volume3D,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

/// Common surface of every pipeline-capable command.
pub trait Step {
    /// Files that must exist before the step runs.
    fn inputs(&self) -> Vec<PathBuf>;
    /// Files or directories the step writes.
    fn outputs(&self) -> Vec<PathBuf>;
    /// Resolves relative paths against `base`.
    fn rebase(&mut self, base: &Path);
    /// Runs the step; the returned report is printed by the CLI and recorded
    /// in pipeline run records.
    fn run(&self) -> CliResult<Option<Value>>;
}

fn rebase_path(p: &mut PathBuf, base: &Path) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn rebase_opt(p: &mut Option<PathBuf>, base: &Path) {
    if let Some(p) = p {
        rebase_path(p, base);
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::new("io_error", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::new("invalid_json", format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn load(path: &Path) -> CliResult<Volume3D> {
    load_volume(path).map_err(|e| {
        let code = e.code();
        CliError::new(code, format!("{}: {e}", path.display()))
    })
}

fn save(v: &Volume3D, path: &Path) -> CliResult<()> {
    ensure_parent(path)?;
    save_volume(v, path)?;
    Ok(())
}

fn triple<T: Copy>(values: &[T], what: &str) -> CliResult<[T; 3]> {
    match values {
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err(CliError::new("invalid_parameter", format!("{what} needs exactly three values"))),
    }
}

fn parse_direction(s: &str) -> Result<Direction, String> {
    s.parse().map_err(|e: nrv_core::Error| e.to_string())
}

fn parse_domain(s: &str) -> Result<Domain, String> {
    match s {
        "young" => Ok(Domain::Young),
        "old" => Ok(Domain::Old),
        other => Err(format!("unknown domain `{other}` (young or old)")),
    }
}

pub fn default_threshold() -> f32 {
    LossConfig::default().fg_threshold
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct InfoArgs {
    pub file: PathBuf,
}

impl Step for InfoArgs {
    fn inputs(&self) -> Vec<PathBuf> {
        vec![self.file.clone()]
    }
    fn outputs(&self) -> Vec<PathBuf> {
        Vec::new()
    }
    fn rebase(&mut self, base: &Path) {
        rebase_path(&mut self.file, base);
    }
    fn run(&self) -> CliResult<Option<Value>> {
        let v = load(&self.file)?;
        Ok(Some(json!({
            "header": NrvHeader::of(&v),
            "histogram": histogram(&v)?,
        })))
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PhantomArgs {
    /// JSON list of tube specs.
    #[arg(long, conflicts_with = "random")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tubes: Option<PathBuf>,
    /// Generate this many random tubes instead of reading `--tubes`.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<usize>,
    #[arg(long, value_delimiter = ',', num_args = 2, value_name = "MIN,MAX")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_um: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',', required = true, value_name = "NX,NY,NZ")]
    pub dims: Vec<usize>,
    #[arg(long, value_delimiter = ',', value_name = "SX,SY,SZ")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing_um: Option<Vec<f64>>,
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the tube specs that were rendered.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub save_tubes: Option<PathBuf>,
}

impl Step for PhantomArgs {
    fn inputs(&self) -> Vec<PathBuf> {
        self.tubes.iter().cloned().collect()
    }
    fn outputs(&self) -> Vec<PathBuf> {
        std::iter::once(self.out.clone()).chain(self.save_tubes.clone()).collect()
    }
    fn rebase(&mut self, base: &Path) {
        rebase_opt(&mut self.tubes, base);
        rebase_path(&mut self.out, base);
        rebase_opt(&mut self.save_tubes, base);
    }
    fn run(&self) -> CliResult<Option<Value>> {
        let dims = triple(&self.dims, "dims")?;
        let spacing = triple(self.spacing_um.as_deref().unwrap_or(&[1.0; 3]), "spacing")?;
        let specs: Vec<TubeSpec> = match (&self.tubes, self.random) {
            (Some(path), None) => read_json(path)?,
            (None, Some(n)) => {
                let r = self.radius_um.as_deref().unwrap_or(&[1.5, 3.0]);
                let (lo, hi) = match r {
                    [lo, hi] if *lo > 0.0 && lo <= hi => (*lo, *hi),
                    _ => return Err(CliError::new("invalid_parameter", "radius range must be 0 < min <= max")),
                };
                random_tube_specs(dims, spacing, n, (lo, hi), self.seed.unwrap_or(0))
            }
            _ => return Err(CliError::new("invalid_parameter", "give exactly one of `tubes` or `random`")),
        };
        let v = rasterize_tubes(&specs, dims, spacing)?;
        save(&v, &self.out)?;
        if let Some(path) = &self.save_tubes {
            write_json(path, &specs)?;
        }
        Ok(Some(json!({ "tubes": specs.len() })))
    }
}

/// Degeneration parameters as flags; unset flags keep the values from
/// `--params` or the defaults.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct DegenerationFlags {
    /// JSON degeneration parameters.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<PathBuf>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thinning: Option<f64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fragment: Option<f64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_um: Option<f64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl DegenerationFlags {
    fn resolve(&self) -> CliResult<DegenerationParams> {
        let mut p: DegenerationParams = match &self.params {
            Some(path) => read_json(path)?,
            None => DegenerationParams::default(),
        };
        if let Some(x) = self.thinning {
            p.thinning_factor = x;
        }
        if let Some(x) = self.fragment {
            p.fragment_fraction = x;
        }
        if let Some(x) = self.gap_um {
            p.gap_length_um = x;
        }
        if let Some(x) = self.seed {
            p.seed = x;
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DegenerateArgs {
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: PathBuf,
    /// Tube specs the young volume was rendered from.
    #[arg(long)]
    pub tubes: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub degeneration: DegenerationFlags,
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the degenerated tube specs.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub save_tubes: Option<PathBuf>,
}

impl Step for DegenerateArgs {
    fn inputs(&self) -> Vec<PathBuf> {
        let mut v = vec![self.input.clone(), self.tubes.clone()];
        v.extend(self.degeneration.params.clone());
        v
    }
    fn outputs(&self) -> Vec<PathBuf> {
        std::iter::once(self.out.clone()).chain(self.save_tubes.clone()).collect()
    }
    fn rebase(&mut self, base: &Path) {
        rebase_path(&mut self.input, base);
        rebase_path(&mut self.tubes, base);
        rebase_opt(&mut self.degeneration.params, base);
        rebase_path(&mut self.out, base);
        rebase_opt(&mut self.save_tubes, base);
    }
    fn run(&self) -> CliResult<Option<Value>> {
        let young = load(&self.input)?;
        let specs: Vec<TubeSpec> = read_json(&self.tubes)?;
        let p = self.degeneration.resolve()?;
        let old = nrv_core::phantom::degenerate(&young, &specs, &p)?;
        save(&old, &self.out)?;
        if let Some(path) = &self.save_tubes {
            write_json(path, &degenerate_specs(&specs, &p)?)?;
        }
        Ok(Some(json!({ "params": p })))
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BlurArgs {
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub sigma_xy: f64,
    #[arg(long)]
    pub sigma_z: f64,
    /// Quantize the result to a raw 16-bit volume with this many counts at
    /// intensity 1.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<u16>,
    #[arg(long)]
    pub out: PathBuf,
}

impl Step for BlurArgs {
    fn inputs(&self) -> Vec<PathBuf> {
        vec![self.input.clone()]
    }
    fn outputs(&self) -> Vec<PathBuf> {
        vec![self.out.clone()]
    }
    fn rebase(&mut self, base: &Path) {
        rebase_path(&mut self.input, base);
        rebase_path(&mut self.out, base);
    }
    fn run(&self) -> CliResult<Option<Value>> {
        let v = widefield_blur(&load(&self.input)?, self.sigma_xy, self.sigma_z)?;
        let v = match self.counts {
            None => v,
            Some(n) => {
                let scale = n as f32;
                let samples: Vec<u16> = v.data().iter().map(|&x| (x * scale).round().clamp(0.0, 65535.0) as u16).collect();
                Volume3D::from_u16(v.dims(), v.spacing(), &samples, v.provenance())?
            }
        };
        save(&v, &self.out)?;
        Ok(None)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct NormalizeArgs {
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

impl Step for NormalizeArgs {
    fn inputs(&self) -> Vec<PathBuf> {
        vec![self.input.clone()]
    }
    fn outputs(&self) -> Vec<PathBuf> {
        vec![self.out.clone()]
    }
    fn rebase(&mut self, base: &Path) {
        rebase_path(&mut self.input, base);
        rebase_path(&mut self.out, base);
    }
    fn run(&self) -> CliResult<Option<Value>> {
        let v = load(&self.input)?;
        let map = RescaleMap::from_histogram(&histogram(&v)?);
        save(&nonlinear_rescale(&v)?, &self.out)?;
        Ok(Some(json!({ "p95": map.p95, "max": map.max })))
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TileArgs {
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub delta: usize,
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

impl Step for TileArgs {
    fn inputs(&self) -> Vec<PathBuf> {
        vec![self.input.clone()]
    }
    fn outputs(&self) -> Vec<PathBuf> {
        vec![self.out_dir.clone()]
    }
    fn rebase(&mut self, base: &Path) {
        rebase_path(&mut self.input, base);
        rebase_path(&mut self.out_dir, base);
    }
    fn run(&self) -> CliResult<Option<Value>> {
        let v = load(&self.input)?;
        let tiles = split_tiles(&v, self.d, self.delta)?;
        write_tiles(&tiles, &v, &self.out_dir)?;
        Ok(Some(json!({ "tiles": tiles.len() })))
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct StitchArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

impl Step for StitchArgs {
    fn inputs(&self) -> Vec<PathBuf> {
        vec![self.manifest.clone()]
    }
    fn outputs(&self) -> Vec<PathBuf> {
        vec![self.out.clone()]
    }
    fn rebase(&mut self, base: &Path) {
        rebase_path(&mut self.manifest, base);
        rebase_path(&mut self.out, base);
    }
    fn run(&self) -> CliResult<Option<Value>> {
        let tiles = read_tiles(&self.manifest)?;
        save(&stitch(&tiles)?, &self.out)?;
        Ok(None)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PredictArgs {
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: PathBuf,
    #[arg(long, value_parser = parse_direction)]
    pub direction: Direction,
    /// Ground-truth young tube specs for the synthetic oracle.
    #[arg(long, conflicts_with = "external")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tubes: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub degeneration: DegenerationFlags,
    /// A prediction computed elsewhere.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

impl Step for PredictArgs {
    fn inputs(&self) -> Vec<PathBuf> {
        let mut v = vec![self.input.clone()];
        v.extend(self.tubes.clone());
        v.extend(self.degeneration.params.clone());
        v
    }
    fn outputs(&self) -> Vec<PathBuf> {
        vec![self.out.clone()]
    }
    fn rebase(&mut self, base: &Path) {
        rebase_path(&mut self.input, base);
        rebase_opt(&mut self.tubes, base);
        rebase_opt(&mut self.degeneration.params, base);
        rebase_opt(&mut self.external, base);
        rebase_path(&mut self.out, base);
    }
    fn run(&self) -> CliResult<Option<Value>> {
        let backend = match (&self.tubes, &self.external) {
            (Some(tubes), None) => PredictorBackend::SyntheticOracle {
                specs: read_json(tubes)?,
                params: self.degeneration.resolve()?,
            },
            (None, Some(path)) => PredictorBackend::ExternalFile(path.clone()),
            _ => return Err(CliError::new("invalid_parameter", "give exactly one of `tubes` or `external`")),
        };
        let out = predict(&load(&self.input)?, self.direction, &backend)?;
        save(&out, &self.out)?;
        Ok(None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Cycle,
    Xcycle,
    Hallucination,
    Delta,
    Objective,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct LossArgs {
    #[arg(long, value_enum)]
    pub kind: LossKind,
    /// Volumes in loss order (`a,a_rec`; `G(y),G(F(G(y)))`; `o,F(o),y,G(y)`),
    /// or one JSON file of tile loss parts for `objective`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<PathBuf>,
}

impl Step for LossArgs {
    fn inputs(&self) -> Vec<PathBuf> {
        self.inputs.iter().cloned().chain(self.config.clone()).collect()
    }
    fn outputs(&self) -> Vec<PathBuf> {
        Vec::new()
    }
    fn rebase(&mut self, base: &Path) {
        self.inputs.iter_mut().for_each(|p| rebase_path(p, base));
        rebase_opt(&mut self.config, base);
    }
    fn run(&self) -> CliResult<Option<Value>> {
        let cfg: LossConfig = match &self.config {
            Some(path) => read_json(path)?,
            None => LossConfig::default(),
        };
        cfg.validate()?;
        let want = match self.kind {
            LossKind::Objective => 1,
            LossKind::Hallucination => 4,
            _ => 2,
        };
        if self.inputs.len() != want {
            return Err(CliError::new(
                "invalid_parameter",
                format!("{:?} loss takes {want} inputs, got {}", self.kind, self.inputs.len()),
            ));
        }
        if self.kind == LossKind::Objective {
            let parts: TileLosses = read_json(&self.inputs[0])?;
            let recomposed = |b: &nrv_core::TileLossBreakdown| b.recomposed(&cfg);
            return Ok(Some(json!({
                "kind": "objective",
                "top_left": recomposed(&parts.top_left),
                "top_right": recomposed(&parts.top_right),
                "bottom_left": recomposed(&parts.bottom_left),
                "bottom_right": recomposed(&parts.bottom_right),
                "center": recomposed(&parts.center),
                "objective": tile_objective(&parts, &cfg),
            })));
        }
        let vols = self.inputs.iter().map(|p| load(p)).collect::<CliResult<Vec<_>>>()?;
        let report = match self.kind {
            LossKind::Delta => json!({
                "kind": "delta",
                "shared_background": shared_background(&vols[0], &vols[1], cfg.fg_threshold)?,
                "delta": density_multiplier(&vols[0], &vols[1], &cfg)?,
            }),
            LossKind::Cycle => json!({
                "kind": "cycle",
                "delta": density_multiplier(&vols[0], &vols[1], &cfg)?,
                "loss": cycle_loss(&vols[0], &vols[1], &cfg)?,
            }),
            LossKind::Xcycle => json!({
                "kind": "xcycle",
                "delta": density_multiplier(&vols[0], &vols[1], &cfg)?,
                "loss": extended_cycle_loss(&vols[0], &vols[1], &cfg)?,
            }),
            LossKind::Hallucination => {
                let t = hallucination_terms(&vols[0], &vols[1], &vols[2], &vols[3], &cfg)?;
                json!({
                    "kind": "hallucination",
                    "old_term": t.old_term,
                    "young_term": t.young_term,
                    "loss": t.total(),
                })
            }
            LossKind::Objective => unreachable!(),
        };
        Ok(Some(report))
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct VesselnessArgs {
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigmas: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity_scales: Option<Vec<f64>>,
    /// Attenuate voxels far from strong gradients first.
    #[arg(long)]
    #[serde(default)]
    pub suppress_background: bool,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_percentile: Option<u8>,
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

impl VesselnessArgs {
    pub fn params(&self) -> VesselnessParams {
        let d = VesselnessParams::default();
        VesselnessParams {
            sigmas_um: self.sigmas.clone().unwrap_or(d.sigmas_um),
            tau: self.tau.unwrap_or(d.tau),
            intensity_scales: self.intensity_scales.clone().unwrap_or(d.intensity_scales),
        }
    }
}

impl Step for VesselnessArgs {
    fn inputs(&self) -> Vec<PathBuf> {
        vec![self.input.clone()]
    }
    fn outputs(&self) -> Vec<PathBuf> {
        vec![self.out.clone()]
    }
    fn rebase(&mut self, base: &Path) {
        rebase_path(&mut self.input, base);
        rebase_path(&mut self.out, base);
    }
    fn run(&self) -> CliResult<Option<Value>> {
        let p = self.params();
        let mut v = load(&self.input)?;
        if self.suppress_background {
            v = suppress_background(&v, self.grad_percentile.unwrap_or(DEFAULT_GRAD_PERCENTILE), &p)?;
        }
        save(&jerman_response(&v, &p)?, &self.out)?;
        Ok(Some(json!({ "params": p })))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub id: usize,
    pub bbox: BBox,
    pub voxels: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ComponentsArgs {
    #[arg(long)]
    pub threshold: f32,
    #[arg(long, value_parser = parse_domain)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: PathBuf,
    /// JSON component list.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// u16 label volume.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
}

impl Step for ComponentsArgs {
    fn inputs(&self) -> Vec<PathBuf> {
        vec![self.input.clone()]
    }
    fn outputs(&self) -> Vec<PathBuf> {
        self.out.iter().chain(&self.labels).cloned().collect()
    }
    fn rebase(&mut self, base: &Path) {
        rebase_path(&mut self.input, base);
        rebase_opt(&mut self.out, base);
        rebase_opt(&mut self.labels, base);
    }
    fn run(&self) -> CliResult<Option<Value>> {
        let v = load(&self.input)?;
        let comps = connected_components(
            &foreground_mask(&v, self.threshold),
            self.domain.unwrap_or(Domain::Young),
            v.provenance(),
        );
        let summary: Vec<ComponentSummary> = comps
            .iter()
            .map(|c| ComponentSummary {
                id: c.id,
                bbox: c.bbox,
                voxels: c.len(),
            })
            .collect();
        if let Some(path) = &self.out {
            write_json(path, &summary)?;
        }
        if let Some(path) = &self.labels {
            save(&nrv_core::components::label_volume(&comps, &v), path)?;
        }
        Ok(Some(json!({ "components": summary.len() })))
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MorphFieldArgs {
    #[arg(long)]
    pub young: PathBuf,
    #[arg(long)]
    pub old: PathBuf,
    #[arg(long, value_parser = parse_direction)]
    pub direction: Direction,
    /// Foreground threshold for both volumes.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f32>,
    /// Morph field sidecar: read if present, otherwise written after the
    /// field is built.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<PathBuf>,
}

impl MorphFieldArgs {
    fn inputs(&self) -> Vec<PathBuf> {
        vec![self.young.clone(), self.old.clone()]
    }

    fn rebase(&mut self, base: &Path) {
        rebase_path(&mut self.young, base);
        rebase_path(&mut self.old, base);
        rebase_opt(&mut self.field, base);
    }

    fn load(&self) -> CliResult<(Volume3D, Volume3D, MorphField)> {
        let young = load(&self.young)?;
        let old = load(&self.old)?;
        let threshold = self.threshold.unwrap_or_else(default_threshold);
        let field = match &self.field {
            Some(path) if path.exists() => {
                let f = MorphField::read_from(std::io::BufReader::new(fs::File::open(path)?))?;
                if f.dims != young.dims() || f.threshold != threshold {
                    return Err(CliError::new(
                        "invalid_parameter",
                        format!("sidecar {} was built for other volumes or threshold", path.display()),
                    ));
                }
                f
            }
            other => {
                let f = build_morph_field(&young, &old, threshold)?;
                if let Some(path) = other {
                    ensure_parent(path)?;
                    f.write_to(std::io::BufWriter::new(fs::File::create(path)?))?;
                }
                f
            }
        };
        Ok((young, old, field))
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MorphArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub pair: MorphFieldArgs,
    #[arg(long)]
    pub sigma: f64,
    #[arg(long)]
    pub out: PathBuf,
}

impl Step for MorphArgs {
    fn inputs(&self) -> Vec<PathBuf> {
        self.pair.inputs()
    }
    fn outputs(&self) -> Vec<PathBuf> {
        std::iter::once(self.out.clone()).chain(self.pair.field.clone()).collect()
    }
    fn rebase(&mut self, base: &Path) {
        self.pair.rebase(base);
        rebase_path(&mut self.out, base);
    }
    fn run(&self) -> CliResult<Option<Value>> {
        let (young, old, field) = self.pair.load()?;
        let frame = field.intermediate_volume(&young, &old, self.sigma, self.pair.direction)?;
        save(&frame, &self.out)?;
        Ok(Some(json!({
            "dynamic_voxels": field.dynamic.len(),
            "null_pairings": field.null_pairings().count(),
        })))
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MorphSequenceArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub pair: MorphFieldArgs,
    /// Frames are written at sigma = k / steps for k = 0..=steps.
    #[arg(long)]
    pub steps: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn frame_name(k: usize) -> String {
    format!("frame_{k:04}.nrv")
}

impl Step for MorphSequenceArgs {
    fn inputs(&self) -> Vec<PathBuf> {
        self.pair.inputs()
    }
    fn outputs(&self) -> Vec<PathBuf> {
        std::iter::once(self.out_dir.clone()).chain(self.pair.field.clone()).collect()
    }
    fn rebase(&mut self, base: &Path) {
        self.pair.rebase(base);
        rebase_path(&mut self.out_dir, base);
    }
    fn run(&self) -> CliResult<Option<Value>> {
        if self.steps == 0 {
            return Err(CliError::new("invalid_parameter", "steps must be at least 1"));
        }
        let (young, old, field) = self.pair.load()?;
        fs::create_dir_all(&self.out_dir)?;
        let mut counts = Vec::with_capacity(self.steps + 1);
        for k in 0..=self.steps {
            let sigma = k as f64 / self.steps as f64;
            let frame = field.intermediate_volume(&young, &old, sigma, self.pair.direction)?;
            counts.push(frame.data().iter().filter(|&&x| x > 0.0).count());
            save(&frame, &self.out_dir.join(frame_name(k)))?;
        }
        Ok(Some(json!({ "frames": self.steps + 1, "nonzero_voxels": counts })))
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MeshArgs {
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iso: Option<f64>,
    #[arg(long, value_parser = parse_domain)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

impl Step for MeshArgs {
    fn inputs(&self) -> Vec<PathBuf> {
        vec![self.input.clone()]
    }
    fn outputs(&self) -> Vec<PathBuf> {
        vec![self.out.clone()]
    }
    fn rebase(&mut self, base: &Path) {
        rebase_path(&mut self.input, base);
        rebase_path(&mut self.out, base);
    }
    fn run(&self) -> CliResult<Option<Value>> {
        let v = load(&self.input)?;
        let mesh = extract_isosurface(&v, self.iso.unwrap_or(0.5), self.domain.unwrap_or(Domain::Young))?;
        ensure_parent(&self.out)?;
        mesh.write_obj(std::io::BufWriter::new(fs::File::create(&self.out)?))?;
        Ok(Some(json!({
            "vertices": mesh.vertices.len(),
            "triangles": mesh.triangles.len(),
            "area_um2": mesh.area(),
        })))
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DensityArgs {
    #[arg(long)]
    pub threshold: f32,
    /// Young (or only) volume.
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: PathBuf,
    /// Old volume; adds the percentage difference to the report.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub old: Option<PathBuf>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl Step for DensityArgs {
    fn inputs(&self) -> Vec<PathBuf> {
        std::iter::once(self.input.clone()).chain(self.old.clone()).collect()
    }
    fn outputs(&self) -> Vec<PathBuf> {
        self.out.iter().cloned().collect()
    }
    fn rebase(&mut self, base: &Path) {
        rebase_path(&mut self.input, base);
        rebase_opt(&mut self.old, base);
        rebase_opt(&mut self.out, base);
    }
    fn run(&self) -> CliResult<Option<Value>> {
        let dy = fiber_density(&foreground_mask(&load(&self.input)?, self.threshold));
        let mut report = json!({ "threshold": self.threshold, "density": dy, "percent": dy * 100.0 });
        if let Some(old) = &self.old {
            let d_old = fiber_density(&foreground_mask(&load(old)?, self.threshold));
            report["old_density"] = json!(d_old);
            report["old_percent"] = json!(d_old * 100.0);
            report["percentage_difference"] = json!(percentage_difference(dy * 100.0, d_old * 100.0)?);
        }
        if let Some(path) = &self.out {
            write_json(path, &report)?;
        }
        Ok(Some(report))
    }
}
