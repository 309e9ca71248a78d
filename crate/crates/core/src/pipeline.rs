//! Batch orchestration: configuration, per-image stages with on-disk
//! artifacts, dataset builds and mask evaluation.
//!
//! Every stage writes one artifact per image id under the output root,
//! next to a `.key` file holding the SHA-256 of the stage inputs. A rerun
//! whose key matches leaves the artifact untouched.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::apg::{prompt_from_mask, ApgOptions};
use crate::dataset::{
    build_record, default_merge_table, manifest_summary, merge_classes, write_manifest, MergeTable, Provenance,
    SpieRecord, Split,
};
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, confusion, ConfusionMatrix, MetricsReport};
use crate::prompts::{
    inspection_sample, quality_loop, request_caption, CaptionService, Category, ChildProcessTransport, Instruction,
    JudgeService, LineClient, QualityConfig, QualityReport, QualitySample, SamplingParams, StubCaptionDir,
    StubJudgeDir, DEFAULT_INSPECTION_SAMPLE,
};
use crate::raster_io::{
    crop_patches, fit_longer_side, pad_labels_to_square, pad_to_square, read_label_map, read_mask, read_raster,
    BinaryMask, ClassLabelMap, MultibandRaster,
};
use crate::regions::{select_top_regions, Connectivity, RegionAttributes, DEFAULT_TOP_K};
use crate::spectral::{
    binarize, compute_index_scaled, otsu_threshold, IndexKind, IndexMap, DEFAULT_BINS, DEFAULT_REFLECTANCE_DIVISOR,
};

pub const DEFAULT_PATCH_SIZE: usize = 512;

/// How source images are brought to square training patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitPolicy {
    /// Non-overlapping tiles; images smaller than a tile are padded.
    #[default]
    Crop,
    /// Nearest-neighbour rescale of the longer side to the patch size, then pad.
    Resize,
}

/// Where captions and scores come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceSpec {
    /// Canned answers from a directory.
    Stub(PathBuf),
    /// A child process speaking line-delimited JSON on stdin/stdout.
    Command(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: String,
    pub category: Category,
    /// Must agree with the category when given.
    pub index: Option<IndexKind>,
    /// Directory of `<id>.msr` rasters.
    pub rasters: PathBuf,
    /// Directory of `<id>.pgm` label maps with `<id>.json` legends.
    pub labels: Option<PathBuf>,
    pub output: PathBuf,
    pub bins: usize,
    pub connectivity: Connectivity,
    pub top_k: usize,
    pub min_area_ratio: f64,
    pub reflectance_divisor: f64,
    pub ablation: bool,
    pub caption: Option<ServiceSpec>,
    pub judge: Option<ServiceSpec>,
    pub quality: QualityConfig,
    pub inspection_sample: usize,
    pub patch_size: usize,
    pub fit: FitPolicy,
    /// Source classes forming the foreground; defaults to the dataset's table.
    pub merge: Option<Vec<String>>,
    /// Split per source image id; unlisted images get `default_split`.
    pub splits: BTreeMap<String, Split>,
    pub default_split: Split,
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dataset: "custom".into(),
            category: Category::Vegetation,
            index: None,
            rasters: PathBuf::from("rasters"),
            labels: None,
            output: PathBuf::from("out"),
            bins: DEFAULT_BINS,
            connectivity: Connectivity::Eight,
            top_k: DEFAULT_TOP_K,
            min_area_ratio: 0.0,
            reflectance_divisor: DEFAULT_REFLECTANCE_DIVISOR,
            ablation: false,
            caption: None,
            judge: None,
            quality: QualityConfig::default(),
            inspection_sample: DEFAULT_INSPECTION_SAMPLE,
            patch_size: DEFAULT_PATCH_SIZE,
            fit: FitPolicy::Crop,
            merge: None,
            splits: BTreeMap::new(),
            default_split: Split::Train,
            seed: 0,
            jobs: 0,
        }
    }
}

impl PipelineConfig {
    /// Reads a JSON config; relative paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.rebase(path.parent().unwrap_or(Path::new("")));
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.rasters);
        fix(&mut self.output);
        if let Some(l) = &mut self.labels {
            fix(l);
        }
        for spec in [&mut self.caption, &mut self.judge].into_iter().flatten() {
            if let ServiceSpec::Stub(dir) = spec {
                fix(dir);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(kind) = self.index {
            if kind != self.category.index_kind() {
                return Err(Error::Config(format!(
                    "category {} is extracted with {}, not {}",
                    self.category,
                    self.category.index_kind(),
                    kind
                )));
            }
        }
        if self.bins < 2 {
            return Err(Error::Config(format!("bins must be at least 2, got {}", self.bins)));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.min_area_ratio) {
            return Err(Error::Config(format!(
                "min_area_ratio must lie in [0, 1], got {}",
                self.min_area_ratio
            )));
        }
        if !(self.reflectance_divisor > 0.0 && self.reflectance_divisor.is_finite()) {
            return Err(Error::Config("reflectance_divisor must be positive".into()));
        }
        if self.patch_size == 0 {
            return Err(Error::Config("patch_size must be positive".into()));
        }
        if self.quality.schedule.is_empty() {
            return Err(Error::Config("quality schedule is empty".into()));
        }
        for p in &self.quality.schedule {
            p.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn index_kind(&self) -> IndexKind {
        self.index.unwrap_or(self.category.index_kind())
    }

    pub fn apg_options(&self) -> ApgOptions {
        ApgOptions {
            bins: self.bins,
            connectivity: self.connectivity,
            top_k: self.top_k,
            min_area_ratio: self.min_area_ratio,
            reflectance_divisor: self.reflectance_divisor,
        }
    }

    fn merge_table(&self) -> Result<MergeTable> {
        if let Some(classes) = &self.merge {
            let names: Vec<&str> = classes.iter().map(String::as_str).collect();
            return Ok(MergeTable::new(&self.dataset, self.category, &names));
        }
        let table = default_merge_table(&self.dataset, self.category).ok_or_else(|| {
            Error::Config(format!(
                "no merge table for {} / {}; set `merge` in the config",
                self.dataset, self.category
            ))
        })?;
        if !table.confirmed {
            warn!(
                "using the unconfirmed default merge table for {} / {}: {:?}",
                table.dataset, table.category, table.include
            );
        }
        Ok(table)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))
    }
}

/// A per-image stage of the prompt generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Index,
    CoarseMask,
    Regions,
    Prompt,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Index => "index",
            Stage::CoarseMask => "coarse-mask",
            Stage::Regions => "regions",
            Stage::Prompt => "prompt",
        }
    }

    fn dir(self) -> &'static str {
        match self {
            Stage::Index => "index",
            Stage::CoarseMask => "coarse",
            Stage::Regions => "regions",
            Stage::Prompt => "prompt",
        }
    }

    fn ext(self) -> &'static str {
        match self {
            Stage::Index => "f32",
            Stage::CoarseMask => "pgm",
            Stage::Regions => "json",
            Stage::Prompt => "txt",
        }
    }

    /// Artifact path of this stage for `id` under `root`.
    pub fn artifact(self, root: &Path, id: &str) -> PathBuf {
        root.join(self.dir()).join(format!("{id}.{}", self.ext()))
    }
}

fn content_key(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

fn key_path(artifact: &Path) -> PathBuf {
    let mut s = artifact.as_os_str().to_owned();
    s.push(".key");
    PathBuf::from(s)
}

fn is_fresh(artifact: &Path, key: &str) -> bool {
    artifact.is_file() && fs::read_to_string(key_path(artifact)).is_ok_and(|k| k == key)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

/// Writes the artifact unless its key is unchanged. Returns whether it wrote.
fn commit(artifact: &Path, key: &str, bytes: impl FnOnce() -> Result<Vec<u8>>) -> Result<bool> {
    if is_fresh(artifact, key) {
        return Ok(false);
    }
    write_file(artifact, &bytes()?)?;
    write_file(&key_path(artifact), key.as_bytes())?;
    Ok(true)
}

fn read_upstream(stage: Stage, root: &Path, id: &str) -> Result<Vec<u8>> {
    let path = stage.artifact(root, id);
    match fs::read(&path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::Dependency {
            stage: stage.name(),
            path,
        }),
        Err(e) => Err(Error::file(path, e)),
    }
}

/// Sorted stems of the files with extension `ext` in `dir`.
pub fn list_ids(dir: &Path, ext: &str) -> Result<Vec<String>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::file(dir, e))?;
    let mut ids = BTreeSet::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::file(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == ext) {
            if let Some(stem) = path.file_stem() {
                ids.insert(stem.to_string_lossy().into_owned());
            }
        }
    }
    Ok(ids.into_iter().collect())
}

/// Runs `f` over `ids` on the pool. Results come back in `ids` order and
/// the first failing id (in that order) is reported.
fn per_image<T: Send>(
    pool: &rayon::ThreadPool,
    ids: &[String],
    f: impl Fn(&str) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let results: Vec<Result<T>> = pool.install(|| {
        ids.par_iter()
            .map(|id| f(id).map_err(|e| e.for_image(id.as_str())))
            .collect()
    });
    results.into_iter().collect()
}

/// Computes `<output>/index/<id>.f32` from `<source>/<id>.msr`.
pub fn stage_index(cfg: &PipelineConfig, source: &Path, id: &str) -> Result<bool> {
    let src = source.join(format!("{id}.msr"));
    let bytes = fs::read(&src).map_err(|e| Error::file(&src, e))?;
    let kind = cfg.index_kind();
    let key = content_key(&[&bytes, kind.name().as_bytes(), &cfg.reflectance_divisor.to_le_bytes()]);
    commit(&Stage::Index.artifact(&cfg.output, id), &key, || {
        let raster = MultibandRaster::from_bytes(&bytes)?;
        Ok(compute_index_scaled(&raster, kind, cfg.reflectance_divisor)?.to_grid_bytes())
    })
}

pub fn stage_coarse_mask(cfg: &PipelineConfig, id: &str) -> Result<bool> {
    let bytes = read_upstream(Stage::Index, &cfg.output, id)?;
    let key = content_key(&[&bytes, &(cfg.bins as u64).to_le_bytes()]);
    commit(&Stage::CoarseMask.artifact(&cfg.output, id), &key, || {
        let index = IndexMap::from_grid_bytes(&bytes, cfg.index_kind())?;
        let threshold = otsu_threshold(&index, cfg.bins)?;
        info!("{id}: threshold {:.6} (bin {})", threshold.value, threshold.bin);
        Ok(binarize(&index, &threshold).to_pgm())
    })
}

pub fn stage_regions(cfg: &PipelineConfig, id: &str) -> Result<bool> {
    let bytes = read_upstream(Stage::CoarseMask, &cfg.output, id)?;
    let key = content_key(&[&bytes, &[u8::from(cfg.connectivity)]]);
    commit(&Stage::Regions.artifact(&cfg.output, id), &key, || {
        let mask = BinaryMask::from_pgm(&bytes)?;
        let (regions, _, _) = prompt_from_mask(&mask, &cfg.apg_options())?;
        let mut out = serde_json::to_vec_pretty(&regions)?;
        out.push(b'\n');
        Ok(out)
    })
}

pub fn stage_prompt(cfg: &PipelineConfig, id: &str) -> Result<bool> {
    let bytes = read_upstream(Stage::Regions, &cfg.output, id)?;
    let key = content_key(&[
        &bytes,
        &(cfg.top_k as u64).to_le_bytes(),
        &cfg.min_area_ratio.to_le_bytes(),
    ]);
    commit(&Stage::Prompt.artifact(&cfg.output, id), &key, || {
        let regions: Vec<RegionAttributes> =
            serde_json::from_slice(&bytes).map_err(|e| Error::Format(format!("region attributes for {id}: {e}")))?;
        let selected = select_top_regions(&regions, cfg.top_k, cfg.min_area_ratio)?;
        Ok(crate::prompts::serialize_prompt(&selected).into_bytes())
    })
}

/// Runs one stage over `ids`; returns how many artifacts were (re)written.
pub fn run_stage(cfg: &PipelineConfig, stage: Stage, source: &Path, ids: &[String]) -> Result<usize> {
    let pool = cfg.pool()?;
    let wrote = per_image(&pool, ids, |id| match stage {
        Stage::Index => stage_index(cfg, source, id),
        Stage::CoarseMask => stage_coarse_mask(cfg, id),
        Stage::Regions => stage_regions(cfg, id),
        Stage::Prompt => stage_prompt(cfg, id),
    })?;
    let n = wrote.iter().filter(|&&w| w).count();
    info!("{}: {n} written, {} up to date", stage.name(), ids.len() - n);
    Ok(n)
}

/// Runs stages `index..=last` in order.
pub fn run_through(cfg: &PipelineConfig, last: Stage, source: &Path, ids: &[String]) -> Result<()> {
    for stage in [Stage::Index, Stage::CoarseMask, Stage::Regions, Stage::Prompt] {
        if stage > last {
            break;
        }
        run_stage(cfg, stage, source, ids)?;
    }
    Ok(())
}

/// One training patch cut from a source image.
#[derive(Debug, Clone, PartialEq)]
struct PatchEntry {
    id: String,
    source: String,
    origin: [usize; 2],
}

fn fit_patches(
    cfg: &PipelineConfig,
    raster: &MultibandRaster,
    labels: &ClassLabelMap,
) -> Result<Vec<(MultibandRaster, ClassLabelMap, [usize; 2])>> {
    let size = cfg.patch_size;
    let (w, h) = (raster.width(), raster.height());
    let padded = |r: &MultibandRaster, l: &ClassLabelMap| -> Result<_> {
        Ok(vec![(pad_to_square(r, size)?, pad_labels_to_square(l, size)?, [0, 0])])
    };
    match cfg.fit {
        FitPolicy::Crop if w >= size && h >= size => Ok(crop_patches(raster, labels, size)?
            .into_iter()
            .map(|p| (p.raster, p.labels, [p.origin.0, p.origin.1]))
            .collect()),
        FitPolicy::Crop if w <= size && h <= size => padded(raster, labels),
        FitPolicy::Crop => Err(Error::Argument(format!(
            "a {w}x{h} image can be neither tiled nor padded to {size}; use the resize fit policy"
        ))),
        FitPolicy::Resize => {
            let (r, l) = fit_longer_side(raster, labels, size)?;
            padded(&r, &l)
        }
    }
}

fn prepare_patches(cfg: &PipelineConfig, pool: &rayon::ThreadPool, ids: &[String]) -> Result<Vec<PatchEntry>> {
    let labels_dir = cfg
        .labels
        .as_ref()
        .ok_or_else(|| Error::Config("`labels` directory is required to build a dataset".into()))?;
    let table = cfg.merge_table()?;
    let per_source = per_image(pool, ids, |id| {
        let raster = read_raster(cfg.rasters.join(format!("{id}.msr")))?;
        let labels = read_label_map(
            labels_dir.join(format!("{id}.pgm")),
            labels_dir.join(format!("{id}.json")),
        )?;
        let mut entries = Vec::new();
        for (r, l, origin) in fit_patches(cfg, &raster, &labels)? {
            let pid = format!("{id}_{:05}_{:05}", origin[0], origin[1]);
            let mask = merge_classes(&l, &table)?;
            let image_bytes = r.to_bytes();
            let mask_bytes = mask.to_pgm();
            let image_path = cfg.output.join("images").join(format!("{pid}.msr"));
            let mask_path = cfg.output.join("masks").join(format!("{pid}.pgm"));
            commit(&image_path, &content_key(&[&image_bytes]), || Ok(image_bytes.clone()))?;
            commit(&mask_path, &content_key(&[&mask_bytes]), || Ok(mask_bytes.clone()))?;
            entries.push(PatchEntry {
                id: pid,
                source: id.to_string(),
                origin,
            });
        }
        Ok(entries)
    })?;
    let entries: Vec<PatchEntry> = per_source.into_iter().flatten().collect();
    let mut seen = BTreeSet::new();
    if let Some(dup) = entries.iter().find(|e| !seen.insert(e.id.as_str())) {
        return Err(Error::Consistency(format!("patch id {} produced twice", dup.id)));
    }
    Ok(entries)
}

fn connect(spec: &Option<ServiceSpec>, what: &str) -> Result<Box<dyn ServiceBoth>> {
    match spec {
        None => Err(Error::Config(format!("no {what} service configured"))),
        Some(ServiceSpec::Stub(dir)) => {
            if !dir.is_dir() {
                return Err(Error::Config(format!(
                    "{what} stub directory {} not found",
                    dir.display()
                )));
            }
            Ok(Box::new(Stubs {
                caption: StubCaptionDir::new(dir),
                judge: StubJudgeDir::new(dir),
            }))
        }
        Some(ServiceSpec::Command(argv)) => Ok(Box::new(LineClient::new(ChildProcessTransport::spawn(argv)?))),
    }
}

/// A service usable for both roles; each config entry picks one role.
trait ServiceBoth: CaptionService + JudgeService {
    fn as_caption(&self) -> &dyn CaptionService;
    fn as_judge(&self) -> &dyn JudgeService;
}

impl<T: CaptionService + JudgeService> ServiceBoth for T {
    fn as_caption(&self) -> &dyn CaptionService {
        self
    }
    fn as_judge(&self) -> &dyn JudgeService {
        self
    }
}

struct Stubs {
    caption: StubCaptionDir,
    judge: StubJudgeDir,
}

impl CaptionService for Stubs {
    fn caption(
        &self,
        req: &crate::prompts::CaptionRequest,
    ) -> Result<crate::prompts::CaptionResponse, crate::prompts::ServiceError> {
        self.caption.caption(req)
    }
}

impl JudgeService for Stubs {
    fn judge(&self, req: &crate::prompts::JudgeRequest) -> Result<u8, crate::prompts::ServiceError> {
        self.judge.judge(req)
    }
}

/// Counts and quality statistics written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub dataset: String,
    pub category: Category,
    pub ablation: bool,
    pub records: usize,
    pub counts: BTreeMap<Split, BTreeMap<Category, usize>>,
    pub inspected: usize,
    pub passes: usize,
    pub regenerations: usize,
    pub final_params: SamplingParams,
    pub rejected: Vec<String>,
}

/// Builds the dataset: patches, ground-truth maps, prompts, instructions,
/// responses and `manifest.jsonl`.
///
/// Responses for a seeded inspection subset go through the quality loop;
/// the remaining patches are captioned once with the sampling parameters
/// the loop settled on. Rejected samples are left out of the manifest and
/// reported as [`Error::PartialQuality`] after everything is written.
pub fn build(cfg: &PipelineConfig) -> Result<BuildSummary> {
    cfg.validate()?;
    let pool = cfg.pool()?;
    let sources = list_ids(&cfg.rasters, "msr")?;
    if sources.is_empty() {
        return Err(Error::Config(format!("no .msr rasters in {}", cfg.rasters.display())));
    }
    let captioner = connect(&cfg.caption, "caption")?;
    let judge = connect(&cfg.judge, "judge")?;

    let patches = prepare_patches(cfg, &pool, &sources)?;
    let pids: Vec<String> = patches.iter().map(|p| p.id.clone()).collect();
    run_through(cfg, Stage::Prompt, &cfg.output.join("images"), &pids)?;

    let instructions = per_image(&pool, &pids, |pid| {
        let prompt = fs::read_to_string(Stage::Prompt.artifact(&cfg.output, pid))
            .map_err(|e| Error::file(Stage::Prompt.artifact(&cfg.output, pid), e))?;
        Ok(Instruction::new(cfg.category, &prompt, cfg.ablation))
    })?;
    let image_rel = |pid: &str| format!("images/{pid}.msr");

    let picked = inspection_sample(pids.len(), cfg.inspection_sample, cfg.seed);
    let samples: Vec<QualitySample> = picked
        .iter()
        .map(|&k| QualitySample {
            id: pids[k].clone(),
            image: image_rel(&pids[k]),
            instruction: instructions[k].clone(),
        })
        .collect();
    let report: QualityReport = quality_loop(&samples, captioner.as_caption(), judge.as_judge(), &cfg.quality)?;

    let mut responses: BTreeMap<String, String> =
        report.accepted.iter().map(|a| (a.id.clone(), a.text.clone())).collect();
    let rejected: BTreeSet<&str> = report.rejected.iter().map(String::as_str).collect();
    let inspected: BTreeSet<usize> = picked.iter().copied().collect();
    let rest: Vec<String> = (0..pids.len())
        .filter(|k| !inspected.contains(k))
        .map(|k| pids[k].clone())
        .collect();
    let params = report.final_params;
    let generated = per_image(&pool, &rest, |pid| {
        let k = pids
            .binary_search_by(|p| p.as_str().cmp(pid))
            .map_err(|_| Error::Consistency(format!("unknown patch {pid}")))?;
        let req = cfg.quality.caption_request(&image_rel(pid), &instructions[k], params);
        Ok(request_caption(captioner.as_caption(), &req, cfg.quality.retry)?.text)
    })?;
    responses.extend(rest.into_iter().zip(generated));

    let mut records: Vec<SpieRecord> = Vec::with_capacity(patches.len());
    for (patch, instruction) in patches.iter().zip(&instructions) {
        if rejected.contains(patch.id.as_str()) {
            continue;
        }
        let response = responses
            .get(&patch.id)
            .ok_or_else(|| Error::Consistency(format!("no response for {}", patch.id)))?;
        let split = cfg.splits.get(&patch.source).copied().unwrap_or(cfg.default_split);
        records.push(build_record(
            &image_rel(&patch.id),
            &format!("masks/{}.pgm", patch.id),
            instruction,
            response,
            cfg.category,
            split,
            Provenance {
                dataset: cfg.dataset.clone(),
                source: patch.source.clone(),
                origin: patch.origin,
            },
        )?);
    }
    write_manifest(&records, cfg.output.join("manifest.jsonl"))?;

    let summary = BuildSummary {
        dataset: cfg.dataset.clone(),
        category: cfg.category,
        ablation: cfg.ablation,
        records: records.len(),
        counts: manifest_summary(&records),
        inspected: samples.len(),
        passes: report.passes,
        regenerations: report.regenerations,
        final_params: report.final_params,
        rejected: report.rejected.clone(),
    };
    let mut json = serde_json::to_vec_pretty(&summary)?;
    json.push(b'\n');
    write_file(&cfg.output.join("summary.json"), &json)?;
    info!(
        "wrote {} records to {}",
        records.len(),
        cfg.output.join("manifest.jsonl").display()
    );
    if !report.is_complete() {
        return Err(Error::PartialQuality {
            rejected: report.rejected,
        });
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEvaluation {
    pub id: String,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub pooled: MetricsReport,
    pub images: Vec<ImageEvaluation>,
}

impl EvalReport {
    pub fn table(&self) -> String {
        let mut rows: Vec<(&str, &MetricsReport)> = self.images.iter().map(|e| (e.id.as_str(), &e.metrics)).collect();
        rows.push(("pooled", &self.pooled));
        crate::metrics::format_table(rows)
    }
}

/// Scores `<pred>/<name>.pgm` against `<gt>/<name>.pgm` for every name.
/// The pooled report sums the per-image confusion counts.
pub fn evaluate(pred: &Path, gt: &Path, jobs: usize) -> Result<EvalReport> {
    let p: BTreeSet<String> = list_ids(pred, "pgm")?.into_iter().collect();
    let g: BTreeSet<String> = list_ids(gt, "pgm")?.into_iter().collect();
    let orphans: Vec<String> = p
        .symmetric_difference(&g)
        .map(|id| {
            let side = if p.contains(id) { pred } else { gt };
            side.join(format!("{id}.pgm")).display().to_string()
        })
        .collect();
    if !orphans.is_empty() {
        return Err(Error::Pairing { orphans });
    }
    if p.is_empty() {
        return Err(Error::Argument(format!("no .pgm masks in {}", pred.display())));
    }
    let ids: Vec<String> = p.into_iter().collect();
    let pool = PipelineConfig {
        jobs,
        ..Default::default()
    }
    .pool()?;
    let images = per_image(&pool, &ids, |id| {
        let cm = confusion(
            &read_mask(pred.join(format!("{id}.pgm")))?,
            &read_mask(gt.join(format!("{id}.pgm")))?,
        )?;
        Ok(ImageEvaluation {
            id: id.to_string(),
            confusion: cm,
            metrics: compute_metrics(&cm)?,
        })
    })?;
    let total: ConfusionMatrix = images.iter().map(|e| e.confusion).sum();
    Ok(EvalReport {
        confusion: total,
        pooled: compute_metrics(&total)?,
        images,
    })
}

/// Writes `pooled.json`, `per_image.json` and `table.txt` into `dir`.
pub fn write_eval_report(report: &EvalReport, dir: &Path) -> Result<()> {
    #[derive(Serialize)]
    struct Pooled<'a> {
        confusion: &'a ConfusionMatrix,
        metrics: &'a MetricsReport,
    }
    let mut pooled = serde_json::to_vec_pretty(&Pooled {
        confusion: &report.confusion,
        metrics: &report.pooled,
    })?;
    pooled.push(b'\n');
    let mut per_image = serde_json::to_vec_pretty(&report.images)?;
    per_image.push(b'\n');
    write_file(&dir.join("pooled.json"), &pooled)?;
    write_file(&dir.join("per_image.json"), &per_image)?;
    write_file(&dir.join("table.txt"), report.table().as_bytes())
}
