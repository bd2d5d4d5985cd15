//! Session state and its on-disk layout.
//!
//! Each session lives in `<root>/<id>/`:
//! `config.json`, `meta.json`, `dataset.bin`, `sweep.json`, `embeddings.bin`,
//! `preferences.jsonl` (append-only) and `sampler.json`.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use pbic_core::data::{self, IngestConfig};
use pbic_core::preference::{
    agreement_check, fit_with_lengthscale_search, laplace_fit, read_jsonl, AgreementVerdict, GpHyperparams,
    PreferenceRecord, UtilityPosterior, LENGTHSCALE_CANDIDATES,
};
use pbic_core::render::{render_curve, render_embedding, CurveDecor, CurveMarker, MarkerKind, PlotSpec};
use pbic_core::search::{default_grid, sweep_with_embeddings, PerplexitySweep, SweepConfig};
use pbic_core::tsne::{Embedding, OptimizerConfig};
use pbic_core::Dataset;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::ServiceError;
use crate::sampler::{Pair, SamplerState};

const CONFIG_FILE: &str = "config.json";
const DATASET_FILE: &str = "dataset.bin";
const SWEEP_FILE: &str = "sweep.json";
const EMBEDDINGS_FILE: &str = "embeddings.bin";
const PREFERENCES_FILE: &str = "preferences.jsonl";
const SAMPLER_FILE: &str = "sampler.json";
const META_FILE: &str = "meta.json";

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    dataset_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    /// CSV file readable by the server process.
    Csv {
        path: PathBuf,
        #[serde(default)]
        ingest: IngestConfig,
    },
    /// Seeded Gaussian clusters (seeded with the session seed).
    Clusters { k: usize, per_cluster: usize, dim: usize, separation: f64 },
    /// Seeded concentric rings (seeded with the session seed).
    Ring { per_ring: usize, rings: usize, dim: usize, noise: f64 },
}

impl DatasetSource {
    pub fn load(&self, seed: u64) -> Result<Dataset, ServiceError> {
        Ok(match self {
            Self::Csv { path, ingest } => data::load_csv(path, ingest)?,
            Self::Clusters { k, per_cluster, dim, separation } => {
                data::synth_gaussian_clusters(*k, *per_cluster, *dim, *separation, seed)?
            }
            Self::Ring { per_ring, rings, dim, noise } => data::synth_ring(*per_ring, *rings, *dim, *noise, seed)?,
        })
    }
}

fn yes() -> bool {
    true
}

/// Body of `POST /sessions`, persisted verbatim as `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub dataset: DatasetSource,
    /// Overrides the default grid (8 doubling up to n/2).
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub show_labels: bool,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub gp: GpHyperparams,
    #[serde(default)]
    pub lengthscale_search: bool,
}

struct MutableState {
    prefs: Vec<PreferenceRecord>,
    posterior: UtilityPosterior,
    sampler: SamplerState,
}

pub struct Session {
    pub id: String,
    dir: PathBuf,
    pub config: SessionConfig,
    pub dataset: Dataset,
    pub sweep: PerplexitySweep,
    pub embeddings: Vec<Option<Embedding>>,
    pbic_index: usize,
    state: tokio::sync::RwLock<MutableState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairView {
    pub draw: u64,
    pub left: usize,
    pub right: usize,
    pub left_perplexity: f64,
    pub right_perplexity: f64,
    pub left_svg: String,
    pub right_svg: String,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_data()?;
    }
    fs::rename(tmp, path)
}

fn write_embeddings(embeddings: &[Option<Embedding>], n: usize, path: &Path) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&(embeddings.len() as u64).to_le_bytes())?;
    out.write_all(&(n as u64).to_le_bytes())?;
    for slot in embeddings {
        let Some(e) = slot else {
            out.write_all(&[0])?;
            continue;
        };
        out.write_all(&[1])?;
        out.write_all(&e.perplexity.unwrap_or(f64::NAN).to_le_bytes())?;
        out.write_all(&e.final_kl.to_le_bytes())?;
        out.write_all(&e.seed.to_le_bytes())?;
        out.write_all(&(e.iterations_run as u64).to_le_bytes())?;
        out.write_all(&[u8::from(e.converged)])?;
        for c in &e.coords {
            out.write_all(&c[0].to_le_bytes())?;
            out.write_all(&c[1].to_le_bytes())?;
        }
    }
    out.into_inner().map_err(|e| e.into_error())?.sync_data()
}

fn read_embeddings(path: &Path) -> Result<Vec<Option<Embedding>>, ServiceError> {
    let mut input = BufReader::new(File::open(path)?);
    let mut word = [0u8; 8];
    let mut byte = [0u8; 1];
    let mut u64_at = |r: &mut BufReader<File>| -> std::io::Result<u64> {
        r.read_exact(&mut word)?;
        Ok(u64::from_le_bytes(word))
    };
    let count = u64_at(&mut input)? as usize;
    let n = u64_at(&mut input)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        input.read_exact(&mut byte)?;
        if byte[0] == 0 {
            out.push(None);
            continue;
        }
        let perplexity = f64::from_bits(u64_at(&mut input)?);
        let final_kl = f64::from_bits(u64_at(&mut input)?);
        let seed = u64_at(&mut input)?;
        let iterations_run = u64_at(&mut input)? as usize;
        input.read_exact(&mut byte)?;
        let converged = byte[0] == 1;
        let mut coords = Vec::with_capacity(n);
        for _ in 0..n {
            let x = f64::from_bits(u64_at(&mut input)?);
            let y = f64::from_bits(u64_at(&mut input)?);
            coords.push([x, y]);
        }
        let perplexity = (!perplexity.is_nan()).then_some(perplexity);
        out.push(Some(Embedding { coords, final_kl, perplexity, seed, iterations_run, converged }));
    }
    Ok(out)
}

fn fit(config: &SessionConfig, grid: &[f64], prefs: &[PreferenceRecord]) -> Result<UtilityPosterior, ServiceError> {
    Ok(if config.lengthscale_search {
        fit_with_lengthscale_search(prefs, grid, &config.gp, &LENGTHSCALE_CANDIDATES)?
    } else {
        laplace_fit(prefs, grid, &config.gp)?
    })
}

impl Session {
    fn build(
        id: String,
        dir: PathBuf,
        config: SessionConfig,
        dataset: Dataset,
        sweep: PerplexitySweep,
        embeddings: Vec<Option<Embedding>>,
        prefs: Vec<PreferenceRecord>,
        sampler: SamplerState,
    ) -> Result<Self, ServiceError> {
        let pbic_index = sweep
            .selected_index
            .ok_or_else(|| ServiceError::SweepFailed("no grid point produced a score".into()))?;
        if embeddings.len() != sweep.grid.len() {
            return Err(ServiceError::Storage("embedding count does not match the grid".into()));
        }
        for r in &prefs {
            r.validate(sweep.grid.len()).map_err(ServiceError::Storage)?;
        }
        let posterior = fit(&config, &sweep.grid, &prefs)?;
        Ok(Self {
            id,
            dir,
            config,
            dataset,
            sweep,
            embeddings,
            pbic_index,
            state: tokio::sync::RwLock::new(MutableState { prefs, posterior, sampler }),
        })
    }

    fn load(id: &str, dir: PathBuf) -> Result<Self, ServiceError> {
        let config: SessionConfig = serde_json::from_slice(&fs::read(dir.join(CONFIG_FILE))?)?;
        let meta: Meta = serde_json::from_slice(&fs::read(dir.join(META_FILE))?)?;
        let file = BufReader::new(File::open(dir.join(DATASET_FILE))?);
        let dataset = data::read_binary(file, meta.dataset_name)?;
        let sweep: PerplexitySweep = serde_json::from_slice(&fs::read(dir.join(SWEEP_FILE))?)?;
        let embeddings = read_embeddings(&dir.join(EMBEDDINGS_FILE))?;
        let prefs = read_jsonl(BufReader::new(File::open(dir.join(PREFERENCES_FILE))?))?;
        let sampler: SamplerState = serde_json::from_slice(&fs::read(dir.join(SAMPLER_FILE))?)?;
        Self::build(id.to_string(), dir, config, dataset, sweep, embeddings, prefs, sampler)
    }

    pub fn grid(&self) -> &[f64] {
        &self.sweep.grid
    }

    pub fn pbic_index(&self) -> usize {
        self.pbic_index
    }

    fn labels_shown(&self) -> Option<&[i64]> {
        self.dataset.labels().filter(|_| self.config.show_labels)
    }

    /// The t-SNE map at grid slot `index`; failed slots render empty.
    pub fn map_svg(&self, index: usize) -> Result<String, ServiceError> {
        let slot = self
            .embeddings
            .get(index)
            .ok_or_else(|| ServiceError::NotFound(format!("{}/maps/{index}", self.id)))?;
        let spec = PlotSpec { color_by_label: self.config.show_labels, ..Default::default() };
        Ok(match slot {
            Some(e) => render_embedding(e, self.labels_shown(), &spec),
            None => pbic_core::render::render_points(&[], None, &spec),
        })
    }

    pub async fn next_pair(&self) -> Result<PairView, ServiceError> {
        let m = self.grid().len();
        if m < 2 {
            return Err(ServiceError::BadRequest("the grid has a single perplexity; no pairs to compare".into()));
        }
        let mut state = self.state.write().await;
        let mut sampler = state.sampler;
        let draw = sampler.drawn;
        let Pair { left, right } = sampler.next_pair(m);
        write_atomic(&self.dir.join(SAMPLER_FILE), &serde_json::to_vec(&sampler)?)?;
        state.sampler = sampler;
        drop(state);
        Ok(PairView {
            draw,
            left,
            right,
            left_perplexity: self.grid()[left],
            right_perplexity: self.grid()[right],
            left_svg: self.map_svg(left)?,
            right_svg: self.map_svg(right)?,
        })
    }

    /// Appends and persists the record, then refits over all records.
    pub async fn record(&self, record: PreferenceRecord) -> Result<Value, ServiceError> {
        record.validate(self.grid().len()).map_err(ServiceError::BadRequest)?;
        let mut state = self.state.write().await;
        {
            let mut line = serde_json::to_vec(&record)?;
            line.push(b'\n');
            let mut f = OpenOptions::new().append(true).open(self.dir.join(PREFERENCES_FILE))?;
            f.write_all(&line)?;
            f.sync_data()?;
        }
        state.prefs.push(record);
        state.posterior = fit(&self.config, self.grid(), &state.prefs)?;
        let (posterior, verdict) = self.summary(&state)?;
        Ok(json!({
            "preference_count": state.prefs.len(),
            "posterior": posterior,
            "verdict": verdict,
        }))
    }

    fn summary(&self, state: &MutableState) -> Result<(Value, Option<AgreementVerdict>), ServiceError> {
        let post = &state.posterior;
        let sd = post.std_dev();
        let mut posterior = serde_json::to_value(post)?;
        posterior["std_dev"] = json!(sd);
        posterior["lower"] = json!(post.mean.iter().zip(&sd).map(|(m, s)| m - s).collect::<Vec<_>>());
        posterior["upper"] = json!(post.mean.iter().zip(&sd).map(|(m, s)| m + s).collect::<Vec<_>>());
        let verdict = if state.prefs.is_empty() { None } else { Some(agreement_check(post, self.pbic_index)?) };
        Ok((posterior, verdict))
    }

    fn utility_svg(&self, state: &MutableState, verdict: Option<&AgreementVerdict>) -> Result<String, ServiceError> {
        let post = &state.posterior;
        let sd = post.std_dev();
        let lower: Vec<f64> = post.mean.iter().zip(&sd).map(|(m, s)| m - s).collect();
        let upper: Vec<f64> = post.mean.iter().zip(&sd).map(|(m, s)| m + s).collect();
        let mut decor = CurveDecor { y_label: "utility".into(), ..Default::default() };
        decor.markers.push(CurveMarker { index: self.pbic_index, kind: MarkerKind::Dot, label: "pBIC".into() });
        if let Some(v) = verdict {
            decor.band = Some((&lower, &upper));
            decor.markers.push(CurveMarker { index: v.human_argmax_index, kind: MarkerKind::Cross, label: "human".into() });
            decor.hlines.push(v.lower_bound);
        }
        let spec = PlotSpec { width: 560, height: 320, ..Default::default() };
        render_curve(self.grid(), &post.mean, &decor, &spec).map_err(|e| ServiceError::Storage(e.to_string()))
    }

    /// Full report as a JSON value; objects serialize with sorted keys.
    pub async fn report(&self) -> Result<Value, ServiceError> {
        let state = self.state.read().await;
        let (posterior, verdict) = self.summary(&state)?;
        let svg = self.utility_svg(&state, verdict.as_ref())?;
        let argmax = verdict.as_ref().map(|v| v.human_argmax_index);
        Ok(json!({
            "session_id": self.id,
            "config": self.config,
            "dataset": {
                "name": self.dataset.name(),
                "n": self.dataset.n(),
                "dim": self.dataset.dim(),
                "has_labels": self.dataset.labels().is_some(),
            },
            "show_labels": self.config.show_labels,
            "sweep": self.sweep,
            "pbic_index": self.pbic_index,
            "pbic_perplexity": self.grid()[self.pbic_index],
            "preference_count": state.prefs.len(),
            "pairs_drawn": state.sampler.drawn,
            "posterior": posterior,
            "human_argmax_defined": argmax.is_some(),
            "human_argmax_index": argmax,
            "human_argmax_perplexity": argmax.map(|i| self.grid()[i]),
            "verdict": verdict,
            "significant_difference": verdict.as_ref().map(|v| v.significant_difference),
            "utility_svg": svg,
        }))
    }

    pub async fn preferences(&self) -> Vec<PreferenceRecord> {
        self.state.read().await.prefs.clone()
    }

    pub async fn posterior(&self) -> UtilityPosterior {
        self.state.read().await.posterior.clone()
    }
}

/// All sessions under one data directory. Sessions created by an earlier
/// process are loaded on first access.
pub struct Store {
    root: PathBuf,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root, sessions: RwLock::new(HashMap::new()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Runs the full sweep, then persists the session. Blocking; nothing is
    /// left on disk when any step fails.
    pub fn create(&self, config: SessionConfig) -> Result<Arc<Session>, ServiceError> {
        let dataset = config.dataset.load(config.seed)?;
        let grid = match &config.grid {
            Some(g) => g.clone(),
            None => default_grid(dataset.n()).map_err(|e| ServiceError::BadRequest(e.to_string()))?,
        };
        let sweep_config = SweepConfig { optimizer: config.optimizer.clone(), restarts: 1, base_seed: config.seed };
        let (sweep, embeddings) = sweep_with_embeddings(&dataset, &grid, &sweep_config).map_err(|e| match e {
            pbic_core::search::SearchError::Tsne(e) => ServiceError::SweepFailed(e.to_string()),
            e => ServiceError::BadRequest(e.to_string()),
        })?;
        if let Some(msg) = sweep.failures.iter().flatten().next() {
            if sweep.selected_index.is_none() {
                return Err(ServiceError::SweepFailed(msg.clone()));
            }
        }

        let id = uuid::Uuid::new_v4().to_string();
        let staging = self.root.join(format!(".staging-{id}"));
        let result = (|| -> Result<(), ServiceError> {
            fs::create_dir_all(&staging)?;
            write_atomic(&staging.join(CONFIG_FILE), &serde_json::to_vec_pretty(&config)?)?;
            data::save_binary(&dataset, staging.join(DATASET_FILE))?;
            let meta = Meta { dataset_name: dataset.name().to_string() };
            write_atomic(&staging.join(META_FILE), &serde_json::to_vec_pretty(&meta)?)?;
            write_atomic(&staging.join(SWEEP_FILE), &serde_json::to_vec_pretty(&sweep)?)?;
            write_embeddings(&embeddings, dataset.n(), &staging.join(EMBEDDINGS_FILE))?;
            File::create(staging.join(PREFERENCES_FILE))?.sync_data()?;
            write_atomic(&staging.join(SAMPLER_FILE), &serde_json::to_vec(&SamplerState::new(config.seed))?)?;
            fs::rename(&staging, self.root.join(&id))?;
            Ok(())
        })();
        if let Err(e) = result {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }
        let session = Arc::new(Session::build(
            id.clone(),
            self.root.join(&id),
            config,
            dataset,
            sweep,
            embeddings,
            Vec::new(),
            SamplerState::new(sweep_config.base_seed),
        )?);
        self.sessions.write().expect("session map poisoned").insert(id, session.clone());
        Ok(session)
    }

    pub fn get(&self, id: &str) -> Result<Arc<Session>, ServiceError> {
        if let Some(s) = self.sessions.read().expect("session map poisoned").get(id) {
            return Ok(s.clone());
        }
        let dir = self.root.join(id);
        if !valid_id(id) || !dir.join(CONFIG_FILE).is_file() {
            return Err(ServiceError::NotFound(id.to_string()));
        }
        let loaded = Arc::new(Session::load(id, dir)?);
        let mut map = self.sessions.write().expect("session map poisoned");
        Ok(map.entry(id.to_string()).or_insert(loaded).clone())
    }
}
