use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use pbic_core::data::load_csv;
use pbic_core::preference::{
    agreement_check, laplace_fit, simulate_preferences, write_jsonl, GpHyperparams, StrengthPolicy,
};
use pbic_core::render::{render_curve, render_embedding, CurveDecor, CurveMarker, MarkerKind, PlotSpec};
use pbic_core::search::{
    default_grid, description_length_report, embed_point, refine, sweep_with_embeddings, validate_grid,
    PerplexitySweep, SearchError, SweepConfig,
};
use pbic_core::tsne::{compute_p_joint, run_tsne, TsneError};
use pbic_core::Dataset;
use serde_json::json;

use crate::artifacts::{create_dir, dataset_summary, write_json, write_text, Invocation};
use crate::{CliError, EmbedArgs, InputArgs, RunArgs, ServeArgs, SimulateArgs, SweepArgs, TuneArgs};

fn load(input: &InputArgs) -> Result<Dataset, CliError> {
    load_csv(&input.data, &input.ingest())
        .with_context(|| format!("cannot load {}", input.data.display()))
        .map_err(CliError::Runtime)
}

fn tsne_error(e: TsneError) -> CliError {
    match e {
        TsneError::PerplexityOutOfRange { .. } | TsneError::InvalidConfig(_) => CliError::Usage(e.to_string()),
        e => CliError::Runtime(e.into()),
    }
}

fn search_error(e: SearchError) -> CliError {
    match e {
        SearchError::Tsne(e) => tsne_error(e),
        SearchError::PerplexityOutOfRange { .. }
        | SearchError::EmptyGrid
        | SearchError::UnsortedGrid(_)
        | SearchError::NoRestarts => CliError::Usage(e.to_string()),
        e => CliError::Runtime(e.into()),
    }
}

fn sweep_config(run: &RunArgs) -> Result<SweepConfig, CliError> {
    let cfg = SweepConfig { optimizer: run.optimizer(), restarts: run.restarts, base_seed: run.seed };
    cfg.optimizer.validate().map_err(tsne_error)?;
    if cfg.restarts == 0 {
        return Err(CliError::Usage("--restarts must be at least 1".into()));
    }
    Ok(cfg)
}

fn plot_spec(invocation: &Invocation, title: String) -> PlotSpec {
    PlotSpec { title, description: Some(invocation.describe()), ..Default::default() }
}

pub fn embed(args: &EmbedArgs, invocation: &Invocation, out: &mut dyn Write) -> Result<(), CliError> {
    let optimizer = args.run.optimizer();
    optimizer.validate().map_err(tsne_error)?;
    let data = load(&args.input)?;
    let (p, conditional) = compute_p_joint(&data, args.perplexity).map_err(tsne_error)?;
    let embedding = run_tsne(&p, &optimizer, args.run.seed).map_err(tsne_error)?;

    create_dir(&args.out)?;
    let flagged: Vec<usize> = conditional.flagged().map(|(i, _)| i).collect();
    let doc = json!({
        "invocation": invocation,
        "dataset": dataset_summary(&data, &args.input.data),
        "optimizer": optimizer,
        "embedding": embedding,
        "bandwidth_flagged_rows": flagged,
    });
    write_json(&args.out.join("embedding.json"), &doc)?;
    let spec = plot_spec(invocation, format!("perplexity {}", args.perplexity));
    write_text(&args.out.join("embedding.svg"), &render_embedding(&embedding, data.labels(), &spec))?;
    writeln!(out, "{}", embedding.final_kl)?;
    Ok(())
}

fn resolve_grid(grid: &Option<Vec<f64>>, data: &Dataset) -> Result<Vec<f64>, CliError> {
    match grid {
        Some(g) => {
            validate_grid(g, data.n()).map_err(search_error)?;
            Ok(g.clone())
        }
        None => default_grid(data.n()).map_err(|e| CliError::Runtime(e.into())),
    }
}

fn nan_if_missing(v: &[Option<f64>]) -> Vec<f64> {
    v.iter().map(|x| x.unwrap_or(f64::NAN)).collect()
}

/// KL and score curves over the sweep grid.
fn write_curves(sweep: &PerplexitySweep, dir: &Path, invocation: &Invocation) -> Result<(), CliError> {
    let mut markers = Vec::new();
    if let Some(k) = sweep.selected_index {
        markers.push(CurveMarker { index: k, kind: MarkerKind::Dot, label: "selected".into() });
    }
    let kl = CurveDecor { y_label: "KL divergence".into(), ..Default::default() };
    let score = CurveDecor { y_label: "score".into(), markers, ..Default::default() };
    for (file, ys, decor, title) in [
        ("kl.svg", &sweep.kl, kl, "final KL"),
        ("score.svg", &sweep.score, score, "penalized KL score"),
    ] {
        let svg = render_curve(&sweep.grid, &nan_if_missing(ys), &decor, &plot_spec(invocation, title.into()))
            .map_err(|e| CliError::Runtime(e.into()))?;
        write_text(&dir.join(file), &svg)?;
    }
    Ok(())
}

fn selection_summary(sweep: &PerplexitySweep) -> Result<serde_json::Value, CliError> {
    let k = sweep.selected_index.ok_or_else(|| anyhow!("every grid point failed: {:?}", sweep.failures))?;
    let kl = sweep.kl[k].expect("selected entries have a KL");
    let mdl = description_length_report(kl, sweep.n, sweep.grid[k]).map_err(|e| CliError::Runtime(e.into()))?;
    Ok(json!({
        "index": k,
        "perplexity": sweep.grid[k],
        "kl": kl,
        "score": sweep.score[k],
        "seed": sweep.seed[k],
        "description_length": mdl,
    }))
}

pub fn tune(args: &TuneArgs, invocation: &Invocation, out: &mut dyn Write) -> Result<(), CliError> {
    let config = sweep_config(&args.run)?;
    let data = load(&args.input)?;
    let grid = resolve_grid(&args.grid, &data)?;
    let (coarse, embeddings) = sweep_with_embeddings(&data, &grid, &config).map_err(search_error)?;
    let sweep = if args.refine > 0 { refine(&data, &coarse, args.refine).map_err(search_error)? } else { coarse };
    let selection = selection_summary(&sweep)?;
    let k = sweep.selected_index.expect("checked by selection_summary");
    let perplexity = sweep.grid[k];
    let embedding = match grid.iter().position(|&g| g == perplexity) {
        Some(i) => embeddings[i].clone().expect("selected entries have an embedding"),
        None => embed_point(&data, perplexity, &config, sweep.seed[k]).map_err(search_error)?,
    };

    create_dir(&args.out)?;
    let doc = json!({
        "invocation": invocation,
        "dataset": dataset_summary(&data, &args.input.data),
        "refine_rounds": args.refine,
        "sweep": sweep,
        "selected": selection,
    });
    write_json(&args.out.join("sweep.json"), &doc)?;
    write_curves(&sweep, &args.out, invocation)?;
    let spec = plot_spec(invocation, format!("selected perplexity {perplexity}"));
    write_text(&args.out.join("selected.svg"), &render_embedding(&embedding, data.labels(), &spec))?;
    writeln!(out, "{perplexity}")?;
    Ok(())
}

pub fn sweep(args: &SweepArgs, invocation: &Invocation, out: &mut dyn Write) -> Result<(), CliError> {
    let config = sweep_config(&args.run)?;
    let data = load(&args.input)?;
    let grid = resolve_grid(&args.grid, &data)?;
    let (sweep, embeddings) = sweep_with_embeddings(&data, &grid, &config).map_err(search_error)?;

    let maps = args.out.join("maps");
    create_dir(&maps)?;
    let doc = json!({
        "invocation": invocation,
        "dataset": dataset_summary(&data, &args.input.data),
        "sweep": sweep,
        "selected": selection_summary(&sweep).ok(),
    });
    write_json(&args.out.join("sweep.json"), &doc)?;
    write_curves(&sweep, &args.out, invocation)?;
    for (i, e) in embeddings.iter().enumerate() {
        if let Some(e) = e {
            let spec = plot_spec(invocation, format!("perplexity {}", grid[i]));
            write_text(&maps.join(format!("{i}.svg")), &render_embedding(e, data.labels(), &spec))?;
        }
    }
    for (i, g) in grid.iter().enumerate() {
        let kl = sweep.kl[i].map_or("failed".to_string(), |v| v.to_string());
        let score = sweep.score[i].map_or("failed".to_string(), |v| v.to_string());
        writeln!(out, "{g}\t{kl}\t{score}")?;
    }
    Ok(())
}

/// Grid and selected index from a `sweep.json` written by `tune` or `sweep`.
fn grid_from_sweep_file(path: &Path) -> Result<(Vec<f64>, usize), CliError> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let doc: serde_json::Value = serde_json::from_str(&text).context("sweep file is not JSON")?;
    let sweep: PerplexitySweep =
        serde_json::from_value(doc["sweep"].clone()).context("sweep file has no valid \"sweep\" entry")?;
    let k = sweep.selected_index.ok_or_else(|| anyhow!("sweep file has no selection"))?;
    Ok((sweep.grid, k))
}

pub fn simulate(args: &SimulateArgs, invocation: &Invocation, out: &mut dyn Write) -> Result<(), CliError> {
    let (grid, pbic_index) = match &args.sweep {
        Some(path) => grid_from_sweep_file(path)?,
        None => {
            let grid = args.grid.clone().unwrap_or_else(|| (0..9).map(|i| 8.0 * 2f64.powi(i)).collect());
            let k = args.pbic_index.unwrap_or(grid.len() / 2);
            (grid, k)
        }
    };
    let m = grid.len();
    if m < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Usage("the grid needs at least two increasing perplexities".into()));
    }
    let peak = args.peak.unwrap_or(pbic_index);
    if pbic_index >= m || peak >= m {
        return Err(CliError::Usage(format!("grid indices must be below {m}")));
    }
    if !(args.width > 0.0 && args.noise > 0.0 && args.count > 0) {
        return Err(CliError::Usage("--width, --noise and --count must be positive".into()));
    }
    let utility: Vec<f64> = (0..m)
        .map(|i| (-(i as f64 - peak as f64).powi(2) / (2.0 * args.width * args.width)).exp())
        .collect();
    let policy = args.strength.map_or_else(StrengthPolicy::default, StrengthPolicy::Fixed);
    let prefs = simulate_preferences(&utility, args.count, args.noise, &policy, args.seed)
        .map_err(|e| CliError::Runtime(e.into()))?;
    let hyper = GpHyperparams::default();
    let posterior = laplace_fit(&prefs, &grid, &hyper).map_err(|e| CliError::Runtime(e.into()))?;
    let verdict = agreement_check(&posterior, pbic_index).map_err(|e| CliError::Runtime(e.into()))?;

    create_dir(&args.out)?;
    let mut jsonl = Vec::new();
    write_jsonl(&prefs, &mut jsonl).map_err(|e| CliError::Runtime(e.into()))?;
    write_text(&args.out.join("preferences.jsonl"), &String::from_utf8(jsonl).expect("JSON is UTF-8"))?;
    let doc = json!({
        "invocation": invocation,
        "grid": grid,
        "true_utility": utility,
        "peak_index": peak,
        "pbic_index": pbic_index,
        "noise": args.noise,
        "count": args.count,
        "gp": hyper,
        "posterior": posterior,
        "verdict": verdict,
    });
    write_json(&args.out.join("simulation.json"), &doc)?;

    let sd = posterior.std_dev();
    let lower: Vec<f64> = posterior.mean.iter().zip(&sd).map(|(m, s)| m - s).collect();
    let upper: Vec<f64> = posterior.mean.iter().zip(&sd).map(|(m, s)| m + s).collect();
    let decor = CurveDecor {
        band: Some((&lower, &upper)),
        markers: vec![
            CurveMarker { index: pbic_index, kind: MarkerKind::Dot, label: "pBIC".into() },
            CurveMarker { index: verdict.human_argmax_index, kind: MarkerKind::Cross, label: "inferred peak".into() },
        ],
        hlines: vec![verdict.lower_bound],
        y_label: "utility".into(),
    };
    let svg = render_curve(&grid, &posterior.mean, &decor, &plot_spec(invocation, "inferred utility".into()))
        .map_err(|e| CliError::Runtime(e.into()))?;
    write_text(&args.out.join("utility.svg"), &svg)?;

    writeln!(out, "inferred_peak_index {}", verdict.human_argmax_index)?;
    writeln!(out, "pbic_index {pbic_index}")?;
    writeln!(out, "significant_difference {}", verdict.significant_difference)?;
    Ok(())
}

pub fn serve(args: &ServeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.listen)
            .await
            .map_err(|e| anyhow!("cannot listen on {}: {e}", args.listen))?;
        let store = pbic_service::Store::open(&args.data_dir)
            .with_context(|| format!("cannot open data directory {}", args.data_dir.display()))?;
        writeln!(out, "listening on {}", listener.local_addr()?)?;
        out.flush()?;
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        pbic_service::serve(listener, Arc::new(store), shutdown).await?;
        Ok::<(), CliError>(())
    })
}
