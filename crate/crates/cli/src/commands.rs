use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use ndarray::Array3;
use segprune::attention::{aggregate_scores_along, softmax_attention, AggregationAxis};
use segprune::cost::{bench_prefill, estimate, ModelShape, BENCH_SHAPE};
use segprune::pruning::{
    apply_selection, coverage_metrics, prune, Budget, CoverageMetrics, PruneInputs, PruneResult,
    DEFAULT_CONTEXTUAL_RATIO, DEFAULT_SEGMENTS,
};
use segprune::store::{load_prune_result, load_tensor, save_prune_result, save_tensor};
use segprune::synth::{gen_attention, gen_embeddings, hot_clusters, keys_from_embeddings};
use segprune::{
    aggregate_scores, AttentionTensor, Dtype, EmbeddingSequence, PruneConfig, QkTensor, Strategy,
    SynthSpec, Tensor, TokenScores,
};
use serde::de::DeserializeOwned;

use crate::args::{
    AggregateArgs, BenchArgs, Command, EstimateArgs, MetricsArgs, PruneArgs, ReplayArgs, ShapeArgs,
    SynthArgs,
};
use crate::config::ConfigFile;
use crate::error::{usage, CliResult};
use crate::manifest::{RunManifest, MANIFEST_FILE};

pub const ESTIMATE_GRID: [u64; 4] = [750, 375, 188, 75];
pub const COST_HEADER: &str =
    "n_tokens,prefill_flops,attention_share,decode_flops_per_token,bench_mean_ms,bench_std_ms";
pub const METRICS_HEADER: &str = "strategy,n_tokens_in,k_requested,k_kept,eval_segments,\
                                  attention_mass_captured,segment_occupancy,max_temporal_gap";

pub fn run(command: Command, config: &ConfigFile) -> CliResult<()> {
    match command {
        Command::Aggregate(a) => aggregate(config.merge("aggregate", &a, &[&["qk", "attn"]])?),
        Command::Prune(a) => {
            prune_cmd(config.merge("prune", &a, &[&["k", "rate"], &["keys", "qk"]])?)
        }
        Command::Synth(a) => synth(config.merge("synth", &a, &[])?),
        Command::Metrics(a) => metrics(config.merge("metrics", &a, &[])?),
        Command::Estimate(a) => estimate_cmd(config.merge("estimate", &a, &[])?),
        Command::Bench(a) => bench(config.merge("bench", &a, &[])?),
        Command::Replay(a) => replay(a),
    }
}

fn required<T>(value: Option<T>, flag: &str) -> CliResult<T> {
    value.ok_or_else(|| usage(format!("{flag} is required")))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn csv(header: &str, rows: &[String]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(row);
        out.push('\n');
    }
    out
}

fn load_scores(path: &Path) -> CliResult<TokenScores> {
    Ok(TokenScores::try_from(load_tensor(path, 2)?)?)
}

fn parse_axis(name: Option<&str>) -> CliResult<AggregationAxis> {
    match name.unwrap_or("incoming") {
        "incoming" => Ok(AggregationAxis::Incoming),
        "outgoing" => Ok(AggregationAxis::Outgoing),
        other => Err(usage(format!(
            "unknown axis {other:?}; use incoming or outgoing"
        ))),
    }
}

fn aggregate(args: AggregateArgs) -> CliResult<()> {
    let out = required(args.out.clone(), "--out")?;
    let axis = parse_axis(args.axis.as_deref())?;
    let (input, attn) = match (&args.qk, &args.attn) {
        (Some(path), None) => {
            let qk = QkTensor::from_stacked(load_tensor(path, 4)?)?;
            (path, softmax_attention(&qk))
        }
        (None, Some(path)) => (path, AttentionTensor::try_from(load_tensor(path, 3)?)?),
        _ => return Err(usage("exactly one of --qk or --attn is required")),
    };
    let scores = aggregate_scores_along(&attn, axis);

    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let mut manifest = RunManifest::new("aggregate", &args).input(Some(input));
    save_tensor(&scores.to_tensor(), &out)?;
    manifest.output(&out);

    let csv_path = out.with_extension("csv");
    let rows: Vec<String> = scores
        .as_slice()
        .iter()
        .zip(scores.max_normalized())
        .enumerate()
        .map(|(i, (s, m))| format!("{i},{s:?},{m:?}"))
        .collect();
    write_text(&csv_path, &csv("index,score,max_normalized_score", &rows))?;
    manifest.output(&csv_path);

    finish(manifest, &out.with_extension(MANIFEST_FILE))
}

fn finish(mut manifest: RunManifest, path: &Path) -> CliResult<()> {
    manifest.output(path);
    manifest.save(path)?;
    for p in &manifest.outputs {
        println!("{}", p.display());
    }
    Ok(())
}

fn prune_config(args: &PruneArgs, n: usize) -> CliResult<PruneConfig> {
    let strategy: Strategy = args
        .strategy
        .as_deref()
        .unwrap_or("segmentwise_top_k")
        .parse()?;
    let budget = match (args.k, args.rate) {
        (Some(k), None) => Budget::Count(k),
        (None, Some(rate)) => Budget::Rate(rate),
        (None, None) if strategy == Strategy::Identity => Budget::Count(n),
        (None, None) => return Err(usage("one of --k or --rate is required")),
        (Some(_), Some(_)) => return Err(usage("--k and --rate are mutually exclusive")),
    };
    let mut cfg = PruneConfig::new(strategy, budget)
        .with_segments(args.segments.unwrap_or(DEFAULT_SEGMENTS))
        .with_contextual_ratio(args.contextual_ratio.unwrap_or(DEFAULT_CONTEXTUAL_RATIO))
        .with_seed(args.seed.unwrap_or(0));
    if let Some(ordering) = &args.ordering {
        cfg = cfg.with_ordering(ordering.parse()?);
    }
    if let Some(remainder) = &args.remainder {
        cfg = cfg.with_remainder(remainder.parse()?);
    }
    Ok(cfg)
}

fn metrics_row(result: &PruneResult, eval_segments: usize, m: &CoverageMetrics) -> String {
    format!(
        "{},{},{},{},{},{:?},{:?},{}",
        result.strategy,
        result.n_tokens_in,
        result.k_requested,
        result.k_kept(),
        eval_segments,
        m.attention_mass_captured,
        m.segment_occupancy,
        m.max_temporal_gap
    )
}

fn prune_cmd(args: PruneArgs) -> CliResult<()> {
    let out_dir = required(args.out_dir.clone(), "--out-dir")?;
    let scores_path = required(args.scores.clone(), "--scores")?;
    if args.keys.is_some() && args.qk.is_some() {
        return Err(usage("--keys and --qk are mutually exclusive"));
    }
    let scores = load_scores(&scores_path)?;
    let n = scores.n_tokens();
    let cfg = prune_config(&args, n)?;

    let embeddings = match &args.embeddings {
        Some(path) => {
            let tensor = load_tensor(path, 2)?;
            let dtype = tensor.dtype();
            Some((EmbeddingSequence::try_from(tensor)?, dtype))
        }
        None => None,
    };
    let keys: Option<Array3<f64>> = match (&args.keys, &args.qk) {
        (Some(path), _) => Some(load_tensor(path, 3)?.into_array3()?),
        (None, Some(path)) => Some(
            QkTensor::from_stacked(load_tensor(path, 4)?)?
                .keys()
                .clone(),
        ),
        (None, None) => None,
    };

    let inputs = PruneInputs {
        keys: keys.as_ref(),
        embeddings: embeddings.as_ref().map(|(e, _)| e),
    };
    let result = prune(&scores, &cfg, inputs)?;
    let eval_segments = args.eval_segments.unwrap_or(cfg.segments.min(n));
    let metrics = coverage_metrics(&result, &scores, eval_segments)?;

    create_dir(&out_dir)?;
    let mut manifest = RunManifest::new("prune", &args)
        .input(Some(&scores_path))
        .input(args.embeddings.as_deref())
        .input(args.keys.as_deref())
        .input(args.qk.as_deref())
        .config(&cfg)
        .seed(cfg.seed);

    if let Some((emb, dtype)) = &embeddings {
        let pruned = apply_selection(emb, &result)?;
        let path = out_dir.join("pruned.npy");
        save_tensor(&Tensor::new(pruned.into_data().into_dyn(), *dtype)?, &path)?;
        manifest.output(&path);
    }
    let result_path = out_dir.join("result.json");
    save_prune_result(&result, &result_path)?;
    manifest.output(&result_path);

    let metrics_path = out_dir.join("metrics.csv");
    let row = metrics_row(&result, eval_segments, &metrics);
    write_text(&metrics_path, &csv(METRICS_HEADER, &[row]))?;
    manifest.output(&metrics_path);

    finish(manifest, &out_dir.join(MANIFEST_FILE))
}

fn synth_spec(args: &SynthArgs) -> SynthSpec {
    let d = SynthSpec::default();
    SynthSpec {
        n_tokens: args.n_tokens.unwrap_or(d.n_tokens),
        n_heads: args.n_heads.unwrap_or(d.n_heads),
        n_hot: args.n_hot.unwrap_or(d.n_hot),
        cluster_width: args.cluster_width.unwrap_or(d.cluster_width),
        concentration: args.concentration.unwrap_or(d.concentration),
        noise_scale: args.noise_scale.unwrap_or(d.noise_scale),
        halo_strength: args.halo_strength.unwrap_or(d.halo_strength),
        halo_width: args.halo_width.unwrap_or(d.halo_width),
        seed: args.seed.unwrap_or(d.seed),
        dim: args.dim.unwrap_or(d.dim),
    }
}

fn synth(args: SynthArgs) -> CliResult<()> {
    let out_dir = required(args.out_dir.clone(), "--out-dir")?;
    let spec = synth_spec(&args);
    let clusters = hot_clusters(&spec)?;
    if !spec.dim.is_multiple_of(spec.n_heads) {
        return Err(usage(format!(
            "dim {} is not divisible by n_heads {}",
            spec.dim, spec.n_heads
        )));
    }
    let attn = gen_attention(&spec)?;
    let emb = gen_embeddings(&spec)?;
    let keys = keys_from_embeddings(&emb, spec.n_heads)?;
    let scores = aggregate_scores(&attn);

    create_dir(&out_dir)?;
    let mut manifest = RunManifest::new("synth", &args)
        .config(&spec)
        .seed(spec.seed);
    let outputs = [
        (
            "attention.npy",
            Tensor::new(attn.into_weights().into_dyn(), Dtype::F64)?,
        ),
        ("scores.npy", scores.to_tensor()),
        ("embeddings.npy", Tensor::from(&emb)),
        ("keys.npy", Tensor::new(keys.into_dyn(), Dtype::F32)?),
    ];
    for (name, tensor) in &outputs {
        let path = out_dir.join(name);
        save_tensor(tensor, &path)?;
        manifest.output(&path);
    }

    let spec_path = out_dir.join("synth_spec.json");
    let mut spec_json = serde_json::to_string_pretty(&spec).context("serializing spec")?;
    spec_json.push('\n');
    write_text(&spec_path, &spec_json)?;
    manifest.output(&spec_path);

    let clusters_path = out_dir.join("clusters.csv");
    let rows: Vec<String> = clusters
        .iter()
        .enumerate()
        .map(|(i, r)| format!("{i},{},{}", r.start, r.end))
        .collect();
    write_text(&clusters_path, &csv("cluster,start,end", &rows))?;
    manifest.output(&clusters_path);

    finish(manifest, &out_dir.join(MANIFEST_FILE))
}

fn metrics(args: MetricsArgs) -> CliResult<()> {
    let out_dir = required(args.out_dir.clone(), "--out-dir")?;
    let result_path = required(args.result.clone(), "--result")?;
    let scores_path = required(args.scores.clone(), "--scores")?;
    let result = load_prune_result(&result_path)?;
    let scores = load_scores(&scores_path)?;
    let segments = args
        .segments
        .unwrap_or(DEFAULT_SEGMENTS.min(scores.n_tokens()));
    let m = coverage_metrics(&result, &scores, segments)?;

    create_dir(&out_dir)?;
    let mut manifest = RunManifest::new("metrics", &args)
        .input(Some(&result_path))
        .input(Some(&scores_path));
    let text = csv(METRICS_HEADER, &[metrics_row(&result, segments, &m)]);
    let path = out_dir.join("metrics.csv");
    write_text(&path, &text)?;
    manifest.output(&path);
    print!("{text}");
    manifest.output(&out_dir.join(MANIFEST_FILE));
    manifest.save(&out_dir.join(MANIFEST_FILE))
}

fn model_shape(args: &ShapeArgs, defaults: ModelShape) -> CliResult<ModelShape> {
    Ok(ModelShape::new(
        args.n_layers.unwrap_or(defaults.n_layers),
        args.model_dim.unwrap_or(defaults.model_dim),
        args.n_heads.unwrap_or(defaults.n_heads),
        args.ffn_dim.unwrap_or(defaults.ffn_dim),
    )?)
}

fn cost_row(n: u64, shape: &ModelShape, timing: Option<(f64, f64)>) -> CliResult<String> {
    let e = estimate(n, shape)?;
    let mut row = format!(
        "{},{},{:?},{},",
        e.n_tokens, e.prefill_flops, e.attention_share, e.decode_flops_per_token
    );
    if let Some((mean, std)) = timing {
        write!(row, "{mean:?},{std:?}").expect("writing to a string");
    } else {
        row.push(',');
    }
    Ok(row)
}

fn write_cost_report(
    mut manifest: RunManifest,
    out_dir: &Path,
    file: &str,
    rows: &[String],
) -> CliResult<()> {
    create_dir(out_dir)?;
    let text = csv(COST_HEADER, rows);
    let path = out_dir.join(file);
    write_text(&path, &text)?;
    manifest.output(&path);
    print!("{text}");
    let manifest_path = out_dir.join(MANIFEST_FILE);
    manifest.output(&manifest_path);
    manifest.save(&manifest_path)
}

fn estimate_cmd(args: EstimateArgs) -> CliResult<()> {
    let out_dir = required(args.out_dir.clone(), "--out-dir")?;
    let shape = model_shape(&args.shape, ModelShape::default())?;
    let grid = args.n_tokens.clone().unwrap_or(ESTIMATE_GRID.to_vec());
    let rows = grid
        .iter()
        .map(|&n| cost_row(n, &shape, None))
        .collect::<CliResult<Vec<_>>>()?;
    let manifest = RunManifest::new("estimate", &args).config(&shape);
    write_cost_report(manifest, &out_dir, "estimate.csv", &rows)
}

fn bench(args: BenchArgs) -> CliResult<()> {
    let reps = args.reps.unwrap_or(10);
    if reps < 3 {
        return Err(usage(format!("--reps must be at least 3, got {reps}")));
    }
    let out_dir = required(args.out_dir.clone(), "--out-dir")?;
    let shape = model_shape(&args.shape, BENCH_SHAPE)?;
    let seed = args.seed.unwrap_or(0);
    let grid = args.n_tokens.clone().unwrap_or(ESTIMATE_GRID.to_vec());
    let mut rows = Vec::with_capacity(grid.len());
    let mut stats = Vec::with_capacity(grid.len());
    for &n in &grid {
        // analytic check first so that bad lengths fail before any timing
        estimate(n, &shape)?;
        let s = bench_prefill(n as usize, &shape, reps, seed)?;
        rows.push(cost_row(n, &shape, Some((s.mean_ms, s.std_ms)))?);
        stats.push(s);
    }
    let mut manifest = RunManifest::new("bench", &args).config(&shape).seed(seed);
    create_dir(&out_dir)?;
    let stats_path = out_dir.join("bench_stats.json");
    let mut json = serde_json::to_string_pretty(&stats).context("serializing timings")?;
    json.push('\n');
    write_text(&stats_path, &json)?;
    manifest.output(&stats_path);
    write_cost_report(manifest, &out_dir, "bench.csv", &rows)
}

fn recorded<T: DeserializeOwned>(manifest: &RunManifest) -> CliResult<T> {
    serde_json::from_value(manifest.args.clone())
        .with_context(|| format!("manifest arguments for {}", manifest.command))
        .map_err(Into::into)
}

fn replay(args: ReplayArgs) -> CliResult<()> {
    let manifest = RunManifest::load(&args.manifest)?;
    let redirect = args.out_dir.as_deref();
    let out_dir = |recorded: Option<PathBuf>| redirect.map(Path::to_path_buf).or(recorded);
    match manifest.command.as_str() {
        "aggregate" => {
            let mut a: AggregateArgs = recorded(&manifest)?;
            if let (Some(dir), Some(out)) = (redirect, &a.out) {
                let name = out
                    .file_name()
                    .context("recorded output has no file name")?;
                a.out = Some(dir.join(name));
            }
            aggregate(a)
        }
        "prune" => {
            let mut a: PruneArgs = recorded(&manifest)?;
            a.out_dir = out_dir(a.out_dir);
            prune_cmd(a)
        }
        "synth" => {
            let mut a: SynthArgs = recorded(&manifest)?;
            a.out_dir = out_dir(a.out_dir);
            synth(a)
        }
        "metrics" => {
            let mut a: MetricsArgs = recorded(&manifest)?;
            a.out_dir = out_dir(a.out_dir);
            metrics(a)
        }
        "estimate" => {
            let mut a: EstimateArgs = recorded(&manifest)?;
            a.out_dir = out_dir(a.out_dir);
            estimate_cmd(a)
        }
        "bench" => {
            let mut a: BenchArgs = recorded(&manifest)?;
            a.out_dir = out_dir(a.out_dir);
            bench(a)
        }
        other => Err(anyhow::anyhow!("manifest records unknown command {other:?}").into()),
    }
}
