use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;
use serde_json::json;
use ticc_core::synth;
use ticc_core::ticc::{self, InitMethod};
use ticc_core::timeseries::load_csv;
use ticc_core::{
    macro_f1, network_f1, stack_windows, BlockToeplitzMatrix, Execution, Scores, TiccConfig, TiccModel, TimeSeries,
};

use crate::manifest::RunManifest;
use crate::{cli_error, EvaluateArgs, FitArgs, GenerateArgs, Init, ModelArgs, SweepArgs, SweepParam};

/// Default sparsity weight when `--lambda` is not given.
const LAMBDA_PER_SOLVE: f64 = 0.03;

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_text(path, &text)
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).map_err(|source| {
        ticc_core::TiccError::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).map_err(|source| ticc_core::TiccError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let value = serde_json::from_str(&text).map_err(ticc_core::TiccError::from)?;
    Ok(value)
}

fn prepare_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).map_err(|source| {
        ticc_core::TiccError::Io {
            path: dir.to_path_buf(),
            source,
        }
        .into()
    })
}

/// Parse "1:200,2:150" into 0-based (cluster, length) pairs.
fn parse_segments(text: &str) -> anyhow::Result<Vec<(usize, usize)>> {
    let bad = || {
        cli_error(
            "invalid_segments",
            format!("expected \"cluster:length,...\" with 1-based clusters, got {text:?}"),
        )
    };
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (c, len) = part.split_once(':').ok_or_else(bad)?;
        let c: usize = c.trim().parse().map_err(|_| bad())?;
        let len: usize = len.trim().parse().map_err(|_| bad())?;
        if c == 0 || len == 0 {
            return Err(bad());
        }
        out.push((c - 1, len));
    }
    if out.is_empty() {
        return Err(bad());
    }
    let k = out.iter().map(|s| s.0).max().unwrap_or(0) + 1;
    if let Some(missing) = (0..k).find(|c| out.iter().all(|s| s.0 != *c)) {
        return Err(cli_error(
            "invalid_segments",
            format!("cluster {} never appears", missing + 1),
        ));
    }
    Ok(out)
}

pub fn generate(a: GenerateArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let segments = match (&a.preset, &a.segments) {
        (Some(p), None) => synth::preset_segments(p, a.per_segment)?,
        (None, Some(s)) => parse_segments(s)?,
        _ => return Err(cli_error("config", "exactly one of --preset or --segments is required")),
    };
    if !(0.0..=1.0).contains(&a.p_edge) {
        return Err(cli_error(
            "config",
            format!("--p-edge must lie in [0, 1], got {}", a.p_edge),
        ));
    }
    let truth = synth::generate(&segments, a.sensors, a.window, a.p_edge, a.seed)?;
    let gen_secs = start.elapsed().as_secs_f64();

    prepare_dir(&a.output_dir)?;
    let write_start = Instant::now();
    let files = ["series.csv", "truth_labels.json", "truth_thetas.json"];
    truth.series.write_csv(a.output_dir.join(files[0]))?;
    write_json(&a.output_dir.join(files[1]), &truth.labels)?;
    write_json(&a.output_dir.join(files[2]), &truth.thetas)?;

    let mut manifest = RunManifest::new(
        "generate",
        a.seed,
        json!({
            "preset": a.preset,
            "segments": truth.segment_spec,
            "sensors": a.sensors,
            "window": a.window,
            "p_edge": a.p_edge,
        }),
    );
    manifest.outputs = files.iter().map(|f| a.output_dir.join(f)).collect();
    manifest.timings = json!({
        "generate_secs": gen_secs,
        "write_secs": write_start.elapsed().as_secs_f64(),
    });
    manifest.write(&a.output_dir)
}

fn load_series(path: &Path, header: bool) -> anyhow::Result<TimeSeries> {
    Ok(load_csv(path, header)?)
}

/// Turn the shared model flags into a library config for a series of `len` rows.
fn build_config(m: &ModelArgs, len: usize) -> TiccConfig {
    let lambda = m
        .lambda
        .unwrap_or(LAMBDA_PER_SOLVE * len as f64 / (2.0 * m.clusters.max(1) as f64));
    let mut cfg = TiccConfig::new(m.clusters, m.window, lambda, m.beta);
    cfg.seed = m.seed;
    cfg.admm.rho = m.rho;
    cfg.max_em_iters = m.max_em_iters;
    cfg.init = match m.init {
        Init::Contiguous => InitMethod::Contiguous,
        Init::Random => InitMethod::UniformRandom,
    };
    cfg.execution = if m.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    cfg
}

fn assignment_csv(model: &TiccModel) -> String {
    let mut out = String::from("t,label\n");
    for (t, l) in model.assignment.labels().iter().enumerate() {
        let _ = writeln!(out, "{t},{l}");
    }
    out
}

pub fn fit(a: FitArgs) -> anyhow::Result<()> {
    let load_start = Instant::now();
    let ts = load_series(&a.input, a.header)?;
    let load_secs = load_start.elapsed().as_secs_f64();
    let mut cfg = build_config(&a.model, ts.len());
    cfg.debug_trace = a.debug_trace;

    let (model, diag) = ticc::fit_with_diagnostics(&ts, &cfg)?;

    prepare_dir(&a.output_dir)?;
    let write_start = Instant::now();
    let mut outputs = vec![a.output_dir.join("model.json"), a.output_dir.join("assignment.csv")];
    write_text(&outputs[0], &model.to_json()?)?;
    write_text(&outputs[1], &assignment_csv(&model))?;
    if a.debug_trace {
        let mut trace =
            String::from("em_iter,cluster,iter,primal_res,dual_res,eps_pri,eps_dual,objective,stationarity\n");
        for r in &diag.admm_trace {
            let _ = writeln!(
                trace,
                "{},{},{},{},{},{},{},{},{}",
                r.em_iter,
                r.cluster,
                r.row.iter,
                r.row.primal_res,
                r.row.dual_res,
                r.row.eps_pri,
                r.row.eps_dual,
                r.row.objective,
                r.row.stationarity
            );
        }
        let path = a.output_dir.join("admm_trace.csv");
        write_text(&path, &trace)?;
        outputs.push(path);
    }

    let mut manifest = RunManifest::new("fit", cfg.seed, serde_json::to_value(&cfg)?);
    manifest.inputs.insert("series", a.input.clone());
    manifest.outputs = outputs;
    let t = &diag.timings;
    manifest.timings = json!({
        "load_secs": load_secs,
        "cost_build_secs": t.cost_build_secs,
        "dp_secs": t.dp_secs,
        "admm_secs_per_cluster": t.admm_secs_per_cluster,
        "fit_secs": t.total_secs,
        "write_secs": write_start.elapsed().as_secs_f64(),
        "em_iters": model.em_iters_run,
        "warm_up_iters": model.warm_up_iters_run,
        "converged": model.converged,
    });
    manifest.write(&a.output_dir)
}

/// Ground truth read from a generated directory, with the files it came from.
type Truth = (
    Vec<usize>,
    Option<Vec<BlockToeplitzMatrix>>,
    Vec<(&'static str, PathBuf)>,
);

fn load_truth(dir: &Path) -> anyhow::Result<Truth> {
    let labels_path = dir.join("truth_labels.json");
    let labels: Vec<usize> = read_json(&labels_path)?;
    let thetas_path = dir.join("truth_thetas.json");
    let mut paths = vec![("truth_labels", labels_path)];
    let thetas = if thetas_path.exists() {
        let t: Vec<BlockToeplitzMatrix> = read_json(&thetas_path)?;
        paths.push(("truth_thetas", thetas_path));
        Some(t)
    } else {
        None
    };
    Ok((labels, thetas, paths))
}

fn truth_clusters(labels: &[usize], thetas: Option<&[BlockToeplitzMatrix]>) -> usize {
    let from_labels = labels.iter().max().map_or(0, |m| m + 1);
    thetas.map_or(from_labels, |t| t.len().max(from_labels))
}

pub fn evaluate(a: EvaluateArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let model_text = fs::read_to_string(&a.model).map_err(|source| ticc_core::TiccError::Io {
        path: a.model.clone(),
        source,
    })?;
    let model = TiccModel::from_json(&model_text)?;
    let (labels, thetas, truth_paths) = load_truth(&a.truth)?;
    let k = model.clusters.len();
    let truth_k = truth_clusters(&labels, thetas.as_deref());
    if k != truth_k {
        return Err(cli_error(
            "cluster_count_mismatch",
            format!("model has {k} clusters but the truth has {truth_k}"),
        ));
    }
    let matching = macro_f1(model.assignment.labels(), &labels, k)?;
    let net = thetas
        .as_ref()
        .map(|t| network_f1(&model.thetas(), t, &matching.permutation))
        .transpose()?;
    let scores = Scores::new(matching, net);

    prepare_dir(&a.output_dir)?;
    let out = a.output_dir.join("scores.json");
    write_json(&out, &scores)?;

    let mut manifest = RunManifest::new("evaluate", model.config.seed, json!({ "clusters": k }));
    manifest.inputs.insert("model", a.model.clone());
    for (name, p) in truth_paths {
        manifest.inputs.insert(name, p);
    }
    manifest.outputs = vec![out];
    manifest.timings = json!({ "evaluate_secs": start.elapsed().as_secs_f64() });
    manifest.write(&a.output_dir)
}

/// Parse "2..6" (inclusive) or "0,10,40".
fn parse_values(text: &str) -> anyhow::Result<Vec<f64>> {
    let bad = |why: &str| cli_error("invalid_range", format!("{why}: {text:?}"));
    let text = text.trim();
    let values: Vec<f64> = if let Some((lo, hi)) = text.split_once("..") {
        let lo: i64 = lo.trim().parse().map_err(|_| bad("range bounds must be integers"))?;
        let hi: i64 = hi.trim().parse().map_err(|_| bad("range bounds must be integers"))?;
        (lo..=hi).map(|v| v as f64).collect()
    } else {
        text.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| bad("values must be numbers")))
            .collect::<anyhow::Result<_>>()?
    };
    if values.is_empty() {
        return Err(bad("empty range"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(bad("values must be finite"));
    }
    Ok(values)
}

fn as_count(v: f64, what: &str) -> anyhow::Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(cli_error(
            "invalid_range",
            format!("{what} values must be positive integers, got {v}"),
        ))
    }
}

pub fn sweep(a: SweepArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let values = parse_values(&a.values)?;
    let ts = load_series(&a.input, a.header)?;
    let truth = a.truth.as_deref().map(load_truth).transpose()?;
    if let Some((labels, _, _)) = &truth {
        if labels.len() != ts.len() {
            return Err(cli_error(
                "dimension",
                format!("truth has {} labels for {} rows", labels.len(), ts.len()),
            ));
        }
    }
    let base = build_config(&a.model, ts.len());
    let configs = values
        .iter()
        .map(|&v| {
            let mut cfg = base.clone();
            match a.over {
                SweepParam::K => cfg.clusters = as_count(v, "K")?,
                SweepParam::W => cfg.window = as_count(v, "w")?,
                SweepParam::Beta => cfg.beta = v,
            }
            Ok(cfg)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let mut csv =
        String::from("param,value,clusters,window,lambda,beta,bic,macro_f1,switches,runtime_secs,em_iters,converged\n");
    let mut runtimes = Vec::with_capacity(configs.len());
    for (v, cfg) in values.iter().zip(&configs) {
        let fit_start = Instant::now();
        let model = ticc::fit(&ts, cfg).with_context(|| format!("fit with {:?}={v}", a.over))?;
        let secs = fit_start.elapsed().as_secs_f64();
        runtimes.push(secs);
        let subseq = stack_windows(&ts, cfg.window)?;
        let bic = ticc::bic(&model, &subseq)?;
        let f1 = match &truth {
            Some((labels, thetas, _)) => {
                let k = truth_clusters(labels, thetas.as_deref()).max(cfg.clusters);
                format!("{}", macro_f1(model.assignment.labels(), labels, k)?.macro_f1)
            }
            None => String::new(),
        };
        let lambda = match cfg.lambda {
            ticc_core::Lambda::Scalar(l) => l.to_string(),
            ticc_core::Lambda::Matrix(_) => "matrix".into(),
        };
        let param = serde_json::to_value(a.over)?;
        let _ = writeln!(
            csv,
            "{},{v},{},{},{lambda},{},{bic},{f1},{},{secs},{},{}",
            param.as_str().unwrap_or_default(),
            cfg.clusters,
            cfg.window,
            cfg.beta,
            model.assignment.num_switches(),
            model.em_iters_run,
            model.converged
        );
    }

    prepare_dir(&a.output_dir)?;
    let out = a.output_dir.join("sweep.csv");
    write_text(&out, &csv)?;
    let mut manifest = RunManifest::new(
        "sweep",
        base.seed,
        json!({ "over": a.over, "values": values, "base": base }),
    );
    manifest.inputs.insert("series", a.input.clone());
    if let Some(dir) = &a.truth {
        manifest.inputs.insert("truth_dir", dir.clone());
    }
    manifest.outputs = vec![out];
    manifest.timings = json!({
        "fit_secs": runtimes,
        "total_secs": start.elapsed().as_secs_f64(),
    });
    manifest.write(&a.output_dir)
}
