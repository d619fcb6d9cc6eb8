//! hivf command line: index build, ground truth, query serving, metric
//! evaluation, parameter sweeps, and the distributed-dispatch simulator.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use hivf::clustering::{leaf_entries_for_fraction, BalancedClusteringConfig};
use hivf::distributed::{
    build_partition_plan, random_partition_baseline, save_plan, simulate_dispatch, split_three,
    DispatchParams,
};
use hivf::eval::{
    brute_force_topk, read_results_file, recall_at_r, rows_to_csv, rows_to_plot_data, run_sweep,
    write_results_file, GroundTruth, SweepSpec, DEFAULT_TIE_TOL,
};
use hivf::index::{build_index, rng_rule_from_name, IndexConfig};
use hivf::navigator::{NavigatorConfig, NavigatorStrategy};
use hivf::searcher::{SearchParams, Searcher};
use hivf::vectors::io::{read_vector_file, write_vector_file, VecFormat};
use hivf::vectors::{Dataset, Metric};

#[derive(Parser)]
#[command(
    name = "hivf",
    version,
    about = "Memory-disk hybrid inverted-file index for approximate nearest neighbor search"
)]
struct Cli {
    /// Optional key=value config file; command-line flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build an index directory from a dataset file.
    Build {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        index_dir: PathBuf,
        /// fvecs or bvecs; inferred from the extension when omitted.
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        metric: Option<String>,
        #[arg(long)]
        posting_limit_bytes: Option<usize>,
        /// Target fraction of vectors used as posting-list representatives;
        /// overrides the posting-limit leaf rule.
        #[arg(long)]
        centroid_fraction: Option<f64>,
        #[arg(long)]
        branch_k: Option<usize>,
        #[arg(long)]
        lambda: Option<f32>,
        #[arg(long)]
        epsilon1: Option<f32>,
        #[arg(long)]
        replicas: Option<usize>,
        /// all, predecessor, or off.
        #[arg(long)]
        rng_rule: Option<String>,
        /// exact or graph.
        #[arg(long)]
        navigator: Option<String>,
        #[arg(long)]
        graph_degree: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Exact ground truth: writes <out>.ivecs ids and <out>.fvecs distances.
    Gt {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        metric: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Query an index; writes one line of tab-separated id:distance pairs
    /// per query.
    Search {
        #[arg(long)]
        index_dir: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        max_k: Option<usize>,
        #[arg(long)]
        epsilon2: Option<f32>,
        /// Disable query-aware dynamic pruning.
        #[arg(long, default_value_t = false)]
        no_prune: bool,
        #[arg(long)]
        ef: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Optional per-query stats CSV.
        #[arg(long)]
        stats_out: Option<PathBuf>,
    },
    /// Score a results file against ground truth.
    Eval {
        #[arg(long)]
        results: PathBuf,
        /// Ground truth prefix (expects <gt>.ivecs and <gt>.fvecs).
        #[arg(long)]
        gt: PathBuf,
        /// Comma-separated recall depths, e.g. 1,10.
        #[arg(long)]
        r: Option<String>,
        /// Per-query stats CSV from `search --stats-out`.
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep max-k (and optionally epsilon2) and emit an EvalReport CSV.
    Sweep {
        #[arg(long)]
        index_dir: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        r: Option<String>,
        /// Comma-separated max-k grid, e.g. 1,2,4,8,16.
        #[arg(long)]
        max_k: Option<String>,
        /// Comma-separated epsilon2 values; "off" disables pruning.
        #[arg(long)]
        epsilon2: Option<String>,
        /// Report the formula-based VQ memory instead of peak RSS.
        #[arg(long, default_value_t = false)]
        vq_formula: bool,
        /// Optional gnuplot-ready data file.
        #[arg(long)]
        plot_out: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distributed dispatch simulation over M virtual machines.
    Dsim {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        format: Option<String>,
        /// Training query file; when omitted, `queries` is split 1/3
        /// train, 1/3 valid, 1/3 test.
        #[arg(long)]
        train_queries: Option<PathBuf>,
        #[arg(long)]
        machines: Option<usize>,
        #[arg(long)]
        subpartitions: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        /// Sub-partition probe budget per query.
        #[arg(long)]
        max_k: Option<usize>,
        #[arg(long)]
        epsilon1: Option<f32>,
        #[arg(long)]
        epsilon2: Option<f32>,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        lambda: Option<f32>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also simulate the random-partition all-dispatch baseline.
        #[arg(long, default_value_t = false)]
        baseline: bool,
        /// Output directory for plan, report.csv, summary.txt.
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a query file into .train/.valid/.test thirds.
    Split {
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// key=value defaults applied beneath command-line flags.
struct ConfigFile(HashMap<String, String>);

impl ConfigFile {
    fn load(path: Option<&Path>) -> Result<ConfigFile> {
        let mut map = HashMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            for line in text.lines() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| anyhow!("bad config line `{line}`"))?;
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(ConfigFile(map))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| anyhow!("config key `{key}`: cannot parse `{raw}`")),
        }
    }
}

/// Flag beats config beats default.
fn resolve<T: FromStr>(flag: Option<T>, cfg: &ConfigFile, key: &str, default: T) -> Result<T> {
    Ok(flag.or(cfg.get(key)?).unwrap_or(default))
}

fn resolve_opt<T: FromStr>(flag: Option<T>, cfg: &ConfigFile, key: &str) -> Result<Option<T>> {
    Ok(flag.or(cfg.get(key)?))
}

fn parse_metric(s: &str) -> Result<Metric> {
    Metric::from_name(s).ok_or_else(|| anyhow!("unknown metric `{s}` (expected l2 or ip)"))
}

fn parse_format(flag: Option<&str>, path: &Path) -> Result<VecFormat> {
    match flag {
        Some(name) => {
            VecFormat::from_name(name).ok_or_else(|| anyhow!("unknown format `{name}`"))
        }
        None => VecFormat::from_path(path)
            .ok_or_else(|| anyhow!("cannot infer format of {}; pass --format", path.display())),
    }
}

fn load_dataset(path: &Path, format: Option<&str>) -> Result<Dataset> {
    let fmt = parse_format(format, path)?;
    Ok(read_vector_file(path, fmt)?)
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse()
                .map_err(|_| anyhow!("bad {what} entry `{tok}`"))
        })
        .collect()
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = ConfigFile::load(cli.config.as_deref())?;
    let threads = resolve_opt(cli.threads, &cfg, "threads")?;
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring thread pool")?;
    }
    match cli.cmd {
        Cmd::Build {
            input,
            index_dir,
            format,
            metric,
            posting_limit_bytes,
            centroid_fraction,
            branch_k,
            lambda,
            epsilon1,
            replicas,
            rng_rule,
            navigator,
            graph_degree,
            seed,
        } => cmd_build(
            &cfg,
            input,
            index_dir,
            format,
            metric,
            posting_limit_bytes,
            centroid_fraction,
            branch_k,
            lambda,
            epsilon1,
            replicas,
            rng_rule,
            navigator,
            graph_degree,
            seed,
        ),
        Cmd::Gt {
            input,
            queries,
            format,
            metric,
            k,
            out,
        } => cmd_gt(&cfg, input, queries, format, metric, k, out),
        Cmd::Search {
            index_dir,
            queries,
            format,
            k,
            max_k,
            epsilon2,
            no_prune,
            ef,
            out,
            stats_out,
        } => cmd_search(
            &cfg, index_dir, queries, format, k, max_k, epsilon2, no_prune, ef, out, stats_out,
        ),
        Cmd::Eval {
            results,
            gt,
            r,
            stats,
            out,
        } => cmd_eval(&cfg, results, gt, r, stats, out),
        Cmd::Sweep {
            index_dir,
            queries,
            format,
            gt,
            k,
            r,
            max_k,
            epsilon2,
            vq_formula,
            plot_out,
            out,
        } => cmd_sweep(
            &cfg, index_dir, queries, format, gt, k, r, max_k, epsilon2, vq_formula, plot_out, out,
        ),
        Cmd::Dsim {
            input,
            queries,
            format,
            train_queries,
            machines,
            subpartitions,
            k,
            max_k,
            epsilon1,
            epsilon2,
            replicas,
            lambda,
            seed,
            baseline,
            out,
        } => cmd_dsim(
            &cfg,
            input,
            queries,
            format,
            train_queries,
            machines,
            subpartitions,
            k,
            max_k,
            epsilon1,
            epsilon2,
            replicas,
            lambda,
            seed,
            baseline,
            out,
        ),
        Cmd::Split {
            queries,
            format,
            out,
        } => cmd_split(queries, format, out),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_build(
    cfg: &ConfigFile,
    input: PathBuf,
    index_dir: PathBuf,
    format: Option<String>,
    metric: Option<String>,
    posting_limit_bytes: Option<usize>,
    centroid_fraction: Option<f64>,
    branch_k: Option<usize>,
    lambda: Option<f32>,
    epsilon1: Option<f32>,
    replicas: Option<usize>,
    rng_rule: Option<String>,
    navigator: Option<String>,
    graph_degree: Option<usize>,
    seed: Option<u64>,
) -> Result<()> {
    let data = load_dataset(&input, format.as_deref())?;
    if data.is_empty() {
        bail!("input dataset is empty");
    }
    let metric = parse_metric(&resolve(metric, cfg, "metric", "l2".into())?)?;
    let mut clustering = BalancedClusteringConfig::for_dataset(data.dim(), data.elem_type());
    clustering.posting_limit_bytes = resolve(
        posting_limit_bytes,
        cfg,
        "posting-limit-bytes",
        clustering.posting_limit_bytes,
    )?;
    if let Some(f) = resolve_opt(centroid_fraction, cfg, "centroid-fraction")? {
        if !(0.0..=1.0).contains(&f) || f == 0.0 {
            bail!("centroid-fraction must be in (0, 1]");
        }
        clustering.max_leaf_entries = Some(leaf_entries_for_fraction(f));
    }
    clustering.branch_k = resolve(branch_k, cfg, "branch-k", clustering.branch_k)?;
    clustering.lambda = resolve(lambda, cfg, "lambda", clustering.lambda)?;
    clustering.epsilon1 = resolve(epsilon1, cfg, "epsilon1", clustering.epsilon1)?;
    clustering.max_replicas = resolve(replicas, cfg, "replicas", clustering.max_replicas)?;
    clustering.seed = resolve(seed, cfg, "seed", clustering.seed)?;
    let rng_rule_name = resolve(rng_rule, cfg, "rng-rule", "all".into())?;
    clustering.rng_rule =
        rng_rule_from_name(&rng_rule_name).ok_or_else(|| anyhow!("unknown rng-rule"))?;

    let nav_name = resolve(navigator, cfg, "navigator", "graph".into())?;
    let mut nav = NavigatorConfig {
        strategy: NavigatorStrategy::from_name(&nav_name)
            .ok_or_else(|| anyhow!("unknown navigator `{nav_name}`"))?,
        seed: clustering.seed,
        ..Default::default()
    };
    nav.graph_degree = resolve(graph_degree, cfg, "graph-degree", nav.graph_degree)?;

    let index_cfg = IndexConfig {
        metric,
        clustering,
        navigator: nav,
    };
    let report = build_index(&data, &index_cfg, &index_dir)?;
    println!(
        "built {} lists over {} vectors in {:.1}s (leaf max {} mean {:.2}, replicas {:.2}, dropped {})",
        report.n_lists,
        report.count,
        report.elapsed.as_secs_f64(),
        report.leaf_size_max,
        report.leaf_size_mean,
        report.mean_replicas,
        report.dropped_replicas,
    );
    Ok(())
}

fn cmd_gt(
    cfg: &ConfigFile,
    input: PathBuf,
    queries: PathBuf,
    format: Option<String>,
    metric: Option<String>,
    k: Option<usize>,
    out: PathBuf,
) -> Result<()> {
    let base = load_dataset(&input, format.as_deref())?;
    let qs = load_dataset(&queries, format.as_deref())?;
    let metric = parse_metric(&resolve(metric, cfg, "metric", "l2".into())?)?;
    let k = resolve(k, cfg, "k", 100)?;
    let gt = brute_force_topk(&base, &qs, k, metric)?;
    gt.save(&out)?;
    println!(
        "wrote exact top-{k} for {} queries to {}.ivecs / {}.fvecs",
        qs.count(),
        out.display(),
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_search(
    cfg: &ConfigFile,
    index_dir: PathBuf,
    queries: PathBuf,
    format: Option<String>,
    k: Option<usize>,
    max_k: Option<usize>,
    epsilon2: Option<f32>,
    no_prune: bool,
    ef: Option<usize>,
    out: PathBuf,
    stats_out: Option<PathBuf>,
) -> Result<()> {
    let searcher = Searcher::open(&index_dir)?;
    let qs = load_dataset(&queries, format.as_deref())?;
    let k = resolve(k, cfg, "k", 10)?;
    let max_k = resolve(max_k, cfg, "max-k", 64)?;
    // Reference defaults: 0.6 suits top-1 workloads, 7.0 top-k reranking.
    let eps_default = if k == 1 { 0.6 } else { 7.0 };
    let epsilon2 = if no_prune {
        None
    } else {
        Some(resolve(epsilon2, cfg, "epsilon2", eps_default)?)
    };
    let params = SearchParams {
        k,
        max_k,
        epsilon2,
        ef: resolve_opt(ef, cfg, "ef")?,
    };
    let started = std::time::Instant::now();
    let results = searcher.batch_search(&qs, &params)?;
    let elapsed = started.elapsed().as_secs_f64();
    let rows: Vec<_> = results.iter().map(|r| r.hits.clone()).collect();
    write_results_file(&out, &rows)?;
    if let Some(stats_path) = stats_out {
        let mut text = String::from(
            "query,latency_ms,lists_read,bytes_read,lists_pruned,candidates_scanned\n",
        );
        for (qi, r) in results.iter().enumerate() {
            text.push_str(&format!(
                "{qi},{},{},{},{},{}\n",
                r.latency.as_secs_f64() * 1e3,
                r.stats.posting.lists_read,
                r.stats.posting.bytes_read,
                r.stats.lists_pruned,
                r.stats.candidates_scanned,
            ));
        }
        std::fs::write(&stats_path, text)
            .with_context(|| format!("writing {}", stats_path.display()))?;
    }
    let mean_lists = results
        .iter()
        .map(|r| r.stats.posting.lists_read as f64)
        .sum::<f64>()
        / results.len().max(1) as f64;
    println!(
        "searched {} queries in {elapsed:.3}s ({:.0} qps, mean {mean_lists:.1} lists/query)",
        qs.count(),
        qs.count() as f64 / elapsed.max(1e-12),
    );
    Ok(())
}

fn cmd_eval(
    cfg: &ConfigFile,
    results: PathBuf,
    gt_prefix: PathBuf,
    r: Option<String>,
    stats: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let rows = read_results_file(&results)?;
    let gt = GroundTruth::load(&gt_prefix)?;
    let r_spec = resolve(r, cfg, "r", "10".into())?;
    let rs: Vec<usize> = parse_list(&r_spec, "r")?;

    let mut header: Vec<String> = rs.iter().map(|r| format!("recall@{r}")).collect();
    let mut values: Vec<String> = Vec::new();
    for &r in &rs {
        let recall = recall_at_r(&rows, &gt, r, DEFAULT_TIE_TOL)?;
        values.push(recall.to_string());
    }
    if let Some(stats_path) = stats {
        let text = std::fs::read_to_string(&stats_path)
            .with_context(|| format!("reading {}", stats_path.display()))?;
        let mut lat: Vec<f64> = Vec::new();
        let mut lists = 0.0f64;
        let mut bytes = 0.0f64;
        let mut n = 0usize;
        for line in text.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() < 4 {
                continue;
            }
            lat.push(f[1].parse()?);
            lists += f[2].parse::<f64>()?;
            bytes += f[3].parse::<f64>()?;
            n += 1;
        }
        if n > 0 {
            lat.sort_by(f64::total_cmp);
            header.extend(
                [
                    "latency_mean_ms",
                    "latency_p50_ms",
                    "latency_p90_ms",
                    "latency_p99_ms",
                    "mean_lists_probed",
                    "mean_bytes_read",
                ]
                .map(String::from),
            );
            values.push((lat.iter().sum::<f64>() / n as f64).to_string());
            for p in [50.0, 90.0, 99.0] {
                values.push(hivf::eval::percentile_nearest_rank(&lat, p).to_string());
            }
            values.push((lists / n as f64).to_string());
            values.push((bytes / n as f64).to_string());
        }
    }
    let report = format!("{}\n{}\n", header.join(","), values.join(","));
    print!("{report}");
    if let Some(out) = out {
        std::fs::write(&out, report).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    cfg: &ConfigFile,
    index_dir: PathBuf,
    queries: PathBuf,
    format: Option<String>,
    gt_prefix: PathBuf,
    k: Option<usize>,
    r: Option<String>,
    max_k: Option<String>,
    epsilon2: Option<String>,
    vq_formula: bool,
    plot_out: Option<PathBuf>,
    out: PathBuf,
) -> Result<()> {
    let searcher = Searcher::open(&index_dir)?;
    let qs = load_dataset(&queries, format.as_deref())?;
    let gt = GroundTruth::load(&gt_prefix)?;
    let k = resolve(k, cfg, "k", 10)?;
    let rs: Vec<usize> = parse_list(&resolve(r, cfg, "r", "10".into())?, "r")?;
    let max_ks: Vec<usize> = parse_list(
        &resolve(max_k, cfg, "max-k", "1,2,4,8,16,32,64".into())?,
        "max-k",
    )?;
    let eps_spec = resolve(epsilon2, cfg, "epsilon2", "7".into())?;
    let epsilon2s: Vec<Option<f32>> = eps_spec
        .split(',')
        .map(|tok| {
            let tok = tok.trim();
            if tok == "off" {
                Ok(None)
            } else {
                tok.parse()
                    .map(Some)
                    .map_err(|_| anyhow!("bad epsilon2 entry `{tok}`"))
            }
        })
        .collect::<Result<_>>()?;
    let spec = SweepSpec {
        k,
        rs,
        max_ks,
        epsilon2s,
        tie_tol: DEFAULT_TIE_TOL,
        vq_formula,
    };
    let rows = run_sweep(&searcher, &qs, &gt, &spec)?;
    let csv = rows_to_csv(&rows);
    std::fs::write(&out, &csv).with_context(|| format!("writing {}", out.display()))?;
    if let Some(plot) = plot_out {
        std::fs::write(&plot, rows_to_plot_data(&rows))
            .with_context(|| format!("writing {}", plot.display()))?;
    }
    print!("{csv}");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_dsim(
    cfg: &ConfigFile,
    input: PathBuf,
    queries: PathBuf,
    format: Option<String>,
    train_queries: Option<PathBuf>,
    machines: Option<usize>,
    subpartitions: Option<usize>,
    k: Option<usize>,
    max_k: Option<usize>,
    epsilon1: Option<f32>,
    epsilon2: Option<f32>,
    replicas: Option<usize>,
    lambda: Option<f32>,
    seed: Option<u64>,
    baseline: bool,
    out: PathBuf,
) -> Result<()> {
    let data = load_dataset(&input, format.as_deref())?;
    let all_queries = load_dataset(&queries, format.as_deref())?;
    let m = resolve(machines, cfg, "machines", 8)?;
    let p = resolve(subpartitions, cfg, "subpartitions", 8 * m)?;
    let k = resolve(k, cfg, "k", 10)?;
    let max_subs = resolve(max_k, cfg, "max-k", (2 * m).min(p))?;

    let mut clustering = BalancedClusteringConfig::for_dataset(data.dim(), data.elem_type());
    clustering.epsilon1 = resolve(epsilon1, cfg, "epsilon1", clustering.epsilon1)?;
    clustering.max_replicas = resolve(replicas, cfg, "replicas", clustering.max_replicas)?;
    clustering.lambda = resolve(lambda, cfg, "lambda", clustering.lambda)?;
    clustering.seed = resolve(seed, cfg, "seed", clustering.seed)?;

    let dispatch = DispatchParams {
        k,
        max_subs,
        epsilon2: Some(resolve(epsilon2, cfg, "epsilon2", 7.0)?),
    };

    let (train, test) = match train_queries {
        Some(path) => {
            let train = load_dataset(&path, format.as_deref())?;
            (train, all_queries)
        }
        None => {
            let (train, valid, test) = split_three(&all_queries)?;
            println!(
                "no --train-queries given: split {} queries into thirds (train {}, test {})",
                train.count() + valid.count() + test.count(),
                train.count(),
                test.count()
            );
            (train, test)
        }
    };
    if test.is_empty() {
        bail!("no test queries after split");
    }

    let gt = brute_force_topk(&data, &test, k, Metric::L2)?;
    let plan = build_partition_plan(&data, Some(&train), p, m, &clustering, Metric::L2, &dispatch)?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    save_plan(&plan, &out.join("plan"))?;
    let report = simulate_dispatch(&plan, &data, &test, &gt, &dispatch)?;
    std::fs::write(out.join("report.csv"), report.to_csv())?;

    let mut summary = String::new();
    summary.push_str("clustered plan: ");
    summary.push_str(&report.summary());
    summary.push('\n');
    if baseline {
        let rand_plan = random_partition_baseline(&data, m, clustering.seed)?;
        let rand_report = simulate_dispatch(&rand_plan, &data, &test, &gt, &dispatch)?;
        std::fs::write(out.join("baseline.csv"), rand_report.to_csv())?;
        summary.push_str("random baseline: ");
        summary.push_str(&rand_report.summary());
        summary.push('\n');
    }
    std::fs::write(out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn cmd_split(queries: PathBuf, format: Option<String>, out: PathBuf) -> Result<()> {
    let fmt = parse_format(format.as_deref(), &queries)?;
    let qs = read_vector_file(&queries, fmt)?;
    let (train, valid, test) = split_three(&qs)?;
    let ext = fmt.name();
    for (part, name) in [(&train, "train"), (&valid, "valid"), (&test, "test")] {
        let path = PathBuf::from(format!("{}.{name}.{ext}", out.display()));
        write_vector_file(part, &path, fmt)?;
        println!("wrote {} vectors to {}", part.count(), path.display());
    }
    Ok(())
}
