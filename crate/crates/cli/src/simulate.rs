//! The `simulate` workflow: resolve a config into a concrete closed-loop
//! scenario, run it, and emit trace/symbol/summary/manifest artifacts.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qosc::gains::{design_plan, PlanOptions};
use qosc::model::build_system;
use qosc::network::{build_network, find_connected_graph, weights_from_edges};
use qosc::quantizer::{minimal_levels, LevelSchedule};
use qosc::sim::{draw_initial_states, metrics, run, SimConfig};
use qosc::Network64;

use crate::config::Config;

pub struct RunOutput {
    pub manifest: String,
    pub trace_csv: String,
    pub symbols_csv: String,
    pub summary: String,
    pub saturation_count: usize,
}

/// `s r w; s r w; …` (inline) or one `s r w` per line (file).
fn parse_edges(text: &str) -> Result<Vec<(usize, usize, f64)>> {
    let mut edges = Vec::new();
    for part in text.split([';', '\n']) {
        let part = part.trim();
        if part.is_empty() || part.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = part.split_whitespace().collect();
        if toks.len() != 3 {
            bail!("edge `{part}`: expected `sender receiver weight`");
        }
        let s: usize = toks[0].parse().with_context(|| format!("edge `{part}`: bad sender"))?;
        let r: usize = toks[1].parse().with_context(|| format!("edge `{part}`: bad receiver"))?;
        let w: f64 = toks[2].parse().with_context(|| format!("edge `{part}`: bad weight"))?;
        edges.push((s, r, w));
    }
    if edges.is_empty() {
        bail!("empty edge list");
    }
    Ok(edges)
}

/// Resolves the graph source. Random graphs draw their seed from the master
/// stream so a single `run.seed` pins the whole scenario.
fn resolve_network(cfg: &Config, graph_seed: u64) -> Result<(Network64, Config)> {
    let mut echo = Config::default();
    let directed = cfg.get_bool_or("network", "directed", false)?;
    let source = cfg
        .raw("network", "graph")
        .ok_or_else(|| anyhow!("missing required key `graph` in [network]"))?;
    let network = match source {
        "random" => {
            let agents = cfg.get_usize("network", "agents")?;
            let edge_prob = cfg.get_f64_or("network", "edge_prob", 0.5)?;
            echo.put("network", "graph", "random");
            echo.put("network", "agents", agents);
            echo.put("network", "edge_prob", edge_prob);
            let (net, _) = find_connected_graph::<f64>(agents, edge_prob, graph_seed, directed)?;
            net
        }
        "inline" => {
            let raw = cfg
                .raw("network", "edges")
                .ok_or_else(|| anyhow!("graph = inline needs an `edges` key in [network]"))?;
            let edges = parse_edges(raw)?;
            let agents = match cfg.raw("network", "agents") {
                Some(_) => Some(cfg.get_usize("network", "agents")?),
                None => None,
            };
            let weights = weights_from_edges(agents, &edges, directed)?;
            echo.put("network", "graph", "inline");
            echo.put("network", "agents", weights.nrows());
            let canonical: Vec<String> =
                edges.iter().map(|(s, r, w)| format!("{s} {r} {w}")).collect();
            echo.put("network", "edges", canonical.join("; "));
            build_network(weights, directed)?
        }
        other => {
            let path = other
                .strip_prefix("file:")
                .ok_or_else(|| anyhow!("[network] graph: expected random, inline, or file:PATH, got `{other}`"))?;
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read graph file {path}"))?;
            let edges = parse_edges(&text)?;
            let agents = match cfg.raw("network", "agents") {
                Some(_) => Some(cfg.get_usize("network", "agents")?),
                None => None,
            };
            let weights = weights_from_edges(agents, &edges, directed)?;
            echo.put("network", "graph", other);
            echo.put("network", "agents", weights.nrows());
            build_network(weights, directed)?
        }
    };
    echo.put("network", "directed", directed);
    Ok((network, echo))
}

/// Runs one scenario and renders every artifact. The returned manifest is a
/// fully resolved config: re-running it reproduces these artifacts bit for
/// bit.
pub fn execute(cfg: &Config) -> Result<RunOutput> {
    let m = cfg.get_usize("system", "m")?;
    let theta = cfg.get_theta("system", "theta")?;
    let model = build_system(m, theta)?;

    // One seeded generator drives every random draw of the run.
    let seed = cfg.get_u64_or("run", "seed", 0)?;
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let graph_seed: u64 = master.gen();
    let initial_seed: u64 = master.gen();

    let (network, mut manifest) = resolve_network(cfg, graph_seed)?;
    let n = network.n;

    let c_star = cfg.get_f64("gains", "c_star")?;
    let c_delta_star = cfg.get_f64("gains", "c_delta_star")?;
    let strengthened = cfg.get_bool_or("gains", "strengthened", false)?;
    let opts = PlanOptions {
        h: cfg.get_auto_f64("gains", "h")?,
        epsilon: cfg.get_auto_f64("gains", "epsilon")?,
        gamma: cfg.get_auto_f64("run", "gamma")?,
        strengthened,
        c_star: Some(c_star),
        c_delta_star: Some(c_delta_star),
    };
    let plan = design_plan(&model, &network, &opts)?;

    let levels = match cfg.get_auto_u32("schedule", "levels")? {
        Some(v) => v,
        None => minimal_levels::<f64>(m, theta)?,
    };
    let schedule = LevelSchedule::new(1, levels, 2 * m)?;
    let bits = schedule.bits_steady();

    let p0 = match cfg.get_auto_f64("run", "p0")? {
        Some(v) => v,
        None => plan
            .p0_min
            .ok_or_else(|| anyhow!("p0 = auto needs c_star and c_delta_star"))?,
    };
    let horizon = cfg.get_usize("run", "horizon")?;

    manifest.put("system", "m", m);
    manifest.put("system", "theta", theta);
    manifest.put("gains", "h", plan.h);
    manifest.put("gains", "epsilon", plan.epsilon);
    manifest.put("gains", "strengthened", strengthened);
    manifest.put("gains", "c_star", c_star);
    manifest.put("gains", "c_delta_star", c_delta_star);
    manifest.put("schedule", "levels", levels);
    manifest.put("run", "gamma", plan.gamma);
    manifest.put("run", "p0", p0);
    manifest.put("run", "horizon", horizon);
    manifest.put("run", "seed", seed);

    let sim_cfg = SimConfig {
        model,
        network,
        schedule,
        gains: plan.k.clone(),
        gamma: plan.gamma,
        p0,
        horizon,
        initial: draw_initial_states(n, m, initial_seed),
    };
    let trace = run(&sim_cfg)?;
    let stats = metrics(&trace);
    let dim = 2 * m;

    let mut trace_csv = String::from("t");
    for i in 1..=n {
        for j in 1..=dim {
            let _ = write!(trace_csv, ",x_{i}_{j}");
        }
    }
    for j in 1..=dim {
        let _ = write!(trace_csv, ",delta_inf_{j}");
    }
    trace_csv.push_str(",max_quant_err,saturations");
    for i in 1..=n {
        let _ = write!(trace_csv, ",u_{i}");
    }
    trace_csv.push('\n');
    for s in &trace.steps {
        let _ = write!(trace_csv, "{}", s.t);
        for i in 0..n {
            for j in 0..dim {
                let _ = write!(trace_csv, ",{}", s.states[(i, j)]);
            }
        }
        for j in 0..dim {
            let _ = write!(trace_csv, ",{}", s.delta_inf[j]);
        }
        let _ = write!(trace_csv, ",{},{}", s.max_quant_err, s.saturated);
        for i in 0..n {
            let _ = write!(trace_csv, ",{}", s.controls[i]);
        }
        trace_csv.push('\n');
    }

    let mut symbols_csv = String::from("t,agent,symbol,d_value,saturated\n");
    let sat_tol = 0.5 + 4.0 * f64::EPSILON;
    for s in &trace.steps {
        for i in 0..n {
            let d = s.innovations[i];
            let saturated = (s.symbols[i] as f64 - d).abs() > sat_tol;
            let _ = writeln!(
                symbols_csv,
                "{},{},{},{},{}",
                s.t,
                i + 1,
                s.symbols[i],
                d,
                u8::from(saturated)
            );
        }
    }

    let mut summary = String::new();
    let kv = |out: &mut String, k: &str, v: &dyn std::fmt::Display| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv(&mut summary, "command", &"simulate");
    kv(&mut summary, "agents", &n);
    kv(&mut summary, "m", &m);
    kv(&mut summary, "theta", &theta);
    kv(&mut summary, "directed", &sim_cfg.network.directed);
    kv(
        &mut summary,
        "lambda2",
        &sim_cfg.network.lambda2_real.unwrap_or(0.0),
    );
    kv(&mut summary, "h", &plan.h);
    kv(&mut summary, "epsilon", &plan.epsilon);
    kv(&mut summary, "gamma", &plan.gamma);
    kv(&mut summary, "p0", &p0);
    kv(&mut summary, "levels_steady", &levels);
    kv(&mut summary, "bits", &bits);
    kv(&mut summary, "horizon", &horizon);
    kv(&mut summary, "seed", &seed);
    kv(&mut summary, "saturation_count", &trace.saturation_count);
    kv(&mut summary, "initial_delta_inf", &stats.initial_delta_inf);
    kv(&mut summary, "final_delta_inf", &stats.final_delta_inf);
    kv(&mut summary, "ratio", &stats.ratio);
    kv(&mut summary, "fitted_rate", &stats.fitted_rate);

    Ok(RunOutput {
        manifest: manifest.render(),
        trace_csv,
        symbols_csv,
        summary,
        saturation_count: trace.saturation_count,
    })
}

pub fn write_run(dir: &Path, out: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    for (name, body) in [
        ("manifest.txt", &out.manifest),
        ("trace.csv", &out.trace_csv),
        ("symbols.csv", &out.symbols_csv),
        ("summary.txt", &out.summary),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, body)
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

/// CLI entry: load → override → execute → write.
pub fn command(
    config: &Path,
    out_dir: &Path,
    seed: Option<u64>,
    sets: &[String],
) -> Result<i32> {
    let mut cfg = Config::load(config)?;
    if let Some(s) = seed {
        cfg.put("run", "seed", s);
    }
    for assignment in sets {
        cfg.set(assignment)?;
    }
    let out = execute(&cfg)?;
    write_run(out_dir, &out)?;
    print!("{}", out.summary);
    Ok(0)
}
