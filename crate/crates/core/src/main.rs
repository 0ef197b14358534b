use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use demand::config::{load_config, load_synth_spec};
use demand::evaluation::{match_components_by, reproducibility, ComponentSet, MatchMetric, Matching};
use demand::io::{read_matrix, write_matrix};
use demand::{components, decompose, estimate_rank, generate, DemandConfig, DemandError, SynthSpec};

#[derive(Parser)]
#[command(name = "demand", version, about = "Hierarchical sparse nonlinear matrix decomposition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose a matrix and write the factors of every layer.
    Decompose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the estimated rank and the position picked by each statistic.
    Rank {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a synthetic dataset with known factors.
    Synth {
        /// JSON spec; individual flags override its fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long)]
        cols: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        ranks: Option<Vec<usize>>,
        #[arg(long)]
        noise_sigma: Option<f64>,
        #[arg(long)]
        s_density: Option<f64>,
        #[arg(long)]
        s_amplitude: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pair up two component sets and report their similarity.
    Evaluate {
        /// Matrix file, or a directory holding C_<layer>.csv.
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, value_enum, default_value_t = Metric::Corr)]
        metric: Metric,
        #[arg(long, default_value_t = 1)]
        layer: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split rows in two, decompose each half and compare first-layer components.
    Reproduce {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Corr,
    Hausdorff,
}

fn exit_code(e: &DemandError) -> u8 {
    match e {
        DemandError::Config(_) | DemandError::Parameter(_) => 3,
        DemandError::Io { .. }
        | DemandError::Format { .. }
        | DemandError::Input(_)
        | DemandError::Shape { .. }
        | DemandError::Degenerate(_) => 2,
    }
}

fn write_text(path: &Path, text: &str) -> demand::Result<()> {
    fs::write(path, text).map_err(|e| DemandError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn make_dir(path: &Path) -> demand::Result<()> {
    fs::create_dir_all(path).map_err(|e| DemandError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn config_or_default(path: Option<&Path>) -> demand::Result<DemandConfig> {
    path.map_or_else(|| Ok(DemandConfig::default()), load_config)
}

fn emit(out: Option<&Path>, text: &str) -> demand::Result<()> {
    match out {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pairing_csv(m: &Matching) -> String {
    let mut s = String::from("pair_index,a_row,b_row,corr,hausdorff\n");
    for (i, p) in m.pairs.iter().enumerate() {
        let _ = writeln!(s, "{},{},{},{},{}", i + 1, p.a + 1, p.b + 1, p.corr, p.hausdorff);
    }
    s
}

fn summarize(m: &Matching) {
    eprintln!(
        "pairs: {}, mean |corr|: {:.6}, mean hausdorff: {:.3}",
        m.pairs.len(),
        m.mean_abs_corr(),
        m.mean_hausdorff()
    );
    let rows = |v: &[usize]| v.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(" ");
    if !m.unmatched_a.is_empty() {
        eprintln!("unmatched rows in a: {}", rows(&m.unmatched_a));
    }
    if !m.unmatched_b.is_empty() {
        eprintln!("unmatched rows in b: {}", rows(&m.unmatched_b));
    }
}

fn cmd_decompose(input: &Path, config: Option<&Path>, out: &Path) -> demand::Result<()> {
    let cfg = config_or_default(config)?;
    let m = read_matrix(input)?;
    let res = decompose(&m, &cfg)?;
    make_dir(out)?;
    for (k, layer) in res.layers.iter().enumerate() {
        let n = k + 1;
        write_matrix(out.join(format!("X_{n}.csv")), &layer.x)?;
        write_matrix(out.join(format!("Y_{n}.csv")), &layer.y)?;
        write_matrix(out.join(format!("S_{n}.csv")), &layer.s)?;
        write_matrix(out.join(format!("C_{n}.csv")), &components(&res, n)?)?;
    }
    let mut hist = String::from("layer,iteration,loss\n");
    for (k, h) in res.loss_history.iter().enumerate() {
        for (i, l) in h.iter().enumerate() {
            let _ = writeln!(hist, "{},{},{}", k + 1, i + 1, l);
        }
    }
    write_text(&out.join("loss_history.csv"), &hist)?;
    let manifest = json!({
        "input_shape": [m.rows(), m.cols()],
        "layers": res.depth(),
        "ranks": res.ranks(),
        "next_rank_estimate": res.next_rank_estimate,
        "hit_layer_cap": res.hit_layer_cap,
        "final_loss": res.loss_history.iter().map(|h| h.last().copied()).collect::<Vec<_>>(),
        "mbp": res.mbp,
        "seed": res.seed,
        "config": res.config,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_text(&out.join("manifest.json"), &(text + "\n"))?;
    eprintln!("{} layer(s), ranks {:?}", res.depth(), res.ranks());
    Ok(())
}

fn cmd_rank(input: &Path, config: Option<&Path>) -> demand::Result<()> {
    let cfg = config_or_default(config)?;
    let est = estimate_rank(&read_matrix(input)?, &cfg.rank)?;
    println!("est,wr_pos,wd_pos,wc_pos");
    println!("{},{},{},{}", est.est, est.wr_pos, est.wd_pos, est.wc_pos);
    Ok(())
}

fn cmd_synth(spec: SynthSpec, out: &Path) -> demand::Result<()> {
    let spec_checked = demand::config::parse_synth_spec(&serde_json::to_string(&spec).expect("spec serializes"))?;
    let (input, truth) = generate(&spec_checked)?;
    make_dir(out)?;
    write_matrix(out.join("input.csv"), &input)?;
    write_matrix(out.join("S_true.csv"), &truth.s_true)?;
    for (k, (x, y)) in truth.x_list.iter().zip(&truth.y_list).enumerate() {
        write_matrix(out.join(format!("X_{}.csv", k + 1)), x)?;
        write_matrix(out.join(format!("Y_{}.csv", k + 1)), y)?;
        write_matrix(out.join(format!("C_{}.csv", k + 1)), y)?;
    }
    let text = serde_json::to_string_pretty(&spec_checked).expect("spec serializes");
    write_text(&out.join("spec.json"), &(text + "\n"))
}

fn read_components(path: &Path, layer: usize) -> demand::Result<ComponentSet> {
    let file = if path.is_dir() {
        path.join(format!("C_{layer}.csv"))
    } else {
        path.to_path_buf()
    };
    Ok(ComponentSet::new(read_matrix(file)?))
}

fn cmd_evaluate(a: &Path, b: &Path, metric: Metric, layer: usize, out: Option<&Path>) -> demand::Result<()> {
    let ca = read_components(a, layer)?;
    let cb = read_components(b, layer)?;
    let metric = match metric {
        Metric::Corr => MatchMetric::Correlation,
        Metric::Hausdorff => MatchMetric::Hausdorff,
    };
    let m = match_components_by(&ca, &cb, metric)?;
    emit(out, &pairing_csv(&m))?;
    summarize(&m);
    Ok(())
}

fn cmd_reproduce(input: &Path, config: Option<&Path>, split_seed: u64, out: Option<&Path>) -> demand::Result<()> {
    let cfg = config_or_default(config)?;
    let rep = reproducibility(&read_matrix(input)?, &cfg, split_seed)?;
    emit(out, &pairing_csv(&rep.matching))?;
    eprintln!("first-layer ranks: {} / {}", rep.rank_a, rep.rank_b);
    summarize(&rep.matching);
    Ok(())
}

fn run(cli: Cli) -> demand::Result<()> {
    match cli.command {
        Command::Decompose { input, config, out } => cmd_decompose(&input, config.as_deref(), &out),
        Command::Rank { input, config } => cmd_rank(&input, config.as_deref()),
        Command::Synth {
            spec,
            rows,
            cols,
            ranks,
            noise_sigma,
            s_density,
            s_amplitude,
            seed,
            out,
        } => {
            let mut s = match spec {
                Some(p) => load_synth_spec(p)?,
                None => SynthSpec::default(),
            };
            s.rows = rows.unwrap_or(s.rows);
            s.cols = cols.unwrap_or(s.cols);
            s.ranks = ranks.unwrap_or(s.ranks);
            s.noise_sigma = noise_sigma.unwrap_or(s.noise_sigma);
            s.s_density = s_density.unwrap_or(s.s_density);
            s.s_amplitude = s_amplitude.unwrap_or(s.s_amplitude);
            s.seed = seed.unwrap_or(s.seed);
            cmd_synth(s, &out)
        }
        Command::Evaluate {
            a,
            b,
            metric,
            layer,
            out,
        } => cmd_evaluate(&a, &b, metric, layer, out.as_deref()),
        Command::Reproduce {
            input,
            config,
            split_seed,
            out,
        } => cmd_reproduce(&input, config.as_deref(), split_seed, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
