mod output;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use censor_core::arch::{build_named, Architecture, BuilderParams};
use censor_core::censoring::{run_censoring_table, TableOptions};
use censor_core::channel::{mult_error_bisection, mult_error_with, MultErrorOptions, DEFAULT_BUDGET};
use censor_core::closedform::{depth_threshold, lambda_c, lambda_c_prime};
use censor_core::graphs::{graph_gap, lollipop, path, GraphGapRow, SiteGraph};
use censor_core::perm2::{circuit_spectrum, SpectrumOptions};
use censor_core::pigment::{trajectory, PigmentState};
use censor_core::search::{scan, DeletionScope, Metric, SearchConfig};

use output::{g12, Table};

type AnyResult<T> = Result<T, Box<dyn std::error::Error + Send + Sync>>;

/// Inclusive integer range written `a` or `a:b`.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
struct Span {
    lo: usize,
    hi: usize,
}

impl Span {
    fn values(self) -> Vec<usize> {
        (self.lo..=self.hi).collect()
    }
}

impl FromStr for Span {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}"));
        let span = match s.split_once(':') {
            Some((a, b)) => Span { lo: parse(a)?, hi: parse(b)? },
            None => {
                let v = parse(s)?;
                Span { lo: v, hi: v }
            }
        };
        if span.lo > span.hi {
            return Err(format!("empty range `{s}`"));
        }
        Ok(span)
    }
}

#[derive(Parser)]
#[command(name = "censorlab", version, about = "Second-moment spectral gaps and censoring checks for random circuit architectures")]
struct Cli {
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Source {
    /// Named builder; a comma-separated list sweeps several.
    #[arg(long, value_delimiter = ',', conflicts_with = "arch")]
    builder: Vec<String>,
    /// Architecture JSON file.
    #[arg(long)]
    arch: Option<PathBuf>,
    /// Site count or inclusive range `a:b` for builders.
    #[arg(long = "N")]
    n: Option<Span>,
    /// Local dimension for builders.
    #[arg(long, default_value_t = 2)]
    q: usize,
    /// Local dimensions `Q1,Q2,Q3` for brickwork3.
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
}

struct Labeled {
    label: String,
    arch: Architecture,
}

impl Source {
    fn resolve(&self) -> AnyResult<Vec<Labeled>> {
        if let Some(p) = &self.arch {
            let arch = Architecture::parse(&fs::read_to_string(p)?)?;
            return Ok(vec![Labeled { label: p.display().to_string(), arch }]);
        }
        if self.builder.is_empty() {
            return Err("either --builder or --arch is required".into());
        }
        let ns: Vec<Option<usize>> = match self.n {
            Some(s) => s.values().into_iter().map(Some).collect(),
            None => vec![None],
        };
        let dims3 = match self.dims.as_deref() {
            Some(&[a, b, c]) => Some([a, b, c]),
            Some(_) => return Err("--dims takes exactly three values".into()),
            None => None,
        };
        let mut out = Vec::new();
        for b in &self.builder {
            for &n in &ns {
                let params = BuilderParams { n, q: self.q, dims3, repeat: 1 };
                out.push(Labeled { label: b.clone(), arch: build_named(b, &params)? });
            }
        }
        Ok(out)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Subleading eigenvalue and singular value.
    ///
    /// CSV columns: builder, N, q, d, lambda, gap, singular, method.
    Gap {
        #[command(flatten)]
        source: Source,
        /// Periods, single value or range.
        #[arg(long, default_value = "1")]
        d: Span,
    },
    /// Multiplicative error of d periods.
    ///
    /// CSV columns: builder, N, q, d, eps_m, branch_plus, branch_minus, method.
    Multerr {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = "1")]
        d: Span,
        /// Use the full-space bisection instead of the exact sector solve.
        #[arg(long)]
        bisection: bool,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget_bytes: u64,
        #[arg(long, default_value_t = 17)]
        seed: u64,
    },
    /// Depth threshold from the closed-form gaps (q = t = 2 by default).
    ///
    /// CSV columns: N, q, t, lambda, lambda_prime, d, eps_a_bound, eps_m_bound,
    /// specialized_d, specialized_eps_a, prefactor_ratio.
    Depth {
        #[arg(long = "N")]
        n: Span,
        #[arg(long, default_value_t = 2)]
        q: usize,
        #[arg(long, default_value_t = 2)]
        t: usize,
    },
    /// Twelve-cell censoring table. Exits nonzero if any cell disagrees.
    ///
    /// CSV columns: measure, censorship, expected, observed, match, evidence.
    CensoringTable {
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
    /// Pigment mixing trajectory, one row per gate and site.
    ///
    /// CSV columns: builder, N, step, site, amount_fraction, amount_float.
    Pigment {
        #[command(flatten)]
        source: Source,
        /// Site holding all pigment initially.
        #[arg(long, default_value_t = 0)]
        start: usize,
        /// Periods.
        #[arg(long, default_value_t = 1)]
        d: usize,
    },
    /// Gaps of graph-sampled ensembles.
    ///
    /// CSV columns: graph, n, k, edges, gap_raw, gap_normalized.
    Graphgap {
        /// Path plus lollipop sweep on this many vertices.
        #[arg(long, conflicts_with = "graph")]
        lollipop: Option<usize>,
        /// Clique sizes for the lollipop sweep.
        #[arg(long, default_value = "3:7")]
        k_sweep: Span,
        /// Graph JSON file `{"n": .., "edges": [[a, b], ..]}`.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        q: usize,
    },
    /// Random or exhaustive search for censoring violations, as JSON lines.
    Search {
        #[arg(long = "N")]
        n: usize,
        #[arg(long, default_value_t = 2)]
        q: usize,
        #[arg(long, default_value_t = 6)]
        max_gates: usize,
        #[arg(long, default_value = "eigen_gap")]
        metric: Metric,
        #[arg(long, default_value = "last_gate")]
        scope: DeletionScope,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long)]
        exhaustive: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> AnyResult<ExitCode> {
    let out = cli.out.as_deref();
    match cli.command {
        Command::Gap { source, d } => cmd_gap(out, &source, d),
        Command::Multerr { source, d, bisection, budget_bytes, seed } => {
            let opts = MultErrorOptions { budget: budget_bytes, seed, ..MultErrorOptions::default() };
            cmd_multerr(out, &source, d, bisection, &opts)
        }
        Command::Depth { n, q, t } => cmd_depth(out, n, q, t),
        Command::CensoringTable { trials, seed } => cmd_censoring_table(out, trials, seed),
        Command::Pigment { source, start, d } => cmd_pigment(out, &source, start, d),
        Command::Graphgap { lollipop, k_sweep, graph, q } => cmd_graphgap(out, lollipop, k_sweep, graph.as_deref(), q),
        Command::Search { n, q, max_gates, metric, scope, seed, samples, exhaustive } => {
            let cfg = SearchConfig { q, seed, samples, exhaustive, ..SearchConfig::new(n, max_gates, metric, scope) };
            cmd_search(out, &cfg)
        }
    }
}

fn grid(archs: &[Labeled], d: Span) -> Vec<(usize, usize)> {
    (0..archs.len()).flat_map(|i| d.values().into_iter().map(move |d| (i, d))).collect()
}

fn q_label(a: &Architecture) -> String {
    match a.uniform_dim() {
        Some(q) => q.to_string(),
        None => a.site_dims().iter().map(|q| q.to_string()).collect::<Vec<_>>().join("x"),
    }
}

fn cmd_gap(out: Option<&Path>, source: &Source, d: Span) -> AnyResult<ExitCode> {
    let archs = source.resolve()?;
    let rows: Vec<AnyResult<Vec<String>>> = grid(&archs, d)
        .into_par_iter()
        .map(|(i, d)| {
            let a = &archs[i];
            let opts = SpectrumOptions { periods: Some(d * a.arch.repeat()), ..SpectrumOptions::singular() };
            let r = circuit_spectrum(&a.arch, &opts)?;
            Ok(vec![
                a.label.clone(),
                a.arch.n_sites().to_string(),
                q_label(&a.arch),
                d.to_string(),
                g12(r.lambda()),
                g12(r.gap),
                g12(r.singular_subleading.unwrap_or(f64::NAN)),
                format!("{:?}", r.method).to_lowercase(),
            ])
        })
        .collect();
    let mut t = Table::new(out, "gap", &["builder", "N", "q", "d", "lambda", "gap", "singular", "method"])?;
    for r in rows {
        t.row(r?)?;
    }
    t.finish()?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_multerr(out: Option<&Path>, source: &Source, d: Span, bisection: bool, opts: &MultErrorOptions) -> AnyResult<ExitCode> {
    let archs = source.resolve()?;
    let rows: Vec<AnyResult<Vec<String>>> = grid(&archs, d)
        .into_par_iter()
        .map(|(i, d)| {
            let a = &archs[i];
            let periods = d * a.arch.repeat();
            let r = if bisection {
                mult_error_bisection(&a.arch, periods, opts)?
            } else {
                mult_error_with(&a.arch, periods, opts)?
            };
            Ok(vec![
                a.label.clone(),
                a.arch.n_sites().to_string(),
                q_label(&a.arch),
                d.to_string(),
                g12(r.eps_m),
                g12(r.branch_plus),
                g12(r.branch_minus),
                format!("{:?}", r.method).to_lowercase(),
            ])
        })
        .collect();
    let mut t = Table::new(out, "multerr", &["builder", "N", "q", "d", "eps_m", "branch_plus", "branch_minus", "method"])?;
    for r in rows {
        t.row(r?)?;
    }
    t.finish()?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_depth(out: Option<&Path>, n: Span, q: usize, t: usize) -> AnyResult<ExitCode> {
    let header =
        ["N", "q", "t", "lambda", "lambda_prime", "d", "eps_a_bound", "eps_m_bound", "specialized_d", "specialized_eps_a", "prefactor_ratio"];
    let mut tab = Table::new(out, "depth", &header)?;
    for n in n.values() {
        let (lam, lp) = (lambda_c(n, q)?, lambda_c_prime(n, q)?);
        let mut row = vec![n.to_string(), q.to_string(), t.to_string(), g12(lam), g12(lp)];
        match depth_threshold(n, t, q, lam, lp) {
            Ok(th) => row.extend([
                th.d.to_string(),
                g12(th.eps_a_bound),
                g12(th.eps_m_bound),
                th.specialized_d.map(|d| d.to_string()).unwrap_or_default(),
                th.specialized_eps_a.map(g12).unwrap_or_default(),
                th.prefactor_ratio().map(g12).unwrap_or_default(),
            ]),
            Err(e) => {
                log::warn!("N = {n}: {e}");
                row.extend(std::iter::repeat_n(String::new(), 6));
            }
        }
        tab.row(row)?;
    }
    tab.finish()?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_censoring_table(out: Option<&Path>, trials: usize, seed: u64) -> AnyResult<ExitCode> {
    let cells = run_censoring_table(&TableOptions { trials, seed, ..TableOptions::default() })?;
    let mut t = Table::new(out, "censoring-table", &["measure", "censorship", "expected", "observed", "match", "evidence"])?;
    let word = |b: bool| if b { "holds" } else { "fails" };
    for c in &cells {
        t.row([
            c.measure.name(),
            c.censorship.name(),
            word(c.expected_holds),
            word(c.observed_holds),
            if c.matches() { "yes" } else { "no" },
            c.evidence.as_str(),
        ])?;
    }
    t.finish()?;
    let bad: Vec<_> = cells.iter().filter(|c| !c.matches()).collect();
    for c in &bad {
        eprintln!("{c}");
    }
    Ok(if bad.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_pigment(out: Option<&Path>, source: &Source, start: usize, d: usize) -> AnyResult<ExitCode> {
    let archs = source.resolve()?;
    let mut t = Table::new(out, "pigment", &["builder", "N", "step", "site", "amount_fraction", "amount_float"])?;
    for a in archs {
        let n = a.arch.n_sites();
        if start >= n {
            return Err(format!("--start {start} out of range for {n} sites").into());
        }
        let arch = a.arch.with_repeat(d * a.arch.repeat())?;
        for (step, state) in trajectory(&arch, &PigmentState::unit(n, start))? {
            for (site, (r, f)) in state.amounts.iter().zip(state.as_f64()).enumerate() {
                t.row([a.label.clone(), n.to_string(), step.to_string(), site.to_string(), r.to_string(), g12(f)])?;
            }
        }
    }
    t.finish()?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_graphgap(out: Option<&Path>, lol: Option<usize>, ks: Span, graph: Option<&Path>, q: usize) -> AnyResult<ExitCode> {
    let rows: Vec<GraphGapRow> = match (lol, graph) {
        (_, Some(p)) => {
            let g = SiteGraph::parse(&fs::read_to_string(p)?)?;
            vec![GraphGapRow::new(&p.display().to_string(), &g, 0, graph_gap(&g, q)?.gap)]
        }
        (Some(n), None) => {
            let p = path(n)?;
            let mut rows = vec![GraphGapRow::new("path", &p, 0, graph_gap(&p, q)?.gap)];
            let lol: Vec<AnyResult<GraphGapRow>> = ks
                .values()
                .into_par_iter()
                .map(|k| {
                    let g = lollipop(n, k)?;
                    Ok(GraphGapRow::new("lollipop", &g, k, graph_gap(&g, q)?.gap))
                })
                .collect();
            for r in lol {
                rows.push(r?);
            }
            rows
        }
        (None, None) => return Err("either --lollipop or --graph is required".into()),
    };
    let mut t = Table::new(out, "graphgap", &["graph", "n", "k", "edges", "gap_raw", "gap_normalized"])?;
    for r in rows {
        t.row([r.graph, r.n.to_string(), r.k.to_string(), r.edges.to_string(), g12(r.gap_raw), g12(r.gap_normalized)])?;
    }
    t.finish()?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_search(out: Option<&Path>, cfg: &SearchConfig) -> AnyResult<ExitCode> {
    let report = scan(cfg)?;
    let mut w = output::open(out)?;
    for v in &report.violations {
        writeln!(w, "{}", v.to_json_line())?;
    }
    w.flush()?;
    log::info!(
        "{} candidates, {} comparisons, {} skipped, {} errors, {} violations",
        report.candidates,
        report.comparisons,
        report.skipped,
        report.errors,
        report.violations.len()
    );
    Ok(ExitCode::SUCCESS)
}
