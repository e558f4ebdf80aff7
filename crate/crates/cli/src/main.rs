//! `panelahp` command-line entry point.
//!
//! Data goes to stdout (human tables, or JSON with `--json`); diagnostics go
//! to stderr. `--out` writes the machine-readable document to a file.
//! Exit status: 0 ok, 1 validation failure, 2 internal error.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use panelahp_core::delphi::DelphiError;
use panelahp_core::group::{assess_set, group_priorities, FilterOptions, GroupError};
use panelahp_core::hierarchy::{display, HierarchyError};
use panelahp_core::io::csv_import::{import_judgments, CsvError};
use panelahp_core::io::real::Real;
use panelahp_core::io::report::emit_report;
use panelahp_core::io::study::{emit_ri_table, load_study, save_study, write_atomic, Study, StudyError};
use panelahp_core::pipeline::{compute_synthesis, PipelineError};
use panelahp_core::priority::{Method, PriorityError, RandomIndexTable, MAX_RI_ORDER};
use panelahp_core::ri_mc::{estimate_random_index, estimate_table, RiError, RiEstimate};

#[derive(Parser)]
#[command(
    name = "panelahp",
    version,
    about = "Delphi shortlisting and group AHP weighting",
    after_help = "Settings given as flags override the study file's config, which overrides built-in defaults."
)]
struct Cli {
    /// Print JSON to stdout instead of tables.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and check a study file.
    Validate {
        study: PathBuf,
        /// Also check a CSV judgment file against the study.
        #[arg(long)]
        judgments: Option<PathBuf>,
    },
    /// Per-respondent weights and consistency for one node.
    Priorities {
        study: PathBuf,
        #[arg(long)]
        node: String,
        #[command(flatten)]
        opts: Overrides,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Screen respondents by CR and aggregate their priorities per node.
    Aggregate {
        study: PathBuf,
        #[command(flatten)]
        opts: Overrides,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Global scores, rankings and group means.
    Synthesize {
        study: PathBuf,
        #[command(flatten)]
        opts: Overrides,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge CSV judgments into a study file, replacing same-named respondents.
    Import {
        study: PathBuf,
        csv: PathBuf,
        /// Write the merged study here instead of in place.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo random index for one order or a whole table.
    RiEstimate {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// Single order; table orders n use seed + n instead.
        #[arg(long, conflicts_with = "max_order")]
        order: Option<usize>,
        #[arg(long, default_value_t = MAX_RI_ORDER)]
        max_order: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Delphi round control on a study file.
    #[command(subcommand)]
    Delphi(DelphiCommand),
    /// Host the study over HTTP.
    Serve {
        study: PathBuf,
        #[arg(long, env = "PANELAHP_BIND", default_value = "127.0.0.1:8080")]
        bind: String,
    },
}

#[derive(Subcommand)]
enum DelphiCommand {
    /// Open the next round.
    Open { study: PathBuf },
    /// Record one expert's selection in the open round.
    Vote {
        study: PathBuf,
        #[arg(long)]
        expert: String,
        /// Item ids, comma separated.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        select: Vec<String>,
        #[arg(long)]
        comment: Option<String>,
    },
    /// Close the open round and apply the retention rule.
    Close {
        study: PathBuf,
        #[arg(long)]
        fraction: Option<f64>,
    },
    /// Anonymous counts for the latest round and the result so far.
    Status { study: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Eigenvector,
    Geometric,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Eigenvector => Method::Eigenvector,
            MethodArg::Geometric => Method::GeometricRow,
        }
    }
}

#[derive(Args)]
struct Overrides {
    /// CR acceptance threshold [file config, else 0.12].
    #[arg(long)]
    threshold: Option<f64>,
    /// Priority derivation method [file config, else eigenvector].
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Keep a failing respondent's consistent matrices.
    #[arg(long)]
    salvage: bool,
}

impl Overrides {
    fn apply(&self, study: &Study) -> Result<FilterOptions> {
        let threshold = self.threshold.unwrap_or(study.config.threshold);
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(Invalid(format!("threshold must be positive, got {threshold}")).into());
        }
        Ok(FilterOptions {
            threshold,
            method: self.method.map(Method::from).unwrap_or(study.config.method),
            salvage: self.salvage || study.config.salvage,
        })
    }
}

/// A user-facing validation failure (exit 1).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Invalid(String);

fn is_validation(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<Invalid>()
            || c.is::<PipelineError>()
            || c.is::<GroupError>()
            || c.is::<HierarchyError>()
            || c.is::<DelphiError>()
            || c.is::<PriorityError>()
            || c.is::<RiError>()
            || c.downcast_ref::<StudyError>().is_some_and(|s| !matches!(s, StudyError::Io { .. }))
            || c.downcast_ref::<CsvError>().is_some_and(|s| !matches!(s, CsvError::Io(_)))
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage mistakes count as invalid input.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_validation(&e) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn load(path: &Path) -> Result<Study> {
    load_study(path).with_context(|| format!("loading {}", path.display()))
}

fn ri_for(study: &Study, path: &Path) -> Result<RandomIndexTable> {
    Ok(study.ri_table(path.parent())?)
}

/// Writes `doc` to `--out` and prints either JSON or `text`.
fn emit<T: Serialize>(json: bool, out: Option<&Path>, doc: &T, text: impl FnOnce() -> String) -> Result<()> {
    let rendered = serde_json::to_string_pretty(doc)? + "\n";
    if let Some(path) = out {
        write_atomic(path, &rendered).with_context(|| format!("writing {}", path.display()))?;
    }
    if json {
        print!("{rendered}");
    } else {
        print!("{}", text());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let json = cli.json;
    match cli.command {
        Command::Validate { study, judgments } => validate(&study, judgments.as_deref()),
        Command::Priorities { study, node, opts, out } => priorities(json, &study, &node, &opts, out.as_deref()),
        Command::Aggregate { study, opts, out } => aggregate(json, &study, &opts, out.as_deref()),
        Command::Synthesize { study, opts, out } => synthesize(json, &study, &opts, out.as_deref()),
        Command::Import { study, csv, out } => import(&study, &csv, out.as_deref()),
        Command::RiEstimate { seed, samples, order, max_order, out } => {
            ri_estimate(json, seed, samples, order, max_order, out.as_deref())
        }
        Command::Delphi(cmd) => delphi(json, cmd),
        Command::Serve { study, bind } => serve(&study, &bind),
    }
}

fn validate(path: &Path, judgments: Option<&Path>) -> Result<()> {
    let study = load(path)?;
    ri_for(&study, path)?;
    if let Some(csv) = judgments {
        let file = std::fs::File::open(csv).with_context(|| format!("opening {}", csv.display()))?;
        let sets = import_judgments(file, &study.hierarchy, study.scale())?;
        println!("{}: {} respondents", csv.display(), sets.len());
    }
    let h = &study.hierarchy;
    println!(
        "{}: ok ({} criteria, {} alternatives, {} pool items, {} panel members, {} rounds, {} judgment sets)",
        path.display(),
        h.criteria.len(),
        h.alternatives.len(),
        study.pool.len(),
        study.panel.len(),
        study.rounds.len(),
        study.judgments.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct RespondentPriorities {
    respondent_id: String,
    weights: BTreeMap<String, Real>,
    lambda_max: Real,
    ci: Real,
    ri: Real,
    cr: Real,
    accepted: bool,
}

#[derive(Serialize)]
struct PrioritiesDoc {
    node: String,
    method: Method,
    threshold: Real,
    respondents: Vec<RespondentPriorities>,
}

fn priorities(json: bool, path: &Path, node: &str, opts: &Overrides, out: Option<&Path>) -> Result<()> {
    let study = load(path)?;
    let Some(children) = study.hierarchy.children(node) else {
        return Err(Invalid(format!("unknown node `{node}`")).into());
    };
    let opts = opts.apply(&study)?;
    let ri = ri_for(&study, path)?;
    let mut respondents = Vec::new();
    for set in &study.judgments {
        if !set.matrices.contains_key(node) {
            continue;
        }
        let assessment = assess_set(set, opts.method, &ri, opts.threshold)?;
        let (w, c) = &assessment[node];
        respondents.push(RespondentPriorities {
            respondent_id: set.respondent_id.clone(),
            weights: w.iter().map(|(l, v)| (l.to_string(), Real(v))).collect(),
            lambda_max: Real(c.lambda_max),
            ci: Real(c.ci),
            ri: Real(c.ri),
            cr: Real(c.cr),
            accepted: c.accepted,
        });
    }
    if respondents.is_empty() {
        return Err(Invalid(format!("no judgments for node `{node}`")).into());
    }
    let doc = PrioritiesDoc {
        node: node.to_string(),
        method: opts.method,
        threshold: Real(opts.threshold),
        respondents,
    };
    emit(json, out, &doc, || {
        let mut s = String::new();
        let _ = write!(s, "{:<16}", "respondent");
        for c in children {
            let _ = write!(s, " {c:>10}");
        }
        let _ = writeln!(s, " {:>8} {:>6}  accepted", "lambda", "CR");
        for r in &doc.respondents {
            let _ = write!(s, "{:<16}", r.respondent_id);
            for c in children {
                let _ = write!(s, " {:>10}", display(r.weights[c].0));
            }
            let _ = writeln!(s, " {:>8} {:>6}  {}", display(r.lambda_max.0), display(r.cr.0), r.accepted);
        }
        s
    })
}

#[derive(Serialize)]
struct RejectedDoc {
    respondent_id: String,
    node: String,
    cr: Real,
}

#[derive(Serialize)]
struct AggregateDoc {
    threshold: Real,
    method: Method,
    total: usize,
    accepted: usize,
    rejected: Vec<RejectedDoc>,
    nodes: BTreeMap<String, BTreeMap<String, Real>>,
    contributors: BTreeMap<String, usize>,
}

fn aggregate(json: bool, path: &Path, opts: &Overrides, out: Option<&Path>) -> Result<()> {
    let study = load(path)?;
    if study.judgments.is_empty() {
        return Err(Invalid("the study has no judgment sets".into()).into());
    }
    let opts = opts.apply(&study)?;
    let ri = ri_for(&study, path)?;
    let g = group_priorities(&study.judgments, &ri, opts)?;
    let doc = AggregateDoc {
        threshold: Real(opts.threshold),
        method: opts.method,
        total: g.report.total,
        accepted: g.report.accepted,
        rejected: g
            .report
            .rejected
            .iter()
            .map(|r| RejectedDoc { respondent_id: r.respondent_id.clone(), node: r.node.clone(), cr: Real(r.cr) })
            .collect(),
        nodes: g
            .nodes
            .iter()
            .map(|(n, v)| (n.clone(), v.iter().map(|(l, w)| (l.to_string(), Real(w))).collect()))
            .collect(),
        contributors: g.contributors.clone(),
    };
    let rejected = g.report.total - g.report.accepted;
    eprintln!("accepted {} of {}, rejected {rejected}", g.report.accepted, g.report.total);
    emit(json, out, &doc, || {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "accepted {} of {} (CR <= {}), rejected {rejected}",
            doc.accepted,
            doc.total,
            display(doc.threshold.0)
        );
        for r in &doc.rejected {
            let _ = writeln!(s, "  rejected {} at {} (CR {})", r.respondent_id, r.node, display(r.cr.0));
        }
        for node in study.hierarchy.judgment_nodes() {
            let Some(v) = g.nodes.get(node) else { continue };
            let _ = writeln!(s, "\n{node} ({} respondents)", g.contributors[node]);
            for k in v.ranking() {
                let _ = writeln!(s, "  {:<32} {}", v.labels()[k], display(v.weights()[k]));
            }
        }
        s
    })
}

fn synthesize(json: bool, path: &Path, opts: &Overrides, out: Option<&Path>) -> Result<()> {
    let study = load(path)?;
    let opts = opts.apply(&study)?;
    let ri = ri_for(&study, path)?;
    let results = compute_synthesis(&study, &ri, opts)?;
    let report = emit_report(&results);
    emit(json, out, &report, || report.render_text())
}

fn import(path: &Path, csv: &Path, out: Option<&Path>) -> Result<()> {
    let mut study = load(path)?;
    let file = std::fs::File::open(csv).with_context(|| format!("opening {}", csv.display()))?;
    let sets = import_judgments(file, &study.hierarchy, study.scale())?;
    let count = sets.len();
    for set in sets {
        match study.judgments.iter_mut().find(|j| j.respondent_id == set.respondent_id) {
            Some(existing) => *existing = set,
            None => study.judgments.push(set),
        }
    }
    let target = out.unwrap_or(path);
    save_study(target, &study)?;
    eprintln!("imported {count} respondents into {}", target.display());
    Ok(())
}

#[derive(Serialize)]
struct RiDoc {
    seed: u64,
    samples: usize,
    estimates: Vec<RiEstimateDoc>,
}

#[derive(Serialize)]
struct RiEstimateDoc {
    n: usize,
    mean_ci: Real,
    std_error: Real,
    seed: u64,
}

impl From<&RiEstimate> for RiEstimateDoc {
    fn from(e: &RiEstimate) -> Self {
        Self { n: e.n, mean_ci: Real(e.mean_ci), std_error: Real(e.std_error), seed: e.seed }
    }
}

fn ri_estimate(
    json: bool,
    seed: u64,
    samples: usize,
    order: Option<usize>,
    max_order: usize,
    out: Option<&Path>,
) -> Result<()> {
    if let Some(n) = order {
        let e = estimate_random_index(n, samples, seed)?;
        let doc = RiDoc { seed, samples, estimates: vec![(&e).into()] };
        return emit(json, out, &doc, || {
            format!("RI({n}) = {} (std error {:.2e})\n", e.mean_ci, e.std_error)
        });
    }
    if max_order == 0 || max_order > MAX_RI_ORDER {
        bail!(Invalid(format!("--max-order must lie in 1..={MAX_RI_ORDER}")));
    }
    let (table, estimates) = estimate_table(max_order, samples, seed)?;
    // The file form is a table document usable as a study's `ri_table`.
    if let Some(path) = out {
        write_atomic(path, &(emit_ri_table(&table) + "\n"))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if json {
        let doc = RiDoc { seed, samples, estimates: estimates.iter().map(Into::into).collect() };
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        println!("{:>3}  {:>20}  {:>10}", "n", "RI", "std error");
        for (n, ri) in table.values().iter().enumerate() {
            let se = estimates.get(n).map_or(0.0, |e| e.std_error);
            println!("{:>3}  {:>20}  {:>10.2e}", n + 1, ri, se);
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct DelphiStatusDoc {
    round_number: usize,
    status: panelahp_core::delphi::RoundStatus,
    voters: usize,
    counts: BTreeMap<String, usize>,
    comments: Vec<String>,
    retained: Option<BTreeSet<String>>,
    converged: bool,
    history: Vec<BTreeSet<String>>,
}

fn delphi(json: bool, cmd: DelphiCommand) -> Result<()> {
    match cmd {
        DelphiCommand::Open { study: path } => {
            let mut study = load(&path)?;
            let mut d = study.delphi()?;
            let round = d.open_round()?.round_number;
            study.store_delphi(&d);
            save_study(&path, &study)?;
            eprintln!("opened round {round}");
            Ok(())
        }
        DelphiCommand::Vote { study: path, expert, select, comment } => {
            let mut study = load(&path)?;
            let mut d = study.delphi()?;
            d.record_vote(&expert, select.into_iter().collect(), comment)?;
            study.store_delphi(&d);
            save_study(&path, &study)?;
            Ok(())
        }
        DelphiCommand::Close { study: path, fraction } => {
            let mut study = load(&path)?;
            let mut d = study.delphi()?;
            let outcome = d.close_round_with(fraction.unwrap_or(study.config.retention_fraction))?;
            study.store_delphi(&d);
            save_study(&path, &study)?;
            eprintln!(
                "closed round {}: {} items retained{}",
                outcome.round_number,
                outcome.retained.len(),
                if outcome.converged { ", converged" } else { "" }
            );
            Ok(())
        }
        DelphiCommand::Status { study: path } => {
            let study = load(&path)?;
            let d = study.delphi()?;
            let Some(round) = d.current() else {
                return Err(Invalid("no round has been opened".into()).into());
            };
            let summary = round.summary(&d.pool);
            let result = d.result();
            let doc = DelphiStatusDoc {
                round_number: round.round_number,
                status: round.status,
                voters: summary.voters,
                counts: summary.counts,
                comments: summary.comments,
                retained: round.retained.clone(),
                converged: result.converged,
                history: result.history,
            };
            emit(json, None, &doc, || {
                let mut s = format!("round {} ({:?}), {} voters\n", doc.round_number, doc.status, doc.voters);
                let mut counts: Vec<_> = doc.counts.iter().collect();
                counts.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
                for (item, c) in counts {
                    let mark = if doc.retained.as_ref().is_some_and(|r| r.contains(item)) { "*" } else { " " };
                    let _ = writeln!(s, "{mark} {item:<32} {c}");
                }
                for c in &doc.comments {
                    let _ = writeln!(s, "  > {c}");
                }
                if doc.converged {
                    s.push_str("converged\n");
                }
                s
            })
        }
    }
}

fn serve(path: &Path, bind: &str) -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let study = load(path)?;
    let id = path.file_stem().map_or_else(|| "study".into(), |s| s.to_string_lossy().into_owned());
    let session = panelahp_service::Session::new(id, study, Some(path.to_path_buf()))?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener =
            tokio::net::TcpListener::bind(bind).await.with_context(|| format!("binding {bind}"))?;
        eprintln!("listening on {}", listener.local_addr()?);
        panelahp_service::serve(listener, session).await?;
        Ok(())
    })
}
