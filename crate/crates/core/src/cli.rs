//! Command-line front end. [`dispatch`] maps argv to an exit code:
//! 0 success, 1 usage error, 2 data error, 3 backend error.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::chain::{Chain, ChainError, ChainStream};
use crate::fsutil::write_string_atomic;
use crate::gateway::{Backend, BackendConfig, BackendKind};
use crate::metrics::{
    difference_matrix, periodicity_degree, series_csv, similarity_to_origin_series, Granularity,
    MetricsError,
};
use crate::perturbation::{perturb, Lexicon, PerturbMethod, PerturbSpec, DEFAULT_RATE};
use crate::runner::{chain_seed, manifest_path_for, run_batch, RunConfig, RunError};
use crate::signals::{
    conditional_perplexity, diversity_series, diversity_series_with, perplexity_series, SignalError, CORPUS_PPL_STD,
    FORWARD_PPL, REVERSE_PPL, VENDI,
};
use crate::sim::{
    build_space, homogenization_sim, low_ppl_affinity, measure_bound_params, pair_affinity, pair_clique_affinity,
    random_affinity, simulate_chain, uniform_affinity, verify_bound, BoundParams, HomogenizeConfig, InitialState,
    OperatorConfig, SimError, SyntheticSpace,
};

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    Backend(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Backend(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Backend(m) => m,
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

impl From<ChainError> for CliError {
    fn from(e: ChainError) -> Self {
        data(e)
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        data(e)
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        data(e)
    }
}

impl From<SignalError> for CliError {
    fn from(e: SignalError) -> Self {
        match e {
            SignalError::Scorer { .. } => CliError::Backend(e.to_string()),
            other => data(other),
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Backend { .. } => CliError::Backend(e.to_string()),
            RunError::Config(_) | RunError::Prompt(_) => CliError::Usage(e.to_string()),
            other => data(other),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "textcycle", version, about = "Attractor-cycle analysis for successive text transformation chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run transformation chains from a JSON config.
    Run(RunArgs),
    /// Compute metrics over recorded chains.
    Analyze(AnalyzeArgs),
    /// Drive the synthetic operator.
    Simulate(SimulateArgs),
    /// Check the periodicity lower bound by exact enumeration.
    VerifyBound(VerifyArgs),
    /// Perturb a text file line by line.
    Perturb(PerturbArgs),
    /// Markdown summary plus difference matrices.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BackendArg {
    Http,
    Mock,
}

#[derive(Args, Debug, Default)]
struct BackendArgs {
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long)]
    model: Option<String>,
}

impl BackendArgs {
    /// Flags override the config's backend section.
    fn resolve(&self, base: Option<BackendConfig>) -> Option<BackendConfig> {
        if self.backend.is_none() && self.base_url.is_none() && base.is_none() {
            return None;
        }
        let mut cfg = base.unwrap_or_default();
        match self.backend {
            Some(BackendArg::Http) => cfg.kind = BackendKind::Http,
            Some(BackendArg::Mock) => cfg.kind = BackendKind::Mock,
            None if self.base_url.is_some() => cfg.kind = BackendKind::Http,
            None => {}
        }
        if let Some(url) = &self.base_url {
            cfg.base_url = Some(url.clone());
        }
        if let Some(m) = &self.model {
            cfg.model = m.clone();
        }
        Some(cfg)
    }
}

fn build_backend(cfg: &BackendConfig) -> CliResult<Box<dyn Backend>> {
    cfg.build().map_err(|e| CliError::Usage(e.to_string()))
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// One source text per nonempty line.
    #[arg(long)]
    sources: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long = "in", required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Periodicity degree for period K; repeatable.
    #[arg(long = "tau", value_name = "K")]
    tau: Vec<usize>,
    #[arg(long, value_enum, default_value = "char")]
    granularity: GranularityArg,
    #[arg(long)]
    matrix: bool,
    /// Lag-distance series for every requested K.
    #[arg(long)]
    lag: bool,
    /// Cosine similarity of each step to the origin.
    #[arg(long)]
    similarity: bool,
    #[arg(long)]
    ppl: bool,
    #[arg(long)]
    vendi: bool,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GranularityArg {
    Char,
    Word,
}

impl From<GranularityArg> for Granularity {
    fn from(g: GranularityArg) -> Self {
        match g {
            GranularityArg::Char => Granularity::Char,
            GranularityArg::Word => Granularity::Word,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AffinityArg {
    Uniform,
    Random,
    Pair,
    PairClique,
    LowPpl,
}

#[derive(Args, Debug)]
struct SpaceArgs {
    #[arg(long, default_value_t = 40)]
    n_states: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "random")]
    affinity: AffinityArg,
    /// `inf` selects the affinity argmax.
    #[arg(long, default_value_t = 1.5)]
    beta_logit: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 2.0)]
    eta: f64,
    #[arg(long, default_value_t = 0.01)]
    delta_min: f64,
    #[arg(long)]
    history: bool,
    /// Scale of the low-perplexity affinity.
    #[arg(long, default_value_t = 10.0)]
    ppl_scale: f64,
}

impl SpaceArgs {
    fn build(&self) -> CliResult<(SyntheticSpace, OperatorConfig)> {
        let space = build_space(self.n_states, self.dim, self.seed)?;
        let n = space.len();
        let affinity = match self.affinity {
            AffinityArg::Uniform => uniform_affinity(n),
            AffinityArg::Random => random_affinity(n, self.seed),
            AffinityArg::Pair => pair_affinity(n),
            AffinityArg::PairClique => pair_clique_affinity(n),
            AffinityArg::LowPpl => low_ppl_affinity(&space, self.ppl_scale),
        };
        let op = OperatorConfig {
            beta_logit: self.beta_logit,
            lambda: self.lambda,
            eta: self.eta,
            delta_min: self.delta_min,
            history_mode: self.history,
            base_affinity: affinity,
            seed: self.seed,
        };
        op.validate(&space)?;
        Ok((space, op))
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    space: SpaceArgs,
    #[arg(long, default_value_t = 15)]
    rounds: usize,
    #[arg(long, default_value_t = 1)]
    replicates: usize,
    /// Initial state; random per replicate when absent.
    #[arg(long)]
    s0: Option<usize>,
    /// Also run the corpus homogenization protocol for this many steps.
    #[arg(long)]
    homogenize_steps: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    corpus_size: usize,
    #[arg(long, default_value_t = 100)]
    paraphrase_per_step: usize,
    #[arg(long, default_value_t = 100)]
    add_per_step: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    space: SpaceArgs,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    #[arg(long, default_value_t = 0.25)]
    epsilon: f64,
    /// Step index i of the bound.
    #[arg(long, default_value_t = 6)]
    step: usize,
    /// Fixed initial state instead of a uniform one.
    #[arg(long)]
    s0: Option<usize>,
    /// Fill missing alpha, beta and k from an exact measurement.
    #[arg(long)]
    measure: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PerturbArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    method: PerturbMethod,
    #[arg(long, default_value_t = DEFAULT_RATE)]
    rate: f64,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long = "in", required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "tau", value_name = "K")]
    tau: Vec<usize>,
    #[arg(long, value_enum, default_value = "char")]
    granularity: GranularityArg,
}

/// Runs the CLI with process stdout/stderr.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    dispatch_with(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

pub fn dispatch_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{rendered}");
                    0
                }
                _ => {
                    let _ = write!(err, "{rendered}");
                    1
                }
            };
        }
    };
    let res = match cli.command {
        Command::Run(a) => cmd_run(a, err),
        Command::Analyze(a) => cmd_analyze(a, err),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::VerifyBound(a) => cmd_verify(a, out),
        Command::Perturb(a) => cmd_perturb(a, err),
        Command::Report(a) => cmd_report(a),
    };
    match res {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.code()
        }
    }
}

fn write_out(path: &Path, contents: &str) -> CliResult {
    write_string_atomic(path, contents).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| data(format!("{}: {e}", dir.display())))
}

fn pretty(value: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn cmd_run(args: RunArgs, err: &mut dyn Write) -> CliResult {
    let mut config = RunConfig::load(&args.config).map_err(|e| CliError::Usage(e.to_string()))?;
    if args.seed.is_some() {
        config.seed = args.seed;
    }
    let backend_cfg = args.backend.resolve(config.backend.clone()).unwrap_or_default();
    if let Some(m) = &args.backend.model {
        config.model_ids = vec![m.clone()];
    }
    config.backend = Some(backend_cfg.clone());
    let backend = build_backend(&backend_cfg)?;
    let text = std::fs::read_to_string(&args.sources).map_err(|e| data(format!("{}: {e}", args.sources.display())))?;
    let sources: Vec<String> = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
    let outcome = run_batch(&sources, &config, backend.as_ref())?;
    for (idx, e) in &outcome.failures {
        let _ = writeln!(err, "source {idx}: {e}");
    }
    for t in &outcome.manifest.truncated {
        let _ = writeln!(err, "{}: truncated after step {}: {}", t.chain_id, t.completed_steps, t.reason);
    }
    if outcome.chains.is_empty() {
        return Err(match outcome.failures.into_iter().next() {
            Some((_, e)) => CliError::from(e),
            None => data("no chains produced"),
        });
    }
    outcome.save(&args.out)?;
    let _ = writeln!(
        err,
        "wrote {} chains to {} and {}",
        outcome.chains.len(),
        args.out.display(),
        manifest_path_for(&args.out).display()
    );
    Ok(())
}

fn chain_stem(chain: &Chain) -> String {
    format!("{}-{}", chain.run_id, chain.chain_id)
}

fn each_chain(inputs: &[PathBuf], mut f: impl FnMut(Chain) -> CliResult) -> CliResult {
    for path in inputs {
        for chain in ChainStream::open(path)? {
            f(chain?)?;
        }
    }
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs, err: &mut dyn Write) -> CliResult {
    if !(args.matrix || args.lag || args.similarity || args.ppl || args.vendi || !args.tau.is_empty()) {
        return Err(CliError::Usage(
            "select at least one metric: --matrix, --tau K, --lag, --similarity, --ppl, --vendi".into(),
        ));
    }
    if args.tau.contains(&0) {
        return Err(CliError::Usage("--tau values must be >= 1".into()));
    }
    if args.lag && args.tau.is_empty() {
        return Err(CliError::Usage("--lag needs at least one --tau K".into()));
    }
    let granularity: Granularity = args.granularity.into();
    let backend_cfg = args.backend.resolve(None);
    let backend = backend_cfg.as_ref().map(build_backend).transpose()?;
    if args.ppl && backend.is_none() {
        return Err(CliError::Usage("--ppl needs a scoring backend (--backend)".into()));
    }
    let model = backend_cfg.as_ref().map(|c| c.model.clone()).unwrap_or_default();
    let library = crate::runner::PromptLibrary::default();
    create_dir(&args.out)?;

    let mut tau_rows = Vec::new();
    let mut ppl_rows = Vec::new();
    each_chain(&args.inputs, |chain| {
        let stem = chain_stem(&chain);
        if args.matrix {
            let m = difference_matrix(&chain, granularity)?;
            write_out(&args.out.join(format!("{stem}.matrix.csv")), &m.to_csv())?;
        }
        for &k in &args.tau {
            match periodicity_degree(&chain, k, granularity) {
                Ok(r) => {
                    tau_rows.push(json!({
                        "run_id": chain.run_id,
                        "chain_id": chain.chain_id,
                        "k": r.k,
                        "tau": r.tau,
                        "granularity": r.granularity,
                        "per_pair": r.per_pair,
                    }));
                    if args.lag {
                        write_out(&args.out.join(format!("{stem}.lag{k}.csv")), &series_csv(&r.per_pair))?;
                    }
                }
                Err(e @ MetricsError::TooShort { .. }) => {
                    let _ = writeln!(err, "{stem}: {e}; skipped");
                }
                Err(e) => return Err(e.into()),
            }
        }
        if args.similarity {
            let s = similarity_to_origin_series(&chain).map_err(|e| data(format!("{stem}: {e}")))?;
            write_out(&args.out.join(format!("{stem}.similarity.csv")), &series_csv(&s))?;
        }
        if args.ppl {
            let scorer = backend.as_deref().expect("checked above");
            let s = perplexity_series(&chain, scorer, &model, &library)?;
            write_out(&args.out.join(format!("{stem}.{FORWARD_PPL}.csv")), &series_csv(&s.forward))?;
            write_out(&args.out.join(format!("{stem}.{REVERSE_PPL}.csv")), &series_csv(&s.reverse))?;
            ppl_rows.push(json!({
                "run_id": chain.run_id,
                "chain_id": chain.chain_id,
                "alpha_estimate": s.alpha_estimate,
            }));
        }
        if args.vendi {
            let s = match backend.as_deref() {
                Some(b) => diversity_series_with(&chain, b, &model),
                None => diversity_series(&chain),
            }
            .map_err(|e| data(format!("{stem}: {e}")))?;
            write_out(&args.out.join(format!("{stem}.{VENDI}.csv")), &series_csv(&s))?;
        }
        Ok(())
    })?;
    if !args.tau.is_empty() {
        write_out(&args.out.join("tau.json"), &pretty(&tau_rows))?;
    }
    if args.ppl {
        write_out(&args.out.join("ppl.json"), &pretty(&ppl_rows))?;
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs, out: &mut dyn Write) -> CliResult {
    let (space, op) = args.space.build()?;
    if args.replicates == 0 {
        return Err(CliError::Usage("--replicates must be >= 1".into()));
    }
    create_dir(&args.out)?;
    let mut summary = Vec::new();
    for r in 0..args.replicates {
        let seed = chain_seed(args.space.seed, r);
        let s0 = args.s0.unwrap_or((seed % space.len() as u64) as usize);
        let chain = simulate_chain(&space, &op.with_seed(seed), s0, args.rounds)?;
        write_out(&args.out.join(format!("chain-{r:04}.csv")), &chain.to_csv())?;
        let tau = |k| chain.tau(&space, k).ok();
        summary.push(json!({
            "replicate": r,
            "seed": seed,
            "s0": s0,
            "tau2": tau(2),
            "tau3": tau(3),
        }));
    }
    let mut report = json!({ "space": { "n_states": space.len(), "dim": space.dim() }, "operator": &op, "chains": summary });
    if let Some(steps) = args.homogenize_steps {
        let cfg = HomogenizeConfig {
            corpus_size: args.corpus_size,
            paraphrase_per_step: args.paraphrase_per_step,
            add_per_step: args.add_per_step,
            steps,
            seed: args.space.seed,
            ..HomogenizeConfig::default()
        };
        let h = homogenization_sim(&space, &op, &cfg)?;
        let series: Vec<(usize, f64)> = h.std_series.iter().copied().enumerate().collect();
        write_out(&args.out.join(format!("{CORPUS_PPL_STD}.csv")), &series_csv(&series))?;
        report["homogenization"] = json!({ "config": cfg, "std_series": h.std_series });
    }
    // the operator's affinity matrix is bulky; keep the summary readable
    report["operator"]["base_affinity"] = json!(format!("{:?}", args.space.affinity));
    let text = pretty(&report);
    write_out(&args.out.join("summary.json"), &text)?;
    let _ = writeln!(out, "wrote {} chain(s) to {}", args.replicates, args.out.display());
    Ok(())
}

fn cmd_verify(args: VerifyArgs, out: &mut dyn Write) -> CliResult {
    let (space, op) = args.space.build()?;
    let initial = args.s0.map_or(InitialState::Uniform, InitialState::Fixed);
    let measured = if args.measure {
        Some(measure_bound_params(&space, &op, args.step, initial)?)
    } else {
        None
    };
    let pick = |given: Option<f64>, name: &str, m: Option<f64>| {
        given
            .or(m)
            .ok_or_else(|| CliError::Usage(format!("--{name} is required unless --measure is given")))
    };
    let alpha = pick(args.alpha, "alpha", measured.map(|m| m.alpha))?;
    let params = BoundParams {
        alpha,
        beta: pick(args.beta, "beta", measured.map(|m| m.reverse.max(alpha)))?,
        theta: args.theta,
        k_slope: pick(args.k, "k", measured.map(|m| m.k_slope))?,
        epsilon: args.epsilon,
    };
    params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let report = verify_bound(&space, &op, args.step, params, initial)?;
    let text = pretty(&report);
    if let Some(path) = &args.out {
        write_out(path, &text)?;
    }
    let _ = out.write_all(text.as_bytes());
    Ok(())
}

fn cmd_perturb(args: PerturbArgs, err: &mut dyn Write) -> CliResult {
    let lexicon = args
        .lexicon
        .as_deref()
        .map(Lexicon::load)
        .transpose()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let spec = PerturbSpec::new(args.method, args.rate, lexicon, args.seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let text = std::fs::read_to_string(&args.input).map_err(|e| data(format!("{}: {e}", args.input.display())))?;
    let mut result = String::with_capacity(text.len());
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            result.push_str(line);
        } else {
            let o = perturb(line, &spec.with_seed(chain_seed(args.seed, idx))).map_err(|e| data(format!("line {}: {e}", idx + 1)))?;
            if let Some(w) = o.warning {
                let _ = writeln!(err, "line {}: {w}", idx + 1);
            }
            result.push_str(&o.text);
        }
        result.push('\n');
    }
    write_out(&args.out, &result)
}

/// Forward perplexity of each step from the logprobs stored on its
/// selected candidate.
fn stored_forward_ppl(chain: &Chain) -> Vec<(usize, f64)> {
    chain.steps[1..]
        .iter()
        .filter_map(|s| {
            let c = s.candidates.get(s.selected_index?)?;
            let ppl = conditional_perplexity(c.token_logprobs.as_deref()?).ok()?;
            Some((s.step, ppl))
        })
        .collect()
}

fn cmd_report(args: ReportArgs) -> CliResult {
    let granularity: Granularity = args.granularity.into();
    let ks = if args.tau.is_empty() { vec![2] } else { args.tau.clone() };
    if ks.contains(&0) {
        return Err(CliError::Usage("--tau values must be >= 1".into()));
    }
    create_dir(&args.out)?;
    let mut md = String::from("# Chain report\n\n");
    let _ = writeln!(md, "Granularity: {}\n", granularity.as_str());
    let mut header = String::from("| run | chain | task | M |");
    let mut rule = String::from("|---|---|---|---|");
    for k in &ks {
        let _ = write!(header, " tau_{k} |");
        rule.push_str("---|");
    }
    header.push_str(" ppl first | ppl last | delta |");
    rule.push_str("---|---|---|");
    let _ = writeln!(md, "{header}\n{rule}");
    let mut count = 0;
    each_chain(&args.inputs, |chain| {
        count += 1;
        let m = difference_matrix(&chain, granularity)?;
        write_out(&args.out.join(format!("{}.matrix.csv", chain_stem(&chain))), &m.to_csv())?;
        let _ = write!(md, "| {} | {} | {} | {} |", chain.run_id, chain.chain_id, chain.task.as_str(), chain.rounds());
        for &k in &ks {
            match periodicity_degree(&chain, k, granularity) {
                Ok(r) => {
                    let _ = write!(md, " {:.4} |", r.tau);
                }
                Err(_) => md.push_str(" n/a |"),
            }
        }
        let ppl = stored_forward_ppl(&chain);
        match (ppl.first(), ppl.last()) {
            (Some(&(_, a)), Some(&(_, b))) => {
                let _ = write!(md, " {a:.4} | {b:.4} | {:+.4} |", b - a);
            }
            _ => md.push_str(" n/a | n/a | n/a |"),
        }
        md.push('\n');
        Ok(())
    })?;
    let _ = writeln!(md, "\n{count} chain(s). Difference matrices are written next to this file as `<run>-<chain>.matrix.csv`.");
    write_out(&args.out.join("report.md"), &md)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let mut argv = vec!["textcycle"];
        argv.extend_from_slice(args);
        let code = dispatch_with(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn no_arguments_is_a_usage_error() {
        let (code, _, err) = run(&[]);
        assert_eq!(code, 1);
        assert!(err.contains("Usage"));
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        assert_eq!(run(&["analyze", "--bogus"]).0, 1);
    }

    #[test]
    fn verify_bound_prints_rhs() {
        let (code, out, err) = run(&[
            "verify-bound", "--alpha", "0.05", "--k", "1", "--beta", "0.10", "--theta", "0.5", "--n-states", "6", "--dim",
            "3", "--step", "2", "--affinity", "pair", "--beta-logit", "inf",
        ]);
        assert_eq!(code, 0, "{err}");
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!((v["rhs"].as_f64().unwrap() - 0.855).abs() < 1e-12);
        assert_eq!(v["lhs"].as_f64().unwrap(), 1.0);
    }

    #[test]
    fn verify_bound_without_params_needs_measure() {
        assert_eq!(run(&["verify-bound", "--n-states", "6"]).0, 1);
    }

    #[test]
    fn missing_input_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("o");
        let (code, _, _) = run(&["analyze", "--in", "/nonexistent.jsonl", "--out", out.to_str().unwrap(), "--matrix"]);
        assert_eq!(code, 2);
    }
}
