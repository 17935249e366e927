use std::fmt;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use cohten_core::array::GroundTruth;
use cohten_core::certificate::{certify_model, Certificate, Relation, DEFAULT_LAMBDA_FLOOR};
use cohten_core::coherence::{coherence_of_columns, coherence_report, ColumnSet, DEFAULT_DEPENDENCE_TOL};
use cohten_core::degeneracy::{demo_degeneracy, DslInstance};
use cohten_core::io;
use cohten_core::recovery::localize as run_localize;
use cohten_core::solver::{als_decompose, constrained_decompose, SolveTrace, SolverOptions};
use cohten_core::{CheckName, Error};

use crate::manifest::ManifestBuilder;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core(Error),
    Certificate(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Certificate(_) => 2,
            Failure::Core(e) if e.is_io() => 1,
            Failure::Core(Error::Infeasible { .. }) => 2,
            Failure::Core(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Certificate(m) => f.write_str(m),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn caps3(caps: &Option<Vec<f64>>, flag: &str) -> Result<Option<[f64; 3]>, Failure> {
    match caps.as_deref() {
        None => Ok(None),
        Some(&[a, b, c]) => Ok(Some([a, b, c])),
        Some(v) => Err(Failure::Usage(format!("{flag} takes three comma-separated values, got {}", v.len()))),
    }
}

fn write_out(path: Option<&Path>, text: &str, manifest: &mut ManifestBuilder) -> Result<(), Failure> {
    match path {
        Some(p) => {
            io::write_text(p, text)?;
            manifest.output(p);
        }
        None => print!("{text}"),
    }
    Ok(())
}

// synth ---------------------------------------------------------------------

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Scenario JSON.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Add white Gaussian noise at this signal-to-noise ratio.
    #[arg(long)]
    pub snr_db: Option<f64>,
    /// Measurement tensor (.ct3); stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Noiseless ground-truth model (.cpj).
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

pub fn synth(args: &SynthArgs, manifest: &mut ManifestBuilder) -> Result<(), Failure> {
    manifest.input(&args.config);
    let scn = io::read_scenario(&args.config)?.realize(args.seed)?;
    let (a, truth) = cohten_core::synthesize(&scn, args.snr_db, args.seed)?;
    write_out(args.out.as_deref(), &io::format_ct3(&a), manifest)?;
    if let Some(p) = &args.truth {
        io::write_cpj(p, &truth.model)?;
        manifest.output(p);
    }
    let (l, m, n) = a.dims();
    eprintln!(
        "synthesized {l}x{m}x{n} tensor, {} sources, mu = ({:.4}, {:.4}, {:.4})",
        truth.model.rank(),
        truth.mu[0],
        truth.mu[1],
        truth.mu[2]
    );
    Ok(())
}

// decompose -----------------------------------------------------------------

#[derive(Debug, Args, Serialize)]
pub struct DecomposeArgs {
    /// Input tensor (.ct3).
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub rank: usize,
    /// Per-mode coherence caps a,b,c.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub mu_caps: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,
    /// Relative residual change that ends a restart.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    /// Fitted model (.cpj); stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-iteration trace of the selected restart (.csv).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

fn write_trace(path: Option<&Path>, trace: &SolveTrace, manifest: &mut ManifestBuilder) -> Result<(), Failure> {
    if let Some(p) = path {
        io::write_text(p, &io::format_trace(trace)?)?;
        manifest.output(p);
    }
    Ok(())
}

pub fn decompose(args: &DecomposeArgs, manifest: &mut ManifestBuilder) -> Result<(), Failure> {
    manifest.input(&args.input);
    let a = io::read_ct3(&args.input)?;
    let mut opts = SolverOptions::new(args.rank)
        .with_seed(args.seed)
        .with_max_iter(args.max_iter)
        .with_restarts(args.restarts);
    opts.rel_tol = args.tol;
    let result = match caps3(&args.mu_caps, "--mu-caps")? {
        Some(caps) => constrained_decompose(&a, &opts.with_caps(caps)),
        None => als_decompose(&a, &opts),
    };
    let (model, trace) = match result {
        Ok(ok) => ok,
        Err(Error::Infeasible { restarts, residual, trace }) => {
            // keep the least-violating trajectory for inspection
            write_trace(args.trace.as_deref(), &trace, manifest)?;
            return Err(Error::Infeasible { restarts, residual, trace }.into());
        }
        Err(e) => return Err(e.into()),
    };
    for w in &trace.warnings {
        eprintln!("warning: {w}");
    }
    write_out(args.out.as_deref(), &io::format_cpj(&model)?, manifest)?;
    write_trace(args.trace.as_deref(), &trace, manifest)?;
    let last = trace.last();
    eprintln!(
        "status {:?} after {} iterations (restart {}), residual {:.6e}, max|lambda| {:.6e}, mu = ({:.4}, {:.4}, {:.4})",
        trace.status, last.iter, trace.restart, last.residual, last.lambda_max, last.mu_u, last.mu_v, last.mu_w
    );
    Ok(())
}

// certify -------------------------------------------------------------------

#[derive(Debug, Args, Serialize)]
pub struct CertifyArgs {
    /// Model file (.cpj).
    #[arg(long)]
    pub model: PathBuf,
    /// Relative singular-value tolerance for linear dependence.
    #[arg(long, default_value_t = DEFAULT_DEPENDENCE_TOL)]
    pub tol: f64,
    /// Weights at or below this modulus count as zero.
    #[arg(long, default_value_t = DEFAULT_LAMBDA_FLOOR)]
    pub lambda_floor: f64,
}

fn relation_symbol(r: Relation) -> &'static str {
    match r {
        Relation::AtLeast => ">=",
        Relation::Greater => ">",
        Relation::Less => "<",
    }
}

fn render_certificate(cert: &Certificate) -> String {
    let krank = |k: Option<usize>| k.map_or("-".to_string(), |k| k.to_string());
    let mut s = format!(
        "r = {}\nmu     U {:.6}  V {:.6}  W {:.6}\nkrank  U {}  V {}  W {}{}\n\n",
        cert.r,
        cert.mu_u,
        cert.mu_v,
        cert.mu_w,
        krank(cert.krank_u),
        krank(cert.krank_v),
        krank(cert.krank_w),
        if cert.krank_exact { "" } else { "  (coherence lower bounds)" }
    );
    s += &format!("{:<20} {:>14} {:>3} {:<14} {:<8} {:>14}\n", "check", "lhs", "", "rhs", "verdict", "margin");
    for c in &cert.checks {
        s += &format!(
            "{:<20} {:>14.6e} {:>3} {:<14.6e} {:<8} {:>14.6e}\n",
            c.name.as_str(),
            c.lhs,
            relation_symbol(c.relation),
            c.rhs,
            if c.holds { "holds" } else { "fails" },
            c.margin
        );
    }
    s += &format!(
        "\nlambda nonzero: {}\ncertified rank: {}\n",
        cert.lambda_nonzero,
        cert.certified_rank.map_or("none".to_string(), |r| r.to_string())
    );
    s
}

pub fn certify(args: &CertifyArgs, manifest: &mut ManifestBuilder) -> Result<(), Failure> {
    manifest.input(&args.model);
    let model = io::read_cpj(&args.model)?;
    let cert = certify_model(&model, args.tol, args.lambda_floor)?;
    print!("{}", render_certificate(&cert));
    if cert.holds(CheckName::CoherenceKruskal) {
        Ok(())
    } else {
        Err(Failure::Certificate("coherence_kruskal condition does not hold".into()))
    }
}

// localize ------------------------------------------------------------------

#[derive(Debug, Args, Serialize)]
pub struct LocalizeArgs {
    /// Fitted model (.cpj).
    #[arg(long)]
    pub model: PathBuf,
    /// Scenario JSON supplying geometry (and true directions).
    #[arg(long)]
    pub config: PathBuf,
    /// Ground-truth model from `synth --truth`, enables error metrics.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Report JSON; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn localize(args: &LocalizeArgs, manifest: &mut ManifestBuilder) -> Result<(), Failure> {
    manifest.input(&args.model);
    manifest.input(&args.config);
    let model = io::read_cpj(&args.model)?;
    let cfg = io::read_scenario(&args.config)?;
    let truth = match &args.truth {
        Some(p) => {
            manifest.input(p);
            let model = io::read_cpj(p)?;
            if model.rank() != cfg.sources.len() {
                return Err(Error::Dimension(format!(
                    "truth model has {} terms, scenario has {} sources",
                    model.rank(),
                    cfg.sources.len()
                ))
                .into());
            }
            let mu = [model.u(), model.v(), model.w()].map(coherence_of_columns);
            let directions = cfg.sources.iter().map(|s| s.direction).collect();
            Some(GroundTruth { model, mu, directions })
        }
        None => None,
    };
    let rep = run_localize(&model, &cfg.translations, cfg.omega, cfg.celerity, truth.as_ref())?;
    write_out(args.out.as_deref(), &(io::to_json(&rep)? + "\n"), manifest)?;
    for s in &rep.sources {
        let dir = s.direction.map_or("unresolved".to_string(), |d| format!("[{:.6}, {:.6}, {:.6}]", d[0], d[1], d[2]));
        let err = s.direction_error_deg.map_or(String::new(), |e| format!(", error {e:.4} deg"));
        let rho = s.rho.map_or(String::new(), |r| format!(", rho {r:.6}"));
        eprintln!("term {}: direction {dir}{err}{rho}", s.term);
    }
    Ok(())
}

// spark ---------------------------------------------------------------------

#[derive(Debug, Args, Serialize)]
pub struct SparkArgs {
    /// Column set (.cmx); columns are normalized first.
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long, default_value_t = DEFAULT_DEPENDENCE_TOL)]
    pub tol: f64,
}

pub fn spark(args: &SparkArgs, manifest: &mut ManifestBuilder) -> Result<(), Failure> {
    manifest.input(&args.matrix);
    let x = io::read_cmx(&args.matrix)?;
    let (m, r) = x.shape();
    let rep = coherence_report(&ColumnSet::normalized(x)?, args.tol)?;
    let witness = rep.witness.as_ref().map_or("none".to_string(), |w| format!("{w:?}"));
    println!(
        "columns  {m} x {r}\nmu       {:.16e}\nspark    {}\nkrank    {}\ngirth    {}\nwitness  {witness}",
        rep.mu, rep.spark, rep.krank, rep.girth
    );
    Ok(())
}

// demo-degeneracy -----------------------------------------------------------

#[derive(Debug, Args, Serialize)]
pub struct DemoArgs {
    /// Sequence indices n to tabulate.
    #[arg(long, value_delimiter = ',', num_args = 1, required = true)]
    pub n_list: Vec<u64>,
    /// Also fit the limit under these caps a,b,c.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub constrained_caps: Option<Vec<f64>>,
    /// Table (.csv); trajectories go next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5000)]
    pub max_iter: usize,
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}.csv"))
}

pub fn demo(args: &DemoArgs, manifest: &mut ManifestBuilder) -> Result<(), Failure> {
    let caps = caps3(&args.constrained_caps, "--constrained-caps")?;
    let inst = DslInstance::orthonormal(2)?;
    let opts = SolverOptions::new(2).with_seed(args.seed).with_max_iter(args.max_iter);
    let rep = demo_degeneracy(&inst, &args.n_list, &opts, caps)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &rep.rows {
        w.serialize(row).map_err(Error::from)?;
    }
    let table = String::from_utf8(w.into_inner().map_err(|e| Failure::Usage(e.to_string()))?)
        .expect("csv output is utf-8");
    write_out(Some(&args.out), &table, manifest)?;

    let (_, un) = &rep.unconstrained;
    write_trace(Some(&sibling(&args.out, "unconstrained")), un, manifest)?;
    eprintln!(
        "unconstrained: status {:?} after {} iterations, max|lambda| {:.4e}, residual {:.4e} (|A| = {:.4})",
        un.status,
        un.last().iter,
        un.last().lambda_max,
        un.final_residual(),
        rep.norm_limit
    );
    if let Some((_, ct)) = &rep.constrained {
        write_trace(Some(&sibling(&args.out, "constrained")), ct, manifest)?;
        eprintln!(
            "constrained: status {:?} after {} iterations, max|lambda| {:.4e}, residual {:.4e}",
            ct.status,
            ct.last().iter,
            ct.last().lambda_max,
            ct.final_residual()
        );
    }
    Ok(())
}
