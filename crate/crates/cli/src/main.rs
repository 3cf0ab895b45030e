use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gzoo::experiment::{cmd_audit, cmd_bench, cmd_plan, cmd_run, Settings, EXIT_BAD_PARAMS};

#[derive(Parser)]
#[command(name = "gzoo", version, about = "Gradient-free optimization of nonsmooth stochastic objectives")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a planned configuration and its predicted oracle calls
    Plan(Flags),
    /// Run one optimizer and write the trace CSV
    Run(Flags),
    /// Run the estimator audits and write a JSON report
    Audit(Flags),
    /// Compare GFM+ against GFM at a matched budget over several seeds
    Bench(Flags),
}

#[derive(Args)]
struct Flags {
    /// svm <path> | svm-synthetic <n> <d> [seed] | scaled-l1 <d> [L] | probe-linear [c] |
    /// probe-quadratic [d] | constant <d> [value] | external <command>
    #[arg(long)]
    problem: Option<String>,
    /// gfm | gfm-plus | ws-gfm | ws-gfm-plus
    #[arg(long)]
    algo: Option<String>,
    /// Smoothing radius
    #[arg(long)]
    delta: Option<f64>,
    /// Target stationarity level
    #[arg(long)]
    epsilon: Option<f64>,
    /// Lipschitz constant, or "auto"
    #[arg(long)]
    lipschitz: Option<String>,
    /// Initial gap f(x0) - inf f
    #[arg(long = "delta-f")]
    delta_f: Option<f64>,
    /// Smoothness constant in c sqrt(d) L / delta (default 1)
    #[arg(long)]
    c: Option<f64>,
    /// Step size; with --T, skips automatic planning
    #[arg(long)]
    eta: Option<f64>,
    /// Iterations
    #[arg(long = "T")]
    t: Option<usize>,
    /// Epoch length (GFM+)
    #[arg(long)]
    m: Option<usize>,
    /// Inner mini-batch size (GFM+)
    #[arg(long)]
    b: Option<usize>,
    /// Epoch-start mini-batch size (GFM+)
    #[arg(long = "b-prime")]
    b_prime: Option<usize>,
    /// Warm-start step size
    #[arg(long = "warm-eta")]
    warm_eta: Option<f64>,
    /// Warm-start iterations
    #[arg(long = "warm-T")]
    warm_t: Option<usize>,
    /// Warm-start smoothing radius
    #[arg(long = "warm-delta")]
    warm_delta: Option<f64>,
    /// Base seed (default 0)
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; the summary goes to stdout when set
    #[arg(long)]
    out: Option<PathBuf>,
    /// Checkpoint spacing in iterations
    #[arg(long = "checkpoint-every")]
    checkpoint_every: Option<usize>,
    /// Monte-Carlo samples per checkpoint or audit
    #[arg(long)]
    samples: Option<usize>,
    /// Initial point: comma-separated, or one value for every coordinate
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    /// Radius on which probe-quadratic reports its Lipschitz constant
    #[arg(long)]
    radius: Option<f64>,
    /// Seeds compared by bench
    #[arg(long = "n-seeds")]
    n_seeds: Option<usize>,
    /// Objective level for calls-to-target (bench)
    #[arg(long, allow_hyphen_values = true)]
    target: Option<f64>,
    /// GFM step size in bench (default: the GFM+ step size)
    #[arg(long = "gfm-eta")]
    gfm_eta: Option<f64>,
    /// key = value file; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Flags {
    fn into_settings(self) -> Result<Settings, gzoo::Error> {
        let file = match &self.config {
            Some(path) => Settings::load_config(path)?,
            None => Settings::default(),
        };
        let flags = Settings {
            problem: self.problem,
            algo: self.algo,
            delta: self.delta,
            epsilon: self.epsilon,
            lipschitz: self.lipschitz,
            delta_f: self.delta_f,
            c: self.c,
            eta: self.eta,
            t: self.t,
            m: self.m,
            b: self.b,
            b_prime: self.b_prime,
            warm_eta: self.warm_eta,
            warm_t: self.warm_t,
            warm_delta: self.warm_delta,
            seed: self.seed,
            out: self.out,
            checkpoint_every: self.checkpoint_every,
            samples: self.samples,
            x0: self.x0,
            radius: self.radius,
            n_seeds: self.n_seeds,
            target: self.target,
            gfm_eta: self.gfm_eta,
        };
        Ok(flags.or(file))
    }
}

type Handler = fn(&Settings, &mut dyn Write, &mut dyn Write) -> i32;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, flags): (Handler, Flags) = match cli.command {
        Command::Plan(f) => (cmd_plan, f),
        Command::Run(f) => (cmd_run, f),
        Command::Audit(f) => (cmd_audit, f),
        Command::Bench(f) => (cmd_bench, f),
    };
    let mut stderr = io::stderr().lock();
    let settings = match flags.into_settings() {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return ExitCode::from(EXIT_BAD_PARAMS as u8);
        }
    };
    let mut stdout = io::stdout().lock();
    let code = command(&settings, &mut stdout, &mut stderr);
    let _ = stdout.flush();
    ExitCode::from(code as u8)
}
