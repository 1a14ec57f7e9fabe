mod commands;
mod report;

use canon_core::C64;
use clap::{Args, Parser, Subcommand};
use report::{Format, Session};
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "canon", version, about = "Direct and inverse spectral problems for 2×2 canonical systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Args, Clone, Debug)]
pub struct Opts {
    /// Hamiltonian JSON
    #[arg(long = "h", value_name = "FILE", global = true)]
    pub h: Option<PathBuf>,
    /// HB polynomial JSON {theta_plus, theta_minus}
    #[arg(long = "e", value_name = "FILE", global = true)]
    pub e: Option<PathBuf>,
    /// Atomic measure JSON {"atoms": [{"t", "w"}]}
    #[arg(long, value_name = "FILE", global = true)]
    pub atoms: Option<PathBuf>,
    /// Regular HB spectral data JSON
    #[arg(long, value_name = "FILE", global = true)]
    pub spec: Option<PathBuf>,
    /// Subcommand-specific input JSON (reductions, Jacobi matrices, singular data)
    #[arg(long, value_name = "FILE", global = true)]
    pub input: Option<PathBuf>,
    /// Directory for outputs and report.json
    #[arg(long, value_name = "DIR", default_value = ".", global = true)]
    pub out: PathBuf,
    /// Format of tabular outputs. CSV columns are named in the header row.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    pub format: Format,
    /// Override the tolerance of every residual check
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Worker threads for sweeps over spectral points
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Reparametrize H so that tr H ≡ 1
    Normalize,
    /// Canonical system of a classical operator, from --input
    Reduce {
        #[command(subcommand)]
        kind: ReduceKind,
    },
    /// Rank-one chains and Jacobi matrices
    Jacobi {
        #[command(subcommand)]
        dir: JacobiCmd,
    },
    /// Transfer matrices, spectra and spectral measures of --h
    Direct {
        #[command(subcommand)]
        what: DirectCmd,
    },
    /// de Branges space of --e
    Debranges {
        #[command(subcommand)]
        what: DebrangesCmd,
    },
    /// Recover a Hamiltonian from spectral data
    Inverse {
        #[command(subcommand)]
        what: InverseCmd,
    },
    /// Weyl disks and m-functions on the semiaxis
    Weyl {
        #[command(subcommand)]
        what: WeylCmd,
    },
    /// Identity checks on built-in systems
    Selftest,
    /// Exponential type of E, exactly from --h or numerically
    Type {
        /// Slope of ln|E(iy)| instead of ∫√det H
        #[arg(long)]
        numeric: bool,
        #[arg(long, default_value_t = 200.0)]
        y_max: f64,
    },
}

#[derive(Subcommand)]
pub enum ReduceKind {
    /// {"q": [..], "h": f, "grid_n": n}: −y″ + qy = λy on (0, 1)
    Schrodinger,
    /// {"q": [[[a, b], [b, c]], ..], "length": f, "grid_n": n}: JX′ + QX = 0
    Dirac,
    /// String density, {"kind": "pieces", "pieces": [[l, ρ], ..]} or sampled
    String,
}

#[derive(Subcommand)]
pub enum JacobiCmd {
    /// Jacobi section of the rank-one chain --h
    To,
    /// Chain with the given seed whose Jacobi section is --input
    From {
        /// Angle of the first direction e₁
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        seed_angle: f64,
        /// Length of the first link
        #[arg(long, default_value_t = 1.0)]
        delta1: f64,
    },
}

#[derive(Subcommand)]
pub enum DirectCmd {
    /// M(x, z) at each z; columns z_re, z_im, m11_re, m11_im, .., m22_im
    Monodromy {
        /// Spectral point as re,im; repeat for several
        #[arg(long, value_parser = parse_complex, required = true, allow_hyphen_values = true)]
        z: Vec<C64>,
        /// Evaluation point; defaults to the right endpoint
        #[arg(long)]
        x: Option<f64>,
    },
    /// Eigenvalues for the boundary angle α; column lambda
    Spectrum {
        #[arg(long, value_parser = parse_angle, default_value = "pi/2", allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, num_args = 2, required = true, value_names = ["LO", "HI"], allow_negative_numbers = true)]
        window: Vec<f64>,
    },
    /// Spectral measure for the boundary angle α; columns t, w
    Measure {
        #[arg(long, value_parser = parse_angle, default_value = "pi/2", allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, num_args = 2, required = true, value_names = ["LO", "HI"], allow_negative_numbers = true)]
        window: Vec<f64>,
    },
}

#[derive(Subcommand)]
pub enum DebrangesCmd {
    /// Reproducing kernel K(λ, z)
    Kernel {
        #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
        lambda: C64,
        #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
        z: C64,
    },
    /// Second column (Φ₊, Φ₋) of the transfer matrix
    Phi,
    /// Length of the system with de Branges function E
    Length,
    /// Numerical exponential type of E
    Type {
        #[arg(long, default_value_t = 1e6)]
        y_max: f64,
    },
}

#[derive(Subcommand)]
pub enum InverseCmd {
    /// Rank-one chain with the HB polynomial --e as its de Branges function
    Poly,
    /// Hamiltonian with spectral measure --atoms
    Measure {
        /// Free coefficient d₁ of the Herglotz function
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        d1: f64,
    },
    /// Hamiltonian from regular HB data --spec
    Regular {
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 65)]
        grid_n: usize,
    },
}

#[derive(Subcommand)]
pub enum WeylCmd {
    /// Weyl disk D_X at z; columns x, center_re, center_im, radius
    Disk {
        #[arg(long)]
        x: f64,
        #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
        z: C64,
    },
    /// m(z) at each z, within --tol (default 1e-8); columns z_re, z_im, m_re,
    /// m_im. The disk trajectory goes to trajectory with columns z_re, z_im,
    /// x, center_re, center_im, radius.
    M {
        /// Spectral point as re,im or a+bi; repeat for several
        #[arg(long, value_parser = parse_complex, required = true, allow_hyphen_values = true)]
        z: Vec<C64>,
    },
    /// Im m(t + iε)/π on a uniform grid; columns t, density
    Density {
        #[arg(long, num_args = 2, required = true, value_names = ["LO", "HI"], allow_negative_numbers = true)]
        window: Vec<f64>,
        #[arg(long, default_value_t = 101)]
        points: usize,
        #[arg(long, default_value_t = 1e-2)]
        eps: f64,
    },
    /// Hamiltonian from a measure descriptor and a schedule, given either as
    /// two files or as {"measure", "schedule"} in --input
    Inverse {
        #[arg(long, value_name = "FILE", requires = "schedule")]
        measure: Option<PathBuf>,
        #[arg(long, value_name = "FILE", requires = "measure")]
        schedule: Option<PathBuf>,
    },
}

/// "re,im", "a+bi" or a real number.
fn parse_complex(s: &str) -> Result<C64, String> {
    let bad = || format!("bad complex number {s:?}");
    let parse = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
    if let Some((re, im)) = s.split_once(',') {
        return Ok(C64::new(parse(re)?, parse(im)?));
    }
    let Some(body) = s.trim().strip_suffix('i') else {
        return Ok(C64::new(parse(s)?, 0.0));
    };
    // The imaginary part starts at the last sign that is not an exponent sign.
    let split = body
        .char_indices()
        .filter(|&(k, c)| k > 0 && (c == '+' || c == '-') && !body[..k].ends_with(['e', 'E']))
        .map(|(k, _)| k)
        .next_back();
    let (re, im) = match split {
        Some(k) => (parse(&body[..k])?, &body[k..]),
        None => (0.0, body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        t => parse(t)?,
    };
    Ok(C64::new(re, im))
}

/// A number, or a multiple of π such as "pi", "-pi/4", "3pi/2".
fn parse_angle(s: &str) -> Result<f64, String> {
    if let Ok(x) = s.parse::<f64>() {
        return Ok(x);
    }
    let (num, den) = s.split_once('/').unwrap_or((s, "1"));
    let coeff = num.strip_suffix("pi").ok_or_else(|| format!("bad angle {s:?}"))?;
    let coeff = match coeff {
        "" => 1.0,
        "-" => -1.0,
        c => c.parse::<f64>().map_err(|_| format!("bad angle {s:?}"))?,
    };
    let den: f64 = den.parse().map_err(|_| format!("bad angle {s:?}"))?;
    Ok(coeff * std::f64::consts::PI / den)
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Invalid(String),
    Core(canon_core::Error),
    Gate(String),
    Io(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Invalid(_) => 3,
            Failure::Core(e) if e.is_validation() => 3,
            Failure::Core(_) | Failure::Gate(_) => 4,
            Failure::Io(_) => 1,
        }
    }

    pub fn status(&self) -> &'static str {
        match self.code() {
            2 => "usage error",
            3 => "validation error",
            4 => "numerical gate failed",
            _ => "i/o error",
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Invalid(m) | Failure::Gate(m) | Failure::Io(m) => f.write_str(m),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<canon_core::Error> for Failure {
    fn from(e: canon_core::Error) -> Self {
        Failure::Core(e)
    }
}

/// Clap's message without the usage and help hints.
fn usage_message(e: &clap::Error) -> String {
    let text = e.to_string();
    let lines: Vec<&str> = text
        .lines()
        .map(str::trim)
        .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
        .filter(|l| !l.is_empty())
        .collect();
    lines.join(" ").trim_start_matches("error: ").to_string()
}

/// Value of `--out` in raw arguments, for reports on usage errors.
fn raw_out(args: &[String]) -> PathBuf {
    args.iter()
        .position(|a| a == "--out")
        .and_then(|i| args.get(i + 1))
        .map(PathBuf::from)
        .or_else(|| args.iter().find_map(|a| a.strip_prefix("--out=").map(PathBuf::from)))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn main() -> ExitCode {
    report::init_logging();
    let args: Vec<String> = std::env::args().collect();
    let echo = args[1..].to_vec();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let session = Session::new(echo, raw_out(&args), Format::Json);
            let code = session.finish(&Err(Failure::Usage(usage_message(&e))));
            return ExitCode::from(code as u8);
        }
    };
    let mut session = Session::new(echo, cli.opts.out.clone(), cli.opts.format);
    let outcome = run(&cli, &mut session).and_then(|()| {
        let failed = session.failed_residuals();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(Failure::Gate(format!("checks failed: {}", failed.join(", "))))
        }
    });
    if let Err(e) = &outcome {
        eprintln!("error: {e}");
    }
    ExitCode::from(session.finish(&outcome) as u8)
}

fn run(cli: &Cli, s: &mut Session) -> Result<(), Failure> {
    let o = &cli.opts;
    if o.threads == Some(0) {
        return Err(Failure::Usage("--threads must be positive".into()));
    }
    if o.tol.is_some_and(|t| !(t > 0.0)) {
        return Err(Failure::Usage("--tol must be positive".into()));
    }
    match &cli.command {
        Command::Normalize => commands::normalize(o, s),
        Command::Reduce { kind } => commands::reduce(o, s, kind),
        Command::Jacobi { dir } => commands::jacobi(o, s, dir),
        Command::Direct { what } => commands::direct(o, s, what),
        Command::Debranges { what } => commands::debranges(o, s, what),
        Command::Inverse { what } => commands::inverse(o, s, what),
        Command::Weyl { what } => commands::weyl(o, s, what),
        Command::Selftest => commands::selftest(o, s),
        Command::Type { numeric, y_max } => commands::exp_type(o, s, *numeric, *y_max),
    }
}
