use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use okproof::cli::{self, CliError, SweepConfig};
use okproof::energy_cert::{compare, compute_e2};
use okproof::morse::{morse_index, MorseMode, DEFAULT_MARGIN};
use okproof::okmodel::Model;
use okproof::solver::{self, Candidate, ContOptions, ContParam, Init, SolverOptions};
use okproof::validator::{Certificate, ProofOptions};

/// Symmetric periodic critical points of the Ohta-Kawasaki energy with
/// computer-assisted existence proofs.
///
/// Exit codes: 0 success, 1 proof or computation failed, 2 malformed input or
/// configuration, 3 integrity check failed. Group files are read from
/// OKPROOF_GROUP_DIR (default: the shipped data/groups).
#[derive(Parser)]
#[command(name = "okproof", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Param {
    M,
    Gamma,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Within,
    Fixed,
}

#[derive(Subcommand)]
enum Cmd {
    /// Search for a critical point by energy descent and Newton polish.
    Find {
        #[arg(long)]
        group: String,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        m: f64,
        #[arg(long, default_value_t = 12.0)]
        k_cut: f64,
        #[arg(long, default_value_t = 1.05)]
        nu: f64,
        /// Amplitude of the first-shell perturbation (0 gives the uniform state).
        #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
        amplitude: f64,
        /// Random seed; replaces the first-shell perturbation by random coefficients.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pseudo-arclength continuation of a candidate in m or gamma.
    Continue {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "m")]
        param: Param,
        #[arg(long, default_value_t = 0.01, allow_hyphen_values = true)]
        step: f64,
        #[arg(long, default_value_t = 200)]
        max_steps: usize,
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        lo: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        hi: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Existence proof around a candidate; writes a certificate.
    Prove {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1e-4)]
        r1_star: f64,
        #[arg(long)]
        r2_star: Option<f64>,
        #[arg(long)]
        strict_simple: bool,
        #[arg(long)]
        fixed_domain: bool,
        /// Also enclose the energy.
        #[arg(long)]
        energy: bool,
    },
    /// Energy enclosure of a proved certificate (written back into it).
    Energy {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Verify hashes and reproduce the proof first.
        #[arg(long)]
        recheck: bool,
    },
    /// Certified Morse index of a proved certificate.
    Morse {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "within")]
        mode: Mode,
        #[arg(long, default_value_t = DEFAULT_MARGIN)]
        margin: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify a certificate's hashes and reproduce its proof.
    Verify {
        #[arg(long = "in")]
        input: PathBuf,
        /// Accepted for symmetry with `energy`; verification always rechecks.
        #[arg(long)]
        recheck: bool,
    },
    /// Rigorous energy comparison of two certificates with energies.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Phase-diagram sweep: ranking CSV plus rigorous boundary brackets.
    Sweep {
        /// JSON configuration; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        boundaries: PathBuf,
    },
    /// Re-verify a boundary bracket from its serialized certificates.
    VerifyBoundary {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Sample the certified profile on an n^3 grid of its periodicity cell.
    ExportProfile {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 32)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn print(v: serde_json::Value) {
    println!("{v}");
}

fn run(cmd: Cmd) -> Result<i32, CliError> {
    match cmd {
        Cmd::Find { group, gamma, m, k_cut, nu, amplitude, seed, out } => {
            let g = cli::load_group(&group)?;
            let model = Model::new(gamma, m);
            let init = match seed {
                Some(seed) => Init::Random { seed, amplitude: amplitude.abs(), radius: 2.0 * gamma.sqrt() },
                None if amplitude == 0.0 => Init::Zero,
                None => Init::Perturbation(amplitude),
            };
            let c = solver::find(&g, &model, k_cut, nu, &init, &SolverOptions::default())?;
            cli::write_json(&out, &c)?;
            print(json!({"energy": c.energy, "energy_offset": c.energy_offset, "kappa": c.kappa, "residual": c.residual_norm}));
            Ok(0)
        }
        Cmd::Continue { input, param, step, max_steps, lo, hi, out } => {
            let c: Candidate = cli::read_json(&input)?;
            let g = cli::load_group(&c.group)?;
            let opts = ContOptions {
                param: match param {
                    Param::M => ContParam::M,
                    Param::Gamma => ContParam::Gamma,
                },
                step,
                min_step: 1e-7,
                max_step: step.abs(),
                max_steps,
                bounds: (lo, hi),
                solver: SolverOptions::default(),
            };
            let br = solver::continue_branch(&g, &c, &opts)?;
            cli::write_json(&out, &br)?;
            print(json!({"points": br.len()}));
            Ok(0)
        }
        Cmd::Prove { input, out, r1_star, r2_star, strict_simple, fixed_domain, energy } => {
            let c: Candidate = cli::read_json(&input)?;
            let g = cli::load_group(&c.group)?;
            let opts = ProofOptions { r1_star, r2_star, strict_simple, fixed_domain };
            let cert = if energy { cli::prove_with_energy(&g, &c, &opts)? } else { okproof::validator::prove(&g, &c, &opts)? };
            cli::write_json(&out, &cert)?;
            print(json!({"status": cert.status, "r_hat": cert.r_hat, "energy": cert.energy.as_ref().map(|e| e.enclosure)}));
            Ok(if cert.is_proved() { 0 } else { 1 })
        }
        Cmd::Energy { input, out, recheck } => {
            let mut cert: Certificate = cli::read_json(&input)?;
            let g = if recheck { cli::verify_certificate(&cert)? } else { cli::load_group(&cert.candidate.group)? };
            let e = compute_e2(&g, &cert)?;
            print(json!({"enclosure": e.enclosure, "offset": e.offset, "half_width": e.half_width}));
            cert.energy = Some(e);
            cli::write_json(out.as_ref().unwrap_or(&input), &cert)?;
            Ok(0)
        }
        Cmd::Morse { input, mode, margin, out } => {
            let mut cert: Certificate = cli::read_json(&input)?;
            let g = cli::load_group(&cert.candidate.group)?;
            let mode = match mode {
                Mode::Within => MorseMode::WithinSymmetryClass,
                Mode::Fixed => MorseMode::FixedDomain,
            };
            let r = morse_index(&g, &cert, mode, margin)?;
            print(json!({"index": r.index, "mode": r.mode, "neutral": r.neutral}));
            cert.morse = Some(r);
            if let Some(out) = out {
                cli::write_json(&out, &cert)?;
            }
            Ok(0)
        }
        Cmd::Verify { input, recheck: _ } => {
            let cert: Certificate = cli::read_json(&input)?;
            cli::verify_certificate(&cert)?;
            print(json!({"verified": true, "status": cert.status}));
            Ok(0)
        }
        Cmd::Compare { a, b } => {
            let ca: Certificate = cli::read_json(&a)?;
            let cb: Certificate = cli::read_json(&b)?;
            let missing = || CliError::Failed("certificate carries no energy enclosure; run `energy` first".into());
            let o = compare(ca.energy.as_ref().ok_or_else(missing)?, cb.energy.as_ref().ok_or_else(missing)?)?;
            print(json!({"ordering": o}));
            Ok(0)
        }
        Cmd::Sweep { config, csv, boundaries } => {
            let cfg: SweepConfig = match config {
                Some(p) => cli::read_json(&p)?,
                None => SweepConfig::default(),
            };
            let r = cli::sweep(&cfg)?;
            std::fs::write(&csv, cli::sweep_csv(&r.rows)).map_err(|e| CliError::Config(e.to_string()))?;
            cli::write_json(&boundaries, &r.boundaries)?;
            print(json!({"rows": r.rows.len(), "boundaries": r.boundaries.len(), "failures": r.failures}));
            Ok(0)
        }
        Cmd::VerifyBoundary { input } => {
            let bp: cli::BoundaryPoint = cli::read_json(&input)?;
            cli::verify_boundary(&bp)?;
            print(json!({"verified": true, "m_a": bp.m_a, "m_b": bp.m_b, "converged": bp.converged}));
            Ok(0)
        }
        Cmd::ExportProfile { input, n, out } => {
            let cert: Certificate = cli::read_json(&input)?;
            let g = cli::load_group(&cert.candidate.group)?;
            let p = cli::export_profile(&g, &cert, n)?;
            cli::write_json(&out, &p)?;
            print(json!({"n": n, "sup_error": p.sup_error}));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let args = Cli::parse();
    match run(args.cmd) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            print(json!({"error": e.to_string()}));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
