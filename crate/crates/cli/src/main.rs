use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use hfa_cli::suites::{self, r6, RunConfig, Scale};
use hfa_cli::{exit_code, DEFAULT_CAP, EXIT_INPUT, EXIT_USAGE};
use hfa_core::almost_forms::{centered, cyclic_zlinear_representation, elem_exp_grid, symmetry_defect, SymmetryInput};
use hfa_core::bilinear::{apply_word, PointSet};
use hfa_core::bohr::{bohr_size_bounds, bohr_spectrum_approx, parse_ratio, spectrum_k, weak_regularize_fn, BohrSet, BohrSpec, RadiusSpec};
use hfa_core::fourier::{directional_norm, fmt_f64, gowers_norm, read_csv, GroupFn};
use hfa_core::freiman::{freiman_check, robust_subset, Graph, PartialMap, PartialMapSpec};
use hfa_core::lattice::{direct_summand_below, quotient_invariants, smith_normal_form, IntMatrix};
use hfa_core::poly_torsion::{degree, integrate_bilinear, integrate_trilinear, MultilinearForm, PolyPhase, PolyPhaseSpec};
use hfa_core::progression::{bohr_to_progression, properness_check, CosetProgression, ProgressionSpec, Properness, SHORT_VECTOR_BUDGET};
use hfa_core::{Character, FinAbGroup, GroupElement, HfaError};

#[derive(Parser)]
#[command(name = "hfa", version, about = "Higher-order Fourier analysis toolkit on finite abelian groups")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Global {
    /// Root seed; every randomized step derives its stream from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Enumeration cap.
    #[arg(long, global = true, env = "HFA_CAP")]
    cap: Option<u64>,
    /// Sample count; enables sampled estimators where an exact one would exceed the cap.
    #[arg(long, global = true)]
    sample: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Invariants of a group given by factors or by relations.
    Group {
        /// Cyclic factors, e.g. `4,8`.
        #[arg(long)]
        factors: Option<String>,
        /// Rank of Z^n for `--relations`.
        #[arg(long)]
        n: Option<usize>,
        /// Relation rows, e.g. `2,0;0,4`.
        #[arg(long)]
        relations: Option<String>,
    },
    /// Gowers or directional norm of a function table.
    Gowers {
        #[arg(long)]
        group: String,
        /// CSV table `index,re,im`.
        #[arg(long, conflicts_with_all = ["poly", "constant"])]
        input: Option<PathBuf>,
        /// JSON polynomial phase; the group is `(Z/2^d)^n`.
        #[arg(long)]
        poly: Option<PathBuf>,
        /// Constant-one function.
        #[arg(long)]
        constant: bool,
        #[arg(short, long)]
        k: Option<u32>,
        /// Subgroup generators for the directional norm, e.g. `1,0;0,2`.
        #[arg(long, conflicts_with = "k")]
        h_gens: Option<String>,
    },
    /// Bohr set reports.
    Bohr {
        #[command(subcommand)]
        op: BohrOp,
    },
    /// Properness of a coset progression.
    Progression {
        #[arg(long)]
        group: String,
        /// JSON progression spec.
        #[arg(long)]
        spec: PathBuf,
    },
    Lattice {
        #[command(subcommand)]
        op: LatticeOp,
    },
    Freiman {
        #[command(subcommand)]
        op: FreimanOp,
    },
    /// Size of a point set after a word in the horizontal and vertical difference operators.
    Bilinear {
        #[arg(long)]
        g1: String,
        #[arg(long)]
        g2: String,
        /// Points as `x,y` element indices separated by `;`; the full product if omitted.
        #[arg(long)]
        points: Option<String>,
        #[arg(long)]
        word: String,
    },
    Poly {
        #[command(subcommand)]
        op: PolyOp,
    },
    Forms {
        #[command(subcommand)]
        op: FormsOp,
    },
    /// Run an acceptance suite.
    Verify { suite: String, scale: String },
    /// Integrate a bilinear or trilinear form into a polynomial phase.
    Integrate {
        #[arg(long)]
        form: PathBuf,
        #[arg(long)]
        arity: usize,
    },
}

#[derive(Args)]
struct BohrArgs {
    #[arg(long)]
    group: String,
    /// Frequencies, e.g. `1;3` or `1,0;0,1`.
    #[arg(long)]
    freqs: String,
    /// Common radius, or one per frequency separated by `,`.
    #[arg(long)]
    radius: String,
}

#[derive(Subcommand)]
enum BohrOp {
    Size(BohrArgs),
    Spectrum {
        #[command(flatten)]
        b: BohrArgs,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        eta: String,
        /// Characters to probe; every character if omitted.
        #[arg(long)]
        taus: Option<String>,
    },
    Regularize {
        #[command(flatten)]
        b: BohrArgs,
        #[arg(long)]
        eps: String,
        #[arg(long)]
        eta: String,
    },
    Progression(BohrArgs),
}

#[derive(Subcommand)]
enum LatticeOp {
    /// Smith normal form of an integer matrix.
    Snf {
        #[arg(long)]
        matrix: String,
    },
    /// Large direct summand inside a subgroup of `(Z/2^d)^n`.
    Summand {
        #[arg(long)]
        group: String,
        #[arg(long)]
        gens: String,
    },
}

#[derive(Subcommand)]
enum FreimanOp {
    /// Freiman-homomorphism check of a partial map given as JSON pairs.
    Check {
        #[arg(long)]
        domain: String,
        #[arg(long)]
        codomain: String,
        #[arg(long)]
        map: PathBuf,
    },
    /// Robust vertex subset of a graph (edge list, first line `n`).
    Robust {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        c: f64,
    },
}

#[derive(Subcommand)]
enum PolyOp {
    /// Value table of a polynomial phase.
    Eval {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Exact degree of a polynomial phase.
    Degree {
        #[arg(long)]
        spec: PathBuf,
    },
}

#[derive(Subcommand)]
enum FormsOp {
    /// Checks the inequalities for `e(t)` on a uniform grid.
    Elemexp {
        #[arg(long, default_value_t = 10_000)]
        points: usize,
    },
    /// Fractional-part representation of `sum k_i N {r_i x / N}` on `B(r; rho)`.
    Zlinear {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        r: String,
        #[arg(long)]
        rho: String,
        #[arg(long)]
        coefs: String,
    },
    /// Symmetry quantity for a planted bilinear phase on `Z/p`.
    Symmetry {
        #[arg(long)]
        p: u64,
        #[arg(long)]
        r: String,
        #[arg(long)]
        a: i64,
        #[arg(long, default_value_t = 0.0)]
        kappa: f64,
    },
}

struct Ctx {
    seed: u64,
    cap: u64,
    sample: Option<u64>,
    format: Format,
}

enum Failure {
    Usage(String),
    Io(String),
    Core(HfaError),
}

impl From<HfaError> for Failure {
    fn from(e: HfaError) -> Self {
        Failure::Core(e)
    }
}

type Out = std::result::Result<Report, Failure>;

/// JSON payload plus an optional CSV rendering.
struct Report {
    json: Value,
    csv: Option<String>,
    ok: bool,
}

impl Report {
    fn json(v: impl Serialize) -> Self {
        Report { json: serde_json::to_value(v).expect("serializable"), csv: None, ok: true }
    }
}

fn input(msg: impl Into<String>) -> Failure {
    Failure::Core(HfaError::Input(msg.into()))
}

fn parse_list(s: &str) -> std::result::Result<Vec<i64>, Failure> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(|t| t.trim().parse::<i64>().map_err(|_| input(format!("bad integer {t:?}")))).collect()
}

fn parse_rows(s: &str) -> std::result::Result<Vec<Vec<i64>>, Failure> {
    s.split(';').filter(|r| !r.trim().is_empty()).map(parse_list).collect()
}

fn parse_group(s: &str) -> std::result::Result<FinAbGroup, Failure> {
    let f = parse_list(s)?;
    if f.iter().any(|&x| x < 1) {
        return Err(input("group factors must be positive"));
    }
    Ok(FinAbGroup::new(f.into_iter().map(|x| x as u64).collect())?)
}

fn read(path: &PathBuf) -> std::result::Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> std::result::Result<T, Failure> {
    serde_json::from_str(&read(path)?).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn bohr_from(a: &BohrArgs) -> std::result::Result<BohrSet, Failure> {
    let g = parse_group(&a.group)?;
    let radius = if a.radius.contains(',') {
        RadiusSpec::PerChar(a.radius.split(',').map(|s| s.trim().to_string()).collect())
    } else {
        RadiusSpec::Const(a.radius.clone())
    };
    Ok(BohrSet::from_spec(&g, &BohrSpec { freqs: parse_rows(&a.freqs)?, radius })?)
}

fn elements(g: &FinAbGroup, rows: &[Vec<i64>]) -> hfa_core::Result<Vec<GroupElement>> {
    rows.iter().map(|r| g.element(r)).collect()
}

fn run(cmd: Cmd, ctx: &Ctx) -> Out {
    match cmd {
        Cmd::Group { factors, n, relations } => {
            let g = match (factors, n, relations) {
                (Some(f), None, None) => parse_group(&f)?,
                (None, Some(n), Some(r)) => FinAbGroup::new(quotient_invariants(n, &parse_rows(&r)?)?)?,
                _ => return Err(Failure::Usage("give --factors, or --n with --relations".into())),
            };
            Ok(Report::json(json!({ "factors": g.factors(), "order": g.order(), "rank": g.rank(), "exponent": g.exponent() })))
        }
        Cmd::Gowers { group, input: file, poly, constant, k, h_gens } => {
            let (g, f) = if let Some(p) = poly {
                let q = PolyPhase::from_spec(&read_json::<PolyPhaseSpec>(&p)?)?;
                let g = q.group();
                let f = GroupFn::phase(&g, &q.table());
                (g, f)
            } else {
                let g = parse_group(&group)?;
                let f = if constant {
                    GroupFn::constant(&g, Complex64::new(1.0, 0.0))
                } else if let Some(path) = file {
                    read_csv(&g, read(&path)?.as_bytes())?
                } else {
                    return Err(Failure::Usage("give --input, --poly or --constant".into()));
                };
                (g, f)
            };
            if let Some(h) = h_gens {
                let gens = elements(&g, &parse_rows(&h)?)?;
                let v = directional_norm(&f, &gens)?;
                return Ok(Report::json(json!({ "value": fmt_f64(v), "method": "exact", "h_gens": gens })));
            }
            let k = k.ok_or_else(|| Failure::Usage("give -k or --h-gens".into()))?;
            let r = gowers_norm(&f, k, ctx.cap, ctx.sample.map(|s| (s, ctx.seed)))?;
            Ok(Report::json(json!({ "k": k, "value": fmt_f64(r.value), "power": fmt_f64(r.power), "method": r.method, "work": r.work })))
        }
        Cmd::Bohr { op } => bohr(op, ctx),
        Cmd::Progression { group, spec } => {
            let g = parse_group(&group)?;
            let c = CosetProgression::from_spec(&g, &read_json::<ProgressionSpec>(&spec)?)?;
            Ok(match properness_check(&c, ctx.cap)? {
                Properness::Proper(p) => Report::json(json!({ "proper": true, "size": p.size() })),
                Properness::Collision { first, second, element } => {
                    Report::json(json!({ "proper": false, "first": first, "second": second, "element": element }))
                }
            })
        }
        Cmd::Lattice { op: LatticeOp::Snf { matrix } } => {
            let m = IntMatrix::from_rows(&parse_rows(&matrix)?);
            let s = smith_normal_form(&m);
            Ok(Report::json(json!({ "diagonal": s.diagonal().iter().map(|x| x.to_string()).collect::<Vec<_>>(), "rank": s.rank() })))
        }
        Cmd::Lattice { op: LatticeOp::Summand { group, gens } } => {
            let g = parse_group(&group)?;
            let s = direct_summand_below(&g, &elements(&g, &parse_rows(&gens)?)?)?;
            Ok(Report::json(json!({ "u_gens": s.u_gens, "v_gens": s.v_gens, "u_size": s.u_size, "v_size": s.v_size })))
        }
        Cmd::Freiman { op: FreimanOp::Check { domain, codomain, map } } => {
            let (g, k) = (parse_group(&domain)?, parse_group(&codomain)?);
            let phi = PartialMap::from_spec(&g, &k, &read_json::<PartialMapSpec>(&map)?)?;
            let r = freiman_check(&phi, ctx.cap)?;
            let ok = r.holds;
            Ok(Report { ok, ..Report::json(r) })
        }
        Cmd::Freiman { op: FreimanOp::Robust { graph, c } } => {
            let gr = Graph::parse(&read(&graph)?)?;
            let r = robust_subset(&gr, c)?;
            let ok = r.size_ok && r.walks_ok;
            Ok(Report { ok, ..Report::json(r) })
        }
        Cmd::Bilinear { g1, g2, points, word } => {
            let (g1, g2) = (parse_group(&g1)?, parse_group(&g2)?);
            let a = match points {
                None => PointSet::full(&g1, &g2),
                Some(p) => {
                    let rows = parse_rows(&p)?;
                    if rows.iter().any(|r| r.len() != 2 || r.iter().any(|&v| v < 0)) {
                        return Err(input("points are x,y pairs of element indices"));
                    }
                    PointSet::new(&g1, &g2, rows.iter().map(|r| (r[0] as u64, r[1] as u64)))?
                }
            };
            let out = apply_word(&a, &word, ctx.cap)?;
            Ok(Report::json(json!({ "word": word, "input_size": a.len(), "size": out.len() })))
        }
        Cmd::Poly { op: PolyOp::Eval { spec } } => {
            let q = PolyPhase::from_spec(&read_json::<PolyPhaseSpec>(&spec)?)?;
            let table: Vec<String> = q.table().iter().map(|v| v.to_string()).collect();
            let csv = std::iter::once("index,value".to_string()).chain(table.iter().enumerate().map(|(i, v)| format!("{i},{v}"))).collect::<Vec<_>>().join("\n") + "\n";
            Ok(Report { csv: Some(csv), ..Report::json(json!({ "table": table })) })
        }
        Cmd::Poly { op: PolyOp::Degree { spec } } => {
            let q = PolyPhase::from_spec(&read_json::<PolyPhaseSpec>(&spec)?)?;
            let deg = degree(&q.group(), &q.table(), 4, ctx.cap)?;
            Ok(Report::json(json!({ "degree": deg })))
        }
        Cmd::Forms { op } => forms(op, ctx),
        Cmd::Verify { suite, scale } => {
            let scale = Scale::parse(&scale).ok_or_else(|| Failure::Usage(format!("unknown scale {scale:?}; use tiny or desk")))?;
            let cfg = RunConfig { seed: ctx.seed, cap: ctx.cap.max(1 << 30), samples: ctx.sample.unwrap_or(2000), scale };
            let summary = suites::run_suite(&suite, &cfg).ok_or_else(|| Failure::Usage(format!("unknown suite {suite:?}; use one of {:?}", suites::SUITES)))?;
            let ok = summary.passed;
            Ok(Report { ok, ..Report::json(summary) })
        }
        Cmd::Integrate { form, arity } => {
            let phi: MultilinearForm = read_json(&form)?;
            let phi = MultilinearForm::new(phi.d, phi.n, phi.arity, phi.coeffs)?;
            if phi.arity != arity {
                return Err(input(format!("form has arity {}, not {arity}", phi.arity)));
            }
            let samples = ctx.sample.unwrap_or(2000);
            let r = match arity {
                2 => integrate_bilinear(&phi, ctx.cap, samples, ctx.seed)?,
                3 => integrate_trilinear(&phi, ctx.cap, samples, ctx.seed)?,
                _ => return Err(Failure::Usage("arity must be 2 or 3".into())),
            };
            Ok(Report::json(r))
        }
    }
}

fn bohr(op: BohrOp, ctx: &Ctx) -> Out {
    match op {
        BohrOp::Size(a) => {
            let b = bohr_from(&a)?;
            Ok(Report::json(bohr_size_bounds(&b, ctx.cap)?))
        }
        BohrOp::Spectrum { b, eps, eta, taus } => {
            let b = bohr_from(&b)?;
            let g = b.group.clone();
            let eta_f = {
                let r = parse_ratio(&eta)?;
                *r.numer() as f64 / *r.denom() as f64
            };
            let taus: Vec<Character> = match taus {
                Some(t) => parse_rows(&t)?.iter().map(|r| g.character(r)).collect::<hfa_core::Result<_>>()?,
                None => g.characters(ctx.cap)?.collect(),
            };
            let k = spectrum_k(b.codim(), eps, eta_f);
            let rows = bohr_spectrum_approx(&b, eta_f, eps, &vec![k; b.codim()], &taus, ctx.cap)?;
            let ok = rows.iter().all(|r| r.gap <= eps);
            let mut csv = String::from("tau,re,im,approx_re,approx_im,gap\n");
            for r in &rows {
                let tau = r.tau.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
                csv += &format!("{tau},{},{},{},{},{}\n", fmt_f64(r.exact.re), fmt_f64(r.exact.im), fmt_f64(r.approx.re), fmt_f64(r.approx.im), fmt_f64(r.gap));
            }
            let max_gap = rows.iter().map(|r| r.gap).fold(0.0, f64::max);
            Ok(Report { json: json!({ "k": k, "probes": rows.len(), "max_gap": fmt_f64(max_gap), "eps": eps }), csv: Some(csv), ok })
        }
        BohrOp::Regularize { b, eps, eta } => {
            let b = bohr_from(&b)?;
            let (_, rep) = weak_regularize_fn(&b, parse_ratio(&eps)?, parse_ratio(&eta)?, ctx.cap)?;
            Ok(Report::json(rep))
        }
        BohrOp::Progression(a) => {
            let b = bohr_from(&a)?;
            let s = bohr_to_progression(&b, ctx.cap, SHORT_VECTOR_BUDGET)?;
            let ok = s.ok();
            Ok(Report { ok, ..Report::json(s) })
        }
    }
}

fn forms(op: FormsOp, ctx: &Ctx) -> Out {
    match op {
        FormsOp::Elemexp { points } => {
            let r = elem_exp_grid(points, 1e-12);
            let ok = r.holds;
            Ok(Report { ok, ..Report::json(r) })
        }
        FormsOp::Zlinear { n, r, rho, coefs } => {
            let r: Vec<u64> = parse_list(&r)?.into_iter().map(|x| x.rem_euclid(n as i64) as u64).collect();
            let k = parse_list(&coefs)?;
            if k.len() != r.len() {
                return Err(input("one coefficient per frequency"));
            }
            let phi = |x: u64| r.iter().zip(&k).map(|(&ri, &ki)| ki * centered(ri * x % n, n)).sum::<i64>();
            Ok(Report::json(cyclic_zlinear_representation(n, &r, parse_ratio(&rho)?, &phi, ctx.cap)?))
        }
        FormsOp::Symmetry { p, r, a, kappa } => {
            let r = parse_list(&r)?;
            if r.len() != 2 {
                return Err(input("give two frequencies"));
            }
            let fx = suites::planted_symmetry(p, [r[0].rem_euclid(p as i64) as u64, r[1].rem_euclid(p as i64) as u64], a, kappa, ctx.cap)?;
            let inp = |c: f64| SymmetryInput { b: &fx.b, theta: &fx.theta, f: [&fx.f12, &fx.f12, &fx.f3], c, shift_samples: 64, seed: ctx.seed, cap: ctx.cap };
            let measured = match symmetry_defect(&inp(1e-3))? {
                hfa_core::almost_forms::SymmetryOutcome::NoWitness { measured_c, .. } => measured_c,
                hfa_core::almost_forms::SymmetryOutcome::Certified(rep) => rep.measured_c,
            };
            let out = symmetry_defect(&inp(measured * (1.0 - 1e-12)))?;
            Ok(Report::json(json!({ "measured_c": r6(measured), "outcome": out })))
        }
    }
}

fn emit(rep: &Report, ctx: &Ctx, out: &Option<PathBuf>) -> std::io::Result<()> {
    let text = match (ctx.format, &rep.csv) {
        (Format::Csv, Some(csv)) => csv.clone(),
        _ => serde_json::to_string_pretty(&rep.json).expect("serializable") + "\n",
    };
    match out {
        Some(p) => std::fs::write(p, text),
        None => std::io::stdout().lock().write_all(text.as_bytes()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let g = cli.global;
    if let Some(w) = g.workers {
        if w == 0 || rayon::ThreadPoolBuilder::new().num_threads(w).build_global().is_err() {
            eprintln!("error: could not start {w} workers");
            return ExitCode::from(EXIT_USAGE as u8);
        }
    }
    let cap = g.cap.unwrap_or(DEFAULT_CAP);
    if cap == 0 {
        eprintln!("error: cap must be positive");
        return ExitCode::from(EXIT_USAGE as u8);
    }
    let ctx = Ctx { seed: g.seed, cap, sample: g.sample, format: g.format };
    match run(cli.cmd, &ctx) {
        Ok(rep) => {
            if let Err(e) = emit(&rep, &ctx, &g.out) {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_INPUT as u8);
            }
            if rep.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(hfa_cli::EXIT_CERTIFICATE as u8)
            }
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE as u8)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_INPUT as u8)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
