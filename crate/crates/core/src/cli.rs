//! Command-line front end: configuration, the five commands and report
//! emission. Exit codes are 0 on success, 1 on a numerical or invariant
//! failure and 2 on a usage error.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::cylindrical::{asymptotic_classifier, numerical_spectrum, pinning_k, zero_mode_fields, CylindricalSeed};
use crate::darboux1d::{partner_potential_1d, susy_phase, LambdaSupport, Phase};
use crate::error::{Error, Result};
use crate::factorops::{assemble_hamiltonians, intertwining_residual, intertwining_residual_1d, Complex1D, Complex2D};
use crate::grid::{Domain, Grid1D, Grid2D, RadialGrid, ScalarField};
use crate::moutard2d::{
    coulomb_second_solution, coulomb_support, level_membership_diagnostics, moutard_checks, moutard_transform,
    normalize_on, partner_potential_2d, MoutardPair, PathOrder, RegularRegion,
};
use crate::spectra::{
    closed_form_level, closed_form_spectrum, compare_spectra, solve_1d, solve_radial, solve_radial_extrapolated,
    Branch, SpectrumReport,
};
use crate::superalgebra::{
    assemble_extended, build_dual, build_super_1d, build_super_2d, zero_modes, ALGEBRA_THRESHOLD,
};

/// Potentials accepted by the `spectrum` command.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialKind {
    /// `-2 kappa^2 sech^2(kappa x)` on a line
    PoschlTeller,
    /// `x^2` on a line
    Oscillator,
    /// `0` on a line
    Free,
    /// `-alpha/r` in the plane
    Coulomb,
    /// `+alpha/r` in the plane
    RepulsiveCoulomb,
    /// `k^2/r^2 - b(2k-1)/r` in the plane
    CylinderMinus,
    /// `k^2/r^2 - b(2k+1)/r` in the plane
    CylinderPlus,
}

/// Serializable run configuration. Unset fields take per-command defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    pub lambda: Option<f64>,
    pub kappa: Option<f64>,
    pub alpha: Option<f64>,
    pub b: Option<f64>,
    pub k: Option<f64>,
    /// Extension level of the algebra.
    pub n: Option<usize>,
    /// Points per axis of 2D grids.
    pub grid: Option<usize>,
    /// Points of 1D and radial grids.
    pub points: Option<usize>,
    /// Half width of 1D and 2D domains.
    pub half_width: Option<f64>,
    pub r_max: Option<f64>,
    pub nmax: Option<usize>,
    pub mmax: Option<i64>,
    pub count: Option<usize>,
    pub tolerance: Option<f64>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub pin: Option<(usize, i64)>,
    pub potential: Option<PotentialKind>,
    pub out: Option<PathBuf>,
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($f:ident),*) => { $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )* };
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidParameter(format!("config {}: {e}", path.display())))
    }

    /// Fields set in `top` replace those of `self`.
    pub fn overlay(mut self, top: &RunConfig) -> Self {
        overlay!(
            self, top, command, lambda, kappa, alpha, b, k, n, grid, points, half_width, r_max, nmax, mmax, count,
            tolerance, samples, seed, pin, potential, out
        );
        self
    }

    fn positive(name: &str, v: Option<f64>) -> Result<()> {
        match v {
            Some(x) if !(x > 0.0) || !x.is_finite() => {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {x}")))
            }
            _ => Ok(()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        Self::positive("kappa", self.kappa)?;
        Self::positive("alpha", self.alpha)?;
        Self::positive("b", self.b)?;
        Self::positive("k", self.k)?;
        Self::positive("half-width", self.half_width)?;
        Self::positive("r-max", self.r_max)?;
        Self::positive("tolerance", self.tolerance)?;
        if let Some(l) = self.lambda {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::InvalidParameter(format!("lambda must lie in [0, 1], got {l}")));
            }
        }
        if let Some(n) = self.n {
            if !(1..=4).contains(&n) {
                return Err(Error::InvalidParameter(format!(
                    "extension level n must be in 1..=4, got {n}"
                )));
            }
        }
        for (name, v) in [("grid", self.grid), ("points", self.points)] {
            if let Some(p) = v {
                if p < 3 {
                    return Err(Error::InvalidParameter(format!("{name} must be at least 3, got {p}")));
                }
            }
        }
        for (name, v) in [("count", self.count), ("samples", self.samples)] {
            if v == Some(0) {
                return Err(Error::InvalidParameter(format!("{name} must be at least 1")));
            }
        }
        if let Some(m) = self.mmax {
            if m < 0 {
                return Err(Error::InvalidParameter(format!("mmax must be non-negative, got {m}")));
            }
        }
        Ok(())
    }

    /// Output directory: `--out`, then `SUSY_OUT`, then the config file, then `out`.
    fn out_dir(&self, flag: Option<&PathBuf>) -> PathBuf {
        if let Some(p) = flag {
            return p.clone();
        }
        if let Some(p) = std::env::var_os("SUSY_OUT").filter(|v| !v.is_empty()) {
            return PathBuf::from(p);
        }
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "susy",
    version,
    about = "Supersymmetric level addition in one and two dimensions"
)]
pub struct Cli {
    /// JSON configuration file; flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides SUSY_OUT and the config file)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed of the random test fields
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One-dimensional pair from the lambda-family of free-particle seeds
    Pair1d(Pair1dArgs),
    /// Coulomb pair in the plane and its Moutard transform
    Pair2d(Pair2dArgs),
    /// The cylindrical seed exp(br)/r^k end to end
    Cylinder(CylinderArgs),
    /// Superalgebra and extended-SUSY residual report
    Algebra(AlgebraArgs),
    /// Bound levels of a named potential
    Spectrum(SpectrumArgs),
}

#[derive(Debug, Args)]
pub struct Pair1dArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub half_width: Option<f64>,
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct Pair2dArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CylinderArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub b: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub k: Option<f64>,
    #[arg(long)]
    pub nmax: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub mmax: Option<i64>,
    /// Points per axis of the zero-mode grid
    #[arg(long)]
    pub grid: Option<usize>,
    /// Pin the level (N, m): `--pin N m`
    #[arg(long, num_args = 2, value_names = ["N", "M"], allow_negative_numbers = true)]
    pub pin: Option<Vec<i64>>,
}

#[derive(Debug, Args)]
pub struct AlgebraArgs {
    /// Extension level N (1..=4)
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub b: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub k: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[arg(long, value_enum)]
    pub potential: Option<PotentialKind>,
    #[arg(long, allow_negative_numbers = true)]
    pub kappa: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub b: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub k: Option<f64>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub mmax: Option<i64>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub half_width: Option<f64>,
    #[arg(long)]
    pub r_max: Option<f64>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Pair1d(_) => "pair1d",
            Command::Pair2d(_) => "pair2d",
            Command::Cylinder(_) => "cylinder",
            Command::Algebra(_) => "algebra",
            Command::Spectrum(_) => "spectrum",
        }
    }

    fn flags(&self) -> Result<RunConfig> {
        let mut c = RunConfig::default();
        match self {
            Command::Pair1d(a) => {
                c.lambda = a.lambda;
                c.kappa = a.kappa;
                c.points = a.points;
                c.half_width = a.half_width;
                c.count = a.count;
            }
            Command::Pair2d(a) => {
                c.alpha = a.alpha;
                c.grid = a.grid;
            }
            Command::Cylinder(a) => {
                c.b = a.b;
                c.k = a.k;
                c.nmax = a.nmax;
                c.mmax = a.mmax;
                c.grid = a.grid;
                if let Some(p) = &a.pin {
                    if p[0] < 0 {
                        return Err(Error::InvalidParameter(format!(
                            "pinned N must be non-negative, got {}",
                            p[0]
                        )));
                    }
                    c.pin = Some((p[0] as usize, p[1]));
                }
            }
            Command::Algebra(a) => {
                c.n = a.n;
                c.grid = a.grid;
                c.b = a.b;
                c.k = a.k;
                c.samples = a.samples;
            }
            Command::Spectrum(a) => {
                c.potential = a.potential;
                c.kappa = a.kappa;
                c.alpha = a.alpha;
                c.b = a.b;
                c.k = a.k;
                c.count = a.count;
                c.mmax = a.mmax;
                c.points = a.points;
                c.half_width = a.half_width;
                c.r_max = a.r_max;
            }
        }
        Ok(c)
    }
}

/// Resolved configuration plus the output directory of one invocation.
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
}

impl Context {
    fn file(&self, name: &str) -> Result<BufWriter<File>> {
        fs::create_dir_all(&self.out)?;
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut w = self.file(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        use std::io::Write;
        writeln!(w)?;
        Ok(())
    }

    fn seed(&self) -> u64 {
        self.config.seed.unwrap_or(2024)
    }

    fn samples(&self) -> usize {
        self.config.samples.unwrap_or(8)
    }
}

fn write_rows(w: impl std::io::Write, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Csv(e.to_string());
    wr.write_record(header).map_err(err)?;
    for r in rows {
        wr.write_record(r).map_err(err)?;
    }
    wr.flush()?;
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x:.17e}")
}

#[derive(Serialize)]
struct Pair1dReport {
    lambda: f64,
    kappa: f64,
    e0: f64,
    phase: Phase,
    added_level: Option<f64>,
    deviation: Option<f64>,
    match_tolerance: f64,
    h0_levels: Vec<f64>,
    h1_levels: Vec<f64>,
    intertwining_residual: f64,
    algebra: crate::superalgebra::SuperResiduals,
}

pub fn cmd_pair1d(ctx: &Context) -> Result<i32> {
    let c = &ctx.config;
    let lambda = c.lambda.unwrap_or(0.5);
    let kappa = c.kappa.unwrap_or(1.0);
    let l = c.half_width.unwrap_or(20.0);
    let grid = Grid1D::new(-l, l, c.points.unwrap_or(4001))?;
    let support = LambdaSupport::free_particle(lambda, kappa)?;
    let tol = c.tolerance.unwrap_or(1e-12);
    let phase = susy_phase(&support, grid, c.count.unwrap_or(4), tol)?;
    let spec = support.support();
    let u1 = partner_potential_1d(|x| support.potential(x), &spec, grid)?;
    let rows: Vec<Vec<String>> = (0..grid.n)
        .map(|i| {
            vec![
                num(grid.point(i)),
                num(support.potential(grid.point(i))),
                num(u1.values[i]),
            ]
        })
        .collect();
    write_rows(ctx.file("pair1d_potentials.csv")?, &["x", "u", "u1"], &rows)?;
    phase.h0.write_csv(ctx.file("pair1d_h0_spectrum.csv")?)?;
    phase.h1.write_csv(ctx.file("pair1d_h1_spectrum.csv")?)?;
    let cx = Complex1D::new(&spec, grid)?;
    let report = Pair1dReport {
        lambda,
        kappa,
        e0: phase.e0,
        phase: phase.phase,
        added_level: phase.matched_level,
        deviation: phase.deviation,
        match_tolerance: phase.match_tolerance,
        h0_levels: phase.h0.energies(),
        h1_levels: phase.h1.energies(),
        intertwining_residual: intertwining_residual_1d(&cx, ctx.samples(), ctx.seed()),
        algebra: build_super_1d(&spec, grid)?.residuals(ctx.samples(), ctx.seed()),
    };
    ctx.json("pair1d_phase.json", &report)?;
    println!(
        "pair1d: phase={:?} added_level={} (tolerance {:e})",
        report.phase,
        report.added_level.map_or("none".into(), |e| format!("{e:.6}")),
        report.match_tolerance
    );
    Ok(0)
}

#[derive(Serialize)]
struct Pair2dReport {
    alpha: f64,
    e0: f64,
    partner_max_error: f64,
    partner_tolerance: f64,
    repulsive_bound_levels: Vec<f64>,
    moutard: crate::moutard2d::MoutardChecks,
    window: [f64; 4],
}

pub fn cmd_pair2d(ctx: &Context) -> Result<i32> {
    let c = &ctx.config;
    let alpha = c.alpha.unwrap_or(1.0);
    let n = c.grid.unwrap_or(65);
    let support = coulomb_support(alpha)?;
    let g = Grid2D::centered(c.half_width.unwrap_or(4.0), n)?;
    let u1 = partner_potential_2d(|x| -alpha / x[0].hypot(x[1]), &support, g)?;
    let err = (0..g.len())
        .map(|i| {
            let p = g.point(i);
            (u1.values[i] - alpha / p[0].hypot(p[1])).abs()
        })
        .fold(0.0, f64::max);
    let rg = RadialGrid::half_offset(c.r_max.unwrap_or(60.0), c.points.unwrap_or(6000))?;
    let rep = solve_radial(|r| alpha / r, 0, &rg, 1, 1e-13)?;

    let w = Grid2D::new(Grid1D::new(1.0, 5.0, n)?, Grid1D::new(-2.0, 2.0, n)?)?;
    let psi = ScalarField::sample(Domain::Plane(w), |x| coulomb_second_solution(alpha, x))?;
    let wu1 = partner_potential_2d(|x| -alpha / x[0].hypot(x[1]), &support, w)?;
    let pair = MoutardPair::new(support, psi)?;
    let checks = moutard_checks(&pair, &wu1, RegularRegion::punctured(0.0, 2))?;
    let psi1 = moutard_transform(&pair, PathOrder::HorizontalFirst)?;
    let rows: Vec<Vec<String>> = (0..w.len())
        .map(|i| {
            let p = w.point(i);
            vec![
                num(p[0]),
                num(p[1]),
                num(pair.psi.values[i]),
                num(psi1.values[i]),
                num(wu1.values[i]),
            ]
        })
        .collect();
    write_rows(ctx.file("pair2d_fields.csv")?, &["x", "y", "psi", "psi1", "u1"], &rows)?;
    let report = Pair2dReport {
        alpha,
        e0: -alpha * alpha,
        partner_max_error: err,
        partner_tolerance: 1e-10,
        repulsive_bound_levels: rep.energies(),
        moutard: checks,
        window: [1.0, 5.0, -2.0, 2.0],
    };
    ctx.json("pair2d_report.json", &report)?;
    println!(
        "pair2d: partner error {:.3e}, repulsive bound levels {}, path discrepancy {:.3e}, eigen residual {:.3e}",
        err,
        report.repulsive_bound_levels.len(),
        checks.path_discrepancy,
        checks.eigen_residual
    );
    Ok(if err <= 1e-10 && report.repulsive_bound_levels.is_empty() {
        0
    } else {
        1
    })
}

#[derive(Serialize)]
struct TableRow {
    branch: Branch,
    m: i64,
    n: usize,
    closed_form: f64,
    numerical: f64,
    relative_deviation: f64,
    extrapolation_correction: f64,
}

#[derive(Serialize)]
struct PinReport {
    pinning: crate::cylindrical::Pinning,
    minus_numerical: Option<f64>,
    plus_numerical: Option<f64>,
}

#[derive(Serialize)]
struct CylinderReport {
    b: f64,
    k: f64,
    e0: f64,
    classification: crate::cylindrical::LevelAddition,
    tolerance: f64,
    max_relative_deviation: f64,
    table: Vec<TableRow>,
    closed_form_comparison: crate::spectra::ComparisonReport,
    shift_exponent_m0: Option<f64>,
    zero_modes: crate::superalgebra::ZeroModeReport,
    membership: crate::moutard2d::MembershipReport,
    pin: Option<PinReport>,
}

pub fn cmd_cylinder(ctx: &Context) -> Result<i32> {
    let c = &ctx.config;
    let seed = CylindricalSeed::new(c.b.unwrap_or(1.0), c.k.unwrap_or(1.0))?;
    let n_max = c.nmax.unwrap_or(3);
    let m_max = c.mmax.unwrap_or(2);
    let tol = c.tolerance.unwrap_or(1e-3);
    let pinning = c.pin.map(|(n, m)| pinning_k(n, m).map(|p| (p, m))).transpose()?;
    let h = c.r_max.unwrap_or(60.0) / c.points.unwrap_or(6000) as f64;
    let mut table = Vec::new();
    for branch in [Branch::Minus, Branch::Plus] {
        let num_s = numerical_spectrum(&seed, branch, n_max, m_max, h, c.r_max.unwrap_or(60.0))?;
        for m in 0..=m_max {
            for n in 0..=n_max {
                let exact = closed_form_level(seed.b, seed.k, branch, n, m);
                let l = num_s.get(Some(m), n).ok_or_else(|| Error::SolverFailure {
                    channel: format!("{} m={m}", branch.name()),
                    reason: format!("level N={n} missing"),
                })?;
                table.push(TableRow {
                    branch,
                    m,
                    n,
                    closed_form: exact,
                    numerical: l.energy,
                    relative_deviation: (l.energy - exact).abs() / exact.abs(),
                    extrapolation_correction: l.residual,
                });
            }
        }
    }
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|r| {
            vec![
                r.branch.name().to_string(),
                r.m.to_string(),
                r.n.to_string(),
                num(r.closed_form),
                num(r.numerical),
                num(r.relative_deviation),
                num(r.extrapolation_correction),
            ]
        })
        .collect();
    write_rows(
        ctx.file("cylinder_spectrum.csv")?,
        &[
            "branch",
            "m",
            "N",
            "closed_form",
            "numerical",
            "relative_deviation",
            "extrapolation_correction",
        ],
        &rows,
    )?;
    let minus = closed_form_spectrum(seed.b, seed.k, Branch::Minus, 20, m_max)?;
    let plus = closed_form_spectrum(seed.b, seed.k, Branch::Plus, 20, m_max)?;
    let comparison = compare_spectra(&minus, &plus, 1e-9);
    let label_shift = compare_spectra(&minus, &plus, f64::INFINITY);
    let shift_exponent_m0 = label_shift.shift_exponent(Some(0), 5, 20);

    let zm_grid = Grid2D::centered(12.0, c.grid.unwrap_or(128))?;
    let region = RegularRegion::punctured(2.0 / seed.b, 2);
    let zero = zero_modes(&seed, zm_grid, region)?;
    let cx = Complex2D::primal(&seed.support(), zm_grid)?;
    let hs = assemble_hamiltonians(&cx);
    let fields = zero_mode_fields(&seed, zm_grid)?;
    let membership = level_membership_diagnostics(&normalize_on(&fields.psi_tilde, &cx, region), &cx, &hs, region)?;

    let pin = match pinning {
        Some((p, m)) => {
            let n = p.n;
            let pseed = CylindricalSeed::new(seed.b, p.k_value)?;
            let numeric = |branch: Branch, level: usize| -> Result<Option<f64>> {
                let s = numerical_spectrum(&pseed, branch, level, m.abs(), h, 60.0)?;
                Ok(s.get(Some(m.abs()), level).map(|l| l.energy))
            };
            let minus_numerical = if p.degenerate { None } else { numeric(Branch::Minus, n)? };
            let plus_numerical = match p.partner_n {
                Some(np) => numeric(Branch::Plus, np)?,
                None => None,
            };
            Some(PinReport {
                pinning: p,
                minus_numerical,
                plus_numerical,
            })
        }
        None => None,
    };

    let max_dev = table.iter().map(|r| r.relative_deviation).fold(0.0, f64::max);
    let worst = table
        .iter()
        .max_by(|a, b| a.relative_deviation.total_cmp(&b.relative_deviation))
        .map(|r| format!("{} m={} N={}", r.branch.name(), r.m, r.n))
        .unwrap_or_default();
    let report = CylinderReport {
        b: seed.b,
        k: seed.k,
        e0: seed.e0(),
        classification: asymptotic_classifier(&seed.support())?,
        tolerance: tol,
        max_relative_deviation: max_dev,
        table,
        closed_form_comparison: comparison,
        shift_exponent_m0,
        zero_modes: zero,
        membership,
        pin,
    };
    ctx.json("cylinder_report.json", &report)?;
    println!("cylinder: max relative deviation {max_dev:.3e} (tolerance {tol:e}, worst {worst})");
    if let Some(p) = &report.pin {
        println!(
            "cylinder: pin N={} m={} k={} level/b^2={} partner plus N'={}",
            p.pinning.n,
            p.pinning.m,
            p.pinning.k,
            p.pinning.level_over_b2,
            p.pinning.partner_n.map_or("none".into(), |v| v.to_string())
        );
    }
    if max_dev > tol {
        eprintln!("error: spectrum channel {worst} deviates by {max_dev:e}");
        return Ok(1);
    }
    Ok(0)
}

#[derive(Serialize)]
struct AlgebraReport {
    b: f64,
    k: f64,
    threshold: f64,
    one_dimensional: crate::superalgebra::SuperResiduals,
    two_dimensional: crate::superalgebra::SuperResiduals,
    intertwining: crate::factorops::IntertwiningReport,
    dual: crate::superalgebra::DualReport,
    extended: crate::superalgebra::ExtendedReport,
}

pub fn cmd_algebra(ctx: &Context) -> Result<i32> {
    let c = &ctx.config;
    let n = c.n.unwrap_or(2);
    let seed = CylindricalSeed::new(c.b.unwrap_or(1.0), c.k.unwrap_or(1.0))?;
    let support = seed.support();
    let g = Grid2D::centered(6.0, c.grid.unwrap_or(24))?;
    let (samples, rs) = (ctx.samples(), ctx.seed());
    let line = LambdaSupport::free_particle(0.5, 1.0)?.support();
    let one = build_super_1d(&line, Grid1D::new(-8.0, 8.0, 4 * g.x.n)?)?.residuals(samples, rs);
    let two = build_super_2d(&support, g)?.residuals(samples, rs);
    let cx = Complex2D::primal(&support, g)?;
    let intertwining = intertwining_residual(&cx, &assemble_hamiltonians(&cx), samples, rs);
    let (_, dual) = build_dual(&support, g, samples, rs)?;
    let ext = assemble_extended(&support, g, n, samples, rs)?.report;
    let report = AlgebraReport {
        b: seed.b,
        k: seed.k,
        threshold: ALGEBRA_THRESHOLD,
        one_dimensional: one,
        two_dimensional: two,
        intertwining,
        dual,
        extended: ext,
    };
    ctx.json("algebra_report.json", &report)?;
    println!("algebra: {}", report.extended.h_pattern);
    println!("algebra: {}", report.extended.q1_pattern);
    let base = [
        ("{Q,Q^+} = H in d=1", one.max()),
        ("{Q,Q^+} = H in d=2", two.max()),
        ("intertwining", report.intertwining.max()),
    ];
    for (name, r) in base {
        if !(r <= ALGEBRA_THRESHOLD) {
            eprintln!("error: relation {name} residual {r:e} exceeds {ALGEBRA_THRESHOLD:e}");
            return Ok(1);
        }
    }
    if let Some(v) = report.extended.violation() {
        eprintln!(
            "error: relation {} residual {:e} exceeds {:e}",
            v.relation, v.residual, ALGEBRA_THRESHOLD
        );
        return Ok(1);
    }
    println!(
        "algebra: all residuals <= {ALGEBRA_THRESHOLD:e} (max {:.3e})",
        report.extended.max_residual
    );
    Ok(0)
}

pub fn cmd_spectrum(ctx: &Context) -> Result<i32> {
    let c = &ctx.config;
    let kind = c
        .potential
        .ok_or_else(|| Error::InvalidParameter("--potential is required".into()))?;
    let count = c.count.unwrap_or(8);
    let tol = c.tolerance.unwrap_or(1e-12);
    let report: SpectrumReport = match kind {
        PotentialKind::PoschlTeller | PotentialKind::Oscillator | PotentialKind::Free => {
            let l = c.half_width.unwrap_or(20.0);
            let g = Grid1D::new(-l, l, c.points.unwrap_or(4001))?;
            let kappa = c.kappa.unwrap_or(1.0);
            let u = ScalarField::sample(Domain::Line(g), |x| match kind {
                PotentialKind::PoschlTeller => -2.0 * kappa * kappa / (kappa * x[0]).cosh().powi(2),
                PotentialKind::Oscillator => x[0] * x[0],
                _ => 0.0,
            })?;
            solve_1d(&u, count, tol)?
        }
        _ => {
            let (alpha, b, k) = (c.alpha.unwrap_or(1.0), c.b.unwrap_or(1.0), c.k.unwrap_or(1.0));
            let u = move |r: f64| match kind {
                PotentialKind::Coulomb => -alpha / r,
                PotentialKind::RepulsiveCoulomb => alpha / r,
                PotentialKind::CylinderMinus => k * k / (r * r) - b * (2.0 * k - 1.0) / r,
                _ => k * k / (r * r) - b * (2.0 * k + 1.0) / r,
            };
            let r_max = c.r_max.unwrap_or(60.0);
            let h = r_max / c.points.unwrap_or(6000) as f64;
            let mut out = SpectrumReport {
                levels: Vec::new(),
                solver: Vec::new(),
            };
            for m in 0..=c.mmax.unwrap_or(0) {
                out = out.merge(solve_radial_extrapolated(u, m, r_max, h, count, 1e-13)?);
            }
            out
        }
    };
    report.write_csv(ctx.file("spectrum.csv")?)?;
    ctx.json("spectrum.json", &report)?;
    println!("spectrum: {} bound levels", report.levels.len());
    for l in &report.levels {
        println!(
            "  m={} N={} E={:.10} residual={:.3e}",
            l.m.map_or("-".into(), |m| m.to_string()),
            l.n,
            l.energy,
            l.residual
        );
    }
    Ok(0)
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let file = match &cli.config {
        Some(p) => RunConfig::from_json_file(p)?,
        None => RunConfig::default(),
    };
    let name = cli.command.name();
    if let Some(cmd) = &file.command {
        if cmd != name {
            return Err(Error::InvalidParameter(format!(
                "config file is for command {cmd}, not {name}"
            )));
        }
    }
    let mut flags = cli.command.flags()?;
    flags.seed = cli.seed;
    let config = file.overlay(&flags);
    config.validate()?;
    let out = config.out_dir(cli.out.as_ref());
    let ctx = Context { config, out };
    match cli.command {
        Command::Pair1d(_) => cmd_pair1d(&ctx),
        Command::Pair2d(_) => cmd_pair2d(&ctx),
        Command::Cylinder(_) => cmd_cylinder(&ctx),
        Command::Algebra(_) => cmd_algebra(&ctx),
        Command::Spectrum(_) => cmd_spectrum(&ctx),
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_prefers_top_values() {
        let file = RunConfig {
            b: Some(2.0),
            k: Some(1.0),
            ..Default::default()
        };
        let flags = RunConfig {
            b: Some(3.0),
            ..Default::default()
        };
        let c = file.overlay(&flags);
        assert_eq!(c.b, Some(3.0));
        assert_eq!(c.k, Some(1.0));
    }

    #[test]
    fn validation_names_the_parameter() {
        let c = RunConfig {
            lambda: Some(1.5),
            ..Default::default()
        };
        let e = c.validate().unwrap_err();
        assert!(e.is_usage());
        assert!(e.to_string().contains("lambda must lie in [0, 1]"));
        let c = RunConfig {
            n: Some(5),
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"bee": 1}"#).is_err());
        let c: RunConfig = serde_json::from_str(r#"{"b": 1.5, "pin": [1, 0], "potential": "cylinder-plus"}"#).unwrap();
        assert_eq!(c.pin, Some((1, 0)));
        assert_eq!(c.potential, Some(PotentialKind::CylinderPlus));
    }
}
