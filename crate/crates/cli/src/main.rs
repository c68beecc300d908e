use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use mpclo::duality::{value, ValueVariant};
use mpclo::io::{digest, read_problem};
use mpclo::mappings::{
    directional_derivative, map_eval, map_membership, theta_membership, DerivativeValue, MapOptions, MapStatus, Side,
};
use mpclo::model::{validate_instance, Family, ModelTolerances, MpcloInstance, RawInstance};
use mpclo::partition::{decompose, verify_decomposition, PartitionOptions, RegionDecomposition, Window};
use mpclo::report::{
    exit_code, fmt_num, fmt_vec, pairing_csv, pairing_rows, regions_csv, regions_svg, RunResult, SavedPartition,
    EXIT_VERIFY,
};
use mpclo::solver::{Status, SupportValue};
use mpclo::Error;

#[derive(Parser, Debug)]
#[command(name = "mpclo", version, about = "Multiparametric conic linear optimization toolkit")]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug, Clone)]
struct Shared {
    /// Membership and verification tolerance; also the relative orthogonality tolerance
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Worker threads for grid work (1 = sequential, 0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Seed recorded with the run for reproducible batch use
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write a CSV table here
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    /// Write an SVG plot here (two parameters only)
    #[arg(long, global = true)]
    svg: Option<PathBuf>,
    /// Write the machine-readable run result here
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the structural assumptions of a problem file
    Validate { file: PathBuf },
    /// Solve one problem family at one parameter
    Solve {
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(long, allow_hyphen_values = true)]
        at: String,
        file: PathBuf,
    },
    /// Evaluate phi (dual side) or psi (primal side) at a parameter
    Map {
        #[arg(long)]
        side: Side,
        #[arg(long, allow_hyphen_values = true)]
        at: String,
        file: PathBuf,
    },
    /// Representable-set membership, or map membership with --candidate
    Member {
        #[arg(long)]
        side: Side,
        #[arg(long, allow_hyphen_values = true)]
        at: String,
        #[arg(long, allow_hyphen_values = true)]
        candidate: Option<String>,
        file: PathBuf,
    },
    /// Directional derivative of the optimal value function
    Derivative {
        #[arg(long)]
        side: Side,
        #[arg(long, allow_hyphen_values = true)]
        at: String,
        #[arg(long, allow_hyphen_values = true)]
        dir: String,
        file: PathBuf,
    },
    /// Decompose a parameter window into invariancy regions and verify it
    Partition {
        #[arg(long)]
        side: Side,
        /// a:b for one parameter, a:b,c:d for two
        #[arg(long, allow_hyphen_values = true)]
        window: String,
        /// N or N,M
        #[arg(long)]
        grid: String,
        /// One parameter only: decompose both sides and write the paired table
        #[arg(long)]
        pairing: bool,
        file: PathBuf,
    },
    /// Re-render a saved partition result
    Report { saved: PathBuf },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FamilyArg {
    Primal,
    Dual,
    NsdualP,
    NsdualD,
}

impl FamilyArg {
    fn variant(self) -> ValueVariant {
        match self {
            FamilyArg::Primal => ValueVariant::PStar,
            FamilyArg::Dual => ValueVariant::DStar,
            FamilyArg::NsdualP => ValueVariant::DBarStar,
            FamilyArg::NsdualD => ValueVariant::PBarStar,
        }
    }

    fn family(self) -> Family {
        self.variant().family()
    }
}

/// A failed run: exit code plus the message for stderr.
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: msg.into(),
    }
}

type Outcome = Result<(), Failure>;

struct Ctx {
    shared: Shared,
    lines: Vec<String>,
    outputs: Vec<String>,
    summary: BTreeMap<String, String>,
    digest: String,
}

impl Ctx {
    fn say(&mut self, line: String) {
        println!("{line}");
        self.lines.push(line);
    }

    fn map_opts(&self) -> MapOptions {
        let mut o = MapOptions::default();
        if let Some(t) = self.shared.tol {
            o.mem_tol = t;
        }
        o
    }

    fn model_tol(&self) -> ModelTolerances {
        let mut t = ModelTolerances::default();
        if let Some(x) = self.shared.tol {
            t.orth_rel = x;
        }
        t
    }

    fn load_raw(&mut self, path: &Path) -> Result<RawInstance, Failure> {
        let raw = read_problem(path)?;
        self.digest = digest(&raw);
        Ok(raw)
    }

    fn load(&mut self, path: &Path) -> Result<MpcloInstance, Failure> {
        let raw = self.load_raw(path)?;
        Ok(MpcloInstance::with_tolerances(raw, &self.model_tol())?)
    }

    fn write(&mut self, path: &Path, text: &str) -> Outcome {
        fs::write(path, text).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
        self.outputs.push(path.display().to_string());
        Ok(())
    }
}

fn parse_vec(s: &str, what: &str) -> Result<DVector<f64>, Failure> {
    let vals: Result<Vec<f64>, _> = s.split(',').map(|x| x.trim().parse::<f64>()).collect();
    match vals {
        Ok(v) if !v.is_empty() && v.iter().all(|x| x.is_finite()) => Ok(DVector::from_vec(v)),
        _ => Err(usage(format!("cannot parse {what} '{s}'"))),
    }
}

fn parse_window(s: &str) -> Result<Window, Failure> {
    let axes: Result<Vec<(f64, f64)>, Failure> = s
        .split(',')
        .map(|part| {
            let (a, b) = part
                .split_once(':')
                .ok_or_else(|| usage(format!("window axis '{part}' is not a:b")))?;
            let a = a.trim().parse::<f64>().map_err(|_| usage(format!("bad window bound '{a}'")))?;
            let b = b.trim().parse::<f64>().map_err(|_| usage(format!("bad window bound '{b}'")))?;
            Ok((a, b))
        })
        .collect();
    Ok(Window { axes: axes? })
}

fn parse_grid(s: &str) -> Result<Vec<usize>, Failure> {
    s.split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|_| usage(format!("bad grid size '{x}'"))))
        .collect()
}

/// Shortest decimal that survives rounding to nine significant digits.
fn short(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{}", if x == 0.0 { 0.0 } else { x });
    }
    let r: f64 = format!("{x:.8e}").parse().unwrap_or(x);
    format!("{r}")
}

fn validate_cmd(ctx: &mut Ctx, file: &Path) -> Outcome {
    let raw = ctx.load_raw(file)?;
    let rep = match validate_instance(&raw, &ctx.model_tol()) {
        Ok(rep) => rep,
        Err(e) => match e.check() {
            Some(c) => return Err(usage(format!("validation failed: {} ({e})", c.name()))),
            None => return Err(e.into()),
        },
    };
    let rows: Vec<String> = rep
        .gram
        .iter()
        .map(|row| format!("[{}]", row.iter().map(|&x| short(x)).collect::<Vec<_>>().join(",")))
        .collect();
    ctx.say(format!("assumption2_exact={} gram=[{}]", rep.assumption2_exact, rows.join(",")));
    ctx.say(format!(
        "rank_a={} rank_b={} rank_m={} rank_deficit={} b_completed={}",
        rep.rank_a, rep.rank_b, rep.rank_m, rep.rank_deficit, rep.b_completed
    ));
    ctx.say(format!(
        "residual_am={} residual_ab={} residual_bm={} orth_tol={}",
        fmt_num(rep.residual_am),
        fmt_num(rep.residual_ab),
        fmt_num(rep.residual_bm),
        fmt_num(rep.orth_tol)
    ));
    ctx.summary.insert("pass".into(), rep.pass.to_string());
    if !rep.pass {
        let names: Vec<&str> = rep.failed.iter().map(|c| c.name()).collect();
        return Err(usage(format!("validation failed: {}", names.join(","))));
    }
    Ok(())
}

fn solve_cmd(ctx: &mut Ctx, family: FamilyArg, at: &str, file: &Path) -> Outcome {
    let inst = ctx.load(file)?;
    let p = parse_vec(at, "--at")?;
    let opts = ctx.map_opts().solver;
    match value(&inst, family.variant(), &p, &opts) {
        Ok(q) => {
            ctx.say(format!(
                "family={} status=optimal value={} x={}",
                family.family().name(),
                fmt_num(q.value),
                fmt_vec(&q.witness.x)
            ));
            ctx.summary.insert("value".into(), fmt_num(q.value));
            Ok(())
        }
        Err(Error::NotSolvable { status }) => {
            let name = match status {
                Status::Optimal => "optimal",
                Status::Infeasible => "infeasible",
                Status::Unbounded => "unbounded",
                Status::MaxIter => "max_iter",
                Status::NumericalTrouble => "numerical_trouble",
            };
            ctx.say(format!("family={} status={name}", family.family().name()));
            Err(Failure {
                code: 3,
                message: format!("solver status {name}"),
            })
        }
        Err(e) => Err(e.into()),
    }
}

fn map_cmd(ctx: &mut Ctx, side: Side, at: &str, file: &Path) -> Outcome {
    let inst = ctx.load(file)?;
    let p = parse_vec(at, "--at")?;
    let sample = match map_eval(&inst, side, &p, &ctx.map_opts()) {
        Ok(s) => s,
        Err(Error::OutsideTheta) => {
            ctx.say("status=outside".into());
            ctx.summary.insert("status".into(), "outside".into());
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };
    let line = match sample.status {
        MapStatus::Undefined => "status=undefined".to_string(),
        MapStatus::Point => {
            let pt = sample.point.as_ref().expect("point-valued sample");
            if pt.len() == 1 {
                format!("status=point value={}", fmt_num(pt[0]))
            } else {
                format!("status=point value={}", fmt_vec(pt))
            }
        }
        MapStatus::Set => {
            let parts: Vec<String> = sample
                .support
                .iter()
                .map(|s| {
                    let h = match s.value {
                        SupportValue::Finite(h) => fmt_num(h),
                        SupportValue::Unbounded => "inf".into(),
                    };
                    format!("{}:{h}", fmt_vec(&s.direction))
                })
                .collect();
            format!("status=set width={} support={}", fmt_num(sample.width), parts.join(" "))
        }
    };
    ctx.summary.insert("status".into(), format!("{:?}", sample.status).to_lowercase());
    ctx.say(line);
    Ok(())
}

fn member_cmd(ctx: &mut Ctx, side: Side, at: &str, candidate: Option<&str>, file: &Path) -> Outcome {
    let inst = ctx.load(file)?;
    let p = parse_vec(at, "--at")?;
    let opts = ctx.map_opts();
    match candidate {
        None => {
            let t = theta_membership(&inst, side, &p, &opts.solver)?;
            let status = match t.status {
                mpclo::cones::Membership::Interior { .. } => "interior",
                mpclo::cones::Membership::Boundary { .. } => "boundary",
                mpclo::cones::Membership::Outside { .. } => "outside",
            };
            ctx.say(format!(
                "member={} status={status} margin={}",
                t.is_member(),
                fmt_num(t.status.margin())
            ));
            ctx.summary.insert("member".into(), t.is_member().to_string());
        }
        Some(c) => {
            let w = parse_vec(c, "--candidate")?;
            let m = map_membership(&inst, side, &p, &w, &opts)?;
            ctx.say(format!("member={} residual={}", m.member, fmt_num(m.residual)));
            ctx.summary.insert("member".into(), m.member.to_string());
        }
    }
    Ok(())
}

fn derivative_cmd(ctx: &mut Ctx, side: Side, at: &str, dir: &str, file: &Path) -> Outcome {
    let inst = ctx.load(file)?;
    let p = parse_vec(at, "--at")?;
    let h = parse_vec(dir, "--dir")?;
    let d = directional_derivative(&inst, side, &p, &h, &ctx.map_opts())?;
    let v = match d.value {
        DerivativeValue::Finite(x) => fmt_num(x),
        DerivativeValue::NegInfinity => "-inf".into(),
    };
    let fd = d.fd_check.map(fmt_num).unwrap_or_else(|| "none".into());
    ctx.say(format!("value={v} fd={fd}"));
    ctx.summary.insert("value".into(), v);
    Ok(())
}

fn print_decomposition(ctx: &mut Ctx, dec: &RegionDecomposition) {
    for reg in &dec.regions {
        let mut line = format!("region={} kind={} samples={}", reg.id, reg.kind.name(), reg.samples.len());
        if let Some((a, b)) = reg.interval {
            line += &format!(" interval={}:{}", fmt_num(a), fmt_num(b));
        }
        if let Some(img) = dec.image(reg) {
            line += &format!(" image={}", fmt_vec(&img));
        }
        ctx.say(line);
    }
}

fn emit_partition(ctx: &mut Ctx, dec: &RegionDecomposition) -> Outcome {
    if let Some(path) = ctx.shared.csv.clone() {
        let text = regions_csv(dec)?;
        ctx.write(&path, &text)?;
    }
    if let Some(path) = ctx.shared.svg.clone() {
        let text = regions_svg(dec)?;
        ctx.write(&path, &text)?;
    }
    Ok(())
}

fn partition_cmd(ctx: &mut Ctx, side: Side, window: &str, grid: &str, pairing: bool, file: &Path) -> Outcome {
    let inst = ctx.load(file)?;
    let window = parse_window(window)?;
    let grid = parse_grid(grid)?;
    let opts = PartitionOptions {
        map: ctx.map_opts(),
        jobs: ctx.shared.jobs,
        ..PartitionOptions::default()
    };
    if pairing {
        let dual = decompose(&inst, Side::Dual, &window, &grid, &opts)?;
        let primal = decompose(&inst, Side::Primal, &window, &grid, &opts)?;
        let rows = pairing_rows(&inst, &dual, &primal, &opts.map.solver)?;
        for row in &rows {
            ctx.say(format!("v={} u={}", row.v.render(), row.u.render()));
        }
        ctx.summary.insert("rows".into(), rows.len().to_string());
        if let Some(path) = ctx.shared.csv.clone() {
            let text = pairing_csv(&rows)?;
            ctx.write(&path, &text)?;
        }
        return Ok(());
    }
    let dec = match decompose(&inst, side, &window, &grid, &opts) {
        Ok(d) => d,
        Err(Error::WindowOutsideTheta) => RegionDecomposition::empty(side, &window, &grid),
        Err(e) => return Err(e.into()),
    };
    print_decomposition(ctx, &dec);
    let report = verify_decomposition(&inst, &dec, &opts);
    for c in &report.checks {
        ctx.say(format!("check={} pass={} tested={}", c.name, c.pass, c.tested));
    }
    ctx.summary.insert("regions".into(), dec.regions.len().to_string());
    ctx.summary.insert("verified".into(), report.pass().to_string());
    emit_partition(ctx, &dec)?;
    if let Some(path) = ctx.shared.out.clone() {
        let saved = SavedPartition {
            run: run_result(ctx, if report.pass() { 0 } else { EXIT_VERIFY }),
            decomposition: dec.clone(),
        };
        let text = serde_json::to_string_pretty(&saved).map_err(|e| usage(e.to_string()))?;
        ctx.write(&path, &text)?;
    }
    if !report.pass() {
        let failed: Vec<String> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
        return Err(Failure {
            code: EXIT_VERIFY,
            message: format!("verification failed: {}", failed.join(",")),
        });
    }
    Ok(())
}

fn report_cmd(ctx: &mut Ctx, saved: &Path) -> Outcome {
    let text = fs::read_to_string(saved).map_err(|e| usage(format!("cannot read {}: {e}", saved.display())))?;
    let saved: SavedPartition = serde_json::from_str(&text).map_err(|e| usage(format!("bad saved result: {e}")))?;
    ctx.digest = saved.run.digest.clone();
    print_decomposition(ctx, &saved.decomposition);
    emit_partition(ctx, &saved.decomposition)
}

fn run_result(ctx: &Ctx, code: i32) -> RunResult {
    RunResult {
        command: std::env::args().collect(),
        digest: ctx.digest.clone(),
        outputs: ctx.outputs.clone(),
        summary: ctx.summary.clone(),
        exit_code: code,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut ctx = Ctx {
        shared: cli.shared.clone(),
        lines: Vec::new(),
        outputs: Vec::new(),
        summary: BTreeMap::new(),
        digest: String::new(),
    };
    ctx.summary.insert("seed".into(), cli.shared.seed.to_string());
    let outcome = match &cli.cmd {
        Command::Validate { file } => validate_cmd(&mut ctx, file),
        Command::Solve { family, at, file } => solve_cmd(&mut ctx, *family, at, file),
        Command::Map { side, at, file } => map_cmd(&mut ctx, *side, at, file),
        Command::Member {
            side,
            at,
            candidate,
            file,
        } => member_cmd(&mut ctx, *side, at, candidate.as_deref(), file),
        Command::Derivative { side, at, dir, file } => derivative_cmd(&mut ctx, *side, at, dir, file),
        Command::Partition {
            side,
            window,
            grid,
            pairing,
            file,
        } => partition_cmd(&mut ctx, *side, window, grid, *pairing, file),
        Command::Report { saved } => report_cmd(&mut ctx, saved),
    };
    let code = match &outcome {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    };
    // partition writes its own result file with the decomposition attached
    let wrote_saved = matches!(cli.cmd, Command::Partition { pairing: false, .. });
    if let (Some(path), false) = (cli.shared.out.clone(), wrote_saved) {
        let rr = run_result(&ctx, code);
        match serde_json::to_string_pretty(&rr) {
            Ok(text) => {
                if let Err(e) = fs::write(&path, text) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                }
            }
            Err(e) => eprintln!("error: {e}"),
        }
    }
    ExitCode::from(code as u8)
}
