use std::fmt;
use std::path::PathBuf;

use super::config::{LoadedConfig, RunConfig, RunInfo};
use super::tables::{fmt_f64, write_atomic, Table};
use crate::calibrate::{calibrate_coarse, CalibrationReport};
use crate::error::{Error, Result};
use crate::market::{CostTarget, HestonParams, MarketQuote};
use crate::mc::{asian_put_price, european_put_price_mc};
use crate::pde::{build_grid, time_refinement_study, PdeProblem};
use crate::space_map::{run_asm, AsmReport, CoarseSetup, McFineModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    PriceMc,
    PricePde,
    CalibrateCoarse,
    CalibrateAsm,
    ConvergenceReport,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::PriceMc => "price-mc",
            Command::PricePde => "price-pde",
            Command::CalibrateCoarse => "calibrate-coarse",
            Command::CalibrateAsm => "calibrate-asm",
            Command::ConvergenceReport => "convergence-report",
        })
    }
}

/// Restricts a run to one quote and/or one guess.
#[derive(Debug, Clone, Default)]
pub struct Selection {
    pub quote: Option<String>,
    pub guess: Option<String>,
}

/// A (quote, guess) pair that failed while the others went on.
#[derive(Debug)]
pub struct PairFailure {
    pub quote_id: String,
    pub guess_id: String,
    pub error: Error,
}

#[derive(Debug, Default)]
pub struct RunOutcome {
    pub written: Vec<PathBuf>,
    pub failures: Vec<PairFailure>,
}

impl RunOutcome {
    pub fn any_numerical_failure(&self) -> bool {
        self.failures.iter().any(|f| f.error.is_numerical())
    }
}

fn param_cells(p: &HestonParams) -> Vec<String> {
    p.to_vector().iter().map(|v| fmt_f64(*v)).collect()
}

fn with_ids(q: &str, g: &str, rest: Vec<String>) -> Vec<String> {
    let mut row = vec![q.to_string(), g.to_string()];
    row.extend(rest);
    row
}

fn select(cfg: &RunConfig, sel: &Selection) -> Result<RunConfig> {
    let mut out = cfg.clone();
    if let Some(id) = &sel.quote {
        out.quotes.retain(|q| &q.id == id);
        if out.quotes.is_empty() {
            return Err(Error::Config(format!("--quote: no quote with id \"{id}\"")));
        }
    }
    if let Some(id) = &sel.guess {
        out.guesses.retain(|g| &g.id == id);
        if out.guesses.is_empty() {
            return Err(Error::Config(format!("--guess: no guess with id \"{id}\"")));
        }
    }
    Ok(out)
}

type Pairs = Vec<(String, MarketQuote, String, HestonParams)>;

fn pairs(cfg: &RunConfig) -> Pairs {
    let mut v = Vec::new();
    for (qid, q) in cfg.market_quotes() {
        for (gid, g) in cfg.initial_guesses() {
            v.push((qid.clone(), q.clone(), gid, g));
        }
    }
    v
}

struct Writer {
    dir: PathBuf,
    outcome: RunOutcome,
}

impl Writer {
    fn table(&mut self, name: &str, t: &Table) -> Result<()> {
        let p = self.dir.join(name);
        t.write(&p)?;
        self.outcome.written.push(p);
        Ok(())
    }

    fn fail(&mut self, q: &str, g: &str, error: Error) {
        log::warn!("quote {q}, guess {g}: {error}");
        self.outcome.failures.push(PairFailure {
            quote_id: q.to_string(),
            guess_id: g.to_string(),
            error,
        });
    }
}

/// Runs `cmd` over every selected (quote, guess) pair and writes its CSV
/// files, `failures.csv` and a `manifest.toml` that reproduces the run.
pub fn execute(cmd: Command, loaded: &LoadedConfig, sel: &Selection) -> Result<RunOutcome> {
    let cfg = select(&loaded.config, sel)?;
    cfg.validate()?;
    let mut w = Writer {
        dir: loaded.out_dir.clone(),
        outcome: RunOutcome::default(),
    };
    match cmd {
        Command::PriceMc => price_mc(&cfg, &mut w)?,
        Command::PricePde => price_pde(&cfg, &mut w)?,
        Command::CalibrateCoarse => calibrate(&cfg, &mut w)?,
        Command::CalibrateAsm => asm(&cfg, &mut w)?,
        Command::ConvergenceReport => convergence(&cfg, &mut w)?,
    }

    let mut failures = Table::new(&["quote_id", "guess_id", "numerical", "message"]);
    for f in &w.outcome.failures {
        failures.push(with_ids(
            &f.quote_id,
            &f.guess_id,
            vec![f.error.is_numerical().to_string(), f.error.to_string()],
        ));
    }
    w.table("failures.csv", &failures)?;

    let mut manifest = cfg.clone();
    manifest.out = PathBuf::from(".");
    manifest.run = Some(RunInfo {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: cmd.to_string(),
    });
    let p = w.dir.join("manifest.toml");
    write_atomic(&p, manifest.to_toml_string()?.as_bytes())?;
    w.outcome.written.push(p);
    Ok(w.outcome)
}

const PRICE_HEADER: [&str; 7] = ["quote_id", "guess_id", "model", "price", "std_error", "n_paths", "seed"];

fn price_mc(cfg: &RunConfig, w: &mut Writer) -> Result<()> {
    let mut t = Table::new(&PRICE_HEADER);
    for (qid, q, gid, g) in pairs(cfg) {
        log::info!("price-mc: quote {qid}, guess {gid}");
        let res = asian_put_price(&g, &q, &cfg.mc)
            .and_then(|a| Ok((a, european_put_price_mc(&g, &q, &cfg.mc)?)));
        match res {
            Ok((a, e)) => {
                for (model, est) in [("mc_asian_put", a), ("mc_european_put", e)] {
                    t.push(with_ids(
                        &qid,
                        &gid,
                        vec![
                            model.into(),
                            fmt_f64(est.price),
                            fmt_f64(est.std_error),
                            est.n_paths.to_string(),
                            est.seed.to_string(),
                        ],
                    ));
                }
            }
            Err(e) => w.fail(&qid, &gid, e),
        }
    }
    w.table("prices.csv", &t)
}

fn price_pde(cfg: &RunConfig, w: &mut Writer) -> Result<()> {
    let mut t = Table::new(&PRICE_HEADER);
    for (qid, q, gid, g) in pairs(cfg) {
        log::info!("price-pde: quote {qid}, guess {gid}");
        let res = build_grid(&q, cfg.nu0, &cfg.grid).and_then(|grid| {
            let prob = PdeProblem::new(g, &q, grid, cfg.pde)?;
            let surface = prob.surface()?;
            match prob.output_from_surface(&surface, &CostTarget::Scalar(0.0))? {
                CostTarget::Scalar(v) => Ok((surface, v)),
                CostTarget::Trajectory(_) => unreachable!("scalar target"),
            }
        });
        let (surface, price) = match res {
            Ok(v) => v,
            Err(e) => {
                w.fail(&qid, &gid, e);
                continue;
            }
        };
        t.push(with_ids(
            &qid,
            &gid,
            vec!["pde_european_put".into(), fmt_f64(price), fmt_f64(0.0), "0".into(), "0".into()],
        ));
        if cfg.dump_surface {
            let mut bytes = Vec::new();
            surface
                .write_csv(&mut bytes)
                .map_err(|e| Error::io(&w.dir, e))?;
            let p = w.dir.join(format!("surface_{qid}_{gid}.csv"));
            write_atomic(&p, &bytes)?;
            w.outcome.written.push(p);
        }
    }
    w.table("prices.csv", &t)
}

fn coarse_setup(cfg: &RunConfig, q: &MarketQuote) -> Result<CoarseSetup> {
    Ok(CoarseSetup {
        grid: build_grid(q, cfg.nu0, &cfg.grid)?,
        pde: cfg.pde,
        descent: cfg.descent,
    })
}

const ITERATE_PARAMS: [&str; 7] = ["quote_id", "guess_id", "iter", "sigma_nu", "rho", "kappa_nu", "mu_nu"];

fn header(extra: &[&'static str]) -> Vec<&'static str> {
    ITERATE_PARAMS.iter().chain(extra).copied().collect()
}

/// Quote-by-guess matrix of one number per pair; failed pairs stay empty.
struct Matrix {
    guesses: Vec<String>,
    rows: Vec<(String, Vec<String>)>,
}

impl Matrix {
    fn new(cfg: &RunConfig) -> Self {
        Self {
            guesses: cfg.guesses.iter().map(|g| g.id.clone()).collect(),
            rows: cfg.quotes.iter().map(|q| (q.id.clone(), vec![String::new(); cfg.guesses.len()])).collect(),
        }
    }

    fn set(&mut self, q: &str, g: &str, v: f64) {
        let j = self.guesses.iter().position(|x| x == g).expect("known guess");
        let row = self.rows.iter_mut().find(|r| r.0 == q).expect("known quote");
        row.1[j] = fmt_f64(v);
    }

    fn table(&self) -> Table {
        let mut h = vec!["quote_id"];
        h.extend(self.guesses.iter().map(String::as_str));
        let mut t = Table::new(&h);
        for (q, cells) in &self.rows {
            let mut row = vec![q.clone()];
            row.extend(cells.iter().cloned());
            t.push(row);
        }
        t
    }
}

fn calibrate(cfg: &RunConfig, w: &mut Writer) -> Result<()> {
    let mut it = Table::new(&header(&["J", "step", "grad_norm"]));
    let mut red = Matrix::new(cfg);
    let mut summary = Table::new(&[
        "quote_id",
        "guess_id",
        "initial_cost",
        "final_cost",
        "reduction_pct",
        "iterations",
        "stop",
        "sigma_nu",
        "rho",
        "kappa_nu",
        "mu_nu",
    ]);
    for (qid, q, gid, g) in pairs(cfg) {
        log::info!("calibrate-coarse: quote {qid}, guess {gid}");
        let res: Result<CalibrationReport> = coarse_setup(cfg, &q).and_then(|c| {
            calibrate_coarse(&CostTarget::Scalar(q.observed_price), &g, &q, &c.grid, &c.pde, &c.descent)
        });
        let rep = match res {
            Ok(r) => r,
            Err(e) => {
                w.fail(&qid, &gid, e);
                continue;
            }
        };
        for r in &rep.iterates {
            let mut row = vec![r.iter.to_string()];
            row.extend(param_cells(&r.params));
            row.extend([fmt_f64(r.cost), fmt_f64(r.step), fmt_f64(r.grad_norm)]);
            it.push(with_ids(&qid, &gid, row));
        }
        red.set(&qid, &gid, rep.reduction_pct);
        let mut row = vec![
            fmt_f64(rep.iterates[0].cost),
            fmt_f64(rep.final_cost),
            fmt_f64(rep.reduction_pct),
            (rep.iterates.len() - 1).to_string(),
            format!("{:?}", rep.stop).to_lowercase(),
        ];
        row.extend(param_cells(&rep.final_params));
        summary.push(with_ids(&qid, &gid, row));
    }
    w.table("iterates.csv", &it)?;
    w.table("reductions.csv", &red.table())?;
    w.table("summary.csv", &summary)
}

fn asm(cfg: &RunConfig, w: &mut Writer) -> Result<()> {
    let mut it = Table::new(&header(&["J", "step", "residual"]));
    let mut detail = Table::new(&header(&[
        "fine_price",
        "fine_std_error",
        "s_sigma_nu",
        "s_rho",
        "s_kappa_nu",
        "s_mu_nu",
    ]));
    let mut red = Matrix::new(cfg);
    let mut red_initial = Matrix::new(cfg);
    let mut summary = Table::new(&[
        "quote_id",
        "guess_id",
        "initial_cost",
        "first_cost",
        "best_k",
        "best_cost",
        "reduction_vs_first_pct",
        "reduction_vs_initial_pct",
        "converged",
        "sigma_nu",
        "rho",
        "kappa_nu",
        "mu_nu",
    ]);
    let fine = McFineModel { config: cfg.mc };
    for (qid, q, gid, g) in pairs(cfg) {
        log::info!("calibrate-asm: quote {qid}, guess {gid}");
        let res: Result<AsmReport> =
            coarse_setup(cfg, &q).and_then(|c| run_asm(&fine, &q, &g, &c, &cfg.asm));
        let rep = match res {
            Ok(r) => r,
            Err(e) => {
                w.fail(&qid, &gid, e);
                continue;
            }
        };
        for r in &rep.iterates {
            let step = r.step.iter().map(|h| h * h).sum::<f64>().sqrt();
            let mut row = vec![r.k.to_string()];
            row.extend(param_cells(&r.xi_f));
            row.extend([fmt_f64(r.fine_cost), fmt_f64(step), fmt_f64(r.residual)]);
            it.push(with_ids(&qid, &gid, row));

            let mut row = vec![r.k.to_string()];
            row.extend(param_cells(&r.xi_f));
            row.extend([fmt_f64(r.fine_price), fmt_f64(r.fine_std_error)]);
            row.extend(param_cells(&r.s));
            detail.push(with_ids(&qid, &gid, row));
        }
        red.set(&qid, &gid, rep.reduction_vs_first);
        red_initial.set(&qid, &gid, rep.reduction_vs_initial);
        let best = &rep.iterates[rep.best];
        let mut row = vec![
            fmt_f64(rep.fine_cost_initial),
            fmt_f64(rep.iterates[0].fine_cost),
            best.k.to_string(),
            fmt_f64(best.fine_cost),
            fmt_f64(rep.reduction_vs_first),
            fmt_f64(rep.reduction_vs_initial),
            rep.converged.to_string(),
        ];
        row.extend(param_cells(&best.xi_f));
        summary.push(with_ids(&qid, &gid, row));
    }
    w.table("iterates.csv", &it)?;
    w.table("asm_details.csv", &detail)?;
    w.table("reductions.csv", &red.table())?;
    w.table("reductions_vs_initial.csv", &red_initial.table())?;
    w.table("summary.csv", &summary)
}

fn convergence(cfg: &RunConfig, w: &mut Writer) -> Result<()> {
    let mut t = Table::new(&["quote_id", "guess_id", "n_tau", "price", "diff_inf", "ratio"]);
    for (qid, q, gid, g) in pairs(cfg) {
        log::info!("convergence-report: quote {qid}, guess {gid}");
        let res = time_refinement_study(
            &g,
            &q,
            &cfg.grid,
            &cfg.pde,
            cfg.convergence.base_n_tau,
            cfg.convergence.refinements,
        );
        match res {
            Ok(rows) => {
                for r in rows {
                    t.push(with_ids(
                        &qid,
                        &gid,
                        vec![r.n_tau.to_string(), fmt_f64(r.price), fmt_f64(r.diff_inf), fmt_f64(r.ratio)],
                    ));
                }
            }
            Err(e) => w.fail(&qid, &gid, e),
        }
    }
    w.table("convergence.csv", &t)
}
