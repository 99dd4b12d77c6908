//! Seeded random games, batch sweeps and trajectory dumps.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::{self, Algorithm, DynamicsConfig, RunResult, StopReason, StoppingRule};
use crate::equilibrium::{self, EquilibriumResult};
use crate::error::{Error, Result};
use crate::game::{PayoffMatrix, StrategyProfile};
use crate::metrics;

/// Bit-exact header of the batch CSV.
pub const BATCH_CSV_HEADER: &str = "n,algorithm,eta,xi,reps,mean_steps,median_steps,q75,q90,q975,tmax_hit_rate";

/// Bit-exact header of the per-coordinate trajectory CSV.
pub const COORDS_CSV_HEADER: &str = "step,player,coord,prob,ibr_prob";

/// Replacement for a uniform draw of exactly zero.
const ZERO_DRAW: f64 = 1e-12;

/// Attempts at regenerating an instance whose reference equilibrium was discarded.
const MAX_REFERENCE_ATTEMPTS: u64 = 16;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a tuple of words.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x005E_ED0F_2E40_5D5E_u64, |h, &p| splitmix64(h ^ splitmix64(p)))
}

/// `n x m` game with iid entries uniform on `(0, 1]`.
pub fn random_game(n: usize, m: usize, seed: u64) -> PayoffMatrix {
    assert!(n >= 1 && m >= 1, "random_game needs n, m >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = (0..n * m)
        .map(|_| {
            let u: f64 = rng.gen();
            if u == 0.0 {
                ZERO_DRAW
            } else {
                u
            }
        })
        .collect();
    PayoffMatrix::new(n, m, entries).expect("draws lie in (0, 1]")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    Estimator,
    SupportEnum,
}

impl FromStr for ReferenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "estimator" => Ok(ReferenceKind::Estimator),
            "support_enum" => Ok(ReferenceKind::SupportEnum),
            other => Err(Error::Config(format!("unknown reference {other:?} (expected estimator or support_enum)"))),
        }
    }
}

impl ReferenceKind {
    pub fn solve(self, game: &PayoffMatrix) -> Result<EquilibriumResult> {
        match self {
            ReferenceKind::Estimator => equilibrium::estimate_nash_default(game),
            ReferenceKind::SupportEnum => equilibrium::solve_support_enum(game, 1e-10),
        }
    }
}

/// A sweep over sizes, algorithms and rates on square random games.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSpec {
    pub sizes: Vec<usize>,
    pub algorithms: Vec<Algorithm>,
    pub etas: Vec<f64>,
    pub xis: Vec<f64>,
    pub reps: usize,
    pub base_seed: u64,
    pub t_max: u64,
    pub stop: StoppingRule,
    pub reference: ReferenceKind,
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| Error::Config(format!("bad value {s:?} for {key}"))))
        .collect()
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

/// Parses integers written as `1e6` as well as `1000000`.
fn parse_count(key: &str, value: &str) -> Result<u64> {
    if let Ok(v) = value.trim().parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = parse_one(key, value)?;
    if f >= 0.0 && f.fract() == 0.0 && f < u64::MAX as f64 {
        Ok(f as u64)
    } else {
        Err(Error::Config(format!("{key} must be a non-negative integer, got {value:?}")))
    }
}

impl BatchSpec {
    /// Reads a flat `key = value` document; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let (mut sizes, mut algorithms, mut etas, mut xis) = (None, None, None, None);
        let (mut reps, mut base_seed, mut t_max, mut stop, mut reference) = (None, None, None, None, None);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "sizes" => sizes = Some(parse_list::<usize>(key, value)?),
                "algorithms" => algorithms = Some(parse_list::<Algorithm>(key, value)?),
                "etas" => etas = Some(parse_list::<f64>(key, value)?),
                "xis" => xis = Some(parse_list::<f64>(key, value)?),
                "reps" => reps = Some(parse_count(key, value)? as usize),
                "base_seed" => base_seed = Some(parse_count(key, value)?),
                "t_max" => t_max = Some(parse_count(key, value)?),
                "stop" => stop = Some(value.parse::<StoppingRule>()?),
                "reference" => reference = Some(value.parse::<ReferenceKind>()?),
                other => return Err(Error::Config(format!("line {}: unknown key {other:?}", lineno + 1))),
            }
        }
        let missing = |k: &str| Error::Config(format!("missing key {k}"));
        let algorithms: Vec<Algorithm> = algorithms.ok_or_else(|| missing("algorithms"))?;
        let xis = match xis {
            Some(x) => x,
            None if algorithms.iter().all(|a| !a.uses_xi()) => vec![0.0],
            None => return Err(missing("xis")),
        };
        let spec = Self {
            sizes: sizes.ok_or_else(|| missing("sizes"))?,
            algorithms,
            etas: etas.ok_or_else(|| missing("etas"))?,
            xis,
            reps: reps.ok_or_else(|| missing("reps"))?,
            base_seed: base_seed.unwrap_or(0),
            t_max: t_max.ok_or_else(|| missing("t_max"))?,
            stop: stop.ok_or_else(|| missing("stop"))?,
            reference: reference.unwrap_or(ReferenceKind::Estimator),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn validate(&self) -> Result<()> {
        let empty = |k: &str| Error::Config(format!("{k} must not be empty"));
        if self.sizes.is_empty() {
            return Err(empty("sizes"));
        }
        if self.algorithms.is_empty() {
            return Err(empty("algorithms"));
        }
        if self.etas.is_empty() {
            return Err(empty("etas"));
        }
        if self.xis.is_empty() {
            return Err(empty("xis"));
        }
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if self.sizes.contains(&0) {
            return Err(Error::Config("sizes must be at least 1".into()));
        }
        if matches!(self.stop, StoppingRule::CriterionKl(_))
            && self.algorithms.iter().any(|a| !a.has_intermediate())
        {
            return Err(Error::Config(format!("stop {} needs flbr or omd only", self.stop)));
        }
        if self.stop.needs_reference()
            && self.reference == ReferenceKind::SupportEnum
            && self.sizes.iter().any(|&n| n > equilibrium::SUPPORT_ENUM_MAX)
        {
            return Err(Error::Config("support_enum reference needs sizes <= 5".into()));
        }
        for cell in self.cells() {
            cell.config(self.t_max, 0)?;
        }
        Ok(())
    }

    /// Every `(n, algorithm, eta, xi)` cell in output order. MWU and OMWU get
    /// one cell per `eta` (no `xi`); OMD uses `xi = eta`.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &n in &self.sizes {
            for &algorithm in &self.algorithms {
                for &eta in &self.etas {
                    match algorithm {
                        Algorithm::Flbr => {
                            out.extend(self.xis.iter().map(|&xi| Cell { n, algorithm, eta, xi: Some(xi) }))
                        }
                        Algorithm::Omd => out.push(Cell { n, algorithm, eta, xi: Some(eta) }),
                        Algorithm::Mwu | Algorithm::Omwu => out.push(Cell { n, algorithm, eta, xi: None }),
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub n: usize,
    pub algorithm: Algorithm,
    pub eta: f64,
    pub xi: Option<f64>,
}

impl Cell {
    fn config(&self, t_max: u64, seed: u64) -> Result<DynamicsConfig> {
        Ok(DynamicsConfig::new(self.algorithm, self.eta, self.xi.unwrap_or(0.0))?
            .with_t_max(t_max)
            .with_record_every(u64::MAX)
            .with_seed(seed))
    }

    fn run_seed(&self, base_seed: u64, rep: usize) -> u64 {
        derive_seed(&[
            base_seed,
            self.n as u64,
            self.algorithm as u64,
            self.eta.to_bits(),
            self.xi.unwrap_or(f64::NAN).to_bits(),
            rep as u64,
        ])
    }
}

/// Order statistics of step counts; runs that hit `t_max` count as `t_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStatistics {
    pub mean: f64,
    pub median: f64,
    pub q75: f64,
    pub q90: f64,
    pub q975: f64,
    pub tmax_hit_rate: f64,
    pub count: usize,
}

/// Linear-interpolation quantile of a sorted sample.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl RunStatistics {
    pub fn from_samples(steps: &[u64], hits: usize) -> Self {
        assert!(!steps.is_empty(), "statistics need at least one sample");
        let mut s: Vec<f64> = steps.iter().map(|&v| v as f64).collect();
        s.sort_by(f64::total_cmp);
        Self {
            mean: s.iter().sum::<f64>() / s.len() as f64,
            median: quantile(&s, 0.5),
            q75: quantile(&s, 0.75),
            q90: quantile(&s, 0.9),
            q975: quantile(&s, 0.975),
            tmax_hit_rate: hits as f64 / s.len() as f64,
            count: s.len(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: Cell,
    pub stats: RunStatistics,
    /// Per-rep step counts, indexed by rep.
    pub steps: Vec<u64>,
    pub hit_tmax: Vec<bool>,
}

/// The game and (when required) reference equilibrium of one `(n, rep)` slot.
#[derive(Debug, Clone)]
pub struct Instance {
    pub game: PayoffMatrix,
    pub reference: Option<EquilibriumResult>,
    pub attempt: u64,
}

pub fn instance_seed(base_seed: u64, n: usize, rep: usize, attempt: u64) -> u64 {
    if attempt == 0 {
        derive_seed(&[base_seed, n as u64, rep as u64])
    } else {
        derive_seed(&[base_seed, n as u64, rep as u64, attempt])
    }
}

/// Builds the instance for `(n, rep)`, regenerating when the reference
/// estimator discards its run.
pub fn make_instance(base_seed: u64, n: usize, rep: usize, reference: Option<ReferenceKind>) -> Result<Instance> {
    for attempt in 0..MAX_REFERENCE_ATTEMPTS {
        let game = random_game(n, n, instance_seed(base_seed, n, rep, attempt));
        let Some(kind) = reference else {
            return Ok(Instance { game, reference: None, attempt });
        };
        match kind.solve(&game) {
            Ok(ne) => return Ok(Instance { game, reference: Some(ne), attempt }),
            Err(Error::Discarded { steps }) => {
                log::warn!("n={n} rep={rep} attempt={attempt}: reference discarded after {steps} steps, regenerating");
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::Numerics(format!(
        "no usable instance for n={n} rep={rep} after {MAX_REFERENCE_ATTEMPTS} attempts"
    )))
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        b = b.num_threads(t.max(1));
    }
    b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Runs every cell of `spec` over `reps` shared instances per size.
///
/// Results depend only on `spec`, not on `threads` or scheduling. A failing
/// run is counted as a `t_max` hit.
pub fn run_batch(spec: &BatchSpec, threads: Option<usize>) -> Result<Vec<CellResult>> {
    spec.validate()?;
    let pool = pool(threads)?;
    pool.install(|| {
        let reference = spec.stop.needs_reference().then_some(spec.reference);
        let slots: Vec<(usize, usize)> = spec
            .sizes
            .iter()
            .flat_map(|&n| (0..spec.reps).map(move |rep| (n, rep)))
            .collect();
        let instances: Vec<Instance> = slots
            .par_iter()
            .map(|&(n, rep)| make_instance(spec.base_seed, n, rep, reference))
            .collect::<Result<_>>()?;
        let index_of = |n: usize, rep: usize| {
            spec.sizes.iter().position(|&s| s == n).expect("size from spec") * spec.reps + rep
        };

        let cells = spec.cells();
        let tasks: Vec<(usize, usize)> = (0..cells.len())
            .flat_map(|c| (0..spec.reps).map(move |rep| (c, rep)))
            .collect();
        let outcomes: Vec<(u64, bool)> = tasks
            .par_iter()
            .map(|&(c, rep)| {
                let cell = &cells[c];
                let inst = &instances[index_of(cell.n, rep)];
                let cfg = cell.config(spec.t_max, cell.run_seed(spec.base_seed, rep)).expect("validated");
                let reference = inst.reference.as_ref().map(|r| &r.profile);
                match dynamics::run(&inst.game, &cfg, spec.stop, reference) {
                    Ok(res) if res.stop_reason == StopReason::Criterion => (res.steps, false),
                    Ok(_) => (spec.t_max, true),
                    Err(e) => {
                        log::warn!("n={} {} rep={rep}: {e}", cell.n, cell.algorithm);
                        (spec.t_max, true)
                    }
                }
            })
            .collect();

        Ok(cells
            .iter()
            .enumerate()
            .map(|(c, &cell)| {
                let chunk = &outcomes[c * spec.reps..(c + 1) * spec.reps];
                let steps: Vec<u64> = chunk.iter().map(|o| o.0).collect();
                let hit_tmax: Vec<bool> = chunk.iter().map(|o| o.1).collect();
                let hits = hit_tmax.iter().filter(|&&h| h).count();
                CellResult { cell, stats: RunStatistics::from_samples(&steps, hits), steps, hit_tmax }
            })
            .collect())
    })
}

/// Batch CSV, header included.
pub fn batch_csv(results: &[CellResult]) -> String {
    let mut out = String::new();
    writeln!(out, "{BATCH_CSV_HEADER}").unwrap();
    for r in results {
        let s = &r.stats;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.cell.n,
            r.cell.algorithm,
            r.cell.eta,
            r.cell.xi.map(|x| x.to_string()).unwrap_or_default(),
            s.count,
            s.mean,
            s.median,
            s.q75,
            s.q90,
            s.q975,
            s.tmax_hit_rate
        )
        .unwrap();
    }
    out
}

/// Runs one trajectory and writes `coords.csv` (every `record_every` steps
/// and the last one) and `metrics.csv` into `dir`.
pub fn trajectory_dump(
    game: &PayoffMatrix,
    cfg: &DynamicsConfig,
    stop: StoppingRule,
    reference: Option<&StrategyProfile>,
    initial: StrategyProfile,
    dir: impl AsRef<Path>,
) -> Result<RunResult> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let coords_path = dir.join("coords.csv");
    let file = fs::File::create(&coords_path).map_err(|e| Error::io(&coords_path, e))?;
    let mut coords = BufWriter::new(file);
    let mut io_err = None;
    let mut last_written = None;
    let write_state = |w: &mut BufWriter<fs::File>, s: &dynamics::DynamicsState| -> std::io::Result<()> {
        let p = s.current();
        let mid = s.intermediate();
        for (player, probs, ibr) in [
            ("x", p.x.probabilities(), mid.map(|m| m.x.probabilities())),
            ("y", p.y.probabilities(), mid.map(|m| m.y.probabilities())),
        ] {
            for (i, v) in probs.iter().enumerate() {
                let h = ibr.map(|h| h[i].to_string()).unwrap_or_default();
                writeln!(w, "{},{player},{i},{v},{h}", s.step())?;
            }
        }
        Ok(())
    };
    writeln!(coords, "{COORDS_CSV_HEADER}").map_err(|e| Error::io(&coords_path, e))?;
    let res = dynamics::run_observed(game, cfg, stop, reference, initial, |s| {
        if io_err.is_some() {
            return;
        }
        if s.step() % cfg.record_every == 0 {
            if let Err(e) = write_state(&mut coords, s) {
                io_err = Some(e);
            }
            last_written = Some(s.step());
        }
    })?;
    if io_err.is_none() && last_written != Some(res.state.step()) {
        io_err = write_state(&mut coords, &res.state).err();
    }
    if let Some(e) = io_err {
        return Err(Error::io(&coords_path, e));
    }
    coords.flush().map_err(|e| Error::io(&coords_path, e))?;

    let metrics_path = dir.join("metrics.csv");
    let file = fs::File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    let mut w = BufWriter::new(file);
    metrics::write_trajectory_csv(&res.records, &mut w).map_err(|e| Error::io(&metrics_path, e))?;
    w.flush().map_err(|e| Error::io(&metrics_path, e))?;
    Ok(res)
}
