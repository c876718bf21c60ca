//! Subcommand implementations. Each pipeline reads its settings from the
//! configuration, writes its outputs into the output directory and records
//! them in the manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fput::basis::{assemble_hamiltonian, enumerate_sector, ModelParams, SectorBasis};
use fput::classical::{
    alpha_ratio, integrate, momentum_variance_series, analyze_transport, sali_map, sos_bounds, sos_section, EnsembleSpec,
    IntegratorOptions, PhasePoint, SosGrid, SosGridSpec, SALI_THRESHOLD,
};
use fput::husimi::{
    config_bounds, project_complete, project_config, project_shell, qsos, CircularState, FieldKind, HusimiField, DEFAULT_NODES,
    LOG_FLOOR,
};
use fput::model::Potential;
use fput::spectral::{
    dos_curve, eig_dense_bounded, eig_window, integrated_dos, EigenWindow, SolverOptions, WindowSpec, DENSE_MAX_DIM,
    PER_SECTOR_FACTOR,
};
use fput::stats::{
    fit_beta, fit_power_law, histogram, m_histogram, mixed_fraction, overlap_index, random_unit_vector, state_stats, ChaosMap, StateStats,
    DEFAULT_M_CHAOTIC, M_BINS, WINDOW_WIDE,
};
use fput::wigner::{cartesian_coefficients, Route};
use fput::{Error, Result};

use crate::cache::{model_key_text, Cache, CacheStatus, ENV_CACHE_DIR};
use crate::config::Config;
use crate::fieldfile::{Domain, FieldFile};
use crate::manifest::Manifest;
use crate::statsfile::{self, fmt_f64, StatsRow};
use crate::svg::{self, Palette, Scale, DEFAULT_LOG_FLOOR};

/// Default cache location when neither the environment nor the
/// configuration names one.
pub const DEFAULT_CACHE_DIR: &str = ".fput-cache";
pub const DEFAULT_OUTPUT_DIR: &str = "out";
pub const INDEX_FILE: &str = "index.csv";

/// Every subcommand, as `group command`.
pub const COMMANDS: &[&str] = &[
    "classical sos",
    "classical sali-map",
    "classical transport",
    "quantum eigs",
    "quantum dos",
    "husimi qsos",
    "husimi project-shell",
    "husimi project-config",
    "husimi project-complete",
    "stats m-index",
    "stats elm",
    "stats beta-fit",
    "stats mixed-fraction",
    "render field-to-svg",
];

/// State shared by one pipeline run.
pub struct Run {
    pub cfg: Config,
    pub out: PathBuf,
    cache_dir: PathBuf,
    cache: Option<Cache>,
    pub manifest: Manifest,
    /// Diagnostics for stderr; never part of the outputs.
    pub notes: Vec<String>,
}

impl Run {
    pub fn new(command: &str, cfg: Config, out: PathBuf) -> Result<Run> {
        cfg.validate_keys()?;
        let seed = cfg.seed()?;
        std::fs::create_dir_all(&out)?;
        let cache_dir = std::env::var_os(ENV_CACHE_DIR)
            .map(PathBuf::from)
            .or_else(|| cfg.get("run", "cache_dir").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR));
        Ok(Run { cfg, out, cache_dir, cache: None, manifest: Manifest::new(command, seed), notes: Vec::new() })
    }

    /// The cache, opened on first use; `none` as the directory disables it.
    pub fn cache(&mut self) -> &mut Cache {
        let dir = &self.cache_dir;
        self.cache.get_or_insert_with(|| if dir.as_os_str() == "none" { Cache::disabled() } else { Cache::open(dir) })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        self.manifest.write_output(&self.out, name, bytes)
    }

    fn finish(&mut self) -> Result<()> {
        if let Some(c) = self.cache.as_mut() {
            self.notes.append(&mut c.warnings);
        }
        self.manifest.write(&self.out, &self.cfg)
    }
}

/// Run `command` (`group name`) and write the manifest.
pub fn run(command: &str, run: &mut Run) -> Result<()> {
    match command {
        "classical sos" => classical_sos(run),
        "classical sali-map" => classical_sali_map(run),
        "classical transport" => classical_transport(run),
        "quantum eigs" => quantum_eigs(run),
        "quantum dos" => quantum_dos(run),
        "husimi qsos" => husimi_fields(run, FieldKind::Qsos),
        "husimi project-shell" => husimi_fields(run, FieldKind::Shell),
        "husimi project-config" => husimi_fields(run, FieldKind::Config),
        "husimi project-complete" => husimi_fields(run, FieldKind::Complete),
        "stats m-index" => stats_m_index(run),
        "stats elm" => stats_elm(run),
        "stats beta-fit" => stats_beta_fit(run),
        "stats mixed-fraction" => stats_mixed_fraction(run),
        "render field-to-svg" => render_field(run),
        _ => Err(Error::Config(format!("unknown command '{command}'"))),
    }?;
    run.finish()
}

fn potential(cfg: &Config) -> Result<Potential> {
    Ok(Potential::new(cfg.f64_or("model", "alpha", 1.0)?, cfg.f64_or("model", "lambda", 0.0)?))
}

fn integrator(cfg: &Config) -> Result<IntegratorOptions> {
    let d = IntegratorOptions::default();
    Ok(IntegratorOptions { rtol: cfg.f64_or("classical", "rtol", d.rtol)?, atol: cfg.f64_or("classical", "atol", d.atol)?, ..d })
}

/// Grid spec from `grid` (cells per side), `spacing` and `bounds` keys.
fn grid_spec(cfg: &Config, sec: &str, default_n: usize) -> Result<SosGridSpec> {
    let n = match cfg.usize_opt(sec, "grid")? {
        Some(n) => n,
        None => cfg.usize_or("classical", "grid", default_n)?,
    };
    if n == 0 {
        return Err(Error::Config(format!("'{sec}.grid' must be positive")));
    }
    let mut spec = SosGridSpec::square(n);
    spec.spacing = cfg.f64_opt(sec, "spacing")?;
    spec.bounds = cfg.bounds(sec, "bounds")?;
    Ok(spec)
}

fn csv_line(out: &mut String, fields: &[String]) {
    out.push_str(&fields.join(","));
    out.push('\n');
}

// ---- classical ----

fn classical_sos(run: &mut Run) -> Result<()> {
    let cfg = &run.cfg;
    let pot = potential(cfg)?;
    let e = cfg.f64_req("classical", "energy")?;
    let t_end = cfg.f64_or("classical", "t_end", 1000.0)?;
    let opts = integrator(cfg)?;
    let starts: Vec<(f64, f64)> = match (cfg.list_f64("classical", "q2")?, cfg.list_f64("classical", "p2")?) {
        (Some(q), Some(p)) if q.len() == p.len() => q.into_iter().zip(p).collect(),
        (Some(q), None) => q.into_iter().map(|x| (x, 0.0)).collect(),
        (Some(_), Some(_)) => return Err(Error::Config("'classical.q2' and 'classical.p2' must have equal length".into())),
        (None, _) => {
            // evenly spaced starts across the section at p2 = 0
            let (lo, hi, _, _) = sos_bounds(e, &pot)?;
            let n = 16;
            (0..n).map(|i| (lo + (i as f64 + 0.5) * (hi - lo) / n as f64, 0.0)).collect()
        }
    };
    let mut text = String::from("orbit,q2,p2\n");
    let mut n_points = 0usize;
    for (i, &(q2, p2)) in starts.iter().enumerate() {
        let start = PhasePoint::on_section(e, &pot, q2, p2)
            .ok_or_else(|| Error::Domain(format!("start (q2, p2) = ({q2}, {p2}) is outside the energy shell")))?;
        let traj = integrate(&pot, start, t_end, false, &opts)?;
        for (q, p) in sos_section(&traj)? {
            csv_line(&mut text, &[i.to_string(), fmt_f64(q), fmt_f64(p)]);
            n_points += 1;
        }
    }
    run.manifest.result("orbits", starts.len());
    run.manifest.result("points", n_points);
    run.write("sos.csv", text.as_bytes())
}

fn classical_sali_map(run: &mut Run) -> Result<()> {
    let cfg = &run.cfg;
    let pot = potential(cfg)?;
    let e = cfg.f64_req("classical", "energy")?;
    let spec = grid_spec(cfg, "classical", 200)?;
    let t_end = cfg.f64_or("classical", "t_end", 1000.0)?;
    let threshold = cfg.f64_or("classical", "threshold", SALI_THRESHOLD)?;
    let map = sali_map(e, &pot, &spec, t_end, threshold, &integrator(cfg)?)?;
    let sali = FieldFile::from_grid(&map.grid, Domain::Sos)?;
    let mut class = sali.clone();
    class.values = map.chaotic.iter().map(|&c| if c == 0 { f64::NAN } else { c as f64 }).collect();
    run.manifest.result("eta_c", fmt_f64(map.eta_c));
    run.manifest.result("allowed_cells", map.grid.allowed_count());
    run.write("sali.husf", &sali.to_bytes())?;
    run.write("class.husf", &class.to_bytes())
}

fn classical_transport(run: &mut Run) -> Result<()> {
    let cfg = &run.cfg;
    let pot = potential(cfg)?;
    let energies = cfg.list_f64("transport", "energies")?.ok_or_else(|| Error::Config("missing required key 'transport.energies'".into()))?;
    let d = EnsembleSpec::default();
    let spec = EnsembleSpec {
        n_ics: cfg.usize_or("transport", "n_ics", d.n_ics)?,
        q2_range: (cfg.f64_or("transport", "q2_min", d.q2_range.0)?, cfg.f64_or("transport", "q2_max", d.q2_range.1)?),
        p2: cfg.f64_or("transport", "p2", d.p2)?,
        horizon: cfg.f64_or("transport", "horizon", d.horizon)?,
        sample_dt: cfg.f64_or("transport", "sample_dt", d.sample_dt)?,
        window: cfg.f64_or("transport", "window", d.window)?,
    };
    let threshold = cfg.f64_or("transport", "threshold", 0.02)?;
    let fine = cfg.f64_or("transport", "threshold_fine", 0.01)?;
    let hbar = cfg.f64_opt("model", "hbar")?;
    let opts = integrator(cfg)?;
    let mut table = String::from("E,t_T,t_T_fine,alpha_L\n");
    let mut series_text = String::from("E,t,sigma2\n");
    for &e in &energies {
        let series = momentum_variance_series(e, &pot, &spec, &opts)?;
        let coarse = analyze_transport(&series, spec.window, threshold)?;
        // a tighter threshold may not settle within the horizon: t_T is then beyond it
        let tight = match analyze_transport(&series, spec.window, fine) {
            Ok(r) => r.t_t,
            Err(Error::Numerical(_)) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        let alpha_l = match hbar {
            Some(h) if coarse.t_t > 0.0 => fmt_f64(alpha_ratio(e, &pot, h, coarse.t_t)?),
            _ => "NaN".to_string(),
        };
        csv_line(&mut table, &[fmt_f64(e), fmt_f64(coarse.t_t), fmt_f64(tight), alpha_l]);
        for (t, s) in series.times.iter().zip(&series.sigma) {
            csv_line(&mut series_text, &[fmt_f64(e), fmt_f64(*t), fmt_f64(*s)]);
        }
    }
    run.manifest.result("energies", energies.len());
    run.write("transport.csv", table.as_bytes())?;
    run.write("transport_series.csv", series_text.as_bytes())
}

// ---- quantum ----

/// Window spec from `[window]`; `None` asks for the full spectrum.
fn window_request(cfg: &Config) -> Result<Option<(f64, WindowSpec)>> {
    let center = cfg.f64_opt("window", "center")?;
    let width = cfg.f64_opt("window", "width")?;
    let count = cfg.usize_opt("window", "count")?;
    match (center, width, count) {
        (None, None, None) => Ok(None),
        (None, _, _) => Err(Error::Config("'window.width' and 'window.count' need 'window.center'".into())),
        (Some(_), Some(_), Some(_)) => Err(Error::Config("set only one of 'window.width' and 'window.count'".into())),
        (Some(c), Some(w), None) => Ok(Some((c, WindowSpec::Width(w)))),
        (Some(c), None, Some(k)) => Ok(Some((c, WindowSpec::Count(k)))),
        (Some(c), None, None) => Ok(Some((c, WindowSpec::Count(100)))),
    }
}

/// Model, basis and eigenvalue window, through the cache.
pub fn eigen_window(run: &mut Run) -> Result<(ModelParams, SectorBasis, EigenWindow)> {
    let cfg = &run.cfg;
    let params = cfg.model()?;
    let basis = enumerate_sector(&params);
    let request = window_request(cfg)?;
    let dense_max = cfg.usize_or("window", "dense_max_dim", DENSE_MAX_DIM)?;
    let d = SolverOptions::default();
    let opts = SolverOptions {
        tol: cfg.f64_or("window", "tol", d.tol)?,
        max_per_shift: cfg.usize_or("window", "max_per_shift", d.max_per_shift)?,
        seed: cfg.seed()?,
        ordering: None,
    };
    let mut key = model_key_text(&params);
    match request {
        None => {
            let _ = writeln!(key, "dense\nmax_dim={dense_max}");
        }
        Some((c, spec)) => {
            let _ = writeln!(key, "center={c:e}\nspec={spec:?}\ntol={:e}\nmax_per_shift={}\nseed={}", opts.tol, opts.max_per_shift, opts.seed);
        }
    }
    let (w, status) = run.cache().eigen_window(&key, || {
        let h = assemble_hamiltonian(&params, &basis)?;
        match request {
            None => eig_dense_bounded(&h, dense_max),
            Some((c, spec)) => eig_window(&h, c, spec, &opts),
        }
    })?;
    if w.coefficients.iter().any(|c| c.len() != basis.dim()) {
        return Err(Error::Format("cached eigenvectors do not match the basis dimension".into()));
    }
    run.notes.push(format!("eigenvalue cache: {}", status.name()));
    if status == CacheStatus::Corrupt {
        run.notes.push("corrupt cache entry recomputed".into());
    }
    Ok((params, basis, w.with_params(params)))
}

fn quantum_eigs(run: &mut Run) -> Result<()> {
    let (params, basis, w) = eigen_window(run)?;
    let mut text = String::from("k,E,residual\n");
    for k in 0..w.len() {
        csv_line(&mut text, &[k.to_string(), fmt_f64(w.energies[k]), fmt_f64(w.residual_norms[k])]);
    }
    run.manifest.result("states", w.len());
    run.manifest.result("basis_dim", basis.dim());
    run.manifest.result("sector", params.sector.name());
    run.write("eigs.csv", text.as_bytes())
}

fn quantum_dos(run: &mut Run) -> Result<()> {
    let cfg = &run.cfg;
    let pot = potential(cfg)?;
    let hbar = cfg.f64_req("model", "hbar")?;
    let energies = match cfg.list_f64("dos", "energies")? {
        Some(e) => e,
        None => (1..=32).map(|k| k as f64 / 192.0).collect(),
    };
    let curve = dos_curve(&energies, &pot, hbar)?;
    let mut text = String::from("E,f,g,g_sector\n");
    for k in 0..energies.len() {
        csv_line(&mut text, &[fmt_f64(curve.energies[k]), fmt_f64(curve.f[k]), fmt_f64(curve.g[k]), fmt_f64(curve.g[k] * PER_SECTOR_FACTOR)]);
    }
    let staircase = cfg.bool_or("dos", "staircase", false)?;
    run.write("dos.csv", text.as_bytes())?;
    if staircase {
        let params = run.cfg.model()?;
        let dense_max = run.cfg.usize_or("window", "dense_max_dim", DENSE_MAX_DIM)?;
        let h = assemble_hamiltonian(&params, &enumerate_sector(&params))?;
        let levels = fput::spectral::eigenvalues_dense(&h, dense_max)?;
        let mut st = String::from("E,N_quantum,N_semiclassical\n");
        for &e in &energies {
            let nq = levels.iter().filter(|&&x| x <= e).count();
            let ns = integrated_dos(0.0, e, &pot, hbar)? * PER_SECTOR_FACTOR;
            csv_line(&mut st, &[fmt_f64(e), nq.to_string(), fmt_f64(ns)]);
        }
        run.write("staircase.csv", st.as_bytes())?;
    }
    Ok(())
}

// ---- husimi ----

/// Energy at which default section grids are laid out: the classical
/// energy when given (so fields line up with SALI maps), else the window
/// centre.
fn grid_energy(cfg: &Config) -> Result<f64> {
    match cfg.f64_opt("classical", "energy")? {
        Some(e) => Ok(e),
        None => cfg.f64_req("window", "center"),
    }
}

/// `(q2, p2)` bounding box of the whole energy shell.
fn phase_bounds(e: f64, pot: &Potential) -> Result<(f64, f64, f64, f64)> {
    let (_, _, q2lo, q2hi) = pot.well_bounds(e).ok_or_else(|| Error::Domain(format!("no bounded well at E = {e}")))?;
    let pmax = (2.0 * e).sqrt();
    Ok((q2lo, q2hi, -pmax, pmax))
}

fn husimi_fields(run: &mut Run, kind: FieldKind) -> Result<()> {
    let (params, basis, w) = eigen_window(run)?;
    let cfg = &run.cfg;
    let pot = Potential::new(params.alpha, params.lambda);
    let e_grid = grid_energy(cfg)?;
    let spec = grid_spec(cfg, "husimi", 100)?;
    let grid: SosGrid = match kind {
        FieldKind::Qsos => spec.resolve(e_grid, &pot)?,
        FieldKind::Shell | FieldKind::Complete => spec.resolve_in(phase_bounds(e_grid, &pot)?)?,
        FieldKind::Config => spec.resolve_in(config_bounds(e_grid, &params)?)?,
    };
    let nodes = cfg.usize_or("husimi", "nodes", DEFAULT_NODES)?;
    let route = match cfg.str_or("husimi", "route", "jacobi") {
        "jacobi" => Route::Jacobi,
        "expm" => Route::Expm,
        r => return Err(Error::Config(format!("unknown Wigner route '{r}' (jacobi, expm)"))),
    };
    let mut index = String::from("k,E,sector,hbar,file,normalization\n");
    for k in 0..w.len() {
        let e_k = w.energies[k];
        let coeffs = &w.coefficients[k];
        let field: HusimiField = match kind {
            FieldKind::Qsos => qsos(&CircularState::new(&basis, coeffs)?, e_k, &params, &grid)?,
            FieldKind::Shell => project_shell(&CircularState::new(&basis, coeffs)?, e_k, &params, &grid, nodes)?,
            FieldKind::Config => project_config(&CircularState::new(&basis, coeffs)?, e_k, &params, &grid, nodes)?,
            FieldKind::Complete => project_complete(&cartesian_coefficients(&basis, coeffs, route)?, params.hbar, &grid)?,
        };
        let name = format!("{}_{k:05}.husf", kind.name());
        csv_line(
            &mut index,
            &[k.to_string(), fmt_f64(e_k), params.sector.name().to_string(), fmt_f64(params.hbar), name.clone(), fmt_f64(field.normalization)],
        );
        run.write(&name, &FieldFile::from_field(&field)?.to_bytes())?;
    }
    run.manifest.result("fields", w.len());
    run.manifest.result("kind", kind.name());
    run.write(INDEX_FILE, index.as_bytes())
}

/// One row of a field index.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexRow {
    pub k: usize,
    pub energy: f64,
    pub sector: fput::basis::Sector,
    pub hbar: f64,
    pub file: String,
    pub normalization: f64,
}

pub fn read_index(dir: &Path) -> Result<Vec<IndexRow>> {
    let text = crate::read_text(&dir.join(INDEX_FILE))?;
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let fmt = |e: &dyn std::fmt::Display| Error::Format(format!("{}: {e}", INDEX_FILE));
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| fmt(&e))?;
        if rec.len() != 6 {
            return Err(fmt(&"expected 6 columns"));
        }
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| fmt(&e));
        rows.push(IndexRow {
            k: rec[0].parse().map_err(|e| fmt(&e))?,
            energy: num(1)?,
            sector: rec[2].parse().map_err(|e: Error| fmt(&e))?,
            hbar: num(3)?,
            file: rec[4].to_string(),
            normalization: num(5)?,
        });
    }
    Ok(rows)
}

/// QSOS fields listed in the index of `dir`.
pub fn load_qsos(dir: &Path) -> Result<Vec<(IndexRow, HusimiField)>> {
    read_index(dir)?
        .into_iter()
        .map(|row| {
            let ff = FieldFile::read(&dir.join(&row.file))?;
            if ff.domain != Domain::Sos {
                return Err(Error::Format(format!("{} is not a surface-of-section field", row.file)));
            }
            let field = HusimiField {
                kind: FieldKind::Qsos,
                energy: row.energy,
                hbar: row.hbar,
                grid: ff.to_grid(),
                normalization: row.normalization,
                log_floor: LOG_FLOOR,
            };
            Ok((row, field))
        })
        .collect()
}

// ---- stats ----

/// Classification from a class-map field file (`+1` chaotic, `-1` regular,
/// NaN outside), or every allowed cell chaotic when none is given.
fn chaos_map(cfg: &Config, like: &SosGrid) -> Result<ChaosMap> {
    match cfg.get("stats", "class_map") {
        Some(path) => {
            let ff = FieldFile::read(Path::new(path))?;
            let labels = ff.values.iter().map(|&v| if v.is_nan() { 0 } else if v > 0.0 { 1 } else { -1 }).collect();
            ChaosMap::new(&ff.to_grid(), labels)
        }
        None => {
            let allowed: Vec<bool> = like.values.iter().map(|v| v.is_some()).collect();
            ChaosMap::all_chaotic(like, &allowed)
        }
    }
}

fn alphas(cfg: &Config) -> Result<Vec<f64>> {
    let mut a = cfg.list_f64("stats", "alphas")?.unwrap_or_else(|| vec![1.0, 2.0]);
    for req in [1.0, 2.0] {
        if !a.contains(&req) {
            a.push(req);
        }
    }
    a.sort_by(f64::total_cmp);
    Ok(a)
}

fn compute_stats(run: &Run) -> Result<(Vec<IndexRow>, Vec<StateStats>, ChaosMap)> {
    let cfg = &run.cfg;
    let dir = PathBuf::from(cfg.str_req("stats", "input")?);
    let fields = load_qsos(&dir)?;
    let first = fields.first().ok_or_else(|| Error::InvalidParams("input holds no fields".into()))?;
    let cmap = chaos_map(cfg, &first.1.grid)?;
    let orders = alphas(cfg)?;
    let stats = if cmap.chaotic_count() == 0 {
        // the ELM needs a chaotic region; M is still defined
        fields
            .iter()
            .map(|(row, f)| {
                Ok(StateStats {
                    energy: f.energy,
                    m: overlap_index(f, &cmap)?,
                    elm: orders.iter().map(|&a| (a, f64::NAN)).collect(),
                    sector: row.sector,
                    hbar: f.hbar,
                })
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        fields.iter().map(|(row, f)| state_stats(f, &cmap, &orders, row.sector)).collect::<Result<Vec<_>>>()?
    };
    Ok((fields.into_iter().map(|(r, _)| r).collect(), stats, cmap))
}

fn stats_m_index(run: &mut Run) -> Result<()> {
    let (rows, stats, cmap) = compute_stats(run)?;
    if cmap.chaotic_count() == 0 {
        run.notes.push("classification has no chaotic cells; L columns are NaN".into());
    }
    let out: Vec<StatsRow> = rows.iter().zip(&stats).map(|(r, s)| StatsRow::from_stats(r.k, s)).collect();
    let ms: Vec<f64> = stats.iter().map(|s| s.m).collect();
    let window = match run.cfg.list_f64("stats", "window")? {
        Some(w) if w.len() == 2 => (w[0], w[1]),
        Some(_) => return Err(Error::Config("'stats.window' needs 2 values".into())),
        None => WINDOW_WIDE,
    };
    let mut hist = String::from("bin_lo,bin_hi,count\n");
    for (i, c) in m_histogram(&ms).iter().enumerate() {
        let w = 2.0 / M_BINS as f64;
        csv_line(&mut hist, &[fmt_f64(-1.0 + i as f64 * w), fmt_f64(-1.0 + (i + 1) as f64 * w), c.to_string()]);
    }
    run.manifest.result("states", stats.len());
    run.manifest.result("chi_m", fmt_f64(mixed_fraction(&ms, window)?));
    run.manifest.result("chi_window", format!("{}, {}", fmt_f64(window.0), fmt_f64(window.1)));
    run.write("stats.csv", statsfile::to_string(&out)?.as_bytes())?;
    run.write("m_histogram.csv", hist.as_bytes())
}

/// Seed of random trial `t`, derived from the run seed.
pub fn trial_seed(seed: u64, t: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(t as u64)
}

fn stats_elm(run: &mut Run) -> Result<()> {
    let (rows, stats, cmap) = compute_stats(run)?;
    if cmap.chaotic_count() == 0 {
        return Err(Error::Domain("classification has no chaotic cells; the ELM is undefined".into()));
    }
    let mut text = String::from("k,E,M,alpha,L\n");
    let mut monotone = 0usize;
    for (r, s) in rows.iter().zip(&stats) {
        for &(a, l) in &s.elm {
            csv_line(&mut text, &[r.k.to_string(), fmt_f64(s.energy), fmt_f64(s.m), fmt_f64(a), fmt_f64(l)]);
        }
        monotone += s.is_renyi_monotone(1e-12) as usize;
    }
    run.manifest.result("states", stats.len());
    run.manifest.result("renyi_monotone", monotone);
    run.write("elm.csv", text.as_bytes())?;

    let trials = run.cfg.usize_or("stats", "random_trials", 0)?;
    if trials > 0 {
        let params = run.cfg.model()?;
        let basis = enumerate_sector(&params);
        let e = match run.cfg.f64_opt("stats", "energy")? {
            Some(e) => e,
            None => rows.iter().map(|r| r.energy).sum::<f64>() / rows.len() as f64,
        };
        let orders = alphas(&run.cfg)?;
        let seed = run.cfg.seed()?;
        let mut rt = String::from("trial,alpha,L\n");
        let mut sums = vec![0.0; orders.len()];
        for t in 0..trials {
            let v = random_unit_vector(basis.dim(), trial_seed(seed, t));
            let f = qsos(&CircularState::new(&basis, &v)?, e, &params, &cmap.geometry)?;
            let s = state_stats(&f, &cmap, &orders, params.sector)?;
            for (i, &(a, l)) in s.elm.iter().enumerate() {
                csv_line(&mut rt, &[t.to_string(), fmt_f64(a), fmt_f64(l)]);
                sums[i] += l;
            }
        }
        for (a, s) in orders.iter().zip(&sums) {
            run.manifest.result(&format!("random_mean_L{a}"), fmt_f64(s / trials as f64));
        }
        run.write("random.csv", rt.as_bytes())?;
    }
    Ok(())
}

fn stats_beta_fit(run: &mut Run) -> Result<()> {
    let cfg = &run.cfg;
    let rows = statsfile::read(Path::new(cfg.str_req("stats", "input")?))?;
    let m_c = cfg.f64_or("stats", "m_chaotic", DEFAULT_M_CHAOTIC)?;
    let samples: Vec<f64> = rows.iter().filter(|r| r.m >= m_c).map(|r| r.l1).collect();
    let fit = fit_beta(&samples)?;
    let bins = 30;
    let counts = histogram(&samples, 0.0, fit.l0, bins)?;
    let width = fit.l0 / bins as f64;
    let mut text = String::from("bin_lo,bin_hi,count,density,model\n");
    for (i, c) in counts.iter().enumerate() {
        let (lo, hi) = (i as f64 * width, (i + 1) as f64 * width);
        let density = *c as f64 / (samples.len() as f64 * width);
        csv_line(&mut text, &[fmt_f64(lo), fmt_f64(hi), c.to_string(), fmt_f64(density), fmt_f64(fit.pdf(0.5 * (lo + hi)))]);
    }
    run.manifest.result("samples", fit.n_samples);
    run.manifest.result("beta_a", fmt_f64(fit.beta_a));
    run.manifest.result("beta_b", fmt_f64(fit.beta_b));
    run.manifest.result("l0", fmt_f64(fit.l0));
    run.manifest.result("loglik", fmt_f64(fit.loglik));
    run.manifest.result("ks", fmt_f64(fit.ks));
    run.write("beta_hist.csv", text.as_bytes())
}

fn stats_mixed_fraction(run: &mut Run) -> Result<()> {
    let cfg = &run.cfg;
    let inputs = cfg.list_str("stats", "inputs").ok_or_else(|| Error::Config("missing required key 'stats.inputs'".into()))?;
    let window = match cfg.list_f64("stats", "window")? {
        Some(w) if w.len() == 2 => (w[0], w[1]),
        Some(_) => return Err(Error::Config("'stats.window' needs 2 values".into())),
        None => WINDOW_WIDE,
    };
    let mut hbars = Vec::new();
    let mut chi = Vec::new();
    for p in &inputs {
        let rows = statsfile::read(Path::new(p))?;
        let first = rows.first().ok_or_else(|| Error::InvalidParams(format!("{p} holds no states")))?;
        if rows.iter().any(|r| r.hbar != first.hbar) {
            return Err(Error::InvalidParams(format!("{p} mixes several values of hbar")));
        }
        hbars.push(first.hbar);
        chi.push(mixed_fraction(&rows.iter().map(|r| r.m).collect::<Vec<_>>(), window)?);
    }
    let mut text = String::from("hbar,chi\n");
    for (h, c) in hbars.iter().zip(&chi) {
        csv_line(&mut text, &[fmt_f64(*h), fmt_f64(*c)]);
    }
    run.write("mixed_fraction.csv", text.as_bytes())?;
    match fit_power_law(&hbars, &chi) {
        Ok(fit) => {
            run.manifest.result("xi", fmt_f64(fit.xi));
            run.manifest.result("prefactor", fmt_f64(fit.prefactor));
            run.manifest.result("std_err", fmt_f64(fit.std_err));
            run.manifest.result("points_used", fit.n_used);
        }
        Err(e) => run.manifest.result("fit", format!("unavailable ({e})")),
    }
    Ok(())
}

// ---- render ----

fn render_field(run: &mut Run) -> Result<()> {
    let cfg = &run.cfg;
    let input = PathBuf::from(cfg.str_req("render", "input")?);
    let ff = FieldFile::read(&input)?;
    let scale = match cfg.str_or("render", "scale", "log") {
        "linear" => Scale::Linear,
        "log" => Scale::Log { floor: cfg.f64_or("render", "floor", DEFAULT_LOG_FLOOR)? },
        s => return Err(Error::Config(format!("unknown scale '{s}' (linear, log)"))),
    };
    let palette: Palette = cfg.str_or("render", "palette", "viridis").parse()?;
    let cell = cfg.usize_or("render", "cell_size", 4)? as u32;
    let doc = svg::render(&ff, scale, palette, cell);
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("field").to_string();
    run.write(&format!("{stem}.svg"), doc.as_bytes())
}
