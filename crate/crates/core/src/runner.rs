//! Config-driven Monte-Carlo sweeps and result files.
//!
//! Trial `i` at user count `K` draws its geometry, channels and masks from a
//! ChaCha8 stream seeded with `base_seed + i`. Every SNR point uses a
//! separate noise stream of the same seed, and each scheme restarts that
//! noise stream, so schemes see identical channels and, where their slot
//! structure agrees, identical noise.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{run_scheme, SchemeId};
use crate::channel::{realize, write_columnar, ChannelConfig, ChannelRealization, VrConfig};
use crate::error::{Error, Result};
use crate::estimator::PilotPlan;
use crate::geometry::{build_geometry, GeometryConfig};
use crate::metrics::{design_beamforming, effective_sum_rate, nmse, pilot_overhead, sinr};

/// Environment variable that replaces `output_dir` from the config.
pub const OUTPUT_DIR_ENV: &str = "XLIRS_OUTPUT_DIR";

pub const DETAIL_HEADER: &str = "scheme,K,snr_db,seed,nmse,overhead,sum_rate,flags";
pub const AGGREGATE_HEADER: &str =
    "scheme,K,snr_db,trials,failed,mean_nmse,mean_overhead,mean_sum_rate";
pub const OVERHEAD_HEADER: &str = "scheme,K,M,N,N_visible,kappa,exact,amortized";

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PilotConfig {
    pub anchor_power_dbm: f64,
    pub user_power_dbm: f64,
    /// Noise is `P_ref · ḡ_a / 10^(SNR/10)` with `P_ref` this power and `ḡ_a`
    /// the mean anchor cascade gain.
    pub noise_reference_dbm: f64,
    /// Anchor reuse factor; `inf` is allowed.
    pub kappa: f64,
    pub threshold_multiplier: f64,
    /// Step-3 slots added on top of `⌈KÑ/M⌉` for every scaling-vector
    /// system; they count towards the training overhead.
    pub step3_margin: usize,
    pub max_extra_slots: usize,
    pub oracle_anchor: bool,
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self {
            anchor_power_dbm: 30.0,
            user_power_dbm: 30.0,
            noise_reference_dbm: 30.0,
            kappa: 64.0,
            threshold_multiplier: 3.0,
            step3_margin: 0,
            max_extra_slots: 16,
            oracle_anchor: false,
        }
    }
}

impl PilotConfig {
    /// Powers and noise for one SNR point of a realization with anchor gain
    /// `anchor_gain`.
    pub fn plan(&self, snr_db: f64, anchor_gain: f64) -> PilotPlan {
        let noise_var = dbm_to_watts(self.noise_reference_dbm) * anchor_gain / 10f64.powf(snr_db / 10.0);
        PilotPlan {
            anchor_power: dbm_to_watts(self.anchor_power_dbm),
            user_power: dbm_to_watts(self.user_power_dbm),
            noise_var,
            kappa: self.kappa,
            threshold_multiplier: self.threshold_multiplier,
            step3_margin: self.step3_margin,
            max_extra_slots: self.max_extra_slots,
            oracle_anchor: self.oracle_anchor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub snr_db: Vec<f64>,
    pub users: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            users: vec![8],
            trials: 500,
            base_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Coherence block length `T` in slots.
    pub coherence_slots: f64,
    pub schemes: Vec<SchemeId>,
    pub output_dir: PathBuf,
    pub geometry: GeometryConfig,
    pub channel: ChannelConfig,
    pub vr: VrConfig,
    pub pilot: PilotConfig,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            coherence_slots: 5000.0,
            schemes: SchemeId::ALL.to_vec(),
            output_dir: PathBuf::from("results"),
            geometry: GeometryConfig::default(),
            channel: ChannelConfig::default(),
            vr: VrConfig::default(),
            pilot: PilotConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.vr.validate()?;
        let sweep = &self.sweep;
        if sweep.trials == 0 {
            return Err(Error::Config("sweep.trials must be at least 1".into()));
        }
        if sweep.snr_db.is_empty() || sweep.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("sweep.snr_db must be a non-empty list of finite values".into()));
        }
        if sweep.users.is_empty() || sweep.users.contains(&0) {
            return Err(Error::Config("sweep.users must be a non-empty list of positive counts".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("at least one scheme is required".into()));
        }
        if !(self.coherence_slots > 0.0) {
            return Err(Error::Config("coherence_slots must be positive".into()));
        }
        let p = &self.pilot;
        for (name, v) in [
            ("anchor_power_dbm", p.anchor_power_dbm),
            ("user_power_dbm", p.user_power_dbm),
            ("noise_reference_dbm", p.noise_reference_dbm),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("pilot.{name} must be finite")));
            }
        }
        if !(p.kappa >= 1.0) {
            return Err(Error::Config(format!("pilot.kappa must be >= 1, got {}", p.kappa)));
        }
        if !(p.threshold_multiplier >= 0.0) {
            return Err(Error::Config("pilot.threshold_multiplier must be non-negative".into()));
        }
        Ok(())
    }

    /// `output_dir`, unless `override_dir` (normally the value of
    /// [`OUTPUT_DIR_ENV`]) is set and non-empty.
    pub fn output_dir_with(&self, override_dir: Option<&str>) -> PathBuf {
        match override_dir {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output_dir.clone(),
        }
    }

    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir_with(std::env::var(OUTPUT_DIR_ENV).ok().as_deref())
    }
}

/// Trial-level scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Trials on the rayon pool; sequential when built without `parallel`.
    #[default]
    Parallel,
}

/// One (scheme, K, SNR, trial) outcome. Failed trials carry NaN metrics and
/// an `error=` flag.
#[derive(Debug, Clone, PartialEq)]
pub struct DetailRow {
    pub scheme: SchemeId,
    pub users: usize,
    pub snr_db: f64,
    pub seed: u64,
    pub nmse: f64,
    pub overhead: f64,
    pub sum_rate: f64,
    pub flags: String,
}

impl DetailRow {
    pub fn failed(&self) -> bool {
        self.flags.split(';').any(|f| f.starts_with("error="))
    }

    fn sort_key(&self) -> (SchemeId, usize, u64, u64) {
        (self.scheme, self.users, total_order_key(self.snr_db), self.seed)
    }
}

fn total_order_key(x: f64) -> u64 {
    let bits = x.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub scheme: SchemeId,
    pub users: usize,
    pub snr_db: f64,
    pub trials: usize,
    pub failed: usize,
    pub mean_nmse: f64,
    pub mean_overhead: f64,
    pub mean_sum_rate: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ResultTable {
    pub rows: Vec<DetailRow>,
}

impl ResultTable {
    /// Sorts rows by (scheme, K, SNR, seed).
    pub fn sort(&mut self) {
        self.rows.sort_by_key(DetailRow::sort_key);
    }

    /// Means over successful trials per (scheme, K, SNR), in row order.
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        aggregate_rows(&self.rows)
    }

    pub fn find(&self, scheme: SchemeId, users: usize, snr_db: f64) -> Option<AggregateRow> {
        self.aggregate()
            .into_iter()
            .find(|a| a.scheme == scheme && a.users == users && a.snr_db == snr_db)
    }
}

/// Groups consecutive rows sharing (scheme, K, SNR) and averages the
/// successful ones. Means of an all-failed group are NaN.
pub fn aggregate_rows(rows: &[DetailRow]) -> Vec<AggregateRow> {
    let mut out: Vec<AggregateRow> = Vec::new();
    let mut sums = (0.0, 0.0, 0.0);
    let finish = |agg: &mut AggregateRow, sums: (f64, f64, f64)| {
        let ok = (agg.trials - agg.failed) as f64;
        agg.mean_nmse = sums.0 / ok;
        agg.mean_overhead = sums.1 / ok;
        agg.mean_sum_rate = sums.2 / ok;
    };
    for row in rows {
        let same = out.last().is_some_and(|a| {
            a.scheme == row.scheme && a.users == row.users && a.snr_db.to_bits() == row.snr_db.to_bits()
        });
        if !same {
            if let Some(last) = out.last_mut() {
                finish(last, sums);
            }
            sums = (0.0, 0.0, 0.0);
            out.push(AggregateRow {
                scheme: row.scheme,
                users: row.users,
                snr_db: row.snr_db,
                trials: 0,
                failed: 0,
                mean_nmse: 0.0,
                mean_overhead: 0.0,
                mean_sum_rate: 0.0,
            });
        }
        let agg = out.last_mut().expect("pushed above");
        agg.trials += 1;
        if row.failed() {
            agg.failed += 1;
        } else {
            sums.0 += row.nmse;
            sums.1 += row.overhead;
            sums.2 += row.sum_rate;
        }
    }
    if let Some(last) = out.last_mut() {
        finish(last, sums);
    }
    out
}

/// The realization shared by every scheme and SNR of one trial.
pub fn trial_realization(config: &ExperimentConfig, users: usize, seed: u64) -> Result<ChannelRealization> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geometry = build_geometry(&config.geometry, users, &mut rng)?;
    realize(&geometry, &config.channel, &config.vr, &mut rng)
}

/// Noise stream for SNR point `snr_index` of the trial with `seed`.
pub fn noise_stream(seed: u64, snr_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + snr_index as u64);
    rng
}

fn sanitize(msg: &str) -> String {
    msg.replace([',', '\n', '\r'], ";")
}

fn evaluate(
    config: &ExperimentConfig,
    real: &ChannelRealization,
    scheme: SchemeId,
    plan: &PilotPlan,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64, f64, String)> {
    let est = run_scheme(scheme, real, plan, rng)?;
    let err = nmse(&est.h_users, &real.h_users)?;
    let bf = design_beamforming(&est.h_users, plan.user_power)?;
    let s = sinr(&real.h_users, &bf, plan.noise_var);
    let rate = effective_sum_rate(&s, config.coherence_slots, est.training_slots)?;
    let mut flags = Vec::new();
    if est.extra_slots > 0 {
        flags.push(format!("extra_slots={}", est.extra_slots));
    }
    if !bf.zero_forcing {
        flags.push("matched_filter".to_string());
    }
    Ok((err, est.training_slots, rate, flags.join(";")))
}

/// Every scheme at every SNR for one (K, trial).
pub fn run_trial(config: &ExperimentConfig, users: usize, trial: usize) -> Vec<DetailRow> {
    let seed = config.sweep.base_seed.wrapping_add(trial as u64);
    let real = trial_realization(config, users, seed);
    let mut rows = Vec::new();
    for (si, &snr_db) in config.sweep.snr_db.iter().enumerate() {
        for &scheme in &config.schemes {
            let outcome = real.as_ref().map_err(|e| e.to_string()).and_then(|real| {
                let plan = config.pilot.plan(snr_db, real.anchor_gain);
                evaluate(config, real, scheme, &plan, &mut noise_stream(seed, si)).map_err(|e| e.to_string())
            });
            let row = match outcome {
                Ok((nmse, overhead, sum_rate, flags)) => DetailRow {
                    scheme,
                    users,
                    snr_db,
                    seed,
                    nmse,
                    overhead,
                    sum_rate,
                    flags,
                },
                Err(msg) => DetailRow {
                    scheme,
                    users,
                    snr_db,
                    seed,
                    nmse: f64::NAN,
                    overhead: f64::NAN,
                    sum_rate: f64::NAN,
                    flags: format!("error={}", sanitize(&msg)),
                },
            };
            rows.push(row);
        }
    }
    rows
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultTable> {
    run_experiment_with(config, Execution::default())
}

/// Runs the full sweep. Rows come back sorted, so the result does not depend
/// on scheduling.
pub fn run_experiment_with(config: &ExperimentConfig, execution: Execution) -> Result<ResultTable> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = config
        .sweep
        .users
        .iter()
        .flat_map(|&k| (0..config.sweep.trials).map(move |t| (k, t)))
        .collect();
    let rows: Vec<DetailRow> = match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            jobs.par_iter()
                .flat_map_iter(|&(k, t)| run_trial(config, k, t))
                .collect()
        }
        _ => jobs.iter().flat_map(|&(k, t)| run_trial(config, k, t)).collect(),
    };
    let mut table = ResultTable { rows };
    table.sort();
    Ok(table)
}

pub fn detail_csv(rows: &[DetailRow]) -> String {
    let mut out = String::from(DETAIL_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{:e},{},{:e},{}",
            r.scheme, r.users, r.snr_db, r.seed, r.nmse, r.overhead, r.sum_rate, r.flags
        )
        .expect("writing to a String");
    }
    out
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for a in rows {
        writeln!(
            out,
            "{},{},{},{},{},{:e},{},{:e}",
            a.scheme, a.users, a.snr_db, a.trials, a.failed, a.mean_nmse, a.mean_overhead, a.mean_sum_rate
        )
        .expect("writing to a String");
    }
    out
}

fn field<T: std::str::FromStr>(value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("detail line {line}: cannot parse `{value}`")))
}

/// Parses a detail file written by [`detail_csv`].
pub fn parse_detail_csv(text: &str) -> Result<Vec<DetailRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(DETAIL_HEADER) {
        return Err(Error::Config("detail file header mismatch".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.splitn(8, ',').collect();
            if f.len() != 8 {
                return Err(Error::Config(format!("detail line {}: expected 8 fields", i + 2)));
            }
            Ok(DetailRow {
                scheme: f[0].parse()?,
                users: field(f[1], i + 2)?,
                snr_db: field(f[2], i + 2)?,
                seed: field(f[3], i + 2)?,
                nmse: field(f[4], i + 2)?,
                overhead: field(f[5], i + 2)?,
                sum_rate: field(f[6], i + 2)?,
                flags: f[7].to_string(),
            })
        })
        .collect()
}

const PLOT_SCRIPT: &str = r#"# gnuplot -e "dir='results'" plot.gp
if (!exists("dir")) dir = '.'
set datafile separator ','
set key autotitle columnhead
set terminal pngcairo size 900,600
schemes = "proposed proposed_no_vr common_channel dft"

set output dir.'/nmse.png'
set logscale y
set xlabel 'SNR (dB)'
set ylabel 'NMSE'
plot for [s in schemes] dir.'/aggregate.csv' using (strcol(1) eq s ? $3 : NaN):6 with linespoints title s

set output dir.'/sum_rate.png'
unset logscale y
set ylabel 'effective sum-rate (bit/s/Hz)'
plot for [s in schemes] dir.'/aggregate.csv' using (strcol(1) eq s ? $3 : NaN):8 with linespoints title s
"#;

/// Paths written by [`emit_results`].
#[derive(Debug, Clone)]
pub struct EmittedFiles {
    pub detail: PathBuf,
    pub aggregate: PathBuf,
    pub manifest: PathBuf,
    pub plot: PathBuf,
}

/// Writes `detail.csv`, `aggregate.csv`, `manifest.txt` and `plot.gp` into
/// `dir`, creating it if needed.
pub fn emit_results(table: &ResultTable, config: &ExperimentConfig, dir: &Path) -> Result<EmittedFiles> {
    fs::create_dir_all(dir)?;
    let files = EmittedFiles {
        detail: dir.join("detail.csv"),
        aggregate: dir.join("aggregate.csv"),
        manifest: dir.join("manifest.txt"),
        plot: dir.join("plot.gp"),
    };
    fs::write(&files.detail, detail_csv(&table.rows))?;
    fs::write(&files.aggregate, aggregate_csv(&table.aggregate()))?;
    fs::write(&files.manifest, manifest(config))?;
    fs::write(&files.plot, PLOT_SCRIPT)?;
    Ok(files)
}

pub fn code_version() -> String {
    format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

/// Run manifest: code version, timestamp, then the resolved config.
pub fn manifest(config: &ExperimentConfig) -> String {
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!(
        "code_version: {}\ntimestamp_unix: {stamp}\n\n# resolved config\n{}",
        code_version(),
        config.to_toml()
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverheadRow {
    pub scheme: SchemeId,
    pub users: usize,
    pub antennas: usize,
    pub elements: usize,
    pub visible: usize,
    pub kappa: f64,
    pub exact: f64,
    pub amortized: usize,
}

/// Closed-form overheads for every configured scheme and K. `Ñ` is the
/// configured BS visible count `round(ρ_bs N)`.
pub fn overhead_table(config: &ExperimentConfig) -> Result<Vec<OverheadRow>> {
    config.validate()?;
    let (m, n) = (config.geometry.bs_antennas, config.geometry.irs_elements());
    let visible = config.vr.bs_visible_target(n);
    let mut rows = Vec::new();
    for &scheme in &config.schemes {
        for &k in &config.sweep.users {
            let o = pilot_overhead(scheme, k, m, n, visible, config.pilot.kappa)?;
            rows.push(OverheadRow {
                scheme,
                users: k,
                antennas: m,
                elements: n,
                visible,
                kappa: config.pilot.kappa,
                exact: o.exact,
                amortized: o.amortized,
            });
        }
    }
    Ok(rows)
}

pub fn overhead_csv(rows: &[OverheadRow]) -> String {
    let mut out = String::from(OVERHEAD_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.scheme, r.users, r.antennas, r.elements, r.visible, r.kappa, r.exact, r.amortized
        )
        .expect("writing to a String");
    }
    out
}

/// Writes the first trial's realization at the first configured K to
/// `dir/channel_dump.txt`.
pub fn dump_channel(config: &ExperimentConfig, dir: &Path) -> Result<PathBuf> {
    config.validate()?;
    let real = trial_realization(config, config.sweep.users[0], config.sweep.base_seed)?;
    fs::create_dir_all(dir)?;
    let path = dir.join("channel_dump.txt");
    let file = std::io::BufWriter::new(fs::File::create(&path)?);
    write_columnar(&real, file)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            geometry: GeometryConfig {
                bs_antennas: 8,
                irs_nx: 4,
                irs_ny: 6,
                ..GeometryConfig::default()
            },
            sweep: SweepConfig {
                snr_db: vec![10.0],
                users: vec![2],
                trials: 2,
                base_seed: 7,
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn dbm_conversion() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_watts(0.0) - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn noise_reference() {
        let p = PilotConfig::default().plan(20.0, 2e-9);
        assert!((p.noise_var - 2e-11).abs() < 1e-24);
        assert_eq!(p.anchor_power, 1.0);
    }

    #[test]
    fn config_roundtrip_and_defaults() {
        let config = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(config, ExperimentConfig::default());
        assert_eq!(config.geometry.bs_antennas, 128);
        assert_eq!(config.sweep.trials, 500);
        let back = ExperimentConfig::from_toml(&config.to_toml()).unwrap();
        assert_eq!(back, config);
        let inf = ExperimentConfig::from_toml("[pilot]\nkappa = inf\n").unwrap();
        assert!(inf.pilot.kappa.is_infinite());
    }

    #[test]
    fn config_rejections() {
        for bad in [
            "[sweep]\ntrials = 0",
            "[sweep]\nsnr_db = []",
            "[sweep]\nusers = [0]",
            "schemes = []",
            "schemes = [\"lmmse\"]",
            "[pilot]\nkappa = 0.5",
            "[vr]\nuser_fraction = 0.0",
            "unknown_key = 1",
        ] {
            assert!(ExperimentConfig::from_toml(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn output_dir_override() {
        let config = tiny_config();
        assert_eq!(config.output_dir_with(None), PathBuf::from("results"));
        assert_eq!(config.output_dir_with(Some("")), PathBuf::from("results"));
        assert_eq!(config.output_dir_with(Some("/tmp/x")), PathBuf::from("/tmp/x"));
    }

    #[test]
    fn minimal_run_shapes() {
        let mut config = tiny_config();
        config.sweep.trials = 1;
        config.schemes = vec![SchemeId::Proposed];
        let table = run_experiment(&config).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.aggregate().len(), 1);
        assert!(!table.rows[0].failed(), "{}", table.rows[0].flags);
    }

    #[test]
    fn execution_modes_agree() {
        let config = tiny_config();
        let a = run_experiment_with(&config, Execution::Sequential).unwrap();
        let b = run_experiment_with(&config, Execution::Parallel).unwrap();
        assert_eq!(detail_csv(&a.rows), detail_csv(&b.rows));
        assert_eq!(a.rows.len(), 2 * 4);
    }

    #[test]
    fn csv_roundtrip_and_aggregates() {
        let table = run_experiment(&tiny_config()).unwrap();
        let text = detail_csv(&table.rows);
        let parsed = parse_detail_csv(&text).unwrap();
        assert_eq!(aggregate_csv(&aggregate_rows(&parsed)), aggregate_csv(&table.aggregate()));
    }

    #[test]
    fn empty_and_single_row_files() {
        assert_eq!(detail_csv(&[]), format!("{DETAIL_HEADER}\n"));
        assert_eq!(aggregate_csv(&[]), format!("{AGGREGATE_HEADER}\n"));
        let row = DetailRow {
            scheme: SchemeId::Dft,
            users: 2,
            snr_db: 5.0,
            seed: 3,
            nmse: 0.5,
            overhead: 96.0,
            sum_rate: 1.25,
            flags: String::new(),
        };
        assert_eq!(
            detail_csv(std::slice::from_ref(&row)),
            format!("{DETAIL_HEADER}\ndft,2,5,3,5e-1,96,1.25e0,\n")
        );
    }

    #[test]
    fn failed_rows_are_flagged_and_skipped() {
        let ok = DetailRow {
            scheme: SchemeId::Proposed,
            users: 1,
            snr_db: 0.0,
            seed: 1,
            nmse: 0.2,
            overhead: 2.0,
            sum_rate: 3.0,
            flags: "extra_slots=1".into(),
        };
        let bad = DetailRow {
            seed: 2,
            nmse: f64::NAN,
            overhead: f64::NAN,
            sum_rate: f64::NAN,
            flags: "error=boom".into(),
            ..ok.clone()
        };
        let agg = aggregate_rows(&[ok, bad]);
        assert_eq!((agg[0].trials, agg[0].failed), (2, 1));
        assert_eq!(agg[0].mean_nmse, 0.2);
    }

    #[test]
    fn overhead_rows_match_closed_forms() {
        let mut config = ExperimentConfig::default();
        config.pilot.kappa = f64::INFINITY;
        let rows = overhead_table(&config).unwrap();
        let get = |s| rows.iter().find(|r| r.scheme == s).unwrap().amortized;
        assert_eq!(get(SchemeId::Proposed), 8);
        assert_eq!(get(SchemeId::ProposedNoVr), 30);
        assert_eq!(get(SchemeId::CommonChannel), 507);
        assert_eq!(get(SchemeId::Dft), 3840);
        assert!(overhead_csv(&rows).starts_with(OVERHEAD_HEADER));
    }

    #[test]
    fn snr_sort_key_is_ordered() {
        let xs = [-10.0, -0.5, 0.0, 3.0, 30.0];
        for w in xs.windows(2) {
            assert!(total_order_key(w[0]) < total_order_key(w[1]));
        }
    }
}
