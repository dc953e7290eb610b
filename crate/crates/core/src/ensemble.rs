//! Monte-Carlo ensembles of filter trajectories.
//!
//! Trajectory i draws its noise from stream i of the base seed, and results
//! are folded in index order once a batch finishes, so reports do not
//! depend on the thread count or on completion order.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filter_sp::{run_trajectory, Filter, MeasurementRecord, Noise};
use crate::series::{Series, Stepping};

/// Trajectories folded per batch; bounds memory independently of N.
const BATCH: usize = 256;

/// Welford accumulator over real samples.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Running {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Running {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Sample standard deviation over √N.
    fn stderr(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
    }
}

/// Innovations summary of one record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnovationStats {
    pub mean_increment: f64,
    /// Σ ΔW² / T; 1 for a Wiener process.
    pub quadratic_variation_rate: f64,
    pub lag1_autocorrelation: f64,
    /// W(T) = Σ ΔW.
    pub terminal: f64,
    /// QV/T inside 1 ± 3·sqrt(2dt/T) and nonzero increment variance.
    pub wiener_consistent: bool,
}

impl InnovationStats {
    pub fn from_increments(dt: f64, dw: &[f64]) -> Self {
        let n = dw.len();
        let horizon = dt * n as f64;
        let sum: f64 = dw.iter().sum();
        let mean = if n > 0 { sum / n as f64 } else { 0.0 };
        let qv: f64 = dw.iter().map(|x| x * x).sum();
        let centered = |i: usize| dw[i] - mean;
        let var: f64 = (0..n).map(|i| centered(i).powi(2)).sum();
        let lag1 = if var > 0.0 {
            (1..n).map(|i| centered(i) * centered(i - 1)).sum::<f64>() / var
        } else {
            f64::NAN
        };
        let rate = if horizon > 0.0 { qv / horizon } else { 0.0 };
        let band = 3.0 * (2.0 * dt / horizon).sqrt();
        InnovationStats {
            mean_increment: mean,
            quadratic_variation_rate: rate,
            lag1_autocorrelation: lag1,
            terminal: sum,
            wiener_consistent: var > 0.0 && (rate - 1.0).abs() <= band,
        }
    }
}

/// Uses the innovations of each record when present, otherwise the raw
/// output increments.
pub fn innovations_stats(records: &[MeasurementRecord]) -> Vec<InnovationStats> {
    records
        .iter()
        .map(|r| InnovationStats::from_increments(r.dt, r.dw.as_deref().unwrap_or(&r.dy)))
        .collect()
}

/// Ensemble parameters other than the filter itself.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleSpec {
    pub stepping: Stepping,
    pub trajectories: usize,
    pub base_seed: u64,
    /// Worker threads; 0 uses the rayon default.
    pub threads: usize,
    pub keep_records: bool,
}

/// Per-time ensemble statistics of every filter column, real and imaginary
/// parts treated as separate channels.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleReport {
    pub trajectories: usize,
    pub base_seed: u64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub columns: Vec<String>,
    pub mean: Vec<Vec<Complex64>>,
    /// (stderr of re, stderr of im)
    pub stderr: Vec<Vec<(f64, f64)>>,
    /// Matched master values (NaN where a column has no counterpart).
    pub master: Option<Vec<Vec<Complex64>>>,
    pub innovations: Vec<InnovationStats>,
    pub records: Option<Vec<MeasurementRecord>>,
}

fn z_score(mean: f64, reference: f64, stderr: f64) -> f64 {
    let diff = mean - reference;
    if stderr > 0.0 {
        diff / stderr
    } else if diff.abs() <= 1e-12 * (1.0 + reference.abs()) {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    }
}

impl EnsembleReport {
    /// Aligns a master series on time and on column names, mapping the
    /// filter prefixes `pi_` and `zakai_` onto the master prefix `mu_`.
    pub fn attach_master(&mut self, master: &Series) -> Result<()> {
        if master.len() != self.times.len()
            || master
                .times
                .iter()
                .zip(&self.times)
                .any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + b.abs()))
        {
            return Err(Error::Grid("master series times differ from ensemble output times".into()));
        }
        let map: Vec<Option<usize>> = self
            .columns
            .iter()
            .map(|c| {
                let target = c
                    .strip_prefix("pi_")
                    .or_else(|| c.strip_prefix("zakai_"))
                    .map(|s| format!("mu_{s}"))
                    .unwrap_or_else(|| c.clone());
                master.column_index(&target)
            })
            .collect();
        let nan = Complex64::new(f64::NAN, f64::NAN);
        self.master = Some(
            master
                .rows
                .iter()
                .map(|row| map.iter().map(|m| m.map_or(nan, |i| row[i])).collect())
                .collect(),
        );
        Ok(())
    }

    /// z-scores of the real (`imag = false`) or imaginary channel of a column.
    pub fn z_scores(&self, column: &str, imag: bool) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == column)?;
        let master = self.master.as_ref()?;
        Some(
            (0..self.times.len())
                .map(|t| {
                    let (m, r, s) = (self.mean[t][i], master[t][i], self.stderr[t][i]);
                    if imag {
                        z_score(m.im, r.im, s.1)
                    } else {
                        z_score(m.re, r.re, s.0)
                    }
                })
                .collect(),
        )
    }

    /// Fraction of output times with |z| ≤ `bound`.
    pub fn fraction_within(&self, column: &str, imag: bool, bound: f64) -> Option<f64> {
        let z = self.z_scores(column, imag)?;
        Some(z.iter().filter(|z| z.abs() <= bound).count() as f64 / z.len() as f64)
    }

    /// Columns: `time`, then per filter column `<c>_mean_re`, `<c>_mean_im`,
    /// `<c>_stderr_re`, `<c>_stderr_im` and, with a master attached,
    /// `<c>_master_re`, `<c>_master_im`, `<c>_z_re`, `<c>_z_im`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["time".to_string()];
        let mut suffixes = vec!["mean_re", "mean_im", "stderr_re", "stderr_im"];
        if self.master.is_some() {
            suffixes.extend(["master_re", "master_im", "z_re", "z_im"]);
        }
        for c in &self.columns {
            header.extend(suffixes.iter().map(|s| format!("{c}_{s}")));
        }
        w.write_record(&header)?;
        for (t, time) in self.times.iter().enumerate() {
            let mut rec = vec![time.to_string()];
            for i in 0..self.columns.len() {
                let (m, (se_re, se_im)) = (self.mean[t][i], self.stderr[t][i]);
                rec.extend([m.re, m.im, se_re, se_im].map(|v| v.to_string()));
                if let Some(master) = &self.master {
                    let r = master[t][i];
                    rec.extend([r.re, r.im, z_score(m.re, r.re, se_re), z_score(m.im, r.im, se_im)].map(|v| v.to_string()));
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Runs `spec.trajectories` self-generated trajectories of `filter`.
/// Trajectory failures are reported with their index.
pub fn run_ensemble<F>(filter: &F, spec: EnsembleSpec) -> Result<EnsembleReport>
where
    F: Filter + Sync,
{
    if spec.trajectories < 2 {
        return Err(Error::Domain(format!(
            "an ensemble needs at least 2 trajectories, got {}",
            spec.trajectories
        )));
    }
    spec.stepping.steps()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.threads)
        .build()
        .map_err(|e| Error::Domain(format!("cannot start worker pool: {e}")))?;

    let columns = filter.columns();
    let mut acc: Vec<Vec<(Running, Running)>> = Vec::new();
    let mut times = Vec::new();
    let mut innovations = Vec::with_capacity(spec.trajectories);
    let mut records = spec.keep_records.then(Vec::new);

    let mut start = 0;
    while start < spec.trajectories {
        let end = (start + BATCH).min(spec.trajectories);
        let batch: Vec<Result<(MeasurementRecord, Series)>> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|i| {
                    let noise = Noise::SelfGenerate {
                        seed: spec.base_seed,
                        stream: i as u64,
                    };
                    run_trajectory(filter, spec.stepping, noise).map_err(|e| Error::Trajectory {
                        index: i as u64,
                        source: Box::new(e),
                    })
                })
                .collect()
        });
        for item in batch {
            let (record, series) = item?;
            if acc.is_empty() {
                times = series.times.clone();
                acc = vec![vec![(Running::default(), Running::default()); columns.len()]; times.len()];
            }
            for (a_row, row) in acc.iter_mut().zip(&series.rows) {
                for (a, z) in a_row.iter_mut().zip(row) {
                    a.0.push(z.re);
                    a.1.push(z.im);
                }
            }
            innovations.push(InnovationStats::from_increments(
                record.dt,
                record.dw.as_deref().unwrap_or(&record.dy),
            ));
            if let Some(r) = records.as_mut() {
                r.push(record);
            }
        }
        start = end;
    }

    Ok(EnsembleReport {
        trajectories: spec.trajectories,
        base_seed: spec.base_seed,
        dt: spec.stepping.dt,
        times,
        columns,
        mean: acc
            .iter()
            .map(|row| row.iter().map(|(re, im)| Complex64::new(re.mean, im.mean)).collect())
            .collect(),
        stderr: acc
            .iter()
            .map(|row| row.iter().map(|(re, im)| (re.stderr(), im.stderr())).collect())
            .collect(),
        master: None,
        innovations,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter_sp::CoupledSpFilter;
    use crate::master_sp::propagate_master_sp;
    use crate::model::{Grid, Pulse, PulseShape, SystemModel};
    use crate::operators::qubit::*;
    use crate::operators::Operator;
    use crate::series::Observable;

    fn qubit(eta: Vec<Complex64>) -> SystemModel {
        SystemModel::new(Operator::identity(2), sigma_minus(), Operator::zeros(2), eta).unwrap()
    }

    fn photon(t_end: f64) -> Pulse {
        Pulse::from_shape(PulseShape::DecayingExponential { gamma: 1.0 }, Grid::new(0.01, t_end).unwrap()).unwrap()
    }

    fn zero_pulse(t_end: f64) -> Pulse {
        Pulse::vacuum(Grid::new(0.5, t_end).unwrap())
    }

    #[test]
    fn thread_count_does_not_change_report() {
        let model = qubit(ground());
        let pulse = photon(2.0);
        let obs = [Observable::new("n", excitation())];
        let filter = CoupledSpFilter::new(&model, &pulse, &obs);
        let spec = |threads| EnsembleSpec {
            stepping: Stepping::new(0.01, 2.0),
            trajectories: 2,
            base_seed: 42,
            threads,
            keep_records: true,
        };
        let a = run_ensemble(&filter, spec(1)).unwrap();
        let b = run_ensemble(&filter, spec(8)).unwrap();
        assert_eq!(a, b);
        let mut wide = spec(3);
        wide.trajectories = BATCH + 7;
        wide.keep_records = false;
        let c = run_ensemble(&filter, wide).unwrap();
        wide.threads = 1;
        assert_eq!(c, run_ensemble(&filter, wide).unwrap());
    }

    #[test]
    fn needs_two_trajectories() {
        let model = qubit(ground());
        let pulse = photon(1.0);
        let filter = CoupledSpFilter::new(&model, &pulse, &[]);
        let spec = EnsembleSpec {
            stepping: Stepping::new(0.01, 1.0),
            trajectories: 1,
            base_seed: 0,
            threads: 1,
            keep_records: false,
        };
        assert!(matches!(run_ensemble(&filter, spec), Err(Error::Domain(_))));
    }

    #[test]
    fn damped_qubit_mean_tracks_exponential() {
        let model = qubit(excited());
        let pulse = zero_pulse(3.0);
        let obs = [Observable::new("n", excitation())];
        let filter = CoupledSpFilter::new(&model, &pulse, &obs);
        let stepping = Stepping::new(1e-3, 3.0).with_outputs(30).unwrap();
        let mut report = run_ensemble(
            &filter,
            EnsembleSpec {
                stepping,
                trajectories: 400,
                base_seed: 7,
                threads: 0,
                keep_records: false,
            },
        )
        .unwrap();
        let master = propagate_master_sp(&model, &pulse, stepping, &obs).unwrap();
        report.attach_master(&master).unwrap();
        let frac = report.fraction_within("pi_11_n", false, 3.0).unwrap();
        assert!(frac >= 0.95, "fraction {frac}");
        for (t, row) in report.times.iter().zip(report.master.as_ref().unwrap()) {
            assert!((row[0].re - (-t).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn innovation_summary_examples() {
        let zeros = InnovationStats::from_increments(1e-3, &[0.0; 100]);
        assert_eq!(zeros.quadratic_variation_rate, 0.0);
        assert!(!zeros.wiener_consistent);

        let mut rng = crate::filter_sp::trajectory_rng(3, 0);
        use rand_distr::{Distribution, StandardNormal};
        let dt: f64 = 1e-3;
        let dw: Vec<f64> = (0..10_000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * dt.sqrt()
            })
            .collect();
        let s = InnovationStats::from_increments(dt, &dw);
        assert!(s.wiener_consistent, "{s:?}");
        assert!(s.lag1_autocorrelation.abs() < 4.0 / 100.0);
    }

    #[test]
    fn csv_layout() {
        let report = EnsembleReport {
            trajectories: 2,
            base_seed: 0,
            dt: 0.1,
            times: vec![0.0, 0.1],
            columns: vec!["pi_11_n".into()],
            mean: vec![vec![Complex64::new(0.0, 0.0)], vec![Complex64::new(0.5, 0.0)]],
            stderr: vec![vec![(0.0, 0.0)], vec![(0.1, 0.0)]],
            master: Some(vec![vec![Complex64::new(0.0, 0.0)], vec![Complex64::new(0.4, 0.0)]]),
            innovations: vec![],
            records: None,
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("time,pi_11_n_mean_re"));
        assert!(lines[2].ends_with(",0.9999999999999998,0"), "{}", lines[2]);
    }
}
