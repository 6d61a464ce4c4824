//! Synthetic per-BS RSRP/SINR trace generation for UE routes.
//!
//! Propagation model: log-distance path loss with spatially correlated
//! log-normal shadowing over a waypoint polyline. Raw traces are sampled at
//! 120 ms, then Fourier-resampled to 10 ms and smoothed with a 2 s moving
//! average before they reach the protocol or the RL environment.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{FftNum, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::rng::seeded;
use crate::scalar::{db_to_lin, lin_to_db, Scalar};
use crate::{Error, Result};

/// Raw sampling interval of generated traces, seconds.
pub const RAW_DT_S: f64 = 0.12;
/// Resampling factor from 120 ms to 10 ms.
pub const RESAMPLE_FACTOR: usize = 12;
/// Moving-average window, seconds.
pub const SMOOTH_WINDOW_S: f64 = 2.0;

/// Base-station layout and propagation parameters of the synthetic map.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioMap {
    /// BS positions in meters.
    pub bs_positions: Vec<[f64; 2]>,
    /// Transmit power per BS, dBm.
    pub tx_power_dbm: Vec<f64>,
    /// Path loss at the 1 m reference distance, dB.
    pub pathloss_ref_db: f64,
    pub pathloss_exponent: f64,
    /// Shadow fading standard deviation, dB (0 disables shadowing).
    pub shadow_sigma_db: f64,
    /// Decorrelation distance of the shadowing process, meters.
    pub shadow_corr_distance_m: f64,
    pub noise_floor_dbm: f64,
    /// Allowed UE area: [min_x, min_y, max_x, max_y], meters.
    pub bounds: [f64; 4],
}

impl Default for RadioMap {
    /// Five macro BSs on a perturbed pentagon over a 1 km x 1 km area.
    fn default() -> Self {
        let center = [500.0, 500.0];
        let radius = 330.0;
        // Fixed perturbations so the default layout has no exact symmetries.
        let jitter = [
            [21.0, -34.0],
            [-48.0, 12.0],
            [15.0, 41.0],
            [-26.0, -19.0],
            [38.0, 27.0],
        ];
        let bs_positions = (0..5)
            .map(|i| {
                let angle = std::f64::consts::TAU * (i as f64) / 5.0 + 0.3;
                [
                    center[0] + radius * angle.cos() + jitter[i][0],
                    center[1] + radius * angle.sin() + jitter[i][1],
                ]
            })
            .collect();
        RadioMap {
            bs_positions,
            tx_power_dbm: vec![30.0; 5],
            pathloss_ref_db: 40.0,
            pathloss_exponent: 3.5,
            shadow_sigma_db: 6.0,
            shadow_corr_distance_m: 50.0,
            noise_floor_dbm: -100.0,
            bounds: [0.0, 0.0, 1000.0, 1000.0],
        }
    }
}

impl RadioMap {
    pub fn n_bs(&self) -> usize {
        self.bs_positions.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bs() < 2 {
            return Err(Error::Config("radio map needs at least 2 BSs".into()));
        }
        if self.tx_power_dbm.len() != self.n_bs() {
            return Err(Error::Config(format!(
                "tx_power_dbm has {} entries for {} BSs",
                self.tx_power_dbm.len(),
                self.n_bs()
            )));
        }
        if self.tx_power_dbm.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("tx_power_dbm must be finite".into()));
        }
        if !(self.pathloss_exponent > 0.0) {
            return Err(Error::Config("pathloss_exponent must be > 0".into()));
        }
        if !(self.shadow_corr_distance_m > 0.0) {
            return Err(Error::Config("shadow_corr_distance_m must be > 0".into()));
        }
        if self.bounds[0] >= self.bounds[2] || self.bounds[1] >= self.bounds[3] {
            return Err(Error::Config("bounds must span a non-empty area".into()));
        }
        Ok(())
    }

    fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.bounds[0]
            && p[1] >= self.bounds[1]
            && p[0] <= self.bounds[2]
            && p[1] <= self.bounds[3]
    }
}

/// One UE route: a waypoint polyline traversed at constant speed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteSpec {
    pub waypoints: Vec<[f64; 2]>,
    pub speed_kmh: f64,
    pub duration_s: f64,
    pub seed: u64,
}

impl RouteSpec {
    pub fn validate(&self) -> Result<()> {
        if self.waypoints.len() < 2 {
            return Err(Error::Config("route needs at least 2 waypoints".into()));
        }
        if !(self.speed_kmh > 0.0) {
            return Err(Error::Config("route speed must be > 0".into()));
        }
        if !(self.duration_s > 0.0) {
            return Err(Error::Config("route duration must be > 0".into()));
        }
        Ok(())
    }

    /// UE position after travelling `dist` meters along the polyline.
    /// Clamped at the final waypoint once the polyline is exhausted.
    fn position_at(&self, dist: f64) -> [f64; 2] {
        let mut remaining = dist.max(0.0);
        for pair in self.waypoints.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let seg = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            if remaining <= seg && seg > 0.0 {
                let f = remaining / seg;
                return [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])];
            }
            remaining -= seg;
        }
        *self.waypoints.last().unwrap()
    }
}

/// Train/test membership of a generated trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Time series of per-BS RSRP and SINR for one UE route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioTrace {
    pub id: String,
    /// Seconds per sample.
    pub dt_s: f64,
    pub speed_kmh: f64,
    /// `[T][B]`, dBm.
    pub rsrp_dbm: Vec<Vec<f64>>,
    /// `[T][B]`, dB.
    pub sinr_db: Vec<Vec<f64>>,
}

impl RadioTrace {
    pub fn len(&self) -> usize {
        self.rsrp_dbm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rsrp_dbm.is_empty()
    }

    pub fn n_bs(&self) -> usize {
        self.rsrp_dbm.first().map_or(0, Vec::len)
    }

    /// Truncate to the first `seconds` of the trace (used for the shortened
    /// training iterations).
    pub fn prefix(&self, seconds: f64) -> RadioTrace {
        let n = ((seconds / self.dt_s).round() as usize).min(self.len());
        RadioTrace {
            id: self.id.clone(),
            dt_s: self.dt_s,
            speed_kmh: self.speed_kmh,
            rsrp_dbm: self.rsrp_dbm[..n].to_vec(),
            sinr_db: self.sinr_db[..n].to_vec(),
        }
    }
}

/// SINR per BS from a snapshot of per-BS received powers.
///
/// `SINR_b = P_b / (sum of all other P_i + N)`, computed in linear mW.
pub fn compute_sinr(rsrp_dbm: &[f64], noise_floor_dbm: f64) -> Vec<f64> {
    let lin: Vec<f64> = rsrp_dbm.iter().map(|&p| db_to_lin(p)).collect();
    let total: f64 = lin.iter().sum();
    let noise = db_to_lin(noise_floor_dbm);
    lin.iter()
        .map(|&p| lin_to_db(p / (total - p + noise)))
        .collect()
}

/// Generates one raw 120 ms-sampled trace for a route over a map.
///
/// Deterministic for a fixed `route.seed`. Shadowing follows a first-order
/// autoregressive process in travelled distance with decorrelation distance
/// `shadow_corr_distance_m`, one independent process per BS.
pub fn generate_trace(map: &RadioMap, route: &RouteSpec) -> Result<RadioTrace> {
    map.validate()?;
    route.validate()?;
    for (i, &w) in route.waypoints.iter().enumerate() {
        if !map.contains(w) {
            return Err(Error::Invalid(format!(
                "route waypoint {i} at ({}, {}) leaves the map bounds",
                w[0], w[1]
            )));
        }
    }

    let n_bs = map.n_bs();
    let samples = (route.duration_s / RAW_DT_S).round() as usize;
    let speed_ms = route.speed_kmh / 3.6;
    let step_m = speed_ms * RAW_DT_S;
    let rho = (-step_m / map.shadow_corr_distance_m).exp();
    let innovation = map.shadow_sigma_db * (1.0 - rho * rho).sqrt();

    let mut rng = seeded(route.seed, "shadow");
    let mut shadow: Vec<f64> = (0..n_bs)
        .map(|_| map.shadow_sigma_db * rng.sample::<f64, _>(StandardNormal))
        .collect();

    let mut rsrp = Vec::with_capacity(samples);
    let mut sinr = Vec::with_capacity(samples);
    for k in 0..samples {
        if k > 0 {
            for s in shadow.iter_mut() {
                *s = rho * *s + innovation * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let pos = route.position_at(k as f64 * step_m);
        let row: Vec<f64> = (0..n_bs)
            .map(|b| {
                let bs = map.bs_positions[b];
                let d = ((pos[0] - bs[0]).powi(2) + (pos[1] - bs[1]).powi(2))
                    .sqrt()
                    .max(1.0);
                let pl = map.pathloss_ref_db + 10.0 * map.pathloss_exponent * d.log10();
                map.tx_power_dbm[b] - pl - shadow[b]
            })
            .collect();
        sinr.push(compute_sinr(&row, map.noise_floor_dbm));
        rsrp.push(row);
    }

    Ok(RadioTrace {
        id: format!("route-{}", route.seed),
        dt_s: RAW_DT_S,
        speed_kmh: route.speed_kmh,
        rsrp_dbm: rsrp,
        sinr_db: sinr,
    })
}

/// Frequency-domain zero-padding resampler (factor x more samples).
///
/// The output at the original sample instants equals the input up to
/// round-off; a factor of 12 maps 120 ms traces to 10 ms resolution.
pub fn fourier_resample<T: Scalar + FftNum>(signal: &[T], factor: usize) -> Result<Vec<T>> {
    if factor == 0 {
        return Err(Error::Invalid("resample factor must be >= 1".into()));
    }
    if signal.len() < 2 {
        return Err(Error::Invalid("resample needs at least 2 samples".into()));
    }
    if factor == 1 {
        return Ok(signal.to_vec());
    }
    let n = signal.len();
    let m = n * factor;
    let mut planner = FftPlanner::<T>::new();

    let mut spectrum: Vec<Complex<T>> = signal.iter().map(|&x| Complex::new(x, T::zero())).collect();
    planner.plan_fft_forward(n).process(&mut spectrum);

    let mut padded = vec![Complex::new(T::zero(), T::zero()); m];
    let half = n / 2;
    for k in 0..=half.min(n - 1) {
        padded[k] = spectrum[k];
    }
    for k in half + 1..n {
        padded[m - (n - k)] = spectrum[k];
    }
    if n % 2 == 0 {
        // Split the Nyquist bin between the positive and negative halves.
        let nyq = spectrum[half] * T::c(0.5);
        padded[half] = nyq;
        padded[m - half] = nyq;
    }
    planner.plan_fft_inverse(m).process(&mut padded);

    let scale = T::one() / T::c(n as f64);
    Ok(padded.iter().map(|c| c.re * scale).collect())
}

/// Centered moving average with a truncated, renormalized window at the
/// trace boundaries (output has the same length as the input).
pub fn moving_average<T: Scalar>(signal: &[T], window_samples: usize) -> Vec<T> {
    if window_samples <= 1 || signal.is_empty() {
        return signal.to_vec();
    }
    let left = (window_samples - 1) / 2;
    let right = window_samples / 2;
    (0..signal.len())
        .map(|i| {
            let lo = i.saturating_sub(left);
            let hi = (i + right + 1).min(signal.len());
            let sum: T = signal[lo..hi].iter().copied().sum();
            sum / T::c((hi - lo) as f64)
        })
        .collect()
}

fn resample_columns(rows: &[Vec<f64>], factor: usize, window: usize) -> Result<Vec<Vec<f64>>> {
    let n_bs = rows.first().map_or(0, Vec::len);
    let mut cols = Vec::with_capacity(n_bs);
    for b in 0..n_bs {
        let col: Vec<f64> = rows.iter().map(|r| r[b]).collect();
        let dense = fourier_resample(&col, factor)?;
        cols.push(moving_average(&dense, window));
    }
    let t_out = cols.first().map_or(0, Vec::len);
    Ok((0..t_out)
        .map(|t| (0..n_bs).map(|b| cols[b][t]).collect())
        .collect())
}

/// Full preprocessing of one raw trace: Fourier resample x12 to 10 ms, then
/// a 2 s moving average on every RSRP/SINR column.
pub fn preprocess(raw: &RadioTrace) -> Result<RadioTrace> {
    let dt = raw.dt_s / RESAMPLE_FACTOR as f64;
    let window = (SMOOTH_WINDOW_S / dt).round() as usize;
    Ok(RadioTrace {
        id: raw.id.clone(),
        dt_s: dt,
        speed_kmh: raw.speed_kmh,
        rsrp_dbm: resample_columns(&raw.rsrp_dbm, RESAMPLE_FACTOR, window)?,
        sinr_db: resample_columns(&raw.sinr_db, RESAMPLE_FACTOR, window)?,
    })
}

/// Generates and preprocesses traces for all routes, tagging the first
/// `n_train` as training traces and the rest as test traces.
pub fn build_dataset(
    map: &RadioMap,
    routes: &[RouteSpec],
    n_train: usize,
) -> Result<Vec<(RadioTrace, Split)>> {
    if routes.is_empty() {
        return Err(Error::Config("dataset needs at least one route".into()));
    }
    routes
        .iter()
        .enumerate()
        .map(|(i, route)| {
            let trace = preprocess(&generate_trace(map, route)?)?;
            let split = if i < n_train { Split::Train } else { Split::Test };
            Ok((trace, split))
        })
        .collect()
}

/// Sidecar metadata stored next to each trace CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceMeta {
    pub id: String,
    pub dt: f64,
    pub speed_kmh: f64,
    pub n_bs: usize,
    pub split: Option<Split>,
}

pub fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("json")
}

/// Writes a trace as CSV (`t, rsrp_0.., sinr_0..`) plus a JSON sidecar with
/// the metadata. Values round-trip bit-exactly through `read_trace`.
pub fn write_trace(path: &Path, trace: &RadioTrace, split: Option<Split>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let n_bs = trace.n_bs();
    let mut header = vec!["t".to_string()];
    header.extend((0..n_bs).map(|b| format!("rsrp_{b}")));
    header.extend((0..n_bs).map(|b| format!("sinr_{b}")));
    writeln!(out, "{}", header.join(","))?;
    for (k, (rsrp, sinr)) in trace.rsrp_dbm.iter().zip(&trace.sinr_db).enumerate() {
        let mut row = Vec::with_capacity(1 + 2 * n_bs);
        row.push(format!("{}", k as f64 * trace.dt_s));
        row.extend(rsrp.iter().map(|v| format!("{v}")));
        row.extend(sinr.iter().map(|v| format!("{v}")));
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;

    let meta = TraceMeta {
        id: trace.id.clone(),
        dt: trace.dt_s,
        speed_kmh: trace.speed_kmh,
        n_bs,
        split,
    };
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::Invalid(format!("metadata serialization failed: {e}")))?;
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

/// Reads a trace written by [`write_trace`], validating the header layout,
/// row shape and the consistency of CSV time spacing with the sidecar `dt`.
pub fn read_trace(path: &Path) -> Result<(RadioTrace, Option<Split>)> {
    let display = path.display().to_string();
    let meta_path = sidecar_path(path);
    let meta: TraceMeta = serde_json::from_str(&std::fs::read_to_string(&meta_path)?)
        .map_err(|e| Error::parse(meta_path.display().to_string(), e.line(), e.to_string()))?;

    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(&display, 1, "empty trace file"))??;
    let cols: Vec<&str> = header.trim().split(',').collect();
    let expected_cols = 1 + 2 * meta.n_bs;
    if cols.len() != expected_cols {
        return Err(Error::parse(
            &display,
            1,
            format!("column count mismatch: got {}, expected {expected_cols}", cols.len()),
        ));
    }
    if cols[0] != "t" {
        return Err(Error::parse(&display, 1, "first column must be 't'"));
    }
    for b in 0..meta.n_bs {
        if cols[1 + b] != format!("rsrp_{b}") || cols[1 + meta.n_bs + b] != format!("sinr_{b}") {
            return Err(Error::parse(&display, 1, "unexpected header column names"));
        }
    }

    let mut rsrp = Vec::new();
    let mut sinr = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.trim().split(',').collect();
        if cells.len() != expected_cols {
            return Err(Error::parse(
                &display,
                line_no,
                format!("column count mismatch: got {}, expected {expected_cols}", cells.len()),
            ));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::parse(&display, line_no, format!("non-numeric cell '{s}'")))
        };
        let t = parse(cells[0])?;
        let expect_t = (rsrp.len()) as f64 * meta.dt;
        if (t - expect_t).abs() > meta.dt * 1e-6 + 1e-12 {
            return Err(Error::parse(
                &display,
                line_no,
                format!("time column {t} disagrees with metadata dt {}", meta.dt),
            ));
        }
        rsrp.push(cells[1..1 + meta.n_bs].iter().map(|s| parse(s)).collect::<Result<Vec<_>>>()?);
        sinr.push(cells[1 + meta.n_bs..].iter().map(|s| parse(s)).collect::<Result<Vec<_>>>()?);
    }

    Ok((
        RadioTrace {
            id: meta.id,
            dt_s: meta.dt,
            speed_kmh: meta.speed_kmh,
            rsrp_dbm: rsrp,
            sinr_db: sinr,
        },
        meta.split,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn no_shadow_map() -> RadioMap {
        RadioMap {
            shadow_sigma_db: 0.0,
            ..RadioMap::default()
        }
    }

    #[test]
    fn equidistant_bs_give_equal_rsrp() {
        let map = RadioMap {
            bs_positions: vec![[400.0, 500.0], [600.0, 500.0]],
            tx_power_dbm: vec![30.0, 30.0],
            shadow_sigma_db: 0.0,
            ..RadioMap::default()
        };
        let route = RouteSpec {
            waypoints: vec![[500.0, 400.0], [500.0, 600.0]],
            speed_kmh: 36.0,
            duration_s: 10.0,
            seed: 1,
        };
        let trace = generate_trace(&map, &route).unwrap();
        for row in &trace.rsrp_dbm {
            assert_abs_diff_eq!(row[0], row[1], epsilon = 1e-9);
        }
    }

    #[test]
    fn trace_is_deterministic_per_seed() {
        let map = RadioMap::default();
        let route = RouteSpec {
            waypoints: vec![[100.0, 100.0], [900.0, 900.0]],
            speed_kmh: 50.0,
            duration_s: 30.0,
            seed: 42,
        };
        let a = generate_trace(&map, &route).unwrap();
        let b = generate_trace(&map, &route).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn paper_trace_length_is_1500_samples() {
        let route = RouteSpec {
            waypoints: vec![[100.0, 100.0], [900.0, 100.0], [900.0, 900.0], [100.0, 900.0]],
            speed_kmh: 50.0,
            duration_s: 180.0,
            seed: 0,
        };
        let trace = generate_trace(&RadioMap::default(), &route).unwrap();
        assert_eq!(trace.len(), 1500);
    }

    #[test]
    fn route_outside_bounds_is_rejected() {
        let route = RouteSpec {
            waypoints: vec![[100.0, 100.0], [1100.0, 100.0]],
            speed_kmh: 50.0,
            duration_s: 10.0,
            seed: 0,
        };
        let err = generate_trace(&RadioMap::default(), &route).unwrap_err();
        assert!(err.to_string().contains("bounds"));
    }

    #[test]
    fn rsrp_decreases_with_distance_without_shadowing() {
        let map = no_shadow_map();
        // Straight line moving away from BS 0, starting outside the 1 m
        // near-field clamp so every sample strictly increases the distance.
        let bs = map.bs_positions[0];
        let dir = [500.0 - bs[0], 500.0 - bs[1]];
        let norm = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
        let start = [bs[0] + 5.0 * dir[0] / norm, bs[1] + 5.0 * dir[1] / norm];
        let route = RouteSpec {
            waypoints: vec![start, [500.0, 500.0]],
            speed_kmh: 20.0,
            duration_s: 20.0,
            seed: 3,
        };
        let trace = generate_trace(&map, &route).unwrap();
        for w in trace.rsrp_dbm.windows(2) {
            assert!(w[1][0] < w[0][0]);
        }
    }

    #[test]
    fn sinr_equal_powers() {
        let sinr = compute_sinr(&[0.0, 0.0], -200.0);
        assert_abs_diff_eq!(sinr[0], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sinr[1], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn sinr_two_to_one_ratio() {
        // linear [2, 1, 1] mW -> SINR_0 = 2/(1+1) = 1 = 0 dB
        let sinr = compute_sinr(&[10.0 * 2.0f64.log10(), 0.0, 0.0], -200.0);
        assert_abs_diff_eq!(sinr[0], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn sinr_single_dominant_bs() {
        // Others effectively off: SINR_0 == tx - noise in dB.
        let sinr = compute_sinr(&[10.0, -300.0, -300.0], -90.0);
        assert_abs_diff_eq!(sinr[0], 100.0, epsilon = 1e-6);
    }

    #[test]
    fn sinr_argmax_matches_rsrp_argmax_b2() {
        let mut rng = seeded(5, "sinr-argmax");
        for _ in 0..200 {
            let rsrp = [rng.gen_range(-110.0..-60.0), rng.gen_range(-110.0..-60.0)];
            let sinr = compute_sinr(&rsrp, -250.0);
            let am_r = if rsrp[0] >= rsrp[1] { 0 } else { 1 };
            let am_s = if sinr[0] >= sinr[1] { 0 } else { 1 };
            assert_eq!(am_r, am_s);
        }
    }

    #[test]
    fn resample_preserves_constant() {
        let out = fourier_resample(&[5.0f64; 4], 3).unwrap();
        assert_eq!(out.len(), 12);
        for v in out {
            assert_abs_diff_eq!(v, 5.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn resample_factor_one_is_identity() {
        let sig = vec![1.0f64, -2.0, 3.5, 0.25];
        assert_eq!(fourier_resample(&sig, 1).unwrap(), sig);
    }

    #[test]
    fn resample_factor_zero_errors() {
        assert!(fourier_resample(&[1.0f64, 2.0], 0).is_err());
    }

    #[test]
    fn resample_matches_analytic_sinusoid() {
        // One full period of a sinusoid well below Nyquist over n samples.
        let n = 32;
        let f = 3.0; // cycles per record
        let sig: Vec<f64> = (0..n)
            .map(|k| (std::f64::consts::TAU * f * k as f64 / n as f64).sin())
            .collect();
        let dense = fourier_resample(&sig, 12).unwrap();
        for (m, &v) in dense.iter().enumerate() {
            let t = m as f64 / (n * 12) as f64;
            assert_abs_diff_eq!(v, (std::f64::consts::TAU * f * t).sin(), epsilon = 1e-6);
        }
    }

    #[test]
    fn resample_agrees_with_original_samples() {
        let mut rng = seeded(11, "resample");
        let sig: Vec<f64> = (0..50).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let dense = fourier_resample(&sig, 12).unwrap();
        for (k, &x) in sig.iter().enumerate() {
            assert_abs_diff_eq!(dense[k * 12], x, epsilon = 1e-9);
        }
    }

    #[test]
    fn moving_average_cases() {
        let sig = [2.5f64; 7];
        assert_eq!(moving_average(&sig, 5), sig.to_vec());
        let sig = vec![1.0f64, 4.0, -2.0];
        assert_eq!(moving_average(&sig, 1), sig);
        let sig = [0.0f64, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0];
        let out = moving_average(&sig, 3);
        let expect = [0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0];
        for (a, b) in out.iter().zip(expect) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn moving_average_stays_within_input_range() {
        let mut rng = seeded(13, "ma-bounds");
        let sig: Vec<f64> = (0..300).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let lo = sig.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = sig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for w in [2, 7, 64, 200] {
            for v in moving_average(&sig, w) {
                assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn dataset_split_and_length() {
        let map = no_shadow_map();
        let routes: Vec<RouteSpec> = (0..15)
            .map(|i| RouteSpec {
                waypoints: vec![[100.0 + 10.0 * i as f64, 100.0], [900.0, 900.0]],
                speed_kmh: 50.0,
                duration_s: 180.0,
                seed: i,
            })
            .collect();
        let dataset = build_dataset(&map, &routes, 10).unwrap();
        assert_eq!(dataset.len(), 15);
        assert_eq!(dataset.iter().filter(|(_, s)| *s == Split::Train).count(), 10);
        assert_eq!(dataset.iter().filter(|(_, s)| *s == Split::Test).count(), 5);
        // 3-minute route: 1500 raw samples -> 18000 at 10 ms.
        assert_eq!(dataset[0].0.len(), 18000);
        assert_abs_diff_eq!(dataset[0].0.dt_s, 0.01, epsilon = 1e-12);
    }

    #[test]
    fn preprocess_keeps_constant_trace_constant() {
        let raw = RadioTrace {
            id: "const".into(),
            dt_s: RAW_DT_S,
            speed_kmh: 50.0,
            rsrp_dbm: vec![vec![-80.0, -90.0]; 100],
            sinr_db: vec![vec![5.0, -5.0]; 100],
        };
        let out = preprocess(&raw).unwrap();
        for row in &out.rsrp_dbm {
            assert_abs_diff_eq!(row[0], -80.0, epsilon = 1e-7);
            assert_abs_diff_eq!(row[1], -90.0, epsilon = 1e-7);
        }
    }

    #[test]
    fn trace_round_trip_is_bit_exact() {
        let map = RadioMap::default();
        let route = RouteSpec {
            waypoints: vec![[200.0, 200.0], [800.0, 700.0]],
            speed_kmh: 50.0,
            duration_s: 12.0,
            seed: 9,
        };
        let trace = generate_trace(&map, &route).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        write_trace(&path, &trace, Some(Split::Train)).unwrap();
        let (back, split) = read_trace(&path).unwrap();
        assert_eq!(trace, back);
        assert_eq!(split, Some(Split::Train));
    }

    #[test]
    fn read_rejects_missing_sinr_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "t,rsrp_0,rsrp_1\n0,-80,-90\n").unwrap();
        let meta = TraceMeta {
            id: "bad".into(),
            dt: 0.01,
            speed_kmh: 50.0,
            n_bs: 2,
            split: None,
        };
        std::fs::write(sidecar_path(&path), serde_json::to_string(&meta).unwrap()).unwrap();
        let err = read_trace(&path).unwrap_err();
        assert!(err.to_string().contains("column count mismatch"), "{err}");
    }

    #[test]
    fn read_rejects_dt_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad_dt.csv");
        std::fs::write(&path, "t,rsrp_0,sinr_0\n0,-80,3\n0.5,-80,3\n").unwrap();
        let meta = TraceMeta {
            id: "bad".into(),
            dt: 0.01,
            speed_kmh: 50.0,
            n_bs: 1,
            split: None,
        };
        std::fs::write(sidecar_path(&path), serde_json::to_string(&meta).unwrap()).unwrap();
        let err = read_trace(&path).unwrap_err();
        assert!(err.to_string().contains("disagrees"), "{err}");
    }

    #[test]
    fn read_rejects_non_numeric_cell_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan.csv");
        std::fs::write(&path, "t,rsrp_0,sinr_0\n0,-80,3\n0.01,oops,3\n").unwrap();
        let meta = TraceMeta {
            id: "bad".into(),
            dt: 0.01,
            speed_kmh: 50.0,
            n_bs: 1,
            split: None,
        };
        std::fs::write(sidecar_path(&path), serde_json::to_string(&meta).unwrap()).unwrap();
        let err = read_trace(&path).unwrap_err();
        assert!(err.to_string().contains(":3:"), "{err}");
        assert!(err.to_string().contains("non-numeric"), "{err}");
    }
}
