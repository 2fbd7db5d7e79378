//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_UNATTAINABLE` are evaluated exactly as stated and
//! reported as FAIL when they fail; only an unexpected failure makes the
//! process exit nonzero.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use extended_crlb::estimators::{self, Method, SearchConfig};
use extended_crlb::fisher::{self, fim_oracle_fd};
use extended_crlb::scenario::{self, NoiseAxis, ScenarioConfig};
use extended_crlb::scene::{self, TargetScene};
use extended_crlb::series;
use extended_crlb::waveform::{self, Identity, WaveformSpec};
use extended_crlb::Quadrature;
use num_complex::Complex64;

const KNOWN_UNATTAINABLE: [u32; 4] = [2, 4, 6, 9];
const GAMMA: f64 = 1.0 / 1.06;
const DELTA: f64 = 6.25e-8;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new() -> Self {
        Verdict {
            pass: true,
            detail: String::new(),
        }
    }

    fn check(&mut self, ok: bool, label: impl AsRef<str>) {
        self.pass &= ok;
        self.note(format!("{}{}", label.as_ref(), if ok { "" } else { " [x]" }));
    }

    fn note(&mut self, text: impl AsRef<str>) {
        if !self.detail.is_empty() {
            self.detail.push_str("; ");
        }
        self.detail.push_str(text.as_ref());
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn chirp(rate: f64) -> WaveformSpec {
    WaveformSpec::chirp(rate, 5e-5).unwrap()
}

fn scene(p: usize) -> TargetScene {
    TargetScene::new(2e-4, GAMMA, DELTA, vec![Complex64::new(1.0, 0.0); p], 5e-5, None).unwrap()
}

fn n0_at(s: &TargetScene, spec: &WaveformSpec, snr_db: f64, q: &Quadrature) -> f64 {
    let g = scene::gram_matrix(s, spec, q).unwrap();
    scene::n0_for_snr(s, &g, snr_db).unwrap()
}

/// Least-squares slope of `ln y` against `ln x`.
fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn at_snr(name: &str, snr: &[f64]) -> ScenarioConfig {
    ScenarioConfig {
        noise: NoiseAxis::snr_list(snr),
        ..scenario::builtin(name).unwrap()
    }
}

fn effective_parameters(q: &Quadrature) -> Verdict {
    let mut v = Verdict::new();
    let p = waveform::effective_params(&chirp(2.56e9), q).unwrap();
    v.check(rel(p.bandwidth, 9.0884e5) <= 1e-3, format!("B = {:.5e}", p.bandwidth));
    v.check(rel(p.duration, 3.893e-5) <= 5e-3, format!("T = {:.4e}", p.duration));
    v.check(rel(p.time_bandwidth, 35.3786) <= 5e-3, format!("BT = {:.4}", p.time_bandwidth));
    let p = waveform::effective_params(&chirp(0.256e9), q).unwrap();
    v.check(rel(p.bandwidth, 0.7604e5) <= 1e-3, format!("B(0.1a) = {:.5e}", p.bandwidth));
    v.check(rel(p.time_bandwidth, 2.6988) <= 5e-3, format!("BT(0.1a) = {:.4}", p.time_bandwidth));
    v
}

fn tone(q: &Quadrature) -> Verdict {
    let mut v = Verdict::new();
    let (fc, t) = (1e5, 5e-5);
    let p = waveform::effective_params(&WaveformSpec::tone(fc, t).unwrap(), q).unwrap();
    v.check(rel(p.bandwidth, fc) <= 1e-6, format!("B/fc = {:.9}", p.bandwidth / fc));
    v.check(
        rel(p.duration, t / 3f64.sqrt()) <= 1e-6,
        format!("T/(T/sqrt3) - 1 = {:.1e}", p.duration * 3f64.sqrt() / t - 1.0),
    );
    v.note(format!(
        "B/(2 pi fc) - 1 = {:.1e}",
        p.bandwidth / (2.0 * std::f64::consts::PI * fc) - 1.0
    ));
    v
}

fn identities(q: &Quadrature) -> Verdict {
    let mut v = Verdict::new();
    let spec = WaveformSpec::gaussian_pulse(2.5e-6, 2e5, 5e-5).unwrap();
    let mut worst = (0.0f64, String::new());
    let mut count = 0;
    for id in Identity::ALL {
        for p in 0..=6 {
            for k in 0..=(6 - p) {
                let c = waveform::check_identity(&spec, id, p, k, q).unwrap();
                count += 1;
                if c.rel_error > worst.0 {
                    worst = (c.rel_error, format!("{} p={p} q={k}", id.name()));
                }
            }
        }
    }
    v.check(worst.0 <= 1e-6, format!("{count} checks, worst {:.1e} at {}", worst.0, worst.1));
    v
}

fn oracle_equivalence(q: &Quadrature) -> Verdict {
    let mut v = Verdict::new();
    let spec = chirp(2.56e9);
    for p in [1, 4, 16] {
        let s = scene(p);
        let n0 = n0_at(&s, &spec, 20.0, q);
        let a = fisher::scene_crlb(&s, &spec, n0, q).unwrap();
        let b = fisher::crlb_from_fim(&fim_oracle_fd(&s, &spec, n0, 1e-5).unwrap()).unwrap();
        let (et, eg) = (rel(a.crlb_tau, b.crlb_tau), rel(a.crlb_gamma, b.crlb_gamma));
        v.check(et <= 0.01 && eg <= 0.01, format!("P={p} tau {et:.2e} gamma {eg:.2e}"));
    }
    v
}

fn single_scatterer(q: &Quadrature) -> Verdict {
    let mut v = Verdict::new();
    let one = |spec: &WaveformSpec| {
        let s = TargetScene::new(2e-4, GAMMA, DELTA, vec![Complex64::new(1.3, 0.0)], 5e-5, None).unwrap();
        let a = fisher::crlb_single(spec, 1.3, GAMMA, 1e-9, q).unwrap();
        let b = fisher::scene_crlb(&s, spec, 1e-9, q).unwrap();
        rel(a.crlb_tau, b.crlb_tau).max(rel(a.crlb_gamma, b.crlb_gamma))
    };
    let smooth = one(&WaveformSpec::gaussian_pulse(2.5e-6, 0.0, 5e-5).unwrap());
    v.check(smooth <= 1e-10, format!("gaussian pulse {smooth:.1e}"));
    v.note(format!("chirp with edge jumps {:.1e} (info)", one(&chirp(2.56e9))));
    v
}

fn series_convergence(q: &Quadrature) -> Verdict {
    let mut v = Verdict::new();
    let spec = chirp(2.56e9);
    let s4 = scene(4);
    let n0 = n0_at(&s4, &spec, 20.0, q);
    let d = series::truncation_decay(&s4, &spec, n0, &[4], true, q).unwrap();
    let r = &d.rows[0];
    v.check(
        r.gap_tau <= 1e-3 && r.gap_gamma <= 1e-3,
        format!("P=4 K=4 gap tau {:.2e} gamma {:.2e}", r.gap_tau, r.gap_gamma),
    );
    let s16 = scene(16);
    let n0 = n0_at(&s16, &spec, 20.0, q);
    let d = series::truncation_decay(&s16, &spec, n0, &[1, 4], true, q).unwrap();
    let (k1, k4) = (&d.rows[0], &d.rows[1]);
    v.check(
        k4.gap_tau < k1.gap_tau && k4.gap_gamma < k1.gap_gamma,
        format!(
            "P=16 tau K1 {:.3} -> K4 {:.3}, gamma K1 {:.3} -> K4 {:.3}",
            k1.gap_tau, k4.gap_tau, k1.gap_gamma, k4.gap_gamma
        ),
    );
    if k1.failure.is_some() {
        v.note("P=16 K=1 reduction is indefinite");
    }
    v
}

fn scaling_laws(q: &Quadrature) -> Verdict {
    let mut v = Verdict::new();
    let amp = scenario::run_scenario(&scenario::builtin("scaling-amplitude").unwrap(), q).unwrap();
    let e: Vec<f64> = amp.crlb.iter().map(|r| r.energy).collect();
    let t: Vec<f64> = amp.crlb.iter().map(|r| r.crlb_tau).collect();
    let s = loglog_slope(&e, &t);
    v.check((s + 1.0).abs() <= 0.05, format!("tau vs M00 slope {s:.3}"));

    let bw = scenario::run_scenario(&at_snr("fig-bandwidth-sweep", &[20.0]), q).unwrap();
    let b2: Vec<f64> = bw.crlb.iter().map(|r| r.bandwidth.powi(2)).collect();
    let t: Vec<f64> = bw.crlb.iter().map(|r| r.crlb_tau).collect();
    let s = loglog_slope(&b2, &t);
    v.check((s + 1.0).abs() <= 0.05, format!("tau vs B^2 slope {s:.3}"));
    let bt2: Vec<f64> = bw.crlb.iter().map(|r| r.time_bandwidth.powi(2)).collect();
    let g: Vec<f64> = bw.crlb.iter().map(|r| r.crlb_gamma).collect();
    v.note(format!("gamma vs (BT)^2 slope {:.3} (info)", loglog_slope(&bt2, &g)));

    let fixed = scenario::run_scenario(&at_snr("fig-tbp-fixed", &[20.0]), q).unwrap();
    let d: Vec<f64> = fixed.crlb.iter().map(|r| r.duration).collect();
    let g: Vec<f64> = fixed.crlb.iter().map(|r| r.crlb_gamma).collect();
    let s = loglog_slope(&d, &g);
    v.check(s.abs() <= 0.1, format!("fixed BT: gamma vs T slope {s:.3}"));
    v
}

fn target_size(q: &Quadrature) -> Verdict {
    let mut v = Verdict::new();
    let t = scenario::run_scenario(&at_snr("fig-p-sweep", &[20.0]), q).unwrap();
    let rows: Vec<_> = t.crlb.iter().collect();
    let ok = rows
        .windows(2)
        .all(|w| w[1].crlb_tau >= w[0].crlb_tau && w[1].crlb_gamma >= w[0].crlb_gamma);
    let mut line = String::new();
    for r in &rows {
        let _ = write!(line, "P={} ({:.3e}, {:.3e}) ", r.p, r.crlb_tau, r.crlb_gamma);
    }
    v.check(ok, line.trim_end());
    v
}

fn monte_carlo_ordering(q: &Quadrature) -> Verdict {
    let mut v = Verdict::new();
    let report = estimators::monte_carlo(
        &scene(4),
        &chirp(2.56e9),
        &[36.0],
        100,
        1,
        &[Method::OracleMf, Method::Wbaf],
        &SearchConfig::default(),
        q,
    )
    .unwrap();
    for r in &report.rows {
        let (rt, rg) = (r.mse_tau / r.crlb_tau, r.mse_gamma / r.crlb_gamma);
        match r.method {
            Method::OracleMf => v.check(rt < 1.0 && rg < 1.0, format!("oracle-mf MSE/CRLB {rt:.2}, {rg:.2}")),
            Method::Wbaf => v.check(rt > 2.0 && rg > 2.0, format!("wbaf MSE/CRLB {rt:.2}, {rg:.2}")),
        }
    }
    v
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(read_all(&p));
        } else {
            out.push((p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()));
        }
    }
    out.sort();
    out
}

fn determinism(q: &Quadrature) -> Verdict {
    let mut v = Verdict::new();
    let mut mc = at_snr("fig-mse-p4", &[20.0, 30.0]);
    mc.monte_carlo.as_mut().unwrap().trials = 6;
    let cfgs = [
        mc,
        at_snr("fig-k-sweep", &[10.0, 20.0]),
        at_snr("fig-bandwidth-sweep", &[20.0]),
        scenario::builtin("scaling-amplitude").unwrap(),
    ];
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for c in &cfgs {
        scenario::run_to_dir(c, a.path(), q).unwrap();
        scenario::run_to_dir(c, b.path(), q).unwrap();
    }
    let (fa, fb) = (read_all(a.path()), read_all(b.path()));
    let csvs = fa.iter().filter(|(n, _)| n.ends_with(".csv")).count();
    v.check(fa == fb && csvs >= 5, format!("{} scenarios, {csvs} CSVs, {} files compared", cfgs.len(), fa.len()));
    v
}

fn main() {
    let q = Quadrature::default();
    let criteria: [(u32, &str, fn(&Quadrature) -> Verdict); 10] = [
        (1, "effective parameters of the reference chirp", effective_parameters),
        (2, "tone bandwidth and duration", tone),
        (3, "moment identity suite", identities),
        (4, "integral CRLB vs finite-difference FIM", oracle_equivalence),
        (5, "single-scatterer closed form", single_scatterer),
        (6, "series convergence", series_convergence),
        (7, "scaling laws", scaling_laws),
        (8, "monotone in target size", target_size),
        (9, "Monte Carlo ordering at 36 dB", monte_carlo_ordering),
        (10, "byte-identical reruns", determinism),
    ];
    let mut unexpected = Vec::new();
    for (n, name, f) in criteria {
        let start = Instant::now();
        let v = f(&q);
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {n:>2} {status}  {name} ({:.1} s): {}",
            start.elapsed().as_secs_f64(),
            v.detail
        );
        if !v.pass && !KNOWN_UNATTAINABLE.contains(&n) {
            unexpected.push(n);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
