//! Acceptance suite: one line per criterion, non-zero exit on any failure.
//!
//! Optional real-data criteria:
//! - `MEE_MITDB_DIR`: directory with `{106,119,...}.csv` exports (+ `.ann` with
//!   N/S/V/F/Q/O labels, `.meta` with `fs=360`).
//! - `MEE_CINC2017_DIR`: directory with `REFERENCE.csv` (`record,label`) and
//!   one `{record}.csv` per entry at 300 Hz.
//!
//! Without them the synthetic replacement criteria run instead.

#[path = "../../core/tests/common/oracle.rs"]
mod oracle;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use axum::body::Body;
use axum::http::{header, Request};
use http_body_util::BodyExt;
use mee_cli::analyze::{analyze, AnalyzeArgs};
use mee_cli::bench::{bench, BenchArgs};
use mee_cli::robustness::{robustness, RobustnessArgs};
use mee_cli::screen::{pool, screen_record, ScreenArgs};
use mee_cli::GlobalOpts;
use mee_core::baselines::{
    approximate_entropy, fuzzy_entropy, permutation_entropy, sample_entropy, BaselineConfig,
};
use mee_core::diversity::{prune_by_mee, prune_random, record_mee, uncovered_bins, RecordScore};
use mee_core::morph::{
    bandwidth_entropy, morphological_entropy, wavelet_set_entropy, MeeVariant, MorphConfig,
};
use mee_core::quality::{assess_quality, NoiseReason};
use mee_core::screening::{alpha_grid, evaluate, flag_fluctuations, mee_series};
use mee_core::segmentation::{segment, Beat, SegmentConfig};
use mee_core::signal_io::{load_record, BeatLabel, RecordFormat, SynthSpec};
use oracle::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tower::ServiceExt;

const AFFINE_TOL: f64 = 1e-9;
const PARITY_TOL: f64 = 1e-9;
const MITDB_TOL: f64 = 0.03;
const MIN_FE_RATIO: f64 = 100.0;
const MAX_FUSION_US: f64 = 1.0;
const ROBUSTNESS_SIGMA: f64 = 0.03;
const COVERAGE_SEEDS: u64 = 100;

type Criterion = (&'static str, fn() -> Outcome);

enum Outcome {
    Pass(String),
    Fail(String),
    /// Data-dependent criterion replaced by its synthetic counterpart.
    Substituted(String),
}

fn bundled_record() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synth_record.csv")
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn opts() -> GlobalOpts {
    GlobalOpts::default()
}

// ---------------------------------------------------------------- mit-bih screening

const MITDB_RECORDS: [&str; 10] = ["106", "119", "200", "201", "208", "210", "219", "221", "223", "233"];

fn mitdb_screening() -> Outcome {
    let Some(dir) = std::env::var_os("MEE_MITDB_DIR").map(PathBuf::from) else {
        return Outcome::Substituted(
            "MEE_MITDB_DIR not set; replaced by synthetic_separable_series".into(),
        );
    };
    let paths: Vec<PathBuf> = MITDB_RECORDS.iter().map(|r| dir.join(format!("{r}.csv"))).collect();
    if let Some(missing) = paths.iter().find(|p| !p.exists()) {
        return Outcome::Substituted(format!(
            "{} missing; replaced by synthetic_separable_series",
            missing.display()
        ));
    }
    let mut o = opts();
    o.lead = "MLII".into();
    o.grid = Some("0:5:0.01".into());
    let args = ScreenArgs {
        records: paths.clone(),
        include_sveb: false,
        curve_out: None,
    };
    let mut results = Vec::new();
    for p in &paths {
        match screen_record(p, &args, &o) {
            Ok(r) => results.push(r),
            Err(e) => return Outcome::Fail(format!("{}: {e}", p.display())),
        }
    }
    let pooled = pool(&results).expect("all labelled");
    let m = pooled.metrics;
    let within = |got: f64, want: f64| (got - want).abs() <= MITDB_TOL;
    let mut ok = within(m.acc, 0.893) && within(m.spe, 0.924) && within(m.f1, 0.824);
    let mut detail = format!("pooled ACC/SPE/F1 {:.3}/{:.3}/{:.3}", m.acc, m.spe, m.f1);
    for (id, want) in [("201", [0.974, 0.998, 0.903]), ("210", [0.978, 0.992, 0.873])] {
        let r = results.iter().find(|r| r.record_id == id).expect("record present");
        let s = r.scores.as_ref().expect("labelled").metrics;
        ok &= within(s.acc, want[0]) && within(s.spe, want[1]) && within(s.f1, want[2]);
        detail += &format!("; #{id} {:.3}/{:.3}/{:.3}", s.acc, s.spe, s.f1);
    }
    check(ok, detail + &format!(" (tolerance ±{MITDB_TOL})"))
}

// ---------------------------------------------------------------- oracles

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cfg = BaselineConfig::default();
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    let mut note = |name: &str, case: usize, got: f64, want: f64| {
        let err = (got - want).abs() / (1.0 + want.abs());
        worst = worst.max(err);
        if !close(got, want) {
            failures.push(format!("{name}#{case}"));
        }
    };
    for case in 0..CASES {
        let x = random_sequence(&mut rng, case);
        let r = 0.2 * sd(&x);
        note("pe", case, permutation_entropy(&x, &cfg).unwrap(), naive_pe(&x, 4, 1));
        note("ae", case, approximate_entropy(&x, &cfg).unwrap(), naive_ae(&x, 2, r));
        match (sample_entropy(&x, &cfg), naive_se(&x, 2, r)) {
            (Ok(got), Some(want)) => note("se", case, got, want),
            (Err(_), None) => {}
            _ => note("se-definedness", case, 0.0, 1.0),
        }
        note("fe", case, fuzzy_entropy(&x, &cfg).unwrap(), naive_fe(&x, 2, r, 2));
        for v in [MeeVariant::I, MeeVariant::II] {
            let mc = MorphConfig::for_variant(v);
            note("bwe", case, bandwidth_entropy(&x, &mc).unwrap(), naive_bwe(&x, 100));
            note("wse", case, wavelet_set_entropy(&x, &mc).unwrap().wse, naive_wse(&x, &mc).0);
        }
    }
    check(
        failures.is_empty(),
        format!(
            "{CASES} sequences (len ≤ 128), PE/AE/SE/FE/BWE/WSE-I/WSE-II, worst rel. error {worst:.2e} (tolerance {TOL:e}){}",
            if failures.is_empty() { String::new() } else { format!(", mismatches: {failures:?}") }
        ),
    )
}

// ------------------------------------------------------------ invariance

fn synthetic_beats(seed: u64, fs: f64) -> Vec<Beat> {
    let rec = SynthSpec::new(fs, 20.0, 75.0, seed).generate().unwrap();
    segment(&rec, "II", &SegmentConfig::default()).unwrap().beats
}

fn affine_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut pool: Vec<Vec<f64>> = Vec::new();
    for (i, fs) in [250.0, 360.0, 500.0].into_iter().enumerate() {
        pool.extend(synthetic_beats(100 + i as u64, fs).into_iter().map(|b| b.samples));
    }
    let noise = Normal::new(0.0, 0.02).unwrap();
    let mut worst = 0.0f64;
    for k in 0..200 {
        let mut x = pool[k % pool.len()].clone();
        x.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
        let a = 10f64.powf(rng.random_range(-2.0..2.0));
        let b = rng.random_range(-50.0..50.0);
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        for n in 1..=4 {
            let cfg = MorphConfig::for_variant(MeeVariant::from_number(n).unwrap());
            let p = morphological_entropy(&x, &cfg).unwrap();
            let q = morphological_entropy(&y, &cfg).unwrap();
            worst = worst
                .max((p.bwe - q.bwe).abs())
                .max((p.wse - q.wse).abs())
                .max((p.mee - q.mee).abs());
        }
    }
    check(
        worst <= AFFINE_TOL,
        format!("200 noisy synthetic beats × 4 variants, max |Δ| over bwe/wse/mee = {worst:.2e} (tolerance {AFFINE_TOL:e})"),
    )
}

// ------------------------------------------------------------ separable

fn separable_series() -> Outcome {
    let rec = load_record(&bundled_record(), RecordFormat::Csv, None).unwrap();
    let beats = segment(&rec, "II", &SegmentConfig::default()).unwrap().beats;
    let series = mee_series(rec.record_id(), &beats, &MorphConfig::default(), 40).unwrap();
    let labels: Vec<BeatLabel> = beats.iter().map(|b| b.label.unwrap_or(BeatLabel::N)).collect();
    let abnormal = labels.iter().filter(|l| l.is_abnormal()).count();
    let f = &series.fluctuation;
    let normal_max = f.iter().zip(&labels).filter(|(_, l)| !l.is_abnormal()).map(|(v, _)| *v).fold(0.0, f64::max);
    let outlier_min = f.iter().zip(&labels).filter(|(_, l)| l.is_abnormal()).map(|(v, _)| *v).fold(f64::INFINITY, f64::min);
    let grid = alpha_grid(0.0, 5.0, 0.01).unwrap();
    let mut inside = 0;
    let mut ok = abnormal > 0 && normal_max < outlier_min;
    let mut last = usize::MAX;
    for &alpha in &grid {
        let flags = flag_fluctuations(f, alpha);
        let count = flags.iter().filter(|&&x| x).count();
        ok &= count <= last;
        last = count;
        if alpha >= normal_max && alpha < outlier_min {
            inside += 1;
            ok &= evaluate(&flags, &labels).unwrap().metrics.f1 == 1.0;
        }
    }
    ok &= inside > 0;
    check(
        ok,
        format!(
            "{} beats, {abnormal} inverted; gap [{normal_max:.4}, {outlier_min:.4}) holds {inside} grid α, all F1 = 1; flag count non-increasing over 501 α",
            beats.len()
        ),
    )
}

// ---------------------------------------------------------------- timing

fn timing() -> Outcome {
    let args = BenchArgs {
        beat_length: 289,
        repetitions: 300,
        metrics: "fe,bwe,wse2,fusion".into(),
    };
    let rows = match bench(&args, &opts()) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let get = |name: &str| rows.iter().find(|r| r.metric_name == name).expect("row present");
    let staged = get("bwe+wse2+fusion");
    let ratio = staged.ratio_vs_fe.unwrap();
    let fusion = get("fusion").mean_us_per_beat;
    check(
        ratio >= MIN_FE_RATIO && fusion < MAX_FUSION_US,
        format!(
            "beat length 289: FE {:.1} µs, BWE+WSE-II+fusion {:.2} µs, ratio {ratio:.0}× (need ≥ {MIN_FE_RATIO}); fusion {fusion:.4} µs (need < {MAX_FUSION_US})",
            get("fe").mean_us_per_beat,
            staged.mean_us_per_beat
        ),
    )
}

// ------------------------------------------------------------ robustness

fn noise_robustness() -> Outcome {
    let args = RobustnessArgs {
        record: bundled_record(),
        std_devs: vec![ROBUSTNESS_SIGMA],
        metrics: "pe,ae,se,fe,mee2".into(),
    };
    let report = match robustness(&args, &opts()) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let d = &report.rows[0].drift;
    let (pe, ae, se, fe, mee) = (d[0], d[1], d[2], d[3], d[4]);
    let worst_classic = pe.min(ae).min(se);
    check(
        mee < worst_classic && fe < worst_classic,
        format!("σ = {ROBUSTNESS_SIGMA}: relative drift MEE-II {mee:.3}, FE {fe:.3} vs PE {pe:.3}, AE {ae:.3}, SE {se:.3}"),
    )
}

// -------------------------------------------------------------- pruning

fn group_scores(seed: u64) -> Vec<RecordScore> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = MorphConfig::default();
    let mut scores = Vec::new();
    for k in 0..25 {
        let bpm = rng.random_range(60.0..90.0);
        let mut spec = SynthSpec::new(360.0, 10.0, bpm, seed * 1000 + k);
        // minority mode: every beat inverted
        if k >= 20 {
            let n = spec.beat_count();
            spec = spec.with_inverted_beats(0..n);
        }
        let rec = spec.generate().unwrap();
        let mut s = record_mee(&rec, "II", &cfg).unwrap();
        s.record_id = format!("s{seed}_r{k:02}");
        scores.push(s);
    }
    scores
}

fn pruning_coverage() -> Outcome {
    let mut mee_ok = 0;
    let mut random_fail = 0;
    for seed in 0..COVERAGE_SEEDS {
        let scores = group_scores(seed);
        let m = prune_by_mee(&scores, 40, 1).unwrap();
        let ids: Vec<&str> = scores.iter().map(|s| s.record_id.as_str()).collect();
        if m.partitions(&ids) && uncovered_bins(&scores, 40, &m.kept).is_empty() {
            mee_ok += 1;
        }
        let r = prune_random(&ids, m.kept.len(), seed).unwrap();
        if !uncovered_bins(&scores, 40, &r.kept).is_empty() {
            random_fail += 1;
        }
    }
    check(
        mee_ok == COVERAGE_SEEDS && random_fail > 0,
        format!("bimodal groups (20 upright + 5 inverted records): MEE pruning covers every occupied bin in {mee_ok}/{COVERAGE_SEEDS} seeds; random pruning to the same size misses a bin in {random_fail}/{COVERAGE_SEEDS}"),
    )
}

// -------------------------------------------------------------- quality

fn cinc2017(dir: &Path) -> Outcome {
    let reference = match std::fs::read_to_string(dir.join("REFERENCE.csv")) {
        Ok(t) => t,
        Err(e) => return Outcome::Fail(format!("REFERENCE.csv: {e}")),
    };
    let mut fractions = (Vec::new(), Vec::new());
    for line in reference.lines() {
        let Some((id, label)) = line.split_once(',') else { continue };
        let bucket = match label.trim() {
            "~" if fractions.0.len() < 20 => &mut fractions.0,
            "N" if fractions.1.len() < 20 => &mut fractions.1,
            _ => continue,
        };
        let Ok(rec) = load_record(&dir.join(format!("{}.csv", id.trim())), RecordFormat::Csv, Some(300.0)) else {
            continue;
        };
        let lead = rec.leads()[0].name.clone();
        let Ok(ext) = segment(&rec, &lead, &SegmentConfig::default()) else { continue };
        if let Ok(q) = assess_quality(&ext.beats, &MorphConfig::default(), 1, 3.5) {
            bucket.push(q.noisy_fraction);
        }
    }
    let (noise, normal) = fractions;
    if noise.len() < 20 || normal.len() < 20 {
        return Outcome::Fail(format!("only {} Noise / {} Normal records usable", noise.len(), normal.len()));
    }
    let mn = noise.iter().sum::<f64>() / noise.len() as f64;
    let mm = normal.iter().sum::<f64>() / normal.len() as f64;
    check(mn > mm, format!("mean noisy_fraction Noise {mn:.3} vs Normal {mm:.3}"))
}

/// Saturated-amplifier and ramp-with-clipping noise windows.
fn constructed_noise_beats(n: usize, len: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Normal::<f64>::new(0.0, 1.0).unwrap();
    (0..n)
        .map(|k| match k % 3 {
            0 => (0..len).map(|_| g.sample(&mut rng).min(0.3)).collect(),
            1 => (0..len).map(|_| g.sample(&mut rng).max(-0.3)).collect(),
            _ => (0..len)
                .map(|i| (3.0 * i as f64 / len as f64 + 0.3 * g.sample(&mut rng)).min(1.5))
                .collect(),
        })
        .collect()
}

fn quality_separation() -> Outcome {
    if let Some(dir) = std::env::var_os("MEE_CINC2017_DIR") {
        return cinc2017(Path::new(&dir));
    }
    let cfg = MorphConfig::default();
    let mut clean_flagged = 0;
    let mut clean_total = 0;
    let mut noise_hit = 0;
    let mut noise_total = 0;
    for (i, fs) in [250.0, 300.0, 360.0, 500.0].into_iter().enumerate() {
        for seed in 0..5u64 {
            let mut beats = synthetic_beats(1000 + 10 * i as u64 + seed, fs);
            let clean_only = assess_quality(&beats, &cfg, 1, 3.5).unwrap();
            clean_total += beats.len();
            clean_flagged += clean_only.noisy_count();
            let len = beats[0].samples.len();
            let start = beats.len();
            for (j, x) in constructed_noise_beats(6, len, seed + 50 * i as u64).into_iter().enumerate() {
                beats.push(Beat {
                    beat_index: start + j,
                    r_index: 0,
                    samples: x,
                    pre_rr_s: None,
                    post_rr_s: None,
                    label: None,
                });
            }
            let mixed = assess_quality(&beats, &cfg, 1, 3.5).unwrap();
            for q in &mixed.per_beat[..start] {
                if matches!(q.reason, Some(NoiseReason::BaselineExtreme | NoiseReason::Both)) {
                    clean_flagged += 1;
                }
            }
            for q in &mixed.per_beat[start..] {
                noise_total += 1;
                if matches!(q.reason, Some(NoiseReason::BaselineExtreme | NoiseReason::Both)) {
                    noise_hit += 1;
                }
            }
        }
    }
    let detail = format!(
        "MEE_CINC2017_DIR not set, synthetic criterion: baseline_extreme on {noise_hit}/{noise_total} constructed noise beats; clean synthetic beats marked {clean_flagged} times over {clean_total} beats"
    );
    check(noise_hit == noise_total && clean_flagged == 0, detail)
}

// --------------------------------------------------------------- parity

fn parity() -> Outcome {
    let path = bundled_record();
    let table = analyze(
        &AnalyzeArgs {
            record: path.clone(),
            metrics: "mee2".into(),
        },
        &opts(),
    )
    .unwrap();
    let cli: Vec<f64> = table.rows.iter().map(|r| r.values[0].unwrap()).collect();
    let cli_r: Vec<u64> = table.rows.iter().map(|r| r.r_index as u64).collect();

    let csv = std::fs::read_to_string(&path).unwrap();
    let rt = tokio::runtime::Runtime::new().unwrap();
    let served: serde_json::Value = rt.block_on(async {
        let app = mee_service::router(&mee_service::ServiceConfig::default());
        let req = Request::post("/api/records?fs=360")
            .header(header::CONTENT_TYPE, "text/csv")
            .body(Body::from(csv))
            .unwrap();
        let body = app.clone().oneshot(req).await.unwrap().into_body().collect().await.unwrap().to_bytes();
        let up: serde_json::Value = serde_json::from_slice(&body).unwrap();
        let id = up["session_id"].as_str().unwrap().to_string();
        let req = Request::get(format!("/api/sessions/{id}/series?variant=2")).body(Body::empty()).unwrap();
        let body = app.oneshot(req).await.unwrap().into_body().collect().await.unwrap().to_bytes();
        serde_json::from_slice(&body).unwrap()
    });
    let svc: Vec<f64> = served["values"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let svc_r: Vec<u64> = served["r_indices"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    let worst = cli.iter().zip(&svc).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(
        cli.len() == svc.len() && cli_r == svc_r && worst <= PARITY_TOL,
        format!("{} beats on the bundled record, max |Δ MEE-II| = {worst:.1e} (tolerance {PARITY_TOL:e})", cli.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("mitdb_screening", mitdb_screening),
        ("oracle_equivalence", oracle_equivalence),
        ("scale_offset_invariance", affine_invariance),
        ("synthetic_separable_series", separable_series),
        ("timing_order", timing),
        ("noise_robustness_ordering", noise_robustness),
        ("pruning_coverage", pruning_coverage),
        ("quality_separation", quality_separation),
        ("service_cli_parity", parity),
    ];
    let mut failed = 0;
    println!("\nacceptance criteria");
    for (name, f) in criteria {
        match f() {
            Outcome::Pass(d) => println!("PASS        {name}: {d}"),
            Outcome::Substituted(d) => println!("SUBSTITUTED {name}: {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL        {name}: {d}");
            }
        }
    }
    println!("{} criteria, {failed} failed\n", criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
