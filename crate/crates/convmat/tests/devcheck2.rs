//! Temporary oracle-adjudication scratchpad (deleted before release).

use convmat::grid::{frequency_grid, nyquist_edge, GridSpacing};
use convmat::oracle::{compare, simulate, welch_psd, CompareSpec, SimRun, WelchConfig};
use convmat::pll::{analyze, PllConfig, SourceSet};

fn model_grid(cfg: &PllConfig) -> Vec<f64> {
    frequency_grid(1e4, nyquist_edge(cfg.f_dco_hz()), 4096, GridSpacing::Log).unwrap()
}

fn run_scenario(tag: &str, cfg: &PllConfig, sources: SourceSet, averages: usize) {
    let wcfg = WelchConfig { averages, ..WelchConfig::default() };
    let grid = model_grid(cfg);
    let t0 = std::time::Instant::now();
    let model = analyze(cfg, &grid, sources).unwrap();
    let t_model = t0.elapsed();
    let t0 = std::time::Instant::now();
    let run = SimRun::for_welch(cfg.clone(), 0xC0FFEE, sources, &wcfg);
    let series = simulate(&run).unwrap();
    let est = welch_psd(&series, cfg.f_dco_hz(), &wcfg).unwrap();
    let t_sim = t0.elapsed();
    let spec = CompareSpec::default().with_reference_notches(cfg.f_ref_hz);
    let report = compare(&model.pn.freq_hz, &model.pn.total.pn_dbchz, &est, &spec).unwrap();
    println!(
        "{tag}: mean |d| = {:.3} dB, max |d| = {:.3} dB at {:.4e} Hz over {} pts (model {:?}, sim {:?})",
        report.mean_abs_db, report.max_abs_db, report.worst_freq_hz, report.points, t_model, t_sim
    );
    // In-band level check around 100 kHz-1 MHz: average sim PN in that window
    // vs model spot.
    let sim_db = est.ssb_pn_dbchz();
    let mut acc = 0.0;
    let mut cnt = 0;
    for (f, db) in est.freq_hz.iter().zip(&sim_db) {
        if *f >= 1e5 && *f <= 1e6 {
            acc += 10f64.powf(db / 10.0);
            cnt += 1;
        }
    }
    let sim_inband = 10.0 * (acc / cnt as f64).log10();
    println!(
        "{tag}: in-band 0.1-1 MHz: sim {:.3} dB vs model {:.3} dB",
        sim_inband,
        model.pn.spot_total(4e5)
    );
}

#[test]
fn dev_oracle_dsm_cases() {
    // Decorrelation adjudication: which model does the simulation follow?
    for (n, m) in [(18usize, 3usize), (18, 16), (32, 2)] {
        let cfg = PllConfig { n, m, dco_noise_variance: 3.33e-5, ..PllConfig::default() };
        run_scenario(&format!("DSM N{n}M{m}"), &cfg, SourceSet::only_dsm(), 300);
        let nodec = PllConfig { use_decorrelation: false, ..cfg.clone() };
        let grid = model_grid(&nodec);
        let without = analyze(&nodec, &grid, SourceSet::only_dsm()).unwrap();
        println!(
            "DSM N{n}M{m}: model_without in-band @4e5 = {:.3} dB",
            without.pn.spot_total(4e5)
        );
    }
}

#[test]
fn dev_oracle_tdc_dco() {
    let cfg = PllConfig { dco_noise_variance: 3.33e-5, ..PllConfig::default() };
    run_scenario("TDC P18", &cfg, SourceSet::only_reference(), 300);
    let c2 = PllConfig { p: Some(2), ..cfg.clone() };
    run_scenario("TDC P2", &c2, SourceSet::only_reference(), 300);
    run_scenario("DCO P18", &cfg, SourceSet::only_dco(), 300);
    run_scenario("DCO P2", &c2, SourceSet::only_dco(), 300);
}

#[test]
fn dev_oracle_total_and_fractional() {
    let cfg = PllConfig { m: 4, dco_noise_variance: 3.33e-5, ..PllConfig::default() };
    run_scenario("ALL P18 M4", &cfg, SourceSet::all(), 300);

    // Fractional resampling, N=18 M=5 P=4, K_P/K_I = 2.
    let frac = PllConfig {
        n: 18,
        m: 5,
        p: Some(4),
        k_i: Some(0.2),
        use_fractional_resampling: true,
        dco_noise_variance: 3.33e-5,
        ..PllConfig::default()
    };
    let grid = model_grid(&frac);
    let modified = convmat::pll::analyze_fractional(&frac, &grid, SourceSet::only_dsm()).unwrap();
    let simple_cfg = PllConfig { use_fractional_resampling: false, ..frac.clone() };
    let simplified = analyze(&simple_cfg, &grid, SourceSet::only_dsm()).unwrap();
    let wcfg = WelchConfig { averages: 300, ..WelchConfig::default() };
    let run = SimRun::for_welch(frac.clone(), 7, SourceSet::only_dsm(), &wcfg);
    let series = simulate(&run).unwrap();
    let est = welch_psd(&series, frac.f_dco_hz(), &wcfg).unwrap();
    let spec = CompareSpec::default().with_reference_notches(frac.f_ref_hz);
    let rep_mod = compare(&grid, &modified.pn.total.pn_dbchz, &est, &spec).unwrap();
    let rep_simp = compare(&grid, &simplified.pn.total.pn_dbchz, &est, &spec).unwrap();
    println!(
        "FRAC N18M5P4 kpki2: modified vs sim mean {:.3} max {:.3} | simplified vs sim mean {:.3} max {:.3}",
        rep_mod.mean_abs_db, rep_mod.max_abs_db, rep_simp.mean_abs_db, rep_simp.max_abs_db
    );
    for f in [2e4, 1e5, 5e5, 2e6] {
        println!(
            "FRAC: @{:.0e}: simplified {:.2}, modified {:.2}, delta {:+.3}",
            f,
            simplified.pn.spot_total(f),
            modified.pn.spot_total(f),
            modified.pn.spot_total(f) - simplified.pn.spot_total(f)
        );
    }
}

#[test]
fn dev_dsm_only_delta_scan() {
    // Fine out-of-band scan of the DSM-only P2-P18 delta to locate a stable
    // plateau-delta region.
    let cfg = PllConfig { m: 4, ..PllConfig::default() };
    let grid = model_grid(&cfg);
    let d18 = analyze(&cfg, &grid, SourceSet::only_dsm()).unwrap();
    let c2 = PllConfig { p: Some(2), ..cfg.clone() };
    let d2 = analyze(&c2, &grid, SourceSet::only_dsm()).unwrap();
    let mut f = 1.2e7;
    while f < 3.1e8 {
        println!(
            "DSMdelta @{:>9.3e}: P18 {:7.2}  P2 {:7.2}  delta {:+.3}",
            f,
            d18.pn.spot_total(f),
            d2.pn.spot_total(f),
            d2.pn.spot_total(f) - d18.pn.spot_total(f)
        );
        f *= 1.18;
    }
}
