//! Acceptance suite. One PASS/FAIL line per criterion, then a count of
//! failures. With `ACCEPTANCE_STRICT=1` any failure makes the process exit
//! non-zero. Run with `cargo test --release --test acceptance`.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use spin_billiards::ensemble::{run_ensemble, run_spectrum_ensemble, EnsembleConfig, ShapeSpec};
use spin_billiards::evolution::{
    diagonalize, evolve_spectral, evolve_stroboscopic_with, initial_state, PropagationPlan,
};
use spin_billiards::geometry::{build_custom, build_rectangle, SiteCoord};
use spin_billiards::hamiltonian::{build_hamiltonian, NoiseModel};
use spin_billiards::observables::{local_maxima, peak_census, revival_contrast, revival_peaks, Grid, TimeSeries};
use spin_billiards::spectral_stats::{reference_pdf, Reference};

type Outcome = Result<(bool, String), String>;

const RECT: ShapeSpec = ShapeSpec::Rectangle { lx: 31, ly: 15 };
const STADIUM: ShapeSpec = ShapeSpec::QuarterStadium { a: 17, r: 15 };

fn config(shape: ShapeSpec, n_realizations: usize, p_defect: f64, epsilon_max: f64) -> EnsembleConfig {
    EnsembleConfig {
        shape,
        evolution: Default::default(),
        spectrum: Default::default(),
        n_realizations,
        p_defect,
        epsilon_max,
        base_seed: 1,
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn spectrum_oracle() -> Outcome {
    let start = Instant::now();
    let g = build_rectangle(30, 20).map_err(err)?;
    let sd = diagonalize(&build_hamiltonian(&g, 1.0).map_err(err)?).map_err(err)?;
    let elapsed = start.elapsed();
    let mut exact: Vec<f64> = (1..=30)
        .flat_map(|p| {
            (1..=20).map(move |q| 4.0 * ((p as f64 * PI / 31.0).cos() + (q as f64 * PI / 21.0).cos()))
        })
        .collect();
    exact.sort_by(f64::total_cmp);
    let worst = sd
        .eigenvalues()
        .iter()
        .zip(&exact)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok((
        worst < 1e-10 && elapsed < Duration::from_secs(10),
        format!("max |Δ| = {worst:.2e} (< 1e-10), {:.2} s (< 10 s)", elapsed.as_secs_f64()),
    ))
}

fn swap_time() -> Outcome {
    let g = build_custom(&[vec![true, true]]).map_err(err)?;
    let sd = diagonalize(&build_hamiltonian(&g, 1.0).map_err(err)?).map_err(err)?;
    let psi0 = initial_state(&g, SiteCoord::ORIGIN).map_err(err)?;
    let psi = evolve_spectral(&sd, &psi0, PI / 4.0).map_err(err)?;
    let p1 = psi.amplitudes()[1].norm_sqr();
    Ok((p1 > 1.0 - 1e-10, format!("|ψ₁(π/4)|² = 1 - {:.2e}", 1.0 - p1)))
}

fn unitarity() -> Outcome {
    let g = RECT.build().map_err(err)?;
    let h = build_hamiltonian(&g, 1.0).map_err(err)?;
    let sd = diagonalize(&h).map_err(err)?;
    let psi0 = initial_state(&g, SiteCoord::ORIGIN).map_err(err)?;
    let dt = PI / 4.0;
    let energy = |a: &[Complex64]| h.expectation(a);

    let noisy = PropagationPlan {
        dt,
        n_steps: 10_000,
        record_stride: 1,
        noise: Some(NoiseModel::new(1e-5, 7, &g).map_err(err)?),
    };
    let mut norm_drift: f64 = 0.0;
    evolve_stroboscopic_with(&sd, &noisy, &psi0, |_, _, psi| {
        norm_drift = norm_drift.max((psi.norm_sqr() - 1.0).abs());
    })
    .map_err(err)?;

    let clean = PropagationPlan { noise: None, ..noisy };
    let e0 = energy(psi0.amplitudes());
    let mut energy_drift: f64 = 0.0;
    evolve_stroboscopic_with(&sd, &clean, &psi0, |_, _, psi| {
        energy_drift = energy_drift.max((energy(psi.amplitudes()) - e0).abs());
    })
    .map_err(err)?;
    Ok((
        norm_drift < 1e-8 && energy_drift < 1e-8,
        format!("norm drift {norm_drift:.2e} (ε = 1e-5), energy drift {energy_drift:.2e} (ε = 0), both < 1e-8"),
    ))
}

fn ks_of(cfg: &EnsembleConfig) -> Result<(f64, f64), String> {
    let (_, levels) = run_spectrum_ensemble(cfg, None).map_err(err)?;
    let levels = levels.ok_or("no level statistics")?;
    let get = |r: Reference| levels.ks.iter().find(|(k, _)| *k == r).map(|(_, d)| *d).unwrap();
    Ok((get(Reference::Poisson), get(Reference::SemiPoisson)))
}

fn lss_clean() -> Outcome {
    let start = Instant::now();
    let (rp, rsp) = ks_of(&config(RECT, 1, 0.0, 0.0))?;
    let (sp, ssp) = ks_of(&config(STADIUM, 1, 0.0, 0.0))?;
    let elapsed = start.elapsed();
    Ok((
        rp < rsp && ssp < sp && elapsed < Duration::from_secs(60),
        format!(
            "rectangle KS(p) {rp:.3} < KS(sp) {rsp:.3}; stadium KS(sp) {ssp:.3} < KS(p) {sp:.3}; {:.1} s",
            elapsed.as_secs_f64()
        ),
    ))
}

fn lss_crossover() -> Outcome {
    let start = Instant::now();
    let (p, sp) = ks_of(&config(RECT, 10, 5e-2, 0.0))?;
    let elapsed = start.elapsed();
    Ok((
        sp < p && elapsed < Duration::from_secs(300),
        format!("defected rectangle KS(sp) {sp:.3} < KS(p) {p:.3}; {:.1} s", elapsed.as_secs_f64()),
    ))
}

fn revivals_and_census() -> Result<[(bool, String); 2], String> {
    let rect = run_ensemble(&config(RECT, 1, 0.0, 0.0), None).map_err(err)?;
    let stad = run_ensemble(&config(STADIUM, 1, 0.0, 0.0), None).map_err(err)?;
    let tl = rect.grid.times.t_l;

    let series = |r: &spin_billiards::ensemble::EnsembleResult| {
        TimeSeries::new(r.times.clone(), r.cgf_coherent.mean.clone()).map_err(err)
    };
    let c_rect = revival_contrast(&series(&rect)?, tl, 10, 0.25).map_err(err)?;
    let c_stad = revival_contrast(&series(&stad)?, stad.grid.times.t_l, 10, 0.25).map_err(err)?;
    let maxima = local_maxima(&rect.acf);
    let missing: Vec<usize> = (1..=5)
        .filter(|&k| {
            !maxima
                .iter()
                .any(|&m| (rect.acf_lags[m] - k as f64 * tl).abs() <= 0.25 * tl)
        })
        .collect();
    let revival = (
        c_rect > c_stad && missing.is_empty(),
        format!(
            "contrast rectangle {c_rect:.3} > stadium {c_stad:.3}; ACF maxima near k·T_L missing for k = {missing:?}"
        ),
    );

    let grid = |r: &spin_billiards::ensemble::EnsembleResult| Grid {
        lx: r.bounding_box.0,
        ly: r.bounding_box.1,
        values: r.momentum.mean.clone(),
    };
    let n_rect = peak_census(&grid(&rect), 0.25).map_err(err)?;
    let n_stad = peak_census(&grid(&stad), 0.25).map_err(err)?;
    let census = (n_rect < n_stad, format!("census at 0.25: rectangle {n_rect} < stadium {n_stad}"));
    Ok([revival, census])
}

fn noise_robustness() -> Outcome {
    let peaks = |shape| -> Result<Vec<f64>, String> {
        let res = run_ensemble(&config(shape, 10, 5e-3, 1e-5), None).map_err(err)?;
        let acf = TimeSeries::new(res.acf_lags.clone(), res.acf.clone()).map_err(err)?;
        revival_peaks(&acf, res.grid.times.t_l, 3, 0.25).map_err(err)
    };
    let r = peaks(RECT)?;
    let s = peaks(STADIUM)?;
    let ok = r.iter().zip(&s).all(|(a, b)| a > b);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ");
    Ok((ok, format!("ACF peaks k = 1..3: rectangle [{}] vs stadium [{}]", fmt(&r), fmt(&s))))
}

fn quadrature() -> Outcome {
    // composite Simpson on [0, 60], 600 000 panels
    let n = 600_000;
    let h = 60.0 / n as f64;
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for r in Reference::ALL {
        let (mut mass, mut mean) = (0.0, 0.0);
        for k in 0..=n {
            let s = k as f64 * h;
            let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            let p = reference_pdf(r, s).map_err(err)?;
            mass += w * p;
            mean += w * s * p;
        }
        mass *= h / 3.0;
        mean *= h / 3.0;
        worst = worst.max((mass - 1.0).abs()).max((mean - 1.0).abs());
        detail.push(format!("{} mass-1 {:.1e} mean-1 {:.1e}", r.name(), mass - 1.0, mean - 1.0));
    }
    Ok((worst < 1e-6, detail.join("; ")))
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_spin-billiards");
    let tmp = tempfile::tempdir().map_err(err)?;
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "n_realizations = 4\nt_final_in_tl = 3\nbase_seed = 1\n").map_err(err)?;
    let run = |name: &str, workers: &str| -> Result<std::path::PathBuf, String> {
        let out = tmp.path().join(name);
        let status = Command::new(bin)
            .args(["ensemble", "--config"])
            .arg(&cfg)
            .arg("--output-dir")
            .arg(&out)
            .args(["--workers", workers])
            .status()
            .map_err(err)?;
        if !status.success() {
            return Err(format!("ensemble exited with {status}"));
        }
        Ok(out)
    };
    let a = run("a", "1")?;
    let b = run("b", "1")?;
    let c = run("c", "4")?;
    let files = listing(&a)?;
    let mut differing = Vec::new();
    for f in &files {
        let x = std::fs::read(a.join(f)).map_err(err)?;
        for other in [&b, &c] {
            if std::fs::read(other.join(f)).ok().as_ref() != Some(&x) {
                differing.push(f.clone());
            }
        }
    }
    let same_listing = listing(&b)? == files && listing(&c)? == files;
    Ok((
        same_listing && differing.is_empty() && files.iter().any(|f| f.ends_with(".csv")),
        format!("{} files compared across 2 runs x workers {{1, 4}}; differing: {differing:?}", files.len()),
    ))
}

fn listing(dir: &Path) -> Result<Vec<String>, String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .map_err(err)?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()).map_err(err))
        .collect::<Result<_, _>>()?;
    v.sort();
    Ok(v)
}

fn main() {
    let mut failures = 0;
    let mut report = |name: &str, outcome: Outcome| {
        let (ok, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        if !ok {
            failures += 1;
        }
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    };

    report("rectangle spectrum oracle", spectrum_oracle());
    report("swap time", swap_time());
    report("unitarity", unitarity());
    report("LSS ordering, clean billiards", lss_clean());
    report("LSS crossover with defects", lss_crossover());
    match revivals_and_census() {
        Ok([revival, census]) => {
            report("revival contrast", Ok(revival));
            report("noise robustness", noise_robustness());
            report("momentum census", Ok(census));
        }
        Err(e) => {
            report("revival contrast", Err(e.clone()));
            report("noise robustness", noise_robustness());
            report("momentum census", Err(e));
        }
    }
    report("reference quadrature", quadrature());
    report("determinism", determinism());

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        if std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
            std::process::exit(1);
        }
        return;
    }
    println!("all acceptance criteria passed");
}
