//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured quantity against its pinned tolerance. Run with
//! `cargo test --test acceptance -- --nocapture` to see the lines.

use hmlab_core::corona::{build_corona, StoppingConfig};
use hmlab_core::generate::{circle_boundary_measure, segment_measure, segment_plus_cluster_measure};
use hmlab_core::geom::dist;
use hmlab_core::harmonic::{
    ainfty_scan, builtin_domain, change_of_pole, disk, exit_angles_unit, green_estimate,
    sample_exits, tabulate, BoundaryPartition, BoundaryPiece, SlitSide,
};
use hmlab_core::lattice::{audit_lattice, build_lattice, whitney_decompose, BallRegion};
use hmlab_core::measure::{Ball, PointMeasure};
use hmlab_core::riesz::{
    maximal_density, maximal_riesz, operator_norm_l2, riesz_kernel, truncated_riesz, Atoms,
    RieszConfig,
};
use hmlab_core::rng::substream;
use hmlab_core::stats::{ks_critical, ks_statistic_uniform};
use rand::Rng;

const N_WALKS: u64 = 100_000;
const SHELL: f64 = 1e-4;

fn pass(criterion: u32, name: &str, detail: String) {
    println!("ACCEPTANCE {criterion:>2} {name}: PASS ({detail})");
}

#[test]
fn criterion_01_wos_disk_uniformity() {
    let dom = builtin_domain("disk").unwrap();
    let started = std::time::Instant::now();
    let sample = sample_exits(&dom, &[0.0, 0.0], N_WALKS, SHELL, 7).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let rep = tabulate(&sample, &BoundaryPartition::equal_arcs(16));
    let mut worst_z: f64 = 0.0;
    for i in 0..16 {
        let z = (rep.probs[i] - 1.0 / 16.0).abs() / rep.std_errs[i];
        worst_z = worst_z.max(z);
        assert!(
            z <= 3.0,
            "arc {i}: frequency {} deviates {z:.2} sigma from 1/16",
            rep.probs[i]
        );
    }
    assert!(elapsed < 30.0, "sampling took {elapsed:.1}s >= 30s");
    // KS against the uniform law at the 1% level, as a second uniformity read
    let ks = ks_statistic_uniform(exit_angles_unit(&sample));
    let crit = ks_critical(0.01, sample.completed() as usize);
    assert!(ks < crit, "KS {ks} >= {crit}");
    pass(
        1,
        "wos disk uniformity",
        format!("worst arc z = {worst_z:.2} <= 3, KS {ks:.5} < {crit:.5}, {elapsed:.1}s < 30s"),
    );
}

#[test]
fn criterion_02_poisson_kernel_reproduction() {
    let dom = builtin_domain("disk").unwrap();
    let pole = [0.5, 0.0];
    let sample = sample_exits(&dom, &pole, N_WALKS, SHELL, 11).unwrap();
    let rep = tabulate(&sample, &BoundaryPartition::equal_arcs(16));
    let width = 2.0 * std::f64::consts::PI / 16.0;
    let mut tv = 0.0;
    for i in 0..16 {
        let analytic = disk::poisson_arc_mass(pole, i as f64 * width, (i + 1) as f64 * width);
        tv += (rep.probs[i] - analytic).abs();
    }
    tv /= 2.0;
    assert!(tv < 0.02, "total variation {tv} >= 0.02");
    pass(2, "poisson kernel reproduction", format!("TV = {tv:.5} < 0.02"));
}

#[test]
fn criterion_03_green_identity() {
    let dom = builtin_domain("disk").unwrap();
    let cfg = RieszConfig::standard(1);
    let x = [0.3, 0.0];
    let y = [-0.2, 0.1];
    let est = green_estimate(&dom, &cfg, &x, &y, N_WALKS, SHELL, 13).unwrap();
    let analytic = disk::green(x, y);
    let rel = (est.value - analytic).abs() / analytic;
    assert!(rel < 0.05, "interior pair relative error {rel} >= 5%");

    let ext = green_estimate(&dom, &cfg, &[1.5, 0.3], &y, N_WALKS, SHELL, 17).unwrap();
    let z_ext = ext.value.abs() / ext.std_err;
    assert!(z_ext < 3.0, "exterior estimate {} at {z_ext:.2} sigma from 0", ext.value);

    let ab = green_estimate(&dom, &cfg, &x, &y, N_WALKS, SHELL, 19).unwrap();
    let ba = green_estimate(&dom, &cfg, &y, &x, N_WALKS, SHELL, 23).unwrap();
    let diff = (ab.value - ba.value).abs();
    let budget = 3.0 * (ab.std_err + ba.std_err);
    assert!(diff < budget, "symmetry gap {diff} >= {budget}");
    pass(
        3,
        "green identity",
        format!(
            "rel err {rel:.4} < 0.05, exterior z {z_ext:.2} < 3, symmetry {diff:.2e} < {budget:.2e}"
        ),
    );
}

#[test]
fn criterion_04_change_of_pole() {
    let dom = builtin_domain("disk").unwrap();
    let b = Ball::new(vec![1.0, 0.0], 0.6);
    let half = 2.0 * (0.3f64).asin();
    let pieces = BoundaryPartition {
        pieces: (0..8)
            .map(|i| BoundaryPiece::Arc {
                start: -half + i as f64 * half / 4.0,
                width: half / 4.0,
            })
            .collect(),
        covers_boundary: false,
    };
    let primary = change_of_pole(
        &dom,
        &b,
        &pieces,
        &[0.0, 0.0],
        &[-0.5, 0.0],
        10.0,
        N_WALKS,
        SHELL,
        31,
    )
    .unwrap();
    assert!(
        primary.max_quotient <= 3.0,
        "disk quotient {} > 3",
        primary.max_quotient
    );

    // slit-disk negative control: ball straddling the slit, poles on
    // opposite sides (reported, informational)
    let slit = builtin_domain("slit_disk").unwrap();
    let bs = Ball::new(vec![0.5, 0.0], 0.3);
    let mut slit_pieces = Vec::new();
    for side in [SlitSide::Above, SlitSide::Below] {
        for i in 0..4 {
            slit_pieces.push(BoundaryPiece::SlitPiece {
                side,
                x_min: 0.2 + 0.15 * i as f64,
                x_max: 0.35 + 0.15 * i as f64,
            });
        }
    }
    let control = change_of_pole(
        &slit,
        &bs,
        &BoundaryPartition { pieces: slit_pieces, covers_boundary: false },
        &[0.5, 0.3],
        &[0.5, -0.3],
        10.0,
        N_WALKS,
        SHELL,
        31,
    )
    .unwrap();
    assert!(
        control.max_quotient >= 2.0 * primary.max_quotient,
        "control {} < 2x primary {}",
        control.max_quotient,
        primary.max_quotient
    );
    pass(
        4,
        "change of pole",
        format!(
            "disk quotient {:.3} <= 3; slit control {:.1} >= 2x disk",
            primary.max_quotient, control.max_quotient
        ),
    );
}

#[test]
fn criterion_05_lattice_invariants() {
    let mu = segment_measure(1000);
    let started = std::time::Instant::now();
    let lat = build_lattice(&mu, 128.0, 256.0, 0, 6).unwrap();
    let rows = audit_lattice(&lat);
    let elapsed = started.elapsed().as_secs_f64();
    for r in &rows {
        assert!(r.pass, "{} failed at generation {}: {}", r.check, r.generation, r.detail);
    }
    assert!(elapsed < 10.0, "lattice build + audit took {elapsed:.1}s >= 10s");
    pass(
        5,
        "lattice invariants",
        format!(
            "{} checks exact over {} generations, {elapsed:.2}s < 10s",
            rows.len(),
            lat.num_generations()
        ),
    );
}

#[test]
fn criterion_06_whitney_claim() {
    let mu = segment_measure(1000);
    let lat = build_lattice(&mu, 128.0, 256.0, 0, 6).unwrap();
    let region = BallRegion(Ball::new(vec![0.5, 0.0], 0.3));
    let rep = whitney_decompose(&lat, &region, 0.005).unwrap();
    assert!(rep.inside_ok, "(i) failed: some 10^4 B(Q_i) leaves the open set");
    assert!(rep.t0_witness.is_some(), "(ii) vacuous on a bounded region");
    assert!(rep.generation_gap_ok, "(iii') failed: overlapping cells differ by > 1 generation");
    assert!(rep.overlap_max >= 1, "(iii) no overlap statistic");
    assert!(
        rep.doubling_mass_fraction >= 0.5,
        "(iv) doubling subfamily carries {} < 1/2",
        rep.doubling_mass_fraction
    );
    // the cover is a disjoint family catching every in-set atom
    let mut seen = std::collections::BTreeSet::new();
    for &id in &rep.cells {
        for &m in &lat.cell(id).members {
            assert!(seen.insert(m), "cover overlaps at atom {m}");
        }
    }
    for p in 0..mu.len() {
        if dist(mu.point(p), &[0.5, 0.0]) < 0.3 {
            assert!(seen.contains(&(p as u32)), "in-set atom {p} uncovered");
        }
    }
    pass(
        6,
        "whitney claim",
        format!(
            "{} cells, T0 = {:.1}, overlap <= {}, doubling fraction {:.3} >= 1/2",
            rep.cells.len(),
            rep.t0_witness.unwrap(),
            rep.overlap_max,
            rep.doubling_mass_fraction
        ),
    );
}

#[test]
fn criterion_07_ainfty_knapsack_exactness() {
    let started = std::time::Instant::now();
    let mut rng = substream(41, 0);
    let mut instances: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for size in [3usize, 7, 11, 15, 15, 15] {
        let mu: Vec<f64> = (0..size).map(|_| rng.gen::<f64>() + 0.01).collect();
        let om: Vec<f64> = (0..size).map(|_| rng.gen::<f64>() + 0.01).collect();
        instances.push((mu, om));
    }
    // crafted instance where a subset meets the budget exactly
    instances.push((vec![0.25; 8], (0..8).map(|i| 0.1 + 0.05 * i as f64).collect()));

    let mut checked = 0u64;
    for (mu, om) in &instances {
        let n = mu.len();
        let mu_total: f64 = mu.iter().sum();
        let om_total: f64 = om.iter().sum();
        for eps in [0.2, 0.5, 0.8] {
            let frac = ainfty_scan(mu, om, eps).eps_prime;
            let budget = eps * mu_total;
            let mut best = 0.0f64;
            let mut budget_hit = false;
            for mask in 0u32..(1u32 << n) {
                let mut ms = 0.0;
                let mut os = 0.0;
                for i in 0..n {
                    if mask & (1 << i) != 0 {
                        ms += mu[i];
                        os += om[i];
                    }
                }
                if ms <= budget + 1e-12 {
                    best = best.max(os / om_total);
                    if (ms - budget).abs() < 1e-12 {
                        budget_hit = true;
                    }
                }
                checked += 1;
            }
            assert!(frac >= best - 1e-12, "fractional {frac} < set optimum {best}");
            if budget_hit {
                assert!(
                    (frac - best).abs() < 1e-12,
                    "exact-budget instance: fractional {frac} != set {best}"
                );
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "exhaustive oracle took {elapsed:.1}s >= 5s");
    pass(
        7,
        "ainfty knapsack exactness",
        format!("{checked} subsets enumerated across {} instances, {elapsed:.2}s < 5s", instances.len()),
    );
}

#[test]
fn criterion_08_maximal_operator_exactness() {
    let cfg = RieszConfig::standard(1);
    let mut worst_gap: f64 = 0.0;
    for inst in 0..20 {
        let mut rng = substream(43, inst);
        let pts: Vec<Vec<f64>> =
            (0..10).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
        let w: Vec<f64> = (0..10).map(|_| rng.gen::<f64>() + 0.01).collect();
        let mu = PointMeasure::from_points(1, &pts, w).unwrap();
        let atoms = Atoms::from_measure(&mu);
        let x = [rng.gen::<f64>(), rng.gen::<f64>()];
        let dmax = (0..mu.len()).map(|i| dist(&x, mu.point(i))).fold(0.0f64, f64::max);

        // dense-grid oracles with 10^6 points
        const GRID: usize = 1_000_000;
        let exact_r = maximal_riesz(&cfg, atoms, None, &x, 0.0);
        let mut grid_r = 0.0f64;
        let lo = 1e-7;
        for g in 0..GRID {
            let eps = lo + (1.05 * dmax - lo) * (g as f64 + 0.5) / GRID as f64;
            let v = truncated_riesz(&cfg, atoms, None, &x, eps);
            grid_r = grid_r.max((v[0] * v[0] + v[1] * v[1]).sqrt());
        }
        assert!(exact_r >= grid_r - 1e-12, "exact below grid oracle");
        let gap_r = (exact_r - grid_r) / exact_r.max(1e-300);
        assert!(gap_r < 1e-4, "riesz gap {gap_r} beyond grid resolution");

        let exact_d = maximal_density(&cfg, atoms, &x, 0.01).value;
        let mut grid_d = 0.0f64;
        for g in 0..GRID {
            let r = 0.01 + (1.05 * dmax - 0.01) * (g as f64 + 0.5) / GRID as f64;
            grid_d = grid_d.max(mu.mass(&Ball::new(x.to_vec(), r)) / r);
        }
        assert!(exact_d >= grid_d - 1e-12, "density below grid oracle");
        let gap_d = (exact_d - grid_d) / exact_d.max(1e-300);
        assert!(gap_d < 1e-4, "density gap {gap_d} beyond grid resolution");
        worst_gap = worst_gap.max(gap_r).max(gap_d);
    }
    pass(
        8,
        "maximal operator exactness",
        format!("20 instances vs 10^6-point grids, worst relative gap {worst_gap:.2e}"),
    );
}

#[test]
fn criterion_09_riesz_l2_boundedness() {
    let cfg = RieszConfig::standard(1);
    let mut norms = Vec::new();
    for &n in &[100usize, 400, 1600] {
        let mu = segment_measure(n);
        let subset: Vec<usize> = (0..n).collect();
        let r = operator_norm_l2(&cfg, &mu, &subset, 1.0 / n as f64);
        norms.push(r.norm);
    }

    // dense SVD oracle at N = 100, through an independently assembled matrix
    let n = 100;
    let mu = segment_measure(n);
    let eps = 1.0 / n as f64;
    let mut a = nalgebra::DMatrix::<f64>::zeros(2 * n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let diff = [
                mu.point(i)[0] - mu.point(j)[0],
                mu.point(i)[1] - mu.point(j)[1],
            ];
            let d = (diff[0] * diff[0] + diff[1] * diff[1]).sqrt();
            if d > eps {
                let k = riesz_kernel(&cfg, &diff).unwrap();
                let s = (mu.weight(i) * mu.weight(j)).sqrt();
                a[(2 * i, j)] = k[0] * s;
                a[(2 * i + 1, j)] = k[1] * s;
            }
        }
    }
    let svd_top = a
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    let oracle_rel = (norms[0] - svd_top).abs() / svd_top;
    assert!(oracle_rel < 1e-3, "power iteration vs SVD gap {oracle_rel}");

    for w in norms.windows(2) {
        let ratio = (w[1] / w[0]).max(w[0] / w[1]);
        assert!(ratio <= 1.10, "successive norms {w:?} differ by {ratio:.3} > 10%");
    }
    pass(
        9,
        "riesz l2 boundedness",
        format!(
            "norms {:.4}/{:.4}/{:.4} within 10%, SVD oracle gap {oracle_rel:.1e}",
            norms[0], norms[1], norms[2]
        ),
    );
}

#[test]
fn criterion_10_corona_packing() {
    let mu = segment_plus_cluster_measure(600, 120, 0.3, 1e-4, 0.5);
    let scfg = StoppingConfig { tau: 0.35, ..StoppingConfig::default() };
    let mut ratios = Vec::new();
    let mut density_gain_reported = 0usize;
    for k_max in [8i64, 9] {
        let lat = build_lattice(&mu, 128.0, 8.0, 0, k_max).unwrap();
        let tree = build_corona(&lat, (0, 0), None, &scfg, 4096).unwrap();
        assert!(tree.packing_ratio.is_finite() && tree.packing_ratio > 0.0);
        density_gain_reported += tree
            .nodes
            .iter()
            .filter(|n| {
                n.info.label == hmlab_core::corona::CellLabel::Ugly && !n.depth_exhausted
            })
            .count();
        ratios.push(tree.packing_ratio);
    }
    let drift = (ratios[1] / ratios[0]).max(ratios[0] / ratios[1]);
    assert!(drift < 2.0, "packing ratio drift {drift} >= 2 across deepening");
    assert!(density_gain_reported > 0, "no ugly-node density-gain checks were reported");
    pass(
        10,
        "corona packing",
        format!(
            "ratios {:.4} -> {:.4}, drift {drift:.3} < 2, {density_gain_reported} density gain rows at eta = {}",
            ratios[0], ratios[1], scfg.eta
        ),
    );
}

#[test]
fn criterion_11_key_lemma_stability() {
    // disk full pipeline at N and 2N walks through the experiment runner
    let cfg = hmlab_cli::config::ExperimentConfig::from_str_validated(&format!(
        "experiment = \"key-lemma\"\nseed = 7\nwalks = {N_WALKS}\n"
    ))
    .unwrap();
    let bundle = hmlab_cli::experiments::run(&cfg).unwrap();
    let stability = bundle.summary["stability_factor"]
        .as_f64()
        .expect("finite stability factor");
    let vac0 = bundle.summary["runs"][0]["key_vacuous"].as_bool().unwrap();
    let vac1 = bundle.summary["runs"][1]["key_vacuous"].as_bool().unwrap();
    assert!(!vac0 && !vac1, "probe family must be nonempty");
    assert!(stability < 2.0, "worst normalized transform changed {stability}x >= 2x");
    let w0 = bundle.summary["runs"][0]["key_worst_truncated"].as_f64().unwrap();
    let w1 = bundle.summary["runs"][1]["key_worst_truncated"].as_f64().unwrap();
    pass(
        11,
        "key lemma stability",
        format!("worst normalized transform {w0:.4} -> {w1:.4} (x{stability:.3} < 2) at 1e5 -> 2e5 walks"),
    );
}

#[test]
fn criterion_12_determinism() {
    let dir = std::env::temp_dir().join(format!("hmlab-acc12-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    for body in [
        "experiment = \"wos-validate\"\nseed = 9\nwalks = 20000\n",
        "experiment = \"bad-cubes\"\nseed = 9\nwalks = 20000\n",
    ] {
        let cfg = hmlab_cli::config::ExperimentConfig::from_str_validated(body).unwrap();
        let name = cfg.experiment.clone();
        let mut outputs: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
        for run in 0..2 {
            let out = dir.join(format!("{name}-{run}"));
            let bundle = hmlab_cli::experiments::run(&cfg).unwrap();
            let files = bundle.write(&out).unwrap();
            let mut contents: Vec<(String, Vec<u8>)> = files
                .iter()
                .map(|p| {
                    (
                        p.file_name().unwrap().to_string_lossy().into_owned(),
                        std::fs::read(p).unwrap(),
                    )
                })
                .collect();
            contents.sort();
            outputs.push(contents);
        }
        assert_eq!(outputs[0], outputs[1], "{name}: reruns are not byte-identical");
    }
    let _ = std::fs::remove_dir_all(&dir);
    pass(12, "determinism", "wos-validate and bad-cubes reruns byte-identical".into());
}
