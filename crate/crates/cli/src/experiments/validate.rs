//! Harmonic-measure validation experiments: exit-law checks against analytic
//! references, pole comparisons, the Bourgain lower bound, and the boundary
//! Harnack oscillation.

use super::{default_pole, domain_of, jnum, stochastic, ExperimentError};
use crate::config::ExperimentConfig;
use crate::report::{csv_table, fmt, ReportBundle};
use hmlab_core::harmonic::{
    boundary_harnack_check, bourgain_check, builtin_domain, change_of_pole, corkscrew_point,
    disk, exit_angles_unit, exit_distribution_csv, green_estimate, green_omega_relation,
    harmonic_measure, rho, sample_exits, tabulate, BoundaryPartition, BoundaryPiece,
    HarmonicFnSpec, SlitSide,
};
use hmlab_core::measure::Ball;
use hmlab_core::riesz::RieszConfig;
use hmlab_core::rng::splitmix64;
use hmlab_core::stats::{ks_critical, ks_statistic_uniform};

pub fn wos_validate(cfg: &ExperimentConfig) -> Result<ReportBundle, ExperimentError> {
    let dom = domain_of(cfg, "disk")?;
    let n = cfg.walks();
    let shell = cfg.shell_eps();
    let k = cfg.pieces.unwrap_or(16);
    let arcs = BoundaryPartition::equal_arcs(k);
    let is_disk = dom.name == "disk";

    // uniformity run from the (configured or central) pole
    let pole = cfg.pole.clone().unwrap_or_else(|| default_pole(&dom));
    let sample = sample_exits(&dom, &pole, n, shell, splitmix64(cfg.seed ^ 0x105))?;
    let rep = tabulate(&sample, &arcs);
    let ks = ks_statistic_uniform(exit_angles_unit(&sample));
    let ks_crit = ks_critical(0.01, sample.completed() as usize);

    let width = 2.0 * std::f64::consts::PI / k as f64;
    let mut rows = Vec::new();
    let mut max_z: f64 = 0.0;
    for i in 0..k {
        let expected = 1.0 / k as f64;
        let z = if rep.std_errs[i] > 0.0 {
            (rep.probs[i] - expected).abs() / rep.std_errs[i]
        } else {
            0.0
        };
        if is_disk && pole.iter().all(|&c| c == 0.0) {
            max_z = max_z.max(z);
        }
        rows.push(vec![
            fmt(i as f64),
            fmt(i as f64 * width),
            fmt(width),
            fmt(rep.counts[i] as f64),
            fmt(rep.probs[i]),
            fmt(rep.std_errs[i]),
            fmt(expected),
            fmt(z),
        ]);
    }

    let mut summary = serde_json::json!({
        "domain": dom.name,
        "pole": pole,
        "walks": n,
        "seed": cfg.seed,
        "shell_eps": shell,
        "pieces": k,
        "discard_fraction": jnum(sample.discard_fraction()),
        "ks_statistic": jnum(ks),
        "ks_critical_1pct": jnum(ks_crit),
        "ks_pass": ks < ks_crit,
        "max_arc_z_score": jnum(max_z),
    });

    let mut bundle = ReportBundle::new("wos-validate", serde_json::Value::Null);
    bundle.add_csv(
        "arcs",
        csv_table(
            &["arc", "start", "width", "count", "prob", "std_err", "uniform", "z"],
            &rows,
        ),
    );
    bundle.csvs.push(("exits".to_string(), exit_distribution_csv(&sample, &arcs)));

    // Poisson-kernel reproduction from an off-center pole (disk only)
    if is_disk {
        let off = [0.5, 0.0];
        let rep2 = harmonic_measure(&dom, &off, &arcs, n, shell, splitmix64(cfg.seed ^ 0x106))?;
        let mut tv = 0.0;
        let mut rows2 = Vec::new();
        for i in 0..k {
            let analytic =
                disk::poisson_arc_mass(off, i as f64 * width, (i + 1) as f64 * width);
            tv += (rep2.probs[i] - analytic).abs();
            rows2.push(vec![
                fmt(i as f64),
                fmt(rep2.counts[i] as f64),
                fmt(rep2.probs[i]),
                fmt(rep2.std_errs[i]),
                fmt(analytic),
            ]);
        }
        tv /= 2.0;
        summary["poisson_pole"] = serde_json::json!(off.to_vec());
        summary["poisson_tv_distance"] = jnum(tv);
        bundle.add_csv(
            "poisson-arcs",
            csv_table(&["arc", "count", "prob", "std_err", "analytic"], &rows2),
        );
    }

    bundle.summary = summary;
    Ok(bundle)
}

pub fn green_check(cfg: &ExperimentConfig) -> Result<ReportBundle, ExperimentError> {
    let dom = domain_of(cfg, "disk")?;
    let rcfg = RieszConfig::standard(dom.n());
    let n = cfg.walks();
    let shell = cfg.shell_eps();
    let seed = cfg.seed;
    let mut summary = serde_json::json!({
        "domain": dom.name,
        "walks": n,
        "seed": seed,
        "shell_eps": shell,
    });
    let mut rows = Vec::new();

    if dom.name == "disk" {
        let x = [0.3, 0.0];
        let y = [-0.2, 0.1];
        let est = green_estimate(&dom, &rcfg, &x, &y, n, shell, splitmix64(seed ^ 0x201))?;
        let analytic = disk::green(x, y);
        let rel = (est.value - analytic).abs() / analytic;
        rows.push(vec![
            "interior".into(),
            fmt(est.value),
            fmt(est.std_err),
            fmt(analytic),
            fmt(rel),
        ]);
        summary["discard_fraction"] =
            jnum(est.discards as f64 / (est.completed + est.discards).max(1) as f64);
        summary["interior_pair"] = serde_json::json!({
            "estimate": stochastic(est.value, est.std_err, n, seed),
            "analytic": jnum(analytic),
            "rel_error": jnum(rel),
        });

        let ext = green_estimate(&dom, &rcfg, &[1.5, 0.3], &y, n, shell, splitmix64(seed ^ 0x202))?;
        let z = ext.value.abs() / ext.std_err.max(1e-300);
        rows.push(vec!["exterior".into(), fmt(ext.value), fmt(ext.std_err), fmt(0.0), fmt(z)]);
        summary["exterior_point"] = serde_json::json!({
            "estimate": stochastic(ext.value, ext.std_err, n, seed),
            "z_score_vs_zero": jnum(z),
        });

        let ab = green_estimate(&dom, &rcfg, &x, &y, n, shell, splitmix64(seed ^ 0x203))?;
        let ba = green_estimate(&dom, &rcfg, &y, &x, n, shell, splitmix64(seed ^ 0x204))?;
        let combined = ab.std_err + ba.std_err;
        rows.push(vec![
            "symmetry".into(),
            fmt(ab.value),
            fmt(ba.value),
            fmt((ab.value - ba.value).abs()),
            fmt(combined),
        ]);
        summary["symmetry"] = serde_json::json!({
            "g_xy": stochastic(ab.value, ab.std_err, n, seed),
            "g_yx": stochastic(ba.value, ba.std_err, n, seed),
            "abs_diff": jnum((ab.value - ba.value).abs()),
            "combined_std_err": jnum(combined),
        });
    }

    // two-sided Green / harmonic-measure comparison on a boundary ball
    if dom.dim() == 2 {
        let xi = cfg
            .boundary_point
            .clone()
            .unwrap_or_else(|| super::default_boundary_point(&dom));
        let b = hmlab_core::measure::Ball::new(xi.clone(), cfg.inner_radius.unwrap_or(0.2));
        let cork = corkscrew_point(&dom, &xi, b.radius, 4096)?;
        let tests: Vec<Vec<f64>> = vec![
            vec![-0.9 * xi[0], -0.9 * xi[1]],
            vec![-0.4, 0.5],
            vec![-0.4, -0.5],
        ]
        .into_iter()
        .filter(|p| dom.contains(p))
        .collect();
        if !tests.is_empty() {
            let relation = green_omega_relation(
                &dom,
                &rcfg,
                &b,
                &cork.point,
                &tests,
                n,
                shell,
                splitmix64(seed ^ 0x209),
            )?;
            for p in &relation.points {
                rows.push(vec![
                    "omega_green_ratio".into(),
                    fmt(p.x[0]),
                    fmt(p.x[1]),
                    fmt(p.ratio),
                    fmt(p.rel_err),
                ]);
            }
            summary["green_omega_relation"] = serde_json::json!({
                "ball": { "center": b.center, "radius": b.radius },
                "x_b": cork.point,
                "rho_xb": jnum(relation.rho_xb),
                "omega_xb_b": jnum(relation.omega_xb_b),
                "ratios": relation.points.iter().map(|p| serde_json::json!({
                    "x": p.x,
                    "ratio": jnum(p.ratio),
                    "rel_err": jnum(p.rel_err),
                })).collect::<Vec<_>>(),
            });
        }
    }

    // depth scan of rho(x0) d(x0)^{n-1} along a ray toward the boundary
    let nexp = dom.n() as i32 - 1;
    let mut scan = Vec::new();
    let mut scaled = Vec::new();
    for (j, depth) in [0.2f64, 0.4, 0.6].iter().enumerate() {
        let mut x0 = vec![0.0; dom.dim()];
        x0[0] = 1.0 - depth;
        let est = rho(
            &dom,
            &rcfg,
            &x0,
            16,
            (n / 16).max(256),
            shell,
            splitmix64(seed ^ (0x210 + j as u64)),
        )?;
        let s = est.value * est.depth.powi(nexp);
        scan.push(serde_json::json!({
            "depth": jnum(est.depth),
            "rho": stochastic(est.value, est.std_err, n, seed),
            "scaled": jnum(s),
        }));
        scaled.push(s);
        rows.push(vec![
            format!("rho_depth_{depth}"),
            fmt(est.value),
            fmt(est.std_err),
            fmt(est.depth),
            fmt(s),
        ]);
    }
    let spread = scaled.iter().cloned().fold(0.0f64, f64::max)
        / scaled.iter().cloned().fold(f64::INFINITY, f64::min).max(1e-300);
    summary["rho_scan"] = serde_json::json!({
        "points": scan,
        "scaled_spread": jnum(spread),
        "exponent_n_minus_1": nexp,
    });

    let mut bundle = ReportBundle::new("green-check", summary);
    bundle.add_csv("points", csv_table(&["check", "a", "b", "c", "d"], &rows));
    Ok(bundle)
}

/// Pieces covering the trace of a boundary ball on the unit circle.
fn arc_pieces_for_ball(b: &Ball, k: usize) -> BoundaryPartition {
    let center_angle = b.center[1].atan2(b.center[0]);
    let half = 2.0 * ((b.radius / 2.0).min(1.0)).asin();
    let width = 2.0 * half / k as f64;
    BoundaryPartition {
        pieces: (0..k)
            .map(|i| BoundaryPiece::Arc {
                start: center_angle - half + i as f64 * width,
                width,
            })
            .collect(),
        covers_boundary: false,
    }
}

pub fn pole_swap(cfg: &ExperimentConfig) -> Result<ReportBundle, ExperimentError> {
    let dom = domain_of(cfg, "disk")?;
    let n = cfg.walks();
    let shell = cfg.shell_eps();
    let k = cfg.pieces.unwrap_or(8);

    // primary run on the configured (uniform) domain
    let b = Ball::new(vec![1.0, 0.0], 0.6);
    let pieces = arc_pieces_for_ball(&b, k);
    let p1 = cfg.pole.clone().unwrap_or_else(|| vec![0.0, 0.0]);
    let p2 = vec![-0.5, 0.0];
    let primary = change_of_pole(&dom, &b, &pieces, &p1, &p2, 10.0, n, shell, cfg.seed)?;

    // negative control: slit disk with a ball straddling the slit and poles
    // on opposite sides
    let slit = builtin_domain("slit_disk")?;
    let bs = Ball::new(vec![0.5, 0.0], 0.3);
    let half_pieces = (k / 2).max(1);
    let mut slit_pieces = Vec::new();
    for side in [SlitSide::Above, SlitSide::Below] {
        for i in 0..half_pieces {
            let x0 = 0.2 + 0.6 * i as f64 / half_pieces as f64;
            let x1 = 0.2 + 0.6 * (i + 1) as f64 / half_pieces as f64;
            slit_pieces.push(BoundaryPiece::SlitPiece { side, x_min: x0, x_max: x1 });
        }
    }
    let control_parts = BoundaryPartition { pieces: slit_pieces, covers_boundary: false };
    let control = change_of_pole(
        &slit,
        &bs,
        &control_parts,
        &[0.5, 0.3],
        &[0.5, -0.3],
        10.0,
        n,
        shell,
        cfg.seed,
    )?;

    let mut rows = Vec::new();
    for (tag, rep) in [("primary", &primary), ("slit_control", &control)] {
        for g in &rep.groups {
            rows.push(vec![
                tag.to_string(),
                format!("{:?}", g.pieces),
                fmt(g.f1),
                fmt(g.f2),
                fmt(g.quotient),
                fmt(g.std_err_quotient),
            ]);
        }
    }

    let ratio = control.max_quotient / primary.max_quotient;
    let summary = serde_json::json!({
        "domain": dom.name,
        "walks": n,
        "seed": cfg.seed,
        "shell_eps": shell,
        "pieces": k,
        "poles": [p1, p2],
        "primary_max_quotient": jnum(primary.max_quotient),
        "primary_merged_any": primary.merged_any,
        "primary_omega_b": [jnum(primary.omega1_b), jnum(primary.omega2_b)],
        "control_max_quotient": jnum(control.max_quotient),
        "control_merged_any": control.merged_any,
        "control_over_primary": jnum(ratio),
    });
    let mut bundle = ReportBundle::new("pole-swap", summary);
    bundle.add_csv(
        "groups",
        csv_table(&["run", "pieces", "f1", "f2", "quotient", "std_err"], &rows),
    );
    Ok(bundle)
}

pub fn bourgain(cfg: &ExperimentConfig) -> Result<ReportBundle, ExperimentError> {
    let dom = domain_of(cfg, "square")?;
    let mu = cfg
        .build_measure("square-boundary")
        .map_err(|e| ExperimentError::Failed(e.to_string()))?;
    let n = cfg.walks();
    let shell = cfg.shell_eps();
    let xi = cfg
        .boundary_point
        .clone()
        .unwrap_or_else(|| super::default_boundary_point(&dom));
    let r = cfg.inner_radius.unwrap_or(0.5);
    let delta = cfg.stopping_config().delta0;
    let poles = cfg.n_poles.unwrap_or(20);

    let mut rows = Vec::new();
    let mut worst_per_scale = Vec::new();
    for (si, scale) in [1.0f64, 0.5, 0.25].iter().enumerate() {
        let rr = r * scale;
        let rep = bourgain_check(
            &dom,
            &mu,
            &xi,
            rr,
            delta,
            poles,
            n,
            shell,
            splitmix64(cfg.seed ^ (0x300 + si as u64)),
        )?;
        for p in &rep.poles {
            rows.push(vec![
                fmt(rr),
                fmt(p.pole[0]),
                fmt(p.pole[1]),
                fmt(p.omega_b),
                fmt(p.omega_std_err),
                fmt(p.ratio),
            ]);
        }
        worst_per_scale.push(serde_json::json!({
            "r": jnum(rr),
            "worst_ratio": jnum(rep.worst_ratio),
            "vacuous": rep.vacuous,
            "mu_delta_b": jnum(rep.mu_delta_b),
        }));
    }
    let finite: Vec<f64> = worst_per_scale
        .iter()
        .filter_map(|v| v["worst_ratio"].as_f64())
        .collect();
    let stability = if finite.len() >= 2 {
        finite.iter().cloned().fold(0.0f64, f64::max)
            / finite.iter().cloned().fold(f64::INFINITY, f64::min)
    } else {
        f64::NAN
    };

    let summary = serde_json::json!({
        "domain": dom.name,
        "walks": n,
        "seed": cfg.seed,
        "shell_eps": shell,
        "delta": jnum(delta),
        "poles_per_scale": poles,
        "scales": worst_per_scale,
        "scale_stability": jnum(stability),
    });
    let mut bundle = ReportBundle::new("bourgain", summary);
    bundle.add_csv(
        "poles",
        csv_table(&["r", "pole_x", "pole_y", "omega_b", "std_err", "ratio"], &rows),
    );
    Ok(bundle)
}

pub fn bharnack(cfg: &ExperimentConfig) -> Result<ReportBundle, ExperimentError> {
    let dom = domain_of(cfg, "disk")?;
    let rcfg = RieszConfig::standard(dom.n());
    let n = cfg.walks();
    let shell = cfg.shell_eps();

    // u and v both vanish on the boundary near the probe cluster
    let u = HarmonicFnSpec::MeasureOfBall(Ball::new(vec![-1.0, 0.0], 0.6));
    let v = HarmonicFnSpec::GreenWithPole(vec![-0.5, 0.0]);
    let probes: Vec<Vec<f64>> = vec![
        vec![0.85, 0.05],
        vec![0.85, -0.05],
        vec![0.8, 0.1],
        vec![0.8, -0.1],
        vec![0.75, 0.0],
    ];
    let primary =
        boundary_harnack_check(&dom, &rcfg, &u, &v, &probes, n, shell, splitmix64(cfg.seed ^ 0x400))?;

    // negative control on the slit disk: u sees the upper arc, v is a Green
    // function with a lower pole; probes straddle the slit
    let slit = builtin_domain("slit_disk")?;
    let u2 = HarmonicFnSpec::MeasureOfBall(Ball::new(vec![0.0, 1.0], 0.5));
    let v2 = HarmonicFnSpec::GreenWithPole(vec![0.0, -0.5]);
    let probes2: Vec<Vec<f64>> = vec![
        vec![0.4, 0.08],
        vec![0.4, -0.08],
        vec![0.5, 0.08],
        vec![0.5, -0.08],
        vec![0.3, 0.08],
        vec![0.3, -0.08],
    ];
    let control = boundary_harnack_check(
        &slit,
        &rcfg,
        &u2,
        &v2,
        &probes2,
        n,
        shell,
        splitmix64(cfg.seed ^ 0x401),
    )?;

    let mut rows = Vec::new();
    for (tag, rep) in [("primary", &primary), ("slit_control", &control)] {
        for p in &rep.probes {
            rows.push(vec![
                tag.to_string(),
                fmt(p.x[0]),
                fmt(p.x[1]),
                fmt(p.u),
                fmt(p.v),
                fmt(p.ratio),
            ]);
        }
    }
    let summary = serde_json::json!({
        "domain": dom.name,
        "walks": n,
        "seed": cfg.seed,
        "shell_eps": shell,
        "primary_oscillation": jnum(primary.oscillation),
        "control_oscillation": jnum(control.oscillation),
        "control_over_primary": jnum(control.oscillation / primary.oscillation),
    });
    let mut bundle = ReportBundle::new("bharnack", summary);
    bundle.add_csv("probes", csv_table(&["run", "x", "y", "u", "v", "ratio"], &rows));
    Ok(bundle)
}
