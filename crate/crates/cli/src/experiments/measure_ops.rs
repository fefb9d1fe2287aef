//! Measure- and lattice-level experiments: the structural audit, the
//! A-infinity knapsack scan, and the operator-norm sweep.

use super::{domain_of, jnum, ExperimentError};
use crate::config::ExperimentConfig;
use crate::report::{csv_table, fmt, ReportBundle};
use hmlab_core::corona::{attach_mu, stride_sample};
use hmlab_core::generate::segment_measure;
use hmlab_core::harmonic::{ainfty_scan, corkscrew_point, sample_exits};
use hmlab_core::lattice::{
    audit_lattice, build_lattice, lattice_to_json, small_boundary_ratio,
};
use hmlab_core::measure::Ball;
use hmlab_core::riesz::{operator_norm_l2, RieszConfig};
use hmlab_core::rng::splitmix64;

pub fn lattice_audit(cfg: &ExperimentConfig) -> Result<ReportBundle, ExperimentError> {
    let mu = cfg
        .build_measure("segment")
        .map_err(|e| ExperimentError::Failed(e.to_string()))?;
    let lp = cfg.lattice_params();
    let lat = build_lattice(&mu, lp.c0, lp.a0, lp.k0, lp.k_max)?;
    let rows = audit_lattice(&lat);
    let all_pass = rows.iter().all(|r| r.pass);

    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt(r.generation as f64),
                r.check.to_string(),
                r.pass.to_string(),
                fmt(r.margin),
                r.detail.clone(),
            ]
        })
        .collect();

    // small-boundary decay of sampled cells: raw ratios plus a fitted
    // geometric rate per shell level
    let mut sb_rows = Vec::new();
    let mut level_means: Vec<(f64, f64, usize)> = vec![(0.0, 0.0, 0); 5];
    for g in 0..lat.num_generations() {
        for ci in stride_sample(lat.generations[g].len(), 4) {
            for l in 0..5u32 {
                let ratio = small_boundary_ratio(&lat, (g, ci), l);
                sb_rows.push(vec![
                    fmt((lp.k0 + g as i64) as f64),
                    fmt(ci as f64),
                    fmt(l as f64),
                    fmt(ratio),
                ]);
                if ratio > 0.0 {
                    let e = &mut level_means[l as usize];
                    e.0 += ratio.ln();
                    e.2 += 1;
                }
            }
        }
    }
    // least-squares slope of mean log-ratio against l
    let pts: Vec<(f64, f64)> = level_means
        .iter()
        .enumerate()
        .filter(|(_, e)| e.2 > 0)
        .map(|(l, e)| (l as f64, e.0 / e.2 as f64))
        .collect();
    let decay_rate = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        (-slope).exp() // per-level geometric decay factor
    } else {
        f64::NAN
    };

    // measure diagnostics: the growth constant and AD-regularity probes
    let growth = mu.growth_constant_default();
    let probes = mu.ad_regularity_default_probes(8);
    let ad = mu.ad_regularity(&probes);
    let mut probe_rows = Vec::new();
    for pi in stride_sample(probes.len(), 2000) {
        let p = &probes[pi];
        let ball = hmlab_core::measure::Ball::new(p.center.clone(), p.radius);
        probe_rows.push(vec![
            fmt(p.center[0]),
            fmt(p.center.get(1).copied().unwrap_or(0.0)),
            fmt(p.radius),
            fmt(mu.mass(&ball) / p.radius.powi(mu.n() as i32)),
        ]);
    }

    let summary = serde_json::json!({
        "measure_atoms": mu.len(),
        "c0": lp.c0,
        "a0": lp.a0,
        "k_range": [lp.k0, lp.k_max],
        "generations": lat.num_generations(),
        "all_invariants_pass": all_pass,
        "warnings": lat.warnings,
        "small_boundary_decay_per_level": jnum(decay_rate),
        "growth_constant": jnum(growth.constant),
        "growth_resolution_scale": jnum(growth.resolution_scale),
        "ad_regularity": {
            "c_lower": jnum(ad.c_lower),
            "c_upper": jnum(ad.c_upper),
            "degenerate": ad.degenerate,
        },
        "seed": cfg.seed,
    });
    let mut bundle = ReportBundle::new("lattice-audit", summary);
    bundle.add_csv(
        "measure-probes",
        csv_table(&["center_x", "center_y", "radius", "mass_over_r_n"], &probe_rows),
    );
    bundle.add_csv(
        "invariants",
        csv_table(&["generation", "check", "pass", "margin", "detail"], &csv_rows),
    );
    bundle.add_csv(
        "small-boundary",
        csv_table(&["generation", "cell", "l", "ratio"], &sb_rows),
    );
    bundle.add_json("lattice", serde_json::from_str(&lattice_to_json(&lat)).unwrap());
    Ok(bundle)
}

pub fn ainfty(cfg: &ExperimentConfig) -> Result<ReportBundle, ExperimentError> {
    let dom = domain_of(cfg, "disk")?;
    let mu = cfg
        .build_measure("circle")
        .map_err(|e| ExperimentError::Failed(e.to_string()))?;
    let n = cfg.walks();
    let shell = cfg.shell_eps();
    let scfg = cfg.stopping_config();
    let lp = cfg.lattice_params();

    // ball on the boundary, lattice partition of mu restricted to it
    let xi = cfg
        .boundary_point
        .clone()
        .unwrap_or_else(|| super::default_boundary_point(&dom));
    let b = Ball::new(xi.clone(), cfg.inner_radius.unwrap_or(0.5));
    let mu_b = mu.restricted(&b);
    if mu_b.is_empty() {
        return Err(ExperimentError::Precondition(
            "the boundary ball carries no mu mass".into(),
        ));
    }
    let lat = build_lattice(&mu_b, lp.c0, lp.a0, lp.k0, lp.k_max)?;

    // omega sample from a corkscrew pole of the ball
    let cork = corkscrew_point(&dom, &xi, scfg.delta0 / 2.0 * b.radius, 8192)?;
    let sample = sample_exits(&dom, &cork.point, n, shell, splitmix64(cfg.seed ^ 0x500))?;
    let omega = sample.to_measure_aggregated(shell).restricted(&b);
    let attached_omega = attach_mu(&lat, &omega);

    // deepest-generation cells as the common partition
    let deep = lat.leaf_generation();
    let mu_cells: Vec<f64> = lat.generations[deep].iter().map(|c| c.mass).collect();
    let om_cells: Vec<f64> = lat.generations[deep]
        .iter()
        .map(|c| c.members.iter().map(|&m| attached_omega[m as usize]).sum())
        .collect();

    let default_grid: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
    let grid = cfg.eps_grid.clone().unwrap_or(default_grid);
    let mut rows = Vec::new();
    let mut any_zero_mu = false;
    let mut at_eps = f64::NAN;
    for &eps in &grid {
        let scan = ainfty_scan(&mu_cells, &om_cells, eps);
        any_zero_mu |= scan.zero_mu_mass_selected;
        if (eps - scfg.eps).abs() < 1e-12 {
            at_eps = scan.eps_prime;
        }
        rows.push(vec![
            fmt(eps),
            fmt(scan.eps_prime),
            scan.zero_mu_mass_selected.to_string(),
        ]);
    }
    let at_config_eps = ainfty_scan(&mu_cells, &om_cells, scfg.eps);
    if at_eps.is_nan() {
        at_eps = at_config_eps.eps_prime;
    }

    let summary = serde_json::json!({
        "domain": dom.name,
        "walks": n,
        "seed": cfg.seed,
        "shell_eps": shell,
        "ball": { "center": b.center, "radius": b.radius },
        "partition_cells": mu_cells.len(),
        "pole": cork.point,
        "discard_fraction": jnum(sample.discard_fraction()),
        "eps": jnum(scfg.eps),
        "eps_prime_at_eps": jnum(at_eps),
        "zero_mu_mass_selected": any_zero_mu,
    });
    let mut bundle = ReportBundle::new("ainfty", summary);
    bundle.add_csv("scan", csv_table(&["eps", "eps_prime", "zero_mu_flag"], &rows));
    Ok(bundle)
}

pub fn riesz_norm(cfg: &ExperimentConfig) -> Result<ReportBundle, ExperimentError> {
    let sizes = cfg.norm_sizes.clone().unwrap_or_else(|| vec![100, 400, 1600]);
    let rcfg = RieszConfig::standard(1);
    let mut rows = Vec::new();
    let mut norms = Vec::new();
    for &n in &sizes {
        if n == 0 {
            return Err(ExperimentError::Failed("norm size must be positive".into()));
        }
        let mu = segment_measure(n);
        let subset: Vec<usize> = (0..n).collect();
        let eps = 1.0 / n as f64; // the atom spacing
        let r = operator_norm_l2(&rcfg, &mu, &subset, eps);
        norms.push(r.norm);
        rows.push(vec![
            fmt(n as f64),
            fmt(eps),
            fmt(r.norm),
            fmt(r.iterations as f64),
            r.converged.to_string(),
        ]);
    }
    let max_ratio = norms
        .windows(2)
        .map(|w| (w[1] / w[0]).max(w[0] / w[1]))
        .fold(1.0f64, f64::max);
    let summary = serde_json::json!({
        "sizes": sizes,
        "norms": norms.iter().map(|&v| jnum(v)).collect::<Vec<_>>(),
        "max_successive_ratio": jnum(max_ratio),
        "seed": cfg.seed,
    });
    let mut bundle = ReportBundle::new("riesz-norm", summary);
    bundle.add_csv("sweep", csv_table(&["n", "eps", "norm", "iterations", "converged"], &rows));
    Ok(bundle)
}
