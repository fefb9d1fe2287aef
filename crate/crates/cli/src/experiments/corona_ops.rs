//! Corona-side experiments: bad cubes, the key-lemma transform bound with
//! its walk-doubling stability check, the corona tree with packing, and the
//! combined full pipeline.

use super::{jnum, pipeline_front, ExperimentError, PipelineFront};
use crate::config::ExperimentConfig;
use crate::report::{csv_table, fmt, ReportBundle};
use hmlab_core::corona::{
    build_corona, corona_to_json, growth_check, key_lemma_check, packing_check,
    r_star_l1_check, t1_hypotheses, CellLabel, CoronaTree,
};
use hmlab_core::lattice::{audit_lattice, build_lattice, CellId, DMLattice};
use hmlab_core::riesz::{operator_norm_l2, RieszConfig};

fn bad_cell_rows(front: &PipelineFront) -> Vec<Vec<String>> {
    let lat = &front.lat_omega;
    let sigma = lat.base();
    let mut rows = Vec::new();
    for (which, ids) in [("bad1", &front.bad.bad1), ("bad2", &front.bad.bad2)] {
        for &id in ids {
            let cell = lat.cell(id);
            let omega: f64 = cell.members.iter().map(|&m| sigma.weight(m as usize)).sum();
            let mu: f64 = cell
                .members
                .iter()
                .map(|&m| front.attached_mu[m as usize])
                .sum();
            rows.push(vec![
                which.to_string(),
                fmt(cell.k as f64),
                fmt(id.1 as f64),
                fmt(cell.members.len() as f64),
                fmt(omega),
                fmt(mu),
            ]);
        }
    }
    rows
}

pub fn bad_cubes(cfg: &ExperimentConfig) -> Result<ReportBundle, ExperimentError> {
    let front = pipeline_front(cfg, cfg.walks(), "disk", "circle")?;
    let mut summary = front.summary_fragment(cfg.seed);

    // sensitivity sweep: the comparability threshold A is a free constant,
    // so report the classification at a decade around the configured value
    let min_extent = 4.0 * front.mu.resolution_scale();
    let mut sweep = Vec::new();
    for a in [10.0, 50.0, 250.0] {
        let scfg = hmlab_core::corona::StoppingConfig { a, ..front.scfg };
        match hmlab_core::corona::classify_bad(
            &front.lat_omega,
            &front.attached_mu,
            &front.b0,
            &scfg,
            min_extent,
        ) {
            Ok(rep) => sweep.push(serde_json::json!({
                "a": a,
                "bad1_cells": rep.bad1.len(),
                "bad2_cells": rep.bad2.len(),
                "eps1_prime": jnum(rep.eps1_prime),
                "eps2_prime": jnum(rep.eps2_prime),
            })),
            Err(e) => sweep.push(serde_json::json!({
                "a": a,
                "error": e.to_string(),
            })),
        }
    }
    summary["a_sweep"] = serde_json::json!(sweep);

    let mut bundle = ReportBundle::new("bad-cubes", summary);
    bundle.add_csv(
        "cells",
        csv_table(
            &["family", "generation", "cell", "members", "omega", "mu"],
            &bad_cell_rows(&front),
        ),
    );
    Ok(bundle)
}

pub fn key_lemma(cfg: &ExperimentConfig) -> Result<ReportBundle, ExperimentError> {
    let n = cfg.walks();
    let mut runs = Vec::new();
    let mut worsts = Vec::new();
    let mut bundle = ReportBundle::new("key-lemma", serde_json::Value::Null);
    for (tag, walks) in [("base", n), ("doubled", 2 * n)] {
        let front = pipeline_front(cfg, walks, "disk", "circle")?;
        let growth = growth_check(&front.lat_omega, &front.bad, &front.b0, &front.scfg, 512);
        let key = key_lemma_check(
            &front.lat_omega,
            &front.omega_full,
            &front.bad,
            &front.b0,
            &front.ball_b,
            &front.x_b,
            &front.scfg,
            4,
            256,
        );
        worsts.push(key.worst_truncated);
        runs.push(serde_json::json!({
            "run": tag,
            "walks": walks,
            "front": front.summary_fragment(cfg.seed),
            "growth_cell_constant": jnum(growth.worst_cell_constant),
            "growth_ball_constant": jnum(growth.worst_ball_constant),
            "growth_cells_checked": growth.cells_checked,
            "key_worst_truncated": jnum(key.worst_truncated),
            "key_worst_maximal": jnum(key.worst_maximal),
            "key_probe_cells": key.probe_cells,
            "key_eval_points": key.eval_points,
            "key_vacuous": key.vacuous,
        }));
    }
    let stability = if worsts[0] > 0.0 && worsts[1] > 0.0 {
        (worsts[1] / worsts[0]).max(worsts[0] / worsts[1])
    } else {
        f64::INFINITY
    };
    bundle.summary = serde_json::json!({
        "seed": cfg.seed,
        "shell_eps": cfg.shell_eps(),
        "runs": runs,
        "stability_factor": jnum(stability),
    });
    Ok(bundle)
}

fn corona_root(lat: &DMLattice) -> Result<CellId, ExperimentError> {
    for ci in 0..lat.generations[0].len() {
        if lat.cell((0, ci)).doubling {
            return Ok((0, ci));
        }
    }
    // fall back to the first doubling cell anywhere
    for g in 1..lat.num_generations() {
        for ci in 0..lat.generations[g].len() {
            if lat.cell((g, ci)).doubling {
                return Ok((g, ci));
            }
        }
    }
    Err(ExperimentError::Precondition(
        "lattice has no doubling cell to root the corona tree".into(),
    ))
}

fn density_gain_rows(tree: &CoronaTree) -> Vec<Vec<String>> {
    tree.nodes
        .iter()
        .filter(|n| n.info.label == CellLabel::Ugly)
        .map(|n| {
            vec![
                fmt(n.cell.0 as f64),
                fmt(n.cell.1 as f64),
                fmt(n.level as f64),
                fmt(n.density_gain_lhs),
                fmt(n.density_gain_rhs),
                n.density_gain_ok.to_string(),
                n.depth_exhausted.to_string(),
            ]
        })
        .collect()
}

fn corona_summary(
    tree: &CoronaTree,
    lat: &DMLattice,
    cfg: &ExperimentConfig,
) -> serde_json::Value {
    let n_nice = tree
        .nodes
        .iter()
        .filter(|n| n.info.label == CellLabel::Nice)
        .count();
    let n_ugly = tree.nodes.len() - n_nice;
    let density_gain_violations = tree
        .nodes
        .iter()
        .filter(|n| n.info.label == CellLabel::Ugly && !n.density_gain_ok)
        .count();
    serde_json::json!({
        "seed": cfg.seed,
        "mu_atoms": lat.base().len(),
        "root": tree.root,
        "nodes": tree.nodes.len(),
        "levels": tree.levels.len(),
        "nice": n_nice,
        "ugly": n_ugly,
        "eta": jnum(cfg.stopping_config().eta),
        "density_gain_violations": density_gain_violations,
        "depth_exhausted_leaves": tree.nodes.iter().filter(|n| n.depth_exhausted).count(),
        "packing_ratio": jnum(packing_check(tree)),
        "level_sums": tree.level_sums.iter().map(|&v| jnum(v)).collect::<Vec<_>>(),
    })
}

pub fn corona(cfg: &ExperimentConfig) -> Result<ReportBundle, ExperimentError> {
    let mu = cfg
        .build_measure("segment-plus-cluster")
        .map_err(|e| ExperimentError::Failed(e.to_string()))?;
    let lp = cfg.corona_lattice_params();
    let scfg = cfg.stopping_config();
    let lat = build_lattice(&mu, lp.c0, lp.a0, lp.k0, lp.k_max)?;
    let root = corona_root(&lat)?;
    let tree = build_corona(&lat, root, None, &scfg, 4096)?;
    let rstar = r_star_l1_check(&tree, &lat, 4096);

    let mut summary = corona_summary(&tree, &lat, cfg);
    summary["r_star_l1"] = serde_json::json!({
        "normalized_l1": jnum(rstar.normalized_l1),
        "nu_atoms": rstar.nu_atoms,
        "nu_mass": jnum(rstar.nu_mass),
        "tail_l1": jnum(rstar.tail_l1),
        "ugly_l1": jnum(rstar.ugly_l1),
        "nice_l1": jnum(rstar.nice_l1),
    });
    let mut bundle = ReportBundle::new("corona", summary);
    bundle.add_csv(
        "density-gain",
        csv_table(
            &["generation", "cell", "level", "lhs", "rhs", "ok", "depth_exhausted"],
            &density_gain_rows(&tree),
        ),
    );
    bundle.add_json("tree", serde_json::from_str(&corona_to_json(&tree, &lat)).unwrap());
    Ok(bundle)
}

pub fn packing(cfg: &ExperimentConfig) -> Result<ReportBundle, ExperimentError> {
    let mu = cfg
        .build_measure("segment-plus-cluster")
        .map_err(|e| ExperimentError::Failed(e.to_string()))?;
    let lp = cfg.corona_lattice_params();
    let scfg = cfg.stopping_config();
    let mut ratios = Vec::new();
    let mut rows = Vec::new();
    for (tag, k_max) in [("base", lp.k_max), ("deepened", lp.k_max + 1)] {
        let lat = build_lattice(&mu, lp.c0, lp.a0, lp.k0, k_max)?;
        let root = corona_root(&lat)?;
        let tree = build_corona(&lat, root, None, &scfg, 4096)?;
        ratios.push(tree.packing_ratio);
        for (lvl, s) in tree.level_sums.iter().enumerate() {
            rows.push(vec![tag.to_string(), fmt(lvl as f64), fmt(*s)]);
        }
    }
    let drift = (ratios[1] / ratios[0]).max(ratios[0] / ratios[1]);
    let summary = serde_json::json!({
        "seed": cfg.seed,
        "k_max": [lp.k_max, lp.k_max + 1],
        "packing_ratios": [jnum(ratios[0]), jnum(ratios[1])],
        "drift_factor": jnum(drift),
        "eta": jnum(scfg.eta),
    });
    let mut bundle = ReportBundle::new("packing", summary);
    bundle.add_csv("levels", csv_table(&["run", "level", "theta_mu_sum"], &rows));
    Ok(bundle)
}

pub fn full_pipeline(cfg: &ExperimentConfig) -> Result<ReportBundle, ExperimentError> {
    let n = cfg.walks();
    let front = pipeline_front(cfg, n, "disk", "circle")?;
    let scfg = front.scfg;
    let lp = cfg.corona_lattice_params();

    // lattice audit on mu itself
    let lat_mu = build_lattice(&front.mu, lp.c0, lp.a0, lp.k0, lp.k_max)?;
    let audit = audit_lattice(&lat_mu);
    let audit_pass = audit.iter().all(|r| r.pass);
    let audit_rows: Vec<Vec<String>> = audit
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

    // growth, key lemma, and T1 on the omega lattice
    let growth = growth_check(&front.lat_omega, &front.bad, &front.b0, &scfg, 512);
    let key = key_lemma_check(
        &front.lat_omega,
        &front.omega_full,
        &front.bad,
        &front.b0,
        &front.ball_b,
        &front.x_b,
        &scfg,
        4,
        256,
    );
    let norm_eps = cfg.shell_eps();
    let t1 = t1_hypotheses(
        &front.lat_omega,
        &front.bad,
        &front.b0,
        &front.ball_b,
        &front.x_b,
        &scfg,
        256,
        600,
        norm_eps,
    );

    // corona tree on the mu lattice
    let root = corona_root(&lat_mu)?;
    let tree = build_corona(&lat_mu, root, Some(&front.domain), &scfg, 4096)?;
    let rstar = r_star_l1_check(&tree, &lat_mu, 2048);

    // operator norm on a mu subset at the resolution scale
    let rcfg = RieszConfig::standard(front.mu.n());
    let subset = hmlab_core::corona::stride_sample(front.mu.len(), 800);
    let norm = operator_norm_l2(&rcfg, &front.mu, &subset, front.mu.resolution_scale());

    let summary = serde_json::json!({
        "seed": cfg.seed,
        "walks": n,
        "shell_eps": cfg.shell_eps(),
        "lattice_audit": { "pass": audit_pass, "generations": lat_mu.num_generations() },
        "bad_cubes": front.summary_fragment(cfg.seed),
        "growth": {
            "cell_constant": jnum(growth.worst_cell_constant),
            "ball_constant": jnum(growth.worst_ball_constant),
        },
        "key_lemma": {
            "worst_truncated": jnum(key.worst_truncated),
            "worst_maximal": jnum(key.worst_maximal),
            "probe_cells": key.probe_cells,
            "vacuous": key.vacuous,
        },
        "t1": {
            "c4": jnum(t1.c4),
            "c5": jnum(t1.c5),
            "delta1": jnum(t1.delta1),
            "nu_vs_mu_b0_ratio": jnum(t1.nu_vs_mu_b0_ratio),
            "nu_vs_mu_b0_ok": t1.nu_vs_mu_b0_ok,
            "g1_mass_ok": t1.g1_mass_ok,
            "operator_norm": jnum(t1.operator_norm.norm),
            "operator_norm_converged": t1.operator_norm.converged,
        },
        "corona": corona_summary(&tree, &lat_mu, cfg),
        "r_star_l1": jnum(rstar.normalized_l1),
        "mu_operator_norm": {
            "norm": jnum(norm.norm),
            "iterations": norm.iterations,
            "converged": norm.converged,
            "subset": subset.len(),
        },
    });

    let mut bundle = ReportBundle::new("full-pipeline", summary);
    bundle.add_csv(
        "mu-audit",
        csv_table(&["generation", "check", "pass", "margin", "detail"], &audit_rows),
    );
    bundle.add_csv(
        "bad-cells",
        csv_table(
            &["family", "generation", "cell", "members", "omega", "mu"],
            &bad_cell_rows(&front),
        ),
    );
    bundle.add_csv(
        "density-gain",
        csv_table(
            &["generation", "cell", "level", "lhs", "rhs", "ok", "depth_exhausted"],
            &density_gain_rows(&tree),
        ),
    );
    Ok(bundle)
}
