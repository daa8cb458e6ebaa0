//! EP against the exact conditional: rejection sampling from the joint GP
//! posterior, keeping draws consistent with the hard Pareto/feasibility
//! factors.

mod common;

use pesmoc::ep::{build_factor_graph, condition_candidate, ep_converge_fixed, EpOptions};
use pesmoc::gp::{noise_floor, GpPosterior, HyperParams};
use pesmoc::pareto::ParetoSample;
use pesmoc::problem::{Dataset, Observation};

const MEAN_TOL: f64 = 0.05;
const VAR_TOL: f64 = 0.10;

struct Instance {
    gps: Vec<GpPosterior<f64>>,
    n_objectives: usize,
    data: Dataset<f64>,
    pareto: ParetoSample<f64>,
    candidate: Vec<f64>,
}

fn build_instance(
    xs: &[f64],
    ys_per_fn: &[&[f64]],
    n_objectives: usize,
    stars: &[f64],
    candidate: f64,
    noise: f64,
) -> Instance {
    let hp = HyperParams::isotropic(1.0, 0.4, 1, noise);
    let gps: Vec<GpPosterior<f64>> = ys_per_fn
        .iter()
        .map(|ys| {
            let x: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v]).collect();
            GpPosterior::fit(hp.clone(), x, ys.to_vec()).unwrap()
        })
        .collect();
    let data = Dataset {
        observations: xs
            .iter()
            .enumerate()
            .map(|(i, &x)| Observation {
                x: vec![x],
                y: ys_per_fn.iter().map(|ys| ys[i]).collect(),
            })
            .collect(),
    };
    let n_constraints = gps.len() - n_objectives;
    let pareto = ParetoSample {
        points: stars.iter().map(|&s| vec![s]).collect(),
        f_values: stars.iter().map(|_| vec![0.0; n_objectives]).collect(),
        c_values: stars.iter().map(|_| vec![0.1; n_constraints]).collect(),
    };
    Instance { gps, n_objectives, data, pareto, candidate: vec![candidate] }
}

/// Run EP on the instance and compare every conditioned marginal against the
/// rejection oracle.
///
/// Two oracles are needed because the two EP quantities approximate two
/// different conditionals: the fixed state conditions only on the factors of
/// the observed and Pareto points, while the candidate's prediction also
/// conditions on the candidate's own factors.
fn check_instance(inst: &Instance, seed: u64) {
    let graph =
        build_factor_graph(&inst.gps, inst.n_objectives, &inst.pareto, &inst.data, None)
            .unwrap();
    let state = ep_converge_fixed(&graph, &EpOptions::default());
    assert!(state.converged(), "EP failed to converge on a small instance");
    let pred = condition_candidate(&state, &graph, &inst.candidate).unwrap();

    let oracle_fixed = common::rejection_moments(&graph, 200_000, 40_000_000, seed)
        .expect("rejection oracle starved");
    let graph_cand = build_factor_graph(
        &inst.gps,
        inst.n_objectives,
        &inst.pareto,
        &inst.data,
        Some(&inst.candidate),
    )
    .unwrap();
    let oracle_cand = common::rejection_moments(&graph_cand, 200_000, 40_000_000, seed + 1)
        .expect("rejection oracle starved");
    let cand = graph_cand.candidate_position().unwrap();
    let k_obj = inst.n_objectives;

    for fn_idx in 0..inst.gps.len() {
        let noise = noise_floor(inst.gps[fn_idx].noise_var());
        for point in 0..graph.n_points() {
            let (or_mean, or_var) =
                (oracle_fixed.means[fn_idx][point], oracle_fixed.vars[fn_idx][point]);
            let (ep_mean, ep_var) = state.marginal(fn_idx, point);
            assert!(
                (ep_mean - or_mean).abs() <= MEAN_TOL,
                "fn {fn_idx} point {point}: mean ep {ep_mean} vs oracle {or_mean}"
            );
            assert!(
                (ep_var / or_var - 1.0).abs() <= VAR_TOL,
                "fn {fn_idx} point {point}: var ep {ep_var} vs oracle {or_var}"
            );
        }

        // Candidate marginal: the conditioned prediction includes observation
        // noise; the oracle samples the latent function.
        let (or_mean, or_var) =
            (oracle_cand.means[fn_idx][cand], oracle_cand.vars[fn_idx][cand]);
        let (ep_mean, ep_var) = if fn_idx < k_obj {
            (pred.obj_mean[fn_idx], pred.obj_var[fn_idx] - noise)
        } else {
            (pred.con_mean[fn_idx - k_obj], pred.con_var[fn_idx - k_obj] - noise)
        };
        assert!(
            (ep_mean - or_mean).abs() <= MEAN_TOL,
            "fn {fn_idx} candidate: mean ep {ep_mean} vs oracle {or_mean}"
        );
        assert!(
            (ep_var / or_var - 1.0).abs() <= VAR_TOL,
            "fn {fn_idx} candidate: var ep {ep_var} vs oracle {or_var}"
        );
    }

    // Conditioning on feasibility should not lower constraint means at the
    // Pareto points, in the exact conditional as well as in EP.
    for &s in graph.star_positions() {
        for j in 0..graph.n_constraints() {
            let fn_idx = k_obj + j;
            let (prior_mean, _) = graph.prior_joint(fn_idx);
            assert!(
                oracle_fixed.means[fn_idx][s] >= prior_mean[s] - 0.02,
                "oracle constraint mean fell at a Pareto point"
            );
            assert!(
                state.marginal(fn_idx, s).0 >= prior_mean[s] - 0.02,
                "EP constraint mean fell at a Pareto point"
            );
        }
    }
}

#[test]
fn ep_matches_rejection_oracle_minimal_instance() {
    // K=1, C=1, N=1, one Pareto point, one candidate.
    let inst = build_instance(
        &[0.3],
        &[&[0.2], &[0.3]],
        1,
        &[0.6],
        0.45,
        0.01,
    );
    check_instance(&inst, 1301);
}

#[test]
fn ep_matches_rejection_oracle_richer_instance() {
    // K=2, C=2, N=3, two Pareto points, one candidate.
    let inst = build_instance(
        &[0.1, 0.45, 0.8],
        &[
            &[-0.5, 0.0, 0.6],
            &[0.6, 0.0, -0.5],
            &[0.4, 0.6, 0.3],
            &[0.5, 0.2, 0.6],
        ],
        2,
        &[0.3, 0.65],
        0.52,
        0.01,
    );
    check_instance(&inst, 1302);
}
