use wbst_core::experiments::{exact_weighted_depth_mean, run, ExperimentSpec, SpecFile};
use wbst_core::oracle::{enumerate, to_f64};
use wbst_core::rng::{stream_rng, streams};
use wbst_core::sampling::sample_label_path;
use wbst_core::stats::ks_two_sample;
use wbst_core::tree::build_permutation_with;

#[test]
fn exact_enumeration_matches_closed_form_mean() {
    let m = enumerate(8).unwrap();
    for lm in &m.labels {
        let exact = to_f64(&lm.weighted_depth.mean);
        let formula = exact_weighted_depth_mean(8, lm.k as u64);
        assert!((exact - formula).abs() < 1e-12, "k={}: {exact} vs {formula}", lm.k);
    }
}

#[test]
fn path_sampler_matches_explicit_trees() {
    let (n, k, reps) = (300usize, 75u32, 4000);
    let mut rng = stream_rng(1, streams::PERMUTATION, 0);
    let (mut d_tree, mut w_tree) = (Vec::new(), Vec::new());
    for _ in 0..reps {
        let t = build_permutation_with(n, &mut rng).unwrap();
        let v = t.node_of_rank(k).unwrap();
        d_tree.push(f64::from(t.depth(v)));
        w_tree.push(t.weighted_depth(v));
    }
    let mut rng = stream_rng(1, streams::PATH, 0);
    let (d_fast, w_fast): (Vec<f64>, Vec<f64>) = (0..reps)
        .map(|_| {
            let o = sample_label_path(n as u64, u64::from(k), &mut rng).unwrap();
            (f64::from(o.depth), o.weighted_depth)
        })
        .unzip();
    assert!(!ks_two_sample(&d_tree, &d_fast, 1e-3).unwrap().rejected);
    assert!(!ks_two_sample(&w_tree, &w_fast, 1e-3).unwrap().rejected);
}

#[test]
fn fast_and_tree_methods_agree_on_a_spec() {
    let text = |method: &str| {
        format!(
            r#"{{"spec_version":1,"experiments":[{{"id":"m","model":"permutation","n":[500],
            "k":{{"rule":"alpha_n","alpha":0.3}},"method":"{method}","replicates":3000,
            "claims":[{{"id":"mean","statistic":{{"kind":"mean","of":"weighted_depth"}},
            "check":{{"kind":"within","target":{{"formula":"weighted_depth_mean"}},"se":4}}}}]}}]}}"#
        )
    };
    for method in ["tree", "fast"] {
        let spec: ExperimentSpec = SpecFile::from_json(&text(method)).unwrap().experiments.remove(0);
        let rows = run(&spec, 9).unwrap();
        assert!(rows.iter().all(|r| r.passed()), "{method}: {rows:?}");
    }
}
