use promise_persuasion::instances::{
    evaluate_markov_scheme, minimum_vertex_cover, separation_check, separation_fixture, vc_completeness_scheme,
    vc_instance, Graph,
};

#[test]
fn cover_scheme_value_falls_with_cover_size() {
    let graph = Graph::complete(4);
    let inst = vc_instance(&graph);
    let min = minimum_vertex_cover(&graph).unwrap();
    assert_eq!(min.len(), 3);
    let mut last = f64::INFINITY;
    for cover in [min.clone(), vec![0, 1, 2, 3]] {
        let eval = evaluate_markov_scheme(&inst, &vc_completeness_scheme(&graph, &cover).unwrap(), 1e-9).unwrap();
        assert!(eval.report.is_clean());
        assert!(eval.sender_value < last);
        last = eval.sender_value;
    }
}

#[test]
fn path_graph_gadget() {
    let graph = Graph::new(3, vec![(0, 1), (1, 2)]).unwrap();
    let inst = vc_instance(&graph);
    let cover = minimum_vertex_cover(&graph).unwrap();
    assert_eq!(cover, vec![1]);
    let eval = evaluate_markov_scheme(&inst, &vc_completeness_scheme(&graph, &cover).unwrap(), 1e-9).unwrap();
    assert!(eval.report.is_clean());
    assert!(vc_completeness_scheme(&graph, &[0]).is_err());
}

#[test]
fn history_dependence_beats_markov_on_the_fixture() {
    let inst = separation_fixture();
    let report = separation_check(&inst, 0.05, 0.02).unwrap();
    assert!(report.persuasive_candidates > 0);
    assert!(report.gap > 2.0 * report.slack_bound, "{report:?}");
    let best = evaluate_markov_scheme(&inst, &report.best_markov, 1e-9).unwrap();
    assert!(best.report.is_clean());
    assert!((best.sender_value - report.markov_value).abs() < 1e-12);
}
