use petgraph::algo::kosaraju_scc;
use petgraph::graph::UnGraph;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rankforge_core::domain::{treatment_components, IssueCode};
use rankforge_core::synth::Scenario;
use rankforge_core::{CovariateDescriptor, CovariateSchema, CovariateValue, IpdDataset, TreatmentId};

fn schema() -> CovariateSchema {
    CovariateSchema::new(vec![
        CovariateDescriptor::continuous("age"),
        CovariateDescriptor::binary("male"),
        CovariateDescriptor::categorical("grade", ["low", "mid", "high", "top"], "mid"),
    ])
    .unwrap()
}

fn value_strategy() -> impl Strategy<Value = Vec<CovariateValue>> {
    (
        -1e6f64..1e6,
        prop_oneof![Just(0.0), Just(1.0)],
        prop_oneof![Just("low"), Just("mid"), Just("high"), Just("top")],
    )
        .prop_map(|(a, m, g)| vec![a.into(), m.into(), g.into()])
}

proptest! {
    #[test]
    fn encoding_is_injective(a in value_strategy(), b in value_strategy()) {
        let s = schema();
        let (ea, eb) = (s.encode(&a).unwrap(), s.encode(&b).unwrap());
        prop_assert_eq!(ea.len(), s.encoded_width());
        prop_assert_eq!(a == b, ea == eb);
    }

    #[test]
    fn connectivity_agrees_with_graph_oracle(
        g in 2usize..12,
        studies in prop::collection::vec(prop::collection::btree_set(1usize..12, 1..4), 0..10),
    ) {
        let studies: Vec<Vec<TreatmentId>> = studies
            .into_iter()
            .map(|s| s.into_iter().filter(|&t| t <= g).map(TreatmentId::new).collect())
            .collect();
        let ours = treatment_components(g, studies.iter().map(|s| s.iter().copied()));

        let mut graph = UnGraph::<(), ()>::new_undirected();
        let nodes: Vec<_> = (0..g).map(|_| graph.add_node(())).collect();
        for s in &studies {
            for w in s.windows(2) {
                graph.add_edge(nodes[w[0].position()], nodes[w[1].position()], ());
            }
        }
        let mut theirs: Vec<Vec<usize>> = kosaraju_scc(&graph)
            .into_iter()
            .map(|c| { let mut v: Vec<usize> = c.iter().map(|n| n.index() + 1).collect(); v.sort(); v })
            .collect();
        theirs.sort();
        let mut ours: Vec<Vec<usize>> = ours
            .into_iter()
            .map(|c| { let mut v: Vec<usize> = c.iter().map(|t| t.index()).collect(); v.sort(); v })
            .collect();
        ours.sort();
        prop_assert_eq!(ours, theirs);
    }

    #[test]
    fn validation_ignores_record_order(seed in any::<u64>(), drop in 0usize..40) {
        let mut data = Scenario::sign_flip().simulate(seed);
        // thin one arm so that some runs also carry warnings or errors
        data.records.retain(|r| !(r.study == "S2" && r.treatment.index() == 1) || drop > 0);
        data.records.truncate(data.records.len() - drop.min(10));
        let before = data.validate();
        let mut shuffled = data.records.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let after = IpdDataset::new(data.network.clone(), shuffled).validate();
        let key = |r: &rankforge_core::ValidationReport| {
            let mut e: Vec<String> = r.errors.iter().map(|i| i.message.clone()).collect();
            let mut w: Vec<String> = r.warnings.iter().map(|i| i.message.clone()).collect();
            e.sort();
            w.sort();
            (e, w)
        };
        prop_assert_eq!(key(&before), key(&after));
    }
}

#[test]
fn disconnected_network_is_reported() {
    let mut data = Scenario::sign_flip().simulate(1);
    data.records.retain(|r| r.study == "S2");
    let report = data.validate();
    assert!(report.has(IssueCode::Disconnected));
    assert!(report.to_string().contains("network disconnected"), "{report}");
}
