mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use common::{dataset_of, fold_history, history_server, play, random_history, read_base, read_log};
use lcq::client::{LocalSource, TrsClient};
use lcq::clock::ManualClock;
use lcq::rdf::Iri;
use lcq::trs::{replay, TrsServerConfig};
use lcq::warehouse::Warehouse;
use proptest::prelude::*;

fn config(page_size: usize, retain: bool) -> TrsServerConfig {
    TrsServerConfig {
        page_size,
        rebase_every: None,
        retain_history: retain,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn base_plus_log_equals_live_set(seed in any::<u64>(), len in 0usize..150, page in 1usize..8, retain in any::<bool>()) {
        let ops = random_history(seed, len, 12, true);
        let server = history_server(config(page, retain));
        play(&server, &ops);
        let source = LocalSource::new(server.clone());
        let (base, cutoff) = read_base(&source);
        let after: Vec<_> = read_log(&source).into_iter().filter(|e| e.order > cutoff).collect();
        let live = replay(base, &after);
        let expected: BTreeSet<Iri> = fold_history(&ops).into_keys().collect();
        prop_assert_eq!(live, expected);
    }

    #[test]
    fn initial_sync_matches_genesis_replay(seed in any::<u64>(), len in 0usize..150, page in 1usize..8) {
        let ops = random_history(seed, len, 12, true);
        let server = history_server(config(page, false));
        play(&server, &ops);
        let wh = Arc::new(Warehouse::new(Arc::new(ManualClock::new(0))));
        let mut client = TrsClient::new(Arc::new(LocalSource::new(server.clone())), wh.clone(), "local");
        client.initial_sync().unwrap();
        prop_assert_eq!(wh.dataset(), dataset_of(&fold_history(&ops)));
        prop_assert_eq!(client.last_applied_order(), server.last_order());
    }

    #[test]
    fn orders_are_dense_and_increasing(seed in any::<u64>(), len in 0usize..100) {
        let ops = random_history(seed, len, 6, false);
        let server = history_server(config(5, true));
        play(&server, &ops);
        let log = read_log(&LocalSource::new(server));
        for (i, e) in log.iter().enumerate() {
            prop_assert_eq!(e.order, i as u64 + 1);
        }
    }
}
