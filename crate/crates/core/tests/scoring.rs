// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use recall_lab::corpus::TemplateId;
use recall_lab::scoring::{run_score_suite, AblationKind, GridStore, NoiseConfig};

#[test]
fn persisted_cells_are_restored_minus_corrupted() {
    let w = common::world();
    let m = common::model(&w, 4, 32, 8);
    let dir = tempfile::tempdir().unwrap();
    let store = GridStore::open(dir.path()).unwrap();
    let triples = &w.triples[..5];
    let suite = run_score_suite(&m, &w, triples, &TemplateId::QUERY_PAIR, &NoiseConfig::default(), Some((&store, "h"))).unwrap();
    assert_eq!(suite.grids.len(), 5 * 2 * 3);
    for (i, _) in triples.iter().enumerate() {
        for tpl in TemplateId::QUERY_PAIR {
            for kind in AblationKind::ALL {
                let stem = GridStore::stem(i, tpl, kind);
                let side = store.read_sidecar(&stem).unwrap();
                let cells = store.read_cells(&stem).unwrap();
                assert_eq!(cells.len(), side.layers * side.positions);
                assert_eq!(side.forward_passes, 2 + side.layers * side.positions);
                for c in cells {
                    assert_eq!(c.score, c.restored_p - c.corrupted_p, "{stem} {c:?}");
                    assert_eq!(c.corrupted_p, side.corrupted_p);
                }
            }
        }
    }
    let again = run_score_suite(&m, &w, triples, &TemplateId::QUERY_PAIR, &NoiseConfig::default(), Some((&store, "h"))).unwrap();
    assert_eq!(again.reused, 30);
    assert_eq!(again.grids, suite.grids);
}

#[test]
fn pass_count_scales_with_samples() {
    let w = common::world();
    let m = common::model(&w, 4, 32, 9);
    let p = &common::prompts(&w, 1)[0];
    let target = w.vocabulary.id(&p.triple.object).unwrap();
    let noise = NoiseConfig { samples: 3, ..Default::default() };
    let g = recall_lab::scoring::score_grid(&m, p, target, AblationKind::Subject, &noise).unwrap();
    assert_eq!(g.forward_passes, 1 + 3 * (1 + 4 * p.len()));
}
