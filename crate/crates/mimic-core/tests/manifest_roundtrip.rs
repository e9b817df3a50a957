//! Manifest round-trip identity over arbitrary query contents, including
//! unicode and control characters in every string field.

use std::collections::{BTreeMap, BTreeSet};

use mimic_core::annotations::ImageId;
use mimic_core::datasets::{
    read_manifest, write_manifest, Manifest, ManifestHeader, MANIFEST_FORMAT_VERSION,
};
use mimic_core::taskgen::{
    Balance, GroundTruth, ImageRole, QueryInstance, TaskKind, TaskSpec,
};
use proptest::prelude::*;

fn truth_strategy() -> impl Strategy<Value = GroundTruth> {
    let name = "[a-z]{1,8}( [a-z]{1,6})?";
    prop_oneof![
        proptest::collection::btree_map(name, 0u32..40, 1..4)
            .prop_map(|counts: BTreeMap<String, u32>| GroundTruth::Counting { counts }),
        proptest::collection::btree_set(name, 1..5)
            .prop_map(|classes: BTreeSet<String>| GroundTruth::Listing { classes }),
        name.prop_map(|class| GroundTruth::Common { class }),
        name.prop_map(|class| GroundTruth::OddOne { class }),
    ]
}

fn query_strategy() -> impl Strategy<Value = QueryInstance> {
    (
        "\\PC*",            // query id: arbitrary printable unicode
        "\\PC*",            // prompt
        truth_strategy(),
        proptest::collection::vec(("\\PC{1,12}", any::<bool>()), 1..8),
        any::<u64>(),
        any::<u32>(),
    )
        .prop_map(|(query_id, prompt, truth, image_roles, seed, object_instances)| {
            let kind = truth.kind();
            let total = image_roles.len() as u32;
            let spec = match kind {
                TaskKind::Counting => {
                    TaskSpec::counting(Balance::Unbalanced, 1, 1, total, None, seed)
                }
                TaskKind::Listing => TaskSpec::listing(Some("stuff".into()), 1, total, seed),
                TaskKind::Common => TaskSpec::common(total, seed),
                TaskKind::OddOne => TaskSpec::odd_one(total, 1, seed),
            };
            let (images, roles): (Vec<ImageId>, Vec<ImageRole>) = image_roles
                .into_iter()
                .enumerate()
                .map(|(i, (name, is_query))| {
                    (
                        ImageId(format!("{name}#{i}")),
                        if is_query { ImageRole::Query } else { ImageRole::Distractor },
                    )
                })
                .unzip();
            QueryInstance {
                query_id,
                kind,
                images,
                prompt,
                truth,
                spec,
                roles,
                object_instances,
                composition: None,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn write_then_read_is_identity(queries in proptest::collection::vec(query_strategy(), 1..6)) {
        let manifest = Manifest {
            header: ManifestHeader {
                format_version: MANIFEST_FORMAT_VERSION,
                seed: 99,
                min_box_fraction: 0.05,
                classes: vec!["dog".into(), "traffic light".into()],
                images: BTreeMap::new(),
                plan: None,
            },
            queries,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roundtrip.jsonl");
        write_manifest(&manifest, &path).unwrap();
        let reread = read_manifest(&path).unwrap();
        prop_assert_eq!(manifest, reread);
    }
}
