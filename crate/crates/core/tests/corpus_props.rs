mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use wugbench::corpus::{
    parse_dataset, parse_wug_file, split_dataset, write_dataset, write_wug_file, InflectionExample, Language,
    SplitRatios,
};

fn language() -> impl Strategy<Value = Language> {
    prop_oneof![Just(Language::En), Just(Language::De)]
}

fn examples(lang: Language, n: usize, seed: u64) -> Vec<InflectionExample> {
    match lang {
        Language::En => common::english_examples(n, seed),
        Language::De => common::german_examples(n, seed),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dataset_serialization_is_canonical(lang in language(), n in 1usize..80, seed in 0u64..1000) {
        let data = examples(lang, n, seed);
        let text = write_dataset(&data, lang);
        let parsed = parse_dataset(&text, lang).unwrap();
        prop_assert_eq!(&parsed, &data);
        prop_assert_eq!(write_dataset(&parsed, lang), text);
    }

    #[test]
    fn wug_serialization_is_canonical(lang in language(), n in 1usize..15, seed in 0u64..1000) {
        let set = match lang {
            Language::En => common::english_wugs(n, seed),
            Language::De => common::german_wugs(n, seed),
        };
        let text = write_wug_file(&set);
        let parsed = parse_wug_file(&text).unwrap();
        prop_assert_eq!(&parsed, &set);
        prop_assert_eq!(write_wug_file(&parsed), text);
    }

    #[test]
    fn split_partitions_lemmas(lang in language(), n in 10usize..150, seed in 0u64..1000, split_seed in 0u64..50) {
        let data = examples(lang, n, seed);
        let s = split_dataset(&data, SplitRatios::default(), split_seed, lang == Language::En).unwrap();
        prop_assert_eq!(s.train.len() + s.dev.len() + s.test.len(), data.len());
        let lemmas = |xs: &[InflectionExample]| xs.iter().map(|x| x.lemma.clone()).collect::<BTreeSet<_>>();
        let (tr, dv, te) = (lemmas(&s.train), lemmas(&s.dev), lemmas(&s.test));
        prop_assert!(tr.is_disjoint(&dv) && tr.is_disjoint(&te) && dv.is_disjoint(&te));
        let again = split_dataset(&data, SplitRatios::default(), split_seed, lang == Language::En).unwrap();
        prop_assert_eq!(s, again);
    }
}
