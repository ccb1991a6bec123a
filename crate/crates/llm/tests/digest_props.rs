use olp_llm::embed::cosine;
use olp_llm::provider::{prompt_digest, ChatMessage};
use proptest::prelude::*;

proptest! {
    #[test]
    fn digest_ignores_whitespace_runs(words in prop::collection::vec("[a-z]{1,6}", 1..8), pads in prop::collection::vec(1usize..4, 8)) {
        let tight = words.join(" ");
        let loose: String = words.iter().zip(pads.iter().cycle()).map(|(w, &n)| format!("{w}{}", " \n\t".repeat(n))).collect();
        prop_assert_eq!(prompt_digest(&[ChatMessage::user(tight.clone())]), prompt_digest(&[ChatMessage::user(loose)]));
        prop_assert_ne!(prompt_digest(&[ChatMessage::user(tight.clone())]), prompt_digest(&[ChatMessage::system(tight)]));
    }

    #[test]
    fn cosine_is_bounded_and_symmetric(a in prop::collection::vec(-5.0f64..5.0, 4), b in prop::collection::vec(-5.0f64..5.0, 4)) {
        let c = cosine(&a, &b);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&c));
        prop_assert!((c - cosine(&b, &a)).abs() < 1e-12);
    }
}
