use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use syllab_core::alphabet::LETTERS;
use syllab_core::corpus::{format_corpus, parse_corpus, split, SplitSpec, SyllabifiedWord};
use syllab_core::crf::{crf_log_partition, crf_nll, crf_sequence_score, viterbi_decode, CrfLayer, NUM_TAGS};
use syllab_core::eval::{accuracy_percent, word_accuracy};
use syllab_core::model::Syllabifier;
use syllab_core::nn::checkpoint::Checkpoint;
use syllab_core::nn::tagger::{ModelKind, Tagger, TaggerConfig};
use syllab_core::nn::vocab::Vocabulary;
use syllab_core::nn::Tensor;
use syllab_core::seq2seq::{Seq2SeqConfig, Seq2SeqModel};
use syllab_core::tagging::{decode_tags, encode_tags, Tag};

fn letter() -> impl Strategy<Value = char> {
    prop::sample::select(LETTERS.to_vec())
}

fn syllable() -> impl Strategy<Value = String> {
    (any::<bool>(), prop::collection::vec(letter(), 1..5))
        .prop_map(|(marker, letters)| if marker { "-" } else { "" }.to_string() + &letters.into_iter().collect::<String>())
}

fn word() -> impl Strategy<Value = SyllabifiedWord> {
    prop::collection::vec(syllable(), 1..7).prop_map(|s| SyllabifiedWord::from_syllables(&s).unwrap())
}

fn emissions(t: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-4.0f64..4.0, t * NUM_TAGS).prop_map(move |d| Tensor::from_vec(&[t, NUM_TAGS], d).unwrap())
}

fn crf_layer() -> impl Strategy<Value = CrfLayer> {
    prop::collection::vec(-2.0f64..2.0, 15).prop_map(|d| {
        let mut layer = CrfLayer::zeros(NUM_TAGS);
        layer.transitions.data_mut().copy_from_slice(&d[..9]);
        layer.left.data_mut().copy_from_slice(&d[9..12]);
        layer.right.data_mut().copy_from_slice(&d[12..]);
        layer
    })
}

proptest! {
    #[test]
    fn codec_round_trips(w in word()) {
        let tags = encode_tags(&w).unwrap();
        prop_assert_eq!(tags.len(), w.surface().chars().filter(|&c| c != '-').count());
        prop_assert_eq!(tags.start_count(), w.syllable_count());
        prop_assert_eq!(decode_tags(w.surface(), &tags).unwrap(), w);
    }

    #[test]
    fn corpus_format_round_trips(words in prop::collection::vec(word(), 1..20)) {
        prop_assert_eq!(parse_corpus(&format_corpus(&words)).unwrap(), words);
    }

    #[test]
    fn split_partitions_everything(n in 1usize..3000, seed in any::<u64>()) {
        let items: Vec<usize> = (0..n).collect();
        let parts = split(&items, &SplitSpec::standard(seed)).unwrap();
        let mut all: Vec<usize> = parts.train.iter().chain(&parts.valid).chain(&parts.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, items);
        prop_assert_eq!(parts.valid.len(), n / 10);
    }

    #[test]
    fn crf_nll_is_nonnegative_and_viterbi_is_consistent(
        (em, gold) in (1usize..8).prop_flat_map(|t| (emissions(t), prop::collection::vec(0usize..2, t))),
        layer in crf_layer(),
    ) {
        let (loss, _) = crf_nll(&em, &gold, &layer).unwrap();
        prop_assert!(loss >= -1e-12);
        let (path, score) = viterbi_decode(&em, &layer).unwrap();
        prop_assert!((crf_sequence_score(&em, &path, &layer).unwrap() - score).abs() < 1e-9);
        prop_assert!(score <= crf_log_partition(&em, &layer).unwrap() + 1e-12);
        prop_assert!(crf_sequence_score(&em, &gold, &layer).unwrap() <= score + 1e-12);
    }

    #[test]
    fn report_counts_are_consistent(words in prop::collection::vec(word(), 1..30), flips in prop::collection::vec(any::<bool>(), 30)) {
        let preds: Vec<Vec<Tag>> = words
            .iter()
            .zip(&flips)
            .map(|(w, &flip)| {
                let mut t = encode_tags(w).unwrap().tags().to_vec();
                if flip {
                    t.push(Tag::C);
                }
                t
            })
            .collect();
        let r = word_accuracy(&preds, &words).unwrap();
        prop_assert_eq!(r.total - r.correct, r.errors.len());
        prop_assert_eq!(r.accuracy, accuracy_percent(r.correct, r.total));
        prop_assert_eq!(r.correct, flips[..words.len()].iter().filter(|f| !**f).count());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn untrained_models_yield_valid_outputs(seed in any::<u64>(), words in prop::collection::vec(word(), 1..6)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = Vocabulary::standard();
        let surfaces: Vec<&str> = words.iter().map(|w| w.surface()).collect();
        let cfg = TaggerConfig { kind: ModelKind::BlstmCrf, vocab_size: 27, embedding_dim: 4, hidden_dim: 3 };
        let tagger = Syllabifier::Tagger(Tagger::new(&mut rng, cfg).unwrap());
        for (p, w) in tagger.predict(&vocab, &surfaces, 4).unwrap().iter().zip(&words) {
            prop_assert_eq!(p.tags.len(), encode_tags(w).unwrap().len());
            prop_assert_eq!(p.tags[0], Tag::S);
            prop_assert_eq!(p.word.as_ref().unwrap().surface(), w.surface());
        }
        let cfg = Seq2SeqConfig { source_vocab: 27, embedding_dim: 4, units: 3, attention_dim: 3 };
        let s2s = Syllabifier::Seq2Seq(Seq2SeqModel::new(&mut rng, cfg).unwrap());
        for (p, w) in s2s.predict(&vocab, &surfaces, 4).unwrap().iter().zip(&words) {
            let trace = p.trace.as_ref().unwrap();
            prop_assert!(trace.weights.len() <= 2 * w.surface().chars().count());
            for row in &trace.weights {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(row.iter().all(|&x| x >= 0.0));
            }
        }
        let mut buf = Vec::new();
        s2s.to_checkpoint(&vocab).unwrap().write_to(&mut buf).unwrap();
        let back = Syllabifier::from_checkpoint(&Checkpoint::read_from(&mut buf.as_slice()).unwrap()).unwrap();
        prop_assert_eq!(back, s2s);
    }
}
