use proptest::prelude::*;
use signpipe_core::dialogue::{compose, BackendError, LlmBackend, MockBackend, PromptTemplate, RecognitionEvent};
use signpipe_core::gesture::DescriptorDb;
use signpipe_core::landmark::{parse_corpus, serialize_corpus, CorpusError, LandmarkFrame, LandmarkKind, SignSample};

fn coord() -> impl Strategy<Value = f32> {
    prop_oneof![8 => -3.0f32..3.0, 1 => Just(f32::NAN), 1 => any::<f32>().prop_filter("finite", |v| v.is_finite())]
}

fn sample(id: usize) -> impl Strategy<Value = SignSample> {
    (
        prop::collection::vec((0u32..3, 0usize..4, 0u32..468, coord(), coord(), coord()), 1..40),
        prop::option::of(0u32..250),
    )
        .prop_map(move |(rows, label)| {
            let mut frames: Vec<LandmarkFrame> = rows
                .into_iter()
                .map(|(f, k, i, x, y, z)| {
                    let kind = LandmarkKind::from_code(k as u8).unwrap();
                    LandmarkFrame::new(f, kind, i % kind.capacity(), x, y, z)
                })
                .collect();
            frames.sort_by_key(|f| f.frame);
            SignSample::new(format!("clip-{id}"), frames, label)
        })
}

fn corpus() -> impl Strategy<Value = Vec<SignSample>> {
    (0usize..5).prop_flat_map(|n| (0..n).map(sample).collect::<Vec<_>>())
}

proptest! {
    #[test]
    fn write_then_read_is_identity(samples in corpus()) {
        let mut buf = Vec::new();
        serialize_corpus(&samples, &mut buf).unwrap();
        let back = parse_corpus(buf.as_slice()).unwrap();
        prop_assert_eq!(&back, &samples);
        for s in &back {
            prop_assert!(s.frames.iter().all(|f| f.landmark_index < f.kind.capacity()));
        }
    }

    #[test]
    fn parsing_is_total(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
        match parse_corpus(bytes.as_slice()) {
            Ok(samples) => {
                for s in samples {
                    prop_assert!(s.validate(signpipe_core::landmark::NUM_CLASSES).is_ok());
                }
            }
            Err(CorpusError::Parse { line, .. } | CorpusError::Validation { line, .. }) => prop_assert!(line >= 1),
            Err(e) => prop_assert!(false, "unpositioned error {e}"),
        }
    }

    #[test]
    fn corrupted_row_reports_its_line(samples in corpus(), victim in any::<prop::sample::Index>()) {
        let mut buf = Vec::new();
        serialize_corpus(&samples, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        if lines.len() > 1 {
            let i = 1 + victim.index(lines.len() - 1);
            lines[i] = lines[i].replacen(',', ",bogus,", 1);
            let err = parse_corpus(lines.join("\n").as_bytes()).unwrap_err();
            match err {
                CorpusError::Parse { line, .. } | CorpusError::Validation { line, .. } => {
                    prop_assert_eq!(line, i as u64 + 1)
                }
                other => prop_assert!(false, "unexpected {other}"),
            }
        }
    }

    #[test]
    fn mock_compose_is_deterministic(gloss in "[a-z]{1,10}", pct in 0.0f64..=100.0, seed in any::<u64>()) {
        let db = DescriptorDb::sample();
        let event = RecognitionEvent::new(gloss, pct).unwrap();
        let run = || compose(&event, &db, &mut MockBackend::new(seed), &PromptTemplate::default(), 2).unwrap();
        let a = run();
        prop_assert_eq!(&a, &run());
        prop_assert!(!a.degraded);
        for tag in a.script.span_tags() {
            prop_assert!(db.contains(tag));
        }
    }

    #[test]
    fn retries_are_bounded(max_retries in 0usize..5, good_after in 0usize..8) {
        struct Flaky {
            calls: usize,
            good_after: usize,
        }
        impl LlmBackend for Flaky {
            fn complete(&mut self, _prompt: &str) -> Result<String, BackendError> {
                self.calls += 1;
                Ok(match self.calls {
                    1 => "Hello there.".into(),
                    n if n - 2 >= self.good_after => "[Yes] Hello there [/Yes].".into(),
                    _ => "[Bogus] Hello there [/Bogus].".into(),
                })
            }
        }
        let mut b = Flaky { calls: 0, good_after };
        let event = RecognitionEvent::new("hello", 70.0).unwrap();
        let c = compose(&event, &DescriptorDb::sample(), &mut b, &PromptTemplate::default(), max_retries).unwrap();
        prop_assert!(c.retries <= max_retries);
        prop_assert_eq!(b.calls, 2 + c.retries);
        prop_assert_eq!(c.degraded, good_after > max_retries);
        if c.degraded {
            prop_assert_eq!(c.tagged_text, "Hello there.");
        }
    }
}
