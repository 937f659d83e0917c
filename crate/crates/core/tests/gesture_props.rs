use proptest::prelude::*;
use signpipe_core::gesture::{
    parse_markup, playtime_stats, schedule, strip_bracket_tokens, strip_tags, to_markup, DescriptorDb,
    GestureDescriptor, PlaytimeStats, Segment, TaggedScript, TimelineEvent,
};

const TAGS: [&str; 4] = ["Yes", "No", "Wave", "Point"];

fn db() -> DescriptorDb {
    let d = |tag: &str, playtime_s: f64, parts: &[&str]| GestureDescriptor {
        tag: tag.into(),
        description: format!("{tag} gesture"),
        playtime_s,
        body_parts: parts.iter().map(|s| s.to_string()).collect(),
    };
    DescriptorDb::new(vec![
        d("Yes", 1.12, &["Neck", "Head"]),
        d("No", 1.45, &["Head"]),
        d("Wave", 2.0, &["Right Arm", "Right Hand"]),
        d("Point", 0.8, &["Right Arm"]),
    ])
    .unwrap()
}

fn text() -> impl Strategy<Value = String> {
    "[a-z ,.!?]{0,24}"
}

fn script() -> impl Strategy<Value = TaggedScript> {
    prop::collection::vec((prop::option::of(0..TAGS.len()), text()), 0..8).prop_map(|parts| {
        let mut segments: Vec<Segment> = Vec::new();
        for (tag, text) in parts {
            match tag {
                Some(i) => segments.push(Segment::Span {
                    tag: TAGS[i].into(),
                    text,
                }),
                // adjacent plain runs would merge on re-parse
                None if text.is_empty() => {}
                None => match segments.last_mut() {
                    Some(Segment::Plain { text: prev }) => prev.push_str(&text),
                    _ => segments.push(Segment::Plain { text }),
                },
            }
        }
        TaggedScript { segments }
    })
}

/// Arbitrary text sprinkled with well-formed and broken bracket tokens.
fn noisy_markup() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop_oneof![
            text(),
            (0..TAGS.len()).prop_map(|i| format!("[{}]", TAGS[i])),
            (0..TAGS.len()).prop_map(|i| format!("[/{}]", TAGS[i])),
            Just("[Bogus]".to_string()),
            Just("[".to_string()),
            Just("]".to_string()),
        ],
        0..10,
    )
    .prop_map(|parts| parts.concat())
}

fn word_count(script: &TaggedScript) -> usize {
    script
        .segments
        .iter()
        .flat_map(|s| s.text().split_whitespace())
        .filter(|w| !w.chars().all(|c| ".,!?;:".contains(c)))
        .count()
}

proptest! {
    #[test]
    fn serialize_parse_fixpoint(s in script()) {
        let db = db();
        let text = to_markup(&s);
        let parsed = parse_markup(&text, &db).unwrap();
        prop_assert_eq!(&parsed, &s);
        prop_assert_eq!(to_markup(&parsed), text);
    }

    #[test]
    fn strip_agrees_with_token_removal(text in noisy_markup()) {
        if let Ok(s) = parse_markup(&text, &db()) {
            prop_assert_eq!(strip_tags(&s), strip_bracket_tokens(&text));
        }
        prop_assert!(!strip_bracket_tokens(&text).contains('['));
    }

    #[test]
    fn errors_point_at_a_bracket(text in noisy_markup()) {
        if let Err(e) = parse_markup(&text, &db()) {
            prop_assert_eq!(text.as_bytes()[e.offset], b'[');
        }
    }

    #[test]
    fn schedule_properties(s in script(), wpm in 60.0f64..300.0) {
        let db = db();
        let t = schedule(&s, &db, wpm).unwrap();
        let expected = word_count(&s) as f64 * 60.0 / wpm;
        prop_assert!((t.speech_duration_s() - expected).abs() <= 1e-9);
        for w in t.events.windows(2) {
            prop_assert!(w[0].start_s() <= w[1].start_s());
        }
        let mut gestures = 0;
        for e in &t.events {
            prop_assert!(e.duration_s() > 0.0);
            if let TimelineEvent::Gesture { tag, duration_s, .. } = e {
                prop_assert_eq!(*duration_s, db.get(tag).unwrap().playtime_s);
                gestures += 1;
            }
        }
        prop_assert_eq!(gestures, s.span_tags().len());
    }

    #[test]
    fn playtime_stats_are_ordered(times in prop::collection::vec(0.01f64..60.0, 1..200)) {
        let entries = times
            .iter()
            .enumerate()
            .map(|(i, &p)| GestureDescriptor {
                tag: format!("G{i}"),
                description: String::new(),
                playtime_s: p,
                body_parts: vec!["Head".into()],
            })
            .collect();
        let s = playtime_stats(&DescriptorDb::new(entries).unwrap()).unwrap();
        prop_assert!(s.min <= s.p25 && s.p25 <= s.p50 && s.p50 <= s.p75 && s.p75 <= s.max);
        prop_assert!(s.min <= s.mean && s.mean <= s.max);
        prop_assert!(s.std >= 0.0);
    }
}

#[test]
fn four_value_fixture() {
    // hand computed: mean 2.5, sample variance 5/3, quantile positions 0.75, 1.5, 2.25
    let s = PlaytimeStats::from_values(&[4.0, 1.0, 3.0, 2.0]).unwrap();
    assert_eq!(s.mean, 2.5);
    assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    assert_eq!([s.min, s.p25, s.p50, s.p75, s.max], [1.0, 1.75, 2.5, 3.25, 4.0]);
}

#[test]
fn sample_db_round_trips_through_json() {
    let db = DescriptorDb::sample();
    assert_eq!(DescriptorDb::from_json(&db.to_json()).unwrap(), db);
    let s = playtime_stats(&db).unwrap();
    assert!(s.min <= s.p25 && s.p25 <= s.p50 && s.p50 <= s.p75 && s.p75 <= s.max);
}
