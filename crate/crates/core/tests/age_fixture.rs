use std::fs;
use std::path::PathBuf;

use voxmeta_core::age::{
    age_histogram, build_triplets, select_ages, write_triplets_csv, ReliabilityTier, SpeakerAgePair, TripletSummary,
    DEFAULT_BIN_EDGES,
};
use voxmeta_core::consensus::read_consensus_csv;
use voxmeta_core::ingest::{parse_video_meta, ParseOptions};
use voxmeta_core::SpeakerId;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/age")
        .join(name)
}

fn triplets() -> (Vec<voxmeta_core::age::AgeTriplet>, TripletSummary, usize) {
    let consensus = read_consensus_csv(fs::File::open(fixture("consensus.csv")).unwrap()).unwrap();
    let videos = parse_video_meta(
        std::io::BufReader::new(fs::File::open(fixture("videos.jsonl")).unwrap()),
        "videos.jsonl",
        &ParseOptions { current_year: 2024 },
    )
    .unwrap();
    let (t, s) = build_triplets(&consensus, &videos.records).unwrap();
    (t, s, videos.rejects.len())
}

#[test]
fn triplets_match_hand_built_csv() {
    let (t, _, _) = triplets();
    let mut out = Vec::new();
    write_triplets_csv(&mut out, &t).unwrap();
    assert_eq!(
        String::from_utf8(out).unwrap(),
        fs::read_to_string(fixture("expected_triplets.csv")).unwrap()
    );
}

#[test]
fn summary_accounts_for_every_candidate() {
    let (_, s, rejects) = triplets();
    let expected: TripletSummary =
        serde_json::from_str(&fs::read_to_string(fixture("expected_summary.json")).unwrap()).unwrap();
    assert_eq!(s, expected);
    assert_eq!(rejects, 2);
}

#[test]
fn multi_video_speaker_keeps_each_age() {
    let (t, _, _) = triplets();
    let ages: Vec<u32> = t
        .iter()
        .filter(|x| x.speaker_id.as_str() == "id10001")
        .map(|x| x.age)
        .collect();
    assert_eq!(ages, vec![24, 27, 33]);
    assert!(t.iter().all(|x| x.tier != ReliabilityTier::None));
    assert!(!t.iter().any(|x| x.youtube_id == "tr2014fffff"));
}

// Histogram convention: interval (lower, upper], so an age equal to an edge
// belongs to the bin it closes.
fn bin_of(age: u32) -> usize {
    DEFAULT_BIN_EDGES
        .windows(2)
        .position(|w| w[0] < age && age <= w[1])
        .unwrap()
}

#[test]
fn histogram_uses_left_open_bins() {
    let pair = |age| SpeakerAgePair {
        speaker_id: SpeakerId::new("x"),
        age,
        source_triplet: "v".into(),
        tier: ReliabilityTier::Strict,
    };
    let h = age_histogram(&[pair(30)], &DEFAULT_BIN_EDGES).unwrap();
    assert_eq!(h.count_for(20, 30), Some(1));
    assert_eq!(h.count_for(30, 40), Some(0));
    let h = age_histogram(&[pair(10), pair(92)], &DEFAULT_BIN_EDGES).unwrap();
    assert_eq!(h.count_for(0, 10), Some(1));
    assert_eq!(h.count_for(80, 92), Some(1));
}

#[test]
fn histogram_of_selected_ages_matches_fixture() {
    let (t, _, _) = triplets();
    let pairs = select_ages(&t, 7).unwrap();
    assert_eq!(pairs.len(), 5);
    for p in &pairs {
        assert!(t
            .iter()
            .any(|x| x.speaker_id == p.speaker_id && x.age == p.age && x.youtube_id == p.source_triplet));
    }
    let h = age_histogram(&pairs, &DEFAULT_BIN_EDGES).unwrap();
    let mut oracle = vec![0usize; DEFAULT_BIN_EDGES.len() - 1];
    for p in &pairs {
        oracle[bin_of(p.age)] += 1;
    }
    assert_eq!(h.counts, oracle);
    let mut out = Vec::new();
    h.write_csv(&mut out).unwrap();
    assert_eq!(
        String::from_utf8(out).unwrap(),
        fs::read_to_string(fixture("expected_histogram_seed7.csv")).unwrap()
    );
    assert_eq!(pairs, select_ages(&t, 7).unwrap());
}
