//! Ingest a raw interaction CSV, convert it into per-period affinity
//! targets, and split it chronologically — the full data pipeline.
//!
//! Run with `cargo run --example event_stream_conversion`.

use navis::ctdg::{
    build_candidate_index, chronological_split, convert_links_to_affinity, load_events,
    CandidateMode, EventFormat,
};

fn main() {
    // A tiny interaction stream: source,dest,time,weight.
    let csv = "\
source,dest,time,weight
1,2,0.0,1.0
1,3,0.4,2.0
2,3,0.9,1.0
1,2,1.1,1.0
2,1,1.5,1.0
1,3,2.2,3.0
2,3,2.4,1.0
1,2,2.8,1.0
2,1,3.3,2.0
1,3,3.9,1.0
";
    let dir = std::env::temp_dir().join("navis_conversion_example");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("events.csv");
    std::fs::write(&path, csv).unwrap();

    let stream = load_events(&path, EventFormat::Csv).unwrap();
    println!(
        "loaded {} events over {} nodes",
        stream.events.len(),
        stream.nodes.len()
    );

    let index = build_candidate_index(&stream, CandidateMode::AllNodes).unwrap();
    let seq = convert_links_to_affinity(&stream, 1.0, &index).unwrap();
    println!(
        "converted into {} labeled queries across {} periods of length 1.0\n",
        seq.queries.len(),
        seq.num_periods
    );

    for q in &seq.queries {
        println!(
            "period {}  node {}  target over {:?}: {:?}",
            q.period_index,
            q.node,
            index.ids(),
            q.target
                .scores
                .iter()
                .map(|v| (v * 1000.0).round() / 1000.0)
                .collect::<Vec<_>>()
        );
    }

    // Targets are normalized weight shares; each sums to 1.
    let (train, val, test) = chronological_split(&seq, [0.5, 0.25, 0.25]).unwrap();
    println!(
        "\nchronological split: {} train / {} val / {} test queries",
        train.queries.len(),
        val.queries.len(),
        test.queries.len()
    );
}
