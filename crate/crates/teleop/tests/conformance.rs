use coopath_teleop::protocol::{decode_client, decode_server, encode_client, encode_server};
use serde_json::Value;

fn fixture() -> Vec<(String, Value)> {
    include_str!("fixtures/conformance.jsonl")
        .lines()
        .map(|line| {
            let v: Value = serde_json::from_str(line).unwrap();
            (v["dir"].as_str().unwrap().to_string(), v["frame"].clone())
        })
        .collect()
}

#[test]
fn every_fixture_frame_round_trips() {
    let frames = fixture();
    assert!(frames.len() >= 10);
    for (dir, frame) in frames {
        let text = frame.to_string();
        let encoded = match dir.as_str() {
            "client" => encode_client(&decode_client(&text).unwrap()),
            "server" => encode_server(&decode_server(&text).unwrap()),
            other => panic!("bad direction {other}"),
        };
        let back: Value = serde_json::from_str(&encoded).unwrap();
        assert_eq!(back, frame, "{text}");
    }
}

#[test]
fn fixture_covers_every_client_kind() {
    let kinds: std::collections::BTreeSet<String> = fixture()
        .into_iter()
        .filter(|(d, _)| d == "client")
        .map(|(_, f)| f["kind"].as_str().unwrap().to_string())
        .collect();
    let expected = ["count_submit", "mode_set", "override", "reset", "stick"];
    assert_eq!(kinds.into_iter().collect::<Vec<_>>(), expected);
}

#[test]
fn added_fields_do_not_break_decoding() {
    for (dir, mut frame) in fixture() {
        frame["future_field"] = Value::from("x");
        let text = frame.to_string();
        let ok = match dir.as_str() {
            "client" => decode_client(&text).is_ok(),
            _ => decode_server(&text).is_ok(),
        };
        assert!(ok, "{text}");
    }
}
