use std::collections::BTreeMap;

use super::{Granularity, LabelSpace};

/// MISC turn-level label space: 11 grouped codes over the raw MISC codes.
pub fn misc_label_space() -> LabelSpace {
    let codes = ["FA", "GI", "QUC", "QUO", "REC", "RES", "MIA", "MIN", "FN", "POS", "NEG"];
    let raw_groups: [(&str, &str); 28] = [
        ("Facilitate", "FA"),
        ("Giving information", "GI"),
        ("Closed question", "QUC"),
        ("Open question", "QUO"),
        ("Complex reflection", "REC"),
        ("Simple reflection", "RES"),
        ("Affirm", "MIA"),
        ("Reframe", "MIA"),
        ("Emphasize control", "MIA"),
        ("Support", "MIA"),
        ("Filler", "MIA"),
        ("Advice with permission", "MIA"),
        ("Structure", "MIA"),
        ("Raise concern with permission", "MIA"),
        ("Confront", "MIN"),
        ("Direct", "MIN"),
        ("Advice without permission", "MIN"),
        ("Warn", "MIN"),
        ("Raise concern without permission", "MIN"),
        ("Follow/Neutral", "FN"),
        ("Change talk: Reasons", "POS"),
        ("Change talk: Commitments", "POS"),
        ("Change talk: Taking steps", "POS"),
        ("Change talk: Other", "POS"),
        ("Sustain talk: Reasons", "NEG"),
        ("Sustain talk: Commitments", "NEG"),
        ("Sustain talk: Taking steps", "NEG"),
        ("Sustain talk: Other", "NEG"),
    ];
    let grouping: BTreeMap<String, String> = raw_groups
        .iter()
        .map(|(raw, group)| (raw.to_string(), group.to_string()))
        .collect();
    LabelSpace {
        task: "MISC".to_string(),
        granularity: Granularity::Turn,
        codes: codes.iter().map(|c| c.to_string()).collect(),
        grouping,
        binarize_threshold: None,
    }
}

/// CTRS session-level label space: 11 codes on a 0-6 scale, binarized at >= 3.
pub fn ctrs_label_space() -> LabelSpace {
    let codes = ["AG", "AT", "CO", "FB", "GD", "HW", "IP", "KC", "PT", "SC", "UN"];
    LabelSpace {
        task: "CTRS".to_string(),
        granularity: Granularity::Session,
        codes: codes.iter().map(|c| c.to_string()).collect(),
        grouping: BTreeMap::new(),
        binarize_threshold: Some(3),
    }
}
