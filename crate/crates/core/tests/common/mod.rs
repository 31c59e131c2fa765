#![allow(dead_code)]

use std::collections::BTreeMap;

use hcascade_core::detector::calibrate::{baseline_profile, stage1_profile, stage2_profile, Calibration};
use hcascade_core::detector::SimulatedDetector;
use hcascade_core::seeding::derive_seed;
use hcascade_core::synth::{synthesize, SynthConfig};
use hcascade_core::{ClassTaxonomy, Dataset};

pub fn five_pairs() -> ClassTaxonomy {
    let pairs = [
        ("dog", ["Pekinese", "Spaniel"]),
        ("planet", ["Mars", "Saturn"]),
        ("bike", ["sport bike", "mountain bike"]),
        ("boat", ["kayak", "canoe"]),
        ("bird", ["swan", "duck"]),
    ];
    ClassTaxonomy::new(
        pairs
            .iter()
            .map(|(g, f)| (g.to_string(), f.iter().map(|s| s.to_string()).collect())),
        "negative",
    )
    .unwrap()
}

pub fn synth(per_class: usize, negatives: usize, seq_len: Option<usize>, seed: u64) -> Dataset {
    let mut cfg = SynthConfig::new(five_pairs(), per_class, negatives);
    cfg.seq_len = seq_len;
    synthesize(&cfg, seed).unwrap()
}

pub struct Cascade {
    pub stage1: SimulatedDetector,
    pub stage2: BTreeMap<String, SimulatedDetector>,
}

pub fn calibrated_cascade(tax: &ClassTaxonomy, cal: &Calibration, seed: u64) -> Cascade {
    let stage1 = SimulatedDetector::new(stage1_profile(tax, cal).unwrap(), derive_seed(seed, "stage1"))
        .unwrap()
        .with_taxonomy(tax.clone());
    let stage2 = tax
        .general_labels()
        .map(|g| {
            let det = SimulatedDetector::new(
                stage2_profile(tax, g, cal).unwrap(),
                derive_seed(seed, &format!("stage2/{g}")),
            )
            .unwrap();
            (g.to_string(), det)
        })
        .collect();
    Cascade { stage1, stage2 }
}

pub fn calibrated_baseline(tax: &ClassTaxonomy, cal: &Calibration, seed: u64) -> SimulatedDetector {
    SimulatedDetector::new(baseline_profile(tax, cal).unwrap(), derive_seed(seed, "baseline")).unwrap()
}
