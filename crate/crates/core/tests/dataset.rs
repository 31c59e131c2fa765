mod common;

use hcascade_core::{
    general_of, load_dataset, save_dataset, AnnotatedImage, BoundingBox, Dataset, Error, GroundTruthObject,
};
use proptest::prelude::*;

use common::five_pairs;

#[derive(Debug, Clone, Copy)]
enum Corruption {
    DuplicateId,
    UnknownLabel,
    BoxOutOfBounds,
    NegativeExtent,
    ZeroWidth,
    UnknownSequenceId,
    RepeatedSequenceId,
}

fn corruption() -> impl Strategy<Value = Option<Corruption>> {
    prop_oneof![
        3 => Just(None),
        1 => prop_oneof![
            Just(Corruption::DuplicateId),
            Just(Corruption::UnknownLabel),
            Just(Corruption::BoxOutOfBounds),
            Just(Corruption::NegativeExtent),
            Just(Corruption::ZeroWidth),
            Just(Corruption::UnknownSequenceId),
            Just(Corruption::RepeatedSequenceId),
        ]
        .prop_map(Some),
    ]
}

// (label index, x, y, w, h) as fractions of a 640x480 image
fn object() -> impl Strategy<Value = (usize, f64, f64, f64, f64)> {
    (0usize..10, 0.0..0.5f64, 0.0..0.5f64, 0.01..0.5f64, 0.01..0.5f64)
}

fn build(objects: Vec<Vec<(usize, f64, f64, f64, f64)>>, with_sequences: bool) -> Dataset {
    let tax = five_pairs();
    let fines: Vec<String> = tax.fine_labels().map(str::to_string).collect();
    let images: Vec<AnnotatedImage> = objects
        .into_iter()
        .enumerate()
        .map(|(i, objs)| AnnotatedImage {
            id: format!("im{i}"),
            width: 640.0,
            height: 480.0,
            objects: objs
                .into_iter()
                .map(|(l, x, y, w, h)| {
                    GroundTruthObject::new(fines[l].clone(), BoundingBox::new(x * 640.0, y * 480.0, w * 640.0, h * 480.0))
                })
                .collect(),
        })
        .collect();
    let sequences = with_sequences.then(|| {
        images
            .chunks(3)
            .map(|c| c.iter().map(|img| img.id.clone()).collect())
            .collect()
    });
    Dataset {
        taxonomy: tax,
        images,
        sequences,
    }
}

fn corrupt(d: &mut Dataset, c: Corruption) {
    let first_with_object = d.images.iter().position(|i| !i.objects.is_empty()).unwrap();
    match c {
        Corruption::DuplicateId => {
            let id = d.images[0].id.clone();
            d.images.last_mut().unwrap().id = id;
        }
        Corruption::UnknownLabel => d.images[first_with_object].objects[0].fine_label = "canoo".into(),
        Corruption::BoxOutOfBounds => {
            let b = &mut d.images[first_with_object].objects[0].bbox;
            b.x = 640.0 - b.w / 2.0;
        }
        Corruption::NegativeExtent => d.images[first_with_object].objects[0].bbox.h = -1.0,
        Corruption::ZeroWidth => d.images[0].width = 0.0,
        Corruption::UnknownSequenceId => d.sequences.get_or_insert_with(Vec::new).push(vec!["ghost".into()]),
        Corruption::RepeatedSequenceId => {
            let id = d.images[0].id.clone();
            d.sequences.get_or_insert_with(Vec::new).push(vec![id.clone(), id]);
        }
    }
}

proptest! {
    #[test]
    fn load_accepts_exactly_the_valid_files(
        objects in prop::collection::vec(prop::collection::vec(object(), 0..4), 2..12)
            .prop_filter("needs an object", |imgs| imgs.iter().any(|o| !o.is_empty())),
        with_sequences in any::<bool>(),
        fault in corruption(),
    ) {
        let mut d = build(objects, with_sequences);
        if let Some(c) = fault {
            corrupt(&mut d, c);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        std::fs::write(&path, serde_json::to_string(&d).unwrap()).unwrap();
        let loaded = load_dataset(&path);
        match fault {
            None => {
                let loaded = loaded.unwrap();
                prop_assert_eq!(&loaded, &d);
                for img in &loaded.images {
                    for o in &img.objects {
                        prop_assert!(o.bbox.fits_within(img.width, img.height));
                    }
                }
            }
            Some(c) => prop_assert!(loaded.is_err(), "{:?} accepted", c),
        }
    }

    #[test]
    fn save_load_round_trip(
        objects in prop::collection::vec(prop::collection::vec(object(), 0..3), 1..8),
        with_sequences in any::<bool>(),
    ) {
        let d = build(objects, with_sequences);
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        save_dataset(&d, &a).unwrap();
        let loaded = load_dataset(&a).unwrap();
        prop_assert_eq!(&loaded, &d);
        save_dataset(&loaded, &b).unwrap();
        prop_assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}

#[test]
fn invalid_image_errors_name_the_image() {
    let mut d = build(vec![vec![(0, 0.1, 0.1, 0.2, 0.2)], vec![(1, 0.1, 0.1, 0.2, 0.2)]], false);
    d.images[1].objects[0].fine_label = "canoo".into();
    match Dataset::from_json(&serde_json::to_string(&d).unwrap(), "test") {
        Err(Error::InvalidImage { image, .. }) => assert_eq!(image, "im1"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn malformed_json_is_a_parse_error() {
    assert!(matches!(Dataset::from_json("{\"images\": [", "test"), Err(Error::Parse { .. })));
}

#[test]
fn general_of_is_total_and_never_negative() {
    let tax = five_pairs();
    for fine in tax.fine_labels() {
        let g = general_of(&tax, fine).unwrap();
        assert_ne!(g, tax.negative_label);
        assert!(tax.fine_of(g).unwrap().iter().any(|f| f == fine));
    }
    assert!(matches!(general_of(&tax, "negative"), Err(Error::UnknownLabel(_))));
}
