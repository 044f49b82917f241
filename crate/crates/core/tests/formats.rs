use srdl::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Stage};
use srdl::data::{decode_idx, encode_idx, load_csv, load_idx_images, write_csv, CsvSchema, Dataset, Split};
use srdl::knowledge::{KnowledgeSource, KnowledgeStore};
use srdl::model::{init_params, Architecture, ModelSpec};
use srdl::rng::{stream, RngState};
use srdl::Error;

fn checkpoint() -> Checkpoint {
    let spec = ModelSpec {
        arch: Architecture::SmallCnn {
            channels: vec![2, 3],
            strides: vec![1, 2],
        },
        input_shape: vec![1, 5, 5],
        classes: 4,
    };
    Checkpoint {
        params: init_params(&spec, 11).unwrap(),
        spec,
        stage: Stage::Stage1Final,
        epoch: 30,
        rng: RngState::capture(&stream(5, "shuffle", 30)),
    }
}

#[test]
fn idx_first_record_matches_hand_decoding() {
    // two 2×3 images, labels 7 and 0
    let img: Vec<u8> = vec![
        0x00, 0x00, 0x08, 0x03, 0x00, 0x00, 0x00, 0x02, //
        0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x03, //
        0x00, 0x33, 0x66, 0x99, 0xcc, 0xff, //
        0x01, 0x02, 0x03, 0x04, 0x05, 0x06,
    ];
    let lab: Vec<u8> = vec![0x00, 0x00, 0x08, 0x01, 0x00, 0x00, 0x00, 0x02, 0x07, 0x00];
    let ds = decode_idx(&img, &lab, Some(10), Split::Train).unwrap();
    assert_eq!(ds.len(), 2);
    assert_eq!(ds.feature_shape(), &[1, 2, 3]);
    assert_eq!(ds.labels(), &[7, 0]);
    assert_eq!(ds.ids(), &[0, 1]);
    assert_eq!(ds.features(0), &[0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
    assert_eq!(ds.features(1)[5], 6.0 / 255.0);

    let (img2, lab2) = encode_idx(&img[16..], &lab[8..], 2, 3);
    assert_eq!(img2, img);
    assert_eq!(lab2, lab);
}

#[test]
fn idx_rejects_bad_headers() {
    let (img, lab) = encode_idx(&[1, 2, 3, 4], &[1], 2, 2);
    let mut swapped = img.clone();
    swapped[3] = 0x01;
    assert!(matches!(decode_idx(&swapped, &lab, None, Split::Test), Err(Error::Format(_))));
    assert!(matches!(decode_idx(&img[..18], &lab, None, Split::Test), Err(Error::Integrity(_))));
    let (_, lab3) = encode_idx(&[0; 8], &[1, 2], 2, 2);
    assert!(matches!(decode_idx(&img, &lab3, None, Split::Test), Err(Error::Integrity(_))));
}

#[test]
fn idx_files_load_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = encode_idx(&[10, 20, 30, 40, 50, 60, 70, 80], &[3, 1], 2, 2);
    std::fs::write(dir.path().join("i"), &img).unwrap();
    std::fs::write(dir.path().join("l"), &lab).unwrap();
    let ds = load_idx_images(dir.path().join("i"), dir.path().join("l"), None, Split::Train).unwrap();
    assert_eq!(ds.classes(), 4);
    assert!(ds.is_image());
    assert_eq!(ds.features(1), &[50.0 / 255.0, 60.0 / 255.0, 70.0 / 255.0, 80.0 / 255.0]);
}

#[test]
fn checkpoint_round_trips_bit_exactly() {
    let ckpt = checkpoint();
    let bytes = ckpt.to_bytes();
    assert_eq!(&bytes[..8], b"SRDL\x01\x00\x00\x00");
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back, ckpt);
    assert_eq!(back.to_bytes(), bytes);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ckpt");
    save_checkpoint(&ckpt, &path).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap(), ckpt);
}

#[test]
fn checkpoint_detects_damage() {
    let bytes = checkpoint().to_bytes();
    let truncated = &bytes[..bytes.len() - 9];
    assert!(matches!(Checkpoint::from_bytes(truncated), Err(Error::Integrity(_))));

    let mut flipped = bytes.clone();
    let mid = bytes.len() / 2;
    flipped[mid] ^= 0x10;
    assert!(matches!(Checkpoint::from_bytes(&flipped), Err(Error::Integrity(_))));

    let mut newer = bytes.clone();
    newer[4] = 2;
    assert!(matches!(
        Checkpoint::from_bytes(&newer),
        Err(Error::UnsupportedVersion { found: 2, supported: 1 })
    ));

    let mut magic = bytes;
    magic[0] = b'X';
    assert!(matches!(Checkpoint::from_bytes(&magic), Err(Error::Format(_))));
}

#[test]
fn knowledge_layout_is_stable() {
    let mut k = KnowledgeStore::new(2, 3.0, Some(KnowledgeSource::SelfStage1)).unwrap();
    k.push(9, &[0.25, 0.75]).unwrap();
    let bytes = k.to_bytes();
    let expected: Vec<u8> = [
        &b"SRKN"[..],
        &[1, 0, 0, 0],
        &[1, 0, 0, 0, 0, 0, 0, 0],
        &[2, 0, 0, 0],
        &3.0f64.to_le_bytes(),
        &[9, 0, 0, 0, 0, 0, 0, 0],
        &0.25f32.to_le_bytes(),
        &0.75f32.to_le_bytes(),
    ]
    .concat();
    assert_eq!(bytes, expected);
    let back = KnowledgeStore::from_bytes(&bytes).unwrap();
    assert_eq!(back.row(9).unwrap(), &[0.25, 0.75]);
    assert_eq!(back.temperature(), 3.0);
    assert_eq!(back.to_bytes(), bytes);
}

#[test]
fn knowledge_round_trips_and_rejects_damage() {
    let mut k = KnowledgeStore::new(3, 2.0, None).unwrap();
    for id in [4u64, 1, 77] {
        let a = id as f32 / 200.0;
        k.push(id, &[a, 0.5, 0.5 - a]).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k.srkn");
    k.save(&path).unwrap();
    let back = KnowledgeStore::load(&path).unwrap();
    assert_eq!(back.ids(), &[4, 1, 77]);
    let expected = [k.row(77).unwrap(), k.row(4).unwrap()].concat();
    assert_eq!(back.gather(&[77, 4]).unwrap(), expected);
    assert!(back.check_covers(&[1, 2]).is_err());

    let bytes = k.to_bytes();
    assert!(matches!(KnowledgeStore::from_bytes(&bytes[..bytes.len() - 2]), Err(Error::Integrity(_))));
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(KnowledgeStore::from_bytes(&extra), Err(Error::Integrity(_))));
}

#[test]
fn csv_round_trips_and_reports_rows() {
    let ds = Dataset::new(
        vec![0, 1, 2],
        vec![1, 0, 2],
        vec![0.1, -2.5, 3.0e-7, 1.0, 1.0 / 3.0, 65504.0],
        vec![2],
        3,
        Split::Train,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_csv(&ds, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("1,0.1,-2.5\n"), "{text}");
    let schema = CsvSchema {
        classes: Some(3),
        ..Default::default()
    };
    let back = load_csv(&path, &schema, Split::Train).unwrap();
    assert_eq!(back.labels(), ds.labels());
    for i in 0..3 {
        assert_eq!(back.features(i), ds.features(i));
    }
    assert_eq!(back.content_hash(), ds.content_hash());

    std::fs::write(&path, "label,a,b\n0,1,2\n1,3\n").unwrap();
    let schema = CsvSchema {
        has_header: true,
        ..Default::default()
    };
    match load_csv(&path, &schema, Split::Train) {
        Err(Error::Data { row: Some(3), .. }) => {}
        other => panic!("{other:?}"),
    }
    std::fs::write(&path, "0,1\n1,x\n").unwrap();
    match load_csv(&path, &CsvSchema::default(), Split::Train) {
        Err(Error::Data { row: Some(2), .. }) => {}
        other => panic!("{other:?}"),
    }
    std::fs::write(&path, "0,1\n5,2\n").unwrap();
    let schema = CsvSchema {
        classes: Some(3),
        ..Default::default()
    };
    assert!(matches!(load_csv(&path, &schema, Split::Train), Err(Error::Data { row: Some(2), .. })));
}
