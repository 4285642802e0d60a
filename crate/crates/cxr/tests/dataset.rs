mod common;

use std::fs;

use common::{blob_tree, write_gray_png};
use cxr::dataset::{load_grayscale, load_images, load_manifest, read_manifest, save_manifest, scan_dataset, write_manifest};
use cxr::pipeline::{assemble, batches, ImageSet, Preprocess, SampleSource};
use cxr::Error;
use cxr_core::data::{stratified_resplit, AugmentConfig, Label, Split};

#[test]
fn empty_tree_has_no_records() {
    let dir = tempfile::tempdir().unwrap();
    blob_tree(dir.path(), [[0, 0]; 3], 8);
    let m = scan_dataset(dir.path()).unwrap();
    assert!(m.is_empty());
}

#[test]
fn counts_per_split_and_class() {
    let dir = tempfile::tempdir().unwrap();
    blob_tree(dir.path(), [[3, 2], [1, 1], [0, 2]], 8);
    let m = scan_dataset(dir.path()).unwrap();
    assert_eq!(m.class_counts(Split::Train), [3, 2]);
    assert_eq!(m.class_counts(Split::Test), [1, 1]);
    assert_eq!(m.class_counts(Split::Val), [0, 2]);
    assert_eq!(m.records()[0].path, "train/NORMAL/img_000.png");
    assert_eq!(m.records()[0].label, Label::Normal);
}

#[test]
fn folder_names_match_ignoring_case_and_non_images_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    blob_tree(dir.path(), [[0, 0]; 3], 8);
    write_gray_png(&dir.path().join("train/NORMAL/a.PNG"), 8, |_, _| 9);
    fs::write(dir.path().join("train/NORMAL/notes.txt"), "x").unwrap();
    fs::write(dir.path().join("train/NORMAL/fake.png"), "not a png").unwrap();
    fs::write(dir.path().join("train/NORMAL/.DS_Store"), "").unwrap();
    let renamed = dir.path().join("Test");
    fs::rename(dir.path().join("test"), &renamed).unwrap();
    let m = scan_dataset(dir.path()).unwrap();
    assert_eq!(m.len(), 1);
    assert_eq!(m.records()[0].path, "train/NORMAL/a.PNG");
}

#[test]
fn missing_folders_name_what_was_found() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir_all(dir.path().join("train/NORMAL")).unwrap();
    fs::create_dir_all(dir.path().join("stuff")).unwrap();
    let e = scan_dataset(dir.path()).unwrap_err();
    assert!(matches!(e, Error::Layout(_)), "{e}");
    let msg = e.to_string();
    assert!(msg.contains("train") && msg.contains("stuff"), "{msg}");
    assert_eq!(e.exit_code(), 2);

    fs::create_dir_all(dir.path().join("test")).unwrap();
    fs::create_dir_all(dir.path().join("val")).unwrap();
    let msg = scan_dataset(dir.path()).unwrap_err().to_string();
    assert!(msg.contains("PNEUMONIA") && msg.contains("train/NORMAL"), "{msg}");

    assert!(matches!(scan_dataset(&dir.path().join("nope")), Err(Error::Layout(_))));
}

#[test]
fn manifest_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    blob_tree(dir.path(), [[2, 1], [1, 0], [0, 1]], 8);
    let m = scan_dataset(dir.path()).unwrap();
    let mut buf = Vec::new();
    write_manifest(&m, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("path,label,split\ntrain/NORMAL/img_000.png,0,train\n"), "{text}");
    let back = read_manifest(&buf[..]).unwrap();
    assert_eq!(back, m);
    let path = dir.path().join("m.csv");
    save_manifest(&m, &path).unwrap();
    assert_eq!(fs::read(&path).unwrap(), buf);
    assert_eq!(load_manifest(&path).unwrap(), m);
}

#[test]
fn empty_manifest_keeps_header() {
    let m = cxr_core::data::Manifest::new(vec![]).unwrap();
    let mut buf = Vec::new();
    write_manifest(&m, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf.clone()).unwrap(), "path,label,split\n");
    assert!(read_manifest(&buf[..]).unwrap().is_empty());
}

#[test]
fn malformed_manifests_rejected() {
    assert!(matches!(read_manifest(&b"file,label,split\n"[..]), Err(Error::Schema(_))));
    assert!(read_manifest(&b"path,label,split\na.png,2,train\n"[..]).is_err());
    assert!(read_manifest(&b"path,label,split\na.png,0,holdout\n"[..]).is_err());
    assert!(read_manifest(&b"path,label,split\na.png,0,train\na.png,1,test\n"[..]).is_err());
}

#[test]
fn equal_rgb_channels_decode_to_their_value() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rgb.png");
    image::RgbImage::from_fn(4, 4, |x, y| {
        let v = (x * 60 + y) as u8;
        image::Rgb([v, v, v])
    })
    .save(&path)
    .unwrap();
    let g = load_grayscale(&path, 4).unwrap();
    for y in 0..4 {
        for x in 0..4 {
            assert_eq!(g.get(y, x), (x * 60 + y) as f32 / 255.0);
        }
    }
}

#[test]
fn output_is_square_for_any_input() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wide.jpg");
    image::RgbImage::from_fn(37, 11, |x, _| image::Rgb([x as u8 * 6, 10, 200])).save(&path).unwrap();
    let g = load_grayscale(&path, 16).unwrap();
    assert_eq!((g.height(), g.width()), (16, 16));
    assert!(g.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
}

#[test]
fn undecodable_file_names_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.png");
    fs::write(&path, b"\x89PNG\r\n\x1a\n garbage").unwrap();
    let e = load_grayscale(&path, 8).unwrap_err();
    assert!(matches!(e, Error::Decode { .. }));
    assert!(e.to_string().contains("broken.png"));
    assert_eq!(e.exit_code(), 3);
}

#[test]
fn parallel_decoding_preserves_order() {
    let dir = tempfile::tempdir().unwrap();
    blob_tree(dir.path(), [[3, 4], [0, 0], [0, 0]], 12);
    let m = scan_dataset(dir.path()).unwrap();
    let paths: Vec<&str> = m.records().iter().map(|r| r.path.as_str()).collect();
    let one = load_images(dir.path(), &paths, 12, 1).unwrap();
    let three = load_images(dir.path(), &paths, 12, 3).unwrap();
    assert_eq!(one, three);
    assert_eq!(one[0], load_grayscale(&dir.path().join(paths[0]), 12).unwrap());
}

fn image_set(n: usize, augment: bool) -> ImageSet {
    let images = (0..n)
        .map(|i| cxr_core::data::GrayImage::from_fn(16, 16, |y, x| ((x + y + i) % 7) as f32 / 7.0))
        .collect();
    let prep = Preprocess {
        side: 8,
        mean: 0.48,
        std: 0.22,
        channels: 3,
        augment: augment.then(AugmentConfig::default),
        seed: 4,
    };
    ImageSet { images, labels: (0..n).map(|i| i % 2).collect(), prep }
}

#[test]
fn batches_cover_the_split_once() {
    let set = image_set(10, true);
    let mut seen = Vec::new();
    let mut sizes = Vec::new();
    for b in batches(&set, 4, Some(7), 0, true) {
        let (x, labels) = b.unwrap();
        assert_eq!(&x.shape()[1..], &[3, 8, 8]);
        sizes.push(x.shape()[0]);
        seen.extend(labels);
    }
    assert_eq!(sizes, vec![4, 4, 2]);
    assert_eq!(seen.iter().filter(|&&l| l == 1).count(), 5);
    assert_eq!(batches(&image_set(0, false), 4, Some(1), 0, false).count(), 0);
}

#[test]
fn batches_are_deterministic() {
    let set = image_set(9, true);
    let a: Vec<_> = batches(&set, 4, Some(3), 2, true).map(Result::unwrap).collect();
    let b: Vec<_> = batches(&set, 4, Some(3), 2, true).map(Result::unwrap).collect();
    assert_eq!(a, b);
}

#[test]
fn augmentation_only_when_requested() {
    let set = image_set(4, true);
    let plain = assemble(&set, &[0, 1, 2, 3], 0, false).unwrap();
    let again = assemble(&set, &[0, 1, 2, 3], 5, false).unwrap();
    assert_eq!(plain, again);
    let aug: Vec<_> = (0..6).map(|e| assemble(&set, &[0, 1, 2, 3], e, true).unwrap()).collect();
    assert!(aug.iter().any(|a| a != &plain));
    let no_cfg = image_set(4, false);
    assert_eq!(assemble(&no_cfg, &[0, 1, 2, 3], 3, true).unwrap(), plain);
    assert_eq!(set.labels(), vec![0, 1, 0, 1]);
}

#[test]
fn resplit_of_a_scanned_tree_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    blob_tree(dir.path(), [[6, 18], [2, 6], [0, 0]], 4);
    let m = scan_dataset(dir.path()).unwrap();
    let a = stratified_resplit(&m, 8, 1).unwrap();
    assert_eq!(a, stratified_resplit(&m, 8, 1).unwrap());
    assert_eq!(a.class_counts(Split::Test), [2, 6]);
    assert_eq!(a.class_counts(Split::Train), [6, 18]);
}
