use cxr::plot::{confusion_csv, confusion_svg, emit_confusion_plot, emit_scatter_plot, escape_xml, scatter_csv, scatter_svg};
use cxr::timing::timed;
use cxr_core::linalg::Matrix;
use cxr_core::metrics::ConfusionMatrix;

const CM: ConfusionMatrix = ConfusionMatrix { tp: 389, fp: 74, fn_: 1, tn: 160 };

#[test]
fn confusion_svg_is_well_formed_with_counts_as_text() {
    let svg = confusion_svg(&CM, "Cross-ViT <desk> & co");
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    let texts: Vec<&str> = doc.descendants().filter(|n| n.has_tag_name("text")).filter_map(|n| n.text()).collect();
    for count in ["389", "74", "1", "160"] {
        assert!(texts.contains(&count), "{count} missing from {texts:?}");
    }
    assert!(texts.contains(&"Cross-ViT <desk> & co"));
    assert_eq!(doc.descendants().filter(|n| n.has_tag_name("rect")).count(), 5);
}

#[test]
fn confusion_csv_equals_matrix() {
    let csv = confusion_csv(&CM);
    assert_eq!(csv, "actual,predicted_normal,predicted_pneumonia\nnormal,160,74\npneumonia,1,389\n");
    let mut rd = csv::Reader::from_reader(csv.as_bytes());
    let rows: Vec<Vec<String>> = rd.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    assert_eq!(rows[0][1].parse::<u64>().unwrap(), CM.tn);
    assert_eq!(rows[1][2].parse::<u64>().unwrap(), CM.tp);
}

#[test]
fn plots_are_written_and_unwritable_paths_fail() {
    let dir = tempfile::tempdir().unwrap();
    emit_confusion_plot(&CM, "m", dir.path(), "cm").unwrap();
    assert!(dir.path().join("cm.svg").exists());
    assert_eq!(std::fs::read_to_string(dir.path().join("cm.csv")).unwrap(), confusion_csv(&CM));
    let e = emit_confusion_plot(&CM, "m", &dir.path().join("missing/dir"), "cm").unwrap_err();
    assert!(matches!(e, cxr::Error::Io { .. }));
}

#[test]
fn scatter_colors_by_label() {
    let pts = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 2.0], vec![-1.0, 0.5], vec![3.0, 3.0]]).unwrap();
    let labels = [0, 1, 1, 0];
    let svg = scatter_svg(&pts, &labels, "t-SNE").unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let fills: Vec<&str> =
        doc.descendants().filter(|n| n.has_tag_name("circle") && n.attribute("r") == Some("3")).map(|n| n.attribute("fill").unwrap()).collect();
    assert_eq!(fills.len(), 4);
    assert_eq!(fills[0], fills[3]);
    assert_eq!(fills[1], fills[2]);
    assert_ne!(fills[0], fills[1]);
    assert_eq!(scatter_csv(&pts, &labels), "x,y,label\n0,0,0\n1,2,1\n-1,0.5,1\n3,3,0\n");
    assert!(scatter_svg(&pts, &labels[..3], "x").is_err());
    let dir = tempfile::tempdir().unwrap();
    emit_scatter_plot(&pts, &labels, "t", dir.path(), "tsne").unwrap();
    assert!(dir.path().join("tsne.csv").exists());
}

#[test]
fn degenerate_scatter_still_renders() {
    let pts = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
    let svg = scatter_svg(&pts, &[0, 1], "same").unwrap();
    roxmltree::Document::parse(&svg).unwrap();
    assert!(!svg.contains("NaN"));
}

#[test]
fn xml_escaping() {
    assert_eq!(escape_xml("a<b>&\"'"), "a&lt;b&gt;&amp;&quot;&apos;");
}

#[test]
fn timing_clock() {
    let ((), t) = timed(|| ());
    assert!(t >= 0.0);
    let ((), slept) = timed(|| std::thread::sleep(std::time::Duration::from_millis(100)));
    assert!((0.1..0.2).contains(&slept), "{slept}");
    let ((a, b), total) = timed(|| (timed(|| std::thread::sleep(std::time::Duration::from_millis(5))).1, timed(|| ()).1));
    assert!(total >= a && total >= b);
}
