use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

/// Writes `n` 8x8 images split between two colors and a manifest next to
/// them. `labels[i % labels.len()]` labels image `i`.
fn dataset(root: &Path, id: &str, colors: [[u8; 3]; 2], labels: &[&[&str]], n: usize) -> PathBuf {
    let dir = root.join(id);
    std::fs::create_dir_all(&dir).unwrap();
    let mut images = Vec::new();
    for i in 0..n {
        let img = image::RgbImage::from_fn(8, 8, |x, y| {
            let c = colors[(x + y + i as u32).is_multiple_of(3) as usize];
            image::Rgb([c[0], c[1], c[2].saturating_add((x % 2) as u8)])
        });
        let file = format!("{i}.png");
        img.save(dir.join(&file)).unwrap();
        images.push(json!({
            "id": format!("{id}-{i}"),
            "path": file,
            "width": 8,
            "height": 8,
            "labels": labels[i % labels.len()],
        }));
    }
    let path = dir.join("manifest.json");
    let doc = json!({ "dataset_id": id, "images": images });
    std::fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    path
}

fn srcsel(cache: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srcsel"))
        .args(args)
        .env("SRCSEL_CACHE_DIR", cache)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

struct Fixture {
    root: tempfile::TempDir,
    target: PathBuf,
    near: PathBuf,
    far: PathBuf,
    disjoint: PathBuf,
}

const BASE: [[u8; 3]; 2] = [[30, 60, 100], [200, 170, 60]];
const SHIFTED: [[u8; 3]; 2] = [[150, 180, 220], [200, 170, 60]];

fn fixture() -> Fixture {
    let root = tempfile::tempdir().unwrap();
    let defects: &[&[&str]] = &[&["crack"], &["scratch"], &["scratch"]];
    Fixture {
        target: dataset(root.path(), "target", BASE, &[&["crack"], &["scratch"], &["scratch"], &["scratch"]], 8),
        near: dataset(root.path(), "near", BASE, defects, 9),
        far: dataset(root.path(), "far", SHIFTED, defects, 6),
        disjoint: dataset(root.path(), "disjoint", BASE, &[&["stain"], &["chip"], &["chip"]], 6),
        root,
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn score_prints_row_and_choice() {
    let f = fixture();
    let cache = f.root.path().join("cache");
    let out_dir = f.root.path().join("scores");
    let o = srcsel(
        &cache,
        &["score", p(&f.target), p(&f.near), p(&f.far), p(&f.disjoint), "--k", "3", "--out-dir", p(&out_dir)],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("target,near,far,disjoint"));
    assert!(lines.next().unwrap().starts_with("target,"));
    assert!(text.contains("# degenerate for target: disjoint"), "{text}");
    assert!(text.contains("selected "), "{text}");

    let report: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("scores.json")).unwrap()).unwrap();
    let row = &report["rows"][0];
    let score = |id: &str| row.as_array().unwrap().iter().find(|s| s["source_id"] == id).unwrap()["score"].as_f64().unwrap();
    assert!(score("near") < score("far"));
    assert_eq!(report["k"], 3);
    assert!(out_dir.join("scores.csv").exists());

    let again = srcsel(
        &cache,
        &["score", p(&f.target), p(&f.near), p(&f.far), p(&f.disjoint), "--k", "3", "--format", "json"],
    );
    assert_eq!(stdout(&again), std::fs::read_to_string(out_dir.join("scores.json")).unwrap());
}

#[test]
fn all_pairs_has_zero_diagonal() {
    let f = fixture();
    let o = srcsel(
        &f.root.path().join("cache"),
        &["score", p(&f.target), p(&f.near), p(&f.far), "--k", "2", "--all-pairs"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let rows: Vec<Vec<&str>> = text.lines().take(4).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], ["target", "target", "near", "far"]);
    for (i, row) in rows.iter().enumerate().skip(1) {
        assert_eq!(row.len(), 4);
        assert_eq!(row[i], "0.0000");
    }
}

#[test]
fn no_overlap_exits_with_no_valid_source() {
    let f = fixture();
    let o = srcsel(&f.root.path().join("cache"), &["score", p(&f.target), p(&f.disjoint), "--k", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no valid source for `target`"));
}

#[test]
fn signatures_are_cached_until_an_image_changes() {
    let f = fixture();
    let cache = f.root.path().join("cache");
    let args = ["signature", p(&f.target), p(&f.near), "--k", "2"];
    let first = stdout(&srcsel(&cache, &args));
    assert!(first.contains("K = 2") && !first.contains("cached"), "{first}");
    let second = stdout(&srcsel(&cache, &args));
    assert_eq!(second.matches("cached").count(), 2, "{second}");

    let entry: Value = serde_json::from_str(&std::fs::read_to_string(cache.join("near-k2-s0.json")).unwrap()).unwrap();
    assert_eq!(entry["K"], 2);

    image::RgbImage::from_pixel(8, 8, image::Rgb([1, 2, 3]))
        .save(f.near.parent().unwrap().join("0.png"))
        .unwrap();
    let third = stdout(&srcsel(&cache, &args));
    assert!(third.contains("target\t") && third.lines().any(|l| l.starts_with("near") && l.ends_with("computed")), "{third}");
}

#[test]
fn k_is_chosen_on_the_target_when_not_forced() {
    let f = fixture();
    let o = srcsel(&f.root.path().join("cache"), &["signature", p(&f.target), "--k-max", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let k: usize = stdout(&o).lines().next().unwrap().trim_start_matches("K = ").parse().unwrap();
    assert!((1..=4).contains(&k));
}

#[test]
fn subset_writes_manifest_and_report() {
    let f = fixture();
    let mixed: &[&[&str]] = &[&["crack"], &["crack", "dent"], &["dent"], &[]];
    let src = dataset(f.root.path(), "mixed", BASE, mixed, 8);
    let out = f.root.path().join("out").join("subset.json");
    let o = srcsel(
        &f.root.path().join("cache"),
        &["subset", p(&src), "--target", p(&f.target), "--policy", "relaxed", "--out", p(&out)],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.with_extension("report.json")).unwrap()).unwrap();
    assert_eq!(report, json!({"removed_images": 2, "pruned_annotations": 2, "policy": "relaxed"}));

    let m: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let images = m["images"].as_array().unwrap();
    assert_eq!(images.len(), 6);
    for img in images {
        assert!(Path::new(img["path"].as_str().unwrap()).exists());
        assert!(img["labels"].as_array().unwrap().iter().all(|l| l == "crack"));
    }
}

#[test]
fn augment_is_reproducible() {
    let f = fixture();
    let skewed: &[&[&str]] = &[&["rare"], &["common"], &["common"], &["common"], &["common"], &["common"]];
    let src = dataset(f.root.path(), "skewed", BASE, skewed, 12);
    let config = f.root.path().join("band.json");
    std::fs::write(&config, r#"{"min_count": 4, "max_count": 8, "seed": 3}"#).unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let dir = f.root.path().join(format!("aug{run}"));
        let o = srcsel(&f.root.path().join("cache"), &["augment", p(&src), "--out-dir", p(&dir), "--config", p(&config)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).starts_with("band [4, 8]: 2 augmented, 2 removed"), "{}", stdout(&o));
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.join("images"))
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        files.push(("manifest.json".into(), std::fs::read(dir.join("manifest.json")).unwrap()));
        files.push(("plan.json".into(), std::fs::read(dir.join("plan.json")).unwrap()));
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn bad_manifest_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    std::fs::write(&path, r#"{"dataset_id": "x", "images": [{"id": "a", "path": "a.png", "width": 0, "height": 1, "labels": []}]}"#).unwrap();
    let o = srcsel(&dir.path().join("cache"), &["signature", p(&path)]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("images[0].width"));
}
