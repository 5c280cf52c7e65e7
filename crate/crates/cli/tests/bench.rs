use voxline::bench::{bench_rows, cmd_bench, write_csv, HEADER};
use voxline::config::Config;

fn small() -> Config {
    let mut c = Config::default();
    c.apply_text(
        "input = gen:random_streamlines,count=30,verts=20\nres = 32\nwidth = 32\nheight = 32\n\
         bench_res = 16,32\nbench_decimate = 1,2,4\nbench_alpha = 1,0.5,0.2,0.1",
        "test",
    )
    .unwrap();
    c
}

fn read(path: &std::path::Path) -> (Vec<String>, Vec<csv::StringRecord>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    (header, r.records().map(Result::unwrap).collect())
}

#[test]
fn empty_matrix_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small();
    c.experiments.clear();
    c.out = dir.path().join("empty");
    let path = cmd_bench(c).unwrap();
    assert_eq!(path, dir.path().join("empty.csv"));
    let (header, rows) = read(&path);
    assert_eq!(header, HEADER);
    assert!(rows.is_empty());
}

#[test]
fn counter_invariants_hold_on_every_row() {
    let dir = tempfile::tempdir().unwrap();
    let c = Config {
        out: dir.path().join("b"),
        ..small()
    };
    let path = cmd_bench(c).unwrap();
    let (header, rows) = read(&path);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let num = |r: &csv::StringRecord, name: &str| r[col(name)].parse::<f64>().ok();
    // 3 methods × 2 resolutions + 3 methods × 3 factors + 3 strategies × 2 resolutions + 4 opacities
    assert_eq!(rows.len(), 6 + 9 + 6 + 4);
    for r in &rows {
        assert_eq!(r.len(), HEADER.len());
        if let (Some(d), Some(c), Some(a)) = (num(r, "visited_dda"), num(r, "visited_capsule"), num(r, "visited_aabb")) {
            assert!(d <= c && c <= a, "{r:?}");
        }
        if &r[col("strategy")] == "vsv" {
            assert_eq!(num(r, "touches").unwrap(), 2.0 * num(r, "incidences").unwrap());
        }
    }
    let lengths: Vec<f64> = rows
        .iter()
        .filter(|r| &r[0] == "length" && &r[col("method")] == "capsule")
        .map(|r| num(r, "mean_segment_voxels").unwrap())
        .collect();
    assert!(lengths.windows(2).all(|w| w[0] < w[1]), "{lengths:?}");
    let opacity: Vec<f64> = rows
        .iter()
        .filter(|r| &r[0] == "opacity")
        .map(|r| num(r, "capsule_tests").unwrap())
        .collect();
    assert!(opacity.windows(2).all(|w| w[0] <= w[1]), "{opacity:?}");
}

#[test]
fn rows_are_deterministic_apart_from_times() {
    let mut c = small();
    c.experiments = vec!["strategy".parse().unwrap()];
    let strip = |mut rows: Vec<voxline::bench::BenchRow>| {
        for r in &mut rows {
            r.voxelize_ms = 0.0;
            r.cull_ms = None;
            r.abuffer_ms = None;
            r.shade_ms = None;
            r.render_ms = None;
        }
        rows
    };
    let a = strip(bench_rows(&c).unwrap());
    c.workers = 3;
    assert_eq!(a, strip(bench_rows(&c).unwrap()));
    let mut buf = Vec::new();
    write_csv(&a, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + a.len());
}

#[test]
fn invalid_matrix_is_rejected_up_front() {
    let mut c = small();
    c.bench_res = vec![24];
    assert!(matches!(bench_rows(&c), Err(voxline::Error::Config(_))));
}
