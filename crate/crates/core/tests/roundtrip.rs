use dataplace_core::{
    gen_random, potential, reduce_to_unit_cache, Allocation, Error, GenParams, Instance,
};

#[test]
fn instance_survives_a_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inst.json");
    let params = GenParams {
        n: 5,
        k: 3,
        cache_range: (1, 2),
        ..GenParams::default()
    };
    let inst = gen_random(11, &params).unwrap();
    inst.save(&path).unwrap();
    let back = Instance::load(&path).unwrap();
    assert_eq!(back, inst);
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = Instance::load(dir.path().join("absent.json")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
}

#[test]
fn malformed_file_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\"n\": 2").unwrap();
    assert!(matches!(
        Instance::load(&path).unwrap_err(),
        Error::Parse { .. }
    ));
}

#[test]
fn asymmetric_costs_are_rejected_on_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("asym.json");
    let text = r#"{"n":2,"k":1,"cache_sizes":[1,1],
        "access_costs":[[0,1],[2,0]],"demands":[[1],[1]],"placement_fees":[[0],[0]]}"#;
    std::fs::write(&path, text).unwrap();
    assert!(matches!(
        Instance::load(&path).unwrap_err(),
        Error::Invalid(_)
    ));
}

#[test]
fn reduced_instance_roundtrips_and_keeps_costs() {
    let params = GenParams {
        n: 3,
        k: 2,
        cache_range: (2, 2),
        ..GenParams::default()
    };
    let inst = gen_random(4, &params).unwrap();
    let unit = reduce_to_unit_cache(&inst).unwrap();
    let text = unit.instance().to_json_string();
    let back = Instance::from_json_str(&text).unwrap();
    let x = Allocation::new(vec![0, 1, 1, 0, 0, 1], 2).unwrap();
    assert_eq!(potential(&back, &x), potential(unit.instance(), &x));
}
