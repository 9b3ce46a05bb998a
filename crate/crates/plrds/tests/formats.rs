use plrds::formats::{read_field_binary, read_field_csv, write_field_binary, write_field_csv, Table};
use plrds_core::{Field, Grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(grid: Grid, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vals = (0..grid.len())
        .map(|i| {
            if grid.is_boundary(i) {
                0.0
            } else {
                rng.random_range(-1e3..1e3) / 7.0
            }
        })
        .collect();
    Field::from_values(grid, vals).unwrap()
}

fn bits(f: &Field) -> Vec<u64> {
    f.values().iter().map(|v| v.to_bits()).collect()
}

#[test]
fn csv_and_binary_round_trip_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    for (k, grid) in [Grid::new(1, 8.0, 257).unwrap(), Grid::new(2, 3.0, 17).unwrap()]
        .into_iter()
        .enumerate()
    {
        let u = random_field(grid, k as u64);
        let csv = dir.path().join(format!("u{k}.csv"));
        let bin = dir.path().join(format!("u{k}.bin"));
        write_field_csv(&csv, &u).unwrap();
        write_field_binary(&bin, &u).unwrap();
        let a = read_field_csv(&csv).unwrap();
        let b = read_field_binary(&bin).unwrap();
        assert_eq!(a.grid(), u.grid());
        assert_eq!(b.grid(), u.grid());
        assert_eq!(bits(&a), bits(&u));
        assert_eq!(bits(&b), bits(&u));
        assert_eq!(std::fs::metadata(&bin).unwrap().len(), 16 + 8 * grid.len() as u64);
    }
}

#[test]
fn truncated_binary_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("u.bin");
    write_field_binary(&p, &random_field(Grid::new(1, 1.0, 9).unwrap(), 3)).unwrap();
    let bytes = std::fs::read(&p).unwrap();
    std::fs::write(&p, &bytes[..bytes.len() - 8]).unwrap();
    assert!(read_field_binary(&p)
        .unwrap_err()
        .to_string()
        .contains("expected 9 values"));
}

#[test]
fn nonuniform_csv_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("u.csv");
    std::fs::write(&p, "x,value\n-1,0\n0.2,1\n1,0\n").unwrap();
    assert!(read_field_csv(&p).is_err());
}

#[test]
fn table_csv_has_header_and_full_precision() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.csv");
    let mut t = Table::new("t", &["seed", "value", "ok"]);
    t.push(vec![7u64.into(), 0.1.into(), true.into()]);
    t.write_csv(&p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(text, "seed,value,ok\n7,1.0000000000000001e-1,true\n");
}
