#![no_main]

use libfuzzer_sys::fuzz_target;
use qcat::categorical::{read_family_csv, write_family_csv};

fuzz_target!(|data: &[u8]| {
    let Ok((family, grid)) = read_family_csv(data) else { return };
    let mut out = Vec::new();
    write_family_csv(&mut out, &family, &grid).expect("parsed family serialises");
    let (again, grid2) = read_family_csv(out.as_slice()).expect("serialised family reparses");
    assert_eq!(again.num_states(), family.num_states());
    assert_eq!(grid2.num_atoms(), grid.num_atoms());
});
