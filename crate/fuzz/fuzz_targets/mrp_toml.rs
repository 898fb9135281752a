#![no_main]

use libfuzzer_sys::fuzz_target;
use qcat::mrp::MrpFile;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(file) = MrpFile::from_toml(text) else { return };
    let Ok(mrp) = file.to_mrp() else { return };
    if mrp.num_states() > 64 || !mrp.validate().is_empty() {
        return;
    }
    // A valid chain always has a stationary law and a Poisson solution.
    let st = mrp.stationary_distribution(1e-10).expect("valid MRP has a stationary law");
    assert!(st.mu.iter().all(|x| x.is_finite() && *x >= 0.0));
    let _ = mrp.solve_poisson();
    let again = MrpFile::from_toml(&MrpFile::from_mrp(&mrp).to_toml()).expect("serialised MRP reparses");
    assert_eq!(again.to_mrp().expect("round trip stays valid").num_states(), mrp.num_states());
});
