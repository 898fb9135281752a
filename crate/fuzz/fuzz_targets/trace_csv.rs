#![no_main]

use libfuzzer_sys::fuzz_target;
use qcat::recursions::{read_trace_csv, write_trace_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = read_trace_csv(data) else { return };
    let mut out = Vec::new();
    write_trace_csv(&mut out, &rows).expect("parsed trace serialises");
    let again = read_trace_csv(out.as_slice()).expect("serialised trace reparses");
    assert_eq!(again.len(), rows.len());
});
