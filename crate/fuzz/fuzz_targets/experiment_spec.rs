#![no_main]

use libfuzzer_sys::fuzz_target;
use qcat_cli::spec::ExperimentSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = ExperimentSpec::from_toml(text) else { return };
    let _ = spec.check_structure();
    for run in &spec.runs {
        let _ = run.schedule();
    }
});
