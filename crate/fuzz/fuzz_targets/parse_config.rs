#![no_main]

use libfuzzer_sys::fuzz_target;
use mad_cli::CliConfigFile;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = toml::from_str::<CliConfigFile>(s) {
        _ = config.experiment.validate();
        _ = config.parsed_methods();
    }
});
