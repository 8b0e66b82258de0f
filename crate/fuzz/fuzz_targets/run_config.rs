#![no_main]
use std::path::Path;

use libfuzzer_sys::fuzz_target;
use tdswanson_cli::config::LoadedConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let Ok(loaded) = LoadedConfig::from_json_str(s, Path::new("/nonexistent")) else { return };
    let swept = loaded.config.sweep.map(|w| w.param);
    if loaded.config.validate(swept).is_ok() && loaded.config.grid.map_or(true, |g| g.points <= 4096) {
        let _ = loaded.check_scenario();
    }
});
