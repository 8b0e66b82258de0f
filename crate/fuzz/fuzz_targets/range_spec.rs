#![no_main]
use libfuzzer_sys::fuzz_target;
use tdswanson_cli::config::SweepParam;
use tdswanson_cli::range::RangeSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let _ = s.parse::<SweepParam>();
    let Ok(r) = s.parse::<RangeSpec>() else { return };
    let v = r.values();
    assert_eq!(v.len(), r.points);
    assert_eq!(v[0], r.start);
    assert_eq!(*v.last().unwrap(), if r.points == 1 { r.start } else { r.end });
    assert_eq!(r.to_string().parse::<RangeSpec>().unwrap(), r);
});
