#![no_main]
use libfuzzer_sys::fuzz_target;
use tdswanson::model::CoefficientScenario;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let Ok(sc) = CoefficientScenario::from_json_str(s) else { return };
    let (t0, t1) = sc.domain();
    for t in [t0, 0.5 * (t0 + t1), t1] {
        let _ = sc.eval_coefficients(t);
        let _ = sc.derivatives(t);
    }
    let _ = sc.pt_candidate();
});
