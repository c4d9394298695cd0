use lftcore::{assemble_lft, AssembleOptions, normalize_params};
use initset::EllipsoidPair;

fn main() {
    let (model, _) = liftlearn::load_model(std::path::Path::new("/tmp/exp1/model-0a75ceb4r.lm")).unwrap();
    let norm = normalize_params(&model);
    let plant = assemble_lft(&norm, &[1.0;5], &AssembleOptions { include_measurement_noise: false, w: None, disturbance_bound: 10.0 }).unwrap();
    let pair = EllipsoidPair { p: model.p_matrix.clone(), q: model.q_matrix.clone() };
    let opts = synth::SynthOptions { tol: 1e-7, h_bar: 0 };
    match synth::synthesize_nslpv(&plant, &pair, &opts) {
        Ok(cert) => eprintln!("OK gamma {}", cert.gamma),
        Err(e) => eprintln!("err: {e}"),
    }
}
