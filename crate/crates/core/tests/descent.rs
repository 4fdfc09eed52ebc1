//! Every architecture paired with every loss must reduce the loss on a
//! fixed batch under Adam at the smaller published learning rate.

use slidens_core::losses::{get_loss, LossConfig, LossName};
use slidens_core::sampler::{BatchStream, SampleSource};
use slidens_core::scene::{fit_norm_stats, synth_case_study, BandSetting, SynthSpec};
use slidens_core::zoo::{build_model, ArchName, ArchSpec};
use slidens_tensor::{Adam, Graph, Tensor};

#[test]
fn all_pairs_descend_on_a_fixed_batch() {
    let spec = SynthSpec { height: 64, width: 64, blob_count: (2, 3), blob_radius: (3.0, 6.0), ..SynthSpec::default() };
    let scene = synth_case_study(21, &spec).unwrap();
    let stats = fit_norm_stats(&[&scene]).unwrap();
    let setting = BandSetting::S1S2;
    let sources = vec![SampleSource::<f32>::new(&scene, setting, Some(&stats))];
    let batch = BatchStream::new(&sources, 2, 16, 3).unwrap().next_batch();
    let mut failures = Vec::new();
    for arch in ArchName::ALL {
        for loss_name in LossName::ALL {
            let loss = get_loss(LossConfig::new(loss_name)).unwrap();
            let mut model = build_model::<f32>(ArchSpec::for_setting(arch, setting).with_size(4, 3), 5).unwrap();
            let mut adam = Adam::new(model.params(), 1e-3);
            let mut values = Vec::new();
            for _ in 0..25 {
                let mut g = Graph::new();
                let p = g.params(model.params());
                let x = g.input(batch.stacks.clone());
                let out = model.forward_on(&mut g, &p, x);
                let eval = loss.eval(g.value(out).data(), &batch.labels, &batch.valids).unwrap();
                values.push(eval.value);
                let grads = g.backward(out, Tensor::from_vec(g.shape(out), eval.grad));
                adam.step(model.params_mut(), &grads);
            }
            let (first, last) = (values[0], *values.last().unwrap());
            if !(last.is_finite() && last < first) {
                failures.push(format!("{arch}/{loss_name}: {first} -> {last}"));
            }
        }
    }
    assert!(failures.is_empty(), "no descent for {failures:?}");
}
